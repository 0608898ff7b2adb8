use proptest::prelude::*;

use gridmaint::caseio::MaintenanceCost;
use gridmaint::chance::{cover_cut, cover_of, extend_cover, MasterVar};
use gridmaint::mastercuts::{maintenance_coefficients, same_cost_periods, same_status_periods};
use gridmaint::pboracle::MaintenanceSchedule;
use gridmaint::ucmodel::component_available;

fn case() -> impl Strategy<Value = (u32, u32, u32, (u32, u32))> {
    (1u32..=7).prop_flat_map(|days| {
        (
            Just(days),
            1..=days + 1,
            1..=days + 1,
            (1u32..=3).prop_flat_map(|p| (Just(p), p..=p + 2)),
        )
    })
}

proptest! {
    #[test]
    fn same_status_sets_share_availability((days, m, xi, dur) in case(), day_pick in 0u32..7) {
        let day = 1 + day_pick % days;
        let set = same_status_periods(m, xi, day, dur, days);
        prop_assert!(set.contains(&m));
        let target = component_available(m, xi, day, dur, days);
        for t in 1..=days + 1 {
            prop_assert_eq!(set.contains(&t), component_available(t, xi, day, dur, days) == target);
        }
    }

    #[test]
    fn same_cost_sets_share_status_every_day((days, m, xi, dur) in case()) {
        let set = same_cost_periods(m, xi, days + 1);
        prop_assert!(set.contains(&m));
        for day in 1..=days {
            let status = same_status_periods(m, xi, day, dur, days);
            for t in &set {
                prop_assert!(status.contains(t), "period {} outside status set on day {}", t, day);
            }
        }
    }

    #[test]
    fn same_cost_sets_share_maintenance_cost((days, m, xi, _dur) in case()) {
        let last = days + 1;
        let coef = maintenance_coefficients(MaintenanceCost { predictive: 3.0, corrective: 11.0 }, xi, last);
        for t in same_cost_periods(m, xi, last) {
            prop_assert_eq!(coef[t as usize - 1], coef[m as usize - 1]);
        }
    }

    #[test]
    fn extended_cover_cuts_exactly_the_postponed_schedules(
        (n, last, base, other) in (1usize..=4, 2u32..=5).prop_flat_map(|(n, last)| (
            Just(n),
            Just(last),
            prop::collection::vec(1..=last, n),
            prop::collection::vec(1..=last, n),
        ))
    ) {
        let v = MaintenanceSchedule::new(base.clone(), last).unwrap();
        let cut = cover_cut(&extend_cover(&cover_of(&v), last), n);
        let value = |x: MasterVar| match x {
            MasterVar::Assign { h, period } => f64::from(u8::from(other[h] == period)),
            _ => 0.0,
        };
        let postponed = other.iter().zip(&base).all(|(o, b)| o >= b);
        prop_assert_eq!(cut.violation(value) > 0.0, postponed);
    }
}

#[test]
fn maintenance_coefficients_by_case() {
    let c = MaintenanceCost {
        predictive: 10.0,
        corrective: 30.0,
    };
    assert_eq!(maintenance_coefficients(c, 3, 5), vec![10.0, 10.0, 30.0, 30.0, 30.0]);
    assert_eq!(maintenance_coefficients(c, 5, 5), vec![10.0, 10.0, 10.0, 10.0, 0.0]);
    assert_eq!(maintenance_coefficients(c, 1, 5), vec![30.0; 5]);
}
