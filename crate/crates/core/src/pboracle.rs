//! Exact reliability evaluation of a maintenance schedule.
//!
//! Each component contributes a Bernoulli "needs corrective maintenance"
//! indicator; the count per class is Poisson-Binomial and the schedule is
//! reliable when both class counts stay within their budgets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::caseio::{ComponentClass, ComponentId};

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("schedule row for component {0} must select exactly one period")]
    MalformedSchedule(usize),
    #[error("period {0} outside 1..={1}")]
    PeriodOutOfRange(u32, u32),
    #[error("schedule covers {0} components, expected {1}")]
    WrongLength(usize, usize),
}

/// PMF of the number of successes among independent Bernoulli trials.
pub fn pb_pmf(probs: &[f64]) -> Result<Vec<f64>, OracleError> {
    let mut pmf = Vec::with_capacity(probs.len() + 1);
    pmf.push(1.0);
    for &p in probs {
        if !(0.0..=1.0).contains(&p) {
            return Err(OracleError::BadProbability(p));
        }
        pmf.push(0.0);
        for k in (1..pmf.len()).rev() {
            pmf[k] = pmf[k] * (1.0 - p) + pmf[k - 1] * p;
        }
        pmf[0] *= 1.0 - p;
    }
    Ok(pmf)
}

/// `P(successes <= k)`.
pub fn pb_cdf(probs: &[f64], k: usize) -> Result<f64, OracleError> {
    let pmf = pb_pmf(probs)?;
    Ok(pmf.iter().take(k + 1).sum::<f64>().min(1.0))
}

/// Maintenance period per maintainable component, `1..=periods` where
/// `periods = days + 1` means "not maintained in the horizon".
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MaintenanceSchedule {
    pub periods: Vec<u32>,
}

impl MaintenanceSchedule {
    pub fn new(periods: Vec<u32>, last_period: u32) -> Result<Self, OracleError> {
        for &m in &periods {
            if m < 1 || m > last_period {
                return Err(OracleError::PeriodOutOfRange(m, last_period));
            }
        }
        Ok(Self { periods })
    }

    /// From a 0/1 matrix with one row per component.
    pub fn from_matrix(rows: &[Vec<f64>]) -> Result<Self, OracleError> {
        let mut periods = Vec::with_capacity(rows.len());
        for (h, row) in rows.iter().enumerate() {
            let ones: Vec<usize> = row
                .iter()
                .enumerate()
                .filter(|(_, v)| **v > 0.5)
                .map(|(t, _)| t)
                .collect();
            if ones.len() != 1 || row.iter().any(|v| *v != 0.0 && *v != 1.0) {
                return Err(OracleError::MalformedSchedule(h));
            }
            periods.push(ones[0] as u32 + 1);
        }
        Ok(Self { periods })
    }

    pub fn to_matrix(&self, last_period: u32) -> Vec<Vec<f64>> {
        self.periods
            .iter()
            .map(|&m| (1..=last_period).map(|t| f64::from(t == m)).collect())
            .collect()
    }

    /// Every schedule over `n` components and `last_period` periods, in
    /// lexicographic order.
    pub fn enumerate(n: usize, last_period: u32) -> Vec<Self> {
        let mut out = Vec::new();
        let mut cur = vec![1u32; n];
        loop {
            out.push(Self { periods: cur.clone() });
            let mut i = n;
            loop {
                if i == 0 {
                    return out;
                }
                i -= 1;
                if cur[i] < last_period {
                    cur[i] += 1;
                    break;
                }
                cur[i] = 1;
            }
        }
    }
}

/// `P(failure day <= m)` per component and period `m = 1..=days+1`, where
/// the last period reuses `P(failure day <= days)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessProbTable {
    pub components: Vec<ComponentId>,
    pub days: u32,
    probs: Vec<Vec<f64>>,
}

impl SuccessProbTable {
    /// `within[h][t-1] = P(failure day <= t)` for `t = 1..=days`.
    pub fn new(components: Vec<ComponentId>, days: u32, within: Vec<Vec<f64>>) -> Result<Self, OracleError> {
        let mut probs = Vec::with_capacity(within.len());
        for row in within {
            if row.len() != days as usize {
                return Err(OracleError::WrongLength(row.len(), days as usize));
            }
            let mut prev = 0.0;
            let mut full = Vec::with_capacity(days as usize + 1);
            for p in row {
                if !(0.0..=1.0).contains(&p) {
                    return Err(OracleError::BadProbability(p));
                }
                // Cumulative probabilities are clamped monotone against round-off.
                prev = f64::max(prev, p);
                full.push(prev);
            }
            full.push(prev);
            probs.push(full);
        }
        if probs.len() != components.len() {
            return Err(OracleError::WrongLength(probs.len(), components.len()));
        }
        Ok(Self {
            components,
            days,
            probs,
        })
    }

    pub fn last_period(&self) -> u32 {
        self.days + 1
    }

    /// Probability that component `h` (by table position) is in corrective
    /// maintenance when scheduled at `period`.
    pub fn q(&self, h: usize, period: u32) -> f64 {
        self.probs[h][period as usize - 1]
    }

    /// Probability for a component left unscheduled.
    pub fn q_unscheduled(&self, h: usize) -> f64 {
        self.q(h, self.last_period())
    }

    pub fn position(&self, c: ComponentId) -> Option<usize> {
        self.components.iter().position(|&x| x == c)
    }
}

/// Per-class success probabilities under a schedule for the maintainable
/// components; every other component in the table counts as unscheduled.
pub fn success_probs(
    schedule: &MaintenanceSchedule,
    maintainable: &[ComponentId],
    table: &SuccessProbTable,
) -> Result<(Vec<f64>, Vec<f64>), OracleError> {
    if schedule.periods.len() != maintainable.len() {
        return Err(OracleError::WrongLength(schedule.periods.len(), maintainable.len()));
    }
    let last = table.last_period();
    let mut gens = Vec::new();
    let mut lines = Vec::new();
    for (h, &c) in table.components.iter().enumerate() {
        let p = match maintainable.iter().position(|&x| x == c) {
            Some(j) => {
                let m = schedule.periods[j];
                if m < 1 || m > last {
                    return Err(OracleError::PeriodOutOfRange(m, last));
                }
                table.q(h, m)
            }
            None => table.q_unscheduled(h),
        };
        match c.class() {
            ComponentClass::Generator => gens.push(p),
            ComponentClass::Line => lines.push(p),
        }
    }
    Ok((gens, lines))
}

/// `P(gen count <= rho_gen) * P(line count <= rho_line)`.
pub fn joint_oracle(gens: &[f64], lines: &[f64], rho_gen: usize, rho_line: usize) -> Result<f64, OracleError> {
    Ok(pb_cdf(gens, rho_gen)? * pb_cdf(lines, rho_line)?)
}

/// Reliability of a schedule.
#[derive(Clone, Debug)]
pub struct ReliabilityOracle<'a> {
    pub table: &'a SuccessProbTable,
    pub maintainable: &'a [ComponentId],
    pub rho_gen: usize,
    pub rho_line: usize,
}

impl ReliabilityOracle<'_> {
    pub fn probability(&self, schedule: &MaintenanceSchedule) -> Result<f64, OracleError> {
        let (g, l) = success_probs(schedule, self.maintainable, self.table)?;
        joint_oracle(&g, &l, self.rho_gen, self.rho_line)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pmf_of_three() {
        let pmf = pb_pmf(&[0.1, 0.2, 0.3]).unwrap();
        assert!((pmf[0] - 0.504).abs() < 1e-15);
        assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((pb_cdf(&[0.1, 0.2, 0.3], 1).unwrap() - 0.902).abs() < 1e-15);
    }

    #[test]
    fn joint_product() {
        let p = joint_oracle(&[0.1, 0.2, 0.3], &[0.2, 0.2], 1, 1).unwrap();
        assert!((p - 0.902 * 0.96).abs() < 1e-15);
        assert!((p - 0.86592).abs() < 1e-12);
    }

    #[test]
    fn empty_profile() {
        assert_eq!(pb_cdf(&[], 0).unwrap(), 1.0);
        assert_eq!(pb_pmf(&[]).unwrap(), vec![1.0]);
    }

    #[test]
    fn rejects_bad_probability() {
        assert_eq!(pb_pmf(&[0.5, 1.5]), Err(OracleError::BadProbability(1.5)));
        assert!(pb_pmf(&[f64::NAN]).is_err());
    }

    #[test]
    fn matrix_round_trip_and_validation() {
        let s = MaintenanceSchedule::from_matrix(&[vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(s.periods, vec![2, 3]);
        assert_eq!(MaintenanceSchedule::from_matrix(&s.to_matrix(3)).unwrap(), s);
        assert_eq!(
            MaintenanceSchedule::from_matrix(&[vec![1.0, 1.0, 0.0]]),
            Err(OracleError::MalformedSchedule(0))
        );
        assert!(MaintenanceSchedule::from_matrix(&[vec![0.0, 0.0]]).is_err());
    }

    #[test]
    fn enumerate_counts() {
        let all = MaintenanceSchedule::enumerate(3, 4);
        assert_eq!(all.len(), 64);
        assert_eq!(all[0].periods, vec![1, 1, 1]);
        assert_eq!(all[63].periods, vec![4, 4, 4]);
        assert_eq!(MaintenanceSchedule::enumerate(0, 4).len(), 1);
    }

    #[test]
    fn table_reuses_last_day_for_unscheduled() {
        let t = SuccessProbTable::new(vec![ComponentId::Gen(0)], 2, vec![vec![0.1, 0.3]]).unwrap();
        assert_eq!(t.q(0, 1), 0.1);
        assert_eq!(t.q(0, 3), 0.3);
        assert_eq!(t.q_unscheduled(0), 0.3);
    }

    proptest! {
        #[test]
        fn pmf_sums_to_one(probs in prop::collection::vec(0.0f64..=1.0, 0..40)) {
            let pmf = pb_pmf(&probs).unwrap();
            prop_assert!((pmf.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(pmf.iter().all(|p| *p >= -1e-15));
        }

        #[test]
        fn cdf_monotone_in_k(probs in prop::collection::vec(0.0f64..=1.0, 1..20)) {
            let mut prev = 0.0;
            for k in 0..=probs.len() {
                let c = pb_cdf(&probs, k).unwrap();
                prop_assert!(c + 1e-15 >= prev);
                prev = c;
            }
            prop_assert!((prev - 1.0).abs() < 1e-12);
        }

        #[test]
        fn cdf_decreases_when_a_probability_grows(
            probs in prop::collection::vec(0.0f64..=1.0, 1..15),
            idx in any::<prop::sample::Index>(),
            bump in 0.0f64..=1.0,
            k in 0usize..15,
        ) {
            let i = idx.index(probs.len());
            let mut up = probs.clone();
            up[i] = probs[i] + (1.0 - probs[i]) * bump;
            let k = k.min(probs.len());
            prop_assert!(pb_cdf(&up, k).unwrap() <= pb_cdf(&probs, k).unwrap() + 1e-12);
        }
    }
}
