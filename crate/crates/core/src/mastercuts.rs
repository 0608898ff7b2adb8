//! The scheduling master problem and the optimality cuts that approximate
//! expected operating cost from below.

use serde::{Deserialize, Serialize};

use crate::caseio::{CutFamily, Durations, Granularity, MaintenanceCost};
use crate::chance::{CutPool, CutSense, LinearCut, MasterVar};
use crate::pboracle::MaintenanceSchedule;
use crate::solver::{Backend, ModelSpec, ObjSense, RotatedCone, SolveParams, SolveStatus, SolverError, VarId};
use crate::ucmodel::component_available;

/// Per-period maintenance cost of one component in one scenario: the
/// predictive cost before the failure day, the corrective cost from it on,
/// and nothing for "never" when the component does not fail.
pub fn maintenance_coefficients(cost: MaintenanceCost, failure_day: u32, last_period: u32) -> Vec<f64> {
    (1..=last_period)
        .map(|t| {
            if t < failure_day {
                if t == last_period {
                    0.0
                } else {
                    cost.predictive
                }
            } else if failure_day == last_period {
                0.0
            } else {
                cost.corrective
            }
        })
        .collect()
}

/// Periods that give the same scenario cost as `m`: only `m` itself for
/// a maintenance before the failure, every period from the failure day on
/// otherwise.
pub fn same_cost_periods(m: u32, failure_day: u32, last_period: u32) -> Vec<u32> {
    if m < failure_day {
        vec![m]
    } else {
        (failure_day..=last_period).collect()
    }
}

/// Periods that leave the component's availability on `day` unchanged.
pub fn same_status_periods(m: u32, failure_day: u32, day: u32, durations: (u32, u32), days: u32) -> Vec<u32> {
    let target = component_available(m, failure_day, day, durations, days);
    (1..=days + 1)
        .filter(|&t| component_available(t, failure_day, day, durations, days) == target)
        .collect()
}

/// Index layout of the recourse variables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecourseLayout {
    pub granularity: Granularity,
    pub scenarios: usize,
    pub days: usize,
}

impl RecourseLayout {
    pub fn count(&self) -> usize {
        match self.granularity {
            Granularity::Single => 1,
            Granularity::PerScenario => self.scenarios,
            Granularity::PerScenarioDay => self.scenarios * self.days,
        }
    }

    /// Recourse variable collecting scenario `k` on `day` (1-based).
    pub fn index(&self, k: usize, day: usize) -> usize {
        match self.granularity {
            Granularity::Single => 0,
            Granularity::PerScenario => k,
            Granularity::PerScenarioDay => k * self.days + day - 1,
        }
    }
}

/// One term in an optimality cut: a recourse value `q` evaluated at the
/// incumbent, its lower bound `l`, and for every component the periods that
/// count as "same as the incumbent". `exclude_others` adds the negative
/// terms of the integer L-shaped form.
#[derive(Clone, Debug)]
pub struct CutTerm {
    pub weight: f64,
    pub q: f64,
    pub l: f64,
    pub periods: Vec<Vec<u32>>,
    pub exclude_others: bool,
}

/// `theta_r >= sum_terms weight * ((q - l) * (matches - n) + q)`.
pub fn aggregate_cut(recourse: usize, terms: &[CutTerm], last_period: u32) -> LinearCut {
    let mut out = vec![(MasterVar::Recourse(recourse), 1.0)];
    let mut rhs = 0.0;
    for term in terms {
        let slope = (term.q - term.l).max(0.0) * term.weight;
        let n = term.periods.len() as f64;
        rhs += term.weight * term.q - slope * n;
        for (h, set) in term.periods.iter().enumerate() {
            for t in 1..=last_period {
                let inside = set.contains(&t);
                if inside {
                    out.push((MasterVar::Assign { h, period: t }, -slope));
                } else if term.exclude_others {
                    out.push((MasterVar::Assign { h, period: t }, slope));
                }
            }
        }
    }
    LinearCut {
        terms: out,
        sense: CutSense::Ge,
        rhs,
    }
    .canonical()
}

/// Per-component period sets used by a cut family for scenario `xi` and,
/// for the per-day family, `day`.
pub fn cut_periods(
    family: CutFamily,
    schedule: &MaintenanceSchedule,
    failure_days: &[u32],
    classes: &[(u32, u32)],
    day: usize,
    days: u32,
) -> Vec<Vec<u32>> {
    let last = days + 1;
    schedule
        .periods
        .iter()
        .enumerate()
        .map(|(h, &m)| match family {
            CutFamily::IntegerLShaped | CutFamily::OptK => vec![m],
            CutFamily::OptKPlus => same_cost_periods(m, failure_days[h], last),
            CutFamily::OptKTPlusPlus => same_status_periods(m, failure_days[h], day as u32, classes[h], days),
        })
        .collect()
}

/// Scenario costs at the incumbent and the relaxation bounds, `[k][day-1]`.
#[derive(Clone, Debug)]
pub struct RecourseValues<'a> {
    pub q: &'a [Vec<f64>],
    pub l: &'a [Vec<f64>],
}

/// Builds the optimality cuts of `family` at the incumbent for the given
/// granularity.
pub fn optimality_cuts(
    family: CutFamily,
    layout: &RecourseLayout,
    schedule: &MaintenanceSchedule,
    scenarios: &[Vec<u32>],
    probabilities: &[f64],
    values: &RecourseValues<'_>,
    classes: &[(u32, u32)],
) -> Vec<LinearCut> {
    let days = layout.days as u32;
    let last = days + 1;
    let exclude = family == CutFamily::IntegerLShaped;
    let total = |row: &[f64]| row.iter().sum::<f64>();
    match layout.granularity {
        Granularity::Single => {
            let terms: Vec<CutTerm> = (0..layout.scenarios)
                .map(|k| CutTerm {
                    weight: probabilities[k],
                    q: total(&values.q[k]),
                    l: total(&values.l[k]),
                    periods: cut_periods(family, schedule, &scenarios[k], classes, 0, days),
                    exclude_others: exclude,
                })
                .collect();
            vec![aggregate_cut(0, &terms, last)]
        }
        Granularity::PerScenario => (0..layout.scenarios)
            .map(|k| {
                let term = CutTerm {
                    weight: 1.0,
                    q: total(&values.q[k]),
                    l: total(&values.l[k]),
                    periods: cut_periods(family, schedule, &scenarios[k], classes, 0, days),
                    exclude_others: exclude,
                };
                aggregate_cut(layout.index(k, 1), &[term], last)
            })
            .collect(),
        Granularity::PerScenarioDay => (0..layout.scenarios)
            .flat_map(|k| (1..=layout.days).map(move |t| (k, t)))
            .map(|(k, t)| {
                let term = CutTerm {
                    weight: 1.0,
                    q: values.q[k][t - 1],
                    l: values.l[k][t - 1],
                    periods: cut_periods(family, schedule, &scenarios[k], classes, t, days),
                    exclude_others: exclude,
                };
                aggregate_cut(layout.index(k, t), &[term], last)
            })
            .collect(),
    }
}

#[derive(Clone, Debug)]
pub struct MasterSolution {
    pub schedule: MaintenanceSchedule,
    pub objective: f64,
    pub bound: f64,
    pub recourse: Vec<f64>,
    pub safe_levels: Option<(f64, f64)>,
}

/// The master problem: assignment columns, recourse columns with their
/// lower bounds, and the accumulated cuts.
#[derive(Clone, Debug)]
pub struct MasterProblem {
    pub components: usize,
    pub last_period: u32,
    pub layout: RecourseLayout,
    /// Expected maintenance cost `[h][period-1]`.
    pub costs: Vec<Vec<f64>>,
    pub recourse_weight: Vec<f64>,
    pub recourse_lower: Vec<f64>,
    pub chance_cuts: CutPool,
    pub optimality_cuts: CutPool,
    /// Reliability-level rows and tangents of the safe approximation.
    pub safe_rows: Vec<LinearCut>,
    pub outer_cuts: CutPool,
    /// Product of reliability levels as a cone, when the backend allows.
    pub cone_level: Option<f64>,
}

impl MasterProblem {
    pub fn new(
        costs: Vec<Vec<f64>>,
        last_period: u32,
        layout: RecourseLayout,
        recourse_weight: Vec<f64>,
        recourse_lower: Vec<f64>,
    ) -> Self {
        Self {
            components: costs.len(),
            last_period,
            layout,
            costs,
            recourse_weight,
            recourse_lower,
            chance_cuts: CutPool::default(),
            optimality_cuts: CutPool::default(),
            safe_rows: Vec::new(),
            outer_cuts: CutPool::default(),
            cone_level: None,
        }
    }

    fn var(&self, v: MasterVar) -> VarId {
        let na = self.components * self.last_period as usize;
        let nr = self.recourse_weight.len();
        match v {
            MasterVar::Assign { h, period } => VarId(h * self.last_period as usize + period as usize - 1),
            MasterVar::Recourse(r) => VarId(na + r),
            MasterVar::SafeGen => VarId(na + nr),
            MasterVar::SafeLine => VarId(na + nr + 1),
        }
    }

    fn uses_safe(&self) -> bool {
        !self.safe_rows.is_empty()
    }

    pub fn build(&self) -> ModelSpec {
        let mut m = ModelSpec::new(ObjSense::Minimize);
        for h in 0..self.components {
            for t in 1..=self.last_period {
                m.add_binary(format!("v[{h},{t}]"), self.costs[h][t as usize - 1]);
            }
        }
        for (r, (&w, &lb)) in self.recourse_weight.iter().zip(&self.recourse_lower).enumerate() {
            m.add_var(format!("theta[{r}]"), lb, f64::INFINITY, w);
        }
        if self.uses_safe() {
            m.add_var("level_gen", 0.0, 1.0, 0.0);
            m.add_var("level_line", 0.0, 1.0, 0.0);
        }
        for h in 0..self.components {
            let terms = (1..=self.last_period)
                .map(|t| (self.var(MasterVar::Assign { h, period: t }), 1.0))
                .collect();
            m.add_eq(format!("one_period[{h}]"), terms, 1.0);
        }
        let groups = [
            ("chance", &self.chance_cuts.cuts),
            ("opt", &self.optimality_cuts.cuts),
            ("safe", &self.safe_rows),
            ("tangent", &self.outer_cuts.cuts),
        ];
        for (name, cuts) in groups {
            for (i, c) in cuts.iter().enumerate() {
                let terms = c.terms.iter().map(|&(v, a)| (self.var(v), a)).collect();
                match c.sense {
                    CutSense::Le => m.add_le(format!("{name}{i}"), terms, c.rhs),
                    CutSense::Ge => m.add_ge(format!("{name}{i}"), terms, c.rhs),
                };
            }
        }
        if let (Some(level), true) = (self.cone_level, self.uses_safe()) {
            let s = m.add_var("cone_rhs", (2.0 * level).sqrt(), (2.0 * level).sqrt(), 0.0);
            m.add_cone(RotatedCone {
                a: self.var(MasterVar::SafeGen),
                b: self.var(MasterVar::SafeLine),
                rest: vec![s],
            });
        }
        m
    }

    pub fn solve(&self, backend: &dyn Backend, params: &SolveParams) -> Result<Option<MasterSolution>, SolverError> {
        let model = self.build();
        let out = backend.solve(&model, params)?;
        match out.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => return Ok(None),
            SolveStatus::Limit if out.has_solution() => {}
            SolveStatus::Limit => return Err(SolverError::Backend("master stopped without a solution".into())),
            SolveStatus::Unbounded => return Err(SolverError::Backend("master problem is unbounded".into())),
        }
        let x = &out.values;
        let periods = (0..self.components)
            .map(|h| {
                (1..=self.last_period)
                    .max_by(|&a, &b| {
                        let va = x[self.var(MasterVar::Assign { h, period: a }).0];
                        let vb = x[self.var(MasterVar::Assign { h, period: b }).0];
                        va.total_cmp(&vb)
                    })
                    .expect("at least one period")
            })
            .collect();
        let recourse = (0..self.recourse_weight.len())
            .map(|r| x[self.var(MasterVar::Recourse(r)).0])
            .collect();
        let safe_levels = self
            .uses_safe()
            .then(|| (x[self.var(MasterVar::SafeGen).0], x[self.var(MasterVar::SafeLine).0]));
        Ok(Some(MasterSolution {
            schedule: MaintenanceSchedule { periods },
            objective: out.objective,
            bound: out.bound,
            recourse,
            safe_levels,
        }))
    }
}

/// `(predictive, corrective)` outage lengths per maintainable component.
pub fn class_durations(classes: &[crate::caseio::ComponentClass], durations: &Durations) -> Vec<(u32, u32)> {
    classes.iter().map(|&c| durations.for_class(c)).collect()
}
