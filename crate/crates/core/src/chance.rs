//! Enforcing the joint reliability requirement in the master problem,
//! exactly through cover cuts or conservatively through expected loads.

use std::collections::HashSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::caseio::{ComponentClass, ComponentId};
use crate::pboracle::{MaintenanceSchedule, OracleError, ReliabilityOracle, SuccessProbTable};

/// A variable of the master problem.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MasterVar {
    /// Maintainable component `h` (by position) maintained in `period`.
    Assign { h: usize, period: u32 },
    /// Recourse estimate; the index depends on the cut granularity.
    Recourse(usize),
    /// Per-class reliability levels of the safe approximation.
    SafeGen,
    SafeLine,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CutSense {
    Le,
    Ge,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearCut {
    pub terms: Vec<(MasterVar, f64)>,
    pub sense: CutSense,
    pub rhs: f64,
}

impl LinearCut {
    pub fn lhs(&self, value: impl Fn(MasterVar) -> f64) -> f64 {
        self.terms.iter().map(|&(v, c)| c * value(v)).sum()
    }

    /// Positive when the point violates the cut.
    pub fn violation(&self, value: impl Fn(MasterVar) -> f64) -> f64 {
        let lhs = self.lhs(value);
        match self.sense {
            CutSense::Le => lhs - self.rhs,
            CutSense::Ge => self.rhs - lhs,
        }
    }

    /// Merges repeated variables, drops zeros and sorts, so equal cuts
    /// compare equal.
    pub fn canonical(mut self) -> Self {
        self.terms.sort_by(|a, b| a.0.cmp(&b.0));
        let mut merged: Vec<(MasterVar, f64)> = Vec::with_capacity(self.terms.len());
        for (v, c) in self.terms {
            match merged.last_mut() {
                Some(last) if last.0 == v => last.1 += c,
                _ => merged.push((v, c)),
            }
        }
        merged.retain(|(_, c)| *c != 0.0);
        self.terms = merged;
        self
    }

    fn key(&self) -> String {
        let mut s = String::new();
        let _ = write!(s, "{:?}|{:.10e}|", self.sense, self.rhs);
        for (v, c) in &self.terms {
            let _ = write!(s, "{v:?}:{c:.10e};");
        }
        s
    }
}

/// Cuts with duplicate detection.
#[derive(Clone, Debug, Default)]
pub struct CutPool {
    pub cuts: Vec<LinearCut>,
    keys: HashSet<String>,
}

impl CutPool {
    /// Adds the cut unless an identical one is present; returns whether it
    /// was new.
    pub fn insert(&mut self, cut: LinearCut) -> bool {
        let cut = cut.canonical();
        if self.keys.insert(cut.key()) {
            self.cuts.push(cut);
            true
        } else {
            false
        }
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }
}

/// The assignment pairs `(h, period)` selected by a schedule.
pub fn cover_of(schedule: &MaintenanceSchedule) -> Vec<(usize, u32)> {
    schedule.periods.iter().copied().enumerate().collect()
}

/// Adds every later period of each component to the cover. Postponing
/// maintenance never raises reliability, so all these pairs can share
/// one cut.
pub fn extend_cover(cover: &[(usize, u32)], last_period: u32) -> Vec<(usize, u32)> {
    cover
        .iter()
        .flat_map(|&(h, t)| (t..=last_period).map(move |s| (h, s)))
        .collect()
}

/// `sum of v over pairs <= components - 1`.
pub fn cover_cut(pairs: &[(usize, u32)], components: usize) -> LinearCut {
    LinearCut {
        terms: pairs
            .iter()
            .map(|&(h, period)| (MasterVar::Assign { h, period }, 1.0))
            .collect(),
        sense: CutSense::Le,
        rhs: components as f64 - 1.0,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Separation {
    pub probability: f64,
    /// Extended cover cut when the schedule is unreliable.
    pub cut: Option<LinearCut>,
}

impl Separation {
    pub fn feasible(&self) -> bool {
        self.cut.is_none()
    }
}

pub fn separate(schedule: &MaintenanceSchedule, oracle: &ReliabilityOracle<'_>, alpha: f64) -> Result<Separation, OracleError> {
    let probability = oracle.probability(schedule)?;
    let cut = (probability < 1.0 - alpha).then(|| {
        let pairs = extend_cover(&cover_of(schedule), oracle.table.last_period());
        cover_cut(&pairs, schedule.periods.len())
    });
    Ok(Separation { probability, cut })
}

/// Expected corrective load per class, relative to its budget.
#[derive(Clone, Debug)]
pub struct SafeApproximation<'a> {
    pub table: &'a SuccessProbTable,
    pub maintainable: &'a [ComponentId],
    pub rho_gen: usize,
    pub rho_line: usize,
    pub alpha: f64,
}

impl SafeApproximation<'_> {
    fn fixed_load(&self, class: ComponentClass) -> f64 {
        self.table
            .components
            .iter()
            .enumerate()
            .filter(|(_, c)| c.class() == class && !self.maintainable.contains(c))
            .map(|(h, _)| self.table.q_unscheduled(h))
            .sum()
    }

    fn rho(&self, class: ComponentClass) -> f64 {
        match class {
            ComponentClass::Generator => self.rho_gen as f64,
            ComponentClass::Line => self.rho_line as f64,
        }
    }

    /// `(gen load, line load)` as fractions of the budgets.
    pub fn loads(&self, schedule: &MaintenanceSchedule) -> (f64, f64) {
        let mut load = [
            self.fixed_load(ComponentClass::Generator),
            self.fixed_load(ComponentClass::Line),
        ];
        for (j, &c) in self.maintainable.iter().enumerate() {
            let h = self.table.position(c).expect("maintainable component in table");
            let slot = usize::from(c.class() == ComponentClass::Line);
            load[slot] += self.table.q(h, schedule.periods[j]);
        }
        (
            load[0] / self.rho(ComponentClass::Generator),
            load[1] / self.rho(ComponentClass::Line),
        )
    }

    pub fn accepts(&self, schedule: &MaintenanceSchedule) -> bool {
        let (x, y) = self.loads(schedule);
        x <= 1.0 && y <= 1.0 && (1.0 - x) * (1.0 - y) >= 1.0 - self.alpha - 1e-12
    }

    /// Linear rows tying assignments to the reliability levels:
    /// `sum q v + rho * level <= rho - fixed load` per class.
    pub fn rows(&self) -> Vec<LinearCut> {
        let last = self.table.last_period();
        [ComponentClass::Generator, ComponentClass::Line]
            .into_iter()
            .map(|class| {
                let mut terms = Vec::new();
                for (j, &c) in self.maintainable.iter().enumerate() {
                    if c.class() != class {
                        continue;
                    }
                    let h = self.table.position(c).expect("maintainable component in table");
                    for t in 1..=last {
                        terms.push((MasterVar::Assign { h: j, period: t }, self.table.q(h, t)));
                    }
                }
                let level = match class {
                    ComponentClass::Generator => MasterVar::SafeGen,
                    ComponentClass::Line => MasterVar::SafeLine,
                };
                terms.push((level, self.rho(class)));
                LinearCut {
                    terms,
                    sense: CutSense::Le,
                    rhs: self.rho(class) - self.fixed_load(class),
                }
            })
            .collect()
    }
}

/// `coef_x * x + coef_y * y <= rhs` in load space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OuterCut {
    pub coef_x: f64,
    pub coef_y: f64,
    pub rhs: f64,
}

impl OuterCut {
    /// The same cut over the reliability levels, using `level = 1 - load`.
    pub fn to_master_cut(self) -> LinearCut {
        LinearCut {
            terms: vec![(MasterVar::SafeGen, self.coef_x), (MasterVar::SafeLine, self.coef_y)],
            sense: CutSense::Ge,
            rhs: self.coef_x + self.coef_y - self.rhs,
        }
    }
}

/// Tangent of `(1 - x)(1 - y) = 1 - alpha` at a point on that curve.
pub fn tangent_at(x0: f64, y0: f64, alpha: f64) -> OuterCut {
    let c = 1.0 - alpha;
    OuterCut {
        coef_x: 1.0 - y0,
        coef_y: 1.0 - x0,
        rhs: (1.0 - y0) + (1.0 - x0) - 2.0 * c,
    }
}

/// Separates a load point violating `(1 - x)(1 - y) >= 1 - alpha` with a
/// tangent at the curve point on the segment from the origin.
pub fn soc_outer_cut(x: f64, y: f64, alpha: f64) -> Option<OuterCut> {
    let c = 1.0 - alpha;
    if (1.0 - x) * (1.0 - y) >= c || c <= 0.0 {
        return None;
    }
    let (sum, prod) = (x + y, x * y);
    let s = if prod.abs() < 1e-300 {
        (1.0 - c) / sum
    } else {
        (sum - (sum * sum - 4.0 * prod * (1.0 - c)).max(0.0).sqrt()) / (2.0 * prod)
    };
    Some(tangent_at(s * x, s * y, alpha))
}
