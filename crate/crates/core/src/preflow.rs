//! Identifying line flow limits that can never bind.
//!
//! For each always-in-service line and direction, the largest flow over a
//! relaxation of the operational model (commitment and switching relaxed,
//! demand anywhere between zero and a cap) is computed. A limit the
//! relaxation cannot reach is redundant.

use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::caseio::{DemandGrid, FlowMode, Network};
use crate::solver::{Backend, ModelSpec, ObjSense, SolveParams, SolveStatus, SolverError, VarId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scope {
    Horizon,
    Day(usize),
    Hour(usize, usize),
}

impl std::fmt::Display for Scope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scope::Horizon => write!(f, "all"),
            Scope::Day(t) => write!(f, "t{t}"),
            Scope::Hour(t, s) => write!(f, "t{t}s{s}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RedundancyEntry {
    pub line: usize,
    /// `true` for the from-to direction.
    pub upper: bool,
    pub scope: Scope,
    pub f_star: f64,
    pub redundant: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RedundancyReport {
    pub mode: FlowMode,
    /// Lines treated as switchable in the relaxation; their limits are
    /// never dropped.
    pub switchable: Vec<usize>,
    pub entries: Vec<RedundancyEntry>,
    #[serde(skip)]
    index: HashMap<(usize, bool, Scope), usize>,
}

impl RedundancyReport {
    pub fn new(mode: FlowMode, switchable: Vec<usize>, entries: Vec<RedundancyEntry>) -> Self {
        let index = entries
            .iter()
            .enumerate()
            .map(|(k, e)| ((e.line, e.upper, e.scope), k))
            .collect();
        Self {
            mode,
            switchable,
            entries,
            index,
        }
    }

    pub fn scope_of(&self, day: usize, hour: usize) -> Scope {
        match self.mode {
            FlowMode::Off | FlowMode::I => Scope::Horizon,
            FlowMode::II => Scope::Day(day),
            FlowMode::III => Scope::Hour(day, hour),
        }
    }

    pub fn is_redundant(&self, line: usize, upper: bool, day: usize, hour: usize) -> bool {
        let key = (line, upper, self.scope_of(day, hour));
        self.index
            .get(&key)
            .is_some_and(|&k| self.entries[k].redundant)
    }

    pub fn flagged(&self) -> usize {
        self.entries.iter().filter(|e| e.redundant).count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("line,dir,scope,f*,redundant\n");
        for e in &self.entries {
            let dir = if e.upper { "fwd" } else { "rev" };
            let _ = writeln!(s, "{},{dir},{},{},{}", e.line, e.scope, e.f_star, e.redundant);
        }
        s
    }
}

/// Largest (or, with `upper = false`, most negative) flow on `line` when
/// bus demands range over `[0, cap]`.
pub fn flow_extreme(
    net: &Network,
    cap: &[f64],
    line: usize,
    upper: bool,
    switchable: &[usize],
    backend: &dyn Backend,
) -> Result<Option<f64>, SolverError> {
    let sense = if upper { ObjSense::Maximize } else { ObjSense::Minimize };
    let mut m = ModelSpec::new(sense);
    let nb = net.buses.len();
    let mut inject: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); nb];
    for b in 0..nb {
        let d = m.add_var(format!("d[{b}]"), 0.0, cap[b], 0.0);
        let q = m.add_var(format!("q[{b}]"), 0.0, f64::INFINITY, 0.0);
        m.add_le(format!("curtail[{b}]"), vec![(q, 1.0), (d, -1.0)], 0.0);
        inject[b].push((q, 1.0));
        inject[b].push((d, -1.0));
    }
    for (i, g) in net.generators.iter().enumerate() {
        let x = m.add_var(format!("x[{i}]"), 0.0, 1.0, 0.0);
        let p = m.add_var(format!("p[{i}]"), 0.0, g.p_max, 0.0);
        m.add_ge(format!("pmin[{i}]"), vec![(p, 1.0), (x, -g.p_min)], 0.0);
        m.add_le(format!("pmax[{i}]"), vec![(p, 1.0), (x, -g.p_max)], 0.0);
        inject[g.bus].push((p, 1.0));
    }
    let angles: Vec<VarId> = net
        .buses
        .iter()
        .enumerate()
        .map(|(b, bus)| m.add_var(format!("delta[{b}]"), bus.angle_min, bus.angle_max, 0.0))
        .collect();
    for (l, ln) in net.lines.iter().enumerate() {
        let cost = if l == line { 1.0 } else { 0.0 };
        let f = m.add_var(format!("f[{l}]"), f64::NEG_INFINITY, f64::INFINITY, cost);
        inject[ln.from].push((f, -1.0));
        inject[ln.to].push((f, 1.0));
        let k = net.flow_per_radian(l);
        let ohm = vec![(f, 1.0), (angles[ln.from], -k), (angles[ln.to], k)];
        if switchable.contains(&l) {
            let y = m.add_var(format!("y[{l}]"), 0.0, 1.0, 0.0);
            let mut hi = ohm.clone();
            hi.push((y, ln.big_m));
            m.add_le(format!("ohm_hi[{l}]"), hi, ln.big_m);
            let mut lo = ohm;
            lo.push((y, -ln.big_m));
            m.add_ge(format!("ohm_lo[{l}]"), lo, -ln.big_m);
            m.add_le(format!("cap_hi[{l}]"), vec![(f, 1.0), (y, -ln.flow_limit)], 0.0);
            m.add_ge(format!("cap_lo[{l}]"), vec![(f, 1.0), (y, ln.flow_limit)], 0.0);
        } else {
            m.add_eq(format!("ohm[{l}]"), ohm, 0.0);
        }
    }
    for (b, terms) in inject.into_iter().enumerate() {
        m.add_eq(format!("bal[{b}]"), terms, 0.0);
    }
    let out = backend.solve(&m, &SolveParams::default())?;
    Ok((out.status == SolveStatus::Optimal).then_some(out.objective))
}

fn is_unreachable(f_star: Option<f64>, limit: f64, upper: bool) -> bool {
    let tol = 1e-9 * limit.max(1.0);
    match f_star {
        Some(f) if upper => f < limit - tol,
        Some(f) => f > -limit + tol,
        None => false,
    }
}

/// Runs the redundancy analysis over every non-switchable line, both
/// directions, at the granularity of `mode`.
pub fn analyze(
    net: &Network,
    demand: &DemandGrid,
    mode: FlowMode,
    switchable: &[usize],
    backend: &dyn Backend,
) -> Result<RedundancyReport, SolverError> {
    let nb = net.buses.len();
    let scopes: Vec<(Scope, Vec<f64>)> = match mode {
        FlowMode::Off => Vec::new(),
        FlowMode::I => vec![(Scope::Horizon, (0..nb).map(|b| demand.horizon_peak(b)).collect())],
        FlowMode::II => (1..=demand.days)
            .map(|t| (Scope::Day(t), (0..nb).map(|b| demand.day_peak(t, b)).collect()))
            .collect(),
        FlowMode::III => (1..=demand.days)
            .flat_map(|t| (1..=demand.hours).map(move |s| (t, s)))
            .map(|(t, s)| (Scope::Hour(t, s), (0..nb).map(|b| demand.at(t, s, b)).collect()))
            .collect(),
    };
    let lines: Vec<usize> = (0..net.lines.len()).filter(|l| !switchable.contains(l)).collect();
    let jobs: Vec<(usize, usize, bool)> = (0..scopes.len())
        .flat_map(|k| lines.iter().flat_map(move |&l| [(k, l, true), (k, l, false)]))
        .collect();
    let entries = jobs
        .par_iter()
        .map(|&(k, l, upper)| {
            let (scope, cap) = &scopes[k];
            let f = flow_extreme(net, cap, l, upper, switchable, backend)?;
            Ok(RedundancyEntry {
                line: l,
                upper,
                scope: *scope,
                f_star: f.unwrap_or(f64::NAN),
                redundant: is_unreachable(f, net.lines[l].flow_limit, upper),
            })
        })
        .collect::<Result<Vec<_>, SolverError>>()?;
    Ok(RedundancyReport::new(mode, switchable.to_vec(), entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caseio::parse_case;
    use crate::solver::HighsBackend;

    const TWO_BUS: &str = "
mpc.baseMVA = 100;
mpc.bus = [ 1 3 0 0 0 0 1 1 0 100 1 1.1 0.9; 2 1 50 0 0 0 1 1 0 100 1 1.1 0.9; ];
mpc.gen = [ 1 0 0 0 0 1 100 1 200 0 0 0 0 0 0 0 0 0 0 0 0; ];
mpc.branch = [ 1 2 0 0.1 0 100 0 0 0 0 1 -360 360; ];
mpc.gencost = [ 2 0 0 2 10 0; ];
";

    #[test]
    fn two_bus_extreme_is_demand_cap() {
        let net = parse_case(TWO_BUS).unwrap();
        let f = flow_extreme(&net, &[0.0, 50.0], 0, true, &[], &HighsBackend).unwrap().unwrap();
        assert!((f - 50.0).abs() < 1e-6);
        let r = flow_extreme(&net, &[0.0, 50.0], 0, false, &[], &HighsBackend).unwrap().unwrap();
        assert!(r.abs() < 1e-6);
    }

    #[test]
    fn ties_are_not_flagged() {
        assert!(!is_unreachable(Some(100.0), 100.0, true));
        assert!(is_unreachable(Some(99.0), 100.0, true));
        assert!(!is_unreachable(None, 100.0, true));
        assert!(!is_unreachable(Some(-100.0), 100.0, false));
    }

    #[test]
    fn report_lookup_by_mode() {
        let net = parse_case(TWO_BUS).unwrap();
        let mut d = DemandGrid::zeros(2, 2, 2);
        d.set(1, 1, 1, 50.0);
        d.set(2, 2, 1, 150.0);
        let r1 = analyze(&net, &d, FlowMode::I, &[], &HighsBackend).unwrap();
        assert!(!r1.is_redundant(0, true, 1, 1));
        assert!(r1.is_redundant(0, false, 1, 1));
        let r3 = analyze(&net, &d, FlowMode::III, &[], &HighsBackend).unwrap();
        assert!(r3.is_redundant(0, true, 1, 1));
        assert!(!r3.is_redundant(0, true, 2, 2));
        assert_eq!(r3.entries.len(), 2 * 4);
        assert!(r3.to_csv().starts_with("line,dir,scope,f*,redundant"));
    }
}
