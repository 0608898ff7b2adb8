//! Component availability and the daily unit-commitment / DC-flow model.
//!
//! Days are independent: the first hour of a day carries no start-up,
//! ramping or minimum up/down coupling to the previous day.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::caseio::{ComponentClass, ComponentId, DemandGrid, Durations, Network};
use crate::pboracle::MaintenanceSchedule;
use crate::preflow::RedundancyReport;
use crate::solver::{Backend, ModelSpec, ObjSense, SolveParams, SolveStatus, SolverError, VarId};

#[derive(Debug, Error)]
pub enum UcError {
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("day {0} subproblem is infeasible")]
    Infeasible(usize),
    #[error("day {0} subproblem stopped at a limit without a solution")]
    Limit(usize),
    #[error("day {0} subproblem is unbounded")]
    Unbounded(usize),
}

/// Whether a component maintained in period `m` and failing on day `xi`
/// (`days + 1` = never) can operate on `day`.
pub fn component_available(m: u32, xi: u32, day: u32, durations: (u32, u32), days: u32) -> bool {
    let (pred, corr) = durations;
    if m < xi {
        !(m <= day && day < m + pred)
    } else if xi <= days {
        !(xi <= day && day < xi + corr)
    } else {
        true
    }
}

/// Availability of the tracked components on one day (true = available).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StatusVector(pub Vec<bool>);

/// Status of the maintainable components on `day` under a schedule and a
/// scenario's failure days.
pub fn status_vector(
    schedule: &MaintenanceSchedule,
    failure_days: &[u32],
    day: u32,
    maintainable: &[ComponentId],
    durations: &Durations,
    days: u32,
) -> StatusVector {
    StatusVector(
        maintainable
            .iter()
            .enumerate()
            .map(|(j, c)| {
                component_available(
                    schedule.periods[j],
                    failure_days[j],
                    day,
                    durations.for_class(c.class()),
                    days,
                )
            })
            .collect(),
    )
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Availability {
    pub gens: Vec<bool>,
    pub lines: Vec<bool>,
}

impl Availability {
    pub fn all(net: &Network) -> Self {
        Self {
            gens: vec![true; net.generators.len()],
            lines: vec![true; net.lines.len()],
        }
    }

    pub fn from_status(net: &Network, tracked: &[ComponentId], status: &StatusVector) -> Self {
        let mut a = Self::all(net);
        for (&c, &on) in tracked.iter().zip(&status.0) {
            a.set(c, on);
        }
        a
    }

    pub fn set(&mut self, c: ComponentId, on: bool) {
        match c {
            ComponentId::Gen(i) => self.gens[i] = on,
            ComponentId::Line(i) => self.lines[i] = on,
        }
    }
}

/// Maintenance/failure coupling for the relaxation used as a recourse
/// lower bound.
#[derive(Clone, Copy, Debug)]
pub struct Coupling<'a> {
    pub maintainable: &'a [ComponentId],
    pub failure_days: &'a [u32],
    pub durations: &'a Durations,
    pub days: u32,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum LineState {
    Off,
    On,
    Switchable,
}

/// Column handles of a built day model, indexed `[element][hour - 1]`.
#[derive(Clone, Debug, Default)]
pub struct DayVars {
    pub commit: Vec<Vec<VarId>>,
    pub output: Vec<Vec<VarId>>,
    pub startup: Vec<Vec<VarId>>,
    pub shutdown: Vec<Vec<VarId>>,
    pub angle: Vec<Vec<VarId>>,
    pub curtail: Vec<Vec<VarId>>,
    pub flow: Vec<Option<Vec<VarId>>>,
    pub switch: Vec<Option<Vec<VarId>>>,
    /// Relaxed maintenance assignments `[maintainable][period - 1]`.
    pub assign: Vec<Vec<VarId>>,
}

/// Inputs shared by every day model of an instance.
#[derive(Clone, Copy)]
pub struct DayContext<'a> {
    pub net: &'a Network,
    pub demand: &'a DemandGrid,
    /// Flow bounds proven redundant for lines that never switch.
    pub filter: Option<&'a RedundancyReport>,
}

impl DayContext<'_> {
    fn filter_applies(&self, avail: &Availability) -> bool {
        match self.filter {
            Some(f) => (0..self.net.lines.len())
                .all(|l| avail.lines[l] || f.switchable.contains(&l)),
            None => false,
        }
    }

    /// Builds the day-`day` model. With `coupling`, maintainable lines become
    /// switchable, maintenance assignments enter as continuous columns and
    /// all integrality is dropped.
    pub fn build(&self, day: usize, avail: &Availability, coupling: Option<&Coupling<'_>>) -> (ModelSpec, DayVars) {
        let net = self.net;
        let hours = self.demand.hours;
        let integer = coupling.is_none();
        let mut m = ModelSpec::new(ObjSense::Minimize);
        let mut vars = DayVars::default();

        let mut line_state: Vec<LineState> = avail
            .lines
            .iter()
            .map(|&on| if on { LineState::On } else { LineState::Off })
            .collect();
        if let Some(cp) = coupling {
            for c in cp.maintainable {
                if let ComponentId::Line(l) = *c {
                    line_state[l] = LineState::Switchable;
                }
            }
        }
        let use_filter = integer && self.filter_applies(avail);

        for (i, g) in net.generators.iter().enumerate() {
            let ub = if avail.gens[i] { 1.0 } else { 0.0 };
            let (mut xs, mut ps, mut us, mut ns) = (vec![], vec![], vec![], vec![]);
            for s in 1..=hours {
                let x = if integer {
                    m.add_int_var(format!("x[g{i},{s}]"), 0.0, ub, g.cost_noload)
                } else {
                    m.add_var(format!("x[g{i},{s}]"), 0.0, ub, g.cost_noload)
                };
                xs.push(x);
                ps.push(m.add_var(format!("p[g{i},{s}]"), 0.0, g.p_max * ub, g.cost_energy));
                us.push(m.add_var(format!("u[g{i},{s}]"), 0.0, 1.0, g.cost_startup));
                ns.push(m.add_var(format!("w[g{i},{s}]"), 0.0, 1.0, 0.0));
            }
            vars.commit.push(xs);
            vars.output.push(ps);
            vars.startup.push(us);
            vars.shutdown.push(ns);
        }
        for (b, bus) in net.buses.iter().enumerate() {
            let mut ds = vec![];
            let mut qs = vec![];
            for s in 1..=hours {
                ds.push(m.add_var(format!("delta[b{b},{s}]"), bus.angle_min, bus.angle_max, 0.0));
                let d = self.demand.at(day, s, b);
                qs.push(m.add_var(format!("q[b{b},{s}]"), 0.0, d, bus.curtail_cost));
            }
            vars.angle.push(ds);
            vars.curtail.push(qs);
        }
        for (l, line) in net.lines.iter().enumerate() {
            match line_state[l] {
                LineState::Off => {
                    vars.flow.push(None);
                    vars.switch.push(None);
                }
                LineState::On => {
                    let mut fs = vec![];
                    for s in 1..=hours {
                        let (mut lo, mut hi) = (-line.flow_limit, line.flow_limit);
                        if use_filter {
                            let f = self.filter.expect("filter in use");
                            if f.is_redundant(l, true, day, s) {
                                hi = f64::INFINITY;
                            }
                            if f.is_redundant(l, false, day, s) {
                                lo = f64::NEG_INFINITY;
                            }
                        }
                        fs.push(m.add_var(format!("f[l{l},{s}]"), lo, hi, 0.0));
                    }
                    vars.flow.push(Some(fs));
                    vars.switch.push(None);
                }
                LineState::Switchable => {
                    let mut fs = vec![];
                    let mut ys = vec![];
                    for s in 1..=hours {
                        fs.push(m.add_var(format!("f[l{l},{s}]"), f64::NEG_INFINITY, f64::INFINITY, 0.0));
                        ys.push(m.add_var(format!("y[l{l},{s}]"), 0.0, 1.0, 0.0));
                    }
                    vars.flow.push(Some(fs));
                    vars.switch.push(Some(ys));
                }
            }
        }

        for s in 0..hours {
            for (i, g) in net.generators.iter().enumerate() {
                let (x, p) = (vars.commit[i][s], vars.output[i][s]);
                m.add_ge(format!("pmin[g{i},{}]", s + 1), vec![(p, 1.0), (x, -g.p_min)], 0.0);
                m.add_le(format!("pmax[g{i},{}]", s + 1), vec![(p, 1.0), (x, -g.p_max)], 0.0);
            }
            let mut balance: Vec<Vec<(VarId, f64)>> = (0..net.buses.len())
                .map(|b| vec![(vars.curtail[b][s], 1.0)])
                .collect();
            for (i, g) in net.generators.iter().enumerate() {
                balance[g.bus].push((vars.output[i][s], 1.0));
            }
            for (l, line) in net.lines.iter().enumerate() {
                if let Some(fs) = &vars.flow[l] {
                    balance[line.from].push((fs[s], -1.0));
                    balance[line.to].push((fs[s], 1.0));
                }
            }
            for (b, terms) in balance.into_iter().enumerate() {
                m.add_eq(format!("bal[b{b},{}]", s + 1), terms, self.demand.at(day, s + 1, b));
            }
            for (l, line) in net.lines.iter().enumerate() {
                let Some(fs) = &vars.flow[l] else { continue };
                let k = net.flow_per_radian(l);
                let (di, dj) = (vars.angle[line.from][s], vars.angle[line.to][s]);
                let ohm = vec![(fs[s], 1.0), (di, -k), (dj, k)];
                match &vars.switch[l] {
                    None => {
                        m.add_eq(format!("ohm[l{l},{}]", s + 1), ohm, 0.0);
                    }
                    Some(ys) => {
                        let y = ys[s];
                        let big = line.big_m;
                        let mut hi = ohm.clone();
                        hi.push((y, big));
                        m.add_le(format!("ohm_hi[l{l},{}]", s + 1), hi, big);
                        let mut lo = ohm;
                        lo.push((y, -big));
                        m.add_ge(format!("ohm_lo[l{l},{}]", s + 1), lo, -big);
                        m.add_le(format!("cap_hi[l{l},{}]", s + 1), vec![(fs[s], 1.0), (y, -line.flow_limit)], 0.0);
                        m.add_ge(format!("cap_lo[l{l},{}]", s + 1), vec![(fs[s], 1.0), (y, line.flow_limit)], 0.0);
                    }
                }
            }
        }

        for (i, g) in net.generators.iter().enumerate() {
            let x = &vars.commit[i];
            let p = &vars.output[i];
            for s in 1..hours {
                let h = s + 1;
                m.add_ge(format!("start[g{i},{h}]"), vec![(x[s - 1], 1.0), (x[s], -1.0), (vars.startup[i][s], 1.0)], 0.0);
                m.add_ge(format!("stop[g{i},{h}]"), vec![(x[s], 1.0), (x[s - 1], -1.0), (vars.shutdown[i][s], 1.0)], 0.0);
                m.add_row(format!("ramp[g{i},{h}]"), vec![(p[s], 1.0), (p[s - 1], -1.0)], -g.ramp_down, g.ramp_up);
                for r in s + 1..(s + g.min_up as usize).min(hours) {
                    m.add_le(format!("minup[g{i},{h},{}]", r + 1), vec![(x[s], 1.0), (x[s - 1], -1.0), (x[r], -1.0)], 0.0);
                }
                for r in s + 1..(s + g.min_down as usize).min(hours) {
                    m.add_le(format!("mindn[g{i},{h},{}]", r + 1), vec![(x[s - 1], 1.0), (x[s], -1.0), (x[r], 1.0)], 1.0);
                }
            }
        }

        if let Some(cp) = coupling {
            self.add_coupling(&mut m, &mut vars, day as u32, cp);
        }
        (m, vars)
    }

    fn add_coupling(&self, m: &mut ModelSpec, vars: &mut DayVars, day: u32, cp: &Coupling<'_>) {
        let last = cp.days + 1;
        for (j, &c) in cp.maintainable.iter().enumerate() {
            let cols: Vec<VarId> = (1..=last)
                .map(|t| m.add_var(format!("v[{j},{t}]"), 0.0, 1.0, 0.0))
                .collect();
            m.add_eq(format!("assign[{j}]"), cols.iter().map(|&v| (v, 1.0)).collect(), 1.0);
            let xi = cp.failure_days[j];
            let (pred, corr) = cp.durations.for_class(c.class());
            let pred_terms: Vec<(VarId, f64)> = (0..pred)
                .filter(|e| day > *e && day - e < xi)
                .map(|e| (cols[(day - e - 1) as usize], 1.0))
                .collect();
            let in_corr = xi <= cp.days && xi <= day && day < xi + corr;
            let before: Vec<(VarId, f64)> = (1..xi).map(|t| (cols[t as usize - 1], 1.0)).collect();
            let units: Vec<VarId> = match c {
                ComponentId::Gen(i) => vars.commit[i].clone(),
                ComponentId::Line(l) => vars.switch[l].clone().expect("maintainable lines are switchable"),
            };
            for (s, &z) in units.iter().enumerate() {
                if !pred_terms.is_empty() {
                    let mut t = vec![(z, 1.0)];
                    t.extend(&pred_terms);
                    m.add_le(format!("pred[{j},{}]", s + 1), t, 1.0);
                }
                if in_corr {
                    let mut t = vec![(z, 1.0)];
                    t.extend(before.iter().map(|&(v, _)| (v, -1.0)));
                    m.add_le(format!("corr[{j},{}]", s + 1), t, 0.0);
                }
                if c.class() == ComponentClass::Line {
                    let mut t = vec![(z, 1.0)];
                    t.extend(&pred_terms);
                    let mut rhs = 1.0;
                    if in_corr {
                        t.extend(before.iter().map(|&(v, _)| (v, -1.0)));
                        rhs = 0.0;
                    }
                    m.add_ge(format!("inservice[{j},{}]", s + 1), t, rhs);
                }
            }
            vars.assign.push(cols);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayOutcome {
    pub objective: f64,
    pub bound: f64,
    pub curtailed_mwh: f64,
    pub energy_mwh: f64,
}

/// Solves one day of operations given component availability.
pub fn solve_subproblem(
    ctx: &DayContext<'_>,
    day: usize,
    avail: &Availability,
    backend: &dyn Backend,
    params: &SolveParams,
) -> Result<DayOutcome, UcError> {
    let (model, vars) = ctx.build(day, avail, None);
    let out = backend.solve(&model, params)?;
    match out.status {
        SolveStatus::Optimal | SolveStatus::Limit if out.has_solution() => {}
        SolveStatus::Infeasible => return Err(UcError::Infeasible(day)),
        SolveStatus::Unbounded => return Err(UcError::Unbounded(day)),
        _ => return Err(UcError::Limit(day)),
    }
    let sum = |cols: &Vec<Vec<VarId>>| -> f64 { cols.iter().flatten().map(|v| out.values[v.0]).sum() };
    Ok(DayOutcome {
        objective: out.objective,
        bound: out.bound,
        curtailed_mwh: sum(&vars.curtail),
        energy_mwh: sum(&vars.output),
    })
}

/// Optimal value of the day's relaxation with continuous maintenance
/// assignments; a lower bound on the day cost under every schedule.
pub fn lp_lower_bound(
    ctx: &DayContext<'_>,
    day: usize,
    coupling: &Coupling<'_>,
    backend: &dyn Backend,
    params: &SolveParams,
) -> Result<f64, UcError> {
    let (model, _) = ctx.build(day, &Availability::all(ctx.net), Some(coupling));
    let out = backend.solve(&model, params)?;
    match out.status {
        SolveStatus::Optimal => Ok(out.objective),
        SolveStatus::Infeasible => Err(UcError::Infeasible(day)),
        SolveStatus::Unbounded => Err(UcError::Unbounded(day)),
        SolveStatus::Limit => Err(UcError::Limit(day)),
    }
}
