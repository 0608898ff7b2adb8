//! The decomposition loop: a master problem over maintenance assignments,
//! a reliability check on each proposal, per-day operational subproblems
//! with a status cache, and optimality cuts fed back to the master.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::caseio::{
    schedule_to_csv, CaseError, ChanceMode, ComponentId, CutFamily, DemandGrid, Granularity, Network, ProductHandling,
    RunConfig,
};
use crate::chance::{separate, soc_outer_cut, MasterVar, SafeApproximation};
use crate::degrade::{select_subset, DegradeError, FailureModel, Partition, ScenarioSet};
use crate::mastercuts::{
    class_durations, maintenance_coefficients, optimality_cuts, MasterProblem, RecourseLayout, RecourseValues,
};
use crate::pboracle::{MaintenanceSchedule, OracleError, ReliabilityOracle, SuccessProbTable};
use crate::preflow::RedundancyReport;
use crate::solver::{Backend, SolveParams, SolverError};
use crate::ucmodel::{lp_lower_bound, solve_subproblem, status_vector, Availability, Coupling, DayContext, DayOutcome, StatusVector, UcError};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Subproblem(#[from] UcError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Degrade(#[from] DegradeError),
    #[error("no maintenance schedule satisfies the reliability requirement")]
    Infeasible,
    #[error("{0}")]
    Input(String),
}

/// Network, demand, configuration and residual lives of every component.
#[derive(Clone, Debug)]
pub struct Instance {
    pub net: Network,
    pub demand: DemandGrid,
    pub config: RunConfig,
    /// One entry per network component, in `Network::components` order.
    pub failure: FailureModel,
    pub filter: Option<RedundancyReport>,
}

impl Instance {
    pub fn new(net: Network, demand: DemandGrid, config: RunConfig, failure: FailureModel) -> Result<Self, PlanError> {
        config.validate()?;
        net.validate()?;
        if failure.components != net.components() {
            return Err(PlanError::Input("failure model must list every network component in order".into()));
        }
        if demand.days != config.horizon.days || demand.hours != config.horizon.hours || demand.buses != net.buses.len() {
            return Err(PlanError::Input(format!(
                "demand grid is {}x{}x{}, horizon needs {}x{}x{}",
                demand.days,
                demand.hours,
                demand.buses,
                config.horizon.days,
                config.horizon.hours,
                net.buses.len()
            )));
        }
        Ok(Self {
            net,
            demand,
            config,
            failure,
            filter: None,
        })
    }

    pub fn days(&self) -> u32 {
        self.config.horizon.days as u32
    }

    pub fn partition(&self) -> Partition {
        select_subset(
            &self.failure,
            self.days(),
            self.config.subset.gen_threshold,
            self.config.subset.line_threshold,
        )
    }

    pub fn table(&self) -> SuccessProbTable {
        self.failure.success_table(self.days())
    }

    pub fn context(&self) -> DayContext<'_> {
        DayContext {
            net: &self.net,
            demand: &self.demand,
            filter: self.filter.as_ref(),
        }
    }

    pub fn rho(&self) -> (usize, usize) {
        self.config.rho(&self.net)
    }
}

/// Loop settings, normally taken from the run configuration.
#[derive(Clone, Debug)]
pub struct PlanOptions {
    pub mode: ChanceMode,
    pub product: ProductHandling,
    pub cuts: CutFamily,
    pub granularity: Granularity,
    pub epsilon: f64,
    pub max_iterations: usize,
    pub time_limit: Option<f64>,
    pub threads: usize,
    pub seed: u64,
}

impl PlanOptions {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            mode: cfg.chance.mode,
            product: cfg.chance.product,
            cuts: cfg.solver.cuts,
            granularity: cfg.solver.granularity,
            epsilon: cfg.solver.epsilon,
            max_iterations: cfg.solver.max_iterations,
            time_limit: cfg.solver.time_limit,
            threads: cfg.solver.threads,
            seed: cfg.seed,
        }
    }

    fn validate(&self) -> Result<(), PlanError> {
        if self.cuts == CutFamily::OptKTPlusPlus && self.granularity != Granularity::PerScenarioDay {
            return Err(PlanError::Input("optKT++ cuts need per-scenario-day granularity".into()));
        }
        if !(self.epsilon > 0.0) || self.threads == 0 {
            return Err(PlanError::Input("epsilon must be positive and threads at least 1".into()));
        }
        Ok(())
    }

    /// Relative gap for operational subproblems.
    pub fn subproblem_params(&self) -> SolveParams {
        SolveParams {
            rel_gap: (self.epsilon / 10.0).min(1e-6),
            threads: Some(1),
            seed: self.seed,
            ..SolveParams::default()
        }
    }
}

/// Day outcomes keyed by the availability of a fixed list of tracked
/// components. Components outside the list are always available.
#[derive(Clone, Debug)]
pub struct StatusCache {
    pub tracked: Vec<ComponentId>,
    days: Vec<HashMap<StatusVector, DayOutcome>>,
    pub solved: usize,
    pub hits: usize,
}

impl StatusCache {
    pub fn new(tracked: Vec<ComponentId>, days: usize) -> Self {
        Self {
            tracked,
            days: vec![HashMap::new(); days],
            solved: 0,
            hits: 0,
        }
    }

    /// Distinct status vectors seen on `day` (1-based).
    pub fn distinct(&self, day: usize) -> usize {
        self.days[day - 1].len()
    }

    pub fn get(&self, day: usize, status: &StatusVector) -> Option<&DayOutcome> {
        self.days[day - 1].get(status)
    }

    /// Outcomes for every `(day, status)` request, solving only vectors not
    /// seen before. Repeats inside one batch count as hits.
    pub fn resolve(
        &mut self,
        requests: &[(usize, StatusVector)],
        ctx: &DayContext<'_>,
        backend: &dyn Backend,
        params: &SolveParams,
        pool: &rayon::ThreadPool,
    ) -> Result<Vec<DayOutcome>, UcError> {
        let mut fresh: Vec<(usize, StatusVector)> = Vec::new();
        for (day, s) in requests {
            if !self.days[day - 1].contains_key(s) && !fresh.iter().any(|(d, f)| d == day && f == s) {
                fresh.push((*day, s.clone()));
            }
        }
        let net = ctx.net;
        let tracked = &self.tracked;
        let outcomes: Vec<DayOutcome> = pool.install(|| {
            fresh
                .par_iter()
                .map(|(day, s)| {
                    let avail = Availability::from_status(net, tracked, s);
                    solve_subproblem(ctx, *day, &avail, backend, params)
                })
                .collect::<Result<_, _>>()
        })?;
        self.solved += fresh.len();
        self.hits += requests.len() - fresh.len();
        for ((day, s), out) in fresh.into_iter().zip(outcomes) {
            self.days[day - 1].insert(s, out);
        }
        Ok(requests
            .iter()
            .map(|(day, s)| self.days[day - 1][s].clone())
            .collect())
    }
}

pub fn thread_pool(threads: usize) -> Result<rayon::ThreadPool, PlanError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| PlanError::Input(e.to_string()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PlanStatus {
    Optimal,
    IterationLimit,
    TimeLimit,
    /// The master repeated a proposal without producing new cuts.
    Stalled,
}

#[derive(Clone, Debug, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub reliability: Option<f64>,
    pub chance_cuts: usize,
    pub optimality_cuts: usize,
    pub subproblems_solved: usize,
    pub cache_hits: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct PlanReport {
    pub status: PlanStatus,
    pub maintainable: Vec<ComponentId>,
    pub schedule: BTreeMap<ComponentId, u32>,
    pub schedule_hash: String,
    pub objective: f64,
    pub lower_bound: f64,
    pub gap: f64,
    pub maintenance_cost: f64,
    pub operating_cost: f64,
    pub reliability: Option<f64>,
    pub iterations: usize,
    pub chance_cuts: usize,
    pub tangent_cuts: usize,
    pub optimality_cuts: usize,
    pub subproblems_solved: usize,
    pub cache_hits: usize,
    /// Distinct status vectors per day at termination.
    pub distinct_status: Vec<usize>,
    pub seconds: f64,
    pub history: Vec<IterationRecord>,
    #[serde(skip)]
    pub periods: MaintenanceSchedule,
}

impl PlanReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

pub fn schedule_hash(schedule: &BTreeMap<ComponentId, u32>) -> String {
    let digest = Sha256::digest(schedule_to_csv(schedule).as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn relative_gap(ub: f64, lb: f64) -> f64 {
    if !ub.is_finite() {
        return f64::INFINITY;
    }
    ((ub - lb) / ub.abs().max(1e-10)).max(0.0)
}

/// Expected maintenance cost of every `(component, period)` pair.
pub fn expected_costs(net: &Network, maintainable: &[ComponentId], scenarios: &ScenarioSet) -> Result<Vec<Vec<f64>>, PlanError> {
    let last = scenarios.days + 1;
    maintainable
        .iter()
        .enumerate()
        .map(|(h, &c)| {
            let cost = net
                .maintenance_cost(c)
                .ok_or_else(|| PlanError::Input(format!("no maintenance cost for {c}")))?;
            let mut row = vec![0.0; last as usize];
            for (k, xi) in scenarios.failure_days.iter().enumerate() {
                for (acc, c) in row.iter_mut().zip(maintenance_coefficients(cost, xi[h], last)) {
                    *acc += scenarios.probabilities[k] * c;
                }
            }
            Ok(row)
        })
        .collect()
}

/// Relaxation bounds `[k][day-1]`, sharing solves between scenarios with
/// identical failure days.
pub fn recourse_lower_bounds(
    instance: &Instance,
    maintainable: &[ComponentId],
    scenarios: &ScenarioSet,
    backend: &dyn Backend,
    params: &SolveParams,
    pool: &rayon::ThreadPool,
) -> Result<Vec<Vec<f64>>, UcError> {
    let days = instance.config.horizon.days;
    let mut distinct: Vec<&Vec<u32>> = scenarios.failure_days.iter().collect();
    distinct.sort();
    distinct.dedup();
    let jobs: Vec<(usize, usize)> = (0..distinct.len())
        .flat_map(|i| (1..=days).map(move |t| (i, t)))
        .collect();
    let ctx = instance.context();
    let durations = instance.config.durations;
    let values: Vec<f64> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, t)| {
                let coupling = Coupling {
                    maintainable,
                    failure_days: distinct[i],
                    durations: &durations,
                    days: days as u32,
                };
                lp_lower_bound(&ctx, t, &coupling, backend, params)
            })
            .collect::<Result<_, _>>()
    })?;
    let lookup: HashMap<&Vec<u32>, usize> = distinct.iter().enumerate().map(|(i, xi)| (*xi, i)).collect();
    Ok(scenarios
        .failure_days
        .iter()
        .map(|xi| {
            let i = lookup[xi];
            (0..days).map(|t| values[i * days + t]).collect()
        })
        .collect())
}

/// Runs the decomposition on `scenarios`, whose columns must cover the
/// instance's maintainable components.
pub fn plan(
    instance: &Instance,
    scenarios: &ScenarioSet,
    opts: &PlanOptions,
    backend: &dyn Backend,
) -> Result<PlanReport, PlanError> {
    opts.validate()?;
    let start = Instant::now();
    let elapsed = || start.elapsed().as_secs_f64();
    let days = instance.config.horizon.days;
    let last = days as u32 + 1;
    let maintainable = instance.partition().selected;
    let scenarios = scenarios.restrict(&maintainable)?;
    if scenarios.is_empty() || scenarios.days != days as u32 {
        return Err(PlanError::Input("scenario set is empty or has the wrong horizon".into()));
    }
    let n_scen = scenarios.len();
    let classes: Vec<_> = maintainable.iter().map(|c| c.class()).collect();
    let durations = class_durations(&classes, &instance.config.durations);
    let table = instance.table();
    let (rho_gen, rho_line) = instance.rho();
    let alpha = instance.config.chance.alpha;
    let oracle = ReliabilityOracle {
        table: &table,
        maintainable: &maintainable,
        rho_gen,
        rho_line,
    };
    let safe = SafeApproximation {
        table: &table,
        maintainable: &maintainable,
        rho_gen,
        rho_line,
        alpha,
    };
    let pool = thread_pool(opts.threads)?;
    let sub_params = opts.subproblem_params();
    let ctx = instance.context();

    let lower = recourse_lower_bounds(instance, &maintainable, &scenarios, backend, &sub_params, &pool)?;
    let layout = RecourseLayout {
        granularity: opts.granularity,
        scenarios: n_scen,
        days,
    };
    let pi = &scenarios.probabilities;
    let (weights, bounds): (Vec<f64>, Vec<f64>) = match opts.granularity {
        Granularity::Single => (
            vec![1.0],
            vec![(0..n_scen).map(|k| pi[k] * lower[k].iter().sum::<f64>()).sum()],
        ),
        Granularity::PerScenario => (0..n_scen).map(|k| (pi[k], lower[k].iter().sum::<f64>())).unzip(),
        Granularity::PerScenarioDay => (0..n_scen)
            .flat_map(|k| (0..days).map(move |t| (k, t)))
            .map(|(k, t)| (pi[k], lower[k][t]))
            .unzip(),
    };
    let costs = expected_costs(&instance.net, &maintainable, &scenarios)?;
    let mut master = MasterProblem::new(costs.clone(), last, layout, weights, bounds);
    if opts.mode == ChanceMode::Safe {
        master.safe_rows = safe.rows();
        if opts.product == ProductHandling::ConicBackend {
            if backend.supports_cones() {
                master.cone_level = Some(1.0 - alpha);
            } else {
                log::warn!(
                    "backend {} has no conic support; using tangent outer approximation",
                    backend.name()
                );
            }
        }
    }

    let mut cache = StatusCache::new(maintainable.clone(), days);
    let mut history = Vec::new();
    let mut lb = f64::NEG_INFINITY;
    let mut ub = f64::INFINITY;
    let mut incumbent: Option<(MaintenanceSchedule, f64, f64)> = None;
    let mut tangent_cuts = 0;
    let mut status = PlanStatus::IterationLimit;
    let mut iteration = 0;
    while iteration < opts.max_iterations {
        iteration += 1;
        let mut params = SolveParams {
            rel_gap: opts.epsilon / 10.0,
            abs_gap: 1e-9,
            seed: opts.seed,
            threads: Some(opts.threads),
            ..SolveParams::default()
        };
        if let Some(limit) = opts.time_limit {
            let left = limit - elapsed();
            if left <= 0.0 {
                status = PlanStatus::TimeLimit;
                break;
            }
            params.time_limit = Some(left);
        }
        let Some(sol) = master.solve(backend, &params)? else {
            return Err(PlanError::Infeasible);
        };
        lb = lb.max(sol.bound);
        let schedule = sol.schedule;
        let mut reliability = None;
        let mut new_cut = false;
        let mut accepted = true;
        match opts.mode {
            ChanceMode::Exact => {
                let sep = separate(&schedule, &oracle, alpha)?;
                reliability = Some(sep.probability);
                if let Some(cut) = sep.cut {
                    accepted = false;
                    new_cut |= master.chance_cuts.insert(cut);
                }
            }
            ChanceMode::Safe => {
                let (x, y) = safe.loads(&schedule);
                reliability = Some(oracle.probability(&schedule)?);
                if !safe.accepts(&schedule) {
                    accepted = false;
                    if let Some(cut) = soc_outer_cut(x, y, alpha) {
                        if master.outer_cuts.insert(cut.to_master_cut()) {
                            tangent_cuts += 1;
                            new_cut = true;
                        }
                    }
                }
            }
            ChanceMode::None => {}
        }

        if accepted {
            let requests: Vec<(usize, StatusVector)> = (0..n_scen)
                .flat_map(|k| (1..=days).map(move |t| (k, t)))
                .map(|(k, t)| {
                    let s = status_vector(
                        &schedule,
                        &scenarios.failure_days[k],
                        t as u32,
                        &maintainable,
                        &instance.config.durations,
                        days as u32,
                    );
                    (t, s)
                })
                .collect();
            let outcomes = cache.resolve(&requests, &ctx, backend, &sub_params, &pool)?;
            let q: Vec<Vec<f64>> = outcomes
                .chunks(days)
                .map(|c| c.iter().map(|o| o.objective).collect())
                .collect();
            let maint: f64 = schedule
                .periods
                .iter()
                .enumerate()
                .map(|(h, &m)| costs[h][m as usize - 1])
                .sum();
            let ops: f64 = (0..n_scen).map(|k| pi[k] * q[k].iter().sum::<f64>()).sum();
            if maint + ops < ub {
                ub = maint + ops;
                incumbent = Some((schedule.clone(), maint, ops));
            }
            let values = RecourseValues { q: &q, l: &lower };
            for cut in optimality_cuts(opts.cuts, &layout, &schedule, &scenarios.failure_days, pi, &values, &durations) {
                let value = |v: MasterVar| match v {
                    MasterVar::Assign { h, period } => f64::from(u8::from(schedule.periods[h] == period)),
                    MasterVar::Recourse(r) => sol.recourse[r],
                    _ => 0.0,
                };
                let violated = cut.violation(value) > 1e-9 * cut.rhs.abs().max(1.0);
                if violated && master.optimality_cuts.insert(cut) {
                    new_cut = true;
                }
            }
        }

        history.push(IterationRecord {
            iteration,
            lower_bound: lb,
            upper_bound: ub,
            reliability,
            chance_cuts: master.chance_cuts.len(),
            optimality_cuts: master.optimality_cuts.len(),
            subproblems_solved: cache.solved,
            cache_hits: cache.hits,
            seconds: elapsed(),
        });
        log::info!(
            "iter {iteration} lb {lb:.6} ub {ub:.6} gap {:.3e} cuts {}/{} solved {} hits {}",
            relative_gap(ub, lb),
            master.chance_cuts.len(),
            master.optimality_cuts.len(),
            cache.solved,
            cache.hits
        );
        if relative_gap(ub, lb) <= opts.epsilon {
            status = PlanStatus::Optimal;
            break;
        }
        if !new_cut {
            status = if incumbent.is_some() && lb >= ub - 1e-9 * ub.abs().max(1.0) {
                PlanStatus::Optimal
            } else {
                PlanStatus::Stalled
            };
            break;
        }
    }

    let (periods, maintenance_cost, operating_cost) = incumbent.ok_or(PlanError::Infeasible)?;
    let schedule: BTreeMap<ComponentId, u32> = maintainable.iter().copied().zip(periods.periods.iter().copied()).collect();
    let reliability = match opts.mode {
        ChanceMode::None => None,
        _ => Some(oracle.probability(&periods)?),
    };
    Ok(PlanReport {
        status,
        schedule_hash: schedule_hash(&schedule),
        maintainable,
        schedule,
        objective: ub,
        lower_bound: lb.min(ub),
        gap: relative_gap(ub, lb),
        maintenance_cost,
        operating_cost,
        reliability,
        iterations: iteration,
        chance_cuts: master.chance_cuts.len(),
        tangent_cuts,
        optimality_cuts: master.optimality_cuts.len(),
        subproblems_solved: cache.solved,
        cache_hits: cache.hits,
        distinct_status: (1..=days).map(|t| cache.distinct(t)).collect(),
        seconds: elapsed(),
        history,
        periods,
    })
}
