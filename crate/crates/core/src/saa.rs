//! Sample average approximation with statistical bounds, out-of-sample
//! evaluation of schedules, and the no-failure baseline.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::caseio::{ChanceMode, ComponentClass, ComponentId, SaaConfig};
use crate::decomp::{plan, thread_pool, Instance, PlanError, PlanOptions, PlanReport, StatusCache};
use crate::degrade::{sample_scenarios, ScenarioSet};
use crate::mastercuts::maintenance_coefficients;
use crate::solver::Backend;
use crate::ucmodel::{component_available, StatusVector};

/// Out-of-sample performance of one schedule.
#[derive(Clone, Debug, Serialize)]
pub struct EvalReport {
    pub scenarios: usize,
    /// Mean corrective events among scheduled generators.
    pub failures_selected_gens: f64,
    pub failures_selected_lines: f64,
    /// Mean corrective events among components never scheduled.
    pub failures_unselected: f64,
    /// Share of scenarios whose corrective counts exceed a class budget.
    pub violation_frequency: f64,
    pub generator_maintenance: f64,
    pub line_maintenance: f64,
    pub operations: f64,
    pub total: f64,
    pub curtailed_mwh: f64,
    pub subproblems_solved: usize,
    pub cache_hits: usize,
    /// Cost of each test scenario.
    pub scenario_totals: Vec<f64>,
}

/// Evaluates a schedule on scenarios over every component. Components
/// missing from `schedule` are treated as unscheduled.
pub fn evaluate_schedule(
    instance: &Instance,
    schedule: &BTreeMap<ComponentId, u32>,
    test: &ScenarioSet,
    opts: &PlanOptions,
    backend: &dyn Backend,
) -> Result<EvalReport, PlanError> {
    let days = instance.config.horizon.days;
    let last = days as u32 + 1;
    let comps = instance.net.components();
    let test = test.restrict(&comps)?;
    if test.days != days as u32 || test.is_empty() {
        return Err(PlanError::Input("test scenarios are empty or have the wrong horizon".into()));
    }
    for (c, &m) in schedule {
        if !comps.contains(c) {
            return Err(PlanError::Input(format!("unknown component {c} in schedule")));
        }
        if m < 1 || m > last {
            return Err(PlanError::Input(format!("period {m} for {c} outside 1..={last}")));
        }
    }
    let selected = instance.partition().selected;
    let periods: Vec<u32> = comps.iter().map(|c| schedule.get(c).copied().unwrap_or(last)).collect();
    let costs: Vec<_> = comps
        .iter()
        .map(|&c| {
            instance
                .net
                .maintenance_cost(c)
                .ok_or_else(|| PlanError::Input(format!("no maintenance cost for {c}")))
        })
        .collect::<Result<_, _>>()?;
    let durations: Vec<(u32, u32)> = comps.iter().map(|c| instance.config.durations.for_class(c.class())).collect();
    let (rho_gen, rho_line) = instance.rho();

    let mut requests = Vec::with_capacity(test.len() * days);
    let mut per_scenario = Vec::with_capacity(test.len());
    let (mut f_gen, mut f_line, mut f_other, mut violations) = (0.0, 0.0, 0.0, 0.0);
    let (mut gm, mut tlm) = (0.0, 0.0);
    for (k, xi) in test.failure_days.iter().enumerate() {
        let pk = test.probabilities[k];
        let (mut gens, mut lines) = (0usize, 0usize);
        let mut maint = 0.0;
        for (j, &c) in comps.iter().enumerate() {
            if xi[j] <= days as u32 && periods[j] >= xi[j] {
                match (selected.contains(&c), c.class()) {
                    (true, ComponentClass::Generator) => f_gen += pk,
                    (true, ComponentClass::Line) => f_line += pk,
                    (false, _) => f_other += pk,
                }
                match c.class() {
                    ComponentClass::Generator => gens += 1,
                    ComponentClass::Line => lines += 1,
                }
            }
            let cost = maintenance_coefficients(costs[j], xi[j], last)[periods[j] as usize - 1];
            maint += cost;
            match c.class() {
                ComponentClass::Generator => gm += pk * cost,
                ComponentClass::Line => tlm += pk * cost,
            }
        }
        if gens > rho_gen || lines > rho_line {
            violations += pk;
        }
        per_scenario.push(maint);
        for t in 1..=days {
            let status = StatusVector(
                (0..comps.len())
                    .map(|j| component_available(periods[j], xi[j], t as u32, durations[j], days as u32))
                    .collect(),
            );
            requests.push((t, status));
        }
    }

    let pool = thread_pool(opts.threads)?;
    let mut cache = StatusCache::new(comps.clone(), days);
    let outcomes = cache.resolve(&requests, &instance.context(), backend, &opts.subproblem_params(), &pool)?;
    let (mut ops, mut curtailed) = (0.0, 0.0);
    for (k, day_out) in outcomes.chunks(days).enumerate() {
        let pk = test.probabilities[k];
        let q: f64 = day_out.iter().map(|o| o.objective).sum();
        ops += pk * q;
        curtailed += pk * day_out.iter().map(|o| o.curtailed_mwh).sum::<f64>();
        per_scenario[k] += q;
    }
    Ok(EvalReport {
        scenarios: test.len(),
        failures_selected_gens: f_gen,
        failures_selected_lines: f_line,
        failures_unselected: f_other,
        violation_frequency: violations,
        generator_maintenance: gm,
        line_maintenance: tlm,
        operations: ops,
        total: gm + tlm + ops,
        curtailed_mwh: curtailed,
        subproblems_solved: cache.solved,
        cache_hits: cache.hits,
        scenario_totals: per_scenario,
    })
}

/// Plans as if nothing fails: one failure-free scenario and no
/// reliability requirement.
pub fn deterministic_baseline(instance: &Instance, opts: &PlanOptions, backend: &dyn Backend) -> Result<PlanReport, PlanError> {
    let selected = instance.partition().selected;
    let scenarios = ScenarioSet::no_failure(selected, instance.days());
    let opts = PlanOptions {
        mode: ChanceMode::None,
        ..opts.clone()
    };
    plan(instance, &scenarios, &opts, backend)
}

/// `(mean, standard error)` with the `1 / (n (n - 1))` variance
/// convention; the error is zero for a single value.
pub fn mean_and_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    // Deviations from the first value keep constant samples exact.
    let shift = values.first().copied().unwrap_or(0.0);
    let offset = values.iter().map(|v| v - shift).sum::<f64>() / n;
    let mean = shift + offset;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - shift - offset).powi(2)).sum();
    (mean, (ss / (n * (n - 1.0))).sqrt())
}

/// Two-sided normal quantile `z_{a/2}`.
pub fn normal_quantile(significance: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - significance / 2.0)
}

/// Two-sided Student quantile `t_{a/2, df}`.
pub fn student_quantile(significance: f64, df: f64) -> f64 {
    StudentsT::new(0.0, 1.0, df)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - significance / 2.0)
}

#[derive(Clone, Debug, Serialize)]
pub struct Replicate {
    pub index: usize,
    /// Optimal value of the sampled problem, or `None` when it failed.
    pub objective: Option<f64>,
    pub schedule: Option<BTreeMap<ComponentId, u32>>,
    /// Out-of-sample estimate of the schedule's cost.
    pub evaluated: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Interval {
    pub low: f64,
    pub high: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SaaReport {
    pub replicates: Vec<Replicate>,
    pub best: usize,
    pub best_schedule: BTreeMap<ComponentId, u32>,
    pub upper_mean: f64,
    pub upper_error: f64,
    pub lower_mean: f64,
    pub lower_error: f64,
    pub upper_interval: Interval,
    pub lower_interval: Interval,
    pub objective_interval: Interval,
    /// `(upper high - lower low) / upper high`.
    pub gap: f64,
    pub evaluation: EvalReport,
}

/// Assembles the bounds from replicate objectives and the test-scenario
/// costs of the chosen schedule.
pub fn saa_bounds(lower: &[f64], upper_costs: &[f64], significance: f64) -> (f64, f64, f64, f64, Interval, Interval) {
    let (mu_l, sd_l) = mean_and_error(lower);
    let (mu_u, sd_u) = mean_and_error(upper_costs);
    let t = student_quantile(significance, (lower.len() as f64 - 1.0).max(1.0));
    let z = normal_quantile(significance);
    (
        mu_u,
        sd_u,
        mu_l,
        sd_l,
        Interval {
            low: mu_u - z * sd_u,
            high: mu_u + z * sd_u,
        },
        Interval {
            low: mu_l - t * sd_l,
            high: mu_l + t * sd_l,
        },
    )
}

/// Draws `n` scenarios for the listed components with the given seed.
pub type Sampler<'a> = dyn Fn(&[ComponentId], usize, u64) -> Result<ScenarioSet, PlanError> + Sync + 'a;

/// Sampler backed by the instance's residual-life model.
pub fn model_sampler(instance: &Instance) -> impl Fn(&[ComponentId], usize, u64) -> Result<ScenarioSet, PlanError> + Sync + '_ {
    move |comps, n, seed| Ok(sample_scenarios(&instance.failure, comps, n, instance.days(), seed)?)
}

pub fn run_saa(
    instance: &Instance,
    cfg: &SaaConfig,
    opts: &PlanOptions,
    backend: &dyn Backend,
    sampler: &Sampler<'_>,
) -> Result<SaaReport, PlanError> {
    if cfg.replicates < 2 || cfg.scenarios < 1 || cfg.test_scenarios < cfg.scenarios {
        return Err(PlanError::Input("need replicates >= 2, scenarios >= 1 and test scenarios >= scenarios".into()));
    }
    let comps = instance.net.components();
    let selected = instance.partition().selected;
    let test = sampler(&comps, cfg.test_scenarios, opts.seed)?;
    let pool = thread_pool(opts.threads)?;
    let inner = PlanOptions {
        threads: 1,
        ..opts.clone()
    };
    let mut replicates: Vec<Replicate> = pool.install(|| {
        (0..cfg.replicates)
            .into_par_iter()
            .map(|i| {
                let seed = opts.seed.wrapping_add(1 + i as u64);
                let result = sampler(&selected, cfg.scenarios, seed).and_then(|s| plan(instance, &s, &inner, backend));
                match result {
                    Ok(r) => Replicate {
                        index: i,
                        objective: Some(r.objective),
                        schedule: Some(r.schedule),
                        evaluated: None,
                        error: None,
                    },
                    Err(e) => {
                        log::warn!("replicate {i} failed: {e}");
                        Replicate {
                            index: i,
                            objective: None,
                            schedule: None,
                            evaluated: None,
                            error: Some(e.to_string()),
                        }
                    }
                }
            })
            .collect()
    });
    let ok = replicates.iter().filter(|r| r.objective.is_some()).count();
    if ok < 2 {
        return Err(PlanError::Input(format!("only {ok} replicates succeeded; at least 2 are needed")));
    }
    let mut best: Option<(usize, EvalReport)> = None;
    for r in replicates.iter_mut() {
        let Some(schedule) = &r.schedule else { continue };
        let eval = evaluate_schedule(instance, schedule, &test, opts, backend)?;
        r.evaluated = Some(eval.total);
        if best.as_ref().is_none_or(|(_, b)| eval.total < b.total) {
            best = Some((r.index, eval));
        }
    }
    let (best, evaluation) = best.expect("at least two replicates succeeded");
    let lower: Vec<f64> = replicates.iter().filter_map(|r| r.objective).collect();
    let (upper_mean, upper_error, lower_mean, lower_error, upper_interval, lower_interval) =
        saa_bounds(&lower, &evaluation.scenario_totals, cfg.significance);
    let objective_interval = Interval {
        low: lower_interval.low,
        high: upper_interval.high,
    };
    let gap = (objective_interval.high - objective_interval.low) / objective_interval.high.abs().max(1e-10);
    Ok(SaaReport {
        best_schedule: replicates[best].schedule.clone().expect("best replicate has a schedule"),
        replicates,
        best,
        upper_mean,
        upper_error,
        lower_mean,
        lower_error,
        upper_interval,
        lower_interval,
        objective_interval,
        gap,
        evaluation,
    })
}

/// Side-by-side evaluation of a stochastic schedule and the baseline.
#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    pub stochastic: EvalReport,
    pub deterministic: EvalReport,
    /// Saving relative to the baseline's cost.
    pub saving_vs_baseline: f64,
    /// Saving relative to the stochastic schedule's cost.
    pub saving_vs_stochastic: f64,
}

pub fn compare(stochastic: EvalReport, deterministic: EvalReport) -> Comparison {
    let diff = deterministic.total - stochastic.total;
    Comparison {
        saving_vs_baseline: diff / deterministic.total.abs().max(1e-10),
        saving_vs_stochastic: diff / stochastic.total.abs().max(1e-10),
        stochastic,
        deterministic,
    }
}

/// CSV rows mirroring the failure and cost comparison tables.
pub fn comparison_csv(rows: &[(&str, &EvalReport)]) -> String {
    let mut s = String::from(
        "model,failures_gen,failures_line,failures_other,violation_frequency,gm,tlm,operations,total\n",
    );
    for (name, r) in rows {
        s.push_str(&format!(
            "{name},{},{},{},{},{},{},{},{}\n",
            r.failures_selected_gens,
            r.failures_selected_lines,
            r.failures_unselected,
            r.violation_frequency,
            r.generator_maintenance,
            r.line_maintenance,
            r.operations,
            r.total
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_table_values() {
        assert!((student_quantile(0.05, 4.0) - 2.776445105).abs() < 1e-8);
        assert!((normal_quantile(0.05) - 1.959963985).abs() < 1e-8);
    }

    #[test]
    fn identical_values_have_zero_error() {
        let (m, e) = mean_and_error(&[3.0; 5]);
        assert_eq!((m, e), (3.0, 0.0));
        assert_eq!(mean_and_error(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn bounds_use_t_for_lower_and_z_for_upper() {
        let (mu_u, sd_u, mu_l, sd_l, up, lo) = saa_bounds(&[1.0, 2.0, 3.0], &[2.0, 4.0], 0.05);
        assert_eq!((mu_u, mu_l), (3.0, 2.0));
        assert!((sd_u - 1.0).abs() < 1e-15);
        assert!((sd_l - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((up.high - (3.0 + normal_quantile(0.05))).abs() < 1e-12);
        assert!((lo.low - (2.0 - student_quantile(0.05, 2.0) * sd_l)).abs() < 1e-12);
    }
}
