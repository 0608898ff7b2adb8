//! Degradation signals, Bayesian drift updates, residual-life distributions
//! and failure-scenario sampling.
//!
//! A component's signal follows `D(t) = amplitude + drift * t + sigma * W(t)`
//! with Gaussian priors on the initial amplitude and the drift. It fails when
//! the signal first reaches the threshold.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::caseio::{ComponentClass, ComponentId};
use crate::pboracle::SuccessProbTable;

#[derive(Debug, Error, PartialEq)]
pub enum DegradeError {
    #[error("invalid priors: {0}")]
    InvalidPriors(String),
    #[error("invalid observations: {0}")]
    InvalidObservations(String),
    #[error("posterior denominator vanishes")]
    DegeneratePosterior,
    #[error("component has non-positive drift and is treated as non-degrading")]
    NonDegrading,
    #[error("signal already reached the failure threshold")]
    AlreadyFailed,
    #[error("scenario data: {0}")]
    Scenario(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DegradationPriors {
    /// Mean and standard deviation of the initial amplitude.
    pub mu0: f64,
    pub kappa0: f64,
    /// Mean and standard deviation of the drift.
    pub mu1: f64,
    pub kappa1: f64,
    /// Diffusion coefficient.
    pub sigma: f64,
    /// Failure threshold.
    pub threshold: f64,
}

impl DegradationPriors {
    pub fn generator_default() -> Self {
        Self {
            mu0: 20.0,
            kappa0: 10.0,
            mu1: 5.0,
            kappa1: 0.3,
            sigma: 3.0,
            threshold: 100.0,
        }
    }

    pub fn line_default() -> Self {
        Self {
            mu0: 15.0,
            kappa0: 5.0,
            mu1: 3.0,
            kappa1: 0.3,
            sigma: 1.0,
            threshold: 100.0,
        }
    }

    pub fn validate(&self) -> Result<(), DegradeError> {
        let all = [self.mu0, self.kappa0, self.mu1, self.kappa1, self.sigma, self.threshold];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(DegradeError::InvalidPriors("non-finite value".into()));
        }
        if self.kappa0 < 0.0 || self.kappa1 < 0.0 || self.sigma < 0.0 {
            return Err(DegradeError::InvalidPriors("negative spread".into()));
        }
        Ok(())
    }
}

/// Signal readings of one component. `increments[0]` is the reading at
/// `t_first`; each later entry is the change over one further time step,
/// so the sum is the reading at `t_obs`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalObservations {
    pub increments: Vec<f64>,
    pub t_first: f64,
    pub t_obs: f64,
}

impl SignalObservations {
    pub fn first(&self) -> f64 {
        self.increments[0]
    }

    pub fn total(&self) -> f64 {
        self.increments.iter().sum()
    }

    pub fn validate(&self) -> Result<(), DegradeError> {
        if self.increments.is_empty() {
            return Err(DegradeError::InvalidObservations("no readings".into()));
        }
        if self.increments.iter().any(|v| !v.is_finite()) {
            return Err(DegradeError::InvalidObservations("non-finite reading".into()));
        }
        if !(self.t_first >= 0.0 && self.t_obs >= self.t_first) {
            return Err(DegradeError::InvalidObservations("need 0 <= t_first <= t_obs".into()));
        }
        Ok(())
    }
}

/// Posterior mean of the drift given the readings.
pub fn posterior_drift(priors: &DegradationPriors, obs: &SignalObservations) -> Result<f64, DegradeError> {
    priors.validate()?;
    obs.validate()?;
    let k0 = priors.kappa0 * priors.kappa0;
    let k1 = priors.kappa1 * priors.kappa1;
    let s2 = priors.sigma * priors.sigma;
    let (t1, tk) = (obs.t_first, obs.t_obs);
    let (d1, total) = (obs.first(), obs.total());
    let a = k0 + s2 * t1;
    let num = (k1 * total + priors.mu1 * s2) * a - k1 * (d1 * k0 + priors.mu0 * s2 * t1);
    let den = a * (k1 * tk + s2) - k0 * k1 * t1;
    if den.abs() <= f64::EPSILON * (a * (k1 * tk + s2)).abs().max(f64::MIN_POSITIVE) {
        return Err(DegradeError::DegeneratePosterior);
    }
    Ok(num / den)
}

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// `ln Phi(z)`, accurate far into the lower tail.
pub fn ln_normal_cdf(z: f64) -> f64 {
    if z > -30.0 {
        return normal_cdf(z).ln();
    }
    let z2 = z * z;
    let series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2);
    -0.5 * z2 - (-z).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + series.ln()
}

/// Inverse Gaussian with the given mean and shape. An infinite shape is a
/// point mass at the mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InverseGaussian {
    pub mean: f64,
    pub shape: f64,
}

impl InverseGaussian {
    pub fn cdf(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        if x.is_infinite() {
            return 1.0;
        }
        if self.shape.is_infinite() {
            return if x >= self.mean { 1.0 } else { 0.0 };
        }
        let a = (self.shape / x).sqrt();
        let first = normal_cdf(a * (x / self.mean - 1.0));
        let second = (2.0 * self.shape / self.mean + ln_normal_cdf(-a * (x / self.mean + 1.0))).exp();
        (first + second).clamp(0.0, 1.0)
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) || self.shape.is_infinite() {
            return 0.0;
        }
        let l = self.shape;
        let d = x - self.mean;
        (l / (2.0 * std::f64::consts::PI * x.powi(3))).sqrt()
            * (-l * d * d / (2.0 * self.mean * self.mean * x)).exp()
    }
}

/// Remaining-life distribution, measured from the last reading.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentRld {
    pub dist: InverseGaussian,
    pub observed_at: f64,
}

pub fn rld(priors: &DegradationPriors, obs: &SignalObservations, drift: f64) -> Result<ComponentRld, DegradeError> {
    if !(drift > 0.0) {
        return Err(DegradeError::NonDegrading);
    }
    let margin = priors.threshold - obs.total();
    if margin <= 0.0 {
        return Err(DegradeError::AlreadyFailed);
    }
    let shape = if priors.sigma == 0.0 {
        f64::INFINITY
    } else {
        margin * margin / (priors.sigma * priors.sigma)
    };
    Ok(ComponentRld {
        dist: InverseGaussian {
            mean: margin / drift,
            shape,
        },
        observed_at: obs.t_obs,
    })
}

/// Convenience: posterior drift then residual life. `Ok(None)` marks a
/// non-degrading component.
pub fn rld_from_observations(
    priors: &DegradationPriors,
    obs: &SignalObservations,
) -> Result<Option<ComponentRld>, DegradeError> {
    let drift = posterior_drift(priors, obs)?;
    match rld(priors, obs, drift) {
        Ok(r) => Ok(Some(r)),
        Err(DegradeError::NonDegrading) => Ok(None),
        Err(e) => Err(e),
    }
}

pub fn failure_prob_within(rld: &ComponentRld, horizon: f64) -> f64 {
    rld.dist.cdf(horizon)
}

/// Residual lives for a set of components; `None` never fails.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureModel {
    pub components: Vec<ComponentId>,
    pub rlds: Vec<Option<ComponentRld>>,
}

impl FailureModel {
    pub fn new(components: Vec<ComponentId>, rlds: Vec<Option<ComponentRld>>) -> Self {
        assert_eq!(components.len(), rlds.len());
        Self { components, rlds }
    }

    pub fn position(&self, c: ComponentId) -> Option<usize> {
        self.components.iter().position(|&x| x == c)
    }

    /// `P(failure day <= t)` for `t = 1..=days`.
    pub fn cumulative(&self, h: usize, days: u32) -> Vec<f64> {
        (1..=days)
            .map(|t| self.rlds[h].map_or(0.0, |r| failure_prob_within(&r, f64::from(t))))
            .collect()
    }

    pub fn p_fail(&self, h: usize, days: u32) -> f64 {
        self.rlds[h].map_or(0.0, |r| failure_prob_within(&r, f64::from(days)))
    }

    pub fn success_table(&self, days: u32) -> SuccessProbTable {
        let within = (0..self.components.len())
            .map(|h| self.cumulative(h, days))
            .collect();
        SuccessProbTable::new(self.components.clone(), days, within).expect("CDF values lie in [0, 1]")
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Partition {
    pub selected: Vec<ComponentId>,
    pub unselected: Vec<ComponentId>,
}

/// Components whose failure probability within the horizon exceeds their
/// class threshold are selected for scheduling.
pub fn select_subset(model: &FailureModel, days: u32, gen_threshold: f64, line_threshold: f64) -> Partition {
    let mut part = Partition::default();
    for (h, &c) in model.components.iter().enumerate() {
        let thr = match c.class() {
            ComponentClass::Generator => gen_threshold,
            ComponentClass::Line => line_threshold,
        };
        if model.rlds[h].is_some() && model.p_fail(h, days) > thr {
            part.selected.push(c);
        } else {
            part.unselected.push(c);
        }
    }
    part
}

/// Failure day per scenario and component; `days + 1` means no failure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    pub components: Vec<ComponentId>,
    pub days: u32,
    pub failure_days: Vec<Vec<u32>>,
    pub probabilities: Vec<f64>,
}

impl ScenarioSet {
    pub fn len(&self) -> usize {
        self.failure_days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.failure_days.is_empty()
    }

    /// One scenario in which nothing fails.
    pub fn no_failure(components: Vec<ComponentId>, days: u32) -> Self {
        let n = components.len();
        Self {
            components,
            days,
            failure_days: vec![vec![days + 1; n]],
            probabilities: vec![1.0],
        }
    }

    /// Column subset in the given order.
    pub fn restrict(&self, components: &[ComponentId]) -> Result<Self, DegradeError> {
        let cols: Vec<usize> = components
            .iter()
            .map(|c| {
                self.components
                    .iter()
                    .position(|x| x == c)
                    .ok_or_else(|| DegradeError::Scenario(format!("no column for {c}")))
            })
            .collect::<Result<_, _>>()?;
        Ok(Self {
            components: components.to_vec(),
            days: self.days,
            failure_days: self
                .failure_days
                .iter()
                .map(|row| cols.iter().map(|&j| row[j]).collect())
                .collect(),
            probabilities: self.probabilities.clone(),
        })
    }

    pub fn failure_day(&self, k: usize, c: ComponentId) -> Option<u32> {
        self.components
            .iter()
            .position(|&x| x == c)
            .map(|j| self.failure_days[k][j])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("component,k,xi\n");
        for (k, row) in self.failure_days.iter().enumerate() {
            for (c, xi) in self.components.iter().zip(row) {
                let _ = writeln!(s, "{c},{},{xi}", k + 1);
            }
        }
        s
    }

    /// Reads `component,k,xi` records with equal scenario weights.
    pub fn from_csv(text: &str, days: u32) -> Result<Self, DegradeError> {
        #[derive(Deserialize)]
        struct Rec {
            component: String,
            k: usize,
            xi: u32,
        }
        let err = |m: String| DegradeError::Scenario(m);
        let mut components: Vec<ComponentId> = Vec::new();
        let mut cells: Vec<(usize, usize, u32)> = Vec::new();
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        for rec in rdr.deserialize::<Rec>() {
            let rec = rec.map_err(|e| err(e.to_string()))?;
            let c: ComponentId = rec.component.parse().map_err(|e: crate::caseio::CaseError| err(e.to_string()))?;
            if rec.k < 1 || rec.xi < 1 || rec.xi > days + 1 {
                return Err(err(format!("bad record for {c}: k={} xi={}", rec.k, rec.xi)));
            }
            let j = match components.iter().position(|&x| x == c) {
                Some(j) => j,
                None => {
                    components.push(c);
                    components.len() - 1
                }
            };
            cells.push((rec.k - 1, j, rec.xi));
        }
        let n = cells.iter().map(|c| c.0 + 1).max().unwrap_or(0);
        let mut rows = vec![vec![0u32; components.len()]; n];
        for (k, j, xi) in cells {
            if rows[k][j] != 0 {
                return Err(err(format!("duplicate record k={} component {}", k + 1, components[j])));
            }
            rows[k][j] = xi;
        }
        if rows.iter().flatten().any(|&x| x == 0) {
            return Err(err("every scenario needs a value for every component".into()));
        }
        Ok(Self {
            components,
            days,
            failure_days: rows,
            probabilities: vec![1.0 / n.max(1) as f64; n],
        })
    }
}

/// Draws `n` equally likely scenarios. Each component owns an independent
/// random stream derived from `seed`, so adding components leaves the
/// draws of the others unchanged.
pub fn sample_scenarios(
    model: &FailureModel,
    components: &[ComponentId],
    n: usize,
    days: u32,
    seed: u64,
) -> Result<ScenarioSet, DegradeError> {
    let mut columns = Vec::with_capacity(components.len());
    for &c in components {
        let h = model
            .position(c)
            .ok_or_else(|| DegradeError::Scenario(format!("no residual life for {c}")))?;
        let cum = model.cumulative(h, days);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id(c));
        let col: Vec<u32> = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                cum.iter()
                    .position(|&f| u < f)
                    .map_or(days + 1, |t| t as u32 + 1)
            })
            .collect();
        columns.push(col);
    }
    Ok(ScenarioSet {
        components: components.to_vec(),
        days,
        failure_days: (0..n)
            .map(|k| columns.iter().map(|col| col[k]).collect())
            .collect(),
        probabilities: vec![1.0 / n.max(1) as f64; n],
    })
}

fn stream_id(c: ComponentId) -> u64 {
    match c {
        ComponentId::Gen(i) => 2 * i as u64,
        ComponentId::Line(i) => 2 * i as u64 + 1,
    }
}

/// Path on the grid `t_i = i * dt`, stopped at the first crossing.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedSignal {
    pub dt: f64,
    pub levels: Vec<f64>,
    pub amplitude: f64,
    pub drift: f64,
    pub failure_time: Option<f64>,
}

impl SimulatedSignal {
    /// Readings from grid index `first` through `last`.
    pub fn observed(&self, first: usize, last: usize) -> SignalObservations {
        let mut inc = vec![self.levels[first]];
        inc.extend((first + 1..=last).map(|i| self.levels[i] - self.levels[i - 1]));
        SignalObservations {
            increments: inc,
            t_first: first as f64 * self.dt,
            t_obs: last as f64 * self.dt,
        }
    }

    /// The full path as a run-to-failure record, first reading at time zero.
    pub fn completed(&self) -> Option<CompletedSignal> {
        self.failure_time.map(|ft| CompletedSignal {
            observations: self.observed(0, self.levels.len() - 1),
            failure_time: ft,
        })
    }
}

/// Draws amplitude and drift from the priors and integrates the signal
/// until it reaches the threshold or `max_time` passes.
pub fn simulate_signal(priors: &DegradationPriors, dt: f64, max_time: f64, seed: u64) -> Result<SimulatedSignal, DegradeError> {
    priors.validate()?;
    if !(dt > 0.0) {
        return Err(DegradeError::InvalidPriors("time step must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = Normal::new(priors.mu0, priors.kappa0).expect("validated").sample(&mut rng);
    let drift = Normal::new(priors.mu1, priors.kappa1).expect("validated").sample(&mut rng);
    let noise = priors.sigma * dt.sqrt();
    let mut levels = vec![amp];
    let mut level = amp;
    let mut failure = (level >= priors.threshold).then_some(0.0);
    let steps = (max_time / dt).ceil() as usize;
    let mut i = 0;
    while failure.is_none() && i < steps {
        i += 1;
        let z: f64 = StandardNormal.sample(&mut rng);
        level += drift * dt + noise * z;
        levels.push(level);
        if level >= priors.threshold {
            failure = Some(i as f64 * dt);
        }
    }
    Ok(SimulatedSignal {
        dt,
        levels,
        amplitude: amp,
        drift,
        failure_time: failure,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompletedSignal {
    pub observations: SignalObservations,
    pub failure_time: f64,
}

/// Point estimates of the amplitude and drift means from run-to-failure
/// records; the spreads and threshold are taken from `known`.
pub fn estimate_priors(corpus: &[CompletedSignal], known: &DegradationPriors) -> Result<DegradationPriors, DegradeError> {
    if corpus.is_empty() {
        return Err(DegradeError::InvalidObservations("empty corpus".into()));
    }
    let mut amp = 0.0;
    let mut drift = 0.0;
    for s in corpus {
        s.observations.validate()?;
        if !(s.failure_time > 0.0) {
            return Err(DegradeError::InvalidObservations("failure time must be positive".into()));
        }
        let first = s.observations.first();
        amp += first;
        drift += (s.observations.total() - first) / s.failure_time;
    }
    let n = corpus.len() as f64;
    Ok(DegradationPriors {
        mu0: amp / n,
        mu1: drift / n,
        ..*known
    })
}
