//! Synthetic residual lives for test and demonstration instances.
//!
//! Class priors are estimated from simulated run-to-failure signals. Each
//! component then gets one fresh signal, read from time 1 up to a random
//! observation time drawn uniformly on `[1, (threshold - mu0) / (mu1 + 3 kappa1)]`,
//! and its residual life follows from the posterior drift.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::caseio::{ComponentClass, ComponentId, Network};
use crate::degrade::{
    estimate_priors, rld_from_observations, simulate_signal, ComponentRld, DegradationPriors, DegradeError,
    FailureModel, SignalObservations,
};

/// The IEEE 9-bus case with linear generation costs.
pub const CASE9: &str = "
function mpc = case9
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	345	1	1.1	0.9;
	2	2	0	0	0	0	1	1	0	345	1	1.1	0.9;
	3	2	0	0	0	0	1	1	0	345	1	1.1	0.9;
	4	1	0	0	0	0	1	1	0	345	1	1.1	0.9;
	5	1	90	30	0	0	1	1	0	345	1	1.1	0.9;
	6	1	0	0	0	0	1	1	0	345	1	1.1	0.9;
	7	1	100	35	0	0	1	1	0	345	1	1.1	0.9;
	8	1	0	0	0	0	1	1	0	345	1	1.1	0.9;
	9	1	125	50	0	0	1	1	0	345	1	1.1	0.9;
];
mpc.gen = [
	1	72.3	27.03	300	-300	1.04	100	1	250	10	0	0	0	0	0	0	0	0	0	0	0;
	2	163	6.54	300	-300	1.025	100	1	300	10	0	0	0	0	0	0	0	0	0	0	0;
	3	85	-10.95	300	-300	1.025	100	1	270	10	0	0	0	0	0	0	0	0	0	0	0;
];
mpc.branch = [
	1	4	0	0.0576	0	250	250	250	0	0	1	-360	360;
	4	5	0.017	0.092	0.158	250	250	250	0	0	1	-360	360;
	5	6	0.039	0.17	0.358	150	150	150	0	0	1	-360	360;
	3	6	0	0.0586	0	300	300	300	0	0	1	-360	360;
	6	7	0.0119	0.1008	0.209	150	150	150	0	0	1	-360	360;
	7	8	0.0085	0.072	0.149	250	250	250	0	0	1	-360	360;
	8	2	0	0.0625	0	250	250	250	0	0	1	-360	360;
	8	9	0.032	0.161	0.306	250	250	250	0	0	1	-360	360;
	9	4	0.01	0.085	0.176	250	250	250	0	0	1	-360	360;
];
mpc.gencost = [
	2	1500	0	2	5	150;
	2	2000	0	2	1.2	600;
	2	3000	0	2	1	335;
];
";

/// Default reading step for synthetic signals.
pub const DEFAULT_STEP: f64 = 1.0;
/// Signals per class used to estimate the class priors.
pub const CORPUS_SIZE: usize = 100;

/// Longest plausible observation time: the signal is caught while it is
/// still drifting towards the threshold.
pub fn observation_window(priors: &DegradationPriors) -> (f64, f64) {
    let hi = (priors.threshold - priors.mu0) / (priors.mu1 + 3.0 * priors.kappa1);
    (1.0, hi.max(1.0))
}

/// Estimates class priors from `n` simulated run-to-failure signals.
pub fn estimate_class_priors(truth: &DegradationPriors, n: usize, seed: u64) -> Result<DegradationPriors, DegradeError> {
    let horizon = 100.0 * truth.threshold / truth.mu1.max(1e-6);
    let mut corpus = Vec::with_capacity(n);
    let mut draw = seed;
    while corpus.len() < n {
        let sig = simulate_signal(truth, DEFAULT_STEP, horizon, draw)?;
        draw = draw.wrapping_add(0x9e37_79b9_7f4a_7c15);
        if let Some(done) = sig.completed() {
            corpus.push(done);
        }
    }
    estimate_priors(&corpus, truth)
}

/// One component's readings and residual life; signals that cross the
/// threshold before the observation time are redrawn.
pub fn synth_component(
    truth: &DegradationPriors,
    estimated: &DegradationPriors,
    seed: u64,
) -> Result<(SignalObservations, Option<ComponentRld>), DegradeError> {
    let (lo, hi) = observation_window(truth);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..1000 {
        let t_obs: f64 = if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let last = (t_obs / DEFAULT_STEP).floor().max(1.0) as usize;
        let sig = simulate_signal(truth, DEFAULT_STEP, last as f64 * DEFAULT_STEP, rng.random())?;
        if sig.failure_time.is_some() || sig.levels.len() <= last {
            continue;
        }
        let obs = sig.observed(1, last);
        let life = rld_from_observations(estimated, &obs)?;
        return Ok((obs, life));
    }
    Err(DegradeError::InvalidPriors("could not draw a signal that survives to its observation time".into()))
}

/// Residual lives for every component of `net`, in `Network::components`
/// order.
pub fn synth_failure_model(
    net: &Network,
    gen: &DegradationPriors,
    line: &DegradationPriors,
    seed: u64,
) -> Result<FailureModel, DegradeError> {
    let est_gen = estimate_class_priors(gen, CORPUS_SIZE, seed)?;
    let est_line = estimate_class_priors(line, CORPUS_SIZE, seed ^ 0x5555_5555)?;
    let comps = net.components();
    let rlds = comps
        .iter()
        .map(|&c| {
            let (truth, est) = match c.class() {
                ComponentClass::Generator => (gen, &est_gen),
                ComponentClass::Line => (line, &est_line),
            };
            synth_component(truth, est, component_seed(seed, c)).map(|(_, r)| r)
        })
        .collect::<Result<_, _>>()?;
    Ok(FailureModel::new(comps, rlds))
}

fn component_seed(seed: u64, c: ComponentId) -> u64 {
    let tag = match c {
        ComponentId::Gen(i) => 2 * i as u64,
        ComponentId::Line(i) => 2 * i as u64 + 1,
    };
    seed.wrapping_mul(0x2545_f491_4f6c_dd1d).wrapping_add(tag.wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caseio::parse_case;

    #[test]
    fn case9_parses() {
        let net = parse_case(CASE9).unwrap();
        assert_eq!((net.buses.len(), net.generators.len(), net.lines.len()), (9, 3, 9));
        assert!(net.is_connected());
    }

    #[test]
    fn observation_window_of_generator_priors() {
        let (lo, hi) = observation_window(&DegradationPriors::generator_default());
        assert_eq!(lo, 1.0);
        assert!((hi - 80.0 / 5.9).abs() < 1e-12);
    }

    #[test]
    fn synthetic_model_is_seeded() {
        let net = parse_case(CASE9).unwrap();
        let g = DegradationPriors::generator_default();
        let l = DegradationPriors::line_default();
        let a = synth_failure_model(&net, &g, &l, 7).unwrap();
        let b = synth_failure_model(&net, &g, &l, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.components.len(), 12);
        assert!(a.rlds.iter().all(|r| r.is_some()));
    }
}
