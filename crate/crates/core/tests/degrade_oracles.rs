use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use proptest::prelude::*;

use gridmaint::degrade::{posterior_drift, rld, DegradationPriors, InverseGaussian, SignalObservations};

fn q(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

/// Posterior mean of the drift from the joint Gaussian posterior of
/// amplitude and drift, in exact arithmetic. The first reading has mean
/// `a + b t1` and variance `sigma^2 t1`; each later increment over `dt` has
/// mean `b dt` and variance `sigma^2 dt`.
fn exact_drift(p: &DegradationPriors, obs: &SignalObservations) -> f64 {
    let n = obs.increments.len();
    let s2 = q(p.sigma) * q(p.sigma);
    let (k0, k1) = (q(p.kappa0) * q(p.kappa0), q(p.kappa1) * q(p.kappa1));
    let t1 = q(obs.t_first);
    let span = q(obs.t_obs) - &t1;
    let dt = if n > 1 { span / BigRational::from_integer(BigInt::from(n - 1)) } else { BigRational::zero() };

    // Precision matrix [[paa, pab], [pab, pbb]] and right-hand side.
    let mut paa = k0.recip();
    let mut pab = BigRational::zero();
    let mut pbb = k1.recip();
    let mut ra = q(p.mu0) / &k0;
    let mut rb = q(p.mu1) / &k1;
    let d1 = q(obs.increments[0]);
    if !t1.is_zero() {
        let w = (&s2 * &t1).recip();
        paa += &w;
        pab += &w * &t1;
        pbb += &w * &t1 * &t1;
        ra += &w * &d1;
        rb += &w * &t1 * &d1;
    }
    if !dt.is_zero() {
        for inc in &obs.increments[1..] {
            let w = (&s2 * &dt).recip();
            pbb += &w * &dt * &dt;
            rb += &w * &dt * q(*inc);
        }
    }
    let det = &paa * &pbb - &pab * &pab;
    let b = (&paa * &rb - &pab * &ra) / det;
    b.to_f64().unwrap()
}

#[test]
fn posterior_matches_exact_gaussian_update() {
    let p = DegradationPriors::generator_default();
    let obs = SignalObservations {
        increments: vec![24.5, 5.25, 4.75, 6.0, 5.5],
        t_first: 1.0,
        t_obs: 5.0,
    };
    let got = posterior_drift(&p, &obs).unwrap();
    let want = exact_drift(&p, &obs);
    assert!((got - want).abs() <= 1e-12 * want.abs(), "{got} vs {want}");
}

#[test]
fn known_amplitude_closed_form() {
    let p = DegradationPriors {
        kappa0: 0.0,
        ..DegradationPriors::line_default()
    };
    let obs = SignalObservations {
        increments: vec![18.0, 3.5, 2.5, 3.0],
        t_first: 1.0,
        t_obs: 4.0,
    };
    let (k1, s2) = (p.kappa1 * p.kappa1, p.sigma * p.sigma);
    let total: f64 = obs.increments.iter().sum();
    let want = (k1 * (total - p.mu0) + p.mu1 * s2) / (k1 * obs.t_obs + s2);
    let got = posterior_drift(&p, &obs).unwrap();
    assert!((got - want).abs() <= 1e-13 * want.abs());
}

fn ig_pdf(mean: f64, shape: f64, x: f64) -> f64 {
    (shape / (2.0 * std::f64::consts::PI * x * x * x)).sqrt() * (-shape * (x - mean).powi(2) / (2.0 * mean * mean * x)).exp()
}

/// Composite Simpson rule on `[0, x]`; the density vanishes at zero.
fn ig_cdf_by_quadrature(mean: f64, shape: f64, x: f64) -> f64 {
    let n = 20_000;
    let h = x / n as f64;
    let f = |t: f64| if t <= 0.0 { 0.0 } else { ig_pdf(mean, shape, t) };
    let mut s = f(0.0) + f(x);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    s * h / 3.0
}

#[test]
fn inverse_gaussian_cdf_matches_quadrature() {
    for (mean, shape) in [(16.0, 711.0), (2.0, 5.0), (3.5, 12.0), (0.8, 40.0), (10.0, 3.0)] {
        let ig = InverseGaussian { mean, shape };
        for frac in [0.25, 0.5, 0.9, 1.0, 1.5, 3.0] {
            let x = mean * frac;
            let got = ig.cdf(x);
            let want = ig_cdf_by_quadrature(mean, shape, x);
            assert!((got - want).abs() < 1e-8, "IG({mean},{shape}) at {x}: {got} vs {want}");
        }
    }
}

#[test]
fn residual_life_mean_and_shape() {
    let p = DegradationPriors::generator_default();
    let obs = SignalObservations {
        increments: vec![40.0, 5.0, 5.0],
        t_first: 1.0,
        t_obs: 3.0,
    };
    let r = rld(&p, &obs, 5.0).unwrap();
    assert_eq!(r.dist.mean, 10.0);
    assert_eq!(r.dist.shape, 50.0 * 50.0 / 9.0);
    assert_eq!(r.observed_at, 3.0);
}

proptest! {
    #[test]
    fn posterior_agrees_with_exact_update(
        amp in 5.0f64..40.0,
        steps in prop::collection::vec(0.0f64..10.0, 1..12),
        t_first in 0.5f64..3.0,
        dt in 0.25f64..2.0,
        kappa0 in 0.5f64..12.0,
        kappa1 in 0.05f64..2.0,
        sigma in 0.2f64..4.0,
    ) {
        let p = DegradationPriors { kappa0, kappa1, sigma, ..DegradationPriors::generator_default() };
        let mut increments = vec![amp];
        increments.extend(&steps);
        let obs = SignalObservations { increments, t_first, t_obs: t_first + dt * steps.len() as f64 };
        let got = posterior_drift(&p, &obs).unwrap();
        let want = exact_drift(&p, &obs);
        prop_assert!((got - want).abs() <= 1e-9 * want.abs().max(1.0), "{} vs {}", got, want);
    }

    #[test]
    fn ig_cdf_is_monotone(mean in 0.5f64..30.0, shape in 0.5f64..1000.0, a in 0.0f64..60.0, b in 0.0f64..60.0) {
        let ig = InverseGaussian { mean, shape };
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(ig.cdf(lo) <= ig.cdf(hi) + 1e-15);
        prop_assert!((0.0..=1.0).contains(&ig.cdf(hi)));
    }
}
