//! Fixtures and independent reference computations shared by the
//! integration tests.
#![allow(dead_code)]

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use gridmaint::caseio::{
    parse_case, synth_demand, ComponentClass, ComponentId, DemandShape, Network, RunConfig,
};
use gridmaint::decomp::Instance;
use gridmaint::degrade::{sample_scenarios, ComponentRld, FailureModel, InverseGaussian, ScenarioSet};
use gridmaint::pboracle::MaintenanceSchedule;
use gridmaint::ucmodel::Availability;
use gridmaint::solver::{Backend, HighsBackend, ModelSpec, ObjSense, SolveParams, SolveStatus, VarId};

pub struct Toy {
    pub instance: Instance,
    pub scenarios: ScenarioSet,
    pub maintainable: Vec<ComponentId>,
}

/// A random network of two or three buses, two or three generators and a
/// chain of lines (plus a closing line on three buses).
pub fn toy_case(rng: &mut ChaCha8Rng) -> String {
    let nb = rng.random_range(2..=3usize);
    let ng = rng.random_range(2..=3usize);
    let mut s = String::from("mpc.baseMVA = 100;\nmpc.bus = [\n");
    for b in 1..=nb {
        let pd = if b == 1 { 0.0 } else { rng.random_range(20.0..80.0f64).round() };
        let kind = if b == 1 { 3 } else { 1 };
        let _ = writeln!(s, "{b} {kind} {pd} 0 0 0 1 1 0 100 1 1.1 0.9;");
    }
    s.push_str("];\nmpc.gen = [\n");
    let mut ext = String::from("mpc.gen_ext = [\n");
    let mut cost = String::from("mpc.gencost = [\n");
    for g in 0..ng {
        let bus = if g == 0 { 1 } else { rng.random_range(1..=nb) };
        let pmax = rng.random_range(50.0..120.0f64).round();
        let pmin = rng.random_range(0.0..15.0f64).round();
        let _ = writeln!(s, "{bus} 0 0 0 0 1 100 1 {pmax} {pmin} 0 0 0 0 0 0 0 0 0 0 0;");
        let ramp = (0.7 * pmax).round();
        let mu = rng.random_range(1..=2);
        let md = rng.random_range(1..=2);
        let _ = writeln!(ext, "{ramp} {ramp} {mu} {md} -1 -1;");
        let c1 = rng.random_range(10.0..40.0f64).round();
        let c0 = rng.random_range(0.0..60.0f64).round();
        let su = rng.random_range(0.0..120.0f64).round();
        let _ = writeln!(cost, "2 {su} 0 2 {c1} {c0};");
    }
    s.push_str("];\nmpc.branch = [\n");
    let mut pairs: Vec<(usize, usize)> = (1..nb).map(|b| (b, b + 1)).collect();
    if nb == 3 {
        pairs.push((1, 3));
    }
    for (f, t) in pairs {
        let x = rng.random_range(0.05..0.2f64);
        let rate = rng.random_range(40.0..110.0f64).round();
        let _ = writeln!(s, "{f} {t} 0 {x:.4} 0 {rate} 0 0 0 0 1 -360 360;");
    }
    s.push_str("];\n");
    s.push_str(&cost);
    s.push_str("];\n");
    s.push_str(&ext);
    s.push_str("];\n");
    s
}

#[derive(Clone, Copy, Debug)]
pub struct ToySize {
    pub days: usize,
    pub hours: usize,
    pub scenarios: usize,
    pub maintainable: usize,
    pub rho: (usize, usize),
}

impl Default for ToySize {
    fn default() -> Self {
        Self {
            days: 3,
            hours: 4,
            scenarios: 4,
            maintainable: 3,
            rho: (0, 0),
        }
    }
}

/// A toy instance whose reliability requirement sits between the best and
/// the worst schedule, so it usually binds.
pub fn toy(seed: u64, size: ToySize) -> Toy {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = parse_case(&toy_case(&mut rng)).expect("toy case parses");
    net.fill_default_maintenance_costs(size.hours);
    let comps = net.components();
    let mut picks: Vec<usize> = (0..comps.len()).collect();
    for i in (1..picks.len()).rev() {
        let j = rng.random_range(0..=i);
        picks.swap(i, j);
    }
    picks.truncate(size.maintainable.min(comps.len()));
    let rlds: Vec<Option<ComponentRld>> = (0..comps.len())
        .map(|j| {
            picks.contains(&j).then(|| ComponentRld {
                dist: InverseGaussian {
                    mean: rng.random_range(1.0..3.0),
                    shape: rng.random_range(3.0..15.0),
                },
                observed_at: 0.0,
            })
        })
        .collect();
    let failure = FailureModel::new(comps.clone(), rlds);
    let mut cfg = RunConfig::default();
    cfg.seed = seed;
    cfg.horizon.days = size.days;
    cfg.horizon.hours = size.hours;
    cfg.chance.rho_gen = Some(size.rho.0);
    cfg.chance.rho_line = Some(size.rho.1);
    cfg.solver.epsilon = 1e-9;
    cfg.subset.gen_threshold = 0.0;
    cfg.subset.line_threshold = 0.0;
    let demand = synth_demand(&net, &DemandShape::weekly(size.days, size.hours), 0.1, seed);
    let mut instance = Instance::new(net, demand, cfg, failure).expect("toy instance is valid");
    let maintainable = instance.partition().selected;
    let days = size.days as u32;
    let probs: Vec<f64> = MaintenanceSchedule::enumerate(maintainable.len(), days + 1)
        .iter()
        .map(|v| brute_force_reliability(&instance, &maintainable, v))
        .collect();
    let best = probs.iter().cloned().fold(0.0, f64::max);
    let worst = probs.iter().cloned().fold(1.0, f64::min);
    instance.config.chance.alpha = (1.0 - 0.5 * (best + worst)).clamp(1e-3, 0.999);
    let scenarios = sample_scenarios(&instance.failure, &maintainable, size.scenarios, days, seed ^ 0xabcd)
        .expect("scenarios sample");
    Toy {
        instance,
        scenarios,
        maintainable,
    }
}

/// Failure probability by the horizon's end for component `j` of the
/// network when maintained in `period` (unscheduled: end of horizon).
pub fn failure_by(instance: &Instance, j: usize, period: u32) -> f64 {
    let days = instance.config.horizon.days as u32;
    instance.failure.rlds[j].map_or(0.0, |r| r.dist.cdf(f64::from(period.min(days))))
}

/// Reliability of a schedule by enumerating every failure pattern.
pub fn brute_force_reliability(instance: &Instance, maintainable: &[ComponentId], v: &MaintenanceSchedule) -> f64 {
    let days = instance.config.horizon.days as u32;
    let (rho_gen, rho_line) = instance.rho();
    let comps = instance.net.components();
    let risky: Vec<(ComponentClass, f64)> = comps
        .iter()
        .enumerate()
        .map(|(j, c)| {
            let period = maintainable.iter().position(|x| x == c).map_or(days + 1, |h| v.periods[h]);
            (c.class(), failure_by(instance, j, period))
        })
        .filter(|(_, p)| *p > 0.0)
        .collect();
    let mut total = 0.0;
    for mask in 0u64..(1u64 << risky.len()) {
        let mut p = 1.0;
        let (mut g, mut l) = (0, 0);
        for (i, (class, q)) in risky.iter().enumerate() {
            if mask >> i & 1 == 1 {
                p *= q;
                match class {
                    ComponentClass::Generator => g += 1,
                    ComponentClass::Line => l += 1,
                }
            } else {
                p *= 1.0 - q;
            }
        }
        if g <= rho_gen && l <= rho_line {
            total += p;
        }
    }
    total
}

/// Distribution of a sum of Bernoullis by enumerating all outcomes.
pub fn brute_force_pmf(probs: &[f64]) -> Vec<f64> {
    let n = probs.len();
    let mut pmf = vec![0.0; n + 1];
    for mask in 0u64..(1u64 << n) {
        let mut p = 1.0;
        for (i, q) in probs.iter().enumerate() {
            p *= if mask >> i & 1 == 1 { *q } else { 1.0 - q };
        }
        pmf[mask.count_ones() as usize] += p;
    }
    pmf
}

/// Maintenance periods that leave a component out of service on `day`.
fn outage_periods(m_pred: u32, m_corr: u32, xi: u32, day: u32, days: u32) -> Vec<u32> {
    let last = days + 1;
    let mut out: Vec<u32> = (1..xi.min(last + 1))
        .filter(|&t| t <= day && day < t + m_pred)
        .collect();
    if xi <= days && xi <= day && day < xi + m_corr {
        out.extend(xi..=last);
    }
    out
}

/// Network availability on `day`, worked out from the outage windows.
pub fn availability(instance: &Instance, maintainable: &[ComponentId], periods: &[u32], xi: &[u32], day: u32) -> Availability {
    let days = instance.config.horizon.days as u32;
    let mut a = Availability::all(&instance.net);
    for (h, &c) in maintainable.iter().enumerate() {
        let (pred, corr) = instance.config.durations.for_class(c.class());
        let down = outage_periods(pred, corr, xi[h], day, days).contains(&periods[h]);
        a.set(c, !down);
    }
    a
}

/// Monolithic MILP over all scenarios and days with the given schedules
/// excluded. Returns the optimal value and periods.
pub fn extensive_form(
    instance: &Instance,
    maintainable: &[ComponentId],
    scenarios: &ScenarioSet,
    excluded: &[MaintenanceSchedule],
) -> Option<(f64, Vec<u32>)> {
    let net: &Network = &instance.net;
    let days = instance.config.horizon.days as u32;
    let hours = instance.config.horizon.hours;
    let last = days + 1;
    let mut m = ModelSpec::new(ObjSense::Minimize);

    let v: Vec<Vec<VarId>> = maintainable
        .iter()
        .enumerate()
        .map(|(h, _)| (1..=last).map(|t| m.add_binary(format!("v{h}_{t}"), 0.0)).collect())
        .collect();
    for (h, row) in v.iter().enumerate() {
        m.add_eq(format!("one{h}"), row.iter().map(|&x| (x, 1.0)).collect(), 1.0);
    }
    for (e, s) in excluded.iter().enumerate() {
        let terms = s.periods.iter().enumerate().map(|(h, &p)| (v[h][p as usize - 1], 1.0)).collect();
        m.add_le(format!("nogood{e}"), terms, maintainable.len() as f64 - 1.0);
    }
    // Maintenance costs enter the objective through per-scenario weights.
    let mut vcost = vec![vec![0.0; last as usize]; maintainable.len()];

    for (k, xi) in scenarios.failure_days.iter().enumerate() {
        let pk = scenarios.probabilities[k];
        for (h, &c) in maintainable.iter().enumerate() {
            let mc = net.maintenance_cost(c).unwrap();
            for t in 1..xi[h] {
                vcost[h][t as usize - 1] += pk * mc.predictive;
            }
            if xi[h] != last {
                for t in xi[h]..=last {
                    vcost[h][t as usize - 1] += pk * mc.corrective;
                }
            }
        }
        for day in 1..=days {
            let down: Vec<Vec<u32>> = maintainable
                .iter()
                .enumerate()
                .map(|(h, c)| {
                    let d = instance.config.durations.for_class(c.class());
                    outage_periods(d.0, d.1, xi[h], day, days)
                })
                .collect();
            let tag = format!("k{k}d{day}");
            let mut x = vec![vec![VarId(0); hours]; net.generators.len()];
            let mut p = x.clone();
            for (i, g) in net.generators.iter().enumerate() {
                for s in 0..hours {
                    x[i][s] = m.add_int_var(format!("x{tag}g{i}s{s}"), 0.0, 1.0, pk * g.cost_noload);
                    p[i][s] = m.add_var(format!("p{tag}g{i}s{s}"), 0.0, f64::INFINITY, pk * g.cost_energy);
                    m.add_le(format!("pmax{tag}g{i}s{s}"), vec![(p[i][s], 1.0), (x[i][s], -g.p_max)], 0.0);
                    m.add_ge(format!("pmin{tag}g{i}s{s}"), vec![(p[i][s], 1.0), (x[i][s], -g.p_min)], 0.0);
                    if let Some(h) = maintainable.iter().position(|&c| c == ComponentId::Gen(i)) {
                        let mut t = vec![(x[i][s], 1.0)];
                        t.extend(down[h].iter().map(|&q| (v[h][q as usize - 1], 1.0)));
                        m.add_le(format!("avail{tag}g{i}s{s}"), t, 1.0);
                    }
                }
                for s in 1..hours {
                    let u = m.add_var(format!("u{tag}g{i}s{s}"), 0.0, 1.0, pk * g.cost_startup);
                    let w = m.add_var(format!("w{tag}g{i}s{s}"), 0.0, 1.0, 0.0);
                    m.add_ge(format!("su{tag}g{i}s{s}"), vec![(u, 1.0), (x[i][s], -1.0), (x[i][s - 1], 1.0)], 0.0);
                    m.add_ge(format!("sd{tag}g{i}s{s}"), vec![(w, 1.0), (x[i][s - 1], -1.0), (x[i][s], 1.0)], 0.0);
                    m.add_le(format!("ru{tag}g{i}s{s}"), vec![(p[i][s], 1.0), (p[i][s - 1], -1.0)], g.ramp_up);
                    m.add_ge(format!("rd{tag}g{i}s{s}"), vec![(p[i][s], 1.0), (p[i][s - 1], -1.0)], -g.ramp_down);
                    // Turned on at s: stays on for min_up hours in total.
                    for r in s + 1..hours.min(s + g.min_up as usize) {
                        m.add_ge(
                            format!("mu{tag}g{i}s{s}r{r}"),
                            vec![(x[i][r], 1.0), (x[i][s], -1.0), (x[i][s - 1], 1.0)],
                            0.0,
                        );
                    }
                    for r in s + 1..hours.min(s + g.min_down as usize) {
                        m.add_le(
                            format!("md{tag}g{i}s{s}r{r}"),
                            vec![(x[i][r], 1.0), (x[i][s - 1], 1.0), (x[i][s], -1.0)],
                            1.0,
                        );
                    }
                }
            }
            for s in 0..hours {
                let theta: Vec<VarId> = net
                    .buses
                    .iter()
                    .enumerate()
                    .map(|(b, bus)| m.add_var(format!("th{tag}b{b}s{s}"), bus.angle_min, bus.angle_max, 0.0))
                    .collect();
                let mut inj: Vec<Vec<(VarId, f64)>> = vec![Vec::new(); net.buses.len()];
                for (b, bus) in net.buses.iter().enumerate() {
                    let d = instance.demand.at(day as usize, s + 1, b);
                    let q = m.add_var(format!("q{tag}b{b}s{s}"), 0.0, d, pk * bus.curtail_cost);
                    inj[b].push((q, 1.0));
                }
                for (i, g) in net.generators.iter().enumerate() {
                    inj[g.bus].push((p[i][s], 1.0));
                }
                for (l, line) in net.lines.iter().enumerate() {
                    let f = m.add_var(format!("f{tag}l{l}s{s}"), f64::NEG_INFINITY, f64::INFINITY, 0.0);
                    inj[line.from].push((f, -1.0));
                    inj[line.to].push((f, 1.0));
                    let b = net.flow_per_radian(l);
                    let ohm = vec![(f, 1.0), (theta[line.from], -b), (theta[line.to], b)];
                    match maintainable.iter().position(|&c| c == ComponentId::Line(l)) {
                        None => {
                            m.add_eq(format!("ohm{tag}l{l}s{s}"), ohm, 0.0);
                            m.add_le(format!("fu{tag}l{l}s{s}"), vec![(f, 1.0)], line.flow_limit);
                            m.add_ge(format!("fl{tag}l{l}s{s}"), vec![(f, 1.0)], -line.flow_limit);
                        }
                        Some(h) => {
                            // y = 1 - (outage indicator); no voluntary switching.
                            let y = m.add_var(format!("y{tag}l{l}s{s}"), 0.0, 1.0, 0.0);
                            let mut t = vec![(y, 1.0)];
                            t.extend(down[h].iter().map(|&q| (v[h][q as usize - 1], 1.0)));
                            m.add_eq(format!("ys{tag}l{l}s{s}"), t, 1.0);
                            let big = line.big_m;
                            let mut a = ohm.clone();
                            a.push((y, big));
                            m.add_le(format!("oa{tag}l{l}s{s}"), a, big);
                            let mut c = ohm;
                            c.push((y, -big));
                            m.add_ge(format!("ob{tag}l{l}s{s}"), c, -big);
                            m.add_le(format!("fu{tag}l{l}s{s}"), vec![(f, 1.0), (y, -line.flow_limit)], 0.0);
                            m.add_ge(format!("fl{tag}l{l}s{s}"), vec![(f, 1.0), (y, line.flow_limit)], 0.0);
                        }
                    }
                }
                for (b, terms) in inj.into_iter().enumerate() {
                    let d = instance.demand.at(day as usize, s + 1, b);
                    m.add_eq(format!("bal{tag}b{b}s{s}"), terms, d);
                }
            }
        }
    }
    for (h, row) in v.iter().enumerate() {
        for (t, &x) in row.iter().enumerate() {
            m.vars[x.0].cost = vcost[h][t];
        }
    }
    let params = SolveParams {
        rel_gap: 1e-10,
        abs_gap: 1e-9,
        threads: Some(1),
        ..SolveParams::default()
    };
    let out = HighsBackend.solve(&m, &params).expect("extensive form solves");
    if out.status != SolveStatus::Optimal {
        return None;
    }
    let periods = v
        .iter()
        .map(|row| row.iter().position(|x| out.values[x.0] > 0.5).unwrap() as u32 + 1)
        .collect();
    Some((out.objective, periods))
}

/// Schedules rejected by the reliability requirement, by enumeration.
pub fn unreliable_schedules(toy: &Toy) -> Vec<MaintenanceSchedule> {
    let days = toy.instance.config.horizon.days as u32;
    let alpha = toy.instance.config.chance.alpha;
    MaintenanceSchedule::enumerate(toy.maintainable.len(), days + 1)
        .into_iter()
        .filter(|v| brute_force_reliability(&toy.instance, &toy.maintainable, v) < 1.0 - alpha)
        .collect()
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Reliability from raw cumulative failure rows (`within[h][t-1]` for
/// `t = 1..=days`) by enumerating failure patterns; components outside
/// `maintainable` are unscheduled.
pub fn table_reliability(
    components: &[ComponentId],
    within: &[Vec<f64>],
    maintainable: &[ComponentId],
    periods: &[u32],
    rho: (usize, usize),
) -> f64 {
    let risky: Vec<(ComponentClass, f64)> = components
        .iter()
        .zip(within)
        .map(|(c, row)| {
            let days = row.len();
            let m = maintainable.iter().position(|x| x == c).map_or(days + 1, |j| periods[j] as usize);
            (c.class(), row[m.min(days) - 1])
        })
        .collect();
    let mut total = 0.0;
    for mask in 0u64..(1u64 << risky.len()) {
        let mut p = 1.0;
        let (mut g, mut l) = (0, 0);
        for (i, (class, q)) in risky.iter().enumerate() {
            if mask >> i & 1 == 1 {
                p *= q;
                match class {
                    ComponentClass::Generator => g += 1,
                    ComponentClass::Line => l += 1,
                }
            } else {
                p *= 1.0 - q;
            }
        }
        if g <= rho.0 && l <= rho.1 {
            total += p;
        }
    }
    total
}
