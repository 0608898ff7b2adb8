//! Network cases (MATPOWER subset), demand grids and run configuration.
//!
//! Supported MATPOWER tables are `bus`, `gen`, `branch` and `gencost` with
//! polynomial costs of degree at most one. Three optional extension tables
//! carry data MATPOWER has no column for, one row per base-table row:
//!
//! * `mpc.bus_ext    = [angle_min angle_max curtail_cost];`
//! * `mpc.gen_ext    = [ramp_up ramp_down min_up min_down maint_pred maint_corr];`
//! * `mpc.branch_ext = [big_m maint_pred maint_corr];`
//!
//! A negative entry in an extension table means "use the default".

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CaseError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported case data: {0}")]
    Unsupported(String),
    #[error("invalid network: {0}")]
    Invalid(String),
    #[error("network is not connected")]
    Disconnected,
    #[error("demand data: {0}")]
    Demand(String),
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ComponentClass {
    Generator,
    Line,
}

/// A maintainable network element, by index into the network's tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ComponentId {
    Gen(usize),
    Line(usize),
}

impl ComponentId {
    pub fn class(self) -> ComponentClass {
        match self {
            ComponentId::Gen(_) => ComponentClass::Generator,
            ComponentId::Line(_) => ComponentClass::Line,
        }
    }
}

impl fmt::Display for ComponentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ComponentId::Gen(i) => write!(f, "gen:{i}"),
            ComponentId::Line(i) => write!(f, "line:{i}"),
        }
    }
}

impl FromStr for ComponentId {
    type Err = CaseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || CaseError::Parse(format!("bad component id '{s}'"));
        let (kind, idx) = s.trim().split_once(':').ok_or_else(bad)?;
        let idx: usize = idx.parse().map_err(|_| bad())?;
        match kind {
            "gen" => Ok(ComponentId::Gen(idx)),
            "line" => Ok(ComponentId::Line(idx)),
            _ => Err(bad()),
        }
    }
}

impl Serialize for ComponentId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ComponentId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaintenanceCost {
    pub predictive: f64,
    pub corrective: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// Bus number as written in the case file.
    pub number: u32,
    /// Nominal demand (MW), used to synthesise demand profiles.
    pub base_demand: f64,
    pub angle_min: f64,
    pub angle_max: f64,
    /// $/MWh of curtailed load.
    pub curtail_cost: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub ramp_up: f64,
    pub ramp_down: f64,
    pub min_up: u32,
    pub min_down: u32,
    /// $/MWh.
    pub cost_energy: f64,
    /// $/h while committed.
    pub cost_noload: f64,
    pub cost_startup: f64,
    pub maintenance: Option<MaintenanceCost>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    /// Series reactance in p.u.; susceptance is its reciprocal.
    pub reactance: f64,
    /// MW.
    pub flow_limit: f64,
    /// Disjunctive constant for switchable lines (MW).
    pub big_m: f64,
    pub maintenance: Option<MaintenanceCost>,
}

impl Line {
    pub fn susceptance(&self) -> f64 {
        1.0 / self.reactance
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub lines: Vec<Line>,
}

/// Flow limit assigned to branches whose MATPOWER rating is 0 (unlimited).
pub const UNRATED_FLOW_LIMIT: f64 = 9900.0;

impl Network {
    /// MW flowing per radian of angle difference.
    pub fn flow_per_radian(&self, line: usize) -> f64 {
        self.base_mva * self.lines[line].susceptance()
    }

    pub fn derived_big_m(&self, line: usize) -> f64 {
        let l = &self.lines[line];
        self.flow_per_radian(line) * (self.buses[l.from].angle_max - self.buses[l.to].angle_min)
    }

    pub fn components(&self) -> Vec<ComponentId> {
        (0..self.generators.len())
            .map(ComponentId::Gen)
            .chain((0..self.lines.len()).map(ComponentId::Line))
            .collect()
    }

    pub fn bus_index(&self, number: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.number == number)
    }

    pub fn maintenance_cost(&self, c: ComponentId) -> Option<MaintenanceCost> {
        match c {
            ComponentId::Gen(i) => self.generators[i].maintenance,
            ComponentId::Line(i) => self.lines[i].maintenance,
        }
    }

    /// Fills missing maintenance costs: a generator's predictive cost is
    /// `p_max * cost_energy * hours`, a line's is a tenth of the mean generator
    /// cost; corrective costs are three times predictive.
    pub fn fill_default_maintenance_costs(&mut self, hours: usize) {
        for g in &mut self.generators {
            if g.maintenance.is_none() {
                let p = g.p_max * g.cost_energy * hours as f64;
                g.maintenance = Some(MaintenanceCost {
                    predictive: p,
                    corrective: 3.0 * p,
                });
            }
        }
        let gens = &self.generators;
        let mean_gen = if gens.is_empty() {
            0.0
        } else {
            gens.iter()
                .map(|g| g.maintenance.map_or(0.0, |m| m.predictive))
                .sum::<f64>()
                / gens.len() as f64
        };
        for l in &mut self.lines {
            if l.maintenance.is_none() {
                let p = 0.1 * mean_gen;
                l.maintenance = Some(MaintenanceCost {
                    predictive: p,
                    corrective: 3.0 * p,
                });
            }
        }
    }

    pub fn validate(&self) -> Result<(), CaseError> {
        if self.buses.is_empty() {
            return Err(CaseError::Invalid("no buses".into()));
        }
        if !(self.base_mva > 0.0) {
            return Err(CaseError::Invalid("baseMVA must be positive".into()));
        }
        for (i, b) in self.buses.iter().enumerate() {
            if !(b.angle_min <= b.angle_max) {
                return Err(CaseError::Invalid(format!("bus {i}: angle bounds")));
            }
            if b.base_demand < 0.0 || b.curtail_cost < 0.0 {
                return Err(CaseError::Invalid(format!("bus {i}: negative demand or cost")));
            }
        }
        for (i, g) in self.generators.iter().enumerate() {
            if g.bus >= self.buses.len() {
                return Err(CaseError::Invalid(format!("gen {i}: unknown bus")));
            }
            if !(0.0 <= g.p_min && g.p_min <= g.p_max) {
                return Err(CaseError::Invalid(format!("gen {i}: need 0 <= p_min <= p_max")));
            }
            if g.ramp_up < 0.0 || g.ramp_down < 0.0 || g.min_up < 1 || g.min_down < 1 {
                return Err(CaseError::Invalid(format!("gen {i}: ramp or min up/down")));
            }
        }
        for (i, l) in self.lines.iter().enumerate() {
            if l.from >= self.buses.len() || l.to >= self.buses.len() || l.from == l.to {
                return Err(CaseError::Invalid(format!("line {i}: endpoints")));
            }
            if !(l.reactance.is_finite() && l.reactance != 0.0) {
                return Err(CaseError::Invalid(format!("line {i}: zero reactance")));
            }
            if !(l.flow_limit > 0.0) {
                return Err(CaseError::Invalid(format!("line {i}: flow limit must be positive")));
            }
            if l.big_m + 1e-9 * l.big_m.abs().max(1.0) < self.derived_big_m(i) {
                return Err(CaseError::Invalid(format!("line {i}: big-M below angle span")));
            }
        }
        if !self.is_connected() {
            return Err(CaseError::Disconnected);
        }
        Ok(())
    }

    pub fn is_connected(&self) -> bool {
        let n = self.buses.len();
        let mut adj = vec![Vec::new(); n];
        for l in &self.lines {
            adj[l.from].push(l.to);
            adj[l.to].push(l.from);
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0]);
        seen[0] = true;
        while let Some(b) = queue.pop_front() {
            for &nb in &adj[b] {
                if !seen[nb] {
                    seen[nb] = true;
                    queue.push_back(nb);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    pub fn max_energy_cost(&self) -> f64 {
        self.generators
            .iter()
            .map(|g| g.cost_energy)
            .fold(0.0, f64::max)
    }

    /// Writes the network back as a MATPOWER case that [`parse_case`] reads
    /// into an identical value.
    pub fn to_case_string(&self) -> String {
        let mut s = String::from("function mpc = case_export\nmpc.version = '2';\n");
        let _ = writeln!(s, "mpc.baseMVA = {};", self.base_mva);
        s.push_str("mpc.bus = [\n");
        for (i, b) in self.buses.iter().enumerate() {
            let kind = if i == 0 { 3 } else { 1 };
            let _ = writeln!(
                s,
                "\t{}\t{kind}\t{}\t0\t0\t0\t1\t1\t0\t100\t1\t1.1\t0.9;",
                b.number, b.base_demand
            );
        }
        s.push_str("];\nmpc.gen = [\n");
        for g in &self.generators {
            let _ = writeln!(
                s,
                "\t{}\t0\t0\t0\t0\t1\t100\t1\t{}\t{};",
                self.buses[g.bus].number, g.p_max, g.p_min
            );
        }
        s.push_str("];\nmpc.branch = [\n");
        for l in &self.lines {
            let _ = writeln!(
                s,
                "\t{}\t{}\t0\t{}\t0\t{}\t0\t0\t0\t0\t1\t-360\t360;",
                self.buses[l.from].number, self.buses[l.to].number, l.reactance, l.flow_limit
            );
        }
        s.push_str("];\nmpc.gencost = [\n");
        for g in &self.generators {
            let _ = writeln!(
                s,
                "\t2\t{}\t0\t2\t{}\t{};",
                g.cost_startup, g.cost_energy, g.cost_noload
            );
        }
        s.push_str("];\nmpc.bus_ext = [\n");
        for b in &self.buses {
            let _ = writeln!(s, "\t{}\t{}\t{};", b.angle_min, b.angle_max, b.curtail_cost);
        }
        s.push_str("];\nmpc.gen_ext = [\n");
        for g in &self.generators {
            let (p, c) = maint_pair(g.maintenance);
            let _ = writeln!(
                s,
                "\t{}\t{}\t{}\t{}\t{p}\t{c};",
                g.ramp_up, g.ramp_down, g.min_up, g.min_down
            );
        }
        s.push_str("];\nmpc.branch_ext = [\n");
        for l in &self.lines {
            let (p, c) = maint_pair(l.maintenance);
            let _ = writeln!(s, "\t{}\t{p}\t{c};", l.big_m);
        }
        s.push_str("];\n");
        s
    }
}

fn maint_pair(m: Option<MaintenanceCost>) -> (f64, f64) {
    m.map_or((-1.0, -1.0), |m| (m.predictive, m.corrective))
}

type Table = Vec<Vec<f64>>;

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(i) => &line[..i],
        None => line,
    }
}

fn parse_number(tok: &str) -> Result<f64, CaseError> {
    match tok {
        "Inf" | "inf" => Ok(f64::INFINITY),
        "-Inf" | "-inf" => Ok(f64::NEG_INFINITY),
        "NaN" | "nan" => Ok(f64::NAN),
        _ => tok
            .parse()
            .map_err(|_| CaseError::Parse(format!("bad number '{tok}'"))),
    }
}

fn tables_and_scalars(text: &str) -> Result<(HashMap<String, Table>, HashMap<String, f64>), CaseError> {
    let cleaned: String = text
        .lines()
        .map(strip_comment)
        .collect::<Vec<_>>()
        .join("\n");
    let mut tables = HashMap::new();
    let mut scalars = HashMap::new();
    let mut rest = cleaned.as_str();
    while let Some(pos) = rest.find("mpc.") {
        rest = &rest[pos + 4..];
        let eq = rest
            .find('=')
            .ok_or_else(|| CaseError::Parse("assignment without '='".into()))?;
        let name = rest[..eq].trim().to_string();
        let after = rest[eq + 1..].trim_start();
        if let Some(body) = after.strip_prefix('[') {
            let end = body
                .find(']')
                .ok_or_else(|| CaseError::Parse(format!("unterminated table '{name}'")))?;
            let mut rows = Vec::new();
            for raw in body[..end].split([';', '\n']) {
                let toks: Vec<&str> = raw
                    .split(|c: char| c.is_whitespace() || c == ',')
                    .filter(|t| !t.is_empty())
                    .collect();
                if toks.is_empty() {
                    continue;
                }
                rows.push(toks.into_iter().map(parse_number).collect::<Result<Vec<_>, _>>()?);
            }
            tables.insert(name, rows);
            rest = &body[end + 1..];
        } else {
            let end = after.find([';', '\n']).unwrap_or(after.len());
            let value = after[..end].trim();
            if !value.starts_with('\'') {
                scalars.insert(name, parse_number(value)?);
            }
            rest = &after[end..];
        }
    }
    Ok((tables, scalars))
}

fn col(row: &[f64], idx: usize, table: &str) -> Result<f64, CaseError> {
    row.get(idx)
        .copied()
        .ok_or_else(|| CaseError::Parse(format!("{table}: row has fewer than {} columns", idx + 1)))
}

fn ext_value(ext: Option<&Table>, row: usize, idx: usize) -> Option<f64> {
    ext.and_then(|t| t.get(row))
        .and_then(|r| r.get(idx))
        .copied()
        .filter(|v| *v >= 0.0)
}

/// Parses a MATPOWER case. Out-of-service generators and branches are
/// dropped; missing maintenance costs stay `None` until
/// [`Network::fill_default_maintenance_costs`] is called.
pub fn parse_case(text: &str) -> Result<Network, CaseError> {
    let (tables, scalars) = tables_and_scalars(text)?;
    let base_mva = *scalars
        .get("baseMVA")
        .ok_or_else(|| CaseError::Parse("missing baseMVA".into()))?;
    let need = |n: &str| {
        tables
            .get(n)
            .ok_or_else(|| CaseError::Parse(format!("missing table '{n}'")))
    };
    let bus_t = need("bus")?;
    let gen_t = need("gen")?;
    let branch_t = need("branch")?;
    let cost_t = need("gencost")?;
    let bus_ext = tables.get("bus_ext");
    let gen_ext = tables.get("gen_ext");
    let branch_ext = tables.get("branch_ext");
    for (name, ext, base) in [
        ("bus_ext", bus_ext, bus_t),
        ("gen_ext", gen_ext, gen_t),
        ("branch_ext", branch_ext, branch_t),
    ] {
        if let Some(e) = ext {
            if e.len() != base.len() {
                return Err(CaseError::Parse(format!("{name} must have one row per base row")));
            }
        }
    }
    if cost_t.len() < gen_t.len() {
        return Err(CaseError::Parse("gencost needs one row per generator".into()));
    }

    let mut buses = Vec::with_capacity(bus_t.len());
    let mut index_of = HashMap::new();
    for (r, row) in bus_t.iter().enumerate() {
        let number = col(row, 0, "bus")?;
        if number < 0.0 || number.fract() != 0.0 {
            return Err(CaseError::Parse(format!("bus number {number}")));
        }
        if index_of.insert(number as u32, buses.len()).is_some() {
            return Err(CaseError::Invalid(format!("duplicate bus {number}")));
        }
        // Angle bounds are signed, so they bypass the negative-means-default rule.
        let (angle_min, angle_max) = match bus_ext {
            Some(e) => (col(&e[r], 0, "bus_ext")?, col(&e[r], 1, "bus_ext")?),
            None => (-std::f64::consts::PI, std::f64::consts::PI),
        };
        buses.push(Bus {
            number: number as u32,
            base_demand: col(row, 2, "bus")?,
            angle_min,
            angle_max,
            curtail_cost: ext_value(bus_ext, r, 2).unwrap_or(-1.0),
        });
    }
    let bus_of = |num: f64, what: &str| -> Result<usize, CaseError> {
        index_of
            .get(&(num as u32))
            .copied()
            .ok_or_else(|| CaseError::Invalid(format!("{what} references unknown bus {num}")))
    };

    let mut generators = Vec::new();
    for (r, row) in gen_t.iter().enumerate() {
        if col(row, 7, "gen")? <= 0.0 {
            log::warn!("generator row {r} is out of service and is ignored");
            continue;
        }
        let cost = &cost_t[r];
        let model = col(cost, 0, "gencost")?;
        if model != 2.0 {
            return Err(CaseError::Unsupported("piecewise-linear generator costs".into()));
        }
        let ncoef = col(cost, 3, "gencost")? as usize;
        let coefs: Vec<f64> = (0..ncoef)
            .map(|j| col(cost, 4 + j, "gencost"))
            .collect::<Result<_, _>>()?;
        if coefs.len() > 2 && coefs[..coefs.len() - 2].iter().any(|c| *c != 0.0) {
            return Err(CaseError::Unsupported(
                "polynomial generator cost of degree above one".into(),
            ));
        }
        let (energy, noload) = match coefs.len() {
            0 => (0.0, 0.0),
            1 => (0.0, coefs[0]),
            n => (coefs[n - 2], coefs[n - 1]),
        };
        let p_max = col(row, 8, "gen")?;
        let maint = match (ext_value(gen_ext, r, 4), ext_value(gen_ext, r, 5)) {
            (Some(p), Some(c)) => Some(MaintenanceCost {
                predictive: p,
                corrective: c,
            }),
            _ => None,
        };
        generators.push(Generator {
            bus: bus_of(col(row, 0, "gen")?, "generator")?,
            p_min: col(row, 9, "gen")?,
            p_max,
            ramp_up: ext_value(gen_ext, r, 0).unwrap_or(p_max),
            ramp_down: ext_value(gen_ext, r, 1).unwrap_or(p_max),
            min_up: ext_value(gen_ext, r, 2).map_or(1, |v| v.round() as u32),
            min_down: ext_value(gen_ext, r, 3).map_or(1, |v| v.round() as u32),
            cost_energy: energy,
            cost_noload: noload,
            cost_startup: col(cost, 1, "gencost")?,
            maintenance: maint,
        });
    }

    let mut lines = Vec::new();
    for (r, row) in branch_t.iter().enumerate() {
        if col(row, 10, "branch")? <= 0.0 {
            log::warn!("branch row {r} is out of service and is ignored");
            continue;
        }
        let ratio = row.get(8).copied().unwrap_or(0.0);
        if ratio != 0.0 && ratio != 1.0 {
            log::warn!("branch row {r}: tap ratio ignored by the DC model");
        }
        let mut limit = col(row, 5, "branch")?;
        if limit == 0.0 {
            limit = UNRATED_FLOW_LIMIT;
        }
        let maint = match (ext_value(branch_ext, r, 1), ext_value(branch_ext, r, 2)) {
            (Some(p), Some(c)) => Some(MaintenanceCost {
                predictive: p,
                corrective: c,
            }),
            _ => None,
        };
        lines.push(Line {
            from: bus_of(col(row, 0, "branch")?, "branch")?,
            to: bus_of(col(row, 1, "branch")?, "branch")?,
            reactance: col(row, 3, "branch")?,
            flow_limit: limit,
            big_m: ext_value(branch_ext, r, 0).unwrap_or(f64::NAN),
            maintenance: maint,
        });
    }

    let mut net = Network {
        base_mva,
        buses,
        generators,
        lines,
    };
    let default_curtail = 10.0 * net.max_energy_cost();
    for b in &mut net.buses {
        if b.curtail_cost < 0.0 {
            b.curtail_cost = default_curtail;
        }
    }
    for i in 0..net.lines.len() {
        if net.lines[i].big_m.is_nan() {
            net.lines[i].big_m = net.derived_big_m(i);
        }
    }
    net.validate()?;
    Ok(net)
}

/// Demand per (day, hour, bus); days and hours are 1-based in CSV and in
/// [`DemandGrid::at`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemandGrid {
    pub days: usize,
    pub hours: usize,
    pub buses: usize,
    values: Vec<f64>,
}

impl DemandGrid {
    pub fn zeros(days: usize, hours: usize, buses: usize) -> Self {
        Self {
            days,
            hours,
            buses,
            values: vec![0.0; days * hours * buses],
        }
    }

    fn idx(&self, day: usize, hour: usize, bus: usize) -> usize {
        debug_assert!(day >= 1 && day <= self.days && hour >= 1 && hour <= self.hours);
        ((day - 1) * self.hours + (hour - 1)) * self.buses + bus
    }

    pub fn at(&self, day: usize, hour: usize, bus: usize) -> f64 {
        self.values[self.idx(day, hour, bus)]
    }

    pub fn set(&mut self, day: usize, hour: usize, bus: usize, mw: f64) {
        let i = self.idx(day, hour, bus);
        self.values[i] = mw;
    }

    pub fn horizon_peak(&self, bus: usize) -> f64 {
        (1..=self.days)
            .map(|t| self.day_peak(t, bus))
            .fold(0.0, f64::max)
    }

    pub fn day_peak(&self, day: usize, bus: usize) -> f64 {
        (1..=self.hours)
            .map(|s| self.at(day, s, bus))
            .fold(0.0, f64::max)
    }

    pub fn total(&self, day: usize, hour: usize) -> f64 {
        (0..self.buses).map(|b| self.at(day, hour, b)).sum()
    }

    /// Copy restricted to the first `days` days.
    pub fn truncated(&self, days: usize) -> Self {
        let days = days.min(self.days);
        Self {
            days,
            hours: self.hours,
            buses: self.buses,
            values: self.values[..days * self.hours * self.buses].to_vec(),
        }
    }

    pub fn to_csv(&self, net: &Network) -> String {
        let mut s = String::from("bus,t,s,mw\n");
        for t in 1..=self.days {
            for h in 1..=self.hours {
                for b in 0..self.buses {
                    let _ = writeln!(s, "{},{t},{h},{}", net.buses[b].number, self.at(t, h, b));
                }
            }
        }
        s
    }
}

#[derive(Deserialize)]
struct DemandRecord {
    bus: u32,
    t: usize,
    s: usize,
    mw: f64,
}

/// Reads `bus,t,s,mw` records. Missing cells are zero.
pub fn parse_demand(text: &str, net: &Network, days: usize, hours: usize) -> Result<DemandGrid, CaseError> {
    let mut grid = DemandGrid::zeros(days, hours, net.buses.len());
    let mut seen = vec![false; days * hours * net.buses.len()];
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    for (n, rec) in rdr.deserialize::<DemandRecord>().enumerate() {
        let rec = rec.map_err(|e| CaseError::Demand(format!("record {}: {e}", n + 1)))?;
        let bus = net
            .bus_index(rec.bus)
            .ok_or_else(|| CaseError::Demand(format!("unknown bus {}", rec.bus)))?;
        if rec.t < 1 || rec.t > days || rec.s < 1 || rec.s > hours {
            return Err(CaseError::Demand(format!("(t,s)=({},{}) outside horizon", rec.t, rec.s)));
        }
        if !(rec.mw >= 0.0) || !rec.mw.is_finite() {
            return Err(CaseError::Demand(format!("demand {} must be finite and >= 0", rec.mw)));
        }
        let i = grid.idx(rec.t, rec.s, bus);
        if std::mem::replace(&mut seen[i], true) {
            return Err(CaseError::Demand(format!(
                "duplicate entry for bus {} t={} s={}",
                rec.bus, rec.t, rec.s
            )));
        }
        grid.values[i] = rec.mw;
    }
    Ok(grid)
}

/// Multiplicative load shape indexed by (day, hour), both 1-based.
#[derive(Clone, Debug, PartialEq)]
pub struct DemandShape {
    pub days: usize,
    pub hours: usize,
    factors: Vec<f64>,
}

impl DemandShape {
    pub fn new(days: usize, hours: usize, factors: Vec<f64>) -> Result<Self, CaseError> {
        if factors.len() != days * hours || factors.iter().any(|f| !(*f >= 0.0)) {
            return Err(CaseError::Demand("shape needs days*hours non-negative factors".into()));
        }
        Ok(Self { days, hours, factors })
    }

    pub fn flat(days: usize, hours: usize) -> Self {
        Self {
            days,
            hours,
            factors: vec![1.0; days * hours],
        }
    }

    /// Daily double-peak profile with lighter weekends, peaking at 1.0.
    pub fn weekly(days: usize, hours: usize) -> Self {
        let mut factors = Vec::with_capacity(days * hours);
        for t in 0..days {
            let weekend = if t % 7 >= 5 { 0.85 } else { 1.0 };
            for s in 0..hours {
                let h = 24.0 * (s as f64 + 0.5) / hours as f64;
                let morning = (-((h - 10.0) / 3.0).powi(2)).exp();
                let evening = (-((h - 19.0) / 2.5).powi(2)).exp();
                let f = 0.6 + 0.25 * morning + 0.4 * evening;
                factors.push(weekend * f.min(1.0));
            }
        }
        Self { days, hours, factors }
    }

    pub fn at(&self, day: usize, hour: usize) -> f64 {
        self.factors[(day - 1) * self.hours + (hour - 1)]
    }
}

/// `base_demand * shape`, optionally perturbed by multiplicative Gaussian
/// noise with standard deviation `noise` (clamped at zero).
pub fn synth_demand(net: &Network, shape: &DemandShape, noise: f64, seed: u64) -> DemandGrid {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise.max(0.0)).expect("finite noise");
    let mut grid = DemandGrid::zeros(shape.days, shape.hours, net.buses.len());
    for t in 1..=shape.days {
        for s in 1..=shape.hours {
            for (b, bus) in net.buses.iter().enumerate() {
                let eps = if noise > 0.0 { normal.sample(&mut rng) } else { 0.0 };
                grid.set(t, s, b, (bus.base_demand * shape.at(t, s) * (1.0 + eps)).max(0.0));
            }
        }
    }
    grid
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChanceMode {
    Exact,
    Safe,
    /// No reliability requirement (deterministic baseline).
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProductHandling {
    OuterApprox,
    ConicBackend,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CutFamily {
    #[serde(rename = "intLS")]
    IntegerLShaped,
    #[serde(rename = "optK")]
    OptK,
    #[serde(rename = "optK+")]
    OptKPlus,
    #[serde(rename = "optKT++")]
    OptKTPlusPlus,
}

impl FromStr for CutFamily {
    type Err = CaseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "intLS" => Ok(Self::IntegerLShaped),
            "optK" => Ok(Self::OptK),
            "optK+" => Ok(Self::OptKPlus),
            "optKT++" => Ok(Self::OptKTPlusPlus),
            _ => Err(CaseError::Config(format!("unknown cut family '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Granularity {
    /// One recourse variable for the expectation.
    Single,
    PerScenario,
    PerScenarioDay,
}

impl FromStr for Granularity {
    type Err = CaseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(Self::Single),
            "per-scenario" => Ok(Self::PerScenario),
            "per-scenario-day" => Ok(Self::PerScenarioDay),
            _ => Err(CaseError::Config(format!("unknown granularity '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlowMode {
    Off,
    /// Horizon peak demand.
    I,
    /// Per-day peak demand.
    II,
    /// Per-hour demand.
    III,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HorizonConfig {
    pub days: usize,
    pub hours: usize,
}

impl Default for HorizonConfig {
    fn default() -> Self {
        Self { days: 7, hours: 24 }
    }
}

/// Outage lengths in days.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Durations {
    pub gen_predictive: u32,
    pub gen_corrective: u32,
    pub line_predictive: u32,
    pub line_corrective: u32,
}

impl Default for Durations {
    fn default() -> Self {
        Self {
            gen_predictive: 1,
            gen_corrective: 2,
            line_predictive: 1,
            line_corrective: 2,
        }
    }
}

impl Durations {
    pub fn for_class(&self, class: ComponentClass) -> (u32, u32) {
        match class {
            ComponentClass::Generator => (self.gen_predictive, self.gen_corrective),
            ComponentClass::Line => (self.line_predictive, self.line_corrective),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChanceConfig {
    pub alpha: f64,
    pub rho_gen: Option<usize>,
    /// Defaults to `max(1, lines / 20)`.
    pub rho_line: Option<usize>,
    pub mode: ChanceMode,
    pub product: ProductHandling,
}

impl Default for ChanceConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            rho_gen: None,
            rho_line: None,
            mode: ChanceMode::Exact,
            product: ProductHandling::OuterApprox,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SubsetConfig {
    pub gen_threshold: f64,
    pub line_threshold: f64,
}

impl Default for SubsetConfig {
    fn default() -> Self {
        Self {
            gen_threshold: 0.1,
            line_threshold: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub epsilon: f64,
    pub cuts: CutFamily,
    pub granularity: Granularity,
    pub threads: usize,
    pub max_iterations: usize,
    pub time_limit: Option<f64>,
    pub flow_mode: FlowMode,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            cuts: CutFamily::OptKTPlusPlus,
            granularity: Granularity::PerScenarioDay,
            threads: 1,
            max_iterations: 10_000,
            time_limit: None,
            flow_mode: FlowMode::Off,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaaConfig {
    pub replicates: usize,
    pub scenarios: usize,
    pub test_scenarios: usize,
    pub significance: f64,
}

impl Default for SaaConfig {
    fn default() -> Self {
        Self {
            replicates: 5,
            scenarios: 50,
            test_scenarios: 1000,
            significance: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub horizon: HorizonConfig,
    pub durations: Durations,
    pub chance: ChanceConfig,
    pub subset: SubsetConfig,
    pub solver: SolverConfig,
    pub saa: SaaConfig,
    /// Overrides every bus's curtailment cost when set.
    pub curtail_cost: Option<f64>,
    pub demand_noise: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            horizon: HorizonConfig::default(),
            durations: Durations::default(),
            chance: ChanceConfig::default(),
            subset: SubsetConfig::default(),
            solver: SolverConfig::default(),
            saa: SaaConfig::default(),
            curtail_cost: None,
            demand_noise: 0.0,
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CaseError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CaseError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<(), CaseError> {
        let bad = |m: &str| Err(CaseError::Config(m.to_string()));
        if self.horizon.days == 0 || self.horizon.hours == 0 {
            return bad("horizon must have at least one day and one hour");
        }
        if !(0.0..=1.0).contains(&self.chance.alpha) {
            return bad("alpha must lie in [0, 1]");
        }
        let d = &self.durations;
        if d.gen_predictive < 1 || d.line_predictive < 1 {
            return bad("predictive durations must be at least one day");
        }
        if d.gen_corrective < d.gen_predictive || d.line_corrective < d.line_predictive {
            return bad("corrective durations must be at least the predictive ones");
        }
        if !(self.solver.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if self.solver.cuts == CutFamily::OptKTPlusPlus
            && self.solver.granularity != Granularity::PerScenarioDay
        {
            return bad("optKT++ cuts need per-scenario-day granularity");
        }
        if self.solver.threads == 0 {
            return bad("threads must be at least 1");
        }
        if self.saa.replicates < 2 {
            return bad("SAA needs at least two replicates");
        }
        if self.saa.scenarios == 0 || self.saa.test_scenarios == 0 {
            return bad("scenario counts must be positive");
        }
        if !(self.saa.significance > 0.0 && self.saa.significance < 1.0) {
            return bad("significance must lie in (0, 1)");
        }
        Ok(())
    }

    pub fn rho(&self, net: &Network) -> (usize, usize) {
        (
            self.chance.rho_gen.unwrap_or(1),
            self.chance
                .rho_line
                .unwrap_or_else(|| (net.lines.len() / 20).max(1)),
        )
    }

    /// Short content hash embedded in every output file.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// One line of `component,period` per maintainable component.
pub fn schedule_to_csv(periods: &BTreeMap<ComponentId, u32>) -> String {
    let mut s = String::from("component,period\n");
    for (c, p) in periods {
        let _ = writeln!(s, "{c},{p}");
    }
    s
}

pub fn schedule_from_csv(text: &str) -> Result<BTreeMap<ComponentId, u32>, CaseError> {
    #[derive(Deserialize)]
    struct Rec {
        component: String,
        period: u32,
    }
    let mut out = BTreeMap::new();
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    for rec in rdr.deserialize::<Rec>() {
        let rec = rec.map_err(|e| CaseError::Parse(e.to_string()))?;
        let c: ComponentId = rec.component.parse()?;
        if out.insert(c, rec.period).is_some() {
            return Err(CaseError::Parse(format!("component {c} scheduled twice")));
        }
    }
    if out.is_empty() {
        return Err(CaseError::Parse("schedule is empty".into()));
    }
    Ok(out)
}
