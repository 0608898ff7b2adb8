//! Backend-neutral MILP/LP model description and the HiGHS backend.
//!
//! Models are built as plain data ([`ModelSpec`]) so they can be inspected,
//! exported in LP format, and handed to any [`Backend`].

use std::fmt::Write as _;

use highs::{ColProblem, HighsModelStatus, Sense};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("backend does not support {0}")]
    Unsupported(&'static str),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("backend failure: {0}")]
    Backend(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VarId(pub usize);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ObjSense {
    Minimize,
    Maximize,
}

#[derive(Clone, Debug)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub integer: bool,
    pub cost: f64,
}

#[derive(Clone, Debug)]
pub struct Row {
    pub name: String,
    pub terms: Vec<(VarId, f64)>,
    pub lower: f64,
    pub upper: f64,
}

/// Rotated second-order cone `2 * a * b >= sum(rest^2)` with `a, b >= 0`.
#[derive(Clone, Debug)]
pub struct RotatedCone {
    pub a: VarId,
    pub b: VarId,
    pub rest: Vec<VarId>,
}

#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub sense: ObjSense,
    pub vars: Vec<Variable>,
    pub rows: Vec<Row>,
    pub cones: Vec<RotatedCone>,
    pub offset: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self::new(ObjSense::Minimize)
    }
}

impl ModelSpec {
    pub fn new(sense: ObjSense) -> Self {
        Self {
            sense,
            vars: Vec::new(),
            rows: Vec::new(),
            cones: Vec::new(),
            offset: 0.0,
        }
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> VarId {
        self.vars.push(Variable {
            name: name.into(),
            lower,
            upper,
            integer: false,
            cost,
        });
        VarId(self.vars.len() - 1)
    }

    pub fn add_int_var(
        &mut self,
        name: impl Into<String>,
        lower: f64,
        upper: f64,
        cost: f64,
    ) -> VarId {
        let id = self.add_var(name, lower, upper, cost);
        self.vars[id.0].integer = true;
        id
    }

    pub fn add_binary(&mut self, name: impl Into<String>, cost: f64) -> VarId {
        self.add_int_var(name, 0.0, 1.0, cost)
    }

    pub fn add_row(
        &mut self,
        name: impl Into<String>,
        terms: Vec<(VarId, f64)>,
        lower: f64,
        upper: f64,
    ) -> usize {
        self.rows.push(Row {
            name: name.into(),
            terms,
            lower,
            upper,
        });
        self.rows.len() - 1
    }

    pub fn add_le(&mut self, name: impl Into<String>, terms: Vec<(VarId, f64)>, rhs: f64) -> usize {
        self.add_row(name, terms, f64::NEG_INFINITY, rhs)
    }

    pub fn add_ge(&mut self, name: impl Into<String>, terms: Vec<(VarId, f64)>, rhs: f64) -> usize {
        self.add_row(name, terms, rhs, f64::INFINITY)
    }

    pub fn add_eq(&mut self, name: impl Into<String>, terms: Vec<(VarId, f64)>, rhs: f64) -> usize {
        self.add_row(name, terms, rhs, rhs)
    }

    pub fn add_cone(&mut self, cone: RotatedCone) {
        self.cones.push(cone);
    }

    pub fn is_mip(&self) -> bool {
        self.vars.iter().any(|v| v.integer)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        for v in &self.vars {
            if v.lower.is_nan() || v.upper.is_nan() || v.cost.is_nan() || v.lower > v.upper {
                return Err(SolverError::InvalidModel(format!("bad bounds on {}", v.name)));
            }
        }
        for r in &self.rows {
            if r.lower.is_nan() || r.upper.is_nan() || r.lower > r.upper {
                return Err(SolverError::InvalidModel(format!("bad bounds on row {}", r.name)));
            }
            for &(id, c) in &r.terms {
                if id.0 >= self.vars.len() || !c.is_finite() {
                    return Err(SolverError::InvalidModel(format!("bad term in row {}", r.name)));
                }
            }
        }
        Ok(())
    }

    /// Objective of a point, including the constant offset.
    pub fn objective_at(&self, x: &[f64]) -> f64 {
        self.offset + self.vars.iter().zip(x).map(|(v, xi)| v.cost * xi).sum::<f64>()
    }

    /// Writes the model in CPLEX LP format. Cones are emitted as quadratic
    /// constraints.
    pub fn to_lp_format(&self) -> String {
        let names: Vec<String> = self
            .vars
            .iter()
            .enumerate()
            .map(|(i, v)| lp_name(&v.name, i))
            .collect();
        let mut out = String::new();
        out.push_str(match self.sense {
            ObjSense::Minimize => "Minimize\n",
            ObjSense::Maximize => "Maximize\n",
        });
        let obj: Vec<(usize, f64)> = self
            .vars
            .iter()
            .enumerate()
            .filter(|(_, v)| v.cost != 0.0)
            .map(|(i, v)| (i, v.cost))
            .collect();
        out.push_str(" obj:");
        write_terms(&mut out, &obj, &names);
        if self.offset != 0.0 {
            let _ = write!(out, " {} {}", sign(self.offset), self.offset.abs());
        }
        if obj.is_empty() && self.offset == 0.0 {
            out.push_str(" 0");
        }
        out.push_str("\nSubject To\n");
        for (k, r) in self.rows.iter().enumerate() {
            let terms: Vec<(usize, f64)> = r.terms.iter().map(|&(id, c)| (id.0, c)).collect();
            let rname = lp_name(&r.name, k);
            let finite_lo = r.lower.is_finite();
            let finite_hi = r.upper.is_finite();
            if finite_lo && finite_hi && r.lower == r.upper {
                let _ = write!(out, " {rname}:");
                write_terms(&mut out, &terms, &names);
                let _ = writeln!(out, " = {}", r.upper);
                continue;
            }
            if finite_lo {
                let _ = write!(out, " {rname}_lo:");
                write_terms(&mut out, &terms, &names);
                let _ = writeln!(out, " >= {}", r.lower);
            }
            if finite_hi {
                let _ = write!(out, " {rname}_hi:");
                write_terms(&mut out, &terms, &names);
                let _ = writeln!(out, " <= {}", r.upper);
            }
        }
        for (k, c) in self.cones.iter().enumerate() {
            let _ = write!(out, " cone{k}: [");
            for (j, id) in c.rest.iter().enumerate() {
                let _ = write!(out, "{} {}^2", if j == 0 { "" } else { " +" }, names[id.0]);
            }
            let _ = writeln!(out, " - 2 {} * {} ] <= 0", names[c.a.0], names[c.b.0]);
        }
        out.push_str("Bounds\n");
        for (i, v) in self.vars.iter().enumerate() {
            let n = &names[i];
            match (v.lower.is_finite(), v.upper.is_finite()) {
                (false, false) => {
                    let _ = writeln!(out, " {n} free");
                }
                (true, true) => {
                    let _ = writeln!(out, " {} <= {n} <= {}", v.lower, v.upper);
                }
                (true, false) => {
                    let _ = writeln!(out, " {n} >= {}", v.lower);
                }
                (false, true) => {
                    let _ = writeln!(out, " -inf <= {n} <= {}", v.upper);
                }
            }
        }
        let ints: Vec<&String> = names
            .iter()
            .zip(&self.vars)
            .filter(|(_, v)| v.integer)
            .map(|(n, _)| n)
            .collect();
        if !ints.is_empty() {
            out.push_str("General\n");
            for n in ints {
                let _ = writeln!(out, " {n}");
            }
        }
        out.push_str("End\n");
        out
    }
}

fn lp_name(name: &str, index: usize) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '.' { c } else { '_' })
        .collect();
    if cleaned.is_empty() || cleaned.starts_with(|c: char| c.is_ascii_digit() || c == '.') {
        format!("x{index}_{cleaned}")
    } else {
        cleaned
    }
}

fn sign(c: f64) -> char {
    if c < 0.0 {
        '-'
    } else {
        '+'
    }
}

fn write_terms(out: &mut String, terms: &[(usize, f64)], names: &[String]) {
    if terms.is_empty() {
        out.push_str(" 0 ");
        out.push_str(names.first().map(String::as_str).unwrap_or("x0"));
        return;
    }
    for (j, &(i, c)) in terms.iter().enumerate() {
        if j == 0 && c >= 0.0 {
            let _ = write!(out, " {} {}", c, names[i]);
        } else {
            let _ = write!(out, " {} {} {}", sign(c), c.abs(), names[i]);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    /// Time or iteration limit reached; `values` may hold an incumbent.
    Limit,
}

#[derive(Clone, Debug)]
pub struct SolveParams {
    pub rel_gap: f64,
    pub abs_gap: f64,
    pub time_limit: Option<f64>,
    pub threads: Option<usize>,
    pub seed: u64,
}

impl Default for SolveParams {
    fn default() -> Self {
        Self {
            rel_gap: 1e-9,
            abs_gap: 1e-9,
            time_limit: None,
            threads: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    pub objective: f64,
    /// Proven bound on the optimum (equals `objective` for LPs).
    pub bound: f64,
    pub values: Vec<f64>,
}

impl SolveOutcome {
    pub fn has_solution(&self) -> bool {
        !self.values.is_empty()
    }
}

pub trait Backend: Send + Sync {
    fn name(&self) -> &'static str;
    fn supports_cones(&self) -> bool;
    fn solve(&self, model: &ModelSpec, params: &SolveParams) -> Result<SolveOutcome, SolverError>;
}

#[derive(Clone, Copy, Debug, Default)]
pub struct HighsBackend;

impl Backend for HighsBackend {
    fn name(&self) -> &'static str {
        "highs"
    }

    fn supports_cones(&self) -> bool {
        false
    }

    fn solve(&self, model: &ModelSpec, params: &SolveParams) -> Result<SolveOutcome, SolverError> {
        if !model.cones.is_empty() {
            return Err(SolverError::Unsupported("second-order cone constraints"));
        }
        model.validate()?;
        if model.vars.is_empty() {
            return Ok(SolveOutcome {
                status: SolveStatus::Optimal,
                objective: model.offset,
                bound: model.offset,
                values: Vec::new(),
            });
        }

        let mut col_rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); model.vars.len()];
        let mut pb = ColProblem::default();
        let mut handles = Vec::with_capacity(model.rows.len());
        for (k, r) in model.rows.iter().enumerate() {
            handles.push(pb.add_row(r.lower..=r.upper));
            for &(id, c) in &r.terms {
                col_rows[id.0].push((k, c));
            }
        }
        for (v, entries) in model.vars.iter().zip(&col_rows) {
            let factors: Vec<_> = entries.iter().map(|&(k, c)| (handles[k], c)).collect();
            pb.add_column_with_integrality(v.cost, v.lower..=v.upper, factors, v.integer);
        }
        let sense = match model.sense {
            ObjSense::Minimize => Sense::Minimise,
            ObjSense::Maximize => Sense::Maximise,
        };
        let mut m = pb
            .try_optimise(sense)
            .map_err(|e| SolverError::Backend(format!("{e:?}")))?;
        m.make_quiet();
        m.set_option("mip_rel_gap", params.rel_gap);
        m.set_option("mip_abs_gap", params.abs_gap);
        m.set_option("random_seed", (params.seed % i32::MAX as u64) as i32);
        if let Some(t) = params.time_limit {
            m.set_option("time_limit", t.max(0.0));
        }
        if let Some(n) = params.threads {
            m.set_option("threads", n.max(1) as i32);
        }
        let solved = m
            .try_solve()
            .map_err(|e| SolverError::Backend(format!("{e:?}")))?;
        let status = match solved.status() {
            HighsModelStatus::Optimal | HighsModelStatus::ModelEmpty => SolveStatus::Optimal,
            // Every model built here has a bounded objective, so presolve's
            // ambiguous verdict means infeasible.
            HighsModelStatus::Infeasible | HighsModelStatus::UnboundedOrInfeasible => SolveStatus::Infeasible,
            HighsModelStatus::Unbounded => SolveStatus::Unbounded,
            HighsModelStatus::ReachedTimeLimit
            | HighsModelStatus::ReachedIterationLimit
            | HighsModelStatus::ReachedSolutionLimit
            | HighsModelStatus::ReachedInterrupt
            | HighsModelStatus::ReachedMemoryLimit => SolveStatus::Limit,
            other => return Err(SolverError::Backend(format!("model status {other:?}"))),
        };
        let values = match status {
            SolveStatus::Optimal | SolveStatus::Limit => {
                let cols = solved.get_solution().columns().to_vec();
                if status == SolveStatus::Limit && cols.iter().any(|x| !x.is_finite()) {
                    Vec::new()
                } else {
                    cols
                }
            }
            _ => Vec::new(),
        };
        let objective = if values.is_empty() {
            f64::NAN
        } else {
            model.objective_at(&values)
        };
        let bound = if model.is_mip() {
            solved
                .double_info_value(c"mip_dual_bound")
                .map(|b| b + model.offset)
                .unwrap_or(objective)
        } else {
            objective
        };
        let bound = if status == SolveStatus::Optimal && !bound.is_finite() {
            objective
        } else {
            bound
        };
        Ok(SolveOutcome {
            status,
            objective,
            bound,
            values,
        })
    }
}
