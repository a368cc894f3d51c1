//! Problem-file schema: JSON with expression strings for the constraints and
//! objectives. Loading validates everything up front so the typed builders
//! cannot fail later; dumping renders canonically so load, dump, load is
//! byte-stable.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use regkit_core::bilevel::BilevelProblem;
use regkit_core::expr::parse_expr;
use regkit_core::parametric::{Flags, ParametricProblem};
use regkit_core::report::canon_json;
use regkit_core::system::ParametricSystem;

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
#[serde(deny_unknown_fields)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct LowerLevel {
    pub ineq: Vec<String>,
    pub eq: Vec<String>,
    pub objective: String,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct UpperLevel {
    pub objective: String,
    pub x_box: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NamedPoint {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ProblemFile {
    pub dims: Dims,
    pub lower: LowerLevel,
    pub flags: Flags,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upper: Option<UpperLevel>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub points: BTreeMap<String, NamedPoint>,
}

#[derive(Debug, thiserror::Error)]
pub enum ProblemFileError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ProblemFileError {
    ProblemFileError::Invalid { path: path.into(), message: message.into() }
}

impl ProblemFile {
    /// Parses and validates. The returned value satisfies every schema
    /// invariant, so the `*_problem` builders below cannot fail.
    pub fn from_str(text: &str) -> Result<(Self, Vec<String>), ProblemFileError> {
        let pf: ProblemFile = serde_json::from_str(text)?;
        let warnings = pf.validate()?;
        Ok((pf, warnings))
    }

    pub fn load(path: &Path) -> Result<(Self, Vec<String>), ProblemFileError> {
        Self::from_str(&std::fs::read_to_string(path)?)
    }

    fn validate(&self) -> Result<Vec<String>, ProblemFileError> {
        let (n, m) = (self.dims.n, self.dims.m);
        if m == 0 {
            return Err(invalid("dims.m", "at least one decision variable required"));
        }
        let check = |path: String, text: &str| -> Result<(), ProblemFileError> {
            parse_expr(text, n, m).map(|_| ()).map_err(|e| invalid(path, e.to_string()))
        };
        for (i, t) in self.lower.ineq.iter().enumerate() {
            check(format!("lower.ineq[{i}]"), t)?;
        }
        for (i, t) in self.lower.eq.iter().enumerate() {
            check(format!("lower.eq[{i}]"), t)?;
        }
        check("lower.objective".into(), &self.lower.objective)?;
        if let Some(upper) = &self.upper {
            check("upper.objective".into(), &upper.objective)?;
            if upper.x_box.len() != n {
                return Err(invalid(
                    "upper.x_box",
                    format!("expected {n} axes, found {}", upper.x_box.len()),
                ));
            }
            for (i, (lo, hi)) in upper.x_box.iter().enumerate() {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(invalid(
                        format!("upper.x_box[{i}]"),
                        "bounds must be finite and ordered",
                    ));
                }
            }
        }
        for (name, p) in &self.points {
            if p.x.len() != n || p.y.len() != m {
                return Err(invalid(
                    format!("points.{name}"),
                    format!("expected {n} + {m} coordinates"),
                ));
            }
            if p.x.iter().chain(&p.y).any(|v| !v.is_finite()) {
                return Err(invalid(format!("points.{name}"), "coordinates must be finite"));
            }
        }
        let mut warnings = Vec::new();
        if self.lower.ineq.is_empty() && self.lower.eq.is_empty() {
            warnings.push("no constraints; the feasible set is the whole space".to_string());
        }
        Ok(warnings)
    }

    /// Canonical serialization: sorted keys, fixed float formatting.
    pub fn dump(&self) -> String {
        canon_json(&serde_json::to_value(self).expect("problem file serializes"))
    }

    pub fn system(&self) -> ParametricSystem {
        let (n, m) = (self.dims.n, self.dims.m);
        let parse = |t: &String| parse_expr(t, n, m).expect("validated problem file");
        ParametricSystem::new(
            n,
            m,
            self.lower.ineq.iter().map(parse).collect(),
            self.lower.eq.iter().map(parse).collect(),
        )
    }

    pub fn lower_problem(&self) -> Arc<ParametricProblem> {
        let f = parse_expr(&self.lower.objective, self.dims.n, self.dims.m)
            .expect("validated problem file");
        Arc::new(ParametricProblem::new(self.system(), f, self.flags))
    }

    pub fn bilevel_problem(&self) -> Option<BilevelProblem> {
        let upper = self.upper.as_ref()?;
        let bf = parse_expr(&upper.objective, self.dims.n, self.dims.m)
            .expect("validated problem file");
        Some(BilevelProblem::new(bf, upper.x_box.clone(), self.lower_problem()))
    }

    pub fn point(&self, name: &str) -> Option<&NamedPoint> {
        self.points.get(name)
    }

    /// Splits a flat coordinate list into the (x, y) parts by declared dims.
    pub fn split_point(&self, flat: &[f64]) -> Option<(Vec<f64>, Vec<f64>)> {
        if flat.len() != self.dims.n + self.dims.m {
            return None;
        }
        Some((flat[..self.dims.n].to_vec(), flat[self.dims.n..].to_vec()))
    }
}
