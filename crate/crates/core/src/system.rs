//! Constraint systems: the family (h_i) defining the feasible-set map, plus
//! pointwise primitives shared by every probe (residuals, active sets).

use std::sync::Arc;

use serde::Serialize;

use crate::expr::{Axis, Expr};

/// Abstract view of a constraint family over parameters x and decisions y.
/// Labels identify constraints; inequality and equality labels are disjoint.
///
/// `value` and `grad_y` must tolerate any point: evaluation failures map to
/// non-finite outputs that callers detect, never to panics.
pub trait ConstraintSystem: Send + Sync {
    fn n(&self) -> usize;
    fn m(&self) -> usize;
    fn ineq_labels(&self) -> Vec<usize>;
    fn eq_labels(&self) -> Vec<usize>;
    fn value(&self, label: usize, x: &[f64], y: &[f64]) -> f64;
    fn grad_y(&self, label: usize, x: &[f64], y: &[f64]) -> Vec<f64>;
    /// True when any constraint contains a division; reports carry a warning
    /// because claims near poles are unreliable.
    fn division_present(&self) -> bool;
}

/// Symbolic constraint family. Inequalities get labels 1..=l, equalities
/// l+1..=p, matching the index-set convention used throughout.
#[derive(Clone, Debug)]
pub struct ParametricSystem {
    n: usize,
    m: usize,
    ineq: Vec<Expr>,
    eq: Vec<Expr>,
    ineq_grads: Vec<Vec<Expr>>,
    eq_grads: Vec<Vec<Expr>>,
}

impl ParametricSystem {
    pub fn new(n: usize, m: usize, ineq: Vec<Expr>, eq: Vec<Expr>) -> Self {
        for e in ineq.iter().chain(&eq) {
            assert_eq!(e.dims(), (n, m), "constraint dimensions");
        }
        let ineq_grads = ineq.iter().map(|e| e.grad(Axis::Y)).collect();
        let eq_grads = eq.iter().map(|e| e.grad(Axis::Y)).collect();
        ParametricSystem { n, m, ineq, eq, ineq_grads, eq_grads }
    }

    /// Number of inequality constraints.
    pub fn l(&self) -> usize {
        self.ineq.len()
    }

    /// Total number of constraints.
    pub fn p(&self) -> usize {
        self.ineq.len() + self.eq.len()
    }

    pub fn ineq_exprs(&self) -> &[Expr] {
        &self.ineq
    }

    pub fn eq_exprs(&self) -> &[Expr] {
        &self.eq
    }

    fn lookup(&self, label: usize) -> (&Expr, &[Expr]) {
        let l = self.ineq.len();
        if (1..=l).contains(&label) {
            (&self.ineq[label - 1], &self.ineq_grads[label - 1])
        } else if (l + 1..=self.p()).contains(&label) {
            (&self.eq[label - l - 1], &self.eq_grads[label - l - 1])
        } else {
            panic!("unknown constraint label {label}");
        }
    }
}

impl ConstraintSystem for ParametricSystem {
    fn n(&self) -> usize {
        self.n
    }

    fn m(&self) -> usize {
        self.m
    }

    fn ineq_labels(&self) -> Vec<usize> {
        (1..=self.ineq.len()).collect()
    }

    fn eq_labels(&self) -> Vec<usize> {
        (self.ineq.len() + 1..=self.p()).collect()
    }

    fn value(&self, label: usize, x: &[f64], y: &[f64]) -> f64 {
        let (expr, _) = self.lookup(label);
        expr.eval(x, y).unwrap_or(f64::INFINITY)
    }

    fn grad_y(&self, label: usize, x: &[f64], y: &[f64]) -> Vec<f64> {
        let (_, grads) = self.lookup(label);
        grads
            .iter()
            .map(|g| g.eval(x, y).unwrap_or(f64::NAN))
            .collect()
    }

    fn division_present(&self) -> bool {
        self.ineq.iter().chain(&self.eq).any(|e| e.contains_division())
    }
}

/// Constraint residual: max over positive inequality parts and absolute
/// equality parts, zero at feasible points.
#[derive(Clone, Debug, Serialize)]
pub struct Residual {
    pub value: f64,
    pub argmax_constraint: Option<usize>,
}

pub fn residual(sys: &dyn ConstraintSystem, x: &[f64], y: &[f64]) -> Residual {
    let mut value = 0.0;
    let mut argmax = None;
    for label in sys.ineq_labels() {
        let v = sys.value(label, x, y).max(0.0);
        if v > value {
            value = v;
            argmax = Some(label);
        }
    }
    for label in sys.eq_labels() {
        let v = sys.value(label, x, y).abs();
        if v > value {
            value = v;
            argmax = Some(label);
        }
    }
    Residual { value, argmax_constraint: argmax }
}

/// Squared-violation merit used by penalty descent, with its y-gradient.
pub fn violation_sq(sys: &dyn ConstraintSystem, x: &[f64], y: &[f64]) -> f64 {
    let mut total = 0.0;
    for label in sys.ineq_labels() {
        let v = sys.value(label, x, y).max(0.0);
        total += v * v;
    }
    for label in sys.eq_labels() {
        let v = sys.value(label, x, y);
        total += v * v;
    }
    total
}

pub fn violation_sq_grad(sys: &dyn ConstraintSystem, x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; sys.m()];
    for label in sys.ineq_labels() {
        let v = sys.value(label, x, y);
        if v > 0.0 {
            for (gi, hi) in g.iter_mut().zip(sys.grad_y(label, x, y)) {
                *gi += 2.0 * v * hi;
            }
        }
    }
    for label in sys.eq_labels() {
        let v = sys.value(label, x, y);
        if v != 0.0 {
            for (gi, hi) in g.iter_mut().zip(sys.grad_y(label, x, y)) {
                *gi += 2.0 * v * hi;
            }
        }
    }
    g
}

/// Inequality labels active at the point: |h_i| within tol_act.
#[derive(Clone, Debug, Serialize)]
pub struct ActiveSet {
    pub indices: Vec<usize>,
    pub tol_act: f64,
}

pub fn active_set(sys: &dyn ConstraintSystem, x: &[f64], y: &[f64], tol_act: f64) -> ActiveSet {
    let indices = sys
        .ineq_labels()
        .into_iter()
        .filter(|label| sys.value(*label, x, y).abs() <= tol_act)
        .collect();
    ActiveSet { indices, tol_act }
}

/// Shared handle used wherever systems cross thread or module boundaries.
pub type SharedSystem = Arc<dyn ConstraintSystem>;
