//! Local minimization over a feasible set: coarse grid (or multistart) to
//! place candidates, then quadratic-penalty rounds polished with BFGS.
//!
//! The search is a bounded heuristic: it explores a box around a caller
//! supplied center and reports every polished candidate that lands feasible
//! within tol_feas. Candidates are deduplicated and sorted, and all steps are
//! deterministic for a fixed seed regardless of thread count.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::sampling::{stream, TAG_MULTISTART};
use crate::system::{residual, violation_sq, violation_sq_grad, ConstraintSystem};

#[derive(Clone, Debug)]
pub struct SolveCfg {
    /// Half-width of the search box around the center.
    pub box_halfwidth: f64,
    /// Grid refinement levels after the coarse pass, each shrinking the
    /// local box by 10x.
    pub refine_levels: usize,
    /// Start count for dimensions above 2, where grids are too costly.
    pub restarts: usize,
    /// Quadratic-penalty continuation rounds; weight grows 10x per round.
    pub penalty_rounds: usize,
    /// Additional rounds granted while the residual stays above
    /// 0.1 x tol_feas. Near-degenerate constraints (an equality whose
    /// gradient nearly vanishes) need penalty weights far beyond the
    /// standard ladder before feasibility closes.
    pub extra_penalty_rounds: usize,
    /// Penalty weight of the first round.
    pub rho0: f64,
    /// Candidates must reach this constraint residual to be reported.
    pub tol_feas: f64,
    /// Gradient-norm target of the penalized objective.
    pub stationarity: f64,
    /// Candidates closer than this (max-norm) collapse to one.
    pub dedup: f64,
    /// Objective window used by callers to group near-optimal candidates.
    pub value_window: f64,
    pub seed: u64,
}

impl Default for SolveCfg {
    fn default() -> Self {
        SolveCfg {
            box_halfwidth: 4.0,
            refine_levels: 3,
            restarts: 16,
            penalty_rounds: 6,
            extra_penalty_rounds: 5,
            rho0: 1e3,
            tol_feas: 1e-6,
            stationarity: 1e-9,
            dedup: 1e-4,
            value_window: 1e-6,
            seed: 42,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Candidate {
    pub y: Vec<f64>,
    pub objective: f64,
    pub residual: f64,
    /// Final penalized-gradient norm. Small values mean the point carries an
    /// approximate stationarity certificate.
    pub stationarity: f64,
}

#[derive(Clone, Debug)]
pub struct SolveTrace {
    pub starts: usize,
    pub polished: usize,
    pub best_stationarity: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    /// Feasible polished candidates, sorted by objective then lexicographic y.
    pub candidates: Vec<Candidate>,
    pub trace: SolveTrace,
}

impl SolveOutcome {
    pub fn best(&self) -> Option<&Candidate> {
        self.candidates.first()
    }
}

/// Objective plus gradient, both evaluated at fixed x.
pub type Obj<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);
pub type ObjGrad<'a> = &'a (dyn Fn(&[f64]) -> Vec<f64> + Sync);

/// Endpoint-exact affine interpolation; integer-representable nodes come out
/// exact, which downstream grid classification relies on.
pub fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    assert!(k >= 2);
    let last = (k - 1) as f64;
    (0..k)
        .map(|i| (lo * (last - i as f64) + hi * i as f64) / last)
        .collect()
}

pub fn minimize_over_feasible(
    sys: &dyn ConstraintSystem,
    x: &[f64],
    obj: Obj,
    obj_grad: ObjGrad,
    center: &[f64],
    cfg: &SolveCfg,
) -> SolveOutcome {
    let m = sys.m();
    assert_eq!(center.len(), m, "center dimension");
    if m == 0 {
        let r = residual(sys, x, &[]);
        let candidates = if r.value <= cfg.tol_feas {
            vec![Candidate { y: vec![], objective: obj(&[]), residual: r.value, stationarity: 0.0 }]
        } else {
            vec![]
        };
        return SolveOutcome {
            candidates,
            trace: SolveTrace { starts: 0, polished: 0, best_stationarity: None },
        };
    }

    let starts = if m <= 2 {
        grid_pool(sys, x, obj, center, cfg)
    } else {
        multistart_pool(center, cfg)
    };
    let n_starts = starts.len();

    let polished: Vec<(Vec<f64>, f64)> = starts
        .par_iter()
        .map(|s| {
            let (y, gnorm) = polish(sys, x, obj, obj_grad, s, cfg);
            if residual(sys, x, &y).value <= cfg.tol_feas {
                return (y, gnorm);
            }
            // Early penalty rounds can walk a start into an infeasible basin
            // whose merit is lower at small weights and that the iterate
            // cannot leave once the weight grows. Pure violation descent from
            // the start recovers the abandoned branch when the start was near
            // it; the restored point carries no stationarity certificate.
            let restored = restore_feasibility(sys, x, s, cfg);
            if residual(sys, x, &restored).value <= cfg.tol_feas {
                return (restored, f64::INFINITY);
            }
            (y, gnorm)
        })
        .collect();

    let mut candidates: Vec<Candidate> = polished
        .into_iter()
        .filter_map(|(y, gnorm)| {
            let o = obj(&y);
            if !o.is_finite() || y.iter().any(|v| !v.is_finite()) {
                return None;
            }
            let r = residual(sys, x, &y).value;
            if r <= cfg.tol_feas {
                Some(Candidate { y, objective: o, residual: r, stationarity: gnorm })
            } else {
                None
            }
        })
        .collect();

    candidates.sort_by(|a, b| {
        a.objective
            .total_cmp(&b.objective)
            .then_with(|| lex_cmp(&a.y, &b.y))
    });
    let mut kept: Vec<Candidate> = Vec::new();
    for c in candidates {
        let dup = kept
            .iter()
            .any(|k| max_norm_dist(&k.y, &c.y) <= cfg.dedup);
        if !dup {
            kept.push(c);
        }
    }

    let best_stationarity = kept.first().map(|c| c.stationarity);
    SolveOutcome {
        candidates: kept,
        trace: SolveTrace { starts: n_starts, polished: n_starts, best_stationarity },
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (u, v) in a.iter().zip(b) {
        let c = u.total_cmp(v);
        if c != std::cmp::Ordering::Equal {
            return c;
        }
    }
    std::cmp::Ordering::Equal
}

fn max_norm_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v).abs())
        .fold(0.0, f64::max)
}

/// Scored point: objective and squared violation are kept separate so merit
/// can be re-weighted per refinement level without re-evaluating.
struct Scored {
    y: Vec<f64>,
    obj: f64,
    viol: f64,
}

impl Scored {
    fn merit(&self, rho: f64) -> f64 {
        if !self.obj.is_finite() || !self.viol.is_finite() {
            f64::INFINITY
        } else {
            self.obj + rho * self.viol
        }
    }
}

fn score_points(
    sys: &dyn ConstraintSystem,
    x: &[f64],
    obj: Obj,
    points: Vec<Vec<f64>>,
) -> Vec<Scored> {
    points
        .into_par_iter()
        .map(|y| {
            let o = obj(&y);
            let v = violation_sq(sys, x, &y);
            Scored { y, obj: o, viol: v }
        })
        .collect()
}

/// Pick up to `keep` low-merit points that are pairwise separated, so distinct
/// local basins each get a polish start.
fn diverse_select(scored: &[Scored], rho: f64, keep: usize, separation: f64) -> Vec<Vec<f64>> {
    let mut order: Vec<usize> = (0..scored.len()).collect();
    order.sort_by(|&a, &b| scored[a].merit(rho).total_cmp(&scored[b].merit(rho)).then(a.cmp(&b)));
    let mut picked: Vec<Vec<f64>> = Vec::new();
    for idx in order {
        if !scored[idx].merit(rho).is_finite() {
            break;
        }
        if picked
            .iter()
            .all(|p| max_norm_dist(p, &scored[idx].y) > separation)
        {
            picked.push(scored[idx].y.clone());
            if picked.len() == keep {
                break;
            }
        }
    }
    picked
}

const POOL: usize = 4;

fn grid_nodes(center: &[f64], halfwidth: f64, per_dim: usize) -> Vec<Vec<f64>> {
    let m = center.len();
    let axes: Vec<Vec<f64>> = center
        .iter()
        .map(|c| linspace(c - halfwidth, c + halfwidth, per_dim))
        .collect();
    let mut out = Vec::with_capacity(per_dim.pow(m as u32));
    let mut idx = vec![0usize; m];
    loop {
        out.push((0..m).map(|d| axes[d][idx[d]]).collect());
        let mut d = 0;
        loop {
            if d == m {
                return out;
            }
            idx[d] += 1;
            if idx[d] < per_dim {
                break;
            }
            idx[d] = 0;
            d += 1;
        }
    }
}

fn grid_pool(
    sys: &dyn ConstraintSystem,
    x: &[f64],
    obj: Obj,
    center: &[f64],
    cfg: &SolveCfg,
) -> Vec<Vec<f64>> {
    let m = center.len();
    let coarse_dim = if m == 1 { 81 } else { 41 };
    let fine_dim = if m == 1 { 41 } else { 21 };

    // The least-violating node seen at any level (ties broken by objective) is
    // pinned into the final pool. Late refinement levels select by heavily
    // weighted violation, and with a tiny separation all slots can fill from
    // one shallow infeasible basin, dropping an isolated feasible branch far
    // from the center. Lexicographic order, not a feasibility cutoff: grid
    // nodes on the branch carry rounding-level violations.
    let mut pinned: Option<(f64, f64, Vec<f64>)> = None;
    let mut pin = |scored: &[Scored]| {
        for s in scored {
            if !s.viol.is_finite() || !s.obj.is_finite() {
                continue;
            }
            let better = match &pinned {
                None => true,
                Some((v, o, _)) => s.viol < *v || (s.viol == *v && s.obj < *o),
            };
            if better {
                pinned = Some((s.viol, s.obj, s.y.clone()));
            }
        }
    };

    let scored = score_points(sys, x, obj, grid_nodes(center, cfg.box_halfwidth, coarse_dim));
    pin(&scored);
    let spacing = 2.0 * cfg.box_halfwidth / (coarse_dim - 1) as f64;
    let mut pool = diverse_select(&scored, 100.0, POOL, 1.5 * spacing);
    if pool.is_empty() {
        pool.push(center.to_vec());
    }
    // Coarse picks are one-per-basin representatives. Refinement re-selects
    // globally and can migrate every slot into whichever basin looks cheapest
    // at high weight, so the originals are kept as extra polish starts.
    let coarse_picks = pool.clone();

    for level in 1..=cfg.refine_levels {
        let halfwidth = cfg.box_halfwidth / 10f64.powi(level as i32);
        let rho = 100.0 * 10f64.powi(level as i32);
        let spacing = 2.0 * halfwidth / (fine_dim - 1) as f64;
        let mut points: Vec<Vec<f64>> = pool.clone();
        for p in &pool {
            points.extend(grid_nodes(p, halfwidth, fine_dim));
        }
        let scored = score_points(sys, x, obj, points);
        pin(&scored);
        let refined = diverse_select(&scored, rho, POOL, 1.5 * spacing);
        if !refined.is_empty() {
            pool = refined;
        }
    }
    for p in coarse_picks {
        if pool.iter().all(|q| max_norm_dist(q, &p) > cfg.dedup) {
            pool.push(p);
        }
    }
    if let Some((_, _, y)) = pinned {
        if pool.iter().all(|p| max_norm_dist(p, &y) > cfg.dedup) {
            pool.push(y);
        }
    }
    pool
}

/// Violation descent from a start, ignoring the objective. Recovers a nearby
/// feasible point after a penalized polish escaped to a different basin.
fn restore_feasibility(
    sys: &dyn ConstraintSystem,
    x: &[f64],
    start: &[f64],
    cfg: &SolveCfg,
) -> Vec<f64> {
    let f = |p: &[f64]| {
        let v = violation_sq(sys, x, p);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let g = |p: &[f64]| violation_sq_grad(sys, x, p);
    let (y, _) = bfgs(&f, &g, start, 300, cfg.stationarity, 2.0 * cfg.box_halfwidth);
    y
}

fn multistart_pool(center: &[f64], cfg: &SolveCfg) -> Vec<Vec<f64>> {
    let count = cfg.restarts.max(1);
    let mut pool = vec![center.to_vec()];
    for k in 1..count {
        let mut rng = stream(cfg.seed, TAG_MULTISTART, 0, k);
        let y: Vec<f64> = center
            .iter()
            .map(|c| c + rand::Rng::gen_range(&mut rng, -cfg.box_halfwidth..=cfg.box_halfwidth))
            .collect();
        pool.push(y);
    }
    pool
}

/// Penalty continuation from rho0 upward, each round minimized with BFGS.
/// Returns the final iterate and its penalized-gradient norm at the last
/// round's weight.
fn polish(
    sys: &dyn ConstraintSystem,
    x: &[f64],
    obj: Obj,
    obj_grad: ObjGrad,
    start: &[f64],
    cfg: &SolveCfg,
) -> (Vec<f64>, f64) {
    let mut y = start.to_vec();
    let mut gnorm = f64::INFINITY;
    let max_step = 2.0 * cfg.box_halfwidth;
    let max_rounds = cfg.penalty_rounds + cfg.extra_penalty_rounds;
    for round in 0..max_rounds {
        let rho = cfg.rho0 * 10f64.powi(round as i32);
        let f = |p: &[f64]| {
            let v = obj(p) + rho * violation_sq(sys, x, p);
            if v.is_finite() {
                v
            } else {
                f64::INFINITY
            }
        };
        let g = |p: &[f64]| {
            let mut gv = obj_grad(p);
            for (gi, vi) in gv.iter_mut().zip(violation_sq_grad(sys, x, p)) {
                *gi += rho * vi;
            }
            gv
        };
        let (y1, gn) = bfgs(&f, &g, &y, 120, cfg.stationarity, max_step);
        y = y1;
        gnorm = gn;
        if round + 1 >= cfg.penalty_rounds && residual(sys, x, &y).value <= 0.1 * cfg.tol_feas {
            break;
        }
    }
    (y, gnorm)
}

/// BFGS with Armijo backtracking. The inverse-Hessian approximation keeps the
/// method usable at penalty weights where steepest descent stalls.
fn bfgs(
    f: &dyn Fn(&[f64]) -> f64,
    g: &dyn Fn(&[f64]) -> Vec<f64>,
    start: &[f64],
    max_iter: usize,
    g_tol: f64,
    max_step: f64,
) -> (Vec<f64>, f64) {
    let m = start.len();
    let mut y = DVector::from_column_slice(start);
    let mut grad = DVector::from_vec(g(y.as_slice()));
    if grad.iter().any(|v| !v.is_finite()) {
        return (start.to_vec(), f64::INFINITY);
    }
    let mut fy = f(y.as_slice());
    let mut hinv = DMatrix::<f64>::identity(m, m);

    for _ in 0..max_iter {
        let gnorm = grad.norm();
        if gnorm <= g_tol {
            break;
        }
        let mut dir = -(&hinv * &grad);
        let mut slope = grad.dot(&dir);
        if !(slope < -1e-14 * gnorm * dir.norm()) {
            hinv = DMatrix::identity(m, m);
            dir = -grad.clone();
            slope = -gnorm * gnorm;
        }
        let dnorm = dir.norm();
        if dnorm > max_step {
            dir *= max_step / dnorm;
            slope *= max_step / dnorm;
        }

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..55 {
            let cand = &y + &dir * t;
            let fc = f(cand.as_slice());
            if fc.is_finite() && fc <= fy + 1e-4 * t * slope {
                accepted = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((y1, f1)) = accepted else { break };

        let grad1 = DVector::from_vec(g(y1.as_slice()));
        if grad1.iter().any(|v| !v.is_finite()) {
            y = y1;
            break;
        }
        let s = &y1 - &y;
        let dg = &grad1 - &grad;
        let sy = s.dot(&dg);
        if sy > 1e-12 * s.norm() * dg.norm() {
            let r = 1.0 / sy;
            let hs = &hinv * &dg;
            let shs = dg.dot(&hs);
            // standard inverse update, expanded to avoid temporaries of I
            let c1 = (1.0 + r * shs) * r;
            hinv = hinv.clone() + &s * s.transpose() * c1
                - (&s * hs.transpose() + &hs * s.transpose()) * r;
        }
        y = y1;
        grad = grad1;
        fy = f1;
    }
    let gn = grad.norm();
    (y.as_slice().to_vec(), gn)
}
