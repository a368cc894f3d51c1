//! Lower-level parametric solves: the marginal value phi(x), solution-set
//! representatives, grid scans, Lipschitz/discontinuity estimation for phi,
//! and probes of the solution map built from them.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::expr::{Axis, Expr};
use crate::geom::{
    estimate_rregularity, inner_semicontinuity_probe, IscProbe, IscVerdict, ProbeCfg,
    RegularityProbe,
};
use crate::report::{fmt_g17, ExtReal, Tolerances};
use crate::sampling::NeighborhoodSampler;
use crate::solver::{linspace, minimize_over_feasible, SolveCfg};
use crate::system::{residual, ConstraintSystem, ParametricSystem};

/// User assertions about the lower-level problem. Echoed into reports,
/// never inferred.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct Flags {
    pub convex_in_y: bool,
    pub locally_bounded: bool,
}

#[derive(Clone, Debug)]
pub struct ParametricProblem {
    pub sys: ParametricSystem,
    pub f: Expr,
    f_grad: Vec<Expr>,
    pub flags: Flags,
}

impl ParametricProblem {
    pub fn new(sys: ParametricSystem, f: Expr, flags: Flags) -> Self {
        assert_eq!(f.dims(), (sys.n(), sys.m()), "objective dimensions");
        let f_grad = f.grad(Axis::Y);
        ParametricProblem { sys, f, f_grad, flags }
    }

    pub fn objective(&self, x: &[f64], y: &[f64]) -> f64 {
        self.f.eval(x, y).unwrap_or(f64::INFINITY)
    }

    pub fn objective_grad_y(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        self.f_grad
            .iter()
            .map(|g| g.eval(x, y).unwrap_or(f64::NAN))
            .collect()
    }

    pub fn division_present(&self) -> bool {
        self.sys.division_present() || self.f.contains_division()
    }
}

/// Representatives kept per parameter; the solution sets in scope are finite
/// and small, anything larger is truncated deterministically.
const REP_CAP: usize = 16;

#[derive(Clone, Debug, Serialize)]
pub struct SolveNodeTrace {
    pub starts: usize,
    pub best_stationarity: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LowerSolution {
    pub phi: ExtReal,
    /// Feasible minimizer candidates within value_window of phi, deduplicated
    /// and sorted by objective then lexicographic order.
    pub representatives: Vec<Vec<f64>>,
    pub trace: SolveNodeTrace,
}

impl LowerSolution {
    pub fn is_empty(&self) -> bool {
        self.representatives.is_empty()
    }
}

pub fn solve_lower(problem: &ParametricProblem, x: &[f64], cfg: &SolveCfg) -> LowerSolution {
    let obj = |y: &[f64]| problem.objective(x, y);
    let obj_grad = |y: &[f64]| {
        let g = problem.objective_grad_y(x, y);
        if g.iter().all(|v| v.is_finite()) {
            g
        } else {
            vec![f64::NAN; y.len()]
        }
    };
    let mut local = cfg.clone();
    if problem.sys.m() > 2 {
        local.restarts = (8 * problem.sys.m()).clamp(cfg.restarts, 64);
    }
    let center = vec![0.0; problem.sys.m()];
    let out = minimize_over_feasible(&problem.sys, x, &obj, &obj_grad, &center, &local);
    match out.best() {
        None => LowerSolution {
            phi: ExtReal::INF,
            representatives: vec![],
            trace: SolveNodeTrace { starts: out.trace.starts, best_stationarity: None },
        },
        Some(best) => {
            let phi = best.objective;
            let representatives = out
                .candidates
                .iter()
                .filter(|c| c.objective <= phi + cfg.value_window)
                .take(REP_CAP)
                .map(|c| c.y.clone())
                .collect();
            LowerSolution {
                phi: ExtReal(phi),
                representatives,
                trace: SolveNodeTrace {
                    starts: out.trace.starts,
                    best_stationarity: out.trace.best_stationarity,
                },
            }
        }
    }
}

/// Marginal-value cache keyed by quantized parameters (1e-9 grid). Neighbor
/// probes revisit the same x heavily; the cache makes re-solves free and
/// keeps reported phi values consistent within a run.
pub struct PhiMemo {
    problem: Arc<ParametricProblem>,
    cfg: SolveCfg,
    cache: Mutex<BTreeMap<Vec<i64>, f64>>,
}

fn quantize(x: &[f64]) -> Vec<i64> {
    x.iter()
        .map(|v| {
            let q = v * 1e9;
            if q >= i64::MAX as f64 {
                i64::MAX
            } else if q <= i64::MIN as f64 {
                i64::MIN
            } else {
                q.round() as i64
            }
        })
        .collect()
}

impl PhiMemo {
    pub fn new(problem: Arc<ParametricProblem>, cfg: SolveCfg) -> Arc<Self> {
        Arc::new(PhiMemo { problem, cfg, cache: Mutex::new(BTreeMap::new()) })
    }

    pub fn problem(&self) -> &Arc<ParametricProblem> {
        &self.problem
    }

    pub fn cfg(&self) -> &SolveCfg {
        &self.cfg
    }

    /// phi(x); +inf when no feasible point was found.
    pub fn phi(&self, x: &[f64]) -> f64 {
        let key = quantize(x);
        if let Some(v) = self.cache.lock().unwrap().get(&key) {
            return *v;
        }
        let v = solve_lower(&self.problem, x, &self.cfg).phi.0;
        self.cache.lock().unwrap().insert(key, v);
        v
    }

    pub fn seed_value(&self, x: &[f64], phi: f64) {
        self.cache.lock().unwrap().insert(quantize(x), phi);
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub steps: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GridSpec {
    pub axes: Vec<AxisSpec>,
}

const GRID_CAP: usize = 1_000_000;

#[derive(Debug, thiserror::Error)]
pub enum ParametricError {
    #[error("grid has {nodes} nodes, cap is {GRID_CAP}")]
    GridTooLarge { nodes: usize },
    #[error("axis count {got} does not match parameter dimension {expected}")]
    AxisMismatch { got: usize, expected: usize },
    #[error("malformed axis: {0}")]
    BadAxis(String),
    #[error("point is not a lower-level solution: f - phi = {gap:.3e}")]
    NotASolution { gap: f64 },
}

impl GridSpec {
    pub fn validate(&self, n: usize) -> Result<(), ParametricError> {
        if self.axes.len() != n {
            return Err(ParametricError::AxisMismatch { got: self.axes.len(), expected: n });
        }
        let mut total: usize = 1;
        for a in &self.axes {
            if !(a.min.is_finite() && a.max.is_finite()) || a.min > a.max || a.steps == 0 {
                return Err(ParametricError::BadAxis(format!(
                    "min {} max {} steps {}",
                    a.min, a.max, a.steps
                )));
            }
            if a.steps == 1 && a.min != a.max {
                return Err(ParametricError::BadAxis(
                    "single-step axis needs min == max".into(),
                ));
            }
            total = total.saturating_mul(a.steps);
        }
        if total > GRID_CAP {
            return Err(ParametricError::GridTooLarge { nodes: total });
        }
        Ok(())
    }

    pub fn nodes(&self) -> Vec<Vec<f64>> {
        let axes: Vec<Vec<f64>> = self
            .axes
            .iter()
            .map(|a| {
                if a.steps == 1 {
                    vec![a.min]
                } else {
                    linspace(a.min, a.max, a.steps)
                }
            })
            .collect();
        let mut out = Vec::new();
        let mut idx = vec![0usize; axes.len()];
        loop {
            out.push((0..axes.len()).map(|d| axes[d][idx[d]]).collect());
            let mut d = axes.len();
            loop {
                if d == 0 {
                    return out;
                }
                d -= 1;
                idx[d] += 1;
                if idx[d] < axes[d].len() {
                    break;
                }
                idx[d] = 0;
                if d == 0 {
                    return out;
                }
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanNode {
    pub x: Vec<f64>,
    pub phi: ExtReal,
    pub n_solutions: usize,
    pub representatives: Vec<Vec<f64>>,
    pub trace: SolveNodeTrace,
}

#[derive(Clone, Debug, Serialize)]
pub struct GridScan {
    pub spec: GridSpec,
    pub nodes: Vec<ScanNode>,
}

impl GridScan {
    /// One row per node: x-coords, phi, solution count, first representative.
    pub fn to_csv(&self, n: usize, m: usize) -> String {
        let mut out = String::new();
        for i in 1..=n {
            out.push_str(&format!("x{i},"));
        }
        out.push_str("phi,n_solutions");
        for j in 1..=m {
            out.push_str(&format!(",y{j}"));
        }
        out.push('\n');
        for node in &self.nodes {
            for v in &node.x {
                out.push_str(&fmt_g17(*v));
                out.push(',');
            }
            if node.phi.is_finite() {
                out.push_str(&fmt_g17(node.phi.0));
            } else {
                out.push_str("inf");
            }
            out.push_str(&format!(",{}", node.n_solutions));
            match node.representatives.first() {
                Some(rep) => {
                    for v in rep {
                        out.push(',');
                        out.push_str(&fmt_g17(*v));
                    }
                }
                None => {
                    for _ in 0..m {
                        out.push(',');
                    }
                }
            }
            out.push('\n');
        }
        out
    }
}

pub fn scan(
    problem: &ParametricProblem,
    spec: &GridSpec,
    cfg: &SolveCfg,
) -> Result<GridScan, ParametricError> {
    spec.validate(problem.sys.n())?;
    let nodes: Vec<ScanNode> = spec
        .nodes()
        .into_par_iter()
        .map(|x| {
            let sol = solve_lower(problem, &x, cfg);
            ScanNode {
                x,
                phi: sol.phi,
                n_solutions: sol.representatives.len(),
                representatives: sol.representatives,
                trace: sol.trace,
            }
        })
        .collect();
    Ok(GridScan { spec: spec.clone(), nodes })
}

#[derive(Clone, Debug)]
pub struct LipschitzCfg {
    /// Slopes above this after refinement are reported as discontinuities.
    pub slope_cap: f64,
    /// Refinement triggers at slope_cap / trigger_divisor.
    pub trigger_divisor: f64,
    pub refinements: usize,
    pub refine_points: usize,
}

impl Default for LipschitzCfg {
    fn default() -> Self {
        LipschitzCfg { slope_cap: 1e3, trigger_divisor: 200.0, refinements: 2, refine_points: 11 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Discontinuity {
    pub between: (Vec<f64>, Vec<f64>),
    pub initial_slope: f64,
    pub refined_slope: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LipschitzReport {
    pub slope_cap: f64,
    /// Max slope to a finite neighbor, per scan node; null outside dom.
    pub node_max_slope: Vec<Option<f64>>,
    /// Max neighbor slope over the requested window (whole grid if none).
    pub modulus: Option<f64>,
    pub window: Option<Vec<(f64, f64)>>,
    pub discontinuities: Vec<Discontinuity>,
}

fn in_window(x: &[f64], window: &Option<Vec<(f64, f64)>>) -> bool {
    match window {
        None => true,
        Some(w) => x.iter().zip(w).all(|(v, (lo, hi))| v >= lo && v <= hi),
    }
}

/// Neighbor-difference slopes of phi between finite-phi grid nodes, with
/// steep pairs re-solved at shrinking spacing to separate genuinely steep
/// Lipschitz behavior from discontinuities.
pub fn lipschitz_scan(
    problem: &ParametricProblem,
    scan: &GridScan,
    window: Option<Vec<(f64, f64)>>,
    cfg: &SolveCfg,
    lip: &LipschitzCfg,
) -> LipschitzReport {
    let shape: Vec<usize> = scan.spec.axes.iter().map(|a| a.steps).collect();
    let n_axes = shape.len();
    let strides: Vec<usize> = {
        let mut s = vec![1usize; n_axes];
        for d in (0..n_axes.saturating_sub(1)).rev() {
            s[d] = s[d + 1] * shape[d + 1];
        }
        s
    };

    let mut node_max_slope: Vec<Option<f64>> = vec![None; scan.nodes.len()];
    let mut modulus: Option<f64> = None;
    let mut steep_pairs: Vec<(usize, usize, f64)> = Vec::new();

    for (i, node) in scan.nodes.iter().enumerate() {
        if !node.phi.is_finite() {
            continue;
        }
        for d in 0..n_axes {
            let pos = i / strides[d] % shape[d];
            if pos + 1 >= shape[d] {
                continue;
            }
            let j = i + strides[d];
            let other = &scan.nodes[j];
            if !other.phi.is_finite() {
                continue;
            }
            let dx: f64 = node
                .x
                .iter()
                .zip(&other.x)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if dx <= 0.0 {
                continue;
            }
            let slope = (node.phi.0 - other.phi.0).abs() / dx;
            for idx in [i, j] {
                let cur = node_max_slope[idx].unwrap_or(0.0);
                node_max_slope[idx] = Some(cur.max(slope));
            }
            if in_window(&node.x, &window) && in_window(&other.x, &window) {
                modulus = Some(modulus.unwrap_or(0.0).max(slope));
            }
            if slope > lip.slope_cap / lip.trigger_divisor {
                steep_pairs.push((i, j, slope));
            }
        }
    }

    let mut discontinuities = Vec::new();
    for (i, j, slope0) in steep_pairs {
        let mut a = scan.nodes[i].x.clone();
        let mut b = scan.nodes[j].x.clone();
        let mut worst = slope0;
        for _ in 0..lip.refinements {
            let pts: Vec<Vec<f64>> = (0..lip.refine_points)
                .map(|k| {
                    let t = k as f64 / (lip.refine_points - 1) as f64;
                    a.iter().zip(&b).map(|(u, v)| u * (1.0 - t) + v * t).collect()
                })
                .collect();
            let phis: Vec<f64> = pts
                .par_iter()
                .map(|x| solve_lower(problem, x, cfg).phi.0)
                .collect();
            let mut best: Option<(usize, f64)> = None;
            for k in 0..pts.len() - 1 {
                if !(phis[k].is_finite() && phis[k + 1].is_finite()) {
                    continue;
                }
                let dx: f64 = pts[k]
                    .iter()
                    .zip(&pts[k + 1])
                    .map(|(u, v)| (u - v) * (u - v))
                    .sum::<f64>()
                    .sqrt();
                if dx <= 0.0 {
                    continue;
                }
                let s = (phis[k] - phis[k + 1]).abs() / dx;
                if best.map_or(true, |(_, cur)| s > cur) {
                    best = Some((k, s));
                }
            }
            let Some((k, s)) = best else { break };
            worst = s;
            a = pts[k].clone();
            b = pts[k + 1].clone();
        }
        if worst > lip.slope_cap {
            discontinuities.push(Discontinuity {
                between: (scan.nodes[i].x.clone(), scan.nodes[j].x.clone()),
                initial_slope: slope0,
                refined_slope: worst,
            });
        }
    }

    LipschitzReport {
        slope_cap: lip.slope_cap,
        node_max_slope,
        modulus,
        window,
        discontinuities,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SMapProbes {
    pub phi_at_center: ExtReal,
    pub objective_at_point: f64,
    pub rreg: RegularityProbe,
    pub isc_per_representative: Vec<IscProbe>,
    pub lsc_verdict: IscVerdict,
    pub flags: Flags,
}

/// Probes the solution map S through its constraint representation:
/// the base system plus the value-function constraint. The reference point
/// must solve the lower-level problem at the reference parameter.
pub fn s_map_probes(
    problem: &Arc<ParametricProblem>,
    cx: &[f64],
    cy: &[f64],
    sampler: &NeighborhoodSampler,
    cfg: &ProbeCfg,
    tols: &Tolerances,
) -> Result<SMapProbes, ParametricError> {
    let memo = PhiMemo::new(problem.clone(), cfg.solve.clone());
    let sol = solve_lower(problem, cx, &cfg.solve);
    if sol.phi.is_finite() {
        memo.seed_value(cx, sol.phi.0);
    }
    let f_center = problem.objective(cx, cy);
    let gap = f_center - sol.phi.0;
    let feas = residual(&problem.sys, cx, cy).value;
    if !sol.phi.is_finite() || gap.abs() > 1e-5 || feas > tols.tol_feas {
        return Err(ParametricError::NotASolution {
            gap: if sol.phi.is_finite() { gap } else { f64::INFINITY },
        });
    }

    let sol_sys = crate::cq::SolutionSystem::new(
        problem.clone(),
        crate::cq::H0Mode::Ineq,
        memo.clone(),
    );
    let rreg = estimate_rregularity(&sol_sys, cx, cy, sampler, cfg, tols.tol_feas);
    let isc_per_representative: Vec<IscProbe> = sol
        .representatives
        .iter()
        .map(|rep| inner_semicontinuity_probe(&sol_sys, cx, rep, sampler, cfg, tols.tol_feas))
        .collect();
    let lsc_verdict = if isc_per_representative
        .iter()
        .all(|p| p.verdict == IscVerdict::LikelyInner)
    {
        IscVerdict::LikelyInner
    } else if isc_per_representative
        .iter()
        .any(|p| p.verdict == IscVerdict::LikelyNot)
    {
        IscVerdict::LikelyNot
    } else {
        IscVerdict::Inconclusive
    };

    Ok(SMapProbes {
        phi_at_center: sol.phi,
        objective_at_point: f_center,
        rreg,
        isc_per_representative,
        lsc_verdict,
        flags: problem.flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    fn problem(n: usize, m: usize, ineq: &[&str], eq: &[&str], f: &str) -> ParametricProblem {
        let sys = ParametricSystem::new(
            n,
            m,
            ineq.iter().map(|t| parse_expr(t, n, m).unwrap()).collect(),
            eq.iter().map(|t| parse_expr(t, n, m).unwrap()).collect(),
        );
        ParametricProblem::new(
            sys,
            parse_expr(f, n, m).unwrap(),
            Flags { convex_in_y: true, locally_bounded: true },
        )
    }

    fn bilinear() -> ParametricProblem {
        problem(
            1,
            2,
            &["-y1 - 1", "y1 - 1", "-y2", "y2 - 1"],
            &["x1*y1 - y2"],
            "y1",
        )
    }

    #[test]
    fn marginal_value_piecewise_branches() {
        let p = bilinear();
        let cfg = SolveCfg::default();
        let a = solve_lower(&p, &[-2.0], &cfg);
        assert!((a.phi.0 + 0.5).abs() < 1e-5, "phi(-2) = {}", a.phi.0);
        assert_eq!(a.representatives.len(), 1);
        assert!((a.representatives[0][0] + 0.5).abs() < 1e-4);
        assert!((a.representatives[0][1] - 1.0).abs() < 1e-4);

        let b = solve_lower(&p, &[0.5], &cfg);
        assert!(b.phi.0.abs() < 1e-5, "phi(0.5) = {}", b.phi.0);
        assert!(b.representatives[0][0].abs() < 1e-4);
        assert!(b.representatives[0][1].abs() < 1e-4);

        let c = solve_lower(&p, &[-0.5], &cfg);
        assert!((c.phi.0 + 1.0).abs() < 1e-5, "phi(-0.5) = {}", c.phi.0);
        assert!((c.representatives[0][0] + 1.0).abs() < 1e-4);
        assert!((c.representatives[0][1] - 0.5).abs() < 1e-4);
    }

    #[test]
    fn empty_image_gives_infinite_phi() {
        let p = problem(1, 1, &["-y1", "y1 - x1"], &[], "y1");
        let sol = solve_lower(&p, &[-1.0], &SolveCfg::default());
        assert!(!sol.phi.is_finite());
        assert!(sol.is_empty());
    }

    #[test]
    fn memo_returns_identical_values() {
        let p = Arc::new(bilinear());
        let memo = PhiMemo::new(p, SolveCfg::default());
        let a = memo.phi(&[0.3]);
        let b = memo.phi(&[0.3]);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn grid_spec_validation() {
        let spec = GridSpec { axes: vec![AxisSpec { min: 0.0, max: 1.0, steps: 5 }] };
        assert!(spec.validate(1).is_ok());
        assert!(spec.validate(2).is_err());
        let big = GridSpec {
            axes: vec![
                AxisSpec { min: 0.0, max: 1.0, steps: 2000 },
                AxisSpec { min: 0.0, max: 1.0, steps: 2000 },
            ],
        };
        assert!(matches!(
            big.validate(2),
            Err(ParametricError::GridTooLarge { .. })
        ));
        let nodes = spec.nodes();
        assert_eq!(nodes.len(), 5);
        assert_eq!(nodes[0], vec![0.0]);
        assert_eq!(nodes[4], vec![1.0]);
    }

    #[test]
    fn scan_partitions_halfline_domain() {
        let p = problem(1, 1, &["-y1", "y1 - x1"], &[], "y1");
        let spec = GridSpec { axes: vec![AxisSpec { min: -1.0, max: 2.0, steps: 31 }] };
        let scan = scan(&p, &spec, &SolveCfg::default()).unwrap();
        for node in &scan.nodes {
            if node.x[0] < 0.0 {
                assert!(!node.phi.is_finite(), "x = {}", node.x[0]);
            } else {
                assert!(node.phi.0.abs() <= 1e-7, "x = {} phi = {}", node.x[0], node.phi.0);
            }
        }
        let csv = scan.to_csv(1, 1);
        assert!(csv.starts_with("x1,phi,n_solutions,y1\n"));
        assert!(csv.contains("inf"));
    }

    #[test]
    fn lipschitz_flags_jump_but_not_smooth_pieces() {
        let p = bilinear();
        let cfg = SolveCfg::default();
        let spec = GridSpec { axes: vec![AxisSpec { min: -2.0, max: 1.0, steps: 61 }] };
        let sc = scan(&p, &spec, &cfg).unwrap();
        let rep = lipschitz_scan(&p, &sc, None, &cfg, &LipschitzCfg::default());
        assert_eq!(rep.discontinuities.len(), 1, "{:?}", rep.discontinuities);
        let (a, b) = &rep.discontinuities[0].between;
        assert!(a[0] <= 0.0 && b[0] >= 0.0, "flag between {a:?} and {b:?}");
        assert!(rep.discontinuities[0].refined_slope > 1e3);
    }

    #[test]
    fn smooth_marginal_has_no_flags() {
        let p = problem(1, 1, &["-y1", "y1 - x1"], &[], "y1");
        let cfg = SolveCfg::default();
        let spec = GridSpec { axes: vec![AxisSpec { min: -1.0, max: 2.0, steps: 31 }] };
        let sc = scan(&p, &spec, &cfg).unwrap();
        let rep = lipschitz_scan(&p, &sc, None, &cfg, &LipschitzCfg::default());
        assert!(rep.discontinuities.is_empty());
        assert!(rep.modulus.unwrap_or(0.0) <= 1e-6);
    }

    #[test]
    fn solution_map_probe_separates_full_and_restricted_parameter_spaces() {
        use crate::geom::RRegVerdict;
        use crate::sampling::Restriction;

        // At the domain boundary x = 0, parameters just outside dom have an
        // empty image, so the error bound fails unless sampling stays in dom.
        let p = Arc::new(problem(1, 1, &["-y1", "y1 - x1"], &[], "y1"));
        let sampler = NeighborhoodSampler::new(vec![1e-1, 1e-2], 40, 9, Restriction::FullSpace)
            .unwrap();
        let cfg = ProbeCfg::default();
        let tols = Tolerances::default();

        let full = s_map_probes(&p, &[0.0], &[0.0], &sampler, &cfg, &tols).unwrap();
        assert_eq!(full.rreg.verdict, RRegVerdict::LikelyNot);
        let smallest = full.rreg.per_radius.last().unwrap();
        assert!(smallest.empty_image > 0, "no empty images at the smallest radius");
        assert!(full.phi_at_center.0.abs() <= 1e-7);

        let dom_sampler = sampler.with_restriction(Restriction::DomGamma);
        let dom = s_map_probes(&p, &[0.0], &[0.0], &dom_sampler, &cfg, &tols).unwrap();
        assert_eq!(dom.rreg.verdict, RRegVerdict::Consistent);
    }

    #[test]
    fn solution_map_probe_rejects_non_solutions() {
        let p = Arc::new(problem(1, 1, &["-y1", "y1 - x1"], &[], "y1"));
        let sampler = NeighborhoodSampler::default();
        let err = s_map_probes(&p, &[1.0], &[1.0], &sampler, &ProbeCfg::default(), &Tolerances::default());
        assert!(matches!(err, Err(ParametricError::NotASolution { .. })));
    }
}
