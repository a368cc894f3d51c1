//! Bilevel layer: optimistic and pessimistic values of the upper objective
//! over the solution map, a grid-plus-zoom optimistic solve, sampled
//! partial-calmness testing, and a pessimistic-existence hypothesis report.

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::cq::{check_rcpld_s_via_multipliers, CqError, CqVerdict};
use crate::expr::Expr;
use crate::geom::project;
use crate::parametric::{
    solve_lower, AxisSpec, Flags, GridSpec, ParametricError, ParametricProblem, PhiMemo,
};
use crate::report::{fmt_g17, ExtReal, Tolerances};
use crate::sampling::{stream, unit_dir, NeighborhoodSampler, TAG_CALM_X, TAG_CALM_Y};
use crate::solver::SolveCfg;
use crate::system::{residual, ConstraintSystem};

/// Default penalty ladder for calmness testing.
pub const DEFAULT_KAPPA_GRID: [f64; 5] = [1.0, 1e1, 1e2, 1e3, 1e4];

#[derive(Debug, thiserror::Error)]
pub enum BilevelError {
    #[error("no grid node has a nonempty lower-level solution set")]
    AllNodesInfeasible,
    #[error(transparent)]
    Grid(#[from] ParametricError),
    #[error(transparent)]
    Cq(#[from] CqError),
}

/// Upper-level problem over a box of parameters: minimize F(x, y) subject to
/// x in the box and y solving the lower level at x.
#[derive(Clone)]
pub struct BilevelProblem {
    upper: Expr,
    x_box: Vec<(f64, f64)>,
    lower: Arc<ParametricProblem>,
}

impl BilevelProblem {
    pub fn new(upper: Expr, x_box: Vec<(f64, f64)>, lower: Arc<ParametricProblem>) -> Self {
        let (n, m) = (lower.sys.n(), lower.sys.m());
        assert_eq!(upper.dims(), (n, m), "upper objective dimensions");
        assert_eq!(x_box.len(), n, "box dimension");
        for (lo, hi) in &x_box {
            assert!(
                lo.is_finite() && hi.is_finite() && lo <= hi,
                "box bounds must be finite and ordered"
            );
        }
        BilevelProblem { upper, x_box, lower }
    }

    pub fn n(&self) -> usize {
        self.lower.sys.n()
    }

    pub fn m(&self) -> usize {
        self.lower.sys.m()
    }

    pub fn upper(&self) -> &Expr {
        &self.upper
    }

    pub fn x_box(&self) -> &[(f64, f64)] {
        &self.x_box
    }

    pub fn lower(&self) -> &Arc<ParametricProblem> {
        &self.lower
    }

    pub fn upper_value(&self, x: &[f64], y: &[f64]) -> f64 {
        self.upper.eval(x, y).unwrap_or(f64::INFINITY)
    }

    pub fn contains_x(&self, x: &[f64]) -> bool {
        x.len() == self.x_box.len()
            && x.iter().zip(&self.x_box).all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// Uniform grid over the box with the given step count per axis.
    pub fn default_grid(&self, steps: usize) -> GridSpec {
        GridSpec {
            axes: self
                .x_box
                .iter()
                .map(|(lo, hi)| {
                    if lo == hi {
                        AxisSpec { min: *lo, max: *hi, steps: 1 }
                    } else {
                        AxisSpec { min: *lo, max: *hi, steps }
                    }
                })
                .collect(),
        }
    }
}

/// Extremes of the upper objective over the lower-level solution set at one
/// parameter.
#[derive(Clone, Debug, Serialize)]
pub struct PhiOptPess {
    pub phi_o: ExtReal,
    pub phi_p: ExtReal,
    /// Lower-level optimal value at the same parameter.
    pub phi: ExtReal,
    /// True when the solution set came back empty and the infinite
    /// conventions apply.
    pub empty: bool,
    pub representatives: Vec<Vec<f64>>,
}

pub fn phi_opt_pess(problem: &BilevelProblem, x: &[f64], cfg: &SolveCfg) -> PhiOptPess {
    let sol = solve_lower(problem.lower(), x, cfg);
    if sol.is_empty() {
        return PhiOptPess {
            phi_o: ExtReal::INF,
            phi_p: ExtReal(f64::NEG_INFINITY),
            phi: sol.phi,
            empty: true,
            representatives: Vec::new(),
        };
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for y in &sol.representatives {
        let v = problem.upper_value(x, y);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    PhiOptPess {
        phi_o: ExtReal(lo),
        phi_p: ExtReal(hi),
        phi: sol.phi,
        empty: false,
        representatives: sol.representatives,
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct RoundTrace {
    pub nodes: usize,
    pub feasible: usize,
    pub incumbent_x: Vec<f64>,
    pub incumbent_value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OptimisticSolve {
    pub x_star: Vec<f64>,
    pub y_star: Vec<f64>,
    pub f_upper: f64,
    /// Lower-level optimal value at x_star.
    pub phi_at_x_star: f64,
    pub rounds: Vec<RoundTrace>,
}

impl OptimisticSolve {
    /// Header plus one row: incumbent x, y, and upper value.
    pub fn summary_csv(&self) -> String {
        let mut head = String::new();
        let mut row = String::new();
        for (i, v) in self.x_star.iter().enumerate() {
            head.push_str(&format!("x{},", i + 1));
            row.push_str(&fmt_g17(*v));
            row.push(',');
        }
        for (j, v) in self.y_star.iter().enumerate() {
            head.push_str(&format!("y{},", j + 1));
            row.push_str(&fmt_g17(*v));
            row.push(',');
        }
        head.push_str("F\n");
        row.push_str(&fmt_g17(self.f_upper));
        row.push('\n');
        head + &row
    }
}

struct NodeBest {
    x: Vec<f64>,
    y: Vec<f64>,
    value: f64,
    phi: f64,
}

/// Evaluates the optimistic value on every in-box node and returns the count
/// of feasible nodes plus the best one (value, then lexicographic x).
fn best_on_nodes(
    problem: &BilevelProblem,
    nodes: &[Vec<f64>],
    cfg: &SolveCfg,
) -> (usize, Option<NodeBest>) {
    let evals: Vec<Option<NodeBest>> = nodes
        .par_iter()
        .map(|x| {
            if !problem.contains_x(x) {
                return None;
            }
            let pop = phi_opt_pess(problem, x, cfg);
            if pop.empty {
                return None;
            }
            let mut best: Option<(f64, &Vec<f64>)> = None;
            for y in &pop.representatives {
                let v = problem.upper_value(x, y);
                if !v.is_finite() {
                    continue;
                }
                let better = match &best {
                    None => true,
                    Some((bv, by)) => v < *bv || (v == *bv && y.as_slice() < by.as_slice()),
                };
                if better {
                    best = Some((v, y));
                }
            }
            best.map(|(v, y)| NodeBest { x: x.clone(), y: y.clone(), value: v, phi: pop.phi.0 })
        })
        .collect();
    let feasible = evals.iter().filter(|e| e.is_some()).count();
    let best = evals.into_iter().flatten().reduce(|a, b| {
        if b.value < a.value || (b.value == a.value && b.x < a.x) {
            b
        } else {
            a
        }
    });
    (feasible, best)
}

/// Grid search for the optimistic bilevel minimum with zoom refinement:
/// each round re-grids a one-spacing neighborhood of the incumbent at a
/// tenth of the spacing, clamped to the box.
pub fn solve_optimistic(
    problem: &BilevelProblem,
    spec: &GridSpec,
    refine_rounds: usize,
    cfg: &SolveCfg,
) -> Result<OptimisticSolve, BilevelError> {
    spec.validate(problem.n())?;
    let nodes = spec.nodes();
    let (feasible, best) = best_on_nodes(problem, &nodes, cfg);
    let mut incumbent = best.ok_or(BilevelError::AllNodesInfeasible)?;
    let mut rounds = vec![RoundTrace {
        nodes: nodes.len(),
        feasible,
        incumbent_x: incumbent.x.clone(),
        incumbent_value: incumbent.value,
    }];
    let mut half: Vec<f64> = spec
        .axes
        .iter()
        .map(|a| if a.steps > 1 { (a.max - a.min) / (a.steps - 1) as f64 } else { 0.0 })
        .collect();
    for _ in 0..refine_rounds {
        if half.iter().all(|h| *h == 0.0) {
            break;
        }
        let axes: Vec<AxisSpec> = incumbent
            .x
            .iter()
            .zip(&half)
            .zip(problem.x_box())
            .map(|((c, h), (lo, hi))| {
                let a = (c - h).max(*lo);
                let b = (c + h).min(*hi);
                if a < b {
                    AxisSpec { min: a, max: b, steps: 21 }
                } else {
                    AxisSpec { min: a, max: a, steps: 1 }
                }
            })
            .collect();
        let nodes = GridSpec { axes }.nodes();
        let (feasible, best) = best_on_nodes(problem, &nodes, cfg);
        if let Some(b) = best {
            if b.value < incumbent.value || (b.value == incumbent.value && b.x < incumbent.x) {
                incumbent = b;
            }
        }
        rounds.push(RoundTrace {
            nodes: nodes.len(),
            feasible,
            incumbent_x: incumbent.x.clone(),
            incumbent_value: incumbent.value,
        });
        for h in &mut half {
            *h /= 10.0;
        }
    }
    Ok(OptimisticSolve {
        x_star: incumbent.x,
        y_star: incumbent.y,
        f_upper: incumbent.value,
        phi_at_x_star: incumbent.phi,
        rounds,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct CalmnessWitness {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub u: f64,
    pub p_kappa: f64,
}

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum KappaOutcome {
    NoViolationOnSamples,
    Violation { witness: CalmnessWitness, margin: f64, violating_radii: Vec<f64> },
}

#[derive(Clone, Debug, Serialize)]
pub struct KappaVerdict {
    pub kappa: f64,
    #[serde(flatten)]
    pub outcome: KappaOutcome,
}

#[derive(Clone, Debug, Serialize, PartialEq)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CalmnessStatus {
    CalmOnSamples { kappa_min: f64 },
    LikelyNotCalm,
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct CalmRadiusTrace {
    pub radius: f64,
    pub generated: usize,
    pub kept: usize,
    pub outside_box: usize,
    pub empty_image: usize,
    pub left_neighborhood: usize,
    pub phi_unsolved: usize,
    pub negative_slack: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct CalmnessReport {
    pub x_ref: Vec<f64>,
    pub y_ref: Vec<f64>,
    pub f_upper_ref: f64,
    pub kappa_grid: Vec<f64>,
    pub per_kappa: Vec<KappaVerdict>,
    pub overall: CalmnessStatus,
    pub seed: u64,
    pub per_radius: Vec<CalmRadiusTrace>,
    pub warnings: Vec<String>,
    pub note: String,
}

struct CalmSample {
    x: Vec<f64>,
    y: Vec<f64>,
    d_upper: f64,
    u: f64,
}

enum SampleOutcome {
    Kept(CalmSample, bool),
    OutsideBox,
    EmptyImage,
    LeftNeighborhood,
    PhiUnsolved,
}

/// Log-uniform magnitude over four decades below the radius. Violation
/// windows shrink like 1/kappa, so magnitudes uniform in the radius would
/// miss them at the large end of the kappa ladder.
fn log_uniform_mag(rng: &mut ChaCha8Rng, radius: f64) -> f64 {
    let t: f64 = rng.gen();
    radius * 10f64.powf(-4.0 * t)
}

/// Samples the penalized comparison around a reference solution-map point.
/// A kappa passes when no sample drives the penalized difference below
/// -delta_viol persistently, meaning at both of the two smallest radii.
pub fn check_partial_calmness(
    problem: &BilevelProblem,
    x_ref: &[f64],
    y_ref: &[f64],
    sampler: &NeighborhoodSampler,
    kappa_grid: &[f64],
    tols: &Tolerances,
    cfg: &SolveCfg,
) -> CalmnessReport {
    assert_eq!(x_ref.len(), problem.n(), "reference parameter dimension");
    assert_eq!(y_ref.len(), problem.m(), "reference point dimension");
    let mut warnings = Vec::new();

    let mut kappas: Vec<f64> = kappa_grid.iter().copied().filter(|k| *k > 0.0 && k.is_finite()).collect();
    if kappas.len() != kappa_grid.len() {
        warnings.push("nonpositive or nonfinite kappa values dropped".into());
    }
    kappas.sort_by(f64::total_cmp);
    kappas.dedup();
    if kappas.is_empty() {
        kappas = DEFAULT_KAPPA_GRID.to_vec();
    }

    let lower = problem.lower();
    let memo = PhiMemo::new(lower.clone(), cfg.clone());

    if !problem.contains_x(x_ref) {
        warnings.push("reference parameter lies outside the upper-level box".into());
    }
    let res_ref = residual(&lower.sys, x_ref, y_ref).value;
    if !(res_ref <= tols.tol_feas) {
        warnings.push(format!(
            "reference point violates the lower-level constraints (residual {res_ref:.3e})"
        ));
    }
    let phi_ref = memo.phi(x_ref);
    if phi_ref.is_finite() {
        let gap = lower.objective(x_ref, y_ref) - phi_ref;
        if gap.abs() > tols.dist_tol {
            warnings.push(format!(
                "reference point is not a lower-level solution (f - phi = {gap:.3e})"
            ));
        }
    } else {
        warnings.push("lower level unsolved at the reference parameter".into());
    }
    let f_upper_ref = problem.upper_value(x_ref, y_ref);

    let n = problem.n();
    let m = problem.m();
    let radii = &sampler.radii;
    let mut per_radius = Vec::with_capacity(radii.len());
    let mut samples: Vec<Vec<CalmSample>> = Vec::with_capacity(radii.len());
    for (ri, &r) in radii.iter().enumerate() {
        let outcomes: Vec<SampleOutcome> = (0..sampler.samples_per_radius)
            .into_par_iter()
            .map(|k| {
                let mut rng_x = stream(sampler.seed, TAG_CALM_X, ri, k);
                let dir_x = unit_dir(&mut rng_x, n);
                let mag_x = log_uniform_mag(&mut rng_x, r);
                let x: Vec<f64> =
                    x_ref.iter().zip(&dir_x).map(|(c, d)| c + mag_x * d).collect();
                if !problem.contains_x(&x) {
                    return SampleOutcome::OutsideBox;
                }
                let mut rng_y = stream(sampler.seed, TAG_CALM_Y, ri, k);
                let dir_y = unit_dir(&mut rng_y, m);
                let mag_y = log_uniform_mag(&mut rng_y, r);
                let target: Vec<f64> =
                    y_ref.iter().zip(&dir_y).map(|(c, d)| c + mag_y * d).collect();
                let proj = project(&lower.sys, &x, &target, cfg);
                let Some(y) = proj.y_star else {
                    return SampleOutcome::EmptyImage;
                };
                let dist2: f64 = y.iter().zip(y_ref).map(|(a, b)| (a - b) * (a - b)).sum();
                if dist2.sqrt() > r {
                    return SampleOutcome::LeftNeighborhood;
                }
                let phi = memo.phi(&x);
                if !phi.is_finite() {
                    return SampleOutcome::PhiUnsolved;
                }
                let slack = lower.objective(&x, &y) - phi;
                let d_upper = problem.upper_value(&x, &y) - f_upper_ref;
                if !slack.is_finite() || !d_upper.is_finite() {
                    return SampleOutcome::PhiUnsolved;
                }
                SampleOutcome::Kept(
                    CalmSample { x, y, d_upper, u: slack.max(0.0) },
                    slack < -1e-7,
                )
            })
            .collect();
        let mut trace = CalmRadiusTrace {
            radius: r,
            generated: sampler.samples_per_radius,
            kept: 0,
            outside_box: 0,
            empty_image: 0,
            left_neighborhood: 0,
            phi_unsolved: 0,
            negative_slack: 0,
        };
        let mut kept = Vec::new();
        for o in outcomes {
            match o {
                SampleOutcome::Kept(s, neg) => {
                    trace.kept += 1;
                    if neg {
                        trace.negative_slack += 1;
                    }
                    kept.push(s);
                }
                SampleOutcome::OutsideBox => trace.outside_box += 1,
                SampleOutcome::EmptyImage => trace.empty_image += 1,
                SampleOutcome::LeftNeighborhood => trace.left_neighborhood += 1,
                SampleOutcome::PhiUnsolved => trace.phi_unsolved += 1,
            }
        }
        per_radius.push(trace);
        samples.push(kept);
    }
    if per_radius.iter().any(|t| t.negative_slack > 0) {
        warnings.push(
            "phi exceeded the sampled objective on some samples; slack clamped at zero".into(),
        );
    }

    // Local-minimizer screen: re-solve the lower level at a few sampled
    // parameters and compare the best upper value over S(x) against the
    // reference. A clear improvement nearby means the reference is not a
    // local optimistic minimizer and calmness statements lose their anchor.
    let mut probe_xs: Vec<Vec<f64>> = vec![x_ref.to_vec()];
    for kept in &samples {
        probe_xs.extend(kept.iter().take(4).map(|s| s.x.clone()));
    }
    let improvement = probe_xs
        .par_iter()
        .map(|x| {
            let pop = phi_opt_pess(problem, x, cfg);
            if pop.empty {
                f64::INFINITY
            } else {
                pop.phi_o.0 - f_upper_ref
            }
        })
        .reduce(|| f64::INFINITY, f64::min);
    if improvement < -(10.0 * tols.delta_viol).max(1e-5) {
        warnings.push(format!(
            "upper objective improves by {improvement:.3e} on nearby solution-map points; \
             the reference may not be a local optimistic minimizer"
        ));
    }

    let nr = radii.len();
    let smallest: Vec<usize> = if nr >= 2 { vec![nr - 2, nr - 1] } else { vec![nr - 1] };
    let thin = smallest.iter().any(|ri| samples[*ri].is_empty());
    if thin {
        warnings.push("no usable samples at the smallest radii; verdict inconclusive".into());
    }

    let mut per_kappa = Vec::with_capacity(kappas.len());
    let mut kappa_min = None;
    for &kappa in &kappas {
        let mut violating_radii = Vec::new();
        let mut witness: Option<(f64, &CalmSample)> = None;
        for ri in 0..nr {
            let worst = samples[ri]
                .iter()
                .map(|s| (s.d_upper + kappa * s.u, s))
                .min_by(|a, b| a.0.total_cmp(&b.0));
            if let Some((p, s)) = worst {
                if p < -tols.delta_viol {
                    violating_radii.push(radii[ri]);
                    // later radii overwrite, leaving the smallest violating one
                    witness = Some((p, s));
                }
            }
        }
        let persistent =
            !thin && smallest.iter().all(|ri| violating_radii.contains(&radii[*ri]));
        if persistent {
            let (p, s) = witness.expect("persistent violation has a witness");
            let w = CalmnessWitness { x: s.x.clone(), y: s.y.clone(), u: s.u, p_kappa: p };
            debug_assert!(
                (problem.upper_value(&w.x, &w.y) - f_upper_ref + kappa * w.u - p).abs() <= 1e-9
            );
            per_kappa.push(KappaVerdict {
                kappa,
                outcome: KappaOutcome::Violation { witness: w, margin: -p, violating_radii },
            });
        } else {
            if kappa_min.is_none() && !thin {
                kappa_min = Some(kappa);
            }
            per_kappa.push(KappaVerdict { kappa, outcome: KappaOutcome::NoViolationOnSamples });
        }
    }
    let overall = if thin {
        CalmnessStatus::Inconclusive
    } else if let Some(k) = kappa_min {
        CalmnessStatus::CalmOnSamples { kappa_min: k }
    } else {
        CalmnessStatus::LikelyNotCalm
    };

    CalmnessReport {
        x_ref: x_ref.to_vec(),
        y_ref: y_ref.to_vec(),
        f_upper_ref,
        kappa_grid: kappas,
        per_kappa,
        overall,
        seed: sampler.seed,
        per_radius,
        warnings,
        note: "The penalized comparison over admissible slacks u >= f(x,y) - phi(x) is \
               smallest at u = max(0, f(x,y) - phi(x)), so sampling (x, y) pairs alone \
               decides the inequality."
            .into(),
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GraphPointCq {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub verdict: CqVerdict,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExistenceReport {
    /// The parameter set is a finite box, hence compact.
    pub x_compact: bool,
    /// Every grid node had a nonempty lower-level feasible set.
    pub x_in_dom_gamma: bool,
    pub infeasible_nodes: Vec<Vec<f64>>,
    /// Caller-asserted properties of the lower level, echoed as given.
    pub flags: Flags,
    pub rcpld_s_probes: Vec<GraphPointCq>,
    pub nodes: usize,
    pub feasible_nodes: usize,
    pub incumbent_x: Vec<f64>,
    pub incumbent_phi_p: f64,
    pub incumbent_phi_o: f64,
    pub incumbent_representatives: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl ExistenceReport {
    /// Header plus one row: pessimistic incumbent and its values.
    pub fn summary_csv(&self) -> String {
        let mut head = String::new();
        let mut row = String::new();
        for (i, v) in self.incumbent_x.iter().enumerate() {
            head.push_str(&format!("x{},", i + 1));
            row.push_str(&fmt_g17(*v));
            row.push(',');
        }
        head.push_str("phi_p,phi_o\n");
        row.push_str(&fmt_g17(self.incumbent_phi_p));
        row.push(',');
        row.push_str(&fmt_g17(self.incumbent_phi_o));
        row.push('\n');
        head + &row
    }
}

/// Numerical screen for the hypotheses behind pessimistic existence: box
/// compactness, the grid staying inside dom Gamma, the echoed boundedness
/// flag, and RCPLD of the solution-map system at a spread of graph points.
/// The pessimistic incumbent is the grid argmin of phi_p.
pub fn pessimistic_existence_report(
    problem: &BilevelProblem,
    spec: &GridSpec,
    sampler: &NeighborhoodSampler,
    tols: &Tolerances,
    cfg: &SolveCfg,
) -> Result<ExistenceReport, BilevelError> {
    spec.validate(problem.n())?;
    let nodes = spec.nodes();
    let evals: Vec<(Vec<f64>, PhiOptPess)> = nodes
        .par_iter()
        .map(|x| (x.clone(), phi_opt_pess(problem, x, cfg)))
        .collect();
    let mut warnings = Vec::new();
    let out_of_box = evals.iter().filter(|(x, _)| !problem.contains_x(x)).count();
    if out_of_box > 0 {
        warnings.push(format!("{out_of_box} grid nodes fall outside the upper-level box"));
    }

    let mut infeasible = Vec::new();
    let mut feasible: Vec<(&Vec<f64>, &PhiOptPess)> = Vec::new();
    for (x, pop) in &evals {
        if pop.empty {
            infeasible.push(x.clone());
        } else {
            feasible.push((x, pop));
        }
    }
    let x_in_dom_gamma = infeasible.is_empty();
    if feasible.is_empty() {
        return Err(BilevelError::AllNodesInfeasible);
    }
    if infeasible.len() > 16 {
        warnings.push(format!("{} infeasible nodes; first 16 recorded", infeasible.len()));
    }

    let mut inc: Option<(&Vec<f64>, &PhiOptPess)> = None;
    for &(x, pop) in &feasible {
        let better = match inc {
            None => true,
            Some((bx, bp)) => {
                pop.phi_p.0 < bp.phi_p.0
                    || (pop.phi_p.0 == bp.phi_p.0 && x.as_slice() < bx.as_slice())
            }
        };
        if better {
            inc = Some((x, pop));
        }
    }
    let (inc_x, inc_pop) = inc.expect("at least one feasible node");

    let probe_count = feasible.len().min(9);
    let mut probes = Vec::new();
    for i in 0..probe_count {
        let idx = if probe_count == 1 {
            0
        } else {
            i * (feasible.len() - 1) / (probe_count - 1)
        };
        let (x, pop) = feasible[idx];
        let Some(y) = pop.representatives.first() else {
            continue;
        };
        match check_rcpld_s_via_multipliers(problem.lower(), x, y, sampler, tols, cfg) {
            Ok(rep) => probes.push(GraphPointCq {
                x: x.clone(),
                y: y.clone(),
                verdict: rep.verdict,
                warnings: rep.warnings,
            }),
            Err(e) => warnings.push(format!("rcpld_s probe at {x:?} failed: {e}")),
        }
    }

    Ok(ExistenceReport {
        x_compact: true,
        x_in_dom_gamma,
        infeasible_nodes: infeasible.into_iter().take(16).collect(),
        flags: problem.lower().flags,
        rcpld_s_probes: probes,
        nodes: nodes.len(),
        feasible_nodes: feasible.len(),
        incumbent_x: inc_x.clone(),
        incumbent_phi_p: inc_pop.phi_p.0,
        incumbent_phi_o: inc_pop.phi_o.0,
        incumbent_representatives: inc_pop.representatives.clone(),
        warnings,
    })
}
