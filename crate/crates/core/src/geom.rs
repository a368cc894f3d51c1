//! Set-valued geometry probes: projection onto the image set, multiplier
//! feasibility at projections, error-bound (R-regularity) estimation, and
//! inner-semicontinuity probing.
//!
//! Every probe is a finite heuristic for a limit property. Verdicts say so:
//! `holds` never appears here, only `consistent_with`/`likely_not`.

use std::sync::Mutex;

use rayon::prelude::*;
use serde::Serialize;

use crate::kernel::solve_bland;
use crate::report::ExtReal;
use crate::sampling::{
    axis_points, ball_point, stream, unit_dir, NeighborhoodSampler, RadiusTrace,
    Restriction, SamplingRecord, TAG_ISC, TAG_RREG, TAG_RREG_REFINE,
};
use crate::solver::{minimize_over_feasible, SolveCfg};
use crate::system::{residual, ConstraintSystem};

/// Thresholds for the geometry probes. The verdict rules are fixed; the
/// numbers they compare against live here.
#[derive(Clone, Debug)]
pub struct ProbeCfg {
    pub solve: SolveCfg,
    /// Ratio argmax candidates carried into angular refinement per radius.
    pub refine_starts: usize,
    pub refine_rounds: usize,
    pub refine_proposals: usize,
    /// Initial angular perturbation scale, shrunk each round.
    pub sigma0: f64,
    pub sigma_shrink: f64,
    /// likely_not fires when kappa(r_min) exceeds both divergence_factor
    /// times kappa(r_max) and divergence_abs.
    pub divergence_factor: f64,
    pub divergence_abs: f64,
    /// consistent fires when max/min kappa across radii stays below this.
    pub consistency_factor: f64,
    /// Inner-semicontinuity stall gap.
    pub isc_gap: f64,
}

impl Default for ProbeCfg {
    fn default() -> Self {
        ProbeCfg {
            solve: SolveCfg::default(),
            refine_starts: 3,
            refine_rounds: 40,
            refine_proposals: 10,
            sigma0: 0.5,
            sigma_shrink: 0.85,
            divergence_factor: 10.0,
            divergence_abs: 100.0,
            consistency_factor: 2.0,
            isc_gap: 0.1,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ProjectionTrace {
    pub starts: usize,
    pub stationarity: Option<f64>,
}

/// Nearest feasible point to nu in Gamma(x), or the empty-image sentinel.
#[derive(Clone, Debug, Serialize)]
pub struct Projection {
    pub y_star: Option<Vec<f64>>,
    pub distance: ExtReal,
    pub trace: ProjectionTrace,
}

impl Projection {
    pub fn is_empty_image(&self) -> bool {
        self.y_star.is_none()
    }
}

/// Nearest-point search: minimizes squared distance to nu over the feasible
/// set, searching a box around nu. Points of Gamma(x) beyond the box are out
/// of scope by construction; callers keep nu near the region of interest.
pub fn project(sys: &dyn ConstraintSystem, x: &[f64], nu: &[f64], cfg: &SolveCfg) -> Projection {
    assert_eq!(nu.len(), sys.m(), "projection target dimension");
    let obj = |y: &[f64]| {
        y.iter()
            .zip(nu)
            .map(|(a, b)| 0.5 * (a - b) * (a - b))
            .sum::<f64>()
    };
    let obj_grad = |y: &[f64]| y.iter().zip(nu).map(|(a, b)| a - b).collect::<Vec<f64>>();
    let out = minimize_over_feasible(sys, x, &obj, &obj_grad, nu, cfg);
    match out.best() {
        Some(best) => {
            let distance = best
                .y
                .iter()
                .zip(nu)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            Projection {
                y_star: Some(best.y.clone()),
                distance: ExtReal(distance),
                trace: ProjectionTrace {
                    starts: out.trace.starts,
                    stationarity: Some(best.stationarity),
                },
            }
        }
        None => Projection {
            y_star: None,
            distance: ExtReal::INF,
            trace: ProjectionTrace { starts: out.trace.starts, stationarity: None },
        },
    }
}

/// Distance from nu to Gamma(x); infinite when no feasible point is found.
pub fn distance_to_image(
    sys: &dyn ConstraintSystem,
    x: &[f64],
    nu: &[f64],
    cfg: &SolveCfg,
) -> ExtReal {
    project(sys, x, nu, cfg).distance
}

/// Memoized numeric test for nonemptiness of Gamma(x). An under-approximation:
/// a missed feasible point classifies x as outside the domain.
pub struct DomainOracle<'a> {
    sys: &'a dyn ConstraintSystem,
    cfg: SolveCfg,
    cache: Mutex<std::collections::BTreeMap<Vec<i64>, bool>>,
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

impl<'a> DomainOracle<'a> {
    pub fn new(sys: &'a dyn ConstraintSystem, cfg: SolveCfg) -> Self {
        DomainOracle { sys, cfg, cache: Mutex::new(Default::default()) }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let key = quantize(x);
        if let Some(v) = self.cache.lock().unwrap().get(&key) {
            return *v;
        }
        let zero = |_: &[f64]| 0.0;
        let zero_grad = |y: &[f64]| vec![0.0; y.len()];
        let center = vec![0.0; self.sys.m()];
        let out = minimize_over_feasible(self.sys, x, &zero, &zero_grad, &center, &self.cfg);
        let inside = !out.candidates.is_empty();
        self.cache.lock().unwrap().insert(key, inside);
        inside
    }

    pub fn admits(&self, restriction: &Restriction, x: &[f64]) -> bool {
        match restriction {
            Restriction::FullSpace => true,
            Restriction::DomGamma => self.contains(x),
            Restriction::Custom(f) => f(x),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct MultiplierProbe {
    pub exists: bool,
    /// Multipliers by constraint label order (1..=p) when the probe succeeds.
    pub lambda: Option<Vec<f64>>,
    pub bound: f64,
    pub stationarity_residual: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum GeomError {
    #[error("projection direction degenerate: y equals nu")]
    DegenerateDirection,
    #[error("lp failure: {0}")]
    Lp(#[from] crate::kernel::LpError),
}

/// Multiplier feasibility at a projection: asks for lambda with
/// dir + sum lambda_i grad h_i = 0, lambda nonnegative on active
/// inequalities, zero on inactive ones, and total mass at most M.
pub fn multiplier_probe(
    sys: &dyn ConstraintSystem,
    x: &[f64],
    y: &[f64],
    nu: &[f64],
    bound: f64,
    tol: f64,
    tol_act: f64,
    tol_feas: f64,
) -> Result<MultiplierProbe, GeomError> {
    let m = sys.m();
    let diff: Vec<f64> = y.iter().zip(nu).map(|(a, b)| a - b).collect();
    let norm = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm <= 1e-12 {
        return Err(GeomError::DegenerateDirection);
    }
    let dir: Vec<f64> = diff.into_iter().map(|v| v / norm).collect();

    let mut warnings = Vec::new();
    let r = residual(sys, x, y);
    if r.value > tol_feas {
        warnings.push(format!(
            "point infeasible: residual {:.3e} exceeds tol_feas",
            r.value
        ));
    }
    if sys.division_present() {
        warnings.push("system contains divisions; gradients may be unreliable near poles".into());
    }

    let active: Vec<usize> = crate::system::active_set(sys, x, y, tol_act).indices;
    let eqs = sys.eq_labels();
    let grads_active: Vec<Vec<f64>> = active.iter().map(|l| sys.grad_y(*l, x, y)).collect();
    let grads_eq: Vec<Vec<f64>> = eqs.iter().map(|l| sys.grad_y(*l, x, y)).collect();
    if grads_active
        .iter()
        .chain(&grads_eq)
        .any(|g| g.iter().any(|v| !v.is_finite()))
    {
        warnings.push("non-finite gradient at probe point".into());
        return Ok(MultiplierProbe {
            exists: false,
            lambda: None,
            bound,
            stationarity_residual: None,
            warnings,
        });
    }

    // columns: lambda_active | eq+ | eq- | s+ | s- | budget slack
    let q = active.len();
    let e = eqs.len();
    let ncols = q + 2 * e + 2 * m + 1;
    let nrows = m + 1;
    let mut a = vec![vec![0.0; ncols]; nrows];
    let mut b = vec![0.0; nrows];
    for row in 0..m {
        for (k, g) in grads_active.iter().enumerate() {
            a[row][k] = g[row];
        }
        for (k, g) in grads_eq.iter().enumerate() {
            a[row][q + k] = g[row];
            a[row][q + e + k] = -g[row];
        }
        a[row][q + 2 * e + row] = 1.0;
        a[row][q + 2 * e + m + row] = -1.0;
        b[row] = -dir[row];
    }
    for col in 0..q + 2 * e {
        a[m][col] = 1.0;
    }
    a[m][ncols - 1] = 1.0;
    b[m] = bound;

    let mut basis = Vec::with_capacity(nrows);
    for row in 0..m {
        if b[row] < 0.0 {
            for v in a[row].iter_mut() {
                *v = -*v;
            }
            b[row] = -b[row];
            basis.push(q + 2 * e + m + row);
        } else {
            basis.push(q + 2 * e + row);
        }
    }
    basis.push(ncols - 1);

    let mut cost = vec![0.0; ncols];
    for s in 0..2 * m {
        cost[q + 2 * e + s] = 1.0;
    }

    let out = solve_bland(&a, &b, &cost, &basis)?;
    let exists = out.value <= tol;
    let lambda = if exists {
        let all_labels: Vec<usize> = sys
            .ineq_labels()
            .iter()
            .chain(sys.eq_labels().iter())
            .copied()
            .collect();
        let pos_of = |lab: usize| all_labels.iter().position(|&l| l == lab).unwrap();
        let mut lam = vec![0.0; all_labels.len()];
        for (k, label) in active.iter().enumerate() {
            lam[pos_of(*label)] = out.x[k];
        }
        for (k, label) in eqs.iter().enumerate() {
            lam[pos_of(*label)] = out.x[q + k] - out.x[q + e + k];
        }
        Some(lam)
    } else {
        None
    };
    Ok(MultiplierProbe {
        exists,
        lambda,
        bound,
        stationarity_residual: Some(out.value),
        warnings,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RRegVerdict {
    #[serde(rename = "consistent_with_R_regular")]
    Consistent,
    #[serde(rename = "likely_not_R_regular")]
    LikelyNot,
    #[serde(rename = "inconclusive")]
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct RatioSample {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub distance: ExtReal,
    pub residual: f64,
    pub ratio: ExtReal,
}

#[derive(Clone, Debug, Serialize)]
pub struct RadiusRecord {
    pub radius: f64,
    pub samples_kept: usize,
    pub omega_rejected: usize,
    pub feasible_skipped: usize,
    pub empty_image: usize,
    pub refined_evaluations: usize,
    pub kappa_hat: Option<ExtReal>,
    pub argmax: Option<RatioSample>,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularityProbe {
    pub center_x: Vec<f64>,
    pub center_y: Vec<f64>,
    pub restriction: String,
    pub per_radius: Vec<RadiusRecord>,
    pub verdict: RRegVerdict,
    pub warnings: Vec<String>,
    pub sampling: SamplingRecord,
}

fn ratio_at(
    sys: &dyn ConstraintSystem,
    x: &[f64],
    y: &[f64],
    cfg: &ProbeCfg,
    tol_feas: f64,
) -> RatioOutcome {
    let r = residual(sys, x, y);
    if !r.value.is_finite() {
        return RatioOutcome::NonFinite;
    }
    if r.value <= tol_feas {
        return RatioOutcome::Feasible;
    }
    let proj = project(sys, x, y, &cfg.solve);
    if proj.is_empty_image() {
        return RatioOutcome::EmptyImage { residual: r.value };
    }
    let d = proj.distance.0;
    RatioOutcome::Ratio { distance: d, residual: r.value, ratio: d / r.value }
}

enum RatioOutcome {
    Feasible,
    EmptyImage { residual: f64 },
    NonFinite,
    Ratio { distance: f64, residual: f64, ratio: f64 },
}

/// Error-bound constant estimation on a descending radius ladder: sphere
/// samples plus signed axis probes, then angular refinement that walks the
/// worst directions toward the local ratio supremum.
pub fn estimate_rregularity(
    sys: &dyn ConstraintSystem,
    cx: &[f64],
    cy: &[f64],
    sampler: &NeighborhoodSampler,
    cfg: &ProbeCfg,
    tol_feas: f64,
) -> RegularityProbe {
    let n = sys.n();
    let m = sys.m();
    let dim = n + m;
    let dom = DomainOracle::new(sys, cfg.solve.clone());

    let mut warnings = Vec::new();
    let center_res = residual(sys, cx, cy);
    if center_res.value > tol_feas {
        warnings.push(format!(
            "center infeasible: residual {:.3e} exceeds tol_feas",
            center_res.value
        ));
    }
    if sys.division_present() {
        warnings.push("system contains divisions; gradients may be unreliable near poles".into());
    }

    let mut per_radius = Vec::new();
    let mut traces = Vec::new();
    for (ri, &radius) in sampler.radii.iter().enumerate() {
        // deterministic axis probes first, then the random sphere draw
        let mut dirs: Vec<Vec<f64>> = axis_points(dim, 1.0);
        for k in 0..sampler.samples_per_radius {
            let mut rng = stream(sampler.seed, TAG_RREG, ri, k);
            dirs.push(unit_dir(&mut rng, dim));
        }
        let generated = dirs.len();

        let evals: Vec<(Vec<f64>, Vec<f64>, Option<RatioOutcome>)> = dirs
            .par_iter()
            .map(|d| {
                let x: Vec<f64> = cx.iter().zip(&d[..n]).map(|(c, v)| c + radius * v).collect();
                let y: Vec<f64> = cy.iter().zip(&d[n..]).map(|(c, v)| c + radius * v).collect();
                if dom.admits(&sampler.restriction, &x) {
                    let out = ratio_at(sys, &x, &y, cfg, tol_feas);
                    (x, y, Some(out))
                } else {
                    (x, y, None)
                }
            })
            .collect();

        let mut kept = 0usize;
        let mut omega_rejected = 0usize;
        let mut feasible_skipped = 0usize;
        let mut empty_image = 0usize;
        let mut best: Option<RatioSample> = None;
        let mut scored_dirs: Vec<(f64, Vec<f64>)> = Vec::new();
        for (i, (x, y, out)) in evals.iter().enumerate() {
            let Some(out) = out else {
                omega_rejected += 1;
                continue;
            };
            kept += 1;
            match out {
                RatioOutcome::Feasible => feasible_skipped += 1,
                RatioOutcome::NonFinite => {}
                RatioOutcome::EmptyImage { residual } => {
                    empty_image += 1;
                    let cand = RatioSample {
                        x: x.clone(),
                        y: y.clone(),
                        distance: ExtReal::INF,
                        residual: *residual,
                        ratio: ExtReal::INF,
                    };
                    if best.as_ref().map_or(true, |b| cand.ratio.0 > b.ratio.0) {
                        best = Some(cand);
                    }
                }
                RatioOutcome::Ratio { distance, residual, ratio } => {
                    let cand = RatioSample {
                        x: x.clone(),
                        y: y.clone(),
                        distance: ExtReal(*distance),
                        residual: *residual,
                        ratio: ExtReal(*ratio),
                    };
                    if best.as_ref().map_or(true, |b| cand.ratio.0 > b.ratio.0) {
                        best = Some(cand);
                    }
                    scored_dirs.push((*ratio, dirs[i].clone()));
                }
            }
        }

        // angular refinement: hill-climb the ratio over directions from the
        // best finite starts
        scored_dirs.sort_by(|a, b| b.0.total_cmp(&a.0));
        scored_dirs.truncate(cfg.refine_starts);
        let mut refined_evaluations = 0usize;
        let refined: Vec<Option<RatioSample>> = scored_dirs
            .par_iter()
            .enumerate()
            .map(|(slot, (score0, dir0))| {
                let mut rng = stream(sampler.seed, TAG_RREG_REFINE, ri, slot);
                let mut dir = dir0.clone();
                let mut score = *score0;
                let mut best_local: Option<RatioSample> = None;
                let mut sigma = cfg.sigma0;
                for _ in 0..cfg.refine_rounds {
                    for _ in 0..cfg.refine_proposals {
                        let noise = unit_dir(&mut rng, dim);
                        let mut cand: Vec<f64> =
                            dir.iter().zip(&noise).map(|(a, b)| a + sigma * b).collect();
                        let norm = cand.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if norm <= 1e-12 {
                            continue;
                        }
                        for v in cand.iter_mut() {
                            *v /= norm;
                        }
                        let x: Vec<f64> =
                            cx.iter().zip(&cand[..n]).map(|(c, v)| c + radius * v).collect();
                        let y: Vec<f64> =
                            cy.iter().zip(&cand[n..]).map(|(c, v)| c + radius * v).collect();
                        if !dom.admits(&sampler.restriction, &x) {
                            continue;
                        }
                        if let RatioOutcome::Ratio { distance, residual, ratio } =
                            ratio_at(sys, &x, &y, cfg, tol_feas)
                        {
                            if ratio > score {
                                score = ratio;
                                dir = cand;
                                best_local = Some(RatioSample {
                                    x,
                                    y,
                                    distance: ExtReal(distance),
                                    residual,
                                    ratio: ExtReal(ratio),
                                });
                            }
                        }
                    }
                    sigma *= cfg.sigma_shrink;
                }
                best_local
            })
            .collect();
        refined_evaluations += scored_dirs.len() * cfg.refine_rounds * cfg.refine_proposals;
        for cand in refined.into_iter().flatten() {
            if best.as_ref().map_or(true, |b| cand.ratio.0 > b.ratio.0) {
                best = Some(cand);
            }
        }

        traces.push(RadiusTrace {
            radius,
            generated,
            kept,
            omega_rejected,
            skipped_nonfinite: 0,
        });
        per_radius.push(RadiusRecord {
            radius,
            samples_kept: kept,
            omega_rejected,
            feasible_skipped,
            empty_image,
            refined_evaluations,
            kappa_hat: best.as_ref().map(|b| b.ratio),
            argmax: best,
        });
    }

    let verdict = rreg_verdict(&per_radius, cfg);
    RegularityProbe {
        center_x: cx.to_vec(),
        center_y: cy.to_vec(),
        restriction: sampler.restriction.name().to_string(),
        per_radius,
        verdict,
        warnings,
        sampling: SamplingRecord {
            restriction: sampler.restriction.name().to_string(),
            seed: sampler.seed,
            samples_per_radius: sampler.samples_per_radius,
            per_radius: traces,
        },
    }
}

fn rreg_verdict(records: &[RadiusRecord], cfg: &ProbeCfg) -> RRegVerdict {
    let kappas: Vec<f64> = records
        .iter()
        .map(|r| r.kappa_hat.map(|k| k.0).unwrap_or(0.0))
        .collect();
    if kappas.is_empty() {
        return RRegVerdict::Inconclusive;
    }
    let first = kappas[0];
    let last = *kappas.last().unwrap();
    // shrinking radii: last entry is the smallest radius. An infinite ratio
    // there means some sampled parameter inside the tightest neighborhood has
    // an empty image while the point keeps a positive residual, which no
    // finite constant can bound.
    if last.is_infinite() {
        return RRegVerdict::LikelyNot;
    }
    if last > cfg.divergence_factor * first && last > cfg.divergence_abs {
        return RRegVerdict::LikelyNot;
    }
    let max = kappas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = kappas.iter().cloned().fold(f64::INFINITY, f64::min);
    if max.is_finite() && (min <= 0.0 || max <= cfg.consistency_factor * min.max(1e-300)) {
        if min <= 0.0 && max <= 0.0 {
            return RRegVerdict::Consistent;
        }
        if min > 0.0 && max / min <= cfg.consistency_factor {
            return RRegVerdict::Consistent;
        }
    }
    RRegVerdict::Inconclusive
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum IscVerdict {
    #[serde(rename = "likely_inner_semicontinuous")]
    LikelyInner,
    #[serde(rename = "likely_not_inner_semicontinuous")]
    LikelyNot,
    #[serde(rename = "inconclusive")]
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct IscRadius {
    pub radius: f64,
    pub samples_kept: usize,
    pub omega_rejected: usize,
    pub d_max: Option<ExtReal>,
    pub argmax_x: Option<Vec<f64>>,
}

#[derive(Clone, Debug, Serialize)]
pub struct IscProbe {
    pub center_x: Vec<f64>,
    pub center_y: Vec<f64>,
    pub restriction: String,
    pub per_radius: Vec<IscRadius>,
    pub verdict: IscVerdict,
    pub warnings: Vec<String>,
}

/// Tracks how far the reference point drifts from the images of nearby
/// parameters: d(r) = max over sampled x in the r-ball of dist(y, Gamma(x)).
pub fn inner_semicontinuity_probe(
    sys: &dyn ConstraintSystem,
    cx: &[f64],
    cy: &[f64],
    sampler: &NeighborhoodSampler,
    cfg: &ProbeCfg,
    tol_feas: f64,
) -> IscProbe {
    let n = sys.n();
    let dom = DomainOracle::new(sys, cfg.solve.clone());
    let mut warnings = Vec::new();
    let center_res = residual(sys, cx, cy);
    if center_res.value > tol_feas {
        warnings.push(format!(
            "center infeasible: residual {:.3e} exceeds tol_feas",
            center_res.value
        ));
    }

    let mut per_radius = Vec::new();
    for (ri, &radius) in sampler.radii.iter().enumerate() {
        let mut points: Vec<Vec<f64>> = axis_points(n, radius)
            .into_iter()
            .map(|d| cx.iter().zip(&d).map(|(c, v)| c + v).collect())
            .collect();
        for k in 0..sampler.samples_per_radius {
            let mut rng = stream(sampler.seed, TAG_ISC, ri, k);
            let d = ball_point(&mut rng, n, radius);
            points.push(cx.iter().zip(&d).map(|(c, v)| c + v).collect());
        }

        let dists: Vec<Option<(Vec<f64>, f64)>> = points
            .par_iter()
            .map(|x| {
                if !dom.admits(&sampler.restriction, x) {
                    return None;
                }
                let d = distance_to_image(sys, x, cy, &cfg.solve);
                Some((x.clone(), d.0))
            })
            .collect();

        let mut kept = 0usize;
        let mut omega_rejected = 0usize;
        let mut d_max: Option<(Vec<f64>, f64)> = None;
        for item in dists.into_iter() {
            match item {
                None => omega_rejected += 1,
                Some((x, d)) => {
                    kept += 1;
                    if d_max.as_ref().map_or(true, |(_, cur)| d > *cur) {
                        d_max = Some((x, d));
                    }
                }
            }
        }
        per_radius.push(IscRadius {
            radius,
            samples_kept: kept,
            omega_rejected,
            d_max: d_max.as_ref().map(|(_, d)| ExtReal(*d)),
            argmax_x: d_max.map(|(x, _)| x),
        });
    }

    let verdict = isc_verdict(&per_radius, sampler, cfg);
    IscProbe {
        center_x: cx.to_vec(),
        center_y: cy.to_vec(),
        restriction: sampler.restriction.name().to_string(),
        per_radius,
        verdict,
        warnings,
    }
}

fn isc_verdict(records: &[IscRadius], sampler: &NeighborhoodSampler, cfg: &ProbeCfg) -> IscVerdict {
    let ds: Vec<f64> = records
        .iter()
        .map(|r| r.d_max.map(|d| d.0).unwrap_or(0.0))
        .collect();
    if ds.is_empty() {
        return IscVerdict::Inconclusive;
    }
    let d_first = ds[0];
    let d_last = *ds.last().unwrap();
    let r_last = *sampler.radii.last().unwrap();
    if d_last < 0.1 * d_first || d_last < 10.0 * r_last {
        return IscVerdict::LikelyInner;
    }
    if ds.iter().all(|d| *d > cfg.isc_gap) {
        return IscVerdict::LikelyNot;
    }
    IscVerdict::Inconclusive
}

#[derive(Clone, Debug, Serialize)]
pub struct UniformRRegScan {
    pub per_point: Vec<RegularityProbe>,
    /// Max kappa estimate at the largest radius across all points.
    pub kappa_uniform: Option<ExtReal>,
    /// Indices of points whose individual verdict was likely_not.
    pub divergers: Vec<usize>,
}

pub fn uniform_rregularity_scan(
    sys: &dyn ConstraintSystem,
    points: &[(Vec<f64>, Vec<f64>)],
    sampler: &NeighborhoodSampler,
    cfg: &ProbeCfg,
    tol_feas: f64,
) -> UniformRRegScan {
    let per_point: Vec<RegularityProbe> = points
        .iter()
        .map(|(x, y)| estimate_rregularity(sys, x, y, sampler, cfg, tol_feas))
        .collect();
    let mut kappa_uniform: Option<f64> = None;
    for p in &per_point {
        if let Some(first) = p.per_radius.first() {
            if let Some(k) = first.kappa_hat {
                kappa_uniform = Some(kappa_uniform.map_or(k.0, |cur: f64| cur.max(k.0)));
            }
        }
    }
    let divergers = per_point
        .iter()
        .enumerate()
        .filter(|(_, p)| p.verdict == RRegVerdict::LikelyNot)
        .map(|(i, _)| i)
        .collect();
    UniformRRegScan {
        per_point,
        kappa_uniform: kappa_uniform.map(ExtReal),
        divergers,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;
    use crate::system::ParametricSystem;

    fn sys(n: usize, m: usize, ineq: &[&str], eq: &[&str]) -> ParametricSystem {
        ParametricSystem::new(
            n,
            m,
            ineq.iter().map(|t| parse_expr(t, n, m).unwrap()).collect(),
            eq.iter().map(|t| parse_expr(t, n, m).unwrap()).collect(),
        )
    }

    fn gap_system() -> ParametricSystem {
        sys(1, 1, &["x1 - y1", "y1 - y1^2", "y1 - 1"], &[])
    }

    fn light_sampler(radii: Vec<f64>, samples: usize, restriction: Restriction) -> NeighborhoodSampler {
        NeighborhoodSampler::new(radii, samples, 42, restriction).unwrap()
    }

    #[test]
    fn projection_finds_isolated_branch() {
        let s = gap_system();
        let p = project(&s, &[0.5], &[0.0], &SolveCfg::default());
        let y = p.y_star.expect("nonempty");
        assert!((y[0] - 1.0).abs() < 1e-6);
        assert!((p.distance.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn projection_resists_a_barely_infeasible_near_basin() {
        // For x slightly positive the only feasible point is y = 1, while the
        // near-zero region is infeasible by just x. Refinement once collapsed
        // the whole start pool into that shallow basin and declared the image
        // empty.
        let s = gap_system();
        for x in [1e-3, 1.9e-3, 1e-2] {
            let p = project(&s, &[x], &[0.0], &SolveCfg::default());
            let y = p.y_star.expect("nonempty image");
            assert!((y[0] - 1.0).abs() < 1e-6, "x = {x}: projected to {}", y[0]);
        }
        let p = project(&s, &[1.9e-3], &[9.99e-2], &SolveCfg::default());
        assert!((p.distance.0 - (1.0 - 9.99e-2)).abs() < 1e-6);
    }

    #[test]
    fn projection_of_interior_point_is_identity() {
        let s = gap_system();
        let p = project(&s, &[-1.0], &[-0.5], &SolveCfg::default());
        assert!(p.distance.0 < 1e-7);
    }

    #[test]
    fn empty_image_reports_infinite_distance() {
        let s = sys(1, 1, &["-y1", "y1 - x1"], &[]);
        let p = project(&s, &[-0.1], &[0.3], &SolveCfg::default());
        assert!(p.is_empty_image());
        assert!(p.distance.0.is_infinite());
    }

    #[test]
    fn domain_oracle_splits_halfline() {
        let s = sys(1, 1, &["-y1", "y1 - x1"], &[]);
        let dom = DomainOracle::new(&s, SolveCfg::default());
        assert!(dom.contains(&[0.5]));
        assert!(dom.contains(&[0.0]));
        assert!(!dom.contains(&[-0.5]));
        assert!(!dom.contains(&[-0.5]));
    }

    #[test]
    fn multiplier_probe_solves_stationarity() {
        let s = gap_system();
        // x slightly positive, projection of nu=0 lands at y=1
        let p = multiplier_probe(&s, &[0.001], &[1.0], &[0.0], 10.0, 1e-7, 1e-6, 1e-6).unwrap();
        assert!(p.exists);
        let lam = p.lambda.unwrap();
        assert!(lam[0].abs() < 1e-9, "inactive constraint pinned to zero");
        // gradient of y - y^2 at 1 is -1, of y - 1 is 1; direction is +1
        let station = 1.0 + lam[1] * (-1.0) + lam[2] * 1.0;
        assert!(station.abs() <= 1e-7, "station = {station}");
        assert!(lam.iter().map(|v| v.abs()).sum::<f64>() <= 10.0 + 1e-9);
    }

    #[test]
    fn multiplier_probe_monotone_in_bound() {
        let s = gap_system();
        let tight = multiplier_probe(&s, &[0.001], &[1.0], &[0.0], 0.5, 1e-7, 1e-6, 1e-6).unwrap();
        let loose = multiplier_probe(&s, &[0.001], &[1.0], &[0.0], 50.0, 1e-7, 1e-6, 1e-6).unwrap();
        assert!(!tight.exists, "bound below the minimal multiplier mass");
        assert!(loose.exists);
    }

    #[test]
    fn multiplier_probe_rejects_degenerate_direction() {
        let s = gap_system();
        let err = multiplier_probe(&s, &[0.5], &[1.0], &[1.0], 10.0, 1e-7, 1e-6, 1e-6);
        assert!(matches!(err, Err(GeomError::DegenerateDirection)));
    }

    #[test]
    fn halfline_constraint_has_unit_ratio() {
        let s = sys(1, 1, &["y1"], &[]);
        let sampler = light_sampler(vec![1e-1, 1e-2], 24, Restriction::FullSpace);
        let mut cfg = ProbeCfg::default();
        cfg.refine_rounds = 10;
        let probe = estimate_rregularity(&s, &[0.0], &[0.0], &sampler, &cfg, 1e-6);
        assert_eq!(probe.verdict, RRegVerdict::Consistent);
        for rec in &probe.per_radius {
            let k = rec.kappa_hat.unwrap().0;
            assert!((k - 1.0).abs() < 1e-6, "kappa = {k}");
        }
    }

    #[test]
    fn jump_branch_flags_divergence() {
        let s = gap_system();
        let sampler = light_sampler(vec![1e-1, 1e-3], 40, Restriction::DomGamma);
        let mut cfg = ProbeCfg::default();
        cfg.refine_rounds = 15;
        let probe = estimate_rregularity(&s, &[0.0], &[0.0], &sampler, &cfg, 1e-6);
        assert_eq!(probe.verdict, RRegVerdict::LikelyNot);
        let k_small = probe.per_radius.last().unwrap().kappa_hat.unwrap().0;
        assert!(k_small > 100.0, "kappa at smallest radius = {k_small}");
    }

    #[test]
    fn stable_branch_is_consistent() {
        let s = gap_system();
        let sampler = light_sampler(vec![1e-1, 1e-2], 40, Restriction::DomGamma);
        let mut cfg = ProbeCfg::default();
        cfg.refine_rounds = 15;
        let probe = estimate_rregularity(&s, &[0.0], &[1.0], &sampler, &cfg, 1e-6);
        assert_eq!(probe.verdict, RRegVerdict::Consistent);
        for rec in &probe.per_radius {
            assert!(rec.kappa_hat.unwrap().0 <= 10.0);
        }
    }

    #[test]
    fn semicontinuity_probe_separates_branches() {
        let s = gap_system();
        let sampler = light_sampler(vec![1e-1, 1e-2, 1e-3], 30, Restriction::DomGamma);
        let cfg = ProbeCfg::default();
        let at_origin = inner_semicontinuity_probe(&s, &[0.0], &[0.0], &sampler, &cfg, 1e-6);
        assert_eq!(at_origin.verdict, IscVerdict::LikelyNot);
        let at_upper = inner_semicontinuity_probe(&s, &[0.0], &[1.0], &sampler, &cfg, 1e-6);
        assert_eq!(at_upper.verdict, IscVerdict::LikelyInner);
    }

    #[test]
    fn uniform_scan_flags_only_the_bad_point() {
        let s = gap_system();
        let sampler = light_sampler(vec![1e-1, 1e-3], 30, Restriction::DomGamma);
        let mut cfg = ProbeCfg::default();
        cfg.refine_rounds = 10;
        let pts = vec![
            (vec![0.0], vec![1.0]),
            (vec![-0.5], vec![-0.25]),
            (vec![0.0], vec![0.0]),
        ];
        let scan = uniform_rregularity_scan(&s, &pts, &sampler, &cfg, 1e-6);
        assert_eq!(scan.divergers, vec![2]);
        assert!(scan.kappa_uniform.is_some());
    }
}
