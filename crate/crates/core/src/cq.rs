//! Constraint-qualification checks: pointwise LICQ and MFCQ, sampled
//! neighborhood checks for RCRCQ and RCPLD, and the multiplier-support
//! variant for solution-map systems with a value-function constraint.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};

use crate::geom::DomainOracle;
use crate::kernel::{
    num_rank, positive_linear_dependent, solve_bland, LpError, VecFamily,
};
use crate::parametric::{solve_lower, ParametricProblem, PhiMemo};
use crate::report::Tolerances;
use crate::sampling::{
    axis_points, ball_point, NeighborhoodSampler, RadiusTrace, SamplingRecord, stream, TAG_CQ,
};
use crate::solver::SolveCfg;
use crate::system::{active_set, residual, ConstraintSystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CqKind {
    #[serde(rename = "licq")]
    Licq,
    #[serde(rename = "mfcq")]
    Mfcq,
    #[serde(rename = "rcrcq")]
    Rcrcq,
    #[serde(rename = "rcpld")]
    Rcpld,
    #[serde(rename = "rcpld_s")]
    RcpldS,
}

/// `Holds` is reserved for the pointwise qualifications; the neighborhood
/// ones are only ever confirmed on samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CqVerdict {
    #[serde(rename = "holds")]
    Holds,
    #[serde(rename = "holds_on_samples")]
    HoldsOnSamples,
    #[serde(rename = "fails")]
    Fails,
    #[serde(rename = "inconclusive")]
    Inconclusive,
}

#[derive(Clone, Debug, Serialize)]
pub struct CqReport {
    pub cq: CqKind,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub verdict: CqVerdict,
    pub certificate: Value,
    pub tolerances: Tolerances,
    pub sampling: Option<SamplingRecord>,
    pub warnings: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum CqError {
    #[error("active set of size {active} exceeds subset cap {cap}")]
    SubsetCapExceeded { active: usize, cap: usize },
    #[error("lower level unsolved at the reference parameter")]
    LowerLevelUnsolved,
    #[error("linear program failed: {0}")]
    Lp(#[from] LpError),
}

fn point_warnings(sys: &dyn ConstraintSystem, x: &[f64], y: &[f64], tols: &Tolerances) -> Vec<String> {
    let mut warnings = Vec::new();
    let res = residual(sys, x, y);
    if !(res.value <= tols.tol_feas) {
        warnings.push(format!(
            "reference point infeasible: residual {:.3e} exceeds tol_feas",
            res.value
        ));
    }
    if sys.division_present() {
        warnings.push("constraints contain divisions; verdicts near poles are unreliable".into());
    }
    warnings
}

fn grads_at(
    sys: &dyn ConstraintSystem,
    x: &[f64],
    y: &[f64],
    labels: &[usize],
) -> Option<BTreeMap<usize, Vec<f64>>> {
    let mut out = BTreeMap::new();
    for &label in labels {
        let g = sys.grad_y(label, x, y);
        if !g.iter().all(|v| v.is_finite()) {
            return None;
        }
        out.insert(label, g);
    }
    Some(out)
}

fn family(grads: &BTreeMap<usize, Vec<f64>>, labels: &[usize], dim: usize) -> VecFamily {
    VecFamily::from_pairs(dim, labels.iter().map(|l| (*l, grads[l].clone())))
}

pub fn check_licq(
    sys: &dyn ConstraintSystem,
    x: &[f64],
    y: &[f64],
    tols: &Tolerances,
) -> CqReport {
    let mut warnings = point_warnings(sys, x, y, tols);
    let active = active_set(sys, x, y, tols.tol_act).indices;
    let eqs = sys.eq_labels();
    let labels: Vec<usize> = active.iter().chain(eqs.iter()).copied().collect();
    let (verdict, certificate) = match grads_at(sys, x, y, &labels) {
        None => {
            warnings.push("non-finite gradient at the reference point".into());
            (CqVerdict::Inconclusive, json!({ "active": active, "eqs": eqs }))
        }
        Some(grads) => {
            let fam = family(&grads, &labels, sys.m());
            let rank = num_rank(&fam, tols.tol_rank);
            let verdict = if rank == labels.len() { CqVerdict::Holds } else { CqVerdict::Fails };
            (
                verdict,
                json!({ "active": active, "eqs": eqs, "rank": rank, "count": labels.len() }),
            )
        }
    };
    CqReport {
        cq: CqKind::Licq,
        x: x.to_vec(),
        y: y.to_vec(),
        verdict,
        certificate,
        tolerances: tols.clone(),
        sampling: None,
        warnings,
    }
}

pub fn check_mfcq(
    sys: &dyn ConstraintSystem,
    x: &[f64],
    y: &[f64],
    tols: &Tolerances,
) -> CqReport {
    let mut warnings = point_warnings(sys, x, y, tols);
    let active = active_set(sys, x, y, tols.tol_act).indices;
    let eqs = sys.eq_labels();
    let labels: Vec<usize> = active.iter().chain(eqs.iter()).copied().collect();
    let (verdict, certificate) = match grads_at(sys, x, y, &labels) {
        None => {
            warnings.push("non-finite gradient at the reference point".into());
            (CqVerdict::Inconclusive, json!({ "active": active, "eqs": eqs }))
        }
        Some(grads) => {
            let pos = family(&grads, &active, sys.m());
            let free = family(&grads, &eqs, sys.m());
            match positive_linear_dependent(&pos, &free, tols.tol_pld) {
                Err(e) => {
                    warnings.push(format!("dependence test failed: {e}"));
                    (CqVerdict::Inconclusive, json!({ "active": active, "eqs": eqs }))
                }
                Ok((dependent, cert)) => {
                    let verdict = if dependent { CqVerdict::Fails } else { CqVerdict::Holds };
                    (
                        verdict,
                        json!({
                            "active": active,
                            "eqs": eqs,
                            "dependent": dependent,
                            "witness": cert,
                        }),
                    )
                }
            }
        }
    };
    CqReport {
        cq: CqKind::Mfcq,
        x: x.to_vec(),
        y: y.to_vec(),
        verdict,
        certificate,
        tolerances: tols.clone(),
        sampling: None,
        warnings,
    }
}

struct GradSample {
    radius_idx: usize,
    sample_idx: usize,
    grads: BTreeMap<usize, Vec<f64>>,
}

/// Joint (x, y) ball perturbations of the reference point with the gradient
/// table of the requested labels evaluated at each kept sample. Axis probes
/// come before the random draws at every radius.
fn gradient_samples(
    sys: &dyn ConstraintSystem,
    cx: &[f64],
    cy: &[f64],
    sampler: &NeighborhoodSampler,
    labels: &[usize],
    solve_cfg: &SolveCfg,
) -> (Vec<GradSample>, SamplingRecord) {
    let n = sys.n();
    let m = sys.m();
    let dim = n + m;
    let dom = DomainOracle::new(sys, solve_cfg.clone());
    let mut samples = Vec::new();
    let mut per_radius = Vec::new();
    for (ri, &radius) in sampler.radii.iter().enumerate() {
        let mut offsets = axis_points(dim, radius);
        for k in 0..sampler.samples_per_radius {
            let mut rng = stream(sampler.seed, TAG_CQ, ri, k);
            offsets.push(ball_point(&mut rng, dim, radius));
        }
        let mut trace = RadiusTrace {
            radius,
            generated: 0,
            kept: 0,
            omega_rejected: 0,
            skipped_nonfinite: 0,
        };
        for (k, off) in offsets.into_iter().enumerate() {
            trace.generated += 1;
            let px: Vec<f64> = cx.iter().zip(&off[..n]).map(|(c, d)| c + d).collect();
            let py: Vec<f64> = cy.iter().zip(&off[n..]).map(|(c, d)| c + d).collect();
            if !dom.admits(&sampler.restriction, &px) {
                trace.omega_rejected += 1;
                continue;
            }
            match grads_at(sys, &px, &py, labels) {
                None => trace.skipped_nonfinite += 1,
                Some(grads) => {
                    trace.kept += 1;
                    samples.push(GradSample { radius_idx: ri, sample_idx: k, grads });
                }
            }
        }
        per_radius.push(trace);
    }
    let record = SamplingRecord {
        restriction: sampler.restriction.name().to_string(),
        seed: sampler.seed,
        samples_per_radius: sampler.samples_per_radius,
        per_radius,
    };
    (samples, record)
}

fn subsets_of(labels: &[usize]) -> Vec<Vec<usize>> {
    let a = labels.len();
    (0..(1usize << a))
        .map(|mask| {
            (0..a)
                .filter(|i| mask & (1usize << i) != 0)
                .map(|i| labels[i])
                .collect()
        })
        .collect()
}

pub fn check_rcrcq(
    sys: &dyn ConstraintSystem,
    x: &[f64],
    y: &[f64],
    sampler: &NeighborhoodSampler,
    tols: &Tolerances,
    solve_cfg: &SolveCfg,
) -> Result<CqReport, CqError> {
    let mut warnings = point_warnings(sys, x, y, tols);
    let active = active_set(sys, x, y, tols.tol_act).indices;
    if active.len() > tols.subset_cap {
        return Err(CqError::SubsetCapExceeded { active: active.len(), cap: tols.subset_cap });
    }
    let eqs = sys.eq_labels();
    let labels: Vec<usize> = active.iter().chain(eqs.iter()).copied().collect();
    let Some(center) = grads_at(sys, x, y, &labels) else {
        warnings.push("non-finite gradient at the reference point".into());
        return Ok(CqReport {
            cq: CqKind::Rcrcq,
            x: x.to_vec(),
            y: y.to_vec(),
            verdict: CqVerdict::Inconclusive,
            certificate: json!({ "active": active, "eqs": eqs }),
            tolerances: tols.clone(),
            sampling: None,
            warnings,
        });
    };
    let (samples, record) = gradient_samples(sys, x, y, sampler, &labels, solve_cfg);

    let m = sys.m();
    let mut offender = None;
    'subsets: for subset in subsets_of(&active) {
        let fam_labels: Vec<usize> = subset.iter().chain(eqs.iter()).copied().collect();
        let center_rank = num_rank(&family(&center, &fam_labels, m), tols.tol_rank);
        for s in &samples {
            let rank = num_rank(&family(&s.grads, &fam_labels, m), tols.tol_rank);
            if rank != center_rank {
                offender = Some(json!({
                    "subset": subset,
                    "center_rank": center_rank,
                    "sample_rank": rank,
                    "radius": sampler.radii[s.radius_idx],
                    "sample_index": s.sample_idx,
                }));
                break 'subsets;
            }
        }
    }

    let verdict = if offender.is_some() { CqVerdict::Fails } else { CqVerdict::HoldsOnSamples };
    let certificate = json!({
        "active": active,
        "eqs": eqs,
        "subsets_checked": 1usize << active.len(),
        "samples": samples.len(),
        "offender": offender,
    });
    Ok(CqReport {
        cq: CqKind::Rcrcq,
        x: x.to_vec(),
        y: y.to_vec(),
        verdict,
        certificate,
        tolerances: tols.clone(),
        sampling: Some(record),
        warnings,
    })
}

/// Greedy basis of the equality gradients: labels are tried in ascending
/// order and kept when they enlarge the rank.
fn greedy_basis(grads: &BTreeMap<usize, Vec<f64>>, eqs: &[usize], m: usize, tol_rank: f64) -> Vec<usize> {
    let mut basis: Vec<usize> = Vec::new();
    for &label in eqs {
        let mut trial = basis.clone();
        trial.push(label);
        let fam = family(grads, &trial, m);
        if num_rank(&fam, tol_rank) == trial.len() {
            basis = trial;
        }
    }
    basis
}

pub fn check_rcpld(
    sys: &dyn ConstraintSystem,
    x: &[f64],
    y: &[f64],
    sampler: &NeighborhoodSampler,
    tols: &Tolerances,
    solve_cfg: &SolveCfg,
) -> Result<CqReport, CqError> {
    let mut warnings = point_warnings(sys, x, y, tols);
    let active = active_set(sys, x, y, tols.tol_act).indices;
    if active.len() > tols.subset_cap {
        return Err(CqError::SubsetCapExceeded { active: active.len(), cap: tols.subset_cap });
    }
    let eqs = sys.eq_labels();
    let labels: Vec<usize> = active.iter().chain(eqs.iter()).copied().collect();
    let Some(center) = grads_at(sys, x, y, &labels) else {
        warnings.push("non-finite gradient at the reference point".into());
        return Ok(CqReport {
            cq: CqKind::Rcpld,
            x: x.to_vec(),
            y: y.to_vec(),
            verdict: CqVerdict::Inconclusive,
            certificate: json!({ "active": active, "eqs": eqs }),
            tolerances: tols.clone(),
            sampling: None,
            warnings,
        });
    };
    let (samples, record) = gradient_samples(sys, x, y, sampler, &labels, solve_cfg);
    let m = sys.m();

    let basis = greedy_basis(&center, &eqs, m, tols.tol_rank);
    let eq_rank_center = num_rank(&family(&center, &eqs, m), tols.tol_rank);
    let mut offender = None;
    for s in &samples {
        let rank = num_rank(&family(&s.grads, &eqs, m), tols.tol_rank);
        if rank != eq_rank_center {
            offender = Some(json!({
                "kind": "eq_rank_drift",
                "center_rank": eq_rank_center,
                "sample_rank": rank,
                "radius": sampler.radii[s.radius_idx],
                "sample_index": s.sample_idx,
            }));
            break;
        }
    }

    let mut dependent_subsets = Vec::new();
    if offender.is_none() {
        'subsets: for subset in subsets_of(&active) {
            let pos = family(&center, &subset, m);
            let free = family(&center, &basis, m);
            let dependent = match positive_linear_dependent(&pos, &free, tols.tol_pld) {
                Ok((d, _)) => d,
                Err(e) => {
                    warnings.push(format!("dependence test failed for {subset:?}: {e}"));
                    false
                }
            };
            if !dependent {
                continue;
            }
            dependent_subsets.push(subset.clone());
            let fam_labels: Vec<usize> = subset.iter().chain(basis.iter()).copied().collect();
            for s in &samples {
                let rank = num_rank(&family(&s.grads, &fam_labels, m), tols.tol_rank);
                if rank >= fam_labels.len() {
                    offender = Some(json!({
                        "kind": "dependence_lost",
                        "subset": subset,
                        "basis": basis,
                        "sample_rank": rank,
                        "radius": sampler.radii[s.radius_idx],
                        "sample_index": s.sample_idx,
                    }));
                    break 'subsets;
                }
            }
        }
    }

    let verdict = if offender.is_some() { CqVerdict::Fails } else { CqVerdict::HoldsOnSamples };
    let certificate = json!({
        "active": active,
        "eqs": eqs,
        "basis": basis,
        "eq_rank": eq_rank_center,
        "dependent_subsets": dependent_subsets,
        "samples": samples.len(),
        "offender": offender,
    });
    Ok(CqReport {
        cq: CqKind::Rcpld,
        x: x.to_vec(),
        y: y.to_vec(),
        verdict,
        certificate,
        tolerances: tols.clone(),
        sampling: Some(record),
        warnings,
    })
}

/// How the value-function constraint f(x,y) - phi(x) enters the augmented
/// system: as one more inequality or as an equality.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum H0Mode {
    #[serde(rename = "h0_as_ineq")]
    Ineq,
    #[serde(rename = "h0_as_eq")]
    Eq,
}

/// The solution-map system: the base constraints plus f(x,y) - phi(x) under
/// label 0. phi is re-solved (memoized) at whatever parameter the constraint
/// is evaluated at; its y-gradient is the objective gradient, exactly.
pub struct SolutionSystem {
    base: Arc<ParametricProblem>,
    mode: H0Mode,
    memo: Arc<PhiMemo>,
}

impl SolutionSystem {
    pub fn new(base: Arc<ParametricProblem>, mode: H0Mode, memo: Arc<PhiMemo>) -> Self {
        SolutionSystem { base, mode, memo }
    }

    pub fn mode(&self) -> H0Mode {
        self.mode
    }

    pub fn base(&self) -> &Arc<ParametricProblem> {
        &self.base
    }
}

impl ConstraintSystem for SolutionSystem {
    fn n(&self) -> usize {
        self.base.sys.n()
    }

    fn m(&self) -> usize {
        self.base.sys.m()
    }

    fn ineq_labels(&self) -> Vec<usize> {
        let mut labels = self.base.sys.ineq_labels();
        if self.mode == H0Mode::Ineq {
            labels.push(0);
        }
        labels
    }

    fn eq_labels(&self) -> Vec<usize> {
        let mut labels = self.base.sys.eq_labels();
        if self.mode == H0Mode::Eq {
            labels.push(0);
        }
        labels
    }

    fn value(&self, label: usize, x: &[f64], y: &[f64]) -> f64 {
        if label != 0 {
            return self.base.sys.value(label, x, y);
        }
        let phi = self.memo.phi(x);
        if !phi.is_finite() {
            // Empty image: the base constraints already exclude (x, y); the
            // value constraint must not mask that with a NaN.
            return match self.mode {
                H0Mode::Ineq => f64::NEG_INFINITY,
                H0Mode::Eq => f64::INFINITY,
            };
        }
        self.base.objective(x, y) - phi
    }

    fn grad_y(&self, label: usize, x: &[f64], y: &[f64]) -> Vec<f64> {
        if label != 0 {
            return self.base.sys.grad_y(label, x, y);
        }
        self.base.objective_grad_y(x, y)
    }

    fn division_present(&self) -> bool {
        self.base.division_present()
    }
}

/// Validates that the lower level is solved at the reference parameter and
/// wires up the augmented system around a shared phi cache.
pub fn build_solution_system(
    problem: Arc<ParametricProblem>,
    phi_ref: f64,
    mode: H0Mode,
    memo: Arc<PhiMemo>,
) -> Result<SolutionSystem, CqError> {
    if !phi_ref.is_finite() {
        return Err(CqError::LowerLevelUnsolved);
    }
    Ok(SolutionSystem::new(problem, mode, memo))
}

struct SupportLp {
    feasible: bool,
    residual: f64,
    lambda: BTreeMap<usize, f64>,
    mu: BTreeMap<usize, f64>,
}

/// Least-L1-residual stationarity solve for a fixed inequality support:
/// grad f + sum lambda_i grad h_i + sum mu_j grad h_j = 0 with
/// lambda >= floor on the support and zero elsewhere.
fn support_lp(
    grad_f: &[f64],
    support: &[usize],
    eqs: &[usize],
    grads: &BTreeMap<usize, Vec<f64>>,
    floor: f64,
    tol: f64,
) -> Result<SupportLp, LpError> {
    let m = grad_f.len();
    let t = support.len();
    let e = eqs.len();
    let cols = t + 2 * e + 2 * m;
    let mut a = vec![vec![0.0; cols]; m];
    let mut b = vec![0.0; m];
    for row in 0..m {
        for (k, lab) in support.iter().enumerate() {
            a[row][k] = grads[lab][row];
        }
        for (k, lab) in eqs.iter().enumerate() {
            a[row][t + k] = grads[lab][row];
            a[row][t + e + k] = -grads[lab][row];
        }
        a[row][t + 2 * e + row] = 1.0;
        a[row][t + 2 * e + m + row] = -1.0;
        b[row] = -grad_f[row]
            - floor * support.iter().map(|lab| grads[lab][row]).sum::<f64>();
    }
    let mut basis = Vec::with_capacity(m);
    for row in 0..m {
        if b[row] < 0.0 {
            for v in a[row].iter_mut() {
                *v = -*v;
            }
            b[row] = -b[row];
            basis.push(t + 2 * e + m + row);
        } else {
            basis.push(t + 2 * e + row);
        }
    }
    let mut cost = vec![0.0; cols];
    for s in 0..2 * m {
        cost[t + 2 * e + s] = 1.0;
    }
    let out = solve_bland(&a, &b, &cost, &basis)?;
    let mut lambda = BTreeMap::new();
    for (k, lab) in support.iter().enumerate() {
        lambda.insert(*lab, floor + out.x[k]);
    }
    let mut mu = BTreeMap::new();
    for (k, lab) in eqs.iter().enumerate() {
        mu.insert(*lab, out.x[t + k] - out.x[t + e + k]);
    }
    Ok(SupportLp { feasible: out.value <= tol, residual: out.value, lambda, mu })
}

/// Multiplier-support check on the solution-map system. The base system
/// must already pass its own neighborhood check (mirrored otherwise); then
/// every support realizable by a stationary multiplier whose augmented
/// family is positive-linearly dependent at the center must stay linearly
/// dependent at every sample.
pub fn check_rcpld_s_via_multipliers(
    problem: &Arc<ParametricProblem>,
    x: &[f64],
    y: &[f64],
    sampler: &NeighborhoodSampler,
    tols: &Tolerances,
    solve_cfg: &SolveCfg,
) -> Result<CqReport, CqError> {
    let sol = solve_lower(problem, x, solve_cfg);
    if !sol.phi.is_finite() {
        return Err(CqError::LowerLevelUnsolved);
    }
    let memo = PhiMemo::new(problem.clone(), solve_cfg.clone());
    memo.seed_value(x, sol.phi.0);
    let sys = SolutionSystem::new(problem.clone(), H0Mode::Ineq, memo);

    let mut warnings = Vec::new();
    let gap = problem.objective(x, y) - sol.phi.0;
    if gap.abs() > tols.dist_tol {
        warnings.push(format!(
            "reference point is not a lower-level solution: f - phi = {gap:.3e}"
        ));
    }

    let base = check_rcpld(&problem.sys, x, y, sampler, tols, solve_cfg)?;
    warnings.extend(base.warnings.iter().cloned());
    if base.verdict != CqVerdict::HoldsOnSamples {
        warnings.push("base-system neighborhood check did not pass; verdict mirrored".into());
        return Ok(CqReport {
            cq: CqKind::RcpldS,
            x: x.to_vec(),
            y: y.to_vec(),
            verdict: base.verdict,
            certificate: json!({ "base": base.certificate }),
            tolerances: tols.clone(),
            sampling: base.sampling,
            warnings,
        });
    }

    let active_all = active_set(&sys, x, y, tols.tol_act).indices;
    if !active_all.contains(&0) {
        warnings.push("value-function constraint inactive at the reference point".into());
    }
    let active: Vec<usize> = active_all.iter().copied().filter(|l| *l != 0).collect();
    if active.len() > tols.subset_cap {
        return Err(CqError::SubsetCapExceeded { active: active.len(), cap: tols.subset_cap });
    }
    let eqs = problem.sys.eq_labels();
    let mut labels: Vec<usize> = vec![0];
    labels.extend(active.iter().chain(eqs.iter()).copied());
    let Some(center) = grads_at(&sys, x, y, &labels) else {
        warnings.push("non-finite gradient at the reference point".into());
        return Ok(CqReport {
            cq: CqKind::RcpldS,
            x: x.to_vec(),
            y: y.to_vec(),
            verdict: CqVerdict::Inconclusive,
            certificate: json!({ "base": base.certificate }),
            tolerances: tols.clone(),
            sampling: base.sampling,
            warnings,
        });
    };
    let m = sys.m();
    let basis = greedy_basis(&center, &eqs, m, tols.tol_rank);
    let grad_f = center[&0].clone();

    let (samples, record) = gradient_samples(&sys, x, y, sampler, &labels, solve_cfg);

    let mut supports = Vec::new();
    let mut any_realizable = false;
    let mut offender = None;
    'supports: for support in subsets_of(&active) {
        let lp = support_lp(&grad_f, &support, &eqs, &center, tols.eps_pos, tols.mult_residual)?;
        if !lp.feasible {
            // The floor excludes multipliers with components in (0, eps_pos);
            // a floor-free re-solve tells whether that exclusion was binding.
            let relaxed =
                support_lp(&grad_f, &support, &eqs, &center, 0.0, tols.mult_residual)?;
            if relaxed.feasible
                && relaxed.lambda.values().any(|v| *v < tols.eps_pos)
            {
                warnings.push(format!(
                    "support {support:?} realizable only with multiplier components below eps_pos; treated as unrealizable"
                ));
            }
            supports.push(json!({
                "support": support,
                "realizable": false,
                "lp_residual": lp.residual,
            }));
            continue;
        }
        any_realizable = true;

        let mut pos_labels: Vec<usize> = vec![0];
        pos_labels.extend(support.iter().copied());
        let pos = family(&center, &pos_labels, m);
        let free = family(&center, &basis, m);
        let (dependent, cert) = positive_linear_dependent(&pos, &free, tols.tol_pld)
            .map_err(|_| CqError::Lp(LpError::IterationLimit))?;

        let mut violation = None;
        if dependent {
            let fam_labels: Vec<usize> =
                pos_labels.iter().chain(basis.iter()).copied().collect();
            for s in &samples {
                let rank = num_rank(&family(&s.grads, &fam_labels, m), tols.tol_rank);
                if rank >= fam_labels.len() {
                    violation = Some(json!({
                        "sample_rank": rank,
                        "family": fam_labels,
                        "radius": sampler.radii[s.radius_idx],
                        "sample_index": s.sample_idx,
                    }));
                    break;
                }
            }
        }

        supports.push(json!({
            "support": support,
            "realizable": true,
            "lambda": lp.lambda,
            "mu": lp.mu,
            "lp_residual": lp.residual,
            "dependent_with_basis": dependent,
            "witness": cert,
            "violation": violation,
        }));
        if supports
            .last()
            .and_then(|s| s.get("violation"))
            .map_or(false, |v| !v.is_null())
        {
            offender = Some(support.clone());
            break 'supports;
        }
    }

    let verdict = if offender.is_some() {
        CqVerdict::Fails
    } else if !any_realizable {
        warnings.push("no stationary multiplier found at the reference point".into());
        CqVerdict::Inconclusive
    } else {
        CqVerdict::HoldsOnSamples
    };
    let certificate = json!({
        "base": base.certificate,
        "basis": basis,
        "active": active,
        "supports": supports,
        "offender": offender,
        "samples": samples.len(),
    });
    Ok(CqReport {
        cq: CqKind::RcpldS,
        x: x.to_vec(),
        y: y.to_vec(),
        verdict,
        certificate,
        tolerances: tols.clone(),
        sampling: Some(record),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;
    use crate::parametric::Flags;
    use crate::system::ParametricSystem;

    fn sys(n: usize, m: usize, ineq: &[&str], eq: &[&str]) -> ParametricSystem {
        ParametricSystem::new(
            n,
            m,
            ineq.iter().map(|t| parse_expr(t, n, m).unwrap()).collect(),
            eq.iter().map(|t| parse_expr(t, n, m).unwrap()).collect(),
        )
    }

    fn cubic_gamma() -> ParametricSystem {
        sys(1, 1, &["x1 - y1", "y1 - y1^2", "y1 - 1"], &[])
    }

    fn qp_problem() -> Arc<ParametricProblem> {
        Arc::new(ParametricProblem::new(
            sys(1, 2, &["-y1", "-y2"], &[]),
            parse_expr("(y1+1)^2 + (y2-x1)^2", 1, 2).unwrap(),
            Flags { convex_in_y: true, locally_bounded: true },
        ))
    }

    fn light_sampler() -> NeighborhoodSampler {
        NeighborhoodSampler::new(vec![1e-1, 1e-2], 24, 42, crate::sampling::Restriction::FullSpace)
            .unwrap()
    }

    #[test]
    fn licq_fails_and_rcpld_holds_at_the_kink() {
        let g = cubic_gamma();
        let tols = Tolerances::default();
        let licq = check_licq(&g, &[0.0], &[0.0], &tols);
        assert_eq!(licq.verdict, CqVerdict::Fails);
        let mfcq = check_mfcq(&g, &[0.0], &[0.0], &tols);
        assert_eq!(mfcq.verdict, CqVerdict::Fails);
        let rcpld = check_rcpld(&g, &[0.0], &[0.0], &light_sampler(), &tols, &SolveCfg::default())
            .unwrap();
        assert_eq!(rcpld.verdict, CqVerdict::HoldsOnSamples, "{:?}", rcpld.certificate);
    }

    #[test]
    fn upper_branch_point_keeps_rcpld() {
        let g = cubic_gamma();
        let tols = Tolerances::default();
        let rcpld = check_rcpld(&g, &[0.0], &[1.0], &light_sampler(), &tols, &SolveCfg::default())
            .unwrap();
        assert_eq!(rcpld.verdict, CqVerdict::HoldsOnSamples);
        // One-dimensional y: every nonvanishing family keeps rank 1 nearby.
        let rcrcq = check_rcrcq(&g, &[0.0], &[1.0], &light_sampler(), &tols, &SolveCfg::default())
            .unwrap();
        assert_eq!(rcrcq.verdict, CqVerdict::HoldsOnSamples);
    }

    #[test]
    fn independent_box_constraints_pass_everything() {
        let g = sys(1, 1, &["-y1", "y1 - x1"], &[]);
        let tols = Tolerances::default();
        let licq = check_licq(&g, &[1.0], &[0.0], &tols);
        assert_eq!(licq.verdict, CqVerdict::Holds);
        let mfcq = check_mfcq(&g, &[1.0], &[0.0], &tols);
        assert_eq!(mfcq.verdict, CqVerdict::Holds);
        let rcrcq = check_rcrcq(&g, &[1.0], &[0.0], &light_sampler(), &tols, &SolveCfg::default())
            .unwrap();
        assert_eq!(rcrcq.verdict, CqVerdict::HoldsOnSamples);
    }

    #[test]
    fn infeasible_reference_still_reports_with_warning() {
        let g = sys(1, 1, &["-y1", "y1 - x1"], &[]);
        let tols = Tolerances::default();
        let rep = check_licq(&g, &[1.0], &[5.0], &tols);
        assert!(rep.warnings.iter().any(|w| w.contains("infeasible")));
    }

    #[test]
    fn rescaling_an_inequality_keeps_verdicts() {
        let tols = Tolerances::default();
        let g1 = cubic_gamma();
        let g2 = sys(1, 1, &["3*(x1 - y1)", "y1 - y1^2", "y1 - 1"], &[]);
        for point in [[0.0, 0.0], [0.0, 1.0]] {
            let (x, y) = ([point[0]], [point[1]]);
            assert_eq!(
                check_licq(&g1, &x, &y, &tols).verdict,
                check_licq(&g2, &x, &y, &tols).verdict
            );
            assert_eq!(
                check_mfcq(&g1, &x, &y, &tols).verdict,
                check_mfcq(&g2, &x, &y, &tols).verdict
            );
            let s = light_sampler();
            let cfg = SolveCfg::default();
            assert_eq!(
                check_rcpld(&g1, &x, &y, &s, &tols, &cfg).unwrap().verdict,
                check_rcpld(&g2, &x, &y, &s, &tols, &cfg).unwrap().verdict
            );
        }
    }

    #[test]
    fn solution_system_augments_labels_and_values() {
        let p = qp_problem();
        let memo = PhiMemo::new(p.clone(), SolveCfg::default());
        let s = SolutionSystem::new(p, H0Mode::Ineq, memo);
        assert_eq!(s.ineq_labels(), vec![1, 2, 0]);
        assert!(s.eq_labels().is_empty());
        // phi(1) = 1 at y = (0, 1); h0 at the solution is ~0 and active.
        let v = s.value(0, &[1.0], &[0.0, 1.0]);
        assert!(v.abs() < 1e-6, "h0 = {v}");
        let g = s.grad_y(0, &[1.0], &[0.0, 1.0]);
        assert!((g[0] - 2.0).abs() < 1e-12 && g[1].abs() < 1e-12);
    }

    #[test]
    fn multiplier_support_check_separates_the_two_branches() {
        let p = qp_problem();
        let tols = Tolerances::default();
        let cfg = SolveCfg::default();
        let s = light_sampler();

        let fails = check_rcpld_s_via_multipliers(&p, &[1.0], &[0.0, 1.0], &s, &tols, &cfg)
            .unwrap();
        assert_eq!(fails.verdict, CqVerdict::Fails, "{}", fails.certificate);
        let sup = fails.certificate["supports"]
            .as_array()
            .unwrap()
            .iter()
            .find(|s| s["realizable"].as_bool() == Some(true))
            .expect("a realizable support");
        let lam1 = sup["lambda"]["1"].as_f64().unwrap();
        assert!((lam1 - 2.0).abs() < 1e-6, "lambda_1 = {lam1}");

        let holds = check_rcpld_s_via_multipliers(&p, &[-1.0], &[0.0, 0.0], &s, &tols, &cfg)
            .unwrap();
        assert_eq!(holds.verdict, CqVerdict::HoldsOnSamples, "{}", holds.certificate);
        let sup = holds.certificate["supports"]
            .as_array()
            .unwrap()
            .iter()
            .find(|s| s["realizable"].as_bool() == Some(true))
            .expect("a realizable support");
        assert_eq!(sup["support"].as_array().unwrap().len(), 2);
        assert!((sup["lambda"]["1"].as_f64().unwrap() - 2.0).abs() < 1e-6);
        assert!((sup["lambda"]["2"].as_f64().unwrap() - 2.0).abs() < 1e-6);
    }

    #[test]
    fn fritz_john_failure_at_computed_solutions() {
        let p = qp_problem();
        let cfg = SolveCfg::default();
        let tols = Tolerances::default();
        for x in [[1.0], [-1.0], [0.3]] {
            let sol = solve_lower(&p, &x, &cfg);
            assert!(sol.phi.is_finite());
            let memo = PhiMemo::new(p.clone(), cfg.clone());
            memo.seed_value(&x, sol.phi.0);
            let sys = build_solution_system(p.clone(), sol.phi.0, H0Mode::Ineq, memo).unwrap();
            for rep in &sol.representatives {
                let r = check_mfcq(&sys, &x, rep, &tols);
                assert_eq!(r.verdict, CqVerdict::Fails, "x = {x:?} rep = {rep:?}");
            }
        }
    }
}
