//! Self-checks behind `regkit reproduce`: each bundled example carries the
//! verdicts and values it is known to exhibit, and this module re-runs the
//! analyses and compares. The returned payloads are canonical-serializable,
//! so two runs with the same seed must agree byte for byte.

use std::sync::Arc;

use serde_json::{json, Value};

use regkit_core::bilevel::{
    check_partial_calmness, pessimistic_existence_report, solve_optimistic, CalmnessStatus,
    DEFAULT_KAPPA_GRID,
};
use regkit_core::cq::{check_rcpld, check_rcpld_s_via_multipliers, CqReport, CqVerdict};
use regkit_core::geom::{
    estimate_rregularity, inner_semicontinuity_probe, IscVerdict, ProbeCfg, RRegVerdict,
    RegularityProbe,
};
use regkit_core::parametric::{
    lipschitz_scan, s_map_probes, scan, AxisSpec, GridScan, GridSpec, LipschitzCfg,
    ParametricProblem,
};
use regkit_core::report::Tolerances;
use regkit_core::sampling::{NeighborhoodSampler, Restriction};
use regkit_core::solver::SolveCfg;

use crate::bundled::{load_bundled, EXAMPLE_NAMES};
use crate::problemfile::{ProblemFile, ProblemFileError};

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug)]
pub struct ExampleRun {
    pub example: String,
    pub checks: Vec<CheckResult>,
    /// Reports produced along the way, for the determinism envelope.
    pub payload: Value,
}

impl ExampleRun {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

struct Checks(Vec<CheckResult>);

impl Checks {
    fn new() -> Self {
        Checks(Vec::new())
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.0.push(CheckResult { name: name.to_string(), passed, detail });
    }
}

fn solve_cfg(seed: u64) -> SolveCfg {
    SolveCfg { seed, ..SolveCfg::default() }
}

fn full_sampler(seed: u64) -> NeighborhoodSampler {
    NeighborhoodSampler::default().with_seed(seed)
}

fn dom_sampler(seed: u64) -> NeighborhoodSampler {
    full_sampler(seed).with_restriction(Restriction::DomGamma)
}

/// Smaller budget for checks that are not covered by a timed criterion.
fn light_sampler(seed: u64) -> NeighborhoodSampler {
    NeighborhoodSampler::new(vec![1e-2, 1e-3], 60, seed, Restriction::FullSpace)
        .expect("fixed descending radii")
}

fn named_point(pf: &ProblemFile, name: &str) -> (Vec<f64>, Vec<f64>) {
    let p = pf.point(name).expect("bundled examples name their reference points");
    (p.x.clone(), p.y.clone())
}

fn kappa_at(probe: &RegularityProbe, radius: f64) -> Option<f64> {
    probe
        .per_radius
        .iter()
        .find(|r| (r.radius - radius).abs() <= 1e-12 * radius.max(1.0))
        .and_then(|r| r.kappa_hat)
        .filter(|k| k.is_finite())
        .map(|k| k.0)
}

fn finite_kappa_spread(probe: &RegularityProbe) -> Option<f64> {
    let ks: Vec<f64> = probe
        .per_radius
        .iter()
        .filter_map(|r| r.kappa_hat)
        .filter(|k| k.is_finite())
        .map(|k| k.0)
        .collect();
    if ks.len() < 2 {
        return None;
    }
    let lo = ks.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = ks.iter().cloned().fold(0.0f64, f64::max);
    (lo > 0.0).then(|| hi / lo)
}

fn grid_1d(min: f64, max: f64, steps: usize) -> GridSpec {
    GridSpec { axes: vec![AxisSpec { min, max, steps }] }
}

fn node_phi(scan: &GridScan, x: f64) -> Option<&regkit_core::parametric::ScanNode> {
    scan.nodes.iter().find(|n| (n.x[0] - x).abs() <= 1e-9)
}

fn ex32_gamma(pf: &ProblemFile, seed: u64) -> (Vec<CheckResult>, Value) {
    let sys = pf.system();
    let tols = Tolerances::default();
    let scfg = solve_cfg(seed);
    let cfg = ProbeCfg { solve: scfg.clone(), ..ProbeCfg::default() };
    let (kx, ky) = named_point(pf, "kink");
    let (ux, uy) = named_point(pf, "upper");
    let mut c = Checks::new();

    let rreg_kink = estimate_rregularity(&sys, &kx, &ky, &dom_sampler(seed), &cfg, tols.tol_feas);
    c.push(
        "rreg at kink (dom) is likely_not_R_regular",
        rreg_kink.verdict == RRegVerdict::LikelyNot,
        format!("verdict {:?}", rreg_kink.verdict),
    );
    match (kappa_at(&rreg_kink, 1e-1), kappa_at(&rreg_kink, 1e-3)) {
        (Some(k1), Some(k3)) => c.push(
            "kappa-hat at kink grows at least 100x from r=1e-1 to 1e-3",
            k3 >= 100.0 * k1,
            format!("kappa(1e-1) = {k1:.3e}, kappa(1e-3) = {k3:.3e}"),
        ),
        _ => c.push("kappa-hat at kink grows at least 100x from r=1e-1 to 1e-3", false, "kappa-hat missing at a probe radius".into()),
    }

    let rreg_upper = estimate_rregularity(&sys, &ux, &uy, &dom_sampler(seed), &cfg, tols.tol_feas);
    c.push(
        "rreg at upper point (dom) is consistent_with_R_regular",
        rreg_upper.verdict == RRegVerdict::Consistent,
        format!("verdict {:?}", rreg_upper.verdict),
    );
    match finite_kappa_spread(&rreg_upper) {
        Some(spread) => c.push(
            "kappa-hat spread at upper point stays under 2x",
            spread < 2.0,
            format!("max/min = {spread:.3}"),
        ),
        None => c.push("kappa-hat spread at upper point stays under 2x", false, "fewer than two finite kappa-hat values".into()),
    }

    let rcpld_kink = check_rcpld(&sys, &kx, &ky, &full_sampler(seed), &tols, &scfg);
    let rcpld_upper = check_rcpld(&sys, &ux, &uy, &full_sampler(seed), &tols, &scfg);
    for (label, r) in [("kink", &rcpld_kink), ("upper point", &rcpld_upper)] {
        let verdict = r.as_ref().map(|r| r.verdict);
        c.push(
            &format!("rcpld holds_on_samples at the {label}"),
            matches!(verdict, Ok(CqVerdict::HoldsOnSamples)),
            format!("verdict {verdict:?}"),
        );
    }

    let isc_kink = inner_semicontinuity_probe(&sys, &kx, &ky, &dom_sampler(seed), &cfg, tols.tol_feas);
    c.push(
        "isc probe at kink is likely_not_inner_semicontinuous",
        isc_kink.verdict == IscVerdict::LikelyNot,
        format!("verdict {:?}", isc_kink.verdict),
    );
    let isc_upper = inner_semicontinuity_probe(&sys, &ux, &uy, &dom_sampler(seed), &cfg, tols.tol_feas);
    c.push(
        "isc probe at upper point is likely_inner_semicontinuous",
        isc_upper.verdict == IscVerdict::LikelyInner,
        format!("verdict {:?}", isc_upper.verdict),
    );

    let payload = json!({
        "rreg_kink_dom": rreg_kink,
        "rreg_upper_dom": rreg_upper,
        "rcpld_kink": rcpld_kink.ok(),
        "rcpld_upper": rcpld_upper.ok(),
        "isc_kink_dom": isc_kink,
        "isc_upper_dom": isc_upper,
    });
    (c.0, payload)
}

fn ex_jump(pf: &ProblemFile, seed: u64) -> (Vec<CheckResult>, Value) {
    let problem = pf.lower_problem();
    let tols = Tolerances::default();
    let scfg = solve_cfg(seed);
    let pcfg = ProbeCfg { solve: scfg.clone(), ..ProbeCfg::default() };
    let mut c = Checks::new();

    let grid = scan(&problem, &grid_1d(-1.0, 2.0, 61), &scfg).expect("valid grid");
    let mut in_dom_ok = true;
    let mut out_dom_ok = true;
    let mut worst: f64 = 0.0;
    for node in &grid.nodes {
        if node.x[0] >= 0.0 {
            in_dom_ok &= node.phi.is_finite() && node.phi.0.abs() <= 1e-7;
            if node.phi.is_finite() {
                worst = worst.max(node.phi.0.abs());
            }
        } else {
            out_dom_ok &= node.phi.0 == f64::INFINITY;
        }
    }
    c.push(
        "phi is zero at every node with x >= 0",
        in_dom_ok,
        format!("max |phi| = {worst:.2e} over nodes in dom"),
    );
    c.push("phi is +inf at every node with x < 0", out_dom_ok, "classification is exact".into());

    let lip = lipschitz_scan(
        &problem,
        &grid,
        Some(vec![(0.0, 2.0)]),
        &scfg,
        &LipschitzCfg::default(),
    );
    c.push(
        "no discontinuity flagged inside dom",
        lip.discontinuities.is_empty(),
        format!("{} flagged pairs", lip.discontinuities.len()),
    );

    let (ox, oy) = named_point(pf, "origin");
    let probes_full = s_map_probes(&problem, &ox, &oy, &full_sampler(seed), &pcfg, &tols);
    let probes_dom = s_map_probes(&problem, &ox, &oy, &dom_sampler(seed), &pcfg, &tols);
    let v_full = probes_full.as_ref().map(|p| p.rreg.verdict).ok();
    let v_dom = probes_dom.as_ref().map(|p| p.rreg.verdict).ok();
    c.push(
        "solution-map rreg at the origin fails over the full parameter space",
        v_full == Some(RRegVerdict::LikelyNot),
        format!("verdict {v_full:?}"),
    );
    c.push(
        "solution-map rreg at the origin is consistent when restricted to dom",
        v_dom == Some(RRegVerdict::Consistent),
        format!("verdict {v_dom:?}"),
    );

    let payload = json!({
        "scan": grid,
        "lipschitz_dom_window": lip,
        "smap_full": probes_full.ok(),
        "smap_dom": probes_dom.ok(),
    });
    (c.0, payload)
}

fn ex41_box(pf: &ProblemFile, seed: u64) -> (Vec<CheckResult>, Value) {
    let bp = pf.bilevel_problem().expect("ex41_box bundles an upper level");
    let tols = Tolerances::default();
    let scfg = solve_cfg(seed);
    let (bx, by) = named_point(pf, "boundary_min");
    let mut c = Checks::new();

    let calm = check_partial_calmness(&bp, &bx, &by, &full_sampler(seed), &DEFAULT_KAPPA_GRID, &tols, &scfg);
    let (ok, detail) = match calm.overall {
        CalmnessStatus::CalmOnSamples { kappa_min } => {
            (kappa_min <= 10.0, format!("calm with kappa_min = {kappa_min}"))
        }
        ref other => (false, format!("status {other:?}")),
    };
    c.push("partial calmness holds at the boundary minimizer", ok, detail);

    let existence = pessimistic_existence_report(
        &bp,
        &bp.default_grid(61),
        &light_sampler(seed),
        &tols,
        &scfg,
    );
    match &existence {
        Ok(rep) => {
            let x_ok = (rep.incumbent_x[0] - 1.0).abs() <= 1e-3;
            c.push(
                "pessimistic incumbent sits at x = 1",
                x_ok && rep.x_in_dom_gamma,
                format!("incumbent {:?}, dom hypothesis {}", rep.incumbent_x, rep.x_in_dom_gamma),
            );
        }
        Err(e) => c.push("pessimistic incumbent sits at x = 1", false, e.to_string()),
    }

    let payload = json!({
        "calmness_boundary_min": calm,
        "existence": existence.ok(),
    });
    (c.0, payload)
}

fn ex412_bilinear(pf: &ProblemFile, seed: u64) -> (Vec<CheckResult>, Value) {
    let problem = pf.lower_problem();
    let scfg = solve_cfg(seed);
    let mut c = Checks::new();

    let grid = scan(&problem, &grid_1d(-2.0, 3.0, 61), &scfg).expect("valid grid");
    // Closed-form pieces: phi = 1/x with solution (1/x, 1) for x <= -1,
    // phi = -1 with (-1, -x) on [-1, 0], phi = 0 with (0, 0) for x > 0.
    let cases = [(-2.0, -0.5, [-0.5, 1.0]), (-0.5, -1.0, [-1.0, 0.5]), (0.5, 0.0, [0.0, 0.0])];
    for (x, phi, rep) in cases {
        let Some(node) = node_phi(&grid, x) else {
            c.push(&format!("phi and representative at x = {x}"), false, "node missing".into());
            continue;
        };
        let phi_ok = node.phi.is_finite() && (node.phi.0 - phi).abs() <= 1e-4;
        let rep_ok = node.representatives.first().is_some_and(|y| {
            y.iter().zip(&rep).all(|(a, b)| (a - b).abs() <= 1e-3)
        });
        c.push(
            &format!("phi and representative at x = {x}"),
            phi_ok && rep_ok,
            format!("phi = {:?} (want {phi}), rep = {:?} (want {rep:?})", node.phi, node.representatives.first()),
        );
    }

    let lip = lipschitz_scan(&problem, &grid, None, &scfg, &LipschitzCfg::default());
    let straddles_zero = lip
        .discontinuities
        .iter()
        .any(|d| d.between.0[0] <= 0.0 && 0.0 <= d.between.1[0]);
    c.push(
        "the value-function jump at x = 0 is flagged as a discontinuity",
        straddles_zero,
        format!(
            "{} flagged pairs: {:?}",
            lip.discontinuities.len(),
            lip.discontinuities.iter().map(|d| (d.between.0[0], d.between.1[0])).collect::<Vec<_>>()
        ),
    );

    let payload = json!({ "scan": grid, "lipschitz": lip });
    (c.0, payload)
}

/// Lower-level multipliers of the nonnegative-quadrant quadratic program:
/// unique at both reference points, (2, max(-2x, 0)).
fn expected_lambda(x: f64) -> [f64; 2] {
    [2.0, (-2.0 * x).max(0.0)]
}

fn lambda_matches(report: &CqReport, x: f64) -> (bool, String) {
    let Some(supports) = report.certificate.get("supports").and_then(Value::as_array) else {
        return (false, "certificate carries no supports".into());
    };
    let realizable: Vec<&Value> = supports
        .iter()
        .filter(|s| s["realizable"].as_bool() == Some(true))
        .collect();
    if realizable.is_empty() {
        return (false, "no realizable support".into());
    }
    let want = expected_lambda(x);
    for s in &realizable {
        let l1 = s["lambda"]["1"].as_f64().unwrap_or(0.0);
        let l2 = s["lambda"]["2"].as_f64().unwrap_or(0.0);
        if (l1 - want[0]).abs() > 1e-6 || (l2 - want[1]).abs() > 1e-6 {
            return (false, format!("lambda = ({l1}, {l2}), want ({}, {})", want[0], want[1]));
        }
    }
    (true, format!("{} realizable support(s) match ({}, {})", realizable.len(), want[0], want[1]))
}

fn ex_qp(pf: &ProblemFile, seed: u64) -> (Vec<CheckResult>, Value) {
    let problem: Arc<ParametricProblem> = pf.lower_problem();
    let tols = Tolerances::default();
    let scfg = solve_cfg(seed);
    let mut c = Checks::new();

    let cases = [("plus", CqVerdict::Fails), ("minus", CqVerdict::HoldsOnSamples)];
    let mut reports = serde_json::Map::new();
    for (point, want) in cases {
        let (px, py) = named_point(pf, point);
        match check_rcpld_s_via_multipliers(&problem, &px, &py, &full_sampler(seed), &tols, &scfg) {
            Ok(report) => {
                c.push(
                    &format!("rcpld_s verdict at the {point} point"),
                    report.verdict == want,
                    format!("verdict {:?} (want {want:?})", report.verdict),
                );
                let (ok, detail) = lambda_matches(&report, px[0]);
                c.push(&format!("realizable multiplier at the {point} point"), ok, detail);
                reports.insert(format!("rcpld_s_{point}"), serde_json::to_value(&report).unwrap());
            }
            Err(e) => {
                c.push(&format!("rcpld_s verdict at the {point} point"), false, e.to_string());
                c.push(&format!("realizable multiplier at the {point} point"), false, "no report".into());
            }
        }
    }
    (c.0, Value::Object(reports))
}

fn ex42_bilevel(pf: &ProblemFile, seed: u64) -> (Vec<CheckResult>, Value) {
    let bp = pf.bilevel_problem().expect("ex42_bilevel bundles an upper level");
    let tols = Tolerances::default();
    let scfg = solve_cfg(seed);
    let mut c = Checks::new();

    let opt = solve_optimistic(&bp, &bp.default_grid(61), 3, &scfg);
    match &opt {
        Ok(sol) => {
            let ok = (sol.x_star[0] - 0.25).abs() <= 1e-3
                && (sol.y_star[0] - 0.5).abs() <= 1e-3
                && (sol.f_upper - 0.5).abs() <= 1e-3;
            c.push(
                "optimistic solve lands on the global minimizer",
                ok,
                format!(
                    "x = {:.6}, y = {:.6}, F = {:.6} (want 0.25, 0.5, 0.5)",
                    sol.x_star[0], sol.y_star[0], sol.f_upper
                ),
            );
        }
        Err(e) => c.push("optimistic solve lands on the global minimizer", false, e.to_string()),
    }

    let (gx, gy) = named_point(pf, "global");
    let calm_global =
        check_partial_calmness(&bp, &gx, &gy, &full_sampler(seed), &DEFAULT_KAPPA_GRID, &tols, &scfg);
    let (ok, detail) = match calm_global.overall {
        CalmnessStatus::CalmOnSamples { kappa_min } => {
            (kappa_min <= 100.0, format!("calm with kappa_min = {kappa_min}"))
        }
        ref other => (false, format!("status {other:?}")),
    };
    c.push("partial calmness holds at the global minimizer", ok, detail);

    let (lx, ly) = named_point(pf, "local");
    let calm_local =
        check_partial_calmness(&bp, &lx, &ly, &full_sampler(seed), &DEFAULT_KAPPA_GRID, &tols, &scfg);
    c.push(
        "partial calmness fails at the second local minimizer",
        calm_local.overall == CalmnessStatus::LikelyNotCalm,
        format!("status {:?} over kappa grid up to 1e4", calm_local.overall),
    );

    let payload = json!({
        "optimistic": opt.ok(),
        "calmness_global": calm_global,
        "calmness_local": calm_local,
    });
    (c.0, payload)
}

pub fn reproduce_example(name: &str, seed: u64) -> Result<ExampleRun, ProblemFileError> {
    let (pf, _) = load_bundled(name)?;
    let (checks, payload) = match name {
        "ex32_gamma" => ex32_gamma(&pf, seed),
        "ex41_box" => ex41_box(&pf, seed),
        "ex_jump" => ex_jump(&pf, seed),
        "ex412_bilinear" => ex412_bilinear(&pf, seed),
        "ex_qp" => ex_qp(&pf, seed),
        "ex42_bilevel" => ex42_bilevel(&pf, seed),
        _ => unreachable!("load_bundled rejects unknown names"),
    };
    Ok(ExampleRun { example: name.to_string(), checks, payload })
}

pub fn reproduce_all(seed: u64) -> Result<Vec<ExampleRun>, ProblemFileError> {
    EXAMPLE_NAMES.iter().map(|name| reproduce_example(name, seed)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    // Full criterion coverage lives in the acceptance suite; these only pin
    // the wiring on the two cheapest examples.

    #[test]
    fn jump_example_checks_all_pass() {
        let run = reproduce_example("ex_jump", 42).unwrap();
        for check in &run.checks {
            assert!(check.passed, "{}: {}", check.name, check.detail);
        }
        assert!(run.payload.get("scan").is_some());
    }

    #[test]
    fn unknown_example_is_an_error() {
        assert!(reproduce_example("ex_unknown", 42).is_err());
    }
}
