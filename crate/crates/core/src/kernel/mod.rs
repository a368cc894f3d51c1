//! Tolerant linear algebra with certificates: numerical rank, positive-linear
//! dependence, and the Carathéodory-style reduction of conic representations.

pub mod lp;

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use thiserror::Error;

pub use lp::{solve_bland, LpError, LpOutcome};

#[derive(Debug, Error)]
pub enum KernelError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("precondition violated: {0}")]
    PreconditionViolation(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// Labeled family of same-dimension vectors. Labels are the constraint
/// indices the vectors came from and must be distinct.
#[derive(Clone, Debug)]
pub struct VecFamily {
    dim: usize,
    items: Vec<(usize, Vec<f64>)>,
}

impl VecFamily {
    pub fn new(dim: usize) -> Self {
        VecFamily { dim, items: Vec::new() }
    }

    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (usize, Vec<f64>)>) -> Self {
        let mut fam = VecFamily::new(dim);
        for (label, v) in pairs {
            fam.push(label, v);
        }
        fam
    }

    pub fn push(&mut self, label: usize, v: Vec<f64>) {
        assert_eq!(v.len(), self.dim, "vector dimension");
        assert!(
            self.items.iter().all(|(l, _)| *l != label),
            "duplicate label {label}"
        );
        self.items.push((label, v));
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[(usize, Vec<f64>)] {
        &self.items
    }

    pub fn labels(&self) -> impl Iterator<Item = usize> + '_ {
        self.items.iter().map(|(l, _)| *l)
    }

    /// Columns in insertion order.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.items.len(), |r, c| self.items[c].1[r])
    }
}

/// Singular-value cutoff: relative to the largest singular value floored at
/// one, with an absolute floor guarding against a degenerate tol_rank.
pub fn rank_threshold(smax: f64, tol_rank: f64) -> f64 {
    (tol_rank * smax.max(1.0)).max(1e-12)
}

fn singular_values_desc(mat: &DMatrix<f64>) -> Vec<f64> {
    if mat.nrows() == 0 || mat.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = mat.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).expect("singular values are finite"));
    s
}

fn matrix_rank(mat: &DMatrix<f64>, tol_rank: f64) -> usize {
    let s = singular_values_desc(mat);
    match s.first() {
        None => 0,
        Some(&smax) => {
            let cut = rank_threshold(smax, tol_rank);
            s.iter().filter(|v| **v > cut).count()
        }
    }
}

/// Numerical rank of the family's column span.
pub fn num_rank(fam: &VecFamily, tol_rank: f64) -> usize {
    matrix_rank(&fam.matrix(), tol_rank)
}

/// Rank of a column list given as slices; all slices share a length.
pub fn rank_of_slices(cols: &[&[f64]], tol_rank: f64) -> usize {
    if cols.is_empty() {
        return 0;
    }
    let dim = cols[0].len();
    debug_assert!(cols.iter().all(|c| c.len() == dim));
    let mat = DMatrix::from_fn(dim, cols.len(), |r, c| cols[c][r]);
    matrix_rank(&mat, tol_rank)
}

/// Right-singular direction for the smallest singular value, computed from
/// the Gram matrix so columns beyond the row count still yield null
/// directions.
fn least_singular_direction(mat: &DMatrix<f64>) -> DVector<f64> {
    let gram = mat.transpose() * mat;
    let eig = gram.symmetric_eigen();
    let mut idx = 0;
    for i in 1..eig.eigenvalues.len() {
        if eig.eigenvalues[i] < eig.eigenvalues[idx] {
            idx = i;
        }
    }
    eig.eigenvectors.column(idx).into_owned()
}

/// Witness of positive-linear dependence: a vanishing combination with
/// weights `alphas` (nonnegative side) and `betas` (free side), normalized
/// so the weight mass is one.
#[derive(Clone, Debug, Serialize)]
pub struct PldCertificate {
    pub alphas: BTreeMap<usize, f64>,
    pub betas: BTreeMap<usize, f64>,
    pub norm: f64,
    pub residual: f64,
}

/// Decides positive-linear dependence of (pos | free).
///
/// Dependence holds when a nonzero combination vanishes with nonnegative
/// weights on `pos` and free weights on `free`. Two disjoint ways exist: the
/// free family is linearly dependent on its own (all pos weights zero), or
/// some combination with positive total pos-weight vanishes. The first is a
/// rank test; the second normalizes the pos weights to sum one and solves a
/// phase-1 LP whose optimum is the least constraint violation.
pub fn positive_linear_dependent(
    pos: &VecFamily,
    free: &VecFamily,
    tol: f64,
) -> Result<(bool, Option<PldCertificate>), KernelError> {
    if pos.is_empty() && free.is_empty() {
        return Ok((false, None));
    }
    if !pos.is_empty() && !free.is_empty() && pos.dim() != free.dim() {
        return Err(KernelError::DimensionMismatch(format!(
            "pos dimension {} vs free dimension {}",
            pos.dim(),
            free.dim()
        )));
    }
    let dim = if pos.is_empty() { free.dim() } else { pos.dim() };

    if !free.is_empty() {
        let fm = free.matrix();
        if matrix_rank(&fm, 1e-8) < free.len() {
            let dir = least_singular_direction(&fm);
            let l1: f64 = dir.iter().map(|v| v.abs()).sum();
            let scaled = dir / l1;
            let residual = (&fm * &scaled).norm();
            let mut betas = BTreeMap::new();
            for (k, label) in free.labels().enumerate() {
                betas.insert(label, scaled[k]);
            }
            let alphas = pos.labels().map(|l| (l, 0.0)).collect();
            return Ok((
                true,
                Some(PldCertificate { alphas, betas, norm: 1.0, residual }),
            ));
        }
    }
    if pos.is_empty() {
        return Ok((false, None));
    }

    // vars: alpha (q) | beta+ (f) | beta- (f) | s+ (d) | s- (d) | u
    let q = pos.len();
    let f = free.len();
    let cols = q + 2 * f + 2 * dim + 1;
    let mut a = vec![vec![0.0; cols]; dim + 1];
    let mut b = vec![0.0; dim + 1];
    for (k, (_, v)) in pos.items().iter().enumerate() {
        for r in 0..dim {
            a[r][k] = v[r];
        }
        a[dim][k] = 1.0;
    }
    for (k, (_, v)) in free.items().iter().enumerate() {
        for r in 0..dim {
            a[r][q + k] = v[r];
            a[r][q + f + k] = -v[r];
        }
    }
    for r in 0..dim {
        a[r][q + 2 * f + r] = 1.0;
        a[r][q + 2 * f + dim + r] = -1.0;
    }
    a[dim][cols - 1] = 1.0;
    b[dim] = 1.0;
    let mut c = vec![0.0; cols];
    for j in q + 2 * f..cols {
        c[j] = 1.0;
    }
    let mut basis0: Vec<usize> = (0..dim).map(|r| q + 2 * f + r).collect();
    basis0.push(cols - 1);

    let out = solve_bland(&a, &b, &c, &basis0)?;
    if out.value > tol {
        return Ok((false, None));
    }

    let mut alphas: BTreeMap<usize, f64> = BTreeMap::new();
    for (k, label) in pos.labels().enumerate() {
        alphas.insert(label, out.x[k]);
    }
    let mut betas: BTreeMap<usize, f64> = BTreeMap::new();
    for (k, label) in free.labels().enumerate() {
        betas.insert(label, out.x[q + k] - out.x[q + f + k]);
    }
    let norm: f64 =
        alphas.values().sum::<f64>() + betas.values().map(|v| v.abs()).sum::<f64>();
    debug_assert!(norm > 0.5, "pos weights sum to one before renormalizing");
    for v in alphas.values_mut() {
        *v /= norm;
    }
    for v in betas.values_mut() {
        *v /= norm;
    }
    let mut combo = vec![0.0; dim];
    for (label, v) in pos.items() {
        let w = alphas[label];
        for r in 0..dim {
            combo[r] += w * v[r];
        }
    }
    for (label, v) in free.items() {
        let w = betas[label];
        for r in 0..dim {
            combo[r] += w * v[r];
        }
    }
    let residual = combo.iter().map(|v| v * v).sum::<f64>().sqrt();
    Ok((
        true,
        Some(PldCertificate { alphas, betas, norm: 1.0, residual }),
    ))
}

/// Output of the conic reduction: the surviving positive labels, the final
/// coefficients over (indep ∪ kept), and the reconstruction residual.
#[derive(Clone, Debug, Serialize)]
pub struct CaratheodoryResult {
    pub kept: Vec<usize>,
    pub coefficients: BTreeMap<usize, f64>,
    pub residual: f64,
}

/// Reduces a representation z = Σ indep coeffs + Σ positive coeffs (the
/// latter > 0) until (indep ∪ kept positives) is linearly independent,
/// stepping along null directions and dropping the positive coefficient that
/// reaches zero first. Zero coefficients on the positive side are accepted
/// and dropped up front.
pub fn caratheodory_reduce(
    z: &[f64],
    indep: &VecFamily,
    positive: &VecFamily,
    coeffs: &BTreeMap<usize, f64>,
    tol_rank: f64,
) -> Result<CaratheodoryResult, KernelError> {
    let dim = z.len();
    for fam in [indep, positive] {
        if !fam.is_empty() && fam.dim() != dim {
            return Err(KernelError::DimensionMismatch(format!(
                "family dimension {} vs z dimension {}",
                fam.dim(),
                dim
            )));
        }
    }
    let znorm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    if znorm <= 1e-12 {
        return Err(KernelError::PreconditionViolation("z must be nonzero".into()));
    }
    if num_rank(indep, tol_rank) < indep.len() {
        return Err(KernelError::PreconditionViolation(
            "independent family is linearly dependent".into(),
        ));
    }

    // working set: (label, vector, coefficient, belongs-to-positive)
    let mut active: Vec<(usize, &[f64], f64, bool)> = Vec::new();
    for (label, v) in indep.items() {
        active.push((*label, v, coeffs.get(label).copied().unwrap_or(0.0), false));
    }
    for (label, v) in positive.items() {
        let c = coeffs.get(label).copied().unwrap_or(0.0);
        if c < -1e-12 {
            return Err(KernelError::PreconditionViolation(format!(
                "coefficient of positive label {label} is negative"
            )));
        }
        if c > 1e-12 {
            active.push((*label, v, c, true));
        }
    }

    let reproduction = |active: &[(usize, &[f64], f64, bool)]| -> f64 {
        let mut r = z.to_vec();
        for (_, v, c, _) in active {
            for (ri, vi) in r.iter_mut().zip(*v) {
                *ri -= c * vi;
            }
        }
        r.iter().map(|v| v * v).sum::<f64>().sqrt()
    };
    if reproduction(&active) > 1e-9 * znorm.max(1.0) {
        return Err(KernelError::PreconditionViolation(
            "coefficients do not reproduce z".into(),
        ));
    }

    loop {
        let mat = DMatrix::from_fn(dim, active.len(), |r, c| active[c].1[r]);
        if matrix_rank(&mat, tol_rank) == active.len() {
            break;
        }
        let mut gamma = least_singular_direction(&mat);
        let pivot = active
            .iter()
            .enumerate()
            .filter(|(k, (_, _, _, is_pos))| *is_pos && gamma[*k].abs() > 1e-12)
            .max_by_key(|(_, (label, ..))| *label);
        let Some((pk, _)) = pivot else {
            return Err(KernelError::PreconditionViolation(
                "null direction avoids every positive label".into(),
            ));
        };
        if gamma[pk] < 0.0 {
            gamma = -gamma;
        }
        let mut drop_at: Option<(usize, f64)> = None;
        for (k, (label, _, c, is_pos)) in active.iter().enumerate() {
            if *is_pos && gamma[k] > 1e-12 {
                let t = c / gamma[k];
                let replace = match drop_at {
                    None => true,
                    Some((bk, bt)) => t < bt || (t == bt && *label > active[bk].0),
                };
                if replace {
                    drop_at = Some((k, t));
                }
            }
        }
        let (drop_k, t_star) = drop_at.expect("pivot label has a positive step");
        for (k, entry) in active.iter_mut().enumerate() {
            entry.2 -= t_star * gamma[k];
        }
        active[drop_k].2 = 0.0;
        active.retain(|(_, _, c, is_pos)| !*is_pos || *c > 1e-13);
    }

    let residual = reproduction(&active);
    let mut kept: Vec<usize> = active
        .iter()
        .filter(|(_, _, _, is_pos)| *is_pos)
        .map(|(label, ..)| *label)
        .collect();
    kept.sort_unstable();
    let coefficients = active.iter().map(|(label, _, c, _)| (*label, *c)).collect();
    Ok(CaratheodoryResult { kept, coefficients, residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fam(dim: usize, vecs: &[(usize, &[f64])]) -> VecFamily {
        VecFamily::from_pairs(dim, vecs.iter().map(|(l, v)| (*l, v.to_vec())))
    }

    #[test]
    fn rank_of_standard_families() {
        assert_eq!(num_rank(&fam(2, &[(1, &[1.0, 0.0]), (2, &[0.0, 1.0])]), 1e-8), 2);
        assert_eq!(num_rank(&fam(1, &[(1, &[-1.0]), (2, &[1.0])]), 1e-8), 1);
        assert_eq!(
            num_rank(
                &fam(2, &[(1, &[1.0, 2.0]), (2, &[2.0, 4.0]), (3, &[3.0, 6.0])]),
                1e-8
            ),
            1
        );
        assert_eq!(num_rank(&VecFamily::new(3), 1e-8), 0);
    }

    #[test]
    fn subfamily_rank_never_exceeds_family_rank() {
        let family = fam(
            3,
            &[
                (1, &[1.0, 0.0, 2.0]),
                (2, &[0.0, 1.0, -1.0]),
                (3, &[1.0, 1.0, 1.0]),
                (4, &[2.0, 1.0, 3.0]),
            ],
        );
        let full = num_rank(&family, 1e-8);
        for skip in family.labels().collect::<Vec<_>>() {
            let sub = VecFamily::from_pairs(
                3,
                family
                    .items()
                    .iter()
                    .filter(|(l, _)| *l != skip)
                    .map(|(l, v)| (*l, v.clone())),
            );
            assert!(num_rank(&sub, 1e-8) <= full);
        }
    }

    #[test]
    fn opposite_vectors_are_positively_dependent() {
        let pos = fam(1, &[(1, &[-1.0]), (2, &[1.0])]);
        let (dep, cert) = positive_linear_dependent(&pos, &VecFamily::new(1), 1e-8).unwrap();
        assert!(dep);
        let cert = cert.unwrap();
        assert!((cert.alphas[&1] - 0.5).abs() < 1e-9);
        assert!((cert.alphas[&2] - 0.5).abs() < 1e-9);
        assert!(cert.residual <= 1e-8);
    }

    #[test]
    fn orthonormal_generators_are_positively_independent() {
        let pos = fam(2, &[(1, &[1.0, 0.0]), (2, &[0.0, 1.0])]);
        let (dep, cert) = positive_linear_dependent(&pos, &VecFamily::new(2), 1e-8).unwrap();
        assert!(!dep);
        assert!(cert.is_none());
    }

    #[test]
    fn collinear_opposed_pair_yields_one_third_weights() {
        let pos = fam(2, &[(1, &[2.0, 0.0]), (2, &[-1.0, 0.0])]);
        let (dep, cert) = positive_linear_dependent(&pos, &VecFamily::new(2), 1e-8).unwrap();
        assert!(dep);
        let cert = cert.unwrap();
        assert!((cert.alphas[&1] - 1.0 / 3.0).abs() < 1e-9);
        assert!((cert.alphas[&2] - 2.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn dependent_free_family_alone_decides() {
        let free = fam(2, &[(7, &[1.0, 0.0]), (8, &[2.0, 0.0])]);
        let (dep, cert) = positive_linear_dependent(&VecFamily::new(2), &free, 1e-8).unwrap();
        assert!(dep);
        let cert = cert.unwrap();
        let mass: f64 = cert.betas.values().map(|v| v.abs()).sum();
        assert!((mass - 1.0).abs() < 1e-9);
        assert!(cert.residual <= 1e-8);
    }

    #[test]
    fn free_weights_must_be_genuinely_nonzero() {
        // a lone free vector can never certify dependence; a naive split
        // beta+ = beta- would
        let pos = fam(2, &[(1, &[0.0, 1.0])]);
        let free = fam(2, &[(2, &[1.0, 0.0])]);
        let (dep, _) = positive_linear_dependent(&pos, &free, 1e-8).unwrap();
        assert!(!dep);
    }

    #[test]
    fn pos_combination_may_lean_on_free_vectors() {
        // (1,1) + (-1,0) - (0,1) = 0: pos weights equal, free weight negative
        let pos = fam(2, &[(1, &[1.0, 1.0]), (2, &[-1.0, 0.0])]);
        let free = fam(2, &[(3, &[0.0, 1.0])]);
        let (dep, cert) = positive_linear_dependent(&pos, &free, 1e-8).unwrap();
        assert!(dep);
        let cert = cert.unwrap();
        assert!(cert.residual <= 1e-8);
        assert!((cert.alphas[&1] - 1.0 / 3.0).abs() < 1e-9);
        assert!((cert.alphas[&2] - 1.0 / 3.0).abs() < 1e-9);
        assert!((cert.betas[&3] + 1.0 / 3.0).abs() < 1e-9);
        // without the free vector the pos pair is independent
        let (dep, _) = positive_linear_dependent(&pos, &VecFamily::new(2), 1e-8).unwrap();
        assert!(!dep);
    }

    #[test]
    fn positive_rescaling_keeps_the_verdict() {
        let free = VecFamily::new(2);
        for scale in [0.25, 1.0, 7.5] {
            let pos = fam(2, &[(1, &[2.0 * scale, 0.0]), (2, &[-1.0, 0.0])]);
            let (dep, _) = positive_linear_dependent(&pos, &free, 1e-8).unwrap();
            assert!(dep, "scale {scale}");
            let pos = fam(2, &[(1, &[scale, 0.0]), (2, &[0.0, 1.0])]);
            let (dep, _) = positive_linear_dependent(&pos, &free, 1e-8).unwrap();
            assert!(!dep, "scale {scale}");
        }
    }

    #[test]
    fn collinear_duplicates_collapse_to_one_label() {
        let positive = fam(1, &[(1, &[1.0]), (2, &[1.0])]);
        let coeffs = BTreeMap::from([(1, 0.5), (2, 0.5)]);
        let out =
            caratheodory_reduce(&[1.0], &VecFamily::new(1), &positive, &coeffs, 1e-8).unwrap();
        assert_eq!(out.kept, vec![1]);
        assert!((out.coefficients[&1] - 1.0).abs() < 1e-9);
        assert!(out.residual <= 1e-9);
    }

    #[test]
    fn already_independent_input_reduces_to_itself() {
        let indep = fam(2, &[(1, &[1.0, 0.0])]);
        let positive = fam(2, &[(2, &[0.0, 1.0]), (3, &[1.0, 1.0])]);
        let coeffs = BTreeMap::from([(1, 1.0), (2, 1.0), (3, 0.0)]);
        let out = caratheodory_reduce(&[1.0, 1.0], &indep, &positive, &coeffs, 1e-8).unwrap();
        assert_eq!(out.kept, vec![2]);
        assert!((out.coefficients[&1] - 1.0).abs() < 1e-9);
        assert!((out.coefficients[&2] - 1.0).abs() < 1e-9);
        assert!(out.residual <= 1e-9);
    }

    #[test]
    fn zero_z_is_rejected() {
        let positive = fam(1, &[(1, &[1.0])]);
        let coeffs = BTreeMap::from([(1, 0.0)]);
        let err = caratheodory_reduce(&[0.0], &VecFamily::new(1), &positive, &coeffs, 1e-8)
            .unwrap_err();
        assert!(matches!(err, KernelError::PreconditionViolation(_)));
    }

    #[test]
    fn non_reproducing_coefficients_are_rejected() {
        let positive = fam(1, &[(1, &[1.0])]);
        let coeffs = BTreeMap::from([(1, 2.0)]);
        let err = caratheodory_reduce(&[1.0], &VecFamily::new(1), &positive, &coeffs, 1e-8)
            .unwrap_err();
        assert!(matches!(err, KernelError::PreconditionViolation(_)));
    }

    #[test]
    fn reduction_keeps_positivity_independence_reconstruction() {
        // three positives spanning a plane in R^2 plus one independent axis
        let indep = fam(3, &[(10, &[0.0, 0.0, 1.0])]);
        let positive = fam(
            3,
            &[
                (1, &[1.0, 0.0, 0.0]),
                (2, &[0.0, 1.0, 0.0]),
                (3, &[1.0, 1.0, 0.0]),
            ],
        );
        let coeffs = BTreeMap::from([(10, -2.0), (1, 1.0), (2, 2.0), (3, 1.5)]);
        let z = vec![1.0 + 1.5, 2.0 + 1.5, -2.0];
        let out = caratheodory_reduce(&z, &indep, &positive, &coeffs, 1e-8).unwrap();
        assert!(out.residual <= 1e-9);
        for label in &out.kept {
            assert!(out.coefficients[label] > 0.0);
        }
        let survivors = VecFamily::from_pairs(
            3,
            indep
                .items()
                .iter()
                .chain(positive.items().iter().filter(|(l, _)| out.kept.contains(l)))
                .map(|(l, v)| (*l, v.clone())),
        );
        assert_eq!(num_rank(&survivors, 1e-8), survivors.len());
    }
}
