//! Deterministic sample generation. Every random draw comes from a stream
//! keyed by (seed, purpose tag, radius index, sample index), so results are
//! independent of thread count and stable when sample counts grow: existing
//! indices keep their values.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

pub(crate) const TAG_CQ: u64 = 1;
pub(crate) const TAG_RREG: u64 = 2;
pub(crate) const TAG_RREG_REFINE: u64 = 3;
pub(crate) const TAG_ISC: u64 = 4;
pub(crate) const TAG_CALM_X: u64 = 5;
pub(crate) const TAG_CALM_Y: u64 = 6;
pub(crate) const TAG_MULTISTART: u64 = 7;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// One generator per coordinate tuple. Each key word is a bijection of one
/// coordinate, so distinct tuples never collide.
pub(crate) fn stream(seed: u64, tag: u64, radius_idx: usize, sample_idx: usize) -> ChaCha8Rng {
    let words = [
        splitmix64(seed),
        splitmix64(tag ^ 0x517c_c1b7_2722_0a95),
        splitmix64(radius_idx as u64 ^ 0x6c62_272e_07bb_0142),
        splitmix64(sample_idx as u64 ^ 0x27d4_eb2f_1656_67c5),
    ];
    let mut key = [0u8; 32];
    for (chunk, w) in key.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Uniform direction on the unit sphere.
pub(crate) fn unit_dir(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    assert!(dim > 0);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|c| c / norm).collect();
        }
    }
}

/// Uniform point in the closed ball of the given radius.
pub(crate) fn ball_point(rng: &mut ChaCha8Rng, dim: usize, radius: f64) -> Vec<f64> {
    let dir = unit_dir(rng, dim);
    let u: f64 = rng.gen();
    let scale = radius * u.powf(1.0 / dim as f64);
    dir.into_iter().map(|c| c * scale).collect()
}

/// The 2*dim signed coordinate directions, scaled to the given radius.
pub(crate) fn axis_points(dim: usize, radius: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(2 * dim);
    for i in 0..dim {
        for sign in [1.0, -1.0] {
            let mut v = vec![0.0; dim];
            v[i] = sign * radius;
            out.push(v);
        }
    }
    out
}

/// Restriction on sampled parameter points. `DomGamma` keeps only parameters
/// whose image is nonempty (membership decided numerically); `Custom` applies
/// a caller-supplied predicate.
#[derive(Clone)]
pub enum Restriction {
    FullSpace,
    DomGamma,
    Custom(Arc<dyn Fn(&[f64]) -> bool + Send + Sync>),
}

impl Restriction {
    pub fn name(&self) -> &'static str {
        match self {
            Restriction::FullSpace => "full_space",
            Restriction::DomGamma => "dom_gamma",
            Restriction::Custom(_) => "custom",
        }
    }
}

impl std::fmt::Debug for Restriction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Sampling plan shared by the neighborhood-based probes: a descending ladder
/// of radii with a fixed sample budget per radius.
#[derive(Clone, Debug)]
pub struct NeighborhoodSampler {
    pub radii: Vec<f64>,
    pub samples_per_radius: usize,
    pub seed: u64,
    pub restriction: Restriction,
}

impl NeighborhoodSampler {
    pub fn new(
        radii: Vec<f64>,
        samples_per_radius: usize,
        seed: u64,
        restriction: Restriction,
    ) -> Result<Self, String> {
        if radii.is_empty() {
            return Err("at least one radius required".into());
        }
        for r in &radii {
            if !(*r > 0.0 && r.is_finite()) {
                return Err(format!("radius {r} must be finite and positive"));
            }
        }
        for w in radii.windows(2) {
            if w[1] >= w[0] {
                return Err("radii must be strictly decreasing".into());
            }
        }
        if samples_per_radius == 0 {
            return Err("samples_per_radius must be positive".into());
        }
        Ok(NeighborhoodSampler { radii, samples_per_radius, seed, restriction })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_restriction(mut self, restriction: Restriction) -> Self {
        self.restriction = restriction;
        self
    }
}

impl Default for NeighborhoodSampler {
    fn default() -> Self {
        NeighborhoodSampler {
            radii: vec![1e-1, 1e-2, 1e-3],
            samples_per_radius: 200,
            seed: 42,
            restriction: Restriction::FullSpace,
        }
    }
}

/// Per-radius bookkeeping attached to sampled reports.
#[derive(Clone, Debug, Serialize)]
pub struct RadiusTrace {
    pub radius: f64,
    pub generated: usize,
    pub kept: usize,
    pub omega_rejected: usize,
    pub skipped_nonfinite: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SamplingRecord {
    pub restriction: String,
    pub seed: u64,
    pub samples_per_radius: usize,
    pub per_radius: Vec<RadiusTrace>,
}
