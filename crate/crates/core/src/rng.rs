//! Counter-based noise streams.
//!
//! Every Gaussian draw is a pure function of `(seed, role, member, step)`, so
//! the order in which replicas or members are evaluated never changes the
//! numbers they see.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

/// What a stream is used for; part of the stream key.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamRole {
    Truth,
    TruthNoise,
    ObservationNoise,
    FilterNoise,
    SharedNoise,
    EnsembleInit,
    Corpus,
    Auxiliary,
}

impl StreamRole {
    fn tag(self) -> u64 {
        match self {
            StreamRole::Truth => 0x7275_7468,
            StreamRole::TruthNoise => 0x7472_6e7a,
            StreamRole::ObservationNoise => 0x6f62_736e,
            StreamRole::FilterNoise => 0x666c_746e,
            StreamRole::SharedNoise => 0x7368_7264,
            StreamRole::EnsembleInit => 0x656e_7369,
            StreamRole::Corpus => 0x636f_7270,
            StreamRole::Auxiliary => 0x6175_7869,
        }
    }
}

/// Full key of one independent draw sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamKey {
    pub seed: u64,
    pub role: StreamRole,
    pub member: u64,
    pub step: u64,
}

impl StreamKey {
    pub fn new(seed: u64, role: StreamRole, member: u64, step: u64) -> Self {
        Self { seed, role, member, step }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let words = [self.seed, self.role.tag(), self.member, self.step];
        let mut bytes = [0u8; 32];
        for (chunk, w) in bytes.chunks_exact_mut(8).zip(words) {
            chunk.copy_from_slice(&w.to_le_bytes());
        }
        ChaCha8Rng::from_seed(bytes)
    }
}

/// `dim` independent standard normals for the given key.
pub fn standard_normal(key: StreamKey, dim: usize) -> DVector<f64> {
    let mut rng = key.rng();
    DVector::from_fn(dim, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Fill an existing slice with standard normals drawn from `rng`.
pub fn fill_standard_normal<R: Rng>(rng: &mut R, out: &mut [f64]) {
    for x in out {
        *x = rng.sample(StandardNormal);
    }
}

/// Brownian increments on a uniform grid, keyed at the finest resolution.
///
/// With `factor > 1` each increment is the sum of `factor` consecutive fine
/// increments, so paths at different step sizes are the same Brownian path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoisePath {
    pub seed: u64,
    pub role: StreamRole,
    pub dim: usize,
    pub fine_dt: f64,
    pub factor: usize,
}

impl NoisePath {
    pub fn new(seed: u64, role: StreamRole, dim: usize, dt: f64) -> Self {
        Self { seed, role, dim, fine_dt: dt, factor: 1 }
    }

    /// Same path viewed with step `factor * fine_dt`.
    pub fn coarsened(&self, factor: usize) -> Self {
        Self { factor: factor.max(1), ..*self }
    }

    pub fn dt(&self) -> f64 {
        self.fine_dt * self.factor as f64
    }

    /// Identity of the underlying path, independent of coarsening.
    pub fn lineage(&self) -> (u64, StreamRole) {
        (self.seed, self.role)
    }

    /// Increment ΔW over step `step` for stream `member`; distributed N(0, dt I).
    pub fn increment(&self, member: u64, step: u64) -> DVector<f64> {
        let scale = self.fine_dt.sqrt();
        let mut acc = DVector::zeros(self.dim);
        let mut buf = vec![0.0; self.dim];
        let first = step * self.factor as u64;
        for r in 0..self.factor as u64 {
            let mut rng = StreamKey::new(self.seed, self.role, member, first + r).rng();
            fill_standard_normal(&mut rng, &mut buf);
            for (a, b) in acc.iter_mut().zip(&buf) {
                *a += scale * b;
            }
        }
        acc
    }
}
