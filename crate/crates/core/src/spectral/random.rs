use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{SpectralField, SpectralGrid};

/// Power-law spectrum for random smooth fields: coordinate variance
/// ∝ (1 + |k|²)^(−slope), zero beyond |k|² > `k2_cut`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RandomSpectrum {
    pub slope: f64,
    pub k2_cut: i64,
}

impl Default for RandomSpectrum {
    fn default() -> Self {
        Self { slope: 2.0, k2_cut: i64::MAX }
    }
}

impl RandomSpectrum {
    pub fn coords<R: Rng>(&self, grid: &SpectralGrid, rng: &mut R) -> DVector<f64> {
        DVector::from_fn(grid.dim(), |i, _| {
            let (mode, _) = grid.coordinate_mode(i);
            let k2 = mode.k2();
            if k2 > self.k2_cut {
                0.0
            } else {
                let z: f64 = rng.sample(StandardNormal);
                z * (1.0 + k2 as f64).powf(-0.5 * self.slope)
            }
        })
    }

    pub fn field<R: Rng>(&self, grid: &Arc<SpectralGrid>, rng: &mut R) -> SpectralField {
        SpectralField::from_coords(grid, self.coords(grid, rng).as_slice()).expect("dimension matches grid")
    }
}
