use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{DissipativeSystem, Propagator};
use crate::error::{Error, Result};
use crate::spectral::{bilinear_coords, compensated_sum, Phase, SpectralGrid};

/// Time-independent forcing description, kept for manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ForcingSpec {
    /// f = a·(sin(k_f y), 0) with a chosen so that ‖f‖_H = ν²λ₁G.
    Kolmogorov { shell: i64, grashof: f64 },
    /// Arbitrary coordinates.
    Coordinates,
}

/// Pseudo-spectral 2D Navier–Stokes on the periodic box, in the real
/// Stokes eigenbasis of [`SpectralGrid`].
#[derive(Clone, Debug)]
pub struct NavierStokes2d {
    grid: Arc<SpectralGrid>,
    nu: f64,
    forcing: DVector<f64>,
    spec: ForcingSpec,
    eig: DVector<f64>,
}

impl NavierStokes2d {
    pub fn new(grid: Arc<SpectralGrid>, nu: f64, forcing: DVector<f64>) -> Result<Self> {
        if !(nu.is_finite() && nu > 0.0) {
            return Err(Error::InvalidParameter(format!("viscosity must be positive, got {nu}")));
        }
        crate::error::ensure_len("forcing", forcing.len(), grid.dim())?;
        let eig = DVector::from_fn(grid.dim(), |i, _| grid.eigenvalue(i));
        Ok(Self { grid, nu, forcing, spec: ForcingSpec::Coordinates, eig })
    }

    /// Kolmogorov forcing on the shell |k| = k_f with prescribed Grashof number.
    pub fn kolmogorov(grid: Arc<SpectralGrid>, nu: f64, grashof: f64, shell: i64) -> Result<Self> {
        if shell < 1 || shell > grid.k_max() {
            return Err(Error::InvalidParameter(format!("forcing shell {shell} outside 1..={}", grid.k_max())));
        }
        if !(grashof.is_finite() && grashof >= 0.0) {
            return Err(Error::InvalidParameter(format!("Grashof number must be non-negative, got {grashof}")));
        }
        let mut f = DVector::zeros(grid.dim());
        // sine mode of k = (0, k_f) is (sin(k_f y), 0)·(−√2/L)
        let i = grid.coordinate_index(0, shell, Phase::Sin).expect("shell inside truncation");
        f[i] = -nu * nu * grid.lambda1() * grashof;
        let mut sys = Self::new(grid, nu, f)?;
        sys.spec = ForcingSpec::Kolmogorov { shell, grashof };
        Ok(sys)
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn forcing_spec(&self) -> &ForcingSpec {
        &self.spec
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eig
    }
}

impl DissipativeSystem for NavierStokes2d {
    fn dim(&self) -> usize {
        self.grid.dim()
    }

    fn label(&self) -> String {
        format!("nse{}", self.grid.n())
    }

    fn viscosity(&self) -> f64 {
        self.nu
    }

    fn linear(&self, v: &DVector<f64>) -> DVector<f64> {
        v.component_mul(&self.eig) * self.nu
    }

    fn bilinear(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        bilinear_coords(&self.grid, u.as_slice(), v.as_slice())
    }

    fn forcing(&self, _t: f64) -> DVector<f64> {
        self.forcing.clone()
    }

    fn propagator(&self, dt: f64) -> Propagator {
        Propagator::Diagonal(self.eig.map(|l| (-self.nu * l * dt).exp()))
    }

    fn norm_v(&self, v: &DVector<f64>) -> f64 {
        compensated_sum(v.iter().zip(self.eig.iter()).map(|(x, l)| l * x * x)).max(0.0).sqrt()
    }

    fn lambda1(&self) -> f64 {
        self.grid.lambda1()
    }

    fn grashof(&self) -> Option<f64> {
        Some(self.forcing.norm() / (self.nu * self.nu * self.lambda1()))
    }

    fn absorbing_bounds(&self) -> Option<(f64, f64)> {
        let g = self.grashof()?;
        let s = 2.0 * self.nu * self.nu * g * g;
        Some((s, s * self.lambda1()))
    }

    fn norm_au(&self, v: &DVector<f64>) -> Option<f64> {
        Some(compensated_sum(v.iter().zip(self.eig.iter()).map(|(x, l)| (l * x).powi(2))).sqrt())
    }
}
