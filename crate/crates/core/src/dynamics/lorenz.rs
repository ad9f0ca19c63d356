use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{DissipativeSystem, Propagator};

/// Lorenz 63 in the shifted form dv = (−Av − B(v,v) + F)dt + σ(v)dW with
///
/// A = [[ᾱ, −ᾱ, 0], [ᾱ, β̄, 0], [0, 0, γ̄]], B(v,w) = (0, v₁w₃, −v₁w₂),
/// F = (0, 0, −γ̄β̄⁻²(ϱ̄ + ᾱ)), σ(v) = σ̄₁ + σ̄₂ diag(v).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lorenz63 {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub rho: f64,
    #[serde(default)]
    pub sigma1: f64,
    #[serde(default)]
    pub sigma2: f64,
}

impl Default for Lorenz63 {
    /// The classical chaotic parameters (10, 1, 8/3, 28) in shifted form.
    fn default() -> Self {
        Self { alpha: 10.0, beta: 1.0, gamma: 8.0 / 3.0, rho: 28.0, sigma1: 0.0, sigma2: 0.0 }
    }
}

impl Lorenz63 {
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 3, &[self.alpha, -self.alpha, 0.0, self.alpha, self.beta, 0.0, 0.0, 0.0, self.gamma])
    }
}

impl DissipativeSystem for Lorenz63 {
    fn dim(&self) -> usize {
        3
    }

    fn label(&self) -> String {
        "lorenz63".into()
    }

    fn viscosity(&self) -> f64 {
        self.alpha.min(self.beta).min(self.gamma)
    }

    fn linear(&self, v: &DVector<f64>) -> DVector<f64> {
        self.matrix() * v
    }

    fn bilinear(&self, v: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        DVector::from_vec(vec![0.0, v[0] * w[2], -v[0] * w[1]])
    }

    fn forcing(&self, _t: f64) -> DVector<f64> {
        DVector::from_vec(vec![0.0, 0.0, -self.gamma * (self.rho + self.alpha) / (self.beta * self.beta)])
    }

    fn propagator(&self, dt: f64) -> Propagator {
        Propagator::Dense((self.matrix() * -dt).exp())
    }

    fn diffusion(&self, v: &DVector<f64>) -> Option<DVector<f64>> {
        if self.sigma1 == 0.0 && self.sigma2 == 0.0 {
            None
        } else {
            Some(v.map(|x| self.sigma1 + self.sigma2 * x))
        }
    }
}

/// Lorenz 96: dv_i = ((v_{i+1} − v_{i−2})v_{i−1} − v_i + F)dt + σ_i(v)dW_i,
/// written with A = I and B(v,w)_i = v_{i−2}w_{i−1} − v_{i−1}w_{i+1}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lorenz96 {
    pub n: usize,
    pub forcing: f64,
    #[serde(default)]
    pub sigma1: f64,
    #[serde(default)]
    pub sigma2: f64,
}

impl Lorenz96 {
    pub fn new(n: usize, forcing: f64) -> Self {
        assert!(n >= 4, "Lorenz 96 needs at least 4 variables");
        Self { n, forcing, sigma1: 0.0, sigma2: 0.0 }
    }
}

impl DissipativeSystem for Lorenz96 {
    fn dim(&self) -> usize {
        self.n
    }

    fn label(&self) -> String {
        "lorenz96".into()
    }

    fn viscosity(&self) -> f64 {
        1.0
    }

    fn linear(&self, v: &DVector<f64>) -> DVector<f64> {
        v.clone()
    }

    fn bilinear(&self, v: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        DVector::from_fn(n, |i, _| v[(i + n - 2) % n] * w[(i + n - 1) % n] - v[(i + n - 1) % n] * w[(i + 1) % n])
    }

    fn forcing(&self, _t: f64) -> DVector<f64> {
        DVector::from_element(self.n, self.forcing)
    }

    fn propagator(&self, dt: f64) -> Propagator {
        Propagator::Diagonal(DVector::from_element(self.n, (-dt).exp()))
    }

    fn diffusion(&self, v: &DVector<f64>) -> Option<DVector<f64>> {
        if self.sigma1 == 0.0 && self.sigma2 == 0.0 {
            None
        } else {
            Some(v.map(|x| self.sigma1 + self.sigma2 * x))
        }
    }
}
