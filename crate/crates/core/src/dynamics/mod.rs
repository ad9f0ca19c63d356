//! Truth dynamics du/dt = −νAu − B(u,u) + f behind one contract, with the
//! 2D Navier–Stokes equations and the Lorenz 63 / Lorenz 96 models.

mod lorenz;
mod navier_stokes;
mod trajectory;

use nalgebra::{DMatrix, DVector};

use crate::error::{ensure_finite, ensure_len, Error, Result};

pub use lorenz::{Lorenz63, Lorenz96};
pub use navier_stokes::{ForcingSpec, NavierStokes2d};
pub use trajectory::{read_trajectory, spin_up, write_trajectory, SpinUpConfig, TrajectoryManifest, TruthTrajectory};

/// A forced dissipative system with energy-preserving quadratic nonlinearity.
///
/// States are coordinate vectors in an orthonormal basis, so the Euclidean
/// inner product is the state-space inner product.
pub trait DissipativeSystem: Send + Sync {
    fn dim(&self) -> usize;

    fn label(&self) -> String;

    /// Coercivity of the linear part, ⟨νAv, v⟩ ≥ ν‖v‖_V²: the viscosity for
    /// Navier–Stokes, min(ᾱ, β̄, γ̄) for Lorenz 63 and 1 for Lorenz 96.
    fn viscosity(&self) -> f64;

    /// νA v.
    fn linear(&self, v: &DVector<f64>) -> DVector<f64>;

    /// B(u, v); satisfies ⟨B(u, v), v⟩ = 0.
    fn bilinear(&self, u: &DVector<f64>, v: &DVector<f64>) -> DVector<f64>;

    fn forcing(&self, t: f64) -> DVector<f64>;

    /// exp(−νA dt).
    fn propagator(&self, dt: f64) -> Propagator;

    /// ‖v‖_V. Finite-dimensional systems use V = H.
    fn norm_v(&self, v: &DVector<f64>) -> f64 {
        v.norm()
    }

    /// Smallest eigenvalue of A (1 for the finite-dimensional systems).
    fn lambda1(&self) -> f64 {
        1.0
    }

    /// ‖f‖_H/(ν²λ₁) when the forcing is time independent.
    fn grashof(&self) -> Option<f64> {
        None
    }

    /// Absorbing-ball radii (‖u‖_H², ‖u‖_V²) when the theory provides them.
    fn absorbing_bounds(&self) -> Option<(f64, f64)> {
        None
    }

    /// ‖Au‖_H where meaningful.
    fn norm_au(&self, v: &DVector<f64>) -> Option<f64> {
        let _ = v;
        None
    }

    /// Diagonal of the multiplicative diffusion σ(v) for stochastic truth.
    fn diffusion(&self, v: &DVector<f64>) -> Option<DVector<f64>> {
        let _ = v;
        None
    }
}

/// F(u) = −νAu − B(u,u) + f(t).
pub fn rhs<S: DissipativeSystem + ?Sized>(sys: &S, t: f64, u: &DVector<f64>) -> Result<DVector<f64>> {
    ensure_len("state", u.len(), sys.dim())?;
    Ok(sys.forcing(t) - sys.linear(u) - sys.bilinear(u, u))
}

/// Linear semigroup over one step.
#[derive(Clone, Debug)]
pub enum Propagator {
    Diagonal(DVector<f64>),
    Dense(DMatrix<f64>),
}

impl Propagator {
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Propagator::Diagonal(d) => d.component_mul(v),
            Propagator::Dense(m) => m * v,
        }
    }
}

/// Integrating-factor Heun scheme: exact for the linear part, second order
/// explicit for B and f.
///
///   u* = E(u + dt N(t, u)),  u' = E u + dt/2 (E N(t, u) + N(t + dt, u*)),
///
/// with E = exp(−νA dt) and N(t, u) = −B(u, u) + f(t).
#[derive(Clone, Debug)]
pub struct Stepper {
    dt: f64,
    prop: Propagator,
}

impl Stepper {
    pub fn new<S: DissipativeSystem + ?Sized>(sys: &S, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter(format!("time step must be positive, got {dt}")));
        }
        Ok(Self { dt, prop: sys.propagator(dt) })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn propagator(&self) -> &Propagator {
        &self.prop
    }

    /// Deterministic model step Ψ_dt without the blow-up guard.
    pub fn forecast<S: DissipativeSystem + ?Sized>(&self, sys: &S, t: f64, u: &DVector<f64>) -> DVector<f64> {
        let dt = self.dt;
        let n0 = sys.forcing(t) - sys.bilinear(u, u);
        let stage = self.prop.apply(&(u + &n0 * dt));
        let n1 = sys.forcing(t + dt) - sys.bilinear(&stage, &stage);
        self.prop.apply(&(u + &n0 * (0.5 * dt))) + n1 * (0.5 * dt)
    }

    /// One guarded truth step; `noise` is the Wiener increment for stochastic
    /// truth (ignored when the system has no diffusion).
    pub fn step<S: DissipativeSystem + ?Sized>(
        &self,
        sys: &S,
        t: f64,
        u: &DVector<f64>,
        noise: Option<&DVector<f64>>,
    ) -> Result<DVector<f64>> {
        ensure_len("state", u.len(), sys.dim())?;
        ensure_finite("state", u.as_slice())?;
        let mut next = self.forecast(sys, t, u);
        let mut noise_norm = 0.0;
        if let (Some(dw), Some(sig)) = (noise, sys.diffusion(u)) {
            let kick = sig.component_mul(dw);
            noise_norm = kick.norm();
            next += kick;
        }
        let limit = 2.0 * u.norm() + 4.0 * self.dt * sys.forcing(t).norm() + 2.0 * noise_norm + 1e-300;
        let norm = next.norm();
        if !norm.is_finite() || norm > limit {
            return Err(Error::StepRejected {
                t,
                reason: format!("energy blow-up: |u'| = {norm:.3e} > {limit:.3e}; reduce dt"),
            });
        }
        Ok(next)
    }
}

/// Convenience wrapper for a single guarded step.
pub fn step_truth<S: DissipativeSystem + ?Sized>(sys: &S, t: f64, u: &DVector<f64>, dt: f64) -> Result<DVector<f64>> {
    Stepper::new(sys, dt)?.step(sys, t, u, None)
}

/// Numerical trilinear constant sup |⟨B(e, u), e⟩| / (‖e‖²‖u‖) of a
/// finite-dimensional system, by multi-start gradient ascent on the unit sphere.
///
/// For fixed e the supremum over u is ‖g(e)‖ with g_j = ⟨B(e, δ_j), e⟩.
pub fn trilinear_constant<S: DissipativeSystem + ?Sized>(sys: &S, starts: usize, seed: u64) -> f64 {
    let d = sys.dim();
    // T[j] = matrix M_j with g_j(e) = eᵀ M_j e
    let unit = |i: usize| {
        let mut v = DVector::zeros(d);
        v[i] = 1.0;
        v
    };
    let mats: Vec<DMatrix<f64>> = (0..d)
        .map(|j| {
            let dj = unit(j);
            let mut m = DMatrix::zeros(d, d);
            for a in 0..d {
                let col = sys.bilinear(&unit(a), &dj);
                for b in 0..d {
                    m[(a, b)] = col[b];
                }
            }
            (&m + m.transpose()) * 0.5
        })
        .collect();
    let g = |e: &DVector<f64>| DVector::from_fn(d, |j, _| e.dot(&(&mats[j] * e)));
    let mut best = 0.0f64;
    for s in 0..starts {
        let mut e = crate::rng::standard_normal(crate::rng::StreamKey::new(seed, crate::rng::StreamRole::Auxiliary, s as u64, 0), d);
        e /= e.norm();
        let mut val = g(&e).norm();
        for _ in 0..500 {
            let gv = g(&e);
            // ∇_e ‖g‖² = 4 Σ_j g_j M_j e
            let mut grad = DVector::zeros(d);
            for j in 0..d {
                grad += (&mats[j] * &e) * gv[j];
            }
            let cand = grad.normalize();
            let cv = g(&cand).norm();
            if cv <= val * (1.0 + 1e-13) {
                // fixed-point iteration stalled: try a damped move
                let mixed = (&e + &cand).normalize();
                let mv = g(&mixed).norm();
                if mv <= val * (1.0 + 1e-13) {
                    break;
                }
                e = mixed;
                val = mv;
            } else {
                e = cand;
                val = cv;
            }
        }
        best = best.max(val);
    }
    best
}
