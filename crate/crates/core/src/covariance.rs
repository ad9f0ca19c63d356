//! Covariance operators: prescribed backgrounds, ensemble covariances,
//! localization, inflation and the trace identities used by the bounds.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, Error, Result};
use crate::observations::{ObservationOperator, Projector};
use crate::spectral::compensated_sum;

/// Symmetric positive semi-definite operator, applied matrix-free.
#[derive(Clone, Debug)]
pub enum CovarianceOperator {
    Zero(usize),
    /// Diagonal in the coordinate (eigen)basis.
    Diagonal(DVector<f64>),
    /// weight · Σ_k a_k ⊗ a_k.
    LowRank { anchors: Vec<DVector<f64>>, weight: f64, dim: usize },
    /// The projection P itself.
    Projection(Projector),
    /// P C P for a general inner operator.
    Projected { inner: Box<CovarianceOperator>, proj: Projector },
    /// Σ c_i C_i with c_i ≥ 0.
    Sum(Vec<(f64, CovarianceOperator)>),
}

impl CovarianceOperator {
    pub fn zero(dim: usize) -> Self {
        CovarianceOperator::Zero(dim)
    }

    pub fn diagonal(spectrum: DVector<f64>) -> Result<Self> {
        if spectrum.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::InvalidParameter("covariance spectrum must be finite and non-negative".into()));
        }
        Ok(CovarianceOperator::Diagonal(spectrum))
    }

    /// β·I_h, the default 3DVar background (β·P_{K⊥} for modal operators).
    pub fn background(beta: f64, op: &ObservationOperator) -> Result<Self> {
        if !(beta.is_finite() && beta >= 0.0) {
            return Err(Error::InvalidParameter(format!("background scale must be non-negative, got {beta}")));
        }
        Ok(match op.selected() {
            Some(idx) => {
                let mut s = DVector::zeros(op.dim());
                for &i in idx {
                    s[i] = beta;
                }
                CovarianceOperator::Diagonal(s)
            }
            None => CovarianceOperator::LowRank { anchors: (0..op.rank()).map(|n| op.psi(n)).collect(), weight: beta, dim: op.dim() },
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            CovarianceOperator::Zero(d) => *d,
            CovarianceOperator::Diagonal(s) => s.len(),
            CovarianceOperator::LowRank { dim, .. } => *dim,
            CovarianceOperator::Projection(p) => p.dim(),
            CovarianceOperator::Projected { proj, .. } => proj.dim(),
            CovarianceOperator::Sum(parts) => parts.first().map(|(_, c)| c.dim()).unwrap_or(0),
        }
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            CovarianceOperator::Zero(d) => DVector::zeros(*d),
            CovarianceOperator::Diagonal(s) => s.component_mul(v),
            CovarianceOperator::LowRank { anchors, weight, dim } => {
                let mut out = DVector::zeros(*dim);
                for a in anchors {
                    out.axpy(weight * a.dot(v), a, 1.0);
                }
                out
            }
            CovarianceOperator::Projection(p) => p.apply(v),
            CovarianceOperator::Projected { inner, proj } => proj.apply(&inner.apply(&proj.apply(v))),
            CovarianceOperator::Sum(parts) => {
                let mut out = DVector::zeros(v.len());
                for (c, op) in parts {
                    out.axpy(*c, &op.apply(v), 1.0);
                }
                out
            }
        }
    }

    /// Checked application.
    pub fn try_apply(&self, v: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_len("vector", v.len(), self.dim())?;
        Ok(self.apply(v))
    }

    pub fn trace(&self) -> f64 {
        match self {
            CovarianceOperator::Zero(_) => 0.0,
            CovarianceOperator::Diagonal(s) => compensated_sum(s.iter().cloned()),
            CovarianceOperator::LowRank { anchors, weight, .. } => weight * compensated_sum(anchors.iter().map(|a| a.norm_squared())),
            CovarianceOperator::Projection(p) => p.rank() as f64,
            CovarianceOperator::Projected { inner, proj } => {
                compensated_sum((0..proj.rank()).map(|i| {
                    let b = proj.basis_vector(i);
                    b.dot(&inner.apply(&b))
                }))
            }
            CovarianceOperator::Sum(parts) => parts.iter().map(|(c, op)| c * op.trace()).sum(),
        }
    }

    /// Squared Hilbert–Schmidt norm; closed form for the low-rank case.
    pub fn hs_norm_sq(&self) -> f64 {
        match self {
            CovarianceOperator::LowRank { anchors, weight, .. } => {
                let mut terms = Vec::with_capacity(anchors.len() * anchors.len());
                for a in anchors {
                    for b in anchors {
                        terms.push(a.dot(b).powi(2));
                    }
                }
                weight * weight * compensated_sum(terms)
            }
            CovarianceOperator::Diagonal(s) => compensated_sum(s.iter().map(|x| x * x)),
            CovarianceOperator::Zero(_) => 0.0,
            _ => {
                let m = self.to_dense();
                m.norm_squared()
            }
        }
    }

    /// Dense d×d matrix (tests and small systems only).
    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut m = DMatrix::zeros(d, d);
        for j in 0..d {
            let mut e = DVector::zeros(d);
            e[j] = 1.0;
            m.set_column(j, &self.apply(&e));
        }
        m
    }

    /// Anchors of a low-rank operator.
    pub fn anchors(&self) -> Option<&[DVector<f64>]> {
        match self {
            CovarianceOperator::LowRank { anchors, .. } => Some(anchors),
            _ => None,
        }
    }
}

/// Ensemble mean in fixed member order.
pub fn ensemble_mean(members: &[DVector<f64>]) -> Result<DVector<f64>> {
    let first = members.first().ok_or_else(|| Error::DegenerateEnsemble("empty ensemble".into()))?;
    // running mean: exact for identical members
    let mut mean = first.clone();
    for (k, m) in members.iter().enumerate().skip(1) {
        ensure_len("ensemble member", m.len(), first.len())?;
        mean += (m - &mean) / (k + 1) as f64;
    }
    Ok(mean)
}

/// C(m) = (1/K) Σ (m^(k) − m̄) ⊗ (m^(k) − m̄), in factored form.
pub fn ensemble_cov(members: &[DVector<f64>]) -> Result<CovarianceOperator> {
    if members.len() < 2 {
        return Err(Error::DegenerateEnsemble(format!("need at least 2 members, got {}", members.len())));
    }
    let mean = ensemble_mean(members)?;
    let dim = mean.len();
    Ok(CovarianceOperator::LowRank { anchors: members.iter().map(|m| m - &mean).collect(), weight: 1.0 / members.len() as f64, dim })
}

/// C̃ = P C P.
pub fn localize(c: &CovarianceOperator, p: &Projector) -> Result<CovarianceOperator> {
    ensure_len("projection", p.dim(), c.dim())?;
    Ok(match (c, p) {
        (_, Projector::Identity(_)) => c.clone(),
        (CovarianceOperator::Zero(d), _) => CovarianceOperator::Zero(*d),
        (CovarianceOperator::LowRank { anchors, weight, dim }, _) => {
            CovarianceOperator::LowRank { anchors: anchors.iter().map(|a| p.apply(a)).collect(), weight: *weight, dim: *dim }
        }
        (CovarianceOperator::Diagonal(s), Projector::Select { indices, .. }) => {
            let mut out = DVector::zeros(s.len());
            for &i in indices {
                out[i] = s[i];
            }
            CovarianceOperator::Diagonal(out)
        }
        _ => CovarianceOperator::Projected { inner: Box::new(c.clone()), proj: p.clone() },
    })
}

/// Additive/multiplicative inflation and projection localization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InflationSpec {
    #[serde(default)]
    pub additive: f64,
    #[serde(default = "unit_factor")]
    pub multiplicative: f64,
    #[serde(default)]
    pub localize: bool,
}

fn unit_factor() -> f64 {
    1.0
}

impl Default for InflationSpec {
    fn default() -> Self {
        Self { additive: 0.0, multiplicative: 1.0, localize: false }
    }
}

impl InflationSpec {
    /// Localization onto K⊥ with additive inflation μ: C_μ = ¼PCP + μP.
    pub fn c_mu(mu: f64) -> Self {
        Self { additive: mu, multiplicative: 1.0, localize: true }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.additive.is_finite() && self.additive >= 0.0) {
            return Err(Error::InvalidParameter(format!("additive inflation must be ≥ 0, got {}", self.additive)));
        }
        if !(self.multiplicative.is_finite() && self.multiplicative >= 1.0) {
            return Err(Error::InvalidParameter(format!("multiplicative inflation must be ≥ 1, got {}", self.multiplicative)));
        }
        Ok(())
    }
}

/// Effective covariance.
///
/// * localized with μ > 0: ¼·P(sC)P + μP (s the multiplicative factor);
/// * localized with μ = 0: P(sC)P;
/// * not localized: sC + μI.
pub fn inflate(c: &CovarianceOperator, spec: &InflationSpec, p: &Projector) -> Result<CovarianceOperator> {
    spec.validate()?;
    let mut base = c.clone();
    if spec.multiplicative != 1.0 {
        base = CovarianceOperator::Sum(vec![(spec.multiplicative, base)]);
    }
    if spec.localize {
        base = localize(&base, p)?;
    }
    Ok(match (spec.additive > 0.0, spec.localize) {
        (false, _) => base,
        (true, true) => CovarianceOperator::Sum(vec![(0.25, base), (spec.additive, CovarianceOperator::Projection(p.clone()))]),
        (true, false) => CovarianceOperator::Sum(vec![(1.0, base), (spec.additive, CovarianceOperator::Projection(Projector::Identity(c.dim())))]),
    })
}

/// Tr(C O*O C) = Σ_n ‖C O* e_n‖².
pub fn trace_c_ih_c(c: &CovarianceOperator, op: &ObservationOperator) -> f64 {
    compensated_sum((0..op.rank()).map(|n| c.apply(&op.psi(n)).norm_squared()))
}

/// Tr(C P) for an orthogonal projection P.
pub fn trace_cp(c: &CovarianceOperator, p: &Projector) -> f64 {
    compensated_sum((0..p.rank()).map(|i| {
        let b = p.basis_vector(i);
        b.dot(&c.apply(&b))
    }))
}

/// Both sides of the trace-cancellation identity
///
///   (1/K)Σ_k ⟨C̃ O*O e^(k), e^(k)⟩ − Tr(C̃ O*O C̃) = ⟨C̃ ē, ē⟩,  C̃ = P C(e) P.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceCancellation {
    pub lhs: f64,
    pub rhs: f64,
    /// Magnitude of the largest term entering either side.
    pub scale: f64,
}

impl TraceCancellation {
    pub fn residual(&self) -> f64 {
        self.lhs - self.rhs
    }

    pub fn relative(&self) -> f64 {
        if self.scale == 0.0 {
            0.0
        } else {
            self.residual().abs() / self.scale
        }
    }
}

pub fn trace_cancellation_terms(errors: &[DVector<f64>], op: &ObservationOperator) -> Result<TraceCancellation> {
    if !op.is_orthogonal_projection() {
        return Err(Error::UnsupportedOperator("trace cancellation needs O*O to be an orthogonal projection".into()));
    }
    let c = localize(&ensemble_cov(errors)?, op.kernel_projector())?;
    let k = errors.len() as f64;
    let quad: Vec<f64> = errors.iter().map(|e| c.apply(&op.interpolate(e).expect("dimension checked")).dot(e)).collect();
    let avg = compensated_sum(quad.iter().cloned()) / k;
    let tr = trace_c_ih_c(&c, op);
    let mean = crate::covariance::ensemble_mean(errors)?;
    let rhs = c.apply(&mean).dot(&mean);
    let scale = quad.iter().fold(tr.abs().max(rhs.abs()), |m, x| m.max(x.abs()));
    Ok(TraceCancellation { lhs: avg - tr, rhs, scale })
}

/// LHS − RHS of the trace-cancellation identity.
pub fn trace_cancellation_residual(errors: &[DVector<f64>], op: &ObservationOperator) -> Result<f64> {
    Ok(trace_cancellation_terms(errors, op)?.residual())
}

/// ‖P_K C P_{K⊥}‖ by power iteration (50 iterations, tolerance 1e-8).
pub fn cross_block_norm(c: &CovarianceOperator, op: &ObservationOperator) -> f64 {
    let p = op.kernel_projector();
    let d = c.dim();
    let comp = |v: &DVector<f64>| v - p.apply(v);
    // deterministic, generic start vector inside K⊥
    let mut x = p.apply(&DVector::from_fn(d, |i, _| 1.0 + ((i * 7919) % 13) as f64 / 13.0));
    let nx = x.norm();
    if nx == 0.0 {
        return 0.0;
    }
    x /= nx;
    let mut sigma = 0.0;
    for _ in 0..50 {
        let y = comp(&c.apply(&x));
        let s = y.norm();
        let z = p.apply(&c.apply(&y));
        let nz = z.norm();
        if nz == 0.0 {
            return s;
        }
        x = z / nz;
        if (s - sigma).abs() <= 1e-8 * s.max(1e-300) {
            return s;
        }
        sigma = s;
    }
    sigma
}

/// Smallest eigenvalue of C compressed to the range of P:
/// the largest β with ⟨Cw, w⟩ ≥ β‖w‖² for all w in range(P).
pub fn coercivity_on(c: &CovarianceOperator, p: &Projector) -> f64 {
    let r = p.rank();
    if r == 0 {
        return 0.0;
    }
    let basis: Vec<DVector<f64>> = (0..r).map(|i| p.basis_vector(i)).collect();
    let images: Vec<DVector<f64>> = basis.iter().map(|b| c.apply(b)).collect();
    let m = DMatrix::from_fn(r, r, |i, j| 0.5 * (basis[i].dot(&images[j]) + basis[j].dot(&images[i])));
    SymmetricEigen::new(m).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// The three terms of Tr(C_μ O*O C_μ) for C_μ = ¼C̃ + μP with O*O = P and
/// C̃ = PCP: (1/16)Tr(C̃²P), μ²Tr(P) and ½μTr(C̃P).
pub fn inflated_trace_terms(c_tilde: &CovarianceOperator, p: &Projector, mu: f64) -> [f64; 3] {
    let sq = compensated_sum((0..p.rank()).map(|i| c_tilde.apply(&p.basis_vector(i)).norm_squared()));
    [sq / 16.0, mu * mu * p.rank() as f64, 0.5 * mu * trace_cp(c_tilde, p)]
}
