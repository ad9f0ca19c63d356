//! Exact-algebra property suite behind `verify-identities`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::covariance::{ensemble_cov, inflate, inflated_trace_terms, localize, trace_c_ih_c, trace_cancellation_terms, InflationSpec};
use crate::error::Result;
use crate::filters::{ensrkf_analysis, square_root_residual};
use crate::observations::ObservationOperator;
use crate::rng::{fill_standard_normal, standard_normal, StreamKey, StreamRole};
use crate::spectral::{RandomSpectrum, SpectralField, SpectralGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub name: String,
    pub samples: usize,
    pub max_residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub seed: u64,
    pub checks: Vec<IdentityCheck>,
}

impl IdentityReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&IdentityCheck> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn table(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            s += &format!(
                "{:<4} {:<40} n={:<4} max residual {:.3e} (tol {:.0e})\n",
                if c.pass { "ok" } else { "FAIL" },
                c.name,
                c.samples,
                c.max_residual,
                c.tolerance
            );
        }
        s
    }
}

fn check(name: &str, residuals: impl IntoIterator<Item = f64>, tolerance: f64) -> IdentityCheck {
    let (mut n, mut worst) = (0, 0.0f64);
    for r in residuals {
        n += 1;
        // NaN must fail
        worst = if r.is_nan() || worst.is_nan() { f64::NAN } else { worst.max(r) };
    }
    IdentityCheck { name: name.into(), samples: n, max_residual: worst, tolerance, pass: worst <= tolerance }
}

fn key(seed: u64, member: u64, step: u64) -> StreamKey {
    StreamKey::new(seed, StreamRole::Auxiliary, member, step)
}

/// Run the suite with `samples` random inputs per identity.
pub fn verify_identities(seed: u64, samples: usize) -> Result<IdentityReport> {
    let mut checks = Vec::new();

    for n in [64usize, 128] {
        let g = SpectralGrid::periodic(n)?;
        let spectrum = RandomSpectrum::default();
        let mut orth = Vec::with_capacity(samples);
        let mut anti = Vec::with_capacity(samples);
        for i in 0..samples as u64 {
            let mut rng = key(seed, n as u64, i).rng();
            let (u, v, z): (SpectralField, SpectralField, SpectralField) = (spectrum.field(&g, &mut rng), spectrum.field(&g, &mut rng), spectrum.field(&g, &mut rng));
            let buv = u.bilinear(&v)?;
            let scale = buv.norm_h() * v.norm_h();
            orth.push(buv.inner(&v).abs() / scale);
            let lhs = buv.inner(&z);
            let rhs = -u.bilinear(&z)?.inner(&v);
            anti.push((lhs - rhs).abs() / (buv.norm_h() * z.norm_h()).max(lhs.abs()));
        }
        checks.push(check(&format!("bilinear_orthogonality_{n}"), orth, 1e-10));
        checks.push(check(&format!("bilinear_antisymmetry_{n}"), anti, 1e-10));
    }

    // trace cancellation over K ∈ {2, 5, 10}, q ∈ {4, 16, 64}
    let g = SpectralGrid::periodic(16)?;
    let combos: Vec<(usize, usize)> = [2, 5, 10].iter().flat_map(|&k| [4, 16, 64].map(|q| (k, q))).collect();
    let mut tc = Vec::with_capacity(samples);
    for i in 0..samples {
        let (k, q) = combos[i % combos.len()];
        let op = ObservationOperator::modal_leading(&g, q)?;
        let errors: Vec<DVector<f64>> = (0..k).map(|m| standard_normal(key(seed, 1000 + m as u64, i as u64), g.dim())).collect();
        tc.push(trace_cancellation_terms(&errors, &op)?.relative());
    }
    checks.push(check("trace_cancellation", tc, 1e-11));

    // square-root transform: K ≤ 8, q ≤ 6
    let d = 10;
    let mut sr = Vec::with_capacity(samples);
    for i in 0..samples as u64 {
        let mut rng = key(seed, 2000, i).rng();
        let k = rng.random_range(2..=8usize);
        let q = rng.random_range(1..=6usize);
        let mut buf = vec![0.0; d * k + q * d + q * q];
        fill_standard_normal(&mut rng, &mut buf);
        let forecast: Vec<DVector<f64>> = (0..k).map(|m| DVector::from_column_slice(&buf[m * d..(m + 1) * d])).collect();
        let o = DMatrix::from_column_slice(q, d, &buf[d * k..d * k + q * d]);
        let l = DMatrix::from_column_slice(q, q, &buf[d * k + q * d..]);
        let gamma = &l * l.transpose() + DMatrix::identity(q, q) * 0.5;
        let y = DVector::zeros(q);
        let a = ensrkf_analysis(&forecast, &o, &gamma, &y)?;
        sr.push(square_root_residual(&a, &o));
    }
    checks.push(check("square_root_property", sr, 1e-10));

    // trace decompositions of the localized and inflated covariances
    let op = ObservationOperator::modal(&g, 8)?;
    let p = op.kernel_projector();
    let (mut tr_c, mut tr_mu, mut tr_b) = (Vec::new(), Vec::new(), Vec::new());
    for i in 0..samples as u64 {
        let mut rng = key(seed, 3000, i).rng();
        let k = rng.random_range(2..=10usize);
        let mu: f64 = rng.random_range(0.01..2.0);
        let e: Vec<DVector<f64>> = (0..k as u64).map(|m| standard_normal(key(seed, 3001 + m, i), g.dim())).collect();
        let c = ensemble_cov(&e)?;
        let c_tilde = localize(&c, p)?;
        // Tr(C̃) = (1/K)Σ‖P e_k‖² − ‖P ē‖²
        let mean = e.iter().fold(DVector::zeros(g.dim()), |s, x| s + x) / k as f64;
        let direct = e.iter().map(|x| p.apply(x).norm_squared()).sum::<f64>() / k as f64 - p.apply(&mean).norm_squared();
        tr_c.push((c_tilde.trace() - direct).abs() / direct);
        let total = trace_c_ih_c(&inflate(&c, &InflationSpec::c_mu(mu), p)?, &op);
        tr_mu.push((total - inflated_trace_terms(&c_tilde, p, mu).iter().sum::<f64>()).abs() / total);
        let b = crate::covariance::CovarianceOperator::background(mu, &op)?;
        tr_b.push((trace_c_ih_c(&b, &op) - mu * mu * op.rank() as f64).abs() / (mu * mu * op.rank() as f64));
    }
    checks.push(check("trace_localized_covariance", tr_c, 1e-12));
    checks.push(check("trace_inflated_covariance", tr_mu, 1e-12));
    checks.push(check("trace_background_covariance", tr_b, 1e-12));

    // approximation of identity for modal operators: ‖u − P_N u‖ ≤ λ_{N+1}^{-1/2}‖u‖_V
    let g = SpectralGrid::periodic(32)?;
    let mut ai = Vec::with_capacity(samples);
    for i in 0..samples as u64 {
        let mut rng = key(seed, 4000, i).rng();
        let cut = rng.random_range(1..=100i64);
        let op = ObservationOperator::modal(&g, cut)?;
        let slope: f64 = rng.random_range(0.5..4.0);
        let u = RandomSpectrum { slope, k2_cut: i64::MAX }.coords(&g, &mut rng);
        ai.push(crate::diagnostics::tail_ratio(&op, &g, &u)? - 1.0);
    }
    checks.push(check("modal_approximation_of_identity", ai, 1e-12));

    Ok(IdentityReport { seed, checks })
}
