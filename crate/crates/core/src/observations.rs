//! Finite-rank observation operators O: H → R^q, their adjoints, interpolants
//! I_h = O*O, kernel projections and noisy observation generation.

use std::fs;
use std::path::Path;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, ensure_len, Error, Result};
use crate::rng::{fill_standard_normal, StreamKey};
use crate::spectral::{SpectralField, SpectralGrid};

/// Orthogonal projection onto a subspace, stored through an orthonormal basis.
#[derive(Clone, Debug)]
pub enum Projector {
    Identity(usize),
    /// Projection onto a set of coordinate axes.
    Select { dim: usize, indices: Vec<usize> },
    /// Columns form an orthonormal basis of the range.
    Basis(DMatrix<f64>),
}

impl Projector {
    /// Projection from an explicit matrix; it must be symmetric and idempotent.
    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::InvalidProjection("matrix is not square".into()));
        }
        let scale = m.norm().max(1.0);
        let asym = (m - m.transpose()).norm();
        let idem = (m * m - m).norm();
        if asym > 1e-10 * scale || idem > 1e-10 * scale {
            return Err(Error::InvalidProjection(format!(
                "not an orthogonal projection: |P − Pᵀ| = {asym:.2e}, |P² − P| = {idem:.2e}"
            )));
        }
        let eig = SymmetricEigen::new(m.clone());
        let cols: Vec<DVector<f64>> = (0..m.nrows()).filter(|&i| eig.eigenvalues[i] > 0.5).map(|i| eig.eigenvectors.column(i).into_owned()).collect();
        if cols.is_empty() {
            return Ok(Projector::Basis(DMatrix::zeros(m.nrows(), 0)));
        }
        Ok(Projector::Basis(DMatrix::from_columns(&cols)))
    }

    pub fn dim(&self) -> usize {
        match self {
            Projector::Identity(d) => *d,
            Projector::Select { dim, .. } => *dim,
            Projector::Basis(b) => b.nrows(),
        }
    }

    pub fn rank(&self) -> usize {
        match self {
            Projector::Identity(d) => *d,
            Projector::Select { indices, .. } => indices.len(),
            Projector::Basis(b) => b.ncols(),
        }
    }

    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self {
            Projector::Identity(_) => v.clone(),
            Projector::Select { dim, indices } => {
                let mut out = DVector::zeros(*dim);
                for &i in indices {
                    out[i] = v[i];
                }
                out
            }
            Projector::Basis(b) => b * (b.transpose() * v),
        }
    }

    /// i-th orthonormal basis vector of the range.
    pub fn basis_vector(&self, i: usize) -> DVector<f64> {
        match self {
            Projector::Identity(d) => unit(*d, i),
            Projector::Select { dim, indices } => unit(*dim, indices[i]),
            Projector::Basis(b) => b.column(i).into_owned(),
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        match self {
            Projector::Identity(d) => DMatrix::identity(*d, *d),
            Projector::Select { dim, indices } => {
                let mut m = DMatrix::zeros(*dim, *dim);
                for &i in indices {
                    m[(i, i)] = 1.0;
                }
                m
            }
            Projector::Basis(b) => b * b.transpose(),
        }
    }
}

fn unit(d: usize, i: usize) -> DVector<f64> {
    let mut v = DVector::zeros(d);
    v[i] = 1.0;
    v
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationKind {
    Modal,
    Volume,
    Coordinates,
}

/// Serializable description of an operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObservationSpec {
    /// Stokes eigenmodes with |k|² ≤ `k2_cut`, or the leading `count` coordinates.
    Modal {
        #[serde(default)]
        k2_cut: Option<i64>,
        #[serde(default)]
        count: Option<usize>,
    },
    /// Cell averages of both velocity components on an M×M partition.
    Volume { cells: usize },
    /// Direct observation of the listed coordinates.
    Coordinates { indices: Vec<usize> },
    /// Every `stride`-th coordinate starting at `offset`.
    Strided { stride: usize, #[serde(default)] offset: usize },
}

#[derive(Clone, Debug)]
enum Repr {
    Select(Vec<usize>),
    /// q × d matrix whose rows are the state-space coordinates of ψ_n.
    Dense(DMatrix<f64>),
}

/// A Type-1 observation operator O_n(u) = ⟨u, ψ_n⟩.
#[derive(Clone, Debug)]
pub struct ObservationOperator {
    kind: ObservationKind,
    spec: ObservationSpec,
    dim: usize,
    repr: Repr,
    h: f64,
    c1: Option<f64>,
    c2: Option<f64>,
    kernel: Arc<OnceLock<Projector>>,
}

impl ObservationOperator {
    /// Leading `q` Stokes eigen-coordinates; h = λ_{q+1}^{-1/2} (0 when every
    /// coordinate is observed).
    pub fn modal_leading(grid: &SpectralGrid, q: usize) -> Result<Self> {
        if q == 0 || q > grid.dim() {
            return Err(Error::InvalidParameter(format!("modal rank {q} outside 1..={}", grid.dim())));
        }
        let h = if q < grid.dim() { grid.eigenvalue(q).powf(-0.5) } else { 0.0 };
        Ok(Self::selection(ObservationKind::Modal, ObservationSpec::Modal { k2_cut: None, count: Some(q) }, grid.dim(), (0..q).collect(), h, Some(1.0), Some(1.0)))
    }

    /// All Stokes modes with |k|² ≤ `k2_cut` (complete shells).
    pub fn modal(grid: &SpectralGrid, k2_cut: i64) -> Result<Self> {
        let q = grid.count_within(k2_cut);
        let mut op = Self::modal_leading(grid, q)?;
        op.spec = ObservationSpec::Modal { k2_cut: Some(k2_cut), count: None };
        Ok(op)
    }

    /// Direct observation of coordinates of a finite-dimensional state; h = 1.
    pub fn coordinates(dim: usize, indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() || indices.iter().any(|&i| i >= dim) {
            return Err(Error::InvalidParameter("observed coordinates must be non-empty and in range".into()));
        }
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != indices.len() {
            return Err(Error::InvalidParameter("observed coordinates must be distinct".into()));
        }
        Ok(Self::selection(ObservationKind::Coordinates, ObservationSpec::Coordinates { indices: indices.clone() }, dim, indices, 1.0, Some(1.0), Some(1.0)))
    }

    pub fn strided(dim: usize, stride: usize, offset: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::InvalidParameter("stride must be positive".into()));
        }
        let mut op = Self::coordinates(dim, (offset..dim).step_by(stride).collect())?;
        op.spec = ObservationSpec::Strided { stride, offset };
        Ok(op)
    }

    /// Cell averages on a uniform M×M partition with ψ_n = χ_{D_n}/√|D_n|
    /// per velocity component, evaluated by collocation quadrature;
    /// h = √2·L/M is the cell diameter.
    pub fn volume(grid: &Arc<SpectralGrid>, cells: usize) -> Result<Self> {
        let n = grid.n();
        if cells == 0 || n % cells != 0 {
            return Err(Error::InvalidParameter(format!("{cells} cells do not tile an {n}×{n} grid")));
        }
        let side = n / cells;
        let area = (grid.length() / cells as f64).powi(2);
        let amp = 1.0 / area.sqrt();
        let q = 2 * cells * cells;
        let mut rows = DMatrix::zeros(q, grid.dim());
        let mut r = 0;
        for c in 0..2 {
            for cy in 0..cells {
                for cx in 0..cells {
                    let mut vals = [vec![0.0; n * n], vec![0.0; n * n]];
                    for jy in cy * side..(cy + 1) * side {
                        for jx in cx * side..(cx + 1) * side {
                            vals[c][jy * n + jx] = amp;
                        }
                    }
                    let psi = SpectralField::from_grid(grid, [&vals[0], &vals[1]])?;
                    // collocation quadrature of ⟨u, ψ⟩ equals the L² product with the
                    // truncated, projected ψ for every state u
                    let coords = psi.to_coords();
                    rows.row_mut(r).copy_from(&coords.transpose());
                    r += 1;
                }
            }
        }
        let h = 2f64.sqrt() * grid.length() / cells as f64;
        Ok(Self {
            kind: ObservationKind::Volume,
            spec: ObservationSpec::Volume { cells },
            dim: grid.dim(),
            repr: Repr::Dense(rows),
            h,
            c1: None,
            c2: None,
            kernel: Arc::new(OnceLock::new()),
        })
    }

    fn selection(kind: ObservationKind, spec: ObservationSpec, dim: usize, idx: Vec<usize>, h: f64, c1: Option<f64>, c2: Option<f64>) -> Self {
        let kernel = OnceLock::new();
        let _ = kernel.set(Projector::Select { dim, indices: idx.clone() });
        Self { kind, spec, dim, repr: Repr::Select(idx), h, c1, c2, kernel: Arc::new(kernel) }
    }

    pub fn kind(&self) -> ObservationKind {
        self.kind
    }

    pub fn spec(&self) -> &ObservationSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rank(&self) -> usize {
        match &self.repr {
            Repr::Select(i) => i.len(),
            Repr::Dense(m) => m.nrows(),
        }
    }

    /// Observation resolution h.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn c1(&self) -> Option<f64> {
        self.c1
    }

    pub fn c2(&self) -> Option<f64> {
        self.c2
    }

    /// Freeze calibrated constants into the operator.
    pub fn with_constants(mut self, c1: f64, c2: f64) -> Self {
        self.c1 = Some(c1);
        self.c2 = Some(c2);
        self
    }

    /// Observed coordinate indices when O selects coordinates.
    pub fn selected(&self) -> Option<&[usize]> {
        match &self.repr {
            Repr::Select(i) => Some(i),
            Repr::Dense(_) => None,
        }
    }

    /// True when O*O is an orthogonal projection (O has orthonormal rows).
    pub fn is_orthogonal_projection(&self) -> bool {
        matches!(self.repr, Repr::Select(_))
    }

    pub fn observe(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_len("state", u.len(), self.dim)?;
        Ok(match &self.repr {
            Repr::Select(idx) => DVector::from_iterator(idx.len(), idx.iter().map(|&i| u[i])),
            Repr::Dense(m) => m * u,
        })
    }

    pub fn adjoint(&self, y: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_len("observation", y.len(), self.rank())?;
        Ok(match &self.repr {
            Repr::Select(idx) => {
                let mut out = DVector::zeros(self.dim);
                for (k, &i) in idx.iter().enumerate() {
                    out[i] = y[k];
                }
                out
            }
            Repr::Dense(m) => m.tr_mul(y),
        })
    }

    /// I_h u = O*O u.
    pub fn interpolate(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.adjoint(&self.observe(u)?)
    }

    /// O* e_n: the state-space representative of ψ_n.
    pub fn psi(&self, n: usize) -> DVector<f64> {
        match &self.repr {
            Repr::Select(idx) => unit(self.dim, idx[n]),
            Repr::Dense(m) => m.row(n).transpose(),
        }
    }

    /// Matrix of O (q × d); dense materialization for tests and small systems.
    pub fn matrix(&self) -> DMatrix<f64> {
        match &self.repr {
            Repr::Select(idx) => {
                let mut m = DMatrix::zeros(idx.len(), self.dim);
                for (k, &i) in idx.iter().enumerate() {
                    m[(k, i)] = 1.0;
                }
                m
            }
            Repr::Dense(m) => m.clone(),
        }
    }

    /// Orthogonal projection P_{K⊥} onto span{O*e_n} = (ker O)⊥.
    pub fn kernel_projector(&self) -> &Projector {
        self.kernel.get_or_init(|| match &self.repr {
            Repr::Select(idx) => Projector::Select { dim: self.dim, indices: idx.clone() },
            Repr::Dense(m) => {
                let gram = m * m.transpose();
                let eig = SymmetricEigen::new(gram);
                let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
                let cols: Vec<DVector<f64>> = (0..eig.eigenvalues.len())
                    .filter(|&i| eig.eigenvalues[i] > 1e-10 * top)
                    .map(|i| m.tr_mul(&eig.eigenvectors.column(i).into_owned()) / eig.eigenvalues[i].sqrt())
                    .collect();
                Projector::Basis(DMatrix::from_columns(&cols))
            }
        })
    }

    pub fn kernel_projection(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_len("state", u.len(), self.dim)?;
        Ok(self.kernel_projector().apply(u))
    }

    /// dim K⊥.
    pub fn kernel_rank(&self) -> usize {
        self.kernel_projector().rank()
    }

    pub fn observe_field(&self, u: &SpectralField) -> Result<DVector<f64>> {
        self.observe(&u.to_coords())
    }

    pub fn adjoint_field(&self, grid: &Arc<SpectralGrid>, y: &DVector<f64>) -> Result<SpectralField> {
        SpectralField::from_coords(grid, self.adjoint(y)?.as_slice())
    }

    pub fn interpolate_field(&self, u: &SpectralField) -> Result<SpectralField> {
        SpectralField::from_coords(u.grid(), self.interpolate(&u.to_coords())?.as_slice())
    }
}

/// Observation-noise covariance Γ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseModel {
    /// Γ = σ² I.
    Isotropic { sigma: f64 },
    /// Γ = σ² I / Δt (discrete analogue of a continuous observation path).
    Scaled { sigma: f64, dt: f64 },
    /// Arbitrary SPD Γ, row-major.
    Full { q: usize, gamma: Vec<f64> },
}

impl NoiseModel {
    pub fn matrix(&self, q: usize) -> DMatrix<f64> {
        match self {
            NoiseModel::Isotropic { sigma } => DMatrix::identity(q, q) * sigma.powi(2),
            NoiseModel::Scaled { sigma, dt } => DMatrix::identity(q, q) * (sigma.powi(2) / dt),
            NoiseModel::Full { q: n, gamma } => DMatrix::from_row_slice(*n, *n, gamma),
        }
    }
}

/// One noisy observation y = O u + ξ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub t: f64,
    pub y: Vec<f64>,
    pub key: StreamKey,
}

/// Draw y = O u + ξ, ξ ~ N(0, Γ), from the stream `key`. A zero noise level is
/// accepted only when `noiseless_ok` (nudging).
pub fn make_observation(op: &ObservationOperator, u: &DVector<f64>, t: f64, noise: &NoiseModel, key: StreamKey, noiseless_ok: bool) -> Result<Observation> {
    let clean = op.observe(u)?;
    let q = op.rank();
    let xi = match noise {
        NoiseModel::Isotropic { sigma } | NoiseModel::Scaled { sigma, .. } => {
            if *sigma == 0.0 && noiseless_ok {
                DVector::zeros(q)
            } else if !(*sigma > 0.0 && sigma.is_finite()) {
                return Err(Error::InvalidParameter(format!("noise level must be positive, got {sigma}")));
            } else {
                let scale = noise.matrix(1)[(0, 0)].sqrt();
                gaussian(key, q) * scale
            }
        }
        NoiseModel::Full { q: n, gamma } => {
            ensure_len("Γ", gamma.len(), n * n)?;
            ensure_len("Γ rows", *n, q)?;
            ensure_finite("Γ", gamma)?;
            let g = noise.matrix(q);
            let chol = g.clone().cholesky().ok_or_else(|| Error::LinearAlgebra {
                reason: "Γ is not symmetric positive definite".into(),
                condition: condition_number(&g),
            })?;
            chol.l() * gaussian(key, q)
        }
    };
    Ok(Observation { t, y: (clean + xi).as_slice().to_vec(), key })
}

fn gaussian(key: StreamKey, q: usize) -> DVector<f64> {
    let mut rng = key.rng();
    let mut buf = vec![0.0; q];
    fill_standard_normal(&mut rng, &mut buf);
    DVector::from_vec(buf)
}

/// 2-norm condition number of a symmetric matrix (∞ if singular).
pub fn condition_number(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let (lo, hi) = eig.eigenvalues.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &x| (lo.min(x.abs()), hi.max(x.abs())));
    if lo == 0.0 {
        f64::INFINITY
    } else {
        hi / lo
    }
}

/// Observation log: CSV rows `t, y_1..y_q` plus a JSON sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservationLog {
    pub operator: ObservationSpec,
    pub noise: NoiseModel,
    pub seed: u64,
    #[serde(skip)]
    pub records: Vec<Observation>,
}

impl ObservationLog {
    pub fn write(&self, csv_path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(csv_path)?;
        let q = self.records.first().map(|r| r.y.len()).unwrap_or(0);
        let mut header = vec!["t".to_string()];
        header.extend((1..=q).map(|i| format!("y_{i}")));
        w.write_record(&header)?;
        for r in &self.records {
            let mut row = vec![format!("{:?}", r.t)];
            row.extend(r.y.iter().map(|x| format!("{x:?}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        fs::write(csv_path.with_extension("json"), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Read back a log written by [`ObservationLog::write`]; stream keys are
    /// reconstructed as (seed, role, 0, row index).
    pub fn read(csv_path: &Path, role: crate::rng::StreamRole) -> Result<Self> {
        let mut log: ObservationLog = serde_json::from_str(&fs::read_to_string(csv_path.with_extension("json"))?)?;
        let mut r = csv::Reader::from_path(csv_path)?;
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let vals: Vec<f64> = rec.iter().map(|s| s.parse::<f64>().map_err(|e| Error::Serde(e.to_string()))).collect::<Result<_>>()?;
            log.records.push(Observation { t: vals[0], y: vals[1..].to_vec(), key: StreamKey::new(log.seed, role, 0, i as u64) });
        }
        Ok(log)
    }
}

