use std::f64::consts::SQRT_2;
use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;

use super::grid::{Phase, SpectralGrid};
use super::sum::compensated_sum;
use crate::error::{ensure_finite, ensure_len, Error, Result};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

pub(crate) type Spectrum = [Vec<Complex64>; 2];

/// Velocity field stored as Fourier coefficients û(k) of both components on an
/// n×n FFT layout (rows ky, columns kx); the field is `Σ_k û(k) e^{iκk·x}`.
///
/// Fields produced by the state-space constructors are real, mean-zero,
/// divergence-free and truncated to |k_i| ≤ K_max. Fields built from raw grid
/// data (`from_grid`) carry whatever the data contains until projected.
#[derive(Clone)]
pub struct SpectralField {
    grid: Arc<SpectralGrid>,
    comps: Spectrum,
}

impl std::fmt::Debug for SpectralField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralField")
            .field("n", &self.grid.n())
            .field("length", &self.grid.length())
            .field("norm_h", &self.norm_h())
            .finish()
    }
}

impl SpectralField {
    pub fn zeros(grid: &Arc<SpectralGrid>) -> Self {
        let n2 = grid.n() * grid.n();
        Self { grid: grid.clone(), comps: [vec![ZERO; n2], vec![ZERO; n2]] }
    }

    pub fn grid(&self) -> &Arc<SpectralGrid> {
        &self.grid
    }

    pub fn components(&self) -> &[Vec<Complex64>; 2] {
        &self.comps
    }

    pub(crate) fn from_spectrum(grid: &Arc<SpectralGrid>, comps: Spectrum) -> Self {
        Self { grid: grid.clone(), comps }
    }

    /// Raw coefficient constructor; `coeff(kx, ky)` gives (û₁, û₂) for every
    /// wavevector with |k_i| ≤ K_max. No symmetry or projection is enforced.
    pub fn from_fn(grid: &Arc<SpectralGrid>, mut coeff: impl FnMut(i64, i64) -> (Complex64, Complex64)) -> Self {
        let mut f = Self::zeros(grid);
        let k = grid.k_max();
        for ky in -k..=k {
            for kx in -k..=k {
                let idx = grid.index(kx, ky);
                let (a, b) = coeff(kx, ky);
                f.comps[0][idx] = a;
                f.comps[1][idx] = b;
            }
        }
        f
    }

    /// Field from state-space coordinates (see [`SpectralGrid`]).
    pub fn from_coords(grid: &Arc<SpectralGrid>, coords: &[f64]) -> Result<Self> {
        ensure_len("coordinate vector", coords.len(), grid.dim())?;
        Ok(Self { grid: grid.clone(), comps: coords_to_spectrum(grid, coords) })
    }

    /// Unit-norm basis function √2/L·{cos,sin}(κk·x)·k⊥/|k|.
    pub fn eigenmode(grid: &Arc<SpectralGrid>, kx: i64, ky: i64, phase: Phase) -> Result<Self> {
        let i = grid
            .coordinate_index(kx, ky, phase)
            .ok_or_else(|| Error::InvalidParameter(format!("mode ({kx},{ky}) outside truncation")))?;
        let mut c = vec![0.0; grid.dim()];
        c[i] = 1.0;
        Self::from_coords(grid, &c)
    }

    /// Orthogonal projection onto the state space, returned as coordinates.
    pub fn to_coords(&self) -> DVector<f64> {
        spectrum_to_coords(&self.grid, &self.comps)
    }

    /// Field from collocation values u_c[jy·n + jx] at x = (jx, jy)·L/n.
    pub fn from_grid(grid: &Arc<SpectralGrid>, values: [&[f64]; 2]) -> Result<Self> {
        let n = grid.n();
        let n2 = (n * n) as f64;
        let mut comps: Spectrum = [Vec::new(), Vec::new()];
        for c in 0..2 {
            ensure_len("grid values", values[c].len(), n * n)?;
            ensure_finite("grid values", values[c])?;
            let mut buf: Vec<Complex64> = values[c].iter().map(|&x| Complex64::new(x, 0.0)).collect();
            grid.fft().forward(&mut buf);
            for z in buf.iter_mut() {
                *z /= n2;
            }
            comps[c] = buf;
        }
        Ok(Self { grid: grid.clone(), comps })
    }

    /// Collocation values of both components.
    pub fn to_grid(&self) -> [Vec<f64>; 2] {
        let mut out = [Vec::new(), Vec::new()];
        for c in 0..2 {
            let mut buf = self.comps[c].clone();
            self.grid.fft().inverse(&mut buf);
            out[c] = buf.iter().map(|z| z.re).collect();
        }
        out
    }

    /// Collocation values on a finer grid of size `m ≥ n` (spectral interpolation).
    pub fn to_padded_grid(&self, m: usize) -> Result<[Vec<f64>; 2]> {
        let n = self.grid.n();
        if m < n {
            return Err(Error::Shape(format!("padded size {m} smaller than grid {n}")));
        }
        let fft = super::fft::Fft2::new(m);
        let mi = m as i64;
        let k = self.grid.k_max();
        let mut out = [Vec::new(), Vec::new()];
        for c in 0..2 {
            let mut buf = vec![ZERO; m * m];
            for ky in -k..=k {
                for kx in -k..=k {
                    buf[(ky.rem_euclid(mi) * mi + kx.rem_euclid(mi)) as usize] = self.comps[c][self.grid.index(kx, ky)];
                }
            }
            fft.inverse(&mut buf);
            out[c] = buf.iter().map(|z| z.re).collect();
        }
        Ok(out)
    }

    /// Leray projection: û − k(k·û)/|k|², with the mean, Nyquist and all modes
    /// beyond the truncation removed.
    pub fn leray_project(&self) -> Result<Self> {
        self.check_finite()?;
        let g = &self.grid;
        let n = g.n();
        let mut out = Self::zeros(g);
        for iy in 0..n {
            let ky = g.wavenumber(iy);
            for ix in 0..n {
                let kx = g.wavenumber(ix);
                if (kx == 0 && ky == 0) || !g.within_truncation(kx, ky) {
                    continue;
                }
                let idx = iy * n + ix;
                let (a, b) = (self.comps[0][idx], self.comps[1][idx]);
                let (fx, fy) = (kx as f64, ky as f64);
                let dot = (a * fx + b * fy) / (fx * fx + fy * fy);
                out.comps[0][idx] = a - dot * fx;
                out.comps[1][idx] = b - dot * fy;
            }
        }
        Ok(out)
    }

    /// Stokes operator: (Au)^(k) = κ²|k|² û(k).
    pub fn stokes_apply(&self) -> Self {
        let g = &self.grid;
        let l1 = g.lambda1();
        self.map_modes(|kx, ky, z| z * (l1 * (kx * kx + ky * ky) as f64))
    }

    /// B(u, v) = Π(u·∇)v, pseudo-spectral with 2/3-rule dealiasing.
    pub fn bilinear(&self, v: &SpectralField) -> Result<Self> {
        if !self.grid.same_as(&v.grid) {
            return Err(Error::Shape("bilinear term of fields on different grids".into()));
        }
        let u = self.truncated();
        let v = v.truncated();
        let adv = advect(&self.grid, &u.comps, &v.comps);
        Self::from_spectrum(&self.grid, adv).leray_project()
    }

    /// Spatial L² inner product (real fields), ∫ u·v dx = L² Σ_k Re(û·conj v̂).
    pub fn inner(&self, other: &SpectralField) -> f64 {
        let l2 = self.grid.length().powi(2);
        let terms = (0..2).flat_map(|c| {
            self.comps[c].iter().zip(&other.comps[c]).map(|(a, b)| (a * b.conj()).re)
        });
        l2 * compensated_sum(terms)
    }

    pub fn norm_h(&self) -> f64 {
        self.inner(self).max(0.0).sqrt()
    }

    /// ‖u‖_V = ‖∇u‖_{L²}.
    pub fn norm_v(&self) -> f64 {
        let g = &self.grid;
        let n = g.n();
        let l1 = g.lambda1();
        let l2 = g.length().powi(2);
        let mut terms = Vec::with_capacity(2 * n * n);
        for iy in 0..n {
            let ky = g.wavenumber(iy);
            for ix in 0..n {
                let kx = g.wavenumber(ix);
                let w = l1 * (kx * kx + ky * ky) as f64;
                for c in 0..2 {
                    terms.push(w * self.comps[c][iy * n + ix].norm_sqr());
                }
            }
        }
        (l2 * compensated_sum(terms)).max(0.0).sqrt()
    }

    /// ‖u‖_{L⁴}, by exact quadrature on a 2× zero-padded grid.
    pub fn norm_l4(&self) -> f64 {
        let m = 2 * self.grid.n();
        let vals = self.to_padded_grid(m).expect("padded size is larger than grid");
        let l2 = self.grid.length().powi(2);
        let s = compensated_sum(vals[0].iter().zip(&vals[1]).map(|(a, b)| {
            let r = a * a + b * b;
            r * r
        }));
        (l2 * s / (m * m) as f64).powf(0.25)
    }

    /// max_k |k·û(k)| / (|k| |û(k)|), relative to the largest coefficient.
    pub fn divergence_residual(&self) -> f64 {
        let g = &self.grid;
        let n = g.n();
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for iy in 0..n {
            let ky = g.wavenumber(iy) as f64;
            for ix in 0..n {
                let kx = g.wavenumber(ix) as f64;
                let idx = iy * n + ix;
                let (a, b) = (self.comps[0][idx], self.comps[1][idx]);
                scale = scale.max((a.norm_sqr() + b.norm_sqr()).sqrt());
                let k = (kx * kx + ky * ky).sqrt();
                if k > 0.0 {
                    worst = worst.max((a * kx + b * ky).norm() / k);
                }
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    /// max_k |û(−k) − conj û(k)| relative to the largest coefficient.
    pub fn reality_residual(&self) -> f64 {
        let g = &self.grid;
        let n = g.n() as i64;
        let mut worst = 0.0f64;
        let mut scale = 0.0f64;
        for ky in -(n / 2 - 1)..n / 2 {
            for kx in -(n / 2 - 1)..n / 2 {
                for c in 0..2 {
                    let a = self.comps[c][g.index(kx, ky)];
                    let b = self.comps[c][g.index(-kx, -ky)];
                    scale = scale.max(a.norm());
                    worst = worst.max((b - a.conj()).norm());
                }
            }
        }
        if scale == 0.0 {
            0.0
        } else {
            worst / scale
        }
    }

    pub fn mean(&self) -> [Complex64; 2] {
        [self.comps[0][0], self.comps[1][0]]
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.map_modes(|_, _, z| z * s)
    }

    pub fn add(&self, other: &SpectralField) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &SpectralField) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    /// Largest coefficient difference, relative to the larger field.
    pub fn max_abs_diff(&self, other: &SpectralField) -> f64 {
        let mut d = 0.0f64;
        for c in 0..2 {
            for (a, b) in self.comps[c].iter().zip(&other.comps[c]) {
                d = d.max((a - b).norm());
            }
        }
        d
    }

    fn zip(&self, other: &SpectralField, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        if !self.grid.same_as(&other.grid) {
            return Err(Error::Shape("fields live on different grids".into()));
        }
        let comps = [0, 1].map(|c| self.comps[c].iter().zip(&other.comps[c]).map(|(a, b)| f(*a, *b)).collect());
        Ok(Self { grid: self.grid.clone(), comps })
    }

    fn map_modes(&self, f: impl Fn(i64, i64, Complex64) -> Complex64) -> Self {
        let g = &self.grid;
        let n = g.n();
        let mut out = Self::zeros(g);
        for iy in 0..n {
            let ky = g.wavenumber(iy);
            for ix in 0..n {
                let kx = g.wavenumber(ix);
                let idx = iy * n + ix;
                for c in 0..2 {
                    out.comps[c][idx] = f(kx, ky, self.comps[c][idx]);
                }
            }
        }
        out
    }

    fn truncated(&self) -> Self {
        let g = self.grid.clone();
        self.map_modes(|kx, ky, z| {
            if g.within_truncation(kx, ky) && 2 * kx.abs() < g.n() as i64 && 2 * ky.abs() < g.n() as i64 {
                z
            } else {
                ZERO
            }
        })
    }

    fn check_finite(&self) -> Result<()> {
        let ok = self.comps.iter().flatten().all(|z| z.re.is_finite() && z.im.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::NumericInput("field has non-finite coefficients".into()))
        }
    }
}

/// Coordinates → spectrum. For a mode with coordinates (a, b),
/// û(k) = (a − ib)/(√2 L)·k⊥/|k| and û(−k) = conj û(k).
pub(crate) fn coords_to_spectrum(grid: &SpectralGrid, coords: &[f64]) -> Spectrum {
    let n2 = grid.n() * grid.n();
    let mut comps: Spectrum = [vec![ZERO; n2], vec![ZERO; n2]];
    coords_into_spectrum(grid, coords, &mut comps);
    comps
}

fn coords_into_spectrum(grid: &SpectralGrid, coords: &[f64], comps: &mut Spectrum) {
    comps.iter_mut().for_each(|c| c.fill(ZERO));
    let s = 1.0 / (SQRT_2 * grid.length());
    for (m, mode) in grid.modes().iter().enumerate() {
        let (a, b) = (coords[2 * m], coords[2 * m + 1]);
        if a == 0.0 && b == 0.0 {
            continue;
        }
        let k = (mode.k2() as f64).sqrt();
        let unit = [-(mode.ky as f64) / k, mode.kx as f64 / k];
        let c = Complex64::new(a * s, -b * s);
        let ip = grid.index(mode.kx, mode.ky);
        let im = grid.index(-mode.kx, -mode.ky);
        for d in 0..2 {
            comps[d][ip] = c * unit[d];
            comps[d][im] = c.conj() * unit[d];
        }
    }
}

/// Spectrum → coordinates: the L²-orthogonal projection onto the basis.
pub(crate) fn spectrum_to_coords(grid: &SpectralGrid, comps: &Spectrum) -> DVector<f64> {
    let mut out = DVector::zeros(grid.dim());
    let s = grid.length() / SQRT_2;
    for (m, mode) in grid.modes().iter().enumerate() {
        let k = (mode.k2() as f64).sqrt();
        let unit = [-(mode.ky as f64) / k, mode.kx as f64 / k];
        let ip = grid.index(mode.kx, mode.ky);
        let im = grid.index(-mode.kx, -mode.ky);
        let w = comps[0][ip] * unit[0] + comps[1][ip] * unit[1];
        let wm = comps[0][im] * unit[0] + comps[1][im] * unit[1];
        out[2 * m] = s * (w + wm).re;
        out[2 * m + 1] = s * (wm - w).im;
    }
    out
}

/// Buffers of one dealiased product.
struct Work {
    a: Vec<Complex64>,
    d1: Vec<Complex64>,
    d2: Vec<Complex64>,
    p: Vec<Complex64>,
}

impl Work {
    fn new(n2: usize) -> Self {
        Self { a: vec![ZERO; n2], d1: vec![ZERO; n2], d2: vec![ZERO; n2], p: vec![ZERO; n2] }
    }
}

/// Dealiased (u·∇)v without projection, truncated to |k_i| ≤ K_max.
///
/// Both inputs must already be truncated. Two real fields share one complex
/// transform (real part + i·imaginary part), so the product costs three
/// inverse transforms and one forward transform.
pub(crate) fn advect(grid: &SpectralGrid, u: &Spectrum, v: &Spectrum) -> Spectrum {
    let n2 = grid.n() * grid.n();
    let mut out: Spectrum = [vec![ZERO; n2], vec![ZERO; n2]];
    advect_into(grid, u, v, &mut Work::new(n2), &mut out);
    out
}

fn advect_into(grid: &SpectralGrid, u: &Spectrum, v: &Spectrum, w: &mut Work, out: &mut Spectrum) {
    let n = grid.n();
    let n2 = n * n;
    let kap = grid.kappa();
    let k = grid.k_max();
    let i = Complex64::new(0.0, 1.0);
    let Work { a, d1, d2, p } = w;
    a.fill(ZERO);
    d1.fill(ZERO);
    d2.fill(ZERO);
    for ky in -k..=k {
        for kx in -k..=k {
            let idx = grid.index(kx, ky);
            let (dx, dy) = (i * (kap * kx as f64), i * (kap * ky as f64));
            a[idx] = u[0][idx] + i * u[1][idx];
            d1[idx] = dx * v[0][idx] + i * (dy * v[0][idx]);
            d2[idx] = dx * v[1][idx] + i * (dy * v[1][idx]);
        }
    }
    let fft = grid.fft();
    fft.inverse(a);
    fft.inverse(d1);
    fft.inverse(d2);
    for j in 0..n2 {
        let (u1, u2) = (a[j].re, a[j].im);
        let g1 = u1 * d1[j].re + u2 * d1[j].im;
        let g2 = u1 * d2[j].re + u2 * d2[j].im;
        p[j] = Complex64::new(g1, g2);
    }
    fft.forward(p);
    let norm = 1.0 / (2.0 * n2 as f64);
    out.iter_mut().for_each(|c| c.fill(ZERO));
    for ky in -k..=k {
        for kx in -k..=k {
            let ip = grid.index(kx, ky);
            let zp = p[ip];
            let zm = p[grid.index(-kx, -ky)].conj();
            out[0][ip] = (zp + zm) * norm;
            out[1][ip] = (zp - zm) * (-i) * norm;
        }
    }
}

/// Per-thread spectra and transform buffers for [`bilinear_coords`], so the
/// hot loop of every time step allocates nothing of grid size.
struct CoordsWork {
    su: Spectrum,
    sv: Spectrum,
    out: Spectrum,
    work: Work,
}

thread_local! {
    static COORDS_WORK: std::cell::RefCell<std::collections::HashMap<usize, CoordsWork>> = Default::default();
}

/// B(u, v) directly on coordinate vectors, projected back onto the basis.
pub fn bilinear_coords(grid: &SpectralGrid, u: &[f64], v: &[f64]) -> DVector<f64> {
    let n2 = grid.n() * grid.n();
    COORDS_WORK.with(|cell| {
        let mut map = cell.borrow_mut();
        let w = map.entry(n2).or_insert_with(|| CoordsWork {
            su: [vec![ZERO; n2], vec![ZERO; n2]],
            sv: [vec![ZERO; n2], vec![ZERO; n2]],
            out: [vec![ZERO; n2], vec![ZERO; n2]],
            work: Work::new(n2),
        });
        coords_into_spectrum(grid, u, &mut w.su);
        let same = std::ptr::eq(u, v);
        if !same {
            coords_into_spectrum(grid, v, &mut w.sv);
        }
        let CoordsWork { su, sv, out, work } = w;
        advect_into(grid, su, if same { su } else { sv }, work, out);
        spectrum_to_coords(grid, out)
    })
}
