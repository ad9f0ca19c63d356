use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::fft::Fft2;
use crate::error::{Error, Result};

/// A wavevector of the upper half-plane (kx > 0, or kx = 0 and ky > 0).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Mode {
    pub kx: i64,
    pub ky: i64,
}

impl Mode {
    pub fn k2(&self) -> i64 {
        self.kx * self.kx + self.ky * self.ky
    }
}

/// Which real basis function of a mode: cos(k·x) or sin(k·x).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Cos,
    Sin,
}

/// Periodic n×n collocation grid on [0, L)² together with the real orthonormal
/// eigenbasis of the truncated Stokes operator.
///
/// State vectors are coordinates in that basis: entry `2m` multiplies
/// `√2/L cos(κk·x) k⊥/|k|`, entry `2m+1` the matching sine, where `m` indexes
/// `modes()` in order of increasing |k|². The Euclidean inner product of
/// coordinates is therefore the L² inner product of fields.
#[derive(Debug)]
pub struct SpectralGrid {
    n: usize,
    length: f64,
    k_max: i64,
    modes: Vec<Mode>,
    lookup: HashMap<(i64, i64), usize>,
    fft: Fft2,
}

impl SpectralGrid {
    /// Grid with the 2/3-rule truncation |k_i| ≤ ⌊(n−1)/3⌋.
    pub fn new(n: usize, length: f64) -> Result<Arc<Self>> {
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidParameter(format!("grid size must be even and ≥ 8, got {n}")));
        }
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidParameter(format!("domain length must be positive, got {length}")));
        }
        let k_max = ((n - 1) / 3) as i64;
        let mut modes = Vec::new();
        for kx in 0..=k_max {
            for ky in -k_max..=k_max {
                if kx > 0 || ky > 0 {
                    modes.push(Mode { kx, ky });
                }
            }
        }
        modes.sort_by_key(|m| (m.k2(), m.kx, m.ky));
        let lookup = modes.iter().enumerate().map(|(i, m)| ((m.kx, m.ky), i)).collect();
        Ok(Arc::new(Self { n, length, k_max, modes, lookup, fft: Fft2::new(n) }))
    }

    /// Default periodic box [0, 2π)².
    pub fn periodic(n: usize) -> Result<Arc<Self>> {
        Self::new(n, 2.0 * PI)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn k_max(&self) -> i64 {
        self.k_max
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn fft(&self) -> &Fft2 {
        &self.fft
    }

    /// Number of real coordinates of the truncated space H.
    pub fn dim(&self) -> usize {
        2 * self.modes.len()
    }

    /// 2π/L.
    pub fn kappa(&self) -> f64 {
        2.0 * PI / self.length
    }

    pub fn lambda1(&self) -> f64 {
        self.kappa() * self.kappa()
    }

    /// Stokes eigenvalue of coordinate `i`.
    pub fn eigenvalue(&self, i: usize) -> f64 {
        self.lambda1() * self.modes[i / 2].k2() as f64
    }

    pub fn coordinate_mode(&self, i: usize) -> (Mode, Phase) {
        (self.modes[i / 2], if i % 2 == 0 { Phase::Cos } else { Phase::Sin })
    }

    /// Coordinate index of a basis function; `(kx, ky)` may lie in either half-plane.
    pub fn coordinate_index(&self, kx: i64, ky: i64, phase: Phase) -> Option<usize> {
        // sin(−k·x) = −sin(k·x): the index is shared, only the sign differs.
        let (kx, ky) = if kx > 0 || (kx == 0 && ky > 0) { (kx, ky) } else { (-kx, -ky) };
        self.lookup.get(&(kx, ky)).map(|&m| 2 * m + if phase == Phase::Cos { 0 } else { 1 })
    }

    /// Stokes eigenvalues of all coordinates, ascending with multiplicity.
    pub fn stokes_spectrum(&self) -> StokesSpectrum {
        let eigenvalues = (0..self.dim()).map(|i| self.eigenvalue(i)).collect();
        let modes = (0..self.dim()).map(|i| self.coordinate_mode(i)).collect();
        StokesSpectrum { eigenvalues, modes }
    }

    /// Number of leading coordinates with |k|² ≤ `k2_cut`.
    pub fn count_within(&self, k2_cut: i64) -> usize {
        2 * self.modes.iter().take_while(|m| m.k2() <= k2_cut).count()
    }

    /// Signed wavenumber of FFT index `i`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i <= n / 2 {
            i
        } else {
            i - n
        }
    }

    /// FFT array index of wavevector (kx, ky); rows are ky, columns kx.
    pub fn index(&self, kx: i64, ky: i64) -> usize {
        let n = self.n as i64;
        (ky.rem_euclid(n) * n + kx.rem_euclid(n)) as usize
    }

    pub fn within_truncation(&self, kx: i64, ky: i64) -> bool {
        kx.abs() <= self.k_max && ky.abs() <= self.k_max
    }

    pub fn same_as(&self, other: &SpectralGrid) -> bool {
        self.n == other.n && self.length == other.length
    }
}

/// Stokes eigenvalues λ_n = (2π/L)²|k|² sorted ascending with multiplicity.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StokesSpectrum {
    pub eigenvalues: Vec<f64>,
    pub modes: Vec<(Mode, Phase)>,
}

impl StokesSpectrum {
    pub fn lambda1(&self) -> f64 {
        self.eigenvalues[0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dimensions_follow_two_thirds_rule() {
        let g = SpectralGrid::periodic(64).unwrap();
        assert_eq!(g.k_max(), 21);
        assert_eq!(g.dim(), 43 * 43 - 1);
        let g = SpectralGrid::periodic(128).unwrap();
        assert_eq!(g.k_max(), 42);
        assert_eq!(g.dim(), 85 * 85 - 1);
    }

    #[test]
    fn spectrum_is_sorted_and_starts_at_one() {
        let g = SpectralGrid::periodic(32).unwrap();
        let s = g.stokes_spectrum();
        assert_eq!(s.lambda1(), 1.0);
        assert!(s.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        // |k|² = 1 shell: (1,0),(0,1) in the half-plane, two phases each.
        assert_eq!(g.count_within(1), 4);
        assert_eq!(g.count_within(2), 8);
    }

    #[test]
    fn index_lookup_covers_both_half_planes() {
        let g = SpectralGrid::periodic(16).unwrap();
        let i = g.coordinate_index(2, -1, Phase::Sin).unwrap();
        assert_eq!(g.coordinate_index(-2, 1, Phase::Sin), Some(i));
        assert_eq!(g.coordinate_mode(i).0, Mode { kx: 2, ky: -1 });
    }
}
