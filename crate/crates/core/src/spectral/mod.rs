//! Periodic 2D pseudo-spectral kernel: transforms, Leray projection, Stokes
//! operator, the dealiased bilinear term and norms.

mod fft;
mod field;
mod grid;
mod random;
pub mod io;
mod sum;

pub use fft::Fft2;
pub use field::{bilinear_coords, SpectralField};
pub use random::RandomSpectrum;
pub use grid::{Mode, Phase, SpectralGrid, StokesSpectrum};
pub use sum::{compensated_dot, compensated_sum};
