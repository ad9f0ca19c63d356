//! The dealiased advection term B(u, v) on random smooth fields: energy
//! orthogonality ⟨B(u, v), v⟩ = 0 and antisymmetry ⟨B(u, v), w⟩ = −⟨B(u, w), v⟩.

use da_core::rng::{StreamKey, StreamRole};
use da_core::spectral::{RandomSpectrum, SpectralGrid};

fn main() -> da_core::Result<()> {
    for n in [32, 64, 128] {
        let grid = SpectralGrid::periodic(n)?;
        let mut rng = StreamKey::new(1, StreamRole::Auxiliary, n as u64, 0).rng();
        let spectrum = RandomSpectrum::default();
        let (mut orth, mut anti) = (0.0f64, 0.0f64);
        for _ in 0..20 {
            let (u, v, w) = (spectrum.field(&grid, &mut rng), spectrum.field(&grid, &mut rng), spectrum.field(&grid, &mut rng));
            let buv = u.bilinear(&v)?;
            orth = orth.max(buv.inner(&v).abs() / (buv.norm_h() * v.norm_h()));
            anti = anti.max((buv.inner(&w) + u.bilinear(&w)?.inner(&v)).abs() / (buv.norm_h() * w.norm_h()));
        }
        println!("{n:>4}²  dim {:>6}  max |<B(u,v),v>| {orth:.2e}  max antisymmetry defect {anti:.2e}", grid.dim());
    }
    Ok(())
}
