//! Modal and volume-average observations: resolution h, rank, and the
//! approximation-of-identity ratio |u − I_h u| / (h |u|_V) over random fields.

use da_core::diagnostics::{interpolation_ratio, tail_ratio, CorpusSpec};
use da_core::observations::ObservationOperator;
use da_core::spectral::SpectralGrid;

fn main() -> da_core::Result<()> {
    let grid = SpectralGrid::periodic(64)?;
    let corpus = CorpusSpec::new(100, 1);
    let fields: Vec<_> = (0..corpus.size).map(|i| corpus.field(&grid, i)).collect();

    println!("modal |k|² ≤ N");
    for cut in [4, 16, 64, 256] {
        let op = ObservationOperator::modal(&grid, cut)?;
        let worst = fields.iter().map(|u| tail_ratio(&op, &grid, u).unwrap()).fold(0.0, f64::max);
        println!("  N = {cut:>4}  q = {:>5}  h = {:.4}  max ratio {worst:.4} (≤ 1)", op.rank(), op.h());
    }
    println!("volume averages on M×M cells");
    for m in [4, 8, 16] {
        let op = ObservationOperator::volume(&grid, m)?;
        let worst = fields.iter().map(|u| interpolation_ratio(&op, &grid, u).unwrap()).fold(0.0, f64::max);
        println!("  M = {m:>4}  q = {:>5}  h = {:.4}  max ratio {worst:.4}", op.rank(), op.h());
    }
    Ok(())
}
