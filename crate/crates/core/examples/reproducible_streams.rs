//! Counter-based noise: every draw is a pure function of (seed, role,
//! member, step), so evaluation order and threading never change it.

use da_core::rng::{NoisePath, StreamKey, StreamRole};
use rayon::prelude::*;

fn main() {
    let path = NoisePath::new(42, StreamRole::ObservationNoise, 3, 0.01);
    let forward: Vec<f64> = (0..100).map(|j| path.increment(0, j)[0]).collect();
    let parallel: Vec<f64> = (0..100usize).into_par_iter().rev().map(|j| path.increment(0, j as u64)[0]).collect::<Vec<_>>().into_iter().rev().collect();
    println!("sequential and reversed parallel draws identical: {}", forward == parallel);

    // coarsening sums consecutive fine increments, so one Brownian path serves every step size
    let coarse = path.coarsened(4);
    let summed = (0..4).map(|j| path.increment(0, j)).fold(nalgebra::DVector::zeros(3), |a, b| a + b);
    println!("coarse increment equals the sum of four fine ones: {}", (coarse.increment(0, 0) - summed).norm() < 1e-12);

    for role in [StreamRole::ObservationNoise, StreamRole::FilterNoise] {
        let mut rng = StreamKey::new(42, role, 0, 0).rng();
        let x: f64 = rand::Rng::random(&mut rng);
        println!("{role:?} first uniform: {x:.6}");
    }
}
