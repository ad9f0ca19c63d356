use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Square 2D complex FFT built from row transforms and transposes.
///
/// Plans are immutable and shared; scratch space is kept per thread.
#[derive(Clone)]
pub struct Fft2 {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("n", &self.n).finish()
    }
}

impl Fft2 {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, forward: planner.plan_fft_forward(n), inverse: planner.plan_fft_inverse(n) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Unnormalized forward transform: X_k = Σ_j x_j e^{-2πi k·j/n}.
    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(&self.forward, data);
    }

    /// Unnormalized inverse transform: x_j = Σ_k X_k e^{+2πi k·j/n}.
    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(&self.inverse, data);
    }

    fn run(&self, plan: &Arc<dyn Fft<f64>>, data: &mut [Complex64]) {
        let n = self.n;
        assert_eq!(data.len(), n * n, "Fft2 buffer has wrong length");
        SCRATCH.with(|cell| {
            let mut scratch = cell.borrow_mut();
            let len = plan.get_inplace_scratch_len();
            if scratch.len() < len {
                scratch.resize(len, Complex64::new(0.0, 0.0));
            }
            plan.process_with_scratch(data, &mut scratch[..len]);
            transpose(data, n);
            plan.process_with_scratch(data, &mut scratch[..len]);
            transpose(data, n);
        })
    }
}

thread_local! {
    static SCRATCH: std::cell::RefCell<Vec<Complex64>> = const { std::cell::RefCell::new(Vec::new()) };
}

fn transpose(data: &mut [Complex64], n: usize) {
    for i in 0..n {
        for j in (i + 1)..n {
            data.swap(i * n + j, j * n + i);
        }
    }
}
