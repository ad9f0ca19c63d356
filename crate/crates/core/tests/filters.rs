use da_core::covariance::{ensemble_cov, CovarianceOperator, InflationSpec};
use da_core::dynamics::{DissipativeSystem, Lorenz63, Lorenz96, NavierStokes2d, Propagator, Stepper};
use da_core::filters::{
    continuum_consistency, enkf_analysis, ensrkf_analysis, forecast_error, inflation_damping, kalman_gain, kalman_update, run_replicas,
    square_root_residual, step_3dvar, step_3dvar_error, step_ensemble_error, step_enkf, step_ensrkf, step_nudging, DivergenceGuard,
    Filter, ReplicaRun, Streams, TwinSetup,
};
use da_core::observations::ObservationOperator;
use da_core::rng::{standard_normal, StreamKey, StreamRole};
use da_core::spectral::{RandomSpectrum, SpectralGrid};
use da_core::Error;
use nalgebra::{DMatrix, DVector};

/// dx = (−νx + f)dt: linear, no quadratic term.
struct Linear {
    nu: f64,
    f: f64,
    dim: usize,
}

impl DissipativeSystem for Linear {
    fn dim(&self) -> usize {
        self.dim
    }
    fn label(&self) -> String {
        "linear".into()
    }
    fn viscosity(&self) -> f64 {
        self.nu
    }
    fn linear(&self, v: &DVector<f64>) -> DVector<f64> {
        v * self.nu
    }
    fn bilinear(&self, _u: &DVector<f64>, _v: &DVector<f64>) -> DVector<f64> {
        DVector::zeros(self.dim)
    }
    fn forcing(&self, _t: f64) -> DVector<f64> {
        DVector::from_element(self.dim, self.f)
    }
    fn propagator(&self, dt: f64) -> Propagator {
        Propagator::Diagonal(DVector::from_element(self.dim, (-self.nu * dt).exp()))
    }
}

fn gauss(seed: u64, member: u64, dim: usize) -> DVector<f64> {
    standard_normal(StreamKey::new(seed, StreamRole::Auxiliary, member, 0), dim)
}

fn nse(n: usize) -> NavierStokes2d {
    NavierStokes2d::kolmogorov(SpectralGrid::periodic(n).unwrap(), 0.05, 40.0, 2).unwrap()
}

fn nse_state(sys: &NavierStokes2d, seed: u64, amp: f64) -> DVector<f64> {
    let mut rng = StreamKey::new(seed, StreamRole::Auxiliary, 0, 0).rng();
    RandomSpectrum { slope: 2.0, k2_cut: 40 }.coords(sys.grid(), &mut rng) * amp
}

#[test]
fn zero_covariance_reproduces_the_truth_exactly() {
    let sys = nse(32);
    let op = ObservationOperator::modal(sys.grid(), 10).unwrap();
    let stepper = Stepper::new(&sys, 0.01).unwrap();
    let mut u = nse_state(&sys, 1, 1.0);
    let mut m = u.clone();
    let c = CovarianceOperator::zero(sys.dim());
    for j in 0..20 {
        let t = j as f64 * 0.01;
        let dw = gauss(2, j, op.rank()) * 0.1;
        m = step_3dvar(&sys, &stepper, &op, t, &m, &c, 0.5, &op.observe(&u).unwrap(), &dw).unwrap();
        u = stepper.step(&sys, t, &u, None).unwrap();
        assert_eq!(m, u);
    }
}

#[test]
fn collapsed_ensemble_without_inflation_runs_free_forecasts() {
    let sys = Lorenz96::new(12, 8.0);
    let op = ObservationOperator::strided(12, 2, 0).unwrap();
    let stepper = Stepper::new(&sys, 0.01).unwrap();
    let m0 = gauss(3, 0, 12);
    let members = vec![m0.clone(); 4];
    let obs = DVector::from_element(op.rank(), 3.0);
    let dw = gauss(4, 0, op.rank());
    let db: Vec<_> = (0..4).map(|k| gauss(5, k, op.rank())).collect();
    let free = stepper.forecast(&sys, 0.0, &m0);
    let none = InflationSpec::default();
    for m in step_enkf(&sys, &stepper, &op, 0.0, &members, 0.3, &none, &obs, &dw, &db).unwrap() {
        assert_eq!(m, free);
    }
    for m in step_ensrkf(&sys, &stepper, &op, 0.0, &members, 0.3, &none, &obs, &dw).unwrap() {
        assert_eq!(m, free);
    }
}

#[test]
fn collapsed_square_root_drift_matches_3dvar_form() {
    // with additive inflation a collapsed ensemble has C_eff = μP, and the two
    // half-weighted drift terms combine into the 3DVar drift with C = μP
    let sys = Lorenz96::new(10, 8.0);
    let op = ObservationOperator::strided(10, 2, 1).unwrap();
    let stepper = Stepper::new(&sys, 0.005).unwrap();
    let m0 = gauss(6, 0, 10);
    let members = vec![m0.clone(); 3];
    let obs = gauss(7, 0, op.rank());
    let dw = gauss(8, 0, op.rank()) * 0.07;
    let mu = 0.8;
    let ens = step_ensrkf(&sys, &stepper, &op, 0.0, &members, 0.4, &InflationSpec::c_mu(mu), &obs, &dw).unwrap();
    let c = da_core::covariance::inflate(&CovarianceOperator::zero(10), &InflationSpec::c_mu(mu), op.kernel_projector()).unwrap();
    let single = step_3dvar(&sys, &stepper, &op, 0.0, &m0, &c, 0.4, &obs, &dw).unwrap();
    for m in ens {
        assert!((m - &single).amax() < 1e-14);
    }
}

#[test]
fn three_dvar_error_equation_matches_state_update() {
    let sys = nse(32);
    let op = ObservationOperator::modal(sys.grid(), 20).unwrap();
    let stepper = Stepper::new(&sys, 0.01).unwrap();
    let cov = CovarianceOperator::background(0.3, &op).unwrap();
    let mut u = nse_state(&sys, 11, 2.0);
    let mut m = &u + nse_state(&sys, 12, 0.5);
    let mut e = &m - &u;
    for j in 0..10u64 {
        let t = j as f64 * 0.01;
        let dw = gauss(13, j, op.rank()) * 0.1;
        m = step_3dvar(&sys, &stepper, &op, t, &m, &cov, 0.2, &op.observe(&u).unwrap(), &dw).unwrap();
        let direct = step_3dvar_error(&sys, &stepper, &op, t, &u, &e, &cov, 0.2, &dw).unwrap();
        u = stepper.forecast(&sys, t, &u);
        let from_states = &m - &u;
        assert!((&direct - &from_states).norm() < 1e-12 * from_states.norm(), "step {j}");
        e = from_states;
    }
    // the error forecast alone is the difference of forecasts
    let w = nse_state(&sys, 14, 0.3);
    let diff = stepper.forecast(&sys, 0.0, &(&u + &w)) - stepper.forecast(&sys, 0.0, &u);
    assert!((forecast_error(&sys, &stepper, 0.0, &u, &w) - &diff).norm() < 1e-12 * diff.norm());
}

#[test]
fn ensemble_error_equations_match_member_updates() {
    let sys = Lorenz96::new(20, 8.0);
    let op = ObservationOperator::strided(20, 2, 0).unwrap();
    let stepper = Stepper::new(&sys, 0.005).unwrap();
    let u = gauss(20, 0, 20) * 3.0;
    let members: Vec<_> = (0..6).map(|k| &u + gauss(21, k, 20)).collect();
    let errors: Vec<_> = members.iter().map(|m| m - &u).collect();
    // the covariance of the members equals that of the errors
    let cm = ensemble_cov(&members).unwrap().to_dense();
    let ce = ensemble_cov(&errors).unwrap().to_dense();
    assert!((&cm - &ce).amax() < 1e-12 * cm.amax());
    let obs = op.observe(&u).unwrap();
    let dw = gauss(22, 0, op.rank()) * 0.07;
    let db: Vec<_> = (0..6).map(|k| gauss(23, k, op.rank()) * 0.07).collect();
    let u1 = stepper.forecast(&sys, 0.0, &u);
    for inflation in [InflationSpec::default(), InflationSpec::c_mu(0.5), InflationSpec { additive: 0.1, multiplicative: 1.2, localize: false }] {
        let filters = [Filter::enkf(0.3, inflation).unwrap(), Filter::ensrkf(0.3, inflation).unwrap()];
        for f in &filters {
            let next = f.step(&sys, &stepper, &op, 0.0, &members, &obs, &dw, &db).unwrap();
            let direct = step_ensemble_error(&sys, &stepper, &op, f, 0.0, &u, &errors, &dw, &db).unwrap();
            for (m, e) in next.iter().zip(&direct) {
                let want = m - &u1;
                assert!((e - &want).norm() < 1e-12 * want.norm(), "{:?}", f.kind());
            }
        }
    }
}

#[test]
fn scalar_ou_moments_match_closed_form() {
    // de = −(ν + c/σ²)e dt + (c/σ)dW: mean e₀e^{−at}, variance b²(1 − e^{−2at})/(2a)
    let sys = Linear { nu: 1.0, f: 0.5, dim: 1 };
    let op = ObservationOperator::coordinates(1, vec![0]).unwrap();
    let (c, sigma, dt, steps) = (0.5, 0.5, 1e-3, 1000usize);
    let cov = CovarianceOperator::diagonal(DVector::from_element(1, c)).unwrap();
    let stepper = Stepper::new(&sys, dt).unwrap();
    let (a, b) = (sys.nu + c / (sigma * sigma), c / sigma);
    let t = dt * steps as f64;
    let e0 = 2.0;
    let paths = 4000;
    let mut finals = Vec::with_capacity(paths);
    for p in 0..paths {
        let mut u = DVector::from_element(1, 0.3);
        let mut m = DVector::from_element(1, 0.3 + e0);
        for j in 0..steps {
            let dw = standard_normal(StreamKey::new(99, StreamRole::ObservationNoise, p as u64, j as u64), 1) * dt.sqrt();
            m = step_3dvar(&sys, &stepper, &op, 0.0, &m, &cov, sigma, &op.observe(&u).unwrap(), &dw).unwrap();
            u = stepper.forecast(&sys, 0.0, &u);
        }
        finals.push(m[0] - u[0]);
    }
    let mean = finals.iter().sum::<f64>() / paths as f64;
    let var = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (paths - 1) as f64;
    let want_mean = e0 * (-a * t).exp();
    let want_var = b * b * (1.0 - (-2.0 * a * t).exp()) / (2.0 * a);
    let se_mean = (want_var / paths as f64).sqrt();
    let se_var = want_var * (2.0 / paths as f64).sqrt();
    // Monte Carlo error plus the O(dt) discretization bias
    assert!((mean - want_mean).abs() < 3.0 * se_mean + 5.0 * a * dt * want_mean.abs(), "{mean} vs {want_mean}");
    assert!((var - want_var).abs() < 3.0 * se_var + 5.0 * a * dt * want_var, "{var} vs {want_var}");
}

#[test]
fn three_dvar_with_scaled_identity_is_nudging() {
    let sys = Lorenz63::default();
    let op = ObservationOperator::coordinates(3, vec![0, 2]).unwrap();
    let stepper = Stepper::new(&sys, 0.002).unwrap();
    let (c, sigma) = (0.6, 0.4);
    let cov = CovarianceOperator::diagonal(DVector::from_element(3, c)).unwrap();
    let mu = c / (sigma * sigma);
    let mut u = DVector::from_vec(vec![1.0, 2.0, -20.0]);
    let mut a = DVector::from_vec(vec![-3.0, 0.0, -10.0]);
    let mut b = a.clone();
    for j in 0..500u64 {
        let t = j as f64 * 0.002;
        let dw = standard_normal(StreamKey::new(5, StreamRole::ObservationNoise, 0, j), 2) * 0.002f64.sqrt();
        let obs = op.observe(&u).unwrap();
        a = step_3dvar(&sys, &stepper, &op, t, &a, &cov, sigma, &obs, &dw).unwrap();
        b = step_nudging(&sys, &stepper, &op, t, &b, mu, sigma, &obs, &dw).unwrap();
        u = stepper.forecast(&sys, t, &u);
        assert!((&a - &b).amax() < 1e-11 * (1.0 + a.amax()));
    }
}

#[test]
fn noiseless_full_nudging_decays_exponentially() {
    let sys = NavierStokes2d::kolmogorov(SpectralGrid::periodic(16).unwrap(), 0.1, 2.0, 1).unwrap();
    let op = ObservationOperator::modal_leading(sys.grid(), sys.dim()).unwrap();
    let dt = 0.01;
    let stepper = Stepper::new(&sys, dt).unwrap();
    let mu = 2.0;
    let mut u = nse_state(&sys, 31, 0.05);
    let mut m = &u + nse_state(&sys, 32, 0.5);
    let zero = DVector::zeros(op.rank());
    let e0 = (&m - &u).norm();
    let steps = 200;
    for j in 0..steps {
        let t = j as f64 * dt;
        m = step_nudging(&sys, &stepper, &op, t, &m, mu, 0.0, &op.observe(&u).unwrap(), &zero).unwrap();
        u = stepper.forecast(&sys, t, &u);
    }
    let rate = -((&m - &u).norm() / e0).ln() / (steps as f64 * dt);
    let floor = mu.min(sys.viscosity() * sys.lambda1()) / 2.0;
    assert!(rate >= floor, "rate {rate} below {floor}");
    assert!(matches!(Filter::nudging(0.0, 0.1), Err(Error::InvalidParameter(_))));
    assert!(step_nudging(&sys, &stepper, &op, 0.0, &m, -1.0, 0.0, &op.observe(&u).unwrap(), &zero).is_err());
}

#[test]
fn filters_require_positive_noise_level() {
    assert!(Filter::three_dvar(CovarianceOperator::zero(3), 0.0).is_err());
    assert!(Filter::enkf(-1.0, InflationSpec::default()).is_err());
    assert!(Filter::ensrkf(f64::NAN, InflationSpec::default()).is_err());
    assert!(Filter::nudging(1.0, 0.0).is_ok());
}

#[test]
fn kalman_update_scalar_hand_formula() {
    let (c, g, mhat, y) = (2.0, 0.5, 1.0, 3.0);
    let post = kalman_update(&DVector::from_element(1, mhat), &DMatrix::from_element(1, 1, c), &DMatrix::identity(1, 1), &DMatrix::from_element(1, 1, g), &DVector::from_element(1, y)).unwrap();
    let k = c / (c + g);
    assert!((post.gain[(0, 0)] - k).abs() < 1e-15);
    assert!((post.mean[0] - (mhat + k * (y - mhat))).abs() < 1e-15);
    assert!((post.cov[(0, 0)] - c * g / (c + g)).abs() < 1e-15);
}

#[test]
fn huge_observation_noise_leaves_prior_unchanged() {
    let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 2.0]);
    let o = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
    let post = kalman_update(&DVector::from_vec(vec![1.0, -1.0]), &c, &o, &DMatrix::from_element(1, 1, 1e14), &DVector::from_element(1, 50.0)).unwrap();
    assert!((post.mean - DVector::from_vec(vec![1.0, -1.0])).amax() < 1e-11);
    assert!((post.cov - &c).amax() < 1e-12);
}

#[test]
fn singular_innovation_is_reported_with_condition_number() {
    let c = DMatrix::zeros(2, 2);
    let o = DMatrix::identity(2, 2);
    let gamma = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
    match kalman_gain(&c, &o, &gamma) {
        Err(Error::LinearAlgebra { condition, .. }) => assert!(condition > 1e12),
        other => panic!("expected linear-algebra error, got {other:?}"),
    }
}

#[test]
fn square_root_transform_has_the_defining_property() {
    for seed in 0..20u64 {
        let (d, q, k) = (7, 3, 4);
        let members: Vec<_> = (0..k).map(|j| gauss(seed, j, d)).collect();
        let o = DMatrix::from_fn(q, d, |i, j| gauss(seed + 100, (i * d + j) as u64, 1)[0]);
        let l = DMatrix::from_fn(q, q, |i, j| if i >= j { 0.3 + gauss(seed + 200, (i * q + j) as u64, 1)[0].abs() } else { 0.0 });
        let gamma = &l * l.transpose() + DMatrix::identity(q, q) * 0.1;
        let y = gauss(seed + 300, 0, q);
        let a = ensrkf_analysis(&members, &o, &gamma, &y).unwrap();
        assert!(square_root_residual(&a, &o) < 1e-10);
        // the transform keeps anomalies centred
        let centred = a.members.iter().fold(DVector::zeros(d), |s, m| s + m) / k as f64;
        let post_mean = ensrkf_analysis(&members, &o, &gamma, &y).unwrap().gain * (&y - &o * (members.iter().fold(DVector::zeros(d), |s, m| s + m) / k as f64));
        let prior_mean = members.iter().fold(DVector::zeros(d), |s, m| s + m) / k as f64;
        assert!((centred - (prior_mean + post_mean)).amax() < 1e-12);
    }
}

#[test]
fn perturbed_observation_enkf_uses_the_kalman_gain() {
    let (d, q, k) = (5, 2, 6);
    let members: Vec<_> = (0..k).map(|j| gauss(40, j, d)).collect();
    let o = DMatrix::from_fn(q, d, |i, j| if j == 2 * i { 1.0 } else { 0.0 });
    let gamma = DMatrix::identity(q, q) * 0.2;
    let y = gauss(41, 0, q);
    let xi: Vec<_> = (0..k).map(|j| gauss(42, j, q) * 0.2f64.sqrt()).collect();
    let post = enkf_analysis(&members, &o, &gamma, &y, &xi, None).unwrap();
    let c = ensemble_cov(&members).unwrap().to_dense();
    let gain = kalman_gain(&c, &o, &gamma).unwrap();
    for j in 0..k as usize {
        let want = &members[j] + &gain * (&y + &xi[j] - &o * &members[j]);
        assert!((&post[j] - want).amax() < 1e-13);
    }
    assert!(matches!(enkf_analysis(&members[..1], &o, &gamma, &y, &xi[..1], None), Err(Error::DegenerateEnsemble(_))));
}

#[test]
fn damping_term_is_never_positive() {
    let g = SpectralGrid::periodic(8).unwrap();
    let op = ObservationOperator::modal(&g, 4).unwrap();
    for s in 0..10 {
        let errors: Vec<_> = (0..5).map(|k| gauss(s, k, g.dim())).collect();
        assert!(inflation_damping(&op, &errors, 0.7, 0.3) < 0.0);
    }
}

fn l63_setup_runs(seed: u64, replicas: &[u64]) -> Vec<ReplicaRun> {
    replicas
        .iter()
        .map(|&r| ReplicaRun { streams: Streams::new(seed, r), init: vec![DVector::from_vec(vec![5.0, 5.0, -10.0]) + gauss(seed, r, 3)] })
        .collect()
}

#[test]
fn replicas_are_deterministic_and_order_independent() {
    let sys = Lorenz63::default();
    let op = ObservationOperator::coordinates(3, vec![0, 1, 2]).unwrap();
    let filter = Filter::three_dvar(CovarianceOperator::diagonal(DVector::from_element(3, 0.5)).unwrap(), 0.5).unwrap();
    let setup = TwinSetup {
        sys: &sys,
        op: &op,
        filter: &filter,
        dt: 0.002,
        steps: 500,
        record_every: 10,
        t0: 0.0,
        truth0: DVector::from_vec(vec![1.0, 2.0, -25.0]),
        guard: DivergenceGuard::new(100.0),
    };
    let (a, truth_a) = run_replicas(&setup, l63_setup_runs(3, &[0, 1, 2])).unwrap();
    let (b, truth_b) = run_replicas(&setup, l63_setup_runs(3, &[0, 1, 2])).unwrap();
    let (c, _) = run_replicas(&setup, l63_setup_runs(3, &[2])).unwrap();
    assert_eq!(truth_a, truth_b);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.records, y.records);
        assert_eq!(x.members, y.members);
    }
    assert_eq!(a[2].records, c[0].records);
    assert_ne!(a[0].records, a[1].records);
    assert_eq!(a[0].records.len(), 51);
    assert!(a.iter().all(|o| o.failure.is_none()));
}

#[test]
fn divergence_is_recorded_without_stopping_other_replicas() {
    let sys = Lorenz63::default();
    let op = ObservationOperator::coordinates(3, vec![0]).unwrap();
    let filter = Filter::three_dvar(CovarianceOperator::diagonal(DVector::from_element(3, 0.1)).unwrap(), 1.0).unwrap();
    let setup = TwinSetup {
        sys: &sys,
        op: &op,
        filter: &filter,
        dt: 0.002,
        steps: 200,
        record_every: 1,
        t0: 0.0,
        truth0: DVector::from_vec(vec![1.0, 2.0, -25.0]),
        guard: DivergenceGuard { radius: 0.04, factor: 1e3 },
    };
    let runs = vec![
        ReplicaRun { streams: Streams::new(1, 0), init: vec![DVector::from_vec(vec![1.0, 2.0, -25.0])] },
        ReplicaRun { streams: Streams::new(1, 1), init: vec![DVector::from_vec(vec![1.0, 2.0, -45.0])] },
    ];
    let (out, _) = run_replicas(&setup, runs).unwrap();
    assert!(out[0].failure.is_none());
    assert!(out[1].diverged);
    assert_eq!(out[1].records.len(), 1);
    assert_eq!(out[0].records.len(), 201);
}

#[test]
fn discrete_filters_converge_to_continuous_limit_on_linear_system() {
    let sys = Linear { nu: 1.0, f: 0.3, dim: 2 };
    let op = ObservationOperator::coordinates(2, vec![0]).unwrap();
    let filter = Filter::three_dvar(CovarianceOperator::diagonal(DVector::from_vec(vec![0.5, 0.2])).unwrap(), 0.5).unwrap();
    let rep = continuum_consistency(&sys, &op, &filter, &DVector::from_vec(vec![0.0, 1.0]), &[DVector::from_vec(vec![1.0, -1.0])], 0.02, 4, 1.0, 17).unwrap();
    assert!(rep.monotone, "{:?}", rep.differences);
    assert!(rep.order > 0.8, "order {}", rep.order);
}

#[test]
fn three_dvar_continuum_consistency_on_lorenz63() {
    let sys = Lorenz63::default();
    let op = ObservationOperator::coordinates(3, vec![0, 1, 2]).unwrap();
    let filter = Filter::three_dvar(CovarianceOperator::diagonal(DVector::from_element(3, 1.0)).unwrap(), 0.5).unwrap();
    let u0 = DVector::from_vec(vec![1.0, 2.0, -25.0]);
    let rep = continuum_consistency(&sys, &op, &filter, &u0, &[DVector::from_vec(vec![3.0, 0.0, -20.0])], 0.004, 4, 1.0, 5).unwrap();
    assert!(rep.monotone, "{:?}", rep.differences);
    assert!(rep.order >= 0.5, "order {}", rep.order);
}
