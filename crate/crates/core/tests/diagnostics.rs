use da_core::covariance::CovarianceOperator;
use da_core::diagnostics::{
    calibrate_constants, check_conditions, enstrophy_average, finite_dimensional_constants, limsup_estimate, ou_bound_check, stability_check,
    tail_ratio, BoundKind, ConditionInputs, CorpusSpec,
};
use da_core::dynamics::{Lorenz63, Stepper};
use da_core::filters::{run_pairs, DivergenceGuard, Filter, PairRun, Streams, TwinSetup};
use da_core::observations::ObservationOperator;
use da_core::rng::{standard_normal, StreamKey, StreamRole};
use da_core::spectral::SpectralGrid;
use da_core::Error;
use nalgebra::DVector;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn modal_calibration_gives_unit_constants() {
    let g = SpectralGrid::periodic(16).unwrap();
    let op = ObservationOperator::modal(&g, 5).unwrap();
    let cal = calibrate_constants(&g, &op, CorpusSpec::new(500, 1)).unwrap();
    assert!(cal.c1 <= 1.0 + 1e-6 && cal.c1 > 0.99, "c1 = {}", cal.c1);
    assert!(cal.c2 <= 1.0 + 1e-6, "c2 = {}", cal.c2);
    assert!(cal.c_l.is_finite() && cal.c_l > 0.0);
    assert!(matches!(calibrate_constants(&g, &op, CorpusSpec::new(499, 1)), Err(Error::InvalidParameter(_))));
}

#[test]
fn eigenmode_tail_ratio_by_parseval() {
    let g = SpectralGrid::periodic(16).unwrap();
    let op = ObservationOperator::modal(&g, 5).unwrap();
    let q = op.rank();
    for i in [q, q + 3, q + 20] {
        let mut e = DVector::zeros(g.dim());
        e[i] = 1.0;
        let want = 1.0 / (op.h() * g.eigenvalue(i).sqrt());
        assert!(close(tail_ratio(&op, &g, &e).unwrap(), want, 1e-13));
        assert!(want <= 1.0 + 1e-14);
    }
    let mut e = DVector::zeros(g.dim());
    e[q] = 1.0;
    assert!(close(tail_ratio(&op, &g, &e).unwrap(), 1.0, 1e-13));
}

#[test]
fn ladyzhenskaya_constant_is_stable_across_corpora() {
    let g = SpectralGrid::periodic(32).unwrap();
    let op = ObservationOperator::modal(&g, 5).unwrap();
    let a = calibrate_constants(&g, &op, CorpusSpec::new(500, 11)).unwrap().c_l;
    let b = calibrate_constants(&g, &op, CorpusSpec::new(500, 12)).unwrap().c_l;
    println!("c_L: {a} {b}");
    assert!((a - b).abs() <= 0.1 * a.max(b));
}

#[test]
fn lorenz63_trilinear_constant() {
    let cal = finite_dimensional_constants(&Lorenz63::default(), 3);
    assert!(close(cal.c_l, 0.5, 1e-6), "c_L = {}", cal.c_l);
}

fn base_inputs() -> ConditionInputs {
    ConditionInputs {
        nu: 0.5,
        lambda1: 1.0,
        grashof: Some(2.0),
        sigma: 0.1,
        h: 0.2,
        beta: Some(0.02),
        mu: Some(0.01),
        q: 12,
        c1: Some(1.0),
        c2: Some(1.0),
        c_l: Some(0.5),
        m_u: Some(1.5),
        cross_norm: 0.001,
        trace_cihc: Some(0.0048),
        projection: true,
    }
}

#[test]
fn three_dvar_gamma_and_kappa_by_hand() {
    // β/σ² = 2, cross term = 1·1·0.04·1e-6/(1e-4·0.5) = 8e-4, forcing term = 0.25·0.5·4 = 0.5
    let r = check_conditions(BoundKind::ThreeDVar, &base_inputs()).unwrap();
    assert!(close(r.gamma, 4.0 - 1.6e-3 - 1.0, 1e-12));
    assert!(close(r.kappa, 0.25 - 2.0 * 0.02 * 0.04 / 0.01, 1e-12));
    assert!(close(r.bound.unwrap(), 0.0048 / (r.gamma * 0.01), 1e-12));
    // upper limit ν/(4c₂²h²) = 3.125 ≥ 2
    assert!(r.flags["beta_upper"] && r.flags["beta_lower"] && r.flags["gamma_positive"]);
    assert!(r.guaranteed);
    let loc = check_conditions(BoundKind::ThreeDVarLocalized, &base_inputs()).unwrap();
    assert!(close(loc.gamma, 2.0 * 2.0 - 2.0 * 0.5, 1e-12));
    assert!(close(loc.kappa, 0.5 - 2.0 * 0.02 * 0.04 / 0.01, 1e-12));
    assert!(close(loc.epsilon, 0.04, 1e-15));
}

#[test]
fn ensemble_gamma_and_kappa_by_hand() {
    // μ/σ² = 1, c_L²M²/ν = 0.25·2.25/0.5 = 1.125
    let enkf = check_conditions(BoundKind::Enkf, &base_inputs()).unwrap();
    assert!(close(enkf.gamma, 1.5 - 1.125, 1e-12));
    assert!(close(enkf.kappa, 0.5 - 1.5 * 0.04, 1e-12));
    assert!(close(enkf.bound.unwrap(), 1e-4 * 12.0 / (enkf.gamma * 0.01), 1e-12));
    assert!(enkf.flags["inflation_lower"]);
    let ensrkf = check_conditions(BoundKind::Ensrkf, &base_inputs()).unwrap();
    assert!(close(ensrkf.gamma, 0.5 - 1.125, 1e-12));
    assert!(!ensrkf.flags["gamma_positive"] && !ensrkf.guaranteed);
    assert!(ensrkf.bound.is_none());
}

#[test]
fn inflation_at_threshold_makes_gamma_vanish() {
    let mut i = base_inputs();
    let (s2, c_l2, m2, nu) = (0.01, 0.25, 2.25, 0.5);
    i.mu = Some(2.0 / 3.0 * c_l2 * s2 * m2 / nu);
    let r = check_conditions(BoundKind::Enkf, &i).unwrap();
    assert!(r.gamma.abs() < 1e-12, "γ = {}", r.gamma);
    assert!(!r.guaranteed);
    i.mu = Some(2.0 * c_l2 * s2 * m2 / nu);
    let r = check_conditions(BoundKind::Ensrkf, &i).unwrap();
    assert!(r.gamma.abs() < 1e-12);
    // above threshold: γ = (μ − μ*)·(3/2)/σ² > 0
    i.mu = Some(2.0 / 3.0 * c_l2 * s2 * m2 / nu * 1.5);
    let r = check_conditions(BoundKind::Enkf, &i).unwrap();
    assert!(r.gamma > 0.0 && r.flags["inflation_lower"]);
}

#[test]
fn growing_noise_eventually_violates_the_lower_condition() {
    let mut i = base_inputs();
    let mut last = true;
    for s in [0.05, 0.1, 0.2, 0.4, 0.8] {
        i.sigma = s;
        let ok = check_conditions(BoundKind::ThreeDVarLocalized, &i).unwrap().flags["beta_lower"];
        assert!(last || !ok, "flag must stay false once violated");
        last = ok;
    }
    assert!(!last);
}

#[test]
fn missing_constants_are_reported() {
    let mut i = base_inputs();
    i.c_l = None;
    assert!(matches!(check_conditions(BoundKind::Enkf, &i), Err(Error::MissingCalibration(_))));
    let mut i = base_inputs();
    i.grashof = None;
    i.m_u = None;
    assert!(matches!(check_conditions(BoundKind::ThreeDVar, &i), Err(Error::MissingCalibration(_))));
    // without G the effective value M_u/(ν√λ₁) is used
    let mut i = base_inputs();
    i.grashof = None;
    assert!(close(check_conditions(BoundKind::ThreeDVar, &i).unwrap().grashof_used, 3.0, 1e-15));
}

#[test]
fn limsup_of_simple_series() {
    assert!(close(limsup_estimate(&vec![2.5; 400]).unwrap().limsup, 2.5, 1e-15));
    let decaying: Vec<f64> = (0..1000).map(|i| (-(i as f64) * 0.05).exp() + 0.3).collect();
    let est = limsup_estimate(&decaying).unwrap();
    assert!((est.limsup - 0.3).abs() < 1e-9);
    assert!(matches!(limsup_estimate(&[1.0; 199]), Err(Error::SeriesTooShort { len: 199, min: 200 })));
}

#[test]
fn limsup_of_squared_ou_series() {
    // x_{n+1} = a x_n + √(1 − a²) s ξ: stationary E x² = s²
    let (a, s, n) = (0.9f64, 1.5f64, 200_000usize);
    let z = standard_normal(StreamKey::new(4, StreamRole::Auxiliary, 0, 0), n);
    let mut x = 0.0;
    let series: Vec<f64> = z
        .iter()
        .map(|zi| {
            x = a * x + (1.0 - a * a).sqrt() * s * zi;
            x * x
        })
        .collect();
    let est = limsup_estimate(&series).unwrap();
    let var_sq = 2.0 * s.powi(4) * (1.0 + a * a) / (1.0 - a * a);
    let se_tail = (var_sq / (n / 2) as f64).sqrt();
    let se_window = (var_sq / est.window as f64).sqrt();
    assert!((est.tail_mean - s * s).abs() < 3.0 * se_tail, "{} vs {}", est.tail_mean, s * s);
    assert!(est.limsup >= est.tail_mean && est.limsup - s * s < 3.0 * se_window);
}

#[test]
fn ou_process_with_zero_covariance_stays_at_rest() {
    let g = SpectralGrid::periodic(8).unwrap();
    let op = ObservationOperator::modal(&g, 2).unwrap();
    let eig = DVector::from_fn(g.dim(), |i, _| g.eigenvalue(i));
    let r = ou_bound_check(&eig, 1.0, &CovarianceOperator::zero(g.dim()), &op, 0.5, 16, 1.0, 0.01, 1).unwrap();
    assert_eq!(r.estimate, 0.0);
    assert!(r.pass);
}

#[test]
fn single_mode_ou_matches_stationary_variance() {
    let g = SpectralGrid::periodic(8).unwrap();
    let op = ObservationOperator::modal_leading(&g, 1).unwrap();
    let eig = DVector::from_fn(g.dim(), |i, _| g.eigenvalue(i));
    let (c, nu, sigma, horizon) = (0.8, 0.5, 0.3, 10.0);
    let cov = CovarianceOperator::background(c, &op).unwrap();
    let r = ou_bound_check(&eig, nu, &cov, &op, sigma, 4000, horizon, 0.01, 2).unwrap();
    let lam = g.eigenvalue(0);
    // σ²·λ·Var(z) with Var(z) = c²/(2νλσ²)·(1 − e^{−2νλT})
    let want = c * c / (2.0 * nu) * (1.0 - (-2.0 * nu * lam * horizon).exp());
    assert!((r.estimate - want).abs() < 3.0 * r.std_error, "{} vs {want} ± {}", r.estimate, r.std_error);
    assert!(close(r.bound, c * c / (2.0 * nu), 1e-12));
    assert!(r.pass);
}

#[test]
fn stability_requires_shared_noise_and_detects_chaos() {
    assert!(matches!(stability_check((&1u64, &2u64), &[0.0; 300], &[0.0; 300], None), Err(Error::InvalidComparison(_))));
    let sys = Lorenz63::default();
    let op = ObservationOperator::coordinates(3, vec![0, 1, 2]).unwrap();
    let filter = Filter::three_dvar(CovarianceOperator::zero(3), 0.5).unwrap();
    let setup = TwinSetup {
        sys: &sys,
        op: &op,
        filter: &filter,
        dt: 0.002,
        steps: 10_000,
        record_every: 20,
        t0: 0.0,
        truth0: DVector::from_vec(vec![1.0, 2.0, -25.0]),
        guard: DivergenceGuard::new(100.0),
    };
    let a = DVector::from_vec(vec![1.0, 2.0, -25.0]);
    let pairs = vec![
        PairRun { streams: Streams::new(1, 0), first: vec![a.clone()], second: vec![a.clone()] },
        PairRun { streams: Streams::new(1, 1), first: vec![a.clone()], second: vec![&a + DVector::from_vec(vec![1e-6, 0.0, 0.0])] },
    ];
    let out = run_pairs(&setup, pairs).unwrap();
    assert!(out[0].distance2.iter().all(|&d| d == 0.0));
    let rep = stability_check((&out[1].streams, &out[1].streams), &out[1].times, &out[1].distance2, None).unwrap();
    assert!(rep.rate <= 0.0, "uncoupled chaotic runs must not contract (rate {})", rep.rate);
    assert!(rep.tail.tail_mean > 1.0);
    let _ = Stepper::new(&sys, 0.01).unwrap();
}

#[test]
fn enstrophy_average_of_constant_series() {
    let t: Vec<f64> = (0..=100).map(|i| i as f64 * 0.1).collect();
    let v = vec![3.0; 101];
    assert!(close(enstrophy_average(&t, &v, 0.5, 5.0), 1.5, 1e-12));
}
