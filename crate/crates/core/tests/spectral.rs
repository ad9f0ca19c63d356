use std::f64::consts::PI;

use da_core::rng::{StreamKey, StreamRole};
use da_core::spectral::io::{read_field, write_field, FieldJson};
use da_core::spectral::{Phase, RandomSpectrum, SpectralField, SpectralGrid};
use proptest::prelude::*;

fn grid_points(n: usize, l: f64) -> impl Iterator<Item = (usize, f64, f64)> {
    let h = l / n as f64;
    (0..n * n).map(move |j| (j, (j % n) as f64 * h, (j / n) as f64 * h))
}

fn random_field(grid: &std::sync::Arc<SpectralGrid>, seed: u64) -> SpectralField {
    let mut rng = StreamKey::new(seed, StreamRole::Auxiliary, 0, 0).rng();
    RandomSpectrum { slope: 1.5, k2_cut: i64::MAX }.field(grid, &mut rng)
}

#[test]
fn leray_removes_gradient_part_by_hand() {
    let g = SpectralGrid::periodic(32).unwrap();
    let n = g.n();
    let mut f = [vec![0.0; n * n], vec![0.0; n * n]];
    let mut want = [vec![0.0; n * n], vec![0.0; n * n]];
    for (j, x, y) in grid_points(n, g.length()) {
        // (sin y, sin x) + ∇(sin x sin y)
        f[0][j] = y.sin() + x.cos() * y.sin();
        f[1][j] = x.sin() + x.sin() * y.cos();
        want[0][j] = y.sin();
        want[1][j] = x.sin();
    }
    let p = SpectralField::from_grid(&g, [&f[0], &f[1]]).unwrap().leray_project().unwrap();
    let vals = p.to_grid();
    for c in 0..2 {
        for j in 0..n * n {
            assert!((vals[c][j] - want[c][j]).abs() < 1e-12);
        }
    }
}

#[test]
fn leray_kills_gradients_and_fixes_solenoidal_fields() {
    let g = SpectralGrid::periodic(32).unwrap();
    let n = g.n();
    let mut f = [vec![0.0; n * n], vec![0.0; n * n]];
    for (j, x, y) in grid_points(n, g.length()) {
        // ∇(cos(2x + y) + sin(3y))
        f[0][j] = -2.0 * (2.0 * x + y).sin();
        f[1][j] = -(2.0 * x + y).sin() + 3.0 * (3.0 * y).cos();
    }
    let p = SpectralField::from_grid(&g, [&f[0], &f[1]]).unwrap().leray_project().unwrap();
    assert!(p.norm_h() < 1e-12);

    let u = random_field(&g, 1);
    let pu = u.leray_project().unwrap();
    assert!(pu.sub(&u).unwrap().norm_h() < 1e-12 * u.norm_h());
}

#[test]
fn leray_rejects_non_finite_input() {
    let g = SpectralGrid::periodic(16).unwrap();
    let mut v = vec![0.0; 256];
    v[3] = f64::NAN;
    assert!(SpectralField::from_grid(&g, [&v, &v]).is_err());
}

#[test]
fn eigenmodes_have_expected_norms_and_stokes_action() {
    let g = SpectralGrid::periodic(32).unwrap();
    for &(kx, ky) in &[(1, 0), (0, 1), (2, -3), (5, 4)] {
        for phase in [Phase::Cos, Phase::Sin] {
            let e = SpectralField::eigenmode(&g, kx, ky, phase).unwrap();
            let lam = (kx * kx + ky * ky) as f64;
            assert!((e.norm_h() - 1.0).abs() < 1e-14);
            assert!((e.norm_v() - lam.sqrt()).abs() < 1e-12);
            let ae = e.stokes_apply();
            assert!(ae.sub(&e.scaled(lam)).unwrap().norm_h() < 1e-12);
        }
    }
    let z = SpectralField::zeros(&g);
    assert_eq!(z.norm_h(), 0.0);
    assert_eq!(z.norm_v(), 0.0);
    assert_eq!(z.stokes_apply().norm_h(), 0.0);
}

#[test]
fn stokes_quadratic_form_matches_finite_difference_gradient() {
    let g = SpectralGrid::periodic(128).unwrap();
    let mut rng = StreamKey::new(3, StreamRole::Auxiliary, 0, 0).rng();
    let u = RandomSpectrum { slope: 1.0, k2_cut: 16 }.field(&g, &mut rng);
    let vals = u.to_grid();
    let n = g.n();
    let h = g.length() / n as f64;
    let at = |c: usize, ix: isize, iy: isize| {
        let n = n as isize;
        vals[c][(iy.rem_euclid(n) * n + ix.rem_euclid(n)) as usize]
    };
    // fourth-order central differences
    let d = |c: usize, ix: isize, iy: isize, dx: isize, dy: isize| {
        (-at(c, ix + 2 * dx, iy + 2 * dy) + 8.0 * at(c, ix + dx, iy + dy) - 8.0 * at(c, ix - dx, iy - dy)
            + at(c, ix - 2 * dx, iy - 2 * dy))
            / (12.0 * h)
    };
    let mut grad2 = 0.0;
    for iy in 0..n as isize {
        for ix in 0..n as isize {
            for c in 0..2 {
                grad2 += d(c, ix, iy, 1, 0).powi(2) + d(c, ix, iy, 0, 1).powi(2);
            }
        }
    }
    grad2 *= h * h;
    let au_u = u.stokes_apply().inner(&u);
    assert!((au_u - grad2).abs() < 1e-4 * au_u, "{au_u} vs {grad2}");
    assert!((au_u - u.norm_v().powi(2)).abs() < 1e-12 * au_u);
}

#[test]
fn shear_mode_does_not_self_advect() {
    let g = SpectralGrid::periodic(32).unwrap();
    // (0, sin x) up to normalisation is the sine mode of k = (1, 0).
    let u = SpectralField::eigenmode(&g, 1, 0, Phase::Sin).unwrap();
    let vals = u.to_grid();
    for (j, x, _) in grid_points(g.n(), g.length()) {
        assert!(vals[0][j].abs() < 1e-15);
        assert!((vals[1][j] - (2.0f64).sqrt() / (2.0 * PI) * x.sin()).abs() < 1e-14);
    }
    assert!(u.bilinear(&u).unwrap().norm_h() < 1e-14);
}

#[test]
fn bilinear_matches_direct_grid_product() {
    // Oracle: evaluate (u·∇)v on a fine grid from analytic derivatives of
    // the collocation interpolant, then project.
    let g = SpectralGrid::periodic(32).unwrap();
    let u = random_field(&g, 4);
    let v = random_field(&g, 5);
    let fine = SpectralGrid::periodic(96).unwrap();
    let lift = |f: &SpectralField| {
        let vals = f.to_padded_grid(96).unwrap();
        SpectralField::from_grid(&fine, [&vals[0], &vals[1]]).unwrap()
    };
    let (uf, vf) = (lift(&u), lift(&v));
    let ug = uf.to_grid();
    let n = fine.n();
    let mut prod = [vec![0.0; n * n], vec![0.0; n * n]];
    for c in 0..2 {
        // derivatives of v_c by spectral multiplication on the fine grid
        let dx = SpectralField::from_fn(&fine, |kx, ky| {
            let z = vf.components()[c][fine.index(kx, ky)];
            let d = num_complex::Complex64::new(0.0, kx as f64) * z;
            (d, num_complex::Complex64::new(0.0, 0.0))
        })
        .to_grid();
        let dy = SpectralField::from_fn(&fine, |kx, ky| {
            let z = vf.components()[c][fine.index(kx, ky)];
            let d = num_complex::Complex64::new(0.0, ky as f64) * z;
            (d, num_complex::Complex64::new(0.0, 0.0))
        })
        .to_grid();
        for j in 0..n * n {
            prod[c][j] = ug[0][j] * dx[0][j] + ug[1][j] * dy[0][j];
        }
    }
    let direct = SpectralField::from_grid(&fine, [&prod[0], &prod[1]]).unwrap().leray_project().unwrap();
    let b = u.bilinear(&v).unwrap();
    // compare coefficients on the coarse truncation
    let k = g.k_max();
    let mut err = 0.0f64;
    for ky in -k..=k {
        for kx in -k..=k {
            for c in 0..2 {
                let a = b.components()[c][g.index(kx, ky)];
                let d = direct.components()[c][fine.index(kx, ky)];
                err = err.max((a - d).norm());
            }
        }
    }
    let scale = b.components()[0].iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(err < 1e-12 * scale.max(1.0), "err {err}");
}

#[test]
fn parseval_and_poincare() {
    let g = SpectralGrid::periodic(64).unwrap();
    for seed in 0..5 {
        let u = random_field(&g, 10 + seed);
        let vals = u.to_grid();
        let n = g.n();
        let h2 = (g.length() / n as f64).powi(2);
        let grid_l2 = (vals[0].iter().chain(&vals[1]).map(|x| x * x).sum::<f64>() * h2).sqrt();
        assert!((grid_l2 - u.norm_h()).abs() < 1e-10 * u.norm_h());
        assert!(u.norm_h() <= u.norm_v() / g.lambda1().sqrt());
        assert!(u.divergence_residual() < 1e-12);
        assert!(u.reality_residual() < 1e-15);
        assert_eq!(u.mean(), [num_complex::Complex64::new(0.0, 0.0); 2]);
    }
}

#[test]
fn coordinates_round_trip() {
    let g = SpectralGrid::periodic(32).unwrap();
    let u = random_field(&g, 2);
    let c = u.to_coords();
    assert!((c.norm() - u.norm_h()).abs() < 1e-12 * c.norm());
    let back = SpectralField::from_coords(&g, c.as_slice()).unwrap();
    assert!(back.max_abs_diff(&u) < 1e-15);
}

#[test]
fn binary_and_json_serialization_are_lossless() {
    let g = SpectralGrid::periodic(16).unwrap();
    let u = random_field(&g, 9);
    let mut buf = Vec::new();
    write_field(&mut buf, &u).unwrap();
    let back = read_field(buf.as_slice()).unwrap();
    assert_eq!(back.max_abs_diff(&u), 0.0);
    let js = serde_json::to_string(&FieldJson::from_field(&u)).unwrap();
    let back: FieldJson = serde_json::from_str(&js).unwrap();
    assert_eq!(back.to_field().unwrap().max_abs_diff(&u), 0.0);
    assert!(read_field(&b"NOTFIELD"[..]).is_err());
}

#[test]
fn ladyzhenskaya_ratio_is_bounded_on_random_fields() {
    let g = SpectralGrid::periodic(32).unwrap();
    let mut worst = 0.0f64;
    for seed in 0..200 {
        let u = random_field(&g, 100 + seed);
        worst = worst.max(u.norm_l4().powi(2) / (u.norm_h() * u.norm_v()));
    }
    // the sharp constant for this inequality on the torus is below 1
    assert!(worst.is_finite() && worst < 1.0, "{worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn nonlinearity_conserves_energy(s1 in 0u64..1_000_000, s2 in 0u64..1_000_000, s3 in 0u64..1_000_000) {
        let g = SpectralGrid::periodic(32).unwrap();
        let (u, v, z) = (random_field(&g, s1), random_field(&g, s2), random_field(&g, s3));
        let buv = u.bilinear(&v).unwrap();
        let scale = buv.norm_h() * v.norm_h();
        prop_assert!(buv.inner(&v).abs() <= 1e-10 * scale);
        let lhs = buv.inner(&z);
        let rhs = -u.bilinear(&z).unwrap().inner(&v);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * scale.max(lhs.abs()));
        let buu = u.bilinear(&u).unwrap();
        prop_assert!(buu.inner(&u).abs() <= 1e-10 * u.norm_h() * u.norm_v().powi(2));
        prop_assert!(buv.divergence_residual() < 1e-12);
    }

    #[test]
    fn leray_is_idempotent_and_orthogonal(s in 0u64..1_000_000) {
        let g = SpectralGrid::periodic(16).unwrap();
        let n = g.n();
        let mut rng = StreamKey::new(s, StreamRole::Auxiliary, 1, 0).rng();
        let mut f = [vec![0.0; n * n], vec![0.0; n * n]];
        da_core::rng::fill_standard_normal(&mut rng, &mut f[0]);
        da_core::rng::fill_standard_normal(&mut rng, &mut f[1]);
        let raw = SpectralField::from_grid(&g, [&f[0], &f[1]]).unwrap();
        let p = raw.leray_project().unwrap();
        let pp = p.leray_project().unwrap();
        prop_assert!(pp.max_abs_diff(&p) < 1e-15);
        let w = random_field(&g, s + 1);
        let a = p.inner(&w);
        let b = raw.inner(&w);
        prop_assert!((a - b).abs() < 1e-12 * raw.norm_h() * w.norm_h());
    }

    #[test]
    fn stokes_is_self_adjoint(s in 0u64..1_000_000) {
        let g = SpectralGrid::periodic(32).unwrap();
        let (u, v) = (random_field(&g, s), random_field(&g, s + 7));
        let a = u.stokes_apply().inner(&v);
        let b = u.inner(&v.stokes_apply());
        prop_assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
    }
}
