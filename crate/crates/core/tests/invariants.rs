use std::f64::consts::PI;

use nalgebra::DMatrix;

use deltacurve::assembly::{b_lambda_matrix, d_lambda_matrix};
use deltacurve::curve::{chord, d_sigma, make_circle, ArcGrid, Curve, CurveSpec};
use deltacurve::kernels::SpectralParameter;
use deltacurve::probe::{correction_singular_values, perturbed_green, BoxGrid};
use deltacurve::scattering::{block_distance, imaginary_part, n_matrix, relative_tail, s_prime};
use deltacurve::spectral::{
    asymptotic_count_bounds, circle_closed_form, count_negative, eigen, find_bound_states,
    principal_bound_state, spectrum, trusted_count,
};

fn circle(n: usize) -> (Curve, ArcGrid) {
    let c = make_circle(1.0).unwrap();
    let g = ArcGrid::new(&c, n).unwrap();
    (c, g)
}

fn ellipse(n: usize) -> (Curve, ArcGrid) {
    let e = Curve::ellipse_with_length(2.0, 2.0 * PI).unwrap();
    let g = ArcGrid::new(&e, n).unwrap();
    (e, g)
}

fn saddle(n: usize) -> (Curve, ArcGrid) {
    let spec = CurveSpec::Fourier {
        a0: [0.0; 3],
        cos: vec![[1.0, 0.0, 0.0], [0.0, 0.0, 0.15]],
        sin: vec![[0.0, 1.0, 0.0], [0.0, 0.0, 0.0]],
        period: 2.0 * PI,
    };
    let c = spec.build(1e-8).unwrap();
    let g = ArcGrid::new(&c, n).unwrap();
    (c, g)
}

fn norm(m: DMatrix<f64>) -> f64 {
    m.symmetric_eigenvalues().amax()
}

#[test]
fn d0_norm_bounded_by_root_d_sigma() {
    for (c, g) in [ellipse(256), saddle(256)] {
        let d = d_sigma(&c, &g);
        let n0 = norm(d_lambda_matrix(&c, 0.0, &g).unwrap().into_entries());
        assert!(n0 <= d.sqrt(), "{n0} vs {}", d.sqrt());
        assert!(n0 > 0.0);
    }
}

#[test]
fn eigenvalues_shift_at_most_d0_norm() {
    let (e, g) = ellipse(256);
    let n0 = norm(d_lambda_matrix(&e, 0.0, &g).unwrap().into_entries());
    let nu = spectrum(&e, &g, 0.0).unwrap();
    let circ = circle_closed_form(1.0, 256);
    for k in 0..trusted_count(256) {
        assert!((nu[k] - circ[k]).abs() <= n0 + 1e-6, "k={k}");
    }
}

#[test]
fn d_lambda_norm_decreases_with_lambda() {
    let (e, g) = ellipse(128);
    let norms: Vec<f64> = [0.0, -1.0, -10.0, -100.0]
        .iter()
        .map(|&l| norm(d_lambda_matrix(&e, l, &g).unwrap().into_entries()))
        .collect();
    assert!(norms.windows(2).all(|w| w[1] < w[0]), "{norms:?}");
}

#[test]
fn top_eigenvalues_converge_in_n() {
    for lambda in [0.0, -1.0] {
        let a = spectrum(&ellipse(256).0, &ellipse(256).1, lambda).unwrap();
        let b = spectrum(&ellipse(512).0, &ellipse(512).1, lambda).unwrap();
        let diff = a
            .iter()
            .zip(&b)
            .take(20)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff < 1e-6, "lambda={lambda}: {diff:e}");
    }
}

#[test]
fn ellipse_eigenvalues_grow_logarithmically() {
    let (e, g) = ellipse(512);
    let s = spectrum(&e, &g, 0.0).unwrap();
    let (x1, x2) = ((16f64).ln(), (64f64).ln());
    let slope = (s[63] - s[15]) / (x2 - x1);
    assert!((slope * 2.0 * PI + 1.0).abs() < 0.05, "{slope}");
}

#[test]
fn eigenvectors_have_small_residual() {
    let (e, g) = ellipse(128);
    let b = b_lambda_matrix(&e, -2.0, &g).unwrap();
    let es = eigen(&b).unwrap();
    for k in 0..10 {
        assert!(es.residual(&b, k) < 1e-10);
    }
}

#[test]
fn resolvent_norm_falls_like_inverse_coupling() {
    let (e, g) = ellipse(128);
    let top = spectrum(&e, &g, -1.0).unwrap()[0];
    let r: Vec<f64> = [10.0, 100.0, 1000.0]
        .iter()
        .map(|a| 1.0 / (a - top))
        .collect();
    for w in r.windows(2) {
        assert!((w[0] / w[1] / 10.0 - 1.0).abs() < 0.2);
    }
}

#[test]
fn circle_pairs_are_degenerate() {
    let (c, g) = circle(256);
    let states = find_bound_states(&c, &g, -0.2, -1.0).unwrap();
    assert_eq!(states.len(), 3);
    assert!((states[1].lambda - states[2].lambda).abs() < 1e-8);
    assert!(states[0].lambda < states[1].lambda);
}

#[test]
fn huge_coupling_has_no_bound_states() {
    let (e, g) = ellipse(128);
    assert_eq!(count_negative(&e, &g, 1e6).unwrap().count, 0);
    let (c, gc) = circle(128);
    let v = perturbed_green(&c, &gc, -1.0, 1e6, &[0.2, 0.1, 0.4], &[-0.5, 0.3, -0.2]).unwrap();
    assert!(v.correction.abs() < 1e-4 * v.free.abs());
}

#[test]
fn ellipse_count_within_asymptotic_bounds() {
    let (e, g) = ellipse(256);
    let rep = count_negative(&e, &g, -0.6).unwrap();
    let (lo, hi) = asymptotic_count_bounds(1.0, -0.6, rep.d_sigma).unwrap();
    assert!(lo < rep.count as f64 && (rep.count as f64) < hi);
}

#[test]
fn scattering_block_independent_of_eta() {
    let (e, g) = ellipse(128);
    let a = s_prime(&e, &g, 1.0, -0.5, -1.0).unwrap();
    let b = s_prime(&e, &g, 1.0, -0.5, -4.0).unwrap();
    assert!(block_distance(&a, &b).unwrap() < 1e-5);
    assert!(a.unitarity_defect < 1e-6);
}

#[test]
fn imaginary_part_has_fast_tail() {
    let (c, g) = circle(256);
    let n = n_matrix(&c, &g, SpectralParameter::real(1.0), -1.0).unwrap();
    let mut ev: Vec<f64> = imaginary_part(&n)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    assert!(relative_tail(&ev, 64) < 1e-8);
}

#[test]
fn saddle_scattering_is_unitary() {
    let (c, g) = saddle(128);
    let b = s_prime(&c, &g, 2.0, -0.5, -1.0).unwrap();
    assert!(b.unitarity_defect < 1e-6);
}

#[test]
fn green_correction_blows_up_near_bound_state() {
    let (c, g) = circle(128);
    let lam0 = principal_bound_state(&c, &g, -0.5).unwrap().lambda;
    let x = [0.2, 0.1, 0.3];
    let y = [-0.3, 0.2, -0.1];
    let mags: Vec<f64> = [1e-1, 1e-2, 1e-3]
        .iter()
        .map(|d| {
            perturbed_green(&c, &g, lam0 + d, -0.5, &x, &y)
                .unwrap()
                .correction
                .abs()
        })
        .collect();
    assert!(mags[0] < mags[1] && mags[1] < mags[2], "{mags:?}");
}

#[test]
fn probe_stable_under_box_refinement() {
    let (c, g) = circle(128);
    let coarse = BoxGrid::with_exclusion(&g, -3.0, 3.0, 16, 0.5).unwrap();
    let fine = BoxGrid::with_exclusion(&g, -3.0, 3.0, 24, 0.5).unwrap();
    let a = correction_singular_values(&c, &g, &coarse, -1.0, -0.5).unwrap();
    let b = correction_singular_values(&c, &g, &fine, -1.0, -0.5).unwrap();
    for k in 0..5 {
        assert!(
            (a.correction[k] / b.correction[k] - 1.0).abs() < 0.05,
            "k={k}"
        );
    }
}

#[test]
fn isoperimetric_gap_stable_in_sign() {
    for n in [256, 512] {
        for (curve, _) in [ellipse(n), saddle(n)] {
            let report = deltacurve::spectral::isoperimetric_compare(
                &curve,
                -0.5,
                &ArcGrid::new(&curve, n).unwrap(),
            )
            .unwrap();
            assert!(report.gap > 0.0, "{} at n={n}", curve.label());
        }
    }
}

#[test]
fn kernel_difference_vanishes_on_diagonal() {
    let (e, _) = ellipse(64);
    let l = e.length();
    let rho = |u: f64| 2.0 * (PI * u / l).sin() * l / (2.0 * PI);
    let vals: Vec<f64> = [1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&u| (1.0 / (4.0 * PI * chord(&e, 0.3, 0.3 + u)) - 1.0 / (4.0 * PI * rho(u))).abs())
        .collect();
    assert!(vals[0] > vals[1] && vals[1] > vals[2], "{vals:?}");
}
