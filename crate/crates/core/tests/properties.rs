use brl_core::annulus::{green, robin, AnnulusGeometry, SeriesControl};
use brl_core::bubbles::{bubble_u, psi_kernel, rates, BubbleParams};
use brl_core::linalg::sym_eigen;
use brl_core::reduced::{eval_f1, eval_f2, schur_check, solve_d_lambda};
use brl_core::ring::{circulant_eigs, ring_point, RingConfig};
use brl_core::special::{gegenbauer_p1, gegenbauer_parity_check};
use brl_core::{assemble_m, rayleigh, AnnulusGreen, Configuration, Error, Point4};
use proptest::prelude::*;

fn ctrl() -> SeriesControl {
    SeriesControl::new(4000, 1e-13).unwrap()
}

/// A point at `rho + frac (1 - rho)` along a (not necessarily unit) direction.
fn place(dir: [f64; 4], rho: f64, frac: f64) -> Option<Point4> {
    let n = dir.iter().map(|c| c * c).sum::<f64>().sqrt();
    if n < 1e-3 {
        return None;
    }
    let r = rho + frac * (1.0 - rho);
    Some(dir.map(|c| c * r / n))
}

fn dist(a: &Point4, b: &Point4) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn dir() -> impl Strategy<Value = [f64; 4]> {
    prop::array::uniform4(-1.0f64..1.0)
}

fn config_strategy(max_k: usize) -> impl Strategy<Value = (f64, Vec<([f64; 4], f64)>)> {
    (
        0.2f64..0.7,
        prop::collection::vec((dir(), 0.1f64..0.9), 2..=max_k),
    )
}

fn build(rho: f64, raw: &[([f64; 4], f64)]) -> Option<(AnnulusGreen, Configuration)> {
    let pts: Vec<Point4> = raw
        .iter()
        .map(|(d, f)| place(*d, rho, *f))
        .collect::<Option<_>>()?;
    for i in 0..pts.len() {
        for j in 0..i {
            if dist(&pts[i], &pts[j]) < 0.1 {
                return None;
            }
        }
    }
    let sep = 0.02 * (1.0 - rho);
    Some((
        AnnulusGreen::new(rho, ctrl()).unwrap(),
        Configuration::new(pts, sep).ok()?,
    ))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn green_is_symmetric_and_positive(
        rho in 0.2f64..0.8, dx in dir(), dy in dir(), fx in 0.05f64..0.95, fy in 0.05f64..0.95,
    ) {
        let geom = AnnulusGeometry::new(rho).unwrap();
        let (Some(x), Some(y)) = (place(dx, rho, fx), place(dy, rho, fy)) else { return Ok(()) };
        prop_assume!(dist(&x, &y) > 0.05);
        let gxy = green(&x, &y, &geom, &ctrl()).unwrap();
        let gyx = green(&y, &x, &geom, &ctrl()).unwrap();
        prop_assert!((gxy.value - gyx.value).abs() <= 1e-12 * gxy.value.abs().max(1.0));
        prop_assert!(gxy.value > -gxy.tail_bound);
    }

    #[test]
    fn robin_is_radial(rho in 0.2f64..0.8, d1 in dir(), d2 in dir(), f in 0.05f64..0.95) {
        let geom = AnnulusGeometry::new(rho).unwrap();
        let (Some(x), Some(y)) = (place(d1, rho, f), place(d2, rho, f)) else { return Ok(()) };
        let a = robin(&x, &geom, &ctrl()).unwrap().value;
        let b = robin(&y, &geom, &ctrl()).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-10 * a.abs());
        prop_assert!(a > 0.0);
    }

    #[test]
    fn reduced_solution_is_the_perron_pair((rho, raw) in config_strategy(5)) {
        let Some((o, config)) = build(rho, &raw) else { return Ok(()) };
        let sol = match solve_d_lambda(&config, &o) {
            Err(Error::NotInvertible { .. } | Error::NotSimple(_)) => return Ok(()),
            other => other.unwrap(),
        };
        let m = assemble_m(&config, &o).unwrap().entries;
        let scale = sol.d_hat().iter().map(|v| v.abs()).fold(0.0, f64::max);
        prop_assert!(sol.eig_residual <= 1e-12 * scale.max(1.0));
        prop_assert!(sol.d.iter().all(|&v| v > 0.0));
        let spectrum = sym_eigen(&m).values;
        prop_assert!((sol.lambda - spectrum[0]).abs() <= 1e-12 * spectrum.last().unwrap().abs());
        // λ is the minimum of the Rayleigh quotient
        prop_assert!((rayleigh(&m, &sol.d) - sol.lambda).abs() <= 1e-12);
        let f1 = eval_f1(&config, &sol.d, sol.lambda, &o).unwrap();
        let f2 = eval_f2(&config, &sol.d, sol.lambda, &o).unwrap();
        prop_assert!(f1.abs() <= 1e-11 * scale.max(1.0));
        prop_assert!(f2.iter().all(|v| v.abs() <= 1e-11 * scale.max(1.0)));
    }

    #[test]
    fn schur_identity_holds((rho, raw) in config_strategy(6)) {
        let Some((o, config)) = build(rho, &raw) else { return Ok(()) };
        let sol = match solve_d_lambda(&config, &o) {
            Err(Error::NotInvertible { .. } | Error::NotSimple(_)) => return Ok(()),
            other => other.unwrap(),
        };
        // Evaluating the identity loses about ‖M‖/|det(M̄ - Λ₁)| in relative
        // accuracy, so nearly decoupled draws are excluded.
        let norm = assemble_m(&config, &o).unwrap().entries.frobenius_norm();
        prop_assume!(sol.det_check.abs() >= 1e-6 * norm.powi(config.k() as i32 - 1));
        let s = schur_check(&config, &o).unwrap();
        prop_assert!(s.rel_error <= 1e-8, "rel error {}", s.rel_error);
        let k = config.k() as i32;
        let sign = if (k - 1) % 2 == 0 { 1.0 } else { -1.0 };
        prop_assert!((s.det_literal - sign * s.det_lambda_first).abs() <= 1e-12 * s.det_literal.abs().max(1e-300));
    }

    #[test]
    fn rates_follow_the_log_law(
        eps in 1e-3f64..10.0, lambda in 1e-3f64..2.0, d in prop::collection::vec(0.01f64..100.0, 0..6),
    ) {
        let r = rates(eps, lambda, &d).unwrap();
        let target = 8.0 * std::f64::consts::PI.powi(2) * lambda;
        prop_assert!((eps * -r.log_deltas[0] - target).abs() <= 4.0 * f64::EPSILON * target);
        for (i, di) in d.iter().enumerate() {
            prop_assert!((r.log_deltas[i + 1] - r.log_deltas[0] - di.ln()).abs() <= 1e-12 * r.log_deltas[0].abs());
            if r.deltas[0] > 0.0 && r.deltas[i + 1] > 0.0 {
                prop_assert!((r.deltas[i + 1] / r.deltas[0] - di).abs() <= 4.0 * f64::EPSILON * di);
            }
        }
        prop_assert_eq!(r.underflow, r.deltas.contains(&0.0));
    }

    #[test]
    fn circulant_matches_dense(rho in 0.2f64..0.7, k in 2usize..=8, f in 0.1f64..0.9) {
        let o = AnnulusGreen::new(rho, ctrl()).unwrap();
        let r = rho + f * (1.0 - rho);
        let p = ring_point(k, r, &o.geom, &o.ctrl).unwrap();
        let mut formula = p.lambdas.clone();
        formula.sort_by(f64::total_cmp);
        let config = RingConfig::new(k, r, &o.geom).unwrap().configuration(1e-3).unwrap();
        let dense = sym_eigen(&assemble_m(&config, &o).unwrap().entries).values;
        for (a, b) in formula.iter().zip(&dense) {
            prop_assert!((a - b).abs() <= 1e-10);
        }
        // Λ₁ is the smallest of the Λ_ℓ
        prop_assert!(p.lambdas.iter().all(|&v| p.lambdas[0] <= v + 1e-12));
    }

    #[test]
    fn circulant_of_symmetric_row_is_real(a in prop::collection::vec(-1.0f64..1.0, 1..9)) {
        let k = a.len();
        let sym: Vec<f64> = (0..k).map(|j| if j == 0 { a[0] } else { a[j.min(k - j)] }).collect();
        let eigs = circulant_eigs(&sym).unwrap();
        prop_assert!((eigs[0] - sym.iter().sum::<f64>()).abs() <= 1e-12);
        prop_assert!((eigs.iter().sum::<f64>() - k as f64 * sym[0]).abs() <= 1e-10);
    }

    #[test]
    fn bubble_scales_with_delta(delta in 1e-3f64..1.0, y in dir(), c in dir()) {
        let p = BubbleParams::new(delta, c).unwrap();
        let unit = BubbleParams::new(1.0, [0.0; 4]).unwrap();
        let x: Point4 = std::array::from_fn(|l| c[l] + delta * y[l]);
        let lhs = bubble_u(&p, &x);
        let rhs = bubble_u(&unit, &y) / delta;
        prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs);
        for j in 0..=4 {
            let a = psi_kernel(j, &p, &x).unwrap();
            let b = psi_kernel(j, &unit, &y).unwrap() / delta;
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0 / delta));
        }
    }

    #[test]
    fn gegenbauer_parity_and_bound(m in 0usize..80, t in -1.0f64..=1.0) {
        prop_assert!(gegenbauer_parity_check(m, t).unwrap());
        prop_assert!(gegenbauer_p1(m, t).unwrap().abs() <= (m + 1) as f64 + 1e-9);
    }
}
