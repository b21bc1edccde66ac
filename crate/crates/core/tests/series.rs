//! Checks of the annulus series against independent evaluations.

use brl_core::annulus::{
    grad_green, grad_robin, green, regular_part, robin, AnnulusGeometry, SeriesControl,
};
use brl_core::{Point4, OMEGA};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `Q_m(s, t)` written out in the expanded form, each piece in log space.
fn q_expanded(m: usize, s: f64, t: f64, rho: f64) -> f64 {
    let mf = m as f64;
    let p = 2.0 * mf + 2.0;
    let (lr, ls, lt) = (rho.ln(), s.ln(), t.ln());
    let lst = ls + lt;
    let a = (p * lr).exp();
    let num = (p * lr - (mf + 2.0) * lst).exp()
        - (p * lr + p * ls - (mf + 2.0) * lst).exp()
        - (p * lr + p * lt - (mf + 2.0) * lst).exp()
        + (mf * lst).exp();
    num / (p * (1.0 - a))
}

/// `(m+1) U_m(cos θ)` via `sin((m+1)θ)/sin θ`.
fn zonal_trig(m: usize, c: f64) -> f64 {
    let n = (m + 1) as f64;
    if (1.0 - c.abs()) < 1e-12 {
        let sign = if c < 0.0 && m % 2 == 1 { -1.0 } else { 1.0 };
        return sign * n * n;
    }
    let th = c.acos();
    n * (n * th).sin() / th.sin()
}

fn h_oracle(x: &Point4, y: &Point4, rho: f64, terms: usize) -> f64 {
    let s = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let t = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let c = (x.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / (s * t)).clamp(-1.0, 1.0);
    (0..terms)
        .map(|m| q_expanded(m, s, t, rho) * zonal_trig(m, c))
        .sum::<f64>()
        / OMEGA
}

fn random_point(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Point4 {
    loop {
        let v: Point4 = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            let r = rng.gen_range(lo..hi);
            return v.map(|c| c * r / n);
        }
    }
}

#[test]
fn tail_bound_dominates_true_tail() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..50 {
        let rho = rng.gen_range(0.2..0.8);
        let geom = AnnulusGeometry::new(rho).unwrap();
        let w = 1.0 - rho;
        let x = random_point(&mut rng, rho + 0.05 * w, 1.0 - 0.05 * w);
        let y = random_point(&mut rng, rho + 0.05 * w, 1.0 - 0.05 * w);
        let terms = rng.gen_range(5..60);
        let h = regular_part(&x, &y, &geom, &SeriesControl::fixed(terms)).unwrap();
        let exact = h_oracle(&x, &y, rho, 2000);
        let err = (h.value - exact).abs();
        assert!(
            err <= h.tail_bound + 1e-13,
            "case {case}: err {err:e} > bound {:e}",
            h.tail_bound
        );
    }
}

#[test]
fn default_evaluation_matches_long_oracle() {
    let geom = AnnulusGeometry::new(0.5).unwrap();
    let ctrl = SeriesControl::default();
    let x = [0.7, 0.0, 0.0, 0.0];
    let y = [0.0, 0.7, 0.0, 0.0];
    let g = green(&x, &y, &geom, &ctrl).unwrap();
    let oracle = 1.0 / (2.0 * OMEGA * 0.98) - h_oracle(&x, &y, 0.5, 2000);
    assert!((g.value - oracle).abs() <= g.tail_bound + 1e-13);
    let tau = robin(&x, &geom, &ctrl).unwrap();
    let oracle = h_oracle(&x, &x, 0.5, 2000);
    assert!((tau.value - oracle).abs() <= tau.tail_bound + 1e-13);
}

#[test]
fn green_vanishes_on_both_boundaries() {
    let geom = AnnulusGeometry::new(0.5).unwrap();
    let ctrl = SeriesControl::new(20_000, 1e-13).unwrap();
    let y = [0.7, 0.0, 0.0, 0.0];
    for x in [
        [1.0, 0.0, 0.0, 0.0],
        [0.0, 0.6, 0.8, 0.0],
        [0.5, 0.0, 0.0, 0.0],
        [0.0, 0.0, -0.3, 0.4],
    ] {
        let d2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        let h = regular_part(&x, &y, &geom, &ctrl).unwrap();
        let g = 1.0 / (2.0 * OMEGA * d2) - h.value;
        assert!(g.abs() <= 10.0 * h.tail_bound + 1e-12, "x={x:?} G={g:e}");
    }
}

#[test]
fn regular_part_is_harmonic() {
    let geom = AnnulusGeometry::new(0.4).unwrap();
    let ctrl = SeriesControl::new(2000, 1e-14).unwrap();
    let y = [0.0, 0.65, 0.0, 0.1];
    let h = 1e-3;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let x = random_point(&mut rng, 0.5, 0.9);
        let f = |p: &Point4| regular_part(p, &y, &geom, &ctrl).unwrap().value;
        let f0 = f(&x);
        let lap: f64 = (0..4)
            .map(|l| {
                let mut xp = x;
                let mut xm = x;
                xp[l] += h;
                xm[l] -= h;
                f(&xp) + f(&xm) - 2.0 * f0
            })
            .sum::<f64>()
            / (h * h);
        assert!(lap.abs() <= 1e-2, "ΔH = {lap:e} at {x:?}");
    }
}

#[test]
fn green_and_robin_agree_near_the_diagonal() {
    let geom = AnnulusGeometry::new(0.5).unwrap();
    let ctrl = SeriesControl::default();
    for x in [
        [0.7, 0.0, 0.0, 0.0],
        [0.0, 0.0, 0.6, 0.0],
        [0.4, 0.4, 0.4, 0.0],
    ] {
        let s = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        // tangential unit vector
        let t: Point4 = if x[0] != 0.0 {
            [-x[1], x[0], 0.0, 0.0]
        } else {
            [x[2], 0.0, -x[0], 0.0]
        };
        let tn = t.iter().map(|v| v * v).sum::<f64>().sqrt();
        let y: Point4 = std::array::from_fn(|l| x[l] + 1e-4 * t[l] / tn);
        let d2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        let g = green(&x, &y, &geom, &ctrl).unwrap().value;
        let tau = robin(&x, &geom, &ctrl).unwrap().value;
        assert!(
            ((g - 1.0 / (2.0 * OMEGA * d2)) + tau).abs() <= 1e-6,
            "s = {s}"
        );
    }
}

/// Richardson-extrapolated central difference.
fn richardson(f: impl Fn(f64) -> f64, h: f64) -> f64 {
    let d1 = (f(h) - f(-h)) / (2.0 * h);
    let d2 = (f(h / 2.0) - f(-h / 2.0)) / h;
    (4.0 * d2 - d1) / 3.0
}

#[test]
fn gradients_match_finite_differences() {
    let geom = AnnulusGeometry::new(0.4).unwrap();
    let ctrl = SeriesControl::fixed(300);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..20 {
        let x = random_point(&mut rng, 0.48, 0.92);
        let y = random_point(&mut rng, 0.48, 0.92);
        if x.iter()
            .zip(&y)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            < 0.01
        {
            continue;
        }
        let gg = grad_green(&x, &y, &geom, &ctrl).unwrap().value;
        let gr = grad_robin(&x, &geom, &ctrl).unwrap().value;
        let norm_gg = gg.iter().map(|v| v * v).sum::<f64>().sqrt();
        let norm_gr = gr.iter().map(|v| v * v).sum::<f64>().sqrt();
        for l in 0..4 {
            let shift = |h: f64| {
                let mut p = x;
                p[l] += h;
                p
            };
            let fd_g = richardson(|h| green(&shift(h), &y, &geom, &ctrl).unwrap().value, 1e-5);
            let fd_r = richardson(|h| robin(&shift(h), &geom, &ctrl).unwrap().value, 1e-5);
            assert!(
                (fd_g - gg[l]).abs() <= 1e-5 * norm_gg.max(1.0),
                "green l={l}: {fd_g} vs {}",
                gg[l]
            );
            assert!(
                (fd_r - gr[l]).abs() <= 1e-5 * norm_gr.max(1.0),
                "robin l={l}: {fd_r} vs {}",
                gr[l]
            );
        }
    }
}
