//! The leading-order reduced system in `(d, λ, ξ)`: its closed-form solution,
//! the maps `F₁`, `F₂`, `F₃`, the determinant identity for the `(d, λ)`
//! Jacobian, the residual coefficients of the projected equation, and a
//! descent search for critical points of `Λ₁`.

use serde::Serialize;

use crate::annulus::{norm, Point4, OMEGA};
use crate::bubbles::{rates, Rates};
use crate::error::{Error, Result};
use crate::interaction::{
    assemble_m, gradient_from_eigvec, smallest_eigen, smallest_eigen_of, tilde_m_apply,
    Configuration, GreenOracle, SpectralData,
};
use crate::linalg::{det, norm2, sym_eigen, Lu, Matrix};

/// Solution `(λ, d)` of `F₁ = 0`, `F₂ = 0` at fixed points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReducedSolution {
    pub lambda: f64,
    /// `(d₂, …, d_k)`; empty for a single point.
    pub d: Vec<f64>,
    /// `‖M (1, d)ᵀ - λ (1, d)ᵀ‖`
    pub eig_residual: f64,
    /// `det(M̄ - Λ₁ Id)`; 1 for a single point.
    pub det_check: f64,
    /// Largest difference between `d` and the tail of the normalized
    /// eigenvector returned by the dense eigensolver.
    pub tail_consistency: f64,
    pub spectral: SpectralData,
}

impl ReducedSolution {
    /// `(1, d)`
    pub fn d_hat(&self) -> Vec<f64> {
        d_hat(&self.d)
    }
}

fn d_hat(d: &[f64]) -> Vec<f64> {
    let mut v = Vec::with_capacity(d.len() + 1);
    v.push(1.0);
    v.extend_from_slice(d);
    v
}

/// `(M̄, Ḡ)`: the trailing block of `M` and the negated first column below
/// the diagonal.
fn split(m: &Matrix) -> (Matrix, Vec<f64>) {
    let k = m.dim();
    (m.trailing_block(), (1..k).map(|i| -m[(i, 0)]).collect())
}

/// Solves the reduced system for an assembled interaction matrix:
/// `λ = Λ₁` and `d = (M̄ - Λ₁ Id)⁻¹ Ḡ`.
pub fn solve_reduced(m: &Matrix) -> Result<ReducedSolution> {
    let spectral = smallest_eigen_of(m)?;
    let k = m.dim();
    if !spectral.simple {
        return Err(Error::NotSimple(spectral.gap));
    }
    let lambda = spectral.lambda1;
    if k == 1 {
        return Ok(ReducedSolution {
            lambda,
            d: Vec::new(),
            eig_residual: (m[(0, 0)] - lambda).abs(),
            det_check: 1.0,
            tail_consistency: 0.0,
            spectral,
        });
    }
    let (mbar, gbar) = split(m);
    let shifted = Matrix::from_fn(k - 1, |i, j| {
        mbar[(i, j)] - if i == j { lambda } else { 0.0 }
    });
    let lu = Lu::new(&shifted);
    let det_check = lu.det();
    let threshold = 1e-12 * mbar.frobenius_norm().powi(k as i32 - 1);
    if !(det_check.abs() > threshold) {
        return Err(Error::NotInvertible {
            det: det_check,
            threshold,
        });
    }
    let d = lu.solve(&gbar).ok_or(Error::NotInvertible {
        det: det_check,
        threshold,
    })?;
    let (lambda, d, eig_residual) = refine(m, lambda, d);
    let tail_consistency = d
        .iter()
        .zip(&spectral.eigvec[1..])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(ReducedSolution {
        lambda,
        d,
        eig_residual,
        det_check,
        tail_consistency,
        spectral,
    })
}

fn eig_residual(m: &Matrix, lambda: f64, d: &[f64]) -> Vec<f64> {
    let dh = d_hat(d);
    m.mul_vec(&dh)
        .iter()
        .zip(&dh)
        .map(|(a, b)| a - lambda * b)
        .collect()
}

/// Newton steps on `M (1, d)ᵀ = λ (1, d)ᵀ` in the unknowns `(d, λ)`, kept
/// while the residual decreases. When `d` is large (weakly coupled first
/// point) the separately rounded `λ` and `d` leave a residual well above
/// rounding level; this removes it.
fn refine(m: &Matrix, mut lambda: f64, mut d: Vec<f64>) -> (f64, Vec<f64>, f64) {
    let k = m.dim();
    let mut res = eig_residual(m, lambda, &d);
    let mut rn = norm2(&res);
    for _ in 0..4 {
        // columns: d_1..d_{k-1}, then λ
        let jac = Matrix::from_fn(k, |i, j| {
            if j + 1 < k {
                m[(i, j + 1)] - if i == j + 1 { lambda } else { 0.0 }
            } else if i == 0 {
                -1.0
            } else {
                -d[i - 1]
            }
        });
        let Some(step) = Lu::new(&jac).solve(&res) else {
            break;
        };
        let d_new: Vec<f64> = d.iter().zip(&step).map(|(a, s)| a - s).collect();
        let lambda_new = lambda - step[k - 1];
        let res_new = eig_residual(m, lambda_new, &d_new);
        let rn_new = norm2(&res_new);
        if !(rn_new < rn) {
            break;
        }
        (lambda, d, res, rn) = (lambda_new, d_new, res_new, rn_new);
    }
    (lambda, d, rn)
}

/// [`solve_reduced`] on `M(ξ)` of a configuration.
pub fn solve_d_lambda(config: &Configuration, oracle: &dyn GreenOracle) -> Result<ReducedSolution> {
    solve_reduced(&assemble_m(config, oracle)?.entries)
}

fn check_d(config: &Configuration, d: &[f64]) {
    assert_eq!(d.len() + 1, config.k(), "d must have k - 1 entries");
}

/// `F₁ = τ(ξ₁) - Σ_j d_j G(ξ₁, ξ_j) - λ`.
pub fn eval_f1(
    config: &Configuration,
    d: &[f64],
    lambda: f64,
    oracle: &dyn GreenOracle,
) -> Result<f64> {
    check_d(config, d);
    let p = config.points();
    let mut f = oracle.robin(&p[0])?.value - lambda;
    for (j, dj) in d.iter().enumerate() {
        f -= dj * oracle.green(&p[0], &p[j + 1])?.value;
    }
    Ok(f)
}

/// `F₂ = (M̄ - λ Id) d - Ḡ`.
pub fn eval_f2(
    config: &Configuration,
    d: &[f64],
    lambda: f64,
    oracle: &dyn GreenOracle,
) -> Result<Vec<f64>> {
    check_d(config, d);
    let m = assemble_m(config, oracle)?.entries;
    let (mbar, gbar) = split(&m);
    let md = if d.is_empty() {
        Vec::new()
    } else {
        mbar.mul_vec(d)
    };
    Ok(md
        .iter()
        .zip(d)
        .zip(&gbar)
        .map(|((a, di), g)| a - lambda * di - g)
        .collect())
}

/// `F₃`: the blocks `M̃^ℓ (1, d)ᵀ` for `ℓ = 1..4`, returned as
/// `out[ℓ][i]`.
///
/// At `d = d(ξ)` this relates to the gradient by
/// `(1 + |d|²) ∂Λ₁/∂(ξ_i)_ℓ = ê_i (M̃^ℓ ê)_i` with `ê = (1, d)`.
pub fn eval_f3(
    config: &Configuration,
    d: &[f64],
    oracle: &dyn GreenOracle,
) -> Result<[Vec<f64>; 4]> {
    check_d(config, d);
    let tm = tilde_m_apply(config, oracle, &d_hat(d))?;
    Ok(std::array::from_fn(|l| {
        tm.iter().map(|row| row[l]).collect()
    }))
}

/// Both sides of the determinant identity for the `(d, λ)` Jacobian of
/// `(F₁, F₂)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchurCheck {
    /// Determinant of `[[-Ḡᵀ, -1], [M̄ - Λ₁ Id, -d]]` as laid out, columns
    /// ordered `(d, λ)`.
    pub det_literal: f64,
    /// The same matrix with the `λ` column first, which is the ordering the
    /// Schur complement formula applies to. Differs from `det_literal` by
    /// `(-1)^(k-1)`.
    pub det_lambda_first: f64,
    /// `-det(M̄ - Λ₁ Id)(1 + d·d)`
    pub product: f64,
    /// `|det_lambda_first - product| / |product|`
    pub rel_error: f64,
}

pub fn schur_check(config: &Configuration, oracle: &dyn GreenOracle) -> Result<SchurCheck> {
    let m = assemble_m(config, oracle)?.entries;
    schur_check_matrix(&m)
}

pub fn schur_check_matrix(m: &Matrix) -> Result<SchurCheck> {
    let k = m.dim();
    if k == 1 {
        return Ok(SchurCheck {
            det_literal: -1.0,
            det_lambda_first: -1.0,
            product: -1.0,
            rel_error: 0.0,
        });
    }
    let sol = solve_reduced(m)?;
    let (mbar, gbar) = split(m);
    let lam = sol.lambda;
    let n = k - 1;
    let literal = Matrix::from_fn(k, |i, j| match (i, j) {
        (0, j) if j < n => -gbar[j],
        (0, _) => -1.0,
        (i, j) if j < n => mbar[(i - 1, j)] - if i - 1 == j { lam } else { 0.0 },
        (i, _) => -sol.d[i - 1],
    });
    let lambda_first = Matrix::from_fn(k, |i, j| literal[(i, (j + n) % k)]);
    let det_literal = det(&literal);
    let det_lambda_first = det(&lambda_first);
    let dd: f64 = sol.d.iter().map(|x| x * x).sum();
    let shifted = Matrix::from_fn(n, |i, j| mbar[(i, j)] - if i == j { lam } else { 0.0 });
    let product = -det(&shifted) * (1.0 + dd);
    let rel_error = (det_lambda_first - product).abs() / product.abs();
    Ok(SchurCheck {
        det_literal,
        det_lambda_first,
        product,
        rel_error,
    })
}

/// Relative error of the determinant identity; 0 for a single point.
pub fn schur_det_check(config: &Configuration, oracle: &dyn GreenOracle) -> Result<f64> {
    Ok(schur_check(config, oracle)?.rel_error)
}

/// Leading coefficients of the projected equation at given `(d, λ, ε)`.
///
/// `c0_scaled[h] = 𝔠⁰_h / δ_h²` splits as `bracket[h] + log_term[h]`, where
/// `bracket[h] = τ(ξ_h) - Σ_{i≠h} (d_i/d_h) G(ξ_i, ξ_h) - λ` vanishes at the
/// reduced solution and `log_term[h] = ε ln d_h / (8π²)` is of order ε.
/// `ci_scaled[h][ℓ] = 𝔠^ℓ_h / δ₁²`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualReport {
    pub epsilon: f64,
    pub lambda: f64,
    pub rates: Rates,
    pub c0: Vec<f64>,
    pub c0_scaled: Vec<f64>,
    pub bracket: Vec<f64>,
    pub log_term: Vec<f64>,
    pub ci: Vec<Point4>,
    pub ci_scaled: Vec<Point4>,
}

pub fn residual_c0(
    config: &Configuration,
    d: &[f64],
    lambda: f64,
    epsilon: f64,
    oracle: &dyn GreenOracle,
) -> Result<ResidualReport> {
    check_d(config, d);
    let rt = rates(epsilon, lambda, d)?;
    let m = assemble_m(config, oracle)?.entries;
    let dh = d_hat(d);
    let md = m.mul_vec(&dh);
    let k = config.k();
    let mut c0_scaled = Vec::with_capacity(k);
    let mut bracket = Vec::with_capacity(k);
    let mut log_term = Vec::with_capacity(k);
    for h in 0..k {
        let ratio_sum = md[h] / dh[h];
        c0_scaled.push(ratio_sum + epsilon * rt.log_deltas[h] / (4.0 * OMEGA));
        bracket.push(ratio_sum - lambda);
        log_term.push(epsilon * dh[h].ln() / (4.0 * OMEGA));
    }
    let c0 = c0_scaled
        .iter()
        .zip(&rt.deltas)
        .map(|(c, dl)| c * dl * dl)
        .collect();
    let tm = tilde_m_apply(config, oracle, &dh)?;
    let ci_scaled: Vec<Point4> = tm
        .iter()
        .zip(&dh)
        .map(|(row, di)| row.map(|v| di * v))
        .collect();
    let d1sq = rt.deltas[0] * rt.deltas[0];
    let ci = ci_scaled.iter().map(|row| row.map(|v| v * d1sq)).collect();
    Ok(ResidualReport {
        epsilon,
        lambda,
        rates: rt,
        c0,
        c0_scaled,
        bracket,
        log_term,
        ci,
        ci_scaled,
    })
}

/// Prefactor on the reference eigenvalue in [`kl_functional`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum KlConvention {
    /// `d M dᵀ - Λ₁(ξ₀)/(8π²) d dᵀ`, as the functional is usually written.
    EightPiSquared,
    /// `d M dᵀ - Λ₁(ξ₀) d dᵀ`, whose `d`-gradient vanishes on the
    /// eigenvector of `Λ₁(ξ₀)`.
    Plain,
}

/// `d M(ξ) dᵀ - c Λ₁(ξ₀) d dᵀ` for a full weight vector `d` of length `k`.
pub fn kl_functional(
    config: &Configuration,
    oracle: &dyn GreenOracle,
    d_full: &[f64],
    lambda1_ref: f64,
    convention: KlConvention,
) -> Result<f64> {
    assert_eq!(d_full.len(), config.k());
    let m = assemble_m(config, oracle)?.entries;
    let c = match convention {
        KlConvention::EightPiSquared => 1.0 / (8.0 * std::f64::consts::PI.powi(2)),
        KlConvention::Plain => 1.0,
    };
    let md = m.mul_vec(d_full);
    let quad: f64 = d_full.iter().zip(&md).map(|(a, b)| a * b).sum();
    let dd: f64 = d_full.iter().map(|x| x * x).sum();
    Ok(quad - c * lambda1_ref * dd)
}

/// Controls for [`critical_search`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SearchControl {
    pub max_iter: usize,
    /// Stop once `‖∇Λ₁‖` is at or below this.
    pub grad_tol: f64,
    /// Armijo sufficient-decrease constant.
    pub armijo: f64,
    pub max_backtracks: usize,
    /// Upper bound on the displacement of a single step.
    pub max_step: f64,
    /// Finite-difference step of the Hessian.
    pub hessian_h: f64,
    /// Eigenvalues within this of zero are classified as null.
    pub eig_threshold: f64,
}

impl Default for SearchControl {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-8,
            armijo: 1e-4,
            max_backtracks: 60,
            max_step: 0.05,
            hessian_h: 1e-4,
            eig_threshold: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopReason {
    Converged,
    MaxIterations,
    /// No step along the projected gradient decreased `Λ₁`.
    LineSearch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CriticalKind {
    StrictMinimum,
    StrictMaximum,
    Saddle,
    /// Some eigenvalues within the null threshold, none of the opposite sign
    /// to the rest.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HessianReport {
    /// Ascending eigenvalues of the symmetrized finite-difference Hessian.
    pub eigenvalues: Vec<f64>,
    pub positive: usize,
    pub negative: usize,
    pub null: usize,
    pub kind: CriticalKind,
    /// `vᵀ H v / vᵀ v` along the uniform radial dilation `v_i = ξ_i / |ξ_i|`.
    pub radial_curvature: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SearchReport {
    pub config: Configuration,
    pub spectral: SpectralData,
    pub lambda1: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub stop: StopReason,
    /// `Λ₁` at the start and after every accepted step.
    pub history: Vec<f64>,
    /// Steps in which the projection onto the admissible set moved a point.
    pub constraint_hits: usize,
    pub hessian: HessianReport,
}

struct Eval {
    config: Configuration,
    spectral: SpectralData,
    grad: Vec<f64>,
}

fn evaluate(config: Configuration, oracle: &dyn GreenOracle) -> Result<Eval> {
    let spectral = smallest_eigen(&assemble_m(&config, oracle)?)?;
    if !spectral.simple {
        return Err(Error::NotSimple(spectral.gap));
    }
    let grad = gradient_from_eigvec(&config, oracle, &spectral.eigvec)?
        .into_iter()
        .flatten()
        .collect();
    Ok(Eval {
        config,
        spectral,
        grad,
    })
}

/// Projects every point back to `2·sep` from the boundary. Returns the
/// projected configuration and whether anything moved; `None` if the
/// pairwise separation is violated.
fn project(config: &Configuration, oracle: &dyn GreenOracle) -> Option<(Configuration, bool)> {
    let margin = 2.0 * config.sep();
    let mut moved = false;
    let flat: Vec<f64> = config
        .points()
        .iter()
        .flat_map(|p| {
            let q = oracle.project_inside(p, margin);
            moved |= q != *p;
            q
        })
        .collect();
    let c = config.with_flat(&flat);
    if c.validate(oracle).is_err() {
        return None;
    }
    Some((c, moved))
}

/// Projected steepest descent on `Λ₁` with Barzilai–Borwein trial steps and
/// Armijo backtracking. Accepted iterates never increase `Λ₁`.
pub fn critical_search(
    initial: &Configuration,
    oracle: &dyn GreenOracle,
    ctrl: &SearchControl,
) -> Result<SearchReport> {
    initial.validate(oracle)?;
    let mut cur = evaluate(initial.clone(), oracle)?;
    let mut history = vec![cur.spectral.lambda1];
    let mut constraint_hits = 0;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut alpha = f64::NAN;
    let mut iterations = 0;
    let stop = loop {
        let gnorm = norm2(&cur.grad);
        if gnorm <= ctrl.grad_tol {
            break StopReason::Converged;
        }
        if iterations >= ctrl.max_iter {
            break StopReason::MaxIterations;
        }
        let x = cur.config.flatten();
        if let Some((xp, gp)) = &prev {
            let s: Vec<f64> = x.iter().zip(xp).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = cur.grad.iter().zip(gp).map(|(a, b)| a - b).collect();
            let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
            let ss: f64 = s.iter().map(|a| a * a).sum();
            alpha = if sy > 0.0 { ss / sy } else { 2.0 * alpha };
        } else {
            alpha = ctrl.max_step / gnorm;
        }
        alpha = alpha.min(ctrl.max_step / gnorm);
        let f0 = cur.spectral.lambda1;
        let mut accepted = None;
        let mut a = alpha;
        for _ in 0..=ctrl.max_backtracks {
            let trial: Vec<f64> = x
                .iter()
                .zip(&cur.grad)
                .map(|(xi, gi)| xi - a * gi)
                .collect();
            if let Some((c, moved)) = project(&cur.config.with_flat(&trial), oracle) {
                if let Ok(e) = evaluate(c, oracle) {
                    let f1 = e.spectral.lambda1;
                    let step_sq: f64 = e
                        .config
                        .flatten()
                        .iter()
                        .zip(&x)
                        .map(|(p, q)| (p - q) * (p - q))
                        .sum();
                    if f1 <= f0 - ctrl.armijo * step_sq / a && f1 <= f0 {
                        accepted = Some((e, moved, a));
                        break;
                    }
                }
            }
            a *= 0.5;
        }
        let Some((next, moved, a)) = accepted else {
            break StopReason::LineSearch;
        };
        constraint_hits += moved as usize;
        alpha = a;
        prev = Some((x, std::mem::take(&mut cur.grad)));
        cur = next;
        history.push(cur.spectral.lambda1);
        iterations += 1;
    };
    if stop == StopReason::LineSearch {
        log::warn!("line search stalled at ‖∇Λ₁‖ = {:e}", norm2(&cur.grad));
    }
    let hessian = hessian_report(&cur.config, oracle, ctrl)?;
    Ok(SearchReport {
        lambda1: cur.spectral.lambda1,
        grad_norm: norm2(&cur.grad),
        config: cur.config,
        spectral: cur.spectral,
        iterations,
        stop,
        history,
        constraint_hits,
        hessian,
    })
}

/// Central differences of the analytic gradient, symmetrized.
pub fn fd_hessian(config: &Configuration, oracle: &dyn GreenOracle, h: f64) -> Result<Matrix> {
    let x = config.flatten();
    let n = x.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let gp = evaluate(config.with_flat(&xp), oracle)?.grad;
        let gm = evaluate(config.with_flat(&xm), oracle)?.grad;
        cols.push(
            gp.iter()
                .zip(&gm)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect::<Vec<_>>(),
        );
    }
    Ok(Matrix::from_fn(n, |i, j| 0.5 * (cols[j][i] + cols[i][j])))
}

pub fn hessian_report(
    config: &Configuration,
    oracle: &dyn GreenOracle,
    ctrl: &SearchControl,
) -> Result<HessianReport> {
    let h = fd_hessian(config, oracle, ctrl.hessian_h)?;
    let eigenvalues = sym_eigen(&h).values;
    let t = ctrl.eig_threshold;
    let positive = eigenvalues.iter().filter(|&&v| v > t).count();
    let negative = eigenvalues.iter().filter(|&&v| v < -t).count();
    let null = eigenvalues.len() - positive - negative;
    let kind = match (positive, negative, null) {
        (_, 0, 0) => CriticalKind::StrictMinimum,
        (0, _, 0) => CriticalKind::StrictMaximum,
        (p, n, _) if p > 0 && n > 0 => CriticalKind::Saddle,
        _ => CriticalKind::Degenerate,
    };
    let radial: Vec<f64> = config
        .points()
        .iter()
        .flat_map(|p| {
            let r = norm(p);
            p.map(|c| if r > 0.0 { c / r } else { 0.0 })
        })
        .collect();
    let rr: f64 = radial.iter().map(|v| v * v).sum();
    let radial_curvature = (rr > 0.0).then(|| {
        let hv = h.mul_vec(&radial);
        hv.iter().zip(&radial).map(|(a, b)| a * b).sum::<f64>() / rr
    });
    Ok(HessianReport {
        eigenvalues,
        positive,
        negative,
        null,
        kind,
        radial_curvature,
    })
}
