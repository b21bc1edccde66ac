//! Aubin–Talenti bubbles `U_{δ,ξ}` in ℝ⁴, the kernel of the linearized
//! operator, projected bubbles, blow-up rates and multi-bubble profiles.

use rayon::prelude::*;
use serde::Serialize;

use crate::annulus::{dist, Point4, ALPHA4, FRAK_C, OMEGA};
use crate::error::{Error, Result};
use crate::interaction::{Configuration, GreenOracle};
use crate::reduced::ReducedSolution;

/// Above this concentration rate the two-term projection is inaccurate.
pub const PROJECTION_DELTA_WARN: f64 = 0.05;
/// Rates below this are reported as zero, with the log kept exactly.
pub const RATE_FLOOR: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BubbleParams {
    pub delta: f64,
    pub xi: Point4,
}

impl BubbleParams {
    pub fn new(delta: f64, xi: Point4) -> Result<Self> {
        if !(delta > 0.0) || !delta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "delta must be positive, got {delta}"
            )));
        }
        Ok(Self { delta, xi })
    }

    fn scaled(&self, x: &Point4) -> Point4 {
        std::array::from_fn(|l| (x[l] - self.xi[l]) / self.delta)
    }
}

/// `U_{δ,ξ}(x) = α₄ δ / (δ² + |x - ξ|²)`.
pub fn bubble_u(p: &BubbleParams, x: &Point4) -> f64 {
    let r = dist(x, &p.xi);
    ALPHA4 * p.delta / (p.delta * p.delta + r * r)
}

/// `δ⁻¹ ψʲ((x - ξ)/δ)` with `ψ⁰(y) = α₄(|y|² - 1)/(1 + |y|²)²` and
/// `ψʲ(y) = -2α₄ y_j/(1 + |y|²)²` for `j = 1..4`.
pub fn psi_kernel(j: usize, p: &BubbleParams, x: &Point4) -> Result<f64> {
    if j > 4 {
        return Err(Error::InvalidParameter(format!(
            "kernel index must be 0..=4, got {j}"
        )));
    }
    let y = p.scaled(x);
    let y2: f64 = y.iter().map(|c| c * c).sum();
    let den = (1.0 + y2) * (1.0 + y2);
    let v = if j == 0 {
        ALPHA4 * (y2 - 1.0) / den
    } else {
        -2.0 * ALPHA4 * y[j - 1] / den
    };
    Ok(v / p.delta)
}

/// Second-order central-difference Laplacian in ℝ⁴.
pub fn fd_laplacian(f: impl Fn(&Point4) -> f64, x: &Point4, h: f64) -> f64 {
    let f0 = f(x);
    (0..4)
        .map(|l| {
            let mut xp = *x;
            let mut xm = *x;
            xp[l] += h;
            xm[l] -= h;
            f(&xp) + f(&xm) - 2.0 * f0
        })
        .sum::<f64>()
        / (h * h)
}

/// `ΔU + U³` with the Laplacian by finite differences.
pub fn bubble_pde_residual(p: &BubbleParams, x: &Point4, h: f64) -> f64 {
    let u = bubble_u(p, x);
    fd_laplacian(|y| bubble_u(p, y), x, h) + u * u * u
}

/// `Δψʲ + 3U²ψʲ` with the Laplacian by finite differences.
pub fn kernel_pde_residual(j: usize, p: &BubbleParams, x: &Point4, h: f64) -> Result<f64> {
    let u = bubble_u(p, x);
    let psi = psi_kernel(j, p, x)?;
    Ok(fd_laplacian(|y| psi_kernel(j, p, y).unwrap(), x, h) + 3.0 * u * u * psi)
}

/// `PU ≈ U - 𝔠 δ H(x, ξ)`. The neglected terms are `O(δ³)`; above
/// [`PROJECTION_DELTA_WARN`] they are no longer small.
pub fn projected_bubble(p: &BubbleParams, x: &Point4, oracle: &dyn GreenOracle) -> Result<f64> {
    let h = oracle.regular(x, &p.xi)?;
    Ok(bubble_u(p, x) - FRAK_C * p.delta * h.value)
}

/// `𝔠 δ G(x, ξ)`, the far-field form of the projected bubble.
pub fn projected_bubble_far(p: &BubbleParams, x: &Point4, oracle: &dyn GreenOracle) -> Result<f64> {
    Ok(FRAK_C * p.delta * oracle.green(x, &p.xi)?.value)
}

/// Concentration rates `δ₁ = exp(-8π²λ/ε)`, `δ_i = δ₁ d_i`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rates {
    pub epsilon: f64,
    pub lambda: f64,
    /// `ln δ_h`, exact even where `δ_h` underflows.
    pub log_deltas: Vec<f64>,
    /// `δ_h`, or 0 where it falls below [`RATE_FLOOR`].
    pub deltas: Vec<f64>,
    pub underflow: bool,
}

pub fn rates(epsilon: f64, lambda: f64, d: &[f64]) -> Result<Rates> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "lambda must be positive, got {lambda}"
        )));
    }
    if let Some(bad) = d.iter().find(|&&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "weights must be positive, got {bad}"
        )));
    }
    let ln1 = -8.0 * std::f64::consts::PI.powi(2) * lambda / epsilon;
    let floor = RATE_FLOOR.ln();
    let mut log_deltas = vec![ln1];
    log_deltas.extend(d.iter().map(|di| ln1 + di.ln()));
    let d1 = if ln1 >= floor { ln1.exp() } else { 0.0 };
    let mut deltas = vec![d1];
    // δ_i = δ₁ d_i directly so the ratio is exact to rounding.
    deltas.extend(d.iter().zip(&log_deltas[1..]).map(|(di, &l)| {
        if d1 > 0.0 && l >= floor {
            d1 * di
        } else {
            0.0
        }
    }));
    let underflow = deltas.contains(&0.0);
    Ok(Rates {
        epsilon,
        lambda,
        log_deltas,
        deltas,
        underflow,
    })
}

/// A rectangular grid in the `(x₁, x₂)` plane with `x₃ = x₄ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SliceGrid {
    pub x1: (f64, f64),
    pub x2: (f64, f64),
    pub n1: usize,
    pub n2: usize,
}

impl SliceGrid {
    pub fn square(half_width: f64, n: usize) -> Self {
        Self {
            x1: (-half_width, half_width),
            x2: (-half_width, half_width),
            n1: n,
            n2: n,
        }
    }

    /// Points in row-major order (`x₂` outer, `x₁` inner).
    pub fn points(&self) -> Vec<Point4> {
        let axis = |(lo, hi): (f64, f64), n: usize, i: usize| {
            if n <= 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        };
        (0..self.n2)
            .flat_map(|j| {
                (0..self.n1).map(move |i| {
                    [
                        axis(self.x1, self.n1, i),
                        axis(self.x2, self.n2, j),
                        0.0,
                        0.0,
                    ]
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileSample {
    pub x: Point4,
    pub w: f64,
}

/// `W = Σ_i PU_{δ_i, ξ_i}` sampled on a grid, with the data it came from.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnsatzProfile {
    pub epsilon: f64,
    pub lambda: f64,
    pub lambda1: f64,
    pub d: Vec<f64>,
    pub rates: Rates,
    pub bubbles: Vec<BubbleParams>,
    pub samples: Vec<ProfileSample>,
    /// Grid points outside the domain.
    pub skipped: usize,
    /// Bubbles left out because their rate underflowed.
    pub dropped_bubbles: usize,
}

pub fn ansatz_profile(
    config: &Configuration,
    solution: &ReducedSolution,
    epsilon: f64,
    oracle: &dyn GreenOracle,
    grid: &SliceGrid,
) -> Result<AnsatzProfile> {
    if solution.d.len() + 1 != config.k() {
        return Err(Error::InvalidParameter(
            "solution does not match the configuration".into(),
        ));
    }
    let rt = rates(epsilon, solution.lambda, &solution.d)?;
    let bubbles: Vec<BubbleParams> = config
        .points()
        .iter()
        .zip(&rt.deltas)
        .filter(|(_, &dl)| dl > 0.0)
        .map(|(xi, &dl)| BubbleParams::new(dl, *xi))
        .collect::<Result<_>>()?;
    let dropped_bubbles = config.k() - bubbles.len();
    for b in bubbles.iter().filter(|b| b.delta > PROJECTION_DELTA_WARN) {
        log::warn!("projection expansion used with large delta {}", b.delta);
    }
    if dropped_bubbles > 0 {
        log::warn!("{dropped_bubbles} bubble(s) left out: rate below {RATE_FLOOR:e}");
    }
    let pts: Vec<Point4> = grid
        .points()
        .into_iter()
        .filter(|x| oracle.boundary_distance(x) >= 0.0)
        .collect();
    let skipped = grid.n1 * grid.n2 - pts.len();
    let samples = pts
        .par_iter()
        .map(|x| {
            let w = bubbles
                .iter()
                .map(|b| projected_bubble(b, x, oracle))
                .sum::<Result<f64>>()?;
            Ok(ProfileSample { x: *x, w })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AnsatzProfile {
        epsilon,
        lambda: solution.lambda,
        lambda1: solution.spectral.lambda1,
        d: solution.d.clone(),
        rates: rt,
        bubbles,
        samples,
        skipped,
        dropped_bubbles,
    })
}

/// Outcome of the radial quadrature `ω ∫₀^∞ (r² - 1) r³/(1 + r²)⁴ dr`
/// against its closed form `ω/12 = π²/6`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadReport {
    pub value: f64,
    pub exact: f64,
    pub deviation: f64,
    pub evaluations: usize,
}

/// Integrand on `[0, 1]`.
fn inner(r: f64) -> f64 {
    (r * r - 1.0) * r * r * r / (1.0 + r * r).powi(4)
}

/// The `[1, ∞)` part after `r = 1/u`.
fn outer(u: f64) -> f64 {
    (1.0 - u * u) * u / (1.0 + u * u).powi(4)
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, evals: &mut usize) -> f64 {
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
        evals: &mut usize,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        *evals += 2;
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let diff = left + right - whole;
        if depth == 0 || diff.abs() <= 15.0 * tol {
            return left + right + diff / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, evals)
            + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, evals)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    *evals += 3;
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    rec(f, a, b, fa, fm, fb, whole, tol, 50, evals)
}

/// Adaptive Simpson on `[0, 1]`, split at the sign change `r = 1` with the
/// unbounded half mapped back to `[0, 1]`.
pub fn quad_identity_check() -> QuadReport {
    let mut evaluations = 0;
    let a = adaptive_simpson(&inner, 0.0, 1.0, 1e-14, &mut evaluations);
    let b = adaptive_simpson(&outer, 0.0, 1.0, 1e-14, &mut evaluations);
    report(OMEGA * (a + b), evaluations)
}

/// Composite Simpson with `panels` panels on each half.
pub fn quad_identity_fixed(panels: usize) -> QuadReport {
    let n = 2 * panels.max(1);
    let h = 1.0 / n as f64;
    let simpson = |f: fn(f64) -> f64| {
        (0..=n)
            .map(|i| {
                let w = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * f(i as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0
    };
    report(OMEGA * (simpson(inner) + simpson(outer)), 2 * (n + 1))
}

fn report(value: f64, evaluations: usize) -> QuadReport {
    let exact = std::f64::consts::PI.powi(2) / 6.0;
    QuadReport {
        value,
        exact,
        deviation: (value - exact).abs(),
        evaluations,
    }
}
