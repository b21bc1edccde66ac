//! Green's function, Robin function and their gradients on the annulus
//! `{ rho_in < |x| < 1 } ⊂ ℝ⁴` with Dirichlet conditions, summed from the
//! zonal-harmonic series.
//!
//! The regular part is
//!
//! ```text
//! H(x, y) = (1/ω) Σ_m Q_m(|x|, |y|) Z_m(x̂, ŷ),   G = 1/(2ω|x-y|²) - H,   τ(x) = H(x, x)
//! ```
//!
//! with `p = 2m + 2`, `a = ρ^p` and
//!
//! ```text
//! Q_m(s, t) = [(s^p - a)(t^p - a) + a(1 - a)] / (p (st)^{m+2} (1 - a))
//! ```
//!
//! which is the usual numerator `a - a(s^p + t^p) + s^p t^p` regrouped into
//! two nonnegative products. Every term is evaluated in log space so large
//! truncation orders neither overflow nor cancel.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::special::GegenbauerEvaluator;

/// A point of ℝ⁴.
pub type Point4 = [f64; 4];

/// Surface area of the unit 3-sphere, `2π²`.
pub const OMEGA: f64 = 2.0 * std::f64::consts::PI * std::f64::consts::PI;
/// Bubble normalization `2√2`.
pub const ALPHA4: f64 = 2.0 * std::f64::consts::SQRT_2;
/// Projection constant `2 α₄ ω = 8√2 π²`.
pub const FRAK_C: f64 = 2.0 * ALPHA4 * OMEGA;

/// Green's function evaluation refuses pairs closer than this.
pub const SINGULARITY_GUARD: f64 = 1e-8;
/// Points nearer than this to the boundary may be reported with degraded accuracy.
pub const NEAR_BOUNDARY: f64 = 1e-2;

pub(crate) fn norm(x: &Point4) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub(crate) fn dist(x: &Point4, y: &Point4) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn dot(x: &Point4, y: &Point4) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// The annulus `rho_in < |x| < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnnulusGeometry {
    rho_in: f64,
}

impl AnnulusGeometry {
    pub fn new(rho_in: f64) -> Result<Self> {
        if !(rho_in > 0.0 && rho_in < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "inner radius must lie in (0, 1), got {rho_in}"
            )));
        }
        Ok(Self { rho_in })
    }

    pub fn rho_in(&self) -> f64 {
        self.rho_in
    }

    /// Distance from `x` to the nearer boundary sphere (negative outside).
    pub fn boundary_distance(&self, x: &Point4) -> f64 {
        let r = norm(x);
        (r - self.rho_in).min(1.0 - r)
    }

    pub fn contains(&self, x: &Point4) -> bool {
        self.boundary_distance(x) > 0.0
    }

    fn check_radius_open(&self, s: f64) -> Result<()> {
        if s > self.rho_in && s < 1.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "radius {s} not in the open annulus ({}, 1)",
                self.rho_in
            )))
        }
    }

    fn check_radius_closed(&self, s: f64) -> Result<()> {
        if s >= self.rho_in && s <= 1.0 {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "radius {s} not in the closed annulus [{}, 1]",
                self.rho_in
            )))
        }
    }

    fn check_open(&self, x: &Point4) -> Result<f64> {
        let s = norm(x);
        self.check_radius_open(s).map_err(|_| {
            Error::Domain(format!("{x:?} (|x| = {s}) not inside ({}, 1)", self.rho_in))
        })?;
        Ok(s)
    }
}

/// Truncation controls for the series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesControl {
    pub max_terms: usize,
    pub target_tol: f64,
}

impl Default for SeriesControl {
    fn default() -> Self {
        Self {
            max_terms: 200,
            target_tol: 1e-10,
        }
    }
}

impl SeriesControl {
    pub fn new(max_terms: usize, target_tol: f64) -> Result<Self> {
        if max_terms == 0 || !(target_tol > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "series control needs max_terms >= 1 and target_tol > 0 (got {max_terms}, {target_tol})"
            )));
        }
        Ok(Self {
            max_terms,
            target_tol,
        })
    }

    /// Always sums exactly `terms` terms. The truncated series is then a
    /// smooth function of the points, which finite-difference checks need.
    pub fn fixed(terms: usize) -> Self {
        Self {
            max_terms: terms.max(1),
            target_tol: f64::MIN_POSITIVE,
        }
    }
}

/// A scalar series value with its truncation diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalResult {
    pub value: f64,
    /// Upper bound on the omitted tail of the series.
    pub tail_bound: f64,
    pub terms_used: usize,
    /// Set when `tail_bound` exceeds the requested tolerance.
    pub degraded: bool,
}

/// A gradient with its truncation diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradResult {
    pub value: Point4,
    pub tail_bound: f64,
    pub terms_used: usize,
    pub degraded: bool,
}

/// Radius-only pieces of the `m`-th coefficient.
#[derive(Debug, Clone, Copy)]
struct RadialTerm {
    /// `s^m - a s^{-(m+2)}` and the same at `t`.
    fs: f64,
    ft: f64,
    /// `a / (st)^{m+2}`
    e1: f64,
    /// `1 - a`
    one_minus_a: f64,
    p: f64,
}

impl RadialTerm {
    fn new(m: usize, ln_rho: f64, s: f64, t: f64) -> Self {
        let mf = m as f64;
        let p = 2.0 * mf + 2.0;
        let ln_s = s.ln();
        let ln_t = t.ln();
        let one_minus_a = -(p * ln_rho).exp_m1();
        let fs = (mf * ln_s).exp() * -(p * (ln_rho - ln_s)).exp_m1();
        let ft = (mf * ln_t).exp() * -(p * (ln_rho - ln_t)).exp_m1();
        let e1 = (p * ln_rho - (mf + 2.0) * (ln_s + ln_t)).exp();
        Self {
            fs,
            ft,
            e1,
            one_minus_a,
            p,
        }
    }

    fn q(&self) -> f64 {
        (self.fs * self.ft + self.one_minus_a * self.e1) / (self.p * self.one_minus_a)
    }

    /// `∂Q/∂s` at fixed `t`.
    fn dq_ds(&self, m: usize, ln_rho: f64, s: f64) -> f64 {
        let mf = m as f64;
        let ln_s = s.ln();
        // f'(s) = (m s^m + (m+2) a s^{-(m+2)}) / s
        let g = ((2.0 * mf + 2.0) * ln_rho - (mf + 2.0) * ln_s).exp();
        let dfs = (mf * (mf * ln_s).exp() + (mf + 2.0) * g) / s;
        (dfs * self.ft - self.one_minus_a * (mf + 2.0) * self.e1 / s) / (self.p * self.one_minus_a)
    }
}

/// `Q_m(s, t)` for two radii in the open annulus.
pub fn q_m_pair(m: usize, s: f64, t: f64, geom: &AnnulusGeometry) -> Result<f64> {
    geom.check_radius_open(s)?;
    geom.check_radius_open(t)?;
    Ok(RadialTerm::new(m, geom.rho_in.ln(), s, t).q())
}

/// `Q_m(s) = Q_m(s, s)`.
pub fn q_m_diag(m: usize, s: f64, geom: &AnnulusGeometry) -> Result<f64> {
    q_m_pair(m, s, s, geom)
}

/// `Σ_{m ≥ start} w(m) q^m` for an increasing weight with
/// `w(m+1)/w(m) ≤ ((m+2)/(m+1))^deg`. Terms are added explicitly until the
/// ratio of consecutive terms drops below `(1+q)/2`, then the rest is closed
/// with a geometric bound.
fn poly_geometric_tail(start: usize, q: f64, deg: i32, w: impl Fn(f64) -> f64) -> f64 {
    if q <= 0.0 {
        return if start == 0 { w(0.0) } else { 0.0 };
    }
    if q >= 1.0 {
        return f64::INFINITY;
    }
    let ln_q = q.ln();
    let cap = 0.5 * (1.0 + q);
    let mut sum = 0.0;
    let mut m = start;
    loop {
        let mf = m as f64;
        let term = w(mf) * (mf * ln_q).exp();
        let ratio = ((mf + 2.0) / (mf + 1.0)).powi(deg) * q;
        if ratio <= cap || (term == 0.0 && ratio < 1.0) {
            return sum + term / (1.0 - ratio);
        }
        sum += term;
        m += 1;
    }
}

/// Which series a tail bound is for.
#[derive(Debug, Clone, Copy)]
enum SeriesKind {
    Value,
    Gradient,
}

/// Bound on `Σ_{m ≥ start} |term_m|` for the regular part (or its
/// x-gradient) at radii `s`, `t`.
///
/// Uses `|Q_m| ≤ [(st)^m + a/(st)^{m+2}] / (p (1 - a))`, `|Z_m| ≤ (m+1)²`,
/// `|Z_m'| ≤ (m+1)² m(m+2)/3` and `|∇_x(x̂·ŷ)| ≤ 1/s`.
fn tail_bound(kind: SeriesKind, start: usize, rho: f64, s: f64, t: f64) -> f64 {
    let st = s * t;
    let q_outer = st;
    let q_inner = rho * rho / st;
    let one_minus_a = 1.0 - rho.powi(2 * start as i32 + 2);
    match kind {
        SeriesKind::Value => {
            // (m+1)/(2(1-a)) [ q_o^m + q_i^{m+1}/(st) ]
            let w = |m: f64| (m + 1.0) / (2.0 * one_minus_a);
            poly_geometric_tail(start, q_outer, 1, w)
                + q_inner / st * poly_geometric_tail(start, q_inner, 1, w)
        }
        SeriesKind::Gradient => {
            // (m+1)(m+2)(2 + m/3)/(2(1-a)s) [ ... ]
            let w = |m: f64| (m + 1.0) * (m + 2.0) * (2.0 + m / 3.0) / (2.0 * one_minus_a * s);
            poly_geometric_tail(start, q_outer, 3, w)
                + q_inner / st * poly_geometric_tail(start, q_inner, 3, w)
        }
    }
}

/// Picks the number of terms: the smallest count whose tail bound meets the
/// tolerance, capped at `max_terms`.
fn choose_terms(kind: SeriesKind, rho: f64, s: f64, t: f64, ctrl: &SeriesControl) -> (usize, f64) {
    let tail_at = |n: usize| tail_bound(kind, n, rho, s, t);
    let cap = ctrl.max_terms.max(1);
    let tail_cap = tail_at(cap);
    if tail_cap > ctrl.target_tol {
        return (cap, tail_cap);
    }
    let (mut lo, mut hi) = (1usize, cap);
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        if tail_at(mid) <= ctrl.target_tol {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    (lo, tail_at(lo))
}

fn cos_angle(x: &Point4, y: &Point4, s: f64, t: f64) -> f64 {
    (dot(x, y) / (s * t)).clamp(-1.0, 1.0)
}

/// Regular part `H(x, y)`; defined on the closed annulus including `x = y`.
pub fn regular_part(
    x: &Point4,
    y: &Point4,
    geom: &AnnulusGeometry,
    ctrl: &SeriesControl,
) -> Result<EvalResult> {
    let s = norm(x);
    let t = norm(y);
    geom.check_radius_closed(s)?;
    geom.check_radius_closed(t)?;
    let c = cos_angle(x, y, s, t);
    let (n, tail) = choose_terms(SeriesKind::Value, geom.rho_in, s, t, ctrl);
    let gg = GegenbauerEvaluator::new(n - 1, c)?;
    let ln_rho = geom.rho_in.ln();
    let sum: f64 = (0..n)
        .map(|m| RadialTerm::new(m, ln_rho, s, t).q() * gg.zonal(m))
        .sum();
    Ok(EvalResult {
        value: sum / OMEGA,
        tail_bound: tail / OMEGA,
        terms_used: n,
        degraded: tail > ctrl.target_tol,
    })
}

/// Dirichlet Green's function `G(x, y)` for two distinct interior points.
pub fn green(
    x: &Point4,
    y: &Point4,
    geom: &AnnulusGeometry,
    ctrl: &SeriesControl,
) -> Result<EvalResult> {
    geom.check_open(x)?;
    geom.check_open(y)?;
    let d = dist(x, y);
    if d < SINGULARITY_GUARD {
        return Err(Error::Singularity(d));
    }
    let h = regular_part(x, y, geom, ctrl)?;
    Ok(EvalResult {
        value: 1.0 / (2.0 * OMEGA * d * d) - h.value,
        ..h
    })
}

/// Robin function `τ(x) = H(x, x)`, a function of `|x|` only.
pub fn robin(x: &Point4, geom: &AnnulusGeometry, ctrl: &SeriesControl) -> Result<EvalResult> {
    let s = geom.check_open(x)?;
    robin_radial(s, geom, ctrl)
}

/// Robin function at radius `s`.
pub fn robin_radial(s: f64, geom: &AnnulusGeometry, ctrl: &SeriesControl) -> Result<EvalResult> {
    geom.check_radius_open(s)?;
    let (n, tail) = choose_terms(SeriesKind::Value, geom.rho_in, s, s, ctrl);
    let ln_rho = geom.rho_in.ln();
    let sum: f64 = (0..n)
        .map(|m| {
            let d = (m as f64 + 1.0).powi(2);
            d * RadialTerm::new(m, ln_rho, s, s).q()
        })
        .sum();
    Ok(EvalResult {
        value: sum / OMEGA,
        tail_bound: tail / OMEGA,
        terms_used: n,
        degraded: tail > ctrl.target_tol,
    })
}

/// `∇_x H(x, y)`.
pub fn grad_regular_part(
    x: &Point4,
    y: &Point4,
    geom: &AnnulusGeometry,
    ctrl: &SeriesControl,
) -> Result<GradResult> {
    let s = norm(x);
    let t = norm(y);
    geom.check_radius_closed(s)?;
    geom.check_radius_closed(t)?;
    let c = cos_angle(x, y, s, t);
    let (n, tail) = choose_terms(SeriesKind::Gradient, geom.rho_in, s, t, ctrl);
    let gg = GegenbauerEvaluator::new(n - 1, c)?;
    let ln_rho = geom.rho_in.ln();
    let mut radial = 0.0;
    let mut angular = 0.0;
    for m in 0..n {
        let term = RadialTerm::new(m, ln_rho, s, t);
        radial += term.dq_ds(m, ln_rho, s) * gg.zonal(m);
        angular += term.q() * gg.zonal_deriv(m);
    }
    // ∇_x (x̂·ŷ) = (ŷ - c x̂)/s
    let mut g = [0.0; 4];
    for i in 0..4 {
        let xh = x[i] / s;
        let yh = y[i] / t;
        g[i] = (radial * xh + angular * (yh - c * xh) / s) / OMEGA;
    }
    Ok(GradResult {
        value: g,
        tail_bound: tail / OMEGA,
        terms_used: n,
        degraded: tail > ctrl.target_tol,
    })
}

/// `∇_x G(x, y)`.
pub fn grad_green(
    x: &Point4,
    y: &Point4,
    geom: &AnnulusGeometry,
    ctrl: &SeriesControl,
) -> Result<GradResult> {
    geom.check_open(x)?;
    geom.check_open(y)?;
    let d = dist(x, y);
    if d < SINGULARITY_GUARD {
        return Err(Error::Singularity(d));
    }
    let h = grad_regular_part(x, y, geom, ctrl)?;
    let scale = -1.0 / (OMEGA * d.powi(4));
    let mut g = [0.0; 4];
    for i in 0..4 {
        g[i] = scale * (x[i] - y[i]) - h.value[i];
    }
    Ok(GradResult { value: g, ..h })
}

/// `dτ/ds` at radius `s`.
pub fn robin_radial_derivative(
    s: f64,
    geom: &AnnulusGeometry,
    ctrl: &SeriesControl,
) -> Result<EvalResult> {
    geom.check_radius_open(s)?;
    let (n, tail) = choose_terms(SeriesKind::Gradient, geom.rho_in, s, s, ctrl);
    let ln_rho = geom.rho_in.ln();
    let sum: f64 = (0..n)
        .map(|m| {
            let d = (m as f64 + 1.0).powi(2);
            // d/ds Q(s, s) = 2 ∂_s Q(s, t)|_{t=s}
            d * 2.0 * RadialTerm::new(m, ln_rho, s, s).dq_ds(m, ln_rho, s)
        })
        .sum();
    Ok(EvalResult {
        value: sum / OMEGA,
        tail_bound: 2.0 * tail / OMEGA,
        terms_used: n,
        degraded: 2.0 * tail > ctrl.target_tol,
    })
}

/// `∇τ(x)`, which points along `x`.
pub fn grad_robin(x: &Point4, geom: &AnnulusGeometry, ctrl: &SeriesControl) -> Result<GradResult> {
    let s = geom.check_open(x)?;
    let d = robin_radial_derivative(s, geom, ctrl)?;
    let mut g = [0.0; 4];
    for i in 0..4 {
        g[i] = d.value * x[i] / s;
    }
    Ok(GradResult {
        value: g,
        tail_bound: d.tail_bound,
        terms_used: d.terms_used,
        degraded: d.degraded,
    })
}

/// Green's function between two perpendicular points on the ring of radius
/// `r`, from the full series and from the free-space term alone
/// (`1/(4ωr²)`, which is what one gets by dropping every series term).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerpendicularDiagnostic {
    pub r: f64,
    pub series: f64,
    pub free_space_only: f64,
    pub abs_diff: f64,
    pub tail_bound: f64,
    /// True when the two values differ by more than ten tail bounds.
    pub discrepant: bool,
}

pub fn perpendicular_green_diagnostic(
    r: f64,
    geom: &AnnulusGeometry,
    ctrl: &SeriesControl,
) -> Result<PerpendicularDiagnostic> {
    let g = green(&[r, 0.0, 0.0, 0.0], &[0.0, r, 0.0, 0.0], geom, ctrl)?;
    let free = 1.0 / (4.0 * OMEGA * r * r);
    let abs_diff = (g.value - free).abs();
    Ok(PerpendicularDiagnostic {
        r,
        series: g.value,
        free_space_only: free,
        abs_diff,
        tail_bound: g.tail_bound,
        discrepant: abs_diff > 10.0 * g.tail_bound,
    })
}

/// The annulus Green/Robin functions behind the [`GreenOracle`](crate::interaction::GreenOracle)
/// interface.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AnnulusGreen {
    pub geom: AnnulusGeometry,
    pub ctrl: SeriesControl,
}

impl AnnulusGreen {
    pub fn new(rho_in: f64, ctrl: SeriesControl) -> Result<Self> {
        Ok(Self {
            geom: AnnulusGeometry::new(rho_in)?,
            ctrl,
        })
    }

    pub fn with_control(&self, ctrl: SeriesControl) -> Self {
        Self {
            geom: self.geom,
            ctrl,
        }
    }
}

impl crate::interaction::GreenOracle for AnnulusGreen {
    fn green(&self, x: &Point4, y: &Point4) -> Result<EvalResult> {
        green(x, y, &self.geom, &self.ctrl)
    }

    fn robin(&self, x: &Point4) -> Result<EvalResult> {
        robin(x, &self.geom, &self.ctrl)
    }

    fn regular(&self, x: &Point4, y: &Point4) -> Result<EvalResult> {
        regular_part(x, y, &self.geom, &self.ctrl)
    }

    fn grad_green(&self, x: &Point4, y: &Point4) -> Result<GradResult> {
        grad_green(x, y, &self.geom, &self.ctrl)
    }

    fn grad_robin(&self, x: &Point4) -> Result<GradResult> {
        grad_robin(x, &self.geom, &self.ctrl)
    }

    fn boundary_distance(&self, x: &Point4) -> f64 {
        self.geom.boundary_distance(x)
    }

    fn project_inside(&self, x: &Point4, margin: f64) -> Point4 {
        let r = norm(x);
        let lo = self.geom.rho_in + margin;
        let hi = 1.0 - margin;
        if r == 0.0 || lo > hi {
            return *x;
        }
        let target = r.clamp(lo, hi);
        if target == r {
            return *x;
        }
        let f = target / r;
        [x[0] * f, x[1] * f, x[2] * f, x[3] * f]
    }
}
