//! Rings of `k` equally spaced points of radius `r` in the annulus. `M` is
//! circulant there, so its spectrum has a closed form in the first row.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;

use crate::annulus::{green, q_m_diag, robin_radial, AnnulusGeometry, SeriesControl, OMEGA};
use crate::error::{Error, Result};
use crate::interaction::Configuration;

/// Sufficient condition threshold for `k = 2`.
pub const SUFFICIENT_K2: f64 = 1.0 / 15.0;
/// Sufficient condition threshold for `k = 4`.
pub const SUFFICIENT_K4: f64 = 5.0 / 11.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RingConfig {
    pub k: usize,
    pub r: f64,
}

impl RingConfig {
    pub fn new(k: usize, r: f64, geom: &AnnulusGeometry) -> Result<Self> {
        if k < 2 {
            return Err(Error::InvalidParameter(format!(
                "a ring needs k ≥ 2, got {k}"
            )));
        }
        if !(r > geom.rho_in() && r < 1.0) {
            return Err(Error::Domain(format!(
                "ring radius {r} outside ({}, 1)",
                geom.rho_in()
            )));
        }
        Ok(Self { k, r })
    }

    /// `ξ_j = r (cos θ_j, sin θ_j, 0, 0)` with `θ_j = 2π(j-1)/k`.
    pub fn points(&self) -> Vec<[f64; 4]> {
        (0..self.k)
            .map(|j| {
                let th = 2.0 * PI * j as f64 / self.k as f64;
                [self.r * th.cos(), self.r * th.sin(), 0.0, 0.0]
            })
            .collect()
    }

    pub fn configuration(&self, sep: f64) -> Result<Configuration> {
        Configuration::new(self.points(), sep)
    }
}

/// First row of the circulant matrix: `a₀ = τ(ξ₁)`, `a_j = -G(ξ₁, ξ_{j+1})`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CirculantCoeffs {
    pub a: Vec<f64>,
    /// Sum of the tail bounds of all coefficients.
    pub tail_bound: f64,
    pub degraded: bool,
    /// `max_j |a_j - a_{k-j}|`
    pub reflection_error: f64,
}

pub fn circulant_coeffs(
    ring: &RingConfig,
    geom: &AnnulusGeometry,
    ctrl: &SeriesControl,
) -> Result<CirculantCoeffs> {
    let pts = ring.points();
    let tau = robin_radial(ring.r, geom, ctrl)?;
    let mut a = vec![tau.value];
    let mut tail_bound = tau.tail_bound;
    let mut degraded = tau.degraded;
    for p in &pts[1..] {
        let g = green(&pts[0], p, geom, ctrl)?;
        a.push(-g.value);
        tail_bound += g.tail_bound;
        degraded |= g.degraded;
    }
    if degraded {
        log::debug!(
            "ring k={} r={} uses truncated series (tail {tail_bound:e})",
            ring.k,
            ring.r
        );
    }
    let k = ring.k;
    let reflection_error = (1..k).map(|j| (a[j] - a[k - j]).abs()).fold(0.0, f64::max);
    Ok(CirculantCoeffs {
        a,
        tail_bound,
        degraded,
        reflection_error,
    })
}

/// `Λ_ℓ = Σ_j a_j e^{2πi j(ℓ-1)/k}` for `ℓ = 1..k`, in that order.
pub fn circulant_eigs(a: &[f64]) -> Result<Vec<f64>> {
    let k = a.len();
    if k == 0 {
        return Err(Error::InvalidParameter("empty coefficient vector".into()));
    }
    let scale: f64 = a.iter().map(|v| v.abs()).sum();
    let tol = 1e-12 * scale.max(f64::MIN_POSITIVE);
    (0..k)
        .map(|l| {
            let (mut re, mut im) = (0.0, 0.0);
            for (j, aj) in a.iter().enumerate() {
                let th = 2.0 * PI * ((j * l) % k) as f64 / k as f64;
                re += aj * th.cos();
                im += aj * th.sin();
            }
            if im.abs() > tol {
                return Err(Error::Asymmetric(im.abs()));
            }
            Ok(re)
        })
        .collect()
}

/// `Λ₁(r) = τ(ξ₁) - Σ_j G(ξ₁, ξ_{j+1})` with the summed tail bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RingValue {
    pub value: f64,
    pub tail_bound: f64,
    pub degraded: bool,
}

pub fn lambda1_ring(
    ring: &RingConfig,
    geom: &AnnulusGeometry,
    ctrl: &SeriesControl,
) -> Result<RingValue> {
    let c = circulant_coeffs(ring, geom, ctrl)?;
    Ok(RingValue {
        value: c.a.iter().sum(),
        tail_bound: c.tail_bound,
        degraded: c.degraded,
    })
}

/// For `k = 4`: the neighbour interaction `G(ξ₁, ξ₂)` between perpendicular
/// points from the full series and from the free-space term `1/(4ωr²)`
/// alone, and `Λ₁` with each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerpendicularValues {
    pub g_series: f64,
    pub g_free_space: f64,
    pub lambda1_series: f64,
    pub lambda1_free_space: f64,
}

fn perpendicular_values(r: f64, coeffs: &[f64]) -> PerpendicularValues {
    let g_series = -coeffs[1];
    let g_free_space = 1.0 / (4.0 * OMEGA * r * r);
    let lambda1_series: f64 = coeffs.iter().sum();
    PerpendicularValues {
        g_series,
        g_free_space,
        lambda1_series,
        lambda1_free_space: lambda1_series + 2.0 * g_series - 2.0 * g_free_space,
    }
}

/// All circulant eigenvalues at one radius.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RingPoint {
    pub r: f64,
    /// `Λ_ℓ` for `ℓ = 1..k`.
    pub lambdas: Vec<f64>,
    pub tail_bound: f64,
    pub degraded: bool,
    /// Present for `k = 4`.
    pub perpendicular: Option<PerpendicularValues>,
}

pub fn ring_point(
    k: usize,
    r: f64,
    geom: &AnnulusGeometry,
    ctrl: &SeriesControl,
) -> Result<RingPoint> {
    let ring = RingConfig::new(k, r, geom)?;
    let c = circulant_coeffs(&ring, geom, ctrl)?;
    let lambdas = circulant_eigs(&c.a)?;
    Ok(RingPoint {
        r,
        lambdas,
        tail_bound: c.tail_bound,
        degraded: c.degraded,
        perpendicular: (k == 4).then(|| perpendicular_values(r, &c.a)),
    })
}

/// The default radius grid on `(ρ, 1)`: a quarter of the points
/// log-spaced toward each end, the rest uniform in between. The outermost
/// points sit `10⁻³ (1 - ρ)` from the boundary.
pub fn default_grid(rho_in: f64, n: usize) -> Vec<f64> {
    let n = n.max(8);
    let w = 1.0 - rho_in;
    let eta = 1e-3 * w;
    let band = 0.1 * w;
    let n_end = n / 4;
    let n_mid = n - 2 * n_end;
    let log_pts = |i: usize| (eta.ln() + (band.ln() - eta.ln()) * i as f64 / n_end as f64).exp();
    let mut grid = Vec::with_capacity(n);
    grid.extend((0..n_end).map(|i| rho_in + log_pts(i)));
    grid.extend(
        (0..n_mid).map(|i| rho_in + band + (w - 2.0 * band) * i as f64 / (n_mid - 1) as f64),
    );
    grid.extend((0..n_end).rev().map(|i| 1.0 - log_pts(i)));
    grid
}

/// `Λ_ℓ(r)` over a radius grid plus the refined minimizer of `Λ₁`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RingScan {
    pub k: usize,
    pub rho_in: f64,
    pub r_grid: Vec<f64>,
    /// `lambda_by_ell[ℓ][i] = Λ_{ℓ+1}(r_i)`.
    pub lambda_by_ell: Vec<Vec<f64>>,
    pub tail_bounds: Vec<f64>,
    pub degraded_points: usize,
    /// For `k = 4`, one entry per grid point.
    pub perpendicular: Option<Vec<PerpendicularValues>>,
    pub grid_argmin: usize,
    pub argmin_r: f64,
    pub min_value: f64,
    /// Tail bound of `Λ₁` at `argmin_r`.
    pub min_tail: f64,
    /// Width of the final golden-section bracket.
    pub argmin_accuracy: f64,
    /// For `k = 4`, the minimum over the grid and refinement of `Λ₁` with the
    /// free-space neighbour interaction.
    pub min_free_space: Option<(f64, f64)>,
}

pub fn min_over_r(
    k: usize,
    geom: &AnnulusGeometry,
    ctrl: &SeriesControl,
    resolution: usize,
) -> Result<RingScan> {
    scan_grid(k, geom, ctrl, default_grid(geom.rho_in(), resolution))
}

pub fn scan_grid(
    k: usize,
    geom: &AnnulusGeometry,
    ctrl: &SeriesControl,
    r_grid: Vec<f64>,
) -> Result<RingScan> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!(
            "a ring needs k ≥ 2, got {k}"
        )));
    }
    if r_grid.len() < 3 || r_grid.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter(
            "radius grid must be increasing with ≥ 3 points".into(),
        ));
    }
    let points = r_grid
        .par_iter()
        .map(|&r| ring_point(k, r, geom, ctrl))
        .collect::<Result<Vec<_>>>()?;
    let lambda_by_ell: Vec<Vec<f64>> = (0..k)
        .map(|l| points.iter().map(|p| p.lambdas[l]).collect())
        .collect();
    let tail_bounds = points.iter().map(|p| p.tail_bound).collect();
    let degraded_points = points.iter().filter(|p| p.degraded).count();
    let perpendicular = (k == 4).then(|| {
        points
            .iter()
            .map(|p| p.perpendicular.unwrap())
            .collect::<Vec<_>>()
    });

    let l1 = &lambda_by_ell[0];
    let f = |r: f64| lambda1_ring(&RingConfig::new(k, r, geom)?, geom, ctrl).map(|v| v.value);
    let (grid_argmin, argmin_r, min_value, argmin_accuracy) = refine_min(&r_grid, l1, f)?;
    let min_tail = lambda1_ring(&RingConfig::new(k, argmin_r, geom)?, geom, ctrl)?.tail_bound;

    let min_free_space = match &perpendicular {
        Some(pv) => {
            let vals: Vec<f64> = pv.iter().map(|p| p.lambda1_free_space).collect();
            let g = |r: f64| {
                ring_point(k, r, geom, ctrl).map(|p| p.perpendicular.unwrap().lambda1_free_space)
            };
            let (_, r, v, _) = refine_min(&r_grid, &vals, g)?;
            Some((r, v))
        }
        None => None,
    };
    Ok(RingScan {
        k,
        rho_in: geom.rho_in(),
        r_grid,
        lambda_by_ell,
        tail_bounds,
        degraded_points,
        perpendicular,
        grid_argmin,
        argmin_r,
        min_value,
        min_tail,
        argmin_accuracy,
        min_free_space,
    })
}

/// Grid bracket around the smallest sample, then golden-section search.
/// Returns `(grid index, argmin, min, bracket width)`.
fn refine_min(
    grid: &[f64],
    vals: &[f64],
    f: impl Fn(f64) -> Result<f64>,
) -> Result<(usize, f64, f64, f64)> {
    let i = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::Scan("empty scan".into()))?;
    if i == 0 || i == grid.len() - 1 {
        return Err(Error::Scan(format!(
            "minimum at the grid end r = {} (values {:e} … {:e}); no interior bracket",
            grid[i],
            vals[0],
            vals[vals.len() - 1]
        )));
    }
    let (mut a, mut b) = (grid[i - 1], grid[i + 1]);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c)?;
    let mut fd = f(d)?;
    for _ in 0..200 {
        if b - a <= 1e-12 * (1.0 + a.abs()) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d)?;
        }
    }
    let (r, v) = if fc <= fd { (c, fc) } else { (d, fd) };
    let (r, v) = if vals[i] < v {
        (grid[i], vals[i])
    } else {
        (r, v)
    };
    Ok((i, r, v, b - a))
}

/// Which `Λ₁` a threshold search bisects on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum RingModel {
    /// Every Green's function from the full series.
    FullSeries,
    /// For `k = 4`, the perpendicular neighbours interact through the
    /// free-space term `1/(4ωr²)` only.
    FreeSpacePerpendicular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdSample {
    pub rho: f64,
    pub min_value: f64,
    pub argmin_r: f64,
    pub tail_bound: f64,
    pub max_terms: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdResult {
    pub k: usize,
    pub model: RingModel,
    /// Midpoint of the final bracket; `None` without a sign change.
    pub rho_star: Option<f64>,
    pub bracket: (f64, f64),
    pub bracket_width: f64,
    pub min_at_lo: f64,
    pub min_at_hi: f64,
    /// Sign of `min_r Λ₁` over the whole range when it does not change.
    pub one_signed: Option<f64>,
    pub samples: Vec<ThresholdSample>,
    /// `1/15` for `k = 2`, `5/11` for `k = 4`.
    pub sufficient_bound: Option<f64>,
    /// `rho_star ≤ bound`: positivity on `(bound, 1)` bounds the threshold
    /// from above.
    pub consistent_with_upper_reading: Option<bool>,
    /// `rho_star > bound`, the literal direction of the inequality.
    pub consistent_with_lower_reading: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdControl {
    pub range: (f64, f64),
    pub tol: f64,
    pub resolution: usize,
    pub ctrl: SeriesControl,
    /// Ceiling for the adaptive term count.
    pub max_terms_ceiling: usize,
}

impl Default for ThresholdControl {
    fn default() -> Self {
        Self {
            range: (0.01, 0.99),
            tol: 1e-4,
            resolution: 128,
            ctrl: SeriesControl {
                max_terms: 4000,
                target_tol: 1e-12,
            },
            max_terms_ceiling: 1 << 18,
        }
    }
}

fn min_for_model(
    k: usize,
    rho: f64,
    model: RingModel,
    tc: &ThresholdControl,
) -> Result<ThresholdSample> {
    let geom = AnnulusGeometry::new(rho)?;
    let mut ctrl = tc.ctrl;
    loop {
        let scan = min_over_r(k, &geom, &ctrl, tc.resolution)?;
        let (argmin_r, min_value) = match model {
            RingModel::FullSeries => (scan.argmin_r, scan.min_value),
            RingModel::FreeSpacePerpendicular => scan
                .min_free_space
                .ok_or_else(|| Error::InvalidParameter("free-space model needs k = 4".into()))?,
        };
        let tail = lambda1_ring(&RingConfig::new(k, argmin_r, &geom)?, &geom, &ctrl)?.tail_bound;
        if tail < min_value.abs() / 10.0 || ctrl.max_terms >= tc.max_terms_ceiling {
            if tail >= min_value.abs() / 10.0 {
                log::warn!("sign of min Λ₁ at ρ = {rho} not resolved: {min_value:e} ± {tail:e}");
            }
            return Ok(ThresholdSample {
                rho,
                min_value,
                argmin_r,
                tail_bound: tail,
                max_terms: ctrl.max_terms,
            });
        }
        ctrl.max_terms *= 4;
        ctrl.target_tol = (ctrl.target_tol * 1e-2).max(1e-16);
    }
}

/// Bisection on `ρ` for the sign change of `min_r Λ₁`.
pub fn threshold_rho(k: usize, model: RingModel, tc: &ThresholdControl) -> Result<ThresholdResult> {
    if model == RingModel::FreeSpacePerpendicular && k != 4 {
        return Err(Error::InvalidParameter(
            "free-space model needs k = 4".into(),
        ));
    }
    let (mut lo, mut hi) = tc.range;
    if !(0.0 < lo && lo < hi && hi < 1.0) || !(tc.tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "bad ρ range ({lo}, {hi}) or tolerance {}",
            tc.tol
        )));
    }
    let mut samples = Vec::new();
    let s_lo = min_for_model(k, lo, model, tc)?;
    let s_hi = min_for_model(k, hi, model, tc)?;
    samples.push(s_lo);
    samples.push(s_hi);
    let sufficient_bound = match k {
        2 => Some(SUFFICIENT_K2),
        4 => Some(SUFFICIENT_K4),
        _ => None,
    };
    let (mut f_lo, mut f_hi) = (s_lo.min_value, s_hi.min_value);
    if (f_lo > 0.0) == (f_hi > 0.0) {
        log::warn!("min Λ₁ has the same sign at both ends of ({lo}, {hi})");
        return Ok(ThresholdResult {
            k,
            model,
            rho_star: None,
            bracket: (lo, hi),
            bracket_width: hi - lo,
            min_at_lo: f_lo,
            min_at_hi: f_hi,
            one_signed: Some(f_lo.signum()),
            samples,
            sufficient_bound,
            consistent_with_upper_reading: None,
            consistent_with_lower_reading: None,
        });
    }
    let positive_high = f_hi > 0.0;
    while hi - lo > tc.tol {
        let mid = 0.5 * (lo + hi);
        let s = min_for_model(k, mid, model, tc)?;
        samples.push(s);
        if (s.min_value > 0.0) == positive_high {
            hi = mid;
            f_hi = s.min_value;
        } else {
            lo = mid;
            f_lo = s.min_value;
        }
    }
    let rho_star = 0.5 * (lo + hi);
    Ok(ThresholdResult {
        k,
        model,
        rho_star: Some(rho_star),
        bracket: (lo, hi),
        bracket_width: hi - lo,
        min_at_lo: f_lo,
        min_at_hi: f_hi,
        one_signed: None,
        samples,
        sufficient_bound,
        consistent_with_upper_reading: sufficient_bound.map(|b| rho_star <= b),
        consistent_with_lower_reading: sufficient_bound.map(|b| rho_star > b),
    })
}

fn c_k(k: usize) -> Result<f64> {
    match k {
        2 => Ok(1.0),
        4 => Ok(5.0),
        _ => Err(Error::InvalidParameter(format!(
            "sufficient condition is stated for k = 2, 4, got {k}"
        ))),
    }
}

/// The rational inequality `(8ρ² - 16ρ²r² + 8r⁴)/(r⁴(1 - ρ²)) > c_k/r²`
/// with `c₂ = 1`, `c₄ = 5`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SufficientCheck {
    pub k: usize,
    pub rho_in: f64,
    pub r_grid: Vec<f64>,
    pub lhs: Vec<f64>,
    pub rhs: Vec<f64>,
    pub holds: Vec<bool>,
    pub all_hold: bool,
}

pub fn sufficient_condition_check(
    k: usize,
    rho_in: f64,
    r_grid: &[f64],
) -> Result<SufficientCheck> {
    let c = c_k(k)?;
    if !(rho_in > 0.0 && rho_in < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "inner radius {rho_in} outside (0, 1)"
        )));
    }
    let rho2 = rho_in * rho_in;
    let mut lhs = Vec::with_capacity(r_grid.len());
    let mut rhs = Vec::with_capacity(r_grid.len());
    for &r in r_grid {
        if !(r > rho_in && r < 1.0) {
            return Err(Error::Domain(format!("radius {r} outside ({rho_in}, 1)")));
        }
        let r2 = r * r;
        lhs.push((8.0 * rho2 - 16.0 * rho2 * r2 + 8.0 * r2 * r2) / (r2 * r2 * (1.0 - rho2)));
        rhs.push(c / r2);
    }
    let holds: Vec<bool> = lhs.iter().zip(&rhs).map(|(a, b)| a > b).collect();
    let all_hold = holds.iter().all(|&h| h);
    Ok(SufficientCheck {
        k,
        rho_in,
        r_grid: r_grid.to_vec(),
        lhs,
        rhs,
        holds,
        all_hold,
    })
}

/// `Λ₁(r) ≥ (1/ω)[-c_k/(8r²) + 2Q₀(r)]` at one radius.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainPoint {
    pub r: f64,
    pub lambda1: f64,
    pub bound: f64,
    pub tail_bound: f64,
    /// `Λ₁ ≥ bound - tail`
    pub holds: bool,
    /// For `k = 4`, `Λ₁` with the free-space perpendicular interaction.
    pub lambda1_free_space: Option<f64>,
    pub holds_free_space: Option<bool>,
}

pub fn lower_bound_chain(
    k: usize,
    geom: &AnnulusGeometry,
    ctrl: &SeriesControl,
    r_grid: &[f64],
) -> Result<Vec<ChainPoint>> {
    let c = c_k(k)?;
    r_grid
        .par_iter()
        .map(|&r| {
            let p = ring_point(k, r, geom, ctrl)?;
            let q0 = q_m_diag(0, r, geom)?;
            let bound = (-c / (8.0 * r * r) + 2.0 * q0) / OMEGA;
            let lambda1 = p.lambdas[0];
            let fs = p.perpendicular.map(|pv| pv.lambda1_free_space);
            let holds = lambda1 >= bound - p.tail_bound;
            if !holds {
                log::warn!("lower bound fails at r = {r}: Λ₁ = {lambda1:e} < {bound:e}");
            }
            Ok(ChainPoint {
                r,
                lambda1,
                bound,
                tail_bound: p.tail_bound,
                holds,
                lambda1_free_space: fs,
                holds_free_space: fs.map(|v| v >= bound - p.tail_bound),
            })
        })
        .collect()
}
