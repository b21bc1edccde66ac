//! The interaction matrix `M(ξ)` of a configuration of blow-up points, its
//! smallest eigenvalue `Λ₁` and the gradient of `Λ₁` in the points.

use rand::Rng;
use serde::Serialize;

use crate::annulus::{
    dist, norm, AnnulusGeometry, EvalResult, GradResult, Point4, OMEGA, SINGULARITY_GUARD,
};
use crate::error::{Error, Result};
use crate::linalg::{norm2, sym_eigen, Matrix};

/// Gaps at or below this make `Λ₁` numerically non-simple.
pub const SIMPLICITY_GAP: f64 = 1e-12;
/// Largest matrix handled by the dense eigensolver.
pub const MAX_POINTS: usize = 64;

/// Green/Robin evaluation for some domain.
///
/// `regular` is the regular part `H(x, y) = 1/(2ω|x-y|²) - G(x, y)`; the
/// default implementation derives it from `green` and `robin`.
pub trait GreenOracle: Sync {
    fn green(&self, x: &Point4, y: &Point4) -> Result<EvalResult>;
    fn robin(&self, x: &Point4) -> Result<EvalResult>;
    fn grad_green(&self, x: &Point4, y: &Point4) -> Result<GradResult>;
    fn grad_robin(&self, x: &Point4) -> Result<GradResult>;
    /// Distance to the boundary, negative outside the domain.
    fn boundary_distance(&self, x: &Point4) -> f64;

    fn regular(&self, x: &Point4, y: &Point4) -> Result<EvalResult> {
        let d = dist(x, y);
        if d < SINGULARITY_GUARD {
            return self.robin(x);
        }
        let g = self.green(x, y)?;
        Ok(EvalResult {
            value: 1.0 / (2.0 * OMEGA * d * d) - g.value,
            ..g
        })
    }

    /// Moves `x` so that it keeps at least `margin` from the boundary.
    fn project_inside(&self, x: &Point4, _margin: f64) -> Point4 {
        *x
    }
}

/// `k` distinct points with the separation floor `sep`: admissible
/// configurations keep pairwise distances and boundary distances ≥ `2·sep`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Configuration {
    points: Vec<Point4>,
    sep: f64,
}

impl Configuration {
    pub fn new(points: Vec<Point4>, sep: f64) -> Result<Self> {
        if points.is_empty() || points.len() > MAX_POINTS {
            return Err(Error::Config(format!(
                "need between 1 and {MAX_POINTS} points, got {}",
                points.len()
            )));
        }
        if !(sep > 0.0) {
            return Err(Error::Config(format!(
                "separation must be positive, got {sep}"
            )));
        }
        if points.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite coordinate".into()));
        }
        Ok(Self { points, sep })
    }

    /// `k` points equally spaced on the circle of radius `r` in the
    /// `(x₁, x₂)` plane, the first one on the positive `x₁` axis.
    pub fn ring(k: usize, r: f64, sep: f64) -> Result<Self> {
        let pts = (0..k)
            .map(|j| {
                let th = 2.0 * std::f64::consts::PI * j as f64 / k as f64;
                [r * th.cos(), r * th.sin(), 0.0, 0.0]
            })
            .collect();
        Self::new(pts, sep)
    }

    /// Rejection-samples an admissible configuration in an annulus.
    pub fn random_in_annulus<R: Rng>(
        k: usize,
        geom: &AnnulusGeometry,
        sep: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let lo = geom.rho_in() + 2.0 * sep;
        let hi = 1.0 - 2.0 * sep;
        if lo >= hi {
            return Err(Error::Config(format!(
                "separation {sep} leaves no room in the annulus"
            )));
        }
        for _ in 0..10_000 {
            let mut pts = Vec::with_capacity(k);
            for _ in 0..k {
                let dir = loop {
                    let v: Point4 = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
                    let n = norm(&v);
                    if n > 1e-3 && n <= 1.0 {
                        break v.map(|c| c / n);
                    }
                };
                let r = rng.gen_range(lo..hi);
                pts.push(dir.map(|c| c * r));
            }
            let ok = (0..k).all(|i| (0..i).all(|j| dist(&pts[i], &pts[j]) >= 2.0 * sep));
            if ok {
                return Self::new(pts, sep);
            }
        }
        Err(Error::Config(format!(
            "could not place {k} points with separation {sep}"
        )))
    }

    pub fn points(&self) -> &[Point4] {
        &self.points
    }

    pub fn k(&self) -> usize {
        self.points.len()
    }

    pub fn sep(&self) -> f64 {
        self.sep
    }

    /// Coordinates point by point: `[ξ₁, ξ₂, …]`.
    pub fn flatten(&self) -> Vec<f64> {
        self.points.iter().flatten().copied().collect()
    }

    pub fn with_flat(&self, flat: &[f64]) -> Self {
        assert_eq!(flat.len(), 4 * self.k());
        Self {
            points: flat.chunks(4).map(|c| [c[0], c[1], c[2], c[3]]).collect(),
            sep: self.sep,
        }
    }

    /// Smallest pairwise distance (infinite for a single point).
    pub fn min_pair_distance(&self) -> f64 {
        let k = self.k();
        (0..k)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| dist(&self.points[i], &self.points[j]))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self, oracle: &dyn GreenOracle) -> Result<()> {
        let floor = 2.0 * self.sep;
        for (i, p) in self.points.iter().enumerate() {
            let bd = oracle.boundary_distance(p);
            if bd < floor {
                return Err(Error::Config(format!(
                    "point {i} is {bd:.3e} from the boundary, below 2·sep = {floor:.3e}"
                )));
            }
        }
        let dmin = self.min_pair_distance();
        if dmin < floor {
            return Err(Error::Config(format!(
                "points closer than 2·sep: {dmin:.3e} < {floor:.3e}"
            )));
        }
        Ok(())
    }
}

/// `M(ξ)`: Robin values on the diagonal, `-G` off the diagonal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InteractionMatrix {
    pub entries: Matrix,
    pub config: Configuration,
    /// Largest tail bound among the entries.
    pub worst_tail: f64,
    pub degraded: bool,
}

pub fn assemble_m(config: &Configuration, oracle: &dyn GreenOracle) -> Result<InteractionMatrix> {
    config.validate(oracle)?;
    let k = config.k();
    let pts = config.points();
    let mut entries = Matrix::zeros(k);
    let mut worst_tail = 0.0f64;
    let mut degraded = false;
    for i in 0..k {
        let r = oracle.robin(&pts[i])?;
        entries[(i, i)] = r.value;
        worst_tail = worst_tail.max(r.tail_bound);
        degraded |= r.degraded;
        for j in 0..i {
            let g = oracle.green(&pts[i], &pts[j])?;
            if !(g.value > 0.0) {
                return Err(Error::Domain(format!(
                    "Green's function not positive between points {j} and {i}: {:e}",
                    g.value
                )));
            }
            entries[(i, j)] = -g.value;
            entries[(j, i)] = -g.value;
            worst_tail = worst_tail.max(g.tail_bound);
            degraded |= g.degraded;
        }
    }
    Ok(InteractionMatrix {
        entries,
        config: config.clone(),
        worst_tail,
        degraded,
    })
}

/// `Λ₁`, its eigenvector normalized to a unit first component, and the rest
/// of the spectrum.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralData {
    pub lambda1: f64,
    pub eigvec: Vec<f64>,
    /// `Λ₂ - Λ₁`; infinite for a 1×1 matrix.
    pub gap: f64,
    pub spectrum: Vec<f64>,
    /// `‖M e - Λ₁ e‖ / ‖M‖`
    pub residual: f64,
    /// All components of `eigvec` strictly positive.
    pub perron: bool,
    pub simple: bool,
}

pub fn smallest_eigen(matrix: &InteractionMatrix) -> Result<SpectralData> {
    smallest_eigen_of(&matrix.entries)
}

/// [`smallest_eigen`] for a bare symmetric matrix.
pub fn smallest_eigen_of(m: &Matrix) -> Result<SpectralData> {
    let k = m.dim();
    if k == 0 || k > MAX_POINTS {
        return Err(Error::InvalidParameter(format!(
            "matrix size {k} outside 1..={MAX_POINTS}"
        )));
    }
    if !m.is_symmetric() {
        return Err(Error::InvalidParameter("matrix is not symmetric".into()));
    }
    let eig = sym_eigen(m);
    let v = &eig.vectors[0];
    let vmax = v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if v[0].abs() <= 1e-12 * vmax {
        return Err(Error::Normalization(v[0]));
    }
    let eigvec: Vec<f64> = v.iter().map(|c| c / v[0]).collect();
    let lambda1 = eig.values[0];
    let gap = if k > 1 {
        eig.values[1] - lambda1
    } else {
        f64::INFINITY
    };
    let simple = gap > SIMPLICITY_GAP;
    if !simple {
        log::warn!("smallest eigenvalue is not simple: gap {gap:e}");
    }
    let me = m.mul_vec(&eigvec);
    let res: Vec<f64> = me
        .iter()
        .zip(&eigvec)
        .map(|(a, b)| a - lambda1 * b)
        .collect();
    let mnorm = m.frobenius_norm();
    let residual = if mnorm > 0.0 {
        norm2(&res) / mnorm
    } else {
        norm2(&res)
    };
    Ok(SpectralData {
        lambda1,
        perron: eigvec.iter().all(|&c| c > 0.0),
        eigvec,
        gap,
        spectrum: eig.values,
        residual,
        simple,
    })
}

/// `(M̃^ℓ v)_i` for every point `i` and axis `ℓ`, where
/// `m̃^ℓ_ii = ∂_ℓ τ(ξ_i)` and `m̃^ℓ_ij = -2 ∂_{(ξ_i)_ℓ} G(ξ_i, ξ_j)`.
/// Indexed `[i][ℓ]`.
pub fn tilde_m_apply(
    config: &Configuration,
    oracle: &dyn GreenOracle,
    v: &[f64],
) -> Result<Vec<Point4>> {
    let pts = config.points();
    let k = pts.len();
    assert_eq!(v.len(), k);
    let mut out = vec![[0.0; 4]; k];
    for i in 0..k {
        let gr = oracle.grad_robin(&pts[i])?.value;
        for l in 0..4 {
            out[i][l] += gr[l] * v[i];
        }
        for j in 0..k {
            if j == i {
                continue;
            }
            let gg = oracle.grad_green(&pts[i], &pts[j])?.value;
            for l in 0..4 {
                out[i][l] -= 2.0 * gg[l] * v[j];
            }
        }
    }
    Ok(out)
}

/// `∇Λ₁(ξ)`, indexed `[i][ℓ]` (point `i`, coordinate `ℓ`).
///
/// With `ê = (1, d)` the normalized Perron vector,
/// `∂Λ₁/∂(ξ_i)_ℓ = ê_i (M̃^ℓ ê)_i / |ê|²`.
pub fn lambda1_gradient(config: &Configuration, oracle: &dyn GreenOracle) -> Result<Vec<Point4>> {
    let m = assemble_m(config, oracle)?;
    let sd = smallest_eigen(&m)?;
    if !sd.simple {
        return Err(Error::NotSimple(sd.gap));
    }
    gradient_from_eigvec(config, oracle, &sd.eigvec)
}

pub(crate) fn gradient_from_eigvec(
    config: &Configuration,
    oracle: &dyn GreenOracle,
    e: &[f64],
) -> Result<Vec<Point4>> {
    let norm_sq: f64 = e.iter().map(|c| c * c).sum();
    let tm = tilde_m_apply(config, oracle, e)?;
    Ok(tm
        .iter()
        .zip(e)
        .map(|(row, &ei)| row.map(|v| ei * v / norm_sq))
        .collect())
}

/// Rayleigh quotient `(1, d) M (1, d)ᵀ / (1 + |d|²)`.
pub fn rayleigh(matrix: &Matrix, d: &[f64]) -> f64 {
    assert_eq!(d.len() + 1, matrix.dim());
    let mut v = Vec::with_capacity(d.len() + 1);
    v.push(1.0);
    v.extend_from_slice(d);
    let mv = matrix.mul_vec(&v);
    let num: f64 = v.iter().zip(&mv).map(|(a, b)| a * b).sum();
    num / v.iter().map(|c| c * c).sum::<f64>()
}
