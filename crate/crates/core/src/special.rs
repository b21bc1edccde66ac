//! Gegenbauer polynomials `P¹_m` (Chebyshev polynomials of the second kind)
//! and the zonal harmonics of the 3-sphere built from them.

use crate::error::{Error, Result};

const PARITY_TOL: f64 = 1e-12;

fn check_arg(t: f64) -> Result<()> {
    if t.is_nan() || t.abs() > 1.0 {
        return Err(Error::OutOfInterval { value: t });
    }
    Ok(())
}

/// `P¹_m(t)` by the forward three-term recurrence.
pub fn gegenbauer_p1(m: usize, t: f64) -> Result<f64> {
    check_arg(t)?;
    Ok(p1_unchecked(m, t))
}

fn p1_unchecked(m: usize, t: f64) -> f64 {
    let mut prev = 1.0;
    if m == 0 {
        return prev;
    }
    let mut cur = 2.0 * t;
    for _ in 2..=m {
        let next = 2.0 * t * cur - prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Checks `P¹_m(-t) = (-1)^m P¹_m(t)` to `1e-12`.
pub fn gegenbauer_parity_check(m: usize, t: f64) -> Result<bool> {
    let plus = gegenbauer_p1(m, t)?;
    let minus = gegenbauer_p1(m, -t)?;
    let sign = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
    Ok((minus - sign * plus).abs() <= PARITY_TOL)
}

/// Zonal harmonic of degree `m` on S³: `Z_m = (m+1) P¹_m(cos θ)`.
pub fn zonal_z(m: usize, cos_angle: f64) -> Result<f64> {
    check_arg(cos_angle)?;
    Ok((m as f64 + 1.0) * p1_unchecked(m, cos_angle))
}

/// All values `P¹_0(t), …, P¹_N(t)` and their derivatives at one argument.
///
/// The derivative sequence comes from differentiating the recurrence:
/// `P'_m = 2 P_{m-1} + 2t P'_{m-1} - P'_{m-2}`.
#[derive(Debug, Clone)]
pub struct GegenbauerEvaluator {
    arg: f64,
    values: Vec<f64>,
    derivs: Vec<f64>,
}

impl GegenbauerEvaluator {
    pub fn new(max_degree: usize, t: f64) -> Result<Self> {
        check_arg(t)?;
        let n = max_degree + 1;
        let mut values = Vec::with_capacity(n);
        let mut derivs = Vec::with_capacity(n);
        values.push(1.0);
        derivs.push(0.0);
        if max_degree >= 1 {
            values.push(2.0 * t);
            derivs.push(2.0);
        }
        for m in 2..n {
            values.push(2.0 * t * values[m - 1] - values[m - 2]);
            derivs.push(2.0 * values[m - 1] + 2.0 * t * derivs[m - 1] - derivs[m - 2]);
        }
        Ok(Self {
            arg: t,
            values,
            derivs,
        })
    }

    pub fn arg(&self) -> f64 {
        self.arg
    }

    pub fn max_degree(&self) -> usize {
        self.values.len() - 1
    }

    /// `P¹_m(t)`; panics if `m` exceeds the cached degree.
    pub fn p1(&self, m: usize) -> f64 {
        self.values[m]
    }

    /// `d/dt P¹_m(t)`, equal to `2 P²_{m-1}(t)`.
    pub fn dp1(&self, m: usize) -> f64 {
        self.derivs[m]
    }

    /// `Z_m` at the cached argument.
    pub fn zonal(&self, m: usize) -> f64 {
        (m as f64 + 1.0) * self.values[m]
    }

    pub fn zonal_deriv(&self, m: usize) -> f64 {
        (m as f64 + 1.0) * self.derivs[m]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Taylor coefficients of (1 - 2rt + r²)^{-1} in r, by inverting the
    /// quadratic power series term by term.
    fn generating_coeffs(n: usize, t: f64) -> Vec<f64> {
        // c(r) * (1 - 2t r + r²) = 1
        let mut c = vec![0.0; n + 1];
        for m in 0..=n {
            let mut v = if m == 0 { 1.0 } else { 0.0 };
            if m >= 1 {
                v += 2.0 * t * c[m - 1];
            }
            if m >= 2 {
                v -= c[m - 2];
            }
            c[m] = v;
        }
        c
    }

    #[test]
    fn low_degrees() {
        assert_eq!(gegenbauer_p1(0, 0.3).unwrap(), 1.0);
        assert_eq!(gegenbauer_p1(1, 0.25).unwrap(), 0.5);
        assert_eq!(gegenbauer_p1(3, 1.0).unwrap(), 4.0);
        assert!((gegenbauer_p1(4, 0.3).unwrap() - 0.0496).abs() < 1e-14);
    }

    #[test]
    fn degree_four_matches_generating_function() {
        let c = generating_coeffs(4, 0.3);
        assert!((c[4] - 0.0496).abs() < 1e-14);
        assert!((gegenbauer_p1(4, 0.3).unwrap() - c[4]).abs() < 1e-14);
    }

    #[test]
    fn rejects_out_of_interval() {
        assert!(matches!(
            gegenbauer_p1(2, 1.5),
            Err(Error::OutOfInterval { .. })
        ));
        assert!(zonal_z(2, -1.0001).is_err());
        assert!(GegenbauerEvaluator::new(3, f64::NAN).is_err());
    }

    #[test]
    fn parity() {
        assert!(gegenbauer_parity_check(2, 0.7).unwrap());
        assert!(gegenbauer_parity_check(0, 0.0).unwrap());
        assert!(gegenbauer_parity_check(7, 0.9).unwrap());
        let c_plus = generating_coeffs(7, 0.9);
        let c_minus = generating_coeffs(7, -0.9);
        assert!((c_minus[7] + c_plus[7]).abs() < 1e-12);
    }

    #[test]
    fn zonal_values() {
        assert_eq!(zonal_z(3, 1.0).unwrap(), 16.0);
        assert_eq!(zonal_z(2, -1.0).unwrap(), 9.0);
        // (1 + r²)^{-1} = 1 - r² + ..., so P¹_2(0) = -1
        assert_eq!(generating_coeffs(2, 0.0)[2], -1.0);
        assert_eq!(zonal_z(2, 0.0).unwrap(), -3.0);
    }

    #[test]
    fn evaluator_matches_pointwise_and_fd_derivative() {
        let t = 0.37;
        let ev = GegenbauerEvaluator::new(40, t).unwrap();
        let h = 1e-6;
        for m in 0..=40 {
            assert_eq!(ev.p1(m), gegenbauer_p1(m, t).unwrap());
            let fd = (p1_unchecked(m, t + h) - p1_unchecked(m, t - h)) / (2.0 * h);
            assert!((ev.dp1(m) - fd).abs() <= 1e-6 * (1.0 + fd.abs()), "m={m}");
        }
    }

    #[test]
    fn derivative_at_one() {
        // P'_m(1) = m(m+1)(m+2)/3
        let ev = GegenbauerEvaluator::new(30, 1.0).unwrap();
        for m in 0..=30 {
            let exact = (m * (m + 1) * (m + 2)) as f64 / 3.0;
            assert!((ev.dp1(m) - exact).abs() < 1e-9 * exact.max(1.0));
        }
    }

    proptest::proptest! {
        #[test]
        fn bounded_by_m_plus_one(m in 0usize..80, t in -1.0f64..=1.0) {
            let v = gegenbauer_p1(m, t).unwrap();
            proptest::prop_assert!(v.abs() <= m as f64 + 1.0 + 1e-9);
        }

        #[test]
        fn parity_holds(m in 0usize..60, t in -1.0f64..=1.0) {
            proptest::prop_assert!(gegenbauer_parity_check(m, t).unwrap());
        }
    }
}
