//! Numeric conventions shared across the crate.
//!
//! Every approximate comparison combines an absolute and a relative
//! component: `a ≈ b` holds iff `|a - b| <= eps * (1 + max(|a|, |b|))`.
//! The constants below are the crate-wide tolerance tiers; they are
//! deliberately separated so that accumulated fold error (tested at
//! [`EPS_TEST`]) never masks a genuine library-level disagreement
//! (tested at [`EPS_NUM`]).

/// Scalar cost type. All aggregation happens on nonnegative reals.
pub type Cost = f64;

/// Library-level equality tolerance for cost comparisons.
pub const EPS_NUM: f64 = 1e-9;

/// Guaranteed bisection convergence on the solution axis. The solver
/// actually iterates to the floating-point limit, which is tighter.
pub const EPS_SOLVE: f64 = 1e-10;

/// Slack used by property assertions; looser than [`EPS_NUM`] so that
/// error accumulated over folds of many elements does not produce
/// false alarms.
pub const EPS_TEST: f64 = 1e-7;

/// Tie tolerance when collecting the set of optimal trajectories.
pub const EPS_OPT: f64 = 1e-9;

/// Agreement tolerance for algebraically equivalent pipelines. A
/// p-norm style subtraction has a square-root branch point where
/// ulp-level fold noise in the radicand amplifies to about
/// `scale * sqrt(ulp)`, a few times 1e-7 at catalog magnitudes, so
/// cross-checks between equal-by-theory forms that approach such a
/// point from different sides get this wider budget than [`EPS_TEST`].
pub const EPS_FORM: f64 = 1e-6;

/// Combined absolute/relative slack at magnitude `scale`.
#[inline]
pub fn slack(scale: f64, eps: f64) -> f64 {
    eps * (1.0 + scale.abs())
}

/// `a ≈ b` under the crate's combined tolerance convention.
#[inline]
pub fn approx_eq(a: f64, b: f64, eps: f64) -> bool {
    (a - b).abs() <= eps * (1.0 + a.abs().max(b.abs()))
}

/// `a ⪅ b`: true when `a` does not exceed `b` beyond tolerance.
#[inline]
pub fn approx_le(a: f64, b: f64, eps: f64) -> bool {
    a <= b + eps * (1.0 + a.abs().max(b.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equality_scales_with_magnitude() {
        assert!(approx_eq(1.0, 1.0 + 1e-10, EPS_NUM));
        assert!(!approx_eq(1.0, 1.0 + 1e-6, EPS_NUM));
        // at magnitude 1e9 the band widens proportionally
        assert!(approx_eq(1e9, 1e9 + 0.5, EPS_NUM));
    }

    #[test]
    fn le_admits_small_overshoot_only() {
        assert!(approx_le(1.0 + 1e-12, 1.0, EPS_NUM));
        assert!(!approx_le(1.1, 1.0, EPS_NUM));
        assert!(approx_le(0.5, 1.0, EPS_NUM));
    }
}
