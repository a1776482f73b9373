//! Single-cost stability analysis around a chosen optimal trajectory.
//!
//! Fix an optimal trajectory `s*` and perturb one element's cost to
//! `γ`, leaving every other cost alone. Two questions arise:
//!
//! * for `x ∈ s*`, how far can the cost rise before `s*` stops being
//!   optimal? The answer is the upper endpoint `C⁺`, and the interval
//!   `[C(x), C⁺]` is the upper stability interval. The upper tolerance
//!   is `u = C⁺ ⊖↑ C(x)`.
//! * for `x ∉ s*`, how far can the cost drop? The lower endpoint `C⁻`
//!   bounds the lower stability interval `[C⁻, C(x)]`, the lower
//!   tolerance is `ℓ = C(x) ⊖↑ C⁻`, and the extended lower tolerance
//!   `ℓ̄ = f₊ ⊖↑ f*` is an upper bound for `ℓ` that is often easier to
//!   state (here `f₊` is the best objective among trajectories through
//!   `x` and `f*` the optimal value).
//!
//! Both endpoints have short subtraction expressions: writing `f₋` for
//! the best objective among trajectories avoiding `x`,
//!
//! ```text
//! C⁺ = f₋ ⊖↑ F(s*∖{x})        C⁻ = f* ⊖↓ F(s_x∖{x})
//! ```
//!
//! where `s_x` minimizes the deleted measure `F(S∖{x})` over
//! trajectories through `x`. For strict operations these collapse
//! further (the debug build cross-checks every such collapse), and for
//! `max` they specialize to explicit branch formulas. Tolerances are
//! only defined for strict operations; nonstrict operations other than
//! `max` get the endpoint plus a `[C₁, C₂]` enclosure.
//!
//! Everything here is also computable straight from the definition:
//! [`oracle_endpoint`] re-solves perturbed problems and bisects the
//! optimality predicate, providing an independent check on the
//! closed-form route.

use thiserror::Error;

use crate::algebra::OpKind;
use crate::numeric::{approx_eq, approx_le, Cost, EPS_FORM, EPS_TEST};
use crate::problem::{OptimalSet, Problem, ProblemError};
use crate::subtraction::{lower_sub, upper_sub, Method, SubtractionError};

/// Where the analyzed element sits relative to the chosen optimal
/// trajectory; decides which side of the analysis applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Membership {
    InOptimal,
    OutsideOptimal,
}

/// Which stability endpoint the oracle should bracket.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Upper,
    Lower,
}

/// Per-element analysis outcome. Fields hold `None` when they do not
/// apply to the element's side (`c_plus` needs membership, `c_minus`
/// needs non-membership) or when the operation is not strict
/// (tolerances). `bounds` carries the `[C₁, C₂]` enclosure for
/// nonstrict operations other than `max`, where the endpoint formulas
/// are only bracketed by the theory.
#[derive(Debug, Clone)]
pub struct StabilityResult {
    pub element: String,
    pub cost: Cost,
    pub membership: Membership,
    pub c_plus: Option<Cost>,
    pub c_minus: Option<Cost>,
    pub upper_tolerance: Option<Cost>,
    pub lower_tolerance: Option<Cost>,
    pub extended_lower_tolerance: Option<Cost>,
    pub bounds: Option<(Cost, Cost)>,
    pub method: Method,
}

/// Verdict for "may the cost move arbitrarily far on this side
/// without disturbing optimality": guaranteed by a theorem hypothesis,
/// or outside the hypotheses with only sampled evidence reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LowerGuarantee {
    Guaranteed,
    NotGuaranteed { holds_on_samples: bool },
}

/// Full-instance analysis: the optimal set, the chosen (lowest-index)
/// optimal trajectory, and one row per element in id order.
#[derive(Debug, Clone)]
pub struct AnalysisReport {
    pub optimal: OptimalSet,
    pub chosen: usize,
    pub rows: Vec<StabilityResult>,
}

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error("element index {0} out of range")]
    UnknownIndex(usize),
    #[error("trajectory index {0} out of range")]
    UnknownTrajectory(usize),
    #[error("trajectory {0} is not optimal; stability analysis is relative to an optimal trajectory")]
    NotOptimal(usize),
    #[error("element `{0}` is not a member of the chosen optimal trajectory (required for upper-side analysis)")]
    NotMember(String),
    #[error("element `{0}` is a member of the chosen optimal trajectory (lower-side analysis needs an element outside it)")]
    IsMember(String),
    #[error("operation `{operation}` is not strict: {what} is undefined for nonstrict operations")]
    NotStrict { operation: String, what: &'static str },
    #[error("perturbed cost {0} is outside the operation's cost domain")]
    InvalidGamma(f64),
    #[error(transparent)]
    Subtraction(#[from] SubtractionError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
}

fn check_indices(p: &Problem, s: usize, x: usize) -> Result<(), StabilityError> {
    if x >= p.len() {
        return Err(StabilityError::UnknownIndex(x));
    }
    if s >= p.trajectory_count() {
        return Err(StabilityError::UnknownTrajectory(s));
    }
    Ok(())
}

fn check_optimal(opt: &OptimalSet, s: usize) -> Result<(), StabilityError> {
    if opt.contains(s) {
        Ok(())
    } else {
        Err(StabilityError::NotOptimal(s))
    }
}

fn member(p: &Problem, s: usize, x: usize) -> bool {
    p.trajectories()[s] >> x & 1 == 1
}

/// Objective of trajectory `s` after resetting `x`'s cost to `gamma`:
/// unchanged when `x ∉ s`, otherwise `γ ⊕ F(s∖{x})`.
pub fn perturbed_objective(p: &Problem, s: usize, x: usize, gamma: Cost) -> Result<Cost, StabilityError> {
    check_indices(p, s, x)?;
    if !p.operation().admits_cost(gamma) {
        return Err(StabilityError::InvalidGamma(gamma));
    }
    let mask = p.trajectories()[s];
    if mask >> x & 1 == 0 {
        return Ok(p.measure_mask(mask));
    }
    let rest = p.measure_mask(mask & !(1 << x));
    let value = p.operation().apply(gamma, rest);
    #[cfg(debug_assertions)]
    if p.operation().name() == "max" {
        // the explicit branch form must agree with the fold form
        let (f_s, c_x) = (p.measure_mask(mask), p.cost(x));
        let alt = if gamma >= c_x { gamma.max(f_s) } else { (f_s + gamma - c_x).max(rest) };
        debug_assert!(
            approx_eq(value, alt, EPS_TEST),
            "branch form {alt} disagrees with fold form {value}"
        );
    }
    // full refold of the perturbed instance; same value up to rounding
    debug_assert!(approx_eq(value, p.with_cost(x, gamma).measure_mask(mask), EPS_TEST));
    Ok(value)
}

/// Upper endpoint `C⁺` for `x ∈ s*`: the largest `γ` such that `s*`
/// stays no worse than every trajectory avoiding `x`.
pub fn upper_endpoint(p: &Problem, s_star: usize, x: usize) -> Result<StabilityResult, StabilityError> {
    let opt = p.solve();
    upper_endpoint_with(p, &opt, s_star, x)
}

pub(crate) fn upper_endpoint_with(
    p: &Problem,
    opt: &OptimalSet,
    s_star: usize,
    x: usize,
) -> Result<StabilityResult, StabilityError> {
    check_indices(p, s_star, x)?;
    check_optimal(opt, s_star)?;
    if !member(p, s_star, x) {
        return Err(StabilityError::NotMember(p.element_id(x).to_string()));
    }
    let op = p.operation();
    let c_x = p.cost(x);
    let f_star = opt.value;
    let f_minus = p.restricted_optima(x).f_minus;
    let rest = p.measure_mask(p.trajectories()[s_star] & !(1 << x));
    let endpoint = upper_sub(op, f_minus, rest)?;
    let mut method = endpoint.method;
    let c_plus = endpoint.value;

    let mut bounds = None;
    if !op.strict() && op.name() != "max" {
        // theory pins the endpoint only inside [C1, C2] here
        let c1 = upper_sub(op, f_minus, upper_sub(op, f_star, c_x)?.value)?;
        let c2 = upper_sub(op, f_minus, lower_sub(op, f_star, c_x)?.value)?;
        method = combine(method, combine(c1.method, c2.method));
        debug_assert!(
            approx_le(c_x, c1.value, EPS_FORM)
                && approx_le(c1.value, c_plus, EPS_FORM)
                && approx_le(c_plus, c2.value, EPS_FORM),
            "enclosure C(x) <= C1 <= C+ <= C2 violated"
        );
        bounds = Some((c1.value, c2.value));
    }

    #[cfg(debug_assertions)]
    {
        if op.strict() {
            // the endpoint collapses to either bound and to the
            // translation form [C(x) ⊕ f₋] ⊖↑ f*
            let c1 = upper_sub(op, f_minus, upper_sub(op, f_star, c_x).unwrap().value).unwrap().value;
            let c2 = upper_sub(op, f_minus, lower_sub(op, f_star, c_x).unwrap().value).unwrap().value;
            let tr = upper_sub(op, op.apply(c_x, f_minus), f_star).unwrap().value;
            for (name, v) in [("C1", c1), ("C2", c2), ("translation", tr)] {
                debug_assert!(approx_eq(c_plus, v, EPS_FORM), "{name} form {v} disagrees with C+ {c_plus}");
            }
        }
        if op.name() == "max" {
            debug_assert!(approx_eq(c_plus, f_minus, EPS_TEST), "max endpoint must equal f-minus");
        }
        debug_assert!(approx_le(c_x, c_plus, EPS_TEST), "cost {c_x} must not exceed C+ {c_plus}");
    }

    Ok(StabilityResult {
        element: p.element_id(x).to_string(),
        cost: c_x,
        membership: Membership::InOptimal,
        c_plus: Some(c_plus),
        c_minus: None,
        upper_tolerance: None,
        lower_tolerance: None,
        extended_lower_tolerance: None,
        bounds,
        method,
    })
}

/// Upper tolerance `u = C⁺ ⊖↑ C(x)` for `x ∈ s*`; strict operations
/// only. Equals `f₋ ⊖↑ f*`, which the debug build verifies.
pub fn upper_tolerance(p: &Problem, s_star: usize, x: usize) -> Result<StabilityResult, StabilityError> {
    let opt = p.solve();
    upper_tolerance_with(p, &opt, s_star, x)
}

pub(crate) fn upper_tolerance_with(
    p: &Problem,
    opt: &OptimalSet,
    s_star: usize,
    x: usize,
) -> Result<StabilityResult, StabilityError> {
    let op = p.operation();
    if !op.strict() {
        return Err(StabilityError::NotStrict { operation: op.name().to_string(), what: "the upper tolerance" });
    }
    let mut result = upper_endpoint_with(p, opt, s_star, x)?;
    let c_plus = result.c_plus.expect("upper side always sets c_plus");
    let u = upper_sub(op, c_plus, result.cost)?;
    #[cfg(debug_assertions)]
    {
        let f_minus = p.restricted_optima(x).f_minus;
        let direct = upper_sub(op, f_minus, opt.value).unwrap().value;
        debug_assert!(approx_eq(u.value, direct, EPS_FORM), "u {} must equal f-minus - f* form {direct}", u.value);
        debug_assert!(approx_le(op.neutral(), u.value, EPS_TEST));
    }
    result.method = combine(result.method, u.method);
    result.upper_tolerance = Some(u.value);
    Ok(result)
}

/// Lower endpoint `C⁻` for `x ∉ s*`: the smallest `γ` such that no
/// trajectory through `x` undercuts the optimal value.
pub fn lower_endpoint(p: &Problem, s_star: usize, x: usize) -> Result<StabilityResult, StabilityError> {
    let opt = p.solve();
    lower_endpoint_with(p, &opt, s_star, x)
}

pub(crate) fn lower_endpoint_with(
    p: &Problem,
    opt: &OptimalSet,
    s_star: usize,
    x: usize,
) -> Result<StabilityResult, StabilityError> {
    check_indices(p, s_star, x)?;
    check_optimal(opt, s_star)?;
    if member(p, s_star, x) {
        return Err(StabilityError::IsMember(p.element_id(x).to_string()));
    }
    let op = p.operation();
    let c_x = p.cost(x);
    let f_star = opt.value;
    let ro = p.restricted_optima(x);
    let endpoint = lower_sub(op, f_star, ro.f_sx_minus_x)?;
    let mut method = endpoint.method;
    let c_minus = endpoint.value;

    let mut bounds = None;
    if !op.strict() && op.name() != "max" {
        let c1 = lower_sub(op, f_star, upper_sub(op, ro.f_plus, c_x)?.value)?;
        let c2 = lower_sub(op, f_star, lower_sub(op, ro.f_plus, c_x)?.value)?;
        method = combine(method, combine(c1.method, c2.method));
        debug_assert!(approx_le(c1.value, c2.value, EPS_FORM) && approx_le(c2.value, c_x, EPS_FORM));
        bounds = Some((c1.value, c2.value));
    }

    #[cfg(debug_assertions)]
    {
        if op.strict() {
            let c1 = lower_sub(op, f_star, upper_sub(op, ro.f_plus, c_x).unwrap().value).unwrap().value;
            let c2 = lower_sub(op, f_star, lower_sub(op, ro.f_plus, c_x).unwrap().value).unwrap().value;
            let tr = lower_sub(op, op.apply(c_x, f_star), ro.f_plus).unwrap().value;
            for (name, v) in [("C1", c1), ("C2", c2), ("translation", tr)] {
                debug_assert!(approx_eq(c_minus, v, EPS_FORM), "{name} form {v} disagrees with C- {c_minus}");
            }
        }
        if op.name() == "max" {
            // two-branch specialization, plus the matching C2 branch form
            let branch = if ro.f_sx_minus_x < f_star { f_star } else { 0.0 };
            debug_assert!(approx_eq(c_minus, branch, EPS_TEST), "max endpoint branch {branch} vs {c_minus}");
            let c2 = lower_sub(op, f_star, lower_sub(op, ro.f_plus, c_x).unwrap().value).unwrap().value;
            let c2_branch = if c_x == ro.f_plus { f_star } else { 0.0 };
            debug_assert!(approx_eq(c2, c2_branch, EPS_TEST), "max C2 branch {c2_branch} vs {c2}");
        }
        // ordering C1 <= C- <= C2 <= C(x) holds for every operation
        let c1 = lower_sub(op, f_star, upper_sub(op, ro.f_plus, c_x).unwrap().value).unwrap().value;
        let c2 = lower_sub(op, f_star, lower_sub(op, ro.f_plus, c_x).unwrap().value).unwrap().value;
        debug_assert!(
            approx_le(c1, c_minus, EPS_FORM) && approx_le(c_minus, c2, EPS_FORM) && approx_le(c2, c_x, EPS_FORM),
            "ordering C1 {c1} <= C- {c_minus} <= C2 {c2} <= C(x) {c_x} violated"
        );
    }

    Ok(StabilityResult {
        element: p.element_id(x).to_string(),
        cost: c_x,
        membership: Membership::OutsideOptimal,
        c_plus: None,
        c_minus: Some(c_minus),
        upper_tolerance: None,
        lower_tolerance: None,
        extended_lower_tolerance: None,
        bounds,
        method,
    })
}

/// Lower tolerance `ℓ = C(x) ⊖↑ C⁻` and extended lower tolerance
/// `ℓ̄ = f₊ ⊖↑ f*` for `x ∉ s*`; strict operations only.
pub fn lower_tolerance(p: &Problem, s_star: usize, x: usize) -> Result<StabilityResult, StabilityError> {
    let opt = p.solve();
    lower_tolerance_with(p, &opt, s_star, x)
}

pub(crate) fn lower_tolerance_with(
    p: &Problem,
    opt: &OptimalSet,
    s_star: usize,
    x: usize,
) -> Result<StabilityResult, StabilityError> {
    let op = p.operation();
    if !op.strict() {
        return Err(StabilityError::NotStrict { operation: op.name().to_string(), what: "the lower tolerance" });
    }
    let mut result = lower_endpoint_with(p, opt, s_star, x)?;
    let c_minus = result.c_minus.expect("lower side always sets c_minus");
    let ro = p.restricted_optima(x);
    let ell = upper_sub(op, result.cost, c_minus)?;
    let ell_bar = upper_sub(op, ro.f_plus, opt.value)?;
    #[cfg(debug_assertions)]
    {
        let e = op.neutral();
        debug_assert!(
            approx_le(e, ell.value, EPS_TEST) && approx_le(ell.value, ell_bar.value, EPS_FORM),
            "need e {e} <= l {} <= l-bar {}",
            ell.value,
            ell_bar.value
        );
        match op.kind() {
            OpKind::Addition => {
                // two-branch form: l-bar when the deleted measure is
                // below f*, the plain cost when it is above (both hold
                // near the crossover, so the band asserts nothing)
                let s = crate::numeric::slack(opt.value, EPS_TEST);
                if ro.f_sx_minus_x < opt.value - s {
                    debug_assert!(approx_eq(ell.value, ell_bar.value, EPS_FORM), "below-f* branch: l must equal l-bar");
                }
                if ro.f_sx_minus_x > opt.value + s {
                    debug_assert!(approx_eq(ell.value, result.cost, EPS_FORM), "above-f* branch: l must equal C(x)");
                }
            }
            OpKind::Multiplication => {
                debug_assert!(approx_eq(ell.value, ell_bar.value, EPS_FORM), "multiplication kind forces l = l-bar");
            }
        }
    }
    result.method = combine(result.method, combine(ell.method, ell_bar.method));
    result.lower_tolerance = Some(ell.value);
    result.extended_lower_tolerance = Some(ell_bar.value);
    Ok(result)
}

/// Raising the cost of an element outside `s*` can never disturb
/// `s*`'s optimality; this verifies the claim on a sample grid of
/// `γ ≥ C(x)` by re-solving, returning the sampled verdict.
pub fn unrestricted_upper(p: &Problem, s_star: usize, x: usize) -> Result<bool, StabilityError> {
    let opt = p.solve();
    check_indices(p, s_star, x)?;
    check_optimal(&opt, s_star)?;
    if member(p, s_star, x) {
        return Err(StabilityError::IsMember(p.element_id(x).to_string()));
    }
    let c_x = p.cost(x);
    let grid = [c_x, 2.0 * c_x + 1.0, 10.0 * (c_x + 1.0), 1e6 * (c_x + 1.0)];
    Ok(grid.iter().all(|&g| p.with_cost(x, g).solve().contains(s_star)))
}

/// Whether lowering the cost of `x ∈ s*` all the way to the domain
/// floor is guaranteed to keep `s*` optimal. Strict operations always
/// qualify; `max` qualifies under any of four data conditions; other
/// nonstrict operations are out of scope. Qualifying instances are
/// additionally spot-checked by re-solving on a sample grid.
pub fn unrestricted_lower(p: &Problem, s_star: usize, x: usize) -> Result<LowerGuarantee, StabilityError> {
    let opt = p.solve();
    check_indices(p, s_star, x)?;
    check_optimal(&opt, s_star)?;
    if !member(p, s_star, x) {
        return Err(StabilityError::NotMember(p.element_id(x).to_string()));
    }
    let op = p.operation();
    let c_x = p.cost(x);
    let f_star = opt.value;

    let guaranteed = if op.strict() {
        true
    } else if op.name() == "max" {
        let f_sx = p.restricted_optima(x).f_sx_minus_x;
        let eq = |a: f64, b: f64| approx_eq(a, b, crate::numeric::EPS_NUM);
        c_x < f_star
            || (eq(c_x, f_star) && opt.is_unique())
            || (eq(c_x, f_star) && f_star <= f_sx)
            || f_star <= f_sx
    } else {
        return Err(StabilityError::NotStrict {
            operation: op.name().to_string(),
            what: "the unrestricted-lower guarantee",
        });
    };

    let floor = match op.kind() {
        OpKind::Addition => 0.0,
        OpKind::Multiplication => (1e-6 * op.neutral()).min(c_x),
    };
    let grid = [c_x, 0.5 * (c_x + floor), 0.1 * c_x + 0.9 * floor, floor];
    let holds = grid
        .iter()
        .filter(|&&g| op.admits_cost(g))
        .all(|&g| p.with_cost(x, g).solve().contains(s_star));

    if guaranteed {
        debug_assert!(holds, "guaranteed unrestricted-lower case failed on samples");
        Ok(LowerGuarantee::Guaranteed)
    } else {
        Ok(LowerGuarantee::NotGuaranteed { holds_on_samples: holds })
    }
}

/// Definition-level endpoint: brackets and bisects the optimality
/// predicate itself, with no subtraction shortcuts. `Upper` compares
/// the perturbed `s*` against every trajectory avoiding `x` and
/// returns the largest safe `γ` (or `+∞` when nothing ever overtakes);
/// `Lower` compares against every trajectory through `x` and returns
/// the smallest safe `γ` (the domain floor collapses to 0).
pub fn oracle_endpoint(p: &Problem, s_star: usize, x: usize, side: Side) -> Result<Cost, StabilityError> {
    let opt = p.solve();
    check_indices(p, s_star, x)?;
    check_optimal(&opt, s_star)?;
    let op = p.operation().clone();
    let c_x = p.cost(x);
    match side {
        Side::Upper => {
            if !member(p, s_star, x) {
                return Err(StabilityError::NotMember(p.element_id(x).to_string()));
            }
            let rest = p.measure_mask(p.trajectories()[s_star] & !(1 << x));
            // objectives of trajectories avoiding x never move with γ
            let rivals: Vec<Cost> = (0..p.trajectory_count())
                .filter(|&s| !member(p, s, x))
                .map(|s| p.trajectory_value(s))
                .collect();
            let keep = |g: f64| {
                let v = op.apply(g, rest);
                rivals.iter().all(|&r| v <= r)
            };
            if !keep(c_x) {
                return Ok(c_x);
            }
            let mut lo = c_x;
            let mut hi = c_x.abs().max(1.0);
            while keep(hi) {
                lo = hi;
                hi *= 2.0;
                if hi > 9.0e15 {
                    return Ok(f64::INFINITY);
                }
            }
            Ok(refine(lo, hi, keep).0)
        }
        Side::Lower => {
            if member(p, s_star, x) {
                return Err(StabilityError::IsMember(p.element_id(x).to_string()));
            }
            let f_star = p.trajectory_value(s_star);
            let rests: Vec<Cost> = (0..p.trajectory_count())
                .filter(|&s| member(p, s, x))
                .map(|s| p.measure_mask(p.trajectories()[s] & !(1 << x)))
                .collect();
            let keep = |g: f64| rests.iter().all(|&r| op.apply(g, r) >= f_star);
            if !keep(c_x) {
                return Ok(c_x);
            }
            match op.kind() {
                OpKind::Addition => {
                    if keep(0.0) {
                        return Ok(0.0);
                    }
                    Ok(refine(0.0, c_x, |g| !keep(g)).1)
                }
                OpKind::Multiplication => {
                    let mut hi = c_x;
                    let mut lo = 0.5 * c_x;
                    while keep(lo) {
                        hi = lo;
                        lo *= 0.5;
                        if lo < 1e-300 {
                            return Ok(lo);
                        }
                    }
                    Ok(refine(lo, hi, |g| !keep(g)).1)
                }
            }
        }
    }
}

/// Bisects to floating-point resolution; `pred` holds at `lo` and
/// fails at `hi` throughout. Returns the final bracket.
fn refine(mut lo: f64, mut hi: f64, pred: impl Fn(f64) -> bool) -> (f64, f64) {
    loop {
        let mid = 0.5 * (lo + hi);
        if !(lo < mid && mid < hi) {
            return (lo, hi);
        }
        if pred(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

/// Analyzes every element relative to the lowest-index optimal
/// trajectory: endpoints always, tolerances when the operation is
/// strict.
pub fn analyze_all(p: &Problem) -> Result<AnalysisReport, StabilityError> {
    let opt = p.solve();
    let chosen = opt.trajectories[0];
    let strict = p.operation().strict();
    let mut rows = Vec::with_capacity(p.len());
    for x in 0..p.len() {
        let row = if member(p, chosen, x) {
            if strict {
                upper_tolerance_with(p, &opt, chosen, x)?
            } else {
                upper_endpoint_with(p, &opt, chosen, x)?
            }
        } else if strict {
            lower_tolerance_with(p, &opt, chosen, x)?
        } else {
            lower_endpoint_with(p, &opt, chosen, x)?
        };
        rows.push(row);
    }
    Ok(AnalysisReport { optimal: opt, chosen, rows })
}

fn combine(a: Method, b: Method) -> Method {
    if a == Method::Bisection || b == Method::Bisection {
        Method::Bisection
    } else {
        Method::ClosedForm
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::{builtin, PhiFunction};
    use crate::problem::fixtures::{tied_pair, two_route};
    use std::collections::BTreeMap;

    fn product_instance() -> Problem {
        let costs: BTreeMap<String, f64> =
            [("a", 2.0), ("b", 3.0), ("c", 4.0), ("d", 2.0)].iter().map(|&(k, v)| (k.into(), v)).collect();
        Problem::new(
            builtin("product", None).unwrap(),
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            &costs,
            &[vec!["a".into(), "b".into()], vec!["c".into(), "d".into()]],
        )
        .unwrap()
    }

    fn max_instance() -> Problem {
        let costs: BTreeMap<String, f64> =
            [("a", 1.0), ("b", 2.0), ("c", 3.0), ("d", 1.0)].iter().map(|&(k, v)| (k.into(), v)).collect();
        Problem::new(
            builtin("max", None).unwrap(),
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            &costs,
            &[vec!["a".into(), "b".into()], vec!["c".into(), "d".into()]],
        )
        .unwrap()
    }

    #[test]
    fn perturbation_examples() {
        let p = two_route();
        // x4 lowered to 0.5 inside the second trajectory
        assert_eq!(perturbed_objective(&p, 1, 3, 0.5).unwrap(), 1.5);
        // untouched trajectory keeps its objective
        assert_eq!(perturbed_objective(&p, 0, 3, 0.5).unwrap(), 2.0);
        // gamma equal to the current cost changes nothing
        assert_eq!(perturbed_objective(&p, 1, 3, 3.0).unwrap(), 4.0);
        assert!(matches!(perturbed_objective(&p, 0, 0, -1.0), Err(StabilityError::InvalidGamma(_))));

        let q = max_instance();
        assert_eq!(perturbed_objective(&q, 0, 1, 5.0).unwrap(), 5.0);
        assert_eq!(perturbed_objective(&q, 0, 1, 0.5).unwrap(), 1.0);
    }

    #[test]
    fn upper_side_on_the_two_route_instance() {
        let p = two_route();
        let r = upper_tolerance(&p, 0, 0).unwrap();
        assert_eq!(r.c_plus, Some(3.0));
        assert_eq!(r.upper_tolerance, Some(2.0));
        assert_eq!(r.method, Method::ClosedForm);
        assert!(r.bounds.is_none());
        let r = upper_tolerance(&p, 0, 1).unwrap();
        assert_eq!(r.upper_tolerance, Some(2.0));

        assert!(matches!(upper_endpoint(&p, 0, 2), Err(StabilityError::NotMember(_))));
        assert!(matches!(upper_endpoint(&p, 1, 0), Err(StabilityError::NotOptimal(1))));
    }

    #[test]
    fn lower_side_on_the_two_route_instance() {
        let p = two_route();
        let r = lower_tolerance(&p, 0, 2).unwrap();
        assert_eq!(r.c_minus, Some(0.0));
        assert_eq!(r.lower_tolerance, Some(1.0));
        assert_eq!(r.extended_lower_tolerance, Some(2.0));

        let r = lower_tolerance(&p, 0, 3).unwrap();
        assert_eq!(r.c_minus, Some(1.0));
        assert_eq!(r.lower_tolerance, Some(2.0));
        assert_eq!(r.extended_lower_tolerance, Some(2.0));

        assert!(matches!(lower_endpoint(&p, 0, 0), Err(StabilityError::IsMember(_))));
    }

    #[test]
    fn strict_inequality_between_lower_and_extended() {
        // the x3 row separates l from l-bar: 1 < 2
        let p = two_route();
        let r = lower_tolerance(&p, 0, 2).unwrap();
        assert!(r.lower_tolerance.unwrap() < r.extended_lower_tolerance.unwrap());
    }

    #[test]
    fn tied_instance_tolerances_from_both_optima() {
        let p = tied_pair();
        let opt = p.solve();
        assert_eq!(opt.trajectories, vec![0, 1]);

        // first optimal trajectory {x1,x2,x3}
        for (x, u) in [(0, 0.0), (1, 2.0), (2, 0.0)] {
            assert_eq!(upper_tolerance(&p, 0, x).unwrap().upper_tolerance, Some(u), "x{}", x + 1);
        }
        for (x, l) in [(3, 0.0), (4, 0.0), (5, 2.0)] {
            assert_eq!(lower_tolerance(&p, 0, x).unwrap().lower_tolerance, Some(l), "x{}", x + 1);
        }

        // second optimal trajectory {x2,x4,x5}
        for (x, u) in [(1, 2.0), (3, 0.0), (4, 0.0)] {
            assert_eq!(upper_tolerance(&p, 1, x).unwrap().upper_tolerance, Some(u), "x{}", x + 1);
        }
        for (x, l) in [(0, 0.0), (2, 0.0), (5, 2.0)] {
            assert_eq!(lower_tolerance(&p, 1, x).unwrap().lower_tolerance, Some(l), "x{}", x + 1);
        }

        // the endpoint behind l(x6): C- = 3 either way
        assert_eq!(lower_endpoint(&p, 0, 5).unwrap().c_minus, Some(3.0));
        assert_eq!(lower_endpoint(&p, 1, 5).unwrap().c_minus, Some(3.0));
    }

    #[test]
    fn product_instance_matches_ratio_formulas() {
        let p = product_instance();
        let r = upper_tolerance(&p, 0, 0).unwrap();
        // C+ = C(a) f-minus / f* and u = f-minus / f*
        assert!(approx_eq(r.c_plus.unwrap(), 2.0 * 8.0 / 6.0, EPS_TEST));
        assert!(approx_eq(r.upper_tolerance.unwrap(), 8.0 / 6.0, EPS_TEST));

        let r = lower_tolerance(&p, 0, 2).unwrap();
        assert!(approx_eq(r.c_minus.unwrap(), 4.0 * 6.0 / 8.0, EPS_TEST));
        assert!(approx_eq(r.lower_tolerance.unwrap(), 8.0 / 6.0, EPS_TEST));
        assert!(approx_eq(r.extended_lower_tolerance.unwrap(), 8.0 / 6.0, EPS_TEST));
    }

    #[test]
    fn max_instance_endpoints_and_refusals() {
        let p = max_instance();
        let r = upper_endpoint(&p, 0, 0).unwrap();
        assert_eq!(r.c_plus, Some(3.0));
        assert!(r.bounds.is_none(), "max needs no enclosure");
        let r = lower_endpoint(&p, 0, 2).unwrap();
        assert_eq!(r.c_minus, Some(2.0), "deleted measure 1 < f* = 2 branch");
        let r = lower_endpoint(&p, 0, 3).unwrap();
        assert_eq!(r.c_minus, Some(0.0), "deleted measure 3 >= f* = 2 branch");

        assert!(matches!(
            upper_tolerance(&p, 0, 0),
            Err(StabilityError::NotStrict { what: "the upper tolerance", .. })
        ));
        assert!(matches!(lower_tolerance(&p, 0, 2), Err(StabilityError::NotStrict { .. })));
    }

    #[test]
    fn clamped_sum_gets_an_enclosure() {
        let costs: BTreeMap<String, f64> =
            [("a", 0.2), ("b", 0.3), ("c", 0.4), ("d", 0.3)].iter().map(|&(k, v)| (k.into(), v)).collect();
        let p = Problem::new(
            builtin("clamp_sum", None).unwrap(),
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            &costs,
            &[vec!["a".into(), "b".into()], vec!["c".into(), "d".into()]],
        )
        .unwrap();
        let r = upper_endpoint(&p, 0, 0).unwrap();
        assert!(approx_eq(r.c_plus.unwrap(), 0.4, EPS_TEST));
        let (c1, c2) = r.bounds.expect("nonstrict non-max rows carry bounds");
        assert!(approx_le(c1, r.c_plus.unwrap(), EPS_TEST) && approx_le(r.c_plus.unwrap(), c2, EPS_TEST));
        assert_eq!(r.method, Method::Bisection);
        assert!(r.upper_tolerance.is_none());
    }

    #[test]
    fn rescaled_instance_maps_tolerances_through_the_inverse() {
        let phi = PhiFunction::power(2.0);
        let p = two_route().equivalent(&phi);
        let r = upper_tolerance(&p, 0, 0).unwrap();
        assert!(approx_eq(r.c_plus.unwrap(), 3.0f64.sqrt(), EPS_TEST));
        assert!(approx_eq(r.upper_tolerance.unwrap(), 2.0f64.sqrt(), EPS_TEST));
        assert_eq!(r.method, Method::Bisection);
        let r = lower_tolerance(&p, 0, 3).unwrap();
        assert!(approx_eq(r.c_minus.unwrap(), 1.0, EPS_TEST));
        assert!(approx_eq(r.lower_tolerance.unwrap(), 2.0f64.sqrt(), EPS_TEST));
    }

    #[test]
    fn oracle_agrees_with_closed_forms_on_fixtures() {
        let p = two_route();
        assert!(approx_eq(oracle_endpoint(&p, 0, 0, Side::Upper).unwrap(), 3.0, 1e-9));
        assert!(approx_eq(oracle_endpoint(&p, 0, 2, Side::Lower).unwrap(), 0.0, 1e-9));
        assert!(approx_eq(oracle_endpoint(&p, 0, 3, Side::Lower).unwrap(), 1.0, 1e-9));

        let q = tied_pair();
        assert!(approx_eq(oracle_endpoint(&q, 0, 1, Side::Upper).unwrap(), 4.0, 1e-9));

        let r = product_instance();
        assert!(approx_eq(oracle_endpoint(&r, 0, 0, Side::Upper).unwrap(), 8.0 / 3.0, 1e-9));
        assert!(approx_eq(oracle_endpoint(&r, 0, 2, Side::Lower).unwrap(), 3.0, 1e-9));

        let m = max_instance();
        assert!(approx_eq(oracle_endpoint(&m, 0, 0, Side::Upper).unwrap(), 3.0, 1e-9));
        assert!(approx_eq(oracle_endpoint(&m, 0, 2, Side::Lower).unwrap(), 2.0, 1e-9));
        assert!(approx_eq(oracle_endpoint(&m, 0, 3, Side::Lower).unwrap(), 0.0, 1e-9));
    }

    #[test]
    fn unrestricted_directions() {
        let p = two_route();
        assert!(unrestricted_upper(&p, 0, 3).unwrap());
        assert!(matches!(unrestricted_upper(&p, 0, 0), Err(StabilityError::IsMember(_))));
        assert_eq!(unrestricted_lower(&p, 0, 0).unwrap(), LowerGuarantee::Guaranteed);
        assert!(matches!(unrestricted_lower(&p, 0, 2), Err(StabilityError::NotMember(_))));

        let q = tied_pair();
        assert!(unrestricted_upper(&q, 0, 5).unwrap());
    }

    #[test]
    fn max_lower_guarantee_gates() {
        // cost below the optimal value: guaranteed
        let m = max_instance();
        assert_eq!(unrestricted_lower(&m, 0, 0).unwrap(), LowerGuarantee::Guaranteed);
        // cost equals the optimal value with a unique optimum: guaranteed
        assert_eq!(unrestricted_lower(&m, 0, 1).unwrap(), LowerGuarantee::Guaranteed);

        // tied optima sharing the cheapened element: every gate fails,
        // and sampling confirms the guarantee would be wrong
        let costs: BTreeMap<String, f64> =
            [("a", 2.0), ("b", 2.0), ("c", 1.0)].iter().map(|&(k, v)| (k.into(), v)).collect();
        let p = Problem::new(
            builtin("max", None).unwrap(),
            vec!["a".into(), "b".into(), "c".into()],
            &costs,
            &[vec!["a".into(), "b".into()], vec!["a".into(), "c".into()], vec!["b".into(), "c".into()]],
        )
        .unwrap();
        assert_eq!(
            unrestricted_lower(&p, 0, 0).unwrap(),
            LowerGuarantee::NotGuaranteed { holds_on_samples: false }
        );
    }

    #[test]
    fn analyze_covers_every_element() {
        let p = two_route();
        let report = analyze_all(&p).unwrap();
        assert_eq!(report.chosen, 0);
        assert_eq!(report.rows.len(), 4);
        assert_eq!(report.rows[0].membership, Membership::InOptimal);
        assert_eq!(report.rows[0].upper_tolerance, Some(2.0));
        assert_eq!(report.rows[2].membership, Membership::OutsideOptimal);
        assert_eq!(report.rows[2].lower_tolerance, Some(1.0));
        assert_eq!(report.rows[3].extended_lower_tolerance, Some(2.0));

        let m = analyze_all(&max_instance()).unwrap();
        assert!(m.rows.iter().all(|r| r.upper_tolerance.is_none() && r.lower_tolerance.is_none()));
        assert_eq!(m.rows[0].c_plus, Some(3.0));
        assert_eq!(m.rows[2].c_minus, Some(2.0));
    }
}
