//! The tolerance function: a per-element invariant of the instance.
//!
//! For a strict operation with strictly positive costs, pick any
//! optimal trajectory `s*` and define
//!
//! ```text
//! T(x) = u(x)      for x ∈ s*        (upper tolerance)
//! T(x) = ℓ(x)⁻¹    for x ∉ s*        (inverted lower tolerance)
//! ```
//!
//! where the inverse is `u⁻¹ = −u` for addition-kind operations and
//! `u⁻¹ = e ⊖↑ u` for multiplication-kind ones (an involution fixing
//! the neutral `e`). The remarkable fact, which [`tolerance_function`]
//! can re-verify from every optimal trajectory, is that `T` does not
//! depend on the choice of `s*`.
//!
//! `T` reads off the structure of the optimal set by comparing with
//! the neutral element: `{T > e}` is the intersection of all optima,
//! `{T = e}` the union minus the intersection, `{T < e}` the elements
//! on no optimum ([`characterize`]), and the optimum is unique exactly
//! when `T` avoids `e` ([`uniqueness`]). The extended variant `T̄`
//! uses `ℓ̄` in place of `ℓ`.
//!
//! For a unique optimum, [`min_inequalities`] checks the chain
//!
//! ```text
//! min ℓ  ≤  min ℓ̄  ≤  min u      (over X∖s*, X∖s*, s*)
//! ```
//!
//! plus the reverse bound `min u ≤ min ℓ̄` restricted to elements
//! outside `s*` and outside every trajectory covering `s*`. When no
//! trajectory embeds in another the first chain's right inequality
//! tightens to equality, and multiplication-kind operations tighten
//! the whole chain.

use thiserror::Error;

use crate::algebra::{AOperation, OpKind};
use crate::numeric::{approx_eq, approx_le, EPS_TEST};
use crate::problem::{OptimalSet, Problem};
use crate::stability::{lower_tolerance_with, upper_tolerance_with, StabilityError};
use crate::subtraction::{upper_sub, SubtractionError};

/// The tolerance function and the optimal-set data it encodes.
/// `values` and `extended` are indexed like the ground set; for
/// addition-kind operations inverted entries are negative, for
/// multiplication-kind ones they sit below the neutral.
#[derive(Debug, Clone)]
pub struct ToleranceReport {
    pub ids: Vec<String>,
    pub values: Vec<f64>,
    pub extended: Vec<f64>,
    pub neutral: f64,
    pub union_mask: u64,
    pub intersection_mask: u64,
    pub unique: bool,
    pub optimal: OptimalSet,
    pub chosen: usize,
}

/// The five neutral-relative level sets of `T`, as bitmasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Characterization {
    pub equal_neutral: u64,
    pub above_neutral: u64,
    pub at_least_neutral: u64,
    pub below_neutral: u64,
    pub at_most_neutral: u64,
}

/// Outcome of the minimum-value comparisons for a unique optimum.
/// `restricted_min_extended` is `None` when every element outside the
/// optimum lies on a covering trajectory (a vacuous bound).
#[derive(Debug, Clone)]
pub struct MinInequalities {
    pub min_lower: f64,
    pub min_extended: f64,
    pub min_upper: f64,
    pub restricted_min_extended: Option<f64>,
    pub nonembedded: bool,
    pub corollary_equality: bool,
    pub full_chain_equality: bool,
}

#[derive(Debug, Error)]
pub enum InvariantError {
    #[error("operation `{0}` is not strict: the tolerance function needs a strict operation")]
    NotStrict(String),
    #[error("element `{element}` has cost {cost}; the tolerance function needs strictly positive costs")]
    NonPositiveCost { element: String, cost: f64 },
    #[error("element `{element}` has cost {cost} below the neutral {neutral}; the minimum-value comparisons need costs at or above it")]
    CostBelowNeutral { element: String, cost: f64, neutral: f64 },
    #[error("tolerance values disagree across optimal trajectories at `{element}`: {value} from trajectory {chosen} vs {other_value} from trajectory {other}")]
    InvarianceMismatch { element: String, value: f64, chosen: usize, other_value: f64, other: usize },
    #[error("level-set characterization failed at element `{element}`: {detail}")]
    CharacterizationMismatch { element: String, detail: String },
    #[error("the minimum-value comparisons require a unique optimum; found {0} optimal trajectories")]
    NotUnique(usize),
    #[error("minimum-value inequality violated: {0}")]
    InequalityViolated(String),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Subtraction(#[from] SubtractionError),
}

/// The tolerance inverse: `−t` for addition kind, `e ⊖↑ t` for
/// multiplication kind. An involution with `e⁻¹ = e`. Zero negates to
/// plain `0.0` so serialized values carry no `-0.0` artifacts.
pub fn invert(op: &AOperation, t: f64) -> Result<f64, SubtractionError> {
    match op.kind() {
        OpKind::Addition => Ok(if t == 0.0 { 0.0 } else { -t }),
        OpKind::Multiplication => Ok(upper_sub(op, op.neutral(), t)?.value),
    }
}

fn check_applicable(p: &Problem) -> Result<(), InvariantError> {
    let op = p.operation();
    if !op.strict() {
        return Err(InvariantError::NotStrict(op.name().to_string()));
    }
    for (i, &c) in p.costs().iter().enumerate() {
        if c <= 0.0 {
            return Err(InvariantError::NonPositiveCost { element: p.element_id(i).to_string(), cost: c });
        }
    }
    Ok(())
}

/// `T` and `T̄` relative to one optimal trajectory `s`, as parallel
/// vectors over the ground set.
fn values_from(p: &Problem, opt: &OptimalSet, s: usize) -> Result<(Vec<f64>, Vec<f64>), InvariantError> {
    let op = p.operation();
    let mask = p.trajectories()[s];
    let mut values = Vec::with_capacity(p.len());
    let mut extended = Vec::with_capacity(p.len());
    for x in 0..p.len() {
        if mask >> x & 1 == 1 {
            let u = upper_tolerance_with(p, opt, s, x)?.upper_tolerance.expect("strict ops set u");
            values.push(u);
            extended.push(u);
        } else {
            let row = lower_tolerance_with(p, opt, s, x)?;
            values.push(invert(op, row.lower_tolerance.expect("strict ops set l"))?);
            extended.push(invert(op, row.extended_lower_tolerance.expect("strict ops set l-bar"))?);
        }
    }
    Ok((values, extended))
}

/// Builds the tolerance function from the lowest-index optimal
/// trajectory. With `verify_invariance`, recomputes it from every
/// other optimal trajectory and errors on elementwise disagreement;
/// both `T` and `T̄` are compared.
pub fn tolerance_function(p: &Problem, verify_invariance: bool) -> Result<ToleranceReport, InvariantError> {
    check_applicable(p)?;
    let opt = p.solve();
    let chosen = opt.trajectories[0];
    let (values, extended) = values_from(p, &opt, chosen)?;

    if verify_invariance {
        for &other in &opt.trajectories[1..] {
            let (other_values, other_extended) = values_from(p, &opt, other)?;
            for x in 0..p.len() {
                for (mine, theirs) in [(&values, &other_values), (&extended, &other_extended)] {
                    if !approx_eq(mine[x], theirs[x], EPS_TEST) {
                        return Err(InvariantError::InvarianceMismatch {
                            element: p.element_id(x).to_string(),
                            value: mine[x],
                            chosen,
                            other_value: theirs[x],
                            other,
                        });
                    }
                }
            }
        }
    }

    let (union_mask, intersection_mask) = opt
        .trajectories
        .iter()
        .map(|&s| p.trajectories()[s])
        .fold((0u64, u64::MAX), |(u, i), m| (u | m, i & m));
    Ok(ToleranceReport {
        ids: p.ids().to_vec(),
        values,
        extended,
        neutral: p.operation().neutral(),
        union_mask,
        intersection_mask,
        unique: opt.is_unique(),
        chosen,
        optimal: opt,
    })
}

/// Band half-width for "equals the neutral": absolute for addition
/// kind (neutral 0), relative to the neutral for multiplication kind.
pub(crate) fn neutral_band(op: &AOperation) -> f64 {
    match op.kind() {
        OpKind::Addition => EPS_TEST,
        OpKind::Multiplication => EPS_TEST * op.neutral(),
    }
}

/// Computes the five level sets of `T` around the neutral and checks
/// each against its enumerated optimal-set counterpart:
///
/// ```text
/// {T = e} = (∪𝒮*)∖(∩𝒮*)   {T > e} = ∩𝒮*   {T ≥ e} = ∪𝒮*
/// {T < e} = X∖(∪𝒮*)        {T ≤ e} = X∖(∩𝒮*)
/// ```
pub fn characterize(p: &Problem, report: &ToleranceReport) -> Result<Characterization, InvariantError> {
    let band = neutral_band(p.operation());
    let e = report.neutral;
    let full: u64 = if p.len() == 64 { u64::MAX } else { (1u64 << p.len()) - 1 };
    let mut sets = Characterization {
        equal_neutral: 0,
        above_neutral: 0,
        at_least_neutral: 0,
        below_neutral: 0,
        at_most_neutral: 0,
    };
    for (x, &t) in report.values.iter().enumerate() {
        let bit = 1u64 << x;
        if (t - e).abs() <= band {
            sets.equal_neutral |= bit;
        }
        if t > e + band {
            sets.above_neutral |= bit;
        }
        if t >= e - band {
            sets.at_least_neutral |= bit;
        }
        if t < e - band {
            sets.below_neutral |= bit;
        }
        if t <= e + band {
            sets.at_most_neutral |= bit;
        }
    }
    let union = report.union_mask & full;
    let inter = report.intersection_mask & full;
    let expected = [
        ("T = e", sets.equal_neutral, union & !inter),
        ("T > e", sets.above_neutral, inter),
        ("T >= e", sets.at_least_neutral, union),
        ("T < e", sets.below_neutral, full & !union),
        ("T <= e", sets.at_most_neutral, full & !inter),
    ];
    for (name, got, want) in expected {
        if got != want {
            let bad = (got ^ want).trailing_zeros() as usize;
            return Err(InvariantError::CharacterizationMismatch {
                element: p.element_id(bad).to_string(),
                detail: format!(
                    "{{{name}}} disagrees with its optimal-set counterpart (T = {}, neutral {e})",
                    report.values[bad]
                ),
            });
        }
    }
    Ok(sets)
}

/// The optimum is unique exactly when no tolerance value sits in the
/// neutral band. Cross-checked against enumeration in debug builds.
pub fn uniqueness(p: &Problem, report: &ToleranceReport) -> bool {
    let band = neutral_band(p.operation());
    let verdict = report.values.iter().all(|&t| (t - report.neutral).abs() > band);
    debug_assert_eq!(verdict, report.unique, "neutral-avoidance must match enumeration");
    verdict
}

/// Trajectories strictly containing `members` (as a ground-set
/// bitmask): `{S ∈ 𝒮 : members ⊂ S, S ≠ members}`.
pub fn covering(p: &Problem, members: u64) -> Vec<usize> {
    (0..p.trajectory_count())
        .filter(|&s| {
            let m = p.trajectories()[s];
            members & !m == 0 && m != members
        })
        .collect()
}

/// True when no trajectory contains another (set containment, so
/// duplicate trajectories also count as embedded).
pub fn nonembedded(p: &Problem) -> bool {
    let masks = p.trajectories();
    for (i, &a) in masks.iter().enumerate() {
        for (j, &b) in masks.iter().enumerate() {
            if i != j && a & !b == 0 {
                return false;
            }
        }
    }
    true
}

/// Verifies the minimum-value comparisons for a unique optimum (see
/// the module docs). Addition kind needs positive costs (already
/// enforced by the report); multiplication kind needs costs at or
/// above the neutral. Violations are errors carrying the numbers.
pub fn min_inequalities(p: &Problem, report: &ToleranceReport) -> Result<MinInequalities, InvariantError> {
    let op = p.operation();
    if !report.unique {
        return Err(InvariantError::NotUnique(report.optimal.trajectories.len()));
    }
    if op.kind() == OpKind::Multiplication {
        for (i, &c) in p.costs().iter().enumerate() {
            if c < op.neutral() - crate::numeric::slack(op.neutral(), crate::numeric::EPS_NUM) {
                return Err(InvariantError::CostBelowNeutral {
                    element: p.element_id(i).to_string(),
                    cost: c,
                    neutral: op.neutral(),
                });
            }
        }
    }
    let star = p.trajectories()[report.chosen];

    // inverting T recovers l and l-bar on the outside elements
    let mut min_lower = f64::INFINITY;
    let mut min_extended = f64::INFINITY;
    let mut min_upper = f64::INFINITY;
    for x in 0..p.len() {
        if star >> x & 1 == 1 {
            min_upper = min_upper.min(report.values[x]);
        } else {
            min_lower = min_lower.min(invert(op, report.values[x])?);
            min_extended = min_extended.min(invert(op, report.extended[x])?);
        }
    }

    let covered = covering(p, star).into_iter().fold(0u64, |m, s| m | p.trajectories()[s]);
    let restricted: Vec<usize> =
        (0..p.len()).filter(|&x| star >> x & 1 == 0 && covered >> x & 1 == 0).collect();
    let mut restricted_min_extended = None;
    for &x in &restricted {
        let v = invert(op, report.extended[x])?;
        restricted_min_extended = Some(restricted_min_extended.map_or(v, |m: f64| m.min(v)));
    }

    if !approx_le(min_lower, min_extended, EPS_TEST) || !approx_le(min_extended, min_upper, EPS_TEST) {
        return Err(InvariantError::InequalityViolated(format!(
            "min l = {min_lower} <= min l-bar = {min_extended} <= min u = {min_upper} fails"
        )));
    }
    if let Some(r) = restricted_min_extended {
        if !approx_le(min_upper, r, EPS_TEST) {
            return Err(InvariantError::InequalityViolated(format!(
                "min u = {min_upper} <= covering-restricted min l-bar = {r} fails"
            )));
        }
    }

    let ne = nonembedded(p);
    let corollary_equality = approx_eq(min_extended, min_upper, EPS_TEST);
    let full_chain_equality = corollary_equality && approx_eq(min_lower, min_extended, EPS_TEST);
    if ne && !corollary_equality {
        return Err(InvariantError::InequalityViolated(format!(
            "nonembedded collection needs min l-bar = {min_extended} to equal min u = {min_upper}"
        )));
    }
    if ne && op.kind() == OpKind::Multiplication && !full_chain_equality {
        return Err(InvariantError::InequalityViolated(format!(
            "multiplication kind on a nonembedded collection needs the full chain equal: {min_lower}, {min_extended}, {min_upper}"
        )));
    }

    Ok(MinInequalities {
        min_lower,
        min_extended,
        min_upper,
        restricted_min_extended,
        nonembedded: ne,
        corollary_equality,
        full_chain_equality,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::builtin;
    use crate::problem::fixtures::{tied_pair, two_route};
    use std::collections::BTreeMap;

    fn problem(
        op: &str,
        ids: &[&str],
        costs: &[f64],
        trajectories: &[&[&str]],
        checked: bool,
    ) -> Problem {
        let cost_map: BTreeMap<String, f64> =
            ids.iter().zip(costs).map(|(&k, &v)| (k.to_string(), v)).collect();
        let ground: Vec<String> = ids.iter().map(|s| s.to_string()).collect();
        let trajs: Vec<Vec<String>> =
            trajectories.iter().map(|t| t.iter().map(|s| s.to_string()).collect()).collect();
        let op = builtin(op, None).unwrap();
        if checked {
            Problem::new(op, ground, &cost_map, &trajs).unwrap()
        } else {
            Problem::new_unchecked(op, ground, &cost_map, &trajs).unwrap()
        }
    }

    #[test]
    fn tolerance_function_on_the_fixtures() {
        let report = tolerance_function(&two_route(), true).unwrap();
        assert_eq!(report.values, vec![2.0, 2.0, -1.0, -2.0]);
        assert_eq!(report.extended, vec![2.0, 2.0, -2.0, -2.0]);
        assert!(report.unique);

        let report = tolerance_function(&tied_pair(), true).unwrap();
        assert_eq!(report.values, vec![0.0, 2.0, 0.0, 0.0, 0.0, -2.0]);
        assert_eq!(report.extended, vec![0.0, 2.0, 0.0, 0.0, 0.0, -2.0]);
        assert!(!report.unique);
        assert_eq!(report.union_mask, 0b011111);
        assert_eq!(report.intersection_mask & 0b111111, 0b000010);
    }

    #[test]
    fn applicability_gates() {
        let p = problem("max", &["a", "b"], &[1.0, 2.0], &[&["a"], &["b"]], true);
        assert!(matches!(tolerance_function(&p, false), Err(InvariantError::NotStrict(_))));

        let p = problem("plus", &["a", "b"], &[0.0, 2.0], &[&["a"], &["b"]], true);
        assert!(matches!(tolerance_function(&p, false), Err(InvariantError::NonPositiveCost { .. })));
    }

    #[test]
    fn inversion_is_an_involution() {
        let plus = builtin("plus", None).unwrap();
        assert_eq!(invert(&plus, 3.5).unwrap(), -3.5);
        assert_eq!(invert(&plus, invert(&plus, 3.5).unwrap()).unwrap(), 3.5);

        for name in ["product", "scaled_product", "log_expm1_product", "log1p_product"] {
            let op = builtin(name, Some(2.0)).unwrap();
            let e = op.neutral();
            let t = 3.0 * e;
            let inv = invert(&op, t).unwrap();
            assert!(inv < e, "{name}: inverted value must drop below the neutral");
            assert!(approx_eq(invert(&op, inv).unwrap(), t, EPS_TEST), "{name}: double inversion");
            assert!(approx_eq(invert(&op, e).unwrap(), e, EPS_TEST), "{name}: neutral is fixed");
        }
    }

    #[test]
    fn characterization_matches_enumeration() {
        let p = two_route();
        let report = tolerance_function(&p, true).unwrap();
        let sets = characterize(&p, &report).unwrap();
        assert_eq!(sets.equal_neutral, 0b0000);
        assert_eq!(sets.above_neutral, 0b0011);
        assert_eq!(sets.at_least_neutral, 0b0011);
        assert_eq!(sets.below_neutral, 0b1100);
        assert_eq!(sets.at_most_neutral, 0b1100);
        assert!(uniqueness(&p, &report));

        let q = tied_pair();
        let report = tolerance_function(&q, true).unwrap();
        let sets = characterize(&q, &report).unwrap();
        assert_eq!(sets.equal_neutral, 0b011101);
        assert_eq!(sets.above_neutral, 0b000010);
        assert_eq!(sets.at_least_neutral, 0b011111);
        assert_eq!(sets.below_neutral, 0b100000);
        assert!(!uniqueness(&q, &report));
    }

    #[test]
    fn covering_and_embedding() {
        assert!(nonembedded(&two_route()));
        assert!(nonembedded(&tied_pair()));
        assert!(covering(&two_route(), 0b0011).is_empty());

        // {a,b} sits inside {a,b,c}; the third trajectory restores the
        // empty-intersection axiom
        let p = problem(
            "plus",
            &["a", "b", "c", "d"],
            &[1.0, 1.0, 5.0, 1.0],
            &[&["a", "b"], &["a", "b", "c"], &["c", "d"]],
            true,
        );
        assert!(!nonembedded(&p));
        assert_eq!(covering(&p, 0b0011), vec![1]);
        assert_eq!(covering(&p, p.trajectories()[2]), Vec::<usize>::new());
    }

    #[test]
    fn min_inequalities_on_the_two_route_instance() {
        let p = two_route();
        let report = tolerance_function(&p, true).unwrap();
        let mins = min_inequalities(&p, &report).unwrap();
        assert_eq!(mins.min_lower, 1.0);
        assert_eq!(mins.min_extended, 2.0);
        assert_eq!(mins.min_upper, 2.0);
        assert_eq!(mins.restricted_min_extended, Some(2.0));
        assert!(mins.nonembedded);
        assert!(mins.corollary_equality);
        assert!(!mins.full_chain_equality, "addition kind may keep min l strictly below");
    }

    #[test]
    fn min_inequalities_require_a_unique_optimum() {
        let q = tied_pair();
        let report = tolerance_function(&q, true).unwrap();
        assert!(matches!(min_inequalities(&q, &report), Err(InvariantError::NotUnique(2))));
    }

    #[test]
    fn covering_restriction_makes_the_reverse_bound_sharp() {
        // {a} is covered by {a,b}: the reverse bound must skip b, and
        // with it holds with equality: u(a) = 9 = l-bar(c)
        let p = problem("plus", &["a", "b", "c"], &[1.0, 5.0, 5.0], &[&["a"], &["a", "b"], &["b", "c"]], true);
        let report = tolerance_function(&p, true).unwrap();
        assert_eq!(report.values, vec![9.0, -5.0, -5.0]);
        assert_eq!(report.extended, vec![9.0, -5.0, -9.0]);
        let mins = min_inequalities(&p, &report).unwrap();
        assert_eq!(mins.min_upper, 9.0);
        assert_eq!(mins.restricted_min_extended, Some(9.0));
        assert!(!mins.nonembedded);
        assert_eq!(mins.min_extended, 5.0, "unrestricted reverse bound would fail: 9 > 5");
    }

    #[test]
    fn product_kind_tightens_the_full_chain() {
        let p = problem(
            "product",
            &["a", "b", "c", "d"],
            &[2.0, 3.0, 4.0, 2.0],
            &[&["a", "b"], &["c", "d"]],
            true,
        );
        let report = tolerance_function(&p, true).unwrap();
        let mins = min_inequalities(&p, &report).unwrap();
        assert!(mins.nonembedded && mins.corollary_equality && mins.full_chain_equality);
        assert!(approx_eq(mins.min_upper, 8.0 / 6.0, EPS_TEST));

        // a cost below the neutral voids the hypotheses
        let q = problem("product", &["a", "b"], &[0.5, 2.0], &[&["a"], &["b"]], true);
        let report = tolerance_function(&q, true).unwrap();
        assert!(matches!(min_inequalities(&q, &report), Err(InvariantError::CostBelowNeutral { .. })));
    }

    #[test]
    fn extended_function_is_invariant_too() {
        // both optima see the same T and T-bar on every element
        let q = tied_pair();
        let opt = q.solve();
        let (v0, e0) = values_from(&q, &opt, 0).unwrap();
        let (v1, e1) = values_from(&q, &opt, 1).unwrap();
        for x in 0..q.len() {
            assert!(approx_eq(v0[x], v1[x], EPS_TEST));
            assert!(approx_eq(e0[x], e1[x], EPS_TEST));
        }
    }
}
