//! Generalized addition operations and order-preserving rescalings.
//!
//! An *A-operation* `⊕` is a binary aggregation on the nonnegative reals
//! that keeps just enough of the structure of `+` for sensitivity
//! analysis to go through: it is continuous, associative, commutative,
//! nondecreasing in each argument and unbounded (`u ⊕ v → ∞` as
//! `u → ∞`). Two conventions are supported:
//!
//! * **addition** operations act on `[0, ∞)` with neutral element `0`
//!   (so `u ⊕ v >= max { u, v }`);
//! * **multiplication** operations act on `(0, ∞)`, vanish in the limit
//!   of a zero argument and carry their own neutral element `e`.
//!
//! An operation is **strict** when it is strictly increasing in each
//! argument; `max` and the clamped sum are the nonstrict members of the
//! built-in catalog. Strictness decides whether the two generalized
//! subtractions coincide (see [`crate::subtraction`]) and therefore
//! whether cost tolerances are well defined.
//!
//! Built-in catalog (`p > 0` where it appears):
//!
//! | name                 | `u ⊕ v`                                   | kind | strict | neutral |
//! |----------------------|-------------------------------------------|------|--------|---------|
//! | `plus`               | `u + v`                                   | add  | yes    | 0       |
//! | `p_sum`              | `(u^p + v^p)^(1/p)`                       | add  | yes    | 0       |
//! | `max`                | `max { u, v }`                            | add  | no     | 0       |
//! | `log_exp_sum`        | `ln(e^(pu) + e^(pv) - 1) / p`             | add  | yes    | 0       |
//! | `pq_sum`             | `u + v + p·u·v`                           | add  | yes    | 0       |
//! | `clamp_sum`          | `u + v` below 1, clamped to `max` above   | add  | no     | 0       |
//! | `product`            | `u · v`                                   | mult | yes    | 1       |
//! | `scaled_product`     | `p·u·v`                                   | mult | yes    | 1/p     |
//! | `log_expm1_product`  | `ln(1 + (e^(pu)-1)(e^(pv)-1)) / p`        | mult | yes    | ln2/p   |
//! | `log1p_product`      | `(exp[ln(1+pu)·ln(1+pv)] - 1) / p`        | mult | yes    | (e-1)/p |
//!
//! New operations are obtained from old ones by conjugation with a
//! [`PhiFunction`] `φ` (continuous, strictly increasing, `φ(0) = 0`,
//! `φ(u) → ∞`): `E_φ(⊕)(u, v) = φ⁻¹(φ(u) ⊕ φ(v))`. Conjugation
//! preserves kind, strictness and all the axioms, and maps neutral
//! elements through `φ⁻¹`. The log-domain members of the catalog keep
//! full precision for arguments with `|p·u| <= 500`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{approx_le, Cost, EPS_NUM};

type BinaryFn = Arc<dyn Fn(Cost, Cost) -> Cost + Send + Sync>;
type UnaryFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Which convention an operation follows: `Addition` lives on `[0, ∞)`
/// with neutral 0, `Multiplication` on `(0, ∞)` with its own neutral.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Addition,
    Multiplication,
}

/// Wire format for an operation: `{"kind": "p_sum", "p": 2.0}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationSpec {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
}

impl OperationSpec {
    pub fn new(kind: impl Into<String>, p: Option<f64>) -> Self {
        OperationSpec { kind: kind.into(), p }
    }

    pub fn build(&self) -> Result<AOperation, AlgebraError> {
        builtin(&self.kind, self.p)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AlgebraError {
    #[error("unknown operation `{0}`; known operations: {}", builtin_names().join(", "))]
    UnknownOperation(String),
    #[error("operation `{name}` requires parameter p > 0, got {p}")]
    NonPositiveParameter { name: String, p: f64 },
    #[error("operation `{name}` requires parameter p")]
    MissingParameter { name: String },
}

/// Closed-form generalized subtractions attached to an operation.
/// `upper(w, v)` assumes `(w, v)` lies in the upper-subtraction domain;
/// `lower(w, v)` is total on the cost domain.
#[derive(Clone)]
pub struct ClosedForms {
    pub upper: BinaryFn,
    pub lower: BinaryFn,
}

/// A generalized addition operation. Values are immutable after
/// construction and cheap to clone; the function objects are shared.
#[derive(Clone)]
pub struct AOperation {
    name: String,
    kind: OpKind,
    strict: bool,
    neutral: Cost,
    apply: BinaryFn,
    closed_forms: Option<ClosedForms>,
    spec: Option<OperationSpec>,
}

impl fmt::Debug for AOperation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AOperation")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("strict", &self.strict)
            .field("neutral", &self.neutral)
            .finish()
    }
}

impl AOperation {
    /// Builds an operation from raw parts. Intended for tests and for
    /// experiments with candidate operations; the built-in catalog and
    /// [`AOperation::generate`] cover the supported families.
    pub fn custom(
        name: impl Into<String>,
        kind: OpKind,
        strict: bool,
        neutral: Cost,
        apply: impl Fn(Cost, Cost) -> Cost + Send + Sync + 'static,
    ) -> Self {
        AOperation {
            name: name.into(),
            kind,
            strict,
            neutral,
            apply: Arc::new(apply),
            closed_forms: None,
            spec: None,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> OpKind {
        self.kind
    }

    pub fn strict(&self) -> bool {
        self.strict
    }

    pub fn neutral(&self) -> Cost {
        self.neutral
    }

    /// The wire spec this operation was built from, when it came from
    /// the built-in catalog. Conjugated operations have none.
    pub fn spec(&self) -> Option<&OperationSpec> {
        self.spec.as_ref()
    }

    pub(crate) fn closed_forms(&self) -> Option<&ClosedForms> {
        self.closed_forms.as_ref()
    }

    #[inline]
    pub fn apply(&self, u: Cost, v: Cost) -> Cost {
        (self.apply)(u, v)
    }

    /// Folds a multiset of costs. The empty fold is the neutral
    /// element; a singleton fold returns its value verbatim so that
    /// measures of single elements stay bit-exact.
    pub fn fold<I>(&self, values: I) -> Cost
    where
        I: IntoIterator<Item = Cost>,
    {
        let mut acc: Option<Cost> = None;
        for v in values {
            acc = Some(match acc {
                None => v,
                Some(a) => self.apply(a, v),
            });
        }
        acc.unwrap_or(self.neutral)
    }

    /// Conjugates this operation by `phi`:
    /// `E_φ(⊕)(u, v) = φ⁻¹(φ(u) ⊕ φ(v))`. Kind and strictness carry
    /// over and the neutral element maps through `φ⁻¹`. The result has
    /// no closed-form subtractions, so subtraction falls back to
    /// bracketed bisection.
    pub fn generate(&self, phi: &PhiFunction) -> AOperation {
        let base = self.apply.clone();
        let fwd = phi.forward.clone();
        let inv = phi.inverse.clone();
        AOperation {
            name: format!("{}∘{}", phi.name, self.name),
            kind: self.kind,
            strict: self.strict,
            neutral: phi.inverse(self.neutral),
            apply: Arc::new(move |u, v| inv(base(fwd(u), fwd(v)))),
            closed_forms: None,
            spec: None,
        }
    }

    /// True when the operation coincides with the pointwise maximum on
    /// a sample grid. Conjugation leaves `max` fixed, so this detects
    /// the whole `max` family; the sharper endpoint formulas in
    /// [`crate::stability`] apply exactly to it.
    pub fn behaves_like_max(&self) -> bool {
        if self.strict || self.kind != OpKind::Addition {
            return false;
        }
        const PAIRS: [(f64, f64); 5] = [(0.3, 0.4), (0.0, 2.0), (1.0, 1.0), (2.5, 7.0), (10.0, 3.0)];
        PAIRS
            .iter()
            .all(|&(u, v)| (self.apply(u, v) - u.max(v)).abs() <= EPS_NUM * (1.0 + u.max(v)))
    }

    /// True when `x` is a valid cost for this operation's domain.
    pub fn admits_cost(&self, x: Cost) -> bool {
        x.is_finite()
            && match self.kind {
                OpKind::Addition => x >= 0.0,
                OpKind::Multiplication => x > 0.0,
            }
    }

    /// Numerically checks the operation axioms on a grid of sample
    /// costs. Never fails; the report carries one verdict per axiom
    /// with the worst violation found and a witness triple.
    pub fn check_axioms(&self, grid: &[Cost]) -> AxiomReport {
        let tol = |scale: f64| EPS_NUM * (1.0 + scale.abs());
        let mut commutativity = AxiomCheck::pass();
        let mut associativity = AxiomCheck::pass();
        let mut monotonicity = AxiomCheck::pass();
        let mut neutrality = AxiomCheck::pass();
        let mut strictness = AxiomCheck::pass();

        for &u in grid {
            for &v in grid {
                let uv = self.apply(u, v);
                let vu = self.apply(v, u);
                commutativity.observe((uv - vu).abs() - tol(uv), [u, v, f64::NAN]);

                for &w in grid {
                    let left = self.apply(self.apply(u, v), w);
                    let right = self.apply(u, self.apply(v, w));
                    associativity.observe((left - right).abs() - tol(left.abs().max(right.abs())), [u, v, w]);

                    if u < v {
                        let a = self.apply(u, w);
                        let b = self.apply(v, w);
                        monotonicity.observe(a - b - tol(b), [u, v, w]);
                        if b <= a {
                            // strictly increasing in the first argument fails here
                            strictness.observe(1.0, [u, v, w]);
                        }
                    }
                }
            }
            let ev = self.apply(self.neutral, u);
            neutrality.observe((ev - u).abs() - tol(u), [self.neutral, u, f64::NAN]);
        }

        let kind_specific = match self.kind {
            OpKind::Addition => {
                // u ⊕ v >= max { u, v } follows from neutrality plus
                // monotonicity and makes unboundedness automatic.
                let mut dominance = AxiomCheck::pass();
                for &u in grid {
                    for &v in grid {
                        let uv = self.apply(u, v);
                        dominance.observe(u.max(v) - uv - tol(uv), [u, v, f64::NAN]);
                    }
                }
                dominance
            }
            OpKind::Multiplication => {
                // unboundedness: for each v, growing u must push u ⊕ v
                // strictly past everything the grid reaches. Growth can
                // be extremely slow, so the target is grid-relative.
                let mut unbounded = AxiomCheck::pass();
                let gmax = grid.iter().copied().fold(1.0f64, f64::max);
                for &v in grid {
                    if v <= 0.0 {
                        continue;
                    }
                    let reach = self.apply(gmax, v);
                    let target = reach + 0.5 * (1.0 + reach.abs());
                    let mut u = gmax;
                    let mut reached = false;
                    while u < 1e290 {
                        if self.apply(u, v) > target {
                            reached = true;
                            break;
                        }
                        u *= 2.0;
                    }
                    if !reached {
                        unbounded.observe(1.0, [u, v, f64::NAN]);
                    }
                }
                unbounded
            }
        };

        AxiomReport {
            commutativity,
            associativity,
            monotonicity,
            neutrality,
            kind_specific,
            strictness,
        }
    }
}

/// Verdict for one axiom: worst violation magnitude observed on the
/// grid (negative or zero means no violation) plus a witness triple.
#[derive(Debug, Clone)]
pub struct AxiomCheck {
    pub passed: bool,
    pub worst: f64,
    pub witness: Option<[f64; 3]>,
}

impl AxiomCheck {
    fn pass() -> Self {
        AxiomCheck { passed: true, worst: f64::NEG_INFINITY, witness: None }
    }

    fn observe(&mut self, excess: f64, witness: [f64; 3]) {
        if excess > self.worst {
            self.worst = excess;
            self.witness = Some(witness);
        }
        if excess > 0.0 {
            self.passed = false;
        }
    }
}

/// Axiom verdicts for one operation on one grid. `kind_specific` is
/// dominance (`u ⊕ v >= max`) for addition operations and numeric
/// unboundedness for multiplication operations. `strictness` reports
/// whether the operation behaved strictly increasing on the grid; it
/// is informational and should be compared against the declared flag.
#[derive(Debug, Clone)]
pub struct AxiomReport {
    pub commutativity: AxiomCheck,
    pub associativity: AxiomCheck,
    pub monotonicity: AxiomCheck,
    pub neutrality: AxiomCheck,
    pub kind_specific: AxiomCheck,
    pub strictness: AxiomCheck,
}

impl AxiomReport {
    /// All axioms every operation must satisfy (strictness excluded).
    pub fn core_pass(&self) -> bool {
        self.commutativity.passed
            && self.associativity.passed
            && self.monotonicity.passed
            && self.neutrality.passed
            && self.kind_specific.passed
    }

    /// Core axioms hold and observed strictness matches the declared flag.
    pub fn matches(&self, op: &AOperation) -> bool {
        self.core_pass() && self.strictness.passed == op.strict()
    }
}

/// A sensible default grid for axiom checking.
pub fn default_grid(kind: OpKind) -> Vec<Cost> {
    let mut g = vec![0.001, 0.1, 0.5, 1.0, 1.5, 2.0, 3.7, 5.0, 10.0];
    if kind == OpKind::Addition {
        g.insert(0, 0.0);
    }
    g
}

/// Names accepted by [`builtin`].
pub fn builtin_names() -> &'static [&'static str] {
    &[
        "plus",
        "p_sum",
        "max",
        "log_exp_sum",
        "pq_sum",
        "clamp_sum",
        "product",
        "scaled_product",
        "log_expm1_product",
        "log1p_product",
    ]
}

/// `ln(1 + e^t)` without overflow.
fn ln1p_exp(t: f64) -> f64 {
    if t > 30.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// `ln(e^x - 1)` for `x > 0` without overflow; `-inf` at `x = 0`.
fn ln_expm1(x: f64) -> f64 {
    if x > 30.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

/// Looks up a built-in operation by name. `p` must be positive where
/// the family is parameterized and is ignored otherwise.
pub fn builtin(name: &str, p: Option<f64>) -> Result<AOperation, AlgebraError> {
    let need_p = || -> Result<f64, AlgebraError> {
        match p {
            Some(p) if p > 0.0 => Ok(p),
            Some(p) => Err(AlgebraError::NonPositiveParameter { name: name.to_string(), p }),
            None => Err(AlgebraError::MissingParameter { name: name.to_string() }),
        }
    };
    if let Some(p) = p {
        if p <= 0.0 {
            return Err(AlgebraError::NonPositiveParameter { name: name.to_string(), p });
        }
    }
    let spec = Some(OperationSpec::new(name, p));

    let op = match name {
        "plus" => AOperation {
            name: "plus".into(),
            kind: OpKind::Addition,
            strict: true,
            neutral: 0.0,
            apply: Arc::new(|u, v| u + v),
            closed_forms: Some(ClosedForms {
                upper: Arc::new(|w, v| (w - v).max(0.0)),
                lower: Arc::new(|w, v| (w - v).max(0.0)),
            }),
            spec,
        },
        "p_sum" => {
            let p = need_p()?;
            AOperation {
                name: format!("p_sum(p={p})"),
                kind: OpKind::Addition,
                strict: true,
                neutral: 0.0,
                apply: Arc::new(move |u, v| (u.powf(p) + v.powf(p)).powf(1.0 / p)),
                closed_forms: Some(ClosedForms {
                    upper: Arc::new(move |w, v| (w.powf(p) - v.powf(p)).max(0.0).powf(1.0 / p)),
                    lower: Arc::new(move |w, v| (w.powf(p) - v.powf(p)).max(0.0).powf(1.0 / p)),
                }),
                spec,
            }
        }
        "max" => AOperation {
            name: "max".into(),
            kind: OpKind::Addition,
            strict: false,
            neutral: 0.0,
            apply: Arc::new(|u, v| u.max(v)),
            closed_forms: Some(ClosedForms {
                // right inverse: sup { u : max(u, v) <= w } = w whenever v <= w
                upper: Arc::new(|w, _v| w),
                // left inverse: min { u : max(u, v) >= w } jumps at v = w
                lower: Arc::new(|w, v| if v < w { w } else { 0.0 }),
            }),
            spec,
        },
        "log_exp_sum" => {
            let p = need_p()?;
            AOperation {
                name: format!("log_exp_sum(p={p})"),
                kind: OpKind::Addition,
                strict: true,
                neutral: 0.0,
                apply: Arc::new(move |u, v| {
                    let (a, b) = (p * u, p * v);
                    let m = a.max(b);
                    // m + ln(e^(a-m) + e^(b-m) - e^(-m)) stays in range
                    (m + ((a - m).exp() + (b - m).exp() - (-m).exp()).ln()) / p
                }),
                closed_forms: Some(ClosedForms {
                    upper: Arc::new(move |w, v| {
                        let inner = 1.0 - (p * (v - w)).exp() + (-p * w).exp();
                        if inner <= 0.0 {
                            0.0
                        } else {
                            (w + inner.ln() / p).max(0.0)
                        }
                    }),
                    lower: Arc::new(move |w, v| {
                        if v >= w {
                            return 0.0;
                        }
                        let inner = 1.0 - (p * (v - w)).exp() + (-p * w).exp();
                        if inner <= 0.0 {
                            0.0
                        } else {
                            (w + inner.ln() / p).max(0.0)
                        }
                    }),
                }),
                spec,
            }
        }
        "pq_sum" => {
            let p = need_p()?;
            AOperation {
                name: format!("pq_sum(p={p})"),
                kind: OpKind::Addition,
                strict: true,
                neutral: 0.0,
                apply: Arc::new(move |u, v| u + v + p * u * v),
                closed_forms: Some(ClosedForms {
                    upper: Arc::new(move |w, v| ((w - v) / (1.0 + p * v)).max(0.0)),
                    lower: Arc::new(move |w, v| ((w - v) / (1.0 + p * v)).max(0.0)),
                }),
                spec,
            }
        }
        "clamp_sum" => AOperation {
            name: "clamp_sum".into(),
            kind: OpKind::Addition,
            strict: false,
            neutral: 0.0,
            // plain sum below 1; saturates at 1, then follows max
            apply: Arc::new(|u, v| {
                let b = u + v;
                if b < 1.0 {
                    b
                } else {
                    u.max(v).max(1.0)
                }
            }),
            closed_forms: None,
            spec,
        },
        "product" => AOperation {
            name: "product".into(),
            kind: OpKind::Multiplication,
            strict: true,
            neutral: 1.0,
            apply: Arc::new(|u, v| u * v),
            closed_forms: Some(ClosedForms {
                upper: Arc::new(|w, v| w / v),
                lower: Arc::new(|w, v| w / v),
            }),
            spec,
        },
        "scaled_product" => {
            let p = need_p()?;
            AOperation {
                name: format!("scaled_product(p={p})"),
                kind: OpKind::Multiplication,
                strict: true,
                neutral: 1.0 / p,
                apply: Arc::new(move |u, v| p * u * v),
                closed_forms: Some(ClosedForms {
                    upper: Arc::new(move |w, v| w / (p * v)),
                    lower: Arc::new(move |w, v| w / (p * v)),
                }),
                spec,
            }
        }
        "log_expm1_product" => {
            let p = need_p()?;
            AOperation {
                name: format!("log_expm1_product(p={p})"),
                kind: OpKind::Multiplication,
                strict: true,
                neutral: std::f64::consts::LN_2 / p,
                apply: Arc::new(move |u, v| {
                    // ln(1 + (e^(pu)-1)(e^(pv)-1)) / p in log space
                    let l = ln_expm1(p * u) + ln_expm1(p * v);
                    ln1p_exp(l) / p
                }),
                closed_forms: Some(ClosedForms {
                    upper: Arc::new(move |w, v| ln1p_exp(ln_expm1(p * w) - ln_expm1(p * v)) / p),
                    lower: Arc::new(move |w, v| ln1p_exp(ln_expm1(p * w) - ln_expm1(p * v)) / p),
                }),
                spec,
            }
        }
        "log1p_product" => {
            let p = need_p()?;
            AOperation {
                name: format!("log1p_product(p={p})"),
                kind: OpKind::Multiplication,
                strict: true,
                neutral: (std::f64::consts::E - 1.0) / p,
                apply: Arc::new(move |u, v| ((p * u).ln_1p() * (p * v).ln_1p()).exp_m1() / p),
                closed_forms: Some(ClosedForms {
                    upper: Arc::new(move |w, v| ((p * w).ln_1p() / (p * v).ln_1p()).exp_m1() / p),
                    lower: Arc::new(move |w, v| ((p * w).ln_1p() / (p * v).ln_1p()).exp_m1() / p),
                }),
                spec,
            }
        }
        other => return Err(AlgebraError::UnknownOperation(other.to_string())),
    };
    Ok(op)
}

/// An order-preserving rescaling of the cost axis: continuous, strictly
/// increasing, `φ(0) = 0`, `φ(u) → ∞`. Conjugating an operation by a
/// rescaling yields an equivalent operation with identical optima.
#[derive(Clone)]
pub struct PhiFunction {
    name: String,
    forward: UnaryFn,
    inverse: UnaryFn,
}

impl fmt::Debug for PhiFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PhiFunction({})", self.name)
    }
}

impl PhiFunction {
    pub fn new(
        name: impl Into<String>,
        forward: impl Fn(f64) -> f64 + Send + Sync + 'static,
        inverse: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        PhiFunction { name: name.into(), forward: Arc::new(forward), inverse: Arc::new(inverse) }
    }

    pub fn identity() -> Self {
        PhiFunction::new("id", |u| u, |u| u)
    }

    /// `u ↦ u^p`.
    pub fn power(p: f64) -> Self {
        assert!(p > 0.0, "power rescaling needs p > 0");
        PhiFunction::new(format!("pow{p}"), move |u| u.powf(p), move |y| y.powf(1.0 / p))
    }

    /// `u ↦ e^(pu) - 1`.
    pub fn exp_scaled(p: f64) -> Self {
        assert!(p > 0.0, "exponential rescaling needs p > 0");
        PhiFunction::new(format!("expm1·{p}"), move |u| (p * u).exp_m1(), move |y| y.ln_1p() / p)
    }

    /// `u ↦ ln(1 + pu)`.
    pub fn log1p_scaled(p: f64) -> Self {
        assert!(p > 0.0, "logarithmic rescaling needs p > 0");
        PhiFunction::new(format!("ln1p·{p}"), move |u| (p * u).ln_1p(), move |y| y.exp_m1() / p)
    }

    /// `u ↦ pu`.
    pub fn scale(p: f64) -> Self {
        assert!(p > 0.0, "linear rescaling needs p > 0");
        PhiFunction::new(format!("scale·{p}"), move |u| p * u, move |y| y / p)
    }

    /// `outer ∘ inner`.
    pub fn compose(outer: &PhiFunction, inner: &PhiFunction) -> Self {
        let of = outer.forward.clone();
        let oi = outer.inverse.clone();
        let inf = inner.forward.clone();
        let ini = inner.inverse.clone();
        PhiFunction {
            name: format!("{}∘{}", outer.name, inner.name),
            forward: Arc::new(move |u| of(inf(u))),
            inverse: Arc::new(move |y| ini(oi(y))),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn forward(&self, u: f64) -> f64 {
        (self.forward)(u)
    }

    pub fn inverse(&self, y: f64) -> f64 {
        (self.inverse)(y)
    }
}

/// Convenience: neutral-respecting comparison used when deciding
/// whether a tolerance is trivial (equal to the neutral element).
pub fn at_neutral(op: &AOperation, value: Cost, eps: f64) -> bool {
    match op.kind() {
        OpKind::Addition => value.abs() <= eps,
        OpKind::Multiplication => (value - op.neutral()).abs() <= eps * op.neutral().max(1.0),
    }
}

/// True when `v <= w` holds up to fold-noise slack; used for domain
/// checks of addition-kind upper subtraction.
pub(crate) fn le_with_slack(v: Cost, w: Cost) -> bool {
    approx_le(v, w, EPS_NUM)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{approx_eq, EPS_TEST};
    use proptest::prelude::*;

    fn assert_close(a: f64, b: f64) {
        assert!(approx_eq(a, b, EPS_TEST), "{a} vs {b}");
    }

    #[test]
    fn builtin_catalog_examples() {
        let p2 = builtin("p_sum", Some(2.0)).unwrap();
        assert_close(p2.apply(3.0, 4.0), 5.0);

        let pq = builtin("pq_sum", Some(1.0)).unwrap();
        assert_close(pq.apply(1.0, 2.0), 5.0);

        let mx = builtin("max", None).unwrap();
        assert_eq!(mx.apply(2.0, 7.0), 7.0);

        let sp = builtin("scaled_product", Some(2.0)).unwrap();
        assert_eq!(sp.neutral(), 0.5);
        assert_close(sp.apply(0.5, 3.0), 3.0);
    }

    #[test]
    fn neutral_elements_act_neutrally() {
        for name in builtin_names() {
            let p = matches!(
                *name,
                "p_sum" | "log_exp_sum" | "pq_sum" | "scaled_product" | "log_expm1_product" | "log1p_product"
            )
            .then_some(1.7);
            let op = builtin(name, p).unwrap();
            for v in [0.25, 1.0, 3.0, 9.5] {
                assert!(
                    approx_eq(op.apply(op.neutral(), v), v, EPS_TEST),
                    "{name}: e ⊕ {v} strayed to {}",
                    op.apply(op.neutral(), v)
                );
            }
        }
    }

    #[test]
    fn builtin_rejects_bad_parameters() {
        assert!(matches!(builtin("frobnicate", None), Err(AlgebraError::UnknownOperation(_))));
        assert!(matches!(
            builtin("p_sum", Some(-1.0)),
            Err(AlgebraError::NonPositiveParameter { .. })
        ));
        assert!(matches!(builtin("p_sum", None), Err(AlgebraError::MissingParameter { .. })));
    }

    #[test]
    fn fold_examples() {
        let plus = builtin("plus", None).unwrap();
        assert_eq!(plus.fold([1.0, 1.0]), 2.0);
        assert_eq!(plus.fold([]), 0.0);

        let mx = builtin("max", None).unwrap();
        assert_eq!(mx.fold([2.0, 2.0, 2.0]), 2.0);

        let prod = builtin("product", None).unwrap();
        assert_eq!(prod.fold([]), 1.0);
        assert_eq!(prod.fold([3.0]), 3.0);

        let p2 = builtin("p_sum", Some(2.0)).unwrap();
        assert_close(p2.fold([1.0, 2.0, 2.0]), 3.0);
    }

    #[test]
    fn conjugating_plus_by_square_gives_quadratic_mean_sum() {
        let plus = builtin("plus", None).unwrap();
        let gen = plus.generate(&PhiFunction::power(2.0));
        let p2 = builtin("p_sum", Some(2.0)).unwrap();
        for (u, v) in [(0.0, 1.0), (3.0, 4.0), (2.5, 0.1), (7.0, 7.0)] {
            assert_close(gen.apply(u, v), p2.apply(u, v));
        }
        assert!(gen.strict());
        assert_eq!(gen.kind(), OpKind::Addition);
        assert_eq!(gen.neutral(), 0.0);
    }

    #[test]
    fn conjugating_product_by_scale_matches_scaled_product() {
        let prod = builtin("product", None).unwrap();
        let gen = prod.generate(&PhiFunction::scale(2.0));
        let sp = builtin("scaled_product", Some(2.0)).unwrap();
        assert_close(gen.neutral(), 0.5);
        for (u, v) in [(0.5, 3.0), (1.0, 1.0), (4.2, 0.7)] {
            assert_close(gen.apply(u, v), sp.apply(u, v));
        }
    }

    #[test]
    fn max_is_fixed_under_conjugation() {
        let mx = builtin("max", None).unwrap();
        for phi in [PhiFunction::power(3.0), PhiFunction::exp_scaled(1.0), PhiFunction::log1p_scaled(2.0)] {
            let gen = mx.generate(&phi);
            for (u, v) in [(0.0, 2.0), (5.0, 1.0), (3.3, 3.3)] {
                assert_close(gen.apply(u, v), u.max(v));
            }
            assert!(gen.behaves_like_max());
        }
    }

    #[test]
    fn conjugation_respects_composition_and_identity() {
        let plus = builtin("plus", None).unwrap();
        let id = plus.generate(&PhiFunction::identity());
        for (u, v) in [(1.0, 2.0), (0.0, 5.0)] {
            assert_close(id.apply(u, v), u + v);
        }

        let phi = PhiFunction::power(2.0);
        let psi = PhiFunction::exp_scaled(0.5);
        let composed = plus.generate(&PhiFunction::compose(&phi, &psi));
        let nested = plus.generate(&phi).generate(&psi);
        for (u, v) in [(0.2, 1.1), (2.0, 3.0), (4.4, 0.0)] {
            assert_close(composed.apply(u, v), nested.apply(u, v));
        }
    }

    #[test]
    fn axiom_report_accepts_strict_builtins_and_flags_max() {
        for (name, p) in [("plus", None), ("p_sum", Some(2.0)), ("log_exp_sum", Some(1.0)), ("pq_sum", Some(1.5))] {
            let op = builtin(name, p).unwrap();
            let rep = op.check_axioms(&default_grid(op.kind()));
            assert!(rep.matches(&op), "{name}: {rep:?}");
        }
        for (name, p) in [("product", None), ("scaled_product", Some(2.0)), ("log_expm1_product", Some(1.0)), ("log1p_product", Some(1.0))] {
            let op = builtin(name, p).unwrap();
            let rep = op.check_axioms(&default_grid(op.kind()));
            assert!(rep.matches(&op), "{name}: {rep:?}");
        }

        let mx = builtin("max", None).unwrap();
        let rep = mx.check_axioms(&default_grid(OpKind::Addition));
        assert!(rep.core_pass());
        assert!(!rep.strictness.passed);
        assert!(rep.matches(&mx));

        let cs = builtin("clamp_sum", None).unwrap();
        let rep = cs.check_axioms(&default_grid(OpKind::Addition));
        assert!(rep.core_pass(), "{rep:?}");
        assert!(!rep.strictness.passed);
    }

    #[test]
    fn axiom_report_catches_a_non_associative_operation() {
        let bad = AOperation::custom("lopsided", OpKind::Addition, true, 0.0, |u, v| u + v + u * v * v);
        let rep = bad.check_axioms(&default_grid(OpKind::Addition));
        assert!(!rep.associativity.passed);
        assert!(rep.associativity.witness.is_some());
    }

    #[test]
    fn log_domain_operations_survive_large_arguments() {
        let les = builtin("log_exp_sum", Some(1.0)).unwrap();
        let big = les.apply(300.0, 300.0);
        assert!(approx_eq(big, 300.0 + 2f64.ln(), 1e-9), "got {big}");

        let lep = builtin("log_expm1_product", Some(1.0)).unwrap();
        let v = lep.apply(400.0, 400.0);
        assert!(approx_eq(v, 800.0, 1e-9), "got {v}");
    }

    proptest! {
        #[test]
        fn fold_is_order_independent(mut xs in proptest::collection::vec(0.01f64..20.0, 1..10), seed in any::<u64>()) {
            for (name, p) in [("plus", None), ("p_sum", Some(2.0)), ("product", None), ("log_exp_sum", Some(0.5))] {
                let op = builtin(name, p).unwrap();
                let forward = op.fold(xs.iter().copied());
                // deterministic shuffle driven by the seed
                let mut state = seed;
                let mut next = || { state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407); state };
                for i in (1..xs.len()).rev() {
                    let j = (next() % (i as u64 + 1)) as usize;
                    xs.swap(i, j);
                }
                let shuffled = op.fold(xs.iter().copied());
                prop_assert!(approx_eq(forward, shuffled, EPS_NUM), "{name}: {forward} vs {shuffled}");
            }
        }

        #[test]
        fn rescalings_round_trip(u in 0.0f64..100.0) {
            for phi in [PhiFunction::power(2.0), PhiFunction::power(0.5), PhiFunction::exp_scaled(0.3),
                        PhiFunction::log1p_scaled(2.0), PhiFunction::scale(3.0),
                        PhiFunction::compose(&PhiFunction::power(2.0), &PhiFunction::log1p_scaled(1.0))] {
                let y = phi.forward(u);
                prop_assert!(approx_eq(phi.inverse(y), u, EPS_TEST), "{}: {u}", phi.name());
            }
        }

        #[test]
        fn strict_builtins_are_strictly_monotone(u in 0.01f64..10.0, d in 0.001f64..5.0, w in 0.01f64..10.0) {
            for (name, p) in [("plus", None), ("p_sum", Some(3.0)), ("pq_sum", Some(0.5)),
                              ("log_exp_sum", Some(2.0)), ("product", None), ("log1p_product", Some(1.0))] {
                let op = builtin(name, p).unwrap();
                prop_assert!(op.apply(u, w) < op.apply(u + d, w), "{name} at ({u}, {d}, {w})");
            }
        }
    }
}
