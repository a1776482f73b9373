//! Stability analysis for discrete optimization under generalized
//! addition.
//!
//! A problem here is a finite ground set with one cost per element, a
//! collection of trajectories (subsets that cover the ground set and
//! share no common element), and a binary operation `⊕` that folds a
//! trajectory's costs into its objective. The operation generalizes
//! ordinary addition: any continuous, associative, commutative,
//! monotone, unbounded operation on the nonnegative (or positive)
//! reals qualifies, from `u + v` through power means to `max` and
//! products.
//!
//! Around a chosen optimal trajectory the library computes, per
//! element, how far its cost may move before optimality breaks:
//! stability intervals (`C⁻`, `C⁺`), cost tolerances (`u`, `ℓ`, `ℓ̄`),
//! and the tolerance function `T_C`, a per-element invariant that
//! does not depend on which optimal trajectory was chosen and whose
//! sign pattern reads off the union and intersection of all optima.
//! Every closed formula is backed by a definition-level oracle
//! (re-solve the perturbed problem, bisect the flip point) and a
//! randomized verification suite.
//!
//! Module map:
//!
//! * [`algebra`]: the operation catalog, axioms, order-preserving
//!   rescalings (`φ`), conjugation.
//! * [`subtraction`]: upper/lower inverses `⊖↑`, `⊖↓` via closed
//!   forms or bracketed bisection.
//! * [`problem`]: instances, JSON wire format, enumeration solver.
//! * [`graphs`]: path and spanning-tree instance generators.
//! * [`stability`]: endpoints, tolerances, the perturbation oracle.
//! * [`invariant`]: the tolerance function, optimal-set
//!   characterizations, min-value inequalities.
//! * [`random`]: reproducible random instance generators.
//! * [`verify`]: the randomized property suite behind `verify`.

pub mod algebra;
pub mod graphs;
pub mod invariant;
pub mod numeric;
pub mod problem;
pub mod random;
pub mod stability;
pub mod subtraction;
pub mod verify;

pub use algebra::{builtin, builtin_names, AOperation, AlgebraError, OpKind, OperationSpec, PhiFunction};
pub use invariant::{tolerance_function, InvariantError, ToleranceReport};
pub use problem::{OptimalSet, Problem, ProblemError};
pub use stability::{analyze_all, AnalysisReport, StabilityError, StabilityResult};
pub use subtraction::{lower_sub, upper_sub, Method, SubtractionError};
pub use verify::{run_suite, CheckResult};
