//! Problem instances: a finite ground set, a cost per element, a
//! trajectory collection and a generalized addition that aggregates
//! element costs into the objective.
//!
//! A *trajectory* is a nonempty subset of the ground set; the
//! collection must cover the ground set and have empty intersection
//! (which forces at least two trajectories). The objective of a
//! trajectory is the fold of its element costs, and an instance is
//! solved by enumerating the collection; collections are explicit
//! here, not implicit solution spaces.
//!
//! Ground sets hold at most 64 elements; subsets are dense bitmasks.
//! Element ids are opaque strings mapped to dense indices on
//! construction. The JSON wire format is
//!
//! ```json
//! {
//!   "operation": {"kind": "p_sum", "p": 2.0},
//!   "ground_set": ["x1", "x2"],
//!   "costs": {"x1": 1.0, "x2": 2.5},
//!   "trajectories": [["x1"], ["x2"]]
//! }
//! ```

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::algebra::{AOperation, OpKind, OperationSpec, PhiFunction};
use crate::numeric::{approx_eq, Cost, EPS_OPT};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("unknown element `{0}`")]
    UnknownElement(String),
    #[error("duplicate element `{0}` in ground set")]
    DuplicateElement(String),
    #[error("ground set holds {0} elements; dense bitmask subsets support at most 64")]
    TooManyElements(usize),
    #[error("no cost given for element `{0}`")]
    MissingCost(String),
    #[error("cost map names `{0}` which is not in the ground set")]
    StrayCost(String),
    #[error("invalid problem:\n{}", .0.join("\n"))]
    Invalid(Vec<String>),
    #[error("cannot serialize a problem whose operation has no wire spec (conjugated operation)")]
    UnspecifiedOperation,
    #[error("malformed problem JSON: {0}")]
    Parse(String),
    #[error(transparent)]
    Algebra(#[from] crate::algebra::AlgebraError),
}

/// All optimal trajectory indices (ties within [`EPS_OPT`]) plus the
/// optimal objective value. Indices are ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimalSet {
    pub trajectories: Vec<usize>,
    pub value: Cost,
}

impl OptimalSet {
    pub fn contains(&self, s: usize) -> bool {
        self.trajectories.binary_search(&s).is_ok()
    }

    pub fn is_unique(&self) -> bool {
        self.trajectories.len() == 1
    }
}

/// Restricted optima around one element `x`: the best objective over
/// trajectories avoiding `x` (`f_minus`), the best over trajectories
/// through `x` (`f_plus`), and among the latter the one whose
/// remainder after deleting `x` is cheapest (`s_x`, with that
/// remainder's measure in `f_sx_minus_x`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RestrictedOptima {
    pub f_minus: Cost,
    pub f_plus: Cost,
    pub s_x: usize,
    pub f_sx_minus_x: Cost,
}

/// Outcome of axiom validation; empty means valid.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct ProblemFile {
    operation: OperationSpec,
    ground_set: Vec<String>,
    costs: BTreeMap<String, f64>,
    trajectories: Vec<Vec<String>>,
}

#[derive(Clone)]
pub struct Problem {
    operation: AOperation,
    ids: Vec<String>,
    costs: Vec<Cost>,
    trajectories: Vec<u64>,
    index: HashMap<String, usize>,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("operation", &self.operation)
            .field("elements", &self.ids.len())
            .field("trajectories", &self.trajectories.len())
            .finish()
    }
}

impl Problem {
    /// Builds and validates an instance. Trajectories are given as id
    /// lists; costs as an id-keyed map covering the ground set exactly.
    pub fn new(
        operation: AOperation,
        ground_set: Vec<String>,
        costs: &BTreeMap<String, f64>,
        trajectories: &[Vec<String>],
    ) -> Result<Self, ProblemError> {
        let p = Self::new_unchecked(operation, ground_set, costs, trajectories)?;
        let report = p.validate();
        if report.is_valid() {
            Ok(p)
        } else {
            Err(ProblemError::Invalid(report.violations))
        }
    }

    /// Builds an instance without axiom validation (structure is still
    /// enforced: known ids, complete cost map, at most 64 elements).
    /// Lets callers inspect invalid collections via [`Problem::validate`].
    pub fn new_unchecked(
        operation: AOperation,
        ground_set: Vec<String>,
        costs: &BTreeMap<String, f64>,
        trajectories: &[Vec<String>],
    ) -> Result<Self, ProblemError> {
        if ground_set.len() > 64 {
            return Err(ProblemError::TooManyElements(ground_set.len()));
        }
        let mut index = HashMap::with_capacity(ground_set.len());
        for (i, id) in ground_set.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(ProblemError::DuplicateElement(id.clone()));
            }
        }
        for id in costs.keys() {
            if !index.contains_key(id) {
                return Err(ProblemError::StrayCost(id.clone()));
            }
        }
        let cost_vec = ground_set
            .iter()
            .map(|id| costs.get(id).copied().ok_or_else(|| ProblemError::MissingCost(id.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        let masks = trajectories
            .iter()
            .map(|t| {
                let mut m = 0u64;
                for id in t {
                    let &i = index.get(id).ok_or_else(|| ProblemError::UnknownElement(id.clone()))?;
                    m |= 1 << i;
                }
                Ok(m)
            })
            .collect::<Result<Vec<_>, ProblemError>>()?;
        Ok(Problem { operation, ids: ground_set, costs: cost_vec, trajectories: masks, index })
    }

    /// Checks the collection axioms and cost-domain constraints,
    /// reporting every violation rather than stopping at the first.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let n = self.ids.len();
        if n < 2 {
            violations.push(format!("ground set needs at least 2 elements, found {n}"));
        }
        if self.trajectories.len() < 2 {
            violations.push(format!(
                "trajectory axiom violated: a covering collection with empty intersection needs at least 2 trajectories, found {}",
                self.trajectories.len()
            ));
        }
        let full: u64 = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        let mut union = 0u64;
        let mut inter = full;
        for (k, &m) in self.trajectories.iter().enumerate() {
            if m == 0 {
                violations.push(format!("trajectory {k} is empty"));
            }
            union |= m;
            inter &= m;
        }
        if !self.trajectories.is_empty() {
            if union != full {
                let missing = self.mask_ids(full & !union).join(", ");
                violations.push(format!("trajectory axiom violated: union of trajectories misses {{{missing}}}"));
            }
            if inter != 0 {
                let common = self.mask_ids(inter).join(", ");
                violations.push(format!(
                    "trajectory axiom violated: intersection of all trajectories is nonempty ({{{common}}})"
                ));
            }
        }
        for (i, &c) in self.costs.iter().enumerate() {
            if !self.operation.admits_cost(c) {
                let bound = match self.operation.kind() {
                    OpKind::Addition => "nonnegative",
                    OpKind::Multiplication => "positive",
                };
                violations.push(format!(
                    "cost axiom violated: element `{}` has cost {c}, but the operation needs finite {bound} costs",
                    self.ids[i]
                ));
            }
        }
        ValidationReport { violations }
    }

    pub fn operation(&self) -> &AOperation {
        &self.operation
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn costs(&self) -> &[Cost] {
        &self.costs
    }

    pub fn cost(&self, x: usize) -> Cost {
        self.costs[x]
    }

    /// Trajectories as bitmasks over dense element indices.
    pub fn trajectories(&self) -> &[u64] {
        &self.trajectories
    }

    pub fn trajectory_count(&self) -> usize {
        self.trajectories.len()
    }

    pub fn element_index(&self, id: &str) -> Result<usize, ProblemError> {
        self.index.get(id).copied().ok_or_else(|| ProblemError::UnknownElement(id.to_string()))
    }

    pub fn element_id(&self, x: usize) -> &str {
        &self.ids[x]
    }

    /// Ids of the elements in a bitmask, ascending by index.
    pub fn mask_ids(&self, mask: u64) -> Vec<String> {
        (0..self.ids.len()).filter(|i| mask >> i & 1 == 1).map(|i| self.ids[i].clone()).collect()
    }

    /// Measure of a subset given by bitmask: the fold of its element
    /// costs in ascending index order; empty folds to the neutral.
    pub fn measure_mask(&self, mask: u64) -> Cost {
        self.operation.fold((0..self.ids.len()).filter(|i| mask >> i & 1 == 1).map(|i| self.costs[i]))
    }

    /// Measure of a subset given by element ids.
    pub fn measure(&self, members: &[&str]) -> Result<Cost, ProblemError> {
        let mut mask = 0u64;
        for id in members {
            mask |= 1 << self.element_index(id)?;
        }
        Ok(self.measure_mask(mask))
    }

    pub fn trajectory_value(&self, s: usize) -> Cost {
        self.measure_mask(self.trajectories[s])
    }

    /// Enumerates the collection and returns every optimal trajectory.
    pub fn solve(&self) -> OptimalSet {
        let values: Vec<Cost> = self.trajectories.iter().map(|&m| self.measure_mask(m)).collect();
        let best = values.iter().copied().fold(f64::INFINITY, f64::min);
        let trajectories =
            (0..values.len()).filter(|&i| approx_eq(values[i], best, EPS_OPT)).collect();
        OptimalSet { trajectories, value: best }
    }

    /// Optima restricted to the collections avoiding / containing `x`.
    /// Both subcollections are nonempty for any valid instance.
    pub fn restricted_optima(&self, x: usize) -> RestrictedOptima {
        let bit = 1u64 << x;
        let mut f_minus = f64::INFINITY;
        let mut f_plus = f64::INFINITY;
        let mut s_x = usize::MAX;
        let mut f_sx = f64::INFINITY;
        for (k, &m) in self.trajectories.iter().enumerate() {
            let v = self.measure_mask(m);
            if m & bit == 0 {
                f_minus = f_minus.min(v);
            } else {
                f_plus = f_plus.min(v);
                let rest = self.measure_mask(m & !bit);
                if rest < f_sx {
                    f_sx = rest;
                    s_x = k;
                }
            }
        }
        debug_assert!(s_x != usize::MAX && f_minus.is_finite(), "collection axioms guarantee both sides");
        // the remainder-cheapest trajectory through x is itself optimal
        // among trajectories through x
        debug_assert!(
            approx_eq(self.trajectory_value(s_x), f_plus, crate::numeric::EPS_TEST),
            "remainder-cheapest trajectory must attain f_plus"
        );
        RestrictedOptima { f_minus, f_plus, s_x, f_sx_minus_x: f_sx }
    }

    /// The same instance with one element's cost replaced.
    pub fn with_cost(&self, x: usize, gamma: Cost) -> Problem {
        let mut q = self.clone();
        q.costs[x] = gamma;
        q
    }

    /// The equivalent instance under an order-preserving rescaling
    /// `φ`: the operation is conjugated and every cost maps through
    /// `φ⁻¹`. Optimal sets coincide with the original's.
    pub fn equivalent(&self, phi: &PhiFunction) -> Problem {
        let mut q = self.clone();
        q.operation = self.operation.generate(phi);
        q.costs = self.costs.iter().map(|&c| phi.inverse(c)).collect();
        q
    }

    pub fn from_json(text: &str) -> Result<Self, ProblemError> {
        let file: ProblemFile = serde_json::from_str(text).map_err(|e| ProblemError::Parse(e.to_string()))?;
        let op = file.operation.build()?;
        Problem::new(op, file.ground_set, &file.costs, &file.trajectories)
    }

    pub fn to_json(&self) -> Result<String, ProblemError> {
        let spec = self.operation.spec().ok_or(ProblemError::UnspecifiedOperation)?.clone();
        let file = ProblemFile {
            operation: spec,
            ground_set: self.ids.clone(),
            costs: self.ids.iter().cloned().zip(self.costs.iter().copied()).collect(),
            trajectories: self.trajectories.iter().map(|&m| self.mask_ids(m)).collect(),
        };
        serde_json::to_string_pretty(&file).map_err(|e| ProblemError::Parse(e.to_string()))
    }
}

/// Two fixed instances small enough to verify by hand; used across the
/// test-suite and handy for CLI experiments.
pub mod fixtures {
    use super::*;
    use crate::algebra::builtin;

    /// Four elements, two disjoint trajectories, ordinary addition:
    /// `X = {x1..x4}`, `C = (1, 1, 1, 3)`, `S = {{x1,x2}, {x3,x4}}`.
    /// Unique optimum `{x1,x2}` with value 2.
    pub fn two_route() -> Problem {
        let costs: BTreeMap<String, f64> =
            [("x1", 1.0), ("x2", 1.0), ("x3", 1.0), ("x4", 3.0)].iter().map(|&(k, v)| (k.into(), v)).collect();
        Problem::new(
            builtin("plus", None).unwrap(),
            vec!["x1".into(), "x2".into(), "x3".into(), "x4".into()],
            &costs,
            &[vec!["x1".into(), "x2".into()], vec!["x3".into(), "x4".into()]],
        )
        .unwrap()
    }

    /// Six elements, three overlapping trajectories, ordinary
    /// addition: `C = (2, 2, 2, 1, 3, 5)`,
    /// `S = {{x1,x2,x3}, {x2,x4,x5}, {x1,x4,x6}}`. The first two
    /// trajectories tie at the optimal value 6.
    pub fn tied_pair() -> Problem {
        let costs: BTreeMap<String, f64> = [("x1", 2.0), ("x2", 2.0), ("x3", 2.0), ("x4", 1.0), ("x5", 3.0), ("x6", 5.0)]
            .iter()
            .map(|&(k, v)| (k.into(), v))
            .collect();
        Problem::new(
            builtin("plus", None).unwrap(),
            (1..=6).map(|i| format!("x{i}")).collect(),
            &costs,
            &[
                vec!["x1".into(), "x2".into(), "x3".into()],
                vec!["x2".into(), "x4".into(), "x5".into()],
                vec!["x1".into(), "x4".into(), "x6".into()],
            ],
        )
        .unwrap()
    }
}
