//! Reproducible random instances for the verification suite.
//!
//! Every generator draws from a caller-supplied RNG; [`rng_for`]
//! builds the deterministic one behind `verify --seed`. The base
//! recipe: ground-set size uniform in `[4, 10]`, two to eight
//! trajectories sampled as uniform nonempty subsets and then repaired
//! to the trajectory axioms (each uncovered element joins a random
//! trajectory, each universal element is dropped from one trajectory
//! that can spare it), costs uniform in `[0.5, 10]` rounded to three
//! decimals.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebra::AOperation;
use crate::invariant::nonembedded;
use crate::problem::Problem;

/// The deterministic generator used by the verification suite.
pub fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Cost sampling range, rounded to three decimals.
#[derive(Debug, Clone, Copy)]
pub struct CostRange {
    pub lo: f64,
    pub hi: f64,
}

impl Default for CostRange {
    fn default() -> Self {
        CostRange { lo: 0.5, hi: 10.0 }
    }
}

impl CostRange {
    /// Costs at or above the operation's neutral element, as the
    /// minimum-value comparisons require.
    pub fn above_neutral(op: &AOperation) -> Self {
        CostRange { lo: op.neutral().max(1.0), hi: 10.0 }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        round3(rng.gen_range(self.lo..=self.hi))
    }
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

fn element_ids(n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("x{i}")).collect()
}

fn assemble(op: &AOperation, n: usize, masks: &[u64], costs: &[f64]) -> Problem {
    let ids = element_ids(n);
    let cost_map: BTreeMap<String, f64> =
        ids.iter().cloned().zip(costs.iter().copied()).collect();
    let trajectories: Vec<Vec<String>> = masks
        .iter()
        .map(|&m| (0..n).filter(|&x| m >> x & 1 == 1).map(|x| ids[x].clone()).collect())
        .collect();
    Problem::new(op.clone(), ids, &cost_map, &trajectories)
        .expect("generated instances satisfy the trajectory axioms")
}

/// A random valid instance: subsets repaired to cover the ground set
/// and share no common element, then deduplicated.
pub fn random_problem(op: &AOperation, rng: &mut impl Rng, costs: CostRange) -> Problem {
    loop {
        let n = rng.gen_range(4..=10usize);
        let full = (1u64 << n) - 1;
        let mut masks: Vec<u64> =
            (0..rng.gen_range(2..=8usize)).map(|_| rng.gen_range(1..=full)).collect();

        let covered = masks.iter().fold(0, |acc, &m| acc | m);
        for x in 0..n {
            if covered >> x & 1 == 0 {
                let t = rng.gen_range(0..masks.len());
                masks[t] |= 1 << x;
            }
        }

        // every mask holds each universal element, and they cannot all
        // be the same singleton once the cover repair reached n >= 4
        // elements, so a donor with a second element always exists
        let mut common = masks.iter().fold(full, |acc, &m| acc & m);
        while common != 0 {
            let x = common.trailing_zeros();
            let donors: Vec<usize> = (0..masks.len()).filter(|&t| masks[t].count_ones() >= 2).collect();
            masks[donors[rng.gen_range(0..donors.len())]] &= !(1 << x);
            common = masks.iter().fold(full, |acc, &m| acc & m);
        }

        masks.sort_unstable();
        masks.dedup();
        if masks.len() < 2 {
            continue;
        }

        let cost_list: Vec<f64> = (0..n).map(|_| costs.sample(rng)).collect();
        return assemble(op, n, &masks, &cost_list);
    }
}

/// An instance with at least two optimal trajectories, forced by cost
/// duplication: two (sometimes three) disjoint pairs carry identical
/// cost multisets, and every other trajectory contains an element
/// priced far above the tied objective. Costs stay at or above
/// `max(1, neutral)` so that folding past the expensive element can
/// only grow the objective.
pub fn random_tied_problem(op: &AOperation, rng: &mut impl Rng) -> Problem {
    let base = op.neutral().max(1.0);
    let n = rng.gen_range(5..=10usize);
    let a = round3(rng.gen_range(base..=3.0 * base));
    let b = round3(rng.gen_range(base..=3.0 * base));
    let heavy = round3(2.0 * op.apply(a, b) + base);

    let mut costs = vec![0.0; n];
    costs[0] = a;
    costs[1] = b;
    costs[2] = a;
    costs[3] = b;
    costs[4] = heavy;
    for x in 5..n {
        costs[x] = round3(rng.gen_range(base..=3.0 * base));
    }

    let mut masks = vec![0b0011u64, 0b1100u64];
    if n >= 7 && rng.gen_bool(0.4) {
        costs[5] = a;
        costs[6] = b;
        masks.push(0b1100000);
    }
    let paired = masks.iter().fold(0u64, |acc, &m| acc | m);
    masks.push(((1u64 << n) - 1) & !paired);
    for _ in 0..rng.gen_range(0..=3usize) {
        let extra = rng.gen_range(0..1u64 << n) | 1 << 4;
        if !masks.contains(&extra) {
            masks.push(extra);
        }
    }
    assemble(op, n, &masks, &costs)
}

/// Rejection-samples [`random_problem`] until the optimum is unique
/// (and, on request, no trajectory contains another).
pub fn random_unique_problem(
    op: &AOperation,
    rng: &mut impl Rng,
    costs: CostRange,
    require_nonembedded: bool,
) -> Problem {
    for _ in 0..100 {
        let p = random_problem(op, rng, costs);
        if p.solve().is_unique() && (!require_nonembedded || nonembedded(&p)) {
            return p;
        }
    }
    panic!("no unique-optimum instance within 100 draws; change the seed or cost range");
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algebra::builtin;

    #[test]
    fn instances_are_reproducible() {
        let op = builtin("plus", None).unwrap();
        let a = random_problem(&op, &mut rng_for(7), CostRange::default());
        let b = random_problem(&op, &mut rng_for(7), CostRange::default());
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn instances_respect_the_advertised_shape() {
        let op = builtin("p_sum", Some(2.0)).unwrap();
        let mut rng = rng_for(0);
        for _ in 0..50 {
            let p = random_problem(&op, &mut rng, CostRange::default());
            assert!((4..=10).contains(&p.len()));
            assert!((2..=8).contains(&p.trajectory_count()));
            let full = (1u64 << p.len()) - 1;
            assert_eq!(p.trajectories().iter().fold(0, |a, &m| a | m), full);
            assert_eq!(p.trajectories().iter().fold(full, |a, &m| a & m), 0);
            for &c in p.costs() {
                assert!((0.5..=10.0).contains(&c));
                assert_eq!(c, round3(c), "costs carry three decimals");
            }
        }
    }

    #[test]
    fn tied_instances_have_tied_optima() {
        let mut rng = rng_for(3);
        for name in ["plus", "p_sum", "product", "log_exp_sum"] {
            let op = builtin(name, Some(2.0)).unwrap();
            for _ in 0..30 {
                let p = random_tied_problem(&op, &mut rng);
                let opt = p.solve();
                assert!(opt.trajectories.len() >= 2, "{name}: ties are forced");
                let values: Vec<f64> = opt.trajectories.iter().map(|&s| p.trajectory_value(s)).collect();
                assert!(values.windows(2).all(|w| w[0] == w[1]), "{name}: exact ties");
            }
        }
    }

    #[test]
    fn unique_instances_are_unique() {
        let op = builtin("product", None).unwrap();
        let mut rng = rng_for(11);
        for _ in 0..20 {
            let p = random_unique_problem(&op, &mut rng, CostRange::above_neutral(&op), true);
            assert!(p.solve().is_unique());
            assert!(nonembedded(&p));
            assert!(p.costs().iter().all(|&c| c >= 1.0));
        }
    }
}
