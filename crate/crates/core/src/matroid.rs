//! Reduction of contract design to weighted profile selection: one slot per
//! agent, ground elements `(agent, action)` for inducible actions, element
//! weights equal to the minimum IC payment, and set value
//! `f(S) = R(profile of S) - sum of selected weights` with unselected agents
//! mapped to the null action. The maximum over independent sets is always
//! attained at a base, so brute force enumerates bases.

use std::cell::RefCell;
use std::collections::HashMap;

use thiserror::Error;

use crate::model::{
    expected_reward_exact_capped, expected_reward_mc, Contract, EvalError, Instance, RewardMode,
};
use crate::payments::{self, PaymentError};
use crate::rewards::canonical_action_order;

#[derive(Debug, Clone, PartialEq)]
pub struct GroundElement {
    pub action: usize,
    /// Minimum expected payment making the action IC.
    pub weight: f64,
    pub payment_row: Vec<f64>,
}

/// The induced one-slot-per-agent problem. `parts[i]` lists agent `i`'s
/// inducible elements in canonical order (null action first, then ascending
/// cost); non-inducible actions are simply absent.
#[derive(Debug, Clone)]
pub struct PartitionProblem {
    pub parts: Vec<Vec<GroundElement>>,
}

/// An independent set: at most one selected element per part, identified by
/// its index within the part.
pub type IndependentSet = Vec<Option<usize>>;

impl PartitionProblem {
    pub fn n(&self) -> usize {
        self.parts.len()
    }

    /// Number of bases, unless it overflows.
    pub fn base_count(&self) -> Option<usize> {
        self.parts
            .iter()
            .try_fold(1usize, |acc, p| acc.checked_mul(p.len()))
    }

    /// Action profile of an independent set, padding unselected agents with
    /// the null action (canonical position 0).
    pub fn profile(&self, set: &IndependentSet) -> Vec<usize> {
        set.iter()
            .enumerate()
            .map(|(i, sel)| match sel {
                Some(k) => self.parts[i][*k].action,
                None => self.parts[i][0].action,
            })
            .collect()
    }

    pub fn weight_sum(&self, set: &IndependentSet) -> f64 {
        set.iter()
            .enumerate()
            .filter_map(|(i, sel)| sel.map(|k| self.parts[i][k].weight))
            .sum()
    }
}

#[derive(Debug, Error)]
pub enum MatroidError {
    #[error(transparent)]
    Payment(#[from] PaymentError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("base enumeration needs {needed} bases, above the cap {cap}")]
    BaseCap { needed: usize, cap: usize },
    #[error("independent set shape does not match the problem")]
    BadSet,
}

/// Memoizing expected-reward evaluator over action profiles. Exact
/// enumeration below the cap, seeded Monte-Carlo above it, so one solve sees
/// a deterministic set function.
pub struct RewardEvaluator<'a> {
    inst: &'a Instance,
    mode: RewardMode,
    mc_samples: usize,
    mc_seed: u64,
    cache: RefCell<HashMap<Vec<usize>, f64>>,
}

impl<'a> RewardEvaluator<'a> {
    pub fn new(inst: &'a Instance, mode: RewardMode) -> Self {
        RewardEvaluator {
            inst,
            mode,
            mc_samples: 20_000,
            mc_seed: 0,
            cache: RefCell::new(HashMap::new()),
        }
    }

    pub fn eval(&self, profile: &[usize]) -> f64 {
        if let Some(&v) = self.cache.borrow().get(profile) {
            return v;
        }
        let v = match self.mode {
            RewardMode::Exact { cap } => {
                match expected_reward_exact_capped(self.inst, profile, cap) {
                    Ok(v) => v,
                    Err(EvalError::EnumerationCap { .. }) => {
                        expected_reward_mc(self.inst, profile, self.mc_samples, self.mc_seed)
                            .expect("profile validated")
                            .mean
                    }
                    Err(e) => panic!("reward evaluation failed: {e}"),
                }
            }
            RewardMode::Mc { samples, seed } => {
                expected_reward_mc(self.inst, profile, samples, seed)
                    .expect("profile validated")
                    .mean
            }
        };
        self.cache.borrow_mut().insert(profile.to_vec(), v);
        v
    }
}

/// Build the partition problem: minimum payments per (agent, action),
/// non-inducible elements dropped.
pub fn build_partition_problem(inst: &Instance) -> Result<PartitionProblem, MatroidError> {
    build_partition_problem_with(inst, |i, a| {
        payments::min_payment(inst, i, a).map(|ind| {
            ind.solution()
                .map(|s| (s.min_expected_payment, s.payment_row.clone()))
        })
    })
}

/// Variant taking a lookup for the per-element weights, used to rebuild a
/// problem from a memoized minimum-payment table.
pub fn build_partition_problem_with(
    inst: &Instance,
    mut weight_of: impl FnMut(usize, usize) -> Result<Option<(f64, Vec<f64>)>, PaymentError>,
) -> Result<PartitionProblem, MatroidError> {
    let mut parts = Vec::with_capacity(inst.n());
    for i in 0..inst.n() {
        let mut part = Vec::new();
        for a in canonical_action_order(inst, i) {
            if let Some((weight, payment_row)) = weight_of(i, a)? {
                part.push(GroundElement {
                    action: a,
                    weight,
                    payment_row,
                });
            }
        }
        debug_assert!(!part.is_empty(), "null action is always inducible");
        parts.push(part);
    }
    Ok(PartitionProblem { parts })
}

/// `f(S)`: expected reward of the padded profile minus the selected weights.
pub fn f_value(
    pp: &PartitionProblem,
    eval: &RewardEvaluator<'_>,
    set: &IndependentSet,
) -> Result<f64, MatroidError> {
    if set.len() != pp.n()
        || set
            .iter()
            .enumerate()
            .any(|(i, sel)| sel.is_some_and(|k| k >= pp.parts[i].len()))
    {
        return Err(MatroidError::BadSet);
    }
    let profile = pp.profile(set);
    Ok(eval.eval(&profile) - pp.weight_sum(set))
}

#[derive(Debug, Clone)]
pub struct BruteForceResult {
    pub set: IndependentSet,
    pub profile: Vec<usize>,
    pub value: f64,
    pub contract: Contract,
}

pub const DEFAULT_BASE_CAP: usize = 1_000_000;

/// Exhaustive maximum of `f` over bases, ties broken toward the
/// lexicographically smallest action profile.
pub fn brute_force_optimal(
    inst: &Instance,
    pp: &PartitionProblem,
    eval: &RewardEvaluator<'_>,
    cap: usize,
) -> Result<BruteForceResult, MatroidError> {
    let needed = pp.base_count().unwrap_or(usize::MAX);
    if needed > cap {
        return Err(MatroidError::BaseCap { needed, cap });
    }
    let mut best: Option<(f64, Vec<usize>, IndependentSet)> = None;
    let radices: Vec<usize> = pp.parts.iter().map(|p| p.len()).collect();
    crate::model::for_each_index_tuple(&radices, |idx| {
        let set: IndependentSet = idx.iter().map(|&k| Some(k)).collect();
        let profile = pp.profile(&set);
        let value = eval.eval(&profile) - pp.weight_sum(&set);
        let better = match &best {
            None => true,
            Some((bv, bp, _)) => {
                value > bv + 1e-12 || ((value - bv).abs() <= 1e-12 && profile < *bp)
            }
        };
        if better {
            best = Some((value, profile, set));
        }
        true
    });
    let (value, profile, set) = best.expect("at least one base");
    let contract = contract_from_set(inst, pp, &set)?;
    Ok(BruteForceResult {
        set,
        profile,
        value,
        contract,
    })
}

/// Rebuild the contract of an independent set: selected elements contribute
/// their minimum-payment rows, unselected agents get zero rows and the null
/// recommendation.
pub fn contract_from_set(
    inst: &Instance,
    pp: &PartitionProblem,
    set: &IndependentSet,
) -> Result<Contract, MatroidError> {
    if set.len() != pp.n() {
        return Err(MatroidError::BadSet);
    }
    let mut payments = vec![vec![0.0; inst.m()]; inst.n()];
    let mut recommendations = Vec::with_capacity(inst.n());
    for (i, sel) in set.iter().enumerate() {
        match sel {
            Some(k) => {
                let el = pp.parts[i].get(*k).ok_or(MatroidError::BadSet)?;
                payments[i] = el.payment_row.clone();
                recommendations.push(el.action);
            }
            None => recommendations.push(inst.agents[i].null_action),
        }
    }
    Ok(Contract {
        payments,
        recommendations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{principal_utility, RewardMode};

    fn exact_eval(inst: &Instance) -> RewardEvaluator<'_> {
        RewardEvaluator::new(inst, RewardMode::default())
    }

    #[test]
    fn t1_partition_problem_shape() {
        let inst = fixtures::t1();
        let pp = build_partition_problem(&inst).unwrap();
        assert_eq!(pp.parts.len(), 1);
        assert_eq!(pp.parts[0].len(), 2);
        assert_eq!(pp.parts[0][0].action, 0);
        assert!(pp.parts[0][0].weight.abs() < 1e-9);
        assert!((pp.parts[0][1].weight - 0.5).abs() < 1e-9);
    }

    #[test]
    fn two_agents_three_actions_enumerate_nine_bases() {
        let mut inst = fixtures::two_copies_of_t1_halved();
        for ag in &mut inst.agents {
            ag.costs = vec![0.0, 0.2, 0.5];
            ag.dists = vec![vec![1.0, 0.0], vec![0.5, 0.5], vec![0.0, 1.0]];
        }
        let pp = build_partition_problem(&inst).unwrap();
        assert_eq!(pp.base_count(), Some(9));
    }

    #[test]
    fn dominated_duplicate_is_dropped() {
        let inst = fixtures::t1_with_dominated_duplicate();
        let pp = build_partition_problem(&inst).unwrap();
        assert_eq!(pp.parts[0].len(), 2);
        assert!(pp.parts[0].iter().all(|e| e.action != 2));
    }

    #[test]
    fn t1_brute_force_hand_value() {
        let inst = fixtures::t1();
        let pp = build_partition_problem(&inst).unwrap();
        let eval = exact_eval(&inst);
        let res = brute_force_optimal(&inst, &pp, &eval, DEFAULT_BASE_CAP).unwrap();
        assert!((res.value - 0.5).abs() < 1e-9);
        assert_eq!(res.profile, vec![1]);
        let u = principal_utility(&inst, &res.contract, RewardMode::default()).unwrap();
        assert!((u - res.value).abs() < 1e-7);
    }

    #[test]
    fn all_weights_exceed_reward_gain_gives_null_base() {
        // Reward gain of the costly action is 0.5 but its minimum payment is
        // 0.6: the optimum stays all-null.
        let mut inst = fixtures::t1();
        inst.reward = crate::rewards::RewardSpec::new(crate::rewards::RewardFamily::Linear {
            weights: vec![0.5],
        });
        inst.agents[0].costs[1] = 0.6;
        let pp = build_partition_problem(&inst).unwrap();
        let eval = exact_eval(&inst);
        let res = brute_force_optimal(&inst, &pp, &eval, DEFAULT_BASE_CAP).unwrap();
        assert_eq!(res.profile, vec![0]);
        assert_eq!(res.value, 0.0);
    }

    #[test]
    fn two_scaled_copies_incentivize_both() {
        let inst = fixtures::two_copies_of_t1_halved();
        let pp = build_partition_problem(&inst).unwrap();
        let eval = exact_eval(&inst);
        let res = brute_force_optimal(&inst, &pp, &eval, DEFAULT_BASE_CAP).unwrap();
        assert_eq!(res.profile, vec![1, 1]);
        assert!((res.value - 0.5).abs() < 1e-9);
    }

    #[test]
    fn empty_set_yields_zero_contract() {
        let inst = fixtures::t1();
        let pp = build_partition_problem(&inst).unwrap();
        let c = contract_from_set(&inst, &pp, &vec![None]).unwrap();
        assert_eq!(c, Contract::zero(&inst));
    }

    #[test]
    fn padding_with_null_preserves_value() {
        let inst = fixtures::two_copies_of_t1_halved();
        let pp = build_partition_problem(&inst).unwrap();
        let eval = exact_eval(&inst);
        let partial: IndependentSet = vec![Some(1), None];
        let padded: IndependentSet = vec![Some(1), Some(0)];
        let v1 = f_value(&pp, &eval, &partial).unwrap();
        let v2 = f_value(&pp, &eval, &padded).unwrap();
        assert!((v1 - v2).abs() < 1e-12);
    }

    #[test]
    fn f_matches_contract_utility_on_all_independent_sets() {
        let inst = fixtures::two_agent_budget();
        let pp = build_partition_problem(&inst).unwrap();
        let eval = exact_eval(&inst);
        let mut sets = vec![vec![None, None]];
        for k0 in 0..pp.parts[0].len() {
            sets.push(vec![Some(k0), None]);
            for k1 in 0..pp.parts[1].len() {
                sets.push(vec![Some(k0), Some(k1)]);
            }
        }
        for k1 in 0..pp.parts[1].len() {
            sets.push(vec![None, Some(k1)]);
        }
        for set in sets {
            let f = f_value(&pp, &eval, &set).unwrap();
            let c = contract_from_set(&inst, &pp, &set).unwrap();
            let u = principal_utility(&inst, &c, RewardMode::default()).unwrap();
            assert!((f - u).abs() < 1e-7, "set {set:?}: f {f} vs utility {u}");
        }
    }

    #[test]
    fn removing_non_inducible_action_keeps_value() {
        let with_dup = fixtures::t1_with_dominated_duplicate();
        let without = fixtures::t1();
        let (v1, v2) = {
            let pp1 = build_partition_problem(&with_dup).unwrap();
            let e1 = exact_eval(&with_dup);
            let pp2 = build_partition_problem(&without).unwrap();
            let e2 = exact_eval(&without);
            (
                brute_force_optimal(&with_dup, &pp1, &e1, DEFAULT_BASE_CAP)
                    .unwrap()
                    .value,
                brute_force_optimal(&without, &pp2, &e2, DEFAULT_BASE_CAP)
                    .unwrap()
                    .value,
            )
        };
        assert!((v1 - v2).abs() < 1e-9);
    }
}
