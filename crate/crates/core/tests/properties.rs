//! Property tests for solver invariants that are not already exercised by
//! the acceptance criteria.

#![allow(clippy::needless_range_loop)]

mod common;

use proptest::prelude::*;

use pma_core::gen::{gen_random, FamilyChoice, GenParams};
use pma_core::lp::{self, solve_lp, LpOutcome, Relation, Sense};
use pma_core::matroid::{
    build_partition_problem, contract_from_set, f_value, IndependentSet, RewardEvaluator,
};
use pma_core::model::{principal_utility, RewardMode};
use pma_core::payments::{min_payment, Inducibility};
use pma_core::rewards::{self, FosdVerdict};
use pma_core::rng::Rng;
use pma_core::submod::{solve_dr_with, DrOptions, ExtendOptions, ExtendedProblem};
use pma_core::supermod::{check_submodular_sampled, ThresholdEncoding, WeightedProblem};

fn fosd_params(seed: u64, m: usize) -> GenParams {
    GenParams {
        n: 1 + (seed % 2) as usize,
        ell: 2 + (seed % 3) as usize,
        m,
        q: 1,
        family: FamilyChoice::ExpSum,
        fosd: true,
        seed,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Transport witnesses reconstruct both distributions: row sums equal the
    /// cheaper action's distribution, column sums the costlier one's, and
    /// every unit of flow moves weakly downward in outcome space.
    #[test]
    fn transport_flow_reconstructs_distributions(seed in 0u64..5000, m in 2usize..6) {
        let inst = gen_random(&fosd_params(seed, m));
        match rewards::check_fosd(&inst).unwrap() {
            FosdVerdict::Pass { witnesses } => {
                for w in witnesses {
                    let spec = &inst.agents[w.agent];
                    let mut row_sum = vec![0.0; inst.m()];
                    let mut col_sum = vec![0.0; inst.m()];
                    for &(from, to, mass) in &w.flow {
                        prop_assert!(mass >= -1e-12);
                        let down = inst.outcome_space.outcomes[from]
                            .iter()
                            .zip(&inst.outcome_space.outcomes[to])
                            .all(|(f, t)| f <= t);
                        prop_assert!(down, "flow moves upward from {from} to {to}");
                        row_sum[from] += mass;
                        col_sum[to] += mass;
                    }
                    for wdx in 0..inst.m() {
                        prop_assert!((row_sum[wdx] - spec.dists[w.pair.0][wdx]).abs() < 1e-8);
                        prop_assert!((col_sum[wdx] - spec.dists[w.pair.1][wdx]).abs() < 1e-8);
                    }
                }
            }
            FosdVerdict::Fail { agent, pair, .. } => {
                prop_assert!(false, "generator contract broken: agent {agent} pair {pair:?}");
            }
        }
    }

    /// Simplex solutions satisfy primal feasibility, dual feasibility in the
    /// Lagrangian convention, and complementary slackness.
    #[test]
    fn simplex_duality_conditions(seed in 0u64..5000) {
        let mut rng = Rng::new(seed).split(0x70726f70);
        let lp = common::random_box_lp(&mut rng);
        if let LpOutcome::Optimal { value, point, duals } = solve_lp(&lp).unwrap() {
            prop_assert!(lp.feasibility_residual(&point) <= 1e-7);
            let scale = 1.0 + value.abs();
            let sign = match lp.sense { Sense::Min => 1.0, Sense::Max => -1.0 };
            for (row, &y) in lp.rows.iter().zip(&duals) {
                // Sign convention per relation (flipped for maximization).
                match row.rel {
                    Relation::Ge => prop_assert!(sign * y >= -1e-6 * scale),
                    Relation::Le => prop_assert!(sign * y <= 1e-6 * scale),
                    Relation::Eq => {}
                }
                let slack: f64 = row.coeffs.iter().zip(&point).map(|(a, x)| a * x).sum::<f64>() - row.rhs;
                prop_assert!(
                    (y * slack).abs() <= 1e-6 * scale,
                    "complementary slackness gap {} on row with slack {slack}", y * slack
                );
            }
        }
    }

    /// Raising every non-null cost of an agent weakly raises all of its
    /// finite minimum payments; for two-action agents the increase is exact.
    #[test]
    fn min_payment_monotone_in_costs(seed in 0u64..5000, delta in 0.01f64..0.3) {
        let mut inst = gen_random(&GenParams {
            n: 1,
            ell: 2 + (seed % 2) as usize,
            m: 2 + (seed % 3) as usize,
            q: 1,
            family: FamilyChoice::ExpSum,
            fosd: true,
            seed,
        });
        let before: Vec<Option<f64>> = (0..inst.ell())
            .map(|a| min_payment(&inst, 0, a).unwrap().solution().map(|s| s.min_expected_payment))
            .collect();
        let null = inst.agents[0].null_action;
        for a in 0..inst.ell() {
            if a != null && inst.agents[0].costs[a] + delta <= 1.0 {
                inst.agents[0].costs[a] += delta;
            } else if a != null {
                // Keep costs within range; skip the shift for this action.
            }
        }
        let shifted_all = inst.agents[0]
            .costs
            .iter()
            .enumerate()
            .all(|(a, _)| a == null || inst.agents[0].costs[a] <= 1.0);
        prop_assume!(shifted_all);
        for a in 0..inst.ell() {
            if a == null { continue; }
            if let (Some(b), Inducibility::Inducible(after)) =
                (before[a], min_payment(&inst, 0, a).unwrap())
            {
                prop_assert!(
                    after.min_expected_payment >= b - 1e-7,
                    "payment decreased: {b} -> {}", after.min_expected_payment
                );
                if inst.ell() == 2 {
                    prop_assert!(
                        (after.min_expected_payment - b - delta).abs() <= 1e-7,
                        "two-action shift not exact: {b} -> {}", after.min_expected_payment
                    );
                }
            }
        }
    }

    /// The profile-selection objective of any independent set equals the
    /// principal's utility of the reconstructed contract.
    #[test]
    fn f_matches_contract_utility(seed in 0u64..5000) {
        let inst = gen_random(&GenParams {
            n: 1 + (seed % 3) as usize,
            ell: 2 + (seed % 2) as usize,
            m: 2 + (seed % 2) as usize,
            q: 1,
            family: FamilyChoice::ExpSum,
            fosd: true,
            seed,
        });
        let pp = build_partition_problem(&inst).unwrap();
        let eval = RewardEvaluator::new(&inst, RewardMode::default());
        let mut rng = Rng::new(seed).split(0x73657473);
        for _ in 0..5 {
            let set: IndependentSet = pp
                .parts
                .iter()
                .map(|p| {
                    if rng.next_f64() < 0.3 {
                        None
                    } else {
                        Some(rng.next_index(p.len()))
                    }
                })
                .collect();
            let f = f_value(&pp, &eval, &set).unwrap();
            let c = contract_from_set(&inst, &pp, &set).unwrap();
            let u = principal_utility(&inst, &c, RewardMode::default()).unwrap();
            prop_assert!((f - u).abs() <= 1e-7, "f {f} vs utility {u}");
        }
    }

    /// The penalized threshold objective used by the exact solver passes a
    /// sampled submodularity check on every constructed encoding.
    #[test]
    fn penalized_encoding_is_submodular(seed in 0u64..5000) {
        let inst = gen_random(&fosd_params(seed, 3));
        let pp = build_partition_problem(&inst).unwrap();
        let eval = RewardEvaluator::new(&inst, RewardMode::default());
        let wp = WeightedProblem::from_partition(&pp, &eval);
        let counts = wp.level_counts();
        let penalty = 4.0 * (1.0 + wp.n() as f64 + wp.max_weight_sum());
        let enc = ThresholdEncoding::new(counts, penalty);
        let objective = |mask: &[bool]| -> f64 {
            -wp.h(&enc.levels(mask)) + enc.penalty * enc.violations(mask) as f64
        };
        let witness = check_submodular_sampled(objective, enc.ground_size(), 1000, seed);
        prop_assert!(witness.is_none(), "submodularity violated at {witness:?}");
    }
}

/// Independent categorical rounding per part keeps the expected monotone
/// value at least the multilinear value (within sampling error).
#[test]
fn rounding_preserves_multilinear_value() {
    for seed in [2u64, 7, 19] {
        let inst = gen_random(&GenParams {
            n: 2,
            ell: 3,
            m: 2,
            q: 1,
            family: FamilyChoice::BudgetAdditive,
            fosd: false,
            seed,
        });
        let res = solve_dr_with(&inst, 0.05, seed, &DrOptions::default()).unwrap();
        let pp = build_partition_problem(&inst).unwrap();
        let parts: Vec<Vec<(usize, f64)>> = pp
            .parts
            .iter()
            .map(|p| p.iter().map(|e| (e.action, e.weight)).collect())
            .collect();
        let kept: Vec<Vec<usize>> = parts
            .iter()
            .map(|p| (0..p.len()).filter(|&k| k == 0 || p[k].1 <= 1.0).collect())
            .collect();
        let pruned: Vec<Vec<(usize, f64)>> = parts
            .iter()
            .zip(&kept)
            .map(|(p, ks)| ks.iter().map(|&k| p[k]).collect())
            .collect();
        let ep = ExtendedProblem::new(&inst, pruned, 1.0, &ExtendOptions::default()).unwrap();
        let x = res.fractional;
        let (fx, _) = ep.multilinear_exact(&x).unwrap();
        // 10^4 independent rounding draws.
        let mut rng = Rng::new(seed).split(0x726e6473);
        let draws = 10_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let g = ep.ground_size();
        for _ in 0..draws {
            let mut mask = vec![false; g];
            for i in 0..ep.parts.len() {
                let elems: Vec<usize> = (0..g).filter(|&e| ep.ground[e].0 == i).collect();
                let u = rng.next_f64();
                let mut acc = 0.0;
                for &e in &elems {
                    acc += x[e];
                    if u < acc {
                        mask[e] = true;
                        break;
                    }
                }
            }
            let v = ep.f_mono(&mask);
            sum += v;
            sumsq += v * v;
        }
        let mean = sum / draws as f64;
        let var = ((sumsq - draws as f64 * mean * mean) / (draws as f64 - 1.0)).max(0.0);
        let se = (var / draws as f64).sqrt();
        assert!(
            mean >= fx - 3.0 * se - 1e-9,
            "seed {seed}: rounded mean {mean} below multilinear {fx} - 3se ({se})"
        );
    }
}

/// An accepted ellipsoid point is never rejected by its own oracle, and on
/// feasible systems every generated cut is valid for the feasible set.
#[test]
fn ellipsoid_points_and_cuts_are_consistent() {
    let mut rng = Rng::new(0xe11);
    let mut seen_point = 0;
    let mut seen_empty = 0;
    for _ in 0..60 {
        let (rows, dim, designed) = common::designed_feasibility_system(&mut rng);
        let radius = 6.0 * (dim as f64).sqrt() + 2.0;
        let budget = lp::ellipsoid_default_budget(dim, radius, 1e-4);
        let mut cuts_seen: Vec<lp::Cut> = Vec::new();
        {
            let rows_for_oracle = rows.clone();
            let mut inner = lp::oracle_from_rows(rows_for_oracle);
            let mut recording = |x: &[f64]| -> lp::Separation {
                match inner(x) {
                    lp::Separation::Feasible => lp::Separation::Feasible,
                    lp::Separation::Violated(c) => {
                        cuts_seen.push(lp::Cut {
                            normal: c.normal.clone(),
                            rhs: c.rhs,
                        });
                        lp::Separation::Violated(c)
                    }
                }
            };
            match lp::ellipsoid_feasibility(dim, radius, &mut recording, budget, 1e-4).unwrap() {
                lp::EllipsoidOutcome::Point(x) => {
                    seen_point += 1;
                    assert!(designed);
                    let mut check = lp::oracle_from_rows(rows.clone());
                    assert!(matches!(check(&x), lp::Separation::Feasible));
                }
                lp::EllipsoidOutcome::Empty { .. } => {
                    seen_empty += 1;
                    assert!(!designed);
                }
            }
        }
        if designed {
            // Feasible case: every cut must be satisfied by any feasible
            // point; verify against one found by the simplex.
            let feas = lp::LinearProgram {
                sense: Sense::Min,
                objective: vec![0.0; dim],
                rows,
                lower: vec![f64::NEG_INFINITY; dim],
                upper: vec![f64::INFINITY; dim],
            };
            if let LpOutcome::Optimal { point, .. } = solve_lp(&feas).unwrap() {
                for cut in &cuts_seen {
                    let lhs: f64 = cut.normal.iter().zip(&point).map(|(a, x)| a * x).sum();
                    assert!(lhs <= cut.rhs + 1e-6, "cut excludes a feasible point");
                }
            }
        }
    }
    assert!(seen_point > 10 && seen_empty > 10);
}

/// Monte-Carlo and exact reward evaluation stay within five standard errors
/// across instances small enough to enumerate.
#[test]
fn mc_exact_agreement_on_enumerable_instances() {
    let mut outside = 0;
    for seed in 0..50u64 {
        let inst = gen_random(&GenParams {
            n: 2,
            ell: 2,
            m: 3,
            q: 1,
            family: FamilyChoice::BudgetAdditive,
            fosd: false,
            seed: 100 + seed,
        });
        let profile = vec![1; inst.n()];
        let exact = pma_core::model::expected_reward_exact(&inst, &profile).unwrap();
        let est = pma_core::model::expected_reward_mc(&inst, &profile, 100_000, seed).unwrap();
        if (est.mean - exact).abs() > 5.0 * est.std_err.max(1e-9) {
            outside += 1;
        }
    }
    assert!(
        outside == 0,
        "{outside}/50 seeds outside the confidence band"
    );
}
