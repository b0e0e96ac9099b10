//! End-to-end checks of the Bayesian pipeline on tiny instances.

use pma_core::bayes::{
    self, bayes_solve, check_dsic, solve_lp3_direct, BayesSolveOptions, BayesianInstance,
    OracleKind, DEFAULT_PROFILE_CAP,
};
use pma_core::fixtures;
use pma_core::gen::{gen_random_bayesian, BayesGenParams, FamilyChoice, GenParams};
use pma_core::supermod::{solve_ir_fosd, SolveOptions};
use pma_core::Instance;

fn degenerate(inst: &Instance) -> BayesianInstance {
    BayesianInstance {
        outcome_space: inst.outcome_space.clone(),
        num_types: 1,
        agents: inst.agents.iter().map(|a| vec![a.clone()]).collect(),
        support: vec![(vec![0; inst.n()], 1.0)],
        reward: inst.reward.clone(),
    }
}

#[test]
fn degenerate_ir_solve_matches_exact_solver() {
    let inst = fixtures::t1();
    let bi = degenerate(&inst);
    let rho = 0.05;
    let exact = solve_ir_fosd(&inst, &SolveOptions::default()).unwrap();
    let res = bayes_solve(&bi, &BayesSolveOptions::new(rho, OracleKind::IrFosd, 7)).unwrap();
    assert!(
        res.value >= exact.value - rho - 1e-9,
        "menu value {} below exact {} - rho",
        res.value,
        exact.value
    );
    let report = check_dsic(&bi, &res.menu, 1e-5);
    assert!(report.pass, "worst margin {}", report.worst);
}

#[test]
fn degenerate_dr_solve_is_within_guarantee() {
    let inst = fixtures::two_agent_budget();
    let bi = degenerate(&inst);
    let rho = 0.05;
    let res = bayes_solve(&bi, &BayesSolveOptions::new(rho, OracleKind::DrApprox, 3)).unwrap();
    // Brute-force optimum of the non-Bayesian instance bounds the guarantee.
    let pp = pma_core::matroid::build_partition_problem(&inst).unwrap();
    let eval = pma_core::matroid::RewardEvaluator::new(&inst, Default::default());
    let brute = pma_core::matroid::brute_force_optimal(&inst, &pp, &eval, 1_000_000).unwrap();
    let r_star = eval.eval(&brute.profile);
    let p_star = r_star - brute.value;
    let floor = (1.0 - (-1.0f64).exp()) * r_star - p_star - rho;
    assert!(res.value >= floor - 1e-9, "{} < {floor}", res.value);
    assert!(check_dsic(&bi, &res.menu, 1e-5).pass);
}

#[test]
fn two_type_instance_tracks_direct_lp() {
    let params = BayesGenParams {
        base: GenParams {
            n: 2,
            ell: 2,
            m: 2,
            q: 1,
            family: FamilyChoice::ExpSum,
            fosd: true,
            seed: 42,
        },
        num_types: 2,
        support_size: 2,
    };
    let bi = gen_random_bayesian(&params);
    bi.validate().unwrap();
    let rho = 0.05;
    let lp = solve_lp3_direct(&bi, DEFAULT_PROFILE_CAP).unwrap();
    let res = bayes_solve(&bi, &BayesSolveOptions::new(rho, OracleKind::IrFosd, 11)).unwrap();
    assert!(
        res.value >= lp.value - rho - 1e-6,
        "menu value {} vs direct LP {}",
        res.value,
        lp.value
    );
    assert!(res.value <= lp.value + 1e-6, "menu cannot beat the LP");
    let report = check_dsic(&bi, &res.menu, 1e-5);
    assert!(report.pass, "worst margin {}", report.worst);
}

#[test]
fn two_type_dr_oracle_meets_its_menu_guarantee() {
    // With the approximate oracle the menu must earn at least
    // (1 - 1/e) R - P - rho against every menu; test it against the reward
    // and payment split of the optimal direct-LP solution.
    let ratio = 1.0 - (-1.0f64).exp();
    let rho = 0.05;
    for seed in [3u64, 8, 21] {
        let params = BayesGenParams {
            base: GenParams {
                n: 2,
                ell: 2,
                m: 2,
                q: 1,
                family: FamilyChoice::BudgetAdditive,
                fosd: false,
                seed,
            },
            num_types: 2,
            support_size: 2,
        };
        let bi = gen_random_bayesian(&params);
        bi.validate().unwrap();
        let lp = solve_lp3_direct(&bi, DEFAULT_PROFILE_CAP).unwrap();
        // Split the optimum into its expected reward and payment parts.
        let mut reward_part = 0.0;
        for ((s, profile), t) in &lp.t {
            let view = bi.typed_view(&bi.support[*s].0);
            let r = pma_core::model::expected_reward_exact(&view, profile).unwrap();
            reward_part += bi.support[*s].1 * t * r;
        }
        let payment_part = reward_part - lp.value;
        let floor = ratio * reward_part - payment_part - rho;
        let res =
            bayes_solve(&bi, &BayesSolveOptions::new(rho, OracleKind::DrApprox, seed)).unwrap();
        assert!(
            res.value >= floor - 1e-6,
            "seed {seed}: menu {} below floor {floor} (R {reward_part}, P {payment_part})",
            res.value
        );
        let report = check_dsic(&bi, &res.menu, 1e-5);
        assert!(report.pass, "seed {seed}: worst margin {}", report.worst);
    }
}

#[test]
fn lp5_equals_lp3_on_tiny_instances() {
    // The relaxed and exact formulations share their optimum; probe via the
    // pipeline diagnostics on a collection of seeds.
    for seed in [1u64, 5, 9] {
        let params = BayesGenParams {
            base: GenParams {
                n: 1,
                ell: 3,
                m: 2,
                q: 1,
                family: FamilyChoice::ExpSum,
                fosd: true,
                seed,
            },
            num_types: 2,
            support_size: 2,
        };
        let bi = gen_random_bayesian(&params);
        let lp3 = solve_lp3_direct(&bi, DEFAULT_PROFILE_CAP).unwrap();
        let lp5 = bayes::solve_lp5_direct(&bi, DEFAULT_PROFILE_CAP).unwrap();
        assert!(
            (lp3.value - lp5.value).abs() < 1e-6,
            "seed {seed}: exact {} vs relaxed {}",
            lp3.value,
            lp5.value
        );
    }
}
