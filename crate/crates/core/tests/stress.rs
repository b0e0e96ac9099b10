//! On-demand stress runs beyond the acceptance sizes. Ignored by default:
//! run with `cargo test -p pma-core --test stress -- --ignored --nocapture`.

use pma_core::bayes::{
    bayes_solve, check_dsic, solve_lp3_direct, BayesSolveOptions, OracleKind,
    DEFAULT_PROFILE_CAP,
};
use pma_core::gen::{gen_random, gen_random_bayesian, BayesGenParams, FamilyChoice, GenParams};
use pma_core::matroid::{brute_force_optimal, build_partition_problem, RewardEvaluator};
use pma_core::model::RewardMode;
use pma_core::submod::solve_dr;
use pma_core::supermod::{solve_ir_fosd, SolveOptions};

#[test]
#[ignore]
fn exact_solver_matches_brute_force_at_larger_sizes() {
    for seed in 0..1000u64 {
        let inst = gen_random(&GenParams {
            n: 1 + (seed % 3) as usize,
            ell: 2 + (seed % 3) as usize,
            m: 2 + (seed % 3) as usize,
            q: 1 + (seed % 2) as usize,
            family: FamilyChoice::ExpSum,
            fosd: true,
            seed: 10_000 + seed,
        });
        let pp = build_partition_problem(&inst).unwrap();
        let eval = RewardEvaluator::new(&inst, RewardMode::default());
        let brute = brute_force_optimal(&inst, &pp, &eval, 1_000_000).unwrap();
        let res = solve_ir_fosd(&inst, &SolveOptions::default())
            .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        assert!(
            (res.value - brute.value).abs() <= 1e-6,
            "seed {seed}: exact {} vs brute {}",
            res.value,
            brute.value
        );
    }
    println!("stress: 1000 exact-vs-brute instances up to n=3, ell=4, m=4, q=2");
}

#[test]
#[ignore]
fn dr_floor_holds_at_larger_sizes() {
    let ratio = 1.0 - (-1.0f64).exp();
    let mut failures = 0;
    let total = 400u64;
    for seed in 0..total {
        let inst = gen_random(&GenParams {
            n: 2 + (seed % 3) as usize,
            ell: 2 + (seed % 2) as usize,
            m: 2 + (seed % 2) as usize,
            q: 1,
            family: if seed % 2 == 0 {
                FamilyChoice::CoverageMax
            } else {
                FamilyChoice::BudgetAdditive
            },
            fosd: false,
            seed: 20_000 + seed,
        });
        let pp = build_partition_problem(&inst).unwrap();
        let eval = RewardEvaluator::new(&inst, RewardMode::default());
        let brute = brute_force_optimal(&inst, &pp, &eval, 1_000_000).unwrap();
        let r_star = eval.eval(&brute.profile);
        let p_star = r_star - brute.value;
        let res = solve_dr(&inst, 0.02, seed).unwrap();
        if res.value < ratio * r_star - p_star - 0.02 - 1e-9 {
            failures += 1;
        }
    }
    assert!(failures == 0, "{failures}/{total} seeds below the floor");
    println!("stress: {total} approximation instances up to n=4 hold the floor");
}

#[test]
#[ignore]
fn bayesian_pipeline_handles_wider_supports() {
    for seed in 0..10u64 {
        let bi = gen_random_bayesian(&BayesGenParams {
            base: GenParams {
                n: 2,
                ell: 2 + (seed % 2) as usize,
                m: 2,
                q: 1,
                family: FamilyChoice::ExpSum,
                fosd: true,
                seed: 30_000 + seed,
            },
            num_types: 2,
            support_size: 4,
        });
        bi.validate().unwrap();
        let rho = 0.05;
        let lp = solve_lp3_direct(&bi, DEFAULT_PROFILE_CAP).unwrap();
        let res = bayes_solve(&bi, &BayesSolveOptions::new(rho, OracleKind::IrFosd, seed))
            .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        assert!(
            res.value >= lp.value - rho - 1e-6,
            "seed {seed}: menu {} vs direct LP {}",
            res.value,
            lp.value
        );
        assert!(check_dsic(&bi, &res.menu, 1e-5).pass);
    }
    println!("stress: 10 full-support Bayesian instances within rho of the direct LP");
}
