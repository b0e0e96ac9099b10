//! Acceptance suite: one test per shipping criterion, each printing a
//! pass/fail line (run with `--nocapture` to see them). Every tolerance and
//! threshold is pinned here.

mod common;

use std::time::Instant;

use pma_core::bayes::{
    bayes_solve, check_dsic, solve_lp3_direct, BayesSolveOptions, OracleKind, DEFAULT_PROFILE_CAP,
};
use pma_core::gen::{
    self, gen_independent_set, gen_label_cover, gen_random, gen_random_bayesian,
    independent_set_delta, labeling_contract, max_independent_set_size, BayesGenParams,
    FamilyChoice, GenParams, Graph, LabelCoverInput,
};
use pma_core::lp::{
    ellipsoid_default_budget, ellipsoid_feasibility, oracle_from_rows, solve_lp, EllipsoidOutcome,
    LinearProgram, LpOutcome, Sense,
};
use pma_core::matroid::{brute_force_optimal, build_partition_problem, RewardEvaluator};
use pma_core::model::{principal_utility, RewardMode};
use pma_core::rewards::{self, CheckMode, FosdVerdict};
use pma_core::rng::Rng;
use pma_core::submod::{
    solve_dr, spot_check_monotone, spot_check_submodular, ExtendOptions, ExtendedProblem,
};
use pma_core::supermod::{
    check_ordered_supermodular, sfm_min_norm, solve_ir_fosd, SolveOptions, WeightedProblem,
};
use pma_core::Instance;

fn report(criterion: u32, passed: bool, detail: &str) {
    println!(
        "criterion {criterion:02} {}: {detail}",
        if passed { "PASS" } else { "FAIL" }
    );
    assert!(passed, "criterion {criterion} failed: {detail}");
}

fn ir_params(seed: u64) -> GenParams {
    GenParams {
        n: 1 + (seed % 3) as usize,
        ell: 2 + (seed % 2) as usize,
        m: 2 + ((seed / 2) % 2) as usize,
        q: 1,
        family: FamilyChoice::ExpSum,
        fosd: true,
        seed,
    }
}

fn dr_params(seed: u64) -> GenParams {
    let coverage = seed.is_multiple_of(2);
    GenParams {
        n: if coverage {
            2 + (seed % 2) as usize
        } else {
            1 + (seed % 3) as usize
        },
        ell: 2 + (seed % 2) as usize,
        m: 2 + ((seed / 3) % 2) as usize,
        q: 1,
        family: if coverage {
            FamilyChoice::CoverageMax
        } else {
            FamilyChoice::BudgetAdditive
        },
        fosd: false,
        seed,
    }
}

fn brute_reference(inst: &Instance) -> (f64, Vec<usize>, f64, f64) {
    let pp = build_partition_problem(inst).unwrap();
    let eval = RewardEvaluator::new(inst, RewardMode::default());
    let res = brute_force_optimal(inst, &pp, &eval, 1_000_000).unwrap();
    let r_star = eval.eval(&res.profile);
    let p_star = r_star - res.value;
    (res.value, res.profile, r_star, p_star)
}

/// Criterion 1: the exact solver agrees with brute force on every seeded
/// increasing-return instance with dominance by construction.
#[test]
fn criterion_01_exact_solver_equivalence() {
    let start = Instant::now();
    let total = 200;
    let mut worst_gap = 0.0f64;
    for seed in 0..total {
        let inst = gen_random(&ir_params(seed));
        let (brute, _, _, _) = brute_reference(&inst);
        let res = solve_ir_fosd(&inst, &SolveOptions::default())
            .unwrap_or_else(|e| panic!("seed {seed}: solver refused: {e}"));
        let gap = (res.value - brute).abs();
        worst_gap = worst_gap.max(gap);
        assert!(
            gap <= 1e-6,
            "seed {seed}: exact {} vs brute {brute}",
            res.value
        );
        assert_eq!(
            res.ring_violations, 0,
            "seed {seed}: minimizer off the ring"
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        1,
        elapsed < 60.0,
        &format!("{total} instances, worst gap {worst_gap:.2e}, {elapsed:.1}s (< 60s)"),
    );
}

/// Criterion 2: the approximation guarantee of the diminishing-return solver
/// holds against the brute-force optimum on at least 99% of seeds.
#[test]
fn criterion_02_dr_approximation_guarantee() {
    let start = Instant::now();
    let total = 200;
    let eps = 0.01;
    let ratio = 1.0 - (-1.0f64).exp();
    let mut failures = 0;
    for seed in 0..total {
        let inst = gen_random(&dr_params(seed));
        let (_, _, r_star, p_star) = brute_reference(&inst);
        let res = solve_dr(&inst, eps, seed).unwrap();
        let floor = ratio * r_star - p_star - eps;
        if res.value < floor - 1e-9 {
            failures += 1;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        2,
        failures <= total / 100 && elapsed < 300.0,
        &format!("{failures}/{total} seeds below the floor, {elapsed:.1}s (< 300s)"),
    );
}

/// Criterion 3: the submodular minimization kernel matches full enumeration
/// on random coverage-plus-modular functions over up to 12 elements.
#[test]
fn criterion_03_sfm_kernel_exact() {
    let start = Instant::now();
    let mut rng = Rng::new(0xacce);
    let total = 50;
    for trial in 0..total {
        let n = 6 + rng.next_index(7); // 6..=12
        let nsets = 3 + rng.next_index(5);
        let cover: Vec<(u32, f64)> = (0..nsets)
            .map(|_| {
                let mut mask = 0u32;
                for e in 0..n {
                    if rng.next_f64() < 0.4 {
                        mask |= 1 << e;
                    }
                }
                (mask, rng.next_range(0.1, 2.0))
            })
            .collect();
        let weights: Vec<f64> = (0..n).map(|_| rng.next_range(-1.2, 1.2)).collect();
        let f = |mask: &[bool]| -> f64 {
            let mut bits = 0u32;
            for (e, &m) in mask.iter().enumerate() {
                if m {
                    bits |= 1 << e;
                }
            }
            let coverage: f64 = cover
                .iter()
                .filter(|(s, _)| s & bits != 0)
                .map(|(_, w)| w)
                .sum();
            let modular: f64 = mask
                .iter()
                .zip(&weights)
                .filter(|(m, _)| **m)
                .map(|(_, v)| v)
                .sum();
            coverage + modular
        };
        let res = sfm_min_norm(f, n, 1e-9).unwrap();
        let mut best = f64::INFINITY;
        for bits in 0u32..(1 << n) {
            let mask: Vec<bool> = (0..n).map(|e| bits & (1 << e) != 0).collect();
            best = best.min(f(&mask));
        }
        assert!(
            (res.value - best).abs() <= 1e-9,
            "trial {trial}: sfm {} vs enumeration {best}",
            res.value
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        3,
        elapsed < 30.0,
        &format!("{total} functions matched enumeration, {elapsed:.1}s (< 30s)"),
    );
}

/// Criterion 4: the transport-based dominance decision agrees with the
/// comprehensive-set brute force on 500 random instances.
#[test]
fn criterion_04_fosd_decision_agreement() {
    let total = 500;
    let mut passes = 0;
    let mut fails = 0;
    for seed in 0..total {
        let params = GenParams {
            n: 1 + (seed % 2) as usize,
            ell: 2 + (seed % 3) as usize,
            m: 2 + (seed % 7) as usize, // up to 8
            q: 1 + (seed % 2) as usize,
            family: FamilyChoice::ExpSum,
            fosd: seed % 2 == 0,
            seed: seed * 31 + 5,
        };
        let inst = gen_random(&params);
        let lp_verdict = rewards::check_fosd(&inst).unwrap().passed();
        let brute_verdict = rewards::fosd_bruteforce(&inst).unwrap().passed();
        assert_eq!(
            lp_verdict, brute_verdict,
            "seed {seed}: transport {lp_verdict} vs brute {brute_verdict}"
        );
        if lp_verdict {
            passes += 1;
        } else {
            fails += 1;
        }
    }
    report(
        4,
        passes > 0 && fails > 0,
        &format!("{total} instances agree ({passes} hold, {fails} violate)"),
    );
}

/// Criterion 5: ordered supermodularity holds exhaustively on every
/// criterion-1 instance, and the check finds witnesses on most
/// diminishing-return instances.
#[test]
fn criterion_05_ordered_supermodularity() {
    for seed in 0..200u64 {
        let inst = gen_random(&ir_params(seed));
        let pp = build_partition_problem(&inst).unwrap();
        let eval = RewardEvaluator::new(&inst, RewardMode::default());
        let wp = WeightedProblem::from_partition(&pp, &eval);
        let verdict =
            check_ordered_supermodular(&wp, CheckMode::Exhaustive { cap: 1_000_000 }).unwrap();
        assert!(verdict.passed(), "seed {seed}: ordered check failed");
    }
    let mut witnesses = 0;
    let dr_total = 50;
    for seed in 0..dr_total {
        let params = GenParams {
            n: 2 + (seed % 2) as usize,
            ell: 2 + (seed % 2) as usize,
            m: 2,
            q: 1,
            family: FamilyChoice::CoverageMax,
            fosd: false,
            seed: 900 + seed,
        };
        let inst = gen_random(&params);
        let pp = build_partition_problem(&inst).unwrap();
        let eval = RewardEvaluator::new(&inst, RewardMode::default());
        let wp = WeightedProblem::from_partition(&pp, &eval);
        let verdict =
            check_ordered_supermodular(&wp, CheckMode::Exhaustive { cap: 1_000_000 }).unwrap();
        if !verdict.passed() {
            witnesses += 1;
        }
    }
    report(
        5,
        witnesses * 10 >= dr_total * 8,
        &format!(
            "200 increasing-return instances pass; witnesses on {witnesses}/{dr_total} diminishing-return instances (>= 80%)"
        ),
    );
}

/// Criterion 6: monotonicity and submodularity of the extended reward hold
/// on every criterion-2 instance under 1000 seeded probes.
#[test]
fn criterion_06_extension_structure() {
    for seed in 0..200u64 {
        let inst = gen_random(&dr_params(seed));
        let pp = build_partition_problem(&inst).unwrap();
        let parts = pp
            .parts
            .iter()
            .map(|p| p.iter().map(|e| (e.action, e.weight)).collect())
            .collect();
        let ep = ExtendedProblem::new(&inst, parts, 1.0, &ExtendOptions::default()).unwrap();
        if let Some((small, large)) = spot_check_monotone(&ep, 1000, seed) {
            panic!("seed {seed}: monotonicity violated at {small:?} vs {large:?}");
        }
        if let Some((small, large, e)) = spot_check_submodular(&ep, 1000, seed) {
            panic!("seed {seed}: submodularity violated at {small:?}/{large:?} elem {e}");
        }
    }
    report(
        6,
        true,
        "1000 probes per instance on 200 instances, tolerance 1e-9",
    );
}

fn bayes_params(seed: u64) -> BayesGenParams {
    BayesGenParams {
        base: GenParams {
            n: 1 + (seed % 2) as usize,
            ell: 2 + (seed % 2) as usize,
            m: 2,
            q: 1,
            family: FamilyChoice::ExpSum,
            fosd: true,
            seed: 7000 + seed,
        },
        num_types: 1 + (seed % 2) as usize,
        support_size: 1 + (seed % 3) as usize,
    }
}

/// Criterion 7: the Bayesian pipeline lands within rho of the direct LP and
/// yields truthful menus on every tiny instance.
#[test]
fn criterion_07_bayesian_end_to_end() {
    let start = Instant::now();
    let total = 50u64;
    let rho = 0.05;
    let mut worst_gap = f64::NEG_INFINITY;
    for seed in 0..total {
        let bi = gen_random_bayesian(&bayes_params(seed));
        bi.validate().unwrap();
        let lp = solve_lp3_direct(&bi, DEFAULT_PROFILE_CAP).unwrap();
        let res = bayes_solve(&bi, &BayesSolveOptions::new(rho, OracleKind::IrFosd, seed))
            .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
        let gap = lp.value - res.value;
        worst_gap = worst_gap.max(gap);
        assert!(
            gap <= rho + 1e-6,
            "seed {seed}: menu {} vs direct LP {}",
            res.value,
            lp.value
        );
        // Weak-duality sandwich on the restricted primal.
        assert!(
            res.diagnostics.lp8_value <= lp.value + 1e-6,
            "seed {seed}: restricted primal above the full LP"
        );
        assert!(
            res.diagnostics.lp8_value >= res.diagnostics.eta_star - rho / 4.0 - 1e-6,
            "seed {seed}: restricted primal below eta* - beta"
        );
        let dsic = check_dsic(&bi, &res.menu, 1e-5);
        assert!(
            dsic.pass,
            "seed {seed}: worst truthfulness margin {}",
            dsic.worst
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    report(
        7,
        elapsed < 600.0,
        &format!(
            "{total} instances, worst LP gap {worst_gap:.2e} (<= 0.05), {elapsed:.1}s (< 600s)"
        ),
    );
}

/// Criterion 8: with a single type tuple the Bayesian pipeline reproduces the
/// corresponding non-Bayesian solver's value within rho.
#[test]
fn criterion_08_degenerate_bayesian_consistency() {
    let rho = 0.05;
    let total = 30u64;
    for seed in 0..total {
        let params = BayesGenParams {
            base: GenParams {
                n: 1 + (seed % 2) as usize,
                ell: 2 + (seed % 2) as usize,
                m: 2,
                q: 1,
                family: FamilyChoice::ExpSum,
                fosd: true,
                seed: 400 + seed,
            },
            num_types: 1,
            support_size: 1,
        };
        let bi = gen_random_bayesian(&params);
        let view = bi.typed_view(&bi.support[0].0);
        let exact = solve_ir_fosd(&view, &SolveOptions::default()).unwrap();
        let res = bayes_solve(&bi, &BayesSolveOptions::new(rho, OracleKind::IrFosd, seed)).unwrap();
        assert!(
            (res.value - exact.value).abs() <= rho + 1e-6,
            "seed {seed}: menu {} vs exact {}",
            res.value,
            exact.value
        );
    }
    for seed in 0..total {
        let params = BayesGenParams {
            base: GenParams {
                n: 1 + (seed % 2) as usize,
                ell: 2,
                m: 2,
                q: 1,
                family: FamilyChoice::BudgetAdditive,
                fosd: false,
                seed: 500 + seed,
            },
            num_types: 1,
            support_size: 1,
        };
        let bi = gen_random_bayesian(&params);
        let view = bi.typed_view(&bi.support[0].0);
        let approx = solve_dr(&view, rho / 2.0, seed).unwrap();
        let res = bayes_solve(
            &bi,
            &BayesSolveOptions::new(rho, OracleKind::DrApprox, seed),
        )
        .unwrap();
        assert!(
            (res.value - approx.value).abs() <= rho + 1e-6,
            "seed {seed}: menu {} vs direct approximation {}",
            res.value,
            approx.value
        );
    }
    report(
        8,
        true,
        &format!("{total} instances per oracle kind within rho"),
    );
}

/// Criterion 9: the hardness gadgets reproduce their closed-form values.
#[test]
fn criterion_09_gadget_closed_forms() {
    let graphs = [
        Graph {
            vertices: 2,
            edges: vec![(0, 1)],
        },
        Graph {
            vertices: 3,
            edges: vec![(0, 1), (1, 2)],
        },
        Graph {
            vertices: 3,
            edges: vec![(0, 1), (1, 2), (0, 2)],
        },
        Graph {
            vertices: 4,
            edges: vec![(0, 1), (1, 2), (2, 3), (3, 0)],
        },
        Graph {
            vertices: 4,
            edges: vec![(0, 1), (0, 2), (0, 3)],
        },
        Graph {
            vertices: 4,
            edges: vec![(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)],
        },
    ];
    for (k, graph) in graphs.iter().enumerate() {
        let inst = gen_independent_set(graph).unwrap();
        let (value, _, _, _) = brute_reference(&inst);
        let expect = independent_set_delta(graph) * max_independent_set_size(graph) as f64;
        assert!(
            (value - expect).abs() <= 1e-6,
            "graph {k}: brute {value} vs closed form {expect}"
        );
    }
    // Satisfiable two-edge label-cover instances at smoothing 20.
    for labels in 2..=3usize {
        let constraints: Vec<Vec<usize>> = vec![
            (0..labels).collect(),
            (0..labels).map(|s| (s + 1) % labels).collect(),
        ];
        let input = LabelCoverInput {
            left: 1,
            right: 2,
            edges: vec![(0, 0), (0, 1)],
            labels,
            constraints,
        };
        let inst = gen_label_cover(&input, 20.0).unwrap();
        // Labeling: left plays 0, right nodes play their required labels.
        let labeling = vec![0, 0, 1 % labels];
        let c = labeling_contract(&inst, &labeling);
        let u = principal_utility(&inst, &c, RewardMode::default()).unwrap();
        assert!(u >= 0.99, "labels {labels}: utility {u} < 0.99");
        // The gadget rewards pass a sampled increasing-return check.
        let verdict = rewards::check_property(
            &inst,
            rewards::Property::IrSupermodular,
            CheckMode::Sampled {
                trials: 300,
                seed: labels as u64,
            },
        )
        .unwrap();
        assert!(verdict.passed(), "labels {labels}: gadget reward not IR");
    }
    report(
        9,
        true,
        "independent-set and label-cover gadgets match closed forms",
    );
}

/// Criterion 10: simplex optima match the exact rational reference and
/// simplex/ellipsoid feasibility verdicts agree on designed systems.
#[test]
fn criterion_10_lp_ellipsoid_cross_validation() {
    let mut rng = Rng::new(0x1bda);
    let total = 200;
    let mut optimal = 0;
    let mut infeasible = 0;
    for trial in 0..total {
        let lp = common::random_box_lp(&mut rng);
        let reference = common::reference_box_lp(&lp);
        match solve_lp(&lp).unwrap() {
            LpOutcome::Optimal { value, point, .. } => {
                optimal += 1;
                assert!(
                    lp.feasibility_residual(&point) <= 1e-7,
                    "trial {trial}: residual"
                );
                match reference {
                    common::RefOutcome::Optimal(exact) => assert!(
                        (value - exact).abs() <= 1e-6,
                        "trial {trial}: simplex {value} vs rational {exact}"
                    ),
                    common::RefOutcome::Infeasible => {
                        panic!("trial {trial}: simplex optimal, reference infeasible")
                    }
                }
            }
            LpOutcome::Infeasible { farkas } => {
                infeasible += 1;
                assert_eq!(
                    reference,
                    common::RefOutcome::Infeasible,
                    "trial {trial}: verdicts differ"
                );
                assert!(
                    pma_core::lp::farkas_is_valid(&lp, &farkas),
                    "trial {trial}: invalid certificate"
                );
            }
            LpOutcome::Unbounded { .. } => panic!("trial {trial}: box LP cannot be unbounded"),
        }
    }
    // Ellipsoid vs simplex feasibility on systems with designed verdicts.
    let mut agree = 0;
    let fe_total = 200;
    for trial in 0..fe_total {
        let (rows, dim, designed) = common::designed_feasibility_system(&mut rng);
        let feas_lp = LinearProgram {
            sense: Sense::Min,
            objective: vec![0.0; dim],
            rows: rows.clone(),
            lower: vec![f64::NEG_INFINITY; dim],
            upper: vec![f64::INFINITY; dim],
        };
        let simplex_feasible = matches!(solve_lp(&feas_lp).unwrap(), LpOutcome::Optimal { .. });
        let radius = 6.0 * (dim as f64).sqrt() + 2.0;
        let budget = ellipsoid_default_budget(dim, radius, 1e-4);
        let mut oracle = oracle_from_rows(rows);
        let ell_feasible = match ellipsoid_feasibility(dim, radius, &mut oracle, budget, 1e-4)
            .unwrap_or_else(|e| panic!("trial {trial}: ellipsoid failed: {e}"))
        {
            EllipsoidOutcome::Point(_) => true,
            EllipsoidOutcome::Empty { .. } => false,
        };
        assert_eq!(simplex_feasible, designed, "trial {trial}: simplex verdict");
        assert_eq!(ell_feasible, designed, "trial {trial}: ellipsoid verdict");
        agree += 1;
    }
    report(
        10,
        true,
        &format!(
            "{total} LPs vs rational reference ({optimal} optimal, {infeasible} infeasible); {agree}/{fe_total} feasibility verdicts agree"
        ),
    );
}

/// Model-level invariant promoted next to the criteria: seeded Monte-Carlo
/// estimates converge to the exact expected reward.
#[test]
fn monte_carlo_convergence_invariant() {
    let mut bad = 0;
    let trials = 100;
    for seed in 0..trials {
        let inst = gen_random(&GenParams {
            n: 2,
            ell: 2,
            m: 3,
            q: 1,
            family: FamilyChoice::ExpSum,
            fosd: true,
            seed: 3000 + seed,
        });
        let profile = vec![1; inst.n()];
        let exact = pma_core::model::expected_reward_exact(&inst, &profile).unwrap();
        let est = pma_core::model::expected_reward_mc(&inst, &profile, 100_000, seed).unwrap();
        let band = 5.0 * est.std_err.max(1e-9);
        if (est.mean - exact).abs() > band {
            bad += 1;
        }
    }
    assert!(
        bad <= 1,
        "{bad}/{trials} seeds outside five standard errors"
    );
}

/// The seeded generator keeps its dominance contract across many seeds
/// (expanded from criterion-support generator checks).
#[test]
fn generator_fosd_contract() {
    for seed in 0..500u64 {
        let inst = gen_random(&GenParams {
            n: 1 + (seed % 2) as usize,
            ell: 2 + (seed % 3) as usize,
            m: 2 + (seed % 4) as usize,
            q: 1,
            family: FamilyChoice::ExpSum,
            fosd: true,
            seed,
        });
        match rewards::check_fosd(&inst).unwrap() {
            FosdVerdict::Pass { .. } => {}
            FosdVerdict::Fail { agent, pair, .. } => {
                panic!("seed {seed}: generator broke dominance (agent {agent}, {pair:?})")
            }
        }
    }
}

/// Label-cover gadgets stay increasing-return supermodular at moderate
/// smoothing, and independent-set gadgets pass the exhaustive
/// diminishing-return check on their binary lattice.
#[test]
fn gadget_structural_tags() {
    let input = LabelCoverInput {
        left: 1,
        right: 2,
        edges: vec![(0, 0), (0, 1)],
        labels: 2,
        constraints: vec![vec![0, 1], vec![1, 0]],
    };
    let inst = gen_label_cover(&input, 10.0).unwrap();
    let verdict = rewards::check_property(
        &inst,
        rewards::Property::IrSupermodular,
        CheckMode::Sampled {
            trials: 500,
            seed: 1,
        },
    )
    .unwrap();
    assert!(verdict.passed());

    let graph = Graph {
        vertices: 3,
        edges: vec![(0, 1), (1, 2)],
    };
    let inst = gen_independent_set(&graph).unwrap();
    let verdict = rewards::check_property(
        &inst,
        rewards::Property::DrSubmodular,
        CheckMode::Exhaustive { cap: 1_000_000 },
    )
    .unwrap();
    assert!(verdict.passed());
    let _ = gen::independent_set_contract(&inst, &[0, 2]);
}
