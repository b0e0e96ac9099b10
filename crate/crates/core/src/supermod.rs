//! Exact polynomial-time solver for increasing-return rewards under the
//! stochastic-dominance condition.
//!
//! The profile-selection objective is ordered-supermodular in that setting:
//! taking partition-wise maximum/minimum of two profiles (under the
//! canonical per-agent action order) never decreases the total value. Such
//! functions are maximized by encoding levels with threshold indicator
//! elements ("agent i plays at least level t"), which turns prefix-closed
//! subsets into profiles, and minimizing the negated objective plus a large
//! penalty per prefix violation with a submodular function minimizer.
//!
//! The minimizer is Wolfe's minimum-norm-point algorithm over the base
//! polytope with the greedy linear-optimization oracle.

use std::cell::RefCell;
use std::collections::HashMap;

use thiserror::Error;

use crate::matroid::{
    build_partition_problem, contract_from_set, IndependentSet, MatroidError, PartitionProblem,
    RewardEvaluator,
};
use crate::model::{Contract, Instance, RewardMode};
use crate::rewards::{
    self, CheckError, CheckMode, FosdVerdict, Property, PropertyVerdict, StructuralTag,
};
use crate::rng::Rng;

// ---------------------------------------------------------------------------
// Weighted profile problems
// ---------------------------------------------------------------------------

/// A profile-selection problem over per-agent element lists: pick one element
/// per part (position 0 is the null fallback), collect
/// `reward(profile) - sum of picked weights`. Shared by the exact solver, the
/// approximation solver, and the Bayesian separation oracle (which swaps the
/// minimum payments for dual weights and scales the reward).
/// Expected-reward closure over action profiles.
pub type ProfileReward<'a> = Box<dyn Fn(&[usize]) -> f64 + 'a>;

pub struct WeightedProblem<'a> {
    /// `parts[i]` lists `(action, weight)` in canonical order.
    pub parts: Vec<Vec<(usize, f64)>>,
    pub reward: ProfileReward<'a>,
    cache: RefCell<HashMap<Vec<usize>, f64>>,
}

impl<'a> WeightedProblem<'a> {
    pub fn new(parts: Vec<Vec<(usize, f64)>>, reward: ProfileReward<'a>) -> Self {
        WeightedProblem {
            parts,
            reward,
            cache: RefCell::new(HashMap::new()),
        }
    }

    pub fn from_partition(pp: &PartitionProblem, eval: &'a RewardEvaluator<'a>) -> Self {
        let parts = pp
            .parts
            .iter()
            .map(|p| p.iter().map(|e| (e.action, e.weight)).collect())
            .collect();
        WeightedProblem::new(parts, Box::new(move |profile| eval.eval(profile)))
    }

    pub fn n(&self) -> usize {
        self.parts.len()
    }

    pub fn level_counts(&self) -> Vec<usize> {
        self.parts.iter().map(|p| p.len()).collect()
    }

    pub fn profile_of_levels(&self, levels: &[usize]) -> Vec<usize> {
        levels
            .iter()
            .enumerate()
            .map(|(i, &l)| self.parts[i][l].0)
            .collect()
    }

    /// The lattice objective `h(levels)` (levels are 0-based part positions).
    pub fn h(&self, levels: &[usize]) -> f64 {
        if let Some(&v) = self.cache.borrow().get(levels) {
            return v;
        }
        let profile = self.profile_of_levels(levels);
        let weight: f64 = levels
            .iter()
            .enumerate()
            .map(|(i, &l)| self.parts[i][l].1)
            .sum();
        let v = (self.reward)(&profile) - weight;
        self.cache.borrow_mut().insert(levels.to_vec(), v);
        v
    }

    pub fn max_weight_sum(&self) -> f64 {
        self.parts
            .iter()
            .map(|p| p.iter().map(|e| e.1).fold(0.0f64, f64::max))
            .sum()
    }
}

// ---------------------------------------------------------------------------
// Submodular function minimization (Fujishige-Wolfe minimum norm point)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SfmResult {
    pub minimizer: Vec<bool>,
    pub value: f64,
}

#[derive(Debug, Error)]
pub enum SfmError {
    #[error("minimum-norm-point iteration budget exhausted; best value so far {best_value}")]
    Indeterminate { best: Vec<bool>, best_value: f64 },
    #[error("numerical failure in affine minimization")]
    Numerical,
}

/// Minimize a submodular set function given by a value oracle.
///
/// Submodularity of the oracle is the caller's responsibility (see
/// [`check_submodular_sampled`]). The returned set is exact whenever the
/// function's value gaps exceed the tolerance: the final candidate scan
/// evaluates the true oracle on every prefix of the min-norm ordering and on
/// both sign-threshold sets, and keeps the best.
pub fn sfm_min_norm(
    mut f: impl FnMut(&[bool]) -> f64,
    n: usize,
    tol: f64,
) -> Result<SfmResult, SfmError> {
    if n == 0 {
        let value = f(&[]);
        return Ok(SfmResult {
            minimizer: vec![],
            value,
        });
    }
    let f0 = f(&vec![false; n]);
    // Normalized oracle F(S) = f(S) - f(empty), evaluated on prefixes of an
    // element ordering (the only access pattern the greedy step needs).
    let eval_prefixes = |order: &[usize], f: &mut dyn FnMut(&[bool]) -> f64| -> Vec<f64> {
        let mut mask = vec![false; n];
        let mut vals = Vec::with_capacity(n + 1);
        vals.push(0.0);
        for &e in order {
            mask[e] = true;
            vals.push(f(&mask) - f0);
        }
        vals
    };

    let greedy = |x: &[f64], f: &mut dyn FnMut(&[bool]) -> f64| -> Vec<f64> {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap().then(a.cmp(&b)));
        let prefix = eval_prefixes(&order, f);
        let mut q = vec![0.0; n];
        for (k, &e) in order.iter().enumerate() {
            q[e] = prefix[k + 1] - prefix[k];
        }
        q
    };

    let mut vertices: Vec<Vec<f64>> = vec![greedy(&vec![0.0; n], &mut f)];
    let mut lambda = vec![1.0];
    let mut x = vertices[0].clone();

    let major_cap = 200 * n + 2000;
    let mut converged = false;
    let mut vertex_scale_sq: f64 = 1.0;
    for _ in 0..major_cap {
        let q = greedy(&x, &mut f);
        let xx: f64 = x.iter().map(|v| v * v).sum();
        let xq: f64 = x.iter().zip(&q).map(|(a, b)| a * b).sum();
        vertex_scale_sq = vertex_scale_sq.max(q.iter().map(|v| v * v).sum());
        // Scale-aware gap: the attainable precision is relative to the
        // vertex magnitudes, not to ||x||, which can be tiny at the optimum.
        if xx - xq <= tol * (1.0 + xx.max(vertex_scale_sq)) {
            converged = true;
            break;
        }
        if vertices
            .iter()
            .any(|v| v.iter().zip(&q).all(|(a, b)| (a - b).abs() <= 1e-12))
        {
            converged = true;
            break;
        }
        vertices.push(q);
        lambda.push(0.0);

        // Minor cycles: project onto the affine hull, walk back into the
        // convex hull dropping vertices as weights hit zero.
        for _ in 0..(vertices.len() + n + 10) * 4 {
            let alpha = affine_minimizer(&vertices).ok_or(SfmError::Numerical)?;
            if alpha.iter().all(|&a| a >= -1e-12) {
                lambda = alpha.iter().map(|&a| a.max(0.0)).collect();
                let s: f64 = lambda.iter().sum();
                for l in &mut lambda {
                    *l /= s;
                }
                break;
            }
            let mut theta = 1.0f64;
            for (l, a) in lambda.iter().zip(&alpha) {
                if *a < *l {
                    let t = l / (l - a);
                    if *a < 0.0 {
                        theta = theta.min(t);
                    }
                }
            }
            lambda = lambda
                .iter()
                .zip(&alpha)
                .map(|(l, a)| (1.0 - theta) * l + theta * a)
                .collect();
            let keep: Vec<usize> = (0..vertices.len()).filter(|&i| lambda[i] > 1e-12).collect();
            if keep.len() == vertices.len() {
                // No vertex dropped: clamp the smallest to zero to progress.
                let k = (0..lambda.len())
                    .min_by(|&a, &b| lambda[a].partial_cmp(&lambda[b]).unwrap())
                    .unwrap();
                lambda[k] = 0.0;
            }
            let keep: Vec<usize> = (0..vertices.len()).filter(|&i| lambda[i] > 1e-12).collect();
            vertices = keep.iter().map(|&i| vertices[i].clone()).collect();
            lambda = keep.iter().map(|&i| lambda[i]).collect();
            let s: f64 = lambda.iter().sum();
            for l in &mut lambda {
                *l /= s;
            }
        }
        x = vec![0.0; n];
        for (v, &l) in vertices.iter().zip(&lambda) {
            for (xi, vi) in x.iter_mut().zip(v) {
                *xi += l * vi;
            }
        }
    }

    // Candidate scan: prefixes of the ascending-x ordering plus the two
    // natural threshold sets; the true oracle picks the winner.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap().then(a.cmp(&b)));
    let mut best_mask = vec![false; n];
    let mut best_value = f0;
    let mut mask = vec![false; n];
    for &e in &order {
        mask[e] = true;
        let v = f(&mask);
        if v < best_value - 1e-15 {
            best_value = v;
            best_mask = mask.clone();
        }
    }
    for thresh in [-1e-10, 1e-10] {
        let mask: Vec<bool> = (0..n).map(|e| x[e] < thresh).collect();
        let v = f(&mask);
        if v < best_value - 1e-15 {
            best_value = v;
            best_mask = mask;
        }
    }

    if converged {
        Ok(SfmResult {
            minimizer: best_mask,
            value: best_value,
        })
    } else {
        Err(SfmError::Indeterminate {
            best: best_mask,
            best_value,
        })
    }
}

/// Affine minimizer weights over the given vertices: solve the KKT system of
/// `min ||sum a_i v_i||^2 s.t. sum a_i = 1`.
fn affine_minimizer(vertices: &[Vec<f64>]) -> Option<Vec<f64>> {
    let k = vertices.len();
    let mut sys = vec![vec![0.0; k + 2]; k + 1];
    for i in 0..k {
        for j in 0..k {
            let g: f64 = vertices[i]
                .iter()
                .zip(&vertices[j])
                .map(|(a, b)| a * b)
                .sum();
            sys[i][j] = g;
            if i == j {
                sys[i][j] += 1e-12; // ridge against rank deficiency
            }
        }
        sys[i][k] = 1.0;
        sys[i][k + 1] = 0.0;
    }
    for j in 0..k {
        sys[k][j] = 1.0;
    }
    sys[k][k] = 0.0;
    sys[k][k + 1] = 1.0;
    solve_dense(&mut sys).map(|sol| sol[..k].to_vec())
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn solve_dense(aug: &mut [Vec<f64>]) -> Option<Vec<f64>> {
    let n = aug.len();
    for col in 0..n {
        let piv =
            (col..n).max_by(|&a, &b| aug[a][col].abs().partial_cmp(&aug[b][col].abs()).unwrap())?;
        if aug[piv][col].abs() < 1e-14 {
            return None;
        }
        aug.swap(col, piv);
        for r in 0..n {
            if r != col {
                let factor = aug[r][col] / aug[col][col];
                if factor != 0.0 {
                    for c in col..=n {
                        let v = aug[col][c];
                        aug[r][c] -= factor * v;
                    }
                }
            }
        }
    }
    Some((0..n).map(|i| aug[i][n] / aug[i][i]).collect())
}

/// Sampled submodularity check of a set-function oracle: random nested pairs
/// with a marginal-gain comparison.
pub fn check_submodular_sampled(
    mut f: impl FnMut(&[bool]) -> f64,
    n: usize,
    trials: usize,
    seed: u64,
) -> Option<(Vec<bool>, Vec<bool>, usize)> {
    if n == 0 {
        return None;
    }
    let mut rng = Rng::new(seed).split(0x7375626d); // "subm"
    for _ in 0..trials {
        let mut small = vec![false; n];
        let mut large = vec![false; n];
        for e in 0..n {
            match rng.next_index(3) {
                0 => {}
                1 => large[e] = true,
                _ => {
                    small[e] = true;
                    large[e] = true;
                }
            }
        }
        let free: Vec<usize> = (0..n).filter(|&e| !large[e]).collect();
        if free.is_empty() {
            continue;
        }
        let e = free[rng.next_index(free.len())];
        let base_small = f(&small);
        let base_large = f(&large);
        small[e] = true;
        large[e] = true;
        let marg_small = f(&small) - base_small;
        let marg_large = f(&large) - base_large;
        small[e] = false;
        large[e] = false;
        if marg_small < marg_large - 1e-9 {
            return Some((small, large, e));
        }
    }
    None
}

// ---------------------------------------------------------------------------
// Threshold encoding of the lattice problem
// ---------------------------------------------------------------------------

/// Per-agent level counts of the lattice problem (level 0 is the null
/// fallback in every part).
#[derive(Debug, Clone)]
pub struct LatticeProblem {
    pub level_counts: Vec<usize>,
}

/// Ground elements `(agent, t)` for `t in 1..k_i`, meaning "agent i's level
/// is at least t". Prefix-closed subsets correspond exactly to level
/// vectors; the penalized objective charges `penalty` per missing implied
/// element (each a cut-type indicator), i.e. per element of
/// `closure(S) \ S` where the closure fills every threshold below a present
/// one. Charging the full closure deficiency — not just adjacent gaps — is
/// what keeps the extension submodular: the deficiency of a union and an
/// intersection under-counts that of the operands by exactly the closed
/// mass the intersection loses, and the penalty on that slack absorbs the
/// objective's off-ring error.
#[derive(Debug, Clone)]
pub struct ThresholdEncoding {
    pub elements: Vec<(usize, usize)>,
    pub level_counts: Vec<usize>,
    pub penalty: f64,
}

impl ThresholdEncoding {
    pub fn new(level_counts: Vec<usize>, penalty: f64) -> Self {
        let mut elements = Vec::new();
        for (i, &k) in level_counts.iter().enumerate() {
            for t in 1..k {
                elements.push((i, t));
            }
        }
        ThresholdEncoding {
            elements,
            level_counts,
            penalty,
        }
    }

    pub fn ground_size(&self) -> usize {
        self.elements.len()
    }

    /// Level vector of a subset: per agent, the highest present threshold.
    pub fn levels(&self, mask: &[bool]) -> Vec<usize> {
        let mut levels = vec![0usize; self.level_counts.len()];
        for (e, &(i, t)) in self.elements.iter().enumerate() {
            if mask[e] && t > levels[i] {
                levels[i] = t;
            }
        }
        levels
    }

    /// Closure deficiency `|closure(S) \ S|`: per part, the number of
    /// thresholds below the top present one that are missing.
    pub fn violations(&self, mask: &[bool]) -> usize {
        let parts = self.level_counts.len();
        let mut top = vec![0usize; parts];
        let mut count = vec![0usize; parts];
        for (e, &(i, t)) in self.elements.iter().enumerate() {
            if mask[e] {
                count[i] += 1;
                if t > top[i] {
                    top[i] = t;
                }
            }
        }
        (0..parts).map(|i| top[i] - count[i]).sum()
    }

    pub fn mask_of_levels(&self, levels: &[usize]) -> Vec<bool> {
        self.elements.iter().map(|&(i, t)| t <= levels[i]).collect()
    }
}

// ---------------------------------------------------------------------------
// Ordered-supermodularity check and the exact solver
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum OrderedVerdict {
    Pass {
        checked: usize,
    },
    Fail {
        levels_a: Vec<usize>,
        levels_b: Vec<usize>,
        violation: f64,
    },
    NoViolationFound {
        trials: usize,
    },
}

impl OrderedVerdict {
    pub fn passed(&self) -> bool {
        !matches!(self, OrderedVerdict::Fail { .. })
    }
}

/// Verify `h(max(a,b)) + h(min(a,b)) >= h(a) + h(b)` over level-vector pairs
/// under the canonical orderings.
pub fn check_ordered_supermodular(
    wp: &WeightedProblem<'_>,
    mode: CheckMode,
) -> Result<OrderedVerdict, CheckError> {
    let counts = wp.level_counts();
    let total: usize = counts.iter().product();
    match mode {
        CheckMode::Exhaustive { cap } => {
            let pairs = total.saturating_mul(total);
            if pairs > cap {
                return Err(CheckError::CapExceeded { needed: pairs, cap });
            }
            let mut all_levels = Vec::with_capacity(total);
            crate::model::for_each_index_tuple(&counts, |levels| {
                all_levels.push(levels.to_vec());
                true
            });
            let mut checked = 0;
            for a in &all_levels {
                for b in &all_levels {
                    checked += 1;
                    if let Some(v) = ordered_violation(wp, a, b) {
                        return Ok(OrderedVerdict::Fail {
                            levels_a: a.clone(),
                            levels_b: b.clone(),
                            violation: v,
                        });
                    }
                }
            }
            Ok(OrderedVerdict::Pass { checked })
        }
        CheckMode::Sampled { trials, seed } => {
            let mut rng = Rng::new(seed).split(0x6f726473); // "ords"
            for _ in 0..trials {
                let a: Vec<usize> = counts.iter().map(|&k| rng.next_index(k)).collect();
                let b: Vec<usize> = counts.iter().map(|&k| rng.next_index(k)).collect();
                if let Some(v) = ordered_violation(wp, &a, &b) {
                    return Ok(OrderedVerdict::Fail {
                        levels_a: a,
                        levels_b: b,
                        violation: v,
                    });
                }
            }
            Ok(OrderedVerdict::NoViolationFound { trials })
        }
    }
}

fn ordered_violation(wp: &WeightedProblem<'_>, a: &[usize], b: &[usize]) -> Option<f64> {
    let hi: Vec<usize> = a.iter().zip(b).map(|(x, y)| *x.max(y)).collect();
    let lo: Vec<usize> = a.iter().zip(b).map(|(x, y)| *x.min(y)).collect();
    let lhs = wp.h(&hi) + wp.h(&lo);
    let rhs = wp.h(a) + wp.h(b);
    if lhs < rhs - rewards::PROPERTY_TOL {
        Some(rhs - lhs)
    } else {
        None
    }
}

#[derive(Debug, Clone)]
pub struct LatticeSolution {
    pub levels: Vec<usize>,
    pub value: f64,
    /// Penalty violations of the raw minimizer (zero on every healthy run).
    pub violations: usize,
}

#[derive(Debug, Error)]
pub enum SupermodError {
    #[error(transparent)]
    Sfm(#[from] SfmError),
    #[error("decoded value {decoded} disagrees with the lattice objective {direct}")]
    ValueMismatch { decoded: f64, direct: f64 },
}

/// Maximize the ordered-supermodular lattice objective by threshold encoding
/// plus submodular minimization. The caller guarantees the structural
/// preconditions; the decoded value is cross-checked against a direct
/// objective evaluation.
pub fn maximize_ordered_supermodular(
    wp: &WeightedProblem<'_>,
) -> Result<LatticeSolution, SupermodError> {
    let counts = wp.level_counts();
    let penalty = 4.0 * (1.0 + wp.n() as f64 + wp.max_weight_sum());
    let enc = ThresholdEncoding::new(counts, penalty);
    let objective = |mask: &[bool]| -> f64 {
        let levels = enc.levels(mask);
        -wp.h(&levels) + enc.penalty * enc.violations(mask) as f64
    };
    let sfm = sfm_min_norm(objective, enc.ground_size(), 1e-9)?;
    let violations = enc.violations(&sfm.minimizer);
    let levels = enc.levels(&sfm.minimizer);
    let value = -sfm.value + enc.penalty * violations as f64;
    let direct = wp.h(&levels);
    if (value - direct).abs() > 1e-6 {
        return Err(SupermodError::ValueMismatch {
            decoded: value,
            direct,
        });
    }
    Ok(LatticeSolution {
        levels,
        value: direct,
        violations,
    })
}

// ---------------------------------------------------------------------------
// End-to-end solver
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct SolveOptions {
    pub reward_mode: RewardMode,
    /// Trust declared structural tags instead of re-verifying by sampling.
    pub trust_tags: bool,
    pub property_trials: usize,
    pub seed: u64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            reward_mode: RewardMode::default(),
            trust_tags: false,
            property_trials: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IrFosdResult {
    pub profile: Vec<usize>,
    pub value: f64,
    pub contract: Contract,
    /// Prefix violations of the raw minimizer; zero on every healthy run.
    pub ring_violations: usize,
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("instance fails the stochastic-dominance condition (agent {agent}, actions {pair:?})")]
    FosdRefusal {
        agent: usize,
        pair: (usize, usize),
        comprehensive_set: Option<Vec<usize>>,
    },
    #[error("reward is not increasing-return supermodular (sampled violation found)")]
    NotIrSupermodular,
    #[error(transparent)]
    Supermod(#[from] SupermodError),
    #[error(transparent)]
    Matroid(#[from] MatroidError),
    #[error(transparent)]
    Lp(#[from] crate::lp::LpError),
    #[error(transparent)]
    Check(#[from] CheckError),
}

/// Exact optimal contract for instances with an increasing-return
/// supermodular reward satisfying stochastic dominance. Refuses explicitly
/// when the dominance check fails, so callers can fall back to brute force.
pub fn solve_ir_fosd(inst: &Instance, opts: &SolveOptions) -> Result<IrFosdResult, SolveError> {
    match rewards::check_fosd(inst)? {
        FosdVerdict::Pass { .. } => {}
        FosdVerdict::Fail {
            agent,
            pair,
            comprehensive_set,
        } => {
            return Err(SolveError::FosdRefusal {
                agent,
                pair,
                comprehensive_set,
            })
        }
    }
    if !opts.trust_tags || !inst.reward.has_tag(StructuralTag::IrSupermodular) {
        let verdict = rewards::check_property(
            inst,
            Property::IrSupermodular,
            CheckMode::Sampled {
                trials: opts.property_trials,
                seed: opts.seed,
            },
        )?;
        if let PropertyVerdict::Fail { .. } = verdict {
            return Err(SolveError::NotIrSupermodular);
        }
    }
    let pp = build_partition_problem(inst)?;
    let eval = RewardEvaluator::new(inst, opts.reward_mode);
    // Elements whose minimum payment exceeds the whole reward range can
    // never be optimal (swapping that agent to the free null action always
    // gains); dropping them also keeps the penalty scale of the threshold
    // encoding small, which the norm-point iteration needs.
    let kept = prune_expensive_levels(
        &pp.parts
            .iter()
            .map(|p| p.iter().map(|e| (e.action, e.weight)).collect::<Vec<_>>())
            .collect::<Vec<_>>(),
    );
    let parts: Vec<Vec<(usize, f64)>> = pp
        .parts
        .iter()
        .zip(&kept)
        .map(|(p, ks)| ks.iter().map(|&k| (p[k].action, p[k].weight)).collect())
        .collect();
    let wp = WeightedProblem::new(parts, Box::new(|profile: &[usize]| eval.eval(profile)));
    let sol = maximize_ordered_supermodular(&wp)?;
    let set: IndependentSet = sol
        .levels
        .iter()
        .enumerate()
        .map(|(i, &l)| Some(kept[i][l]))
        .collect();
    let profile = pp.profile(&set);
    let contract = contract_from_set(inst, &pp, &set)?;
    Ok(IrFosdResult {
        profile,
        value: sol.value,
        contract,
        ring_violations: sol.violations,
    })
}

/// Kept positions per part: the null fallback plus every element whose
/// weight premium over the null element stays within the unit reward range.
pub(crate) fn prune_expensive_levels(parts: &[Vec<(usize, f64)>]) -> Vec<Vec<usize>> {
    parts
        .iter()
        .map(|p| {
            let null_weight = p[0].1;
            (0..p.len())
                .filter(|&k| k == 0 || p[k].1 - null_weight <= 1.0)
                .collect()
        })
        .collect()
}
