//! Succinct reward functions over stacked outcome tuples, plus verifiers for
//! the structural properties the solvers rely on (monotonicity, diminishing
//! and increasing returns, stochastic dominance between action distributions).
//!
//! A reward function maps a stacked tuple of `n` individual `q`-dimensional
//! outcome vectors (a slice of length `n*q`) to a real value. On tuples drawn
//! from the instance's outcome space the value must lie in `[0, 1]`; outside
//! that grid the built-in families remain well defined on the whole
//! nonnegative orthant, which is what the extension machinery in
//! [`crate::submod`] needs.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lp::{self, LinearProgram, LpOutcome, Relation, Sense};
use crate::model::{for_each_profile_tuple, Instance};
use crate::rng::Rng;

/// Absolute tolerance for structural property checks: a violation must exceed
/// this to count, so float noise on exact-equality families does not trip the
/// verdict.
pub const PROPERTY_TOL: f64 = 1e-9;

/// Structural tags a reward family may declare. Solvers re-verify by sampling
/// unless told to trust the declaration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StructuralTag {
    Increasing,
    DrSubmodular,
    IrSupermodular,
}

#[derive(Debug, Error)]
pub enum RewardError {
    #[error("custom_table lookup miss: tuple does not match any outcome-index combination")]
    TableMiss,
    #[error("reward spec invalid: {0}")]
    Invalid(String),
}

/// An undirected edge between two agents, used by the coverage family.
pub type Edge = (usize, usize);

/// A succinct reward function family with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum RewardFamily {
    /// `clamp_[0,1](sum_i w . omega_i)` with `w >= 0` shared across agents.
    Linear { weights: Vec<f64> },
    /// `min(budget, sum_i w . omega_i) / budget`.
    BudgetAdditive { weights: Vec<f64>, budget: f64 },
    /// `sum_{(u,v) in E} max(omega_u / k_u, omega_v / k_v) / |E|` over scalar
    /// outcomes, `k_u` the degree of agent `u`.
    CoverageMax { edges: Vec<Edge> },
    /// `(e^{kappa sum omega} - 1) / (e^{kappa cap} - 1)`.
    ExpSum { kappa: f64, cap: f64 },
    /// Smoothed label-cover gadget reward: for each edge `(u, v)` and label
    /// `s`, a term `e^{M (omega_{u,s} + omega_{v, pi_e(s)} - 2)}`, summed and
    /// normalized so the value stays within `[0, 1]` on unit-vector outcomes.
    LabelCoverSmooth {
        edges: Vec<Edge>,
        /// `constraints[e][s]` is the label required on the right endpoint of
        /// edge `e` when the left endpoint plays label `s`.
        constraints: Vec<Vec<usize>>,
        smoothing: f64,
    },
    /// Explicit value per outcome-index tuple (row-major, agent 0 most
    /// significant). Only viable when `m^n` is small.
    CustomTable {
        outcomes: Vec<Vec<f64>>,
        table: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardSpec {
    pub family: RewardFamily,
    pub declared_tags: Vec<StructuralTag>,
}

impl RewardSpec {
    pub fn new(family: RewardFamily) -> Self {
        let declared_tags = family.default_tags();
        RewardSpec {
            family,
            declared_tags,
        }
    }

    /// Evaluate the reward on a stacked tuple of `n` outcome vectors of
    /// dimension `q` (slice length `n*q`).
    pub fn eval(&self, stacked: &[f64], q: usize) -> Result<f64, RewardError> {
        self.family.eval(stacked, q)
    }

    pub fn has_tag(&self, tag: StructuralTag) -> bool {
        self.declared_tags.contains(&tag)
    }
}

impl RewardFamily {
    pub fn name(&self) -> &'static str {
        match self {
            RewardFamily::Linear { .. } => "linear",
            RewardFamily::BudgetAdditive { .. } => "budget_additive",
            RewardFamily::CoverageMax { .. } => "coverage_max",
            RewardFamily::ExpSum { .. } => "exp_sum",
            RewardFamily::LabelCoverSmooth { .. } => "label_cover_smooth",
            RewardFamily::CustomTable { .. } => "custom_table",
        }
    }

    pub fn default_tags(&self) -> Vec<StructuralTag> {
        use StructuralTag::*;
        match self {
            RewardFamily::Linear { .. } => vec![Increasing, DrSubmodular, IrSupermodular],
            RewardFamily::BudgetAdditive { .. } => vec![Increasing, DrSubmodular],
            RewardFamily::CoverageMax { .. } => vec![Increasing, DrSubmodular],
            RewardFamily::ExpSum { .. } => vec![Increasing, IrSupermodular],
            RewardFamily::LabelCoverSmooth { .. } => vec![Increasing, IrSupermodular],
            RewardFamily::CustomTable { .. } => vec![],
        }
    }

    pub fn eval(&self, stacked: &[f64], q: usize) -> Result<f64, RewardError> {
        debug_assert!(q > 0 && stacked.len().is_multiple_of(q));
        match self {
            RewardFamily::Linear { weights } => {
                let s = weighted_sum(stacked, q, weights);
                Ok(s.clamp(0.0, 1.0))
            }
            RewardFamily::BudgetAdditive { weights, budget } => {
                let s = weighted_sum(stacked, q, weights);
                Ok(s.min(*budget) / budget)
            }
            RewardFamily::CoverageMax { edges } => {
                debug_assert_eq!(q, 1);
                let deg = degrees(edges, stacked.len());
                let mut total = 0.0;
                for &(u, v) in edges {
                    total += (stacked[u] / deg[u] as f64).max(stacked[v] / deg[v] as f64);
                }
                Ok(total / edges.len() as f64)
            }
            RewardFamily::ExpSum { kappa, cap } => {
                let s: f64 = stacked.iter().sum();
                Ok(((kappa * s).exp() - 1.0) / ((kappa * cap).exp() - 1.0))
            }
            RewardFamily::LabelCoverSmooth {
                edges,
                constraints,
                smoothing,
            } => {
                let m_ = *smoothing;
                let k = q; // one outcome dimension per label
                let mut total = 0.0;
                for (e, &(u, v)) in edges.iter().enumerate() {
                    for s in 0..k {
                        let wu = stacked[u * q + s];
                        let wv = stacked[v * q + constraints[e][s]];
                        total += (m_ * (wu + wv - 2.0)).exp();
                    }
                }
                // Per-edge maximum over unit-vector outcomes is
                // 1 + (k - 1) e^{-M}; normalizing by it keeps values in [0,1].
                let norm = edges.len() as f64 * (1.0 + (k as f64 - 1.0) * (-m_).exp());
                Ok(total / norm)
            }
            RewardFamily::CustomTable { outcomes, table } => {
                let n = stacked.len() / q;
                let m = outcomes.len();
                let mut idx = 0usize;
                for i in 0..n {
                    let sub = &stacked[i * q..(i + 1) * q];
                    let j = outcomes
                        .iter()
                        .position(|o| o.iter().zip(sub).all(|(a, b)| (a - b).abs() <= 1e-12))
                        .ok_or(RewardError::TableMiss)?;
                    idx = idx * m + j;
                }
                table.get(idx).copied().ok_or(RewardError::TableMiss)
            }
        }
    }
}

fn weighted_sum(stacked: &[f64], q: usize, weights: &[f64]) -> f64 {
    stacked
        .chunks_exact(q)
        .map(|chunk| chunk.iter().zip(weights).map(|(x, w)| x * w).sum::<f64>())
        .sum()
}

fn degrees(edges: &[Edge], n: usize) -> Vec<usize> {
    let mut deg = vec![0usize; n];
    for &(u, v) in edges {
        deg[u] += 1;
        deg[v] += 1;
    }
    deg
}

// ---------------------------------------------------------------------------
// Structural property checks
// ---------------------------------------------------------------------------

/// Which structural property to verify.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Property {
    Increasing,
    DrSubmodular,
    IrSupermodular,
}

impl Property {
    pub fn tag(self) -> StructuralTag {
        match self {
            Property::Increasing => StructuralTag::Increasing,
            Property::DrSubmodular => StructuralTag::DrSubmodular,
            Property::IrSupermodular => StructuralTag::IrSupermodular,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum CheckMode {
    /// Enumerate every test pair/triple from the tuple lattice; errors out if
    /// the count exceeds the cap.
    Exhaustive {
        cap: usize,
    },
    Sampled {
        trials: usize,
        seed: u64,
    },
}

/// A concrete counterexample to one of the structural properties.
#[derive(Debug, Clone)]
pub struct PropertyWitness {
    pub base: Vec<f64>,
    pub dominating: Vec<f64>,
    pub increment: Vec<f64>,
    pub violation: f64,
}

#[derive(Debug, Clone)]
pub enum PropertyVerdict {
    Pass { checked: usize },
    Fail { witness: PropertyWitness },
    NoViolationFound { trials: usize },
}

impl PropertyVerdict {
    pub fn passed(&self) -> bool {
        !matches!(self, PropertyVerdict::Fail { .. })
    }
}

#[derive(Debug, Error)]
pub enum CheckError {
    #[error("exhaustive check needs {needed} evaluations, above the cap {cap}")]
    CapExceeded { needed: usize, cap: usize },
    #[error(transparent)]
    Reward(#[from] RewardError),
}

/// Verify a structural property of the instance's reward on the lattice
/// generated by the outcome tuples.
///
/// The diminishing/increasing-return inequality is tested on triples
/// `(base, dominating, increment)` with `base <= dominating` component-wise:
/// DR requires `g(base + inc) - g(base) >= g(dominating + inc) - g(dominating)`
/// and IR requires the reverse. Test points stay inside the bounding box of
/// the tuple lattice, the region the solvers actually evaluate on.
/// Monotonicity is tested on comparable pairs.
pub fn check_property(
    inst: &Instance,
    property: Property,
    mode: CheckMode,
) -> Result<PropertyVerdict, CheckError> {
    let q = inst.outcome_space.q;
    let n = inst.n();
    let box_max = lattice_box(inst);
    match mode {
        CheckMode::Exhaustive { cap } => {
            if let Some(t) = inst.tuple_count() {
                if t > cap {
                    return Err(CheckError::CapExceeded { needed: t, cap });
                }
            }
            let tuples = collect_tuples(inst);
            let mut comparable: Vec<(usize, usize)> = Vec::new();
            for (a, ta) in tuples.iter().enumerate() {
                for (b, tb) in tuples.iter().enumerate() {
                    if leq(ta, tb) {
                        comparable.push((a, b));
                    }
                }
            }
            let needed = match property {
                Property::Increasing => comparable.len(),
                _ => comparable.len().saturating_mul(tuples.len()),
            };
            if needed > cap {
                return Err(CheckError::CapExceeded { needed, cap });
            }
            let mut checked = 0usize;
            match property {
                Property::Increasing => {
                    for &(lo, hi) in &comparable {
                        checked += 1;
                        let g_lo = inst.reward.eval(&tuples[lo], q)?;
                        let g_hi = inst.reward.eval(&tuples[hi], q)?;
                        if g_hi < g_lo - PROPERTY_TOL {
                            return Ok(PropertyVerdict::Fail {
                                witness: PropertyWitness {
                                    base: tuples[lo].clone(),
                                    dominating: tuples[hi].clone(),
                                    increment: vec![0.0; n * q],
                                    violation: g_lo - g_hi,
                                },
                            });
                        }
                    }
                }
                Property::DrSubmodular | Property::IrSupermodular => {
                    for &(lo, hi) in &comparable {
                        for inc in &tuples {
                            if !within_box(&tuples[hi], inc, &box_max) {
                                continue;
                            }
                            checked += 1;
                            if let Some(witness) =
                                dr_violation(inst, &tuples[lo], &tuples[hi], inc, property)?
                            {
                                return Ok(PropertyVerdict::Fail { witness });
                            }
                        }
                    }
                }
            }
            Ok(PropertyVerdict::Pass { checked })
        }
        CheckMode::Sampled { trials, seed } => {
            let mut rng = Rng::new(seed).split(0x70726f70); // "prop"
            let mut scratch_a = vec![0.0; n * q];
            let mut scratch_b = vec![0.0; n * q];
            for _ in 0..trials {
                sample_tuple(inst, &mut rng, &mut scratch_a);
                sample_tuple(inst, &mut rng, &mut scratch_b);
                let lo: Vec<f64> = scratch_a
                    .iter()
                    .zip(&scratch_b)
                    .map(|(a, b)| a.min(*b))
                    .collect();
                let hi: Vec<f64> = scratch_a
                    .iter()
                    .zip(&scratch_b)
                    .map(|(a, b)| a.max(*b))
                    .collect();
                match property {
                    Property::Increasing => {
                        let g_lo = inst.reward.eval(&lo, q)?;
                        let g_hi = inst.reward.eval(&hi, q)?;
                        if g_hi < g_lo - PROPERTY_TOL {
                            return Ok(PropertyVerdict::Fail {
                                witness: PropertyWitness {
                                    base: lo,
                                    dominating: hi,
                                    increment: vec![0.0; n * q],
                                    violation: g_lo - g_hi,
                                },
                            });
                        }
                    }
                    _ => {
                        let mut inc = vec![0.0; n * q];
                        let mut found = false;
                        for _ in 0..20 {
                            sample_tuple(inst, &mut rng, &mut inc);
                            if within_box(&hi, &inc, &box_max) {
                                found = true;
                                break;
                            }
                        }
                        if !found {
                            inc.fill(0.0);
                        }
                        if let Some(witness) = dr_violation(inst, &lo, &hi, &inc, property)? {
                            return Ok(PropertyVerdict::Fail { witness });
                        }
                    }
                }
            }
            Ok(PropertyVerdict::NoViolationFound { trials })
        }
    }
}

fn dr_violation(
    inst: &Instance,
    lo: &[f64],
    hi: &[f64],
    inc: &[f64],
    property: Property,
) -> Result<Option<PropertyWitness>, RewardError> {
    let q = inst.outcome_space.q;
    let lo_inc: Vec<f64> = lo.iter().zip(inc).map(|(a, b)| a + b).collect();
    let hi_inc: Vec<f64> = hi.iter().zip(inc).map(|(a, b)| a + b).collect();
    let marg_lo = inst.reward.eval(&lo_inc, q)? - inst.reward.eval(lo, q)?;
    let marg_hi = inst.reward.eval(&hi_inc, q)? - inst.reward.eval(hi, q)?;
    let violation = match property {
        Property::DrSubmodular => marg_hi - marg_lo,
        Property::IrSupermodular => marg_lo - marg_hi,
        Property::Increasing => unreachable!(),
    };
    if violation > PROPERTY_TOL {
        Ok(Some(PropertyWitness {
            base: lo.to_vec(),
            dominating: hi.to_vec(),
            increment: inc.to_vec(),
            violation,
        }))
    } else {
        Ok(None)
    }
}

/// Component-wise maximum of the tuple lattice, stacked per agent.
fn lattice_box(inst: &Instance) -> Vec<f64> {
    let q = inst.outcome_space.q;
    let mut per_outcome = vec![0.0f64; q];
    for o in &inst.outcome_space.outcomes {
        for (d, &x) in o.iter().enumerate() {
            per_outcome[d] = per_outcome[d].max(x);
        }
    }
    (0..inst.n())
        .flat_map(|_| per_outcome.iter().copied())
        .collect()
}

fn within_box(base: &[f64], inc: &[f64], box_max: &[f64]) -> bool {
    base.iter()
        .zip(inc)
        .zip(box_max)
        .all(|((b, i), m)| b + i <= m + 1e-12)
}

fn collect_tuples(inst: &Instance) -> Vec<Vec<f64>> {
    let mut tuples = Vec::new();
    for_each_profile_tuple(inst, |stacked| {
        tuples.push(stacked.to_vec());
        true
    });
    tuples
}

fn sample_tuple(inst: &Instance, rng: &mut Rng, out: &mut [f64]) {
    let q = inst.outcome_space.q;
    for i in 0..inst.n() {
        let j = rng.next_index(inst.m());
        out[i * q..(i + 1) * q].copy_from_slice(&inst.outcome_space.outcomes[j]);
    }
}

// ---------------------------------------------------------------------------
// First-order stochastic dominance
// ---------------------------------------------------------------------------

/// Canonical per-agent action ordering: null action first, then ascending
/// cost, ties broken by original index. Returns original action indices.
pub fn canonical_action_order(inst: &Instance, agent: usize) -> Vec<usize> {
    let spec = &inst.agents[agent];
    canonical_order_raw(&spec.costs, spec.null_action)
}

pub fn canonical_order_raw(costs: &[f64], null_action: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..costs.len()).collect();
    order.sort_by(|&a, &b| {
        let key = |x: usize| (x != null_action, costs[x], x);
        key(a)
            .partial_cmp(&key(b))
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    order
}

/// Sparse transport flow entries `(from_outcome, to_outcome, mass)`.
pub type TransportFlow = Vec<(usize, usize, f64)>;

/// A downward mass-transport witness between consecutive actions: flow
/// `x[(from, to)]` with `outcome[to] >= outcome[from]` component-wise,
/// row-marginals equal to the cheaper action's distribution and
/// column-marginals equal to the costlier action's distribution.
#[derive(Debug, Clone)]
pub struct TransportWitness {
    pub agent: usize,
    /// Original action indices (cheaper, costlier) in canonical order.
    pub pair: (usize, usize),
    pub flow: TransportFlow,
}

#[derive(Debug, Clone)]
pub enum FosdVerdict {
    /// Holds, with one transport witness per consecutive pair.
    Pass { witnesses: Vec<TransportWitness> },
    Fail {
        agent: usize,
        pair: (usize, usize),
        /// A comprehensive outcome set violating the dominance inequality,
        /// if one was recovered (always available for small outcome spaces).
        comprehensive_set: Option<Vec<usize>>,
    },
}

impl FosdVerdict {
    pub fn passed(&self) -> bool {
        matches!(self, FosdVerdict::Pass { .. })
    }
}

/// Decide the FOSD condition by solving, for every agent and consecutive pair
/// of actions in canonical order, the downward-transport feasibility problem.
pub fn check_fosd(inst: &Instance) -> Result<FosdVerdict, lp::LpError> {
    let mut witnesses = Vec::new();
    for i in 0..inst.n() {
        let order = canonical_action_order(inst, i);
        for w in order.windows(2) {
            let (cheap, costly) = (w[0], w[1]);
            match transport_flow(inst, i, cheap, costly)? {
                Some(flow) => witnesses.push(TransportWitness {
                    agent: i,
                    pair: (cheap, costly),
                    flow,
                }),
                None => {
                    let comprehensive_set = if inst.m() <= 12 {
                        find_violating_comprehensive_set(inst, i, cheap, costly)
                    } else {
                        None
                    };
                    return Ok(FosdVerdict::Fail {
                        agent: i,
                        pair: (cheap, costly),
                        comprehensive_set,
                    });
                }
            }
        }
    }
    Ok(FosdVerdict::Pass { witnesses })
}

/// Does the dominance chain hold for one typed agent's action list? Used by
/// the Bayesian pipeline, which checks each (agent, type) independently.
pub fn fosd_holds_for_agent(
    outcomes: &[Vec<f64>],
    costs: &[f64],
    dists: &[Vec<f64>],
    null_action: usize,
) -> Result<bool, lp::LpError> {
    let order = canonical_order_raw(costs, null_action);
    for w in order.windows(2) {
        if transport_flow_raw(outcomes, &dists[w[0]], &dists[w[1]])?.is_none() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Feasibility LP for one pair: variables per (from, to) with
/// `outcome[to] >= outcome[from]`, row sums = cheap dist, column sums =
/// costly dist.
fn transport_flow(
    inst: &Instance,
    agent: usize,
    cheap: usize,
    costly: usize,
) -> Result<Option<TransportFlow>, lp::LpError> {
    transport_flow_raw(
        &inst.outcome_space.outcomes,
        &inst.agents[agent].dists[cheap],
        &inst.agents[agent].dists[costly],
    )
}

fn transport_flow_raw(
    outcomes: &[Vec<f64>],
    f_cheap: &[f64],
    f_costly: &[f64],
) -> Result<Option<TransportFlow>, lp::LpError> {
    let m = outcomes.len();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for from in 0..m {
        for to in 0..m {
            if leq(&outcomes[from], &outcomes[to]) {
                pairs.push((from, to));
            }
        }
    }
    let nv = pairs.len();
    let mut rows = Vec::with_capacity(2 * m);
    for from in 0..m {
        let mut coeffs = vec![0.0; nv];
        for (k, &(a, _)) in pairs.iter().enumerate() {
            if a == from {
                coeffs[k] = 1.0;
            }
        }
        rows.push(lp::Row {
            coeffs,
            rel: Relation::Eq,
            rhs: f_cheap[from],
        });
    }
    for to in 0..m {
        let mut coeffs = vec![0.0; nv];
        for (k, &(_, b)) in pairs.iter().enumerate() {
            if b == to {
                coeffs[k] = 1.0;
            }
        }
        rows.push(lp::Row {
            coeffs,
            rel: Relation::Eq,
            rhs: f_costly[to],
        });
    }
    let lp = LinearProgram {
        sense: Sense::Min,
        objective: vec![0.0; nv],
        rows,
        lower: vec![0.0; nv],
        upper: vec![f64::INFINITY; nv],
    };
    match lp::solve_lp(&lp)? {
        LpOutcome::Optimal { point, .. } => {
            let flow = pairs
                .into_iter()
                .zip(point)
                .filter(|&(_, x)| x > 1e-12)
                .map(|((a, b), x)| (a, b, x))
                .collect();
            Ok(Some(flow))
        }
        LpOutcome::Infeasible { .. } => Ok(None),
        LpOutcome::Unbounded { .. } => unreachable!("feasibility problem cannot be unbounded"),
    }
}

fn find_violating_comprehensive_set(
    inst: &Instance,
    agent: usize,
    cheap: usize,
    costly: usize,
) -> Option<Vec<usize>> {
    let f_cheap = &inst.agents[agent].dists[cheap];
    let f_costly = &inst.agents[agent].dists[costly];
    for set in comprehensive_sets(&inst.outcome_space.outcomes) {
        let lo: f64 = set.iter().map(|&j| f_cheap[j]).sum();
        let hi: f64 = set.iter().map(|&j| f_costly[j]).sum();
        if hi > lo + 1e-9 {
            return Some(set);
        }
    }
    None
}

/// All comprehensive (downward-closed under component-wise order) subsets of
/// the outcome list, as sorted index vectors.
pub fn comprehensive_sets(outcomes: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let m = outcomes.len();
    assert!(m <= 20, "comprehensive-set enumeration needs small m");
    let mut result = Vec::new();
    'mask: for mask in 0u32..(1u32 << m) {
        for j in 0..m {
            if mask & (1 << j) != 0 {
                for k in 0..m {
                    if k != j && leq(&outcomes[k], &outcomes[j]) && mask & (1 << k) == 0 {
                        continue 'mask;
                    }
                }
            }
        }
        result.push((0..m).filter(|&j| mask & (1 << j) != 0).collect());
    }
    result
}

#[derive(Debug, Error)]
pub enum FosdBruteError {
    #[error("brute-force FOSD check supports at most 12 outcomes, got {0}")]
    TooLarge(usize),
}

/// Ground-truth FOSD verdict by enumerating every comprehensive set.
pub fn fosd_bruteforce(inst: &Instance) -> Result<FosdVerdict, FosdBruteError> {
    let m = inst.m();
    if m > 12 {
        return Err(FosdBruteError::TooLarge(m));
    }
    let sets = comprehensive_sets(&inst.outcome_space.outcomes);
    for i in 0..inst.n() {
        let order = canonical_action_order(inst, i);
        for w in order.windows(2) {
            let (cheap, costly) = (w[0], w[1]);
            let f_cheap = &inst.agents[i].dists[cheap];
            let f_costly = &inst.agents[i].dists[costly];
            for set in &sets {
                let lo: f64 = set.iter().map(|&j| f_cheap[j]).sum();
                let hi: f64 = set.iter().map(|&j| f_costly[j]).sum();
                if hi > lo + 1e-9 {
                    return Ok(FosdVerdict::Fail {
                        agent: i,
                        pair: (cheap, costly),
                        comprehensive_set: Some(set.clone()),
                    });
                }
            }
        }
    }
    Ok(FosdVerdict::Pass {
        witnesses: Vec::new(),
    })
}

pub(crate) fn leq(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y)
}

// ---------------------------------------------------------------------------
// JSON encoding of reward specs
// ---------------------------------------------------------------------------

impl RewardSpec {
    pub fn to_json(&self) -> serde_json::Value {
        use serde_json::json;
        let params = match &self.family {
            RewardFamily::Linear { weights } => json!({ "weights": weights }),
            RewardFamily::BudgetAdditive { weights, budget } => {
                json!({ "weights": weights, "budget": budget })
            }
            RewardFamily::CoverageMax { edges } => json!({ "edges": edges }),
            RewardFamily::ExpSum { kappa, cap } => json!({ "kappa": kappa, "cap": cap }),
            RewardFamily::LabelCoverSmooth {
                edges,
                constraints,
                smoothing,
            } => json!({ "edges": edges, "constraints": constraints, "smoothing": smoothing }),
            RewardFamily::CustomTable { outcomes, table } => {
                json!({ "outcomes": outcomes, "table": table })
            }
        };
        serde_json::json!({
            "family": self.family.name(),
            "params": params,
            "tags": self.declared_tags,
        })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, String> {
        let family_name = value
            .get("family")
            .and_then(|v| v.as_str())
            .ok_or("reward: missing string field 'family'")?;
        let params = value
            .get("params")
            .cloned()
            .unwrap_or(serde_json::json!({}));
        let family = match family_name {
            "linear" => RewardFamily::Linear {
                weights: num_vec(&params, "weights")?,
            },
            "budget_additive" => RewardFamily::BudgetAdditive {
                weights: num_vec(&params, "weights")?,
                budget: num_field(&params, "budget")?,
            },
            "coverage_max" => RewardFamily::CoverageMax {
                edges: edge_vec(&params, "edges")?,
            },
            "exp_sum" => RewardFamily::ExpSum {
                kappa: num_field(&params, "kappa")?,
                cap: num_field(&params, "cap")?,
            },
            "label_cover_smooth" => RewardFamily::LabelCoverSmooth {
                edges: edge_vec(&params, "edges")?,
                constraints: index_matrix(&params, "constraints")?,
                smoothing: num_field(&params, "smoothing")?,
            },
            "custom_table" => RewardFamily::CustomTable {
                outcomes: num_matrix(&params, "outcomes")?,
                table: num_vec(&params, "table")?,
            },
            other => return Err(format!("reward: unknown family '{other}'")),
        };
        let declared_tags = match value.get("tags") {
            None => family.default_tags(),
            Some(v) => {
                serde_json::from_value(v.clone()).map_err(|e| format!("reward: bad tags: {e}"))?
            }
        };
        Ok(RewardSpec {
            family,
            declared_tags,
        })
    }
}

/// Accept JSON numbers or decimal strings, so instance files can pin exact
/// decimal text independent of the producing language.
pub fn parse_json_number(v: &serde_json::Value) -> Result<f64, String> {
    match v {
        serde_json::Value::Number(x) => x
            .as_f64()
            .ok_or_else(|| format!("number out of f64 range: {x}")),
        serde_json::Value::String(s) => s
            .parse::<f64>()
            .map_err(|_| format!("not a decimal number: '{s}'")),
        other => Err(format!("expected number, got {other}")),
    }
}

fn num_field(params: &serde_json::Value, key: &str) -> Result<f64, String> {
    params
        .get(key)
        .ok_or_else(|| format!("reward params: missing '{key}'"))
        .and_then(parse_json_number)
}

fn num_vec(params: &serde_json::Value, key: &str) -> Result<Vec<f64>, String> {
    params
        .get(key)
        .and_then(|v| v.as_array())
        .ok_or_else(|| format!("reward params: missing array '{key}'"))?
        .iter()
        .map(parse_json_number)
        .collect()
}

fn num_matrix(params: &serde_json::Value, key: &str) -> Result<Vec<Vec<f64>>, String> {
    params
        .get(key)
        .and_then(|v| v.as_array())
        .ok_or_else(|| format!("reward params: missing array '{key}'"))?
        .iter()
        .map(|row| {
            row.as_array()
                .ok_or_else(|| format!("reward params: '{key}' rows must be arrays"))?
                .iter()
                .map(parse_json_number)
                .collect()
        })
        .collect()
}

fn index_matrix(params: &serde_json::Value, key: &str) -> Result<Vec<Vec<usize>>, String> {
    params
        .get(key)
        .and_then(|v| v.as_array())
        .ok_or_else(|| format!("reward params: missing array '{key}'"))?
        .iter()
        .map(|row| {
            row.as_array()
                .ok_or_else(|| format!("reward params: '{key}' rows must be arrays"))?
                .iter()
                .map(|v| {
                    v.as_u64()
                        .map(|x| x as usize)
                        .ok_or_else(|| format!("reward params: '{key}' entries must be indices"))
                })
                .collect()
        })
        .collect()
}

fn edge_vec(params: &serde_json::Value, key: &str) -> Result<Vec<Edge>, String> {
    let rows = index_matrix(params, key)?;
    rows.into_iter()
        .map(|r| {
            if r.len() == 2 {
                Ok((r[0], r[1]))
            } else {
                Err(format!("reward params: '{key}' entries must be pairs"))
            }
        })
        .collect()
}

/// Lookup table for custom rewards, keyed by outcome-index tuples in
/// row-major order (agent 0 most significant).
pub fn custom_table_index(indices: &[usize], m: usize) -> usize {
    indices.iter().fold(0, |acc, &j| acc * m + j)
}

/// Build a custom table from an evaluation closure over index tuples.
pub fn build_custom_table(
    outcomes: &[Vec<f64>],
    n: usize,
    mut value: impl FnMut(&[usize]) -> f64,
) -> RewardFamily {
    let m = outcomes.len();
    let total = m.pow(n as u32);
    let mut table = vec![0.0; total];
    let mut idx = vec![0usize; n];
    for flat in 0..total {
        let mut rem = flat;
        for i in (0..n).rev() {
            idx[i] = rem % m;
            rem /= m;
        }
        table[flat] = value(&idx);
    }
    RewardFamily::CustomTable {
        outcomes: outcomes.to_vec(),
        table,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::model::{AgentSpec, Instance, OutcomeSpace};

    #[test]
    fn eval_trivial_values() {
        let linear = RewardFamily::Linear { weights: vec![0.7] };
        assert_eq!(linear.eval(&[0.0, 0.0], 1).unwrap(), 0.0);

        let budget = RewardFamily::BudgetAdditive {
            weights: vec![1.0],
            budget: 1.0,
        };
        assert_eq!(budget.eval(&[0.4, 0.8], 1).unwrap(), 1.0);

        let exp = RewardFamily::ExpSum {
            kappa: 1.0,
            cap: 2.0,
        };
        assert!((exp.eval(&[1.0, 1.0], 1).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn custom_table_lookup_and_miss() {
        let family = build_custom_table(&[vec![0.0], vec![1.0]], 2, |idx| {
            (idx[0] + idx[1]) as f64 / 2.0
        });
        assert_eq!(family.eval(&[1.0, 0.0], 1).unwrap(), 0.5);
        assert!(matches!(
            family.eval(&[0.25, 0.0], 1),
            Err(RewardError::TableMiss)
        ));
        assert_eq!(custom_table_index(&[1, 0], 2), 2);
    }

    #[test]
    fn linear_family_passes_both_checks_exhaustively() {
        let inst = fixtures::t1();
        for prop in [
            Property::DrSubmodular,
            Property::IrSupermodular,
            Property::Increasing,
        ] {
            let verdict =
                check_property(&inst, prop, CheckMode::Exhaustive { cap: 100_000 }).unwrap();
            assert!(verdict.passed(), "{prop:?} failed on the linear family");
        }
    }

    #[test]
    fn exp_sum_exhaustively_ir_supermodular() {
        let mut inst = fixtures::two_agent_budget();
        inst.reward = RewardSpec::new(RewardFamily::ExpSum {
            kappa: 1.5,
            cap: 2.0,
        });
        let verdict = check_property(
            &inst,
            Property::IrSupermodular,
            CheckMode::Exhaustive { cap: 100_000 },
        )
        .unwrap();
        assert!(verdict.passed());
    }

    #[test]
    fn coverage_pair_splits_dr_from_ir() {
        let inst = fixtures::coverage_pair();
        let dr = check_property(
            &inst,
            Property::DrSubmodular,
            CheckMode::Exhaustive { cap: 100_000 },
        )
        .unwrap();
        assert!(dr.passed());
        let ir = check_property(
            &inst,
            Property::IrSupermodular,
            CheckMode::Exhaustive { cap: 100_000 },
        )
        .unwrap();
        match ir {
            PropertyVerdict::Fail { witness } => assert!(witness.violation > 1e-9),
            other => panic!("expected an IR witness, got {other:?}"),
        }
    }

    fn scalar_instance(dists: Vec<Vec<f64>>, costs: Vec<f64>) -> Instance {
        Instance {
            outcome_space: OutcomeSpace {
                q: 1,
                outcomes: vec![vec![0.0], vec![1.0]],
                null_index: Some(0),
            },
            agents: vec![AgentSpec {
                costs,
                dists,
                null_action: 0,
            }],
            reward: RewardSpec::new(RewardFamily::Linear { weights: vec![1.0] }),
        }
    }

    #[test]
    fn fosd_identity_flow_on_shared_distribution() {
        let inst = scalar_instance(vec![vec![0.5, 0.5], vec![0.5, 0.5]], vec![0.0, 0.3]);
        match check_fosd(&inst).unwrap() {
            FosdVerdict::Pass { witnesses } => {
                // The identity flow is diagonal.
                assert!(witnesses[0].flow.iter().all(|&(a, b, _)| a == b));
            }
            other => panic!("expected pass, got {other:?}"),
        }
    }

    #[test]
    fn fosd_upward_point_masses_pass() {
        let inst = scalar_instance(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![0.0, 0.4]);
        assert!(check_fosd(&inst).unwrap().passed());
        assert!(fosd_bruteforce(&inst).unwrap().passed());
    }

    #[test]
    fn fosd_downward_point_masses_fail_with_witness_set() {
        // The cheap action yields the high outcome, the costly one the low:
        // the comprehensive set {low} violates dominance.
        let inst = scalar_instance(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![0.0, 0.4]);
        match check_fosd(&inst).unwrap() {
            FosdVerdict::Fail {
                comprehensive_set, ..
            } => {
                assert_eq!(comprehensive_set, Some(vec![0]));
            }
            other => panic!("expected failure, got {other:?}"),
        }
        assert!(!fosd_bruteforce(&inst).unwrap().passed());
    }

    #[test]
    fn single_outcome_always_dominates() {
        let inst = Instance {
            outcome_space: OutcomeSpace {
                q: 1,
                outcomes: vec![vec![0.0]],
                null_index: Some(0),
            },
            agents: vec![AgentSpec {
                costs: vec![0.0, 0.2],
                dists: vec![vec![1.0], vec![1.0]],
                null_action: 0,
            }],
            reward: RewardSpec::new(RewardFamily::Linear { weights: vec![1.0] }),
        };
        assert!(fosd_bruteforce(&inst).unwrap().passed());
        assert!(check_fosd(&inst).unwrap().passed());
    }

    #[test]
    fn comprehensive_sets_of_a_chain_are_prefixes() {
        let outcomes = vec![vec![0.0], vec![0.5], vec![1.0]];
        let sets = comprehensive_sets(&outcomes);
        assert_eq!(sets.len(), 4); // {}, {0}, {0,1}, {0,1,2}
        for set in sets {
            let len = set.len();
            assert_eq!(set, (0..len).collect::<Vec<_>>());
        }
    }

    #[test]
    fn canonical_order_puts_null_before_cost_ties() {
        let order = canonical_order_raw(&[0.3, 0.0, 0.0, 0.1], 2);
        assert_eq!(order, vec![2, 1, 3, 0]);
    }
}
