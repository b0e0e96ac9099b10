//! Problem instances, contracts, and expected-reward evaluation.
//!
//! An instance couples `n` agents — each with the same action set and a
//! per-action cost and outcome distribution — with a shared outcome space and
//! a succinct reward over tuples of individual outcomes. Everything is
//! immutable after construction; evaluation routines are pure functions of
//! their inputs plus an explicit seed.

use serde_json::Value;
use thiserror::Error;

use crate::rewards::{parse_json_number, RewardError, RewardSpec};
use crate::rng::Rng;

/// Distribution sums must match 1 within this tolerance; within it the
/// distribution is renormalized, beyond it the instance is rejected. Silent
/// renormalization of larger gaps would hide data errors.
pub const PROB_TOL: f64 = 1e-9;

/// Default cap on the number of enumeration terms for exact expected rewards.
pub const DEFAULT_ENUM_CAP: usize = 1_000_000;

/// Cap under which validation checks the reward range by full enumeration
/// rather than sampling.
pub const VALIDATION_ENUM_CAP: usize = 4096;

#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeSpace {
    pub q: usize,
    pub outcomes: Vec<Vec<f64>>,
    /// Index of the all-zeros outcome, when the instance provides one. The
    /// extension machinery for diminishing-return rewards requires it.
    pub null_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub costs: Vec<f64>,
    /// `dists[a][w]` is the probability that action `a` yields outcome `w`.
    pub dists: Vec<Vec<f64>>,
    pub null_action: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub outcome_space: OutcomeSpace,
    pub agents: Vec<AgentSpec>,
    pub reward: RewardSpec,
}

/// Per-agent payment rows plus the recommended action profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Contract {
    /// `payments[i][w] >= 0`: limited liability.
    pub payments: Vec<Vec<f64>>,
    pub recommendations: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} violation(s):", self.violations.len())?;
        for v in &self.violations {
            write!(f, "\n  - {v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("validation failed: {0}")]
    Validation(ValidationReport),
}

impl std::error::Error for ValidationReport {}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("exact enumeration needs {needed} terms, above the cap {cap}; use Monte-Carlo")]
    EnumerationCap { needed: usize, cap: usize },
    #[error("profile has wrong length or an out-of-range action index")]
    BadProfile,
    #[error("contract dimensions do not match the instance")]
    DimensionMismatch,
    #[error(transparent)]
    Reward(#[from] RewardError),
}

impl Instance {
    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn m(&self) -> usize {
        self.outcome_space.outcomes.len()
    }

    pub fn ell(&self) -> usize {
        self.agents.first().map_or(0, |a| a.costs.len())
    }

    /// Number of terms a full enumeration of outcome tuples would visit.
    pub fn tuple_count(&self) -> Option<usize> {
        self.m().checked_pow(self.n() as u32)
    }

    pub fn validate(&self) -> Result<(), ValidationReport> {
        let mut report = ValidationReport::default();
        let os = &self.outcome_space;
        if os.q == 0 {
            report.violations.push("q must be positive".into());
        }
        if os.outcomes.is_empty() {
            report.violations.push("outcome list is empty".into());
        }
        for (j, o) in os.outcomes.iter().enumerate() {
            if o.len() != os.q {
                report
                    .violations
                    .push(format!("outcome {j} has dimension {} != q", o.len()));
            }
            if o.iter().any(|&x| x < 0.0 || !x.is_finite()) {
                report.violations.push(format!(
                    "outcome {j} has a negative or non-finite component"
                ));
            }
        }
        for j in 0..os.outcomes.len() {
            for k in (j + 1)..os.outcomes.len() {
                if os.outcomes[j] == os.outcomes[k] {
                    report
                        .violations
                        .push(format!("outcomes {j} and {k} are identical"));
                }
            }
        }
        if let Some(z) = os.null_index {
            if z >= os.outcomes.len() {
                report
                    .violations
                    .push(format!("null_outcome index {z} out of range"));
            } else if os.outcomes[z].iter().any(|&x| x != 0.0) {
                report
                    .violations
                    .push("null outcome must be exactly the zero vector".into());
            }
        }
        if self.agents.is_empty() {
            report
                .violations
                .push("instance needs at least one agent".into());
        }
        let ell = self.ell();
        for (i, ag) in self.agents.iter().enumerate() {
            if ag.costs.len() != ell || ag.dists.len() != ell {
                report.violations.push(format!(
                    "agent {i}: all agents must share the same number of actions"
                ));
            }
            if ag.costs.is_empty() {
                report.violations.push(format!("agent {i}: no actions"));
            }
            if ag.null_action >= ag.costs.len() {
                report
                    .violations
                    .push(format!("agent {i}: null_action index out of range"));
            } else if ag.costs[ag.null_action] != 0.0 {
                report.violations.push(format!(
                    "agent {i}: cost of the null action must be exactly 0"
                ));
            }
            for (a, &c) in ag.costs.iter().enumerate() {
                if !(0.0..=1.0).contains(&c) {
                    report
                        .violations
                        .push(format!("agent {i} action {a}: cost {c} out of range [0,1]"));
                }
            }
            for (a, dist) in ag.dists.iter().enumerate() {
                if dist.len() != os.outcomes.len() {
                    report.violations.push(format!(
                        "agent {i} action {a}: distribution length {} != m",
                        dist.len()
                    ));
                    continue;
                }
                if dist.iter().any(|&p| p < 0.0 || !p.is_finite()) {
                    report.violations.push(format!(
                        "agent {i} action {a}: distribution has a negative entry"
                    ));
                }
                let s: f64 = dist.iter().sum();
                if (s - 1.0).abs() > PROB_TOL {
                    report.violations.push(format!(
                        "agent {i} action {a}: distribution sum {s} differs from 1 beyond tolerance"
                    ));
                }
            }
        }
        if report.violations.is_empty() {
            self.check_reward_range(&mut report);
        }
        if report.violations.is_empty() {
            Ok(())
        } else {
            Err(report)
        }
    }

    /// Spot-check that the reward stays in `[0,1]` on outcome tuples: full
    /// enumeration below the cap, seeded sampling above it. Values of the
    /// reward function outside the tuple grid are allowed to leave `[0,1]`.
    fn check_reward_range(&self, report: &mut ValidationReport) {
        let q = self.outcome_space.q;
        let check = |stacked: &[f64], report: &mut ValidationReport| -> bool {
            match self.reward.eval(stacked, q) {
                Ok(v) if (-1e-9..=1.0 + 1e-9).contains(&v) => true,
                Ok(v) => {
                    report.violations.push(format!(
                        "reward value {v} outside [0,1] on an outcome tuple"
                    ));
                    false
                }
                Err(e) => {
                    report
                        .violations
                        .push(format!("reward evaluation failed: {e}"));
                    false
                }
            }
        };
        match self.tuple_count() {
            Some(t) if t <= VALIDATION_ENUM_CAP => {
                for_each_profile_tuple(self, |stacked| check(stacked, report));
            }
            _ => {
                let mut rng = Rng::new(0).split(0x76616c69); // "vali"
                let mut stacked = vec![0.0; self.n() * q];
                for _ in 0..1000 {
                    for i in 0..self.n() {
                        let j = rng.next_index(self.m());
                        stacked[i * q..(i + 1) * q]
                            .copy_from_slice(&self.outcome_space.outcomes[j]);
                    }
                    if !check(&stacked, report) {
                        break;
                    }
                }
            }
        }
    }

    /// Renormalize distributions whose sums sit within tolerance of 1.
    /// Sums already at machine precision are left untouched, so loading a
    /// file a second time cannot perturb it (digests stay stable).
    pub fn normalize(&mut self) {
        for ag in &mut self.agents {
            for dist in &mut ag.dists {
                let s: f64 = dist.iter().sum();
                if s > 0.0 && (s - 1.0).abs() > 1e-15 && (s - 1.0).abs() <= PROB_TOL {
                    for p in dist.iter_mut() {
                        *p /= s;
                    }
                }
            }
        }
    }
}

impl Contract {
    pub fn zero(inst: &Instance) -> Self {
        Contract {
            payments: vec![vec![0.0; inst.m()]; inst.n()],
            recommendations: inst.agents.iter().map(|a| a.null_action).collect(),
        }
    }

    pub fn matches(&self, inst: &Instance) -> bool {
        self.payments.len() == inst.n()
            && self.payments.iter().all(|row| row.len() == inst.m())
            && self.recommendations.len() == inst.n()
            && self.recommendations.iter().all(|&a| a < inst.ell())
    }

    /// Expected payment to agent `i` when it plays its recommended action.
    pub fn expected_payment(&self, inst: &Instance, i: usize) -> f64 {
        let a = self.recommendations[i];
        inst.agents[i].dists[a]
            .iter()
            .zip(&self.payments[i])
            .map(|(f, p)| f * p)
            .sum()
    }

    pub fn total_expected_payment(&self, inst: &Instance) -> f64 {
        (0..inst.n()).map(|i| self.expected_payment(inst, i)).sum()
    }

    pub fn to_json(&self) -> Value {
        serde_json::json!({
            "payments": self.payments,
            "recommendations": self.recommendations,
        })
    }

    pub fn from_json(v: &Value) -> Result<Self, String> {
        let payments = v
            .get("payments")
            .and_then(|x| x.as_array())
            .ok_or("contract: missing payments")?
            .iter()
            .map(|row| {
                row.as_array()
                    .ok_or_else(|| "contract: payment rows must be arrays".to_string())?
                    .iter()
                    .map(parse_json_number)
                    .collect()
            })
            .collect::<Result<Vec<Vec<f64>>, String>>()?;
        let recommendations = v
            .get("recommendations")
            .and_then(|x| x.as_array())
            .ok_or("contract: missing recommendations")?
            .iter()
            .map(|x| {
                x.as_u64()
                    .map(|u| u as usize)
                    .ok_or_else(|| "contract: recommendations must be indices".to_string())
            })
            .collect::<Result<Vec<usize>, String>>()?;
        Ok(Contract {
            payments,
            recommendations,
        })
    }
}

// ---------------------------------------------------------------------------
// Enumeration helpers
// ---------------------------------------------------------------------------

/// Visit every index tuple of the given radices in row-major order (last
/// coordinate fastest). The callback returns `false` to stop early.
pub fn for_each_index_tuple(radices: &[usize], mut cb: impl FnMut(&[usize]) -> bool) {
    if radices.contains(&0) {
        return;
    }
    let mut idx = vec![0usize; radices.len()];
    loop {
        if !cb(&idx) {
            return;
        }
        let mut pos = radices.len();
        loop {
            if pos == 0 {
                return;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < radices[pos] {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Visit the stacked outcome-vector tuple for every element of the outcome
/// grid. Callers are responsible for checking `tuple_count` against a cap.
pub fn for_each_profile_tuple(inst: &Instance, mut cb: impl FnMut(&[f64]) -> bool) {
    let q = inst.outcome_space.q;
    let n = inst.n();
    let mut stacked = vec![0.0; n * q];
    let radices = vec![inst.m(); n];
    for_each_index_tuple(&radices, |idx| {
        for (i, &j) in idx.iter().enumerate() {
            stacked[i * q..(i + 1) * q].copy_from_slice(&inst.outcome_space.outcomes[j]);
        }
        cb(&stacked)
    });
}

// ---------------------------------------------------------------------------
// Expected rewards
// ---------------------------------------------------------------------------

fn check_profile(inst: &Instance, profile: &[usize]) -> Result<(), EvalError> {
    if profile.len() != inst.n() || profile.iter().any(|&a| a >= inst.ell()) {
        return Err(EvalError::BadProfile);
    }
    Ok(())
}

/// Exact expected reward of an action profile by full enumeration of the
/// outcome grid.
pub fn expected_reward_exact(inst: &Instance, profile: &[usize]) -> Result<f64, EvalError> {
    expected_reward_exact_capped(inst, profile, DEFAULT_ENUM_CAP)
}

pub fn expected_reward_exact_capped(
    inst: &Instance,
    profile: &[usize],
    cap: usize,
) -> Result<f64, EvalError> {
    check_profile(inst, profile)?;
    let needed = inst.tuple_count().unwrap_or(usize::MAX);
    if needed > cap {
        return Err(EvalError::EnumerationCap { needed, cap });
    }
    let q = inst.outcome_space.q;
    let n = inst.n();
    let m = inst.m();
    let mut stacked = vec![0.0; n * q];
    let mut total = 0.0;
    let mut err: Option<RewardError> = None;
    let radices = vec![m; n];
    for_each_index_tuple(&radices, |idx| {
        let mut prob = 1.0;
        for (i, &j) in idx.iter().enumerate() {
            prob *= inst.agents[i].dists[profile[i]][j];
            if prob == 0.0 {
                return true;
            }
        }
        for (i, &j) in idx.iter().enumerate() {
            stacked[i * q..(i + 1) * q].copy_from_slice(&inst.outcome_space.outcomes[j]);
        }
        match inst.reward.eval(&stacked, q) {
            Ok(g) => {
                total += prob * g;
                true
            }
            Err(e) => {
                err = Some(e);
                false
            }
        }
    });
    match err {
        Some(e) => Err(EvalError::Reward(e)),
        None => Ok(total),
    }
}

/// A seeded Monte-Carlo estimate with its sample standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

/// Unbiased Monte-Carlo estimate of the expected reward: one independent
/// outcome draw per agent per sample.
pub fn expected_reward_mc(
    inst: &Instance,
    profile: &[usize],
    samples: usize,
    seed: u64,
) -> Result<McEstimate, EvalError> {
    check_profile(inst, profile)?;
    assert!(samples >= 1);
    let q = inst.outcome_space.q;
    let n = inst.n();
    let mut rng = Rng::new(seed).split(0x6d632d72); // "mc-r"
    let mut stacked = vec![0.0; n * q];
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..samples {
        for i in 0..n {
            let j = rng.next_categorical(&inst.agents[i].dists[profile[i]]);
            stacked[i * q..(i + 1) * q].copy_from_slice(&inst.outcome_space.outcomes[j]);
        }
        let g = inst.reward.eval(&stacked, q)?;
        sum += g;
        sumsq += g * g;
    }
    let k = samples as f64;
    let mean = sum / k;
    let var = if samples > 1 {
        ((sumsq - k * mean * mean) / (k - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(McEstimate {
        mean,
        std_err: (var / k).sqrt(),
        samples,
    })
}

/// How expected rewards are evaluated inside solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RewardMode {
    Exact { cap: usize },
    Mc { samples: usize, seed: u64 },
}

impl Default for RewardMode {
    fn default() -> Self {
        RewardMode::Exact {
            cap: DEFAULT_ENUM_CAP,
        }
    }
}

pub fn expected_reward(
    inst: &Instance,
    profile: &[usize],
    mode: RewardMode,
) -> Result<f64, EvalError> {
    match mode {
        RewardMode::Exact { cap } => expected_reward_exact_capped(inst, profile, cap),
        RewardMode::Mc { samples, seed } => {
            Ok(expected_reward_mc(inst, profile, samples, seed)?.mean)
        }
    }
}

/// Principal's expected utility of a contract: expected reward of the
/// recommended profile minus the expected payments.
pub fn principal_utility(
    inst: &Instance,
    contract: &Contract,
    mode: RewardMode,
) -> Result<f64, EvalError> {
    if !contract.matches(inst) {
        return Err(EvalError::DimensionMismatch);
    }
    let r = expected_reward(inst, &contract.recommendations, mode)?;
    Ok(r - contract.total_expected_payment(inst))
}

// ---------------------------------------------------------------------------
// JSON instance format (version "pma-1")
// ---------------------------------------------------------------------------

/// Parse and validate an instance document. Every violated invariant found
/// during parsing and validation is listed in the error report.
pub fn load_instance(source: &str) -> Result<Instance, LoadError> {
    let value: Value = serde_json::from_str(source).map_err(|e| LoadError::Json(e.to_string()))?;
    instance_from_json(&value)
}

pub fn instance_from_json(value: &Value) -> Result<Instance, LoadError> {
    let mut violations = Vec::new();
    if let Some(v) = value.get("version") {
        if v.as_str() != Some("pma-1") {
            violations.push(format!("unsupported version {v}, expected \"pma-1\""));
        }
    }
    let q = match value.get("q").and_then(|v| v.as_u64()) {
        Some(q) => q as usize,
        None => {
            violations.push("missing positive integer field 'q'".into());
            1
        }
    };
    let outcomes = match value.get("outcomes").and_then(|v| v.as_array()) {
        Some(rows) => rows
            .iter()
            .enumerate()
            .map(|(j, row)| match row.as_array() {
                Some(xs) => xs
                    .iter()
                    .map(|x| {
                        parse_json_number(x).unwrap_or_else(|e| {
                            violations.push(format!("outcome {j}: {e}"));
                            0.0
                        })
                    })
                    .collect(),
                None => {
                    violations.push(format!("outcome {j} is not an array"));
                    vec![]
                }
            })
            .collect(),
        None => {
            violations.push("missing array field 'outcomes'".into());
            Vec::new()
        }
    };
    let null_index = value
        .get("null_outcome")
        .and_then(|v| v.as_u64())
        .map(|x| x as usize);
    let agents = match value.get("agents").and_then(|v| v.as_array()) {
        Some(rows) => rows
            .iter()
            .enumerate()
            .map(|(i, ag)| parse_agent(ag, i, &mut violations))
            .collect(),
        None => {
            violations.push("missing array field 'agents'".into());
            Vec::new()
        }
    };
    let reward = match value.get("reward") {
        Some(r) => match RewardSpec::from_json(r) {
            Ok(spec) => spec,
            Err(e) => {
                violations.push(e);
                RewardSpec::new(crate::rewards::RewardFamily::Linear {
                    weights: vec![0.0; q],
                })
            }
        },
        None => {
            violations.push("missing object field 'reward'".into());
            RewardSpec::new(crate::rewards::RewardFamily::Linear {
                weights: vec![0.0; q],
            })
        }
    };
    if !violations.is_empty() {
        return Err(LoadError::Validation(ValidationReport { violations }));
    }
    let mut inst = Instance {
        outcome_space: OutcomeSpace {
            q,
            outcomes,
            null_index,
        },
        agents,
        reward,
    };
    inst.validate().map_err(LoadError::Validation)?;
    inst.normalize();
    Ok(inst)
}

fn parse_agent(value: &Value, i: usize, violations: &mut Vec<String>) -> AgentSpec {
    let costs = value
        .get("costs")
        .and_then(|v| v.as_array())
        .map(|xs| {
            xs.iter()
                .map(|x| {
                    parse_json_number(x).unwrap_or_else(|e| {
                        violations.push(format!("agent {i} costs: {e}"));
                        0.0
                    })
                })
                .collect()
        })
        .unwrap_or_else(|| {
            violations.push(format!("agent {i}: missing array 'costs'"));
            Vec::new()
        });
    let dists = value
        .get("dists")
        .and_then(|v| v.as_array())
        .map(|rows| {
            rows.iter()
                .enumerate()
                .map(|(a, row)| {
                    row.as_array()
                        .map(|xs| {
                            xs.iter()
                                .map(|x| {
                                    parse_json_number(x).unwrap_or_else(|e| {
                                        violations.push(format!("agent {i} action {a} dist: {e}"));
                                        0.0
                                    })
                                })
                                .collect()
                        })
                        .unwrap_or_else(|| {
                            violations.push(format!("agent {i} action {a}: dist not an array"));
                            Vec::new()
                        })
                })
                .collect()
        })
        .unwrap_or_else(|| {
            violations.push(format!("agent {i}: missing array 'dists'"));
            Vec::new()
        });
    let null_action = value
        .get("null_action")
        .and_then(|v| v.as_u64())
        .map(|x| x as usize)
        .unwrap_or_else(|| {
            violations.push(format!("agent {i}: missing field 'null_action'"));
            0
        });
    AgentSpec {
        costs,
        dists,
        null_action,
    }
}

pub fn instance_to_json(inst: &Instance) -> Value {
    serde_json::json!({
        "version": "pma-1",
        "q": inst.outcome_space.q,
        "outcomes": inst.outcome_space.outcomes,
        "null_outcome": inst.outcome_space.null_index,
        "agents": inst.agents.iter().map(|a| serde_json::json!({
            "costs": a.costs,
            "dists": a.dists,
            "null_action": a.null_action,
        })).collect::<Vec<_>>(),
        "reward": inst.reward.to_json(),
    })
}
