//! Incentive-compatibility machinery: IC action sets, inducibility, minimum
//! expected payments, and the constructive per-instance payment bound used
//! for ellipsoid radii and regularization loss accounting.

use thiserror::Error;

use crate::lp::{self, LinearProgram, LpOutcome, Relation, Row, Sense};
use crate::model::Instance;

/// Tie tolerance when collecting IC actions.
pub const IC_TIE_TOL: f64 = 1e-9;
/// Post-LP feasibility slack when validating payment solutions.
pub const IC_FEAS_TOL: f64 = 1e-7;

/// A minimum-payment certificate: action `action` of agent `agent` is IC
/// under `payment_row`, whose expected payment is `min_expected_payment`.
#[derive(Debug, Clone, PartialEq)]
pub struct PaymentSolution {
    pub agent: usize,
    pub action: usize,
    pub min_expected_payment: f64,
    pub payment_row: Vec<f64>,
}

/// Whether an action can be made IC by any payment row.
#[derive(Debug, Clone, PartialEq)]
pub enum Inducibility {
    Inducible(PaymentSolution),
    NotInducible,
}

impl Inducibility {
    pub fn solution(&self) -> Option<&PaymentSolution> {
        match self {
            Inducibility::Inducible(s) => Some(s),
            Inducibility::NotInducible => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum PaymentError {
    #[error("agent or action index out of range")]
    BadIndex,
    #[error(transparent)]
    Lp(#[from] lp::LpError),
}

/// All actions maximizing the agent's expected utility under a payment row,
/// within the tie tolerance. Never empty: the null action guarantees
/// utility at least zero.
pub fn ic_actions(inst: &Instance, agent: usize, payment_row: &[f64]) -> Vec<usize> {
    let spec = &inst.agents[agent];
    let utilities: Vec<f64> = spec
        .dists
        .iter()
        .zip(&spec.costs)
        .map(|(dist, &c)| {
            dist.iter()
                .zip(payment_row)
                .map(|(f, p)| f * p)
                .sum::<f64>()
                - c
        })
        .collect();
    let best = utilities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    utilities
        .iter()
        .enumerate()
        .filter(|(_, &u)| u >= best - IC_TIE_TOL)
        .map(|(a, _)| a)
        .collect()
}

/// Minimum expected payment making `action` IC: the LP
/// `min sum_w F[a][w] p_w` subject to
/// `sum_w (F[a][w] - F[a'][w]) p_w >= c[a] - c[a']` for every `a' != a`
/// and `p >= 0`. Infeasibility means the action is not inducible.
pub fn min_payment_rows(
    costs: &[f64],
    dists: &[Vec<f64>],
    agent: usize,
    action: usize,
) -> Result<Inducibility, PaymentError> {
    if action >= costs.len() {
        return Err(PaymentError::BadIndex);
    }
    let m = dists[action].len();
    let rows: Vec<Row> = (0..costs.len())
        .filter(|&alt| alt != action)
        .map(|alt| Row {
            coeffs: (0..m).map(|w| dists[action][w] - dists[alt][w]).collect(),
            rel: Relation::Ge,
            rhs: costs[action] - costs[alt],
        })
        .collect();
    let lp = LinearProgram::nonneg(Sense::Min, dists[action].clone(), rows);
    match lp::solve_lp(&lp)? {
        LpOutcome::Optimal { value, point, .. } => Ok(Inducibility::Inducible(PaymentSolution {
            agent,
            action,
            min_expected_payment: value.max(0.0),
            payment_row: point.into_iter().map(|p| p.max(0.0)).collect(),
        })),
        LpOutcome::Infeasible { .. } => Ok(Inducibility::NotInducible),
        LpOutcome::Unbounded { .. } => Err(PaymentError::Lp(lp::LpError::Numerical(
            "minimum-payment LP cannot be unbounded below".into(),
        ))),
    }
}

pub fn min_payment(
    inst: &Instance,
    agent: usize,
    action: usize,
) -> Result<Inducibility, PaymentError> {
    if agent >= inst.n() {
        return Err(PaymentError::BadIndex);
    }
    let spec = &inst.agents[agent];
    min_payment_rows(&spec.costs, &spec.dists, agent, action)
}

/// A finite bound `tau` such that every inducible action admits an IC
/// payment row with all entries at most `tau`: twice the largest coordinate
/// across the computed optimal basic rows, floored at 1.
pub fn payment_bound(inst: &Instance) -> Result<f64, PaymentError> {
    let mut worst: f64 = 0.0;
    for i in 0..inst.n() {
        for a in 0..inst.ell() {
            if let Inducibility::Inducible(sol) = min_payment(inst, i, a)? {
                for &p in &sol.payment_row {
                    worst = worst.max(p);
                }
            }
        }
    }
    Ok((2.0 * worst).max(1.0))
}

/// Validate the invariants of a payment solution against its instance
/// (used by tests and diagnostics).
pub fn validate_solution(inst: &Instance, sol: &PaymentSolution) -> Result<(), String> {
    let spec = &inst.agents[sol.agent];
    let ic = ic_actions(inst, sol.agent, &sol.payment_row);
    // Check membership with the looser post-LP slack.
    let utilities: Vec<f64> = spec
        .dists
        .iter()
        .zip(&spec.costs)
        .map(|(dist, &c)| {
            dist.iter()
                .zip(&sol.payment_row)
                .map(|(f, p)| f * p)
                .sum::<f64>()
                - c
        })
        .collect();
    let best = utilities.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if utilities[sol.action] < best - IC_FEAS_TOL {
        return Err(format!(
            "action {} not IC: utility {} < best {best} (ic set {ic:?})",
            sol.action, utilities[sol.action]
        ));
    }
    let expected: f64 = spec.dists[sol.action]
        .iter()
        .zip(&sol.payment_row)
        .map(|(f, p)| f * p)
        .sum();
    if (expected - sol.min_expected_payment).abs() > IC_FEAS_TOL {
        return Err(format!(
            "expected payment {expected} differs from stated {}",
            sol.min_expected_payment
        ));
    }
    if sol.min_expected_payment < spec.costs[sol.action] - IC_FEAS_TOL {
        return Err(format!(
            "payment {} below cost {}",
            sol.min_expected_payment, spec.costs[sol.action]
        ));
    }
    Ok(())
}
