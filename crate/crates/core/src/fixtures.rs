//! Small hand-checkable instances shared by unit, property, and acceptance
//! tests.

use crate::model::{AgentSpec, Instance, OutcomeSpace};
use crate::rewards::{RewardFamily, RewardSpec};

fn scalar_space() -> OutcomeSpace {
    OutcomeSpace {
        q: 1,
        outcomes: vec![vec![0.0], vec![1.0]],
        null_index: Some(0),
    }
}

/// One agent; the null action deterministically yields outcome 0, the other
/// action deterministically yields outcome 1 at cost 0.5; reward is the
/// outcome itself. Minimum payment for the costly action is 0.5 via the row
/// (0, 0.5), and the optimal contract has utility 0.5.
pub fn t1() -> Instance {
    Instance {
        outcome_space: scalar_space(),
        agents: vec![AgentSpec {
            costs: vec![0.0, 0.5],
            dists: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            null_action: 0,
        }],
        reward: RewardSpec::new(RewardFamily::Linear { weights: vec![1.0] }),
    }
}

/// One agent; the costly action is a fair coin over {0, 1} at cost 0.2.
/// Minimum payment is 0.2 via the row (0, 0.4); the optimal contract has
/// utility 0.3.
pub fn t2() -> Instance {
    Instance {
        outcome_space: scalar_space(),
        agents: vec![AgentSpec {
            costs: vec![0.0, 0.2],
            dists: vec![vec![1.0, 0.0], vec![0.5, 0.5]],
            null_action: 0,
        }],
        reward: RewardSpec::new(RewardFamily::Linear { weights: vec![1.0] }),
    }
}

/// Two agents with independent fair coins over scalar outcomes {0,1} and
/// reward min(1, w1 + w2): the expected reward of both coins is 0.75.
pub fn two_agent_budget() -> Instance {
    let coin = AgentSpec {
        costs: vec![0.0, 0.1],
        dists: vec![vec![1.0, 0.0], vec![0.5, 0.5]],
        null_action: 0,
    };
    Instance {
        outcome_space: scalar_space(),
        agents: vec![coin.clone(), coin],
        reward: RewardSpec::new(RewardFamily::BudgetAdditive {
            weights: vec![1.0],
            budget: 1.0,
        }),
    }
}

/// Two independent scaled copies of `t1`: per-agent unit reward 0.5 and
/// action cost 0.25, so the optimal contract incentivizes both agents for a
/// total utility of 0.5.
pub fn two_copies_of_t1_halved() -> Instance {
    let copy = AgentSpec {
        costs: vec![0.0, 0.25],
        dists: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        null_action: 0,
    };
    Instance {
        outcome_space: scalar_space(),
        agents: vec![copy.clone(), copy],
        reward: RewardSpec::new(RewardFamily::Linear { weights: vec![0.5] }),
    }
}

/// `t1` with a third action duplicating the null distribution at positive
/// cost: that action is not inducible.
pub fn t1_with_dominated_duplicate() -> Instance {
    Instance {
        outcome_space: scalar_space(),
        agents: vec![AgentSpec {
            costs: vec![0.0, 0.5, 0.1],
            dists: vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]],
            null_action: 0,
        }],
        reward: RewardSpec::new(RewardFamily::Linear { weights: vec![1.0] }),
    }
}

/// Two agents over one edge with reward max(w1, w2): DR-submodular but not
/// IR-supermodular.
pub fn coverage_pair() -> Instance {
    let coin = AgentSpec {
        costs: vec![0.0, 0.3],
        dists: vec![vec![1.0, 0.0], vec![0.2, 0.8]],
        null_action: 0,
    };
    Instance {
        outcome_space: scalar_space(),
        agents: vec![coin.clone(), coin],
        reward: RewardSpec::new(RewardFamily::CoverageMax {
            edges: vec![(0, 1)],
        }),
    }
}
