//! Scalar building blocks of the critic target and the counterfactual advantage.

/// `b = Σ_a π(a)·Q(a)`.
pub fn counterfactual_baseline(q_row: &[f64], probs: &[f64]) -> f64 {
    q_row.iter().zip(probs).map(|(q, p)| q * p).sum()
}

/// `A(a) = Q(a) − b` for every own action.
pub fn advantages(q_row: &[f64], probs: &[f64]) -> Vec<f64> {
    let b = counterfactual_baseline(q_row, probs);
    q_row.iter().map(|q| q - b).collect()
}

/// `Σ_a π(a)·(Q(a) − α·log π(a))`, with `0·log 0 = 0`.
pub fn soft_value_own(q_row: &[f64], probs: &[f64], alpha: f64) -> f64 {
    q_row
        .iter()
        .zip(probs)
        .filter(|(_, &p)| p > 0.0)
        .map(|(q, p)| p * (q - alpha * p.ln()))
        .sum()
}

/// Joint index with agent 0 as the most significant digit.
pub fn joint_index(actions: &[usize], n_actions: usize) -> usize {
    actions.iter().fold(0, |acc, &a| acc * n_actions + a)
}

pub fn joint_actions(mut idx: usize, n_agents: usize, n_actions: usize) -> Vec<usize> {
    let mut out = vec![0; n_agents];
    for slot in out.iter_mut().rev() {
        *slot = idx % n_actions;
        idx /= n_actions;
    }
    out
}

/// `E_{a∼Π_j π_j}[Q(a) − α·log π_agent(a_agent)]` by full enumeration;
/// `q_joint[joint_index(a)]` holds `Q(a)`.
pub fn soft_value_joint(q_joint: &[f64], policies: &[&[f64]], agent: usize, alpha: f64) -> f64 {
    let n = policies.len();
    let a = policies[agent].len();
    assert_eq!(q_joint.len(), a.pow(n as u32), "joint table size");
    let mut total = 0.0;
    for (idx, q) in q_joint.iter().enumerate() {
        let acts = joint_actions(idx, n, a);
        let p: f64 = acts.iter().enumerate().map(|(j, &aj)| policies[j][aj]).product();
        if p > 0.0 {
            total += p * (q - alpha * policies[agent][acts[agent]].ln());
        }
    }
    total
}

/// `y = r + γ·V` unless the step is treated as terminal.
pub fn td_target(reward: f64, gamma: f64, terminal: bool, next_value: f64) -> f64 {
    if terminal {
        reward
    } else {
        reward + gamma * next_value
    }
}
