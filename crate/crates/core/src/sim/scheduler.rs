//! Action selection: the max-weight rule and the window-driven randomized
//! rule with its substitution ladder.

use rand::Rng;

use super::queues::{Decision, QueueId, QueueState};
use crate::channel::sample_index;
use crate::filter::ErasureStats;
use crate::region::{Action, ActionDistribution};

/// Weights of actions 1..5 for the current queue lengths and predicted
/// erasure statistics.
pub fn maxweight_weights(state: &QueueState, stats: &ErasureStats) -> [f64; 5] {
    let q = |rx: usize, l: QueueId| state.len(rx, l) as f64;
    let (q11, q21, q31) = (q(0, QueueId::Q1), q(0, QueueId::Q2), q(0, QueueId::Q3));
    let (q12, q22, q32) = (q(1, QueueId::Q1), q(1, QueueId::Q2), q(1, QueueId::Q3));
    let s = stats;
    [
        (1.0 - s.eps1) * q11 + s.eps1_n2 * (q11 - q21),
        (1.0 - s.eps2) * q12 + s.eps_n12 * (q12 - q22),
        (1.0 - s.eps1) * q21 + (1.0 - s.eps2) * q22,
        (1.0 - s.eps12) * (q11 - q31 + q12 - q32),
        s.eps1_n2 * (q31 - q21) + (1.0 - s.eps1) * q31 + s.eps_n12 * (q32 - q22) + (1.0 - s.eps2) * q32,
    ]
}

/// How `action` is carried out in `state`, if at all. Action 3 with one
/// empty Q2 becomes an uncoded resend of the other Q2 head; without it a
/// backlog in one Q2 could never drain.
fn realize(state: &QueueState, action: Action) -> Option<Decision> {
    let d = Decision::Act(action);
    if state.is_feasible(d) {
        return Some(d);
    }
    if action == Action::Coded {
        return (0..2).map(Decision::Retransmit).find(|&r| state.is_feasible(r));
    }
    None
}

/// Largest-weight action that can be carried out, lowest index on ties;
/// `Idle` when nothing can be sent.
pub fn maxweight_action(state: &QueueState, stats: &ErasureStats) -> Decision {
    let w = maxweight_weights(state, stats);
    let mut best: Option<(Decision, f64)> = None;
    for a in Action::ALL {
        let Some(d) = realize(state, a) else { continue };
        let wa = w[a as usize - 1];
        if best.is_none_or(|(_, wb)| wa > wb) {
            best = Some((d, wa));
        }
    }
    best.map_or(Decision::Idle, |(d, _)| d)
}

/// Maps a sampled action onto something the queues can serve.
pub fn substitute(state: &QueueState, action: Action) -> Decision {
    realize(state, action).unwrap_or(Decision::Idle)
}

/// Draws `a ~ P(· | window)` and applies [`substitute`].
pub fn probabilistic_action(
    window: usize,
    dist: &ActionDistribution,
    state: &QueueState,
    rng: &mut impl Rng,
) -> Decision {
    let a = sample_index(rng, &dist.rows[window]);
    substitute(state, Action::ALL[a])
}
