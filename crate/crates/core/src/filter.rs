//! Exact forward filtering of the hidden channel state from feedback.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelModel, ErasurePattern, ModelError};

/// Largest window length accepted by [`window_table`] (4^10 rows).
pub const DEFAULT_WINDOW_CAP: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("observed pattern {0} has zero predictive probability under the model")]
    ZeroLikelihood(ErasurePattern),
    #[error("window length {requested} exceeds the cap {cap}")]
    ResourceLimit { requested: usize, cap: usize },
    #[error("window length must be at least 1")]
    EmptyWindow,
    #[error("malformed window key {0:?}")]
    BadKey(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Predictive law of the hidden state for the next slot given the feedback
/// observed so far.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Belief(pub Vec<f64>);

impl Belief {
    /// The stationary prior.
    pub fn stationary(model: &ChannelModel) -> Result<Self, ModelError> {
        Ok(Belief(model.stationary_distribution()?.pi))
    }

    fn uniform(n: usize) -> Self {
        Belief(vec![1.0 / n as f64; n])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }
}

pub fn init_belief(model: &ChannelModel) -> Result<Belief, ModelError> {
    Belief::stationary(model)
}

/// Erasure probabilities of the next slot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErasureStats {
    /// erased at both receivers
    pub eps12: f64,
    /// erased at Rx2 only
    pub eps_n12: f64,
    /// erased at Rx1 only
    pub eps1_n2: f64,
    pub eps1: f64,
    pub eps2: f64,
}

impl ErasureStats {
    /// Assembles the marginals from a distribution over the four patterns.
    pub fn from_pattern_probs(p: &[f64; 4]) -> Self {
        let eps12 = p[3];
        let eps_n12 = p[1];
        let eps1_n2 = p[2];
        ErasureStats {
            eps12,
            eps_n12,
            eps1_n2,
            eps1: eps12 + eps1_n2,
            eps2: eps12 + eps_n12,
        }
    }

    /// Marginal erasure probability at receiver `rx` (0 or 1).
    pub fn eps(&self, rx: usize) -> f64 {
        if rx == 0 {
            self.eps1
        } else {
            self.eps2
        }
    }

    /// Erased only at the other receiver, seen from `rx`: the probability that
    /// a packet sent to `rx` lands only at the wrong receiver.
    pub fn eps_other_only(&self, rx: usize) -> f64 {
        if rx == 0 {
            self.eps_n12
        } else {
            self.eps1_n2
        }
    }

    /// Received at `rx` only (erased at the other one).
    pub fn eps_own_only(&self, rx: usize) -> f64 {
        if rx == 0 {
            self.eps1_n2
        } else {
            self.eps_n12
        }
    }
}

/// Distribution of the next pattern under `belief`.
pub fn predict_pattern(model: &ChannelModel, belief: &Belief) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (w, row) in belief.0.iter().zip(model.emission()) {
        for (o, e) in out.iter_mut().zip(row) {
            *o += w * e;
        }
    }
    out
}

pub fn predict_stats(model: &ChannelModel, belief: &Belief) -> ErasureStats {
    ErasureStats::from_pattern_probs(&predict_pattern(model, belief))
}

/// Unnormalized update: `α'(s') = Σ_s α(s) e(s, z) P(s, s')`.
fn propagate(model: &ChannelModel, alpha: &[f64], z: ErasurePattern) -> Vec<f64> {
    let n = alpha.len();
    let mut out = vec![0.0; n];
    for (s, &a) in alpha.iter().enumerate() {
        let w = a * model.emission()[s][z.index()];
        if w == 0.0 {
            continue;
        }
        for (o, p) in out.iter_mut().zip(&model.transition()[s]) {
            *o += w * p;
        }
    }
    out
}

/// Bayes update on `observed` followed by one step of the hidden chain.
pub fn filter_step(
    model: &ChannelModel,
    belief: &Belief,
    observed: ErasurePattern,
) -> Result<Belief, FilterError> {
    let alpha = propagate(model, &belief.0, observed);
    let norm: f64 = alpha.iter().sum();
    if norm <= 0.0 {
        return Err(FilterError::ZeroLikelihood(observed));
    }
    Ok(Belief(alpha.into_iter().map(|a| a / norm).collect()))
}

/// Filters `history` starting from the stationary prior.
pub fn run_filter(model: &ChannelModel, history: &[ErasurePattern]) -> Result<Belief, FilterError> {
    let mut belief = Belief::stationary(model)?;
    for &z in history {
        belief = filter_step(model, &belief, z)?;
    }
    Ok(belief)
}

/// Index of a window, oldest pattern most significant.
pub fn window_index(window: &[ErasurePattern]) -> usize {
    window.iter().fold(0, |acc, z| (acc << 2) | z.index())
}

pub fn window_patterns(index: usize, len: usize) -> Vec<ErasurePattern> {
    (0..len)
        .rev()
        .map(|k| ErasurePattern::from_index(index >> (2 * k)))
        .collect()
}

/// Text key such as `"00.01.11"` (oldest first).
pub fn window_key(index: usize, len: usize) -> String {
    window_patterns(index, len)
        .iter()
        .map(|z| z.code())
        .collect::<Vec<_>>()
        .join(".")
}

pub fn parse_window_key(key: &str) -> Result<Vec<ErasurePattern>, FilterError> {
    key.split('.')
        .map(|code| match code {
            "00" => Ok(ErasurePattern::ALL[0]),
            "01" => Ok(ErasurePattern::ALL[1]),
            "10" => Ok(ErasurePattern::ALL[2]),
            "11" => Ok(ErasurePattern::ALL[3]),
            _ => Err(FilterError::BadKey(key.to_string())),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub prob: f64,
    pub stats: ErasureStats,
}

/// Every feedback window of length `L` with its probability and the erasure
/// statistics of the following slot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowTable {
    pub len: usize,
    pub rows: Vec<WindowRow>,
}

impl WindowTable {
    pub fn num_windows(&self) -> usize {
        self.rows.len()
    }

    pub fn key(&self, index: usize) -> String {
        window_key(index, self.len)
    }

    pub fn total_prob(&self) -> f64 {
        self.rows.iter().map(|r| r.prob).sum()
    }

    /// Probabilities of the `L-1` windows obtained by summing out the oldest
    /// pattern.
    pub fn marginalize_oldest(&self) -> Vec<f64> {
        let m = self.rows.len() / 4;
        let mut out = vec![0.0; m];
        for (i, row) in self.rows.iter().enumerate() {
            out[i % m] += row.prob;
        }
        out
    }

    /// `Σ P(z^L) ε(z^L)` for the five statistics, in field order.
    pub fn average_stats(&self) -> ErasureStats {
        let mut p = [0.0; 4];
        for r in &self.rows {
            p[1] += r.prob * r.stats.eps_n12;
            p[2] += r.prob * r.stats.eps1_n2;
            p[3] += r.prob * r.stats.eps12;
        }
        p[0] = 1.0 - p[1] - p[2] - p[3];
        ErasureStats::from_pattern_probs(&p)
    }
}

pub fn window_table(model: &ChannelModel, len: usize) -> Result<WindowTable, FilterError> {
    window_table_with_cap(model, len, DEFAULT_WINDOW_CAP)
}

pub fn window_table_with_cap(
    model: &ChannelModel,
    len: usize,
    cap: usize,
) -> Result<WindowTable, FilterError> {
    if len == 0 {
        return Err(FilterError::EmptyWindow);
    }
    if len > cap {
        return Err(FilterError::ResourceLimit {
            requested: len,
            cap,
        });
    }
    let prior = Belief::stationary(model)?;
    let n = model.num_states();
    // split on the oldest pattern, each subtree is independent
    let rows: Vec<WindowRow> = ErasurePattern::ALL
        .par_iter()
        .map(|&z| {
            let mut rows = Vec::with_capacity(1 << (2 * (len - 1)));
            let alpha = propagate(model, &prior.0, z);
            expand(model, alpha, len - 1, n, &mut rows);
            rows
        })
        .collect::<Vec<_>>()
        .concat();
    Ok(WindowTable { len, rows })
}

fn expand(model: &ChannelModel, alpha: Vec<f64>, remaining: usize, n: usize, rows: &mut Vec<WindowRow>) {
    if remaining == 0 {
        let prob: f64 = alpha.iter().sum();
        let posterior = if prob > 0.0 {
            Belief(alpha.iter().map(|a| a / prob).collect())
        } else {
            Belief::uniform(n)
        };
        rows.push(WindowRow {
            prob,
            stats: predict_stats(model, &posterior),
        });
        return;
    }
    for z in ErasurePattern::ALL {
        let next = propagate(model, &alpha, z);
        expand(model, next, remaining - 1, n, rows);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_state() -> ChannelModel {
        ChannelModel::new(
            vec![vec![0.9, 0.1], vec![0.2, 0.8]],
            vec![[0.81, 0.09, 0.09, 0.01], [0.04, 0.16, 0.16, 0.64]],
        )
        .unwrap()
    }

    #[test]
    fn init_belief_is_stationary() {
        assert_eq!(init_belief(&ChannelModel::memoryless([0.25; 4])).unwrap().0, vec![1.0]);
        let b = init_belief(&two_state()).unwrap();
        assert!((b.0[0] - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn uninformative_observation_only_advances_chain() {
        let m = ChannelModel::new(vec![vec![0.7, 0.3], vec![0.4, 0.6]], vec![[0.25; 4]; 2]).unwrap();
        let b = Belief(vec![0.2, 0.8]);
        let next = filter_step(&m, &b, ErasurePattern::new(true, false)).unwrap();
        let expect = [0.2 * 0.7 + 0.8 * 0.4, 0.2 * 0.3 + 0.8 * 0.6];
        for (a, e) in next.0.iter().zip(expect) {
            assert!((a - e).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_likelihood_is_an_error() {
        let m = ChannelModel::memoryless([1.0, 0.0, 0.0, 0.0]);
        let b = init_belief(&m).unwrap();
        assert_eq!(
            filter_step(&m, &b, ErasurePattern::new(true, true)),
            Err(FilterError::ZeroLikelihood(ErasurePattern::new(true, true)))
        );
    }

    #[test]
    fn stats_from_degenerate_belief_match_emission_row() {
        let m = two_state();
        let s = predict_stats(&m, &Belief(vec![0.0, 1.0]));
        assert_eq!(s.eps12, 0.64);
        assert_eq!(s.eps_n12, 0.16);
        assert_eq!(s.eps1_n2, 0.16);
        assert!((s.eps1 - 0.8).abs() < 1e-15 && (s.eps2 - 0.8).abs() < 1e-15);
    }

    #[test]
    fn stats_are_convex_combination() {
        let s = predict_stats(&two_state(), &Belief(vec![2.0 / 3.0, 1.0 / 3.0]));
        assert!((s.eps12 - (2.0 * 0.01 + 0.64) / 3.0).abs() < 1e-15);
        assert!((s.eps1 - (2.0 * 0.1 + 0.8) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_state_window_rows_repeat_emission() {
        let e = [0.4, 0.3, 0.2, 0.1];
        let t = window_table(&ChannelModel::memoryless(e), 1).unwrap();
        assert_eq!(t.rows.len(), 4);
        for (row, p) in t.rows.iter().zip(e) {
            assert!((row.prob - p).abs() < 1e-15);
            assert_eq!(row.stats, t.rows[0].stats);
        }
    }

    #[test]
    fn window_cap_enforced() {
        assert!(matches!(
            window_table_with_cap(&two_state(), 3, 2),
            Err(FilterError::ResourceLimit { requested: 3, cap: 2 })
        ));
        assert!(matches!(window_table(&two_state(), 0), Err(FilterError::EmptyWindow)));
    }

    #[test]
    fn window_keys_round_trip() {
        let w = [
            ErasurePattern::new(false, true),
            ErasurePattern::new(true, true),
            ErasurePattern::new(false, false),
        ];
        let idx = window_index(&w);
        assert_eq!(window_key(idx, 3), "01.11.00");
        assert_eq!(parse_window_key("01.11.00").unwrap(), w.to_vec());
        assert_eq!(window_patterns(idx, 3), w.to_vec());
        assert!(parse_window_key("01.2").is_err());
    }

    #[test]
    fn degenerate_windows_keep_their_rows() {
        let m = ChannelModel::memoryless([0.5, 0.5, 0.0, 0.0]);
        let t = window_table(&m, 2).unwrap();
        assert_eq!(t.rows.len(), 16);
        assert_eq!(t.rows[window_index(&[ErasurePattern::new(true, true); 2])].prob, 0.0);
        assert!((t.total_prob() - 1.0).abs() < 1e-12);
    }
}
