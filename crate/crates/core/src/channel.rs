//! Hidden-Markov erasure channel: model definition, validation, stationary
//! law, trajectory sampling and memory-forgetting measurements.

use std::collections::VecDeque;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filter::{self, Belief};

/// Row sums must match 1 to within this tolerance.
pub const STOCHASTIC_TOL: f64 = 1e-12;

const POWER_ITER_TOL: f64 = 1e-12;
const POWER_ITER_MAX: usize = 1_000_000;
const STATIONARY_RESIDUAL: f64 = 1e-10;

/// Joint erasure indicator of one slot. `true` means erased.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ErasurePattern {
    pub z1: bool,
    pub z2: bool,
}

impl ErasurePattern {
    /// All four patterns in the fixed order (0,0),(0,1),(1,0),(1,1).
    pub const ALL: [ErasurePattern; 4] = [
        ErasurePattern { z1: false, z2: false },
        ErasurePattern { z1: false, z2: true },
        ErasurePattern { z1: true, z2: false },
        ErasurePattern { z1: true, z2: true },
    ];

    pub fn new(z1: bool, z2: bool) -> Self {
        Self { z1, z2 }
    }

    /// Position of the pattern in [`ErasurePattern::ALL`] (also the emission column).
    pub fn index(self) -> usize {
        ((self.z1 as usize) << 1) | self.z2 as usize
    }

    pub fn from_index(idx: usize) -> Self {
        Self::ALL[idx & 3]
    }

    pub fn received(self, rx: usize) -> bool {
        match rx {
            0 => !self.z1,
            1 => !self.z2,
            _ => panic!("receiver index {rx} out of range"),
        }
    }

    /// Two-character code such as `"01"`.
    pub fn code(self) -> &'static str {
        ["00", "01", "10", "11"][self.index()]
    }
}

impl fmt::Display for ErasurePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("model must have at least one state")]
    Empty,
    #[error("{field}: expected {expected} entries, found {found}")]
    Dimension {
        field: String,
        expected: usize,
        found: usize,
    },
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("chain is reducible, no unique stationary distribution")]
    NoUniqueStationary,
}

/// Homogeneous hidden Markov chain driving the joint erasure pattern.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    transition: Vec<Vec<f64>>,
    emission: Vec<[f64; 4]>,
    labels: Option<Vec<String>>,
}

/// Result of [`ChannelModel::validate`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
    pub strictly_positive: bool,
    pub irreducible: bool,
    pub aperiodic: bool,
}

impl ValidationReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl ChannelModel {
    /// Builds a model after checking only its dimensions. Use
    /// [`ChannelModel::validate`] for the stochastic invariants.
    pub fn new(transition: Vec<Vec<f64>>, emission: Vec<[f64; 4]>) -> Result<Self, ModelError> {
        let n = transition.len();
        if n == 0 {
            return Err(ModelError::Empty);
        }
        for (i, row) in transition.iter().enumerate() {
            if row.len() != n {
                return Err(ModelError::Dimension {
                    field: format!("transition[{i}]"),
                    expected: n,
                    found: row.len(),
                });
            }
        }
        if emission.len() != n {
            return Err(ModelError::Dimension {
                field: "emission".into(),
                expected: n,
                found: emission.len(),
            });
        }
        Ok(Self {
            transition,
            emission,
            labels: None,
        })
    }

    /// Builds and validates; any violated invariant is an error.
    pub fn checked(transition: Vec<Vec<f64>>, emission: Vec<[f64; 4]>) -> Result<Self, ModelError> {
        let model = Self::new(transition, emission)?;
        model.ensure_valid()?;
        Ok(model)
    }

    /// Memoryless channel with a single hidden state.
    pub fn memoryless(emission: [f64; 4]) -> Self {
        Self::new(vec![vec![1.0]], vec![emission]).expect("1x1 model is well formed")
    }

    /// Memoryless channel with independent erasures at the two receivers.
    pub fn independent(eps1: f64, eps2: f64) -> Self {
        Self::memoryless([
            (1.0 - eps1) * (1.0 - eps2),
            (1.0 - eps1) * eps2,
            eps1 * (1.0 - eps2),
            eps1 * eps2,
        ])
    }

    /// Two-state good/bad chain with independent erasures in each state.
    pub fn gilbert_elliott(p_gb: f64, p_bg: f64, good: (f64, f64), bad: (f64, f64)) -> Self {
        let row = |(e1, e2): (f64, f64)| {
            [(1.0 - e1) * (1.0 - e2), (1.0 - e1) * e2, e1 * (1.0 - e2), e1 * e2]
        };
        Self::new(
            vec![vec![1.0 - p_gb, p_gb], vec![p_bg, 1.0 - p_bg]],
            vec![row(good), row(bad)],
        )
        .expect("2x2 model is well formed")
    }

    pub fn with_labels(mut self, labels: Vec<String>) -> Result<Self, ModelError> {
        if labels.len() != self.num_states() {
            return Err(ModelError::Dimension {
                field: "labels".into(),
                expected: self.num_states(),
                found: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn num_states(&self) -> usize {
        self.transition.len()
    }

    pub fn transition(&self) -> &[Vec<f64>] {
        &self.transition
    }

    pub fn emission(&self) -> &[[f64; 4]] {
        &self.emission
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        check_rows(
            self.transition.iter().map(|r| r.as_slice()),
            "transition",
            &mut violations,
        );
        check_rows(
            self.emission.iter().map(|r| r.as_slice()),
            "emission",
            &mut violations,
        );
        let strictly_positive = self
            .transition
            .iter()
            .flatten()
            .chain(self.emission.iter().flatten())
            .all(|&p| p > 0.0);
        let (irreducible, aperiodic) = support_structure(&self.transition);
        ValidationReport {
            violations,
            strictly_positive,
            irreducible,
            aperiodic,
        }
    }

    fn ensure_valid(&self) -> Result<(), ModelError> {
        let report = self.validate();
        match report.violations.into_iter().next() {
            None => Ok(()),
            Some(v) => {
                let (field, message) = v.split_once(": ").unwrap_or(("model", v.as_str()));
                Err(ModelError::Invalid {
                    field: field.to_string(),
                    message: message.to_string(),
                })
            }
        }
    }

    /// Stationary law of the hidden chain.
    pub fn stationary_distribution(&self) -> Result<StationaryDistribution, ModelError> {
        let (irreducible, _) = support_structure(&self.transition);
        if !irreducible {
            return Err(ModelError::NoUniqueStationary);
        }
        let n = self.num_states();
        if let Some(pi) = solve_balance(&self.transition) {
            if stationary_residual(&self.transition, &pi) <= STATIONARY_RESIDUAL {
                return Ok(StationaryDistribution { pi });
            }
        }
        // ill-conditioned solve: fall back to power iteration
        let mut pi = vec![1.0 / n as f64; n];
        for _ in 0..POWER_ITER_MAX {
            let next = normalized(&step_distribution(&self.transition, &pi));
            let delta = next
                .iter()
                .zip(&pi)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            pi = next;
            if delta < POWER_ITER_TOL {
                break;
            }
        }
        Ok(StationaryDistribution { pi })
    }

    /// The conservative forgetting constant `σ = |S| · p_min · e_min / e_max`,
    /// clamped to (0, 1]. `None` when any transition or emission entry is zero.
    pub fn forgetting_rate_bound(&self) -> Option<f64> {
        let p_min = self.transition.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        let e_min = self.emission.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        let e_max = self.emission.iter().flatten().copied().fold(0.0, f64::max);
        if p_min <= 0.0 || e_min <= 0.0 {
            return None;
        }
        if self.num_states() == 1 {
            // no hidden memory: the window prediction is exact
            return Some(1.0);
        }
        let sigma = self.num_states() as f64 * p_min * (e_min / e_max);
        Some(sigma.min(1.0))
    }

    /// Samples `n` slots of hidden states and erasure patterns.
    pub fn sample_trajectory(
        &self,
        n: usize,
        seed: u64,
    ) -> Result<(Vec<usize>, Vec<ErasurePattern>), ModelError> {
        let mut sampler = ChannelSampler::new(self, seed)?;
        let mut states = Vec::with_capacity(n);
        let mut patterns = Vec::with_capacity(n);
        for _ in 0..n {
            let (s, z) = sampler.next_slot();
            states.push(s);
            patterns.push(z);
        }
        Ok((states, patterns))
    }
}

fn check_rows<'a>(
    rows: impl Iterator<Item = &'a [f64]>,
    name: &str,
    violations: &mut Vec<String>,
) {
    for (i, row) in rows.enumerate() {
        if let Some(j) = row.iter().position(|p| !p.is_finite() || *p < 0.0 || *p > 1.0) {
            violations.push(format!("{name}[{i}][{j}]: entry {} outside [0,1]", row[j]));
        }
        let sum: f64 = row.iter().sum();
        if (sum - 1.0).abs() > STOCHASTIC_TOL {
            violations.push(format!("{name}[{i}]: row not stochastic (sums to {sum})"));
        }
    }
}

/// Strong connectivity and aperiodicity of the support graph of `p`.
fn support_structure(p: &[Vec<f64>]) -> (bool, bool) {
    let n = p.len();
    let forward = bfs_levels(n, |u, v| p[u][v] > 0.0);
    let backward = bfs_levels(n, |u, v| p[v][u] > 0.0);
    let irreducible = forward.iter().all(Option::is_some) && backward.iter().all(Option::is_some);
    if !irreducible {
        return (false, false);
    }
    // period = gcd over edges u->v of level(u) + 1 - level(v)
    let mut period = 0i64;
    for u in 0..n {
        for v in 0..n {
            if p[u][v] > 0.0 {
                let lu = forward[u].unwrap() as i64;
                let lv = forward[v].unwrap() as i64;
                period = gcd(period, (lu + 1 - lv).abs());
            }
        }
    }
    (true, period == 1)
}

fn bfs_levels(n: usize, edge: impl Fn(usize, usize) -> bool) -> Vec<Option<usize>> {
    let mut level = vec![None; n];
    level[0] = Some(0);
    let mut queue = VecDeque::from([0usize]);
    while let Some(u) = queue.pop_front() {
        for v in 0..n {
            if level[v].is_none() && edge(u, v) {
                level[v] = Some(level[u].unwrap() + 1);
                queue.push_back(v);
            }
        }
    }
    level
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Solves `π (P − I) = 0`, `Σπ = 1` by Gaussian elimination with partial pivoting.
fn solve_balance(p: &[Vec<f64>]) -> Option<Vec<f64>> {
    let n = p.len();
    // rows: equations; last equation replaced by normalization
    let mut a = vec![vec![0.0; n + 1]; n];
    for (i, row) in a.iter_mut().enumerate().take(n - 1) {
        for (j, cell) in row.iter_mut().enumerate().take(n) {
            *cell = p[j][i] - if i == j { 1.0 } else { 0.0 };
        }
    }
    for cell in a[n - 1].iter_mut() {
        *cell = 1.0;
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))?;
        if a[pivot][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, pivot);
        for r in 0..n {
            if r != col {
                let f = a[r][col] / a[col][col];
                if f != 0.0 {
                    for c in col..=n {
                        a[r][c] -= f * a[col][c];
                    }
                }
            }
        }
    }
    let pi: Vec<f64> = (0..n).map(|i| (a[i][n] / a[i][i]).max(0.0)).collect();
    Some(normalized(&pi))
}

fn step_distribution(p: &[Vec<f64>], pi: &[f64]) -> Vec<f64> {
    let n = p.len();
    let mut out = vec![0.0; n];
    for (i, &w) in pi.iter().enumerate() {
        for j in 0..n {
            out[j] += w * p[i][j];
        }
    }
    out
}

fn stationary_residual(p: &[Vec<f64>], pi: &[f64]) -> f64 {
    step_distribution(p, pi)
        .iter()
        .zip(pi)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StationaryDistribution {
    pub pi: Vec<f64>,
}

impl StationaryDistribution {
    pub fn residual(&self, model: &ChannelModel) -> f64 {
        stationary_residual(model.transition(), &self.pi)
    }
}

pub(crate) fn sample_index(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding: land on the last index with positive mass
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(probs.len() - 1)
}

/// Slot-by-slot sampler of the hidden chain and its emissions.
#[derive(Clone, Debug)]
pub struct ChannelSampler<'a> {
    model: &'a ChannelModel,
    rng: ChaCha8Rng,
    state: usize,
    started: bool,
}

impl<'a> ChannelSampler<'a> {
    pub fn new(model: &'a ChannelModel, seed: u64) -> Result<Self, ModelError> {
        model.ensure_valid()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pi = model.stationary_distribution()?;
        let state = sample_index(&mut rng, &pi.pi);
        Ok(Self {
            model,
            rng,
            state,
            started: false,
        })
    }

    /// Returns `(S_t, Z_t)` and advances the chain.
    pub fn next_slot(&mut self) -> (usize, ErasurePattern) {
        if self.started {
            self.state = sample_index(&mut self.rng, &self.model.transition[self.state]);
        }
        self.started = true;
        let z = sample_index(&mut self.rng, &self.model.emission[self.state]);
        (self.state, ErasurePattern::from_index(z))
    }
}

/// L1 distance between two pattern distributions (at most 2).
pub fn total_variation(p: &[f64; 4], q: &[f64; 4]) -> f64 {
    p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()
}

/// Distance between the full-history and the last-`window` prediction of the
/// next pattern after observing `history`.
pub fn prediction_gap(
    model: &ChannelModel,
    history: &[ErasurePattern],
    window: usize,
) -> Result<f64, filter::FilterError> {
    let full = filter::run_filter(model, history)?;
    let start = history.len().saturating_sub(window);
    let windowed = filter::run_filter(model, &history[start..])?;
    Ok(total_variation(
        &filter::predict_pattern(model, &full),
        &filter::predict_pattern(model, &windowed),
    ))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForgettingError {
    #[error("horizon {horizon} must exceed the window length {window}")]
    Horizon { horizon: usize, window: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Filter(#[from] filter::FilterError),
}

/// Largest prediction gap at window `window` over `samples` histories of
/// length `horizon - 1` drawn from the model.
pub fn empirical_forgetting(
    model: &ChannelModel,
    window: usize,
    horizon: usize,
    samples: usize,
    seed: u64,
) -> Result<f64, ForgettingError> {
    if horizon <= window {
        return Err(ForgettingError::Horizon { horizon, window });
    }
    let mut sampler = ChannelSampler::new(model, seed)?;
    let pi = model.stationary_distribution()?.pi;
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        // fresh stationary start for every history
        sampler.started = false;
        sampler.state = sample_index(&mut sampler.rng, &pi);
        let history: Vec<_> = (0..horizon - 1).map(|_| sampler.next_slot().1).collect();
        worst = worst.max(prediction_gap(model, &history, window)?);
    }
    Ok(worst)
}

/// Same quantity as [`empirical_forgetting`] but maximized over every
/// history of length `horizon - 1` with positive probability.
pub fn exhaustive_forgetting(
    model: &ChannelModel,
    window: usize,
    horizon: usize,
) -> Result<f64, ForgettingError> {
    if horizon <= window {
        return Err(ForgettingError::Horizon { horizon, window });
    }
    let len = horizon - 1;
    let prior = Belief::stationary(model)?;
    let mut worst: f64 = 0.0;
    let mut history = Vec::with_capacity(len);
    exhaust(model, &prior, &mut history, len, window, &mut worst)?;
    Ok(worst)
}

fn exhaust(
    model: &ChannelModel,
    belief: &Belief,
    history: &mut Vec<ErasurePattern>,
    len: usize,
    window: usize,
    worst: &mut f64,
) -> Result<(), ForgettingError> {
    if history.len() == len {
        let start = len.saturating_sub(window);
        let windowed = filter::run_filter(model, &history[start..])?;
        let gap = total_variation(
            &filter::predict_pattern(model, belief),
            &filter::predict_pattern(model, &windowed),
        );
        *worst = worst.max(gap);
        return Ok(());
    }
    for z in ErasurePattern::ALL {
        if filter::predict_pattern(model, belief)[z.index()] <= 0.0 {
            continue;
        }
        let next = filter::filter_step(model, belief, z)?;
        history.push(z);
        exhaust(model, &next, history, len, window, worst)?;
        history.pop();
    }
    Ok(())
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
    fn pattern_order_is_fixed() {
        let codes: Vec<_> = ErasurePattern::ALL.iter().map(|z| z.code()).collect();
        assert_eq!(codes, ["00", "01", "10", "11"]);
        for (i, z) in ErasurePattern::ALL.iter().enumerate() {
            assert_eq!(z.index(), i);
        }
    }

    #[test]
    fn single_state_is_valid_and_regular() {
        let m = ChannelModel::memoryless([0.25; 4]);
        let r = m.validate();
        assert!(r.ok());
        assert!(r.strictly_positive && r.irreducible && r.aperiodic);
        assert_eq!(m.stationary_distribution().unwrap().pi, vec![1.0]);
    }

    #[test]
    fn identity_transition_is_reducible() {
        let m = ChannelModel::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], vec![[0.25; 4]; 2]).unwrap();
        assert!(!m.validate().irreducible);
        assert_eq!(m.stationary_distribution(), Err(ModelError::NoUniqueStationary));
    }

    #[test]
    fn periodic_chain_detected() {
        let m = ChannelModel::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]], vec![[0.25; 4]; 2]).unwrap();
        let r = m.validate();
        assert!(r.irreducible);
        assert!(!r.aperiodic);
    }

    #[test]
    fn row_sum_violation_reported() {
        let m = ChannelModel::new(vec![vec![0.5, 0.4], vec![0.5, 0.5]], vec![[0.25; 4]; 2]).unwrap();
        let r = m.validate();
        assert!(!r.ok());
        assert!(r.violations[0].contains("row not stochastic"), "{:?}", r.violations);
        assert!(ChannelModel::checked(vec![vec![0.5, 0.4], vec![0.5, 0.5]], vec![[0.25; 4]; 2]).is_err());
    }

    #[test]
    fn dimension_mismatch_is_structural() {
        let err = ChannelModel::new(vec![vec![1.0, 0.0]], vec![[0.25; 4]]).unwrap_err();
        assert!(matches!(err, ModelError::Dimension { .. }));
        let err = ChannelModel::new(vec![vec![1.0]], vec![]).unwrap_err();
        assert!(matches!(err, ModelError::Dimension { .. }));
    }

    #[test]
    fn stationary_examples() {
        let sym = ChannelModel::new(vec![vec![0.5, 0.5]; 2], vec![[0.25; 4]; 2]).unwrap();
        let pi = sym.stationary_distribution().unwrap().pi;
        assert!((pi[0] - 0.5).abs() < 1e-12 && (pi[1] - 0.5).abs() < 1e-12);

        // balance: 0.1 π0 = 0.2 π1
        let pi = two_state().stationary_distribution().unwrap();
        assert!((pi.pi[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((pi.pi[1] - 1.0 / 3.0).abs() < 1e-12);
        assert!(pi.residual(&two_state()) < 1e-12);
    }

    #[test]
    fn sigma_examples() {
        assert_eq!(ChannelModel::memoryless([0.25; 4]).forgetting_rate_bound(), Some(1.0));
        let half = ChannelModel::new(vec![vec![0.5, 0.5]; 2], vec![[0.25; 4]; 2]).unwrap();
        assert_eq!(half.forgetting_rate_bound(), Some(1.0));
        let zero = ChannelModel::new(vec![vec![0.5, 0.5]; 2], vec![[0.5, 0.5, 0.0, 0.0]; 2]).unwrap();
        assert_eq!(zero.forgetting_rate_bound(), None);
        let ge = two_state().forgetting_rate_bound().unwrap();
        assert!((ge - 2.0 * 0.1 * (0.01 / 0.81)).abs() < 1e-15);
    }

    #[test]
    fn sampling_is_seed_deterministic() {
        let m = two_state();
        let a = m.sample_trajectory(500, 7).unwrap();
        let b = m.sample_trajectory(500, 7).unwrap();
        assert_eq!(a, b);
        let c = m.sample_trajectory(500, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn deterministic_emission_yields_constant_patterns() {
        let m = ChannelModel::new(vec![vec![0.3, 0.7], vec![0.6, 0.4]], vec![[1.0, 0.0, 0.0, 0.0]; 2]).unwrap();
        let (_, z) = m.sample_trajectory(1000, 1).unwrap();
        assert!(z.iter().all(|p| *p == ErasurePattern::new(false, false)));
    }

    #[test]
    fn forgetting_window_errors_and_trivial_cases() {
        let m = two_state();
        assert!(matches!(
            empirical_forgetting(&m, 4, 4, 10, 0),
            Err(ForgettingError::Horizon { .. })
        ));
        let memless = ChannelModel::memoryless([0.4, 0.3, 0.2, 0.1]);
        assert!(empirical_forgetting(&memless, 1, 6, 50, 3).unwrap() < 1e-15);
        assert!(exhaustive_forgetting(&m, 3, 4).unwrap() < 1e-12);
        assert!(empirical_forgetting(&m, 5, 6, 50, 3).unwrap() < 1e-12);
    }
}
