//! Slot-synchronous simulation of the transmitter queue network.
//!
//! Each slot: Bernoulli arrivals, scheduler decision, channel draw, queue
//! movement, then the filter (or feedback window) absorbs the realized
//! pattern. Idle slots still advance the channel and the filter.

pub mod decode;
pub mod queues;
pub mod scheduler;

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ChannelModel, ChannelSampler, ErasurePattern, ModelError};
use crate::filter::{self, Belief, FilterError};
use crate::region::ActionDistribution;

pub use decode::{decode_verify, read_trace, write_trace, DecodeReport, TraceError};
pub use queues::{Decision, Movement, QueueId, QueueState, StepOutcome, Transmission};
pub use scheduler::{maxweight_action, maxweight_weights, probabilistic_action, substitute};

/// Runs shorter than this never get a definite verdict.
pub const MIN_VERDICT_SLOTS: u64 = 10_000;
pub const STABLE_SLOPE: f64 = 1e-4;
pub const UNSTABLE_SLOPE: f64 = 1e-2;
pub const DEFAULT_BACKLOG_BOUND: f64 = 500.0;
/// Number of checkpoints kept for a long run.
pub const CHECKPOINTS: u64 = 4096;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("slot {slot}: infeasible decision {decision:?}")]
    InfeasibleAction { slot: u64, decision: Decision },
    #[error("slot {slot}: packet conservation violated")]
    Conservation { slot: u64 },
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Filter(#[from] FilterError),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Scheduler {
    /// Max-weight on statistics predicted by the full-history filter.
    MaxWeight,
    /// Randomized actions drawn from `P(a | last L patterns)`.
    Probabilistic { dist: ActionDistribution },
}

impl Scheduler {
    pub fn name(&self) -> &'static str {
        match self {
            Scheduler::MaxWeight => "maxweight",
            Scheduler::Probabilistic { .. } => "probabilistic",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub r1: f64,
    pub r2: f64,
    pub slots: u64,
    pub seed: u64,
    /// keep every transmission in the report (for trace dumps)
    #[serde(default)]
    pub record_trace: bool,
    /// keep one [`SlotRecord`] per slot
    #[serde(default)]
    pub record_slots: bool,
    /// run the GF(2) decodability check at the end
    #[serde(default = "yes")]
    pub verify: bool,
    #[serde(default = "default_bound")]
    pub backlog_bound: f64,
}

fn yes() -> bool {
    true
}

fn default_bound() -> f64 {
    DEFAULT_BACKLOG_BOUND
}

impl SimConfig {
    pub fn new(r1: f64, r2: f64, slots: u64, seed: u64) -> Self {
        Self {
            r1,
            r2,
            slots,
            seed,
            record_trace: false,
            record_slots: false,
            verify: true,
            backlog_bound: DEFAULT_BACKLOG_BOUND,
        }
    }

    fn check(&self) -> Result<(), SimError> {
        for (name, r) in [("r1", self.r1), ("r2", self.r2)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(SimError::Config(format!("{name} = {r} is not in [0, 1]")));
            }
        }
        if self.slots == 0 {
            return Err(SimError::Config("slots must be at least 1".into()));
        }
        if self.backlog_bound.is_nan() || self.backlog_bound < 0.0 {
            return Err(SimError::Config("backlog bound must be nonnegative".into()));
        }
        Ok(())
    }

    /// First slot counted by the throughput estimates.
    pub fn warmup(&self) -> u64 {
        self.slots / 10
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub slot: u64,
    pub total: u64,
    pub arrivals: [u64; 2],
    pub delivered: [u64; 2],
    /// `[Q1, Q2, Q3]` lengths per receiver
    pub queues: [[u64; 3]; 2],
}

/// One row of the optional per-slot CSV.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub slot: u64,
    pub action: String,
    pub z1: bool,
    pub z2: bool,
    pub total: u64,
    /// cumulative deliveries
    pub delivered1: u64,
    pub delivered2: u64,
}

/// Least-squares fit of the total backlog over the second half of the run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BacklogFit {
    pub from_slot: u64,
    pub slope: f64,
    pub mean: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum StabilityVerdict {
    Stable,
    Unstable,
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub scheduler: String,
    pub config: SimConfig,
    pub arrivals: [u64; 2],
    pub delivered: [u64; 2],
    pub in_system: [u64; 2],
    pub final_total: u64,
    pub action_histogram: BTreeMap<String, u64>,
    /// sampled actions that had to be replaced because their queues were empty
    pub substitutions: u64,
    /// arrivals and deliveries per slot after warmup
    pub arrival_rate: [f64; 2],
    pub throughput: [f64; 2],
    pub backlog: BacklogFit,
    pub verdict: StabilityVerdict,
    pub decode: Option<DecodeReport>,
    pub checkpoints: Vec<Checkpoint>,
    #[serde(skip)]
    pub trace: Vec<Transmission>,
    #[serde(skip)]
    pub slots: Vec<SlotRecord>,
}

/// Running sums for a least-squares line through `(t, q_t)`.
#[derive(Default)]
struct LineFit {
    n: f64,
    st: f64,
    sq: f64,
    stt: f64,
    stq: f64,
}

impl LineFit {
    fn push(&mut self, t: f64, q: f64) {
        self.n += 1.0;
        self.st += t;
        self.sq += q;
        self.stt += t * t;
        self.stq += t * q;
    }

    fn slope(&self) -> f64 {
        let den = self.n * self.stt - self.st * self.st;
        if den <= 0.0 {
            0.0
        } else {
            (self.n * self.stq - self.st * self.sq) / den
        }
    }

    fn mean(&self) -> f64 {
        if self.n == 0.0 {
            0.0
        } else {
            self.sq / self.n
        }
    }
}

/// Per-slot state the scheduler sees.
enum Observer<'a> {
    Filter(Belief),
    Window {
        dist: &'a ActionDistribution,
        index: usize,
        mask: usize,
    },
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Runs one simulation. The channel, the arrivals and the randomized
/// scheduler use separate ChaCha streams derived from `config.seed`, so the
/// arrival sequence does not depend on the scheduler.
pub fn simulate(
    model: &ChannelModel,
    scheduler: &Scheduler,
    config: &SimConfig,
) -> Result<SimReport, SimError> {
    config.check()?;
    let mut channel = ChannelSampler::new(model, config.seed)?;
    let mut arrivals_rng = stream_rng(config.seed, 1);
    let mut action_rng = stream_rng(config.seed, 2);

    let mut observer = match scheduler {
        Scheduler::MaxWeight => Observer::Filter(Belief::stationary(model)?),
        Scheduler::Probabilistic { dist } => {
            let windows = 1usize << (2 * dist.len);
            if dist.rows.len() != windows {
                return Err(SimError::Config(format!(
                    "action distribution has {} rows, expected {windows} for L = {}",
                    dist.rows.len(),
                    dist.len
                )));
            }
            // the window starts full: the channel runs L slots before the
            // first arrival
            let mut index = 0;
            for _ in 0..dist.len {
                let (_, z) = channel.next_slot();
                index = ((index << 2) | z.index()) & (windows - 1);
            }
            Observer::Window {
                dist,
                index,
                mask: windows - 1,
            }
        }
    };

    let n = config.slots;
    let warmup = config.warmup();
    let stride = (n / CHECKPOINTS).max(1);
    let half = n / 2;
    let keep_trace = config.record_trace || config.verify;

    let mut state = QueueState::new();
    let mut fit = LineFit::default();
    let mut histogram: BTreeMap<String, u64> = BTreeMap::new();
    let mut substitutions = 0;
    let mut checkpoints = Vec::new();
    let mut trace = Vec::new();
    let mut slots = Vec::new();
    let mut at_warmup = ([0u64; 2], [0u64; 2]);

    for t in 0..n {
        if t == warmup {
            at_warmup = ([state.arrivals(0), state.arrivals(1)], [state.delivered(0), state.delivered(1)]);
        }
        if arrivals_rng.random::<f64>() < config.r1 {
            state.arrive(0);
        }
        if arrivals_rng.random::<f64>() < config.r2 {
            state.arrive(1);
        }

        let decision = match &observer {
            Observer::Filter(belief) => maxweight_action(&state, &filter::predict_stats(model, belief)),
            Observer::Window { dist, index, .. } => {
                let d = probabilistic_action(*index, dist, &state, &mut action_rng);
                if !matches!(d, Decision::Act(_)) && !state.is_empty() {
                    substitutions += 1;
                }
                d
            }
        };
        *histogram.entry(decision.label()).or_default() += 1;

        let (_, z) = channel.next_slot();
        let outcome = state.step(decision, z)?;
        if keep_trace {
            if let Some(tx) = outcome.transmission {
                trace.push(tx);
            }
        }

        match &mut observer {
            Observer::Filter(belief) => *belief = filter::filter_step(model, belief, z)?,
            Observer::Window { index, mask, .. } => *index = ((*index << 2) | z.index()) & *mask,
        }

        let total = state.total();
        if t >= half {
            fit.push(t as f64, total as f64);
        }
        if config.record_slots {
            slots.push(slot_record(t, decision, z, &state));
        }
        if (t + 1) % stride == 0 || t + 1 == n {
            if !state.conserves() {
                return Err(SimError::Conservation { slot: t });
            }
            checkpoints.push(Checkpoint {
                slot: t,
                total,
                arrivals: [state.arrivals(0), state.arrivals(1)],
                delivered: [state.delivered(0), state.delivered(1)],
                queues: [0, 1].map(|rx| {
                    [QueueId::Q1, QueueId::Q2, QueueId::Q3].map(|q| state.len(rx, q) as u64)
                }),
            });
        }
    }

    let measured = (n - warmup) as f64;
    let rate = |now: u64, then: u64| (now - then) as f64 / measured;
    let decode = config.verify.then(|| decode_verify(&trace));
    if !config.record_trace {
        trace = Vec::new();
    }
    let backlog = BacklogFit {
        from_slot: half,
        slope: fit.slope(),
        mean: fit.mean(),
    };
    let mut report = SimReport {
        scheduler: scheduler.name().into(),
        config: config.clone(),
        arrivals: [state.arrivals(0), state.arrivals(1)],
        delivered: [state.delivered(0), state.delivered(1)],
        in_system: [state.in_system(0), state.in_system(1)],
        final_total: state.total(),
        action_histogram: histogram,
        substitutions,
        arrival_rate: [
            rate(state.arrivals(0), at_warmup.0[0]),
            rate(state.arrivals(1), at_warmup.0[1]),
        ],
        throughput: [
            rate(state.delivered(0), at_warmup.1[0]),
            rate(state.delivered(1), at_warmup.1[1]),
        ],
        backlog,
        verdict: StabilityVerdict::Inconclusive,
        decode,
        checkpoints,
        trace,
        slots,
    };
    report.verdict = stability_verdict(&report);
    Ok(report)
}

fn slot_record(t: u64, decision: Decision, z: ErasurePattern, state: &QueueState) -> SlotRecord {
    SlotRecord {
        slot: t,
        action: decision.label(),
        z1: z.z1,
        z2: z.z2,
        total: state.total(),
        delivered1: state.delivered(0),
        delivered2: state.delivered(1),
    }
}

/// Stable when the backlog trend over the second half is flat and its mean
/// stays under the configured bound; unstable on clear linear growth.
pub fn stability_verdict(report: &SimReport) -> StabilityVerdict {
    if report.config.slots < MIN_VERDICT_SLOTS {
        return StabilityVerdict::Inconclusive;
    }
    let b = &report.backlog;
    if b.slope <= STABLE_SLOPE && b.mean <= report.config.backlog_bound {
        StabilityVerdict::Stable
    } else if b.slope >= UNSTABLE_SLOPE {
        StabilityVerdict::Unstable
    } else {
        StabilityVerdict::Inconclusive
    }
}

/// Runs several seeds in parallel.
pub fn simulate_seeds(
    model: &ChannelModel,
    scheduler: &Scheduler,
    config: &SimConfig,
    seeds: &[u64],
) -> Result<Vec<SimReport>, SimError> {
    use rayon::prelude::*;
    seeds
        .par_iter()
        .map(|&seed| {
            let mut c = config.clone();
            c.seed = seed;
            simulate(model, scheduler, &c)
        })
        .collect()
}
