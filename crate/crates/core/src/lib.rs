//! Capacity-region approximations and optimal coding schedulers for the
//! two-user broadcast packet erasure channel with feedback, where erasures
//! are driven by a hidden Markov chain.
//!
//! * [`channel`]: the hidden-Markov erasure model.
//! * [`filter`]: exact state filtering and feedback-window tables.
//! * [`lp`]: a small dense simplex solver.
//! * [`region`]: region programs, action distributions, link capacities and cuts.
//! * [`sim`]: slot-level simulation of the transmitter queue network.
//! * [`gf2`]: sparse GF(2) elimination used to verify decodability.
//! * [`io`]: model files and output formatting.

pub mod channel;
pub mod filter;
pub mod gf2;
pub mod io;
pub mod lp;
pub mod region;
pub mod sim;

pub use channel::{ChannelModel, ErasurePattern, ModelError, StationaryDistribution, ValidationReport};
pub use filter::{Belief, ErasureStats, FilterError, WindowTable};
pub use lp::{LinearProgram, LpError, LpSolution, LpStatus};
pub use region::{
    Action, ActionDistribution, CanonicalCase, CapacitySet, CutValues, ParetoPoint, RegionError, RegionWitness,
};
pub use sim::{Scheduler, SimConfig, SimReport, StabilityVerdict};
