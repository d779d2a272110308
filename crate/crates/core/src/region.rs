//! L-th order capacity-region approximation, action distributions, link
//! capacities and cuts of the per-receiver queue network, and the
//! P3/P5 re-split that makes two of the four cuts redundant.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::ChannelModel;
use crate::filter::{self, FilterError, WindowTable};
use crate::lp::{self, LinearProgram, LpError, LpStatus};

/// Tolerance on rate constraints of witnesses and achievability checks.
pub const RATE_TOL: f64 = 1e-8;
/// Tolerance of the Case I test in [`canonicalize`]; ties go to Case I.
pub const CASE_TOL: f64 = 1e-10;
/// Default number of weight points in a boundary sweep.
pub const DEFAULT_SWEEP_POINTS: usize = 33;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegionError {
    #[error(transparent)]
    Lp(#[from] LpError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("region program ended with status {0:?}")]
    NoSolution(LpStatus),
    #[error("contract violation: {0}")]
    Contract(String),
}

/// The five transmitter actions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Action {
    /// original packet from Q1 of Rx1
    SendRx1 = 1,
    /// original packet from Q1 of Rx2
    SendRx2 = 2,
    /// XOR of the heads of both Q2 queues
    Coded = 3,
    /// XOR of the heads of both Q1 queues
    Poison = 4,
    /// pending remedy packet
    Remedy = 5,
}

impl Action {
    pub const ALL: [Action; 5] = [
        Action::SendRx1,
        Action::SendRx2,
        Action::Coded,
        Action::Poison,
        Action::Remedy,
    ];

    pub fn number(self) -> u8 {
        self as u8
    }

    pub fn from_number(n: u8) -> Option<Self> {
        Self::ALL.get((n as usize).wrapping_sub(1)).copied()
    }

    /// Uncoded send to receiver `rx` (0 or 1).
    pub fn send(rx: usize) -> Self {
        if rx == 0 {
            Action::SendRx1
        } else {
            Action::SendRx2
        }
    }
}

/// Region variables at one weight point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionWitness {
    pub len: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub r1: f64,
    pub r2: f64,
}

/// `P(a | z^L)`, one probability 5-vector per window (actions 1..5).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionDistribution {
    pub len: usize,
    pub rows: Vec<[f64; 5]>,
}

impl ActionDistribution {
    pub fn prob(&self, window: usize, action: Action) -> f64 {
        self.rows[window][action as usize - 1]
    }

    /// Largest deviation of a row sum from 1 or most negative entry.
    pub fn max_row_error(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| {
                let sum: f64 = r.iter().sum();
                let neg = r.iter().fold(0.0f64, |m, &p| m.max(-p));
                (sum - 1.0).abs().max(neg)
            })
            .fold(0.0, f64::max)
    }
}

/// Link capacities of one receiver's queue network, packets per slot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkCapacities {
    pub c12: f64,
    pub c13: f64,
    pub c14: f64,
    pub c24: f64,
    pub c32: f64,
    pub c34: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CapacitySet {
    pub rx: [LinkCapacities; 2],
}

/// The four Q1→Q4 cut values of one receiver network.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Cuts {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Cuts {
    pub fn min(&self) -> f64 {
        self.a.min(self.b).min(self.c).min(self.d)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CutValues {
    pub rx: [Cuts; 2],
}

/// Column of `x(z)` in [`region_lp`]; `y(z)` follows after all `x`.
pub fn x_var(window: usize) -> usize {
    2 + window
}

pub fn y_var(windows: usize, window: usize) -> usize {
    2 + windows + window
}

/// Weighted-sum program over `(R1, R2, x, y)` with additive slack `slack`
/// on each rate constraint. `slack = 0` gives the nominal region.
pub fn region_lp(table: &WindowTable, w1: f64, w2: f64, slack: f64) -> LinearProgram {
    let m = table.num_windows();
    let n = 2 + 2 * m;
    let mut objective = vec![0.0; n];
    objective[0] = w1;
    objective[1] = w2;
    let mut lp = LinearProgram::new(n).maximize(objective);
    for j in 2..n {
        lp.bounds[j] = (0.0, 1.0);
    }
    let mut r1_direct = vec![0.0; n];
    let mut r1_coded = vec![0.0; n];
    let mut r2_direct = vec![0.0; n];
    let mut r2_coded = vec![0.0; n];
    r1_direct[0] = 1.0;
    r1_coded[0] = 1.0;
    r2_direct[1] = 1.0;
    r2_coded[1] = 1.0;
    let mut both = 0.0;
    for (z, row) in table.rows.iter().enumerate() {
        let p = row.prob;
        let s = &row.stats;
        // R1 ≤ Σ P (1-ε1) x
        r1_direct[x_var(z)] = -p * (1.0 - s.eps1);
        // R1 ≤ Σ P (1-ε12)(1-y)
        r1_coded[y_var(m, z)] = p * (1.0 - s.eps12);
        // R2 ≤ Σ P (1-ε2) y
        r2_direct[y_var(m, z)] = -p * (1.0 - s.eps2);
        // R2 ≤ Σ P (1-ε12)(1-x)
        r2_coded[x_var(z)] = p * (1.0 - s.eps12);
        both += p * (1.0 - s.eps12);
    }
    lp.le(r1_direct, slack)
        .le(r1_coded, both + slack)
        .le(r2_direct, slack)
        .le(r2_coded, both + slack)
}

/// Solves the weighted region program; `None` when the (shifted) region is
/// empty.
pub fn weighted_optimum(
    table: &WindowTable,
    w1: f64,
    w2: f64,
    slack: f64,
) -> Result<Option<(f64, RegionWitness)>, RegionError> {
    if w1 < 0.0 || w2 < 0.0 || w1 + w2 <= 0.0 {
        return Err(RegionError::Contract(format!("weights ({w1}, {w2}) must be nonnegative and not both zero")));
    }
    let lp = region_lp(table, w1, w2, slack);
    let sol = lp::solve(&lp)?;
    match sol.status {
        LpStatus::Optimal => {}
        LpStatus::Infeasible => return Ok(None),
        status => return Err(RegionError::NoSolution(status)),
    }
    let m = table.num_windows();
    let witness = RegionWitness {
        len: table.len,
        r1: sol.point[0],
        r2: sol.point[1],
        x: sol.point[2..2 + m].to_vec(),
        y: sol.point[2 + m..].to_vec(),
    };
    if lp.max_violation(&sol.point) > RATE_TOL {
        return Err(RegionError::Contract("region optimum violates its constraints".into()));
    }
    Ok(Some((sol.value, witness)))
}

/// Right-hand sides of the four rate constraints at `(x, y)`, without slack:
/// `[R1 direct, R1 coded, R2 direct, R2 coded]`.
pub fn rate_bounds(table: &WindowTable, x: &[f64], y: &[f64]) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (z, row) in table.rows.iter().enumerate() {
        let (p, s) = (row.prob, &row.stats);
        out[0] += p * (1.0 - s.eps1) * x[z];
        out[1] += p * (1.0 - s.eps12) * (1.0 - y[z]);
        out[2] += p * (1.0 - s.eps2) * y[z];
        out[3] += p * (1.0 - s.eps12) * (1.0 - x[z]);
    }
    out
}

impl RegionWitness {
    /// Checks the box and rate constraints with slack `slack`.
    pub fn is_valid(&self, table: &WindowTable, slack: f64) -> bool {
        let in_box = self
            .x
            .iter()
            .chain(&self.y)
            .all(|v| (-RATE_TOL..=1.0 + RATE_TOL).contains(v));
        let b = rate_bounds(table, &self.x, &self.y);
        in_box
            && self.r1 <= b[0] + slack + RATE_TOL
            && self.r1 <= b[1] + slack + RATE_TOL
            && self.r2 <= b[2] + slack + RATE_TOL
            && self.r2 <= b[3] + slack + RATE_TOL
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub lambda: f64,
    pub r1: f64,
    pub r2: f64,
    pub witness: RegionWitness,
}

/// Pareto points of the nominal region for weights `(λ, 1-λ)`, λ on a
/// uniform grid of `k` points, sorted by `R1` with duplicates removed.
pub fn boundary_sweep(model: &ChannelModel, len: usize, k: usize) -> Result<Vec<ParetoPoint>, RegionError> {
    let table = filter::window_table(model, len)?;
    boundary_sweep_table(&table, k)
}

pub fn boundary_sweep_table(table: &WindowTable, k: usize) -> Result<Vec<ParetoPoint>, RegionError> {
    let points = sweep_all(table, k)?;
    let mut out: Vec<ParetoPoint> = Vec::with_capacity(points.len());
    for p in points {
        if !out
            .iter()
            .any(|q| (q.r1 - p.r1).abs() <= 1e-9 && (q.r2 - p.r2).abs() <= 1e-9)
        {
            out.push(p);
        }
    }
    out.sort_by(|a, b| a.r1.total_cmp(&b.r1).then(b.r2.total_cmp(&a.r2)));
    Ok(out)
}

/// One point per λ in grid order, without deduplication.
pub fn sweep_all(table: &WindowTable, k: usize) -> Result<Vec<ParetoPoint>, RegionError> {
    if k < 2 {
        return Err(RegionError::Contract(format!("sweep needs at least 2 points, got {k}")));
    }
    (0..k)
        .into_par_iter()
        .map(|i| {
            let lambda = i as f64 / (k - 1) as f64;
            let (_, witness) = weighted_optimum(table, lambda, 1.0 - lambda, 0.0)?
                .ok_or(RegionError::NoSolution(LpStatus::Infeasible))?;
            if !witness.is_valid(table, 0.0) {
                return Err(RegionError::Contract(format!("witness at λ={lambda} fails re-check")));
            }
            Ok(ParetoPoint {
                lambda,
                r1: witness.r1,
                r2: witness.r2,
                witness,
            })
        })
        .collect()
}

/// Weighted-sum values of the inner (negative slack), nominal and outer
/// (positive slack) approximations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sandwich {
    pub sigma: Option<f64>,
    pub slack: Option<f64>,
    /// `None` when σ is unavailable or the inner region is empty
    pub inner: Option<f64>,
    pub nominal: f64,
    pub outer: Option<f64>,
}

pub fn sandwich(model: &ChannelModel, len: usize, w1: f64, w2: f64) -> Result<Sandwich, RegionError> {
    let table = filter::window_table(model, len)?;
    let sigma = model.forgetting_rate_bound();
    let value = |slack: f64| -> Result<Option<f64>, RegionError> {
        Ok(weighted_optimum(&table, w1, w2, slack)?.map(|(v, _)| v))
    };
    let nominal = value(0.0)?.ok_or(RegionError::NoSolution(LpStatus::Infeasible))?;
    let Some(sigma) = sigma else {
        return Ok(Sandwich {
            sigma: None,
            slack: None,
            inner: None,
            nominal,
            outer: None,
        });
    };
    let slack = 2.0 * (1.0 - sigma).powi(len as i32);
    Ok(Sandwich {
        sigma: Some(sigma),
        slack: Some(slack),
        inner: value(-slack)?,
        nominal,
        outer: value(slack)?,
    })
}

/// How the overlap `s = P3 + P5` is chosen per window in [`xy_to_actions`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPolicy {
    /// Position of `s` in its admissible interval `[max(0,x+y-1), min(x,y)]`.
    pub position: f64,
    /// Fraction of `s` assigned to action 5.
    pub remedy_share: f64,
}

impl Default for SplitPolicy {
    fn default() -> Self {
        Self {
            position: 0.0,
            remedy_share: 0.0,
        }
    }
}

impl SplitPolicy {
    pub fn at(position: f64) -> Self {
        Self {
            position,
            ..Self::default()
        }
    }
}

/// Maps region variables to a distribution with `P1+P3+P5 = x` and
/// `P2+P3+P5 = y` in every window.
pub fn xy_to_actions(witness: &RegionWitness, policy: SplitPolicy) -> Result<ActionDistribution, RegionError> {
    if witness.x.len() != witness.y.len() {
        return Err(RegionError::Contract("x and y have different lengths".into()));
    }
    let mut rows = Vec::with_capacity(witness.x.len());
    for (z, (&x, &y)) in witness.x.iter().zip(&witness.y).enumerate() {
        if !(-RATE_TOL..=1.0 + RATE_TOL).contains(&x) || !(-RATE_TOL..=1.0 + RATE_TOL).contains(&y) {
            return Err(RegionError::Contract(format!("window {z}: x={x}, y={y} outside [0,1]")));
        }
        let (x, y) = (x.clamp(0.0, 1.0), y.clamp(0.0, 1.0));
        let lo = (x + y - 1.0).max(0.0);
        let hi = x.min(y);
        let s = lo + policy.position.clamp(0.0, 1.0) * (hi - lo).max(0.0);
        let p5 = s * policy.remedy_share.clamp(0.0, 1.0);
        let raw = [x - s, y - s, s - p5, 1.0 - x - y + s, p5];
        if let Some(p) = raw.iter().find(|&&p| p < -1e-12) {
            return Err(RegionError::Contract(format!("window {z}: negative action probability {p}")));
        }
        let clamped = raw.map(|p| p.max(0.0));
        let sum: f64 = clamped.iter().sum();
        rows.push(clamped.map(|p| p / sum));
    }
    Ok(ActionDistribution {
        len: witness.len,
        rows,
    })
}

fn check_same_len(table: &WindowTable, dist: &ActionDistribution) -> Result<(), RegionError> {
    if table.len != dist.len || table.num_windows() != dist.rows.len() {
        return Err(RegionError::Contract(format!(
            "window table has L={} but distribution has L={}",
            table.len, dist.len
        )));
    }
    Ok(())
}

/// Effective link capacities of both receiver networks under `dist`.
pub fn link_capacities(table: &WindowTable, dist: &ActionDistribution) -> Result<CapacitySet, RegionError> {
    check_same_len(table, dist)?;
    let mut caps = CapacitySet::default();
    for (row, p) in table.rows.iter().zip(&dist.rows) {
        let (pz, s) = (row.prob, &row.stats);
        let poison_rate = pz * (1.0 - s.eps12) * p[3];
        for (j, c) in caps.rx.iter_mut().enumerate() {
            let eps_j = s.eps(j);
            let own = p[j];
            c.c12 += pz * (eps_j - s.eps12) * own;
            c.c13 += poison_rate;
            c.c14 += pz * (1.0 - eps_j) * own;
            c.c24 += pz * (1.0 - eps_j) * p[2];
            c.c32 += pz * (eps_j - s.eps12) * p[4];
            c.c34 += pz * (1.0 - eps_j) * p[4];
        }
    }
    Ok(caps)
}

pub fn cut_values(caps: &CapacitySet) -> CutValues {
    let cuts = |c: &LinkCapacities| Cuts {
        a: c.c12 + c.c13 + c.c14,
        b: c.c13 + c.c14 + c.c24,
        c: c.c12 + c.c14 + c.c32 + c.c34,
        d: c.c14 + c.c24 + c.c34,
    };
    CutValues {
        rx: [cuts(&caps.rx[0]), cuts(&caps.rx[1])],
    }
}

/// Max-flow from Q1 to Q4 of receiver `rx`, i.e. its smallest cut.
pub fn max_rate(caps: &CapacitySet, rx: usize) -> f64 {
    cut_values(caps).rx[rx].min()
}

/// Which branch of the re-split construction applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CanonicalCase {
    /// `A_j ≤ D_j` for some receiver: remedy outflow matched to `c13`.
    I,
    /// `D_j ≤ A_j` for both, the larger `c34` reaches `c13`.
    IIa,
    /// `D_j ≤ A_j` for both, all mass to action 5 still leaves `c34 < c13`.
    IIb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Canonicalization {
    pub dist: ActionDistribution,
    pub case: CanonicalCase,
    /// Share of `P3 + P5` given to action 5, applied in every window.
    pub theta: f64,
}

/// Re-splits `P3 + P5` in every window between actions 3 and 5 so that cuts
/// B and C stop being binding. P1, P2 and P4 are copied unchanged.
pub fn canonicalize(dist: &ActionDistribution, table: &WindowTable) -> Result<Canonicalization, RegionError> {
    check_same_len(table, dist)?;
    let caps = link_capacities(table, dist)?;
    let all_coded = resplit(dist, 0.0);
    let all_remedy = resplit(dist, 1.0);
    let remedy_caps = link_capacities(table, &all_remedy)?;
    let c13 = caps.rx[0].c13;

    let case_one = caps
        .rx
        .iter()
        .any(|c| c.c12 + c.c13 <= c.c24 + c.c34 + CASE_TOL);
    let (case, theta) = if case_one {
        // c32 + c34 does not depend on the receiver; solve θ·S = c13
        let s = remedy_caps.rx[0].c32 + remedy_caps.rx[0].c34;
        let theta = if s > 0.0 { (c13 / s).clamp(0.0, 1.0) } else { 0.0 };
        (CanonicalCase::I, theta)
    } else {
        let top = remedy_caps.rx[0].c34.max(remedy_caps.rx[1].c34);
        if top > c13 {
            (CanonicalCase::IIa, (c13 / top).clamp(0.0, 1.0))
        } else {
            (CanonicalCase::IIb, 1.0)
        }
    };
    let dist = match theta {
        0.0 => all_coded,
        1.0 => all_remedy,
        t => resplit(dist, t),
    };
    Ok(Canonicalization { dist, case, theta })
}

/// Gives fraction `theta` of `P3 + P5` to action 5 in every window.
fn resplit(dist: &ActionDistribution, theta: f64) -> ActionDistribution {
    let rows = dist
        .rows
        .iter()
        .map(|r| {
            let s = r[2] + r[4];
            let p5 = theta * s;
            [r[0], r[1], s - p5, r[3], p5]
        })
        .collect();
    ActionDistribution { len: dist.len, rows }
}

/// Right-hand sides of the two per-receiver achievability bounds:
/// `[Σ P(1-ε_j)(P_j+P3+P5), Σ P(1-ε12)(P_j+P4)]` for `j = 1, 2`.
pub fn achievable_bounds(table: &WindowTable, dist: &ActionDistribution) -> Result<[[f64; 2]; 2], RegionError> {
    check_same_len(table, dist)?;
    let mut out = [[0.0; 2]; 2];
    for (row, p) in table.rows.iter().zip(&dist.rows) {
        let (pz, s) = (row.prob, &row.stats);
        for (j, o) in out.iter_mut().enumerate() {
            o[0] += pz * (1.0 - s.eps(j)) * (p[j] + p[2] + p[4]);
            o[1] += pz * (1.0 - s.eps12) * (p[j] + p[3]);
        }
    }
    Ok(out)
}

pub fn achievable_check(table: &WindowTable, dist: &ActionDistribution, r1: f64, r2: f64) -> Result<bool, RegionError> {
    let b = achievable_bounds(table, dist)?;
    Ok([r1, r2]
        .iter()
        .zip(&b)
        .all(|(r, bj)| *r <= bj[0] + RATE_TOL && *r <= bj[1] + RATE_TOL))
}

/// Positions of `s` tried by [`achieving_distribution`]: both ends of the
/// admissible interval and nine interior grid points.
pub const SPLIT_GRID: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

/// Finds a canonicalized distribution supporting the witness rates (less
/// `backoff`), trying the split grid in order.
pub fn achieving_distribution(
    table: &WindowTable,
    witness: &RegionWitness,
    backoff: f64,
) -> Result<Option<(Canonicalization, SplitPolicy)>, RegionError> {
    for &position in &SPLIT_GRID {
        let policy = SplitPolicy::at(position);
        let canon = canonicalize(&xy_to_actions(witness, policy)?, table)?;
        if achievable_check(table, &canon.dist, witness.r1 - backoff, witness.r2 - backoff)? {
            return Ok(Some((canon, policy)));
        }
    }
    Ok(None)
}
