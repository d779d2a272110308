//! Independent reference computations shared by the integration tests. None
//! of these call into the code under test beyond plain data types.

#![allow(dead_code)]

use bec_core::ChannelModel;
use rand::Rng;

/// Stochastic row with every entry at least `floor`.
pub fn random_row(rng: &mut impl Rng, n: usize, floor: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.random::<f64>() + 1e-3).collect();
    let sum: f64 = raw.iter().sum();
    let free = 1.0 - floor * n as f64;
    raw.iter().map(|r| floor + free * r / sum).collect()
}

pub fn random_emission(rng: &mut impl Rng, floor: f64) -> [f64; 4] {
    random_row(rng, 4, floor).try_into().unwrap()
}

/// Random strictly positive model with `n` states.
pub fn random_model(rng: &mut impl Rng, n: usize, floor: f64) -> ChannelModel {
    let transition = (0..n).map(|_| random_row(rng, n, floor)).collect();
    let emission = (0..n).map(|_| random_emission(rng, floor)).collect();
    ChannelModel::new(transition, emission).unwrap()
}

/// Stationary law by plain power iteration on `π ← πP`.
pub fn power_stationary(p: &[Vec<f64>]) -> Vec<f64> {
    let n = p.len();
    let mut pi = vec![1.0 / n as f64; n];
    for _ in 0..200_000 {
        let mut next = vec![0.0; n];
        for i in 0..n {
            for j in 0..n {
                next[j] += pi[i] * p[i][j];
            }
        }
        let diff: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if diff < 1e-15 {
            break;
        }
    }
    pi
}

/// Probability of the pattern sequence `zs` followed by each next pattern,
/// by summing over every hidden state path of length `zs.len() + 1`.
/// Returns `(P(zs), [P(zs, z) for z in 0..4])`.
pub fn brute_force_window(model: &ChannelModel, zs: &[usize]) -> (f64, [f64; 4]) {
    let n = model.num_states();
    let pi = power_stationary(model.transition());
    let len = zs.len() + 1;
    let mut joint = [0.0; 4];
    let mut path = vec![0usize; len];
    let total_paths = n.pow(len as u32);
    for code in 0..total_paths {
        let mut c = code;
        for s in path.iter_mut() {
            *s = c % n;
            c /= n;
        }
        let mut p = pi[path[0]];
        for t in 1..len {
            p *= model.transition()[path[t - 1]][path[t]];
        }
        for (t, &z) in zs.iter().enumerate() {
            p *= model.emission()[path[t]][z];
        }
        for (z, j) in joint.iter_mut().enumerate() {
            *j += p * model.emission()[path[len - 1]][z];
        }
    }
    (joint.iter().sum(), joint)
}

/// Maximizes `c·x` subject to `A x ≤ b`, `x ≥ 0` by enumerating every basic
/// solution (intersection of `n` tight hyperplanes). `None` when no vertex is
/// feasible. Only meant for a handful of variables.
pub fn vertex_enumeration(c: &[f64], a: &[Vec<f64>], b: &[f64]) -> Option<f64> {
    let n = c.len();
    // hyperplanes: the m constraints followed by x_i = 0
    let mut planes: Vec<(Vec<f64>, f64)> = a.iter().cloned().zip(b.iter().copied()).collect();
    for i in 0..n {
        let mut e = vec![0.0; n];
        e[i] = 1.0;
        planes.push((e, 0.0));
    }
    let feasible = |x: &[f64]| {
        x.iter().all(|&v| v >= -1e-9)
            && a.iter()
                .zip(b)
                .all(|(row, &bi)| row.iter().zip(x).map(|(r, v)| r * v).sum::<f64>() <= bi + 1e-9)
    };
    let mut best: Option<f64> = None;
    let mut choose = vec![0usize; n];
    fn next_combo(idx: &mut [usize], total: usize) -> bool {
        let k = idx.len();
        for i in (0..k).rev() {
            if idx[i] < total - k + i {
                idx[i] += 1;
                for j in i + 1..k {
                    idx[j] = idx[j - 1] + 1;
                }
                return true;
            }
        }
        false
    }
    for (i, v) in choose.iter_mut().enumerate() {
        *v = i;
    }
    loop {
        let rows: Vec<&(Vec<f64>, f64)> = choose.iter().map(|&i| &planes[i]).collect();
        if let Some(x) = solve_square(&rows) {
            if feasible(&x) {
                let v: f64 = c.iter().zip(&x).map(|(a, b)| a * b).sum();
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
        if !next_combo(&mut choose, planes.len()) {
            break;
        }
    }
    best
}

fn solve_square(rows: &[&(Vec<f64>, f64)]) -> Option<Vec<f64>> {
    let n = rows.len();
    let mut m: Vec<Vec<f64>> = rows
        .iter()
        .map(|(r, b)| {
            let mut row = r.clone();
            row.push(*b);
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[i][col].abs().total_cmp(&m[j][col].abs()))?;
        if m[piv][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = m[r][col] / m[col][col];
                for k in col..=n {
                    m[r][k] -= f * m[col][k];
                }
            }
        }
    }
    Some((0..n).map(|i| m[i][n] / m[i][i]).collect())
}

/// Edmonds–Karp max flow on a dense capacity matrix.
pub fn max_flow(cap: &[Vec<f64>], source: usize, sink: usize) -> f64 {
    let n = cap.len();
    let mut residual = cap.to_vec();
    let mut flow = 0.0;
    loop {
        let mut parent = vec![usize::MAX; n];
        parent[source] = source;
        let mut queue = std::collections::VecDeque::from([source]);
        while let Some(u) = queue.pop_front() {
            for v in 0..n {
                if parent[v] == usize::MAX && residual[u][v] > 1e-15 {
                    parent[v] = u;
                    queue.push_back(v);
                }
            }
        }
        if parent[sink] == usize::MAX {
            return flow;
        }
        let mut push = f64::INFINITY;
        let mut v = sink;
        while v != source {
            let u = parent[v];
            push = push.min(residual[u][v]);
            v = u;
        }
        let mut v = sink;
        while v != source {
            let u = parent[v];
            residual[u][v] -= push;
            residual[v][u] += push;
            v = u;
        }
        flow += push;
    }
}

/// Erasure statistics `(ε1, ε2, ε12)` of a pattern distribution.
pub fn eps_of(p: &[f64; 4]) -> (f64, f64, f64) {
    (p[2] + p[3], p[1] + p[3], p[3])
}

/// Slack of the memoryless closed-form region at `(r1, r2)`: the two
/// constraint values `1 - lhs`.
pub fn memoryless_slack(e: &[f64; 4], r1: f64, r2: f64) -> [f64; 2] {
    let (e1, e2, e12) = eps_of(e);
    [
        1.0 - r1 / (1.0 - e1) - r2 / (1.0 - e12),
        1.0 - r1 / (1.0 - e12) - r2 / (1.0 - e2),
    ]
}

/// Weighted-sum optimum of the memoryless region, by checking its (at most
/// four) vertices.
pub fn memoryless_weighted(e: &[f64; 4], w1: f64, w2: f64) -> f64 {
    let (e1, e2, e12) = eps_of(e);
    let (a1, b1) = (1.0 / (1.0 - e1), 1.0 / (1.0 - e12));
    let (a2, b2) = (1.0 / (1.0 - e12), 1.0 / (1.0 - e2));
    let mut cands = vec![(0.0, 0.0), ((1.0 / a1).min(1.0 / a2), 0.0), (0.0, (1.0 / b1).min(1.0 / b2))];
    let det = a1 * b2 - b1 * a2;
    if det.abs() > 1e-14 {
        let r1 = (b2 - b1) / det;
        let r2 = (a1 - a2) / det;
        cands.push((r1, r2));
    }
    cands
        .into_iter()
        .filter(|&(r1, r2)| {
            r1 >= -1e-12 && r2 >= -1e-12 && a1 * r1 + b1 * r2 <= 1.0 + 1e-9 && a2 * r1 + b2 * r2 <= 1.0 + 1e-9
        })
        .map(|(r1, r2)| w1 * r1 + w2 * r2)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// The Gilbert-Elliott-style reference model of the acceptance experiments.
pub fn reference_model() -> ChannelModel {
    ChannelModel::new(
        vec![vec![0.9, 0.1], vec![0.2, 0.8]],
        vec![[0.81, 0.09, 0.09, 0.01], [0.04, 0.16, 0.16, 0.64]],
    )
    .unwrap()
}
