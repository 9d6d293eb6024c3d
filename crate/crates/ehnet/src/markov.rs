//! The joint-battery chain: exact transition matrix, stationary distribution,
//! and per-state throughput accounting.
//!
//! States are the slot-boundary battery pairs `(i, j)` with
//! `0 <= i < gamma1`, `0 <= j < gamma2`, indexed row-major as
//! `s = i * gamma2 + j`. Each slot the pair moves by the joint harvest:
//! stay on no harvest, and a node that harvests steps up by one quantum,
//! wrapping to zero exactly when it reaches its threshold (the wrap is the
//! transmission).

use nalgebra::{DMatrix, DVector};

use crate::analytic::{Source, ThroughputReport};
use crate::error::{Error, Result};
use crate::model::NetworkConfig;

/// Residual target for the stationary solve, `max |pi P - pi| <= 1e-12`.
pub const RESIDUAL_TARGET: f64 = 1e-12;

/// Mass below which a state is treated as outside the support.
pub const SUPPORT_TOLERANCE: f64 = 1e-12;

/// Work cap for the iterative solve, in arc traversals. Chains in this
/// domain have at most four arcs per state, so the cap translates into tens
/// of millions of iterations for small chains while keeping a pathological
/// (huge, slowly mixing) input from spinning for hours.
const ITERATION_OPS_BUDGET: u64 = 20_000_000_000;

/// Row-stochastic transition matrix over the `gamma1 x gamma2` state grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    gamma1: u32,
    gamma2: u32,
    data: Vec<f64>,
}

impl TransitionMatrix {
    /// Builds a matrix from row-major entries over the `gamma1 x gamma2`
    /// grid, checking shape and row stochasticity.
    pub fn from_rows(gamma1: u32, gamma2: u32, data: Vec<f64>) -> Result<Self> {
        let n = gamma1 as usize * gamma2 as usize;
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                actual: data.len(),
            });
        }
        let matrix = Self {
            gamma1,
            gamma2,
            data,
        };
        matrix.validate()?;
        Ok(matrix)
    }

    /// Number of states, `gamma1 * gamma2`.
    pub fn dim(&self) -> usize {
        self.gamma1 as usize * self.gamma2 as usize
    }

    pub fn gamma1(&self) -> u32 {
        self.gamma1
    }

    pub fn gamma2(&self) -> u32 {
        self.gamma2
    }

    /// Row-major state index of battery pair `(i, j)`.
    pub fn state_index(&self, i: u32, j: u32) -> usize {
        (i * self.gamma2 + j) as usize
    }

    /// Transition probability from state `from` to state `to`.
    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.data[from * self.dim() + to]
    }

    fn row(&self, from: usize) -> &[f64] {
        let n = self.dim();
        &self.data[from * n..(from + 1) * n]
    }

    /// Checks that every entry is a probability (up to accumulation
    /// rounding) and each row sums to one within `1e-12`.
    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        for from in 0..n {
            let mut sum = 0.0;
            for &p in self.row(from) {
                if !(0.0..=1.0 + 1e-12).contains(&p) {
                    return Err(Error::OutOfRange {
                        field: "transition probability",
                        value: p,
                    });
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-12 {
                return Err(Error::NonStochastic { sum });
            }
        }
        Ok(())
    }

    /// Serializes the matrix as `row,col,probability` CSV (zeros omitted).
    pub fn to_csv(&self) -> String {
        let n = self.dim();
        let mut out = String::from("row,col,probability\n");
        for from in 0..n {
            for to in 0..n {
                let p = self.get(from, to);
                if p > 0.0 {
                    out.push_str(&format!("{from},{to},{p}\n"));
                }
            }
        }
        out
    }
}

/// Builds the exact one-slot transition matrix for a configuration.
///
/// From `(i, j)`: stay with `p00`; with `p10` node 1 steps (wrapping at its
/// threshold); with `p01` node 2 steps; with `p11` both step. Wrapped
/// coordinates land on zero because the battery drains on transmission.
pub fn build_chain(config: &NetworkConfig) -> TransitionMatrix {
    let gamma1 = config.gamma1();
    let gamma2 = config.gamma2();
    let n = config.state_count();
    let probs = config.probs();
    let mut data = vec![0.0; n * n];

    let wrap = |x: u32, gamma: u32| if x >= gamma { 0 } else { x };
    for i in 0..gamma1 {
        for j in 0..gamma2 {
            let from = (i * gamma2 + j) as usize;
            let up1 = wrap(i + 1, gamma1);
            let up2 = wrap(j + 1, gamma2);
            let mut push = |ti: u32, tj: u32, p: f64| {
                data[from * n + (ti * gamma2 + tj) as usize] += p;
            };
            push(i, j, probs.p00());
            push(up1, j, probs.p10());
            push(i, up2, probs.p01());
            push(up1, up2, probs.p11());
        }
    }

    TransitionMatrix {
        gamma1,
        gamma2,
        data,
    }
}

/// Long-run distribution over the joint battery grid.
///
/// For an ergodic chain this is the unique stationary distribution; for
/// periodic or reducible chains it is the long-run fraction of time spent in
/// each state starting from empty batteries, which is what the throughput
/// accounting needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    gamma1: u32,
    gamma2: u32,
    pi: Vec<f64>,
    support_mask: Vec<bool>,
}

impl SteadyState {
    fn new(gamma1: u32, gamma2: u32, pi: Vec<f64>) -> Self {
        let support_mask = pi.iter().map(|&p| p > SUPPORT_TOLERANCE).collect();
        Self {
            gamma1,
            gamma2,
            pi,
            support_mask,
        }
    }

    pub fn gamma1(&self) -> u32 {
        self.gamma1
    }

    pub fn gamma2(&self) -> u32 {
        self.gamma2
    }

    /// Probability mass on battery pair `(i, j)`.
    pub fn get(&self, i: u32, j: u32) -> f64 {
        self.pi[(i * self.gamma2 + j) as usize]
    }

    /// Mass vector in row-major state order.
    pub fn as_slice(&self) -> &[f64] {
        &self.pi
    }

    /// True for states carrying more than [`SUPPORT_TOLERANCE`] mass.
    pub fn support_mask(&self) -> &[bool] {
        &self.support_mask
    }

    /// Number of states in the support.
    pub fn support_size(&self) -> usize {
        self.support_mask.iter().filter(|&&m| m).count()
    }
}

/// Adjacency of the positive entries of `matrix`, as index lists.
fn successors(matrix: &TransitionMatrix) -> Vec<Vec<usize>> {
    let n = matrix.dim();
    (0..n)
        .map(|from| {
            matrix
                .row(from)
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(to, _)| to)
                .collect()
        })
        .collect()
}

fn bfs(adjacency: &[Vec<usize>], start: usize) -> Vec<bool> {
    let mut seen = vec![false; adjacency.len()];
    let mut queue = std::collections::VecDeque::from([start]);
    seen[start] = true;
    while let Some(u) = queue.pop_front() {
        for &v in &adjacency[u] {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    seen
}

fn gcd_u64(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Period of the strongly connected component containing `start`: the gcd of
/// `level(u) + 1 - level(v)` over all arcs `u -> v` inside the component,
/// with levels from a BFS.
fn component_period(adjacency: &[Vec<usize>], members: &[bool], start: usize) -> u64 {
    let n = adjacency.len();
    let mut level = vec![usize::MAX; n];
    level[start] = 0;
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for &v in &adjacency[u] {
            if members[v] && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    let mut g: u64 = 0;
    for u in 0..n {
        if !members[u] {
            continue;
        }
        for &v in &adjacency[u] {
            if members[v] {
                let diff = level[u] as i64 + 1 - level[v] as i64;
                g = gcd_u64(g, diff.unsigned_abs());
            }
        }
    }
    g.max(1)
}

/// Solves for the long-run state distribution seen from empty batteries.
///
/// When the chain is irreducible and aperiodic the stationarity system
/// `pi P = pi`, `sum pi = 1` is solved directly. Otherwise (a periodic
/// and/or reducible chain, as in the perfectly correlated harvest regimes)
/// the solver power-iterates from the point mass on `(0, 0)` and averages
/// each window of one period, which converges to the time-average occupancy
/// of the states actually visited. Either way the result satisfies
/// `max |pi P - pi| <=` [`RESIDUAL_TARGET`].
pub fn solve_steady_state(matrix: &TransitionMatrix) -> Result<SteadyState> {
    matrix.validate()?;
    let n = matrix.dim();
    let adjacency = successors(matrix);

    // States reachable from empty batteries form a closed set; the solution
    // is supported there.
    let reachable = bfs(&adjacency, 0);

    // The reachable set must be one communicating class, otherwise the
    // long-run occupancy from (0, 0) is not a deterministic distribution.
    let mut reverse = vec![Vec::new(); n];
    for (u, outs) in adjacency.iter().enumerate() {
        if reachable[u] {
            for &v in outs {
                if reachable[v] {
                    reverse[v].push(u);
                }
            }
        }
    }
    let co_reachable = bfs(&reverse, 0);
    if (0..n).any(|s| reachable[s] && !co_reachable[s]) {
        return Err(Error::PreconditionViolated(
            "states reachable from empty batteries do not form one communicating class",
        ));
    }

    let period = component_period(&adjacency, &reachable, 0);
    let fully_reachable = reachable.iter().all(|&r| r);

    let pi = if fully_reachable && period == 1 {
        solve_linear(matrix)?
    } else {
        power_iterate_averaged(matrix, &reachable, period)?
    };

    Ok(SteadyState::new(matrix.gamma1(), matrix.gamma2(), pi))
}

/// Direct solve of the stationarity system with the normalization row.
fn solve_linear(matrix: &TransitionMatrix) -> Result<Vec<f64>> {
    let n = matrix.dim();
    // (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1.
    let mut a = DMatrix::<f64>::zeros(n, n);
    for from in 0..n {
        for to in 0..n {
            a[(to, from)] = matrix.get(from, to);
        }
    }
    for s in 0..n {
        a[(s, s)] -= 1.0;
    }
    for s in 0..n {
        a[(n - 1, s)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(n);
    b[n - 1] = 1.0;

    let solution = a.lu().solve(&b).ok_or(Error::NoConvergence {
        target: RESIDUAL_TARGET,
        achieved: f64::INFINITY,
        iterations: 0,
    })?;

    let mut pi: Vec<f64> = solution.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = pi.iter().sum();
    for p in &mut pi {
        *p /= total;
    }

    let residual = stationarity_residual(matrix, &pi);
    if residual > RESIDUAL_TARGET {
        return Err(Error::NoConvergence {
            target: RESIDUAL_TARGET,
            achieved: residual,
            iterations: 0,
        });
    }
    Ok(pi)
}

/// Power iteration from the point mass on `(0, 0)`, averaging each window of
/// one period. Unit-circle eigenvalue modes cancel exactly over a window, so
/// the window average converges geometrically to the time-average occupancy.
fn power_iterate_averaged(
    matrix: &TransitionMatrix,
    reachable: &[bool],
    period: u64,
) -> Result<Vec<f64>> {
    let n = matrix.dim();

    // Sparse arc lists of the reachable sub-chain.
    let arcs: Vec<(usize, Vec<(usize, f64)>)> = (0..n)
        .filter(|&s| reachable[s])
        .map(|from| {
            let outs = matrix
                .row(from)
                .iter()
                .enumerate()
                .filter(|(_, &p)| p > 0.0)
                .map(|(to, &p)| (to, p))
                .collect();
            (from, outs)
        })
        .collect();
    let arc_count: u64 = arcs.iter().map(|(_, outs)| outs.len() as u64).sum();
    let max_iterations = (ITERATION_OPS_BUDGET / arc_count.max(1)).max(100_000);

    let mut v = vec![0.0f64; n];
    v[0] = 1.0;
    let mut window_sum = vec![0.0f64; n];
    let mut best_residual = f64::INFINITY;
    let mut iterations: u64 = 0;

    let matvec = |v: &[f64], out: &mut Vec<f64>| {
        out.clear();
        out.resize(n, 0.0);
        for (from, outs) in &arcs {
            let mass = v[*from];
            if mass > 0.0 {
                for &(to, p) in outs {
                    out[to] += mass * p;
                }
            }
        }
    };

    let mut next = Vec::with_capacity(n);
    while iterations < max_iterations {
        window_sum.iter_mut().for_each(|x| *x = 0.0);
        for _ in 0..period {
            for s in 0..n {
                window_sum[s] += v[s];
            }
            matvec(&v, &mut next);
            std::mem::swap(&mut v, &mut next);
            iterations += 1;
        }
        let mut avg: Vec<f64> = window_sum.iter().map(|&x| x / period as f64).collect();
        let total: f64 = avg.iter().sum();
        avg.iter_mut().for_each(|x| *x /= total);

        let residual = stationarity_residual(matrix, &avg);
        best_residual = best_residual.min(residual);
        if residual <= RESIDUAL_TARGET {
            return Ok(avg);
        }
    }

    Err(Error::NoConvergence {
        target: RESIDUAL_TARGET,
        achieved: best_residual,
        iterations,
    })
}

/// `max |pi P - pi|` over all states.
pub fn stationarity_residual(matrix: &TransitionMatrix, pi: &[f64]) -> f64 {
    let n = matrix.dim();
    let mut image = vec![0.0f64; n];
    for (from, &mass) in pi.iter().enumerate() {
        if mass != 0.0 {
            for (to, &p) in matrix.row(from).iter().enumerate() {
                image[to] += mass * p;
            }
        }
    }
    image
        .iter()
        .zip(pi)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Long-term average throughput from a state distribution.
///
/// Node 1 fires exactly from the states `(gamma1 - 1, j)` upon harvesting;
/// the transmission succeeds unless node 2 fires in the same slot, which can
/// only happen from `(gamma1 - 1, gamma2 - 1)`. The accounting is exact for
/// any long-run occupancy, including partial supports.
pub fn stationary_throughput(
    steady: &SteadyState,
    config: &NetworkConfig,
) -> Result<ThroughputReport> {
    if steady.gamma1() != config.gamma1() || steady.gamma2() != config.gamma2() {
        return Err(Error::DimensionMismatch {
            expected: config.state_count(),
            actual: steady.gamma1() as usize * steady.gamma2() as usize,
        });
    }
    let probs = config.probs();
    let gamma1 = config.gamma1();
    let gamma2 = config.gamma2();

    let edge1: f64 = (0..gamma2.saturating_sub(1))
        .map(|j| steady.get(gamma1 - 1, j))
        .sum();
    let corner = steady.get(gamma1 - 1, gamma2 - 1);
    let r1 = config.success_rate1() * ((probs.p10() + probs.p11()) * edge1 + probs.p10() * corner);

    let edge2: f64 = (0..gamma1.saturating_sub(1))
        .map(|i| steady.get(i, gamma2 - 1))
        .sum();
    let r2 = config.success_rate2() * ((probs.p01() + probs.p11()) * edge2 + probs.p01() * corner);

    Ok(ThroughputReport::new(r1, r2, Source::StationaryAccounting))
}

/// Solves the chain for `config` and accounts throughput in one call.
pub fn chain_throughput(config: &NetworkConfig) -> Result<ThroughputReport> {
    let steady = solve_steady_state(&build_chain(config))?;
    stationary_throughput(&steady, config)
}
