//! Time-varying communication graphs: doubly stochastic weight matrices,
//! B-window strong connectivity, and the mixing constants they induce.

use ndarray::{Array1, Array2};
use crate::error::{Error, Result};

const DS_TOL: f64 = 1e-12;

/// Doubly stochastic consensus weights for one time step.
///
/// Row i holds the weights agent i applies to incoming neighbor states;
/// diagonal entries are strictly positive (every agent keeps some of its own
/// state).
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMatrix {
    entries: Array2<f64>,
}

impl WeightMatrix {
    pub fn new(entries: Array2<f64>) -> Result<Self> {
        let (r, c) = entries.dim();
        if r != c {
            return Err(Error::DimensionMismatch(format!(
                "weight matrix must be square, got {r}x{c}"
            )));
        }
        if !validate_doubly_stochastic(&entries, DS_TOL) {
            return Err(Error::Validation(
                "weight matrix is not doubly stochastic at 1e-12".into(),
            ));
        }
        for i in 0..r {
            if entries[(i, i)] <= 0.0 {
                return Err(Error::Validation(format!(
                    "diagonal entry ({i},{i}) must be positive"
                )));
            }
        }
        Ok(Self { entries })
    }

    /// Identity weights: no communication.
    pub fn identity(n: usize) -> Self {
        Self {
            entries: Array2::eye(n),
        }
    }

    pub fn n(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    /// Smallest strictly positive entry (the weight floor of this matrix).
    pub fn min_positive_entry(&self) -> f64 {
        self.entries
            .iter()
            .copied()
            .filter(|&v| v > 0.0)
            .fold(f64::INFINITY, f64::min)
    }

    /// Directed edges (i, j), i != j, with positive weight: i receives from j.
    pub fn directed_edges(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && self.entries[(i, j)] > 0.0 {
                    edges.push((i, j));
                }
            }
        }
        edges
    }
}

/// True iff all row and column sums lie in [1-tol, 1+tol] and every entry is
/// nonnegative.
pub fn validate_doubly_stochastic(entries: &Array2<f64>, tol: f64) -> bool {
    let (r, c) = entries.dim();
    if r != c {
        return false;
    }
    if entries.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return false;
    }
    for i in 0..r {
        let row: f64 = entries.row(i).sum();
        let col: f64 = entries.column(i).sum();
        if (row - 1.0).abs() > tol || (col - 1.0).abs() > tol {
            return false;
        }
    }
    true
}

/// Build symmetric edge weights `w` on the given undirected pairs with the
/// self-loop absorbing the remainder. Nodes are 0-based.
pub fn build_edge_weight_matrix(
    n: usize,
    edges: &[(usize, usize)],
    w: f64,
) -> Result<WeightMatrix> {
    if !(0.0 < w && w < 1.0) {
        return Err(Error::Validation(format!(
            "edge weight must lie in (0,1), got {w}"
        )));
    }
    let mut seen = std::collections::HashSet::new();
    let mut entries = Array2::zeros((n, n));
    let mut degree = vec![0usize; n];
    for &(a, b) in edges {
        if a >= n || b >= n {
            return Err(Error::Validation(format!(
                "edge ({a},{b}) references a node outside 0..{n}"
            )));
        }
        if a == b {
            return Err(Error::Validation(format!("self-loop edge ({a},{b})")));
        }
        let key = (a.min(b), a.max(b));
        if !seen.insert(key) {
            return Err(Error::Validation(format!("duplicate edge ({a},{b})")));
        }
        entries[(a, b)] = w;
        entries[(b, a)] = w;
        degree[a] += 1;
        degree[b] += 1;
    }
    for i in 0..n {
        let mass = w * degree[i] as f64;
        // The self-loop must stay strictly positive (Assumption on the weight
        // floor covers the diagonal too).
        if mass > 1.0 - DS_TOL {
            return Err(Error::NegativeSelfLoop { node: i, mass });
        }
        entries[(i, i)] = 1.0 - mass;
    }
    WeightMatrix::new(entries)
}

/// Periodic schedule of weight matrices with its connectivity window.
#[derive(Debug, Clone)]
pub struct GraphSchedule {
    matrices: Vec<WeightMatrix>,
    window_b: usize,
}

impl GraphSchedule {
    /// Validates that all matrices share one size and that the union graph
    /// over every window of `window_b` consecutive steps is strongly
    /// connected.
    pub fn new(matrices: Vec<WeightMatrix>, window_b: usize) -> Result<Self> {
        if matrices.is_empty() {
            return Err(Error::Validation("schedule needs at least one matrix".into()));
        }
        if window_b == 0 {
            return Err(Error::Validation("connectivity window must be >= 1".into()));
        }
        let n = matrices[0].n();
        if matrices.iter().any(|m| m.n() != n) {
            return Err(Error::DimensionMismatch(
                "all schedule matrices must share the same agent count".into(),
            ));
        }
        let schedule = Self { matrices, window_b };
        let horizon = schedule.period() + window_b - 1;
        if !check_b_strong_connectivity(&schedule, window_b, horizon) {
            return Err(Error::Validation(format!(
                "union graph over some window of {window_b} steps is not strongly connected"
            )));
        }
        Ok(schedule)
    }

    pub fn n(&self) -> usize {
        self.matrices[0].n()
    }

    pub fn period(&self) -> usize {
        self.matrices.len()
    }

    pub fn window_b(&self) -> usize {
        self.window_b
    }

    /// Weight matrix applied at step t (1-based), cycling through the phases.
    pub fn matrix_at(&self, t: usize) -> &WeightMatrix {
        debug_assert!(t >= 1);
        &self.matrices[(t - 1) % self.matrices.len()]
    }

    pub fn matrices(&self) -> &[WeightMatrix] {
        &self.matrices
    }

    /// Smallest positive entry across all phases: the schedule's weight floor.
    pub fn weight_floor(&self) -> f64 {
        self.matrices
            .iter()
            .map(|m| m.min_positive_entry())
            .fold(f64::INFINITY, f64::min)
    }

    /// Mixing constants induced by this schedule's floor, size, and window.
    pub fn mixing(&self) -> MixingConstants {
        mixing_constants(self.weight_floor(), self.n(), self.window_b)
    }
}

/// Geometric consensus-contraction constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixingConstants {
    pub gamma: f64,
    pub beta: f64,
}

/// gamma = (1 - w_min/(2 n^2))^(-2), beta = (1 - w_min/(2 n^2))^(1/B).
pub fn mixing_constants(w_min: f64, n: usize, b: usize) -> MixingConstants {
    debug_assert!(0.0 < w_min && w_min < 1.0, "weight floor must lie in (0,1)");
    debug_assert!(n >= 1 && b >= 1);
    let base = 1.0 - w_min / (2.0 * (n * n) as f64);
    MixingConstants {
        gamma: base.powi(-2),
        beta: base.powf(1.0 / b as f64),
    }
}

/// True iff for every start t in [1, horizon-b+1] the union of the window's
/// edge sets is strongly connected, decided by full reachability from every
/// node.
pub fn check_b_strong_connectivity(schedule: &GraphSchedule, b: usize, horizon: usize) -> bool {
    assert!(horizon >= b, "horizon must be at least b");
    let n = schedule.n();
    for start in 1..=(horizon - b + 1) {
        let mut adj = vec![vec![false; n]; n];
        for l in 0..b {
            for (i, j) in schedule.matrix_at(start + l).directed_edges() {
                adj[i][j] = true;
            }
        }
        if !strongly_connected(&adj) {
            return false;
        }
    }
    true
}

fn strongly_connected(adj: &[Vec<bool>]) -> bool {
    let n = adj.len();
    (0..n).all(|s| {
        let mut seen = vec![false; n];
        let mut stack = vec![s];
        seen[s] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if adj[u][v] && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.iter().all(|&x| x)
    })
}

/// One consensus round: y_i = sum_j [W]_ij x_j for row-major states (N x d).
pub fn apply_consensus(w: &WeightMatrix, states: &Array2<f64>) -> Result<Array2<f64>> {
    if w.n() != states.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "weight matrix is {}x{} but swarm has {} agents",
            w.n(),
            w.n(),
            states.nrows()
        )));
    }
    Ok(w.entries().dot(states))
}

/// Split the undirected n-ring into `num_phases` matchings by round-robin
/// assignment, skipping to the next phase whenever an edge would share a node
/// with one already placed. Returns 0-based edge lists; phases may be empty
/// for small n.
pub fn ring_phases(n: usize, num_phases: usize) -> Vec<Vec<(usize, usize)>> {
    assert!(num_phases >= 1);
    let mut phases: Vec<Vec<(usize, usize)>> = vec![Vec::new(); num_phases];
    if n < 2 {
        return phases;
    }
    let ring: Vec<(usize, usize)> = if n == 2 {
        vec![(0, 1)]
    } else {
        (0..n).map(|j| (j, (j + 1) % n)).collect()
    };
    for (j, edge) in ring.into_iter().enumerate() {
        let mut placed = false;
        for k in 0..num_phases {
            let p = (j + k) % num_phases;
            let conflict = phases[p]
                .iter()
                .any(|&(a, b)| a == edge.0 || a == edge.1 || b == edge.0 || b == edge.1);
            if !conflict {
                phases[p].push(edge);
                placed = true;
                break;
            }
        }
        assert!(placed, "ring edge {edge:?} fits no phase; increase num_phases");
    }
    phases
}

/// Mean state across agents.
pub fn mean_state(states: &Array2<f64>) -> Array1<f64> {
    states.mean_axis(ndarray::Axis(0)).expect("non-empty swarm")
}

/// Max over agents of the distance to the mean state.
pub fn max_disagreement(states: &Array2<f64>) -> f64 {
    let mean = mean_state(states);
    states
        .rows()
        .into_iter()
        .map(|row| {
            row.iter()
                .zip(mean.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max)
    }
