//! Symmetric stochastic block models: parameters, sampled graphs and their
//! population counterparts.
//!
//! Nodes are block-contiguous: node `i` belongs to block `i / (n/K)`.

use std::io::{BufRead, Write};

use rand::Rng as _;

use crate::error::{invalid, Error, Result};
use crate::linalg::Matrix;
use crate::rng::seeded;

/// A symmetric SBM with `k` equal blocks of size `n/k`, within-block edge
/// probability `p` and cross-block probability `q`.
///
/// `rho` is the sparsity exponent the caller claims for `q ≥ n^(ρ-1)`. It is
/// carried along for diagnostics and never enforced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SbmParams {
    pub n: usize,
    pub k: usize,
    pub p: f64,
    pub q: f64,
    pub rho: f64,
}

impl SbmParams {
    /// Validated constructor; `rho` defaults to the exponent implied by `q`,
    /// i.e. `1 + ln q / ln n` clamped into (0, 1).
    pub fn new(n: usize, k: usize, p: f64, q: f64) -> Result<Self> {
        let rho = implied_rho(n, q);
        Self::with_rho(n, k, p, q, rho)
    }

    pub fn with_rho(n: usize, k: usize, p: f64, q: f64, rho: f64) -> Result<Self> {
        let params = SbmParams { n, k, p, q, rho };
        params.validate()?;
        // Relative slack so the exponent implied by q itself never warns.
        if n > 1 && q < params.sparsity_floor() * (1.0 - 1e-12) {
            log::warn!(
                "q = {q} is below n^(rho-1) = {:.4} for rho = {rho}",
                params.sparsity_floor()
            );
        }
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let SbmParams { n, k, p, q, rho } = *self;
        if k < 2 {
            return Err(invalid(format!(
                "block count K must be at least 2, got {k}"
            )));
        }
        if n == 0 || n % k != 0 {
            return Err(invalid(format!("K = {k} must divide n = {n}")));
        }
        if !(0.0..=1.0).contains(&p) || !(0.0..=1.0).contains(&q) {
            return Err(invalid(format!("p = {p} and q = {q} must lie in [0, 1]")));
        }
        if p <= q {
            return Err(invalid(format!("p = {p} must exceed q = {q}")));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(invalid(format!("rho = {rho} must lie in (0, 1)")));
        }
        Ok(())
    }

    pub fn block_size(&self) -> usize {
        self.n / self.k
    }

    pub fn label_of(&self, node: usize) -> usize {
        node / self.block_size()
    }

    pub fn labels(&self) -> Vec<usize> {
        (0..self.n).map(|i| self.label_of(i)).collect()
    }

    /// `n^(ρ-1)`.
    pub fn sparsity_floor(&self) -> f64 {
        (self.n as f64).powf(self.rho - 1.0)
    }

    pub fn expected_degree(&self) -> f64 {
        expected_degree(self)
    }
}

fn implied_rho(n: usize, q: f64) -> f64 {
    let raw = if n > 1 && q > 0.0 {
        1.0 + q.ln() / (n as f64).ln()
    } else {
        1e-6
    };
    raw.clamp(1e-6, 1.0 - 1e-6)
}

/// `d̄ = (n/K)p + (n(K-1)/K)q`. Evaluated without validation.
pub fn expected_degree(params: &SbmParams) -> f64 {
    let n = params.n as f64;
    let k = params.k as f64;
    n / k * params.p + n * (k - 1.0) / k * params.q
}

/// `Ā = B ⊗ J_{n/K}`: `p` on diagonal blocks (including the main diagonal),
/// `q` elsewhere.
pub fn expected_adjacency(params: &SbmParams) -> Result<Matrix> {
    params.validate()?;
    Ok(Matrix::from_fn(params.n, params.n, |i, j| {
        if params.label_of(i) == params.label_of(j) {
            params.p
        } else {
            params.q
        }
    }))
}

/// An undirected simple graph with ground-truth block labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    k: usize,
    labels: Vec<usize>,
    /// Sorted neighbour lists.
    adj: Vec<Vec<usize>>,
}

impl Graph {
    /// Build from an edge list. Rejects self-loops, out-of-range endpoints and
    /// labels outside `0..k`. Duplicate edges are merged.
    pub fn from_edges(
        n: usize,
        k: usize,
        labels: Vec<usize>,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        if labels.len() != n {
            return Err(invalid(format!(
                "expected {n} labels, got {}",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(invalid(format!("label {bad} out of range for K = {k}")));
        }
        let mut adj = vec![Vec::new(); n];
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(invalid(format!("edge ({u}, {v}) out of range for n = {n}")));
            }
            if u == v {
                return Err(invalid(format!("self-loop at node {u}")));
            }
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Graph { n, k, labels, adj })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adj[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adj[node].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        self.adj.iter().map(Vec::len).collect()
    }

    pub fn num_edges(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }

    /// Edges `(u, v)` with `u < v`, in lexicographic order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(u, list)| list.iter().filter(move |&&v| v > u).map(move |&v| (u, v)))
    }

    pub fn isolated_node(&self) -> Option<usize> {
        self.adj.iter().position(Vec::is_empty)
    }

    pub fn ensure_no_isolated(&self) -> Result<()> {
        match self.isolated_node() {
            Some(i) => Err(Error::IsolatedNode(i)),
            None => Ok(()),
        }
    }

    pub fn adjacency_matrix(&self) -> Matrix {
        let mut a = Matrix::zeros(self.n, self.n);
        for (u, v) in self.edges() {
            a[(u, v)] = 1.0;
            a[(v, u)] = 1.0;
        }
        a
    }

    /// `P = D_A⁻¹ A`.
    pub fn transition_matrix(&self) -> Result<Matrix> {
        self.ensure_no_isolated()?;
        let mut p = Matrix::zeros(self.n, self.n);
        for (u, list) in self.adj.iter().enumerate() {
            let w = 1.0 / list.len() as f64;
            for &v in list {
                p[(u, v)] = w;
            }
        }
        Ok(p)
    }

    /// Stationary distribution `π_i = d_i / 2|E|`.
    pub fn stationary(&self) -> Result<Vec<f64>> {
        self.ensure_no_isolated()?;
        let total = (2 * self.num_edges()) as f64;
        Ok(self.adj.iter().map(|l| l.len() as f64 / total).collect())
    }

    /// Header `n K`, then the `n` labels on one line, then one `u v` line per
    /// edge with `u < v`.
    pub fn write_edge_list<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{} {}", self.n, self.k)?;
        let labels: Vec<String> = self.labels.iter().map(ToString::to_string).collect();
        writeln!(out, "{}", labels.join(" "))?;
        for (u, v) in self.edges() {
            writeln!(out, "{u} {v}")?;
        }
        Ok(())
    }

    pub fn read_edge_list<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let mut next_line = |what: &str| -> Result<String> {
            lines
                .next()
                .ok_or_else(|| Error::Parse(format!("missing {what} line")))?
                .map_err(Error::from)
        };
        let header = next_line("header")?;
        let head: Vec<usize> = parse_fields(&header)?;
        let [n, k] = head[..] else {
            return Err(Error::Parse(format!(
                "header must be `n K`, got `{header}`"
            )));
        };
        let labels: Vec<usize> = if n == 0 {
            Vec::new()
        } else {
            parse_fields(&next_line("label")?)?
        };
        let mut edges = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<usize> = parse_fields(&line)?;
            let [u, v] = f[..] else {
                return Err(Error::Parse(format!(
                    "edge line must be `u v`, got `{line}`"
                )));
            };
            edges.push((u, v));
        }
        Graph::from_edges(n, k, labels, edges)
    }
}

fn parse_fields(line: &str) -> Result<Vec<usize>> {
    line.split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|e| Error::Parse(format!("`{t}`: {e}")))
        })
        .collect()
}

/// Sample a graph: each unordered pair `{i, j}` is an edge independently with
/// probability `p` when the labels match and `q` otherwise. Pairs are visited
/// row by row (`i < j`) so the output is a pure function of `seed`.
///
/// Fails with [`Error::IsolatedNode`] if any node ends up with degree zero.
pub fn generate_sbm(params: &SbmParams, seed: u64) -> Result<Graph> {
    params.validate()?;
    let mut rng = seeded(seed);
    let n = params.n;
    let labels = params.labels();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let prob = if labels[i] == labels[j] {
                params.p
            } else {
                params.q
            };
            if rng.random::<f64>() < prob {
                edges.push((i, j));
            }
        }
    }
    let graph = Graph::from_edges(n, params.k, labels, edges)?;
    graph.ensure_no_isolated()?;
    Ok(graph)
}
