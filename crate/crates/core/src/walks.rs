//! Stationary-start random walks and the windowed co-occurrence matrix they
//! induce, both sampled and in the infinite-walk limit.

use std::fmt;
use std::io::Write;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;
use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::linalg::{symmetrize, Matrix};
use crate::rng::{child_seed, seeded, Rng};
use crate::sbm::Graph;

/// `r` walks of `L` nodes, window `T`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WalkConfig {
    pub walks: usize,
    pub length: usize,
    pub window: usize,
}

impl WalkConfig {
    pub fn new(walks: usize, length: usize, window: usize) -> Result<Self> {
        let cfg = WalkConfig {
            walks,
            length,
            window,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.walks == 0 {
            return Err(invalid("walk count r must be positive"));
        }
        validate_window(self.length, self.window)
    }

    pub fn mass(&self) -> f64 {
        window_mass(self.length, self.window)
    }
}

pub(crate) fn validate_window(length: usize, window: usize) -> Result<()> {
    if length < 2 {
        return Err(invalid(format!(
            "walk length L must be at least 2, got {length}"
        )));
    }
    if window == 0 || window >= length {
        return Err(invalid(format!(
            "window T = {window} must satisfy 1 <= T < L = {length}"
        )));
    }
    Ok(())
}

/// `2 Σ_{t=1..T} (L - t)`: the number of ordered pairs one walk contributes.
pub fn window_mass(length: usize, window: usize) -> f64 {
    2.0 * window_weight(length, window)
}

/// `Σ_{t=1..T} (L - t) = TL - T(T+1)/2`.
pub fn window_weight(length: usize, window: usize) -> f64 {
    (1..=window).map(|t| (length - t) as f64).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoocKind {
    EmpiricalNormalized,
    Limiting,
    Expected,
}

impl fmt::Display for CoocKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CoocKind::EmpiricalNormalized => "empirical-normalized",
            CoocKind::Limiting => "limiting",
            CoocKind::Expected => "expected",
        })
    }
}

/// Where a co-occurrence matrix came from. `walks` and `seed` are `None` for
/// analytic matrices; `scale` is the factor applied on top of the
/// per-walk normalisation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoocMeta {
    pub walks: Option<usize>,
    pub length: usize,
    pub window: usize,
    pub seed: Option<u64>,
    pub scale: f64,
}

/// A symmetric non-negative `n×n` co-occurrence matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CoocMatrix {
    pub values: Matrix,
    pub kind: CoocKind,
    pub meta: CoocMeta,
}

/// How the per-walk matrix (total mass `2Σ(L-t)`) is rescaled before it is
/// handed to the trainer. The factor depends only on `n`, `L`, `T`, so an
/// empirical matrix and its population counterpart are always scaled alike.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoocScaling {
    /// Counts divided by `r`; entries are `O(1/n)`.
    PerWalk,
    /// Additionally multiplied by `n`: average row sum `2Σ(L-t)`.
    PerNodeWalk,
    /// Scaled so the average row sum equals the given value.
    RowMean(f64),
}

impl CoocScaling {
    pub fn factor(&self, n: usize, length: usize, window: usize) -> f64 {
        match *self {
            CoocScaling::PerWalk => 1.0,
            CoocScaling::PerNodeWalk => n as f64,
            CoocScaling::RowMean(v) => v * n as f64 / window_mass(length, window),
        }
    }
}

impl fmt::Display for CoocScaling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoocScaling::PerWalk => f.write_str("per-walk"),
            CoocScaling::PerNodeWalk => f.write_str("per-node-walk"),
            CoocScaling::RowMean(v) => write!(f, "row-mean:{v}"),
        }
    }
}

impl std::str::FromStr for CoocScaling {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "per-walk" => Ok(CoocScaling::PerWalk),
            "per-node-walk" => Ok(CoocScaling::PerNodeWalk),
            other => match other.strip_prefix("row-mean:").map(str::parse::<f64>) {
                Some(Ok(v)) if v > 0.0 && v.is_finite() => Ok(CoocScaling::RowMean(v)),
                _ => Err(invalid(format!(
                    "unknown scaling `{other}` (per-walk, per-node-walk, row-mean:<v>)"
                ))),
            },
        }
    }
}

impl CoocMatrix {
    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    pub fn total_mass(&self) -> f64 {
        self.values.sum()
    }

    /// Multiply by the factor `scaling` prescribes, composing with any scale
    /// already applied.
    pub fn rescaled(&self, scaling: CoocScaling) -> CoocMatrix {
        let f = scaling.factor(self.n(), self.meta.length, self.meta.window);
        CoocMatrix {
            values: &self.values * f,
            kind: self.kind,
            meta: CoocMeta {
                scale: self.meta.scale * f,
                ..self.meta
            },
        }
    }

    /// Dense CSV: `n` lines of `n` comma-separated values.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut line = String::new();
        for row in self.values.row_iter() {
            line.clear();
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    line.push(',');
                }
                line.push_str(&v.to_string());
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    /// One `key=value,...` line describing provenance.
    pub fn meta_line(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        format!(
            "kind={},r={},L={},T={},seed={},scale={}",
            self.kind,
            opt(self.meta.walks.map(|r| r.to_string())),
            self.meta.length,
            self.meta.window,
            opt(self.meta.seed.map(|s| s.to_string())),
            self.meta.scale
        )
    }

    /// Write `path` (dense CSV) and `path.meta` (the provenance line).
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))?;
        let mut meta = path.as_os_str().to_owned();
        meta.push(".meta");
        std::fs::write(meta, format!("{}\n", self.meta_line()))?;
        Ok(())
    }
}

fn stationary_sampler(graph: &Graph) -> Result<WeightedIndex<usize>> {
    graph.ensure_no_isolated()?;
    WeightedIndex::new(graph.degrees()).map_err(|e| invalid(format!("start distribution: {e}")))
}

fn walk_from(
    graph: &Graph,
    length: usize,
    start: &WeightedIndex<usize>,
    rng: &mut Rng,
) -> Vec<usize> {
    let mut walk = Vec::with_capacity(length);
    let mut cur = start.sample(rng);
    walk.push(cur);
    for _ in 1..length {
        let nbrs = graph.neighbors(cur);
        cur = nbrs[rng.random_range(0..nbrs.len())];
        walk.push(cur);
    }
    walk
}

/// One walk of `length` nodes: the start is drawn from `π_i = d_i / 2|E|`,
/// each later node uniformly from the neighbours of the previous one.
pub fn sample_walk(graph: &Graph, length: usize, seed: u64) -> Result<Vec<usize>> {
    if length == 0 {
        return Err(invalid("walk length must be positive"));
    }
    let start = stationary_sampler(graph)?;
    Ok(walk_from(graph, length, &start, &mut seeded(seed)))
}

/// Walks per parallel work unit. Counts are merged by integer addition, so
/// the chunking does not affect the result.
const CHUNK: usize = 256;

/// Empirical co-occurrence: for every walk, offset `t ∈ [1, T]` and position
/// `k`, both `(w_k, w_{k+t})` and `(w_{k+t}, w_k)` are counted; the integer
/// totals are then divided by `r`. Walk `m` uses seed `child_seed(seed, m)`.
pub fn build_cooccurrence(graph: &Graph, cfg: &WalkConfig, seed: u64) -> Result<CoocMatrix> {
    cfg.validate()?;
    let start = stationary_sampler(graph)?;
    let n = graph.n();
    let chunks = cfg.walks.div_ceil(CHUNK);
    let counts = (0..chunks)
        .into_par_iter()
        .fold(
            || vec![0u64; n * n],
            |mut acc, c| {
                for m in (c * CHUNK)..((c + 1) * CHUNK).min(cfg.walks) {
                    let mut rng = seeded(child_seed(seed, m as u64));
                    let walk = walk_from(graph, cfg.length, &start, &mut rng);
                    count_walk(&walk, cfg.window, n, &mut acc);
                }
                acc
            },
        )
        .reduce(
            || vec![0u64; n * n],
            |mut a, b| {
                a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                a
            },
        );
    let r = cfg.walks as f64;
    Ok(CoocMatrix {
        values: Matrix::from_row_iterator(n, n, counts.iter().map(|&c| c as f64 / r)),
        kind: CoocKind::EmpiricalNormalized,
        meta: CoocMeta {
            walks: Some(cfg.walks),
            length: cfg.length,
            window: cfg.window,
            seed: Some(seed),
            scale: 1.0,
        },
    })
}

fn count_walk(walk: &[usize], window: usize, n: usize, counts: &mut [u64]) {
    for t in 1..=window {
        for pair in walk.windows(t + 1) {
            let (u, v) = (pair[0], pair[t]);
            counts[u * n + v] += 1;
            counts[v * n + u] += 1;
        }
    }
}

/// The `r → ∞` limit of `C/r`: `2 Σ_{t=1..T} (L-t) π_i (Pᵗ)_ij` with
/// `P = D_A⁻¹ A`, symmetrised on output.
pub fn limiting_cooccurrence(graph: &Graph, length: usize, window: usize) -> Result<CoocMatrix> {
    validate_window(length, window)?;
    let p = graph.transition_matrix()?;
    let pi = graph.stationary()?;
    let n = graph.n();
    let mut acc = Matrix::zeros(n, n);
    let mut pt = p.clone();
    for t in 1..=window {
        if t > 1 {
            pt = &pt * &p;
        }
        let w = 2.0 * (length - t) as f64;
        for i in 0..n {
            let c = w * pi[i];
            for j in 0..n {
                acc[(i, j)] += c * pt[(i, j)];
            }
        }
    }
    symmetrize(&mut acc);
    Ok(CoocMatrix {
        values: acc,
        kind: CoocKind::Limiting,
        meta: CoocMeta {
            walks: None,
            length,
            window,
            seed: None,
            scale: 1.0,
        },
    })
}
