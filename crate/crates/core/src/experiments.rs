//! End-to-end drivers: graph → co-occurrence → training → measurements, for
//! single runs, seed sweeps and the diagnostic sweep. The CLI and the
//! acceptance suite both go through these.
//!
//! Each run is keyed by one master seed; the graph, the walks and the
//! initialisation draw from separate child streams of it.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, sym_eigenvalues};
use crate::metrics::{cluster_report, trajectory_distance, ClusterReport, ReportRow};
use crate::rng::{child_seed, stream};
use crate::sbm::{generate_sbm, Graph, SbmParams};
use crate::theory::{
    build_linear_update, cbar_spectrum, concentration_ratio, expected_cooccurrence,
    projector_distance, relative_deviation, transition_deviation, DiagnosticRow, LinearUpdate,
};
use crate::trainer::{
    init_state, run_deepwalk, run_linearized, EmbeddingState, InitMode, Probe, Stopping,
    TrainConfig, Trajectory,
};
use crate::walks::{build_cooccurrence, CoocMatrix, CoocScaling, WalkConfig};

/// Walk count used when none is configured: `100·n`.
pub fn default_walks(n: usize) -> usize {
    100 * n
}

/// Attempts made by [`sample_graph`] before giving up on isolated nodes.
pub const GRAPH_ATTEMPTS: u64 = 64;

/// Sample a graph without isolated nodes. Attempt 0 uses `seed`; retry `a`
/// uses `child_seed(seed, a)`.
pub fn sample_graph(params: &SbmParams, seed: u64) -> Result<Graph> {
    let mut last = None;
    for attempt in 0..GRAPH_ATTEMPTS {
        let s = if attempt == 0 {
            seed
        } else {
            child_seed(seed, attempt)
        };
        match generate_sbm(params, s) {
            Ok(g) => return Ok(g),
            Err(Error::IsolatedNode(i)) => {
                log::warn!("graph seed {s} has isolated node {i}; resampling");
                last = Some(Error::IsolatedNode(i));
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or(Error::IsolatedNode(0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoocSource {
    /// Sampled walks on the sampled graph.
    Empirical,
    /// The population matrix `C̄`.
    Expected,
}

/// Everything needed to produce the matrix a run trains on.
#[derive(Debug, Clone, PartialEq)]
pub struct Pipeline {
    pub params: SbmParams,
    pub walks: WalkConfig,
    pub scaling: CoocScaling,
    pub source: CoocSource,
}

impl Pipeline {
    /// `r = 100n`, `L = 10`, `T = 5`, empirical, row mean 2.
    pub fn new(params: SbmParams) -> Self {
        Pipeline {
            walks: WalkConfig {
                walks: default_walks(params.n),
                length: 10,
                window: 5,
            },
            params,
            scaling: CoocScaling::RowMean(2.0),
            source: CoocSource::Empirical,
        }
    }

    pub fn training_matrix(&self, graph: &Graph, seed: u64) -> Result<CoocMatrix> {
        let c = match self.source {
            CoocSource::Empirical => {
                build_cooccurrence(graph, &self.walks, child_seed(seed, stream::WALKS))?
            }
            CoocSource::Expected => {
                expected_cooccurrence(&self.params, self.walks.length, self.walks.window)?
            }
        };
        Ok(c.rescaled(self.scaling))
    }
}

/// A finished training run and its measurements.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub seed: u64,
    pub graph: Graph,
    pub cooc: CoocMatrix,
    pub linear: LinearUpdate,
    pub config: TrainConfig,
    pub initial: EmbeddingState,
    pub trajectory: Trajectory,
    pub state: EmbeddingState,
    pub report: ClusterReport,
}

impl RunOutcome {
    pub fn report_row(&self, params: &SbmParams) -> ReportRow {
        ReportRow {
            seed: self.seed,
            params: *params,
            d: self.state.dim(),
            report: self.report.clone(),
            t_f: self.trajectory.t_f,
        }
    }

    /// Angle in radians between `Πw` at the start and at the end.
    pub fn z_angle(&self) -> f64 {
        let z0 = self.linear.project(&self.initial.stacked());
        let zf = self.linear.project(&self.state.stacked());
        let denom = z0.norm() * zf.norm();
        if denom == 0.0 {
            return f64::NAN;
        }
        (z0.dot(&zf) / denom).clamp(-1.0, 1.0).acos()
    }

    /// `‖w - Πw‖` at `t_f`.
    pub fn final_residual(&self) -> f64 {
        let w = self.state.stacked();
        (&w - self.linear.project(&w)).norm()
    }
}

/// Sample the graph, build `C`, train from the initialisation keyed by
/// `seed`, and measure. `train.seed` is overwritten with the init stream of
/// `seed`.
pub fn run_training(pipe: &Pipeline, train: &TrainConfig, seed: u64) -> Result<RunOutcome> {
    let graph = sample_graph(&pipe.params, child_seed(seed, stream::GRAPH))?;
    run_on_graph(pipe, graph, train, seed)
}

/// [`run_training`] on a given graph. `pipe.params` must describe the graph's
/// size and block count.
pub fn run_on_graph(
    pipe: &Pipeline,
    graph: Graph,
    train: &TrainConfig,
    seed: u64,
) -> Result<RunOutcome> {
    if graph.n() != pipe.params.n || graph.k() != pipe.params.k {
        return Err(crate::error::mismatch(
            format!("graph with n={}, K={}", pipe.params.n, pipe.params.k),
            format!("n={}, K={}", graph.n(), graph.k()),
        ));
    }
    graph.ensure_no_isolated()?;
    let cooc = pipe.training_matrix(&graph, seed)?;
    let linear = build_linear_update(&cooc, train.eta, pipe.params.k)?;
    train_on(pipe, graph, cooc, linear, train, seed)
}

fn train_on(
    pipe: &Pipeline,
    graph: Graph,
    cooc: CoocMatrix,
    linear: LinearUpdate,
    train: &TrainConfig,
    seed: u64,
) -> Result<RunOutcome> {
    let n = pipe.params.n;
    let config = TrainConfig {
        seed: child_seed(seed, stream::INIT),
        ..train.clone()
    };
    let probe = Probe {
        labels: graph.labels(),
        k: pipe.params.k,
        linear: Some(&linear),
    };
    let (trajectory, state) = run_deepwalk(&cooc.values, &config, Some(&probe))?;
    let initial = init_state(n, &config)?;
    let report = cluster_report(
        &state.x,
        graph.labels(),
        pipe.params.k,
        config.epsilon_for(n),
        config.delta_for(n),
    )?;
    Ok(RunOutcome {
        seed,
        graph,
        cooc,
        linear,
        config,
        initial,
        trajectory,
        state,
        report,
    })
}

/// [`run_training`] for every seed, in parallel, results in seed order.
pub fn run_sweep(pipe: &Pipeline, train: &TrainConfig, seeds: &[u64]) -> Result<Vec<RunOutcome>> {
    seeds
        .par_iter()
        .map(|&s| run_training(pipe, train, s))
        .collect()
}

/// The multi-dimension embedding experiment: one graph and one `C` per seed,
/// trained at each dimension for a fixed number of iterations from an
/// inf-ball initialisation.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingExperiment {
    pub pipeline: Pipeline,
    pub dims: Vec<usize>,
    pub eta: f64,
    pub iters: usize,
    pub init_bound: f64,
}

impl EmbeddingExperiment {
    /// `n = 600`, `K = 3`, `q = 0.1`, `p = 0.4`, `η = 0.01`, 100 iterations,
    /// `‖w⁰‖_∞ = 0.01`, `d ∈ {1, 2, 3}`, per-node-walk scaling.
    pub fn paper_defaults() -> Result<Self> {
        let mut pipeline = Pipeline::new(SbmParams::new(600, 3, 0.4, 0.1)?);
        pipeline.scaling = CoocScaling::PerNodeWalk;
        Ok(EmbeddingExperiment {
            pipeline,
            dims: vec![1, 2, 3],
            eta: 0.01,
            iters: 100,
            init_bound: 0.01,
        })
    }

    pub fn train_config(&self, dim: usize) -> TrainConfig {
        TrainConfig {
            init: InitMode::InfBall(self.init_bound),
            stopping: Stopping::FixedIters(self.iters),
            dim,
            ..TrainConfig::new(self.eta)
        }
    }

    /// One outcome per dimension, in `dims` order.
    pub fn run_seed(&self, seed: u64) -> Result<Vec<RunOutcome>> {
        let graph = sample_graph(&self.pipeline.params, child_seed(seed, stream::GRAPH))?;
        let cooc = self.pipeline.training_matrix(&graph, seed)?;
        let linear = build_linear_update(&cooc, self.eta, self.pipeline.params.k)?;
        self.dims
            .par_iter()
            .map(|&d| {
                train_on(
                    &self.pipeline,
                    graph.clone(),
                    cooc.clone(),
                    linear.clone(),
                    &self.train_config(d),
                    seed,
                )
            })
            .collect()
    }

    /// Outcomes indexed `[seed][dim]`.
    pub fn run(&self, seeds: &[u64]) -> Result<Vec<Vec<RunOutcome>>> {
        seeds.par_iter().map(|&s| self.run_seed(s)).collect()
    }
}

/// Paired nonlinear and linearised runs for several graph sizes.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearExperiment {
    pub sizes: Vec<usize>,
    pub k: usize,
    pub p: f64,
    pub q: f64,
    pub iters: usize,
    pub length: usize,
    pub window: usize,
    /// `None` means `100·n`.
    pub walks: Option<usize>,
    pub scaling: CoocScaling,
}

/// Per-iteration series for one graph size.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSeries {
    pub n: usize,
    /// `‖x^(t) - ℓ^(t)‖`.
    pub distance: Vec<f64>,
    /// `‖x^(t)‖`.
    pub norm: Vec<f64>,
}

impl LinearExperiment {
    /// `n ∈ {200, 500, 1000}`, `K = 2`, `q = 0.1`, `p = 0.4`, 75 iterations.
    pub fn paper_defaults() -> Self {
        LinearExperiment {
            sizes: vec![200, 500, 1000],
            k: 2,
            p: 0.4,
            q: 0.1,
            iters: 75,
            length: 10,
            window: 5,
            walks: None,
            scaling: CoocScaling::PerNodeWalk,
        }
    }

    /// `η = 1/n`, `‖w⁰‖_∞ = 1/√n`, fixed iterations, all states recorded.
    pub fn train_config(&self, n: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            init: InitMode::InfBall(1.0 / (n as f64).sqrt()),
            stopping: Stopping::FixedIters(self.iters),
            record_states: true,
            seed: child_seed(seed, stream::INIT),
            ..TrainConfig::new(1.0 / n as f64)
        }
    }

    pub fn run_size(&self, n: usize, seed: u64) -> Result<LinearSeries> {
        let params = SbmParams::new(n, self.k, self.p, self.q)?;
        let pipe = Pipeline {
            params,
            walks: WalkConfig::new(
                self.walks.unwrap_or(default_walks(n)),
                self.length,
                self.window,
            )?,
            scaling: self.scaling,
            source: CoocSource::Empirical,
        };
        let graph = sample_graph(&params, child_seed(seed, stream::GRAPH))?;
        let cooc = pipe.training_matrix(&graph, seed)?;
        let cfg = self.train_config(n, seed);
        let lin = build_linear_update(&cooc, cfg.eta, self.k)?;
        let (nonlinear, _) = run_deepwalk(&cooc.values, &cfg, None)?;
        let (linear, _) = run_linearized(&lin, &cfg, None)?;
        let distance = trajectory_distance(&nonlinear, &linear)?;
        let norm = nonlinear.states.iter().map(|s| s.x.norm()).collect();
        Ok(LinearSeries { n, distance, norm })
    }

    pub fn run(&self, seed: u64) -> Result<Vec<LinearSeries>> {
        self.sizes
            .par_iter()
            .map(|&n| self.run_size(n, seed))
            .collect()
    }
}

/// Concentration and perturbation measurements over a sweep of `n` at fixed
/// sparsity exponent. The cross-block probability is `q = q_scale·n^(ρ-1)`
/// and `p = p_over_q·q`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsSweep {
    pub sizes: Vec<usize>,
    pub k: usize,
    pub rho: f64,
    pub q_scale: f64,
    pub p_over_q: f64,
    pub length: usize,
    pub window: usize,
    /// `None` means `100·n`.
    pub walks: Option<usize>,
    /// Power `t` in `‖Pᵗ - P̄ᵗ‖`.
    pub transition_power: u32,
    /// Use `C̄` itself in place of the sampled matrix.
    pub inject_expected: bool,
}

/// `C̄`, its spectrum and `Π̄` for one size of a [`DiagnosticsSweep`].
#[derive(Debug, Clone)]
pub struct Population {
    pub params: SbmParams,
    pub cbar: CoocMatrix,
    pub spectrum: Vec<f64>,
    pub projector: crate::linalg::Matrix,
}

pub const DIAGNOSTIC_NAMES: [&str; 6] = [
    "relative_deviation",
    "concentration_ratio",
    "transition_deviation",
    "eigenvalue_shift",
    "weyl_margin",
    "projector_distance",
];

impl DiagnosticsSweep {
    pub fn paper_defaults() -> Self {
        DiagnosticsSweep {
            sizes: vec![200, 400, 800],
            k: 2,
            rho: 0.8,
            q_scale: 0.2,
            p_over_q: 4.0,
            length: 10,
            window: 5,
            walks: None,
            transition_power: 1,
            inject_expected: false,
        }
    }

    pub fn params(&self, n: usize) -> Result<SbmParams> {
        let q = self.q_scale * (n as f64).powf(self.rho - 1.0);
        SbmParams::with_rho(n, self.k, self.p_over_q * q, q, self.rho)
    }

    /// Population objects shared by every seed at size `n`.
    pub fn population(&self, n: usize) -> Result<Population> {
        let params = self.params(n)?;
        let cbar = expected_cooccurrence(&params, self.length, self.window)?;
        let spectrum = cbar_spectrum(&params, self.length, self.window)?;
        // Π does not depend on η; any positive value works.
        let projector = build_linear_update(&cbar, 1.0, self.k)?.projector();
        Ok(Population {
            params,
            cbar,
            spectrum,
            projector,
        })
    }

    /// Diagnostic values for one seed, in [`DIAGNOSTIC_NAMES`] order.
    pub fn measure(&self, pop: &Population, seed: u64) -> Result<[f64; 6]> {
        let params = pop.params;
        let n = params.n;
        let graph = sample_graph(&params, child_seed(seed, stream::GRAPH))?;
        let emp = if self.inject_expected {
            pop.cbar.clone()
        } else {
            let walks = WalkConfig::new(
                self.walks.unwrap_or(default_walks(n)),
                self.length,
                self.window,
            )?;
            build_cooccurrence(&graph, &walks, child_seed(seed, stream::WALKS))?
        };
        let rel = relative_deviation(&emp, &pop.cbar)?;
        let conc = concentration_ratio(&emp, &pop.cbar, self.rho)?;
        let trans = transition_deviation(&graph, &params, self.transition_power)?;
        let diff_norm = spectral_norm(&(&emp.values - &pop.cbar.values));
        let emp_spec = sym_eigenvalues(&emp.values)?;
        let shift = emp_spec
            .iter()
            .zip(&pop.spectrum)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let pi = build_linear_update(&emp, 1.0, self.k)?.projector();
        let proj = projector_distance(&pi, &pop.projector)?;
        Ok([rel, conc, trans, shift, diff_norm - shift, proj])
    }

    /// Per-seed values, indexed `[size][seed][diagnostic]`.
    pub fn measure_all(&self, seeds: &[u64]) -> Result<Vec<Vec<[f64; 6]>>> {
        self.sizes
            .iter()
            .map(|&n| {
                let pop = self.population(n)?;
                seeds.par_iter().map(|&s| self.measure(&pop, s)).collect()
            })
            .collect()
    }

    /// One row per diagnostic and size holding the median over seeds,
    /// grouped by diagnostic.
    pub fn rows(&self, seeds: &[u64]) -> Result<Vec<DiagnosticRow>> {
        let values = self.measure_all(seeds)?;
        let mut rows = Vec::new();
        for (d, name) in DIAGNOSTIC_NAMES.iter().enumerate() {
            for (i, &n) in self.sizes.iter().enumerate() {
                let med = median(values[i].iter().map(|v| v[d]).collect());
                rows.push(DiagnosticRow::new(*name, &self.params(n)?, med));
            }
        }
        Ok(rows)
    }
}

/// Median; the mean of the two middle values for even length, NaN if empty.
pub fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_values() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(Vec::new()).is_nan());
    }

    #[test]
    fn graph_resampling_is_deterministic() {
        let params = SbmParams::with_rho(6, 3, 0.5, 0.05, 0.5).unwrap();
        let a = sample_graph(&params, 42).unwrap();
        let b = sample_graph(&params, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.isolated_node().is_none());
    }

    #[test]
    fn expected_source_runs_reach_threshold() {
        let params = SbmParams::new(60, 3, 0.5, 0.1).unwrap();
        let mut pipe = Pipeline::new(params);
        pipe.source = CoocSource::Expected;
        let out = run_training(&pipe, &TrainConfig::new(0.05), 1).unwrap();
        assert_eq!(out.trajectory.records.len(), out.trajectory.t_f + 1);
        assert_eq!(out.report.means.nrows(), 3);
        assert!(out.z_angle() < 0.5);
    }

    #[test]
    fn sweep_order_matches_seeds() {
        let params = SbmParams::new(30, 2, 0.6, 0.1).unwrap();
        let mut pipe = Pipeline::new(params);
        pipe.walks.walks = 300;
        let cfg = TrainConfig {
            stopping: Stopping::FixedIters(5),
            ..TrainConfig::new(0.1)
        };
        let all = run_sweep(&pipe, &cfg, &[4, 9]).unwrap();
        let single = run_training(&pipe, &cfg, 9).unwrap();
        assert_eq!(all[1].seed, 9);
        assert_eq!(all[1].state, single.state);
    }

    #[test]
    fn injected_expected_matrix_has_zero_deviation() {
        let sweep = DiagnosticsSweep {
            sizes: vec![40],
            inject_expected: true,
            ..DiagnosticsSweep::paper_defaults()
        };
        let rows = sweep.rows(&[1, 2]).unwrap();
        assert_eq!(rows.len(), DIAGNOSTIC_NAMES.len());
        assert_eq!(rows[0].value, 0.0);
        assert_eq!(rows[1].value, 0.0);
    }
}
