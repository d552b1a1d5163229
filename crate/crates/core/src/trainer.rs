//! The DeepWalk objective, its gradient, full-batch gradient descent and the
//! linearised companion iteration.
//!
//! Embeddings are stored as `n × d` matrices `X` (node) and `Y` (context);
//! their vertical stack `W = [X; Y]` is the iterate the analysis talks about.
//! Every function taking a co-occurrence matrix `c` uses it as given: any
//! rescaling happens before training (see [`crate::walks::CoocScaling`]).

use std::io::Write;

use rand_distr::{Distribution, StandardNormal};

use crate::error::{invalid, mismatch, Error, Result};
use crate::linalg::Matrix;
use crate::rng::seeded;
use crate::theory::LinearUpdate;

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingState {
    pub x: Matrix,
    pub y: Matrix,
    pub iter: usize,
}

impl EmbeddingState {
    pub fn new(x: Matrix, y: Matrix) -> Result<Self> {
        if x.shape() != y.shape() {
            return Err(mismatch(
                format!("{:?}", x.shape()),
                format!("{:?}", y.shape()),
            ));
        }
        if x.ncols() == 0 {
            return Err(invalid("embedding dimension must be at least 1"));
        }
        let state = EmbeddingState { x, y, iter: 0 };
        state.check_finite()?;
        Ok(state)
    }

    pub fn zeros(n: usize, d: usize) -> Self {
        EmbeddingState {
            x: Matrix::zeros(n, d),
            y: Matrix::zeros(n, d),
            iter: 0,
        }
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }

    /// `W = [X; Y]`, shape `2n × d`.
    pub fn stacked(&self) -> Matrix {
        let (n, d) = self.x.shape();
        let mut w = Matrix::zeros(2 * n, d);
        w.rows_mut(0, n).copy_from(&self.x);
        w.rows_mut(n, n).copy_from(&self.y);
        w
    }

    pub fn from_stacked(w: &Matrix, iter: usize) -> Self {
        let n = w.nrows() / 2;
        EmbeddingState {
            x: w.rows(0, n).into_owned(),
            y: w.rows(n, n).into_owned(),
            iter,
        }
    }

    /// `‖W‖_F` (the Euclidean norm of `w` when `d = 1`).
    pub fn norm(&self) -> f64 {
        (self.x.norm_squared() + self.y.norm_squared()).sqrt()
    }

    pub fn check_finite(&self) -> Result<()> {
        if self.x.iter().chain(self.y.iter()).all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(format!(
                "embedding at iteration {}",
                self.iter
            )))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitMode {
    /// Rescale the stacked draw to Frobenius norm `ε`.
    NormBall,
    /// Rescale the stacked draw so its largest absolute entry is the bound.
    InfBall(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stopping {
    /// Stop once `‖W‖_F ≥ εΔ`, or at `max_iters`.
    NormThreshold,
    /// Run exactly this many steps.
    FixedIters(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub eta: f64,
    /// Defaults to `n^(-2/3)`.
    pub epsilon: Option<f64>,
    /// Defaults to `n^(1/6)`.
    pub delta: Option<f64>,
    /// Defaults to `10·⌈4 log(n/Δ)/η⌉`.
    pub max_iters: Option<usize>,
    pub init: InitMode,
    pub stopping: Stopping,
    pub dim: usize,
    pub seed: u64,
    pub record_objective: bool,
    pub record_states: bool,
}

impl TrainConfig {
    pub fn new(eta: f64) -> Self {
        TrainConfig {
            eta,
            epsilon: None,
            delta: None,
            max_iters: None,
            init: InitMode::NormBall,
            stopping: Stopping::NormThreshold,
            dim: 1,
            seed: 0,
            record_objective: false,
            record_states: false,
        }
    }

    pub fn epsilon_for(&self, n: usize) -> f64 {
        self.epsilon.unwrap_or_else(|| (n as f64).powf(-2.0 / 3.0))
    }

    pub fn delta_for(&self, n: usize) -> f64 {
        self.delta.unwrap_or_else(|| (n as f64).powf(1.0 / 6.0))
    }

    /// `4 log(n/Δ)/η`, the iteration bound the threshold rule is expected to
    /// respect.
    pub fn iteration_bound(&self, n: usize) -> f64 {
        4.0 * (n as f64 / self.delta_for(n)).ln() / self.eta
    }

    pub fn max_iters_for(&self, n: usize) -> usize {
        self.max_iters
            .unwrap_or_else(|| 10 * self.iteration_bound(n).ceil().max(1.0) as usize)
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(invalid(format!(
                "learning rate must be positive, got {}",
                self.eta
            )));
        }
        if self.dim == 0 {
            return Err(invalid("embedding dimension must be at least 1"));
        }
        let (eps, delta) = (self.epsilon_for(n), self.delta_for(n));
        if !(eps > 0.0 && eps.is_finite()) || !(delta > 0.0 && delta.is_finite()) {
            return Err(invalid(format!(
                "epsilon = {eps} and delta = {delta} must be positive"
            )));
        }
        if let InitMode::InfBall(b) = self.init {
            if !(b > 0.0 && b.is_finite()) {
                return Err(invalid(format!("inf-ball bound must be positive, got {b}")));
            }
        }
        if 4.0 * (eps * delta).powi(2) >= 1.0 {
            log::warn!(
                "4(epsilon*delta)^2 = {} is not below 1",
                4.0 * (eps * delta).powi(2)
            );
        }
        Ok(())
    }
}

/// Draw `X` then `Y` entrywise (row-major) from a standard normal and rescale
/// per `cfg.init`. Both init modes see the same raw draw for a given seed.
pub fn init_state(n: usize, cfg: &TrainConfig) -> Result<EmbeddingState> {
    cfg.validate(n)?;
    let d = cfg.dim;
    let mut rng = seeded(cfg.seed);
    let mut draw = || -> Vec<f64> {
        (0..n * d)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect()
    };
    let x = Matrix::from_row_slice(n, d, &draw());
    let y = Matrix::from_row_slice(n, d, &draw());
    let mut state = EmbeddingState { x, y, iter: 0 };
    let factor = match cfg.init {
        InitMode::NormBall => cfg.epsilon_for(n) / state.norm(),
        InitMode::InfBall(bound) => {
            let max = state
                .x
                .iter()
                .chain(state.y.iter())
                .fold(0.0f64, |m, v| m.max(v.abs()));
            bound / max
        }
    };
    state.x *= factor;
    state.y *= factor;
    Ok(state)
}

fn check_inputs(c: Option<&Matrix>, x: &Matrix, y: &Matrix) -> Result<()> {
    if x.shape() != y.shape() {
        return Err(mismatch(
            format!("Y of shape {:?}", x.shape()),
            format!("{:?}", y.shape()),
        ));
    }
    if let Some(c) = c {
        if c.shape() != (x.nrows(), x.nrows()) {
            return Err(mismatch(
                format!("C of shape ({0}, {0})", x.nrows()),
                format!("{:?}", c.shape()),
            ));
        }
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("co-occurrence matrix".into()));
        }
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("embedding".into()));
    }
    Ok(())
}

/// Scores `Sᵀ = Y Xᵀ`: column `i` holds `⟨x_i, y_j⟩` for all `j`, so each
/// softmax row is a contiguous column.
fn scores_t(x: &Matrix, y: &Matrix) -> Matrix {
    y * x.transpose()
}

/// `Q_ij = exp⟨x_i, y_j⟩ / Σ_k exp⟨x_i, y_k⟩`, with the row maximum
/// subtracted before exponentiating.
pub fn softmax_matrix(x: &Matrix, y: &Matrix) -> Result<Matrix> {
    check_inputs(None, x, y)?;
    let mut st = scores_t(x, y);
    for mut col in st.column_iter_mut() {
        let max = col.max();
        col.apply(|v| *v = (*v - max).exp());
        let total = col.sum();
        col /= total;
    }
    Ok(st.transpose())
}

/// `-Σ_ij C_ij log Q_ij` via a stabilised log-softmax.
pub fn objective(c: &Matrix, x: &Matrix, y: &Matrix) -> Result<f64> {
    check_inputs(Some(c), x, y)?;
    let st = scores_t(x, y);
    let mut total = 0.0;
    for (i, col) in st.column_iter().enumerate() {
        let max = col.max();
        let lse = max + col.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for (j, s) in col.iter().enumerate() {
            total -= c[(i, j)] * (s - lse);
        }
    }
    Ok(total)
}

/// `G = D_C Q - C`.
fn g_matrix(c: &Matrix, q: &Matrix) -> Matrix {
    let n = c.nrows();
    let deg: Vec<f64> = c.row_iter().map(|r| r.sum()).collect();
    Matrix::from_fn(n, n, |i, j| deg[i] * q[(i, j)] - c[(i, j)])
}

/// `(∇X, ∇Y) = (G Y, Gᵀ X)` with `G = D_C Q - C`.
pub fn gradient(c: &Matrix, x: &Matrix, y: &Matrix) -> Result<(Matrix, Matrix)> {
    check_inputs(Some(c), x, y)?;
    let g = g_matrix(c, &softmax_matrix(x, y)?);
    Ok((&g * y, g.tr_mul(x)))
}

/// Everything one step needs, computed in a single pass over node pairs:
/// the gradient `(G Y, Gᵀ X)` and `‖D_C (Q - J/n)‖_F²`. Row `i` of `C` is
/// read from column `i` of `ct = Cᵀ`, and row `i` of `Q` is never stored.
struct StepTerms {
    gx: Matrix,
    gy: Matrix,
    err_sq: f64,
}

fn step_terms(ct: &Matrix, x: &Matrix, y: &Matrix) -> StepTerms {
    let (n, d) = x.shape();
    let uniform = 1.0 / n as f64;
    let mut gx = Matrix::zeros(n, d);
    let mut gy = Matrix::zeros(n, d);
    let mut err_sq = 0.0;
    let mut row = vec![0.0; n];
    for i in 0..n {
        row.iter_mut().for_each(|v| *v = 0.0);
        for k in 0..d {
            let xik = x[(i, k)];
            for (r, yjk) in row.iter_mut().zip(y.column(k).iter()) {
                *r += xik * yjk;
            }
        }
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for r in row.iter_mut() {
            *r = (*r - max).exp();
            total += *r;
        }
        let ci = ct.column(i);
        let deg = ci.sum();
        let scale = deg / total;
        // Overwrite the row with G_ij = d_i Q_ij - C_ij.
        for (r, cij) in row.iter_mut().zip(ci.iter()) {
            let dq = scale * *r;
            let e = dq - deg * uniform;
            err_sq += e * e;
            *r = dq - cij;
        }
        for k in 0..d {
            let xik = x[(i, k)];
            let mut acc = 0.0;
            for ((g, yjk), gyjk) in row
                .iter()
                .zip(y.column(k).iter())
                .zip(gy.column_mut(k).iter_mut())
            {
                acc += g * yjk;
                *gyjk += g * xik;
            }
            gx[(i, k)] = acc;
        }
    }
    StepTerms { gx, gy, err_sq }
}

fn apply_step(state: &EmbeddingState, terms: &StepTerms, eta: f64) -> Result<EmbeddingState> {
    let next = EmbeddingState {
        x: &state.x - &terms.gx * eta,
        y: &state.y - &terms.gy * eta,
        iter: state.iter + 1,
    };
    next.check_finite()?;
    Ok(next)
}

/// One simultaneous step: `X ← X - ηG Y`, `Y ← Y - ηGᵀX`, both from the
/// pre-step values.
pub fn gd_step(state: &EmbeddingState, c: &Matrix, eta: f64) -> Result<EmbeddingState> {
    check_inputs(Some(c), &state.x, &state.y)?;
    apply_step(state, &step_terms(&c.transpose(), &state.x, &state.y), eta)
}

/// `D_C (Q - J/n)`, the off-diagonal block of the error term `E`.
pub fn error_block(c: &Matrix, x: &Matrix, y: &Matrix) -> Result<Matrix> {
    check_inputs(Some(c), x, y)?;
    Ok(error_block_with_q(c, &softmax_matrix(x, y)?))
}

fn error_block_with_q(c: &Matrix, q: &Matrix) -> Matrix {
    let n = c.nrows();
    let deg: Vec<f64> = c.row_iter().map(|r| r.sum()).collect();
    let u = 1.0 / n as f64;
    Matrix::from_fn(n, n, |i, j| deg[i] * (q[(i, j)] - u))
}

/// `E = [[0, B], [Bᵀ, 0]]` with `B = D_C (Q - J/n)`, so that
/// `gd_step(w) = Lmat·w - ηE·w`.
pub fn error_matrix(c: &Matrix, x: &Matrix, y: &Matrix) -> Result<Matrix> {
    let b = error_block(c, x, y)?;
    let n = b.nrows();
    let mut e = Matrix::zeros(2 * n, 2 * n);
    e.view_mut((0, n), (n, n)).copy_from(&b);
    e.view_mut((n, 0), (n, n)).copy_from(&b.transpose());
    Ok(e)
}

/// `‖E‖_F = √2 ‖D_C (Q - J/n)‖_F`.
pub fn error_term_norm(c: &Matrix, x: &Matrix, y: &Matrix) -> Result<f64> {
    Ok(std::f64::consts::SQRT_2 * error_block(c, x, y)?.norm())
}

/// `w ← Lmat·w`, column by column.
pub fn linear_step(state: &EmbeddingState, lin: &LinearUpdate) -> Result<EmbeddingState> {
    if state.n() != lin.n() {
        return Err(mismatch(lin.n(), state.n()));
    }
    Ok(EmbeddingState::from_stacked(
        &lin.apply(&state.stacked()),
        state.iter + 1,
    ))
}

/// Ground truth and projector used to annotate a trajectory.
#[derive(Debug, Clone, Copy)]
pub struct Probe<'a> {
    pub labels: &'a [usize],
    pub k: usize,
    pub linear: Option<&'a LinearUpdate>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub norm_w: f64,
    /// `‖Πw‖_F`.
    pub norm_z: Option<f64>,
    /// `‖w - Πw‖_F`.
    pub resid: Option<f64>,
    pub err_frob: Option<f64>,
    pub objective: Option<f64>,
    /// Per-cluster means of `x`; for `d > 1` the norm of each centroid.
    pub means: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Threshold,
    Cap,
    Fixed,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Termination::Threshold => "threshold",
            Termination::Cap => "cap",
            Termination::Fixed => "fixed",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// One record per iterate, `t = 0..=t_f`.
    pub records: Vec<IterRecord>,
    pub t_f: usize,
    pub termination: Termination,
    /// Every iterate, when requested.
    pub states: Vec<EmbeddingState>,
    /// `εΔ` in effect during the run.
    pub threshold: f64,
}

fn cluster_means(x: &Matrix, probe: &Probe) -> Vec<f64> {
    let d = x.ncols();
    let mut sums = Matrix::zeros(probe.k, d);
    let mut counts = vec![0usize; probe.k];
    for (i, &l) in probe.labels.iter().enumerate() {
        let mut row = sums.row_mut(l);
        row += x.row(i);
        counts[l] += 1;
    }
    (0..probe.k)
        .map(|l| {
            let mean = sums.row(l) / counts[l].max(1) as f64;
            if d == 1 {
                mean[0]
            } else {
                mean.norm()
            }
        })
        .collect()
}

fn record(
    state: &EmbeddingState,
    probe: Option<&Probe>,
    err: Option<f64>,
    obj: Option<f64>,
) -> IterRecord {
    let norm_w = state.norm();
    let (norm_z, resid) = match probe.and_then(|p| p.linear) {
        Some(lin) => {
            let w = state.stacked();
            let z = lin.project(&w);
            (Some(z.norm()), Some((w - z).norm()))
        }
        None => (None, None),
    };
    let means = probe
        .map(|p| cluster_means(&state.x, p))
        .unwrap_or_default();
    IterRecord {
        iter: state.iter,
        norm_w,
        norm_z,
        resid,
        err_frob: err,
        objective: obj,
        means,
    }
}

fn check_probe(n: usize, probe: Option<&Probe>) -> Result<()> {
    if let Some(p) = probe {
        if p.labels.len() != n {
            return Err(mismatch(format!("{n} labels"), p.labels.len()));
        }
        if let Some(&bad) = p.labels.iter().find(|&&l| l >= p.k) {
            return Err(invalid(format!("label {bad} out of range for K = {}", p.k)));
        }
        if let Some(lin) = p.linear {
            if lin.n() != n {
                return Err(mismatch(n, lin.n()));
            }
        }
    }
    Ok(())
}

/// Decide whether to stop before taking another step from `state`.
fn stop_reason(
    state: &EmbeddingState,
    cfg: &TrainConfig,
    threshold: f64,
    cap: usize,
) -> Option<Termination> {
    match cfg.stopping {
        Stopping::FixedIters(t) => (state.iter >= t).then_some(Termination::Fixed),
        Stopping::NormThreshold if state.norm() >= threshold => Some(Termination::Threshold),
        Stopping::NormThreshold => (state.iter >= cap).then_some(Termination::Cap),
    }
}

/// Gradient descent on the DeepWalk objective from the initialisation
/// [`init_state`] prescribes. Returns the trajectory and the final state.
/// Hitting `max_iters` is reported through [`Termination::Cap`], not as an
/// error.
pub fn run_deepwalk(
    c: &Matrix,
    cfg: &TrainConfig,
    probe: Option<&Probe>,
) -> Result<(Trajectory, EmbeddingState)> {
    let n = c.nrows();
    let mut state = init_state(n, cfg)?;
    check_inputs(Some(c), &state.x, &state.y)?;
    check_probe(n, probe)?;
    let threshold = cfg.epsilon_for(n) * cfg.delta_for(n);
    let cap = cfg.max_iters_for(n);
    let mut records = Vec::new();
    let mut states = Vec::new();
    let ct = c.transpose();
    let termination = loop {
        let terms = step_terms(&ct, &state.x, &state.y);
        let err = std::f64::consts::SQRT_2 * terms.err_sq.sqrt();
        let obj = if cfg.record_objective {
            Some(objective(c, &state.x, &state.y)?)
        } else {
            None
        };
        records.push(record(&state, probe, Some(err), obj));
        if cfg.record_states {
            states.push(state.clone());
        }
        if let Some(reason) = stop_reason(&state, cfg, threshold, cap) {
            break reason;
        }
        state = apply_step(&state, &terms, cfg.eta)?;
    };
    let traj = Trajectory {
        records,
        t_f: state.iter,
        termination,
        states,
        threshold,
    };
    Ok((traj, state))
}

/// The linearised iteration `w ← Lmat·w` from the same initialisation as
/// [`run_deepwalk`] with the same stopping rule.
pub fn run_linearized(
    lin: &LinearUpdate,
    cfg: &TrainConfig,
    probe: Option<&Probe>,
) -> Result<(Trajectory, EmbeddingState)> {
    let n = lin.n();
    if cfg.eta != lin.eta {
        return Err(invalid(format!(
            "config learning rate {} differs from the linear update's {}",
            cfg.eta, lin.eta
        )));
    }
    let mut state = init_state(n, cfg)?;
    check_probe(n, probe)?;
    let threshold = cfg.epsilon_for(n) * cfg.delta_for(n);
    let cap = cfg.max_iters_for(n);
    let mut records = Vec::new();
    let mut states = Vec::new();
    let termination = loop {
        records.push(record(&state, probe, None, None));
        if cfg.record_states {
            states.push(state.clone());
        }
        if let Some(reason) = stop_reason(&state, cfg, threshold, cap) {
            break reason;
        }
        state = linear_step(&state, lin)?;
        state.check_finite()?;
    };
    let traj = Trajectory {
        records,
        t_f: state.iter,
        termination,
        states,
        threshold,
    };
    Ok((traj, state))
}

fn opt_field(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// `iter,norm_w,norm_z,resid,err_frob,objective,mu_1..mu_K`; absent values
/// are empty fields.
pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, mut out: W) -> Result<()> {
    let k = traj.records.first().map_or(0, |r| r.means.len());
    let mut header = String::from("iter,norm_w,norm_z,resid,err_frob,objective");
    for i in 1..=k {
        header.push_str(&format!(",mu_{i}"));
    }
    writeln!(out, "{header}")?;
    for r in &traj.records {
        let mut line = format!(
            "{},{},{},{},{},{}",
            r.iter,
            r.norm_w,
            opt_field(r.norm_z),
            opt_field(r.resid),
            opt_field(r.err_frob),
            opt_field(r.objective)
        );
        for m in &r.means {
            line.push_str(&format!(",{m}"));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// `node,label,x_1..x_d,y_1..y_d`.
pub fn write_embedding_csv<W: Write>(
    state: &EmbeddingState,
    labels: &[usize],
    mut out: W,
) -> Result<()> {
    if labels.len() != state.n() {
        return Err(mismatch(format!("{} labels", state.n()), labels.len()));
    }
    let d = state.dim();
    let mut header = String::from("node,label");
    for p in ["x", "y"] {
        for i in 1..=d {
            header.push_str(&format!(",{p}_{i}"));
        }
    }
    writeln!(out, "{header}")?;
    for (i, label) in labels.iter().enumerate() {
        let mut line = format!("{i},{label}");
        for v in state.x.row(i).iter().chain(state.y.row(i).iter()) {
            line.push_str(&format!(",{v}"));
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}
