//! Population co-occurrence matrix, the linearised update and perturbation
//! diagnostics.

use std::io::Write;
use std::ops::SubAssign;
use std::path::Path;

use crate::error::{invalid, mismatch, Error, Result};
use crate::linalg::{projector, spectral_norm, sym_eigen, Matrix, Vector};
use crate::sbm::{expected_adjacency, Graph, SbmParams};
use crate::walks::{validate_window, window_weight, CoocKind, CoocMatrix, CoocMeta};

/// Entries of the block-constant `C̄`: `a` inside a block, `b` across, and
/// the growth scales `γ = n(a-b)/2K`, `θ = n(a-b)/K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockValues {
    pub a: f64,
    pub b: f64,
    pub gamma: f64,
    pub theta: f64,
}

/// `(p - q) / (p + (K-1)q)`, the ratio `α_i / α_1` of the expected adjacency
/// eigenvalues.
pub fn eigen_ratio(params: &SbmParams) -> f64 {
    (params.p - params.q) / (params.p + (params.k as f64 - 1.0) * params.q)
}

fn ratio_weight(params: &SbmParams, length: usize, window: usize) -> f64 {
    let ratio = eigen_ratio(params);
    (1..=window)
        .map(|t| (length - t) as f64 * ratio.powi(t as i32))
        .sum()
}

/// Closed forms without parameter validation (so `p = q` can be examined).
pub(crate) fn block_values_unchecked(
    params: &SbmParams,
    length: usize,
    window: usize,
) -> BlockValues {
    let n = params.n as f64;
    let k = params.k as f64;
    let s = window_weight(length, window);
    let sr = ratio_weight(params, length, window);
    let scale = 2.0 / (n * n);
    let a = scale * (s + (k - 1.0) * sr);
    let b = scale * (s - sr);
    let gap = scale * k * sr;
    BlockValues {
        a,
        b,
        gamma: n * gap / (2.0 * k),
        theta: n * gap / k,
    }
}

pub fn block_values(params: &SbmParams, length: usize, window: usize) -> Result<BlockValues> {
    params.validate()?;
    validate_window(length, window)?;
    Ok(block_values_unchecked(params, length, window))
}

/// Eigenvalues of `C̄`, descending: `(2/n)Σ(L-t)` once, `(2/n)Σ(L-t)ρᵗ`
/// (with `ρ` the [`eigen_ratio`]) `K-1` times, then zeros.
pub fn cbar_spectrum(params: &SbmParams, length: usize, window: usize) -> Result<Vec<f64>> {
    params.validate()?;
    validate_window(length, window)?;
    let n = params.n as f64;
    let mut spec = vec![0.0; params.n];
    spec[0] = 2.0 / n * window_weight(length, window);
    for v in spec.iter_mut().take(params.k).skip(1) {
        *v = 2.0 / n * ratio_weight(params, length, window);
    }
    Ok(spec)
}

/// `C̄ = 2Σ_{t=1..T}(L-t)/(n d̄) · D_Ā P̄ᵗ` with `P̄ = D_Ā⁻¹ Ā`, evaluated by
/// explicit matrix powers and checked against the block form.
pub fn expected_cooccurrence(
    params: &SbmParams,
    length: usize,
    window: usize,
) -> Result<CoocMatrix> {
    params.validate()?;
    validate_window(length, window)?;
    let n = params.n;
    let abar = expected_adjacency(params)?;
    let degrees: Vec<f64> = abar.row_iter().map(|r| r.sum()).collect();
    let dbar = params.expected_degree();
    let pbar = Matrix::from_fn(n, n, |i, j| abar[(i, j)] / degrees[i]);
    let mut acc = Matrix::zeros(n, n);
    let mut pt = pbar.clone();
    for t in 1..=window {
        if t > 1 {
            pt = &pt * &pbar;
        }
        acc += &pt * ((length - t) as f64);
    }
    let coef = 2.0 / (n as f64 * dbar);
    let values = Matrix::from_fn(n, n, |i, j| coef * degrees[i] * acc[(i, j)]);

    let bv = block_values_unchecked(params, length, window);
    let worst = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .map(|(i, j)| {
            let want = if params.label_of(i) == params.label_of(j) {
                bv.a
            } else {
                bv.b
            };
            (values[(i, j)] - want).abs()
        })
        .fold(0.0, f64::max);
    if worst > 1e-10 {
        return Err(Error::NonFinite(format!(
            "expected co-occurrence deviates from its block form by {worst:e}"
        )));
    }
    Ok(CoocMatrix {
        values,
        kind: CoocKind::Expected,
        meta: CoocMeta {
            walks: None,
            length,
            window,
            seed: None,
            scale: 1.0,
        },
    })
}

/// `C̄` written directly from `(a, b)`.
pub fn block_matrix(params: &SbmParams, bv: &BlockValues) -> Matrix {
    Matrix::from_fn(params.n, params.n, |i, j| {
        if params.label_of(i) == params.label_of(j) {
            bv.a
        } else {
            bv.b
        }
    })
}

/// `M = D_C (J/n) - C`.
pub fn m_matrix(c: &Matrix) -> Matrix {
    let n = c.nrows();
    let rows: Vec<f64> = c.row_iter().map(|r| r.sum() / n as f64).collect();
    Matrix::from_fn(n, n, |i, j| rows[i] - c[(i, j)])
}

/// `[[I, -ηM], [-ηMᵀ, I]]`.
pub fn lmat_from(m: &Matrix, eta: f64) -> Matrix {
    let n = m.nrows();
    let mut l = Matrix::identity(2 * n, 2 * n);
    l.view_mut((0, n), (n, n)).copy_from(&(m * -eta));
    l.view_mut((n, 0), (n, n))
        .copy_from(&(m.transpose() * -eta));
    l
}

/// The linear part of one gradient step together with the projector onto
/// its top `K-1` eigenvectors.
#[derive(Debug, Clone)]
pub struct LinearUpdate {
    pub m: Matrix,
    pub eta: f64,
    pub k: usize,
    /// `2n × (K-1)` orthonormal eigenvectors of `Lmat` for its largest
    /// eigenvalues; zero columns when the eigenspace is degenerate.
    pub basis: Matrix,
    /// Singular values of `M`, descending. The eigenvalues of `Lmat` are
    /// `1 ± ησ_i`.
    pub singular_values: Vec<f64>,
    pub degenerate: bool,
}

/// Relative size below which the `(K-1)`-th singular value counts as zero.
const DEGENERATE_TOL: f64 = 1e-10;

impl LinearUpdate {
    pub fn n(&self) -> usize {
        self.m.nrows()
    }

    pub fn lmat(&self) -> Matrix {
        lmat_from(&self.m, self.eta)
    }

    /// The `2n` eigenvalues of `Lmat`, descending.
    pub fn lmat_eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self
            .singular_values
            .iter()
            .flat_map(|s| [1.0 + self.eta * s, 1.0 - self.eta * s])
            .collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    /// `Π`, a `2n × 2n` orthogonal projector of rank `K-1` (or zero).
    pub fn projector(&self) -> Matrix {
        projector(&self.basis)
    }

    /// `Π w` for a `2n × d` iterate, without forming `Π`.
    pub fn project(&self, w: &Matrix) -> Matrix {
        &self.basis * (self.basis.transpose() * w)
    }

    /// `Lmat · w` for a `2n × d` iterate, without forming `Lmat`.
    pub fn apply(&self, w: &Matrix) -> Matrix {
        let n = self.n();
        let x = w.rows(0, n);
        let y = w.rows(n, n);
        let mut out = w.clone();
        out.rows_mut(0, n).sub_assign(&(&self.m * y * self.eta));
        out.rows_mut(n, n)
            .sub_assign(&(self.m.tr_mul(&x) * self.eta));
        out
    }
}

fn check_cooc(c: &Matrix) -> Result<()> {
    if !c.is_square() {
        return Err(mismatch(
            "square matrix",
            format!("{}x{}", c.nrows(), c.ncols()),
        ));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("co-occurrence matrix".into()));
    }
    Ok(())
}

fn check_eta_k(eta: f64, k: usize, n: usize) -> Result<()> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(invalid(format!(
            "learning rate must be positive, got {eta}"
        )));
    }
    if k < 2 || k > n {
        return Err(invalid(format!("K = {k} must lie in 2..={n}")));
    }
    Ok(())
}

/// Build `M`, `Lmat` and `Π`.
///
/// If `Mv = σu` then `(u, -v)/√2` is an eigenvector of `Lmat` with eigenvalue
/// `1 + ησ`, so the top eigenvectors come from the symmetric eigenproblem of
/// `MᵀM` (size `n`) rather than that of `Lmat` (size `2n`). Each stacked
/// vector has its first non-negligible entry made positive.
pub fn build_linear_update(c: &CoocMatrix, eta: f64, k: usize) -> Result<LinearUpdate> {
    linear_update_from(&c.values, eta, k)
}

pub fn linear_update_from(c: &Matrix, eta: f64, k: usize) -> Result<LinearUpdate> {
    check_cooc(c)?;
    let n = c.nrows();
    check_eta_k(eta, k, n)?;
    let m = m_matrix(c);
    let eig = sym_eigen(&m.tr_mul(&m))?;
    // Square roots of the eigenvalues of MᵀM lose half the digits of small
    // singular values, so the values come from a separate SVD.
    let singular_values = singular_values(&m)?;
    let scale = singular_values[0].max(f64::MIN_POSITIVE);
    let degenerate = singular_values[k - 2] <= DEGENERATE_TOL * scale || singular_values[0] == 0.0;
    let mut basis = Matrix::zeros(2 * n, k - 1);
    if degenerate {
        log::warn!("top eigenspace of the linear update is degenerate; using the zero projector");
    } else {
        if k - 1 < n && (singular_values[k - 2] - singular_values[k - 1]) <= DEGENERATE_TOL * scale
        {
            log::warn!("no spectral gap after the top K-1 eigenvalues; projector is not unique");
        }
        for (col, &sigma) in singular_values.iter().enumerate().take(k - 1) {
            let v = eig.vectors.column(col);
            let u = &m * v / sigma;
            let mut stacked = Vector::zeros(2 * n);
            stacked.rows_mut(0, n).copy_from(&u);
            stacked.rows_mut(n, n).copy_from(&(-v));
            stacked /= stacked.norm();
            if let Some(first) = stacked.iter().copied().find(|x| x.abs() > 1e-12) {
                if first < 0.0 {
                    stacked.neg_mut();
                }
            }
            basis.set_column(col, &stacked);
        }
    }
    Ok(LinearUpdate {
        m,
        eta,
        k,
        basis,
        singular_values,
        degenerate,
    })
}

fn singular_values(m: &Matrix) -> Result<Vec<f64>> {
    let svd = nalgebra::SVD::try_new(
        m.clone(),
        false,
        false,
        f64::EPSILON,
        100_000 + 100 * m.nrows(),
    )
    .ok_or_else(|| Error::Eigen("SVD did not converge".into()))?;
    let mut s: Vec<f64> = svd.singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    Ok(s)
}

/// Same result as [`build_linear_update`] but read off the full eigen
/// decomposition of the `2n × 2n` matrix `Lmat`.
pub fn linear_update_dense(c: &Matrix, eta: f64, k: usize) -> Result<LinearUpdate> {
    check_cooc(c)?;
    let n = c.nrows();
    check_eta_k(eta, k, n)?;
    let m = m_matrix(c);
    let eig = sym_eigen(&lmat_from(&m, eta))?;
    let mut singular_values: Vec<f64> = eig.values[..n]
        .iter()
        .map(|l| ((l - 1.0) / eta).max(0.0))
        .collect();
    singular_values.sort_by(|a, b| b.total_cmp(a));
    let scale = singular_values[0].max(f64::MIN_POSITIVE);
    let degenerate = singular_values[k - 2] <= DEGENERATE_TOL * scale || singular_values[0] == 0.0;
    let basis = if degenerate {
        Matrix::zeros(2 * n, k - 1)
    } else {
        eig.vectors.columns(0, k - 1).into_owned()
    };
    Ok(LinearUpdate {
        m,
        eta,
        k,
        basis,
        singular_values,
        degenerate,
    })
}

/// Spectral-norm distance between two projectors (the sine of the largest
/// principal angle when ranks agree).
pub fn projector_distance(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(mismatch(
            format!("{:?}", a.shape()),
            format!("{:?}", b.shape()),
        ));
    }
    Ok(spectral_norm(&(a - b)))
}

fn same_shape(a: &CoocMatrix, b: &CoocMatrix) -> Result<()> {
    if a.values.shape() != b.values.shape() {
        return Err(mismatch(
            format!("{:?}", b.values.shape()),
            format!("{:?}", a.values.shape()),
        ));
    }
    Ok(())
}

/// `‖C - C̄‖ / ‖C̄‖`.
pub fn relative_deviation(c_emp: &CoocMatrix, c_bar: &CoocMatrix) -> Result<f64> {
    same_shape(c_emp, c_bar)?;
    let denom = spectral_norm(&c_bar.values);
    if denom == 0.0 {
        return Err(invalid("reference matrix is zero"));
    }
    Ok(spectral_norm(&(&c_emp.values - &c_bar.values)) / denom)
}

/// `‖C - C̄‖ / (‖C̄‖ √(log n / n^ρ))`: the constant the concentration bound
/// would need.
pub fn concentration_ratio(c_emp: &CoocMatrix, c_bar: &CoocMatrix, rho: f64) -> Result<f64> {
    let rel = relative_deviation(c_emp, c_bar)?;
    let n = c_bar.n() as f64;
    let rate = (n.ln() / n.powf(rho)).sqrt();
    if rate.is_nan() || rate <= 0.0 {
        return Err(invalid(format!(
            "rate sqrt(log n / n^rho) vanishes at n = {n}"
        )));
    }
    Ok(rel / rate)
}

/// `‖Pᵗ - P̄ᵗ‖` for two transition matrices.
pub fn transition_deviation_from(p: &Matrix, pbar: &Matrix, t: u32) -> Result<f64> {
    if p.shape() != pbar.shape() || !p.is_square() {
        return Err(mismatch(
            format!("{:?}", pbar.shape()),
            format!("{:?}", p.shape()),
        ));
    }
    if t == 0 {
        return Err(invalid("power t must be at least 1"));
    }
    Ok(spectral_norm(&(p.pow(t) - pbar.pow(t))))
}

/// `P̄ = D_Ā⁻¹ Ā`.
pub fn expected_transition(params: &SbmParams) -> Result<Matrix> {
    Ok(expected_adjacency(params)? / params.expected_degree())
}

/// `‖Pᵗ - P̄ᵗ‖` for a sampled graph and its model.
pub fn transition_deviation(graph: &Graph, params: &SbmParams, t: u32) -> Result<f64> {
    if graph.n() != params.n {
        return Err(mismatch(params.n, graph.n()));
    }
    transition_deviation_from(
        &graph.transition_matrix()?,
        &expected_transition(params)?,
        t,
    )
}

/// One line of the diagnostics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRow {
    pub name: String,
    pub n: usize,
    pub k: usize,
    pub p: f64,
    pub q: f64,
    pub value: f64,
}

pub const DIAGNOSTIC_HEADER: &str = "name,n,K,p,q,value";

impl DiagnosticRow {
    pub fn new(name: impl Into<String>, params: &SbmParams, value: f64) -> Self {
        DiagnosticRow {
            name: name.into(),
            n: params.n,
            k: params.k,
            p: params.p,
            q: params.q,
            value,
        }
    }

    pub fn csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.name, self.n, self.k, self.p, self.q, self.value
        )
    }
}

pub fn write_diagnostics<W: Write>(mut out: W, rows: &[DiagnosticRow], header: bool) -> Result<()> {
    if header {
        writeln!(out, "{DIAGNOSTIC_HEADER}")?;
    }
    for row in rows {
        writeln!(out, "{}", row.csv_line())?;
    }
    Ok(())
}

/// Append rows to `path`, writing the header first if the file is new or
/// empty.
pub fn append_diagnostics(path: &Path, rows: &[DiagnosticRow]) -> Result<()> {
    let fresh = std::fs::metadata(path)
        .map(|m| m.len() == 0)
        .unwrap_or(true);
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)?;
    write_diagnostics(std::io::BufWriter::new(file), rows, fresh)
}
