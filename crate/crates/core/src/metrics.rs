//! Cluster-structure measurements of trained embeddings: within-cluster
//! spread, separation of cluster means, recovery of the planted partition
//! and the distance between paired trajectories.

use std::io::Write;

use itertools::Itertools;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng as _;

use crate::error::{invalid, mismatch, Error, Result};
use crate::linalg::Matrix;
use crate::rng::{child_seed, seeded};
use crate::sbm::SbmParams;
use crate::trainer::Trajectory;

/// Largest `K` accepted by the exhaustive permutation matching.
pub const MAX_MATCH_CLUSTERS: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterReport {
    /// `K × d` per-cluster means of the rows of `x`.
    pub means: Matrix,
    /// `‖x - μ‖_F` with `μ` the node-wise cluster means.
    pub spread: f64,
    /// Smallest distance between two cluster means.
    pub min_gap: f64,
    pub recovery: f64,
    /// `5‖x‖/Δ`.
    pub bound_spread: f64,
    /// `εΔ / (20 K² √n)`.
    pub bound_gap: f64,
}

impl ClusterReport {
    pub fn spread_ok(&self) -> bool {
        self.spread <= self.bound_spread
    }

    pub fn gap_ok(&self) -> bool {
        self.min_gap >= self.bound_gap
    }
}

fn check_labels(n: usize, labels: &[usize], k: usize) -> Result<Vec<usize>> {
    if labels.len() != n {
        return Err(mismatch(format!("{n} labels"), labels.len()));
    }
    let mut counts = vec![0usize; k];
    for &l in labels {
        if l >= k {
            return Err(invalid(format!("label {l} out of range for K = {k}")));
        }
        counts[l] += 1;
    }
    match counts.iter().position(|&c| c == 0) {
        Some(empty) => Err(Error::EmptyCluster(empty)),
        None => Ok(counts),
    }
}

/// `K × d` matrix of cluster means.
pub fn cluster_means(x: &Matrix, labels: &[usize], k: usize) -> Result<Matrix> {
    let counts = check_labels(x.nrows(), labels, k)?;
    let mut means = Matrix::zeros(k, x.ncols());
    for (i, &l) in labels.iter().enumerate() {
        let mut row = means.row_mut(l);
        row += x.row(i);
    }
    for (l, &c) in counts.iter().enumerate() {
        let mut row = means.row_mut(l);
        row /= c as f64;
    }
    Ok(means)
}

/// The node-wise mean matrix: row `i` is the mean of `i`'s cluster.
pub fn mean_field(means: &Matrix, labels: &[usize]) -> Matrix {
    Matrix::from_fn(labels.len(), means.ncols(), |i, j| means[(labels[i], j)])
}

/// Spread, separation and recovery of the node embedding `x` against the
/// planted `labels`, with the bounds for the given `ε` and `Δ`. The bounds
/// are reported, not enforced.
pub fn cluster_report(
    x: &Matrix,
    labels: &[usize],
    k: usize,
    epsilon: f64,
    delta: f64,
) -> Result<ClusterReport> {
    let means = cluster_means(x, labels, k)?;
    let spread = (x - mean_field(&means, labels)).norm();
    let min_gap = (0..k)
        .tuple_combinations()
        .map(|(a, b)| (means.row(a) - means.row(b)).norm())
        .fold(f64::INFINITY, f64::min);
    let n = x.nrows() as f64;
    Ok(ClusterReport {
        means,
        spread,
        min_gap,
        recovery: recovery_fraction(x, labels, k)?,
        bound_spread: 5.0 * x.norm() / delta,
        bound_gap: epsilon * delta / (20.0 * (k * k) as f64 * n.sqrt()),
    })
}

/// How node embeddings are partitioned before matching.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClusterRule {
    /// Exact 1-D k-means for `d = 1`, seeded k-means++ with restarts
    /// otherwise.
    Auto { seed: u64, restarts: usize },
    /// `d = 1` only: sort and cut at the `K-1` largest gaps between
    /// consecutive values.
    GapCut,
    /// Assign each node to the nearest true cluster mean (needs the labels,
    /// so only meaningful as a reference).
    NearestTrueMean,
}

impl Default for ClusterRule {
    fn default() -> Self {
        ClusterRule::Auto {
            seed: 0,
            restarts: 10,
        }
    }
}

/// Best fraction of nodes correctly assigned, over all matchings of
/// predicted to true clusters, using the default [`ClusterRule`].
pub fn recovery_fraction(x: &Matrix, labels: &[usize], k: usize) -> Result<f64> {
    recovery_fraction_with(x, labels, k, ClusterRule::default())
}

pub fn recovery_fraction_with(
    x: &Matrix,
    labels: &[usize],
    k: usize,
    rule: ClusterRule,
) -> Result<f64> {
    if k > MAX_MATCH_CLUSTERS {
        return Err(Error::TooManyClusters(k));
    }
    check_labels(x.nrows(), labels, k)?;
    let predicted = match rule {
        ClusterRule::Auto { seed, restarts } => {
            if x.ncols() == 1 {
                kmeans_1d(x.column(0).as_slice(), k)
            } else {
                kmeans(x, k, seed, restarts)
            }
        }
        ClusterRule::GapCut => {
            if x.ncols() != 1 {
                return Err(invalid("gap cut needs a one-dimensional embedding"));
            }
            gap_cut(x.column(0).as_slice(), k)
        }
        ClusterRule::NearestTrueMean => nearest_mean(x, &cluster_means(x, labels, k)?),
    };
    Ok(matched_fraction(&predicted, labels, k))
}

/// Maximum over permutations `σ` of `Σ_i conf[i][σ(i)] / n`.
pub fn matched_fraction(predicted: &[usize], labels: &[usize], k: usize) -> f64 {
    let mut conf = vec![vec![0usize; k]; k];
    for (&p, &l) in predicted.iter().zip(labels) {
        conf[p][l] += 1;
    }
    let best = (0..k)
        .permutations(k)
        .map(|perm| {
            perm.iter()
                .enumerate()
                .map(|(p, &l)| conf[p][l])
                .sum::<usize>()
        })
        .max()
        .unwrap_or(0);
    best as f64 / labels.len() as f64
}

/// Cut the sorted values at the `K-1` largest positive gaps. Ties go to the
/// leftmost gap; with fewer positive gaps, fewer groups are formed.
pub fn gap_cut(values: &[f64], k: usize) -> Vec<usize> {
    let order = sorted_order(values);
    let mut gaps: Vec<(f64, usize)> = order
        .windows(2)
        .enumerate()
        .map(|(pos, w)| (values[w[1]] - values[w[0]], pos))
        .filter(|(g, _)| *g > 0.0)
        .collect();
    gaps.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let mut cuts: Vec<usize> = gaps.iter().take(k - 1).map(|&(_, pos)| pos).collect();
    cuts.sort_unstable();
    let mut out = vec![0usize; values.len()];
    let mut group = 0;
    let mut next_cut = cuts.iter().peekable();
    for (pos, &i) in order.iter().enumerate() {
        out[i] = group;
        if next_cut.peek() == Some(&&pos) {
            next_cut.next();
            group += 1;
        }
    }
    out
}

fn sorted_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    order
}

/// Globally optimal 1-D k-means (least within-group squared deviation) by
/// dynamic programming over the sorted distinct values. Groups are
/// contiguous in sorted order and numbered left to right; when there are at
/// most `K` distinct values each forms its own group.
pub fn kmeans_1d(values: &[f64], k: usize) -> Vec<usize> {
    let order = sorted_order(values);
    // Distinct values with multiplicities.
    let mut distinct: Vec<(f64, f64)> = Vec::new();
    for &i in &order {
        match distinct.last_mut() {
            Some((v, c)) if *v == values[i] => *c += 1.0,
            _ => distinct.push((values[i], 1.0)),
        }
    }
    let m = distinct.len();
    let groups = k.min(m);
    // Segment [a, b) cost from prefix sums of weight, sum and sum of squares.
    let mut pw = vec![0.0; m + 1];
    let mut ps = vec![0.0; m + 1];
    let mut pq = vec![0.0; m + 1];
    for (i, &(v, c)) in distinct.iter().enumerate() {
        pw[i + 1] = pw[i] + c;
        ps[i + 1] = ps[i] + c * v;
        pq[i + 1] = pq[i] + c * v * v;
    }
    let cost = |a: usize, b: usize| {
        let w = pw[b] - pw[a];
        let s = ps[b] - ps[a];
        (pq[b] - pq[a] - s * s / w).max(0.0)
    };
    // best[g][b]: optimal cost of the first b values in g groups.
    let mut best = vec![vec![f64::INFINITY; m + 1]; groups + 1];
    let mut split = vec![vec![0usize; m + 1]; groups + 1];
    best[0][0] = 0.0;
    for g in 1..=groups {
        for b in g..=m {
            for a in (g - 1)..b {
                let c = best[g - 1][a] + cost(a, b);
                if c < best[g][b] {
                    best[g][b] = c;
                    split[g][b] = a;
                }
            }
        }
    }
    let mut group_of = vec![0usize; m];
    let mut b = m;
    for g in (1..=groups).rev() {
        let a = split[g][b];
        group_of[a..b].iter_mut().for_each(|x| *x = g - 1);
        b = a;
    }
    let mut out = vec![0usize; values.len()];
    let mut d = 0;
    for (pos, &i) in order.iter().enumerate() {
        if pos > 0 && values[i] != values[order[pos - 1]] {
            d += 1;
        }
        out[i] = group_of[d];
    }
    out
}

fn nearest_mean(x: &Matrix, means: &Matrix) -> Vec<usize> {
    x.row_iter()
        .map(|row| {
            (0..means.nrows())
                .map(|c| (c, (row - means.row(c)).norm_squared()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .map_or(0, |(c, _)| c)
        })
        .collect()
}

/// Lloyd's algorithm from k-means++ seeds, best of `restarts` runs by
/// inertia. Restart `r` uses `child_seed(seed, r)`.
pub fn kmeans(x: &Matrix, k: usize, seed: u64, restarts: usize) -> Vec<usize> {
    let mut best: Option<(f64, Vec<usize>)> = None;
    for r in 0..restarts.max(1) {
        let (inertia, assign) = lloyd(x, k, child_seed(seed, r as u64));
        if best.as_ref().is_none_or(|(b, _)| inertia < *b) {
            best = Some((inertia, assign));
        }
    }
    best.map(|(_, a)| a).unwrap_or_default()
}

const LLOYD_MAX_ITERS: usize = 300;

fn lloyd(x: &Matrix, k: usize, seed: u64) -> (f64, Vec<usize>) {
    let n = x.nrows();
    let mut rng = seeded(seed);
    let mut centers = Matrix::zeros(k, x.ncols());
    centers.set_row(0, &x.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = x
        .row_iter()
        .map(|r| (r - centers.row(0)).norm_squared())
        .collect();
    for c in 1..k {
        let pick = match WeightedIndex::new(&d2) {
            Ok(w) => w.sample(&mut rng),
            // All points coincide with chosen centres.
            Err(_) => rng.random_range(0..n),
        };
        centers.set_row(c, &x.row(pick));
        for (i, row) in x.row_iter().enumerate() {
            d2[i] = d2[i].min((row - centers.row(c)).norm_squared());
        }
    }
    let mut assign = nearest_mean(x, &centers);
    for _ in 0..LLOYD_MAX_ITERS {
        let mut sums = Matrix::zeros(k, x.ncols());
        let mut counts = vec![0usize; k];
        for (i, &a) in assign.iter().enumerate() {
            let mut row = sums.row_mut(a);
            row += x.row(i);
            counts[a] += 1;
        }
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                centers.set_row(c, &(sums.row(c) / count as f64));
            }
        }
        let next = nearest_mean(x, &centers);
        if next == assign {
            break;
        }
        assign = next;
    }
    let inertia = assign
        .iter()
        .enumerate()
        .map(|(i, &a)| (x.row(i) - centers.row(a)).norm_squared())
        .sum();
    (inertia, assign)
}

/// `‖x_a^(t) - x_b^(t)‖_F` for every recorded iterate of two runs.
pub fn trajectory_distance(a: &Trajectory, b: &Trajectory) -> Result<Vec<f64>> {
    if a.states.is_empty() || a.states.len() != b.states.len() {
        return Err(mismatch(
            format!("{} recorded states", a.states.len()),
            b.states.len(),
        ));
    }
    a.states
        .iter()
        .zip(&b.states)
        .map(|(sa, sb)| {
            if sa.x.shape() != sb.x.shape() {
                return Err(mismatch(
                    format!("{:?}", sa.x.shape()),
                    format!("{:?}", sb.x.shape()),
                ));
            }
            Ok((&sa.x - &sb.x).norm())
        })
        .collect()
}

pub const REPORT_HEADER: &str = "seed,n,K,p,q,d,spread,bound_spread,min_gap,bound_gap,recovery,t_f";

/// One run's summary line.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub seed: u64,
    pub params: SbmParams,
    pub d: usize,
    pub report: ClusterReport,
    pub t_f: usize,
}

impl ReportRow {
    pub fn csv_line(&self) -> String {
        let r = &self.report;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.seed,
            self.params.n,
            self.params.k,
            self.params.p,
            self.params.q,
            self.d,
            r.spread,
            r.bound_spread,
            r.min_gap,
            r.bound_gap,
            r.recovery,
            self.t_f
        )
    }
}

pub fn write_report_csv<W: Write>(rows: &[ReportRow], mut out: W) -> Result<()> {
    writeln!(out, "{REPORT_HEADER}")?;
    for row in rows {
        writeln!(out, "{}", row.csv_line())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::{EmbeddingState, Termination};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn col(v: &[f64]) -> Matrix {
        Matrix::from_column_slice(v.len(), 1, v)
    }

    #[test]
    fn two_clean_clusters() {
        let r = cluster_report(&col(&[1.0, 1.0, -1.0, -1.0]), &[0, 0, 1, 1], 2, 0.1, 2.0).unwrap();
        assert_eq!(r.means.as_slice(), &[1.0, -1.0]);
        assert_eq!(r.spread, 0.0);
        assert_eq!(r.min_gap, 2.0);
        assert_eq!(r.recovery, 1.0);
        assert_abs_diff_eq!(r.bound_spread, 5.0 * 2.0 / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r.bound_gap, 0.1 * 2.0 / (20.0 * 4.0 * 2.0), epsilon = 1e-15);
    }

    #[test]
    fn constant_embedding() {
        let x = col(&[0.3; 6]);
        let labels = [0, 0, 0, 1, 1, 1];
        let r = cluster_report(&x, &labels, 2, 0.1, 2.0).unwrap();
        assert_eq!(r.spread, 0.0);
        assert_eq!(r.min_gap, 0.0);
        assert_eq!(r.recovery, 0.5);
        assert_eq!(
            recovery_fraction_with(&x, &labels, 2, ClusterRule::GapCut).unwrap(),
            0.5
        );
        let x3 = col(&[0.3; 9]);
        assert_abs_diff_eq!(
            recovery_fraction(&x3, &[0, 0, 0, 1, 1, 1, 2, 2, 2], 3).unwrap(),
            1.0 / 3.0
        );
    }

    #[test]
    fn errors() {
        let x = col(&[1.0, 2.0, 3.0]);
        assert!(matches!(
            cluster_report(&x, &[0, 0, 0], 2, 0.1, 1.0),
            Err(Error::EmptyCluster(1))
        ));
        let labels: Vec<usize> = (0..9).collect();
        let x9 = col(&[0.0; 9]);
        assert!(matches!(
            recovery_fraction(&x9, &labels, 9),
            Err(Error::TooManyClusters(9))
        ));
        assert!(recovery_fraction(&x, &[0, 1], 2).is_err());
    }

    #[test]
    fn separated_multidimensional_clusters() {
        let x = Matrix::from_fn(30, 3, |i, j| {
            (i / 10) as f64 * if j == i / 10 { 5.0 } else { 0.0 } + 0.01 * ((i * 7 + j) % 5) as f64
        });
        let labels: Vec<usize> = (0..30).map(|i| i / 10).collect();
        assert_eq!(recovery_fraction(&x, &labels, 3).unwrap(), 1.0);
    }

    #[test]
    fn one_dimensional_kmeans_ignores_tail_outliers() {
        // Gap cut isolates the far outlier; least squares does not.
        let mut v: Vec<f64> = (0..10).map(|i| i as f64 * 0.01).collect();
        v.extend((0..10).map(|i| 1.0 + i as f64 * 0.01));
        v.extend((0..9).map(|i| 2.0 + i as f64 * 0.01));
        v.push(3.5);
        let labels: Vec<usize> = (0..30).map(|i| i / 10).collect();
        let x = col(&v);
        assert_eq!(recovery_fraction(&x, &labels, 3).unwrap(), 1.0);
        assert!(recovery_fraction_with(&x, &labels, 3, ClusterRule::GapCut).unwrap() < 1.0);
        assert_eq!(
            recovery_fraction_with(&x, &labels, 3, ClusterRule::NearestTrueMean).unwrap(),
            1.0
        );
    }

    #[test]
    fn kmeans_1d_matches_brute_force() {
        let v = [0.1, 0.5, 0.45, 2.0, 2.2, 0.0, 1.1, 3.0];
        let k = 3;
        let sse = |assign: &[usize]| -> f64 {
            (0..k)
                .map(|g| {
                    let vals: Vec<f64> = v
                        .iter()
                        .zip(assign)
                        .filter(|(_, &a)| a == g)
                        .map(|(x, _)| *x)
                        .collect();
                    if vals.is_empty() {
                        return 0.0;
                    }
                    let m = vals.iter().sum::<f64>() / vals.len() as f64;
                    vals.iter().map(|x| (x - m).powi(2)).sum::<f64>()
                })
                .sum()
        };
        let mut best = f64::INFINITY;
        for code in 0..k.pow(v.len() as u32) {
            let assign: Vec<usize> = (0..v.len()).map(|i| code / k.pow(i as u32) % k).collect();
            best = best.min(sse(&assign));
        }
        assert_abs_diff_eq!(sse(&kmeans_1d(&v, k)), best, epsilon = 1e-12);
    }

    #[test]
    fn trajectory_distance_basics() {
        let s = |v: f64| EmbeddingState {
            x: col(&[v, -v]),
            y: col(&[0.0, 0.0]),
            iter: 0,
        };
        let traj = |states: Vec<EmbeddingState>| Trajectory {
            records: Vec::new(),
            t_f: states.len() - 1,
            termination: Termination::Fixed,
            states,
            threshold: 1.0,
        };
        let a = traj(vec![s(1.0), s(2.0)]);
        let b = traj(vec![s(1.0), s(3.0)]);
        assert_eq!(trajectory_distance(&a, &a).unwrap(), vec![0.0, 0.0]);
        let d = trajectory_distance(&a, &b).unwrap();
        assert_eq!(d[0], 0.0);
        assert_abs_diff_eq!(d[1], 2f64.sqrt(), epsilon = 1e-15);
        assert!(trajectory_distance(&a, &traj(vec![s(1.0)])).is_err());
    }

    #[test]
    fn report_row_format() {
        let params = SbmParams::new(4, 2, 0.5, 0.1).unwrap();
        let report =
            cluster_report(&col(&[1.0, 1.0, -1.0, -1.0]), &[0, 0, 1, 1], 2, 0.5, 2.0).unwrap();
        let row = ReportRow {
            seed: 3,
            params,
            d: 1,
            report,
            t_f: 12,
        };
        let mut buf = Vec::new();
        write_report_csv(&[row], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some(REPORT_HEADER));
        assert!(lines.next().unwrap().starts_with("3,4,2,0.5,0.1,1,0,5,2,"));
    }

    fn blocky(k: usize, m: usize) -> impl Strategy<Value = (Vec<f64>, Vec<usize>)> {
        proptest::collection::vec(-1.0f64..1.0, k * m)
            .prop_map(move |v| (v, (0..k * m).map(|i| i / m).collect()))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn recovery_ignores_predicted_labelling(
            pred in proptest::collection::vec(0usize..3, 12),
            perm in Just(vec![0usize, 1, 2]).prop_shuffle(),
        ) {
            let labels: Vec<usize> = (0..12).map(|i| i / 4).collect();
            let renamed: Vec<usize> = pred.iter().map(|&p| perm[p]).collect();
            prop_assert_eq!(matched_fraction(&pred, &labels, 3), matched_fraction(&renamed, &labels, 3));
            let f = matched_fraction(&pred, &labels, 3);
            prop_assert!((1.0 / 3.0 - 1e-12..=1.0).contains(&f));
        }

        #[test]
        fn recovery_ignores_affine_rescaling(
            (v, labels) in blocky(3, 6),
            scale in 0.01f64..100.0,
            shift in -10.0f64..10.0,
            flip in any::<bool>(),
        ) {
            let s = if flip { -scale } else { scale };
            let x = col(&v);
            let y = col(&v.iter().map(|t| s * t + shift).collect::<Vec<_>>());
            for rule in [ClusterRule::default(), ClusterRule::GapCut] {
                let a = recovery_fraction_with(&x, &labels, 3, rule).unwrap();
                let b = recovery_fraction_with(&y, &labels, 3, rule).unwrap();
                prop_assert!((a - b).abs() < 1e-12, "{:?}: {} vs {}", rule, a, b);
            }
        }

        #[test]
        fn means_minimise_within_cluster_deviation(
            (v, labels) in blocky(3, 5),
            competitors in proptest::collection::vec(proptest::collection::vec(-2.0f64..2.0, 3), 100),
        ) {
            let x = col(&v);
            let mu = mean_field(&cluster_means(&x, &labels, 3).unwrap(), &labels);
            let spread = (&x - &mu).norm();
            for c in competitors {
                let m = col(&labels.iter().map(|&l| c[l]).collect::<Vec<_>>());
                prop_assert!(spread <= (&x - m).norm() + 1e-12);
            }
            prop_assert!((x.norm_squared() - spread * spread - mu.norm_squared()).abs() < 1e-10);
        }
    }
}
