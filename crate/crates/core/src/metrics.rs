//! Clustering error and neighborhood preserving error.

use std::collections::BTreeMap;

use itertools::Itertools;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{BmcError, Result};

pub const DEFAULT_RESTARTS: usize = 10;
/// Largest class count accepted by [`clustering_error`] (8! matchings).
pub const MAX_MATCHED_CLASSES: usize = 8;
const MAX_LLOYD_ITERS: usize = 300;

#[derive(Debug, Clone, PartialEq)]
pub struct ClusteringResult {
    pub assignments: Vec<usize>,
    /// `k × p`, one centroid per row.
    pub centroids: DMatrix<f64>,
    pub inertia: f64,
}

fn sq_dist(points: &DMatrix<f64>, i: usize, centroids: &DMatrix<f64>, c: usize) -> f64 {
    (0..points.ncols())
        .map(|d| (points[(i, d)] - centroids[(c, d)]).powi(2))
        .sum()
}

fn nearest(points: &DMatrix<f64>, i: usize, centroids: &DMatrix<f64>) -> (usize, f64) {
    (0..centroids.nrows()).fold((0, f64::INFINITY), |(best, bd), c| {
        let d = sq_dist(points, i, centroids, c);
        if d < bd { (c, d) } else { (best, bd) }
    })
}

fn plus_plus_seeds(points: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = points.nrows();
    let mut centroids = DMatrix::zeros(k, points.ncols());
    centroids.set_row(0, &points.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points, i, &centroids, 0)).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            d2.iter()
                .position(|&w| {
                    target -= w;
                    target < 0.0
                })
                .unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap_or(n - 1))
        } else {
            rng.random_range(0..n)
        };
        centroids.set_row(c, &points.row(pick));
        for (i, slot) in d2.iter_mut().enumerate() {
            *slot = slot.min(sq_dist(points, i, &centroids, c));
        }
    }
    centroids
}

fn lloyd(points: &DMatrix<f64>, mut centroids: DMatrix<f64>) -> ClusteringResult {
    let (n, p) = points.shape();
    let k = centroids.nrows();
    let mut assignments = vec![usize::MAX; n];
    let mut prev_inertia = f64::INFINITY;
    for _ in 0..MAX_LLOYD_ITERS {
        let mut changed = false;
        let mut inertia = 0.0;
        for (i, slot) in assignments.iter_mut().enumerate() {
            let (c, d) = nearest(points, i, &centroids);
            inertia += d;
            if *slot != c {
                *slot = c;
                changed = true;
            }
        }
        debug_assert!(inertia <= prev_inertia * (1.0 + 1e-12) + 1e-12, "inertia increased");
        prev_inertia = inertia;
        if !changed {
            break;
        }

        let mut sums = DMatrix::zeros(k, p);
        let mut counts = vec![0usize; k];
        for (i, &c) in assignments.iter().enumerate() {
            counts[c] += 1;
            for d in 0..p {
                sums[(c, d)] += points[(i, d)];
            }
        }
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                centroids.set_row(c, &(sums.row(c) / count as f64));
            } else {
                // Re-seed an empty cluster at the point worst served.
                let far = (0..n)
                    .max_by(|&a, &b| {
                        let da = sq_dist(points, a, &centroids, assignments[a]);
                        let db = sq_dist(points, b, &centroids, assignments[b]);
                        da.total_cmp(&db).then(b.cmp(&a))
                    })
                    .expect("n > 0");
                centroids.set_row(c, &points.row(far));
                assignments[far] = c;
            }
        }
    }
    let inertia = (0..n).map(|i| sq_dist(points, i, &centroids, assignments[i])).sum();
    ClusteringResult {
        assignments,
        centroids,
        inertia,
    }
}

/// Lloyd's algorithm with k-means++ seeding; the best of `restarts` runs by
/// inertia. Restart `s` draws from stream `s` of a ChaCha8 generator keyed by
/// `seed`, so results depend only on `(points, k, restarts, seed)`.
pub fn kmeans(points: &DMatrix<f64>, k: usize, restarts: usize, seed: u64) -> Result<ClusteringResult> {
    let n = points.nrows();
    if k == 0 || k > n {
        return Err(BmcError::Parameter(format!("k = {k} must lie in 1..={n}")));
    }
    if restarts == 0 {
        return Err(BmcError::Parameter("restarts must be positive".into()));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(BmcError::NonFinite("k-means input".into()));
    }
    let mut best: Option<ClusteringResult> = None;
    for s in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(s as u64);
        let run = lloyd(points, plus_plus_seeds(points, k, &mut rng));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// Percentage of points misassigned under the best bijection between
/// cluster ids and label ids. When the two id sets differ in size the
/// surplus ids on either side match nothing.
pub fn clustering_error(assignments: &[usize], labels: &[i64]) -> Result<f64> {
    if assignments.len() != labels.len() {
        return Err(BmcError::Dimension(format!(
            "{} assignments vs {} labels",
            assignments.len(),
            labels.len()
        )));
    }
    let n = assignments.len();
    if n == 0 {
        return Ok(0.0);
    }
    let index = |ids: Vec<i128>| -> BTreeMap<i128, usize> {
        ids.into_iter().sorted().dedup().enumerate().map(|(i, v)| (v, i)).collect()
    };
    let cl = index(assignments.iter().map(|&a| a as i128).collect());
    let lb = index(labels.iter().map(|&l| l as i128).collect());
    let m = cl.len().max(lb.len());
    if m > MAX_MATCHED_CLASSES {
        return Err(BmcError::Unsupported(format!(
            "{m} classes; matching is brute force and limited to {MAX_MATCHED_CLASSES}"
        )));
    }
    let mut table = vec![vec![0usize; m]; m];
    for (&a, &l) in assignments.iter().zip(labels) {
        table[cl[&(a as i128)]][lb[&(l as i128)]] += 1;
    }
    let matched = (0..m)
        .permutations(m)
        .map(|perm| perm.iter().enumerate().map(|(c, &l)| table[c][l]).sum::<usize>())
        .max()
        .unwrap_or(0);
    Ok(100.0 * (n - matched) as f64 / n as f64)
}

/// Directed kNN graph: row `i` lists its `k` nearest other points by
/// Euclidean distance, ties going to the lower index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdjacencyMatrix {
    n: usize,
    k: usize,
    neighbors: Vec<Vec<usize>>,
}

impl AdjacencyMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Neighbors of `i`, nearest first.
    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].contains(&j)
    }

    /// Dense 0/1 form.
    pub fn to_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (i, row) in self.neighbors.iter().enumerate() {
            for &j in row {
                m[(i, j)] = 1.0;
            }
        }
        m
    }
}

pub fn knn_adjacency(points: &DMatrix<f64>, k: usize) -> Result<AdjacencyMatrix> {
    let n = points.nrows();
    if k == 0 || k >= n {
        return Err(BmcError::Parameter(format!("k = {k} must lie in 1..{n}")));
    }
    if points.iter().any(|v| !v.is_finite()) {
        return Err(BmcError::NonFinite("kNN input".into()));
    }
    let neighbors = (0..n)
        .map(|i| {
            let dist = |j: usize| -> f64 {
                (0..points.ncols()).map(|d| (points[(i, d)] - points[(j, d)]).powi(2)).sum()
            };
            (0..n)
                .filter(|&j| j != i)
                .map(|j| (dist(j), j))
                .sorted_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
                .take(k)
                .map(|(_, j)| j)
                .collect()
        })
        .collect();
    Ok(AdjacencyMatrix { n, k, neighbors })
}

/// `100/(k(n-1)) · Σ_ij |A_ij - B_ij|`.
pub fn neighborhood_error(a: &AdjacencyMatrix, b: &AdjacencyMatrix) -> Result<f64> {
    if a.n != b.n || a.k != b.k {
        return Err(BmcError::Dimension(format!(
            "adjacency shapes differ: n {} vs {}, k {} vs {}",
            a.n, b.n, a.k, b.k
        )));
    }
    let mismatches: usize = a
        .neighbors
        .iter()
        .zip(&b.neighbors)
        .map(|(ra, rb)| 2 * ra.iter().filter(|j| !rb.contains(j)).count())
        .sum();
    Ok(100.0 * mismatches as f64 / (a.k * (a.n - 1)) as f64)
}
