//! Reproducible data sources.
//!
//! All samplers draw from `ChaCha8Rng` seeded with a caller-supplied `u64`,
//! so outputs are bitwise identical across runs and platforms.

mod csv;
mod idx;

pub use self::csv::{format_csv_matrix, load_csv_matrix, load_labels, parse_csv_matrix, save_csv_matrix, save_labels};
pub use self::idx::{load_idx, parse_idx_images, parse_idx_labels, subsample_by_digit, IdxImageSet};

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::bounds::PointCloud;
use crate::error::{BmcError, Result};

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Parameters of the hollowed semi-cylinder
/// `(radius cos θ, radius sin θ, z)` with `θ` and `z` drawn uniformly over
/// unions of intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiCylinderSpec {
    pub n: usize,
    pub radius: f64,
    pub theta_ranges: Vec<(f64, f64)>,
    pub z_ranges: Vec<(f64, f64)>,
    pub seed: u64,
}

impl SemiCylinderSpec {
    /// Radius 4, `θ ∈ [0, π/3] ∪ [2π/3, π]`, `z ∈ [0, 3] ∪ [7, 10]`.
    pub fn hollowed(n: usize, seed: u64) -> Self {
        SemiCylinderSpec {
            n,
            radius: 4.0,
            theta_ranges: vec![(0.0, PI / 3.0), (2.0 * PI / 3.0, PI)],
            z_ranges: vec![(0.0, 3.0), (7.0, 10.0)],
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(BmcError::Parameter("need at least one point".into()));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(BmcError::Parameter(format!("radius must be positive, got {}", self.radius)));
        }
        for (name, ranges) in [("theta", &self.theta_ranges), ("z", &self.z_ranges)] {
            if ranges.is_empty() {
                return Err(BmcError::Parameter(format!("{name} ranges are empty")));
            }
            if let Some((lo, hi)) = ranges.iter().find(|(lo, hi)| !lo.is_finite() || !hi.is_finite() || lo > hi) {
                return Err(BmcError::Parameter(format!("{name} range [{lo}, {hi}] is invalid")));
            }
        }
        Ok(())
    }
}

/// Uniform draw over a union of closed intervals, each interval weighted by
/// its length. A union of zero total length picks an interval uniformly.
fn sample_union<R: Rng>(rng: &mut R, ranges: &[(f64, f64)]) -> f64 {
    let total: f64 = ranges.iter().map(|(lo, hi)| hi - lo).sum();
    if total <= 0.0 {
        let k = rng.random_range(0..ranges.len());
        return ranges[k].0;
    }
    let mut u = rng.random::<f64>() * total;
    for &(lo, hi) in ranges {
        let len = hi - lo;
        if u < len {
            return lo + u;
        }
        u -= len;
    }
    let (lo, hi) = ranges[ranges.len() - 1];
    lo.max(hi)
}

pub fn sample_semi_cylinder(spec: &SemiCylinderSpec) -> Result<PointCloud> {
    spec.validate()?;
    let mut rng = rng(spec.seed);
    let mut coords = DMatrix::zeros(spec.n, 3);
    for i in 0..spec.n {
        let theta = sample_union(&mut rng, &spec.theta_ranges);
        let z = sample_union(&mut rng, &spec.z_ranges);
        coords[(i, 0)] = spec.radius * theta.cos();
        coords[(i, 1)] = spec.radius * theta.sin();
        coords[(i, 2)] = z;
    }
    PointCloud::new(coords, None)
}

const MAX_PLACEMENT_TRIES: usize = 10_000;

fn place_centers<R: Rng>(rng: &mut R, k: usize, dim: usize, sep: f64) -> Result<DMatrix<f64>> {
    if k <= dim {
        // Orthonormal directions scaled by sep/√2 are pairwise sep apart.
        let gauss = DMatrix::from_fn(dim, k, |_, _| StandardNormal.sample(rng));
        let q = gauss.qr().q();
        let scale = sep / 2f64.sqrt() * (1.0 + 1e-12);
        return Ok(q.transpose() * scale);
    }
    let radius = sep * k as f64;
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    for _ in 0..k {
        let mut placed = false;
        for _ in 0..MAX_PLACEMENT_TRIES {
            let c: Vec<f64> = (0..dim).map(|_| rng.random_range(-radius..=radius)).collect();
            let far = centers.iter().all(|o| {
                o.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= sep
            });
            if far {
                centers.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(BmcError::Parameter(format!(
                "could not place {k} centers {sep} apart in {dim} dimensions"
            )));
        }
    }
    Ok(DMatrix::from_fn(k, dim, |i, j| centers[i][j]))
}

/// `k` isotropic Gaussian blobs of `n_per` points each, with centers at
/// least `center_sep` apart. Labels are blob indices.
pub fn sample_gaussian_clusters(
    k: usize,
    n_per: usize,
    dim: usize,
    center_sep: f64,
    sigma: f64,
    seed: u64,
) -> Result<PointCloud> {
    if k == 0 || n_per == 0 || dim == 0 {
        return Err(BmcError::Parameter("need k, n_per and dim all >= 1".into()));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) || !(center_sep >= 0.0 && center_sep.is_finite()) {
        return Err(BmcError::Parameter(format!(
            "sigma ({sigma}) and center_sep ({center_sep}) must be finite and non-negative"
        )));
    }
    let mut rng = rng(seed);
    let centers = place_centers(&mut rng, k, dim, center_sep)?;
    let noise = Normal::new(0.0, sigma).expect("sigma validated");
    let n = k * n_per;
    let mut coords = DMatrix::zeros(n, dim);
    let mut labels = Vec::with_capacity(n);
    for c in 0..k {
        for p in 0..n_per {
            let row = c * n_per + p;
            for j in 0..dim {
                coords[(row, j)] = centers[(c, j)] + noise.sample(&mut rng);
            }
            labels.push(c as i64);
        }
    }
    PointCloud::new(coords, Some(labels))
}

/// Adds i.i.d. Gaussian noise of the given variance to every entry.
pub fn add_gaussian_noise(m: &DMatrix<f64>, variance: f64, seed: u64) -> Result<DMatrix<f64>> {
    if !(variance >= 0.0 && variance.is_finite()) {
        return Err(BmcError::Parameter(format!("variance must be >= 0, got {variance}")));
    }
    let noise = Normal::new(0.0, variance.sqrt()).expect("variance validated");
    let mut rng = rng(seed);
    Ok(m.map(|v| v + noise.sample(&mut rng)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn semi_cylinder_lies_on_surface_outside_hollow() {
        let cloud = sample_semi_cylinder(&SemiCylinderSpec::hollowed(500, 7)).unwrap();
        assert_eq!(cloud.coords().shape(), (500, 3));
        for row in cloud.coords().row_iter() {
            let r2 = row[0] * row[0] + row[1] * row[1];
            assert!((r2 - 16.0).abs() <= 1e-12);
            assert!(!(row[2] > 3.0 && row[2] < 7.0), "z = {} in hollow", row[2]);
            assert!(row[1] >= 0.0);
            // θ ∉ (π/3, 2π/3)  ⇔  |cos θ| >= 1/2
            assert!(row[0].abs() >= 2.0 - 1e-12);
        }
    }

    #[test]
    fn semi_cylinder_degenerate_ranges() {
        let spec = SemiCylinderSpec {
            n: 5,
            radius: 2.0,
            theta_ranges: vec![(0.5, 0.5)],
            z_ranges: vec![(1.0, 1.0)],
            seed: 3,
        };
        let cloud = sample_semi_cylinder(&spec).unwrap();
        let first = cloud.coords().row(0).clone_owned();
        for row in cloud.coords().row_iter() {
            assert_eq!(row, first);
        }
    }

    #[test]
    fn semi_cylinder_is_deterministic() {
        let a = sample_semi_cylinder(&SemiCylinderSpec::hollowed(50, 11)).unwrap();
        let b = sample_semi_cylinder(&SemiCylinderSpec::hollowed(50, 11)).unwrap();
        let c = sample_semi_cylinder(&SemiCylinderSpec::hollowed(50, 12)).unwrap();
        assert!(a.coords().iter().zip(b.coords().iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert_ne!(a, c);
    }

    #[test]
    fn semi_cylinder_rejects_empty_union() {
        let mut spec = SemiCylinderSpec::hollowed(5, 0);
        spec.z_ranges.clear();
        assert!(sample_semi_cylinder(&spec).is_err());
        let mut spec = SemiCylinderSpec::hollowed(5, 0);
        spec.theta_ranges = vec![(2.0, 1.0)];
        assert!(sample_semi_cylinder(&spec).is_err());
    }

    #[test]
    fn union_sampling_hits_both_intervals_by_length() {
        let mut r = rng(5);
        let ranges = [(0.0, 1.0), (10.0, 13.0)];
        let draws: Vec<f64> = (0..4000).map(|_| sample_union(&mut r, &ranges)).collect();
        let high = draws.iter().filter(|&&v| v >= 10.0).count() as f64 / 4000.0;
        assert!((high - 0.75).abs() < 0.03, "fraction in longer interval {high}");
        assert!(draws.iter().all(|&v| (0.0..=1.0).contains(&v) || (10.0..=13.0).contains(&v)));
    }

    #[test]
    fn clusters_without_noise_sit_on_centers() {
        let cloud = sample_gaussian_clusters(3, 4, 5, 2.0, 0.0, 9).unwrap();
        let c = cloud.coords();
        for blob in 0..3 {
            for p in 1..4 {
                assert_eq!(c.row(blob * 4 + p), c.row(blob * 4));
            }
        }
        for a in 0..3 {
            for b in (a + 1)..3 {
                assert!((c.row(a * 4) - c.row(b * 4)).norm() >= 2.0);
            }
        }
    }

    #[test]
    fn clusters_are_separable_by_nearest_center() {
        let cloud = sample_gaussian_clusters(4, 30, 20, 10.0, 0.5, 1).unwrap();
        let labels = cloud.labels().unwrap();
        assert_eq!(labels.len(), 120);
        let centers = sample_gaussian_clusters(4, 1, 20, 10.0, 0.0, 1).unwrap();
        // Same seed: center placement draws come first, so the noiseless run
        // reproduces the centers.
        for (i, row) in cloud.coords().row_iter().enumerate() {
            let nearest = (0..4)
                .min_by(|&a, &b| {
                    let da = (row - centers.coords().row(a)).norm();
                    let db = (row - centers.coords().row(b)).norm();
                    da.total_cmp(&db)
                })
                .unwrap();
            assert_eq!(nearest as i64, labels[i]);
        }
    }

    #[test]
    fn clusters_more_than_dim() {
        let cloud = sample_gaussian_clusters(5, 2, 2, 1.0, 0.0, 4).unwrap();
        let c = cloud.coords();
        for a in 0..5 {
            for b in (a + 1)..5 {
                assert!((c.row(a * 2) - c.row(b * 2)).norm() >= 1.0);
            }
        }
        assert!(sample_gaussian_clusters(0, 2, 2, 1.0, 0.0, 4).is_err());
        assert!(sample_gaussian_clusters(2, 2, 2, 1.0, -1.0, 4).is_err());
    }

    #[test]
    fn noise_is_seeded() {
        let m = DMatrix::zeros(3, 4);
        let a = add_gaussian_noise(&m, 1.0, 2).unwrap();
        let b = add_gaussian_noise(&m, 1.0, 2).unwrap();
        assert_eq!(a, b);
        assert!(a.amax() > 0.0);
        assert_eq!(add_gaussian_noise(&m, 0.0, 2).unwrap(), m);
    }
}
