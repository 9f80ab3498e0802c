//! Acceptance gate. Runs without the libtest harness so every criterion
//! prints exactly one PASS/FAIL line, then exits non-zero if any failed.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use bmc::bounds::{build_bounds, BoundedDistanceProblem, ObservedDistances};
use bmc::datasets::{
    format_csv_matrix, load_csv_matrix, load_idx, parse_csv_matrix, parse_idx_images, parse_idx_labels,
    sample_gaussian_clusters, subsample_by_digit,
};
use bmc::embedding::embed;
use bmc::linalg;
use bmc::metrics::{clustering_error, kmeans, knn_adjacency, neighborhood_error, DEFAULT_RESTARTS};
use bmc::shrinkage::{psd_distance_step, sv_shrink, truncated_nuclear_norm};
use bmc::solver::{solve, SolverConfig};
use bmc::BmcError;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn within(elapsed: Duration, limit_secs: f64) -> bool {
    elapsed.as_secs_f64() <= limit_secs
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Squared distances by explicit loops, independent of the library.
fn brute_edm(points: &[Vec<f64>]) -> DMatrix<f64> {
    let n = points.len();
    DMatrix::from_fn(n, n, |i, j| {
        points[i].iter().zip(&points[j]).map(|(a, b)| (a - b) * (a - b)).sum()
    })
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn rel_fro(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn bmc_bin() -> &'static str {
    env!("CARGO_BIN_EXE_bmc")
}

fn run_bmc(args: &[&str]) -> std::process::Output {
    let out = Command::new(bmc_bin()).args(args).output().expect("spawn bmc");
    assert!(
        out.status.success(),
        "bmc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn read_column(path: &Path) -> Vec<f64> {
    load_csv_matrix(path).expect("csv").iter().copied().collect()
}

/// Workspace for the semi-cylinder runs shared by criteria 1 and 9.
struct CylinderRuns {
    dir: tempfile::TempDir,
    secs: [f64; 2],
}

impl CylinderRuns {
    fn prefix(&self, run: usize) -> PathBuf {
        self.dir.path().join(format!("run{run}"))
    }

    fn run() -> Self {
        let dir = tempfile::tempdir().expect("tempdir");
        let points = dir.path().join("cyl.csv");
        run_bmc(&["generate", "semi-cylinder", "--n", "200", "--seed", "0", "--out", points.to_str().unwrap()]);
        let mut runs = CylinderRuns { dir, secs: [0.0; 2] };
        // Sequential on purpose: the first run is also the timing sample.
        for run in 0..2 {
            let prefix = runs.prefix(run);
            let t = Instant::now();
            run_bmc(&[
                "solve",
                "--points",
                points.to_str().unwrap(),
                "--r",
                "4",
                "--alpha-l",
                "0.1",
                "--alpha-u",
                "10",
                "--rho-init",
                "0.05",
                "--rho",
                "1.01",
                "--iters",
                "500",
                "--out-prefix",
                prefix.to_str().unwrap(),
            ]);
            runs.secs[run] = t.elapsed().as_secs_f64();
        }
        runs
    }
}

fn spectrum_gap(runs: &CylinderRuns) -> Outcome {
    let prefix = runs.prefix(0);
    let sv = read_column(&PathBuf::from(format!("{}-sv.csv", prefix.display())));
    let gram = read_column(&PathBuf::from(format!("{}-spectrum.csv", prefix.display())));
    let ratio = sv[4] / sv[3];
    let head_positive = sv[..4].iter().all(|&s| s > 0.0);
    let gram_ratio = gram[4].abs() / gram[3].abs();
    let pass = ratio <= 1e-6 && head_positive && runs.secs[0] <= 120.0;
    outcome(
        pass,
        format!(
            "sigma5/sigma4 of L = {ratio:.3e}, sigma1..4 = {:.3e} {:.3e} {:.3e} {:.3e}, {:.1}s \
             (Gram eigen ratio |l5|/|l4| = {gram_ratio:.3e}, informational)",
            sv[0], sv[1], sv[2], sv[3], runs.secs[0]
        ),
    )
}

fn determinism(runs: &CylinderRuns) -> Outcome {
    let read = |run| fs::read(format!("{}-residuals.csv", runs.prefix(run).display())).expect("residuals");
    let (a, b) = (read(0), read(1));
    let lines = a.iter().filter(|&&c| c == b'\n').count();
    outcome(a == b && lines > 1, format!("residual CSVs identical: {}, {lines} lines", a == b))
}

fn exact_recovery() -> Outcome {
    let t = Instant::now();
    let mut r = rng(20);
    let pts: Vec<Vec<f64>> = (0..20).map(|_| vec![r.random_range(-3.0..3.0), r.random_range(-3.0..3.0)]).collect();
    let d = brute_edm(&pts);
    let problem = BoundedDistanceProblem::new(d.clone(), d.clone(), 4).expect("problem");
    let config = SolverConfig { max_iters: 500, ..SolverConfig::default() };
    let rec = solve(&problem, &config).expect("solve");
    let err = rel_fro(rec.l.as_matrix(), &d);
    let emb = embed(&rec.l, 2).expect("embed");
    let emb_d = brute_edm(&rows(&emb.coords));
    let emb_err = rel_fro(&emb_d, &d);
    let secs = t.elapsed();
    outcome(
        err <= 1e-4 && emb_err <= 1e-3 && within(secs, 10.0),
        format!("rel err L = {err:.3e}, embedding rel err = {emb_err:.3e}, {:.2}s", secs.as_secs_f64()),
    )
}

fn gower_rank() -> Outcome {
    let t = Instant::now();
    let mut r = rng(3);
    let collinear: Vec<Vec<f64>> = (0..12)
        .map(|_| {
            let s: f64 = r.random_range(-5.0..5.0);
            vec![1.0 + 2.0 * s, -0.5 + 0.7 * s, 3.0 - s]
        })
        .collect();
    let circle: Vec<Vec<f64>> = (0..12)
        .map(|_| {
            let th: f64 = r.random_range(0.0..std::f64::consts::TAU);
            vec![2.0 * th.cos(), 2.0 * th.sin()]
        })
        .collect();
    let planar: Vec<Vec<f64>> = (0..12).map(|_| (0..2).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let spatial: Vec<Vec<f64>> = (0..12).map(|_| (0..3).map(|_| r.random_range(-1.0..1.0)).collect()).collect();
    let rank = |pts: &[Vec<f64>]| {
        let sv = linalg::svd(&brute_edm(pts)).expect("svd");
        linalg::numerical_rank(sv.values.as_slice(), 1e-9)
    };
    let got = [rank(&collinear), rank(&circle), rank(&planar), rank(&spatial)];
    let secs = t.elapsed();
    outcome(
        got == [3, 3, 4, 5] && within(secs, 1.0),
        format!("ranks collinear/circle/planar/3-D = {got:?}, expected [3, 3, 4, 5], {:.3}s", secs.as_secs_f64()),
    )
}

fn truncated_norm_identity() -> Outcome {
    let t = Instant::now();
    let mut r = rng(4);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let g = DMatrix::from_fn(10, 10, |_, _| r.random_range(-1.0..1.0));
        let dec = linalg::svd(&g).expect("svd");
        let nuclear: f64 = dec.values.iter().sum();
        for k in 0..=5 {
            let ur = dec.u.columns(0, k).into_owned();
            let vr = dec.v.columns(0, k).into_owned();
            let tr = (ur.transpose() * &g * vr).trace();
            let lhs = truncated_nuclear_norm(dec.values.as_slice(), k);
            worst = worst.max((lhs - (nuclear - tr)).abs() / nuclear);
        }
    }
    let secs = t.elapsed();
    outcome(
        worst <= 1e-8 && within(secs, 1.0),
        format!("worst relative gap = {worst:.3e} over 50 matrices x r = 0..5, {:.3}s", secs.as_secs_f64()),
    )
}

fn proximal_optimality() -> Outcome {
    let t = Instant::now();
    let mut r = rng(5);
    let objective = |l: &DMatrix<f64>, g: &DMatrix<f64>, nu: f64| {
        let nuclear: f64 = linalg::svd(l).expect("svd").values.iter().sum();
        nu * nuclear + 0.5 * (l - g).norm_squared()
    };
    let mut beaten = 0usize;
    let mut checks = 0usize;
    for _ in 0..20 {
        let g = DMatrix::from_fn(6, 6, |_, _| r.random_range(-2.0..2.0));
        for nu in [0.1, 0.5, 2.0] {
            let star = sv_shrink(&g, nu).expect("shrink").matrix;
            let base = objective(&star, &g, nu);
            for _ in 0..100 {
                let dir = DMatrix::from_fn(6, 6, |_, _| r.random_range(-1.0..1.0));
                let probe = &star + dir.scale(1e-3 / dir.norm());
                checks += 1;
                if objective(&probe, &g, nu) < base {
                    beaten += 1;
                }
            }
        }
    }
    let secs = t.elapsed();
    outcome(
        beaten == 0 && within(secs, 1.0),
        format!("{beaten} of {checks} perturbations improved the objective, {:.3}s", secs.as_secs_f64()),
    )
}

fn psd_step_invariants() -> Outcome {
    let t = Instant::now();
    let mut r = rng(6);
    let (mut min_eig, mut min_entry, mut max_diag) = (f64::INFINITY, f64::INFINITY, 0.0f64);
    for _ in 0..100 {
        let a = DMatrix::from_fn(15, 15, |_, _| r.random_range(-5.0..5.0));
        let g = (&a + a.transpose()).scale(0.5);
        let rho = r.random_range(0.01..10.0);
        let out = psd_distance_step(&g, rho).expect("psd step");
        let m = out.as_matrix();
        let gram = linalg::gramian(m).expect("gram");
        let eig = linalg::symmetric_eig(gram.as_matrix()).expect("eig");
        min_eig = min_eig.min(eig.values.min());
        min_entry = min_entry.min(m.min());
        max_diag = max_diag.max(m.diagonal().amax());
    }
    let secs = t.elapsed();
    outcome(
        min_eig >= -1e-10 && min_entry >= -1e-10 && max_diag == 0.0 && within(secs, 5.0),
        format!(
            "min Gram eigenvalue {min_eig:.3e}, min entry {min_entry:.3e}, max |diag| {max_diag:.1e}, {:.3}s",
            secs.as_secs_f64()
        ),
    )
}

fn blob_pipeline(seed: u64) -> f64 {
    let cloud = sample_gaussian_clusters(4, 30, 20, 10.0, 0.5, seed).expect("blobs");
    let problem = build_bounds(&cloud, &0.1.into(), &10.0.into(), &ObservedDistances::none(), 4).expect("bounds");
    let config = SolverConfig {
        rho_zeta_init: 0.1,
        rho_eta_init: 0.1,
        rho_growth: 1.02,
        max_iters: 800,
        ..SolverConfig::default()
    };
    let rec = solve(&problem, &config).expect("solve");
    let emb = embed(&rec.l, 2).expect("embed");
    let fit = kmeans(&emb.coords, 4, DEFAULT_RESTARTS, seed).expect("kmeans");
    clustering_error(&fit.assignments, cloud.labels().expect("labels")).expect("error")
}

fn clustering_suite() -> Outcome {
    let t = Instant::now();
    let err = blob_pipeline(0);
    let secs = t.elapsed();
    outcome(err <= 5.0, format!("4-blob clustering error = {err:.2}%, {:.1}s", secs.as_secs_f64()))
}

/// Informational only: runs the MNIST subset when `BMC_MNIST_DIR` points at
/// the standard training files.
fn mnist_report() {
    let Ok(dir) = std::env::var("BMC_MNIST_DIR") else {
        println!("INFO  MNIST clustering error: skipped (BMC_MNIST_DIR not set)");
        return;
    };
    let dir = PathBuf::from(dir);
    let set = match load_idx(dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte")) {
        Ok(set) => set,
        Err(e) => {
            println!("INFO  MNIST clustering error: could not load ({e})");
            return;
        }
    };
    let cloud = subsample_by_digit(&set, &[0, 1, 3, 4], 30, 0).expect("subsample");
    let problem = build_bounds(&cloud, &0.1.into(), &10.0.into(), &ObservedDistances::none(), 4).expect("bounds");
    let config = SolverConfig {
        rho_zeta_init: 0.1,
        rho_eta_init: 0.1,
        rho_growth: 1.02,
        max_iters: 800,
        ..SolverConfig::default()
    };
    let rec = solve(&problem, &config).expect("solve");
    let emb = embed(&rec.l, 2).expect("embed");
    let fit = kmeans(&emb.coords, 4, DEFAULT_RESTARTS, 0).expect("kmeans");
    let err = clustering_error(&fit.assignments, cloud.labels().expect("labels")).expect("error");
    println!("INFO  MNIST clustering error (digits 0,1,3,4 x 30) = {err:.2}%, reference 16.33%");
}

fn neighborhood_suite() -> Outcome {
    let t = Instant::now();
    let mut r = rng(8);
    let pts = DMatrix::from_fn(30, 3, |_, _| r.random_range(-1.0..1.0));
    let identity_zero = (1..=20).all(|k| {
        let a = knn_adjacency(&pts, k).expect("knn");
        neighborhood_error(&a, &a).expect("error") == 0.0
    });

    let a = knn_adjacency(&DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 3.0]), 1).expect("knn");
    let b = knn_adjacency(&DMatrix::from_column_slice(3, 1, &[0.0, 1.0, -1.5]), 1).expect("knn");
    let hand = neighborhood_error(&a, &b).expect("error");

    let mut worst_ratio = 0.0f64;
    for _ in 0..50 {
        let n = r.random_range(5..25);
        let x = DMatrix::from_fn(n, 4, |_, _| r.random_range(-1.0..1.0));
        let y = DMatrix::from_fn(n, 2, |_, _| r.random_range(-1.0..1.0));
        let bound = 200.0 * n as f64 / (n as f64 - 1.0);
        for k in 1..n {
            let e = neighborhood_error(&knn_adjacency(&x, k).unwrap(), &knn_adjacency(&y, k).unwrap()).unwrap();
            worst_ratio = worst_ratio.max(e / bound);
        }
    }
    let secs = t.elapsed();
    outcome(
        identity_zero && hand == 100.0 && worst_ratio <= 1.0 && within(secs, 1.0),
        format!(
            "identity zero for k = 1..20: {identity_zero}, hand case = {hand}, worst error / bound = {worst_ratio:.3}, {:.3}s",
            secs.as_secs_f64()
        ),
    )
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/idx").join(name)
}

fn round_trips() -> Outcome {
    let mut r = rng(10);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let n = r.random_range(2..12);
        let mut d = DMatrix::from_fn(n, n, |_, _| r.random_range(0.0..10.0));
        d = (&d + d.transpose()).scale(0.5);
        d.fill_diagonal(0.0);
        let back = linalg::gram_to_distance(&linalg::gramian(&d).expect("gram"));
        worst = worst.max((back.as_matrix() - &d).amax());
    }

    let valid = load_idx(fixture("images.idx3-ubyte"), fixture("labels.idx1-ubyte"));
    let valid_ok = matches!(&valid, Ok(set) if set.len() == 3
        && (set.rows, set.cols) == (2, 2)
        && set.labels == [0, 1, 3]
        && set.images[(0, 1)] == 1.0
        && set.images[(0, 2)] == 0.2);
    let bytes = |name: &str| fs::read(fixture(name)).expect("fixture");
    let bad_magic = matches!(
        parse_idx_images(&bytes("bad-magic.idx3-ubyte"), "bad-magic"),
        Err(BmcError::BadMagic { expected: 0x803, found: 0x804, .. })
    );
    let truncated = matches!(
        parse_idx_images(&bytes("truncated.idx3-ubyte"), "truncated"),
        Err(BmcError::Truncated { needed: 28, actual: 25, .. })
    );
    let mismatch = matches!(
        load_idx(fixture("images.idx3-ubyte"), fixture("short-labels.idx1-ubyte")),
        Err(BmcError::CountMismatch { images: 3, labels: 2 })
    );
    let labels_ok = parse_idx_labels(&bytes("labels.idx1-ubyte"), "labels").ok() == Some(vec![0, 1, 3]);

    let m = DMatrix::from_fn(7, 5, |_, _| r.random_range(-1e6..1e6) * 10f64.powi(r.random_range(-12..12)));
    let text = format_csv_matrix(&m);
    let parsed = parse_csv_matrix(&text, "roundtrip").expect("parse");
    let csv_stable = parsed.iter().zip(m.iter()).all(|(a, b)| a.to_bits() == b.to_bits())
        && format_csv_matrix(&parsed) == text;

    let idx_ok = valid_ok && bad_magic && truncated && mismatch && labels_ok;
    outcome(
        worst <= 1e-10 && idx_ok && csv_stable,
        format!(
            "gram round trip max err = {worst:.3e}, IDX valid/bad-magic/truncated/count-mismatch = \
             {valid_ok}/{bad_magic}/{truncated}/{mismatch}, CSV bitwise stable = {csv_stable}"
        ),
    )
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("2 exact recovery", exact_recovery()),
        ("3 Gower rank", gower_rank()),
        ("4 truncated-norm identity", truncated_norm_identity()),
        ("5 proximal optimality", proximal_optimality()),
        ("6 PSD-step invariants", psd_step_invariants()),
        ("7 clustering error", clustering_suite()),
        ("8 neighborhood error", neighborhood_suite()),
        ("10 round trips and parsers", round_trips()),
    ];
    mnist_report();
    // Criteria 1 and 9 share two CLI solves.
    let runs = CylinderRuns::run();
    results.insert(0, ("1 spectrum gap", spectrum_gap(&runs)));
    results.push(("9 determinism", determinism(&runs)));

    let mut failed = 0;
    for (name, o) in &results {
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} acceptance criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
