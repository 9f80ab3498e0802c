use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Instant;

use nalgebra::DMatrix;
use serde_json::json;

use super::{usage, CliError, Command, Dataset, EmbedArgs, MetricsArgs, OutputArgs, RunManifest, SolveArgs, SolverFlags, SweepArgs};
use crate::bounds::{build_bounds, BoundedDistanceProblem, ObservedDistances, PointCloud};
use crate::datasets::{self, SemiCylinderSpec};
use crate::embedding::embed;
use crate::error::BmcError;
use crate::linalg::DistanceMatrix;
use crate::metrics::{clustering_error, kmeans, knn_adjacency, neighborhood_error};
use crate::solver::{solve_with_observer, Recovery, SolverConfig};
use crate::shrinkage::truncated_nuclear_norm;

type CliResult<T> = Result<T, CliError>;

/// What a command produced: its manifest, where to save it, and whether it
/// should be echoed (commands that stream CSV to stdout do not echo).
struct Outcome {
    manifest: RunManifest,
    manifest_path: Option<PathBuf>,
    echo: bool,
}

impl From<RunManifest> for Outcome {
    fn from(manifest: RunManifest) -> Self {
        Outcome { manifest, manifest_path: None, echo: true }
    }
}

pub(super) fn execute(command: Command, argv: Vec<String>) -> CliResult<()> {
    let start = Instant::now();
    let Outcome { mut manifest, manifest_path, echo } = match command {
        Command::Generate { dataset } => generate(dataset)?.into(),
        Command::Solve(args) => solve(&args)?,
        Command::Embed(args) => embed_cmd(&args)?.into(),
        Command::Metrics(args) => metrics(&args)?,
        Command::SweepR(args) => sweep(&args)?,
    };
    manifest.argv = argv;
    manifest.wall_time_secs = start.elapsed().as_secs_f64();
    if let Some(path) = &manifest_path {
        manifest.outputs.push(path.clone());
    }
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    if let Some(path) = &manifest_path {
        write_text(path, &format!("{text}\n"))?;
    }
    if echo {
        println!("{text}");
    }
    Ok(())
}

fn manifest(command: &str, seed: Option<u64>, parameters: serde_json::Value) -> RunManifest {
    RunManifest {
        command: command.to_string(),
        argv: Vec::new(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        seed,
        parameters,
        wall_time_secs: 0.0,
        iters_run: None,
        final_residual: None,
        outputs: Vec::new(),
    }
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| BmcError::io(path, e).into())
}

fn write_column(path: &Path, values: &[f64]) -> CliResult<()> {
    let m = DMatrix::from_column_slice(values.len(), 1, values);
    Ok(datasets::save_csv_matrix(path, &m)?)
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_os_string();
    s.push(suffix);
    PathBuf::from(s)
}

fn labels_path(output: &OutputArgs) -> PathBuf {
    output.labels_out.clone().unwrap_or_else(|| {
        let stem = output.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        output.out.with_file_name(format!("{stem}-labels.csv"))
    })
}

fn write_cloud(cloud: &PointCloud, output: &OutputArgs, m: &mut RunManifest) -> CliResult<()> {
    datasets::save_csv_matrix(&output.out, cloud.coords())?;
    m.outputs.push(output.out.clone());
    if let Some(labels) = cloud.labels() {
        let path = labels_path(output);
        datasets::save_labels(&path, labels)?;
        m.outputs.push(path);
    }
    Ok(())
}

fn generate(dataset: Dataset) -> CliResult<RunManifest> {
    match dataset {
        Dataset::SemiCylinder { n, seed, radius, theta_ranges, z_ranges, output } => {
            let mut spec = SemiCylinderSpec::hollowed(n, seed);
            spec.radius = radius;
            if !theta_ranges.is_empty() {
                spec.theta_ranges = theta_ranges;
            }
            if !z_ranges.is_empty() {
                spec.z_ranges = z_ranges;
            }
            let cloud = datasets::sample_semi_cylinder(&spec)?;
            let mut m = manifest(
                "generate semi-cylinder",
                Some(seed),
                json!({ "n": n, "radius": radius, "theta_ranges": spec.theta_ranges, "z_ranges": spec.z_ranges }),
            );
            write_cloud(&cloud, &output, &mut m)?;
            Ok(m)
        }
        Dataset::Clusters { k, per, dim, sep, sigma, seed, output } => {
            let cloud = datasets::sample_gaussian_clusters(k, per, dim, sep, sigma, seed)?;
            let mut m = manifest(
                "generate clusters",
                Some(seed),
                json!({ "k": k, "per": per, "dim": dim, "sep": sep, "sigma": sigma }),
            );
            write_cloud(&cloud, &output, &mut m)?;
            Ok(m)
        }
        Dataset::Mnist { images, labels, digits, per_digit, seed, noise_variance, output } => {
            let set = datasets::load_idx(&images, &labels)?;
            let mut cloud = datasets::subsample_by_digit(&set, &digits, per_digit, seed)?;
            if noise_variance > 0.0 {
                let noisy = datasets::add_gaussian_noise(cloud.coords(), noise_variance, seed)?;
                cloud = PointCloud::new(noisy, cloud.labels().map(<[i64]>::to_vec))?;
            }
            let mut m = manifest(
                "generate mnist",
                Some(seed),
                json!({ "images": images, "labels": labels, "digits": digits,
                        "per_digit": per_digit, "noise_variance": noise_variance }),
            );
            write_cloud(&cloud, &output, &mut m)?;
            Ok(m)
        }
        Dataset::Noisy { points, variance, seed, output } => {
            let coords = datasets::load_csv_matrix(&points)?;
            let noisy = datasets::add_gaussian_noise(&coords, variance, seed)?;
            let mut m = manifest("generate noisy", Some(seed), json!({ "points": points, "variance": variance }));
            write_cloud(&PointCloud::new(noisy, None)?, &output, &mut m)?;
            Ok(m)
        }
    }
}

fn solver_config(flags: &SolverFlags) -> CliResult<SolverConfig> {
    let config = SolverConfig {
        rho_zeta_init: flags.rho_init,
        rho_eta_init: flags.rho_eta_init.unwrap_or(flags.rho_init),
        rho_growth: flags.rho,
        max_iters: flags.iters,
        rel_residual_tol: flags.tol,
        init_mix: flags.init_mix,
        record_every: flags.record_every,
        bound_update: flags.bound_update.into(),
    };
    config.validate()?;
    Ok(config)
}

fn check_rank(r: usize, n: usize) -> CliResult<()> {
    if r >= n {
        return Err(usage(format!("--r {r} must be below the point count {n}")));
    }
    Ok(())
}

fn load_cloud(path: &Path) -> CliResult<PointCloud> {
    Ok(PointCloud::new(datasets::load_csv_matrix(path)?, None)?)
}

fn problem_from_points(cloud: &PointCloud, flags: &SolverFlags, r: usize) -> CliResult<BoundedDistanceProblem> {
    check_rank(r, cloud.n())?;
    Ok(build_bounds(cloud, &flags.alpha_l.into(), &flags.alpha_u.into(), &ObservedDistances::none(), r)?)
}

fn run_solver(problem: &BoundedDistanceProblem, config: &SolverConfig, progress: usize, tag: &str) -> CliResult<Recovery> {
    Ok(solve_with_observer(problem, config, |rep| {
        if progress > 0 && rep.residual.iter % progress == 0 {
            eprintln!(
                "{tag}iter {}: primal {:.3e}, max violation {:.3e}, rho {:.3e}",
                rep.residual.iter, rep.residual.primal_residual, rep.residual.max_violation, rep.rho_zeta
            );
        }
    })?)
}

fn residuals_csv(rec: &Recovery) -> String {
    let mut out = String::from("iter,primal_residual,max_violation\n");
    for r in &rec.residual_history {
        let _ = writeln!(out, "{},{:.16e},{:.16e}", r.iter, r.primal_residual, r.max_violation);
    }
    out
}

fn solver_parameters(flags: &SolverFlags, config: &SolverConfig, r: usize) -> serde_json::Value {
    json!({ "r": r, "alpha_l": flags.alpha_l, "alpha_u": flags.alpha_u, "solver": config })
}

fn solve(args: &SolveArgs) -> CliResult<Outcome> {
    let config = solver_config(&args.solver)?;
    let problem = match (&args.points, &args.lower, &args.upper) {
        (Some(points), _, _) => problem_from_points(&load_cloud(points)?, &args.solver, args.r)?,
        (None, Some(lower), Some(upper)) => {
            let lower = datasets::load_csv_matrix(lower)?;
            let upper = datasets::load_csv_matrix(upper)?;
            if lower.is_square() {
                check_rank(args.r, lower.nrows())?;
            }
            BoundedDistanceProblem::new(lower, upper, args.r)?
        }
        _ => return Err(usage("give either --points or both --lower and --upper")),
    };
    let rec = run_solver(&problem, &config, args.solver.progress, "")?;

    let mut params = solver_parameters(&args.solver, &config, args.r);
    params["input"] = json!({ "points": args.points, "lower": args.lower, "upper": args.upper });
    let mut m = manifest("solve", Some(args.solver.seed), params);
    let prefix = &args.out_prefix;
    let paths = ["-L.csv", "-spectrum.csv", "-sv.csv", "-residuals.csv"].map(|s| with_suffix(prefix, s));
    datasets::save_csv_matrix(&paths[0], rec.l.as_matrix())?;
    write_column(&paths[1], rec.spectrum.values.as_slice())?;
    write_column(&paths[2], &rec.distance_singular_values()?)?;
    write_text(&paths[3], &residuals_csv(&rec))?;
    m.outputs.extend(paths);
    m.iters_run = Some(rec.iters_run);
    m.final_residual = rec.final_residual().copied();
    Ok(Outcome { manifest: m, manifest_path: Some(with_suffix(prefix, "-manifest.json")), echo: true })
}

fn embed_cmd(args: &EmbedArgs) -> CliResult<RunManifest> {
    let raw = datasets::load_csv_matrix(&args.matrix)?;
    if !raw.is_square() {
        return Err(BmcError::Dimension(format!("{} is {}x{}, not square", args.matrix.display(), raw.nrows(), raw.ncols())).into());
    }
    if args.p == 0 || args.p > raw.nrows() {
        return Err(usage(format!("--p {} must lie in 1..={}", args.p, raw.nrows())));
    }
    let e = embed(&DistanceMatrix::new(raw)?, args.p)?;
    datasets::save_csv_matrix(&args.out, &e.coords)?;
    let mut m = manifest("embed", None, json!({ "matrix": args.matrix, "p": args.p }));
    m.outputs.push(args.out.clone());
    Ok(m)
}

fn metrics(args: &MetricsArgs) -> CliResult<Outcome> {
    let emb = datasets::load_csv_matrix(&args.embedding)?;
    let pts = datasets::load_csv_matrix(&args.points)?;
    if emb.nrows() != pts.nrows() {
        return Err(BmcError::Dimension(format!(
            "embedding has {} rows, points have {}",
            emb.nrows(),
            pts.nrows()
        ))
        .into());
    }
    let n = pts.nrows();
    if args.knn_max == 0 || args.knn_max >= n {
        return Err(usage(format!("--knn-max {} must lie in 1..{n}", args.knn_max)));
    }
    let mut csv = String::from("metric,delta,value\n");
    if let Some(path) = &args.labels {
        let labels = datasets::load_labels(path)?;
        if labels.len() != n {
            return Err(BmcError::Dimension(format!("{} labels for {n} points", labels.len())).into());
        }
        let k = args.k_clusters.unwrap_or_else(|| labels.iter().collect::<BTreeSet<_>>().len());
        let km = kmeans(&emb, k, args.restarts, args.seed)?;
        let err = clustering_error(&km.assignments, &labels)?;
        let _ = writeln!(csv, "clustering_error,,{err:.16e}");
    }
    for delta in 1..=args.knn_max {
        let err = neighborhood_error(&knn_adjacency(&pts, delta)?, &knn_adjacency(&emb, delta)?)?;
        let _ = writeln!(csv, "neighborhood_error,{delta},{err:.16e}");
    }
    let mut m = manifest(
        "metrics",
        Some(args.seed),
        json!({ "embedding": args.embedding, "points": args.points, "labels": args.labels,
                "k_clusters": args.k_clusters, "knn_max": args.knn_max, "restarts": args.restarts }),
    );
    match &args.out {
        Some(path) => {
            write_text(path, &csv)?;
            m.outputs.push(path.clone());
            Ok(m.into())
        }
        None => {
            print!("{csv}");
            Ok(Outcome { manifest: m, manifest_path: None, echo: false })
        }
    }
}

/// Fraction of singular-value mass beyond the first `r`.
pub(crate) fn tail_mass(sv: &[f64], r: usize) -> f64 {
    let total: f64 = sv.iter().sum();
    if total > 0.0 { truncated_nuclear_norm(sv, r) / total } else { 0.0 }
}

fn sweep(args: &SweepArgs) -> CliResult<Outcome> {
    if args.r_list.is_empty() {
        return Err(usage("--r-list is empty"));
    }
    let config = solver_config(&args.solver)?;
    let cloud = load_cloud(&args.points)?;
    let problems = args
        .r_list
        .iter()
        .map(|&r| problem_from_points(&cloud, &args.solver, r))
        .collect::<CliResult<Vec<_>>>()?;

    let workers = args
        .threads
        .unwrap_or_else(|| thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1);
    let mut results: Vec<CliResult<(Recovery, Vec<f64>)>> = Vec::with_capacity(problems.len());
    for chunk in problems.chunks(workers) {
        let chunk_results: Vec<_> = thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|p| {
                    let config = &config;
                    let progress = args.solver.progress;
                    s.spawn(move || -> CliResult<(Recovery, Vec<f64>)> {
                        let rec = run_solver(p, config, progress, &format!("r={}: ", p.r()))?;
                        let sv = rec.distance_singular_values()?;
                        Ok((rec, sv))
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("solver thread panicked")).collect()
        });
        results.extend(chunk_results);
    }

    let mut m = manifest(
        "sweep-r",
        Some(args.solver.seed),
        json!({ "points": args.points, "r_list": args.r_list,
                "alpha_l": args.solver.alpha_l, "alpha_u": args.solver.alpha_u, "solver": config }),
    );
    let mut summary = String::from("r,tail_mass,iters_run,primal_residual,max_violation\n");
    for (&r, result) in args.r_list.iter().zip(results) {
        let (rec, sv) = result?;
        let sv_path = with_suffix(&args.out_prefix, &format!("-r{r}-sv.csv"));
        let spec_path = with_suffix(&args.out_prefix, &format!("-r{r}-spectrum.csv"));
        write_column(&sv_path, &sv)?;
        write_column(&spec_path, rec.spectrum.values.as_slice())?;
        m.outputs.extend([sv_path, spec_path]);
        let last = rec.final_residual().copied();
        let _ = writeln!(
            summary,
            "{r},{:.16e},{},{:.16e},{:.16e}",
            tail_mass(&sv, r),
            rec.iters_run,
            last.map_or(f64::NAN, |l| l.primal_residual),
            last.map_or(f64::NAN, |l| l.max_violation)
        );
    }
    let summary_path = with_suffix(&args.out_prefix, "-sweep.csv");
    write_text(&summary_path, &summary)?;
    m.outputs.push(summary_path);
    Ok(Outcome { manifest: m, manifest_path: Some(with_suffix(&args.out_prefix, "-manifest.json")), echo: true })
}
