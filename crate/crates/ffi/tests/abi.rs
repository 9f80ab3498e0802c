use std::ffi::CStr;
use std::ptr;

use bmc_ffi::*;

fn last_error() -> String {
    let p = bmc_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn planar(n: usize) -> Vec<f64> {
    (0..n)
        .flat_map(|i| {
            let t = i as f64;
            [(t * 0.91).sin() * 3.0, (t * 1.37).cos() * 2.0 + 0.1 * t]
        })
        .collect()
}

fn squared(points: &[f64], n: usize) -> Vec<f64> {
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let dx = points[2 * i] - points[2 * j];
            let dy = points[2 * i + 1] - points[2 * j + 1];
            d[i * n + j] = dx * dx + dy * dy;
        }
    }
    d
}

#[test]
fn version_matches_crate() {
    let v = unsafe { CStr::from_ptr(bmc_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn exact_bounds_round_trip() {
    let n = 9;
    let d = squared(&planar(n), n);
    let mut problem = ptr::null_mut();
    let status = unsafe { bmc_problem_from_bounds(d.as_ptr(), d.as_ptr(), n, 4, &mut problem) };
    assert_eq!(status, BmcStatus::Ok);
    assert_eq!(unsafe { bmc_problem_n(problem) }, n);

    let mut config = bmc_solver_config_default();
    config.max_iters = 300;
    let mut rec = ptr::null_mut();
    assert_eq!(unsafe { bmc_solve(problem, &config, &mut rec) }, BmcStatus::Ok);
    assert_eq!(unsafe { bmc_recovery_iters_run(rec) }, 300);
    assert_eq!(unsafe { bmc_recovery_n(rec) }, n);

    let mut l = vec![0.0; n * n];
    assert_eq!(unsafe { bmc_recovery_distances(rec, l.as_mut_ptr(), l.len()) }, BmcStatus::Ok);
    let err: f64 = l.iter().zip(&d).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let norm: f64 = d.iter().map(|x| x * x).sum::<f64>().sqrt();
    assert!(err / norm < 1e-4, "relative error {}", err / norm);

    let mut spectrum = vec![0.0; n];
    assert_eq!(unsafe { bmc_recovery_spectrum(rec, spectrum.as_mut_ptr(), n) }, BmcStatus::Ok);
    assert!(spectrum.windows(2).all(|w| w[0] >= w[1]));
    assert!(spectrum[2].abs() < 1e-6 * spectrum[0]);

    let mut sv = vec![0.0; n];
    assert_eq!(unsafe { bmc_recovery_singular_values(rec, sv.as_mut_ptr(), n) }, BmcStatus::Ok);
    assert!(sv[4] < 1e-6 * sv[3]);

    let (mut primal, mut viol) = (f64::NAN, f64::NAN);
    assert_eq!(unsafe { bmc_recovery_final_residual(rec, &mut primal, &mut viol) }, BmcStatus::Ok);
    assert!(primal.is_finite() && viol.is_finite());

    let mut coords = vec![0.0; n * 2];
    assert_eq!(unsafe { bmc_embed(rec, 2, coords.as_mut_ptr(), coords.len()) }, BmcStatus::Ok);
    let back = squared(&coords, n);
    let e: f64 = back.iter().zip(&d).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    assert!(e / norm < 1e-3);

    unsafe {
        bmc_recovery_free(rec);
        bmc_problem_free(problem);
    }
}

#[test]
fn points_constructor_and_null_config() {
    let n = 8;
    let pts = planar(n);
    let mut problem = ptr::null_mut();
    let status = unsafe { bmc_problem_from_points(pts.as_ptr(), n, 2, 0.1, 10.0, 3, &mut problem) };
    assert_eq!(status, BmcStatus::Ok);
    let mut rec = ptr::null_mut();
    assert_eq!(unsafe { bmc_solve(problem, ptr::null(), &mut rec) }, BmcStatus::Ok);
    assert_eq!(unsafe { bmc_recovery_iters_run(rec) }, bmc_solver_config_default().max_iters);
    unsafe {
        bmc_recovery_free(rec);
        bmc_problem_free(problem);
    }
}

#[test]
fn errors_set_status_and_message() {
    let mut problem = ptr::null_mut();
    let st = unsafe { bmc_problem_from_bounds(ptr::null(), ptr::null(), 3, 1, &mut problem) };
    assert_eq!(st, BmcStatus::NullPointer);
    assert!(last_error().contains("lower"));
    assert!(problem.is_null());

    let lo = [0.0, 5.0, 5.0, 0.0];
    let up = [0.0, 1.0, 1.0, 0.0];
    let st = unsafe { bmc_problem_from_bounds(lo.as_ptr(), up.as_ptr(), 2, 1, &mut problem) };
    assert_eq!(st, BmcStatus::Constraint);
    assert!(last_error().contains("violation"));

    let st = unsafe { bmc_problem_from_bounds(up.as_ptr(), up.as_ptr(), 2, 2, &mut problem) };
    assert_eq!(st, BmcStatus::InvalidArgument);

    let st = unsafe { bmc_problem_from_bounds(up.as_ptr(), up.as_ptr(), 2, 1, &mut problem) };
    assert_eq!(st, BmcStatus::Ok);

    let mut config = bmc_solver_config_default();
    config.bound_update = 7;
    let mut rec = ptr::null_mut();
    assert_eq!(unsafe { bmc_solve(problem, &config, &mut rec) }, BmcStatus::InvalidArgument);
    assert!(last_error().contains("bound_update"));

    config = bmc_solver_config_default();
    config.rho_growth = 0.5;
    assert_eq!(unsafe { bmc_solve(problem, &config, &mut rec) }, BmcStatus::InvalidArgument);

    config = bmc_solver_config_default();
    config.max_iters = 5;
    assert_eq!(unsafe { bmc_solve(problem, &config, &mut rec) }, BmcStatus::Ok);
    let mut small = [0.0; 3];
    assert_eq!(unsafe { bmc_recovery_distances(rec, small.as_mut_ptr(), 3) }, BmcStatus::BufferTooSmall);
    assert_eq!(unsafe { bmc_recovery_distances(rec, ptr::null_mut(), 4) }, BmcStatus::NullPointer);
    assert_eq!(unsafe { bmc_embed(rec, 0, small.as_mut_ptr(), 3) }, BmcStatus::InvalidArgument);
    assert_eq!(unsafe { bmc_solve(ptr::null(), ptr::null(), &mut rec) }, BmcStatus::NullPointer);

    unsafe {
        bmc_recovery_free(rec);
        bmc_problem_free(problem);
        bmc_recovery_free(ptr::null_mut());
        bmc_problem_free(ptr::null_mut());
    }
    assert_eq!(unsafe { bmc_problem_n(ptr::null()) }, 0);
}

#[test]
fn error_messages_are_per_thread() {
    let mut problem = ptr::null_mut();
    unsafe { bmc_problem_from_bounds(ptr::null(), ptr::null(), 3, 1, &mut problem) };
    std::thread::spawn(|| assert!(bmc_last_error_message().is_null()))
        .join()
        .unwrap();
    assert!(!bmc_last_error_message().is_null());
}
