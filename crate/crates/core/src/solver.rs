//! ADMM iteration for bounded manifold completion.
//!
//! The split problem is
//!
//! ```text
//! minimize  ‖L‖_* - tr(U_r K V_r^T)
//! s.t.      L = K,  Gram(L) ⪰ 0,  E(D^l, D^u, K) = 0
//! ```
//!
//! with multipliers `ζ` (for `L = K`) and `η` (for `E = 0`). Each iteration
//! runs, in order:
//!
//! 1. `L ← psd_distance_step(K - ζ/ρ_ζ, ρ_ζ)`
//! 2. `K ← argmin_K ρ_ζ/2 ‖L - K + (U_r^T V_r + ζ)/ρ_ζ‖² + (bound term)`, with
//!    `U_r`, `V_r` the top-`r` singular vectors of the new `L`
//! 3. `ζ ← ζ + ρ_ζ (L - K)` and the `η` update
//! 4. `ρ_ζ ← ρ ρ_ζ`, `ρ_η ← ρ ρ_η` (capped at [`PENALTY_CAP`])
//!
//! How the bound term enters steps 2 and 3 is chosen by [`BoundUpdate`].

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bounds::{is_unbounded, BoundedDistanceProblem};
use crate::error::{BmcError, Result};
use crate::linalg::{self, DistanceMatrix, Spectrum};
use crate::shrinkage::{bound_violation, bound_violation_deriv, psd_distance_step};

/// Penalties never grow beyond this value.
pub const PENALTY_CAP: f64 = 1e12;

/// Treatment of the bound-violation term in the `K` and `η` updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundUpdate {
    /// Entrywise exact minimizer of the `K` subproblem, i.e. the stationarity
    /// condition `ρ_ζ (K - X) + (ρ_η E + η) E' = 0` solved with `E` taken at
    /// the new `K`. `η` is handled as a two-sided inequality multiplier,
    /// `η ← ρ_η E(K + η/ρ_η)`, which equals `η + ρ_η E(K)` whenever the
    /// multiplier already points at the violated side and releases it once
    /// the entry is back inside its interval.
    #[default]
    Projected,
    /// `E` and `E'` frozen at the previous `K` with the plain accumulation
    /// `η ← η + ρ_η E(K)`. An entry that stays outside its interval then
    /// obeys `e_{m+2} = e_m - e_{m+1}` when `ρ_η = ρ_ζ`, which grows by the
    /// golden ratio per iteration; kept for comparison.
    Linearized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Initial penalty on `L = K`.
    pub rho_zeta_init: f64,
    /// Initial penalty on the bound violation.
    pub rho_eta_init: f64,
    /// Geometric growth factor applied to both penalties each iteration.
    pub rho_growth: f64,
    pub max_iters: usize,
    /// Relative primal residual for early stopping; 0 runs all iterations.
    pub rel_residual_tol: f64,
    /// Weight on `D^l` in the initial guess `w D^l + (1 - w) D^u`.
    pub init_mix: f64,
    /// Residuals are recorded every this many iterations (and at the end).
    pub record_every: usize,
    #[serde(default)]
    pub bound_update: BoundUpdate,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rho_zeta_init: 0.05,
            rho_eta_init: 0.05,
            rho_growth: 1.01,
            max_iters: 500,
            rel_residual_tol: 0.0,
            init_mix: 0.8,
            record_every: 1,
            bound_update: BoundUpdate::Projected,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(BmcError::Parameter(msg));
        if !(self.rho_zeta_init > 0.0 && self.rho_zeta_init.is_finite()) {
            return bad(format!("rho_zeta_init must be positive, got {}", self.rho_zeta_init));
        }
        if !(self.rho_eta_init > 0.0 && self.rho_eta_init.is_finite()) {
            return bad(format!("rho_eta_init must be positive, got {}", self.rho_eta_init));
        }
        if !(self.rho_growth >= 1.0 && self.rho_growth.is_finite()) {
            return bad(format!("rho_growth must be >= 1, got {}", self.rho_growth));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive".into());
        }
        if self.rel_residual_tol.is_nan() || self.rel_residual_tol < 0.0 {
            return bad(format!("rel_residual_tol must be >= 0, got {}", self.rel_residual_tol));
        }
        if !(0.0..=1.0).contains(&self.init_mix) {
            return bad(format!("init_mix must lie in [0, 1], got {}", self.init_mix));
        }
        if self.record_every == 0 {
            return bad("record_every must be positive".into());
        }
        Ok(())
    }
}

/// Evolving ADMM iterates.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub l: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub zeta: DMatrix<f64>,
    pub eta: DMatrix<f64>,
    pub rho_zeta: f64,
    pub rho_eta: f64,
    pub iter: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualRecord {
    pub iter: usize,
    /// `‖L - K‖_F / max(‖K‖_F, 1)`
    pub primal_residual: f64,
    /// `max |E(K)|`
    pub max_violation: f64,
}

#[derive(Debug, Clone)]
pub struct Recovery {
    pub l: DistanceMatrix,
    /// Eigen-spectrum of `Gram(L)`, descending.
    pub spectrum: Spectrum,
    pub residual_history: Vec<ResidualRecord>,
    pub iters_run: usize,
    pub config_echo: SolverConfig,
}

impl Recovery {
    /// Singular values of the recovered squared-distance matrix itself.
    pub fn distance_singular_values(&self) -> Result<Vec<f64>> {
        Ok(linalg::svd(self.l.as_matrix())?.values.iter().copied().collect())
    }

    pub fn final_residual(&self) -> Option<&ResidualRecord> {
        self.residual_history.last()
    }
}

/// Upper bounds with sentinel entries replaced by `D^l + median finite gap`.
pub fn capped_upper(problem: &BoundedDistanceProblem) -> DMatrix<f64> {
    let (lower, upper) = (problem.lower(), problem.upper());
    let n = problem.n();
    let mut gaps: Vec<f64> = Vec::new();
    for j in 0..n {
        for i in (j + 1)..n {
            if !is_unbounded(upper[(i, j)]) {
                gaps.push(upper[(i, j)] - lower[(i, j)]);
            }
        }
    }
    let gap = if gaps.is_empty() {
        let top = linalg::max_abs(lower);
        if top > 0.0 { top } else { 1.0 }
    } else {
        gaps.sort_by(f64::total_cmp);
        let mid = gaps.len() / 2;
        if gaps.len() % 2 == 1 {
            gaps[mid]
        } else {
            0.5 * (gaps[mid - 1] + gaps[mid])
        }
    };
    DMatrix::from_fn(n, n, |i, j| {
        if is_unbounded(upper[(i, j)]) {
            lower[(i, j)] + gap
        } else {
            upper[(i, j)]
        }
    })
}

/// `L = K = ζ = η = w D^l + (1 - w) D^u` with sentinel bounds capped.
pub fn init_state(problem: &BoundedDistanceProblem, config: &SolverConfig) -> Result<SolverState> {
    config.validate()?;
    if let Some(v) = problem.validate().first() {
        return Err(BmcError::Constraint(format!("invalid problem: {v}")));
    }
    let upper = capped_upper(problem);
    let lower = problem.lower();
    let w = config.init_mix;
    let guess = DMatrix::from_fn(problem.n(), problem.n(), |i, j| {
        if is_unbounded(problem.upper()[(i, j)]) {
            upper[(i, j)]
        } else if lower[(i, j)] == upper[(i, j)] {
            lower[(i, j)]
        } else {
            w * lower[(i, j)] + (1.0 - w) * upper[(i, j)]
        }
    });
    Ok(SolverState {
        l: guess.clone(),
        k: guess.clone(),
        zeta: guess.clone(),
        eta: guess,
        rho_zeta: config.rho_zeta_init,
        rho_eta: config.rho_eta_init,
        iter: 1,
    })
}

/// `L_{m+1} = psd_distance_step(K_m - ζ_m / ρ_ζ, ρ_ζ)`.
pub fn update_l(state: &SolverState) -> Result<DistanceMatrix> {
    let g = &state.k - &state.zeta / state.rho_zeta;
    psd_distance_step(&g, state.rho_zeta)
}

/// `U_r^T V_r` for the top-`r` singular triplets of a symmetric matrix.
///
/// For symmetric `L = Σ λ_j u_j u_j^T` the singular triplets are
/// `(|λ_j|, u_j, sign(λ_j) u_j)`, so the product reduces to
/// `Σ_{j<r} sign(λ_j) u_j u_j^T` over the `r` largest `|λ_j|`.
pub fn top_singular_product(l: &DMatrix<f64>, r: usize) -> Result<DMatrix<f64>> {
    let n = l.nrows();
    let mut out = DMatrix::zeros(n, n);
    if r == 0 {
        return Ok(out);
    }
    let spec = linalg::symmetric_eig(l)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| spec.values[b].abs().total_cmp(&spec.values[a].abs()));
    for &j in order.iter().take(r) {
        let sign = if spec.values[j] < 0.0 { -1.0 } else { 1.0 };
        let u = spec.vectors.column(j);
        out.ger(sign, &u, &u, 1.0);
    }
    Ok(out)
}

/// `K_{m+1}` for the configured [`BoundUpdate`].
pub fn update_k(
    state: &SolverState,
    l_next: &DMatrix<f64>,
    problem: &BoundedDistanceProblem,
    config: &SolverConfig,
) -> Result<DMatrix<f64>> {
    let uv = top_singular_product(l_next, problem.r())?;
    let x = l_next + (uv + &state.zeta) / state.rho_zeta;
    Ok(match config.bound_update {
        BoundUpdate::Linearized => {
            let e = bound_violation(problem.lower(), problem.upper(), &state.k);
            let e_prime = bound_violation_deriv(problem.lower(), problem.upper(), &state.k);
            x - (e * state.rho_eta + &state.eta).component_mul(&e_prime) / state.rho_zeta
        }
        BoundUpdate::Projected => {
            let (lower, upper) = (problem.lower(), problem.upper());
            let (rz, re) = (state.rho_zeta, state.rho_eta);
            DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| {
                let shift = state.eta[(i, j)] / re;
                project_entry(x[(i, j)], shift, lower[(i, j)], upper[(i, j)], rz, re)
            })
        }
    })
}

/// Minimizer over `k` of `ρ_ζ/2 (k - x)² + ρ_η/2 E(k + c)²` for the
/// interval `[lo, up]`.
pub fn project_entry(x: f64, c: f64, lo: f64, up: f64, rho_zeta: f64, rho_eta: f64) -> f64 {
    let target = if x + c > up {
        up - c
    } else if x + c < lo {
        lo - c
    } else {
        return x;
    };
    (rho_zeta * x + rho_eta * target) / (rho_zeta + rho_eta)
}

/// `ζ += ρ_ζ (L - K)` and the `η` update for the configured [`BoundUpdate`].
/// Returns `E(K)` at the current `K`.
pub fn update_multipliers(
    state: &mut SolverState,
    problem: &BoundedDistanceProblem,
    config: &SolverConfig,
) -> DMatrix<f64> {
    let (lower, upper) = (problem.lower(), problem.upper());
    let diff = &state.l - &state.k;
    state.zeta += diff * state.rho_zeta;
    let e = bound_violation(lower, upper, &state.k);
    match config.bound_update {
        BoundUpdate::Linearized => state.eta += &e * state.rho_eta,
        BoundUpdate::Projected => {
            let shifted = &state.k + &state.eta / state.rho_eta;
            state.eta = bound_violation(lower, upper, &shifted) * state.rho_eta;
        }
    }
    e
}

pub fn update_penalties(state: &mut SolverState, config: &SolverConfig) {
    state.rho_zeta = (state.rho_zeta * config.rho_growth).min(PENALTY_CAP);
    state.rho_eta = (state.rho_eta * config.rho_growth).min(PENALTY_CAP);
}

/// Per-iteration diagnostics handed to observers.
#[derive(Debug, Clone, Copy)]
pub struct IterationReport {
    pub residual: ResidualRecord,
    pub rho_zeta: f64,
    pub rho_eta: f64,
}

impl SolverState {
    /// One full ADMM iteration. Returns the residuals after the step.
    pub fn step(&mut self, problem: &BoundedDistanceProblem, config: &SolverConfig) -> Result<ResidualRecord> {
        let l_next = update_l(self)?.into_inner();
        #[cfg(debug_assertions)]
        check_iterate(&l_next, self.iter);
        let k_next = update_k(self, &l_next, problem, config)?;
        self.l = l_next;
        self.k = k_next;

        let e_new = update_multipliers(self, problem, config);
        update_penalties(self, config);

        let finite = [&self.l, &self.k, &self.zeta, &self.eta]
            .iter()
            .all(|m| m.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(BmcError::Divergence {
                iter: self.iter,
                detail: "non-finite iterate".into(),
            });
        }

        let record = ResidualRecord {
            iter: self.iter,
            primal_residual: (&self.l - &self.k).norm() / self.k.norm().max(1.0),
            max_violation: e_new.amax(),
        };
        self.iter += 1;
        Ok(record)
    }
}

#[cfg(debug_assertions)]
fn check_iterate(l: &DMatrix<f64>, iter: usize) {
    let n = l.nrows();
    let tol = 1e-10 * linalg::max_abs(l).max(1.0);
    for i in 0..n {
        assert_eq!(l[(i, i)], 0.0, "iterate {iter}: nonzero diagonal");
        for j in 0..n {
            assert_eq!(l[(i, j)], l[(j, i)], "iterate {iter}: asymmetric");
            assert!(l[(i, j)] >= -tol, "iterate {iter}: negative entry {}", l[(i, j)]);
        }
    }
    if n >= 2 {
        let gram = linalg::gramian(l).expect("square iterate");
        let spec = linalg::symmetric_eig(gram.as_matrix()).expect("finite iterate");
        let min = spec.values[n - 1];
        assert!(min >= -tol, "iterate {iter}: Gram eigenvalue {min}");
    }
}

pub fn solve(problem: &BoundedDistanceProblem, config: &SolverConfig) -> Result<Recovery> {
    solve_with_observer(problem, config, |_| {})
}

/// Runs the solver, calling `observer` after every iteration.
pub fn solve_with_observer<F>(
    problem: &BoundedDistanceProblem,
    config: &SolverConfig,
    mut observer: F,
) -> Result<Recovery>
where
    F: FnMut(&IterationReport),
{
    let mut state = init_state(problem, config)?;
    let stop_scale = if config.rel_residual_tol > 0.0 {
        capped_upper(problem).mean().max(1.0)
    } else {
        0.0
    };

    let mut history = Vec::new();
    let mut iters_run = 0;
    for m in 1..=config.max_iters {
        let record = state.step(problem, config)?;
        iters_run = m;
        observer(&IterationReport {
            residual: record,
            rho_zeta: state.rho_zeta,
            rho_eta: state.rho_eta,
        });

        let converged = config.rel_residual_tol > 0.0
            && record.primal_residual < config.rel_residual_tol
            && record.max_violation < config.rel_residual_tol * stop_scale;
        if m % config.record_every == 0 || m == config.max_iters || converged {
            history.push(record);
        }
        if converged {
            break;
        }
    }

    let l = DistanceMatrix::from_raw(state.l);
    let spectrum = linalg::symmetric_eig(linalg::gramian(l.as_matrix())?.as_matrix())?;
    Ok(Recovery {
        l,
        spectrum,
        residual_history: history,
        iters_run,
        config_echo: config.clone(),
    })
}
