//! Monte Carlo convergence studies: validator sweeps, the acceleration study
//! measuring the extrapolant against the time-scheme reference, the
//! expansion-remainder study, and the Taylor-remainder battery.
//!
//! Within one path index every mesh level consumes the identical noise path;
//! workers share nothing mutable and results are reduced in path order, so
//! parallel execution never changes output bits.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;
use thiserror::Error;

use spde_core::coeffs::{
    build_discrete_from_continuous, check_parabolicity_continuous, check_parabolicity_discrete,
    consistency_residual, quasi_random_cloud, CoeffError, ContinuousCoefficients,
};
use spde_core::expansion::{
    remainder, solve_correction_system, taylor_remainder_check, ExpansionError,
    MAX_CORRECTION_ORDER,
};
use spde_core::grid::{GridError, GridFunction, TorusGrid};
use spde_core::noise::{sample_increments, zero_noise, NoiseError, NoisePath, TimeGrid};
use spde_core::richardson::{
    estimate_order, extrapolate, extrapolated_difference, vandermonde_weights, RichardsonError,
    RichardsonWeights,
};
use spde_core::solver::{
    LinearSolveConfig, SchemeProblem, SchemeStepper, SolveError, SolveMethod, Trajectory,
};
use spde_core::spectral::{solve_time_scheme_modes, SpectralError, SpectralSpace};
use spde_core::stencil::{OffsetTuple, Stencil};

use crate::config::{ConfigError, ExperimentConfig, SolverChoice};
use crate::report::{
    ConvergenceReport, LevelReport, ReportError, SlopeReport, StatValue, TaylorEntry, TaylorReport,
    ValidationEntry, ValidationReport,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error(transparent)]
    Coeff(#[from] CoeffError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Richardson(#[from] RichardsonError),
    #[error(transparent)]
    Expansion(#[from] ExpansionError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("validators failed; run the validate subcommand for details")]
    ValidatorsFailed(Box<ValidationReport>),
    #[error("only {got} levels remain above the solver/statistical floor; at least {want} are needed for an order fit")]
    FlooredOut { got: usize, want: usize },
    #[error("{0} requires coefficients constant in space")]
    NeedsConstantCoefficients(&'static str),
    #[error(
        "expansion study order {0} exceeds the correction-system maximum {MAX_CORRECTION_ORDER}"
    )]
    ExpansionOrderTooLarge(usize),
}

fn path_seed(base: u64, m: usize) -> u64 {
    base ^ (m as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn fold_fingerprint(acc: u64, fp: u64) -> u64 {
    let mut z = acc ^ fp.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z ^ (z >> 31)
}

fn solver_config(cfg: &ExperimentConfig) -> LinearSolveConfig<f64> {
    LinearSolveConfig {
        rel_tol: cfg.tolerance,
        max_iters: None,
        method: match cfg.solver {
            SolverChoice::Direct => SolveMethod::DirectBanded1d,
            SolverChoice::Iterative => SolveMethod::IterativeNonsymmetric,
        },
    }
}

fn build_problem(
    c: &ContinuousCoefficients<f64>,
    cfg: &ExperimentConfig,
    n_x: usize,
) -> Result<SchemeProblem<f64>, HarnessError> {
    let grid = TorusGrid::cube(cfg.dimension, cfg.side_length, n_x)?;
    let tg = TimeGrid::new(cfg.horizon, cfg.time_steps)?;
    let stencil = Arc::new(Stencil::coordinate(cfg.dimension));
    let dc = build_discrete_from_continuous(c, &stencil, &grid, &tg)?;
    Ok(SchemeProblem::from_continuous(c, dc, grid, tg)?)
}

fn noise_for(
    cfg: &ExperimentConfig,
    tg: &TimeGrid<f64>,
    m: usize,
) -> Result<NoisePath<f64>, HarnessError> {
    let path = if cfg.zero_noise {
        zero_noise(tg, cfg.noise_dim)
    } else {
        sample_increments(tg, cfg.noise_dim, path_seed(cfg.seed, m))?
    };
    if let Some(dir) = &cfg.dump_paths {
        let dir = std::path::Path::new(dir);
        std::fs::create_dir_all(dir).map_err(NoiseError::Io)?;
        let file =
            std::fs::File::create(dir.join(format!("path_{m:04}.bin"))).map_err(NoiseError::Io)?;
        spde_core::noise::write_path(&path, std::io::BufWriter::new(file))?;
    }
    Ok(path)
}

/// Runs the assumption validators: parabolicity of the continuous and the
/// built discrete coefficients, the consistency-identity sweep, and the
/// sampled boundedness values. Failures are carried in the report, not
/// raised as errors.
pub fn run_validation(cfg: &ExperimentConfig) -> Result<ValidationReport, HarnessError> {
    let c = cfg.to_continuous()?;
    let mut entries = Vec::new();

    let lens = vec![cfg.side_length; cfg.dimension];
    let cont_samples: Vec<(f64, Vec<f64>)> = if c.coefficients_constant_in_x() {
        vec![(0.0, vec![0.0; cfg.dimension])]
    } else {
        quasi_random_cloud(cfg.horizon, &lens, 1000)
    };
    let cont = check_parabolicity_continuous(&c, &cont_samples, cfg.kappa)?;
    entries.push(ValidationEntry {
        name: "continuous_parabolicity_margin".into(),
        pass: cont.pass,
        value: cont.margin,
        threshold: cfg.kappa,
    });
    let (a_max, b_max) = c.max_abs_at(&cont_samples);
    entries.push(ValidationEntry {
        name: "continuous_bound_max_abs_a".into(),
        pass: a_max.is_finite(),
        value: a_max,
        threshold: f64::INFINITY,
    });
    entries.push(ValidationEntry {
        name: "continuous_bound_max_abs_b".into(),
        pass: b_max.is_finite(),
        value: b_max,
        threshold: f64::INFINITY,
    });

    let tg = TimeGrid::new(cfg.horizon, cfg.time_steps)?;
    for &n_x in &cfg.resolutions {
        let grid = TorusGrid::cube(cfg.dimension, cfg.side_length, n_x)?;
        let stencil = Arc::new(Stencil::coordinate(cfg.dimension));
        let dc = build_discrete_from_continuous(&c, &stencil, &grid, &tg)?;
        let disc_samples: Vec<(usize, usize)> = if dc.constant_in_x() && dc.time_invariant() {
            vec![(0, 0)]
        } else {
            let stride = (grid.point_count() * (cfg.time_steps + 1) / 4096).max(1);
            (0..=cfg.time_steps)
                .flat_map(|i| (0..grid.point_count()).map(move |p| (i, p)))
                .step_by(stride)
                .collect()
        };
        let disc = check_parabolicity_discrete(&dc, &disc_samples, cfg.kappa)?;
        entries.push(ValidationEntry {
            name: format!("discrete_parabolicity_margin_nx{n_x}"),
            pass: disc.pass,
            value: disc.margin,
            threshold: cfg.kappa,
        });
        let mut worst = 0.0f64;
        for &(step, flat) in &disc_samples {
            let r = consistency_residual(&dc, &c, &grid, &tg, step, flat);
            worst = worst.max(r.max());
        }
        entries.push(ValidationEntry {
            name: format!("consistency_residual_nx{n_x}"),
            pass: worst <= 1e-12,
            value: worst,
            threshold: 1e-12,
        });
        let (da_max, db_max) = dc.max_abs_at(&disc_samples);
        entries.push(ValidationEntry {
            name: format!("discrete_bound_max_abs_a_nx{n_x}"),
            pass: da_max.is_finite(),
            value: da_max,
            threshold: f64::INFINITY,
        });
        entries.push(ValidationEntry {
            name: format!("discrete_bound_max_abs_b_nx{n_x}"),
            pass: db_max.is_finite(),
            value: db_max,
            threshold: f64::INFINITY,
        });
    }

    let pass = entries.iter().all(|e| e.pass);
    Ok(ValidationReport {
        entries,
        pass,
        config_echo: cfg.source_text.clone(),
    })
}

/// Per-path, per-level squared errors.
struct PathOutcome {
    per_level: Vec<[f64; 4]>, // sup², l2², diff_sup², diff_l2²
    fingerprint: u64,
}

struct Accumulator {
    sum: Vec<[f64; 4]>,
    sumsq: Vec<[f64; 4]>,
    paths: usize,
    fingerprint: u64,
}

impl Accumulator {
    fn new(levels: usize) -> Self {
        Self {
            sum: vec![[0.0; 4]; levels],
            sumsq: vec![[0.0; 4]; levels],
            paths: 0,
            fingerprint: 0,
        }
    }

    fn add(&mut self, outcome: &PathOutcome) {
        for (lvl, errs) in outcome.per_level.iter().enumerate() {
            for (k, &e) in errs.iter().enumerate() {
                self.sum[lvl][k] += e;
                self.sumsq[lvl][k] += e * e;
            }
        }
        self.paths += 1;
        self.fingerprint = fold_fingerprint(self.fingerprint, outcome.fingerprint);
    }

    /// (mean of squares, standard error of that mean) per statistic.
    fn mean_se(&self, lvl: usize, k: usize) -> (f64, f64) {
        let m = self.paths as f64;
        let mean = self.sum[lvl][k] / m;
        if self.paths < 2 {
            return (mean, 0.0);
        }
        let var = ((self.sumsq[lvl][k] - m * mean * mean) / (m - 1.0)).max(0.0);
        (mean, (var / m).sqrt())
    }
}

fn stat_rows(acc: &Accumulator, lvl: usize, with_diff: bool) -> Vec<StatValue> {
    let names = ["sup", "l2", "diff_sup", "diff_l2"];
    let take = if with_diff { 4 } else { 2 };
    let mut out = Vec::new();
    for (k, base) in names.iter().enumerate().take(take) {
        let (mean, se) = acc.mean_se(lvl, k);
        let rms = mean.sqrt();
        let se_rms = if rms > 0.0 { se / (2.0 * rms) } else { 0.0 };
        out.push(StatValue {
            name: format!("{base}_mean_square"),
            value: mean,
            std_error: se,
        });
        out.push(StatValue {
            name: format!("{base}_rms"),
            value: rms,
            std_error: se_rms,
        });
    }
    out
}

fn fit_slopes(
    levels: &[LevelReport],
    statistics: &[&str],
    floor: f64,
) -> Result<(Vec<SlopeReport>, Vec<bool>), HarnessError> {
    let floored: Vec<bool> = levels
        .iter()
        .map(|lvl| {
            lvl.stats
                .iter()
                .find(|s| s.name == "sup_rms")
                .map(|s| s.value <= floor)
                .unwrap_or(false)
        })
        .collect();
    let usable: Vec<usize> = (0..levels.len()).filter(|&i| !floored[i]).collect();
    if usable.len() < 3 {
        return Err(HarnessError::FlooredOut {
            got: usable.len(),
            want: 3,
        });
    }
    let mut slopes = Vec::new();
    for stat in statistics {
        let pairs: Vec<(f64, f64)> = usable
            .iter()
            .filter_map(|&i| {
                levels[i]
                    .stats
                    .iter()
                    .find(|s| s.name == *stat)
                    .map(|s| (levels[i].h, s.value))
            })
            .collect();
        let fit = estimate_order(&pairs)?;
        slopes.push(SlopeReport {
            statistic: stat.to_string(),
            slope: fit.slope,
            pair_orders: fit.pair_orders,
        });
    }
    Ok((slopes, floored))
}

fn chunk(paths: usize) -> usize {
    (paths / 16).max(1)
}

/// Acceleration study: for each configured base level `h`, the meshes
/// `h, h/2, ..., h/2^k` are solved with one shared noise path per sample
/// path, combined with the extrapolation weights, and compared with the
/// time-scheme reference on the base grid; the fitted order of
/// `sqrt(E max_i sup_x |v̄^h − v^{(0)}|²)` must reach `k + 1 − 0.3`.
pub fn run_acceleration_study(cfg: &ExperimentConfig) -> Result<ConvergenceReport, HarnessError> {
    let c = cfg.to_continuous()?;
    let validation = run_validation(cfg)?;
    if !validation.pass {
        return Err(HarnessError::ValidatorsFailed(Box::new(validation)));
    }
    let k = cfg.order;
    let weights: RichardsonWeights<f64> = vandermonde_weights(k)?;
    let spectral_reference = c.coefficients_constant_in_x();

    // distinct meshes across all levels and refinement stages
    let mut mesh_set: BTreeMap<usize, ()> = BTreeMap::new();
    for &res in &cfg.resolutions {
        for j in 0..=k {
            mesh_set.insert(res << j, ());
        }
    }
    let meshes: Vec<usize> = mesh_set.into_keys().collect();
    let problems: Vec<SchemeProblem<f64>> = meshes
        .iter()
        .map(|&n_x| build_problem(&c, cfg, n_x))
        .collect::<Result<_, _>>()?;
    let tg = *problems[0].time_grid();

    let mut warnings = Vec::new();
    for (p, &n_x) in problems.iter().zip(&meshes) {
        if let Some(w) = p.tau_warning() {
            warnings.push(format!("mesh n_x = {n_x}: {w}"));
        }
    }
    if !spectral_reference {
        warnings.push(
            "variable coefficients: reference is the finest-level extrapolant (self-convergence heuristic), whose own level is excluded from the fit"
                .to_string(),
        );
    }

    let mut proto_steppers: Vec<SchemeStepper<f64>> = problems
        .iter()
        .map(|p| SchemeStepper::new(p, solver_config(cfg)))
        .collect::<Result<_, _>>()?;
    for s in &mut proto_steppers {
        s.warm_up()?;
    }

    let mesh_index = |n_x: usize| meshes.binary_search(&n_x).expect("mesh present");
    let finest_level = *cfg.resolutions.last().expect("validated nonempty");
    let diff_stats = cfg.dimension == 1;
    let e1: Vec<i64> = {
        let mut v = vec![0i64; cfg.dimension];
        v[0] = 1;
        v
    };
    let stencil = Stencil::coordinate(cfg.dimension);
    let diff_tuple = OffsetTuple::new(&stencil, &[&e1]).expect("coordinate offset");

    let outcomes: Vec<Result<PathOutcome, HarnessError>> = (0..cfg.paths)
        .into_par_iter()
        .with_min_len(chunk(cfg.paths))
        .map_init(
            || proto_steppers.clone(),
            |steppers, m| -> Result<PathOutcome, HarnessError> {
                let noise = noise_for(cfg, &tg, m)?;
                let solved: Vec<Trajectory<f64>> = steppers
                    .iter_mut()
                    .map(|s| s.solve_trajectory(&noise))
                    .collect::<Result<_, _>>()?;

                // self-convergence reference: extrapolant at the finest level
                let heuristic_reference = if spectral_reference {
                    None
                } else {
                    let trajs: Vec<Trajectory<f64>> = (0..=k)
                        .map(|j| solved[mesh_index(finest_level << j)].clone())
                        .collect();
                    Some(extrapolate(&trajs, &weights)?)
                };

                let mut per_level = Vec::with_capacity(cfg.resolutions.len());
                for &res in &cfg.resolutions {
                    let trajs: Vec<Trajectory<f64>> = (0..=k)
                        .map(|j| solved[mesh_index(res << j)].clone())
                        .collect();
                    let vbar = extrapolate(&trajs, &weights)?;
                    let reference = match &heuristic_reference {
                        None => {
                            let grid = vbar.grid().clone();
                            solve_time_scheme_modes(&c, &grid, &tg, &noise)?
                                .to_trajectory(&SpectralSpace::new(grid))?
                        }
                        Some(fine_ref) => {
                            let factor = finest_level / res;
                            fine_ref.restrict_to_coarser(factor.trailing_zeros() as usize)?
                        }
                    };
                    let sup = vbar.max_sup_distance(&reference)?;
                    let l2 = vbar.max_l2_distance(&reference)?;
                    let (dsup, dl2) = if diff_stats {
                        let h = vbar.grid().spacing();
                        let dv = extrapolated_difference(&vbar, &diff_tuple, h)?;
                        let dr = extrapolated_difference(&reference, &diff_tuple, h)?;
                        (dv.max_sup_distance(&dr)?, dv.max_l2_distance(&dr)?)
                    } else {
                        (0.0, 0.0)
                    };
                    per_level.push([sup * sup, l2 * l2, dsup * dsup, dl2 * dl2]);
                }
                Ok(PathOutcome {
                    per_level,
                    fingerprint: noise.fingerprint(),
                })
            },
        )
        .collect();

    let mut acc = Accumulator::new(cfg.resolutions.len());
    for outcome in outcomes {
        acc.add(&outcome?);
    }

    let levels: Vec<LevelReport> = cfg
        .resolutions
        .iter()
        .enumerate()
        .map(|(idx, &n_x)| LevelReport {
            level_index: idx,
            n_x,
            h: cfg.side_length / n_x as f64,
            floored: false,
            stats: stat_rows(&acc, idx, diff_stats),
        })
        .collect();

    let floor = 10.0 * cfg.tolerance;
    let stat_names: Vec<&str> = if diff_stats {
        vec!["sup_rms", "l2_rms", "diff_sup_rms", "diff_l2_rms"]
    } else {
        vec!["sup_rms", "l2_rms"]
    };
    let (slopes, floored) = fit_slopes(&levels, &stat_names, floor)?;
    let mut levels = levels;
    for (lvl, fl) in levels.iter_mut().zip(&floored) {
        lvl.floored = *fl;
    }

    let threshold = (k + 1) as f64 - 0.3;
    let sup_slope = slopes
        .iter()
        .find(|s| s.statistic == "sup_rms")
        .expect("sup fit present")
        .slope;
    Ok(ConvergenceReport {
        study: "accelerate".into(),
        reference: if spectral_reference {
            "spectral-exact".into()
        } else {
            "self-convergence-heuristic".into()
        },
        order: k,
        paths: cfg.paths,
        seed: cfg.seed,
        noise_fingerprint: format!("{:016x}", acc.fingerprint),
        levels,
        slopes,
        pass: sup_slope >= threshold,
        pass_rule: format!("sup_rms slope >= {threshold}"),
        warnings,
        config_echo: cfg.source_text.clone(),
    })
}

/// Expansion-remainder study: per path and mesh, the scheme solution is
/// compared with `ν^{(0)} + Σ_{j≤k} (h^j/j!) ν^{(j)}` built from the
/// correction system; the fitted order of `sqrt(E max_i sup_x |R^{τ,h}|²)`
/// must reach `k + 1 − 0.3`.
pub fn run_expansion_study(cfg: &ExperimentConfig) -> Result<ConvergenceReport, HarnessError> {
    let c = cfg.to_continuous()?;
    if !c.coefficients_constant_in_x() {
        return Err(HarnessError::NeedsConstantCoefficients(
            "the expansion study",
        ));
    }
    let k = cfg.order;
    if k > MAX_CORRECTION_ORDER {
        return Err(HarnessError::ExpansionOrderTooLarge(k));
    }
    let validation = run_validation(cfg)?;
    if !validation.pass {
        return Err(HarnessError::ValidatorsFailed(Box::new(validation)));
    }

    let problems: Vec<SchemeProblem<f64>> = cfg
        .resolutions
        .iter()
        .map(|&n_x| build_problem(&c, cfg, n_x))
        .collect::<Result<_, _>>()?;
    let tg = *problems[0].time_grid();
    let mut warnings = Vec::new();
    for (p, &n_x) in problems.iter().zip(&cfg.resolutions) {
        if let Some(w) = p.tau_warning() {
            warnings.push(format!("mesh n_x = {n_x}: {w}"));
        }
    }

    let mut proto_steppers: Vec<SchemeStepper<f64>> = problems
        .iter()
        .map(|p| SchemeStepper::new(p, solver_config(cfg)))
        .collect::<Result<_, _>>()?;
    for s in &mut proto_steppers {
        s.warm_up()?;
    }

    let outcomes: Vec<Result<PathOutcome, HarnessError>> = (0..cfg.paths)
        .into_par_iter()
        .with_min_len(chunk(cfg.paths))
        .map_init(
            || proto_steppers.clone(),
            |steppers, m| -> Result<PathOutcome, HarnessError> {
                let noise = noise_for(cfg, &tg, m)?;
                let mut per_level = Vec::with_capacity(cfg.resolutions.len());
                for (idx, stepper) in steppers.iter_mut().enumerate() {
                    let problem = &problems[idx];
                    let vh = stepper.solve_trajectory(&noise)?;
                    let grid = problem.grid().clone();
                    let nu0 = solve_time_scheme_modes(&c, &grid, &tg, &noise)?;
                    let corr =
                        solve_correction_system(k, &c, problem.coefficients(), &noise, &nu0)?;
                    let space = SpectralSpace::new(grid.clone());
                    let nu0_phys = nu0.to_trajectory(&space)?;
                    let r = remainder(&vh, &nu0_phys, &corr, grid.spacing(), k)?;
                    let sup = r.max_sup_norm();
                    let l2 = r.max_l2_norm();
                    per_level.push([sup * sup, l2 * l2, 0.0, 0.0]);
                }
                Ok(PathOutcome {
                    per_level,
                    fingerprint: noise.fingerprint(),
                })
            },
        )
        .collect();

    let mut acc = Accumulator::new(cfg.resolutions.len());
    for outcome in outcomes {
        acc.add(&outcome?);
    }

    let levels: Vec<LevelReport> = cfg
        .resolutions
        .iter()
        .enumerate()
        .map(|(idx, &n_x)| LevelReport {
            level_index: idx,
            n_x,
            h: cfg.side_length / n_x as f64,
            floored: false,
            stats: stat_rows(&acc, idx, false),
        })
        .collect();

    let floor = 10.0 * cfg.tolerance;
    let (slopes, floored) = fit_slopes(&levels, &["sup_rms", "l2_rms"], floor)?;
    let mut levels = levels;
    for (lvl, fl) in levels.iter_mut().zip(&floored) {
        lvl.floored = *fl;
    }

    let threshold = (k + 1) as f64 - 0.3;
    let sup_slope = slopes
        .iter()
        .find(|s| s.statistic == "sup_rms")
        .expect("sup fit present")
        .slope;
    Ok(ConvergenceReport {
        study: "expansion".into(),
        reference: "correction-system".into(),
        order: k,
        paths: cfg.paths,
        seed: cfg.seed,
        noise_fingerprint: format!("{:016x}", acc.fingerprint),
        levels,
        slopes,
        pass: sup_slope >= threshold,
        pass_rule: format!("sup_rms slope >= {threshold}"),
        warnings,
        config_echo: cfg.source_text.clone(),
    })
}

/// Taylor-remainder battery on the configured initial datum: per order
/// `p ∈ {0,1,2}` the single-difference remainder must sit below its
/// closed-form bound, and the double-difference remainder (with distinct
/// offsets, the generic case) must shrink by `2^{p+1}` per mesh halving
/// within the `[2^{p+0.8}, 2^{p+1.2}]` window.
pub fn run_taylor_study(cfg: &ExperimentConfig) -> Result<TaylorReport, HarnessError> {
    let c = cfg.to_continuous()?;
    let mut entries = Vec::new();
    let lambda: Vec<i64> = {
        let mut v = vec![0i64; cfg.dimension];
        v[0] = 1;
        v
    };
    // distinct second offset keeps every expansion order genuinely nonzero
    let mu: Vec<i64> = {
        let mut v = vec![0i64; cfg.dimension];
        if cfg.dimension == 1 {
            v[0] = 2;
        } else {
            v[1] = 1;
        }
        v
    };

    for p in 0..=2usize {
        let mut doubles = Vec::new();
        for &n_x in &cfg.resolutions {
            let grid = TorusGrid::cube(cfg.dimension, cfg.side_length, n_x)?;
            let h = grid.spacing();
            let phi = GridFunction::sample(grid, |x| c.u0(x));
            let single = taylor_remainder_check(&phi, &lambda, None, h, p)?;
            let bound = single.bound.expect("single difference carries a bound");
            entries.push(TaylorEntry {
                name: format!("single_p{p}_nx{n_x}"),
                pass: single.measured <= bound * (1.0 + 1e-6),
                value: single.measured,
                lower: 0.0,
                upper: bound * (1.0 + 1e-6),
            });
            let double = taylor_remainder_check(&phi, &lambda, Some(&mu), h, p)?;
            doubles.push((n_x, double.measured));
        }
        for w in doubles.windows(2) {
            let (n0, r0) = w[0];
            let (n1, r1) = w[1];
            // only meaningful for exact mesh halvings
            if n1 != 2 * n0 || r1 == 0.0 {
                continue;
            }
            let ratio = r0 / r1;
            let lo = 2f64.powf(p as f64 + 0.8);
            let hi = 2f64.powf(p as f64 + 1.2);
            entries.push(TaylorEntry {
                name: format!("double_p{p}_ratio_nx{n0}_to_nx{n1}"),
                pass: ratio >= lo && ratio <= hi,
                value: ratio,
                lower: lo,
                upper: hi,
            });
        }
    }
    let pass = entries.iter().all(|e| e.pass);
    Ok(TaylorReport {
        entries,
        pass,
        config_echo: cfg.source_text.clone(),
    })
}
