use std::path::{Path, PathBuf};

use brl_core::annulus::{green, robin, robin_radial, AnnulusGeometry, EvalResult};
use brl_core::bubbles::{ansatz_profile, SliceGrid};
use brl_core::reduced::{
    critical_search, hessian_report, residual_c0, solve_d_lambda, HessianReport, ResidualReport,
    SearchControl, StopReason,
};
use brl_core::ring::{min_over_r, threshold_rho, RingModel, ThresholdControl};
use brl_core::{lambda1_gradient, Point4, SeriesControl};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{series_control, ExperimentConfig, MAX_TERMS_ENV};
use crate::output::{csv, pretty, versioned};
use crate::record::{write_output, OutputEntry};
use crate::{CliError, Command, ModelArg, SeriesArgs};

const MAX_TERMS_CEILING: usize = 1 << 18;

/// What a command produced.
pub struct Done {
    pub stdout: Option<String>,
    pub outputs: Vec<OutputEntry>,
    /// Inputs after defaults and overrides were applied.
    pub resolved: Value,
    /// Set when results were written but a computation did not converge.
    pub failure: Option<String>,
}

impl Done {
    fn stdout(text: String, resolved: Value) -> Self {
        Self {
            stdout: Some(text),
            outputs: Vec::new(),
            resolved,
            failure: None,
        }
    }
}

pub fn dispatch(cmd: &Command) -> Result<Done, CliError> {
    match cmd {
        Command::Green { rho, x, y, series } => cmd_green(*rho, x, y, series),
        Command::Robin { rho, x, r, series } => cmd_robin(*rho, *x, *r, series),
        Command::RingScan {
            k,
            rho,
            n,
            out,
            series,
        } => cmd_ring_scan(*k, *rho, *n, out, series),
        Command::Threshold {
            k,
            model,
            lo,
            hi,
            tol,
            resolution,
            series,
        } => cmd_threshold(*k, *model, (*lo, *hi), *tol, *resolution, series),
        Command::Reduce {
            config,
            epsilon,
            search,
            series,
        } => cmd_reduce(config, epsilon, *search, series),
        Command::Profile {
            config,
            epsilon,
            n,
            half_width,
            out,
            series,
        } => cmd_profile(config, *epsilon, *n, *half_width, out, series),
    }
}

fn ctrl_from(series: &SeriesArgs, fallback: SeriesControl) -> Result<SeriesControl, CliError> {
    series_control(series.max_terms, series.target_tol, fallback)
}

fn eval_json(value: &EvalResult, inputs: Value) -> String {
    let mut v = versioned(value);
    v["inputs"] = inputs;
    pretty(&v)
}

fn cmd_green(rho: f64, x: &Point4, y: &Point4, series: &SeriesArgs) -> Result<Done, CliError> {
    let ctrl = ctrl_from(series, SeriesControl::default())?;
    let geom = AnnulusGeometry::new(rho)?;
    let g = green(x, y, &geom, &ctrl)?;
    let resolved = json!({ "rho_in": rho, "x": x, "y": y, "series": ctrl });
    Ok(Done::stdout(eval_json(&g, resolved.clone()), resolved))
}

fn cmd_robin(
    rho: f64,
    x: Option<Point4>,
    r: Option<f64>,
    series: &SeriesArgs,
) -> Result<Done, CliError> {
    let ctrl = ctrl_from(series, SeriesControl::default())?;
    let geom = AnnulusGeometry::new(rho)?;
    let (value, resolved) = match (x, r) {
        (Some(x), _) => (
            robin(&x, &geom, &ctrl)?,
            json!({ "rho_in": rho, "x": x, "series": ctrl }),
        ),
        (None, Some(r)) => (
            robin_radial(r, &geom, &ctrl)?,
            json!({ "rho_in": rho, "r": r, "series": ctrl }),
        ),
        (None, None) => return Err(CliError::Usage("robin needs --x or --r".into())),
    };
    Ok(Done::stdout(eval_json(&value, resolved.clone()), resolved))
}

fn cmd_ring_scan(
    k: usize,
    rho: f64,
    n: usize,
    out: &Path,
    series: &SeriesArgs,
) -> Result<Done, CliError> {
    if n < 8 {
        return Err(CliError::Usage(format!("--n must be at least 8, got {n}")));
    }
    let mut ctrl = ctrl_from(
        series,
        SeriesControl {
            max_terms: 4000,
            target_tol: 1e-12,
        },
    )?;
    // Unless the term count was fixed, raise it until every radius reaches
    // the tolerance.
    let adaptive = series.max_terms.is_none() && std::env::var(MAX_TERMS_ENV).is_err();
    let geom = AnnulusGeometry::new(rho)?;
    let mut scan = min_over_r(k, &geom, &ctrl, n)?;
    while adaptive && scan.degraded_points > 0 && ctrl.max_terms < MAX_TERMS_CEILING {
        ctrl.max_terms *= 4;
        scan = min_over_r(k, &geom, &ctrl, n)?;
    }
    if scan.degraded_points > 0 {
        log::warn!(
            "{} of {} radii did not reach the series tolerance",
            scan.degraded_points,
            n
        );
    }
    let mut header: Vec<String> = vec!["r".into()];
    header.extend((1..=k).map(|l| format!("lambda_{l}")));
    header.push("tail_bound".into());
    if scan.perpendicular.is_some() {
        header.extend(
            ["g_perp_series", "g_perp_free_space", "lambda_1_free_space"].map(String::from),
        );
    }
    let rows = (0..scan.r_grid.len()).map(|i| {
        let mut row = vec![scan.r_grid[i]];
        row.extend(scan.lambda_by_ell.iter().map(|col| col[i]));
        row.push(scan.tail_bounds[i]);
        if let Some(p) = &scan.perpendicular {
            row.extend([p[i].g_series, p[i].g_free_space, p[i].lambda1_free_space]);
        }
        row
    });
    let entry = write_output(out, csv(&header, rows).as_bytes())?;
    let summary = json!({
        "schema_version": crate::SCHEMA_VERSION,
        "k": k,
        "rho_in": rho,
        "rows": scan.r_grid.len(),
        "out": out,
        "argmin_r": scan.argmin_r,
        "min_lambda1": scan.min_value,
        "min_tail_bound": scan.min_tail,
        "argmin_accuracy": scan.argmin_accuracy,
        "degraded_points": scan.degraded_points,
        "min_free_space": scan.min_free_space.map(|(r, v)| json!({ "r": r, "lambda1": v })),
    });
    Ok(Done {
        stdout: Some(pretty(&summary)),
        outputs: vec![entry],
        resolved: json!({ "k": k, "rho_in": rho, "n": n, "series": ctrl }),
        failure: None,
    })
}

fn cmd_threshold(
    k: usize,
    model: ModelArg,
    range: (f64, f64),
    tol: f64,
    resolution: usize,
    series: &SeriesArgs,
) -> Result<Done, CliError> {
    let base = ThresholdControl::default();
    let tc = ThresholdControl {
        range,
        tol,
        resolution,
        ctrl: ctrl_from(series, base.ctrl)?,
        ..base
    };
    let model = match model {
        ModelArg::Full => RingModel::FullSeries,
        ModelArg::FreeSpace => RingModel::FreeSpacePerpendicular,
    };
    let result = threshold_rho(k, model, &tc)?;
    let resolved = json!({ "k": k, "model": model, "control": tc });
    Ok(Done::stdout(pretty(&versioned(&result)), resolved))
}

/// Loads a config file and applies command-line series overrides.
fn load(
    path: &Path,
    series: &SeriesArgs,
) -> Result<(ExperimentConfig, brl_core::AnnulusGreen), CliError> {
    let mut file = ExperimentConfig::load(path)?;
    file.series.max_terms = series.max_terms.or(file.series.max_terms);
    file.series.target_tol = series.target_tol.or(file.series.target_tol);
    let oracle = file.oracle()?;
    Ok((file, oracle))
}

#[derive(Serialize)]
struct SearchSummary {
    initial_points: Vec<Point4>,
    iterations: usize,
    stop: StopReason,
    grad_norm: f64,
    constraint_hits: usize,
    history: Vec<f64>,
}

#[derive(Serialize)]
struct ReduceOutput {
    k: usize,
    rho_in: f64,
    points: Vec<Point4>,
    lambda: f64,
    d: Vec<f64>,
    det_check: f64,
    eig_residual: f64,
    tail_consistency: f64,
    spectrum: Vec<f64>,
    gap: f64,
    gradient: Vec<Point4>,
    gradient_norm: f64,
    /// `Σ_i ∇_i Λ₁ · ξ_i/|ξ_i|`
    gradient_radial: f64,
    hessian: HessianReport,
    search: Option<SearchSummary>,
    residuals: Vec<ResidualReport>,
}

fn check_epsilons(eps: &[f64]) -> Result<(), CliError> {
    match eps.iter().find(|&&e| !(e > 0.0 && e.is_finite())) {
        Some(bad) => Err(CliError::Usage(format!(
            "epsilon must be positive, got {bad}"
        ))),
        None => Ok(()),
    }
}

fn cmd_reduce(
    path: &Path,
    epsilon: &[f64],
    search: bool,
    series: &SeriesArgs,
) -> Result<Done, CliError> {
    let (file, oracle) = load(path, series)?;
    let mut config = file.configuration(&oracle)?;
    let eps = if epsilon.is_empty() {
        file.reduce.epsilon.clone()
    } else {
        epsilon.to_vec()
    };
    check_epsilons(&eps)?;
    let sc = SearchControl::default();
    let mut failure = None;
    let mut summary = None;
    if search || file.reduce.search {
        let rep = critical_search(&config, &oracle, &sc)?;
        if rep.stop != StopReason::Converged {
            failure = Some(format!(
                "critical search stopped ({:?}) with |∇Λ₁| = {:e} after {} iterations",
                rep.stop, rep.grad_norm, rep.iterations
            ));
        }
        summary = Some(SearchSummary {
            initial_points: config.points().to_vec(),
            iterations: rep.iterations,
            stop: rep.stop,
            grad_norm: rep.grad_norm,
            constraint_hits: rep.constraint_hits,
            history: rep.history,
        });
        config = rep.config;
    }
    let sol = solve_d_lambda(&config, &oracle)?;
    let gradient = lambda1_gradient(&config, &oracle)?;
    let gradient_norm = gradient.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    let gradient_radial = gradient
        .iter()
        .zip(config.points())
        .map(|(g, p)| {
            let r = p.iter().map(|c| c * c).sum::<f64>().sqrt();
            g.iter().zip(p).map(|(a, b)| a * b / r).sum::<f64>()
        })
        .sum();
    let hessian = hessian_report(&config, &oracle, &sc)?;
    let residuals = eps
        .iter()
        .map(|&e| residual_c0(&config, &sol.d, sol.lambda, e, &oracle))
        .collect::<Result<Vec<_>, _>>()?;
    let out = ReduceOutput {
        k: config.k(),
        rho_in: oracle.geom.rho_in(),
        points: config.points().to_vec(),
        lambda: sol.lambda,
        d: sol.d.clone(),
        det_check: sol.det_check,
        eig_residual: sol.eig_residual,
        tail_consistency: sol.tail_consistency,
        spectrum: sol.spectral.spectrum.clone(),
        gap: sol.spectral.gap,
        gradient,
        gradient_norm,
        gradient_radial,
        hessian,
        search: summary,
        residuals,
    };
    let resolved = json!({ "file": file, "epsilon": eps, "search": search || file.reduce.search, "series": oracle.ctrl });
    Ok(Done {
        stdout: Some(pretty(&versioned(&out))),
        outputs: Vec::new(),
        resolved,
        failure,
    })
}

fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

fn cmd_profile(
    path: &Path,
    epsilon: Option<f64>,
    n: Option<usize>,
    half_width: Option<f64>,
    out: &Path,
    series: &SeriesArgs,
) -> Result<Done, CliError> {
    let (mut file, oracle) = load(path, series)?;
    file.profile.epsilon = epsilon.or(file.profile.epsilon);
    file.profile.n = n.unwrap_or(file.profile.n);
    file.profile.half_width = half_width.unwrap_or(file.profile.half_width);
    file.validate()?;
    let eps = file.profile.epsilon.ok_or_else(|| {
        CliError::Usage("profile needs an epsilon (--epsilon or [profile] epsilon)".into())
    })?;
    let config = file.configuration(&oracle)?;
    let sol = solve_d_lambda(&config, &oracle)?;
    let grid = SliceGrid::square(file.profile.half_width, file.profile.n);
    let profile = ansatz_profile(&config, &sol, eps, &oracle, &grid)?;
    let header = ["x1", "x2", "x3", "x4", "W"].map(String::from);
    let rows = profile.samples.iter().map(|s| {
        let mut row = s.x.to_vec();
        row.push(s.w);
        row
    });
    let csv_entry = write_output(out, csv(&header, rows).as_bytes())?;
    let meta = json!({
        "schema_version": crate::SCHEMA_VERSION,
        "csv": out.file_name().map(|f| f.to_string_lossy().into_owned()),
        "csv_sha256": csv_entry.sha256,
        "columns": header,
        "rho_in": oracle.geom.rho_in(),
        "series": oracle.ctrl,
        "points": config.points(),
        "grid": { "x1": grid.x1, "x2": grid.x2, "n1": grid.n1, "n2": grid.n2, "x3": 0.0, "x4": 0.0 },
        "epsilon": profile.epsilon,
        "lambda": profile.lambda,
        "lambda1": profile.lambda1,
        "d": profile.d,
        "rates": profile.rates,
        "bubbles": profile.bubbles,
        "samples": profile.samples.len(),
        "skipped": profile.skipped,
        "dropped_bubbles": profile.dropped_bubbles,
    });
    let side = sidecar_path(out);
    let side_entry = write_output(&side, (pretty(&meta) + "\n").as_bytes())?;
    Ok(Done {
        stdout: None,
        outputs: vec![csv_entry, side_entry],
        resolved: json!({ "file": file, "series": oracle.ctrl }),
        failure: None,
    })
}
