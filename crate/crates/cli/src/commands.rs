//! One function per subcommand.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use analog_portfolio::autoencoder::{
    backprop_reference_train, clip_audit, extract_factor_model, latent_covariance, EpTrainer,
    TrainTrace,
};
use analog_portfolio::frontier::{
    max_sharpe_point, min_variance_point, point_json, sharpe_ratio, sweep_frontier, SweepOptions,
};
use analog_portfolio::hopfield::solve_portfolio;
use analog_portfolio::lowrank::{estimate_psi, frobenius_gap, residual, svd_lowrank, FactorModel};
use analog_portfolio::market_data::{
    demean, generate_synthetic_returns, load_returns, mean_returns, sample_covariance,
    save_returns, ReturnsMatrix,
};
use analog_portfolio::table::{default_labels, read_labeled_rows, write_labeled_rows};
use analog_portfolio::{linalg, CovarianceEstimate, ExpectedReturns, Provenance};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::json;

use crate::config::{Method, PipelineConfig};
use crate::error::{CliError, StageExt};
use crate::output::OutputDir;

/// Fraction of frontier points that must solve for a zero exit code.
pub const MIN_SOLVED_FRACTION: f64 = 0.9;

fn open(stage: &str, path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::usage(stage, format!("{}: {e}", path.display())))
}

fn tagged<T>(stage: &str, path: &Path, r: analog_portfolio::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| match CliError::from_core(stage, e) {
        CliError::Usage { stage, message } => CliError::Usage {
            stage,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

fn require_input(cfg: &PipelineConfig) -> Result<&Path, CliError> {
    cfg.input
        .as_deref()
        .ok_or_else(|| CliError::usage("input", "--input is required"))
}

pub fn read_returns(path: &Path) -> Result<ReturnsMatrix, CliError> {
    tagged("input", path, load_returns(open("input", path)?))
}

/// Square labeled CSV.
pub fn read_covariance(path: &Path) -> Result<(Vec<String>, CovarianceEstimate), CliError> {
    let (labels, m) = tagged("covariance", path, read_labeled_rows(open("covariance", path)?))?;
    if m.nrows() != m.ncols() {
        return Err(CliError::usage(
            "covariance",
            format!("{}: {} rows for {} columns", path.display(), m.nrows(), m.ncols()),
        ));
    }
    let sigma = tagged("covariance", path, CovarianceEstimate::new(m, Provenance::Sample))?;
    Ok((labels, sigma))
}

/// Labeled CSV with a single data row.
pub fn read_expected_returns(path: &Path) -> Result<ExpectedReturns, CliError> {
    let stage = "expected-returns";
    let (_, m) = tagged(stage, path, read_labeled_rows(open(stage, path)?))?;
    if m.nrows() != 1 {
        return Err(CliError::usage(
            stage,
            format!("{}: expected one data row, found {}", path.display(), m.nrows()),
        ));
    }
    tagged(stage, path, ExpectedReturns::from_slice(m.row(0).transpose().as_slice()))
}

fn write_matrix(out: &mut OutputDir, name: &str, labels: &[String], m: &DMatrix<f64>) -> Result<(), CliError> {
    out.emit(name, |buf| write_labeled_rows(buf, labels, m))
}

/// Covariance and expected returns for `solve` and `frontier`: explicit
/// files win, otherwise both are estimated from `--input`.
fn market_inputs(cfg: &PipelineConfig) -> Result<(CovarianceEstimate, ExpectedReturns), CliError> {
    let returns = match &cfg.input {
        Some(p) => Some(read_returns(p)?),
        None => None,
    };
    let sigma = match (&cfg.covariance, &returns) {
        (Some(p), _) => read_covariance(p)?.1,
        (None, Some(r)) => sample_covariance(&demean(r)).stage("covariance")?,
        (None, None) => {
            return Err(CliError::usage("input", "need --covariance or --input"));
        }
    };
    let mu = match (&cfg.expected_returns, &returns) {
        (Some(p), _) => read_expected_returns(p)?,
        (None, Some(r)) => mean_returns(r).stage("expected-returns")?,
        (None, None) => {
            return Err(CliError::usage("input", "need --expected-returns or --input"));
        }
    };
    if mu.len() != sigma.dim() {
        return Err(CliError::usage(
            "input",
            format!("{} expected returns for a {}x{} covariance", mu.len(), sigma.dim(), sigma.dim()),
        ));
    }
    Ok((sigma, mu))
}

pub fn synth(cfg: &PipelineConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let s = &cfg.synth;
    let r = s.latent_std.len();
    if s.n == 0 || r == 0 || s.samples == 0 {
        return Err(CliError::usage("synth", "n, samples and latent_std must be non-empty"));
    }
    if !(s.drift_low <= s.drift_high) {
        return Err(CliError::usage("synth", "drift_low must not exceed drift_high"));
    }
    let loading = Normal::new(0.0, s.loading_std)
        .map_err(|e| CliError::usage("synth", format!("loading_std: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let a = DMatrix::from_fn(s.n, r, |_, _| loading.sample(&mut rng));
    let drift = DVector::from_fn(s.n, |_, _| {
        if s.drift_low < s.drift_high {
            rng.random_range(s.drift_low..s.drift_high)
        } else {
            s.drift_low
        }
    });
    let p = DMatrix::from_diagonal(&DVector::from_iterator(r, s.latent_std.iter().map(|v| v * v)));
    let noise = DVector::from_element(s.n, s.noise_std);

    let returns = out.timed("generate", || {
        generate_synthetic_returns(&a, &p, &noise, s.samples, s.seed)
    });
    let returns = returns.stage("synth")?;
    let mut values = returns.values().clone();
    for mut col in values.column_iter_mut() {
        col += &drift;
    }
    let tickers = default_labels(s.n);
    let returns = ReturnsMatrix::new(values, tickers.clone()).stage("synth")?;
    let truth = FactorModel::new(a, p, noise.map(|v| v * v), None).stage("synth")?;

    out.emit("returns.csv", |buf| save_returns(&returns, buf))?;
    out.emit("truth_model.json", |buf| truth.write_json(buf))?;
    let drift_row = DMatrix::from_row_slice(1, s.n, drift.as_slice());
    write_matrix(out, "expected_returns.csv", &tickers, &drift_row)?;
    Ok(())
}

pub fn covariance(cfg: &PipelineConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let path = require_input(cfg)?;
    let returns = read_returns(path)?;
    let sigma = out.timed("covariance", || sample_covariance(&demean(&returns)));
    let sigma = sigma.stage("covariance")?;
    let (lo, hi) = linalg::eigen_range(sigma.matrix()).stage("covariance")?;
    write_matrix(out, "sample_cov.csv", returns.tickers(), sigma.matrix())?;
    out.emit_json(
        "summary.json",
        &json!({
            "n": returns.n_assets(),
            "N": returns.n_samples(),
            "min_eigenvalue": lo,
            "max_eigenvalue": hi,
        }),
    )
}

struct Fitted {
    model: FactorModel,
    trace: TrainTrace,
    provenance: Provenance,
    extra: serde_json::Value,
}

fn fit(cfg: &PipelineConfig, x: &ReturnsMatrix, s: &DMatrix<f64>) -> Result<Fitted, CliError> {
    let n = x.n_assets();
    let r = cfg.rank;
    match cfg.method {
        Method::Svd => {
            let approx = svd_lowrank(s, r).stage("factor/svd")?;
            let (a, p) = approx.factors();
            let psi = estimate_psi(s, &approx.matrix).stage("factor/svd")?;
            Ok(Fitted {
                model: FactorModel::new(a, p, psi, None).stage("factor/svd")?,
                trace: TrainTrace::default(),
                provenance: Provenance::LowrankSvd,
                extra: json!({}),
            })
        }
        Method::Bp => {
            let bp = &cfg.bp;
            let res = backprop_reference_train(x.values(), r, bp.epochs, bp.eta, bp.seed)
                .stage("factor/bp")?;
            let p = latent_covariance(&(&res.encoder * x.values())).stage("factor/bp")?;
            let m = analog_portfolio::autoencoder::lowrank_from_autoencoder(&res.loadings, &p)
                .stage("factor/bp")?;
            let psi = estimate_psi(s, &m).stage("factor/bp")?;
            Ok(Fitted {
                model: FactorModel::new(res.loadings, p, psi, Some(res.encoder))
                    .stage("factor/bp")?,
                trace: res.trace,
                provenance: Provenance::LowrankBp,
                extra: json!({}),
            })
        }
        Method::Ep => {
            let mut trainer = EpTrainer::new(n, r, cfg.ep.clone()).stage("factor/ep")?;
            trainer.train(x.values(), cfg.ep.epochs).stage("factor/ep")?;
            let model = extract_factor_model(&trainer.net, x.values(), s).stage("factor/ep")?;
            let audit = clip_audit(&trainer.net, x.values(), &cfg.ep).stage("factor/ep")?;
            if !audit.is_clean() {
                log::warn!("{} units exceeded the clip bound", audit.clipped.len());
            }
            Ok(Fitted {
                model,
                trace: trainer.trace,
                provenance: Provenance::LowrankEp,
                extra: json!({
                    "clip_max_abs": audit.max_abs,
                    "clipped_units": audit.clipped.len(),
                }),
            })
        }
    }
}

pub fn factor(cfg: &PipelineConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let path = require_input(cfg)?;
    let x = demean(&read_returns(path)?);
    let s = sample_covariance(&x).stage("factor/covariance")?.into_matrix();
    let fitted = out.timed("train", || fit(cfg, &x, &s))?;
    let model = &fitted.model;
    model.validate().stage("factor/validate")?;
    let m = model.low_rank();
    let sigma = model.covariance(fitted.provenance).stage("factor/assemble")?;
    let gap = frobenius_gap(&s, &m, &model.psi).stage("factor/assemble")?.sqrt();
    let resid = residual(&s, &m, &model.psi).stage("factor/assemble")?.abs();

    out.emit("factor_model.json", |buf| model.write_json(buf))?;
    write_matrix(out, "lowrank_cov.csv", x.tickers(), sigma.matrix())?;
    out.emit("loss_trace.csv", |buf| fitted.trace.write_csv(buf))?;
    write_matrix(out, "residual.csv", x.tickers(), &resid)?;
    let mut summary = json!({
        "method": cfg.method.to_string(),
        "provenance": fitted.provenance.to_string(),
        "r": cfg.rank,
        "frobenius_gap": gap,
        "final_loss": fitted.trace.final_loss(),
    });
    if let (Some(obj), Some(extra)) = (summary.as_object_mut(), fitted.extra.as_object()) {
        obj.extend(extra.clone());
    }
    out.emit_json("summary.json", &summary)
}

pub fn solve(cfg: &PipelineConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let target = cfg
        .target
        .ok_or_else(|| CliError::usage("solve", "--target is required"))?;
    let (sigma, mu) = market_inputs(cfg)?;
    let sc = &cfg.solver;
    let portfolio = out.timed("solve", || {
        solve_portfolio(&sigma, &mu, target, sc.lambda1, sc.lambda2, &sc.options())
    });
    let portfolio = portfolio.stage("solve")?;
    let sharpe = sharpe_ratio(&portfolio.weights_vector(), mu.as_vector(), sigma.matrix()).ok();
    out.emit_json(
        "portfolio.json",
        &json!({
            "R": target,
            "w": portfolio.weights,
            "achieved_return": portfolio.achieved_return,
            "variance": portfolio.variance,
            "sharpe": sharpe,
            "return_residual": portfolio.return_residual,
            "budget_residual": portfolio.budget_residual,
        }),
    )
}

pub fn frontier(cfg: &PipelineConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let sw = &cfg.sweep;
    if sw.steps < 2 {
        return Err(CliError::usage(
            "frontier",
            format!("steps must be >= 2, got {}", sw.steps),
        ));
    }
    let (sigma, mu) = market_inputs(cfg)?;
    let r_min = sw.r_min.unwrap_or_else(|| mu.min());
    let r_max = sw.r_max.unwrap_or_else(|| mu.max());
    let sc = &cfg.solver;
    let mut opts = SweepOptions::new(sc.options(), sc.lambda1, sc.lambda2);
    opts.warm_start = sw.warm_start;
    let curve = out.timed("sweep", || sweep_frontier(&sigma, &mu, r_min, r_max, sw.steps, &opts));
    let curve = curve.stage("frontier")?;

    out.emit("frontier.csv", |buf| curve.write_csv(buf))?;
    out.emit_json("frontier.json", &curve.to_json())?;
    let solved = curve.points.iter().filter(|p| p.portfolio.is_some()).count();
    let total = curve.points.len();
    out.emit_json(
        "summary.json",
        &json!({
            "points": total,
            "solved": solved,
            "min_variance": min_variance_point(&curve).ok().map(point_json),
            "max_sharpe": max_sharpe_point(&curve).ok().map(point_json),
        }),
    )?;
    if (solved as f64) < MIN_SOLVED_FRACTION * total as f64 {
        return Err(CliError::numeric(
            "frontier",
            format!("only {solved} of {total} frontier points solved"),
        ));
    }
    Ok(())
}
