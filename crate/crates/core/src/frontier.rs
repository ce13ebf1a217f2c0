//! Efficient-frontier sweeps, Sharpe ratios, and the two-asset closed form.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hopfield::{self, InitPolicy, SolverOptions};
use crate::market_data::{CovarianceEstimate, ExpectedReturns};
use crate::table::fmt_f64;

/// Long-only weights with their return, variance, and constraint residuals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portfolio {
    #[serde(rename = "w")]
    pub weights: Vec<f64>,
    pub achieved_return: f64,
    pub variance: f64,
    /// `|μ^T w - R|`
    pub return_residual: f64,
    /// `|1^T w - 1|`
    pub budget_residual: f64,
}

impl Portfolio {
    pub fn evaluate(
        weights: DVector<f64>,
        mu: &DVector<f64>,
        sigma: &DMatrix<f64>,
        target_return: f64,
    ) -> Self {
        let achieved_return = mu.dot(&weights);
        let variance = weights.dot(&(sigma * &weights)).max(0.0);
        Self {
            achieved_return,
            variance,
            return_residual: (achieved_return - target_return).abs(),
            budget_residual: (weights.sum() - 1.0).abs(),
            weights: weights.iter().copied().collect(),
        }
    }

    pub fn weights_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.weights)
    }
}

/// `μ^T w / sqrt(w^T Σ w)`.
pub fn sharpe_ratio(w: &DVector<f64>, mu: &DVector<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    if w.len() != mu.len() || sigma.nrows() != w.len() || sigma.ncols() != w.len() {
        return Err(Error::Dimension("weights, returns and covariance disagree".into()));
    }
    let variance = w.dot(&(sigma * w));
    if !(variance > 0.0) {
        return Err(Error::ZeroVariance);
    }
    Ok(mu.dot(w) / variance.sqrt())
}

/// Both equality constraints binding for two assets:
/// `w_B = (R - μ_A) / (μ_B - μ_A)`, `w_A = 1 - w_B`.
pub fn two_asset_analytic(mu: [f64; 2], sigma: [[f64; 2]; 2], target: f64) -> Result<Portfolio> {
    if mu[0] == mu[1] {
        return Err(Error::Contract("two-asset closed form needs distinct returns".into()));
    }
    let (low, high) = (mu[0].min(mu[1]), mu[0].max(mu[1]));
    if !(low..=high).contains(&target) {
        return Err(Error::Infeasible { target, low, high });
    }
    let w_b = (target - mu[0]) / (mu[1] - mu[0]);
    let w = DVector::from_vec(vec![1.0 - w_b, w_b]);
    Ok(Portfolio::evaluate(
        w,
        &DVector::from_column_slice(&mu),
        &two_by_two(sigma),
        target,
    ))
}

/// Unconstrained-return minimum-variance pair:
/// `w_A = (σ_BB - σ_AB) / (σ_AA + σ_BB - 2σ_AB)`.
pub fn two_asset_min_variance(mu: [f64; 2], sigma: [[f64; 2]; 2]) -> Result<Portfolio> {
    let denom = sigma[0][0] + sigma[1][1] - 2.0 * sigma[0][1];
    if !(denom > 0.0) {
        return Err(Error::Contract("degenerate two-asset covariance".into()));
    }
    let w_a = ((sigma[1][1] - sigma[0][1]) / denom).clamp(0.0, 1.0);
    let w = DVector::from_vec(vec![w_a, 1.0 - w_a]);
    let mu_v = DVector::from_column_slice(&mu);
    let r = mu_v.dot(&w);
    Ok(Portfolio::evaluate(w, &mu_v, &two_by_two(sigma), r))
}

fn two_by_two(s: [[f64; 2]; 2]) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[s[0][0], s[0][1], s[1][0], s[1][1]])
}

/// One sweep target. `portfolio` is absent when the solver failed, in which
/// case `error` says why.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontierPoint {
    #[serde(rename = "R")]
    pub target_return: f64,
    pub portfolio: Option<Portfolio>,
    /// Undefined for zero variance.
    pub sharpe: Option<f64>,
    pub error: Option<String>,
}

impl FrontierPoint {
    pub fn solved(target_return: f64, portfolio: Portfolio) -> Self {
        let sharpe = (portfolio.variance > 0.0)
            .then(|| portfolio.achieved_return / portfolio.variance.sqrt());
        Self {
            target_return,
            portfolio: Some(portfolio),
            sharpe,
            error: None,
        }
    }

    pub fn failed(target_return: f64, error: &Error) -> Self {
        Self {
            target_return,
            portfolio: None,
            sharpe: None,
            error: Some(error.to_string()),
        }
    }

    pub fn variance(&self) -> Option<f64> {
        self.portfolio.as_ref().map(|p| p.variance)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FrontierCurve {
    pub points: Vec<FrontierPoint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub solver: SolverOptions,
    pub lambda_return: f64,
    pub lambda_budget: f64,
    /// Start each point from the previous point's final potentials. Forces a
    /// sequential sweep.
    pub warm_start: bool,
}

impl SweepOptions {
    pub fn new(solver: SolverOptions, lambda_return: f64, lambda_budget: f64) -> Self {
        Self {
            solver,
            lambda_return,
            lambda_budget,
            warm_start: true,
        }
    }
}

/// Equally spaced targets from `r_min` to `r_max` inclusive.
pub fn sweep_targets(r_min: f64, r_max: f64, steps: usize) -> Result<Vec<f64>> {
    if steps < 2 {
        return Err(Error::Config(format!("frontier sweep needs steps >= 2, got {steps}")));
    }
    if !(r_min < r_max) {
        return Err(Error::Config(format!(
            "frontier sweep needs R_min < R_max, got [{r_min}, {r_max}]"
        )));
    }
    let h = (r_max - r_min) / (steps - 1) as f64;
    Ok((0..steps)
        .map(|k| if k == steps - 1 { r_max } else { r_min + h * k as f64 })
        .collect())
}

/// Solves one Hopfield QP per target return.
///
/// Solver failures are recorded on the offending point and the sweep
/// continues. Without warm starts the points are solved in parallel.
pub fn sweep_frontier(
    sigma: &CovarianceEstimate,
    mu: &ExpectedReturns,
    r_min: f64,
    r_max: f64,
    steps: usize,
    opts: &SweepOptions,
) -> Result<FrontierCurve> {
    let targets = sweep_targets(r_min, r_max, steps)?;
    if mu.len() != sigma.dim() {
        return Err(Error::Dimension(format!(
            "covariance is {0}x{0} but {1} expected returns were given",
            sigma.dim(),
            mu.len()
        )));
    }
    opts.solver.validate()?;
    let solve_one = |target: f64, solver: &SolverOptions| {
        hopfield::solve_portfolio_state(
            sigma,
            mu,
            target,
            opts.lambda_return,
            opts.lambda_budget,
            solver,
        )
    };

    let points = if opts.warm_start {
        let mut solver = opts.solver.clone();
        let mut points = Vec::with_capacity(targets.len());
        for &target in &targets {
            match solve_one(target, &solver) {
                Ok((portfolio, state)) => {
                    solver.init = InitPolicy::Given(state.potentials().clone());
                    points.push(FrontierPoint::solved(target, portfolio));
                }
                Err(e) => points.push(FrontierPoint::failed(target, &e)),
            }
        }
        points
    } else {
        targets
            .par_iter()
            .map(|&target| match solve_one(target, &opts.solver) {
                Ok((portfolio, _)) => FrontierPoint::solved(target, portfolio),
                Err(e) => FrontierPoint::failed(target, &e),
            })
            .collect()
    };
    Ok(FrontierCurve { points })
}

fn solved_points(curve: &FrontierCurve) -> impl Iterator<Item = (&FrontierPoint, &Portfolio)> {
    curve
        .points
        .iter()
        .filter_map(|p| p.portfolio.as_ref().map(|port| (p, port)))
}

/// Least-variance solved point; ties go to the smaller target return.
pub fn min_variance_point(curve: &FrontierCurve) -> Result<&FrontierPoint> {
    let mut best: Option<(&FrontierPoint, f64)> = None;
    for (point, port) in solved_points(curve) {
        let better = match best {
            None => true,
            Some((b, v)) => {
                port.variance < v || (port.variance == v && point.target_return < b.target_return)
            }
        };
        if better {
            best = Some((point, port.variance));
        }
    }
    best.map(|(p, _)| p)
        .ok_or_else(|| Error::Contract("frontier has no solved points".into()))
}

/// Greatest-Sharpe solved point; ties go to the smaller target return.
pub fn max_sharpe_point(curve: &FrontierCurve) -> Result<&FrontierPoint> {
    let mut best: Option<(&FrontierPoint, f64)> = None;
    for point in &curve.points {
        let Some(s) = point.sharpe else { continue };
        let better = match best {
            None => true,
            Some((b, bs)) => s > bs || (s == bs && point.target_return < b.target_return),
        };
        if better {
            best = Some((point, s));
        }
    }
    best.map(|(p, _)| p)
        .ok_or_else(|| Error::Contract("frontier has no point with a defined Sharpe ratio".into()))
}

impl FrontierCurve {
    /// Columns `R, variance, achieved_return, sharpe, return_residual,
    /// budget_residual, w_1..w_n, status`. Failed points leave the numeric
    /// fields empty and carry the error in `status`.
    pub fn write_csv<W: Write>(&self, mut sink: W) -> Result<()> {
        let n = solved_points(self).map(|(_, p)| p.weights.len()).next().unwrap_or(0);
        let mut header: Vec<String> = [
            "R",
            "variance",
            "achieved_return",
            "sharpe",
            "return_residual",
            "budget_residual",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((1..=n).map(|i| format!("w_{i}")));
        header.push("status".into());
        writeln!(sink, "{}", header.join(","))?;

        for point in &self.points {
            let mut fields = vec![fmt_f64(point.target_return)];
            match &point.portfolio {
                Some(p) => {
                    fields.push(fmt_f64(p.variance));
                    fields.push(fmt_f64(p.achieved_return));
                    fields.push(point.sharpe.map(fmt_f64).unwrap_or_default());
                    fields.push(fmt_f64(p.return_residual));
                    fields.push(fmt_f64(p.budget_residual));
                    fields.extend(p.weights.iter().map(|&w| fmt_f64(w)));
                    fields.push("ok".into());
                }
                None => {
                    fields.extend(std::iter::repeat_n(String::new(), 5 + n));
                    let msg = point.error.as_deref().unwrap_or("failed");
                    fields.push(format!("\"{}\"", msg.replace('"', "'")));
                }
            }
            writeln!(sink, "{}", fields.join(","))?;
        }
        Ok(())
    }

    /// Flat JSON rows with the CSV field names.
    pub fn to_json(&self) -> serde_json::Value {
        let rows: Vec<serde_json::Value> = self.points.iter().map(point_json).collect();
        serde_json::json!({ "points": rows })
    }
}

pub fn point_json(point: &FrontierPoint) -> serde_json::Value {
    match &point.portfolio {
        Some(p) => serde_json::json!({
            "R": point.target_return,
            "variance": p.variance,
            "achieved_return": p.achieved_return,
            "sharpe": point.sharpe,
            "return_residual": p.return_residual,
            "budget_residual": p.budget_residual,
            "w": p.weights,
            "status": "ok",
        }),
        None => serde_json::json!({
            "R": point.target_return,
            "status": point.error.as_deref().unwrap_or("failed"),
        }),
    }
}
