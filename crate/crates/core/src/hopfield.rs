//! Penalized mean-variance problem encoded as a continuous Hopfield network,
//! solved by integrating the annealed network ODE
//!
//! ```text
//! dx_i/dt = -p(t) x_i + Σ_j J_ij v_j + m_i,    v_i = g(x_i)
//! ```
//!
//! with logistic `g`, so every weight `v_i` stays in `(0, 1)`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontier::Portfolio;
use crate::market_data::{CovarianceEstimate, ExpectedReturns};
use crate::table::fmt_f64;

/// Standard logistic `1 / (1 + e^{-x})`, evaluated without overflow.
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `∫_0^v g^{-1}(u) du = v ln v + (1-v) ln(1-v)` for `v = g(x)`, computed from
/// `x` so saturated units do not lose precision.
fn logistic_entropy_term(x: f64) -> f64 {
    let v = logistic(x);
    let one_minus_v = logistic(-x);
    // ln v = -softplus(-x), ln(1-v) = -softplus(x)
    -(v * softplus(-x) + one_minus_v * softplus(x))
}

/// Couplings and biases of the penalized objective
/// `H = w^T Σ w + λ1 (μ^T w - R)^2 + λ2 (1^T w - 1)^2`, which up to the
/// constant `λ1 R² + λ2` equals `-½ w^T J w - m^T w`.
#[derive(Debug, Clone, PartialEq)]
pub struct QpEncoding {
    pub coupling: DMatrix<f64>,
    pub bias: DVector<f64>,
    pub lambda_return: f64,
    pub lambda_budget: f64,
    pub target_return: f64,
}

impl QpEncoding {
    pub fn dim(&self) -> usize {
        self.bias.len()
    }

    /// `-½ w^T J w - m^T w`.
    pub fn objective(&self, w: &DVector<f64>) -> f64 {
        -0.5 * w.dot(&(&self.coupling * w)) - self.bias.dot(w)
    }

    /// The constant dropped when passing from the penalized objective to
    /// [`objective`](Self::objective).
    pub fn dropped_constant(&self) -> f64 {
        self.lambda_return * self.target_return * self.target_return + self.lambda_budget
    }

    /// The full penalized objective including constants.
    pub fn penalized_objective(&self, w: &DVector<f64>) -> f64 {
        self.objective(w) + self.dropped_constant()
    }
}

/// `J = -2Σ - 2λ1 μμ^T - 2λ2 11^T`, `m = 2Rλ1 μ + 2λ2 1`.
pub fn encode_qp(
    sigma: &CovarianceEstimate,
    mu: &ExpectedReturns,
    target_return: f64,
    lambda_return: f64,
    lambda_budget: f64,
) -> Result<QpEncoding> {
    let n = sigma.dim();
    if mu.len() != n {
        return Err(Error::Dimension(format!(
            "covariance is {n}x{n} but {} expected returns were given",
            mu.len()
        )));
    }
    if !(lambda_return >= 0.0 && lambda_budget >= 0.0) {
        return Err(Error::Contract("penalty weights must be nonnegative".into()));
    }
    let s = sigma.matrix();
    let m = mu.as_vector();
    let coupling = DMatrix::from_fn(n, n, |i, j| {
        -2.0 * s[(i, j)] - 2.0 * lambda_return * (m[i] * m[j]) - 2.0 * lambda_budget
    });
    let bias = m.map(|mi| 2.0 * target_return * lambda_return * mi + 2.0 * lambda_budget);
    Ok(QpEncoding {
        coupling,
        bias,
        lambda_return,
        lambda_budget,
        target_return,
    })
}

/// Internal potentials `x`, activations `v = g(x)`, time and annealing value.
#[derive(Debug, Clone, PartialEq)]
pub struct HopfieldState {
    x: DVector<f64>,
    v: DVector<f64>,
    pub t: f64,
    pub p: f64,
}

impl HopfieldState {
    pub fn new(x: DVector<f64>, t: f64, p: f64) -> Self {
        let v = x.map(logistic);
        Self { x, v, t, p }
    }

    pub fn potentials(&self) -> &DVector<f64> {
        &self.x
    }

    pub fn activations(&self) -> &DVector<f64> {
        &self.v
    }

    fn set_potentials(&mut self, x: DVector<f64>) {
        self.v = x.map(logistic);
        self.x = x;
    }
}

/// Lyapunov energy
/// `E = p Σ_i ∫_0^{v_i} g^{-1} - ½ v^T J v - m^T v`.
pub fn hopfield_energy(state: &HopfieldState, enc: &QpEncoding, p: f64) -> f64 {
    let entropy: f64 = state.x.iter().map(|&x| logistic_entropy_term(x)).sum();
    p * entropy + enc.objective(&state.v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleShape {
    /// `p(t) = p0 (1 - t/T)`, clamped at zero after `T`.
    Linear,
    /// `p(t) = p0` for all `t`.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub p0: f64,
    pub period: f64,
    pub shape: ScheduleShape,
}

impl AnnealSchedule {
    pub fn linear(p0: f64, period: f64) -> Self {
        Self {
            p0,
            period,
            shape: ScheduleShape::Linear,
        }
    }

    pub fn constant(p: f64) -> Self {
        Self {
            p0: p,
            period: 1.0,
            shape: ScheduleShape::Constant,
        }
    }

    pub fn value(&self, t: f64) -> f64 {
        match self.shape {
            ScheduleShape::Linear => (self.p0 * (1.0 - t / self.period)).max(0.0),
            ScheduleShape::Constant => self.p0,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.p0 >= 0.0) || !self.p0.is_finite() {
            return Err(Error::Config(format!("p0 must be >= 0, got {}", self.p0)));
        }
        if !(self.period > 0.0) || !self.period.is_finite() {
            return Err(Error::Config(format!(
                "annealing period must be > 0, got {}",
                self.period
            )));
        }
        Ok(())
    }
}

/// Initial internal potentials.
#[derive(Debug, Clone, PartialEq)]
pub enum InitPolicy {
    /// `x_i(0)` uniform in `[-half_width, half_width]` from the seed.
    Uniform { half_width: f64 },
    /// Fixed starting potentials (warm start).
    Given(DVector<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub dt: f64,
    pub total_time: f64,
    pub schedule: AnnealSchedule,
    pub init: InitPolicy,
    pub seed: u64,
    /// Record every `stride`-th step in the trace; 0 records nothing.
    pub trace_stride: usize,
    /// Once `p` has reached 0, stop when `‖dx/dt‖∞` falls below this.
    pub stall_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            dt: 1e-2,
            total_time: 100.0,
            schedule: AnnealSchedule::linear(0.01, 100.0),
            init: InitPolicy::Uniform { half_width: 0.1 },
            seed: 0,
            trace_stride: 0,
            stall_tol: 1e-8,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::Config(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.schedule.shape == ScheduleShape::Linear && self.total_time < self.schedule.period
        {
            return Err(Error::Config(format!(
                "total_time {} is shorter than the annealing period {}",
                self.total_time, self.schedule.period
            )));
        }
        if !(self.total_time > 0.0) || !self.total_time.is_finite() {
            return Err(Error::Config("total_time must be finite and > 0".into()));
        }
        Ok(())
    }
}

/// Plain-text solver configuration: keys `dt, total_time, p0, T, lambda1,
/// lambda2, seed, stride`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub dt: f64,
    pub total_time: f64,
    pub p0: f64,
    #[serde(rename = "T")]
    pub period: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub seed: u64,
    pub stride: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt: 1e-2,
            total_time: 100.0,
            p0: 0.01,
            period: 100.0,
            lambda1: 1.0,
            lambda2: 1.0,
            seed: 0,
            stride: 0,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            dt: self.dt,
            total_time: self.total_time,
            schedule: AnnealSchedule::linear(self.p0, self.period),
            init: InitPolicy::Uniform { half_width: 0.1 },
            seed: self.seed,
            trace_stride: self.stride,
            stall_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: f64,
    pub energy: f64,
    pub v: DVector<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    /// CSV with columns `t, E, v_1..v_n`.
    pub fn write_csv<W: Write>(&self, mut sink: W) -> Result<()> {
        let n = self.records.first().map_or(0, |r| r.v.len());
        let mut header = vec!["t".to_string(), "E".to_string()];
        header.extend((1..=n).map(|i| format!("v_{i}")));
        writeln!(sink, "{}", header.join(","))?;
        for rec in &self.records {
            let mut fields = vec![fmt_f64(rec.t), fmt_f64(rec.energy)];
            fields.extend(rec.v.iter().map(|&v| fmt_f64(v)));
            writeln!(sink, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

fn initial_potentials(n: usize, opts: &SolverOptions) -> Result<DVector<f64>> {
    match &opts.init {
        InitPolicy::Uniform { half_width } => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let h = *half_width;
            Ok(DVector::from_fn(n, |_, _| {
                if h > 0.0 {
                    rng.random_range(-h..=h)
                } else {
                    0.0
                }
            }))
        }
        InitPolicy::Given(x0) => {
            if x0.len() != n {
                return Err(Error::Dimension(format!(
                    "initial state has {} entries for {n} units",
                    x0.len()
                )));
            }
            Ok(x0.clone())
        }
    }
}

/// Explicit Euler integration of the annealed network.
///
/// Runs until `total_time`, or earlier once `p = 0` and `‖dx/dt‖∞` drops below
/// `opts.stall_tol`. Returns the final state and the strided trace.
pub fn integrate(enc: &QpEncoding, opts: &SolverOptions) -> Result<(HopfieldState, Trace)> {
    opts.validate()?;
    let n = enc.dim();
    let x0 = initial_potentials(n, opts)?;
    let mut state = HopfieldState::new(x0, 0.0, opts.schedule.value(0.0));
    let mut trace = Trace::default();
    let steps = (opts.total_time / opts.dt).round() as usize;
    let record = |trace: &mut Trace, state: &HopfieldState| {
        trace.records.push(TraceRecord {
            t: state.t,
            energy: hopfield_energy(state, enc, state.p),
            v: state.v.clone(),
        });
    };
    if opts.trace_stride > 0 {
        record(&mut trace, &state);
    }

    let mut velocity = DVector::zeros(n);
    for step in 0..steps {
        let p = opts.schedule.value(state.t);
        velocity.gemv(1.0, &enc.coupling, &state.v, 0.0);
        velocity += &enc.bias;
        velocity.axpy(-p, &state.x, 1.0);

        let settled = p == 0.0 && velocity.amax() < opts.stall_tol;
        let next = &state.x + opts.dt * &velocity;
        if next.iter().any(|x| !x.is_finite()) {
            return Err(Error::Integration {
                step: step + 1,
                time: (step + 1) as f64 * opts.dt,
            });
        }
        if settled {
            break;
        }
        state.set_potentials(next);
        state.t = (step + 1) as f64 * opts.dt;
        state.p = opts.schedule.value(state.t);
        if opts.trace_stride > 0 && (step + 1) % opts.trace_stride == 0 {
            record(&mut trace, &state);
        }
    }
    Ok((state, trace))
}

/// Encodes and integrates, returning `w = v(final)` with its diagnostics.
pub fn solve_portfolio(
    sigma: &CovarianceEstimate,
    mu: &ExpectedReturns,
    target_return: f64,
    lambda_return: f64,
    lambda_budget: f64,
    opts: &SolverOptions,
) -> Result<Portfolio> {
    let (portfolio, _) =
        solve_portfolio_state(sigma, mu, target_return, lambda_return, lambda_budget, opts)?;
    Ok(portfolio)
}

/// As [`solve_portfolio`], also returning the final network state for warm starts.
pub fn solve_portfolio_state(
    sigma: &CovarianceEstimate,
    mu: &ExpectedReturns,
    target_return: f64,
    lambda_return: f64,
    lambda_budget: f64,
    opts: &SolverOptions,
) -> Result<(Portfolio, HopfieldState)> {
    let enc = encode_qp(sigma, mu, target_return, lambda_return, lambda_budget)?;
    let (state, _) = integrate(&enc, opts)?;
    let portfolio = Portfolio::evaluate(
        state.activations().clone(),
        mu.as_vector(),
        sigma.matrix(),
        target_return,
    );
    Ok((portfolio, state))
}
