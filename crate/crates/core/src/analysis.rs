//! Trajectory diagnostics: the energy (Lyapunov) functional, its decrease
//! guarantee, explicit subgradient elements along the flow, criticality
//! residuals, arc length, and convergence-rate fitting.

use serde::Serialize;

use crate::dynamics::{check_condition, DynParams};
use crate::integrate::Trajectory;
use crate::problem::BlockProblem;
use crate::vecops;
use crate::{Error, Result};

/// The energy functional
/// `E[(a, b), (x, y)] = Psi(a, b) + (1/2)(g1 L ||a - x||^2 + g2 L ||b - y||^2)`.
/// Along a solution it is evaluated at `(a, b) = zdot + z`, `(x, y) = z`.
pub fn lyapunov_value(
    problem: &BlockProblem,
    shifted: (&[f64], &[f64]),
    state: (&[f64], &[f64]),
    params: &DynParams,
) -> Result<f64> {
    let psi = problem.psi_value(shifted.0, shifted.1)?;
    if psi == f64::INFINITY {
        return Ok(f64::INFINITY);
    }
    let dx = vecops::dist(shifted.0, state.0);
    let dy = vecops::dist(shifted.1, state.1);
    Ok(psi + 0.5 * params.l * (params.gamma1 * dx * dx + params.gamma2 * dy * dy))
}

/// Per-sample diagnostic sequences extracted from a trajectory.
#[derive(Debug, Clone)]
pub struct LyapunovSeries {
    pub times: Vec<f64>,
    /// Energy functional values (as recorded during integration).
    pub values: Vec<f64>,
    /// `||zdot||`.
    pub speeds: Vec<f64>,
    /// Remaining arc length `sigma(t) = integral of speed over [t, t_end]`.
    pub sigma: Vec<f64>,
    /// Norms of the explicit subgradient element at `zdot + z`.
    pub subgrad_norms: Vec<f64>,
}

impl LyapunovSeries {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// Builds the diagnostic series for a trajectory.
pub fn lyapunov_series(
    traj: &Trajectory,
    problem: &BlockProblem,
    params: &DynParams,
) -> Result<LyapunovSeries> {
    let n = traj.len();
    let mut speeds = Vec::with_capacity(n);
    let mut subgrad_norms = Vec::with_capacity(n);
    for i in 0..n {
        speeds.push(traj.speed(i));
        let (x, y) = &traj.states[i];
        let (u, v) = &traj.derivs[i];
        let (ex, ey) = subgradient_element(problem, params, (x, y), (u, v));
        subgrad_norms.push(vecops::norm2(&ex, &ey));
    }
    Ok(LyapunovSeries {
        times: traj.times.clone(),
        values: traj.lyap.clone(),
        sigma: arc_length(&traj.times, &speeds),
        speeds,
        subgrad_norms,
    })
}

/// Remaining arc length by trapezoidal integration of the speed from each
/// sample to the end; the final entry is zero.
pub fn arc_length(times: &[f64], speeds: &[f64]) -> Vec<f64> {
    let n = times.len();
    let mut sigma = vec![0.0; n];
    for i in (0..n.saturating_sub(1)).rev() {
        let dt = times[i + 1] - times[i];
        sigma[i] = sigma[i + 1] + 0.5 * dt * (speeds[i] + speeds[i + 1]);
    }
    sigma
}

/// Result of checking the energy-decrease guarantee along a trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct DecreaseReport {
    /// Sample indices where the energy increased by more than the tolerance.
    pub violations: Vec<usize>,
    pub max_increase: f64,
    /// `min{m1, m2}` from the admissibility condition; the quantitative
    /// bound below is only meaningful when this is positive.
    pub m_min: f64,
    /// Whether `E(t_end) <= E(0) - m_min * integral of speed^2` held, when
    /// the condition is satisfied; `None` when it is not applicable.
    pub integral_bound_satisfied: Option<bool>,
    /// Slack of that inequality (positive means satisfied with room).
    pub integral_bound_slack: Option<f64>,
}

/// Checks monotone decrease of the energy values and, when the stepsize
/// condition holds, the integrated quantitative decrease bound.
pub fn monitor_decrease(
    series: &LyapunovSeries,
    params: &DynParams,
    tol: f64,
) -> Result<DecreaseReport> {
    if series.len() < 2 {
        return Err(Error::InsufficientData("need at least 2 samples".into()));
    }
    let mut violations = Vec::new();
    let mut max_increase: f64 = 0.0;
    for i in 1..series.len() {
        let inc = series.values[i] - series.values[i - 1];
        if inc > tol {
            violations.push(i);
        }
        max_increase = max_increase.max(inc);
    }

    let cond = check_condition(params)?;
    let m_min = cond.m1.min(cond.m2);
    let (integral_bound_satisfied, integral_bound_slack) = if cond.satisfied {
        let mut dissipated = 0.0;
        for i in 1..series.len() {
            let dt = series.times[i] - series.times[i - 1];
            let s0 = series.speeds[i - 1];
            let s1 = series.speeds[i];
            dissipated += 0.5 * dt * (s0 * s0 + s1 * s1);
        }
        let lhs = series.values[0] - series.values[series.len() - 1];
        let slack = lhs - m_min * dissipated;
        // quadrature tolerance proportional to the scale of the drop
        let quad_tol = tol + 1e-6 * lhs.abs().max(1.0);
        (Some(slack > -quad_tol), Some(slack))
    } else {
        (None, None)
    };
    Ok(DecreaseReport {
        violations,
        max_increase,
        m_min,
        integral_bound_satisfied,
        integral_bound_slack,
    })
}

/// The constant `L * sqrt(max{1 + g1^2 + lambda^2, 1 + g2^2 + mu^2})`
/// bounding the subgradient-element norm by a multiple of the speed.
pub fn subgradient_bound_constant(params: &DynParams) -> f64 {
    let a = 1.0 + params.gamma1 * params.gamma1 + params.lambda * params.lambda;
    let b = 1.0 + params.gamma2 * params.gamma2 + params.mu * params.mu;
    params.l * a.max(b).sqrt()
}

/// The explicit element of the limiting subdifferential of `Psi` at
/// `zdot + z` read off from the prox optimality conditions:
///
/// ```text
/// ex = -g1 L xdot + grad_x H(xdot + x, ydot + y) - grad_x H(x, (1-mu)(ydot+y) + mu y)
/// ey = -g2 L ydot + grad_y H(xdot + x, ydot + y) - grad_y H((1-lambda)(xdot+x) + lambda x, y)
/// ```
pub fn subgradient_element(
    problem: &BlockProblem,
    params: &DynParams,
    state: (&[f64], &[f64]),
    deriv: (&[f64], &[f64]),
) -> (Vec<f64>, Vec<f64>) {
    let (x, y) = state;
    let (u, v) = deriv;
    let shifted_x = vecops::add(x, u);
    let shifted_y = vecops::add(y, v);
    let arg_y: Vec<f64> = y
        .iter()
        .zip(v)
        .map(|(&yi, &vi)| (1.0 - params.mu) * (vi + yi) + params.mu * yi)
        .collect();
    let arg_x: Vec<f64> = x
        .iter()
        .zip(u)
        .map(|(&xi, &ui)| (1.0 - params.lambda) * (ui + xi) + params.lambda * xi)
        .collect();

    let g_full_x = (problem.h_grad_x)(&shifted_x, &shifted_y);
    let g_line_x = (problem.h_grad_x)(x, &arg_y);
    let ex: Vec<f64> = (0..x.len())
        .map(|i| -params.gamma1 * params.l * u[i] + g_full_x[i] - g_line_x[i])
        .collect();

    let g_full_y = (problem.h_grad_y)(&shifted_x, &shifted_y);
    let g_line_y = (problem.h_grad_y)(&arg_x, y);
    let ey: Vec<f64> = (0..y.len())
        .map(|j| -params.gamma2 * params.l * v[j] + g_full_y[j] - g_line_y[j])
        .collect();
    (ex, ey)
}

/// Criticality test result. The residual is the norm of the prox
/// fixed-point defect, scaled back to the gradient scale by the probe step.
#[derive(Debug, Clone, Serialize)]
pub struct CritReport {
    pub residual_x: f64,
    pub residual_y: f64,
    pub residual: f64,
    pub is_critical: bool,
}

/// Checks whether `(x, y)` is (approximately) critical for `Psi` via the
/// prox fixed-point characterization: `x = prox_{a f}(x - a grad_x H(x, y))`
/// and the analogous relation in `y`, with probe step `a`. Residuals are
/// divided by the probe step so they live on the scale of a gradient norm.
pub fn verify_critical(
    problem: &BlockProblem,
    point: (&[f64], &[f64]),
    probe_step: f64,
    tol: f64,
) -> Result<CritReport> {
    if !(probe_step > 0.0) {
        return Err(Error::argument(format!("probe step must be positive, got {probe_step}")));
    }
    let (x, y) = point;
    let gx = (problem.h_grad_x)(x, y);
    let px = problem
        .f_prox
        .evaluate(probe_step, &vecops::add_scaled(x, -probe_step, &gx))?;
    let residual_x = vecops::dist(x, &px) / probe_step;

    let gy = (problem.h_grad_y)(x, y);
    let py = problem
        .g_prox
        .evaluate(probe_step, &vecops::add_scaled(y, -probe_step, &gy))?;
    let residual_y = vecops::dist(y, &py) / probe_step;

    let residual = residual_x.hypot(residual_y);
    Ok(CritReport { residual_x, residual_y, residual, is_critical: residual < tol })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateClass {
    /// Exponent below 1/2: convergence in finite time.
    FiniteTime,
    /// Exponent 1/2: exponential convergence.
    Exponential,
    /// Exponent above 1/2: polynomial convergence.
    Polynomial,
}

/// Fitted arc-length decay model on the tail.
#[derive(Debug, Clone, Copy, Serialize)]
#[serde(rename_all = "kebab-case", tag = "model")]
pub enum SigmaModel {
    /// `sigma(t) ~ alpha * exp(-beta t)`.
    Exponential { alpha: f64, beta: f64 },
    /// `sigma(t) ~ gamma * t^(-delta)`.
    Polynomial { gamma: f64, delta: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct RateFit {
    /// Estimated exponent from regressing `log(gap)` on `log(subgrad norm)`;
    /// the slope is `1 / theta`.
    pub theta: f64,
    pub class: RateClass,
    pub samples_used: usize,
    /// Coefficient of determination of the log-log regression.
    pub r_squared: f64,
    pub sigma_model: Option<SigmaModel>,
}

/// Half-width of the band around 1/2 classified as exponential.
const RATE_CLASS_BAND: f64 = 0.1;

/// Fits the desingularization exponent `theta` on the tail of a run: the
/// energy gap above `limit_value` obeys `gap^theta ~ subgrad norm`, so the
/// log-log slope estimates `1 / theta`. Samples with gap or subgradient norm
/// at floating-point noise level are excluded. The tail fraction selects the
/// last part of the series (by sample count) where the asymptotic regime
/// holds.
pub fn fit_rate(
    series: &LyapunovSeries,
    limit_value: f64,
    tail_fraction: f64,
) -> Result<RateFit> {
    if !(0.0 < tail_fraction && tail_fraction <= 1.0) {
        return Err(Error::argument(format!(
            "tail fraction must be in (0, 1], got {tail_fraction}"
        )));
    }
    let n = series.len();
    let start = n - ((n as f64 * tail_fraction).ceil() as usize).clamp(1, n);
    let floor = 1e2 * f64::EPSILON * limit_value.abs().max(1.0);

    let mut log_gap = Vec::new();
    let mut log_xi = Vec::new();
    let mut t_sel = Vec::new();
    let mut sigma_sel = Vec::new();
    for i in start..n {
        let gap = series.values[i] - limit_value;
        let xi = series.subgrad_norms[i];
        if gap > floor && xi > floor && gap.is_finite() {
            log_gap.push(gap.ln());
            log_xi.push(xi.ln());
            t_sel.push(series.times[i]);
            sigma_sel.push(series.sigma[i]);
        }
    }
    if log_gap.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "only {} usable samples in the tail (need 10)",
            log_gap.len()
        )));
    }
    let (slope, _intercept, r_squared) = linear_fit(&log_xi, &log_gap);
    if !(slope > 0.0) {
        return Err(Error::InsufficientData(format!(
            "non-positive log-log slope {slope}; tail not in the asymptotic regime"
        )));
    }
    let theta = 1.0 / slope;
    let class = if theta < 0.5 - RATE_CLASS_BAND {
        RateClass::FiniteTime
    } else if theta > 0.5 + RATE_CLASS_BAND {
        RateClass::Polynomial
    } else {
        RateClass::Exponential
    };
    let sigma_model = fit_sigma_model(class, &t_sel, &sigma_sel, floor);
    Ok(RateFit { theta, class, samples_used: log_gap.len(), r_squared, sigma_model })
}

fn fit_sigma_model(class: RateClass, times: &[f64], sigma: &[f64], floor: f64) -> Option<SigmaModel> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    match class {
        RateClass::Exponential => {
            // log sigma = log alpha - beta t
            for (&t, &s) in times.iter().zip(sigma) {
                if s > floor {
                    xs.push(t);
                    ys.push(s.ln());
                }
            }
            if xs.len() < 5 {
                return None;
            }
            let (slope, intercept, _) = linear_fit(&xs, &ys);
            Some(SigmaModel::Exponential { alpha: intercept.exp(), beta: -slope })
        }
        RateClass::Polynomial => {
            // log sigma = log gamma - delta log t
            for (&t, &s) in times.iter().zip(sigma) {
                if s > floor && t > 0.0 {
                    xs.push(t.ln());
                    ys.push(s.ln());
                }
            }
            if xs.len() < 5 {
                return None;
            }
            let (slope, intercept, _) = linear_fit(&xs, &ys);
            Some(SigmaModel::Polynomial { gamma: intercept.exp(), delta: -slope })
        }
        RateClass::FiniteTime => None,
    }
}

/// Ordinary least squares; returns (slope, intercept, r_squared).
fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
    (slope, intercept, r_squared)
}
