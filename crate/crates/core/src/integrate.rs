//! Numerical integration of the dynamical system and the discrete algorithms
//! (PALM, preconditioned forward-backward) that are its step-one Euler
//! discretizations.

use serde::Serialize;

use crate::dynamics::{self, DynParams, FixedPointConfig};
use crate::problem::BlockProblem;
use crate::vecops;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Euler,
    Rk4,
    Adaptive,
}

/// Why integration stopped.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    /// `||zdot|| < stationary_tol`.
    Stationary,
    TimeLimit,
    /// Set post hoc when oscillation detection fires on a time-limit run.
    Oscillation,
    Error(String),
}

#[derive(Debug, Clone, Copy, Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub method: Method,
    /// Step for the fixed-step methods.
    pub step: f64,
    /// Relative tolerance (adaptive).
    pub rtol: f64,
    /// Absolute tolerance (adaptive).
    pub atol: f64,
    pub t_max: f64,
    /// Stop when the right-hand-side norm falls below this.
    pub stationary_tol: f64,
    /// Record a sample every this many accepted steps.
    pub record_every: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            method: Method::Rk4,
            step: 1e-3,
            rtol: 1e-8,
            atol: 1e-10,
            t_max: 100.0,
            stationary_tol: 1e-9,
            record_every: 10,
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.rtol > 0.0 && self.atol > 0.0 && self.t_max > 0.0) {
            return Err(Error::argument("solver config values must be positive"));
        }
        if self.record_every == 0 {
            return Err(Error::argument("record_every must be at least 1"));
        }
        Ok(())
    }

    /// Default configuration for acceptance-grade runs: embedded 4(5) pair
    /// with conservative tolerances.
    pub fn adaptive() -> Self {
        SolverConfig { method: Method::Adaptive, ..Default::default() }
    }
}

/// A sampled solution trajectory. All sequences share one length; the
/// stored derivatives are the right-hand-side values at accepted steps, not
/// finite differences of the states, so the Lyapunov functional is evaluated
/// on exactly the shifted arguments the analysis uses.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<(Vec<f64>, Vec<f64>)>,
    pub derivs: Vec<(Vec<f64>, Vec<f64>)>,
    /// `Psi(xdot + x, ydot + y)` at each sample.
    pub psi: Vec<f64>,
    /// Lyapunov functional at each sample.
    pub lyap: Vec<f64>,
    pub terminated: Termination,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn terminal_state(&self) -> (&[f64], &[f64]) {
        let (x, y) = self.states.last().expect("trajectory has at least one sample");
        (x, y)
    }

    /// `||zdot||` at sample `i`.
    pub fn speed(&self, i: usize) -> f64 {
        let (u, v) = &self.derivs[i];
        vecops::norm2(u, v)
    }
}

struct Recorder<'a> {
    problem: &'a BlockProblem,
    params: &'a DynParams,
    traj: Trajectory,
}

impl<'a> Recorder<'a> {
    fn new(problem: &'a BlockProblem, params: &'a DynParams) -> Self {
        Recorder {
            problem,
            params,
            traj: Trajectory {
                times: Vec::new(),
                states: Vec::new(),
                derivs: Vec::new(),
                psi: Vec::new(),
                lyap: Vec::new(),
                terminated: Termination::TimeLimit,
            },
        }
    }

    fn push(&mut self, t: f64, x: &[f64], y: &[f64], u: &[f64], v: &[f64]) {
        let shifted_x = vecops::add(x, u);
        let shifted_y = vecops::add(y, v);
        let psi = self
            .problem
            .psi_value(&shifted_x, &shifted_y)
            .unwrap_or(f64::INFINITY);
        let lyap = crate::analysis::lyapunov_value(
            self.problem,
            (&shifted_x, &shifted_y),
            (x, y),
            self.params,
        )
        .unwrap_or(f64::INFINITY);
        self.traj.times.push(t);
        self.traj.states.push((x.to_vec(), y.to_vec()));
        self.traj.derivs.push((u.to_vec(), v.to_vec()));
        self.traj.psi.push(psi);
        self.traj.lyap.push(lyap);
    }
}

type Rhs<'a> = dyn Fn(&[f64], &[f64]) -> Result<(Vec<f64>, Vec<f64>)> + 'a;

fn concat_rhs(rhs: &Rhs, n: usize, z: &[f64]) -> Result<Vec<f64>> {
    let (u, v) = rhs(&z[..n], &z[n..])?;
    let mut out = u;
    out.extend(v);
    Ok(out)
}

/// Integrates the system from `(x0, y0)` until `t_max` or stationarity.
/// Uses the explicit right-hand side for `mu = 1` and the fixed-point
/// implicit one otherwise. Right-hand-side failures truncate the trajectory
/// with an error termination instead of dropping the recorded prefix.
pub fn integrate(
    problem: &BlockProblem,
    params: &DynParams,
    x0: &[f64],
    y0: &[f64],
    config: &SolverConfig,
) -> Result<Trajectory> {
    config.validate()?;
    if x0.len() != problem.dims.0 || y0.len() != problem.dims.1 {
        return Err(Error::argument(format!(
            "initial point dimensions ({}, {}) do not match problem {:?}",
            x0.len(),
            y0.len(),
            problem.dims
        )));
    }
    let fp = FixedPointConfig::default();
    let rhs = move |x: &[f64], y: &[f64]| -> Result<(Vec<f64>, Vec<f64>)> {
        if params.mu == 1.0 {
            dynamics::gamma_rhs((x, y), problem, params)
        } else {
            dynamics::implicit_rhs((x, y), problem, params, &fp)
        }
    };
    drive(problem, params, x0, y0, config, &rhs)
}

fn drive(
    problem: &BlockProblem,
    params: &DynParams,
    x0: &[f64],
    y0: &[f64],
    config: &SolverConfig,
    rhs: &Rhs,
) -> Result<Trajectory> {
    let n = x0.len();
    let mut rec = Recorder::new(problem, params);
    let mut z: Vec<f64> = [x0, y0].concat();
    let mut t = 0.0;

    let mut deriv = match concat_rhs(rhs, n, &z) {
        Ok(d) => d,
        Err(e) => {
            rec.push(0.0, x0, y0, &vec![0.0; n], &vec![0.0; y0.len()]);
            rec.traj.terminated = Termination::Error(e.to_string());
            return Ok(rec.traj);
        }
    };
    rec.push(t, &z[..n], &z[n..], &deriv[..n], &deriv[n..]);

    let mut h = match config.method {
        Method::Adaptive => (config.t_max / 100.0).min(1e-2),
        _ => config.step,
    };
    let mut accepted: usize = 0;
    let mut last_recorded = 0usize;

    loop {
        if vecops::norm(&deriv) < config.stationary_tol {
            rec.traj.terminated = Termination::Stationary;
            break;
        }
        if t >= config.t_max - 1e-14 {
            rec.traj.terminated = Termination::TimeLimit;
            break;
        }
        let h_eff = h.min(config.t_max - t);

        let step_result = match config.method {
            Method::Euler => euler_step(rhs, n, &z, &deriv, h_eff).map(|z2| (z2, h_eff, h)),
            Method::Rk4 => rk4_step(rhs, n, &z, &deriv, h_eff).map(|z2| (z2, h_eff, h)),
            Method::Adaptive => adaptive_step(rhs, n, &z, &deriv, h_eff, t, config),
        };
        let (z_new, h_taken, h_next) = match step_result {
            Ok(s) => s,
            Err(e @ Error::StepUnderflow { .. }) => return Err(e),
            Err(e) => {
                rec.traj.terminated = Termination::Error(e.to_string());
                return Ok(rec.traj);
            }
        };
        z = z_new;
        t += h_taken;
        h = h_next;
        accepted += 1;

        deriv = match concat_rhs(rhs, n, &z) {
            Ok(d) => d,
            Err(e) => {
                rec.traj.terminated = Termination::Error(e.to_string());
                return Ok(rec.traj);
            }
        };
        if accepted - last_recorded >= config.record_every {
            rec.push(t, &z[..n], &z[n..], &deriv[..n], &deriv[n..]);
            last_recorded = accepted;
        }
    }
    if last_recorded != accepted || rec.traj.len() == 1 {
        rec.push(t, &z[..n], &z[n..], &deriv[..n], &deriv[n..]);
    }
    Ok(rec.traj)
}

fn euler_step(rhs: &Rhs, _n: usize, z: &[f64], k1: &[f64], h: f64) -> Result<Vec<f64>> {
    let _ = rhs;
    Ok(vecops::add_scaled(z, h, k1))
}

fn rk4_step(rhs: &Rhs, n: usize, z: &[f64], k1: &[f64], h: f64) -> Result<Vec<f64>> {
    let k2 = concat_rhs(rhs, n, &vecops::add_scaled(z, 0.5 * h, k1))?;
    let k3 = concat_rhs(rhs, n, &vecops::add_scaled(z, 0.5 * h, &k2))?;
    let k4 = concat_rhs(rhs, n, &vecops::add_scaled(z, h, &k3))?;
    Ok(z.iter()
        .enumerate()
        .map(|(i, &zi)| zi + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

// Dormand-Prince 5(4) coefficients.
const DP_C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [&[f64]; 6] = [
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
    &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// One accepted adaptive step. Returns (new state, step taken, next step).
fn adaptive_step(
    rhs: &Rhs,
    n: usize,
    z: &[f64],
    k1: &[f64],
    h0: f64,
    t: f64,
    config: &SolverConfig,
) -> Result<(Vec<f64>, f64, f64)> {
    let dim = z.len();
    let mut h = h0;
    loop {
        if h < 1e-14 {
            return Err(Error::StepUnderflow { t, step: h });
        }
        let mut k: Vec<Vec<f64>> = Vec::with_capacity(7);
        k.push(k1.to_vec());
        for stage in 0..6 {
            let mut arg = z.to_vec();
            for (j, &a) in DP_A[stage].iter().enumerate() {
                if a != 0.0 {
                    for i in 0..dim {
                        arg[i] += h * a * k[j][i];
                    }
                }
            }
            let _ = DP_C; // stage times are implicit in an autonomous system
            k.push(concat_rhs(rhs, n, &arg)?);
        }
        // the 6th stage argument is the 5th-order solution
        let z5: Vec<f64> = {
            let mut out = z.to_vec();
            for (j, &a) in DP_A[5].iter().enumerate() {
                for i in 0..dim {
                    out[i] += h * a * k[j][i];
                }
            }
            out
        };
        // error estimate from the embedded 4th-order weights
        let mut err_norm = 0.0;
        for i in 0..dim {
            let e: f64 = (0..7).map(|j| DP_E[j] * k[j][i]).sum::<f64>() * h;
            let scale = config.atol + config.rtol * z[i].abs().max(z5[i].abs());
            err_norm += (e / scale) * (e / scale);
        }
        err_norm = (err_norm / dim as f64).sqrt();

        let factor = if err_norm == 0.0 {
            5.0
        } else {
            (0.9 * err_norm.powf(-0.2)).clamp(0.2, 5.0)
        };
        if err_norm <= 1.0 {
            return Ok((z5, h, h * factor));
        }
        h *= factor;
    }
}

/// PALM iterates: alternating prox-gradient steps, the step-one Euler
/// discretization of the system at `mu = 1`, `lambda = 0`.
pub fn palm_discrete(
    problem: &BlockProblem,
    gamma1: f64,
    gamma2: f64,
    x0: &[f64],
    y0: &[f64],
    iters: usize,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let l = problem.lipschitz();
    let alpha1 = 1.0 / (gamma1 * l);
    let alpha2 = 1.0 / (gamma2 * l);
    let mut out = Vec::with_capacity(iters + 1);
    let mut x = x0.to_vec();
    let mut y = y0.to_vec();
    out.push((x.clone(), y.clone()));
    for _ in 0..iters {
        let gx = (problem.h_grad_x)(&x, &y);
        x = problem.f_prox.evaluate(alpha1, &vecops::add_scaled(&x, -alpha1, &gx))?;
        let gy = (problem.h_grad_y)(&x, &y);
        y = problem.g_prox.evaluate(alpha2, &vecops::add_scaled(&y, -alpha2, &gy))?;
        out.push((x.clone(), y.clone()));
    }
    Ok(out)
}

/// Preconditioned forward-backward iterates: both blocks updated from the
/// same `(x_k, y_k)`, the step-one Euler discretization at `mu = lambda = 1`.
pub fn fb_discrete(
    problem: &BlockProblem,
    gamma1: f64,
    gamma2: f64,
    x0: &[f64],
    y0: &[f64],
    iters: usize,
) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    let l = problem.lipschitz();
    let alpha1 = 1.0 / (gamma1 * l);
    let alpha2 = 1.0 / (gamma2 * l);
    let mut out = Vec::with_capacity(iters + 1);
    let mut x = x0.to_vec();
    let mut y = y0.to_vec();
    out.push((x.clone(), y.clone()));
    for _ in 0..iters {
        let gx = (problem.h_grad_x)(&x, &y);
        let gy = (problem.h_grad_y)(&x, &y);
        let x_next = problem.f_prox.evaluate(alpha1, &vecops::add_scaled(&x, -alpha1, &gx))?;
        let y_next = problem.g_prox.evaluate(alpha2, &vecops::add_scaled(&y, -alpha2, &gy))?;
        x = x_next;
        y = y_next;
        out.push((x.clone(), y.clone()));
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct OscillationReport {
    pub oscillating: bool,
    pub period: Option<f64>,
}

/// Detects periodic behavior: the speed stays above `stationary_tol` over
/// the final window while the state keeps revisiting the final state at a
/// near-constant interval. Revisit distances are measured against the
/// polyline between samples so recording density does not mask close
/// approaches.
pub fn detect_oscillation(
    traj: &Trajectory,
    window: f64,
    tol: f64,
    stationary_tol: f64,
) -> OscillationReport {
    let none = OscillationReport { oscillating: false, period: None };
    if traj.len() < 4 {
        return none;
    }
    let t_end = *traj.times.last().unwrap();
    if t_end < 2.0 * window {
        return none;
    }
    let in_window = |t: f64| t >= t_end - 2.0 * window;

    // terminated stationary, or any slow sample in the final window -> no
    if traj.terminated == Termination::Stationary {
        return none;
    }
    for i in 0..traj.len() {
        if traj.times[i] >= t_end - window && traj.speed(i) < stationary_tol {
            return none;
        }
    }

    let reference: Vec<f64> = {
        let (x, y) = traj.terminal_state();
        [x, y].concat()
    };
    // distances of the reference point to each polyline segment
    let mut revisit_times = Vec::new();
    let mut in_visit = false;
    for i in 0..traj.len() - 1 {
        if !in_window(traj.times[i]) {
            continue;
        }
        let a: Vec<f64> = [&traj.states[i].0[..], &traj.states[i].1[..]].concat();
        let b: Vec<f64> = [&traj.states[i + 1].0[..], &traj.states[i + 1].1[..]].concat();
        let (d, s) = point_segment_distance(&reference, &a, &b);
        if d < tol {
            if !in_visit {
                let t = traj.times[i] + s * (traj.times[i + 1] - traj.times[i]);
                revisit_times.push(t);
                in_visit = true;
            }
        } else if d > 2.0 * tol {
            in_visit = false;
        }
    }
    if revisit_times.len() < 3 {
        return none;
    }
    let intervals: Vec<f64> = revisit_times.windows(2).map(|w| w[1] - w[0]).collect();
    let mean = intervals.iter().sum::<f64>() / intervals.len() as f64;
    if mean <= 0.0 {
        return none;
    }
    let spread = intervals
        .iter()
        .map(|&d| (d - mean).abs())
        .fold(0.0f64, f64::max);
    if spread / mean < 0.25 {
        OscillationReport { oscillating: true, period: Some(mean) }
    } else {
        none
    }
}

/// Distance from point p to segment [a, b]; also returns the parameter of
/// the closest point.
fn point_segment_distance(p: &[f64], a: &[f64], b: &[f64]) -> (f64, f64) {
    let ab = vecops::sub(b, a);
    let ap = vecops::sub(p, a);
    let denom = vecops::dot(&ab, &ab);
    let s = if denom > 0.0 {
        (vecops::dot(&ap, &ab) / denom).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let closest = vecops::add_scaled(a, s, &ab);
    (vecops::dist(p, &closest), s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::LipschitzSpec;
    use crate::proxlib::ProxHandle;
    use std::sync::Arc;

    fn zero_problem() -> BlockProblem {
        BlockProblem::new(
            "zero",
            (1, 1),
            Arc::new(|_: &[f64]| 0.0),
            ProxHandle::Zero,
            Arc::new(|_: &[f64]| 0.0),
            ProxHandle::Zero,
            Arc::new(|_: &[f64], _: &[f64]| 0.0),
            Arc::new(|_: &[f64], _: &[f64]| vec![0.0]),
            Arc::new(|_: &[f64], _: &[f64]| vec![0.0]),
            LipschitzSpec::Constant(1.0),
        )
        .unwrap()
    }

    fn example1_params(lambda: f64) -> DynParams {
        DynParams::from_c(lambda, 1.0, 1.0, 1.0, 4.0).unwrap()
    }

    #[test]
    fn starts_at_initial_point() {
        let p = BlockProblem::preset("example1").unwrap();
        let traj = integrate(&p, &example1_params(0.5), &[1.0], &[0.5], &SolverConfig::default())
            .unwrap();
        assert_eq!(traj.times[0], 0.0);
        assert_eq!(traj.states[0], (vec![1.0], vec![0.5]));
        for w in traj.times.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn critical_start_terminates_immediately() {
        let p = BlockProblem::preset("example1").unwrap();
        let traj = integrate(&p, &example1_params(0.5), &[0.0], &[0.5], &SolverConfig::default())
            .unwrap();
        assert_eq!(traj.terminated, Termination::Stationary);
        let (x, y) = traj.terminal_state();
        assert!(x[0].abs() < 1e-9 && (y[0] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn converges_to_reported_point_lambda_01() {
        // reported limit (0, 1/2) for the small-lambda regime
        let p = BlockProblem::preset("example1").unwrap();
        let cfg = SolverConfig { t_max: 100.0, ..SolverConfig::default() };
        let traj = integrate(&p, &example1_params(0.1), &[1.0], &[0.5], &cfg).unwrap();
        let (x, y) = traj.terminal_state();
        assert!(x[0].abs() < 1e-2 && (y[0] - 0.5).abs() < 1e-2, "({}, {})", x[0], y[0]);
    }

    #[test]
    fn converges_to_reported_point_lambda_05() {
        let p = BlockProblem::preset("example1").unwrap();
        let cfg = SolverConfig { t_max: 100.0, ..SolverConfig::default() };
        let traj = integrate(&p, &example1_params(0.5), &[1.0], &[0.5], &cfg).unwrap();
        let (x, y) = traj.terminal_state();
        assert!((x[0] - 0.223).abs() < 5e-3 && (y[0] - 0.277).abs() < 5e-3, "({}, {})", x[0], y[0]);
    }

    #[test]
    fn palm_equals_euler_step_one() {
        let p = BlockProblem::preset("example1").unwrap();
        let params = DynParams::from_c(0.0, 1.0, 1.0, 1.0, 4.0).unwrap();
        let iterates = palm_discrete(&p, params.gamma1, params.gamma2, &[1.0], &[0.5], 100).unwrap();
        // Euler with step one on the mu = 1, lambda = 0 system
        let mut x = vec![1.0];
        let mut y = vec![0.5];
        for (k, it) in iterates.iter().enumerate() {
            assert!(
                vecops::dist(&x, &it.0) <= 1e-12 && vecops::dist(&y, &it.1) <= 1e-12,
                "diverged at iterate {k}"
            );
            let (u, v) = dynamics::gamma_rhs((&x, &y), &p, &params).unwrap();
            x = vecops::add(&x, &u);
            y = vecops::add(&y, &v);
        }
    }

    #[test]
    fn fb_equals_euler_step_one() {
        let p = BlockProblem::preset("example1").unwrap();
        let params = DynParams::from_c(1.0, 1.0, 1.0, 1.0, 4.0).unwrap();
        let iterates = fb_discrete(&p, params.gamma1, params.gamma2, &[1.0], &[0.5], 100).unwrap();
        let mut x = vec![1.0];
        let mut y = vec![0.5];
        for (k, it) in iterates.iter().enumerate() {
            assert!(
                vecops::dist(&x, &it.0) <= 1e-12 && vecops::dist(&y, &it.1) <= 1e-12,
                "diverged at iterate {k}"
            );
            let (u, v) = dynamics::gamma_rhs((&x, &y), &p, &params).unwrap();
            x = vecops::add(&x, &u);
            y = vecops::add(&y, &v);
        }
    }

    #[test]
    fn discrete_algorithms_constant_on_zero_problem() {
        let p = zero_problem();
        for seq in [
            palm_discrete(&p, 1.0, 1.0, &[1.5], &[-2.0], 10).unwrap(),
            fb_discrete(&p, 1.0, 1.0, &[1.5], &[-2.0], 10).unwrap(),
        ] {
            for (x, y) in &seq {
                assert_eq!(x, &vec![1.5]);
                assert_eq!(y, &vec![-2.0]);
            }
        }
    }

    #[test]
    fn discrete_limits_lie_on_critical_line() {
        let p = BlockProblem::preset("example1").unwrap();
        let g = 2.0; // c = 8; the step-one map cycles at c = 1 instead of converging
        for seq in [
            palm_discrete(&p, g, g, &[1.0], &[0.5], 3000).unwrap(),
            fb_discrete(&p, g, g, &[1.0], &[0.5], 3000).unwrap(),
        ] {
            let (x, y) = seq.last().unwrap();
            let report = crate::analysis::verify_critical(&p, (x, y), 1e-3, 1e-6).unwrap();
            assert!(report.residual < 1e-6, "residual {}", report.residual);
            assert!((x[0] + y[0] - 0.5).abs() < 1e-6);
        }
    }

    /// Terminal-state error of a fixed-step run against a reference,
    /// restricted to a segment where the active prox set never changes
    /// (both soft-threshold inputs stay in the linear region).
    fn fixed_step_error(method: Method, h: f64) -> f64 {
        let p = BlockProblem::preset("example1").unwrap();
        let params = example1_params(0.5);
        let t_max = 0.1;
        let run = |method: Method, step: f64| {
            let cfg = SolverConfig {
                method,
                step,
                t_max,
                stationary_tol: 1e-16,
                record_every: 1,
                ..SolverConfig::default()
            };
            integrate(&p, &params, &[3.0], &[3.0], &cfg).unwrap()
        };
        let reference = run(Method::Rk4, 1e-5);
        let approx = run(method, h);
        // confirm the active set never changes along the reference
        for (x, y) in &reference.states {
            let gx = -2.0 * (1.0 - x[0] - y[0]);
            assert!((x[0] - gx).abs() > 1.1, "x prox input near kink");
        }
        let (xr, yr) = reference.terminal_state();
        let (xa, ya) = approx.terminal_state();
        ((xr[0] - xa[0]).powi(2) + (yr[0] - ya[0]).powi(2)).sqrt()
    }

    #[test]
    fn euler_first_order_on_smooth_segment() {
        let e1 = fixed_step_error(Method::Euler, 0.02);
        let e2 = fixed_step_error(Method::Euler, 0.01);
        let order = (e1 / e2).log2();
        assert!((order - 1.0).abs() < 0.5, "observed order {order}");
    }

    #[test]
    fn rk4_fourth_order_on_smooth_segment() {
        let e1 = fixed_step_error(Method::Rk4, 0.02);
        let e2 = fixed_step_error(Method::Rk4, 0.01);
        let order = (e1 / e2).log2();
        assert!((order - 4.0).abs() < 0.5, "observed order {order}");
    }

    #[test]
    fn adaptive_agrees_with_fine_rk4() {
        for name in ["example1", "example2"] {
            let p = BlockProblem::preset(name).unwrap();
            let c = if name == "example1" { 1.0 } else { 0.3 };
            let params = DynParams::from_c(0.5, 1.0, c, c, p.lipschitz()).unwrap();
            let (x0, y0) = (vec![1.0], vec![-1.0]);
            let run = |cfg: SolverConfig| integrate(&p, &params, &x0, &y0, &cfg).unwrap();
            let a = run(SolverConfig { t_max: 10.0, stationary_tol: 1e-16, ..SolverConfig::adaptive() });
            let b = run(SolverConfig {
                method: Method::Rk4,
                step: 1e-4,
                t_max: 10.0,
                stationary_tol: 1e-16,
                ..SolverConfig::default()
            });
            let (xa, ya) = a.terminal_state();
            let (xb, yb) = b.terminal_state();
            let d = ((xa[0] - xb[0]).powi(2) + (ya[0] - yb[0]).powi(2)).sqrt();
            assert!(d < 10.0 * 1e-8, "{name}: deviation {d}");
        }
    }

    // At lambda = 0.2, c = 0.5 the exact flow converges, but a coarse Euler
    // discretization (h = 0.75) locks into a clean 3-cycle around the
    // critical segment; the detector must flag it with the right period.
    #[test]
    fn oscillation_detected_for_coarse_step_in_delicate_regime() {
        let p = BlockProblem::preset("example1").unwrap();
        let params = DynParams::from_c(0.2, 1.0, 0.5, 0.5, 4.0).unwrap();
        let cfg = SolverConfig {
            method: Method::Euler,
            step: 0.75,
            t_max: 150.0,
            record_every: 1,
            ..SolverConfig::default()
        };
        let traj = integrate(&p, &params, &[1.0], &[0.5], &cfg).unwrap();
        let report = detect_oscillation(&traj, 20.0, 1e-3, cfg.stationary_tol);
        assert!(report.oscillating, "expected oscillation, got {report:?}");
        let period = report.period.unwrap();
        assert!((period - 2.25).abs() < 0.1, "period {period}");
    }

    // With an accurate solver the same regime converges to a critical point:
    // the periodic behavior above is purely a discretization artifact.
    #[test]
    fn delicate_regime_converges_under_accurate_integration() {
        let p = BlockProblem::preset("example1").unwrap();
        let params = DynParams::from_c(0.2, 1.0, 0.5, 0.5, 4.0).unwrap();
        let cfg = SolverConfig { t_max: 100.0, ..SolverConfig::default() };
        let traj = integrate(&p, &params, &[1.0], &[0.5], &cfg).unwrap();
        assert_eq!(traj.terminated, Termination::Stationary);
        let (x, y) = traj.terminal_state();
        // limit lies on the critical segment x + y = 1/2, x, y >= 0
        assert!((x[0] + y[0] - 0.5).abs() < 1e-6, "x={} y={}", x[0], y[0]);
        assert!(x[0] >= -1e-9 && y[0] >= -1e-9);
        let report = detect_oscillation(&traj, 20.0, 1e-3, cfg.stationary_tol);
        assert!(!report.oscillating);
    }

    #[test]
    fn no_oscillation_in_convergent_regime() {
        let p = BlockProblem::preset("example1").unwrap();
        let params = DynParams::from_c(0.3, 1.0, 0.5, 0.5, 4.0).unwrap();
        let cfg = SolverConfig { t_max: 100.0, ..SolverConfig::default() };
        let traj = integrate(&p, &params, &[1.0], &[0.5], &cfg).unwrap();
        assert_eq!(traj.terminated, Termination::Stationary);
        let report = detect_oscillation(&traj, 20.0, 1e-3, cfg.stationary_tol);
        assert!(!report.oscillating);
    }

    #[test]
    fn constant_trajectory_not_oscillating() {
        let p = zero_problem();
        let params = DynParams::new(0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let traj = integrate(&p, &params, &[1.0], &[1.0], &SolverConfig::default()).unwrap();
        assert!(!detect_oscillation(&traj, 20.0, 1e-3, 1e-9).oscillating);
    }

    #[test]
    fn rhs_error_truncates_with_reason() {
        let p = BlockProblem::new(
            "blowup",
            (1, 1),
            Arc::new(|_: &[f64]| 0.0),
            ProxHandle::Zero,
            Arc::new(|_: &[f64]| 0.0),
            ProxHandle::Zero,
            Arc::new(|x: &[f64], _: &[f64]| x[0]),
            Arc::new(|x: &[f64], _: &[f64]| vec![if x[0] > 0.5 { f64::NAN } else { 1.0 }]),
            Arc::new(|_: &[f64], _: &[f64]| vec![0.0]),
            LipschitzSpec::Constant(1.0),
        )
        .unwrap();
        let params = DynParams::new(0.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let cfg = SolverConfig { t_max: 50.0, ..SolverConfig::default() };
        let traj = integrate(&p, &params, &[2.0], &[0.0], &cfg).unwrap();
        assert!(matches!(traj.terminated, Termination::Error(_)));
    }
}
