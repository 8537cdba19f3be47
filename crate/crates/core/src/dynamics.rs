//! Right-hand sides of the proximal dynamical system and the stepsize
//! admissibility condition.
//!
//! The system couples the two blocks through
//!
//! ```text
//! xdot + x in prox_{f / (g1 L)} ( x - (1 / g1 L) grad_x H(x, (1-mu)(ydot+y) + mu y) )
//! ydot + y in prox_{g / (g2 L)} ( y - (1 / g2 L) grad_y H((1-lambda)(xdot+x) + lambda x, y) )
//! ```
//!
//! For `mu = 1` the first line is explicit and the pair resolves
//! sequentially (`gamma_rhs`); for `mu < 1` both lines are coupled and a
//! damped Gauss-Seidel fixed-point iteration is used (`implicit_rhs`).

use serde::Serialize;

use crate::problem::{BlockProblem, PartialLipschitz};
use crate::vecops;
use crate::{Error, Result};

/// Coupling and stepsize parameters of the dynamical system.
///
/// `c1 = gamma1 * L` and `c2 = gamma2 * L` are the derived products the
/// experiments are parameterized by.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DynParams {
    pub lambda: f64,
    pub mu: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub l: f64,
}

impl DynParams {
    pub fn new(lambda: f64, mu: f64, gamma1: f64, gamma2: f64, l: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::argument(format!("lambda must be in [0, 1], got {lambda}")));
        }
        if !(0.0..=1.0).contains(&mu) {
            return Err(Error::argument(format!("mu must be in [0, 1], got {mu}")));
        }
        for (name, v) in [("gamma1", gamma1), ("gamma2", gamma2), ("L", l)] {
            if !(v > 0.0) {
                return Err(Error::argument(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(DynParams { lambda, mu, gamma1, gamma2, l })
    }

    /// Builds parameters from the experiment-style products `c1 = gamma1 L`,
    /// `c2 = gamma2 L`.
    pub fn from_c(lambda: f64, mu: f64, c1: f64, c2: f64, l: f64) -> Result<Self> {
        if !(l > 0.0) {
            return Err(Error::argument(format!("L must be positive, got {l}")));
        }
        DynParams::new(lambda, mu, c1 / l, c2 / l, l)
    }

    pub fn c1(&self) -> f64 {
        self.gamma1 * self.l
    }

    pub fn c2(&self) -> f64 {
        self.gamma2 * self.l
    }
}

/// The Lipschitz constant of the explicit right-hand-side operator:
/// `beta = sqrt(6 + 4/g1^2 + (4 + 24 (1-lambda)^2)/g2^2 + 16 (1-lambda)^2 / (g1^2 g2^2))`.
pub fn beta_constant(lambda: f64, gamma1: f64, gamma2: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::argument(format!("lambda must be in [0, 1], got {lambda}")));
    }
    if !(gamma1 > 0.0 && gamma2 > 0.0) {
        return Err(Error::argument("stepsizes must be positive"));
    }
    let q = (1.0 - lambda) * (1.0 - lambda);
    let g1sq = gamma1 * gamma1;
    let g2sq = gamma2 * gamma2;
    Ok((6.0 + 4.0 / g1sq + (4.0 + 24.0 * q) / g2sq + 16.0 * q / (g1sq * g2sq)).sqrt())
}

/// Result of evaluating the stepsize admissibility condition
/// `min{gamma1, gamma2} > beta * M + (lambda + mu) / 2`.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub beta: f64,
    /// `M = max{ sqrt(1 + lambda + mu + lambda^2), sqrt(1 + lambda + mu + mu^2) }`
    /// (the square-root form; the decrease constants below are only valid
    /// with it).
    pub m_cap: f64,
    /// The same max without the square roots, as printed in the condition
    /// statement; reported for transparency, not used for `satisfied`.
    pub m_cap_unrooted: f64,
    pub m1: f64,
    pub m2: f64,
    /// `min{gamma1, gamma2} - (beta * M + (lambda + mu) / 2)`.
    pub margin: f64,
    pub satisfied: bool,
    /// The experiment-section specialization evaluated verbatim in c-form;
    /// it disagrees dimensionally with the main condition, so it is recorded
    /// separately and never governs `satisfied`.
    pub experiment_form: ExperimentForm,
}

/// The specialized inequality `min{c1 L, c2 L} > beta_c * (1 + lambda + lambda^2)
/// + lambda / 2` with `beta_c` evaluated on the products `c1 L`, `c2 L`,
/// exactly as printed in the experiment section.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentForm {
    pub lhs: f64,
    pub rhs: f64,
    pub satisfied: bool,
}

/// Evaluates the admissibility condition and the sufficient-decrease
/// constants `m1`, `m2`.
pub fn check_condition(params: &DynParams) -> Result<ConditionReport> {
    let DynParams { lambda, mu, gamma1, gamma2, l } = *params;
    let beta = beta_constant(lambda, gamma1, gamma2)?;
    let a1 = 1.0 + lambda + mu + lambda * lambda;
    let a2 = 1.0 + lambda + mu + mu * mu;
    let m_cap = a1.sqrt().max(a2.sqrt());
    let m_cap_unrooted = a1.max(a2);
    let shift = beta * m_cap + 0.5 * (lambda + mu);
    let m1 = l * (gamma1 - shift);
    let m2 = l * (gamma2 - shift);
    let margin = gamma1.min(gamma2) - shift;

    let c1 = params.c1();
    let c2 = params.c2();
    let c1l = c1 * l;
    let c2l = c2 * l;
    let q = (1.0 - lambda) * (1.0 - lambda);
    let beta_c = (6.0
        + 4.0 / (c1l * c1l)
        + (4.0 + 24.0 * q) / (c2l * c2l)
        + 16.0 * q / (c1l * c1l * c2l * c2l))
        .sqrt();
    let lhs = c1l.min(c2l);
    let rhs = beta_c * (1.0 + lambda + lambda * lambda) + 0.5 * lambda;

    Ok(ConditionReport {
        beta,
        m_cap,
        m_cap_unrooted,
        m1,
        m2,
        margin,
        satisfied: margin > 0.0,
        experiment_form: ExperimentForm { lhs, rhs, satisfied: lhs > rhs },
    })
}

/// Configuration of the Gauss-Seidel fixed-point iteration used by the
/// implicit right-hand sides.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FixedPointConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub damping: f64,
}

impl Default for FixedPointConfig {
    fn default() -> Self {
        FixedPointConfig { tol: 1e-12, max_iter: 200, damping: 1.0 }
    }
}

fn eval_prox_step(
    prox: &crate::proxlib::ProxHandle,
    alpha: f64,
    base: &[f64],
    grad: &[f64],
    state_for_err: &[f64],
) -> Result<Vec<f64>> {
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::Evaluation {
            detail: "non-finite gradient".into(),
            state: state_for_err.to_vec(),
        });
    }
    let arg = vecops::add_scaled(base, -alpha, grad);
    prox.evaluate(alpha, &arg)
}

/// Explicit right-hand side for `mu = 1`:
/// `u = prox_{f/(g1 L)}(x - grad_x H(x, y) / (g1 L)) - x`, then
/// `v = prox_{g/(g2 L)}(y - grad_y H((1-lambda)(u+x) + lambda x, y) / (g2 L)) - y`.
/// Evaluation is sequential: `v` consumes `u`.
pub fn gamma_rhs(
    state: (&[f64], &[f64]),
    problem: &BlockProblem,
    params: &DynParams,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if params.mu != 1.0 {
        return Err(Error::argument(format!("gamma_rhs requires mu = 1, got {}", params.mu)));
    }
    let (x, y) = state;
    let alpha1 = 1.0 / (params.gamma1 * params.l);
    let alpha2 = 1.0 / (params.gamma2 * params.l);
    let full = [x, y].concat();

    let gx = (problem.h_grad_x)(x, y);
    let px = eval_prox_step(&problem.f_prox, alpha1, x, &gx, &full)?;
    let u = vecops::sub(&px, x);

    let shifted_x: Vec<f64> = x
        .iter()
        .zip(&u)
        .map(|(&xi, &ui)| (1.0 - params.lambda) * (ui + xi) + params.lambda * xi)
        .collect();
    let gy = (problem.h_grad_y)(&shifted_x, y);
    let py = eval_prox_step(&problem.g_prox, alpha2, y, &gy, &full)?;
    let v = vecops::sub(&py, y);
    Ok((u, v))
}

/// General right-hand side for `mu < 1`, where the first line consumes
/// `v` through the argument `(1-mu)(v + y) + mu y`. Solved by alternating
/// updates until successive iterates change by less than `tol`.
/// Delegates to [`gamma_rhs`] when `mu = 1`.
pub fn implicit_rhs(
    state: (&[f64], &[f64]),
    problem: &BlockProblem,
    params: &DynParams,
    solver: &FixedPointConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if params.mu == 1.0 {
        return gamma_rhs(state, problem, params);
    }
    let alpha1 = 1.0 / (params.gamma1 * params.l);
    let alpha2 = 1.0 / (params.gamma2 * params.l);
    fixed_point(state, problem, params, solver, alpha1, alpha2)
}

/// Right-hand side of the partial-Lipschitz variant (`mu = lambda = 0`) with
/// stepsizes `1 / (gamma1 L_x)` and `1 / (gamma2 L_y)`.
pub fn palm_variant_rhs(
    state: (&[f64], &[f64]),
    problem: &BlockProblem,
    params: &DynParams,
    partial: &PartialLipschitz,
    solver: &FixedPointConfig,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if params.mu != 0.0 || params.lambda != 0.0 {
        return Err(Error::argument(format!(
            "palm_variant_rhs requires mu = lambda = 0, got ({}, {})",
            params.mu, params.lambda
        )));
    }
    let alpha1 = 1.0 / (params.gamma1 * partial.l_x);
    let alpha2 = 1.0 / (params.gamma2 * partial.l_y);
    fixed_point(state, problem, params, solver, alpha1, alpha2)
}

/// Damped Gauss-Seidel iteration on the two inclusion lines with the given
/// prox stepsizes. Starts from (u, v) = (0, 0).
fn fixed_point(
    state: (&[f64], &[f64]),
    problem: &BlockProblem,
    params: &DynParams,
    solver: &FixedPointConfig,
    alpha1: f64,
    alpha2: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let (x, y) = state;
    let full = [x, y].concat();
    let lambda = params.lambda;
    let mu = params.mu;
    let d = solver.damping;

    let mut u = vec![0.0; x.len()];
    let mut v = vec![0.0; y.len()];
    let mut residual = f64::INFINITY;
    for _ in 0..solver.max_iter {
        // u-line uses the current v through (1-mu)(v + y) + mu y
        let shifted_y: Vec<f64> = y
            .iter()
            .zip(&v)
            .map(|(&yi, &vi)| (1.0 - mu) * (vi + yi) + mu * yi)
            .collect();
        let gx = (problem.h_grad_x)(x, &shifted_y);
        let px = eval_prox_step(&problem.f_prox, alpha1, x, &gx, &full)?;
        let u_new: Vec<f64> = u
            .iter()
            .zip(vecops::sub(&px, x))
            .map(|(&ui, t)| (1.0 - d) * ui + d * t)
            .collect();

        // v-line uses the fresh u through (1-lambda)(u + x) + lambda x
        let shifted_x: Vec<f64> = x
            .iter()
            .zip(&u_new)
            .map(|(&xi, &ui)| (1.0 - lambda) * (ui + xi) + lambda * xi)
            .collect();
        let gy = (problem.h_grad_y)(&shifted_x, y);
        let py = eval_prox_step(&problem.g_prox, alpha2, y, &gy, &full)?;
        let v_new: Vec<f64> = v
            .iter()
            .zip(vecops::sub(&py, y))
            .map(|(&vi, t)| (1.0 - d) * vi + d * t)
            .collect();

        residual = vecops::dist(&u, &u_new).hypot(vecops::dist(&v, &v_new));
        u = u_new;
        v = v_new;
        if residual < solver.tol {
            return Ok((u, v));
        }
    }
    Err(Error::Convergence { iters: solver.max_iter, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::LipschitzSpec;
    use crate::proxlib::ProxHandle;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
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

    #[test]
    fn beta_hand_values() {
        // direct arithmetic on the closed form, re-evaluated by hand
        assert!((beta_constant(1.0, 1.0, 1.0).unwrap() - 14.0f64.sqrt()).abs() < 1e-12);
        assert!((beta_constant(0.0, 1.0, 1.0).unwrap() - 54.0f64.sqrt()).abs() < 1e-12);
        let b = beta_constant(1.0, 1e6, 1e6).unwrap();
        assert!(b > 6.0f64.sqrt() && b < 6.0f64.sqrt() + 1e-9);
    }

    #[test]
    fn beta_monotone_in_lambda_and_gammas() {
        let lambdas: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let gammas = [0.2, 0.5, 1.0, 2.0, 5.0, 20.0];
        for &g1 in &gammas {
            for &g2 in &gammas {
                for w in lambdas.windows(2) {
                    assert!(
                        beta_constant(w[1], g1, g2).unwrap()
                            <= beta_constant(w[0], g1, g2).unwrap() + 1e-12
                    );
                }
            }
        }
        for &l in &lambdas {
            for w in gammas.windows(2) {
                assert!(beta_constant(l, w[1], 1.0).unwrap() <= beta_constant(l, w[0], 1.0).unwrap());
                assert!(beta_constant(l, 1.0, w[1]).unwrap() <= beta_constant(l, 1.0, w[0]).unwrap());
            }
        }
    }

    #[test]
    fn condition_hand_values() {
        let p = DynParams::new(1.0, 1.0, 1.0, 1.0, 1.0).unwrap();
        let r = check_condition(&p).unwrap();
        assert!((r.beta - 14.0f64.sqrt()).abs() < 1e-12);
        // M = max{sqrt(1+1+1+1), sqrt(1+1+1+1)} = 2
        assert!((r.m_cap - 2.0).abs() < 1e-12);
        assert_eq!(r.m_cap_unrooted, 4.0);
        assert!((r.margin - (1.0 - 2.0 * 14.0f64.sqrt() - 1.0)).abs() < 1e-12);
        assert!(!r.satisfied);

        let p = DynParams::new(1.0, 1.0, 20.0, 20.0, 1.0).unwrap();
        let r = check_condition(&p).unwrap();
        assert!(r.satisfied, "{r:?}");
        assert!(r.m1 > 0.0 && r.m2 > 0.0);
    }

    #[test]
    fn condition_margin_increasing_in_gamma() {
        let mut last = f64::NEG_INFINITY;
        for g in [3.0, 5.0, 8.0, 12.0, 20.0, 50.0] {
            let p = DynParams::new(0.0, 0.0, g, g, 1.0).unwrap();
            let m = check_condition(&p).unwrap().margin;
            assert!(m > last);
            last = m;
        }
        // satisfied above the crossing
        assert!(check_condition(&DynParams::new(0.0, 0.0, 50.0, 50.0, 1.0).unwrap())
            .unwrap()
            .satisfied);
    }

    #[test]
    fn condition_margin_continuous() {
        let eps = 1e-7;
        // small perturbations change the margin proportionally
        for (l, m, g) in [(0.3, 0.7, 2.0), (0.0, 1.0, 5.0), (1.0, 0.5, 0.8)] {
            let base = check_condition(&DynParams::new(l, m, g, g, 1.0).unwrap())
                .unwrap()
                .margin;
            let pert = check_condition(&DynParams::new(l, m, g + eps, g, 1.0).unwrap())
                .unwrap()
                .margin;
            assert!((pert - base).abs() <= 100.0 * eps, "jump {}", (pert - base).abs());
        }
    }

    #[test]
    fn gamma_rhs_zero_problem_is_zero() {
        let p = zero_problem();
        let params = DynParams::new(0.3, 1.0, 1.0, 1.0, 1.0).unwrap();
        let (u, v) = gamma_rhs((&[2.0], &[-3.0]), &p, &params).unwrap();
        assert_eq!(u, vec![0.0]);
        assert_eq!(v, vec![0.0]);
    }

    #[test]
    fn gamma_rhs_fixed_point_at_critical_point() {
        // (0, 0.5) is critical for example1; the flow must be stationary there
        let p = BlockProblem::preset("example1").unwrap();
        for lambda in [0.0, 0.3, 0.7, 1.0] {
            let params = DynParams::from_c(lambda, 1.0, 1.0, 1.0, 4.0).unwrap();
            let (u, v) = gamma_rhs((&[0.0], &[0.5]), &p, &params).unwrap();
            assert!(u[0].abs() < 1e-14 && v[0].abs() < 1e-14, "lambda {lambda}: ({u:?}, {v:?})");
        }
    }

    #[test]
    fn gamma_rhs_requires_mu_one() {
        let p = zero_problem();
        let params = DynParams::new(0.0, 0.5, 1.0, 1.0, 1.0).unwrap();
        assert!(gamma_rhs((&[0.0], &[0.0]), &p, &params).is_err());
    }

    #[test]
    fn gamma_rhs_sampled_lipschitz_bound() {
        let p = BlockProblem::preset("example1").unwrap();
        let params = DynParams::from_c(0.4, 1.0, 1.0, 1.0, 4.0).unwrap();
        let beta = beta_constant(params.lambda, params.gamma1, params.gamma2).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..1000 {
            let z1 = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let z2 = [rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)];
            let (u1, v1) = gamma_rhs((&z1[..1], &z1[1..]), &p, &params).unwrap();
            let (u2, v2) = gamma_rhs((&z2[..1], &z2[1..]), &p, &params).unwrap();
            let dg = ((u1[0] - u2[0]).powi(2) + (v1[0] - v2[0]).powi(2)).sqrt();
            let dz = ((z1[0] - z2[0]).powi(2) + (z1[1] - z2[1]).powi(2)).sqrt();
            assert!(dg <= beta * dz + 1e-12, "ratio {}", dg / dz);
        }
    }

    #[test]
    fn implicit_delegates_at_mu_one() {
        let p = BlockProblem::preset("example1").unwrap();
        let params = DynParams::from_c(0.4, 1.0, 1.0, 1.0, 4.0).unwrap();
        let a = gamma_rhs((&[1.0], &[0.5]), &p, &params).unwrap();
        let b = implicit_rhs((&[1.0], &[0.5]), &p, &params, &FixedPointConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn implicit_zero_problem_one_iteration() {
        let p = zero_problem();
        let params = DynParams::new(0.2, 0.5, 1.0, 1.0, 1.0).unwrap();
        let (u, v) =
            implicit_rhs((&[1.0], &[2.0]), &p, &params, &FixedPointConfig::default()).unwrap();
        assert_eq!(u, vec![0.0]);
        assert_eq!(v, vec![0.0]);
    }

    /// Re-substitutes (u, v) into the two defining inclusion lines and
    /// returns the residual norm.
    fn resubstitution_residual(
        state: (&[f64], &[f64]),
        problem: &BlockProblem,
        params: &DynParams,
        alpha1: f64,
        alpha2: f64,
        u: &[f64],
        v: &[f64],
    ) -> f64 {
        let (x, y) = state;
        let shifted_y: Vec<f64> = y
            .iter()
            .zip(v)
            .map(|(&yi, &vi)| (1.0 - params.mu) * (vi + yi) + params.mu * yi)
            .collect();
        let gx = (problem.h_grad_x)(x, &shifted_y);
        let arg_x = vecops::add_scaled(x, -alpha1, &gx);
        let px = problem.f_prox.evaluate(alpha1, &arg_x).unwrap();
        let ru = vecops::dist(&vecops::add(u, x), &px);

        let shifted_x: Vec<f64> = x
            .iter()
            .zip(u)
            .map(|(&xi, &ui)| (1.0 - params.lambda) * (ui + xi) + params.lambda * xi)
            .collect();
        let gy = (problem.h_grad_y)(&shifted_x, y);
        let arg_y = vecops::add_scaled(y, -alpha2, &gy);
        let py = problem.g_prox.evaluate(alpha2, &arg_y).unwrap();
        let rv = vecops::dist(&vecops::add(v, y), &py);
        ru.hypot(rv)
    }

    #[test]
    fn implicit_resubstitution_example1() {
        let p = BlockProblem::preset("example1").unwrap();
        let params = DynParams::from_c(0.3, 0.5, 1.0, 1.0, 4.0).unwrap();
        let fp = FixedPointConfig { tol: 1e-12, ..Default::default() };
        let (u, v) = implicit_rhs((&[1.0], &[0.5]), &p, &params, &fp).unwrap();
        let alpha = 1.0 / (params.gamma1 * params.l);
        let r = resubstitution_residual((&[1.0], &[0.5]), &p, &params, alpha, alpha, &u, &v);
        assert!(r < 1e-10, "residual {r}");
    }

    #[test]
    fn palm_variant_matches_implicit_for_equal_constants() {
        let p = BlockProblem::preset("example1").unwrap();
        let params = DynParams::new(0.0, 0.0, 0.25, 0.25, 4.0).unwrap();
        let fp = FixedPointConfig::default();
        let partial = PartialLipschitz::new(4.0, 4.0).unwrap();
        let a = palm_variant_rhs((&[1.0], &[0.5]), &p, &params, &partial, &fp).unwrap();
        let b = implicit_rhs((&[1.0], &[0.5]), &p, &params, &fp).unwrap();
        assert!(vecops::dist(&a.0, &b.0) < 1e-12 && vecops::dist(&a.1, &b.1) < 1e-12);
    }

    #[test]
    fn palm_variant_resubstitution() {
        // partial constants of the scalar coupling: Hessian entries are 2
        let p = BlockProblem::preset("example1").unwrap();
        let params = DynParams::new(0.0, 0.0, 0.5, 0.5, 4.0).unwrap();
        let partial = PartialLipschitz::new(2.0, 2.0).unwrap();
        let fp = FixedPointConfig { tol: 1e-13, ..Default::default() };
        let (u, v) = palm_variant_rhs((&[1.0], &[0.5]), &p, &params, &partial, &fp).unwrap();
        let a1 = 1.0 / (params.gamma1 * partial.l_x);
        let a2 = 1.0 / (params.gamma2 * partial.l_y);
        let r = resubstitution_residual((&[1.0], &[0.5]), &p, &params, a1, a2, &u, &v);
        assert!(r < 1e-10, "residual {r}");
    }

    #[test]
    fn palm_variant_rejects_nonzero_mu_lambda() {
        let p = zero_problem();
        let params = DynParams::new(0.5, 0.0, 1.0, 1.0, 1.0).unwrap();
        let partial = PartialLipschitz::new(1.0, 1.0).unwrap();
        assert!(palm_variant_rhs(
            (&[0.0], &[0.0]),
            &p,
            &params,
            &partial,
            &FixedPointConfig::default()
        )
        .is_err());
    }

    #[test]
    fn fixed_points_of_gamma_are_critical() {
        // run the flow map as a discrete iteration to a fixed point, then
        // check criticality through the analysis residual
        let p = BlockProblem::preset("example1").unwrap();
        // c = 8 so the step-one discrete map contracts; at c = 1 it cycles
        let params = DynParams::from_c(0.6, 1.0, 8.0, 8.0, 4.0).unwrap();
        let mut x = vec![1.0];
        let mut y = vec![0.5];
        for _ in 0..2000 {
            let (u, v) = gamma_rhs((&x, &y), &p, &params).unwrap();
            x = vecops::add(&x, &u);
            y = vecops::add(&y, &v);
        }
        let (u, v) = gamma_rhs((&x, &y), &p, &params).unwrap();
        assert!(vecops::norm2(&u, &v) < 1e-12);
        let report = crate::analysis::verify_critical(&p, (&x, &y), 1e-3, 1e-6).unwrap();
        assert!(report.is_critical, "residual {}", report.residual);
    }
}
