//! Closed-form proximal operators for the nonsmooth blocks, plus a
//! brute-force grid argmin oracle used to validate every closed form.
//!
//! For a function `h` and `alpha > 0` the proximal map is the minimizer of
//! `h(y) + (1 / 2 alpha) ||y - x||^2`.

use std::sync::Arc;

use crate::{Error, Result};

/// A proximal operator handle. Built-in kinds are convex with single-valued,
/// non-expansive closed forms; `Custom` carries a user-supplied selection
/// (one element of a possibly set-valued map).
#[derive(Clone)]
pub enum ProxHandle {
    /// h = |.| (scalar soft threshold, applied componentwise to vectors).
    Abs,
    /// h = ||.||_1, componentwise soft threshold.
    L1,
    /// h = Huber function with transition point `delta`.
    Huber { delta: f64 },
    /// h = (weight / 2) ||.||^2.
    Quadratic { weight: f64 },
    /// Indicator of the box [lo, hi]^d.
    BoxIndicator { lo: f64, hi: f64 },
    /// h = 0; the prox is the identity.
    Zero,
    /// User-supplied selection `(alpha, point) -> prox point`.
    Custom(Arc<dyn Fn(f64, &[f64]) -> Vec<f64> + Send + Sync>),
}

impl std::fmt::Debug for ProxHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ProxHandle::Abs => write!(f, "Abs"),
            ProxHandle::L1 => write!(f, "L1"),
            ProxHandle::Huber { delta } => write!(f, "Huber({delta})"),
            ProxHandle::Quadratic { weight } => write!(f, "Quadratic({weight})"),
            ProxHandle::BoxIndicator { lo, hi } => write!(f, "BoxIndicator({lo}, {hi})"),
            ProxHandle::Zero => write!(f, "Zero"),
            ProxHandle::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl ProxHandle {
    /// Evaluates the prox at `point` with parameter `alpha > 0`. Output
    /// dimension equals input dimension.
    pub fn evaluate(&self, alpha: f64, point: &[f64]) -> Result<Vec<f64>> {
        check_alpha(alpha)?;
        match self {
            ProxHandle::Abs | ProxHandle::L1 => {
                Ok(point.iter().map(|&x| soft_threshold(alpha, x)).collect())
            }
            ProxHandle::Huber { delta } => {
                check_positive(*delta, "delta")?;
                point.iter().map(|&x| prox_huber(alpha, *delta, x)).collect()
            }
            ProxHandle::Quadratic { weight } => {
                check_positive(*weight, "weight")?;
                Ok(point.iter().map(|&x| x / (1.0 + alpha * weight)).collect())
            }
            ProxHandle::BoxIndicator { lo, hi } => {
                if lo >= hi {
                    return Err(Error::argument(format!("empty box [{lo}, {hi}]")));
                }
                Ok(point.iter().map(|&x| x.clamp(*lo, *hi)).collect())
            }
            ProxHandle::Zero => Ok(point.to_vec()),
            ProxHandle::Custom(op) => {
                let out = op(alpha, point);
                if out.len() != point.len() {
                    return Err(Error::argument(format!(
                        "custom prox changed dimension {} -> {}",
                        point.len(),
                        out.len()
                    )));
                }
                Ok(out)
            }
        }
    }

    /// Value of the underlying function `h` at `point`, when known.
    /// `Custom` handles carry no value information.
    pub fn value(&self, point: &[f64]) -> Option<f64> {
        match self {
            ProxHandle::Abs | ProxHandle::L1 => Some(point.iter().map(|x| x.abs()).sum()),
            ProxHandle::Huber { delta } => Some(point.iter().map(|&x| huber(*delta, x)).sum()),
            ProxHandle::Quadratic { weight } => {
                Some(0.5 * weight * point.iter().map(|x| x * x).sum::<f64>())
            }
            ProxHandle::BoxIndicator { lo, hi } => {
                if point.iter().all(|&x| *lo <= x && x <= *hi) {
                    Some(0.0)
                } else {
                    Some(f64::INFINITY)
                }
            }
            ProxHandle::Zero => Some(0.0),
            ProxHandle::Custom(_) => None,
        }
    }

    /// Scalar objective `h(y)` for the one-dimensional case, used to feed the
    /// grid oracle. Only available for built-in kinds.
    pub fn scalar_value(&self) -> Option<impl Fn(f64) -> f64 + '_> {
        match self {
            ProxHandle::Custom(_) => None,
            _ => Some(move |y: f64| self.value(&[y]).unwrap()),
        }
    }
}

/// The Huber function with transition point `delta`: quadratic `y^2 / 2` for
/// `|y| <= delta`, linear `delta |y| - delta^2 / 2` beyond.
pub fn huber(delta: f64, y: f64) -> f64 {
    if y.abs() <= delta {
        0.5 * y * y
    } else {
        delta * y.abs() - 0.5 * delta * delta
    }
}

fn soft_threshold(alpha: f64, x: f64) -> f64 {
    x.signum() * (x.abs() - alpha).max(0.0)
}

/// Prox of the absolute value: `sign(x) max(|x| - alpha, 0)`.
pub fn prox_abs(alpha: f64, x: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(soft_threshold(alpha, x))
}

/// Componentwise soft threshold (prox of the l1 norm).
pub fn prox_l1(alpha: f64, x: &[f64]) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    Ok(x.iter().map(|&v| soft_threshold(alpha, v)).collect())
}

/// Prox of the Huber function: `x / (1 + alpha)` in the quadratic region
/// `|x| <= delta (1 + alpha)`, otherwise `x - alpha delta sign(x)`.
pub fn prox_huber(alpha: f64, delta: f64, x: f64) -> Result<f64> {
    check_alpha(alpha)?;
    check_positive(delta, "delta")?;
    if x.abs() <= delta * (1.0 + alpha) {
        Ok(x / (1.0 + alpha))
    } else {
        Ok(x - alpha * delta * x.signum())
    }
}

/// Grid argmin of `h(y) + (1 / 2 alpha)(y - x)^2` over `[lo, hi]` with the
/// given resolution. Ties break toward the smallest grid point, so the output
/// is deterministic. This is the independent oracle every closed form is
/// validated against.
pub fn prox_oracle(
    h: impl Fn(f64) -> f64,
    alpha: f64,
    x: f64,
    lo: f64,
    hi: f64,
    step: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    if !(lo < hi) {
        return Err(Error::argument(format!("empty interval [{lo}, {hi}]")));
    }
    if !(step > 0.0) {
        return Err(Error::argument(format!("grid step must be positive, got {step}")));
    }
    let n = ((hi - lo) / step).floor() as usize;
    if n == 0 {
        return Err(Error::argument("empty grid"));
    }
    let mut best_y = lo;
    let mut best_val = f64::INFINITY;
    for i in 0..=n {
        let y = lo + i as f64 * step;
        let val = h(y) + (y - x) * (y - x) / (2.0 * alpha);
        if val < best_val {
            best_val = val;
            best_y = y;
        }
    }
    Ok(best_y)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 {
        Ok(())
    } else {
        Err(Error::argument(format!("alpha must be positive, got {alpha}")))
    }
}

fn check_positive(v: f64, name: &str) -> Result<()> {
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::argument(format!("{name} must be positive, got {v}")))
    }
}
