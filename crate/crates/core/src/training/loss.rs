//! Squared-error loss with level guidance for the horizon net.
//!
//! Per window, summed over series `i`:
//!
//! ```text
//! Σ_t (x̂_{i,t} − x_{i,t})²  +  α · (mean_t x_{i,t} − level_h,i)²
//! ```
//!
//! where `t` runs over the `H` horizon steps. A batch loss is the sum over its
//! windows. Only the level coefficient is guided; the scale is left free.

use crate::error::{Error, Result};
use crate::tape::{GradTape, Var};
use crate::tensor::Tensor;

/// The two additive parts of the loss for one or more windows.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossTerms {
    pub squared_error: f64,
    pub guidance: f64,
}

impl LossTerms {
    pub fn total(&self, alpha: f64) -> f64 {
        self.squared_error + alpha * self.guidance
    }
}

impl core::ops::AddAssign for LossTerms {
    fn add_assign(&mut self, rhs: Self) {
        self.squared_error += rhs.squared_error;
        self.guidance += rhs.guidance;
    }
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha.is_finite() && alpha >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(alloc::format!(
            "guidance weight must be finite and ≥ 0, got {alpha}"
        )))
    }
}

/// Loss terms for one window: `forecast` and `target` are time-major `[H, N]`.
pub fn loss_terms(forecast: &Tensor, target: &Tensor, hori_level: Option<&[f64]>) -> Result<LossTerms> {
    if forecast.shape() != target.shape() || forecast.rank() != 2 {
        return Err(Error::ShapeMismatch {
            op: "dish_loss",
            lhs: forecast.shape().to_vec(),
            rhs: target.shape().to_vec(),
        });
    }
    let squared_error = forecast
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, y)| (p - y) * (p - y))
        .sum();
    let guidance = match hori_level {
        None => 0.0,
        Some(level) => {
            let (h, n) = (target.rows(), target.cols());
            if level.len() != n {
                return Err(Error::ShapeMismatch {
                    op: "dish_loss",
                    lhs: alloc::vec![n],
                    rhs: alloc::vec![level.len()],
                });
            }
            (0..n)
                .map(|i| {
                    let mean = (0..h).map(|t| target.at(t, i)).sum::<f64>() / h as f64;
                    (mean - level[i]) * (mean - level[i])
                })
                .sum()
        }
    };
    Ok(LossTerms {
        squared_error,
        guidance,
    })
}

/// Loss for one window with guidance weight `alpha`.
pub fn dish_loss(forecast: &Tensor, target: &Tensor, hori_level: Option<&[f64]>, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    Ok(loss_terms(forecast, target, hori_level)?.total(alpha))
}

/// Tape handles for the loss of one window.
#[derive(Debug, Clone, Copy)]
pub struct LossVars {
    pub total: Var,
    pub squared_error: Var,
    pub guidance: Option<Var>,
}

/// Records the loss for a series-major `[N, H]` forecast against a
/// series-major target.
pub fn loss_on_tape(
    tape: &mut GradTape,
    forecast: Var,
    target: &Tensor,
    hori_level: Option<Var>,
    alpha: f64,
) -> Result<LossVars> {
    check_alpha(alpha)?;
    let target = tape.constant(target.clone())?;
    let diff = tape.sub(forecast, target)?;
    let sq = tape.square(diff)?;
    let squared_error = tape.sum(sq)?;
    let Some(level) = hori_level else {
        return Ok(LossVars {
            total: squared_error,
            squared_error,
            guidance: None,
        });
    };
    let horizon_mean = tape.mean_last(target)?;
    let gap = tape.sub(horizon_mean, level)?;
    let gap_sq = tape.square(gap)?;
    let guidance = tape.sum(gap_sq)?;
    let weight = tape.constant(Tensor::scalar(alpha))?;
    let weighted = tape.mul(guidance, weight)?;
    let total = tape.add(squared_error, weighted)?;
    Ok(LossVars {
        total,
        squared_error,
        guidance: Some(guidance),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn col(x: &[f64]) -> Tensor {
        Tensor::new(vec![x.len(), 1], x.to_vec()).unwrap()
    }

    #[test]
    fn perfect_fit_is_zero() {
        let y = col(&[2.0, 4.0]);
        assert_eq!(dish_loss(&y, &y, Some(&[3.0]), 0.7).unwrap(), 0.0);
    }

    #[test]
    fn hand_example() {
        let y = col(&[2.0, 4.0]);
        assert_eq!(dish_loss(&y, &y, Some(&[1.0]), 0.5).unwrap(), 2.0);
    }

    #[test]
    fn alpha_zero_is_plain_squared_error() {
        let p = col(&[1.0, 3.0]);
        let y = col(&[2.0, 5.0]);
        assert_eq!(dish_loss(&p, &y, Some(&[100.0]), 0.0).unwrap(), 5.0);
    }

    #[test]
    fn negative_alpha_is_config_error() {
        let y = col(&[1.0]);
        assert!(matches!(dish_loss(&y, &y, None, -0.1), Err(Error::Config(_))));
    }

    #[test]
    fn tape_loss_matches_plain_loss() {
        let p = Tensor::from_rows(&[[1.0, 2.0], [3.0, -1.0], [0.5, 0.0]]).unwrap();
        let y = Tensor::from_rows(&[[1.5, 2.5], [2.0, -2.0], [1.0, 1.0]]).unwrap();
        let level = [0.25, -0.75];
        let plain = dish_loss(&p, &y, Some(&level), 0.3).unwrap();
        let mut tape = GradTape::new();
        let pv = tape.constant(p.transpose().unwrap()).unwrap();
        let lv = tape.constant(Tensor::vector(level.to_vec())).unwrap();
        let vars = loss_on_tape(&mut tape, pv, &y.transpose().unwrap(), Some(lv), 0.3).unwrap();
        assert!((tape.value(vars.total).item().unwrap() - plain).abs() < 1e-12);
    }
}
