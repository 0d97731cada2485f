use crate::{Error, Result};

/// `0.5·d²/β` for `|d| < β`, else `|d| − 0.5·β`, with `d = pred − target`.
pub fn smooth_l1(pred: f64, target: f64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let d = (pred - target).abs();
    Ok(if d < beta { 0.5 * d * d / beta } else { d - 0.5 * beta })
}

/// `∂ smooth_l1 / ∂ pred`.
pub fn smooth_l1_grad(pred: f64, target: f64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    let d = pred - target;
    Ok(if d.abs() < beta { d / beta } else { d.signum() })
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::Parameter(format!("smooth_l1 beta must be > 0, got {beta}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        assert_eq!(smooth_l1(1.0, 1.0, 0.1).unwrap(), 0.0);
        assert_eq!(smooth_l1(0.5, 0.0, 1.0).unwrap(), 0.125);
        assert_eq!(smooth_l1(3.0, 0.0, 1.0).unwrap(), 2.5);
        assert!(matches!(smooth_l1(0.0, 0.0, 0.0), Err(Error::Parameter(_))));
        assert!(smooth_l1_grad(0.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn continuous_at_the_transition() {
        for beta in [0.1, 1.0, 2.5] {
            let (lo, hi) = (beta - 1e-6, beta + 1e-6);
            let v = |d: f64| smooth_l1(d, 0.0, beta).unwrap();
            let g = |d: f64| smooth_l1_grad(d, 0.0, beta).unwrap();
            assert!((v(lo) - v(hi)).abs() < 1e-5);
            assert!((g(lo) - g(hi)).abs() < 1e-5);
            assert!((g(-lo) - g(-hi)).abs() < 1e-5);
        }
    }

    proptest! {
        #[test]
        fn gradient_matches_finite_differences(d in -5.0f64..5.0, beta in 0.05f64..2.0) {
            prop_assume!((d.abs() - beta).abs() > 1e-3);
            let h = 1e-7;
            let num = (smooth_l1(d + h, 0.0, beta).unwrap() - smooth_l1(d - h, 0.0, beta).unwrap()) / (2.0 * h);
            prop_assert!((num - smooth_l1_grad(d, 0.0, beta).unwrap()).abs() < 1e-6);
            prop_assert!(smooth_l1(d, 0.0, beta).unwrap() >= 0.0);
        }
    }
}
