//! Straight-line least squares with standard errors.

use serde::Serialize;

use crate::error::{Error, Result};

/// `y ≈ intercept + slope·x`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub intercept_stderr: f64,
    pub n: usize,
}

/// Ordinary least squares.
pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    fit_line_weighted(x, y, &vec![1.0; x.len()])
}

/// Weighted least squares with weights `w_k ∝ 1/var(y_k)`.
///
/// Standard errors use the residual scatter (not the absolute weights), so
/// they are meaningful when the weights are only relative.
pub fn fit_line_weighted(x: &[f64], y: &[f64], w: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if y.len() != n || w.len() != n {
        return Err(Error::InvalidParameter(format!(
            "fit needs matching lengths, got {n}, {}, {}",
            y.len(),
            w.len()
        )));
    }
    if n < 2 {
        return Err(Error::InsufficientSamples { have: n, need: 2 });
    }
    if w.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
        return Err(Error::InvalidParameter("fit weights must be positive".into()));
    }
    let sw: f64 = w.iter().sum();
    let mx = w.iter().zip(x).map(|(w, x)| w * x).sum::<f64>() / sw;
    let my = w.iter().zip(y).map(|(w, y)| w * y).sum::<f64>() / sw;
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::ZeroDenominator("abscissae are all equal"));
    }
    let sxy: f64 = (0..n).map(|k| w[k] * (x[k] - mx) * (y[k] - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let (slope_stderr, intercept_stderr) = if n > 2 {
        let rss: f64 = (0..n)
            .map(|k| {
                let r = y[k] - intercept - slope * x[k];
                w[k] * r * r
            })
            .sum();
        let s2 = rss / (n - 2) as f64;
        ((s2 / sxx).sqrt(), (s2 * (1.0 / sw + mx * mx / sxx)).sqrt())
    } else {
        (0.0, 0.0)
    };
    Ok(LineFit {
        slope,
        intercept,
        slope_stderr,
        intercept_stderr,
        n,
    })
}

/// Fit of `log y` against `log x`; all values must be positive.
pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.iter().chain(y).any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidParameter("log-log fit needs positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    fit_line(&lx, &ly)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_line() {
        let x = [1.0, 2.0, 3.0, 5.0];
        let y: Vec<f64> = x.iter().map(|x| 3.0 - 2.0 * x).collect();
        let f = fit_line(&x, &y).unwrap();
        assert!((f.slope + 2.0).abs() < 1e-14 && (f.intercept - 3.0).abs() < 1e-14);
        assert!(f.slope_stderr < 1e-12);
        assert!(fit_line(&[1.0], &[1.0]).is_err());
        assert!(fit_line(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn stderr_matches_textbook() {
        // y = 1, 3, 2, 5 at x = 0..3: slope 1.1, RSS = 2.7, sxx = 5.
        let f = fit_line(&[0.0, 1.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 5.0]).unwrap();
        assert!((f.slope - 1.1).abs() < 1e-14);
        assert!((f.slope_stderr - (1.35f64 / 5.0).sqrt()).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn scaling_weights_changes_nothing(k in 0.1f64..10.0, ys in proptest::collection::vec(-5.0f64..5.0, 4..12)) {
            let x: Vec<f64> = (0..ys.len()).map(|i| i as f64).collect();
            let w: Vec<f64> = (0..ys.len()).map(|i| 1.0 + i as f64).collect();
            let wk: Vec<f64> = w.iter().map(|v| v * k).collect();
            let a = fit_line_weighted(&x, &ys, &w).unwrap();
            let b = fit_line_weighted(&x, &ys, &wk).unwrap();
            prop_assert!((a.slope - b.slope).abs() < 1e-9);
            prop_assert!((a.slope_stderr - b.slope_stderr).abs() < 1e-9);
        }
    }
}
