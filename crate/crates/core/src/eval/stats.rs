use statrs::distribution::{ContinuousCDF, StudentsT};

use super::EvalError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TTest {
    pub t: f64,
    /// Two-tailed p-value.
    pub p: f64,
    pub df: usize,
}

/// Paired two-tailed t-test on `a[i] - b[i]`.
///
/// Conventions for degenerate samples: all-zero differences give `t = 0,
/// p = 1`; a constant non-zero difference gives `t = ±∞, p = 0`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest, EvalError> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(EvalError::SampleSize(a.len(), b.len()));
    }
    let n = a.len();
    let df = n - 1;
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if diffs.iter().all(|&d| d == 0.0) {
        return Ok(TTest { t: 0.0, p: 1.0, df });
    }
    let mean = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / df as f64;
    // Differences equal up to rounding count as constant.
    if var <= (mean.abs() * 1e-12).powi(2) {
        return Ok(TTest {
            t: mean.signum() * f64::INFINITY,
            p: 0.0,
            df,
        });
    }
    let t = mean / (var / n as f64).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("df >= 1");
    let p = (2.0 * dist.sf(t.abs())).min(1.0);
    Ok(TTest { t, p, df })
}

/// Exponential moving average: `out[0] = x[0]`,
/// `out[t] = α x[t] + (1 - α) out[t - 1]`.
pub fn ema(series: &[f64], alpha: f64) -> Result<Vec<f64>, EvalError> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(EvalError::InvalidAlpha(alpha));
    }
    let mut out = Vec::with_capacity(series.len());
    for &x in series {
        let next = match out.last() {
            None => x,
            Some(&prev) => alpha * x + (1.0 - alpha) * prev,
        };
        out.push(next);
    }
    Ok(out)
}
