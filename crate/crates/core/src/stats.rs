//! Statistical helpers: reference CDFs, Kolmogorov-Smirnov machinery, the
//! Fisher z-transform, and a small streaming least-squares fitter.
//!
//! Everything here is generic plumbing for the test battery: nothing in this
//! module knows about paths or drifts. The distribution functions delegate
//! to `statrs`; the Kolmogorov-Smirnov tail uses the classical alternating
//! series with the finite-sample argument correction, and the least-squares
//! fitter accumulates normal equations row by row so callers can stream
//! millions of rows through a handful of regressors without materializing
//! the design matrix.

use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal};

use crate::error::{Error, Result};

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

/// Two-sided normal p-value for an (approximately) standard normal statistic.
pub fn normal_two_sided_p(z: f64) -> f64 {
    (2.0 * (1.0 - normal_cdf(z.abs()))).clamp(0.0, 1.0)
}

/// Chi-squared CDF with `k` degrees of freedom.
pub fn chi2_cdf(x: f64, k: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    ChiSquared::new(k).unwrap().cdf(x)
}

/// Two-sided (equal-tail) chi-squared p-value.
pub fn chi2_two_sided_p(x: f64, k: f64) -> f64 {
    let c = chi2_cdf(x, k);
    (2.0 * c.min(1.0 - c)).clamp(0.0, 1.0)
}

/// Upper-tail p-value of an F statistic with `(d1, d2)` degrees of freedom.
pub fn f_upper_p(x: f64, d1: f64, d2: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    (1.0 - FisherSnedecor::new(d1, d2).unwrap().cdf(x)).clamp(0.0, 1.0)
}

/// Kolmogorov tail function `Q(lambda) = 2 sum_{j>=1} (-1)^{j-1}
/// exp(-2 j^2 lambda^2)`, the asymptotic two-sided KS p-value.
pub fn ks_tail(lambda: f64) -> f64 {
    if lambda <= 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let term = (-2.0 * (j as f64) * (j as f64) * lambda * lambda).exp();
        sum += sign * term;
        if term < 1e-14 {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// One-sample KS statistic of `data` against a reference CDF. Returns
/// `D = sup |F_n - F|`.
pub fn ks_statistic(data: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::insufficient("ks_statistic: empty sample"));
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let f = cdf(x);
        let lo = i as f64 / n;
        let hi = (i + 1) as f64 / n;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    Ok(d)
}

/// One-sample KS p-value with the finite-sample argument correction
/// `lambda = (sqrt(n) + 0.12 + 0.11 / sqrt(n)) D`.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    ks_tail((sn + 0.12 + 0.11 / sn) * d)
}

/// Two-sample KS test. Returns `(D, p)` using the effective sample size
/// `n1 n2 / (n1 + n2)` in the same corrected tail.
pub fn ks_two_sample(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::insufficient("ks_two_sample: empty sample"));
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).expect("finite sample"));
    b.sort_by(|x, y| x.partial_cmp(y).expect("finite sample"));
    let (n1, n2) = (a.len(), b.len());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d = 0.0f64;
    while i < n1 && j < n2 {
        let (x, y) = (a[i], b[j]);
        if x <= y {
            i += 1;
        }
        if y <= x {
            j += 1;
        }
        let diff = (i as f64 / n1 as f64 - j as f64 / n2 as f64).abs();
        d = d.max(diff);
    }
    let ne = (n1 as f64 * n2 as f64) / (n1 + n2) as f64;
    let sn = ne.sqrt();
    Ok((d, ks_tail((sn + 0.12 + 0.11 / sn) * d)))
}

/// Pearson correlation of two equally long samples.
pub fn pearson_correlation(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("pearson_correlation: length mismatch"));
    }
    if xs.len() < 2 {
        return Err(Error::insufficient("pearson_correlation: need at least 2 points"));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::insufficient("pearson_correlation: degenerate sample"));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Fisher z statistic for a sample correlation `r` over `n` pairs:
/// `atanh(r) sqrt(n - 3)`, approximately standard normal when the pairs are
/// independent.
pub fn fisher_z(r: f64, n: usize) -> Result<f64> {
    if n < 4 {
        return Err(Error::insufficient("fisher_z: need at least 4 pairs"));
    }
    // Accumulated rounding can push a perfect correlation a few ulps past 1.
    if r.abs() > 1.0 + 1e-9 {
        return Err(Error::invalid(format!("fisher_z: correlation {r} outside [-1, 1]")));
    }
    let r = r.clamp(-1.0 + 1e-15, 1.0 - 1e-15);
    Ok(r.atanh() * ((n - 3) as f64).sqrt())
}

/// Sample mean and unbiased variance.
pub fn mean_and_variance(data: &[f64]) -> Result<(f64, f64)> {
    if data.len() < 2 {
        return Err(Error::insufficient("mean_and_variance: need at least 2 points"));
    }
    let n = data.len() as f64;
    let mean = data.iter().sum::<f64>() / n;
    let ss = data.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>();
    Ok((mean, ss / (n - 1.0)))
}

/// Streaming accumulator for ordinary least squares with a small, fixed set
/// of regressors. Rows are fed one at a time; only the `q x q` normal
/// equations are kept. The first regressor is expected to be the intercept
/// (a constant 1), which the significance test leaves untested.
#[derive(Debug, Clone)]
pub struct NormalEquations {
    q: usize,
    gram: Vec<f64>,
    xty: Vec<f64>,
    yty: f64,
    y_sum: f64,
    n: usize,
}

/// Fitted least-squares summary.
#[derive(Debug, Clone)]
pub struct OlsFit {
    /// Coefficients in input order; dropped (collinear) columns report 0.
    pub coefficients: Vec<f64>,
    /// Per-coefficient t statistics; dropped columns report 0.
    pub t_stats: Vec<f64>,
    /// Indices of columns dropped for collinearity.
    pub dropped: Vec<usize>,
    /// Residual variance estimate `RSS / (n - k)` over kept columns.
    pub residual_variance: f64,
    /// Joint F statistic for all non-intercept kept columns, with its
    /// degrees of freedom and upper-tail p-value.
    pub f_statistic: f64,
    pub f_dof: (usize, usize),
    pub f_p_value: f64,
}

impl NormalEquations {
    /// Accumulator for `q >= 2` regressors (intercept first).
    pub fn new(q: usize) -> Result<Self> {
        if q < 2 {
            return Err(Error::invalid("NormalEquations: need an intercept plus at least one regressor"));
        }
        Ok(NormalEquations { q, gram: vec![0.0; q * q], xty: vec![0.0; q], yty: 0.0, y_sum: 0.0, n: 0 })
    }

    /// Add one observation row.
    pub fn add_row(&mut self, x: &[f64], y: f64) {
        assert_eq!(x.len(), self.q, "row width mismatch");
        for i in 0..self.q {
            for j in i..self.q {
                self.gram[i * self.q + j] += x[i] * x[j];
            }
            self.xty[i] += x[i] * y;
        }
        self.yty += y * y;
        self.y_sum += y;
        self.n += 1;
    }

    /// Number of rows seen so far.
    pub fn n_rows(&self) -> usize {
        self.n
    }

    /// Solve the accumulated normal equations by Cholesky factorization,
    /// dropping any column whose pivot falls below `1e-10` times its
    /// diagonal (numerically collinear with earlier columns).
    pub fn fit(&self) -> Result<OlsFit> {
        let q = self.q;
        if self.n < q + 2 {
            return Err(Error::insufficient(format!(
                "NormalEquations: {} rows cannot support {} regressors",
                self.n, q
            )));
        }
        // Symmetrize the stored upper triangle.
        let mut g = vec![0.0; q * q];
        for i in 0..q {
            for j in i..q {
                g[i * q + j] = self.gram[i * q + j];
                g[j * q + i] = self.gram[i * q + j];
            }
        }
        // Cholesky with column dropping: kept columns get a row of L,
        // dropped ones are remembered and excluded from the solve.
        let mut kept: Vec<usize> = Vec::with_capacity(q);
        let mut dropped = Vec::new();
        let mut l = vec![0.0f64; q * q]; // row-major over kept-index pairs
        for col in 0..q {
            let k = kept.len();
            let mut row = vec![0.0f64; k + 1];
            for (r, &prev) in kept.iter().enumerate() {
                // The L-row of kept column `prev` is stored at row r.
                let mut s = g[col * q + prev];
                for m in 0..r {
                    s -= row[m] * l[r * q + m];
                }
                row[r] = s / l[r * q + r];
            }
            let mut diag = g[col * q + col];
            for m in 0..k {
                diag -= row[m] * row[m];
            }
            if diag <= 1e-10 * g[col * q + col].max(f64::MIN_POSITIVE) {
                dropped.push(col);
                continue;
            }
            row[k] = diag.sqrt();
            for (m, &v) in row.iter().enumerate() {
                l[k * q + m] = v;
            }
            kept.push(col);
        }
        let k = kept.len();
        if k == 0 {
            return Err(Error::insufficient("NormalEquations: all columns degenerate"));
        }
        // Forward/back substitution for the kept block.
        let mut z = vec![0.0f64; k];
        for r in 0..k {
            let mut s = self.xty[kept[r]];
            for m in 0..r {
                s -= l[r * q + m] * z[m];
            }
            z[r] = s / l[r * q + r];
        }
        let mut beta_kept = vec![0.0f64; k];
        for r in (0..k).rev() {
            let mut s = z[r];
            for m in r + 1..k {
                s -= l[m * q + r] * beta_kept[m];
            }
            beta_kept[r] = s / l[r * q + r];
        }
        // Residual sum of squares via the accumulators.
        let explained: f64 = (0..k).map(|r| beta_kept[r] * self.xty[kept[r]]).sum();
        let rss = (self.yty - explained).max(0.0);
        let df = self.n - k;
        let sigma2 = rss / df as f64;
        // Diagonal of (X'X)^-1 on the kept block via inv(L).
        let mut linv = vec![0.0f64; k * k];
        for r in 0..k {
            linv[r * k + r] = 1.0 / l[r * q + r];
            for c in 0..r {
                let mut s = 0.0;
                for m in c..r {
                    s -= l[r * q + m] * linv[m * k + c];
                }
                linv[r * k + c] = s / l[r * q + r];
            }
        }
        let mut coefficients = vec![0.0f64; q];
        let mut t_stats = vec![0.0f64; q];
        for (r, &col) in kept.iter().enumerate() {
            coefficients[col] = beta_kept[r];
            let ginv_rr: f64 = (r..k).map(|m| linv[m * k + r] * linv[m * k + r]).sum();
            let se = (sigma2 * ginv_rr).sqrt();
            t_stats[col] = if se > 0.0 { beta_kept[r] / se } else { 0.0 };
        }
        // Joint F for everything except the intercept: compare against the
        // intercept-only model.
        let tested = if kept.contains(&0) { k - 1 } else { k };
        let (f_statistic, f_p_value, f_dof) = if tested == 0 || sigma2 == 0.0 {
            (0.0, 1.0, (tested.max(1), df))
        } else {
            let mean = self.y_sum / self.n as f64;
            let rss0 = (self.yty - self.n as f64 * mean * mean).max(rss);
            let f = ((rss0 - rss) / tested as f64) / sigma2;
            (f, f_upper_p(f, tested as f64, df as f64), (tested, df))
        };
        Ok(OlsFit {
            coefficients,
            t_stats,
            dropped,
            residual_variance: sigma2,
            f_statistic,
            f_dof,
            f_p_value,
        })
    }
}
