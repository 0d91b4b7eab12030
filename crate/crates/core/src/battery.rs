//! A statistical test battery for "is this ensemble of paths Brownian?".
//!
//! The battery consumes an ensemble of paths sampled on a shared grid and
//! runs six checks: terminal mean, terminal variance, pooled increment
//! normality, quadratic variation, a self-filtration martingale regression,
//! and cross-interval increment independence. Five of the checks produce
//! p-values; the overall verdict applies a Bonferroni correction across
//! those five. The quadratic-variation check compares against a fixed
//! tolerance instead (its discretization error is deterministic in scale,
//! not a null hypothesis).
//!
//! The martingale check is the heart of the matter: it regresses the
//! future increment `M_t - M_s` on summaries of the path's own past
//! (level, sign, magnitude, running maximum, accumulated local time) and
//! demands that nothing predicts. Hidden-drift observations pass this test
//! — that is the camouflage property — yet the same regression rejects
//! instantly when the hidden sign is revealed as an extra regressor, which
//! [`test_self_filtration_with_extra`] exposes for exactly that
//! demonstration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy::levy_transform;
use crate::paths::{sample_brownian, PathSample, SeededRng, TimeGrid};
use crate::stats::{
    chi2_two_sided_p, fisher_z, ks_p_value, ks_statistic, mean_and_variance, normal_cdf,
    normal_two_sided_p, NormalEquations, OlsFit,
};

/// Number of battery entries that carry a p-value (everything except the
/// quadratic-variation tolerance check).
pub const P_VALUED_TESTS: usize = 5;

/// An ensemble of candidate paths on a common grid, all started at zero.
#[derive(Debug, Clone)]
pub struct Ensemble {
    source: String,
    grid: TimeGrid,
    paths: Vec<PathSample>,
}

impl Ensemble {
    /// Wrap paths into an ensemble. Requires at least two paths, identical
    /// grids, and every path starting at exactly zero.
    pub fn new(source: impl Into<String>, paths: Vec<PathSample>) -> Result<Self> {
        if paths.len() < 2 {
            return Err(Error::insufficient(format!(
                "an ensemble needs at least 2 paths, got {}",
                paths.len()
            )));
        }
        let grid = paths[0].grid();
        for (i, p) in paths.iter().enumerate() {
            if p.grid() != grid {
                return Err(Error::invalid(format!("path {i} is on a different grid")));
            }
            if p.value(0) != 0.0 {
                return Err(Error::invalid(format!(
                    "path {i} starts at {}, candidate paths must start at 0",
                    p.value(0)
                )));
            }
        }
        Ok(Ensemble { source: source.into(), grid, paths })
    }

    /// Sample an ensemble of independent Brownian paths. Path `i` of run
    /// `run_id` draws from stream `(run_id << 32) | i`, so distinct runs
    /// and paths never share noise.
    pub fn sample_brownian(
        grid: TimeGrid,
        n_paths: usize,
        master_seed: u64,
        run_id: u64,
    ) -> Result<Self> {
        if n_paths >= (1usize << 32) {
            return Err(Error::invalid("at most 2^32 - 1 paths per run"));
        }
        let paths = (0..n_paths)
            .map(|i| {
                sample_brownian(grid, SeededRng::new(master_seed, (run_id << 32) | i as u64))
            })
            .collect();
        Ensemble::new(format!("brownian[seed={master_seed},run={run_id}]"), paths)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.paths.len()
    }

    pub fn paths(&self) -> &[PathSample] {
        &self.paths
    }
}

/// Battery options.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BatteryConfig {
    /// Family-wise significance level; each p-valued entry is judged at
    /// `alpha / 5`.
    pub alpha: f64,
    /// Pooling width for the increment-normality check; must divide the
    /// grid's step count. `None` pools raw grid increments.
    pub n_subintervals: Option<usize>,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        BatteryConfig { alpha: 0.05, n_subintervals: None }
    }
}

/// One battery entry: a named statistic, its p-value when the entry is a
/// hypothesis test, the threshold it was judged against (a p-value cutoff,
/// or a direct tolerance for the quadratic-variation check), and notes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestEntry {
    pub name: String,
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub threshold: f64,
    pub pass: bool,
    pub notes: String,
}

impl TestEntry {
    fn from_p(name: &str, statistic: f64, p: f64, alpha: f64, notes: String) -> Self {
        TestEntry {
            name: name.to_string(),
            statistic,
            p_value: Some(p),
            threshold: alpha,
            pass: p >= alpha,
            notes,
        }
    }
}

/// Full battery outcome.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BatteryReport {
    pub source: String,
    pub n_paths: usize,
    pub n_steps: usize,
    pub dt: f64,
    pub alpha: f64,
    /// Bonferroni-corrected per-entry level `alpha / 5`.
    pub alpha_effective: f64,
    pub entries: Vec<TestEntry>,
    pub verdict: bool,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha.is_finite() && 0.0 < alpha && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Terminal mean and variance of the ensemble against N(0, T). The mean is
/// a two-sided z-test with standard error sqrt(T/n); the variance compares
/// `(n-1) s^2 / T` against chi-square with `n - 1` degrees of freedom,
/// two-sided. Needs at least 100 paths for the variance reference to be
/// meaningful at the battery's levels.
pub fn test_terminal_moments(ensemble: &Ensemble, alpha: f64) -> Result<(TestEntry, TestEntry)> {
    check_alpha(alpha)?;
    let n = ensemble.n_paths();
    if n < 100 {
        return Err(Error::insufficient(format!(
            "terminal-moment tests need at least 100 paths, got {n}"
        )));
    }
    let horizon = ensemble.grid().horizon();
    let terminals: Vec<f64> = ensemble.paths().iter().map(|p| p.terminal()).collect();
    let (mean, var) = mean_and_variance(&terminals)?;
    let z = mean / (horizon / n as f64).sqrt();
    let mean_entry = TestEntry::from_p(
        "terminal_mean",
        z,
        normal_two_sided_p(z),
        alpha,
        format!("mean = {mean:.6}, se = {:.6}", (horizon / n as f64).sqrt()),
    );
    let chi2 = (n as f64 - 1.0) * var / horizon;
    let var_p = chi2_two_sided_p(chi2, n as f64 - 1.0);
    let notes = if var == 0.0 {
        "degenerate ensemble: zero terminal variance".to_string()
    } else {
        format!("variance = {var:.6}, expected {horizon:.6}")
    };
    let var_entry = TestEntry::from_p("terminal_variance", chi2, var_p, alpha, notes);
    Ok((mean_entry, var_entry))
}

/// Kolmogorov-Smirnov test of pooled standardized increments against the
/// standard normal. The grid is split into `n_subintervals` blocks (which
/// must divide the step count); each block increment is standardized by
/// the square root of its duration and all paths are pooled.
pub fn test_increment_normality(
    ensemble: &Ensemble,
    n_subintervals: usize,
    alpha: f64,
) -> Result<TestEntry> {
    check_alpha(alpha)?;
    let n_steps = ensemble.grid().n_steps();
    if n_subintervals == 0 || n_steps % n_subintervals != 0 {
        return Err(Error::invalid(format!(
            "n_subintervals = {n_subintervals} must divide the step count {n_steps}"
        )));
    }
    let stride = n_steps / n_subintervals;
    let sqrt_len = (ensemble.grid().dt() * stride as f64).sqrt();
    let mut pooled = Vec::with_capacity(ensemble.n_paths() * n_subintervals);
    for path in ensemble.paths() {
        for j in 0..n_subintervals {
            let inc = path.value((j + 1) * stride) - path.value(j * stride);
            pooled.push(inc / sqrt_len);
        }
    }
    let d = ks_statistic(&pooled, normal_cdf)?;
    let p = ks_p_value(d, pooled.len());
    Ok(TestEntry::from_p(
        "increment_normality",
        d,
        p,
        alpha,
        format!("{} pooled increments across {n_subintervals} blocks", pooled.len()),
    ))
}

/// Mean relative quadratic-variation error `|QV/T - 1|` against a
/// tolerance of `max(0.02, 6 sqrt(2 dt / T))` — the per-path sampling
/// noise of QV scaled up — rather than a p-value: for |H| = 1 transforms
/// the QV identity is exact and only discretization noise remains.
pub fn test_quadratic_variation(ensemble: &Ensemble) -> Result<TestEntry> {
    let horizon = ensemble.grid().horizon();
    let mut total = 0.0;
    for path in ensemble.paths() {
        let qv: f64 = path.increments().iter().map(|d| d * d).sum();
        total += (qv / horizon - 1.0).abs();
    }
    let statistic = total / ensemble.n_paths() as f64;
    let tolerance = 0.02f64.max(6.0 * (2.0 * ensemble.grid().dt() / horizon).sqrt());
    Ok(TestEntry {
        name: "quadratic_variation".to_string(),
        statistic,
        p_value: None,
        threshold: tolerance,
        pass: statistic <= tolerance,
        notes: format!("mean |QV/T - 1| over {} paths", ensemble.n_paths()),
    })
}

fn sign_of(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Self-filtration martingale regression with an optional extra per-path
/// regressor. Regresses `M_T - M_s` (with `s` the midpoint grid time) on
/// an intercept plus five summaries of the path up to `s`: level, sign,
/// magnitude, running maximum, and accumulated local time at zero. The
/// statistic is the joint F-test that every non-intercept coefficient
/// vanishes. The fitted coefficients are returned for diagnostics — pass
/// the hidden sign as `extra` and its t-statistic exposes the drift the
/// path summaries cannot see.
pub fn test_self_filtration_with_extra(
    ensemble: &Ensemble,
    alpha: f64,
    extra: Option<(&str, &[f64])>,
) -> Result<(TestEntry, OlsFit)> {
    check_alpha(alpha)?;
    let grid = ensemble.grid();
    let s_idx = grid.n_steps() / 2;
    if s_idx == 0 {
        return Err(Error::insufficient("martingale regression needs at least 2 grid steps"));
    }
    if let Some((name, values)) = extra {
        if values.len() != ensemble.n_paths() {
            return Err(Error::invalid(format!(
                "extra regressor '{name}' has {} entries for {} paths",
                values.len(),
                ensemble.n_paths()
            )));
        }
    }
    let q = if extra.is_some() { 7 } else { 6 };
    if ensemble.n_paths() < q + 2 {
        return Err(Error::insufficient(format!(
            "martingale regression needs at least {} paths, got {}",
            q + 2,
            ensemble.n_paths()
        )));
    }
    let head_grid = TimeGrid::new(grid.dt(), s_idx)?;
    let mut eqs = NormalEquations::new(q)?;
    for (i, path) in ensemble.paths().iter().enumerate() {
        let m_s = path.value(s_idx);
        let response = path.terminal() - m_s;
        let head = PathSample::new(head_grid, path.values()[..=s_idx].to_vec())?;
        let running_max = head.values().iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v));
        let local_time = levy_transform(&head)?.local_time().terminal();
        let mut row = vec![1.0, m_s, sign_of(m_s), m_s.abs(), running_max, local_time];
        if let Some((_, values)) = extra {
            row.push(values[i]);
        }
        eqs.add_row(&row, response);
    }
    let fit = eqs.fit()?;
    let mut notes = format!(
        "regressors: [1, M_s, sign, |M_s|, max, L_s{}], s = {:.6}",
        extra.map(|(n, _)| format!(", {n}")).unwrap_or_default(),
        grid.time(s_idx)
    );
    if !fit.dropped.is_empty() {
        notes.push_str(&format!("; dropped collinear columns {:?}", fit.dropped));
    }
    let entry =
        TestEntry::from_p("martingale_self_filtration", fit.f_statistic, fit.f_p_value, alpha, notes);
    Ok((entry, fit))
}

/// Self-filtration martingale regression with the standard dictionary.
pub fn test_self_filtration_martingale(ensemble: &Ensemble, alpha: f64) -> Result<TestEntry> {
    test_self_filtration_with_extra(ensemble, alpha, None).map(|(entry, _)| entry)
}

/// Cross-interval independence: correlations of increments over three
/// disjoint interval pairs (first vs second quarter, third vs fourth
/// quarter, first vs second half), each Fisher-z tested, Bonferroni
/// corrected within the entry. The statistic is the largest |z|.
pub fn test_increment_independence(ensemble: &Ensemble, alpha: f64) -> Result<TestEntry> {
    check_alpha(alpha)?;
    let n_steps = ensemble.grid().n_steps();
    if n_steps < 4 {
        return Err(Error::insufficient("independence test needs at least 4 grid steps"));
    }
    let q = n_steps / 4;
    let pairs: [((usize, usize), (usize, usize)); 3] = [
        ((0, q), (q, 2 * q)),
        ((2 * q, 3 * q), (3 * q, n_steps.min(4 * q))),
        ((0, n_steps / 2), (n_steps / 2, n_steps)),
    ];
    let mut max_abs_z = 0.0f64;
    let mut detail = Vec::new();
    for (a, b) in pairs {
        let xs: Vec<f64> =
            ensemble.paths().iter().map(|p| p.value(a.1) - p.value(a.0)).collect();
        let ys: Vec<f64> =
            ensemble.paths().iter().map(|p| p.value(b.1) - p.value(b.0)).collect();
        let r = crate::stats::pearson_correlation(&xs, &ys)?;
        let z = fisher_z(r, ensemble.n_paths())?;
        max_abs_z = max_abs_z.max(z.abs());
        detail.push(format!("r = {r:.4}"));
    }
    let p = (pairs.len() as f64 * normal_two_sided_p(max_abs_z)).min(1.0);
    Ok(TestEntry::from_p(
        "increment_independence",
        max_abs_z,
        p,
        alpha,
        format!("3 interval pairs, {}", detail.join(", ")),
    ))
}

/// Run the whole battery. P-valued entries are judged at `alpha / 5`
/// (Bonferroni); the verdict requires every entry to pass.
pub fn run_battery(ensemble: &Ensemble, config: &BatteryConfig) -> Result<BatteryReport> {
    check_alpha(config.alpha)?;
    let alpha_eff = config.alpha / P_VALUED_TESTS as f64;
    let n_sub = config.n_subintervals.unwrap_or_else(|| ensemble.grid().n_steps());
    let (mean_entry, var_entry) = test_terminal_moments(ensemble, alpha_eff)?;
    let entries = vec![
        mean_entry,
        var_entry,
        test_increment_normality(ensemble, n_sub, alpha_eff)?,
        test_quadratic_variation(ensemble)?,
        test_self_filtration_martingale(ensemble, alpha_eff)?,
        test_increment_independence(ensemble, alpha_eff)?,
    ];
    let verdict = entries.iter().all(|e| e.pass);
    Ok(BatteryReport {
        source: ensemble.source().to_string(),
        n_paths: ensemble.n_paths(),
        n_steps: ensemble.grid().n_steps(),
        dt: ensemble.grid().dt(),
        alpha: config.alpha,
        alpha_effective: alpha_eff,
        entries,
        verdict,
    })
}

/// Rejection rate of one p-valued test over repeated null runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationRate {
    pub test: String,
    pub rejections: usize,
    pub rate: f64,
    pub in_window: bool,
}

/// Calibration outcome: per-test rejection rates on freshly sampled
/// Brownian ensembles, judged at raw `alpha` per test, against the window
/// `[alpha/2, 2 alpha]`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub n_runs: usize,
    pub n_paths: usize,
    pub n_steps: usize,
    pub dt: f64,
    pub alpha: f64,
    pub window: (f64, f64),
    pub rates: Vec<CalibrationRate>,
    pub all_in_window: bool,
}

/// Estimate per-test type-I error by running the battery's p-valued tests
/// on `n_runs` independent Brownian ensembles and rejecting at raw
/// `alpha`. A healthy battery lands every rate inside `[alpha/2, 2 alpha]`.
/// The quadratic-variation check has no p-value and is excluded.
pub fn calibration_rejection_rates(
    grid: TimeGrid,
    n_paths: usize,
    n_runs: usize,
    alpha: f64,
    master_seed: u64,
) -> Result<CalibrationReport> {
    check_alpha(alpha)?;
    if n_runs == 0 {
        return Err(Error::insufficient("calibration needs at least one run"));
    }
    let names = [
        "terminal_mean",
        "terminal_variance",
        "increment_normality",
        "martingale_self_filtration",
        "increment_independence",
    ];
    let mut rejections = [0usize; 5];
    for run in 0..n_runs {
        let ensemble = Ensemble::sample_brownian(grid, n_paths, master_seed, run as u64)?;
        let (mean_entry, var_entry) = test_terminal_moments(&ensemble, alpha)?;
        let entries = [
            mean_entry,
            var_entry,
            test_increment_normality(&ensemble, grid.n_steps(), alpha)?,
            test_self_filtration_martingale(&ensemble, alpha)?,
            test_increment_independence(&ensemble, alpha)?,
        ];
        for (slot, entry) in rejections.iter_mut().zip(entries.iter()) {
            let p = entry.p_value.expect("calibration entries carry p-values");
            if p < alpha {
                *slot += 1;
            }
        }
    }
    let window = (alpha / 2.0, 2.0 * alpha);
    let rates: Vec<CalibrationRate> = names
        .iter()
        .zip(rejections.iter())
        .map(|(name, &r)| {
            let rate = r as f64 / n_runs as f64;
            CalibrationRate {
                test: name.to_string(),
                rejections: r,
                rate,
                in_window: window.0 <= rate && rate <= window.1,
            }
        })
        .collect();
    let all_in_window = rates.iter().all(|r| r.in_window);
    Ok(CalibrationReport {
        n_runs,
        n_paths,
        n_steps: grid.n_steps(),
        dt: grid.dt(),
        alpha,
        window,
        rates,
        all_in_window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filtering::{simulate_hidden_path, DriftScenario};
    use crate::paths::{brownian_from_increments, sample_brownian_increments};

    fn brownian_test_ensemble(n_paths: usize, n_steps: usize, seed: u64) -> Ensemble {
        let grid = TimeGrid::new(1.0 / n_steps as f64, n_steps).unwrap();
        Ensemble::sample_brownian(grid, n_paths, seed, 0).unwrap()
    }

    #[test]
    fn ensemble_construction_is_validated() {
        let grid = TimeGrid::new(0.01, 10).unwrap();
        let one = vec![sample_brownian(grid, SeededRng::new(1, 0))];
        assert!(Ensemble::new("x", one).is_err(), "one path is not an ensemble");
        let other_grid = TimeGrid::new(0.02, 10).unwrap();
        let mixed = vec![
            sample_brownian(grid, SeededRng::new(1, 0)),
            sample_brownian(other_grid, SeededRng::new(1, 1)),
        ];
        assert!(Ensemble::new("x", mixed).is_err(), "grids must match");
        let shifted = PathSample::new(grid, vec![1.0; 11]).unwrap();
        let bad_start = vec![sample_brownian(grid, SeededRng::new(1, 0)), shifted];
        assert!(Ensemble::new("x", bad_start).is_err(), "paths must start at 0");
    }

    #[test]
    fn brownian_null_passes_battery() {
        let ensemble = brownian_test_ensemble(256, 256, 8101);
        let report = run_battery(&ensemble, &BatteryConfig::default()).unwrap();
        for entry in &report.entries {
            assert!(entry.pass, "entry {} failed: {:?}", entry.name, entry);
        }
        assert!(report.verdict);
        assert_eq!(report.entries.len(), 6);
        assert_eq!(report.alpha_effective, 0.01);
    }

    #[test]
    fn battery_is_deterministic() {
        let ensemble = brownian_test_ensemble(128, 128, 8102);
        let a = run_battery(&ensemble, &BatteryConfig::default()).unwrap();
        let b = run_battery(&ensemble, &BatteryConfig::default()).unwrap();
        for (x, y) in a.entries.iter().zip(b.entries.iter()) {
            assert_eq!(x.statistic, y.statistic);
            assert_eq!(x.p_value, y.p_value);
        }
    }

    #[test]
    fn linear_drift_fails_terminal_mean() {
        // S_t = t + B_t: the terminal mean sits a full unit off zero.
        let grid = TimeGrid::new(1.0 / 128.0, 128).unwrap();
        let drifted: Vec<PathSample> = (0..256)
            .map(|i| {
                let b = sample_brownian(grid, SeededRng::new(8103, i));
                let vals: Vec<f64> =
                    (0..grid.n_points()).map(|k| grid.time(k) + b.value(k)).collect();
                PathSample::new(grid, vals).unwrap()
            })
            .collect();
        let ensemble = Ensemble::new("drifted", drifted).unwrap();
        let report = run_battery(&ensemble, &BatteryConfig::default()).unwrap();
        assert!(!report.verdict);
        let mean_entry = report.entries.iter().find(|e| e.name == "terminal_mean").unwrap();
        assert!(!mean_entry.pass);
        assert!(mean_entry.statistic.abs() > 10.0, "z = {}", mean_entry.statistic);
    }

    #[test]
    fn scaled_paths_fail_variance_and_qv() {
        // Scaling by 1.2 inflates the terminal variance and pushes mean
        // |QV/T - 1| to 0.44. On a 128-step grid the QV threshold
        // max(0.02, 6 sqrt(2 dt / T)) is 0.75, too slack to notice, so the
        // QV rejection is checked on a finer grid where the threshold has
        // tightened to ~0.27.
        let grid = TimeGrid::new(1.0 / 128.0, 128).unwrap();
        let paths: Vec<PathSample> = (0..256)
            .map(|i| {
                sample_brownian(grid, SeededRng::new(8104, i)).map(|v| 1.2 * v).unwrap()
            })
            .collect();
        let ensemble = Ensemble::new("scaled", paths).unwrap();
        let report = run_battery(&ensemble, &BatteryConfig::default()).unwrap();
        assert!(!report.verdict);
        let var_entry = report.entries.iter().find(|e| e.name == "terminal_variance").unwrap();
        assert!(!var_entry.pass);

        let fine = TimeGrid::new(1.0 / 1024.0, 1024).unwrap();
        let fine_paths: Vec<PathSample> = (0..64)
            .map(|i| {
                sample_brownian(fine, SeededRng::new(8114, i)).map(|v| 1.2 * v).unwrap()
            })
            .collect();
        let fine_ensemble = Ensemble::new("scaled_fine", fine_paths).unwrap();
        let qv_entry = test_quadratic_variation(&fine_ensemble).unwrap();
        assert!(!qv_entry.pass);
        assert!((qv_entry.statistic - 0.44).abs() < 0.02, "QV error = {}", qv_entry.statistic);
    }

    #[test]
    fn repeated_increments_fail_independence() {
        // Mirror the first quarter's increments into the second quarter:
        // the (Q1, Q2) correlation is exactly 1.
        let grid = TimeGrid::new(1.0 / 128.0, 128).unwrap();
        let paths: Vec<PathSample> = (0..200)
            .map(|i| {
                let mut inc = sample_brownian_increments(grid, SeededRng::new(8105, i));
                for j in 32..64 {
                    inc[j] = inc[j - 32];
                }
                brownian_from_increments(grid, &inc).unwrap()
            })
            .collect();
        let ensemble = Ensemble::new("mirrored", paths).unwrap();
        let entry = test_increment_independence(&ensemble, 0.01).unwrap();
        assert!(!entry.pass, "mirrored increments must reject: {entry:?}");
        assert!(entry.statistic > 5.0);
    }

    #[test]
    fn coin_flip_increments_fail_normality() {
        // Increments of ±sqrt(dt) have the right mean and variance but a
        // two-atom law; the pooled KS distance is enormous.
        let grid = TimeGrid::new(1.0 / 128.0, 128).unwrap();
        let paths: Vec<PathSample> = (0..200)
            .map(|i| {
                let gauss = sample_brownian_increments(grid, SeededRng::new(8106, i));
                let flips: Vec<f64> =
                    gauss.iter().map(|g| g.signum() * grid.dt().sqrt()).collect();
                brownian_from_increments(grid, &flips).unwrap()
            })
            .collect();
        let ensemble = Ensemble::new("flips", paths).unwrap();
        let entry = test_increment_normality(&ensemble, 128, 0.01).unwrap();
        assert!(!entry.pass);
        assert!(entry.statistic > 0.2, "KS D = {}", entry.statistic);
        // Terminal moments are fine for this law — only normality breaks.
        let (mean_entry, var_entry) = test_terminal_moments(&ensemble, 0.01).unwrap();
        assert!(mean_entry.pass);
        assert!(var_entry.pass);
    }

    #[test]
    fn subinterval_count_must_divide() {
        let ensemble = brownian_test_ensemble(128, 128, 8107);
        assert!(test_increment_normality(&ensemble, 3, 0.05).is_err());
        assert!(test_increment_normality(&ensemble, 0, 0.05).is_err());
        assert!(test_increment_normality(&ensemble, 64, 0.05).is_ok());
    }

    #[test]
    fn hidden_sign_reveals_drift_only_in_diagnostic_mode() {
        // Observations of the hidden-drift model: Brownian in their own
        // filtration, so the standard regression sees nothing. Handing the
        // regression the hidden sign as an extra column exposes the drift.
        let grid = TimeGrid::new(1.0 / 128.0, 128).unwrap();
        let mut paths = Vec::new();
        let mut signs = Vec::new();
        for i in 0..512 {
            let mut sign_rng = SeededRng::new(8108, 2 * i).rng();
            let scenario = DriftScenario::with_fair_sign(1.0, &mut sign_rng).unwrap();
            let path = simulate_hidden_path(scenario, grid, SeededRng::new(8108, 2 * i + 1)).unwrap();
            signs.push(scenario.epsilon().as_f64());
            paths.push(path.y().clone());
        }
        let ensemble = Ensemble::new("hidden", paths).unwrap();
        let (plain, _) = test_self_filtration_with_extra(&ensemble, 0.01, None).unwrap();
        assert!(plain.pass, "path summaries must not predict: {plain:?}");
        let (revealed, fit) =
            test_self_filtration_with_extra(&ensemble, 0.01, Some(("epsilon", &signs))).unwrap();
        assert!(!revealed.pass, "revealed sign must predict: {revealed:?}");
        let eps_t = fit.t_stats.last().unwrap().abs();
        assert!(eps_t > 4.0, "epsilon t-statistic = {eps_t}");
    }

    #[test]
    fn hidden_observations_pass_whole_battery() {
        let grid = TimeGrid::new(1.0 / 128.0, 128).unwrap();
        let paths: Vec<PathSample> = (0..512)
            .map(|i| {
                let mut sign_rng = SeededRng::new(8109, 2 * i).rng();
                let scenario = DriftScenario::with_fair_sign(1.0, &mut sign_rng).unwrap();
                simulate_hidden_path(scenario, grid, SeededRng::new(8109, 2 * i + 1))
                    .unwrap()
                    .y()
                    .clone()
            })
            .collect();
        let ensemble = Ensemble::new("hidden", paths).unwrap();
        let report = run_battery(&ensemble, &BatteryConfig::default()).unwrap();
        assert!(report.verdict, "hidden-drift observations must pass: {:#?}", report.entries);
    }

    #[test]
    fn calibration_rates_are_sane_and_deterministic() {
        let grid = TimeGrid::new(1.0 / 64.0, 64).unwrap();
        let report = calibration_rejection_rates(grid, 128, 40, 0.05, 8110).unwrap();
        assert_eq!(report.rates.len(), 5);
        for rate in &report.rates {
            assert!(rate.rate <= 0.2, "{} rejects far too often: {}", rate.test, rate.rate);
        }
        let again = calibration_rejection_rates(grid, 128, 40, 0.05, 8110).unwrap();
        for (a, b) in report.rates.iter().zip(again.rates.iter()) {
            assert_eq!(a.rejections, b.rejections);
        }
    }
}
