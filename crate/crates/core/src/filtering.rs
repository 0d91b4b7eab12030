//! The hidden-drift construction and the Bayesian filter that hides it.
//!
//! A scenario fixes a drift scale `mu > 0` and an independent fair sign
//! `eps` in {-1, +1}. The primitive path solves
//!
//! ```text
//! dS_t = mu_t dt + dB_t,    mu_t = 2 mu / (1 + exp(2 mu B_t + 2 mu^2 t)),
//! ```
//!
//! and the observation is `Y = eps * S`. Write `g_t` for the conditional
//! probability of `eps = +1` given the observations up to `t`; it has the
//! closed form `logistic(2 mu B_t + 2 mu^2 t)` when `eps = +1` and the
//! complementary value when `eps = -1`. The conditional drift rates of the
//! two hypotheses are `mu_plus = 2 mu (1 - g)` and `mu_minus = 2 mu g`, and
//! the balance `g * mu_plus - (1 - g) * mu_minus = 0` holds identically:
//! the drift the observer expects to see is exactly zero, which is why `Y`
//! is a Brownian motion in its own filtration even though `S` drifts.
//!
//! On the grid everything is built with left-endpoint sums, which keeps the
//! discrete analogue of the balance exact: running the log-odds filter on a
//! path simulated at the same step reproduces the closed-form `g` to
//! floating-point rounding (see `bayes_filter_is_exact_on_its_own_grid`).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::paths::{riemann_left, sample_brownian, PathSample, SeededRng, TimeGrid};

/// Largest `f64` strictly below 1; logistic outputs are clamped to
/// `[f64::MIN_POSITIVE, ONE_BELOW_ONE]` so probabilities stay inside (0, 1)
/// even for extreme arguments.
const ONE_BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

/// The hidden sign multiplying the primitive path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sign {
    /// `eps = +1`
    Plus,
    /// `eps = -1`
    Minus,
}

impl Sign {
    /// The sign as a float, +1.0 or -1.0.
    pub fn as_f64(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }

    /// Fair draw.
    pub fn sample_fair(rng: &mut impl Rng) -> Self {
        if rng.gen::<bool>() {
            Sign::Plus
        } else {
            Sign::Minus
        }
    }
}

/// Drift scale and hidden sign for one experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftScenario {
    mu: f64,
    epsilon: Sign,
}

impl DriftScenario {
    /// A scenario with drift scale `mu > 0` and a fixed sign.
    pub fn new(mu: f64, epsilon: Sign) -> Result<Self> {
        if !mu.is_finite() || mu <= 0.0 {
            return Err(Error::invalid(format!("drift scale mu must be positive and finite, got {mu}")));
        }
        Ok(DriftScenario { mu, epsilon })
    }

    /// A scenario whose sign is drawn fair from `rng`.
    pub fn with_fair_sign(mu: f64, rng: &mut impl Rng) -> Result<Self> {
        DriftScenario::new(mu, Sign::sample_fair(rng))
    }

    /// Drift scale.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Hidden sign.
    pub fn epsilon(&self) -> Sign {
        self.epsilon
    }
}

/// Numerically stable logistic `1 / (1 + exp(-x))`, clamped strictly inside
/// (0, 1) at the representable boundary. Never overflows: the exponential is
/// only ever evaluated at a non-positive argument.
pub fn stable_logistic(x: f64) -> f64 {
    let value = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    value.clamp(f64::MIN_POSITIVE, ONE_BELOW_ONE)
}

fn log_odds_argument(t: f64, b: f64, mu: f64) -> f64 {
    2.0 * mu * b + 2.0 * mu * mu * t
}

/// Closed-form conditional probability of `eps = +1` at time `t` when the
/// driving Brownian motion sits at `b`:
/// `logistic(2 mu b + 2 mu^2 t)` for the `Plus` branch, its mirror
/// `logistic(-(2 mu b + 2 mu^2 t))` for `Minus`.
pub fn closed_form_g(t: f64, b: f64, epsilon: Sign, mu: f64) -> f64 {
    let x = log_odds_argument(t, b, mu);
    match epsilon {
        Sign::Plus => stable_logistic(x),
        Sign::Minus => stable_logistic(-x),
    }
}

/// Closed-form hidden drift rate `2 mu / (1 + exp(2 mu b + 2 mu^2 t))`,
/// strictly inside (0, 2 mu). The same formula serves both signs.
pub fn drift_mu(t: f64, b: f64, mu: f64) -> f64 {
    (2.0 * mu) * stable_logistic(-log_odds_argument(t, b, mu))
}

/// Conditional drift rates `(mu_plus, mu_minus) = (2 mu (1-g), 2 mu g)` of
/// the two sign hypotheses given the current filter value `g`.
pub fn mu_plus_minus(g: f64, mu: f64) -> Result<(f64, f64)> {
    if !(g > 0.0 && g < 1.0) {
        return Err(Error::invalid(format!("filter value g must lie strictly in (0, 1), got {g}")));
    }
    if !mu.is_finite() || mu <= 0.0 {
        return Err(Error::invalid(format!("drift scale mu must be positive and finite, got {mu}")));
    }
    let two_mu = 2.0 * mu;
    Ok((two_mu * (1.0 - g), two_mu * g))
}

/// One simulated hidden-drift path with every derived quantity the
/// construction produces, all on a common grid.
#[derive(Debug, Clone)]
pub struct HiddenDriftPath {
    scenario: DriftScenario,
    b: PathSample,
    mu_t: PathSample,
    s: PathSample,
    y: PathSample,
    g: PathSample,
    mu_plus: PathSample,
    mu_minus: PathSample,
}

impl HiddenDriftPath {
    /// Scenario the path was built under.
    pub fn scenario(&self) -> DriftScenario {
        self.scenario
    }

    /// Driving Brownian motion.
    pub fn b(&self) -> &PathSample {
        &self.b
    }

    /// Hidden drift rate along the path (left-endpoint values).
    pub fn mu_t(&self) -> &PathSample {
        &self.mu_t
    }

    /// Primitive path `S = int mu dt + B`.
    pub fn s(&self) -> &PathSample {
        &self.s
    }

    /// Observation `Y = eps * S`.
    pub fn y(&self) -> &PathSample {
        &self.y
    }

    /// Closed-form conditional probability of `eps = +1`.
    pub fn g(&self) -> &PathSample {
        &self.g
    }

    /// Conditional drift rate under the `eps = +1` hypothesis.
    pub fn mu_plus(&self) -> &PathSample {
        &self.mu_plus
    }

    /// Conditional drift rate under the `eps = -1` hypothesis.
    pub fn mu_minus(&self) -> &PathSample {
        &self.mu_minus
    }
}

/// Build the hidden-drift path driven by an already-sampled Brownian path
/// (`b[0]` must be exactly 0). The primitive path is assembled as
/// `S = riemann_left(mu_t) + B`, so the drift used on `[t_k, t_{k+1})` is the
/// left-endpoint value `mu_t[k]`.
pub fn hidden_path_from_brownian(scenario: DriftScenario, b: &PathSample) -> Result<HiddenDriftPath> {
    if b.value(0) != 0.0 {
        return Err(Error::invalid("driving path must start at exactly 0"));
    }
    let grid = b.grid();
    let mu = scenario.mu();
    let eps = scenario.epsilon();
    let n = grid.n_points();

    let mut mu_t = Vec::with_capacity(n);
    let mut g = Vec::with_capacity(n);
    let mut mu_plus = Vec::with_capacity(n);
    let mut mu_minus = Vec::with_capacity(n);
    for k in 0..n {
        let t = grid.time(k);
        let bk = b.value(k);
        mu_t.push(drift_mu(t, bk, mu));
        let gk = closed_form_g(t, bk, eps, mu);
        let (plus, minus) = mu_plus_minus(gk, mu)?;
        g.push(gk);
        mu_plus.push(plus);
        mu_minus.push(minus);
    }
    let mu_t = PathSample::new(grid, mu_t)?;
    let drift_part = riemann_left(&mu_t);
    let s_values: Vec<f64> =
        drift_part.values().iter().zip(b.values()).map(|(d, bk)| d + bk).collect();
    let y_values: Vec<f64> = s_values.iter().map(|&s| eps.as_f64() * s).collect();

    Ok(HiddenDriftPath {
        scenario,
        b: b.clone(),
        mu_t,
        s: PathSample::new(grid, s_values)?,
        y: PathSample::new(grid, y_values)?,
        g: PathSample::new(grid, g)?,
        mu_plus: PathSample::new(grid, mu_plus)?,
        mu_minus: PathSample::new(grid, mu_minus)?,
    })
}

/// Sample a Brownian path on `grid` with `seed` and build the hidden-drift
/// path on top of it.
pub fn simulate_hidden_path(
    scenario: DriftScenario,
    grid: TimeGrid,
    seed: SeededRng,
) -> Result<HiddenDriftPath> {
    let b = sample_brownian(grid, seed);
    hidden_path_from_brownian(scenario, &b)
}

/// Output of the log-odds Bayes filter.
#[derive(Debug, Clone)]
pub struct BayesFilterPath {
    log_odds: PathSample,
    p: PathSample,
}

impl BayesFilterPath {
    /// Accumulated log odds `U_k` with `U_0 = 0`.
    pub fn log_odds(&self) -> &PathSample {
        &self.log_odds
    }

    /// Filtered probability `p_k = logistic(U_k)` of `eps = +1`.
    pub fn p(&self) -> &PathSample {
        &self.p
    }
}

/// Log-odds Bayes filter driven by the observation path and the two
/// hypothesis drift rates:
///
/// ```text
/// U_k = sum_{j<k} (mu_plus_j + mu_minus_j) dY_j
///     - (1/2) sum_{j<k} (mu_plus_j^2 - mu_minus_j^2) dt,    p_k = logistic(U_k).
/// ```
///
/// The caller supplies the rate paths; they must share the observation's
/// grid. Nothing here reads the hidden sign.
pub fn bayes_filter(
    y: &PathSample,
    mu_plus: &PathSample,
    mu_minus: &PathSample,
) -> Result<BayesFilterPath> {
    let grid = y.grid();
    if mu_plus.grid() != grid || mu_minus.grid() != grid {
        return Err(Error::invalid("bayes_filter: observation and rate paths live on different grids"));
    }
    let dt = grid.dt();
    let n = grid.n_points();
    let mut log_odds = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    let mut u = 0.0;
    log_odds.push(u);
    p.push(stable_logistic(u));
    for j in 0..n - 1 {
        let dy = y.value(j + 1) - y.value(j);
        let plus = mu_plus.value(j);
        let minus = mu_minus.value(j);
        u += (plus + minus) * dy - 0.5 * (plus * plus - minus * minus) * dt;
        log_odds.push(u);
        p.push(stable_logistic(u));
    }
    Ok(BayesFilterPath {
        log_odds: PathSample::new(grid, log_odds)?,
        p: PathSample::new(grid, p)?,
    })
}

/// Self-contained observer filter: sees only `y` and the drift scale `mu`,
/// and generates its own hypothesis rates from its current estimate,
/// `mu_plus_k = 2 mu (1 - p_k)`, `mu_minus_k = 2 mu p_k`. This is the filter
/// an observer would actually run on subsampled observations.
pub fn bayes_filter_autonomous(y: &PathSample, mu: f64) -> Result<BayesFilterPath> {
    if !mu.is_finite() || mu <= 0.0 {
        return Err(Error::invalid(format!("drift scale mu must be positive and finite, got {mu}")));
    }
    let grid = y.grid();
    let dt = grid.dt();
    let n = grid.n_points();
    let mut log_odds = Vec::with_capacity(n);
    let mut p = Vec::with_capacity(n);
    let mut u = 0.0;
    log_odds.push(u);
    p.push(stable_logistic(u));
    for j in 0..n - 1 {
        let pj = p[j];
        let (plus, minus) = mu_plus_minus(pj, mu)?;
        let dy = y.value(j + 1) - y.value(j);
        u += (plus + minus) * dy - 0.5 * (plus * plus - minus * minus) * dt;
        log_odds.push(u);
        p.push(stable_logistic(u));
    }
    Ok(BayesFilterPath {
        log_odds: PathSample::new(grid, log_odds)?,
        p: PathSample::new(grid, p)?,
    })
}

/// An Euler-discretized path together with the number of steps whose
/// proposed value had to be clamped back into the valid range.
#[derive(Debug, Clone)]
pub struct EulerPath {
    path: PathSample,
    clamp_events: u64,
}

impl EulerPath {
    /// The discretized path.
    pub fn path(&self) -> &PathSample {
        &self.path
    }

    /// How many proposed steps fell outside the valid range and were clamped.
    pub fn clamp_events(&self) -> u64 {
        self.clamp_events
    }
}

/// Euler scheme for the filter SDE
///
/// ```text
/// dg = 2 mu^2 [ eps g(1-g) + g(1-g)(1-2g) ] dt + 2 mu eps g(1-g) dB,
/// ```
///
/// started at `g_0 = 1/2` and driven by the increments of `b`. Values are
/// clamped to `[1e-15, 1 - 1e-15]`; clamping is counted, and stays inactive
/// for moderate steps (`dt <= 1e-3`, `mu <= 2`).
pub fn euler_filter_sde(b: &PathSample, epsilon: Sign, mu: f64) -> Result<EulerPath> {
    if !mu.is_finite() || mu <= 0.0 {
        return Err(Error::invalid(format!("drift scale mu must be positive and finite, got {mu}")));
    }
    let grid = b.grid();
    let dt = grid.dt();
    let eps = epsilon.as_f64();
    let (lo, hi) = (1e-15, 1.0 - 1e-15);
    let mut values = Vec::with_capacity(grid.n_points());
    let mut clamp_events = 0u64;
    let mut g = 0.5;
    values.push(g);
    for j in 0..grid.n_steps() {
        let db = b.value(j + 1) - b.value(j);
        let gg = g * (1.0 - g);
        let drift = 2.0 * mu * mu * (eps * gg + gg * (1.0 - 2.0 * g));
        let proposed = g + drift * dt + 2.0 * mu * eps * gg * db;
        g = proposed.clamp(lo, hi);
        if g != proposed {
            clamp_events += 1;
        }
        values.push(g);
    }
    Ok(EulerPath { path: PathSample::new(grid, values)?, clamp_events })
}

/// Euler scheme for the drift-rate SDE
///
/// ```text
/// dm = -m^2 (2 mu - m) dt - m (2 mu - m) dB,    m_0 = mu,
/// ```
///
/// driven by the increments of `b`. Values are clamped to
/// `[2 mu * 1e-15, 2 mu * (1 - 1e-15)]`, mirroring the open range (0, 2 mu)
/// of the closed form.
pub fn euler_drift_sde(b: &PathSample, mu: f64) -> Result<EulerPath> {
    if !mu.is_finite() || mu <= 0.0 {
        return Err(Error::invalid(format!("drift scale mu must be positive and finite, got {mu}")));
    }
    let grid = b.grid();
    let dt = grid.dt();
    let two_mu = 2.0 * mu;
    let (lo, hi) = (two_mu * 1e-15, two_mu * (1.0 - 1e-15));
    let mut values = Vec::with_capacity(grid.n_points());
    let mut clamp_events = 0u64;
    let mut m = mu;
    values.push(m);
    for j in 0..grid.n_steps() {
        let db = b.value(j + 1) - b.value(j);
        let gap = two_mu - m;
        let proposed = m - m * m * gap * dt - m * gap * db;
        m = proposed.clamp(lo, hi);
        if m != proposed {
            clamp_events += 1;
        }
        values.push(m);
    }
    Ok(EulerPath { path: PathSample::new(grid, values)?, clamp_events })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::paths::{quadratic_variation, sample_brownian};
    use approx::assert_relative_eq;

    #[test]
    fn scenario_rejects_bad_mu() {
        assert!(DriftScenario::new(0.0, Sign::Plus).is_err());
        assert!(DriftScenario::new(-1.0, Sign::Plus).is_err());
        assert!(DriftScenario::new(f64::INFINITY, Sign::Plus).is_err());
    }

    #[test]
    fn logistic_is_stable_and_strictly_inside_unit_interval() {
        for &x in &[-1e9, -750.0, -40.0, 0.0, 40.0, 750.0, 1e9] {
            let v = stable_logistic(x);
            assert!(v > 0.0 && v < 1.0, "logistic({x}) = {v} escaped (0,1)");
        }
        assert_eq!(stable_logistic(0.0), 0.5);
        assert_relative_eq!(stable_logistic(1.0), 1.0 / (1.0 + (-1.0f64).exp()));
    }

    #[test]
    fn drift_rate_starts_at_mu_and_stays_in_band() {
        for &mu in &[0.25, 1.0, 2.0, 7.5] {
            assert_eq!(drift_mu(0.0, 0.0, mu), mu);
            for &b in &[-1e6, -3.0, 0.0, 3.0, 1e6] {
                for &t in &[0.0, 0.5, 10.0] {
                    let m = drift_mu(t, b, mu);
                    assert!(m > 0.0 && m < 2.0 * mu, "drift {m} escaped (0, {})", 2.0 * mu);
                }
            }
        }
    }

    #[test]
    fn filter_branches_are_complementary() {
        for &mu in &[0.5, 1.0, 3.0] {
            for &b in &[-50.0, -2.0, 0.0, 0.7, 50.0] {
                for &t in &[0.0, 0.3, 4.0] {
                    let plus = closed_form_g(t, b, Sign::Plus, mu);
                    let minus = closed_form_g(t, b, Sign::Minus, mu);
                    assert!((plus + minus - 1.0).abs() <= 1e-15);
                }
            }
        }
        assert_eq!(closed_form_g(0.0, 0.0, Sign::Plus, 1.0), 0.5);
    }

    #[test]
    fn hypothesis_rates_balance_exactly() {
        // g * mu_plus - (1-g) * mu_minus = 0 up to rounding; this is the
        // identity that makes the observed drift vanish.
        let (plus, minus) = mu_plus_minus(0.25, 2.0).unwrap();
        assert_eq!((plus, minus), (3.0, 1.0));
        for &g in &[1e-12, 0.1, 0.5, 0.875, 1.0 - 1e-12] {
            for &mu in &[0.1, 1.0, 42.0] {
                let (p, m) = mu_plus_minus(g, mu).unwrap();
                let residual = g * p - (1.0 - g) * m;
                assert!(residual.abs() <= 1e-12, "balance residual {residual}");
                assert!((p + m - 2.0 * mu).abs() <= 1e-12);
            }
        }
        assert!(mu_plus_minus(0.0, 1.0).is_err());
        assert!(mu_plus_minus(1.0, 1.0).is_err());
    }

    #[test]
    fn drift_rate_agrees_with_hypothesis_rate_of_the_true_sign() {
        for &mu in &[0.5, 1.0, 2.5] {
            for &b in &[-4.0, -0.3, 0.0, 1.1, 6.0] {
                for &t in &[0.0, 0.2, 3.0] {
                    let m = drift_mu(t, b, mu);
                    let g_plus = closed_form_g(t, b, Sign::Plus, mu);
                    let g_minus = closed_form_g(t, b, Sign::Minus, mu);
                    let (plus, _) = mu_plus_minus(g_plus, mu).unwrap();
                    let (_, minus) = mu_plus_minus(g_minus, mu).unwrap();
                    // The minus branch is computed through the identical
                    // expression, so it matches bit-for-bit; the plus branch
                    // goes through 1-g, which loses relative precision once g
                    // is within an ulp of 1, so compare absolutely.
                    assert_eq!(minus, m);
                    assert_relative_eq!(plus, m, epsilon = 1e-12, max_relative = 1e-9);
                }
            }
        }
    }

    #[test]
    fn hidden_path_assembles_s_from_drift_and_noise() {
        let grid = TimeGrid::new(1e-3, 1000).unwrap();
        let scenario = DriftScenario::new(1.0, Sign::Minus).unwrap();
        let path = simulate_hidden_path(scenario, grid, SeededRng::new(3, 0)).unwrap();
        // S - B must equal the left Riemann sum of mu_t exactly (it is built
        // that way), and Y must be the sign flip of S.
        let drift_part = riemann_left(path.mu_t());
        for k in 0..grid.n_points() {
            assert_eq!(path.s().value(k), drift_part.value(k) + path.b().value(k));
            assert_eq!(path.y().value(k), -path.s().value(k));
        }
        assert_eq!(path.s().value(0), 0.0);
        assert_eq!(path.g().value(0), 0.5);
    }

    #[test]
    fn hidden_path_rejects_driving_path_not_started_at_zero() {
        let grid = TimeGrid::new(0.5, 2).unwrap();
        let b = PathSample::new(grid, vec![0.1, 0.2, 0.3]).unwrap();
        let scenario = DriftScenario::new(1.0, Sign::Plus).unwrap();
        assert!(hidden_path_from_brownian(scenario, &b).is_err());
    }

    // Monte Carlo oracle: Y is Brownian in its own filtration, so the sample
    // mean of Y_T over 10^4 paths is within +/-3 * sqrt(T/n) = +/-0.03 and
    // the quadratic variation of each path is near T.
    #[test]
    fn observation_terminal_mean_vanishes_despite_hidden_drift() {
        let grid = TimeGrid::new(1e-2, 100).unwrap();
        let n = 10_000usize;
        let mut sum = 0.0;
        for i in 0..n {
            let eps = if i % 2 == 0 { Sign::Plus } else { Sign::Minus };
            let scenario = DriftScenario::new(1.0, eps).unwrap();
            let path = simulate_hidden_path(scenario, grid, SeededRng::new(77, i as u64)).unwrap();
            sum += path.y().terminal();
        }
        let mean = sum / n as f64;
        assert!(mean.abs() < 0.03, "mean Y_T = {mean} too far from 0");
    }

    // The primitive path S does carry drift: with eps fixed to Plus the mean
    // of S_T = Y_T is E int mu_t dt, which starts at mu and decays, so it is
    // strictly positive and of order ~0.7 at mu = 1, T = 1. A crude band is
    // enough to show the drift is there.
    #[test]
    fn primitive_path_really_drifts() {
        let grid = TimeGrid::new(1e-2, 100).unwrap();
        let scenario = DriftScenario::new(1.0, Sign::Plus).unwrap();
        let n = 4000usize;
        let mut sum = 0.0;
        for i in 0..n {
            let path = simulate_hidden_path(scenario, grid, SeededRng::new(78, i as u64)).unwrap();
            sum += path.s().terminal();
        }
        let mean = sum / n as f64;
        assert!(mean > 0.3, "mean S_T = {mean} should be visibly positive");
    }

    #[test]
    fn bayes_filter_requires_matching_grids() {
        let g1 = TimeGrid::new(0.1, 10).unwrap();
        let g2 = TimeGrid::new(0.2, 10).unwrap();
        let y = PathSample::zeros(g1);
        let a = PathSample::zeros(g1);
        let b = PathSample::zeros(g2);
        assert!(bayes_filter(&y, &a, &b).is_err());
    }

    #[test]
    fn bayes_filter_constant_rates_reduce_to_a_closed_form() {
        // With mu_minus = 0 and mu_plus = c constant, the log odds are
        // c * Y_k - c^2 t_k / 2.
        let grid = TimeGrid::new(0.25, 8).unwrap();
        let y = sample_brownian(grid, SeededRng::new(12, 0));
        let c = 1.5;
        let plus = PathSample::new(grid, vec![c; grid.n_points()]).unwrap();
        let minus = PathSample::zeros(grid);
        let filt = bayes_filter(&y, &plus, &minus).unwrap();
        for k in 0..grid.n_points() {
            let expected = c * y.value(k) - 0.5 * c * c * grid.time(k);
            assert_relative_eq!(filt.log_odds().value(k), expected, epsilon = 1e-12);
        }
        assert_eq!(filt.p().value(0), 0.5);
    }

    // Left-endpoint sums make the discrete filter reproduce the closed-form
    // conditional probability exactly on the simulation's own grid: the
    // observation term telescopes (mu_plus + mu_minus = 2 mu identically) and
    // the drift quadratures cancel against the ones built into S.
    #[test]
    fn bayes_filter_is_exact_on_its_own_grid() {
        let grid = TimeGrid::new(1e-3, 1000).unwrap();
        for (stream, eps) in [(0u64, Sign::Plus), (1, Sign::Minus), (2, Sign::Plus)] {
            let scenario = DriftScenario::new(1.0, eps).unwrap();
            let path = simulate_hidden_path(scenario, grid, SeededRng::new(21, stream)).unwrap();
            let filt = bayes_filter(path.y(), path.mu_plus(), path.mu_minus()).unwrap();
            let mut worst = 0.0f64;
            for k in 0..grid.n_points() {
                worst = worst.max((filt.p().value(k) - path.g().value(k)).abs());
            }
            assert!(worst <= 1e-10, "on-grid filter error {worst} (eps {eps:?})");
        }
    }

    #[test]
    fn autonomous_filter_tracks_the_closed_form() {
        let grid = TimeGrid::new(1e-3, 1000).unwrap();
        let scenario = DriftScenario::new(1.0, Sign::Plus).unwrap();
        let path = simulate_hidden_path(scenario, grid, SeededRng::new(22, 5)).unwrap();
        let filt = bayes_filter_autonomous(path.y(), 1.0).unwrap();
        let mut worst = 0.0f64;
        for k in 0..grid.n_points() {
            worst = worst.max((filt.p().value(k) - path.g().value(k)).abs());
        }
        assert!(worst <= 1e-2, "autonomous filter error {worst}");
    }

    #[test]
    fn euler_filter_first_step_matches_hand_computation() {
        // Zero increments, g = 1/2, eps = +1: the diffusion term vanishes and
        // the drift is 2 mu^2 * 1/4, so g_1 = 1/2 + mu^2 dt / 2.
        let grid = TimeGrid::new(0.01, 2).unwrap();
        let b = PathSample::zeros(grid);
        let mu = 1.3;
        let out = euler_filter_sde(&b, Sign::Plus, mu).unwrap();
        let expected = 0.5 + 2.0 * mu * mu * 0.25 * grid.dt();
        assert_relative_eq!(out.path().value(1), expected, epsilon = 1e-15);
        assert_eq!(out.path().value(0), 0.5);
    }

    #[test]
    fn euler_drift_starts_at_mu() {
        let grid = TimeGrid::new(0.01, 2).unwrap();
        let b = PathSample::zeros(grid);
        let out = euler_drift_sde(&b, 0.8).unwrap();
        assert_eq!(out.path().value(0), 0.8);
    }

    #[test]
    fn euler_schemes_stay_in_range_without_clamping_at_moderate_steps() {
        let grid = TimeGrid::new(1e-3, 1000).unwrap();
        for stream in 0..20 {
            let b = sample_brownian(grid, SeededRng::new(30, stream));
            for &mu in &[0.5, 1.0, 2.0] {
                let f = euler_filter_sde(&b, Sign::Plus, mu).unwrap();
                assert_eq!(f.clamp_events(), 0, "filter clamped at mu = {mu}");
                assert!(f.path().values().iter().all(|&g| g > 0.0 && g < 1.0));
                let d = euler_drift_sde(&b, mu).unwrap();
                assert_eq!(d.clamp_events(), 0, "drift clamped at mu = {mu}");
                assert!(d.path().values().iter().all(|&m| m > 0.0 && m < 2.0 * mu));
            }
        }
    }

    // Strong-convergence oracle: the Euler filter path approaches the closed
    // form as the step shrinks; at dt = 2^-10 the terminal RMS error over 64
    // coupled paths is well under 0.02 for mu = 1.
    #[test]
    fn euler_filter_approaches_closed_form() {
        let fine = TimeGrid::new(2f64.powi(-10), 1 << 10).unwrap();
        let mut sq = 0.0;
        let n = 64;
        for stream in 0..n {
            let b = sample_brownian(fine, SeededRng::new(31, stream));
            let e = euler_filter_sde(&b, Sign::Plus, 1.0).unwrap();
            let exact = closed_form_g(fine.horizon(), b.terminal(), Sign::Plus, 1.0);
            sq += (e.path().terminal() - exact).powi(2);
        }
        let rms = (sq / n as f64).sqrt();
        assert!(rms < 0.02, "terminal RMS error {rms}");
    }

    #[test]
    fn observation_quadratic_variation_matches_horizon() {
        let grid = TimeGrid::new(1e-4, 10_000).unwrap();
        let scenario = DriftScenario::new(1.0, Sign::Plus).unwrap();
        let path = simulate_hidden_path(scenario, grid, SeededRng::new(40, 0)).unwrap();
        let qv = quadratic_variation(path.y());
        assert!((0.9..=1.1).contains(&qv), "QV of Y = {qv}");
    }
}
