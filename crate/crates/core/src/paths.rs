//! Uniform time grids, sampled paths, and discrete stochastic calculus.
//!
//! Everything downstream operates on a uniform grid t_k = k*dt. A
//! [`PathSample`] is a vector of values aligned with such a grid, and the
//! primitive operations are forward Brownian sampling, left-endpoint Ito
//! sums sum_j H_j (X_{j+1} - X_j), left-endpoint Riemann sums, and realized
//! quadratic variation. Determinism is part of the contract: a
//! `(seed, stream)` pair pins every increment bit-for-bit, and parallel
//! ensembles assign one stream per path so results never depend on
//! scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform time grid `t_k = k * dt` for `k = 0..=n_steps`.
///
/// Times are always produced by multiplication (`k as f64 * dt`), never by
/// cumulative summation, so `time(k)` is reproducible and monotone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    dt: f64,
    n_steps: usize,
}

impl TimeGrid {
    /// Build a grid with step `dt > 0` and `n_steps >= 1` steps.
    pub fn new(dt: f64, n_steps: usize) -> Result<Self> {
        if !dt.is_finite() || dt <= 0.0 {
            return Err(Error::invalid(format!("grid dt must be positive and finite, got {dt}")));
        }
        if n_steps == 0 {
            return Err(Error::invalid("grid needs at least one step"));
        }
        Ok(TimeGrid { dt, n_steps })
    }

    /// Step size.
    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of steps (one less than the number of grid points).
    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    /// Number of grid points, `n_steps + 1`.
    pub fn n_points(&self) -> usize {
        self.n_steps + 1
    }

    /// Final grid time `dt * n_steps`.
    pub fn horizon(&self) -> f64 {
        self.dt * self.n_steps as f64
    }

    /// Grid time `t_k = k * dt`.
    pub fn time(&self, k: usize) -> f64 {
        self.dt * k as f64
    }

    /// Iterator over all grid times.
    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points()).map(move |k| self.time(k))
    }
}

/// A path sampled on a [`TimeGrid`]: one finite value per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct PathSample {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl PathSample {
    /// Wrap `values` (length `grid.n_points()`, all finite) as a path.
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_points() {
            return Err(Error::invalid(format!(
                "path needs {} values for this grid, got {}",
                grid.n_points(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "path value at index {bad} is not finite: {}",
                values[bad]
            )));
        }
        Ok(PathSample { grid, values })
    }

    /// The all-zero path on `grid`.
    pub fn zeros(grid: TimeGrid) -> Self {
        PathSample { grid, values: vec![0.0; grid.n_points()] }
    }

    /// The grid this path lives on.
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    /// All values, index-aligned with the grid times.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at grid index `k`.
    pub fn value(&self, k: usize) -> f64 {
        self.values[k]
    }

    /// Value at the final grid point.
    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("paths are never empty")
    }

    /// Successive differences `x_{k+1} - x_k` (length `n_steps`).
    pub fn increments(&self) -> Vec<f64> {
        self.values.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Apply `f` pointwise, keeping the grid.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        PathSample::new(self.grid, self.values.iter().map(|&v| f(v)).collect())
    }

    /// Keep every `factor`-th point, producing a path on the coarser grid
    /// with step `factor * dt`. `n_steps` must be divisible by `factor`.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.grid.n_steps % factor != 0 {
            return Err(Error::invalid(format!(
                "coarsening factor {factor} must divide n_steps = {}",
                self.grid.n_steps
            )));
        }
        let grid = TimeGrid::new(self.grid.dt * factor as f64, self.grid.n_steps / factor)?;
        let values = self.values.iter().copied().step_by(factor).collect();
        PathSample::new(grid, values)
    }
}

/// Deterministic RNG handle: a master seed plus a stream id.
///
/// Identical `(seed, stream_id)` pairs reproduce identical draws
/// bit-for-bit. Monte Carlo ensembles give every path its own stream id
/// under one master seed, which makes parallel generation order-independent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeededRng {
    seed: u64,
    stream_id: u64,
}

impl SeededRng {
    /// Handle for `stream_id` under `seed`.
    pub fn new(seed: u64, stream_id: u64) -> Self {
        SeededRng { seed, stream_id }
    }

    /// Master seed.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Stream id within the master seed.
    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Same seed, different stream.
    pub fn with_stream(&self, stream_id: u64) -> Self {
        SeededRng { seed: self.seed, stream_id }
    }

    /// Instantiate the underlying generator positioned at the stream start.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }
}

/// Draw the `n_steps` Gaussian increments of a Brownian path on `grid`:
/// independent N(0, dt) variables.
pub fn sample_brownian_increments(grid: TimeGrid, seed: SeededRng) -> Vec<f64> {
    let mut rng = seed.rng();
    let scale = grid.dt().sqrt();
    (0..grid.n_steps()).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Cumulative sum of `increments` starting from 0, as a path on `grid`.
pub fn brownian_from_increments(grid: TimeGrid, increments: &[f64]) -> Result<PathSample> {
    if increments.len() != grid.n_steps() {
        return Err(Error::invalid(format!(
            "need {} increments for this grid, got {}",
            grid.n_steps(),
            increments.len()
        )));
    }
    let mut values = Vec::with_capacity(grid.n_points());
    let mut acc = 0.0;
    values.push(acc);
    for &dx in increments {
        acc += dx;
        values.push(acc);
    }
    PathSample::new(grid, values)
}

/// Sample a standard Brownian path on `grid`: `B_0 = 0`, independent
/// N(0, dt) increments.
pub fn sample_brownian(grid: TimeGrid, seed: SeededRng) -> PathSample {
    let increments = sample_brownian_increments(grid, seed);
    brownian_from_increments(grid, &increments).expect("increment count matches grid by construction")
}

fn require_same_grid(a: &PathSample, b: &PathSample, what: &str) -> Result<()> {
    if a.grid() != b.grid() {
        return Err(Error::invalid(format!("{what}: operands live on different grids")));
    }
    Ok(())
}

/// Left-endpoint Ito sum `(H . X)_k = sum_{j<k} H_j (X_{j+1} - X_j)`.
///
/// The integrand is read at the left endpoint of each step, so the result
/// is a discrete martingale transform whenever `H` is adapted.
pub fn ito_sum_left(integrand: &PathSample, integrator: &PathSample) -> Result<PathSample> {
    require_same_grid(integrand, integrator, "ito_sum_left")?;
    let h = integrand.values();
    let x = integrator.values();
    let mut out = Vec::with_capacity(x.len());
    let mut acc = 0.0;
    out.push(acc);
    for j in 0..x.len() - 1 {
        acc += h[j] * (x[j + 1] - x[j]);
        out.push(acc);
    }
    PathSample::new(integrand.grid(), out)
}

/// Left-endpoint Riemann sum `I_k = sum_{j<k} f_j * dt`.
pub fn riemann_left(integrand: &PathSample) -> PathSample {
    let dt = integrand.grid().dt();
    let f = integrand.values();
    let mut out = Vec::with_capacity(f.len());
    let mut acc = 0.0;
    out.push(acc);
    for j in 0..f.len() - 1 {
        acc += f[j] * dt;
        out.push(acc);
    }
    PathSample { grid: integrand.grid(), values: out }
}

/// Realized quadratic variation `sum_k (x_{k+1} - x_k)^2` over the whole path.
pub fn quadratic_variation(path: &PathSample) -> f64 {
    path.values().windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn grid_times_are_exact_multiples() {
        let grid = TimeGrid::new(0.25, 4).unwrap();
        let times: Vec<f64> = grid.times().collect();
        assert_eq!(times, vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert_eq!(grid.horizon(), 1.0);
        assert_eq!(grid.n_points(), 5);
    }

    #[test]
    fn grid_rejects_bad_arguments() {
        assert!(TimeGrid::new(0.0, 4).is_err());
        assert!(TimeGrid::new(-0.1, 4).is_err());
        assert!(TimeGrid::new(f64::NAN, 4).is_err());
        assert!(TimeGrid::new(0.1, 0).is_err());
    }

    #[test]
    fn path_sample_validates_length_and_finiteness() {
        let grid = TimeGrid::new(0.5, 2).unwrap();
        assert!(PathSample::new(grid, vec![0.0, 1.0]).is_err());
        assert!(PathSample::new(grid, vec![0.0, f64::NAN, 1.0]).is_err());
        assert!(PathSample::new(grid, vec![0.0, f64::INFINITY, 1.0]).is_err());
        let p = PathSample::new(grid, vec![0.0, 1.0, -1.0]).unwrap();
        assert_eq!(p.terminal(), -1.0);
        assert_eq!(p.increments(), vec![1.0, -2.0]);
    }

    #[test]
    fn brownian_same_seed_and_stream_is_bit_identical() {
        let grid = TimeGrid::new(1e-3, 500).unwrap();
        let a = sample_brownian(grid, SeededRng::new(42, 7));
        let b = sample_brownian(grid, SeededRng::new(42, 7));
        assert_eq!(a.values(), b.values());
    }

    #[test]
    fn brownian_different_streams_differ() {
        let grid = TimeGrid::new(1e-3, 500).unwrap();
        let a = sample_brownian(grid, SeededRng::new(42, 0));
        let b = sample_brownian(grid, SeededRng::new(42, 1));
        assert_ne!(a.values(), b.values());
        assert_eq!(a.value(0), 0.0);
        assert_eq!(b.value(0), 0.0);
    }

    // Monte Carlo oracle: for n = 10^4 standard Brownian paths at T = 1 the
    // sample variance of B_T is chi-square concentrated; +/-3.5 standard
    // deviations of s^2 is about +/-0.05.
    #[test]
    fn brownian_terminal_moments_match_theory() {
        let grid = TimeGrid::new(1e-2, 100).unwrap();
        let n = 10_000usize;
        let master = SeededRng::new(2024, 0);
        let terminals: Vec<f64> =
            (0..n).map(|i| sample_brownian(grid, master.with_stream(i as u64)).terminal()).collect();
        let mean = terminals.iter().sum::<f64>() / n as f64;
        let var = terminals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 0.03, "sample mean {mean} too far from 0");
        assert!((0.95..=1.05).contains(&var), "sample variance {var} outside [0.95, 1.05]");
    }

    #[test]
    fn ito_sum_worked_example() {
        let grid = TimeGrid::new(0.5, 2).unwrap();
        let h = PathSample::new(grid, vec![2.0, 3.0, 0.0]).unwrap();
        let x = PathSample::new(grid, vec![0.0, 1.0, -1.0]).unwrap();
        let m = ito_sum_left(&h, &x).unwrap();
        // Steps: 2*(1-0) = 2, then 3*(-1-1) = -6.
        assert_eq!(m.values(), &[0.0, 2.0, -4.0]);
    }

    #[test]
    fn ito_sum_rejects_mismatched_grids() {
        let g1 = TimeGrid::new(0.5, 2).unwrap();
        let g2 = TimeGrid::new(0.25, 2).unwrap();
        let h = PathSample::zeros(g1);
        let x = PathSample::zeros(g2);
        assert!(ito_sum_left(&h, &x).is_err());
    }

    #[test]
    fn riemann_worked_example() {
        let grid = TimeGrid::new(0.5, 2).unwrap();
        let times: Vec<f64> = grid.times().collect();
        let f = PathSample::new(grid, times).unwrap();
        let out = riemann_left(&f);
        assert_eq!(out.values(), &[0.0, 0.0, 0.25]);
    }

    #[test]
    fn quadratic_variation_worked_example() {
        let grid = TimeGrid::new(0.5, 2).unwrap();
        let x = PathSample::new(grid, vec![0.0, 1.0, 0.0]).unwrap();
        assert_eq!(quadratic_variation(&x), 2.0);
    }

    // Chi-square tail oracle: QV/T - 1 has standard deviation sqrt(2*dt/T),
    // so at dt = 1e-4, T = 1 the band [0.9, 1.1] is a +/-7 sigma event.
    #[test]
    fn quadratic_variation_of_brownian_concentrates_at_horizon() {
        let grid = TimeGrid::new(1e-4, 10_000).unwrap();
        for stream in 0..5 {
            let b = sample_brownian(grid, SeededRng::new(9, stream));
            let qv = quadratic_variation(&b);
            assert!((0.9..=1.1).contains(&qv), "QV {qv} outside [0.9, 1.1]");
        }
    }

    #[test]
    fn ito_sum_is_linear_in_the_integrand() {
        let grid = TimeGrid::new(1e-2, 200).unwrap();
        let x = sample_brownian(grid, SeededRng::new(5, 0));
        let h = sample_brownian(grid, SeededRng::new(5, 1));
        let k = sample_brownian(grid, SeededRng::new(5, 2));
        let hk = PathSample::new(
            grid,
            h.values().iter().zip(k.values()).map(|(a, b)| a + b).collect(),
        )
        .unwrap();
        let lhs = ito_sum_left(&hk, &x).unwrap();
        let a = ito_sum_left(&h, &x).unwrap();
        let b = ito_sum_left(&k, &x).unwrap();
        for i in 0..lhs.values().len() {
            assert_relative_eq!(
                lhs.value(i),
                a.value(i) + b.value(i),
                epsilon = 1e-12,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn coarsen_keeps_every_factor_th_point() {
        let grid = TimeGrid::new(0.25, 4).unwrap();
        let p = PathSample::new(grid, vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let c = p.coarsen(2).unwrap();
        assert_eq!(c.values(), &[0.0, 2.0, 4.0]);
        assert_eq!(c.grid().dt(), 0.5);
        assert!(p.coarsen(3).is_err());
    }

    #[test]
    fn increments_round_trip_through_cumsum() {
        let grid = TimeGrid::new(1e-3, 1000).unwrap();
        let b = sample_brownian(grid, SeededRng::new(11, 3));
        let rebuilt = brownian_from_increments(grid, &b.increments()).unwrap();
        for k in 0..grid.n_points() {
            assert_relative_eq!(rebuilt.value(k), b.value(k), epsilon = 1e-12);
        }
    }
}
