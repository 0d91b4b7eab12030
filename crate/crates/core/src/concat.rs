//! Segment-and-restart concatenation: glue stopped sign-integral transforms
//! of restarted hidden-drift pieces into one path over a global horizon.
//!
//! Each segment restarts the hidden-drift construction from zero: the
//! segment's driving noise is a fresh block of Brownian increments `W`, the
//! restarted drift is `mu_tilde_t = 2 mu / (1 + exp(2 mu W_t + 2 mu^2 t))`,
//! and the primitive piece is `S_tilde = int mu_tilde dt + W`. The segment
//! tracks the sign-integral transform `N = int sign(S_tilde) dS_tilde` and
//! stops at the first grid time where `|N| >= delta`, capped at elapsed
//! time `delta`. Segments are laid end to end at the stopping boundaries
//! `tau_l`, producing glued paths `S`, `mu`, `H`, `M` where `M` accumulates
//! `H dS` across the whole horizon.
//!
//! The point of the construction: each stopped `N` is a Brownian piece in
//! its own filtration, the stopping rule reads only `N` and the clock, so
//! the glued `M` is again Brownian in its own filtration — while the glued
//! drift `mu` never strays far from `mu` itself. Quantitatively, with
//! `delta_hat_l = max(sup |N|, gamma_l)` for segment `l`:
//!
//! * `|S_tilde| <= 2 delta_hat` inside the segment,
//! * `|g - 1/2| <= delta_hat (2 mu + 3 mu^2) / 2` for the segment's filter
//!   value `g`,
//! * `|mu_tilde - mu| <= delta_hat (3 mu^3 + 2 mu^2)`.
//!
//! The first bound is the Skorokhod-reflection estimate (up to one grid
//! step of slack, absorbed by `delta_hat`); the other two follow from it
//! deterministically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filtering::{closed_form_g, drift_mu, Sign};
use crate::levy::sign;
use crate::paths::{sample_brownian_increments, PathSample, SeededRng, TimeGrid};

/// Parameters of one concatenation experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConcatConfig {
    mu: f64,
    delta: f64,
    grid: TimeGrid,
    seed: SeededRng,
}

impl ConcatConfig {
    /// Validated configuration. Requires `mu > 0`, `delta > 0`, and
    /// `dt <= delta` (a segment must be able to take at least one step
    /// before its time cap).
    pub fn new(mu: f64, delta: f64, grid: TimeGrid, seed: SeededRng) -> Result<Self> {
        if !mu.is_finite() || mu <= 0.0 {
            return Err(Error::invalid(format!("drift scale mu must be positive and finite, got {mu}")));
        }
        if !delta.is_finite() || delta <= 0.0 {
            return Err(Error::invalid(format!("stopping parameter delta must be positive and finite, got {delta}")));
        }
        if grid.dt() > delta {
            return Err(Error::invalid(format!(
                "grid step {} exceeds the segment time cap delta = {delta}",
                grid.dt()
            )));
        }
        Ok(ConcatConfig { mu, delta, grid, seed })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn seed(&self) -> SeededRng {
        self.seed
    }

    /// Same parameters, different RNG stream — for Monte Carlo fleets.
    pub fn with_stream(&self, stream_id: u64) -> Self {
        ConcatConfig { seed: self.seed.with_stream(stream_id), ..*self }
    }
}

/// Why a segment ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    /// `|N|` reached `delta`.
    Threshold,
    /// Elapsed segment time reached `delta` first.
    TimeCap,
    /// The global horizon ran out mid-segment (final segment only).
    Horizon,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StopReason::Threshold => "threshold",
            StopReason::TimeCap => "time_cap",
            StopReason::Horizon => "horizon",
        };
        f.write_str(s)
    }
}

/// One stopped segment, with every in-segment path on its own local grid
/// (time measured from the segment start).
#[derive(Debug, Clone)]
pub struct SegmentRecord {
    /// 1-based segment index `l`.
    pub l: usize,
    /// Global start time `tau_{l-1}`.
    pub start_time: f64,
    /// Segment duration `gamma_l = consumed steps * dt`.
    pub gamma: f64,
    /// What ended the segment.
    pub stop_reason: StopReason,
    /// Realized scale `max(sup_k |N_k|, gamma)`; at threshold stops this is
    /// `delta` plus the grid overshoot.
    pub delta_hat: f64,
    /// Shifted driving Brownian piece `W` (starts at 0).
    pub w: PathSample,
    /// Restarted drift `mu_tilde` along the segment.
    pub mu_tilde: PathSample,
    /// Primitive piece `S_tilde = int mu_tilde dt + W`.
    pub s_tilde: PathSample,
    /// Left-endpoint integrand `sign(S_tilde)`, values in {-1, +1}.
    pub h: PathSample,
    /// Stopped transform `N = int H dS_tilde`.
    pub n: PathSample,
}

impl SegmentRecord {
    /// Steps the segment consumed.
    pub fn consumed_steps(&self) -> usize {
        self.n.grid().n_steps()
    }

    /// Largest `|N|` over the stopped segment.
    pub fn sup_abs_n(&self) -> f64 {
        self.n.values().iter().fold(0.0f64, |a, &v| a.max(v.abs()))
    }

    /// By how much the stopped `|N|` overshot `delta` (0 for capped stops).
    pub fn overshoot(&self, delta: f64) -> f64 {
        (self.sup_abs_n() - delta).max(0.0)
    }
}

fn cap_steps(delta: f64, dt: f64) -> usize {
    let ratio = delta / dt;
    // Guard against 99.999... ratios that should be exact integers.
    ((ratio * (1.0 + 1e-12)).floor() as usize).max(1)
}

struct SegmentEngineOut {
    consumed: usize,
    stop_reason: StopReason,
    w: Vec<f64>,
    mu_tilde: Vec<f64>,
    s_tilde: Vec<f64>,
    h: Vec<f64>,
    n: Vec<f64>,
}

fn segment_engine(
    increments: &[f64],
    dt: f64,
    mu: f64,
    delta: f64,
    allow_partial: bool,
) -> Result<SegmentEngineOut> {
    let k_cap = cap_steps(delta, dt);
    if increments.is_empty() {
        return Err(Error::invalid("segment needs at least one increment"));
    }
    if !allow_partial && increments.len() < k_cap {
        return Err(Error::invalid(format!(
            "segment needs {k_cap} increments to cover duration delta = {delta} at dt = {dt}, got {}",
            increments.len()
        )));
    }
    let max_steps = k_cap.min(increments.len());
    let mut w = Vec::with_capacity(max_steps + 1);
    let mut mu_tilde = Vec::with_capacity(max_steps + 1);
    let mut s_tilde = Vec::with_capacity(max_steps + 1);
    let mut h = Vec::with_capacity(max_steps + 1);
    let mut n = Vec::with_capacity(max_steps + 1);
    w.push(0.0);
    s_tilde.push(0.0);
    n.push(0.0);
    let mut stop = None;
    let mut consumed = max_steps;
    for j in 0..max_steps {
        let t = dt * j as f64;
        let mu_j = drift_mu(t, w[j], mu);
        let h_j = sign(s_tilde[j]);
        mu_tilde.push(mu_j);
        h.push(h_j);
        let dw = increments[j];
        let ds = mu_j * dt + dw;
        let s_next = s_tilde[j] + ds;
        w.push(w[j] + dw);
        n.push(n[j] + h_j * (s_next - s_tilde[j]));
        s_tilde.push(s_next);
        if n[j + 1].abs() >= delta {
            stop = Some(StopReason::Threshold);
            consumed = j + 1;
            break;
        }
    }
    let stop_reason = stop.unwrap_or(if max_steps == k_cap {
        StopReason::TimeCap
    } else {
        StopReason::Horizon
    });
    // Terminal left-endpoint quantities, for completeness of the record.
    mu_tilde.push(drift_mu(dt * consumed as f64, w[consumed], mu));
    h.push(sign(s_tilde[consumed]));
    Ok(SegmentEngineOut { consumed, stop_reason, w, mu_tilde, s_tilde, h, n })
}

fn engine_to_record(
    out: SegmentEngineOut,
    l: usize,
    start_time: f64,
    dt: f64,
) -> Result<SegmentRecord> {
    let grid = TimeGrid::new(dt, out.consumed)?;
    let gamma = dt * out.consumed as f64;
    let n = PathSample::new(grid, out.n)?;
    let sup_abs_n = n.values().iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    Ok(SegmentRecord {
        l,
        start_time,
        gamma,
        stop_reason: out.stop_reason,
        delta_hat: sup_abs_n.max(gamma),
        w: PathSample::new(grid, out.w)?,
        mu_tilde: PathSample::new(grid, out.mu_tilde)?,
        s_tilde: PathSample::new(grid, out.s_tilde)?,
        h: PathSample::new(grid, out.h)?,
        n,
    })
}

/// Run one segment from a block of Brownian increments. The block must hold
/// at least `delta / dt` increments (the segment's worst case); the record
/// reports how many were actually consumed.
pub fn run_segment(
    l: usize,
    start_time: f64,
    increments: &[f64],
    dt: f64,
    mu: f64,
    delta: f64,
) -> Result<SegmentRecord> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::invalid(format!("dt must be positive and finite, got {dt}")));
    }
    if !mu.is_finite() || mu <= 0.0 {
        return Err(Error::invalid(format!("drift scale mu must be positive and finite, got {mu}")));
    }
    if !delta.is_finite() || delta <= 0.0 || delta < dt {
        return Err(Error::invalid(format!("delta must be finite and at least dt, got {delta}")));
    }
    let out = segment_engine(increments, dt, mu, delta, false)?;
    engine_to_record(out, l, start_time, dt)
}

/// The glued concatenation over the global grid.
#[derive(Debug, Clone)]
pub struct ConcatPath {
    /// Configuration that produced the path.
    pub config: ConcatConfig,
    /// Glued primitive path (continuous across boundaries).
    pub s: PathSample,
    /// Glued drift: segment-local `mu_tilde` laid end to end; equals `mu`
    /// exactly at every segment start.
    pub mu: PathSample,
    /// Glued integrand, values in {-1, +1}.
    pub h: PathSample,
    /// Glued transform `M`, accumulating `H dS` across the horizon.
    pub m: PathSample,
    /// Segment boundary times `tau_0 = 0 < tau_1 < ... <= T`.
    pub taus: Vec<f64>,
    /// 1-based owning segment of each grid point (left-endpoint ownership;
    /// the terminal point belongs to the last segment).
    pub segment_index: Vec<usize>,
    /// Per-segment records in order.
    pub segments: Vec<SegmentRecord>,
}

impl ConcatPath {
    /// Segments that ran to their own stop rule (excludes a final
    /// horizon-truncated segment).
    pub fn completed_segments(&self) -> impl Iterator<Item = &SegmentRecord> {
        self.segments.iter().filter(|s| s.stop_reason != StopReason::Horizon)
    }

    /// Largest realized per-segment scale on this path.
    pub fn delta_hat_max(&self) -> f64 {
        self.segments.iter().fold(0.0f64, |a, s| a.max(s.delta_hat))
    }
}

/// Build the concatenation from explicit global Brownian increments (must
/// match the configured grid).
pub fn concatenation_from_increments(
    config: &ConcatConfig,
    increments: &[f64],
) -> Result<ConcatPath> {
    let grid = config.grid();
    let dt = grid.dt();
    if increments.len() != grid.n_steps() {
        return Err(Error::invalid(format!(
            "expected {} increments for the configured grid, got {}",
            grid.n_steps(),
            increments.len()
        )));
    }
    let n_points = grid.n_points();
    let mut s_vals = Vec::with_capacity(n_points);
    let mut m_vals = Vec::with_capacity(n_points);
    let mut mu_vals = Vec::with_capacity(n_points);
    let mut h_vals = Vec::with_capacity(n_points);
    let mut segment_index = Vec::with_capacity(n_points);
    let mut taus = vec![0.0];
    let mut segments = Vec::new();
    s_vals.push(0.0);
    m_vals.push(0.0);
    let mut pos = 0usize;
    let mut l = 1usize;
    while pos < grid.n_steps() {
        let out = segment_engine(&increments[pos..], dt, config.mu(), config.delta(), true)?;
        let consumed = out.consumed;
        for j in 0..consumed {
            mu_vals.push(out.mu_tilde[j]);
            h_vals.push(out.h[j]);
            segment_index.push(l);
            let ds = out.s_tilde[j + 1] - out.s_tilde[j];
            let prev_s = *s_vals.last().unwrap();
            let next_s = prev_s + ds;
            s_vals.push(next_s);
            // Accumulate M from the realized glued increment so that it
            // matches ito_sum_left(H, S) on the glued path bit for bit.
            let prev_m = *m_vals.last().unwrap();
            m_vals.push(prev_m + out.h[j] * (next_s - prev_s));
        }
        segments.push(engine_to_record(out, l, dt * pos as f64, dt)?);
        pos += consumed;
        taus.push(dt * pos as f64);
        l += 1;
    }
    // Terminal-point metadata comes from the last segment's terminal values.
    let last = segments.last().expect("horizon covers at least one segment");
    mu_vals.push(last.mu_tilde.terminal());
    h_vals.push(last.h.terminal());
    segment_index.push(last.l);
    Ok(ConcatPath {
        config: *config,
        s: PathSample::new(grid, s_vals)?,
        mu: PathSample::new(grid, mu_vals)?,
        h: PathSample::new(grid, h_vals)?,
        m: PathSample::new(grid, m_vals)?,
        taus,
        segment_index,
        segments,
    })
}

/// Sample the driving Brownian increments from the configured seed and
/// build the concatenation.
pub fn build_concatenation(config: &ConcatConfig) -> Result<ConcatPath> {
    let increments = sample_brownian_increments(config.grid(), config.seed());
    concatenation_from_increments(config, &increments)
}

/// Closed-form constant of the segment filter bound:
/// `delta (2 mu + 3 mu^2) / 2`.
pub fn filter_deviation_bound(mu: f64, delta: f64) -> f64 {
    delta * (2.0 * mu + 3.0 * mu * mu) / 2.0
}

/// Closed-form constant of the drift deviation bound:
/// `delta (3 mu^3 + 2 mu^2)`.
pub fn drift_deviation_bound(mu: f64, delta: f64) -> f64 {
    delta * (3.0 * mu.powi(3) + 2.0 * mu * mu)
}

/// Outcome of checking the glued drift against its deviation bound.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DriftBoundReport {
    /// `max_k |mu[k] - mu|` over the glued path.
    pub max_deviation: f64,
    /// Nominal bound `delta (3 mu^3 + 2 mu^2)`.
    pub nominal_bound: f64,
    /// Largest realized per-segment scale.
    pub delta_hat_max: f64,
    /// Bound with `delta` replaced by `delta_hat_max`.
    pub adjusted_bound: f64,
    /// Pathwise pass: `max_deviation <= adjusted_bound`.
    pub pass: bool,
    /// Worst per-segment ratio of deviation to that segment's own
    /// `delta_hat`-bound (1.0 means the per-segment bound is tight).
    pub worst_segment_ratio: f64,
    /// Whether every segment individually satisfies its own bound.
    pub segments_pass: bool,
}

/// Check the glued drift path against the deviation bound, both pathwise
/// (with the path's largest `delta_hat`) and per segment.
pub fn check_drift_bound(path: &ConcatPath) -> DriftBoundReport {
    let mu = path.config.mu();
    let delta = path.config.delta();
    let max_deviation =
        path.mu.values().iter().fold(0.0f64, |a, &v| a.max((v - mu).abs()));
    let delta_hat_max = path.delta_hat_max();
    let adjusted_bound = drift_deviation_bound(mu, delta_hat_max);
    let mut worst_ratio = 0.0f64;
    let mut segments_pass = true;
    for seg in &path.segments {
        let bound = drift_deviation_bound(mu, seg.delta_hat);
        let dev = seg.mu_tilde.values().iter().fold(0.0f64, |a, &v| a.max((v - mu).abs()));
        let ratio = dev / bound;
        worst_ratio = worst_ratio.max(ratio);
        if dev > bound {
            segments_pass = false;
        }
    }
    DriftBoundReport {
        max_deviation,
        nominal_bound: drift_deviation_bound(mu, delta),
        delta_hat_max,
        adjusted_bound,
        pass: max_deviation <= adjusted_bound,
        worst_segment_ratio: worst_ratio,
        segments_pass,
    }
}

/// Outcome of the in-segment estimates for one segment.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentBoundReport {
    pub l: usize,
    pub delta_hat: f64,
    /// `sup_k |S_tilde[k]|` and its bound `2 delta_hat`.
    pub sup_abs_s: f64,
    pub s_bound: f64,
    pub pass_path: bool,
    /// Largest single-step move of `S_tilde` within the segment.
    pub max_step: f64,
    /// `2 delta_hat + max_step`: the path bound with the one-step slack a
    /// grid crossing leaves behind. The continuous-time argument pins
    /// `|S_tilde|` by its value just after the last zero, which on a grid is
    /// not zero but a leftover of at most one step.
    pub adjusted_s_bound: f64,
    pub pass_path_adjusted: bool,
    /// `sup_k |g_k - 1/2|` and its bound `delta_hat (2 mu + 3 mu^2) / 2`.
    pub max_filter_deviation: f64,
    pub filter_bound: f64,
    pub pass_filter: bool,
}

/// Verify the two in-segment estimates on a stopped segment: the path bound
/// `|S_tilde| <= 2 delta_hat` and the filter bound
/// `|g - 1/2| <= delta_hat (2 mu + 3 mu^2) / 2`, where `g` is the segment's
/// filter value (both sign branches give the same `|g - 1/2|`).
///
/// The path bound is reported twice: verbatim, and with one step of slack
/// added (`adjusted_s_bound`). The verbatim form can fail on a grid — when a
/// sign change strands `S_tilde` a step away from zero and the path then
/// runs straight to the stopping level, the supremum lands up to one step
/// above `2 delta_hat` — so the adjusted form is the one that is expected to
/// hold pathwise at any resolution.
pub fn check_segment_bounds(segment: &SegmentRecord, mu: f64) -> SegmentBoundReport {
    let delta_hat = segment.delta_hat;
    let sup_abs_s =
        segment.s_tilde.values().iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let max_step = (0..segment.consumed_steps())
        .map(|j| (segment.s_tilde.value(j + 1) - segment.s_tilde.value(j)).abs())
        .fold(0.0f64, f64::max);
    let grid = segment.w.grid();
    let mut max_filter_deviation = 0.0f64;
    for k in 0..grid.n_points() {
        let g = closed_form_g(grid.time(k), segment.w.value(k), Sign::Plus, mu);
        max_filter_deviation = max_filter_deviation.max((g - 0.5).abs());
    }
    let s_bound = 2.0 * delta_hat;
    let adjusted_s_bound = s_bound + max_step;
    let filter_bound = filter_deviation_bound(mu, delta_hat);
    SegmentBoundReport {
        l: segment.l,
        delta_hat,
        sup_abs_s,
        s_bound,
        pass_path: sup_abs_s <= s_bound,
        max_step,
        adjusted_s_bound,
        pass_path_adjusted: sup_abs_s <= adjusted_s_bound,
        max_filter_deviation,
        filter_bound,
        pass_filter: max_filter_deviation <= filter_bound,
    }
}

/// How much of `M` the first `l` segments fail to explain: the maximum of
/// `|M_t - M^{(l)}_t|` where `M^{(l)}` freezes at the `l`-th boundary.
///
/// Zero when `l` is the full segment count, and bounded by the sum of the
/// dropped segments' `|N|` ranges, so it shrinks to zero as `l` approaches
/// the count. It is not monotone step by step: the frozen reference moves
/// with `l`, and adding back a segment that ends far from where the path
/// settles can enlarge the worst gap.
pub fn tail_truncation_stability(path: &ConcatPath, l: usize) -> Result<f64> {
    if l > path.segments.len() {
        return Err(Error::invalid(format!(
            "truncation level {l} exceeds the segment count {}",
            path.segments.len()
        )));
    }
    let boundary_steps: usize = path.segments[..l].iter().map(|s| s.consumed_steps()).sum();
    let frozen = path.m.value(boundary_steps);
    let mut worst = 0.0f64;
    for k in boundary_steps..path.m.grid().n_points() {
        worst = worst.max((path.m.value(k) - frozen).abs());
    }
    Ok(worst)
}
