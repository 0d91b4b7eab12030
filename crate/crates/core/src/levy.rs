//! Sign-integral transform of a path and its running local time.
//!
//! For a path `Y` started at 0, the transform is the left-endpoint
//! stochastic sum
//!
//! ```text
//! M_k = sum_{j<k} sign(Y_j) (Y_{j+1} - Y_j),
//! ```
//!
//! with the one-sided convention `sign(0) = -1`. The companion process
//! `L = |Y| - M` is the discrete local time at zero: with this sign
//! convention each increment of `L` is non-negative by the subgradient
//! inequality `|y| >= |x| + sign(x)(y - x)`, so `L` is exactly
//! nondecreasing from 0, and it moves only on steps where the sign of `Y`
//! changes. When `Y` is a Brownian motion, `M` is again a Brownian motion
//! (its increments are the same sizes with flipped signs), which is the
//! discrete shadow of the classical reflection identity.

use crate::error::{Error, Result};
use crate::paths::PathSample;

/// One-sided sign: +1 for `x > 0`, otherwise -1. Both `0.0` and `-0.0` map
/// to -1, so the convention is insensitive to the sign bit of zero.
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// The left-endpoint integrand `sign(Y_k)` as a path on the same grid.
pub fn sign_path(y: &PathSample) -> PathSample {
    y.map(sign).expect("sign values are finite")
}

/// Result of the sign-integral transform: the transformed path and the
/// running local time at zero.
#[derive(Debug, Clone)]
pub struct LevyTransform {
    m: PathSample,
    local_time: PathSample,
}

impl LevyTransform {
    /// The transformed path `M`.
    pub fn m(&self) -> &PathSample {
        &self.m
    }

    /// Running local time `L`, exactly nondecreasing from 0.
    pub fn local_time(&self) -> &PathSample {
        &self.local_time
    }
}

/// Transform a path started at exactly 0.
///
/// `M` accumulates `sign(Y_j) dY_j`; the local time accumulates the Tanaka
/// residuals `|Y_{j+1}| - |Y_j| - sign(Y_j) dY_j`, each of which is
/// non-negative (exactly, in floating point: rounding is monotone), so the
/// reported local time never decreases and the decomposition
/// `|Y_k| = M_k + L_k` holds to rounding.
pub fn levy_transform(y: &PathSample) -> Result<LevyTransform> {
    if y.value(0) != 0.0 {
        return Err(Error::invalid("levy_transform: path must start at exactly 0"));
    }
    let grid = y.grid();
    let n = grid.n_points();
    let mut m = Vec::with_capacity(n);
    let mut local = Vec::with_capacity(n);
    let mut m_acc = 0.0;
    let mut l_acc = 0.0;
    m.push(m_acc);
    local.push(l_acc);
    for j in 0..n - 1 {
        let prev = y.value(j);
        let next = y.value(j + 1);
        let s = sign(prev);
        let signed_step = s * (next - prev);
        m_acc += signed_step;
        // Non-negative by the subgradient inequality; grouping the
        // subtraction this way keeps that true bit-for-bit.
        let residual = (next.abs() - prev.abs()) - signed_step;
        debug_assert!(residual >= 0.0);
        l_acc += residual;
        m.push(m_acc);
        local.push(l_acc);
    }
    Ok(LevyTransform {
        m: PathSample::new(grid, m)?,
        local_time: PathSample::new(grid, local)?,
    })
}
