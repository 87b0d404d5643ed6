//! Rotary position embedding at real-valued positions.
//!
//! The rotation angle for pair `i` at position `p` is `p / base^(2i / rotary_dim)`.
//! Nothing in the formula requires integer positions, so cumulative durations
//! can be used directly as positional indices.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotaryConfig {
    pub base: f64,
    /// Number of leading vector components rotated; must be even.
    pub rotary_dim: usize,
    pub enabled: bool,
}

impl RotaryConfig {
    pub const DEFAULT_BASE: f64 = 10000.0;

    pub fn new(base: f64, rotary_dim: usize) -> Self {
        assert!(rotary_dim % 2 == 0, "rotary_dim must be even");
        Self {
            base,
            rotary_dim,
            enabled: true,
        }
    }

    pub fn full(rotary_dim: usize) -> Self {
        Self::new(Self::DEFAULT_BASE, rotary_dim)
    }

    pub fn disabled() -> Self {
        Self {
            base: Self::DEFAULT_BASE,
            rotary_dim: 0,
            enabled: false,
        }
    }
}

/// Rotate the first `rotary_dim` components of `vec` in place. Components are
/// paired half-split: `(i, i + rotary_dim/2)`. Angles are computed in double
/// precision.
pub fn rope_rotate_inplace(vec: &mut [f32], position: f64, config: &RotaryConfig) {
    if !config.enabled || config.rotary_dim == 0 {
        return;
    }
    let half = config.rotary_dim / 2;
    debug_assert!(config.rotary_dim <= vec.len());
    for i in 0..half {
        let freq = config.base.powf(-2.0 * i as f64 / config.rotary_dim as f64);
        let angle = position * freq;
        let (sin, cos) = angle.sin_cos();
        let x1 = vec[i] as f64;
        let x2 = vec[i + half] as f64;
        vec[i] = (x1 * cos - x2 * sin) as f32;
        vec[i + half] = (x1 * sin + x2 * cos) as f32;
    }
}

/// Rotate each row of `vectors` by the corresponding position.
pub fn rope_rotate(vectors: &Array2<f32>, positions: &[f64], config: &RotaryConfig) -> Array2<f32> {
    assert_eq!(vectors.nrows(), positions.len());
    let mut out = vectors.clone();
    for (mut row, &p) in out.rows_mut().into_iter().zip(positions) {
        rope_rotate_inplace(row.as_slice_mut().expect("contiguous row"), p, config);
    }
    out
}
