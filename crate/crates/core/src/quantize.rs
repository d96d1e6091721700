//! Fine quantization of `[0, 1]`.
//!
//! `[c, 1 - c]` is cut into equal cells of width `lambda`; `[0, c]` and
//! `[1 - c, 1]` are cut dyadically down to `c / 2^m` with
//! `m = ceil(log2 c + tau * log2 N)` (at least 1). Two channels may be
//! combined only when both Bhattacharyya parameters lie in the same cell
//! and inside the core `[c / 2^m, 1 - c / 2^m]`.
//!
//! Cells are half-open `[b_k, b_{k+1})` except the last, which is closed.
//! `m` is capped at [`MAX_M`] so that the boundaries near 1 stay distinct
//! in double precision.

use serde::{Deserialize, Serialize};

use crate::channels::ChannelModel;
use crate::{Error, Result};

pub const DEFAULT_C: f64 = 0.1;
pub const DEFAULT_LAMBDA: f64 = 0.1;

/// Largest dyadic depth; `1 - c / 2^m` is still below 1 in `f64`.
pub const MAX_M: u32 = 48;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantGrid {
    pub c: f64,
    pub lambda: f64,
    pub tau: f64,
    pub m: u32,
    /// `m` before clipping to `[1, MAX_M]`.
    pub m_raw: i64,
    pub boundaries: Vec<f64>,
}

impl QuantGrid {
    /// Grid for block length `n_len` with the default `c = lambda = 0.1`.
    pub fn build(n_len: usize, tau: f64) -> Result<Self> {
        Self::build_with(n_len, tau, DEFAULT_C, DEFAULT_LAMBDA)
    }

    pub fn build_with(n_len: usize, tau: f64, c: f64, lambda: f64) -> Result<Self> {
        if n_len < 2 || !n_len.is_power_of_two() {
            return Err(Error::NotPowerOfTwo(n_len));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::InvalidParameter(format!("tau must be positive, got {tau}")));
        }
        if !(c > 0.0 && c < 0.5) || !(lambda > 0.0) {
            return Err(Error::InvalidParameter(format!("bad quantization c={c}, lambda={lambda}")));
        }
        let middle = (1.0 - 2.0 * c) / lambda;
        let cells_mid = middle.round();
        if (middle - cells_mid).abs() > 1e-9 || cells_mid < 1.0 {
            return Err(Error::InvalidParameter(format!(
                "(1 - 2c)/lambda must be a positive integer, got {middle}"
            )));
        }
        let cells_mid = cells_mid as usize;

        let log_n = n_len.trailing_zeros() as f64;
        let m_raw = (c.log2() + tau * log_n).ceil() as i64;
        let m = m_raw.clamp(1, MAX_M as i64) as u32;

        let mut b = Vec::with_capacity(2 * (m as usize + 1) + cells_mid + 1);
        b.push(0.0);
        for k in (1..=m).rev() {
            b.push(c * 2f64.powi(-(k as i32)));
        }
        for k in 0..cells_mid {
            b.push(c + k as f64 * lambda);
        }
        b.push(1.0 - c);
        for k in 1..=m {
            b.push(1.0 - c * 2f64.powi(-(k as i32)));
        }
        b.push(1.0);
        debug_assert!(b.windows(2).all(|w| w[0] < w[1]), "{b:?}");

        Ok(QuantGrid { c, lambda, tau, m, m_raw, boundaries: b })
    }

    pub fn cell_count(&self) -> usize {
        self.boundaries.len() - 1
    }

    /// Lower edge of the core, `c / 2^m`.
    pub fn core_lo(&self) -> f64 {
        self.c * 2f64.powi(-(self.m as i32))
    }

    pub fn core_hi(&self) -> f64 {
        1.0 - self.core_lo()
    }

    /// Index of the cell containing `z`.
    pub fn subinterval_index(&self, z: f64) -> Result<usize> {
        if !(0.0..=1.0).contains(&z) {
            return Err(Error::OutOfRange { value: z, expected: "[0, 1]" });
        }
        let k = self.boundaries.partition_point(|&b| b <= z) - 1;
        Ok(k.min(self.cell_count() - 1))
    }

    pub fn in_core(&self, z: f64) -> bool {
        self.core_lo() <= z && z <= self.core_hi()
    }

    pub fn same_subinterval(&self, z1: f64, z2: f64) -> bool {
        match (self.subinterval_index(z1), self.subinterval_index(z2)) {
            (Ok(a), Ok(b)) => a == b,
            _ => false,
        }
    }

    /// Whether the pair may be combined: both in the core and in the same
    /// cell. Interval channels are judged by their upper bound.
    pub fn combinable(&self, a: &ChannelModel, b: &ChannelModel) -> bool {
        let (z1, z2) = (a.z_hi(), b.z_hi());
        self.in_core(z1) && self.in_core(z2) && self.same_subinterval(z1, z2)
    }
}
