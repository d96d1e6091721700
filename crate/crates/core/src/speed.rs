//! Polarization-speed analysis.
//!
//! The polarization measure of a sequence of channels is
//! `E = mean(f(z_i))` with `f(z) = (z (1 - z))^b`. A combining step of two
//! channels shrinks their contribution by the ratio `Delta_f`, which is
//! bounded by `g(z1, z2)`; `h(z)` is the worst `g` over pairs the
//! quantization allows to combine, and `eta = -log2 sup h`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{combine_minus, combine_plus, ChannelModel};
use crate::numeric::fsum;
use crate::quantize::{DEFAULT_C, DEFAULT_LAMBDA};
use crate::{Error, Result};

pub const DEFAULT_B: f64 = 0.72;
pub const DEFAULT_RESOLUTION: f64 = 1e-5;

/// Guard subtracted from the estimated `eta` before it is used in
/// constants that need a lower bound on `eta`.
pub const ETA_GUARD: f64 = 1e-6;

pub fn f_poly(z: f64, b: f64) -> f64 {
    (z * (1.0 - z)).max(0.0).powf(b)
}

/// `(1/N) * sum f(z_i)`, summed with correct rounding so the value does not
/// depend on the order of `zs`.
pub fn polarization_energy(zs: &[f64], b: f64) -> Result<f64> {
    if zs.is_empty() {
        return Err(Error::InvalidParameter("polarization energy of an empty sequence".into()));
    }
    if let Some(&z) = zs.iter().find(|z| !(0.0..=1.0).contains(*z)) {
        return Err(Error::OutOfRange { value: z, expected: "[0, 1]" });
    }
    Ok(fsum(zs.iter().map(|&z| f_poly(z, b))) / zs.len() as f64)
}

fn check_open_unit(z: f64) -> Result<()> {
    if z > 0.0 && z < 1.0 {
        Ok(())
    } else {
        Err(Error::OutOfRange { value: z, expected: "(0, 1)" })
    }
}

/// Range of `Z(W1 ⊞ W2)` allowed by the Bhattacharyya bounds.
pub fn minus_range(z1: f64, z2: f64) -> (f64, f64) {
    let lo = (z1 * z1 + z2 * z2 - z1 * z1 * z2 * z2).sqrt();
    let hi = z1 + z2 - z1 * z2;
    (lo.min(hi), hi)
}

fn g_unchecked(z1: f64, z2: f64, b: f64) -> f64 {
    let (lo, hi) = minus_range(z1, z2);
    // f is unimodal with its peak at 1/2
    let f_minus = if lo <= 0.5 && 0.5 <= hi { f_poly(0.5, b) } else { f_poly(lo, b).max(f_poly(hi, b)) };
    (f_poly(z1 * z2, b) + f_minus) / (f_poly(z1, b) + f_poly(z2, b))
}

/// Worst-case shrink ratio of `f` over all BMS pairs with the given
/// Bhattacharyya parameters.
pub fn g_bound(z1: f64, z2: f64, b: f64) -> Result<f64> {
    check_open_unit(z1)?;
    check_open_unit(z2)?;
    Ok(g_unchecked(z1, z2, b))
}

/// Exact `Delta_f` of two channels whose combinations are known exactly
/// (both erasure channels). Other pairs are rejected.
pub fn delta_f(a: &ChannelModel, b_ch: &ChannelModel, b: f64) -> Result<f64> {
    let (m, p) = (combine_minus(a, b_ch), combine_plus(a, b_ch));
    if !m.is_exact() || !p.is_exact() {
        return Err(Error::InvalidChannel("Delta_f needs exactly combinable channels".into()));
    }
    let den = f_poly(a.z_hi(), b) + f_poly(b_ch.z_hi(), b);
    Ok((f_poly(m.z_hi(), b) + f_poly(p.z_hi(), b)) / den)
}

/// Settings for evaluating `h`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HConfig {
    pub c: f64,
    pub lambda: f64,
    /// Points in the dense scan over the partner range.
    pub inner_points: usize,
    /// Golden-section tolerance.
    pub tol: f64,
}

impl Default for HConfig {
    fn default() -> Self {
        HConfig { c: DEFAULT_C, lambda: DEFAULT_LAMBDA, inner_points: 48, tol: 1e-9 }
    }
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

/// Golden-section search for the maximum of `f` on `[a, b]`; returns the
/// best value seen.
fn golden_max(mut a: f64, mut b: f64, tol: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    let (mut best_x, mut best) = if fc >= fd { (c, fc) } else { (d, fd) };
    while (b - a).abs() > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
            if fc > best {
                best = fc;
                best_x = c;
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
            if fd > best {
                best = fd;
                best_x = d;
            }
        }
    }
    (best_x, best)
}

/// Dense scan plus golden-section refinement around the best sample.
fn scan_max(a: f64, b: f64, points: usize, tol: f64, f: impl Fn(f64) -> f64 + Copy) -> (f64, f64) {
    if b <= a {
        return (a, f(a));
    }
    let k = points.max(3);
    let step = (b - a) / (k - 1) as f64;
    let mut best_i = 0;
    let mut best = f64::NEG_INFINITY;
    for i in 0..k {
        let x = if i == k - 1 { b } else { a + i as f64 * step };
        let v = f(x);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let lo = a + best_i.saturating_sub(1) as f64 * step;
    let hi = (a + (best_i + 1) as f64 * step).min(b);
    let (rx, rv) = golden_max(lo, hi, tol, f);
    if rv > best {
        (rx, rv)
    } else {
        (a + best_i as f64 * step, best)
    }
}

/// Partner range `[z, upper]` over which `h(z)` takes its supremum.
pub fn h_partner_range(z: f64, c: f64, lambda: f64) -> (f64, f64) {
    if z < c {
        (z, 2.0 * z)
    } else if z <= 1.0 - c {
        (z, (z + lambda).min(1.0 - c))
    } else {
        (z, (1.0 + z) / 2.0)
    }
}

pub fn h_profile(z: f64, b: f64, cfg: &HConfig) -> Result<f64> {
    check_open_unit(z)?;
    Ok(h_unchecked(z, b, cfg))
}

fn h_unchecked(z: f64, b: f64, cfg: &HConfig) -> f64 {
    let (lo, hi) = h_partner_range(z, cfg.c, cfg.lambda);
    scan_max(lo, hi, cfg.inner_points, cfg.tol, |zp| g_unchecked(z, zp, b)).1
}

/// Sampled `h` on the grid `z_k = k * resolution`, `0 < z_k < 1`.
pub fn h_grid(b: f64, resolution: f64, cfg: &HConfig) -> Result<Vec<(f64, f64)>> {
    check_b(b)?;
    if !(resolution > 0.0 && resolution <= 1e-2) {
        return Err(Error::InvalidParameter(format!("resolution must be in (0, 0.01], got {resolution}")));
    }
    let count = (1.0 / resolution).round() as usize;
    let zs: Vec<f64> = (1..count).map(|k| k as f64 * resolution).filter(|&z| z < 1.0).collect();
    Ok(zs.par_iter().map(|&z| (z, h_unchecked(z, b, cfg))).collect())
}

fn check_b(b: f64) -> Result<()> {
    if b > 0.0 && b < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("b must lie in (0, 1), got {b}")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EtaEstimate {
    pub b: f64,
    pub resolution: f64,
    /// `-log2(sup_h)`.
    pub eta: f64,
    pub sup_h: f64,
    pub argmax_z: f64,
    /// Largest sampled value on the plain grid, before refinement.
    pub grid_sup: f64,
}

impl EtaEstimate {
    /// `eta` minus [`ETA_GUARD`], for use where a lower bound is required.
    pub fn certified_eta(&self) -> f64 {
        self.eta - ETA_GUARD
    }
}

pub fn estimate_eta(b: f64, resolution: f64) -> Result<EtaEstimate> {
    Ok(estimate_eta_with_profile(b, resolution, &HConfig::default())?.0)
}

/// Estimates `eta` and returns the sampled `h` profile alongside.
///
/// The grid maximum is refined by golden-section search in the
/// neighbourhood of the ten best grid points.
pub fn estimate_eta_with_profile(
    b: f64,
    resolution: f64,
    cfg: &HConfig,
) -> Result<(EtaEstimate, Vec<(f64, f64)>)> {
    let profile = h_grid(b, resolution, cfg)?;
    let mut order: Vec<usize> = (0..profile.len()).collect();
    order.sort_by(|&i, &j| profile[j].1.total_cmp(&profile[i].1).then(i.cmp(&j)));
    let (grid_z, grid_sup) = profile[order[0]];

    let refined: Vec<(f64, f64)> = order
        .iter()
        .take(10)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&&i| {
            let z = profile[i].0;
            let lo = (z - resolution).max(resolution * 1e-3);
            let hi = (z + resolution).min(1.0 - resolution * 1e-3);
            golden_max(lo, hi, cfg.tol, |x| h_unchecked(x, b, cfg))
        })
        .collect();

    let (mut argmax_z, mut sup_h) = (grid_z, grid_sup);
    for (z, v) in refined {
        if v > sup_h {
            sup_h = v;
            argmax_z = z;
        }
    }
    let est = EtaEstimate { b, resolution, eta: -sup_h.log2(), sup_h, argmax_z, grid_sup };
    Ok((est, profile))
}

/// Per-level and average speed of polarization.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpeedTrace {
    /// `eta_{j,n} = -log2(E_j / E_{j-1})` for `j = 1..=n`.
    pub eta_levels: Vec<f64>,
    /// `-(1/n) log2 E_n`.
    pub eta_bar: f64,
}

pub fn speed_trace(energies: &[f64]) -> Result<SpeedTrace> {
    if energies.len() < 2 {
        return Err(Error::InvalidParameter("speed trace needs at least two levels".into()));
    }
    if let Some(&e) = energies.iter().find(|&&e| !(e > 0.0)) {
        return Err(Error::OutOfRange { value: e, expected: "E > 0" });
    }
    let eta_levels = energies.windows(2).map(|w| -(w[1] / w[0]).log2()).collect();
    let n = (energies.len() - 1) as f64;
    let eta_bar = -energies[energies.len() - 1].log2() / n;
    Ok(SpeedTrace { eta_levels, eta_bar })
}
