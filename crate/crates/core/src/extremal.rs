//! The extremal process and the constants of the finite-length analysis.
//!
//! The extremal process evolves nonnegative scalars through the same
//! sorted, block-structured levels as the channels: each sorted pair
//! `(u, v)`, `u >= v`, becomes `(u + v, u v)` unless `u > 1 > v`, in which
//! case the pair is passed through. Started from Bhattacharyya upper bounds
//! and run with the same permutations and skips as a channel circuit, it
//! dominates the Bhattacharyya parameters of the resulting bit-channels.
//!
//! Values are kept as [`WideFloat`] so that doubly exponential growth and
//! decay are represented without overflow and the coupling inequality can
//! be checked exactly.

use serde::{Deserialize, Serialize};

use crate::numeric::{fsum, WideFloat};
use crate::polarize::Layer;
use crate::{Error, Result};

/// `1 + log2 3`.
pub fn gamma() -> f64 {
    1.0 + 3f64.log2()
}

/// `x (2 - x)` on `[0, 1]`, `1` above.
pub fn q_potential(x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::OutOfRange { value: x, expected: "x >= 0" });
    }
    Ok(if x <= 1.0 { x * (2.0 - x) } else { 1.0 })
}

fn q_wide(x: WideFloat) -> f64 {
    if x >= WideFloat::ONE {
        1.0
    } else {
        let v = x.to_f64();
        v * (2.0 - v)
    }
}

/// Sum of the potential over a level, correctly rounded.
pub fn potential(xs: &[WideFloat]) -> f64 {
    fsum(xs.iter().map(|&x| q_wide(x)))
}

/// Number of ones among the leading `j` bits of the `n`-bit representation
/// of `i - 1`, for 1-based `i`.
pub fn s_weight(i: usize, n: u32, j: u32) -> Result<u32> {
    if n >= usize::BITS || i < 1 || i > 1usize << n {
        return Err(Error::IndexOutOfRange(format!("index {i} not in 1..=2^{n}")));
    }
    if j > n {
        return Err(Error::IndexOutOfRange(format!("level {j} exceeds {n}")));
    }
    Ok(s_top(i - 1, n, j))
}

/// 0-based form of [`s_weight`].
pub(crate) fn s_top(p: usize, n: u32, j: u32) -> u32 {
    if j == 0 {
        0
    } else {
        (p >> (n - j)).count_ones()
    }
}

/// How an extremal step chooses its permutation and skips.
#[derive(Debug, Clone, Copy)]
pub enum StepRule<'a> {
    /// Sort the level and skip exactly the pairs with `u > 1 > v`.
    SelfRule,
    /// Sort the level and obey the given butterfly mask.
    Mask(&'a [bool]),
    /// Use the given permutation and mask unchanged.
    Replay(&'a Layer),
}

fn sort_desc(xs: &[WideFloat], len: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..xs.len()).collect();
    for block in perm.chunks_mut(len) {
        block.sort_by(|&a, &b| xs[b].cmp(&xs[a]));
    }
    perm
}

/// One level of the extremal process on `xs` at layer `k` (taking level
/// `k` to `k + 1`). Returns the next values and the layer used.
pub fn extremal_step(xs: &[WideFloat], k: usize, rule: StepRule<'_>) -> Result<(Vec<WideFloat>, Layer)> {
    let n_len = xs.len();
    if n_len < 2 || !n_len.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n_len));
    }
    let len = n_len >> k;
    if len < 2 {
        return Err(Error::IndexOutOfRange(format!("layer {k} of a length-{n_len} process")));
    }
    let layer = match rule {
        StepRule::Replay(layer) => {
            layer.validate(n_len, len)?;
            layer.clone()
        }
        StepRule::SelfRule | StepRule::Mask(_) => {
            let perm = sort_desc(xs, len);
            let active = match rule {
                StepRule::Mask(mask) => {
                    if mask.len() != n_len / 2 {
                        return Err(Error::LengthMismatch { expected: n_len / 2, actual: mask.len() });
                    }
                    mask.to_vec()
                }
                _ => perm
                    .chunks(2)
                    .map(|p| !(xs[p[0]] > WideFloat::ONE && xs[p[1]] < WideFloat::ONE))
                    .collect(),
            };
            Layer { perm, active }
        }
    };
    let half = len / 2;
    let mut out = vec![WideFloat::ZERO; n_len];
    for g in 0..n_len / 2 {
        let (b, i) = (g / half, g % half);
        let (u, v) = (xs[layer.perm[b * len + 2 * i]], xs[layer.perm[b * len + 2 * i + 1]]);
        let (m, p) = if layer.active[g] { (u + v, u * v) } else { (u, v) };
        out[b * len + i] = m;
        out[b * len + half + i] = p;
    }
    Ok((out, layer))
}

/// Extremal process run for some number of levels, optionally coupled with
/// the process started from `y = 2 x` whose decisions it replays.
#[derive(Debug, Clone)]
pub struct ExtremalTrace {
    pub n: u32,
    /// Values at levels `0..=levels`.
    pub x: Vec<Vec<WideFloat>>,
    /// Coupled values, when present.
    pub y: Option<Vec<Vec<WideFloat>>>,
    /// Correction exponents at levels `0..=levels` (coupled runs only;
    /// otherwise empty).
    pub a: Vec<Vec<u128>>,
    pub layers: Vec<Layer>,
}

impl ExtremalTrace {
    pub fn levels(&self) -> usize {
        self.layers.len()
    }

    pub fn potentials(&self) -> Vec<f64> {
        self.x.iter().map(|l| potential(l)).collect()
    }

    /// Number of skipped pairs per level.
    pub fn skip_counts(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.active.iter().filter(|&&a| !a).count()).collect()
    }

    /// Checks `y[j][i] >= 2^(2^s_j(i) - a[j][i]) x[j][i]` exactly at every
    /// level; returns the first violating `(level, position)`.
    pub fn coupling_violation(&self) -> Option<(usize, usize)> {
        let y = self.y.as_ref()?;
        for j in 0..self.x.len() {
            for i in 0..self.x[j].len() {
                let s = s_top(i, self.n, j as u32);
                let e = (1i128 << s) - self.a[j][i] as i128;
                if y[j][i] < self.x[j][i].mul_pow2(e as i64) {
                    return Some((j, i));
                }
            }
        }
        None
    }

    /// `|{i : x[j][i] <= 2^(a[j][i] - 2^s_j(i))}|` at level `j`.
    pub fn small_count(&self, j: usize) -> usize {
        (0..self.x[j].len())
            .filter(|&i| {
                let s = s_top(i, self.n, j as u32);
                let e = self.a[j][i] as i128 - (1i128 << s);
                self.x[j][i] <= WideFloat::pow2(e as i64)
            })
            .count()
    }
}

/// Runs the extremal process with its own skip rule for `levels` levels.
pub fn run_extremal(x0: &[f64], levels: usize) -> Result<ExtremalTrace> {
    let n = check_start(x0, f64::INFINITY, levels)?;
    let mut x = vec![x0.iter().map(|&v| WideFloat::from_f64(v)).collect::<Vec<_>>()];
    let mut layers = Vec::with_capacity(levels);
    for k in 0..levels {
        let (next, layer) = extremal_step(x.last().unwrap(), k, StepRule::SelfRule)?;
        x.push(next);
        layers.push(layer);
    }
    Ok(ExtremalTrace { n, x, y: None, a: Vec::new(), layers })
}

fn check_start(x0: &[f64], upper: f64, levels: usize) -> Result<u32> {
    if x0.is_empty() || !x0.len().is_power_of_two() {
        return Err(Error::NotPowerOfTwo(x0.len()));
    }
    let n = x0.len().trailing_zeros();
    if levels > n as usize {
        return Err(Error::InvalidParameter(format!("{levels} levels on a length-2^{n} process")));
    }
    if let Some(&v) = x0.iter().find(|&&v| !(v >= 0.0 && v < upper && v.is_finite())) {
        return Err(Error::OutOfRange { value: v, expected: "start value range" });
    }
    Ok(n)
}

/// Coupled run: the process started from `y = 2 x0` decides permutations
/// and skips with its own rule; the process started from `x0` replays them.
/// Correction exponents record how far skips push `y` below the no-skip
/// relation `y = 2^(2^s) x`.
///
/// Start values must lie in `[0, 1/2)`.
pub fn run_coupled(x0: &[f64], levels: usize) -> Result<ExtremalTrace> {
    let n = check_start(x0, 0.5, levels)?;
    let n_len = x0.len();
    let xs0: Vec<WideFloat> = x0.iter().map(|&v| WideFloat::from_f64(v)).collect();
    let ys0: Vec<WideFloat> = xs0.iter().map(|v| v.mul_pow2(1)).collect();
    let mut x = vec![xs0];
    let mut y = vec![ys0];
    let mut a = vec![vec![0u128; n_len]];
    let mut layers = Vec::with_capacity(levels);
    for k in 0..levels {
        let (ynext, layer) = extremal_step(y.last().unwrap(), k, StepRule::SelfRule)?;
        let (xnext, _) = extremal_step(x.last().unwrap(), k, StepRule::Replay(&layer))?;
        let cur = a.last().unwrap();
        let mut anext = vec![0u128; n_len];
        let len = n_len >> k;
        let half = len / 2;
        for g in 0..n_len / 2 {
            let (b, i) = (g / half, g % half);
            let (p1, p2) = (layer.perm[b * len + 2 * i], layer.perm[b * len + 2 * i + 1]);
            let (a1, a2) = (cur[p1], cur[p2]);
            let (m, p) = (b * len + i, b * len + half + i);
            if layer.active[g] {
                anext[m] = a1.max(a2);
                anext[p] = a1 + a2;
            } else {
                anext[m] = a1;
                anext[p] = a2 + (1u128 << s_top(p2, n, k as u32));
            }
        }
        y.push(ynext);
        x.push(xnext);
        a.push(anext);
        layers.push(layer);
    }
    let trace = ExtremalTrace { n, x, y: Some(y), a, layers };
    if let Some((j, i)) = trace.coupling_violation() {
        return Err(Error::InvalidParameter(format!("coupling inequality fails at level {j}, position {i}")));
    }
    Ok(trace)
}

/// The polylogarithmic exponent of the counting bound,
/// `(2 - log γ + log n + log(α n + β))(log n - log γ) + log(3 - log γ + log n + log(α n + β))`
/// with base-2 logarithms and `γ = 1 + log2 3`.
pub fn p_count_bound(n: f64, alpha: f64, beta: f64) -> f64 {
    let lg = gamma().log2();
    let l = n.log2() + (alpha * n + beta).log2();
    (2.0 - lg + l) * (n.log2() - lg) + (3.0 - lg + l).log2()
}

/// `c_ρ` together with the last scanned index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CRho {
    pub value: f64,
    pub argmax: u64,
    pub scan_end: u64,
}

/// `log2(2 + max_n (2τ n + 12 - 2 log2 10) 2^(ρ n + ceil(n / (η + 1)) - n))`.
///
/// The term is bounded by the envelope
/// `(2τ n + c2) 2^(1 + n (ρ + 1/(η + 1) - 1))`, which is eventually
/// decreasing when `ρ < η / (η + 1)`. The scan stops at the first `n` where
/// the envelope is decreasing and already below the running maximum, so the
/// returned value is exact.
pub fn c_rho(rho: f64, eta: f64, tau: f64) -> Result<CRho> {
    if !(eta > 0.0) || !(rho > 0.0) || !(tau > 0.0) {
        return Err(Error::InvalidParameter("c_rho needs positive rho, eta, tau".into()));
    }
    let slope = rho + 1.0 / (eta + 1.0) - 1.0;
    if slope >= 0.0 {
        return Err(Error::InvalidParameter(format!("rho = {rho} is not below eta/(eta+1) = {}", eta / (eta + 1.0))));
    }
    let (c1, c2) = (2.0 * tau, 12.0 - 2.0 * 10f64.log2());
    let term = |n: f64| (c1 * n + c2) * 2f64.powf(rho * n + (n / (eta + 1.0)).ceil() - n);
    let env = |n: f64| (c1 * n + c2) * 2f64.powf(1.0 + n * slope);
    let mut best = term(0.0);
    let mut argmax = 0u64;
    let mut n = 0u64;
    loop {
        n += 1;
        let nf = n as f64;
        let t = term(nf);
        if t > best {
            best = t;
            argmax = n;
        }
        let decreasing = c1 / (c1 * nf + c2) + std::f64::consts::LN_2 * slope < 0.0;
        if decreasing && env(nf) < best {
            break;
        }
        if n > 100_000_000 {
            return Err(Error::InvalidParameter("c_rho scan did not terminate".into()));
        }
    }
    Ok(CRho { value: (2.0 + best).log2(), argmax, scan_end: n })
}

/// Upper bound on `sup_n q(n)` with
/// `q(n) = n (1/μ - ρ/(1 + γρ)) + 1 + 1/γ + p(ργ/(1 + ργ) n, α, β)`.
///
/// Integers up to 4096 are evaluated exactly. Beyond that the range is cut
/// into doubling blocks `[a, 2a]`, each bounded by
/// `-δ a + 1 + 1/γ + p(κ 2a)` (`p` is increasing there); the scan stops
/// once the block bound is below the running maximum and decreasing.
pub fn d2_bound(mu: f64, rho: f64, alpha: f64, beta: f64) -> Result<(f64, f64)> {
    let g = gamma();
    let delta = rho / (1.0 + g * rho) - 1.0 / mu;
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("q(n) is unbounded: slope {}", -delta)));
    }
    let kappa = rho * g / (1.0 + rho * g);
    let c = 1.0 + 1.0 / g;
    let q = |n: f64| -delta * n + c + p_count_bound(kappa * n, alpha, beta);
    let mut best = f64::NEG_INFINITY;
    let mut scan_end;
    for n in 1..=4096u32 {
        let v = q(n as f64);
        if v.is_finite() && v > best {
            best = v;
        }
    }
    let block = |a: f64| -delta * a + c + p_count_bound(kappa * 2.0 * a, alpha, beta);
    let mut a = 4096.0f64;
    loop {
        let bound = block(a);
        if bound > best {
            best = bound;
        }
        let next = block(2.0 * a);
        scan_end = 2.0 * a;
        // past this point the linear term dominates and blocks keep shrinking
        if bound < best && next < bound {
            break;
        }
        a *= 2.0;
        if !a.is_finite() || a > 1e300 {
            return Err(Error::InvalidParameter("d2 scan did not terminate".into()));
        }
    }
    Ok((best, scan_end))
}

/// Constants of the finite-length guarantee for given `μ`, `P_e`, `b`,
/// `η` and block exponent `n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstantsReport {
    pub b: f64,
    pub eta: f64,
    pub mu: f64,
    pub mu_threshold: f64,
    pub pe: f64,
    pub rho: f64,
    pub tau: f64,
    pub gamma: f64,
    pub c_rho: f64,
    pub c_rho_argmax: u64,
    pub c_rho_scan_end: u64,
    pub t: f64,
    pub d1: f64,
    pub d2: f64,
    pub d2_scan_end: f64,
    /// `None` when `d3` exceeds the `f64` range.
    pub d3: Option<f64>,
    pub d3_log2: f64,
    /// `d3^μ`; `None` when it exceeds the `f64` range.
    pub kappa: Option<f64>,
    pub kappa_log2: f64,
    pub n: u32,
    pub n1: u32,
    pub n2: u32,
    pub l: u32,
    pub alpha: f64,
    pub beta: f64,
}

pub const DEFAULT_T: f64 = 0.49;

/// `2 + log2 3 + 1/η`; `μ` must exceed it.
pub fn mu_threshold(eta: f64) -> f64 {
    2.0 + 3f64.log2() + 1.0 / eta
}

/// Level split `(n1, n2, l)` for block exponent `n`.
pub fn level_split(n: u32, rho: f64) -> (u32, u32, u32) {
    let g = gamma();
    let n1 = ((n as f64) / (1.0 + rho * g)).ceil() as u32;
    let n1 = n1.min(n);
    let n2 = n - n1;
    let l = ((n2 as f64) / g).floor() as u32;
    (n1, n2, l)
}

pub fn compute_constants(mu: f64, pe: f64, b: f64, eta: f64, n: u32) -> Result<ConstantsReport> {
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter(format!("eta must be positive, got {eta}")));
    }
    if !(b > 0.0 && b < 1.0) {
        return Err(Error::InvalidParameter(format!("b must lie in (0, 1), got {b}")));
    }
    let threshold = mu_threshold(eta);
    if !(mu > threshold) || !mu.is_finite() {
        return Err(Error::InvalidParameter(format!("mu = {mu} must exceed {threshold}")));
    }
    if !(pe > 0.0 && pe < 1.0) {
        return Err(Error::OutOfRange { value: pe, expected: "(0, 1)" });
    }
    if n == 0 || n > 62 {
        return Err(Error::InvalidParameter(format!("n = {n} not in 1..=62")));
    }
    let g = gamma();
    let rho = 2.0 / (mu + 1.0 / eta - 3f64.log2());
    let tau = rho / b;
    let cr = c_rho(rho, eta, tau)?;
    let t = DEFAULT_T;
    let d1 = (1.0 / t) * 2f64.powf(cr.value + 1.0) + 1.0;
    let (n1, n2, l) = level_split(n, rho);
    let alpha = 1.0 + 1.0 / (rho * g);
    let beta = -pe.log2() + alpha;
    let (d2, d2_scan_end) = d2_bound(mu, rho, alpha, beta)?;
    // d3 = d1 + 2^(c_rho + 2) + 2^d2 + 1, in the log domain
    let rest = d1 + 2f64.powf(cr.value + 2.0) + 1.0;
    let d3_log2 = if d2 > 1000.0 { d2 + (1.0 + rest * 2f64.powf(-d2)).log2() } else { (rest + 2f64.powf(d2)).log2() };
    let d3 = Some(2f64.powf(d3_log2)).filter(|v| v.is_finite());
    let kappa_log2 = mu * d3_log2;
    let kappa = d3.map(|v| v.powf(mu)).filter(|v| v.is_finite());
    Ok(ConstantsReport {
        b,
        eta,
        mu,
        mu_threshold: threshold,
        pe,
        rho,
        tau,
        gamma: g,
        c_rho: cr.value,
        c_rho_argmax: cr.argmax,
        c_rho_scan_end: cr.scan_end,
        t,
        d1,
        d2,
        d2_scan_end,
        d3,
        d3_log2,
        kappa,
        kappa_log2,
        n,
        n1,
        n2,
        l,
        alpha,
        beta,
    })
}

impl ConstantsReport {
    /// `i_bar - d * 2^(-n / μ)` with `log2 d = d_log2`.
    fn guarantee(&self, i_bar: f64, d_log2: f64) -> f64 {
        i_bar - 2f64.powf(d_log2 - self.n as f64 / self.mu)
    }

    /// Rate guarantee `Ī - d3 N^(-1/μ)`.
    pub fn rate_guarantee(&self, i_bar: f64) -> f64 {
        self.guarantee(i_bar, self.d3_log2)
    }

    /// Stage-1 good-fraction floor `Ī - d1 N^(-1/μ)`.
    pub fn stage1_floor(&self, i_bar: f64) -> f64 {
        self.guarantee(i_bar, self.d1.log2())
    }
}
