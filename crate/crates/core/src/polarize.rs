//! Layered polarization circuits.
//!
//! A circuit over `N = 2^n` positions is a list of layers. Layer `k`
//! (taking level `k` to level `k + 1`) works on sub-blocks of length
//! `len = N >> k`: each sub-block is first permuted, then consecutive pairs
//! `(2i, 2i + 1)` are combined. The minus channel of pair `i` goes to
//! position `i` of the sub-block and the plus channel to `len / 2 + i`. A
//! skipped pair is copied through to the same two positions.
//!
//! Positions are 0-based throughout. `Layer::perm[pos]` is the position
//! (at the previous level) whose channel is placed at `pos`; it never moves
//! a channel out of its sub-block.

use serde::{Deserialize, Serialize};

use crate::channels::{combine_minus, combine_plus, ChannelModel};
use crate::quantize::QuantGrid;
use crate::speed::f_poly;
use crate::numeric::fsum;
use crate::{Error, Result};

/// One polarization level: a sub-block permutation and a butterfly mask.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layer {
    pub perm: Vec<usize>,
    /// `true` = butterfly applied, `false` = skipped. Length `N / 2`.
    pub active: Vec<bool>,
}

impl Layer {
    pub fn identity(n_len: usize) -> Self {
        Layer { perm: (0..n_len).collect(), active: vec![true; n_len / 2] }
    }

    pub fn all_skip(n_len: usize) -> Self {
        Layer { perm: (0..n_len).collect(), active: vec![false; n_len / 2] }
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    /// Checks the shape and the block-diagonal structure for sub-blocks of
    /// length `len`.
    pub fn validate(&self, n_len: usize, len: usize) -> Result<()> {
        if self.perm.len() != n_len {
            return Err(Error::LengthMismatch { expected: n_len, actual: self.perm.len() });
        }
        if self.active.len() != n_len / 2 {
            return Err(Error::LengthMismatch { expected: n_len / 2, actual: self.active.len() });
        }
        let mut seen = vec![false; n_len];
        for (pos, &src) in self.perm.iter().enumerate() {
            if src >= n_len || seen[src] {
                return Err(Error::InvalidCodeSpec(format!("layer perm is not a permutation at {pos}")));
            }
            seen[src] = true;
            if src / len != pos / len {
                return Err(Error::InvalidCodeSpec(format!(
                    "layer perm moves {src} to {pos} across sub-blocks of length {len}"
                )));
            }
        }
        Ok(())
    }
}

/// Polarization transform of length `2^n`. It may hold fewer than `n`
/// layers; the missing trailing levels combine nothing and leave every
/// position where it is.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayeredCircuit {
    pub n: u32,
    pub layers: Vec<Layer>,
}

impl LayeredCircuit {
    pub fn len(&self) -> usize {
        1usize << self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// Sub-block length seen by layer `k`.
    pub fn block_len(&self, k: usize) -> usize {
        self.len() >> k
    }

    /// The classical transform: identity permutations, every butterfly on.
    pub fn classical(n: u32) -> Self {
        LayeredCircuit { n, layers: (0..n).map(|_| Layer::identity(1 << n)).collect() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.len() > self.n as usize {
            return Err(Error::InvalidCodeSpec(format!(
                "circuit of length 2^{} has {} layers",
                self.n,
                self.layers.len()
            )));
        }
        for (k, layer) in self.layers.iter().enumerate() {
            layer.validate(self.len(), self.block_len(k))?;
        }
        Ok(())
    }

    /// Skip matrix: `t[k][g]` is true when pair `g` of layer `k` is skipped.
    pub fn skip_matrix(&self) -> Vec<Vec<bool>> {
        self.layers.iter().map(|l| l.active.iter().map(|&a| !a).collect()).collect()
    }

    pub fn butterfly_count(&self) -> usize {
        self.layers.iter().map(Layer::active_count).sum()
    }
}

/// When a pair of channels may be combined.
#[derive(Debug, Clone, PartialEq)]
pub enum CombinePolicy {
    /// Combine every pair (sorting only).
    Always,
    /// Combine only pairs the quantization grid allows.
    Quantized(QuantGrid),
}

impl CombinePolicy {
    fn allows(&self, a: &ChannelModel, b: &ChannelModel) -> bool {
        match self {
            CombinePolicy::Always => true,
            CombinePolicy::Quantized(grid) => grid.combinable(a, b),
        }
    }
}

/// Output positions `(minus, plus)` of pair `i` at level `j`, both
/// 1-based, for a length-`2^n` transform.
pub fn index_map(j: u32, i: usize, n: u32) -> Result<(usize, usize)> {
    if j < 1 || j > n {
        return Err(Error::IndexOutOfRange(format!("level {j} not in 1..={n}")));
    }
    let half_n = 1usize << (n - 1);
    if i < 1 || i > half_n {
        return Err(Error::IndexOutOfRange(format!("pair {i} not in 1..={half_n}")));
    }
    let span = 1usize << (n - j);
    let (l, r) = ((i - 1) / span, (i - 1) % span + 1);
    Ok((2 * l * span + r, (2 * l + 1) * span + r))
}

/// Sort key: decreasing upper bound, then decreasing lower bound.
fn key_cmp(a: &ChannelModel, b: &ChannelModel) -> std::cmp::Ordering {
    let (za, zb) = (a.z(), b.z());
    zb.hi.total_cmp(&za.hi).then(zb.lo.total_cmp(&za.lo))
}

/// Block-diagonal permutation sorting each sub-block of length `len` by
/// decreasing Bhattacharyya parameter. The sort is stable.
pub fn sort_permutation(chs: &[ChannelModel], len: usize) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..chs.len()).collect();
    for block in perm.chunks_mut(len) {
        block.sort_by(|&x, &y| key_cmp(&chs[x], &chs[y]));
    }
    perm
}

/// Butterfly mask for already-permuted channels: pair `(2i, 2i + 1)` of
/// every sub-block is active when the policy allows combining it.
pub fn build_active_row(sorted: &[ChannelModel], policy: &CombinePolicy) -> Vec<bool> {
    sorted.chunks(2).map(|p| policy.allows(&p[0], &p[1])).collect()
}

fn check_len(n_len: usize) -> Result<u32> {
    if n_len == 0 || !n_len.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n_len));
    }
    Ok(n_len.trailing_zeros())
}

/// Applies layer `k` to the channels of level `k`.
pub fn polarize_level(chs: &[ChannelModel], layer: &Layer, k: usize) -> Result<Vec<ChannelModel>> {
    let n = check_len(chs.len())?;
    if k >= n as usize {
        return Err(Error::IndexOutOfRange(format!("layer {k} of a depth-{n} transform")));
    }
    let len = chs.len() >> k;
    layer.validate(chs.len(), len)?;
    let half = len / 2;
    let mut out = chs.to_vec();
    for g in 0..chs.len() / 2 {
        let (b, i) = (g / half, g % half);
        let a = &chs[layer.perm[b * len + 2 * i]];
        let c = &chs[layer.perm[b * len + 2 * i + 1]];
        if layer.active[g] {
            out[b * len + i] = combine_minus(a, c);
            out[b * len + half + i] = combine_plus(a, c);
        } else {
            out[b * len + i] = *a;
            out[b * len + half + i] = *c;
        }
    }
    Ok(out)
}

/// Polarization energy of a level, evaluated on the upper and on the lower
/// Bhattacharyya bounds (equal for exact channels).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelEnergy {
    pub hi: f64,
    pub lo: f64,
}

fn level_energy(chs: &[ChannelModel], b: f64) -> LevelEnergy {
    let n = chs.len() as f64;
    LevelEnergy {
        hi: fsum(chs.iter().map(|c| f_poly(c.z().hi, b))) / n,
        lo: fsum(chs.iter().map(|c| f_poly(c.z().lo, b))) / n,
    }
}

/// Everything produced by a polarization run.
#[derive(Debug, Clone)]
pub struct PolarizationRun {
    pub channels: Vec<ChannelModel>,
    pub circuit: LayeredCircuit,
    /// Energy at levels `0..=depth`.
    pub energy: Vec<LevelEnergy>,
}

impl PolarizationRun {
    pub fn skip_matrix(&self) -> Vec<Vec<bool>> {
        self.circuit.skip_matrix()
    }

    /// Energies on the upper bounds, levels `0..=depth`.
    pub fn energy_hi(&self) -> Vec<f64> {
        self.energy.iter().map(|e| e.hi).collect()
    }
}

/// Runs `depth` levels of sorted polarization, choosing permutations and
/// skips from the current channels at each level.
pub fn run_polarization_depth(
    chs: &[ChannelModel],
    policy: &CombinePolicy,
    b: f64,
    depth: usize,
) -> Result<PolarizationRun> {
    let n = check_len(chs.len())?;
    if depth > n as usize {
        return Err(Error::InvalidParameter(format!("depth {depth} exceeds {n}")));
    }
    for ch in chs {
        ch.validate()?;
    }
    let mut cur = chs.to_vec();
    let mut layers = Vec::with_capacity(depth);
    let mut energy = vec![level_energy(&cur, b)];
    for k in 0..depth {
        let len = cur.len() >> k;
        let perm = sort_permutation(&cur, len);
        let sorted: Vec<ChannelModel> = perm.iter().map(|&p| cur[p]).collect();
        let active = build_active_row(&sorted, policy);
        let layer = Layer { perm, active };
        cur = polarize_level(&cur, &layer, k)?;
        layers.push(layer);
        energy.push(level_energy(&cur, b));
    }
    Ok(PolarizationRun { channels: cur, circuit: LayeredCircuit { n, layers }, energy })
}

/// Full-depth run. With [`CombinePolicy::Always`] this is sorted
/// polarization without skips; with a quantization grid, pairs the grid
/// does not allow are skipped.
pub fn run_polarization(chs: &[ChannelModel], policy: &CombinePolicy, b: f64) -> Result<PolarizationRun> {
    let n = check_len(chs.len())?;
    run_polarization_depth(chs, policy, b, n as usize)
}

/// Replays a fixed circuit on channels; returns the channels at every level
/// `0..=depth`.
pub fn apply_circuit(chs: &[ChannelModel], circuit: &LayeredCircuit) -> Result<Vec<Vec<ChannelModel>>> {
    if chs.len() != circuit.len() {
        return Err(Error::LengthMismatch { expected: circuit.len(), actual: chs.len() });
    }
    let mut levels = vec![chs.to_vec()];
    for (k, layer) in circuit.layers.iter().enumerate() {
        let next = polarize_level(levels.last().unwrap(), layer, k)?;
        levels.push(next);
    }
    Ok(levels)
}

/// GF(2) transform from bit-channel inputs (final level) to channel inputs
/// (level 0). `u.len()` must equal the circuit length.
pub fn encode_transform(circuit: &LayeredCircuit, u: &[u8]) -> Result<Vec<u8>> {
    let n_len = circuit.len();
    if u.len() != n_len {
        return Err(Error::LengthMismatch { expected: n_len, actual: u.len() });
    }
    let mut val = u.to_vec();
    let mut out = vec![0u8; n_len];
    for k in (0..circuit.depth()).rev() {
        let layer = &circuit.layers[k];
        let len = n_len >> k;
        let half = len / 2;
        for g in 0..n_len / 2 {
            let (b, i) = (g / half, g % half);
            let (x, y) = (val[b * len + i], val[b * len + half + i]);
            out[layer.perm[b * len + 2 * i]] = if layer.active[g] { x ^ y } else { x };
            out[layer.perm[b * len + 2 * i + 1]] = y;
        }
        std::mem::swap(&mut val, &mut out);
    }
    Ok(val)
}
