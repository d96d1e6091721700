//! Encoder and successive-cancellation decoder for layered circuits and
//! two-stage codes.
//!
//! Channel observations are log-likelihood ratios `ln(P(y|0) / P(y|1))`:
//! positive favours 0, an erasure is exactly 0 and a noiseless observation
//! is infinite. A decision on an LLR of exactly 0 is 0.

use serde::{Deserialize, Serialize};

use crate::channels::ChannelModel;
use crate::construct::CodeSpec;
use crate::numeric::fsum;
use crate::polarize::{encode_transform, LayeredCircuit};
use crate::{Error, Result};

/// Per-position channel LLRs in physical order.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceivedWord {
    pub llr: Vec<f64>,
}

impl ReceivedWord {
    pub fn new(llr: Vec<f64>) -> Result<Self> {
        if let Some(i) = llr.iter().position(|v| v.is_nan()) {
            return Err(Error::InvalidParameter(format!("LLR at position {i} is NaN")));
        }
        Ok(ReceivedWord { llr })
    }

    /// Observation of `bits` through the given channels; `erased[i]` marks
    /// an erasure (ignored for non-erasure channels).
    pub fn from_observation(chans: &[ChannelModel], bits: &[u8], erased: &[bool]) -> Result<Self> {
        if bits.len() != chans.len() || erased.len() != chans.len() {
            return Err(Error::LengthMismatch { expected: chans.len(), actual: bits.len().min(erased.len()) });
        }
        let llr = chans
            .iter()
            .zip(bits)
            .zip(erased)
            .map(|((ch, &b), &e)| channel_llr(ch, b, e))
            .collect::<Result<Vec<_>>>()?;
        Ok(ReceivedWord { llr })
    }

    pub fn len(&self) -> usize {
        self.llr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.llr.is_empty()
    }
}

/// LLR of one channel output.
pub fn channel_llr(ch: &ChannelModel, bit: u8, erased: bool) -> Result<f64> {
    let sign = if bit == 0 { 1.0 } else { -1.0 };
    match *ch {
        ChannelModel::Bec { .. } => Ok(if erased { 0.0 } else { sign * f64::INFINITY }),
        ChannelModel::Bsc { p } => {
            let mag = if p == 0.0 { f64::INFINITY } else { ((1.0 - p) / p).ln() };
            Ok(sign * mag)
        }
        ChannelModel::ZOnly { .. } => {
            Err(Error::InvalidChannel("a channel known only by its Bhattacharyya bounds has no LLR".into()))
        }
    }
}

/// Check-node rule used at minus positions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoxplusRule {
    /// `2 artanh(tanh(a/2) tanh(b/2))`.
    #[default]
    Exact,
    /// `sign(a) sign(b) min(|a|, |b|)`.
    MinSum,
}

/// `a ⊞ b` under the given rule, with exact handling of 0 and infinities.
pub fn boxplus(a: f64, b: f64, rule: BoxplusRule) -> f64 {
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    let sign = if (a < 0.0) != (b < 0.0) { -1.0 } else { 1.0 };
    let (ma, mb) = (a.abs(), b.abs());
    let min = ma.min(mb);
    if rule == BoxplusRule::MinSum || min == f64::INFINITY {
        return sign * min;
    }
    // Jacobian form: stable for large magnitudes, no tanh saturation
    let corr = (-(ma + mb)).exp().ln_1p() - (-(ma - mb).abs()).exp().ln_1p();
    sign * (min + corr)
}

/// `b + (1 - 2u) a`; an infinite conflict resolves to 0.
fn plus_rule(a: f64, b: f64, u: u8) -> f64 {
    let v = if u == 0 { b + a } else { b - a };
    if v.is_nan() {
        0.0
    } else {
        v
    }
}

fn hard(llr: f64) -> u8 {
    u8::from(llr < 0.0)
}

/// Successive-cancellation state over one layered circuit.
///
/// Positions of the final level are visited in increasing order: call
/// [`ScTrellis::next_llr`] and then [`ScTrellis::decide`] for each one,
/// frozen or not. After the last decision `bits(0)` holds the re-encoded
/// channel inputs.
pub struct ScTrellis<'a> {
    circuit: &'a LayeredCircuit,
    rule: BoxplusRule,
    llr: Vec<Vec<f64>>,
    bits: Vec<Vec<u8>>,
    cursor: usize,
    ready: bool,
    ops: usize,
}

impl<'a> ScTrellis<'a> {
    pub fn new(circuit: &'a LayeredCircuit, channel_llr: Vec<f64>, rule: BoxplusRule) -> Result<Self> {
        let len = circuit.len();
        if channel_llr.len() != len {
            return Err(Error::LengthMismatch { expected: len, actual: channel_llr.len() });
        }
        let depth = circuit.depth();
        let mut llr = vec![vec![0.0; len]; depth + 1];
        llr[0] = channel_llr;
        Ok(ScTrellis { circuit, rule, llr, bits: vec![vec![0; len]; depth + 1], cursor: 0, ready: false, ops: 0 })
    }

    pub fn position(&self) -> usize {
        self.cursor
    }

    pub fn is_done(&self) -> bool {
        self.cursor == self.circuit.len()
    }

    /// Number of node updates performed so far.
    pub fn ops(&self) -> usize {
        self.ops
    }

    pub fn bits(&self, level: usize) -> &[u8] {
        &self.bits[level]
    }

    /// LLR of the current final-level position.
    pub fn next_llr(&mut self) -> f64 {
        assert!(!self.is_done(), "trellis already complete");
        let q = self.cursor;
        let depth = self.circuit.depth();
        if !self.ready {
            let n_len = self.circuit.len();
            let first = (1..=depth).find(|&k| q % (n_len >> k) == 0);
            if let Some(first) = first {
                for k in first..=depth {
                    self.fill_level(k, q);
                }
            }
            self.ready = true;
        }
        self.llr[depth][q]
    }

    /// Computes the level-`k` sub-block starting at `q` from level `k - 1`.
    fn fill_level(&mut self, k: usize, q: usize) {
        let n_len = self.circuit.len();
        let layer = &self.circuit.layers[k - 1];
        let len = n_len >> (k - 1);
        let half = len / 2;
        let b = q / len;
        let base = b * len;
        let plus = q - base >= half;
        let (prev, cur) = self.llr.split_at_mut(k);
        let prev = &prev[k - 1];
        let cur = &mut cur[0];
        for i in 0..half {
            let g = b * half + i;
            let a = prev[layer.perm[base + 2 * i]];
            let c = prev[layer.perm[base + 2 * i + 1]];
            if plus {
                cur[base + half + i] =
                    if layer.active[g] { plus_rule(a, c, self.bits[k][base + i]) } else { c };
            } else {
                cur[base + i] = if layer.active[g] { boxplus(a, c, self.rule) } else { a };
            }
        }
        self.ops += half;
    }

    /// Fixes the current position to `bit` and moves to the next one.
    pub fn decide(&mut self, bit: u8) {
        assert!(self.ready, "next_llr must be called before decide");
        let q = self.cursor;
        let n_len = self.circuit.len();
        let depth = self.circuit.depth();
        self.bits[depth][q] = bit & 1;
        for k in (1..=depth).rev() {
            let sub = n_len >> k;
            if (q + 1) % sub != 0 || (q / sub) % 2 == 0 {
                break;
            }
            let layer = &self.circuit.layers[k - 1];
            let len = 2 * sub;
            let b = q / len;
            let base = b * len;
            let (prev, cur) = self.bits.split_at_mut(k);
            let (prev, cur) = (&mut prev[k - 1], &cur[0]);
            for i in 0..sub {
                let (u, v) = (cur[base + i], cur[base + sub + i]);
                prev[layer.perm[base + 2 * i]] = if layer.active[b * sub + i] { u ^ v } else { u };
                prev[layer.perm[base + 2 * i + 1]] = v;
            }
            self.ops += sub;
        }
        self.cursor += 1;
        self.ready = false;
    }

    /// Decides the current position as frozen (0).
    fn skip_frozen(&mut self) {
        self.next_llr();
        self.decide(0);
    }
}

fn check_bits(bits: &[u8]) -> Result<()> {
    if let Some(i) = bits.iter().position(|&b| b > 1) {
        return Err(Error::InvalidParameter(format!("bit {i} is not 0 or 1")));
    }
    Ok(())
}

/// Encodes a full input vector (frozen positions included, final-position
/// order) into a codeword in physical order.
pub fn encode_full(spec: &CodeSpec, u: &[u8]) -> Result<Vec<u8>> {
    if u.len() != spec.block_len {
        return Err(Error::LengthMismatch { expected: spec.block_len, actual: u.len() });
    }
    check_bits(u)?;
    let (n1l, n2l, m) = (spec.n1_len(), spec.n2_len(), spec.m);
    let mut v = vec![vec![0u8; n1l]; n2l];
    for i0 in 0..m {
        let x = encode_transform(&spec.stage2_circuits[i0], &u[i0 * n2l..(i0 + 1) * n2l])?;
        for k in 0..n2l {
            v[k][spec.selected[k][i0]] = x[k];
        }
    }
    let mut p = m * n2l;
    for (k, vk) in v.iter_mut().enumerate() {
        for s in spec.unselected_positions(k) {
            vk[s] = u[p];
            p += 1;
        }
    }
    let mut out = vec![0u8; spec.block_len];
    for (k, vk) in v.iter().enumerate() {
        let w = encode_transform(&spec.stage1_circuits[k], vk)?;
        for (s, &bit) in w.iter().enumerate() {
            out[spec.physical_perm[k * n1l + s]] = bit;
        }
    }
    Ok(out)
}

/// Places `info` on the unfrozen positions (increasing), zeros elsewhere.
pub fn place_info(spec: &CodeSpec, info: &[u8]) -> Result<Vec<u8>> {
    let pos = spec.info_positions();
    if info.len() != pos.len() {
        return Err(Error::LengthMismatch { expected: pos.len(), actual: info.len() });
    }
    let mut u = vec![0u8; spec.block_len];
    for (&p, &b) in pos.iter().zip(info) {
        u[p] = b;
    }
    Ok(u)
}

/// Encodes information bits; frozen positions carry 0.
pub fn encode(spec: &CodeSpec, info: &[u8]) -> Result<Vec<u8>> {
    encode_full(spec, &place_info(spec, info)?)
}

/// Decoded input vector and the number of node updates performed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decoded {
    /// Full input estimate in final-position order.
    pub u: Vec<u8>,
    pub ops: usize,
}

/// Successive-cancellation decoding with the two-stage schedule: for each
/// row, every group's trellis is advanced to the row's kept position, the
/// row's stage-2 trellis is decoded from those LLRs, and its re-encoded
/// bits are fed back to the groups as decisions.
pub fn sc_decode_full(spec: &CodeSpec, y: &ReceivedWord, rule: BoxplusRule) -> Result<Decoded> {
    if y.len() != spec.block_len {
        return Err(Error::LengthMismatch { expected: spec.block_len, actual: y.len() });
    }
    if let Some(i) = y.llr.iter().position(|v| v.is_nan()) {
        return Err(Error::InvalidParameter(format!("LLR at position {i} is NaN")));
    }
    let (n1l, n2l, m) = (spec.n1_len(), spec.n2_len(), spec.m);
    let mut groups: Vec<ScTrellis<'_>> = (0..n2l)
        .map(|k| {
            let llr = (0..n1l).map(|s| y.llr[spec.physical_perm[k * n1l + s]]).collect();
            ScTrellis::new(&spec.stage1_circuits[k], llr, rule)
        })
        .collect::<Result<_>>()?;
    let mut u = vec![0u8; spec.block_len];
    let mut ops = 0;
    for i0 in 0..m {
        let mut row_llr = Vec::with_capacity(n2l);
        for (k, t) in groups.iter_mut().enumerate() {
            let target = spec.selected[k][i0];
            while t.position() < target {
                t.skip_frozen();
            }
            row_llr.push(t.next_llr());
        }
        let mut t2 = ScTrellis::new(&spec.stage2_circuits[i0], row_llr, rule)?;
        for k in 0..n2l {
            let p = i0 * n2l + k;
            let l = t2.next_llr();
            let bit = if spec.frozen[p] { 0 } else { hard(l) };
            t2.decide(bit);
            u[p] = bit;
        }
        ops += t2.ops();
        for (k, t) in groups.iter_mut().enumerate() {
            t.decide(t2.bits(0)[k]);
        }
    }
    for t in groups.iter_mut() {
        while !t.is_done() {
            t.skip_frozen();
        }
        ops += t.ops();
    }
    Ok(Decoded { u, ops })
}

/// Decodes and returns the information bits (unfrozen positions in
/// increasing order).
pub fn sc_decode(spec: &CodeSpec, y: &ReceivedWord) -> Result<Vec<u8>> {
    sc_decode_with(spec, y, BoxplusRule::Exact)
}

pub fn sc_decode_with(spec: &CodeSpec, y: &ReceivedWord, rule: BoxplusRule) -> Result<Vec<u8>> {
    let d = sc_decode_full(spec, y, rule)?;
    Ok(spec.info_positions().into_iter().map(|p| d.u[p]).collect())
}

/// Sum of the Bhattacharyya certificates of the unfrozen positions, an
/// upper bound on the block error probability under SC decoding.
pub fn union_bound(spec: &CodeSpec) -> f64 {
    fsum(spec.info_positions().into_iter().map(|p| spec.z_certificates[p].hi))
}

/// Total number of active butterflies in all circuits of a code.
pub fn butterfly_count(spec: &CodeSpec) -> usize {
    spec.stage1_circuits.iter().chain(&spec.stage2_circuits).map(LayeredCircuit::butterfly_count).sum()
}

/// Packs bits MSB-first into hex.
pub fn bits_to_hex(bits: &[u8]) -> String {
    let bytes: Vec<u8> = bits
        .chunks(8)
        .map(|c| c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | ((b & 1) << (7 - i))))
        .collect();
    hex::encode(bytes)
}

/// Unpacks `len` bits from MSB-first hex.
pub fn hex_to_bits(s: &str, len: usize) -> Result<Vec<u8>> {
    let bytes = hex::decode(s.trim()).map_err(|e| Error::InvalidParameter(format!("bad hex: {e}")))?;
    if bytes.len() != len.div_ceil(8) {
        return Err(Error::LengthMismatch { expected: len.div_ceil(8), actual: bytes.len() });
    }
    Ok((0..len).map(|i| (bytes[i / 8] >> (7 - i % 8)) & 1).collect())
}
