//! BMS channel models and the two channel-combining operations.
//!
//! Erasure channels are tracked exactly. Every other channel is carried as
//! a certified interval on its Bhattacharyya parameter; the combining
//! operations propagate the interval through the known identities:
//!
//! - `Z(W1 ⊛ W2) = Z1 * Z2` (exact for every BMS pair),
//! - `sqrt(Z1² + Z2² - Z1² Z2²) <= Z(W1 ⊞ W2) <= Z1 + Z2 - Z1 Z2`.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Certified bounds `lo <= Z <= hi` on a Bhattacharyya parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct ZInterval {
    pub lo: f64,
    pub hi: f64,
}

impl ZInterval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
            return Err(Error::InvalidChannel(format!("bad Z interval [{lo}, {hi}]")));
        }
        Ok(ZInterval { lo, hi })
    }

    pub fn point(z: f64) -> Result<Self> {
        Self::new(z, z)
    }

    /// Builds an interval from raw endpoints, clipping both into `[0, 1]`
    /// and forcing `lo <= hi` to absorb rounding.
    pub(crate) fn clipped(lo: f64, hi: f64) -> Self {
        let hi = hi.clamp(0.0, 1.0);
        let lo = lo.clamp(0.0, 1.0).min(hi);
        ZInterval { lo, hi }
    }

    pub fn contains(&self, z: f64) -> bool {
        self.lo <= z && z <= self.hi
    }

    pub fn is_point(&self) -> bool {
        self.lo == self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

impl TryFrom<[f64; 2]> for ZInterval {
    type Error = Error;

    fn try_from(v: [f64; 2]) -> Result<Self> {
        ZInterval::new(v[0], v[1])
    }
}

impl From<ZInterval> for [f64; 2] {
    fn from(z: ZInterval) -> Self {
        [z.lo, z.hi]
    }
}

/// A binary-input memoryless symmetric channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ChannelModel {
    /// Binary erasure channel with erasure probability `eps`.
    Bec { eps: f64 },
    /// Binary symmetric channel with crossover probability `p <= 1/2`.
    Bsc { p: f64 },
    /// A BMS channel known only through bounds on its Bhattacharyya
    /// parameter. Produced by combining non-erasure channels.
    #[serde(rename = "zonly")]
    ZOnly { z: ZInterval },
}

impl ChannelModel {
    pub fn bec(eps: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::InvalidChannel(format!("BEC erasure probability {eps} not in [0, 1]")));
        }
        Ok(ChannelModel::Bec { eps })
    }

    pub fn bsc(p: f64) -> Result<Self> {
        if !(0.0..=0.5).contains(&p) {
            return Err(Error::InvalidChannel(format!("BSC crossover {p} not in [0, 1/2]")));
        }
        Ok(ChannelModel::Bsc { p })
    }

    pub fn z_only(lo: f64, hi: f64) -> Result<Self> {
        Ok(ChannelModel::ZOnly { z: ZInterval::new(lo, hi)? })
    }

    /// Checks the invariants of a (possibly deserialized) channel.
    pub fn validate(&self) -> Result<()> {
        match *self {
            ChannelModel::Bec { eps } => Self::bec(eps).map(|_| ()),
            ChannelModel::Bsc { p } => Self::bsc(p).map(|_| ()),
            ChannelModel::ZOnly { z } => ZInterval::new(z.lo, z.hi).map(|_| ()),
        }
    }

    /// True when the Bhattacharyya parameter is known exactly.
    pub fn is_exact(&self) -> bool {
        !matches!(self, ChannelModel::ZOnly { .. })
    }

    pub fn z(&self) -> ZInterval {
        bhattacharyya(self)
    }

    /// Sort/quantization key: the upper Bhattacharyya bound.
    pub fn z_hi(&self) -> f64 {
        self.z().hi
    }
}

/// Bhattacharyya parameter of a channel, as a certified interval.
pub fn bhattacharyya(ch: &ChannelModel) -> ZInterval {
    match *ch {
        ChannelModel::Bec { eps } => ZInterval { lo: eps, hi: eps },
        ChannelModel::Bsc { p } => {
            let z = (2.0 * (p * (1.0 - p)).sqrt()).min(1.0);
            ZInterval { lo: z, hi: z }
        }
        ChannelModel::ZOnly { z } => z,
    }
}

/// Binary entropy in bits.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -p * p.log2() - (1.0 - p) * (1.0 - p).log2()
}

/// Symmetric capacity in bits.
///
/// Exact for BEC and BSC. For a Z-only channel the interval is
/// `[1 - z.hi, 1 - z.lo²]`: every BMS channel is a mixture of BSCs, and for
/// a BSC `1 - Z <= I <= 1 - Z²`.
pub fn symmetric_capacity(ch: &ChannelModel) -> ZInterval {
    match *ch {
        ChannelModel::Bec { eps } => {
            let c = 1.0 - eps;
            ZInterval { lo: c, hi: c }
        }
        ChannelModel::Bsc { p } => {
            let c = (1.0 - binary_entropy(p)).clamp(0.0, 1.0);
            ZInterval { lo: c, hi: c }
        }
        ChannelModel::ZOnly { z } => ZInterval::clipped(1.0 - z.hi, 1.0 - z.lo * z.lo),
    }
}

/// `a ⊞ b`, the "minus" (worse) combination.
pub fn combine_minus(a: &ChannelModel, b: &ChannelModel) -> ChannelModel {
    if let (ChannelModel::Bec { eps: e1 }, ChannelModel::Bec { eps: e2 }) = (*a, *b) {
        return ChannelModel::Bec { eps: (e1 + e2 - e1 * e2).clamp(0.0, 1.0) };
    }
    let (za, zb) = (a.z(), b.z());
    let (l1, l2) = (za.lo * za.lo, zb.lo * zb.lo);
    let lo = (l1 + l2 - l1 * l2).max(0.0).sqrt();
    let hi = za.hi + zb.hi - za.hi * zb.hi;
    ChannelModel::ZOnly { z: ZInterval::clipped(lo, hi) }
}

/// `a ⊛ b`, the "plus" (better) combination.
pub fn combine_plus(a: &ChannelModel, b: &ChannelModel) -> ChannelModel {
    if let (ChannelModel::Bec { eps: e1 }, ChannelModel::Bec { eps: e2 }) = (*a, *b) {
        return ChannelModel::Bec { eps: e1 * e2 };
    }
    let (za, zb) = (a.z(), b.z());
    ChannelModel::ZOnly { z: ZInterval::clipped(za.lo * zb.lo, za.hi * zb.hi) }
}

/// Parses a channel-sequence CSV: one `kind,param` record per line with
/// `kind` in `{bec, bsc}`. Blank lines and `#` comments are ignored.
pub fn read_channel_csv<R: Read>(reader: R) -> Result<Vec<ChannelModel>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::ChannelFile(e.to_string()))?;
        if rec.len() != 2 {
            return Err(Error::ChannelFile(format!("record {}: expected `kind,param`", i + 1)));
        }
        let param: f64 = rec[1]
            .parse()
            .map_err(|_| Error::ChannelFile(format!("record {}: bad parameter `{}`", i + 1, &rec[1])))?;
        let ch = match rec[0].to_ascii_lowercase().as_str() {
            "bec" => ChannelModel::bec(param),
            "bsc" => ChannelModel::bsc(param),
            other => return Err(Error::ChannelFile(format!("record {}: unknown kind `{other}`", i + 1))),
        }
        .map_err(|e| Error::ChannelFile(format!("record {}: {e}", i + 1)))?;
        out.push(ch);
    }
    Ok(out)
}

pub fn load_channel_file(path: &Path) -> Result<Vec<ChannelModel>> {
    read_channel_csv(std::fs::File::open(path)?)
}

/// Writes channels in the CSV format read by [`read_channel_csv`].
/// Z-only channels have no file representation.
pub fn write_channel_csv<W: std::io::Write>(mut w: W, chans: &[ChannelModel]) -> Result<()> {
    for ch in chans {
        match *ch {
            ChannelModel::Bec { eps } => writeln!(w, "bec,{eps}")?,
            ChannelModel::Bsc { p } => writeln!(w, "bsc,{p}")?,
            ChannelModel::ZOnly { .. } => {
                return Err(Error::InvalidChannel("Z-only channels cannot be written to a channel file".into()))
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn bec(e: f64) -> ChannelModel {
        ChannelModel::bec(e).unwrap()
    }
    fn bsc(p: f64) -> ChannelModel {
        ChannelModel::bsc(p).unwrap()
    }

    #[test]
    fn bhattacharyya_examples() {
        assert_eq!(bhattacharyya(&bec(0.3)), ZInterval { lo: 0.3, hi: 0.3 });
        assert_eq!(bhattacharyya(&bsc(0.0)), ZInterval { lo: 0.0, hi: 0.0 });
        let z = bhattacharyya(&bsc(0.11));
        assert!(z.is_point());
        assert!((z.hi - 0.625_779_513_886_480_7).abs() < 1e-12);
    }

    #[test]
    fn capacity_examples() {
        assert_eq!(symmetric_capacity(&bec(0.5)), ZInterval { lo: 0.5, hi: 0.5 });
        assert_eq!(symmetric_capacity(&bsc(0.5)), ZInterval { lo: 0.0, hi: 0.0 });
        // 1 - h2(0.11)
        let c = symmetric_capacity(&bsc(0.11)).hi;
        assert!((c - 0.500_084_041_835_472).abs() < 1e-12, "{c}");
        let zc = symmetric_capacity(&ChannelModel::z_only(0.2, 0.4).unwrap());
        assert_eq!(zc, ZInterval { lo: 0.6, hi: 1.0 - 0.04 });
    }

    #[test]
    fn invalid_channels_rejected() {
        assert!(ChannelModel::bec(1.2).is_err());
        assert!(ChannelModel::bsc(0.6).is_err());
        assert!(ChannelModel::z_only(0.5, 0.4).is_err());
        assert!(ChannelModel::bec(f64::NAN).is_err());
    }

    #[test]
    fn combine_examples() {
        assert_eq!(combine_minus(&bec(0.5), &bec(0.5)), bec(0.75));
        assert_eq!(combine_plus(&bec(0.5), &bec(0.5)), bec(0.25));

        let p = 0.11;
        let z = 2.0 * (p * (1.0f64 - p)).sqrt();
        let m = combine_minus(&bsc(p), &bsc(p)).z();
        assert!((m.lo - (2.0 * z * z - z.powi(4)).sqrt()).abs() < 1e-12);
        assert!((m.hi - (2.0 * z - z * z)).abs() < 1e-12);
        assert!(m.lo <= m.hi);

        let a = ChannelModel::z_only(0.2, 0.4).unwrap();
        let b = ChannelModel::z_only(0.5, 0.5).unwrap();
        let zp = combine_plus(&a, &b).z();
        assert!((zp.lo - 0.1).abs() < 1e-15 && (zp.hi - 0.2).abs() < 1e-15);

        // combining with a perfect channel
        assert_eq!(combine_minus(&a, &bec(0.0)).z(), a.z());
        // combining with a useless channel under ⊛ leaves Z unchanged
        assert_eq!(combine_plus(&a, &bec(1.0)).z(), a.z());
    }

    #[test]
    fn bec_capacity_conserved() {
        for &e in &[0.0, 0.1, 0.37, 0.5, 0.93, 1.0] {
            let (m, p) = (combine_minus(&bec(e), &bec(e)), combine_plus(&bec(e), &bec(e)));
            let s = m.z().hi + p.z().hi;
            assert!((s - 2.0 * e).abs() < 1e-15);
        }
    }

    #[test]
    fn capacity_upper_bound_random_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100_000 {
            let ch = if rng.random_bool(0.5) { bec(rng.random()) } else { bsc(rng.random::<f64>() * 0.5) };
            let z = bhattacharyya(&ch).lo;
            assert!(symmetric_capacity(&ch).hi <= 1.0 - z * z, "{ch:?}");
        }
    }

    #[test]
    fn csv_parsing() {
        let text = "# header comment\nbec,0.3\n\nBSC, 0.11\n";
        let chans = read_channel_csv(text.as_bytes()).unwrap();
        assert_eq!(chans, vec![bec(0.3), bsc(0.11)]);
        assert!(read_channel_csv("bsc,0.7\n".as_bytes()).is_err());
        assert!(read_channel_csv("awgn,1.0\n".as_bytes()).is_err());
        assert!(read_channel_csv("bec\n".as_bytes()).is_err());
        let mut buf = Vec::new();
        write_channel_csv(&mut buf, &chans).unwrap();
        assert_eq!(read_channel_csv(buf.as_slice()).unwrap(), chans);
    }

    fn any_channel() -> impl Strategy<Value = ChannelModel> {
        prop_oneof![
            (0.0f64..=1.0).prop_map(|e| ChannelModel::Bec { eps: e }),
            (0.0f64..=0.5).prop_map(|p| ChannelModel::Bsc { p }),
            (0.0f64..=1.0, 0.0f64..=1.0).prop_map(|(a, b)| ChannelModel::z_only(a.min(b), a.max(b)).unwrap()),
        ]
    }

    proptest! {
        #[test]
        fn combining_moves_z_in_the_right_direction(a in any_channel(), b in any_channel()) {
            let p = combine_plus(&a, &b).z();
            let m = combine_minus(&a, &b).z();
            prop_assert!(p.hi <= a.z().hi.min(b.z().hi));
            prop_assert!(m.lo >= a.z().lo.max(b.z().lo) - 1e-15);
            prop_assert!(p.lo <= p.hi && m.lo <= m.hi);
        }

        #[test]
        fn bec_disguised_as_zonly_is_enclosed(e1 in 0.0f64..=1.0, e2 in 0.0f64..=1.0) {
            let (a, b) = (bec(e1), bec(e2));
            let (da, db) = (ChannelModel::z_only(e1, e1).unwrap(), ChannelModel::z_only(e2, e2).unwrap());
            let exact_m = combine_minus(&a, &b).z().hi;
            let exact_p = combine_plus(&a, &b).z().hi;
            prop_assert!(combine_minus(&da, &db).z().contains(exact_m));
            prop_assert!(combine_plus(&da, &db).z().contains(exact_p));
        }
    }
}
