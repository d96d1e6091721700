//! Channel-sequence generation and Monte Carlo simulation.
//!
//! Every trial draws its randomness from its own ChaCha stream, keyed by
//! the run seed and the trial index, so results do not depend on how trials
//! are scheduled across threads.

use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{load_channel_file, ChannelModel};
use crate::codec::{encode, sc_decode_with, union_bound, BoxplusRule, ReceivedWord};
use crate::construct::CodeSpec;
use crate::{Error, Result};

/// Family of channel sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SequenceKind {
    /// Independent erasure probabilities drawn uniformly from `[lo, hi]`.
    IidUniformBec { lo: f64, hi: f64 },
    /// Erasure probabilities interpolated linearly from `start` to `end`,
    /// both endpoints included.
    RampBec { start: f64, end: f64 },
    /// Equal-length consecutive blocks of erasure channels, one erasure
    /// probability per block. The block count must divide `N`.
    Blockwise { eps: Vec<f64> },
    /// Channel CSV file.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    #[serde(flatten)]
    pub kind: SequenceKind,
    #[serde(default)]
    pub seed: u64,
}

impl SequenceSpec {
    pub fn ramp_bec(start: f64, end: f64) -> Self {
        SequenceSpec { kind: SequenceKind::RampBec { start, end }, seed: 0 }
    }

    pub fn iid_uniform_bec(lo: f64, hi: f64, seed: u64) -> Self {
        SequenceSpec { kind: SequenceKind::IidUniformBec { lo, hi }, seed }
    }
}

fn unit(v: f64, what: &str) -> Result<f64> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(Error::InvalidParameter(format!("{what} = {v} not in [0, 1]")))
    }
}

pub fn generate_sequence(spec: &SequenceSpec, n_len: usize) -> Result<Vec<ChannelModel>> {
    if n_len == 0 || !n_len.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n_len));
    }
    match &spec.kind {
        SequenceKind::IidUniformBec { lo, hi } => {
            let (lo, hi) = (unit(*lo, "lo")?, unit(*hi, "hi")?);
            if lo > hi {
                return Err(Error::InvalidParameter(format!("lo = {lo} exceeds hi = {hi}")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            (0..n_len).map(|_| ChannelModel::bec(lo + (hi - lo) * rng.random::<f64>())).collect()
        }
        SequenceKind::RampBec { start, end } => {
            let (a, b) = (unit(*start, "start")?, unit(*end, "end")?);
            let den = (n_len.max(2) - 1) as f64;
            (0..n_len).map(|i| ChannelModel::bec((a + (b - a) * i as f64 / den).clamp(0.0, 1.0))).collect()
        }
        SequenceKind::Blockwise { eps } => {
            if eps.is_empty() || n_len % eps.len() != 0 {
                return Err(Error::InvalidParameter(format!("{} blocks do not divide {n_len}", eps.len())));
            }
            let per = n_len / eps.len();
            (0..n_len).map(|i| ChannelModel::bec(unit(eps[i / per], "eps")?)).collect()
        }
        SequenceKind::File { path } => {
            let chs = load_channel_file(path)?;
            if chs.len() != n_len {
                return Err(Error::LengthMismatch { expected: n_len, actual: chs.len() });
            }
            Ok(chs)
        }
    }
}

/// Monte Carlo summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub trials: u64,
    pub errors: u64,
    pub bit_errors: u64,
    pub fer: f64,
    pub ber: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub rate: f64,
    pub union_bound: f64,
    pub rule: BoxplusRule,
}

/// Wilson score interval at 95% confidence.
pub fn wilson_interval(errors: u64, trials: u64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054;
    let n = trials as f64;
    let p = errors as f64 / n;
    let den = 1.0 + z * z / n;
    let center = (p + z * z / (2.0 * n)) / den;
    let half = z * (p * (1.0 - p) / n + z * z / (4.0 * n * n)).sqrt() / den;
    let lo = if errors == 0 { 0.0 } else { (center - half).max(0.0) };
    let hi = if errors == trials { 1.0 } else { (center + half).min(1.0) };
    (lo, hi)
}

/// RNG of one trial.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// One simulated transmission.
#[derive(Debug, Clone)]
pub struct Trial {
    pub info: Vec<u8>,
    pub codeword: Vec<u8>,
    pub received: ReceivedWord,
}

/// Passes `codeword` through the channels using `rng`.
pub fn transmit(chans: &[ChannelModel], codeword: &[u8], rng: &mut impl Rng) -> Result<ReceivedWord> {
    if chans.len() != codeword.len() {
        return Err(Error::LengthMismatch { expected: chans.len(), actual: codeword.len() });
    }
    let mut llr = Vec::with_capacity(chans.len());
    for (ch, &x) in chans.iter().zip(codeword) {
        let v = match *ch {
            ChannelModel::Bec { eps } => {
                let erased = rng.random::<f64>() < eps;
                crate::codec::channel_llr(ch, x, erased)?
            }
            ChannelModel::Bsc { p } => {
                let flip = rng.random::<f64>() < p;
                crate::codec::channel_llr(ch, x ^ u8::from(flip), false)?
            }
            ChannelModel::ZOnly { .. } => {
                return Err(Error::InvalidChannel("channels known only by Z bounds cannot be simulated".into()))
            }
        };
        llr.push(v);
    }
    ReceivedWord::new(llr)
}

/// Draws the information bits and channel outputs of trial `trial`.
pub fn sample_trial(spec: &CodeSpec, chans: &[ChannelModel], seed: u64, trial: u64) -> Result<Trial> {
    let mut rng = trial_rng(seed, trial);
    let info: Vec<u8> = (0..spec.info_len()).map(|_| rng.random_range(0..2u8)).collect();
    let codeword = encode(spec, &info)?;
    let received = transmit(chans, &codeword, &mut rng)?;
    Ok(Trial { info, codeword, received })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct McOptions {
    pub rule: BoxplusRule,
    pub parallel: bool,
}

impl Default for McOptions {
    fn default() -> Self {
        McOptions { rule: BoxplusRule::Exact, parallel: true }
    }
}

pub fn run_monte_carlo(spec: &CodeSpec, chans: &[ChannelModel], trials: u64, seed: u64) -> Result<SimResult> {
    run_monte_carlo_with(spec, chans, trials, seed, McOptions::default())
}

pub fn run_monte_carlo_with(
    spec: &CodeSpec,
    chans: &[ChannelModel],
    trials: u64,
    seed: u64,
    opts: McOptions,
) -> Result<SimResult> {
    if chans.len() != spec.block_len {
        return Err(Error::LengthMismatch { expected: spec.block_len, actual: chans.len() });
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("at least one trial is required".into()));
    }
    if chans.iter().any(|c| !c.is_exact()) {
        return Err(Error::InvalidChannel("channels known only by Z bounds cannot be simulated".into()));
    }
    let one = |t: u64| -> Result<(u64, u64)> {
        let tr = sample_trial(spec, chans, seed, t)?;
        let est = sc_decode_with(spec, &tr.received, opts.rule)?;
        let wrong = est.iter().zip(&tr.info).filter(|(a, b)| a != b).count() as u64;
        Ok((u64::from(wrong > 0), wrong))
    };
    let add = |a: (u64, u64), b: (u64, u64)| (a.0 + b.0, a.1 + b.1);
    let (errors, bit_errors) = if opts.parallel {
        (0..trials).into_par_iter().map(one).try_reduce(|| (0, 0), |a, b| Ok(add(a, b)))?
    } else {
        (0..trials).map(one).try_fold((0, 0), |a, r| r.map(|b| add(a, b)))?
    };
    let (ci_lo, ci_hi) = wilson_interval(errors, trials);
    let info = spec.info_len() as f64;
    Ok(SimResult {
        trials,
        errors,
        bit_errors,
        fer: errors as f64 / trials as f64,
        ber: if info > 0.0 { bit_errors as f64 / (trials as f64 * info) } else { 0.0 },
        ci_lo,
        ci_hi,
        rate: spec.rate,
        union_bound: union_bound(spec),
        rule: opts.rule,
    })
}
