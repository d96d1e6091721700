//! Two-stage code construction.
//!
//! 1. The `N = N1 N2` physical channels are split into `N2` groups of `N1`
//!    channels with nearly equal average capacity.
//! 2. Each group is polarized on its own with quantized skipping.
//! 3. In every group the `M` channels with the smallest Bhattacharyya
//!    parameters below `1/2` are kept (`M` is the minimum count over
//!    groups); the rest are frozen.
//! 4. For each rank `i0 < M`, the `i0`-th kept channel of every group forms
//!    a row of `N2` channels. The row is polarized for `l` levels with the
//!    permutations and skips of the coupled extremal process started from
//!    the row's Bhattacharyya bounds, which certifies the resulting
//!    bit-channels.
//! 5. Positions whose certificate is at most `P_e / N` carry information.
//!
//! Final positions are numbered row by row: position `i0 * N2 + k` is output
//! `k` of row `i0`. The `N2 (N1 - M)` positions that were not kept follow,
//! group by group in increasing stage-1 position, and are always frozen.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{symmetric_capacity, ChannelModel, ZInterval};
use crate::extremal::{compute_constants, run_coupled, ConstantsReport, ExtremalTrace};
use crate::numeric::{fsum, WideFloat};
use crate::polarize::{apply_circuit, run_polarization, CombinePolicy, LayeredCircuit, PolarizationRun};
use crate::quantize::QuantGrid;
use crate::speed::DEFAULT_B;
use crate::{Error, Result};

pub const CODESPEC_VERSION: &str = "nspolar-codespec-1";

/// Partitions `values` into `k` subsets of `m` indices each so that every
/// subset average is at least the global average minus `1/m`.
///
/// Starts from a serpentine assignment of the sorted values and repeatedly
/// swaps the smallest member of the worst subset with the largest member
/// of an above-average subset. Each subset is returned in increasing index
/// order, and subsets are ordered by their smallest index.
pub fn partition_channels(values: &[f64], k: usize, m: usize) -> Result<Vec<Vec<usize>>> {
    if k == 0 || m == 0 || values.len() != k * m {
        return Err(Error::InvalidParameter(format!(
            "cannot split {} values into {k} subsets of {m}",
            values.len()
        )));
    }
    if let Some(&v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::OutOfRange { value: v, expected: "[0, 1]" });
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let mut sets: Vec<Vec<usize>> = vec![Vec::with_capacity(m); k];
    for (r, &idx) in order.iter().enumerate() {
        let round = r / k;
        let pos = r % k;
        let target = if round % 2 == 0 { pos } else { k - 1 - pos };
        sets[target].push(idx);
    }

    let sum = |s: &Vec<usize>| fsum(s.iter().map(|&i| values[i]));
    let global = fsum(values.iter().copied()) / values.len() as f64;
    let goal = global - 1.0 / m as f64;
    let mut sums: Vec<f64> = sets.iter().map(sum).collect();
    let mut rounds = 0usize;
    loop {
        let (worst, &worst_sum) =
            sums.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0))).unwrap();
        if worst_sum / m as f64 >= goal {
            break;
        }
        let (wi, _) = sets[worst]
            .iter()
            .enumerate()
            .min_by(|a, b| values[*a.1].total_cmp(&values[*b.1]))
            .unwrap();
        let mut donor: Option<(usize, usize)> = None;
        for (s, set) in sets.iter().enumerate() {
            if s == worst || sums[s] / (m as f64) <= global {
                continue;
            }
            let (ti, &t) = set.iter().enumerate().max_by(|a, b| values[*a.1].total_cmp(&values[*b.1])).unwrap();
            if donor.map_or(true, |(ds, di)| values[t] > values[sets[ds][di]]) {
                donor = Some((s, ti));
            }
        }
        let Some((ds, di)) = donor else {
            return Err(Error::InvalidParameter("partition exchange found no donor".into()));
        };
        let (lo_idx, hi_idx) = (sets[worst][wi], sets[ds][di]);
        if values[hi_idx] <= values[lo_idx] {
            return Err(Error::InvalidParameter("partition exchange made no progress".into()));
        }
        sets[worst][wi] = hi_idx;
        sets[ds][di] = lo_idx;
        sums[worst] = sum(&sets[worst]);
        sums[ds] = sum(&sets[ds]);
        rounds += 1;
        if rounds > 16 * values.len() * values.len() + 64 {
            return Err(Error::InvalidParameter("partition exchange did not converge".into()));
        }
    }
    for s in &mut sets {
        s.sort_unstable();
    }
    sets.sort_by_key(|s| s[0]);
    Ok(sets)
}

/// Parameters of a construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstructParams {
    /// Target block error probability.
    pub pe: f64,
    pub mu: f64,
    pub b: f64,
    /// Lower bound on the polarization speed (see
    /// [`crate::speed::EtaEstimate::certified_eta`]).
    pub eta: f64,
}

impl ConstructParams {
    pub fn new(pe: f64, mu: f64, eta: f64) -> Self {
        ConstructParams { pe, mu, b: DEFAULT_B, eta }
    }
}

/// A constructed code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeSpec {
    pub version: String,
    pub block_len: usize,
    pub n: u32,
    pub n1: u32,
    pub n2: u32,
    pub l: u32,
    /// `physical_perm[k * N1 + s]` is the physical channel feeding slot `s`
    /// of group `k`.
    pub physical_perm: Vec<usize>,
    pub stage1_circuits: Vec<LayeredCircuit>,
    /// Number of kept channels per group.
    pub m: usize,
    /// Kept stage-1 positions per group, increasing.
    pub selected: Vec<Vec<usize>>,
    /// One circuit of length `N2` per row.
    pub stage2_circuits: Vec<LayeredCircuit>,
    pub frozen: Vec<bool>,
    pub rate: f64,
    pub pe_target: f64,
    pub z_certificates: Vec<ZInterval>,
    pub constants: Option<ConstantsReport>,
    pub report: ConstructionReport,
}

/// Diagnostics recorded alongside a construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ConstructionReport {
    /// Average symmetric capacity of the physical channels (lower bound
    /// for interval channels).
    pub i_bar: f64,
    /// Per-group count of stage-1 bit-channels with `Z < 1/2`.
    pub good_counts: Vec<usize>,
    /// `floor(N1 (Ī - d1 N^(-1/μ)))`, clipped at 0.
    pub m_floor: Option<usize>,
    /// `Ī - d3 N^(-1/μ)`.
    pub rate_guarantee: Option<f64>,
    /// Smallest group-average capacity minus the global average.
    pub partition_slack: f64,
    /// True when the partition used capacity estimates rather than exact
    /// capacities.
    pub partition_heuristic: bool,
    /// Number of skipped butterflies, stage 1 and stage 2.
    pub skipped: [usize; 2],
    pub library_version: String,
}

impl CodeSpec {
    pub fn n1_len(&self) -> usize {
        1 << self.n1
    }

    pub fn n2_len(&self) -> usize {
        1 << self.n2
    }

    pub fn info_len(&self) -> usize {
        self.frozen.iter().filter(|&&f| !f).count()
    }

    pub fn info_positions(&self) -> Vec<usize> {
        (0..self.block_len).filter(|&p| !self.frozen[p]).collect()
    }

    /// Final position of stage-1 position `s` of group `k` when it was not
    /// kept.
    pub(crate) fn unselected_positions(&self, k: usize) -> Vec<usize> {
        let mut keep = vec![false; self.n1_len()];
        for &s in &self.selected[k] {
            keep[s] = true;
        }
        (0..self.n1_len()).filter(|&s| !keep[s]).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidCodeSpec(m));
        if self.version != CODESPEC_VERSION {
            return bad(format!("unknown version {:?}", self.version));
        }
        if self.n > 40 || self.block_len != 1usize << self.n || self.n1 + self.n2 != self.n {
            return bad(format!("inconsistent lengths n={} n1={} n2={}", self.n, self.n1, self.n2));
        }
        if self.l > self.n2 {
            return bad(format!("l = {} exceeds n2 = {}", self.l, self.n2));
        }
        let (n1l, n2l) = (self.n1_len(), self.n2_len());
        let n_len = self.block_len;
        for (name, len) in [
            ("physical_perm", self.physical_perm.len()),
            ("frozen", self.frozen.len()),
            ("z_certificates", self.z_certificates.len()),
        ] {
            if len != n_len {
                return bad(format!("{name} has length {len}, expected {n_len}"));
            }
        }
        let mut seen = vec![false; n_len];
        for &p in &self.physical_perm {
            if p >= n_len || seen[p] {
                return bad("physical_perm is not a permutation".into());
            }
            seen[p] = true;
        }
        if self.stage1_circuits.len() != n2l || self.selected.len() != n2l {
            return bad("need one stage-1 circuit and selection per group".into());
        }
        for c in &self.stage1_circuits {
            if c.n != self.n1 {
                return bad("stage-1 circuit has the wrong length".into());
            }
            c.validate()?;
        }
        if self.m > n1l {
            return bad(format!("m = {} exceeds N1", self.m));
        }
        for sel in &self.selected {
            if sel.len() != self.m || sel.windows(2).any(|w| w[0] >= w[1]) || sel.iter().any(|&s| s >= n1l) {
                return bad("selected positions must be M increasing stage-1 positions".into());
            }
        }
        if self.stage2_circuits.len() != self.m {
            return bad("need one stage-2 circuit per row".into());
        }
        for c in &self.stage2_circuits {
            if c.n != self.n2 || c.depth() > self.l as usize {
                return bad("stage-2 circuit has the wrong shape".into());
            }
            c.validate()?;
        }
        let limit = self.pe_target / n_len as f64;
        for p in 0..n_len {
            if p >= self.m * n2l && !self.frozen[p] {
                return bad(format!("position {p} was not kept but is unfrozen"));
            }
            if !self.frozen[p] && !(self.z_certificates[p].hi <= limit) {
                return bad(format!("position {p} is unfrozen with certificate {}", self.z_certificates[p].hi));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: CodeSpec = serde_json::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Output of one stage-2 row.
#[derive(Debug, Clone)]
pub struct Stage2Row {
    pub circuit: LayeredCircuit,
    pub trace: ExtremalTrace,
    /// Channels at levels `0..=l`.
    pub levels: Vec<Vec<ChannelModel>>,
}

impl Stage2Row {
    /// First `(level, position)` where a bit-channel's Bhattacharyya upper
    /// bound exceeds the extremal value.
    ///
    /// Channel parameters below the normal `f64` range are rounded on a
    /// fixed grid of `2^-1074`; at level `j` the check allows an excess of
    /// `2^(j+1)` such steps.
    pub fn dominance_violation(&self) -> Option<(usize, usize)> {
        for (j, level) in self.levels.iter().enumerate() {
            let allowance = WideFloat::pow2(j as i64 + 1 - 1074);
            for (i, ch) in level.iter().enumerate() {
                let z = WideFloat::from_f64(ch.z_hi());
                if z > self.trace.x[j][i] + allowance {
                    return Some((j, i));
                }
            }
        }
        None
    }
}

/// Polarizes one row of good channels for `l` levels, steered by the
/// coupled extremal process.
pub fn stage2_row(row: &[ChannelModel], l: usize) -> Result<Stage2Row> {
    let x0: Vec<f64> = row.iter().map(|c| c.z_hi()).collect();
    let trace = run_coupled(&x0, l)?;
    let circuit = LayeredCircuit { n: trace.n, layers: trace.layers.clone() };
    let levels = apply_circuit(row, &circuit)?;
    Ok(Stage2Row { circuit, trace, levels })
}

fn average_capacity(chs: &[ChannelModel]) -> f64 {
    fsum(chs.iter().map(|c| symmetric_capacity(c).lo)) / chs.len() as f64
}

/// Capacity used to balance the groups, and whether it is an estimate.
fn balancing_value(ch: &ChannelModel) -> (f64, bool) {
    match ch {
        ChannelModel::ZOnly { z } => ((1.0 - z.hi * z.hi).clamp(0.0, 1.0), true),
        _ => (symmetric_capacity(ch).lo, false),
    }
}

/// Two-stage construction for the channel sequence `chs`.
pub fn construct(chs: &[ChannelModel], params: &ConstructParams) -> Result<CodeSpec> {
    let n_len = chs.len();
    if n_len < 2 || !n_len.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n_len));
    }
    for ch in chs {
        ch.validate()?;
    }
    let n = n_len.trailing_zeros();
    let constants = compute_constants(params.mu, params.pe, params.b, params.eta, n)?;
    let (n1, n2, l) = (constants.n1, constants.n2, constants.l as usize);
    let (n1l, n2l) = (1usize << n1, 1usize << n2);

    let (values, heuristic): (Vec<f64>, Vec<bool>) = chs.iter().map(balancing_value).unzip();
    let groups = partition_channels(&values, n2l, n1l)?;
    let global = fsum(values.iter().copied()) / n_len as f64;
    let partition_slack = groups
        .iter()
        .map(|g| fsum(g.iter().map(|&i| values[i])) / n1l as f64 - global)
        .fold(f64::INFINITY, f64::min);
    let physical_perm: Vec<usize> = groups.iter().flatten().copied().collect();

    let grid = QuantGrid::build(n1l, constants.tau)?;
    let policy = CombinePolicy::Quantized(grid);
    let stage1: Vec<PolarizationRun> = groups
        .par_iter()
        .map(|g| {
            let sub: Vec<ChannelModel> = g.iter().map(|&i| chs[i]).collect();
            run_polarization(&sub, &policy, params.b)
        })
        .collect::<Result<_>>()?;

    let good_counts: Vec<usize> =
        stage1.iter().map(|r| r.channels.iter().filter(|c| c.z_hi() < 0.5).count()).collect();
    let m = good_counts.iter().copied().min().unwrap_or(0);
    let selected: Vec<Vec<usize>> = stage1
        .iter()
        .map(|r| {
            let mut idx: Vec<usize> = (0..n1l).collect();
            idx.sort_by(|&a, &b| r.channels[a].z_hi().total_cmp(&r.channels[b].z_hi()).then(a.cmp(&b)));
            idx.truncate(m);
            idx.sort_unstable();
            idx
        })
        .collect();

    let rows: Vec<Stage2Row> = (0..m)
        .into_par_iter()
        .map(|i0| {
            let row: Vec<ChannelModel> = (0..n2l).map(|k| stage1[k].channels[selected[k][i0]]).collect();
            stage2_row(&row, l)
        })
        .collect::<Result<_>>()?;
    for (i0, row) in rows.iter().enumerate() {
        if let Some((j, i)) = row.dominance_violation() {
            return Err(Error::InvalidCodeSpec(format!(
                "row {i0}: bit-channel {i} at level {j} is not dominated by the extremal process"
            )));
        }
    }

    let mut certs = Vec::with_capacity(n_len);
    for row in &rows {
        certs.extend(row.levels.last().unwrap().iter().map(|c| c.z()));
    }
    for (k, run) in stage1.iter().enumerate() {
        let mut keep = vec![false; n1l];
        for &s in &selected[k] {
            keep[s] = true;
        }
        certs.extend((0..n1l).filter(|&s| !keep[s]).map(|s| run.channels[s].z()));
    }
    let limit = params.pe / n_len as f64;
    let frozen: Vec<bool> = (0..n_len).map(|p| !(p < m * n2l && certs[p].hi <= limit)).collect();
    let info = frozen.iter().filter(|&&f| !f).count();

    let i_bar = average_capacity(chs);
    let floor = constants.stage1_floor(i_bar);
    let report = ConstructionReport {
        i_bar,
        good_counts,
        m_floor: Some((n1l as f64 * floor).floor().max(0.0) as usize),
        rate_guarantee: Some(constants.rate_guarantee(i_bar)),
        partition_slack,
        partition_heuristic: heuristic.iter().any(|&h| h),
        skipped: [
            stage1.iter().map(|r| skipped(&r.circuit)).sum(),
            rows.iter().map(|r| skipped(&r.circuit)).sum(),
        ],
        library_version: crate::VERSION.to_string(),
    };
    let spec = CodeSpec {
        version: CODESPEC_VERSION.to_string(),
        block_len: n_len,
        n,
        n1,
        n2,
        l: l as u32,
        physical_perm,
        stage1_circuits: stage1.into_iter().map(|r| r.circuit).collect(),
        m,
        selected,
        stage2_circuits: rows.into_iter().map(|r| r.circuit).collect(),
        frozen,
        rate: info as f64 / n_len as f64,
        pe_target: params.pe,
        z_certificates: certs,
        constants: Some(constants),
        report,
    };
    spec.validate()?;
    Ok(spec)
}

fn skipped(c: &LayeredCircuit) -> usize {
    c.layers.iter().map(|l| l.active.len() - l.active_count()).sum()
}

/// Single-stage code: one polarization run over the whole block (channels
/// in physical order), information on the positions whose Bhattacharyya
/// upper bound is at most `pe / N`.
pub fn single_stage(chs: &[ChannelModel], policy: &CombinePolicy, b: f64, pe: f64) -> Result<CodeSpec> {
    let n_len = chs.len();
    if n_len < 2 || !n_len.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(n_len));
    }
    if !(pe > 0.0 && pe < 1.0) {
        return Err(Error::OutOfRange { value: pe, expected: "(0, 1)" });
    }
    let n = n_len.trailing_zeros();
    let run = run_polarization(chs, policy, b)?;
    let certs: Vec<ZInterval> = run.channels.iter().map(|c| c.z()).collect();
    let limit = pe / n_len as f64;
    let frozen: Vec<bool> = certs.iter().map(|z| !(z.hi <= limit)).collect();
    let info = frozen.iter().filter(|&&f| !f).count();
    let skipped_count = skipped(&run.circuit);
    let spec = CodeSpec {
        version: CODESPEC_VERSION.to_string(),
        block_len: n_len,
        n,
        n1: n,
        n2: 0,
        l: 0,
        physical_perm: (0..n_len).collect(),
        stage1_circuits: vec![run.circuit],
        m: n_len,
        selected: vec![(0..n_len).collect()],
        stage2_circuits: (0..n_len).map(|_| LayeredCircuit { n: 0, layers: vec![] }).collect(),
        frozen,
        rate: info as f64 / n_len as f64,
        pe_target: pe,
        z_certificates: certs,
        constants: None,
        report: ConstructionReport {
            i_bar: average_capacity(chs),
            good_counts: vec![n_len],
            partition_slack: 0.0,
            skipped: [skipped_count, 0],
            library_version: crate::VERSION.to_string(),
            ..Default::default()
        },
    };
    spec.validate()?;
    Ok(spec)
}

/// Replaces the information set of a code with the `k` positions of
/// smallest certificate (ties by position), ignoring the error target.
/// Useful for fixed-rate experiments; the result no longer satisfies the
/// certificate rule unless the target is raised accordingly.
pub fn with_best_positions(mut spec: CodeSpec, k: usize) -> Result<CodeSpec> {
    let kept = spec.m * spec.n2_len();
    if k > kept {
        return Err(Error::InvalidParameter(format!("only {kept} positions can carry information")));
    }
    let mut idx: Vec<usize> = (0..kept).collect();
    idx.sort_by(|&a, &b| spec.z_certificates[a].hi.total_cmp(&spec.z_certificates[b].hi).then(a.cmp(&b)));
    spec.frozen = vec![true; spec.block_len];
    for &p in &idx[..k] {
        spec.frozen[p] = false;
    }
    let worst = idx[..k].iter().map(|&p| spec.z_certificates[p].hi).fold(0.0, f64::max);
    spec.pe_target = spec.pe_target.max(worst * spec.block_len as f64).min(f64::MAX);
    spec.rate = k as f64 / spec.block_len as f64;
    spec.validate()?;
    Ok(spec)
}
