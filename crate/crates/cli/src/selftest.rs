//! Quick property checks run by `nspolar selftest`.

use nspolar::channels::ChannelModel;
use nspolar::codec::{encode, sc_decode, ReceivedWord};
use nspolar::construct::{construct, partition_channels, stage2_row, with_best_positions, ConstructParams};
use nspolar::extremal::run_coupled;
use nspolar::numeric::fsum;
use nspolar::polarize::{run_polarization, CombinePolicy};
use nspolar::quantize::QuantGrid;
use nspolar::sim::{generate_sequence, run_monte_carlo_with, sample_trial, McOptions, SequenceSpec};
use nspolar::speed::{estimate_eta, DEFAULT_B};

type Check = Result<(), String>;

fn iid(lo: f64, hi: f64, seed: u64, n_len: usize) -> Result<Vec<ChannelModel>, String> {
    generate_sequence(&SequenceSpec::iid_uniform_bec(lo, hi, seed), n_len).map_err(|e| e.to_string())
}

fn eta_band() -> Check {
    let est = estimate_eta(DEFAULT_B, 1e-4).map_err(|e| e.to_string())?;
    if (0.138..=0.140).contains(&est.eta) {
        Ok(())
    } else {
        Err(format!("eta = {}", est.eta))
    }
}

fn classical_construction() -> Check {
    let n = 10u32;
    let chs = vec![ChannelModel::bec(0.5).map_err(|e| e.to_string())?; 1 << n];
    let run = run_polarization(&chs, &CombinePolicy::Always, DEFAULT_B).map_err(|e| e.to_string())?;
    for (p, ch) in run.channels.iter().enumerate() {
        let mut z = 0.5f64;
        for s in (0..n).rev() {
            z = if (p >> s) & 1 == 0 { 2.0 * z - z * z } else { z * z };
        }
        if ch.z_hi() != z {
            return Err(format!("position {p}: {} != {z}", ch.z_hi()));
        }
    }
    Ok(())
}

fn energy_monotone() -> Check {
    let grid = QuantGrid::build(1 << 10, 0.12 / DEFAULT_B).map_err(|e| e.to_string())?;
    let policy = CombinePolicy::Quantized(grid);
    for seed in 0..20 {
        let chs = iid(0.01, 0.99, seed, 1 << 10)?;
        let e = run_polarization(&chs, &policy, DEFAULT_B).map_err(|e| e.to_string())?.energy_hi();
        if e.windows(2).any(|w| w[1] > w[0]) {
            return Err(format!("seed {seed}: energy rises"));
        }
    }
    Ok(())
}

fn coupled_process() -> Check {
    for seed in 0..10 {
        let x0: Vec<f64> = iid(0.0, 0.49, seed, 1 << 10)?.iter().map(|c| c.z_hi()).collect();
        let tr = run_coupled(&x0, 10).map_err(|e| e.to_string())?;
        let bound = 1024.0 - 4.0 * fsum(x0.iter().map(|x| x * (1.0 - x)));
        for j in 0..=10 {
            let total: u128 = tr.a[j].iter().sum();
            if total > 3u128.pow(j as u32) || (tr.small_count(j) as f64) < bound {
                return Err(format!("seed {seed}, level {j}"));
            }
        }
    }
    Ok(())
}

fn dominance() -> Check {
    for seed in 0..20 {
        let row = iid(0.0, 0.45, seed, 64)?;
        let r = stage2_row(&row, 6).map_err(|e| e.to_string())?;
        if let Some((j, i)) = r.dominance_violation() {
            return Err(format!("seed {seed}: level {j}, position {i}"));
        }
    }
    Ok(())
}

fn partition() -> Check {
    for seed in 0..200u64 {
        let k = 1 + (seed as usize % 16);
        let m = 1 + (seed as usize / 16 % 13);
        let v: Vec<f64> = iid(0.0, 1.0, seed, (k * m).next_power_of_two())?.iter().take(k * m).map(|c| c.z_hi()).collect();
        let sets = partition_channels(&v, k, m).map_err(|e| e.to_string())?;
        let global = fsum(v.iter().copied()) / v.len() as f64;
        for s in &sets {
            let avg = fsum(s.iter().map(|&i| v[i])) / m as f64;
            if avg < global - 1.0 / m as f64 - 1e-12 {
                return Err(format!("seed {seed}: subset average {avg} < {global} - 1/{m}"));
            }
        }
    }
    Ok(())
}

fn codec() -> Check {
    let chs = generate_sequence(&SequenceSpec::ramp_bec(0.3, 0.7), 1 << 10).map_err(|e| e.to_string())?;
    let spec = construct(&chs, &ConstructParams::new(0.1, 10.79, 0.139)).map_err(|e| e.to_string())?;
    let code = with_best_positions(spec, 100).map_err(|e| e.to_string())?;
    for t in 0..20 {
        let a = sample_trial(&code, &chs, 1, t).map_err(|e| e.to_string())?;
        let b = sample_trial(&code, &chs, 2, t).map_err(|e| e.to_string())?;
        let sum: Vec<u8> = a.info.iter().zip(&b.info).map(|(x, y)| x ^ y).collect();
        let xs = encode(&code, &sum).map_err(|e| e.to_string())?;
        if xs.iter().zip(a.codeword.iter().zip(&b.codeword)).any(|(s, (x, y))| *s != x ^ y) {
            return Err(format!("trial {t}: encoder is not linear"));
        }
        let llr = a.codeword.iter().map(|&x| if x == 0 { f64::INFINITY } else { f64::NEG_INFINITY }).collect();
        let y = ReceivedWord::new(llr).map_err(|e| e.to_string())?;
        if sc_decode(&code, &y).map_err(|e| e.to_string())? != a.info {
            return Err(format!("trial {t}: noiseless decoding failed"));
        }
    }
    let par = run_monte_carlo_with(&code, &chs, 200, 3, McOptions::default()).map_err(|e| e.to_string())?;
    let ser = run_monte_carlo_with(&code, &chs, 200, 3, McOptions { parallel: false, ..Default::default() })
        .map_err(|e| e.to_string())?;
    if par != ser {
        return Err("parallel and serial simulations differ".into());
    }
    Ok(())
}

/// Runs every check, printing one line each; true when all pass.
pub fn run() -> bool {
    let checks: [(&str, fn() -> Check); 7] = [
        ("eta estimate", eta_band),
        ("classical construction", classical_construction),
        ("energy monotone", energy_monotone),
        ("coupled extremal process", coupled_process),
        ("stage-2 dominance", dominance),
        ("balanced partition", partition),
        ("encoder and decoder", codec),
    ];
    let mut ok = true;
    for (name, f) in checks {
        match f() {
            Ok(()) => println!("selftest {name}: PASS"),
            Err(e) => {
                println!("selftest {name}: FAIL {e}");
                ok = false;
            }
        }
    }
    ok
}
