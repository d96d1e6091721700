//! `nspolar` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 validation failure, 3 runtime
//! error. Diagnostics are single lines on standard error.

mod selftest;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nspolar::channels::{load_channel_file, ChannelModel};
use nspolar::codec::{bits_to_hex, encode, hex_to_bits, sc_decode_full, union_bound, BoxplusRule, ReceivedWord};
use nspolar::construct::{construct, CodeSpec, ConstructParams};
use nspolar::extremal::{c_rho, compute_constants};
use nspolar::polarize::{run_polarization, CombinePolicy};
use nspolar::quantize::{QuantGrid, DEFAULT_C, DEFAULT_LAMBDA};
use nspolar::sim::{generate_sequence, run_monte_carlo_with, McOptions, SequenceSpec};
use nspolar::speed::{estimate_eta_with_profile, speed_trace, HConfig, DEFAULT_B, DEFAULT_RESOLUTION};
use serde::Serialize;

/// Default lower bound on the polarization speed used by commands that
/// need one.
const DEFAULT_ETA: f64 = 0.139;

#[derive(Debug, Parser, Serialize)]
#[command(name = "nspolar", version, about = "Polar codes for non-stationary channel sequences")]
struct Cli {
    /// Worker threads (0 = all cores); NSPOLAR_THREADS overrides.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "kebab-case")]
enum Command {
    /// Estimate the polarization speed `eta` from the `h` profile.
    EtaEstimate(EtaArgs),
    /// Energy per level of a quantized polarization run.
    SpeedTrace(SpeedArgs),
    /// Constants of the finite-length guarantee, as JSON.
    Constants(ConstantsArgs),
    /// Two-stage code construction.
    Construct(ConstructArgs),
    /// Encode hex information bits.
    Encode(EncodeArgs),
    /// Successive-cancellation decoding of hard channel outputs.
    Decode(DecodeArgs),
    /// Monte Carlo block error rate.
    Simulate(SimulateArgs),
    /// Run the built-in property checks.
    Selftest,
}

#[derive(Debug, Args, Serialize)]
struct EtaArgs {
    /// One or more values of `b` (comma separated for a sweep).
    #[arg(long, value_delimiter = ',', default_value = "0.72")]
    b: Vec<f64>,
    #[arg(long, default_value_t = DEFAULT_RESOLUTION)]
    resolution: f64,
    #[arg(long, default_value_t = DEFAULT_C)]
    c: f64,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    /// Write the `z,h(z)` profile here (single `b` only).
    #[arg(long)]
    profile: Option<PathBuf>,
    /// Summary destination (default: standard output).
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Where the channel sequence comes from.
#[derive(Debug, Args, Serialize)]
struct ChannelSource {
    /// Channel CSV file (`kind,param` per line).
    #[arg(long, conflicts_with = "sequence")]
    channels: Option<PathBuf>,
    /// Generated sequence as JSON, e.g. `{"kind":"ramp-bec","start":0.3,"end":0.7}`.
    #[arg(long, requires = "n")]
    sequence: Option<String>,
    /// Block exponent for `--sequence`.
    #[arg(long)]
    n: Option<u32>,
}

#[derive(Debug, Args, Serialize)]
struct SpeedArgs {
    #[command(flatten)]
    source: ChannelSource,
    #[arg(long, default_value_t = DEFAULT_B)]
    b: f64,
    #[arg(long, default_value_t = 0.12 / DEFAULT_B)]
    tau: f64,
    /// Target speed; defaults to `tau * b`.
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_ETA)]
    eta: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ConstantsArgs {
    #[arg(long, default_value_t = 10.79)]
    mu: f64,
    #[arg(long, default_value_t = 0.01)]
    pe: f64,
    #[arg(long)]
    n: u32,
    #[arg(long, default_value_t = DEFAULT_B)]
    b: f64,
    #[arg(long, default_value_t = DEFAULT_ETA)]
    eta: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ConstructArgs {
    #[command(flatten)]
    source: ChannelSource,
    #[arg(long, default_value_t = 0.01)]
    pe: f64,
    #[arg(long, default_value_t = 10.79)]
    mu: f64,
    #[arg(long, default_value_t = DEFAULT_B)]
    b: f64,
    #[arg(long, default_value_t = DEFAULT_ETA)]
    eta: f64,
    /// Code specification destination.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct EncodeArgs {
    #[arg(long)]
    code: PathBuf,
    /// Hex file with the information bits, most significant bit first.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Rule {
    Exact,
    MinSum,
}

impl From<Rule> for BoxplusRule {
    fn from(r: Rule) -> Self {
        match r {
            Rule::Exact => BoxplusRule::Exact,
            Rule::MinSum => BoxplusRule::MinSum,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct DecodeArgs {
    #[arg(long)]
    code: PathBuf,
    #[command(flatten)]
    source: ChannelSource,
    /// Hex file with the hard channel outputs.
    #[arg(long)]
    received: PathBuf,
    /// Hex file marking erased positions with 1.
    #[arg(long)]
    erasures: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Rule::Exact)]
    rule: Rule,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    code: PathBuf,
    #[command(flatten)]
    source: ChannelSource,
    #[arg(long, default_value_t = 4000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Rule::Exact)]
    rule: Rule,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure classes mapped to exit codes.
#[derive(Debug)]
enum Failure {
    Validation(String),
    Runtime(String),
}

impl From<nspolar::Error> for Failure {
    fn from(e: nspolar::Error) -> Self {
        match e {
            nspolar::Error::Io(_) => Failure::Runtime(e.to_string()),
            _ => Failure::Validation(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Validation(msg.into())
}

/// Output sink with the run header.
struct Report {
    header: Vec<String>,
}

impl Report {
    fn new(cli: &Cli) -> Self {
        let config = serde_json::to_string(cli).unwrap_or_default();
        Report {
            header: vec![
                format!("# nspolar {}", nspolar::VERSION),
                format!("# config: {config}"),
            ],
        }
    }

    /// CSV text with the header as comment lines.
    fn csv(&self, body: &str) -> String {
        let mut s = self.header.join("\n");
        s.push('\n');
        s.push_str(body);
        s
    }

    fn json<T: Serialize>(&self, cli: &Cli, key: &str, value: &T) -> Result<String, Failure> {
        let mut obj = serde_json::Map::new();
        obj.insert("library_version".into(), nspolar::VERSION.into());
        obj.insert("config".into(), serde_json::to_value(cli).map_err(|e| Failure::Runtime(e.to_string()))?);
        obj.insert(key.into(), serde_json::to_value(value).map_err(|e| Failure::Runtime(e.to_string()))?);
        let mut s = serde_json::to_string_pretty(&obj).map_err(|e| Failure::Runtime(e.to_string()))?;
        s.push('\n');
        Ok(s)
    }
}

fn emit(out: &Option<PathBuf>, text: &str) -> Outcome {
    match out {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn load_channels(src: &ChannelSource) -> Result<Vec<ChannelModel>, Failure> {
    match (&src.channels, &src.sequence) {
        (Some(p), _) => Ok(load_channel_file(p)?),
        (None, Some(json)) => {
            let spec: SequenceSpec =
                serde_json::from_str(json).map_err(|e| invalid(format!("bad --sequence: {e}")))?;
            let n = src.n.ok_or_else(|| invalid("--sequence needs --n"))?;
            if n > 30 {
                return Err(invalid(format!("--n {n} is too large")));
            }
            Ok(generate_sequence(&spec, 1usize << n)?)
        }
        (None, None) => Err(invalid("one of --channels or --sequence is required")),
    }
}

fn read_hex(path: &Path, len: usize) -> Result<Vec<u8>, Failure> {
    let text = fs::read_to_string(path)?;
    let digits: String = text.split_whitespace().collect();
    Ok(hex_to_bits(&digits, len)?)
}

fn load_code(path: &Path) -> Result<CodeSpec, Failure> {
    Ok(CodeSpec::load(path)?)
}

fn eta_estimate(a: &EtaArgs, rep: &Report) -> Outcome {
    if a.b.is_empty() {
        return Err(invalid("--b needs at least one value"));
    }
    if a.profile.is_some() && a.b.len() > 1 {
        return Err(invalid("--profile needs a single --b value"));
    }
    let cfg = HConfig { c: a.c, lambda: a.lambda, ..HConfig::default() };
    let mut summary = String::from("b,eta,sup_z\n");
    for &b in &a.b {
        let (est, profile) = estimate_eta_with_profile(b, a.resolution, &cfg)?;
        summary.push_str(&format!("{b},{},{}\n", est.eta, est.argmax_z));
        if let Some(p) = &a.profile {
            let mut body = String::from("z,h(z)\n");
            for (z, h) in profile {
                body.push_str(&format!("{z},{h}\n"));
            }
            fs::write(p, rep.csv(&body))?;
        }
    }
    emit(&a.out, &rep.csv(&summary))
}

fn speed(a: &SpeedArgs, rep: &Report) -> Outcome {
    let chs = load_channels(&a.source)?;
    let grid = QuantGrid::build(chs.len(), a.tau)?;
    let run = run_polarization(&chs, &CombinePolicy::Quantized(grid), a.b)?;
    let energies = run.energy_hi();
    let trace = speed_trace(&energies)?;
    let rho = a.rho.unwrap_or(a.tau * a.b);
    let cr = c_rho(rho, a.eta, a.tau)?;
    let n = (energies.len() - 1) as f64;
    let satisfied = trace.eta_bar > rho - cr.value / n;
    let mut body = String::from("level,E,eta_level\n");
    for (j, e) in energies.iter().enumerate() {
        let lvl = if j == 0 { String::new() } else { trace.eta_levels[j - 1].to_string() };
        body.push_str(&format!("{j},{e},{lvl}\n"));
    }
    body.push_str("eta_bar,rho,c_rho,bound_satisfied\n");
    body.push_str(&format!("{},{rho},{},{satisfied}\n", trace.eta_bar, cr.value));
    emit(&a.out, &rep.csv(&body))
}

fn constants(a: &ConstantsArgs, cli: &Cli, rep: &Report) -> Outcome {
    let r = compute_constants(a.mu, a.pe, a.b, a.eta, a.n)?;
    emit(&a.out, &rep.json(cli, "constants", &r)?)
}

fn construct_cmd(a: &ConstructArgs, cli: &Cli, rep: &Report) -> Outcome {
    let chs = load_channels(&a.source)?;
    let params = ConstructParams { pe: a.pe, mu: a.mu, b: a.b, eta: a.eta };
    let spec = construct(&chs, &params)?;
    let mut v = serde_json::to_value(&spec).map_err(|e| Failure::Runtime(e.to_string()))?;
    if let serde_json::Value::Object(obj) = &mut v {
        obj.insert("run_config".into(), serde_json::to_value(cli).map_err(|e| Failure::Runtime(e.to_string()))?);
    }
    let text = serde_json::to_string(&v).map_err(|e| Failure::Runtime(e.to_string()))?;
    fs::write(&a.out, text)?;
    let body = format!(
        "n,n1,n2,l,m,info_len,rate,union_bound,rate_guarantee\n{},{},{},{},{},{},{},{},{}\n",
        spec.n,
        spec.n1,
        spec.n2,
        spec.l,
        spec.m,
        spec.info_len(),
        spec.rate,
        union_bound(&spec),
        spec.report.rate_guarantee.map(|g| format!("{g:e}")).unwrap_or_default()
    );
    emit(&None, &rep.csv(&body))?;
    Ok(())
}

fn encode_cmd(a: &EncodeArgs) -> Outcome {
    let spec = load_code(&a.code)?;
    let info = read_hex(&a.input, spec.info_len())?;
    let x = encode(&spec, &info)?;
    emit(&a.out, &format!("{}\n", bits_to_hex(&x)))
}

fn decode_cmd(a: &DecodeArgs) -> Outcome {
    let spec = load_code(&a.code)?;
    let chs = load_channels(&a.source)?;
    let bits = read_hex(&a.received, spec.block_len)?;
    let erased = match &a.erasures {
        Some(p) => read_hex(p, spec.block_len)?.into_iter().map(|b| b == 1).collect(),
        None => vec![false; spec.block_len],
    };
    let y = ReceivedWord::from_observation(&chs, &bits, &erased)?;
    let d = sc_decode_full(&spec, &y, a.rule.into())?;
    let info: Vec<u8> = spec.info_positions().into_iter().map(|p| d.u[p]).collect();
    emit(&a.out, &format!("{}\n", bits_to_hex(&info)))
}

fn simulate(a: &SimulateArgs, rep: &Report, parallel: bool) -> Outcome {
    let spec = load_code(&a.code)?;
    let chs = load_channels(&a.source)?;
    let opts = McOptions { rule: a.rule.into(), parallel };
    let r = run_monte_carlo_with(&spec, &chs, a.trials, a.seed, opts)?;
    let body = format!(
        "trials,errors,fer,ci_lo,ci_hi,rate,union_bound\n{},{},{},{},{},{},{}\n",
        r.trials, r.errors, r.fer, r.ci_lo, r.ci_hi, r.rate, r.union_bound
    );
    emit(&a.out, &rep.csv(&body))
}

fn thread_count(flag: usize) -> Result<usize, Failure> {
    match std::env::var("NSPOLAR_THREADS") {
        Ok(v) if !v.trim().is_empty() => {
            v.trim().parse().map_err(|_| invalid(format!("NSPOLAR_THREADS={v:?} is not a thread count")))
        }
        _ => Ok(flag),
    }
}

fn run(cli: &Cli) -> Outcome {
    let threads = thread_count(cli.threads)?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    let rep = Report::new(cli);
    match &cli.command {
        Command::EtaEstimate(a) => eta_estimate(a, &rep),
        Command::SpeedTrace(a) => speed(a, &rep),
        Command::Constants(a) => constants(a, cli, &rep),
        Command::Construct(a) => construct_cmd(a, cli, &rep),
        Command::Encode(a) => encode_cmd(a),
        Command::Decode(a) => decode_cmd(a),
        Command::Simulate(a) => simulate(a, &rep, threads != 1),
        Command::Selftest => {
            if selftest::run() {
                Ok(())
            } else {
                Err(invalid("selftest failed"))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("nspolar: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("nspolar: {m}");
            ExitCode::from(3)
        }
    }
}
