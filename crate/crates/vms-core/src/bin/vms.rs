//! Command-line harness over the library: scaling sweeps with analytic
//! memory gating, log-log slope fits, parameter audits, golden-vector
//! management, and the toy training demo. Exit codes: 0 success, 2
//! validation error, 3 numeric-check failure.

use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use vms_core::bench::{
    default_audit_configs, default_budget_widths, doubling_frames, fit_slopes, golden_generate,
    golden_verify, loss_csv, param_audit, records_from_csv, records_to_csv, render_audit,
    render_fits, render_report, run_sweep, toy_train, Dtype, Operator, SweepConfig, TrainConfig,
};
use vms_core::blocks::{BlockConfig, BlockKind};
use vms_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "vms",
    version,
    about = "State-space sequence blocks: scaling benchmarks, parameter audits, golden vectors"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Wall-time measurement tools.
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Parameter-count audit of every block kind against the
    /// single-direction baseline, plus width-budget checks.
    Audit(AuditArgs),
    /// Full-batch gradient-descent demo on a smoothing task.
    Train(TrainArgs),
    /// Golden regression vectors.
    #[command(subcommand)]
    Golden(GoldenCmd),
}

#[derive(Subcommand)]
enum BenchCmd {
    /// Time operators over growing frame counts and emit CSV.
    Sweep(SweepArgs),
    /// Fit log-log scaling slopes to a sweep CSV.
    Fit(FitArgs),
}

/// Frame counts: `4..512` doubles from 4 to 512, `4,6,9` is an explicit
/// list, `64` a single point.
#[derive(Debug, Clone)]
struct FramesSpec(Vec<usize>);

impl FromStr for FramesSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<FramesSpec, String> {
        let parse_one = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| format!("`{t}` is not a frame count"))
        };
        if let Some((lo, hi)) = s.split_once("..") {
            let (lo, hi) = (parse_one(lo)?, parse_one(hi)?);
            if lo == 0 || hi < lo {
                return Err(format!("`{s}` is not a valid doubling range"));
            }
            return Ok(FramesSpec(doubling_frames(lo, hi)));
        }
        s.split(',').map(parse_one).collect::<std::result::Result<Vec<_>, _>>().map(FramesSpec)
    }
}

fn parse_operator(s: &str) -> std::result::Result<Operator, String> {
    Operator::from_str(s).map_err(|e| e.to_string())
}

fn parse_dtype(s: &str) -> std::result::Result<Dtype, String> {
    Dtype::from_str(s).map_err(|e| e.to_string())
}

fn parse_block_kind(s: &str) -> std::result::Result<BlockKind, String> {
    BlockKind::from_str(s).map_err(|e| e.to_string())
}

#[derive(Args)]
struct SweepArgs {
    /// Frame counts: `lo..hi` (doubling), comma list, or one value.
    #[arg(long, default_value = "4..512")]
    frames: FramesSpec,
    #[arg(long, default_value_t = 196)]
    tokens_per_frame: usize,
    /// Operators to time (scan, scan_chunked, attn, mamba, vim, dbm).
    #[arg(long, value_delimiter = ',', value_parser = parse_operator,
          default_value = "scan_chunked,attn")]
    ops: Vec<Operator>,
    #[arg(long, default_value_t = 9)]
    repeats: usize,
    #[arg(long, default_value_t = 2)]
    warmups: usize,
    #[arg(long, value_parser = parse_dtype, default_value = "f32")]
    dtype: Dtype,
    /// Analytic working-set ceiling in bytes; larger points are SKIPPED.
    #[arg(long, default_value_t = 2 << 30)]
    budget_bytes: usize,
    #[arg(long, default_value_t = 32)]
    d_model: usize,
    /// Expansion factor.
    #[arg(long, default_value_t = 2)]
    e: usize,
    /// State dimension.
    #[arg(long, default_value_t = 16)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    conv_width: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FitArgs {
    /// Sweep CSV to read.
    #[arg(long = "in")]
    input: PathBuf,
}

#[derive(Args)]
struct AuditArgs {
    /// JSON array of block configs; defaults to the full built-in grid.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Channel widths for the E=1 budget comparison.
    #[arg(long, value_delimiter = ',')]
    budget_widths: Option<Vec<usize>>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, value_parser = parse_block_kind, default_value = "dbm")]
    block: BlockKind,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    /// Sequence length of the one training batch.
    #[arg(long, default_value_t = 32)]
    m: usize,
    #[arg(long, default_value_t = 8)]
    d: usize,
    #[arg(long, default_value_t = 2)]
    e: usize,
    #[arg(long, default_value_t = 16)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    conv_width: usize,
    #[arg(long, default_value_t = 2.0)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    /// Trailing-average window of the target.
    #[arg(long, default_value_t = 9)]
    window: usize,
    /// Write the loss curve CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum GoldenCmd {
    /// Write the full vector set (bit-reproducible).
    Generate {
        #[arg(long)]
        dir: PathBuf,
    },
    /// Recompute every vector and compare at the stored tolerance.
    Verify {
        #[arg(long)]
        dir: PathBuf,
    },
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_sweep(args: &SweepArgs) -> Result<()> {
    let cfg = SweepConfig {
        frames: args.frames.0.clone(),
        tokens_per_frame: args.tokens_per_frame,
        ops: args.ops.clone(),
        repeats: args.repeats,
        warmups: args.warmups,
        dtype: args.dtype,
        budget_bytes: args.budget_bytes,
        d_model: args.d_model,
        e: args.e,
        n: args.n,
        conv_width: args.conv_width,
        seed: args.seed,
    };
    eprintln!(
        "timing {} operators over frames {:?} ({} tokens/frame, {}); \
         CPU scaling shape only, absolute latency is machine-specific",
        cfg.ops.len(),
        cfg.frames,
        cfg.tokens_per_frame,
        cfg.dtype.name(),
    );
    let records = run_sweep(&cfg)?;
    emit(&records_to_csv(&records), args.out.as_ref())?;
    if let Some(path) = &args.out {
        eprintln!("wrote {} rows to {}", records.len(), path.display());
    }
    Ok(())
}

fn cmd_fit(args: &FitArgs) -> Result<()> {
    let text = std::fs::read_to_string(&args.input)?;
    let fits = fit_slopes(&records_from_csv(&text)?)?;
    print!("{}", render_fits(&fits));
    Ok(())
}

fn cmd_audit(args: &AuditArgs) -> Result<()> {
    let configs = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str::<Vec<BlockConfig>>(&text)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?
        }
        None => default_audit_configs(),
    };
    let widths = args.budget_widths.clone().unwrap_or_else(default_budget_widths);
    let report = param_audit(&configs, &widths)?;
    print!("{}", render_audit(&report));
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg = TrainConfig {
        kind: args.block,
        seed: args.seed,
        steps: args.steps,
        m: args.m,
        d: args.d,
        e: args.e,
        n: args.n,
        conv_width: args.conv_width,
        lr: args.lr,
        momentum: args.momentum,
        window: args.window,
    };
    let result = toy_train(&cfg)?;
    emit(&loss_csv(&result), args.out.as_ref())?;
    eprintln!(
        "{}: initial loss {:.6}, final loss {:.6} after {} steps ({:.1}x drop)",
        args.block.name(),
        result.initial(),
        result.final_loss(),
        args.steps,
        result.initial() / result.final_loss(),
    );
    Ok(())
}

fn cmd_golden(cmd: &GoldenCmd) -> Result<()> {
    match cmd {
        GoldenCmd::Generate { dir } => {
            golden_generate(dir)?;
            eprintln!("wrote golden vectors to {}", dir.display());
        }
        GoldenCmd::Verify { dir } => {
            let report = golden_verify(dir)?;
            print!("{}", render_report(&report));
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.cmd {
        Cmd::Bench(BenchCmd::Sweep(args)) => cmd_sweep(args),
        Cmd::Bench(BenchCmd::Fit(args)) => cmd_fit(args),
        Cmd::Audit(args) => cmd_audit(args),
        Cmd::Train(args) => cmd_train(args),
        Cmd::Golden(cmd) => cmd_golden(cmd),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
