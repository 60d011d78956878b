//! Scaling sweep: fixed tokens per frame, growing frame count, median wall
//! time per operator. CPU-only, so only the shape of the curves is
//! meaningful, not absolute latency; the CSV header says so via the dtype
//! and repeats columns. Rows whose analytic working set exceeds the memory
//! budget are emitted as SKIPPED without ever allocating: the budget check
//! is computed from the token count up front, never discovered by
//! crashing. Timed points always run sequentially.

use std::fmt::Write as _;
use std::time::Instant;

use crate::bench::kernels::{
    AttentionKernel, BenchScalar, DbmKernel, MambaKernel, ScanKernel, VimKernel,
};
use crate::blocks::dbm::DbmBlock;
use crate::blocks::mamba::MambaBlock;
use crate::blocks::vim::VimBlock;
use crate::error::{Error, Result};
use crate::num::rng::Rng;
use crate::ssm::selective::dt_rank_heuristic;

pub const CSV_HEADER: &str = "operator,frames,tokens_per_frame,tokens,dtype,repeats,wall_ns,bytes_peak,status";

/// Chunk length used by the chunked-scan operator.
pub const SCAN_CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operator {
    SelectiveScan,
    SelectiveScanChunked,
    AttentionNaive,
    MambaBlock,
    VimBlock,
    DbmBlock,
}

impl Operator {
    pub const ALL: [Operator; 6] = [
        Operator::SelectiveScan,
        Operator::SelectiveScanChunked,
        Operator::AttentionNaive,
        Operator::MambaBlock,
        Operator::VimBlock,
        Operator::DbmBlock,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Operator::SelectiveScan => "selective_scan",
            Operator::SelectiveScanChunked => "selective_scan_chunked",
            Operator::AttentionNaive => "attention_naive",
            Operator::MambaBlock => "mamba_block",
            Operator::VimBlock => "vim_block",
            Operator::DbmBlock => "dbm_block",
        }
    }
}

impl std::str::FromStr for Operator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Operator> {
        match s {
            "scan" | "selective_scan" => Ok(Operator::SelectiveScan),
            "scan_chunked" | "chunked" | "selective_scan_chunked" => Ok(Operator::SelectiveScanChunked),
            "attn" | "attention" | "attention_naive" => Ok(Operator::AttentionNaive),
            "mamba" | "mamba_block" => Ok(Operator::MambaBlock),
            "vim" | "vim_block" => Ok(Operator::VimBlock),
            "dbm" | "dbm_block" => Ok(Operator::DbmBlock),
            other => Err(Error::InvalidConfig(format!("unknown operator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn name(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
        }
    }
}

impl std::str::FromStr for Dtype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Dtype> {
        match s {
            "f32" => Ok(Dtype::F32),
            "f64" => Ok(Dtype::F64),
            other => Err(Error::InvalidConfig(format!(
                "unknown dtype `{other}` (expected f32 or f64)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    /// Strictly increasing frame counts.
    pub frames: Vec<usize>,
    pub tokens_per_frame: usize,
    pub ops: Vec<Operator>,
    pub repeats: usize,
    pub warmups: usize,
    pub dtype: Dtype,
    /// Analytic working-set ceiling; points over it are SKIPPED.
    pub budget_bytes: usize,
    pub d_model: usize,
    pub e: usize,
    pub n: usize,
    pub conv_width: usize,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> SweepConfig {
        SweepConfig {
            frames: doubling_frames(4, 512),
            tokens_per_frame: 196,
            ops: vec![Operator::SelectiveScanChunked, Operator::AttentionNaive],
            repeats: 9,
            warmups: 2,
            dtype: Dtype::F32,
            budget_bytes: 2 << 30,
            d_model: 32,
            e: 2,
            n: 16,
            conv_width: 4,
            seed: 0,
        }
    }
}

/// 4..512 -> [4, 8, 16, 32, 64, 128, 256, 512].
pub fn doubling_frames(lo: usize, hi: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut f = lo.max(1);
    while f <= hi {
        out.push(f);
        f *= 2;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowStatus {
    Ok,
    Skipped,
}

impl RowStatus {
    pub fn name(self) -> &'static str {
        match self {
            RowStatus::Ok => "ok",
            RowStatus::Skipped => "SKIPPED",
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchRecord {
    pub operator: Operator,
    pub frames: usize,
    pub tokens_per_frame: usize,
    pub tokens: usize,
    pub dtype: Dtype,
    pub repeats: usize,
    /// Median over `repeats` timed runs; None on SKIPPED rows.
    pub wall_ns: Option<u128>,
    pub bytes_peak: usize,
    pub status: RowStatus,
}

fn median_ns(mut samples: Vec<u128>) -> u128 {
    samples.sort_unstable();
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        (samples[n / 2 - 1] + samples[n / 2]) / 2
    }
}

fn time_runs<F: FnMut()>(mut run: F, warmups: usize, repeats: usize) -> u128 {
    for _ in 0..warmups {
        run();
    }
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        run();
        samples.push(start.elapsed().as_nanos());
    }
    median_ns(samples)
}

fn analytic_bytes<S: BenchScalar>(op: Operator, tokens: usize, cfg: &SweepConfig) -> usize {
    let (d, e, n) = (cfg.d_model, cfg.e, cfg.n);
    let r = dt_rank_heuristic(d);
    let ed = e * d;
    match op {
        // The scan operators run at the inner width; add their input.
        Operator::SelectiveScan | Operator::SelectiveScanChunked => {
            tokens * ed * S::BYTES + ScanKernel::<S>::bytes_peak(tokens, ed, n, r)
        }
        Operator::AttentionNaive => {
            tokens * d * S::BYTES + AttentionKernel::<S>::bytes_peak(tokens, d)
        }
        Operator::MambaBlock => {
            tokens * d * S::BYTES + MambaKernel::<S>::bytes_peak(tokens, d, e, n, r)
        }
        Operator::VimBlock => tokens * d * S::BYTES + VimKernel::<S>::bytes_peak(tokens, d, e, n, r),
        Operator::DbmBlock => tokens * d * S::BYTES + DbmKernel::<S>::bytes_peak(tokens, d, e, n, r),
    }
}

/// Per-point input seed: decorrelates points without depending on sweep
/// order.
fn point_seed(cfg: &SweepConfig, op: Operator, frames: usize) -> u64 {
    let op_ix = Operator::ALL.iter().position(|&o| o == op).unwrap() as u64;
    cfg.seed ^ (op_ix << 32) ^ frames as u64
}

fn time_point<S: BenchScalar>(cfg: &SweepConfig, op: Operator, tokens: usize, seed: u64) -> u128 {
    let (d, e, n, w) = (cfg.d_model, cfg.e, cfg.n, cfg.conv_width);
    let r = dt_rank_heuristic(d);
    let ed = e * d;
    let mut rng = Rng::new(seed);
    // Weight construction reuses the core init chains so the kernels time
    // realistically-scaled parameters.
    match op {
        Operator::SelectiveScan | Operator::SelectiveScanChunked => {
            let p = crate::ssm::selective::SsmParams::init(ed, n, r, &mut rng);
            let k = ScanKernel::<S>::from_params(&p);
            let x: Vec<S> = (0..tokens * ed)
                .map(|_| S::from_f64(rng.uniform(-1.0, 1.0)))
                .collect();
            let chunked = op == Operator::SelectiveScanChunked;
            time_runs(
                || {
                    let y = if chunked {
                        k.run_chunked(std::hint::black_box(&x), tokens, SCAN_CHUNK)
                    } else {
                        k.run(std::hint::black_box(&x), tokens)
                    };
                    std::hint::black_box(y[tokens * ed - 1]);
                },
                cfg.warmups,
                cfg.repeats,
            )
        }
        Operator::AttentionNaive => {
            let bound = 1.0 / (d as f64).sqrt();
            let mats: Vec<crate::num::array::Array> = (0..4)
                .map(|_| {
                    crate::num::array::Array::from_vec_unchecked(
                        vec![d, d],
                        rng.uniform_vec(d * d, -bound, bound),
                    )
                })
                .collect();
            let k = AttentionKernel::<S>::from_weights(&mats[0], &mats[1], &mats[2], &mats[3]);
            let x: Vec<S> = (0..tokens * d)
                .map(|_| S::from_f64(rng.uniform(-1.0, 1.0)))
                .collect();
            time_runs(
                || {
                    let y = k.run(std::hint::black_box(&x), tokens);
                    std::hint::black_box(y[tokens * d - 1]);
                },
                cfg.warmups,
                cfg.repeats,
            )
        }
        Operator::MambaBlock | Operator::VimBlock | Operator::DbmBlock => {
            let x: Vec<S> = {
                let mut seed_rng = Rng::new(seed.wrapping_add(1));
                (0..tokens * d)
                    .map(|_| S::from_f64(seed_rng.uniform(-1.0, 1.0)))
                    .collect()
            };
            let run_block: Box<dyn Fn(&[S]) -> Vec<S>> = match op {
                Operator::MambaBlock => {
                    let k = MambaKernel::<S>::from_block(&MambaBlock::init(d, e, n, w, &mut rng).unwrap());
                    Box::new(move |x| k.run(x, tokens))
                }
                Operator::VimBlock => {
                    let k = VimKernel::<S>::from_block(&VimBlock::init(d, e, n, w, &mut rng).unwrap());
                    Box::new(move |x| k.run(x, tokens))
                }
                _ => {
                    let k = DbmKernel::<S>::from_block(&DbmBlock::init(d, e, n, w, &mut rng).unwrap());
                    Box::new(move |x| k.run(x, tokens))
                }
            };
            time_runs(
                || {
                    let y = run_block(std::hint::black_box(&x));
                    std::hint::black_box(y[tokens * d - 1]);
                },
                cfg.warmups,
                cfg.repeats,
            )
        }
    }
}

fn run_sweep_typed<S: BenchScalar>(cfg: &SweepConfig) -> Result<Vec<BenchRecord>> {
    let mut records = Vec::new();
    for &op in &cfg.ops {
        for &frames in &cfg.frames {
            let tokens = frames * cfg.tokens_per_frame;
            let bytes_peak = analytic_bytes::<S>(op, tokens, cfg);
            let (wall_ns, status) = if bytes_peak > cfg.budget_bytes {
                (None, RowStatus::Skipped)
            } else {
                let ns = time_point::<S>(cfg, op, tokens, point_seed(cfg, op, frames));
                (Some(ns), RowStatus::Ok)
            };
            records.push(BenchRecord {
                operator: op,
                frames,
                tokens_per_frame: cfg.tokens_per_frame,
                tokens,
                dtype: cfg.dtype,
                repeats: cfg.repeats,
                wall_ns,
                bytes_peak,
                status,
            });
        }
    }
    Ok(records)
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<BenchRecord>> {
    if cfg.frames.is_empty() || !cfg.frames.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::InvalidConfig(
            "frame list must be non-empty and strictly increasing".to_string(),
        ));
    }
    if cfg.tokens_per_frame == 0 || cfg.repeats == 0 || cfg.ops.is_empty() {
        return Err(Error::InvalidConfig(
            "tokens_per_frame, repeats, and ops must all be non-empty".to_string(),
        ));
    }
    match cfg.dtype {
        Dtype::F32 => run_sweep_typed::<f32>(cfg),
        Dtype::F64 => run_sweep_typed::<f64>(cfg),
    }
}

pub fn records_to_csv(records: &[BenchRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        let wall = r.wall_ns.map(|n| n.to_string()).unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            r.operator.name(),
            r.frames,
            r.tokens_per_frame,
            r.tokens,
            r.dtype.name(),
            r.repeats,
            wall,
            r.bytes_peak,
            r.status.name()
        )
        .expect("writing to String cannot fail");
    }
    out
}

pub fn records_from_csv(text: &str) -> Result<Vec<BenchRecord>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::InvalidConfig("empty CSV".to_string()))?;
    if header.trim() != CSV_HEADER {
        return Err(Error::InvalidConfig(format!(
            "unexpected CSV header `{header}`"
        )));
    }
    let mut records = Vec::new();
    for (ix, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 9 {
            return Err(Error::InvalidConfig(format!(
                "CSV line {}: expected 9 fields, got {}",
                ix + 2,
                fields.len()
            )));
        }
        let parse_usize = |s: &str, what: &str| -> Result<usize> {
            s.parse()
                .map_err(|_| Error::InvalidConfig(format!("CSV line {}: bad {what} `{s}`", ix + 2)))
        };
        let status = match fields[8] {
            "ok" => RowStatus::Ok,
            "SKIPPED" => RowStatus::Skipped,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "CSV line {}: bad status `{other}`",
                    ix + 2
                )))
            }
        };
        records.push(BenchRecord {
            operator: fields[0].parse()?,
            frames: parse_usize(fields[1], "frames")?,
            tokens_per_frame: parse_usize(fields[2], "tokens_per_frame")?,
            tokens: parse_usize(fields[3], "tokens")?,
            dtype: fields[4].parse()?,
            repeats: parse_usize(fields[5], "repeats")?,
            wall_ns: if fields[6].is_empty() {
                None
            } else {
                Some(fields[6].parse().map_err(|_| {
                    Error::InvalidConfig(format!("CSV line {}: bad wall_ns `{}`", ix + 2, fields[6]))
                })?)
            },
            bytes_peak: parse_usize(fields[7], "bytes_peak")?,
            status,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> SweepConfig {
        SweepConfig {
            frames: vec![1, 2],
            tokens_per_frame: 8,
            ops: vec![Operator::SelectiveScan],
            repeats: 3,
            warmups: 1,
            dtype: Dtype::F64,
            d_model: 4,
            e: 2,
            n: 3,
            ..SweepConfig::default()
        }
    }

    #[test]
    fn minimal_sweep_has_one_row_per_point() {
        let records = run_sweep(&tiny_config()).unwrap();
        assert_eq!(records.len(), 2);
        assert_eq!(records[0].tokens, 8);
        assert_eq!(records[1].tokens, 16);
        for r in &records {
            assert_eq!(r.status, RowStatus::Ok);
            assert!(r.wall_ns.unwrap() > 0);
            assert_eq!(r.tokens, r.frames * r.tokens_per_frame);
        }
    }

    #[test]
    fn over_budget_points_are_skipped_without_running() {
        let cfg = SweepConfig {
            ops: vec![Operator::AttentionNaive],
            frames: vec![1, 64],
            tokens_per_frame: 196,
            budget_bytes: 10 << 20,
            dtype: Dtype::F32,
            repeats: 3,
            warmups: 0,
            ..SweepConfig::default()
        };
        let records = run_sweep(&cfg).unwrap();
        assert_eq!(records[0].status, RowStatus::Ok);
        assert_eq!(records[1].status, RowStatus::Skipped);
        assert!(records[1].wall_ns.is_none());
        assert!(records[1].bytes_peak > cfg.budget_bytes);
    }

    #[test]
    fn csv_round_trips_including_skipped_rows() {
        let cfg = SweepConfig {
            ops: vec![Operator::AttentionNaive],
            frames: vec![1, 64],
            tokens_per_frame: 196,
            budget_bytes: 10 << 20,
            dtype: Dtype::F32,
            repeats: 3,
            warmups: 0,
            ..SweepConfig::default()
        };
        let records = run_sweep(&cfg).unwrap();
        let text = records_to_csv(&records);
        assert!(text.starts_with(CSV_HEADER));
        // SKIPPED rows carry an empty wall_ns field.
        assert!(text.lines().nth(2).unwrap().contains(",,"));
        let back = records_from_csv(&text).unwrap();
        assert_eq!(back.len(), records.len());
        for (a, b) in records.iter().zip(&back) {
            assert_eq!(a.operator, b.operator);
            assert_eq!(a.wall_ns, b.wall_ns);
            assert_eq!(a.bytes_peak, b.bytes_peak);
            assert_eq!(a.status, b.status);
        }
    }

    #[test]
    fn frame_lists_must_increase() {
        let mut cfg = tiny_config();
        cfg.frames = vec![4, 4];
        assert!(run_sweep(&cfg).is_err());
        cfg.frames = vec![];
        assert!(run_sweep(&cfg).is_err());
    }

    #[test]
    fn doubling_range_expansion() {
        assert_eq!(doubling_frames(4, 512), vec![4, 8, 16, 32, 64, 128, 256, 512]);
        assert_eq!(doubling_frames(3, 12), vec![3, 6, 12]);
        assert_eq!(doubling_frames(8, 8), vec![8]);
    }

    #[test]
    fn median_is_order_free() {
        assert_eq!(median_ns(vec![5, 1, 9]), 5);
        assert_eq!(median_ns(vec![4, 2, 8, 6]), 5);
    }

    #[test]
    fn every_operator_runs_at_a_tiny_size() {
        let cfg = SweepConfig {
            frames: vec![2],
            tokens_per_frame: 6,
            ops: Operator::ALL.to_vec(),
            repeats: 1,
            warmups: 0,
            dtype: Dtype::F32,
            d_model: 4,
            e: 2,
            n: 3,
            ..SweepConfig::default()
        };
        let records = run_sweep(&cfg).unwrap();
        assert_eq!(records.len(), 6);
        assert!(records.iter().all(|r| r.status == RowStatus::Ok));
    }
}
