//! Golden regression vectors: deterministic input/weight/output triples for
//! every numeric surface, stored as container files plus a JSON manifest.
//!
//! `golden_generate` is bit-reproducible: fixed seeds, fixed tensor order,
//! and the container format moves raw `f64` bit images. `golden_verify`
//! checks two independent layers. A per-file content hash recorded in the
//! manifest pins the stored bytes exactly; recomputation within
//! [`TOLERANCE`] alone would miss a flipped low-order mantissa bit, whose
//! relative effect sits below any usable tolerance. The recompute layer then
//! rebuilds each operator from the stored weights and requires every output
//! to agree within [`TOLERANCE`], catching semantic regressions the hash
//! cannot see. Any unreadable, missing, or mismatching file or tensor
//! surfaces as [`Error::GoldenMismatch`] naming the offender, so a single
//! flipped byte anywhere in the directory is both detected and attributed.
//!
//! Verification fans groups out over worker threads; the `VMS_THREADS`
//! environment variable caps the worker count (default: available
//! parallelism). For the generic-scalar operators the verifier also reruns
//! the `f32` kernels against the stored `f64` outputs and reports the drift
//! as information, not as a gate.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::bench::attention::attention_naive;
use crate::bench::kernels::{AttentionKernel, DbmKernel, MambaKernel, ScanKernel, VimKernel};
use crate::blocks::{build_block, Adapter, AdapterStyle, Block, BlockConfig, BlockKind, VimBlock};
use crate::error::{Error, Result};
use crate::layout::{
    arrange_multimodal, extract_video, flatten_spacetime, pool_cls, ArrangementKind,
    ModalityEmbeddings, VideoTokens,
};
use crate::num::array::Array;
use crate::num::io::{read_container, write_container};
use crate::num::rng::Rng;
use crate::oracle::rel_err;
use crate::ssm::{conv_apply, kernel_conv, selective_scan, LtiSystem, SsmParams};

/// Relative error bound every recomputed output must meet against its
/// stored value.
pub const TOLERANCE: f64 = 1e-10;

/// Bumped whenever the on-disk layout changes incompatibly.
pub const FORMAT_VERSION: u32 = 1;

const MANIFEST_FILE: &str = "manifest.json";

/// Salt separating the weight stream from the input stream within a group,
/// so weights and inputs never share a prefix of the same random sequence.
const WEIGHT_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

type Tensors = BTreeMap<String, Array>;

struct GroupSpec {
    op: &'static str,
    seed: u64,
    inputs: &'static [&'static str],
    outputs: &'static [&'static str],
    /// Produces one array per `inputs` entry, in order.
    gen: fn(u64) -> Result<Vec<Array>>,
    /// Produces one array per `outputs` entry from the stored inputs.
    compute: fn(&Tensors) -> Result<Vec<Array>>,
    /// Optional f32 rerun, returning `(tensor, max relative error)` pairs.
    drift: Option<fn(&Tensors) -> Result<Vec<(String, f64)>>>,
}

const GROUPS: &[GroupSpec] = &[
    GroupSpec {
        op: "selective_scan",
        seed: 101,
        inputs: &["params", "x"],
        outputs: &["y"],
        gen: scan_gen,
        compute: scan_compute,
        drift: Some(scan_drift),
    },
    GroupSpec {
        op: "lti_kernel",
        seed: 211,
        inputs: &["a_bar", "b_bar", "c", "x"],
        outputs: &["kernel", "y"],
        gen: lti_gen,
        compute: lti_compute,
        drift: None,
    },
    GroupSpec {
        op: "attention_naive",
        seed: 307,
        inputs: &["x", "wq", "wk", "wv", "wo"],
        outputs: &["y"],
        gen: attention_gen,
        compute: attention_compute,
        drift: Some(attention_drift),
    },
    GroupSpec {
        op: "mamba_block",
        seed: 401,
        inputs: &["params", "x"],
        outputs: &["y"],
        gen: mamba_gen,
        compute: mamba_compute,
        drift: Some(mamba_drift),
    },
    GroupSpec {
        op: "vim_block",
        seed: 503,
        inputs: &["params", "x"],
        outputs: &["y"],
        gen: vim_gen,
        compute: vim_compute,
        drift: Some(vim_drift),
    },
    GroupSpec {
        op: "dbm_block",
        seed: 601,
        inputs: &["params", "x"],
        outputs: &["y"],
        gen: dbm_gen,
        compute: dbm_compute,
        drift: Some(dbm_drift),
    },
    GroupSpec {
        op: "adapter",
        seed: 701,
        inputs: &["params", "tokens"],
        outputs: &["out_gate", "out_vanilla", "out_frozen"],
        gen: adapter_gen,
        compute: adapter_compute,
        drift: None,
    },
    GroupSpec {
        op: "spacetime_layout",
        seed: 809,
        inputs: &["frames", "cls", "temporal_pos"],
        outputs: &["seq", "pooled"],
        gen: spacetime_gen,
        compute: spacetime_compute,
        drift: None,
    },
    GroupSpec {
        op: "multimodal_layout",
        seed: 907,
        inputs: &["v", "q", "pos_video", "type_video", "pos_text", "type_text"],
        outputs: &[
            "arranged_left",
            "arranged_right",
            "arranged_both",
            "arranged_middle",
            "video_tagged",
        ],
        gen: multimodal_gen,
        compute: multimodal_compute,
        drift: None,
    },
];

// Fixed shapes per group. Changing any of these invalidates committed
// vectors, hence the format version.
const SCAN_D: usize = 6;
const SCAN_N: usize = 4;
const SCAN_R: usize = 2;
const SCAN_M: usize = 12;
const LTI_D: usize = 3;
const LTI_N: usize = 4;
const LTI_M: usize = 16;
const ATT_M: usize = 6;
const ATT_D: usize = 5;
const BLK_D: usize = 8;
const BLK_E: usize = 2;
const BLK_N: usize = 4;
const BLK_W: usize = 4;
const BLK_M: usize = 12;
const AD_D: usize = 4;
const AD_E: usize = 2;
const AD_N: usize = 3;
const AD_W: usize = 4;
const AD_T: usize = 3;
const AD_P: usize = 5;
/// Pre-activation gate for the engaged-adapter vectors.
const AD_GATE: f64 = 0.5;
const SL_T: usize = 3;
const SL_P: usize = 5;
const SL_D: usize = 4;
const MM_LV: usize = 5;
const MM_LQ: usize = 2;
const MM_D: usize = 3;

fn rand_array(rng: &mut Rng, shape: &[usize], lo: f64, hi: f64) -> Array {
    let count = shape.iter().product();
    Array::from_vec_unchecked(shape.to_vec(), rng.uniform_vec(count, lo, hi))
}

fn flat_array(values: Vec<f64>) -> Array {
    let len = values.len();
    Array::from_vec_unchecked(vec![len], values)
}

fn fetch<'a>(tensors: &'a Tensors, op: &str, name: &str) -> Result<&'a Array> {
    tensors.get(name).ok_or_else(|| Error::GoldenMismatch {
        tensor: format!("{op}/{name}"),
        detail: "tensor missing from container".to_string(),
    })
}

fn cast_f32(x: &Array) -> Vec<f32> {
    x.data().iter().map(|&v| v as f32).collect()
}

fn widen_f32(values: &[f32], shape: &[usize]) -> Array {
    Array::from_vec_unchecked(shape.to_vec(), values.iter().map(|&v| v as f64).collect())
}

// -- selective scan ----------------------------------------------------------

fn scan_template(flat: &[f64]) -> Result<SsmParams> {
    SsmParams::init(SCAN_D, SCAN_N, SCAN_R, &mut Rng::new(0)).with_params_flat(flat)
}

fn scan_gen(seed: u64) -> Result<Vec<Array>> {
    let p = SsmParams::init(SCAN_D, SCAN_N, SCAN_R, &mut Rng::new(seed ^ WEIGHT_SALT));
    let mut rng = Rng::new(seed);
    let x = rand_array(&mut rng, &[SCAN_M, SCAN_D], -1.0, 1.0);
    Ok(vec![flat_array(p.params_flat()), x])
}

fn scan_compute(t: &Tensors) -> Result<Vec<Array>> {
    let p = scan_template(fetch(t, "selective_scan", "params")?.data())?;
    let y = selective_scan(&p, fetch(t, "selective_scan", "x")?)?;
    Ok(vec![y])
}

fn scan_drift(t: &Tensors) -> Result<Vec<(String, f64)>> {
    let p = scan_template(fetch(t, "selective_scan", "params")?.data())?;
    let x = fetch(t, "selective_scan", "x")?;
    let y = fetch(t, "selective_scan", "y")?;
    let kernel = ScanKernel::<f32>::from_params(&p);
    let y32 = kernel.run(&cast_f32(x), SCAN_M);
    Ok(vec![("y".to_string(), rel_err(y, &widen_f32(&y32, y.shape())))])
}

// -- time-invariant kernel form ----------------------------------------------

fn lti_gen(seed: u64) -> Result<Vec<Array>> {
    let mut rw = Rng::new(seed ^ WEIGHT_SALT);
    let a_bar = rand_array(&mut rw, &[LTI_D, LTI_N], 0.05, 0.95);
    let b_bar = rand_array(&mut rw, &[LTI_D, LTI_N], -1.0, 1.0);
    let c = rand_array(&mut rw, &[LTI_D, LTI_N], -1.0, 1.0);
    let mut rng = Rng::new(seed);
    let x = rand_array(&mut rng, &[LTI_M, LTI_D], -1.0, 1.0);
    Ok(vec![a_bar, b_bar, c, x])
}

fn lti_compute(t: &Tensors) -> Result<Vec<Array>> {
    let sys = LtiSystem::new(
        fetch(t, "lti_kernel", "a_bar")?.clone(),
        fetch(t, "lti_kernel", "b_bar")?.clone(),
        fetch(t, "lti_kernel", "c")?.clone(),
    )?;
    let kernel = kernel_conv(&sys, LTI_M)?;
    let y = conv_apply(&kernel, fetch(t, "lti_kernel", "x")?)?;
    Ok(vec![kernel, y])
}

// -- attention ----------------------------------------------------------------

fn attention_gen(seed: u64) -> Result<Vec<Array>> {
    let mut rw = Rng::new(seed ^ WEIGHT_SALT);
    let shape = [ATT_D, ATT_D];
    let wq = rand_array(&mut rw, &shape, -0.8, 0.8);
    let wk = rand_array(&mut rw, &shape, -0.8, 0.8);
    let wv = rand_array(&mut rw, &shape, -0.8, 0.8);
    let wo = rand_array(&mut rw, &shape, -0.8, 0.8);
    let mut rng = Rng::new(seed);
    let x = rand_array(&mut rng, &[ATT_M, ATT_D], -1.0, 1.0);
    Ok(vec![x, wq, wk, wv, wo])
}

fn attention_weights<'a>(t: &'a Tensors) -> Result<[&'a Array; 5]> {
    Ok([
        fetch(t, "attention_naive", "x")?,
        fetch(t, "attention_naive", "wq")?,
        fetch(t, "attention_naive", "wk")?,
        fetch(t, "attention_naive", "wv")?,
        fetch(t, "attention_naive", "wo")?,
    ])
}

fn attention_compute(t: &Tensors) -> Result<Vec<Array>> {
    let [x, wq, wk, wv, wo] = attention_weights(t)?;
    Ok(vec![attention_naive(x, wq, wk, wv, wo)?])
}

fn attention_drift(t: &Tensors) -> Result<Vec<(String, f64)>> {
    let [x, wq, wk, wv, wo] = attention_weights(t)?;
    let y = fetch(t, "attention_naive", "y")?;
    let kernel = AttentionKernel::<f32>::from_weights(wq, wk, wv, wo);
    let y32 = kernel.run(&cast_f32(x), ATT_M);
    Ok(vec![("y".to_string(), rel_err(y, &widen_f32(&y32, y.shape())))])
}

// -- sequence-mixing blocks ----------------------------------------------------

fn block_template(kind: BlockKind, flat: &[f64]) -> Result<Block> {
    let cfg = BlockConfig {
        kind,
        d: BLK_D,
        e: BLK_E,
        n: BLK_N,
        conv_width: BLK_W,
        seed: 0,
    };
    build_block(&cfg)?.with_params_flat(flat)
}

fn block_gen(kind: BlockKind, seed: u64) -> Result<Vec<Array>> {
    let cfg = BlockConfig {
        kind,
        d: BLK_D,
        e: BLK_E,
        n: BLK_N,
        conv_width: BLK_W,
        seed: seed ^ WEIGHT_SALT,
    };
    let block = build_block(&cfg)?;
    let mut rng = Rng::new(seed);
    let x = rand_array(&mut rng, &[BLK_M, BLK_D], -1.0, 1.0);
    Ok(vec![flat_array(block.params_flat()), x])
}

fn block_compute(kind: BlockKind, t: &Tensors) -> Result<Vec<Array>> {
    let op = kind.name();
    let block = block_template(kind, fetch(t, op, "params")?.data())?;
    Ok(vec![block.forward(fetch(t, op, "x")?)?])
}

fn block_drift(kind: BlockKind, t: &Tensors) -> Result<Vec<(String, f64)>> {
    let op = kind.name();
    let block = block_template(kind, fetch(t, op, "params")?.data())?;
    let x = fetch(t, op, "x")?;
    let y = fetch(t, op, "y")?;
    let y32 = match &block {
        Block::Mamba(b) => MambaKernel::<f32>::from_block(b).run(&cast_f32(x), BLK_M),
        Block::Vim(b) => VimKernel::<f32>::from_block(b).run(&cast_f32(x), BLK_M),
        Block::Dbm(b) => DbmKernel::<f32>::from_block(b).run(&cast_f32(x), BLK_M),
    };
    Ok(vec![("y".to_string(), rel_err(y, &widen_f32(&y32, y.shape())))])
}

fn mamba_gen(seed: u64) -> Result<Vec<Array>> {
    block_gen(BlockKind::Mamba, seed)
}

fn mamba_compute(t: &Tensors) -> Result<Vec<Array>> {
    block_compute(BlockKind::Mamba, t)
}

fn mamba_drift(t: &Tensors) -> Result<Vec<(String, f64)>> {
    block_drift(BlockKind::Mamba, t)
}

fn vim_gen(seed: u64) -> Result<Vec<Array>> {
    block_gen(BlockKind::Vim, seed)
}

fn vim_compute(t: &Tensors) -> Result<Vec<Array>> {
    block_compute(BlockKind::Vim, t)
}

fn vim_drift(t: &Tensors) -> Result<Vec<(String, f64)>> {
    block_drift(BlockKind::Vim, t)
}

fn dbm_gen(seed: u64) -> Result<Vec<Array>> {
    block_gen(BlockKind::Dbm, seed)
}

fn dbm_compute(t: &Tensors) -> Result<Vec<Array>> {
    block_compute(BlockKind::Dbm, t)
}

fn dbm_drift(t: &Tensors) -> Result<Vec<(String, f64)>> {
    block_drift(BlockKind::Dbm, t)
}

// -- residual adapter -----------------------------------------------------------

fn adapter_inner(flat: &[f64]) -> Result<VimBlock> {
    VimBlock::init(AD_D, AD_E, AD_N, AD_W, &mut Rng::new(0))?.with_params_flat(flat)
}

fn adapter_gen(seed: u64) -> Result<Vec<Array>> {
    let inner = VimBlock::init(AD_D, AD_E, AD_N, AD_W, &mut Rng::new(seed ^ WEIGHT_SALT))?;
    let mut rng = Rng::new(seed);
    let tokens = rand_array(&mut rng, &[AD_T, AD_P, AD_D], -1.0, 1.0);
    Ok(vec![flat_array(inner.params_flat()), tokens])
}

fn adapter_compute(t: &Tensors) -> Result<Vec<Array>> {
    let flat = fetch(t, "adapter", "params")?.data().to_vec();
    let tokens = fetch(t, "adapter", "tokens")?;
    let spatial = |a: &Array| a.map(f64::sin, "golden spatial mixer");
    let gated = |style: AdapterStyle| -> Result<Adapter> {
        Ok(Adapter::new(style, Block::Vim(adapter_inner(&flat)?)).with_gate(AD_GATE))
    };
    let out_gate = gated(AdapterStyle::Vanilla)?.forward(tokens)?;
    let out_vanilla = gated(AdapterStyle::Vanilla)?.divided_spacetime(tokens, spatial)?;
    let out_frozen = gated(AdapterStyle::Frozen)?.divided_spacetime(tokens, spatial)?;
    Ok(vec![out_gate, out_vanilla, out_frozen])
}

// -- space-time layout -------------------------------------------------------------

fn spacetime_gen(seed: u64) -> Result<Vec<Array>> {
    let mut rng = Rng::new(seed);
    let frames = rand_array(&mut rng, &[SL_T, SL_P, SL_D], -1.0, 1.0);
    let cls = rand_array(&mut rng, &[SL_D], -1.0, 1.0);
    let temporal_pos = rand_array(&mut rng, &[SL_T, SL_D], -0.5, 0.5);
    Ok(vec![frames, cls, temporal_pos])
}

fn spacetime_compute(t: &Tensors) -> Result<Vec<Array>> {
    let v = VideoTokens::with_temporal_pos(
        fetch(t, "spacetime_layout", "frames")?.clone(),
        fetch(t, "spacetime_layout", "cls")?.clone(),
        fetch(t, "spacetime_layout", "temporal_pos")?.clone(),
    )?;
    let (seq, layout) = flatten_spacetime(&v)?;
    let pooled = pool_cls(&seq, &layout)?;
    Ok(vec![seq, pooled])
}

// -- multimodal layout -----------------------------------------------------------------

fn multimodal_gen(seed: u64) -> Result<Vec<Array>> {
    let mut rw = Rng::new(seed ^ WEIGHT_SALT);
    let emb = ModalityEmbeddings::init(MM_LV, MM_LQ, MM_D, &mut rw);
    let mut rng = Rng::new(seed);
    let v = rand_array(&mut rng, &[MM_LV, MM_D], -1.0, 1.0);
    let q = rand_array(&mut rng, &[MM_LQ, MM_D], -1.0, 1.0);
    Ok(vec![v, q, emb.pos_video, emb.type_video, emb.pos_text, emb.type_text])
}

fn multimodal_compute(t: &Tensors) -> Result<Vec<Array>> {
    let op = "multimodal_layout";
    let v = fetch(t, op, "v")?;
    let q = fetch(t, op, "q")?;
    let emb = ModalityEmbeddings {
        pos_video: fetch(t, op, "pos_video")?.clone(),
        type_video: fetch(t, op, "type_video")?.clone(),
        pos_text: fetch(t, op, "pos_text")?.clone(),
        type_text: fetch(t, op, "type_text")?.clone(),
    };
    let mut out = Vec::with_capacity(5);
    let mut tagged = None;
    for kind in ArrangementKind::ALL {
        let (seq, arr) = arrange_multimodal(v, q, kind, &emb)?;
        if kind == ArrangementKind::Left {
            tagged = Some(extract_video(&seq, &arr)?);
        }
        out.push(seq);
    }
    out.push(tagged.expect("Left is always arranged"));
    Ok(out)
}

// -- manifest and driver ---------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    groups: Vec<ManifestGroup>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestGroup {
    op: String,
    file: String,
    /// FNV-1a 64 of the container bytes, lower-case hex.
    file_hash: String,
    file_bytes: u64,
    inputs: Vec<String>,
    outputs: Vec<String>,
}

fn group_file(op: &str) -> String {
    format!("{op}.bin")
}

/// FNV-1a 64. Every step is a bijection of the running state for a fixed
/// tail, so two inputs differing in exactly one byte always hash apart;
/// that is the guarantee the corruption check leans on. Not collision
/// resistant against an adversary, which the manifest does not need to be.
fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Writes every golden group plus the manifest into `dir`, creating it if
/// needed. Byte-identical across runs.
pub fn golden_generate(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut groups = Vec::with_capacity(GROUPS.len());
    for spec in GROUPS {
        let inputs = (spec.gen)(spec.seed)?;
        debug_assert_eq!(inputs.len(), spec.inputs.len());
        let mut tensors = Tensors::new();
        for (name, array) in spec.inputs.iter().zip(&inputs) {
            tensors.insert((*name).to_string(), array.clone());
        }
        let outputs = (spec.compute)(&tensors)?;
        debug_assert_eq!(outputs.len(), spec.outputs.len());
        let mut entries: Vec<(&str, &Array)> = Vec::new();
        entries.extend(spec.inputs.iter().copied().zip(inputs.iter()));
        entries.extend(spec.outputs.iter().copied().zip(outputs.iter()));
        let path = dir.join(group_file(spec.op));
        write_container(&path, &entries)?;
        let bytes = std::fs::read(&path)?;
        groups.push(ManifestGroup {
            op: spec.op.to_string(),
            file: group_file(spec.op),
            file_hash: format!("{:016x}", fnv1a64(&bytes)),
            file_bytes: bytes.len() as u64,
            inputs: spec.inputs.iter().map(|s| s.to_string()).collect(),
            outputs: spec.outputs.iter().map(|s| s.to_string()).collect(),
        });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        groups,
    };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    std::fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(())
}

/// Outcome of a successful verification.
#[derive(Debug, Clone)]
pub struct GoldenReport {
    /// Operator names verified, in manifest order.
    pub groups: Vec<String>,
    /// `(op/tensor, max relative error)` for the f32 kernel reruns.
    pub f32_drift: Vec<(String, f64)>,
}

impl GoldenReport {
    /// Largest informational f32 drift, 0.0 when none were measured.
    pub fn max_drift(&self) -> f64 {
        self.f32_drift.iter().fold(0.0, |acc, (_, e)| acc.max(*e))
    }
}

/// Renders a verification report, one line per group plus drift lines.
pub fn render_report(report: &GoldenReport) -> String {
    let mut out = String::new();
    for op in &report.groups {
        out.push_str(&format!("verified {op}\n"));
    }
    for (tensor, err) in &report.f32_drift {
        out.push_str(&format!("f32 drift {tensor}: {err:.3e}\n"));
    }
    out.push_str(&format!(
        "all {} groups within {TOLERANCE:.0e}\n",
        report.groups.len()
    ));
    out
}

fn mismatch(tensor: impl Into<String>, detail: impl Into<String>) -> Error {
    Error::GoldenMismatch {
        tensor: tensor.into(),
        detail: detail.into(),
    }
}

fn resolve_workers(cap: Option<usize>, available: usize, group_count: usize) -> usize {
    cap.unwrap_or(available).clamp(1, group_count.max(1))
}

fn worker_count(group_count: usize) -> usize {
    let cap = std::env::var("VMS_THREADS")
        .ok()
        .and_then(|s| s.trim().parse::<usize>().ok());
    let available = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1);
    resolve_workers(cap, available, group_count)
}

fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| mismatch(MANIFEST_FILE, format!("unreadable: {e}")))?;
    let manifest: Manifest = serde_json::from_str(&text)
        .map_err(|e| mismatch(MANIFEST_FILE, format!("unparsable: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(mismatch(
            MANIFEST_FILE,
            format!(
                "format version {} unsupported (expected {FORMAT_VERSION})",
                manifest.format_version
            ),
        ));
    }
    Ok(manifest)
}

/// Pairs each built-in group with its manifest entry, rejecting missing or
/// unexpected groups and name-list drift.
fn match_manifest(manifest: &Manifest) -> Result<Vec<&ManifestGroup>> {
    if manifest.groups.len() != GROUPS.len() {
        return Err(mismatch(
            MANIFEST_FILE,
            format!(
                "{} groups listed, expected {}",
                manifest.groups.len(),
                GROUPS.len()
            ),
        ));
    }
    GROUPS
        .iter()
        .map(|spec| {
            let mg = manifest
                .groups
                .iter()
                .find(|g| g.op == spec.op)
                .ok_or_else(|| mismatch(MANIFEST_FILE, format!("group `{}` missing", spec.op)))?;
            let names_match = mg.inputs.iter().map(String::as_str).eq(spec.inputs.iter().copied())
                && mg.outputs.iter().map(String::as_str).eq(spec.outputs.iter().copied());
            if !names_match || mg.file != group_file(spec.op) {
                return Err(mismatch(
                    MANIFEST_FILE,
                    format!("group `{}` does not match the built-in layout", spec.op),
                ));
            }
            Ok(mg)
        })
        .collect()
}

fn verify_group(dir: &Path, spec: &GroupSpec, mg: &ManifestGroup) -> Result<Vec<(String, f64)>> {
    let path = dir.join(&mg.file);
    let bytes =
        std::fs::read(&path).map_err(|e| mismatch(mg.file.clone(), format!("unreadable: {e}")))?;
    if bytes.len() as u64 != mg.file_bytes {
        return Err(mismatch(
            mg.file.clone(),
            format!("{} bytes stored, manifest records {}", bytes.len(), mg.file_bytes),
        ));
    }
    let hash = format!("{:016x}", fnv1a64(&bytes));
    if hash != mg.file_hash {
        return Err(mismatch(
            mg.file.clone(),
            format!("content hash {hash} != manifest {}", mg.file_hash),
        ));
    }
    let entries =
        read_container(&path).map_err(|e| mismatch(mg.file.clone(), format!("unreadable: {e}")))?;
    let expected: Vec<&str> = spec
        .inputs
        .iter()
        .chain(spec.outputs.iter())
        .copied()
        .collect();
    if entries.len() != expected.len() {
        return Err(mismatch(
            mg.file.clone(),
            format!("{} tensors stored, expected {}", entries.len(), expected.len()),
        ));
    }
    let mut tensors = Tensors::new();
    for ((name, array), want) in entries.into_iter().zip(&expected) {
        if name != *want {
            return Err(mismatch(
                format!("{}:{name}", mg.file),
                format!("unexpected tensor (wanted `{want}`)"),
            ));
        }
        tensors.insert(name, array);
    }
    let recomputed = (spec.compute)(&tensors)
        .map_err(|e| mismatch(spec.op, format!("recompute failed: {e}")))?;
    for (name, fresh) in spec.outputs.iter().zip(&recomputed) {
        let stored = fetch(&tensors, spec.op, name)?;
        let label = format!("{}/{name}", spec.op);
        if stored.shape() != fresh.shape() {
            return Err(mismatch(
                label,
                format!("stored shape {:?} != recomputed {:?}", stored.shape(), fresh.shape()),
            ));
        }
        let err = rel_err(stored, fresh);
        if !(err <= TOLERANCE) {
            return Err(mismatch(
                label,
                format!("max relative error {err:.3e} exceeds {TOLERANCE:.0e}"),
            ));
        }
    }
    match spec.drift {
        Some(drift) => Ok((drift)(&tensors)?
            .into_iter()
            .map(|(name, err)| (format!("{}/{name}", spec.op), err))
            .collect()),
        None => Ok(Vec::new()),
    }
}

/// Verifies every group under `dir` against freshly recomputed outputs.
/// Groups are checked on up to `VMS_THREADS` worker threads; failures are
/// reported deterministically in manifest order.
pub fn golden_verify(dir: &Path) -> Result<GoldenReport> {
    let manifest = read_manifest(dir)?;
    let matched = match_manifest(&manifest)?;
    let next = AtomicUsize::new(0);
    let results: Vec<Mutex<Option<Result<Vec<(String, f64)>>>>> =
        GROUPS.iter().map(|_| Mutex::new(None)).collect();
    let workers = worker_count(GROUPS.len());
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= GROUPS.len() {
                    break;
                }
                let outcome = verify_group(dir, &GROUPS[i], matched[i]);
                *results[i].lock().expect("verify worker poisoned") = Some(outcome);
            });
        }
    });
    let mut report = GoldenReport {
        groups: Vec::with_capacity(GROUPS.len()),
        f32_drift: Vec::new(),
    };
    for (spec, cell) in GROUPS.iter().zip(results) {
        let outcome = cell
            .into_inner()
            .expect("verify worker poisoned")
            .expect("every group index is visited");
        report.f32_drift.extend(outcome?);
        report.groups.push(spec.op.to_string());
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generate_then_verify_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        golden_generate(dir.path()).unwrap();
        let report = golden_verify(dir.path()).unwrap();
        assert_eq!(report.groups.len(), GROUPS.len());
        // One drift entry per generic-scalar operator.
        assert_eq!(report.f32_drift.len(), 5);
        for (tensor, err) in &report.f32_drift {
            assert!(*err >= 0.0 && *err < 1e-2, "{tensor} drifted {err}");
        }
        assert!(render_report(&report).contains("verified dbm_block"));
    }

    #[test]
    fn generation_is_bit_reproducible() {
        let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        golden_generate(da.path()).unwrap();
        golden_generate(db.path()).unwrap();
        let mut names: Vec<String> = std::fs::read_dir(da.path())
            .unwrap()
            .map(|e| e.unwrap().file_name().into_string().unwrap())
            .collect();
        names.sort();
        assert_eq!(names.len(), GROUPS.len() + 1);
        for name in names {
            let a = std::fs::read(da.path().join(&name)).unwrap();
            let b = std::fs::read(db.path().join(&name)).unwrap();
            assert_eq!(a, b, "{name} differs between runs");
        }
    }

    #[test]
    fn flipped_byte_is_detected_and_named() {
        let dir = tempfile::tempdir().unwrap();
        golden_generate(dir.path()).unwrap();
        let path = dir.path().join("dbm_block.bin");
        let mut bytes = std::fs::read(&path).unwrap();
        // Last byte holds the sign/exponent bits of the final value of `y`.
        let last = bytes.len() - 1;
        bytes[last] ^= 0x40;
        std::fs::write(&path, bytes).unwrap();
        match golden_verify(dir.path()) {
            Err(Error::GoldenMismatch { tensor, .. }) => {
                assert!(tensor.contains("dbm_block"), "blamed `{tensor}`");
            }
            other => panic!("corruption not detected: {other:?}"),
        }
    }

    #[test]
    fn sub_tolerance_corruption_is_still_detected() {
        let dir = tempfile::tempdir().unwrap();
        golden_generate(dir.path()).unwrap();
        let path = dir.path().join("adapter.bin");
        let mut bytes = std::fs::read(&path).unwrap();
        // Lowest mantissa byte of the final f64: a one-ulp-scale change,
        // far below TOLERANCE, invisible to the recompute layer.
        let low = bytes.len() - 8;
        bytes[low] ^= 0x01;
        std::fs::write(&path, bytes).unwrap();
        match golden_verify(dir.path()) {
            Err(Error::GoldenMismatch { tensor, detail }) => {
                assert!(tensor.contains("adapter"), "blamed `{tensor}`");
                assert!(detail.contains("hash"), "wrong layer: {detail}");
            }
            other => panic!("sub-tolerance corruption not detected: {other:?}"),
        }
    }

    #[test]
    fn single_byte_differences_always_hash_apart() {
        let base: Vec<u8> = (0u8..32).map(|i| i.wrapping_mul(37)).collect();
        let h0 = fnv1a64(&base);
        for pos in 0..base.len() {
            for mask in 1u8..=255 {
                let mut alt = base.clone();
                alt[pos] ^= mask;
                assert_ne!(fnv1a64(&alt), h0, "collision at byte {pos} mask {mask:#04x}");
            }
        }
        assert_ne!(fnv1a64(&base[..31]), h0, "truncation must change the hash");
    }

    #[test]
    fn corrupt_manifest_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        golden_generate(dir.path()).unwrap();
        std::fs::write(dir.path().join(MANIFEST_FILE), b"{not json").unwrap();
        match golden_verify(dir.path()) {
            Err(Error::GoldenMismatch { tensor, .. }) => assert_eq!(tensor, MANIFEST_FILE),
            other => panic!("manifest corruption not detected: {other:?}"),
        }
    }

    #[test]
    fn missing_group_file_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        golden_generate(dir.path()).unwrap();
        std::fs::remove_file(dir.path().join("attention_naive.bin")).unwrap();
        match golden_verify(dir.path()) {
            Err(Error::GoldenMismatch { tensor, .. }) => {
                assert!(tensor.contains("attention_naive.bin"), "blamed `{tensor}`");
            }
            other => panic!("missing file not detected: {other:?}"),
        }
    }

    #[test]
    fn worker_resolution_clamps_sensibly() {
        assert_eq!(resolve_workers(None, 8, 9), 8);
        assert_eq!(resolve_workers(None, 64, 9), 9);
        assert_eq!(resolve_workers(Some(2), 8, 9), 2);
        assert_eq!(resolve_workers(Some(0), 8, 9), 1);
        assert_eq!(resolve_workers(Some(100), 4, 9), 9);
        assert_eq!(resolve_workers(None, 1, 0), 1);
    }
}
