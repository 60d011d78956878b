//! Parameter audit: rebuilds the published ratio table from live blocks
//! and checks every row exactly, then compares the expansion-1
//! bidirectional module against the attention slot it would replace. Any
//! deviation is a hard error so the audit can gate CI.

use crate::blocks::config::{build_block, Block, BlockConfig, BlockKind};
use crate::blocks::count::{check_ratio, vim_temporal_budget, BudgetReport, ParamCounts};
use crate::blocks::mamba::MambaBlock;
use crate::error::{Error, Result};
use crate::num::rng::Rng;

#[derive(Debug, Clone, Copy)]
pub struct AuditRow {
    pub kind: BlockKind,
    pub d: usize,
    pub e: usize,
    pub counts: ParamCounts,
    pub static_pct: usize,
    pub dynamic_pct: usize,
}

#[derive(Debug, Clone)]
pub struct AuditReport {
    pub rows: Vec<AuditRow>,
    pub budgets: Vec<BudgetReport>,
}

/// Expected (static, dynamic) percentages against the single-direction
/// baseline at the same width.
pub fn expected_ratios(kind: BlockKind) -> (usize, usize) {
    match kind {
        BlockKind::Mamba => (100, 100),
        BlockKind::Vim => (100, 200),
        BlockKind::Dbm => (100, 100),
    }
}

/// The default audit grid: every block kind over (D, E) in
/// {32, 64, 128} x {1, 2}, plus budget checks at widths 64 and 256.
pub fn default_audit_configs() -> Vec<BlockConfig> {
    let mut configs = Vec::new();
    for kind in [BlockKind::Mamba, BlockKind::Vim, BlockKind::Dbm] {
        for d in [32, 64, 128] {
            for e in [1, 2] {
                configs.push(BlockConfig {
                    kind,
                    d,
                    e,
                    n: 16,
                    conv_width: 4,
                    seed: 0,
                });
            }
        }
    }
    configs
}

pub fn default_budget_widths() -> Vec<usize> {
    vec![64, 256]
}

/// Audits each config against a same-shape baseline; `budget_widths` adds
/// the expansion-1 bidirectional-vs-attention comparison at those widths.
pub fn param_audit(configs: &[BlockConfig], budget_widths: &[usize]) -> Result<AuditReport> {
    let mut rows = Vec::new();
    for cfg in configs {
        let block = build_block(cfg)?;
        let counts = block.count();
        let mut rng = Rng::new(cfg.seed);
        let baseline = match &block {
            Block::Mamba(b) => crate::blocks::count::count_mamba(b),
            _ => crate::blocks::count::count_mamba(&MambaBlock::init(
                cfg.d,
                cfg.e,
                cfg.n,
                cfg.conv_width,
                &mut rng,
            )?),
        };
        let (want_static, want_dynamic) = expected_ratios(cfg.kind);
        let label = format!("{} D={} E={}", cfg.kind.name(), cfg.d, cfg.e);
        check_ratio(&label, "static", counts.static_weights, baseline.static_weights, want_static)?;
        check_ratio(&label, "dynamic", counts.dynamic_weights, baseline.dynamic_weights, want_dynamic)?;
        rows.push(AuditRow {
            kind: cfg.kind,
            d: cfg.d,
            e: cfg.e,
            counts,
            static_pct: want_static,
            dynamic_pct: want_dynamic,
        });
    }
    let mut budgets = Vec::new();
    for &c in budget_widths {
        let mut rng = Rng::new(0);
        let vim = crate::blocks::vim::VimBlock::init(c, 1, 16, 4, &mut rng)?;
        let report = vim_temporal_budget(&vim)?;
        if !report.within_budget() {
            return Err(Error::RatioMismatch {
                block: format!("vim temporal module C={c}"),
                expected: format!("<= {} channel-scaled weights", report.budget),
                actual: report.channel_scaled.to_string(),
            });
        }
        budgets.push(report);
    }
    Ok(AuditReport { rows, budgets })
}

/// Plain-text table: counts are weights only, biases shown in their own
/// column and excluded from the percentages.
pub fn render_audit(report: &AuditReport) -> String {
    let mut out = String::from("block,D,E,static_weights,dynamic_weights,bias,static_pct,dynamic_pct\n");
    for r in &report.rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}%,{}%\n",
            r.kind.name(),
            r.d,
            r.e,
            r.counts.static_weights,
            r.counts.dynamic_weights,
            r.counts.bias,
            r.static_pct,
            r.dynamic_pct
        ));
    }
    for b in &report.budgets {
        out.push_str(&format!(
            "budget C={}: channel_scaled={} <= {} (slack {}), state_interface={}, attention_slot={}\n",
            b.width,
            b.channel_scaled,
            b.budget,
            b.budget - b.channel_scaled,
            b.state_interface,
            b.attention_slot
        ));
    }
    out
}
