//! Config-driven block construction. One JSON object names a block kind
//! and its dimensions; the same text format drives the CLI, the golden
//! vectors, and the FFI surface.

use serde::{Deserialize, Serialize};

use crate::blocks::count::{count_dbm, count_mamba, count_vim, ParamCounts};
use crate::blocks::dbm::DbmBlock;
use crate::blocks::mamba::MambaBlock;
use crate::blocks::vim::VimBlock;
use crate::error::{Error, Result};
use crate::num::array::Array;
use crate::num::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Mamba,
    Vim,
    Dbm,
}

impl BlockKind {
    pub fn name(self) -> &'static str {
        match self {
            BlockKind::Mamba => "mamba",
            BlockKind::Vim => "vim",
            BlockKind::Dbm => "dbm",
        }
    }
}

impl std::str::FromStr for BlockKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<BlockKind> {
        match s {
            "mamba" => Ok(BlockKind::Mamba),
            "vim" => Ok(BlockKind::Vim),
            "dbm" => Ok(BlockKind::Dbm),
            other => Err(Error::InvalidConfig(format!(
                "unknown block type `{other}` (expected mamba, vim, or dbm)"
            ))),
        }
    }
}

fn default_e() -> usize {
    2
}

fn default_n() -> usize {
    16
}

fn default_conv_width() -> usize {
    4
}

/// `{"type": "vim", "D": 32, "E": 2, "N": 16, "conv_width": 4, "seed": 7}`.
/// E, N, conv_width, and seed may be omitted (defaults 2, 16, 4, 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockConfig {
    #[serde(rename = "type")]
    pub kind: BlockKind,
    #[serde(rename = "D")]
    pub d: usize,
    #[serde(rename = "E", default = "default_e")]
    pub e: usize,
    #[serde(rename = "N", default = "default_n")]
    pub n: usize,
    #[serde(default = "default_conv_width")]
    pub conv_width: usize,
    #[serde(default)]
    pub seed: u64,
}

impl BlockConfig {
    pub fn from_json(text: &str) -> Result<BlockConfig> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

/// Any of the three sequence-mixing blocks behind one dispatch surface.
#[derive(Debug, Clone)]
pub enum Block {
    Mamba(MambaBlock),
    Vim(VimBlock),
    Dbm(DbmBlock),
}

pub fn build_block(cfg: &BlockConfig) -> Result<Block> {
    let mut rng = Rng::new(cfg.seed);
    Ok(match cfg.kind {
        BlockKind::Mamba => Block::Mamba(MambaBlock::init(cfg.d, cfg.e, cfg.n, cfg.conv_width, &mut rng)?),
        BlockKind::Vim => Block::Vim(VimBlock::init(cfg.d, cfg.e, cfg.n, cfg.conv_width, &mut rng)?),
        BlockKind::Dbm => Block::Dbm(DbmBlock::init(cfg.d, cfg.e, cfg.n, cfg.conv_width, &mut rng)?),
    })
}

impl Block {
    pub fn kind(&self) -> BlockKind {
        match self {
            Block::Mamba(_) => BlockKind::Mamba,
            Block::Vim(_) => BlockKind::Vim,
            Block::Dbm(_) => BlockKind::Dbm,
        }
    }

    pub fn d_model(&self) -> usize {
        match self {
            Block::Mamba(b) => b.d,
            Block::Vim(b) => b.d,
            Block::Dbm(b) => b.d,
        }
    }

    pub fn forward(&self, x: &Array) -> Result<Array> {
        match self {
            Block::Mamba(b) => b.forward(x),
            Block::Vim(b) => b.forward(x),
            Block::Dbm(b) => b.forward(x),
        }
    }

    pub fn backward(&self, x: &Array, dout: &Array) -> Result<(Array, Vec<f64>)> {
        match self {
            Block::Mamba(b) => b.backward(x, dout),
            Block::Vim(b) => b.backward(x, dout),
            Block::Dbm(b) => b.backward(x, dout),
        }
    }

    pub fn param_len(&self) -> usize {
        match self {
            Block::Mamba(b) => b.param_len(),
            Block::Vim(b) => b.param_len(),
            Block::Dbm(b) => b.param_len(),
        }
    }

    pub fn params_flat(&self) -> Vec<f64> {
        match self {
            Block::Mamba(b) => b.params_flat(),
            Block::Vim(b) => b.params_flat(),
            Block::Dbm(b) => b.params_flat(),
        }
    }

    pub fn with_params_flat(&self, flat: &[f64]) -> Result<Block> {
        Ok(match self {
            Block::Mamba(b) => Block::Mamba(b.with_params_flat(flat)?),
            Block::Vim(b) => Block::Vim(b.with_params_flat(flat)?),
            Block::Dbm(b) => Block::Dbm(b.with_params_flat(flat)?),
        })
    }

    pub fn count(&self) -> ParamCounts {
        match self {
            Block::Mamba(b) => count_mamba(b),
            Block::Vim(b) => count_vim(b),
            Block::Dbm(b) => count_dbm(b),
        }
    }
}
