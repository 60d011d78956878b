//! Space-time token layout: each frame's spatial tokens in raster order
//! with one classification token inserted at the middle slot (floor(P/2)),
//! frames concatenated in time order, and a per-frame additive temporal
//! position embedding that starts at zero so a freshly inflated video model
//! reproduces its image baseline on each frame.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::array::Array;

/// Index arithmetic for a flattened `T x (P + 1)` token sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawLayout", into = "RawLayout")]
pub struct TokenLayout {
    t: usize,
    p: usize,
}

/// Serialized form; `cls_offset` is stored redundantly and checked on read.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RawLayout {
    #[serde(rename = "T")]
    t: usize,
    #[serde(rename = "P")]
    p: usize,
    cls_offset: usize,
}

impl TryFrom<RawLayout> for TokenLayout {
    type Error = Error;

    fn try_from(raw: RawLayout) -> Result<TokenLayout> {
        let layout = TokenLayout::new(raw.t, raw.p)?;
        if raw.cls_offset != layout.cls_offset() {
            return Err(Error::LayoutMismatch(format!(
                "cls_offset {} does not match floor({}/2)",
                raw.cls_offset, raw.p
            )));
        }
        Ok(layout)
    }
}

impl From<TokenLayout> for RawLayout {
    fn from(l: TokenLayout) -> RawLayout {
        RawLayout {
            t: l.t,
            p: l.p,
            cls_offset: l.cls_offset(),
        }
    }
}

impl TokenLayout {
    pub fn new(t: usize, p: usize) -> Result<TokenLayout> {
        if t == 0 || p == 0 {
            return Err(Error::EmptyVideo { t, p });
        }
        Ok(TokenLayout { t, p })
    }

    pub fn frames(&self) -> usize {
        self.t
    }

    pub fn spatial(&self) -> usize {
        self.p
    }

    /// Slot of the cls token inside each frame row: floor(P/2).
    pub fn cls_offset(&self) -> usize {
        self.p / 2
    }

    /// Tokens per frame row (spatial plus cls).
    pub fn row_len(&self) -> usize {
        self.p + 1
    }

    pub fn seq_len(&self) -> usize {
        self.t * self.row_len()
    }

    /// (frame, slot) -> flat index; slot ranges over the frame row.
    pub fn flat_index(&self, frame: usize, slot: usize) -> usize {
        debug_assert!(frame < self.t && slot < self.row_len());
        frame * self.row_len() + slot
    }

    /// Flat index -> (frame, slot); total inverse of [`flat_index`](Self::flat_index).
    pub fn frame_slot(&self, flat: usize) -> (usize, usize) {
        debug_assert!(flat < self.seq_len());
        (flat / self.row_len(), flat % self.row_len())
    }

    pub fn cls_index(&self, frame: usize) -> usize {
        self.flat_index(frame, self.cls_offset())
    }

    /// Slot of the `sp`-th raster-order spatial token (cls shifts the tail
    /// right by one).
    pub fn spatial_slot(&self, sp: usize) -> usize {
        debug_assert!(sp < self.p);
        if sp < self.cls_offset() {
            sp
        } else {
            sp + 1
        }
    }

    /// Raster index of a slot, or None for the cls slot.
    pub fn slot_spatial(&self, slot: usize) -> Option<usize> {
        debug_assert!(slot < self.row_len());
        match slot.cmp(&self.cls_offset()) {
            std::cmp::Ordering::Less => Some(slot),
            std::cmp::Ordering::Equal => None,
            std::cmp::Ordering::Greater => Some(slot - 1),
        }
    }
}

/// Per-frame spatial tokens plus the shared cls vector and the per-frame
/// temporal position embeddings (zero at init).
#[derive(Debug, Clone)]
pub struct VideoTokens {
    /// `[T, P, D]` raster-order patches per frame.
    pub frames: Array,
    /// `[D]`, inserted once per frame.
    pub cls: Array,
    /// `[T, D]`, added to every token of its frame.
    pub temporal_pos: Array,
}

impl VideoTokens {
    /// Zero-initialized temporal position embeddings.
    pub fn new(frames: Array, cls: Array) -> Result<VideoTokens> {
        let pos = Array::zeros(vec![frames.shape().first().copied().unwrap_or(0), cls.len()]);
        VideoTokens::with_temporal_pos(frames, cls, pos)
    }

    pub fn with_temporal_pos(frames: Array, cls: Array, temporal_pos: Array) -> Result<VideoTokens> {
        if frames.ndim() != 3 {
            return Err(Error::ShapeMismatch(format!(
                "frames must be [T, P, D], got {:?}",
                frames.shape()
            )));
        }
        let (t, p, d) = (frames.shape()[0], frames.shape()[1], frames.shape()[2]);
        if t == 0 || p == 0 {
            return Err(Error::EmptyVideo { t, p });
        }
        if cls.shape() != [d] {
            return Err(Error::ShapeMismatch(format!(
                "cls must be [{d}], got {:?}",
                cls.shape()
            )));
        }
        if temporal_pos.shape() != [t, d] {
            return Err(Error::ShapeMismatch(format!(
                "temporal_pos must be [{t}, {d}], got {:?}",
                temporal_pos.shape()
            )));
        }
        Ok(VideoTokens {
            frames,
            cls,
            temporal_pos,
        })
    }

    pub fn frame_count(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn spatial_count(&self) -> usize {
        self.frames.shape()[1]
    }

    pub fn width(&self) -> usize {
        self.frames.shape()[2]
    }
}

/// Flattens to `[T * (P + 1), D]`: per frame, raster tokens with cls at the
/// middle slot, temporal_pos[t] added to every token of frame t, frames in
/// time order.
pub fn flatten_spacetime(v: &VideoTokens) -> Result<(Array, TokenLayout)> {
    let (t, p, d) = (v.frame_count(), v.spatial_count(), v.width());
    let layout = TokenLayout::new(t, p)?;
    let mut data = vec![0.0; layout.seq_len() * d];
    for ti in 0..t {
        for slot in 0..layout.row_len() {
            let dst = layout.flat_index(ti, slot) * d;
            for j in 0..d {
                let tok = match layout.slot_spatial(slot) {
                    Some(sp) => v.frames.at(&[ti, sp, j]),
                    None => v.cls.data()[j],
                };
                data[dst + j] = tok + v.temporal_pos.at(&[ti, j]);
            }
        }
    }
    Ok((Array::from_vec(vec![layout.seq_len(), d], data)?, layout))
}

/// Mean of the T cls rows of a mixed sequence.
pub fn pool_cls(seq_out: &Array, layout: &TokenLayout) -> Result<Array> {
    if seq_out.ndim() != 2 || seq_out.shape()[0] != layout.seq_len() {
        return Err(Error::LayoutMismatch(format!(
            "sequence [{:?}] does not match layout length {}",
            seq_out.shape(),
            layout.seq_len()
        )));
    }
    let d = seq_out.shape()[1];
    let mut acc = vec![0.0; d];
    for ti in 0..layout.frames() {
        let row = layout.cls_index(ti);
        for j in 0..d {
            acc[j] += seq_out.at(&[row, j]);
        }
    }
    let t = layout.frames() as f64;
    for a in &mut acc {
        *a /= t;
    }
    Array::from_vec(vec![d], acc)
}
