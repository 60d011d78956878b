//! Joint video/text token arrangements. Text can sit left of, right of, on
//! both sides of, or in the middle of the video tokens; because scan-based
//! mixers are order-dependent, the choice is material, so the arrangement
//! is a first-class value that can also undo itself (extract the video
//! rows) after mixing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::array::Array;
use crate::num::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArrangementKind {
    /// Text before video: `[Q; V]`.
    #[serde(rename = "L")]
    Left,
    /// Text after video: `[V; Q]`.
    #[serde(rename = "R")]
    Right,
    /// Text on both sides: `[Q; V; Q]`, the two copies identical.
    #[serde(rename = "L+R")]
    Both,
    /// Text inserted contiguously at floor(L_v/2) inside the video rows.
    #[serde(rename = "M")]
    Middle,
}

impl ArrangementKind {
    pub const ALL: [ArrangementKind; 4] = [
        ArrangementKind::Left,
        ArrangementKind::Right,
        ArrangementKind::Both,
        ArrangementKind::Middle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ArrangementKind::Left => "L",
            ArrangementKind::Right => "R",
            ArrangementKind::Both => "L+R",
            ArrangementKind::Middle => "M",
        }
    }
}

impl std::str::FromStr for ArrangementKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<ArrangementKind> {
        match s {
            "L" => Ok(ArrangementKind::Left),
            "R" => Ok(ArrangementKind::Right),
            "L+R" => Ok(ArrangementKind::Both),
            "M" => Ok(ArrangementKind::Middle),
            other => Err(Error::InvalidConfig(format!(
                "unknown arrangement `{other}` (expected L, R, L+R, or M)"
            ))),
        }
    }
}

/// Arrangement metadata; enough to place and to recover the video rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MultiModalArrangement {
    pub kind: ArrangementKind,
    #[serde(rename = "L_v")]
    pub l_v: usize,
    #[serde(rename = "L_q")]
    pub l_q: usize,
}

impl MultiModalArrangement {
    pub fn new(kind: ArrangementKind, l_v: usize, l_q: usize) -> MultiModalArrangement {
        MultiModalArrangement { kind, l_v, l_q }
    }

    /// L, R, M: `L_v + L_q`; L+R: `L_v + 2 L_q`.
    pub fn total_len(&self) -> usize {
        match self.kind {
            ArrangementKind::Both => self.l_v + 2 * self.l_q,
            _ => self.l_v + self.l_q,
        }
    }

    /// Flat rows holding video token i, in original order.
    pub fn video_indices(&self) -> Vec<usize> {
        let (v, q) = (self.l_v, self.l_q);
        match self.kind {
            ArrangementKind::Left | ArrangementKind::Both => (q..q + v).collect(),
            ArrangementKind::Right => (0..v).collect(),
            ArrangementKind::Middle => {
                let mid = v / 2;
                (0..mid).chain(mid + q..v + q).collect()
            }
        }
    }

    /// Flat rows holding the text tokens (first copy, for L+R).
    pub fn text_indices(&self) -> Vec<usize> {
        let (v, q) = (self.l_v, self.l_q);
        match self.kind {
            ArrangementKind::Left | ArrangementKind::Both => (0..q).collect(),
            ArrangementKind::Right => (v..v + q).collect(),
            ArrangementKind::Middle => {
                let mid = v / 2;
                (mid..mid + q).collect()
            }
        }
    }
}

/// Learned additive embeddings: per-position within each modality plus one
/// type vector per modality that tags every token of that modality.
#[derive(Debug, Clone)]
pub struct ModalityEmbeddings {
    /// `[L_v, D]`.
    pub pos_video: Array,
    /// `[D]`.
    pub type_video: Array,
    /// `[L_q, D]`.
    pub pos_text: Array,
    /// `[D]`.
    pub type_text: Array,
}

impl ModalityEmbeddings {
    /// Draw order: pos_video, type_video, pos_text, type_text.
    pub fn init(l_v: usize, l_q: usize, d: usize, rng: &mut Rng) -> ModalityEmbeddings {
        ModalityEmbeddings {
            pos_video: Array::from_vec_unchecked(vec![l_v, d], rng.uniform_vec(l_v * d, -0.1, 0.1)),
            type_video: Array::from_vec_unchecked(vec![d], rng.uniform_vec(d, -0.1, 0.1)),
            pos_text: Array::from_vec_unchecked(vec![l_q, d], rng.uniform_vec(l_q * d, -0.1, 0.1)),
            type_text: Array::from_vec_unchecked(vec![d], rng.uniform_vec(d, -0.1, 0.1)),
        }
    }
}

fn embed(tokens: &Array, pos: &Array, ty: &Array, what: &str) -> Result<Array> {
    if tokens.shape() != pos.shape() {
        return Err(Error::ShapeMismatch(format!(
            "{what}: tokens {:?} vs position embedding {:?}",
            tokens.shape(),
            pos.shape()
        )));
    }
    let d = ty.len();
    if tokens.ndim() != 2 || tokens.shape()[1] != d {
        return Err(Error::ShapeMismatch(format!(
            "{what}: tokens {:?} vs type embedding width {d}",
            tokens.shape()
        )));
    }
    let summed = tokens.add(pos)?;
    let mut data = summed.data().to_vec();
    for (i, slot) in data.iter_mut().enumerate() {
        *slot += ty.data()[i % d];
    }
    Array::from_vec(tokens.shape().to_vec(), data)
}

/// Tags both modalities (`V + pos_V + type_V`, `Q + pos_Q + type_Q`) and
/// lays them out per `kind`. The two type vectors must differ whenever both
/// modalities are present, otherwise the tagging cannot distinguish them.
pub fn arrange_multimodal(
    v: &Array,
    q: &Array,
    kind: ArrangementKind,
    emb: &ModalityEmbeddings,
) -> Result<(Array, MultiModalArrangement)> {
    let vt = embed(v, &emb.pos_video, &emb.type_video, "video")?;
    let qt = embed(q, &emb.pos_text, &emb.type_text, "text")?;
    let (l_v, l_q) = (v.shape()[0], q.shape()[0]);
    if l_v > 0 && l_q > 0 && emb.type_video.data() == emb.type_text.data() {
        return Err(Error::LayoutMismatch(
            "video and text type embeddings are identical".to_string(),
        ));
    }
    let arr = MultiModalArrangement::new(kind, l_v, l_q);
    let seq = match kind {
        ArrangementKind::Left => Array::concat_rows(&[&qt, &vt])?,
        ArrangementKind::Right => Array::concat_rows(&[&vt, &qt])?,
        ArrangementKind::Both => Array::concat_rows(&[&qt, &vt, &qt])?,
        ArrangementKind::Middle => {
            let mid = l_v / 2;
            Array::concat_rows(&[&vt.slice_rows(0..mid), &qt, &vt.slice_rows(mid..l_v)])?
        }
    };
    debug_assert_eq!(seq.shape()[0], arr.total_len());
    Ok((seq, arr))
}

/// Pulls the video rows back out of a mixed sequence, in original order.
pub fn extract_video(seq_out: &Array, arr: &MultiModalArrangement) -> Result<Array> {
    if seq_out.ndim() != 2 || seq_out.shape()[0] != arr.total_len() {
        return Err(Error::LayoutMismatch(format!(
            "sequence {:?} does not match arrangement length {}",
            seq_out.shape(),
            arr.total_len()
        )));
    }
    let d = seq_out.shape()[1];
    let mut data = Vec::with_capacity(arr.l_v * d);
    for row in arr.video_indices() {
        for j in 0..d {
            data.push(seq_out.at(&[row, j]));
        }
    }
    Array::from_vec(vec![arr.l_v, d], data)
}
