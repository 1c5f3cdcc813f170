use csipred_autograd::Tensor;

use crate::chansim::Split;
use crate::error::{Error, Result};

/// Frame geometry of a split: `x` rows hold `n_past` frames, `y` rows
/// `n_future` frames, each of `2 * h * w` values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub n_past: usize,
    pub n_future: usize,
    pub h: usize,
    pub w: usize,
}

impl Geometry {
    pub fn frame_len(&self) -> usize {
        2 * self.h * self.w
    }
}

/// Stacks frames `[first, first + count)` of each selected row into
/// `[B, count, 2, h, w]`.
pub fn gather_frames(
    data: &[f32],
    frames_per_row: usize,
    g: Geometry,
    rows: &[usize],
    first: usize,
    count: usize,
) -> Result<Tensor<f32>> {
    if first + count > frames_per_row {
        return Err(Error::Input(format!(
            "frames {first}..{} out of range for rows of {frames_per_row} frames",
            first + count
        )));
    }
    let f = g.frame_len();
    let mut out = Vec::with_capacity(rows.len() * count * f);
    for &r in rows {
        let base = (r * frames_per_row + first) * f;
        let slice = data
            .get(base..base + count * f)
            .ok_or_else(|| Error::Input(format!("row {r} out of range")))?;
        out.extend_from_slice(slice);
    }
    Ok(Tensor::new(vec![rows.len(), count, 2, g.h, g.w], out)?)
}

/// The last `n` context frames of each row.
pub fn context_batch(split: &Split, g: Geometry, rows: &[usize], n: usize) -> Result<Tensor<f32>> {
    if n == 0 || n > g.n_past {
        return Err(Error::Input(format!("context length {n} not in [1, {}]", g.n_past)));
    }
    gather_frames(&split.x, g.n_past, g, rows, g.n_past - n, n)
}

/// The first `n` future frames of each row.
pub fn target_batch(split: &Split, g: Geometry, rows: &[usize], n: usize) -> Result<Tensor<f32>> {
    gather_frames(&split.y, g.n_future, g, rows, 0, n)
}
