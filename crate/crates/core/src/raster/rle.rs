use serde::{Deserialize, Serialize};

use super::{BinaryMask, RasterError};

/// Uncompressed run-length mask in the COCO layout.
///
/// Runs alternate 0s and 1s over the column-major traversal, starting with a
/// (possibly empty) run of 0s.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    pub height: u32,
    pub width: u32,
    pub counts: Vec<u32>,
}

pub fn rle_encode(mask: &BinaryMask) -> RleMask {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let data = mask.data();
    let mut counts = Vec::new();
    let mut current = 0u8;
    let mut run = 0u32;
    for col in 0..w {
        for row in 0..h {
            let v = data[row * w + col];
            if v != current {
                counts.push(run);
                run = 0;
                current = v;
            }
            run += 1;
        }
    }
    counts.push(run);
    RleMask {
        height: mask.height(),
        width: mask.width(),
        counts,
    }
}

pub fn rle_decode(rle: &RleMask) -> Result<BinaryMask, RasterError> {
    let (w, h) = (rle.width as usize, rle.height as usize);
    let total: u64 = rle.counts.iter().map(|&c| c as u64).sum();
    if total != (w * h) as u64 {
        return Err(RasterError::MalformedRle(format!(
            "counts sum to {total}, expected {h}x{w} = {}",
            w * h
        )));
    }
    let mut mask = BinaryMask::new(rle.width, rle.height)
        .map_err(|e| RasterError::MalformedRle(e.to_string()))?;
    let mut pos = 0usize;
    for (i, &count) in rle.counts.iter().enumerate() {
        let count = count as usize;
        if i % 2 == 1 {
            for p in pos..pos + count {
                mask.set((p % h) as u32, (p / h) as u32, true);
            }
        }
        pos += count;
    }
    Ok(mask)
}
