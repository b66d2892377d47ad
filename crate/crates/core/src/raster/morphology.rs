use super::BinaryMask;

/// Binary dilation with a `(2r+1) x (2r+1)` square structuring element.
///
/// An output pixel is set iff some input pixel within Chebyshev distance
/// `radius` is set. The square element is separable, so this runs as a
/// horizontal pass followed by a vertical pass, each linear in the pixel
/// count regardless of radius. The image border truncates the element.
pub fn dilate(mask: &BinaryMask, radius: u32) -> BinaryMask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let r = radius as usize;
    let src = mask.data();

    let mut horiz = vec![0u8; w * h];
    let mut prefix = vec![0u32; w.max(h) + 1];
    for row in 0..h {
        let line = &src[row * w..(row + 1) * w];
        window_any(line.iter().copied(), w, r, &mut prefix, |c, v| {
            horiz[row * w + c] = v
        });
    }

    let mut out = vec![0u8; w * h];
    for col in 0..w {
        let column = (0..h).map(|row| horiz[row * w + col]);
        window_any(column, h, r, &mut prefix, |row, v| out[row * w + col] = v);
    }
    BinaryMask::from_vec(mask.width(), mask.height(), out).expect("dilation preserves shape")
}

/// For a 1-D line of length `n`, reports whether any element in `[i-r, i+r]` is set.
fn window_any(
    line: impl Iterator<Item = u8>,
    n: usize,
    r: usize,
    prefix: &mut [u32],
    mut emit: impl FnMut(usize, u8),
) {
    prefix[0] = 0;
    for (i, v) in line.enumerate() {
        prefix[i + 1] = prefix[i] + v as u32;
    }
    for i in 0..n {
        let lo = i.saturating_sub(r);
        let hi = (i + r + 1).min(n);
        emit(i, (prefix[hi] > prefix[lo]) as u8);
    }
}
