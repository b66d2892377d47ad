use super::{BBox, BinaryMask, Polygon, RasterError};

/// Scanline fill with pixel-center sampling and the even-odd rule.
///
/// Pixel `(i, j)` is set iff `(j + 0.5, i + 0.5)` is inside the polygon. Edge
/// crossings use the half-open test `(y0 > y) != (y1 > y)`, so a center is
/// inside iff it lies in `[x_{2k-1}, x_{2k})` for the sorted crossings of its
/// scanline.
pub fn rasterize_polygon(
    poly: &Polygon,
    width: u32,
    height: u32,
) -> Result<BinaryMask, RasterError> {
    let mut mask = BinaryMask::new(width, height)?;
    fill_polygon(&mut mask, poly);
    Ok(mask)
}

/// Rasterizes every ring independently and ORs the results.
pub fn rasterize_polygons(
    polys: &[Polygon],
    width: u32,
    height: u32,
) -> Result<BinaryMask, RasterError> {
    let mut mask = BinaryMask::new(width, height)?;
    if polys.len() == 1 {
        fill_polygon(&mut mask, &polys[0]);
        return Ok(mask);
    }
    for poly in polys {
        let mut ring = BinaryMask::new(width, height)?;
        fill_polygon(&mut ring, poly);
        mask.union_with(&ring)?;
    }
    Ok(mask)
}

fn fill_polygon(mask: &mut BinaryMask, poly: &Polygon) {
    let verts = poly.vertices();
    let n = verts.len();
    let mut crossings: Vec<f64> = Vec::with_capacity(n);
    for row in 0..mask.height() {
        let y = row as f64 + 0.5;
        crossings.clear();
        for i in 0..n {
            let (xi, yi) = verts[i];
            let (xj, yj) = verts[(i + n - 1) % n];
            if (yi > y) != (yj > y) {
                crossings.push((xj - xi) * (y - yi) / (yj - yi) + xi);
            }
        }
        crossings.sort_by(f64::total_cmp);
        for span in crossings.chunks_exact(2) {
            fill_span(mask, row, span[0], span[1]);
        }
    }
}

/// Sets pixels of `row` whose centers satisfy `lo <= c < hi`.
fn fill_span(mask: &mut BinaryMask, row: u32, lo: f64, hi: f64) {
    let width = mask.width() as i64;
    let mut col = ((lo - 0.5).ceil() as i64).clamp(0, width);
    while col > 0 && (col - 1) as f64 + 0.5 >= lo {
        col -= 1;
    }
    while col < width && (col as f64 + 0.5) < lo {
        col += 1;
    }
    while col < width && (col as f64 + 0.5) < hi {
        mask.set(row, col as u32, true);
        col += 1;
    }
}

/// Pixels whose centers fall in `[x, x+w) x [y, y+h)`, clipped to the image.
///
/// Same convention as rasterizing the box outline as a polygon.
pub fn mask_from_bbox(bbox: &BBox, width: u32, height: u32) -> Result<BinaryMask, RasterError> {
    let mut mask = BinaryMask::new(width, height)?;
    for row in 0..height {
        let y = row as f64 + 0.5;
        if y >= bbox.y && y < bbox.bottom() {
            fill_span(&mut mask, row, bbox.x, bbox.right());
        }
    }
    Ok(mask)
}
