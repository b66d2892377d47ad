//! Brute-force reference implementations shared by the integration tests.

#![allow(dead_code)]

use detprompt::dataset::Detection;
use detprompt::metrics::GtBox;
use detprompt::raster::{BBox, BinaryMask};
use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;

/// Random rectangles plus salt noise; sometimes empty.
pub fn random_mask<R: Rng>(rng: &mut R, w: u32, h: u32) -> BinaryMask {
    let mut m = BinaryMask::new(w, h).unwrap();
    if rng.random_bool(0.03) {
        return m;
    }
    for _ in 0..rng.random_range(1..=4) {
        let x0 = rng.random_range(0..w);
        let y0 = rng.random_range(0..h);
        let x1 = rng.random_range(x0..w.min(x0 + w / 2 + 1));
        let y1 = rng.random_range(y0..h.min(y0 + h / 2 + 1));
        for r in y0..=y1 {
            for c in x0..=x1 {
                m.set(r, c, true);
            }
        }
    }
    let noise = rng.random_range(0..(w * h / 16).max(1));
    for _ in 0..noise {
        let (r, c) = (rng.random_range(0..h), rng.random_range(0..w));
        m.set(r, c, true);
    }
    m
}

/// `(intersection, |pred|, |gt|, union)` by visiting every pixel.
pub fn oracle_counts(pred: &BinaryMask, gt: &BinaryMask) -> (u64, u64, u64, u64) {
    let (mut i, mut p, mut g, mut u) = (0, 0, 0, 0);
    for r in 0..pred.height() {
        for c in 0..pred.width() {
            let (a, b) = (pred.get(r, c), gt.get(r, c));
            i += (a && b) as u64;
            p += a as u64;
            g += b as u64;
            u += (a || b) as u64;
        }
    }
    (i, p, g, u)
}

/// A pixel is set iff some set pixel lies within Chebyshev distance `r`.
pub fn oracle_dilate(m: &BinaryMask, r: u32) -> BinaryMask {
    let (w, h) = (m.width() as i64, m.height() as i64);
    let r = r as i64;
    BinaryMask::from_fn(m.width(), m.height(), |row, col| {
        let (row, col) = (row as i64, col as i64);
        (row - r..=row + r).any(|y| {
            (col - r..=col + r)
                .any(|x| x >= 0 && y >= 0 && x < w && y < h && m.get(y as u32, x as u32))
        })
    })
    .unwrap()
}

/// Classic crossing-number test at point `(x, y)`.
pub fn pnpoly(v: &[(f64, f64)], x: f64, y: f64) -> bool {
    let mut inside = false;
    let mut j = v.len() - 1;
    for i in 0..v.len() {
        let (xi, yi) = v[i];
        let (xj, yj) = v[j];
        if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

pub fn ratio(n: u64, d: u64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).unwrap()
}

/// Intersection-over-union of two boxes in exact arithmetic.
pub fn box_iou_exact(a: &BBox, b: &BBox) -> BigRational {
    let zero = BigRational::from_integer(0.into());
    let iw = (exact(a.right().min(b.right())) - exact(a.x.max(b.x))).max(zero.clone());
    let ih = (exact(a.bottom().min(b.bottom())) - exact(a.y.max(b.y))).max(zero.clone());
    let inter = iw * ih;
    let union = exact(a.w) * exact(a.h) + exact(b.w) * exact(b.h) - &inter;
    if union == zero {
        zero
    } else {
        inter / union
    }
}

/// TP/FP flags of score-ranked detections at one IoU threshold, by
/// exhaustive search over the unmatched ground truth of each image.
fn ranked_flags(dets: &[Detection], gts: &[GtBox], percent: u64) -> Vec<bool> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .score
            .partial_cmp(&dets[a].score)
            .unwrap()
            .then(dets[a].image_id.cmp(&dets[b].image_id))
            .then(a.cmp(&b))
    });
    let threshold = ratio(percent, 100);
    let mut used = vec![false; gts.len()];
    order
        .into_iter()
        .map(|d| {
            let mut best: Option<(usize, BigRational)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if used[g] || gt.image_id != dets[d].image_id {
                    continue;
                }
                let iou = box_iou_exact(&dets[d].bbox, &gt.bbox);
                if iou < threshold {
                    continue;
                }
                let better = match &best {
                    None => true,
                    Some((b, biou)) => {
                        iou > *biou || (iou == *biou && gt.instance_id < gts[*b].instance_id)
                    }
                };
                if better {
                    best = Some((g, iou));
                }
            }
            if let Some((g, _)) = best {
                used[g] = true;
            }
            best.is_some()
        })
        .collect()
}

/// Interpolated precision at each of the 101 recall points, as exact ratios:
/// the best precision at any rank whose recall reaches the point.
fn envelope(flags: &[bool], n_gt: u64) -> Vec<Option<(u64, u64)>> {
    let mut tp = 0;
    let ranks: Vec<(u64, u64)> = flags
        .iter()
        .enumerate()
        .map(|(i, &f)| {
            tp += f as u64;
            (tp, i as u64 + 1)
        })
        .collect();
    (0..=100u64)
        .map(|k| {
            ranks
                .iter()
                .filter(|(tp, _)| 100 * tp >= k * n_gt)
                .copied()
                .max_by(|a, b| (a.0 * b.1).cmp(&(b.0 * a.1)))
        })
        .collect()
}

/// mAP over thresholds given in percent, summing per-threshold APs in the
/// same order the library does so the float result is comparable bit for bit.
pub fn oracle_map_f64(dets: &[Detection], gts: &[GtBox], percents: &[u64]) -> (f64, Vec<f64>) {
    let aps: Vec<f64> = percents
        .iter()
        .map(|&t| {
            let env = envelope(&ranked_flags(dets, gts, t), gts.len() as u64);
            let mut sum = 0.0;
            for p in env.into_iter().flatten() {
                sum += p.0 as f64 / p.1 as f64;
            }
            sum / 101.0
        })
        .collect();
    (aps.iter().sum::<f64>() / aps.len() as f64, aps)
}

/// mAP as an exact rational.
pub fn oracle_map_exact(dets: &[Detection], gts: &[GtBox], percents: &[u64]) -> BigRational {
    let mut total = ratio(0, 1);
    for &t in percents {
        let env = envelope(&ranked_flags(dets, gts, t), gts.len() as u64);
        for (tp, n) in env.into_iter().flatten() {
            total += ratio(tp, n);
        }
    }
    total / ratio(101 * percents.len() as u64, 1)
}
