use super::{undefined, MetricError};
use crate::raster::{dilate, pixel_counts, BinaryMask};

/// |pred ∩ gt| / |pred ∪ gt|. Errors when both masks are empty.
pub fn mask_iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64, MetricError> {
    let c = pixel_counts(pred, gt)?;
    if c.union == 0 {
        return Err(undefined("IoU of two empty masks"));
    }
    Ok(c.intersection as f64 / c.union as f64)
}

/// 2|pred ∩ gt| / (|pred| + |gt|). Errors when both masks are empty.
pub fn dice(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64, MetricError> {
    let c = pixel_counts(pred, gt)?;
    let denom = c.pred_area + c.gt_area;
    if denom == 0 {
        return Err(undefined("Dice of two empty masks"));
    }
    Ok((2 * c.intersection) as f64 / denom as f64)
}

/// `(intersection / |pred|, intersection / |gt|)`.
pub fn pixel_precision_recall(
    pred: &BinaryMask,
    gt: &BinaryMask,
) -> Result<(f64, f64), MetricError> {
    let c = pixel_counts(pred, gt)?;
    if c.pred_area == 0 {
        return Err(undefined("precision with an empty predicted mask"));
    }
    if c.gt_area == 0 {
        return Err(undefined("recall with an empty reference mask"));
    }
    Ok((
        c.intersection as f64 / c.pred_area as f64,
        c.intersection as f64 / c.gt_area as f64,
    ))
}

/// IoU after dilating both masks by `radius` (square element).
///
/// Only the window around the set pixels, grown by `radius` and clipped to
/// the image, is dilated; nothing outside it can become set.
pub fn relaxed_iou(pred: &BinaryMask, gt: &BinaryMask, radius: u32) -> Result<f64, MetricError> {
    pixel_counts(pred, gt)?;
    let bounds = match (pred.bounds(), gt.bounds()) {
        (None, None) => return Err(undefined("relaxed IoU of two empty masks")),
        (Some(a), None) | (None, Some(a)) => a,
        (Some(a), Some(b)) => (a.0.min(b.0), a.1.min(b.1), a.2.max(b.2), a.3.max(b.3)),
    };
    let r0 = bounds.0.saturating_sub(radius);
    let c0 = bounds.1.saturating_sub(radius);
    let r1 = bounds.2.saturating_add(radius).min(pred.height() - 1);
    let c1 = bounds.3.saturating_add(radius).min(pred.width() - 1);
    let p = dilate(&pred.crop(r0, c0, r1, c1), radius);
    let g = dilate(&gt.crop(r0, c0, r1, c1), radius);
    let c = pixel_counts(&p, &g)?;
    Ok(c.intersection as f64 / c.union as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn block(c0: u32, bw: u32) -> BinaryMask {
        BinaryMask::from_fn(8, 8, |r, c| r < 4 && c >= c0 && c < c0 + bw).unwrap()
    }

    #[test]
    fn shifted_block_iou_and_dice() {
        let (a, b) = (block(0, 4), block(2, 4));
        assert_eq!(mask_iou(&a, &b).unwrap(), 1.0 / 3.0);
        assert_eq!(dice(&a, &b).unwrap(), 0.5);
        assert_eq!(mask_iou(&a, &a).unwrap(), 1.0);
        assert_eq!(dice(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn disjoint_is_zero() {
        assert_eq!(mask_iou(&block(0, 2), &block(4, 2)).unwrap(), 0.0);
    }

    #[test]
    fn both_empty_is_undefined() {
        let e = BinaryMask::new(4, 4).unwrap();
        assert!(matches!(mask_iou(&e, &e), Err(MetricError::Undefined(_))));
        assert!(matches!(dice(&e, &e), Err(MetricError::Undefined(_))));
        assert!(matches!(
            relaxed_iou(&e, &e, 1),
            Err(MetricError::Undefined(_))
        ));
    }

    #[test]
    fn containment_precision_recall() {
        let gt = block(0, 4);
        let pred = block(0, 2);
        assert_eq!(pixel_precision_recall(&pred, &gt).unwrap(), (1.0, 0.5));
        assert_eq!(pixel_precision_recall(&gt, &pred).unwrap(), (0.5, 1.0));
        assert_eq!(pixel_precision_recall(&gt, &gt).unwrap(), (1.0, 1.0));
        let e = BinaryMask::new(8, 8).unwrap();
        assert!(pixel_precision_recall(&e, &gt).is_err());
        assert!(pixel_precision_recall(&gt, &e).is_err());
    }

    #[test]
    fn relaxed_on_a_line() {
        let a = BinaryMask::from_fn(5, 1, |_, c| c == 0).unwrap();
        let b = BinaryMask::from_fn(5, 1, |_, c| c == 2).unwrap();
        assert_eq!(relaxed_iou(&a, &b, 0).unwrap(), 0.0);
        assert_eq!(relaxed_iou(&a, &b, 1).unwrap(), 0.25);
    }

    #[test]
    fn relaxed_radius_zero_is_plain_iou() {
        let (a, b) = (block(1, 3), block(2, 5));
        assert_eq!(relaxed_iou(&a, &b, 0).unwrap(), mask_iou(&a, &b).unwrap());
    }
}
