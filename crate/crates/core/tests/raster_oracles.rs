mod common;

use common::{oracle_dilate, pnpoly};
use detprompt::raster::{
    dilate, mask_from_bbox, rasterize_polygon, rle_decode, rle_encode, BBox, BinaryMask, Polygon,
};
use proptest::prelude::*;

fn mask_strategy(max_w: u32, max_h: u32) -> impl Strategy<Value = BinaryMask> {
    (1..=max_w, 1..=max_h).prop_flat_map(|(w, h)| {
        (
            Just(w),
            Just(h),
            prop::collection::vec(prop::bool::weighted(0.3), (w * h) as usize),
        )
            .prop_map(|(w, h, bits)| {
                BinaryMask::from_vec(w, h, bits.into_iter().map(u8::from).collect()).unwrap()
            })
    })
}

/// Coordinates on a quarter-pixel lattice hit pixel centers and edges often.
fn coord(max: u32) -> impl Strategy<Value = f64> {
    (0..=(max * 4)).prop_map(|q| q as f64 / 4.0)
}

fn polygon_strategy(w: u32, h: u32) -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((coord(w + 3), coord(h + 3)), 3..9)
}

fn brute_force_raster(v: &[(f64, f64)], w: u32, h: u32) -> BinaryMask {
    BinaryMask::from_fn(w, h, |r, c| pnpoly(v, c as f64 + 0.5, r as f64 + 0.5)).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(400))]

    #[test]
    fn polygon_raster_matches_point_in_polygon(v in polygon_strategy(12, 10)) {
        let poly = Polygon::new(v.clone()).unwrap();
        prop_assert_eq!(rasterize_polygon(&poly, 12, 10).unwrap(), brute_force_raster(&v, 12, 10));
    }

    #[test]
    fn polygon_raster_matches_on_irrational_coordinates(
        v in prop::collection::vec((0.0f64..15.0, 0.0f64..13.0), 3..10)
    ) {
        let poly = Polygon::new(v.clone()).unwrap();
        prop_assert_eq!(rasterize_polygon(&poly, 12, 10).unwrap(), brute_force_raster(&v, 12, 10));
    }

    #[test]
    fn bbox_mask_is_center_membership(x in coord(10), y in coord(8), w in coord(8), h in coord(8)) {
        prop_assume!(w > 0.0 && h > 0.0);
        let b = BBox::new(x, y, w, h).unwrap();
        let expected = BinaryMask::from_fn(9, 7, |r, c| {
            let (cx, cy) = (c as f64 + 0.5, r as f64 + 0.5);
            cx >= x && cx < x + w && cy >= y && cy < y + h
        }).unwrap();
        prop_assert_eq!(mask_from_bbox(&b, 9, 7).unwrap(), expected);
    }

    #[test]
    fn rle_round_trip(m in mask_strategy(20, 20)) {
        let rle = rle_encode(&m);
        prop_assert_eq!(rle.counts.iter().map(|&c| c as u64).sum::<u64>(), m.width() as u64 * m.height() as u64);
        prop_assert!(rle.counts.iter().skip(1).all(|&c| c > 0));
        prop_assert_eq!(rle_decode(&rle).unwrap(), m);
    }

    #[test]
    fn dilation_matches_brute_force(m in mask_strategy(16, 16), r in 0u32..6) {
        prop_assert_eq!(dilate(&m, r), oracle_dilate(&m, r));
    }

    #[test]
    fn dilation_is_a_semigroup(m in mask_strategy(16, 16), a in 0u32..4, b in 0u32..4) {
        prop_assert_eq!(dilate(&dilate(&m, a), b), dilate(&m, a + b));
    }

    #[test]
    fn dilation_is_extensive_and_monotone(m in mask_strategy(16, 16), r in 0u32..4) {
        let d = dilate(&m, r);
        let d1 = dilate(&m, r + 1);
        for (i, &v) in m.data().iter().enumerate() {
            prop_assert!(v <= d.data()[i]);
            prop_assert!(d.data()[i] <= d1.data()[i]);
        }
    }
}

#[test]
fn rle_of_shipped_example() {
    // 3x2 mask, column-major: col0 = [0, 1, 1], col1 = [1, 0, 0].
    let m = BinaryMask::from_vec(2, 3, vec![0, 1, 1, 0, 1, 0]).unwrap();
    let rle = rle_encode(&m);
    assert_eq!(rle.counts, [1, 3, 2]);
    assert_eq!(rle_decode(&rle).unwrap(), m);
}
