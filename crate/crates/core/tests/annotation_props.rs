use occbench_core::annotation::{bin_of, occlusion_level, PartId, PartVisibility, PartWeightTable};
use occbench_core::raster::MaskCell;
use occbench_core::synthesis::{
    achieved_occlusion, composite, uniform_figure, AnnotationContext, OccluderAsset, OccluderCategory, Placement,
};
use occbench_core::ClassLabel;
use proptest::prelude::*;

fn fractions() -> impl Strategy<Value = [f64; 6]> {
    proptest::array::uniform6(0.0..=1.0f64)
}

fn parts(f: [f64; 6]) -> Vec<PartVisibility> {
    PartId::ALL
        .iter()
        .map(|&part| PartVisibility {
            part,
            visible_fraction: f[part.index()],
        })
        .collect()
}

proptest! {
    #[test]
    fn level_is_in_range_and_monotone(f in fractions(), i in 0usize..6, bump in 0.0..1.0f64) {
        let w = PartWeightTable::toolkit_default();
        let a = occlusion_level(&parts(f), &w).unwrap();
        prop_assert!((0.0..=100.0).contains(&a));
        let mut g = f;
        g[i] = (g[i] + bump).min(1.0);
        let b = occlusion_level(&parts(g), &w).unwrap();
        prop_assert!(b <= a + 1e-9);
    }

    #[test]
    fn bin_contains_its_level(pct in 0.0..=100.0f64) {
        let b = bin_of(pct).unwrap();
        prop_assert!(b.contains(pct));
        prop_assert!(b.index() <= 9);
    }

    #[test]
    fn mask_cell_encoding_round_trips(byte in any::<u8>()) {
        let c = MaskCell::decode(byte);
        prop_assert_eq!(MaskCell::decode(c.encode()), c);
    }

    /// Rectangle occluders over the uniform figure: the level must equal the
    /// weighted covered area computed directly from rectangle intersections.
    #[test]
    fn figure_level_matches_rectangle_oracle(
        ox in -60i64..80, oy in -60i64..140, ow in 1u32..70, oh in 1u32..90,
    ) {
        let w = PartWeightTable::toolkit_default();
        let base = uniform_figure("f", ClassLabel::OtherVru, &w, 1, 10).unwrap();
        let occ = OccluderAsset::rectangle("r", OccluderCategory::Other, ow, oh, [0, 0, 0]).unwrap();
        let p = Placement { x: ox, y: oy, scale: 1.0 };
        let Ok(c) = composite(&base, &occ, p) else { return Ok(()) };
        let got = achieved_occlusion(&c, &AnnotationContext::default()).unwrap();

        let mut want = 0.0;
        for part in PartId::ALL {
            let mut area = 0i64;
            let mut covered = 0i64;
            let (mut x0, mut y0, mut x1, mut y1) = (i64::MAX, i64::MAX, i64::MIN, i64::MIN);
            for y in 0..base.map.height() {
                for x in 0..base.map.width() {
                    if base.map.get(x, y).part() == Some(part) {
                        area += 1;
                        x0 = x0.min(x as i64);
                        y0 = y0.min(y as i64);
                        x1 = x1.max(x as i64 + 1);
                        y1 = y1.max(y as i64 + 1);
                    }
                }
            }
            prop_assert_eq!(area, (x1 - x0) * (y1 - y0));
            let ix = (x1.min(ox + ow as i64) - x0.max(ox)).max(0);
            let iy = (y1.min(oy + oh as i64) - y0.max(oy)).max(0);
            covered += ix * iy;
            want += w.weight(part) * covered as f64 / area as f64;
        }
        prop_assert!((got - want).abs() < 1e-9, "got {got} want {want}");
    }
}
