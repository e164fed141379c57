mod common;

use occbench::manifest_io::{manifest_digest, parse_manifest, serialize_manifest};
use occbench::report::stats_report;
use occbench_core::annotation::{bin_of, Keypoint, Visibility};
use occbench_core::geometry::BBox;
use occbench_core::model::{manifest_stats, ClassLabel, DatasetManifest, GroundTruthInstance, ImageRef, ManifestError};
use occbench_core::OcclusionBin;
use proptest::prelude::*;
use serde_json::json;

fn instance(id: &str, pct: f64, bin: u8) -> serde_json::Value {
    json!({
        "id": id,
        "image": {"path": format!("{id}.png"), "width": 100, "height": 100},
        "bbox": [10.0, 10.0, 20.0, 50.0],
        "label": "escooter_rider",
        "keypoints": [],
        "occlusion_pct": pct,
        "occlusion_bin": bin,
        "provenance": "hand-made"
    })
}

fn doc(instances: Vec<serde_json::Value>) -> Vec<u8> {
    serde_json::to_vec(&json!({"version": "1.0", "instances": instances})).unwrap()
}

#[test]
fn accepts_boundary_percentages() {
    let m = parse_manifest(&doc(vec![instance("a", 0.0, 0), instance("b", 95.0, 9)])).unwrap();
    assert_eq!(m.instances.len(), 2);
    assert_eq!(m.instances[1].bin(), OcclusionBin::new(9));
}

#[test]
fn rejects_full_occlusion() {
    let e = parse_manifest(&doc(vec![instance("a", 100.0, 9)])).unwrap_err();
    assert!(matches!(e, ManifestError::OutOfRangeOcclusion { .. }), "{e:?}");
    let e = parse_manifest(&doc(vec![instance("a", -0.5, 0)])).unwrap_err();
    assert!(matches!(e, ManifestError::OutOfRangeOcclusion { .. }), "{e:?}");
}

#[test]
fn rejects_bin_mismatch_and_duplicates() {
    let e = parse_manifest(&doc(vec![instance("a", 15.0, 2)])).unwrap_err();
    assert_eq!(
        e,
        ManifestError::BinMismatch {
            id: "a".into(),
            stored: 2,
            expected: 1,
            pct: 15.0
        }
    );
    let e = parse_manifest(&doc(vec![instance("a", 1.0, 0), instance("a", 2.0, 0)])).unwrap_err();
    assert_eq!(e, ManifestError::DuplicateId("a".into()));
}

#[test]
fn rejects_malformed_documents() {
    for bad in [
        &b"{"[..],
        b"[]",
        b"{\"version\": \"1.0\"}",
        b"{\"version\":\"1.0\",\"instances\":[],\"extra\":1}",
    ] {
        assert!(matches!(parse_manifest(bad), Err(ManifestError::MalformedDocument(_))));
    }
    let mut inst = instance("a", 1.0, 0);
    inst["bbox"] = json!([0.0, 0.0, 0.0, 5.0]);
    assert!(matches!(
        parse_manifest(&doc(vec![inst])),
        Err(ManifestError::MalformedDocument(_))
    ));
    let mut inst = instance("a", 1.0, 0);
    inst["bbox"] = json!([500.0, 0.0, 10.0, 5.0]);
    assert!(matches!(
        parse_manifest(&doc(vec![inst])),
        Err(ManifestError::InvalidInstance { .. })
    ));
}

#[test]
fn stats_examples() {
    let empty = DatasetManifest::new(vec![]);
    let s = manifest_stats(&empty);
    assert_eq!(s.total, 0);
    assert!(OcclusionBin::all().all(|b| s.bin_total(b) == 0));

    let m = parse_manifest(&doc(vec![
        instance("a", 5.0, 0),
        instance("b", 15.0, 1),
        instance("c", 15.0, 1),
    ]))
    .unwrap();
    let s = manifest_stats(&m);
    assert_eq!(s.bin_total(OcclusionBin::new(0).unwrap()), 1);
    assert_eq!(s.bin_total(OcclusionBin::new(1).unwrap()), 2);
}

#[test]
fn reference_manifest_has_expected_composition() {
    let bytes = std::fs::read(common::fixture("reference_manifest.json")).unwrap();
    let m = parse_manifest(&bytes).unwrap();
    let r = stats_report(&m, "");
    assert_eq!(r.total, 1130);
    assert_eq!(r.escooter_rider, 543);
    assert_eq!(r.other_vru, 587);
}

fn arb_instance(i: usize) -> impl Strategy<Value = GroundTruthInstance> {
    (
        (1u32..400, 1u32..400),
        (0.0..1.0f64, 0.0..1.0f64, 0.01..1.0f64, 0.01..1.0f64),
        0.0..100.0f64,
        any::<bool>(),
        proptest::collection::vec((0.0..1.0f64, 0.0..1.0f64, 0u8..3), 0..4),
        any::<bool>(),
    )
        .prop_map(move |((w, h), (fx, fy, fw, fh), pct, rider, kps, manual)| {
            let (wf, hf) = (w as f64, h as f64);
            GroundTruthInstance {
                id: format!("i{i}"),
                image: ImageRef {
                    path: format!("img{i}.png"),
                    width: w,
                    height: h,
                },
                bbox: BBox::new(fx * wf * 0.9, fy * hf * 0.9, fw * wf, fh * hf).unwrap(),
                label: if rider {
                    ClassLabel::EscooterRider
                } else {
                    ClassLabel::OtherVru
                },
                keypoints: kps
                    .into_iter()
                    .map(|(x, y, v)| Keypoint::new(x * wf, y * hf, Visibility::from_code(v).unwrap()))
                    .collect(),
                mask_path: None,
                occlusion_pct: pct,
                occlusion_bin: bin_of(pct).unwrap().index() as u8,
                provenance: "generated".into(),
                manual_override: manual,
                synthesis: None,
            }
        })
}

fn arb_manifest() -> impl Strategy<Value = DatasetManifest> {
    (0usize..8)
        .prop_flat_map(|n| (0..n).map(arb_instance).collect::<Vec<_>>())
        .prop_map(DatasetManifest::new)
}

proptest! {
    #[test]
    fn serialize_then_parse_is_identity(m in arb_manifest()) {
        let bytes = serialize_manifest(&m);
        let back = parse_manifest(&bytes).unwrap();
        prop_assert_eq!(&back, &m);
        prop_assert_eq!(serialize_manifest(&back), bytes);
        prop_assert_eq!(manifest_digest(&back), manifest_digest(&m));
    }

    #[test]
    fn stats_partition_the_instances(m in arb_manifest()) {
        let s = manifest_stats(&m);
        prop_assert_eq!(s.total, m.instances.len() as u64);
        let by_bin: u64 = OcclusionBin::all().map(|b| s.bin_total(b)).sum();
        let by_class = s.class_total(ClassLabel::EscooterRider) + s.class_total(ClassLabel::OtherVru);
        prop_assert_eq!(by_bin, s.total);
        prop_assert_eq!(by_class, s.total);
    }

    /// Whatever the parser accepts satisfies the instance invariants.
    #[test]
    fn accepted_documents_hold_invariants(
        pct in -10.0..110.0f64,
        bin in 0u8..12,
        bx in -50.0..150.0f64,
        bw in -5.0..80.0f64,
        dup in any::<bool>(),
    ) {
        let mut a = instance("a", pct, bin);
        a["bbox"] = json!([bx, 10.0, bw, 20.0]);
        let b = instance(if dup { "a" } else { "b" }, 5.0, 0);
        if let Ok(m) = parse_manifest(&doc(vec![a, b])) {
            let mut ids = std::collections::BTreeSet::new();
            for inst in &m.instances {
                prop_assert!(ids.insert(inst.id.clone()));
                prop_assert!((0.0..100.0).contains(&inst.occlusion_pct));
                prop_assert_eq!(inst.occlusion_bin as f64, (inst.occlusion_pct / 10.0).floor());
                prop_assert!(inst.bbox.w() > 0.0 && inst.bbox.h() > 0.0);
                prop_assert!(occbench_core::clip_to_image(inst.bbox, 100.0, 100.0).is_ok());
            }
        }
    }
}
