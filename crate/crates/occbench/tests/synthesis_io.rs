mod common;

use std::path::Path;

use occbench::annotate::{annotate_manifest, is_flagged, RowStatus};
use occbench::error::ToolError;
use occbench::manifest_io::{load_manifest, write_output};
use occbench::pixels::{read_instance_map, read_rgba, write_instance_map, write_rgba};
use occbench::synth::{load_bases, load_occluders, synthesize_from_plan, PlanDocument};
use occbench_core::annotation::bin_of;
use occbench_core::synthesis::{achieved_occlusion, composite, uniform_figure, AnnotationContext};
use occbench_core::ClassLabel;

fn files_under(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["images", "masks"] {
        let mut names: Vec<_> = std::fs::read_dir(dir.join(sub))
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        names.sort();
        for p in names {
            out.push((p.display().to_string(), std::fs::read(&p).unwrap()));
        }
    }
    out.push(("manifest".into(), std::fs::read(dir.join("manifest.json")).unwrap()));
    out
}

#[test]
fn synthesized_dataset_meets_quotas_and_reannotates_without_drift() {
    let dir = tempfile::tempdir().unwrap();
    let quotas = [2, 1, 1, 2, 1, 1, 1, 2, 1, 1];
    let (m, path) = common::synth_dataset(dir.path(), quotas, 42);
    for (b, &q) in quotas.iter().enumerate() {
        assert_eq!(
            m.instances.iter().filter(|i| i.occlusion_bin as usize == b).count(),
            q as usize
        );
    }
    let gen = m.generator.as_ref().unwrap();
    assert_eq!(gen.config_hash, "test");

    let (loaded, base) = load_manifest(&path).unwrap();
    assert_eq!(loaded, m);
    let (updated, rows) = annotate_manifest(&loaded, &base, &AnnotationContext::default(), 0.5).unwrap();
    assert!(rows
        .iter()
        .all(|r| r.status == RowStatus::Consistent && r.gap_pp == Some(0.0)));
    assert_eq!(updated, loaded);
}

#[test]
fn same_seed_gives_identical_files_and_other_seeds_differ() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    common::synth_dataset(a.path(), [1; 10], 7);
    common::synth_dataset(b.path(), [1; 10], 7);
    common::synth_dataset(c.path(), [1; 10], 8);
    let strip = |v: Vec<(String, Vec<u8>)>, root: &Path| {
        let prefix = root.display().to_string();
        v.into_iter()
            .map(|(n, d)| (n.replace(&prefix, ""), d))
            .collect::<Vec<_>>()
    };
    let fa = strip(files_under(&a.path().join("data")), a.path());
    let fb = strip(files_under(&b.path().join("data")), b.path());
    let fc = strip(files_under(&c.path().join("data")), c.path());
    assert_eq!(fa, fb);
    assert_ne!(fa, fc);
}

#[test]
fn stored_placement_reproduces_the_level() {
    let dir = tempfile::tempdir().unwrap();
    let (m, _) = common::synth_dataset(dir.path(), [1; 10], 99);
    let doc = PlanDocument::parse(common::plan_json([1; 10], 99).as_bytes()).unwrap();
    let ctx = AnnotationContext::default();
    let bases = load_bases(&doc, dir.path(), &ctx).unwrap();
    let occluders = load_occluders(&doc, dir.path()).unwrap();
    for inst in &m.instances {
        let rec = inst.synthesis.as_ref().unwrap();
        let base = bases.iter().find(|b| b.id == rec.base_id).unwrap();
        let occ = occluders
            .iter()
            .find(|o| Some(o.id()) == rec.occluder_id.as_deref())
            .unwrap();
        let composed = composite(base, occ, rec.placement.unwrap()).unwrap();
        let pct = achieved_occlusion(&composed, &ctx).unwrap();
        assert!(
            (pct - inst.occlusion_pct).abs() <= 0.1,
            "{}: {pct} vs {}",
            inst.id,
            inst.occlusion_pct
        );
        assert_eq!(bin_of(pct).unwrap().index() as u8, rec.target_bin);
        assert_eq!(inst.label, base.label);
    }
}

#[test]
fn tampered_level_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let (mut m, path) = common::synth_dataset(dir.path(), [1, 0, 0, 0, 1, 0, 0, 0, 0, 0], 5);
    let target = m.instances.iter().position(|i| i.occlusion_bin == 4).unwrap();
    let true_pct = m.instances[target].occlusion_pct;
    m.instances[target].occlusion_pct = 10.0;
    m.instances[target].occlusion_bin = 1;
    let base = path.parent().unwrap();
    let (updated, rows) = annotate_manifest(&m, base, &AnnotationContext::default(), 0.5).unwrap();
    let flagged: Vec<_> = rows.iter().filter(|r| is_flagged(r)).collect();
    assert_eq!(flagged.len(), 1);
    assert_eq!(flagged[0].status, RowStatus::Drift);
    assert!((flagged[0].gap_pp.unwrap() - (true_pct - 10.0).abs()).abs() < 1e-9);
    assert_eq!(updated.instances[target].occlusion_pct, true_pct);
    assert_eq!(updated.instances[target].occlusion_bin, 4);

    m.instances[target].manual_override = true;
    let (kept, rows) = annotate_manifest(&m, base, &AnnotationContext::default(), 0.5).unwrap();
    assert_eq!(rows[target].status, RowStatus::ManualOverride);
    assert_eq!(kept.instances[target].occlusion_pct, 10.0);
}

#[test]
fn plan_without_occluders_fills_bin_zero_only() {
    let dir = tempfile::tempdir().unwrap();
    let plan = serde_json::json!({
        "quotas": [3, 0, 0, 0, 0, 0, 0, 0, 0, 0],
        "seed": 1,
        "bases": [{"kind": "uniform_figure", "id": "rider", "label": "escooter_rider"}]
    });
    let ppath = dir.path().join("plan.json");
    write_output(&ppath, plan.to_string().as_bytes()).unwrap();
    let m = synthesize_from_plan(&ppath, &dir.path().join("out"), &AnnotationContext::default(), "h").unwrap();
    assert_eq!(m.instances.len(), 3);
    assert!(m
        .instances
        .iter()
        .all(|i| i.occlusion_pct == 0.0 && i.synthesis.as_ref().unwrap().occluder_id.is_none()));

    let plan = serde_json::json!({
        "quotas": [1, 0, 0, 0, 0, 2, 0, 0, 0, 0],
        "seed": 1,
        "bases": [{"kind": "uniform_figure", "id": "rider", "label": "escooter_rider"}]
    });
    write_output(&ppath, plan.to_string().as_bytes()).unwrap();
    let err = synthesize_from_plan(&ppath, &dir.path().join("out2"), &AnnotationContext::default(), "h").unwrap_err();
    assert!(
        matches!(
            err,
            ToolError::Validation {
                kind: "quota_unmet",
                ..
            }
        ),
        "{err}"
    );
    assert!(err.to_string().contains("bin 5 produced 0/2"), "{err}");
    assert!(!dir.path().join("out2/manifest.json").exists());
}

#[test]
fn image_base_with_part_mask_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = AnnotationContext::default();
    let fig = uniform_figure("f", ClassLabel::EscooterRider, &ctx.weights, 1, 20).unwrap();
    write_rgba(&dir.path().join("base.png"), &fig.image).unwrap();
    write_instance_map(&dir.path().join("base-mask.png"), &fig.map).unwrap();
    assert_eq!(read_rgba(&dir.path().join("base.png")).unwrap(), fig.image);
    assert_eq!(read_instance_map(&dir.path().join("base-mask.png")).unwrap(), fig.map);

    let plan = serde_json::json!({
        "quotas": [0, 0, 0, 1, 0, 0, 1, 0, 0, 0],
        "seed": 3,
        "bases": [{"kind": "image", "id": "photo", "label": "escooter_rider", "image": "base.png",
                   "mask": "base-mask.png", "keypoints": fig.keypoints}],
        "occluders": [{"kind": "rectangle", "id": "box", "category": "vehicle", "width": 40, "height": 40, "color": [0, 0, 0]}]
    });
    let ppath = dir.path().join("plan.json");
    write_output(&ppath, plan.to_string().as_bytes()).unwrap();
    let m = synthesize_from_plan(&ppath, &dir.path().join("out"), &ctx, "h").unwrap();
    assert_eq!(
        m.instances.iter().map(|i| i.occlusion_bin).collect::<Vec<_>>(),
        vec![3, 6]
    );
    let (_, rows) = annotate_manifest(&m, &dir.path().join("out"), &ctx, 0.5).unwrap();
    assert!(rows.iter().all(|r| r.status == RowStatus::Consistent));
}
