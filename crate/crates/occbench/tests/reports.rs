use proptest::prelude::*;

use occbench::report::{
    comparison_csv, comparison_report, fp_counts_csv, metrics_csv, parse_fp_counts_csv, parse_metrics_csv, series_csv,
    SERIES,
};
use occbench_core::evaluation::{
    fp_count_by_run, BinCounts, BinMetricsTable, FpCounts, RunDescriptor, FP_BIN_RULE, TN_RULE,
};
use occbench_core::model::ConfusionCounts;

fn descriptor(label: &str, digest: &str) -> RunDescriptor {
    RunDescriptor {
        label: label.into(),
        toolkit_version: "occbench 0.1.0".into(),
        manifest_digest: digest.into(),
        config_hash: "abc123".into(),
        pipeline_mode: "occlusion_aware".into(),
        detector: "oracle-detector drop=0 jitter=0 seed=0".into(),
        classifier: "always-rider 1".into(),
        iou_threshold: 0.5,
        tn_rule: TN_RULE.into(),
        fp_bin_rule: FP_BIN_RULE.into(),
    }
}

fn table(label: &str, counts: [ConfusionCounts; 10]) -> BinMetricsTable {
    BinMetricsTable::from_counts(descriptor(label, "d1"), &BinCounts(counts))
}

fn counts_strategy() -> impl Strategy<Value = [ConfusionCounts; 10]> {
    prop::array::uniform10(
        (0u64..200, 0u64..200, 0u64..200, 0u64..200).prop_map(|(a, b, c, d)| ConfusionCounts::new(a, b, c, d)),
    )
}

proptest! {
    #[test]
    fn metrics_csv_round_trips(counts in counts_strategy(), label in "[a-z][a-z0-9_-]{0,12}") {
        let t = table(&label, counts);
        let text = metrics_csv(&t);
        prop_assert_eq!(parse_metrics_csv(&text).unwrap(), t);
    }

    #[test]
    fn fp_counts_csv_round_trips(a in counts_strategy(), b in counts_strategy()) {
        let ta = table("a", a);
        let tb = table("b", b);
        let fp = fp_count_by_run(&[ta.clone(), tb.clone()]);
        prop_assert_eq!(fp[0].total, a.iter().map(|c| c.fp).sum::<u64>());
        let text = fp_counts_csv(&fp, &[&ta, &tb]);
        prop_assert_eq!(parse_fp_counts_csv(&text).unwrap(), fp);
    }

    #[test]
    fn comparing_a_run_with_itself_gives_zero_deltas(counts in counts_strategy()) {
        let a = table("a", counts);
        let b = table("b", counts);
        let rep = comparison_report(&a, &b).unwrap();
        for d in &rep.comparison.per_bin {
            prop_assert!(d.accuracy_pp.is_none_or(|v| v == 0.0));
            prop_assert_eq!(d.fp_delta, 0);
        }
        let csv = comparison_csv(&rep, &a, &b);
        for line in csv.lines().filter(|l| !l.starts_with('#')).skip(1) {
            let cells: Vec<&str> = line.split(',').collect();
            prop_assert!(cells[3].is_empty() || cells[3] == "0.00" || cells[3] == "-0.00", "{}", line);
            prop_assert!(cells[9].is_empty() || cells[9] == "false");
        }
    }
}

#[test]
fn metrics_csv_layout() {
    let mut counts = [ConfusionCounts::default(); 10];
    counts[0] = ConfusionCounts::new(2, 1, 0, 1);
    counts[9] = ConfusionCounts::new(0, 3, 1, 0);
    let text = metrics_csv(&table("aware", counts));
    let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "bin,tp,tn,fp,fn,accuracy,tp_rate,fn_rate");
    assert_eq!(body[1], "0-9%,2,1,0,1,0.750,0.667,0.333");
    assert_eq!(body[2], "10-19%,0,0,0,0,,,");
    assert_eq!(body[10], "90-99%,0,3,1,0,0.750,,");
    assert_eq!(body[11], "overall,2,4,1,1,0.750,0.667,0.333");
    assert!(text.contains("# config_hash: abc123\n"));
    assert!(text.contains("# manifest_digest: d1\n"));
}

#[test]
fn tampered_overall_row_is_rejected() {
    let mut counts = [ConfusionCounts::default(); 10];
    counts[3] = ConfusionCounts::new(5, 5, 5, 5);
    let text = metrics_csv(&table("x", counts)).replace("overall,5,5,5,5", "overall,5,5,5,6");
    assert!(parse_metrics_csv(&text).is_err());
}

#[test]
fn fp_total_must_equal_bin_sum() {
    let fp = vec![FpCounts {
        run: "a".into(),
        total: 3,
        per_bin: [1, 2, 0, 0, 0, 0, 0, 0, 0, 0],
    }];
    let good = fp_counts_csv(&fp, &[]);
    assert_eq!(parse_fp_counts_csv(&good).unwrap(), fp);
    let bad = good.replace("a,3,1,2", "a,4,1,2");
    assert!(parse_fp_counts_csv(&bad).is_err());
}

#[test]
fn series_have_one_column_per_run() {
    let mut ca = [ConfusionCounts::default(); 10];
    let mut cb = [ConfusionCounts::default(); 10];
    ca[1] = ConfusionCounts::new(3, 0, 2, 1);
    cb[1] = ConfusionCounts::new(1, 0, 4, 3);
    let (a, b) = (table("aware", ca), table("baseline", cb));
    let expected = ["0.500", "0.750", "0.250", "2"];
    let expected_b = ["0.125", "0.250", "0.750", "4"];
    for (i, metric) in SERIES.iter().enumerate() {
        let text = series_csv(metric, &[&a, &b]);
        let body: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(body[0], "bin,aware,baseline");
        assert_eq!(body.len(), 11);
        assert_eq!(body[2], format!("10-19%,{},{}", expected[i], expected_b[i]), "{metric}");
    }
}

#[test]
fn comparison_rejects_different_manifests() {
    let a = table("a", [ConfusionCounts::default(); 10]);
    let mut b = a.clone();
    b.run = descriptor("b", "d2");
    let err = comparison_report(&a, &b).unwrap_err();
    assert!(
        err.to_string().contains("d1") && err.to_string().contains("d2"),
        "{err}"
    );
}
