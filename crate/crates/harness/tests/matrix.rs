use std::collections::BTreeMap;
use std::path::PathBuf;

use rosepoint_core::{ClassMetrics, MetricsReport};
use rosepoint_harness::matrix::{cells_csv, report_dir};
use rosepoint_harness::{run_matrix, ComparisonTable, ExperimentTag, MatrixPlan};
use rosepoint_preprocess::BlockSpec;
use rosepoint_synthgen::{generate_dataset_with_density, PlantParams};
use tempfile::TempDir;

fn plan(architectures: &[&str], experiments: &[ExperimentTag]) -> (TempDir, MatrixPlan) {
    let dir = tempfile::tempdir().unwrap();
    let manifest = generate_dataset_with_density(4, &PlantParams::default(), 21, 0.5, dir.path().join("data")).unwrap();
    let files: Vec<PathBuf> = manifest.entries.iter().map(|e| dir.path().join("data").join(&e.file)).collect();
    let train_sets = BTreeMap::from([
        (ExperimentTag::S, files[..2].to_vec()),
        (ExperimentTag::III, vec![files[2].clone()]),
    ]);
    let plan = MatrixPlan {
        architectures: architectures.iter().map(|s| s.to_string()).collect(),
        preset: "toy".into(),
        experiments: experiments.to_vec(),
        train_sets,
        test_clouds: vec![files[3].clone()],
        epochs: 1,
        finetune_epochs: None,
        val_fraction: 0.2,
        finetune_mask: None,
        seed: 2,
        block: BlockSpec::default(),
    };
    (dir, plan)
}

fn report(ious: [f64; 3]) -> MetricsReport {
    let per_class = ious.map(|iou| ClassMetrics { recall: iou, precision: iou, iou });
    MetricsReport { per_class, miou: ious.iter().sum::<f64>() / 3.0, acc: 0.5 }
}

#[test]
fn one_cell_gives_one_data_row() {
    let (dir, plan) = plan(&["PointNet"], &[ExperimentTag::III]);
    let out = run_matrix(&plan, dir.path().join("out")).unwrap();
    assert_eq!(out.cells.len(), 1);
    assert!(out.cells[0].error.is_none(), "{:?}", out.cells[0].error);
    let csv = std::fs::read_to_string(dir.path().join("out/cells.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
    assert!(csv.lines().nth(1).unwrap().starts_with("PointNet,III,ok,"));
    assert!(dir.path().join("out/pointnet_III.json").exists());
    assert!(dir.path().join("out/iou.svg").exists());
}

#[test]
fn gain_row_is_the_cell_difference() {
    let (dir, plan) = plan(&["PointNet", "ShellNet"], &[ExperimentTag::III, ExperimentTag::SIII]);
    let out_dir = dir.path().join("out");
    let out = run_matrix(&plan, &out_dir).unwrap();
    // S runs first to provide the pretrained weights.
    let tags: Vec<ExperimentTag> = out.cells.iter().map(|c| c.tag).collect();
    assert_eq!(tags, [ExperimentTag::III, ExperimentTag::S, ExperimentTag::SIII].repeat(2));
    assert!(out.cells.iter().all(|c| c.error.is_none()));
    let csv = std::fs::read_to_string(out_dir.join("comparison.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "class,row,PointNet,ShellNet");
    assert_eq!(lines.len(), 13);
    for (i, class) in ["Flower", "Leaf", "Stem", "MIoU"].into_iter().enumerate() {
        for (j, row) in ["III", "S+III", "Gain"].into_iter().enumerate() {
            assert!(lines[1 + 3 * i + j].starts_with(&format!("{class},{row},")));
        }
    }
    for arch in ["PointNet", "ShellNet"] {
        let cell = |tag| out.cells.iter().find(|c| c.architecture == arch && c.tag == tag).unwrap().record.clone().unwrap();
        let (base, transfer) = (cell(ExperimentTag::III).macro_report.unwrap(), cell(ExperimentTag::SIII).macro_report.unwrap());
        for (k, class) in ["Flower", "Leaf", "Stem"].into_iter().enumerate() {
            let gain = out.table.value(class, "Gain", arch).unwrap();
            assert!((gain - (transfer.per_class[k].iou - base.per_class[k].iou)).abs() <= 1e-9);
        }
        let gain = out.table.value("MIoU", "Gain", arch).unwrap();
        assert!((gain - (transfer.miou - base.miou)).abs() <= 1e-9);
    }
    let rebuilt = report_dir(&out_dir).unwrap();
    assert_eq!(rebuilt.to_csv(), out.table.to_csv());
}

#[test]
fn failing_cell_is_recorded_and_the_matrix_continues() {
    let (dir, plan) = plan(&["PointNet"], &[ExperimentTag::II, ExperimentTag::III]);
    let out = run_matrix(&plan, dir.path().join("out")).unwrap();
    assert_eq!(out.cells.len(), 2);
    assert!(out.cells[0].error.as_deref().unwrap().contains("II"));
    assert!(out.cells[1].record.is_some());
    let csv = cells_csv(&out.cells);
    assert!(csv.contains("PointNet,II,failed"));
    assert!(csv.contains("PointNet,III,ok"));
}

#[test]
fn gain_is_exact_for_synthetic_cells() {
    let archs = vec!["A".to_string(), "B".to_string()];
    let cells = vec![
        ("A".to_string(), ExperimentTag::III, report([0.1, 0.7, 0.3])),
        ("A".to_string(), ExperimentTag::SIII, report([0.35, 0.9, 0.2])),
        ("B".to_string(), ExperimentTag::III, report([0.5, 0.5, 0.5])),
    ];
    let table = ComparisonTable::from_cells(&archs, &cells);
    assert_eq!(table.value("Flower", "Gain", "A"), Some(0.35 - 0.1));
    assert_eq!(table.value("Stem", "Gain", "A"), Some(0.2 - 0.3));
    assert_eq!(table.value("Flower", "III", "B"), Some(0.5));
    assert_eq!(table.value("Flower", "Gain", "B"), None);
    let csv = table.to_csv();
    let gain_line = csv.lines().find(|l| l.starts_with("Flower,Gain,")).unwrap();
    let parsed: f64 = gain_line.split(',').nth(2).unwrap().parse().unwrap();
    assert_eq!(parsed, 0.35 - 0.1);
    assert!(gain_line.ends_with(','));
}

#[test]
fn table_falls_back_to_the_largest_available_pair() {
    let archs = vec!["A".to_string()];
    let cells = vec![
        ("A".to_string(), ExperimentTag::I, report([0.1, 0.2, 0.3])),
        ("A".to_string(), ExperimentTag::SI, report([0.2, 0.2, 0.2])),
        ("A".to_string(), ExperimentTag::II, report([0.4, 0.4, 0.4])),
    ];
    let table = ComparisonTable::from_cells(&archs, &cells);
    assert_eq!((table.base, table.transfer), (ExperimentTag::I, ExperimentTag::SI));
}

#[test]
fn plan_parses_from_toml() {
    let text = r#"
        architectures = ["PointNet++", "DGCNN"]
        preset = "desk"
        experiments = ["III", "S+III"]
        test_clouds = ["t.xyzl"]
        epochs = 50
        [train_sets]
        S = ["a.xyzl"]
        III = ["b.xyzl"]
    "#;
    let plan: MatrixPlan = toml::from_str(text).unwrap();
    assert_eq!(plan.architectures().unwrap().len(), 2);
    assert_eq!(plan.cells(), vec![ExperimentTag::III, ExperimentTag::S, ExperimentTag::SIII]);
    assert_eq!(plan.train_sets[&ExperimentTag::S], vec![PathBuf::from("a.xyzl")]);
}
