use preform_fusion::neural::{train, ModelConfig, TrainConfig};
use preform_fusion::pipeline::{default_case_study, default_space, run_case_study, CaseStudyConfig, Variant, VariantKind, UNSEEN_EVAL};
use preform_fusion::thermal::generate_dataset;
use preform_fusion::{store, RowSource, SimConfig};

/// Reference model trained on a small mid_cp set, queried at a point off the design.
const GOLDEN: [u64; 32] = [
    0x4039002b78464756, 0x403901290c9a2372, 0x403906e5c8266ed3, 0x40392491ffa6b888,
    0x403980a6d0469412, 0x403abad8956097f7, 0x403d0f1ff730a3ec, 0x40403379d8c41869,
    0x40444fb8bdc1325c, 0x4045fb9b248856e0, 0x40496d8f80a272b1, 0x404a2fdfa80e377e,
    0x404bf6d543878cfc, 0x404e544bee155313, 0x404fbe76aa0e9413, 0x404e49c484258d89,
    0x404c2e9f55910406, 0x404be59f891c0f65, 0x4049b4906d47b0d5, 0x4048f809a5a9e9eb,
    0x4046dd0784a4fbb2, 0x4047e5b96366a91b, 0x4048d654e795dfca, 0x40471ee6ab0863d3,
    0x404682058ebdcd39, 0x4043da7306922f02, 0x40406e8b0e75b147, 0x403c00600b8ad9c4,
    0x403a322906568341, 0x403946d3000b14f1, 0x403911c2f33d68c2, 0x4039035fb507da28,
];

#[test]
fn reference_model_matches_golden_output() {
    let mid = Variant::preset("mid_cp").unwrap();
    let data = generate_dataset(&default_space(), &mid, 120, 11, &SimConfig::default()).unwrap();
    let data = data.select_inputs(&data.design_columns()).unwrap();
    let tc = TrainConfig {
        epochs: 25,
        seed: 5,
        ..TrainConfig::default()
    };
    let (m, _) = train(&ModelConfig::reference(2, true, 7), &data, &tc).unwrap();
    let out = m.forward(&[37.25, 81.5]).unwrap();
    let bits: Vec<u64> = out.values().iter().map(|v| v.to_bits()).collect();
    assert_eq!(bits, GOLDEN);
}

fn small(case: VariantKind, seed: u64) -> CaseStudyConfig {
    let mut c = default_case_study(case, seed);
    c.base_size = 120;
    c.finetune_size = 80;
    c.doe_n = 90;
    c.baseline_sizes = vec![50, 60, 50];
    c.unseen_test_size = 40;
    c.train.epochs = 8;
    c
}

#[test]
fn material_case_wires_every_stage() {
    let out = run_case_study(&small(VariantKind::Material, 2), None).unwrap();
    let r = &out.report;
    assert_eq!(r.fused_rows, 270);
    assert_eq!(r.fusion_mode, "predicted_only");

    let base = r.model("mid_cp").unwrap();
    assert_eq!((base.role.as_str(), base.training_rows), ("base", 120));
    for name in ["low_cp", "high_cp"] {
        let m = r.model(name).unwrap();
        assert_eq!(m.role, "finetune");
        assert_eq!(m.lineage, vec!["mid_cp".to_string()]);
        assert_eq!(m.input_names, vec!["s1", "s2"]);
    }
    let global = r.model("global").unwrap();
    assert_eq!(global.training_rows, 270);
    assert_eq!(global.input_names, vec!["s1", "s2", "cp1", "cp2", "cp3", "cp4", "cp5"]);
    assert_eq!(r.model("baseline").unwrap().training_rows, 160);

    let unseen = r.evaluations.iter().find(|c| c.eval_set == UNSEEN_EVAL).unwrap();
    assert_eq!(unseen.rows, 40);
    assert!(unseen.models.iter().all(|m| m.metrics.is_some()), "{unseen:?}");
    assert!(r.unseen_rmse("global").unwrap() > 0.0);

    let (_, fused) = out.datasets.iter().find(|(n, _)| n == "fused").unwrap();
    assert!(fused.sources().iter().all(|&s| s == RowSource::Predicted));
}

#[test]
fn simulated_rows_can_join_the_fusion() {
    let mut c = small(VariantKind::Geometry, 4);
    c.include_simulated_in_fusion = true;
    let out = run_case_study(&c, None).unwrap();
    let r = &out.report;
    assert_eq!(r.fusion_mode, "predicted_plus_simulated");
    assert_eq!(r.fused_rows, 270 + 120 + 80 + 80);
    let global = r.model("global").unwrap();
    assert_eq!(
        global.input_names,
        vec!["s1", "s2", "length", "wall_thickness", "weight", "neck_length"]
    );
}

#[test]
fn report_directory_is_reproducible() {
    let c = small(VariantKind::Material, 9);
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_case_study(&c, Some(a.path())).unwrap().report;
    let rb = run_case_study(&c, Some(b.path())).unwrap().report;
    assert_eq!(ra, rb);
    for f in ["report.json", "metrics.csv", "models/global.ckpt", "datasets/fused.csv", "plots/val_r2.svg"] {
        assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    assert_eq!(store::read_report(&a.path().join("report.json")).unwrap(), ra);
}

#[test]
fn master_seed_changes_results() {
    let a = run_case_study(&small(VariantKind::Material, 1), None).unwrap().report;
    let b = run_case_study(&small(VariantKind::Material, 2), None).unwrap().report;
    assert_ne!(a.seeds, b.seeds);
    assert_ne!(a.unseen_rmse("global"), b.unseen_rmse("global"));
}

#[test]
fn invalid_study_is_rejected_before_work() {
    let mut c = small(VariantKind::Material, 1);
    c.baseline_sizes = vec![10, 10];
    assert!(run_case_study(&c, None).is_err());
    let mut c = small(VariantKind::Material, 1);
    c.unseen = c.variants[0].clone();
    assert!(run_case_study(&c, None).is_err());
}
