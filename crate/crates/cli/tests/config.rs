use jamlab::nn::TrainConfig;
use jamlab_cli::config::{GateChoice, GenConfig, JnrGrid, Profile, TrainFile};
use jamlab_cli::error::CliError;
use jamlab_cli::gen::plan;

#[test]
fn unknown_keys_are_rejected() {
    let text = r#"{"classes":[1],"jnr_db":{"start":0,"stop":1,"step":1},"per_class":2,"seed":1,"profile":"desk","colour":3}"#;
    assert!(serde_json::from_str::<GenConfig>(text).is_err());
    assert!(serde_json::from_str::<TrainFile>(r#"{"learning_rate":0.1}"#).is_err());
    assert!(serde_json::from_str::<TrainFile>(r#"{"lr":0.1}"#).is_ok());
}

#[test]
fn jnr_grid_values() {
    let g = JnrGrid { start: -25.0, stop: 15.0, step: 1.0 };
    let v = g.values().unwrap();
    assert_eq!(v.len(), 41);
    assert_eq!(v[0], -25.0);
    assert_eq!(v[40], 15.0);
    let tenth = JnrGrid { start: 0.0, stop: 1.0, step: 0.1 }.values().unwrap();
    assert_eq!(tenth.len(), 11);
    assert_eq!(tenth[3], 0.3);
    assert!(JnrGrid { start: 1.0, stop: 0.0, step: 1.0 }.values().is_err());
    assert!(JnrGrid { start: 0.0, stop: 1.0, step: 0.0 }.values().is_err());
}

#[test]
fn desk_plan_has_one_thousand_records() {
    let p = plan(&GenConfig::desk()).unwrap();
    assert_eq!(p.len(), 5 * 200);
    for c in 1..=5u8 {
        assert_eq!(p.iter().filter(|s| s.class_id == c).count(), 200);
    }
    let mut seeds: Vec<u64> = p.iter().map(|s| s.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    assert_eq!(seeds.len(), p.len());
}

#[test]
fn full_plan_covers_every_class_and_jnr_point() {
    let cfg = GenConfig::full(1);
    assert_eq!(cfg.profile, Profile::Full);
    let p = plan(&cfg).unwrap();
    assert_eq!(p.len(), 21 * 41);
    for c in 1..=21u8 {
        for k in 0..41 {
            let jnr = -25.0 + k as f64;
            assert_eq!(p.iter().filter(|s| s.class_id == c && s.jnr_db == jnr).count(), 1);
        }
    }
}

#[test]
fn invalid_generation_configs() {
    let mut cfg = GenConfig::desk();
    cfg.classes = vec![1, 22];
    assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    cfg.classes = vec![2, 2];
    assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    cfg.classes = vec![];
    assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    let mut cfg = GenConfig::desk();
    cfg.per_class = 0;
    assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
}

#[test]
fn full_profile_uses_paper_training_defaults() {
    let s = TrainFile::default().resolve(Profile::Full).unwrap();
    assert_eq!(s.optim, TrainConfig::paper());
    assert_eq!(s.optim.lr, 1e-4);
    assert_eq!(s.optim.weight_decay, 0.05);
    assert_eq!(s.optim.batch_size, 16);
    assert_eq!(s.optim.max_epochs, 50);
    assert_eq!(s.train_fraction, 0.8);
}

#[test]
fn overrides_and_bad_values() {
    let f = TrainFile { lr: Some(0.5), gate: Some(GateChoice::Forced(2)), ..TrainFile::default() };
    let s = f.resolve(Profile::Desk).unwrap();
    assert_eq!(s.optim.lr, 0.5);
    assert_eq!(s.gate, GateChoice::Forced(2));
    for bad in [
        TrainFile { gate: Some(GateChoice::Forced(3)), ..TrainFile::default() },
        TrainFile { train_fraction: Some(0.0), ..TrainFile::default() },
        TrainFile { batch_size: Some(0), ..TrainFile::default() },
    ] {
        assert_eq!(bad.resolve(Profile::Desk).unwrap_err().exit_code(), 2);
    }
}
