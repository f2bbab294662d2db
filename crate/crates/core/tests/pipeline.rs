use stelle::concepts::ConceptSet;
use stelle::data::{load_dataset, load_dataset_with_labels, save_dataset, Dataset};
use stelle::kernel::EmbeddingMode;
use stelle::pipeline::{mine_concepts, train_pipeline, Bundle, Pipeline, RunConfig};
use stelle::synthetic::pulse;

fn small_config(seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default().with_seed(seed);
    cfg.selection.per_variable_count = 10;
    cfg.selection.min_total = 20;
    cfg.model.hidden_dims = vec![16];
    cfg.model.kernel.mc_trajectories = 64;
    cfg.train.epochs = 15;
    cfg
}

fn accuracy(p: &Pipeline, ds: &Dataset) -> f64 {
    let prepared = p.prepare(ds).unwrap();
    let preds = p.predict(&prepared.trajectories).unwrap();
    let hits = preds.iter().zip(&prepared.trajectories).filter(|(q, t)| Some(q.class) == t.label()).count();
    hits as f64 / preds.len() as f64
}

#[test]
fn bundle_round_trip_gives_identical_predictions() {
    let train = pulse(20, 1);
    let probe = pulse(5, 2);
    let trained = train_pipeline(&train, None, &small_config(3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    trained.pipeline.bundle.save(&path).unwrap();
    let loaded = Pipeline::load(&path).unwrap();
    assert_eq!(loaded.bundle, trained.pipeline.bundle);
    let a = trained.pipeline.predict(&trained.pipeline.prepare(&probe).unwrap().trajectories).unwrap();
    let b = loaded.predict(&loaded.prepare(&probe).unwrap().trajectories).unwrap();
    assert_eq!(a, b);
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(Bundle::from_json(&text).unwrap().to_json().unwrap(), text);
}

#[test]
fn training_is_deterministic_and_learns_the_pulse() {
    let train = pulse(30, 5);
    let test = pulse(20, 6);
    let cfg = small_config(11);
    let a = train_pipeline(&train, None, &cfg).unwrap();
    let b = train_pipeline(&train, None, &cfg).unwrap();
    assert_eq!(a.history, b.history);
    assert_eq!(a.pipeline.bundle, b.pipeline.bundle);
    assert!(accuracy(&a.pipeline, &test) >= 0.9);
}

#[test]
fn raw_robustness_mode_trains() {
    let train = pulse(20, 7);
    let mut cfg = small_config(2);
    cfg.model.mode = EmbeddingMode::RawRobustness;
    let t = train_pipeline(&train, None, &cfg).unwrap();
    assert!(t.history.train_loss.iter().all(|l| l.is_finite()));
}

#[test]
fn test_labels_never_reach_the_model() {
    let train = pulse(15, 8);
    let mut test = pulse(5, 9);
    let cfg = small_config(4);
    let (concepts, _) = mine_concepts(&train, &cfg).unwrap();
    let trained = train_pipeline(&train, Some(&concepts.concepts), &cfg).unwrap();
    let before = trained.pipeline.predict(&trained.pipeline.prepare(&test).unwrap().trajectories).unwrap();
    let flipped = test.trajectories[0].label().map(|y| 1 - y);
    test.trajectories[0] = test.trajectories[0].clone().with_label(flipped);
    let after = trained.pipeline.predict(&trained.pipeline.prepare(&test).unwrap().trajectories).unwrap();
    assert_eq!(before, after);
    // and training again from the same inputs gives the same model
    let again = train_pipeline(&train, Some(&concepts.concepts), &cfg).unwrap();
    assert_eq!(again.pipeline.bundle, trained.pipeline.bundle);
}

#[test]
fn csv_files_round_trip_through_disk() {
    let ds = pulse(3, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("pulse.csv");
    save_dataset(&ds, &path).unwrap();
    let back = load_dataset(&path).unwrap();
    assert_eq!(back.trajectories, ds.trajectories);
    assert_eq!(back.label_map, ds.label_map);
    let relabelled = load_dataset_with_labels(&path, &["1".to_string(), "0".to_string()]).unwrap();
    assert_eq!(relabelled.trajectories[0].label(), Some(1));
}

#[test]
fn concepts_rescale_to_new_lengths() {
    let set: ConceptSet = "source_length=200\nF[0,100](x0 >= 1)\n".parse().unwrap();
    let train = pulse(10, 3);
    let cfg = small_config(1);
    let t = train_pipeline(&train, Some(&set), &cfg).unwrap();
    assert_eq!(t.pipeline.bundle.state.concepts[0].to_string(), "F[0,50](x0 >= 1)");
}
