use walklab::corpus::{group_paragraphs, make_folds, synthesize, CorpusDir, Protocol, SynthConfig, Vocabulary};
use walklab::eval::{eval_multi, eval_single, render_path, EvalReport, Task};
use walklab::inference::{follow_paragraph, trace_actions, SearchLimits};
use walklab::seq2seq::ModelConfig;
use walklab::trainer::{train_fold, TrainRunConfig};
use walklab::worldsim::{builtin_maps, execute_sequence};
use walklab::{Model, Model32};

fn corpus() -> CorpusDir {
    let maps = builtin_maps();
    let cfg = SynthConfig {
        paragraphs_per_map: 6,
        seed: 9,
        ..SynthConfig::default()
    };
    CorpusDir {
        items: synthesize(&maps, &cfg),
        maps,
    }
}

#[test]
fn corpus_directory_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let c = corpus();
    c.write_to(dir.path()).unwrap();
    let back = CorpusDir::load(dir.path()).unwrap();
    assert_eq!(back.items, c.items);
    assert_eq!(back.maps.len(), 3);
    back.check().unwrap();
}

#[test]
fn trained_model_survives_a_checkpoint_round_trip() {
    let c = corpus();
    let fold = make_folds(&c.items, Protocol::VDev, 1).unwrap().remove(1);
    let base = ModelConfig::new(1).with_hidden(10);
    let run = TrainRunConfig {
        max_epochs: 2,
        ensemble_size: 1,
        train_limit: Some(25),
        ..TrainRunConfig::default()
    };
    let trained = train_fold::<f64>(&fold, &c.maps, &base, &run, 1).unwrap();
    assert_eq!(trained.history.epochs.len(), 2);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.wlk");
    trained.model.save(&path).unwrap();
    let loaded = Model::load(&path).unwrap();
    assert_eq!(loaded.digest(), trained.model.digest());
    let vocab = Vocabulary::from_json(&trained.vocab.to_json()).unwrap();

    let limits = SearchLimits::default();
    let members = [loaded];
    let single = eval_single(&members, &vocab, &fold.test_map, &fold.test_items, &c.maps, 3, limits).unwrap();
    let again = eval_single(
        std::slice::from_ref(&trained.model),
        &trained.vocab,
        &fold.test_map,
        &fold.test_items,
        &c.maps,
        3,
        limits,
    )
    .unwrap();
    assert_eq!(single, again);
    assert_eq!(single.items, fold.test_items.len());

    let paragraphs = group_paragraphs(&fold.test_items).unwrap();
    let multi = eval_multi(&members, &vocab, &fold.test_map, &paragraphs, &c.maps, 3, limits).unwrap();
    let report = EvalReport::new(Task::Multi, Protocol::VDev, 3, limits, vec![multi]);
    assert_eq!(report.items, paragraphs.len());
}

#[test]
fn decoded_paragraphs_replay_and_render() {
    let c = corpus();
    let map = &c.maps[0];
    let mut cfg = ModelConfig::new(8).with_hidden(6);
    cfg.dropout = 0.0;
    let members: Vec<Model> = (0..2).map(|s| Model::new(cfg.clone(), s).unwrap()).collect();
    let para = &group_paragraphs(&c.items).unwrap()[0];
    let ids: Vec<Vec<usize>> = para
        .sentences
        .iter()
        .map(|s| s.tokens.iter().map(|t| t.len() % 8).collect())
        .collect();
    let decoded = follow_paragraph(&members, &ids, map, para.start, 4, SearchLimits::default()).unwrap();
    assert_eq!(decoded.sentences.len(), ids.len());

    let mut pose = para.start;
    for (i, acts) in decoded.sentences.iter().enumerate() {
        let trace = trace_actions(&members, &ids[i], &para.sentences[i].tokens, map, pose, acts).unwrap();
        assert_eq!(trace.alignment.steps(), acts.len());
        assert_eq!(trace.alignment.tokens(), ids[i].len());
        pose = execute_sequence(map, pose, acts).unwrap();
    }
    assert_eq!(pose, decoded.end);

    let moves: Vec<_> = decoded
        .actions()
        .into_iter()
        .filter(|a| *a != walklab::worldsim::Action::Stop)
        .collect();
    let svg = render_path(map, para.start, &moves).unwrap();
    assert!(svg.contains("id=\"start\""));
}

#[test]
fn single_precision_models_decode() {
    let c = corpus();
    let mut cfg = ModelConfig::new(5).with_hidden(4);
    cfg.dropout = 0.0;
    let m = Model::new(cfg, 3).unwrap();
    let m32: Model32 = m.cast();
    let item = &c.items[0];
    let map = &c.maps[0];
    let tokens = [1, 2, 3];
    let a = follow_paragraph(&[m], &[tokens.to_vec()], map, item.start, 2, SearchLimits::default()).unwrap();
    let b = follow_paragraph(&[m32], &[tokens.to_vec()], map, item.start, 2, SearchLimits::default()).unwrap();
    assert_eq!(a.sentences, b.sentences);
    assert!((a.log_prob - b.log_prob).abs() < 1e-4);
}
