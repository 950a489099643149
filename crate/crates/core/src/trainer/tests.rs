use proptest::prelude::*;

use super::*;
use crate::corpus::{make_folds, synthesize, SynthConfig};
use crate::inference::follow_paragraph;
use crate::ndiff::{grad_check, GradCheckOptions};
use crate::worldsim::{builtin_maps, Action};

fn corpus() -> (Vec<SampleItem>, Vec<WorldMap>) {
    let maps = builtin_maps();
    let cfg = SynthConfig {
        paragraphs_per_map: 12,
        max_sentences: 2,
        ..SynthConfig::default()
    };
    (synthesize(&maps, &cfg), maps)
}

fn small_fold(train: usize) -> (FoldSpec, Vec<WorldMap>) {
    let (items, maps) = corpus();
    let mut fold = make_folds(&items, Protocol::VDev, 5).unwrap().remove(0);
    fold.train_items.truncate(train);
    fold.validation_items.truncate(12);
    (fold, maps)
}

fn small_config(hidden: usize, dropout: f64) -> ModelConfig {
    let mut c = ModelConfig::new(1).with_hidden(hidden);
    c.embed_size = hidden;
    c.dropout = dropout;
    c.max_sentence_actions = 12;
    c
}

fn run(epochs: usize) -> TrainRunConfig {
    TrainRunConfig {
        max_epochs: epochs,
        ensemble_size: 1,
        optimizer: Optimizer::Adam(AdamConfig {
            step_size: 0.01,
            ..AdamConfig::default()
        }),
        ..TrainRunConfig::default()
    }
}

#[test]
fn certain_predictions_cost_nothing() {
    let gold = [Action::Forward, Action::TurnLeft, Action::Stop];
    let dists: Vec<Vec<f64>> = gold
        .iter()
        .map(|a| (0..4).map(|i| if i == a.index() { 1.0 } else { 0.0 }).collect())
        .collect();
    let l = sequence_loss(&dists, &gold).unwrap();
    assert_eq!(l.total, 0.0);
    assert_eq!(l.clamped, 0);
}

#[test]
fn uniform_predictions_cost_ln4_per_step() {
    for t in 1..6 {
        let gold = vec![Action::TurnRight; t];
        let l = sequence_loss(&vec![vec![0.25; 4]; t], &gold).unwrap();
        assert!((l.total - t as f64 * 4f64.ln()).abs() < 1e-12);
        assert!((l.per_step - 4f64.ln()).abs() < 1e-12);
    }
}

#[test]
fn zero_probability_is_clamped_and_counted() {
    let l = sequence_loss(&[vec![0.0, 1.0, 0.0, 0.0]], &[Action::Forward]).unwrap();
    assert_eq!(l.clamped, 1);
    assert!((l.total + PROB_FLOOR.ln()).abs() < 1e-9);
}

#[test]
fn length_mismatch_is_rejected() {
    assert!(sequence_loss(&[vec![0.25; 4]], &[Action::Forward, Action::Stop]).is_err());
}

proptest! {
    #[test]
    fn loss_matches_independent_sum(rows in proptest::collection::vec((proptest::collection::vec(0.01f64..1.0, 4), 0usize..4), 1..8)) {
        let mut dists = Vec::new();
        let mut gold = Vec::new();
        let mut oracle = 0.0;
        for (w, a) in &rows {
            let s: f64 = w.iter().sum();
            let d: Vec<f64> = w.iter().map(|x| x / s).collect();
            oracle += -(w[*a] / s).ln();
            dists.push(d);
            gold.push(Action::from_index(*a).unwrap());
        }
        let l = sequence_loss(&dists, &gold).unwrap();
        prop_assert!((l.total - oracle).abs() < 1e-12);
    }
}

#[test]
fn graph_loss_matches_value_loss_and_gradients_check() {
    let (fold, maps) = small_fold(4);
    let vocab = build_vocab(&fold.train_items);
    let cfg = ModelConfig {
        vocab_size: vocab.len(),
        dropout: 0.0,
        ..small_config(5, 0.0)
    };
    let model = Seq2Seq::<f64>::new(cfg, 3).unwrap();
    for item in fold.train_items.iter().filter(|i| i.feasible).take(2) {
        let map = find_map(&maps, item).unwrap();
        let tokens = vocab.encode(&item.tokens);
        let (value, _, _) = item_gradient(&model, &tokens, item, map, None).unwrap();
        let r = model.rollout(&tokens, map, item.start, &item.actions).unwrap();
        let expected = sequence_loss(&r.distributions, &item.actions).unwrap().total;
        assert!((value - expected).abs() < 1e-10);
        let report = grad_check(
            model.params(),
            &GradCheckOptions::default(),
            |params| -> Result<_, TrainError> {
                let mut g = Graph::new();
                let p = g.bind(params);
                let vars = net::rollout(&mut g, &p, model.config(), &tokens, map, item.start, &item.actions)?;
                let loss = sequence_loss_var(&mut g, &vars.probs, &item.actions)?;
                Ok(g.evaluate(loss)?)
            },
        )
        .unwrap();
        assert!(report.passed(), "{report:?}");
    }
}

#[test]
fn run_config_validation_and_serde() {
    assert!(TrainRunConfig::default().validate().is_ok());
    for bad in [
        TrainRunConfig {
            max_epochs: 0,
            ..Default::default()
        },
        TrainRunConfig {
            ensemble_size: 0,
            ..Default::default()
        },
        TrainRunConfig {
            batch_size: 0,
            ..Default::default()
        },
        TrainRunConfig {
            clip_norm: Some(0.0),
            ..Default::default()
        },
    ] {
        assert!(bad.validate().is_err());
    }
    let c = TrainRunConfig {
        optimizer: Optimizer::Sgd { learning_rate: 0.1 },
        ..Default::default()
    };
    let text = serde_json::to_string(&c).unwrap();
    assert_eq!(serde_json::from_str::<TrainRunConfig>(&text).unwrap(), c);
    let partial: TrainRunConfig = serde_json::from_str(r#"{"max_epochs": 3}"#).unwrap();
    assert_eq!(partial.ensemble_size, 10);
    assert!(serde_json::from_str::<TrainRunConfig>(r#"{"epochs": 3}"#).is_err());
}

#[test]
fn training_is_deterministic() {
    let (fold, maps) = small_fold(12);
    let cfg = small_config(6, 0.5);
    let a = train_fold::<f64>(&fold, &maps, &cfg, &run(3), 11).unwrap();
    let b = train_fold::<f64>(&fold, &maps, &cfg, &run(3), 11).unwrap();
    assert_eq!(a.history.without_timing(), b.history.without_timing());
    assert_eq!(a.model, b.model);
    let c = train_fold::<f64>(&fold, &maps, &cfg, &run(3), 12).unwrap();
    assert_ne!(a.model, c.model);
}

#[test]
fn history_is_consistent() {
    let (fold, maps) = small_fold(16);
    let r = TrainRunConfig {
        eval_every: 2,
        ..run(5)
    };
    let t = train_fold::<f64>(&fold, &maps, &small_config(6, 0.0), &r, 2).unwrap();
    let h = &t.history;
    assert_eq!(h.epochs.len(), 5);
    let evaluated: Vec<usize> = h
        .epochs
        .iter()
        .filter(|e| e.validation_metric.is_some())
        .map(|e| e.epoch)
        .collect();
    assert_eq!(evaluated, [2, 4, 5]);
    assert!(h.stopping_epoch >= 1 && h.stopping_epoch <= 5);
    let at_stop = h.epochs[h.stopping_epoch - 1].validation_metric.unwrap();
    assert_eq!(Some(at_stop), h.best_metric());
    // earliest among ties
    assert!(h.epochs[..h.stopping_epoch - 1]
        .iter()
        .all(|e| e.validation_metric.is_none_or(|m| m < at_stop)));
    let csv = h.to_csv(false);
    assert_eq!(csv.lines().count(), 6);
    assert!(csv.starts_with("epoch,train_loss,validation_metric,clamped_logs,stopping\n"));
}

#[test]
fn kept_model_scores_the_recorded_metric() {
    let (fold, maps) = small_fold(16);
    let t = train_fold::<f64>(&fold, &maps, &small_config(6, 0.0), &run(4), 8).unwrap();
    let m = exact_accuracy(&t.model, &t.vocab, fold.stopping_items(), &maps).unwrap();
    assert_eq!(m, t.history.best_metric());
}

#[test]
fn plain_gradient_descent_reduces_loss() {
    let (fold, maps) = small_fold(20);
    let r = TrainRunConfig {
        optimizer: Optimizer::Sgd { learning_rate: 0.05 },
        ..run(4)
    };
    let t = train_fold::<f64>(&fold, &maps, &small_config(8, 0.0), &r, 4).unwrap();
    let l = t.history.losses();
    assert!(l.windows(2).all(|w| w[1] < w[0]), "{l:?}");
}

#[test]
fn vocab_and_config_follow_training_items() {
    let (fold, maps) = small_fold(10);
    let t = train_fold::<f64>(&fold, &maps, &small_config(4, 0.0), &run(1), 0).unwrap();
    assert_eq!(t.vocab, build_vocab(&fold.train_items));
    assert_eq!(t.model.config().vocab_size, t.vocab.len());
}

#[test]
fn blocked_items_are_skipped() {
    let (mut fold, maps) = small_fold(6);
    let mut bad = fold.train_items[0].clone();
    bad.feasible = false;
    fold.train_items.push(bad);
    let t = train_fold::<f64>(&fold, &maps, &small_config(4, 0.0), &run(1), 0).unwrap();
    assert_eq!(t.history.skipped_items, 1);
}

#[test]
fn unknown_map_is_an_error() {
    let (mut fold, maps) = small_fold(4);
    fold.train_items[0].map = "atlantis".into();
    assert!(matches!(
        train_fold::<f64>(&fold, &maps, &small_config(4, 0.0), &run(1), 0),
        Err(TrainError::UnknownMap { .. })
    ));
}

#[test]
fn divergence_aborts_with_diagnostics() {
    let (fold, maps) = small_fold(10);
    let r = TrainRunConfig {
        optimizer: Optimizer::Sgd { learning_rate: 1e305 },
        clip_norm: None,
        ..run(3)
    };
    match train_fold::<f64>(&fold, &maps, &small_config(4, 0.0), &r, 0) {
        Err(TrainError::NonFinite { epoch, item, .. }) => {
            assert!(epoch >= 1);
            assert!(fold.train_items.iter().any(|i| i.key() == item));
        }
        other => panic!("expected abort, got {:?}", other.map(|t| t.history)),
    }
}

#[test]
fn target_metric_ends_training_early() {
    let (fold, maps) = small_fold(8);
    let r = TrainRunConfig {
        target_metric: Some(0.0),
        ..run(5)
    };
    let t = train_fold::<f64>(&fold, &maps, &small_config(4, 0.0), &r, 0).unwrap();
    assert_eq!(t.history.epochs.len(), 1);
    assert_eq!(t.history.stopping_epoch, 1);
}

#[test]
fn single_member_ensemble_is_train_fold() {
    let (fold, maps) = small_fold(8);
    let cfg = small_config(4, 0.5);
    let r = TrainRunConfig { seed: 21, ..run(2) };
    let e = train_ensemble::<f64>(&fold, &maps, &cfg, &r).unwrap();
    let t = train_fold::<f64>(&fold, &maps, &cfg, &r, 21).unwrap();
    assert_eq!(e.len(), 1);
    assert_eq!(e[0].model, t.model);
    assert_eq!(e[0].history.without_timing(), t.history.without_timing());
}

#[test]
fn ensemble_members_are_distinct() {
    let (fold, maps) = small_fold(8);
    let r = TrainRunConfig {
        ensemble_size: 4,
        ..run(1)
    };
    let e = train_ensemble::<f64>(&fold, &maps, &small_config(4, 0.5), &r).unwrap();
    let mut digests: Vec<String> = e.iter().map(|t| t.model.digest()).collect();
    digests.sort();
    digests.dedup();
    assert_eq!(digests.len(), 4);
    assert!(e.iter().all(|t| t.vocab == e[0].vocab));
}

#[test]
fn ensemble_is_not_worse_than_median_member() {
    let (fold, maps) = small_fold(60);
    let r = TrainRunConfig {
        ensemble_size: 5,
        seed: 100,
        ..run(6)
    };
    let e = train_ensemble::<f64>(&fold, &maps, &small_config(10, 0.3), &r).unwrap();
    let vocab = &e[0].vocab;
    let items = fold.stopping_items();
    let mut singles: Vec<f64> = e
        .iter()
        .map(|t| exact_accuracy(&t.model, vocab, items, &maps).unwrap().unwrap())
        .collect();
    singles.sort_by(f64::total_cmp);
    let members: Vec<_> = e.iter().map(|t| t.model.clone()).collect();
    let hits = items
        .iter()
        .filter(|item| {
            let map = find_map(&maps, item).unwrap();
            let d = follow_paragraph(
                &members,
                &[vocab.encode(&item.tokens)],
                map,
                item.start,
                1,
                crate::inference::SearchLimits::sentence(12),
            )
            .unwrap();
            !d.status.flagged() && d.end == item.end
        })
        .count();
    let ensemble = hits as f64 / items.len() as f64;
    assert!(singles[4] > 0.0, "members learned nothing: {singles:?}");
    assert!(ensemble >= singles[2], "ensemble {ensemble} vs members {singles:?}");
}

#[test]
fn failed_members_are_reported() {
    let (mut fold, maps) = small_fold(4);
    fold.train_items[0].map = "atlantis".into();
    let r = TrainRunConfig {
        ensemble_size: 3,
        ..run(1)
    };
    match train_ensemble::<f64>(&fold, &maps, &small_config(4, 0.0), &r) {
        Err(e @ TrainError::Ensemble { .. }) => {
            let TrainError::Ensemble { failed, total } = &e else {
                unreachable!()
            };
            assert_eq!((failed.len(), *total), (3, 3));
            assert!(matches!(e.root(), TrainError::UnknownMap { .. }));
        }
        other => panic!("expected ensemble failure, got {:?}", other.map(|v| v.len())),
    }
}

#[test]
fn train_limit_truncates_the_fold() {
    let (fold, maps) = small_fold(30);
    let r = TrainRunConfig {
        train_limit: Some(10),
        ..run(2)
    };
    let limited = train_fold::<f64>(&fold, &maps, &small_config(4, 0.5), &r, 5).unwrap();
    let mut cut = fold.clone();
    cut.train_items.truncate(10);
    let manual = train_fold::<f64>(&cut, &maps, &small_config(4, 0.5), &run(2), 5).unwrap();
    assert_eq!(limited.model, manual.model);
    assert_eq!(limited.vocab, manual.vocab);
}
