use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use proptest::prelude::*;

use super::*;
use crate::worldsim::{builtin_maps, trace_sequence, Action, Heading, WorldMap};

fn small_corpus(seed: u64) -> Vec<SampleItem> {
    let cfg = SynthConfig {
        paragraphs_per_map: 30,
        seed,
        ..SynthConfig::default()
    };
    synthesize(&builtin_maps(), &cfg)
}

#[test]
fn example_paragraph_groups_into_fourteen_sentences() {
    let items = example_paragraph();
    let groups = group_paragraphs(&items).unwrap();
    assert_eq!(groups.len(), 1);
    let p = &groups[0];
    assert_eq!(p.len(), 14);
    assert_eq!(p.start, EXAMPLE_START);
    assert_eq!(p.end_node, 7);
    let indices: Vec<u32> = p.sentences.iter().map(|s| s.sentence_index).collect();
    assert_eq!(indices, (0..14).collect::<Vec<_>>());
    let map = crate::worldsim::builtin_map("grid").unwrap();
    assert!(items.iter().all(|i| i.replays(&map)));
    // the two descriptive sentences carry no movement
    assert_eq!(items[2].actions, [Action::Stop]);
    assert_eq!(
        items[7].tokens,
        ["this", "intersection", "conatains", "an", "easel", "."]
    );
    assert_eq!(p.gold_actions().len(), 15);
}

#[test]
fn single_sentence_paragraph_and_order_invariance() {
    let mut items = example_paragraph();
    let mut lone = items[3].clone();
    lone.paragraph_id = "lone".into();
    lone.sentence_index = 0;
    items.push(lone);
    let expected = group_paragraphs(&items).unwrap();
    assert_eq!(expected.iter().map(Paragraph::len).collect::<Vec<_>>(), [1, 14]);
    items.reverse();
    items.swap(2, 9);
    assert_eq!(group_paragraphs(&items).unwrap(), expected);
}

#[test]
fn sentence_gap_is_a_grouping_error() {
    let mut items = example_paragraph();
    items.remove(5);
    assert!(matches!(group_paragraphs(&items), Err(CorpusError::Grouping(_))));
}

#[test]
fn jsonl_round_trip_and_field_names() {
    let items = example_paragraph();
    let text = to_jsonl(&items);
    assert_eq!(read_jsonl(text.as_bytes()).unwrap(), items);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    let keys: BTreeSet<&str> = first.as_object().unwrap().keys().map(String::as_str).collect();
    let expected: BTreeSet<&str> = [
        "map",
        "paragraph_id",
        "sentence_index",
        "instruction",
        "tokens",
        "actions",
        "start",
        "end",
        "feasible",
    ]
    .into();
    assert_eq!(keys, expected);
    assert_eq!(first["actions"], serde_json::json!(["TURN_LEFT", "STOP"]));
    assert_eq!(first["start"], serde_json::json!({"node": 14, "orientation": 90}));
}

#[test]
fn jsonl_rejects_inner_stop_and_reports_line() {
    let mut items = example_paragraph();
    items[1].actions = vec![Action::Stop, Action::Forward];
    let text = to_jsonl(&items);
    match read_jsonl(text.as_bytes()) {
        Err(CorpusError::Json { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected a line error, got {other:?}"),
    }
}

#[test]
fn fold_vocabulary_matches_word_count_oracle() {
    let items = small_corpus(1);
    for fold in make_folds(&items, Protocol::VDev, 3).unwrap() {
        let vocab = build_vocab(&fold.train_items);
        let mut histogram: BTreeMap<&str, usize> = BTreeMap::new();
        for i in &fold.train_items {
            for t in &i.tokens {
                *histogram.entry(t).or_default() += 1;
            }
        }
        assert_eq!(vocab.len(), histogram.len() + 1);
        // nothing seen only in the test map leaks in
        for t in fold.test_items.iter().flat_map(|i| &i.tokens) {
            assert_eq!(vocab.contains(t), histogram.contains_key(t.as_str()));
        }
    }
}

#[test]
fn vdev_folds_split_nine_to_one_by_paragraph() {
    let items = small_corpus(2);
    let folds = make_folds(&items, Protocol::VDev, 11).unwrap();
    assert_eq!(folds.len(), 3);
    for fold in &folds {
        let train = fold.train_items.len() as f64;
        let val = fold.validation_items.len() as f64;
        let share = val / (train + val);
        assert!((0.08..0.14).contains(&share), "validation share {share}");
        assert!(fold
            .train_items
            .iter()
            .chain(&fold.validation_items)
            .all(|i| i.map != fold.test_map));
        let train_ids: BTreeSet<_> = fold.train_items.iter().map(|i| (&i.map, &i.paragraph_id)).collect();
        assert!(fold
            .validation_items
            .iter()
            .all(|i| !train_ids.contains(&(&i.map, &i.paragraph_id))));
        assert_eq!(fold.stopping_tag(), "validation");
    }
}

#[test]
fn folds_partition_items_by_test_map() {
    let items = small_corpus(3);
    let folds = make_folds(&items, Protocol::VDev, 0).unwrap();
    let mut seen: Vec<SampleItem> = folds.iter().flat_map(|f| f.test_items.clone()).collect();
    sort_canonical(&mut seen);
    assert_eq!(seen, items);
}

#[test]
fn vdev_seeds_change_slice_not_union() {
    let items = small_corpus(4);
    let a = make_folds(&items, Protocol::VDev, 1).unwrap();
    let b = make_folds(&items, Protocol::VDev, 2).unwrap();
    let union = |f: &FoldSpec| {
        let mut all: Vec<_> = f.train_items.iter().chain(&f.validation_items).cloned().collect();
        sort_canonical(&mut all);
        all
    };
    assert!(a.iter().zip(&b).any(|(x, y)| x.validation_items != y.validation_items));
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(union(x), union(y));
    }
    assert_eq!(a, make_folds(&items, Protocol::VDev, 1).unwrap());
}

#[test]
fn vtest_uses_test_map_for_stopping() {
    let items = small_corpus(5);
    for fold in make_folds(&items, Protocol::VTest, 0).unwrap() {
        assert!(fold.validation_items.is_empty());
        assert_eq!(fold.stopping_tag(), fold.test_map);
        assert_eq!(fold.stopping_items(), fold.test_items.as_slice());
    }
}

#[test]
fn missing_map_is_a_fold_error() {
    let items: Vec<_> = small_corpus(6).into_iter().filter(|i| i.map != "jelly").collect();
    assert!(matches!(
        make_folds(&items, Protocol::VDev, 0),
        Err(CorpusError::Fold(_))
    ));
}

#[test]
fn synthesized_corpus_is_deterministic_and_walkable() {
    let maps = builtin_maps();
    let items = small_corpus(7);
    assert_eq!(items, small_corpus(7));
    assert_ne!(items, small_corpus(8));
    let dir = CorpusDir {
        items: items.clone(),
        maps,
    };
    dir.check().unwrap();
    assert!(items.iter().all(|i| i.feasible && !i.tokens.is_empty()));
    assert!(items.iter().any(|i| i.actions == [Action::Stop]));
    group_paragraphs(&items).unwrap();
}

#[test]
fn corpus_dir_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = CorpusDir {
        items: small_corpus(9),
        maps: builtin_maps(),
    };
    dir.write_to(tmp.path()).unwrap();
    let back = CorpusDir::load(tmp.path()).unwrap();
    assert_eq!(back.items, dir.items);
    assert_eq!(corpus_checksum(&back.items), corpus_checksum(&dir.items));
}

/// Writes `items` and `maps` in the raw XML layout, with raw coordinates
/// scaled, shifted and drawn with y growing downwards.
fn write_raw(root: &Path, maps: &[WorldMap], items: &[SampleItem]) {
    let raw = |x: i32, y: i32| (3 * x + 100, 40 - 3 * y);
    std::fs::create_dir_all(root.join("maps")).unwrap();
    for map in maps {
        let mut xml = format!("<map name=\"{}\">\n<nodes>\n", map.name().to_uppercase());
        for n in map.nodes() {
            let (x, y) = raw(n.x, n.y);
            let item = n.object.map_or("", |o| o.as_str());
            writeln!(xml, "<node x=\"{x}\" y=\"{y}\" item=\"{item}\"/>").unwrap();
        }
        xml.push_str("</nodes>\n<edges>\n");
        for e in map.edges() {
            let a = map.node(e.a).unwrap();
            let b = map.node(e.b).unwrap();
            let (ax, ay) = raw(a.x, a.y);
            let (bx, by) = raw(b.x, b.y);
            writeln!(
                xml,
                "<edge node1=\"{ax}, {ay}\" node2=\"{bx}, {by}\" floor=\"{}\" wall=\"{}\"/>",
                e.floor.as_str().to_uppercase(),
                e.painting.as_str()
            )
            .unwrap();
        }
        xml.push_str("</edges>\n</map>\n");
        std::fs::write(root.join("maps").join(format!("map-{}.xml", map.name())), xml).unwrap();
    }
    let mut xml = String::from("<examples>\n");
    for item in items {
        let map = maps.iter().find(|m| m.name() == item.map).unwrap();
        let poses = trace_sequence(map, item.start, item.moves()).unwrap();
        let path: Vec<String> = poses
            .iter()
            .map(|p| {
                let n = map.node(p.node).unwrap();
                let (x, y) = raw(n.x, n.y);
                format!("({x}, {y}, {})", p.orientation.degrees())
            })
            .collect();
        let text = item.instruction.replace('&', "&amp;").replace('<', "&lt;");
        writeln!(
            xml,
            "<example id=\"{}-{}\" map=\"{}\"><instruction>{text}</instruction><path>[{}]</path></example>",
            item.paragraph_id,
            item.sentence_index + 1,
            item.map.to_uppercase(),
            path.join(", ")
        )
        .unwrap();
    }
    xml.push_str("</examples>\n");
    std::fs::write(root.join("SingleSentence.xml"), xml).unwrap();
}

#[test]
fn convert_raw_recovers_actions_under_foreign_axes() {
    let maps = builtin_maps();
    let items = small_corpus(10);
    let tmp = tempfile::tempdir().unwrap();
    write_raw(tmp.path(), &maps, &items);
    let converted = convert_raw(tmp.path()).unwrap();
    assert_eq!(converted.maps.len(), 3);
    assert_eq!(converted.items.len(), items.len());
    converted.check().unwrap();
    for (a, b) in converted.items.iter().zip(&items) {
        assert_eq!(
            (&a.map, &a.paragraph_id, a.sentence_index),
            (&b.map, &b.paragraph_id, b.sentence_index)
        );
        assert_eq!(a.actions, b.actions, "item {}", b.key());
        assert_eq!(a.start.orientation, b.start.orientation);
        assert_eq!(a.instruction, b.instruction);
        assert!(a.feasible);
    }
    for (m, orig) in converted.maps.iter().zip(&maps) {
        assert_eq!(m.node_count(), orig.node_count());
        assert_eq!(m.edges().len(), orig.edges().len());
    }
}

#[test]
fn convert_raw_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let raw = tmp.path().join("raw");
    write_raw(&raw, &builtin_maps(), &small_corpus(11));
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    convert_raw(&raw).unwrap().write_to(&a).unwrap();
    convert_raw(&raw).unwrap().write_to(&b).unwrap();
    for rel in ["corpus.jsonl", "maps/grid.map", "maps/jelly.map", "maps/l.map"] {
        assert_eq!(
            std::fs::read(a.join(rel)).unwrap(),
            std::fs::read(b.join(rel)).unwrap(),
            "{rel}"
        );
    }
}

#[test]
fn convert_raw_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(convert_raw(tmp.path()), Err(CorpusError::Ingest(_))));

    let maps = builtin_maps();
    let mut items = small_corpus(12);
    items[0].map = "atlantis".into();
    write_raw(tmp.path(), &maps, &items[1..]);
    let bad = format!(
        "<examples><example id=\"{}-1\" map=\"ATLANTIS\"><instruction>go</instruction><path>[(0, 0, 0)]</path></example></examples>",
        items[0].paragraph_id
    );
    std::fs::write(tmp.path().join("extra.xml"), bad).unwrap();
    match convert_raw(tmp.path()) {
        Err(CorpusError::Ingest(msg)) => {
            assert!(msg.contains(&items[0].paragraph_id), "{msg}");
            assert!(msg.contains("atlantis"), "{msg}");
        }
        other => panic!("expected ingest error, got {other:?}"),
    }
}

#[test]
fn convert_raw_flags_paths_through_walls() {
    let maps = builtin_maps();
    let grid = &maps[0];
    let tmp = tempfile::tempdir().unwrap();
    let mut items = small_corpus(13);
    items.retain(|i| i.map != "grid");
    write_raw(tmp.path(), &maps, &items);
    // two horizontally adjacent nodes with no hallway between them
    let (a, b) = grid
        .nodes()
        .flat_map(|n| grid.nodes().map(move |m| (n, m)))
        .find(|(n, m)| m.x == n.x + 1 && m.y == n.y && grid.exit(n.id, Heading::East).is_none())
        .unwrap();
    let raw = |x: i32, y: i32| (3 * x + 100, 40 - 3 * y);
    let ((ax, ay), (bx, by)) = (raw(a.x, a.y), raw(b.x, b.y));
    let xml = format!(
        "<examples><example id=\"wall-1\" map=\"GRID\"><instruction>walk through the wall</instruction>\
         <path>[({ax}, {ay}, 90), ({bx}, {by}, 90)]</path></example></examples>"
    );
    std::fs::write(tmp.path().join("wall.xml"), xml).unwrap();
    let out = convert_raw(tmp.path()).unwrap();
    let item = out.items.iter().find(|i| i.paragraph_id == "wall").unwrap();
    assert!(!item.feasible);
    assert_eq!(item.actions, [Action::Forward, Action::Stop]);
    assert_eq!(item.start.orientation, Heading::East);
    assert_eq!(item.sentence_index, 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn synthesized_items_replay(seed in any::<u64>()) {
        let maps = builtin_maps();
        let cfg = SynthConfig { paragraphs_per_map: 4, seed, ..SynthConfig::default() };
        let items = synthesize(&maps, &cfg);
        for item in &items {
            let map = maps.iter().find(|m| m.name() == item.map).unwrap();
            prop_assert!(item.replays(map), "item {}", item.key());
            prop_assert!(!item.tokens.is_empty());
        }
    }

    #[test]
    fn tokens_never_contain_whitespace(text in "[ a-zA-Z.,'!?-]{0,40}") {
        let tokens = tokenize(&text);
        prop_assert!(tokens.iter().all(|t| !t.is_empty() && !t.contains(char::is_whitespace)));
        let joined: String = tokens.concat();
        let expected: String = text.to_lowercase().chars().filter(|c| !c.is_whitespace()).collect();
        prop_assert_eq!(joined, expected);
    }
}
