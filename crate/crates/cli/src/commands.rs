use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use walklab::corpus::{
    convert_raw, corpus_checksum, group_paragraphs, make_folds, synthesize, tokenize, CorpusDir, FoldSpec, Protocol,
    SynthConfig, Vocabulary, CORPUS_FILE,
};
use walklab::eval::{
    ablation_sweep, eval_multi, eval_single, partition_fingerprint, render_alignment, render_path, EvalReport, Task,
};
use walklab::inference::{follow_paragraph, trace_actions, Decoded, SearchLimits, StepTrace};
use walklab::ndiff::AdamConfig;
use walklab::seq2seq::{ModelConfig, Variant};
use walklab::trainer::{train_ensemble, Optimizer, TrainRunConfig};
use walklab::worldsim::{builtin_maps, Action, AgentPose, Heading, WorldMap, MAP_NAMES};
use walklab::Model;

use crate::error::CliError;
use crate::manifest::{sidecar, ManifestBuilder};
use crate::settings::Settings;
use crate::{AblateArgs, EvalArgs, FollowArgs, IngestArgs, TrainArgs, TrainingFlags, VisualizeArgs};

const RUN_FILE: &str = "run.json";
const VOCAB_FILE: &str = "vocab.json";
const MANIFEST_FILE: &str = "manifest.json";

fn member_file(i: usize) -> String {
    format!("member-{i:02}.wlk")
}

/// What `train` did, read back by `eval`.
#[derive(Debug, Serialize, Deserialize)]
struct RunInfo {
    protocol: Protocol,
    seed: u64,
    variant: Variant,
    model: ModelConfig,
    train: TrainRunConfig,
    folds: Vec<String>,
    partition_fingerprint: String,
    corpus_checksum: String,
}

fn load_corpus(dir: &Path) -> Result<CorpusDir, CliError> {
    if !dir.join(CORPUS_FILE).is_file() {
        return Err(CliError::user(format!("{} has no {CORPUS_FILE}", dir.display())));
    }
    Ok(CorpusDir::load(dir)?)
}

fn maps_from(data: Option<&Path>) -> Result<Vec<WorldMap>, CliError> {
    match data {
        Some(d) => Ok(load_corpus(d)?.maps),
        None => Ok(builtin_maps()),
    }
}

fn find_map<'m>(maps: &'m [WorldMap], name: &str) -> Result<&'m WorldMap, CliError> {
    maps.iter().find(|m| m.name() == name).ok_or_else(|| {
        CliError::user(format!(
            "unknown map `{name}` (expected one of {})",
            MAP_NAMES.join(", ")
        ))
    })
}

fn settings(flags: &TrainingFlags) -> Result<Settings, CliError> {
    let mut s = Settings::load(flags.config.as_deref())?;
    if let Some(p) = flags.protocol {
        s.train.protocol = p;
    }
    if let Some(n) = flags.ensemble {
        s.train.ensemble_size = n;
    }
    if let Some(seed) = flags.seed {
        s.train.seed = seed;
    }
    if let Some(e) = flags.epochs {
        s.train.max_epochs = e;
    }
    if let Some(h) = flags.hidden {
        s.model.hidden_size = h;
        s.model.embed_size = h;
    }
    if let Some(lr) = flags.learning_rate {
        s.train.optimizer = match s.train.optimizer {
            Optimizer::Adam(c) => Optimizer::Adam(AdamConfig { step_size: lr, ..c }),
            Optimizer::Sgd { .. } => Optimizer::Sgd { learning_rate: lr },
        };
    }
    if flags.limit_train.is_some() {
        s.train.train_limit = flags.limit_train;
    }
    s.train.validate()?;
    s.model.validate()?;
    Ok(s)
}

fn limits(config: &ModelConfig) -> SearchLimits {
    SearchLimits {
        per_sentence: config.max_sentence_actions,
        per_paragraph: config.max_paragraph_actions,
    }
}

pub fn ingest(a: &IngestArgs) -> Result<(), CliError> {
    let corpus = match a.raw() {
        Some(raw) => {
            if !raw.is_dir() {
                return Err(CliError::user(format!("{} is not a directory", raw.display())));
            }
            convert_raw(raw)?
        }
        None => {
            let maps = builtin_maps();
            let cfg = SynthConfig {
                paragraphs_per_map: a.paragraphs,
                seed: a.seed,
                ..SynthConfig::default()
            };
            CorpusDir {
                items: synthesize(&maps, &cfg),
                maps,
            }
        }
    };
    corpus.check()?;
    corpus.write_to(&a.out)?;
    let mut m = ManifestBuilder::new("ingest");
    m.record(&a.out.join(CORPUS_FILE));
    for map in &corpus.maps {
        m.record(
            &a.out
                .join(walklab::corpus::MAPS_DIR)
                .join(format!("{}.map", map.name())),
        );
    }
    m.corpus_checksum = Some(corpus_checksum(&corpus.items));
    if a.raw().is_none() {
        m.seeds.push(a.seed);
    }
    m.finish(&a.out.join(MANIFEST_FILE))?;
    let infeasible = corpus.items.iter().filter(|i| !i.feasible).count();
    println!(
        "wrote {} items ({} infeasible) to {}",
        corpus.items.len(),
        infeasible,
        a.out.display()
    );
    Ok(())
}

fn select_folds(folds: Vec<FoldSpec>, which: &str) -> Result<Vec<FoldSpec>, CliError> {
    if which == "all" {
        return Ok(folds);
    }
    let picked: Vec<FoldSpec> = folds.into_iter().filter(|f| f.test_map == which).collect();
    if picked.is_empty() {
        return Err(CliError::user(format!(
            "unknown fold `{which}` (expected grid, jelly, l or all)"
        )));
    }
    Ok(picked)
}

pub fn train(a: &TrainArgs) -> Result<(), CliError> {
    let s = settings(&a.flags)?;
    let base = a.variant.apply(&s.model);
    let corpus = load_corpus(&a.flags.data)?;
    let all_folds = make_folds(&corpus.items, s.train.protocol, s.train.seed)?;
    let partition = partition_fingerprint(&all_folds);
    let folds = select_folds(all_folds, &a.fold)?;

    let mut m = ManifestBuilder::new("train");
    m.config_fingerprint = Some(
        Settings {
            model: base.clone(),
            train: s.train.clone(),
        }
        .fingerprint(),
    );
    m.corpus_checksum = Some(corpus_checksum(&corpus.items));
    m.seeds = (0..s.train.ensemble_size as u64)
        .map(|i| s.train.seed.wrapping_add(i))
        .collect();

    for fold in &folds {
        log::info!("training fold {} ({} items)", fold.test_map, fold.train_items.len());
        let trained = train_ensemble::<f64>(fold, &corpus.maps, &base, &s.train)?;
        let dir = a.out.join(&fold.test_map);
        m.write(&dir.join(VOCAB_FILE), trained[0].vocab.to_json())?;
        for (i, t) in trained.iter().enumerate() {
            m.write(&dir.join(member_file(i)), t.model.to_bytes())?;
            m.write(&dir.join(format!("history-{i:02}.csv")), t.history.to_csv(false))?;
            println!(
                "fold {} member {i}: stopped at epoch {} with {} {}",
                fold.test_map,
                t.history.stopping_epoch,
                fold.stopping_tag(),
                t.history.best_metric().map_or("n/a".into(), |v| format!("{v:.4}"))
            );
        }
    }
    let info = RunInfo {
        protocol: s.train.protocol,
        seed: s.train.seed,
        variant: a.variant,
        model: base,
        train: s.train.clone(),
        folds: folds.iter().map(|f| f.test_map.clone()).collect(),
        partition_fingerprint: partition,
        corpus_checksum: corpus_checksum(&corpus.items),
    };
    m.write(&a.out.join(RUN_FILE), serde_json::to_string_pretty(&info)? + "\n")?;
    m.finish(&a.out.join(MANIFEST_FILE))?;
    Ok(())
}

/// Members and vocabulary of one fold directory.
fn load_fold(dir: &Path) -> Result<(Vec<Model>, Vocabulary), CliError> {
    let vocab_path = dir.join(VOCAB_FILE);
    if !vocab_path.is_file() {
        return Err(CliError::user(format!(
            "{} is not a model directory (no {VOCAB_FILE})",
            dir.display()
        )));
    }
    let vocab = Vocabulary::from_json(&fs::read_to_string(&vocab_path)?)
        .map_err(|e| CliError::data(format!("{}: {e}", vocab_path.display())))?;
    let mut members = Vec::new();
    while dir.join(member_file(members.len())).is_file() {
        members.push(Model::load(&dir.join(member_file(members.len())))?);
    }
    if members.is_empty() {
        return Err(CliError::data(format!("{} holds no checkpoints", dir.display())));
    }
    if members[0].config().vocab_size != vocab.len() {
        return Err(CliError::data(format!(
            "{}: checkpoint vocabulary size {} does not match {VOCAB_FILE} ({})",
            dir.display(),
            members[0].config().vocab_size,
            vocab.len()
        )));
    }
    Ok((members, vocab))
}

pub fn eval(a: &EvalArgs) -> Result<(), CliError> {
    let run_path = a.model.join(RUN_FILE);
    let info: RunInfo = serde_json::from_str(
        &fs::read_to_string(&run_path)
            .map_err(|e| CliError::user(format!("cannot read {}: {e}", run_path.display())))?,
    )?;
    if let Some(p) = a.protocol {
        if p != info.protocol {
            return Err(CliError::user(format!(
                "models were trained under {}, not {p}",
                info.protocol
            )));
        }
    }
    let corpus = load_corpus(&a.data)?;
    let checksum = corpus_checksum(&corpus.items);
    if checksum != info.corpus_checksum {
        return Err(CliError::data("corpus differs from the one the models were trained on"));
    }
    let folds = make_folds(&corpus.items, info.protocol, info.seed)?;
    if partition_fingerprint(&folds) != info.partition_fingerprint {
        return Err(CliError::data("fold partition differs from training"));
    }
    let k = a.beam.unwrap_or(info.model.beam_width);
    if k == 0 {
        return Err(CliError::user("--beam must be at least 1"));
    }
    let limits = limits(&info.model);
    let mut results = Vec::new();
    for fold in folds.iter().filter(|f| info.folds.contains(&f.test_map)) {
        let (members, vocab) = load_fold(&a.model.join(&fold.test_map))?;
        let r = match a.task {
            Task::Single => eval_single(
                &members,
                &vocab,
                &fold.test_map,
                &fold.test_items,
                &corpus.maps,
                k,
                limits,
            )?,
            Task::Multi => {
                let paragraphs = group_paragraphs(&fold.test_items)?;
                eval_multi(&members, &vocab, &fold.test_map, &paragraphs, &corpus.maps, k, limits)?
            }
        };
        println!("{} {}: {}/{}", a.task, fold.test_map, r.successes, r.items);
        results.push(r);
    }
    let report = EvalReport::new(a.task, info.protocol, k, limits, results);
    let mut m = ManifestBuilder::new("eval");
    m.config_fingerprint = Some(
        Settings {
            model: info.model.clone(),
            train: info.train.clone(),
        }
        .fingerprint(),
    );
    m.corpus_checksum = Some(checksum);
    m.seeds = vec![info.seed];
    m.write(&a.report, report.to_json() + "\n")?;
    m.finish(&sidecar(&a.report))?;
    match report.accuracy {
        Some(acc) => println!(
            "{} accuracy {:.2}% ({}/{})",
            a.task,
            100.0 * acc,
            report.successes,
            report.items
        ),
        None => println!("{} accuracy undefined (no items)", a.task),
    }
    Ok(())
}

/// Splits after `.`, `!` or `?` followed by whitespace or the end.
pub fn split_sentences(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current = String::new();
    let mut chars = text.chars().peekable();
    while let Some(c) = chars.next() {
        current.push(c);
        if matches!(c, '.' | '!' | '?') && chars.peek().is_none_or(|n| n.is_whitespace()) {
            out.push(std::mem::take(&mut current));
        }
    }
    out.push(current);
    out.into_iter()
        .map(|s| s.trim().to_string())
        .filter(|s| !tokenize(s).is_empty())
        .collect()
}

pub fn parse_pose(text: &str) -> Result<AgentPose, CliError> {
    let bad = || CliError::user(format!("invalid start `{text}` (expected NODE,DEGREES such as 14,90)"));
    let (node, deg) = text.split_once(',').ok_or_else(bad)?;
    let node = node.trim().parse().map_err(|_| bad())?;
    let deg: u16 = deg.trim().parse().map_err(|_| bad())?;
    Ok(AgentPose::new(node, Heading::from_degrees(deg).ok_or_else(bad)?))
}

#[derive(Debug, Serialize, Deserialize)]
struct SentenceTrace {
    text: String,
    start: AgentPose,
    trace: StepTrace,
}

/// Everything `visualize` needs.
#[derive(Debug, Serialize, Deserialize)]
struct FollowTrace {
    map: String,
    start: AgentPose,
    beam_width: usize,
    decoded: Decoded,
    sentences: Vec<SentenceTrace>,
}

pub fn follow(a: &FollowArgs) -> Result<(), CliError> {
    let maps = maps_from(a.data.as_deref())?;
    let map = find_map(&maps, &a.map)?;
    let start = parse_pose(&a.start)?;
    if !map.contains(start.node) {
        return Err(CliError::user(format!("node {} is not on map {}", start.node, a.map)));
    }
    let dir: PathBuf = if a.model.join(VOCAB_FILE).is_file() {
        a.model.clone()
    } else {
        a.model.join(a.fold.as_deref().unwrap_or(&a.map))
    };
    let (members, vocab) = load_fold(&dir)?;
    let config = members[0].config().clone();
    let k = a.beam.unwrap_or(config.beam_width);
    if k == 0 {
        return Err(CliError::user("--beam must be at least 1"));
    }
    let texts = split_sentences(&a.instruction);
    let tokens: Vec<Vec<String>> = texts.iter().map(|t| tokenize(t)).collect();
    let ids: Vec<Vec<usize>> = tokens.iter().map(|t| vocab.encode(t)).collect();
    let decoded = follow_paragraph(&members, &ids, map, start, k, limits(&config))?;

    let summary = serde_json::json!({
        "map": a.map,
        "start": start,
        "end": decoded.end,
        "status": decoded.status,
        "log_prob": decoded.log_prob,
        "sentences": texts.iter().zip(&decoded.sentences).map(|(t, acts)| serde_json::json!({"text": t, "actions": acts})).collect::<Vec<_>>(),
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);

    if let Some(path) = &a.trace {
        let mut pose = start;
        let mut sentences = Vec::new();
        for (i, acts) in decoded.sentences.iter().enumerate() {
            let trace = trace_actions(&members, &ids[i], &tokens[i], map, pose, acts)?;
            sentences.push(SentenceTrace {
                text: texts[i].clone(),
                start: pose,
                trace,
            });
            pose = walklab::worldsim::execute_sequence(map, pose, acts).map_err(|e| CliError::data(e.to_string()))?;
        }
        let file = FollowTrace {
            map: a.map.clone(),
            start,
            beam_width: k,
            decoded,
            sentences,
        };
        let mut m = ManifestBuilder::new("follow");
        m.config_fingerprint = Some(config.fingerprint_hex());
        m.write(path, serde_json::to_string_pretty(&file)? + "\n")?;
        m.finish(&sidecar(path))?;
    }
    Ok(())
}

fn parse_variants(text: &str) -> Result<Vec<Variant>, CliError> {
    if text == "all" {
        return Ok(Variant::ALL.to_vec());
    }
    text.split(',')
        .map(|v| v.trim().parse::<Variant>().map_err(CliError::user))
        .collect()
}

pub fn ablate(a: &AblateArgs) -> Result<(), CliError> {
    let s = settings(&a.flags)?;
    let variants = parse_variants(&a.variants)?;
    let corpus = load_corpus(&a.flags.data)?;
    let k = a.beam.unwrap_or(s.model.beam_width);
    if k == 0 {
        return Err(CliError::user("--beam must be at least 1"));
    }
    let table = ablation_sweep::<f64>(
        &corpus.items,
        &corpus.maps,
        &s.model,
        &s.train,
        &variants,
        k,
        limits(&s.model),
    )?;
    let csv = table.to_csv();
    let mut m = ManifestBuilder::new("ablate");
    m.config_fingerprint = Some(s.fingerprint());
    m.corpus_checksum = Some(corpus_checksum(&corpus.items));
    m.seeds = (0..s.train.ensemble_size as u64)
        .map(|i| s.train.seed.wrapping_add(i))
        .collect();
    m.write(&a.out, serde_json::to_string_pretty(&table)? + "\n")?;
    m.write(&a.out.with_extension("csv"), &csv)?;
    m.finish(&sidecar(&a.out))?;
    print!("{csv}");
    Ok(())
}

pub fn visualize(a: &VisualizeArgs) -> Result<(), CliError> {
    let text =
        fs::read_to_string(&a.trace).map_err(|e| CliError::user(format!("cannot read {}: {e}", a.trace.display())))?;
    let trace: FollowTrace = serde_json::from_str(&text)?;
    let sentence = trace.sentences.get(a.sentence).ok_or_else(|| {
        CliError::user(format!(
            "trace has {} sentence(s); --sentence {} is out of range",
            trace.sentences.len(),
            a.sentence
        ))
    })?;
    let heat = render_alignment(
        &sentence.trace.alignment,
        &sentence.trace.tokens,
        &sentence.trace.actions,
    )?;
    let mut m = ManifestBuilder::new("visualize");
    m.write(&a.out, &heat.svg)?;
    if let Some(raster) = &a.raster {
        m.write(raster, &heat.pgm)?;
    }
    if let Some(path) = &a.path {
        let maps = maps_from(a.data.as_deref())?;
        let map = find_map(&maps, &trace.map)?;
        // Sentence-final STOPs are boundaries, not the end of the walk.
        let mut actions: Vec<Action> = trace
            .decoded
            .actions()
            .into_iter()
            .filter(|a| *a != Action::Stop)
            .collect();
        if trace.decoded.actions().last() == Some(&Action::Stop) {
            actions.push(Action::Stop);
        }
        m.write(path, render_path(map, trace.start, &actions)?)?;
    }
    m.finish(&sidecar(&a.out))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sentences_split_on_terminal_punctuation() {
        assert_eq!(
            split_sentences("Turn left. Go forward twice!  Stop at the lamp?"),
            ["Turn left.", "Go forward twice!", "Stop at the lamp?"]
        );
        assert_eq!(split_sentences("go to 3.5 then stop"), ["go to 3.5 then stop"]);
        assert!(split_sentences(" ").is_empty());
    }

    #[test]
    fn poses_parse() {
        assert_eq!(parse_pose("14,90").unwrap(), AgentPose::new(14, Heading::East));
        assert_eq!(parse_pose(" 3 , 270").unwrap(), AgentPose::new(3, Heading::West));
        for bad in ["14", "x,90", "14,45", "14,360"] {
            assert!(parse_pose(bad).is_err(), "{bad}");
        }
    }
}
