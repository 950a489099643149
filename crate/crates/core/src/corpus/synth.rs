//! Templated instruction generator over the bundled maps.
//!
//! Stands in for the original corpus in tests, smoke runs and demos. Every
//! template is grounded in what the agent can observe, so a model can learn
//! it; the language is deliberately narrow.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ndiff::{seeded_rng, split_seed};
use crate::worldsim::{execute_sequence, Action, AgentPose, Floor, Heading, NodeId, Object, WorldMap};

use super::{stop_terminated, tokenize, SampleItem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub paragraphs_per_map: usize,
    pub max_sentences: usize,
    /// Probability that a sentence gets one transposed-letter typo.
    pub typo_rate: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            paragraphs_per_map: 60,
            max_sentences: 4,
            typo_rate: 0.03,
            seed: 0,
        }
    }
}

/// Generates paragraphs on every map. Output is in canonical order and
/// depends only on the maps and `cfg`.
pub fn synthesize(maps: &[WorldMap], cfg: &SynthConfig) -> Vec<SampleItem> {
    let mut items = Vec::new();
    for (m, map) in maps.iter().enumerate() {
        let starts: Vec<NodeId> = map
            .nodes()
            .filter(|n| map.neighbors(n.id).next().is_some())
            .map(|n| n.id)
            .collect();
        if starts.is_empty() {
            continue;
        }
        for p in 0..cfg.paragraphs_per_map {
            let mut rng = seeded_rng(split_seed(split_seed(cfg.seed, m as u64), p as u64));
            let id = format!("{}-s{p:04}", map.name());
            items.extend(paragraph(map, &starts, &id, cfg, &mut rng));
        }
    }
    super::sort_canonical(&mut items);
    items
}

fn paragraph(map: &WorldMap, starts: &[NodeId], id: &str, cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<SampleItem> {
    let node = *starts.choose(rng).expect("non-empty");
    let mut pose = AgentPose::new(node, Heading::from_index(rng.gen_range(0..4)));
    let count = rng.gen_range(1..=cfg.max_sentences.max(1));
    let mut out = Vec::with_capacity(count);
    for s in 0..count {
        let (text, moves) = sentence(map, pose, rng);
        let mut text = finish(&text);
        if rng.gen_bool(cfg.typo_rate.clamp(0.0, 1.0)) {
            text = with_typo(&text, rng);
        }
        let actions = stop_terminated(moves);
        let end = execute_sequence(map, pose, &actions).expect("templates only emit walkable moves");
        out.push(SampleItem {
            map: map.name().to_string(),
            paragraph_id: id.to_string(),
            sentence_index: s as u32,
            tokens: tokenize(&text),
            instruction: text,
            actions,
            start: pose,
            end,
            feasible: true,
        });
        pose = end;
    }
    out
}

type Template = fn(&WorldMap, AgentPose, &mut ChaCha8Rng) -> Option<(String, Vec<Action>)>;

const TEMPLATES: [Template; 7] = [
    turn,
    forward_n,
    end_of_hall,
    to_object,
    face_floor,
    describe,
    turn_then_forward,
];

fn sentence(map: &WorldMap, pose: AgentPose, rng: &mut ChaCha8Rng) -> (String, Vec<Action>) {
    let mut order = TEMPLATES;
    order.shuffle(rng);
    order
        .iter()
        .find_map(|t| t(map, pose, rng))
        .expect("the turn template always applies")
}

/// Nodes passed when walking straight from `pose` until the hall ends.
fn corridor(map: &WorldMap, node: NodeId, heading: Heading) -> Vec<(NodeId, Floor)> {
    let mut out = Vec::new();
    let mut at = node;
    while let Some((next, edge)) = map.exit(at, heading) {
        out.push((next, edge.floor));
        at = next;
    }
    out
}

const COUNTS: [&str; 4] = ["one", "two", "three", "four"];

fn pick<'a>(rng: &mut ChaCha8Rng, options: &[&'a str]) -> &'a str {
    options.choose(rng).copied().expect("non-empty")
}

fn segments(n: usize) -> String {
    if n == 1 {
        "one segment".to_string()
    } else {
        format!("{} segments", COUNTS[n - 1])
    }
}

fn floor_word(rng: &mut ChaCha8Rng, floor: Floor) -> &'static str {
    match floor {
        Floor::Grass => "grass",
        Floor::Brick => "brick",
        Floor::Wood => pick(rng, &["wood", "wooden"]),
        Floor::Gravel => pick(rng, &["gravel", "stone"]),
        Floor::Blue => pick(rng, &["blue", "blue-tiled"]),
        Floor::Flower => pick(rng, &["flower", "flowered"]),
        Floor::Octagon => pick(rng, &["yellow", "octagon"]),
    }
}

fn object_word(rng: &mut ChaCha8Rng, object: Object) -> &'static str {
    match object {
        Object::Hatrack => pick(rng, &["hatrack", "coat rack"]),
        Object::Lamp => "lamp",
        Object::Chair => "chair",
        Object::Sofa => pick(rng, &["sofa", "couch"]),
        Object::Barstool => pick(rng, &["barstool", "stool"]),
        Object::Easel => "easel",
    }
}

fn turn(_: &WorldMap, _: AgentPose, rng: &mut ChaCha8Rng) -> Option<(String, Vec<Action>)> {
    Some(match rng.gen_range(0..5) {
        0 | 1 => (
            pick(rng, &["turn left", "go left", "make a left", "take a left"]).into(),
            vec![Action::TurnLeft],
        ),
        2 | 3 => (
            pick(rng, &["turn right", "go right", "make a right", "take a right"]).into(),
            vec![Action::TurnRight],
        ),
        _ => (
            pick(rng, &["turn around", "turn all the way around"]).into(),
            vec![Action::TurnLeft, Action::TurnLeft],
        ),
    })
}

fn forward_n(map: &WorldMap, pose: AgentPose, rng: &mut ChaCha8Rng) -> Option<(String, Vec<Action>)> {
    let room = corridor(map, pose.node, pose.orientation).len().min(COUNTS.len());
    if room == 0 {
        return None;
    }
    let n = rng.gen_range(1..=room);
    let verb = pick(rng, &["go forward", "move forward", "walk forward"]);
    Some((format!("{verb} {}", segments(n)), vec![Action::Forward; n]))
}

fn end_of_hall(map: &WorldMap, pose: AgentPose, rng: &mut ChaCha8Rng) -> Option<(String, Vec<Action>)> {
    let n = corridor(map, pose.node, pose.orientation).len();
    if n == 0 {
        return None;
    }
    let text = pick(
        rng,
        &[
            "go to the end of the hall",
            "walk all the way down the hall",
            "go forward until the hall ends",
        ],
    );
    Some((text.into(), vec![Action::Forward; n]))
}

fn to_object(map: &WorldMap, pose: AgentPose, rng: &mut ChaCha8Rng) -> Option<(String, Vec<Action>)> {
    let mut seen: Vec<(Object, usize)> = Vec::new();
    for (d, (node, _)) in corridor(map, pose.node, pose.orientation).iter().enumerate() {
        if let Some(obj) = map.node(*node).and_then(|n| n.object) {
            if !seen.iter().any(|(o, _)| *o == obj) {
                seen.push((obj, d + 1));
            }
        }
    }
    let &(obj, d) = seen.choose(rng)?;
    let word = object_word(rng, obj);
    let text = match rng.gen_range(0..3) {
        0 => format!("go forward until you reach the {word}"),
        1 => format!("walk to the {word}"),
        _ => format!("move to the intersection with the {word}"),
    };
    Some((text, vec![Action::Forward; d]))
}

fn face_floor(map: &WorldMap, pose: AgentPose, rng: &mut ChaCha8Rng) -> Option<(String, Vec<Action>)> {
    let h = pose.orientation;
    let dirs = [
        (h.left(), vec![Action::TurnLeft]),
        (h.right(), vec![Action::TurnRight]),
        (h.opposite(), vec![Action::TurnLeft, Action::TurnLeft]),
    ];
    let bag = |heading| -> Vec<Floor> { corridor(map, pose.node, heading).into_iter().map(|(_, f)| f).collect() };
    let ahead = bag(h);
    let bags: Vec<Vec<Floor>> = dirs.iter().map(|(d, _)| bag(*d)).collect();
    let mut options = Vec::new();
    for (i, (_, actions)) in dirs.iter().enumerate() {
        for &f in &bags[i] {
            let unique = !ahead.contains(&f) && bags.iter().enumerate().all(|(j, b)| j == i || !b.contains(&f));
            if unique && !options.iter().any(|(g, _)| *g == f) {
                options.push((f, actions.clone()));
            }
        }
    }
    let (floor, actions) = options.choose(rng)?.clone();
    let word = floor_word(rng, floor);
    let text = match rng.gen_range(0..3) {
        0 => format!("face the {word} hall"),
        1 => format!("turn to face the {word} hallway"),
        _ => format!("orient yourself along the {word} hall"),
    };
    Some((text, actions))
}

fn describe(map: &WorldMap, pose: AgentPose, rng: &mut ChaCha8Rng) -> Option<(String, Vec<Action>)> {
    let obj = map.node(pose.node)?.object?;
    let word = object_word(rng, obj);
    let text = match rng.gen_range(0..2) {
        0 => format!("this intersection contains a {word}"),
        _ => format!("there is a {word} here"),
    };
    Some((text, Vec::new()))
}

fn turn_then_forward(map: &WorldMap, pose: AgentPose, rng: &mut ChaCha8Rng) -> Option<(String, Vec<Action>)> {
    let (side, action, heading) = if rng.gen_bool(0.5) {
        ("left", Action::TurnLeft, pose.orientation.left())
    } else {
        ("right", Action::TurnRight, pose.orientation.right())
    };
    let room = corridor(map, pose.node, heading).len().min(3);
    if room == 0 {
        return None;
    }
    let n = rng.gen_range(1..=room);
    let mut actions = vec![action];
    actions.extend(std::iter::repeat_n(Action::Forward, n));
    Some((format!("turn {side} and go forward {}", segments(n)), actions))
}

fn finish(text: &str) -> String {
    let mut chars = text.chars();
    match chars.next() {
        Some(c) => format!("{}{}.", c.to_uppercase(), chars.as_str()),
        None => String::new(),
    }
}

/// Swaps two adjacent interior letters of one word with at least four letters.
fn with_typo(text: &str, rng: &mut ChaCha8Rng) -> String {
    let mut words: Vec<String> = text.split(' ').map(str::to_string).collect();
    let candidates: Vec<usize> = (0..words.len())
        .filter(|&i| words[i].chars().filter(|c| c.is_alphabetic()).count() >= 4 && words[i].is_ascii())
        .collect();
    let Some(&w) = candidates.choose(rng) else {
        return text.to_string();
    };
    let mut bytes = words[w].clone().into_bytes();
    let letters: Vec<usize> = (1..bytes.len().saturating_sub(2))
        .filter(|&i| bytes[i].is_ascii_alphabetic() && bytes[i + 1].is_ascii_alphabetic())
        .collect();
    if let Some(&i) = letters.choose(rng) {
        bytes.swap(i, i + 1);
    }
    words[w] = String::from_utf8(bytes).expect("ASCII word");
    words.join(" ")
}
