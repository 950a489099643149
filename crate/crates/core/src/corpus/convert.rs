//! Conversion of the original XML distribution into the canonical layout.
//!
//! Accepted layout (the SAIL XML release): a directory tree of
//! `.xml` files, searched recursively in sorted path order.
//!
//! * A file whose root element is `<map name="...">` describes one world:
//!   `<node x=".." y=".." item=".."/>` elements and
//!   `<edge node1="x, y" node2="x, y" floor=".." wall=".."/>` elements.
//!   `item` may be empty; `painting` is accepted in place of `wall`.
//! * Any other file may hold `<example>` elements with attributes `id` and
//!   `map`, a child `<instruction>` with the raw sentence and a child
//!   `<path>` of the form `[(x, y, deg), (x, y, deg), ...]`. The example id
//!   is `PARAGRAPH-SENTENCE`; a `paragraph`/`sentence` attribute pair
//!   overrides it.
//!
//! Raw coordinates are compressed to consecutive grid indices, and the
//! orientation convention (which raw direction is 0 degrees, and the sense
//! of rotation) is inferred from the forward moves in the paths so that the
//! output uses north = +y with clockwise degrees.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use crate::worldsim::{
    execute_sequence, Action, AgentPose, Edge, Floor, Heading, Node, NodeId, Object, Painting, WorldMap,
};

use super::{sort_canonical, stop_terminated, tokenize, CorpusDir, CorpusError, SampleItem};

type RawPoint = (i64, i64);

struct RawMap {
    name: String,
    nodes: Vec<(RawPoint, Option<Object>)>,
    edges: Vec<(RawPoint, RawPoint, Floor, Painting)>,
}

struct RawExample {
    map: String,
    paragraph: String,
    sentence: i64,
    instruction: String,
    path: Vec<(i64, i64, Option<i64>)>,
}

pub fn convert_raw(dir: &Path) -> Result<CorpusDir, CorpusError> {
    let mut files = Vec::new();
    collect_xml(dir, &mut files)?;
    files.sort();
    if files.is_empty() {
        return Err(CorpusError::Ingest(format!("no .xml files under {}", dir.display())));
    }
    let mut raw_maps = Vec::new();
    let mut examples = Vec::new();
    for file in &files {
        let text = fs::read_to_string(file)?;
        let doc =
            roxmltree::Document::parse(&text).map_err(|e| CorpusError::Ingest(format!("{}: {e}", file.display())))?;
        let root = doc.root_element();
        if root.has_tag_name("map") {
            raw_maps.push(parse_map(root, file)?);
        } else {
            for ex in root.descendants().filter(|n| n.has_tag_name("example")) {
                examples.push(parse_example(ex, file)?);
            }
        }
    }
    if raw_maps.is_empty() {
        return Err(CorpusError::Ingest(format!("no map documents under {}", dir.display())));
    }
    if examples.is_empty() {
        return Err(CorpusError::Ingest(format!(
            "no <example> elements under {}",
            dir.display()
        )));
    }
    raw_maps.sort_by(|a, b| a.name.cmp(&b.name));
    if let Some(w) = raw_maps.windows(2).find(|w| w[0].name == w[1].name) {
        return Err(CorpusError::Ingest(format!("map `{}` defined twice", w[0].name)));
    }
    for ex in &examples {
        if !raw_maps.iter().any(|m| m.name == ex.map) {
            return Err(CorpusError::Ingest(format!(
                "paragraph {} references unknown map `{}`",
                ex.paragraph, ex.map
            )));
        }
    }

    let frames: BTreeMap<String, Frame> = raw_maps.iter().map(|m| (m.name.clone(), Frame::compress(m))).collect();
    let transform = infer_transform(&examples, &frames);

    let mut maps = Vec::new();
    let mut cells: BTreeMap<String, BTreeMap<(i32, i32), NodeId>> = BTreeMap::new();
    for raw in &raw_maps {
        let frame = &frames[&raw.name];
        let mut by_cell = BTreeMap::new();
        let mut ordered: Vec<_> = raw
            .nodes
            .iter()
            .map(|(p, obj)| (transform.apply(frame.of(*p)), *obj))
            .collect();
        ordered.sort_by_key(|((x, y), _)| (*y, *x));
        let nodes: Vec<Node> = ordered
            .iter()
            .enumerate()
            .map(|(i, ((x, y), object))| {
                by_cell.insert((*x, *y), i as NodeId);
                Node {
                    id: i as NodeId,
                    x: *x,
                    y: *y,
                    object: *object,
                }
            })
            .collect();
        let mut edges = Vec::new();
        for (a, b, floor, painting) in &raw.edges {
            let lookup = |p: (i64, i64)| {
                by_cell.get(&transform.apply(frame.of(p))).copied().ok_or_else(|| {
                    CorpusError::Ingest(format!("map `{}`: edge endpoint {p:?} is not a node", raw.name))
                })
            };
            edges.push(Edge {
                a: lookup(*a)?,
                b: lookup(*b)?,
                floor: *floor,
                painting: *painting,
            });
        }
        let map = WorldMap::new(raw.name.clone(), nodes, edges)
            .map_err(|e| CorpusError::Ingest(format!("map `{}`: {e}", raw.name)))?;
        cells.insert(raw.name.clone(), by_cell);
        maps.push(map);
    }

    let mut by_paragraph: BTreeMap<(String, String), Vec<&RawExample>> = BTreeMap::new();
    for ex in &examples {
        by_paragraph
            .entry((ex.map.clone(), ex.paragraph.clone()))
            .or_default()
            .push(ex);
    }
    let mut items = Vec::new();
    for ((map_name, paragraph), mut sentences) in by_paragraph {
        sentences.sort_by_key(|e| e.sentence);
        sentences.retain(|e| !tokenize(&e.instruction).is_empty());
        let map = maps.iter().find(|m| m.name() == map_name).expect("checked above");
        for (i, ex) in sentences.into_iter().enumerate() {
            let poses: Vec<(Option<NodeId>, Option<Heading>)> = ex
                .path
                .iter()
                .map(|&(x, y, deg)| {
                    let cell = frames[&map_name].try_of((x, y)).map(|c| transform.apply(c));
                    let node = cell.and_then(|c| cells[&map_name].get(&c).copied());
                    (node, deg.and_then(|d| transform.heading(d)))
                })
                .collect();
            let (start, actions, end, feasible) = derive_actions(map, &poses).ok_or_else(|| {
                CorpusError::Ingest(format!(
                    "paragraph {paragraph} sentence {}: path does not start on a map node",
                    ex.sentence
                ))
            })?;
            items.push(SampleItem {
                map: map_name.clone(),
                paragraph_id: paragraph.clone(),
                sentence_index: i as u32,
                instruction: ex.instruction.clone(),
                tokens: tokenize(&ex.instruction),
                actions,
                start,
                end,
                feasible,
            });
        }
    }
    sort_canonical(&mut items);
    Ok(CorpusDir { items, maps })
}

fn collect_xml(dir: &Path, out: &mut Vec<PathBuf>) -> Result<(), CorpusError> {
    if !dir.is_dir() {
        return Err(CorpusError::Ingest(format!("{} is not a directory", dir.display())));
    }
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_xml(&path, out)?;
        } else if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("xml")) {
            out.push(path);
        }
    }
    Ok(())
}

fn attr<'a>(node: roxmltree::Node<'a, '_>, names: &[&str], file: &Path) -> Result<&'a str, CorpusError> {
    names.iter().find_map(|n| node.attribute(*n)).ok_or_else(|| {
        CorpusError::Ingest(format!(
            "{}: <{}> missing attribute `{}`",
            file.display(),
            node.tag_name().name(),
            names[0]
        ))
    })
}

fn parse_point(text: &str) -> Option<(i64, i64)> {
    let nums = numbers(text);
    match nums.as_slice() {
        [x, y] => Some((*x, *y)),
        _ => None,
    }
}

fn numbers(text: &str) -> Vec<i64> {
    text.split(|c: char| !(c.is_ascii_digit() || c == '-'))
        .filter(|s| !s.is_empty() && *s != "-")
        .filter_map(|s| s.parse().ok())
        .collect()
}

fn vocab_word<T: Copy>(raw: &str, all: &[T], name: impl Fn(T) -> &'static str, aliases: &[(&str, T)]) -> Option<T> {
    let key: String = raw
        .chars()
        .filter(|c| c.is_alphanumeric())
        .collect::<String>()
        .to_lowercase();
    all.iter()
        .copied()
        .find(|&v| name(v) == key)
        .or_else(|| aliases.iter().find(|(a, _)| *a == key).map(|&(_, v)| v))
}

fn parse_floor(raw: &str) -> Option<Floor> {
    vocab_word(
        raw,
        Floor::ALL,
        Floor::as_str,
        &[
            ("yellow", Floor::Octagon),
            ("honeycomb", Floor::Octagon),
            ("rose", Floor::Flower),
            ("bluetile", Floor::Blue),
            ("stone", Floor::Gravel),
            ("cement", Floor::Gravel),
        ],
    )
}

fn parse_painting(raw: &str) -> Option<Painting> {
    vocab_word(
        raw,
        Painting::ALL,
        Painting::as_str,
        &[("tower", Painting::Eiffel), ("eiffeltower", Painting::Eiffel)],
    )
}

fn parse_object(raw: &str) -> Result<Option<Object>, ()> {
    if raw.trim().is_empty() {
        return Ok(None);
    }
    vocab_word(
        raw,
        Object::ALL,
        Object::as_str,
        &[
            ("coatrack", Object::Hatrack),
            ("stool", Object::Barstool),
            ("couch", Object::Sofa),
        ],
    )
    .map(Some)
    .ok_or(())
}

fn parse_map(root: roxmltree::Node, file: &Path) -> Result<RawMap, CorpusError> {
    let name = match root.attribute("name") {
        Some(n) => n.to_lowercase(),
        None => file
            .file_stem()
            .and_then(|s| s.to_str())
            .map(|s| s.trim_start_matches("map-").to_lowercase())
            .unwrap_or_default(),
    };
    let bad = |what: String| CorpusError::Ingest(format!("{}: {what}", file.display()));
    let mut nodes = Vec::new();
    for n in root.descendants().filter(|n| n.has_tag_name("node")) {
        let x: i64 = attr(n, &["x"], file)?
            .trim()
            .parse()
            .map_err(|_| bad("bad node x".into()))?;
        let y: i64 = attr(n, &["y"], file)?
            .trim()
            .parse()
            .map_err(|_| bad("bad node y".into()))?;
        let item = n.attribute("item").or_else(|| n.attribute("object")).unwrap_or("");
        let object = parse_object(item).map_err(|_| bad(format!("unknown object `{item}`")))?;
        nodes.push(((x, y), object));
    }
    let mut edges = Vec::new();
    for e in root.descendants().filter(|n| n.has_tag_name("edge")) {
        let a = attr(e, &["node1", "from"], file)?;
        let b = attr(e, &["node2", "to"], file)?;
        let a = parse_point(a).ok_or_else(|| bad(format!("bad edge endpoint `{a}`")))?;
        let b = parse_point(b).ok_or_else(|| bad(format!("bad edge endpoint `{b}`")))?;
        let floor = attr(e, &["floor"], file)?;
        let floor = parse_floor(floor).ok_or_else(|| bad(format!("unknown floor `{floor}`")))?;
        let painting = attr(e, &["wall", "painting"], file)?;
        let painting = parse_painting(painting).ok_or_else(|| bad(format!("unknown painting `{painting}`")))?;
        edges.push((a, b, floor, painting));
    }
    Ok(RawMap { name, nodes, edges })
}

fn parse_example(ex: roxmltree::Node, file: &Path) -> Result<RawExample, CorpusError> {
    let id = attr(ex, &["id"], file)?;
    let map = attr(ex, &["map"], file)?.to_lowercase();
    let (paragraph, sentence) = match (ex.attribute("paragraph"), ex.attribute("sentence")) {
        (Some(p), Some(s)) => (p.to_string(), s.trim().parse().ok()),
        _ => match id.rsplit_once('-') {
            Some((p, s)) => (p.to_string(), s.trim().parse().ok()),
            None => (id.to_string(), Some(0)),
        },
    };
    let sentence = sentence
        .ok_or_else(|| CorpusError::Ingest(format!("{}: example `{id}` has no sentence number", file.display())))?;
    let child = |tag: &str| {
        ex.children()
            .find(|c| c.has_tag_name(tag))
            .and_then(|c| c.text())
            .unwrap_or("")
    };
    let instruction = child("instruction").trim().to_string();
    let path = child("path")
        .split('(')
        .skip(1)
        .filter_map(|chunk| {
            let nums = numbers(chunk.split(')').next().unwrap_or(""));
            match nums.as_slice() {
                [x, y] => Some((*x, *y, None)),
                [x, y, d, ..] => Some((*x, *y, Some(*d))),
                _ => None,
            }
        })
        .collect();
    Ok(RawExample {
        map,
        paragraph,
        sentence,
        instruction,
        path,
    })
}

/// Rank compression of a map's raw coordinates.
struct Frame {
    xs: Vec<i64>,
    ys: Vec<i64>,
}

impl Frame {
    fn compress(map: &RawMap) -> Self {
        let xs: BTreeSet<i64> = map.nodes.iter().map(|((x, _), _)| *x).collect();
        let ys: BTreeSet<i64> = map.nodes.iter().map(|((_, y), _)| *y).collect();
        Self {
            xs: xs.into_iter().collect(),
            ys: ys.into_iter().collect(),
        }
    }

    fn try_of(&self, (x, y): (i64, i64)) -> Option<(i32, i32)> {
        Some((
            self.xs.binary_search(&x).ok()? as i32,
            self.ys.binary_search(&y).ok()? as i32,
        ))
    }

    /// Off-lattice points map outside every node.
    fn of(&self, p: (i64, i64)) -> (i32, i32) {
        self.try_of(p).unwrap_or((i32::MIN, i32::MIN))
    }
}

/// A signed axis permutation taking raw grid steps to the canonical frame.
#[derive(Debug, Clone, Copy)]
struct Transform {
    swap: bool,
    flip_x: bool,
    flip_y: bool,
}

impl Transform {
    const ALL: [Transform; 8] = {
        let mut all = [Transform {
            swap: false,
            flip_x: false,
            flip_y: false,
        }; 8];
        let mut i = 0;
        while i < 8 {
            all[i] = Transform {
                swap: i & 4 != 0,
                flip_x: i & 1 != 0,
                flip_y: i & 2 != 0,
            };
            i += 1;
        }
        all
    };

    fn apply(self, (x, y): (i32, i32)) -> (i32, i32) {
        if x == i32::MIN {
            return (x, y);
        }
        let (x, y) = if self.swap { (y, x) } else { (x, y) };
        (if self.flip_x { -x } else { x }, if self.flip_y { -y } else { y })
    }

    fn heading(self, deg: i64) -> Option<Heading> {
        Heading::from_degrees(u16::try_from(deg.rem_euclid(360)).ok()?)
    }
}

/// Picks the axis convention under which the most forward moves travel in
/// the direction their recorded orientation names. Ties keep the identity.
fn infer_transform(examples: &[RawExample], frames: &BTreeMap<String, Frame>) -> Transform {
    let mut best = (Transform::ALL[0], 0usize);
    for t in Transform::ALL {
        let mut agree = 0;
        for ex in examples {
            let frame = &frames[&ex.map];
            for w in ex.path.windows(2) {
                let (Some(a), Some(b), Some(deg)) = (
                    frame.try_of((w[0].0, w[0].1)),
                    frame.try_of((w[1].0, w[1].1)),
                    w[0].2.or(w[1].2),
                ) else {
                    continue;
                };
                let (a, b) = (t.apply(a), t.apply(b));
                if let (Some(h), Some(moved)) = (t.heading(deg), Heading::between(a, b)) {
                    agree += usize::from(h == moved);
                }
            }
        }
        if agree > best.1 {
            best = (t, agree);
        }
    }
    best.0
}

fn turns(from: Heading, to: Heading) -> Vec<Action> {
    match (to.index() + 4 - from.index()) % 4 {
        0 => vec![],
        1 => vec![Action::TurnRight],
        2 => vec![Action::TurnLeft, Action::TurnLeft],
        _ => vec![Action::TurnLeft],
    }
}

/// Reconstructs the action sequence of a recorded path. Returns `None` when
/// the first position is not a node. A path that leaves the map or uses a
/// missing hallway keeps the actions derived up to that point and is marked
/// infeasible.
fn derive_actions(
    map: &WorldMap,
    poses: &[(Option<NodeId>, Option<Heading>)],
) -> Option<(AgentPose, Vec<Action>, AgentPose, bool)> {
    let (first, _) = *poses.first()?;
    let first = first?;
    let coords = |id: NodeId| map.node(id).map(|n| (n.x, n.y));
    let initial = poses[0].1.or_else(|| {
        poses
            .iter()
            .find_map(|(n, _)| n.filter(|&n| n != first))
            .and_then(|n| Heading::between(coords(first)?, coords(n)?))
    });
    let start = AgentPose::new(first, initial.unwrap_or(Heading::North));
    let mut pose = start;
    let mut actions = Vec::new();
    let mut feasible = true;
    for &(node, heading) in &poses[1..] {
        let Some(node) = node else {
            feasible = false;
            break;
        };
        if node != pose.node {
            let Some(dir) = coords(pose.node)
                .zip(coords(node))
                .and_then(|(a, b)| Heading::between(a, b))
            else {
                feasible = false;
                break;
            };
            actions.extend(turns(pose.orientation, dir));
            actions.push(Action::Forward);
            pose = AgentPose::new(node, dir);
        }
        if let Some(h) = heading {
            actions.extend(turns(pose.orientation, h));
            pose.orientation = h;
        }
    }
    let actions = stop_terminated(actions);
    let replays = execute_sequence(map, start, &actions).is_ok_and(|p| p == pose);
    Some((start, actions, pose, feasible && replays))
}
