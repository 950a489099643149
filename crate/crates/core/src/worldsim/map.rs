use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::pose::Heading;
use super::WorldError;

macro_rules! closed_vocabulary {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(rename_all = "lowercase")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn index(self) -> usize {
                self as usize
            }

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s.to_ascii_lowercase().as_str() {
                    $($text => Ok($name::$variant),)+
                    other => Err(format!("unknown {} `{other}`", stringify!($name))),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

closed_vocabulary!(
    /// Hallway floor pattern.
    Floor {
        Grass => "grass",
        Brick => "brick",
        Wood => "wood",
        Gravel => "gravel",
        Blue => "blue",
        Flower => "flower",
        Octagon => "octagon",
    }
);

closed_vocabulary!(
    /// Wall painting hung along a hallway.
    Painting {
        Butterfly => "butterfly",
        Fish => "fish",
        Eiffel => "eiffel",
    }
);

closed_vocabulary!(
    /// Object placed at an intersection.
    Object {
        Hatrack => "hatrack",
        Lamp => "lamp",
        Chair => "chair",
        Sofa => "sofa",
        Barstool => "barstool",
        Easel => "easel",
    }
);

/// Identifier of a map node as written in map documents.
pub type NodeId = u32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub x: i32,
    pub y: i32,
    pub object: Option<Object>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub a: NodeId,
    pub b: NodeId,
    pub floor: Floor,
    pub painting: Painting,
}

/// A hallway graph. Nodes sit on integer grid coordinates and edges join
/// grid-adjacent nodes only.
#[derive(Debug, Clone)]
pub struct WorldMap {
    name: String,
    nodes: BTreeMap<NodeId, Node>,
    edges: Vec<Edge>,
    // node -> per-heading (neighbor, edge index)
    exits: BTreeMap<NodeId, [Option<(NodeId, usize)>; 4]>,
}

impl WorldMap {
    /// Builds a map, checking every structural invariant.
    pub fn new(name: impl Into<String>, nodes: Vec<Node>, edges: Vec<Edge>) -> Result<Self, WorldError> {
        let mut by_id = BTreeMap::new();
        let mut cells = BTreeMap::new();
        for node in nodes {
            if let Some(other) = cells.insert((node.x, node.y), node.id) {
                return Err(WorldError::Integrity(format!(
                    "nodes {other} and {} share coordinates ({}, {})",
                    node.id, node.x, node.y
                )));
            }
            let id = node.id;
            if by_id.insert(id, node).is_some() {
                return Err(WorldError::Integrity(format!("node {id} declared twice")));
            }
        }
        let mut exits: BTreeMap<NodeId, [Option<(NodeId, usize)>; 4]> =
            by_id.keys().map(|&id| (id, [None; 4])).collect();
        for (index, edge) in edges.iter().enumerate() {
            let (na, nb) = match (by_id.get(&edge.a), by_id.get(&edge.b)) {
                (Some(na), Some(nb)) => (na, nb),
                _ => {
                    let missing = if by_id.contains_key(&edge.a) { edge.b } else { edge.a };
                    return Err(WorldError::Integrity(format!(
                        "edge {}-{} references undeclared node {missing}",
                        edge.a, edge.b
                    )));
                }
            };
            let heading = Heading::between((na.x, na.y), (nb.x, nb.y)).ok_or_else(|| {
                WorldError::Integrity(format!(
                    "edge {}-{} joins non-adjacent cells ({}, {}) and ({}, {})",
                    edge.a, edge.b, na.x, na.y, nb.x, nb.y
                ))
            })?;
            for (from, to, h) in [(edge.a, edge.b, heading), (edge.b, edge.a, heading.opposite())] {
                let slot = &mut exits.get_mut(&from).expect("node checked above")[h.index()];
                if slot.is_some() {
                    return Err(WorldError::Integrity(format!(
                        "duplicate edge between {} and {}",
                        edge.a, edge.b
                    )));
                }
                *slot = Some((to, index));
            }
        }
        Ok(Self {
            name: name.into(),
            nodes: by_id,
            edges,
            exits,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains_key(&id)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// The neighbor reached by leaving `id` along `heading`, with the edge used.
    pub fn exit(&self, id: NodeId, heading: Heading) -> Option<(NodeId, &Edge)> {
        self.exits
            .get(&id)
            .and_then(|slots| slots[heading.index()])
            .map(|(to, e)| (to, &self.edges[e]))
    }

    pub fn neighbors(&self, id: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.exits
            .get(&id)
            .into_iter()
            .flat_map(|slots| slots.iter().flatten().map(|&(to, _)| to))
    }

    pub fn node_at(&self, x: i32, y: i32) -> Option<NodeId> {
        self.nodes.values().find(|n| n.x == x && n.y == y).map(|n| n.id)
    }

    /// Parses the line-oriented map document format.
    pub fn parse(text: &str) -> Result<Self, WorldError> {
        let mut name = None;
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| WorldError::Parse {
                line: lineno + 1,
                message,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields[0] {
                "name" if fields.len() == 2 => name = Some(fields[1].to_string()),
                "node" if fields.len() == 4 || fields.len() == 5 => {
                    let id = fields[1]
                        .parse()
                        .map_err(|_| err(format!("bad node id `{}`", fields[1])))?;
                    let x = fields[2].parse().map_err(|_| err(format!("bad x `{}`", fields[2])))?;
                    let y = fields[3].parse().map_err(|_| err(format!("bad y `{}`", fields[3])))?;
                    let object = fields.get(4).map(|s| s.parse()).transpose().map_err(err)?;
                    nodes.push(Node { id, x, y, object });
                }
                "edge" if fields.len() == 5 => {
                    let a = fields[1]
                        .parse()
                        .map_err(|_| err(format!("bad node id `{}`", fields[1])))?;
                    let b = fields[2]
                        .parse()
                        .map_err(|_| err(format!("bad node id `{}`", fields[2])))?;
                    let floor = fields[3].parse().map_err(err)?;
                    let painting = fields[4].parse().map_err(err)?;
                    edges.push(Edge { a, b, floor, painting });
                }
                _ => return Err(err(format!("unrecognized line `{line}`"))),
            }
        }
        let name = name.ok_or(WorldError::Parse {
            line: 0,
            message: "missing `name` line".into(),
        })?;
        Self::new(name, nodes, edges)
    }

    /// Serializes to the map document format. `parse(to_document())` is the identity.
    pub fn to_document(&self) -> String {
        let mut out = format!("name {}\n", self.name);
        for n in self.nodes.values() {
            out.push_str(&format!("node {} {} {}", n.id, n.x, n.y));
            if let Some(o) = n.object {
                out.push(' ');
                out.push_str(o.as_str());
            }
            out.push('\n');
        }
        for e in &self.edges {
            out.push_str(&format!("edge {} {} {} {}\n", e.a, e.b, e.floor, e.painting));
        }
        out
    }
}

const GRID_DOC: &str = include_str!("../../data/maps/grid.map");
const JELLY_DOC: &str = include_str!("../../data/maps/jelly.map");
const L_DOC: &str = include_str!("../../data/maps/l.map");

/// Names of the three worlds, in fold order.
pub const MAP_NAMES: [&str; 3] = ["grid", "jelly", "l"];

/// The map document bundled with the crate for `name`.
pub fn builtin_document(name: &str) -> Option<&'static str> {
    match name {
        "grid" => Some(GRID_DOC),
        "jelly" => Some(JELLY_DOC),
        "l" => Some(L_DOC),
        _ => None,
    }
}

pub fn builtin_map(name: &str) -> Option<WorldMap> {
    builtin_document(name).map(|doc| WorldMap::parse(doc).expect("bundled maps are valid"))
}

pub fn builtin_maps() -> Vec<WorldMap> {
    MAP_NAMES.iter().filter_map(|n| builtin_map(n)).collect()
}
