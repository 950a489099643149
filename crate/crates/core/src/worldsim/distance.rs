use std::collections::{BTreeMap, VecDeque};

use super::map::{NodeId, WorldMap};
use super::WorldError;

/// Number of edges on a shortest path between two nodes.
pub fn path_distance(map: &WorldMap, from: NodeId, to: NodeId) -> Result<usize, WorldError> {
    for id in [from, to] {
        if !map.contains(id) {
            return Err(WorldError::UnknownNode(id));
        }
    }
    distances_from(map, from)
        .get(&to)
        .copied()
        .ok_or(WorldError::Unreachable { from, to })
}

/// Breadth-first distances from `from` to every reachable node.
pub fn distances_from(map: &WorldMap, from: NodeId) -> BTreeMap<NodeId, usize> {
    let mut dist = BTreeMap::new();
    if !map.contains(from) {
        return dist;
    }
    dist.insert(from, 0);
    let mut queue = VecDeque::from([from]);
    while let Some(u) = queue.pop_front() {
        let d = dist[&u];
        for v in map.neighbors(u) {
            dist.entry(v).or_insert_with(|| {
                queue.push_back(v);
                d + 1
            });
        }
    }
    dist
}
