//! Deterministic simulator of the three hallway worlds.
//!
//! Maps are undirected graphs on an integer grid; the agent occupies a node
//! and faces one of four compass headings. All values are immutable and all
//! operations are pure.

mod distance;
mod map;
mod observe;
mod pose;

pub use distance::{distances_from, path_distance};
pub use map::{
    builtin_document, builtin_map, builtin_maps, Edge, Floor, Node, NodeId, Object, Painting, WorldMap, MAP_NAMES,
};
pub use observe::{
    observe, Observation, View, BLOCK_WIDTH, FLOOR_BITS, OBJECT_BITS, OBSERVATION_LAYOUT_VERSION, OBSERVATION_WIDTH,
    PAINTING_BITS,
};
pub use pose::{apply_action, execute_sequence, trace_sequence, Action, AgentPose, Heading};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WorldError {
    #[error("map parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("map integrity error: {0}")]
    Integrity(String),
    #[error("node {0} does not exist in the map")]
    UnknownNode(NodeId),
    #[error("move blocked at step {step}: no hallway ahead of {pose}")]
    Blocked { pose: AgentPose, step: usize },
    #[error("STOP at index {0} is not the last action")]
    StopNotLast(usize),
    #[error("node {to} is unreachable from node {from}")]
    Unreachable { from: NodeId, to: NodeId },
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid() -> WorldMap {
        builtin_map("grid").unwrap()
    }

    fn all_poses(map: &WorldMap) -> Vec<AgentPose> {
        map.nodes()
            .flat_map(|n| Heading::ALL.map(|h| AgentPose::new(n.id, h)))
            .collect()
    }

    #[test]
    fn bundled_maps_parse_with_expected_names() {
        let maps = builtin_maps();
        let names: Vec<_> = maps.iter().map(|m| m.name().to_string()).collect();
        assert_eq!(names, ["grid", "jelly", "l"]);
        for m in &maps {
            assert!(m.node_count() > 20);
            let reparsed = WorldMap::parse(&m.to_document()).unwrap();
            assert_eq!(reparsed.to_document(), m.to_document());
        }
        assert_eq!(Floor::ALL.len(), 7);
        assert_eq!(Painting::ALL.len(), 3);
        assert_eq!(Object::ALL.len(), 6);
    }

    #[test]
    fn zero_edge_document_is_valid() {
        let m = WorldMap::parse("name tiny\nnode 1 0 0 lamp\n# comment\n").unwrap();
        assert_eq!(m.edges().len(), 0);
        assert_eq!(m.node(1).unwrap().object, Some(Object::Lamp));
    }

    #[test]
    fn dangling_edge_is_an_integrity_error() {
        let err = WorldMap::parse("name t\nnode 1 0 0\nedge 1 2 wood fish\n").unwrap_err();
        assert!(
            matches!(err, WorldError::Integrity(ref m) if m.contains("undeclared node 2")),
            "{err}"
        );
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = WorldMap::parse("name t\nnode 1 0 0\nnode x 0 1\n").unwrap_err();
        assert!(matches!(err, WorldError::Parse { line: 3, .. }), "{err}");
        let err = WorldMap::parse("name t\nnode 1 0 0 piano\n").unwrap_err();
        assert!(matches!(err, WorldError::Parse { line: 2, .. }), "{err}");
    }

    #[test]
    fn non_adjacent_edge_rejected() {
        let err = WorldMap::parse("name t\nnode 1 0 0\nnode 2 2 0\nedge 1 2 wood fish\n").unwrap_err();
        assert!(matches!(err, WorldError::Integrity(_)));
    }

    #[test]
    fn turn_and_forward_semantics() {
        let m = WorldMap::parse("name t\nnode 1 0 0\nnode 2 1 0\nedge 1 2 wood fish\n").unwrap();
        let p = AgentPose::new(1, Heading::North);
        assert_eq!(
            apply_action(&m, p, Action::TurnLeft).unwrap(),
            AgentPose::new(1, Heading::West)
        );
        let east = AgentPose::new(1, Heading::East);
        assert_eq!(
            apply_action(&m, east, Action::Forward).unwrap(),
            AgentPose::new(2, Heading::East)
        );
        assert!(matches!(
            apply_action(&m, p, Action::Forward),
            Err(WorldError::Blocked { .. })
        ));
        assert_eq!(apply_action(&m, p, Action::Stop).unwrap(), p);
        assert_eq!(
            apply_action(&m, AgentPose::new(9, Heading::North), Action::Stop),
            Err(WorldError::UnknownNode(9))
        );
    }

    #[test]
    fn execute_sequence_edge_cases() {
        let m = grid();
        let s = AgentPose::new(14, Heading::East);
        assert_eq!(execute_sequence(&m, s, &[]).unwrap(), s);
        assert_eq!(execute_sequence(&m, s, &[Action::Stop]).unwrap(), s);
        assert_eq!(
            execute_sequence(&m, s, &[Action::Stop, Action::Forward]),
            Err(WorldError::StopNotLast(0))
        );
        // facing south from node 14 there is no hallway
        let err = execute_sequence(&m, s, &[Action::TurnRight, Action::Forward]).unwrap_err();
        assert!(matches!(err, WorldError::Blocked { step: 1, .. }));
    }

    #[test]
    fn figure_route_reaches_annotated_end() {
        use Action::*;
        let m = grid();
        let start = AgentPose::new(14, Heading::East);
        let route = [
            TurnLeft, Forward, TurnLeft, Forward, Forward, TurnLeft, Forward, TurnRight, Forward, Forward, TurnLeft,
            Forward, TurnRight, Forward,
        ];
        assert_eq!(
            execute_sequence(&m, start, &route).unwrap(),
            AgentPose::new(7, Heading::West)
        );
    }

    #[test]
    fn dead_end_forward_block_is_wall_only() {
        let m = grid();
        // (1,2) is the west end of the wooden hall
        let id = m.node_at(1, 2).unwrap();
        let obs = observe(&m, AgentPose::new(id, Heading::West));
        let block = obs.block(View::Forward);
        assert!(block[..BLOCK_WIDTH - 1].iter().all(|b| !b));
        assert!(obs.wall_ahead(View::Forward));
    }

    #[test]
    fn easel_visible_down_wooden_corridor() {
        let m = grid();
        let id = m.node_at(4, 2).unwrap();
        let obs = observe(&m, AgentPose::new(id, Heading::West));
        assert!(obs.sees_floor(View::Forward, Floor::Wood));
        assert!(obs.sees_object(View::Forward, Object::Easel));
        assert!(obs.hallway(View::Forward));
        assert!(!obs.wall_ahead(View::Forward));
        // the agent's own node object is never reported
        let easel = m.node_at(3, 2).unwrap();
        let here = observe(&m, AgentPose::new(easel, Heading::West));
        assert!(!here.sees_object(View::Forward, Object::Easel));
    }

    #[test]
    fn opposite_orientations_swap_left_and_right() {
        for m in builtin_maps() {
            for pose in all_poses(&m) {
                let flipped = AgentPose::new(pose.node, pose.orientation.opposite());
                let a = observe(&m, pose);
                let b = observe(&m, flipped);
                assert_eq!(a.block(View::Left), b.block(View::Right), "{} {pose}", m.name());
                assert_eq!(a.block(View::Right), b.block(View::Left));
            }
        }
    }

    #[test]
    fn observation_block_invariants() {
        for m in builtin_maps() {
            for pose in all_poses(&m) {
                let obs = observe(&m, pose);
                assert_eq!(obs.bits().len(), OBSERVATION_WIDTH);
                assert_eq!(obs, observe(&m, pose));
                for v in View::ALL {
                    let b = obs.block(v);
                    if !obs.hallway(v) {
                        assert!(b[..BLOCK_WIDTH - 2].iter().all(|x| !x));
                    }
                    assert_eq!(obs.hallway(v), !obs.wall_ahead(v));
                }
            }
        }
    }

    fn floyd_warshall(m: &WorldMap) -> Vec<Vec<Option<usize>>> {
        let ids: Vec<NodeId> = m.nodes().map(|n| n.id).collect();
        let n = ids.len();
        let pos = |id: NodeId| ids.iter().position(|&x| x == id).unwrap();
        let mut d = vec![vec![None; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[i] = Some(0);
        }
        for e in m.edges() {
            d[pos(e.a)][pos(e.b)] = Some(1);
            d[pos(e.b)][pos(e.a)] = Some(1);
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if let (Some(a), Some(b)) = (d[i][k], d[k][j]) {
                        if d[i][j].is_none_or(|c| a + b < c) {
                            d[i][j] = Some(a + b);
                        }
                    }
                }
            }
        }
        d
    }

    #[test]
    fn path_distance_matches_all_pairs_oracle() {
        for m in builtin_maps() {
            let oracle = floyd_warshall(&m);
            let ids: Vec<NodeId> = m.nodes().map(|n| n.id).collect();
            for (i, &a) in ids.iter().enumerate() {
                for (j, &b) in ids.iter().enumerate() {
                    assert_eq!(path_distance(&m, a, b).ok(), oracle[i][j]);
                }
            }
        }
    }

    #[test]
    fn path_distance_errors() {
        let m = WorldMap::parse("name t\nnode 1 0 0\nnode 2 5 5\n").unwrap();
        assert_eq!(path_distance(&m, 1, 1), Ok(0));
        assert_eq!(path_distance(&m, 1, 2), Err(WorldError::Unreachable { from: 1, to: 2 }));
        assert_eq!(path_distance(&m, 1, 3), Err(WorldError::UnknownNode(3)));
    }

    #[test]
    fn path_distance_is_a_metric() {
        let m = grid();
        let ids: Vec<NodeId> = m.nodes().map(|n| n.id).collect();
        for &a in &ids {
            for &b in &ids {
                let ab = path_distance(&m, a, b).unwrap();
                assert_eq!(ab, path_distance(&m, b, a).unwrap());
                assert_eq!(ab == 0, a == b);
                for &c in &ids {
                    assert!(ab <= path_distance(&m, a, c).unwrap() + path_distance(&m, c, b).unwrap());
                }
            }
        }
    }

    fn arb_action() -> impl Strategy<Value = Action> {
        prop::sample::select(vec![Action::Forward, Action::TurnLeft, Action::TurnRight])
    }

    proptest! {
        #[test]
        fn turns_compose(node_ix in 0usize..30, h in 0usize..4) {
            let m = grid();
            let id = m.nodes().nth(node_ix % m.node_count()).unwrap().id;
            let p = AgentPose::new(id, Heading::from_index(h));
            let lr = apply_action(&m, apply_action(&m, p, Action::TurnLeft).unwrap(), Action::TurnRight).unwrap();
            prop_assert_eq!(lr, p);
            for turn in [Action::TurnLeft, Action::TurnRight] {
                prop_assert_eq!(execute_sequence(&m, p, &[turn; 4]).unwrap(), p);
            }
        }

        #[test]
        fn execution_is_a_left_fold(
            node_ix in 0usize..30, h in 0usize..4,
            xs in prop::collection::vec(arb_action(), 0..8),
            ys in prop::collection::vec(arb_action(), 0..8),
        ) {
            let m = grid();
            let id = m.nodes().nth(node_ix % m.node_count()).unwrap().id;
            let s = AgentPose::new(id, Heading::from_index(h));
            let whole: Vec<Action> = xs.iter().chain(&ys).copied().collect();
            let direct = execute_sequence(&m, s, &whole);
            match execute_sequence(&m, s, &xs) {
                Ok(mid) => {
                    let staged = execute_sequence(&m, mid, &ys);
                    prop_assert_eq!(direct.is_ok(), staged.is_ok());
                    if let (Ok(a), Ok(b)) = (direct, staged) {
                        prop_assert_eq!(a, b);
                    }
                }
                Err(_) => prop_assert!(direct.is_err()),
            }
        }
    }
}
