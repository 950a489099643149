use super::map::{Floor, Object, Painting, WorldMap};
use super::pose::{AgentPose, Heading};

pub const FLOOR_BITS: usize = 7;
pub const PAINTING_BITS: usize = 3;
pub const OBJECT_BITS: usize = 6;
/// Width of one relative-direction block.
pub const BLOCK_WIDTH: usize = FLOOR_BITS + PAINTING_BITS + OBJECT_BITS + 2;
/// forward, left, right
pub const BLOCKS: usize = 3;
pub const OBSERVATION_WIDTH: usize = BLOCK_WIDTH * BLOCKS;
/// Bumped whenever the bit layout changes.
pub const OBSERVATION_LAYOUT_VERSION: u32 = 1;

const HALLWAY_BIT: usize = FLOOR_BITS + PAINTING_BITS + OBJECT_BITS;
const WALL_BIT: usize = HALLWAY_BIT + 1;

/// Relative viewing directions, in block order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum View {
    Forward,
    Left,
    Right,
}

impl View {
    pub const ALL: [View; BLOCKS] = [View::Forward, View::Left, View::Right];

    fn heading(self, facing: Heading) -> Heading {
        match self {
            View::Forward => facing,
            View::Left => facing.left(),
            View::Right => facing.right(),
        }
    }
}

/// Line-of-sight bag-of-attributes observation.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Observation {
    bits: [bool; OBSERVATION_WIDTH],
}

impl Observation {
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn block(&self, view: View) -> &[bool] {
        let start = view as usize * BLOCK_WIDTH;
        &self.bits[start..start + BLOCK_WIDTH]
    }

    pub fn sees_floor(&self, view: View, floor: Floor) -> bool {
        self.block(view)[floor.index()]
    }

    pub fn sees_painting(&self, view: View, painting: Painting) -> bool {
        self.block(view)[FLOOR_BITS + painting.index()]
    }

    pub fn sees_object(&self, view: View, object: Object) -> bool {
        self.block(view)[FLOOR_BITS + PAINTING_BITS + object.index()]
    }

    pub fn hallway(&self, view: View) -> bool {
        self.block(view)[HALLWAY_BIT]
    }

    pub fn wall_ahead(&self, view: View) -> bool {
        self.block(view)[WALL_BIT]
    }

    /// The observation as a 0/1 numeric vector.
    pub fn to_vec<T: num_traits::Float>(&self) -> Vec<T> {
        self.bits
            .iter()
            .map(|&b| if b { T::one() } else { T::zero() })
            .collect()
    }
}

/// Observes everything in line of sight along the forward, left and right
/// corridors. Objects at the agent's own node are not part of any block.
pub fn observe(map: &WorldMap, pose: AgentPose) -> Observation {
    let mut bits = [false; OBSERVATION_WIDTH];
    for view in View::ALL {
        let block = &mut bits[view as usize * BLOCK_WIDTH..(view as usize + 1) * BLOCK_WIDTH];
        let heading = view.heading(pose.orientation);
        let mut cursor = pose.node;
        let mut steps = 0usize;
        while let Some((next, edge)) = map.exit(cursor, heading) {
            block[edge.floor.index()] = true;
            block[FLOOR_BITS + edge.painting.index()] = true;
            if let Some(object) = map.node(next).and_then(|n| n.object) {
                block[FLOOR_BITS + PAINTING_BITS + object.index()] = true;
            }
            cursor = next;
            steps += 1;
            // straight corridors on a grid cannot revisit a node
            debug_assert!(steps <= map.node_count());
        }
        block[HALLWAY_BIT] = steps > 0;
        block[WALL_BIT] = map.exit(pose.node, heading).is_none();
    }
    Observation { bits }
}
