use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::map::{NodeId, WorldMap};
use super::WorldError;

/// Absolute compass heading. North is +y; headings advance clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Heading {
    North,
    East,
    South,
    West,
}

impl Heading {
    pub const ALL: [Heading; 4] = [Heading::North, Heading::East, Heading::South, Heading::West];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Heading {
        Self::ALL[i % 4]
    }

    pub fn degrees(self) -> u16 {
        self.index() as u16 * 90
    }

    pub fn from_degrees(deg: u16) -> Option<Heading> {
        (deg.is_multiple_of(90) && deg < 360).then(|| Self::from_index(deg as usize / 90))
    }

    /// Grid displacement of one step along this heading.
    pub fn delta(self) -> (i32, i32) {
        match self {
            Heading::North => (0, 1),
            Heading::East => (1, 0),
            Heading::South => (0, -1),
            Heading::West => (-1, 0),
        }
    }

    pub fn between(from: (i32, i32), to: (i32, i32)) -> Option<Heading> {
        let d = (to.0 - from.0, to.1 - from.1);
        Self::ALL.into_iter().find(|h| h.delta() == d)
    }

    pub fn opposite(self) -> Heading {
        Self::from_index(self.index() + 2)
    }

    pub fn left(self) -> Heading {
        Self::from_index(self.index() + 3)
    }

    pub fn right(self) -> Heading {
        Self::from_index(self.index() + 1)
    }
}

impl Serialize for Heading {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u16(self.degrees())
    }
}

impl<'de> Deserialize<'de> for Heading {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let deg = u16::deserialize(d)?;
        Heading::from_degrees(deg)
            .ok_or_else(|| serde::de::Error::custom(format!("orientation {deg} is not one of 0/90/180/270")))
    }
}

/// Where the agent stands and which way it faces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct AgentPose {
    pub node: NodeId,
    pub orientation: Heading,
}

impl AgentPose {
    pub fn new(node: NodeId, orientation: Heading) -> Self {
        Self { node, orientation }
    }
}

impl fmt::Display for AgentPose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{}", self.node, self.orientation.degrees())
    }
}

impl FromStr for AgentPose {
    type Err = String;

    /// Parses `NODE,DEGREES`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (node, deg) = s
            .split_once(',')
            .ok_or_else(|| format!("expected NODE,ORIENT but got `{s}`"))?;
        let node = node.trim().parse().map_err(|_| format!("bad node `{node}`"))?;
        let deg: u16 = deg.trim().parse().map_err(|_| format!("bad orientation `{deg}`"))?;
        let orientation =
            Heading::from_degrees(deg).ok_or_else(|| format!("orientation {deg} is not one of 0/90/180/270"))?;
        Ok(Self { node, orientation })
    }
}

/// The agent's action inventory. Discriminants double as output indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Action {
    Forward,
    TurnLeft,
    TurnRight,
    Stop,
}

impl Action {
    pub const ALL: [Action; 4] = [Action::Forward, Action::TurnLeft, Action::TurnRight, Action::Stop];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Action::Forward => "FORWARD",
            Action::TurnLeft => "TURN_LEFT",
            Action::TurnRight => "TURN_RIGHT",
            Action::Stop => "STOP",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown action `{s}`"))
    }
}

fn check_pose(map: &WorldMap, pose: AgentPose) -> Result<(), WorldError> {
    if map.contains(pose.node) {
        Ok(())
    } else {
        Err(WorldError::UnknownNode(pose.node))
    }
}

/// Executes one action.
pub fn apply_action(map: &WorldMap, pose: AgentPose, action: Action) -> Result<AgentPose, WorldError> {
    check_pose(map, pose)?;
    Ok(match action {
        Action::TurnLeft => AgentPose::new(pose.node, pose.orientation.left()),
        Action::TurnRight => AgentPose::new(pose.node, pose.orientation.right()),
        Action::Stop => pose,
        Action::Forward => match map.exit(pose.node, pose.orientation) {
            Some((next, _)) => AgentPose::new(next, pose.orientation),
            None => return Err(WorldError::Blocked { pose, step: 0 }),
        },
    })
}

/// Folds `apply_action` over `actions`. A blocked move reports its index.
pub fn execute_sequence(map: &WorldMap, start: AgentPose, actions: &[Action]) -> Result<AgentPose, WorldError> {
    check_pose(map, start)?;
    if let Some(i) = actions.iter().position(|&a| a == Action::Stop) {
        if i + 1 != actions.len() {
            return Err(WorldError::StopNotLast(i));
        }
    }
    actions.iter().enumerate().try_fold(start, |pose, (step, &a)| {
        apply_action(map, pose, a).map_err(|e| match e {
            WorldError::Blocked { pose, .. } => WorldError::Blocked { pose, step },
            other => other,
        })
    })
}

/// All poses visited while executing `actions`, starting with `start`.
pub fn trace_sequence(map: &WorldMap, start: AgentPose, actions: &[Action]) -> Result<Vec<AgentPose>, WorldError> {
    let mut poses = vec![start];
    for (step, &a) in actions.iter().enumerate() {
        let next = apply_action(map, *poses.last().unwrap(), a).map_err(|e| match e {
            WorldError::Blocked { pose, .. } => WorldError::Blocked { pose, step },
            other => other,
        })?;
        poses.push(next);
    }
    Ok(poses)
}
