use crate::worldsim::{builtin_map, execute_sequence, Action, AgentPose, Heading};

use super::{stop_terminated, tokenize, SampleItem};

pub const EXAMPLE_PARAGRAPH_ID: &str = "route-example";
pub const EXAMPLE_MAP: &str = "grid";

/// Start of the worked example: the "T" intersection at (5, 2), facing east.
pub const EXAMPLE_START: AgentPose = AgentPose {
    node: 14,
    orientation: Heading::East,
};

/// Sentence text and gold moves of the worked example paragraph, laid out on
/// the bundled `grid` map.
pub const EXAMPLE_SENTENCES: [(&str, &[Action]); 14] = {
    use Action::*;
    [
        (
            "Place your back against the wall of the ``T'' intersection.",
            &[TurnLeft],
        ),
        (
            "Go forward one segment to the intersection with the blue-tiled hall.",
            &[Forward],
        ),
        ("This interesction contains a chair.", &[]),
        ("Turn left.", &[TurnLeft]),
        ("Go forward to the end of the hall.", &[Forward, Forward]),
        ("Turn left.", &[TurnLeft]),
        (
            "Go forward one segment to the intersection with the wooden-floored hall.",
            &[Forward],
        ),
        ("This intersection conatains an easel.", &[]),
        ("Turn right.", &[TurnRight]),
        ("Go forward two segments to the end of the hall.", &[Forward, Forward]),
        ("Turn left.", &[TurnLeft]),
        (
            "Go forward one segment to the intersection containing the lamp.",
            &[Forward],
        ),
        ("Turn right.", &[TurnRight]),
        ("Go forward one segment to the empty corner.", &[Forward]),
    ]
};

/// The worked example as 14 sentence items with replayed poses.
pub fn example_paragraph() -> Vec<SampleItem> {
    let map = builtin_map(EXAMPLE_MAP).expect("bundled map");
    let mut pose = EXAMPLE_START;
    EXAMPLE_SENTENCES
        .iter()
        .enumerate()
        .map(|(i, (text, moves))| {
            let actions = stop_terminated(moves.to_vec());
            let end = execute_sequence(&map, pose, &actions).expect("example route is walkable");
            let item = SampleItem {
                map: EXAMPLE_MAP.to_string(),
                paragraph_id: EXAMPLE_PARAGRAPH_ID.to_string(),
                sentence_index: i as u32,
                instruction: text.to_string(),
                tokens: tokenize(text),
                actions,
                start: pose,
                end,
                feasible: true,
            };
            pose = end;
            item
        })
        .collect()
}
