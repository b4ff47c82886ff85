//! ASCII mazes: parsing, move simulation, turn classification, and step verification.

mod grid;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use grid::{parse_maze, MazeGrid, MazeParseError, Pos};

use crate::verdict::Verdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl Direction {
    pub const ALL: [Direction; 4] = [Direction::Up, Direction::Right, Direction::Down, Direction::Left];

    /// Row/column delta; rows grow downwards.
    pub fn delta(self) -> (isize, isize) {
        match self {
            Direction::Up => (-1, 0),
            Direction::Down => (1, 0),
            Direction::Left => (0, -1),
            Direction::Right => (0, 1),
        }
    }

    /// Quarter turn clockwise on screen: UP>RIGHT>DOWN>LEFT>UP.
    pub fn clockwise(self) -> Self {
        match self {
            Direction::Up => Direction::Right,
            Direction::Right => Direction::Down,
            Direction::Down => Direction::Left,
            Direction::Left => Direction::Up,
        }
    }

    pub fn counter_clockwise(self) -> Self {
        self.clockwise().clockwise().clockwise()
    }

    pub fn opposite(self) -> Self {
        self.clockwise().clockwise()
    }

    pub fn between(from: Pos, to: Pos) -> Option<Direction> {
        Direction::ALL.into_iter().find(|d| from.step(*d) == Some(to))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Up => "UP",
            Direction::Down => "DOWN",
            Direction::Left => "LEFT",
            Direction::Right => "RIGHT",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "UP" => Ok(Direction::Up),
            "DOWN" => Ok(Direction::Down),
            "LEFT" => Ok(Direction::Left),
            "RIGHT" => Ok(Direction::Right),
            _ => Err(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TurnType {
    RightTurn,
    LeftTurn,
    Straight,
    Reversal,
}

impl TurnType {
    pub fn as_str(self) -> &'static str {
        match self {
            TurnType::RightTurn => "RIGHT_TURN",
            TurnType::LeftTurn => "LEFT_TURN",
            TurnType::Straight => "STRAIGHT",
            TurnType::Reversal => "REVERSAL",
        }
    }
}

impl fmt::Display for TurnType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TurnType {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm: String = s
            .trim()
            .chars()
            .map(|c| if c == ' ' || c == '-' { '_' } else { c.to_ascii_uppercase() })
            .collect();
        match norm.as_str() {
            "RIGHT_TURN" | "RIGHT" => Ok(TurnType::RightTurn),
            "LEFT_TURN" | "LEFT" => Ok(TurnType::LeftTurn),
            "STRAIGHT" => Ok(TurnType::Straight),
            "REVERSAL" | "U_TURN" => Ok(TurnType::Reversal),
            _ => Err(()),
        }
    }
}

/// RIGHT_TURN is a clockwise quarter turn (DOWN>LEFT, LEFT>UP, UP>RIGHT, RIGHT>DOWN).
pub fn classify_turn(prev: Direction, cur: Direction) -> TurnType {
    if prev == cur {
        TurnType::Straight
    } else if prev.clockwise() == cur {
        TurnType::RightTurn
    } else if prev.counter_clockwise() == cur {
        TurnType::LeftTurn
    } else {
        TurnType::Reversal
    }
}

/// Position of E relative to S.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RelPos {
    DirectlyLeft,
    DirectlyRight,
    DirectlyAbove,
    DirectlyBelow,
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

impl RelPos {
    pub const ALL: [RelPos; 8] = [
        RelPos::DirectlyLeft,
        RelPos::DirectlyRight,
        RelPos::DirectlyAbove,
        RelPos::DirectlyBelow,
        RelPos::TopLeft,
        RelPos::TopRight,
        RelPos::BottomLeft,
        RelPos::BottomRight,
    ];

    pub fn reflected(self) -> Self {
        match self {
            RelPos::DirectlyLeft => RelPos::DirectlyRight,
            RelPos::DirectlyRight => RelPos::DirectlyLeft,
            RelPos::DirectlyAbove => RelPos::DirectlyBelow,
            RelPos::DirectlyBelow => RelPos::DirectlyAbove,
            RelPos::TopLeft => RelPos::BottomRight,
            RelPos::TopRight => RelPos::BottomLeft,
            RelPos::BottomLeft => RelPos::TopRight,
            RelPos::BottomRight => RelPos::TopLeft,
        }
    }

    pub fn phrase(self) -> &'static str {
        match self {
            RelPos::DirectlyLeft => "directly to the left",
            RelPos::DirectlyRight => "directly to the right",
            RelPos::DirectlyAbove => "directly above",
            RelPos::DirectlyBelow => "directly below",
            RelPos::TopLeft => "top left",
            RelPos::TopRight => "top right",
            RelPos::BottomLeft => "bottom left",
            RelPos::BottomRight => "bottom right",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("start and end coincide at {0}; relative position is undefined")]
pub struct UndefinedRelation(pub Pos);

/// Where `e` lies relative to `s`.
pub fn relative_position(s: Pos, e: Pos) -> Result<RelPos, UndefinedRelation> {
    use core::cmp::Ordering::*;
    Ok(match (e.row.cmp(&s.row), e.col.cmp(&s.col)) {
        (Equal, Equal) => return Err(UndefinedRelation(s)),
        (Equal, Less) => RelPos::DirectlyLeft,
        (Equal, Greater) => RelPos::DirectlyRight,
        (Less, Equal) => RelPos::DirectlyAbove,
        (Greater, Equal) => RelPos::DirectlyBelow,
        (Less, Less) => RelPos::TopLeft,
        (Less, Greater) => RelPos::TopRight,
        (Greater, Less) => RelPos::BottomLeft,
        (Greater, Greater) => RelPos::BottomRight,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MoveViolation {
    #[error("moving {dir} from {from} leaves the maze")]
    OutOfBounds { from: Pos, dir: Direction },
    #[error("moving {dir} from {from} enters a wall cell at {to}")]
    Wall { from: Pos, dir: Direction, to: Pos },
}

pub fn simulate_move(grid: &MazeGrid, pos: Pos, dir: Direction) -> Result<Pos, MoveViolation> {
    let to = pos
        .step(dir)
        .filter(|p| grid.contains(*p))
        .ok_or(MoveViolation::OutOfBounds { from: pos, dir })?;
    if grid.is_wall(to) {
        return Err(MoveViolation::Wall { from: pos, dir, to });
    }
    Ok(to)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunningCounts {
    pub right: Option<u32>,
    pub left: Option<u32>,
    pub total: Option<u32>,
}

/// One `>>> STEP` block of the maze step format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MazeStepPayload {
    pub index: u32,
    pub move_dir: Direction,
    pub from_pos: Pos,
    pub to_pos: Pos,
    #[serde(default)]
    pub current_position: Option<Pos>,
    /// `Some(None)` when the line is present but blank (first step).
    #[serde(default)]
    pub previous_direction: Option<Option<Direction>>,
    #[serde(default)]
    pub current_direction: Option<Direction>,
    #[serde(default)]
    pub claimed_turn: Option<TurnType>,
    #[serde(default)]
    pub running_counts: Option<RunningCounts>,
}

impl MazeStepPayload {
    /// Renders in the block format the extractor reads.
    pub fn render(&self) -> String {
        let mut out = format!(
            ">>> STEP {}: Move {} from {} to {}\n",
            self.index, self.move_dir, self.from_pos, self.to_pos
        );
        if let Some(p) = self.current_position {
            out.push_str(&format!("  Current position: {p}\n"));
        }
        if let Some(prev) = self.previous_direction {
            match prev {
                Some(d) => out.push_str(&format!("  Previous direction: {d}\n")),
                None => out.push_str("  Previous direction:\n"),
            }
        }
        if let Some(d) = self.current_direction {
            out.push_str(&format!("  Current direction: {d}\n"));
        }
        if let Some(t) = self.claimed_turn {
            out.push_str(&format!("  Turn type: {t}\n"));
        }
        if let Some(c) = self.running_counts {
            let mut parts = Vec::new();
            if let Some(r) = c.right {
                parts.push(format!("Right={r}"));
            }
            if let Some(l) = c.left {
                parts.push(format!("Left={l}"));
            }
            if let Some(t) = c.total {
                parts.push(format!("Total={t}"));
            }
            out.push_str(&format!("  Running count: {}\n", parts.join(", ")));
        }
        out
    }
}

/// Turn tallies along a sequence of moves. Reversals count toward neither side.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TurnTally {
    pub right: u32,
    pub left: u32,
}

impl TurnTally {
    pub fn total(&self) -> u32 {
        self.right + self.left
    }

    pub fn record(&mut self, t: TurnType) {
        match t {
            TurnType::RightTurn => self.right += 1,
            TurnType::LeftTurn => self.left += 1,
            TurnType::Straight | TurnType::Reversal => {}
        }
    }

    pub fn of_moves(dirs: &[Direction]) -> Self {
        let mut tally = Self::default();
        for w in dirs.windows(2) {
            tally.record(classify_turn(w[0], w[1]));
        }
        tally
    }
}

fn resume_hint(pos: Pos, facing: Option<Direction>) -> String {
    match facing {
        Some(d) => format!(
            " Resume reasoning from the previous valid state: position {pos}, facing {d}."
        ),
        None => format!(" Resume reasoning from the previous valid state: position {pos}."),
    }
}

/// Checks one claimed step against the grid and the accepted history.
pub fn verify_step(grid: &MazeGrid, history: &[MazeStepPayload], step: &MazeStepPayload) -> Verdict {
    let prev = history.last();
    let expected_from = prev.map_or(grid.start(), |p| p.to_pos);
    let prev_dir = prev.map(|p| p.move_dir);
    let hint = resume_hint(expected_from, prev_dir);
    let n = step.index;

    if step.from_pos != expected_from {
        return Verdict::fail(format!(
            "step {n} starts from {} but the current position is {expected_from}.{hint}",
            step.from_pos
        ));
    }
    match simulate_move(grid, step.from_pos, step.move_dir) {
        Err(v) => return Verdict::fail(format!("step {n} is invalid: {v}.{hint}")),
        Ok(to) if to != step.to_pos => {
            return Verdict::fail(format!(
                "step {n} claims moving {} from {} reaches {}, but it reaches {to}.{hint}",
                step.move_dir, step.from_pos, step.to_pos
            ));
        }
        Ok(_) => {}
    }
    if let Some(cur) = step.current_position {
        if cur != step.to_pos {
            return Verdict::fail(format!(
                "step {n} reports current position {cur}, but the move ends at {}.{hint}",
                step.to_pos
            ));
        }
    }
    if let Some(d) = step.current_direction {
        if d != step.move_dir {
            return Verdict::fail(format!(
                "step {n} reports current direction {d}, but the move is {}.{hint}",
                step.move_dir
            ));
        }
    }
    if let Some(claimed_prev) = step.previous_direction {
        if claimed_prev != prev_dir {
            let expected = prev_dir.map_or(String::from("none (first move)"), |d| format!("{d}"));
            return Verdict::fail(format!(
                "step {n} reports previous direction {}, but it is {expected}.{hint}",
                claimed_prev.map_or(String::from("none"), |d| format!("{d}"))
            ));
        }
    }
    let turn = prev_dir.map_or(TurnType::Straight, |p| classify_turn(p, step.move_dir));
    if let Some(claimed) = step.claimed_turn {
        if claimed != turn {
            let rule = match turn {
                TurnType::RightTurn => "a 90 degree clockwise change is a RIGHT_TURN",
                TurnType::LeftTurn => "a 90 degree counterclockwise change is a LEFT_TURN",
                TurnType::Straight => "keeping the same direction is STRAIGHT",
                TurnType::Reversal => "reversing direction is a REVERSAL, not a left or right turn",
            };
            let from = prev_dir.map_or(String::from("the start"), |d| format!("{d}"));
            return Verdict::fail(format!(
                "step {n} labels the turn from {from} to {} as {claimed}, but {rule}, so it is {turn}.{hint}",
                step.move_dir
            ));
        }
    }
    if let Some(counts) = step.running_counts {
        let mut tally = TurnTally::default();
        let mut dirs: Vec<Direction> = history.iter().map(|s| s.move_dir).collect();
        dirs.push(step.move_dir);
        for w in dirs.windows(2) {
            tally.record(classify_turn(w[0], w[1]));
        }
        let checks = [
            ("Right", counts.right, tally.right),
            ("Left", counts.left, tally.left),
            ("Total", counts.total, tally.total()),
        ];
        for (name, claimed, actual) in checks {
            if let Some(c) = claimed {
                if c != actual {
                    return Verdict::fail(format!(
                        "step {n} reports running count {name}={c}, but it should be {name}={actual}.{hint}"
                    ));
                }
            }
        }
    }
    Verdict::pass()
}

/// Checks a `>>> LOCATE START AND EXIT` claim.
pub fn verify_locate(grid: &MazeGrid, s: Option<Pos>, e: Option<Pos>) -> Verdict {
    let mut problems = Vec::new();
    if let Some(s) = s {
        if s != grid.start() {
            problems.push(format!("S is at {}, not {s}", grid.start()));
        }
    }
    if let Some(e) = e {
        if e != grid.end() {
            problems.push(format!("E is at {}, not {e}", grid.end()));
        }
    }
    if problems.is_empty() {
        Verdict::pass()
    } else {
        Verdict::fail(format!("the located positions are wrong: {}.", problems.join("; ")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MazeQuestion {
    RightTurns,
    TotalTurns,
    RelativePosition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MazeAnswer {
    Count(u32),
    Position(RelPos),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("the maze has no drawn path")]
    NoPath,
    #[error(transparent)]
    Undefined(#[from] UndefinedRelation),
}

/// Move directions along the drawn path.
pub fn path_moves(path: &[Pos]) -> Vec<Direction> {
    path.windows(2).filter_map(|w| Direction::between(w[0], w[1])).collect()
}

/// Gold answer computed from the drawn path.
pub fn maze_oracle(grid: &MazeGrid, question: MazeQuestion) -> Result<MazeAnswer, OracleError> {
    match question {
        MazeQuestion::RelativePosition => {
            Ok(MazeAnswer::Position(relative_position(grid.start(), grid.end())?))
        }
        MazeQuestion::RightTurns | MazeQuestion::TotalTurns => {
            let path = grid.path().ok_or(OracleError::NoPath)?;
            let tally = TurnTally::of_moves(&path_moves(path));
            Ok(MazeAnswer::Count(if question == MazeQuestion::RightTurns {
                tally.right
            } else {
                tally.total()
            }))
        }
    }
}

/// Step payloads that replay the drawn path in the step format.
pub fn gold_steps(grid: &MazeGrid, with_total: bool) -> Vec<MazeStepPayload> {
    let Some(path) = grid.path() else { return Vec::new() };
    let moves = path_moves(path);
    let mut tally = TurnTally::default();
    let mut out = Vec::with_capacity(moves.len());
    for (i, d) in moves.iter().enumerate() {
        let prev = if i == 0 { None } else { Some(moves[i - 1]) };
        let turn = prev.map_or(TurnType::Straight, |p| classify_turn(p, *d));
        tally.record(turn);
        out.push(MazeStepPayload {
            index: i as u32 + 1,
            move_dir: *d,
            from_pos: path[i],
            to_pos: path[i + 1],
            current_position: Some(path[i + 1]),
            previous_direction: Some(prev),
            current_direction: Some(*d),
            claimed_turn: Some(turn),
            running_counts: Some(RunningCounts {
                right: Some(tally.right),
                left: Some(tally.left),
                total: with_total.then(|| tally.total()),
            }),
        });
    }
    out
}
