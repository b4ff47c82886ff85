use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Direction;

/// Grid coordinate; row 0 is the top row, col 0 the leftmost column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Pos {
    pub row: usize,
    pub col: usize,
}

impl Pos {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// The neighbouring position in `dir`, if it does not underflow.
    pub fn step(self, dir: Direction) -> Option<Pos> {
        let (dr, dc) = dir.delta();
        let row = self.row.checked_add_signed(dr)?;
        let col = self.col.checked_add_signed(dc)?;
        Some(Pos { row, col })
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.row, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MazeParseError {
    #[error("maze text is empty")]
    Empty,
    #[error("row {row} has width {found}, expected {expected}")]
    Ragged { row: usize, found: usize, expected: usize },
    #[error("unknown character {ch:?} at row {row}, col {col}")]
    UnknownChar { row: usize, col: usize, ch: char },
    #[error("no start cell 'S'")]
    MissingStart,
    #[error("no end cell 'E'")]
    MissingEnd,
    #[error("second start cell at row {row}, col {col}")]
    DuplicateStart { row: usize, col: usize },
    #[error("second end cell at row {row}, col {col}")]
    DuplicateEnd { row: usize, col: usize },
    #[error("path is disconnected or branches at row {row}, col {col}")]
    DisconnectedPath { row: usize, col: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cell {
    Wall,
    Open,
}

/// Parsed maze: walls, endpoints, and (when drawn) the ordered path from S to E.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MazeGrid {
    height: usize,
    width: usize,
    cells: Vec<Cell>,
    start: Pos,
    end: Pos,
    path: Option<Vec<Pos>>,
}

impl MazeGrid {
    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn start(&self) -> Pos {
        self.start
    }

    pub fn end(&self) -> Pos {
        self.end
    }

    pub fn path(&self) -> Option<&[Pos]> {
        self.path.as_deref()
    }

    pub fn contains(&self, p: Pos) -> bool {
        p.row < self.height && p.col < self.width
    }

    pub fn is_wall(&self, p: Pos) -> bool {
        self.contains(p) && self.cells[p.row * self.width + p.col] == Cell::Wall
    }

    pub fn walls(&self) -> impl Iterator<Item = Pos> + '_ {
        (0..self.height)
            .flat_map(move |r| (0..self.width).map(move |c| Pos::new(r, c)))
            .filter(|p| self.is_wall(*p))
    }

    /// Builds a grid from explicit parts. Cells not listed as open are walls.
    pub fn from_parts(
        height: usize,
        width: usize,
        open: &[Pos],
        start: Pos,
        end: Pos,
        path: Option<Vec<Pos>>,
    ) -> Self {
        let mut cells = vec![Cell::Wall; height * width];
        for p in open.iter().chain([start, end].iter()).chain(path.iter().flatten()) {
            cells[p.row * width + p.col] = Cell::Open;
        }
        Self { height, width, cells, start, end, path }
    }

    /// ASCII rendering: `#` wall, space open, `S`/`E` endpoints, `*` path cells.
    pub fn render(&self) -> String {
        let mut rows: Vec<Vec<char>> = (0..self.height)
            .map(|r| {
                (0..self.width)
                    .map(|c| if self.is_wall(Pos::new(r, c)) { '#' } else { ' ' })
                    .collect()
            })
            .collect();
        if let Some(path) = &self.path {
            for p in path {
                rows[p.row][p.col] = '*';
            }
        }
        rows[self.start.row][self.start.col] = 'S';
        rows[self.end.row][self.end.col] = 'E';
        let mut out = String::new();
        for (i, row) in rows.iter().enumerate() {
            if i > 0 {
                out.push('\n');
            }
            out.extend(row.iter());
        }
        out
    }
}

pub fn parse_maze(ascii: &str) -> Result<MazeGrid, MazeParseError> {
    let lines: Vec<&str> = ascii.trim_matches('\n').split('\n').map(|l| l.trim_end_matches('\r')).collect();
    if lines.is_empty() || lines.iter().all(|l| l.is_empty()) {
        return Err(MazeParseError::Empty);
    }
    let width = lines[0].chars().count();
    let height = lines.len();
    let mut cells = vec![Cell::Wall; height * width];
    let mut start = None;
    let mut end = None;
    let mut stars = Vec::new();
    for (row, line) in lines.iter().enumerate() {
        let n = line.chars().count();
        if n != width {
            return Err(MazeParseError::Ragged { row, found: n, expected: width });
        }
        for (col, ch) in line.chars().enumerate() {
            let p = Pos::new(row, col);
            let cell = match ch {
                '#' => Cell::Wall,
                ' ' | '.' => Cell::Open,
                '*' => {
                    stars.push(p);
                    Cell::Open
                }
                'S' => {
                    if start.replace(p).is_some() {
                        return Err(MazeParseError::DuplicateStart { row, col });
                    }
                    Cell::Open
                }
                'E' => {
                    if end.replace(p).is_some() {
                        return Err(MazeParseError::DuplicateEnd { row, col });
                    }
                    Cell::Open
                }
                _ => return Err(MazeParseError::UnknownChar { row, col, ch }),
            };
            cells[row * width + col] = cell;
        }
    }
    let start = start.ok_or(MazeParseError::MissingStart)?;
    let end = end.ok_or(MazeParseError::MissingEnd)?;
    let path = reconstruct_path(start, end, &stars)?;
    Ok(MazeGrid { height, width, cells, start, end, path })
}

fn adjacent(a: Pos, b: Pos) -> bool {
    a.row.abs_diff(b.row) + a.col.abs_diff(b.col) == 1
}

/// Walks from S along `*` cells to E. Without any `*` cells the path exists
/// only when S and E touch.
fn reconstruct_path(start: Pos, end: Pos, stars: &[Pos]) -> Result<Option<Vec<Pos>>, MazeParseError> {
    if stars.is_empty() {
        return Ok(adjacent(start, end).then(|| vec![start, end]));
    }
    let mut remaining: Vec<Pos> = stars.to_vec();
    let mut path = vec![start];
    let mut cur = start;
    loop {
        let next: Vec<usize> = remaining
            .iter()
            .enumerate()
            .filter(|(_, p)| adjacent(cur, **p))
            .map(|(i, _)| i)
            .collect();
        match next.as_slice() {
            [] => {
                if remaining.is_empty() && adjacent(cur, end) {
                    path.push(end);
                    return Ok(Some(path));
                }
                let at = remaining.first().copied().unwrap_or(cur);
                return Err(MazeParseError::DisconnectedPath { row: at.row, col: at.col });
            }
            [i] => {
                cur = remaining.swap_remove(*i);
                path.push(cur);
            }
            _ => return Err(MazeParseError::DisconnectedPath { row: cur.row, col: cur.col }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_maze() {
        let g = parse_maze("###\n#S#\n#E#").unwrap();
        assert_eq!(g.start(), Pos::new(1, 1));
        assert_eq!(g.end(), Pos::new(2, 1));
        assert_eq!(g.path(), Some(&[Pos::new(1, 1), Pos::new(2, 1)][..]));
        assert_eq!(g.walls().count(), 7);
    }

    #[test]
    fn duplicate_start_is_rejected() {
        assert_eq!(
            parse_maze("#####\n#S S#\n# E #\n#####"),
            Err(MazeParseError::DuplicateStart { row: 1, col: 3 })
        );
    }

    #[test]
    fn structural_errors() {
        assert_eq!(parse_maze("###\n#S\n#E#"), Err(MazeParseError::Ragged { row: 1, found: 2, expected: 3 }));
        assert_eq!(parse_maze("###\n# #\n#E#"), Err(MazeParseError::MissingStart));
        assert_eq!(parse_maze("###\n#S#\n#x#"), Err(MazeParseError::UnknownChar { row: 2, col: 1, ch: 'x' }));
        assert!(matches!(
            parse_maze("#####\n#S#*#\n###E#\n#####"),
            Err(MazeParseError::DisconnectedPath { .. })
        ));
    }

    #[test]
    fn path_is_walked_in_order() {
        let g = parse_maze("#####\n#S**#\n###*#\n#E**#\n#####").unwrap();
        let path = g.path().unwrap();
        assert_eq!(path.first(), Some(&g.start()));
        assert_eq!(path.last(), Some(&g.end()));
        assert_eq!(path.len(), 7);
        assert_eq!(parse_maze(&g.render()).unwrap(), g);
    }
}
