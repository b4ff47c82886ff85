use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{labeled_options, GenError, Gold, QuestionKind, TaskInstance, TaskKind, TaskPayload};
use crate::maze::{maze_oracle, parse_maze, MazeAnswer, MazeGrid, Pos, RelPos};

pub const MAZE_MIN_SIDE: usize = 5;
const MAX_ATTEMPTS: u32 = 64;

/// Carves a spanning tree over the odd-coordinate cells (iterative backtracker).
fn carve(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Vec<bool> {
    let mut open = vec![false; h * w];
    let cells_r = (h - 1) / 2;
    let cells_c = (w - 1) / 2;
    let at = |r: usize, c: usize| (2 * r + 1) * w + 2 * c + 1;
    let mut seen = vec![false; cells_r * cells_c];
    let start = (rng.gen_range(0..cells_r), rng.gen_range(0..cells_c));
    let mut stack = vec![start];
    seen[start.0 * cells_c + start.1] = true;
    open[at(start.0, start.1)] = true;
    while let Some(&(r, c)) = stack.last() {
        let mut next: Vec<(usize, usize)> = Vec::with_capacity(4);
        if r > 0 {
            next.push((r - 1, c));
        }
        if r + 1 < cells_r {
            next.push((r + 1, c));
        }
        if c > 0 {
            next.push((r, c - 1));
        }
        if c + 1 < cells_c {
            next.push((r, c + 1));
        }
        next.retain(|&(nr, nc)| !seen[nr * cells_c + nc]);
        match next.choose(rng) {
            Some(&(nr, nc)) => {
                seen[nr * cells_c + nc] = true;
                open[at(nr, nc)] = true;
                open[(r + nr + 1) * w + (c + nc + 1)] = true;
                stack.push((nr, nc));
            }
            None => {
                stack.pop();
            }
        }
    }
    open
}

fn bfs_path(open: &[bool], w: usize, s: Pos, e: Pos) -> Option<Vec<Pos>> {
    let idx = |p: Pos| p.row * w + p.col;
    let mut prev: Vec<Option<Pos>> = vec![None; open.len()];
    let mut q = VecDeque::from([s]);
    prev[idx(s)] = Some(s);
    while let Some(p) = q.pop_front() {
        if p == e {
            let mut path = vec![e];
            let mut cur = e;
            while cur != s {
                cur = prev[idx(cur)]?;
                path.push(cur);
            }
            path.reverse();
            return Some(path);
        }
        let nbrs = [
            (p.row.wrapping_sub(1), p.col),
            (p.row + 1, p.col),
            (p.row, p.col.wrapping_sub(1)),
            (p.row, p.col + 1),
        ];
        for (r, c) in nbrs {
            if c >= w || r * w + c >= open.len() {
                continue;
            }
            let n = Pos::new(r, c);
            if open[idx(n)] && prev[idx(n)].is_none() {
                prev[idx(n)] = Some(p);
                q.push_back(n);
            }
        }
    }
    None
}

fn count_distractors(gold: u32) -> Vec<String> {
    let mut out: Vec<u32> = Vec::new();
    for d in [1i64, -1, 2, -2, 3, -3, 4, 5, 6] {
        let v = (i64::from(gold) + d).max(0) as u32;
        if v != gold && !out.contains(&v) {
            out.push(v);
        }
        if out.len() == 3 {
            break;
        }
    }
    out.into_iter().map(|v| v.to_string()).collect()
}

fn question_text(q: QuestionKind) -> &'static str {
    match q {
        QuestionKind::RightTurns => "How many right turns are there in the path from S to E?",
        QuestionKind::TotalTurns => "How many total turns are there in the path from S to E?",
        _ => "Where is the exit (E) relative to the starting point (S)?",
    }
}

fn answer_text(a: MazeAnswer) -> String {
    match a {
        MazeAnswer::Count(n) => n.to_string(),
        MazeAnswer::Position(p) => p.phrase().to_string(),
    }
}

/// A random maze of odd size `height` x `width` whose S-to-E path is drawn with `*`.
pub fn gen_maze_instance(seed: u64, height: usize, width: usize, question: QuestionKind) -> Result<TaskInstance, GenError> {
    let mq = question.maze().ok_or(GenError::WrongQuestion(question))?;
    if height < MAZE_MIN_SIDE || width < MAZE_MIN_SIDE || height.is_multiple_of(2) || width.is_multiple_of(2) {
        return Err(GenError::Parameters(format!("maze must be odd and at least 5x5, got {height}x{width}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells: Vec<Pos> = (0..(height - 1) / 2)
        .flat_map(|r| (0..(width - 1) / 2).map(move |c| Pos::new(2 * r + 1, 2 * c + 1)))
        .collect();
    for _ in 0..MAX_ATTEMPTS {
        let open = carve(&mut rng, height, width);
        let mut ends: Vec<Pos> = cells.choose_multiple(&mut rng, 2).copied().collect();
        let (s, e) = (ends.remove(0), ends.remove(0));
        let Some(path) = bfs_path(&open, width, s, e) else { continue };
        if path.len() < 3 {
            continue;
        }
        let open_cells: Vec<Pos> =
            (0..height * width).filter(|&i| open[i]).map(|i| Pos::new(i / width, i % width)).collect();
        let grid = MazeGrid::from_parts(height, width, &open_cells, s, e, Some(path));
        let gold = match maze_oracle(&grid, mq) {
            Ok(a) => a,
            Err(_) => continue,
        };
        let distractors = match gold {
            MazeAnswer::Count(n) => count_distractors(n),
            MazeAnswer::Position(p) => {
                let others: Vec<RelPos> = RelPos::ALL.iter().copied().filter(|o| *o != p).collect();
                others.choose_multiple(&mut rng, 3).map(|o| o.phrase().to_string()).collect()
            }
        };
        let (options, label) = labeled_options(&mut rng, answer_text(gold), distractors);
        return Ok(TaskInstance {
            id: format!("maze-{seed}"),
            kind: TaskKind::Maze,
            payload: TaskPayload::Maze { ascii: grid.render() },
            question_kind: question,
            question: question_text(question).into(),
            options,
            gold: Gold::Label { label },
            seed,
        });
    }
    Err(GenError::Exhausted(MAX_ATTEMPTS))
}

pub(super) fn recompute(inst: &TaskInstance, ascii: &str) -> Result<Gold, GenError> {
    let grid = parse_maze(ascii).map_err(|e| GenError::Payload(e.to_string()))?;
    let mq = inst.question_kind.maze().ok_or(GenError::WrongQuestion(inst.question_kind))?;
    let a = maze_oracle(&grid, mq).map_err(|e| GenError::Payload(e.to_string()))?;
    inst.label_of(&answer_text(a))
}
