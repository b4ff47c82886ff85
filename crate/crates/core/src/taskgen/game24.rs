use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{GenError, Gold, QuestionKind, TaskInstance, TaskKind, TaskPayload};
use crate::game24::{render, solve24};

const MAX_ATTEMPTS: u32 = 100_000;

pub(super) fn recompute(numbers: [u64; 4]) -> Gold {
    let witness = solve24(numbers).map(|e| render(&e));
    Gold::Game24 { solvable: witness.is_some(), witness }
}

/// Four numbers in 1..=13 whose solvability matches `solvable`.
pub fn gen_game24_instance(seed: u64, solvable: bool) -> Result<TaskInstance, GenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        let mut numbers = [0u64; 4];
        numbers.iter_mut().for_each(|n| *n = rng.gen_range(1..=13));
        let gold = recompute(numbers);
        if !matches!(gold, Gold::Game24 { solvable: s, .. } if s == solvable) {
            continue;
        }
        let list: Vec<_> = numbers.iter().map(|n| n.to_string()).collect();
        return Ok(TaskInstance {
            id: format!("game24-{seed}"),
            kind: TaskKind::Game24,
            payload: TaskPayload::Game24 { numbers },
            question_kind: QuestionKind::Make24,
            question: format!(
                "Use the numbers {} exactly once each, with + - * / and parentheses, to make 24.",
                list.join(", ")
            ),
            options: Vec::new(),
            gold,
            seed,
        });
    }
    Err(GenError::Exhausted(MAX_ATTEMPTS))
}
