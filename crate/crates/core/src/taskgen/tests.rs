use super::*;
use crate::game24::verify_game24;
use crate::maze::{gold_steps, parse_maze, verify_step};
use crate::spatial::satisfiability_oracle;

fn check_options(inst: &TaskInstance) {
    assert_eq!(inst.options.len(), 4);
    let Gold::Label { label } = &inst.gold else { panic!("{:?}", inst.gold) };
    assert_eq!(inst.options.iter().filter(|c| &c.label == label).count(), 1);
    let mut texts: Vec<&str> = inst.options.iter().map(|c| c.text.as_str()).collect();
    texts.sort();
    texts.dedup();
    assert_eq!(texts.len(), 4, "{:?}", inst.options);
}

#[test]
fn maze_is_deterministic_and_closed() {
    for seed in 0..60 {
        for q in [QuestionKind::RightTurns, QuestionKind::TotalTurns, QuestionKind::RelativePosition] {
            let a = gen_maze_instance(seed, 9, 11, q).unwrap();
            assert_eq!(a, gen_maze_instance(seed, 9, 11, q).unwrap());
            check_options(&a);
            assert_eq!(a.recompute_gold().unwrap(), a.gold);
            let TaskPayload::Maze { ascii } = &a.payload else { panic!() };
            let grid = parse_maze(ascii).unwrap();
            assert_eq!(grid.render(), *ascii);
            let steps = gold_steps(&grid, q == QuestionKind::TotalTurns);
            for (i, s) in steps.iter().enumerate() {
                assert!(verify_step(&grid, &steps[..i], s).pass);
            }
        }
    }
}

#[test]
fn maze_parameter_errors() {
    assert!(matches!(gen_maze_instance(1, 4, 9, QuestionKind::RightTurns), Err(GenError::Parameters(_))));
    assert!(matches!(gen_maze_instance(1, 9, 9, QuestionKind::Q0), Err(GenError::WrongQuestion(_))));
}

#[test]
fn spatial_is_satisfiable_and_closed() {
    for seed in 0..60 {
        for q in [QuestionKind::Q0, QuestionKind::Q1, QuestionKind::Q2] {
            let n = if q == QuestionKind::Q1 { 5 + (seed as usize % 4) } else { 4 + (seed as usize % 5) };
            let a = gen_spatial_instance(seed, n, q).unwrap_or_else(|e| panic!("{seed} {n} {q:?} {e}"));
            assert_eq!(a, gen_spatial_instance(seed, n, q).unwrap());
            check_options(&a);
            assert_eq!(a.recompute_gold().unwrap(), a.gold, "{a:#?}");
            let TaskPayload::Spatial { entities, relations, .. } = &a.payload else { panic!() };
            assert_eq!(entities.len(), n);
            if n <= crate::spatial::MAX_ORACLE_ENTITIES {
                assert!(satisfiability_oracle(relations).unwrap());
            }
        }
    }
}

#[test]
fn q1_needs_five_objects() {
    assert!(matches!(gen_spatial_instance(0, 4, QuestionKind::Q1), Err(GenError::Parameters(_))));
}

#[test]
fn game24_instances() {
    for seed in 0..20 {
        let a = gen_game24_instance(seed, true).unwrap();
        let Gold::Game24 { solvable: true, witness: Some(w) } = &a.gold else { panic!() };
        assert!(verify_game24(w, &a.numbers().unwrap()).pass);
        assert!(a.is_correct(Some(w)));
        let b = gen_game24_instance(seed, false).unwrap();
        assert_eq!(b.recompute_gold().unwrap(), b.gold);
        assert!(b.is_correct(Some(NO_SOLUTION)));
        assert!(!b.is_correct(None));
    }
}

#[test]
fn prompts_by_style() {
    let maze = gen_maze_instance(3, 7, 7, QuestionKind::RightTurns).unwrap();
    let p = render_metaprompt(&maze, PromptStyle::Stepwise).unwrap();
    assert!(p.contains(">>> STEP 1: Move DOWN"));
    assert!(p.contains(&maze.question));
    let plain = render_metaprompt(&maze, PromptStyle::Plain).unwrap();
    assert!(!plain.contains(">>>"));
    let sp = gen_spatial_instance(3, 5, QuestionKind::Q0).unwrap();
    assert!(render_metaprompt(&sp, PromptStyle::Stepwise).unwrap().contains("STEP 1: PARSE RELATIONSHIPS"));
    assert!(!render_metaprompt(&sp, PromptStyle::Plain).unwrap().contains(">>>"));
    assert_eq!(
        TemplateSet::empty().render(&sp, PromptStyle::Plain),
        Err(TemplateError::Missing { kind: TaskKind::Spatialmap, style: PromptStyle::Plain })
    );
}

#[test]
fn answers_are_read_after_thinking() {
    let maze = gen_maze_instance(5, 7, 7, QuestionKind::RightTurns).unwrap();
    let Gold::Label { label } = maze.gold.clone() else { panic!() };
    let body = alloc::format!("the answer is Z maybe\n</think>\nThe final answer is \\boxed{{{label}}}");
    assert_eq!(maze.read_answer(&body).as_deref(), Some(label.as_str()));
    assert!(maze.is_correct(maze.read_answer(&body).as_deref()));
    let g = gen_game24_instance(2, true).unwrap();
    let Gold::Game24 { witness: Some(w), .. } = &g.gold else { panic!() };
    assert_eq!(g.read_answer(&alloc::format!("so {w} = 24\n")).as_deref(), Some(w.as_str()));
}

#[test]
fn instance_json_round_trip() {
    let a = gen_spatial_instance(9, 6, QuestionKind::Q1).unwrap();
    let json = serde_json::to_string(&a).unwrap();
    assert_eq!(serde_json::from_str::<TaskInstance>(&json).unwrap(), a);
}
