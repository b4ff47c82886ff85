use super::*;
use crate::backend::{playback, GenerationParams, MockFactory, MockNode, MockScript, ProbeEntry, SplitPlan, SplitSession, TopLogprob};
use crate::extraction::{AnswerExtractor, ChunkExtractor, EquationExtractor, MazeExtractor};
use crate::maze::parse_maze;
use crate::stopping::{EquivalenceChecker, EquivalenceMode};

fn factory(script: MockScript) -> MockFactory {
    MockFactory::new(script, GenerationParams::qwen()).unwrap()
}

fn game24_script() -> MockScript {
    MockScript::new(&["try"])
        .node("try", MockNode::from_text("Let me try (1+1)*4+6 = 14\nhmm").with_branch("*", "fix"))
        .node("fix", MockNode::from_text("So 4*6*1*1 = 24\nDone.").with_tail(" 4*6*1*1"))
}

fn game24_binding() -> Binding {
    Binding::new("equation", EquationExtractor::new(&[1, 1, 4, 6]), "game24", Game24Verifier::new(&[1, 1, 4, 6]), Policy::feedback())
}

fn run(f: &MockFactory, bindings: &mut [Binding]) -> RunOutcome {
    let mut s = f.open_mock("solve", 0).unwrap();
    run_monitored_generation("solve", &mut s, bindings, &MonitorConfig::default(), &NoClock)
}

#[test]
fn no_bindings_is_plain_playback() {
    let f = factory(game24_script());
    let out = run(&f, &mut []);
    let (text, tokens) = playback(&mut f.open_mock("solve", 0).unwrap()).unwrap();
    assert_eq!(out.status, RunStatus::Completed);
    assert_eq!(out.trace.body(), text);
    assert_eq!(out.trace.model_tokens(), tokens);
    assert_eq!(out.trace.intervention_count(), 0);
}

#[test]
fn failed_equation_gets_feedback_after_the_line() {
    let f = factory(game24_script());
    let out = run(&f, &mut [game24_binding()]);
    assert_eq!(out.status, RunStatus::Completed);
    assert_eq!(out.trace.intervention_count(), 1);
    let body = out.trace.body();
    let cut = body.find("= 14\n").unwrap() + 5;
    assert!(body[cut..].starts_with("Wait, "), "{body}");
    assert!(body.ends_with("So 4*6*1*1 = 24\nDone."));
    assert!(!body.contains("hmm"));
    let report = recheck(&out.trace, &mut [game24_binding()]).unwrap();
    assert!(report.sound(), "{report:?}");
    assert_eq!(report.checked, 1);
}

#[test]
fn byte_level_splitting_does_not_change_the_run() {
    let f = factory(game24_script());
    let base = run(&f, &mut [game24_binding()]);
    for n in [1, 2, 3, 7] {
        let mut s = SplitSession::new(f.open_mock("solve", 0).unwrap(), SplitPlan::Every(n));
        let out = run_monitored_generation("solve", &mut s, &mut [game24_binding()], &MonitorConfig::default(), &NoClock);
        assert_eq!(out.trace.body(), base.trace.body(), "split every {n}");
        assert_eq!(out.trace.model_tokens(), base.trace.model_tokens());
        assert_eq!(out.verdict_log, base.verdict_log);
    }
}

#[test]
fn budget_exhaustion_halts() {
    let script = MockScript::new(&["bad"]).node("bad", MockNode::from_text("(1+1)*4+6 = 14\n").with_branch("*", "bad"));
    let f = factory(script);
    let out = run(&f, &mut [game24_binding()]);
    assert_eq!(out.status, RunStatus::Abstained);
    assert_eq!(out.trace.intervention_count(), 3);
    assert!(out.halted_reason.as_deref().unwrap().contains("game24"));
    assert_eq!(out.interventions().last().unwrap().action.kind, ActionKind::Halt);

    let f = factory(MockScript::new(&["bad"]).node("bad", MockNode::from_text("(1+1)*4+6 = 14\n").with_branch("*", "bad")));
    let out = run(&f, &mut [game24_binding().with_max_interventions(1)]);
    assert_eq!(out.trace.intervention_count(), 1);
    assert_eq!(out.status, RunStatus::Abstained);
}

#[test]
fn stable_answer_ends_thinking() {
    let script = MockScript::new(&["a"]).node(
        "a",
        MockNode::from_text("the answer is B\nchecking\nso the answer is B\nlet me verify again\nthe answer is C\n").with_tail(" B."),
    );
    let f = factory(script);
    let checker = EquivalenceChecker::new(EquivalenceMode::Normalized);
    let mut b = [Binding::new("answer", AnswerExtractor::default(), "kstable", KStableVerifier::new(2, checker), Policy::stopper())];
    let out = run(&f, &mut b);
    assert_eq!(out.status, RunStatus::Completed);
    assert!(out.trace.think_closed());
    assert!(out.trace.body().ends_with("so the answer is B</think>\nThe final answer is B."), "{}", out.trace.body());
    assert!(!out.trace.body().contains("verify again"));
}

#[test]
fn maze_wall_violation_branches() {
    let maze = "#####\n#S  #\n### #\n#E  #\n#####";
    let grid = parse_maze(maze).unwrap();
    let step = |n: u32, dir: &str, from: (u32, u32), to: (u32, u32), prev: &str, turn: &str, r: u32| {
        alloc::format!(
            ">>> STEP {n}: Move {dir} from ({},{}) to ({},{})\n    Current position: ({},{})\n    Previous direction: {prev}\n    Current direction: {dir}\n    Turn type: {turn}\n    Running count: Right={r}, Left=0\n",
            from.0, from.1, to.0, to.1, to.0, to.1
        )
    };
    let bad = step(1, "DOWN", (1, 1), (2, 1), "", "STRAIGHT", 0);
    let good = step(1, "RIGHT", (1, 1), (1, 2), "", "STRAIGHT", 0);
    let script = MockScript::new(&["bad"])
        .node("bad", MockNode::from_text(&bad).with_branch("*", "good"))
        .node("good", MockNode::from_text(&good));
    let f = factory(script);
    let mut b = [Binding::new("maze", MazeExtractor::default(), "maze", MazeVerifier::new(grid.clone()), Policy::feedback())];
    let out = run(&f, &mut b);
    let fb = &out.interventions().next().unwrap().verdict;
    assert!(!fb.pass);
    assert_eq!(out.trace.intervention_count(), 1);
    assert!(out.trace.body().ends_with(&good));
    let mut fresh = [Binding::new("maze", MazeExtractor::default(), "maze", MazeVerifier::new(grid), Policy::feedback())];
    assert!(recheck(&out.trace, &mut fresh).unwrap().sound());
}

#[test]
fn eat_stops_when_entropy_settles() {
    let flat = alloc::vec![TopLogprob::new("A", libm::log(0.5)), TopLogprob::new("B", libm::log(0.5))];
    let peaked = alloc::vec![TopLogprob::new("A", libm::log(0.999)), TopLogprob::new("B", libm::log(0.001))];
    let probe = |after: &str, dist: &Vec<TopLogprob>| ProbeEntry { at_byte: None, after: Some(after.into()), suffix: None, dist: dist.clone() };
    let node = MockNode::from_text("one\n\ntwo\n\nthree\n\nfour\n\nfive")
        .with_tail(" A")
        .with_probe(probe("one", &flat))
        .with_probe(probe("two", &peaked))
        .with_probe(probe("three", &peaked))
        .with_probe(probe("four", &peaked));
    let f = factory(MockScript::new(&["n"]).node("n", node));
    let mut b = [Binding::new("chunk", ChunkExtractor::default(), "eat", EatVerifier::new(0.3, 0.5), Policy::stopper())];
    let out = run(&f, &mut b);
    assert!(out.trace.think_closed());
    assert!(!out.trace.body().contains("five"), "{}", out.trace.body());
    assert!(out.trace.body().ends_with(" A"));
}

#[test]
fn probing_verifier_without_tables_fails_the_run() {
    let f = factory(game24_script());
    let mut b = [Binding::new("chunk", ChunkExtractor::default(), "eat", EatVerifier::new(0.3, 0.5), Policy::stopper())];
    let script = MockScript::new(&["n"]).node("n", MockNode::from_text("a\n\nb"));
    let f2 = factory(script);
    let out = run(&f2, &mut b);
    assert_eq!(out.status, RunStatus::Failed);
    let _ = f;
}

#[test]
fn recheck_flags_unfixed_errors() {
    let mut trace = ReasoningTrace::new("p");
    trace.push_model("4*6*1*1 = 24\n(1+1)*4+6 = 14\n", 10);
    let r = recheck(&trace, &mut [game24_binding()]).unwrap();
    assert_eq!(r.checked, 2);
    assert_eq!(r.failures.len(), 1);
}

#[test]
fn token_limit_truncates() {
    let f = factory(game24_script());
    let mut s = f.open_mock("solve", 0).unwrap();
    let config = MonitorConfig { limits: MonitorLimits { max_total_tokens: 3, max_wall_seconds: 10.0 }, ..Default::default() };
    let out = run_monitored_generation("solve", &mut s, &mut [], &config, &NoClock);
    assert_eq!(out.status, RunStatus::Truncated);
    assert_eq!(out.trace.model_tokens(), 3);
}
