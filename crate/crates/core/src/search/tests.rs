use alloc::string::ToString;
use alloc::vec;

use super::*;
use crate::backend::{GenerationParams, MockFactory, MockNode, MockScript};
use crate::extraction::MazeExtractor;
use crate::maze::parse_maze;
use crate::monitor::{MazeVerifier, NoClock, Policy};

fn read(t: &ReasoningTrace) -> Option<String> {
    let b = t.body();
    b.rfind("ANSWER ").map(|i| b[i + 7..].trim().to_string())
}

fn factory() -> MockFactory {
    let script = MockScript::new(&["wrong", "right", "wrong", "long"])
        .node("wrong", MockNode::from_text("thinking hard ANSWER B"))
        .node("right", MockNode::from_text("ANSWER A"))
        .node("long", MockNode::from_text("a very long and winding path ANSWER B"))
        .route("rejected", &["right"]);
    MockFactory::new(script, GenerationParams::qwen()).unwrap()
}

fn gold() -> GoldOracleCritic {
    GoldOracleCritic::new(|a| a == Some("A"))
}

#[test]
fn vote_rules() {
    let s = |x: &str| Some(x.to_string());
    assert_eq!(majority_vote(&[s("A"), s("A"), s("B")], &[0.0, 0.0, 1.0]).0, "A");
    assert_eq!(majority_vote(&[s("A"), s("B")], &[0.2, 0.9]), ("B".to_string(), Some(1)));
    assert_eq!(majority_vote(&[None, None], &[1.0, 1.0]), (NO_ANSWER.to_string(), None));
    assert_eq!(majority_vote(&[None, s("C")], &[1.0, 0.0]).0, "C");
}

#[test]
fn best_of_k_sums_tokens_and_picks_the_oracle_choice() {
    let f = factory();
    let cfg = MonitorConfig::default();
    let one = best_of_k(&f, "q", 1, &gold(), &cfg, &NoClock, &read).unwrap();
    let cot = generate_candidate(&f, "q", 0, &cfg, &NoClock, &read).unwrap();
    assert_eq!(one.trace, cot.trace);
    assert_eq!(one.total_model_tokens, cot.tokens());

    let four = best_of_k(&f, "q", 4, &gold(), &cfg, &NoClock, &read).unwrap();
    assert_eq!(four.answer.as_deref(), Some("A"));
    assert_eq!(four.candidate_tokens.len(), 4);
    assert_eq!(four.total_model_tokens, four.candidate_tokens.iter().sum::<u64>());
    assert_eq!(four.candidate_tokens, vec![4, 2, 4, 8]);
}

#[test]
fn majority_of_k_votes() {
    let f = factory();
    let out = majority_of_k(&f, "q", 4, &gold(), &MonitorConfig::default(), &NoClock, &read).unwrap();
    assert_eq!(out.answer.as_deref(), Some("B"));
    assert_eq!(out.total_model_tokens, 18);
}

#[test]
fn generate_test_retries_with_feedback() {
    let f = factory();
    let cfg = MonitorConfig::default();
    let mut test = |c: &Candidate| if c.answer.as_deref() == Some("A") { Verdict::pass() } else { Verdict::fail("B is wrong") };
    // sample 0 routes to "wrong"; the retry prompt mentions the rejection
    let out = generate_test_loop(&f, "q", 3, &mut test, &cfg, &NoClock, &read).unwrap();
    assert_eq!(out.iterations, 2);
    assert_eq!(out.verified, Some(true));
    assert_eq!(out.total_model_tokens, 4 + 2);

    let mut never = |_: &Candidate| Verdict::fail("no");
    let out = generate_test_loop(&f, "q", 2, &mut never, &cfg, &NoClock, &read).unwrap();
    assert_eq!(out.verified, Some(false));
    assert_eq!(out.iterations, 2);
}

#[test]
fn value_words() {
    assert_eq!(parse_value_category("this is unlikely"), Some(ValueCategory::Unlikely));
    assert_eq!(parse_value_category("Likely."), Some(ValueCategory::Likely));
    assert_eq!(parse_value_category("impossible, 2 3 5"), Some(ValueCategory::Impossible));
    assert_eq!(parse_value_category("hmm"), None);
    assert_eq!(terminal_answer("  answer: 4*6 "), Some("4*6"));
}

/// Toy tree: state names encode their path; leaves at depth 3 have values.
struct Toy {
    branching: usize,
    calls: usize,
}

impl Proposer for Toy {
    fn propose(&mut self, path: &[String], n: usize) -> Result<Proposals, SearchError> {
        self.calls += 1;
        let states = (0..self.branching.min(n))
            .map(|i| {
                let prefix = path.last().map(|s| s.trim_start_matches("ANSWER: ").to_string()).unwrap_or_default();
                let name = alloc::format!("{prefix}{i}");
                if name.len() == 3 { alloc::format!("ANSWER: {name}") } else { name }
            })
            .collect();
        Ok(Proposals { states, tokens: 1 })
    }
}

fn leaf_value(name: &str) -> f64 {
    let digits: Vec<u32> = name.chars().filter_map(|c| c.to_digit(10)).collect();
    // hand-picked so the greedy prefix is not the best leaf
    match digits.as_slice() {
        [0, ..] if digits.len() < 3 => 0.9,
        [1, ..] if digits.len() < 3 => 0.5,
        [1, 2, 0] => 0.95,
        [a, b, c] => 0.1 + 0.01 * f64::from(a + b + c),
        _ => 0.3,
    }
}

struct ToyValuer;

impl Valuer for ToyValuer {
    fn value(&mut self, _: &[String], state: &str) -> Result<Valuation, SearchError> {
        Ok(Valuation { score: leaf_value(state), tiebreak: 0, tokens: 1 })
    }
}

#[test]
fn exhaustive_beam_finds_the_best_leaf() {
    let cfg = ToTConfig { beam_width: 100, max_depth: 8, proposals_per_node: 3, ..Default::default() };
    let out = tot_search(&mut Toy { branching: 3, calls: 0 }, &mut ToyValuer, &cfg).unwrap();
    // brute force: every leaf of the 3-ary depth-3 tree
    let mut best = ("".to_string(), -1.0);
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                let name = alloc::format!("{a}{b}{c}");
                if leaf_value(&name) > best.1 {
                    best = (name.clone(), leaf_value(&name));
                }
            }
        }
    }
    assert_eq!(out.answer.as_deref(), Some(best.0.as_str()));
    assert_eq!(best.0, "120");
    assert!(out.terminal);

    // a width-1 beam commits to the greedy prefix and misses it
    let greedy = ToTConfig { beam_width: 1, ..cfg };
    let out = tot_search(&mut Toy { branching: 3, calls: 0 }, &mut ToyValuer, &greedy).unwrap();
    assert_ne!(out.answer.as_deref(), Some("120"));
}

struct Endless {
    max_seen_depth: usize,
}

impl Proposer for Endless {
    fn propose(&mut self, path: &[String], n: usize) -> Result<Proposals, SearchError> {
        self.max_seen_depth = self.max_seen_depth.max(path.len());
        Ok(Proposals { states: (0..n + 3).map(|i| alloc::format!("s{}-{i}", path.len())).collect(), tokens: 2 })
    }
}

#[test]
fn caps_are_respected() {
    let cfg = ToTConfig::default();
    let mut p = Endless { max_seen_depth: 0 };
    let out = tot_search(&mut p, &mut ToyValuer, &cfg).unwrap();
    assert!(out.max_active <= 4);
    assert_eq!(out.max_depth_reached, 8);
    assert_eq!(out.path.len(), 8);
    assert!(p.max_seen_depth < 8);
    assert!(!out.terminal);
    // 1 root expansion, then 2 per depth
    assert_eq!(out.expansions, 1 + 2 * 7);
    assert_eq!(out.tokens, 2 * 15 + 2 + 4 * 7);
}

#[test]
fn step_verifier_valuer_keeps_valid_maze_moves() {
    let grid = parse_maze("#####\n#S  #\n### #\n#E  #\n#####").unwrap();
    let g = grid.clone();
    let mut valuer = StepVerifierValuer::new(move || {
        vec![Binding::new("maze", MazeExtractor::default(), "maze", MazeVerifier::new(g.clone()), Policy::feedback())]
    });
    let ok = valuer.value(&[], ">>> STEP 1: Move RIGHT from (1,1) to (1,2)").unwrap();
    let wall = valuer.value(&[], ">>> STEP 1: Move DOWN from (1,1) to (2,1)").unwrap();
    assert_eq!(ok.score, 1.0);
    assert_eq!(wall.score, 0.0);

    struct Fixed(Vec<&'static str>);
    impl Proposer for Fixed {
        fn propose(&mut self, path: &[String], _: usize) -> Result<Proposals, SearchError> {
            let s = match path.len() {
                0 => vec![self.0[0], self.0[1]],
                _ => vec!["ANSWER: A"],
            };
            Ok(Proposals { states: s.into_iter().map(String::from).collect(), tokens: 1 })
        }
    }
    let mut p = Fixed(vec![">>> STEP 1: Move DOWN from (1,1) to (2,1)", ">>> STEP 1: Move RIGHT from (1,1) to (1,2)"]);
    let out = tot_search(&mut p, &mut valuer, &ToTConfig::default()).unwrap();
    assert_eq!(out.path[0], ">>> STEP 1: Move RIGHT from (1,1) to (1,2)");
    assert_eq!(out.answer.as_deref(), Some("A"));
}
