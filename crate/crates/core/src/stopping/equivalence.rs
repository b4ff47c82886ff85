use alloc::boxed::Box;
use alloc::string::String;
use alloc::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EquivalenceMode {
    Exact,
    #[default]
    Normalized,
    Pluggable,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("equivalence judge failed: {0}")]
pub struct JudgeError(pub String);

/// An external semantic-equivalence judge.
pub trait Judge: Send + Sync {
    fn same(&self, a: &str, b: &str) -> Result<bool, JudgeError>;
}

/// Case-folds, collapses whitespace and strips trailing punctuation.
pub fn normalize_payload(s: &str) -> String {
    let folded = s.to_lowercase();
    let mut out = String::with_capacity(folded.len());
    for word in folded.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    let trimmed = out.trim_end_matches(|c: char| c.is_whitespace() || matches!(c, '.' | ',' | ';' | ':' | '!' | '?')).len();
    out.truncate(trimmed);
    out
}

#[derive(Clone)]
pub struct EquivalenceChecker {
    mode: EquivalenceMode,
    judge: Option<Arc<dyn Judge>>,
}

impl core::fmt::Debug for EquivalenceChecker {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("EquivalenceChecker").field("mode", &self.mode).finish()
    }
}

impl EquivalenceChecker {
    /// Pluggable mode built this way has no judge and fails on every
    /// non-identical pair; use [`EquivalenceChecker::pluggable`].
    pub fn new(mode: EquivalenceMode) -> Self {
        Self { mode, judge: None }
    }

    pub fn pluggable(judge: Box<dyn Judge>) -> Self {
        Self { mode: EquivalenceMode::Pluggable, judge: Some(Arc::from(judge)) }
    }

    pub fn mode(&self) -> EquivalenceMode {
        self.mode
    }

    /// Reflexive and symmetric by construction: identical inputs never reach
    /// the judge, and the judge always sees the pair in sorted order.
    pub fn equivalent(&self, a: &str, b: &str) -> Result<bool, JudgeError> {
        if a == b {
            return Ok(true);
        }
        match self.mode {
            EquivalenceMode::Exact => Ok(false),
            EquivalenceMode::Normalized => Ok(normalize_payload(a) == normalize_payload(b)),
            EquivalenceMode::Pluggable => match &self.judge {
                Some(j) => {
                    if normalize_payload(a) == normalize_payload(b) {
                        return Ok(true);
                    }
                    let (x, y) = if a <= b { (a, b) } else { (b, a) };
                    j.same(x, y)
                }
                None => Err(JudgeError(String::from("pluggable equivalence configured without a judge"))),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    struct LenJudge;
    impl Judge for LenJudge {
        fn same(&self, a: &str, b: &str) -> Result<bool, JudgeError> {
            assert!(a <= b);
            Ok(a.len() == b.len())
        }
    }

    struct DownJudge;
    impl Judge for DownJudge {
        fn same(&self, _: &str, _: &str) -> Result<bool, JudgeError> {
            Err(JudgeError("unreachable".into()))
        }
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_payload("  The   Answer\tis B. "), "the answer is b");
        assert_eq!(normalize_payload("b ."), "b");
        let c = EquivalenceChecker::new(EquivalenceMode::Normalized);
        assert!(c.equivalent("B.", "b").unwrap());
        assert!(!EquivalenceChecker::new(EquivalenceMode::Exact).equivalent("B.", "b").unwrap());
    }

    #[test]
    fn judge_errors_propagate() {
        let c = EquivalenceChecker::pluggable(Box::new(DownJudge));
        assert!(c.equivalent("x", "y").is_err());
        assert!(c.equivalent("x", "x").unwrap());
    }

    proptest! {
        #[test]
        fn reflexive_and_symmetric(a in ".{0,12}", b in ".{0,12}") {
            let modes = [
                EquivalenceChecker::new(EquivalenceMode::Exact),
                EquivalenceChecker::new(EquivalenceMode::Normalized),
                EquivalenceChecker::pluggable(Box::new(LenJudge)),
            ];
            for c in &modes {
                prop_assert!(c.equivalent(&a, &a).unwrap());
                prop_assert_eq!(c.equivalent(&a, &b).unwrap(), c.equivalent(&b, &a).unwrap());
            }
        }
    }
}
