use alloc::boxed::Box;
use alloc::collections::VecDeque;
use alloc::string::String;
use alloc::vec::Vec;

use super::{BackendError, GenerationSession, SessionDescriptor, SessionFactory, TokenEvent, TopLogprob};
use crate::trace::ReasoningTrace;

/// Where to cut the byte stream of a session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SplitPlan {
    /// Every `n` bytes of streamed text.
    Every(usize),
    /// At these stream offsets.
    At(Vec<usize>),
}

impl SplitPlan {
    fn cuts_in(&self, from: usize, to: usize) -> Vec<usize> {
        match self {
            SplitPlan::Every(n) if *n > 0 => ((from / n + 1) * n..to).step_by(*n).collect(),
            SplitPlan::Every(_) => Vec::new(),
            SplitPlan::At(points) => points.iter().copied().filter(|&p| p > from && p < to).collect(),
        }
    }
}

/// Re-chunks another session's events at byte offsets. Only the first fragment
/// of a token counts as a token, so token totals are unchanged.
pub struct SplitSession<S> {
    inner: S,
    plan: SplitPlan,
    offset: usize,
    pending: VecDeque<TokenEvent>,
}

impl<S: GenerationSession> SplitSession<S> {
    pub fn new(inner: S, plan: SplitPlan) -> Self {
        Self { inner, plan, offset: 0, pending: VecDeque::new() }
    }
}

impl<S: GenerationSession> GenerationSession for SplitSession<S> {
    fn descriptor(&self) -> &SessionDescriptor {
        self.inner.descriptor()
    }

    fn next_event(&mut self) -> Result<Option<TokenEvent>, BackendError> {
        if let Some(ev) = self.pending.pop_front() {
            return Ok(Some(ev));
        }
        let Some(ev) = self.inner.next_event()? else { return Ok(None) };
        let start = self.offset;
        self.offset += ev.text.len();
        let mut last = 0;
        let mut first = true;
        let cuts: Vec<usize> = self
            .plan
            .cuts_in(start, self.offset)
            .into_iter()
            .map(|c| c - start)
            .filter(|&c| ev.text.is_char_boundary(c))
            .chain(core::iter::once(ev.text.len()))
            .collect();
        for c in cuts {
            if c == last {
                continue;
            }
            self.pending.push_back(TokenEvent {
                text: String::from(&ev.text[last..c]),
                top_logprobs: if first { ev.top_logprobs.clone() } else { None },
                continuation: ev.continuation || !first,
            });
            first = false;
            last = c;
        }
        Ok(self.pending.pop_front())
    }

    fn continue_from(&mut self, trace: &ReasoningTrace) -> Result<(), BackendError> {
        self.pending.clear();
        self.inner.continue_from(trace)
    }

    fn cancel(&mut self) {
        self.pending.clear();
        self.inner.cancel()
    }

    fn close(&mut self) {
        self.inner.close()
    }

    fn probe_next_distribution(&mut self, context: &str, suffix: &str) -> Result<Vec<TopLogprob>, BackendError> {
        self.inner.probe_next_distribution(context, suffix)
    }
}

/// Wraps every session of another factory in a [`SplitSession`].
pub struct SplitFactory<F> {
    pub inner: F,
    pub plan: SplitPlan,
}

impl<F: SessionFactory> SessionFactory for SplitFactory<F> {
    fn open(&self, prompt: &str, sample: u32) -> Result<Box<dyn GenerationSession>, BackendError> {
        Ok(Box::new(SplitSession::new(self.inner.open(prompt, sample)?, self.plan.clone())))
    }
}
