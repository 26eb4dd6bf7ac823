//! Episode state machine over a [`NavGraph`].
//!
//! An episode starts on the homepage. Each observation offers the current
//! page's buttons followed by a single stop action; choosing a button moves
//! to its target, choosing stop ends the episode on the current page. An
//! episode is also ended, without an explicit stop, once `max_steps`
//! transitions have been taken.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::graph::{Button, NavGraph, PageId};

pub const DEFAULT_MAX_STEPS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        Split::ALL.into_iter().find(|x| x.as_str() == s)
    }
}

/// One benchmark sample: question, optional description, gold answer and
/// the ground-truth shortest path starting at the homepage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub record_id: String,
    pub site_id: String,
    pub question: String,
    #[serde(default)]
    pub description: String,
    pub answer: String,
    pub path: Vec<PageId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

/// Minimum number of transitions in a ground-truth path.
pub const MIN_TRANSITIONS: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SimError {
    #[error("record `{record}` does not match the graph: {reason}")]
    RecordGraphMismatch { record: String, reason: String },
    #[error("episode already finished")]
    EpisodeFinished,
    #[error("episode not finished")]
    EpisodeNotFinished,
    #[error("action index {index} out of range for {count} candidates")]
    InvalidActionIndex { index: usize, count: usize },
}

impl EpisodeRecord {
    pub fn target(&self) -> &PageId {
        self.path.last().expect("validated record has a path")
    }

    pub fn transitions(&self) -> usize {
        self.path.len().saturating_sub(1)
    }

    /// Checks the path against the graph: starts at the homepage, every hop
    /// is an edge and there are at least two transitions.
    pub fn validate(&self, graph: &NavGraph) -> Result<(), SimError> {
        let mismatch = |reason: String| SimError::RecordGraphMismatch {
            record: self.record_id.clone(),
            reason,
        };
        if self.path.len() < MIN_TRANSITIONS + 1 {
            return Err(mismatch(alloc::format!(
                "path has {} transitions, need at least {MIN_TRANSITIONS}",
                self.transitions()
            )));
        }
        if &self.path[0] != graph.homepage() {
            return Err(mismatch(alloc::format!("path starts at `{}`, not the homepage", self.path[0])));
        }
        for w in self.path.windows(2) {
            if !graph.contains(w[0].as_str()) || !graph.contains(w[1].as_str()) {
                return Err(mismatch(alloc::format!("unknown page on path `{}`/`{}`", w[0], w[1])));
            }
            if !graph.has_edge(w[0].as_str(), w[1].as_str()) {
                return Err(mismatch(alloc::format!("no edge `{}` -> `{}`", w[0], w[1])));
            }
        }
        Ok(())
    }

    /// Teacher action indices along the path, ending with the stop action.
    pub fn teacher_actions(&self, graph: &NavGraph) -> Option<Vec<usize>> {
        let mut out = graph.path_actions(&self.path)?;
        out.push(graph.require(self.target().as_str()).ok()?.buttons.len());
        Some(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Click(Button),
    Stop,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub page_id: PageId,
    pub screenshot_ref: String,
    /// Page buttons in document order, then [`Action::Stop`].
    pub candidates: Vec<Action>,
}

impl Observation {
    pub fn stop_index(&self) -> usize {
        self.candidates.len() - 1
    }

    pub fn button_count(&self) -> usize {
        self.candidates.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub page_id: PageId,
    pub action_index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeState {
    pub record_id: String,
    pub current_page: PageId,
    /// Transitions taken so far.
    pub t: usize,
    pub done: bool,
    pub forced_stop: bool,
    pub history: Vec<HistoryEntry>,
    pub visited: Vec<PageId>,
}

/// The realized episode; one JSON line in a trajectory log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trajectory {
    pub record_id: String,
    pub visited: Vec<PageId>,
    pub action_indices: Vec<usize>,
    pub stopped_page_id: PageId,
    pub answer: Option<String>,
    pub forced_stop: bool,
}

impl Trajectory {
    pub fn transitions(&self) -> usize {
        self.visited.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Simulator<'g> {
    graph: &'g NavGraph,
    max_steps: usize,
}

impl<'g> Simulator<'g> {
    pub fn new(graph: &'g NavGraph) -> Self {
        Self::with_max_steps(graph, DEFAULT_MAX_STEPS)
    }

    pub fn with_max_steps(graph: &'g NavGraph, max_steps: usize) -> Self {
        Simulator { graph, max_steps: max_steps.max(1) }
    }

    pub fn graph(&self) -> &'g NavGraph {
        self.graph
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn reset(&self, record: &EpisodeRecord) -> Result<EpisodeState, SimError> {
        record.validate(self.graph)?;
        let home = self.graph.homepage().clone();
        Ok(EpisodeState {
            record_id: record.record_id.clone(),
            current_page: home.clone(),
            t: 0,
            done: false,
            forced_stop: false,
            history: Vec::new(),
            visited: alloc::vec![home],
        })
    }

    pub fn observe(&self, state: &EpisodeState) -> Result<Observation, SimError> {
        if state.done {
            return Err(SimError::EpisodeFinished);
        }
        let page = self
            .graph
            .page(state.current_page.as_str())
            .expect("episode state only holds graph pages");
        let mut candidates: Vec<Action> = page.buttons.iter().cloned().map(Action::Click).collect();
        candidates.push(Action::Stop);
        Ok(Observation {
            page_id: page.page_id.clone(),
            screenshot_ref: page.screenshot_ref.clone(),
            candidates,
        })
    }

    pub fn step(&self, mut state: EpisodeState, action_index: usize) -> Result<EpisodeState, SimError> {
        if state.done {
            return Err(SimError::EpisodeFinished);
        }
        let page = self
            .graph
            .page(state.current_page.as_str())
            .expect("episode state only holds graph pages");
        let count = page.buttons.len() + 1;
        if action_index >= count {
            return Err(SimError::InvalidActionIndex { index: action_index, count });
        }
        state.history.push(HistoryEntry {
            page_id: state.current_page.clone(),
            action_index,
        });
        if action_index == page.buttons.len() {
            state.done = true;
            return Ok(state);
        }
        let next = page.buttons[action_index].target.clone();
        state.current_page = next.clone();
        state.visited.push(next);
        state.t += 1;
        if state.t >= self.max_steps {
            state.done = true;
            state.forced_stop = true;
        }
        Ok(state)
    }

    pub fn finish_with_answer(&self, state: &EpisodeState, answer: impl Into<String>) -> Result<Trajectory, SimError> {
        if !state.done {
            return Err(SimError::EpisodeNotFinished);
        }
        Ok(Trajectory {
            record_id: state.record_id.clone(),
            visited: state.visited.clone(),
            action_indices: state.history.iter().map(|h| h.action_index).collect(),
            stopped_page_id: state.current_page.clone(),
            answer: Some(answer.into()),
            forced_stop: state.forced_stop,
        })
    }

    /// Re-executes logged action indices from reset.
    pub fn replay(&self, record: &EpisodeRecord, actions: &[usize]) -> Result<EpisodeState, SimError> {
        let mut state = self.reset(record)?;
        for &a in actions {
            state = self.step(state, a)?;
        }
        Ok(state)
    }
}
