//! Running agents over records and scoring the resulting trajectories.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::agents::{Agent, AgentError};
use crate::graph::NavGraph;
use crate::metrics::{metrics_report, MetricsError, MetricsReport, Taxonomy};
use crate::sim::{EpisodeRecord, EpisodeState, SimError, Simulator, Split, Trajectory};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EpisodeError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

/// Outcome of one episode. On an agent or simulator error mid-episode the
/// trajectory is closed at the current page with an empty answer.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutcome {
    pub trajectory: Trajectory,
    pub fallbacks: usize,
    pub error: Option<EpisodeError>,
}

/// Plays one episode. Fails only if the record does not fit the graph.
pub fn run_episode(sim: &Simulator<'_>, agent: &mut dyn Agent, record: &EpisodeRecord) -> Result<EpisodeOutcome, EpisodeError> {
    let mut state = sim.reset(record)?;
    let mut fallbacks = 0;
    let mut answer = String::new();
    let result = (|| -> Result<(), EpisodeError> {
        agent.reset(record)?;
        while !state.done {
            let obs = sim.observe(&state)?;
            let d = agent.decide(&obs, &state.history)?;
            fallbacks += usize::from(d.fallback);
            if let Some(a) = d.answer {
                answer = a;
            }
            state = sim.step(state.clone(), d.action_index)?;
        }
        if state.forced_stop {
            answer = agent.forced_answer()?;
        }
        Ok(())
    })();
    let error = result.err();
    if error.is_some() {
        close(&mut state);
        answer.clear();
    }
    let trajectory = sim.finish_with_answer(&state, answer)?;
    Ok(EpisodeOutcome { trajectory, fallbacks, error })
}

fn close(state: &mut EpisodeState) {
    if !state.done {
        state.done = true;
        state.forced_stop = true;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeFailure {
    pub record_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRun {
    pub trajectories: Vec<Trajectory>,
    pub report: MetricsReport,
    pub failures: Vec<EpisodeFailure>,
    pub fallbacks: usize,
}

/// Runs every record to completion and scores the trajectories. Per-record
/// failures are collected rather than aborting the run; records that do not
/// fit the graph produce no trajectory.
pub fn run_eval(
    agent: &mut dyn Agent,
    records: &[EpisodeRecord],
    graph: &NavGraph,
    taxonomy: &Taxonomy,
    max_steps: usize,
) -> Result<EvalRun, MetricsError> {
    let sim = Simulator::with_max_steps(graph, max_steps);
    let mut trajectories = Vec::with_capacity(records.len());
    let mut failures = Vec::new();
    let mut fallbacks = 0;
    for r in records {
        match run_episode(&sim, agent, r) {
            Ok(o) => {
                fallbacks += o.fallbacks;
                if let Some(e) = o.error {
                    failures.push(EpisodeFailure { record_id: r.record_id.clone(), error: e.to_string() });
                }
                trajectories.push(o.trajectory);
            }
            Err(e) => failures.push(EpisodeFailure { record_id: r.record_id.clone(), error: e.to_string() }),
        }
    }
    let index = record_index(records);
    let report = metrics_report(&trajectories, &index, graph, taxonomy)?;
    Ok(EvalRun { trajectories, report, failures, fallbacks })
}

pub fn record_index(records: &[EpisodeRecord]) -> BTreeMap<String, EpisodeRecord> {
    records.iter().map(|r| (r.record_id.clone(), r.clone())).collect()
}

/// Records of one split, in input order.
pub fn split_records(records: &[EpisodeRecord], split: Split) -> Vec<EpisodeRecord> {
    records.iter().filter(|r| r.split == Some(split)).cloned().collect()
}

/// Fraction of trajectories whose answer equals the gold answer after
/// normalisation.
pub fn exact_match(trajectories: &[Trajectory], records: &BTreeMap<String, EpisodeRecord>) -> f64 {
    if trajectories.is_empty() {
        return 0.0;
    }
    let hits = trajectories
        .iter()
        .filter(|t| {
            records.get(&t.record_id).is_some_and(|r| {
                crate::text::normalize(t.answer.as_deref().unwrap_or("")) == crate::text::normalize(&r.answer)
            })
        })
        .count();
    hits as f64 / trajectories.len() as f64
}
