use alloc::collections::BTreeMap;
use alloc::string::String;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::graph::NavGraph;
use crate::sim::{EpisodeRecord, Trajectory};

use super::{corpus_bleu, episode_nav, nav_metrics, rouge_l, wups_score, NavScores, Taxonomy};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("trajectory refers to unknown record `{0}`")]
    UnknownRecord(String),
    #[error("graph error: {0}")]
    Graph(String),
}

/// Full score sheet of one run. All fields except `tl` and `n` are fractions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(flatten)]
    pub nav: NavScores,
    pub wups09: f64,
    pub wups00: f64,
    pub bleu1: f64,
    pub bleu4: f64,
    #[serde(rename = "rougeL")]
    pub rouge_l: f64,
    pub n: usize,
}

/// Per-episode numbers returned to interactive sessions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeScores {
    pub success: f64,
    pub oracle_success: f64,
    pub spl: f64,
    pub tl: f64,
    pub wups09: f64,
    pub wups00: f64,
}

pub fn episode_scores(
    traj: &Trajectory,
    record: &EpisodeRecord,
    graph: &NavGraph,
    tax: &Taxonomy,
) -> Result<EpisodeScores, MetricsError> {
    let nav = episode_nav(traj, record, graph)?;
    let answer = traj.answer.as_deref().unwrap_or("");
    Ok(EpisodeScores {
        success: f64::from(u8::from(nav.success)),
        oracle_success: f64::from(u8::from(nav.oracle_success)),
        spl: nav.spl,
        tl: nav.transitions as f64,
        wups09: wups_score(answer, &record.answer, tax, 0.9),
        wups00: wups_score(answer, &record.answer, tax, 0.0),
    })
}

/// Scores a set of trajectories; a pure function of its inputs.
pub fn metrics_report(
    trajectories: &[Trajectory],
    records: &BTreeMap<String, EpisodeRecord>,
    graph: &NavGraph,
    tax: &Taxonomy,
) -> Result<MetricsReport, MetricsError> {
    let nav = nav_metrics(trajectories, records, graph)?;
    if trajectories.is_empty() {
        return Ok(MetricsReport::default());
    }
    let mut pairs = alloc::vec::Vec::with_capacity(trajectories.len());
    let (mut w09, mut w00, mut rl) = (0.0, 0.0, 0.0);
    for t in trajectories {
        let gold = &records[&t.record_id].answer;
        let ans = t.answer.as_deref().unwrap_or("");
        w09 += wups_score(ans, gold, tax, 0.9);
        w00 += wups_score(ans, gold, tax, 0.0);
        rl += rouge_l(ans, gold);
        pairs.push((ans, gold.as_str()));
    }
    let n = trajectories.len() as f64;
    Ok(MetricsReport {
        nav,
        wups09: w09 / n,
        wups00: w00 / n,
        bleu1: corpus_bleu(&pairs, 1),
        bleu4: corpus_bleu(&pairs, 4),
        rouge_l: rl / n,
        n: trajectories.len(),
    })
}

impl MetricsReport {
    pub const COLUMNS: [&'static str; 9] =
        ["SR", "OSR", "SPL", "TL", "WUPS0.9", "WUPS0.0", "BLEU-1", "BLEU-4", "ROUGE-L"];

    /// Percentages except TL, in the column order of [`Self::COLUMNS`].
    pub fn row(&self) -> [f64; 9] {
        [
            100.0 * self.nav.sr,
            100.0 * self.nav.osr,
            100.0 * self.nav.spl,
            self.nav.tl,
            100.0 * self.wups09,
            100.0 * self.wups00,
            100.0 * self.bleu1,
            100.0 * self.bleu4,
            100.0 * self.rouge_l,
        ]
    }
}

/// Aligned plain-text table with a header line and one value line.
impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in Self::COLUMNS.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{c:>8}")?;
        }
        writeln!(f, " {:>6}", "n")?;
        for (i, v) in self.row().iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{v:>8.2}")?;
        }
        writeln!(f, " {:>6}", self.n)
    }
}
