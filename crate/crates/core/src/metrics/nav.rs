use alloc::collections::BTreeMap;
use alloc::string::String;

use serde::{Deserialize, Serialize};

use crate::graph::NavGraph;
use crate::sim::{EpisodeRecord, Trajectory};

use super::MetricsError;

/// Aggregate navigation scores; `tl` is the mean number of transitions.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NavScores {
    pub sr: f64,
    pub osr: f64,
    pub spl: f64,
    pub tl: f64,
}

/// Navigation outcome of one episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeNav {
    pub success: bool,
    pub oracle_success: bool,
    pub spl: f64,
    pub transitions: usize,
    pub shortest: usize,
}

pub fn episode_nav(traj: &Trajectory, record: &EpisodeRecord, graph: &NavGraph) -> Result<EpisodeNav, MetricsError> {
    let target = record.target();
    let shortest = graph
        .distances_from(graph.homepage().as_str())
        .map_err(|e| MetricsError::Graph(alloc::format!("{e}")))?
        .get(target)
        .copied()
        .ok_or_else(|| MetricsError::Graph(alloc::format!("target `{target}` unreachable")))?;
    let success = traj.stopped_page_id == *target;
    let oracle_success = traj.visited.iter().any(|p| p == target);
    let transitions = traj.transitions();
    let spl = if !success {
        0.0
    } else if shortest == 0 && transitions == 0 {
        1.0
    } else {
        shortest as f64 / shortest.max(transitions) as f64
    };
    Ok(EpisodeNav {
        success,
        oracle_success,
        spl,
        transitions,
        shortest,
    })
}

/// SR, OSR, SPL and TL averaged over trajectories. Empty input scores zero.
pub fn nav_metrics(
    trajectories: &[Trajectory],
    records: &BTreeMap<String, EpisodeRecord>,
    graph: &NavGraph,
) -> Result<NavScores, MetricsError> {
    if trajectories.is_empty() {
        return Ok(NavScores::default());
    }
    let mut acc = NavScores::default();
    for traj in trajectories {
        let record = records
            .get(&traj.record_id)
            .ok_or_else(|| MetricsError::UnknownRecord(traj.record_id.clone()))?;
        let e = episode_nav(traj, record, graph)?;
        acc.sr += f64::from(u8::from(e.success));
        acc.osr += f64::from(u8::from(e.oracle_success));
        acc.spl += e.spl;
        acc.tl += e.transitions as f64;
    }
    let n = trajectories.len() as f64;
    Ok(NavScores {
        sr: acc.sr / n,
        osr: acc.osr / n,
        spl: acc.spl / n,
        tl: acc.tl / n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Button, PageId, WebPage};
    use alloc::format;
    use alloc::vec;
    use alloc::vec::Vec;

    fn chain(n: usize) -> NavGraph {
        // p0 -> p1 -> ... -> p{n-1}, every page also links back to p0 and to itself
        let pages = (0..n)
            .map(|i| {
                let mut p = WebPage::new(format!("p{i}"));
                if i + 1 < n {
                    p.buttons.push(Button::new("f", Some("next".into()), None, format!("p{}", i + 1)).unwrap());
                }
                p.buttons.push(Button::new("h", Some("home".into()), None, "p0").unwrap());
                p.buttons.push(Button::new("s", Some("self".into()), None, format!("p{i}")).unwrap());
                p
            })
            .collect();
        NavGraph::build(pages, "p0").unwrap()
    }

    fn rec(target: usize) -> EpisodeRecord {
        EpisodeRecord {
            record_id: "r".into(),
            site_id: "s".into(),
            question: "q".into(),
            description: String::new(),
            answer: "a".into(),
            path: (0..=target).map(|i| PageId::new(format!("p{i}"))).collect(),
            split: None,
        }
    }

    fn traj(visited: &[usize]) -> Trajectory {
        let visited: Vec<PageId> = visited.iter().map(|i| PageId::new(format!("p{i}"))).collect();
        Trajectory {
            record_id: "r".into(),
            stopped_page_id: visited.last().unwrap().clone(),
            visited,
            action_indices: vec![],
            answer: None,
            forced_stop: false,
        }
    }

    fn score(t: Trajectory, target: usize) -> NavScores {
        let g = chain(6);
        let mut m = BTreeMap::new();
        m.insert("r".into(), rec(target));
        nav_metrics(&[t], &m, &g).unwrap()
    }

    #[test]
    fn exact_shortest_path() {
        let s = score(traj(&[0, 1, 2, 3]), 3);
        assert_eq!(s, NavScores { sr: 1.0, osr: 1.0, spl: 1.0, tl: 3.0 });
    }

    #[test]
    fn stopping_short_after_visiting_target() {
        let s = score(traj(&[0, 1, 2, 3, 0]), 3);
        assert_eq!((s.sr, s.osr, s.spl), (0.0, 1.0, 0.0));
    }

    #[test]
    fn detour_halves_spl() {
        // d* = 2, d_traj = 4
        let s = score(traj(&[0, 1, 1, 1, 2]), 2);
        assert_eq!(s.sr, 1.0);
        assert!((s.spl - 0.5).abs() < 1e-12);
        assert_eq!(s.tl, 4.0);
    }

    #[test]
    fn unknown_record_is_an_error() {
        let g = chain(3);
        let mut t = traj(&[0]);
        t.record_id = "zzz".into();
        assert_eq!(nav_metrics(&[t], &BTreeMap::new(), &g), Err(MetricsError::UnknownRecord("zzz".into())));
    }
}
