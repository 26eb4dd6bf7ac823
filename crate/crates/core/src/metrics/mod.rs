//! Navigation and answer scoring.

mod nav;
mod nlg;
mod report;
mod taxonomy;
mod wups;

pub use nav::{episode_nav, nav_metrics, EpisodeNav, NavScores};
pub use nlg::{bleu, corpus_bleu, lcs_len, rouge_l};
pub use report::{episode_scores, metrics_report, EpisodeScores, MetricsError, MetricsReport};
pub use taxonomy::{SynsetSpec, Taxonomy, TaxonomyError, VIRTUAL_ROOT};
pub use wups::{word_similarity, wups_score, WUPS_SCALE};
