//! Glue between snapshots, datasets, the model and agents; shared by the
//! CLI, the service and the integration tests.

use std::ops::ControlFlow;

use anyhow::{bail, Context, Result};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use webvln_core::agents::{Agent, GreedyAgent, LearnedAgent, LlmAgent, OracleAgent, RandomAgent};
use webvln_core::datagen::{Captioner, StoredCaptions, TextGenerator};
use webvln_core::eval::{exact_match, record_index, run_eval, EvalRun};
use webvln_core::graph::NavGraph;
use webvln_core::metrics::Taxonomy;
use webvln_core::model::{EpisodeInputs, ModelConfig, SiteFeatures, Vocab, WebVlnNet};
use webvln_core::sim::{EpisodeRecord, Split};
use webvln_core::train::{StepStats, Trainer, TrainConfig};

use crate::config::Config;
use crate::images::site_features;
use crate::llm::{HttpCaptioner, HttpGenerator, LlmSettings, MockGenerator, SidecarCaptions};
use crate::site::Site;

/// Vocabulary over the training records' questions, descriptions and
/// answers plus every button description of the site.
pub fn build_vocab(records: &[EpisodeRecord], graph: &NavGraph) -> Vocab {
    let texts = records
        .iter()
        .filter(|r| r.split.is_none_or(|s| s == Split::Train))
        .flat_map(|r| [r.question.as_str(), r.description.as_str(), r.answer.as_str()])
        .chain(graph.pages().flat_map(|p| p.buttons.iter().filter_map(|b| b.description.as_deref())));
    Vocab::build(texts)
}

/// Records validated against the graph; mismatches are an error.
pub fn check_records(records: &[EpisodeRecord], graph: &NavGraph) -> Result<()> {
    for r in records {
        r.validate(graph)?;
    }
    Ok(())
}

pub fn episode_inputs(records: &[EpisodeRecord], graph: &NavGraph, vocab: &Vocab) -> Result<Vec<EpisodeInputs>> {
    records.iter().map(|r| Ok(EpisodeInputs::from_record(r, graph, vocab)?)).collect()
}

/// Features of `site` for a network's vocabulary and grid.
pub fn features_for(site: &Site, net: &WebVlnNet<f32>) -> Result<SiteFeatures> {
    let (features, warnings) = site_features(site, net.vocab(), net.config().grid)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    Ok(features)
}

/// `n` records drawn without replacement (all of them if fewer), marked as
/// training records.
pub fn subset(records: &[EpisodeRecord], n: usize, seed: u64) -> Vec<EpisodeRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<EpisodeRecord> = records.choose_multiple(&mut rng, n.min(records.len())).cloned().collect();
    out.sort_by(|a, b| a.record_id.cmp(&b.record_id));
    for r in &mut out {
        r.split = Some(Split::Train);
    }
    out
}

/// Training-split score of a network: success rate and exact match.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitScore {
    pub iter: usize,
    pub sr: f64,
    pub exact_match: f64,
}

pub fn fit_score(net: &WebVlnNet<f32>, features: &SiteFeatures, records: &[EpisodeRecord], graph: &NavGraph, max_steps: usize) -> Result<(f64, f64)> {
    let mut agent = LearnedAgent::new(net, features);
    let run = run_eval(&mut agent, records, graph, &Taxonomy::default(), max_steps)?;
    Ok((run.report.nav.sr, exact_match(&run.trajectories, &record_index(records))))
}

/// Trains until `config.iterations` steps are done or `on_step` breaks.
pub fn train_loop(
    net: &mut WebVlnNet<f32>,
    config: TrainConfig,
    data: &[EpisodeInputs],
    features: &SiteFeatures,
    mut on_step: impl FnMut(&StepStats, &WebVlnNet<f32>) -> Result<ControlFlow<()>>,
) -> Result<Vec<StepStats>> {
    let mut trainer = Trainer::new(config, net)?;
    let mut log = Vec::new();
    while !trainer.finished() {
        let stats = trainer.step(net, data, features)?;
        log.push(stats);
        if on_step(&stats, net)?.is_break() {
            break;
        }
    }
    Ok(log)
}

/// Outcome of training to a target on the training records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverfitResult {
    pub steps: usize,
    pub checks: Vec<FitScore>,
    pub final_loss: f64,
    pub reached: bool,
}

/// Trains on `records` and checks the training-split SR / exact match every
/// `check_every` steps, stopping once both reach their targets.
#[allow(clippy::too_many_arguments)]
pub fn train_to_target(
    net: &mut WebVlnNet<f32>,
    config: TrainConfig,
    records: &[EpisodeRecord],
    site: &Site,
    features: &SiteFeatures,
    check_every: usize,
    targets: (f64, f64),
    mut progress: impl FnMut(&FitScore),
) -> Result<OverfitResult> {
    let data = episode_inputs(records, &site.graph, net.vocab())?;
    let mut checks = Vec::new();
    let mut reached = false;
    let log = train_loop(net, config, &data, features, |s, n| {
        if (s.iter + 1) % check_every != 0 {
            return Ok(ControlFlow::Continue(()));
        }
        let (sr, em) = fit_score(n, features, records, &site.graph, webvln_core::sim::DEFAULT_MAX_STEPS)?;
        let score = FitScore { iter: s.iter + 1, sr, exact_match: em };
        progress(&score);
        checks.push(score);
        reached = sr >= targets.0 && em >= targets.1;
        Ok(if reached { ControlFlow::Break(()) } else { ControlFlow::Continue(()) })
    })?;
    Ok(OverfitResult { steps: log.len(), checks, final_loss: log.last().map_or(f64::NAN, |s| s.loss), reached })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Random,
    Greedy,
    Oracle,
    Learned,
    Llm,
}

/// Inputs an agent may need besides the records.
pub struct AgentResources<'a> {
    pub net: Option<(&'a WebVlnNet<f32>, &'a SiteFeatures)>,
    pub llm: Option<&'a mut dyn TextGenerator>,
    pub seed: u64,
}

/// Runs one agent kind over `records`.
pub fn evaluate(
    kind: AgentKind,
    records: &[EpisodeRecord],
    graph: &NavGraph,
    taxonomy: &Taxonomy,
    max_steps: usize,
    res: AgentResources<'_>,
) -> Result<EvalRun> {
    let mut agent: Box<dyn Agent + '_> = match kind {
        AgentKind::Random => Box::new(RandomAgent::new(res.seed)),
        AgentKind::Greedy => Box::new(GreedyAgent::new(graph)),
        AgentKind::Oracle => Box::new(OracleAgent::new(graph)),
        AgentKind::Learned => {
            let (net, features) = res.net.context("the learned agent needs a checkpoint")?;
            Box::new(LearnedAgent::new(net, features))
        }
        AgentKind::Llm => Box::new(LlmAgent::new(res.llm.context("the llm agent needs a configured client")?)),
    };
    Ok(run_eval(agent.as_mut(), records, graph, taxonomy, max_steps)?)
}

/// Mock generator when `llm.mock_dir` is set, else the HTTP client.
pub fn generator(config: &Config) -> Result<Box<dyn TextGenerator>> {
    if let Some(dir) = &config.llm.mock_dir {
        return Ok(Box::new(MockGenerator::from_dir(dir)?));
    }
    let Some(endpoint) = &config.llm.endpoint else {
        bail!("no language model configured: set llm.mock_dir or llm.endpoint / LLM_ENDPOINT");
    };
    Ok(Box::new(HttpGenerator::new(LlmSettings {
        endpoint: endpoint.clone(),
        model: config.llm.model.clone(),
        api_key: config.llm.api_key.clone(),
        timeout_secs: config.llm.timeout_secs,
    })))
}

/// Sidecar file, then remote endpoint, else captions stored with the pages.
pub fn captioner(config: &Config, site: &Site) -> Result<Box<dyn Captioner>> {
    if let Some(p) = &config.captioner.sidecar {
        let p = if p.is_relative() { site.root.join(p) } else { p.clone() };
        return Ok(Box::new(SidecarCaptions::load(&p)?));
    }
    if let Some(endpoint) = &config.captioner.endpoint {
        return Ok(Box::new(HttpCaptioner(HttpGenerator::new(LlmSettings {
            endpoint: endpoint.clone(),
            model: config.captioner.model.clone().unwrap_or_else(|| config.llm.model.clone()),
            api_key: config.llm.api_key.clone(),
            timeout_secs: config.llm.timeout_secs,
        }))));
    }
    Ok(Box::new(StoredCaptions))
}

/// Fresh network sized for `records` on `graph`.
pub fn new_network(records: &[EpisodeRecord], graph: &NavGraph, model: impl Fn(usize) -> ModelConfig, seed: u64) -> Result<WebVlnNet<f32>> {
    let vocab = build_vocab(records, graph);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(WebVlnNet::new(model(vocab.len()), vocab, &mut rng)?)
}
