use std::ops::ControlFlow;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use webvln::config::Config;
use webvln::formats::{load_checkpoint, load_taxonomy, read_jsonl, save_checkpoint, write_json, write_jsonl, write_vocab};
use webvln::pipeline::{self, AgentKind, AgentResources};
use webvln::service::{self, AppState};
use webvln::site::{export_graph, Site};
use webvln::{fixture, images};
use webvln_core::datagen::{generate_records, quality_sample, sample_paths, GenerationOptions, SampledPath};
use webvln_core::eval::split_records;
use webvln_core::model::{EpisodeInputs, ModelConfig, WebVlnNet};
use webvln_core::sim::{EpisodeRecord, Split};
use webvln_core::train::{grad_check, GradCheckOptions};

#[derive(Parser)]
#[command(name = "webvln", version, about = "Question-driven website navigation benchmark")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, env = "WEBVLN_CONFIG")]
    config: Option<PathBuf>,
    /// Snapshot directory (overrides `site`).
    #[arg(long, global = true)]
    site: Option<PathBuf>,
    /// Dataset JSONL (overrides `dataset`).
    #[arg(long, global = true)]
    dataset: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic 30-page shop snapshot.
    MakeFixture {
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse a snapshot and export its navigation graph.
    Ingest {
        #[arg(long, default_value = "graph.json")]
        out: PathBuf,
    },
    /// Sample ground-truth shortest paths to distinct target pages.
    Pathgen {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "paths.jsonl")]
        out: PathBuf,
    },
    /// Generate QA records for sampled paths and assign splits.
    Qagen {
        #[arg(long, default_value = "paths.jsonl")]
        paths: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "dataset.jsonl")]
        out: PathBuf,
        /// Also write every prompt sent, keyed by target page.
        #[arg(long)]
        prompts_out: Option<PathBuf>,
    },
    /// Train the navigation-and-answering model on the training split.
    Train {
        #[arg(long, default_value = "model.ckpt")]
        out: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run an agent over one split and write trajectories and a report.
    Eval {
        #[arg(long, value_enum)]
        agent: AgentKind,
        #[arg(long, default_value = "val")]
        split: String,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        run_id: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Serve interactive sessions over HTTP.
    Serve {
        #[arg(long)]
        addr: Option<String>,
        /// Append finished trajectories here.
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Compare analytic and finite-difference gradients on a small model.
    Gradcheck {
        #[arg(long, default_value_t = 600)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Draw records per site for manual quality review.
    QualitySample {
        #[arg(long, default_value_t = 100)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "quality_sample.jsonl")]
        out: PathBuf,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let mut config = Config::load(cli.config.as_deref())?;
    if cli.site.is_some() {
        config.site = cli.site.clone();
    }
    if cli.dataset.is_some() {
        config.dataset = cli.dataset.clone();
    }
    match cli.command {
        Command::MakeFixture { out } => {
            fixture::write_fixture_site(&out)?;
            println!("wrote {} pages to {}", fixture::PAGE_COUNT, out.display());
        }
        Command::Ingest { out } => {
            let site = load_site(&config)?;
            write_json(&out, &export_graph(&site.graph))?;
            println!(
                "{} pages, {} edges, {} dropped buttons, {} warnings -> {}",
                site.graph.len(),
                site.graph.edge_count(),
                site.graph.dropped_buttons(),
                site.warnings.len(),
                out.display()
            );
        }
        Command::Pathgen { n, seed, out } => {
            let site = load_site(&config)?;
            let paths = sample_paths(&site.graph, n, seed)?;
            if paths.len() < n {
                eprintln!("warning: only {} eligible targets for {n} requested", paths.len());
            }
            write_jsonl(&out, &paths)?;
            println!("{} paths -> {}", paths.len(), out.display());
        }
        Command::Qagen { paths, seed, out, prompts_out } => {
            let site = load_site(&config)?;
            let paths: Vec<SampledPath> = read_jsonl(&paths)?;
            let mut llm = pipeline::generator(&config)?;
            let mut cap = pipeline::captioner(&config, &site)?;
            let mut opts = GenerationOptions::new(site.config.site_id.clone());
            opts.stoplist = site.stoplist.clone();
            opts.seed = seed;
            let report = generate_records(&site.graph, &paths, llm.as_mut(), cap.as_mut(), &opts)?;
            for s in &report.skipped {
                eprintln!("skipped {}: {}", s.target, s.reason);
            }
            write_jsonl(&out, &report.records)?;
            if let Some(p) = prompts_out {
                write_json(&p, &report.prompts)?;
            }
            let count = |s| report.records.iter().filter(|r| r.split == Some(s)).count();
            println!(
                "{} records (train {}, val {}, test {}), {} skipped -> {}",
                report.records.len(),
                count(Split::Train),
                count(Split::Val),
                count(Split::Test),
                report.skipped.len(),
                out.display()
            );
        }
        Command::Train { out, iterations, seed } => {
            let site = load_site(&config)?;
            let records = load_records(&config, &site)?;
            let train = split_records(&records, Split::Train);
            if train.is_empty() {
                bail!("the dataset has no training records");
            }
            let mut tc = config.train.clone();
            tc.iterations = iterations.unwrap_or(tc.iterations);
            tc.seed = seed.unwrap_or(tc.seed);
            let model = config.model;
            let mut net = pipeline::new_network(&train, &site.graph, |v| model.config(v), tc.seed)?;
            let features = pipeline::features_for(&site, &net)?;
            let data = pipeline::episode_inputs(&train, &site.graph, net.vocab())?;
            write_vocab(&out.with_extension("vocab"), net.vocab())?;
            let every = tc.checkpoint_every;
            let total = tc.iterations;
            pipeline::train_loop(&mut net, tc, &data, &features, |s, n| {
                if (s.iter + 1) % 50 == 0 || s.iter == 0 {
                    println!("iter {:>6} loss {:.4} nav {:.4} ans {:.4}", s.iter + 1, s.loss, s.l_nav, s.l_ans);
                }
                if (s.iter + 1) % every == 0 || s.iter + 1 == total {
                    save_checkpoint(&out, n)?;
                }
                Ok(ControlFlow::Continue(()))
            })?;
            save_checkpoint(&out, &net)?;
            let (sr, em) = pipeline::fit_score(&net, &features, &train, &site.graph, config.eval.max_steps)?;
            println!("training split: SR {:.3}, exact match {:.3} -> {}", sr, em, out.display());
        }
        Command::Eval { agent, split, checkpoint, run_id, seed } => {
            let site = load_site(&config)?;
            let records = load_records(&config, &site)?;
            let split = Split::parse(&split).with_context(|| format!("unknown split `{split}`"))?;
            let records = split_records(&records, split);
            let taxonomy = load_taxonomy(config.taxonomy.as_deref())?;
            let net = match (agent, checkpoint.or(config.serve.checkpoint.clone())) {
                (AgentKind::Learned, Some(p)) => Some(load_checkpoint(&p)?),
                (AgentKind::Learned, None) => bail!("--checkpoint is required for the learned agent"),
                _ => None,
            };
            let features = net.as_ref().map(|n| pipeline::features_for(&site, n)).transpose()?;
            let mut llm = match agent {
                AgentKind::Llm => Some(pipeline::generator(&config)?),
                _ => None,
            };
            let res = AgentResources {
                net: net.as_ref().zip(features.as_ref()),
                llm: llm.as_deref_mut().map(|l| l as &mut dyn webvln_core::datagen::TextGenerator),
                seed: seed.unwrap_or(config.eval.seed),
            };
            let run = pipeline::evaluate(agent, &records, &site.graph, &taxonomy, config.eval.max_steps, res)?;
            let run_id = run_id.unwrap_or_else(|| format!("{}-{}", agent_name(agent), split.as_str()));
            let dir = config.out_dir().join("runs").join(&run_id);
            write_jsonl(&dir.join("trajectories.jsonl"), &run.trajectories)?;
            write_json(&dir.join("report.json"), &run.report)?;
            write_json(&dir.join("failures.json"), &run.failures)?;
            println!("{}", run.report);
            println!("{} episodes, {} failures, {} fallbacks -> {}", run.trajectories.len(), run.failures.len(), run.fallbacks, dir.display());
        }
        Command::Serve { addr, log } => {
            let site = load_site(&config)?;
            let records = load_records(&config, &site)?;
            let mut app = AppState::new(site.graph.clone(), records, load_taxonomy(config.taxonomy.as_deref())?, site.root.clone());
            app.max_steps = config.eval.max_steps;
            app.token = config.serve.token.clone();
            app.idle_timeout = Duration::from_secs(config.serve.idle_timeout_secs);
            app.log_path = Some(log.unwrap_or_else(|| config.out_dir().join("sessions.jsonl")));
            app.runs_dir = Some(config.out_dir().join("runs"));
            app.ui_dir = config.serve.ui_dir.clone();
            if let Some(dir) = app.log_path.as_ref().and_then(|p| p.parent()) {
                std::fs::create_dir_all(dir)?;
            }
            let addr = addr.unwrap_or_else(|| config.serve.addr.clone());
            tokio::runtime::Runtime::new()?.block_on(service::serve(Arc::new(app), &addr))?;
        }
        Command::Gradcheck { samples, seed } => {
            let (net, inputs, features) = gradcheck_setup(&config, seed)?;
            let opts = GradCheckOptions { samples: Some(samples), seed, ..Default::default() };
            let r = grad_check(&net, &inputs, &features, &opts)?;
            println!(
                "max relative error {:.3e} over {} coordinates (worst {}: analytic {:.6e}, numeric {:.6e})",
                r.max_relative_error, r.coordinates, r.worst_parameter, r.worst_analytic, r.worst_numeric
            );
            if r.max_relative_error > 1e-4 {
                bail!("gradient check failed");
            }
        }
        Command::QualitySample { k, seed, out } => {
            let path = config.dataset.clone().context("no dataset configured (use --dataset)")?;
            let records: Vec<EpisodeRecord> = read_jsonl(&path)?;
            let sample = quality_sample(&records, k, seed);
            write_jsonl(&out, &sample)?;
            println!("{} records for review -> {}", sample.len(), out.display());
        }
    }
    Ok(())
}

fn agent_name(kind: AgentKind) -> &'static str {
    match kind {
        AgentKind::Random => "random",
        AgentKind::Greedy => "greedy",
        AgentKind::Oracle => "oracle",
        AgentKind::Learned => "learned",
        AgentKind::Llm => "llm",
    }
}

fn load_site(config: &Config) -> Result<Site> {
    let dir = config.site.as_deref().context("no site configured (use --site)")?;
    let site = Site::load(dir).with_context(|| format!("loading site {}", dir.display()))?;
    for w in &site.warnings {
        eprintln!("warning: {}{}", if w.page_id.is_empty() { String::new() } else { format!("{}: ", w.page_id) }, w.message);
    }
    Ok(site)
}

fn load_records(config: &Config, site: &Site) -> Result<Vec<EpisodeRecord>> {
    let path = config.dataset.as_deref().context("no dataset configured (use --dataset)")?;
    let records: Vec<EpisodeRecord> = read_jsonl(path)?;
    pipeline::check_records(&records, &site.graph)?;
    Ok(records)
}

/// A dim-16 network in f64 on the first training record of the configured
/// site, or of the built-in fixture when no site is configured.
fn gradcheck_setup(config: &Config, seed: u64) -> Result<(WebVlnNet<f64>, EpisodeInputs, webvln_core::model::SiteFeatures)> {
    let tmp;
    let (site, records) = match (&config.site, &config.dataset) {
        (Some(_), Some(_)) => {
            let site = load_site(config)?;
            let records = load_records(config, &site)?;
            (site, records)
        }
        _ => {
            tmp = std::env::temp_dir().join(format!("webvln-gradcheck-{}", std::process::id()));
            fixture::write_fixture_site(&tmp)?;
            let site = Site::load(&tmp)?;
            let records = fixture::dataset(&site, 0)?.records;
            (site, records)
        }
    };
    let record = records.first().context("no records")?.clone();
    let vocab = pipeline::build_vocab(std::slice::from_ref(&record), &site.graph);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = ModelConfig { grid: 2, ..ModelConfig::tiny(vocab.len()) };
    let net: WebVlnNet<f64> = WebVlnNet::new(cfg, vocab, &mut rng)?;
    let (features, _) = images::site_features(&site, net.vocab(), cfg.grid)?;
    let inputs = EpisodeInputs::from_record(&record, &site.graph, net.vocab())?;
    Ok((net, inputs, features))
}
