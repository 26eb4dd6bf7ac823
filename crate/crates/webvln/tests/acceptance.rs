//! Acceptance suite, run without the libtest harness so that every
//! criterion prints exactly one `PASS`/`FAIL` line. Criteria run in
//! parallel; the process fails if any of them fails.
//!
//! The oracles here are written independently of the library code they
//! check: exhaustive search instead of BFS, straight-line metric loops,
//! ancestor enumeration for Wu-Palmer, exact probability propagation for
//! the random agent.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use webvln::core::agents::{OracleAgent, RandomAgent, RANDOM_STOP_RANGE};
use webvln::core::datagen::{build_prompt, default_rules, generate_records, sample_paths, GenerationOptions, StoredCaptions, DEFAULT_RULES, PROMPT_CAPTION, PROMPT_RULES, PROMPT_WORDS};
use webvln::core::eval::{run_episode, run_eval, split_records};
use webvln::core::graph::{Button, NavGraph, PageId, WebPage};
use webvln::core::metrics::{bleu, nav_metrics, rouge_l, wups_score, SynsetSpec, Taxonomy};
use webvln::core::model::{nav_loss, EpisodeInputs, ModelConfig, PageFeatures, Sampling, SiteFeatures, StepInputs, Vocab, WebVlnNet};
use webvln::core::autograd::Tape;
use webvln::core::sim::{EpisodeRecord, Simulator, Split, Trajectory, DEFAULT_MAX_STEPS};
use webvln::core::train::{grad_check, GradCheckOptions, TrainConfig};
use webvln::formats::default_taxonomy;
use webvln::llm::MockGenerator;
use webvln::site::Site;
use webvln::{fixture, images, pipeline};

struct Verdict {
    name: &'static str,
    pass: bool,
    elapsed: Duration,
    detail: String,
}

fn verdict(name: &'static str, pass: bool, elapsed: Duration, detail: &str) -> Verdict {
    Verdict { name, pass, elapsed, detail: detail.to_string() }
}

fn fixture_site() -> (tempfile::TempDir, Site) {
    let dir = tempfile::tempdir().unwrap();
    fixture::write_fixture_site(dir.path()).unwrap();
    let site = Site::load(dir.path()).unwrap();
    (dir, site)
}

/// Pages `p0..p{n-1}` with up to `max_buttons` links each to random pages
/// (self links and duplicates included); `p0` is the homepage.
fn random_graph(rng: &mut ChaCha8Rng, n: usize, max_buttons: usize) -> NavGraph {
    let pages = (0..n)
        .map(|i| {
            let mut p = WebPage::new(format!("p{i}"));
            for k in 0..rng.gen_range(0..=max_buttons) {
                let to = rng.gen_range(0..n);
                p.buttons.push(Button::new(format!("p{i}#{k}"), Some(format!("to {to}")), None, format!("p{to}")).unwrap());
            }
            p
        })
        .collect();
    NavGraph::build(pages, "p0").unwrap()
}

fn adjacency(g: &NavGraph) -> BTreeMap<String, Vec<String>> {
    g.pages()
        .map(|p| (p.page_id.as_str().to_string(), p.buttons.iter().map(|b| b.target.as_str().to_string()).collect()))
        .collect()
}

/// Minimum number of transitions over all simple paths, by exhaustive DFS.
fn dfs_min(adj: &BTreeMap<String, Vec<String>>, from: &str, to: &str) -> Option<usize> {
    fn go<'a>(adj: &'a BTreeMap<String, Vec<String>>, cur: &'a str, to: &str, seen: &mut BTreeSet<&'a str>, depth: usize, best: &mut Option<usize>) {
        if cur == to {
            *best = Some(best.map_or(depth, |b| b.min(depth)));
            return;
        }
        for next in &adj[cur] {
            if seen.insert(next.as_str()) {
                go(adj, next, to, seen, depth + 1, best);
                seen.remove(next.as_str());
            }
        }
    }
    let mut best = None;
    let mut seen = BTreeSet::from([from]);
    go(adj, from, to, &mut seen, 0, &mut best);
    best
}

/// Plain breadth-first distances, used where exhaustive search is too slow.
fn bfs(adj: &BTreeMap<String, Vec<String>>, from: &str) -> BTreeMap<String, usize> {
    let mut dist = BTreeMap::from([(from.to_string(), 0)]);
    let mut queue = VecDeque::from([from.to_string()]);
    while let Some(cur) = queue.pop_front() {
        let d = dist[&cur];
        for next in &adj[&cur] {
            if !dist.contains_key(next) {
                dist.insert(next.clone(), d + 1);
                queue.push_back(next.clone());
            }
        }
    }
    dist
}

fn is_walk(adj: &BTreeMap<String, Vec<String>>, path: &[PageId]) -> bool {
    path.windows(2).all(|w| adj[w[0].as_str()].iter().any(|t| t == w[1].as_str()))
}

fn graph_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut pairs, mut mismatches) = (0usize, 0usize);
    for _ in 0..150 {
        let n = rng.gen_range(1..=12);
        let g = random_graph(&mut rng, n, 4);
        let adj = adjacency(&g);
        for a in adj.keys() {
            for b in adj.keys() {
                let got = g.shortest_path(a, b).unwrap();
                let want = dfs_min(&adj, a, b);
                let ok = match (&got, want) {
                    (None, None) => true,
                    (Some(p), Some(d)) => {
                        p.len() == d + 1 && p[0].as_str() == a && p[d].as_str() == b && is_walk(&adj, p)
                    }
                    _ => false,
                };
                pairs += 1;
                mismatches += usize::from(!ok);
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        "graph oracle",
        mismatches == 0 && elapsed < Duration::from_secs(10),
        elapsed,
        &format!("150 graphs, {pairs} ordered pairs, {mismatches} mismatches"),
    )
}

/// A random graph with about `n` pages, most of them two or more clicks
/// from the homepage: every page hangs off an earlier one, plus extra links.
fn layered_graph(rng: &mut ChaCha8Rng, n: usize) -> NavGraph {
    let mut pages: Vec<WebPage> = (0..n).map(|i| WebPage::new(format!("p{i}"))).collect();
    let link = |pages: &mut Vec<WebPage>, from: usize, to: usize| {
        let k = pages[from].buttons.len();
        pages[from].buttons.push(Button::new(format!("p{from}#{k}"), Some(format!("to {to}")), None, format!("p{to}")).unwrap());
    };
    for i in 1..n {
        let parent = if i <= 3 { 0 } else { rng.gen_range(1..i) };
        link(&mut pages, parent, i);
    }
    for _ in 0..n / 2 {
        let (a, b) = (rng.gen_range(1..n), rng.gen_range(0..n));
        link(&mut pages, a, b);
    }
    for (i, p) in pages.iter_mut().enumerate() {
        p.captions = vec![format!("product {i}")];
    }
    NavGraph::build(pages, "p0").unwrap()
}

/// Checks the sampler / split contract on one record set; returns the
/// split sizes and any violations.
fn check_dataset(records: &[EpisodeRecord], graph: &NavGraph) -> ([usize; 3], Vec<String>) {
    let adj = adjacency(graph);
    let dist = bfs(&adj, graph.homepage().as_str());
    let mut problems = Vec::new();
    let mut sizes = [0usize; 3];
    let mut owner: BTreeMap<&[PageId], Split> = BTreeMap::new();
    for r in records {
        let t = r.path.len().saturating_sub(1);
        if t < 2 {
            problems.push(format!("{}: {t} transitions", r.record_id));
        }
        if r.path.first() != Some(graph.homepage()) || !is_walk(&adj, &r.path) || dist.get(r.target().as_str()) != Some(&t) {
            problems.push(format!("{}: path is not a shortest path", r.record_id));
        }
        let Some(split) = r.split else {
            problems.push(format!("{}: no split", r.record_id));
            continue;
        };
        sizes[match split {
            Split::Train => 0,
            Split::Val => 1,
            Split::Test => 2,
        }] += 1;
        if *owner.entry(&r.path).or_insert(split) != split {
            problems.push(format!("{}: path shared across splits", r.record_id));
        }
    }
    (sizes, problems)
}

fn path_sampler_contract() -> Verdict {
    let start = Instant::now();
    let mut problems = Vec::new();
    let mut worst_dev = 0.0f64;
    let seeds = 20u64;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = layered_graph(&mut rng, 90);
        let paths = sample_paths(&g, 60, seed).unwrap();
        // 100 QA pairs spread one to three per target
        let mut counts = vec![1usize; paths.len()];
        let mut extra = 100 - paths.len();
        while extra > 0 {
            let i = rng.gen_range(0..counts.len());
            if counts[i] < 3 {
                counts[i] += 1;
                extra -= 1;
            }
        }
        let responses = paths.iter().zip(&counts).map(|(sp, &c)| {
            (1..=c).map(|k| format!("Q{k}: What is item {k} on {}?\nA{k}: answer {k}\n", sp.target)).collect::<String>()
        });
        let mut llm = MockGenerator::queued(responses.collect::<Vec<_>>());
        let opts = GenerationOptions { seed, ..GenerationOptions::new("synthetic") };
        let report = generate_records(&g, &paths, &mut llm, &mut StoredCaptions, &opts).unwrap();
        if report.records.len() != 100 {
            problems.push(format!("seed {seed}: {} records", report.records.len()));
        }
        let (sizes, p) = check_dataset(&report.records, &g);
        problems.extend(p);
        for (got, want) in sizes.iter().zip([60.0, 10.0, 30.0]) {
            worst_dev = worst_dev.max((*got as f64 - want).abs());
        }
    }
    let (_dir, site) = fixture_site();
    let fixture_records = fixture::dataset(&site, 0).unwrap().records;
    let (fixture_sizes, p) = check_dataset(&fixture_records, &site.graph);
    problems.extend(p);
    let elapsed = start.elapsed();
    verdict(
        "path sampler contract",
        problems.is_empty() && worst_dev <= 1.0 && elapsed < Duration::from_secs(5),
        elapsed,
        &format!(
            "{seeds} synthetic sets of 100 records, max split deviation {worst_dev} from 60/10/30; fixture {} records split {fixture_sizes:?}; {} violations{}",
            fixture_records.len(),
            problems.len(),
            problems.first().map(|p| format!(" (first: {p})")).unwrap_or_default()
        ),
    )
}

struct NavOracle {
    sr: f64,
    osr: f64,
    spl: f64,
    tl: f64,
}

fn straight_line_nav(trajs: &[Trajectory], targets: &BTreeMap<String, String>, dist: &BTreeMap<String, usize>) -> NavOracle {
    let (mut s, mut os, mut spl, mut tl) = (0.0, 0.0, 0.0, 0.0);
    for tr in trajs {
        let target = &targets[&tr.record_id];
        let p = (tr.visited.len() - 1) as f64;
        let l = dist[target] as f64;
        let success = if tr.stopped_page_id.as_str() == target { 1.0 } else { 0.0 };
        s += success;
        if tr.visited.iter().any(|v| v.as_str() == target) {
            os += 1.0;
        }
        spl += success * l / l.max(p);
        tl += p;
    }
    let n = trajs.len() as f64;
    NavOracle { sr: s / n, osr: os / n, spl: spl / n, tl: tl / n }
}

/// Random trajectories on one random graph: walks from the homepage that
/// stop after a random number of clicks, scored against random targets.
fn synthetic_batch(rng: &mut ChaCha8Rng, count: usize) -> Option<(NavGraph, Vec<EpisodeRecord>, Vec<Trajectory>)> {
    let n = rng.gen_range(4..=12);
    let g = random_graph(rng, n, 3);
    let reachable: Vec<String> = bfs(&adjacency(&g), "p0").into_iter().filter(|(_, d)| *d >= 2).map(|(p, _)| p).collect();
    if reachable.is_empty() {
        return None;
    }
    let mut records = Vec::new();
    let mut trajs = Vec::new();
    for i in 0..count {
        let target = reachable.choose(rng).unwrap();
        let path = g.shortest_path("p0", target).unwrap().unwrap();
        let id = format!("r{i}");
        records.push(EpisodeRecord {
            record_id: id.clone(),
            site_id: "s".into(),
            question: "q".into(),
            description: String::new(),
            answer: "a".into(),
            path,
            split: Some(Split::Test),
        });
        let mut cur = g.homepage().clone();
        let mut visited = vec![cur.clone()];
        let mut actions = Vec::new();
        // bias the walk towards targets so that successes are common
        for _ in 0..rng.gen_range(0..=6) {
            let page = g.page(cur.as_str()).unwrap();
            if page.buttons.is_empty() {
                break;
            }
            let k = rng.gen_range(0..page.buttons.len());
            actions.push(k);
            cur = page.buttons[k].target.clone();
            visited.push(cur.clone());
            if cur.as_str() == target && rng.gen_bool(0.6) {
                break;
            }
        }
        trajs.push(Trajectory {
            record_id: id,
            stopped_page_id: cur,
            visited,
            action_indices: actions,
            answer: Some("a".into()),
            forced_stop: false,
        });
    }
    Some((g, records, trajs))
}

fn metric_oracle() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut checked = 0usize;
    let mut max_err = 0.0f64;
    let mut successes = 0.0;
    while checked < 200 {
        let Some((g, records, trajs)) = synthetic_batch(&mut rng, 10) else { continue };
        let got = nav_metrics(&trajs, &records.iter().map(|r| (r.record_id.clone(), r.clone())).collect(), &g).unwrap();
        let targets = records.iter().map(|r| (r.record_id.clone(), r.target().as_str().to_string())).collect();
        let want = straight_line_nav(&trajs, &targets, &bfs(&adjacency(&g), "p0"));
        for (a, b) in [(got.sr, want.sr), (got.osr, want.osr), (got.spl, want.spl), (got.tl, want.tl)] {
            max_err = max_err.max((a - b).abs());
        }
        successes += want.sr * trajs.len() as f64;
        checked += trajs.len();
    }
    let mut violations = 0;
    let mut fuzzed = 0;
    while fuzzed < 2000 {
        let count = rng.gen_range(1..=8);
        let Some((g, records, trajs)) = synthetic_batch(&mut rng, count) else { continue };
        let s = nav_metrics(&trajs, &records.iter().map(|r| (r.record_id.clone(), r.clone())).collect(), &g).unwrap();
        if !(s.sr <= s.osr && s.spl <= s.sr + 1e-12) {
            violations += 1;
        }
        fuzzed += 1;
    }
    let elapsed = start.elapsed();
    verdict(
        "metric oracle",
        max_err <= 1e-9 && violations == 0 && elapsed < Duration::from_secs(10),
        elapsed,
        &format!(
            "{checked} trajectories ({successes} successful), max |diff| {max_err:.1e}; {fuzzed} fuzzed batches, {violations} invariant violations"
        ),
    )
}

/// Wu-Palmer by enumeration: depth is the shortest root chain (in nodes),
/// the lcs the deepest shared ancestor-or-self, capped at 1.
fn brute_wup(parents: &[Vec<usize>], a: usize, b: usize) -> f64 {
    fn depth(parents: &[Vec<usize>], x: usize) -> usize {
        parents[x].iter().map(|&p| depth(parents, p) + 1).min().unwrap_or(1)
    }
    fn ancestors(parents: &[Vec<usize>], x: usize, out: &mut BTreeSet<usize>) {
        if out.insert(x) {
            for &p in &parents[x] {
                ancestors(parents, p, out);
            }
        }
    }
    let (mut aa, mut ab) = (BTreeSet::new(), BTreeSet::new());
    ancestors(parents, a, &mut aa);
    ancestors(parents, b, &mut ab);
    let lcs = aa.intersection(&ab).map(|&x| depth(parents, x)).max().unwrap();
    (2.0 * lcs as f64 / (depth(parents, a) + depth(parents, b)) as f64).min(1.0)
}

fn toy_taxonomy() -> Taxonomy {
    let spec = |parents: &[&str]| SynsetSpec { lemmas: vec![], parents: parents.iter().map(|p| p.to_string()).collect() };
    Taxonomy::new(BTreeMap::from([
        ("root".to_string(), spec(&[])),
        ("animal".to_string(), spec(&["root"])),
        ("dog".to_string(), spec(&["animal"])),
        ("cat".to_string(), spec(&["animal"])),
    ]))
    .unwrap()
}

fn wups_suite() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut max_err = 0.0f64;
    let mut pairs = 0usize;
    for _ in 0..200 {
        let n = rng.gen_range(1..=50);
        let parents: Vec<Vec<usize>> = (0..n)
            .map(|i| {
                if i == 0 {
                    return vec![];
                }
                let mut ps: Vec<usize> = (0..rng.gen_range(1..=2)).map(|_| rng.gen_range(0..i)).collect();
                ps.sort_unstable();
                ps.dedup();
                ps
            })
            .collect();
        let specs = parents
            .iter()
            .enumerate()
            .map(|(i, ps)| (format!("n{i}"), SynsetSpec { lemmas: vec![], parents: ps.iter().map(|p| format!("n{p}")).collect() }))
            .collect();
        let tax = Taxonomy::new(specs).unwrap();
        for a in 0..n {
            for b in 0..n {
                let got = tax.wup(&format!("n{a}"), &format!("n{b}")).unwrap();
                max_err = max_err.max((got - brute_wup(&parents, a, b)).abs());
                pairs += 1;
            }
        }
    }
    let toy = toy_taxonomy();
    let dog_cat = toy.wup("dog", "cat").unwrap();
    let at09 = wups_score("dog", "cat", &toy, 0.9);
    let at00 = wups_score("dog", "cat", &toy, 0.0);
    let shipped = default_taxonomy();
    let self_scores: Vec<f64> = ["dog", "blue cotton", "$12", "unknownword", "red wool scarf"]
        .iter()
        .flat_map(|x| [wups_score(x, x, &toy, 0.9), wups_score(x, x, &shipped, 0.0)])
        .collect();
    let exact = |got: f64, want: f64| (got - want).abs() <= 1e-9;
    let pass = max_err <= 1e-9
        && exact(dog_cat, 2.0 / 3.0)
        && exact(at09, 2.0 / 30.0)
        && exact(at00, 2.0 / 3.0)
        && self_scores.iter().all(|&s| exact(s, 1.0));
    let elapsed = start.elapsed();
    verdict(
        "wups suite",
        pass && elapsed < Duration::from_secs(10),
        elapsed,
        &format!(
            "200 random DAGs ({pairs} pairs) max |diff| {max_err:.1e}; wup(dog,cat)={dog_cat:.4}; WUPS@0.9={at09:.4}; WUPS@0.0={at00:.4}; WUPS(x,x) all 1: {}",
            self_scores.iter().all(|&s| exact(s, 1.0))
        ),
    )
}

fn bleu_rouge_fixtures() -> Verdict {
    let start = Instant::now();
    let s = "the red cotton socks cost twelve dollars";
    let identical = [bleu(s, s, 1), bleu(s, s, 4), rouge_l(s, s)];
    // four matching unigrams against a five-token reference: exp(1 - 5/4)
    let b1 = bleu("the cat sat on", "the cat sat on the", 1);
    let pass = identical.iter().all(|&x| (x - 1.0).abs() <= 1e-12) && (b1 - 0.7788).abs() <= 1e-4;
    verdict(
        "bleu/rouge fixtures",
        pass,
        start.elapsed(),
        &format!("identical BLEU-1/BLEU-4/ROUGE-L = {identical:?}; brevity fixture BLEU-1 = {b1:.6}"),
    )
}

fn gradient_check() -> Verdict {
    let start = Instant::now();
    let (_dir, site) = fixture_site();
    let record = fixture::dataset(&site, 0).unwrap().records[0].clone();
    let vocab = pipeline::build_vocab(std::slice::from_ref(&record), &site.graph);
    let cfg = ModelConfig { grid: 2, ..ModelConfig::tiny(vocab.len()) };
    let net: WebVlnNet<f64> = WebVlnNet::new(cfg, vocab, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let (features, _) = images::site_features(&site, net.vocab(), cfg.grid).unwrap();
    let inputs = EpisodeInputs::from_record(&record, &site.graph, net.vocab()).unwrap();
    let opts = GradCheckOptions { samples: Some(600), ..Default::default() };
    let clean = grad_check(&net, &inputs, &features, &opts).unwrap();
    let proj = net.action_projection();
    let mutated = grad_check(&net, &inputs, &features, &GradCheckOptions { include: vec![proj], corrupt: Some((proj, 1.5)), ..opts }).unwrap();
    let elapsed = start.elapsed();
    verdict(
        "gradient check",
        cfg.dim == 16
            && clean.coordinates >= 500
            && clean.max_relative_error <= 1e-4
            && mutated.max_relative_error > 1e-2
            && elapsed < Duration::from_secs(300),
        elapsed,
        &format!(
            "dim {} over {} coordinates: max relative error {:.2e} (worst {}); corrupted action projection: {:.2e}",
            cfg.dim, clean.coordinates, clean.max_relative_error, clean.worst_parameter, mutated.max_relative_error
        ),
    )
}

fn navigation_loss_closed_form() -> Verdict {
    let start = Instant::now();
    let expected = 2.0 * std::f64::consts::LN_2;
    let closed = nav_loss(&[vec![0.5, 0.5]], &[0], &[1], 1.0).unwrap();

    // the same step through the network: zero weights give a uniform
    // choice between one button and stop
    let vocab = Vocab::build(["go"]);
    let cfg = ModelConfig { grid: 1, ..ModelConfig::tiny(vocab.len()) };
    let net: WebVlnNet<f64> = WebVlnNet::zeroed(cfg, vocab).unwrap();
    let mut home = WebPage::new("home");
    home.buttons.push(Button::new("home#0", Some("go".into()), None, "next").unwrap());
    let g = NavGraph::build(vec![home, WebPage::new("next")], "home").unwrap();
    let mut site = SiteFeatures::build(&g, net.vocab(), 1, |_| vec![[0.5; 3]], |_| None).unwrap();
    site.insert(PageId::from("next"), PageFeatures { patches: vec![[0.5; 3]], buttons: vec![] });
    let inputs = EpisodeInputs {
        question_ids: vec![net.vocab().id("go")],
        description_ids: vec![],
        steps: vec![StepInputs { page: PageId::from("home"), teacher: 1 }],
        answer_ids: vec![],
    };
    let mut tape = Tape::new(net.params().tensors());
    let through_net = net.episode_loss(&mut tape, &inputs, &site, Sampling::Fixed(&[0]), 1.0, 1.0).unwrap().l_nav;
    verdict(
        "navigation loss closed form",
        (closed - expected).abs() <= 1e-9 && (through_net - expected).abs() <= 1e-9,
        start.elapsed(),
        &format!("closed form {closed:.12}, network {through_net:.12}, 2 ln 2 = {expected:.12}"),
    )
}

fn overfit_run() -> Verdict {
    let start = Instant::now();
    let (_dir, site) = fixture_site();
    let records = pipeline::subset(&fixture::dataset(&site, 0).unwrap().records, 20, 0);
    let mut net = pipeline::new_network(&records, &site.graph, ModelConfig::new, 0).unwrap();
    let features = pipeline::features_for(&site, &net).unwrap();
    let config = TrainConfig { iterations: 5000, ..TrainConfig::default() };
    let result = pipeline::train_to_target(&mut net, config, &records, &site, &features, 100, (0.95, 0.90), |s| {
        let line = format!("  overfit: step {} SR {:.2} EM {:.2} ({:.0}s)\n", s.iter, s.sr, s.exact_match, start.elapsed().as_secs_f64());
        let _ = std::io::stderr().write_all(line.as_bytes());
    })
    .unwrap();
    let (sr, em) = pipeline::fit_score(&net, &features, &records, &site.graph, DEFAULT_MAX_STEPS).unwrap();
    let elapsed = start.elapsed();
    verdict(
        "overfit run",
        site.graph.len() == 30
            && records.len() == 20
            && result.steps <= 5000
            && sr >= 0.95
            && em >= 0.90
            && elapsed < Duration::from_secs(1800),
        elapsed,
        &format!(
            "{} pages, {} records: SR {sr:.2}, exact match {em:.2} after {} steps (final loss {:.4})",
            site.graph.len(),
            records.len(),
            result.steps,
            result.final_loss
        ),
    )
}

fn oracle_agent_bound() -> Verdict {
    let start = Instant::now();
    let (_dir, site) = fixture_site();
    let records = fixture::dataset(&site, 0).unwrap().records;
    let tax = default_taxonomy();
    let mut lines = Vec::new();
    let mut pass = true;
    for split in [Split::Train, Split::Val, Split::Test] {
        let rs = split_records(&records, split);
        let run = run_eval(&mut OracleAgent::new(&site.graph), &rs, &site.graph, &tax, DEFAULT_MAX_STEPS).unwrap();
        let r = run.report;
        pass &= !rs.is_empty() && run.failures.is_empty() && [r.nav.sr, r.nav.osr, r.nav.spl, r.wups00].iter().all(|&x| x == 1.0);
        lines.push(format!("{} n={} SR={} OSR={} SPL={} WUPS0.0={}", split.as_str(), r.n, r.nav.sr, r.nav.osr, r.nav.spl, r.wups00));
    }
    verdict("oracle agent bound", pass, start.elapsed(), &lines.join("; "))
}

/// Exact success probability of the random agent on one record: the stop
/// count is uniform over its range, clicks are uniform over buttons and a
/// page without buttons ends the walk.
fn random_agent_success(graph: &NavGraph, target: &str) -> f64 {
    let (lo, hi) = RANDOM_STOP_RANGE;
    let mut dist: BTreeMap<&str, f64> = BTreeMap::from([(graph.homepage().as_str(), 1.0)]);
    let mut total = 0.0;
    for k in 0..=hi {
        if k >= lo {
            total += dist.get(target).copied().unwrap_or(0.0) / (hi - lo + 1) as f64;
        }
        let mut next: BTreeMap<&str, f64> = BTreeMap::new();
        for (page, p) in dist {
            let buttons = &graph.page(page).unwrap().buttons;
            if buttons.is_empty() {
                *next.entry(page).or_default() += p;
            }
            for b in buttons {
                *next.entry(b.target.as_str()).or_default() += p / buttons.len() as f64;
            }
        }
        dist = next;
    }
    total
}

fn random_agent_monte_carlo() -> Verdict {
    let start = Instant::now();
    let (_dir, site) = fixture_site();
    let records = fixture::dataset(&site, 0).unwrap().records;
    let episodes = 100_000usize;
    assert!(RANDOM_STOP_RANGE.1 <= DEFAULT_MAX_STEPS);
    let sim = Simulator::new(&site.graph);
    let mut agent = RandomAgent::new(0);
    let exact: Vec<f64> = records.iter().map(|r| random_agent_success(&site.graph, r.target().as_str())).collect();
    let (mut hits, mut mean, mut var) = (0usize, 0.0, 0.0);
    for i in 0..episodes {
        let r = &records[i % records.len()];
        let out = run_episode(&sim, &mut agent, r).unwrap();
        hits += usize::from(out.trajectory.stopped_page_id == *r.target());
        let p = exact[i % records.len()];
        mean += p;
        var += p * (1.0 - p);
    }
    let n = episodes as f64;
    let (mc, mean, sigma) = (hits as f64 / n, mean / n, var.sqrt() / n);
    let z = (mc - mean) / sigma;
    let elapsed = start.elapsed();
    verdict(
        "random agent",
        z.abs() <= 3.0 && mean < 0.1,
        elapsed,
        &format!("Monte Carlo SR {mc:.5} over {episodes} episodes, exact {mean:.5}, sigma {sigma:.5}, z = {z:.2}"),
    )
}

fn prompt_golden_file() -> Verdict {
    let start = Instant::now();
    let golden = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/qa_prompt.txt")).unwrap();
    let words = ["courtside", "crew", "socks", "price:", "$12", "colour:", "grey", "material:", "cotton"];
    let prompt = build_prompt("a grey cotton courtside crew socks on a plain background", &words.map(String::from), &default_rules()).unwrap();
    let has_parts = [PROMPT_CAPTION, PROMPT_WORDS, PROMPT_RULES].iter().chain(DEFAULT_RULES.iter()).all(|s| golden.contains(s));
    verdict(
        "prompt golden file",
        prompt.as_bytes() == golden.as_bytes() && has_parts,
        start.elapsed(),
        &format!("{} bytes, byte-equal: {}, literals and 7 rules present: {has_parts}", golden.len(), prompt == golden),
    )
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 11] = [
        ("graph oracle", graph_oracle),
        ("path sampler contract", path_sampler_contract),
        ("metric oracle", metric_oracle),
        ("wups suite", wups_suite),
        ("bleu/rouge fixtures", bleu_rouge_fixtures),
        ("gradient check", gradient_check),
        ("navigation loss closed form", navigation_loss_closed_form),
        ("overfit run", overfit_run),
        ("oracle agent bound", oracle_agent_bound),
        ("random agent", random_agent_monte_carlo),
        ("prompt golden file", prompt_golden_file),
    ];
    let (tx, rx) = std::sync::mpsc::channel();
    for (name, run) in criteria {
        let tx = tx.clone();
        std::thread::spawn(move || {
            let start = Instant::now();
            let v = std::panic::catch_unwind(run).unwrap_or_else(|e| {
                let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
                verdict(name, false, start.elapsed(), &format!("panicked: {}", msg.unwrap_or_default()))
            });
            let _ = tx.send(v);
        });
    }
    drop(tx);
    let mut failed = 0;
    let mut stdout = std::io::stdout().lock();
    for v in rx {
        failed += usize::from(!v.pass);
        let status = if v.pass { "PASS" } else { "FAIL" };
        let _ = writeln!(stdout, "{status} {}: {} [{:.2}s]", v.name, v.detail, v.elapsed.as_secs_f64());
        let _ = stdout.flush();
    }
    let _ = writeln!(stdout, "acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
