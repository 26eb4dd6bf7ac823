//! Ground-truth path sampling, QA prompt assembly, response parsing and
//! dataset record generation with split assignment.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{NavGraph, PageId, WebPage};
use crate::sim::{EpisodeRecord, Split, MIN_TRANSITIONS};
use crate::text::{normalize, tokenize, Stoplist};

pub const PROMPT_CAPTION: &str = "There is a picture of the product with the caption of";
pub const PROMPT_WORDS: &str = "After that, here are all the words that appear on the website:";
pub const PROMPT_RULES: &str =
    "Lastly, I will give the following instructions, and you will be strictly following the instructions:";

/// The seven QA generation rules: five content rules and two rules against
/// distracting page text.
pub const DEFAULT_RULES: [&str; 7] = [
    "Provide 3 questions and their answers that can be directly found from the information provided in the text.",
    "Ask the first question about price and second about available sizes and the third about material.",
    "If precise answers cannot be found for those questions, then ask the questions on colours and availability in stock.",
    "Phrase your questions in a clear and concise manner to ensure they can be accurately answered by the given content.",
    "Answer should be to the point without additional information.",
    "The provided text is all from an online shopping website, there is some disturbing information which is irrelevant to the products, such as \u{201c}sign in\u{201d}. Make sure your questions and answers will focus on the products themselves.",
    "The provided texts may contain punctuation and symbols, which are irrelevant to the products, you should be able to distinguish them and make sure they won\u{2019}t appear in the generated questions and answers.",
];

pub fn default_rules() -> Vec<String> {
    DEFAULT_RULES.iter().map(|r| r.to_string()).collect()
}

/// Split shares (train, val, test).
pub const SPLIT_FRACTIONS: [f64; 3] = [0.6, 0.1, 0.3];

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DatagenError {
    #[error("no page is at least {MIN_TRANSITIONS} transitions from the homepage")]
    NotEnoughTargets,
    #[error("sample size must be positive")]
    ZeroSamples,
    #[error("no question/answer pairs found in response")]
    UnparsableResponse,
    #[error("rule list is empty")]
    EmptyRules,
}

/// A sampled target page and its shortest path from the homepage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampledPath {
    pub target: PageId,
    pub path: Vec<PageId>,
}

/// Draws up to `n` distinct targets uniformly without replacement among
/// pages at least two transitions from the homepage. Asking for more than
/// exist yields all of them.
pub fn sample_paths(graph: &NavGraph, n: usize, seed: u64) -> Result<Vec<SampledPath>, DatagenError> {
    if n == 0 {
        return Err(DatagenError::ZeroSamples);
    }
    let home = graph.homepage().clone();
    let dist = graph.distances_from(home.as_str()).expect("homepage is in the graph");
    let mut candidates: Vec<&PageId> = dist.iter().filter(|(_, &d)| d >= MIN_TRANSITIONS).map(|(p, _)| p).collect();
    if candidates.is_empty() {
        return Err(DatagenError::NotEnoughTargets);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    candidates.shuffle(&mut rng);
    candidates.truncate(n);
    Ok(candidates
        .into_iter()
        .map(|t| SampledPath {
            target: t.clone(),
            path: graph.shortest_path(home.as_str(), t.as_str()).expect("known ids").expect("reachable"),
        })
        .collect())
}

/// Caption, cleaned words and rules plus their rendering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub caption: String,
    pub word_list: Vec<String>,
    pub rules: Vec<String>,
    pub assembled: String,
}

impl PromptBundle {
    pub fn new(caption: &str, words: &[String], rules: &[String]) -> Result<Self, DatagenError> {
        Ok(PromptBundle {
            assembled: build_prompt(caption, words, rules)?,
            caption: caption.into(),
            word_list: words.to_vec(),
            rules: rules.to_vec(),
        })
    }
}

/// Renders the QA-generation prompt; segments are joined by single newlines.
pub fn build_prompt<S: AsRef<str>>(caption: &str, words: &[S], rules: &[S]) -> Result<String, DatagenError> {
    if rules.is_empty() {
        return Err(DatagenError::EmptyRules);
    }
    let words: Vec<&str> = words.iter().map(AsRef::as_ref).collect();
    let rules: Vec<&str> = rules.iter().map(AsRef::as_ref).collect();
    Ok([PROMPT_CAPTION, caption, PROMPT_WORDS, &words.join(" "), PROMPT_RULES, &rules.join("\n")].join("\n"))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub question: String,
    pub answer: String,
    pub source_page_id: PageId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MarkerKind {
    Question,
    Answer,
}

struct Marker {
    kind: MarkerKind,
    start: usize,
    end: usize,
}

fn find_markers(text: &str) -> Vec<Marker> {
    let bytes = text.as_bytes();
    let lower = text.to_ascii_lowercase();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let boundary = i == 0 || !(text[..i].chars().next_back().is_some_and(char::is_alphanumeric));
        if boundary {
            for (word, kind) in
                [("question", MarkerKind::Question), ("answer", MarkerKind::Answer), ("q", MarkerKind::Question), ("a", MarkerKind::Answer)]
            {
                if !lower[i..].starts_with(word) {
                    continue;
                }
                let mut j = i + word.len();
                while j < bytes.len() && bytes[j] == b' ' {
                    j += 1;
                }
                let digits_start = j;
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                let has_digits = j > digits_start;
                while j < bytes.len() && bytes[j] == b' ' {
                    j += 1;
                }
                let ok = match bytes.get(j) {
                    Some(b':') => true,
                    Some(b'.') | Some(b')') => has_digits,
                    _ => false,
                };
                if ok {
                    out.push(Marker { kind, start: i, end: j + 1 });
                    i = j;
                    break;
                }
            }
        }
        i += text[i..].chars().next().map_or(1, char::len_utf8);
    }
    out
}

fn strip_segment(s: &str) -> String {
    s.trim_matches(|c: char| c.is_whitespace() || matches!(c, '"' | '\'' | '*' | '\u{201c}' | '\u{201d}' | '\u{2018}' | '\u{2019}'))
        .to_string()
}

/// Extracts `Q:`/`A:` style pairs (`Q1:`, `Question 2.`, `A3)` ...). A
/// question marker followed by an answer marker forms a pair; unpaired
/// markers are ignored.
pub fn parse_qa_response(text: &str, source: &PageId) -> Result<Vec<QaPair>, DatagenError> {
    let markers = find_markers(text);
    let mut pairs = Vec::new();
    for (k, m) in markers.iter().enumerate() {
        if m.kind != MarkerKind::Question {
            continue;
        }
        let Some(a) = markers.get(k + 1).filter(|n| n.kind == MarkerKind::Answer) else { continue };
        let answer_end = markers.get(k + 2).map_or(text.len(), |n| n.start);
        let question = strip_segment(&text[m.end..a.start]);
        let answer = strip_segment(&text[a.end..answer_end]);
        if !question.is_empty() && !answer.is_empty() {
            pairs.push(QaPair { question, answer, source_page_id: source.clone() });
        }
    }
    if pairs.is_empty() {
        Err(DatagenError::UnparsableResponse)
    } else {
        Ok(pairs)
    }
}

/// Language model endpoint producing QA text from a prompt.
pub trait TextGenerator {
    fn generate(&mut self, prompt: &str) -> Result<String, String>;
}

/// Produces a caption for a page's product image.
pub trait Captioner {
    fn caption(&mut self, page: &WebPage) -> Result<String, String>;
}

/// Captioner that only serves captions stored on the pages.
#[derive(Debug, Clone, Copy, Default)]
pub struct StoredCaptions;

impl Captioner for StoredCaptions {
    fn caption(&mut self, page: &WebPage) -> Result<String, String> {
        if page.captions.is_empty() {
            Err(alloc::format!("page `{}` has no stored caption", page.page_id))
        } else {
            Ok(page.captions.join(" "))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationOptions {
    pub site_id: String,
    pub rules: Vec<String>,
    pub stoplist: Stoplist,
    pub seed: u64,
    pub fractions: [f64; 3],
}

impl GenerationOptions {
    pub fn new(site_id: impl Into<String>) -> Self {
        GenerationOptions {
            site_id: site_id.into(),
            rules: default_rules(),
            stoplist: Stoplist::default(),
            seed: 0,
            fractions: SPLIT_FRACTIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedItem {
    pub target: PageId,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub records: Vec<EpisodeRecord>,
    pub prompts: BTreeMap<PageId, String>,
    pub skipped: Vec<SkippedItem>,
}

/// Captions each target, prompts the generator, parses QA pairs and turns
/// every pair into a record sharing the target's path. Failures skip the
/// target (or pair) and are reported. A question asked about more than one
/// target gets the target's caption as description.
pub fn generate_records(
    graph: &NavGraph,
    paths: &[SampledPath],
    llm: &mut dyn TextGenerator,
    captioner: &mut dyn Captioner,
    opts: &GenerationOptions,
) -> Result<GenerationReport, DatagenError> {
    if opts.rules.is_empty() {
        return Err(DatagenError::EmptyRules);
    }
    let mut report = GenerationReport { records: Vec::new(), prompts: BTreeMap::new(), skipped: Vec::new() };
    let mut captions: BTreeMap<PageId, String> = BTreeMap::new();
    let skip = |report: &mut GenerationReport, target: &PageId, reason: String| {
        report.skipped.push(SkippedItem { target: target.clone(), reason });
    };
    for sp in paths {
        let Some(page) = graph.page(sp.target.as_str()) else {
            skip(&mut report, &sp.target, "target not in graph".into());
            continue;
        };
        let caption = if page.captions.is_empty() {
            match captioner.caption(page) {
                Ok(c) => c,
                Err(e) => {
                    skip(&mut report, &sp.target, alloc::format!("captioner: {e}"));
                    continue;
                }
            }
        } else {
            page.captions.join(" ")
        };
        let prompt = build_prompt(&caption, &page.word_list, &opts.rules)?;
        let response = match llm.generate(&prompt) {
            Ok(r) => r,
            Err(e) => {
                skip(&mut report, &sp.target, alloc::format!("generator: {e}"));
                continue;
            }
        };
        report.prompts.insert(sp.target.clone(), prompt);
        let pairs = match parse_qa_response(&response, &sp.target) {
            Ok(p) => p,
            Err(e) => {
                skip(&mut report, &sp.target, e.to_string());
                continue;
            }
        };
        captions.insert(sp.target.clone(), caption);
        for (k, pair) in pairs.into_iter().enumerate() {
            if opts.stoplist.matches_any(&tokenize(&pair.answer)) {
                skip(&mut report, &sp.target, alloc::format!("answer `{}` contains stoplisted text", pair.answer));
                continue;
            }
            let record = EpisodeRecord {
                record_id: alloc::format!("{}-{}-{}", opts.site_id, sp.target, k),
                site_id: opts.site_id.clone(),
                question: pair.question,
                description: String::new(),
                answer: pair.answer,
                path: sp.path.clone(),
                split: None,
            };
            if let Err(e) = record.validate(graph) {
                skip(&mut report, &sp.target, e.to_string());
                continue;
            }
            report.records.push(record);
        }
    }

    let mut targets_by_question: BTreeMap<String, BTreeSet<PageId>> = BTreeMap::new();
    for r in &report.records {
        targets_by_question.entry(normalize(&r.question)).or_default().insert(r.target().clone());
    }
    for r in &mut report.records {
        if targets_by_question[&normalize(&r.question)].len() > 1 {
            let caption = &captions[r.target()];
            r.description = if caption.trim().is_empty() {
                graph.page(r.target().as_str()).map(|p| p.word_list.join(" ")).unwrap_or_default()
            } else {
                caption.clone()
            };
        }
    }
    assign_splits(&mut report.records, opts.fractions, opts.seed);
    Ok(report)
}

/// Subset of `sizes` (indices into `pool`) whose sum is closest to `goal`,
/// preferring the smaller sum on ties.
fn closest_subset(sizes: &[usize], pool: &[usize], goal: usize) -> Vec<usize> {
    let total: usize = pool.iter().map(|&g| sizes[g]).sum();
    // reach[s] = Some((item position, previous sum)) of the first way to reach s
    let mut reach: Vec<Option<(usize, usize)>> = alloc::vec![None; total + 1];
    let mut reachable = alloc::vec![false; total + 1];
    reachable[0] = true;
    for (pos, &g) in pool.iter().enumerate() {
        let w = sizes[g];
        for s in (w..=total).rev() {
            if !reachable[s] && reachable[s - w] {
                reachable[s] = true;
                reach[s] = Some((pos, s - w));
            }
        }
    }
    let best = (0..=total)
        .filter(|&s| reachable[s])
        .min_by_key(|&s| (s.abs_diff(goal), s))
        .unwrap_or(0);
    let mut out = Vec::new();
    let mut s = best;
    while let Some((pos, prev)) = reach[s] {
        out.push(pool[pos]);
        s = prev;
    }
    out
}

/// Assigns splits by path: all records sharing a path land in the same
/// split, and record counts approach the given fractions (validation
/// first, then training; test takes the rest).
pub fn assign_splits(records: &mut [EpisodeRecord], fractions: [f64; 3], seed: u64) {
    let mut groups: BTreeMap<Vec<PageId>, Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        groups.entry(r.path.clone()).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = groups.into_values().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    groups.shuffle(&mut rng);
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let n = records.len() as f64;
    let goal = |f: f64| (n * f).round() as usize;

    let all: Vec<usize> = (0..groups.len()).collect();
    let val = closest_subset(&sizes, &all, goal(fractions[1]));
    let rest: Vec<usize> = all.iter().copied().filter(|g| !val.contains(g)).collect();
    let train = closest_subset(&sizes, &rest, goal(fractions[0]));
    for (g, members) in groups.iter().enumerate() {
        let split = if val.contains(&g) {
            Split::Val
        } else if train.contains(&g) {
            Split::Train
        } else {
            Split::Test
        };
        for &i in members {
            records[i].split = Some(split);
        }
    }
}

/// Up to `k` records per site, drawn without replacement, for manual review.
pub fn quality_sample(records: &[EpisodeRecord], k: usize, seed: u64) -> Vec<EpisodeRecord> {
    let mut by_site: BTreeMap<&str, Vec<&EpisodeRecord>> = BTreeMap::new();
    for r in records {
        by_site.entry(r.site_id.as_str()).or_default().push(r);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (_, rs) in by_site {
        out.extend(rs.choose_multiple(&mut rng, k.min(rs.len())).map(|r| (*r).clone()));
    }
    out
}
