//! Agents: a common interface plus random, greedy text-overlap, oracle,
//! learned and language-model agents.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datagen::TextGenerator;
use crate::graph::NavGraph;
use crate::model::{argmax, ModelError, Navigation, SiteFeatures, WebVlnNet};
use crate::sim::{Action, EpisodeRecord, HistoryEntry, Observation};
use crate::text::{split_sentences, tokenize};

/// Default answer length bound of the learned agent's decoder.
pub const MAX_ANSWER_LEN: usize = 40;

/// Random agent stop lengths, inclusive.
pub const RANDOM_STOP_RANGE: (usize, usize) = (3, 8);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentDecision {
    pub action_index: usize,
    /// Set when the action is a stop.
    pub answer: Option<String>,
    /// The decision is a fallback after unusable agent output.
    #[serde(default)]
    pub fallback: bool,
}

impl AgentDecision {
    pub fn click(index: usize) -> Self {
        AgentDecision { action_index: index, answer: None, fallback: false }
    }

    pub fn stop(obs: &Observation, answer: impl Into<String>) -> Self {
        AgentDecision { action_index: obs.stop_index(), answer: Some(answer.into()), fallback: false }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AgentError {
    #[error("client error: {0}")]
    Client(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("agent used before reset")]
    NotReset,
}

pub trait Agent {
    /// Starts an episode for `record`.
    fn reset(&mut self, record: &EpisodeRecord) -> Result<(), AgentError>;

    fn decide(&mut self, obs: &Observation, history: &[HistoryEntry]) -> Result<AgentDecision, AgentError>;

    /// Answer given when the simulator ends the episode at the step limit.
    fn forced_answer(&mut self) -> Result<String, AgentError> {
        Ok(String::new())
    }
}

/// Draws a stop length uniformly from 3..=8 per episode, clicks uniformly
/// random buttons until it has clicked that many times, then stops with an
/// empty answer. Pages without buttons end the episode early.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    rng: ChaCha8Rng,
    stop_after: usize,
    clicks: usize,
}

impl RandomAgent {
    pub fn new(seed: u64) -> Self {
        RandomAgent { rng: ChaCha8Rng::seed_from_u64(seed), stop_after: 0, clicks: 0 }
    }

    pub fn stop_after(&self) -> usize {
        self.stop_after
    }
}

impl Agent for RandomAgent {
    fn reset(&mut self, _record: &EpisodeRecord) -> Result<(), AgentError> {
        self.stop_after = self.rng.gen_range(RANDOM_STOP_RANGE.0..=RANDOM_STOP_RANGE.1);
        self.clicks = 0;
        Ok(())
    }

    fn decide(&mut self, obs: &Observation, _history: &[HistoryEntry]) -> Result<AgentDecision, AgentError> {
        let n = obs.button_count();
        if self.clicks >= self.stop_after || n == 0 {
            return Ok(AgentDecision::stop(obs, ""));
        }
        self.clicks += 1;
        Ok(AgentDecision::click(self.rng.gen_range(0..n)))
    }
}

/// Function words ignored by the overlap agent.
const OVERLAP_STOPWORDS: [&str; 24] = [
    "a", "an", "and", "are", "can", "do", "does", "for", "how", "i", "in", "is", "it", "of", "on", "or", "the", "this",
    "to", "what", "which", "with", "you", "much",
];

fn content_tokens(text: &str) -> BTreeSet<String> {
    tokenize(text)
        .into_iter()
        .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric() && c != '$').to_string())
        .filter(|t| !t.is_empty() && !OVERLAP_STOPWORDS.contains(&t.as_str()))
        .collect()
}

fn overlap<'a, I: IntoIterator<Item = &'a String>>(words: I, query: &BTreeSet<String>) -> usize {
    let words: BTreeSet<String> =
        words.into_iter().map(|w| w.trim_matches(|c: char| !c.is_alphanumeric() && c != '$').to_string()).collect();
    words.intersection(query).count()
}

/// Follows the button whose description shares most content words with
/// the question and description; stops once the current page's own words
/// overlap more than any button and answers with its best sentence.
#[derive(Debug, Clone)]
pub struct GreedyAgent<'g> {
    graph: &'g NavGraph,
    query: BTreeSet<String>,
    current: Option<String>,
}

impl<'g> GreedyAgent<'g> {
    pub fn new(graph: &'g NavGraph) -> Self {
        GreedyAgent { graph, query: BTreeSet::new(), current: None }
    }

    fn best_sentence(&self, page_id: &str) -> String {
        let Some(page) = self.graph.page(page_id) else { return String::new() };
        let mut best: Option<(usize, Vec<String>)> = None;
        for s in split_sentences(&page.word_list) {
            let score = overlap(&s, &self.query);
            if best.as_ref().is_none_or(|(b, _)| score > *b) {
                best = Some((score, s));
            }
        }
        best.map(|(_, s)| s.join(" ")).unwrap_or_default()
    }
}

impl Agent for GreedyAgent<'_> {
    fn reset(&mut self, record: &EpisodeRecord) -> Result<(), AgentError> {
        self.query = content_tokens(&record.question);
        self.query.extend(content_tokens(&record.description));
        self.current = None;
        Ok(())
    }

    fn decide(&mut self, obs: &Observation, _history: &[HistoryEntry]) -> Result<AgentDecision, AgentError> {
        self.current = Some(obs.page_id.to_string());
        let mut best = (0usize, 0usize);
        for (i, c) in obs.candidates.iter().enumerate() {
            if let Action::Click(b) = c {
                let words = b.description.as_deref().map(tokenize).unwrap_or_default();
                let score = overlap(&words, &self.query);
                if score > best.1 {
                    best = (i, score);
                }
            }
        }
        let page_score = self.graph.page(obs.page_id.as_str()).map_or(0, |p| overlap(&p.word_list, &self.query));
        if page_score > best.1 || obs.button_count() == 0 {
            return Ok(AgentDecision::stop(obs, self.best_sentence(obs.page_id.as_str())));
        }
        Ok(AgentDecision::click(best.0))
    }

    fn forced_answer(&mut self) -> Result<String, AgentError> {
        Ok(self.current.clone().map(|p| self.best_sentence(&p)).unwrap_or_default())
    }
}

/// Follows the gold path and answers the gold answer.
#[derive(Debug, Clone)]
pub struct OracleAgent<'g> {
    graph: &'g NavGraph,
    actions: Vec<usize>,
    answer: String,
    step: usize,
}

impl<'g> OracleAgent<'g> {
    pub fn new(graph: &'g NavGraph) -> Self {
        OracleAgent { graph, actions: Vec::new(), answer: String::new(), step: 0 }
    }
}

impl Agent for OracleAgent<'_> {
    fn reset(&mut self, record: &EpisodeRecord) -> Result<(), AgentError> {
        self.actions = record
            .teacher_actions(self.graph)
            .ok_or_else(|| AgentError::Client(alloc::format!("record `{}` does not fit the graph", record.record_id)))?;
        self.answer = record.answer.clone();
        self.step = 0;
        Ok(())
    }

    fn decide(&mut self, obs: &Observation, _history: &[HistoryEntry]) -> Result<AgentDecision, AgentError> {
        let a = self.actions.get(self.step).copied().unwrap_or(obs.stop_index());
        self.step += 1;
        if a == obs.stop_index() {
            Ok(AgentDecision::stop(obs, self.answer.clone()))
        } else {
            Ok(AgentDecision::click(a))
        }
    }

    fn forced_answer(&mut self) -> Result<String, AgentError> {
        Ok(self.answer.clone())
    }
}

/// Argmax navigation with the trained network and greedy answer decoding.
#[derive(Debug, Clone)]
pub struct LearnedAgent<'m> {
    net: &'m WebVlnNet<f32>,
    site: &'m SiteFeatures,
    nav: Option<Navigation<f32>>,
    pub max_answer_len: usize,
}

impl<'m> LearnedAgent<'m> {
    pub fn new(net: &'m WebVlnNet<f32>, site: &'m SiteFeatures) -> Self {
        LearnedAgent { net, site, nav: None, max_answer_len: MAX_ANSWER_LEN }
    }
}

impl Agent for LearnedAgent<'_> {
    fn reset(&mut self, record: &EpisodeRecord) -> Result<(), AgentError> {
        self.nav = Some(self.net.begin(&record.question, &record.description)?);
        Ok(())
    }

    fn decide(&mut self, obs: &Observation, _history: &[HistoryEntry]) -> Result<AgentDecision, AgentError> {
        let nav = self.nav.as_mut().ok_or(AgentError::NotReset)?;
        let page = self.site.page(obs.page_id.as_str())?;
        let p = self.net.step(nav, page)?;
        let a = argmax(&p);
        if a == obs.stop_index() {
            Ok(AgentDecision::stop(obs, self.net.decode_answer(&nav.state, self.max_answer_len)))
        } else {
            Ok(AgentDecision::click(a))
        }
    }

    fn forced_answer(&mut self) -> Result<String, AgentError> {
        let nav = self.nav.as_ref().ok_or(AgentError::NotReset)?;
        Ok(self.net.decode_answer(&nav.state, self.max_answer_len))
    }
}

/// Text shown to a language-model agent at each step: page id, the
/// numbered candidates (`[k] label`, then `[stop]`) and the clicks so far.
pub fn format_observation(obs: &Observation, history: &[HistoryEntry]) -> String {
    let mut out = alloc::format!("Current page: {}\nCandidates:\n", obs.page_id);
    for (k, c) in obs.candidates.iter().enumerate() {
        match c {
            Action::Click(b) => out.push_str(&alloc::format!("[{k}] {}\n", b.label())),
            Action::Stop => out.push_str("[stop] stop here and answer the question\n"),
        }
    }
    out.push_str("History: ");
    if history.is_empty() {
        out.push_str("(none)");
    } else {
        let steps: Vec<String> = history.iter().map(|h| alloc::format!("{} [{}]", h.page_id, h.action_index)).collect();
        out.push_str(&steps.join(" -> "));
    }
    out.push('\n');
    out
}

/// Task preamble sent before every observation.
pub fn task_preamble(question: &str, description: &str) -> String {
    let mut out = String::from("You are browsing a shopping website to answer a question.\n");
    out.push_str(&alloc::format!("Question: {question}\n"));
    if !description.trim().is_empty() {
        out.push_str(&alloc::format!("Description: {description}\n"));
    }
    out.push_str(
        "Reply with the bracketed number of the button to click, for example [0], \
         or with [stop] followed by your answer when the current page answers the question.\n\n",
    );
    out
}

/// Reads the first bracketed token of a reply: a candidate number, or
/// `stop` followed by the answer text.
pub fn parse_reply(reply: &str, obs: &Observation) -> Option<AgentDecision> {
    let open = reply.find('[')?;
    let close = open + reply[open..].find(']')?;
    let token = reply[open + 1..close].trim();
    let rest = reply[close + 1..].trim();
    if token.eq_ignore_ascii_case("stop") {
        return Some(AgentDecision::stop(obs, rest));
    }
    let k: usize = token.parse().ok()?;
    if k == obs.stop_index() {
        Some(AgentDecision::stop(obs, rest))
    } else if k < obs.button_count() {
        Some(AgentDecision::click(k))
    } else {
        None
    }
}

/// Prompt-driven agent. An unusable reply is retried once; a second one
/// stops the episode with the raw reply as answer and the fallback flag set.
pub struct LlmAgent<'c> {
    client: &'c mut dyn TextGenerator,
    question: String,
    description: String,
    /// Every prompt and reply of the current episode.
    pub transcript: Vec<(String, String)>,
}

impl<'c> LlmAgent<'c> {
    pub fn new(client: &'c mut dyn TextGenerator) -> Self {
        LlmAgent { client, question: String::new(), description: String::new(), transcript: Vec::new() }
    }

    fn ask(&mut self, prompt: String) -> Result<String, AgentError> {
        let reply = self.client.generate(&prompt).map_err(AgentError::Client)?;
        self.transcript.push((prompt, reply.clone()));
        Ok(reply)
    }
}

impl Agent for LlmAgent<'_> {
    fn reset(&mut self, record: &EpisodeRecord) -> Result<(), AgentError> {
        self.question = record.question.clone();
        self.description = record.description.clone();
        self.transcript.clear();
        Ok(())
    }

    fn decide(&mut self, obs: &Observation, history: &[HistoryEntry]) -> Result<AgentDecision, AgentError> {
        let prompt = task_preamble(&self.question, &self.description) + &format_observation(obs, history);
        let first = self.ask(prompt.clone())?;
        if let Some(d) = parse_reply(&first, obs) {
            return Ok(d);
        }
        let retry = alloc::format!(
            "{prompt}\nYour previous reply could not be used. Answer with one bracketed candidate number or [stop] and the answer.\n"
        );
        let second = self.ask(retry)?;
        Ok(parse_reply(&second, obs).unwrap_or(AgentDecision {
            action_index: obs.stop_index(),
            answer: Some(second.trim().to_string()),
            fallback: true,
        }))
    }

    fn forced_answer(&mut self) -> Result<String, AgentError> {
        let prompt = task_preamble(&self.question, &self.description)
            + "The step limit was reached. Reply with [stop] followed by your best answer.\n";
        let reply = self.ask(prompt)?;
        Ok(match reply.find(']') {
            Some(i) if reply.trim_start().starts_with('[') => reply[i + 1..].trim().to_string(),
            _ => reply.trim().to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Button, PageId, WebPage};
    use crate::sim::Simulator;
    use alloc::collections::VecDeque;
    use alloc::vec;

    fn obs(labels: &[(Option<&str>, Option<&str>)]) -> Observation {
        let mut candidates: Vec<Action> = labels
            .iter()
            .enumerate()
            .map(|(i, (d, img))| {
                Action::Click(Button::new(alloc::format!("b{i}"), d.map(Into::into), img.map(Into::into), "x").unwrap())
            })
            .collect();
        candidates.push(Action::Stop);
        Observation { page_id: "home".into(), screenshot_ref: "screenshots/home.png".into(), candidates }
    }

    fn record(q: &str, d: &str, path: &[&str]) -> EpisodeRecord {
        EpisodeRecord {
            record_id: "r".into(),
            site_id: "s".into(),
            question: q.into(),
            description: d.into(),
            answer: "$12".into(),
            path: path.iter().map(|p| PageId::from(*p)).collect(),
            split: None,
        }
    }

    fn site() -> NavGraph {
        let mut home = WebPage::new("home");
        home.buttons = vec![
            Button::new("h0", Some("About us".into()), None, "about").unwrap(),
            Button::new("h1", Some("Socks".into()), None, "socks").unwrap(),
        ];
        home.word_list = vec!["welcome".into(), "to".into(), "the".into(), "shop.".into()];
        let mut socks = WebPage::new("socks");
        socks.buttons = vec![
            Button::new("s0", Some("Striped Wool Socks".into()), None, "wool").unwrap(),
            Button::new("s1", Some("Grey Crew Socks".into()), None, "crew").unwrap(),
            Button::new("s2", Some("Home".into()), None, "home").unwrap(),
        ];
        socks.word_list = vec!["all".into(), "socks.".into()];
        let mut crew = WebPage::new("crew");
        crew.buttons = vec![Button::new("c0", Some("Home".into()), None, "home").unwrap()];
        crew.word_list = "grey crew socks. price $12 per pair. made of cotton.".split(' ').map(Into::into).collect();
        let mut about = WebPage::new("about");
        about.buttons = vec![Button::new("a0", Some("Home".into()), None, "home").unwrap()];
        let mut wool = WebPage::new("wool");
        wool.buttons = vec![Button::new("w0", Some("Home".into()), None, "home").unwrap()];
        NavGraph::build(vec![home, socks, crew, about, wool], "home").unwrap()
    }

    fn run(agent: &mut dyn Agent, g: &NavGraph, r: &EpisodeRecord) -> (Vec<PageId>, String) {
        let sim = Simulator::new(g);
        let mut state = sim.reset(r).unwrap();
        agent.reset(r).unwrap();
        let mut answer = String::new();
        while !state.done {
            let o = sim.observe(&state).unwrap();
            let d = agent.decide(&o, &state.history).unwrap();
            if let Some(a) = d.answer.clone() {
                answer = a;
            }
            state = sim.step(state, d.action_index).unwrap();
        }
        if state.forced_stop {
            answer = agent.forced_answer().unwrap();
        }
        (state.visited, answer)
    }

    #[test]
    fn observation_format() {
        let o = obs(&[(Some("Sale"), None), (None, Some("assets/grey-sock.png"))]);
        let h = vec![HistoryEntry { page_id: "home".into(), action_index: 1 }];
        assert_eq!(
            format_observation(&o, &h),
            "Current page: home\nCandidates:\n[0] Sale\n[1] grey-sock\n[stop] stop here and answer the question\nHistory: home [1]\n"
        );
        assert!(format_observation(&o, &[]).ends_with("History: (none)\n"));
    }

    #[test]
    fn reply_parsing() {
        let o = obs(&[(Some("a"), None), (Some("b"), None), (Some("c"), None)]);
        assert_eq!(parse_reply("I pick [2] because", &o), Some(AgentDecision::click(2)));
        assert_eq!(parse_reply("[stop] $12", &o).unwrap().answer.as_deref(), Some("$12"));
        assert_eq!(parse_reply("[3] twelve", &o).unwrap().action_index, 3);
        assert_eq!(parse_reply("[9]", &o), None);
        assert_eq!(parse_reply("no idea", &o), None);
    }

    struct Script(VecDeque<&'static str>);

    impl TextGenerator for Script {
        fn generate(&mut self, _prompt: &str) -> Result<String, String> {
            self.0.pop_front().map(Into::into).ok_or_else(|| "script exhausted".into())
        }
    }

    #[test]
    fn llm_agent_follows_replies_and_falls_back() {
        let g = site();
        let r = record("What is the price of the grey socks?", "", &["home", "socks", "crew"]);
        let mut client = Script(VecDeque::from(["[1]", "[1]", "[stop] $12"]));
        let mut agent = LlmAgent::new(&mut client);
        let (visited, answer) = run(&mut agent, &g, &r);
        assert_eq!(visited, r.path);
        assert_eq!(answer, "$12");

        let mut client = Script(VecDeque::from(["hmm", "still thinking"]));
        let mut agent = LlmAgent::new(&mut client);
        agent.reset(&r).unwrap();
        let o = obs(&[(Some("a"), None)]);
        let d = agent.decide(&o, &[]).unwrap();
        assert!(d.fallback);
        assert_eq!(d.action_index, 1);
        assert_eq!(d.answer.as_deref(), Some("still thinking"));
        assert_eq!(agent.transcript.len(), 2);

        let mut client = Script(VecDeque::new());
        let mut agent = LlmAgent::new(&mut client);
        agent.reset(&r).unwrap();
        assert!(matches!(agent.decide(&o, &[]), Err(AgentError::Client(_))));
    }

    #[test]
    fn greedy_reaches_the_product_in_two_clicks() {
        let g = site();
        let r = record("What is the price of the grey socks?", "grey crew socks", &["home", "socks", "crew"]);
        let (visited, answer) = run(&mut GreedyAgent::new(&g), &g, &r);
        assert_eq!(visited, r.path);
        assert_eq!(answer, "grey crew socks.");
    }

    #[test]
    fn greedy_ties_pick_the_first_candidate() {
        let g = site();
        let mut a = GreedyAgent::new(&g);
        a.reset(&record("zzz", "", &["home", "socks", "crew"])).unwrap();
        let o = obs(&[(Some("about"), None), (Some("socks"), None)]);
        assert_eq!(a.decide(&o, &[]).unwrap(), AgentDecision::click(0));
    }

    #[test]
    fn oracle_follows_gold_path() {
        let g = site();
        let r = record("q", "", &["home", "socks", "crew"]);
        let (visited, answer) = run(&mut OracleAgent::new(&g), &g, &r);
        assert_eq!(visited, r.path);
        assert_eq!(answer, "$12");
    }

    #[test]
    fn random_agent_stops_within_range_and_is_reproducible() {
        let g = site();
        let r = record("q", "", &["home", "socks", "crew"]);
        let mut a = RandomAgent::new(9);
        let mut b = RandomAgent::new(9);
        for _ in 0..50 {
            let (va, _) = run(&mut a, &g, &r);
            let (vb, _) = run(&mut b, &g, &r);
            assert_eq!(va, vb);
            assert!((3..=8).contains(&a.stop_after()));
            assert_eq!(va.len() - 1, a.stop_after());
        }
        let mut one = RandomAgent::new(0);
        one.reset(&r).unwrap();
        assert_eq!(one.decide(&obs(&[(Some("x"), None)]), &[]).unwrap(), AgentDecision::click(0));
        assert_eq!(one.decide(&obs(&[]), &[]).unwrap().action_index, 0);
    }
}
