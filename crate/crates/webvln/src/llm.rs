//! Language-model and captioner clients: canned mock responses for offline
//! runs and a small JSON-over-HTTP client.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::Duration;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use webvln_core::datagen::{Captioner, TextGenerator};
use webvln_core::graph::WebPage;

/// Header line that makes a mock response conditional on the prompt.
pub const MATCH_PREFIX: &str = "# match:";

/// Serves responses from `*.txt` files in a directory. A file starting with
/// `# match: <text>` answers any prompt containing `<text>`; the other
/// files are served in file-name order, cycling.
#[derive(Debug, Clone, Default)]
pub struct MockGenerator {
    matched: Vec<(String, String)>,
    queue: Vec<String>,
    next: usize,
    pub calls: usize,
}

impl MockGenerator {
    pub fn from_dir(dir: &Path) -> Result<Self> {
        let mut files: Vec<_> = fs::read_dir(dir)
            .with_context(|| format!("reading mock directory {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "txt"))
            .collect();
        files.sort();
        let mut mock = MockGenerator::default();
        for f in files {
            let text = fs::read_to_string(&f)?;
            match text.strip_prefix(MATCH_PREFIX) {
                Some(rest) => {
                    let (key, body) = rest.split_once('\n').unwrap_or((rest, ""));
                    mock.matched.push((key.trim().to_string(), body.to_string()));
                }
                None => mock.queue.push(text),
            }
        }
        Ok(mock)
    }

    pub fn queued<I: IntoIterator<Item = S>, S: Into<String>>(responses: I) -> Self {
        MockGenerator { queue: responses.into_iter().map(Into::into).collect(), ..Default::default() }
    }
}

impl TextGenerator for MockGenerator {
    fn generate(&mut self, prompt: &str) -> Result<String, String> {
        self.calls += 1;
        if let Some((_, body)) = self.matched.iter().find(|(k, _)| prompt.contains(k.as_str())) {
            return Ok(body.clone());
        }
        if self.queue.is_empty() {
            return Err("no mock response for prompt".into());
        }
        let r = self.queue[self.next % self.queue.len()].clone();
        self.next += 1;
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmSettings {
    pub endpoint: String,
    pub model: String,
    #[serde(default, skip_serializing)]
    pub api_key: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    60
}

#[derive(Serialize)]
struct GenerateRequest<'a> {
    model: &'a str,
    prompt: &'a str,
}

#[derive(Deserialize)]
struct GenerateResponse {
    text: String,
}

/// POSTs `{model, prompt}` and expects `{text}` back. A bearer token is
/// sent when an API key is configured.
pub struct HttpGenerator {
    settings: LlmSettings,
    agent: ureq::Agent,
}

impl HttpGenerator {
    pub fn new(settings: LlmSettings) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(settings.timeout_secs)))
            .build()
            .into();
        HttpGenerator { settings, agent }
    }

    fn post<B: Serialize>(&self, body: &B) -> Result<String, String> {
        let mut req = self.agent.post(&self.settings.endpoint);
        if let Some(key) = &self.settings.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(body).map_err(|e| e.to_string())?;
        let parsed: GenerateResponse = resp.body_mut().read_json().map_err(|e| e.to_string())?;
        Ok(parsed.text)
    }
}

impl TextGenerator for HttpGenerator {
    fn generate(&mut self, prompt: &str) -> Result<String, String> {
        self.post(&GenerateRequest { model: &self.settings.model, prompt })
    }
}

#[derive(Serialize)]
struct CaptionRequest<'a> {
    model: &'a str,
    page_id: &'a str,
    screenshot: &'a str,
}

/// Remote captioner: POSTs `{model, page_id, screenshot}` and reads `{text}`.
pub struct HttpCaptioner(pub HttpGenerator);

impl Captioner for HttpCaptioner {
    fn caption(&mut self, page: &WebPage) -> Result<String, String> {
        self.0.post(&CaptionRequest {
            model: &self.0.settings.model,
            page_id: page.page_id.as_str(),
            screenshot: &page.screenshot_ref,
        })
    }
}

/// Captions read from a JSON sidecar: `{"page_id": "caption" | ["caption", ...]}`.
#[derive(Debug, Clone, Default)]
pub struct SidecarCaptions(BTreeMap<String, String>);

#[derive(Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

impl SidecarCaptions {
    pub fn load(path: &Path) -> Result<Self> {
        let raw: BTreeMap<String, OneOrMany> = crate::formats::read_json(path)?;
        Ok(SidecarCaptions(
            raw.into_iter()
                .map(|(k, v)| match v {
                    OneOrMany::One(s) => (k, s),
                    OneOrMany::Many(v) => (k, v.join(" ")),
                })
                .collect(),
        ))
    }
}

impl Captioner for SidecarCaptions {
    fn caption(&mut self, page: &WebPage) -> Result<String, String> {
        self.0.get(page.page_id.as_str()).cloned().ok_or_else(|| format!("no sidecar caption for `{}`", page.page_id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matched_responses_win_over_queue() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("a.txt"), "first").unwrap();
        fs::write(dir.path().join("b.txt"), "second").unwrap();
        fs::write(dir.path().join("c.txt"), "# match: socks\nQuestion: q\nAnswer: a\n").unwrap();
        let mut m = MockGenerator::from_dir(dir.path()).unwrap();
        assert_eq!(m.generate("about socks").unwrap(), "Question: q\nAnswer: a\n");
        assert_eq!(m.generate("x").unwrap(), "first");
        assert_eq!(m.generate("y").unwrap(), "second");
        assert_eq!(m.generate("z").unwrap(), "first");
        assert!(MockGenerator::default().generate("x").is_err());
    }

    #[test]
    fn sidecar_accepts_strings_and_lists() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        fs::write(&p, r#"{"p1": "a red mug", "p2": ["a", "blue hat"]}"#).unwrap();
        let mut c = SidecarCaptions::load(&p).unwrap();
        assert_eq!(c.caption(&WebPage::new("p2")).unwrap(), "a blue hat");
        assert!(c.caption(&WebPage::new("p3")).is_err());
    }
}
