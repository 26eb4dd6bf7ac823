//! Website snapshots: `site.json`, HTML page parsing and graph export.
//!
//! Layout of a snapshot directory:
//!
//! ```text
//! <site>/site.json            homepage id, clickable selectors, stoplist path
//! <site>/pages/<id>.html
//! <site>/assets/*
//! <site>/screenshots/<id>.png
//! <site>/captions.json        optional: page id -> list of captions
//! ```

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use scraper::{ElementRef, Html, Selector};
use serde::{Deserialize, Serialize};
use webvln_core::graph::{Button, GraphError, NavGraph, PageId, WebPage};
use webvln_core::text::{clean_text, Stoplist};

#[derive(Debug, thiserror::Error)]
pub enum SiteError {
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad {path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("page `{0}` has no content")]
    NoContent(String),
    #[error("invalid selector `{0}`")]
    Selector(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

pub(crate) fn read(path: &Path) -> Result<String, SiteError> {
    fs::read_to_string(path).map_err(|source| SiteError::Io { path: path.into(), source })
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, SiteError> {
    serde_json::from_str(&read(path)?).map_err(|e| SiteError::Format { path: path.into(), message: e.to_string() })
}

/// Contents of `site.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SiteConfig {
    pub site_id: String,
    pub homepage_id: String,
    /// Extra CSS selectors for clickable elements; their target comes from
    /// `data-href` (or `href`).
    #[serde(default)]
    pub selectors: Vec<String>,
    /// Stoplist file relative to the site directory.
    #[serde(default)]
    pub stoplist: Option<String>,
}

/// Non-fatal problems found while parsing.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Warning {
    pub page_id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedPage {
    pub page: WebPage,
    pub warnings: Vec<Warning>,
}

/// Internal link target: the file stem of a relative href, or `None` for
/// external, fragment-only and script links.
pub fn link_target(href: &str) -> Option<String> {
    let href = href.trim();
    let lower = href.to_ascii_lowercase();
    if href.is_empty()
        || href.starts_with('#')
        || href.starts_with("//")
        || lower.contains("://")
        || ["mailto:", "javascript:", "tel:", "data:"].iter().any(|p| lower.starts_with(p))
    {
        return None;
    }
    let path = href.split(['?', '#']).next().unwrap_or("");
    let last = path.trim_end_matches('/').rsplit('/').next().unwrap_or("");
    let stem = last.rsplit_once('.').map_or(last, |(s, _)| s);
    (!stem.is_empty()).then(|| stem.to_string())
}

fn visible_text(el: ElementRef<'_>) -> String {
    let mut out = String::new();
    collect_text(el, &mut out);
    out.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn collect_text(el: ElementRef<'_>, out: &mut String) {
    for child in el.children() {
        if let Some(t) = child.value().as_text() {
            out.push_str(t);
            out.push(' ');
        } else if let Some(c) = ElementRef::wrap(child) {
            if !matches!(c.value().name(), "script" | "style" | "noscript" | "template") {
                collect_text(c, out);
            }
        }
    }
}

/// Extracts buttons and cleaned words from one HTML page. `asset_exists`
/// reports whether an image path (as written in the page) resolves.
pub fn parse_page(
    html: &str,
    page_id: &str,
    selectors: &[String],
    stoplist: &Stoplist,
    asset_exists: &dyn Fn(&str) -> bool,
) -> Result<ParsedPage, SiteError> {
    if html.trim().is_empty() {
        return Err(SiteError::NoContent(page_id.into()));
    }
    let doc = Html::parse_document(html);
    let mut query = String::from("a[href]");
    for s in selectors {
        Selector::parse(s).map_err(|_| SiteError::Selector(s.clone()))?;
        query.push_str(", ");
        query.push_str(s);
    }
    let clickable = Selector::parse(&query).map_err(|_| SiteError::Selector(query.clone()))?;
    let img = Selector::parse("img").expect("static selector");
    let body = Selector::parse("body").expect("static selector");

    let mut page = WebPage::new(page_id);
    let mut warnings = Vec::new();
    let mut seen = BTreeSet::new();
    for el in doc.select(&clickable) {
        // nested matches (a selector element inside an anchor) count once
        if !seen.insert(el.id()) {
            continue;
        }
        let attr = |n: &str| el.value().attr(n);
        let Some(target) = attr("data-href").or(attr("href")).and_then(link_target) else { continue };
        let image = el.select(&img).next();
        let description = [attr("alt"), attr("aria-label")]
            .into_iter()
            .flatten()
            .map(str::to_string)
            .chain([visible_text(el)])
            .chain(image.and_then(|i| i.value().attr("alt")).map(str::to_string))
            .find(|d| !d.trim().is_empty());
        let mut image_ref = image.and_then(|i| i.value().attr("src")).map(str::to_string);
        if let Some(src) = &image_ref {
            if !asset_exists(src) {
                warnings.push(Warning { page_id: page_id.into(), message: format!("missing image asset `{src}`") });
                image_ref = None;
            }
        }
        let id = format!("{page_id}#{}", page.buttons.len());
        match Button::new(id, description, image_ref, target.as_str()) {
            Some(b) => page.buttons.push(b),
            None => warnings.push(Warning {
                page_id: page_id.into(),
                message: format!("link to `{target}` has neither description nor image"),
            }),
        }
    }
    let text = doc.select(&body).next().map(visible_text).unwrap_or_else(|| visible_text(doc.root_element()));
    let words: Vec<&str> = text.split_whitespace().collect();
    page.word_list = clean_text(&words, stoplist);
    Ok(ParsedPage { page, warnings })
}

/// A loaded snapshot.
#[derive(Debug, Clone)]
pub struct Site {
    pub root: PathBuf,
    pub config: SiteConfig,
    pub stoplist: Stoplist,
    pub graph: NavGraph,
    pub warnings: Vec<Warning>,
}

impl Site {
    pub fn load(root: impl AsRef<Path>) -> Result<Self, SiteError> {
        let root = root.as_ref().to_path_buf();
        let config: SiteConfig = read_json(&root.join("site.json"))?;
        let stoplist = match &config.stoplist {
            Some(p) => Stoplist::parse(&read(&root.join(p))?),
            None => Stoplist::default(),
        };
        let captions: BTreeMap<String, Vec<String>> = {
            let p = root.join("captions.json");
            if p.exists() {
                read_json(&p)?
            } else {
                BTreeMap::new()
            }
        };
        let pages_dir = root.join("pages");
        let mut files: Vec<PathBuf> = fs::read_dir(&pages_dir)
            .map_err(|source| SiteError::Io { path: pages_dir.clone(), source })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|e| e == "html" || e == "htm"))
            .collect();
        files.sort();

        let mut pages = Vec::new();
        let mut warnings = Vec::new();
        for file in files {
            let id = file.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
            let html = read(&file)?;
            let page_dir = file.parent().unwrap_or(&pages_dir).to_path_buf();
            let root_ref = &root;
            let exists = move |src: &str| resolve_asset(root_ref, &page_dir, src).is_some();
            let mut parsed = parse_page(&html, &id, &config.selectors, &stoplist, &exists)?;
            parsed.page.source_path = format!("pages/{}", file.file_name().and_then(|f| f.to_str()).unwrap_or_default());
            parsed.page.captions = captions.get(&id).cloned().unwrap_or_default();
            warnings.extend(parsed.warnings);
            pages.push(parsed.page);
        }
        let graph = NavGraph::build(pages, config.homepage_id.as_str())?;
        if graph.dropped_buttons() > 0 {
            warnings.push(Warning {
                page_id: String::new(),
                message: format!("{} buttons lead outside the snapshot and were dropped", graph.dropped_buttons()),
            });
        }
        Ok(Site { root, config, stoplist, graph, warnings })
    }

    pub fn screenshot_path(&self, page: &WebPage) -> PathBuf {
        self.root.join(&page.screenshot_ref)
    }

    /// Filesystem path of a button image as referenced from `page`.
    pub fn asset_path(&self, page: &WebPage, src: &str) -> Option<PathBuf> {
        resolve_asset(&self.root, &self.root.join("pages"), src).or_else(|| {
            let dir = self.root.join(&page.source_path);
            resolve_asset(&self.root, dir.parent()?, src)
        })
    }
}

/// Resolves an image `src` relative to the page directory, then the site
/// root, then `assets/` by file name.
pub fn resolve_asset(root: &Path, page_dir: &Path, src: &str) -> Option<PathBuf> {
    link_target(src)?;
    let clean = src.split(['?', '#']).next().unwrap_or(src).trim_start_matches('/');
    let name = Path::new(clean).file_name()?;
    let root = lexical_normalize(root);
    [page_dir.join(clean), root.join(clean), root.join("assets").join(name)]
        .into_iter()
        .map(|p| lexical_normalize(&p))
        .find(|p| p.starts_with(&root) && p.is_file())
}

/// Drops `.` and folds `..` without touching the filesystem.
pub fn lexical_normalize(path: &Path) -> PathBuf {
    use std::path::Component;
    let mut out = PathBuf::new();
    for c in path.components() {
        match c {
            Component::CurDir => {}
            Component::ParentDir => {
                if !out.pop() {
                    out.push("..");
                }
            }
            other => out.push(other),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphExport {
    pub homepage_id: PageId,
    pub pages: Vec<WebPage>,
    pub edges: Vec<EdgeExport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeExport {
    pub from: PageId,
    pub to: PageId,
    pub button_index: usize,
}

/// `graph.json` contents.
pub fn export_graph(graph: &NavGraph) -> GraphExport {
    GraphExport {
        homepage_id: graph.homepage().clone(),
        pages: graph.pages().cloned().collect(),
        edges: graph
            .edges()
            .into_iter()
            .map(|e| EdgeExport { from: e.from, to: e.to, button_index: e.button_index })
            .collect(),
    }
}

/// Rebuilds a graph from its export.
pub fn import_graph(export: GraphExport) -> Result<NavGraph, GraphError> {
    NavGraph::build(export.pages, export.homepage_id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(html: &str) -> ParsedPage {
        parse_page(html, "p1", &[], &Stoplist::parse("sign in\ncart"), &|s| s != "missing.png").unwrap()
    }

    #[test]
    fn image_link_takes_alt_text() {
        let p = parse(r#"<a href="p2.html"><img src="sock.png" alt="Courtside Short Crew Socks"></a>"#);
        let b = &p.page.buttons[0];
        assert_eq!(b.description.as_deref(), Some("Courtside Short Crew Socks"));
        assert_eq!(b.image_ref.as_deref(), Some("sock.png"));
        assert_eq!(b.target, "p2");
    }

    #[test]
    fn text_link_has_no_image() {
        let p = parse(r#"<html><body><a href="p3.html">Sale</a></body></html>"#);
        assert_eq!(p.page.buttons.len(), 1);
        assert_eq!(p.page.buttons[0].description.as_deref(), Some("Sale"));
        assert_eq!(p.page.buttons[0].image_ref, None);
        assert_eq!(p.page.word_list, vec!["sale"]);
    }

    #[test]
    fn external_and_script_links_are_not_buttons() {
        let p = parse(
            r##"<p>Nothing here</p><a href="https://x.com/a.html">x</a><a href="#top">top</a>
            <a href="mailto:a@b">m</a><a href="javascript:void(0)">j</a>"##,
        );
        assert!(p.page.buttons.is_empty());
    }

    #[test]
    fn missing_asset_warns_and_keeps_button() {
        let p = parse(r#"<a href="p2.html"><img src="missing.png" alt="Blanket"></a><a href="p4.html"><img src="missing.png"></a>"#);
        assert_eq!(p.page.buttons.len(), 1);
        assert_eq!(p.page.buttons[0].image_ref, None);
        assert_eq!(p.warnings.len(), 3);
    }

    #[test]
    fn words_are_cleaned() {
        let p = parse("<body><script>var x = 1;</script><h1>Sign in</h1><p>Grey Socks !!! $12</p><a href='cart.html'>Cart</a></body>");
        assert_eq!(p.page.word_list, vec!["grey", "socks", "$12"]);
    }

    #[test]
    fn selector_elements_with_data_href() {
        let sel = vec!["div.tile".to_string()];
        let html = r#"<div class="tile" data-href="/products/p9.html?ref=1">Wool Hat</div><a href="p2.html">Two</a>"#;
        let p = parse_page(html, "p1", &sel, &Stoplist::default(), &|_| true).unwrap();
        let targets: Vec<&str> = p.page.buttons.iter().map(|b| b.target.as_str()).collect();
        assert_eq!(targets, ["p9", "p2"]);
        assert!(parse_page(html, "p1", &["[[".to_string()], &Stoplist::default(), &|_| true).is_err());
    }

    #[test]
    fn empty_document_is_an_error() {
        assert!(matches!(
            parse_page("  ", "p", &[], &Stoplist::default(), &|_| true),
            Err(SiteError::NoContent(_))
        ));
        let p = parse("<p>plain</p>");
        assert!(p.page.buttons.is_empty());
    }

    #[test]
    fn link_targets() {
        assert_eq!(link_target("../pages/p2.html#x").as_deref(), Some("p2"));
        assert_eq!(link_target("p2").as_deref(), Some("p2"));
        assert_eq!(link_target("HTTP://a/b.html"), None);
        assert_eq!(link_target(""), None);
    }
}
