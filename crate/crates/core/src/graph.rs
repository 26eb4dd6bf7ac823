//! Website pages, clickable buttons and the directed navigation graph.

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;
use core::borrow::Borrow;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Identifier of a page within one site.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PageId(String);

impl PageId {
    pub fn new(id: impl Into<String>) -> Self {
        PageId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Borrow<str> for PageId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl From<&str> for PageId {
    fn from(s: &str) -> Self {
        PageId(s.to_owned())
    }
}

impl From<String> for PageId {
    fn from(s: String) -> Self {
        PageId(s)
    }
}

impl PartialEq<str> for PageId {
    fn eq(&self, other: &str) -> bool {
        self.0 == other
    }
}

impl PartialEq<&str> for PageId {
    fn eq(&self, other: &&str) -> bool {
        self.0 == *other
    }
}

/// A clickable element: description `d` and/or image `e`, leading to a page.
///
/// A missing description or image is `None`; at least one is present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Button {
    pub button_id: String,
    pub description: Option<String>,
    pub image_ref: Option<String>,
    pub target: PageId,
}

impl Button {
    /// Returns `None` when both description and image are absent.
    /// Blank descriptions count as absent.
    pub fn new(
        button_id: impl Into<String>,
        description: Option<String>,
        image_ref: Option<String>,
        target: impl Into<PageId>,
    ) -> Option<Self> {
        let description = description
            .map(|d| d.split_whitespace().collect::<Vec<_>>().join(" "))
            .filter(|d| !d.is_empty());
        let image_ref = image_ref.filter(|i| !i.trim().is_empty());
        if description.is_none() && image_ref.is_none() {
            return None;
        }
        Some(Button {
            button_id: button_id.into(),
            description,
            image_ref,
            target: target.into(),
        })
    }

    /// Description, or the image file stem when only an image is present.
    pub fn label(&self) -> String {
        match (&self.description, &self.image_ref) {
            (Some(d), _) => d.clone(),
            (None, Some(img)) => image_stem(img).to_owned(),
            (None, None) => String::new(),
        }
    }
}

/// `assets/grey-socks.png` → `grey-socks`.
pub fn image_stem(path: &str) -> &str {
    let name = path.rsplit(['/', '\\']).next().unwrap_or(path);
    match name.rfind('.') {
        Some(0) | None => name,
        Some(i) => &name[..i],
    }
}

/// One webpage: screenshot, buttons in document order and cleaned text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WebPage {
    pub page_id: PageId,
    pub source_path: String,
    pub screenshot_ref: String,
    pub buttons: Vec<Button>,
    pub word_list: Vec<String>,
    #[serde(default)]
    pub captions: Vec<String>,
}

impl WebPage {
    pub fn new(page_id: impl Into<PageId>) -> Self {
        let page_id = page_id.into();
        WebPage {
            screenshot_ref: alloc::format!("screenshots/{page_id}.png"),
            source_path: alloc::format!("pages/{page_id}.html"),
            page_id,
            buttons: Vec::new(),
            word_list: Vec::new(),
            captions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum GraphError {
    #[error("homepage `{0}` is not among the pages")]
    MissingHomepage(PageId),
    #[error("page id `{0}` appears more than once")]
    DuplicatePageId(PageId),
    #[error("unknown page id `{0}`")]
    UnknownPageId(String),
}

/// Immutable directed graph of pages; each button is one edge.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NavGraph {
    pages: BTreeMap<PageId, WebPage>,
    homepage: PageId,
    #[serde(default)]
    dropped_buttons: usize,
}

/// A directed edge `from --[button_index]--> to`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: PageId,
    pub to: PageId,
    pub button_index: usize,
}

impl NavGraph {
    /// Validates page ids and drops buttons whose target is outside the set.
    pub fn build(pages: Vec<WebPage>, homepage: impl Into<PageId>) -> Result<Self, GraphError> {
        let homepage = homepage.into();
        let mut map = BTreeMap::new();
        for page in pages {
            if map.contains_key(&page.page_id) {
                return Err(GraphError::DuplicatePageId(page.page_id));
            }
            map.insert(page.page_id.clone(), page);
        }
        if !map.contains_key(&homepage) {
            return Err(GraphError::MissingHomepage(homepage));
        }
        let ids: BTreeSet<PageId> = map.keys().cloned().collect();
        let mut dropped = 0;
        for page in map.values_mut() {
            let before = page.buttons.len();
            page.buttons.retain(|b| ids.contains(&b.target));
            dropped += before - page.buttons.len();
        }
        Ok(NavGraph {
            pages: map,
            homepage,
            dropped_buttons: dropped,
        })
    }

    pub fn homepage(&self) -> &PageId {
        &self.homepage
    }

    pub fn page(&self, id: &str) -> Option<&WebPage> {
        self.pages.get(id)
    }

    pub fn require(&self, id: &str) -> Result<&WebPage, GraphError> {
        self.pages
            .get(id)
            .ok_or_else(|| GraphError::UnknownPageId(id.to_owned()))
    }

    pub fn pages(&self) -> impl Iterator<Item = &WebPage> {
        self.pages.values()
    }

    pub fn page_ids(&self) -> impl Iterator<Item = &PageId> {
        self.pages.keys()
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.pages.contains_key(id)
    }

    /// Buttons dropped at build time because they left the site.
    pub fn dropped_buttons(&self) -> usize {
        self.dropped_buttons
    }

    pub fn edge_count(&self) -> usize {
        self.pages.values().map(|p| p.buttons.len()).sum()
    }

    pub fn edges(&self) -> Vec<Edge> {
        self.pages
            .values()
            .flat_map(|p| {
                p.buttons.iter().enumerate().map(move |(i, b)| Edge {
                    from: p.page_id.clone(),
                    to: b.target.clone(),
                    button_index: i,
                })
            })
            .collect()
    }

    /// First button (document order) on `from` that leads to `to`.
    pub fn button_index(&self, from: &str, to: &str) -> Option<usize> {
        self.pages
            .get(from)?
            .buttons
            .iter()
            .position(|b| b.target == *to)
    }

    pub fn has_edge(&self, from: &str, to: &str) -> bool {
        self.button_index(from, to).is_some()
    }

    /// Minimum-transition page sequence `[from, …, to]`.
    ///
    /// Among equally short paths the one with the lexicographically smallest
    /// sequence of button indices wins. `None` if `to` is unreachable.
    pub fn shortest_path(&self, from: &str, to: &str) -> Result<Option<Vec<PageId>>, GraphError> {
        self.require(from)?;
        self.require(to)?;
        let mut parent: BTreeMap<&str, &str> = BTreeMap::new();
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut queue = VecDeque::new();
        seen.insert(from);
        queue.push_back(from);
        // BFS expands pages in lexicographic order of their discovering
        // button sequences, so first discovery is the tie-break winner.
        while let Some(cur) = queue.pop_front() {
            if cur == to {
                break;
            }
            for b in &self.pages[cur].buttons {
                let next = b.target.as_str();
                if seen.insert(next) {
                    parent.insert(next, cur);
                    queue.push_back(next);
                }
            }
        }
        if !seen.contains(to) {
            return Ok(None);
        }
        let mut path = alloc::vec![PageId::from(to)];
        let mut cur = to;
        while cur != from {
            cur = parent[cur];
            path.push(PageId::from(cur));
        }
        path.reverse();
        Ok(Some(path))
    }

    /// Transition count of every page reachable from `from`.
    pub fn distances_from(&self, from: &str) -> Result<BTreeMap<PageId, usize>, GraphError> {
        self.require(from)?;
        let mut dist = BTreeMap::new();
        let mut queue = VecDeque::new();
        dist.insert(PageId::from(from), 0usize);
        queue.push_back(PageId::from(from));
        while let Some(cur) = queue.pop_front() {
            let d = dist[&cur];
            for b in &self.pages[&cur].buttons {
                if !dist.contains_key(&b.target) {
                    dist.insert(b.target.clone(), d + 1);
                    queue.push_back(b.target.clone());
                }
            }
        }
        Ok(dist)
    }

    /// Button indices realizing a page path, `None` if some hop is not an edge.
    pub fn path_actions(&self, path: &[PageId]) -> Option<Vec<usize>> {
        path.windows(2)
            .map(|w| self.button_index(w[0].as_str(), w[1].as_str()))
            .collect()
    }
}
