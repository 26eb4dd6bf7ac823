use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::graph::{Button, NavGraph, PageId, WebPage};
use crate::sim::EpisodeRecord;

use super::{ModelError, Vocab};

/// Raw inputs of one button: description token ids (empty for ∅) and the
/// mean colour of its image (`None` for ∅).
#[derive(Debug, Clone, PartialEq)]
pub struct ButtonFeatures {
    pub description_ids: Vec<usize>,
    pub image: Option<[f32; 3]>,
}

impl ButtonFeatures {
    pub fn new(button: &Button, vocab: &Vocab, image: Option<[f32; 3]>) -> Self {
        ButtonFeatures {
            description_ids: button.description.as_deref().map(|d| vocab.encode(d)).unwrap_or_default(),
            image,
        }
    }
}

/// Screenshot patch colours (grid², row-major) and button inputs in
/// document order.
#[derive(Debug, Clone, PartialEq)]
pub struct PageFeatures {
    pub patches: Vec<[f32; 3]>,
    pub buttons: Vec<ButtonFeatures>,
}

/// Precomputed model inputs for every page of a site.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SiteFeatures {
    pages: BTreeMap<PageId, PageFeatures>,
}

impl SiteFeatures {
    /// `screenshot` yields the patch colours of a page; `button_image` the
    /// mean colour of a button image, if it has one.
    pub fn build(
        graph: &NavGraph,
        vocab: &Vocab,
        grid: usize,
        mut screenshot: impl FnMut(&WebPage) -> Vec<[f32; 3]>,
        mut button_image: impl FnMut(&Button) -> Option<[f32; 3]>,
    ) -> Result<Self, ModelError> {
        let mut pages = BTreeMap::new();
        for page in graph.pages() {
            let patches = screenshot(page);
            if patches.len() != grid * grid {
                return Err(ModelError::BadFeatures(alloc::format!(
                    "page `{}` has {} patches, expected {}",
                    page.page_id,
                    patches.len(),
                    grid * grid
                )));
            }
            let buttons = page
                .buttons
                .iter()
                .map(|b| {
                    let img = if b.image_ref.is_some() { button_image(b) } else { None };
                    ButtonFeatures::new(b, vocab, img)
                })
                .collect();
            pages.insert(page.page_id.clone(), PageFeatures { patches, buttons });
        }
        Ok(SiteFeatures { pages })
    }

    pub fn insert(&mut self, id: PageId, features: PageFeatures) {
        self.pages.insert(id, features);
    }

    pub fn page(&self, id: &str) -> Result<&PageFeatures, ModelError> {
        self.pages.get(id).ok_or_else(|| ModelError::BadFeatures(alloc::format!("no features for page `{id}`")))
    }
}

/// One teacher-forced navigation step: the page observed and the gold action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepInputs {
    pub page: PageId,
    pub teacher: usize,
}

/// Token ids and teacher actions of one training record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EpisodeInputs {
    pub question_ids: Vec<usize>,
    pub description_ids: Vec<usize>,
    pub steps: Vec<StepInputs>,
    pub answer_ids: Vec<usize>,
}

impl EpisodeInputs {
    /// Teacher actions follow the gold path; the last one is `[EOA]` at the target.
    pub fn from_record(record: &EpisodeRecord, graph: &NavGraph, vocab: &Vocab) -> Result<Self, ModelError> {
        let teachers = record
            .teacher_actions(graph)
            .ok_or_else(|| ModelError::BadFeatures(alloc::format!("record `{}` path is not in the graph", record.record_id)))?;
        Ok(EpisodeInputs {
            question_ids: vocab.encode(&record.question),
            description_ids: vocab.encode(&record.description),
            steps: record
                .path
                .iter()
                .zip(teachers)
                .map(|(p, teacher)| StepInputs { page: p.clone(), teacher })
                .collect(),
            answer_ids: vocab.encode(&record.answer),
        })
    }
}
