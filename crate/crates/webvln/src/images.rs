//! Image decoding and per-site model features.

use std::path::Path;

use anyhow::{Context, Result};
use webvln_core::model::{SiteFeatures, Vocab};
use webvln_core::vision::{screenshot_patches, Image};

use crate::site::Site;

/// Colour used for pages without a screenshot file.
pub const MISSING_SCREENSHOT: [f32; 3] = [0.5, 0.5, 0.5];

pub fn load_image(path: &Path) -> Result<Image> {
    let img = image::open(path).with_context(|| format!("decoding {}", path.display()))?.to_rgb8();
    Ok(Image::from_rgb8(img.width() as usize, img.height() as usize, img.as_raw())?)
}

pub fn save_png(path: &Path, img: &Image) -> Result<()> {
    let mut buf = image::RgbImage::new(img.width() as u32, img.height() as u32);
    for (x, y, px) in buf.enumerate_pixels_mut() {
        let c = img.pixel(x as usize, y as usize);
        *px = image::Rgb(c.map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    buf.save(path).with_context(|| format!("writing {}", path.display()))
}

/// Screenshot patches and button image colours for every page. Pages
/// without a screenshot get a uniform grey and a warning; undecodable
/// files are errors.
pub fn site_features(site: &Site, vocab: &Vocab, grid: usize) -> Result<(SiteFeatures, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut failure = None;
    let mut screens = std::collections::BTreeMap::new();
    for page in site.graph.pages() {
        let path = site.screenshot_path(page);
        let patches = if path.is_file() {
            match load_image(&path) {
                Ok(img) => screenshot_patches(&img, grid),
                Err(e) => {
                    failure.get_or_insert(e);
                    continue;
                }
            }
        } else {
            warnings.push(format!("page `{}` has no screenshot at {}", page.page_id, path.display()));
            vec![MISSING_SCREENSHOT; grid * grid]
        };
        screens.insert(page.page_id.clone(), patches);
    }
    if let Some(e) = failure {
        return Err(e);
    }
    let features = SiteFeatures::build(
        &site.graph,
        vocab,
        grid,
        |p| screens.remove(&p.page_id).unwrap_or_default(),
        |b| {
            let src = b.image_ref.as_deref()?;
            let page = site.graph.pages().find(|p| p.buttons.iter().any(|x| x.button_id == b.button_id))?;
            let path = site.asset_path(page, src)?;
            load_image(&path).ok().map(|i| i.mean_color())
        },
    )?;
    Ok((features, warnings))
}
