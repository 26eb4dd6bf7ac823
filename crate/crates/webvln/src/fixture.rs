//! Synthetic shop site used by tests, the acceptance suite and demos.
//!
//! Thirty pages: a homepage, an about page, four category pages and six
//! product pages per category. Every product is two clicks from the
//! homepage. The snapshot comes with screenshots, product images,
//! captions, a stoplist and canned QA responses for the mock generator.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::Result;
use webvln_core::vision::Image;

use webvln_core::datagen::{generate_records, sample_paths, GenerationOptions, GenerationReport, StoredCaptions};

use crate::images::save_png;
use crate::llm::{MockGenerator, MATCH_PREFIX};
use crate::site::Site;

pub const SITE_ID: &str = "fixture-shop";
pub const PAGE_COUNT: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Product {
    pub slug: &'static str,
    pub name: &'static str,
    pub color: &'static str,
    pub material: &'static str,
    pub price: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Category {
    pub slug: &'static str,
    pub title: &'static str,
    pub shade: [f32; 3],
    pub products: [Product; 6],
}

const fn p(slug: &'static str, name: &'static str, color: &'static str, material: &'static str, price: u32) -> Product {
    Product { slug, name, color, material, price }
}

pub const CATALOG: [Category; 4] = [
    Category {
        slug: "clothing",
        title: "Clothing",
        shade: [0.85, 0.80, 0.70],
        products: [
            p("courtside-socks", "Courtside Crew Socks", "grey", "cotton", 12),
            p("harbor-hat", "Harbor Knit Hat", "blue", "wool", 24),
            p("meadow-scarf", "Meadow Long Scarf", "green", "wool", 31),
            p("summit-gloves", "Summit Trail Gloves", "black", "wool", 19),
            p("breeze-shirt", "Breeze Linen Shirt", "white", "cotton", 45),
            p("canyon-jacket", "Canyon Field Jacket", "brown", "cotton", 89),
        ],
    },
    Category {
        slug: "home",
        title: "Home Goods",
        shade: [0.70, 0.80, 0.85],
        products: [
            p("cozy-blanket", "Cozy Throw Blanket", "red", "wool", 58),
            p("cloud-pillow", "Cloud Square Pillow", "white", "cotton", 22),
            p("sunrise-mug", "Sunrise Coffee Mug", "yellow", "ceramic", 9),
            p("amber-candle", "Amber Glow Candle", "brown", "wood", 15),
            p("reading-lamp", "Nordic Reading Lamp", "black", "steel", 64),
            p("spa-towel", "Spa Bath Towel", "blue", "cotton", 18),
        ],
    },
    Category {
        slug: "toys",
        title: "Toys",
        shade: [0.90, 0.75, 0.80],
        products: [
            p("bouncy-ball", "Bouncy Play Ball", "red", "plastic", 5),
            p("forest-puzzle", "Forest Jigsaw Puzzle", "green", "wood", 21),
            p("dragon-kite", "Dragon Sky Kite", "yellow", "plastic", 27),
            p("tin-robot", "Tin Walking Robot", "grey", "steel", 36),
            p("stacking-blocks", "Stacking Color Blocks", "blue", "wood", 14),
            p("plush-cat", "Plush Sleepy Cat", "white", "cotton", 17),
        ],
    },
    Category {
        slug: "kitchen",
        title: "Kitchen",
        shade: [0.75, 0.85, 0.72],
        products: [
            p("whistle-kettle", "Whistle Tea Kettle", "red", "steel", 42),
            p("cast-pan", "Cast Iron Pan", "black", "steel", 55),
            p("olive-spoon", "Olive Serving Spoon", "brown", "wood", 8),
            p("ramen-bowl", "Ramen Noodle Bowl", "white", "ceramic", 13),
            p("herb-planter", "Herb Window Planter", "green", "ceramic", 26),
            p("citrus-press", "Citrus Hand Press", "yellow", "steel", 33),
        ],
    },
];

pub const STOPLIST: &str = "# boilerplate removed from page text\nsign in\ncart\nprivacy policy\nfree shipping\nsubscribe\n";

fn color_rgb(name: &str) -> [f32; 3] {
    match name {
        "grey" => [0.5, 0.5, 0.5],
        "blue" => [0.15, 0.3, 0.85],
        "green" => [0.2, 0.7, 0.25],
        "black" => [0.05, 0.05, 0.05],
        "white" => [0.97, 0.97, 0.97],
        "brown" => [0.5, 0.3, 0.12],
        "red" => [0.85, 0.12, 0.1],
        "yellow" => [0.95, 0.85, 0.15],
        _ => [0.6, 0.4, 0.6],
    }
}

/// The three canned QA pairs for a product, in the generator's format.
pub fn qa_pairs(prod: &Product) -> [(String, String); 3] {
    let name = prod.name.to_lowercase();
    [
        (format!("How much does the {name} cost?"), format!("${}", prod.price)),
        (format!("What material is the {name} made of?"), prod.material.to_string()),
        (format!("What color is the {name}?"), prod.color.to_string()),
    ]
}

pub fn caption(prod: &Product) -> String {
    format!("a {} {} {} on a plain background", prod.color, prod.material, prod.name.to_lowercase())
}

fn page(title: &str, body: &str) -> String {
    format!(
        "<!DOCTYPE html>\n<html>\n<head><title>{title}</title><style>body {{ font-family: sans-serif; }}</style></head>\n<body>\n\
<header><a href=\"about.html\">Sign in</a> <span>Cart</span></header>\n{body}\n\
<footer><p>Free shipping on orders over $50. Privacy policy.</p><script>var tracking = \"ignored\";</script></footer>\n</body>\n</html>\n"
    )
}

/// Screenshot: category shade background with a product-coloured block.
fn screenshot(shade: [f32; 3], accent: Option<[f32; 3]>, seed: usize) -> Image {
    let size = 112;
    let mut img = Image::solid(size, size, shade);
    for y in 0..12 {
        for x in 0..size {
            img.set_pixel(x, y, [0.2, 0.2, 0.25]);
        }
    }
    if let Some(c) = accent {
        let x0 = 16 + (seed * 7) % 40;
        for y in 30..86 {
            for x in x0..x0 + 48 {
                img.set_pixel(x, y, c);
            }
        }
    }
    img
}

/// Writes the fixture snapshot into `dir` (which is created if needed).
pub fn write_fixture_site(dir: &Path) -> Result<()> {
    for sub in ["pages", "assets", "screenshots", "mock"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    fs::write(
        dir.join("site.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "site_id": SITE_ID,
            "homepage_id": "index",
            "selectors": ["button[data-href]"],
            "stoplist": "stoplist.txt",
        }))? + "\n",
    )?;
    fs::write(dir.join("stoplist.txt"), STOPLIST)?;
    save_png(&dir.join("assets/logo.png"), &Image::solid(8, 8, [0.2, 0.2, 0.25]))?;

    let mut home = String::from("<h1>Welcome to the Fixture Shop</h1>\n<nav>\n");
    for c in &CATALOG {
        let _ = writeln!(home, "  <a href=\"{}.html\">{}</a>", c.slug, c.title);
    }
    home.push_str("</nav>\n<p>Everyday goods, small prices.</p>\n<a href=\"about.html\">About us</a>");
    fs::write(dir.join("pages/index.html"), page("Fixture Shop", &home))?;
    save_png(&dir.join("screenshots/index.png"), &screenshot([0.95, 0.95, 0.9], None, 0))?;

    let about = "<h1>About</h1>\n<p>A small shop for testing navigation agents.</p>\n<button data-href=\"index.html\">Back to shop</button>";
    fs::write(dir.join("pages/about.html"), page("About", about))?;
    save_png(&dir.join("screenshots/about.png"), &screenshot([0.9, 0.9, 0.9], None, 1))?;

    let mut captions = serde_json::Map::new();
    for (ci, c) in CATALOG.iter().enumerate() {
        let mut body = format!("<a href=\"index.html\"><img src=\"../assets/logo.png\"></a>\n<h1>{}</h1>\n<ul>\n", c.title);
        for prod in &c.products {
            let _ = writeln!(
                body,
                "  <li><a href=\"{}.html\"><img src=\"../assets/{}.png\" alt=\"{}\"></a> ${}</li>",
                prod.slug, prod.slug, prod.name, prod.price
            );
        }
        body.push_str("</ul>");
        fs::write(dir.join(format!("pages/{}.html", c.slug)), page(c.title, &body))?;
        save_png(&dir.join(format!("screenshots/{}.png", c.slug)), &screenshot(c.shade, None, ci))?;

        for (pi, prod) in c.products.iter().enumerate() {
            let next = &c.products[(pi + 1) % c.products.len()];
            let body = format!(
                "<a href=\"index.html\"><img src=\"../assets/logo.png\"></a>\n\
<nav><a href=\"{cat}.html\">{title}</a></nav>\n\
<h1>{name}</h1>\n<img src=\"../assets/{slug}.png\" alt=\"{name}\">\n\
<p>Price: ${price}</p>\n<p>Colour: {color}</p>\n<p>Material: {material}</p>\n\
<p>You may also like <a href=\"{next_slug}.html\">{next_name}</a></p>",
                cat = c.slug,
                title = c.title,
                name = prod.name,
                slug = prod.slug,
                price = prod.price,
                color = prod.color,
                material = prod.material,
                next_slug = next.slug,
                next_name = next.name,
            );
            fs::write(dir.join(format!("pages/{}.html", prod.slug)), page(prod.name, &body))?;
            save_png(&dir.join(format!("assets/{}.png", prod.slug)), &Image::solid(8, 8, color_rgb(prod.color)))?;
            save_png(
                &dir.join(format!("screenshots/{}.png", prod.slug)),
                &screenshot(c.shade, Some(color_rgb(prod.color)), pi),
            )?;
            captions.insert(prod.slug.into(), serde_json::json!([caption(prod)]));

            let mut response = format!("{MATCH_PREFIX} {}\n", prod.name.to_lowercase());
            for (k, (q, a)) in qa_pairs(prod).iter().enumerate() {
                let _ = writeln!(response, "Q{}: {q}\nA{}: {a}", k + 1, k + 1);
            }
            fs::write(dir.join(format!("mock/{}.txt", prod.slug)), response)?;
        }
    }
    fs::write(dir.join("captions.json"), serde_json::to_string_pretty(&captions)? + "\n")?;
    Ok(())
}

/// Records for every product page, generated with the canned responses
/// and stored captions; splits are assigned with `seed`.
pub fn dataset(site: &Site, seed: u64) -> Result<GenerationReport> {
    let paths = sample_paths(&site.graph, usize::MAX, seed)?;
    let mut llm = MockGenerator::from_dir(&site.root.join("mock"))?;
    let mut opts = GenerationOptions::new(site.config.site_id.clone());
    opts.stoplist = site.stoplist.clone();
    opts.seed = seed;
    Ok(generate_records(&site.graph, &paths, &mut llm, &mut StoredCaptions, &opts)?)
}

pub fn products() -> impl Iterator<Item = (&'static Category, &'static Product)> {
    CATALOG.iter().flat_map(|c| c.products.iter().map(move |p| (c, p)))
}
