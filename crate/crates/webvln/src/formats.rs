//! On-disk formats: JSONL logs, model checkpoints, vocab files and
//! taxonomies.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use webvln_core::metrics::{SynsetSpec, Taxonomy};
use webvln_core::model::{ModelConfig, Vocab, WebVlnNet};

/// Reads one JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Appends one line; the file is created if needed.
pub fn append_jsonl<T: Serialize>(path: &Path, item: &T) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut line = serde_json::to_vec(item)?;
    line.push(b'\n');
    f.write_all(&line)?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&s).with_context(|| format!("parsing {}", path.display()))
}

pub const CHECKPOINT_MAGIC: &[u8; 9] = b"WVLNCKPT\n";

#[derive(Serialize, Deserialize)]
struct CheckpointHeader {
    config: ModelConfig,
    vocab: Vec<String>,
    params: usize,
}

/// Layout: magic, u32 LE header length, JSON header `{config, vocab, params}`,
/// then `params` little-endian f32 values in parameter order.
pub fn save_checkpoint(path: &Path, net: &WebVlnNet<f32>) -> Result<()> {
    let flat = net.params().flat();
    let header = serde_json::to_vec(&CheckpointHeader {
        config: *net.config(),
        vocab: net.vocab().tokens().to_vec(),
        params: flat.len(),
    })?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&u32::try_from(header.len())?.to_le_bytes())?;
    w.write_all(&header)?;
    for x in flat {
        w.write_all(&x.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<WebVlnNet<f32>> {
    let mut bytes = Vec::new();
    File::open(path)
        .with_context(|| format!("opening {}", path.display()))?
        .read_to_end(&mut bytes)?;
    let rest = bytes.strip_prefix(CHECKPOINT_MAGIC.as_slice()).context("not a checkpoint file")?;
    if rest.len() < 4 {
        bail!("truncated checkpoint");
    }
    let hlen = u32::from_le_bytes(rest[..4].try_into()?) as usize;
    let rest = &rest[4..];
    if rest.len() < hlen {
        bail!("truncated checkpoint header");
    }
    let header: CheckpointHeader = serde_json::from_slice(&rest[..hlen])?;
    let body = &rest[hlen..];
    if body.len() != header.params * 4 {
        bail!("checkpoint has {} parameter bytes, expected {}", body.len(), header.params * 4);
    }
    let flat: Vec<f32> = body.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
    let vocab = Vocab::from_tokens(header.vocab).context("checkpoint vocab is malformed")?;
    Ok(WebVlnNet::from_flat(header.config, vocab, &flat)?)
}

/// One token per line.
pub fn write_vocab(path: &Path, vocab: &Vocab) -> Result<()> {
    let mut s = vocab.tokens().join("\n");
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn read_vocab(path: &Path) -> Result<Vocab> {
    let s = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Vocab::from_tokens(s.lines().filter(|l| !l.is_empty()).map(str::to_string)).context("vocab file must start with the reserved tokens")
}

/// JSON taxonomy: `{"synset": {"lemmas": [...], "parents": [...]}, ...}`.
pub fn parse_taxonomy_json(source: &str) -> Result<Taxonomy> {
    let specs: BTreeMap<String, SynsetSpec> = serde_json::from_str(source)?;
    Ok(Taxonomy::new(specs)?)
}

/// WordNet `data.noun` format: offset, lex file, type, word count (hex),
/// word/lex-id pairs, pointer count, then pointers. Hypernym (`@`) and
/// instance hypernym (`@i`) pointers become parents. License header lines
/// (leading spaces) are skipped.
pub fn parse_wordnet_nouns(source: &str) -> Result<Taxonomy> {
    let mut specs = BTreeMap::new();
    for (n, line) in source.lines().enumerate() {
        if line.starts_with(' ') || line.trim().is_empty() {
            continue;
        }
        let bad = |m: &str| anyhow::anyhow!("data.noun line {}: {m}", n + 1);
        let fields: Vec<&str> = line.split('|').next().unwrap_or("").split_whitespace().collect();
        if fields.len() < 4 {
            return Err(bad("too few fields"));
        }
        let offset = fields[0];
        let words = usize::from_str_radix(fields[3], 16).map_err(|_| bad("bad word count"))?;
        let mut i = 4;
        let mut lemmas = Vec::with_capacity(words);
        for _ in 0..words {
            let w = fields.get(i).ok_or_else(|| bad("missing word"))?;
            lemmas.push(w.replace('_', " ").to_lowercase());
            i += 2;
        }
        let ptrs: usize = fields.get(i).ok_or_else(|| bad("missing pointer count"))?.parse().map_err(|_| bad("bad pointer count"))?;
        i += 1;
        let mut parents = Vec::new();
        for _ in 0..ptrs {
            let p = fields.get(i..i + 4).ok_or_else(|| bad("truncated pointer"))?;
            if (p[0] == "@" || p[0] == "@i") && p[2] == "n" {
                parents.push(p[1].to_string());
            }
            i += 4;
        }
        specs.insert(offset.to_string(), SynsetSpec { lemmas, parents });
    }
    Ok(Taxonomy::new(specs)?)
}

/// Small built-in noun hierarchy covering the fixture vocabulary.
pub const DEFAULT_TAXONOMY: &str = include_str!("../assets/taxonomy.json");

pub fn default_taxonomy() -> Taxonomy {
    parse_taxonomy_json(DEFAULT_TAXONOMY).expect("bundled taxonomy is valid")
}

/// Loads `.json` as the JSON format and anything else as WordNet data;
/// `None` gives the bundled taxonomy.
pub fn load_taxonomy(path: Option<&Path>) -> Result<Taxonomy> {
    let Some(path) = path else { return Ok(default_taxonomy()) };
    let src = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "json") {
        parse_taxonomy_json(&src)
    } else {
        parse_wordnet_nouns(&src)
    }
}
