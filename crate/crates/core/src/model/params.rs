use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::{Matrix, Real};
use crate::vision::CHANNELS;

/// Model sizes. Layer counts of the navigation (2) and answering (6) stacks
/// are the reference depths; the rest are desk-scale choices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub dim: usize,
    pub heads: usize,
    pub ffn_dim: usize,
    pub n_init: usize,
    pub n_nav: usize,
    pub n_ans: usize,
    /// Screenshot patch grid side (7 → 49 patches of 32×32 pixels).
    pub grid: usize,
    pub max_positions: usize,
    pub vocab_size: usize,
}

impl ModelConfig {
    pub fn new(vocab_size: usize) -> Self {
        ModelConfig {
            dim: 64,
            heads: 4,
            ffn_dim: 256,
            n_init: 2,
            n_nav: 2,
            n_ans: 6,
            grid: 7,
            max_positions: 96,
            vocab_size,
        }
    }

    /// Small configuration for gradient checks.
    pub fn tiny(vocab_size: usize) -> Self {
        ModelConfig {
            dim: 16,
            heads: 2,
            ffn_dim: 32,
            n_init: 1,
            n_nav: 2,
            n_ans: 2,
            grid: 2,
            max_positions: 32,
            vocab_size,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.dim == 0 || self.heads == 0 || !self.dim.is_multiple_of(self.heads) {
            return Err(alloc::format!("dim {} must be a positive multiple of heads {}", self.dim, self.heads));
        }
        if self.grid == 0 || self.max_positions < 4 || self.vocab_size < super::RESERVED.len() {
            return Err("grid, max_positions or vocab_size too small".into());
        }
        if self.ffn_dim == 0 {
            return Err("ffn_dim must be positive".into());
        }
        Ok(())
    }
}

/// Named parameter tensors, enumerable as one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<F> {
    names: Vec<String>,
    tensors: Vec<Matrix<F>>,
}

impl<F: Real> ParamStore<F> {
    pub fn tensors(&self) -> &[Matrix<F>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Matrix<F>] {
        &mut self.tensors
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Matrix::len).sum()
    }

    pub fn flat(&self) -> Vec<F> {
        self.tensors.iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn set_flat(&mut self, flat: &[F]) -> Result<(), String> {
        if flat.len() != self.num_scalars() {
            return Err(alloc::format!("expected {} parameters, got {}", self.num_scalars(), flat.len()));
        }
        let mut off = 0;
        for t in &mut self.tensors {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Tensor index and offset of flat coordinate `k`.
    pub fn locate(&self, mut k: usize) -> Option<(usize, usize)> {
        for (i, t) in self.tensors.iter().enumerate() {
            if k < t.len() {
                return Some((i, k));
            }
            k -= t.len();
        }
        None
    }

    pub fn cast<G: Real>(&self) -> ParamStore<G> {
        ParamStore { names: self.names.clone(), tensors: self.tensors.iter().map(Matrix::cast).collect() }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(Matrix::is_finite)
    }

    fn add(&mut self, name: String, rows: usize, cols: usize) -> usize {
        self.names.push(name);
        self.tensors.push(Matrix::zeros(rows, cols));
        self.tensors.len() - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Linear {
    pub w: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Norm {
    pub gain: usize,
    pub bias: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub o: Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct EncoderBlock {
    pub attn: Attention,
    pub norm1: Norm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub norm2: Norm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct DecoderBlock {
    pub self_attn: Attention,
    pub norm1: Norm,
    pub cross: Attention,
    pub norm2: Norm,
    pub ff1: Linear,
    pub ff2: Linear,
    pub norm3: Norm,
}

/// Indices of every named tensor in the [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Layout {
    pub tok_emb: usize,
    pub pos_emb: usize,
    pub emb_norm: Norm,
    pub init: Vec<EncoderBlock>,
    pub patch: Linear,
    pub patch_pos: usize,
    pub button: Linear,
    pub nav: Vec<EncoderBlock>,
    pub action: usize,
    pub dec: Vec<DecoderBlock>,
    pub out: Linear,
}

struct Builder<F> {
    store: ParamStore<F>,
    init: Vec<Init>,
}

#[derive(Clone, Copy)]
enum Init {
    Zero,
    One,
    Xavier,
    Embedding,
}

impl<F: Real> Builder<F> {
    fn tensor(&mut self, name: String, rows: usize, cols: usize, init: Init) -> usize {
        self.init.push(init);
        self.store.add(name, rows, cols)
    }

    fn linear(&mut self, name: &str, fan_in: usize, fan_out: usize) -> Linear {
        Linear {
            w: self.tensor(alloc::format!("{name}.weight"), fan_in, fan_out, Init::Xavier),
            b: self.tensor(alloc::format!("{name}.bias"), 1, fan_out, Init::Zero),
        }
    }

    fn norm(&mut self, name: &str, dim: usize) -> Norm {
        Norm {
            gain: self.tensor(alloc::format!("{name}.gain"), 1, dim, Init::One),
            bias: self.tensor(alloc::format!("{name}.bias"), 1, dim, Init::Zero),
        }
    }

    fn attention(&mut self, name: &str, dim: usize) -> Attention {
        Attention {
            q: self.linear(&alloc::format!("{name}.query"), dim, dim),
            k: self.linear(&alloc::format!("{name}.key"), dim, dim),
            v: self.linear(&alloc::format!("{name}.value"), dim, dim),
            o: self.linear(&alloc::format!("{name}.output"), dim, dim),
        }
    }

    fn encoder(&mut self, name: &str, c: &ModelConfig) -> EncoderBlock {
        EncoderBlock {
            attn: self.attention(&alloc::format!("{name}.attn"), c.dim),
            norm1: self.norm(&alloc::format!("{name}.norm1"), c.dim),
            ff1: self.linear(&alloc::format!("{name}.ff1"), c.dim, c.ffn_dim),
            ff2: self.linear(&alloc::format!("{name}.ff2"), c.ffn_dim, c.dim),
            norm2: self.norm(&alloc::format!("{name}.norm2"), c.dim),
        }
    }

    fn decoder(&mut self, name: &str, c: &ModelConfig) -> DecoderBlock {
        DecoderBlock {
            self_attn: self.attention(&alloc::format!("{name}.self_attn"), c.dim),
            norm1: self.norm(&alloc::format!("{name}.norm1"), c.dim),
            cross: self.attention(&alloc::format!("{name}.cross_attn"), c.dim),
            norm2: self.norm(&alloc::format!("{name}.norm2"), c.dim),
            ff1: self.linear(&alloc::format!("{name}.ff1"), c.dim, c.ffn_dim),
            ff2: self.linear(&alloc::format!("{name}.ff2"), c.ffn_dim, c.dim),
            norm3: self.norm(&alloc::format!("{name}.norm3"), c.dim),
        }
    }
}

/// Allocates all tensors (zero-filled) and records their initializers.
pub(crate) fn layout<F: Real>(c: &ModelConfig) -> (Layout, ParamStore<F>, Vec<InitKind>) {
    let mut b = Builder { store: ParamStore { names: Vec::new(), tensors: Vec::new() }, init: Vec::new() };
    let tok_emb = b.tensor("token_embedding".into(), c.vocab_size, c.dim, Init::Embedding);
    let pos_emb = b.tensor("position_embedding".into(), c.max_positions, c.dim, Init::Embedding);
    let emb_norm = b.norm("embedding_norm", c.dim);
    let init = (0..c.n_init).map(|i| b.encoder(&alloc::format!("init.{i}"), c)).collect();
    let patch = b.linear("patch_projection", CHANNELS, c.dim);
    let patch_pos = b.tensor("patch_position".into(), c.grid * c.grid, c.dim, Init::Embedding);
    let button = b.linear("button_projection", 2 * c.dim, c.dim);
    let nav = (0..c.n_nav).map(|i| b.encoder(&alloc::format!("nav.{i}"), c)).collect();
    let action = b.tensor("action_projection".into(), c.dim, c.dim, Init::Xavier);
    let dec = (0..c.n_ans).map(|i| b.decoder(&alloc::format!("answer.{i}"), c)).collect();
    let out = b.linear("vocab_head", c.dim, c.vocab_size);
    let kinds = b.init.iter().map(|&i| InitKind(i)).collect();
    (
        Layout { tok_emb, pos_emb, emb_norm, init, patch, patch_pos, button, nav, action, dec, out },
        b.store,
        kinds,
    )
}

#[derive(Clone, Copy)]
pub(crate) struct InitKind(Init);

pub(crate) fn initialize<F: Real, R: Rng>(store: &mut ParamStore<F>, kinds: &[InitKind], rng: &mut R) {
    for (t, kind) in store.tensors.iter_mut().zip(kinds) {
        let (rows, cols) = t.shape();
        match kind.0 {
            Init::Zero => {}
            Init::One => t.data_mut().iter_mut().for_each(|x| *x = F::one()),
            Init::Xavier => {
                let a = Float::sqrt(6.0 / (rows + cols) as f64);
                t.data_mut().iter_mut().for_each(|x| *x = F::of(rng.gen_range(-a..a)));
            }
            Init::Embedding => {
                t.data_mut().iter_mut().for_each(|x| *x = F::of(rng.gen_range(-0.1..0.1)));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_round_trip_and_locate() {
        let c = ModelConfig::tiny(10);
        let (_, mut store, _) = layout::<f64>(&c);
        let n = store.num_scalars();
        let flat: Vec<f64> = (0..n).map(|i| i as f64).collect();
        store.set_flat(&flat).unwrap();
        assert_eq!(store.flat(), flat);
        let (t, off) = store.locate(n - 1).unwrap();
        assert_eq!(t, store.tensors().len() - 1);
        assert_eq!(off, store.tensors()[t].len() - 1);
        assert!(store.locate(n).is_none());
        assert!(store.set_flat(&flat[1..]).is_err());
    }

    #[test]
    fn layer_counts_follow_config() {
        let c = ModelConfig::new(50);
        let (l, store, _) = layout::<f32>(&c);
        assert_eq!(l.nav.len(), 2);
        assert_eq!(l.dec.len(), 6);
        assert_eq!(store.tensors()[l.button.w].shape(), (128, 64));
        assert!(store.index_of("vocab_head.weight").is_some());
        assert!(c.validate().is_ok());
        assert!(ModelConfig { heads: 5, ..c }.validate().is_err());
    }
}
