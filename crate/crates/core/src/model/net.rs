use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use crate::autograd::{softmax_rows, Mask, Tape, Var};
use crate::tensor::{Matrix, Real};

use super::params::{initialize, layout, Attention, DecoderBlock, EncoderBlock, Layout, Linear, Norm};
use super::{ButtonFeatures, EpisodeInputs, LossError, ModelConfig, PageFeatures, ParamStore, SiteFeatures, Vocab};
use super::{BOS, CLS, EOA, EOS, RESERVED, SEP};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ModelError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("no action candidates")]
    NoCandidates,
    #[error("bad configuration: {0}")]
    BadConfig(String),
    #[error("bad features: {0}")]
    BadFeatures(String),
    #[error(transparent)]
    Loss(#[from] LossError),
}

/// How the sampled-action term of the navigation loss picks its action.
pub enum Sampling<'a> {
    /// Draw `a_t ~ Categorical(p_t)`.
    Draw(&'a mut dyn RngCore),
    /// Reuse previously drawn actions (gradient checks, replays).
    Fixed(&'a [usize]),
}

/// Loss nodes and bookkeeping of one teacher-forced episode.
#[derive(Debug, Clone)]
pub struct EpisodeLoss {
    pub total: Var,
    pub l_nav: f64,
    pub l_ans: f64,
    pub sampled: Vec<usize>,
    pub probs: Vec<Vec<f64>>,
}

/// Inference-time episode state: the current state token and the language
/// tokens, which stay fixed after initialisation.
#[derive(Debug, Clone, PartialEq)]
pub struct Navigation<F> {
    pub state: Matrix<F>,
    pub language: Matrix<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WebVlnNet<F: Real> {
    config: ModelConfig,
    vocab: Vocab,
    layout: Layout,
    params: ParamStore<F>,
}

impl<F: Real> WebVlnNet<F> {
    /// Randomly initialized network.
    pub fn new<R: Rng>(config: ModelConfig, vocab: Vocab, rng: &mut R) -> Result<Self, ModelError> {
        let mut net = Self::zeroed(config, vocab)?;
        let (_, _, kinds) = layout::<F>(&net.config);
        initialize(&mut net.params, &kinds, rng);
        Ok(net)
    }

    /// Every parameter zero.
    pub fn zeroed(config: ModelConfig, vocab: Vocab) -> Result<Self, ModelError> {
        config.validate().map_err(ModelError::BadConfig)?;
        if vocab.len() != config.vocab_size {
            return Err(ModelError::BadConfig(alloc::format!(
                "vocab has {} tokens, config says {}",
                vocab.len(),
                config.vocab_size
            )));
        }
        let (layout, params, _) = layout::<F>(&config);
        Ok(WebVlnNet { config, vocab, layout, params })
    }

    pub fn from_flat(config: ModelConfig, vocab: Vocab, flat: &[F]) -> Result<Self, ModelError> {
        let mut net = Self::zeroed(config, vocab)?;
        net.params.set_flat(flat).map_err(ModelError::BadConfig)?;
        Ok(net)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore<F> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<F> {
        &mut self.params
    }

    pub fn cast<G: Real>(&self) -> WebVlnNet<G> {
        WebVlnNet {
            config: self.config,
            vocab: self.vocab.clone(),
            layout: self.layout.clone(),
            params: self.params.cast(),
        }
    }

    /// Tensor index of the action scoring projection.
    pub fn action_projection(&self) -> usize {
        self.layout.action
    }

    fn linear(&self, t: &mut Tape<'_, F>, l: Linear, x: Var) -> Var {
        let w = t.param(l.w);
        let b = t.param(l.b);
        let h = t.matmul(x, w);
        t.add_row(h, b)
    }

    fn norm(&self, t: &mut Tape<'_, F>, n: Norm, x: Var) -> Var {
        let g = t.param(n.gain);
        let b = t.param(n.bias);
        t.layer_norm(x, g, b)
    }

    fn attention(&self, t: &mut Tape<'_, F>, a: &Attention, xq: Var, xkv: Var, mask: &Mask) -> Var {
        let q = self.linear(t, a.q, xq);
        let k = self.linear(t, a.k, xkv);
        let v = self.linear(t, a.v, xkv);
        let dh = self.config.head_dim();
        let scale = F::one() / F::of(dh as f64).sqrt();
        let mut heads = Vec::with_capacity(self.config.heads);
        for h in 0..self.config.heads {
            let (qh, kh, vh) = if self.config.heads == 1 {
                (q, k, v)
            } else {
                (t.slice_cols(q, h * dh, dh), t.slice_cols(k, h * dh, dh), t.slice_cols(v, h * dh, dh))
            };
            let s = t.matmul_bt(qh, kh);
            let s = t.scale(s, scale);
            let p = t.softmax(s, mask);
            heads.push(t.matmul(p, vh));
        }
        let cat = if heads.len() == 1 { heads[0] } else { t.concat_cols(&heads) };
        self.linear(t, a.o, cat)
    }

    fn feed_forward(&self, t: &mut Tape<'_, F>, ff1: Linear, ff2: Linear, x: Var) -> Var {
        let h = self.linear(t, ff1, x);
        let h = t.gelu(h);
        self.linear(t, ff2, h)
    }

    /// Post-norm block; `extra_kv` rows join the keys/values only.
    fn encoder_block(&self, t: &mut Tape<'_, F>, blk: &EncoderBlock, x: Var, extra_kv: Option<Var>, mask: &Mask) -> Var {
        let kv = match extra_kv {
            Some(v) => t.concat_rows(&[x, v]),
            None => x,
        };
        let a = self.attention(t, &blk.attn, x, kv, mask);
        let h = t.add(x, a);
        let h = self.norm(t, blk.norm1, h);
        let f = self.feed_forward(t, blk.ff1, blk.ff2, h);
        let out = t.add(h, f);
        self.norm(t, blk.norm2, out)
    }

    fn decoder_block(&self, t: &mut Tape<'_, F>, blk: &DecoderBlock, x: Var, memory: Var) -> Var {
        let a = self.attention(t, &blk.self_attn, x, x, &Mask::Causal);
        let h = t.add(x, a);
        let h = self.norm(t, blk.norm1, h);
        let c = self.attention(t, &blk.cross, h, memory, &Mask::None);
        let h2 = t.add(h, c);
        let h2 = self.norm(t, blk.norm2, h2);
        let f = self.feed_forward(t, blk.ff1, blk.ff2, h2);
        let out = t.add(h2, f);
        self.norm(t, blk.norm3, out)
    }

    fn embed(&self, t: &mut Tape<'_, F>, ids: &[usize]) -> Var {
        let tok = t.param(self.layout.tok_emb);
        let pos = t.param(self.layout.pos_emb);
        let positions: Vec<usize> = (0..ids.len()).collect();
        let e = t.gather(tok, ids);
        let p = t.gather(pos, &positions);
        let x = t.add(e, p);
        self.norm(t, self.layout.emb_norm, x)
    }

    /// `[CLS] Q [SEP] D` → (`s_0`, language tokens `V`). Long inputs are
    /// truncated to the position table.
    pub fn init_state(&self, t: &mut Tape<'_, F>, question: &[usize], description: &[usize]) -> Result<(Var, Var), ModelError> {
        if question.is_empty() {
            return Err(ModelError::EmptyQuestion);
        }
        let mut ids = Vec::with_capacity(question.len() + description.len() + 2);
        ids.push(CLS);
        ids.extend_from_slice(question);
        ids.push(SEP);
        ids.extend_from_slice(description);
        ids.truncate(self.config.max_positions);
        let mut x = self.embed(t, &ids);
        for blk in &self.layout.init {
            x = self.encoder_block(t, blk, x, None, &Mask::None);
        }
        let s0 = t.slice_rows(x, 0, 1);
        let lang = t.slice_rows(x, 1, ids.len() - 1);
        Ok((s0, lang))
    }

    /// Patch colours → projected patch tokens plus 2-D position embeddings.
    pub fn screenshot_tokens(&self, t: &mut Tape<'_, F>, patches: &[[f32; 3]]) -> Result<Var, ModelError> {
        let g2 = self.config.grid * self.config.grid;
        if patches.len() != g2 {
            return Err(ModelError::BadFeatures(alloc::format!("{} patches, expected {g2}", patches.len())));
        }
        let raw = t.constant(colors(patches));
        let proj = self.linear(t, self.layout.patch, raw);
        let pos = t.param(self.layout.patch_pos);
        Ok(t.add(proj, pos))
    }

    /// Button tokens in candidate order, then `[EOA]`, then `padding` zero rows.
    pub fn button_tokens(&self, t: &mut Tape<'_, F>, buttons: &[ButtonFeatures], padding: usize) -> Var {
        let d = self.config.dim;
        let mut rows = Vec::with_capacity(buttons.len() + 1 + padding);
        if !buttons.is_empty() {
            let tok = t.param(self.layout.tok_emb);
            let mut cats = Vec::with_capacity(buttons.len());
            for b in buttons {
                let text = if b.description_ids.is_empty() {
                    t.constant(Matrix::zeros(1, d))
                } else {
                    let e = t.gather(tok, &b.description_ids);
                    t.mean_rows(e)
                };
                let image = match b.image {
                    Some(c) => {
                        let raw = t.constant(colors(&[c]));
                        self.linear(t, self.layout.patch, raw)
                    }
                    None => t.constant(Matrix::zeros(1, d)),
                };
                cats.push(t.concat_cols(&[text, image]));
            }
            let stacked = if cats.len() == 1 { cats[0] } else { t.concat_rows(&cats) };
            rows.push(self.linear(t, self.layout.button, stacked));
        }
        let tok = t.param(self.layout.tok_emb);
        rows.push(t.gather(tok, &[EOA]));
        if padding > 0 {
            rows.push(t.constant(Matrix::zeros(padding, d)));
        }
        if rows.len() == 1 {
            rows[0]
        } else {
            t.concat_rows(&rows)
        }
    }

    /// One navigation step. Returns `s_t` and the `1×n` action logits, where
    /// the last `padding` candidates are masked out of attention and softmax.
    pub fn nav_step(
        &self,
        t: &mut Tape<'_, F>,
        s_prev: Var,
        language: Var,
        screenshot: Var,
        buttons: Var,
        padding: usize,
    ) -> Result<(Var, Var, Mask), ModelError> {
        let n_buttons = t.value(buttons).rows();
        if n_buttons <= padding {
            return Err(ModelError::NoCandidates);
        }
        let n_screen = t.value(screenshot).rows();
        let n_lang = t.value(language).rows();
        let mut x = t.concat_rows(&[s_prev, screenshot, buttons]);
        let n_x = 1 + n_screen + n_buttons;
        let mask = if padding == 0 {
            Mask::None
        } else {
            let mut keep = alloc::vec![true; n_x + n_lang];
            keep[n_x - padding..n_x].iter_mut().for_each(|k| *k = false);
            Mask::Columns(keep)
        };
        for blk in &self.layout.nav {
            x = self.encoder_block(t, blk, x, Some(language), &mask);
        }
        let s_t = t.slice_rows(x, 0, 1);
        let final_buttons = t.slice_rows(x, 1 + n_screen, n_buttons);
        let w = t.param(self.layout.action);
        let projected = t.matmul(s_t, w);
        let scores = t.matmul_bt(projected, final_buttons);
        let logits = t.scale(scores, F::one() / F::of(self.config.dim as f64).sqrt());
        let cand_mask = if padding == 0 {
            Mask::None
        } else {
            let mut keep = alloc::vec![true; n_buttons];
            keep[n_buttons - padding..].iter_mut().for_each(|k| *k = false);
            Mask::Columns(keep)
        };
        Ok((s_t, logits, cand_mask))
    }

    /// Decoder logits (`len(ids) × vocab`) attending to the single `memory` token.
    pub fn decoder_logits(&self, t: &mut Tape<'_, F>, memory: Var, ids: &[usize]) -> Var {
        let mut x = self.embed(t, ids);
        for blk in &self.layout.dec {
            x = self.decoder_block(t, blk, x, memory);
        }
        self.linear(t, self.layout.out, x)
    }

    /// Teacher-forced episode: navigation follows the gold actions and the
    /// answer head is trained on the gold answer.
    pub fn episode_loss(
        &self,
        t: &mut Tape<'_, F>,
        inputs: &EpisodeInputs,
        site: &SiteFeatures,
        mut sampling: Sampling<'_>,
        eta: F,
        lambda: F,
    ) -> Result<EpisodeLoss, ModelError> {
        let (mut s, lang) = self.init_state(t, &inputs.question_ids, &inputs.description_ids)?;
        let mut nav_terms = Vec::with_capacity(inputs.steps.len());
        let mut sampled = Vec::with_capacity(inputs.steps.len());
        let mut probs = Vec::with_capacity(inputs.steps.len());
        for (i, step) in inputs.steps.iter().enumerate() {
            let page = site.page(step.page.as_str())?;
            let screen = self.screenshot_tokens(t, &page.patches)?;
            let buttons = self.button_tokens(t, &page.buttons, 0);
            let (s_t, logits, mask) = self.nav_step(t, s, lang, screen, buttons, 0)?;
            let p: Vec<f64> = softmax_rows(t.value(logits), &mask).data().iter().map(|x| x.as_f64()).collect();
            let a = match &mut sampling {
                Sampling::Draw(rng) => categorical(&p, *rng),
                Sampling::Fixed(actions) => *actions
                    .get(i)
                    .ok_or(LossError::LengthMismatch(inputs.steps.len(), actions.len()))?,
            };
            for idx in [a, step.teacher] {
                if idx >= p.len() {
                    return Err(LossError::IndexOutOfRange { step: i, index: idx, len: p.len() }.into());
                }
            }
            let mut picks = alloc::vec![(0, a, F::one())];
            if eta != F::zero() {
                picks.push((0, step.teacher, eta));
            }
            nav_terms.push((t.nll(logits, &picks, &mask), F::one()));
            sampled.push(a);
            probs.push(p);
            s = s_t;
        }
        let max_len = self.config.max_positions - 1;
        let gold: Vec<usize> = inputs.answer_ids.iter().copied().take(max_len).collect();
        let mut input = alloc::vec![BOS];
        input.extend_from_slice(&gold);
        let mut targets = gold;
        targets.push(EOS);
        let logits = self.decoder_logits(t, s, &input);
        let picks: Vec<(usize, usize, F)> = targets.iter().enumerate().map(|(r, &c)| (r, c, F::one())).collect();
        let l_ans = t.nll(logits, &picks, &Mask::None);
        let l_nav = t.weighted_sum(&nav_terms);
        let total = t.weighted_sum(&[(l_nav, F::one()), (l_ans, lambda)]);
        Ok(EpisodeLoss {
            total,
            l_nav: t.scalar(l_nav).as_f64(),
            l_ans: t.scalar(l_ans).as_f64(),
            sampled,
            probs,
        })
    }

    /// Computes `s_0` and `V` for a new episode.
    pub fn begin(&self, question: &str, description: &str) -> Result<Navigation<F>, ModelError> {
        let mut t = Tape::new(self.params.tensors());
        let (s0, lang) = self.init_state(&mut t, &self.vocab.encode(question), &self.vocab.encode(description))?;
        Ok(Navigation { state: t.value(s0).clone(), language: t.value(lang).clone() })
    }

    /// Advances the state on `page` and returns the action distribution.
    pub fn step(&self, nav: &mut Navigation<F>, page: &PageFeatures) -> Result<Vec<f64>, ModelError> {
        self.step_padded(nav, page, 0)
    }

    /// Like [`Self::step`] with `padding` masked dummy candidates appended;
    /// their probabilities are included (always zero).
    pub fn step_padded(&self, nav: &mut Navigation<F>, page: &PageFeatures, padding: usize) -> Result<Vec<f64>, ModelError> {
        let mut t = Tape::new(self.params.tensors());
        let s_prev = t.constant(nav.state.clone());
        let lang = t.constant(nav.language.clone());
        let screen = self.screenshot_tokens(&mut t, &page.patches)?;
        let buttons = self.button_tokens(&mut t, &page.buttons, padding);
        let (s_t, logits, mask) = self.nav_step(&mut t, s_prev, lang, screen, buttons, padding)?;
        nav.state = t.value(s_t).clone();
        Ok(softmax_rows(t.value(logits), &mask).data().iter().map(|x| x.as_f64()).collect())
    }

    /// Greedy decoding from `[BOS]` until `[EOS]` or `max_len` words.
    pub fn decode_answer(&self, state: &Matrix<F>, max_len: usize) -> String {
        let max_len = max_len.min(self.config.max_positions - 1);
        let mut ids = alloc::vec![BOS];
        while ids.len() <= max_len {
            let mut t = Tape::new(self.params.tensors());
            let mem = t.constant(state.clone());
            let logits = self.decoder_logits(&mut t, mem, &ids);
            let last = t.value(logits).row(ids.len() - 1);
            let mut best = EOS;
            let mut best_v = last[EOS];
            for (i, &v) in last.iter().enumerate().skip(RESERVED.len()) {
                if v > best_v {
                    best = i;
                    best_v = v;
                }
            }
            if best == EOS {
                break;
            }
            ids.push(best);
        }
        self.vocab.decode(&ids[1..])
    }
}

fn colors<F: Real>(c: &[[f32; 3]]) -> Matrix<F> {
    Matrix::from_vec(c.len(), 3, c.iter().flat_map(|p| p.iter().map(|&v| F::of(f64::from(v)))).collect())
}

/// Index drawn from a probability vector.
pub(crate) fn categorical<R: RngCore + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    for (i, &x) in p.iter().enumerate() {
        acc += x;
        if u < acc {
            return i;
        }
    }
    p.iter().rposition(|&x| x > 0.0).unwrap_or(0)
}

/// Index of the largest probability; first wins ties.
pub fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in p.iter().enumerate() {
        if x > p[best] {
            best = i;
        }
    }
    best
}
