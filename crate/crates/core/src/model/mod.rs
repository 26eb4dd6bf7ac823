//! Trainable navigation-and-answering network.
//!
//! The network has three stages sharing one token embedding table:
//!
//! 1. **Initialisation.** `[CLS] Q [SEP] D` runs through a self-attention
//!    encoder. The output at `[CLS]` is the initial state `s_0`; the other
//!    outputs are the language tokens `V`, computed once per episode.
//! 2. **Navigation.** Each step encodes the screenshot as a grid of patch
//!    tokens and every candidate button as a projection of its concatenated
//!    text and image tokens, plus a learned `[EOA]` token. The sequence
//!    `[s_{t-1}; screenshot; buttons]` runs through the navigation layers with
//!    `V` appended as extra keys/values only. The state slot becomes `s_t`
//!    and the action distribution is a softmax over scaled dot products of
//!    the projected state with the final button tokens.
//! 3. **Answering.** A causal decoder cross-attends to the single state
//!    token at the stop step and emits the answer autoregressively.

mod features;
mod loss;
mod net;
mod params;
mod vocab;

pub use features::{ButtonFeatures, EpisodeInputs, PageFeatures, SiteFeatures, StepInputs};
pub use loss::{ans_loss, nav_loss, total_loss, LossError};
pub use net::{argmax, EpisodeLoss, ModelError, Navigation, Sampling, WebVlnNet};
pub use params::{ModelConfig, ParamStore};
pub use vocab::{Vocab, BOS, CLS, EOA, EOS, PAD, RESERVED, SEP, UNK};
