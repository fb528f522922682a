//! Visual-primitive integrator: token assembly, attention masking, the
//! transformer encoder and cosine scoring.

mod config;
mod layers;
mod mask;
mod score;
mod tokens;
mod transformer;

pub use config::{IntegratorConfig, MaskFlags, DEFAULT_LOGIT_SCALE};
pub use layers::{gelu, gelu_grad, LayerNorm, Linear};
pub use mask::{build_attention_mask, AttentionMask};
pub use score::{cosine_rows, cosine_rows_backward, score_primitives};
pub use tokens::{assemble_cls_only, assemble_tokens, RefinedOutputs, SegmentBounds, TokenSequence};
pub use transformer::{integrator_forward, EncoderLayer, Integrator, IntegratorPass, LayerCache};
