//! Frozen backbone contract, learnable prompt contexts and text encoding.

mod backbone;
mod prompt;
mod text;

pub use backbone::{Backbone, CallCounters, ImageTokens, SyntheticBackbone};
pub use prompt::{
    build_pair_prompt, build_primitive_prompt, name_vector, word_vector, Branch, PromptContext,
    VocabEmbedding,
};
pub use text::{
    encode_pairs, encode_primitives, encode_prompts, pair_context_grad, primitive_context_grad,
    PrimitiveTextTable,
};
