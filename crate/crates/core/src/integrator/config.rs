use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which primitive-to-primitive attention edges are allowed.
/// `true` keeps an interaction enabled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaskFlags {
    pub attr_obj: bool,
    pub attr_attr: bool,
    pub all_primitives: bool,
}

impl Default for MaskFlags {
    fn default() -> Self {
        Self {
            attr_obj: true,
            attr_attr: true,
            all_primitives: true,
        }
    }
}

pub const DEFAULT_LOGIT_SCALE: f64 = 1.0 / 0.07;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegratorConfig {
    /// When false the class token is scored directly, without fusion.
    pub enabled: bool,
    /// When false only `[C; T]` is fused (class-token-only ablation).
    pub use_patches: bool,
    pub layers: usize,
    pub heads: usize,
    /// Feed-forward width as a multiple of the model dimension.
    pub ff_mult: usize,
    pub mask: MaskFlags,
    /// Multiplier applied to cosine scores before sigmoid/softmax.
    pub logit_scale: f64,
    pub init_std: f64,
    /// Zero the attention output and second feed-forward projections so
    /// that a fresh integrator is the identity on every token.
    pub zero_init_residual: bool,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            use_patches: true,
            layers: 1,
            heads: 4,
            ff_mult: 4,
            mask: MaskFlags::default(),
            logit_scale: DEFAULT_LOGIT_SCALE,
            init_std: 0.02,
            zero_init_residual: false,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.layers == 0 {
            return Err(Error::InvalidConfig("integrator.layers must be at least 1".into()));
        }
        if self.heads == 0 || dim % self.heads != 0 {
            return Err(Error::InvalidConfig(format!(
                "model dim {dim} is not divisible by integrator.heads = {}",
                self.heads
            )));
        }
        if self.ff_mult == 0 {
            return Err(Error::InvalidConfig("integrator.ff_mult must be positive".into()));
        }
        if !(self.logit_scale > 0.0 && self.logit_scale.is_finite()) {
            return Err(Error::InvalidConfig("integrator.logit_scale must be positive".into()));
        }
        if !(self.init_std >= 0.0 && self.init_std.is_finite()) {
            return Err(Error::InvalidConfig("integrator.init_std must be non-negative".into()));
        }
        Ok(())
    }
}
