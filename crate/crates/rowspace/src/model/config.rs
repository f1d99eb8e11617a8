//! Declarative model configuration: JSON in, validated `ModelConfig` out.
//!
//! Parsing is strict: unknown keys are rejected so a typo in a variant flag
//! cannot silently produce the wrong audit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Dtype;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Vit,
    Resnet,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Family::Vit => write!(f, "vit"),
            Family::Resnet => write!(f, "resnet"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    #[default]
    Baseline,
    Pe,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Variant::Baseline => write!(f, "baseline"),
            Variant::Pe => write!(f, "pe"),
        }
    }
}

fn default_image_size() -> usize {
    224
}
fn default_num_classes() -> usize {
    1000
}
fn default_qkv_bias() -> bool {
    true
}
fn default_dtype() -> Dtype {
    Dtype::F32
}
fn default_mlp_ratio() -> f64 {
    4.0
}

/// Architecture description for one model. ViT fields (`dim`, `depth`,
/// `heads`, `patch`) and ResNet fields (`resnet_layers`, `pe_stages`,
/// `stage_sharing`) are optional at parse time; `validate` enforces the
/// family-specific requirements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    #[serde(default)]
    pub variant: Variant,

    // transformer shape
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heads: Option<usize>,
    #[serde(default = "default_mlp_ratio")]
    pub mlp_ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patch: Option<usize>,
    #[serde(default = "default_qkv_bias")]
    pub qkv_bias: bool,

    // resnet shape
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resnet_layers: Option<Vec<usize>>,
    /// Stages (1–4) the tied blocks apply to; only meaningful for
    /// `variant = "pe"` ResNets. Defaults to all four.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pe_stages: Option<Vec<usize>>,
    /// Share each stage's tied matrix (and the identity blocks' 3×3 kernel)
    /// across the stage's blocks. Defaults to true for ResNet-PE.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stage_sharing: Option<bool>,

    #[serde(default = "default_image_size")]
    pub image_size: usize,
    #[serde(default = "default_num_classes")]
    pub num_classes: usize,
    #[serde(default = "default_dtype")]
    pub dtype: Dtype,
}

fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::Validation {
        field: field.into(),
        reason: reason.into(),
    }
}

impl ModelConfig {
    /// DeiT-S-shaped ViT (d = 384, depth 12, heads 6, mlp ratio 4, patch 16).
    pub fn deit_small(variant: Variant) -> ModelConfig {
        ModelConfig {
            family: Family::Vit,
            variant,
            dim: Some(384),
            depth: Some(12),
            heads: Some(6),
            mlp_ratio: 4.0,
            patch: Some(16),
            qkv_bias: true,
            resnet_layers: None,
            pe_stages: None,
            stage_sharing: None,
            image_size: 224,
            num_classes: 1000,
            dtype: Dtype::F32,
        }
    }

    /// Torchvision-shaped ResNet-50; `pe_stages` selects the tied stages
    /// when `variant` is `Pe` (`None` means all four).
    pub fn resnet50(variant: Variant, pe_stages: Option<Vec<usize>>) -> ModelConfig {
        ModelConfig {
            family: Family::Resnet,
            variant,
            dim: None,
            depth: None,
            heads: None,
            mlp_ratio: 4.0,
            patch: None,
            qkv_bias: true,
            resnet_layers: Some(vec![3, 4, 6, 3]),
            pe_stages,
            stage_sharing: None,
            image_size: 224,
            num_classes: 1000,
            dtype: Dtype::F32,
        }
    }

    /// Small ViT for tests and the learnability harness.
    pub fn tiny_vit(variant: Variant, num_classes: usize) -> ModelConfig {
        ModelConfig {
            family: Family::Vit,
            variant,
            dim: Some(64),
            depth: Some(2),
            heads: Some(4),
            mlp_ratio: 4.0,
            patch: Some(8),
            qkv_bias: true,
            resnet_layers: None,
            pe_stages: None,
            stage_sharing: None,
            image_size: 32,
            num_classes,
            dtype: Dtype::F32,
        }
    }

    pub fn with_dtype(mut self, dtype: Dtype) -> Self {
        self.dtype = dtype;
        self
    }

    // — validated accessors (call after `validate`) —

    pub fn vit_dim(&self) -> usize {
        self.dim.expect("validated vit config has dim")
    }

    pub fn vit_depth(&self) -> usize {
        self.depth.expect("validated vit config has depth")
    }

    pub fn vit_heads(&self) -> usize {
        self.heads.expect("validated vit config has heads")
    }

    pub fn vit_patch(&self) -> usize {
        self.patch.expect("validated vit config has patch")
    }

    pub fn vit_hidden(&self) -> usize {
        (self.vit_dim() as f64 * self.mlp_ratio).round() as usize
    }

    pub fn stage_counts(&self) -> Vec<usize> {
        self.resnet_layers.clone().unwrap_or_else(|| vec![3, 4, 6, 3])
    }

    /// Stages the PE variant ties (1-based), normalized and sorted.
    pub fn tied_stages(&self) -> Vec<usize> {
        if self.variant != Variant::Pe || self.family != Family::Resnet {
            return Vec::new();
        }
        let mut stages = self.pe_stages.clone().unwrap_or_else(|| vec![1, 2, 3, 4]);
        stages.sort_unstable();
        stages.dedup();
        stages
    }

    /// `stage_sharing` with its default applied: true for ResNet-PE.
    pub fn stage_sharing_enabled(&self) -> bool {
        self.stage_sharing
            .unwrap_or(self.family == Family::Resnet && self.variant == Variant::Pe)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(invalid("num_classes", "need at least 2 classes"));
        }
        if self.image_size == 0 {
            return Err(invalid("image_size", "must be positive"));
        }
        match self.family {
            Family::Vit => self.validate_vit(),
            Family::Resnet => self.validate_resnet(),
        }
    }

    fn validate_vit(&self) -> Result<()> {
        let dim = self.dim.ok_or_else(|| invalid("dim", "required for vit"))?;
        let depth = self
            .depth
            .ok_or_else(|| invalid("depth", "required for vit"))?;
        let heads = self
            .heads
            .ok_or_else(|| invalid("heads", "required for vit"))?;
        let patch = self
            .patch
            .ok_or_else(|| invalid("patch", "required for vit"))?;
        if depth < 1 {
            return Err(invalid("depth", "must be ≥ 1"));
        }
        if heads == 0 || dim % heads != 0 {
            return Err(invalid(
                "heads",
                format!("dim {dim} not divisible by heads {heads}"),
            ));
        }
        if patch == 0 || self.image_size % patch != 0 {
            return Err(invalid(
                "patch",
                format!("image_size {} not divisible by patch {patch}", self.image_size),
            ));
        }
        if !(self.mlp_ratio > 0.0) {
            return Err(invalid("mlp_ratio", "must be > 0"));
        }
        if self.resnet_layers.is_some() {
            return Err(invalid("resnet_layers", "not valid for family vit"));
        }
        if self.pe_stages.is_some() {
            return Err(invalid("pe_stages", "not valid for family vit"));
        }
        if self.stage_sharing.is_some() {
            return Err(invalid("stage_sharing", "not valid for family vit"));
        }
        Ok(())
    }

    fn validate_resnet(&self) -> Result<()> {
        for (field, set) in [
            ("dim", self.dim.is_some()),
            ("depth", self.depth.is_some()),
            ("heads", self.heads.is_some()),
            ("patch", self.patch.is_some()),
        ] {
            if set {
                return Err(invalid(field, "not valid for family resnet"));
            }
        }
        let counts = self.stage_counts();
        if counts.len() != 4 || counts.iter().any(|&n| n == 0) {
            return Err(invalid(
                "resnet_layers",
                "expects four per-stage block counts, each ≥ 1",
            ));
        }
        if let Some(stages) = &self.pe_stages {
            if self.variant != Variant::Pe {
                return Err(invalid(
                    "pe_stages",
                    "must be empty unless variant is \"pe\"",
                ));
            }
            if stages.is_empty() {
                return Err(invalid("pe_stages", "must name at least one stage"));
            }
            let mut seen = [false; 5];
            for &s in stages {
                if !(1..=4).contains(&s) {
                    return Err(invalid("pe_stages", format!("stage {s} outside 1–4")));
                }
                if seen[s] {
                    return Err(invalid("pe_stages", format!("stage {s} listed twice")));
                }
                seen[s] = true;
            }
        }
        if self.stage_sharing.is_some() && self.variant != Variant::Pe {
            return Err(invalid(
                "stage_sharing",
                "only meaningful for variant \"pe\"",
            ));
        }
        Ok(())
    }
}

/// Parses and validates a UTF-8 JSON config.
///
/// Malformed JSON reports the byte offset of the failure; unknown keys and
/// type errors surface as strict-mode validation errors naming the field.
pub fn parse_config(text: &[u8]) -> Result<ModelConfig> {
    let s = std::str::from_utf8(text)
        .map_err(|e| Error::Parse(format!("config is not UTF-8: {e}")))?;
    let cfg: ModelConfig = serde_json::from_str(s).map_err(|e| {
        let offset = byte_offset(s, e.line(), e.column());
        match e.classify() {
            serde_json::error::Category::Data => Error::Validation {
                field: "<document>".into(),
                reason: format!("{e} (strict mode)"),
            },
            _ => Error::Parse(format!("{e} (byte offset {offset})")),
        }
    })?;
    cfg.validate()?;
    Ok(cfg)
}

/// Byte offset of a 1-based (line, column) position.
fn byte_offset(s: &str, line: usize, column: usize) -> usize {
    let mut remaining = line.saturating_sub(1);
    let mut offset = 0;
    for (i, b) in s.bytes().enumerate() {
        if remaining == 0 {
            break;
        }
        if b == b'\n' {
            remaining -= 1;
            offset = i + 1;
        }
    }
    offset + column.saturating_sub(1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_the_deit_s_shaped_pe_config() {
        let text = br#"{"family":"vit","variant":"pe","dim":384,"depth":12,"heads":6,
            "mlp_ratio":4,"patch":16,"image_size":224,"num_classes":1000}"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.variant, Variant::Pe);
        assert_eq!(cfg.vit_hidden(), 1536);
        assert!(cfg.qkv_bias, "default applied");
        assert_eq!(cfg.dtype, Dtype::F32, "default applied");
    }

    #[test]
    fn rejects_indivisible_heads() {
        let text = br#"{"family":"vit","dim":384,"depth":12,"heads":5,"patch":16}"#;
        let err = parse_config(text).unwrap_err();
        assert!(matches!(err, Error::Validation { ref field, .. } if field == "heads"), "{err}");
    }

    #[test]
    fn parses_resnet_pe_stages_3_4() {
        let text = br#"{"family":"resnet","variant":"pe","pe_stages":[3,4]}"#;
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.tied_stages(), vec![3, 4]);
        assert!(cfg.stage_sharing_enabled(), "default applied for resnet-pe");
    }

    #[test]
    fn rejects_unknown_keys() {
        let text = br#"{"family":"vit","dim":64,"depth":1,"heads":4,"patch":8,"image_size":32,"varint":"pe"}"#;
        let err = parse_config(text).unwrap_err();
        assert!(err.to_string().contains("varint"), "{err}");
    }

    #[test]
    fn malformed_json_reports_byte_offset() {
        let err = parse_config(b"{\"family\": \"vit\",\n  !bad}").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("byte offset 20"), "{msg}");
    }

    #[test]
    fn pe_stages_require_pe_variant() {
        let text = br#"{"family":"resnet","pe_stages":[3]}"#;
        assert!(parse_config(text).is_err());
    }

    #[test]
    fn config_json_round_trips() {
        let cfg = ModelConfig::resnet50(Variant::Pe, Some(vec![3, 4]));
        let json = serde_json::to_vec(&cfg).unwrap();
        assert_eq!(parse_config(&json).unwrap(), cfg);
    }
}
