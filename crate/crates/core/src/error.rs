use alloc::string::String;

use crate::graphs::Modality;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("point lies outside the Poincaré ball (c·‖z‖² = {scaled_norm_sq})")]
    OutsideBall { scaled_norm_sq: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("negative entry at ({row}, {col}) in {context}")]
    NegativeEntry {
        context: &'static str,
        row: usize,
        col: usize,
    },
    #[error("layer {layer}: input width {found} does not match expected {expected}")]
    LayerDim {
        layer: usize,
        expected: usize,
        found: usize,
    },
    #[error("subject {subject} is missing the {modality} modality")]
    MissingModality { subject: String, modality: Modality },
    #[error("non-finite gradient in parameter {0}")]
    NanGradient(String),
    #[error("only one class present in {0}")]
    SingleClass(&'static str),
    #[error("repeat {repeat}, fold {fold}: held-out fold contains a single class")]
    FoldSingleClass { repeat: usize, fold: usize },
    #[error("attention extraction requires an attention backbone")]
    NotAttention,
    #[error("empty input: {0}")]
    Empty(&'static str),
}
