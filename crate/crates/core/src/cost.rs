//! Parameter and multiply-accumulate accounting for one graph encoding.
//!
//! Counting convention, per layer with `N` nodes, input width `D`, per-head
//! width `M`:
//! - dense transform `N·D·M` per head, bias `N·M` when present
//! - dense aggregation `N²·M` per head
//! - attention scores `2M` per edge and softmax 2 per edge, `N²` edges
//! - activation 1 per output entry
//! - hyperbolic kinds add `2·N·D` for projection + log map (shared by the
//!   heads) and 2 per output entry for the cosine branch

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::layers::{EncoderKind, EncoderSpec};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerCost {
    pub layer: usize,
    pub params: u64,
    pub macs: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub params: u64,
    pub macs: u64,
    pub breakdown: Vec<LayerCost>,
}

fn layer_params(spec: &EncoderSpec, k: usize) -> u64 {
    let (d, m) = (spec.input_width(k) as u64, spec.dims[k + 1] as u64);
    if spec.kind.is_attention() {
        let bias = if spec.attention_bias { m } else { 0 };
        spec.layers[k].heads as u64 * (m * d + 2 * m + bias)
    } else {
        d * m + m
    }
}

fn layer_macs(spec: &EncoderSpec, k: usize, n: u64) -> u64 {
    let (d, m) = (spec.input_width(k) as u64, spec.dims[k + 1] as u64);
    let heads = spec.layers[k].heads as u64;
    let hyperbolic = spec.kind.is_hyperbolic();
    let mut per_head = n * d * m + n * n * m + n * m;
    let has_bias = !spec.kind.is_attention() || spec.attention_bias;
    if has_bias {
        per_head += n * m;
    }
    if spec.kind.is_attention() {
        per_head += n * n * 2 * m + 2 * n * n;
    }
    if hyperbolic {
        per_head += 2 * n * m;
    }
    heads * per_head + if hyperbolic { 2 * n * d } else { 0 }
}

pub fn count_params(spec: &EncoderSpec) -> u64 {
    (0..spec.n_layers()).map(|k| layer_params(spec, k)).sum()
}

pub fn count_macs(spec: &EncoderSpec, n_nodes: usize) -> u64 {
    (0..spec.n_layers()).map(|k| layer_macs(spec, k, n_nodes as u64)).sum()
}

pub fn cost_report(spec: &EncoderSpec, n_nodes: usize) -> CostReport {
    let breakdown: Vec<LayerCost> = (0..spec.n_layers())
        .map(|k| LayerCost {
            layer: k,
            params: layer_params(spec, k),
            macs: layer_macs(spec, k, n_nodes as u64),
        })
        .collect();
    CostReport {
        params: breakdown.iter().map(|l| l.params).sum(),
        macs: breakdown.iter().map(|l| l.macs).sum(),
        breakdown,
    }
}

/// One row of the encoder cost comparison; `None` counts mean the method is
/// not implemented here and only its published MMac figures are listed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub method: String,
    pub fmri: Option<CostReport>,
    pub dti: Option<CostReport>,
    pub reference_mmac: Option<(f64, f64)>,
}

/// HGCN costs as published; its Möbius operations are not implemented.
pub const HGCN_REFERENCE_MMAC: (f64, f64) = (8.95, 15.84);

/// Cost table for encoding one FC graph (`fmri_input` features) and one SC
/// graph (`dti_input` features) with `n_rois` nodes each.
pub fn cost_table(n_rois: usize, fmri_input: usize, dti_input: usize) -> Vec<CostRow> {
    let row = |kind: EncoderKind| CostRow {
        method: String::from(match kind {
            EncoderKind::Gcn => "GCN",
            EncoderKind::Hkgcn => "HKGCN",
            EncoderKind::Gat => "GAT",
            EncoderKind::Hkgat => "HKGAT",
        }),
        fmri: Some(cost_report(&EncoderSpec::default_for(kind, fmri_input), n_rois)),
        dti: Some(cost_report(&EncoderSpec::default_for(kind, dti_input), n_rois)),
        reference_mmac: None,
    };
    let hgcn = CostRow {
        method: "HGCN (reference only)".into(),
        fmri: None,
        dti: None,
        reference_mmac: Some(HGCN_REFERENCE_MMAC),
    };
    alloc::vec![
        row(EncoderKind::Gcn),
        hgcn,
        row(EncoderKind::Hkgcn),
        row(EncoderKind::Gat),
        row(EncoderKind::Hkgat),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::{EncoderWeights, LayerConfig};
    use proptest::prelude::*;
    use rand::SeedableRng;

    #[test]
    fn table_parameter_counts() {
        let p = |k, d| count_params(&EncoderSpec::default_for(k, d));
        assert_eq!(p(EncoderKind::Gcn, 116), 11_648);
        assert_eq!(p(EncoderKind::Hkgcn, 116), 11_648);
        assert_eq!(p(EncoderKind::Gcn, 348), 26_496);
        assert_eq!(p(EncoderKind::Hkgcn, 348), 26_496);
        assert_eq!(p(EncoderKind::Gat, 116), 46_720);
        assert_eq!(p(EncoderKind::Hkgat, 116), 46_720);
        assert_eq!(p(EncoderKind::Gat, 348), 106_112);
        assert_eq!(p(EncoderKind::Hkgat, 348), 106_112);
    }

    #[test]
    fn single_dense_transform() {
        // one Euclidean conv layer, minus aggregation, bias and activation;
        // N·D·M = 116·116·64 (475,136 would be 116·64·64)
        let spec = EncoderSpec::new(EncoderKind::Gcn, alloc::vec![116, 64], alloc::vec![LayerConfig { lambda: 0.0, ..LayerConfig::convolution() }], false).unwrap();
        let n = 116u64;
        assert_eq!(count_macs(&spec, 116) - n * n * 64 - 2 * n * 64, 861_184);
    }

    #[test]
    fn empty_spec_costs_nothing() {
        let spec = EncoderSpec::new(EncoderKind::Gcn, alloc::vec![5], alloc::vec![], false).unwrap();
        assert_eq!(count_macs(&spec, 10), 0);
        assert_eq!(count_params(&spec), 0);
    }

    #[test]
    fn hyperbolic_overhead_is_small() {
        for d in [116, 348] {
            let m = |k| count_macs(&EncoderSpec::default_for(k, d), 116) as f64;
            assert!(m(EncoderKind::Hkgcn) / m(EncoderKind::Gcn) <= 1.05);
            assert!(m(EncoderKind::Hkgat) / m(EncoderKind::Gat) <= 1.01);
        }
    }

    #[test]
    fn report_totals_match_breakdown() {
        let r = cost_report(&EncoderSpec::default_for(EncoderKind::Hkgat, 116), 116);
        assert_eq!(r.params, 46_720);
        assert_eq!(r.macs, r.breakdown.iter().map(|l| l.macs).sum::<u64>());
        assert_eq!(cost_table(116, 116, 348).len(), 5);
    }

    fn kinds() -> impl Strategy<Value = EncoderKind> {
        prop_oneof![
            Just(EncoderKind::Gcn),
            Just(EncoderKind::Hkgcn),
            Just(EncoderKind::Gat),
            Just(EncoderKind::Hkgat)
        ]
    }

    proptest! {
        #[test]
        fn params_match_instantiated_weights(kind in kinds(), dims in proptest::collection::vec(1usize..20, 2..4), heads in 1usize..4, bias: bool) {
            let mut spec = EncoderSpec::default_for(kind, dims[0]);
            spec.dims = dims.clone();
            let base = spec.layers[0];
            spec.layers = alloc::vec![LayerConfig { heads: if kind.is_attention() { heads } else { 1 }, ..base }; dims.len() - 1];
            spec.attention_bias = bias;
            let w = EncoderWeights::init(spec.clone(), &mut rand_chacha::ChaCha8Rng::seed_from_u64(0)).unwrap();
            let actual: usize = w.tensors.iter().map(|t| t.len()).sum();
            prop_assert_eq!(count_params(&spec), actual as u64);
            let twin = match kind {
                EncoderKind::Gcn => EncoderKind::Hkgcn,
                EncoderKind::Hkgcn => EncoderKind::Gcn,
                EncoderKind::Gat => EncoderKind::Hkgat,
                EncoderKind::Hkgat => EncoderKind::Gat,
            };
            let other = spec.with_kind(twin);
            prop_assert_eq!(count_params(&other), count_params(&spec));
        }

        #[test]
        fn adding_a_layer_adds_macs(kind in kinds(), dims in proptest::collection::vec(1usize..20, 2..4), extra in 1usize..20, n in 1usize..40) {
            let mut spec = EncoderSpec::default_for(kind, dims[0]);
            spec.dims = dims.clone();
            spec.layers = alloc::vec![spec.layers[1]; dims.len() - 1];
            let before = count_macs(&spec, n);
            spec.dims.push(extra);
            spec.layers.push(spec.layers[0]);
            prop_assert!(count_macs(&spec, n) > before);
        }
    }
}
