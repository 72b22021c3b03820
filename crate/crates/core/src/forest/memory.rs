//! Per-node storage model.
//!
//! A node holds `2 * n_features` floating-point bounds and an equal number of
//! bytes of integer fields (label counts, links, split index), so at binary64
//! the integer and floating-point shares are the same size. Floating-point
//! bytes scale with the format width.

use crate::vprec::PrecisionFormat;

use super::ForestConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeSizeModel {
    int_bytes: u64,
    float_fields: u64,
}

impl NodeSizeModel {
    pub fn for_features(n_features: usize) -> Self {
        let float_fields = 2 * n_features as u64;
        Self {
            int_bytes: 8 * float_fields,
            float_fields,
        }
    }

    pub fn int_bytes(&self) -> u64 {
        self.int_bytes
    }

    /// Bits taken by the floating-point fields of one node.
    pub fn float_bits(&self, format: PrecisionFormat) -> u64 {
        self.float_fields * u64::from(format.width())
    }

    pub fn float_bytes(&self, format: PrecisionFormat) -> u64 {
        self.float_bits(format).div_ceil(8)
    }

    pub fn node_bytes(&self, format: PrecisionFormat) -> u64 {
        self.int_bytes + self.float_bytes(format)
    }
}

/// Bytes taken by a set of nodes, split into integer and floating-point parts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Footprint {
    pub nodes: u64,
    pub int_bytes: u64,
    pub float_bytes: u64,
    pub total: u64,
}

impl Footprint {
    pub fn of_nodes(model: NodeSizeModel, nodes: u64, format: PrecisionFormat) -> Self {
        let int_bytes = nodes * model.int_bytes();
        let float_bytes = (nodes * model.float_bits(format)).div_ceil(8);
        Self {
            nodes,
            int_bytes,
            float_bytes,
            total: int_bytes + float_bytes,
        }
    }
}

/// Footprint of a fully grown forest (every pool slot in use, sized in
/// binary64) if its nodes were stored in `format`.
pub fn footprint_bytes(config: &ForestConfig, format: PrecisionFormat) -> Footprint {
    let model = NodeSizeModel::for_features(config.n_features);
    let nodes = config.memory_bytes / model.node_bytes(PrecisionFormat::DOUBLE);
    Footprint::of_nodes(model, nodes, format)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fmt(p: u32, e: u32) -> PrecisionFormat {
        PrecisionFormat::new(p, e).unwrap()
    }

    #[test]
    fn int_and_float_shares_match_at_double() {
        let m = NodeSizeModel::for_features(12);
        assert_eq!(m.int_bytes(), m.float_bytes(PrecisionFormat::DOUBLE));
        assert_eq!(m.node_bytes(PrecisionFormat::DOUBLE), 384);
        assert_eq!(m.node_bytes(fmt(3, 4)), 192 + 24);
    }

    #[test]
    fn ratios() {
        let config = ForestConfig::new(12, 10);
        let base = footprint_bytes(&config, PrecisionFormat::DOUBLE);
        assert_eq!(base.int_bytes, base.float_bytes);
        assert_eq!(base.total, footprint_bytes(&config, fmt(52, 11)).total);
        let eight = footprint_bytes(&config, fmt(3, 4));
        assert_eq!(base.total * 9, eight.total * 16);
        let single = footprint_bytes(&config, PrecisionFormat::SINGLE);
        assert_eq!(base.total * 3, single.total * 4);
    }
}
