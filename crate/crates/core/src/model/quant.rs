//! Weight-only int8 quantization with per-output-channel scales.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::Result;
use crate::params::TensorMap;
use crate::tensor::{Scalar, Tensor};

use super::{HybridConfig, HybridModel};

/// A `[in, out]` weight stored as int8 with one scale per output column.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedTensor {
    pub shape: [usize; 2],
    pub values: Vec<i8>,
    pub scales: Vec<f32>,
}

impl QuantizedTensor {
    /// Symmetric absmax quantization; an all-zero column gets scale 1.
    pub fn quantize<S: Scalar>(t: &Tensor<S>) -> Self {
        let (rows, cols) = (t.shape()[0], t.shape()[1]);
        let mut absmax = vec![0f64; cols];
        for r in 0..rows {
            for (m, v) in absmax.iter_mut().zip(t.row(r)) {
                *m = m.max(v.f64().abs());
            }
        }
        let scales: Vec<f32> = absmax.iter().map(|&m| if m == 0.0 { 1.0 } else { (m / 127.0) as f32 }).collect();
        let values = t
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| (v.f64() / scales[i % cols] as f64).round().clamp(-127.0, 127.0) as i8)
            .collect();
        Self {
            shape: [rows, cols],
            values,
            scales,
        }
    }

    pub fn dequantize<S: Scalar>(&self) -> Tensor<S> {
        let cols = self.shape[1];
        Tensor::from_fn(&self.shape, |i| S::of(self.values[i] as f64 * self.scales[i % cols] as f64))
    }

    pub fn byte_size(&self) -> usize {
        self.values.len() + 4 * self.scales.len()
    }
}

/// Whether a parameter is a matmul weight subject to quantization.
/// Embeddings (and the tied head) and norm gains stay in full precision.
pub fn is_quantized_weight(name: &str, shape: &[usize]) -> bool {
    shape.len() == 2 && name != "embed" && !name.ends_with("conv_w") && !name.ends_with("a_log")
}

/// A model whose matmul weights are held as int8 and dequantized on use.
#[derive(Debug, Clone)]
pub struct QuantizedModel<S: Scalar> {
    pub cfg: HybridConfig,
    pub weights: BTreeMap<String, QuantizedTensor>,
    pub full: TensorMap<S>,
}

impl<S: Scalar> QuantizedModel<S> {
    pub fn quantize(model: &HybridModel<S>) -> Self {
        let mut weights = BTreeMap::new();
        let mut full = TensorMap::new();
        for (name, v) in model.params().iter() {
            if is_quantized_weight(name, v.shape()) {
                weights.insert(name.to_string(), QuantizedTensor::quantize(v.value()));
            } else {
                full.insert(name.to_string(), v.shared_value());
            }
        }
        Self {
            cfg: model.cfg.clone(),
            weights,
            full,
        }
    }

    /// Full-precision model carrying the dequantized weights.
    pub fn dequantize(&self) -> Result<HybridModel<S>> {
        let mut map = self.full.clone();
        for (name, q) in &self.weights {
            map.insert(name.clone(), Arc::new(q.dequantize()));
        }
        HybridModel::from_map(&self.cfg, &map)
    }

    /// Storage of quantized weights plus full-precision remainder.
    pub fn byte_size(&self) -> usize {
        self.weights.values().map(QuantizedTensor::byte_size).sum::<usize>()
            + self.full.values().map(|t| t.byte_size()).sum::<usize>()
    }
}
