use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use super::ShredError;
use crate::dataset::{OutputMap, ScalingParams};
use crate::linalg::DenseMatrix;
use crate::math;

/// One LSTM layer. Gate weights are packed row-blocks in the order
/// input, forget, cell, output: `w_input` is (4H x In), `w_recurrent`
/// (4H x H), `bias` (4H).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams {
    pub w_input: DenseMatrix,
    pub w_recurrent: DenseMatrix,
    pub bias: Vec<f64>,
    pub input_width: usize,
    pub hidden_width: usize,
}

impl LstmLayerParams {
    pub fn zeros(input_width: usize, hidden_width: usize) -> Self {
        Self {
            w_input: DenseMatrix::zeros(4 * hidden_width, input_width),
            w_recurrent: DenseMatrix::zeros(4 * hidden_width, hidden_width),
            bias: vec![0.0; 4 * hidden_width],
            input_width,
            hidden_width,
        }
    }

    pub fn parameter_count(&self) -> usize {
        4 * self.hidden_width * (self.input_width + self.hidden_width + 1)
    }
}

/// Shallow decoder: three affine maps with rectified-linear hidden
/// activations and a linear output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SdnParams {
    pub w1: DenseMatrix,
    pub b1: Vec<f64>,
    pub w2: DenseMatrix,
    pub b2: Vec<f64>,
    pub w3: DenseMatrix,
    pub b3: Vec<f64>,
}

impl SdnParams {
    pub fn zeros(input: usize, h1: usize, h2: usize, output: usize) -> Self {
        Self {
            w1: DenseMatrix::zeros(h1, input),
            b1: vec![0.0; h1],
            w2: DenseMatrix::zeros(h2, h1),
            b2: vec![0.0; h2],
            w3: DenseMatrix::zeros(output, h2),
            b3: vec![0.0; output],
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.rows() * self.w1.cols()
            + self.b1.len()
            + self.w2.rows() * self.w2.cols()
            + self.b2.len()
            + self.w3.rows() * self.w3.cols()
            + self.b3.len()
    }
}

/// Architecture descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct ShredArch {
    pub n_sensors: usize,
    pub hidden: usize,
    pub sdn_hidden: (usize, usize),
    pub lag: usize,
    pub output_map: OutputMap,
}

impl ShredArch {
    /// Reference configuration: two 64-neuron LSTM layers over a
    /// 30-frame window, decoder hidden widths 350 and 400.
    pub fn reference(n_sensors: usize, output_map: OutputMap) -> Self {
        Self {
            n_sensors,
            hidden: 64,
            sdn_hidden: (350, 400),
            lag: 30,
            output_map,
        }
    }
}

/// The trained model: stacked LSTM parameters, decoder parameters, and
/// the scaling needed to interpret inputs and outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct ShredModel {
    pub arch: ShredArch,
    pub lstm1: LstmLayerParams,
    pub lstm2: LstmLayerParams,
    pub sdn: SdnParams,
    pub scaling: ScalingParams,
}

/// Ordered view of one parameter tensor, the canonical layout used by
/// the optimizer, gradient checks and serialization.
pub struct TensorView<'a> {
    pub name: &'static str,
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
}

impl ShredModel {
    /// Zero-initialized model (weights are filled by [`ShredModel::init`]
    /// or a loader).
    pub fn zeros(arch: ShredArch, scaling: ScalingParams) -> Result<Self, ShredError> {
        let out = arch.output_map.width();
        if out == 0 {
            return Err(ShredError::Config(String::from("empty output map")));
        }
        Ok(Self {
            lstm1: LstmLayerParams::zeros(arch.n_sensors, arch.hidden),
            lstm2: LstmLayerParams::zeros(arch.hidden, arch.hidden),
            sdn: SdnParams::zeros(arch.hidden, arch.sdn_hidden.0, arch.sdn_hidden.1, out),
            arch,
            scaling,
        })
    }

    /// Seeded uniform fan-in initialization: every tensor is drawn from
    /// U(-1/sqrt(fan_in), 1/sqrt(fan_in)) in a fixed tensor order, so a
    /// seed fully determines the weights.
    pub fn init(arch: ShredArch, scaling: ScalingParams, seed: u64) -> Result<Self, ShredError> {
        let mut model = Self::zeros(arch, scaling)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden = model.arch.hidden;
        let sdn_in = hidden;
        let (h1, h2) = model.arch.sdn_hidden;
        let fans = [
            hidden, hidden, hidden, // lstm1: w_input, w_recurrent, bias
            hidden, hidden, hidden, // lstm2
            sdn_in, sdn_in, // sdn w1, b1
            h1, h1, // w2, b2
            h2, h2, // w3, b3
        ];
        for (slice, fan) in model.tensor_slices_mut().into_iter().zip(fans) {
            let bound = 1.0 / math::sqrt(fan as f64);
            for v in slice {
                *v = (uniform01(&mut rng) * 2.0 - 1.0) * bound;
            }
        }
        // Forget gates start open (bias +1): without this the recurrence
        // tends to sit on a long loss plateau before cell states learn to
        // persist.
        let h = model.arch.hidden;
        for layer in [&mut model.lstm1, &mut model.lstm2] {
            for b in &mut layer.bias[h..2 * h] {
                *b += 1.0;
            }
        }
        Ok(model)
    }

    pub fn parameter_count(&self) -> usize {
        self.lstm1.parameter_count() + self.lstm2.parameter_count() + self.sdn.parameter_count()
    }

    /// Canonical tensor order.
    pub fn tensors(&self) -> Vec<TensorView<'_>> {
        fn t<'a>(name: &'static str, m: &'a DenseMatrix) -> TensorView<'a> {
            TensorView {
                name,
                rows: m.rows(),
                cols: m.cols(),
                data: m.data(),
            }
        }
        fn b<'a>(name: &'static str, v: &'a [f64]) -> TensorView<'a> {
            TensorView {
                name,
                rows: 1,
                cols: v.len(),
                data: v,
            }
        }
        vec![
            t("lstm1.w_input", &self.lstm1.w_input),
            t("lstm1.w_recurrent", &self.lstm1.w_recurrent),
            b("lstm1.bias", &self.lstm1.bias),
            t("lstm2.w_input", &self.lstm2.w_input),
            t("lstm2.w_recurrent", &self.lstm2.w_recurrent),
            b("lstm2.bias", &self.lstm2.bias),
            t("sdn.w1", &self.sdn.w1),
            b("sdn.b1", &self.sdn.b1),
            t("sdn.w2", &self.sdn.w2),
            b("sdn.b2", &self.sdn.b2),
            t("sdn.w3", &self.sdn.w3),
            b("sdn.b3", &self.sdn.b3),
        ]
    }

    /// Mutable slices in the same canonical order.
    pub fn tensor_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.lstm1.w_input.data_mut(),
            self.lstm1.w_recurrent.data_mut(),
            &mut self.lstm1.bias,
            self.lstm2.w_input.data_mut(),
            self.lstm2.w_recurrent.data_mut(),
            &mut self.lstm2.bias,
            self.sdn.w1.data_mut(),
            &mut self.sdn.b1,
            self.sdn.w2.data_mut(),
            &mut self.sdn.b2,
            self.sdn.w3.data_mut(),
            &mut self.sdn.b3,
        ]
    }
}

#[inline]
fn uniform01(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 / (1u64 << 53) as f64
}
