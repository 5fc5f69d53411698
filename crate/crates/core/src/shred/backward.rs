use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::forward::{lstm_stack_forward, sdn_forward_batch, LayerCache, SdnCache};
use super::model::{LstmLayerParams, SdnParams, ShredModel};
use super::ShredError;
use crate::linalg::DenseMatrix;

/// Gradients with the same tensor layout as the model.
#[derive(Debug, Clone, PartialEq)]
pub struct ShredGradients {
    pub lstm1_w_input: DenseMatrix,
    pub lstm1_w_recurrent: DenseMatrix,
    pub lstm1_bias: Vec<f64>,
    pub lstm2_w_input: DenseMatrix,
    pub lstm2_w_recurrent: DenseMatrix,
    pub lstm2_bias: Vec<f64>,
    pub sdn_w1: DenseMatrix,
    pub sdn_b1: Vec<f64>,
    pub sdn_w2: DenseMatrix,
    pub sdn_b2: Vec<f64>,
    pub sdn_w3: DenseMatrix,
    pub sdn_b3: Vec<f64>,
}

impl ShredGradients {
    pub fn zeros_like(model: &ShredModel) -> Self {
        let zm = |m: &DenseMatrix| DenseMatrix::zeros(m.rows(), m.cols());
        Self {
            lstm1_w_input: zm(&model.lstm1.w_input),
            lstm1_w_recurrent: zm(&model.lstm1.w_recurrent),
            lstm1_bias: vec![0.0; model.lstm1.bias.len()],
            lstm2_w_input: zm(&model.lstm2.w_input),
            lstm2_w_recurrent: zm(&model.lstm2.w_recurrent),
            lstm2_bias: vec![0.0; model.lstm2.bias.len()],
            sdn_w1: zm(&model.sdn.w1),
            sdn_b1: vec![0.0; model.sdn.b1.len()],
            sdn_w2: zm(&model.sdn.w2),
            sdn_b2: vec![0.0; model.sdn.b2.len()],
            sdn_w3: zm(&model.sdn.w3),
            sdn_b3: vec![0.0; model.sdn.b3.len()],
        }
    }

    /// Mutable slices in the model's canonical tensor order.
    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.lstm1_w_input.data_mut(),
            self.lstm1_w_recurrent.data_mut(),
            &mut self.lstm1_bias,
            self.lstm2_w_input.data_mut(),
            self.lstm2_w_recurrent.data_mut(),
            &mut self.lstm2_bias,
            self.sdn_w1.data_mut(),
            &mut self.sdn_b1,
            self.sdn_w2.data_mut(),
            &mut self.sdn_b2,
            self.sdn_w3.data_mut(),
            &mut self.sdn_b3,
        ]
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        vec![
            self.lstm1_w_input.data(),
            self.lstm1_w_recurrent.data(),
            &self.lstm1_bias,
            self.lstm2_w_input.data(),
            self.lstm2_w_recurrent.data(),
            &self.lstm2_bias,
            self.sdn_w1.data(),
            &self.sdn_b1,
            self.sdn_w2.data(),
            &self.sdn_b2,
            self.sdn_w3.data(),
            &self.sdn_b3,
        ]
    }

    pub fn add_assign(&mut self, other: &ShredGradients) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.slices()
            .into_iter()
            .flat_map(|s| s.iter())
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Exact gradients of the mean-squared-error loss over a batch of
/// windows; returns the loss value alongside.
pub fn backward(
    model: &ShredModel,
    windows: &[&DenseMatrix],
    targets: &DenseMatrix,
) -> Result<(f64, ShredGradients), ShredError> {
    let out_w = model.arch.output_map.width();
    if targets.rows() != windows.len() || targets.cols() != out_w {
        return Err(ShredError::Shape {
            op: "backward",
            detail: format!(
                "targets {}x{} vs batch {} x output {}",
                targets.rows(),
                targets.cols(),
                windows.len(),
                out_w
            ),
        });
    }
    let denom = (windows.len() * out_w) as f64;
    let (sse, grads) = backward_scaled(model, windows, targets, denom)?;
    Ok((sse / denom, grads))
}

/// Backward pass with an explicit normalization: gradients of
/// sum((pred - target)^2) / denom. Summing chunk results with a shared
/// `denom` reproduces the whole-batch gradient exactly.
pub(super) fn backward_scaled(
    model: &ShredModel,
    windows: &[&DenseMatrix],
    targets: &DenseMatrix,
    denom: f64,
) -> Result<(f64, ShredGradients), ShredError> {
    let (l1, l2) = lstm_stack_forward(model, windows)?;
    let sdn = sdn_forward_batch(&model.sdn, l2.last_hidden().clone());

    let batch = windows.len();
    let out_w = model.arch.output_map.width();
    let mut d_y = DenseMatrix::zeros(batch, out_w);
    let mut sse = 0.0;
    for b in 0..batch {
        for j in 0..out_w {
            let r = sdn.output[(b, j)] - targets[(b, j)];
            sse += r * r;
            d_y[(b, j)] = 2.0 * r / denom;
        }
    }

    let mut grads = ShredGradients::zeros_like(model);
    let d_h_top = sdn_backward(&model.sdn, &sdn, &d_y, &mut grads);

    // Top layer: the decoder touches only the final hidden state.
    let steps = model.arch.lag;
    let mut d_ext = vec![None; steps];
    d_ext[steps - 1] = Some(d_h_top);
    let mut d_x2 = lstm_layer_backward(
        &model.lstm2,
        &l2,
        d_ext,
        &mut grads.lstm2_w_input,
        &mut grads.lstm2_w_recurrent,
        &mut grads.lstm2_bias,
    );
    // Bottom layer receives the top layer's input gradients at every step.
    let d_ext: Vec<Option<DenseMatrix>> = d_x2.drain(..).map(Some).collect();
    let _ = lstm_layer_backward(
        &model.lstm1,
        &l1,
        d_ext,
        &mut grads.lstm1_w_input,
        &mut grads.lstm1_w_recurrent,
        &mut grads.lstm1_bias,
    );

    Ok((sse, grads))
}

/// Decoder backward; returns the gradient with respect to its input.
fn sdn_backward(
    params: &SdnParams,
    cache: &SdnCache,
    d_y: &DenseMatrix,
    grads: &mut ShredGradients,
) -> DenseMatrix {
    let add_mat = |dst: &mut DenseMatrix, src: &DenseMatrix| {
        for (d, s) in dst.data_mut().iter_mut().zip(src.data()) {
            *d += s;
        }
    };
    let col_sums = |m: &DenseMatrix, dst: &mut [f64]| {
        for r in 0..m.rows() {
            for (d, v) in dst.iter_mut().zip(m.row(r)) {
                *d += v;
            }
        }
    };

    add_mat(&mut grads.sdn_w3, &d_y.matmul_at_b(&cache.a2).unwrap());
    col_sums(d_y, &mut grads.sdn_b3);
    let mut d_a2 = d_y.matmul(&params.w3).unwrap();
    for (d, a) in d_a2.data_mut().iter_mut().zip(cache.a2.data()) {
        if *a <= 0.0 {
            *d = 0.0;
        }
    }
    add_mat(&mut grads.sdn_w2, &d_a2.matmul_at_b(&cache.a1).unwrap());
    col_sums(&d_a2, &mut grads.sdn_b2);
    let mut d_a1 = d_a2.matmul(&params.w2).unwrap();
    for (d, a) in d_a1.data_mut().iter_mut().zip(cache.a1.data()) {
        if *a <= 0.0 {
            *d = 0.0;
        }
    }
    add_mat(&mut grads.sdn_w1, &d_a1.matmul_at_b(&cache.input).unwrap());
    col_sums(&d_a1, &mut grads.sdn_b1);
    d_a1.matmul(&params.w1).unwrap()
}

/// Backpropagation through time over one layer. `d_ext[t]` is the
/// externally injected hidden-state gradient at step t. Returns the
/// input gradients per step.
fn lstm_layer_backward(
    params: &LstmLayerParams,
    cache: &LayerCache,
    mut d_ext: Vec<Option<DenseMatrix>>,
    g_w_input: &mut DenseMatrix,
    g_w_recurrent: &mut DenseMatrix,
    g_bias: &mut [f64],
) -> Vec<DenseMatrix> {
    let steps = cache.xs.len();
    let h = params.hidden_width;
    let batch = cache.xs[0].rows();
    let mut d_xs = vec![DenseMatrix::zeros(0, 0); steps];
    let mut d_h = DenseMatrix::zeros(batch, h);
    let mut d_c = DenseMatrix::zeros(batch, h);
    let zero = DenseMatrix::zeros(batch, h);

    for t in (0..steps).rev() {
        if let Some(ext) = d_ext[t].take() {
            for (d, e) in d_h.data_mut().iter_mut().zip(ext.data()) {
                *d += e;
            }
        }
        let gates = &cache.gates[t];
        let tc = &cache.tanh_c[t];
        let c_prev = if t == 0 { &zero } else { &cache.cs[t - 1] };
        let h_prev = if t == 0 { &zero } else { &cache.hs[t - 1] };

        let mut d_z = DenseMatrix::zeros(batch, 4 * h);
        let mut d_c_prev = DenseMatrix::zeros(batch, h);
        for b in 0..batch {
            let g_row = gates.row(b);
            let (ig, rest) = g_row.split_at(h);
            let (fg, rest) = rest.split_at(h);
            let (gg, og) = rest.split_at(h);
            let tc_row = tc.row(b);
            let cp_row = c_prev.row(b);
            let dh_row = d_h.row(b);
            let dc_row = d_c.row(b);
            let dz_row = d_z.row_mut(b);
            for j in 0..h {
                let d_o = dh_row[j] * tc_row[j];
                let dc = dc_row[j] + dh_row[j] * og[j] * (1.0 - tc_row[j] * tc_row[j]);
                let d_i = dc * gg[j];
                let d_g = dc * ig[j];
                let d_f = dc * cp_row[j];
                d_c_prev[(b, j)] = dc * fg[j];
                dz_row[j] = d_i * ig[j] * (1.0 - ig[j]);
                dz_row[h + j] = d_f * fg[j] * (1.0 - fg[j]);
                dz_row[2 * h + j] = d_g * (1.0 - gg[j] * gg[j]);
                dz_row[3 * h + j] = d_o * og[j] * (1.0 - og[j]);
            }
        }

        // Accumulate weight gradients and propagate.
        let gw_x = d_z.matmul_at_b(&cache.xs[t]).unwrap();
        for (d, s) in g_w_input.data_mut().iter_mut().zip(gw_x.data()) {
            *d += s;
        }
        let gw_h = d_z.matmul_at_b(h_prev).unwrap();
        for (d, s) in g_w_recurrent.data_mut().iter_mut().zip(gw_h.data()) {
            *d += s;
        }
        for b in 0..batch {
            for (d, v) in g_bias.iter_mut().zip(d_z.row(b)) {
                *d += v;
            }
        }
        d_xs[t] = d_z.matmul(&params.w_input).unwrap();
        d_h = d_z.matmul(&params.w_recurrent).unwrap();
        d_c = d_c_prev;
    }
    d_xs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{MinMax, OutputMap, ScalingParams};
    use crate::shred::forward::predict;
    use crate::shred::model::{ShredArch, ShredModel};

    fn toy_scaling() -> ScalingParams {
        ScalingParams {
            fields: Vec::new(),
            latent: vec![MinMax { min: 0.0, max: 1.0 }],
            drive: None,
        }
    }

    fn tiny_arch() -> ShredArch {
        ShredArch {
            n_sensors: 2,
            hidden: 8,
            sdn_hidden: (10, 12),
            lag: 5,
            output_map: OutputMap {
                blocks: vec![(alloc::string::String::from("T"), 3)],
                param_head: true,
            },
        }
    }

    fn lcg_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        let mut state = seed;
        DenseMatrix::from_fn(rows, cols, |_, _| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        })
    }

    #[test]
    fn zero_loss_batch_gives_zero_gradients() {
        let model = ShredModel::init(tiny_arch(), toy_scaling(), 3).unwrap();
        let w1 = lcg_matrix(5, 2, 1);
        let w2 = lcg_matrix(5, 2, 2);
        // Targets equal to the model's own predictions.
        let p1 = predict(&model, &w1).unwrap();
        let p2 = predict(&model, &w2).unwrap();
        let mut targets = DenseMatrix::zeros(2, 4);
        for (j, v) in p1.latent.iter().chain(p1.drive.iter()).enumerate() {
            targets[(0, j)] = *v;
        }
        for (j, v) in p2.latent.iter().chain(p2.drive.iter()).enumerate() {
            targets[(1, j)] = *v;
        }
        let (loss, grads) = backward(&model, &[&w1, &w2], &targets).unwrap();
        assert!(loss < 1e-28);
        assert!(grads.max_abs() < 1e-13);
    }

    #[test]
    fn final_bias_gradient_equals_scaled_residual_sum() {
        let model = ShredModel::init(tiny_arch(), toy_scaling(), 9).unwrap();
        let w1 = lcg_matrix(5, 2, 4);
        let w2 = lcg_matrix(5, 2, 5);
        let targets = lcg_matrix(2, 4, 6);
        let (_, grads) = backward(&model, &[&w1, &w2], &targets).unwrap();

        let p1 = predict(&model, &w1).unwrap();
        let p2 = predict(&model, &w2).unwrap();
        let outs = [
            p1.latent.iter().chain(p1.drive.iter()).copied().collect::<Vec<_>>(),
            p2.latent.iter().chain(p2.drive.iter()).copied().collect::<Vec<_>>(),
        ];
        let denom = (2 * 4) as f64;
        for j in 0..4 {
            let expect: f64 = (0..2)
                .map(|b| 2.0 * (outs[b][j] - targets[(b, j)]) / denom)
                .sum();
            assert!(
                (grads.sdn_b3[j] - expect).abs() < 1e-12,
                "bias grad {} vs {}",
                grads.sdn_b3[j],
                expect
            );
        }
    }

    /// Every analytic gradient component matches central finite
    /// differences on the tiny configuration.
    #[test]
    fn finite_difference_gradient_check() {
        let model = ShredModel::init(tiny_arch(), toy_scaling(), 42).unwrap();
        let w1 = lcg_matrix(5, 2, 11);
        let w2 = lcg_matrix(5, 2, 12);
        let w3 = lcg_matrix(5, 2, 13);
        let targets = lcg_matrix(3, 4, 14);

        let (_, grads) = backward(&model, &[&w1, &w2, &w3], &targets).unwrap();
        let analytic: Vec<Vec<f64>> = grads.slices().into_iter().map(|s| s.to_vec()).collect();

        let eps = 1e-6;
        let eval = |m: &ShredModel| -> f64 {
            let (loss, _) = backward(m, &[&w1, &w2, &w3], &targets).unwrap();
            loss
        };
        let mut worst: f64 = 0.0;
        for tensor in 0..analytic.len() {
            let len = analytic[tensor].len();
            for idx in 0..len {
                let mut mp = model.clone();
                mp.tensor_slices_mut()[tensor][idx] += eps;
                let lp = eval(&mp);
                let mut mm = model.clone();
                mm.tensor_slices_mut()[tensor][idx] -= eps;
                let lm = eval(&mm);
                let numeric = (lp - lm) / (2.0 * eps);
                let a = analytic[tensor][idx];
                // Two-tolerance comparison: the absolute floor covers the
                // truncation noise of the finite differences themselves.
                let diff = (a - numeric).abs();
                let scale = a.abs().max(numeric.abs());
                assert!(
                    diff <= 1e-10 + 1e-5 * scale,
                    "tensor {tensor} index {idx}: analytic {a:.3e} vs numeric {numeric:.3e} (diff {diff:.2e})"
                );
                worst = worst.max(diff / scale.max(1e-10));
            }
        }
        // The check is meaningful only if gradients are non-trivial.
        assert!(grads.max_abs() > 1e-6, "degenerate gradient check");
        assert!(worst > 0.0);
    }
}
