use alloc::format;
use alloc::vec::Vec;

use super::model::{LstmLayerParams, SdnParams, ShredModel};
use super::ShredError;
use crate::linalg::DenseMatrix;
use crate::math;

/// Forward state of one LSTM layer over a window, kept for
/// backpropagation through time.
pub(super) struct LayerCache {
    /// Inputs per step, B x In.
    pub xs: Vec<DenseMatrix>,
    /// Hidden states after each step, B x H.
    pub hs: Vec<DenseMatrix>,
    /// Cell states after each step.
    pub cs: Vec<DenseMatrix>,
    /// Post-activation gates per step, B x 4H in [i f g o] order.
    pub gates: Vec<DenseMatrix>,
    /// tanh of the cell state per step.
    pub tanh_c: Vec<DenseMatrix>,
}

impl LayerCache {
    pub fn last_hidden(&self) -> &DenseMatrix {
        self.hs.last().expect("window has at least one step")
    }
}

/// Batched LSTM layer over `xs` (one B x In matrix per step).
pub(super) fn lstm_layer_forward(
    params: &LstmLayerParams,
    xs: Vec<DenseMatrix>,
) -> Result<LayerCache, ShredError> {
    let h = params.hidden_width;
    let steps = xs.len();
    let batch = xs.first().map_or(0, |x| x.rows());
    let mut cache = LayerCache {
        xs,
        hs: Vec::with_capacity(steps),
        cs: Vec::with_capacity(steps),
        gates: Vec::with_capacity(steps),
        tanh_c: Vec::with_capacity(steps),
    };
    let mut h_prev = DenseMatrix::zeros(batch, h);
    let mut c_prev = DenseMatrix::zeros(batch, h);

    for t in 0..steps {
        let x = &cache.xs[t];
        if x.cols() != params.input_width {
            return Err(ShredError::Shape {
                op: "lstm_forward",
                detail: format!("input width {} vs expected {}", x.cols(), params.input_width),
            });
        }
        // z = x W_x^T + h_prev W_h^T + b
        let mut z = x
            .matmul_a_bt(&params.w_input)
            .map_err(|e| ShredError::Shape {
                op: "lstm_forward",
                detail: format!("{e}"),
            })?;
        let zh = h_prev
            .matmul_a_bt(&params.w_recurrent)
            .expect("recurrent shapes fixed by construction");
        for (zv, hv) in z.data_mut().iter_mut().zip(zh.data()) {
            *zv += hv;
        }
        for b in 0..batch {
            let row = z.row_mut(b);
            for (rv, bv) in row.iter_mut().zip(&params.bias) {
                *rv += bv;
            }
        }

        // Activations in place: sigmoid on i, f, o blocks; tanh on g.
        let mut gates = z;
        let mut c = DenseMatrix::zeros(batch, h);
        let mut tc = DenseMatrix::zeros(batch, h);
        let mut h_new = DenseMatrix::zeros(batch, h);
        for b in 0..batch {
            let row = gates.row_mut(b);
            for (j, v) in row.iter_mut().enumerate() {
                let gate = j / h;
                *v = if gate == 2 { math::tanh(*v) } else { math::sigmoid(*v) };
            }
            let (ig, rest) = row.split_at(h);
            let (fg, rest) = rest.split_at(h);
            let (gg, og) = rest.split_at(h);
            let c_row = c.row_mut(b);
            let cp_row = c_prev.row(b);
            for j in 0..h {
                c_row[j] = fg[j] * cp_row[j] + ig[j] * gg[j];
            }
            let tc_row = tc.row_mut(b);
            for j in 0..h {
                tc_row[j] = math::tanh(c_row[j]);
            }
            let h_row = h_new.row_mut(b);
            for j in 0..h {
                h_row[j] = og[j] * tc_row[j];
            }
        }
        if !h_new.is_finite() || !c.is_finite() {
            return Err(ShredError::Numeric { step: t });
        }
        cache.gates.push(gates);
        cache.cs.push(c.clone());
        cache.tanh_c.push(tc);
        cache.hs.push(h_new.clone());
        h_prev = h_new;
        c_prev = c;
    }
    Ok(cache)
}

/// Full two-layer forward over a batch of windows; returns both layer
/// caches.
pub(super) fn lstm_stack_forward(
    model: &ShredModel,
    windows: &[&DenseMatrix],
) -> Result<(LayerCache, LayerCache), ShredError> {
    let lag = model.arch.lag;
    let batch = windows.len();
    for w in windows {
        if w.rows() != lag || w.cols() != model.arch.n_sensors {
            return Err(ShredError::Shape {
                op: "lstm_forward",
                detail: format!(
                    "window {}x{} vs expected {}x{}",
                    w.rows(),
                    w.cols(),
                    lag,
                    model.arch.n_sensors
                ),
            });
        }
    }
    // Step-major batching: xs[t] is B x n_sensors.
    let mut xs = Vec::with_capacity(lag);
    for t in 0..lag {
        let mut x = DenseMatrix::zeros(batch, model.arch.n_sensors);
        for (b, w) in windows.iter().enumerate() {
            x.row_mut(b).copy_from_slice(w.row(t));
        }
        xs.push(x);
    }
    let l1 = lstm_layer_forward(&model.lstm1, xs)?;
    let l2_inputs: Vec<DenseMatrix> = l1.hs.iter().cloned().collect();
    let l2 = lstm_layer_forward(&model.lstm2, l2_inputs)?;
    Ok((l1, l2))
}

/// Decoder forward state.
pub(super) struct SdnCache {
    /// Decoder input, B x hidden.
    pub input: DenseMatrix,
    /// Post-ReLU activations.
    pub a1: DenseMatrix,
    pub a2: DenseMatrix,
    pub output: DenseMatrix,
}

pub(super) fn sdn_forward_batch(params: &SdnParams, input: DenseMatrix) -> SdnCache {
    let affine = |x: &DenseMatrix, w: &DenseMatrix, b: &[f64]| -> DenseMatrix {
        let mut y = x.matmul_a_bt(w).expect("decoder shapes fixed");
        for r in 0..y.rows() {
            let row = y.row_mut(r);
            for (v, bv) in row.iter_mut().zip(b) {
                *v += bv;
            }
        }
        y
    };
    let mut a1 = affine(&input, &params.w1, &params.b1);
    for v in a1.data_mut() {
        *v = v.max(0.0);
    }
    let mut a2 = affine(&a1, &params.w2, &params.b2);
    for v in a2.data_mut() {
        *v = v.max(0.0);
    }
    let output = affine(&a2, &params.w3, &params.b3);
    SdnCache {
        input,
        a1,
        a2,
        output,
    }
}

// ── Public single-sample operations ──────────────────────────────────

/// Runs the stacked recurrence over one window and returns the final
/// top-layer hidden state.
pub fn lstm_forward(model: &ShredModel, window: &DenseMatrix) -> Result<Vec<f64>, ShredError> {
    let (_, l2) = lstm_stack_forward(model, &[window])?;
    Ok(l2.last_hidden().row(0).to_vec())
}

/// Decoder forward: affine, ReLU, affine, ReLU, affine (linear output).
pub fn sdn_forward(model: &ShredModel, hidden: &[f64]) -> Result<Vec<f64>, ShredError> {
    if hidden.len() != model.arch.hidden {
        return Err(ShredError::Shape {
            op: "sdn_forward",
            detail: format!("hidden {} vs expected {}", hidden.len(), model.arch.hidden),
        });
    }
    if !hidden.iter().all(|v| v.is_finite()) {
        return Err(ShredError::Numeric { step: 0 });
    }
    let input = DenseMatrix::from_vec(1, hidden.len(), hidden.to_vec())
        .map_err(|_| ShredError::Numeric { step: 0 })?;
    let cache = sdn_forward_batch(&model.sdn, input);
    Ok(cache.output.row(0).to_vec())
}

/// Mean squared error over all components; when the parameter head is
/// enabled its component participates with weight one like any other.
pub fn loss(predictions: &DenseMatrix, targets: &DenseMatrix) -> Result<f64, ShredError> {
    if predictions.rows() != targets.rows() || predictions.cols() != targets.cols() {
        return Err(ShredError::Shape {
            op: "loss",
            detail: format!(
                "{}x{} vs {}x{}",
                predictions.rows(),
                predictions.cols(),
                targets.rows(),
                targets.cols()
            ),
        });
    }
    let n = (predictions.rows() * predictions.cols()) as f64;
    let sse: f64 = predictions
        .data()
        .iter()
        .zip(targets.data())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok(sse / n)
}

/// Network output split into the latent block and the optional drive
/// estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// Normalized latent coefficients in output-map block order.
    pub latent: Vec<f64>,
    /// Normalized drive estimate, present when the parameter head is
    /// enabled.
    pub drive: Option<f64>,
}

/// End-to-end inference on one sensor window.
pub fn predict(model: &ShredModel, window: &DenseMatrix) -> Result<Prediction, ShredError> {
    let hidden = lstm_forward(model, window)?;
    let out = sdn_forward(model, &hidden)?;
    let map = &model.arch.output_map;
    if map.param_head {
        let split = out.len() - 1;
        Ok(Prediction {
            latent: out[..split].to_vec(),
            drive: Some(out[split]),
        })
    } else {
        Ok(Prediction {
            latent: out,
            drive: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{MinMax, OutputMap, ScalingParams};
    use crate::shred::model::ShredArch;

    pub(crate) fn toy_arch(
        n_sensors: usize,
        hidden: usize,
        sdn: (usize, usize),
        lag: usize,
        out: usize,
    ) -> ShredArch {
        ShredArch {
            n_sensors,
            hidden,
            sdn_hidden: sdn,
            lag,
            output_map: OutputMap {
                blocks: vec![(alloc::string::String::from("T"), out)],
                param_head: false,
            },
        }
    }

    pub(crate) fn toy_scaling() -> ScalingParams {
        ScalingParams {
            fields: Vec::new(),
            latent: vec![MinMax { min: 0.0, max: 1.0 }],
            drive: None,
        }
    }

    fn lcg_window(lag: usize, ns: usize, seed: u64) -> DenseMatrix {
        let mut state = seed;
        DenseMatrix::from_fn(lag, ns, |_, _| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        })
    }

    #[test]
    fn zero_network_maps_everything_to_zero() {
        let model = ShredModel::zeros(toy_arch(2, 4, (5, 6), 3, 2), toy_scaling()).unwrap();
        let w = lcg_window(3, 2, 9);
        let h = lstm_forward(&model, &w).unwrap();
        assert!(h.iter().all(|&v| v == 0.0));
        let y = sdn_forward(&model, &h).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_gates_make_hidden_input_independent() {
        // Large forget bias (gate -> 1) and large negative input bias
        // (gate -> 0): the cell state stays zero whatever the window.
        let mut model = ShredModel::zeros(toy_arch(2, 4, (5, 6), 4, 2), toy_scaling()).unwrap();
        let h = 4;
        for layer in [&mut model.lstm1, &mut model.lstm2] {
            for j in 0..h {
                layer.bias[j] = -60.0; // input gate closed
                layer.bias[h + j] = 60.0; // forget gate open
            }
        }
        let ha = lstm_forward(&model, &lcg_window(4, 2, 1)).unwrap();
        let hb = lstm_forward(&model, &lcg_window(4, 2, 2)).unwrap();
        for (a, b) in ha.iter().zip(&hb) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn tiny_lstm_matches_scalar_recursion_oracle() {
        // Independent re-implementation of the recursions with plain
        // scalar loops over a one-sample window.
        let arch = toy_arch(2, 4, (5, 6), 3, 2);
        let model = ShredModel::init(arch, toy_scaling(), 1234).unwrap();
        let w = lcg_window(3, 2, 77);

        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let h = 4usize;
        let mut oracle_h = [vec![0.0f64; h], vec![0.0f64; h]];
        let mut oracle_c = [vec![0.0f64; h], vec![0.0f64; h]];
        for t in 0..3 {
            let mut layer_in: Vec<f64> = w.row(t).to_vec();
            for (li, layer) in [&model.lstm1, &model.lstm2].iter().enumerate() {
                let mut new_h = vec![0.0; h];
                let mut new_c = vec![0.0; h];
                for j in 0..h {
                    let gate_pre = |g: usize| -> f64 {
                        let row = g * h + j;
                        let mut acc = layer.bias[row];
                        for (col, x) in layer_in.iter().enumerate() {
                            acc += layer.w_input[(row, col)] * x;
                        }
                        for col in 0..h {
                            acc += layer.w_recurrent[(row, col)] * oracle_h[li][col];
                        }
                        acc
                    };
                    let ig = sig(gate_pre(0));
                    let fg = sig(gate_pre(1));
                    let gg = gate_pre(2).tanh();
                    let og = sig(gate_pre(3));
                    new_c[j] = fg * oracle_c[li][j] + ig * gg;
                    new_h[j] = og * new_c[j].tanh();
                }
                oracle_h[li] = new_h.clone();
                oracle_c[li] = new_c;
                layer_in = new_h;
            }
        }

        let got = lstm_forward(&model, &w).unwrap();
        for (a, b) in got.iter().zip(&oracle_h[1]) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn sdn_bias_passthrough_and_matmul_oracle() {
        let mut model = ShredModel::zeros(toy_arch(2, 4, (5, 6), 3, 3), toy_scaling()).unwrap();
        model.sdn.b3 = vec![1.5, -2.0, 0.25];
        let y = sdn_forward(&model, &[0.0; 4]).unwrap();
        assert_eq!(y, vec![1.5, -2.0, 0.25]);

        // Random decoder against an explicit matrix-arithmetic oracle.
        let model = ShredModel::init(toy_arch(2, 4, (5, 6), 3, 3), toy_scaling(), 5).unwrap();
        let hidden = [0.3, -0.7, 1.2, 0.05];
        let y = sdn_forward(&model, &hidden).unwrap();

        let apply = |w: &DenseMatrix, b: &[f64], x: &[f64]| -> Vec<f64> {
            (0..w.rows())
                .map(|r| {
                    let mut acc = b[r];
                    for (c, xv) in x.iter().enumerate() {
                        acc += w[(r, c)] * xv;
                    }
                    acc
                })
                .collect()
        };
        let relu = |v: Vec<f64>| v.into_iter().map(|x| x.max(0.0)).collect::<Vec<_>>();
        let a1 = relu(apply(&model.sdn.w1, &model.sdn.b1, &hidden));
        let a2 = relu(apply(&model.sdn.w2, &model.sdn.b2, &a1));
        let expect = apply(&model.sdn.w3, &model.sdn.b3, &a2);
        for (a, b) in y.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_examples() {
        let p = DenseMatrix::from_fn(3, 4, |i, j| (i + j) as f64);
        assert_eq!(loss(&p, &p).unwrap(), 0.0);
        let q = DenseMatrix::from_fn(3, 4, |i, j| (i + j) as f64 + 1.0);
        assert_eq!(loss(&p, &q).unwrap(), 1.0);

        // Naive summation oracle on a random pair.
        let a = lcg_window(6, 5, 3);
        let b = lcg_window(6, 5, 4);
        let mut acc = 0.0;
        for i in 0..6 {
            for j in 0..5 {
                let d = a[(i, j)] - b[(i, j)];
                acc += d * d;
            }
        }
        let expect = acc / 30.0;
        assert!((loss(&a, &b).unwrap() - expect).abs() < 1e-14);

        assert!(loss(&a, &DenseMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn predict_splits_param_head() {
        let mut arch = toy_arch(2, 4, (5, 6), 3, 3);
        arch.output_map.param_head = true;
        let model = ShredModel::init(arch, toy_scaling(), 11).unwrap();
        let w = lcg_window(3, 2, 5);
        let pred = predict(&model, &w).unwrap();
        assert_eq!(pred.latent.len(), 3);
        assert!(pred.drive.is_some());

        // Composition check against the two forward stages.
        let h = lstm_forward(&model, &w).unwrap();
        let y = sdn_forward(&model, &h).unwrap();
        assert_eq!(pred.latent.as_slice(), &y[..3]);
        assert_eq!(pred.drive.unwrap(), y[3]);
    }

    #[test]
    fn wrong_window_shape_is_rejected() {
        let model = ShredModel::zeros(toy_arch(2, 4, (5, 6), 3, 2), toy_scaling()).unwrap();
        let bad = DenseMatrix::zeros(4, 2);
        assert!(matches!(
            predict(&model, &bad),
            Err(ShredError::Shape { .. })
        ));
    }
}
