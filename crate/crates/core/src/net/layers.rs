//! Layer primitives: linear, 1D convolution, LeakyReLU, sigmoid.
//!
//! Forward functions write activations; backward functions accumulate into
//! weight/bias gradients and write input gradients. All layers operate on
//! flat `f64` slices; convolution data is channel-major (`x[ch * len + pos]`).

use super::tensor::Tensor;

/// `y = W x + b` with `W: [out, in]` row-major.
pub fn linear_forward(w: &Tensor, b: &Tensor, x: &[f64]) -> Vec<f64> {
    let (out_dim, in_dim) = (w.shape[0], w.shape[1]);
    debug_assert_eq!(x.len(), in_dim);
    let mut y = Vec::with_capacity(out_dim);
    for o in 0..out_dim {
        let row = &w.data[o * in_dim..(o + 1) * in_dim];
        let mut acc = b.data[o];
        for (wv, xv) in row.iter().zip(x) {
            acc += wv * xv;
        }
        y.push(acc);
    }
    y
}

/// Backward of `linear_forward`: accumulates `dw += dy xᵀ`, `db += dy`,
/// returns `dx = Wᵀ dy`.
pub fn linear_backward(
    w: &Tensor,
    x: &[f64],
    dy: &[f64],
    dw: &mut Tensor,
    db: &mut Tensor,
) -> Vec<f64> {
    let (out_dim, in_dim) = (w.shape[0], w.shape[1]);
    let mut dx = vec![0.0; in_dim];
    for o in 0..out_dim {
        let g = dy[o];
        db.data[o] += g;
        let row = &w.data[o * in_dim..(o + 1) * in_dim];
        let drow = &mut dw.data[o * in_dim..(o + 1) * in_dim];
        for i in 0..in_dim {
            drow[i] += g * x[i];
            dx[i] += row[i] * g;
        }
    }
    dx
}

/// 1D convolution, stride 1, zero padding `(kernel - 1) / 2`, odd kernels.
/// `w: [out_ch, in_ch, kernel]`, input and output channel-major over `len`.
pub fn conv1d_forward(w: &Tensor, b: &Tensor, x: &[f64], len: usize) -> Vec<f64> {
    let (out_ch, in_ch, kernel) = (w.shape[0], w.shape[1], w.shape[2]);
    let pad = (kernel - 1) / 2;
    debug_assert_eq!(x.len(), in_ch * len);
    let mut y = vec![0.0; out_ch * len];
    for oc in 0..out_ch {
        for pos in 0..len {
            let mut acc = b.data[oc];
            for ic in 0..in_ch {
                let wbase = (oc * in_ch + ic) * kernel;
                for dk in 0..kernel {
                    let src = pos + dk;
                    if src < pad || src - pad >= len {
                        continue;
                    }
                    acc += w.data[wbase + dk] * x[ic * len + src - pad];
                }
            }
            y[oc * len + pos] = acc;
        }
    }
    y
}

/// Backward of `conv1d_forward`. Accumulates into `dw`/`db`, returns `dx`.
pub fn conv1d_backward(
    w: &Tensor,
    x: &[f64],
    dy: &[f64],
    len: usize,
    dw: &mut Tensor,
    db: &mut Tensor,
) -> Vec<f64> {
    let (out_ch, in_ch, kernel) = (w.shape[0], w.shape[1], w.shape[2]);
    let pad = (kernel - 1) / 2;
    let mut dx = vec![0.0; in_ch * len];
    for oc in 0..out_ch {
        for pos in 0..len {
            let g = dy[oc * len + pos];
            db.data[oc] += g;
            for ic in 0..in_ch {
                let wbase = (oc * in_ch + ic) * kernel;
                for dk in 0..kernel {
                    let src = pos + dk;
                    if src < pad || src - pad >= len {
                        continue;
                    }
                    let xi = ic * len + src - pad;
                    dw.data[wbase + dk] += g * x[xi];
                    dx[xi] += w.data[wbase + dk] * g;
                }
            }
        }
    }
    dx
}

pub fn leaky_relu(pre: &[f64], slope: f64) -> Vec<f64> {
    pre.iter()
        .map(|&v| if v >= 0.0 { v } else { slope * v })
        .collect()
}

/// `dx = dy ⊙ leaky'(pre)`.
pub fn leaky_relu_backward(pre: &[f64], dy: &[f64], slope: f64) -> Vec<f64> {
    pre.iter()
        .zip(dy)
        .map(|(&p, &g)| if p >= 0.0 { g } else { slope * g })
        .collect()
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}
