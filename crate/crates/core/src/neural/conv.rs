//! One-dimensional convolution with ReLU and max-over-time pooling.

use super::linalg::{gemm_nn, gemm_nt, gemm_tn};
use crate::error::{Error, Result};

/// Borrowed convolution parameters: `filters × (kernel·E)` weights
/// and one bias per filter.
#[derive(Debug, Clone, Copy)]
pub struct ConvView<'a> {
    pub input: usize,
    pub kernel: usize,
    pub filters: usize,
    pub w: &'a [f64],
    pub b: &'a [f64],
}

pub struct ConvGrad<'a> {
    pub w: &'a mut [f64],
    pub b: &'a mut [f64],
}

pub(crate) struct ConvCache {
    ids: Vec<u32>,
    windows: Vec<f64>,
    pre: Vec<f64>,
    argmax: Vec<usize>,
}

fn positions(len: usize, kernel: usize) -> Result<usize> {
    if kernel == 0 || kernel > len {
        return Err(Error::config(format!("kernel {kernel} does not fit a heading of length {len}")));
    }
    Ok(len - kernel + 1)
}

/// `ids` is the padded heading (length `head_len`); id 0 is an all-zero
/// input row.
pub(crate) fn conv_forward(ids: &[u32], emb: &[f64], p: &ConvView<'_>) -> Result<(Vec<f64>, ConvCache)> {
    let (e, k, f) = (p.input, p.kernel, p.filters);
    let np = positions(ids.len(), k)?;
    let ke = k * e;
    let mut windows = vec![0.0; np * ke];
    for pos in 0..np {
        for j in 0..k {
            let id = ids[pos + j] as usize;
            if id != 0 {
                windows[pos * ke + j * e..pos * ke + (j + 1) * e].copy_from_slice(&emb[id * e..(id + 1) * e]);
            }
        }
    }
    let mut pre = vec![0.0; np * f];
    for row in pre.chunks_mut(f) {
        row.copy_from_slice(p.b);
    }
    gemm_nt(np, f, ke, &windows, p.w, &mut pre, 1.0);
    let mut out = vec![0.0; f];
    let mut argmax = vec![0usize; f];
    for j in 0..f {
        let mut best = pre[j].max(0.0);
        for pos in 1..np {
            let v = pre[pos * f + j].max(0.0);
            if v > best {
                best = v;
                argmax[j] = pos;
            }
        }
        out[j] = best;
    }
    Ok((
        out,
        ConvCache {
            ids: ids.to_vec(),
            windows,
            pre,
            argmax,
        },
    ))
}

pub(crate) fn conv_backward(cache: &ConvCache, p: &ConvView<'_>, d_out: &[f64], grad: &mut ConvGrad<'_>, d_emb: &mut [f64]) {
    let (e, k, f) = (p.input, p.kernel, p.filters);
    let ke = k * e;
    let np = cache.windows.len() / ke;
    let mut dpre = vec![0.0; np * f];
    for j in 0..f {
        let pos = cache.argmax[j];
        if cache.pre[pos * f + j] > 0.0 {
            dpre[pos * f + j] = d_out[j];
        }
    }
    gemm_tn(f, ke, np, &dpre, &cache.windows, grad.w, 1.0);
    for row in dpre.chunks(f) {
        for (a, b) in grad.b.iter_mut().zip(row) {
            *a += b;
        }
    }
    let mut dwin = vec![0.0; np * ke];
    gemm_nn(np, ke, f, &dpre, p.w, &mut dwin, 0.0);
    for pos in 0..np {
        for j in 0..k {
            let id = cache.ids[pos + j] as usize;
            if id != 0 {
                for (a, b) in d_emb[id * e..(id + 1) * e]
                    .iter_mut()
                    .zip(&dwin[pos * ke + j * e..pos * ke + (j + 1) * e])
                {
                    *a += b;
                }
            }
        }
    }
}

/// Pads or truncates `tokens` to `head_len`, then convolves and pools.
pub fn conv_maxpool_encode(tokens: &[u32], emb: &[f64], p: &ConvView<'_>, head_len: usize) -> Result<Vec<f64>> {
    let mut ids: Vec<u32> = tokens.iter().copied().take(head_len).collect();
    ids.resize(head_len, 0);
    Ok(conv_forward(&ids, emb, p)?.0)
}
