//! LSTM cells and a length-bucketed batch encoder.
//!
//! Gate blocks are stacked in the order input, forget, candidate, output
//! in every `4H`-row parameter matrix.

use serde::{Deserialize, Serialize};

use super::linalg::{gemm_nn, gemm_nt, gemm_tn, sigmoid};
use crate::error::{Error, Result};

/// Borrowed parameters of one LSTM direction.
#[derive(Debug, Clone, Copy)]
pub struct LstmView<'a> {
    pub input: usize,
    pub hidden: usize,
    /// `4H × E`.
    pub w: &'a [f64],
    /// `4H × H`.
    pub u: &'a [f64],
    /// `4H`.
    pub b: &'a [f64],
}

/// Owned LSTM parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub input: usize,
    pub hidden: usize,
    pub w: Vec<f64>,
    pub u: Vec<f64>,
    pub b: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(input: usize, hidden: usize) -> Self {
        LstmParams {
            input,
            hidden,
            w: vec![0.0; 4 * hidden * input],
            u: vec![0.0; 4 * hidden * hidden],
            b: vec![0.0; 4 * hidden],
        }
    }

    pub fn view(&self) -> LstmView<'_> {
        LstmView {
            input: self.input,
            hidden: self.hidden,
            w: &self.w,
            u: &self.u,
            b: &self.b,
        }
    }
}

/// Gradient buffers matching an [`LstmView`].
pub struct LstmGrad<'a> {
    pub w: &'a mut [f64],
    pub u: &'a mut [f64],
    pub b: &'a mut [f64],
}

fn activate(z: &mut [f64], h: usize) {
    for (j, v) in z.iter_mut().enumerate() {
        *v = if (2 * h..3 * h).contains(&j) { v.tanh() } else { sigmoid(*v) };
    }
}

/// One step of the standard LSTM recurrence.
pub fn lstm_cell_step(x: &[f64], h: &[f64], c: &[f64], p: &LstmView<'_>) -> Result<(Vec<f64>, Vec<f64>)> {
    let hd = p.hidden;
    if x.len() != p.input || h.len() != hd || c.len() != hd {
        return Err(Error::Shape {
            op: "lstm_cell_step",
            left: vec![x.len(), h.len(), c.len()],
            right: vec![p.input, hd, hd],
        });
    }
    let mut z = p.b.to_vec();
    gemm_nt(1, 4 * hd, p.input, x, p.w, &mut z, 1.0);
    gemm_nt(1, 4 * hd, hd, h, p.u, &mut z, 1.0);
    activate(&mut z, hd);
    let mut c2 = vec![0.0; hd];
    let mut h2 = vec![0.0; hd];
    for j in 0..hd {
        c2[j] = z[hd + j] * c[j] + z[j] * z[2 * hd + j];
        h2[j] = z[3 * hd + j] * c2[j].tanh();
    }
    Ok((h2, c2))
}

/// Forward pass state for one direction over a batch of sequences.
pub(crate) struct DirectionCache {
    /// Sorted position → caller's sequence index (longest first).
    order: Vec<usize>,
    lens: Vec<usize>,
    /// Row offset and active batch size per time step.
    offsets: Vec<usize>,
    sizes: Vec<usize>,
    ids: Vec<u32>,
    x: Vec<f64>,
    gates: Vec<f64>,
    c: Vec<f64>,
    tc: Vec<f64>,
    h: Vec<f64>,
}

impl DirectionCache {
    fn rows(&self) -> usize {
        self.ids.len()
    }
}

/// Runs one LSTM direction over `seqs` (already in reading order).
/// Row `i` of `emb` is the embedding of token id `i`.
pub(crate) fn run_direction(seqs: &[&[u32]], emb: &[f64], p: &LstmView<'_>) -> DirectionCache {
    let (e, hd) = (p.input, p.hidden);
    let g4 = 4 * hd;
    let mut order: Vec<usize> = (0..seqs.len()).collect();
    order.sort_by(|&a, &b| seqs[b].len().cmp(&seqs[a].len()));
    let lens: Vec<usize> = order.iter().map(|&i| seqs[i].len()).collect();
    let t_max = lens.first().copied().unwrap_or(0);
    let mut offsets = Vec::with_capacity(t_max);
    let mut sizes = Vec::with_capacity(t_max);
    let mut ids = Vec::new();
    for t in 0..t_max {
        offsets.push(ids.len());
        let bt = lens.partition_point(|&l| l > t);
        sizes.push(bt);
        ids.extend(order[..bt].iter().map(|&i| seqs[i][t]));
    }
    let n = ids.len();
    let mut x = vec![0.0; n * e];
    for (r, &id) in ids.iter().enumerate() {
        let id = id as usize;
        x[r * e..(r + 1) * e].copy_from_slice(&emb[id * e..(id + 1) * e]);
    }
    let mut gates = vec![0.0; n * g4];
    for row in gates.chunks_mut(g4) {
        row.copy_from_slice(p.b);
    }
    gemm_nt(n, g4, e, &x, p.w, &mut gates, 1.0);
    let mut c = vec![0.0; n * hd];
    let mut tc = vec![0.0; n * hd];
    let mut h = vec![0.0; n * hd];
    for t in 0..t_max {
        let (r0, bt) = (offsets[t], sizes[t]);
        if t > 0 {
            let p0 = offsets[t - 1];
            gemm_nt(bt, g4, hd, &h[p0 * hd..], p.u, &mut gates[r0 * g4..(r0 + bt) * g4], 1.0);
        }
        for i in 0..bt {
            let r = r0 + i;
            let z = &mut gates[r * g4..(r + 1) * g4];
            activate(z, hd);
            for j in 0..hd {
                let prev = if t > 0 { c[(offsets[t - 1] + i) * hd + j] } else { 0.0 };
                let cv = z[hd + j] * prev + z[j] * z[2 * hd + j];
                c[r * hd + j] = cv;
                let tv = cv.tanh();
                tc[r * hd + j] = tv;
                h[r * hd + j] = z[3 * hd + j] * tv;
            }
        }
    }
    DirectionCache {
        order,
        lens,
        offsets,
        sizes,
        ids,
        x,
        gates,
        c,
        tc,
        h,
    }
}

/// Per-sequence outputs (caller order, `B × H`): the last hidden state,
/// or the mean over time steps. Empty sequences give zeros.
pub(crate) fn direction_outputs(cache: &DirectionCache, hidden: usize, mean_pool: bool) -> Vec<f64> {
    let b = cache.order.len();
    let mut out = vec![0.0; b * hidden];
    for (pos, &orig) in cache.order.iter().enumerate() {
        let len = cache.lens[pos];
        if len == 0 {
            continue;
        }
        let dst = &mut out[orig * hidden..(orig + 1) * hidden];
        if mean_pool {
            for t in 0..len {
                let r = cache.offsets[t] + pos;
                for (d, v) in dst.iter_mut().zip(&cache.h[r * hidden..(r + 1) * hidden]) {
                    *d += v / len as f64;
                }
            }
        } else {
            let r = cache.offsets[len - 1] + pos;
            dst.copy_from_slice(&cache.h[r * hidden..(r + 1) * hidden]);
        }
    }
    out
}

/// Backpropagates `d_out` (caller order, `B × H`) through one direction,
/// accumulating into `grad` and the embedding gradient `d_emb`.
pub(crate) fn backward_direction(
    cache: &DirectionCache,
    p: &LstmView<'_>,
    d_out: &[f64],
    mean_pool: bool,
    grad: &mut LstmGrad<'_>,
    d_emb: &mut [f64],
) {
    let (e, hd) = (p.input, p.hidden);
    let g4 = 4 * hd;
    let n = cache.rows();
    let t_max = cache.sizes.len();
    if n == 0 {
        return;
    }
    let mut dz = vec![0.0; n * g4];
    let b0 = cache.sizes[0];
    let mut dh_rec = vec![0.0; b0 * hd];
    let mut dc_rec = vec![0.0; b0 * hd];
    let mut dh = vec![0.0; hd];
    for t in (0..t_max).rev() {
        let (r0, bt) = (cache.offsets[t], cache.sizes[t]);
        let next = if t + 1 < t_max { cache.sizes[t + 1] } else { 0 };
        for i in 0..bt {
            let r = r0 + i;
            let orig = cache.order[i];
            let len = cache.lens[i];
            let src = &d_out[orig * hd..(orig + 1) * hd];
            for j in 0..hd {
                let mut g = if i < next { dh_rec[i * hd + j] } else { 0.0 };
                if mean_pool {
                    g += src[j] / len as f64;
                } else if t + 1 == len {
                    g += src[j];
                }
                dh[j] = g;
            }
            let z = &cache.gates[r * g4..(r + 1) * g4];
            let dzr = &mut dz[r * g4..(r + 1) * g4];
            for j in 0..hd {
                let (ig, fg, gg, og) = (z[j], z[hd + j], z[2 * hd + j], z[3 * hd + j]);
                let tcv = cache.tc[r * hd + j];
                let mut dc = dh[j] * og * (1.0 - tcv * tcv);
                if i < next {
                    dc += dc_rec[i * hd + j];
                }
                let prev = if t > 0 { cache.c[(cache.offsets[t - 1] + i) * hd + j] } else { 0.0 };
                dzr[j] = dc * gg * ig * (1.0 - ig);
                dzr[hd + j] = dc * prev * fg * (1.0 - fg);
                dzr[2 * hd + j] = dc * ig * (1.0 - gg * gg);
                dzr[3 * hd + j] = dh[j] * tcv * og * (1.0 - og);
                dc_rec[i * hd + j] = dc * fg;
            }
        }
        if t > 0 {
            let p0 = cache.offsets[t - 1];
            let dzt = &dz[r0 * g4..(r0 + bt) * g4];
            gemm_tn(g4, hd, bt, dzt, &cache.h[p0 * hd..(p0 + bt) * hd], grad.u, 1.0);
            gemm_nn(bt, hd, g4, dzt, p.u, &mut dh_rec[..bt * hd], 0.0);
        }
    }
    gemm_tn(g4, e, n, &dz, &cache.x, grad.w, 1.0);
    for row in dz.chunks(g4) {
        for (a, b) in grad.b.iter_mut().zip(row) {
            *a += b;
        }
    }
    let mut dx = vec![0.0; n * e];
    gemm_nn(n, e, g4, &dz, p.w, &mut dx, 0.0);
    for (r, &id) in cache.ids.iter().enumerate() {
        let id = id as usize;
        for (a, b) in d_emb[id * e..(id + 1) * e].iter_mut().zip(&dx[r * e..(r + 1) * e]) {
            *a += b;
        }
    }
}

/// Cached state of a bidirectional pass over a batch of sentences.
pub(crate) struct BlstmCache {
    pub fwd: DirectionCache,
    pub bwd: DirectionCache,
}

/// Encodes each sequence as `[forward ; backward]` (`B × 2H`).
pub(crate) fn blstm_batch(
    seqs: &[&[u32]],
    emb: &[f64],
    fwd: &LstmView<'_>,
    bwd: &LstmView<'_>,
    mean_pool: bool,
) -> (Vec<f64>, BlstmCache) {
    let hd = fwd.hidden;
    let reversed: Vec<Vec<u32>> = seqs.iter().map(|s| s.iter().rev().copied().collect()).collect();
    let rev_refs: Vec<&[u32]> = reversed.iter().map(Vec::as_slice).collect();
    let fc = run_direction(seqs, emb, fwd);
    let bc = run_direction(&rev_refs, emb, bwd);
    let fo = direction_outputs(&fc, hd, mean_pool);
    let bo = direction_outputs(&bc, hd, mean_pool);
    let mut out = vec![0.0; seqs.len() * 2 * hd];
    for i in 0..seqs.len() {
        out[i * 2 * hd..i * 2 * hd + hd].copy_from_slice(&fo[i * hd..(i + 1) * hd]);
        out[i * 2 * hd + hd..(i + 1) * 2 * hd].copy_from_slice(&bo[i * hd..(i + 1) * hd]);
    }
    (out, BlstmCache { fwd: fc, bwd: bc })
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn blstm_batch_backward(
    cache: &BlstmCache,
    fwd: &LstmView<'_>,
    bwd: &LstmView<'_>,
    d_out: &[f64],
    mean_pool: bool,
    g_fwd: &mut LstmGrad<'_>,
    g_bwd: &mut LstmGrad<'_>,
    d_emb: &mut [f64],
) {
    let hd = fwd.hidden;
    let b = d_out.len() / (2 * hd);
    let mut df = vec![0.0; b * hd];
    let mut db = vec![0.0; b * hd];
    for i in 0..b {
        df[i * hd..(i + 1) * hd].copy_from_slice(&d_out[i * 2 * hd..i * 2 * hd + hd]);
        db[i * hd..(i + 1) * hd].copy_from_slice(&d_out[i * 2 * hd + hd..(i + 1) * 2 * hd]);
    }
    backward_direction(&cache.fwd, fwd, &df, mean_pool, g_fwd, d_emb);
    backward_direction(&cache.bwd, bwd, &db, mean_pool, g_bwd, d_emb);
}

/// Encodes one sentence. Padding ids (0) are dropped wherever they
/// occur, then the sequence is cut to `sent_len`.
pub fn blstm_encode(
    tokens: &[u32],
    emb: &[f64],
    fwd: &LstmView<'_>,
    bwd: &LstmView<'_>,
    sent_len: usize,
    mean_pool: bool,
) -> Vec<f64> {
    let seq: Vec<u32> = tokens.iter().copied().filter(|&t| t != 0).take(sent_len).collect();
    blstm_batch(&[&seq], emb, fwd, bwd, mean_pool).0
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(e: usize, h: usize, rng: &mut ChaCha8Rng) -> LstmParams {
        let mut p = LstmParams::zeros(e, h);
        for v in p.w.iter_mut().chain(p.u.iter_mut()).chain(p.b.iter_mut()) {
            *v = rng.gen_range(-0.8..0.8);
        }
        p
    }

    #[test]
    fn zero_parameters_fix_zero_state() {
        let p = LstmParams::zeros(3, 2);
        let (h, c) = lstm_cell_step(&[1.0, -2.0, 0.5], &[0.0; 2], &[0.0; 2], &p.view()).unwrap();
        assert_eq!(h, vec![0.0; 2]);
        assert_eq!(c, vec![0.0; 2]);
        assert!(lstm_cell_step(&[1.0], &[0.0; 2], &[0.0; 2], &p.view()).is_err());
    }

    #[test]
    fn hidden_state_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = random_params(3, 4, &mut rng);
        p.w.iter_mut().for_each(|w| *w *= 10.0);
        let (h, _) = lstm_cell_step(&[5.0, -5.0, 5.0], &[0.9; 4], &[30.0; 4], &p.view()).unwrap();
        assert!(h.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn cell_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (e, hd) = (3, 2);
        let p = random_params(e, hd, &mut rng);
        let x: Vec<f64> = (0..e).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let emb: Vec<f64> = [vec![0.0; e], x.clone()].concat();
        let wout: Vec<f64> = (0..hd).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |p: &LstmParams| {
            let (h, _) = lstm_cell_step(&x, &[0.0; 2], &[0.0; 2], &p.view()).unwrap();
            h.iter().zip(&wout).map(|(a, b)| a * b).sum::<f64>()
        };
        let cache = run_direction(&[&[1]], &emb, &p.view());
        let mut gw = vec![0.0; p.w.len()];
        let mut gu = vec![0.0; p.u.len()];
        let mut gb = vec![0.0; p.b.len()];
        let mut demb = vec![0.0; emb.len()];
        let mut g = LstmGrad { w: &mut gw, u: &mut gu, b: &mut gb };
        backward_direction(&cache, &p.view(), &wout, false, &mut g, &mut demb);
        for (which, analytic) in [(0, &gw), (2, &gb)] {
            for k in 0..analytic.len() {
                let mut pp = p.clone();
                let mut pm = p.clone();
                let (a, b) = match which {
                    0 => (&mut pp.w[k], &mut pm.w[k]),
                    _ => (&mut pp.b[k], &mut pm.b[k]),
                };
                *a += 1e-6;
                *b -= 1e-6;
                let fd = (loss(&pp) - loss(&pm)) / 2e-6;
                let denom = fd.abs().max(analytic[k].abs()).max(1e-4);
                assert!((fd - analytic[k]).abs() / denom < 1e-6, "{which}/{k}: {fd} vs {}", analytic[k]);
            }
        }
    }

    #[test]
    fn batch_matches_single_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (e, hd) = (3, 2);
        let p = random_params(e, hd, &mut rng);
        let emb: Vec<f64> = (0..5 * e).map(|i| if i < e { 0.0 } else { rng.gen_range(-1.0..1.0) }).collect();
        let seqs: Vec<Vec<u32>> = vec![vec![1, 2], vec![3, 4, 1, 2], vec![], vec![2]];
        let refs: Vec<&[u32]> = seqs.iter().map(Vec::as_slice).collect();
        let cache = run_direction(&refs, &emb, &p.view());
        let out = direction_outputs(&cache, hd, false);
        for (i, s) in seqs.iter().enumerate() {
            let mut h = vec![0.0; hd];
            let mut c = vec![0.0; hd];
            for &id in s {
                let x = &emb[id as usize * e..(id as usize + 1) * e];
                (h, c) = lstm_cell_step(x, &h, &c, &p.view()).unwrap();
            }
            for j in 0..hd {
                assert!((out[i * hd + j] - h[j]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn padding_and_empty_sentences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (e, hd) = (3, 2);
        let (f, b) = (random_params(e, hd, &mut rng), random_params(e, hd, &mut rng));
        let emb: Vec<f64> = (0..4 * e).map(|i| if i < e { 0.0 } else { rng.gen_range(-1.0..1.0) }).collect();
        assert_eq!(blstm_encode(&[0, 0, 0], &emb, &f.view(), &b.view(), 100, false), vec![0.0; 4]);
        let a = blstm_encode(&[1, 2, 3], &emb, &f.view(), &b.view(), 100, false);
        let padded = blstm_encode(&[1, 2, 3, 0, 0, 0, 0], &emb, &f.view(), &b.view(), 100, false);
        assert_eq!(a, padded);
        assert_eq!(a.len(), 2 * hd);
    }

    #[test]
    fn tied_directions_swap_on_reversal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (e, hd) = (3, 2);
        let p = random_params(e, hd, &mut rng);
        let emb: Vec<f64> = (0..4 * e).map(|i| if i < e { 0.0 } else { rng.gen_range(-1.0..1.0) }).collect();
        let a = blstm_encode(&[1, 2, 3], &emb, &p.view(), &p.view(), 100, false);
        let r = blstm_encode(&[3, 2, 1], &emb, &p.view(), &p.view(), 100, false);
        for j in 0..hd {
            assert!((a[j] - r[hd + j]).abs() < 1e-14);
            assert!((a[hd + j] - r[j]).abs() < 1e-14);
        }
    }
}
