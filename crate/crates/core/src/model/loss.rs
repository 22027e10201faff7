//! Loss terms and their exact gradients.
//!
//! Every function here is pure: vectors are read from a [`Slab`] (rows of a
//! fixed width), pairs address rows of that slab, and gradients come back
//! with the same shape. The trainer feeds them a per-walk working set; tests
//! feed them a whole snapshot and compare against finite differences.

use rand::Rng;

use super::{Decoder, Distance, ModelError, NORM_EPS};
use crate::graph::{NodeId, SamplingTable};

/// Row-major view of equally sized vectors.
#[derive(Clone, Copy, Debug)]
pub struct Slab<'a> {
    data: &'a [f64],
    dim: usize,
}

impl<'a> Slab<'a> {
    pub fn new(data: &'a [f64], dim: usize) -> Self {
        assert!(dim > 0 && data.len().is_multiple_of(dim), "slab length not a multiple of dim");
        Slab { data, dim }
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, r: usize) -> &'a [f64] {
        &self.data[r * self.dim..(r + 1) * self.dim]
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(sigmoid(x))`, stable for large `|x|`.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// `(sigmoid(x), ln sigmoid(x))` sharing one exponential.
fn sigmoid_and_log(x: f64) -> (f64, f64) {
    let e = (-x.abs()).exp();
    if x >= 0.0 {
        (1.0 / (1.0 + e), -e.ln_1p())
    } else {
        (e / (1.0 + e), x - e.ln_1p())
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Euclidean distance.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `W x` restricted to a block of columns.
fn block_matvec(dec: &Decoder, col_offset: usize, x: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        *o = dot(&dec.row(r)[col_offset..col_offset + x.len()], x);
    }
}

/// `sigmoid(W [s_i ; s_j])`.
pub fn decode_relpos(s_i: &[f64], s_j: &[f64], dec: &Decoder) -> Result<Vec<f64>, ModelError> {
    for s in [s_i, s_j] {
        if s.len() != dec.feature_len() {
            return Err(ModelError::Shape {
                expected: dec.feature_len(),
                got: s.len(),
            });
        }
    }
    let mut left = vec![0.0; dec.out_dim()];
    let mut right = vec![0.0; dec.out_dim()];
    block_matvec(dec, 0, s_i, &mut left);
    block_matvec(dec, dec.feature_len(), s_j, &mut right);
    Ok(left.iter().zip(&right).map(|(a, b)| sigmoid(a + b)).collect())
}

/// Loss value with a gradient shaped like the slab it was computed on.
#[derive(Clone, Debug, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Draws `k` negatives per pair from `table`, redrawing any that hit one of
/// the pair's endpoints. A slot stays `None` if no valid node turns up (the
/// table holds only the two endpoints).
pub fn draw_negatives<R: Rng + ?Sized>(
    pairs: &[(NodeId, NodeId)],
    table: &SamplingTable,
    k: usize,
    rng: &mut R,
) -> Vec<Option<NodeId>> {
    const MAX_TRIES: usize = 64;
    let mut out = Vec::with_capacity(pairs.len() * k);
    for &(i, j) in pairs {
        for _ in 0..k {
            let draw = (0..MAX_TRIES).map(|_| table.sample(rng)).find(|&n| n != i && n != j);
            out.push(draw);
        }
    }
    out
}

/// Skip-gram loss with negative sampling over a batch of pairs,
/// `-sum [ln sig(u_i.u_j) + sum_n ln sig(-u_i.u_n)]`.
///
/// `negatives` holds `k` entries per pair, in pair order.
pub fn struct_loss(pairs: &[(usize, usize)], negatives: &[Option<usize>], k: usize, vectors: Slab<'_>) -> LossGrad {
    assert_eq!(negatives.len(), pairs.len() * k, "need k negatives per pair");
    let mut grad = vec![0.0; vectors.rows() * vectors.dim()];
    let d = vectors.dim();
    let mut loss = 0.0;
    for (p, &(i, j)) in pairs.iter().enumerate() {
        let (ui, uj) = (vectors.row(i), vectors.row(j));
        let (sig, log_sig) = sigmoid_and_log(dot(ui, uj));
        loss -= log_sig;
        let g = sig - 1.0;
        axpy(g, uj, &mut grad[i * d..(i + 1) * d]);
        axpy(g, ui, &mut grad[j * d..(j + 1) * d]);
        for n in negatives[p * k..(p + 1) * k].iter().flatten().copied() {
            let un = vectors.row(n);
            let (sig, log_sig) = sigmoid_and_log(-dot(ui, un));
            loss -= log_sig;
            let gn = 1.0 - sig;
            axpy(gn, un, &mut grad[i * d..(i + 1) * d]);
            axpy(gn, ui, &mut grad[n * d..(n + 1) * d]);
        }
    }
    LossGrad { loss, grad }
}

/// Temporal loss over a batch of pairs and its gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct TemporalGrad {
    pub loss: f64,
    /// Pairs that contributed.
    pub evaluated: usize,
    /// Pairs with a missing or degenerate feature vector.
    pub degenerate: usize,
    /// Pairs skipped because a norm fell below [`NORM_EPS`].
    pub skipped: usize,
    /// Gradient w.r.t. the current-snapshot vectors, slab-shaped.
    pub grad_u: Vec<f64>,
    /// Gradient w.r.t. the decoder weights, row-major like the decoder.
    pub grad_w: Vec<f64>,
}

/// `sum D(u_i - u_j, sigmoid(W [s_i ; s_j]))` over `pairs`.
///
/// `features[r]` is the temporal feature vector of slab row `r`, or `None`
/// when it is degenerate. Features are constants: gradients flow only into
/// the current vectors and `W`.
pub fn temporal_loss(
    pairs: &[(usize, usize)],
    vectors: Slab<'_>,
    features: &[Option<&[f64]>],
    dec: &Decoder,
    distance: Distance,
) -> TemporalGrad {
    let d = vectors.dim();
    let ds = dec.feature_len();
    assert_eq!(dec.out_dim(), d, "decoder output must match embedding dim");
    let rows = vectors.rows();
    let mut out = TemporalGrad {
        loss: 0.0,
        evaluated: 0,
        degenerate: 0,
        skipped: 0,
        grad_u: vec![0.0; rows * d],
        grad_w: vec![0.0; dec.weights().len()],
    };
    let sign = match distance {
        Distance::OneMinusCos => -1.0,
        Distance::RawCos => 1.0,
    };

    // Per-row projections through each half of W, and the summed output
    // deltas that become the rank-one updates of W.
    let mut left: Vec<Option<Vec<f64>>> = vec![None; rows];
    let mut right: Vec<Option<Vec<f64>>> = vec![None; rows];
    let mut left_delta: Vec<Option<Vec<f64>>> = vec![None; rows];
    let mut right_delta: Vec<Option<Vec<f64>>> = vec![None; rows];

    let mut x = vec![0.0; d];
    let mut y = vec![0.0; d];
    for &(i, j) in pairs {
        let (Some(si), Some(sj)) = (features[i], features[j]) else {
            out.degenerate += 1;
            continue;
        };
        let li = left[i].get_or_insert_with(|| {
            let mut v = vec![0.0; d];
            block_matvec(dec, 0, si, &mut v);
            v
        });
        for (yk, lk) in y.iter_mut().zip(li.iter()) {
            *yk = *lk;
        }
        let rj = right[j].get_or_insert_with(|| {
            let mut v = vec![0.0; d];
            block_matvec(dec, ds, sj, &mut v);
            v
        });
        for (yk, rk) in y.iter_mut().zip(rj.iter()) {
            *yk = sigmoid(*yk + rk);
        }
        let (ui, uj) = (vectors.row(i), vectors.row(j));
        for k in 0..d {
            x[k] = ui[k] - uj[k];
        }
        let (nx, ny) = (norm(&x), norm(&y));
        if nx < NORM_EPS || ny < NORM_EPS {
            out.skipped += 1;
            continue;
        }
        let cos = dot(&x, &y) / (nx * ny);
        out.loss += match distance {
            Distance::OneMinusCos => 1.0 - cos,
            Distance::RawCos => cos,
        };
        out.evaluated += 1;

        let inv = 1.0 / (nx * ny);
        let gi = &mut out.grad_u[i * d..(i + 1) * d];
        for k in 0..d {
            gi[k] += sign * (y[k] * inv - cos * x[k] / (nx * nx));
        }
        let gj = &mut out.grad_u[j * d..(j + 1) * d];
        for k in 0..d {
            gj[k] -= sign * (y[k] * inv - cos * x[k] / (nx * nx));
        }
        let ld = left_delta[i].get_or_insert_with(|| vec![0.0; d]);
        let rd = right_delta[j].get_or_insert_with(|| vec![0.0; d]);
        for k in 0..d {
            let dy = sign * (x[k] * inv - cos * y[k] / (ny * ny));
            let dz = dy * y[k] * (1.0 - y[k]);
            ld[k] += dz;
            rd[k] += dz;
        }
    }

    let cols = dec.cols();
    for (offset, deltas) in [(0, &left_delta), (ds, &right_delta)] {
        for (r, delta) in deltas.iter().enumerate() {
            let (Some(delta), Some(s)) = (delta, features[r]) else {
                continue;
            };
            for (row, &dz) in delta.iter().enumerate() {
                if dz != 0.0 {
                    let start = row * cols + offset;
                    axpy(dz, s, &mut out.grad_w[start..start + ds]);
                }
            }
        }
    }
    out
}

/// `sum_v |u_v - p_v| / den_v` with `p` the previous snapshot's vectors.
pub fn smooth_loss(current: Slab<'_>, previous: Slab<'_>, denominators: &[f64]) -> LossGrad {
    assert_eq!(current.rows(), previous.rows());
    assert_eq!(current.rows(), denominators.len());
    let d = current.dim();
    let mut grad = vec![0.0; current.rows() * d];
    let mut loss = 0.0;
    for (v, &den) in denominators.iter().enumerate() {
        let (u, p) = (current.row(v), previous.row(v));
        let dist = distance(u, p);
        loss += dist / den;
        if dist > 0.0 {
            for k in 0..d {
                grad[v * d + k] = (u[k] - p[k]) / (dist * den);
            }
        }
    }
    LossGrad { loss, grad }
}

/// Proximal step for `step * |u - p|`: moves `u` toward `p` by `step`,
/// stopping at `p` instead of overshooting.
pub fn smooth_prox(u: &mut [f64], p: &[f64], step: f64) {
    let dist = distance(u, p);
    if dist == 0.0 {
        return;
    }
    let keep = (1.0 - step / dist).max(0.0);
    for (uk, pk) in u.iter_mut().zip(p) {
        *uk = pk + keep * (*uk - pk);
    }
}
