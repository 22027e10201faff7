#![allow(dead_code)]

use epne::kernels::{FeatureExtractor, FeatureMode, Scales};
use epne::model::{Decoder, EmbeddingStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central-difference gradient of `f` at `x`.
pub fn numeric_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + step;
            let up = f(&probe);
            probe[i] = x[i] - step;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|)` over whole vectors.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// A small random problem: `h` trained history snapshots plus the current one.
pub struct Micro {
    pub n: usize,
    pub d: usize,
    pub h: usize,
    pub k: usize,
    /// Snapshots `1..=h` are history, `h + 1` is current.
    pub store: EmbeddingStore,
    pub extractor: FeatureExtractor,
    pub pairs: Vec<(usize, usize)>,
    /// `k` frozen negatives per pair.
    pub negatives: Vec<Option<usize>>,
    pub decoder: Decoder,
    pub denominators: Vec<f64>,
}

impl Micro {
    pub fn random(seed: u64) -> Micro {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.random_range(3..=10);
        // cosine is piecewise constant in one dimension
        let d = rng.random_range(2..=4);
        let h = rng.random_range(2..=4);
        let k = rng.random_range(1..=3);
        let levels = if h >= 4 { 2 } else { 1 };
        let extractor = FeatureExtractor::new(h, &Scales::Dyadic(levels), 0.5, FeatureMode::Full).unwrap();
        let slices = (0..=h)
            .map(|_| (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let store = EmbeddingStore::from_snapshots(n, d, slices).unwrap();
        let pairs: Vec<(usize, usize)> = (0..rng.random_range(1..=12))
            .map(|_| {
                let i = rng.random_range(0..n);
                let j = (i + rng.random_range(1..n)) % n;
                (i, j)
            })
            .collect();
        let negatives = (0..pairs.len() * k).map(|_| Some(rng.random_range(0..n))).collect();
        let decoder = Decoder::random(d, extractor.feature_len(d), 2.0, &mut rng);
        let denominators = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        Micro {
            n,
            d,
            h,
            k,
            store,
            extractor,
            pairs,
            negatives,
            decoder,
            denominators,
        }
    }

    pub fn current(&self) -> &[f64] {
        self.store.slice(self.h + 1)
    }

    pub fn previous(&self) -> &[f64] {
        self.store.slice(self.h)
    }

    /// Feature vector of every node at the current snapshot.
    pub fn features(&self) -> Vec<Vec<f64>> {
        (0..self.n as u32)
            .map(|v| {
                let f = self.extractor.extract(&self.store.history(v, self.h + 1, self.h));
                assert!(!f.degenerate);
                f.values
            })
            .collect()
    }

    /// The same problem with every stored vector multiplied by `q` (d x d, row-major).
    pub fn rotated(&self, q: &[f64]) -> Micro {
        let d = self.d;
        let slices = (1..=self.h + 1)
            .map(|t| {
                self.store
                    .slice(t)
                    .chunks(d)
                    .flat_map(|u| (0..d).map(move |r| (0..d).map(|c| q[r * d + c] * u[c]).sum::<f64>()))
                    .collect()
            })
            .collect();
        Micro {
            store: EmbeddingStore::from_snapshots(self.n, d, slices).unwrap(),
            extractor: self.extractor.clone(),
            pairs: self.pairs.clone(),
            negatives: self.negatives.clone(),
            decoder: self.decoder.clone(),
            denominators: self.denominators.clone(),
            ..*self
        }
    }
}

/// Random orthogonal matrix by Gram-Schmidt on a Gaussian-ish matrix.
pub fn random_rotation(d: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut q: Vec<Vec<f64>> = Vec::new();
    while q.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        for b in &q {
            let p: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= p * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            q.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    q.concat()
}

pub const FD_STEP: f64 = 1e-5;

/// Relative error of the structural gradient (negatives frozen).
pub fn struct_gradient_error(m: &Micro) -> f64 {
    use epne::model::{struct_loss, Slab};
    let f = |u: &[f64]| struct_loss(&m.pairs, &m.negatives, m.k, Slab::new(u, m.d)).loss;
    let analytic = struct_loss(&m.pairs, &m.negatives, m.k, Slab::new(m.current(), m.d)).grad;
    relative_error(&analytic, &numeric_gradient(f, m.current(), FD_STEP))
}

/// Relative errors of the temporal gradient w.r.t. the current vectors and the decoder.
pub fn temporal_gradient_errors(m: &Micro, distance: epne::model::Distance) -> (f64, f64) {
    use epne::model::{temporal_loss, Slab};
    let feats = m.features();
    let refs: Vec<Option<&[f64]>> = feats.iter().map(|f| Some(f.as_slice())).collect();
    let analytic = temporal_loss(&m.pairs, Slab::new(m.current(), m.d), &refs, &m.decoder, distance);
    let by_u = |u: &[f64]| temporal_loss(&m.pairs, Slab::new(u, m.d), &refs, &m.decoder, distance).loss;
    let fl = m.decoder.feature_len();
    let by_w = |w: &[f64]| {
        let dec = Decoder::from_weights(m.d, fl, w.to_vec()).unwrap();
        temporal_loss(&m.pairs, Slab::new(m.current(), m.d), &refs, &dec, distance).loss
    };
    (
        relative_error(&analytic.grad_u, &numeric_gradient(by_u, m.current(), FD_STEP)),
        relative_error(&analytic.grad_w, &numeric_gradient(by_w, m.decoder.weights(), FD_STEP)),
    )
}

/// Relative error of the smoothness gradient.
pub fn smooth_gradient_error(m: &Micro) -> f64 {
    use epne::model::{smooth_loss, Slab};
    let prev = Slab::new(m.previous(), m.d);
    let f = |u: &[f64]| smooth_loss(Slab::new(u, m.d), prev, &m.denominators).loss;
    let analytic = smooth_loss(Slab::new(m.current(), m.d), prev, &m.denominators).grad;
    relative_error(&analytic, &numeric_gradient(f, m.current(), FD_STEP))
}

/// Structural and temporal losses of an instance, for rotation checks.
pub fn losses(m: &Micro) -> (f64, f64) {
    use epne::model::{struct_loss, temporal_loss, Distance, Slab};
    let feats = m.features();
    let refs: Vec<Option<&[f64]>> = feats.iter().map(|f| Some(f.as_slice())).collect();
    let slab = Slab::new(m.current(), m.d);
    (
        struct_loss(&m.pairs, &m.negatives, m.k, slab).loss,
        temporal_loss(&m.pairs, slab, &refs, &m.decoder, Distance::OneMinusCos).loss,
    )
}
