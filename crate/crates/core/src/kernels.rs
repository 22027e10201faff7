//! Fixed causal-convolution kernels and the temporal features they extract
//! from a node's embedding history.
//!
//! A history window holds the `m <= h` most recent past vectors of a node,
//! oldest first. Kernel index `k = 0` multiplies the oldest row and
//! `k = m - 1` the most recent one. Two kinds of kernel are used:
//!
//! * Haar pulses: `+c` on the older half of a support interval and `-c` on
//!   the recent half, with `c = 1/sqrt(#nonzero taps)`. They are zero-mean, so
//!   they respond only to change within their interval, at their scale.
//! * One exponential decay kernel, `exp(-rate * age)`, where the age of the
//!   most recent row is 0. It summarises the trend of the history.
//!
//! The feature layout of one node is `[decay block | haar blocks...]`, each
//! block `d` wide, Haar blocks in bank order: coarsest scale first, shifts
//! left to right.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum KernelError {
    #[error("history length must be at least {min}, got {h}")]
    WindowTooShort { h: usize, min: usize },
    #[error("{levels} scale(s) need a window of at least 2^{levels} steps, got {h}")]
    TooManyScales { h: usize, levels: usize },
    #[error("decay rate must be positive and finite, got {0}")]
    BadDecayRate(f64),
    #[error("custom scale {0} must lie in (0, 1]")]
    BadScale(f64),
    #[error("custom scale {scale} gives support {support} (< 2) on a window of {h}")]
    ScaleTooFine { scale: f64, support: usize, h: usize },
    #[error("kernel of length {kernel} applied to window of length {window}")]
    Shape { kernel: usize, window: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub enum KernelKind {
    /// `scale` is the 0-based index into the bank's scale list.
    Haar { scale: usize, shift: usize, support: usize },
    Decay { rate: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Kernel {
    pub weights: Vec<f64>,
    pub kind: KernelKind,
}

impl Kernel {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// A Haar pulse of `support` taps starting at `shift` inside a window of
/// `len` taps. Odd supports leave the middle tap at zero.
pub fn haar_kernel(len: usize, scale: usize, shift: usize, support: usize) -> Kernel {
    assert!(support >= 2 && shift + support <= len, "haar support out of window");
    let half = support / 2;
    let c = 1.0 / ((2 * half) as f64).sqrt();
    let mut weights = vec![0.0; len];
    for k in 0..half {
        weights[shift + k] = c;
        weights[shift + support - 1 - k] = -c;
    }
    Kernel {
        weights,
        kind: KernelKind::Haar { scale, shift, support },
    }
}

/// Exponential decay kernel, `exp(-rate * age)` with age `h - 1 - k`.
pub fn decay_kernel(h: usize, rate: f64) -> Result<Kernel, KernelError> {
    if h == 0 {
        return Err(KernelError::WindowTooShort { h, min: 1 });
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(KernelError::BadDecayRate(rate));
    }
    let weights = (0..h).map(|k| (-rate * (h - 1 - k) as f64).exp()).collect();
    Ok(Kernel {
        weights,
        kind: KernelKind::Decay { rate },
    })
}

/// How the frequency block is laid out.
#[derive(Clone, Debug, PartialEq)]
pub enum Scales {
    /// `levels` dyadic levels; level `l` has `2^(l-1)` kernels tiling the window.
    Dyadic(usize),
    /// Support lengths given as fractions of the window. A fraction `b`
    /// contributes `round(1/b)` kernels of support `round(b * h)`.
    Custom(Vec<f64>),
}

impl Scales {
    fn fractions(&self) -> Vec<f64> {
        match self {
            Scales::Dyadic(levels) => (0..*levels).map(|l| 0.5f64.powi(l as i32)).collect(),
            Scales::Custom(b) => b.clone(),
        }
    }

    /// Checks the scales against a full window of `h` steps.
    pub fn validate(&self, h: usize) -> Result<(), KernelError> {
        if h < 2 {
            return Err(KernelError::WindowTooShort { h, min: 2 });
        }
        match self {
            Scales::Dyadic(levels) => {
                if *levels == 0 || (1usize << (*levels).min(63)) > h {
                    return Err(KernelError::TooManyScales { h, levels: *levels });
                }
            }
            Scales::Custom(bs) => {
                for &b in bs {
                    if !(b > 0.0 && b <= 1.0) {
                        return Err(KernelError::BadScale(b));
                    }
                    let support = (b * h as f64).round() as usize;
                    if support < 2 {
                        return Err(KernelError::ScaleTooFine { scale: b, support, h });
                    }
                }
            }
        }
        Ok(())
    }

    /// Total number of Haar kernels in a full bank.
    pub fn kernel_count(&self) -> usize {
        self.fractions().iter().map(|&b| per_scale_count(b)).sum()
    }
}

fn per_scale_count(b: f64) -> usize {
    ((1.0 / b).round() as usize).max(1)
}

/// Haar kernels for a window of `len` taps, one slot per kernel of the full
/// layout. Slots whose support would drop below 2 taps are `None`.
fn haar_slots(len: usize, scales: &Scales) -> Vec<Option<Kernel>> {
    let mut slots = Vec::new();
    for (scale, b) in scales.fractions().into_iter().enumerate() {
        let count = per_scale_count(b);
        let support = (b * len as f64).round() as usize;
        for k in 0..count {
            if support < 2 || support > len {
                slots.push(None);
                continue;
            }
            let start = (k as f64 * len as f64 / count as f64).round() as usize;
            let shift = start.min(len - support);
            slots.push(Some(haar_kernel(len, scale, shift, support)));
        }
    }
    slots
}

/// Wavelet part of a full bank: `2^levels - 1` dyadic Haar kernels over `h`.
pub fn haar_bank(h: usize, levels: usize) -> Result<Vec<Kernel>, KernelError> {
    let scales = Scales::Dyadic(levels);
    scales.validate(h)?;
    Ok(haar_slots(h, &scales).into_iter().flatten().collect())
}

/// Which feature blocks are emitted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureMode {
    #[default]
    Full,
    /// Decay block only.
    TimeOnly,
    /// Haar blocks only.
    FreqOnly,
}

/// Kernels for one window length, laid out for a fixed full-window bank.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelBank {
    pub window: usize,
    pub haar: Vec<Option<Kernel>>,
    pub decay: Kernel,
    pub mode: FeatureMode,
}

impl KernelBank {
    /// Bank for a window of `window` taps. `window` may be shorter than the
    /// configured history length; the layout does not change, kernels that
    /// no longer fit become zero blocks.
    pub fn new(window: usize, scales: &Scales, decay_rate: f64, mode: FeatureMode) -> Result<Self, KernelError> {
        Ok(KernelBank {
            window,
            haar: haar_slots(window, scales),
            decay: decay_kernel(window, decay_rate)?,
            mode,
        })
    }

    /// Number of `d`-wide blocks in a feature vector.
    pub fn block_count(&self) -> usize {
        match self.mode {
            FeatureMode::Full => 1 + self.haar.len(),
            FeatureMode::TimeOnly => 1,
            FeatureMode::FreqOnly => self.haar.len(),
        }
    }

    pub fn feature_len(&self, dim: usize) -> usize {
        dim * self.block_count()
    }

    /// True when the frequency block is in use but no Haar kernel fits the
    /// window.
    pub fn is_degenerate(&self) -> bool {
        self.mode != FeatureMode::TimeOnly && self.haar.iter().all(Option::is_none)
    }
}

/// Past embeddings of one node, oldest first.
#[derive(Clone, Debug)]
pub struct HistoryWindow<'a> {
    rows: Vec<&'a [f64]>,
    dim: usize,
}

impl<'a> HistoryWindow<'a> {
    pub fn new(rows: Vec<&'a [f64]>) -> Self {
        let dim = rows.first().map_or(0, |r| r.len());
        assert!(rows.iter().all(|r| r.len() == dim), "ragged history window");
        HistoryWindow { rows, dim }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[&'a [f64]] {
        &self.rows
    }
}

/// `sum_k u_k * f(k)` over the window, written into `out`.
///
/// Positive and negative taps accumulate separately, so a zero-mean kernel
/// with mirrored taps maps a constant window to exactly zero.
fn conv_into(window: &HistoryWindow<'_>, weights: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    let mut negative = if weights.iter().any(|&w| w < 0.0) { vec![0.0; out.len()] } else { Vec::new() };
    for (row, &w) in window.rows.iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let acc = if w > 0.0 { &mut *out } else { &mut negative[..] };
        for (o, &u) in acc.iter_mut().zip(row.iter()) {
            *o += w * u;
        }
    }
    for (o, n) in out.iter_mut().zip(&negative) {
        *o += n;
    }
}

/// Causal convolution of a history window with one kernel.
pub fn causal_conv(window: &HistoryWindow<'_>, kernel: &Kernel) -> Result<Vec<f64>, KernelError> {
    if kernel.len() != window.len() {
        return Err(KernelError::Shape {
            kernel: kernel.len(),
            window: window.len(),
        });
    }
    let mut out = vec![0.0; window.dim()];
    conv_into(window, &kernel.weights, &mut out);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    /// Set when the window was too short for any Haar kernel.
    pub degenerate: bool,
}

/// Concatenated decay and Haar responses of a window.
///
/// # Panics
///
/// If the bank was built for a different window length.
pub fn temporal_features(window: &HistoryWindow<'_>, bank: &KernelBank) -> FeatureVector {
    assert_eq!(window.len(), bank.window, "bank built for another window length");
    let d = window.dim();
    let mut values = vec![0.0; bank.feature_len(d)];
    let mut blocks = values.chunks_mut(d);
    if bank.mode != FeatureMode::FreqOnly {
        conv_into(window, &bank.decay.weights, blocks.next().expect("decay block"));
    }
    if bank.mode != FeatureMode::TimeOnly {
        for (slot, block) in bank.haar.iter().zip(blocks) {
            if let Some(kernel) = slot {
                conv_into(window, &kernel.weights, block);
            }
        }
    }
    FeatureVector {
        values,
        degenerate: bank.is_degenerate(),
    }
}

/// Banks for every window length `1..=h`, so histories shorter than `h`
/// (early snapshots) get kernels regenerated for their actual length.
#[derive(Clone, Debug)]
pub struct FeatureExtractor {
    history_len: usize,
    banks: Vec<KernelBank>,
}

impl FeatureExtractor {
    pub fn new(history_len: usize, scales: &Scales, decay_rate: f64, mode: FeatureMode) -> Result<Self, KernelError> {
        scales.validate(history_len)?;
        let banks = (1..=history_len)
            .map(|m| KernelBank::new(m, scales, decay_rate, mode))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(FeatureExtractor { history_len, banks })
    }

    pub fn history_len(&self) -> usize {
        self.history_len
    }

    /// Bank for the full window.
    pub fn full_bank(&self) -> &KernelBank {
        self.banks.last().expect("history_len >= 2")
    }

    /// Bank for a window of `len` taps, `1 <= len <= h`.
    pub fn bank(&self, len: usize) -> &KernelBank {
        &self.banks[len - 1]
    }

    pub fn feature_len(&self, dim: usize) -> usize {
        self.full_bank().feature_len(dim)
    }

    /// Features of a window of any length in `1..=h`.
    pub fn extract(&self, window: &HistoryWindow<'_>) -> FeatureVector {
        temporal_features(window, self.bank(window.len()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar_window(values: &[f64]) -> Vec<Vec<f64>> {
        values.iter().map(|&v| vec![v]).collect()
    }

    fn window(rows: &[Vec<f64>]) -> HistoryWindow<'_> {
        HistoryWindow::new(rows.iter().map(Vec::as_slice).collect())
    }

    #[test]
    fn single_level_bank() {
        let bank = haar_bank(4, 1).unwrap();
        assert_eq!(bank.len(), 1);
        assert_eq!(bank[0].weights, vec![0.5, 0.5, -0.5, -0.5]);
    }

    #[test]
    fn dyadic_tiling_h8_l3() {
        let bank = haar_bank(8, 3).unwrap();
        let layout: Vec<(usize, usize)> = bank
            .iter()
            .map(|k| match k.kind {
                KernelKind::Haar { shift, support, .. } => (shift, support),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(layout, vec![(0, 8), (0, 4), (4, 4), (0, 2), (2, 2), (4, 2), (6, 2)]);
    }

    #[test]
    fn bank_configuration_errors() {
        assert_eq!(haar_bank(4, 3), Err(KernelError::TooManyScales { h: 4, levels: 3 }));
        assert!(haar_bank(8, 0).is_err());
        assert!(haar_bank(1, 1).is_err());
        assert!(haar_bank(7, 2).is_ok());
    }

    #[test]
    fn haar_invariants_on_odd_windows() {
        for h in 2..40 {
            let levels = (h as f64).log2().floor() as usize;
            let bank = haar_bank(h, levels).unwrap();
            assert_eq!(bank.len(), (1 << levels) - 1);
            for k in &bank {
                let sum: f64 = k.weights.iter().sum();
                assert!(sum.abs() < 1e-12);
                let nonzero: Vec<f64> = k.weights.iter().copied().filter(|w| *w != 0.0).collect();
                let mag = 1.0 / (nonzero.len() as f64).sqrt();
                assert!(nonzero.iter().all(|w| (w.abs() - mag).abs() < 1e-15));
                let changes = nonzero.windows(2).filter(|p| p[0].signum() != p[1].signum()).count();
                assert_eq!(changes, 1);
                // older half positive
                assert!(nonzero[0] > 0.0);
            }
        }
    }

    #[test]
    fn decay_weights() {
        let k = decay_kernel(3, std::f64::consts::LN_2).unwrap();
        for (w, e) in k.weights.iter().zip([0.25, 0.5, 1.0]) {
            assert!((w - e).abs() < 1e-15);
        }
        let sharp = decay_kernel(4, 200.0).unwrap();
        assert_eq!(sharp.weights[3], 1.0);
        assert!(sharp.weights[..3].iter().all(|w| *w < 1e-80));
        let flat = decay_kernel(4, 1e-12).unwrap();
        assert!(flat.weights.iter().all(|w| (w - 1.0).abs() < 1e-10));
        assert!(flat.weights.windows(2).all(|p| p[0] < p[1]));
        assert_eq!(decay_kernel(3, 0.0), Err(KernelError::BadDecayRate(0.0)));
        assert!(decay_kernel(3, -1.0).is_err());
    }

    #[test]
    fn conv_examples() {
        let rows = scalar_window(&[4.0, 2.0, 8.0]);
        let w = window(&rows);
        let decay = Kernel {
            weights: vec![0.25, 0.5, 1.0],
            kind: KernelKind::Decay { rate: std::f64::consts::LN_2 },
        };
        assert_eq!(causal_conv(&w, &decay).unwrap(), vec![10.0]);

        let pick = Kernel {
            weights: vec![0.0, 0.0, 1.0],
            kind: KernelKind::Decay { rate: 1.0 },
        };
        let rows = vec![vec![1.0, -2.0], vec![3.0, 0.5], vec![-7.0, 9.0]];
        assert_eq!(causal_conv(&window(&rows), &pick).unwrap(), vec![-7.0, 9.0]);

        let constant = vec![vec![1.5, -3.0]; 4];
        let haar = &haar_bank(4, 2).unwrap();
        for k in haar {
            assert!(causal_conv(&window(&constant), k).unwrap().iter().all(|v| v.abs() < 1e-15));
        }
        assert_eq!(
            causal_conv(&window(&constant[..3]), &haar[0]),
            Err(KernelError::Shape { kernel: 4, window: 3 })
        );
    }

    #[test]
    fn feature_layout() {
        let ex = FeatureExtractor::new(8, &Scales::Dyadic(3), 0.5, FeatureMode::Full).unwrap();
        assert_eq!(ex.feature_len(32), 256);
        let rows: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64; 32]).collect();
        let f = ex.extract(&window(&rows));
        assert_eq!(f.values.len(), 256);
        assert!(!f.degenerate);

        let t_only = FeatureExtractor::new(8, &Scales::Dyadic(3), 0.5, FeatureMode::TimeOnly).unwrap();
        assert_eq!(t_only.feature_len(32), 32);
        let f_only = FeatureExtractor::new(8, &Scales::Dyadic(3), 0.5, FeatureMode::FreqOnly).unwrap();
        assert_eq!(f_only.feature_len(32), 224);
    }

    #[test]
    fn constant_history_features() {
        let ex = FeatureExtractor::new(6, &Scales::Dyadic(2), 0.5, FeatureMode::Full).unwrap();
        let u = vec![0.3, -1.2];
        let rows = vec![u.clone(); 6];
        let f = ex.extract(&window(&rows));
        let wsum: f64 = ex.full_bank().decay.weights.iter().sum();
        assert!((f.values[0] - wsum * 0.3).abs() < 1e-14);
        assert!((f.values[1] + wsum * 1.2).abs() < 1e-14);
        assert!(f.values[2..].iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn short_windows() {
        let ex = FeatureExtractor::new(8, &Scales::Dyadic(3), 0.5, FeatureMode::Full).unwrap();
        let rows = vec![vec![2.0, -1.0]];
        let f = ex.extract(&window(&rows));
        assert!(f.degenerate);
        assert_eq!(f.values.len(), 16);
        assert_eq!(&f.values[..2], &[2.0, -1.0]);
        assert!(f.values[2..].iter().all(|v| *v == 0.0));

        // length 3: level 1 (support 3) and level 2 (support 2) fit, level 3 does not
        let bank = ex.bank(3);
        let present: Vec<bool> = bank.haar.iter().map(Option::is_some).collect();
        assert_eq!(present, vec![true, true, true, false, false, false, false]);
    }

    #[test]
    fn custom_daily_weekly_scales() {
        // hourly slices over two weeks
        let h = 336;
        let scales = Scales::Custom(vec![1.0, 1.0 / 24.0, 1.0 / (7.0 * 24.0)]);
        scales.validate(h).unwrap();
        let bank = KernelBank::new(h, &scales, 0.5, FeatureMode::Full).unwrap();
        let mut supports: Vec<usize> = bank
            .haar
            .iter()
            .flatten()
            .map(|k| match k.kind {
                KernelKind::Haar { support, .. } => support,
                _ => unreachable!(),
            })
            .collect();
        supports.dedup();
        assert_eq!(supports, vec![h, h / 24, h / 168]);
        assert_eq!(scales.kernel_count(), 1 + 24 + 168);
        assert!(Scales::Custom(vec![1.0 / 168.0]).validate(168).is_err());
        assert!(Scales::Custom(vec![1.5]).validate(16).is_err());
    }

    #[test]
    fn alternating_history_excites_finest_scale() {
        for h in [4usize, 8, 16] {
            let levels = h.trailing_zeros() as usize;
            let ex = FeatureExtractor::new(h, &Scales::Dyadic(levels), 0.5, FeatureMode::Full).unwrap();
            let rows = scalar_window(&(0..h).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect::<Vec<_>>());
            let f = ex.extract(&window(&rows));
            let finest_start = 1 + (1 << (levels - 1)) - 1;
            let finest_min = f.values[finest_start..].iter().map(|v| v.abs()).fold(f64::INFINITY, f64::min);
            let others_max = f.values[..finest_start].iter().map(|v| v.abs()).fold(0.0, f64::max);
            assert!(finest_min > others_max, "h={h}: {:?}", f.values);
        }
    }

    fn brute_force(rows: &[Vec<f64>], weights: &[f64]) -> Vec<f64> {
        let d = rows[0].len();
        let mut out = vec![0.0; d];
        for c in 0..d {
            for k in 0..rows.len() {
                out[c] += rows[k][c] * weights[k];
            }
        }
        out
    }

    proptest! {
        #[test]
        fn conv_matches_double_loop(
            (rows, weights) in (1usize..=16, 1usize..=8).prop_flat_map(|(h, d)| (
                prop::collection::vec(prop::collection::vec(-10.0f64..10.0, d), h),
                prop::collection::vec(-3.0f64..3.0, h),
            ))
        ) {
            let kernel = Kernel { weights: weights.clone(), kind: KernelKind::Decay { rate: 1.0 } };
            let got = causal_conv(&window(&rows), &kernel).unwrap();
            let expected = brute_force(&rows, &weights);
            for (g, e) in got.iter().zip(&expected) {
                prop_assert!((g - e).abs() <= 1e-12 * (1.0 + e.abs()));
            }
        }

        #[test]
        fn features_are_linear(
            (u, v) in (2usize..=8).prop_flat_map(|h| (
                prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), h),
                prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), h),
            )),
            a in -3.0f64..3.0,
            b in -3.0f64..3.0,
        ) {
            let h = u.len();
            let levels = (h as f64).log2().floor() as usize;
            let ex = FeatureExtractor::new(h, &Scales::Dyadic(levels), 0.7, FeatureMode::Full).unwrap();
            let mix: Vec<Vec<f64>> = u.iter().zip(&v)
                .map(|(x, y)| x.iter().zip(y).map(|(p, q)| a * p + b * q).collect())
                .collect();
            let fu = ex.extract(&window(&u)).values;
            let fv = ex.extract(&window(&v)).values;
            let fm = ex.extract(&window(&mix)).values;
            for i in 0..fm.len() {
                prop_assert!((fm[i] - (a * fu[i] + b * fv[i])).abs() < 1e-10);
            }
        }
    }
}
