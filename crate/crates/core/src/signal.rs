//! Sampled dual-polarization baseband signals and their spectra.
//!
//! Frequency grid convention, used by every module in the crate: for a block of
//! `n` samples at rate `fs`, bin `k` sits at offset `k * fs / n` for
//! `k < ceil(n / 2)` and at `(k - n) * fs / n` otherwise. Offsets are relative
//! to the signal's `center_frequency`. Blocks are periodic, so every filter is
//! a circular convolution.

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(n: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(n)
        } else {
            p.plan_fft_forward(n)
        }
    })
}

/// Unnormalized forward DFT, `X[k] = sum x[n] exp(-i 2 pi k n / N)`.
pub fn fft_in_place(buf: &mut [C64]) {
    if buf.is_empty() {
        return;
    }
    plan(buf.len(), false).process(buf);
}

/// Inverse DFT including the `1/N` factor.
pub fn ifft_in_place(buf: &mut [C64]) {
    if buf.is_empty() {
        return;
    }
    let n = buf.len();
    plan(n, true).process(buf);
    let s = 1.0 / n as f64;
    buf.iter_mut().for_each(|v| *v *= s);
}

/// Signed bin index of bin `k` in an `n`-point grid.
#[inline]
pub fn signed_bin(k: usize, n: usize) -> i64 {
    if k < n.div_ceil(2) {
        k as i64
    } else {
        k as i64 - n as i64
    }
}

/// Frequency offset of bin `k` in an `n`-point grid sampled at `fs`.
#[inline]
pub fn bin_frequency(k: usize, n: usize, fs: f64) -> f64 {
    signed_bin(k, n) as f64 * fs / n as f64
}

/// Offsets of every bin, in FFT order.
pub fn frequency_grid(n: usize, fs: f64) -> Vec<f64> {
    (0..n).map(|k| bin_frequency(k, n, fs)).collect()
}

/// Bin holding a signed index, wrapping negative indices.
#[inline]
pub fn wrap_bin(index: i64, n: usize) -> usize {
    index.rem_euclid(n as i64) as usize
}

pub(crate) fn mean_power(v: &[C64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.iter().map(|c| c.norm_sqr()).sum::<f64>() / v.len() as f64
}

/// Dual-polarization (or single-polarization) complex baseband samples.
///
/// Amplitudes are in sqrt(W) so that `power()` is the optical power in W.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    x: Vec<C64>,
    y: Option<Vec<C64>>,
    sample_rate: f64,
    center_frequency: f64,
}

impl Signal {
    pub fn single(x: Vec<C64>, sample_rate: f64, center_frequency: f64) -> Result<Self> {
        Self::new(x, None, sample_rate, center_frequency)
    }

    pub fn dual(x: Vec<C64>, y: Vec<C64>, sample_rate: f64, center_frequency: f64) -> Result<Self> {
        Self::new(x, Some(y), sample_rate, center_frequency)
    }

    pub fn new(
        x: Vec<C64>,
        y: Option<Vec<C64>>,
        sample_rate: f64,
        center_frequency: f64,
    ) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::EmptySignal);
        }
        if let Some(y) = &y {
            if y.len() != x.len() {
                return Err(Error::LengthMismatch { x: x.len(), y: y.len() });
            }
        }
        if !(sample_rate > 0.0) || !sample_rate.is_finite() {
            return Err(Error::invalid(format!("sample rate must be positive, got {sample_rate}")));
        }
        Ok(Signal { x, y, sample_rate, center_frequency })
    }

    /// All-zero signal with the same layout as `self`.
    pub fn zeros_like(&self) -> Signal {
        Signal {
            x: vec![C64::new(0.0, 0.0); self.len()],
            y: self.y.as_ref().map(|y| vec![C64::new(0.0, 0.0); y.len()]),
            sample_rate: self.sample_rate,
            center_frequency: self.center_frequency,
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn is_dual(&self) -> bool {
        self.y.is_some()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn center_frequency(&self) -> f64 {
        self.center_frequency
    }

    pub fn with_center_frequency(mut self, f: f64) -> Self {
        self.center_frequency = f;
        self
    }

    pub fn x(&self) -> &[C64] {
        &self.x
    }

    pub fn y(&self) -> Option<&[C64]> {
        self.y.as_deref()
    }

    pub fn x_mut(&mut self) -> &mut [C64] {
        &mut self.x
    }

    pub fn y_mut(&mut self) -> Option<&mut [C64]> {
        self.y.as_deref_mut()
    }

    pub fn into_parts(self) -> (Vec<C64>, Option<Vec<C64>>) {
        (self.x, self.y)
    }

    /// Polarization tributaries, one or two.
    pub fn pols(&self) -> impl Iterator<Item = &[C64]> {
        std::iter::once(self.x.as_slice()).chain(self.y.as_deref())
    }

    pub fn pols_mut(&mut self) -> impl Iterator<Item = &mut Vec<C64>> {
        std::iter::once(&mut self.x).chain(self.y.as_mut())
    }

    /// Mean of |x|² + |y|² in W.
    pub fn power(&self) -> f64 {
        self.pols().map(mean_power).sum()
    }

    pub fn scale(&mut self, factor: f64) {
        for p in self.pols_mut() {
            p.iter_mut().for_each(|v| *v *= factor);
        }
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.scale(factor);
        self
    }

    /// Sample-wise sum; layouts and rates must agree.
    pub fn add_assign(&mut self, other: &Signal) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::LengthMismatch { x: self.len(), y: other.len() });
        }
        if (other.sample_rate - self.sample_rate).abs() > 1e-9 * self.sample_rate {
            return Err(Error::invalid("sample rates differ"));
        }
        if other.is_dual() && !self.is_dual() {
            self.y = Some(vec![C64::new(0.0, 0.0); self.len()]);
        }
        for (a, b) in self.x.iter_mut().zip(&other.x) {
            *a += b;
        }
        if let (Some(y), Some(oy)) = (self.y.as_mut(), other.y.as_ref()) {
            for (a, b) in y.iter_mut().zip(oy) {
                *a += b;
            }
        }
        Ok(())
    }

    /// Frequency offsets of this signal's bins (FFT order).
    pub fn frequencies(&self) -> Vec<f64> {
        frequency_grid(self.len(), self.sample_rate)
    }

    pub fn bin_spacing(&self) -> f64 {
        self.sample_rate / self.len() as f64
    }
}

/// Spectral amplitudes scaled so that `sum |bins|² * bin_spacing` is the
/// time-domain power.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub x: Vec<C64>,
    pub y: Option<Vec<C64>>,
    pub bin_spacing: f64,
    pub center_frequency: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        frequency_grid(self.len(), self.bin_spacing * self.len() as f64)
    }

    /// Integrated power, the Parseval counterpart of `Signal::power`.
    pub fn power(&self) -> f64 {
        let e: f64 = std::iter::once(&self.x)
            .chain(self.y.as_ref())
            .flat_map(|p| p.iter())
            .map(|c| c.norm_sqr())
            .sum();
        e * self.bin_spacing
    }
}

pub fn forward_transform(signal: &Signal) -> Result<Spectrum> {
    if signal.is_empty() {
        return Err(Error::EmptySignal);
    }
    let n = signal.len();
    let df = signal.bin_spacing();
    let norm = 1.0 / (n as f64 * df.sqrt());
    let tf = |p: &[C64]| {
        let mut b = p.to_vec();
        fft_in_place(&mut b);
        b.iter_mut().for_each(|v| *v *= norm);
        b
    };
    Ok(Spectrum {
        x: tf(signal.x()),
        y: signal.y().map(tf),
        bin_spacing: df,
        center_frequency: signal.center_frequency(),
    })
}

pub fn inverse_transform(spectrum: &Spectrum) -> Result<Signal> {
    if spectrum.is_empty() {
        return Err(Error::EmptySignal);
    }
    let n = spectrum.len();
    let scale = n as f64 * spectrum.bin_spacing.sqrt();
    let tf = |p: &[C64]| {
        let mut b: Vec<C64> = p.iter().map(|v| v * scale).collect();
        ifft_in_place(&mut b);
        b
    };
    Signal::new(
        tf(&spectrum.x),
        spectrum.y.as_deref().map(tf),
        spectrum.bin_spacing * n as f64,
        spectrum.center_frequency,
    )
}

/// Frequency response evaluated at an offset from the signal center, in Hz.
pub trait TransferFunction {
    fn gain(&self, offset: f64) -> C64;
}

impl<F: Fn(f64) -> C64> TransferFunction for F {
    fn gain(&self, offset: f64) -> C64 {
        self(offset)
    }
}

/// Ideal brick-wall passband `[center - width/2, center + width/2]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RectangularPassband {
    pub center: f64,
    pub width: f64,
}

impl RectangularPassband {
    pub fn new(center: f64, width: f64) -> Self {
        RectangularPassband { center, width }
    }

    pub fn lower(&self) -> f64 {
        self.center - self.width / 2.0
    }

    pub fn upper(&self) -> f64 {
        self.center + self.width / 2.0
    }

    pub fn contains(&self, f: f64) -> bool {
        f >= self.lower() && f <= self.upper()
    }
}

impl TransferFunction for RectangularPassband {
    fn gain(&self, offset: f64) -> C64 {
        if self.contains(offset) {
            C64::new(1.0, 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    }
}

/// Multiplies each polarization's spectrum by `h` bin by bin.
pub fn apply_transfer<H: TransferFunction + ?Sized>(signal: &Signal, h: &H) -> Result<Signal> {
    if signal.is_empty() {
        return Err(Error::EmptySignal);
    }
    let gains: Vec<C64> = signal.frequencies().into_iter().map(|f| h.gain(f)).collect();
    Ok(apply_gains(signal, &gains))
}

/// Multiplies the spectrum by precomputed per-bin gains (FFT order).
pub(crate) fn apply_gains(signal: &Signal, gains: &[C64]) -> Signal {
    let mut out = signal.clone();
    for p in out.pols_mut() {
        fft_in_place(p);
        for (v, g) in p.iter_mut().zip(gains) {
            *v *= g;
        }
        ifft_in_place(p);
    }
    out
}

/// Real PSD samples in W/Hz on an ascending frequency grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Psd {
    pub frequencies: Vec<f64>,
    pub values: Vec<f64>,
    pub resolution: f64,
}

impl Psd {
    /// Total integrated power.
    pub fn total_power(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.resolution
    }

    /// Power in `[lo, hi]`.
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        self.frequencies
            .iter()
            .zip(&self.values)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, v)| v)
            .sum::<f64>()
            * self.resolution
    }
}

/// Welch estimate with a periodic Hann window and 50% overlap.
///
/// Blocks wrap around the end of the signal, consistent with the periodic
/// signal model, so every sample is covered by exactly two windows. Each block
/// is normalized by the window energy; the integral therefore matches the
/// signal power up to the statistical scatter of the estimate (the window
/// loss is compensated, the 2% tolerance covers spectral leakage of
/// non-stationary content).
pub fn psd_estimate(signal: &Signal, resolution: f64) -> Result<Psd> {
    if signal.is_empty() {
        return Err(Error::EmptySignal);
    }
    let fs = signal.sample_rate();
    if !(resolution > 0.0) || resolution > fs / 2.0 {
        return Err(Error::invalid(format!(
            "resolution {resolution} Hz must lie in (0, fs/2 = {} Hz]",
            fs / 2.0
        )));
    }
    let nseg = (fs / resolution).ceil() as usize;
    if nseg > signal.len() {
        return Err(Error::ResolutionTooFine { resolution, needed: nseg, available: signal.len() });
    }
    let window: Vec<f64> = (0..nseg)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / nseg as f64).cos())
        .collect();
    let wpow: f64 = window.iter().map(|w| w * w).sum();
    let hop = (nseg / 2).max(1);
    let n = signal.len();
    let blocks = n.div_ceil(hop);
    let mut acc = vec![0.0; nseg];
    let mut buf = vec![C64::new(0.0, 0.0); nseg];
    for pol in signal.pols() {
        for b in 0..blocks {
            let start = b * hop;
            for (i, v) in buf.iter_mut().enumerate() {
                *v = pol[(start + i) % n] * window[i];
            }
            fft_in_place(&mut buf);
            for (a, v) in acc.iter_mut().zip(&buf) {
                *a += v.norm_sqr();
            }
        }
    }
    let norm = 1.0 / (blocks as f64 * fs * wpow);
    let df = fs / nseg as f64;
    let mut pairs: Vec<(f64, f64)> = acc
        .iter()
        .enumerate()
        .map(|(k, a)| (bin_frequency(k, nseg, fs), a * norm))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(Psd {
        frequencies: pairs.iter().map(|p| p.0).collect(),
        values: pairs.iter().map(|p| p.1).collect(),
        resolution: df,
    })
}

/// Circularly shifts the spectrum by an integer number of bins (a frequency
/// translation that keeps the block periodic).
pub fn shift_bins(signal: &Signal, bins: i64) -> Signal {
    let n = signal.len();
    let mut out = signal.clone();
    if bins.rem_euclid(n as i64) == 0 {
        return out;
    }
    for p in out.pols_mut() {
        let step = C64::from_polar(1.0, 2.0 * PI * bins as f64 / n as f64);
        // Recompute the phasor every 1024 samples to bound round-off growth.
        let mut ph = C64::new(1.0, 0.0);
        for (i, v) in p.iter_mut().enumerate() {
            if i % 1024 == 0 {
                ph = C64::from_polar(1.0, 2.0 * PI * ((bins * i as i64).rem_euclid(n as i64)) as f64 / n as f64);
            }
            *v *= ph;
            ph *= step;
        }
    }
    out
}

/// Nearest bin index of a frequency offset on a grid of spacing `df`.
pub fn snap_to_bin(offset: f64, df: f64) -> i64 {
    (offset / df).round() as i64
}

/// 2×2 complex matrix acting on (x, y) Jones vectors.
pub type Jones = [[C64; 2]; 2];

pub const JONES_IDENTITY: Jones = [
    [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
    [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
];

/// Haar-distributed random unitary: a uniform point on the 3-sphere gives the
/// SU(2) part, an independent uniform global phase completes U(2).
pub fn random_unitary<R: rand::Rng + ?Sized>(rng: &mut R) -> Jones {
    use rand_distr::{Distribution, StandardNormal};
    let mut v = [0.0f64; 4];
    loop {
        for c in v.iter_mut() {
            *c = StandardNormal.sample(rng);
        }
        let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
        if n > 1e-12 {
            v.iter_mut().for_each(|c| *c /= n);
            break;
        }
    }
    let a = C64::new(v[0], v[1]);
    let b = C64::new(v[2], v[3]);
    let phase = C64::from_polar(1.0, rng.random::<f64>() * 2.0 * PI);
    [[a * phase, -b.conj() * phase], [b * phase, a.conj() * phase]]
}

#[inline]
pub fn jones_apply(m: &Jones, x: C64, y: C64) -> (C64, C64) {
    (m[0][0] * x + m[0][1] * y, m[1][0] * x + m[1][1] * y)
}

/// Applies a constant Jones matrix to a dual-polarization signal. Single
/// polarization signals are promoted to dual with an empty y tributary.
pub fn rotate_polarization(signal: &Signal, m: &Jones) -> Signal {
    let n = signal.len();
    let zeros;
    let y = match signal.y() {
        Some(y) => y,
        None => {
            zeros = vec![C64::new(0.0, 0.0); n];
            &zeros
        }
    };
    let mut ox = Vec::with_capacity(n);
    let mut oy = Vec::with_capacity(n);
    for (a, b) in signal.x().iter().zip(y) {
        let (p, q) = jones_apply(m, *a, *b);
        ox.push(p);
        oy.push(q);
    }
    Signal {
        x: ox,
        y: Some(oy),
        sample_rate: signal.sample_rate,
        center_frequency: signal.center_frequency,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_signal(n: usize, seed: u64, dual: bool) -> Signal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = || -> Vec<C64> {
            (0..n).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()
        };
        let x = draw();
        let y = if dual { Some(draw()) } else { None };
        Signal::new(x, y, 1e9, 0.0).unwrap()
    }

    #[test]
    fn constant_signal_is_dc() {
        let s = Signal::single(vec![C64::new(1.0, 0.0); 64], 64.0, 0.0).unwrap();
        let sp = forward_transform(&s).unwrap();
        let dc = sp.x[0].norm_sqr() * sp.bin_spacing;
        assert_relative_eq!(dc, 1.0, max_relative = 1e-12);
        assert!(sp.x[1..].iter().all(|v| v.norm() < 1e-12));
    }

    #[test]
    fn tone_lands_in_one_bin() {
        let n = 128;
        let fs = 128e9;
        let k0 = -5i64;
        let x: Vec<C64> = (0..n)
            .map(|i| C64::from_polar(1.0, 2.0 * PI * k0 as f64 * i as f64 / n as f64))
            .collect();
        let s = Signal::single(x, fs, 0.0).unwrap();
        let sp = forward_transform(&s).unwrap();
        let f = sp.frequencies();
        for (k, v) in sp.x.iter().enumerate() {
            if k == wrap_bin(k0, n) {
                assert_relative_eq!(f[k], -5e9, max_relative = 1e-12);
                assert_relative_eq!(v.norm_sqr() * sp.bin_spacing, 1.0, max_relative = 1e-12);
            } else {
                assert!(v.norm() < 1e-10);
            }
        }
    }

    #[test]
    fn empty_signal_rejected() {
        assert!(matches!(Signal::single(vec![], 1.0, 0.0), Err(Error::EmptySignal)));
    }

    #[test]
    fn transfer_identity_and_zero() {
        let s = random_signal(256, 3, true);
        let id = apply_transfer(&s, &|_f: f64| C64::new(1.0, 0.0)).unwrap();
        for (a, b) in id.x().iter().zip(s.x()) {
            assert!((a - b).norm() < 1e-12);
        }
        let z = apply_transfer(&s, &|_f: f64| C64::new(0.0, 0.0)).unwrap();
        assert!(z.power() < 1e-30);
    }

    #[test]
    fn rectangular_filter_leaves_no_out_of_band_energy() {
        let s = random_signal(4096, 9, true);
        let band = RectangularPassband::new(0.1e9, 0.2e9);
        let out = apply_transfer(&s, &band).unwrap();
        let sp = forward_transform(&out).unwrap();
        let f = sp.frequencies();
        let total = sp.power();
        let outside: f64 = f
            .iter()
            .enumerate()
            .filter(|(_, f)| !band.contains(**f))
            .map(|(k, _)| (sp.x[k].norm_sqr() + sp.y.as_ref().unwrap()[k].norm_sqr()) * sp.bin_spacing)
            .sum();
        assert!(outside < 1e-12 * total, "outside {outside} total {total}");
    }

    #[test]
    fn white_psd_is_flat() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 1 << 16;
        let fs = 10e9;
        let x: Vec<C64> = (0..n)
            .map(|_| {
                let a: f64 = rng.random::<f64>() * 2.0 * PI;
                C64::from_polar(1.0, a)
            })
            .collect();
        let s = Signal::single(x, fs, 0.0).unwrap();
        let psd = psd_estimate(&s, fs / 256.0).unwrap();
        let mean = psd.values.iter().sum::<f64>() / psd.values.len() as f64;
        assert_relative_eq!(mean, 1.0 / fs, max_relative = 0.02);
        assert_relative_eq!(psd.total_power(), 1.0, max_relative = 0.02);
    }

    #[test]
    fn tone_psd_integrates_to_power() {
        let n = 8192;
        let fs = 8e9;
        let p: f64 = 2.5e-3;
        let x: Vec<C64> = (0..n)
            .map(|i| C64::from_polar(p.sqrt(), 2.0 * PI * 0.1234 * i as f64))
            .collect();
        let s = Signal::single(x, fs, 0.0).unwrap();
        let psd = psd_estimate(&s, fs / 512.0).unwrap();
        assert_relative_eq!(psd.total_power(), p, max_relative = 0.02);
    }

    #[test]
    fn psd_resolution_errors() {
        let s = random_signal(64, 1, false);
        assert!(matches!(psd_estimate(&s, 1e9 / 1024.0), Err(Error::ResolutionTooFine { .. })));
        assert!(psd_estimate(&s, 0.6e9).is_err());
    }

    #[test]
    fn disjoint_band_psds_add() {
        let s = random_signal(1 << 14, 5, false);
        let lo = apply_transfer(&s, &RectangularPassband::new(-0.25e9, 0.3e9)).unwrap();
        let hi = apply_transfer(&s, &RectangularPassband::new(0.25e9, 0.3e9)).unwrap();
        let mut sum = lo.clone();
        sum.add_assign(&hi).unwrap();
        let r = 1e9 / 256.0;
        let (a, b, c) = (
            psd_estimate(&lo, r).unwrap(),
            psd_estimate(&hi, r).unwrap(),
            psd_estimate(&sum, r).unwrap(),
        );
        let total = c.total_power();
        let err: f64 = c
            .values
            .iter()
            .zip(a.values.iter().zip(&b.values))
            .map(|(c, (a, b))| (c - a - b).abs())
            .sum::<f64>()
            * r;
        assert!(err < 0.02 * total, "{err} vs {total}");
    }

    proptest! {
        #[test]
        fn round_trip_and_parseval(seed in 0u64..1000, n in 1usize..700, dual in any::<bool>()) {
            let s = random_signal(n, seed, dual);
            let sp = forward_transform(&s).unwrap();
            prop_assert!((sp.power() - s.power()).abs() <= 1e-9 * s.power());
            let back = inverse_transform(&sp).unwrap();
            let err: f64 = back.pols().zip(s.pols())
                .flat_map(|(a, b)| a.iter().zip(b).map(|(a, b)| (a - b).norm_sqr()))
                .sum();
            let norm: f64 = s.pols().flat_map(|p| p.iter().map(|v| v.norm_sqr())).sum();
            prop_assert!((err / norm).sqrt() < 1e-10);
        }

        #[test]
        fn transfer_is_linear(seed in 0u64..500, a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let s1 = random_signal(200, seed, true);
            let s2 = random_signal(200, seed + 7, true);
            let h = |f: f64| C64::from_polar(1.0 / (1.0 + (f / 1e8).powi(2)), f / 3e8);
            let mut combo = s1.clone().scaled(a);
            combo.add_assign(&s2.clone().scaled(b)).unwrap();
            let lhs = apply_transfer(&combo, &h).unwrap();
            let mut rhs = apply_transfer(&s1, &h).unwrap().scaled(a);
            rhs.add_assign(&apply_transfer(&s2, &h).unwrap().scaled(b)).unwrap();
            for (p, q) in lhs.pols().zip(rhs.pols()) {
                for (u, v) in p.iter().zip(q) {
                    prop_assert!((u - v).norm() < 1e-12);
                }
            }
        }
    }
}
