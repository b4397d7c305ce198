//! Receiver chain for the channel under test: rectangular extraction,
//! single-channel backpropagation, matched filtering, data-aided frequency
//! domain equalization with stored coefficients, downsampling and alignment.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::fiber::{self, split_step, SplitStepCoefficients};
use crate::link::LinkConfig;
use crate::signal::{self, fft_in_place, ifft_in_place, Jones, RectangularPassband, Signal, C64};
use crate::waveform::{self, root_raised_cosine, ChannelPlan, FrameLayout};

/// Aligned transmitted and received symbols, one sample per symbol.
///
/// Both sides are normalized to unit mean power per polarization;
/// `symbol_energy` (J, both polarizations) converts normalized variances back
/// to optical power via `P = S_R · var · symbol_energy`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymbolFrame {
    pub tx: Vec<Vec<C64>>,
    pub rx: Vec<Vec<C64>>,
    pub symbol_rate: f64,
    pub symbol_energy: f64,
}

fn normalize(v: &mut [C64]) {
    let p = signal::mean_power(v);
    if p > 0.0 {
        let s = 1.0 / p.sqrt();
        v.iter_mut().for_each(|c| *c *= s);
    }
}

impl SymbolFrame {
    pub fn new(tx: Vec<Vec<C64>>, rx: Vec<Vec<C64>>, symbol_rate: f64, symbol_energy: f64) -> Result<Self> {
        if tx.is_empty() || tx.len() != rx.len() {
            return Err(Error::invalid("frame needs matching tx/rx polarizations"));
        }
        for (t, r) in tx.iter().zip(&rx) {
            if t.is_empty() {
                return Err(Error::EmptySignal);
            }
            if t.len() != r.len() {
                return Err(Error::LengthMismatch { x: t.len(), y: r.len() });
            }
        }
        Ok(SymbolFrame { tx, rx, symbol_rate, symbol_energy })
    }

    /// Builds a frame and normalizes both sides to unit mean power.
    pub fn normalized(mut tx: Vec<Vec<C64>>, mut rx: Vec<Vec<C64>>, symbol_rate: f64, symbol_energy: f64) -> Result<Self> {
        tx.iter_mut().for_each(|p| normalize(p));
        rx.iter_mut().for_each(|p| normalize(p));
        Self::new(tx, rx, symbol_rate, symbol_energy)
    }

    pub fn len(&self) -> usize {
        self.tx[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.tx[0].is_empty()
    }

    pub fn polarizations(&self) -> usize {
        self.tx.len()
    }

    /// Sub-range of symbols, re-normalized.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Result<Self> {
        if range.end > self.len() || range.is_empty() {
            return Err(Error::invalid("frame slice out of range"));
        }
        let tx = self.tx.iter().map(|p| p[range.clone()].to_vec()).collect();
        let rx = self.rx.iter().map(|p| p[range.clone()].to_vec()).collect();
        Self::normalized(tx, rx, self.symbol_rate, self.symbol_energy)
    }

    /// Data-aided removal of the common phase of each polarization.
    pub fn restore_phase(&mut self) {
        for (t, r) in self.tx.iter().zip(self.rx.iter_mut()) {
            let c: C64 = t.iter().zip(r.iter()).map(|(a, b)| a.conj() * b).sum();
            if c.norm() > 0.0 {
                let rot = c.conj() / c.norm();
                r.iter_mut().for_each(|v| *v *= rot);
            }
        }
    }
}

/// Shifts the band around `center` to baseband and keeps `bandwidth` of it
/// with a rectangular filter.
pub fn extract_channel(signal: &Signal, center: f64, bandwidth: f64) -> Result<Signal> {
    let fs = signal.sample_rate();
    if !(bandwidth > 0.0) || bandwidth > fs {
        return Err(Error::invalid(format!("extraction bandwidth {bandwidth} Hz outside (0, {fs}]")));
    }
    if center - bandwidth / 2.0 < -fs / 2.0 - 1e-6 || center + bandwidth / 2.0 > fs / 2.0 + 1e-6 {
        return Err(Error::invalid(format!("band at {center} Hz lies outside the signal range")));
    }
    let df = signal.bin_spacing();
    let bins = signal::snap_to_bin(center, df);
    let shifted = signal::shift_bins(signal, -bins);
    let out = crate::roadm::wss_filter(&shifted, &[RectangularPassband::new(0.0, bandwidth)])?;
    Ok(out.with_center_frequency(signal.center_frequency() + bins as f64 * df))
}

/// Spectral resampling of a periodic block to `new_rate`; content above the
/// new Nyquist frequency is discarded.
pub fn resample(signal: &Signal, new_rate: f64) -> Result<Signal> {
    let n = signal.len();
    let ratio = new_rate / signal.sample_rate();
    let m_f = n as f64 * ratio;
    let m = m_f.round() as usize;
    if m == 0 || (m_f - m as f64).abs() > 1e-6 {
        return Err(Error::IncompatibleGrid(format!("{n} samples cannot be resampled by {ratio}")));
    }
    if m == n {
        return Ok(signal.clone());
    }
    let scale = m as f64 / n as f64;
    let mut pols = Vec::new();
    for p in signal.pols() {
        let mut b = p.to_vec();
        fft_in_place(&mut b);
        let mut o = vec![C64::new(0.0, 0.0); m];
        for (k, v) in o.iter_mut().enumerate() {
            let s = signal::signed_bin(k, m);
            if s.unsigned_abs() as usize <= n / 2 && !(n.is_multiple_of(2) && s == -(n as i64 / 2) && m > n) {
                *v = b[signal::wrap_bin(s, n)] * scale;
            }
        }
        ifft_in_place(&mut o);
        pols.push(o);
    }
    let y = if pols.len() == 2 { pols.pop() } else { None };
    let x = pols.pop().expect("one tributary");
    Signal::new(x, y, new_rate, signal.center_frequency())
}

/// Runs the link backwards: for every span, undo the amplifier and integrate
/// with negated attenuation, dispersion and Kerr coefficient over the
/// reversed step schedule. The schedule is built for the CUT launch power.
/// PMD is not inverted.
pub fn backpropagate(signal: &Signal, link: &LinkConfig, spans: usize) -> Result<Signal> {
    link.validate()?;
    if spans == 0 {
        return Ok(signal.clone());
    }
    let mut schedule = link.fiber.clone();
    schedule.length = link.span_length;
    let step = link.step.clone().with_reference_power(link.launch_power_per_channel);
    let mut steps = fiber::step_schedule(&schedule, &step, link.launch_power_per_channel, signal.is_dual())?;
    steps.reverse();
    let c = SplitStepCoefficients {
        field_attenuation: -link.fiber.field_attenuation(),
        beta2: -link.fiber.beta2,
        kerr: -link.fiber.kerr(signal.is_dual()),
    };
    let mut s = signal.clone();
    for span in (0..spans).rev() {
        s = fiber::amplify(&s, -link.gain_db());
        s = split_step(&s, &c, &steps, None).map_err(|e| match e {
            Error::Integration { z, reason, .. } => Error::Integration { span, z, reason },
            other => other,
        })?;
    }
    Ok(s)
}

/// Receiver matched filter (RRC, unit passband gain).
pub fn matched_filter(signal: &Signal, symbol_rate: f64, roll_off: f64) -> Signal {
    let gains: Vec<C64> = signal
        .frequencies()
        .into_iter()
        .map(|f| C64::new(root_raised_cosine(f, symbol_rate, roll_off), 0.0))
        .collect();
    signal::apply_gains(signal, &gains)
}

fn jones_inverse(m: &Jones) -> Option<Jones> {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    if det.norm() == 0.0 || !det.norm().is_finite() {
        return None;
    }
    Some([[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]])
}

fn jones_scale(m: &Jones, s: C64) -> Jones {
    [[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]]
}

/// Equalizer coefficients: a 2×2 response per bin of a `bins`-point grid.
///
/// `response` holds the inverse channel with the bulk delay `delay` removed;
/// the full equalizer at offset f is `response(f) · exp(+i 2π f delay)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FdeCoefficients {
    pub bin_spacing: f64,
    pub delay: f64,
    pub response: Vec<Jones>,
    pub seed: u64,
    pub span_count: usize,
}

impl FdeCoefficients {
    pub fn bins(&self) -> usize {
        self.response.len()
    }

    /// Identity equalizer on a `bins`-point grid.
    pub fn identity(bins: usize, bin_spacing: f64) -> Self {
        FdeCoefficients {
            bin_spacing,
            delay: 0.0,
            response: vec![signal::JONES_IDENTITY; bins],
            seed: 0,
            span_count: 0,
        }
    }

    /// Equalizer at an arbitrary frequency offset: linear interpolation of the
    /// delay-free response between neighbouring bins, then the delay restored.
    pub fn at(&self, f: f64) -> Jones {
        let n = self.bins();
        let pos = f / self.bin_spacing;
        let lo = pos.floor();
        let t = pos - lo;
        let a = &self.response[signal::wrap_bin(lo as i64, n)];
        let b = &self.response[signal::wrap_bin(lo as i64 + 1, n)];
        let ph = C64::from_polar(1.0, 2.0 * PI * f * self.delay);
        let mut m = [[C64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = (a[i][j] * (1.0 - t) + b[i][j] * t) * ph;
            }
        }
        m
    }
}

/// Blocks of the header that are circular (both neighbours carry the same
/// symbols in both polarizations), so that a block-length DFT sees a pure
/// circular convolution.
fn circular_blocks(known: &[Vec<C64>; 2], block: usize) -> Vec<usize> {
    let blocks = known[0].len() / block;
    let same = |a: usize, b: usize| {
        known.iter().all(|p| p[a * block..(a + 1) * block] == p[b * block..(b + 1) * block])
    };
    (1..blocks.saturating_sub(1)).filter(|&b| same(b - 1, b) && same(b, b + 1)).collect()
}

/// Zero-forcing estimate of the 2×2 channel from training blocks.
///
/// `rx_training` are the received samples covering the header at
/// `taps / block_length` samples per symbol, `known_training` the header
/// symbols. The desired response of each block is the training sequence
/// through transmit and matched RRC filters; the channel is solved per bin by
/// least squares over all circular blocks and then inverted. Bins outside the
/// signal band (weak excitation) take the value of the nearest in-band bin
/// once the bulk delay has been removed.
pub fn fde_train(
    rx_training: &[Vec<C64>; 2],
    known_training: &[Vec<C64>; 2],
    taps: usize,
    block_length: usize,
    symbol_rate: f64,
    roll_off: f64,
) -> Result<FdeCoefficients> {
    if block_length == 0 || !taps.is_multiple_of(block_length) {
        return Err(Error::IncompatibleGrid(format!("{taps} taps do not tile blocks of {block_length} symbols")));
    }
    let sps = taps / block_length;
    let header = known_training[0].len();
    if known_training[1].len() != header || rx_training.iter().any(|p| p.len() < header * sps) {
        return Err(Error::FrameTooShort("training shorter than the header".into()));
    }
    if header < block_length {
        return Err(Error::FrameTooShort("training shorter than one block".into()));
    }
    let blocks = circular_blocks(known_training, block_length);
    if blocks.is_empty() {
        return Err(Error::invalid("header has no circular training blocks"));
    }
    let fs = symbol_rate * sps as f64;
    let df = fs / taps as f64;
    // Desired block spectra: symbols through RRC (tx) and RRC (matched) = RC.
    let rc: Vec<f64> = (0..taps).map(|k| waveform::raised_cosine(signal::bin_frequency(k, taps, fs), symbol_rate, roll_off)).collect();
    let spectrum_of = |sym: &[C64]| -> Vec<C64> {
        let mut a = sym.to_vec();
        fft_in_place(&mut a);
        (0..taps).map(|k| a[signal::wrap_bin(signal::signed_bin(k, taps), block_length)] * (sps as f64) * rc[k]).collect()
    };
    let mut num = vec![[[C64::new(0.0, 0.0); 2]; 2]; taps];
    let mut gram = vec![[[C64::new(0.0, 0.0); 2]; 2]; taps];
    let mut rx_energy = 0.0;
    let mut desired_energy = 0.0;
    for &b in &blocks {
        let d: Vec<Vec<C64>> = known_training.iter().map(|p| spectrum_of(&p[b * block_length..(b + 1) * block_length])).collect();
        let r: Vec<Vec<C64>> = rx_training
            .iter()
            .map(|p| {
                let mut v = p[b * taps..(b + 1) * taps].to_vec();
                fft_in_place(&mut v);
                v
            })
            .collect();
        for k in 0..taps {
            for i in 0..2 {
                rx_energy += r[i][k].norm_sqr();
                desired_energy += d[i][k].norm_sqr();
                for j in 0..2 {
                    num[k][i][j] += r[i][k] * d[j][k].conj();
                    gram[k][i][j] += d[i][k] * d[j][k].conj();
                }
            }
        }
    }
    let scale2 = if desired_energy > 0.0 { rx_energy / desired_energy } else { 0.0 };
    let gmax = gram.iter().map(|g| g[0][0].re + g[1][1].re).fold(0.0, f64::max);
    let mut strong = vec![false; taps];
    let mut channel = vec![[[C64::new(0.0, 0.0); 2]; 2]; taps];
    for k in 0..taps {
        let g = gram[k];
        let det = (g[0][0] * g[1][1] - g[0][1] * g[1][0]).norm();
        let tr = g[0][0].re + g[1][1].re;
        if tr < 1e-3 * gmax || det < 1e-6 * tr * tr {
            continue;
        }
        let gi = jones_inverse(&g).expect("checked determinant");
        let n = num[k];
        let mut h = [[C64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                h[i][j] = n[i][0] * gi[0][j] + n[i][1] * gi[1][j];
            }
        }
        let hdet = (h[0][0] * h[1][1] - h[0][1] * h[1][0]).norm();
        if !(scale2 > 0.0) || hdet < 1e-9 * scale2 {
            return Err(Error::SingularBin { bin: k });
        }
        channel[k] = h;
        strong[k] = true;
    }
    if !strong.iter().any(|s| *s) {
        return Err(Error::SingularBin { bin: 0 });
    }
    // Bulk delay from the phase slope of det H = exp(-i 2 (2π f τ)) |det H|.
    let mut pts: Vec<(f64, C64, f64)> = (0..taps)
        .filter(|&k| strong[k])
        .map(|k| {
            let h = channel[k];
            let det = h[0][0] * h[1][1] - h[0][1] * h[1][0];
            (signal::bin_frequency(k, taps, fs), det, gram[k][0][0].re + gram[k][1][1].re)
        })
        .collect();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut unwrapped = Vec::with_capacity(pts.len());
    let mut prev = 0.0;
    for (i, (f, det, w)) in pts.iter().enumerate() {
        let mut a = det.arg();
        if i > 0 {
            while a - prev > PI {
                a -= 2.0 * PI;
            }
            while a - prev < -PI {
                a += 2.0 * PI;
            }
        }
        prev = a;
        unwrapped.push((*f, a, *w));
    }
    let sw: f64 = unwrapped.iter().map(|p| p.2).sum();
    let fm = unwrapped.iter().map(|p| p.0 * p.2).sum::<f64>() / sw;
    let am = unwrapped.iter().map(|p| p.1 * p.2).sum::<f64>() / sw;
    let sxy: f64 = unwrapped.iter().map(|p| (p.0 - fm) * (p.1 - am) * p.2).sum();
    let sxx: f64 = unwrapped.iter().map(|p| (p.0 - fm).powi(2) * p.2).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let delay = -slope / (4.0 * PI);

    let mut response = vec![signal::JONES_IDENTITY; taps];
    for k in 0..taps {
        if strong[k] {
            let f = signal::bin_frequency(k, taps, fs);
            let inv = jones_inverse(&channel[k]).ok_or(Error::SingularBin { bin: k })?;
            // Remove the bulk delay: H = exp(-i2πfτ) H~, so H^-1 = exp(+i2πfτ) H~^-1.
            response[k] = jones_scale(&inv, C64::from_polar(1.0, -2.0 * PI * f * delay));
        }
    }
    for k in 0..taps {
        if !strong[k] {
            let sk = signal::signed_bin(k, taps);
            let nearest = (0..taps)
                .filter(|&j| strong[j])
                .min_by_key(|&j| (signal::signed_bin(j, taps) - sk).abs())
                .expect("at least one strong bin");
            response[k] = response[nearest];
        }
    }
    Ok(FdeCoefficients { bin_spacing: df, delay, response, seed: 0, span_count: 0 })
}

/// Applies the equalizer over the whole periodic block.
pub fn fde_apply(signal: &Signal, coeffs: &FdeCoefficients) -> Result<Signal> {
    let grid = coeffs.bin_spacing * coeffs.bins() as f64;
    if !signal.is_dual() {
        return Err(Error::IncompatibleGrid("equalizer needs a dual-polarization signal".into()));
    }
    if (signal.sample_rate() - grid).abs() > 1e-9 * grid {
        return Err(Error::IncompatibleGrid(format!(
            "signal rate {} Hz does not match the coefficient grid {} Hz",
            signal.sample_rate(),
            grid
        )));
    }
    let (mut x, y) = signal.clone().into_parts();
    let mut y = y.expect("dual");
    fft_in_place(&mut x);
    fft_in_place(&mut y);
    for (k, f) in signal.frequencies().into_iter().enumerate() {
        let w = coeffs.at(f);
        let (a, b) = signal::jones_apply(&w, x[k], y[k]);
        x[k] = a;
        y[k] = b;
    }
    ifft_in_place(&mut x);
    ifft_in_place(&mut y);
    Signal::dual(x, y, signal.sample_rate(), signal.center_frequency())
}

fn circular_xcorr(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut fa = a.to_vec();
    let mut fb = b.to_vec();
    fft_in_place(&mut fa);
    fft_in_place(&mut fb);
    let mut c: Vec<C64> = fa.iter().zip(&fb).map(|(u, v)| u * v.conj()).collect();
    ifft_in_place(&mut c);
    c
}

/// Samples at the symbol instants, aligns to `tx` by circular cross
/// correlation and normalizes both sides to unit power.
///
/// The sample phase and integer lag maximizing the correlation summed over
/// polarizations are chosen; a second peak above half the main one is
/// reported as an alignment failure.
pub fn downsample_align(
    signal: &Signal,
    tx: &[Vec<C64>],
    samples_per_symbol: usize,
    symbol_rate: f64,
    symbol_energy: f64,
) -> Result<SymbolFrame> {
    let pols: Vec<&[C64]> = signal.pols().collect();
    if pols.len() != tx.len() {
        return Err(Error::AlignmentFailed("polarization count differs from tx".into()));
    }
    let n = tx[0].len();
    if samples_per_symbol == 0 || signal.len() != n * samples_per_symbol {
        return Err(Error::AlignmentFailed(format!(
            "{} samples do not hold {n} symbols at {samples_per_symbol} samples/symbol",
            signal.len()
        )));
    }
    let mut best: Option<(f64, usize, usize, f64)> = None;
    for phase in 0..samples_per_symbol {
        let mut total = vec![0.0; n];
        for (p, t) in pols.iter().zip(tx) {
            let d: Vec<C64> = (0..n).map(|i| p[i * samples_per_symbol + phase]).collect();
            for (acc, v) in total.iter_mut().zip(circular_xcorr(&d, t)) {
                *acc += v.norm();
            }
        }
        let (lag, peak) = total.iter().enumerate().fold((0, 0.0), |a, (i, v)| if *v > a.1 { (i, *v) } else { a });
        let second = total
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let d = (*i as i64 - lag as i64).rem_euclid(n as i64);
                d.min(n as i64 - d) > 1
            })
            .map(|(_, v)| *v)
            .fold(0.0, f64::max);
        if best.is_none_or(|b| peak > b.0) {
            best = Some((peak, phase, lag, second));
        }
    }
    let (peak, phase, lag, second) = best.expect("at least one phase");
    if !(peak > 0.0) || second > 0.5 * peak {
        return Err(Error::AlignmentFailed(format!("correlation peak ambiguous ({second:.3e} vs {peak:.3e})")));
    }
    let rx: Vec<Vec<C64>> = pols
        .iter()
        .map(|p| (0..n).map(|i| p[((i + lag) % n) * samples_per_symbol + phase]).collect())
        .collect();
    SymbolFrame::normalized(tx.to_vec(), rx, symbol_rate, symbol_energy)
}

/// Receiver settings for the CUT.
#[derive(Clone, Debug, PartialEq)]
pub struct Receiver {
    pub symbol_rate: f64,
    pub roll_off: f64,
    /// Extraction filter width, normally the channel spacing.
    pub bandwidth: f64,
    pub samples_per_symbol: usize,
    pub taps: usize,
    pub backpropagation: bool,
}

impl Receiver {
    pub fn for_plan(plan: &ChannelPlan) -> Self {
        Receiver {
            symbol_rate: plan.symbol_rate,
            roll_off: plan.roll_off,
            bandwidth: if plan.channels.len() > 1 { plan.spacing } else { plan.spacing.max((1.0 + plan.roll_off) * plan.symbol_rate) },
            samples_per_symbol: 2,
            taps: 128,
            backpropagation: true,
        }
    }

    /// Extraction, resampling, backpropagation over `spans` and matched filter.
    pub fn front_end(&self, received: &Signal, link: &LinkConfig, spans: usize) -> Result<Signal> {
        let cut = extract_channel(received, 0.0, self.bandwidth)?;
        let rate = self.symbol_rate * self.samples_per_symbol as f64;
        let low = resample(&cut, rate)?;
        let bp = if self.backpropagation { backpropagate(&low, link, spans)? } else { low };
        Ok(matched_filter(&bp, self.symbol_rate, self.roll_off))
    }

    /// Trains the equalizer on the header of a front-end output.
    pub fn train(&self, front: &Signal, layout: &FrameLayout) -> Result<FdeCoefficients> {
        let header = layout.header()?;
        let m = layout.header_symbols() * self.samples_per_symbol;
        let y = front.y().ok_or_else(|| Error::invalid("training needs both polarizations"))?;
        let rx = [front.x()[..m].to_vec(), y[..m].to_vec()];
        fde_train(&rx, &header, self.taps, layout.block_length, self.symbol_rate, self.roll_off)
    }

    /// Full chain to an aligned, phase-restored payload frame.
    #[allow(clippy::too_many_arguments)]
    pub fn receive(
        &self,
        received: &Signal,
        link: &LinkConfig,
        spans: usize,
        layout: &FrameLayout,
        tx: &[Vec<C64>; 2],
        coeffs: &FdeCoefficients,
        launch_power: f64,
    ) -> Result<SymbolFrame> {
        let front = self.front_end(received, link, spans)?;
        let eq = fde_apply(&front, coeffs)?;
        let frame = downsample_align(&eq, tx, self.samples_per_symbol, self.symbol_rate, launch_power / self.symbol_rate)?;
        let mut payload = frame.slice(layout.payload_range())?;
        payload.restore_phase();
        Ok(payload)
    }
}

/// Coefficient store keyed by (realization seed, span count), held in memory
/// and optionally mirrored to one binary file per key.
///
/// File layout, all little endian: magic `NLFD`, format version (u32),
/// seed (u64), span count (u32), bin count (u32), bin spacing (f64), bulk
/// delay (f64); then per bin the bin index (u32) followed by the 2×2 entries
/// in row-major order, each as real and imaginary f64.
#[derive(Debug, Default)]
pub struct FdeStore {
    dir: Option<PathBuf>,
    entries: Mutex<HashMap<(u64, usize), FdeCoefficients>>,
}

const STORE_MAGIC: &[u8; 4] = b"NLFD";
const STORE_VERSION: u32 = 1;

impl FdeStore {
    pub fn in_memory() -> Self {
        FdeStore::default()
    }

    pub fn at(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(FdeStore { dir: Some(dir), entries: Mutex::new(HashMap::new()) })
    }

    pub fn file_name(seed: u64, spans: usize) -> String {
        format!("fde_{seed}_{spans}.bin")
    }

    pub fn insert(&self, coeffs: FdeCoefficients) -> Result<()> {
        if let Some(dir) = &self.dir {
            write_coefficients(&dir.join(Self::file_name(coeffs.seed, coeffs.span_count)), &coeffs)?;
        }
        self.entries.lock().expect("store lock").insert((coeffs.seed, coeffs.span_count), coeffs);
        Ok(())
    }

    pub fn get(&self, seed: u64, spans: usize) -> Result<FdeCoefficients> {
        if let Some(c) = self.entries.lock().expect("store lock").get(&(seed, spans)) {
            return Ok(c.clone());
        }
        if let Some(dir) = &self.dir {
            let path = dir.join(Self::file_name(seed, spans));
            if path.exists() {
                let c = read_coefficients(&path)?;
                if c.seed != seed || c.span_count != spans {
                    return Err(Error::CorruptCoefficients(format!("{} holds a different key", path.display())));
                }
                self.entries.lock().expect("store lock").insert((seed, spans), c.clone());
                return Ok(c);
            }
        }
        Err(Error::MissingCoefficients { seed, spans })
    }

    pub fn contains(&self, seed: u64, spans: usize) -> bool {
        self.get(seed, spans).is_ok()
    }
}

pub fn write_coefficients(path: &Path, c: &FdeCoefficients) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(STORE_MAGIC)?;
    w.write_u32::<LittleEndian>(STORE_VERSION)?;
    w.write_u64::<LittleEndian>(c.seed)?;
    w.write_u32::<LittleEndian>(c.span_count as u32)?;
    w.write_u32::<LittleEndian>(c.bins() as u32)?;
    w.write_f64::<LittleEndian>(c.bin_spacing)?;
    w.write_f64::<LittleEndian>(c.delay)?;
    for (k, m) in c.response.iter().enumerate() {
        w.write_u32::<LittleEndian>(k as u32)?;
        for row in m {
            for v in row {
                w.write_f64::<LittleEndian>(v.re)?;
                w.write_f64::<LittleEndian>(v.im)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_coefficients(path: &Path) -> Result<FdeCoefficients> {
    let mut r = BufReader::new(File::open(path)?);
    let corrupt = |m: &str| Error::CorruptCoefficients(format!("{}: {m}", path.display()));
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| corrupt("truncated header"))?;
    if &magic != STORE_MAGIC {
        return Err(corrupt("bad magic"));
    }
    let version = r.read_u32::<LittleEndian>().map_err(|_| corrupt("truncated header"))?;
    if version != STORE_VERSION {
        return Err(corrupt(&format!("unsupported version {version}")));
    }
    let rd = |r: &mut BufReader<File>| r.read_f64::<LittleEndian>().map_err(|_| corrupt("truncated body"));
    let seed = r.read_u64::<LittleEndian>().map_err(|_| corrupt("truncated header"))?;
    let span_count = r.read_u32::<LittleEndian>().map_err(|_| corrupt("truncated header"))? as usize;
    let bins = r.read_u32::<LittleEndian>().map_err(|_| corrupt("truncated header"))? as usize;
    let bin_spacing = rd(&mut r)?;
    let delay = rd(&mut r)?;
    let mut response = Vec::with_capacity(bins);
    for k in 0..bins {
        let idx = r.read_u32::<LittleEndian>().map_err(|_| corrupt("truncated body"))? as usize;
        if idx != k {
            return Err(corrupt("bin indices out of order"));
        }
        let mut m = [[C64::new(0.0, 0.0); 2]; 2];
        for row in m.iter_mut() {
            for v in row.iter_mut() {
                let re = rd(&mut r)?;
                let im = rd(&mut r)?;
                *v = C64::new(re, im);
            }
        }
        if m.iter().flatten().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(corrupt("non-finite entry"));
        }
        response.push(m);
    }
    Ok(FdeCoefficients { bin_spacing, delay, response, seed, span_count })
}
