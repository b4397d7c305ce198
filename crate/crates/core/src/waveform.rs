//! Transmitter side: bit mapping, Zadoff-Chu training headers, RRC pulse
//! shaping, pre-dispersion, random delay/rotation and WDM multiplexing.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{
    self, fft_in_place, ifft_in_place, random_unitary, rotate_polarization, Jones, Signal, C64,
};
use crate::units::SPEED_OF_LIGHT;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModulationFormat {
    #[serde(rename = "QPSK", alias = "qpsk")]
    Qpsk,
    #[serde(rename = "16QAM", alias = "16qam")]
    Qam16,
    #[serde(rename = "GAUSSIAN", alias = "gaussian")]
    Gaussian,
}

impl ModulationFormat {
    pub const ALL: [ModulationFormat; 3] =
        [ModulationFormat::Qpsk, ModulationFormat::Qam16, ModulationFormat::Gaussian];

    /// Bits consumed per symbol. Gaussian symbols carry no bits but are
    /// counted as two so that frame sizes stay comparable.
    pub fn bits_per_symbol(self) -> usize {
        match self {
            ModulationFormat::Qpsk => 2,
            ModulationFormat::Qam16 => 4,
            ModulationFormat::Gaussian => 2,
        }
    }

    /// Unit-power constellation, indexed by the bit pattern read MSB first.
    /// `None` for the continuous Gaussian format.
    pub fn alphabet(self) -> Option<Vec<C64>> {
        let bits = self.bits_per_symbol();
        match self {
            ModulationFormat::Gaussian => None,
            _ => Some(
                (0..1usize << bits)
                    .map(|v| {
                        let pattern: Vec<bool> =
                            (0..bits).rev().map(|i| (v >> i) & 1 == 1).collect();
                        map_discrete(self, &pattern)
                    })
                    .collect(),
            ),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModulationFormat::Qpsk => "QPSK",
            ModulationFormat::Qam16 => "16QAM",
            ModulationFormat::Gaussian => "GAUSSIAN",
        }
    }
}

impl std::fmt::Display for ModulationFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModulationFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "QPSK" => Ok(ModulationFormat::Qpsk),
            "16QAM" | "QAM16" => Ok(ModulationFormat::Qam16),
            "GAUSSIAN" | "GAUSS" => Ok(ModulationFormat::Gaussian),
            other => Err(Error::Config(format!("unknown modulation format '{other}'"))),
        }
    }
}

// Gray maps. QPSK: bit b -> 1 - 2b per quadrature, so 00 -> (1+i)/sqrt2.
// 16QAM per quadrature: 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3, scaled by 1/sqrt10.
fn map_discrete(format: ModulationFormat, b: &[bool]) -> C64 {
    let level = |b: bool| if b { -1.0 } else { 1.0 };
    match format {
        ModulationFormat::Qpsk => {
            C64::new(level(b[0]), level(b[1])) / std::f64::consts::SQRT_2
        }
        ModulationFormat::Qam16 => {
            let pam = |hi: bool, lo: bool| match (hi, lo) {
                (false, false) => -3.0,
                (false, true) => -1.0,
                (true, true) => 1.0,
                (true, false) => 3.0,
            };
            C64::new(pam(b[0], b[1]), pam(b[2], b[3])) / 10f64.sqrt()
        }
        ModulationFormat::Gaussian => unreachable!("Gaussian symbols are not bit-mapped"),
    }
}

/// Uniform random bits from a seeded generator.
pub fn random_bits(count: usize, seed: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| rng.random::<bool>()).collect()
}

/// Maps bits to unit-average-power symbols.
///
/// Gaussian draws one circular complex-normal symbol (variance 1/2 per
/// quadrature) per two bits from `seed` and ignores the bit values.
pub fn map_symbols(bits: &[bool], format: ModulationFormat, seed: u64) -> Result<Vec<C64>> {
    let per = format.bits_per_symbol();
    if !bits.len().is_multiple_of(per) {
        return Err(Error::IndivisibleBits { bits: bits.len(), per_symbol: per });
    }
    let n = bits.len() / per;
    Ok(match format {
        ModulationFormat::Gaussian => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = std::f64::consts::FRAC_1_SQRT_2;
            (0..n)
                .map(|_| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    C64::new(re * s, im * s)
                })
                .collect()
        }
        _ => bits.chunks(per).map(|c| map_discrete(format, c)).collect(),
    })
}

/// `count` random symbols of `format` derived from one seed.
pub fn random_symbols(format: ModulationFormat, count: usize, seed: u64) -> Vec<C64> {
    let bits = random_bits(count * format.bits_per_symbol(), seed);
    map_symbols(&bits, format, seed ^ 0x9e37_79b9_7f4a_7c15).expect("bit count is a multiple")
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zadoff-Chu sequence, the CAZAC family used for the training header.
pub fn cazac_sequence(length: usize, root: u64) -> Result<Vec<C64>> {
    if length < 2 {
        return Err(Error::invalid("CAZAC length must be at least 2"));
    }
    if root == 0 || gcd(root, length as u64) != 1 {
        return Err(Error::NotCoprime { root, length });
    }
    let n = length as u64;
    let u = root % n;
    Ok((0..n)
        .map(|k| {
            // Reduce the quadratic index modulo 2N in integers to keep the phase exact.
            let q = if n % 2 == 1 { (k * (k + 1)) % (2 * n) } else { (k * k) % (2 * n) };
            let m = (u * q) % (2 * n);
            C64::from_polar(1.0, -PI * m as f64 / n as f64)
        })
        .collect())
}

/// Header and payload sizes of one transmitted frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameLayout {
    pub payload_symbols: usize,
    pub header_blocks: usize,
    pub block_length: usize,
    pub cazac_root: u64,
}

/// Sign of the y-polarization training block relative to x. Blocks 4..8 are
/// inverted so that the two polarization columns of the channel matrix can be
/// separated by sum and difference.
pub const HEADER_Y_SIGNS: [f64; 8] = [1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0];

/// Header blocks whose cyclic neighbours carry the same sign pattern; these are
/// the blocks used for equalizer training, as pairs (same-sign, inverted-sign).
pub const TRAINING_PAIRS: [(usize, usize); 2] = [(1, 5), (2, 6)];

impl FrameLayout {
    pub fn new(payload_symbols: usize) -> Self {
        FrameLayout { payload_symbols, header_blocks: 8, block_length: 64, cazac_root: 1 }
    }

    pub fn header_symbols(&self) -> usize {
        self.header_blocks * self.block_length
    }

    pub fn total_symbols(&self) -> usize {
        self.header_symbols() + self.payload_symbols
    }

    pub fn payload_range(&self) -> std::ops::Range<usize> {
        self.header_symbols()..self.total_symbols()
    }

    pub fn validate(&self) -> Result<()> {
        if self.header_blocks != HEADER_Y_SIGNS.len() {
            return Err(Error::Config(format!(
                "header must have {} blocks, got {}",
                HEADER_Y_SIGNS.len(),
                self.header_blocks
            )));
        }
        if self.payload_symbols < 64 {
            return Err(Error::Config("payload must hold at least 64 symbols".into()));
        }
        cazac_sequence(self.block_length, self.cazac_root).map(|_| ())
    }

    /// Known training symbols per polarization.
    pub fn header(&self) -> Result<[Vec<C64>; 2]> {
        let zc = cazac_sequence(self.block_length, self.cazac_root)?;
        let mut x = Vec::with_capacity(self.header_symbols());
        let mut y = Vec::with_capacity(self.header_symbols());
        for s in HEADER_Y_SIGNS.iter().take(self.header_blocks) {
            x.extend_from_slice(&zc);
            y.extend(zc.iter().map(|v| v * *s));
        }
        Ok([x, y])
    }
}

/// Raised-cosine spectrum with unit passband gain.
pub fn raised_cosine(f: f64, symbol_rate: f64, roll_off: f64) -> f64 {
    let a = f.abs();
    if roll_off == 0.0 {
        // The band edge sits on the Nyquist frequency; split it evenly.
        let edge = symbol_rate / 2.0;
        return if a < edge { 1.0 } else if a == edge { 0.5 } else { 0.0 };
    }
    let lo = (1.0 - roll_off) * symbol_rate / 2.0;
    let hi = (1.0 + roll_off) * symbol_rate / 2.0;
    if a <= lo {
        1.0
    } else if a >= hi {
        0.0
    } else {
        0.5 * (1.0 + (PI / (roll_off * symbol_rate) * (a - lo)).cos())
    }
}

/// Root-raised-cosine amplitude spectrum with unit passband gain.
pub fn root_raised_cosine(f: f64, symbol_rate: f64, roll_off: f64) -> f64 {
    raised_cosine(f, symbol_rate, roll_off).sqrt()
}

/// Shapes a symbol block with RRC pulses over the periodic block.
///
/// With unit-power symbols the output has unit power, and a matched RRC
/// filter followed by sampling at the symbol instants returns the symbols.
pub fn shape_pulses(
    symbols: &[C64],
    symbol_rate: f64,
    roll_off: f64,
    samples_per_symbol: usize,
) -> Result<Signal> {
    if symbols.is_empty() {
        return Err(Error::EmptySignal);
    }
    if !(0.0..=1.0).contains(&roll_off) {
        return Err(Error::invalid(format!("roll-off {roll_off} outside [0, 1]")));
    }
    if samples_per_symbol == 0 || (samples_per_symbol as f64) < 1.0 + roll_off {
        return Err(Error::Aliasing {
            occupied: (1.0 + roll_off) * symbol_rate,
            sample_rate: samples_per_symbol as f64 * symbol_rate,
        });
    }
    let n = symbols.len();
    let sps = samples_per_symbol;
    let total = n * sps;
    let fs = symbol_rate * sps as f64;
    let mut a = symbols.to_vec();
    fft_in_place(&mut a);
    let mut out = vec![C64::new(0.0, 0.0); total];
    for (j, v) in out.iter_mut().enumerate() {
        let f = signal::bin_frequency(j, total, fs);
        let h = root_raised_cosine(f, symbol_rate, roll_off);
        if h > 0.0 {
            let idx = signal::wrap_bin(signal::signed_bin(j, total), n);
            *v = a[idx] * (h * sps as f64);
        }
    }
    ifft_in_place(&mut out);
    Signal::single(out, fs, 0.0)
}

/// Shapes both polarizations into one dual-polarization signal.
pub fn shape_dual(
    x: &[C64],
    y: &[C64],
    symbol_rate: f64,
    roll_off: f64,
    samples_per_symbol: usize,
) -> Result<Signal> {
    let sx = shape_pulses(x, symbol_rate, roll_off, samples_per_symbol)?;
    let sy = shape_pulses(y, symbol_rate, roll_off, samples_per_symbol)?;
    let fs = sx.sample_rate();
    let (x, _) = sx.into_parts();
    let (y, _) = sy.into_parts();
    Signal::dual(x, y, fs, 0.0)
}

/// β2·L equivalent of an accumulated dispersion D·L (s/m) at `wavelength`.
pub fn accumulated_beta2(acc_dispersion: f64, wavelength: f64) -> f64 {
    -acc_dispersion * wavelength * wavelength / (2.0 * PI * SPEED_OF_LIGHT)
}

/// Quadratic spectral phase equal to what a fiber with accumulated
/// dispersion `acc_dispersion` (s/m) imposes, about the signal's own center.
pub fn apply_pre_dispersion(signal: &Signal, acc_dispersion: f64, wavelength: f64) -> Signal {
    if acc_dispersion == 0.0 {
        return signal.clone();
    }
    let b = accumulated_beta2(acc_dispersion, wavelength);
    let gains: Vec<C64> = signal
        .frequencies()
        .into_iter()
        .map(|f| C64::from_polar(1.0, -2.0 * PI * PI * b * f * f))
        .collect();
    signal::apply_gains(signal, &gains)
}

/// Random delay and polarization state drawn for one seed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Conditioning {
    pub delay: f64,
    pub rotation: Jones,
}

impl Conditioning {
    /// Delay uniform in [0, 1/symbol_rate), Haar-random unitary rotation.
    pub fn from_seed(seed: u64, symbol_rate: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let delay = rng.random::<f64>() / symbol_rate;
        let rotation = random_unitary(&mut rng);
        Conditioning { delay, rotation }
    }

    pub fn apply(&self, signal: &Signal) -> Signal {
        let gains: Vec<C64> = signal
            .frequencies()
            .into_iter()
            .map(|f| C64::from_polar(1.0, -2.0 * PI * f * self.delay))
            .collect();
        let delayed = signal::apply_gains(signal, &gains);
        if delayed.is_dual() {
            rotate_polarization(&delayed, &self.rotation)
        } else {
            // A single tributary only picks up the phase of the first entry.
            let ph = self.rotation[0][0] / self.rotation[0][0].norm().max(f64::MIN_POSITIVE);
            let mut out = delayed;
            out.x_mut().iter_mut().for_each(|v| *v *= ph);
            out
        }
    }
}

/// Seed-deterministic sub-symbol delay and polarization rotation.
pub fn condition_channel(signal: &Signal, symbol_rate: f64, seed: u64) -> Signal {
    Conditioning::from_seed(seed, symbol_rate).apply(signal)
}

/// One WDM channel. Index 0 is the channel under test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub index: i32,
    /// Offset of the channel center from the CUT, Hz.
    pub center_offset: f64,
    pub format: ModulationFormat,
    /// Launch power of both polarizations together, W.
    pub launch_power: f64,
    /// Accumulated dispersion imposed before multiplexing, s/m.
    pub pre_dispersion: f64,
    pub seed: u64,
}

impl ChannelSpec {
    pub fn is_cut(&self) -> bool {
        self.index == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelPlan {
    pub channels: Vec<ChannelSpec>,
    pub spacing: f64,
    pub symbol_rate: f64,
    pub roll_off: f64,
}

impl ChannelPlan {
    /// Channels centred on the CUT: indices -(n-1)/2 ..= n/2 at `spacing`.
    #[allow(clippy::too_many_arguments)]
    pub fn uniform(
        count: usize,
        spacing: f64,
        symbol_rate: f64,
        roll_off: f64,
        cut_format: ModulationFormat,
        int_format: ModulationFormat,
        power_per_channel: f64,
        int_pre_dispersion: f64,
        seed: u64,
    ) -> Result<Self> {
        if count == 0 {
            return Err(Error::invalid("a plan needs at least the CUT"));
        }
        let lo = -((count as i32 - 1) / 2);
        let channels = (0..count as i32)
            .map(|i| {
                let index = lo + i;
                let cut = index == 0;
                ChannelSpec {
                    index,
                    center_offset: index as f64 * spacing,
                    format: if cut { cut_format } else { int_format },
                    launch_power: power_per_channel,
                    pre_dispersion: if cut { 0.0 } else { int_pre_dispersion },
                    seed: channel_seed(seed, index),
                }
            })
            .collect();
        let plan = ChannelPlan { channels, spacing, symbol_rate, roll_off };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.roll_off) {
            return Err(Error::Config(format!("roll-off {} outside [0, 1]", self.roll_off)));
        }
        if !(self.symbol_rate > 0.0) {
            return Err(Error::Config("symbol rate must be positive".into()));
        }
        if self.channels.len() > 1 && self.spacing < (1.0 + self.roll_off) * self.symbol_rate * (1.0 - 1e-12) {
            return Err(Error::Config(format!(
                "channel spacing {} Hz is below the occupied bandwidth {} Hz",
                self.spacing,
                (1.0 + self.roll_off) * self.symbol_rate
            )));
        }
        let cuts = self.channels.iter().filter(|c| c.is_cut()).count();
        if cuts != 1 {
            return Err(Error::Config(format!("plan must contain exactly one CUT, found {cuts}")));
        }
        for c in &self.channels {
            if !(c.launch_power > 0.0) {
                return Err(Error::Config(format!("channel {} launch power must be positive", c.index)));
            }
        }
        Ok(())
    }

    pub fn cut(&self) -> &ChannelSpec {
        self.channels.iter().find(|c| c.is_cut()).expect("validated plan has a CUT")
    }

    pub fn interferers(&self) -> impl Iterator<Item = &ChannelSpec> {
        self.channels.iter().filter(|c| !c.is_cut())
    }

    pub fn total_power(&self) -> f64 {
        self.channels.iter().map(|c| c.launch_power).sum()
    }

    pub fn occupied_bandwidth(&self) -> f64 {
        let lo = self.channels.iter().map(|c| c.center_offset).fold(f64::INFINITY, f64::min);
        let hi = self.channels.iter().map(|c| c.center_offset).fold(f64::NEG_INFINITY, f64::max);
        hi - lo + (1.0 + self.roll_off) * self.symbol_rate
    }

    /// The same plan restricted to the CUT.
    pub fn cut_only(&self) -> ChannelPlan {
        ChannelPlan { channels: vec![self.cut().clone()], ..self.clone() }
    }

    /// Smallest power-of-two oversampling for which four-wave-mixing products
    /// of the whole comb (up to 1.5× its width) cannot alias onto the CUT.
    pub fn simulation_oversampling(&self) -> usize {
        let need = 1.5 * self.occupied_bandwidth() + (1.0 + self.roll_off) * self.symbol_rate / 2.0;
        let mut sps = 2;
        while (sps as f64) * self.symbol_rate < need {
            sps *= 2;
        }
        sps
    }
}

/// Per-channel seed derived from a base seed; stable under plan changes.
pub fn channel_seed(base: u64, index: i32) -> u64 {
    let mut z = base ^ (index as i64 as u64).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 31)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 29)
}

/// A generated channel: its transmitted symbols and its optical waveform at
/// the simulation rate, centered at baseband.
#[derive(Clone, Debug)]
pub struct ChannelWaveform {
    pub spec: ChannelSpec,
    pub symbols: [Vec<C64>; 2],
    pub signal: Signal,
}

/// Builds the dual-polarization waveform of one channel: header plus random
/// payload, RRC shaping at `samples_per_symbol`, launch power, optional
/// pre-dispersion and seed-determined delay/rotation.
pub fn generate_channel(
    spec: &ChannelSpec,
    plan: &ChannelPlan,
    layout: &FrameLayout,
    samples_per_symbol: usize,
    wavelength: f64,
) -> Result<ChannelWaveform> {
    let [mut x, mut y] = layout.header()?;
    x.extend(random_symbols(spec.format, layout.payload_symbols, spec.seed));
    y.extend(random_symbols(spec.format, layout.payload_symbols, spec.seed.wrapping_add(1)));
    let base = shape_dual(&x, &y, plan.symbol_rate, plan.roll_off, samples_per_symbol)?;
    let signal = finish_channel(&base, spec, plan.symbol_rate, wavelength, spec.seed.wrapping_add(2));
    Ok(ChannelWaveform { spec: spec.clone(), symbols: [x, y], signal })
}

/// Scales a unit-power shaped channel to its launch power, pre-disperses it
/// and applies the conditioning drawn from `conditioning_seed`.
pub fn finish_channel(
    unit: &Signal,
    spec: &ChannelSpec,
    symbol_rate: f64,
    wavelength: f64,
    conditioning_seed: u64,
) -> Signal {
    let scaled = unit.clone().scaled((spec.launch_power / unit.power()).sqrt());
    let dispersed = apply_pre_dispersion(&scaled, spec.pre_dispersion, wavelength);
    condition_channel(&dispersed, symbol_rate, conditioning_seed)
}

/// Frequency extent of the non-negligible spectral content, relative to center.
fn occupied_extent(signal: &Signal) -> Option<(f64, f64)> {
    let n = signal.len();
    let mut energy = vec![0.0; n];
    for p in signal.pols() {
        let mut b = p.to_vec();
        fft_in_place(&mut b);
        for (e, v) in energy.iter_mut().zip(&b) {
            *e += v.norm_sqr();
        }
    }
    let total: f64 = energy.iter().sum();
    if total == 0.0 {
        return None;
    }
    let fs = signal.sample_rate();
    let thr = total * 1e-18;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (k, e) in energy.iter().enumerate() {
        if *e > thr {
            let f = signal::bin_frequency(k, n, fs);
            lo = lo.min(f);
            hi = hi.max(f);
        }
    }
    Some((lo, hi))
}

/// Sums frequency-shifted channels. Offsets are snapped to the nearest bin of
/// the common grid so that every shift is exact on the periodic block.
pub fn multiplex(channels: &[(ChannelSpec, Signal)]) -> Result<Signal> {
    let (_, first) = channels.first().ok_or(Error::EmptySignal)?;
    let fs = first.sample_rate();
    let df = first.bin_spacing();
    let mut out = first.zeros_like();
    if !out.is_dual() && channels.iter().any(|(_, s)| s.is_dual()) {
        out = Signal::dual(
            vec![C64::new(0.0, 0.0); first.len()],
            vec![C64::new(0.0, 0.0); first.len()],
            fs,
            first.center_frequency(),
        )?;
    }
    let mut lo_all = f64::INFINITY;
    let mut hi_all = f64::NEG_INFINITY;
    for (spec, s) in channels {
        if s.len() != first.len() || (s.sample_rate() - fs).abs() > 1e-9 * fs {
            return Err(Error::invalid("multiplexed channels must share length and sample rate"));
        }
        let bins = signal::snap_to_bin(spec.center_offset, df);
        if let Some((lo, hi)) = occupied_extent(s) {
            let shift = bins as f64 * df;
            lo_all = lo_all.min(lo + shift);
            hi_all = hi_all.max(hi + shift);
            if lo + shift < -fs / 2.0 || hi + shift >= fs / 2.0 {
                return Err(Error::Aliasing { occupied: hi_all - lo_all, sample_rate: fs });
            }
        }
        out.add_assign(&signal::shift_bins(s, bins))?;
    }
    if let Some(cut) = channels.iter().find(|(c, _)| c.is_cut()) {
        out = out.with_center_frequency(cut.1.center_frequency());
    }
    Ok(out)
}
