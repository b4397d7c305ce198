//! Semi-analytical NLI models: the GN model and its modulation-dependent
//! EGN extension, both evaluated by direct two-dimensional quadrature.

mod egn;
mod gn;

pub use egn::{egn_correction_xci, egn_nli_psd, egn_xmci, EgnTerm, EgnTerms, Moment, Role};
pub use gn::{gn_nli_psd, gn_xmci};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::FiberParams;
use crate::signal::C64;
use crate::waveform::{raised_cosine, ChannelPlan, ChannelSpec, ModulationFormat};

/// FWM efficiency ζ(f1, f2, f) of one amplified span (1/W).
pub fn fwm_efficiency(f1: f64, f2: f64, f: f64, fiber: &FiberParams, span_length: f64) -> C64 {
    let phase = 4.0 * PI * PI * fiber.beta2 * (f1 - f) * (f2 - f);
    efficiency_from_phase(phase, fiber.gamma, fiber.power_attenuation(), span_length)
}

/// ζ for a given phase-mismatch rate `phase` (rad/m); `alpha_p` is the power
/// attenuation, i.e. twice the field attenuation.
pub(crate) fn efficiency_from_phase(phase: f64, gamma: f64, alpha_p: f64, span_length: f64) -> C64 {
    let den = C64::new(alpha_p, -phase);
    if den.norm() * span_length < 1e-10 {
        // Lossless and phase matched: the integrand is constant.
        return C64::new(gamma * span_length, 0.0);
    }
    let num = C64::new(1.0, 0.0) - C64::from_polar((-alpha_p * span_length).exp(), phase * span_length);
    num / den * gamma
}

/// Span-coherence factor ν(f1, f2, f): sin(N x)/sin(x) e^{i(N−1)x} with
/// x = 2π²β2(f1 − f)(f2 − f)L_s.
pub fn coherence_factor(f1: f64, f2: f64, f: f64, beta2: f64, span_length: f64, span_count: usize) -> C64 {
    let x = 2.0 * PI * PI * beta2 * (f1 - f) * (f2 - f) * span_length;
    let n = span_count as f64;
    C64::from_polar(dirichlet(x, span_count), (n - 1.0) * x)
}

/// sin(N x)/sin(x), with the series expansion around the poles x = kπ.
pub(crate) fn dirichlet(x: f64, n: usize) -> f64 {
    if n == 1 {
        return 1.0;
    }
    let nf = n as f64;
    let s = x.sin();
    if s.abs() < 1e-8 {
        let k = (x / PI).round();
        let d = x - k * PI;
        let sign = if (k as i64 * (n as i64 - 1)) % 2 == 0 { 1.0 } else { -1.0 };
        return sign * nf * (1.0 - (nf * nf - 1.0) * d * d / 6.0);
    }
    (nf * x).sin() / s
}

/// |ν|² without the phase factor.
pub(crate) fn dirichlet_sq(x: f64, n: usize) -> f64 {
    let d = dirichlet(x, n);
    d * d
}

/// Moments of a unit-power constellation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModulationMoments {
    pub second: f64,
    pub fourth: f64,
    pub sixth: f64,
    /// E|b|⁴/E|b|²² − 2.
    pub phi_b: f64,
    /// E|b|⁶/E|b|²³ − 9 E|b|⁴/E|b|²² + 12.
    pub psi_b: f64,
}

/// Moments by alphabet enumeration, or in closed form for Gaussian symbols.
pub fn modulation_moments(format: ModulationFormat) -> ModulationMoments {
    let (second, fourth, sixth) = match format.alphabet() {
        Some(points) => {
            let n = points.len() as f64;
            let m = |k: i32| points.iter().map(|p| p.norm_sqr().powi(k)).sum::<f64>() / n;
            (m(1), m(2), m(3))
        }
        // Circular complex Gaussian: E|b|^{2k} = k! E|b|²^k.
        None => (1.0, 2.0, 6.0),
    };
    let r4 = fourth / (second * second);
    let r6 = sixth / (second * second * second);
    ModulationMoments { second, fourth, sixth, phi_b: r4 - 2.0, psi_b: r6 - 9.0 * r4 + 12.0 }
}

/// Spectral shape assumed for each channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumShape {
    /// |G|² follows the raised cosine of the transmit pulses.
    RaisedCosine,
    /// Ideal rectangle of width S_R.
    Rectangular,
}

/// Quadrature settings shared by both models.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Quadrature {
    /// Nodes per symbol rate of bandwidth (grid spacing S_R / n).
    pub points_per_symbol_rate: usize,
    /// Spectral shape for the GN integral.
    pub gn_shape: SpectrumShape,
    /// Spectral shape for the EGN correction integrals.
    pub egn_shape: SpectrumShape,
    /// When set, the CUT-centre value is recomputed on a grid twice as fine
    /// and a relative change above this tolerance is an error.
    pub refinement_tolerance: Option<f64>,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature {
            points_per_symbol_rate: 64,
            gn_shape: SpectrumShape::RaisedCosine,
            egn_shape: SpectrumShape::Rectangular,
            refinement_tolerance: None,
        }
    }
}

impl Quadrature {
    pub fn refined(&self) -> Self {
        Quadrature { points_per_symbol_rate: 2 * self.points_per_symbol_rate, refinement_tolerance: None, ..self.clone() }
    }

    pub(crate) fn step(&self, symbol_rate: f64) -> Result<f64> {
        if self.points_per_symbol_rate < 4 {
            return Err(Error::invalid("quadrature needs at least 4 points per symbol rate"));
        }
        Ok(symbol_rate / self.points_per_symbol_rate as f64)
    }
}

/// Channel spectra as seen by the models: |G_c(f)|² in W/Hz.
#[derive(Clone, Debug)]
pub(crate) struct SpectralModel {
    pub centers: Vec<f64>,
    pub powers: Vec<f64>,
    pub symbol_rate: f64,
    pub roll_off: f64,
    pub shape: SpectrumShape,
}

impl SpectralModel {
    pub fn new(channels: &[&ChannelSpec], symbol_rate: f64, roll_off: f64, shape: SpectrumShape) -> Self {
        SpectralModel {
            centers: channels.iter().map(|c| c.center_offset).collect(),
            powers: channels.iter().map(|c| c.launch_power).collect(),
            symbol_rate,
            roll_off,
            shape,
        }
    }

    pub fn half_width(&self) -> f64 {
        match self.shape {
            SpectrumShape::RaisedCosine => (1.0 + self.roll_off) * self.symbol_rate / 2.0,
            SpectrumShape::Rectangular => self.symbol_rate / 2.0,
        }
    }

    /// Unit-power spectral shape (integrates to one).
    pub fn unit_shape(&self, df: f64) -> f64 {
        match self.shape {
            SpectrumShape::RaisedCosine => raised_cosine(df, self.symbol_rate, self.roll_off) / self.symbol_rate,
            SpectrumShape::Rectangular => {
                let a = df.abs();
                let h = self.symbol_rate / 2.0;
                if a < h {
                    1.0 / self.symbol_rate
                } else if a == h {
                    0.5 / self.symbol_rate
                } else {
                    0.0
                }
            }
        }
    }

    /// |G_c(f)|² of channel `c`.
    pub fn channel_psd(&self, c: usize, f: f64) -> f64 {
        let d = f - self.centers[c];
        if d.abs() > self.half_width() {
            return 0.0;
        }
        self.powers[c] * self.unit_shape(d)
    }

    /// Midpoint nodes covering channel `c`.
    pub fn nodes(&self, c: usize, h: f64) -> Vec<f64> {
        let lo = self.centers[c] - self.half_width();
        let n = (2.0 * self.half_width() / h).ceil() as usize;
        (0..n).map(|k| lo + (k as f64 + 0.5) * h).collect()
    }
}

/// NLI power spectral density on a frequency grid with its SCI/XCI/MCI split
/// (W/Hz). `correction` holds the modulation-dependent EGN part already
/// contained in the other fields.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NliPsd {
    pub frequencies: Vec<f64>,
    pub total: Vec<f64>,
    pub sci: Vec<f64>,
    pub xci: Vec<f64>,
    pub mci: Vec<f64>,
    pub correction: Vec<f64>,
}

impl NliPsd {
    pub(crate) fn zeros(frequencies: &[f64]) -> Self {
        let z = vec![0.0; frequencies.len()];
        NliPsd {
            frequencies: frequencies.to_vec(),
            total: z.clone(),
            sci: z.clone(),
            xci: z.clone(),
            mci: z.clone(),
            correction: z,
        }
    }

    /// Trapezoidal integral of the total PSD over [lo, hi].
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        trapezoid(&self.frequencies, &self.total, lo, hi)
    }
}

fn trapezoid(f: &[f64], v: &[f64], lo: f64, hi: f64) -> f64 {
    let mut acc = 0.0;
    for i in 1..f.len() {
        let (a, b) = (f[i - 1].max(lo), f[i].min(hi));
        if b > a {
            let t = |x: f64| v[i - 1] + (v[i] - v[i - 1]) * (x - f[i - 1]) / (f[i] - f[i - 1]);
            acc += 0.5 * (t(a) + t(b)) * (b - a);
        }
    }
    acc
}

/// Evenly spaced grid across the CUT band [−S_R/2, S_R/2], ends included.
pub fn cut_band_grid(plan: &ChannelPlan, points: usize) -> Vec<f64> {
    let c = plan.cut().center_offset;
    let half = plan.symbol_rate / 2.0;
    let n = points.max(2);
    (0..n).map(|k| c - half + 2.0 * half * k as f64 / (n - 1) as f64).collect()
}

/// ∫_band (full − cut_only) df: the NLI caused by the presence of the
/// interferers.
pub fn xmci_power(full: &NliPsd, cut_only: &NliPsd, band: (f64, f64)) -> Result<f64> {
    if full.frequencies != cut_only.frequencies {
        return Err(Error::IncompatibleGrid("model outputs use different frequency grids".into()));
    }
    let diff: Vec<f64> = full.total.iter().zip(&cut_only.total).map(|(a, b)| a - b).collect();
    Ok(trapezoid(&full.frequencies, &diff, band.0, band.1).max(0.0))
}

/// XMCI of a link whose interferers are replaced at every node: the
/// single-span value grows linearly with the span count.
pub fn replaced_int_adaptation(single_span_xmci: f64, span_count: usize) -> f64 {
    span_count as f64 * single_span_xmci
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn efficiency_limits() {
        let fiber = FiberParams::standard_smf(80e3);
        let z = fwm_efficiency(10e9, 3e9, 10e9, &fiber, 80e3);
        assert_relative_eq!(z.re, fiber.gamma * fiber.effective_length(), max_relative = 1e-12);
        assert!(z.im.abs() < 1e-15);
        let lossless = FiberParams { attenuation_db_km: 0.0, ..fiber.clone() };
        let z = fwm_efficiency(1e9, 0.0, 0.0, &lossless, 80e3);
        assert_relative_eq!(z.re, fiber.gamma * 80e3, max_relative = 1e-12);
        let a = fwm_efficiency(17e9, -40e9, 5e9, &fiber, 80e3);
        let b = fwm_efficiency(-40e9, 17e9, 5e9, &fiber, 80e3);
        assert_eq!(a, b);
    }

    #[test]
    fn coherence_limits() {
        assert_eq!(coherence_factor(30e9, 40e9, 0.0, -2e-26, 80e3, 1), C64::new(1.0, 0.0));
        assert_relative_eq!(coherence_factor(0.0, 40e9, 0.0, -2e-26, 80e3, 10).norm(), 10.0, max_relative = 1e-12);
        for k in 0..200 {
            let f1 = k as f64 * 0.37e9;
            let v = coherence_factor(f1, 23e9, 1e9, -2.17e-26, 80e3, 10);
            assert!(v.norm() <= 10.0 + 1e-9);
        }
        // Near a pole the series agrees with the exact ratio.
        for n in [2, 3, 10] {
            let x = 3.0 * PI + 2e-9;
            let exact = (n as f64 * x).sin() / x.sin();
            assert_relative_eq!(dirichlet(x, n), exact, max_relative = 1e-5);
            let y = 3.0 * PI + 1e-6;
            assert_relative_eq!(dirichlet(y, n), (n as f64 * y).sin() / y.sin(), max_relative = 1e-8);
        }
    }

    #[test]
    fn moment_table() {
        let q = modulation_moments(ModulationFormat::Qpsk);
        assert_relative_eq!(q.phi_b, -1.0, epsilon = 1e-12);
        let m = modulation_moments(ModulationFormat::Qam16);
        assert_relative_eq!(m.fourth, 1.32, epsilon = 1e-12);
        assert_relative_eq!(m.phi_b, -0.68, epsilon = 1e-12);
        assert_relative_eq!(m.sixth, 1.96, epsilon = 1e-12);
        let g = modulation_moments(ModulationFormat::Gaussian);
        assert_eq!(g.phi_b, 0.0);
        assert_eq!(g.psi_b, 0.0);
        for f in ModulationFormat::ALL {
            let mm = modulation_moments(f);
            assert!(mm.fourth >= mm.second * mm.second - 1e-12);
            assert!(mm.phi_b >= -1.0 - 1e-12);
        }
    }

    #[test]
    fn xmci_integration() {
        let f: Vec<f64> = (0..11).map(|k| -5e9 + k as f64 * 1e9).collect();
        let mut a = NliPsd::zeros(&f);
        let b = NliPsd::zeros(&f);
        assert_eq!(xmci_power(&a, &b, (-5e9, 5e9)).unwrap(), 0.0);
        a.total.iter_mut().for_each(|v| *v = 2e-20);
        assert_relative_eq!(xmci_power(&a, &b, (-5e9, 5e9)).unwrap(), 2e-20 * 10e9, max_relative = 1e-12);
        let c = NliPsd::zeros(&f[1..]);
        assert!(xmci_power(&a, &c, (-5e9, 5e9)).is_err());
    }

    #[test]
    fn replaced_adaptation() {
        assert_eq!(replaced_int_adaptation(3e-6, 1), 3e-6);
        assert_relative_eq!(replaced_int_adaptation(1e-6, 10), 1e-5);
    }
}
