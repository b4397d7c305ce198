//! Fiber spans: parameters, split-step integration of the coupled NLSE,
//! coarse-step PMD and lumped amplification.
//!
//! The field obeys `dB/dz = -a B + i (b2/2) d²B/dt² - i g |B|² B` with `a` the
//! field attenuation (half the power attenuation). With the crate's frequency
//! grid convention the linear operator over a length `h` is
//! `exp((-a - i 2 pi² b2 f²) h)`.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{fft_in_place, ifft_in_place, random_unitary, Jones, Signal, C64};
use crate::units::{self, SPEED_OF_LIGHT};

/// Polarization-averaged Kerr coefficient of the Manakov equation.
pub const MANAKOV_FACTOR: f64 = 8.0 / 9.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberParams {
    /// Span length, m.
    pub length: f64,
    /// Power attenuation, dB/km.
    pub attenuation_db_km: f64,
    /// Dispersion parameter D, s/m².
    pub dispersion: f64,
    /// Group-velocity dispersion, s²/m.
    pub beta2: f64,
    /// Nonlinear coefficient, 1/(W m).
    pub gamma: f64,
    /// PMD coefficient, s/√m.
    pub pmd_coefficient: f64,
    /// Nonlinear index, m²/W.
    pub n2: f64,
    /// Effective core area, m².
    pub a_eff: f64,
    pub reference_wavelength: f64,
    /// Multiplies `gamma` for dual-polarization fields (8/9 for the Manakov
    /// average over fast random birefringence). Single-polarization fields
    /// always use the scalar equation.
    pub manakov_factor: f64,
}

impl FiberParams {
    /// Standard single-mode fiber used throughout the simulations: 0.19 dB/km,
    /// 16.8 ps/(nm km), 0.1 ps/√km, n2 = 2.25e-20 m²/W, A_eff = 84.95 µm², at
    /// the wavelength of 193.4 THz.
    pub fn standard_smf(length: f64) -> Self {
        FiberParams::from_datasheet(
            length,
            0.19,
            16.8,
            0.1,
            2.25e-20,
            84.95e-12,
            SPEED_OF_LIGHT / 193.4e12,
        )
        .expect("datasheet values are valid")
    }

    /// Builds parameters from datasheet units (dB/km, ps/(nm km), ps/√km).
    pub fn from_datasheet(
        length: f64,
        attenuation_db_km: f64,
        dispersion_ps_nm_km: f64,
        pmd_ps_sqrt_km: f64,
        n2: f64,
        a_eff: f64,
        wavelength: f64,
    ) -> Result<Self> {
        let dispersion = units::ps_nm_km_to_si(dispersion_ps_nm_km);
        let p = FiberParams {
            length,
            attenuation_db_km,
            dispersion,
            beta2: beta2_from_dispersion(dispersion, wavelength),
            gamma: gamma_from_n2(n2, wavelength, a_eff),
            pmd_coefficient: units::ps_sqrt_km_to_si(pmd_ps_sqrt_km),
            n2,
            a_eff,
            reference_wavelength: wavelength,
            manakov_factor: MANAKOV_FACTOR,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.length > 0.0) {
            return bad("fiber length must be positive");
        }
        if !(self.attenuation_db_km >= 0.0) {
            return bad("attenuation must be non-negative");
        }
        if !(self.gamma >= 0.0) {
            return bad("gamma must be non-negative");
        }
        if !(self.pmd_coefficient >= 0.0) {
            return bad("PMD coefficient must be non-negative");
        }
        if !(self.reference_wavelength > 0.0) {
            return bad("reference wavelength must be positive");
        }
        let expect = beta2_from_dispersion(self.dispersion, self.reference_wavelength);
        if (self.beta2 - expect).abs() > 1e-9 * expect.abs().max(1e-40) {
            return bad("beta2 is inconsistent with the dispersion parameter");
        }
        Ok(())
    }

    /// Power loss rate, 1/m.
    pub fn power_attenuation(&self) -> f64 {
        units::db_per_km_to_power_per_m(self.attenuation_db_km)
    }

    /// Field loss rate α, 1/m.
    pub fn field_attenuation(&self) -> f64 {
        self.power_attenuation() / 2.0
    }

    pub fn span_loss_db(&self) -> f64 {
        self.attenuation_db_km * self.length / 1e3
    }

    pub fn effective_length(&self) -> f64 {
        effective_length(self.attenuation_db_km, self.length)
    }

    pub fn with_length(mut self, length: f64) -> Self {
        self.length = length;
        self
    }

    pub fn with_gamma(mut self, gamma: f64) -> Self {
        self.gamma = gamma;
        self
    }

    pub fn without_pmd(mut self) -> Self {
        self.pmd_coefficient = 0.0;
        self
    }

    /// Kerr coefficient applied to a field with or without a y tributary.
    pub fn kerr(&self, dual: bool) -> f64 {
        if dual {
            self.gamma * self.manakov_factor
        } else {
            self.gamma
        }
    }
}

/// `L_eff = (1 - exp(-a_p L)) / a_p` with `a_p` the power attenuation.
pub fn effective_length(attenuation_db_km: f64, span_length: f64) -> f64 {
    let a = units::db_per_km_to_power_per_m(attenuation_db_km);
    if a * span_length < 1e-12 {
        return span_length;
    }
    -(-a * span_length).exp_m1() / a
}

/// `β2 = -D λ² / (2 π c)`.
pub fn beta2_from_dispersion(dispersion: f64, wavelength: f64) -> f64 {
    -dispersion * wavelength * wavelength / (2.0 * PI * SPEED_OF_LIGHT)
}

/// `γ = 2 π n2 / (λ A_eff)`.
pub fn gamma_from_n2(n2: f64, wavelength: f64, a_eff: f64) -> f64 {
    2.0 * PI * n2 / (wavelength * a_eff)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepControl {
    /// Largest mean nonlinear phase accumulated in one step, rad.
    pub max_nonlinear_phase: f64,
    /// Largest step, m.
    pub max_step: f64,
    pub min_steps_per_span: usize,
    /// Power used for the nonlinear-phase criterion. `None` uses the power of
    /// the signal entering the span.
    #[serde(default)]
    pub reference_power: Option<f64>,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            max_nonlinear_phase: 1e-3,
            max_step: 1000.0,
            min_steps_per_span: 4,
            reference_power: None,
        }
    }
}

impl StepControl {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_nonlinear_phase > 0.0) || !(self.max_step > 0.0) || self.min_steps_per_span == 0 {
            return Err(Error::Config("step control values must be positive".into()));
        }
        Ok(())
    }

    pub fn with_reference_power(mut self, p: f64) -> Self {
        self.reference_power = Some(p);
        self
    }
}

/// Step lengths along one span. The nonlinear phase is evaluated on the mean
/// power profile `P0 exp(-a_p z)`, so steps grow as the signal decays.
pub fn step_schedule(fiber: &FiberParams, control: &StepControl, power: f64, dual: bool) -> Result<Vec<f64>> {
    control.validate()?;
    let len = fiber.length;
    if !(len > 0.0) {
        return Err(Error::Integration { span: 0, z: 0.0, reason: "step control yields zero steps".into() });
    }
    let ap = fiber.power_attenuation();
    let g = fiber.kerr(dual) * power;
    let mut steps = Vec::new();
    let mut z = 0.0;
    while z < len * (1.0 - 1e-12) {
        let rate = g * (-ap * z).exp();
        let mut dz = control.max_step;
        if rate > 0.0 {
            let phi = control.max_nonlinear_phase;
            let lin = if ap > 0.0 {
                let arg = 1.0 - phi * ap / rate;
                if arg > 0.0 {
                    -arg.ln() / ap
                } else {
                    f64::INFINITY
                }
            } else {
                phi / rate
            };
            dz = dz.min(lin);
        }
        dz = dz.min(len - z);
        if !(dz > 0.0) {
            return Err(Error::Integration { span: 0, z, reason: "step control yields zero steps".into() });
        }
        steps.push(dz);
        z += dz;
    }
    if steps.len() < control.min_steps_per_span {
        let n = control.min_steps_per_span;
        steps = vec![len / n as f64; n];
    }
    Ok(steps)
}

/// One coarse-step birefringence section: a random rotation followed by a
/// differential group delay between the rotated axes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PmdElement {
    pub rotation: Jones,
    pub dgd: f64,
}

/// Seeded source of PMD sections; `None` disables PMD.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PmdRealization {
    pub seed: Option<u64>,
}

impl PmdRealization {
    pub fn new(seed: u64) -> Self {
        PmdRealization { seed: Some(seed) }
    }

    pub fn off() -> Self {
        PmdRealization { seed: None }
    }

    /// Sections for a given schedule. Each section's DGD scales with the
    /// square root of its length so that the mean DGD of the span equals
    /// `pmd_coefficient * sqrt(length)`.
    pub fn elements(&self, fiber: &FiberParams, schedule: &[f64]) -> Option<Vec<PmdElement>> {
        let seed = self.seed?;
        if fiber.pmd_coefficient == 0.0 {
            return None;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = (3.0 * PI / 8.0).sqrt() * fiber.pmd_coefficient;
        Some(
            schedule
                .iter()
                .map(|dz| PmdElement { rotation: random_unitary(&mut rng), dgd: scale * dz.sqrt() })
                .collect(),
        )
    }
}

/// Coefficients of the split-step recursion; negating all of them runs the
/// recursion backwards.
#[derive(Clone, Copy, Debug)]
pub(crate) struct SplitStepCoefficients {
    pub field_attenuation: f64,
    pub beta2: f64,
    pub kerr: f64,
}

fn linear_gains(freqs: &[f64], c: &SplitStepCoefficients, h: f64, out: &mut [C64]) {
    let loss = (-c.field_attenuation * h).exp();
    let k = -2.0 * PI * PI * c.beta2 * h;
    for (g, f) in out.iter_mut().zip(freqs) {
        *g = C64::from_polar(loss, k * f * f);
    }
}

fn apply_pmd(x: &mut [C64], y: &mut [C64], freqs: &[f64], e: &PmdElement) {
    for ((a, b), f) in x.iter_mut().zip(y.iter_mut()).zip(freqs) {
        let (p, q) = crate::signal::jones_apply(&e.rotation, *a, *b);
        let ph = C64::from_polar(1.0, -PI * f * e.dgd);
        *a = p * ph;
        *b = q * ph.conj();
    }
}

/// Symmetric split-step over `schedule`: half linear step, full nonlinear
/// step, half linear step, with consecutive linear halves merged. PMD section
/// `i` is applied in the frequency domain just before nonlinear step `i`.
pub(crate) fn split_step(
    signal: &Signal,
    c: &SplitStepCoefficients,
    schedule: &[f64],
    pmd: Option<&[PmdElement]>,
) -> Result<Signal> {
    if schedule.is_empty() {
        return Err(Error::Integration { span: 0, z: 0.0, reason: "step control yields zero steps".into() });
    }
    if pmd.is_some() && !signal.is_dual() {
        return Err(Error::invalid("PMD needs a dual-polarization signal"));
    }
    let freqs = signal.frequencies();
    let n = signal.len();
    let mut out = signal.clone();
    let ap = 2.0 * c.field_attenuation;
    let mut gains = vec![C64::new(0.0, 0.0); n];
    let mut z = 0.0;
    let (mut x, mut y) = {
        let (x, y) = out.clone().into_parts();
        (x, y)
    };
    // Without Kerr term every section is diagonal in frequency, so the field
    // stays there for the whole span.
    let linear = c.kerr == 0.0;
    if linear {
        std::iter::once(&mut x).chain(y.as_mut()).for_each(|p| fft_in_place(p));
    }
    for (i, &dz) in schedule.iter().enumerate() {
        let h = if i == 0 { dz / 2.0 } else { (schedule[i - 1] + dz) / 2.0 };
        linear_gains(&freqs, c, h, &mut gains);
        if !linear {
            fft_in_place(&mut x);
        }
        x.iter_mut().zip(&gains).for_each(|(v, g)| *v *= g);
        if let Some(y) = y.as_mut() {
            if !linear {
                fft_in_place(y);
            }
            y.iter_mut().zip(&gains).for_each(|(v, g)| *v *= g);
            if let Some(e) = pmd.and_then(|p| p.get(i)) {
                apply_pmd(&mut x, y, &freqs, e);
            }
            if !linear {
                ifft_in_place(y);
            }
        }
        if linear {
            z += dz;
            continue;
        }
        ifft_in_place(&mut x);

        // Exact integral of the exponentially decaying power across the step.
        let dz_eff = if ap.abs() * dz > 1e-12 { 2.0 * (ap * dz / 2.0).sinh() / ap } else { dz };
        let k = -c.kerr * dz_eff;
        let mut check = 0.0;
        match y.as_mut() {
            Some(y) => {
                for (a, b) in x.iter_mut().zip(y.iter_mut()) {
                    let p = a.norm_sqr() + b.norm_sqr();
                    check += p;
                    let r = C64::from_polar(1.0, k * p);
                    *a *= r;
                    *b *= r;
                }
            }
            None => {
                for a in x.iter_mut() {
                    let p = a.norm_sqr();
                    check += p;
                    *a *= C64::from_polar(1.0, k * p);
                }
            }
        }
        z += dz;
        if !check.is_finite() {
            return Err(Error::Integration { span: 0, z, reason: "field became non-finite".into() });
        }
    }
    linear_gains(&freqs, c, schedule[schedule.len() - 1] / 2.0, &mut gains);
    for p in std::iter::once(&mut x).chain(y.as_mut()) {
        if !linear {
            fft_in_place(p);
        }
        p.iter_mut().zip(&gains).for_each(|(v, g)| *v *= g);
        ifft_in_place(p);
    }
    out = Signal::new(x, y, signal.sample_rate(), signal.center_frequency())?;
    Ok(out)
}

/// Propagates through one fiber span (no amplification).
pub fn propagate_span(
    signal: &Signal,
    fiber: &FiberParams,
    step: &StepControl,
    pmd: &PmdRealization,
) -> Result<Signal> {
    let power = step.reference_power.unwrap_or_else(|| signal.power());
    let schedule = step_schedule(fiber, step, power, signal.is_dual())?;
    propagate_span_with_schedule(signal, fiber, &schedule, pmd)
}

/// As [`propagate_span`] with an explicit step schedule, so that a linear
/// reference run can reproduce the PMD sections of a nonlinear run.
pub fn propagate_span_with_schedule(
    signal: &Signal,
    fiber: &FiberParams,
    schedule: &[f64],
    pmd: &PmdRealization,
) -> Result<Signal> {
    let total: f64 = schedule.iter().sum();
    if (total - fiber.length).abs() > 1e-6 * fiber.length {
        return Err(Error::invalid(format!("schedule covers {total} m of a {} m span", fiber.length)));
    }
    let c = SplitStepCoefficients {
        field_attenuation: fiber.field_attenuation(),
        beta2: fiber.beta2,
        kerr: fiber.kerr(signal.is_dual()),
    };
    let elements = if signal.is_dual() { pmd.elements(fiber, schedule) } else { None };
    split_step(signal, &c, schedule, elements.as_deref())
}

/// Noiseless lumped amplifier.
pub fn amplify(signal: &Signal, gain_db: f64) -> Signal {
    signal.clone().scaled(10f64.powf(gain_db / 20.0))
}

/// Closed-form linear span: loss and dispersion over the full length.
pub fn linear_span_response(fiber: &FiberParams, f: f64) -> C64 {
    let c = SplitStepCoefficients { field_attenuation: fiber.field_attenuation(), beta2: fiber.beta2, kerr: 0.0 };
    let mut g = [C64::new(0.0, 0.0)];
    linear_gains(&[f], &c, fiber.length, &mut g);
    g[0]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::apply_transfer;
    use crate::waveform::{random_symbols, shape_dual, shape_pulses, ModulationFormat};
    use approx::assert_relative_eq;

    fn test_signal(dual: bool, power: f64) -> Signal {
        let x = random_symbols(ModulationFormat::Qam16, 1024, 1);
        let s = if dual {
            let y = random_symbols(ModulationFormat::Qam16, 1024, 2);
            shape_dual(&x, &y, 28e9, 0.2, 4).unwrap()
        } else {
            shape_pulses(&x, 28e9, 0.2, 4).unwrap()
        };
        let p = s.power();
        s.scaled((power / p).sqrt())
    }

    fn rel_err(a: &Signal, b: &Signal) -> f64 {
        let e: f64 = a.pols().zip(b.pols()).flat_map(|(p, q)| p.iter().zip(q).map(|(u, v)| (u - v).norm_sqr())).sum();
        let n: f64 = b.pols().flat_map(|p| p.iter().map(|v| v.norm_sqr())).sum();
        (e / n).sqrt()
    }

    #[test]
    fn effective_lengths() {
        assert!((effective_length(0.19, 80e3) / 1e3 - 22.2).abs() < 0.1);
        assert!((effective_length(0.19, 40e3) / 1e3 - 18.9).abs() < 0.1);
        assert_relative_eq!(effective_length(1e-12, 80e3), 80e3, max_relative = 1e-9);
        assert_relative_eq!(effective_length(0.0, 80e3), 80e3);
    }

    #[test]
    fn beta2_conversion() {
        let b = beta2_from_dispersion(units::ps_nm_km_to_si(16.8), 1550e-9);
        let ps2 = units::beta2_to_ps2_km(b);
        // Oracle: -D λ²/(2πc) evaluated in ps²/km directly.
        let direct = -16.8 * 1550.0f64.powi(2) / (2.0 * PI * 299_792.458) ;
        assert_relative_eq!(ps2, direct, max_relative = 1e-12);
        assert!((ps2 + 21.4).abs() < 0.02 * 21.4);
        assert!((ps2.abs() - 21.0).abs() < 0.05 * 21.0);
        assert_eq!(beta2_from_dispersion(0.0, 1550e-9), 0.0);
    }

    #[test]
    fn gamma_standard_convention() {
        let f = FiberParams::standard_smf(80e3);
        assert!((f.gamma * 1e3 - 1.0737).abs() < 0.002, "{}", f.gamma);
    }

    #[test]
    fn dispersion_only_is_pure_phase() {
        let s = test_signal(true, 1e-3);
        let fiber = FiberParams::standard_smf(80e3).with_gamma(0.0).without_pmd();
        let fiber = FiberParams { attenuation_db_km: 0.0, ..fiber };
        let out = propagate_span(&s, &fiber, &StepControl::default(), &PmdRealization::off()).unwrap();
        let (a, b) = (crate::signal::forward_transform(&s).unwrap(), crate::signal::forward_transform(&out).unwrap());
        for (u, v) in a.x.iter().zip(&b.x) {
            assert!((u.norm() - v.norm()).abs() < 1e-10 * (1.0 + u.norm()));
        }
        assert_relative_eq!(out.power(), s.power(), max_relative = 1e-9);
        // Against one closed-form transfer function.
        let closed = apply_transfer(&s, &|f: f64| linear_span_response(&fiber, f)).unwrap();
        assert!(rel_err(&out, &closed) < 1e-8);
    }

    #[test]
    fn lossy_linear_matches_closed_form() {
        let s = test_signal(true, 1e-3);
        let fiber = FiberParams::standard_smf(80e3).with_gamma(0.0).without_pmd();
        let out = propagate_span(&s, &fiber, &StepControl::default(), &PmdRealization::off()).unwrap();
        let closed = apply_transfer(&s, &|f: f64| linear_span_response(&fiber, f)).unwrap();
        assert!(rel_err(&out, &closed) < 1e-8);
    }

    fn cw(power: f64, n: usize) -> Signal {
        Signal::single(vec![C64::new(power.sqrt(), 0.0); n], 100e9, 0.0).unwrap()
    }

    #[test]
    fn lossless_spm_is_exact() {
        let p = 5e-3;
        let fiber = FiberParams { attenuation_db_km: 0.0, beta2: 0.0, dispersion: 0.0, ..FiberParams::standard_smf(50e3) };
        let out = propagate_span(&cw(p, 64), &fiber, &StepControl::default(), &PmdRealization::off()).unwrap();
        let want = C64::from_polar(p.sqrt(), -fiber.gamma * p * fiber.length);
        assert!((out.x()[7] - want).norm() < 1e-12);
    }

    #[test]
    fn lossy_spm_phase_uses_effective_length() {
        let p = 10e-3;
        let fiber = FiberParams { beta2: 0.0, dispersion: 0.0, ..FiberParams::standard_smf(80e3) };
        let out = propagate_span(&cw(p, 64), &fiber, &StepControl::default(), &PmdRealization::off()).unwrap();
        let phase = out.x()[0].arg();
        let want = -fiber.gamma * p * effective_length(0.19, 80e3);
        assert!((phase / want - 1.0).abs() < 1e-3, "{phase} vs {want}");
    }

    #[test]
    fn self_convergence() {
        let s = test_signal(true, 20e-3);
        let fiber = FiberParams::standard_smf(80e3).without_pmd();
        let coarse = propagate_span(&s, &fiber, &StepControl::default(), &PmdRealization::off()).unwrap();
        let fine_ctl = StepControl { max_nonlinear_phase: 0.5e-3, max_step: 500.0, ..StepControl::default() };
        let fine = propagate_span(&s, &fiber, &fine_ctl, &PmdRealization::off()).unwrap();
        // Tolerance: the symmetric scheme is second order; the difference between
        // the two resolutions bounds the error of the coarse run.
        assert!(rel_err(&coarse, &fine) < 1e-4, "{}", rel_err(&coarse, &fine));
    }

    #[test]
    fn pmd_alone_preserves_power_and_is_seeded() {
        let s = test_signal(true, 1e-3);
        let fiber = FiberParams { attenuation_db_km: 0.0, beta2: 0.0, dispersion: 0.0, gamma: 0.0, ..FiberParams::standard_smf(80e3) };
        let a = propagate_span(&s, &fiber, &StepControl::default(), &PmdRealization::new(5)).unwrap();
        let b = propagate_span(&s, &fiber, &StepControl::default(), &PmdRealization::new(5)).unwrap();
        let c = propagate_span(&s, &fiber, &StepControl::default(), &PmdRealization::new(6)).unwrap();
        assert_relative_eq!(a.power(), s.power(), max_relative = 1e-10);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn linear_shortcut_matches_stepped_solver() {
        let s = test_signal(true, 1e-3);
        let fiber = FiberParams::standard_smf(80e3).with_gamma(0.0);
        let schedule = step_schedule(&FiberParams::standard_smf(80e3), &StepControl::default(), 5e-3, true).unwrap();
        let fast = propagate_span_with_schedule(&s, &fiber, &schedule, &PmdRealization::new(3)).unwrap();
        // A vanishing Kerr term forces the step-by-step path.
        let slow = propagate_span_with_schedule(&s, &fiber.clone().with_gamma(1e-300), &schedule, &PmdRealization::new(3)).unwrap();
        assert!(rel_err(&fast, &slow) < 1e-10, "{}", rel_err(&fast, &slow));
    }

    #[test]
    fn pmd_mean_dgd_statistics() {
        // Oracle: the DGD of a concatenation of random sections follows a
        // Maxwellian whose mean is the PMD coefficient times √L.
        let fiber = FiberParams::standard_smf(80e3);
        let schedule = vec![1000.0; 80];
        let mut mean = 0.0;
        let trials = 400;
        for seed in 0..trials {
            let el = PmdRealization::new(seed).elements(&fiber, &schedule).unwrap();
            // Differential delay from the phase derivative of the concatenated Jones matrix.
            let jones_at = |f: f64| {
                let mut m = crate::signal::JONES_IDENTITY;
                for e in &el {
                    let r = e.rotation;
                    let ph = C64::from_polar(1.0, -PI * f * e.dgd);
                    let d = [[ph, C64::new(0.0, 0.0)], [C64::new(0.0, 0.0), ph.conj()]];
                    m = mul(&d, &mul(&r, &m));
                }
                m
            };
            let df = 1e8;
            let (a, b) = (jones_at(-df / 2.0), jones_at(df / 2.0));
            // Eigenvalues of B A^† are exp(±i π DGD df).
            let m = mul(&b, &dagger(&a));
            let tr = m[0][0] + m[1][1];
            let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
            let disc = (tr * tr - det * 4.0).sqrt();
            let l1 = (tr + disc) / 2.0;
            let l2 = (tr - disc) / 2.0;
            let dgd = (l1.arg() - l2.arg()).abs() / (2.0 * PI * df);
            mean += dgd;
        }
        mean /= trials as f64;
        let want = fiber.pmd_coefficient * 80e3f64.sqrt();
        assert!((mean / want - 1.0).abs() < 0.08, "{mean} vs {want}");
    }

    fn mul(a: &Jones, b: &Jones) -> Jones {
        let mut m = [[C64::new(0.0, 0.0); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                m[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        m
    }

    fn dagger(a: &Jones) -> Jones {
        [[a[0][0].conj(), a[1][0].conj()], [a[0][1].conj(), a[1][1].conj()]]
    }

    #[test]
    fn amplifier_gains() {
        let s = test_signal(true, 1e-3);
        assert_eq!(amplify(&s, 0.0), s);
        assert_relative_eq!(amplify(&s, 3.0).power(), s.power() * 10f64.powf(0.3), max_relative = 1e-12);
        let fiber = FiberParams::standard_smf(80e3).with_gamma(0.0).without_pmd();
        let out = propagate_span(&s, &fiber, &StepControl::default(), &PmdRealization::off()).unwrap();
        assert_relative_eq!(fiber.span_loss_db(), 15.2, max_relative = 1e-12);
        assert_relative_eq!(amplify(&out, 15.2).power(), s.power(), max_relative = 1e-9);
    }

    #[test]
    fn schedule_properties() {
        let fiber = FiberParams::standard_smf(80e3);
        let steps = step_schedule(&fiber, &StepControl::default(), 10e-3, true).unwrap();
        assert_relative_eq!(steps.iter().sum::<f64>(), 80e3, max_relative = 1e-12);
        assert!(steps.windows(2).take(steps.len() - 2).all(|w| w[1] >= w[0] * (1.0 - 1e-12)));
        assert!(steps.iter().all(|s| *s <= 1000.0 + 1e-9));
        let zero = FiberParams { length: 0.0, ..fiber };
        assert!(step_schedule(&zero, &StepControl::default(), 1e-3, true).is_err());
    }
}
