//! Noise metrics on aligned symbol frames: total NLIN power, separation into
//! phase noise and circular noise via the monitor-signal search, the phase
//! noise autocorrelation, and averaging of reports over realizations.

use serde::{Deserialize, Serialize};

use crate::dsp::SymbolFrame;
use crate::error::{Error, Result};
use crate::signal::{fft_in_place, ifft_in_place, C64};

/// Below this tx amplitude a symbol cannot be rotated into the common frame.
const MIN_AMPLITUDE: f64 = 1e-12;

/// Phase angles beyond this leave the small-angle regime.
pub const SMALL_ANGLE_LIMIT: f64 = 0.3;

fn variance(v: &[C64]) -> f64 {
    let n = v.len() as f64;
    let mean: C64 = v.iter().sum::<C64>() / n;
    v.iter().map(|c| (c - mean).norm_sqr()).sum::<f64>() / n
}

fn real_variance(v: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    v.map(|a| (a - mean).powi(2)).sum::<f64>() / n
}

fn check_frame(frame: &SymbolFrame) -> Result<()> {
    if frame.is_empty() {
        return Err(Error::EmptySignal);
    }
    Ok(())
}

/// Total noise power: S_R times the variance of y − x, averaged over
/// polarizations and scaled to watts by the frame's symbol energy.
pub fn noise_power(frame: &SymbolFrame) -> Result<f64> {
    check_frame(frame)?;
    let v: f64 = frame
        .tx
        .iter()
        .zip(&frame.rx)
        .map(|(t, r)| variance(&r.iter().zip(t).map(|(a, b)| a - b).collect::<Vec<_>>()))
        .sum::<f64>()
        / frame.polarizations() as f64;
    Ok(frame.symbol_rate * v * frame.symbol_energy)
}

/// x*·y/|x|² per symbol for every polarization.
pub fn rotate_scale(frame: &SymbolFrame) -> Result<Vec<Vec<C64>>> {
    check_frame(frame)?;
    frame
        .tx
        .iter()
        .zip(&frame.rx)
        .map(|(t, r)| {
            t.iter()
                .zip(r)
                .enumerate()
                .map(|(j, (x, y))| {
                    let a = x.norm_sqr();
                    if a.sqrt() < MIN_AMPLITUDE {
                        Err(Error::invalid(format!("tx symbol {j} has zero amplitude")))
                    } else {
                        Ok(x.conj() * y / a)
                    }
                })
                .collect()
        })
        .collect()
}

/// Circular moving sum of length `window + 1`, centered on each index
/// (for odd `window` the extra sample sits after the center).
fn centered_sums(v: &[C64], window: usize) -> Vec<C64> {
    let n = v.len();
    let before = window / 2;
    let len = window + 1;
    let mut out = Vec::with_capacity(n);
    let mut acc: C64 = (0..len).map(|i| v[(i + n - before % n) % n]).sum();
    for j in 0..n {
        out.push(acc);
        let leaving = v[(j + n - before % n) % n];
        let entering = v[(j + len + n - before % n) % n];
        acc += entering - leaving;
    }
    out
}

/// Unit phasor of the windowed average, i.e. the estimate of e^{−iΔθ_j}.
fn phase_estimate(rs: &[C64], window: usize) -> Vec<C64> {
    centered_sums(rs, window)
        .into_iter()
        .map(|c| if c.norm() > 0.0 { c / c.norm() } else { C64::new(1.0, 0.0) })
        .collect()
}

/// Monitor value for one polarization: residual noise in the rotated-scaled
/// frame (real part radial along x), quadrature over in-phase variance − 1.
fn monitor_pol(rs: &[C64], window: usize) -> Result<f64> {
    let w = phase_estimate(rs, window);
    let resid: Vec<C64> = rs.iter().zip(&w).map(|(r, e)| r - e).collect();
    let si = real_variance(resid.iter().map(|c| c.re));
    let sq = real_variance(resid.iter().map(|c| c.im));
    if !(si > 1e-30) {
        return Err(Error::ZeroNoise);
    }
    Ok(sq / si - 1.0)
}

fn check_window(frame: &SymbolFrame, window: usize) -> Result<()> {
    if window < 2 || window >= frame.len() {
        return Err(Error::invalid(format!("window {window} outside [2, {})", frame.len())));
    }
    Ok(())
}

/// M(N) per polarization.
pub fn monitor_signal(frame: &SymbolFrame, window: usize) -> Result<Vec<f64>> {
    check_window(frame, window)?;
    rotate_scale(frame)?.iter().map(|rs| monitor_pol(rs, window)).collect()
}

/// Δθ_j per polarization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseTrace {
    pub delta_theta: Vec<Vec<f64>>,
}

impl PhaseTrace {
    pub fn max_abs(&self) -> f64 {
        self.delta_theta.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// True when some angle leaves the small-angle regime.
    pub fn large_angles(&self) -> bool {
        self.max_abs() > SMALL_ANGLE_LIMIT
    }
}

/// Outcome of the phase/circular separation.
#[derive(Clone, Debug, PartialEq)]
pub struct Separation {
    pub trace: PhaseTrace,
    /// n_j^circular per polarization (same units as the frame).
    pub circular: Vec<Vec<C64>>,
    pub n_opt: usize,
    /// The search reached `n_max` before every monitor turned non-negative.
    pub exhausted: bool,
    /// (N, M(N) per polarization) for every evaluated window.
    pub monitor: Vec<(usize, Vec<f64>)>,
}

/// Searches N = 2, 3, … until every polarization has M(N) ≥ −epsilon or N
/// reaches `n_max`, picks N_opt minimizing |Σ_p M_p(N)|, and splits the
/// noise accordingly. `n_max` defaults to an eighth of the frame length.
pub fn separate_phase_circular(frame: &SymbolFrame, epsilon: f64, n_max: Option<usize>) -> Result<Separation> {
    check_frame(frame)?;
    let n_max = n_max.unwrap_or(frame.len() / 8);
    if n_max < 2 || n_max >= frame.len() {
        return Err(Error::FrameTooShort(format!("{} symbols cannot host windows up to {n_max}", frame.len())));
    }
    let rs = rotate_scale(frame)?;
    let mut monitor = Vec::new();
    let mut exhausted = true;
    for window in 2..=n_max {
        let m: Vec<f64> = rs.iter().map(|p| monitor_pol(p, window)).collect::<Result<_>>()?;
        let done = m.iter().all(|v| *v >= -epsilon);
        monitor.push((window, m));
        if done {
            exhausted = false;
            break;
        }
    }
    let n_opt = monitor
        .iter()
        .min_by(|a, b| a.1.iter().sum::<f64>().abs().total_cmp(&b.1.iter().sum::<f64>().abs()))
        .map(|e| e.0)
        .expect("at least one window");
    let mut thetas = Vec::new();
    let mut circular = Vec::new();
    for ((r, t), y) in rs.iter().zip(&frame.tx).zip(&frame.rx) {
        let w = phase_estimate(r, n_opt);
        thetas.push(w.iter().map(|e| -e.arg()).collect());
        circular.push(y.iter().zip(t).zip(&w).map(|((y, x), e)| y - x * e).collect());
    }
    Ok(Separation { trace: PhaseTrace { delta_theta: thetas }, circular, n_opt, exhausted, monitor })
}

/// S_R · var[Δθ] · E|x|², averaged over polarizations, in watts.
pub fn phase_noise_power(trace: &PhaseTrace, frame: &SymbolFrame) -> Result<f64> {
    check_frame(frame)?;
    if trace.delta_theta.len() != frame.polarizations() {
        return Err(Error::invalid("phase trace and frame differ in polarization count"));
    }
    let mut acc = 0.0;
    for (th, x) in trace.delta_theta.iter().zip(&frame.tx) {
        if th.len() != x.len() {
            return Err(Error::LengthMismatch { x: th.len(), y: x.len() });
        }
        let ex = x.iter().map(|c| c.norm_sqr()).sum::<f64>() / x.len() as f64;
        acc += real_variance(th.iter().copied()) * ex;
    }
    Ok(frame.symbol_rate * acc / frame.polarizations() as f64 * frame.symbol_energy)
}

/// S_R · var[n^circular], averaged over polarizations, in watts.
pub fn circular_noise_power(circular: &[Vec<C64>], frame: &SymbolFrame) -> Result<f64> {
    if circular.is_empty() || circular[0].is_empty() {
        return Err(Error::EmptySignal);
    }
    let v = circular.iter().map(|c| variance(c)).sum::<f64>() / circular.len() as f64;
    Ok(frame.symbol_rate * v * frame.symbol_energy)
}

/// Circular autocorrelation of Δθ averaged over polarizations, normalized to
/// one at lag zero. Index `k` of the result is lag `k − max_lag`.
pub fn phase_acf(trace: &PhaseTrace, max_lag: usize) -> Result<Vec<f64>> {
    let n = trace.delta_theta.first().map_or(0, |v| v.len());
    if n == 0 {
        return Err(Error::EmptySignal);
    }
    if max_lag >= n.div_ceil(4) {
        return Err(Error::invalid(format!("lag {max_lag} must stay below a quarter of {n} symbols")));
    }
    let mut acc = vec![0.0; max_lag + 1];
    for th in &trace.delta_theta {
        let mut b: Vec<C64> = th.iter().map(|v| C64::new(*v, 0.0)).collect();
        fft_in_place(&mut b);
        for v in b.iter_mut() {
            *v = C64::new(v.norm_sqr(), 0.0);
        }
        ifft_in_place(&mut b);
        for (a, v) in acc.iter_mut().zip(&b) {
            *a += v.re;
        }
    }
    let zero = acc[0];
    if !(zero > 0.0) {
        return Err(Error::ZeroNoise);
    }
    let one_sided: Vec<f64> = acc.iter().map(|v| v / zero).collect();
    let mut out: Vec<f64> = one_sided[1..].iter().rev().copied().collect();
    out.extend(one_sided);
    out[max_lag] = 1.0;
    Ok(out)
}

/// Noise figures for one frame or an average over several.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub scenario: String,
    pub case: String,
    pub span: usize,
    /// Link distance in metres.
    pub distance: f64,
    pub p_nli: f64,
    pub p_phase: f64,
    pub p_circular: f64,
    pub cnr_percent: f64,
    pub n_opt: usize,
    pub exhausted: bool,
    pub large_angles: bool,
    pub realization: Option<u64>,
    pub realizations: usize,
    /// Mean absolute deviation of `p_nli` across averaged realizations.
    pub p_nli_spread: f64,
}

fn cnr(p_circular: f64, p_nli: f64) -> f64 {
    if p_nli > 0.0 {
        (100.0 * p_circular / p_nli).clamp(0.0, 100.0)
    } else {
        0.0
    }
}

impl NoiseReport {
    /// Full metric evaluation of one aligned payload frame.
    #[allow(clippy::too_many_arguments)]
    pub fn evaluate(
        frame: &SymbolFrame,
        scenario: &str,
        case: &str,
        span: usize,
        distance: f64,
        realization: Option<u64>,
        epsilon: f64,
        n_max: Option<usize>,
    ) -> Result<NoiseReport> {
        Self::evaluate_with_separation(frame, scenario, case, span, distance, realization, epsilon, n_max).map(|(r, _)| r)
    }

    /// As [`NoiseReport::evaluate`], also returning the separation so that
    /// the phase trace can be analysed further.
    #[allow(clippy::too_many_arguments)]
    pub fn evaluate_with_separation(
        frame: &SymbolFrame,
        scenario: &str,
        case: &str,
        span: usize,
        distance: f64,
        realization: Option<u64>,
        epsilon: f64,
        n_max: Option<usize>,
    ) -> Result<(NoiseReport, Separation)> {
        let p_nli = noise_power(frame)?;
        let sep = separate_phase_circular(frame, epsilon, n_max)?;
        let p_phase = phase_noise_power(&sep.trace, frame)?;
        let p_circular = circular_noise_power(&sep.circular, frame)?;
        let report = NoiseReport {
            scenario: scenario.to_string(),
            case: case.to_string(),
            span,
            distance,
            p_nli,
            p_phase,
            p_circular,
            cnr_percent: cnr(p_circular, p_nli),
            n_opt: sep.n_opt,
            exhausted: sep.exhausted,
            large_angles: sep.trace.large_angles(),
            realization,
            realizations: 1,
            p_nli_spread: 0.0,
        };
        Ok((report, sep))
    }
}

/// Arithmetic mean of the powers over reports of the same scenario, case and
/// distance; CNR is recomputed from the averaged powers.
pub fn average_reports(reports: &[NoiseReport]) -> Result<NoiseReport> {
    let first = reports.first().ok_or_else(|| Error::MixedReports("no reports".into()))?;
    for r in reports {
        if r.scenario != first.scenario || r.case != first.case {
            return Err(Error::MixedReports(format!("{}/{} vs {}/{}", r.scenario, r.case, first.scenario, first.case)));
        }
        if (r.distance - first.distance).abs() > 1e-6 * first.distance.abs().max(1.0) {
            return Err(Error::MixedReports(format!("distance {} vs {}", r.distance, first.distance)));
        }
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&NoiseReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    let p_nli = mean(|r| r.p_nli);
    let p_phase = mean(|r| r.p_phase);
    let p_circular = mean(|r| r.p_circular);
    let spread = reports.iter().map(|r| (r.p_nli - p_nli).abs()).sum::<f64>() / n;
    Ok(NoiseReport {
        scenario: first.scenario.clone(),
        case: first.case.clone(),
        span: first.span,
        distance: first.distance,
        p_nli,
        p_phase,
        p_circular,
        cnr_percent: cnr(p_circular, p_nli),
        n_opt: (reports.iter().map(|r| r.n_opt as f64).sum::<f64>() / n).round() as usize,
        exhausted: reports.iter().any(|r| r.exhausted),
        large_angles: reports.iter().any(|r| r.large_angles),
        realization: if reports.len() == 1 { first.realization } else { None },
        realizations: reports.iter().map(|r| r.realizations).sum(),
        p_nli_spread: if reports.len() == 1 { first.p_nli_spread } else { spread },
    })
}
