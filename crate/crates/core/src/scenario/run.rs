//! Simulation and model pipelines over spans and realizations.

use rayon::prelude::*;
use serde::Serialize;

use super::config::{Case, Scenario, ScenarioConfig};
use crate::dsp::FdeStore;
use crate::error::{Error, Result};
use crate::fiber::{amplify, propagate_span_with_schedule};
use crate::link::LinkConfig;
use crate::metrics::{average_reports, phase_acf, NoiseReport};
use crate::models::{egn_xmci, gn_xmci, replaced_int_adaptation};
use crate::roadm::replace_interferers;
use crate::signal::Signal;
use crate::units;
use crate::waveform::{channel_seed, generate_channel, multiplex, ChannelPlan, ChannelSpec, ModulationFormat};

/// Attaches the span number (1-based) to integration failures.
fn in_span(e: Error, span: usize) -> Error {
    match e {
        Error::Integration { z, reason, .. } => Error::Integration { span, z, reason },
        other => other,
    }
}

fn forward_span(field: &Signal, link: &LinkConfig, schedule: &[f64], seed: u64, span: usize) -> Result<Signal> {
    propagate_span_with_schedule(field, &link.fiber, schedule, &link.pmd(seed, span - 1)).map_err(|e| in_span(e, span))
}

/// Trains the equalizer of every span count for realization `seed` on a
/// single-channel run with the Kerr term switched off. The run reuses the
/// realization's CUT, step schedule and PMD sections, so the coefficients
/// describe exactly the linear part of the WDM link.
pub fn calibrate_fde(scenario: &Scenario, seed: u64, store: &FdeStore) -> Result<()> {
    let plan = scenario.plan_for(seed);
    let link = scenario.link_for(seed);
    let cut_plan = plan.cut_only();
    let schedule = link.schedule(plan.total_power(), true)?;
    let linear = LinkConfig { fiber: link.fiber.clone().with_gamma(0.0), ..link.clone() };
    // Every section is diagonal in frequency, so the CUT alone at a lower
    // rate sees the same in-band response as in the WDM field.
    let sps = cut_plan.simulation_oversampling();
    let mut field =
        generate_channel(plan.cut(), &cut_plan, &scenario.layout, sps, link.fiber.reference_wavelength)?.signal;
    for span in 1..=link.span_count {
        field = forward_span(&field, &linear, &schedule, seed, span)?;
        if link.roadm.active {
            field = replace_interferers(&field, &cut_plan, &[], span - 1, &link.roadm)?;
        }
        field = amplify(&field, link.gain_db());
        let front = scenario.receiver.front_end(&field, &linear, span)?;
        let mut c = scenario.receiver.train(&front, &scenario.layout)?;
        c.seed = seed;
        c.span_count = span;
        store.insert(c)?;
    }
    Ok(())
}

/// Calibrates every realization that is not yet in `store`.
pub fn calibrate_all(scenario: &Scenario, store: &FdeStore) -> Result<()> {
    scenario
        .seeds
        .par_iter()
        .filter(|&&s| (1..=scenario.link.span_count).any(|n| !store.contains(s, n)))
        .try_for_each(|&s| calibrate_fde(scenario, s, store))
}

/// Fresh interferer waveforms added by the ROADM after `span`.
fn fresh_interferers(scenario: &Scenario, plan: &ChannelPlan, link: &LinkConfig, span: usize, sps: usize) -> Result<Vec<(ChannelSpec, Signal)>> {
    plan.interferers()
        .map(|spec| {
            let data_seed = channel_seed(link.roadm.replacement_seed(span, spec.index), i32::MAX);
            let fresh = ChannelSpec { seed: data_seed, ..spec.clone() };
            let w = generate_channel(&fresh, plan, &scenario.layout, sps, link.fiber.reference_wavelength)?;
            Ok((spec.clone(), w.signal))
        })
        .collect()
}

/// Output of one realization: a report and a phase ACF per span.
#[derive(Clone, Debug)]
pub struct RealizationResult {
    pub seed: u64,
    pub reports: Vec<NoiseReport>,
    pub acf: Vec<Vec<f64>>,
}

/// Propagates one realization span by span and measures a copy of the field
/// after every span.
pub fn run_realization(scenario: &Scenario, seed: u64, store: &FdeStore) -> Result<RealizationResult> {
    scenario.validate()?;
    let plan = scenario.plan_for(seed);
    let link = scenario.link_for(seed);
    let coeffs: Vec<_> = (1..=link.span_count).map(|n| store.get(seed, n)).collect::<Result<_>>()?;
    let sps = scenario.oversampling();
    let wavelength = link.fiber.reference_wavelength;
    let waves = plan
        .channels
        .iter()
        .map(|c| generate_channel(c, &plan, &scenario.layout, sps, wavelength))
        .collect::<Result<Vec<_>>>()?;
    let tx = waves.iter().find(|w| w.spec.is_cut()).expect("plan has a CUT").symbols.clone();
    let mut field = multiplex(&waves.into_iter().map(|w| (w.spec, w.signal)).collect::<Vec<_>>())?;
    let schedule = link.schedule(plan.total_power(), true)?;
    let mut reports = Vec::with_capacity(link.span_count);
    let mut acf = Vec::with_capacity(link.span_count);
    for span in 1..=link.span_count {
        field = forward_span(&field, &link, &schedule, seed, span)?;
        if link.roadm.active {
            let fresh = fresh_interferers(scenario, &plan, &link, span, sps)?;
            field = replace_interferers(&field, &plan, &fresh, span - 1, &link.roadm)?;
        }
        field = amplify(&field, link.gain_db());
        let frame = scenario.receiver.receive(
            &field,
            &link,
            span,
            &scenario.layout,
            &tx,
            &coeffs[span - 1],
            plan.cut().launch_power,
        )?;
        let (report, sep) = NoiseReport::evaluate_with_separation(
            &frame,
            &scenario.id,
            scenario.case.label(),
            span,
            span as f64 * link.span_length,
            Some(seed),
            scenario.epsilon,
            scenario.n_max,
        )?;
        let lag = scenario.acf_max_lag.min(frame.len() / 2);
        acf.push(phase_acf(&sep.trace, lag)?);
        reports.push(report);
    }
    Ok(RealizationResult { seed, reports, acf })
}

/// Averaged simulation output of a scenario.
#[derive(Clone, Debug)]
pub struct SimulationResult {
    pub scenario: String,
    pub case: Case,
    /// One averaged report per span.
    pub reports: Vec<NoiseReport>,
    pub realizations: Vec<RealizationResult>,
    /// Phase ACF per span, averaged over realizations; index k is lag k − L.
    pub acf: Vec<Vec<f64>>,
}

/// Runs every realization (in parallel) and averages per span. Needs
/// calibrated coefficients for every (seed, span count) in `store`.
pub fn run_scenario(scenario: &Scenario, store: &FdeStore) -> Result<SimulationResult> {
    let mut runs: Vec<RealizationResult> =
        scenario.seeds.par_iter().map(|&s| run_realization(scenario, s, store)).collect::<Result<_>>()?;
    runs.sort_by_key(|r| r.seed);
    let spans = scenario.link.span_count;
    let mut reports = Vec::with_capacity(spans);
    let mut acf = Vec::with_capacity(spans);
    for i in 0..spans {
        let at: Vec<NoiseReport> = runs.iter().map(|r| r.reports[i].clone()).collect();
        reports.push(average_reports(&at)?);
        let len = runs.iter().map(|r| r.acf[i].len()).min().unwrap_or(0);
        acf.push((0..len).map(|k| runs.iter().map(|r| r.acf[i][k]).sum::<f64>() / runs.len() as f64).collect());
    }
    Ok(SimulationResult { scenario: scenario.id.clone(), case: scenario.case, reports, realizations: runs, acf })
}

/// Calibrates into an in-memory store and runs the scenario.
pub fn simulate(scenario: &Scenario) -> Result<SimulationResult> {
    let store = FdeStore::in_memory();
    calibrate_all(scenario, &store)?;
    run_scenario(scenario, &store)
}

/// Model predictions of the XMCI power at one span count. `None` marks a
/// model that cannot describe the scenario.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ModelRow {
    pub scenario: String,
    pub case: String,
    pub span: usize,
    pub distance: f64,
    pub gn: f64,
    pub egn: Option<f64>,
    /// EGN single-span value scaled with the span count; only for cases whose
    /// interferers are replaced at every node.
    pub egn_adapted: Option<f64>,
}

/// Model results with the reasons for any skipped model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelResult {
    pub rows: Vec<ModelRow>,
    pub notes: Vec<String>,
}

fn unsupported<T>(r: Result<T>, notes: &mut Vec<String>, what: &str) -> Result<Option<T>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::Unsupported(m)) => {
            if !notes.iter().any(|n| n.starts_with(what)) {
                notes.push(format!("{what}: {m}"));
            }
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

/// GN and EGN XMCI predictions for every span count of the scenario.
pub fn run_models(scenario: &Scenario) -> Result<ModelResult> {
    scenario.validate()?;
    let plan = &scenario.plan;
    let q = &scenario.quadrature;
    let pts = scenario.band_points;
    let mut notes = Vec::new();
    let single = scenario.link.clone().with_span_count(1);
    let adapted_base = if scenario.replace_int_each_span {
        unsupported(egn_xmci(plan, &single, pts, q, &scenario.egn_terms), &mut notes, "EGN")?
    } else {
        None
    };
    let per_span: Vec<(f64, Result<f64>)> = (1..=scenario.link.span_count)
        .into_par_iter()
        .map(|n| {
            let link = scenario.link.clone().with_span_count(n);
            Ok((gn_xmci(plan, &link, pts, q)?, egn_xmci(plan, &link, pts, q, &scenario.egn_terms)))
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(per_span.len());
    for (i, (gn, egn)) in per_span.into_iter().enumerate() {
        let span = i + 1;
        rows.push(ModelRow {
            scenario: scenario.id.clone(),
            case: scenario.case.label().to_string(),
            span,
            distance: span as f64 * scenario.link.span_length,
            gn,
            egn: unsupported(egn, &mut notes, "EGN")?,
            egn_adapted: adapted_base.map(|v| replaced_int_adaptation(v, span)),
        });
    }
    Ok(ModelResult { rows, notes })
}

/// One line of the comparison table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResultRow {
    pub scenario: String,
    pub case: String,
    pub span: usize,
    pub distance_km: f64,
    pub p_nli_w: f64,
    /// P_NLI relative to the CUT launch power, dB.
    pub p_nli_db: f64,
    pub p_phase_w: f64,
    pub p_circular_w: f64,
    pub cnr_pct: f64,
    pub n_opt: usize,
    pub gn_w: Option<f64>,
    pub egn_w: Option<f64>,
    pub egn_adapted_w: Option<f64>,
}

/// Joins simulated reports and model rows on the span index.
pub fn result_rows(sim: &SimulationResult, models: Option<&ModelResult>, cut_power: f64) -> Vec<ResultRow> {
    sim.reports
        .iter()
        .map(|r| {
            let m = models.and_then(|m| m.rows.iter().find(|row| row.span == r.span));
            ResultRow {
                scenario: r.scenario.clone(),
                case: r.case.clone(),
                span: r.span,
                distance_km: r.distance / 1e3,
                p_nli_w: r.p_nli,
                p_nli_db: units::linear_to_db(r.p_nli / cut_power),
                p_phase_w: r.p_phase,
                p_circular_w: r.p_circular,
                cnr_pct: r.cnr_percent,
                n_opt: r.n_opt,
                gn_w: m.map(|m| m.gn),
                egn_w: m.and_then(|m| m.egn),
                egn_adapted_w: m.and_then(|m| m.egn_adapted),
            }
        })
        .collect()
}

/// Rows of a model-only run.
pub fn model_rows(models: &ModelResult) -> Vec<ResultRow> {
    models
        .rows
        .iter()
        .map(|m| ResultRow {
            scenario: m.scenario.clone(),
            case: m.case.clone(),
            span: m.span,
            distance_km: m.distance / 1e3,
            p_nli_w: f64::NAN,
            p_nli_db: f64::NAN,
            p_phase_w: f64::NAN,
            p_circular_w: f64::NAN,
            cnr_pct: f64::NAN,
            n_opt: 0,
            gn_w: Some(m.gn),
            egn_w: m.egn,
            egn_adapted_w: m.egn_adapted,
        })
        .collect()
}

/// Parameter varied by a sweep, with its values.
#[derive(Clone, Debug, PartialEq)]
pub enum Sweep {
    /// Span lengths, km.
    SpanLength(Vec<f64>),
    /// Channel spacings, GHz.
    ChannelSpacing(Vec<f64>),
    /// Interferer formats.
    Modulation(Vec<ModulationFormat>),
}

impl Sweep {
    /// One configuration per value. All share the base seeds, so realization
    /// r of every point sees the same random draws.
    pub fn configs(&self, base: &ScenarioConfig) -> Result<Vec<(String, ScenarioConfig)>> {
        let mut out = Vec::new();
        match self {
            Sweep::SpanLength(v) => {
                for &km in v {
                    if !(km > 0.0) {
                        return Err(Error::Config(format!("span length {km} km must be positive")));
                    }
                    let mut c = base.clone();
                    c.fiber.span_length_km = km;
                    out.push((format!("{km}km"), c));
                }
            }
            Sweep::ChannelSpacing(v) => {
                let min = (1.0 + base.transmitter.roll_off) * base.transmitter.symbol_rate_gbd;
                for &ghz in v {
                    if !(ghz >= min * (1.0 - 1e-12)) {
                        return Err(Error::Config(format!("spacing {ghz} GHz is below the channel width {min} GHz")));
                    }
                    let mut c = base.clone();
                    c.transmitter.channel_spacing_ghz = ghz;
                    out.push((format!("{ghz}GHz"), c));
                }
            }
            Sweep::Modulation(v) => {
                for &f in v {
                    let mut c = base.clone();
                    c.transmitter.int_format = f;
                    out.push((f.name().to_string(), c));
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Config("a sweep needs at least one value".into()));
        }
        Ok(out)
    }

    /// Builds the scenarios of the sweep, tagging each id with its value.
    pub fn scenarios(&self, base: &ScenarioConfig) -> Result<Vec<Scenario>> {
        self.configs(base)?
            .into_iter()
            .map(|(label, cfg)| {
                let mut s = cfg.build()?;
                s.id = format!("{}@{}", s.id, label);
                Ok(s)
            })
            .collect()
    }
}

/// Simulates every point of a sweep.
pub fn sweep(base: &ScenarioConfig, parameter: &Sweep) -> Result<Vec<SimulationResult>> {
    parameter.scenarios(base)?.iter().map(simulate).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::config::Profile;

    /// A few hundred symbols on two short spans; enough to exercise the whole
    /// chain in well under a second per span.
    fn tiny(case: Case, channels: usize) -> ScenarioConfig {
        let mut c = ScenarioConfig::profile(Profile::Desk);
        c.case = case;
        c.transmitter.payload_symbols = 1024;
        c.transmitter.channels = channels;
        c.fiber.span_count = 2;
        c.fiber.span_length_km = 20.0;
        c.simulation.realizations = 1;
        c.simulation.max_nonlinear_phase_rad = 5e-3;
        c.metrics.acf_max_lag = 16;
        c.models.points_per_symbol_rate = 8;
        c.models.band_points = 3;
        c
    }

    #[test]
    fn missing_calibration_is_reported() {
        let s = tiny(Case::A, 1).build().unwrap();
        let err = run_scenario(&s, &FdeStore::in_memory()).unwrap_err();
        assert!(matches!(err, Error::MissingCoefficients { spans: 1, .. }));
    }

    #[test]
    fn calibration_covers_every_span_count() {
        let s = tiny(Case::C, 1).build().unwrap();
        let store = FdeStore::in_memory();
        calibrate_all(&s, &store).unwrap();
        for n in 1..=2 {
            let c = store.get(s.seeds[0], n).unwrap();
            assert_eq!((c.seed, c.span_count), (s.seeds[0], n));
        }
    }

    #[test]
    fn runs_are_reproducible_and_shaped() {
        let s = tiny(Case::A, 3).build().unwrap();
        let a = simulate(&s).unwrap();
        let b = simulate(&s).unwrap();
        assert_eq!(a.reports, b.reports);
        assert_eq!(a.reports.len(), 2);
        assert_eq!(a.acf[0].len(), 33);
        assert!(a.reports.iter().all(|r| r.p_nli > 0.0 && r.realizations == 1));
        assert!(a.reports[1].distance > a.reports[0].distance);
    }

    #[test]
    fn models_flag_unsupported_egn() {
        let b = run_models(&tiny(Case::B, 3).build().unwrap()).unwrap();
        assert!(b.rows.iter().all(|r| r.egn.is_none() && r.gn > 0.0));
        assert!(b.notes.iter().any(|n| n.starts_with("EGN")));
        let a = run_models(&tiny(Case::A, 3).build().unwrap()).unwrap();
        // GN ignores the pre-dispersion entirely.
        for (x, y) in a.rows.iter().zip(&b.rows) {
            assert_eq!(x.gn, y.gn);
        }
        let c = run_models(&tiny(Case::C, 3).build().unwrap()).unwrap();
        let base = c.rows[0].egn_adapted.unwrap();
        assert!((c.rows[1].egn_adapted.unwrap() - 2.0 * base).abs() <= 1e-12 * base);
        assert!(a.rows.iter().all(|r| r.egn_adapted.is_none()));
    }

    #[test]
    fn sweep_validates_and_pairs_seeds() {
        let base = tiny(Case::A, 3);
        assert!(Sweep::ChannelSpacing(vec![30.0]).configs(&base).is_err());
        assert!(Sweep::SpanLength(vec![]).configs(&base).is_err());
        let s = Sweep::ChannelSpacing(vec![37.5, 50.0]).scenarios(&base).unwrap();
        assert_eq!(s[0].seeds, s[1].seeds);
        assert_ne!(s[0].id, s[1].id);
        assert_eq!(s[1].receiver.bandwidth, 50e9);
    }
}
