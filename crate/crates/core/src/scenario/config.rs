//! Scenario configuration: a TOML tree laid over one of the named profiles.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dsp::Receiver;
use crate::error::{Error, Result};
use crate::fiber::{FiberParams, StepControl, MANAKOV_FACTOR};
use crate::link::LinkConfig;
use crate::models::{EgnTerms, Quadrature};
use crate::roadm::RoadmConfig;
use crate::units::{self, SPEED_OF_LIGHT};
use crate::waveform::{channel_seed, ChannelPlan, FrameLayout, ModulationFormat};

/// Transmission cases. A: point to point. B: interferers arrive already
/// dispersed. C: interferers are replaced after every span. D: both.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Case {
    A,
    B,
    C,
    D,
}

impl Case {
    pub const ALL: [Case; 4] = [Case::A, Case::B, Case::C, Case::D];

    pub fn pre_dispersed(self) -> bool {
        matches!(self, Case::B | Case::D)
    }

    pub fn replaces_interferers(self) -> bool {
        matches!(self, Case::C | Case::D)
    }

    pub fn label(self) -> &'static str {
        match self {
            Case::A => "A",
            Case::B => "B",
            Case::C => "C",
            Case::D => "D",
        }
    }
}

impl FromStr for Case {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(Case::A),
            "B" => Ok(Case::B),
            "C" => Ok(Case::C),
            "D" => Ok(Case::D),
            other => Err(Error::Config(format!("unknown case {other:?}; expected A, B, C or D"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Reduced scale that runs in minutes.
    Desk,
    /// The full published setup.
    Thesis,
}

impl Profile {
    pub fn name(self) -> &'static str {
        match self {
            Profile::Desk => "desk",
            Profile::Thesis => "thesis",
        }
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "desk" => Ok(Profile::Desk),
            "thesis" => Ok(Profile::Thesis),
            other => Err(Error::Config(format!("unknown profile {other:?}; expected desk or thesis"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmitterSection {
    pub symbol_rate_gbd: f64,
    pub roll_off: f64,
    pub payload_symbols: usize,
    pub header_blocks: usize,
    pub block_length: usize,
    pub cazac_root: u64,
    pub cut_format: ModulationFormat,
    pub int_format: ModulationFormat,
    /// Total channel count including the CUT.
    pub channels: usize,
    pub channel_spacing_ghz: f64,
    pub launch_power_dbm: f64,
    pub center_frequency_thz: f64,
    /// Accumulated dispersion imposed on every interferer in the pre-dispersed
    /// cases, ps/nm.
    pub pre_dispersion_ps_nm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FiberSection {
    pub span_length_km: f64,
    pub span_count: usize,
    pub attenuation_db_km: f64,
    pub dispersion_ps_nm_km: f64,
    pub pmd_ps_sqrt_km: f64,
    pub n2_m2_w: f64,
    pub core_area_um2: f64,
    pub manakov_factor: f64,
    /// Amplifier gain after each span; omitted means the span loss.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub amplifier_gain_db: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadmSection {
    /// WSS port width; omitted means the channel spacing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub passband_width_ghz: Option<f64>,
    pub recondition: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReceiverSection {
    /// Extraction filter width; omitted means the channel spacing.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bandwidth_ghz: Option<f64>,
    pub samples_per_symbol: usize,
    pub fde_taps: usize,
    pub backpropagation: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationSection {
    pub seed: u64,
    pub realizations: usize,
    pub max_nonlinear_phase_rad: f64,
    pub max_step_m: f64,
    pub min_steps_per_span: usize,
    /// Samples per symbol of the WDM field; omitted picks the smallest power
    /// of two that keeps mixing products off the CUT.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oversampling: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    pub epsilon: f64,
    /// Largest averaging window; omitted means an eighth of the frame.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    pub acf_max_lag: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelsSection {
    pub points_per_symbol_rate: usize,
    /// Frequencies across the CUT band at which the PSD is evaluated.
    pub band_points: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refinement_tolerance: Option<f64>,
    /// Replacement term catalogue for the EGN corrections.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub egn_terms: Option<PathBuf>,
}

/// Every tunable of a run. Files only need to name the keys they change;
/// the rest comes from `profile`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub profile: Profile,
    pub case: Case,
    pub transmitter: TransmitterSection,
    pub fiber: FiberSection,
    pub roadm: RoadmSection,
    pub receiver: ReceiverSection,
    pub simulation: SimulationSection,
    pub metrics: MetricsSection,
    pub models: ModelsSection,
}

impl ScenarioConfig {
    pub fn profile(profile: Profile) -> Self {
        let thesis = profile == Profile::Thesis;
        ScenarioConfig {
            profile,
            case: Case::A,
            transmitter: TransmitterSection {
                symbol_rate_gbd: 28.0,
                roll_off: 0.2,
                payload_symbols: if thesis { 1 << 16 } else { 1 << 13 },
                header_blocks: 8,
                block_length: 64,
                cazac_root: 1,
                cut_format: ModulationFormat::Qam16,
                int_format: ModulationFormat::Qam16,
                channels: if thesis { 9 } else { 5 },
                channel_spacing_ghz: 37.5,
                launch_power_dbm: 3.0,
                center_frequency_thz: 193.4,
                pre_dispersion_ps_nm: 13000.0,
            },
            fiber: FiberSection {
                span_length_km: 80.0,
                span_count: 10,
                attenuation_db_km: 0.19,
                dispersion_ps_nm_km: 16.8,
                pmd_ps_sqrt_km: 0.1,
                n2_m2_w: 2.25e-20,
                core_area_um2: 84.95,
                manakov_factor: MANAKOV_FACTOR,
                amplifier_gain_db: None,
            },
            roadm: RoadmSection { passband_width_ghz: None, recondition: true },
            receiver: ReceiverSection { bandwidth_ghz: None, samples_per_symbol: 2, fde_taps: 128, backpropagation: true },
            simulation: SimulationSection {
                seed: 1,
                realizations: if thesis { 5 } else { 2 },
                max_nonlinear_phase_rad: 1e-3,
                max_step_m: 1000.0,
                min_steps_per_span: 4,
                oversampling: None,
            },
            metrics: MetricsSection { epsilon: 0.0, n_max: None, acf_max_lag: 200 },
            models: ModelsSection { points_per_symbol_rate: 64, band_points: 9, refinement_tolerance: None, egn_terms: None },
        }
    }

    /// Parses a configuration file. A top-level `profile` key selects the base
    /// values (desk when absent); every other key overrides one value.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_profile(text, None)
    }

    /// As [`ScenarioConfig::parse`], with `profile` (when given) taking
    /// precedence over the file's own `profile` key.
    pub fn parse_with_profile(text: &str, profile: Option<Profile>) -> Result<Self> {
        let mut user: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let profile = match (profile, user.get("profile")) {
            (Some(p), _) => p,
            (None, None) => Profile::Desk,
            (None, Some(toml::Value::String(s))) => s.parse()?,
            (None, Some(other)) => return Err(Error::Config(format!("profile must be a string, got {other}"))),
        };
        user.insert("profile".into(), toml::Value::String(profile.name().into()));
        let mut base = toml::Table::try_from(ScenarioConfig::profile(profile)).map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut base, user);
        let cfg: ScenarioConfig = toml::Value::Table(base).try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::load_with_profile(path, None)
    }

    pub fn load_with_profile(path: &Path, profile: Option<Profile>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_with_profile(&text, profile)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let t = &self.transmitter;
        if t.channels == 0 {
            return bad("at least one channel is needed".into());
        }
        if !(t.symbol_rate_gbd > 0.0) || !(t.channel_spacing_ghz > 0.0) || !(t.center_frequency_thz > 0.0) {
            return bad("symbol rate, channel spacing and center frequency must be positive".into());
        }
        if self.case.pre_dispersed() && t.pre_dispersion_ps_nm == 0.0 {
            return bad(format!("case {} needs a non-zero pre-dispersion", self.case.label()));
        }
        if self.fiber.span_count == 0 || !(self.fiber.span_length_km > 0.0) {
            return bad("span count and span length must be positive".into());
        }
        if self.simulation.realizations == 0 {
            return bad("at least one realization is needed".into());
        }
        if let Some(os) = self.simulation.oversampling {
            if !os.is_power_of_two() || os < 2 {
                return bad(format!("oversampling {os} must be a power of two of at least 2"));
            }
        }
        if self.receiver.samples_per_symbol != 2 {
            return bad("the receiver works at 2 samples per symbol".into());
        }
        if !(self.metrics.epsilon >= 0.0) {
            return bad("epsilon must be non-negative".into());
        }
        if self.models.band_points < 2 || self.models.points_per_symbol_rate < 2 {
            return bad("model grids need at least two points".into());
        }
        self.layout().validate()?;
        Ok(())
    }

    pub fn layout(&self) -> FrameLayout {
        let t = &self.transmitter;
        FrameLayout {
            payload_symbols: t.payload_symbols,
            header_blocks: t.header_blocks,
            block_length: t.block_length,
            cazac_root: t.cazac_root,
        }
    }

    pub fn fiber_params(&self) -> Result<FiberParams> {
        let f = &self.fiber;
        let mut p = FiberParams::from_datasheet(
            f.span_length_km * 1e3,
            f.attenuation_db_km,
            f.dispersion_ps_nm_km,
            f.pmd_ps_sqrt_km,
            f.n2_m2_w,
            f.core_area_um2 * 1e-12,
            self.wavelength(),
        )?;
        p.manakov_factor = f.manakov_factor;
        Ok(p)
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / (self.transmitter.center_frequency_thz * 1e12)
    }

    /// Builds the runnable scenario.
    pub fn build(&self) -> Result<Scenario> {
        self.validate()?;
        let t = &self.transmitter;
        let spacing = t.channel_spacing_ghz * 1e9;
        let power = units::dbm_to_watt(t.launch_power_dbm);
        let pre = if self.case.pre_dispersed() { units::ps_nm_to_si(t.pre_dispersion_ps_nm) } else { 0.0 };
        let plan = ChannelPlan::uniform(
            t.channels,
            spacing,
            t.symbol_rate_gbd * 1e9,
            t.roll_off,
            t.cut_format,
            t.int_format,
            power,
            pre,
            self.simulation.seed,
        )?;
        let fiber = self.fiber_params()?;
        let mut link = LinkConfig::new(self.fiber.span_count, fiber, power);
        link.amplifier_gain_db = self.fiber.amplifier_gain_db;
        link.step = StepControl {
            max_nonlinear_phase: self.simulation.max_nonlinear_phase_rad,
            max_step: self.simulation.max_step_m,
            min_steps_per_span: self.simulation.min_steps_per_span,
            reference_power: None,
        };
        let width = self.roadm.passband_width_ghz.map(|w| w * 1e9).unwrap_or(spacing);
        link.roadm = if self.case.replaces_interferers() {
            RoadmConfig { recondition: self.roadm.recondition, ..RoadmConfig::replacing(width, 0) }
        } else {
            RoadmConfig { passband_width: width, recondition: self.roadm.recondition, ..RoadmConfig::inactive() }
        };
        link.validate()?;
        let mut receiver = Receiver::for_plan(&plan);
        if let Some(b) = self.receiver.bandwidth_ghz {
            receiver.bandwidth = b * 1e9;
        }
        receiver.samples_per_symbol = self.receiver.samples_per_symbol;
        receiver.taps = self.receiver.fde_taps;
        receiver.backpropagation = self.receiver.backpropagation;
        let terms = match &self.models.egn_terms {
            Some(p) => EgnTerms::load(p)?,
            None => EgnTerms::default(),
        };
        let seeds = (0..self.simulation.realizations as u64).map(|r| realization_seed(self.simulation.seed, r)).collect();
        Ok(Scenario {
            id: format!("{}-{}", self.case.label(), t.int_format.name()),
            case: self.case,
            pre_dispersion: pre,
            replace_int_each_span: self.case.replaces_interferers(),
            plan,
            link,
            layout: self.layout(),
            receiver,
            seeds,
            oversampling: self.simulation.oversampling,
            epsilon: self.metrics.epsilon,
            n_max: self.metrics.n_max,
            acf_max_lag: self.metrics.acf_max_lag,
            quadrature: Quadrature {
                points_per_symbol_rate: self.models.points_per_symbol_rate,
                refinement_tolerance: self.models.refinement_tolerance,
                ..Quadrature::default()
            },
            band_points: self.models.band_points,
            egn_terms: terms,
        })
    }
}

fn merge(base: &mut toml::Table, user: toml::Table) {
    for (k, v) in user {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => merge(b, u),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Seed of realization `r`; a sweep built from one configuration reuses the
/// same list so that its runs are paired.
pub fn realization_seed(base: u64, r: u64) -> u64 {
    channel_seed(base ^ 0x7265_616c_697a_6500, r as i32)
}

/// A fully resolved scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub id: String,
    pub case: Case,
    /// Accumulated dispersion of every interferer at launch, s/m.
    pub pre_dispersion: f64,
    pub replace_int_each_span: bool,
    /// Plan of the first realization; [`Scenario::plan_for`] re-seeds it.
    pub plan: ChannelPlan,
    pub link: LinkConfig,
    pub layout: FrameLayout,
    pub receiver: Receiver,
    pub seeds: Vec<u64>,
    pub oversampling: Option<usize>,
    pub epsilon: f64,
    pub n_max: Option<usize>,
    pub acf_max_lag: usize,
    pub quadrature: Quadrature,
    pub band_points: usize,
    pub egn_terms: EgnTerms,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.plan.validate()?;
        self.link.validate()?;
        self.layout.validate()?;
        if self.case.pre_dispersed() != (self.pre_dispersion != 0.0) {
            return Err(Error::Config(format!("case {} disagrees with the pre-dispersion", self.case.label())));
        }
        if self.case.replaces_interferers() != self.replace_int_each_span || self.link.roadm.active != self.replace_int_each_span {
            return Err(Error::Config(format!("case {} disagrees with the ROADM setting", self.case.label())));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("no realization seeds".into()));
        }
        Ok(())
    }

    /// Channel plan with the channel and ROADM seeds of realization `seed`.
    pub fn plan_for(&self, seed: u64) -> ChannelPlan {
        let mut plan = self.plan.clone();
        for c in &mut plan.channels {
            c.seed = channel_seed(seed, c.index);
        }
        plan
    }

    pub fn link_for(&self, seed: u64) -> LinkConfig {
        let mut link = self.link.clone();
        link.roadm.seed = seed;
        link
    }

    /// Samples per symbol of the simulated WDM field.
    pub fn oversampling(&self) -> usize {
        self.oversampling.unwrap_or_else(|| self.plan.simulation_oversampling())
    }

    pub fn realizations(&self) -> usize {
        self.seeds.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profiles_round_trip_through_toml() {
        for p in [Profile::Desk, Profile::Thesis] {
            let cfg = ScenarioConfig::profile(p);
            let back = ScenarioConfig::parse(&cfg.to_toml().unwrap()).unwrap();
            assert_eq!(cfg, back);
        }
    }

    #[test]
    fn overrides_and_unknown_keys() {
        let cfg = ScenarioConfig::parse("profile = \"thesis\"\ncase = \"D\"\n[fiber]\nspan_length_km = 40.0\n").unwrap();
        assert_eq!(cfg.transmitter.channels, 9);
        assert_eq!(cfg.fiber.span_length_km, 40.0);
        assert_eq!(cfg.case, Case::D);
        assert!(matches!(ScenarioConfig::parse("[fiber]\nspan_lenght_km = 40.0\n"), Err(Error::Config(_))));
        assert!(matches!(ScenarioConfig::parse("colour = 1\n"), Err(Error::Config(_))));
        assert!(matches!(ScenarioConfig::parse("case = \"E\"\n"), Err(Error::Config(_))));
        let forced = ScenarioConfig::parse_with_profile("profile = \"thesis\"\n", Some(Profile::Desk)).unwrap();
        assert_eq!(forced.transmitter.channels, 5);
    }

    #[test]
    fn case_sets_pre_dispersion_and_roadm() {
        for case in Case::ALL {
            let cfg = ScenarioConfig { case, ..ScenarioConfig::profile(Profile::Desk) };
            let s = cfg.build().unwrap();
            s.validate().unwrap();
            assert_eq!(s.pre_dispersion != 0.0, case.pre_dispersed());
            assert_eq!(s.link.roadm.active, case.replaces_interferers());
            let ints: Vec<_> = s.plan.interferers().collect();
            assert!(ints.iter().all(|c| (c.pre_dispersion - s.pre_dispersion).abs() < 1e-30));
        }
        let b = ScenarioConfig { case: Case::B, ..ScenarioConfig::profile(Profile::Desk) }.build().unwrap();
        assert!((b.pre_dispersion - 13.0).abs() < 1e-9);
    }

    #[test]
    fn desk_profile_values() {
        let s = ScenarioConfig::profile(Profile::Desk).build().unwrap();
        assert_eq!(s.plan.channels.len(), 5);
        assert_eq!(s.layout.payload_symbols, 8192);
        assert_eq!(s.realizations(), 2);
        assert_eq!(s.link.span_count, 10);
        assert!((s.link.launch_power_per_channel - 1.995e-3).abs() < 1e-5);
        assert_eq!(s.receiver.bandwidth, 37.5e9);
    }

    #[test]
    fn reseeding_keeps_layout() {
        let s = ScenarioConfig::profile(Profile::Desk).build().unwrap();
        let p = s.plan_for(s.seeds[1]);
        assert_eq!(p.channels.len(), s.plan.channels.len());
        assert_ne!(p.channels[0].seed, s.plan_for(s.seeds[0]).channels[0].seed);
        assert_eq!(s.plan_for(7), s.plan_for(7));
    }
}
