//! ROADM built from ideal rectangular wavelength-selective switches: the CUT
//! is passed through, interferers are dropped and fresh copies are added.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{self, RectangularPassband, Signal, C64};
use crate::waveform::{condition_channel, ChannelPlan, ChannelSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterShape {
    #[serde(rename = "rectangular")]
    Rectangular,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoadmConfig {
    pub active: bool,
    /// Width of every WSS port, Hz; normally the channel spacing.
    pub passband_width: f64,
    pub filter_shape: FilterShape,
    /// Base seed of the per-(span, channel) re-conditioning of added channels.
    pub seed: u64,
    /// Apply a fresh random delay and rotation to every added channel.
    pub recondition: bool,
}

impl RoadmConfig {
    pub fn inactive() -> Self {
        RoadmConfig {
            active: false,
            passband_width: 1.0,
            filter_shape: FilterShape::Rectangular,
            seed: 0,
            recondition: true,
        }
    }

    pub fn replacing(passband_width: f64, seed: u64) -> Self {
        RoadmConfig { active: true, passband_width, filter_shape: FilterShape::Rectangular, seed, recondition: true }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.passband_width > 0.0) {
            return Err(Error::Config("ROADM passband width must be positive".into()));
        }
        Ok(())
    }

    /// Seed of the conditioning applied to channel `index` added after span `span`.
    pub fn replacement_seed(&self, span: usize, index: i32) -> u64 {
        let a = crate::waveform::channel_seed(self.seed, index);
        crate::waveform::channel_seed(a ^ 0x5eed_0f0a_dd00_0000, span as i32)
    }
}

/// Passes the union of disjoint rectangular passbands.
pub fn wss_filter(signal: &Signal, passbands: &[RectangularPassband]) -> Result<Signal> {
    let mut sorted = passbands.to_vec();
    sorted.sort_by(|a, b| a.lower().total_cmp(&b.lower()));
    for w in sorted.windows(2) {
        // Touching edges are allowed; the shared bin passes once.
        if w[0].upper() - w[1].lower() > 1e-9 * w[0].upper().abs().max(w[1].lower().abs()).max(1.0) {
            return Err(Error::OverlappingPassbands {
                a_lo: w[0].lower(),
                a_hi: w[0].upper(),
                b_lo: w[1].lower(),
                b_hi: w[1].upper(),
            });
        }
    }
    let gains: Vec<C64> = signal
        .frequencies()
        .into_iter()
        .map(|f| {
            if sorted.iter().any(|p| p.contains(f)) {
                C64::new(1.0, 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    Ok(signal::apply_gains(signal, &gains))
}

/// Keeps the filtered CUT and replaces every interferer slot by its fresh
/// copy (given at baseband), re-conditioned with the per-span seed and scaled
/// to the power found in the dropped slot.
pub fn replace_interferers(
    wdm: &Signal,
    plan: &ChannelPlan,
    fresh: &[(ChannelSpec, Signal)],
    span_index: usize,
    config: &RoadmConfig,
) -> Result<Signal> {
    if !config.active {
        return Ok(wdm.clone());
    }
    let df = wdm.bin_spacing();
    let slot = |spec: &ChannelSpec| {
        let center = signal::snap_to_bin(spec.center_offset, df) as f64 * df;
        RectangularPassband::new(center, config.passband_width)
    };
    let mut out = wss_filter(wdm, &[slot(plan.cut())])?;
    for spec in plan.interferers() {
        let (_, copy) = fresh
            .iter()
            .find(|(s, _)| s.index == spec.index)
            .ok_or(Error::MissingFreshChannel(spec.index))?;
        let band = slot(spec);
        let dropped = wss_filter(wdm, &[band])?.power();
        let added = if config.recondition {
            condition_channel(copy, plan.symbol_rate, config.replacement_seed(span_index, spec.index))
        } else {
            copy.clone()
        };
        let shifted = signal::shift_bins(&added, signal::snap_to_bin(spec.center_offset, df));
        let filtered = wss_filter(&shifted, &[band])?;
        let p = filtered.power();
        let scaled = if p > 0.0 { filtered.scaled((dropped / p).sqrt()) } else { filtered };
        out.add_assign(&scaled)?;
    }
    Ok(out)
}
