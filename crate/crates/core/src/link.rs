//! Link description shared by the simulator, the receiver and the models.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::{step_schedule, FiberParams, PmdRealization, StepControl};
use crate::roadm::RoadmConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub span_count: usize,
    /// Span length, m. Must equal `fiber.length`.
    pub span_length: f64,
    pub fiber: FiberParams,
    pub roadm: RoadmConfig,
    /// Launch power per channel (both polarizations), W.
    pub launch_power_per_channel: f64,
    pub step: StepControl,
    /// Amplifier gain after each span, dB. `None` compensates the span loss.
    pub amplifier_gain_db: Option<f64>,
}

impl LinkConfig {
    pub fn new(span_count: usize, fiber: FiberParams, launch_power_per_channel: f64) -> Self {
        LinkConfig {
            span_count,
            span_length: fiber.length,
            roadm: RoadmConfig::inactive(),
            launch_power_per_channel,
            step: StepControl::default(),
            amplifier_gain_db: None,
            fiber,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.fiber.validate()?;
        self.step.validate()?;
        if !(self.span_length > 0.0) {
            return Err(Error::Config("span length must be positive".into()));
        }
        if (self.span_length - self.fiber.length).abs() > 1e-9 * self.span_length {
            return Err(Error::Config(format!(
                "span length {} m differs from fiber length {} m",
                self.span_length, self.fiber.length
            )));
        }
        if !(self.launch_power_per_channel > 0.0) {
            return Err(Error::Config("launch power must be positive".into()));
        }
        self.roadm.validate()
    }

    pub fn gain_db(&self) -> f64 {
        self.amplifier_gain_db.unwrap_or_else(|| self.fiber.span_loss_db())
    }

    pub fn with_span_count(mut self, n: usize) -> Self {
        self.span_count = n;
        self
    }

    pub fn with_span_length(mut self, length: f64) -> Self {
        self.span_length = length;
        self.fiber.length = length;
        self
    }

    /// Forward step schedule of every span when `total_power` is launched.
    pub fn schedule(&self, total_power: f64, dual: bool) -> Result<Vec<f64>> {
        let power = self.step.reference_power.unwrap_or(total_power);
        step_schedule(&self.fiber, &self.step, power, dual)
    }

    /// PMD sections of span `span` (0-based) in realization `seed`.
    pub fn pmd(&self, seed: u64, span: usize) -> PmdRealization {
        if self.fiber.pmd_coefficient == 0.0 {
            return PmdRealization::off();
        }
        PmdRealization::new(crate::waveform::channel_seed(seed ^ 0x0b1e_f00d, span as i32))
    }

    pub fn total_length(&self) -> f64 {
        self.span_count as f64 * self.span_length
    }
}
