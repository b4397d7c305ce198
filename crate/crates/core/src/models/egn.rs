use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    coherence_factor, cut_band_grid, fwm_efficiency, gn_nli_psd, modulation_moments, xmci_power, NliPsd, Quadrature,
    SpectralModel,
};
use crate::error::{Error, Result};
use crate::link::LinkConfig;
use crate::signal::C64;
use crate::waveform::{ChannelPlan, ChannelSpec};

const DEFAULT_TERMS: &str = include_str!("egn_terms.toml");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Cut,
    Int,
    OtherInt,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Moment {
    Phi,
    Psi,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgnTerm {
    pub label: String,
    pub numerator: f64,
    pub denominator: f64,
    pub moment: Moment,
    pub moment_of: Role,
    pub outer: Role,
    pub inner_f2: Role,
    pub inner_f3: Role,
    pub enabled: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Family {
    Sci,
    Xci,
    Mci,
}

impl EgnTerm {
    fn roles(&self) -> [Role; 4] {
        [self.outer, self.inner_f2, self.inner_f3, self.moment_of]
    }

    fn family(&self) -> Family {
        let r = self.roles();
        if r.contains(&Role::OtherInt) {
            Family::Mci
        } else if r.contains(&Role::Int) {
            Family::Xci
        } else {
            Family::Sci
        }
    }

    pub fn coefficient(&self) -> f64 {
        self.numerator / self.denominator
    }
}

/// The catalogue of correction terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EgnTerms {
    pub term: Vec<EgnTerm>,
}

impl Default for EgnTerms {
    fn default() -> Self {
        Self::parse(DEFAULT_TERMS).expect("bundled term catalogue parses")
    }
}

impl EgnTerms {
    pub fn parse(text: &str) -> Result<Self> {
        let t: EgnTerms = toml::from_str(text).map_err(|e| Error::Config(format!("EGN terms: {e}")))?;
        for term in &t.term {
            if !(term.denominator != 0.0) || !term.numerator.is_finite() {
                return Err(Error::Config(format!("EGN term {} has an invalid coefficient", term.label)));
            }
            if term.roles().contains(&Role::OtherInt) && !term.roles().contains(&Role::Int) {
                return Err(Error::Config(format!("EGN term {} uses other_int without int", term.label)));
            }
        }
        Ok(t)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The bundled catalogue text.
    pub fn default_text() -> &'static str {
        DEFAULT_TERMS
    }

    fn enabled(&self) -> impl Iterator<Item = &EgnTerm> {
        self.term.iter().filter(|t| t.enabled)
    }
}

struct Kernel<'a> {
    model: &'a SpectralModel,
    link: &'a LinkConfig,
    h: f64,
}

impl Kernel<'_> {
    /// Normalized field spectrum G_c(f) (real, ∫|G|² = 1/S_R).
    fn g(&self, c: usize, f: f64) -> f64 {
        let d = f - self.model.centers[c];
        if d.abs() > self.model.half_width() {
            return 0.0;
        }
        (self.model.unit_shape(d) / self.model.symbol_rate).sqrt()
    }

    /// ∫df1 |G_o(f1)|² |∫df2 G_a(f2) G_b(f1 + f2 − f) μ|².
    fn nested(&self, f: f64, o: usize, a: usize, b: usize) -> f64 {
        let fiber = &self.link.fiber;
        let l = self.link.span_length;
        let n = self.link.span_count;
        let inner_nodes = self.model.nodes(a, self.h);
        let mut outer = 0.0;
        for f1 in self.model.nodes(o, self.h) {
            let go = self.g(o, f1);
            if go == 0.0 {
                continue;
            }
            let mut inner = C64::new(0.0, 0.0);
            for &f2 in &inner_nodes {
                let ga = self.g(a, f2);
                let gb = self.g(b, f1 + f2 - f);
                if ga == 0.0 || gb == 0.0 {
                    continue;
                }
                let mu = fwm_efficiency(f1, f2, f, fiber, l) * coherence_factor(f1, f2, f, fiber.beta2, l, n);
                inner += mu * (ga * gb);
            }
            outer += go * go * (inner * self.h).norm_sqr();
        }
        outer * self.h
    }
}

fn check_plan(plan: &ChannelPlan, link: &LinkConfig) -> Result<()> {
    plan.validate()?;
    link.validate()?;
    if let Some(c) = plan.channels.iter().find(|c| c.pre_dispersion != 0.0) {
        return Err(Error::Unsupported(format!(
            "the EGN model does not support pre-dispersed channels (channel {})",
            c.index
        )));
    }
    Ok(())
}

/// Sum of the enabled terms of `family` at frequency `f` for the channel
/// assignments allowed by `ints` (indices into `channels`).
fn terms_at(
    f: f64,
    terms: &[&EgnTerm],
    channels: &[&ChannelSpec],
    kernel: &Kernel,
    cut: usize,
    ints: &[usize],
    all_ints: &[usize],
) -> [f64; 3] {
    let sr = kernel.model.symbol_rate;
    let mut acc = [0.0; 3];
    for term in terms {
        let mut assignments = Vec::new();
        let uses_int = term.roles().contains(&Role::Int);
        let uses_other = term.roles().contains(&Role::OtherInt);
        if !uses_int {
            assignments.push((cut, cut));
        } else {
            for &a in ints {
                if uses_other {
                    for &b in all_ints.iter().filter(|&&b| b != a) {
                        assignments.push((a, b));
                    }
                } else {
                    assignments.push((a, a));
                }
            }
        }
        for (a, b) in assignments {
            let pick = |r: Role| match r {
                Role::Cut => cut,
                Role::Int => a,
                Role::OtherInt => b,
            };
            let m = modulation_moments(channels[pick(term.moment_of)].format);
            let moment = match term.moment {
                Moment::Phi => m.phi_b,
                Moment::Psi => m.psi_b,
            };
            if moment == 0.0 {
                continue;
            }
            let (o, i2, i3) = (pick(term.outer), pick(term.inner_f2), pick(term.inner_f3));
            let powers = channels[o].launch_power * channels[i2].launch_power * channels[i3].launch_power;
            let k = kernel.nested(f, o, i2, i3);
            let v = term.coefficient() * moment * sr * sr * powers * k;
            let slot = match term.family() {
                Family::Sci => 0,
                Family::Xci => 1,
                Family::Mci => 2,
            };
            acc[slot] += v;
        }
    }
    acc
}

fn corrections(
    plan: &ChannelPlan,
    link: &LinkConfig,
    f_grid: &[f64],
    quad: &Quadrature,
    terms: &EgnTerms,
    only_int: Option<i32>,
) -> Result<Vec<[f64; 3]>> {
    let channels: Vec<&ChannelSpec> = plan.channels.iter().collect();
    let model = SpectralModel::new(&channels, plan.symbol_rate, plan.roll_off, quad.egn_shape);
    let kernel = Kernel { model: &model, link, h: quad.step(plan.symbol_rate)? };
    let cut = channels.iter().position(|c| c.is_cut()).expect("validated plan has a CUT");
    let all_ints: Vec<usize> = (0..channels.len()).filter(|&i| i != cut).collect();
    let ints: Vec<usize> = match only_int {
        Some(idx) => {
            let i = channels
                .iter()
                .position(|c| c.index == idx && !c.is_cut())
                .ok_or_else(|| Error::invalid(format!("interferer {idx} not in plan")))?;
            vec![i]
        }
        None => all_ints.clone(),
    };
    let enabled: Vec<&EgnTerm> = terms.enabled().collect();
    Ok(f_grid.par_iter().map(|&f| terms_at(f, &enabled, &channels, &kernel, cut, &ints, &all_ints)).collect())
}

/// XCI correction contributed by the interferer `int` at each frequency of
/// `f_grid` (W/Hz; negative for sub-Gaussian formats).
pub fn egn_correction_xci(
    plan: &ChannelPlan,
    link: &LinkConfig,
    int: &ChannelSpec,
    f_grid: &[f64],
    quad: &Quadrature,
    terms: &EgnTerms,
) -> Result<Vec<f64>> {
    check_plan(plan, link)?;
    if int.is_cut() {
        return Err(Error::invalid("the interferer must not be the CUT"));
    }
    let xci_terms = EgnTerms { term: terms.term.iter().filter(|t| t.family() == Family::Xci).cloned().collect() };
    Ok(corrections(plan, link, f_grid, quad, &xci_terms, Some(int.index))?.iter().map(|c| c[1]).collect())
}

/// EGN NLI PSD: the GN integral plus every enabled correction term.
pub fn egn_nli_psd(
    plan: &ChannelPlan,
    link: &LinkConfig,
    f_grid: &[f64],
    quad: &Quadrature,
    terms: &EgnTerms,
) -> Result<NliPsd> {
    check_plan(plan, link)?;
    let mut out = gn_nli_psd(plan, link, f_grid, quad)?;
    for (i, c) in corrections(plan, link, f_grid, quad, terms, None)?.iter().enumerate() {
        out.sci[i] += c[0];
        out.xci[i] += c[1];
        out.mci[i] += c[2];
        out.correction[i] = c[0] + c[1] + c[2];
        out.total[i] += out.correction[i];
    }
    Ok(out)
}

/// XMCI power predicted by the EGN model over the CUT band.
pub fn egn_xmci(plan: &ChannelPlan, link: &LinkConfig, points: usize, quad: &Quadrature, terms: &EgnTerms) -> Result<f64> {
    let grid = cut_band_grid(plan, points);
    let full = egn_nli_psd(plan, link, &grid, quad, terms)?;
    let alone = egn_nli_psd(&plan.cut_only(), link, &grid, quad, terms)?;
    let c = plan.cut().center_offset;
    xmci_power(&full, &alone, (c - plan.symbol_rate / 2.0, c + plan.symbol_rate / 2.0))
}
