use rayon::prelude::*;

use super::{cut_band_grid, dirichlet_sq, efficiency_from_phase, xmci_power, NliPsd, Quadrature, SpectralModel};
use crate::error::{Error, Result};
use crate::link::LinkConfig;
use crate::waveform::ChannelPlan;
use std::f64::consts::PI;

/// Per-frequency split of the GN integral.
#[derive(Clone, Copy, Default)]
struct Split {
    sci: f64,
    xci: f64,
    mci: f64,
}

struct Grid {
    /// (frequency, channel, |G|²) for every node with non-zero PSD.
    nodes: Vec<(f64, usize, f64)>,
    h: f64,
}

fn build_grid(model: &SpectralModel, h: f64) -> Grid {
    let mut nodes = Vec::new();
    for c in 0..model.centers.len() {
        for f in model.nodes(c, h) {
            let p = model.channel_psd(c, f);
            if p > 0.0 {
                nodes.push((f, c, p));
            }
        }
    }
    Grid { nodes, h }
}

fn gn_at(f: f64, model: &SpectralModel, grid: &Grid, link: &LinkConfig, cut: usize) -> Split {
    let fiber = &link.fiber;
    let alpha_p = fiber.power_attenuation();
    let l = link.span_length;
    let ns = link.span_count;
    let k = 4.0 * PI * PI * fiber.beta2;
    let hw = model.half_width();
    let mut split = Split::default();
    for &(f1, a, p1) in &grid.nodes {
        for &(f2, b, p2) in &grid.nodes {
            let f3 = f1 + f2 - f;
            let Some(c) = model.centers.iter().position(|c| (f3 - c).abs() <= hw) else { continue };
            let p3 = model.channel_psd(c, f3);
            if p3 == 0.0 {
                continue;
            }
            let phase = k * (f1 - f) * (f2 - f);
            let zeta = efficiency_from_phase(phase, fiber.gamma, alpha_p, l).norm_sqr();
            let v = p1 * p2 * p3 * zeta * dirichlet_sq(0.5 * phase * l, ns);
            let ints = [a, b, c].iter().filter(|&&x| x != cut).fold(Vec::with_capacity(3), |mut acc, &x| {
                if !acc.contains(&x) {
                    acc.push(x);
                }
                acc
            });
            match ints.len() {
                0 => split.sci += v,
                1 if [a, b, c].contains(&cut) => split.xci += v,
                _ => split.mci += v,
            }
        }
    }
    let w = 16.0 / 27.0 * grid.h * grid.h;
    Split { sci: split.sci * w, xci: split.xci * w, mci: split.mci * w }
}

fn gn_grid_psd(plan: &ChannelPlan, link: &LinkConfig, f_grid: &[f64], quad: &Quadrature) -> Result<NliPsd> {
    plan.validate()?;
    link.validate()?;
    if link.span_count == 0 {
        return Err(Error::Config("span count must be at least one".into()));
    }
    let channels: Vec<_> = plan.channels.iter().collect();
    let model = SpectralModel::new(&channels, plan.symbol_rate, plan.roll_off, quad.gn_shape);
    let cut = plan.channels.iter().position(|c| c.is_cut()).expect("validated plan has a CUT");
    let grid = build_grid(&model, quad.step(plan.symbol_rate)?);
    let splits: Vec<Split> = f_grid.par_iter().map(|&f| gn_at(f, &model, &grid, link, cut)).collect();
    let mut out = NliPsd::zeros(f_grid);
    for (i, s) in splits.iter().enumerate() {
        out.sci[i] = s.sci;
        out.xci[i] = s.xci;
        out.mci[i] = s.mci;
        out.total[i] = s.sci + s.xci + s.mci;
    }
    Ok(out)
}

/// GN-model NLI PSD accumulated over `link.span_count` spans, on `f_grid`.
///
/// Only the channel PSDs enter, so pre-dispersion and modulation format have
/// no influence. The split into SCI/XCI/MCI follows which channels supply
/// the three beating frequencies.
pub fn gn_nli_psd(plan: &ChannelPlan, link: &LinkConfig, f_grid: &[f64], quad: &Quadrature) -> Result<NliPsd> {
    let out = gn_grid_psd(plan, link, f_grid, quad)?;
    if let Some(tol) = quad.refinement_tolerance {
        let centre = [plan.cut().center_offset];
        let coarse = gn_grid_psd(plan, link, &centre, &Quadrature { refinement_tolerance: None, ..quad.clone() })?.total[0];
        let fine = gn_grid_psd(plan, link, &centre, &quad.refined())?.total[0];
        let change = (fine - coarse).abs() / fine.abs().max(f64::MIN_POSITIVE);
        if change > tol {
            return Err(Error::GridTooCoarse { change: 100.0 * change });
        }
    }
    Ok(out)
}

/// XMCI power predicted by the GN model over the CUT band: full plan minus
/// the CUT alone, integrated over [−S_R/2, S_R/2] around the CUT.
pub fn gn_xmci(plan: &ChannelPlan, link: &LinkConfig, points: usize, quad: &Quadrature) -> Result<f64> {
    let grid = cut_band_grid(plan, points);
    let full = gn_nli_psd(plan, link, &grid, quad)?;
    let alone = gn_nli_psd(&plan.cut_only(), link, &grid, quad)?;
    let c = plan.cut().center_offset;
    xmci_power(&full, &alone, (c - plan.symbol_rate / 2.0, c + plan.symbol_rate / 2.0))
}
