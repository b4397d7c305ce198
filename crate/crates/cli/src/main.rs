use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use nlin_core::collision::{accumulation_curve, CoefficientTable, CollisionIndex, CollisionSetup, PulseSpec};
use nlin_core::dsp::FdeStore;
use nlin_core::scenario::{
    calibrate_all, emit_collisions, emit_report, file_stem, model_rows, result_rows, run_models, run_scenario, Case,
    Profile, Report, ReportFormat, Scenario, ScenarioConfig, Sweep,
};
use nlin_core::waveform::ModulationFormat;
use nlin_core::Error;

#[derive(Parser, Debug)]
#[command(name = "nlin", version, about = "Nonlinear interference noise simulations and models")]
struct Cli {
    /// Scenario configuration (TOML); profile defaults fill the rest.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, value_parser = ["A", "B", "C", "D"])]
    scenario: Option<String>,
    #[arg(long, global = true, value_enum)]
    profile: Option<ProfileArg>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    realizations: Option<usize>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: FormatArg,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProfileArg {
    Desk,
    Thesis,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Csv,
    Records,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SweepParameter {
    SpanLength,
    ChannelSpacing,
    Modulation,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Calibrate, simulate every span and compare with the models.
    Simulate {
        /// Skip the GN/EGN predictions.
        #[arg(long)]
        no_models: bool,
    },
    /// GN/EGN predictions only.
    Model,
    /// Simulate one scenario per parameter value with paired seeds.
    Sweep {
        #[arg(long, value_enum)]
        parameter: SweepParameter,
        /// Comma-separated values: km, GHz or QPSK/16QAM/GAUSSIAN.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Pulse-collision coefficients and accumulation curves.
    Collisions {
        /// Largest |h|, |k|, |m| in the coefficient table.
        #[arg(long, default_value_t = 2)]
        range: i64,
        /// Accumulation curves to write, as h,k,m (repeatable).
        #[arg(long = "curve", value_name = "H,K,M")]
        curves: Vec<String>,
        /// Use the configured link instead of the lossless demonstration.
        #[arg(long)]
        from_config: bool,
    },
    /// Train and store the equalizer coefficients of every realization.
    Calibrate,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::InvalidArgument(_) | Error::Unsupported(_) => 1,
        Error::Io(_) | Error::Json(_) | Error::CorruptCoefficients(_) => 3,
        Error::Csv(c) if c.is_io_error() => 3,
        _ => 2,
    }
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig, Error> {
    let profile = cli.profile.map(|p| match p {
        ProfileArg::Desk => Profile::Desk,
        ProfileArg::Thesis => Profile::Thesis,
    });
    let mut cfg = match &cli.config {
        Some(path) => ScenarioConfig::load_with_profile(path, profile)?,
        None => ScenarioConfig::profile(profile.unwrap_or(Profile::Desk)),
    };
    if let Some(case) = &cli.scenario {
        cfg.case = case.parse::<Case>()?;
    }
    if let Some(seed) = cli.seed {
        cfg.simulation.seed = seed;
    }
    if let Some(r) = cli.realizations {
        cfg.simulation.realizations = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn format(cli: &Cli) -> ReportFormat {
    match cli.format {
        FormatArg::Csv => ReportFormat::Csv,
        FormatArg::Records => ReportFormat::Records,
    }
}

/// Coefficients live next to the results, one directory per scenario.
fn store_for(out: &Path, scenario: &Scenario) -> Result<FdeStore, Error> {
    FdeStore::at(out.join("fde").join(file_stem(&scenario.id)))
}

fn simulate_into(report: &mut Report, scenario: &Scenario, out: &Path, models: bool) -> Result<(), Error> {
    let store = store_for(out, scenario)?;
    calibrate_all(scenario, &store)?;
    let sim = run_scenario(scenario, &store)?;
    let m = if models { Some(run_models(scenario)?) } else { None };
    if let Some(m) = &m {
        for note in &m.notes {
            eprintln!("{}: {note}", scenario.id);
        }
    }
    report.rows.extend(result_rows(&sim, m.as_ref(), scenario.plan.cut().launch_power));
    if let Some(a) = sim.acf.last() {
        report.acf.push((sim.scenario.clone(), a.clone()));
    }
    Ok(())
}

fn parse_number(v: &str) -> Result<f64, Error> {
    v.trim().parse().map_err(|_| Error::Config(format!("{v:?} is not a number")))
}

fn parse_index(v: &str) -> Result<CollisionIndex, Error> {
    let parts: Vec<i64> = v
        .split(',')
        .map(|p| p.trim().parse::<i64>().map_err(|_| Error::Config(format!("bad collision index {v:?}"))))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [h, k, m] => Ok(CollisionIndex::new(*h, *k, *m)),
        _ => Err(Error::Config(format!("collision index {v:?} needs three integers"))),
    }
}

fn report_written(paths: &[PathBuf]) {
    for p in paths {
        println!("{}", p.display());
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let cfg = load_config(cli)?;
    let fmt = format(cli);
    match &cli.command {
        Command::Simulate { no_models } => {
            let scenario = cfg.build()?;
            let mut report = Report::default();
            simulate_into(&mut report, &scenario, &cli.out, !no_models)?;
            report_written(&emit_report(&report, &cli.out, fmt)?);
        }
        Command::Model => {
            let scenario = cfg.build()?;
            let m = run_models(&scenario)?;
            for note in &m.notes {
                eprintln!("{}: {note}", scenario.id);
            }
            report_written(&emit_report(&Report::new(model_rows(&m)), &cli.out, fmt)?);
        }
        Command::Sweep { parameter, values } => {
            let sweep = match parameter {
                SweepParameter::SpanLength => Sweep::SpanLength(values.iter().map(|v| parse_number(v)).collect::<Result<_, _>>()?),
                SweepParameter::ChannelSpacing => {
                    Sweep::ChannelSpacing(values.iter().map(|v| parse_number(v)).collect::<Result<_, _>>()?)
                }
                SweepParameter::Modulation => Sweep::Modulation(
                    values
                        .iter()
                        .map(|v| match v.trim().to_ascii_uppercase().as_str() {
                            "QPSK" => Ok(ModulationFormat::Qpsk),
                            "16QAM" => Ok(ModulationFormat::Qam16),
                            "GAUSSIAN" => Ok(ModulationFormat::Gaussian),
                            other => Err(Error::Config(format!("unknown modulation format {other:?}"))),
                        })
                        .collect::<Result<_, _>>()?,
                ),
            };
            let mut report = Report::default();
            for scenario in sweep.scenarios(&cfg)? {
                simulate_into(&mut report, &scenario, &cli.out, true)?;
            }
            report_written(&emit_report(&report, &cli.out, fmt)?);
        }
        Command::Collisions { range, curves, from_config } => {
            if *range < 0 {
                return Err(Error::Config("range must not be negative".into()));
            }
            let setup = if *from_config {
                let s = cfg.build()?;
                let pulse = PulseSpec { symbol_rate: s.plan.symbol_rate, roll_off: s.plan.roll_off };
                CollisionSetup::from_link(&s.link, pulse, s.plan.spacing)
            } else {
                CollisionSetup::demonstration()
            };
            let table = CoefficientTable::compute(&setup, *range)?;
            let curves = curves
                .iter()
                .map(|c| {
                    let idx = parse_index(c)?;
                    Ok((idx, accumulation_curve(idx, &setup)?))
                })
                .collect::<Result<Vec<_>, Error>>()?;
            report_written(&emit_collisions(&table, &curves, &cli.out, fmt)?);
        }
        Command::Calibrate => {
            let scenario = cfg.build()?;
            let store = store_for(&cli.out, &scenario)?;
            calibrate_all(&scenario, &store)?;
            println!("{}", cli.out.join("fde").join(file_stem(&scenario.id)).display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
