//! Argument parsing and dispatch for the `labelsmooth` binary.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use labelsmooth::io::{
    read_rows_csv, read_transition_json, write_landscape_csv, write_matrix_json, write_rows_csv,
};
use labelsmooth::losses::{jensen_chain, LogitVector};
use labelsmooth::sim::{
    compare_to_theory, run_grid, ExperimentConfig, GdSettings, Learner, NoiseModel,
};
use labelsmooth::stochastic::random_column_stochastic;
use labelsmooth::theory::{self, linear_grid};
use labelsmooth::{effective_clean_rate, Assumption, Prob, SmoothingMatrix, TransitionMatrix};
use rand::Rng;
use serde::Serialize;

/// Environment variable holding the default master seed.
pub const SEED_ENV: &str = "LABELSMOOTH_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "labelsmooth",
    version,
    about = "Label smoothing under label noise: loss landscapes, optimal smoothing, Monte Carlo checks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AssumptionArg {
    Alpha,
    Beta,
    Gamma,
}

impl From<AssumptionArg> for Assumption {
    fn from(a: AssumptionArg) -> Self {
        match a {
            AssumptionArg::Alpha => Assumption::Alpha,
            AssumptionArg::Beta => Assumption::Beta,
            AssumptionArg::Gamma => Assumption::Gamma,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MatrixAssumptionArg {
    Alpha,
    Beta,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum LearnerArg {
    Ideal,
    Gd,
}

#[derive(Clone, Debug, PartialEq, Args)]
pub struct GridArgs {
    #[arg(long, default_value_t = 0.5)]
    pub a_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub a_max: f64,
    #[arg(long, default_value_t = 0.01)]
    pub a_step: f64,
    #[arg(long, default_value_t = 0.5)]
    pub p_min: f64,
    #[arg(long, default_value_t = 1.0)]
    pub p_max: f64,
    #[arg(long, default_value_t = 0.1)]
    pub p_step: f64,
}

impl GridArgs {
    fn a_grid(&self) -> Result<Vec<f64>> {
        Ok(linear_grid(self.a_min, self.a_max, self.a_step)?)
    }

    fn p_grid(&self) -> Result<Vec<f64>> {
        Ok(linear_grid(self.p_min, self.p_max, self.p_step)?)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Theoretical loss over an (a, p) grid, as CSV
    Landscape {
        #[arg(long, value_enum)]
        assumption: AssumptionArg,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[command(flatten)]
        grid: GridArgs,
        /// Output file (standard output if omitted)
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Optimal smoothing parameter for uniform noise, as JSON
    OptimalP {
        #[arg(long, value_enum)]
        assumption: AssumptionArg,
        #[arg(long, default_value_t = 2)]
        classes: usize,
        #[arg(long)]
        clean_rate: f64,
    },
    /// Optimal smoothing matrix for a transition matrix, as JSON
    OptimalS {
        #[arg(long, value_enum)]
        assumption: MatrixAssumptionArg,
        #[arg(long)]
        transition: PathBuf,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Mean-field clean rate and smoothing parameters of a transition matrix
    MeanField {
        #[arg(long)]
        transition: PathBuf,
    },
    /// Monte Carlo grid experiment with memorizing learners, as CSV
    Simulate {
        #[arg(long, value_enum)]
        assumption: AssumptionArg,
        /// Class count (taken from --transition when given)
        #[arg(long)]
        classes: Option<usize>,
        /// Fixed transition matrix instead of the uniform a-grid
        #[arg(long)]
        transition: Option<PathBuf>,
        #[command(flatten)]
        grid: GridArgs,
        /// Labels per cell
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        /// Replicates per cell
        #[arg(long, default_value_t = 3)]
        seeds: usize,
        /// Master seed
        #[arg(long, env = SEED_ENV, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = LearnerArg::Ideal)]
        learner: LearnerArg,
        #[arg(long, default_value_t = 0.5)]
        gd_step: f64,
        #[arg(long, default_value_t = 2000)]
        gd_iters: usize,
        #[arg(long, short)]
        output: Option<PathBuf>,
    },
    /// Deviation report of a simulate CSV against the theory, as JSON
    Compare {
        #[arg(long)]
        input: PathBuf,
    },
    /// Random check of the smoothed <= forward log-likelihood inequality
    JensenCheck {
        #[arg(long, default_value_t = 4)]
        classes: usize,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, env = SEED_ENV, default_value_t = 0)]
        seed: u64,
    },
}

pub fn parse_args<I, T>(argv: I) -> std::result::Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    Cli::try_parse_from(argv)
}

fn open_output<'a>(path: Option<&Path>, stdout: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).with_context(|| format!("creating {}", p.display()))?,
        )),
        None => Box::new(stdout),
    })
}

fn load_transition(path: &Path) -> Result<TransitionMatrix> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_transition_json(BufReader::new(file))
        .with_context(|| format!("reading transition matrix {}", path.display()))
}

fn print_json<T: Serialize>(value: &T, out: &mut dyn Write) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

#[derive(Serialize)]
struct OptimalPReport {
    assumption: Assumption,
    classes: usize,
    clean_rate: f64,
    #[serde(flatten)]
    point: labelsmooth::OptimalPoint,
}

#[derive(Serialize)]
struct MeanFieldReport {
    classes: usize,
    effective_clean_rate: f64,
    p_alpha: f64,
    p_beta: f64,
}

#[derive(Serialize)]
struct JensenReport {
    classes: usize,
    samples: usize,
    seed: u64,
    min_gap_forward_smoothed: f64,
    gap_forward_smoothed_ok: bool,
    gap_logit_forward_positive: usize,
    gap_logit_forward_negative: usize,
    gap_logit_forward_zero: usize,
}

/// Sign counts of `logit - forward` and the smallest `forward - smoothed`
/// gap over random logits and random smoothing matrices.
fn jensen_report(classes: usize, samples: usize, seed: u64) -> Result<JensenReport> {
    if samples == 0 {
        bail!("--samples must be at least 1");
    }
    let mut rng = labelsmooth::seed::stream(seed, &[0x6a65_6e73]);
    let mut report = JensenReport {
        classes,
        samples,
        seed,
        min_gap_forward_smoothed: f64::INFINITY,
        gap_forward_smoothed_ok: true,
        gap_logit_forward_positive: 0,
        gap_logit_forward_negative: 0,
        gap_logit_forward_zero: 0,
    };
    for _ in 0..samples {
        let s: SmoothingMatrix = random_column_stochastic(classes, &mut rng)?;
        let h = LogitVector::new((0..classes).map(|_| rng.random_range(-5.0..5.0)).collect())?;
        let j = rng.random_range(0..classes);
        let chain = jensen_chain(&h, &s, j)?;
        report.min_gap_forward_smoothed = report
            .min_gap_forward_smoothed
            .min(chain.gap_forward_smoothed);
        match chain.gap_logit_forward {
            g if g > 0.0 => report.gap_logit_forward_positive += 1,
            g if g < 0.0 => report.gap_logit_forward_negative += 1,
            _ => report.gap_logit_forward_zero += 1,
        }
    }
    report.gap_forward_smoothed_ok = report.min_gap_forward_smoothed >= -1e-12;
    Ok(report)
}

/// Executes a parsed command, writing results to `stdout` unless an output
/// file is given.
pub fn run(cli: Cli, stdout: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Landscape {
            assumption,
            classes,
            grid,
            output,
        } => {
            let g =
                theory::landscape(assumption.into(), classes, &grid.a_grid()?, &grid.p_grid()?)?;
            write_landscape_csv(&g, open_output(output.as_deref(), stdout)?)?;
        }
        Command::OptimalP {
            assumption,
            classes,
            clean_rate,
        } => {
            let assumption = assumption.into();
            let point = theory::optimal_p(assumption, Prob::new(clean_rate)?, classes)?;
            print_json(
                &OptimalPReport {
                    assumption,
                    classes,
                    clean_rate,
                    point,
                },
                stdout,
            )?;
        }
        Command::OptimalS {
            assumption,
            transition,
            output,
        } => {
            let t = load_transition(&transition)?;
            let s = match assumption {
                MatrixAssumptionArg::Alpha => theory::optimal_s_alpha(&t),
                MatrixAssumptionArg::Beta => theory::optimal_s_beta(&t),
            };
            write_matrix_json(&s, open_output(output.as_deref(), stdout)?)?;
        }
        Command::MeanField { transition } => {
            let t = load_transition(&transition)?;
            print_json(
                &MeanFieldReport {
                    classes: t.classes(),
                    effective_clean_rate: effective_clean_rate(&t).value(),
                    p_alpha: theory::meanfield_p_alpha(&t).value(),
                    p_beta: theory::meanfield_p_beta(&t).value(),
                },
                stdout,
            )?;
        }
        Command::Simulate {
            assumption,
            classes,
            transition,
            grid,
            n,
            seeds,
            seed,
            learner,
            gd_step,
            gd_iters,
            output,
        } => {
            let (classes, noise) = match transition {
                Some(path) => {
                    let t = load_transition(&path)?;
                    if let Some(c) = classes {
                        if c != t.classes() {
                            bail!(
                                "--classes {c} disagrees with the {}-class transition matrix",
                                t.classes()
                            );
                        }
                    }
                    (t.classes(), NoiseModel::Matrix(t))
                }
                None => (
                    classes.unwrap_or(2),
                    NoiseModel::Uniform {
                        a_grid: grid.a_grid()?,
                    },
                ),
            };
            let learner = match learner {
                LearnerArg::Ideal => Learner::Ideal,
                LearnerArg::Gd => Learner::Gd(GdSettings {
                    step: gd_step,
                    iters: gd_iters,
                }),
            };
            let config = ExperimentConfig {
                assumption: assumption.into(),
                classes,
                noise,
                p_grid: grid.p_grid()?,
                n,
                seeds,
                master_seed: seed,
                learner,
            };
            let rows = run_grid(&config)?;
            write_rows_csv(&rows, open_output(output.as_deref(), stdout)?)?;
        }
        Command::Compare { input } => {
            let file =
                File::open(&input).with_context(|| format!("opening {}", input.display()))?;
            let rows = read_rows_csv(BufReader::new(file))?;
            print_json(&compare_to_theory(&rows)?, stdout)?;
        }
        Command::JensenCheck {
            classes,
            samples,
            seed,
        } => {
            print_json(&jensen_report(classes, samples, seed)?, stdout)?;
        }
    }
    stdout.flush()?;
    Ok(())
}

/// Convenience for `main`: parse, run against the real standard output.
pub fn run_with_stdout(cli: Cli) -> Result<()> {
    let stdout = io::stdout();
    let mut lock = stdout.lock();
    run(cli, &mut lock)
}
