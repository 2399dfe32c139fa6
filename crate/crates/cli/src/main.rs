use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pilot_borrow::feasibility::{
    display_months, expected_duration, months_for_probability, recruitment_probability, RateBasis,
    RecruitmentModel,
};
use pilot_borrow::prior::{informative_weight, BetaMixture};
use pilot_borrow::scenario::{emit_results, load_config, run_grid, summary, CellSpec, RunConfig};
use pilot_borrow::sim::{
    estimate_power, find_min_sample_size, replicate_stream, trace_replicate, with_workers,
    SearchOutcome, Workers,
};
use pilot_borrow::Error;

const EXIT_VALIDATION: u8 = 1;
const EXIT_IO: u8 = 2;
const EXIT_FLAGGED: u8 = 3;

#[derive(Parser)]
#[command(
    name = "pilot-borrow",
    version,
    about = "Sample size, duration and recruitment \
    for a two-arm binary-endpoint trial that borrows pilot data through a robust MAP prior"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; supplies defaults for every subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (overrides the configuration file).
    #[arg(long, global = true, env = "PILOT_BORROW_SEED")]
    seed: Option<u64>,
    #[arg(long, global = true)]
    replicates: Option<u64>,
    /// Worker threads: a count or "auto".
    #[arg(long, global = true, value_parser = parse_workers)]
    workers: Option<Workers>,
    /// CSV output path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Args, Clone, Copy)]
struct CellArgs {
    /// Control-arm success probability.
    #[arg(long = "p-c")]
    p_c: f64,
    /// Relative risk of the definitive trial.
    #[arg(long)]
    rr: f64,
    /// Pilot size as a fraction of the definitive total.
    #[arg(long, short = 'f', default_value_t = 0.0)]
    pilot_fraction: f64,
    /// Pilot relative risk as a multiple of the definitive one.
    #[arg(long, short = 'c', default_value_t = 1.0)]
    multiplier: f64,
}

impl CellArgs {
    fn cell(self) -> CellSpec {
        CellSpec {
            p_c: self.p_c,
            rr: self.rr,
            pilot_fraction: self.pilot_fraction,
            rr_pilot_multiplier: self.multiplier,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Power at a given total, or the minimal total reaching the target power.
    Power {
        #[command(flatten)]
        cell: CellArgs,
        /// Estimate power at this total instead of searching.
        #[arg(long)]
        n: Option<u64>,
    },
    /// Run every cell of the configuration and write the CSV.
    Grid,
    /// Sample sizes across pilot relative-risk multipliers.
    Conflict {
        #[arg(long = "p-c")]
        p_c: f64,
        #[arg(long)]
        rr: f64,
        #[arg(long, short = 'f', default_value_t = 0.2)]
        pilot_fraction: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [0.8, 0.85, 0.9, 0.95, 1.0])]
        multipliers: Vec<f64>,
    },
    /// Expected months to accrue n participants.
    Duration {
        #[arg(long)]
        n: u64,
        /// Recruits per month.
        #[arg(long = "rate", value_delimiter = ',', default_values_t = [2.0, 5.0, 10.0])]
        rates: Vec<f64>,
        #[arg(long, value_parser = parse_basis, default_value = "total")]
        basis: RateBasis,
    },
    /// Probability of recruiting n within m months, or months for a probability.
    Recruit {
        #[arg(long)]
        n: u64,
        /// Prior mean recruitment rate per month.
        #[arg(long)]
        lambda0: f64,
        #[arg(
            long,
            required_unless_present = "probability",
            conflicts_with = "probability"
        )]
        months: Option<f64>,
        #[arg(long)]
        probability: Option<f64>,
        #[arg(long, value_parser = parse_basis, default_value = "total")]
        basis: RateBasis,
    },
    /// Print every intermediate quantity of one simulated replicate.
    Replicate {
        #[command(flatten)]
        cell: CellArgs,
        #[arg(long)]
        n: u64,
        /// Replicate index within the power estimate at n.
        #[arg(long, default_value_t = 0)]
        index: u64,
    },
}

fn parse_workers(s: &str) -> Result<Workers, String> {
    if s == "auto" {
        return Ok(Workers::Auto);
    }
    match s.parse::<usize>() {
        Ok(n) if n > 0 => Ok(Workers::Fixed(n)),
        _ => Err(format!("expected a positive count or \"auto\", got {s:?}")),
    }
}

fn parse_basis(s: &str) -> Result<RateBasis, String> {
    match s {
        "total" => Ok(RateBasis::Total),
        "per_arm" | "per-arm" => Ok(RateBasis::PerArm),
        _ => Err(format!("expected \"total\" or \"per_arm\", got {s:?}")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(EXIT_VALIDATION);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Io { .. } => EXIT_IO,
                _ => EXIT_VALIDATION,
            })
        }
    }
}

fn settings(common: &Common) -> pilot_borrow::Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(path) => load_config(path)?,
        None => RunConfig::new(Vec::new()),
    };
    if let Some(seed) = common.seed {
        cfg.master_seed = seed;
    }
    if let Some(r) = common.replicates {
        if r == 0 {
            return Err(Error::Validation {
                field: "replicates".into(),
                reason: "must be at least 1".into(),
            });
        }
        cfg.replicates = r;
    }
    if let Some(w) = common.workers {
        cfg.workers = w;
    }
    if let Some(out) = &common.out {
        cfg.output_path = Some(out.clone());
    }
    Ok(cfg)
}

fn run(cli: Cli) -> pilot_borrow::Result<ExitCode> {
    let mut cfg = settings(&cli.common)?;
    match cli.command {
        Command::Power { cell, n } => {
            let cell = cell.cell();
            let scenario = cfg.scenario(&cell)?;
            if let Some(n) = n {
                let est = with_workers(cfg.workers, || estimate_power(&scenario, n))??;
                println!(
                    "n_total={n} pilot_total={} power={:.4} se={:.4} replicates={}",
                    scenario.pilot_total(n),
                    est.power,
                    est.standard_error,
                    est.replicates
                );
                return Ok(ExitCode::SUCCESS);
            }
            let outcome = with_workers(cfg.workers, || {
                find_min_sample_size(&scenario, cfg.target_power, cfg.n_lo, cfg.n_hi)
            })??;
            match outcome {
                SearchOutcome::Found(r) => {
                    println!(
                        "n_total={} pilot_total={} power={:.4} se={:.4} search_power={:.4}",
                        r.n_total,
                        r.pilot_total,
                        r.power_at_n.power,
                        r.power_at_n.standard_error,
                        r.search_power.power
                    );
                    Ok(ExitCode::SUCCESS)
                }
                SearchOutcome::Unreachable {
                    n_hi,
                    power_at_n_hi,
                } => {
                    println!(
                        "target power {} not reached by n_total={n_hi} (power {:.4})",
                        cfg.target_power, power_at_n_hi.power
                    );
                    Ok(ExitCode::from(EXIT_FLAGGED))
                }
            }
        }
        Command::Grid => {
            if cli.common.config.is_none() {
                return Err(Error::Validation {
                    field: "--config".into(),
                    reason: "the grid subcommand needs a configuration file".into(),
                });
            }
            for w in cfg.warnings() {
                eprintln!("warning: {w}");
            }
            let table = run_grid(&cfg)?;
            let path = cfg
                .output_path
                .clone()
                .unwrap_or_else(|| PathBuf::from("results.csv"));
            emit_results(&table, &path)?;
            Ok(flagged_code(table.has_flagged()))
        }
        Command::Conflict {
            p_c,
            rr,
            pilot_fraction,
            multipliers,
        } => {
            let mut cells = vec![CellSpec {
                p_c,
                rr,
                pilot_fraction: 0.0,
                rr_pilot_multiplier: 1.0,
            }];
            cells.extend(multipliers.iter().map(|&c| CellSpec {
                p_c,
                rr,
                pilot_fraction,
                rr_pilot_multiplier: c,
            }));
            cfg.cells = cells;
            let table = run_grid(&cfg)?;
            match &cfg.output_path {
                Some(path) => emit_results(&table, path)?,
                None => print!("{}", summary(&table)),
            }
            Ok(flagged_code(table.has_flagged()))
        }
        Command::Duration { n, rates, basis } => {
            let needed = basis.recruits_needed(n);
            for rate in rates {
                let months = expected_duration(needed, rate)?;
                println!(
                    "n={needed} rate={rate}/month: {months} months (~{})",
                    display_months(months)
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Recruit {
            n,
            lambda0,
            months,
            probability,
            basis,
        } => {
            let model = RecruitmentModel::new(lambda0)?;
            let needed = basis.recruits_needed(n);
            match (months, probability) {
                (Some(m), _) => {
                    let p = recruitment_probability(&model, needed, m)?;
                    println!("P(recruit {needed} within {m} months | lambda0={lambda0}) = {p:.6}");
                }
                (None, Some(target)) => {
                    let m = months_for_probability(&model, needed, target)?;
                    println!("{m:.2} months to recruit {needed} with probability >= {target}");
                }
                (None, None) => unreachable!("clap requires one of --months, --probability"),
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Replicate { cell, n, index } => {
            let scenario = cfg.scenario(&cell.cell())?;
            let mut rng = replicate_stream(cfg.master_seed, n, index);
            let t = trace_replicate(&scenario, n, &mut rng)?;
            println!(
                "scenario: p_C={} p_T={} pilot p_T={} n_total={} pilot_total={} seed={} replicate={}",
                scenario.p_control(),
                scenario.p_treatment(),
                scenario.p_treatment_pilot(),
                n,
                scenario.pilot_total(n),
                cfg.master_seed,
                index
            );
            println!(
                "pilot draws: control {}/{}  treatment {}/{}",
                t.pilot_control.successes(),
                t.pilot_control.size(),
                t.pilot_treatment.successes(),
                t.pilot_treatment.size()
            );
            println!("prior control:      {}", mixture(&t.prior_control));
            println!("prior treatment:    {}", mixture(&t.prior_treatment));
            println!(
                "definitive draws: control {}/{}  treatment {}/{}",
                t.definitive_control.successes(),
                t.definitive_control.size(),
                t.definitive_treatment.successes(),
                t.definitive_treatment.size()
            );
            println!("posterior control:  {}", mixture(&t.posterior_control));
            println!("posterior treatment: {}", mixture(&t.posterior_treatment));
            println!(
                "informative weight: control {:.6}  treatment {:.6}",
                informative_weight(&t.posterior_control)?,
                informative_weight(&t.posterior_treatment)?
            );
            println!("P(p_T > p_C | data) = {:.6}", t.superiority_probability);
            println!(
                "decision: {} (threshold {})",
                if t.decision {
                    "superior"
                } else {
                    "not superior"
                },
                scenario.rule().phi()
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn flagged_code(flagged: bool) -> ExitCode {
    if flagged {
        ExitCode::from(EXIT_FLAGGED)
    } else {
        ExitCode::SUCCESS
    }
}

fn mixture(m: &BetaMixture) -> String {
    m.components()
        .iter()
        .map(|c| {
            format!(
                "{:.6}·Beta({}, {})",
                c.weight,
                c.params.alpha(),
                c.params.beta()
            )
        })
        .collect::<Vec<_>>()
        .join(" + ")
}
