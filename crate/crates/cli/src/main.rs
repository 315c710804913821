//! `cstm`: validate, run, and analyse cohort state-transition models.

use std::fs;
use std::panic;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cstm_core::cea::{calculate_icers, frontier, CeaRow};
use cstm_core::io;
use cstm_core::psa::{run_psa, wtp_grid, DecisionCurves};
use cstm_core::{
    builtin_life_table, builtin_sick_sicker, validate_spec, Error, LifeTable, Model, ModelSpec,
    ModelVariant,
};

const EXIT_VALIDATION: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_INTERNAL: u8 = 4;

#[derive(Parser)]
#[command(name = "cstm", version, about = "Cohort state-transition models for cost-effectiveness analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a specification and every transition array it produces.
    Validate(ModelArgs),
    /// Write traces, survival, prevalence and discounted outcomes per strategy.
    Run {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        out: OutArgs,
        /// Also write each strategy's transition array.
        #[arg(long)]
        export_arrays: bool,
    },
    /// Incremental cost-effectiveness table and efficient frontier.
    Cea {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Probabilistic sensitivity analysis with CEAC, expected loss and EVPI.
    Psa {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        out: OutArgs,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 1000, value_parser = clap::value_parser!(u64).range(1..))]
        samples: u64,
        #[arg(long, default_value_t = 0.0)]
        wtp_min: f64,
        #[arg(long, default_value_t = 200_000.0)]
        wtp_max: f64,
        #[arg(long, default_value_t = 5_000.0)]
        wtp_step: f64,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Model specification (TOML). Defaults to the bundled Sick-Sicker model.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Life table CSV (`age,mortality_rate`). Overrides the one named in the spec.
    #[arg(long)]
    life_table: Option<PathBuf>,
    #[arg(long, default_value = "simtime", value_parser = ["simtime", "tunnels"])]
    variant: String,
}

#[derive(Args)]
struct OutArgs {
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidArgument(_) => EXIT_USAGE,
            Error::DimensionMismatch(_) => EXIT_INTERNAL,
            e if e.is_io() => EXIT_IO,
            _ => EXIT_VALIDATION,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

impl ModelArgs {
    fn variant(&self) -> ModelVariant {
        self.variant.parse().expect("clap restricts the variant")
    }

    /// The spec and the life table it should run against, if one is known.
    fn load(&self) -> CliResult<(ModelSpec, Option<LifeTable>)> {
        let (spec, spec_dir) = match &self.spec {
            None => (builtin_sick_sicker(), None),
            Some(path) => (
                io::read_spec(path).map_err(|e| with_path(e, path))?,
                Some(path.parent().unwrap_or(Path::new(".")).to_path_buf()),
            ),
        };
        let table_path = match (&self.life_table, &spec.life_table, &spec_dir) {
            (Some(p), _, _) => Some(p.clone()),
            (None, Some(name), Some(dir)) => Some(dir.join(name)),
            _ => None,
        };
        let table = match table_path {
            Some(p) => Some(io::read_life_table(&p).map_err(|e| with_path(e, &p))?),
            None if self.spec.is_none() => Some(builtin_life_table()),
            None => None,
        };
        Ok((spec, table))
    }

    fn model(&self) -> CliResult<Model> {
        let (spec, table) = self.load()?;
        let report = validate_spec(&spec, table.as_ref());
        if !report.is_pass() {
            return Err(Failure {
                code: EXIT_VALIDATION,
                message: format!("invalid model specification:\n{report}"),
            });
        }
        let table = table.expect("validation requires a life table");
        Ok(Model::new(spec, table)?)
    }
}

fn with_path(e: Error, path: &Path) -> Failure {
    let mut f = Failure::from(e);
    f.message = format!("{}: {}", path.display(), f.message);
    f
}

fn write(path: PathBuf, f: impl FnOnce(&mut dyn std::io::Write) -> cstm_core::Result<()>) -> CliResult<()> {
    io::write_file(&path, f).map_err(|e| with_path(e, &path))
}

/// `1234567.8` as `$1,234,568`.
fn currency(x: f64) -> String {
    let digits = format!("{:.0}", x.abs());
    let mut out = String::new();
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    format!("{}${out}", if x < 0.0 { "-" } else { "" })
}

fn cmd_validate(args: &ModelArgs) -> CliResult<()> {
    let (spec, table) = args.load()?;
    let report = validate_spec(&spec, table.as_ref());
    println!("{}: {report}", spec.name);
    if report.is_pass() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_VALIDATION,
            message: format!("{} violation(s)", report.violations().len()),
        })
    }
}

fn cmd_run(args: &ModelArgs, out: &Path, export_arrays: bool) -> CliResult<()> {
    let model = args.model()?;
    let variant = args.variant();
    let results = model.evaluate(variant)?;
    for (strategy, res) in model.spec().strategies.iter().zip(&results) {
        let dir = out.join(strategy.slug());
        match &res.expanded_trace {
            Some(expanded) => {
                write(dir.join("trace.csv"), |w| io::write_trace(w, expanded))?;
                write(dir.join("trace_aggregated.csv"), |w| io::write_trace(w, &res.trace))?;
            }
            None => write(dir.join("trace.csv"), |w| io::write_trace(w, &res.trace))?,
        }
        write(dir.join("survival.csv"), |w| io::write_survival(w, &res.survival))?;
        write(dir.join("prevalence.csv"), |w| io::write_prevalence(w, &res.prevalence))?;
        write(dir.join("outcomes.csv"), |w| {
            io::write_outcomes(w, &res.cost_per_cycle, &res.qaly_per_cycle)
        })?;
        if export_arrays {
            let arr = model.transition_array(strategy, variant)?;
            write(dir.join("transitions.csv"), |w| io::write_transition_array(w, &arr))?;
        }
    }
    write(out.join("totals.csv"), |w| io::write_totals(w, &results))?;

    println!("{} ({variant})", model.spec().name);
    println!("{:<24} {:>14} {:>10} {:>10}", "strategy", "cost", "QALYs", "LE");
    for r in &results {
        println!(
            "{:<24} {:>14} {:>10.3} {:>10.3}",
            r.strategy,
            currency(r.total_cost),
            r.total_qaly,
            r.life_expectancy
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn print_cea(rows: &[CeaRow]) {
    let na = |x: Option<f64>, f: &dyn Fn(f64) -> String| x.map_or_else(|| "-".to_string(), f);
    println!(
        "{:<24} {:>14} {:>8} {:>14} {:>8} {:>12} {:>6}",
        "strategy", "cost", "QALYs", "inc. cost", "inc. QALY", "ICER", "status"
    );
    for r in rows {
        println!(
            "{:<24} {:>14} {:>8.3} {:>14} {:>8} {:>12} {:>6}",
            r.strategy,
            currency(r.cost),
            r.effect,
            na(r.inc_cost, &currency),
            na(r.inc_effect, &|x| format!("{x:.3}")),
            na(r.icer, &currency),
            r.status.code()
        );
    }
}

fn cmd_cea(args: &ModelArgs, out: &Path) -> CliResult<()> {
    let model = args.model()?;
    let totals = model.totals(args.variant())?;
    let costs: Vec<f64> = totals.iter().map(|t| t.cost).collect();
    let effects: Vec<f64> = totals.iter().map(|t| t.qaly).collect();
    let names: Vec<&str> = totals.iter().map(|t| t.strategy.as_str()).collect();
    let rows = calculate_icers(&costs, &effects, &names)?;
    write(out.join("cea.csv"), |w| io::write_cea(w, &rows))?;
    write(out.join("frontier.csv"), |w| io::write_frontier(w, &frontier(&rows)))?;
    print_cea(&rows);
    println!("wrote {}", out.display());
    Ok(())
}

struct PsaArgs {
    seed: u64,
    samples: usize,
    wtp: Vec<f64>,
}

fn cmd_psa(args: &ModelArgs, out: &Path, psa: PsaArgs) -> CliResult<()> {
    let model = args.model()?;
    let dists = model.spec().psa.clone().unwrap_or_default();
    let res = run_psa(&model, &dists, psa.samples, psa.seed, args.variant())?;
    let curves = DecisionCurves::compute(&res, &psa.wtp)?;
    write(out.join("psa_samples.csv"), |w| io::write_psa_samples(w, &res))?;
    write(out.join("psa_parameters.csv"), |w| io::write_psa_parameters(w, &res))?;
    write(out.join("ceac.csv"), |w| io::write_ceac(w, &curves))?;
    write(out.join("elc.csv"), |w| io::write_elc(w, &curves))?;
    write(out.join("evpi.csv"), |w| io::write_evpi(w, &curves))?;

    println!("{} samples, seed {}", res.n_samples(), res.seed);
    println!("{:<24} {:>14} {:>10}", "strategy", "mean cost", "mean QALYs");
    for (s, name) in res.strategies.iter().enumerate() {
        println!("{:<24} {:>14} {:>10.3}", name, currency(res.mean_cost(s)), res.mean_effect(s));
    }
    let first = curves.acceptability.ceaf.first().copied().unwrap_or(0);
    println!("optimal at {}: {}", currency(psa.wtp[0]), res.strategies[first]);
    for (wtp, _, to) in curves.ceaf_switches() {
        println!("optimal from {}: {}", currency(wtp), res.strategies[to]);
    }
    if let Some((k, evpi)) = curves
        .loss
        .evpi
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
    {
        println!("max EVPI {} at {}", currency(*evpi), currency(psa.wtp[k]));
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn execute(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Validate(args) => cmd_validate(&args),
        Command::Run {
            model,
            out,
            export_arrays,
        } => cmd_run(&model, &out.out, export_arrays),
        Command::Cea { model, out } => cmd_cea(&model, &out.out),
        Command::Psa {
            model,
            out,
            seed,
            samples,
            wtp_min,
            wtp_max,
            wtp_step,
        } => {
            let wtp = wtp_grid(wtp_min, wtp_max, wtp_step)?;
            let samples = usize::try_from(samples).map_err(|_| Failure {
                code: EXIT_USAGE,
                message: format!("--samples {samples} is too large"),
            })?;
            fs::create_dir_all(&out.out).map_err(|e| with_path(e.into(), &out.out))?;
            cmd_psa(&model, &out.out, PsaArgs { seed, samples, wtp })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match panic::catch_unwind(|| execute(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(f)) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
        Err(_) => ExitCode::from(EXIT_INTERNAL),
    }
}
