//! `coopcheck`: verify SCOOP programs from the command line.

mod print;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use coopcheck::corpus::{default_selection, run_suite, Benchmark, SuiteOptions};
use coopcheck::explorer::{explore, find_counterexample, summarize, summarize_search, ExploreOptions, Report, Strategy};
use coopcheck::model::{dump_model, lower_sources, RootSpec};
use coopcheck::semantics::{ErrorClass, Options};

#[derive(Parser, Debug)]
#[command(name = "coopcheck", version, about = "Explicit-state verifier for SCOOP programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse, lower and explore a program.
    Verify(VerifyArgs),
    /// Write the sources of a benchmark instance to a directory.
    Corpus {
        /// Benchmark instance, e.g. `DP(2,1,bad_eat)`.
        benchmark: String,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Run benchmarks against their expected verdicts.
    Suite {
        /// Benchmark instances; the default selection when empty.
        benchmarks: Vec<String>,
        /// Skip the repeated-run and token-mode comparisons.
        #[arg(long)]
        quick: bool,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Check {
    Deadlock,
    VoidCall,
    Precondition,
    Postcondition,
    DivideByZero,
}

impl Check {
    const ALL: [Check; 5] =
        [Check::Deadlock, Check::VoidCall, Check::Precondition, Check::Postcondition, Check::DivideByZero];

    fn classes(self) -> &'static [ErrorClass] {
        match self {
            Check::Deadlock => &[ErrorClass::Deadlock, ErrorClass::WaitConditionDeadlock],
            Check::VoidCall => &[ErrorClass::VoidCall],
            Check::Precondition => &[ErrorClass::PreconditionFail],
            Check::Postcondition => &[ErrorClass::PostconditionFail],
            Check::DivideByZero => &[ErrorClass::DivideByZero, ErrorClass::IntOverflow],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Mode {
    Full,
    Counterexample,
}

#[derive(clap::Args, Debug)]
struct VerifyArgs {
    /// Source files, or directories searched for `.e` files.
    #[arg(required = true)]
    paths: Vec<PathBuf>,
    /// Root procedure as CLASS.procedure.
    #[arg(long)]
    root: String,
    /// Error checks to report; all when omitted.
    #[arg(long, value_enum, value_delimiter = ',')]
    check: Vec<Check>,
    #[arg(long, default_value = "bfs")]
    strategy: Strategy,
    /// Stop after this many distinct states.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    bound: Option<u64>,
    /// Explore every interleaving, without the token discipline.
    #[arg(long)]
    no_token_opt: bool,
    #[arg(long)]
    no_postconditions: bool,
    #[arg(long, value_enum, default_value = "full")]
    mode: Mode,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Write the first counterexample as JSON lines here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the lowered model here.
    #[arg(long)]
    emit_model: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

const EXIT_OK: u8 = 0;
const EXIT_REACHABLE: u8 = 1;
const EXIT_BOUNDED: u8 = 2;
const EXIT_INPUT: u8 = 3;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(EXIT_INPUT);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let result = match cli.command {
        Command::Verify(args) => verify(&args),
        Command::Corpus { benchmark, out } => write_corpus(&benchmark, &out).map(|_| EXIT_OK),
        Command::Suite { benchmarks, quick, jobs } => suite(&benchmarks, quick, jobs),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn collect_sources(paths: &[PathBuf]) -> Result<Vec<(String, String)>> {
    let mut files = Vec::new();
    for path in paths {
        if path.is_dir() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(path)
                .with_context(|| format!("reading {}", path.display()))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "e"))
                .collect();
            entries.sort();
            files.extend(entries);
        } else {
            files.push(path.clone());
        }
    }
    if files.is_empty() {
        bail!("no `.e` source files found");
    }
    files
        .into_iter()
        .map(|p| {
            let text = std::fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            Ok((p.display().to_string(), text))
        })
        .collect()
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn verify(args: &VerifyArgs) -> Result<u8> {
    let root: RootSpec = args.root.parse().map_err(anyhow::Error::msg)?;
    let sources = collect_sources(&args.paths)?;
    let program = lower_sources(&sources, &root).map_err(|e| anyhow::anyhow!("{e}"))?;
    for w in &program.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(path) = &args.emit_model {
        write_file(path, &dump_model(&program))?;
    }
    let checks: Vec<Check> = if args.check.is_empty() { Check::ALL.to_vec() } else { args.check.clone() };
    let mut requested: Vec<ErrorClass> = checks.iter().flat_map(|c| c.classes().iter().copied()).collect();
    requested.push(ErrorClass::InternalInvariant);
    let opts = ExploreOptions {
        strategy: args.strategy,
        bound: args.bound.map(|b| b as usize),
        engine: Options { postconditions: !args.no_postconditions, token: !args.no_token_opt },
        jobs: args.jobs.max(1),
        ..ExploreOptions::default()
    };
    let report = match args.mode {
        Mode::Full => summarize(&program, &explore(&program, &opts)),
        Mode::Counterexample => {
            let outcome = find_counterexample(&program, &requested, &opts);
            summarize_search(&program, &opts, &requested, &outcome)
        }
    };
    let trace = report.traces.iter().find(|t| t.verdict.error_class().is_some_and(|c| requested.contains(&c)));
    if let (Some(path), Some(trace)) = (&args.trace, trace) {
        write_file(path, &trace.to_jsonl())?;
    }
    if let Some(path) = &args.report {
        write_file(path, &report.to_json())?;
    }
    let inputs: Vec<String> = sources.iter().map(|(name, _)| name.clone()).collect();
    print!("{}", print::print_report(&report, &inputs, &root, &requested, args.trace.as_deref()));
    Ok(exit_code(&report, &requested))
}

fn exit_code(report: &Report, requested: &[ErrorClass]) -> u8 {
    if report.reachable().iter().any(|c| requested.contains(c)) {
        EXIT_REACHABLE
    } else if report.bounded {
        EXIT_BOUNDED
    } else {
        EXIT_OK
    }
}

fn write_corpus(benchmark: &str, out: &Path) -> Result<()> {
    let b: Benchmark = benchmark.parse()?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (name, text) in b.instantiate() {
        let file = Path::new(&name).file_name().context("template name")?;
        write_file(&out.join(file), &text)?;
    }
    let root = b.root();
    println!("{b}: root {}.{}", root.class, root.procedure);
    Ok(())
}

fn suite(names: &[String], quick: bool, jobs: usize) -> Result<u8> {
    let selection = if names.is_empty() {
        default_selection()
    } else {
        names.iter().map(|n| n.parse::<Benchmark>()).collect::<Result<_, _>>()?
    };
    let options = SuiteOptions {
        explore: ExploreOptions { jobs: jobs.max(1), ..ExploreOptions::default() },
        check_determinism: !quick,
        check_token_soundness: !quick,
        ..SuiteOptions::default()
    };
    let report = run_suite(&selection, &options);
    print!("{}", report.render());
    Ok(if report.passed() { EXIT_OK } else { EXIT_REACHABLE })
}
