use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use wasmcg::absint::{analyze, AnalysisConfig};
use wasmcg::callgraph::{build, build_type_baseline, diff, emit_dot, emit_json};
use wasmcg::concrete::{run_with, Outcome, RunConfig, DEFAULT_FUEL};
use wasmcg::frontend::{load, FuncIdx, ValidatedModule};
use wasmcg::harness::{evaluate, evaluate_sequential, load_corpus, BenchConfig};

#[derive(Parser)]
#[command(name = "wasmcg", version, about = "Call graphs for WebAssembly text modules")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the call graph of a module.
    Analyze(AnalyzeArgs),
    /// Run one function with the reference interpreter.
    Exec(ExecArgs),
    /// Check the analysis against the interpreter over a corpus.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Dot,
    Json,
}

#[derive(Args)]
struct DomainFlags {
    /// Largest set of values tracked exactly.
    #[arg(long = "domain-k", default_value_t = wasmcg::domain::DEFAULT_K)]
    k: usize,
    /// Joins at loop heads and summaries before widening.
    #[arg(long, default_value_t = wasmcg::absint::DEFAULT_WIDEN_DELAY)]
    widen_delay: u32,
}

#[derive(Args)]
struct AnalyzeArgs {
    path: PathBuf,
    #[arg(long, value_enum, default_value = "dot")]
    format: Format,
    #[command(flatten)]
    domain: DomainFlags,
    /// Call-string depth: 0 or 1.
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=1))]
    context: u8,
    /// Comma-separated roots (export names, `$id`s or indices) instead of exports and start.
    #[arg(long, value_delimiter = ',')]
    roots: Option<Vec<String>>,
    /// Also treat every table entry as a root.
    #[arg(long)]
    open_tables: bool,
    /// Assume the host calls exports repeatedly on one instance.
    #[arg(long)]
    reentrant: bool,
    /// Print the type-only baseline instead.
    #[arg(long, conflicts_with = "compare")]
    baseline: bool,
    /// Print the edges only the baseline has, and the reverse.
    #[arg(long)]
    compare: bool,
}

#[derive(Args)]
struct ExecArgs {
    path: PathBuf,
    entry: String,
    #[arg(allow_negative_numbers = true)]
    args: Vec<i32>,
    /// Comma-separated arguments, appended after positional ones.
    #[arg(long = "args", value_delimiter = ',', allow_hyphen_values = true)]
    csv_args: Vec<i32>,
    #[arg(long, default_value_t = DEFAULT_FUEL)]
    fuel: u64,
    /// Values imported functions return, cycling across calls.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    imports: Vec<i32>,
}

#[derive(Args)]
struct BenchArgs {
    corpus: PathBuf,
    #[arg(long, default_value = "report.json")]
    out: PathBuf,
    #[command(flatten)]
    domain: DomainFlags,
    /// Evaluate cases on one thread.
    #[arg(long)]
    sequential: bool,
}

fn read_module(path: &Path) -> Result<ValidatedModule> {
    let src = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    load(&src).with_context(|| path.display().to_string())
}

fn resolve(m: &ValidatedModule, key: &str) -> Result<FuncIdx> {
    match m.module().resolve_func(key) {
        Some(f) => Ok(f),
        None => bail!("no function named {key}"),
    }
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<ExitCode> {
    let m = read_module(&a.path)?;
    let roots = match &a.roots {
        Some(keys) => Some(keys.iter().map(|k| resolve(&m, k)).collect::<Result<Vec<_>>>()?),
        None => None,
    };
    let cfg = AnalysisConfig {
        k: a.domain.k,
        widen_delay: a.domain.widen_delay,
        context_depth: a.context,
        roots,
        open_tables: a.open_tables,
        reentrant: a.reentrant,
        ..AnalysisConfig::default()
    };
    let result = analyze(&m, &cfg);
    let graph = build(&m, &result);
    let baseline = build_type_baseline(&m, &result.roots);
    if a.compare {
        let d = diff(&graph, &baseline);
        println!("abstract {} edges, baseline {} edges, {} shared", d.count_a, d.count_b, d.shared.len());
        for e in &d.only_b {
            println!("baseline only: {e}");
        }
        for e in &d.only_a {
            println!("abstract only: {e}");
        }
        return Ok(ExitCode::SUCCESS);
    }
    let shown = if a.baseline { &baseline } else { &graph };
    match a.format {
        Format::Dot => print!("{}", emit_dot(shown)),
        Format::Json => print!("{}", emit_json(shown)),
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_exec(a: ExecArgs) -> Result<ExitCode> {
    let m = read_module(&a.path)?;
    let entry = resolve(&m, &a.entry)?;
    let args: Vec<i32> = a.args.iter().chain(&a.csv_args).copied().collect();
    let cfg = RunConfig { fuel: a.fuel, import_values: a.imports };
    let trace = run_with(&m, entry, &args, &cfg)?;
    let code = match &trace.outcome {
        Outcome::Returned(vals) => {
            println!("{}", vals.iter().map(i32::to_string).collect::<Vec<_>>().join(" "));
            0
        }
        Outcome::Trapped(t) => {
            eprintln!("trap: {t}");
            2
        }
        Outcome::FuelExhausted => {
            eprintln!("fuel exhausted after {} steps", trace.steps);
            3
        }
    };
    for e in &trace.log {
        println!("{e}");
    }
    Ok(ExitCode::from(code))
}

fn cmd_bench(a: BenchArgs) -> Result<ExitCode> {
    let cases = load_corpus(&a.corpus)?;
    let cfg = BenchConfig { k: a.domain.k, widen_delay: a.domain.widen_delay };
    let report = if a.sequential { evaluate_sequential(&cases, &cfg) } else { evaluate(&cases, &cfg) };
    std::fs::write(&a.out, report.to_json()).with_context(|| format!("writing {}", a.out.display()))?;
    print!("{}", report.table());
    if !report.passed() {
        for c in report.cases.iter().filter(|c| !c.sound || !c.within_baseline) {
            eprintln!("{}: missed {:?}, beyond baseline {:?}", c.name, c.missed, c.beyond_baseline);
        }
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => cmd_analyze(a),
        Command::Exec(a) => cmd_exec(a),
        Command::Bench(a) => cmd_bench(a),
    };
    result.unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        ExitCode::FAILURE
    })
}
