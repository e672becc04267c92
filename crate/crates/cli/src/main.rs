use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use fidls::isomorph::EmbedBudget;
use fidls::search::SearchConfig;
use fidls_cli::*;

#[derive(Parser)]
#[command(name = "fidls", version, about = "Route CNOT circuits onto qubit coupling graphs")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Route one circuit and write the physical circuit plus a JSON sidecar.
    Route(RouteArgs),
    /// Route every circuit in a directory under one or more configurations.
    Bench(BenchArgs),
    /// Re-check a stored routing against its logical circuit.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct SearchArgs {
    /// tokyo, rochester, sycamore, grid:RxC, path:N or file:PATH
    #[arg(long, default_value = "tokyo")]
    arch: String,
    /// Maximum SWAPs per action.
    #[arg(long, default_value_t = 3)]
    k: usize,
    /// Node budget for each subgraph embedding call.
    #[arg(long, default_value_t = EmbedBudget::default().max_backtrack_nodes)]
    embed_budget: u64,
    /// Cap on fallback SWAPs (default |V| * diameter * gates).
    #[arg(long)]
    fallback_cap: Option<u64>,
    /// Evaluate actions on one thread.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args)]
struct RouteArgs {
    #[arg(long)]
    circuit: PathBuf,
    #[command(flatten)]
    search: SearchArgs,
    /// topgraph, wgtgraph, naive, empty or fixed:q=v,...
    #[arg(long, default_value = "topgraph")]
    init: String,
    /// none, q0, q01 or q01x
    #[arg(long, default_value = "q01")]
    filter: String,
    /// off or dS[:GAMMA]
    #[arg(long, default_value = "d0")]
    dfilter: String,
    /// g or dS:GAMMA
    #[arg(long, default_value = "g")]
    value: String,
    /// Reserved; routing is deterministic.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    no_verify: bool,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Wall-clock limit in seconds.
    #[arg(long)]
    timeout: Option<f64>,
}

#[derive(Args)]
struct BenchArgs {
    /// Directory of .qasm files.
    dir: PathBuf,
    #[command(flatten)]
    search: SearchArgs,
    /// Comma-separated initial mappings.
    #[arg(long, default_value = "topgraph")]
    init: String,
    /// Comma-separated filters.
    #[arg(long, default_value = "q01")]
    filter: String,
    /// Comma-separated D filters.
    #[arg(long, default_value = "d0")]
    dfilter: String,
    /// Comma-separated value functions.
    #[arg(long, default_value = "g")]
    value: String,
    #[arg(long)]
    no_verify: bool,
    /// Per-circuit wall-clock limit in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    /// Format of the report written to stdout when no file is given.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Per-run CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Rows plus summary as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Summary CSV.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Zero the timing column so reports are byte-for-byte reproducible.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    circuit: PathBuf,
    #[arg(long)]
    sidecar: PathBuf,
    #[arg(long, default_value = "tokyo")]
    arch: String,
}

fn search_config(a: &SearchArgs, filter: &str, dfilter: &str, value: &str, timeout: Option<f64>) -> Result<SearchConfig> {
    let cfg = SearchConfig {
        k: a.k,
        q_filter: parse_filter(filter)?,
        d_filter: parse_dfilter(dfilter)?,
        value_fn: parse_value(value)?,
        fallback_cap: a.fallback_cap,
        parallel: !a.sequential,
        timeout: timeout.map(Duration::from_secs_f64),
    };
    cfg.validate()?;
    Ok(cfg)
}

fn list(s: &str) -> Vec<&str> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty()).collect()
}

fn run_route(a: RouteArgs) -> Result<ExitCode> {
    let _ = a.seed;
    let ag = load_arch(&a.search.arch)?;
    let circuit = read_circuit(&a.circuit)?;
    let opts = RouteOptions {
        init: InitSpec::parse(&a.init)?,
        search: search_config(&a.search, &a.filter, &a.dfilter, &a.value, a.timeout)?,
        embed_budget: EmbedBudget { max_backtrack_nodes: a.search.embed_budget },
        verify: !a.no_verify,
    };
    let name = circuit_name(&a.circuit);
    let routed = route(&circuit, &ag, &opts)?;
    let physical = format!("{name}.routed.qasm");
    let sidecar = Sidecar::new(&name, &a.search.arch, &opts, &circuit, &routed.result, &physical);
    write_outputs(&a.out, &sidecar, &routed.result)?;
    let report = RunReport::from_routed(&name, &a.search.arch, &opts, &circuit, &routed, true);
    println!("{}", serde_json::to_string(&report)?);
    if routed.inconclusive_embeddings > 0 {
        eprintln!("note: {} embedding calls ran out of budget", routed.inconclusive_embeddings);
    }
    let failed = matches!(routed.equivalence, Some(Err(_))) || matches!(routed.connectivity, Some(Err(_)));
    Ok(if failed { ExitCode::FAILURE } else { ExitCode::SUCCESS })
}

fn run_bench(a: BenchArgs) -> Result<ExitCode> {
    let ag = load_arch(&a.search.arch)?;
    let circuits = list_circuits(&a.dir)?;
    if circuits.is_empty() {
        bail!("no .qasm files in {}", a.dir.display());
    }
    let budget = EmbedBudget { max_backtrack_nodes: a.search.embed_budget };
    let mut configs = Vec::new();
    for init in list(&a.init) {
        for filter in list(&a.filter) {
            for dfilter in list(&a.dfilter) {
                for value in list(&a.value) {
                    configs.push(RouteOptions {
                        init: InitSpec::parse(init)?,
                        search: search_config(&a.search, filter, dfilter, value, a.timeout)?,
                        embed_budget: budget,
                        verify: !a.no_verify,
                    });
                }
            }
        }
    }
    let jobs: Vec<_> = configs
        .iter()
        .flat_map(|o| circuits.iter().map(move |c| (c.clone(), o.clone())))
        .collect();
    let rows = run_jobs(&jobs, &a.search.arch, &ag, !a.no_timing);
    let summary = summarize(&rows);
    if let Some(p) = &a.csv {
        write_csv(fs::File::create(p).with_context(|| format!("creating {}", p.display()))?, &rows)?;
    }
    if let Some(p) = &a.summary {
        write_summary_csv(fs::File::create(p)?, &summary)?;
    }
    let body = BenchJson { rows: &rows, summary: &summary };
    if let Some(p) = &a.json {
        fs::write(p, serde_json::to_string_pretty(&body)? + "\n")?;
    }
    if a.csv.is_none() && a.json.is_none() {
        match a.format {
            Format::Csv => write_csv(std::io::stdout().lock(), &rows)?,
            Format::Json => println!("{}", serde_json::to_string_pretty(&body)?),
        }
    }
    for s in summary.iter().filter(|s| s.group == "all") {
        eprintln!("{} {} circuits={} I={:.4}", s.arch, s.config, s.circuits, s.i_cnot_value);
    }
    let bad = rows
        .iter()
        .filter(|r| !r.ok() || r.equivalence.starts_with("FAIL") || r.connectivity.starts_with("FAIL"))
        .count();
    if bad > 0 {
        eprintln!("{bad} runs failed");
        return Ok(ExitCode::FAILURE);
    }
    Ok(ExitCode::SUCCESS)
}

fn run_verify(a: VerifyArgs) -> Result<ExitCode> {
    let ag = load_arch(&a.arch)?;
    let circuit = read_circuit(&a.circuit)?;
    match verify_sidecar(&circuit, &a.sidecar, &ag) {
        Ok(()) => {
            println!("PASS");
            Ok(ExitCode::SUCCESS)
        }
        Err(e) => {
            println!("{e:#}");
            Ok(ExitCode::FAILURE)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Route(a) => run_route(a),
        Cmd::Bench(a) => run_bench(a),
        Cmd::Verify(a) => run_verify(a),
    };
    match res {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
