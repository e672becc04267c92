//! Flag parsing, routing driver, sidecar format and benchmark reports for
//! the `fidls` command-line tool.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use anyhow::{anyhow, bail, Context, Result};
use fidls::circuit::{parse_circuit, Circuit};
use fidls::isomorph::{self, EmbedBudget};
use fidls::search::{
    transform, Allocation, DFilter, FallbackEvent, QFilter, SearchConfig, SwapEvent, TransformResult, ValueFn,
};
use fidls::verify::{check_connectivity, check_equivalence, i_cnot};
use fidls::{ArchGraph, QubitMapping};
use serde::{Deserialize, Serialize};

/// Parses `tokyo`, `rochester`, `sycamore`, `grid:RxC`, `path:N` (or `pathN`)
/// and `file:PATH`.
pub fn load_arch(spec: &str) -> Result<ArchGraph> {
    let ag = match spec {
        "tokyo" => ArchGraph::tokyo(),
        "rochester" => ArchGraph::rochester(),
        "sycamore" => ArchGraph::sycamore(),
        _ => {
            if let Some(dims) = spec.strip_prefix("grid:") {
                let (r, c) = dims
                    .split_once(['x', 'X'])
                    .ok_or_else(|| anyhow!("grid spec `{dims}` should look like 4x5"))?;
                ArchGraph::grid(r.parse()?, c.parse()?)?
            } else if let Some(path) = spec.strip_prefix("file:") {
                let text = fs::read_to_string(path).with_context(|| format!("reading {path}"))?;
                ArchGraph::parse(&text)?
            } else if let Some(n) = spec.strip_prefix("path:").or_else(|| spec.strip_prefix("path")) {
                ArchGraph::path(n.parse().with_context(|| format!("bad path length in `{spec}`"))?)?
            } else {
                bail!("unknown architecture `{spec}`")
            }
        }
    };
    Ok(ag)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum InitSpec {
    Topgraph,
    Wgtgraph,
    Naive,
    Empty,
    Fixed(Vec<(u32, u32)>),
}

impl InitSpec {
    /// `topgraph`, `wgtgraph`, `naive`, `empty` or `fixed:SPEC`, where SPEC
    /// is either inline `q=v` pairs (`fixed:0=2,1=0`) or a file of such pairs.
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "topgraph" => InitSpec::Topgraph,
            "wgtgraph" => InitSpec::Wgtgraph,
            "naive" => InitSpec::Naive,
            "empty" => InitSpec::Empty,
            _ => {
                let Some(body) = s.strip_prefix("fixed:") else {
                    bail!("unknown initial mapping `{s}`");
                };
                let text = if body.contains('=') {
                    body.to_string()
                } else {
                    fs::read_to_string(body).with_context(|| format!("reading mapping file {body}"))?
                };
                InitSpec::Fixed(parse_pairs(&text)?)
            }
        })
    }

    pub fn name(&self) -> String {
        match self {
            InitSpec::Topgraph => "topgraph".into(),
            InitSpec::Wgtgraph => "wgtgraph".into(),
            InitSpec::Naive => "naive".into(),
            InitSpec::Empty => "empty".into(),
            InitSpec::Fixed(p) => {
                let body: Vec<String> = p.iter().map(|(q, v)| format!("{q}={v}")).collect();
                format!("fixed:{}", body.join(","))
            }
        }
    }
}

fn parse_pairs(text: &str) -> Result<Vec<(u32, u32)>> {
    let mut out = Vec::new();
    for item in text.split([',', '\n', ' ', '\t']).map(str::trim).filter(|s| !s.is_empty()) {
        let (q, v) = item
            .split_once('=')
            .ok_or_else(|| anyhow!("mapping entry `{item}` should be q=v"))?;
        out.push((q.trim().parse()?, v.trim().parse()?));
    }
    Ok(out)
}

pub fn parse_filter(s: &str) -> Result<QFilter> {
    Ok(match s.to_ascii_lowercase().as_str() {
        "none" => QFilter::None,
        "q0" => QFilter::Q0,
        "q01" => QFilter::Q01,
        "q01x" => QFilter::Q01x,
        _ => bail!("unknown filter `{s}` (none, q0, q01, q01x)"),
    })
}

/// `dS` or `dS:GAMMA`; gamma defaults to 1.
fn parse_level(s: &str) -> Result<(usize, f64)> {
    let body = s
        .strip_prefix(['d', 'D'])
        .ok_or_else(|| anyhow!("`{s}` should look like d2:0.8"))?;
    let (level, gamma) = match body.split_once(':') {
        Some((l, g)) => (l, g.parse::<f64>().with_context(|| format!("bad discount in `{s}`"))?),
        None => (body, 1.0),
    };
    Ok((level.parse().with_context(|| format!("bad level in `{s}`"))?, gamma))
}

pub fn parse_dfilter(s: &str) -> Result<Option<DFilter>> {
    if s == "off" || s == "none" {
        return Ok(None);
    }
    let (s, gamma) = parse_level(s)?;
    Ok(Some(DFilter { s, gamma }))
}

pub fn parse_value(s: &str) -> Result<ValueFn> {
    if s.eq_ignore_ascii_case("g") {
        return Ok(ValueFn::Gates);
    }
    let (s, gamma) = parse_level(s)?;
    Ok(ValueFn::Distance { s, gamma })
}

fn filter_name(f: QFilter) -> &'static str {
    match f {
        QFilter::None => "none",
        QFilter::Q0 => "q0",
        QFilter::Q01 => "q01",
        QFilter::Q01x => "q01x",
    }
}

fn dfilter_name(d: Option<DFilter>) -> String {
    match d {
        None => "off".into(),
        Some(d) => format!("d{}:{}", d.s, d.gamma),
    }
}

fn value_name(v: ValueFn) -> String {
    match v {
        ValueFn::Gates => "g".into(),
        ValueFn::Distance { s, gamma } => format!("d{s}:{gamma}"),
    }
}

/// Everything needed to route one circuit.
#[derive(Clone, Debug)]
pub struct RouteOptions {
    pub init: InitSpec,
    pub search: SearchConfig,
    pub embed_budget: EmbedBudget,
    pub verify: bool,
}

impl Default for RouteOptions {
    fn default() -> Self {
        RouteOptions {
            init: InitSpec::Topgraph,
            search: SearchConfig::default(),
            embed_budget: EmbedBudget::default(),
            verify: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ConfigEcho {
    pub init: String,
    pub k: usize,
    pub filter: String,
    pub dfilter: String,
    pub value: String,
    pub embed_budget: u64,
}

impl ConfigEcho {
    pub fn new(opts: &RouteOptions) -> Self {
        ConfigEcho {
            init: opts.init.name(),
            k: opts.search.k,
            filter: filter_name(opts.search.q_filter).into(),
            dfilter: dfilter_name(opts.search.d_filter),
            value: value_name(opts.search.value_fn),
            embed_budget: opts.embed_budget.max_backtrack_nodes,
        }
    }

    pub fn label(&self) -> String {
        format!("{}/k{}/{}/{}/{}", self.init, self.k, self.filter, self.dfilter, self.value)
    }
}

#[derive(Debug)]
pub struct Routed {
    pub result: TransformResult,
    pub initial_mapping_time: Duration,
    /// Embedding calls that ran out of budget while building the initial mapping.
    pub inconclusive_embeddings: usize,
    pub equivalence: Option<Result<(), String>>,
    pub connectivity: Option<Result<(), String>>,
}

pub fn initial_mapping(
    circuit: &Circuit,
    ag: &ArchGraph,
    init: &InitSpec,
    budget: EmbedBudget,
) -> Result<(QubitMapping, usize)> {
    Ok(match init {
        InitSpec::Topgraph => {
            let m = isomorph::topgraph_mapping(circuit, ag, budget);
            (m.mapping, m.inconclusive)
        }
        InitSpec::Wgtgraph => {
            let m = isomorph::wgtgraph_mapping(circuit, ag, budget);
            (m.mapping, m.inconclusive)
        }
        InitSpec::Naive => (isomorph::naive_mapping(circuit, ag)?, 0),
        InitSpec::Empty => (isomorph::empty_mapping(circuit, ag), 0),
        InitSpec::Fixed(pairs) => (QubitMapping::from_pairs(circuit.num_qubits, ag.num_nodes(), pairs)?, 0),
    })
}

pub fn route(circuit: &Circuit, ag: &ArchGraph, opts: &RouteOptions) -> Result<Routed> {
    let start = Instant::now();
    let (init, inconclusive) = initial_mapping(circuit, ag, &opts.init, opts.embed_budget)?;
    let initial_mapping_time = start.elapsed();
    let mut search = opts.search.clone();
    if let Some(total) = search.timeout {
        search.timeout = Some(total.saturating_sub(initial_mapping_time));
    }
    let result = transform(circuit, ag, &init, &search)?;
    let (equivalence, connectivity) = if opts.verify {
        (
            Some(check_equivalence(circuit, &result).map_err(|m| m.to_string())),
            Some(check_connectivity(&result.physical, ag).map_err(|m| m.to_string())),
        )
    } else {
        (None, None)
    };
    Ok(Routed {
        result,
        initial_mapping_time,
        inconclusive_embeddings: inconclusive,
        equivalence,
        connectivity,
    })
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct MapEntry {
    pub q: u32,
    pub v: u32,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct AllocEntry {
    pub t: usize,
    pub q: u32,
    pub v: u32,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct SwapEntry {
    pub t: usize,
    pub u: u32,
    pub v: u32,
}

/// JSON written next to each routed circuit.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Sidecar {
    pub circuit: String,
    pub arch: String,
    pub config: ConfigEcho,
    pub logical_qubits: usize,
    pub physical_qubits: usize,
    pub initial_map: Vec<MapEntry>,
    pub final_map: Vec<MapEntry>,
    pub allocations: Vec<AllocEntry>,
    pub swaps: Vec<SwapEntry>,
    pub fallback_swaps: usize,
    pub input_cnots: usize,
    pub added_cnots: usize,
    /// Exact ratio as `num/den`.
    pub r_cnot: String,
    /// Physical circuit file, relative to the sidecar.
    pub physical: String,
}

fn map_entries(m: &QubitMapping) -> Vec<MapEntry> {
    m.pairs().map(|(q, v)| MapEntry { q, v }).collect()
}

impl Sidecar {
    pub fn new(name: &str, arch: &str, opts: &RouteOptions, logical: &Circuit, r: &TransformResult, physical: &str) -> Self {
        Sidecar {
            circuit: name.into(),
            arch: arch.into(),
            config: ConfigEcho::new(opts),
            logical_qubits: logical.num_qubits,
            physical_qubits: r.physical.num_qubits,
            initial_map: map_entries(&r.initial_map),
            final_map: map_entries(&r.final_map),
            allocations: r.allocations.iter().map(|a| AllocEntry { t: a.t, q: a.q, v: a.v }).collect(),
            swaps: r.swaps.iter().map(|s| SwapEntry { t: s.t, u: s.u, v: s.v }).collect(),
            fallback_swaps: r.fallbacks.len(),
            input_cnots: logical.len(),
            added_cnots: r.added_cnots,
            r_cnot: r.r_cnot().map_or("undefined".into(), |x| format!("{}/{}", x.numer(), x.denom())),
            physical: physical.into(),
        }
    }

    /// Rebuilds enough of a routing result to re-run the checks.
    pub fn to_result(&self, physical: Circuit) -> Result<TransformResult> {
        let pairs = |v: &[MapEntry]| v.iter().map(|e| (e.q, e.v)).collect::<Vec<_>>();
        let initial_map = QubitMapping::from_pairs(self.logical_qubits, self.physical_qubits, &pairs(&self.initial_map))?;
        let final_map = QubitMapping::from_pairs(self.logical_qubits, self.physical_qubits, &pairs(&self.final_map))?;
        let mut physical = physical;
        if physical.num_qubits < self.physical_qubits {
            physical.num_qubits = self.physical_qubits;
        }
        Ok(TransformResult {
            physical,
            initial_map,
            final_map,
            allocations: self.allocations.iter().map(|a| Allocation { t: a.t, q: a.q, v: a.v }).collect(),
            swaps: self.swaps.iter().map(|s| SwapEvent { t: s.t, u: s.u, v: s.v }).collect(),
            fallbacks: Vec::<FallbackEvent>::new(),
            added_cnots: self.added_cnots,
            runtime: Duration::ZERO,
        })
    }
}

pub fn circuit_name(path: &Path) -> String {
    path.file_stem().map_or_else(|| "circuit".into(), |s| s.to_string_lossy().into_owned())
}

pub fn read_circuit(path: &Path) -> Result<Circuit> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_circuit(&text).with_context(|| format!("parsing {}", path.display()))
}

/// Writes `<name>.routed.qasm` and `<name>.routed.json` into `dir`.
pub fn write_outputs(dir: &Path, sidecar: &Sidecar, routed: &TransformResult) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let qasm = dir.join(&sidecar.physical);
    fs::write(&qasm, routed.physical.to_qasm())?;
    let json = dir.join(format!("{}.routed.json", sidecar.circuit));
    fs::write(&json, serde_json::to_string_pretty(sidecar)? + "\n")?;
    Ok((qasm, json))
}

/// Each recorded SWAP sits where the trace says, as three alternating CNOTs,
/// and accounts for every added CNOT.
fn check_swap_trace(r: &TransformResult) -> std::result::Result<(), String> {
    if r.added_cnots != 3 * r.swaps.len() {
        return Err(format!("{} added CNOTs for {} SWAPs", r.added_cnots, r.swaps.len()));
    }
    let gates = &r.physical.gates;
    for s in &r.swaps {
        let want = [(s.u, s.v), (s.v, s.u), (s.u, s.v)];
        let got = gates.get(s.t..s.t + 3).map(|g| g.iter().map(|g| (g.control, g.target)).collect::<Vec<_>>());
        if got.as_deref() != Some(&want[..]) {
            return Err(format!("no SWAP({}, {}) at gate {}", s.u, s.v, s.t));
        }
    }
    Ok(())
}

/// Runs both checks on a stored routing. Returns the first failure.
pub fn verify_sidecar(logical: &Circuit, sidecar_path: &Path, ag: &ArchGraph) -> Result<()> {
    let sidecar: Sidecar = serde_json::from_str(&fs::read_to_string(sidecar_path)?)
        .with_context(|| format!("reading {}", sidecar_path.display()))?;
    let base = sidecar_path.parent().unwrap_or(Path::new("."));
    let physical = read_circuit(&base.join(&sidecar.physical))?;
    let result = sidecar.to_result(physical)?;
    check_swap_trace(&result).map_err(|m| anyhow!("swap trace FAIL: {m}"))?;
    check_connectivity(&result.physical, ag).map_err(|m| anyhow!("connectivity FAIL: {m}"))?;
    check_equivalence(logical, &result).map_err(|m| anyhow!("equivalence FAIL: {m}"))?;
    Ok(())
}

/// One row of a benchmark report.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunReport {
    pub circuit: String,
    pub arch: String,
    pub config: String,
    pub qubits: usize,
    pub input_cnots: usize,
    pub added_cnots: usize,
    pub swaps: usize,
    pub output_cnots: usize,
    pub r_cnot: f64,
    pub equivalence: String,
    pub connectivity: String,
    pub status: String,
    pub time_ms: u64,
}

fn verdict(v: &Option<Result<(), String>>) -> String {
    match v {
        None => "skipped".into(),
        Some(Ok(())) => "PASS".into(),
        Some(Err(e)) => format!("FAIL: {e}"),
    }
}

impl RunReport {
    pub fn from_routed(name: &str, arch: &str, opts: &RouteOptions, logical: &Circuit, r: &Routed, timing: bool) -> Self {
        let res = &r.result;
        RunReport {
            circuit: name.into(),
            arch: arch.into(),
            config: ConfigEcho::new(opts).label(),
            qubits: logical.num_qubits,
            input_cnots: logical.len(),
            added_cnots: res.added_cnots,
            swaps: res.swaps.len(),
            output_cnots: res.physical.len(),
            r_cnot: res.r_cnot().map_or(f64::NAN, |x| *x.numer() as f64 / *x.denom() as f64),
            equivalence: verdict(&r.equivalence),
            connectivity: verdict(&r.connectivity),
            status: "ok".into(),
            time_ms: if timing { (r.initial_mapping_time + res.runtime).as_millis() as u64 } else { 0 },
        }
    }

    pub fn failed(name: &str, arch: &str, opts: &RouteOptions, logical: Option<&Circuit>, err: &anyhow::Error) -> Self {
        RunReport {
            circuit: name.into(),
            arch: arch.into(),
            config: ConfigEcho::new(opts).label(),
            qubits: logical.map_or(0, |c| c.num_qubits),
            input_cnots: logical.map_or(0, |c| c.len()),
            added_cnots: 0,
            swaps: 0,
            output_cnots: 0,
            r_cnot: f64::NAN,
            equivalence: "skipped".into(),
            connectivity: "skipped".into(),
            status: format!("error: {err:#}"),
            time_ms: 0,
        }
    }

    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

/// Size class by input CNOT count.
pub fn size_group(input_cnots: usize) -> &'static str {
    match input_cnots {
        0..=99 => "small",
        100..=999 => "medium",
        _ => "large",
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GroupSummary {
    pub arch: String,
    pub config: String,
    pub group: String,
    pub circuits: usize,
    pub input_cnots: u64,
    pub output_cnots: u64,
    /// Exact index as `num/den`.
    pub i_cnot: String,
    pub i_cnot_value: f64,
}

/// Aggregate index per (arch, config) for each size class and overall.
/// Failed rows are left out.
pub fn summarize(rows: &[RunReport]) -> Vec<GroupSummary> {
    let mut keys: Vec<(String, String)> = Vec::new();
    for r in rows {
        let k = (r.arch.clone(), r.config.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut out = Vec::new();
    for (arch, config) in keys {
        for group in ["small", "medium", "large", "all"] {
            let counts: Vec<(u64, u64)> = rows
                .iter()
                .filter(|r| r.ok() && r.arch == arch && r.config == config)
                .filter(|r| group == "all" || size_group(r.input_cnots) == group)
                .map(|r| (r.input_cnots as u64, r.output_cnots as u64))
                .collect();
            let Some(index) = i_cnot(&counts) else { continue };
            out.push(GroupSummary {
                arch: arch.clone(),
                config: config.clone(),
                group: group.into(),
                circuits: counts.len(),
                input_cnots: counts.iter().map(|c| c.0).sum(),
                output_cnots: counts.iter().map(|c| c.1).sum(),
                i_cnot: format!("{}/{}", index.numer(), index.denom()),
                i_cnot_value: *index.numer() as f64 / *index.denom() as f64,
            });
        }
    }
    out
}

pub fn write_csv<W: std::io::Write>(out: W, rows: &[RunReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: std::io::Write>(out: W, rows: &[GroupSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
pub struct BenchJson<'a> {
    pub rows: &'a [RunReport],
    pub summary: &'a [GroupSummary],
}

/// Routes every `(circuit, options)` job, in parallel when available, and
/// returns rows in job order.
pub fn run_jobs(
    jobs: &[(PathBuf, RouteOptions)],
    arch_name: &str,
    ag: &ArchGraph,
    timing: bool,
) -> Vec<RunReport> {
    let one = |(path, opts): &(PathBuf, RouteOptions)| {
        let name = circuit_name(path);
        let circuit = match read_circuit(path) {
            Ok(c) => c,
            Err(e) => return RunReport::failed(&name, arch_name, opts, None, &e),
        };
        match route(&circuit, ag, opts) {
            Ok(r) => RunReport::from_routed(&name, arch_name, opts, &circuit, &r, timing),
            Err(e) => RunReport::failed(&name, arch_name, opts, Some(&circuit), &e),
        }
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        jobs.par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        jobs.iter().map(one).collect()
    }
}

/// `.qasm` files directly inside `dir`, sorted by name.
pub fn list_circuits(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "qasm"))
        .collect();
    files.sort();
    Ok(files)
}
