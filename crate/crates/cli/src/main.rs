//! `jamgraph`: generate, extract, index, query and render congestion patterns.
//!
//! Exit codes: 0 success, 1 invalid input, 2 file or index failure, 64 usage.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{ArgGroup, Args, Parser, Subcommand};
use jamgraph::retrieval::{to_json_lines, RankedResult};
use jamgraph::speedmap::synth::scenarios::Family;
use jamgraph::speedmap::{export_csv, export_heatmap, load_csv, load_meta, synth_generate, write_meta, SyntheticSpec};
use jamgraph::{Error, ExtractConfig, GridMeta, PatternRecord, PatternStore, Query, RelationGraph, Result, SimilarityParams, SizeMode, SpeedField};
use jamgraph_server::{router, CorsPolicy, ServerConfig};
use serde_json::json;

#[derive(Parser)]
#[command(name = "jamgraph", version, about = "Content-based retrieval of highway congestion patterns")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic raster with its ground truth
    Gen(GenArgs),
    /// Extract the relation graph of a raster
    Extract(ExtractArgs),
    /// Manage a pattern index
    Index {
        #[command(subcommand)]
        command: IndexCommand,
    },
    /// Rank indexed patterns against a query (JSON lines on stdout)
    Query(QueryArgs),
    /// Write a raster as a PGM heat map
    Render(RenderArgs),
    /// Serve the HTTP API over an index
    Serve(ServeArgs),
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).args(["spec", "scenario"])))]
struct GenArgs {
    /// SyntheticSpec JSON file
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Built-in scenario: single-disturbance, stop-and-go, homogeneous, mixed
    #[arg(long, value_parser = parse_family)]
    scenario: Option<Family>,
    /// Seed for --scenario
    #[arg(long, default_value_t = 0, conflicts_with = "spec")]
    seed: u64,
    /// Output stem: writes <out>.csv, <out>.meta.json and <out>.truth.json
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RasterArgs {
    /// Speed raster CSV (rows = road positions, columns = time steps)
    raster: PathBuf,
    /// Grid metadata JSON [default: <raster stem>.meta.json when present]
    #[arg(long)]
    meta: Option<PathBuf>,
}

#[derive(Args)]
struct ConfigArgs {
    /// ExtractConfig JSON; omitted fields keep their defaults
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    #[command(flatten)]
    raster: RasterArgs,
    #[command(flatten)]
    config: ConfigArgs,
    /// Pattern id [default: raster file stem]
    #[arg(long)]
    id: Option<String>,
    /// Write the graph here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
    /// Indented JSON
    #[arg(long)]
    pretty: bool,
}

#[derive(Subcommand)]
enum IndexCommand {
    /// Add rasters (extracted and stored with the record) or graph JSON files
    Add(IndexAddArgs),
    /// Record count and graph-size histogram
    Stats {
        #[arg(long)]
        index: PathBuf,
    },
}

#[derive(Args)]
struct IndexAddArgs {
    #[arg(long)]
    index: PathBuf,
    /// Raster CSV files
    rasters: Vec<PathBuf>,
    /// Relation graph JSON files (indexed without a raster)
    #[arg(long = "graph")]
    graphs: Vec<PathBuf>,
    /// Pattern id, only with a single input [default: file stem]
    #[arg(long)]
    id: Option<String>,
    /// Grid metadata JSON applied to every raster [default: per-raster sidecar]
    #[arg(long)]
    meta: Option<PathBuf>,
    #[command(flatten)]
    config: ConfigArgs,
}

#[derive(Args)]
struct ParamArgs {
    /// SimilarityParams JSON; the flags below override its fields
    #[arg(long)]
    params: Option<PathBuf>,
    /// Size-difference scale [default: 1]
    #[arg(long, allow_negative_numbers = true)]
    theta_s: Option<f64>,
    /// Weight of the structure-only term, in [0, 1] [default: 0]
    #[arg(long, allow_negative_numbers = true)]
    theta_g: Option<f64>,
    /// Deletion cost scale [default: 1]
    #[arg(long, visible_alias = "theta-d", allow_negative_numbers = true)]
    theta_t: Option<f64>,
    /// Occurrence-difference scale [default: 1]
    #[arg(long, allow_negative_numbers = true)]
    theta_w: Option<f64>,
    /// Weight of child matching [default: 1]
    #[arg(long, allow_negative_numbers = true)]
    theta_i: Option<f64>,
    /// Size logistic coefficients B1,B0 [default: -10,5]
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    beta_size: Option<(f64, f64)>,
    /// Occurrence logistic coefficients B1,B0 [default: 10,-5]
    #[arg(long, value_parser = parse_pair, allow_hyphen_values = true)]
    beta_weight: Option<(f64, f64)>,
    /// Node size attribute: absolute or proportion [default: absolute]
    #[arg(long, value_parser = parse_size_mode)]
    size_mode: Option<SizeMode>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("query_source").required(true).args(["raster", "graph", "pattern_id"])))]
struct QueryArgs {
    #[arg(long)]
    index: PathBuf,
    /// Query by raster CSV
    #[arg(long)]
    raster: Option<PathBuf>,
    /// Grid metadata for --raster [default: <raster stem>.meta.json when present]
    #[arg(long, requires = "raster")]
    meta: Option<PathBuf>,
    /// Query by relation graph JSON
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Query by an indexed pattern
    #[arg(long)]
    pattern_id: Option<String>,
    #[command(flatten)]
    config: ConfigArgs,
    /// Number of results
    #[arg(short, long, default_value_t = 10)]
    k: usize,
    /// Keep candidates whose graph size is within this fraction of the query's [default: no limit]
    #[arg(long, allow_negative_numbers = true)]
    band: Option<f64>,
    #[command(flatten)]
    params: ParamArgs,
    /// Aligned table instead of JSON lines
    #[arg(long)]
    pretty: bool,
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    raster: RasterArgs,
    /// PGM output path
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long)]
    index: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Allowed browser origin, repeatable [default: any origin]
    #[arg(long = "cors-origin")]
    cors_origins: Vec<String>,
    /// Send no CORS headers
    #[arg(long, conflicts_with = "cors_origins")]
    no_cors: bool,
    #[command(flatten)]
    config: ConfigArgs,
}

fn parse_family(s: &str) -> std::result::Result<Family, String> {
    s.parse()
}

fn parse_size_mode(s: &str) -> std::result::Result<SizeMode, String> {
    s.parse()
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected B1,B0, got `{s}`"))?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    Ok((num(a)?, num(b)?))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn sidecar(raster: &Path) -> PathBuf {
    raster.with_extension("meta.json")
}

fn load_raster(raster: &Path, meta: Option<&Path>) -> Result<SpeedField> {
    let meta = match meta {
        Some(p) => load_meta(p)?,
        None if sidecar(raster).exists() => load_meta(sidecar(raster))?,
        None => GridMeta::default(),
    };
    load_csv(raster, &meta)
}

fn extract_config(args: &ConfigArgs) -> Result<ExtractConfig> {
    let cfg: ExtractConfig = match &args.config {
        Some(p) => serde_json::from_str(&read(p)?)?,
        None => ExtractConfig::default(),
    };
    cfg.validate()?;
    Ok(cfg)
}

impl ParamArgs {
    fn resolve(&self) -> Result<SimilarityParams> {
        let mut p: SimilarityParams = match &self.params {
            Some(path) => serde_json::from_str(&read(path)?)?,
            None => SimilarityParams::default(),
        };
        let overrides = [
            (self.theta_s, &mut p.theta_s),
            (self.theta_g, &mut p.theta_g),
            (self.theta_t, &mut p.theta_t),
            (self.theta_w, &mut p.theta_w),
            (self.theta_i, &mut p.theta_i),
        ];
        for (flag, field) in overrides {
            if let Some(v) = flag {
                *field = v;
            }
        }
        if let Some(b) = self.beta_size {
            p.beta_size = b;
        }
        if let Some(b) = self.beta_weight {
            p.beta_weight = b;
        }
        if let Some(m) = self.size_mode {
            p.size_mode = m;
        }
        p.validate()?;
        Ok(p)
    }
}

fn gen(args: &GenArgs) -> Result<()> {
    let spec: SyntheticSpec = match (&args.spec, args.scenario) {
        (Some(p), _) => serde_json::from_str(&read(p)?)?,
        (None, Some(f)) => f.spec(args.seed),
        (None, None) => unreachable!("clap requires a source"),
    };
    let (field, truth) = synth_generate(&spec)?;
    let out = |ext: &str| PathBuf::from(format!("{}.{ext}", args.out.display()));
    let (csv, meta, truth_path) = (out("csv"), out("meta.json"), out("truth.json"));
    export_csv(&field, &csv)?;
    write_meta(field.meta(), &meta)?;
    write(&truth_path, serde_json::to_vec_pretty(&truth)?)?;
    let [b, d, h] = truth.counts();
    println!(
        "{}",
        json!({"raster": csv, "meta": meta, "truth": truth_path, "counts": {"B": b, "D": d, "H": h}})
    );
    Ok(())
}

fn extract(args: &ExtractArgs) -> Result<()> {
    let field = load_raster(&args.raster.raster, args.raster.meta.as_deref())?;
    let id = args.id.clone().unwrap_or_else(|| stem(&args.raster.raster));
    let graph = jamgraph::relgraph::graph_from_field(&field, &extract_config(&args.config)?, &id)?;
    let text = if args.pretty { graph.to_json_pretty() } else { graph.to_json() };
    match &args.out {
        Some(p) => write(p, text + "\n"),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn index_add(args: &IndexAddArgs) -> Result<()> {
    let inputs = args.rasters.len() + args.graphs.len();
    if inputs == 0 {
        return Err(Error::Validation("nothing to add: give raster files or --graph".into()));
    }
    if args.id.is_some() && inputs > 1 {
        return Err(Error::Validation("--id needs exactly one input".into()));
    }
    let cfg = extract_config(&args.config)?;
    let mut store = PatternStore::open_or_create(&args.index)?;
    let id_for = |path: &Path| args.id.clone().unwrap_or_else(|| stem(path));
    let report = |r: &PatternRecord| {
        println!(
            "{}",
            json!({"pattern_id": r.pattern_id, "graph_size": r.graph_size, "summary": r.graph.summary()})
        )
    };
    for path in &args.rasters {
        let field = load_raster(path, args.meta.as_deref())?;
        let record = PatternRecord::from_field(&id_for(path), &field, &cfg)?;
        report(&record);
        store.add(record, Some(&field))?;
    }
    for path in &args.graphs {
        let mut graph = RelationGraph::from_json(&read(path)?)?;
        if let Some(id) = &args.id {
            graph.pattern_id = id.clone();
        }
        let record = PatternRecord::new(graph, Default::default());
        report(&record);
        store.add(record, None)?;
    }
    Ok(())
}

fn index_stats(index: &Path) -> Result<()> {
    let stats = PatternStore::open(index)?.stats();
    println!("{}", serde_json::to_string(&stats)?);
    Ok(())
}

fn print_table(results: &[RankedResult]) {
    let width = results.iter().map(|r| r.pattern_id.len()).max().unwrap_or(0).max("pattern".len());
    println!("{:>4}  {:<width$}  {:>14}", "rank", "pattern", "score");
    for r in results {
        println!("{:>4}  {:<width$}  {:>14.6}", r.rank, r.pattern_id, r.score);
    }
}

fn query(args: &QueryArgs) -> Result<()> {
    let params = args.params.resolve()?;
    let cfg = extract_config(&args.config)?;
    let store = PatternStore::open(&args.index)?;
    let q = if let Some(path) = &args.raster {
        Query::Field(load_raster(path, args.meta.as_deref())?)
    } else if let Some(path) = &args.graph {
        Query::Graph(RelationGraph::from_json(&read(path)?)?)
    } else {
        let id = args.pattern_id.as_deref().expect("clap requires a query source");
        let record = store.get(id).ok_or_else(|| Error::NotFound(id.to_string()))?;
        Query::Graph(record.graph.clone())
    };
    let band = args.band.unwrap_or(f64::INFINITY);
    let results = store.query_topk_with(&q, args.k, &params, band, &cfg)?;
    if args.pretty {
        print_table(&results);
    } else {
        print!("{}", to_json_lines(&results));
    }
    Ok(())
}

fn render(args: &RenderArgs) -> Result<()> {
    let field = load_raster(&args.raster.raster, args.raster.meta.as_deref())?;
    export_heatmap(&field, &args.out)
}

fn serve(args: &ServeArgs) -> Result<()> {
    let store = PatternStore::open(&args.index)?;
    let cors = if args.no_cors {
        CorsPolicy::Disabled
    } else if args.cors_origins.is_empty() {
        CorsPolicy::Any
    } else {
        CorsPolicy::Origins(args.cors_origins.clone())
    };
    let app = router(store, ServerConfig { cors, extract: extract_config(&args.config)? });
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io(&args.index, e))?;
    eprintln!("listening on http://{}", args.addr);
    runtime
        .block_on(jamgraph_server::serve(args.addr, app))
        .map_err(|e| Error::io(args.addr.to_string(), e))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen(a) => gen(&a),
        Command::Extract(a) => extract(&a),
        Command::Index { command: IndexCommand::Add(a) } => index_add(&a),
        Command::Index { command: IndexCommand::Stats { index } } => index_stats(&index),
        Command::Query(a) => query(&a),
        Command::Render(a) => render(&a),
        Command::Serve(a) => serve(&a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_io() { 2 } else { 1 })
        }
    }
}
