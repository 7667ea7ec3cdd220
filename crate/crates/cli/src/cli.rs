use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value as Json};

use flexgraph_bench::acceptance::{run_all, AcceptanceConfig};
use flexgraph_bench::suites::{bench_edge_scan, bench_qps, bench_rbo_cbo};
use flexgraph_core::analytics::{bfs, pagerank, UNREACHED};
use flexgraph_core::frontend::Steps;
use flexgraph_core::model::VertexRef;
use flexgraph_core::optimizer::catalog_build;
use flexgraph_core::store::archive::{convert_csv_to_archive, Codec, CsvSpec};

use crate::app::{load_store, App, Lang, QueryRequest};
use crate::error::CliError;
use crate::format::{render, OutputFormat};
use crate::profile::{EngineKindName, Profile, Source, StoreKindName, StoreProfile};

#[derive(Parser, Debug)]
#[command(name = "flexgraph", version, about = "Composable graph query engine")]
pub struct Cli {
    #[command(flatten)]
    pub profile: ProfileArgs,
    #[command(subcommand)]
    pub cmd: Cmd,
}

/// Either a profile file or enough flags to build one; flags override the file.
#[derive(Args, Debug, Default)]
pub struct ProfileArgs {
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub store: Option<StoreKindName>,
    #[arg(long, global = true)]
    pub csv_spec: Option<PathBuf>,
    #[arg(long, global = true)]
    pub archive_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub engine: Option<EngineKindName>,
    #[arg(long, global = true)]
    pub shards: Option<u32>,
    #[arg(long, global = true)]
    pub k: Option<u8>,
}

impl ProfileArgs {
    pub fn resolve(&self) -> Result<Profile, CliError> {
        let mut p = match &self.config {
            Some(path) => Profile::from_file(path)?,
            None if self.csv_spec.is_some() || self.archive_dir.is_some() => {
                let kind = match (self.store, &self.archive_dir) {
                    (Some(k), _) => k,
                    (None, Some(_)) => StoreKindName::Archive,
                    (None, None) => StoreKindName::Immutable,
                };
                let source = Source { csv_spec: self.csv_spec.clone(), archive_dir: self.archive_dir.clone() };
                let store = StoreProfile { kind, source };
                Profile { store, engine: Default::default(), catalog: Default::default(), server: Default::default() }
            }
            None => return Err(CliError::Usage("a profile is needed: --config FILE, or --csv-spec / --archive-dir".into())),
        };
        if self.config.is_some() {
            if let Some(k) = self.store {
                p.store.kind = k;
            }
            if self.csv_spec.is_some() || self.archive_dir.is_some() {
                p.store.source = Source { csv_spec: self.csv_spec.clone(), archive_dir: self.archive_dir.clone() };
            }
        }
        if let Some(e) = self.engine {
            p.engine.kind = e;
        }
        if let Some(s) = self.shards {
            p.engine.shards = s;
        }
        if let Some(k) = self.k {
            p.catalog.k = k;
        }
        p.validate()?;
        Ok(p)
    }
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Build the profile's store and print its size.
    Load,
    /// Convert a CSV spec into an archive directory.
    Convert {
        csv_spec_file: PathBuf,
        out_dir: PathBuf,
        #[arg(long, default_value_t = 65_536)]
        chunk_rows: u64,
        #[arg(long, value_enum, default_value_t = CodecArg::Deflate)]
        codec: CodecArg,
    },
    /// Build the pattern catalog and save it as JSON.
    Catalog {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run one query.
    Query {
        #[arg(short = 'q', long = "query")]
        text: Option<String>,
        /// JSON file holding a step list.
        #[arg(long)]
        steps: Option<PathBuf>,
        /// JSON object of parameters.
        #[arg(long)]
        params: Option<String>,
        #[arg(long, value_enum, default_value_t = OutputFormat::Json)]
        format: OutputFormat,
        #[arg(long, value_enum)]
        backend: Option<EngineKindName>,
        #[arg(long)]
        explain: bool,
        #[arg(long)]
        snapshot: Option<u64>,
        /// Update batch (JSON file) applied before the query.
        #[arg(long)]
        update: Option<PathBuf>,
    },
    /// Interactive loop over stdin.
    Repl {
        #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
        format: OutputFormat,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
    /// Run an analytics kernel and write a CSV.
    Analyze {
        #[arg(value_enum)]
        algo: Algo,
        #[arg(long)]
        out: Option<PathBuf>,
        /// BFS source as TYPE:IDX.
        #[arg(long)]
        src: Option<String>,
        #[arg(long, default_value_t = 0.85)]
        damping: f64,
        #[arg(long, default_value_t = 100)]
        iters: usize,
        #[arg(long, default_value_t = 1e-9)]
        tol: f64,
    },
    /// Run a benchmark suite and print JSON reports.
    Bench {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long)]
        edges: Option<usize>,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        shard_counts: Vec<u32>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum CodecArg {
    Raw,
    Deflate,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Algo {
    Pagerank,
    Bfs,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Suite {
    #[value(alias = "edge_scan")]
    EdgeScan,
    Qps,
    #[value(alias = "rbo_cbo")]
    RboCbo,
    Acceptance,
}

/// Parses `args` and runs; returns the exit code.
pub fn main_with(args: impl IntoIterator<Item = String>, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = if code == 0 { write!(out, "{}", e.render()) } else { write!(err, "{}", e.render()) };
            return code;
        }
    };
    match dispatch(cli, out, err) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "{e}");
            e.exit_code()
        }
    }
}

fn io(e: std::io::Error) -> CliError {
    CliError::Data(e.to_string())
}

fn dispatch(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    match cli.cmd {
        Cmd::Load => {
            let app = App::load(cli.profile.resolve()?)?;
            let s = app.schema();
            let c = &app.pipeline.catalog;
            let vertices: serde_json::Map<String, Json> = s.vertex_types.iter().zip(&c.vertex_counts).map(|(t, n)| (t.name.clone(), json!(n))).collect();
            let edges: serde_json::Map<String, Json> = s.edge_types.iter().zip(&c.edge_counts).map(|(t, n)| (t.name.clone(), json!(n))).collect();
            let store = app.store.as_store();
            let version = store.snapshot_latest().map(|s| s.version()).map_err(|e| CliError::Data(e.to_string()))?;
            writeln!(out, "{}", json!({"store": store.kind(), "version": version, "vertices": vertices, "edges": edges})).map_err(io)
        }
        Cmd::Convert { csv_spec_file, out_dir, chunk_rows, codec } => {
            let spec = CsvSpec::from_file(&csv_spec_file).map_err(|e| CliError::Data(format!("{}: {e}", csv_spec_file.display())))?;
            let codec = match codec {
                CodecArg::Raw => Codec::Raw,
                CodecArg::Deflate => Codec::Deflate,
            };
            convert_csv_to_archive(&spec, &out_dir, chunk_rows.max(1), codec).map_err(|e| CliError::Data(e.to_string()))?;
            writeln!(out, "{}", json!({"archive_dir": out_dir})).map_err(io)
        }
        Cmd::Catalog { out: path } => {
            let profile = cli.profile.resolve()?;
            let store = load_store(&profile)?;
            let snap = store.as_store().snapshot_latest().map_err(|e| CliError::Data(e.to_string()))?;
            let c = catalog_build(snap.as_ref(), profile.catalog.k).map_err(|e| CliError::Data(e.to_string()))?;
            let target = path.or(profile.catalog.path);
            if let Some(t) = &target {
                std::fs::write(t, serde_json::to_string_pretty(&c.to_json()).expect("catalog is JSON")).map_err(io)?;
            }
            writeln!(out, "{}", json!({"k": c.k, "pattern_count": c.pattern_count(), "path": target})).map_err(io)
        }
        Cmd::Query { text, steps, params, format, backend, explain, snapshot, update } => {
            let profile = cli.profile.resolve()?;
            if update.is_some() && !profile.accepts_updates() {
                return Err(CliError::Config(format!("updates need an mvcc store; this profile uses {:?}", profile.store.kind).to_lowercase()));
            }
            let req = query_request(text, steps, params, backend, explain, snapshot)?;
            let app = App::load(profile)?;
            if let Some(path) = update {
                let text = std::fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                let body: Json = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
                let v = app.update(&body).map_err(|e| CliError::Data(e.message().to_string()))?;
                writeln!(err, "committed version {v}").map_err(io)?;
            }
            match app.query(&req) {
                Ok(body) => writeln!(out, "{}", render(&body, format)).map_err(io),
                Err(f) => {
                    if let Some(plan) = f.to_json().get("plan") {
                        writeln!(out, "{}", json!({"plan": plan})).map_err(io)?;
                    }
                    Err(CliError::Query(f.message()))
                }
            }
        }
        Cmd::Repl { format } => {
            let app = App::load(cli.profile.resolve()?)?;
            let stdin = std::io::stdin();
            crate::repl::run(&app, stdin.lock(), out, err, format).map_err(io)
        }
        Cmd::Serve { port, host } => {
            let profile = cli.profile.resolve()?;
            let port = port.unwrap_or(profile.server.port);
            let addr: SocketAddr = format!("{host}:{port}").parse().map_err(|e| CliError::Usage(format!("address {host}:{port}: {e}")))?;
            let app = Arc::new(App::load(profile)?);
            let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().map_err(io)?;
            rt.block_on(crate::http::serve(app, addr, |a| {
                let _ = writeln!(out, "listening on http://{a}");
                let _ = out.flush();
            }))
            .map_err(|e| CliError::Config(format!("cannot serve on {addr}: {e}")))
        }
        Cmd::Analyze { algo, out: path, src, damping, iters, tol } => {
            let app = App::load(cli.profile.resolve()?)?;
            let snap = app.snapshot(None).map_err(|e| CliError::Data(e.message()))?;
            let schema = snap.schema();
            let sink: Box<dyn Write> = match &path {
                Some(p) => Box::new(std::fs::File::create(p).map_err(io)?),
                None => Box::new(&mut *out),
            };
            let mut w = csv::Writer::from_writer(sink);
            let data = |e: csv::Error| CliError::Data(e.to_string());
            match algo {
                Algo::Pagerank => {
                    let r = pagerank(snap.as_ref(), damping, iters, tol).map_err(|e| CliError::Data(e.to_string()))?;
                    w.write_record(["vtype", "idx", "score"]).map_err(data)?;
                    for (g, v) in r.space.iter().enumerate() {
                        w.write_record([schema.vertex_type(v.vtype).name.clone(), v.idx.to_string(), r.scores[g].to_string()]).map_err(data)?;
                    }
                }
                Algo::Bfs => {
                    let src = src.ok_or_else(|| CliError::Usage("bfs needs --src TYPE:IDX".into()))?;
                    let (t, i) = src.split_once(':').ok_or_else(|| CliError::Usage("--src takes TYPE:IDX".into()))?;
                    let vtype = schema.vertex_type_id(t).ok_or_else(|| CliError::Usage(format!("unknown vertex type {t}")))?;
                    let idx = i.parse().map_err(|_| CliError::Usage(format!("bad vertex index {i}")))?;
                    let r = bfs(snap.as_ref(), VertexRef { vtype, idx }).map_err(|e| CliError::Usage(e.to_string()))?;
                    w.write_record(["vtype", "idx", "depth"]).map_err(data)?;
                    for (g, v) in r.space.iter().enumerate() {
                        let d = if r.depth[g] == UNREACHED { String::new() } else { r.depth[g].to_string() };
                        w.write_record([schema.vertex_type(v.vtype).name.clone(), v.idx.to_string(), d]).map_err(data)?;
                    }
                }
            }
            w.flush().map_err(io)
        }
        Cmd::Bench { suite, edges, runs, shard_counts } => {
            let reports = match suite {
                Suite::EdgeScan => bench_edge_scan(edges.unwrap_or(1_000_000), runs),
                Suite::RboCbo => bench_rbo_cbo(edges.unwrap_or(100_000), runs),
                Suite::Qps => bench_qps(&shard_counts, edges.unwrap_or(100_000), Duration::from_millis(1000), runs),
                Suite::Acceptance => {
                    let cfg = AcceptanceConfig::default();
                    for o in run_all(&cfg) {
                        writeln!(out, "{}", o.line()).map_err(io)?;
                    }
                    return Ok(());
                }
            };
            writeln!(out, "{}", serde_json::to_string_pretty(&reports).expect("reports are JSON")).map_err(io)
        }
    }
}

fn query_request(text: Option<String>, steps: Option<PathBuf>, params: Option<String>, backend: Option<EngineKindName>, explain: bool, snapshot: Option<u64>) -> Result<QueryRequest, CliError> {
    let params = match params {
        Some(p) => match serde_json::from_str::<Json>(&p) {
            Ok(Json::Object(m)) => m,
            _ => return Err(CliError::Usage("--params takes a JSON object".into())),
        },
        None => Default::default(),
    };
    let base = QueryRequest { params, backend, explain, snapshot_version: snapshot, ..QueryRequest::default() };
    match (text, steps) {
        (Some(t), None) => Ok(QueryRequest { text: Some(t), ..base }),
        (None, Some(path)) => {
            let text = std::fs::read_to_string(&path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            let steps: Steps = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            Ok(QueryRequest { lang: Lang::Steps, steps: Some(steps), ..base })
        }
        _ => Err(CliError::Usage("query takes exactly one of -q TEXT or --steps FILE".into())),
    }
}
