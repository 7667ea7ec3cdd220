//! A loaded deployment: the store a profile selects, its catalog and the
//! query pipeline. Shared by every CLI command and the HTTP handlers.

use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;
use serde_json::{json, Map, Value as Json};

use flexgraph_core::frontend::{Diagnostic, Steps};
use flexgraph_core::model::{PropertyGraphSchema, Value};
use flexgraph_core::optimizer::catalog::sample_entries;
use flexgraph_core::optimizer::{catalog_build, Catalog};
use flexgraph_core::pipeline::{Pipeline, PipelineError, Query};
use flexgraph_core::retrieval::{GraphStore, SnapshotRef};
use flexgraph_core::runtime::{apply_updates, parse_update, Backend, ExecError};
use flexgraph_core::store::archive::{build_store_from_archive, load_csv, open_archive, ArchiveStore, BuiltStore, CsvSpec, StoreKind};
use flexgraph_core::store::{build_immutable, ImmutableStore, MvccStore};

use crate::error::CliError;
use crate::profile::{EngineKindName, Profile, StoreKindName};

pub enum LoadedStore {
    Immutable(ImmutableStore),
    Mvcc(MvccStore),
    Archive(ArchiveStore),
}

impl LoadedStore {
    pub fn as_store(&self) -> &dyn GraphStore {
        match self {
            LoadedStore::Immutable(s) => s,
            LoadedStore::Mvcc(s) => s,
            LoadedStore::Archive(s) => s,
        }
    }
}

pub fn load_store(profile: &Profile) -> Result<LoadedStore, CliError> {
    profile.validate()?;
    let src = &profile.store.source;
    let data = |e: &dyn std::fmt::Display| CliError::Data(e.to_string());
    let from_csv = |path: &Path| -> Result<_, CliError> {
        let spec = CsvSpec::from_file(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        load_csv(&spec).map_err(|e| data(&e))
    };
    let built = |dir: &Path, kind| build_store_from_archive(dir, kind).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())));
    Ok(match (profile.store.kind, &src.csv_spec, &src.archive_dir) {
        (StoreKindName::Archive, _, Some(dir)) => LoadedStore::Archive(open_archive(dir).map_err(|e| CliError::Data(format!("{}: {e}", dir.display())))?),
        (StoreKindName::Immutable, Some(csv), _) => {
            let (schema, tables) = from_csv(csv)?;
            LoadedStore::Immutable(build_immutable(&schema, &tables).map_err(|e| data(&e))?)
        }
        (StoreKindName::Mvcc, Some(csv), _) => {
            let (schema, tables) = from_csv(csv)?;
            LoadedStore::Mvcc(MvccStore::from_tables(&schema, &tables).map_err(|e| data(&e))?)
        }
        (StoreKindName::Immutable, None, Some(dir)) => match built(dir, StoreKind::Immutable)? {
            BuiltStore::Immutable(s) => LoadedStore::Immutable(s),
            BuiltStore::Mvcc(s) => LoadedStore::Mvcc(s),
        },
        (StoreKindName::Mvcc, None, Some(dir)) => match built(dir, StoreKind::Mvcc)? {
            BuiltStore::Immutable(s) => LoadedStore::Immutable(s),
            BuiltStore::Mvcc(s) => LoadedStore::Mvcc(s),
        },
        _ => return Err(CliError::Config("store source does not fit the store kind".into())),
    })
}

pub fn backend_of(kind: EngineKindName) -> Backend {
    match kind {
        EngineKindName::Batch => Backend::Batch,
        EngineKindName::Oltp => Backend::Oltp,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lang {
    #[default]
    Cypher,
    Steps,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryRequest {
    #[serde(default)]
    pub lang: Lang,
    #[serde(default)]
    pub text: Option<String>,
    #[serde(default)]
    pub steps: Option<Steps>,
    #[serde(default)]
    pub params: Map<String, Json>,
    #[serde(default)]
    pub backend: Option<EngineKindName>,
    #[serde(default)]
    pub explain: bool,
    #[serde(default)]
    pub snapshot_version: Option<u64>,
}

impl QueryRequest {
    pub fn cypher(text: &str) -> QueryRequest {
        QueryRequest { text: Some(text.to_string()), ..QueryRequest::default() }
    }

    pub fn from_json(body: &Json) -> Result<QueryRequest, QueryFailure> {
        serde_json::from_value(body.clone()).map_err(|e| QueryFailure::BadRequest(e.to_string()))
    }

    fn query(&self) -> Result<Query, QueryFailure> {
        match (self.lang, &self.text, &self.steps) {
            (Lang::Cypher, Some(t), _) => Ok(Query::Cypher(t.clone())),
            (Lang::Steps, _, Some(s)) => Ok(Query::Steps(s.clone())),
            (Lang::Cypher, None, _) => Err(QueryFailure::BadRequest("cypher requests need `text`".into())),
            (Lang::Steps, _, None) => Err(QueryFailure::BadRequest("steps requests need `steps`".into())),
        }
    }
}

#[derive(Debug)]
pub enum QueryFailure {
    BadRequest(String),
    Diagnostic(Diagnostic),
    /// Optimization or execution failed; `plan` is set when explain was asked
    /// and planning got that far.
    Failed { message: String, plan: Option<Json> },
}

impl QueryFailure {
    pub fn status(&self) -> u16 {
        match self {
            QueryFailure::BadRequest(_) => 400,
            QueryFailure::Diagnostic(_) | QueryFailure::Failed { .. } => 422,
        }
    }

    pub fn to_json(&self) -> Json {
        match self {
            QueryFailure::BadRequest(m) => json!({"error": {"kind": "bad_request", "message": m}}),
            QueryFailure::Diagnostic(d) => {
                json!({"error": {"kind": "diagnostic", "message": d.message, "line": d.line, "col": d.col}})
            }
            QueryFailure::Failed { message, plan } => {
                let mut o = json!({"error": {"kind": "query", "message": message}});
                if let Some(p) = plan {
                    o["plan"] = p.clone();
                }
                o
            }
        }
    }

    pub fn message(&self) -> String {
        match self {
            QueryFailure::BadRequest(m) | QueryFailure::Failed { message: m, .. } => m.clone(),
            QueryFailure::Diagnostic(d) => d.to_string(),
        }
    }
}

#[derive(Debug)]
pub enum UpdateFailure {
    ReadOnly(String),
    BadRequest(String),
    Rejected(String),
}

impl UpdateFailure {
    pub fn status(&self) -> u16 {
        match self {
            UpdateFailure::ReadOnly(_) => 409,
            UpdateFailure::BadRequest(_) => 400,
            UpdateFailure::Rejected(_) => 422,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            UpdateFailure::ReadOnly(m) | UpdateFailure::BadRequest(m) | UpdateFailure::Rejected(m) => m,
        }
    }
}

pub struct App {
    pub profile: Profile,
    pub store: LoadedStore,
    pub pipeline: Pipeline,
}

impl App {
    pub fn load(profile: Profile) -> Result<App, CliError> {
        let store = load_store(&profile)?;
        let snap = store.as_store().snapshot_latest().map_err(|e| CliError::Data(e.to_string()))?;
        let catalog = match &profile.catalog.path {
            Some(p) if p.exists() => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                let v: Json = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                Catalog::from_json(&v).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            _ => catalog_build(snap.as_ref(), profile.catalog.k).map_err(|e| CliError::Data(e.to_string()))?,
        };
        let pipeline = Pipeline::new(catalog, backend_of(profile.engine.kind), profile.engine.shards);
        Ok(App { profile, store, pipeline })
    }

    pub fn schema(&self) -> &PropertyGraphSchema {
        self.store.as_store().schema()
    }

    pub fn snapshot(&self, version: Option<u64>) -> Result<SnapshotRef, QueryFailure> {
        let store = self.store.as_store();
        let latest = store.snapshot_latest().map_err(|e| QueryFailure::Failed { message: e.to_string(), plan: None })?;
        match version {
            None => Ok(latest),
            Some(v) if v == latest.version() => Ok(latest),
            Some(v) => store.snapshot_at(v).map_err(|e| QueryFailure::BadRequest(format!("snapshot_version {v}: {e}"))),
        }
    }

    /// Runs one request; the JSON is the full response body.
    pub fn query(&self, req: &QueryRequest) -> Result<Json, QueryFailure> {
        let q = req.query()?;
        let snap = self.snapshot(req.snapshot_version)?;
        let params: HashMap<String, Value> = req.params.iter().map(|(k, v)| (k.clone(), Value::from_json(v))).collect();
        let dag = self.pipeline.parse(&q, snap.schema()).map_err(QueryFailure::Diagnostic)?;
        let prepared = self.pipeline.prepare(dag, &snap, req.backend.map(backend_of)).map_err(|e| match e {
            PipelineError::Diagnostic(d) => QueryFailure::Diagnostic(d),
            other => QueryFailure::Failed { message: other.to_string(), plan: None },
        })?;
        let plan = req.explain.then(|| prepared.explain());
        match self.pipeline.execute(&prepared, &snap, &params) {
            Ok(result) => {
                let mut body = result.to_json(snap.schema());
                body["version"] = json!(snap.version());
                if let Some(p) = plan {
                    body["plan"] = p;
                }
                Ok(body)
            }
            Err(e) => Err(QueryFailure::Failed { message: e.to_string(), plan }),
        }
    }

    /// Applies one update batch and returns the new version.
    pub fn update(&self, body: &Json) -> Result<u64, UpdateFailure> {
        let LoadedStore::Mvcc(store) = &self.store else {
            return Err(UpdateFailure::ReadOnly(format!("the {} store is read-only; updates need an mvcc profile", self.store.as_store().kind())));
        };
        let ops = parse_update(body).map_err(|e| UpdateFailure::BadRequest(e.to_string()))?;
        apply_updates(store, ops).map_err(|e| match e {
            ExecError::BadUpdate(m) => UpdateFailure::BadRequest(m),
            other => UpdateFailure::Rejected(other.to_string()),
        })
    }

    pub fn catalog_stats(&self) -> Json {
        let c = &self.pipeline.catalog;
        let sample: Vec<Json> = sample_entries(c, 8).into_iter().map(|(code, n)| json!({"pattern": code, "count": n})).collect();
        json!({"k": c.k, "pattern_count": c.pattern_count(), "sample": sample})
    }

    pub fn schema_json(&self) -> Json {
        serde_json::from_str(&self.schema().to_json()).expect("schema serializes to JSON")
    }
}
