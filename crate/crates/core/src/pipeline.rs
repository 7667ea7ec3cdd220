//! Parse, optimize, lower and execute in one place, shared by the CLI, the
//! HTTP service and the benches.

use std::collections::HashMap;
use std::sync::OnceLock;

use serde_json::{json, Value as Json};

use crate::frontend::{cypher_parse, steps_to_dag, Diagnostic, Steps};
use crate::ir::LogicalDag;
use crate::model::{PropertyGraphSchema, Value};
use crate::optimizer::{optimize, Catalog, OptError, Optimized, OptimizerConfig};
use crate::retrieval::SnapshotRef;
use crate::runtime::{execute_batch, lower, Backend, ExecError, OltpEngine, PhysicalPlan, QueryResult};

#[derive(Clone, Debug)]
pub enum Query {
    Cypher(String),
    Steps(Steps),
}

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Diagnostic(#[from] Diagnostic),
    #[error(transparent)]
    Optimize(#[from] OptError),
    #[error(transparent)]
    Exec(#[from] ExecError),
}

pub struct Prepared {
    pub logical: LogicalDag,
    pub optimized: Optimized,
    pub plan: PhysicalPlan,
}

impl Prepared {
    pub fn explain(&self) -> Json {
        json!({
            "logical": self.logical.to_json(),
            "optimized": self.optimized.dag.to_json(),
            "physical": self.plan.to_json(),
            "matches": self.optimized.matches.iter().map(|m| json!({
                "order": m.order, "steps": m.steps, "prefix_freq": m.prefix_freq, "cost": m.cost,
            })).collect::<Vec<_>>(),
        })
    }
}

pub struct Pipeline {
    pub catalog: Catalog,
    pub optimizer: OptimizerConfig,
    pub backend: Backend,
    pub shards: u32,
    oltp: OnceLock<OltpEngine>,
}

impl Pipeline {
    pub fn new(catalog: Catalog, backend: Backend, shards: u32) -> Pipeline {
        let shards = shards.max(1);
        Pipeline {
            catalog,
            optimizer: OptimizerConfig { shards, ..OptimizerConfig::default() },
            backend,
            shards,
            oltp: OnceLock::new(),
        }
    }

    pub fn with_optimizer(mut self, cfg: OptimizerConfig) -> Pipeline {
        self.optimizer = OptimizerConfig { shards: self.shards, ..cfg };
        self
    }

    pub fn parse(&self, q: &Query, schema: &PropertyGraphSchema) -> Result<LogicalDag, Diagnostic> {
        match q {
            Query::Cypher(text) => cypher_parse(text, schema),
            Query::Steps(s) => steps_to_dag(s, schema),
        }
    }

    pub fn prepare(&self, logical: LogicalDag, snap: &SnapshotRef, backend: Option<Backend>) -> Result<Prepared, PipelineError> {
        let caps = snap.capabilities();
        let optimized = optimize(&logical, &self.catalog, &caps, &self.optimizer)?;
        let plan = lower(&optimized.dag, &caps, backend.unwrap_or(self.backend), self.shards)?;
        Ok(Prepared { logical, optimized, plan })
    }

    pub fn execute(&self, p: &Prepared, snap: &SnapshotRef, params: &HashMap<String, Value>) -> Result<QueryResult, ExecError> {
        match p.plan.backend {
            Backend::Batch => execute_batch(&p.plan, snap.as_ref(), params),
            Backend::Oltp => self.oltp.get_or_init(|| OltpEngine::new(self.shards)).execute(&p.plan, snap, params),
        }
    }

    pub fn run(&self, q: &Query, snap: &SnapshotRef, params: &HashMap<String, Value>) -> Result<QueryResult, PipelineError> {
        let dag = self.parse(q, snap.schema())?;
        let p = self.prepare(dag, snap, None)?;
        Ok(self.execute(&p, snap, params)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::catalog_build;
    use crate::testkit::g0;

    #[test]
    fn runs_on_both_backends() {
        let snap = g0().snapshot();
        let q = Query::Cypher("MATCH (a:Buyer)-[:Knows]->(b:Buyer)-[:Buy]->(c:Item) RETURN c.price".into());
        for backend in [Backend::Batch, Backend::Oltp] {
            let p = Pipeline::new(catalog_build(snap.as_ref(), 2).unwrap(), backend, 2);
            assert_eq!(p.run(&q, &snap, &HashMap::new()).unwrap().rows.len(), 3);
        }
        let p = Pipeline::new(catalog_build(snap.as_ref(), 2).unwrap(), Backend::Batch, 1);
        assert!(matches!(p.run(&Query::Cypher("MATCH (a:Nope) RETURN a".into()), &snap, &HashMap::new()), Err(PipelineError::Diagnostic(_))));
    }
}
