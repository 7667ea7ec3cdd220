//! Stage-at-a-time shard-parallel execution. Every operator runs on all
//! shard partitions at once (one scoped worker thread per shard); EXCHANGE
//! moves row batches between workers over channels.

use std::collections::HashMap;
use std::time::Instant;

use crossbeam_channel::unbounded;

use crate::model::Value;
use crate::retrieval::{partition_of, GraphSnapshot};

use super::kernel::{compile_plan, CNode, Kernel, Row};
use super::{set_latency, Backend, ExecError, OpStat, PhysicalPlan, QueryResult, Stats, DEFAULT_BATCH_SIZE};

type Parts = Vec<Vec<Row>>;

struct Run<'a> {
    snap: &'a dyn GraphSnapshot,
    shards: u32,
    batch: usize,
    stats: Vec<OpStat>,
}

impl Run<'_> {
    fn par<T: Send>(&self, parts: Parts, f: impl Fn(u32, Vec<Row>) -> T + Sync) -> Vec<T> {
        if self.shards == 1 {
            return parts.into_iter().map(|p| f(0, p)).collect();
        }
        std::thread::scope(|s| {
            let handles: Vec<_> = parts.into_iter().enumerate().map(|(i, p)| {
                let f = &f;
                s.spawn(move || f(i as u32, p))
            }).collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        })
    }

    fn exec(&mut self, n: &CNode) -> Result<Parts, ExecError> {
        let inputs: Vec<Parts> = n.inputs.iter().map(|c| self.exec(c)).collect::<Result<_, _>>()?;
        let start = Instant::now();
        let shards = self.shards;
        let snap = self.snap;
        let rows_in: u64 = inputs.iter().flatten().map(|p| p.len() as u64).sum();
        let out: Parts = match &n.kernel {
            Kernel::Source(src) => {
                let empty = vec![Vec::new(); shards as usize];
                self.par(empty, |shard, _| src.rows(snap, shard, shards)).into_iter().collect::<Result<_, _>>()?
            }
            Kernel::Stream(k) => {
                let batch = self.batch;
                let input = inputs.into_iter().next().expect("streaming op has an input");
                self.par(input, |_, rows| {
                    let mut out = Vec::with_capacity(rows.len());
                    let mut it = rows.into_iter().peekable();
                    // Row batches bound the working set between allocations.
                    while it.peek().is_some() {
                        for r in it.by_ref().take(batch) {
                            k.apply(r, snap, &mut out);
                        }
                    }
                    out
                })
            }
            Kernel::Exchange(route) => {
                let input = inputs.into_iter().next().expect("exchange has an input");
                self.exchange(input, *route)
            }
            breaker => {
                let gathered: Vec<Vec<Row>> = inputs.into_iter().map(|p| p.into_iter().flatten().collect()).collect();
                let mut out = vec![Vec::new(); shards as usize];
                out[0] = breaker.breaker(gathered, snap);
                out
            }
        };
        let st = &mut self.stats[n.id];
        st.kind = n.kind;
        if !matches!(n.kernel, Kernel::Exchange(_)) {
            st.rows_in = rows_in;
        }
        st.rows_out = out.iter().map(|p| p.len() as u64).sum();
        st.micros = start.elapsed().as_micros() as u64;
        Ok(out)
    }

    fn exchange(&self, input: Parts, route: Option<usize>) -> Parts {
        let shards = self.shards as usize;
        if shards == 1 {
            return input;
        }
        let channels: Vec<_> = (0..shards).map(|_| unbounded::<(usize, usize, Vec<Row>)>()).collect();
        let batch = self.batch;
        std::thread::scope(|s| {
            for (src, rows) in input.into_iter().enumerate() {
                let senders: Vec<_> = channels.iter().map(|(tx, _)| tx.clone()).collect();
                s.spawn(move || {
                    let mut buckets: Vec<Vec<Row>> = vec![Vec::new(); shards];
                    let mut seq = vec![0usize; shards];
                    for r in rows {
                        let dst = match route {
                            Some(c) => match &r[c] {
                                Value::Vertex(v) => partition_of(*v, shards as u32) as usize,
                                _ => 0,
                            },
                            None => 0,
                        };
                        buckets[dst].push(r);
                        if buckets[dst].len() == batch {
                            senders[dst].send((src, seq[dst], std::mem::take(&mut buckets[dst]))).expect("receiver alive");
                            seq[dst] += 1;
                        }
                    }
                    for (dst, b) in buckets.into_iter().enumerate() {
                        if !b.is_empty() {
                            senders[dst].send((src, seq[dst], b)).expect("receiver alive");
                        }
                    }
                });
            }
        });
        channels
            .into_iter()
            .map(|(tx, rx)| {
                drop(tx);
                let mut got: Vec<(usize, usize, Vec<Row>)> = rx.into_iter().collect();
                // Arrival order varies; source order keeps results reproducible.
                got.sort_by_key(|(s, q, _)| (*s, *q));
                got.into_iter().flat_map(|(_, _, b)| b).collect()
            })
            .collect()
    }
}

/// Runs a batch plan over `snap`. The result multiset does not depend on
/// the shard count.
pub fn execute_batch(plan: &PhysicalPlan, snap: &dyn GraphSnapshot, params: &HashMap<String, Value>) -> Result<QueryResult, ExecError> {
    execute_batch_sized(plan, snap, params, DEFAULT_BATCH_SIZE)
}

pub fn execute_batch_sized(
    plan: &PhysicalPlan,
    snap: &dyn GraphSnapshot,
    params: &HashMap<String, Value>,
    batch: usize,
) -> Result<QueryResult, ExecError> {
    if plan.backend != Backend::Batch {
        return Err(ExecError::Op { op: "SINK", cause: "plan was lowered for the OLTP backend".into() });
    }
    let t0 = Instant::now();
    let mut count = 0;
    let root = compile_plan(&plan.root, &plan.graph, params, snap, &mut count)?;
    let mut run = Run { snap, shards: plan.shards, batch: batch.max(1), stats: vec![OpStat::default(); count] };
    let parts = run.exec(&root)?;
    let rows: Vec<Row> = parts.into_iter().flatten().collect();
    let mut stats = Stats {
        rows_emitted: rows.len() as u64,
        intermediate_tuples: run.stats.iter().map(|s| s.rows_in).sum(),
        ops: run.stats,
        ..Stats::default()
    };
    set_latency(&mut stats, t0.elapsed());
    Ok(QueryResult { columns: plan.root.schema.clone(), rows, stats })
}
