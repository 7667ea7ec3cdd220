//! Shared-nothing low-latency engine. Each shard is a thread draining its
//! own mailbox strictly in order; a query becomes messages that hop to the
//! shard owning the next anchor vertex. Breakers and joins run on the
//! calling thread, which acts as the query's coordinator.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Instant;

use crossbeam_channel::{unbounded, Receiver, Sender};
use parking_lot::Mutex;

use crate::model::Value;
use crate::retrieval::{partition_of, SnapshotRef};

use super::kernel::{compile_plan, CNode, Kernel, Row, SourceK, StreamK};
use super::{set_latency, Backend, ExecError, OpStat, PhysicalPlan, QueryResult, Stats};

enum Out {
    Rows(Vec<Row>),
    Done,
}

struct QueryCtx {
    snap: SnapshotRef,
    source: SourceK,
    stream: Vec<StreamK>,
    shards: u32,
    pending: AtomicUsize,
    /// Rows entering each stage; stage 0 is the source.
    counts: Vec<AtomicU64>,
    out: Sender<Out>,
    error: Mutex<Option<ExecError>>,
}

enum Msg {
    Work { ctx: Arc<QueryCtx>, stage: usize, rows: Vec<Row> },
    Stop,
}

pub struct OltpEngine {
    shards: u32,
    mailboxes: Vec<Sender<Msg>>,
    threads: Vec<JoinHandle<()>>,
}

fn forward(ctx: &Arc<QueryCtx>, mut stage: usize, mut rows: Vec<Row>, mailboxes: &[Sender<Msg>]) {
    loop {
        if rows.is_empty() {
            return;
        }
        if stage > ctx.stream.len() {
            ctx.out.send(Out::Rows(rows)).ok();
            return;
        }
        let k = &ctx.stream[stage - 1];
        if let (Some(col), true) = (k.anchor(), ctx.shards > 1) {
            let mut buckets: Vec<Vec<Row>> = vec![Vec::new(); ctx.shards as usize];
            for r in rows {
                let dst = match &r[col] {
                    Value::Vertex(v) => partition_of(*v, ctx.shards) as usize,
                    _ => 0,
                };
                buckets[dst].push(r);
            }
            for (dst, b) in buckets.into_iter().enumerate() {
                if !b.is_empty() {
                    ctx.pending.fetch_add(1, Ordering::SeqCst);
                    mailboxes[dst].send(Msg::Work { ctx: ctx.clone(), stage, rows: b }).expect("shard alive");
                }
            }
            return;
        }
        ctx.counts[stage].fetch_add(rows.len() as u64, Ordering::Relaxed);
        let mut next = Vec::with_capacity(rows.len());
        for r in rows {
            k.apply(r, ctx.snap.as_ref(), &mut next);
        }
        rows = next;
        stage += 1;
    }
}

fn shard_loop(me: u32, rx: Receiver<Msg>, mailboxes: Vec<Sender<Msg>>) {
    for msg in rx {
        let Msg::Work { ctx, stage, rows } = msg else { break };
        let out = if stage == 0 {
            match ctx.source.rows(ctx.snap.as_ref(), me, ctx.shards) {
                Ok(r) => r,
                Err(e) => {
                    ctx.error.lock().get_or_insert(e);
                    Vec::new()
                }
            }
        } else {
            ctx.counts[stage].fetch_add(rows.len() as u64, Ordering::Relaxed);
            let k = &ctx.stream[stage - 1];
            let mut out = Vec::with_capacity(rows.len());
            for r in rows {
                k.apply(r, ctx.snap.as_ref(), &mut out);
            }
            out
        };
        forward(&ctx, stage + 1, out, &mailboxes);
        if ctx.pending.fetch_sub(1, Ordering::SeqCst) == 1 {
            ctx.out.send(Out::Done).ok();
        }
    }
}

/// Coordinator-side view of a compiled plan.
enum Task {
    /// A SOURCE followed by streaming ops; runs on the shards.
    Dispatch { source: SourceK, stream: Vec<StreamK>, ids: Vec<usize>, kinds: Vec<&'static str> },
    Local { kernel: Kernel, id: usize, kind: &'static str, inputs: Vec<Task> },
}

fn is_chain(n: &CNode) -> bool {
    match &n.kernel {
        Kernel::Source(_) => true,
        Kernel::Stream(_) => n.inputs.len() == 1 && is_chain(&n.inputs[0]),
        _ => false,
    }
}

fn to_task(n: CNode) -> Task {
    if is_chain(&n) {
        let mut stream = Vec::new();
        let mut ids = Vec::new();
        let mut kinds = Vec::new();
        let mut cur = n;
        loop {
            ids.push(cur.id);
            kinds.push(cur.kind);
            match cur.kernel {
                Kernel::Source(source) => {
                    stream.reverse();
                    ids.reverse();
                    kinds.reverse();
                    return Task::Dispatch { source, stream, ids, kinds };
                }
                Kernel::Stream(k) => {
                    stream.push(k);
                    cur = cur.inputs.into_iter().next().expect("chain input");
                }
                _ => unreachable!("checked by is_chain"),
            }
        }
    }
    Task::Local { kernel: n.kernel, id: n.id, kind: n.kind, inputs: n.inputs.into_iter().map(to_task).collect() }
}

impl OltpEngine {
    pub fn new(shards: u32) -> OltpEngine {
        let shards = shards.max(1);
        let (txs, rxs): (Vec<_>, Vec<_>) = (0..shards).map(|_| unbounded::<Msg>()).unzip();
        let threads = rxs
            .into_iter()
            .enumerate()
            .map(|(i, rx)| {
                let boxes = txs.clone();
                std::thread::Builder::new()
                    .name(format!("shard-{i}"))
                    .spawn(move || shard_loop(i as u32, rx, boxes))
                    .expect("spawn shard thread")
            })
            .collect();
        OltpEngine { shards, mailboxes: txs, threads }
    }

    pub fn shards(&self) -> u32 {
        self.shards
    }

    fn dispatch(&self, ctx: QueryCtx, rx: Receiver<Out>) -> Result<(Vec<Row>, Vec<u64>), ExecError> {
        let seeds: Vec<u32> = match ctx.source.point_owner(ctx.snap.as_ref(), self.shards) {
            Some(Some(owner)) => vec![owner],
            Some(None) => vec![],
            None => (0..self.shards).collect(),
        };
        let n = ctx.counts.len();
        if seeds.is_empty() {
            return Ok((Vec::new(), vec![0; n]));
        }
        ctx.pending.store(seeds.len(), Ordering::SeqCst);
        let ctx = Arc::new(ctx);
        for s in seeds {
            self.mailboxes[s as usize].send(Msg::Work { ctx: ctx.clone(), stage: 0, rows: Vec::new() }).expect("shard alive");
        }
        let mut rows = Vec::new();
        for m in rx.iter() {
            match m {
                Out::Rows(r) => rows.extend(r),
                Out::Done => break,
            }
        }
        if let Some(e) = ctx.error.lock().take() {
            return Err(e);
        }
        Ok((rows, ctx.counts.iter().map(|c| c.load(Ordering::Relaxed)).collect()))
    }

    fn run(&self, t: Task, snap: &SnapshotRef, stats: &mut [OpStat]) -> Result<Vec<Row>, ExecError> {
        match t {
            Task::Dispatch { source, stream, ids, kinds } => {
                let start = Instant::now();
                let (tx, rx) = unbounded();
                let ctx = QueryCtx {
                    snap: snap.clone(),
                    source,
                    counts: (0..=stream.len()).map(|_| AtomicU64::new(0)).collect(),
                    stream,
                    shards: self.shards,
                    pending: AtomicUsize::new(0),
                    out: tx,
                    error: Mutex::new(None),
                };
                let (rows, counts) = self.dispatch(ctx, rx)?;
                let micros = start.elapsed().as_micros() as u64;
                for (i, id) in ids.iter().enumerate() {
                    stats[*id] = OpStat { kind: kinds[i], rows_in: counts[i], rows_out: 0, micros: if i == 0 { micros } else { 0 } };
                }
                if let Some(&last) = ids.last() {
                    stats[last].rows_out = rows.len() as u64;
                }
                Ok(rows)
            }
            Task::Local { kernel, id, kind, inputs } => {
                let inputs: Vec<Vec<Row>> = inputs.into_iter().map(|i| self.run(i, snap, stats)).collect::<Result<_, _>>()?;
                let start = Instant::now();
                let rows_in = inputs.iter().map(|r| r.len() as u64).sum();
                let out = match &kernel {
                    Kernel::Stream(k) => {
                        let mut out = Vec::new();
                        for r in inputs.into_iter().flatten() {
                            k.apply(r, snap.as_ref(), &mut out);
                        }
                        out
                    }
                    Kernel::Source(_) => unreachable!("sources are dispatched"),
                    other => other.breaker(inputs, snap.as_ref()),
                };
                stats[id] = OpStat { kind, rows_in, rows_out: out.len() as u64, micros: start.elapsed().as_micros() as u64 };
                Ok(out)
            }
        }
    }

    /// Runs one query; any number of threads may call this concurrently.
    /// The snapshot is pinned for the whole query.
    pub fn execute(&self, plan: &PhysicalPlan, snap: &SnapshotRef, params: &HashMap<String, Value>) -> Result<QueryResult, ExecError> {
        if plan.backend != Backend::Oltp {
            return Err(ExecError::Op { op: "SINK", cause: "plan was lowered for the batch backend".into() });
        }
        let t0 = Instant::now();
        let mut count = 0;
        let root = compile_plan(&plan.root, &plan.graph, params, snap.as_ref(), &mut count)?;
        let mut ops = vec![OpStat::default(); count];
        let rows = self.run(to_task(root), snap, &mut ops)?;
        let mut stats =
            Stats { rows_emitted: rows.len() as u64, intermediate_tuples: ops.iter().map(|s| s.rows_in).sum(), ops, ..Stats::default() };
        set_latency(&mut stats, t0.elapsed());
        Ok(QueryResult { columns: plan.root.schema.clone(), rows, stats })
    }
}

impl Drop for OltpEngine {
    fn drop(&mut self) {
        for m in &self.mailboxes {
            m.send(Msg::Stop).ok();
        }
        for t in self.threads.drain(..) {
            t.join().ok();
        }
    }
}
