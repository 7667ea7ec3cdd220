//! Line-oriented loop. Each statement reads the latest snapshot unless one
//! is pinned with `:snapshot <v>`.

use std::io::{BufRead, IsTerminal, Write};

use serde_json::Value as Json;

use crate::app::{App, QueryRequest};
use crate::format::{render, OutputFormat};
use crate::profile::EngineKindName;

const HELP: &str = "\
:snapshot <v>       pin statements to version v
:snapshot latest    read the newest version again
:backend batch|oltp choose the engine for later statements
:explain <query>    run and print the plans
:update <json>      apply an update batch (mvcc only)
:help               this text
:quit               leave
anything else runs as a Cypher query";

pub fn run(app: &App, input: impl BufRead, mut out: impl Write, mut err: impl Write, format: OutputFormat) -> std::io::Result<()> {
    let interactive = std::io::stdin().is_terminal();
    let mut pinned: Option<u64> = None;
    let mut backend: Option<EngineKindName> = None;
    let prompt = |out: &mut dyn Write| -> std::io::Result<()> {
        if interactive {
            write!(out, "flexgraph> ")?;
            out.flush()?;
        }
        Ok(())
    };
    prompt(&mut out)?;
    for line in input.lines() {
        let line = line?;
        let line = line.trim();
        let (cmd, rest) = line.split_once(char::is_whitespace).map(|(c, r)| (c, r.trim())).unwrap_or((line, ""));
        match cmd {
            "" => {}
            ":quit" | ":q" | ":exit" => break,
            ":help" => writeln!(out, "{HELP}")?,
            ":snapshot" if rest == "latest" => {
                pinned = None;
                writeln!(out, "reading the latest snapshot")?;
            }
            ":snapshot" => match rest.parse::<u64>() {
                Ok(v) => match app.snapshot(Some(v)) {
                    Ok(_) => {
                        pinned = Some(v);
                        writeln!(out, "pinned to version {v}")?;
                    }
                    Err(e) => writeln!(err, "error: {}", e.message())?,
                },
                Err(_) => writeln!(err, "error: :snapshot takes a version number or `latest`")?,
            },
            ":backend" => match rest {
                "batch" => backend = Some(EngineKindName::Batch),
                "oltp" => backend = Some(EngineKindName::Oltp),
                _ => writeln!(err, "error: :backend takes batch or oltp")?,
            },
            ":update" => match serde_json::from_str::<Json>(rest) {
                Ok(body) => match app.update(&body) {
                    Ok(v) => writeln!(out, "committed version {v}")?,
                    Err(e) => writeln!(err, "error: {}", e.message())?,
                },
                Err(e) => writeln!(err, "error: malformed JSON: {e}")?,
            },
            _ => {
                let (text, explain) = if cmd == ":explain" { (rest, true) } else { (line, false) };
                let req = QueryRequest { explain, backend, snapshot_version: pinned, ..QueryRequest::cypher(text) };
                match app.query(&req) {
                    Ok(body) => writeln!(out, "{}", render(&body, format))?,
                    Err(e) => {
                        writeln!(err, "error: {}", e.message())?;
                        if let Some(plan) = e.to_json().get("plan") {
                            writeln!(out, "{}", serde_json::to_string_pretty(plan).expect("plan is JSON"))?;
                        }
                    }
                }
            }
        }
        prompt(&mut out)?;
    }
    Ok(())
}
