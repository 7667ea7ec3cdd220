use serde_json::Value as Json;

use crate::profile::EngineKindName;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, clap::ValueEnum)]
pub enum OutputFormat {
    #[default]
    Json,
    Table,
}

fn cell(v: &Json) -> String {
    match v {
        Json::String(s) => s.clone(),
        Json::Null => "null".into(),
        other => other.to_string(),
    }
}

/// Fixed-width text table over a query response body.
pub fn table(body: &Json) -> String {
    let header: Vec<String> = body["columns"].as_array().map(|cs| cs.iter().map(|c| cell(&c["name"])).collect()).unwrap_or_default();
    let rows: Vec<Vec<String>> = body["rows"].as_array().map(|rs| rs.iter().map(|r| r.as_array().map(|r| r.iter().map(cell).collect()).unwrap_or_default()).collect()).unwrap_or_default();
    let mut width: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for r in &rows {
        for (i, c) in r.iter().enumerate() {
            if i < width.len() {
                width[i] = width[i].max(c.chars().count());
            }
        }
    }
    let line = |cells: &[String]| {
        cells.iter().enumerate().map(|(i, c)| format!("{c:<w$}", w = width.get(i).copied().unwrap_or(0))).collect::<Vec<_>>().join(" | ").trim_end().to_string()
    };
    let mut out = vec![line(&header), width.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-")];
    out.extend(rows.iter().map(|r| line(r)));
    out.push(format!("({} row{})", rows.len(), if rows.len() == 1 { "" } else { "s" }));
    out.join("\n")
}

pub fn render(body: &Json, format: OutputFormat) -> String {
    match format {
        OutputFormat::Json => body.to_string(),
        OutputFormat::Table => {
            let mut s = table(body);
            if let Some(plan) = body.get("plan") {
                s.push_str("\n\n");
                s.push_str(&serde_json::to_string_pretty(plan).expect("plan is JSON"));
            }
            s
        }
    }
}

pub fn engine_name(k: EngineKindName) -> &'static str {
    match k {
        EngineKindName::Batch => "batch",
        EngineKindName::Oltp => "oltp",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn table_aligns_columns() {
        let body = json!({"columns": [{"name": "name"}, {"name": "n"}], "rows": [["Alice", 10], ["Bo", null]]});
        assert_eq!(table(&body), "name  | n\n------+-----\nAlice | 10\nBo    | null\n(2 rows)");
    }
}
