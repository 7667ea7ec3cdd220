//! CSV ingestion driven by a JSON mapping file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{write_archive, Codec};
use crate::model::{DataType, PropertyGraphSchema, Value};
use crate::store::{build_immutable, EdgeRow, GraphTables, StoreError};

/// Where the schema comes from: a path relative to the spec file, or inline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SchemaSource {
    File(String),
    Inline(PropertyGraphSchema),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VertexFileSpec {
    pub file: String,
    #[serde(rename = "type")]
    pub vtype: String,
    /// Header names; each names a property of `type`. Unlisted properties load as null.
    pub columns: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EdgeFileSpec {
    pub file: String,
    #[serde(rename = "type")]
    pub etype: String,
    pub src_col: String,
    pub dst_col: String,
    #[serde(default)]
    pub columns: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CsvSpec {
    pub schema: SchemaSource,
    pub vertices: Vec<VertexFileSpec>,
    pub edges: Vec<EdgeFileSpec>,
    /// Directory that relative file names resolve against.
    #[serde(skip)]
    pub base: PathBuf,
}

impl CsvSpec {
    pub fn from_file(path: &Path) -> Result<CsvSpec, StoreError> {
        let text = fs::read_to_string(path)?;
        let mut spec: CsvSpec = serde_json::from_str(&text).map_err(|e| StoreError::Meta(format!("csv spec: {e}")))?;
        spec.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(spec)
    }

    pub fn schema(&self) -> Result<PropertyGraphSchema, StoreError> {
        let schema = match &self.schema {
            SchemaSource::Inline(s) => s.clone(),
            SchemaSource::File(f) => {
                let text = fs::read_to_string(self.base.join(f))?;
                PropertyGraphSchema::from_json(&text).map_err(|e| StoreError::Meta(format!("schema: {e}")))?
            }
        };
        schema.validate()?;
        Ok(schema)
    }
}

fn parse_field(raw: &str, dtype: &DataType, line: u64, column: &str) -> Result<Value, StoreError> {
    if raw.is_empty() {
        return Ok(Value::Null);
    }
    let bad = || StoreError::CsvParse { line, message: format!("column {column}: cannot parse '{raw}' as {dtype}") };
    Ok(match dtype {
        DataType::Bool => match raw {
            "true" => Value::Bool(true),
            "false" => Value::Bool(false),
            _ => return Err(bad()),
        },
        DataType::Int64 => Value::Int64(raw.trim().parse().map_err(|_| bad())?),
        DataType::Float64 => Value::Float64(raw.trim().parse().map_err(|_| bad())?),
        DataType::String => Value::str(raw),
        _ => return Err(bad()),
    })
}

fn csv_error(e: csv::Error) -> StoreError {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.kind() {
        csv::ErrorKind::Io(_) => StoreError::Io(std::io::Error::other(e.to_string())),
        _ => StoreError::CsvParse { line, message: e.to_string() },
    }
}

struct CsvFile {
    header: Vec<String>,
    reader: csv::Reader<fs::File>,
    path: String,
}

impl CsvFile {
    fn open(path: &Path) -> Result<CsvFile, StoreError> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_path(path).map_err(csv_error)?;
        let header = reader.headers().map_err(csv_error)?.iter().map(str::to_string).collect();
        Ok(CsvFile { header, reader, path: path.display().to_string() })
    }

    fn column(&self, name: &str) -> Result<usize, StoreError> {
        self.header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| StoreError::SchemaMismatch(format!("{}: no column '{name}'", self.path)))
    }
}

/// Reads every CSV named by the spec into loader tables.
pub fn load_csv(spec: &CsvSpec) -> Result<(PropertyGraphSchema, GraphTables), StoreError> {
    let schema = spec.schema()?;
    let mut tables = GraphTables::default();
    for vf in &spec.vertices {
        let vt = schema
            .vertex_type_id(&vf.vtype)
            .ok_or_else(|| StoreError::SchemaMismatch(format!("unknown vertex type '{}'", vf.vtype)))?;
        let decl = schema.vertex_type(vt).clone();
        let mut file = CsvFile::open(&spec.base.join(&vf.file))?;
        let mut mapping = Vec::new();
        for name in &vf.columns {
            let p = schema
                .vertex_prop_index(vt, name)
                .ok_or_else(|| StoreError::SchemaMismatch(format!("{} has no property '{name}'", vf.vtype)))?;
            mapping.push((file.column(name)?, p));
        }
        let rows = tables.vertex_rows(&vf.vtype);
        let mut record = csv::StringRecord::new();
        while file.reader.read_record(&mut record).map_err(csv_error)? {
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let mut row = vec![Value::Null; decl.properties.len()];
            for &(col, p) in &mapping {
                row[p] = parse_field(&record[col], &decl.properties[p].dtype, line, &decl.properties[p].name)?;
            }
            rows.push(row);
        }
    }
    for ef in &spec.edges {
        let et = schema
            .edge_type_id(&ef.etype)
            .ok_or_else(|| StoreError::SchemaMismatch(format!("unknown edge type '{}'", ef.etype)))?;
        let decl = schema.edge_type(et).clone();
        let (src_t, dst_t) = schema.edge_endpoints(et);
        let src_dtype = pk_dtype(&schema, src_t);
        let dst_dtype = pk_dtype(&schema, dst_t);
        let mut file = CsvFile::open(&spec.base.join(&ef.file))?;
        let (sc, dc) = (file.column(&ef.src_col)?, file.column(&ef.dst_col)?);
        let mut mapping = Vec::new();
        for name in &ef.columns {
            let p = schema
                .edge_prop_index(et, name)
                .ok_or_else(|| StoreError::SchemaMismatch(format!("{} has no property '{name}'", ef.etype)))?;
            mapping.push((file.column(name)?, p));
        }
        let rows = tables.edge_rows(&ef.etype);
        let mut record = csv::StringRecord::new();
        while file.reader.read_record(&mut record).map_err(csv_error)? {
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let mut props = vec![Value::Null; decl.properties.len()];
            for &(col, p) in &mapping {
                props[p] = parse_field(&record[col], &decl.properties[p].dtype, line, &decl.properties[p].name)?;
            }
            rows.push(EdgeRow {
                src: parse_field(&record[sc], &src_dtype, line, &ef.src_col)?,
                dst: parse_field(&record[dc], &dst_dtype, line, &ef.dst_col)?,
                props,
            });
        }
    }
    Ok((schema, tables))
}

fn pk_dtype(schema: &PropertyGraphSchema, vt: u32) -> DataType {
    schema.vertex_type(vt).properties[schema.pk_index(vt)].dtype.clone()
}

/// CSV files to archive, going through an immutable build so ids and edge
/// order are canonical.
pub fn convert_csv_to_archive(spec: &CsvSpec, dir: &Path, chunk_size: u64, codec: Codec) -> Result<Vec<String>, StoreError> {
    let (schema, tables) = load_csv(spec)?;
    let store = build_immutable(&schema, &tables)?;
    write_archive(store.snapshot().as_ref(), dir, chunk_size, codec)
}

fn raw_field(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::Bool(b) => b.to_string(),
        Value::Int64(i) => i.to_string(),
        Value::Float64(f) => f.to_string(),
        Value::String(s) => s.to_string(),
        other => other.to_string(),
    }
}

/// Writes loader tables as one CSV per type plus `schema.json` and
/// `spec.json` into `dir`; returns the spec ready for [`load_csv`].
pub fn write_csv(schema: &PropertyGraphSchema, tables: &GraphTables, dir: &Path) -> Result<CsvSpec, StoreError> {
    fs::create_dir_all(dir)?;
    let meta = |e: serde_json::Error| StoreError::Meta(e.to_string());
    fs::write(dir.join("schema.json"), serde_json::to_string_pretty(schema).map_err(meta)?)?;
    let csv_err = |e: csv::Error| StoreError::Io(std::io::Error::other(e.to_string()));
    let mut spec = CsvSpec { schema: SchemaSource::File("schema.json".into()), vertices: vec![], edges: vec![], base: dir.to_path_buf() };
    for vt in &schema.vertex_types {
        let file = format!("{}.csv", vt.name.to_lowercase());
        let columns: Vec<String> = vt.properties.iter().map(|p| p.name.clone()).collect();
        let mut w = csv::Writer::from_path(dir.join(&file)).map_err(csv_err)?;
        w.write_record(&columns).map_err(csv_err)?;
        for t in tables.vertices.iter().filter(|t| t.vtype == vt.name) {
            for row in &t.rows {
                w.write_record(row.iter().map(raw_field)).map_err(csv_err)?;
            }
        }
        w.flush()?;
        spec.vertices.push(VertexFileSpec { file, vtype: vt.name.clone(), columns });
    }
    for et in &schema.edge_types {
        let file = format!("{}.csv", et.name.to_lowercase());
        let columns: Vec<String> = et.properties.iter().map(|p| p.name.clone()).collect();
        let mut w = csv::Writer::from_path(dir.join(&file)).map_err(csv_err)?;
        let header = ["_src".to_string(), "_dst".to_string()].into_iter().chain(columns.iter().cloned());
        w.write_record(header).map_err(csv_err)?;
        for t in tables.edges.iter().filter(|t| t.etype == et.name) {
            for r in &t.rows {
                let fields = [raw_field(&r.src), raw_field(&r.dst)].into_iter().chain(r.props.iter().map(raw_field));
                w.write_record(fields).map_err(csv_err)?;
            }
        }
        w.flush()?;
        spec.edges.push(EdgeFileSpec { file, etype: et.name.clone(), src_col: "_src".into(), dst_col: "_dst".into(), columns });
    }
    fs::write(dir.join("spec.json"), serde_json::to_string_pretty(&spec).map_err(meta)?)?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::{g0, g0_schema};

    #[test]
    fn exported_csv_reloads_identically() {
        let dir = tempfile::tempdir().unwrap();
        let tables = crate::testkit::random_tables(5, 60, 200);
        let spec = write_csv(&crate::testkit::random_schema(), &tables, dir.path()).unwrap();
        let (schema, back) = load_csv(&CsvSpec::from_file(&dir.path().join("spec.json")).unwrap()).unwrap();
        assert_eq!(schema, crate::testkit::random_schema());
        assert_eq!(spec.vertices.len(), 3);
        for t in &tables.vertices {
            let b = back.vertices.iter().find(|x| x.vtype == t.vtype).unwrap();
            assert_eq!(b.rows, t.rows);
        }
        for t in &tables.edges {
            let b = back.edges.iter().find(|x| x.etype == t.etype).unwrap();
            assert_eq!(b.rows, t.rows);
        }
    }

    fn write_g0_csvs(dir: &Path) -> CsvSpec {
        fs::write(dir.join("buyer.csv"), "username,credits\nA1,10\nB2,5\nC3,8\n").unwrap();
        fs::write(dir.join("item.csv"), "id,price,discount\n1,100.0,0.1\n2,50.0,0.0\n").unwrap();
        fs::write(dir.join("seller.csv"), "id,rating\n1,4.5\n").unwrap();
        fs::write(dir.join("knows.csv"), "src,dst\nA1,B2\nB2,C3\n").unwrap();
        fs::write(dir.join("buy.csv"), "src,dst,date\nA1,1,1\nB2,1,2\nB2,2,3\nC3,2,9\n").unwrap();
        fs::write(dir.join("sell.csv"), "src,dst\n1,1\n1,2\n").unwrap();
        fs::write(dir.join("schema.json"), g0_schema().to_json()).unwrap();
        let text = r#"{
            "schema": "schema.json",
            "vertices": [
                {"file": "buyer.csv", "type": "Buyer", "columns": ["username", "credits"]},
                {"file": "item.csv", "type": "Item", "columns": ["id", "price", "discount"]},
                {"file": "seller.csv", "type": "Seller", "columns": ["id", "rating"]}
            ],
            "edges": [
                {"file": "knows.csv", "type": "Knows", "src_col": "src", "dst_col": "dst", "columns": []},
                {"file": "buy.csv", "type": "Buy", "src_col": "src", "dst_col": "dst", "columns": ["date"]},
                {"file": "sell.csv", "type": "Sell", "src_col": "src", "dst_col": "dst", "columns": []}
            ]
        }"#;
        fs::write(dir.join("spec.json"), text).unwrap();
        CsvSpec::from_file(&dir.join("spec.json")).unwrap()
    }

    #[test]
    fn csv_to_archive_equals_direct_build() {
        let tmp = tempfile::tempdir().unwrap();
        let spec = write_g0_csvs(tmp.path());
        let (_, tables) = load_csv(&spec).unwrap();
        assert_eq!(tables, crate::testkit::g0_tables());
        let a = tmp.path().join("a");
        let b = tmp.path().join("b");
        convert_csv_to_archive(&spec, &a, 4096, Codec::Raw).unwrap();
        write_archive(g0().snapshot().as_ref(), &b, 4096, Codec::Raw).unwrap();
        for rel in open_archive_manifest(&a) {
            assert_eq!(fs::read(a.join(&rel)).unwrap(), fs::read(b.join(&rel)).unwrap(), "{rel}");
        }
    }

    fn open_archive_manifest(dir: &Path) -> Vec<String> {
        crate::store::archive::open_archive(dir).unwrap().meta().manifest.clone()
    }

    #[test]
    fn ragged_line_reports_its_number() {
        let tmp = tempfile::tempdir().unwrap();
        let spec = write_g0_csvs(tmp.path());
        fs::write(tmp.path().join("buy.csv"), "src,dst,date\nA1,1,1\nB2,1,2\nB2,2,3\nC3,2,9\nA1,2,4\nB2,2\n").unwrap();
        match load_csv(&spec) {
            Err(StoreError::CsvParse { line, .. }) => assert_eq!(line, 7),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bad_number_reports_line() {
        let tmp = tempfile::tempdir().unwrap();
        let spec = write_g0_csvs(tmp.path());
        fs::write(tmp.path().join("item.csv"), "id,price,discount\n1,100.0,0.1\n2,cheap,0.0\n").unwrap();
        assert!(matches!(load_csv(&spec), Err(StoreError::CsvParse { line: 3, .. })));
    }
}
