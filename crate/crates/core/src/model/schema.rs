use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::value::DataType;

/// Ordinal of a vertex or edge type inside its schema.
pub type TypeId = u32;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyDecl {
    pub name: String,
    pub dtype: DataType,
}

impl PropertyDecl {
    pub fn new(name: impl Into<String>, dtype: DataType) -> Self {
        PropertyDecl { name: name.into(), dtype }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VertexTypeDecl {
    pub name: String,
    #[serde(default)]
    pub properties: Vec<PropertyDecl>,
    pub primary_key: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeTypeDecl {
    pub name: String,
    #[serde(rename = "src")]
    pub src_type: String,
    #[serde(rename = "dst")]
    pub dst_type: String,
    #[serde(default)]
    pub properties: Vec<PropertyDecl>,
}

/// Vertex and edge type declarations shared by every store, frontend and engine.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyGraphSchema {
    #[serde(default)]
    pub vertex_types: Vec<VertexTypeDecl>,
    #[serde(default)]
    pub edge_types: Vec<EdgeTypeDecl>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SchemaErrorKind {
    DuplicateName,
    DanglingType,
    BadPrimaryKey,
    BadDataType,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("{kind:?}: {offending_name}")]
pub struct SchemaError {
    pub kind: SchemaErrorKind,
    pub offending_name: String,
}

impl SchemaError {
    fn new(kind: SchemaErrorKind, name: &str) -> Self {
        SchemaError { kind, offending_name: name.to_string() }
    }
}

impl PropertyGraphSchema {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("schema serializes")
    }

    /// Checks name uniqueness, edge endpoint references and primary keys.
    /// Reports the first violation found in declaration order.
    pub fn validate(&self) -> Result<(), SchemaError> {
        let mut seen = HashSet::new();
        for vt in &self.vertex_types {
            if !seen.insert(vt.name.as_str()) {
                return Err(SchemaError::new(SchemaErrorKind::DuplicateName, &vt.name));
            }
            check_properties(&vt.properties)?;
            match vt.properties.iter().find(|p| p.name == vt.primary_key) {
                Some(p) if matches!(p.dtype, DataType::Int64 | DataType::String) => {}
                _ => return Err(SchemaError::new(SchemaErrorKind::BadPrimaryKey, &vt.primary_key)),
            }
        }
        let mut seen_edges = HashSet::new();
        for et in &self.edge_types {
            if !seen_edges.insert(et.name.as_str()) {
                return Err(SchemaError::new(SchemaErrorKind::DuplicateName, &et.name));
            }
            for end in [&et.src_type, &et.dst_type] {
                if self.vertex_type_id(end).is_none() {
                    return Err(SchemaError::new(SchemaErrorKind::DanglingType, end));
                }
            }
            check_properties(&et.properties)?;
        }
        Ok(())
    }

    pub fn vertex_type_id(&self, name: &str) -> Option<TypeId> {
        self.vertex_types.iter().position(|v| v.name == name).map(|i| i as TypeId)
    }

    pub fn edge_type_id(&self, name: &str) -> Option<TypeId> {
        self.edge_types.iter().position(|e| e.name == name).map(|i| i as TypeId)
    }

    pub fn vertex_type(&self, id: TypeId) -> &VertexTypeDecl {
        &self.vertex_types[id as usize]
    }

    pub fn edge_type(&self, id: TypeId) -> &EdgeTypeDecl {
        &self.edge_types[id as usize]
    }

    pub fn vertex_type_count(&self) -> usize {
        self.vertex_types.len()
    }

    pub fn edge_type_count(&self) -> usize {
        self.edge_types.len()
    }

    /// (source type, destination type) ordinals of an edge type.
    pub fn edge_endpoints(&self, id: TypeId) -> (TypeId, TypeId) {
        let et = self.edge_type(id);
        (
            self.vertex_type_id(&et.src_type).expect("validated schema"),
            self.vertex_type_id(&et.dst_type).expect("validated schema"),
        )
    }

    pub fn vertex_prop_index(&self, vtype: TypeId, prop: &str) -> Option<usize> {
        self.vertex_types
            .get(vtype as usize)?
            .properties
            .iter()
            .position(|p| p.name == prop)
    }

    pub fn edge_prop_index(&self, etype: TypeId, prop: &str) -> Option<usize> {
        self.edge_types.get(etype as usize)?.properties.iter().position(|p| p.name == prop)
    }

    pub fn pk_index(&self, vtype: TypeId) -> usize {
        let vt = self.vertex_type(vtype);
        vt.properties
            .iter()
            .position(|p| p.name == vt.primary_key)
            .expect("validated schema")
    }

    pub fn vertex_type_ids(&self) -> impl Iterator<Item = TypeId> {
        0..self.vertex_types.len() as TypeId
    }

    pub fn edge_type_ids(&self) -> impl Iterator<Item = TypeId> {
        0..self.edge_types.len() as TypeId
    }
}

fn check_properties(props: &[PropertyDecl]) -> Result<(), SchemaError> {
    let mut seen = HashSet::new();
    for p in props {
        if !seen.insert(p.name.as_str()) {
            return Err(SchemaError::new(SchemaErrorKind::DuplicateName, &p.name));
        }
        if !p.dtype.is_storable() {
            return Err(SchemaError::new(SchemaErrorKind::BadDataType, &p.name));
        }
    }
    Ok(())
}

impl fmt::Display for PropertyGraphSchema {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for vt in &self.vertex_types {
            let props: Vec<String> =
                vt.properties.iter().map(|p| format!("{}: {}", p.name, p.dtype)).collect();
            writeln!(f, "({}) {{{}}} pk={}", vt.name, props.join(", "), vt.primary_key)?;
        }
        for et in &self.edge_types {
            let props: Vec<String> =
                et.properties.iter().map(|p| format!("{}: {}", p.name, p.dtype)).collect();
            writeln!(f, "({})-[{}]->({}) {{{}}}", et.src_type, et.name, et.dst_type, props.join(", "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testkit::g0_schema;

    #[test]
    fn g0_schema_validates() {
        assert_eq!(g0_schema().validate(), Ok(()));
    }

    #[test]
    fn empty_schema_is_valid() {
        assert_eq!(PropertyGraphSchema::default().validate(), Ok(()));
    }

    #[test]
    fn dangling_edge_type() {
        let mut s = g0_schema();
        s.edge_types.push(EdgeTypeDecl {
            name: "Haunts".into(),
            src_type: "Buyer".into(),
            dst_type: "Ghost".into(),
            properties: vec![],
        });
        let err = s.validate().unwrap_err();
        assert_eq!(err.kind, SchemaErrorKind::DanglingType);
        assert_eq!(err.offending_name, "Ghost");
    }

    #[test]
    fn duplicate_and_bad_pk() {
        let mut s = g0_schema();
        s.vertex_types.push(s.vertex_types[0].clone());
        assert_eq!(s.validate().unwrap_err().kind, SchemaErrorKind::DuplicateName);

        let mut s = g0_schema();
        s.vertex_types[1].primary_key = "price".into();
        let err = s.validate().unwrap_err();
        assert_eq!((err.kind, err.offending_name.as_str()), (SchemaErrorKind::BadPrimaryKey, "price"));

        let mut s = g0_schema();
        s.vertex_types[0].properties.push(PropertyDecl::new("credits", DataType::Int64));
        assert_eq!(s.validate().unwrap_err().kind, SchemaErrorKind::DuplicateName);
    }

    #[test]
    fn json_roundtrip_uses_short_dtype_names() {
        let s = g0_schema();
        let text = s.to_json();
        assert!(text.contains("\"float64\""));
        assert!(text.contains("\"src\": \"Buyer\""));
        assert_eq!(PropertyGraphSchema::from_json(&text).unwrap(), s);
    }
}
