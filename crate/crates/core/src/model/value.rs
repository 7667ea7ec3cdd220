use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::schema::{PropertyGraphSchema, TypeId};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum DataType {
    Null,
    Bool,
    Int64,
    Float64,
    String,
    Vertex,
    Edge,
    Path,
    List(Box<DataType>),
}

pub const MAX_LIST_DEPTH: usize = 2;

impl DataType {
    pub fn list_depth(&self) -> usize {
        match self {
            DataType::List(inner) => 1 + inner.list_depth(),
            _ => 0,
        }
    }

    /// Types a store column can hold.
    pub fn is_storable(&self) -> bool {
        matches!(self, DataType::Bool | DataType::Int64 | DataType::Float64 | DataType::String)
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, DataType::Int64 | DataType::Float64)
    }

    pub fn is_graph(&self) -> bool {
        matches!(self, DataType::Vertex | DataType::Edge | DataType::Path)
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DataType::Null => f.write_str("null"),
            DataType::Bool => f.write_str("bool"),
            DataType::Int64 => f.write_str("int64"),
            DataType::Float64 => f.write_str("float64"),
            DataType::String => f.write_str("string"),
            DataType::Vertex => f.write_str("vertex"),
            DataType::Edge => f.write_str("edge"),
            DataType::Path => f.write_str("path"),
            DataType::List(inner) => write!(f, "list<{inner}>"),
        }
    }
}

impl FromStr for DataType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let dt = match s {
            "null" => DataType::Null,
            "bool" => DataType::Bool,
            "int64" => DataType::Int64,
            "float64" => DataType::Float64,
            "string" => DataType::String,
            "vertex" => DataType::Vertex,
            "edge" => DataType::Edge,
            "path" => DataType::Path,
            _ => match s.strip_prefix("list<").and_then(|r| r.strip_suffix('>')) {
                Some(inner) => DataType::List(Box::new(inner.parse()?)),
                None => return Err(format!("unknown data type '{s}'")),
            },
        };
        if dt.list_depth() > MAX_LIST_DEPTH {
            return Err(format!("list nesting deeper than {MAX_LIST_DEPTH}: '{s}'"));
        }
        Ok(dt)
    }
}

impl TryFrom<String> for DataType {
    type Error = String;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<DataType> for String {
    fn from(d: DataType) -> String {
        d.to_string()
    }
}

/// Dense per-type internal vertex address.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VertexRef {
    pub vtype: TypeId,
    pub idx: u64,
}

impl VertexRef {
    pub const fn new(vtype: TypeId, idx: u64) -> Self {
        VertexRef { vtype, idx }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EdgeRef {
    pub etype: TypeId,
    pub src: VertexRef,
    pub dst: VertexRef,
    pub row: u64,
}

impl EdgeRef {
    /// The endpoint opposite to `v`; `src` for self-loops.
    pub fn other(&self, v: VertexRef) -> VertexRef {
        if self.src == v {
            self.dst
        } else {
            self.src
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PathElement {
    Vertex(VertexRef),
    Edge(EdgeRef),
}

/// Alternating vertex/edge sequence starting and ending at a vertex.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PathValue {
    elements: Vec<PathElement>,
}

impl PathValue {
    pub fn single(v: VertexRef) -> Self {
        PathValue { elements: vec![PathElement::Vertex(v)] }
    }

    pub fn extended(&self, e: EdgeRef, v: VertexRef) -> Self {
        let mut elements = Vec::with_capacity(self.elements.len() + 2);
        elements.extend_from_slice(&self.elements);
        elements.push(PathElement::Edge(e));
        elements.push(PathElement::Vertex(v));
        PathValue { elements }
    }

    pub fn elements(&self) -> &[PathElement] {
        &self.elements
    }

    /// Hop count.
    pub fn len(&self) -> usize {
        self.elements.len() / 2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn start(&self) -> VertexRef {
        match self.elements[0] {
            PathElement::Vertex(v) => v,
            PathElement::Edge(_) => unreachable!("paths start with a vertex"),
        }
    }

    pub fn end(&self) -> VertexRef {
        match self.elements[self.elements.len() - 1] {
            PathElement::Vertex(v) => v,
            PathElement::Edge(_) => unreachable!("paths end with a vertex"),
        }
    }

    pub fn edges(&self) -> impl Iterator<Item = &EdgeRef> {
        self.elements.iter().filter_map(|e| match e {
            PathElement::Edge(e) => Some(e),
            PathElement::Vertex(_) => None,
        })
    }

    pub fn contains_edge(&self, e: &EdgeRef) -> bool {
        self.edges().any(|x| x == e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Out,
    In,
    Both,
}

impl Direction {
    pub fn reverse(self) -> Direction {
        match self {
            Direction::Out => Direction::In,
            Direction::In => Direction::Out,
            Direction::Both => Direction::Both,
        }
    }
}

/// Runtime value of a data field.
#[derive(Clone, Debug)]
pub enum Value {
    Null,
    Bool(bool),
    Int64(i64),
    Float64(f64),
    String(Arc<str>),
    Vertex(VertexRef),
    Edge(EdgeRef),
    Path(Arc<PathValue>),
    List(Arc<Vec<Value>>),
}

impl Value {
    pub fn str(s: &str) -> Value {
        Value::String(Arc::from(s))
    }

    pub fn list(items: Vec<Value>) -> Value {
        Value::List(Arc::new(items))
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Value::Null)
    }

    pub fn dtype(&self) -> DataType {
        match self {
            Value::Null => DataType::Null,
            Value::Bool(_) => DataType::Bool,
            Value::Int64(_) => DataType::Int64,
            Value::Float64(_) => DataType::Float64,
            Value::String(_) => DataType::String,
            Value::Vertex(_) => DataType::Vertex,
            Value::Edge(_) => DataType::Edge,
            Value::Path(_) => DataType::Path,
            Value::List(items) => DataType::List(Box::new(
                items.iter().find(|v| !v.is_null()).map(Value::dtype).unwrap_or(DataType::Null),
            )),
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Value::Int64(i) => Some(*i as f64),
            Value::Float64(f) => Some(*f),
            _ => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            Value::Int64(i) => Some(*i),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_str(&self) -> Option<&str> {
        match self {
            Value::String(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_vertex(&self) -> Option<VertexRef> {
        match self {
            Value::Vertex(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_edge(&self) -> Option<&EdgeRef> {
        match self {
            Value::Edge(e) => Some(e),
            _ => None,
        }
    }

    fn rank(&self) -> u8 {
        match self {
            Value::Null => 0,
            Value::Bool(_) => 1,
            Value::Int64(_) | Value::Float64(_) => 2,
            Value::String(_) => 3,
            Value::Vertex(_) => 4,
            Value::Edge(_) => 5,
            Value::Path(_) => 6,
            Value::List(_) => 7,
        }
    }

    /// JSON rendering used by every result printer; vertex and edge
    /// references carry the type name when a schema is supplied.
    pub fn to_json(&self, schema: Option<&PropertyGraphSchema>) -> serde_json::Value {
        use serde_json::json;
        let vjson = |v: &VertexRef| match schema {
            Some(s) if (v.vtype as usize) < s.vertex_types.len() => {
                json!({"type": s.vertex_type(v.vtype).name, "idx": v.idx})
            }
            _ => json!({"vtype": v.vtype, "idx": v.idx}),
        };
        match self {
            Value::Null => serde_json::Value::Null,
            Value::Bool(b) => json!(b),
            Value::Int64(i) => json!(i),
            Value::Float64(f) if f.is_finite() => json!(f),
            Value::Float64(f) => json!(f.to_string()),
            Value::String(s) => json!(s.as_ref()),
            Value::Vertex(v) => vjson(v),
            Value::Edge(e) => {
                let ty = match schema {
                    Some(s) if (e.etype as usize) < s.edge_types.len() => {
                        json!(s.edge_type(e.etype).name)
                    }
                    _ => json!(e.etype),
                };
                json!({"type": ty, "src": vjson(&e.src), "dst": vjson(&e.dst), "row": e.row})
            }
            Value::Path(p) => {
                let items: Vec<serde_json::Value> = p
                    .elements()
                    .iter()
                    .map(|el| match el {
                        PathElement::Vertex(v) => Value::Vertex(*v).to_json(schema),
                        PathElement::Edge(e) => Value::Edge(*e).to_json(schema),
                    })
                    .collect();
                json!({"len": p.len(), "elements": items})
            }
            Value::List(items) => {
                serde_json::Value::Array(items.iter().map(|v| v.to_json(schema)).collect())
            }
        }
    }

    /// Inverse of [`Value::to_json`] for scalars and lists; used for query parameters.
    pub fn from_json(v: &serde_json::Value) -> Value {
        match v {
            serde_json::Value::Null => Value::Null,
            serde_json::Value::Bool(b) => Value::Bool(*b),
            serde_json::Value::Number(n) => match n.as_i64() {
                Some(i) => Value::Int64(i),
                None => Value::Float64(n.as_f64().unwrap_or(f64::NAN)),
            },
            serde_json::Value::String(s) => Value::str(s),
            serde_json::Value::Array(items) => Value::list(items.iter().map(Value::from_json).collect()),
            serde_json::Value::Object(_) => Value::str(&v.to_string()),
        }
    }
}

/// Compares an integer with a float as real numbers. NaN is greater than
/// every integer.
fn cmp_int_float(i: i64, f: f64) -> Ordering {
    if f.is_nan() {
        return Ordering::Less;
    }
    // 2^63 is exactly representable; anything at or above it exceeds i64::MAX.
    const TWO_63: f64 = 9_223_372_036_854_775_808.0;
    if f >= TWO_63 {
        return Ordering::Less;
    }
    if f < -TWO_63 {
        return Ordering::Greater;
    }
    let t = f.trunc();
    match i.cmp(&(t as i64)) {
        Ordering::Equal => {
            let frac = f - t;
            if frac > 0.0 {
                Ordering::Less
            } else if frac < 0.0 {
                Ordering::Greater
            } else {
                Ordering::Equal
            }
        }
        o => o,
    }
}

fn cmp_float(a: f64, b: f64) -> Ordering {
    match (a.is_nan(), b.is_nan()) {
        (true, true) => Ordering::Equal,
        (true, false) => Ordering::Greater,
        (false, true) => Ordering::Less,
        // -0.0 == 0.0
        (false, false) => a.partial_cmp(&b).expect("non-NaN"),
    }
}

fn cmp_path(a: &PathValue, b: &PathValue) -> Ordering {
    a.elements().cmp(b.elements())
}

/// Total order over values: Null < Bool < numeric < String < Vertex < Edge < Path < List.
pub fn value_compare(a: &Value, b: &Value) -> Ordering {
    use Value::*;
    match (a, b) {
        (Null, Null) => Ordering::Equal,
        (Bool(x), Bool(y)) => x.cmp(y),
        (Int64(x), Int64(y)) => x.cmp(y),
        (Float64(x), Float64(y)) => cmp_float(*x, *y),
        (Int64(x), Float64(y)) => cmp_int_float(*x, *y),
        (Float64(x), Int64(y)) => cmp_int_float(*y, *x).reverse(),
        (String(x), String(y)) => x.as_bytes().cmp(y.as_bytes()),
        (Vertex(x), Vertex(y)) => x.cmp(y),
        (Edge(x), Edge(y)) => x.cmp(y),
        (Path(x), Path(y)) => cmp_path(x, y),
        (List(x), List(y)) => {
            for (l, r) in x.iter().zip(y.iter()) {
                match value_compare(l, r) {
                    Ordering::Equal => continue,
                    o => return o,
                }
            }
            x.len().cmp(&y.len())
        }
        _ => a.rank().cmp(&b.rank()),
    }
}

impl PartialEq for Value {
    fn eq(&self, other: &Self) -> bool {
        value_compare(self, other) == Ordering::Equal
    }
}

impl Eq for Value {}

impl PartialOrd for Value {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Value {
    fn cmp(&self, other: &Self) -> Ordering {
        value_compare(self, other)
    }
}

impl Hash for Value {
    fn hash<H: Hasher>(&self, state: &mut H) {
        self.rank().hash(state);
        match self {
            Value::Null => {}
            Value::Bool(b) => b.hash(state),
            Value::Int64(i) => i.hash(state),
            Value::Float64(f) => {
                // Integral floats must hash like the equal Int64.
                if f.fract() == 0.0 && *f >= -9.2e18 && *f <= 9.2e18 {
                    (*f as i64).hash(state)
                } else if f.is_nan() {
                    u64::MAX.hash(state)
                } else {
                    f.to_bits().hash(state)
                }
            }
            Value::String(s) => s.hash(state),
            Value::Vertex(v) => v.hash(state),
            Value::Edge(e) => e.hash(state),
            Value::Path(p) => p.hash(state),
            Value::List(items) => {
                items.len().hash(state);
                for v in items.iter() {
                    v.hash(state);
                }
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Null => f.write_str("null"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int64(i) => write!(f, "{i}"),
            Value::Float64(x) => {
                if x.fract() == 0.0 && x.is_finite() && x.abs() < 1e15 {
                    write!(f, "{x:.1}")
                } else {
                    write!(f, "{x}")
                }
            }
            Value::String(s) => write!(f, "{s:?}"),
            Value::Vertex(v) => write!(f, "v[{}:{}]", v.vtype, v.idx),
            Value::Edge(e) => write!(
                f,
                "e[{}:{}:{}->{}:{}#{}]",
                e.etype, e.src.vtype, e.src.idx, e.dst.vtype, e.dst.idx, e.row
            ),
            Value::Path(p) => write!(f, "path(len={})", p.len()),
            Value::List(items) => {
                f.write_str("[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
        }
    }
}

impl From<i64> for Value {
    fn from(v: i64) -> Self {
        Value::Int64(v)
    }
}

impl From<f64> for Value {
    fn from(v: f64) -> Self {
        Value::Float64(v)
    }
}

impl From<bool> for Value {
    fn from(v: bool) -> Self {
        Value::Bool(v)
    }
}

impl From<&str> for Value {
    fn from(v: &str) -> Self {
        Value::str(v)
    }
}

impl From<VertexRef> for Value {
    fn from(v: VertexRef) -> Self {
        Value::Vertex(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn spec_examples() {
        assert_eq!(value_compare(&Value::Int64(2), &Value::Float64(2.0)), Ordering::Equal);
        assert_eq!(value_compare(&Value::Null, &Value::Int64(-9)), Ordering::Less);
        assert_eq!(value_compare(&Value::str("A1"), &Value::str("B2")), Ordering::Less);
    }

    #[test]
    fn nan_is_largest_float_and_equal_to_itself() {
        let nan = Value::Float64(f64::NAN);
        assert_eq!(value_compare(&nan, &nan), Ordering::Equal);
        assert_eq!(value_compare(&nan, &Value::Float64(f64::INFINITY)), Ordering::Greater);
        assert_eq!(value_compare(&nan, &Value::Int64(i64::MAX)), Ordering::Greater);
        assert_eq!(value_compare(&Value::str(""), &nan), Ordering::Greater);
    }

    #[test]
    fn int_float_edges() {
        assert_eq!(cmp_int_float(i64::MAX, i64::MAX as f64), Ordering::Less);
        assert_eq!(cmp_int_float(3, 2.5), Ordering::Greater);
        assert_eq!(cmp_int_float(-3, -2.5), Ordering::Less);
        assert_eq!(cmp_int_float(-2, -2.5), Ordering::Greater);
        assert_eq!(cmp_int_float(i64::MIN, -9.3e18), Ordering::Greater);
    }

    #[test]
    fn rank_order() {
        let ordered = [
            Value::Null,
            Value::Bool(false),
            Value::Bool(true),
            Value::Int64(-1),
            Value::Float64(0.5),
            Value::str("a"),
            Value::Vertex(VertexRef::new(0, 0)),
            Value::Edge(EdgeRef {
                etype: 0,
                src: VertexRef::new(0, 0),
                dst: VertexRef::new(0, 1),
                row: 0,
            }),
            Value::Path(Arc::new(PathValue::single(VertexRef::new(0, 0)))),
            Value::list(vec![]),
        ];
        for w in ordered.windows(2) {
            assert_eq!(value_compare(&w[0], &w[1]), Ordering::Less, "{} < {}", w[0], w[1]);
        }
    }

    #[test]
    fn dtype_strings() {
        assert_eq!("list<list<int64>>".parse::<DataType>().unwrap().list_depth(), 2);
        assert!("list<list<list<int64>>>".parse::<DataType>().is_err());
        assert!("decimal".parse::<DataType>().is_err());
    }

    #[test]
    fn equal_values_hash_equal() {
        use std::collections::hash_map::DefaultHasher;
        let h = |v: &Value| {
            let mut s = DefaultHasher::new();
            v.hash(&mut s);
            s.finish()
        };
        assert_eq!(h(&Value::Int64(7)), h(&Value::Float64(7.0)));
        assert_eq!(h(&Value::Float64(-0.0)), h(&Value::Float64(0.0)));
    }

    fn arb_scalar() -> impl Strategy<Value = Value> {
        prop_oneof![
            Just(Value::Null),
            any::<bool>().prop_map(Value::Bool),
            (-5i64..5).prop_map(Value::Int64),
            prop_oneof![(-5.0f64..5.0), Just(f64::NAN), Just(2.0), Just(-0.0)].prop_map(Value::Float64),
            "[ab]{0,2}".prop_map(|s| Value::str(&s)),
            (0u32..2, 0u64..3).prop_map(|(t, i)| Value::Vertex(VertexRef::new(t, i))),
        ]
    }

    fn arb_value() -> impl Strategy<Value = Value> {
        arb_scalar().prop_recursive(2, 8, 3, |inner| {
            prop::collection::vec(inner, 0..3).prop_map(Value::list)
        })
    }

    proptest! {
        #[test]
        fn compare_is_a_total_order(a in arb_value(), b in arb_value(), c in arb_value()) {
            prop_assert_eq!(value_compare(&a, &a), Ordering::Equal);
            prop_assert_eq!(value_compare(&a, &b), value_compare(&b, &a).reverse());
            if value_compare(&a, &b) != Ordering::Greater && value_compare(&b, &c) != Ordering::Greater {
                prop_assert_ne!(value_compare(&a, &c), Ordering::Greater);
            }
        }
    }
}
