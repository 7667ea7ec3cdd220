use std::sync::Arc;

use crate::model::{DataType, Value};

#[derive(Clone, Debug, PartialEq)]
pub enum ColumnData {
    Bool(Vec<bool>),
    Int64(Vec<i64>),
    Float64(Vec<f64>),
    String(Vec<Arc<str>>),
}

/// Typed property column with an optional validity mask (`false` = Null).
#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    data: ColumnData,
    validity: Option<Vec<bool>>,
}

impl Column {
    pub fn new(dtype: &DataType) -> Self {
        Self::with_capacity(dtype, 0)
    }

    pub fn with_capacity(dtype: &DataType, cap: usize) -> Self {
        let data = match dtype {
            DataType::Bool => ColumnData::Bool(Vec::with_capacity(cap)),
            DataType::Int64 => ColumnData::Int64(Vec::with_capacity(cap)),
            DataType::Float64 => ColumnData::Float64(Vec::with_capacity(cap)),
            DataType::String => ColumnData::String(Vec::with_capacity(cap)),
            other => panic!("column of non-storable type {other}"),
        };
        Column { data, validity: None }
    }

    pub fn from_parts(data: ColumnData, validity: Option<Vec<bool>>) -> Self {
        Column { data, validity }
    }

    pub fn dtype(&self) -> DataType {
        match self.data {
            ColumnData::Bool(_) => DataType::Bool,
            ColumnData::Int64(_) => DataType::Int64,
            ColumnData::Float64(_) => DataType::Float64,
            ColumnData::String(_) => DataType::String,
        }
    }

    pub fn len(&self) -> usize {
        match &self.data {
            ColumnData::Bool(v) => v.len(),
            ColumnData::Int64(v) => v.len(),
            ColumnData::Float64(v) => v.len(),
            ColumnData::String(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn data(&self) -> &ColumnData {
        &self.data
    }

    pub fn validity(&self) -> Option<&[bool]> {
        self.validity.as_deref()
    }

    pub fn is_valid(&self, i: usize) -> bool {
        self.validity.as_ref().is_none_or(|v| v[i])
    }

    pub fn get(&self, i: usize) -> Value {
        if !self.is_valid(i) {
            return Value::Null;
        }
        match &self.data {
            ColumnData::Bool(v) => Value::Bool(v[i]),
            ColumnData::Int64(v) => Value::Int64(v[i]),
            ColumnData::Float64(v) => Value::Float64(v[i]),
            ColumnData::String(v) => Value::String(v[i].clone()),
        }
    }

    /// Appends a value, coercing Int64 into Float64 columns. Returns `false`
    /// when the value's type does not fit the column.
    pub fn push(&mut self, value: &Value) -> bool {
        let len = self.len();
        let ok = match (&mut self.data, value) {
            (_, Value::Null) => {
                self.push_default();
                let validity = self.validity.get_or_insert_with(|| vec![true; len]);
                validity.push(false);
                return true;
            }
            (ColumnData::Bool(v), Value::Bool(b)) => {
                v.push(*b);
                true
            }
            (ColumnData::Int64(v), Value::Int64(i)) => {
                v.push(*i);
                true
            }
            (ColumnData::Float64(v), Value::Float64(f)) => {
                v.push(*f);
                true
            }
            (ColumnData::Float64(v), Value::Int64(i)) => {
                v.push(*i as f64);
                true
            }
            (ColumnData::String(v), Value::String(s)) => {
                v.push(s.clone());
                true
            }
            _ => false,
        };
        if ok {
            if let Some(validity) = &mut self.validity {
                validity.push(true);
            }
        }
        ok
    }

    fn push_default(&mut self) {
        match &mut self.data {
            ColumnData::Bool(v) => v.push(false),
            ColumnData::Int64(v) => v.push(0),
            ColumnData::Float64(v) => v.push(0.0),
            ColumnData::String(v) => v.push(Arc::from("")),
        }
    }

    /// New column holding rows in the order given by `perm`.
    pub fn permuted(&self, perm: &[usize]) -> Column {
        let data = match &self.data {
            ColumnData::Bool(v) => ColumnData::Bool(perm.iter().map(|&i| v[i]).collect()),
            ColumnData::Int64(v) => ColumnData::Int64(perm.iter().map(|&i| v[i]).collect()),
            ColumnData::Float64(v) => ColumnData::Float64(perm.iter().map(|&i| v[i]).collect()),
            ColumnData::String(v) => ColumnData::String(perm.iter().map(|&i| v[i].clone()).collect()),
        };
        let validity = self.validity.as_ref().map(|m| perm.iter().map(|&i| m[i]).collect());
        Column { data, validity }
    }

    /// Rows `range` as a new column.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Column {
        let data = match &self.data {
            ColumnData::Bool(v) => ColumnData::Bool(v[range.clone()].to_vec()),
            ColumnData::Int64(v) => ColumnData::Int64(v[range.clone()].to_vec()),
            ColumnData::Float64(v) => ColumnData::Float64(v[range.clone()].to_vec()),
            ColumnData::String(v) => ColumnData::String(v[range.clone()].to_vec()),
        };
        let validity = self.validity.as_ref().map(|m| m[range].to_vec());
        Column { data, validity }
    }

    pub fn has_nulls(&self) -> bool {
        self.validity.as_ref().is_some_and(|m| m.iter().any(|b| !b))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nulls_and_coercion() {
        let mut c = Column::new(&DataType::Float64);
        assert!(c.push(&Value::Float64(1.5)));
        assert!(c.push(&Value::Null));
        assert!(c.push(&Value::Int64(3)));
        assert!(!c.push(&Value::str("x")));
        assert_eq!(c.len(), 3);
        assert_eq!(c.get(0), Value::Float64(1.5));
        assert!(c.get(1).is_null());
        assert_eq!(c.get(2), Value::Float64(3.0));
        assert!(c.has_nulls());
        let p = c.permuted(&[2, 0]);
        assert_eq!(p.get(0), Value::Float64(3.0));
        assert!(!p.has_nulls());
    }
}
