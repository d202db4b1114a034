//! Dictionary-encoded, column-oriented record storage.
//!
//! A [`Dataset`] is an ordered list of records over a fixed set of named
//! columns. Each column stores one `u32` code per row plus a dictionary of the
//! distinct cell strings, so equivalence-class grouping hashes small integer
//! tuples instead of strings.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};
use crate::par::Exec;

/// Suppression sentinel written to released files.
pub const NA: &str = "NA";

#[derive(Clone)]
pub struct Column {
    name: String,
    dict: Vec<String>,
    lookup: HashMap<String, u32>,
    codes: Vec<u32>,
}

impl Column {
    pub fn new(name: impl Into<String>) -> Self {
        Column {
            name: name.into(),
            dict: Vec::new(),
            lookup: HashMap::new(),
            codes: Vec::new(),
        }
    }

    pub fn from_values<I, S>(name: impl Into<String>, values: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut col = Column::new(name);
        for v in values {
            col.push(v.as_ref());
        }
        col
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn intern(&mut self, value: &str) -> u32 {
        if let Some(&code) = self.lookup.get(value) {
            return code;
        }
        let code = self.dict.len() as u32;
        self.dict.push(value.to_owned());
        self.lookup.insert(value.to_owned(), code);
        code
    }

    pub fn push(&mut self, value: &str) {
        let code = self.intern(value);
        self.codes.push(code);
    }

    pub fn get(&self, row: usize) -> &str {
        &self.dict[self.codes[row] as usize]
    }

    pub fn set(&mut self, row: usize, value: &str) {
        let code = self.intern(value);
        self.codes[row] = code;
    }

    pub fn code(&self, row: usize) -> u32 {
        self.codes[row]
    }

    /// Install row codes that index this column's dictionary.
    pub(crate) fn set_codes(&mut self, codes: Vec<u32>) {
        debug_assert!(codes.iter().all(|&c| (c as usize) < self.dict.len()));
        self.codes = codes;
    }

    pub fn codes(&self) -> &[u32] {
        &self.codes
    }

    pub fn code_of(&self, value: &str) -> Option<u32> {
        self.lookup.get(value).copied()
    }

    pub fn value_of(&self, code: u32) -> &str {
        &self.dict[code as usize]
    }

    /// Distinct values referenced by at least one row, in first-seen order.
    pub fn distinct_values(&self) -> Vec<&str> {
        let mut used = vec![false; self.dict.len()];
        let mut out = Vec::new();
        for &c in &self.codes {
            if !used[c as usize] {
                used[c as usize] = true;
                out.push(self.dict[c as usize].as_str());
            }
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> + '_ {
        self.codes.iter().map(move |&c| self.dict[c as usize].as_str())
    }

    /// Rewrite every cell through a value-level mapping. The mapping is
    /// evaluated once per dictionary entry, not once per row.
    pub fn map_values<F>(&self, exec: Exec, f: F) -> Column
    where
        F: Fn(&str) -> Cow<'_, str>,
    {
        let mut out = Column::new(self.name.clone());
        let remap: Vec<u32> = self
            .dict
            .iter()
            .map(|v| {
                let mapped = f(v);
                out.intern(&mapped)
            })
            .collect();
        out.codes = exec.map_slice(&self.codes, |&c| remap[c as usize]);
        out
    }

    fn select(&self, rows: &[usize]) -> Column {
        Column {
            name: self.name.clone(),
            dict: self.dict.clone(),
            lookup: self.lookup.clone(),
            codes: rows.iter().map(|&r| self.codes[r]).collect(),
        }
    }

    fn append(&mut self, other: &Column) {
        let remap: Vec<u32> = other.dict.iter().map(|v| self.intern(v)).collect();
        self.codes
            .extend(other.codes.iter().map(|&c| remap[c as usize]));
    }
}

impl fmt::Debug for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Column")
            .field("name", &self.name)
            .field("rows", &self.codes.len())
            .field("distinct", &self.dict.len())
            .finish()
    }
}

/// Rectangular table of string cells. Two datasets are equal when they have
/// the same column names in the same order and the same cell strings.
#[derive(Clone, Default)]
pub struct Dataset {
    columns: Vec<Column>,
    index: HashMap<String, usize>,
    rows: usize,
}

impl Dataset {
    pub fn new<I, S>(columns: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut ds = Dataset::default();
        for name in columns {
            ds.add_column(Column::new(name))?;
        }
        Ok(ds)
    }

    pub fn from_rows<S: AsRef<str>>(columns: &[&str], rows: &[Vec<S>]) -> Result<Self> {
        let mut ds = Dataset::new(columns.iter().copied())?;
        for row in rows {
            ds.push_row(row)?;
        }
        Ok(ds)
    }

    pub fn n_rows(&self) -> usize {
        self.rows
    }

    pub fn n_columns(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name()).collect()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn has_column(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn require_column(&self, name: &str) -> Result<usize> {
        self.column_index(name)
            .ok_or_else(|| Error::UnknownField(name.to_owned()))
    }

    pub fn column(&self, name: &str) -> Option<&Column> {
        self.column_index(name).map(|i| &self.columns[i])
    }

    pub fn column_at(&self, idx: usize) -> &Column {
        &self.columns[idx]
    }

    pub fn get(&self, row: usize, col: usize) -> &str {
        self.columns[col].get(row)
    }

    pub fn value(&self, row: usize, name: &str) -> Option<&str> {
        self.column(name).map(|c| c.get(row))
    }

    pub fn set(&mut self, row: usize, col: usize, value: &str) {
        self.columns[col].set(row, value);
    }

    pub fn row(&self, row: usize) -> Vec<&str> {
        self.columns.iter().map(|c| c.get(row)).collect()
    }

    pub fn push_row<S: AsRef<str>>(&mut self, cells: &[S]) -> Result<()> {
        if cells.len() != self.columns.len() {
            return Err(Error::SchemaParse(format!(
                "row has {} cells, dataset has {} columns",
                cells.len(),
                self.columns.len()
            )));
        }
        for (col, cell) in self.columns.iter_mut().zip(cells) {
            col.push(cell.as_ref());
        }
        self.rows += 1;
        Ok(())
    }

    /// Append a column. An empty column on a non-empty dataset is filled with
    /// empty cells.
    pub fn add_column(&mut self, mut column: Column) -> Result<()> {
        if self.index.contains_key(column.name()) {
            return Err(Error::DuplicateColumn {
                column: column.name().to_owned(),
            });
        }
        if self.columns.is_empty() {
            self.rows = column.len();
        } else if column.is_empty() && self.rows > 0 {
            let code = column.intern("");
            column.codes = vec![code; self.rows];
        } else if column.len() != self.rows {
            return Err(Error::SchemaParse(format!(
                "column {:?} has {} rows, dataset has {}",
                column.name(),
                column.len(),
                self.rows
            )));
        }
        self.index.insert(column.name().to_owned(), self.columns.len());
        self.columns.push(column);
        Ok(())
    }

    /// Replace a column in place, or append it if absent.
    pub fn put_column(&mut self, column: Column) -> Result<()> {
        match self.column_index(column.name()) {
            Some(i) => {
                if column.len() != self.rows {
                    return Err(Error::SchemaParse(format!(
                        "column {:?} has {} rows, dataset has {}",
                        column.name(),
                        column.len(),
                        self.rows
                    )));
                }
                self.columns[i] = column;
                Ok(())
            }
            None => self.add_column(column),
        }
    }

    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            columns: self.columns.iter().map(|c| c.select(rows)).collect(),
            index: self.index.clone(),
            rows: rows.len(),
        }
    }

    /// Keep the named columns, in the given order.
    pub fn project<S: AsRef<str>>(&self, names: &[S]) -> Result<Dataset> {
        let mut out = Dataset {
            rows: self.rows,
            ..Default::default()
        };
        for name in names {
            let idx = self.require_column(name.as_ref())?;
            out.index
                .insert(name.as_ref().to_owned(), out.columns.len());
            out.columns.push(self.columns[idx].clone());
        }
        Ok(out)
    }

    /// Append the rows of `other`. Columns are matched by name; columns missing
    /// on either side are filled with empty cells.
    pub fn append(&mut self, other: &Dataset) -> Result<()> {
        for name in other.column_names() {
            if !self.has_column(name) {
                self.add_column(Column::new(name))?;
            }
        }
        let before = self.rows;
        for col in self.columns.iter_mut() {
            match other.column(col.name()) {
                Some(src) => col.append(src),
                None => {
                    let code = col.intern("");
                    col.codes.extend(std::iter::repeat_n(code, other.rows));
                }
            }
        }
        self.rows = before + other.rows;
        Ok(())
    }
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.rows == other.rows
            && self.columns.len() == other.columns.len()
            && self
                .columns
                .iter()
                .zip(&other.columns)
                .all(|(a, b)| a.name == b.name && a.iter().eq(b.iter()))
    }
}

impl Eq for Dataset {}

impl fmt::Debug for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.column_names().join(","))?;
        let shown = self.rows.min(20);
        for r in 0..shown {
            writeln!(f, "{}", self.row(r).join(","))?;
        }
        if shown < self.rows {
            writeln!(f, "... ({} rows)", self.rows)?;
        }
        Ok(())
    }
}
