//! Dense k-dimensional frequency tables and their algebra.
//!
//! Every operation is persistent: it returns a new table and leaves the
//! receiver untouched. All of them are implemented on one kernel,
//! [`FreqTable::project`], which walks the source cells once and scatters
//! each count into a target cell (or drops it).

use crate::ingest::{cell_label, IngestError, RecordSet, Schema, Variable};
use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// Upper bound on dense cells. 64 categories over 4 axes is already 16.7M.
pub const MAX_CELLS: usize = 1 << 26;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TableError {
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("unknown category {label:?} for variable {variable:?}{}", row.map(|r| format!(" at row {r}")).unwrap_or_default())]
    UnknownCategory {
        variable: String,
        label: String,
        /// 1-based data row, when the value came from a record set.
        row: Option<usize>,
    },
    #[error("keep list is empty")]
    EmptyKeepList,
    #[error("{0:?} is not a permutation of the table's variables")]
    NotAPermutation(Vec<String>),
    #[error("variable {variable:?} already has category {label:?}")]
    DuplicateLabel { variable: String, label: String },
    #[error("cannot remove the last category of {0:?}")]
    LastCategory(String),
    #[error("merge needs at least two categories")]
    MergeNeedsTwo,
    #[error("operation needs a {expected}-variable table, got {found}")]
    WrongArity { expected: usize, found: usize },
    #[error("counts length {found} does not match table shape ({expected} cells)")]
    ShapeMismatch { expected: usize, found: usize },
    #[error("table would have {0} cells, above the dense limit")]
    TooManyCells(usize),
    #[error(transparent)]
    Schema(#[from] IngestError),
}

impl TableError {
    pub fn code(&self) -> &'static str {
        match self {
            TableError::UnknownVariable(_) => "UnknownVariable",
            TableError::UnknownCategory { .. } => "UnknownCategory",
            TableError::EmptyKeepList => "EmptyKeepList",
            TableError::NotAPermutation(_) => "NotAPermutation",
            TableError::DuplicateLabel { .. } => "DuplicateLabel",
            TableError::LastCategory(_) => "LastCategory",
            TableError::MergeNeedsTwo => "MergeNeedsTwo",
            TableError::WrongArity { .. } => "WrongArity",
            TableError::ShapeMismatch { .. } => "ShapeMismatch",
            TableError::TooManyCells(_) => "TooManyCells",
            TableError::Schema(e) => e.code(),
        }
    }
}

/// Count tensor over the category axes of `schema`, stored row-major
/// (last axis fastest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableJson", into = "TableJson")]
pub struct FreqTable {
    schema: Schema,
    shape: Vec<usize>,
    counts: Vec<u64>,
    total: u64,
}

/// Wire form: `{variables:[{name, categories, scores?}], counts:[...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TableJson {
    pub variables: Vec<Variable>,
    pub counts: Vec<u64>,
}

impl From<FreqTable> for TableJson {
    fn from(t: FreqTable) -> Self {
        TableJson {
            variables: t.schema.variables,
            counts: t.counts,
        }
    }
}

impl TryFrom<TableJson> for FreqTable {
    type Error = TableError;

    fn try_from(j: TableJson) -> Result<Self, Self::Error> {
        FreqTable::from_counts(Schema::new(j.variables)?, j.counts)
    }
}

fn cell_count(schema: &Schema) -> Result<usize, TableError> {
    schema
        .variables
        .iter()
        .try_fold(1usize, |acc, v| {
            acc.checked_mul(v.n_categories()).filter(|&n| n <= MAX_CELLS)
        })
        .ok_or(TableError::TooManyCells(usize::MAX))
}

impl FreqTable {
    pub fn zeros(schema: Schema) -> Result<Self, TableError> {
        schema.validate()?;
        let n = cell_count(&schema)?;
        Self::from_counts(schema, vec![0; n])
    }

    pub fn from_counts(schema: Schema, counts: Vec<u64>) -> Result<Self, TableError> {
        schema.validate()?;
        let expected = cell_count(&schema)?;
        if counts.len() != expected {
            return Err(TableError::ShapeMismatch {
                expected,
                found: counts.len(),
            });
        }
        let shape = schema.variables.iter().map(Variable::n_categories).collect();
        let total = counts.iter().sum();
        Ok(FreqTable {
            schema,
            shape,
            counts,
            total,
        })
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn variables(&self) -> &[Variable] {
        &self.schema.variables
    }

    pub fn arity(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Flat row-major counts.
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn n_cells(&self) -> usize {
        self.counts.len()
    }

    pub fn strides(&self) -> Vec<usize> {
        strides_of(&self.shape)
    }

    pub fn get(&self, index: &[usize]) -> u64 {
        assert_eq!(index.len(), self.shape.len(), "index arity");
        let flat = index
            .iter()
            .zip(self.strides())
            .map(|(&i, s)| i * s)
            .sum::<usize>();
        self.counts[flat]
    }

    pub fn axis_of(&self, name: &str) -> Result<usize, TableError> {
        self.schema
            .index_of(name)
            .ok_or_else(|| TableError::UnknownVariable(name.to_owned()))
    }

    /// Sum of counts per category of one axis.
    pub fn axis_totals(&self, axis: usize) -> Vec<u64> {
        let mut out = vec![0u64; self.shape[axis]];
        let stride = self.strides()[axis];
        let extent = self.shape[axis];
        for (flat, &c) in self.counts.iter().enumerate() {
            out[(flat / stride) % extent] += c;
        }
        out
    }

    /// Scatter every source cell into a new table.
    ///
    /// `targets[axis][category]` is the contribution of that source
    /// coordinate to the target flat offset, or `None` to drop the cell.
    fn project(&self, schema: Schema, targets: &[Vec<Option<usize>>]) -> Result<FreqTable, TableError> {
        debug_assert_eq!(targets.len(), self.shape.len());
        let mut out = vec![0u64; cell_count(&schema)?];
        let k = self.shape.len();
        let mut idx = vec![0usize; k];
        for &c in &self.counts {
            if c != 0 {
                let mut offset = Some(0usize);
                for (axis, &i) in idx.iter().enumerate() {
                    offset = offset.and_then(|o| targets[axis][i].map(|t| o + t));
                }
                if let Some(o) = offset {
                    out[o] += c;
                }
            }
            for axis in (0..k).rev() {
                idx[axis] += 1;
                if idx[axis] < self.shape[axis] {
                    break;
                }
                idx[axis] = 0;
            }
        }
        FreqTable::from_counts(schema, out)
    }

    fn identity_targets(&self, strides: &[usize]) -> Vec<Vec<Option<usize>>> {
        self.shape
            .iter()
            .zip(strides)
            .map(|(&n, &s)| (0..n).map(|c| Some(c * s)).collect())
            .collect()
    }

    /// Sum over every axis not in `keep`. The result keeps this table's
    /// axis order regardless of the order of `keep`.
    pub fn marginalize<S: AsRef<str>>(&self, keep: &[S]) -> Result<FreqTable, TableError> {
        if keep.is_empty() {
            return Err(TableError::EmptyKeepList);
        }
        let mut kept = vec![false; self.arity()];
        for name in keep {
            kept[self.axis_of(name.as_ref())?] = true;
        }
        let variables: Vec<Variable> = self
            .variables()
            .iter()
            .zip(&kept)
            .filter(|(_, &k)| k)
            .map(|(v, _)| v.clone())
            .collect();
        let new_shape: Vec<usize> = variables.iter().map(Variable::n_categories).collect();
        let new_strides = strides_of(&new_shape);
        let mut next = 0;
        let targets: Vec<Vec<Option<usize>>> = (0..self.arity())
            .map(|axis| {
                if kept[axis] {
                    let s = new_strides[next];
                    next += 1;
                    (0..self.shape[axis]).map(|c| Some(c * s)).collect()
                } else {
                    vec![Some(0); self.shape[axis]]
                }
            })
            .collect();
        self.project(Schema { variables }, &targets)
    }

    pub fn permute_axes<S: AsRef<str>>(&self, order: &[S]) -> Result<FreqTable, TableError> {
        let not_perm = || TableError::NotAPermutation(order.iter().map(|s| s.as_ref().to_owned()).collect());
        if order.len() != self.arity() {
            return Err(not_perm());
        }
        // position[source axis] = target axis
        let mut position = vec![usize::MAX; self.arity()];
        for (target, name) in order.iter().enumerate() {
            let src = self.schema.index_of(name.as_ref()).ok_or_else(not_perm)?;
            if position[src] != usize::MAX {
                return Err(not_perm());
            }
            position[src] = target;
        }
        let variables: Vec<Variable> = order
            .iter()
            .map(|n| self.schema.variable(n.as_ref()).expect("checked").clone())
            .collect();
        let new_shape: Vec<usize> = variables.iter().map(Variable::n_categories).collect();
        let new_strides = strides_of(&new_shape);
        let targets: Vec<Vec<Option<usize>>> = (0..self.arity())
            .map(|axis| {
                let s = new_strides[position[axis]];
                (0..self.shape[axis]).map(|c| Some(c * s)).collect()
            })
            .collect();
        self.project(Schema { variables }, &targets)
    }

    /// Sum the slices for `cats` into one slice labelled `new_label`, placed
    /// where the first merged category (in axis order) was.
    ///
    /// When the variable carries scores, the merged category gets the
    /// count-weighted mean of the merged scores (plain mean if they are all
    /// empty).
    pub fn merge_categories<S: AsRef<str>>(
        &self,
        var: &str,
        cats: &[S],
        new_label: &str,
    ) -> Result<FreqTable, TableError> {
        let axis = self.axis_of(var)?;
        let v = &self.variables()[axis];
        let mut merged = vec![false; v.n_categories()];
        for c in cats {
            let i = self.category_of(axis, c.as_ref())?;
            if merged[i] {
                return Err(TableError::DuplicateLabel {
                    variable: var.to_owned(),
                    label: c.as_ref().to_owned(),
                });
            }
            merged[i] = true;
        }
        if cats.len() < 2 {
            return Err(TableError::MergeNeedsTwo);
        }
        if let Some(existing) = v.category_index(new_label) {
            if !merged[existing] {
                return Err(TableError::DuplicateLabel {
                    variable: var.to_owned(),
                    label: new_label.to_owned(),
                });
            }
        }
        let first = merged.iter().position(|&m| m).expect("at least two merged");

        // old category index -> new category index
        let mut remap = Vec::with_capacity(v.n_categories());
        let mut categories = Vec::new();
        let mut scores = v.scores.as_ref().map(|_| Vec::new());
        let totals = self.axis_totals(axis);
        for (i, label) in v.categories.iter().enumerate() {
            if merged[i] {
                remap.push(first);
                if i == first {
                    categories.push(new_label.to_owned());
                    if let (Some(out), Some(src)) = (scores.as_mut(), v.scores.as_ref()) {
                        out.push(merged_score(src, &totals, &merged));
                    }
                }
            } else {
                remap.push(categories.len());
                categories.push(label.clone());
                if let (Some(out), Some(src)) = (scores.as_mut(), v.scores.as_ref()) {
                    out.push(src[i]);
                }
            }
        }
        self.relabel_axis(axis, categories, scores, &remap.into_iter().map(Some).collect::<Vec<_>>())
    }

    pub fn remove_category(&self, var: &str, cat: &str) -> Result<FreqTable, TableError> {
        let axis = self.axis_of(var)?;
        let i = self.category_of(axis, cat)?;
        let v = &self.variables()[axis];
        if v.n_categories() < 2 {
            return Err(TableError::LastCategory(var.to_owned()));
        }
        let mut categories = v.categories.clone();
        categories.remove(i);
        let scores = v.scores.clone().map(|mut s| {
            s.remove(i);
            s
        });
        let remap: Vec<Option<usize>> = (0..v.n_categories())
            .map(|c| match c.cmp(&i) {
                std::cmp::Ordering::Less => Some(c),
                std::cmp::Ordering::Equal => None,
                std::cmp::Ordering::Greater => Some(c - 1),
            })
            .collect();
        self.relabel_axis(axis, categories, scores, &remap)
    }

    /// Append an empty category. A scored variable gives it the score one
    /// above its current maximum; the value never matters while the slice is
    /// empty.
    pub fn add_category(&self, var: &str, label: &str) -> Result<FreqTable, TableError> {
        let axis = self.axis_of(var)?;
        let v = &self.variables()[axis];
        if v.category_index(label).is_some() {
            return Err(TableError::DuplicateLabel {
                variable: var.to_owned(),
                label: label.to_owned(),
            });
        }
        let mut categories = v.categories.clone();
        categories.push(label.to_owned());
        let scores = v.scores.clone().map(|mut s| {
            let top = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            s.push(if top.is_finite() { top + 1.0 } else { 0.0 });
            s
        });
        let remap: Vec<Option<usize>> = (0..v.n_categories()).map(Some).collect();
        self.relabel_axis(axis, categories, scores, &remap)
    }

    /// Condition on one category of `var`, dropping that axis.
    pub fn select(&self, var: &str, cat: &str) -> Result<FreqTable, TableError> {
        let axis = self.axis_of(var)?;
        let i = self.category_of(axis, cat)?;
        if self.arity() < 2 {
            return Err(TableError::WrongArity {
                expected: 2,
                found: self.arity(),
            });
        }
        let variables: Vec<Variable> = self
            .variables()
            .iter()
            .enumerate()
            .filter(|&(a, _)| a != axis)
            .map(|(_, v)| v.clone())
            .collect();
        let new_shape: Vec<usize> = variables.iter().map(Variable::n_categories).collect();
        let new_strides = strides_of(&new_shape);
        let mut next = 0;
        let targets: Vec<Vec<Option<usize>>> = (0..self.arity())
            .map(|a| {
                if a == axis {
                    (0..self.shape[a]).map(|c| (c == i).then_some(0)).collect()
                } else {
                    let s = new_strides[next];
                    next += 1;
                    (0..self.shape[a]).map(|c| Some(c * s)).collect()
                }
            })
            .collect();
        self.project(Schema { variables }, &targets)
    }

    fn category_of(&self, axis: usize, label: &str) -> Result<usize, TableError> {
        let v = &self.variables()[axis];
        v.category_index(label).ok_or_else(|| TableError::UnknownCategory {
            variable: v.name.clone(),
            label: label.to_owned(),
            row: None,
        })
    }

    fn relabel_axis(
        &self,
        axis: usize,
        categories: Vec<String>,
        scores: Option<Vec<f64>>,
        remap: &[Option<usize>],
    ) -> Result<FreqTable, TableError> {
        let mut variables = self.variables().to_vec();
        variables[axis].categories = categories;
        variables[axis].scores = scores;
        let new_shape: Vec<usize> = variables.iter().map(Variable::n_categories).collect();
        let new_strides = strides_of(&new_shape);
        let mut targets = self.identity_targets(&new_strides);
        targets[axis] = remap.iter().map(|m| m.map(|c| c * new_strides[axis])).collect();
        self.project(Schema { variables }, &targets)
    }

    /// Two-way counts oriented with `bar_var` as rows.
    pub fn oriented_counts(&self, bar_var: &str) -> Result<Vec<Vec<u64>>, TableError> {
        if self.arity() != 2 {
            return Err(TableError::WrongArity {
                expected: 2,
                found: self.arity(),
            });
        }
        let bar_axis = self.axis_of(bar_var)?;
        let (n, m) = (self.shape[bar_axis], self.shape[1 - bar_axis]);
        let mut rows = vec![vec![0u64; m]; n];
        for (i, row) in rows.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = if bar_axis == 0 {
                    self.counts[i * m + j]
                } else {
                    self.counts[j * n + i]
                };
            }
        }
        Ok(rows)
    }

    /// The other variable of a 2-way table.
    pub fn other_variable(&self, name: &str) -> Result<&Variable, TableError> {
        if self.arity() != 2 {
            return Err(TableError::WrongArity {
                expected: 2,
                found: self.arity(),
            });
        }
        let axis = self.axis_of(name)?;
        Ok(&self.variables()[1 - axis])
    }

    /// Within-bar composition of a 2-way table.
    pub fn proportions<T: Real>(&self, bar_var: &str) -> Result<ProportionMatrix<T>, TableError> {
        let counts = self.oriented_counts(bar_var)?;
        let bar = self.schema.variable(bar_var).expect("checked");
        let color = self.other_variable(bar_var)?;
        let bar_totals: Vec<u64> = counts.iter().map(|r| r.iter().sum()).collect();
        let rows = counts
            .iter()
            .zip(&bar_totals)
            .map(|(row, &tot)| {
                if tot == 0 {
                    vec![T::zero(); row.len()]
                } else {
                    let denom = T::from_count(tot);
                    row.iter().map(|&c| T::from_count(c) / denom).collect()
                }
            })
            .collect();
        Ok(ProportionMatrix {
            bar_variable: bar.name.clone(),
            bar_labels: bar.categories.clone(),
            color_labels: color.categories.clone(),
            rows,
            bar_totals,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("table serializes")
    }

    pub fn from_json(text: &str) -> Result<FreqTable, TableError> {
        let j: TableJson = serde_json::from_str(text)
            .map_err(|e| TableError::Schema(IngestError::Malformed(e.to_string())))?;
        FreqTable::try_from(j)
    }
}

fn merged_score(scores: &[f64], totals: &[u64], merged: &[bool]) -> f64 {
    let (mut num, mut den, mut plain, mut n) = (0.0, 0u64, 0.0, 0usize);
    for i in (0..scores.len()).filter(|&i| merged[i]) {
        num += scores[i] * totals[i] as f64;
        den += totals[i];
        plain += scores[i];
        n += 1;
    }
    if den > 0 {
        num / den as f64
    } else {
        plain / n as f64
    }
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

/// Tally the records of `rs` over the variables of `schema`, matching
/// columns by name.
pub fn build_table(rs: &RecordSet, schema: &Schema) -> Result<FreqTable, TableError> {
    let mut table = FreqTable::zeros(schema.clone())?;
    let strides = table.strides();
    let mut columns = Vec::with_capacity(schema.variables.len());
    for v in &schema.variables {
        let col = rs
            .column_index(&v.name)
            .ok_or_else(|| TableError::UnknownVariable(v.name.clone()))?;
        let lookup: HashMap<&str, usize> = v
            .categories
            .iter()
            .enumerate()
            .map(|(i, c)| (c.as_str(), i))
            .collect();
        columns.push((col, lookup));
    }
    for (r, row) in rs.rows.iter().enumerate() {
        let mut flat = 0usize;
        for (axis, (col, lookup)) in columns.iter().enumerate() {
            let label = cell_label(&row[*col]);
            let c = *lookup.get(label).ok_or_else(|| TableError::UnknownCategory {
                variable: schema.variables[axis].name.clone(),
                label: label.to_owned(),
                row: Some(r + 1),
            })?;
            flat += c * strides[axis];
        }
        table.counts[flat] += 1;
    }
    table.total = rs.rows.len() as u64;
    Ok(table)
}

/// A table operation as data, so it can be recorded and replayed.
///
/// JSON form: `{"kind": "merge", "args": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "args", rename_all = "snake_case")]
pub enum TableOp {
    Merge {
        variable: String,
        categories: Vec<String>,
        new_label: String,
    },
    Remove {
        variable: String,
        category: String,
    },
    Add {
        variable: String,
        label: String,
    },
    Marginalize {
        keep: Vec<String>,
    },
    Permute {
        order: Vec<String>,
    },
    Select {
        variable: String,
        category: String,
    },
}

impl TableOp {
    pub fn apply(&self, t: &FreqTable) -> Result<FreqTable, TableError> {
        match self {
            TableOp::Merge {
                variable,
                categories,
                new_label,
            } => t.merge_categories(variable, categories, new_label),
            TableOp::Remove { variable, category } => t.remove_category(variable, category),
            TableOp::Add { variable, label } => t.add_category(variable, label),
            TableOp::Marginalize { keep } => t.marginalize(keep),
            TableOp::Permute { order } => t.permute_axes(order),
            TableOp::Select { variable, category } => t.select(variable, category),
        }
    }
}

/// Apply `ops` in order to `base`.
pub fn replay(base: &FreqTable, ops: &[TableOp]) -> Result<FreqTable, TableError> {
    ops.iter().try_fold(base.clone(), |t, op| op.apply(&t))
}

/// Within-bar compositions: row `i` is the color distribution of bar `i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProportionMatrix<T> {
    pub bar_variable: String,
    pub bar_labels: Vec<String>,
    pub color_labels: Vec<String>,
    pub rows: Vec<Vec<T>>,
    pub bar_totals: Vec<u64>,
}

impl<T: Real> ProportionMatrix<T> {
    /// Build directly from rows; used by tests and by callers that already
    /// hold compositions. Labels are synthesized.
    pub fn from_rows(rows: Vec<Vec<T>>) -> Self {
        let m = rows.first().map_or(0, Vec::len);
        ProportionMatrix {
            bar_variable: "bars".to_owned(),
            bar_labels: (0..rows.len()).map(|i| format!("r{i}")).collect(),
            color_labels: (0..m).map(|j| format!("c{j}")).collect(),
            bar_totals: vec![1; rows.len()],
            rows,
        }
    }

    pub fn n_bars(&self) -> usize {
        self.rows.len()
    }

    pub fn n_colors(&self) -> usize {
        self.color_labels.len()
    }

    /// Overall color composition, pooled over bars by count.
    pub fn overall(&self) -> Vec<T> {
        let total: u64 = self.bar_totals.iter().sum();
        let mut out = vec![T::zero(); self.n_colors()];
        if total == 0 {
            return out;
        }
        let denom = T::from_count(total);
        for (row, &bt) in self.rows.iter().zip(&self.bar_totals) {
            let w = T::from_count(bt) / denom;
            for (o, &p) in out.iter_mut().zip(row) {
                *o += w * p;
            }
        }
        out
    }
}
