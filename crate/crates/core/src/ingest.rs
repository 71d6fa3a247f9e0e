//! Delimited-file ingestion and categorical schema inference.

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, HashSet};
use thiserror::Error;

/// Label given to empty cells. Nonresponse stays visible as its own category.
pub const MISSING_LABEL: &str = "(missing)";

/// Default cap on distinct values per column.
pub const DEFAULT_MAX_CATEGORIES: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IngestError {
    #[error("input has no columns")]
    EmptyInput,
    #[error("input has no data rows")]
    NoRecords,
    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedRow {
        /// 1-based record number in the file, header included.
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("input is not valid UTF-8 (first bad byte at offset {offset})")]
    EncodingError { offset: usize },
    #[error("malformed delimited input: {0}")]
    Malformed(String),
    #[error("column {column:?} has more than {max} distinct values")]
    TooManyCategories { column: String, max: usize },
    #[error("max_categories must be at least 2, got {0}")]
    InvalidMaxCategories(usize),
    #[error("duplicate variable name {0:?}")]
    DuplicateName(String),
    #[error("variable {variable:?} lists category {label:?} twice")]
    DuplicateLabel { variable: String, label: String },
    #[error("bad scores for {variable:?}: {reason}")]
    BadScores { variable: String, reason: String },
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("codebook order for {variable:?} omits observed category {label:?}")]
    CodebookMismatch { variable: String, label: String },
    #[error("invalid codebook: {0}")]
    BadCodebook(String),
}

impl IngestError {
    /// Stable machine-readable name, used in API error bodies and CLI exits.
    pub fn code(&self) -> &'static str {
        match self {
            IngestError::EmptyInput => "EmptyInput",
            IngestError::NoRecords => "NoRecords",
            IngestError::RaggedRow { .. } => "RaggedRow",
            IngestError::EncodingError { .. } => "EncodingError",
            IngestError::Malformed(_) => "Malformed",
            IngestError::TooManyCategories { .. } => "TooManyCategories",
            IngestError::InvalidMaxCategories(_) => "InvalidMaxCategories",
            IngestError::DuplicateName(_) => "DuplicateName",
            IngestError::DuplicateLabel { .. } => "DuplicateLabel",
            IngestError::BadScores { .. } => "BadScores",
            IngestError::UnknownVariable(_) => "UnknownVariable",
            IngestError::CodebookMismatch { .. } => "CodebookMismatch",
            IngestError::BadCodebook(_) => "BadCodebook",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CsvConfig {
    pub delimiter: u8,
    pub has_header: bool,
}

impl Default for CsvConfig {
    fn default() -> Self {
        CsvConfig {
            delimiter: b',',
            has_header: true,
        }
    }
}

/// Raw string cells, one row per record.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordSet {
    pub column_names: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RecordSet {
    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    /// Re-serialize as delimited text. Quoting is normalized by the writer.
    pub fn to_csv(&self, delimiter: u8) -> String {
        let mut w = csv::WriterBuilder::new()
            .delimiter(delimiter)
            .from_writer(Vec::new());
        w.write_record(&self.column_names).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 in, utf-8 out")
    }
}

pub fn parse_csv(input: &[u8], config: CsvConfig) -> Result<RecordSet, IngestError> {
    if let Err(e) = std::str::from_utf8(input) {
        return Err(IngestError::EncodingError {
            offset: e.valid_up_to(),
        });
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(config.delimiter)
        .has_headers(false)
        .flexible(true)
        .from_reader(input);

    let mut records = reader.records();
    let first = match records.next() {
        None => return Err(IngestError::EmptyInput),
        Some(r) => r.map_err(|e| IngestError::Malformed(e.to_string()))?,
    };
    let width = first.len();
    if width == 0 {
        return Err(IngestError::EmptyInput);
    }

    let mut rows = Vec::new();
    let column_names: Vec<String> = if config.has_header {
        first.iter().map(str::to_owned).collect()
    } else {
        rows.push(first.iter().map(str::to_owned).collect());
        (1..=width).map(|i| format!("col{i}")).collect()
    };

    for (i, rec) in records.enumerate() {
        let rec = rec.map_err(|e| IngestError::Malformed(e.to_string()))?;
        if rec.len() != width {
            return Err(IngestError::RaggedRow {
                row: i + 2,
                expected: width,
                found: rec.len(),
            });
        }
        rows.push(rec.iter().map(str::to_owned).collect());
    }

    Ok(RecordSet { column_names, rows })
}

/// Maps a raw cell to its category label.
pub fn cell_label(cell: &str) -> &str {
    if cell.trim().is_empty() {
        MISSING_LABEL
    } else {
        cell
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub categories: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
}

impl Variable {
    pub fn new(name: impl Into<String>, categories: Vec<String>) -> Self {
        Variable {
            name: name.into(),
            categories,
            scores: None,
        }
    }

    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn category_index(&self, label: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == label)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let mut seen = HashSet::new();
        for c in &self.categories {
            if !seen.insert(c.as_str()) {
                return Err(IngestError::DuplicateLabel {
                    variable: self.name.clone(),
                    label: c.clone(),
                });
            }
        }
        if let Some(scores) = &self.scores {
            if scores.len() != self.categories.len() {
                return Err(IngestError::BadScores {
                    variable: self.name.clone(),
                    reason: format!(
                        "{} scores for {} categories",
                        scores.len(),
                        self.categories.len()
                    ),
                });
            }
            if scores.iter().any(|s| !s.is_finite()) {
                return Err(IngestError::BadScores {
                    variable: self.name.clone(),
                    reason: "scores must be finite".into(),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub variables: Vec<Variable>,
}

impl Schema {
    pub fn new(variables: Vec<Variable>) -> Result<Self, IngestError> {
        let schema = Schema { variables };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        let mut names = HashSet::new();
        for v in &self.variables {
            if !names.insert(v.name.as_str()) {
                return Err(IngestError::DuplicateName(v.name.clone()));
            }
            v.validate()?;
        }
        Ok(())
    }

    pub fn variable(&self, name: &str) -> Option<&Variable> {
        self.variables.iter().find(|v| v.name == name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v.name == name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.variables.iter().map(|v| v.name.as_str()).collect()
    }
}

/// One variable per column; categories in first-appearance order.
pub fn infer_schema(rs: &RecordSet, max_categories: usize) -> Result<Schema, IngestError> {
    if max_categories < 2 {
        return Err(IngestError::InvalidMaxCategories(max_categories));
    }
    if rs.n_cols() == 0 {
        return Err(IngestError::EmptyInput);
    }
    if rs.rows.is_empty() {
        return Err(IngestError::NoRecords);
    }

    let mut variables = Vec::with_capacity(rs.n_cols());
    for (col, name) in rs.column_names.iter().enumerate() {
        let mut seen: HashMap<&str, ()> = HashMap::new();
        let mut categories = Vec::new();
        for row in &rs.rows {
            let label = cell_label(&row[col]);
            if seen.insert(label, ()).is_none() {
                if categories.len() == max_categories {
                    return Err(IngestError::TooManyCategories {
                        column: name.clone(),
                        max: max_categories,
                    });
                }
                categories.push(label.to_owned());
            }
        }
        variables.push(Variable::new(name.clone(), categories));
    }
    Schema::new(variables)
}

/// Per-variable override: display order and ordinal scores.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CodebookEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scores: Option<Vec<f64>>,
}

/// `{"variable": {"order": [labels], "scores": [numbers]}}`
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Codebook(pub BTreeMap<String, CodebookEntry>);

impl Codebook {
    pub fn from_json(text: &str) -> Result<Self, IngestError> {
        serde_json::from_str(text).map_err(|e| IngestError::BadCodebook(e.to_string()))
    }
}

/// Reorders categories and attaches scores. An `order` must list every
/// observed category; extra labels become zero-count categories.
pub fn apply_codebook(schema: &Schema, codebook: &Codebook) -> Result<Schema, IngestError> {
    let mut out = schema.clone();
    for (name, entry) in &codebook.0 {
        let var = out
            .variables
            .iter_mut()
            .find(|v| &v.name == name)
            .ok_or_else(|| IngestError::UnknownVariable(name.clone()))?;
        if let Some(order) = &entry.order {
            for label in &var.categories {
                if !order.contains(label) {
                    return Err(IngestError::CodebookMismatch {
                        variable: name.clone(),
                        label: label.clone(),
                    });
                }
            }
            var.categories = order.clone();
        }
        if let Some(scores) = &entry.scores {
            var.scores = Some(scores.clone());
        }
        var.validate()?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<RecordSet, IngestError> {
        parse_csv(text.as_bytes(), CsvConfig::default())
    }

    #[test]
    fn parses_header_and_rows() {
        let rs = parse("a,b\n1,x\n2,y").unwrap();
        assert_eq!(rs.column_names, vec!["a", "b"]);
        assert_eq!(rs.rows, vec![vec!["1", "x"], vec!["2", "y"]]);
    }

    #[test]
    fn empty_input_is_an_error() {
        assert_eq!(parse(""), Err(IngestError::EmptyInput));
    }

    #[test]
    fn synthetic_names_without_header() {
        let cfg = CsvConfig {
            delimiter: b';',
            has_header: false,
        };
        let rs = parse_csv(b"1;x;q\n2;y;r\n", cfg).unwrap();
        assert_eq!(rs.column_names, vec!["col1", "col2", "col3"]);
        assert_eq!(rs.n_rows(), 2);
    }

    #[test]
    fn ragged_row_reports_record_number() {
        let err = parse("a,b\n1,x\n2\n").unwrap_err();
        assert_eq!(
            err,
            IngestError::RaggedRow {
                row: 3,
                expected: 2,
                found: 1
            }
        );
        assert_eq!(err.code(), "RaggedRow");
    }

    #[test]
    fn invalid_utf8_is_rejected() {
        let err = parse_csv(b"a,b\n\xff,x\n", CsvConfig::default()).unwrap_err();
        assert_eq!(err, IngestError::EncodingError { offset: 4 });
    }

    #[test]
    fn quoted_cells_keep_delimiters() {
        let rs = parse("name,note\n\"Smith, J\",\"said \"\"hi\"\"\"\n").unwrap();
        assert_eq!(rs.rows[0], vec!["Smith, J", "said \"hi\""]);
    }

    #[test]
    fn infers_distinct_values_in_first_appearance_order() {
        let rs = parse("v\nx\ny\nx\nz\n").unwrap();
        let schema = infer_schema(&rs, 64).unwrap();
        assert_eq!(schema.variables[0].categories, vec!["x", "y", "z"]);
        assert!(schema.variables[0].scores.is_none());
    }

    #[test]
    fn too_many_categories_at_boundary() {
        let mut text = String::from("v\n");
        for i in 0..65 {
            text.push_str(&format!("c{i}\n"));
        }
        let rs = parse(&text).unwrap();
        assert!(matches!(
            infer_schema(&rs, 64),
            Err(IngestError::TooManyCategories { max: 64, .. })
        ));
        // 64 distinct values still fit.
        let rs64 = RecordSet {
            column_names: rs.column_names.clone(),
            rows: rs.rows[..64].to_vec(),
        };
        assert_eq!(infer_schema(&rs64, 64).unwrap().variables[0].n_categories(), 64);
    }

    #[test]
    fn ten_row_file_counts_match_brute_force() {
        let text = "sex,dept\nM,Eng\nF,Med\nM,Law\nM,Eng\nF,Eng\nF,Law\nM,Med\nF,Med\nM,Law\nF,Eng\n";
        let rs = parse(text).unwrap();
        let schema = infer_schema(&rs, 64).unwrap();
        assert_eq!(schema.variables.len(), 2);
        for (col, var) in schema.variables.iter().enumerate() {
            let mut distinct: Vec<&str> = rs.rows.iter().map(|r| r[col].as_str()).collect();
            distinct.sort_unstable();
            distinct.dedup();
            assert_eq!(var.n_categories(), distinct.len());
        }
        assert_eq!(schema.variables[0].n_categories(), 2);
        assert_eq!(schema.variables[1].n_categories(), 3);
    }

    #[test]
    fn empty_cells_become_missing_category() {
        let rs = parse("a,b\nx,\n,y\n").unwrap();
        let schema = infer_schema(&rs, 64).unwrap();
        assert_eq!(schema.variables[0].categories, vec!["x", MISSING_LABEL]);
        assert_eq!(schema.variables[1].categories, vec![MISSING_LABEL, "y"]);
    }

    #[test]
    fn no_rows_is_an_error() {
        let rs = parse("a,b\n").unwrap();
        assert_eq!(infer_schema(&rs, 64), Err(IngestError::NoRecords));
    }

    #[test]
    fn duplicate_header_names_rejected() {
        let rs = parse("a,a\n1,2\n").unwrap();
        assert_eq!(
            infer_schema(&rs, 64),
            Err(IngestError::DuplicateName("a".into()))
        );
    }

    #[test]
    fn codebook_reorders_and_scores() {
        let rs = parse("rank\nsecond\nfirst\nthird\n").unwrap();
        let schema = infer_schema(&rs, 64).unwrap();
        let cb = Codebook::from_json(
            r#"{"rank": {"order": ["first","second","third","higher"], "scores": [1,2,3,4]}}"#,
        )
        .unwrap();
        let out = apply_codebook(&schema, &cb).unwrap();
        let v = &out.variables[0];
        assert_eq!(v.categories, vec!["first", "second", "third", "higher"]);
        assert_eq!(v.scores.as_deref(), Some(&[1.0, 2.0, 3.0, 4.0][..]));
    }

    #[test]
    fn codebook_errors() {
        let rs = parse("rank\nsecond\nfirst\n").unwrap();
        let schema = infer_schema(&rs, 64).unwrap();
        let omit = Codebook::from_json(r#"{"rank": {"order": ["first"]}}"#).unwrap();
        assert!(matches!(
            apply_codebook(&schema, &omit),
            Err(IngestError::CodebookMismatch { .. })
        ));
        let short = Codebook::from_json(r#"{"rank": {"scores": [1]}}"#).unwrap();
        assert!(matches!(
            apply_codebook(&schema, &short),
            Err(IngestError::BadScores { .. })
        ));
        let unknown = Codebook::from_json(r#"{"nope": {}}"#).unwrap();
        assert_eq!(
            apply_codebook(&schema, &unknown),
            Err(IngestError::UnknownVariable("nope".into()))
        );
    }

    proptest! {
        #[test]
        fn reserialization_is_lossless(
            rows in prop::collection::vec(prop::collection::vec("[a-z ,\"]{1,6}", 3), 1..20)
        ) {
            let rs = RecordSet { column_names: vec!["a".into(), "b".into(), "c".into()], rows };
            let text = rs.to_csv(b',');
            let back = parse_csv(text.as_bytes(), CsvConfig::default()).unwrap();
            prop_assert_eq!(back, rs);
        }

        #[test]
        fn inferred_categories_are_exactly_the_distinct_values(
            rows in prop::collection::vec(prop::collection::vec("[abc]{0,1}", 2), 1..40)
        ) {
            let rs = RecordSet { column_names: vec!["p".into(), "q".into()], rows };
            let schema = infer_schema(&rs, 64).unwrap();
            for (col, var) in schema.variables.iter().enumerate() {
                let brute: HashSet<&str> = rs.rows.iter().map(|r| cell_label(&r[col])).collect();
                let got: HashSet<&str> = var.categories.iter().map(String::as_str).collect();
                prop_assert_eq!(got, brute);
                prop_assert_eq!(var.categories.len(), var.categories.iter().collect::<HashSet<_>>().len());
            }
        }
    }
}
