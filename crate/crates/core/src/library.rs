//! Glue between ingest, tables, plots and questions: load a dataset, list
//! its plot library, and render views over variable subsets.

use crate::freqtable::{build_table, FreqTable, TableError};
use crate::ingest::{
    apply_codebook, infer_schema, parse_csv, Codebook, CsvConfig, IngestError, Schema,
    DEFAULT_MAX_CATEGORIES,
};
use crate::plots::{default_bar_var, render, PlotError, PlotKind, PlotSpec, SvgDoc};
use crate::questions::{generate_questions, Question, QuestionConfig, QuestionError};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LoadError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Table(#[from] TableError),
}

impl LoadError {
    pub fn code(&self) -> &'static str {
        match self {
            LoadError::Ingest(e) => e.code(),
            LoadError::Table(e) => e.code(),
        }
    }
}

/// Parse `csv`, infer the schema, refine it with the optional codebook JSON,
/// and tally the table.
pub fn load_table(csv: &[u8], codebook: Option<&str>) -> Result<FreqTable, LoadError> {
    let rs = parse_csv(csv, CsvConfig::default())?;
    let mut schema: Schema = infer_schema(&rs, DEFAULT_MAX_CATEGORIES)?;
    if let Some(text) = codebook {
        schema = apply_codebook(&schema, &Codebook::from_json(text)?)?;
    }
    Ok(build_table(&rs, &schema)?)
}

/// Every 1-variable plot followed by every unordered pair, in schema order.
pub fn library_specs(t: &FreqTable, dataset: &str) -> Vec<PlotSpec> {
    let names: Vec<String> = t.variables().iter().map(|v| v.name.clone()).collect();
    let mut specs = Vec::new();
    for n in &names {
        specs.push(PlotSpec {
            dataset: dataset.to_owned(),
            ..PlotSpec::new(PlotKind::Bar1, vec![n.clone()])
        });
    }
    for i in 0..names.len() {
        for j in i + 1..names.len() {
            specs.push(PlotSpec {
                dataset: dataset.to_owned(),
                ..PlotSpec::new(PlotKind::Panel2, vec![names[i].clone(), names[j].clone()])
            });
        }
    }
    specs
}

/// Marginalize `t` onto `vars` (kept in the order given) and check arity.
pub fn view<S: AsRef<str>>(t: &FreqTable, vars: &[S]) -> Result<FreqTable, TableError> {
    let kept = t.marginalize(vars)?;
    if kept.arity() != vars.len() {
        return Err(TableError::NotAPermutation(
            vars.iter().map(|s| s.as_ref().to_owned()).collect(),
        ));
    }
    kept.permute_axes(vars)
}

/// Render `spec` against a table that may hold more variables than it uses.
pub fn render_view(t: &FreqTable, spec: &PlotSpec) -> Result<SvgDoc, PlotError> {
    spec.validate()?;
    render(&view(t, &spec.vars)?, spec)
}

/// Leading questions about the two-way view `vars` of `t`.
pub fn questions_view<S: AsRef<str>>(
    t: &FreqTable,
    vars: &[S],
    bar_var: Option<&str>,
    config: &QuestionConfig,
) -> Result<Vec<Question>, QuestionError> {
    if vars.len() != 2 {
        return Err(QuestionError::Table(TableError::WrongArity {
            expected: 2,
            found: vars.len(),
        }));
    }
    let v = view(t, vars)?;
    let bar = match bar_var {
        Some(b) => b.to_owned(),
        None => default_bar_var(&v).expect("two variables").to_owned(),
    };
    generate_questions(&v, &bar, config)
}
