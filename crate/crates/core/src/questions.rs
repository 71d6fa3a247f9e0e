//! Leading questions for a two-way table.
//!
//! Each question is produced by one statistic the engine already computes,
//! and carries that statistic as evidence:
//!
//! 1. the cell with the largest |Pearson residual|,
//! 2. the bar whose composition is farthest (ℓ1) from the pooled one,
//! 3. a color share trending along the seriated bar order (Kendall tau),
//! 4. cells with small expected counts,
//! 5. the largest ℓ1 gap between neighboring bars in the seriated order,
//!
//! followed by one generic question about the most common color category.

use crate::freqtable::{FreqTable, TableError};
use crate::plots::PlotError;
use crate::seriation::{l1, seriate, SeriationConfig, SeriationError};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

/// Statistics at or below this are treated as zero.
const NEGLIGIBLE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuestionError {
    #[error("max_q must be at least 1")]
    InvalidMaxQuestions,
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Seriation(#[from] SeriationError),
    #[error(transparent)]
    Plot(#[from] PlotError),
}

impl QuestionError {
    pub fn code(&self) -> &'static str {
        match self {
            QuestionError::InvalidMaxQuestions => "InvalidMaxQuestions",
            QuestionError::Table(e) => e.code(),
            QuestionError::Seriation(e) => e.code(),
            QuestionError::Plot(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionKind {
    LargestDeviation,
    DominantCategory,
    OrderTrend,
    SmallCell,
    CompareBars,
}

/// What a question points at. `cells` are `[bar, color]` category indices
/// of the source table; `value` is the statistic quoted in the text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evidence {
    pub cells: Vec<[usize; 2]>,
    pub categories: Vec<String>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub text: String,
    pub kind: QuestionKind,
    pub evidence: Evidence,
}

/// English templates. Placeholders are `{name}`; unknown names are left as
/// they are. A replacement set can be loaded from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Templates {
    pub deviation: String,
    pub outlier_bar: String,
    pub trend: String,
    pub small_cells: String,
    pub gap: String,
    pub generic: String,
    pub more: String,
    pub less: String,
    pub increase: String,
    pub decrease: String,
}

impl Default for Templates {
    fn default() -> Self {
        Templates {
            deviation: "Why do {bar} / {color} responses occur {direction} often than expected if {bar_var} and {color_var} were unrelated? (Pearson residual {value})".into(),
            outlier_bar: "What makes {bar} different? Its {color_var} mix is the farthest from the overall mix (distance {value}).".into(),
            trend: "Does the share of {color} {direction} systematically across {bar_var}, from {first} to {last}? (Kendall tau {value})".into(),
            small_cells: "{count} cell(s) expect fewer than {threshold} responses (smallest: {bar} / {color}, {value} expected). Are differences there reliable?".into(),
            gap: "What separates {bar} from {other}? Their {color_var} mixes differ by {value}, the largest gap between neighboring bars.".into(),
            generic: "{color} is the most common {color_var} overall ({value} of responses). Is that true for every {bar_var}?".into(),
            more: "more".into(),
            less: "less".into(),
            increase: "increase".into(),
            decrease: "decrease".into(),
        }
    }
}

impl Templates {
    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn fill(template: &str, vars: &BTreeMap<&str, String>) -> String {
    let mut out = template.to_owned();
    for (k, v) in vars {
        out = out.replace(&format!("{{{k}}}"), v);
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuestionConfig {
    pub max_q: usize,
    pub tau_threshold: f64,
    pub min_expected: f64,
    pub seriation: SeriationConfig,
    pub templates: Templates,
}

impl Default for QuestionConfig {
    fn default() -> Self {
        QuestionConfig {
            max_q: 5,
            tau_threshold: 0.7,
            min_expected: 5.0,
            seriation: SeriationConfig::default(),
            templates: Templates::default(),
        }
    }
}

/// Kendall tau-b of `ys` against their positions 0..n.
pub fn kendall_tau_vs_position(ys: &[f64]) -> f64 {
    let n = ys.len();
    if n < 2 {
        return 0.0;
    }
    let (mut concordant, mut discordant, mut tied) = (0i64, 0i64, 0i64);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = ys[j] - ys[i];
            if d.abs() <= NEGLIGIBLE {
                tied += 1;
            } else if d > 0.0 {
                concordant += 1;
            } else {
                discordant += 1;
            }
        }
    }
    let pairs = (n * (n - 1) / 2) as f64;
    let denom = (pairs * (pairs - tied as f64)).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (concordant - discordant) as f64 / denom
    }
}

pub fn generate_questions(
    t: &FreqTable,
    bar_var: &str,
    config: &QuestionConfig,
) -> Result<Vec<Question>, QuestionError> {
    if config.max_q == 0 {
        return Err(QuestionError::InvalidMaxQuestions);
    }
    let counts = t.oriented_counts(bar_var)?;
    let props = t.proportions::<f64>(bar_var)?;
    let color_var = t.other_variable(bar_var)?.name.clone();
    let (n, m) = (props.n_bars(), props.n_colors());
    let tpl = &config.templates;
    let base = |extra: &[(&'static str, String)]| -> BTreeMap<&'static str, String> {
        let mut vars = BTreeMap::new();
        vars.insert("bar_var", bar_var.to_owned());
        vars.insert("color_var", color_var.clone());
        for (k, v) in extra {
            vars.insert(*k, v.clone());
        }
        vars
    };

    let mut out = Vec::new();
    let total = t.total();

    if total > 0 {
        let expected = crate::plots::expected_counts_oriented(&counts)?;
        let residuals = crate::plots::residuals_oriented(&counts)?;

        // 1. Largest deviation from independence.
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, row) in residuals.iter().enumerate() {
            for (j, &r) in row.iter().enumerate() {
                if best.is_none_or(|b| r.abs() > b.2.abs()) {
                    best = Some((i, j, r));
                }
            }
        }
        if let Some((i, j, r)) = best.filter(|b| b.2.abs() > NEGLIGIBLE) {
            let direction = if r > 0.0 { &tpl.more } else { &tpl.less };
            out.push(Question {
                text: fill(
                    &tpl.deviation,
                    &base(&[
                        ("bar", props.bar_labels[i].clone()),
                        ("color", props.color_labels[j].clone()),
                        ("direction", direction.clone()),
                        ("value", format!("{r:+.2}")),
                    ]),
                ),
                kind: QuestionKind::LargestDeviation,
                evidence: Evidence {
                    cells: vec![[i, j]],
                    categories: vec![props.bar_labels[i].clone(), props.color_labels[j].clone()],
                    value: r,
                },
            });
        }

        // 2. Bar farthest from the pooled composition.
        let overall = props.overall();
        let mut far: Option<(usize, f64)> = None;
        for i in (0..n).filter(|&i| props.bar_totals[i] > 0) {
            let d = l1(&props.rows[i], &overall)?;
            if far.is_none_or(|f| d > f.1) {
                far = Some((i, d));
            }
        }
        if let Some((i, d)) = far.filter(|f| f.1 > NEGLIGIBLE) {
            out.push(Question {
                text: fill(
                    &tpl.outlier_bar,
                    &base(&[("bar", props.bar_labels[i].clone()), ("value", format!("{d:.2}"))]),
                ),
                kind: QuestionKind::DominantCategory,
                evidence: Evidence {
                    cells: (0..m).map(|j| [i, j]).collect(),
                    categories: vec![props.bar_labels[i].clone()],
                    value: d,
                },
            });
        }

        // 3. Trend along the seriated order.
        let ordering = seriate(&props, config.seriation)?;
        let order: Vec<usize> = ordering
            .perm
            .iter()
            .copied()
            .filter(|&i| props.bar_totals[i] > 0)
            .collect();
        if order.len() >= 3 {
            let mut trend: Option<(usize, f64)> = None;
            for j in 0..m {
                let shares: Vec<f64> = order.iter().map(|&i| props.rows[i][j]).collect();
                let tau = kendall_tau_vs_position(&shares);
                if trend.is_none_or(|tr| tau.abs() > tr.1.abs()) {
                    trend = Some((j, tau));
                }
            }
            if let Some((j, tau)) = trend.filter(|tr| tr.1.abs() >= config.tau_threshold) {
                let direction = if tau > 0.0 { &tpl.increase } else { &tpl.decrease };
                let first = props.bar_labels[order[0]].clone();
                let last = props.bar_labels[*order.last().expect("nonempty")].clone();
                out.push(Question {
                    text: fill(
                        &tpl.trend,
                        &base(&[
                            ("color", props.color_labels[j].clone()),
                            ("direction", direction.clone()),
                            ("first", first.clone()),
                            ("last", last.clone()),
                            ("value", format!("{tau:.2}")),
                        ]),
                    ),
                    kind: QuestionKind::OrderTrend,
                    evidence: Evidence {
                        cells: order.iter().map(|&i| [i, j]).collect(),
                        categories: std::iter::once(props.color_labels[j].clone())
                            .chain(order.iter().map(|&i| props.bar_labels[i].clone()))
                            .collect(),
                        value: tau,
                    },
                });
            }
        }

        // 4. Small expected counts.
        let mut small: Vec<[usize; 2]> = Vec::new();
        let mut smallest: Option<(usize, usize, f64)> = None;
        for (i, row) in expected.iter().enumerate() {
            for (j, &e) in row.iter().enumerate() {
                if e < config.min_expected {
                    small.push([i, j]);
                    if smallest.is_none_or(|s| e < s.2) {
                        smallest = Some((i, j, e));
                    }
                }
            }
        }
        if let Some((i, j, e)) = smallest {
            out.push(Question {
                text: fill(
                    &tpl.small_cells,
                    &base(&[
                        ("count", small.len().to_string()),
                        ("threshold", format!("{}", config.min_expected)),
                        ("bar", props.bar_labels[i].clone()),
                        ("color", props.color_labels[j].clone()),
                        ("value", format!("{e:.1}")),
                    ]),
                ),
                kind: QuestionKind::SmallCell,
                evidence: Evidence {
                    cells: small,
                    categories: vec![props.bar_labels[i].clone(), props.color_labels[j].clone()],
                    value: e,
                },
            });
        }

        // 5. Largest gap between neighbors.
        let mut gap: Option<(usize, usize, f64)> = None;
        for w in ordering.perm.windows(2) {
            let d = l1(&props.rows[w[0]], &props.rows[w[1]])?;
            if gap.is_none_or(|g| d > g.2) {
                gap = Some((w[0], w[1], d));
            }
        }
        if let Some((a, b, d)) = gap.filter(|g| g.2 > NEGLIGIBLE) {
            out.push(Question {
                text: fill(
                    &tpl.gap,
                    &base(&[
                        ("bar", props.bar_labels[a].clone()),
                        ("other", props.bar_labels[b].clone()),
                        ("value", format!("{d:.2}")),
                    ]),
                ),
                kind: QuestionKind::CompareBars,
                evidence: Evidence {
                    cells: (0..m).flat_map(|j| [[a, j], [b, j]]).collect(),
                    categories: vec![props.bar_labels[a].clone(), props.bar_labels[b].clone()],
                    value: d,
                },
            });
        }
    }

    // Generic composition question.
    let color_totals: Vec<u64> = (0..m).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
    let top = (0..m)
        .max_by(|&a, &b| color_totals[a].cmp(&color_totals[b]).then(b.cmp(&a)))
        .expect("at least one color category");
    let share = if total > 0 {
        color_totals[top] as f64 / total as f64
    } else {
        0.0
    };
    out.push(Question {
        text: fill(
            &tpl.generic,
            &base(&[
                ("color", props.color_labels[top].clone()),
                ("value", format!("{:.1}%", 100.0 * share)),
            ]),
        ),
        kind: QuestionKind::DominantCategory,
        evidence: Evidence {
            cells: (0..n).map(|i| [i, top]).collect(),
            categories: vec![props.color_labels[top].clone()],
            value: share,
        },
    });

    out.truncate(config.max_q);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Schema, Variable};

    fn table(n: usize, m: usize, counts: Vec<u64>) -> FreqTable {
        let schema = Schema::new(vec![
            Variable::new("bar", (0..n).map(|i| format!("b{i}")).collect()),
            Variable::new("color", (0..m).map(|j| format!("c{j}")).collect()),
        ])
        .unwrap();
        FreqTable::from_counts(schema, counts).unwrap()
    }

    #[test]
    fn independence_yields_only_the_generic_question() {
        let t = table(2, 2, vec![10, 10, 10, 10]);
        let qs = generate_questions(&t, "bar", &QuestionConfig::default()).unwrap();
        assert_eq!(qs.len(), 1);
        assert_eq!(qs[0].kind, QuestionKind::DominantCategory);
        assert_eq!(qs[0].evidence.value, 0.5);
        assert!(qs[0].text.contains("c0"));
    }

    #[test]
    fn diagonal_table_leads_with_sqrt5_deviation() {
        let t = table(2, 2, vec![10, 0, 0, 10]);
        let qs = generate_questions(&t, "bar", &QuestionConfig::default()).unwrap();
        assert_eq!(qs[0].kind, QuestionKind::LargestDeviation);
        let cell = qs[0].evidence.cells[0];
        assert!(cell == [0, 0] || cell == [1, 1]);
        assert!((qs[0].evidence.value.abs() - 5f64.sqrt()).abs() < 1e-9);
        assert!(qs[0].text.contains("more often"));
    }

    #[test]
    fn planted_gradient_produces_trend() {
        // Share of c0 falls steadily from b0 to b5.
        let mut counts = Vec::new();
        for i in 0..6u64 {
            counts.extend([90 - 15 * i, 10 + 15 * i]);
        }
        let t = table(6, 2, counts);
        let qs = generate_questions(&t, "bar", &QuestionConfig { max_q: 10, ..Default::default() }).unwrap();
        let trend = qs.iter().find(|q| q.kind == QuestionKind::OrderTrend).expect("trend question");
        assert!(trend.evidence.value.abs() >= 0.7);
        // Recompute tau on the evidence cells directly.
        let shares: Vec<f64> = trend
            .evidence
            .cells
            .iter()
            .map(|&[i, j]| t.get(&[i, j]) as f64 / 100.0)
            .collect();
        assert!((kendall_tau_vs_position(&shares) - trend.evidence.value).abs() < 1e-9);
    }

    #[test]
    fn small_cells_are_flagged() {
        let t = table(2, 2, vec![1, 2, 3, 1]);
        let qs = generate_questions(&t, "bar", &QuestionConfig { max_q: 10, ..Default::default() }).unwrap();
        let small = qs.iter().find(|q| q.kind == QuestionKind::SmallCell).unwrap();
        assert_eq!(small.evidence.cells.len(), 4);
        // E[0][1] = 3 * 3 / 7 is the smallest.
        assert!((small.evidence.value - 9.0 / 7.0).abs() < 1e-9);
    }

    #[test]
    fn truncates_to_max_q_and_is_deterministic() {
        let t = table(4, 3, vec![9, 1, 0, 5, 5, 2, 1, 8, 3, 0, 2, 12]);
        let cfg = QuestionConfig { max_q: 2, ..Default::default() };
        let a = generate_questions(&t, "bar", &cfg).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a, generate_questions(&t, "bar", &cfg).unwrap());
        assert_eq!(
            generate_questions(&t, "bar", &QuestionConfig { max_q: 0, ..Default::default() }),
            Err(QuestionError::InvalidMaxQuestions)
        );
    }

    #[test]
    fn wrong_arity() {
        let schema = Schema::new(vec![Variable::new("v", vec!["a".into()])]).unwrap();
        let t = FreqTable::from_counts(schema, vec![3]).unwrap();
        assert!(matches!(
            generate_questions(&t, "v", &QuestionConfig::default()),
            Err(QuestionError::Table(TableError::WrongArity { .. }))
        ));
    }

    #[test]
    fn empty_table_still_asks_something() {
        let qs = generate_questions(&table(2, 2, vec![0; 4]), "bar", &QuestionConfig::default()).unwrap();
        assert_eq!(qs.len(), 1);
    }

    #[test]
    fn tau_examples() {
        assert_eq!(kendall_tau_vs_position(&[1.0, 2.0, 3.0, 4.0]), 1.0);
        assert_eq!(kendall_tau_vs_position(&[4.0, 3.0, 2.0, 1.0]), -1.0);
        assert_eq!(kendall_tau_vs_position(&[2.0, 2.0, 2.0]), 0.0);
    }

    #[test]
    fn templates_can_be_swapped() {
        let tpl = Templates::from_json(r#"{"generic": "Plus courant : {color} ({value})"}"#).unwrap();
        let t = table(2, 2, vec![10, 10, 10, 10]);
        let cfg = QuestionConfig { templates: tpl, ..Default::default() };
        let qs = generate_questions(&t, "bar", &cfg).unwrap();
        assert_eq!(qs[0].text, "Plus courant : c0 (50.0%)");
    }

    #[test]
    fn json_shape() {
        let t = table(2, 2, vec![10, 10, 10, 10]);
        let qs = generate_questions(&t, "bar", &QuestionConfig::default()).unwrap();
        let v = serde_json::to_value(&qs[0]).unwrap();
        assert_eq!(v["kind"], "dominant_category");
        assert!(v["evidence"]["cells"].is_array());
        assert!(v["text"].is_string());
    }
}
