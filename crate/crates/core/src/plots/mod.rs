//! Self-contained SVG plots.
//!
//! * `bar1`: counts of one variable, largest first.
//! * `panel2`: a 100%-stacked percentage panel, a box plot of the color
//!   variable's ordinal scores, and a Pearson residual grid, all sharing the
//!   seriated bar order.
//! * `multipanel3`: one stacked-percentage sub-panel per category of a third
//!   variable, sharing the bar order of the pooled two-way table.
//!
//! Elements carry `class` and `data-*` attributes so the structure can be
//! checked by parsing the document.

mod stats;
mod svg;

pub use stats::{chi_square, pearson_residuals, weighted_quantiles, BoxStats};

use crate::freqtable::{FreqTable, ProportionMatrix, TableError};
use crate::seriation::{order_by_count, seriate, Ordering, SeriationConfig, SeriationError};
use serde::{Deserialize, Serialize};
use stats::{expected_counts, residuals_from_counts};

pub(crate) fn expected_counts_oriented(counts: &[Vec<u64>]) -> Result<Vec<Vec<f64>>, PlotError> {
    expected_counts(counts)
}

pub(crate) fn residuals_oriented(counts: &[Vec<u64>]) -> Result<Vec<Vec<f64>>, PlotError> {
    residuals_from_counts(counts)
}
use svg::SvgWriter;
use thiserror::Error;

/// Interior ticks per stacked bar when fine scales are on (every 5%).
pub const TICKS_PER_BAR: usize = 19;

/// Residuals are clipped here before coloring.
pub const RESIDUAL_CLIP: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlotError {
    #[error("plot needs {expected} variables, table has {found}")]
    WrongArity { expected: usize, found: usize },
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("table is empty")]
    EmptyTable,
    #[error("weights sum to zero")]
    ZeroMass,
    #[error("lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("quantile {0} outside [0, 1]")]
    InvalidQuantile(f64),
    #[error("invalid plot request: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Seriation(#[from] SeriationError),
}

impl PlotError {
    pub fn code(&self) -> &'static str {
        match self {
            PlotError::WrongArity { .. } => "WrongArity",
            PlotError::UnknownVariable(_) => "UnknownVariable",
            PlotError::EmptyTable => "EmptyTable",
            PlotError::ZeroMass => "ZeroMass",
            PlotError::LengthMismatch(..) => "LengthMismatch",
            PlotError::InvalidQuantile(_) => "InvalidQuantile",
            PlotError::InvalidSpec(_) => "InvalidSpec",
            PlotError::Table(e) => e.code(),
            PlotError::Seriation(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlotKind {
    Bar1,
    Panel2,
    Multipanel3,
}

impl PlotKind {
    pub fn arity(self) -> usize {
        match self {
            PlotKind::Bar1 => 1,
            PlotKind::Panel2 => 2,
            PlotKind::Multipanel3 => 3,
        }
    }

    pub fn for_arity(n: usize) -> Option<PlotKind> {
        match n {
            1 => Some(PlotKind::Bar1),
            2 => Some(PlotKind::Panel2),
            3 => Some(PlotKind::Multipanel3),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PlotKind::Bar1 => "bar1",
            PlotKind::Panel2 => "panel2",
            PlotKind::Multipanel3 => "multipanel3",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Palette {
    /// Twelve-color qualitative cycle readable under common color-vision
    /// deficiencies.
    #[default]
    Safe12,
    Grayscale,
}

const SAFE12: [&str; 12] = [
    "#332288", "#88ccee", "#44aa99", "#117733", "#999933", "#ddcc77", "#cc6677", "#882255",
    "#aa4499", "#6699cc", "#661100", "#bbbbbb",
];

impl Palette {
    pub fn color(self, i: usize) -> String {
        match self {
            Palette::Safe12 => SAFE12[i % SAFE12.len()].to_owned(),
            Palette::Grayscale => {
                let level = 40 + (i % 8) * 25;
                format!("#{level:02x}{level:02x}{level:02x}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlotOptions {
    pub width_px: u32,
    pub height_px: u32,
    pub palette: Palette,
    pub show_scales: bool,
    pub title: Option<String>,
}

impl Default for PlotOptions {
    fn default() -> Self {
        PlotOptions {
            width_px: 960,
            height_px: 540,
            palette: Palette::Safe12,
            show_scales: true,
            title: None,
        }
    }
}

/// One entry of a plot library.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotSpec {
    pub kind: PlotKind,
    #[serde(default)]
    pub dataset: String,
    pub vars: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bar_var: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub panel_var: Option<String>,
    /// Precomputed bar ordering; computed on demand when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ordering: Option<Ordering<f64>>,
    #[serde(default)]
    pub options: PlotOptions,
}

impl PlotSpec {
    pub fn new(kind: PlotKind, vars: Vec<String>) -> Self {
        PlotSpec {
            kind,
            dataset: String::new(),
            vars,
            bar_var: None,
            panel_var: None,
            ordering: None,
            options: PlotOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<(), PlotError> {
        if self.vars.len() != self.kind.arity() {
            return Err(PlotError::WrongArity {
                expected: self.kind.arity(),
                found: self.vars.len(),
            });
        }
        if self.options.width_px < 200 || self.options.height_px < 120 {
            return Err(PlotError::InvalidSpec("plot must be at least 200x120 px".into()));
        }
        Ok(())
    }

    /// `<dataset>_<vars>_<kind>.svg`
    pub fn file_name(&self) -> String {
        let clean = |s: &str| -> String {
            s.chars()
                .map(|c| if c.is_ascii_alphanumeric() || c == '-' { c } else { '-' })
                .collect()
        };
        let vars: Vec<String> = self.vars.iter().map(|v| clean(v)).collect();
        format!("{}_{}_{}.svg", clean(&self.dataset), vars.join("-"), self.kind.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SvgDoc {
    pub xml: String,
    pub width_px: u32,
    pub height_px: u32,
}

fn arity_check(t: &FreqTable, expected: usize) -> Result<(), PlotError> {
    if t.arity() != expected {
        return Err(PlotError::WrongArity {
            expected,
            found: t.arity(),
        });
    }
    Ok(())
}

fn require_var(t: &FreqTable, name: &str) -> Result<usize, PlotError> {
    t.schema()
        .index_of(name)
        .ok_or_else(|| PlotError::UnknownVariable(name.to_owned()))
}

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}

fn truncate_label(s: &str, max: usize) -> String {
    if s.chars().count() <= max {
        s.to_owned()
    } else {
        let mut out: String = s.chars().take(max.saturating_sub(1)).collect();
        out.push('…');
        out
    }
}

fn write_title(w: &mut SvgWriter, spec: &PlotSpec, fallback: &str, width: f64) {
    let title = spec.options.title.clone().unwrap_or_else(|| fallback.to_owned());
    w.text(
        width / 2.0,
        24.0,
        &title,
        "title",
        &[("text-anchor", "middle".into()), ("font-size", "16".into())],
    );
}

fn no_data(w: &mut SvgWriter, x: f64, y: f64) {
    w.text(
        x,
        y,
        "no data",
        "no-data",
        &[
            ("text-anchor", "middle".into()),
            ("font-size", "12".into()),
            ("fill", "#666666".into()),
        ],
    );
}

/// Reuse a supplied ordering when it fits this bar variable.
fn bar_ordering(spec: &PlotSpec, props: &ProportionMatrix<f64>) -> Result<Ordering<f64>, PlotError> {
    if let Some(o) = &spec.ordering {
        if o.variable == props.bar_variable && o.perm.len() == props.n_bars() {
            let mut sorted = o.perm.clone();
            sorted.sort_unstable();
            if sorted.iter().copied().eq(0..props.n_bars()) {
                return Ok(o.clone());
            }
        }
        return Err(PlotError::InvalidSpec(format!(
            "ordering does not match the {} categories of {:?}",
            props.n_bars(),
            props.bar_variable
        )));
    }
    Ok(seriate(props, SeriationConfig::default())?)
}

/// Vertical count bars, largest first.
pub fn render_bar1(t: &FreqTable, spec: &PlotSpec) -> Result<SvgDoc, PlotError> {
    arity_check(t, 1)?;
    let var = &t.variables()[0];
    let counts = t.counts();
    let ordering = match &spec.ordering {
        Some(o) if o.variable == var.name && o.perm.len() == counts.len() => o.clone(),
        _ => order_by_count(t)?,
    };
    let (width, height) = (spec.options.width_px, spec.options.height_px);
    let (wf, hf) = (width as f64, height as f64);
    let mut w = SvgWriter::new(width, height);
    write_title(&mut w, spec, &var.name, wf);

    let (left, right, top, bottom) = (60.0, 20.0, 48.0, 70.0);
    let plot_w = wf - left - right;
    let plot_h = hf - top - bottom;
    let n = counts.len().max(1) as f64;
    let slot = plot_w / n;
    let bar_w = slot * 0.7;
    let max = counts.iter().copied().max().unwrap_or(0).max(1) as f64;
    let total = t.total();
    let base = top + plot_h;

    w.open("g", &[("class", "panel".into()), ("data-panel", "bars".into())]);
    w.line("axis", left, base, left + plot_w, base, &[("stroke", "#333333".into())]);
    w.line("axis", left, top, left, base, &[("stroke", "#333333".into())]);
    if spec.options.show_scales {
        for k in 1..=4 {
            let value = max * k as f64 / 4.0;
            let y = base - plot_h * k as f64 / 4.0;
            w.line("grid", left, y, left + plot_w, y, &[("stroke", "#dddddd".into())]);
            w.text(
                left - 6.0,
                y + 4.0,
                &format!("{value:.0}"),
                "axis-label",
                &[("text-anchor", "end".into()), ("font-size", "10".into())],
            );
        }
    }
    for (pos, &cat) in ordering.perm.iter().enumerate() {
        let c = counts[cat];
        let h = plot_h * c as f64 / max;
        let x = left + slot * pos as f64 + (slot - bar_w) / 2.0;
        let share = if total > 0 { c as f64 / total as f64 } else { 0.0 };
        w.rect(
            "bar",
            x,
            base - h,
            bar_w,
            h,
            &[
                ("data-category", var.categories[cat].clone()),
                ("data-count", c.to_string()),
                ("fill", spec.options.palette.color(0)),
            ],
        );
        w.text(
            x + bar_w / 2.0,
            base - h - 4.0,
            &format!("{c} ({})", pct(share)),
            "bar-value",
            &[("text-anchor", "middle".into()), ("font-size", "10".into())],
        );
        w.text(
            x + bar_w / 2.0,
            base + 14.0,
            &truncate_label(&var.categories[cat], 16),
            "category-label",
            &[("text-anchor", "middle".into()), ("font-size", "10".into())],
        );
    }
    if total == 0 {
        no_data(&mut w, left + plot_w / 2.0, top + plot_h / 2.0);
    }
    w.close("g");
    Ok(SvgDoc {
        xml: w.finish(),
        width_px: width,
        height_px: height,
    })
}

/// Geometry of one block of horizontal stacked bars.
struct StackBlock {
    x: f64,
    y: f64,
    length: f64,
    row_h: f64,
}

/// Stacked 100% bars in `order`, one per row, with optional 5% ticks.
fn draw_stacked(
    w: &mut SvgWriter,
    props: &ProportionMatrix<f64>,
    order: &[usize],
    block: &StackBlock,
    options: &PlotOptions,
) {
    let bar_h = block.row_h * 0.7;
    for (pos, &bar) in order.iter().enumerate() {
        let y = block.y + block.row_h * pos as f64 + (block.row_h - bar_h) / 2.0;
        let label = &props.bar_labels[bar];
        w.open("g", &[("class", "stack".into()), ("data-bar", label.clone())]);
        let mut x = block.x;
        for (j, &p) in props.rows[bar].iter().enumerate() {
            let seg = block.length * p;
            w.rect(
                "seg",
                x,
                y,
                seg,
                bar_h,
                &[
                    ("data-bar", label.clone()),
                    ("data-color", props.color_labels[j].clone()),
                    ("data-pct", format!("{:.2}", 100.0 * p)),
                    ("fill", options.palette.color(j)),
                ],
            );
            if seg >= 34.0 && bar_h >= 10.0 {
                w.text(
                    x + seg / 2.0,
                    y + bar_h / 2.0 + 4.0,
                    &format!("{:.0}%", 100.0 * p),
                    "seg-label",
                    &[
                        ("text-anchor", "middle".into()),
                        ("font-size", "9".into()),
                        ("fill", "#ffffff".into()),
                    ],
                );
            }
            x += seg;
        }
        w.rect(
            "bar",
            block.x,
            y,
            block.length,
            bar_h,
            &[
                ("data-bar", label.clone()),
                ("data-total", props.bar_totals[bar].to_string()),
                ("fill", "none".into()),
                ("stroke", "#333333".into()),
            ],
        );
        if options.show_scales {
            for k in 1..=TICKS_PER_BAR {
                let tx = block.x + block.length * k as f64 / 20.0;
                let len = if k % 2 == 0 { bar_h * 0.35 } else { bar_h * 0.2 };
                w.line(
                    "tick",
                    tx,
                    y + bar_h - len,
                    tx,
                    y + bar_h,
                    &[("stroke", "#222222".into()), ("stroke-width", "0.6".into())],
                );
            }
        }
        if props.bar_totals[bar] == 0 {
            no_data(w, block.x + block.length / 2.0, y + bar_h / 2.0 + 4.0);
        }
        w.close("g");
    }
}

fn draw_bar_labels(w: &mut SvgWriter, labels: &[String], order: &[usize], x: f64, y: f64, row_h: f64) {
    for (pos, &bar) in order.iter().enumerate() {
        w.text(
            x,
            y + row_h * (pos as f64 + 0.5) + 4.0,
            &truncate_label(&labels[bar], 20),
            "bar-label",
            &[("text-anchor", "end".into()), ("font-size", "11".into())],
        );
    }
}

fn draw_percent_axis(w: &mut SvgWriter, x: f64, y: f64, length: f64) {
    for k in 0..=4 {
        let tx = x + length * k as f64 / 4.0;
        w.text(
            tx,
            y,
            &format!("{}%", k * 25),
            "axis-label",
            &[("text-anchor", "middle".into()), ("font-size", "10".into())],
        );
    }
}

fn draw_legend(w: &mut SvgWriter, title: &str, labels: &[String], palette: Palette, x: f64, y: f64, width: f64) {
    w.open("g", &[("class", "legend".into())]);
    w.text(x, y + 10.0, title, "legend-title", &[("font-size", "11".into())]);
    let mut cx = x + 8.0 * title.chars().count() as f64 + 12.0;
    let mut cy = y;
    for (j, label) in labels.iter().enumerate() {
        let text = truncate_label(label, 18);
        let item_w = 20.0 + 6.5 * text.chars().count() as f64 + 12.0;
        if cx + item_w > x + width && cx > x + 1.0 {
            cx = x;
            cy += 16.0;
        }
        w.rect(
            "legend-swatch",
            cx,
            cy + 1.0,
            12.0,
            12.0,
            &[("data-color", label.clone()), ("fill", palette.color(j))],
        );
        w.text(cx + 16.0, cy + 11.0, &text, "legend-label", &[("font-size", "10".into())]);
        cx += item_w;
    }
    w.close("g");
}

fn residual_fill(r: f64) -> String {
    let t = (r / RESIDUAL_CLIP).clamp(-1.0, 1.0);
    let (target, s) = if t >= 0.0 {
        ((178.0, 24.0, 43.0), t)
    } else {
        ((33.0, 102.0, 172.0), -t)
    };
    let mix = |c: f64| (255.0 + (c - 255.0) * s).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(target.0), mix(target.1), mix(target.2))
}

/// Percentage bars, box plot and residual grid for a two-way table.
pub fn render_panel2(t: &FreqTable, bar_var: &str, spec: &PlotSpec) -> Result<SvgDoc, PlotError> {
    arity_check(t, 2)?;
    let bar_axis = require_var(t, bar_var)?;
    let color = t.variables()[1 - bar_axis].clone();
    let props = t.proportions::<f64>(bar_var)?;
    let ordering = bar_ordering(spec, &props)?;
    let counts = t.oriented_counts(bar_var)?;
    let order = &ordering.perm;
    let n = props.n_bars();
    let m = props.n_colors();

    let (width, height) = (spec.options.width_px, spec.options.height_px);
    let (wf, hf) = (width as f64, height as f64);
    let mut w = SvgWriter::new(width, height);
    write_title(&mut w, spec, &format!("{color} by {bar_var}", color = color.name), wf);

    let (label_w, right, top, bottom, gap) = (150.0, 20.0, 64.0, 64.0, 24.0);
    let body_h = hf - top - bottom;
    let row_h = body_h / n as f64;
    let avail = wf - label_w - right - 2.0 * gap;
    let has_box = color.scores.is_some();
    let (pct_w, box_w, res_w) = if has_box {
        (avail * 0.45, avail * 0.25, avail * 0.30)
    } else {
        (avail * 0.60 + gap / 2.0, 0.0, avail * 0.40 + gap / 2.0)
    };
    let pct_x = label_w;
    let box_x = pct_x + pct_w + gap;
    let res_x = if has_box { box_x + box_w + gap } else { pct_x + pct_w + gap };

    draw_bar_labels(&mut w, &props.bar_labels, order, label_w - 8.0, top, row_h);

    // Percentage bars.
    w.open("g", &[("class", "panel".into()), ("data-panel", "percent".into())]);
    w.text(pct_x, top - 24.0, "Share within each bar", "panel-title", &[("font-size", "12".into())]);
    if spec.options.show_scales {
        draw_percent_axis(&mut w, pct_x, top - 6.0, pct_w);
    }
    draw_stacked(
        &mut w,
        &props,
        order,
        &StackBlock {
            x: pct_x,
            y: top,
            length: pct_w,
            row_h,
        },
        &spec.options,
    );
    w.close("g");

    // Box plot of ordinal scores.
    if let Some(scores) = &color.scores {
        w.open("g", &[("class", "panel".into()), ("data-panel", "box".into())]);
        w.text(
            box_x,
            top - 24.0,
            &format!("{} score", color.name),
            "panel-title",
            &[("font-size", "12".into())],
        );
        let lo = scores.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
        let sx = |v: f64| box_x + box_w * (v - lo) / (hi - lo);
        if spec.options.show_scales {
            let mut marks: Vec<f64> = scores.clone();
            marks.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
            marks.dedup();
            for v in marks {
                w.line(
                    "scale",
                    sx(v),
                    top,
                    sx(v),
                    top + body_h,
                    &[("stroke", "#e3e3e3".into())],
                );
                w.text(
                    sx(v),
                    top - 6.0,
                    &format!("{v}"),
                    "axis-label",
                    &[("text-anchor", "middle".into()), ("font-size", "10".into())],
                );
            }
        }
        for (pos, &bar) in order.iter().enumerate() {
            let cy = top + row_h * (pos as f64 + 0.5);
            let bh = row_h * 0.5;
            match BoxStats::from_weighted(scores, &counts[bar]) {
                Ok(b) => {
                    w.open("g", &[("class", "boxplot".into()), ("data-bar", props.bar_labels[bar].clone())]);
                    w.line("whisker", sx(b.min), cy, sx(b.q1), cy, &[("stroke", "#333333".into())]);
                    w.line("whisker", sx(b.q3), cy, sx(b.max), cy, &[("stroke", "#333333".into())]);
                    w.rect(
                        "box",
                        sx(b.q1),
                        cy - bh / 2.0,
                        sx(b.q3) - sx(b.q1),
                        bh,
                        &[
                            ("data-q1", format!("{}", b.q1)),
                            ("data-median", format!("{}", b.median)),
                            ("data-q3", format!("{}", b.q3)),
                            ("fill", "#cfe3f3".into()),
                            ("stroke", "#333333".into()),
                        ],
                    );
                    w.line(
                        "median",
                        sx(b.median),
                        cy - bh / 2.0,
                        sx(b.median),
                        cy + bh / 2.0,
                        &[("stroke", "#000000".into()), ("stroke-width", "2".into())],
                    );
                    w.close("g");
                }
                Err(PlotError::ZeroMass) => no_data(&mut w, box_x + box_w / 2.0, cy + 4.0),
                Err(e) => return Err(e),
            }
        }
        w.close("g");
    }

    // Residual grid.
    w.open("g", &[("class", "panel".into()), ("data-panel", "residual".into())]);
    w.text(
        res_x,
        top - 24.0,
        "Observed vs expected (Pearson residual)",
        "panel-title",
        &[("font-size", "12".into())],
    );
    let residuals: Vec<Vec<f64>> = match residuals_from_counts(&counts) {
        Ok(r) => r,
        Err(PlotError::EmptyTable) => vec![vec![0.0; m]; n],
        Err(e) => return Err(e),
    };
    let cell_w = res_w / m as f64;
    for (j, label) in props.color_labels.iter().enumerate() {
        w.text(
            res_x + cell_w * (j as f64 + 0.5),
            top - 6.0,
            &truncate_label(label, 8),
            "axis-label",
            &[("text-anchor", "middle".into()), ("font-size", "9".into())],
        );
    }
    for (pos, &bar) in order.iter().enumerate() {
        for (j, &r) in residuals[bar].iter().enumerate() {
            let x = res_x + cell_w * j as f64;
            let y = top + row_h * pos as f64;
            w.rect(
                "cell",
                x,
                y,
                cell_w,
                row_h,
                &[
                    ("data-bar", props.bar_labels[bar].clone()),
                    ("data-color", props.color_labels[j].clone()),
                    ("data-residual", format!("{r:.4}")),
                    ("fill", residual_fill(r)),
                    ("stroke", "#ffffff".into()),
                ],
            );
            if cell_w >= 30.0 && row_h >= 14.0 {
                w.text(
                    x + cell_w / 2.0,
                    y + row_h / 2.0 + 4.0,
                    &format!("{r:+.1}"),
                    "cell-label",
                    &[("text-anchor", "middle".into()), ("font-size", "9".into())],
                );
            }
        }
    }
    if t.total() == 0 {
        no_data(&mut w, res_x + res_w / 2.0, top + body_h / 2.0);
    }
    w.close("g");

    let legend_y = hf - bottom + 14.0;
    draw_legend(&mut w, &color.name, &props.color_labels, spec.options.palette, label_w, legend_y, wf - label_w - right);
    if !has_box {
        w.text(
            label_w,
            hf - 10.0,
            &format!("Box plot omitted: {:?} has no ordinal scores (attach them with a codebook).", color.name),
            "note",
            &[("font-size", "10".into()), ("fill", "#666666".into())],
        );
    }
    Ok(SvgDoc {
        xml: w.finish(),
        width_px: width,
        height_px: height,
    })
}

/// One stacked-percentage sub-panel per category of `panel_var`, all using
/// the bar order of the table pooled over `panel_var`.
pub fn render_multipanel3(
    t: &FreqTable,
    bar_var: &str,
    color_var: &str,
    panel_var: &str,
    spec: &PlotSpec,
) -> Result<SvgDoc, PlotError> {
    arity_check(t, 3)?;
    for name in [bar_var, color_var, panel_var] {
        require_var(t, name)?;
    }
    if bar_var == color_var || bar_var == panel_var || color_var == panel_var {
        return Err(PlotError::InvalidSpec("bar, color and panel variables must differ".into()));
    }
    let pooled = t.marginalize(&[bar_var, color_var])?;
    let pooled_props = pooled.proportions::<f64>(bar_var)?;
    let ordering = bar_ordering(spec, &pooled_props)?;
    let order = &ordering.perm;
    let panel = t.schema().variable(panel_var).expect("checked").clone();
    let p = panel.n_categories();

    let (width, height) = (spec.options.width_px, spec.options.height_px);
    let (wf, hf) = (width as f64, height as f64);
    let mut w = SvgWriter::new(width, height);
    write_title(&mut w, spec, &format!("{color_var} by {bar_var}, per {panel_var}"), wf);

    let cols = (p as f64).sqrt().ceil() as usize;
    let grid_rows = p.div_ceil(cols);
    let (left, right, top, bottom) = (10.0, 10.0, 40.0, 56.0);
    let cell_w = (wf - left - right) / cols as f64;
    let cell_h = (hf - top - bottom) / grid_rows as f64;

    for (k, cat) in panel.categories.iter().enumerate() {
        let sub = t.select(panel_var, cat)?;
        let props = sub.proportions::<f64>(bar_var)?;
        let ox = left + cell_w * (k % cols) as f64;
        let oy = top + cell_h * (k / cols) as f64;
        let label_w = (cell_w * 0.3).min(140.0);
        let header = 34.0;
        let block = StackBlock {
            x: ox + label_w,
            y: oy + header,
            length: cell_w - label_w - 16.0,
            row_h: (cell_h - header - 8.0) / props.n_bars() as f64,
        };
        w.open(
            "g",
            &[
                ("class", "subpanel".into()),
                ("data-panel-category", cat.clone()),
                ("data-total", sub.total().to_string()),
            ],
        );
        w.text(
            ox + label_w,
            oy + 14.0,
            &format!("{panel_var} = {cat} (n = {})", sub.total()),
            "panel-title",
            &[("font-size", "12".into())],
        );
        if spec.options.show_scales {
            draw_percent_axis(&mut w, block.x, oy + header - 4.0, block.length);
        }
        draw_bar_labels(&mut w, &props.bar_labels, order, ox + label_w - 6.0, block.y, block.row_h);
        draw_stacked(&mut w, &props, order, &block, &spec.options);
        if sub.total() == 0 {
            no_data(&mut w, block.x + block.length / 2.0, oy + header / 2.0 + 10.0);
        }
        w.close("g");
    }
    draw_legend(
        &mut w,
        color_var,
        &pooled_props.color_labels,
        spec.options.palette,
        left + 10.0,
        hf - bottom + 14.0,
        wf - left - right - 10.0,
    );
    Ok(SvgDoc {
        xml: w.finish(),
        width_px: width,
        height_px: height,
    })
}

/// Bar variable used when the caller does not name one: fewer categories,
/// ties go to the earlier variable.
pub fn default_bar_var(t: &FreqTable) -> Option<&str> {
    t.variables()
        .iter()
        .enumerate()
        .min_by_key(|(i, v)| (v.n_categories(), *i))
        .map(|(_, v)| v.name.as_str())
}

/// Route a spec to its renderer. `t` must span exactly `spec.vars`.
///
/// For `multipanel3` the bar variable defaults to `vars[0]`, the panel
/// variable to `vars[2]`, and color is the remaining one.
pub fn render(t: &FreqTable, spec: &PlotSpec) -> Result<SvgDoc, PlotError> {
    spec.validate()?;
    arity_check(t, spec.kind.arity())?;
    for v in &spec.vars {
        require_var(t, v)?;
    }
    match spec.kind {
        PlotKind::Bar1 => render_bar1(t, spec),
        PlotKind::Panel2 => {
            let bar = match &spec.bar_var {
                Some(b) => b.clone(),
                None => default_bar_var(t).expect("two variables").to_owned(),
            };
            render_panel2(t, &bar, spec)
        }
        PlotKind::Multipanel3 => {
            let bar = spec.bar_var.clone().unwrap_or_else(|| spec.vars[0].clone());
            let panel = match &spec.panel_var {
                Some(p) => p.clone(),
                None => spec
                    .vars
                    .iter()
                    .rev()
                    .find(|v| **v != bar)
                    .expect("three variables")
                    .clone(),
            };
            let color = spec
                .vars
                .iter()
                .find(|v| **v != bar && **v != panel)
                .ok_or_else(|| PlotError::InvalidSpec("bar and panel variables must differ".into()))?
                .clone();
            render_multipanel3(t, &bar, &color, &panel, spec)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Schema, Variable};

    fn table(vars: Vec<(&str, Vec<&str>)>, counts: Vec<u64>) -> FreqTable {
        let vars = vars
            .into_iter()
            .map(|(n, c)| Variable::new(n, c.into_iter().map(String::from).collect()))
            .collect();
        FreqTable::from_counts(Schema::new(vars).unwrap(), counts).unwrap()
    }

    fn count(xml: &str, class: &str) -> usize {
        xml.matches(&format!("class=\"{class}\"")).count()
    }

    #[test]
    fn bar1_draws_largest_first() {
        let t = table(vec![("V", vec!["a", "b"])], vec![1, 3]);
        let doc = render_bar1(&t, &PlotSpec::new(PlotKind::Bar1, vec!["V".into()])).unwrap();
        assert_eq!(count(&doc.xml, "bar"), 2);
        let b = doc.xml.find("data-category=\"b\"").unwrap();
        let a = doc.xml.find("data-category=\"a\"").unwrap();
        assert!(b < a);
        assert!(doc.xml.contains("3 (75.0%)"));
    }

    #[test]
    fn bar1_empty_table_says_no_data() {
        let t = table(vec![("V", vec!["a", "b"])], vec![0, 0]);
        let doc = render_bar1(&t, &PlotSpec::new(PlotKind::Bar1, vec!["V".into()])).unwrap();
        assert!(doc.xml.contains(">no data</text>"));
    }

    #[test]
    fn wrong_arity_is_rejected() {
        let t = table(vec![("V", vec!["a", "b"])], vec![1, 1]);
        let spec = PlotSpec::new(PlotKind::Panel2, vec!["V".into(), "W".into()]);
        assert!(matches!(render_panel2(&t, "V", &spec), Err(PlotError::WrongArity { .. })));
        assert!(matches!(
            render_multipanel3(&t, "V", "W", "X", &spec),
            Err(PlotError::WrongArity { .. })
        ));
    }

    #[test]
    fn panel2_without_scores_has_two_panels_and_note() {
        let t = table(vec![("A", vec!["a1", "a2"]), ("B", vec!["b1", "b2"])], vec![1, 1, 1, 1]);
        let spec = PlotSpec::new(PlotKind::Panel2, vec!["A".into(), "B".into()]);
        let doc = render_panel2(&t, "A", &spec).unwrap();
        assert_eq!(count(&doc.xml, "panel"), 2);
        assert_eq!(count(&doc.xml, "note"), 1);
        assert_eq!(count(&doc.xml, "cell"), 4);
        assert_eq!(count(&doc.xml, "tick"), 2 * TICKS_PER_BAR);
        // Independence: every residual cell is neutral.
        assert_eq!(doc.xml.matches("fill=\"#ffffff\" stroke=\"#ffffff\"").count(), 4);
        assert!(matches!(
            render_panel2(&t, "Z", &spec),
            Err(PlotError::UnknownVariable(_))
        ));
    }

    #[test]
    fn panel2_with_scores_has_three_panels() {
        let schema = Schema::new(vec![
            Variable::new("A", vec!["a1".into(), "a2".into()]),
            Variable {
                name: "R".into(),
                categories: vec!["1st".into(), "2nd".into(), "3rd".into()],
                scores: Some(vec![1.0, 2.0, 3.0]),
            },
        ])
        .unwrap();
        let t = FreqTable::from_counts(schema, vec![5, 3, 1, 0, 2, 6]).unwrap();
        let spec = PlotSpec::new(PlotKind::Panel2, vec!["A".into(), "R".into()]);
        let doc = render_panel2(&t, "A", &spec).unwrap();
        assert_eq!(count(&doc.xml, "panel"), 3);
        assert_eq!(count(&doc.xml, "box"), 2);
        assert_eq!(count(&doc.xml, "note"), 0);
    }

    #[test]
    fn residual_colors_are_clipped() {
        assert_eq!(residual_fill(0.0), "#ffffff");
        assert_eq!(residual_fill(4.0), residual_fill(40.0));
        assert_eq!(residual_fill(-4.0), "#2166ac");
        assert_eq!(residual_fill(4.0), "#b2182b");
    }

    #[test]
    fn scales_can_be_turned_off() {
        let t = table(vec![("A", vec!["a1", "a2"]), ("B", vec!["b1", "b2"])], vec![1, 2, 3, 4]);
        let mut spec = PlotSpec::new(PlotKind::Panel2, vec!["A".into(), "B".into()]);
        spec.options.show_scales = false;
        let doc = render_panel2(&t, "A", &spec).unwrap();
        assert_eq!(count(&doc.xml, "tick"), 0);
    }

    #[test]
    fn supplied_ordering_must_fit() {
        let t = table(vec![("A", vec!["a1", "a2"]), ("B", vec!["b1", "b2"])], vec![1, 2, 3, 4]);
        let mut spec = PlotSpec::new(PlotKind::Panel2, vec!["A".into(), "B".into()]);
        spec.ordering = Some(Ordering::identity("A", 3));
        assert!(matches!(render_panel2(&t, "A", &spec), Err(PlotError::InvalidSpec(_))));
        spec.ordering = Some(Ordering::identity("A", 2));
        assert!(render_panel2(&t, "A", &spec).is_ok());
    }

    #[test]
    fn file_names_follow_pattern() {
        let mut spec = PlotSpec::new(PlotKind::Panel2, vec!["dept".into(), "choice rank".into()]);
        spec.dataset = "admissions".into();
        assert_eq!(spec.file_name(), "admissions_dept-choice-rank_panel2.svg");
    }

    #[test]
    fn default_bar_var_prefers_fewer_categories() {
        let t = table(vec![("A", vec!["1", "2", "3"]), ("B", vec!["x", "y"])], vec![0; 6]);
        assert_eq!(default_bar_var(&t), Some("B"));
        let t = table(vec![("A", vec!["1", "2"]), ("B", vec!["x", "y"])], vec![0; 4]);
        assert_eq!(default_bar_var(&t), Some("A"));
    }

    #[test]
    fn plot_spec_json_roundtrip() {
        let mut spec = PlotSpec::new(PlotKind::Multipanel3, vec!["a".into(), "b".into(), "c".into()]);
        spec.panel_var = Some("c".into());
        spec.ordering = Some(Ordering::identity("a", 3));
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"kind\":\"multipanel3\""));
        assert!(text.contains("\"perm\":[0,1,2]"));
        let back: PlotSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}
