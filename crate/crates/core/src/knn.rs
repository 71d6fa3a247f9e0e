//! Per-therapy nearest-neighbor outcome prediction.
//!
//! For each therapy, the `k` recipients closest to the patient (weighted
//! Gower distance over mixed numeric/categorical features) are found, and an
//! inverse-distance weighted average of their outcomes predicts how the
//! patient would fare on that therapy. The therapy with the best prediction
//! is recommended.

use crate::scalar::Real;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use thiserror::Error;

pub const DEFAULT_K: usize = 30;
pub const DEFAULT_K_MIN: usize = 5;
pub const DEFAULT_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KnnError {
    #[error("record does not match the feature schema at {feature:?}: {reason}")]
    SchemaMismatch { feature: String, reason: String },
    #[error("feature {0:?} has an empty or inverted range")]
    DegenerateRange(String),
    #[error("unknown therapy {0:?}")]
    UnknownTherapy(String),
    #[error("neighbor list is empty")]
    EmptyNeighborList,
    #[error("no therapy has at least {k_min} recipients")]
    NoEligibleTherapy { k_min: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("cohort input row {row}: {reason}")]
    BadRow { row: usize, reason: String },
    #[error("invalid schema: {0}")]
    BadSchema(String),
}

impl KnnError {
    pub fn code(&self) -> &'static str {
        match self {
            KnnError::SchemaMismatch { .. } => "SchemaMismatch",
            KnnError::DegenerateRange(_) => "DegenerateRange",
            KnnError::UnknownTherapy(_) => "UnknownTherapy",
            KnnError::EmptyNeighborList => "EmptyNeighborList",
            KnnError::NoEligibleTherapy { .. } => "NoEligibleTherapy",
            KnnError::InvalidParams(_) => "InvalidParams",
            KnnError::BadRow { .. } => "BadRow",
            KnnError::BadSchema(_) => "BadSchema",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct FeatureSpec<T> {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default = "unit_weight")]
    pub weight: T,
    /// `[min, max]` for numeric features. Filled from the data when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub range: Option<[T; 2]>,
}

fn unit_weight<T: Real>() -> T {
    T::one()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct FeatureSchema<T> {
    pub features: Vec<FeatureSpec<T>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Smaller outcomes are better (e.g. HbA1c).
    #[default]
    Lower,
    Higher,
}

/// Sidecar file: `{features:[{name, kind, weight?, range?}], direction}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct SchemaFile<T> {
    pub features: Vec<FeatureSpec<T>>,
    #[serde(default)]
    pub direction: Direction,
}

impl<T: Real> FeatureSchema<T> {
    pub fn validate(&self) -> Result<(), KnnError> {
        let mut seen = std::collections::HashSet::new();
        for f in &self.features {
            if !seen.insert(f.name.as_str()) {
                return Err(KnnError::BadSchema(format!("duplicate feature {:?}", f.name)));
            }
            if !(f.weight > T::zero() && f.weight.is_finite()) {
                return Err(KnnError::BadSchema(format!("weight of {:?} must be positive", f.name)));
            }
            if f.kind == FeatureKind::Numeric {
                if let Some([lo, hi]) = f.range {
                    if !(hi > lo && lo.is_finite() && hi.is_finite()) {
                        return Err(KnnError::DegenerateRange(f.name.clone()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FeatureValue<T> {
    Numeric(T),
    Categorical(String),
}

/// Anything that carries a feature vector: cohort members and query
/// patients alike.
pub trait HasFeatures<T> {
    fn features(&self) -> &[FeatureValue<T>];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord<T> {
    pub id: String,
    pub features: Vec<FeatureValue<T>>,
    pub therapy: String,
    pub outcome: T,
}

impl<T> HasFeatures<T> for PatientRecord<T> {
    fn features(&self) -> &[FeatureValue<T>] {
        &self.features
    }
}

/// A patient to recommend for: features only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patient<T> {
    pub id: String,
    pub features: Vec<FeatureValue<T>>,
}

impl<T> HasFeatures<T> for Patient<T> {
    fn features(&self) -> &[FeatureValue<T>] {
        &self.features
    }
}

impl<T: Real> Patient<T> {
    /// Build from `{"feature name": value, ...}`, in schema order.
    pub fn from_named(
        id: impl Into<String>,
        values: &BTreeMap<String, FeatureValue<T>>,
        schema: &FeatureSchema<T>,
    ) -> Result<Self, KnnError> {
        let features = schema
            .features
            .iter()
            .map(|f| {
                values.get(&f.name).cloned().ok_or_else(|| KnnError::SchemaMismatch {
                    feature: f.name.clone(),
                    reason: "missing".into(),
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let p = Patient {
            id: id.into(),
            features,
        };
        conform(&p.features, schema)?;
        Ok(p)
    }
}

fn conform<T: Real>(values: &[FeatureValue<T>], schema: &FeatureSchema<T>) -> Result<(), KnnError> {
    if values.len() != schema.features.len() {
        return Err(KnnError::SchemaMismatch {
            feature: schema
                .features
                .get(values.len())
                .map_or_else(|| "(extra)".to_owned(), |f| f.name.clone()),
            reason: format!("{} values for {} features", values.len(), schema.features.len()),
        });
    }
    for (v, f) in values.iter().zip(&schema.features) {
        match (v, f.kind) {
            (FeatureValue::Numeric(x), FeatureKind::Numeric) if x.is_finite() => {}
            (FeatureValue::Categorical(_), FeatureKind::Categorical) => {}
            _ => {
                return Err(KnnError::SchemaMismatch {
                    feature: f.name.clone(),
                    reason: "wrong type or non-finite value".into(),
                })
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cohort<T> {
    pub schema: FeatureSchema<T>,
    pub patients: Vec<PatientRecord<T>>,
    /// Sorted therapy ids.
    pub therapies: Vec<String>,
}

impl<T: Real> Cohort<T> {
    /// Validates every record and fills missing numeric ranges from the data.
    pub fn new(mut schema: FeatureSchema<T>, patients: Vec<PatientRecord<T>>) -> Result<Self, KnnError> {
        schema.validate()?;
        for p in &patients {
            conform(&p.features, &schema)?;
            if !p.outcome.is_finite() {
                return Err(KnnError::SchemaMismatch {
                    feature: "outcome".into(),
                    reason: format!("non-finite outcome for {:?}", p.id),
                });
            }
        }
        for (i, f) in schema.features.iter_mut().enumerate() {
            if f.kind == FeatureKind::Numeric && f.range.is_none() {
                let mut lo = T::infinity();
                let mut hi = T::neg_infinity();
                for p in &patients {
                    if let FeatureValue::Numeric(x) = p.features[i] {
                        lo = lo.min(x);
                        hi = hi.max(x);
                    }
                }
                if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
                    return Err(KnnError::DegenerateRange(f.name.clone()));
                }
                f.range = Some([lo, hi]);
            }
        }
        let mut therapies: Vec<String> = patients.iter().map(|p| p.therapy.clone()).collect();
        therapies.sort();
        therapies.dedup();
        Ok(Cohort {
            schema,
            patients,
            therapies,
        })
    }

    pub fn support(&self, therapy: &str) -> usize {
        self.patients.iter().filter(|p| p.therapy == therapy).count()
    }
}

/// Weighted Gower dissimilarity in `[0, 1]`.
pub fn distance<T: Real>(
    p: &impl HasFeatures<T>,
    q: &impl HasFeatures<T>,
    schema: &FeatureSchema<T>,
) -> Result<T, KnnError> {
    let (a, b) = (p.features(), q.features());
    conform(a, schema)?;
    conform(b, schema)?;
    let mut num = T::zero();
    let mut den = T::zero();
    for ((x, y), f) in a.iter().zip(b).zip(&schema.features) {
        let d = match (x, y) {
            (FeatureValue::Numeric(x), FeatureValue::Numeric(y)) => {
                let [lo, hi] = f.range.ok_or_else(|| KnnError::DegenerateRange(f.name.clone()))?;
                if hi.partial_cmp(&lo) != Some(std::cmp::Ordering::Greater) {
                    return Err(KnnError::DegenerateRange(f.name.clone()));
                }
                ((*x - *y).abs() / (hi - lo)).min(T::one())
            }
            (FeatureValue::Categorical(x), FeatureValue::Categorical(y)) => {
                if x == y {
                    T::zero()
                } else {
                    T::one()
                }
            }
            _ => unreachable!("conform checked types"),
        };
        num += f.weight * d;
        den += f.weight;
    }
    Ok(if den > T::zero() { num / den } else { T::zero() })
}

/// The `min(k, support)` closest recipients of `therapy`, nearest first.
/// Equal distances keep cohort order.
pub fn nearest_for_therapy<'c, T: Real>(
    c: &'c Cohort<T>,
    therapy: &str,
    patient: &impl HasFeatures<T>,
    k: usize,
) -> Result<Vec<(&'c PatientRecord<T>, T)>, KnnError> {
    if k == 0 {
        return Err(KnnError::InvalidParams("k must be at least 1".into()));
    }
    if !c.therapies.iter().any(|t| t == therapy) {
        return Err(KnnError::UnknownTherapy(therapy.to_owned()));
    }
    let mut scored = c
        .patients
        .iter()
        .filter(|p| p.therapy == therapy)
        .map(|p| distance(patient, p, &c.schema).map(|d| (p, d)))
        .collect::<Result<Vec<_>, _>>()?;
    scored.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("finite distances"));
    scored.truncate(k);
    Ok(scored)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Weighting {
    /// `w = 1 / (d + epsilon)`.
    InverseDistance { epsilon: f64 },
    Uniform,
}

impl Default for Weighting {
    fn default() -> Self {
        Weighting::InverseDistance {
            epsilon: DEFAULT_EPSILON,
        }
    }
}

pub fn predict_outcome<T: Real>(
    neighbors: &[(&PatientRecord<T>, T)],
    weighting: Weighting,
) -> Result<T, KnnError> {
    match neighbors {
        [] => Err(KnnError::EmptyNeighborList),
        [(only, _)] => Ok(only.outcome),
        _ => {
            let mut num = T::zero();
            let mut den = T::zero();
            for (p, d) in neighbors {
                let w = match weighting {
                    Weighting::InverseDistance { epsilon } => T::one() / (*d + T::lit(epsilon)),
                    Weighting::Uniform => T::one(),
                };
                num += w * p.outcome;
                den += w;
            }
            Ok(num / den)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RecommendParams {
    pub k: usize,
    pub k_min: usize,
    pub direction: Direction,
    pub weighting: Weighting,
}

impl Default for RecommendParams {
    fn default() -> Self {
        RecommendParams {
            k: DEFAULT_K,
            k_min: DEFAULT_K_MIN,
            direction: Direction::Lower,
            weighting: Weighting::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TherapyEstimate<T> {
    pub predicted_outcome: T,
    pub support: usize,
    pub used_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation<T> {
    /// Eligible therapies only.
    pub per_therapy: BTreeMap<String, TherapyEstimate<T>>,
    pub best: String,
    pub direction: Direction,
}

pub fn recommend<T: Real>(
    c: &Cohort<T>,
    patient: &impl HasFeatures<T>,
    params: &RecommendParams,
) -> Result<Recommendation<T>, KnnError> {
    if params.k_min == 0 || params.k < params.k_min {
        return Err(KnnError::InvalidParams(format!(
            "need k >= k_min >= 1, got k = {}, k_min = {}",
            params.k, params.k_min
        )));
    }
    conform(patient.features(), &c.schema)?;

    let mut per_therapy = BTreeMap::new();
    let mut best: Option<(&str, T, usize)> = None;
    for therapy in &c.therapies {
        let support = c.support(therapy);
        if support < params.k_min {
            continue;
        }
        let neighbors = nearest_for_therapy(c, therapy, patient, params.k)?;
        let predicted = predict_outcome(&neighbors, params.weighting)?;
        let used_k = neighbors.len();
        let better = match best {
            None => true,
            Some((_, b, bk)) => {
                let strictly = match params.direction {
                    Direction::Lower => predicted < b,
                    Direction::Higher => predicted > b,
                };
                strictly || (predicted == b && used_k > bk)
            }
        };
        if better {
            best = Some((therapy.as_str(), predicted, used_k));
        }
        per_therapy.insert(
            therapy.clone(),
            TherapyEstimate {
                predicted_outcome: predicted,
                support,
                used_k,
            },
        );
    }
    let (best, _, _) = best.ok_or(KnnError::NoEligibleTherapy { k_min: params.k_min })?;
    Ok(Recommendation {
        best: best.to_owned(),
        per_therapy,
        direction: params.direction,
    })
}

/// Read a cohort: one row per patient, a column per feature plus `therapy`
/// and `outcome`; an optional `id` column names the rows.
pub fn load_cohort_csv<T: Real>(
    input: &[u8],
    schema: FeatureSchema<T>,
) -> Result<Cohort<T>, KnnError> {
    let rs = crate::ingest::parse_csv(input, crate::ingest::CsvConfig::default())
        .map_err(|e| KnnError::BadRow { row: 0, reason: e.to_string() })?;
    let col = |name: &str| {
        rs.column_index(name).ok_or_else(|| KnnError::SchemaMismatch {
            feature: name.to_owned(),
            reason: "column missing from cohort file".into(),
        })
    };
    let therapy_col = col("therapy")?;
    let outcome_col = col("outcome")?;
    let id_col = rs.column_index("id");
    let feature_cols = schema
        .features
        .iter()
        .map(|f| col(&f.name))
        .collect::<Result<Vec<_>, _>>()?;

    let mut patients = Vec::with_capacity(rs.n_rows());
    for (r, row) in rs.rows.iter().enumerate() {
        let bad = |reason: String| KnnError::BadRow { row: r + 2, reason };
        let parse_num = |s: &str, what: &str| -> Result<T, KnnError> {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .map(T::lit)
                .ok_or_else(|| bad(format!("{what}: {s:?} is not a finite number")))
        };
        let features = schema
            .features
            .iter()
            .zip(&feature_cols)
            .map(|(f, &c)| match f.kind {
                FeatureKind::Numeric => parse_num(&row[c], &f.name).map(FeatureValue::Numeric),
                FeatureKind::Categorical => Ok(FeatureValue::Categorical(row[c].clone())),
            })
            .collect::<Result<Vec<_>, _>>()?;
        patients.push(PatientRecord {
            id: id_col.map_or_else(|| format!("row{}", r + 1), |c| row[c].clone()),
            features,
            therapy: row[therapy_col].clone(),
            outcome: parse_num(&row[outcome_col], "outcome")?,
        });
    }
    Cohort::new(schema, patients)
}

/// Parse a query patient: `{"id": "...", "features": {"name": value}}`
/// (a bare feature map is accepted too).
pub fn patient_from_json<T: Real + for<'de> Deserialize<'de>>(
    text: &str,
    schema: &FeatureSchema<T>,
) -> Result<Patient<T>, KnnError> {
    #[derive(Deserialize)]
    struct Wrapped<T> {
        #[serde(default)]
        id: Option<String>,
        features: BTreeMap<String, FeatureValue<T>>,
    }
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| KnnError::BadSchema(e.to_string()))?;
    let (id, features) = if value.get("features").is_some_and(|f| f.is_object()) {
        let w: Wrapped<T> = serde_json::from_value(value).map_err(|e| KnnError::BadSchema(e.to_string()))?;
        (w.id.unwrap_or_else(|| "patient".into()), w.features)
    } else {
        let m: BTreeMap<String, FeatureValue<T>> =
            serde_json::from_value(value).map_err(|e| KnnError::BadSchema(e.to_string()))?;
        ("patient".to_owned(), m)
    };
    Patient::from_named(id, &features, schema)
}

/// Therapy support counts, for reporting.
pub fn supports<T: Real>(c: &Cohort<T>) -> HashMap<&str, usize> {
    let mut out = HashMap::new();
    for p in &c.patients {
        *out.entry(p.therapy.as_str()).or_insert(0) += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn schema() -> FeatureSchema<f64> {
        FeatureSchema {
            features: vec![
                FeatureSpec {
                    name: "age".into(),
                    kind: FeatureKind::Numeric,
                    weight: 1.0,
                    range: Some([20.0, 80.0]),
                },
                FeatureSpec {
                    name: "sex".into(),
                    kind: FeatureKind::Categorical,
                    weight: 1.0,
                    range: None,
                },
            ],
        }
    }

    fn rec(id: &str, age: f64, sex: &str, therapy: &str, outcome: f64) -> PatientRecord<f64> {
        PatientRecord {
            id: id.into(),
            features: vec![FeatureValue::Numeric(age), FeatureValue::Categorical(sex.into())],
            therapy: therapy.into(),
            outcome,
        }
    }

    #[test]
    fn gower_examples() {
        let s = schema();
        let p = rec("p", 50.0, "M", "A", 7.0);
        assert_eq!(distance(&p, &p, &s).unwrap(), 0.0);
        let q = rec("q", 65.0, "F", "A", 7.0);
        assert!((distance(&p, &q, &s).unwrap() - 0.625).abs() < 1e-15);
        let far = rec("f", 80.0, "F", "A", 7.0);
        let near = rec("n", 20.0, "M", "A", 7.0);
        assert_eq!(distance(&near, &far, &s).unwrap(), 1.0);
        // Out-of-range values clip at 1.
        let beyond = rec("b", 200.0, "F", "A", 7.0);
        assert_eq!(distance(&near, &beyond, &s).unwrap(), 1.0);
    }

    #[test]
    fn distance_rejects_mismatched_records() {
        let s = schema();
        let p = rec("p", 50.0, "M", "A", 7.0);
        let bad = PatientRecord {
            features: vec![FeatureValue::Categorical("50".into()), FeatureValue::Categorical("M".into())],
            ..p.clone()
        };
        assert!(matches!(distance(&p, &bad, &s), Err(KnnError::SchemaMismatch { .. })));
        let mut degenerate = schema();
        degenerate.features[0].range = Some([5.0, 5.0]);
        assert!(matches!(
            distance(&p, &p, &degenerate),
            Err(KnnError::SchemaMismatch { .. }) | Err(KnnError::DegenerateRange(_))
        ));
        assert_eq!(degenerate.validate(), Err(KnnError::DegenerateRange("age".into())));
    }

    fn cluster() -> Cohort<f64> {
        let mut patients = Vec::new();
        for i in 0..10 {
            patients.push(rec(&format!("a{i}"), 30.0 + 4.0 * i as f64, if i % 2 == 0 { "M" } else { "F" }, "A", 6.0 + 0.1 * i as f64));
        }
        patients.push(rec("b0", 40.0, "M", "B", 8.0));
        Cohort::new(schema(), patients).unwrap()
    }

    #[test]
    fn nearest_matches_exhaustive_sort() {
        let c = cluster();
        let query = rec("q", 47.0, "M", "", 0.0);
        let got = nearest_for_therapy(&c, "A", &query, 3).unwrap();
        let mut all: Vec<(usize, f64)> = c
            .patients
            .iter()
            .enumerate()
            .filter(|(_, p)| p.therapy == "A")
            .map(|(i, p)| {
                let age = match p.features[0] { FeatureValue::Numeric(a) => a, _ => unreachable!() };
                let sex = match &p.features[1] { FeatureValue::Categorical(s) => s.clone(), _ => unreachable!() };
                let d = ((47.0f64 - age).abs() / 60.0 + if sex == "M" { 0.0 } else { 1.0 }) / 2.0;
                (i, d)
            })
            .collect();
        all.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap().then(a.0.cmp(&b.0)));
        let expected: Vec<&str> = all[..3].iter().map(|&(i, _)| c.patients[i].id.as_str()).collect();
        let got_ids: Vec<&str> = got.iter().map(|(p, _)| p.id.as_str()).collect();
        assert_eq!(got_ids, expected);
    }

    #[test]
    fn nearest_truncates_to_support() {
        let c = cluster();
        let query = rec("q", 47.0, "M", "", 0.0);
        assert_eq!(nearest_for_therapy(&c, "B", &query, 1).unwrap()[0].0.id, "b0");
        assert_eq!(nearest_for_therapy(&c, "B", &query, 30).unwrap().len(), 1);
        assert_eq!(
            nearest_for_therapy(&c, "Z", &query, 3),
            Err(KnnError::UnknownTherapy("Z".into()))
        );
    }

    #[test]
    fn prediction_examples() {
        let a = rec("a", 30.0, "M", "A", 6.0);
        let b = rec("b", 30.0, "M", "A", 8.0);
        assert_eq!(predict_outcome(&[(&a, 0.3)], Weighting::default()).unwrap(), 6.0);
        assert!((predict_outcome(&[(&a, 0.4), (&b, 0.4)], Weighting::default()).unwrap() - 7.0).abs() < 1e-12);
        // w = 1e6 against 1 / (1 + 1e-6); evaluated by hand.
        let w0 = 1.0 / 1e-6;
        let w1 = 1.0 / (1.0 + 1e-6);
        let oracle = (6.0 * w0 + 8.0 * w1) / (w0 + w1);
        let got = predict_outcome(&[(&a, 0.0), (&b, 1.0)], Weighting::default()).unwrap();
        assert!((got - oracle).abs() < 1e-12);
        assert!((got - 6.000002).abs() < 1e-8);
        assert_eq!(predict_outcome::<f64>(&[], Weighting::default()), Err(KnnError::EmptyNeighborList));
        assert_eq!(predict_outcome(&[(&a, 0.0), (&b, 1.0)], Weighting::Uniform).unwrap(), 7.0);
    }

    #[test]
    fn recommend_prefers_dominant_therapy() {
        let mut patients = Vec::new();
        for i in 0..8 {
            let age = 40.0 + i as f64;
            patients.push(rec(&format!("a{i}"), age, "M", "A", 6.0));
            patients.push(rec(&format!("b{i}"), age, "M", "B", 7.5));
        }
        patients.push(rec("c0", 45.0, "M", "C", 5.0));
        patients.push(rec("c1", 46.0, "M", "C", 5.0));
        let c = Cohort::new(schema(), patients).unwrap();
        let query = rec("q", 44.0, "M", "", 0.0);
        let r = recommend(&c, &query, &RecommendParams::default()).unwrap();
        assert_eq!(r.best, "A");
        // C has support 2 < k_min = 5.
        assert!(!r.per_therapy.contains_key("C"));
        assert_eq!(r.per_therapy["A"].used_k, 8);
        assert_eq!(r.per_therapy["A"].support, 8);

        let higher = RecommendParams {
            direction: Direction::Higher,
            ..Default::default()
        };
        assert_eq!(recommend(&c, &query, &higher).unwrap().best, "B");

        let strict = RecommendParams {
            k: 30,
            k_min: 20,
            ..Default::default()
        };
        assert_eq!(
            recommend(&c, &query, &strict),
            Err(KnnError::NoEligibleTherapy { k_min: 20 })
        );
        let bad = RecommendParams { k: 3, k_min: 5, ..Default::default() };
        assert!(matches!(recommend(&c, &query, &bad), Err(KnnError::InvalidParams(_))));
    }

    #[test]
    fn ties_prefer_larger_support_then_id() {
        let mut patients = Vec::new();
        for i in 0..6 {
            patients.push(rec(&format!("a{i}"), 40.0, "M", "A", 7.0));
            patients.push(rec(&format!("b{i}"), 40.0, "M", "B", 7.0));
        }
        patients.push(rec("b6", 70.0, "F", "B", 7.0));
        let c = Cohort::new(schema(), patients).unwrap();
        let query = rec("q", 40.0, "M", "", 0.0);
        assert_eq!(recommend(&c, &query, &RecommendParams::default()).unwrap().best, "B");
        let k6 = RecommendParams { k: 6, ..Default::default() };
        assert_eq!(recommend(&c, &query, &k6).unwrap().best, "A");
    }

    #[test]
    fn exact_duplicate_with_k1() {
        let mut patients = Vec::new();
        for (t, o) in [("A", 6.3), ("B", 7.1), ("C", 5.9)] {
            for i in 0..5 {
                patients.push(rec(&format!("{t}{i}"), 30.0 + 7.0 * i as f64, "F", t, 9.0));
            }
            patients.push(rec(&format!("{t}dup"), 52.0, "M", t, o));
        }
        let c = Cohort::new(schema(), patients).unwrap();
        let query = rec("q", 52.0, "M", "", 0.0);
        let r = recommend(&c, &query, &RecommendParams { k: 1, k_min: 1, ..Default::default() }).unwrap();
        assert_eq!(r.per_therapy["A"].predicted_outcome, 6.3);
        assert_eq!(r.per_therapy["B"].predicted_outcome, 7.1);
        assert_eq!(r.best, "C");
    }

    #[test]
    fn cohort_fills_ranges_and_loads_csv() {
        let csv = "id,age,sex,therapy,outcome\np1,30,M,A,6.5\np2,60,F,B,7.5\n";
        let mut s = schema();
        s.features[0].range = None;
        let c = load_cohort_csv(csv.as_bytes(), s.clone()).unwrap();
        assert_eq!(c.schema.features[0].range, Some([30.0, 60.0]));
        assert_eq!(c.therapies, vec!["A", "B"]);
        assert_eq!(c.patients[1].id, "p2");

        let bad = "age,sex,therapy,outcome\nold,M,A,6.5\n";
        assert!(matches!(load_cohort_csv(bad.as_bytes(), s.clone()), Err(KnnError::BadRow { row: 2, .. })));
        let missing = "age,therapy,outcome\n30,A,6.5\n";
        assert!(matches!(
            load_cohort_csv(missing.as_bytes(), s),
            Err(KnnError::SchemaMismatch { .. })
        ));
    }

    #[test]
    fn patient_json_forms() {
        let s = schema();
        let p = patient_from_json(r#"{"id": "x", "features": {"age": 50, "sex": "M"}}"#, &s).unwrap();
        assert_eq!(p.id, "x");
        assert_eq!(p.features[0], FeatureValue::Numeric(50.0));
        let bare = patient_from_json(r#"{"age": 50, "sex": "M"}"#, &s).unwrap();
        assert_eq!(bare.features, p.features);
        assert_eq!(
            patient_from_json(r#"{"age": 50}"#, &s),
            Err(KnnError::SchemaMismatch {
                feature: "sex".into(),
                reason: "missing".into()
            })
        );
    }

    #[test]
    fn schema_file_json() {
        let s: SchemaFile<f64> = serde_json::from_str(
            r#"{"features":[{"name":"age","kind":"numeric","range":[20,80]},{"name":"sex","kind":"categorical","weight":0.5}],"direction":"higher"}"#,
        )
        .unwrap();
        assert_eq!(s.features[0].weight, 1.0);
        assert_eq!(s.features[1].weight, 0.5);
        assert_eq!(s.direction, Direction::Higher);
    }

    #[test]
    fn works_in_f32() {
        let s = FeatureSchema::<f32> {
            features: vec![FeatureSpec { name: "x".into(), kind: FeatureKind::Numeric, weight: 1.0, range: Some([0.0, 10.0]) }],
        };
        let p = Patient { id: "p".into(), features: vec![FeatureValue::Numeric(2.0f32)] };
        let q = Patient { id: "q".into(), features: vec![FeatureValue::Numeric(7.0f32)] };
        assert_eq!(distance(&p, &q, &s).unwrap(), 0.5);
    }

    fn arb_record() -> impl Strategy<Value = PatientRecord<f64>> {
        (0.0f64..100.0, prop::sample::select(vec!["M", "F", "X"]))
            .prop_map(|(age, sex)| rec("r", age, sex, "A", 7.0))
    }

    proptest! {
        #[test]
        fn gower_is_a_bounded_metric(a in arb_record(), b in arb_record(), c in arb_record()) {
            let mut s = schema();
            s.features[0].range = Some([0.0, 100.0]);
            let ab = distance(&a, &b, &s).unwrap();
            let ba = distance(&b, &a, &s).unwrap();
            let ac = distance(&a, &c, &s).unwrap();
            let cb = distance(&c, &b, &s).unwrap();
            prop_assert_eq!(ab, ba);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(distance(&a, &a, &s).unwrap(), 0.0);
            prop_assert!(ab <= ac + cb + 1e-12);
        }

        #[test]
        fn prediction_is_a_convex_combination(
            outs in prop::collection::vec((4.0f64..12.0, 0.0f64..1.0), 1..30)
        ) {
            let recs: Vec<PatientRecord<f64>> = outs.iter().map(|&(o, _)| rec("r", 40.0, "M", "A", o)).collect();
            let nb: Vec<(&PatientRecord<f64>, f64)> = recs.iter().zip(&outs).map(|(r, &(_, d))| (r, d)).collect();
            let y = predict_outcome(&nb, Weighting::default()).unwrap();
            let lo = outs.iter().map(|o| o.0).fold(f64::INFINITY, f64::min);
            let hi = outs.iter().map(|o| o.0).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(y >= lo - 1e-9 && y <= hi + 1e-9);
        }

        #[test]
        fn rescaling_a_feature_keeps_recommendation(scale in 0.1f64..50.0, q_age in 20.0f64..80.0) {
            let base = cluster();
            let scaled_patients: Vec<PatientRecord<f64>> = base.patients.iter().map(|p| {
                let mut p = p.clone();
                if let FeatureValue::Numeric(a) = p.features[0] { p.features[0] = FeatureValue::Numeric(a * scale); }
                p
            }).collect();
            let mut s = schema();
            s.features[0].range = Some([20.0 * scale, 80.0 * scale]);
            let scaled = Cohort::new(s, scaled_patients).unwrap();
            let params = RecommendParams { k: 5, k_min: 1, ..Default::default() };
            let a = recommend(&base, &rec("q", q_age, "M", "", 0.0), &params).unwrap();
            let b = recommend(&scaled, &rec("q", q_age * scale, "M", "", 0.0), &params).unwrap();
            prop_assert_eq!(a.best, b.best);
        }
    }
}
