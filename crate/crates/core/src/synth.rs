//! Seeded synthetic datasets with planted structure.
//!
//! `survey` produces a student-survey-like file with seven categorical
//! characteristics and a known department-by-choice-rank gradient. `cohort`
//! produces a four-therapy patient cohort whose outcomes depend on distance
//! to a per-therapy center, so the best therapy for any patient is known.
//! Both are pure functions of `(size, seed)`; callers decide where the
//! returned files go.

use crate::ingest::{Codebook, CodebookEntry};
use crate::knn::{Direction, FeatureKind, FeatureSpec, FeatureValue, Patient, SchemaFile};
use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

pub const DEFAULT_SURVEY_SIZE: usize = 30_000;
pub const DEFAULT_COHORT_SIZE: usize = 1_000;
pub const DEFAULT_TEST_PATIENTS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SynthKind {
    Survey,
    Cohort,
}

impl std::str::FromStr for SynthKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "survey" => Ok(SynthKind::Survey),
            "cohort" => Ok(SynthKind::Cohort),
            other => Err(format!("unknown dataset kind {other:?} (survey|cohort)")),
        }
    }
}

/// A named output file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SynthFile {
    pub name: String,
    pub contents: String,
}

pub const STATES: [&str; 12] = [
    "Abia", "Borno", "Delta", "Edo", "Enugu", "Imo", "Kano", "Kogi", "Lagos", "Ogun", "Oyo", "Rivers",
];
/// Sampling weights for `STATES`; deliberately unrelated to alphabetical order.
const STATE_WEIGHTS: [f64; 12] = [3.0, 6.0, 5.0, 2.0, 4.0, 1.5, 14.0, 1.0, 22.0, 7.0, 9.0, 8.0];

pub const DEPARTMENTS: [&str; 8] = [
    "Agriculture",
    "Architecture",
    "Economics",
    "Engineering",
    "History",
    "Law",
    "Medicine",
    "Physics",
];
/// Position of each department on the planted preference gradient, aligned
/// with `DEPARTMENTS`. 0 means mostly first choice, 1 mostly fourth.
const DEPARTMENT_GRADIENT: [f64; 8] = [0.95, 0.55, 0.40, 0.10, 0.80, 0.25, 0.0, 0.68];
const DEPARTMENT_WEIGHTS: [f64; 8] = [6.0, 3.0, 5.0, 8.0, 2.0, 6.0, 9.0, 3.0];

const CHOICE_RANKS: [&str; 4] = ["1st", "2nd", "3rd", "4th"];
const SEXES: [&str; 2] = ["Female", "Male"];
const AGE_GROUPS: [&str; 5] = ["16-17", "18-19", "20-21", "22-24", "25+"];
const AGE_WEIGHTS: [f64; 5] = [10.0, 35.0, 30.0, 18.0, 7.0];
const SCHOOL_TYPES: [&str; 3] = ["Federal", "Private", "State"];
const SCHOOL_WEIGHTS: [f64; 3] = [5.0, 2.0, 4.0];
const YEARS: [&str; 2] = ["2011", "2012"];

pub const SURVEY_COLUMNS: [&str; 7] = [
    "state",
    "department",
    "choice_rank",
    "sex",
    "age_group",
    "school_type",
    "year",
];

/// Choice-rank distribution for gradient position `g`: a discretized
/// triangle peaking at rank `1 + 3g`.
pub fn choice_rank_probabilities(g: f64) -> [f64; 4] {
    let peak = 3.0 * g;
    let mut w = [0.0; 4];
    for (r, w) in w.iter_mut().enumerate() {
        *w = (2.0 - (r as f64 - peak).abs()).max(0.15);
    }
    let s: f64 = w.iter().sum();
    w.map(|x| x / s)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyTruth {
    pub seed: u64,
    pub size: usize,
    /// Departments sorted by planted gradient position.
    pub department_gradient_order: Vec<String>,
    pub department_gradient: Vec<(String, f64)>,
    /// `choice_rank` probabilities per department, in `DEPARTMENTS` order.
    pub choice_rank_probabilities: Vec<(String, [f64; 4])>,
    pub state_weights: Vec<(String, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SurveyData {
    pub csv: String,
    pub codebook: Codebook,
    pub truth: SurveyTruth,
}

impl SurveyData {
    pub fn files(&self) -> Vec<SynthFile> {
        vec![
            SynthFile {
                name: "survey.csv".into(),
                contents: self.csv.clone(),
            },
            SynthFile {
                name: "survey_codebook.json".into(),
                contents: pretty(&self.codebook),
            },
            SynthFile {
                name: "survey_truth.json".into(),
                contents: pretty(&self.truth),
            },
        ]
    }
}

fn pretty<S: Serialize>(v: &S) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn weighted(weights: &[f64]) -> WeightedIndex<f64> {
    WeightedIndex::new(weights).expect("positive weights")
}

/// The codebook shipped with the survey: ordinal orders and choice-rank scores.
pub fn survey_codebook() -> Codebook {
    let entry = |labels: &[&str], scores: Option<Vec<f64>>| CodebookEntry {
        order: Some(labels.iter().map(|s| s.to_string()).collect()),
        scores,
    };
    let mut map = std::collections::BTreeMap::new();
    map.insert(
        "choice_rank".to_owned(),
        entry(&CHOICE_RANKS, Some(vec![1.0, 2.0, 3.0, 4.0])),
    );
    map.insert("age_group".to_owned(), entry(&AGE_GROUPS, None));
    map.insert("year".to_owned(), entry(&YEARS, None));
    Codebook(map)
}

pub fn survey(size: usize, seed: u64) -> SurveyData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let state_d = weighted(&STATE_WEIGHTS);
    let dept_d = weighted(&DEPARTMENT_WEIGHTS);
    let rank_d: Vec<WeightedIndex<f64>> = DEPARTMENT_GRADIENT
        .iter()
        .map(|&g| weighted(&choice_rank_probabilities(g)))
        .collect();
    let age_d = weighted(&AGE_WEIGHTS);
    let school_d = weighted(&SCHOOL_WEIGHTS);

    let mut csv = String::with_capacity(size * 48);
    csv.push_str(&SURVEY_COLUMNS.join(","));
    csv.push('\n');
    for _ in 0..size {
        let d = dept_d.sample(&mut rng);
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{}",
            STATES[state_d.sample(&mut rng)],
            DEPARTMENTS[d],
            CHOICE_RANKS[rank_d[d].sample(&mut rng)],
            SEXES[rng.gen_range(0..2)],
            AGE_GROUPS[age_d.sample(&mut rng)],
            SCHOOL_TYPES[school_d.sample(&mut rng)],
            YEARS[rng.gen_range(0..2)],
        );
    }

    let mut by_gradient: Vec<(String, f64)> = DEPARTMENTS
        .iter()
        .zip(DEPARTMENT_GRADIENT)
        .map(|(d, g)| (d.to_string(), g))
        .collect();
    let department_gradient = by_gradient.clone();
    by_gradient.sort_by(|a, b| a.1.total_cmp(&b.1));
    SurveyData {
        csv,
        codebook: survey_codebook(),
        truth: SurveyTruth {
            seed,
            size,
            department_gradient_order: by_gradient.into_iter().map(|(d, _)| d).collect(),
            department_gradient,
            choice_rank_probabilities: DEPARTMENTS
                .iter()
                .zip(DEPARTMENT_GRADIENT)
                .map(|(d, g)| (d.to_string(), choice_rank_probabilities(g)))
                .collect(),
            state_weights: STATES
                .iter()
                .zip(STATE_WEIGHTS)
                .map(|(s, w)| (s.to_string(), w))
                .collect(),
        },
    }
}

pub const THERAPIES: [&str; 4] = ["T1", "T2", "T3", "T4"];
/// Per-therapy centers in normalized `(age, bmi)` space.
pub const THERAPY_CENTERS: [[f64; 2]; 4] = [[0.25, 0.25], [0.75, 0.25], [0.25, 0.75], [0.75, 0.75]];
pub const AGE_RANGE: [f64; 2] = [20.0, 80.0];
pub const BMI_RANGE: [f64; 2] = [18.0, 40.0];
pub const OUTCOME_BASE: f64 = 6.0;
pub const OUTCOME_SLOPE: f64 = 4.0;
pub const OUTCOME_NOISE_SD: f64 = 0.15;
const SEX_WEIGHT: f64 = 0.5;

fn normalized(age: f64, bmi: f64) -> [f64; 2] {
    [
        (age - AGE_RANGE[0]) / (AGE_RANGE[1] - AGE_RANGE[0]),
        (bmi - BMI_RANGE[0]) / (BMI_RANGE[1] - BMI_RANGE[0]),
    ]
}

/// Noise-free outcome of therapy `t` (index into `THERAPIES`); lower is better.
pub fn expected_outcome(t: usize, age: f64, bmi: f64) -> f64 {
    let [u, v] = normalized(age, bmi);
    let [cu, cv] = THERAPY_CENTERS[t];
    OUTCOME_BASE + OUTCOME_SLOPE * ((u - cu).powi(2) + (v - cv).powi(2)).sqrt()
}

/// The planted best therapy: argmin of the noise-free outcome, ties to the
/// lower id.
pub fn true_best(age: f64, bmi: f64) -> &'static str {
    let mut best = 0;
    for t in 1..THERAPIES.len() {
        if expected_outcome(t, age, bmi) < expected_outcome(best, age, bmi) {
            best = t;
        }
    }
    THERAPIES[best]
}

pub fn cohort_schema() -> SchemaFile<f64> {
    SchemaFile {
        features: vec![
            FeatureSpec {
                name: "age".into(),
                kind: FeatureKind::Numeric,
                weight: 1.0,
                range: Some(AGE_RANGE),
            },
            FeatureSpec {
                name: "bmi".into(),
                kind: FeatureKind::Numeric,
                weight: 1.0,
                range: Some(BMI_RANGE),
            },
            FeatureSpec {
                name: "sex".into(),
                kind: FeatureKind::Categorical,
                weight: SEX_WEIGHT,
                range: None,
            },
        ],
        direction: Direction::Lower,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPatient {
    pub patient: Patient<f64>,
    pub true_best: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortTruth {
    pub seed: u64,
    pub size: usize,
    pub rule: String,
    pub therapies: Vec<String>,
    pub centers: Vec<[f64; 2]>,
    pub outcome_base: f64,
    pub outcome_slope: f64,
    pub noise_sd: f64,
    pub test_patients: Vec<TestPatient>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CohortData {
    pub csv: String,
    pub schema: SchemaFile<f64>,
    pub truth: CohortTruth,
}

impl CohortData {
    pub fn files(&self) -> Vec<SynthFile> {
        vec![
            SynthFile {
                name: "cohort.csv".into(),
                contents: self.csv.clone(),
            },
            SynthFile {
                name: "cohort_schema.json".into(),
                contents: pretty(&self.schema),
            },
            SynthFile {
                name: "cohort_truth.json".into(),
                contents: pretty(&self.truth),
            },
        ]
    }
}

fn draw_features(rng: &mut ChaCha8Rng) -> (f64, f64, &'static str) {
    // One decimal, as a clinic would record them.
    let age = (rng.gen_range(AGE_RANGE[0]..=AGE_RANGE[1]) * 10.0).round() / 10.0;
    let bmi = (rng.gen_range(BMI_RANGE[0]..=BMI_RANGE[1]) * 10.0).round() / 10.0;
    let sex = *["F", "M"].choose(rng).expect("non-empty");
    (age, bmi, sex)
}

/// `size` cohort members with uniformly assigned therapies, plus
/// `n_test` held-out patients labelled with their planted best therapy.
pub fn cohort(size: usize, seed: u64, n_test: usize) -> CohortData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, OUTCOME_NOISE_SD).expect("valid sd");
    let mut csv = String::from("id,age,bmi,sex,therapy,outcome\n");
    for i in 0..size {
        let (age, bmi, sex) = draw_features(&mut rng);
        let t = rng.gen_range(0..THERAPIES.len());
        let outcome = expected_outcome(t, age, bmi) + noise.sample(&mut rng);
        let _ = writeln!(csv, "p{:05},{age:.1},{bmi:.1},{sex},{},{outcome:.3}", i + 1, THERAPIES[t]);
    }
    let test_patients = (0..n_test)
        .map(|i| {
            let (age, bmi, sex) = draw_features(&mut rng);
            TestPatient {
                patient: Patient {
                    id: format!("q{:04}", i + 1),
                    features: vec![
                        FeatureValue::Numeric(age),
                        FeatureValue::Numeric(bmi),
                        FeatureValue::Categorical(sex.to_owned()),
                    ],
                },
                true_best: true_best(age, bmi).to_owned(),
            }
        })
        .collect();
    CohortData {
        csv,
        schema: cohort_schema(),
        truth: CohortTruth {
            seed,
            size,
            rule: "outcome = base + slope * euclidean distance from normalized (age, bmi) to the therapy center + noise; best therapy = nearest center".into(),
            therapies: THERAPIES.iter().map(|s| s.to_string()).collect(),
            centers: THERAPY_CENTERS.to_vec(),
            outcome_base: OUTCOME_BASE,
            outcome_slope: OUTCOME_SLOPE,
            noise_sd: OUTCOME_NOISE_SD,
            test_patients,
        },
    }
}

pub fn generate(kind: SynthKind, size: usize, seed: u64) -> Vec<SynthFile> {
    match kind {
        SynthKind::Survey => survey(size, seed).files(),
        SynthKind::Cohort => cohort(size, seed, DEFAULT_TEST_PATIENTS).files(),
    }
}
