use watson_core::freqtable::ProportionMatrix;
use watson_core::library::{questions_view, view};
use watson_core::seriation::{path_cost, seriate, SeriationConfig};
use watson_core::{load_table, synth, QuestionConfig, QuestionKind};

fn survey_table(size: usize, seed: u64) -> (watson_core::FreqTable, synth::SurveyTruth) {
    let data = synth::survey(size, seed);
    let codebook = serde_json::to_string(&data.codebook).unwrap();
    (load_table(data.csv.as_bytes(), Some(&codebook)).unwrap(), data.truth)
}

#[test]
fn state_bars_are_non_increasing() {
    let (t, _) = survey_table(30_000, 7);
    let states = view(&t, &["state"]).unwrap();
    assert_eq!(states.shape(), &[12]);
    let o = watson_core::seriation::order_by_count::<f64>(&states).unwrap();
    let counts: Vec<u64> = o.perm.iter().map(|&i| states.counts()[i]).collect();
    assert!(counts.windows(2).all(|w| w[0] >= w[1]), "{counts:?}");
    assert!(counts.windows(2).all(|w| w[0] > w[1]), "planted weights are distinct: {counts:?}");
}

fn spearman(a: &[usize], b: &[usize]) -> f64 {
    let n = a.len() as f64;
    let d2: f64 = a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum();
    1.0 - 6.0 * d2 / (n * (n * n - 1.0))
}

#[test]
fn seriation_recovers_department_gradient() {
    let (t, truth) = survey_table(30_000, 7);
    let dc = view(&t, &["department", "choice_rank"]).unwrap();
    let props: ProportionMatrix<f64> = dc.proportions("department").unwrap();
    let order = seriate(&props, SeriationConfig::default()).unwrap();
    assert!(order.exact);

    let alphabetical: Vec<usize> = {
        let mut idx: Vec<usize> = (0..props.n_bars()).collect();
        idx.sort_by_key(|&i| props.bar_labels[i].clone());
        idx
    };
    assert!(order.cost <= path_cost(&props, &alphabetical).unwrap());

    let rank_of = |label: &str| truth.department_gradient_order.iter().position(|d| d == label).unwrap();
    let got: Vec<usize> = (0..props.n_bars()).collect();
    let truth_pos: Vec<usize> = order.perm.iter().map(|&i| rank_of(&props.bar_labels[i])).collect();
    let rho = spearman(&got, &truth_pos);
    assert!(rho.abs() >= 0.9, "rank correlation with the planted gradient {rho}");
}

#[test]
fn planted_gradient_prompts_a_trend_question() {
    let (t, _) = survey_table(30_000, 7);
    let qs = questions_view(&t, &["department", "choice_rank"], Some("department"), &QuestionConfig::default()).unwrap();
    assert!(qs.iter().any(|q| q.kind == QuestionKind::OrderTrend), "{qs:#?}");
}

#[test]
fn table_compresses_the_records() {
    let (t, _) = survey_table(30_000, 7);
    assert_eq!(t.total(), 30_000);
    assert!(t.n_cells() < 30_000 * 7);
}
