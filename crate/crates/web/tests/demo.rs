use labeldist_web::{alpha_sweep_json, calibrate_json, entropy_histograms_json};
use serde_json::Value;

fn parse(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array()
        .unwrap()
        .iter()
        .map(|x| x.as_f64().unwrap())
        .collect()
}

#[test]
fn calibrate_reports_all_three_distributions() {
    let v = parse(calibrate_json(&[2.0, 1.0, 0.0], 0.5, 0.3, "literal").unwrap());
    let soft = floats(&v["softmax"]["probs"]);
    assert!((soft[0] - 0.66524).abs() < 1e-5);
    let hot = floats(&v["temp_scaled"]["probs"]);
    assert!((hot[0] - 0.50648).abs() < 1e-5);
    assert!(
        v["temp_scaled"]["entropy"].as_f64().unwrap() > v["softmax"]["entropy"].as_f64().unwrap()
    );
    assert!(v["smoothed"].is_object());

    let flat = parse(calibrate_json(&[0.0, 0.0, 0.0], 1.0, 0.6, "literal").unwrap());
    assert!(flat["smoothed"].is_null());
    assert!(calibrate_json(&[1.0, 2.0], 1.0, 0.1, "literal").is_err());
    assert!(calibrate_json(&[1.0, 2.0, 3.0], 1.0, 0.1, "fancy").is_err());
}

#[test]
fn sweep_covers_the_alpha_grid() {
    let v = parse(alpha_sweep_json(2.2, 0).unwrap());
    let alphas = floats(&v["alphas"]);
    assert_eq!(alphas.len(), 21);
    assert_eq!(floats(&v["kl"]).len(), 21);
    assert!(alphas.contains(&v["matched_alpha"].as_f64().unwrap()));
}

#[test]
fn histograms_count_every_evaluation_example() {
    let v = parse(entropy_histograms_json(2.2, 0).unwrap());
    for key in ["human", "baseline", "temp_scaled", "multi_annot"] {
        let counts: u64 = v[key]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| c.as_u64().unwrap())
            .sum();
        assert_eq!(counts, 500, "{key}");
    }
    assert_eq!(floats(&v["edges"]).len(), 11);
    let kl = floats(&v["kl"]);
    assert!(kl[1] < kl[0] && kl[2] < kl[0], "{kl:?}");
}
