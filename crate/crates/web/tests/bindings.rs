use serde_json::Value;
use workscope_web::{cohens_kappa, demo_dataset, depth_curves, rank_occupations};

#[test]
fn exported_functions_return_json_for_the_demo() {
    let data = demo_dataset();
    let ranked: Value = serde_json::from_str(&rank_occupations(&data, 0.0005, 2).unwrap()).unwrap();
    let rows = ranked.as_array().unwrap();
    assert!(!rows.is_empty());
    assert!(rows[0]["drivers"].as_array().unwrap().len() <= 2);

    let m: Value = serde_json::from_str(&depth_curves(&data, "user", vec![0.0005, 0.01], vec![0.2, 0.8]).unwrap()).unwrap();
    assert_eq!(m["values"].as_array().unwrap().len(), 2);
    for v in m["values"].as_array().unwrap().iter().flat_map(|r| r.as_array().unwrap()) {
        assert!((0.0..=1.0).contains(&v.as_f64().unwrap()));
    }

    let k: Value = serde_json::from_str(&cohens_kappa(10, 0, 0, 10).unwrap()).unwrap();
    assert_eq!(k["kappa"], 1.0);
}
