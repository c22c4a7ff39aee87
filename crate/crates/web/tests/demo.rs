use gwin_web::{flops, image_pixels, Demo};
use serde_json::Value;

#[test]
fn demo_round_trip() {
    let mut demo = Demo::new(3).unwrap_or_else(|_| panic!("demo setup failed"));
    assert!(demo.confident_size() > 0);
    assert_eq!(demo.test_image(0).len(), image_pixels());
    demo.train(2).unwrap_or_else(|_| panic!("training failed"));
    assert_eq!(demo.iteration(), 2);

    let all: Value = serde_json::from_str(&demo.infer(5, 1.0, 0).ok().unwrap()).unwrap();
    assert_eq!(all["path"], "transformed");
    assert_eq!(all["final_label"], all["post_transform"]["label"]);
    assert_eq!(all["transformed"].as_array().unwrap().len(), image_pixels());
    let none: Value = serde_json::from_str(&demo.infer(5, 0.0, 0).ok().unwrap()).unwrap();
    assert_eq!(none["path"], "direct");
    assert_eq!(none["final_label"], none["initial"]["label"]);
    assert_eq!(none["initial"], all["initial"]);

    let rows: Vec<Value> = serde_json::from_str(&demo.sweep(1).ok().unwrap()).unwrap();
    assert_eq!(rows.len(), 8);
    let rejected: Vec<f64> = rows.iter().map(|r| r["pct_reject"]["mean"].as_f64().unwrap()).collect();
    assert!(rejected.windows(2).all(|w| w[0] <= w[1]), "{rejected:?}");
}

#[test]
fn flop_reports_cover_both_models() {
    let reports: Vec<Value> = serde_json::from_str(&flops().ok().unwrap()).unwrap();
    let totals: Vec<u64> = reports.iter().map(|r| r["total"].as_u64().unwrap()).collect();
    assert_eq!(totals, [54_179_344, 15_430_990]);
}
