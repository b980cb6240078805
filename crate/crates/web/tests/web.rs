use serde_json::Value;
use vet_web::{channels, disclose, identity};

fn json(s: String) -> Value {
    serde_json::from_str(&s).unwrap()
}

#[test]
fn channel_curves_for_both_strategies() {
    let v = json(channels(8, 1024).unwrap());
    let curves = v["curves"].as_array().unwrap();
    assert_eq!(curves.len(), 2);
    assert_eq!(curves[0]["strategy"], "naive");
    assert_eq!(curves[0]["feasible"], false);
    assert_eq!(curves[1]["feasible"], true);
    assert_eq!(curves[1]["latencies"].as_array().unwrap().len(), 8);
    assert!(channels(0, 1024).is_err());
    assert!(channels(3, 0).is_err());
}

#[test]
fn disclosure_view_masks_unrevealed_chunks() {
    let text = "GET / HTTP/1.1\r\nx-api-key: abcdefghijklmnop\r\n\r\n";
    let v = json(disclose(text, 8, "0-8", 3).unwrap());
    assert_eq!(v["verified"], true);
    assert_eq!(v["revealed_chunks"], serde_json::json!([0]));
    let view = v["view"].as_str().unwrap();
    assert!(view.starts_with("GET / HT"));
    assert!(!view.contains("abcdefgh"));
    assert!(disclose(text, 8, "5-2", 3).is_err());
    assert!(disclose(text, 8, "0-999", 3).is_err());
}

#[test]
fn identity_of_a_document() {
    let doc = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/www/example-aid.json")).unwrap();
    let v = json(identity(&doc).unwrap());
    assert!(v["id"].as_str().unwrap().starts_with("sha256:"));
    assert_eq!(v["violations"], serde_json::json!([]));
    assert!(identity("{\"agent_name\":1}").is_err());
}
