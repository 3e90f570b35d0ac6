use hieralm::io::{
    instance_from_str, instance_to_string, load_instance, save_instance, MatrixLayout,
};
use hieralm::random::{random_instance, rng, RandomSpec};
use hieralm::{build_instance, Error, GridSpec};
use proptest::prelude::*;

proptest! {
    #[test]
    fn round_trip_is_exact(seed in any::<u64>(), layout in prop_oneof![
        Just(MatrixLayout::Dense), Just(MatrixLayout::Coo), Just(MatrixLayout::Auto)]) {
        let spec = RandomSpec { allow_empty: true, ..RandomSpec::default() };
        let p = random_instance(&mut rng(seed), &spec);
        let meta = serde_json::json!({ "seed": seed });
        let text = instance_to_string(&p, Some(&meta), layout).unwrap();
        let back = instance_from_str(&text, "memory").unwrap();
        prop_assert_eq!(&back.problem, &p);
        prop_assert_eq!(back.meta, Some(meta));
    }
}

#[test]
fn grid_instance_through_a_file() {
    let (p, meta) = build_instance(&GridSpec::new(4, 5, 0.5).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("grid.json");
    save_instance(&p, Some(&serde_json::to_value(&meta).unwrap()), &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.contains("\"coo\""));
    let back = load_instance(&path).unwrap();
    assert_eq!(back.problem, p);
    assert_eq!(back.meta.unwrap()["kappa"], 0.5);
}

#[test]
fn malformed_json_reports_position() {
    let err = instance_from_str("{\"n\": 1,\n \"m1\": }", "broken.json").unwrap_err();
    match err {
        Error::Parse { context, line, .. } => {
            assert_eq!(context, "broken.json");
            assert_eq!(line, 2);
        }
        other => panic!("unexpected error {other:?}"),
    }
}

#[test]
fn inconsistent_dimensions_rejected() {
    let text = r#"{"n":2,"m1":1,"m2":0,"Q":[[1,0],[0,1]],"c":[0,0],
        "A1":[[1,2,3]],"b1":[1],"A2":[],"b2":[]}"#;
    assert!(instance_from_str(text, "t").is_err());
}
