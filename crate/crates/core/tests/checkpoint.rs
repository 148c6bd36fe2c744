use chartmoe_core::moe::checkpoint::{load_connector, load_expert, save_connector, save_expert};
use chartmoe_core::moe::{ExpertMLP, GateNet, MoEConnector};
use chartmoe_core::numkit::Matrix;
use chartmoe_core::seed::rng_for;
use chartmoe_core::Error;

#[test]
fn connector_round_trip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = rng_for(5, "ckpt");
    let experts = (0..4)
        .map(|_| ExpertMLP::random(8, 6, 5, &mut rng))
        .collect();
    let gate = GateNet {
        w: Matrix::random_normal(8, 4, 1e-3, &mut rng),
        b: Matrix::row_vector(&[0.1, -1e-300, 3.0e12, f64::MIN_POSITIVE]),
    };
    let labels = ["vanilla", "table", "json", "code"]
        .map(String::from)
        .to_vec();
    let c = MoEConnector::new(experts, gate, 2, false, labels).unwrap();
    let path = dir.path().join("nested/c.json");
    save_connector(&path, &c).unwrap();
    assert_eq!(load_connector(&path).unwrap(), c);

    let e = c.experts()[2].clone();
    save_expert(dir.path().join("e.json"), "json", &e).unwrap();
    assert_eq!(
        load_expert(dir.path().join("e.json")).unwrap(),
        ("json".to_string(), e)
    );
}

#[test]
fn foreign_or_damaged_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x.json");
    std::fs::write(&p, r#"{"format": "something-else"}"#).unwrap();
    assert!(matches!(load_connector(&p), Err(Error::Format(_))));
    assert!(matches!(
        load_connector(dir.path().join("missing.json")),
        Err(Error::Io { .. })
    ));
}
