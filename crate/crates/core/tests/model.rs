use decoykit::model::{validate, IntensityLevel, ProtocolSpec, SystemParams, Violation};
use proptest::prelude::*;

#[test]
fn validation_examples() {
    let params = SystemParams::default();
    assert!(validate(&ProtocolSpec::three_level(0.063, 0.655, 0.01, 0.0275, 0.9625), &params).is_empty());

    let v = validate(&ProtocolSpec::three_level(0.063, 0.655, 0.01, 0.0275, 0.95), &params);
    assert!(v.iter().any(|x| x.to_string().contains("probabilities sum ≠ 1")));

    let v = validate(&ProtocolSpec::from_parts(&[0.0, 0.3, 0.3], &[0.1, 0.2, 0.7], &[2]), &params);
    assert!(v.iter().any(|x| x.to_string().contains("intensities not distinct")));

    assert_eq!(validate(&ProtocolSpec::new(vec![]), &params), vec![Violation::EmptyProtocol]);

    let bad = SystemParams {
        epsilon: 0.0,
        visibility: 0.0,
        k_max: 1,
        ..params
    };
    let v = validate(&ProtocolSpec::three_level(0.063, 0.655, 0.01, 0.0275, 0.9625), &bad);
    for want in [Violation::Epsilon, Violation::Visibility, Violation::KMax] {
        assert!(v.contains(&want));
    }
}

#[test]
fn probability_tolerance() {
    let params = SystemParams::default();
    let nudged = ProtocolSpec::three_level(0.1, 0.5, 0.2, 0.3, 0.5 + 5e-13);
    assert!(validate(&nudged, &params).is_empty());
    let off = ProtocolSpec::three_level(0.1, 0.5, 0.2, 0.3, 0.5 + 1e-10);
    assert!(!validate(&off, &params).is_empty());
}

fn any_f64() -> impl Strategy<Value = f64> {
    prop_oneof![
        -2.0f64..2.0,
        Just(f64::NAN),
        Just(f64::INFINITY),
        Just(f64::NEG_INFINITY),
        Just(0.0),
        Just(1.0),
        any::<f64>(),
    ]
}

proptest! {
    #[test]
    fn validate_is_total(
        levels in prop::collection::vec((any_f64(), any_f64(), any::<bool>(), prop::option::of(prop::collection::vec(any_f64(), 0..4))), 0..5),
        eps in any_f64(), n in any_f64(), y0 in any_f64(), vis in any_f64(), eta in any_f64(),
        k_max in 0usize..20, sift in any_f64(), f_ec in any_f64(),
    ) {
        let protocol = ProtocolSpec::new(
            levels
                .into_iter()
                .map(|(mu, p, key, q)| IntensityLevel { mu, probability: p, encodes_key: key, q_row: q })
                .collect(),
        );
        let params = SystemParams { epsilon: eps, n_total: n, y0, visibility: vis, eta, k_max, sift, f_ec };
        let v = validate(&protocol, &params);
        for x in &v {
            prop_assert!(!x.to_string().is_empty());
        }
        if eps.is_nan() {
            prop_assert!(v.contains(&Violation::Epsilon));
        }
    }
}
