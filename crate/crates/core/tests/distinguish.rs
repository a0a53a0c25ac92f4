use decoykit::bounds::{min_single_photon, sps_bounds};
use decoykit::channel::{expected_tally, ChannelModel};
use decoykit::distinguish::{
    b1_via_dark_subtraction, b1_worst_case, bounds_distinguishable, min_single_photon_distinguishable, q_four_laser,
    rate_distinguishable, DistinguishabilityMatrix,
};
use decoykit::model::{ProtocolSpec, SessionTally, SystemParams};
use decoykit::optimize::evaluate;
use decoykit::stats::observation_bounds;
use proptest::prelude::*;

fn setup(loss_db: f64) -> (ProtocolSpec, SystemParams, SessionTally) {
    let params = SystemParams {
        eta: SystemParams::eta_from_db(loss_db),
        ..SystemParams::default()
    };
    let protocol = ProtocolSpec::three_level(0.063, 0.655, 0.01, 0.0275, 0.9625);
    let tally = expected_tally(&protocol, &params, &ChannelModel::from_params(&params));
    (protocol, params, tally)
}

#[test]
fn four_laser_values() {
    assert_eq!(q_four_laser(0), 1.0);
    assert_eq!(q_four_laser(1), 1.0);
    assert_eq!(q_four_laser(2), 0.75);
    assert_eq!(q_four_laser(3), 0.5);
    assert_eq!(q_four_laser(4), 0.25);
}

#[test]
fn all_ones_reproduces_standard_bounds() {
    let (protocol, params, tally) = setup(30.0);
    let obs = observation_bounds(&tally, params.epsilon).unwrap();
    let ones = DistinguishabilityMatrix::constant(3, params.k_max, 1.0);
    let got = min_single_photon_distinguishable(&protocol, &obs, &ones, params.k_max).unwrap();
    assert_eq!(got.p_s, min_single_photon(&protocol, &obs, params.k_max).unwrap());
    let full = bounds_distinguishable(&tally, &protocol, &params, &ones).unwrap();
    let standard = sps_bounds(&protocol, &obs, params.k_max).unwrap();
    assert_eq!(full.b1_max, standard.b1_max);
    let ch = ChannelModel::from_params(&params);
    let a = rate_distinguishable(&protocol, &params, &ch, &ones).unwrap().key_length;
    let b = evaluate(&protocol, &params, &ch).unwrap().report.key_length;
    assert!((a - b).abs() <= 1e-12 * b);
}

#[test]
fn all_zeros_is_the_single_level_bound() {
    let (protocol, params, tally) = setup(30.0);
    let obs = observation_bounds(&tally, params.epsilon).unwrap();
    let zeros = DistinguishabilityMatrix::constant(3, params.k_max, 0.0);
    let got = min_single_photon_distinguishable(&protocol, &obs, &zeros, params.k_max).unwrap();
    let alone = ProtocolSpec::from_parts(&[0.655], &[1.0], &[0]);
    let single = decoykit::model::ObservationBounds {
        levels: vec![obs.levels[2]],
    };
    assert_eq!(got.p_s[2], min_single_photon(&alone, &single, params.k_max).unwrap()[0]);
    assert_eq!(got.p_s[2], 0.0);
}

#[test]
fn four_laser_sits_strictly_between() {
    let (protocol, params, tally) = setup(30.0);
    let obs = observation_bounds(&tally, params.epsilon).unwrap();
    let k = params.k_max;
    let ps = |q: &DistinguishabilityMatrix| min_single_photon_distinguishable(&protocol, &obs, q, k).unwrap().p_s[2];
    let zero = ps(&DistinguishabilityMatrix::constant(3, k, 0.0));
    let four = ps(&DistinguishabilityMatrix::four_laser(&protocol, k));
    let one = ps(&DistinguishabilityMatrix::constant(3, k, 1.0));
    assert!(zero < four && four < one, "{zero} {four} {one}");
}

#[test]
fn dark_subtraction_ordering() {
    let (protocol, params, tally) = setup(30.0);
    let obs = observation_bounds(&tally, params.epsilon).unwrap();
    let sps = sps_bounds(&protocol, &obs, params.k_max).unwrap();
    let worst = b1_worst_case(&tally, &sps, &params, &protocol).unwrap();
    let sub = b1_via_dark_subtraction(&tally, &sps, &params, &protocol).unwrap();
    assert!(sub < worst, "{sub} {worst}");
    let mut no_dark = sps.clone();
    no_dark.p_d = vec![0.0; 3];
    assert_eq!(b1_via_dark_subtraction(&tally, &no_dark, &params, &protocol).unwrap(), worst);
}

#[test]
fn partial_distinguishability_never_helps() {
    for db in [15.0, 25.0, 30.0, 35.0] {
        let (protocol, params, _) = setup(db);
        let ch = ChannelModel::from_params(&params);
        let four = rate_distinguishable(&protocol, &params, &ch, &DistinguishabilityMatrix::four_laser(&protocol, params.k_max))
            .unwrap()
            .key_length;
        let standard = evaluate(&protocol, &params, &ch).unwrap().report.key_length;
        assert!(four <= standard);
    }
}

#[test]
fn malformed_matrix() {
    let (protocol, params, tally) = setup(30.0);
    let obs = observation_bounds(&tally, params.epsilon).unwrap();
    let short = DistinguishabilityMatrix {
        rows: vec![vec![1.0; 3]; 3],
    };
    assert!(min_single_photon_distinguishable(&protocol, &obs, &short, params.k_max).is_err());
    let bad = DistinguishabilityMatrix::constant(3, params.k_max, 1.5);
    assert!(min_single_photon_distinguishable(&protocol, &obs, &bad, params.k_max).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn raising_q_never_lowers_single_photons(row in prop::collection::vec(0.0f64..=1.0, 9), k in 0usize..9, bump in 0.0f64..=1.0, db in 15.0f64..35.0) {
        let (protocol, params, tally) = setup(db);
        let obs = observation_bounds(&tally, params.epsilon).unwrap();
        let mut q = DistinguishabilityMatrix::constant(3, 9, 1.0);
        q.rows[1] = row;
        let mut higher = q.clone();
        higher.rows[1][k] = (higher.rows[1][k] + bump).min(1.0);
        let a = min_single_photon_distinguishable(&protocol, &obs, &q, 9).unwrap();
        let b = min_single_photon_distinguishable(&protocol, &obs, &higher, 9).unwrap();
        prop_assert!(b.p_s[2] >= a.p_s[2] * (1.0 - 1e-9) - 1e-18);
        prop_assert!(b.p_d[2] >= a.p_d[2] * (1.0 - 1e-9) - 1e-18);
    }
}
