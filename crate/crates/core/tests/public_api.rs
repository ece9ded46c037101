use ncl::consensus::{run_pure_consensus, EnsembleState, Network, OperatorConfig, StepContext};
use ncl::graph::NetworkConfig;
use ncl::harness::{read_record, write_record, sample_initial, InitDist};
use ncl::objectives::{generate_partial_quadratic, PartialQuadraticParams, QuadraticEnsemble};
use ncl::optimizers::{next_run, Algorithm, OptimizerConfig};
use proptest::prelude::*;

fn network(json: &str) -> Network {
    let cfg: NetworkConfig = serde_json::from_str(json).unwrap();
    let (g, w) = cfg.build().unwrap();
    Network::new(g, w).unwrap()
}

#[test]
fn configs_drive_a_consensus_run() {
    let net = network(r#"{"topology":"custom","n":4,"edges":[[1,2],[2,3],[3,4]]}"#);
    assert_eq!(net.graph.diameter().unwrap(), 3);
    let op = OperatorConfig::from_json(r#"{"consensus":"pw_mean","p":-1}"#).unwrap().build().unwrap();
    let x0 = EnsembleState::from_column(&[1.0, 2.0, 4.0, 8.0]).unwrap();
    let tr = run_pure_consensus(&net, &x0, &op, 400, 0.0, 0).unwrap();
    // Metropolis weights are doubly stochastic, so the limit is the plain harmonic mean.
    let harmonic = 4.0 / (1.0 + 0.5 + 0.25 + 0.125);
    for v in tr.final_state.column(0) {
        assert!((v - harmonic).abs() < 1e-9, "{v} vs {harmonic}");
    }
}

#[test]
fn bad_network_configs_are_rejected() {
    for bad in [
        r#"{"topology":"ring"}"#,
        r#"{"topology":"custom","n":3,"edges":[[0,1]]}"#,
        r#"{"topology":"custom","n":3,"edges":[[1,2]]}"#,
        r#"{"topology":"ring","n":4,"weights":"uniform"}"#,
        r#"{"topology":"ring","n":3,"weights":{"self":0.5,"edge":0.5}}"#,
    ] {
        let cfg: NetworkConfig = serde_json::from_str(bad).unwrap();
        assert!(cfg.build().is_err(), "{bad}");
    }
    assert!(serde_json::from_str::<NetworkConfig>(r#"{"topology":"ring","n":4,"extra":1}"#).is_err());
}

#[test]
fn instance_and_record_survive_disk() {
    let net = network(r#"{"topology":"wrap19"}"#);
    let obj = generate_partial_quadratic(&net.graph, &PartialQuadraticParams::default(), 12).unwrap();
    let back = QuadraticEnsemble::from_json(&obj.to_json()).unwrap();
    assert_eq!(back.to_json(), obj.to_json());

    let x0 = sample_initial(&InitDist::ChiSquared { k: 5 }, 19, 38, 12).unwrap();
    let op = OperatorConfig::from_json(r#"{"consensus":"grad_cube","delta":0.9}"#).unwrap().build().unwrap();
    let cfg = OptimizerConfig {
        iters: 10,
        ..OptimizerConfig::new(Algorithm::Next)
    };
    let rec = next_run(&cfg, &back, &net, &op, &net.weights, &x0, 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    write_record(&rec, &path).unwrap();
    assert_eq!(read_record(&path).unwrap(), rec);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn nonlinear_steps_stay_inside_neighborhood_range(
        xs in prop::collection::vec(0.1f64..50.0, 6),
        p in prop_oneof![Just(-3.0), Just(0.0), Just(0.5), Just(2.0), Just(7.0)],
    ) {
        let net = network(r#"{"topology":"ring","n":6}"#);
        let x = EnsembleState::from_column(&xs).unwrap();
        let out = OperatorConfig::PwMean { p }.build().unwrap().apply(&net, &x, &StepContext::default()).unwrap().x;
        for i in 0..6 {
            let nb = net.graph.closed_neighborhood(i);
            let lo = nb.iter().map(|&j| xs[j]).fold(f64::INFINITY, f64::min);
            let hi = nb.iter().map(|&j| xs[j]).fold(f64::NEG_INFINITY, f64::max);
            let v = out.get(i, 0);
            prop_assert!(v >= lo * (1.0 - 1e-12) && v <= hi * (1.0 + 1e-12), "{} not in [{}, {}]", v, lo, hi);
        }
        prop_assert!(out.span() <= x.span() * (1.0 + 1e-12));
    }
}
