use nalgebra::DMatrix;
use ncl::consensus::{AxisBox, ConsensusOperator, EnsembleState, Network};
use ncl::graph::{build_topology, metropolis_weights, Graph, Topology, WeightMatrix};
use ncl::harness::{sample_initial, InitDist};
use ncl::objectives::{
    generate_strongly_convex, identity_fixture, ConstraintSet, NodeQuadratic, Objective, QuadraticEnsemble,
    StronglyConvexParams,
};
use ncl::optimizers::{
    dgd_run, dgd_track_run, dgd_transform_run, next_run, Algorithm, OptimizerConfig, StepSchedule,
};
use ncl::transforms::{Transform, TransformSchedule};

fn ring(n: usize) -> Network {
    let g = build_topology(&Topology::Ring(n)).unwrap();
    Network::new(g.clone(), metropolis_weights(&g)).unwrap()
}

fn constant(alg: Algorithm, alpha: f64, iters: usize) -> OptimizerConfig {
    OptimizerConfig {
        schedule: StepSchedule::Constant { alpha },
        iters,
        ..OptimizerConfig::new(alg)
    }
}

#[test]
fn scalar_dgd_halves_each_step() {
    let g = Graph::from_edges(1, &[]).unwrap();
    let net = Network::new(g, WeightMatrix::identity(1)).unwrap();
    let node = NodeQuadratic::from_hessian(vec![0], &DMatrix::identity(1, 1), vec![0.0]).unwrap();
    let obj = QuadraticEnsemble::new(1, 1, vec![node], ConstraintSet::AllSpace, None).unwrap();
    for iters in 0..20 {
        let rec = dgd_run(&constant(Algorithm::Dgd, 0.5, iters), &obj, &net, &EnsembleState::from_column(&[8.0]).unwrap(), 0).unwrap();
        assert_eq!(rec.x_final.get(0, 0), 8.0 * 0.5f64.powi(iters as i32));
    }
}

#[test]
fn power_decay_is_pinned() {
    let s = StepSchedule::PowerDecay { a: 0.8, b: 0.53 };
    assert_eq!(s.at(0), 0.8);
    assert!((s.at(999) - 0.020_563_166_262_150_906).abs() < 1e-15, "{}", s.at(999));
    assert_eq!(StepSchedule::Constant { alpha: 0.01 }.at(12345), 0.01);
}

#[test]
fn rate_sandwich_holds_along_dgd() {
    let params = StronglyConvexParams::default();
    let obj = generate_strongly_convex(&params, 21).unwrap();
    let net = ring(params.n);
    let x0 = sample_initial(&InitDist::Uniform { a: 0.0, b: 15.0 }, params.n, params.dim, 21).unwrap();
    let rec = dgd_run(&constant(Algorithm::Dgd, 1e-3, 3000), &obj, &net, &x0, 0).unwrap();
    let n_nu = obj.lambda_min();
    for m in &rec.metrics {
        assert!(0.5 * n_nu * m.dist_mean <= m.gap_mean + 1e-9, "t={} {} > {}", m.t, 0.5 * n_nu * m.dist_mean, m.gap_mean);
    }
}

#[test]
fn zero_gradient_consensus_start_is_stationary() {
    let net = ring(5);
    let obj = identity_fixture(&net.graph, 2, -3.0).unwrap();
    let x0 = EnsembleState::constant(5, &[3.0; 10]);
    let dgd = dgd_run(&constant(Algorithm::Dgd, 0.1, 50), &obj, &net, &x0, 0).unwrap();
    assert_eq!(dgd.x_final, x0);
    let next = next_run(
        &OptimizerConfig {
            iters: 50,
            ..OptimizerConfig::new(Algorithm::Next)
        },
        &obj,
        &net,
        &ConsensusOperator::Linear,
        &net.weights,
        &x0,
        0,
    )
    .unwrap();
    assert_eq!(next.x_final, x0);
}

#[test]
fn tracking_with_row_stochastic_mixing_reaches_optimum() {
    let g = build_topology(&Topology::Ring(3)).unwrap();
    let net = Network::new(g.clone(), metropolis_weights(&g)).unwrap();
    // Closed neighborhoods have 3 nodes, so a floor of 0.01 means delta = 0.97.
    let wx = WeightMatrix::random_row_stochastic(&g, 0.97, 4).unwrap();
    assert!(!wx.is_column_stochastic());
    assert!((0..3).all(|i| wx.support(i).iter().all(|&j| wx.get(i, j) >= 0.01 - 1e-15)));
    let mixed = Network::new(g, wx).unwrap();
    let obj = identity_fixture(&net.graph, 1, -1.0).unwrap();
    let x0 = sample_initial(&InitDist::Uniform { a: 0.5, b: 1.5 }, 3, 3, 4).unwrap();
    let rec = dgd_track_run(&constant(Algorithm::DgdTrack, 1e-3, 5000), &obj, &mixed, &net.weights, &x0, 0).unwrap();
    assert!(rec.empirical_only);
    let xs = obj.optimum().0;
    let err: f64 = (0..3)
        .map(|i| rec.x_final.row(i).iter().zip(xs).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
        .sum();
    assert!(err <= 1e-4, "{err}");
    assert!(rec.metrics.iter().all(|m| m.y_residual <= 1e-9));
}

#[test]
fn plain_next_converges_on_fixture() {
    let net = ring(3);
    let obj = identity_fixture(&net.graph, 1, -1.0).unwrap();
    let x0 = sample_initial(&InitDist::ChiSquared { k: 5 }, 3, 3, 2).unwrap();
    let rec = next_run(
        &OptimizerConfig {
            iters: 3000,
            // Proximal weight matched to L_f = 1; with tau = 100 the summed
            // step sum(alpha[t]) / tau stays near 1 and 3000 iterations fall short.
            tau: 1.0,
            metric_every: 100,
            ..OptimizerConfig::new(Algorithm::Next)
        },
        &obj,
        &net,
        &ConsensusOperator::Linear,
        &net.weights,
        &x0,
        0,
    )
    .unwrap();
    let hit = rec.metrics.iter().find(|m| m.gap_rel < 1e-4);
    assert!(hit.is_some(), "final gap_rel {}", rec.last().gap_rel);
}

#[test]
fn transformed_dgd_span_stays_under_envelope() {
    let net = ring(5);
    let obj = identity_fixture(&net.graph, 1, -5.0).unwrap();
    let x0 = sample_initial(&InitDist::Uniform { a: 1.0, b: 10.0 }, 5, 5, 8).unwrap();
    let alpha = 1e-3;
    let cfg = OptimizerConfig {
        metric_every: 1,
        ..constant(Algorithm::DgdTransform, alpha, 4000)
    };
    let t = Transform::power(2.0).unwrap();
    let rec = dgd_transform_run(&cfg, &obj, &net, &TransformSchedule::uniform(t), &x0, 0).unwrap();
    assert_eq!(rec.clamp_events, 0);

    // Iterates stay in [1, 10]; the descent step adds at most alpha * B.
    let region = AxisBox::new(vec![1.0; 5], vec![10.0; 5]).unwrap();
    let b = obj.constants(&region).unwrap().b;
    let (lp, lm) = t.lipschitz_bounds(1.0 - alpha * b, 10.0 + alpha * b).unwrap();
    let d = net.graph.diameter().unwrap();
    let rho_hat = net.weights.theta() / (lp * lm);
    let rho = 1.0 - 2.0 * rho_hat.powi(d as i32);
    let sp0 = x0.span();
    for m in &rec.metrics {
        let env = rho.powi((m.t / d) as i32) * sp0 + 2.0 * alpha * b * lp * lm / (1.0 - rho_hat);
        assert!(m.span <= env, "t={} span {} envelope {env}", m.t, m.span);
    }
    let x = rec.x_final.as_slice();
    assert!(x.iter().all(|v| (1.0..=10.0).contains(v)));
}
