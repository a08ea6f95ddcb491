mod common;

use common::{check_graph_lemmas, random_matrix, random_weighted_graph, span_residual, span_scale};
use dadao::dynamics::{gossip_jump, gradient_jump, params_from, propagate, Probes, RunMode, RunOptions};
use dadao::graph::{generate, Graph, GraphKind, TimeVaryingTopology};
use dadao::objectives::{make_linear_regression, make_logistic};
use dadao::rng::{stream, Stream};
use dadao::{build_schedule, run, DriftMatrix, EventStream, NodeState};
use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn graph_lemmas_hold(seed in any::<u64>(), n in 2usize..25, d in 1usize..4) {
        let mut rng = stream(seed, Stream::Graph);
        let g = random_weighted_graph(n, &mut rng);
        let x = random_matrix(n, d, &mut rng);
        prop_assert_eq!(check_graph_lemmas(&g, &x), Ok(()));
        let w = rng.random_range(0.1..3.0);
        let uniform = Graph::new(n, g.edges().iter().map(|e| (e.i, e.j, w))).unwrap();
        prop_assert_eq!(check_graph_lemmas(&uniform, &x), Ok(()));
    }

    #[test]
    fn poisson_counts_and_ordering(seed in any::<u64>(), n in 3usize..15) {
        let topo = TimeVaryingTopology::fixed(generate(GraphKind::Cycle, n, seed).unwrap()).unwrap();
        let sched = build_schedule(n, 3.0, &topo, 20.0, seed).unwrap();
        prop_assert!(sched.events.windows(2).all(|w| w[0].time <= w[1].time));
        prop_assert!(sched.events.iter().all(|e| e.time >= 0.0 && e.time < 20.0));
        // counts are Poisson(20n) and Poisson(60), far inside 10 sd
        let g = sched.gradient_count() as f64;
        let c = sched.comm_count() as f64;
        let mg = 20.0 * n as f64;
        prop_assert!((g - mg).abs() < 10.0 * mg.sqrt());
        prop_assert!((c - 60.0).abs() < 10.0 * 60f64.sqrt());
    }

    #[test]
    fn gossip_preserves_sums(seed in any::<u64>(), d in 1usize..5) {
        let mut rng = stream(seed, Stream::Data);
        let p = params_from(rng.random_range(0.1..1.0), rng.random_range(1.0..20.0), rng.random_range(0.1..10.0)).unwrap();
        let mut a = NodeState::zeros(d);
        let mut b = NodeState::zeros(d);
        for s in [&mut a, &mut b] {
            for v in [&mut s.y, &mut s.z, &mut s.z_t] {
                *v = DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
            }
        }
        let (a2, b2) = gossip_jump(&a, &b, &p).unwrap();
        let tol = 1e-12 * (1.0 + p.beta_t) * 10.0;
        prop_assert!((&a2.z + &b2.z - &a.z - &b.z).norm() < tol);
        prop_assert!((&a2.z_t + &b2.z_t - &a.z_t - &b.z_t).norm() < tol);
        prop_assert_eq!((&a2.x, &a2.y, &a2.y_t), (&a.x, &a.y, &a.y_t));
    }

    #[test]
    fn propagation_composes(seed in any::<u64>(), t1 in 0.0f64..5.0, t2 in 0.0f64..5.0) {
        let mut rng = stream(seed, Stream::Data);
        let p = params_from(rng.random_range(0.1..1.0), rng.random_range(1.0..50.0), 1.0).unwrap();
        let drift = DriftMatrix::new(&p);
        let mut s = NodeState::zeros(2);
        for v in [&mut s.x, &mut s.x_t, &mut s.y, &mut s.y_t, &mut s.z, &mut s.z_t] {
            *v = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
        }
        let two_hops = propagate(&propagate(&s, t1, &drift).unwrap(), t1 + t2, &drift).unwrap();
        let one_hop = propagate(&s, t1 + t2, &drift).unwrap();
        for (a, b) in two_hops.blocks().iter().zip(one_hop.blocks()) {
            prop_assert!((*a - b).norm() <= 1e-10 * (1.0 + b.norm()));
        }
    }

    #[test]
    fn span_is_stable_along_runs(seed in any::<u64>(), n in 2usize..12) {
        let mut rng = stream(seed, Stream::Graph);
        let g = random_weighted_graph(n, &mut rng);
        let topo = TimeVaryingTopology::fixed(g).unwrap();
        let obj = make_linear_regression(n, 15, 2, seed).unwrap();
        let lam = topo.lambda_star_with(dadao::graph::Normalization::TotalRate).unwrap();
        let (chi1, _) = topo.gossip_constants(lam).unwrap();
        let p = params_from(obj.mu(), obj.smoothness(), chi1).unwrap();
        let mut opts = RunOptions::new(Probes::uniform(10.0, 11), lam, seed);
        opts.keep_snapshots = true;
        opts.lyapunov = false;
        let events = EventStream::new(&topo, lam, 10.0, seed).unwrap();
        let tr = run(events, &topo, &obj, &p, RunMode::ExactGradient, &opts).unwrap();
        for snap in &tr.snapshots {
            prop_assert!(span_residual(snap) <= 1e-9 * span_scale(snap));
        }
    }

    #[test]
    fn saddle_is_a_fixed_point_of_jumps(seed in any::<u64>(), logistic in any::<bool>()) {
        let obj = if logistic {
            make_logistic(4, 12, 3, 0.3, seed).unwrap()
        } else {
            make_linear_regression(4, 12, 3, seed).unwrap()
        };
        let p = params_from(obj.mu(), obj.smoothness(), 2.0).unwrap();
        let cert = obj.saddle_certificate(p.nu).unwrap();
        let state = |i: usize| NodeState {
            x: cert.x_star.clone(),
            x_t: cert.x_star.clone(),
            y: cert.y_star[i].clone(),
            y_t: cert.y_star[i].clone(),
            z: cert.z_star[i].clone(),
            z_t: cert.z_star[i].clone(),
            last_update: 0.0,
        };
        for i in 0..4 {
            let s = state(i);
            let g = gradient_jump(&s, i, &obj.grad_fi(i, &s.x), &p).unwrap();
            prop_assert_eq!(&g, &s);
            let (a, b) = gossip_jump(&s, &state((i + 1) % 4), &p).unwrap();
            prop_assert!((&a.z - &s.z).norm() < 1e-12 && (&b.z_t - &state((i + 1) % 4).z_t).norm() < 1e-10);
            // zero drift at the saddle
            let later = propagate(&s, 3.0, &DriftMatrix::new(&p)).unwrap();
            for (u, v) in later.blocks().iter().zip(s.blocks()) {
                prop_assert!((*u - v).norm() < 1e-12 * (1.0 + v.norm()));
            }
        }
    }
}
