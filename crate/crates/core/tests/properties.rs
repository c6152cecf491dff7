use mwum_net::capacity::{critical_resources, effective_load};
use mwum_net::fixtures::t2;
use mwum_net::lifting::lifting_map;
use mwum_net::workload::{cost, effective_cost, lyapunov};
use mwum_net::{
    monotone_closure, rate_allocation, schedule_weight, select_schedule, FlowSpec, Network, PolicyParams, Queue,
    Schedule,
};
use proptest::prelude::*;

/// Acyclic networks on up to five queues. Queue `i` forwards to
/// `i + 1 + jump[i]` when `link[i]` is set; every queue without an upstream
/// neighbour gets a flow.
fn network() -> impl Strategy<Value = Network> {
    (1usize..=5)
        .prop_flat_map(|m| {
            (
                Just(m),
                prop::collection::vec(any::<bool>(), m),
                prop::collection::vec(0usize..3, m),
                prop::collection::vec((0.05f64..0.5, 0.2f64..0.9), m),
                prop::collection::vec(1u64..(1 << m), 1..4),
            )
        })
        .prop_filter_map("invalid network", |(m, link, jump, rates, gens)| {
            let queues: Vec<Queue> = (0..m).map(|i| Queue::new(format!("l{i}"), "v")).collect();
            let routes: Vec<(usize, usize)> =
                (0..m).filter(|&i| link[i] && i + 1 + jump[i] < m).map(|i| (i, i + 1 + jump[i])).collect();
            let flows: Vec<FlowSpec> = (0..m)
                .filter(|&i| !routes.iter().any(|&(_, to)| to == i))
                .map(|i| FlowSpec::new(format!("l{i}"), "v", rates[i].0, rates[i].1))
                .collect();
            let mut generators: Vec<Vec<usize>> =
                gens.iter().map(|&g| (0..m).filter(|e| g >> e & 1 == 1).collect()).collect();
            generators.extend((0..m).map(|e| vec![e]));
            Network::new(queues, &routes, flows, &generators, 10.0).ok()
        })
}

fn state(net: &Network) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..4.0], net.num_flows()),
        prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..4.0], net.num_queues()),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn closure_is_down_closed(m in 1usize..8, gens in prop::collection::vec(any::<u64>(), 1..4)) {
        let gens: Vec<Schedule> = gens.iter().map(|g| Schedule::from_queues((0..m).filter(|e| g >> e & 1 == 1))).collect();
        let set = monotone_closure(m, &gens).unwrap();
        for &g in &gens {
            prop_assert!(set.contains(g));
        }
        for &s in set.elements() {
            for e in s.queues() {
                let smaller = Schedule::from_queues(s.queues().filter(|&x| x != e));
                prop_assert!(set.contains(smaller));
            }
        }
    }

    #[test]
    fn xi_inverts_the_outflow_operator(net in network(), v in prop::collection::vec(-3.0f64..3.0, 5)) {
        let v = &v[..net.num_queues()];
        let back = net.net_outflow(&net.xi_apply(v));
        for (a, b) in back.iter().zip(v) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rate_is_scale_free(n in 0.0f64..5.0, q in 0.0f64..5.0, k in 0.1f64..10.0, alpha in 0.25f64..4.0) {
        let p = PolicyParams::new(alpha, 10.0).unwrap();
        let a = rate_allocation(n, q, &p);
        let b = rate_allocation(k * n, k * q, &p);
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        prop_assert!((0.0..=10.0).contains(&a));
    }

    #[test]
    fn selected_schedule_is_heaviest_on_nonempty_queues(
        (net, (_, q)) in network().prop_flat_map(|net| { let s = state(&net); (Just(net), s) }),
        alpha in prop_oneof![Just(1.0), Just(2.0), 0.3f64..3.0],
    ) {
        let p = PolicyParams::new(alpha, 10.0).unwrap();
        let pi = select_schedule(&q, &p, &net);
        let w = schedule_weight(pi, &q, alpha, &net);
        for &s in net.schedules().elements() {
            prop_assert!(schedule_weight(s, &q, alpha, &net) <= w + 1e-12 * w.abs().max(1.0));
        }
        prop_assert!(pi.queues().all(|e| q[e] > 0.0));
    }

    #[test]
    fn effective_load_is_homogeneous(net in network(), k in 0.1f64..5.0) {
        let rho = net.rho();
        let scaled: Vec<f64> = rho.iter().map(|r| k * r).collect();
        let (a, _) = effective_load(&rho, &net).unwrap();
        let (b, _) = effective_load(&scaled, &net).unwrap();
        prop_assert!((b - k * a).abs() <= 1e-9 * b.max(1.0));
    }

    #[test]
    fn effective_cost_and_lift_never_exceed_their_bounds(
        n in 0.0f64..3.0, q1 in 0.0f64..3.0, q2 in 0.0f64..3.0, alpha in prop_oneof![Just(1.0), 0.3f64..3.0],
    ) {
        let net = t2(0.5);
        let cr = critical_resources(&net.rho(), &net).unwrap();
        let (n, q) = (vec![n], vec![q1, q2]);
        let cstar = effective_cost(&n, &q, &net, &cr).unwrap();
        prop_assert!(cstar <= cost(&n, &q, &net) + 1e-9);
        let (ln, lq) = lifting_map(&n, &q, &net, alpha, &cr).unwrap();
        let before = lyapunov(&n, &q, &net, alpha).0;
        let after = lyapunov(&ln, &lq, &net, alpha).0;
        prop_assert!(after <= before + 1e-9 * before.max(1.0));
    }
}
