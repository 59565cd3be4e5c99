use privirec::dataset::{generate_synthetic, split_clients, ClientProfile};
use privirec::linalg::DenseMatrix;
use privirec::protocol::{
    compute_item_degrees, distributed_power_method, run_privirec, run_privirec_k, FilterSet, Gram, ProtocolConfig,
};
use privirec::secagg::Traffic;
use proptest::prelude::*;

fn instance(users: usize, items: usize, seed: u64) -> Vec<ClientProfile> {
    split_clients(&generate_synthetic(users, items, 0.15, seed).unwrap()).clients
}

fn idempotency_error(filters: &FilterSet) -> f64 {
    let f = filters.lowpass.densify();
    f.matmul(&f).unwrap().max_abs_diff(&f)
}

fn ledger_balanced(filters: &FilterSet) -> bool {
    let ledger = &filters.ledger;
    ledger.server().received(Traffic::MaskedPayload) == ledger.total_client_sent(Traffic::MaskedPayload)
}

fn config(rank: usize, filter_rank: usize, iterations: usize, seed: u64) -> ProtocolConfig {
    ProtocolConfig { rank, filter_rank, iterations, seed, ..Default::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn iterate_is_orthonormal(users in 8usize..40, items in 8usize..40, rank in 1usize..6, iterations in 1usize..5, seed in 0u64..1000) {
        let clients = instance(users, items, seed);
        let cfg = config(rank, rank, iterations, seed);
        let mut agg = cfg.aggregator(users).unwrap();
        let degrees = compute_item_degrees(&clients, items, &mut agg).unwrap();
        let out = distributed_power_method(&clients, &degrees, &cfg, &mut agg).unwrap();
        let gram = out.x.t_matmul(&out.x).unwrap();
        prop_assert!(gram.max_abs_diff(&DenseMatrix::identity(rank)) <= 1e-8);
        for i in 0..rank {
            for j in 0..i {
                prop_assert_eq!(out.t[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn dense_filters_hold_invariants(users in 8usize..40, items in 8usize..40, rank in 1usize..6, seed in 0u64..1000) {
        let clients = instance(users, items, seed);
        let cfg = config(rank, rank, 2, seed);
        let mut agg = cfg.aggregator(users).unwrap();
        let filters = run_privirec(&clients, items, &cfg, &mut agg).unwrap();
        let Gram::Dense(p) = &filters.gram else { panic!("expected a dense gram") };
        prop_assert!(p.is_symmetric(1e-10));
        prop_assert!(p.as_slice().iter().all(|&x| x >= -1e-12));
        prop_assert!(idempotency_error(&filters) <= 1e-8);
        prop_assert!(ledger_balanced(&filters));
    }

    #[test]
    fn low_rank_filters_hold_invariants(users in 8usize..40, items in 8usize..40, rank in 1usize..6, shrink in 0usize..3, seed in 0u64..1000) {
        let clients = instance(users, items, seed);
        let filter_rank = rank.saturating_sub(shrink).max(1);
        let cfg = config(rank, filter_rank, 3, seed);
        let mut agg = cfg.aggregator(users).unwrap();
        let filters = run_privirec_k(&clients, items, &cfg, &mut agg).unwrap();
        let Gram::LowRank { lambda, basis } = &filters.gram else { panic!("expected a low-rank gram") };
        prop_assert_eq!(basis.cols(), rank);
        prop_assert!(lambda.values().iter().all(|&x| x >= 0.0));
        prop_assert_eq!(filters.lowpass.rank(), filter_rank);
        prop_assert!(idempotency_error(&filters) <= 1e-8);
        prop_assert!(ledger_balanced(&filters));
    }

    #[test]
    fn runs_are_deterministic(users in 4usize..24, items in 8usize..24, seed in 0u64..1000) {
        let clients = instance(users, items, seed);
        let cfg = config(2.min(users), 2.min(users), 2, seed);
        let mut agg = cfg.aggregator(users).unwrap();
        let a = run_privirec_k(&clients, items, &cfg, &mut agg).unwrap();
        let mut agg = cfg.aggregator(users).unwrap();
        let b = run_privirec_k(&clients, items, &cfg, &mut agg).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn filter_file_round_trips() {
    let clients = instance(20, 16, 3);
    let cfg = config(4, 3, 2, 3);
    for dense in [true, false] {
        let mut agg = cfg.aggregator(20).unwrap();
        let filters = if dense {
            run_privirec(&clients, 16, &cfg, &mut agg).unwrap()
        } else {
            run_privirec_k(&clients, 16, &cfg, &mut agg).unwrap()
        };
        let mut bytes = Vec::new();
        filters.write_to(&mut bytes).unwrap();
        let back = FilterSet::read_from(bytes.as_slice()).unwrap();
        assert_eq!(back.gram, filters.gram);
        assert_eq!(back.lowpass, filters.lowpass);
        assert_eq!(back.item_degrees, filters.item_degrees);
    }
}
