//! Repair against an independent brute-force oracle, plus heuristic validity
//! on random inputs.

use envgen::env::{Domain, Environment, TileType};
use envgen::make_seed;
use envgen::nca::{NcaArchitecture, NcaGenerator};
use envgen::repair::{repair, RepairBudget, RepairMode};
use envgen::validate::{validate, Constraints};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

mod common;

use common::{all_storage, frame, oracle_valid, random_warehouse, STORAGE};

#[test]
fn exact_matches_brute_force_on_3x3_storage() {
    let everything = all_storage();
    let valid_by_count: Vec<Vec<Vec<TileType>>> = (0..=4)
        .map(|n| everything.iter().filter(|s| oracle_valid(&frame(s), n)).cloned().collect())
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..500 {
        let n_s = rng.random_range(0..=4usize);
        let storage: Vec<TileType> = (0..9).map(|_| STORAGE[rng.random_range(0..3)]).collect();
        let x_in = Environment::new(Domain::WarehouseEven, 7, 3, frame(&storage)).unwrap();
        let best = valid_by_count[n_s]
            .iter()
            .map(|s| s.iter().zip(&storage).filter(|(a, b)| a != b).count())
            .min();
        let result = repair(
            &x_in,
            &Constraints::with_shelves(n_s),
            &RepairBudget::default(),
            &mut ChaCha8Rng::seed_from_u64(case),
        );
        match best {
            None => assert!(result.is_err(), "case {case}: oracle says infeasible"),
            Some(d) => {
                let r = result.unwrap_or_else(|e| panic!("case {case}: {e}"));
                assert_eq!(r.mode, RepairMode::Exact);
                assert!(oracle_valid(r.env.tiles(), n_s), "case {case}");
                assert_eq!(r.distance, d as f64, "case {case}\n{}", x_in.to_text());
            }
        }
    }
}

#[test]
fn exact_tie_break_is_lexicographic() {
    // All-shelf storage with three shelves wanted: many optima at distance 6.
    let x_in = Environment::new(Domain::WarehouseEven, 7, 3, frame(&[TileType::Shelf; 9])).unwrap();
    let c = Constraints::with_shelves(3);
    let r = repair(&x_in, &c, &RepairBudget::default(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    let optimum = all_storage()
        .into_iter()
        .map(|s| frame(&s))
        .filter(|t| oracle_valid(t, 3))
        .filter(|t| t.iter().zip(x_in.tiles()).filter(|(a, b)| a != b).count() == 6)
        .min()
        .unwrap();
    assert_eq!(r.env.tiles(), optimum.as_slice());
}

#[test]
fn heuristic_is_valid_on_random_mini_warehouses() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let c = Constraints::with_shelves(24);
    for case in 0..200 {
        let x_in = random_warehouse(&mut rng, 16, 12);
        let r = repair(&x_in, &c, &RepairBudget::default(), &mut ChaCha8Rng::seed_from_u64(case))
            .unwrap_or_else(|e| panic!("case {case}: {e}\n{}", x_in.to_text()));
        assert!(validate(&r.env, &c).is_valid, "case {case}\n{}", r.env.to_text());
    }
}

#[test]
fn heuristic_is_valid_on_random_manufacturing() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let gen = Domain::Manufacturing.generatable();
    for case in 0..100 {
        let mut x_in = Environment::filled(Domain::Manufacturing, 12, 12, TileType::Empty).unwrap();
        let bias = rng.random_range(0..gen.len());
        for i in 0..x_in.len() {
            let t = if rng.random_bool(0.5) { gen[bias] } else { gen[rng.random_range(0..gen.len())] };
            x_in.set(i, t);
        }
        let r = repair(&x_in, &Constraints::default(), &RepairBudget::default(), &mut rng.clone())
            .unwrap_or_else(|e| panic!("case {case}: {e}"));
        assert!(validate(&r.env, &Constraints::default()).is_valid, "case {case}");
    }
}

#[test]
fn heuristic_is_valid_on_random_nca_outputs() {
    let arch = NcaArchitecture::for_domain(Domain::WarehouseEven, 8);
    let seed = make_seed(Domain::WarehouseEven, 16, 12).unwrap();
    let c = Constraints::with_shelves(24);
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..100 {
        let theta: Vec<f32> = (0..arch.param_count())
            .map(|_| rng.sample::<f32, _>(rand_distr::StandardNormal) * 0.2)
            .collect();
        let gen = NcaGenerator::new(Domain::WarehouseEven, arch, theta).unwrap();
        let x_in = gen.generate(&seed, 50).unwrap();
        let r = repair(&x_in, &c, &RepairBudget::default(), &mut ChaCha8Rng::seed_from_u64(case))
            .unwrap_or_else(|e| panic!("case {case}: {e}\n{}", x_in.to_text()));
        assert!(validate(&r.env, &c).is_valid, "case {case}");
    }
}

#[test]
fn larger_budget_never_lowers_similarity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let c = Constraints::with_shelves(24);
    for case in 0..20 {
        let x_in = random_warehouse(&mut rng, 16, 12);
        let mut last = None;
        for limit in [20_000u64, 200_000, 2_000_000, 20_000_000] {
            let budget = RepairBudget {
                work_limit: limit,
                ..RepairBudget::default()
            };
            let Ok(r) = repair(&x_in, &c, &budget, &mut ChaCha8Rng::seed_from_u64(case)) else {
                continue;
            };
            if let Some(prev) = last {
                assert!(r.similarity >= prev, "case {case}: {} < {prev}", r.similarity);
            }
            last = Some(r.similarity);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn repair_is_valid_and_idempotent(seed in any::<u64>(), n_s in 4usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x_in = random_warehouse(&mut rng, 12, 9);
        let c = Constraints::with_shelves(n_s);
        let budget = RepairBudget::default();
        if let Ok(r) = repair(&x_in, &c, &budget, &mut rng.clone()) {
            prop_assert!(validate(&r.env, &c).is_valid);
            let again = repair(&r.env, &c, &budget, &mut rng).unwrap();
            prop_assert_eq!(&again.env, &r.env);
            prop_assert_eq!(again.similarity, 1.0);
        }
    }
}
