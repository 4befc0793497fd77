mod common;

use std::collections::HashSet;

use common::enumerate;
use num_bigint::BigUint;
use vlga::chromosome::Chromosome;
use vlga::rng::seeded;
use vlga::search_space::{Activation, PoolKind, SearchSpace};

fn distinct(cs: &[Chromosome]) -> usize {
    cs.iter().map(Chromosome::canonical_json).collect::<HashSet<_>>().len()
}

#[test]
fn phase0_enumeration_matches_formula() {
    let space = SearchSpace::new(vec![8, 16], vec![1, 3], vec![Activation::Relu, Activation::Tanh], vec![PoolKind::Max, PoolKind::Average])
        .unwrap();
    let all = enumerate(&space, 0);
    assert!(all.iter().all(|c| c.is_within(&space)));
    assert_eq!(BigUint::from(distinct(&all)), space.phase0_space_size());
    assert_eq!(distinct(&all), 1024);
}

#[test]
fn phase1_enumeration_matches_formula() {
    let space = SearchSpace::new(vec![8], vec![1, 3], vec![Activation::Relu], vec![PoolKind::Max, PoolKind::Average]).unwrap();
    let all = enumerate(&space, 1);
    assert!(all.len() <= 100_000);
    assert_eq!(BigUint::from(distinct(&all)), space.total_space_size(1));
    assert_eq!(BigUint::from(distinct(&enumerate(&space, 0))), space.phase0_space_size());
}

#[test]
fn single_pool_kind_enumeration() {
    let space = SearchSpace::new(vec![8, 32], vec![3], vec![Activation::Elu], vec![PoolKind::Average]).unwrap();
    for phase in 0..=1 {
        let all = enumerate(&space, phase);
        assert_eq!(BigUint::from(distinct(&all)), space.total_space_size(phase), "phase {phase}");
    }
}

#[test]
fn random_chromosomes_stay_in_enumerated_set() {
    let space = SearchSpace::new(vec![8], vec![1, 3], vec![Activation::Relu], vec![PoolKind::Max, PoolKind::Average]).unwrap();
    let all: HashSet<String> = enumerate(&space, 1).iter().map(Chromosome::canonical_json).collect();
    let mut rng = seeded(5);
    for _ in 0..2_000 {
        assert!(all.contains(&Chromosome::random(&space, 1, &mut rng).canonical_json()));
    }
}

#[test]
fn default_space_headline_numbers() {
    let space = SearchSpace::default();
    assert_eq!(space.phase0_space_size(), BigUint::from(156_800u32));
    // 4 * (7*5*2)^2 * 2 * 2 * 2 for the first block, 2 * (7*5*2)^2 * 2 * 2 * 2 per extension
    let phase0: u128 = 4 * 70 * 70 * 8;
    let block: u128 = 2 * 70 * 70 * 8;
    assert_eq!(phase0, 156_800);
    assert_eq!(space.total_space_size(6), BigUint::from(phase0 * block.pow(6)));
    let lo: BigUint = BigUint::from(10u32).pow(34);
    assert!(space.total_space_size(6) >= lo && space.total_space_size(6) < lo * 10u32);
}
