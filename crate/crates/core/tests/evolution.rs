use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roadsearch::evolution::{
    crossover, eligible_parents, evolve_epoch, init_random, k_crossover, mutate, run, score_population, swap, GaConfig,
    Member, Scorer,
};
use roadsearch::geometry::RoadGenome;
use roadsearch::simulator::RoadConfig;
use roadsearch::Result;

/// Rewards total absolute curvature, so selection visibly favours bends.
struct BendScorer;

impl Scorer for BendScorer {
    fn f1(&self, genomes: &[RoadGenome]) -> Result<Vec<f64>> {
        Ok(genomes.iter().map(|g| g.curvatures().iter().map(|c| c.abs()).sum()).collect())
    }
}

fn genome(c: Vec<f64>) -> RoadGenome {
    RoadGenome::from_curvatures(c, 1.0).unwrap()
}

fn dist(a: &RoadGenome, b: &RoadGenome) -> f64 {
    a.curvatures().iter().zip(b.curvatures()).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

fn sorted_bits(values: impl IntoIterator<Item = f64>) -> Vec<u64> {
    let mut v: Vec<u64> = values.into_iter().map(f64::to_bits).collect();
    v.sort_unstable();
    v
}

fn small_config(seed: u64) -> GaConfig {
    GaConfig { initial_population: 40, select_f1: 30, select_f2: 20, epochs: 3, rng_seed: seed, ..GaConfig::default() }
}

proptest! {
    #[test]
    fn crossovers_keep_length_and_gene_multiset(
        a in prop::collection::vec(-0.1f64..0.1, 50),
        b in prop::collection::vec(-0.1f64..0.1, 50),
        seed in any::<u64>(),
    ) {
        let (a, b) = (genome(a), genome(b));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let parents = sorted_bits(a.curvatures().iter().chain(b.curvatures()).copied());
        for (x, y) in [crossover(&a, &b, &mut rng).unwrap(), k_crossover(&a, &b, &mut rng).unwrap()] {
            prop_assert_eq!(x.len(), 50);
            prop_assert_eq!(y.len(), 50);
            prop_assert_eq!(sorted_bits(x.curvatures().iter().chain(y.curvatures()).copied()), parents.clone());
            // Every position comes from one of the two parents.
            for i in 0..50 {
                let pair = [a.curvatures()[i], b.curvatures()[i]];
                prop_assert!(pair.contains(&x.curvatures()[i]) && pair.contains(&y.curvatures()[i]));
            }
        }
    }

    #[test]
    fn swap_permutes_and_mutation_keeps_length(c in prop::collection::vec(-0.1f64..0.1, 50), seed in any::<u64>()) {
        let g = genome(c);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = swap(&g, [5, 15], &mut rng).unwrap();
        prop_assert_eq!(sorted_bits(s.curvatures().iter().copied()), sorted_bits(g.curvatures().iter().copied()));
        prop_assert_eq!(s.arc_lengths(), g.arc_lengths());
        let m = mutate(&g, [-0.7, 0.7], 3, &mut rng);
        prop_assert_eq!(m.len(), 50);
        let changed = (0..50).filter(|&i| m.curvatures()[i] != g.curvatures()[i]).count();
        prop_assert!(changed <= 7);
    }
}

#[test]
fn random_population_is_valid_and_spread_out() {
    let roads = RoadConfig::default();
    let pop = init_random(500, &roads, &mut ChaCha8Rng::seed_from_u64(17)).unwrap();
    assert_eq!(pop.len(), 500);
    assert!(pop.iter().all(|g| roads.is_valid(g)));
    let mut spread: Vec<&RoadGenome> = Vec::new();
    for g in &pop {
        if spread.iter().all(|s| dist(s, g) > 0.2) {
            spread.push(g);
        }
    }
    assert!(spread.len() >= 10, "only {} mutually distant genomes", spread.len());
}

/// Greedy scan by descending F1 with stable ties, written out longhand.
fn eligible_oracle(members: &[Member], threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..members.len()).collect();
    for i in 1..order.len() {
        let mut j = i;
        while j > 0 && members[order[j]].f1 > members[order[j - 1]].f1 {
            order.swap(j, j - 1);
            j -= 1;
        }
    }
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let mut near = false;
        for &k in &kept {
            if dist(&members[i].genome, &members[k].genome) < threshold {
                near = true;
            }
        }
        if !near {
            kept.push(i);
        }
    }
    kept
}

#[test]
fn eligibility_matches_greedy_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let base: Vec<f64> = (0..50).map(|_| rng.random_range(-0.05..0.05)).collect();
        let members: Vec<Member> = (0..30)
            .map(|_| {
                let spread = rng.random_range(0.0..0.06);
                let c = base.iter().map(|b| b + rng.random_range(-spread..=spread)).collect();
                // Coarse scores force ties.
                Member { genome: genome(c), f1: rng.random_range(0..5) as f64, f2: 0.0 }
            })
            .collect();
        for threshold in [0.0, 0.1, 0.2, 0.3] {
            assert_eq!(eligible_parents(&members, threshold), eligible_oracle(&members, threshold));
        }
    }
}

#[test]
fn one_epoch_improves_f1_and_respects_sizes() {
    let roads = RoadConfig::default();
    let config = small_config(5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let initial = score_population(init_random(40, &roads, &mut rng).unwrap(), &BendScorer, 0).unwrap();
    let (next, stats) = evolve_epoch(&initial, &BendScorer, &config, &roads, &mut rng).unwrap();
    assert_eq!(next.epoch, 1);
    assert!(next.members.len() <= config.select_f2);
    assert!(stats.pool_size >= initial.members.len());
    assert!(next.members.iter().all(|m| roads.is_valid(&m.genome)));
    let mean = |ms: &[Member]| ms.iter().map(|m| m.f1).sum::<f64>() / ms.len() as f64;
    // Baseline: random subsets of the previous population of the survivors' size.
    let mut baseline = 0.0;
    for _ in 0..100 {
        let mut idx: Vec<usize> = (0..initial.members.len()).collect();
        for i in 0..next.members.len() {
            let j = rng.random_range(i..idx.len());
            idx.swap(i, j);
        }
        let subset: Vec<Member> = idx[..next.members.len()].iter().map(|&i| initial.members[i].clone()).collect();
        baseline += mean(&subset) / 100.0;
    }
    assert!(mean(&next.members) >= baseline, "{} < {baseline}", mean(&next.members));
    for m in &next.members {
        assert_eq!(m.f1, BendScorer.f1(std::slice::from_ref(&m.genome)).unwrap()[0]);
    }
}

#[test]
fn zero_epochs_returns_initial_population() {
    let roads = RoadConfig::default();
    let out = run(&GaConfig { epochs: 0, ..small_config(2) }, &roads, &BendScorer).unwrap();
    assert!(out.metrics.is_empty());
    assert_eq!(out.last, out.initial);
    assert_eq!(out.initial.members.len(), 40);
}

#[test]
fn runs_are_deterministic_and_report_every_epoch() {
    let roads = RoadConfig::default();
    let a = run(&small_config(3), &roads, &BendScorer).unwrap();
    let b = run(&small_config(3), &roads, &BendScorer).unwrap();
    assert_eq!(a.metrics.len(), 3);
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.last, b.last);
    assert_eq!(a.metrics.iter().map(|s| s.epoch).collect::<Vec<_>>(), vec![1, 2, 3]);
    let c = run(&small_config(4), &roads, &BendScorer).unwrap();
    assert_ne!(a.last, c.last);
}
