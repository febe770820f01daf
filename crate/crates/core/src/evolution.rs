//! Diversity-aware genetic algorithm over road genomes.
//!
//! Each epoch marks reproduction-eligible parents (greedy near-duplicate
//! exclusion in fitness order), breeds offspring with four operators, smooths
//! and validates them, and then selects survivors from parents and offspring:
//! first the best by predicted OOB mass (F1), then the most diverse of those by
//! median distance to the rest (F2).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::discriminator::diversity_f2;
use crate::error::{Error, Result};
use crate::geometry::{curvature_distance, RoadGenome};
use crate::simulator::RoadConfig;

/// Curvature range of the mutations used to build random roads.
pub const INIT_MUTATION_RANGE: [f64; 2] = [-0.2, 0.2];
/// Random roads receive between 1 and this many mutations.
pub const INIT_MAX_MUTATIONS: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaConfig {
    pub p_crossover: f64,
    pub p_2crossover: f64,
    pub p_swap: f64,
    pub p_mutation: f64,
    pub initial_population: usize,
    pub select_f1: usize,
    pub select_f2: usize,
    pub epochs: usize,
    pub mutation_range: [f64; 2],
    pub mutation_halfwidth: usize,
    pub swap_len_range: [usize; 2],
    pub dedup_threshold: f64,
    pub rng_seed: u64,
}

impl Default for GaConfig {
    fn default() -> Self {
        Self {
            p_crossover: 0.8,
            p_2crossover: 0.4,
            p_swap: 0.4,
            p_mutation: 0.2,
            initial_population: 300,
            select_f1: 300,
            select_f2: 200,
            epochs: 50,
            mutation_range: [-0.7, 0.7],
            mutation_halfwidth: 3,
            swap_len_range: [5, 15],
            dedup_threshold: 0.2,
            rng_seed: 0,
        }
    }
}

impl GaConfig {
    /// Population sizes used in the original large-scale runs.
    pub fn paper_scale() -> Self {
        Self { initial_population: 3000, select_f1: 3000, select_f2: 2000, ..Self::default() }
    }

    pub fn check(&self) -> Result<()> {
        for (name, p) in [
            ("p_crossover", self.p_crossover),
            ("p_2crossover", self.p_2crossover),
            ("p_swap", self.p_swap),
            ("p_mutation", self.p_mutation),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("ga.{name} must lie in [0, 1], got {p}")));
            }
        }
        if self.select_f2 == 0 || self.select_f2 > self.select_f1 {
            return Err(Error::Config(format!(
                "ga.select_f2 ({}) must be in 1..=select_f1 ({})",
                self.select_f2, self.select_f1
            )));
        }
        if self.initial_population == 0 {
            return Err(Error::Config("ga.initial_population must be positive".into()));
        }
        if !(self.dedup_threshold > 0.0) {
            return Err(Error::Config("ga.dedup_threshold must be positive".into()));
        }
        let [lo, hi] = self.mutation_range;
        if !(lo <= hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::Config("ga.mutation_range must be an ordered finite interval".into()));
        }
        let [smin, smax] = self.swap_len_range;
        if smin == 0 || smin > smax {
            return Err(Error::Config("ga.swap_len_range must be an ordered positive interval".into()));
        }
        Ok(())
    }
}

/// Source of the F1 fitness: summed per-point OOB probability.
pub trait Scorer {
    fn f1(&self, genomes: &[RoadGenome]) -> Result<Vec<f64>>;
}

fn check_lengths(a: &RoadGenome, b: &RoadGenome) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch { expected: a.len(), actual: b.len() });
    }
    Ok(())
}

fn rebuild(template: &RoadGenome, curvatures: Vec<f64>) -> RoadGenome {
    template.with_curvatures(curvatures).expect("operators keep length and finiteness")
}

/// One-point crossover: the tails from index `k` on are exchanged.
pub fn crossover_at(a: &RoadGenome, b: &RoadGenome, k: usize) -> Result<(RoadGenome, RoadGenome)> {
    check_lengths(a, b)?;
    let (ca, cb) = (a.curvatures(), b.curvatures());
    let first = ca[..k].iter().chain(&cb[k..]).copied().collect();
    let second = cb[..k].iter().chain(&ca[k..]).copied().collect();
    Ok((rebuild(a, first), rebuild(a, second)))
}

pub fn crossover(a: &RoadGenome, b: &RoadGenome, rng: &mut impl Rng) -> Result<(RoadGenome, RoadGenome)> {
    check_lengths(a, b)?;
    let k = rng.random_range(1..a.len());
    crossover_at(a, b, k)
}

/// Two-point crossover: the middle windows `[k1, k2)` are exchanged.
pub fn k_crossover_at(a: &RoadGenome, b: &RoadGenome, k1: usize, k2: usize) -> Result<(RoadGenome, RoadGenome)> {
    check_lengths(a, b)?;
    let (ca, cb) = (a.curvatures(), b.curvatures());
    let mut first = ca.to_vec();
    let mut second = cb.to_vec();
    first[k1..k2].copy_from_slice(&cb[k1..k2]);
    second[k1..k2].copy_from_slice(&ca[k1..k2]);
    Ok((rebuild(a, first), rebuild(a, second)))
}

pub fn k_crossover(a: &RoadGenome, b: &RoadGenome, rng: &mut impl Rng) -> Result<(RoadGenome, RoadGenome)> {
    check_lengths(a, b)?;
    if a.len() < 3 {
        return crossover(a, b, rng);
    }
    let picked = rand::seq::index::sample(rng, a.len() - 1, 2);
    let (x, y) = (picked.index(0) + 1, picked.index(1) + 1);
    k_crossover_at(a, b, x.min(y), x.max(y))
}

/// Interchanges the windows `[i, i+len)` and `[j, j+len)`.
pub fn swap_at(g: &RoadGenome, i: usize, j: usize, len: usize) -> Result<RoadGenome> {
    let (i, j) = (i.min(j), i.max(j));
    if j < i + len || j + len > g.len() {
        return Err(Error::InvalidGenome(format!(
            "swap windows at {i} and {j} of length {len} overlap or exceed {}",
            g.len()
        )));
    }
    let mut c = g.curvatures().to_vec();
    let (head, tail) = c.split_at_mut(j);
    head[i..i + len].swap_with_slice(&mut tail[..len]);
    Ok(rebuild(g, c))
}

pub fn swap(g: &RoadGenome, len_range: [usize; 2], rng: &mut impl Rng) -> Result<RoadGenome> {
    let [lo, hi] = len_range;
    if g.len() < 2 * hi {
        return Err(Error::InvalidGenome(format!(
            "swap needs at least {} points, genome has {}",
            2 * hi,
            g.len()
        )));
    }
    let len = rng.random_range(lo..=hi);
    loop {
        let i = rng.random_range(0..=g.len() - len);
        let j = rng.random_range(0..=g.len() - len);
        if i.abs_diff(j) >= len {
            return swap_at(g, i, j, len);
        }
    }
}

/// Sets every curvature within `halfwidth` of `index` to `value`.
pub fn mutate_at(g: &RoadGenome, index: usize, value: f64, halfwidth: usize) -> RoadGenome {
    let mut c = g.curvatures().to_vec();
    let lo = index.saturating_sub(halfwidth);
    let hi = (index + halfwidth).min(c.len() - 1);
    c[lo..=hi].fill(value);
    rebuild(g, c)
}

pub fn mutate(g: &RoadGenome, range: [f64; 2], halfwidth: usize, rng: &mut impl Rng) -> RoadGenome {
    let index = rng.random_range(0..g.len());
    let value = if range[0] < range[1] { rng.random_range(range[0]..=range[1]) } else { range[0] };
    mutate_at(g, index, value, halfwidth)
}

/// Random valid roads: a straight road bent by a few mild mutations, smoothed,
/// and resampled until it validates.
pub fn init_random(n: usize, roads: &RoadConfig, rng: &mut impl Rng) -> Result<Vec<RoadGenome>> {
    if n == 0 {
        return Err(Error::Config("random population size must be at least 1".into()));
    }
    let straight = RoadGenome::straight(roads.block_size, roads.step)?;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let mut g = straight.clone();
        for _ in 0..rng.random_range(1..=INIT_MAX_MUTATIONS) {
            g = mutate(&g, INIT_MUTATION_RANGE, GaConfig::default().mutation_halfwidth, rng);
        }
        let g = roads.smooth(&g);
        if roads.is_valid(&g) {
            out.push(g);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub genome: RoadGenome,
    pub f1: f64,
    pub f2: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Population {
    pub members: Vec<Member>,
    pub epoch: usize,
}

impl Population {
    pub fn genomes(&self) -> Vec<RoadGenome> {
        self.members.iter().map(|m| m.genome.clone()).collect()
    }

    /// Mean per-point predicted OOB probability.
    pub fn mean_oob_probability(&self) -> f64 {
        if self.members.is_empty() {
            return 0.0;
        }
        self.members
            .iter()
            .map(|m| m.f1 / m.genome.len() as f64)
            .sum::<f64>()
            / self.members.len() as f64
    }

    pub fn median_f2(&self) -> f64 {
        median(self.members.iter().map(|m| m.f2).collect()).unwrap_or(0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_oob_probability: f64,
    pub median_pairwise_distance: f64,
    pub pool_size: usize,
    pub n_invalid_offspring_dropped: usize,
}

pub(crate) fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Indices into `members` allowed to reproduce: scanned by descending F1, a
/// member is skipped when it lies closer than `threshold` to one already kept.
pub fn eligible_parents(members: &[Member], threshold: f64) -> Vec<usize> {
    let mut kept: Vec<usize> = Vec::new();
    for i in by_descending(members, |m| m.f1) {
        let c = members[i].genome.curvatures();
        if kept
            .iter()
            .all(|&k| curvature_distance(c, members[k].genome.curvatures()) >= threshold)
        {
            kept.push(i);
        }
    }
    kept
}

/// Stable ordering by descending key; ties keep input order.
fn by_descending(members: &[Member], key: impl Fn(&Member) -> f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..members.len()).collect();
    order.sort_by(|&a, &b| key(&members[b]).total_cmp(&key(&members[a])).then(a.cmp(&b)));
    order
}

/// Fills in F2 for every member relative to the others.
fn assign_f2(members: &mut [Member]) -> Result<()> {
    if members.len() < 2 {
        for m in members.iter_mut() {
            m.f2 = 0.0;
        }
        return Ok(());
    }
    let genomes: Vec<RoadGenome> = members.iter().map(|m| m.genome.clone()).collect();
    for (m, g) in members.iter_mut().zip(&genomes) {
        m.f2 = diversity_f2(g, &genomes)?;
    }
    Ok(())
}

fn breed(members: &[Member], eligible: &[usize], config: &GaConfig, rng: &mut ChaCha8Rng) -> Result<Vec<RoadGenome>> {
    let mut offspring = Vec::new();
    let pick_partner = |rng: &mut ChaCha8Rng, first: usize| -> usize {
        if eligible.len() < 2 {
            return first;
        }
        loop {
            let p = eligible[rng.random_range(0..eligible.len())];
            if p != first {
                return p;
            }
        }
    };
    for &i in eligible {
        if rng.random_bool(config.p_crossover) {
            let j = pick_partner(rng, i);
            let (a, b) = crossover(&members[i].genome, &members[j].genome, rng)?;
            offspring.extend([a, b]);
        }
    }
    for &i in eligible {
        if rng.random_bool(config.p_2crossover) {
            let j = pick_partner(rng, i);
            let (a, b) = k_crossover(&members[i].genome, &members[j].genome, rng)?;
            offspring.extend([a, b]);
        }
    }
    for &i in eligible {
        if rng.random_bool(config.p_swap) {
            offspring.push(swap(&members[i].genome, config.swap_len_range, rng)?);
        }
    }
    for &i in eligible {
        if rng.random_bool(config.p_mutation) {
            offspring.push(mutate(&members[i].genome, config.mutation_range, config.mutation_halfwidth, rng));
        }
    }
    Ok(offspring)
}

/// One generation: eligibility, breeding, smoothing, validity filter, F1
/// scoring, (μ+λ) selection by F1 then F2.
pub fn evolve_epoch(
    pop: &Population,
    scorer: &impl Scorer,
    config: &GaConfig,
    roads: &RoadConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Population, EpochStats)> {
    if pop.members.is_empty() {
        return Err(Error::Empty("population"));
    }
    let eligible = eligible_parents(&pop.members, config.dedup_threshold);
    if eligible.is_empty() {
        return Err(Error::NoEligibleParents(pop.members.len()));
    }
    let raw = breed(&pop.members, &eligible, config, rng)?;
    let mut fresh = Vec::with_capacity(raw.len());
    let mut dropped = 0;
    for child in &raw {
        let smoothed = roads.smooth(child);
        if roads.is_valid(&smoothed) {
            fresh.push(smoothed);
        } else {
            dropped += 1;
        }
    }
    let scores = scorer.f1(&fresh)?;

    let mut pool: Vec<Member> = pop.members.clone();
    pool.extend(fresh.into_iter().zip(scores).map(|(genome, f1)| Member { genome, f1, f2: 0.0 }));
    let pool_size = pool.len();

    let mut top: Vec<Member> = by_descending(&pool, |m| m.f1)
        .into_iter()
        .take(config.select_f1)
        .map(|i| pool[i].clone())
        .collect();
    assign_f2(&mut top)?;
    let members: Vec<Member> = by_descending(&top, |m| m.f2)
        .into_iter()
        .take(config.select_f2)
        .map(|i| top[i].clone())
        .collect();

    let next = Population { members, epoch: pop.epoch + 1 };
    let stats = EpochStats {
        epoch: next.epoch,
        mean_oob_probability: next.mean_oob_probability(),
        median_pairwise_distance: next.median_f2(),
        pool_size,
        n_invalid_offspring_dropped: dropped,
    };
    Ok((next, stats))
}

/// Scores a set of genomes into a population with F1 and F2 filled in.
pub fn score_population(genomes: Vec<RoadGenome>, scorer: &impl Scorer, epoch: usize) -> Result<Population> {
    let scores = scorer.f1(&genomes)?;
    let mut members: Vec<Member> = genomes
        .into_iter()
        .zip(scores)
        .map(|(genome, f1)| Member { genome, f1, f2: 0.0 })
        .collect();
    assign_f2(&mut members)?;
    Ok(Population { members, epoch })
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub initial: Population,
    pub last: Population,
    pub metrics: Vec<EpochStats>,
}

/// Random initial population followed by `config.epochs` generations.
pub fn run(config: &GaConfig, roads: &RoadConfig, scorer: &impl Scorer) -> Result<RunOutput> {
    run_with(config, roads, scorer, |_, _| {})
}

/// As [`run`], calling `on_epoch` after every generation.
pub fn run_with(
    config: &GaConfig,
    roads: &RoadConfig,
    scorer: &impl Scorer,
    mut on_epoch: impl FnMut(&Population, &EpochStats),
) -> Result<RunOutput> {
    use rand::SeedableRng;
    config.check()?;
    roads.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let initial = score_population(init_random(config.initial_population, roads, &mut rng)?, scorer, 0)?;
    let mut current = initial.clone();
    let mut metrics = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let (next, stats) = evolve_epoch(&current, scorer, config, roads, &mut rng)?;
        on_epoch(&next, &stats);
        metrics.push(stats);
        current = next;
    }
    Ok(RunOutput { initial, last: current, metrics })
}
