//! Budgeted evaluation of executed tests and novelty against the training set.
//!
//! A budget sample replays a random campaign: results are drawn uniformly
//! with replacement and executed until the next draw no longer fits in the
//! remaining simulated-time budget.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::median;
use crate::geometry::{genome_distance, RoadGenome};
use crate::simulator::Outcome;

fn valid_by_default() -> bool {
    true
}

/// One executed test. Parses the per-test result files directly; fields other
/// than these are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub id: String,
    pub test_outcome: Outcome,
    /// Simulated seconds.
    pub test_duration: f64,
    #[serde(default = "valid_by_default")]
    pub valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub n_executed: usize,
    pub n_invalid: usize,
    pub n_faults: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub min: usize,
    pub avg: f64,
    pub max: usize,
}

impl ColumnStats {
    fn of(values: impl Iterator<Item = usize> + Clone) -> Self {
        let n = values.clone().count();
        Self {
            min: values.clone().min().unwrap_or(0),
            avg: values.clone().sum::<usize>() as f64 / n.max(1) as f64,
            max: values.max().unwrap_or(0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSampleStats {
    pub budget_seconds: f64,
    pub samples: Vec<SampleCounts>,
    /// Simulated time consumed by each sample.
    pub sample_durations: Vec<f64>,
    pub executed: ColumnStats,
    pub invalid: ColumnStats,
    pub faults: ColumnStats,
}

impl BudgetSampleStats {
    /// Table with `# Executed`, `# Invalid` and `# Faults` columns and
    /// `Min.`/`Avg.`/`Max.` rows.
    pub fn table_csv(&self) -> String {
        let mut out = String::from("Statistic,# Executed,# Invalid,# Faults\n");
        let cols = [self.executed, self.invalid, self.faults];
        let _ = writeln!(out, "Min.,{},{},{}", cols[0].min, cols[1].min, cols[2].min);
        let _ = writeln!(out, "Avg.,{:.2},{:.2},{:.2}", cols[0].avg, cols[1].avg, cols[2].avg);
        let _ = writeln!(out, "Max.,{},{},{}", cols[0].max, cols[1].max, cols[2].max);
        out
    }
}

fn check_results(results: &[TestResult]) -> Result<()> {
    if results.is_empty() {
        return Err(Error::Empty("test results"));
    }
    for r in results.iter().filter(|r| r.valid) {
        if !(r.test_duration > 0.0 && r.test_duration.is_finite()) {
            return Err(Error::Config(format!("test {} has non-positive duration {}", r.id, r.test_duration)));
        }
    }
    if !results.iter().any(|r| r.valid) {
        return Err(Error::Empty("valid test results"));
    }
    Ok(())
}

/// Draws `n_samples` budgeted campaigns with replacement.
///
/// A draw is executed only if it fits entirely in the remaining budget; the
/// first draw that does not fit ends the sample. Invalid results are counted
/// but consume no time. Sample `k` uses stream `k` of a generator seeded with
/// `rng_seed`, so samples are independent of evaluation order.
pub fn budget_sample(results: &[TestResult], budget: f64, n_samples: usize, rng_seed: u64) -> Result<BudgetSampleStats> {
    check_results(results)?;
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::Config(format!("budget must be positive, got {budget}")));
    }
    if n_samples == 0 {
        return Err(Error::Config("analysis.n_samples must be positive".into()));
    }
    let mut samples = Vec::with_capacity(n_samples);
    let mut sample_durations = Vec::with_capacity(n_samples);
    for k in 0..n_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
        rng.set_stream(k as u64);
        let mut counts = SampleCounts { n_executed: 0, n_invalid: 0, n_faults: 0 };
        let mut used = 0.0;
        loop {
            let r = &results[rng.random_range(0..results.len())];
            if !r.valid {
                counts.n_invalid += 1;
                continue;
            }
            if used + r.test_duration > budget {
                break;
            }
            used += r.test_duration;
            counts.n_executed += 1;
            if r.test_outcome == Outcome::Fail {
                counts.n_faults += 1;
            }
        }
        samples.push(counts);
        sample_durations.push(used);
    }
    Ok(BudgetSampleStats {
        budget_seconds: budget,
        executed: ColumnStats::of(samples.iter().map(|s| s.n_executed)),
        invalid: ColumnStats::of(samples.iter().map(|s| s.n_invalid)),
        faults: ColumnStats::of(samples.iter().map(|s| s.n_faults)),
        samples,
        sample_durations,
    })
}

/// Fraction of valid results that failed.
pub fn fault_rate(results: &[TestResult]) -> Result<f64> {
    let valid: Vec<&TestResult> = results.iter().filter(|r| r.valid).collect();
    if valid.is_empty() {
        return Err(Error::Empty("valid test results"));
    }
    let faults = valid.iter().filter(|r| r.test_outcome == Outcome::Fail).count();
    Ok(faults as f64 / valid.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoveltyStats {
    pub mean_min_distance: f64,
    pub mean_median_distance: f64,
    pub n_above_threshold: usize,
    pub threshold: f64,
    pub n_generated: usize,
    pub n_training: usize,
}

impl NoveltyStats {
    pub fn summary(&self) -> String {
        format!(
            "mean minimal distance to the training set: {:.2}\n\
             average median distance to the training set: {:.2}\n\
             tests with a minimal distance above {}: {} of {}\n",
            self.mean_min_distance, self.mean_median_distance, self.threshold, self.n_above_threshold, self.n_generated
        )
    }
}

/// Distance of every generated road to the training roads: per road the
/// minimum and median, averaged over the generated set.
pub fn novelty_stats(generated: &[RoadGenome], training: &[RoadGenome], threshold: f64) -> Result<NoveltyStats> {
    if generated.is_empty() {
        return Err(Error::Empty("generated roads"));
    }
    if training.is_empty() {
        return Err(Error::Empty("training roads"));
    }
    let mut sum_min = 0.0;
    let mut sum_median = 0.0;
    let mut above = 0;
    for g in generated {
        let distances = training.iter().map(|t| genome_distance(g, t)).collect::<Result<Vec<f64>>>()?;
        let min = distances.iter().copied().fold(f64::INFINITY, f64::min);
        sum_min += min;
        sum_median += median(distances).expect("training set is nonempty");
        if min > threshold {
            above += 1;
        }
    }
    let n = generated.len() as f64;
    Ok(NoveltyStats {
        mean_min_distance: sum_min / n,
        mean_median_distance: sum_median / n,
        n_above_threshold: above,
        threshold,
        n_generated: generated.len(),
        n_training: training.len(),
    })
}
