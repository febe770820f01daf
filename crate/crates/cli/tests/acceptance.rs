//! End-to-end acceptance run. Prints one line per criterion and exits nonzero
//! if any fails. The pipeline criteria share a single default-config run.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use roadsearch::analysis::{budget_sample, novelty_stats, NoveltyStats, TestResult};
use roadsearch::discriminator::{gradient_check, split_dataset, Checkpoint, DiscriminatorConfig, DiscriminatorModel};
use roadsearch::evolution::init_random;
use roadsearch::formats::{read_dataset, read_json, read_population, ResultRecord, TestCase};
use roadsearch::geometry::{reconstruct, self_intersects, validate, Pose, RoadGenome};
use roadsearch::simulator::{simulate, Outcome};
use roadsearch_cli::RunConfig;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

struct Report {
    failures: usize,
}

impl Report {
    fn check(&mut self, n: usize, name: &str, limit: Duration, f: impl FnOnce() -> Verdict) {
        let start = Instant::now();
        let v = f();
        self.record(n, name, limit, start.elapsed(), v);
    }

    fn record(&mut self, n: usize, name: &str, limit: Duration, elapsed: Duration, v: Verdict) {
        let in_time = elapsed <= limit;
        let pass = v.pass && in_time;
        self.failures += (!pass) as usize;
        let time = format!("{:.1} s of {} s", elapsed.as_secs_f64(), limit.as_secs());
        let late = if in_time { "" } else { ", over time" };
        println!("criterion {n:>2} {name:<36} {}  ({}; {time}{late})", if pass { "PASS" } else { "FAIL" }, v.detail);
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    cross(a, b, p) == 0.0
        && p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

fn brute_force_intersects(points: &[[f64; 2]]) -> bool {
    let n = points.len() - 1;
    for i in 0..n {
        for j in i + 1..n {
            let (a, b, c, d) = (points[i], points[i + 1], points[j], points[j + 1]);
            if j == i + 1 {
                if on_segment(d, a, b) || on_segment(a, c, d) {
                    return true;
                }
                continue;
            }
            let proper = cross(c, d, a) * cross(c, d, b) < 0.0 && cross(a, b, c) * cross(a, b, d) < 0.0;
            if proper || on_segment(a, c, d) || on_segment(b, c, d) || on_segment(c, a, b) || on_segment(d, a, b) {
                return true;
            }
        }
    }
    false
}

fn genome(c: Vec<f64>) -> RoadGenome {
    RoadGenome::from_curvatures(c, 1.0).unwrap()
}

fn distance(a: &RoadGenome, b: &RoadGenome) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a.curvatures()[i] - b.curvatures()[i]).powi(2);
    }
    s.sqrt()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn geometry_exactness() -> Verdict {
    let mut worst = 0.0f64;
    for c in [0.1, -0.1, 0.05, -0.013, 0.002] {
        let road = reconstruct(&genome(vec![c; 50]), Pose::new(1.0, 2.0, 0.3));
        let start = road.poses[0];
        let [nx, ny] = start.normal();
        let (cx, cy) = (start.x + nx / c, start.y + ny / c);
        for p in &road.poses {
            worst = worst.max(((p.x - cx).hypot(p.y - cy) - 1.0 / c.abs()).abs());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let (mut agree, mut crossing) = (0, 0);
    for _ in 0..1000 {
        let drift = rng.random_range(-0.25..0.25);
        let amplitude = rng.random_range(0.02..0.4);
        let g = genome((0..50).map(|_| drift + rng.random_range(-amplitude..amplitude)).collect());
        let points = reconstruct(&g, Pose::default()).points();
        let expected = brute_force_intersects(&points);
        agree += (self_intersects(&points) == expected) as usize;
        crossing += expected as usize;
    }
    verdict(
        worst < 1e-9 && agree == 1000,
        format!("circle error {worst:.1e}, {agree}/1000 agree with brute force, {crossing} self-intersecting"),
    )
}

fn gradient_correctness() -> Verdict {
    match gradient_check(0) {
        Ok(g) => verdict(
            g.max_relative_error < 1e-4,
            format!("max relative error {:.2e} over {} parameters", g.max_relative_error, g.parameters),
        ),
        Err(e) => verdict(false, e.to_string()),
    }
}

fn causality() -> Verdict {
    let model = DiscriminatorModel::random(DiscriminatorConfig::desk(), 3, 0.2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut broken = 0;
    for _ in 0..100 {
        let base = genome((0..50).map(|_| rng.random_range(-0.1..0.1)).collect());
        let reference = model.forward(&base).unwrap().p;
        for i in 0..50 {
            let mut c = base.curvatures().to_vec();
            let mut s = base.arc_lengths().to_vec();
            for j in i + 1..50 {
                c[j] += rng.random_range(-0.5..0.5);
                s[j] += (j - i) as f64;
            }
            let p = model.forward(&RoadGenome::new(c, s).unwrap()).unwrap().p;
            if p[..=i].iter().zip(&reference[..=i]).any(|(a, b)| a.to_bits() != b.to_bits()) {
                broken += 1;
            }
        }
    }
    verdict(broken == 0, format!("{broken} of 5000 prefixes changed"))
}

fn cli(cfg_path: &Path, args: &[&str]) -> Result<(), String> {
    let mut full = vec!["roadsearch", "--quiet", "--config", cfg_path.to_str().unwrap()];
    full.extend_from_slice(args);
    match roadsearch_cli::run(full.clone()) {
        0 => Ok(()),
        code => Err(format!("`{}` exited with {code}", full[3..].join(" "))),
    }
}

/// Per-point rates at p >= 0.5, from the stored model's own forward pass.
fn rates(model: &DiscriminatorModel, roads: &[roadsearch::simulator::LabeledRoad]) -> (f64, f64) {
    let (mut tp, mut pos, mut tn, mut neg) = (0, 0, 0, 0);
    for road in roads {
        let p = model.forward(&road.genome).unwrap().p;
        for (pi, &y) in p.iter().zip(&road.labels) {
            if y {
                pos += 1;
                tp += (*pi >= 0.5) as usize;
            } else {
                neg += 1;
                tn += (*pi < 0.5) as usize;
            }
        }
    }
    (tp as f64 / pos as f64, tn as f64 / neg as f64)
}

fn discriminator_learns(cfg: &RunConfig, cfg_path: &Path) -> Verdict {
    if let Err(e) = cli(cfg_path, &["seed"]).and_then(|_| cli(cfg_path, &["train"])) {
        return verdict(false, e);
    }
    let data = read_dataset(&cfg.dataset_path()).unwrap();
    let (train, val) = split_dataset(&data, cfg.seed_data.val_fraction, cfg.train_seed()).unwrap();
    let checkpoint = Checkpoint::load(&cfg.checkpoint_path()).unwrap();
    let (sens, spec) = rates(&checkpoint.to_model().unwrap(), &val);
    let best = checkpoint.best_epoch.unwrap_or_default();
    let recorded = &checkpoint.metrics[best];
    verdict(
        data.len() == 2000 && spec >= 0.90 && sens >= 0.40,
        format!(
            "{} train / {} val roads, best epoch {}: sensitivity {sens:.3}, specificity {spec:.3} (recorded {:.3} / {:.3})",
            train.len(),
            val.len(),
            best,
            recorded.sensitivity,
            recorded.specificity
        ),
    )
}

fn read_all<T: serde::de::DeserializeOwned>(dir: &Path) -> Vec<T> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.retain(|p| p.extension().is_some_and(|e| e == "json"));
    files.sort();
    files.iter().map(|p| read_json(p).unwrap()).collect()
}

fn no_invalid_tests(cfg: &RunConfig) -> Verdict {
    let cases: Vec<TestCase> = read_all(&cfg.tests_dir());
    let invalid = cases
        .iter()
        .filter(|case| {
            let g = case.genome().unwrap();
            !validate(&reconstruct(&g, Pose::default()), &g, cfg.geometry.map_size).valid
        })
        .count();
    verdict(!cases.is_empty() && invalid == 0, format!("{invalid} of {} emitted tests invalid", cases.len()))
}

fn fitness_climbs(cfg: &RunConfig) -> Verdict {
    let snapshots = cfg.workdir_file("populations");
    let initial = read_population(&snapshots.join("epoch_000.jsonl")).unwrap();
    let last = read_population(&cfg.population_path()).unwrap();
    let mean = |p: &roadsearch::evolution::Population| {
        p.members.iter().map(|m| m.f1 / m.genome.len() as f64).sum::<f64>() / p.members.len() as f64
    };
    let (before, after) = (mean(&initial), mean(&last));
    verdict(
        after >= 2.0 * before && cfg.ga.epochs == 50,
        format!(
            "mean OOB probability {before:.4} -> {after:.4} ({:.1}x) over {} epochs, population {} -> {}",
            after / before,
            cfg.ga.epochs,
            initial.members.len(),
            last.members.len()
        ),
    )
}

fn diversity_floor(cfg: &RunConfig) -> Verdict {
    let last = read_population(&cfg.population_path()).unwrap();
    let genomes = last.genomes();
    let mut pairwise = Vec::new();
    for i in 0..genomes.len() {
        for j in i + 1..genomes.len() {
            pairwise.push(distance(&genomes[i], &genomes[j]));
        }
    }
    let all = median(pairwise);
    let f2 = median(last.members.iter().map(|m| m.f2).collect());
    verdict(
        all >= 0.2 && f2 >= 0.2,
        format!("median pairwise distance {all:.3}, median F2 {f2:.3}"),
    )
}

fn fault_revealing(cfg: &RunConfig, cfg_path: &Path) -> Verdict {
    if let Err(e) = cli(cfg_path, &["execute"]) {
        return verdict(false, e);
    }
    let results: Vec<ResultRecord> = read_all(&cfg.results_dir());
    let generated = results.iter().filter(|r| r.test_outcome == Outcome::Fail).count() as f64 / results.len() as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.ga_seed());
    let random = init_random(results.len(), &cfg.geometry, &mut rng).unwrap();
    let failing = random
        .iter()
        .filter(|g| simulate(&cfg.geometry.road(g), &cfg.simulator).unwrap().outcome == Outcome::Fail)
        .count();
    let baseline = failing as f64 / random.len() as f64;
    verdict(
        generated >= 2.0 * baseline,
        format!(
            "generated {:.1}% of {} fail, random valid {:.1}% of {} fail",
            100.0 * generated,
            results.len(),
            100.0 * baseline,
            random.len()
        ),
    )
}

fn budget_sampler() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(1174);
    let results: Vec<TestResult> = (0..1174)
        .map(|i| TestResult {
            id: format!("road_{i:04}"),
            test_outcome: if rng.random_bool(0.4) { Outcome::Fail } else { Outcome::Pass },
            test_duration: rng.random_range(3.0..25.0),
            valid: i % 50 != 7,
        })
        .collect();
    let a = budget_sample(&results, 7200.0, 100, 7).unwrap();
    let b = budget_sample(&results, 7200.0, 100, 7).unwrap();
    let ordered = [&a.executed, &a.invalid, &a.faults]
        .iter()
        .all(|c| c.min as f64 <= c.avg && c.avg <= c.max as f64);
    let within = a.sample_durations.iter().all(|&d| d <= 7200.0);
    let identical = serde_json::to_string(&a).unwrap() == serde_json::to_string(&b).unwrap() && a.table_csv() == b.table_csv();
    verdict(
        ordered && within && identical && a.samples.len() == 100,
        format!(
            "executed {}/{:.2}/{}, longest sample {:.1} s, re-run identical: {identical}",
            a.executed.min,
            a.executed.avg,
            a.executed.max,
            a.sample_durations.iter().copied().fold(0.0, f64::max)
        ),
    )
}

fn novelty_fixture() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2050);
    let mut make = |n: usize, scale: f64| -> Vec<RoadGenome> {
        (0..n).map(|_| genome((0..50).map(|_| rng.random_range(-scale..scale)).collect())).collect()
    };
    let training = make(50, 0.05);
    let generated = make(20, 0.06);
    let got = novelty_stats(&generated, &training, 0.2).unwrap();
    let mins: Vec<f64> = generated
        .iter()
        .map(|g| training.iter().map(|t| distance(g, t)).fold(f64::INFINITY, f64::min))
        .collect();
    let medians: Vec<f64> = generated.iter().map(|g| median(training.iter().map(|t| distance(g, t)).collect())).collect();
    let mean_min = mins.iter().sum::<f64>() / 20.0;
    let mean_median = medians.iter().sum::<f64>() / 20.0;
    let above = mins.iter().filter(|&&m| m > 0.2).count();
    let exact = (got.mean_min_distance - mean_min).abs() <= 1e-12
        && (got.mean_median_distance - mean_median).abs() <= 1e-12
        && got.n_above_threshold == above;

    let reference = NoveltyStats {
        mean_min_distance: 0.15,
        mean_median_distance: 0.6,
        n_above_threshold: 300,
        threshold: 0.2,
        n_generated: 300,
        n_training: 2000,
    }
    .summary();
    let format_ok = reference.contains("mean minimal distance to the training set: 0.15")
        && reference.contains("average median distance to the training set: 0.60")
        && reference.contains("minimal distance above 0.2: 300 of 300");
    verdict(
        exact && format_ok,
        format!("mean-min {mean_min:.4}, mean-median {mean_median:.4}, {above} above 0.2; oracle exact: {exact}"),
    )
}

fn pipeline_novelty_report(cfg: &RunConfig, cfg_path: &Path) -> Verdict {
    if let Err(e) = cli(cfg_path, &["analyze"]) {
        return verdict(false, e);
    }
    let text = fs::read_to_string(cfg.workdir_file("analysis/novelty.txt")).unwrap_or_default();
    let lines = ["mean minimal distance", "average median distance", "minimal distance above 0.2"];
    let ok = lines.iter().all(|l| text.contains(l));
    verdict(ok, text.lines().map(str::trim).collect::<Vec<_>>().join("; "))
}

fn main() {
    let mut report = Report { failures: 0 };
    report.check(1, "geometry exactness", secs(10), geometry_exactness);
    report.check(2, "gradient correctness", secs(30), gradient_correctness);
    report.check(3, "causality", secs(30), causality);

    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.paths.workdir = dir.path().join("run");
    let cfg_path = dir.path().join("roadsearch.toml");
    fs::write(&cfg_path, cfg.to_toml()).unwrap();
    cfg = RunConfig::load(&cfg_path).unwrap();

    report.check(4, "discriminator learns the desk oracle", secs(15 * 60), || discriminator_learns(&cfg, &cfg_path));
    let start = Instant::now();
    let generated = cli(&cfg_path, &["generate"]);
    let generate_time = start.elapsed();
    match &generated {
        Ok(()) => {
            report.check(5, "zero invalid emitted tests", secs(1), || no_invalid_tests(&cfg));
            let v = fitness_climbs(&cfg);
            report.record(6, "fitness climbs", secs(10 * 60), generate_time, v);
            report.check(7, "diversity floor", secs(1), || diversity_floor(&cfg));
            report.check(8, "fault-revealing power", secs(5 * 60), || fault_revealing(&cfg, &cfg_path));
        }
        Err(e) => {
            for (n, name) in [(5, "zero invalid emitted tests"), (6, "fitness climbs"), (7, "diversity floor"), (8, "fault-revealing power")] {
                report.record(n, name, Duration::ZERO, generate_time, verdict(false, e.clone()));
            }
        }
    }
    report.check(9, "budget sampler", secs(5), budget_sampler);
    report.check(10, "novelty statistics", secs(5), || {
        let fixture = novelty_fixture();
        let pipeline = pipeline_novelty_report(&cfg, &cfg_path);
        verdict(fixture.pass && pipeline.pass, format!("{}; pipeline: {}", fixture.detail, pipeline.detail))
    });

    if report.failures > 0 {
        println!("{} acceptance criteria failed", report.failures);
        std::process::exit(1);
    }
    println!("all acceptance criteria passed");
}
