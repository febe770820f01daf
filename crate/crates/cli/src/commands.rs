use std::fs;
use std::path::{Path, PathBuf};

use roadsearch::analysis::{budget_sample, fault_rate, novelty_stats, BudgetSampleStats, NoveltyStats, TestResult};
use roadsearch::discriminator::{split_dataset, train_with, Checkpoint, DiscriminatorModel, EpochMetrics};
use roadsearch::evolution::run_with;
use roadsearch::formats::{
    read_dataset, read_json, run_metrics_csv, training_metrics_csv, write_dataset, write_json, write_population,
    ResultRecord, TestCase,
};
use roadsearch::geometry::{reconstruct_with_lane_width, validate, Pose, RoadGenome};
use roadsearch::plot::render_svg;
use roadsearch::simulator::{generate_seed_pool, simulate, Outcome};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::CliError;

/// Progress sink for long-running commands.
pub type Log<'a> = &'a mut dyn FnMut(&str);

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(CliError::io(format!("cannot create {}", parent.display())))?;
    }
    fs::write(path, text).map_err(CliError::io(format!("cannot write {}", path.display())))
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent() {
        Some(parent) => fs::create_dir_all(parent).map_err(CliError::io(format!("cannot create {}", parent.display()))),
        None => Ok(()),
    }
}

/// `*.json` files of a directory in name order.
fn json_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = fs::read_dir(dir).map_err(CliError::io(format!("cannot read {}", dir.display())))?;
    let mut files = Vec::new();
    for entry in entries {
        let path = entry.map_err(CliError::io(format!("cannot read {}", dir.display())))?.path();
        if path.extension().is_some_and(|e| e == "json") && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Creates `dir` and removes the `*.json` files a previous run left there.
fn fresh_json_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(CliError::io(format!("cannot create {}", dir.display())))?;
    for stale in json_files(dir)? {
        fs::remove_file(&stale).map_err(CliError::io(format!("cannot remove {}", stale.display())))?;
    }
    Ok(())
}

fn require(path: &Path, what: &str, hint: &str) -> Result<(), CliError> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("{what} {} not found; {hint}", path.display())))
    }
}

pub fn cmd_init_config(cfg: &RunConfig, output: Option<&Path>) -> Result<String, CliError> {
    let text = cfg.to_toml();
    if let Some(path) = output {
        write_text(path, &text)?;
    }
    Ok(text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedSummary {
    pub n_roads: usize,
    pub n_valid: usize,
    pub n_positive_roads: usize,
    pub n_positive_points: usize,
    pub positive_road_fraction: f64,
}

pub fn cmd_seed(cfg: &RunConfig, log: Log) -> Result<SeedSummary, CliError> {
    let pool = generate_seed_pool(cfg.seed_data.n_roads, cfg.pool_seed(), &cfg.geometry, &cfg.simulator)?;
    let n_valid = pool.iter().filter(|l| cfg.geometry.is_valid(&l.genome)).count();
    let n_positive_roads = pool.iter().filter(|l| l.positives() > 0).count();
    let summary = SeedSummary {
        n_roads: pool.len(),
        n_valid,
        n_positive_roads,
        n_positive_points: pool.iter().map(|l| l.positives()).sum(),
        positive_road_fraction: n_positive_roads as f64 / pool.len() as f64,
    };
    let path = cfg.dataset_path();
    ensure_parent(&path)?;
    write_dataset(&path, &pool)?;
    write_json(&cfg.workdir_file("dataset_summary.json"), &summary)?;
    log(&format!(
        "wrote {} roads to {} ({} with an OOB label, {} valid)",
        summary.n_roads,
        path.display(),
        summary.n_positive_roads,
        summary.n_valid
    ));
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSummary {
    pub n_train: usize,
    pub n_val: usize,
    pub pos_weight: f64,
    pub best_epoch: usize,
    pub best: EpochMetrics,
}

pub fn cmd_train(cfg: &RunConfig, log: Log) -> Result<TrainSummary, CliError> {
    let dataset = cfg.dataset_path();
    require(&dataset, "dataset", "run `seed` first")?;
    let data = read_dataset(&dataset)?;
    let (train_set, val_set) = split_dataset(&data, cfg.seed_data.val_fraction, cfg.train_seed())?;
    let mut model = DiscriminatorModel::init(cfg.discriminator.clone(), cfg.train_seed())?;
    log(&format!(
        "training {} parameters on {} roads, validating on {}",
        model.parameter_count(),
        train_set.len(),
        val_set.len()
    ));
    let report = train_with(&mut model, &train_set, &val_set, |m| {
        log(&format!(
            "epoch {:>4}  train loss {:.4}  val loss {:.4}  sensitivity {:.3}  specificity {:.3}",
            m.epoch, m.train_loss, m.val_loss, m.sensitivity, m.specificity
        ))
    })?;
    let checkpoint = Checkpoint::from_model(&report.best, report.history.clone(), Some(report.pos_weight), Some(report.best_epoch));
    let path = cfg.checkpoint_path();
    ensure_parent(&path)?;
    checkpoint.save(&path)?;
    write_text(&cfg.workdir_file("training_metrics.csv"), &training_metrics_csv(&report.history))?;
    let best = report.best_metrics().clone();
    log(&format!(
        "best epoch {}: sensitivity {:.3}, specificity {:.3}; checkpoint {}",
        report.best_epoch,
        best.sensitivity,
        best.specificity,
        path.display()
    ));
    Ok(TrainSummary { n_train: train_set.len(), n_val: val_set.len(), pos_weight: report.pos_weight, best_epoch: report.best_epoch, best })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerateSummary {
    pub initial_mean_oob_probability: f64,
    pub final_mean_oob_probability: f64,
    pub final_median_distance: f64,
    pub n_tests: usize,
}

pub fn test_id(i: usize) -> String {
    format!("road_{i:04}")
}

pub fn cmd_generate(cfg: &RunConfig, log: Log) -> Result<GenerateSummary, CliError> {
    let checkpoint = cfg.checkpoint_path();
    require(&checkpoint, "checkpoint", "run `train` first")?;
    let model = Checkpoint::load(&checkpoint)?.to_model()?;
    if model.config.block_size != cfg.geometry.block_size {
        return Err(CliError::Config(format!(
            "checkpoint block size {} does not match geometry.block_size {}",
            model.config.block_size, cfg.geometry.block_size
        )));
    }
    let snapshots = cfg.workdir_file("populations");
    fs::create_dir_all(&snapshots).map_err(CliError::io(format!("cannot create {}", snapshots.display())))?;
    let mut snapshot_error = None;
    let out = run_with(&cfg.ga, &cfg.geometry, &model, |pop, stats| {
        if snapshot_error.is_none() {
            snapshot_error = write_population(&snapshots.join(format!("epoch_{:03}.jsonl", pop.epoch)), pop).err();
        }
        log(&format!(
            "epoch {:>3}  mean OOB probability {:.4}  median distance {:.3}  pool {}  dropped {}",
            stats.epoch, stats.mean_oob_probability, stats.median_pairwise_distance, stats.pool_size, stats.n_invalid_offspring_dropped
        ));
    })?;
    if let Some(e) = snapshot_error {
        return Err(e.into());
    }
    write_population(&snapshots.join("epoch_000.jsonl"), &out.initial)?;
    let population = cfg.population_path();
    ensure_parent(&population)?;
    write_population(&population, &out.last)?;
    write_text(&cfg.workdir_file("run_metrics.csv"), &run_metrics_csv(&out.metrics))?;

    let tests = cfg.tests_dir();
    fresh_json_dir(&tests)?;
    for (i, member) in out.last.members.iter().enumerate() {
        let road = cfg.geometry.road(&member.genome);
        if !validate(&road, &member.genome, cfg.geometry.map_size).valid {
            return Err(CliError::Runtime(format!("final population member {i} failed validation")));
        }
        write_json(&tests.join(format!("{}.json", test_id(i))), &TestCase::new(test_id(i), &member.genome, &road))?;
    }
    let summary = GenerateSummary {
        initial_mean_oob_probability: out.initial.mean_oob_probability(),
        final_mean_oob_probability: out.last.mean_oob_probability(),
        final_median_distance: out.last.median_f2(),
        n_tests: out.last.members.len(),
    };
    log(&format!(
        "mean OOB probability {:.4} -> {:.4}; wrote {} test cases to {}",
        summary.initial_mean_oob_probability,
        summary.final_mean_oob_probability,
        summary.n_tests,
        tests.display()
    ));
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExecuteSummary {
    pub n_tests: usize,
    pub n_executed: usize,
    pub n_failed: usize,
    pub n_invalid: usize,
    /// Test files that could not be executed, with the reason.
    pub malformed: Vec<(PathBuf, String)>,
}

fn load_case(path: &Path) -> Result<(TestCase, RoadGenome), String> {
    let case: TestCase = read_json(path).map_err(|e| e.to_string())?;
    let genome = case.genome().map_err(|e| e.to_string())?;
    if !(case.lane_width > 0.0 && case.lane_width.is_finite()) {
        return Err(format!("lane_width {} must be positive", case.lane_width));
    }
    if case.id.is_empty() || case.id.contains(['/', '\\']) || case.id.starts_with('.') {
        return Err(format!("id {:?} is not a usable file name", case.id));
    }
    Ok((case, genome))
}

pub fn cmd_execute(cfg: &RunConfig, tests: &Path, results: &Path, log: Log) -> Result<ExecuteSummary, CliError> {
    require(tests, "tests directory", "run `generate` first")?;
    let files = json_files(tests)?;
    fresh_json_dir(results)?;
    let mut summary = ExecuteSummary { n_tests: files.len(), ..Default::default() };
    for file in files {
        let (case, genome) = match load_case(&file) {
            Ok(loaded) => loaded,
            Err(reason) => {
                log(&format!("skipping malformed test {}: {reason}", file.display()));
                summary.malformed.push((file, reason));
                continue;
            }
        };
        let road = reconstruct_with_lane_width(&genome, Pose::default(), case.lane_width);
        let trace = match simulate(&road, &cfg.simulator) {
            Ok(trace) => trace,
            Err(e) => {
                log(&format!("skipping malformed test {}: {e}", file.display()));
                summary.malformed.push((file, e.to_string()));
                continue;
            }
        };
        let valid = validate(&road, &genome, cfg.geometry.map_size).valid;
        summary.n_executed += 1;
        summary.n_failed += (trace.outcome == Outcome::Fail) as usize;
        summary.n_invalid += (!valid) as usize;
        write_json(&results.join(format!("{}.json", case.id)), &ResultRecord::new(case.id.clone(), &trace, valid))?;
    }
    log(&format!(
        "executed {} of {} tests: {} FAIL, {} invalid, {} malformed",
        summary.n_executed,
        summary.n_tests,
        summary.n_failed,
        summary.n_invalid,
        summary.malformed.len()
    ));
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub n_results: usize,
    pub fault_rate: f64,
    pub budget: BudgetSampleStats,
    pub novelty: Option<NoveltyStats>,
}

pub fn cmd_analyze(cfg: &RunConfig, results: &Path, tests: &Path, log: Log) -> Result<AnalysisReport, CliError> {
    require(results, "results directory", "run `execute` first")?;
    let mut records = Vec::new();
    for file in json_files(results)? {
        let record: TestResult = read_json(&file)?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(CliError::Runtime(format!("no result files in {}", results.display())));
    }
    let budget = budget_sample(&records, cfg.analysis.budget_seconds, cfg.analysis.n_samples, cfg.analysis_seed())?;
    let rate = fault_rate(&records)?;

    let dataset = cfg.dataset_path();
    let novelty = if tests.is_dir() && dataset.exists() {
        let mut generated = Vec::new();
        for file in json_files(tests)? {
            if let Ok((_, genome)) = load_case(&file) {
                generated.push(genome);
            }
        }
        let training: Vec<RoadGenome> = read_dataset(&dataset)?.into_iter().map(|l| l.genome).collect();
        if generated.is_empty() {
            None
        } else {
            Some(novelty_stats(&generated, &training, cfg.analysis.novelty_threshold)?)
        }
    } else {
        log("novelty skipped: tests directory or dataset missing");
        None
    };

    let report = AnalysisReport { n_results: records.len(), fault_rate: rate, budget, novelty };
    let dir = cfg.workdir_file("analysis");
    fs::create_dir_all(&dir).map_err(CliError::io(format!("cannot create {}", dir.display())))?;
    write_json(&dir.join("stats.json"), &report)?;
    write_text(&dir.join("table1.csv"), &report.budget.table_csv())?;
    let mut text = format!(
        "{} results, fault rate {:.4}\nbudget {} s, {} samples\n{}",
        report.n_results,
        report.fault_rate,
        cfg.analysis.budget_seconds,
        cfg.analysis.n_samples,
        report.budget.table_csv()
    );
    if let Some(n) = &report.novelty {
        text.push_str(&n.summary());
        write_text(&dir.join("novelty.txt"), &n.summary())?;
    }
    log(text.trim_end());
    Ok(report)
}

pub fn cmd_plot(test: &Path, result: Option<&Path>, output: &Path) -> Result<(), CliError> {
    let (case, _) = load_case(test).map_err(|reason| CliError::Runtime(format!("{}: {reason}", test.display())))?;
    let record: Option<ResultRecord> = result.map(read_json).transpose()?;
    if let Some(r) = &record {
        if r.id != case.id {
            return Err(CliError::Runtime(format!("result {} does not belong to test {}", r.id, case.id)));
        }
    }
    write_text(output, &render_svg(&case, record.as_ref())?)
}
