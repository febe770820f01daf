//! On-disk records: test cases, execution results, labeled datasets,
//! population snapshots and metrics tables.
//!
//! Floats are written in shortest round-trip form, so every value reads back
//! bit-identical.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::discriminator::EpochMetrics;
use crate::error::{Error, Result};
use crate::evolution::{EpochStats, Member, Population};
use crate::geometry::{CartesianRoad, RoadGenome};
use crate::simulator::{LabeledRoad, Outcome, SimulationTrace};

/// A road handed to the executor: genome plus its reconstructed centerline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    pub curvatures: Vec<f64>,
    pub arc_lengths: Vec<f64>,
    pub road_points: Vec<[f64; 2]>,
    pub lane_width: f64,
}

impl TestCase {
    pub fn new(id: impl Into<String>, genome: &RoadGenome, road: &CartesianRoad) -> Self {
        Self {
            id: id.into(),
            curvatures: genome.curvatures().to_vec(),
            arc_lengths: genome.arc_lengths().to_vec(),
            road_points: road.points(),
            lane_width: road.lane_width,
        }
    }

    pub fn genome(&self) -> Result<RoadGenome> {
        RoadGenome::new(self.curvatures.clone(), self.arc_lengths.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OobRecord {
    pub arc_position: f64,
    pub lateral_offset: f64,
}

/// Outcome of executing one test case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub id: String,
    pub test_outcome: Outcome,
    pub test_duration: f64,
    pub oob_events: Vec<OobRecord>,
    pub valid: bool,
    /// Vehicle center positions, one per simulation step.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<[f64; 2]>,
}

impl ResultRecord {
    pub fn new(id: impl Into<String>, trace: &SimulationTrace, valid: bool) -> Self {
        Self {
            id: id.into(),
            test_outcome: trace.outcome,
            test_duration: trace.duration,
            oob_events: trace
                .oob_events
                .iter()
                .map(|e| OobRecord { arc_position: e.arc_position, lateral_offset: e.lateral_offset })
                .collect(),
            valid,
            trace: trace.states.iter().map(|s| [s.pose.x, s.pose.y]).collect(),
        }
    }
}

/// One labeled road as a flat JSON-lines record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub curvatures: Vec<f64>,
    pub arc_lengths: Vec<f64>,
    pub labels: Vec<bool>,
}

impl From<&LabeledRoad> for DatasetRecord {
    fn from(l: &LabeledRoad) -> Self {
        Self {
            curvatures: l.genome.curvatures().to_vec(),
            arc_lengths: l.genome.arc_lengths().to_vec(),
            labels: l.labels.clone(),
        }
    }
}

impl TryFrom<DatasetRecord> for LabeledRoad {
    type Error = Error;

    fn try_from(r: DatasetRecord) -> Result<Self> {
        let genome = RoadGenome::new(r.curvatures, r.arc_lengths)?;
        if r.labels.len() != genome.len() {
            return Err(Error::LengthMismatch { expected: genome.len(), actual: r.labels.len() });
        }
        Ok(LabeledRoad { genome, labels: r.labels })
    }
}

/// One population member as a JSON-lines record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub epoch: usize,
    pub curvatures: Vec<f64>,
    pub arc_lengths: Vec<f64>,
    pub f1: f64,
    pub f2: f64,
}

impl MemberRecord {
    pub fn new(epoch: usize, m: &Member) -> Self {
        Self {
            epoch,
            curvatures: m.genome.curvatures().to_vec(),
            arc_lengths: m.genome.arc_lengths().to_vec(),
            f1: m.f1,
            f2: m.f2,
        }
    }

    pub fn member(&self) -> Result<Member> {
        Ok(Member { genome: RoadGenome::new(self.curvatures.clone(), self.arc_lengths.clone())?, f1: self.f1, f2: self.f2 })
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_slice(&fs::read(path)?)?)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut out, &item)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut items = Vec::new();
    for line in BufReader::new(fs::File::open(path)?).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            items.push(serde_json::from_str(&line)?);
        }
    }
    Ok(items)
}

pub fn write_dataset(path: &Path, roads: &[LabeledRoad]) -> Result<()> {
    write_jsonl(path, roads.iter().map(DatasetRecord::from))
}

pub fn read_dataset(path: &Path) -> Result<Vec<LabeledRoad>> {
    read_jsonl::<DatasetRecord>(path)?.into_iter().map(LabeledRoad::try_from).collect()
}

pub fn write_population(path: &Path, population: &Population) -> Result<()> {
    write_jsonl(path, population.members.iter().map(|m| MemberRecord::new(population.epoch, m)))
}

pub fn read_population(path: &Path) -> Result<Population> {
    let records: Vec<MemberRecord> = read_jsonl(path)?;
    let epoch = records.first().map_or(0, |r| r.epoch);
    let members = records.iter().map(MemberRecord::member).collect::<Result<_>>()?;
    Ok(Population { members, epoch })
}

pub fn training_metrics_csv(history: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,sensitivity,specificity\n");
    for m in history {
        let _ = writeln!(out, "{},{},{},{},{}", m.epoch, m.train_loss, m.val_loss, m.sensitivity, m.specificity);
    }
    out
}

pub fn run_metrics_csv(metrics: &[EpochStats]) -> String {
    let mut out = String::from("epoch,mean_oob_probability,median_pairwise_distance,pool_size,n_invalid_offspring_dropped\n");
    for m in metrics {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            m.epoch, m.mean_oob_probability, m.median_pairwise_distance, m.pool_size, m.n_invalid_offspring_dropped
        );
    }
    out
}
