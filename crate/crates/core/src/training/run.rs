use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::penalty::reorder_permutation;
use super::trainer::{Evaluation, StepRecord, Trainer};
use super::TrainError;
use crate::config::RunConfig;

pub const ENERGY_TRACE_HEADER: &str = "step,state,energy,energy_stderr";
pub const OVERLAP_TRACE_HEADER: &str = "step,s,t,overlap,bhattacharyya,ess";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateEnergy {
    pub state: usize,
    pub energy: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EssSummary {
    pub per_state: Vec<f64>,
    pub normalized: Vec<f64>,
    pub min_normalized: f64,
}

/// Final report, states sorted by energy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub steps: u64,
    pub energies: Vec<StateEnergy>,
    pub overlap: Vec<Vec<f64>>,
    pub bhattacharyya: Vec<Vec<f64>>,
    pub ess: EssSummary,
    pub ratios: Vec<f64>,
    pub collapse_events: usize,
    pub msis_enabled: bool,
}

impl RunReport {
    pub fn from_evaluation(eval: &Evaluation, steps: u64, collapse_events: usize, msis_enabled: bool) -> Self {
        let perm = reorder_permutation(&eval.energy);
        let matrix = |m: &[Vec<f64>]| -> Vec<Vec<f64>> {
            perm.iter().map(|&i| perm.iter().map(|&j| m[i][j]).collect()).collect()
        };
        let pick = |v: &[f64]| -> Vec<f64> { perm.iter().map(|&i| v[i]).collect() };
        let normalized = pick(&eval.ess_normalized);
        Self {
            steps,
            energies: perm
                .iter()
                .enumerate()
                .map(|(state, &i)| StateEnergy { state, energy: eval.energy[i], stderr: eval.energy_stderr[i] })
                .collect(),
            overlap: matrix(&eval.overlap),
            bhattacharyya: matrix(&eval.bhattacharyya),
            ess: EssSummary {
                per_state: pick(&eval.ess),
                min_normalized: normalized.iter().copied().fold(f64::INFINITY, f64::min),
                normalized,
            },
            ratios: pick(&eval.ratios),
            collapse_events,
            msis_enabled,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunArtifacts {
    pub energy_trace: PathBuf,
    pub overlap_trace: PathBuf,
    pub report_path: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub report: RunReport,
    pub records: Vec<StepRecord>,
}

fn finite(v: f64) -> f64 {
    if v.is_finite() {
        v
    } else {
        0.0
    }
}

/// CSV writers for the energy and overlap traces.
pub struct TraceWriter {
    energy: BufWriter<File>,
    overlap: BufWriter<File>,
}

impl TraceWriter {
    pub fn create(energy: &Path, overlap: &Path) -> std::io::Result<Self> {
        let mut energy = BufWriter::new(File::create(energy)?);
        let mut overlap = BufWriter::new(File::create(overlap)?);
        writeln!(energy, "{ENERGY_TRACE_HEADER}")?;
        writeln!(overlap, "{OVERLAP_TRACE_HEADER}")?;
        Ok(Self { energy, overlap })
    }

    pub fn record(&mut self, r: &StepRecord) -> std::io::Result<()> {
        for (s, (e, se)) in r.energy.iter().zip(&r.energy_stderr).enumerate() {
            writeln!(self.energy, "{},{s},{},{}", r.step, finite(*e), finite(*se))?;
        }
        let n = r.energy.len();
        for s in 0..n {
            for t in s + 1..n {
                let ess = r.ess[s].min(r.ess[t]);
                writeln!(
                    self.overlap,
                    "{},{s},{t},{},{},{}",
                    r.step,
                    finite(r.overlap[s][t]),
                    finite(r.bhattacharyya[s][t]),
                    finite(ess)
                )?;
            }
        }
        Ok(())
    }

    pub fn flush(&mut self) -> std::io::Result<()> {
        self.energy.flush()?;
        self.overlap.flush()
    }
}

/// Runs `config.training.steps` optimizer steps, writing traces, checkpoints
/// and a final report under `config.output_dir`.
pub fn optimize(config: &RunConfig) -> Result<RunArtifacts, TrainError> {
    let mut trainer = if config.pretrain.enabled {
        crate::pretraining::pretrained_trainer(config)?
    } else {
        Trainer::new(config.clone())?
    };
    run_trainer(&mut trainer)
}

pub fn run_trainer(trainer: &mut Trainer) -> Result<RunArtifacts, TrainError> {
    let config = trainer.config.clone();
    let dir = config.output_dir.clone();
    std::fs::create_dir_all(dir.join("checkpoints"))?;
    let energy_trace = dir.join("energy_trace.csv");
    let overlap_trace = dir.join("overlap_trace.csv");
    let report_path = dir.join("report.json");
    let mut traces = TraceWriter::create(&energy_trace, &overlap_trace)?;
    let mut checkpoints = Vec::new();
    let mut records = Vec::new();
    let mut collapse_events = 0;
    let t = &config.training;
    while trainer.step < t.steps {
        let last_good = trainer.checkpoint();
        let record = match trainer.step() {
            Ok(r) => r,
            Err(e @ TrainError::Diverged { .. }) => {
                let path = dir.join("checkpoints").join("last_good.json");
                last_good.write(&path)?;
                traces.flush()?;
                return Err(e);
            }
            Err(e) => return Err(e),
        };
        collapse_events += record.collapsed.len();
        if record.step % t.trace_every == 0 || trainer.step == t.steps {
            traces.record(&record)?;
        }
        if t.checkpoint_every > 0 && trainer.step % t.checkpoint_every == 0 {
            let path = dir.join("checkpoints").join(format!("step_{:08}.json", trainer.step));
            trainer.checkpoint().write(&path)?;
            checkpoints.push(path);
            traces.flush()?;
        }
        records.push(record);
    }
    traces.flush()?;
    let final_path = dir.join("checkpoints").join("final.json");
    trainer.checkpoint().write(&final_path)?;
    checkpoints.push(final_path);
    let eval = trainer.evaluate(t.eval_batches)?;
    let report = RunReport::from_evaluation(&eval, trainer.step, collapse_events, config.estimators.msis_enabled);
    std::fs::write(&report_path, serde_json::to_string_pretty(&report)?)?;
    Ok(RunArtifacts { energy_trace, overlap_trace, report_path, checkpoints, report, records })
}
