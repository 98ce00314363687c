//! Run artifacts: step logs, rp curves, server log, evaluation report,
//! model checkpoints and the run status file.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use ftrl_core::ddpg::ModelBundle;
use ftrl_core::federation::{AgentId, RoundRecord};
use ftrl_core::metrics::{cumulative_rp, stage_series, EvalReport, StageConfig};
use ftrl_core::runner::StepRecord;
use ftrl_core::wire::{bundle_from_payload, decode_payload, encode_payload, payload_from_bundle};

use crate::error::{Error, Result};

pub const STEP_COLUMNS: [&str; 6] = [
    "step",
    "sim_time_s",
    "reward",
    "collided",
    "min_dist",
    "synced",
];
pub const RP_COLUMNS: [&str; 3] = ["step", "rp", "cumsum"];
pub const EVAL_COLUMNS: [&str; 4] = ["scenario", "agent", "avg_dist", "coll_no"];
pub const SERVER_COLUMNS: [&str; 3] = ["round", "at", "participants"];
pub const STATUS_FILE: &str = "run_status.txt";

pub fn steps_file(agent: AgentId) -> String {
    format!("agent_{agent}_steps.csv")
}

pub fn rp_file(agent: AgentId) -> String {
    format!("agent_{agent}_rp_curve.csv")
}

pub fn model_file(agent: AgentId) -> String {
    format!("agent_{agent}.model")
}

fn writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

/// Streaming per-step log.
pub struct StepLog {
    out: csv::Writer<BufWriter<File>>,
    path: std::path::PathBuf,
}

impl StepLog {
    pub fn create(path: &Path) -> Result<Self> {
        let mut out = writer(path)?;
        out.write_record(STEP_COLUMNS)?;
        Ok(Self {
            out,
            path: path.to_path_buf(),
        })
    }

    pub fn write(&mut self, r: &StepRecord) -> Result<()> {
        let synced = r.synced.map(|s| s.to_string()).unwrap_or_default();
        self.out.write_record([
            r.step.to_string(),
            r.sim_time_s.to_string(),
            r.reward.to_string(),
            u8::from(r.collided).to_string(),
            r.min_dist.to_string(),
            synced,
        ])?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.out.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_step_log(path: &Path) -> Result<Vec<StepRecord>> {
    let mut rd = csv::Reader::from_path(path)?;
    if rd.headers()?.iter().ne(STEP_COLUMNS) {
        return Err(bad(path, "unexpected step log header"));
    }
    let mut out = Vec::new();
    for row in rd.records() {
        let row = row?;
        let num = |i: usize| {
            row[i]
                .parse::<f64>()
                .map_err(|_| bad(path, &format!("bad number `{}`", &row[i])))
        };
        out.push(StepRecord {
            step: row[0].parse().map_err(|_| bad(path, "bad step"))?,
            sim_time_s: num(1)?,
            reward: num(2)?,
            collided: match &row[3] {
                "0" => false,
                "1" => true,
                other => return Err(bad(path, &format!("bad collided flag `{other}`"))),
            },
            min_dist: num(4)?,
            synced: match &row[5] {
                "" => None,
                s => Some(s.parse().map_err(|_| bad(path, "bad synced round"))?),
            },
        });
    }
    Ok(out)
}

fn bad(path: &Path, message: &str) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line: 0,
        message: message.to_string(),
    }
}

/// Writes the stage II minus stage I curve. Runs that are too short or
/// have a constant reward get a header-only file and an explanation.
pub fn write_rp_curve(
    path: &Path,
    rewards: &[f64],
    stages: &StageConfig,
) -> Result<Option<String>> {
    let mut out = writer(path)?;
    out.write_record(RP_COLUMNS)?;
    let rp = stage_series(rewards, stages).and_then(|s| s.relative_performance());
    let note = match rp {
        Ok(rp) => {
            for (i, (v, c)) in rp.iter().zip(cumulative_rp(&rp)).enumerate() {
                out.write_record([(i + 1).to_string(), v.to_string(), c.to_string()])?;
            }
            None
        }
        Err(e) => Some(e.to_string()),
    };
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(note)
}

/// `(step, rp, cumsum)` rows.
pub fn read_rp_curve(path: &Path) -> Result<Vec<(usize, f64, f64)>> {
    let mut rd = csv::Reader::from_path(path)?;
    if rd.headers()?.iter().ne(RP_COLUMNS) {
        return Err(bad(path, "unexpected rp curve header"));
    }
    rd.records()
        .map(|row| {
            let row = row?;
            let f = |i: usize| row[i].parse::<f64>().map_err(|_| bad(path, "bad number"));
            Ok((
                row[0].parse().map_err(|_| bad(path, "bad step"))?,
                f(1)?,
                f(2)?,
            ))
        })
        .collect()
}

pub fn write_server_log(path: &Path, rounds: &[RoundRecord]) -> Result<()> {
    let mut out = writer(path)?;
    out.write_record(SERVER_COLUMNS)?;
    for r in rounds {
        let who: Vec<String> = r.participants.iter().map(|a| a.to_string()).collect();
        out.write_record([r.round.to_string(), r.at.to_string(), who.join(";")])?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub scenario: String,
    pub agent: AgentId,
    pub report: EvalReport,
}

pub fn write_eval_report(path: &Path, rows: &[EvalRow]) -> Result<()> {
    let mut out = writer(path)?;
    out.write_record(EVAL_COLUMNS)?;
    for r in rows {
        out.write_record([
            r.scenario.clone(),
            r.agent.to_string(),
            r.report.avg_dist.to_string(),
            r.report.coll_no.to_string(),
        ])?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// A checkpoint is the wire payload block of the four networks.
pub fn save_model(path: &Path, networks: &ModelBundle) -> Result<()> {
    std::fs::write(path, encode_payload(&payload_from_bundle(networks)))
        .map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<ModelBundle> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(bundle_from_payload(decode_payload(&bytes)?)?)
}

pub fn write_status(dir: &Path, status: &str) -> Result<()> {
    let path = dir.join(STATUS_FILE);
    std::fs::write(&path, format!("{status}\n")).map_err(|e| Error::io(path, e))
}
