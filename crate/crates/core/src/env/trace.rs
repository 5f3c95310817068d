use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::types::{Action, StepResult};
use crate::error::Result;
use crate::simcore::EnvConfig;

/// One agent's outcome in one TTI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tti: u64,
    pub agent: usize,
    pub channel: usize,
    pub power_dbm: f64,
    pub sinr_db: f64,
    pub delivered_bits: f64,
    pub remaining_bits: f64,
    pub reward: f64,
}

impl TraceRecord {
    pub fn from_step(step: &StepResult, actions: &[Action], cfg: &EnvConfig) -> Vec<TraceRecord> {
        actions
            .iter()
            .enumerate()
            .map(|(i, a)| TraceRecord {
                tti: step.info.tti,
                agent: i,
                channel: a.channel,
                power_dbm: cfg.tx_power_levels_dbm[a.power_level],
                sinr_db: if step.info.sinr[i] > 0.0 { 10.0 * step.info.sinr[i].log10() } else { f64::NEG_INFINITY },
                delivered_bits: step.info.delivered_bits[i],
                remaining_bits: step.info.remaining_bits[i],
                reward: step.rewards[i],
            })
            .collect()
    }
}

/// Writes records as JSON lines. Non-finite SINR values are written as `null`.
pub fn write_trace(records: &[TraceRecord], mut out: impl Write) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_trace(input: impl BufRead) -> Result<Vec<TraceRecord>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let v: serde_json::Value = serde_json::from_str(&line)?;
        let mut v = v;
        if v.get("sinr_db").is_some_and(serde_json::Value::is_null) {
            v["sinr_db"] = serde_json::json!(f64::MIN);
            let mut r: TraceRecord = serde_json::from_value(v)?;
            r.sinr_db = f64::NEG_INFINITY;
            out.push(r);
        } else {
            out.push(serde_json::from_value(v)?);
        }
    }
    Ok(out)
}
