//! File outputs of the `run` subcommand.
//!
//! * `regret.csv`: header `k,mean_regret_opted_in,mean_regret_opted_out,mean_regret_all`,
//!   one row per event, comma separated, `\n` line endings.
//! * `summary.json`: [`Summary`](super::sim::Summary), pretty printed.
//! * `replication_<r>.jsonl` / `arrivals_<r>.txt` (optional): one JSON
//!   [`PullRecord`] per line, and the arrival stream as `time user_id index`.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufWriter, Write};
use std::path::Path;

use super::metrics::GroupSeries;
use super::sim::{ExperimentResult, Summary};
use crate::arrivals::dump_stream;
use crate::error::{Error, Result};
use crate::policy::PullRecord;

pub const REGRET_HEADER: &str = "k,mean_regret_opted_in,mean_regret_opted_out,mean_regret_all";

pub fn regret_csv(series: &GroupSeries) -> String {
    let mut out = String::with_capacity(series.len() * 48);
    out.push_str(REGRET_HEADER);
    out.push('\n');
    for k in 0..series.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            k + 1,
            series.opted_in[k],
            series.opted_out[k],
            series.all[k]
        );
    }
    out
}

pub fn summary_json(summary: &Summary) -> String {
    serde_json::to_string_pretty(summary).expect("summary is always serializable") + "\n"
}

pub fn write_pull_log<W: Write>(records: &[PullRecord], mut w: W) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::Io(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_pull_log<R: BufRead>(reader: R) -> Result<Vec<PullRecord>> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: n + 1,
            msg: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Writes every output of an experiment into `dir` (created if missing).
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("regret.csv"), regret_csv(&result.series.mean))?;
    fs::write(dir.join("summary.json"), summary_json(&result.summary))?;
    for (r, rep) in result.replications.iter().enumerate() {
        if let Some(log) = &rep.log {
            let file = fs::File::create(dir.join(format!("replication_{r}.jsonl")))?;
            let mut w = BufWriter::new(file);
            write_pull_log(log, &mut w)?;
            w.flush()?;
            fs::write(
                dir.join(format!("arrivals_{r}.txt")),
                dump_stream(&rep.events),
            )?;
        }
    }
    Ok(())
}
