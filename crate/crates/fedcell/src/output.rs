//! CSV/JSON emission: metrics.csv, ledger.csv, and the resolved config.
//!
//! CSV output is locale-independent (dot decimal, LF line endings) and a
//! pure function of the run, so identical runs produce byte-identical
//! files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::comms::CommLedger;
use crate::config::{ExperimentConfig, MetricsTable};
use crate::error::{Result, SimError};

pub const METRICS_FILE: &str = "metrics.csv";
pub const LEDGER_FILE: &str = "ledger.csv";
pub const CONFIG_FILE: &str = "config.json";

pub fn metrics_csv(metrics: &MetricsTable) -> String {
    let mut out = String::from("round,acc_mean,ul_bytes,dl_bytes,cum_bytes,sparsity_mean,pruners\n");
    for row in &metrics.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.round,
            row.acc_mean,
            row.ul_bytes,
            row.dl_bytes,
            row.cum_bytes,
            row.sparsity_mean,
            row.pruners
        )
        .unwrap();
    }
    out
}

pub fn ledger_csv(ledger: &CommLedger) -> String {
    let mut out = String::from("round,protocol,ul_bytes,dl_bytes,cum_ul_bytes,cum_dl_bytes\n");
    for row in ledger.rows() {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            row.round, row.protocol, row.ul_bytes, row.dl_bytes, row.cum_ul_bytes, row.cum_dl_bytes
        )
        .unwrap();
    }
    out
}

/// Writes metrics.csv, ledger.csv, and config.json into `dir` (created if
/// missing), overwriting any previous run. Returns the written paths.
pub fn emit_outputs(
    metrics: &MetricsTable,
    ledger: &CommLedger,
    cfg: &ExperimentConfig,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
    let write = |name: &str, contents: String| -> Result<PathBuf> {
        let path = dir.join(name);
        std::fs::write(&path, contents).map_err(|e| SimError::io(&path, e))?;
        Ok(path)
    };
    let config_json =
        serde_json::to_string_pretty(cfg).expect("config serializes") + "\n";
    Ok(vec![
        write(METRICS_FILE, metrics_csv(metrics))?,
        write(LEDGER_FILE, ledger_csv(ledger))?,
        write(CONFIG_FILE, config_json)?,
    ])
}
