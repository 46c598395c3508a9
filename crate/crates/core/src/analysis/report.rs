//! Writes the full analysis bundle for one run directory: travel-time
//! CSV+SVG for 5/10/30 s windows, distribution CSV+SVG for 1/5/30 s
//! windows, and loss.json.

use std::path::Path;

use crate::model::StoredReading;
use crate::simulator::SendLog;

use super::{
    distribution_summary, loss_report, render_distribution_svg, render_travel_time_svg,
    travel_time_csv, travel_time_rows, DistributionSummary, LossReport, RunMismatch,
};

pub const TRAVEL_WINDOWS_S: [u64; 3] = [5, 10, 30];
pub const DISTRIBUTION_WINDOWS_S: [u64; 3] = [1, 5, 30];

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("cannot write report: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    RunMismatch(#[from] RunMismatch),
}

fn distribution_csv(summary: &DistributionSummary) -> String {
    format!(
        "protocol,count,pct\nmqtt,{},{:.1}\ncoap,{},{:.1}\n",
        summary.mqtt, summary.mqtt_pct, summary.coap, summary.coap_pct
    )
}

/// Renders every figure and the loss report into `run_dir`, returning the
/// loss report for summary printing.
pub fn write_run_reports(
    run_dir: &Path,
    readings: &[StoredReading],
    send_log: &SendLog,
) -> Result<LossReport, ReportError> {
    std::fs::create_dir_all(run_dir)?;

    for window_s in TRAVEL_WINDOWS_S {
        let csv = travel_time_csv(readings, window_s);
        std::fs::write(run_dir.join(format!("travel_{window_s}s.csv")), &csv)?;
        let svg = render_travel_time_svg(&travel_time_rows(readings, window_s));
        std::fs::write(run_dir.join(format!("travel_{window_s}s.svg")), &svg)?;
    }

    for window_s in DISTRIBUTION_WINDOWS_S {
        let summary = distribution_summary(readings, window_s);
        std::fs::write(
            run_dir.join(format!("dist_{window_s}s.csv")),
            distribution_csv(&summary),
        )?;
        std::fs::write(
            run_dir.join(format!("dist_{window_s}s.svg")),
            render_distribution_svg(&summary),
        )?;
    }

    let loss = loss_report(send_log, readings)?;
    std::fs::write(
        run_dir.join("loss.json"),
        serde_json::to_string_pretty(&loss).expect("loss report serialization cannot fail"),
    )?;
    Ok(loss)
}
