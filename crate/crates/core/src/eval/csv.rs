//! Plain CSV exports of an experiment report.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::experiment::ExperimentReport;

fn write(path: &Path, header: &str, rows: impl IntoIterator<Item = String>) -> std::io::Result<()> {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    fs::write(path, s)
}

pub fn write_all(root: &Path, report: &ExperimentReport) -> std::io::Result<()> {
    write(
        &root.join("summary.csv"),
        "baseline,seed,mixed_macro_f1,mixed_worst_agent_f1,rtt_p50,rtt_p95,rtt_idr,saturation_backlog_peak,saturation_backlog_max,catastrophic_fraction,flowmods_per_episode,disruption_per_episode,pi_version",
        report.runs.iter().map(|r| {
            format!(
                "{},{},{:.6},{:.6},{:.4},{:.4},{:.4},{:.3},{},{:.4},{:.2},{:.4},{}",
                r.baseline,
                r.seed,
                r.mixed.macro_f1,
                r.mixed.worst_agent_f1,
                r.mixed.rtt_p50,
                r.mixed.rtt_p95,
                r.mixed.rtt_idr,
                r.saturation.backlog_peak_mean,
                r.saturation.backlog_peak_max,
                r.catastrophic_fraction,
                r.mixed.flowmods_per_episode.mean,
                r.mixed.disruption_per_episode.mean,
                r.pi_version
            )
        }),
    )?;
    let cdf_rows = |pick: fn(&super::report::MetricReport) -> &Vec<(f64, f64)>| {
        report.runs.iter().flat_map(move |r| {
            pick(&r.mixed)
                .iter()
                .map(move |(v, p)| format!("{},{},{v:.6},{p:.3}", r.baseline, r.seed))
                .collect::<Vec<_>>()
        })
    };
    write(&root.join("f1_cdf.csv"), "baseline,seed,f1,cdf", cdf_rows(|m| &m.f1_cdf))?;
    write(&root.join("rtt_cdf.csv"), "baseline,seed,rtt_ms,cdf", cdf_rows(|m| &m.rtt_cdf))?;
    write(
        &root.join("flowmods_rtt.csv"),
        "baseline,seed,episode,flowmods,rtt_p95,backlog_peak",
        report.runs.iter().flat_map(|r| {
            r.mixed.per_episode.iter().chain(&r.saturation.per_episode).map(move |e| {
                format!("{},{},{},{},{:.4},{}", r.baseline, r.seed, e.episode, e.flowmods, e.rtt_p95, e.backlog_peak)
            })
        }),
    )?;
    write(
        &root.join("governance_rounds.csv"),
        "seed,round,accepted",
        report.runs.iter().flat_map(|r| {
            r.accepted_per_round.iter().enumerate().map(move |(k, a)| format!("{},{},{a}", r.seed, k + 1))
        }),
    )?;
    let mut cmp = String::new();
    for c in &report.comparisons {
        let _ = write!(cmp, "{},{},{},{:.6},{:.6},", c.metric, c.a, c.b, c.stats.mean_delta, c.stats.std_error);
        let _ = writeln!(
            cmp,
            "{},{:.4}",
            c.stats.t_statistic.map_or("nan".into(), |t| format!("{t:.4}")),
            c.stats.cohens_d
        );
    }
    fs::write(root.join("comparisons.csv"), format!("metric,a,b,mean_delta,std_error,t,cohens_d\n{cmp}"))
}
