//! The four pipeline commands: dense-sweep oracle, BO source selection,
//! transfer study, and report merging.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gapsel_core::bo::{run_selection, SelectionResult, SimilarityEstimate};
use gapsel_core::similarity::{check_gap_condition, gap_curve, FrequencyRange};
use gapsel_core::transfer::{
    make_test_trajectories, run_transfer_study, standard_suite, StudyReport, Trajectory,
    TrajectoryKind, TrajectoryParams,
};

use crate::artifacts::{fmt_sig9, write_csv, write_json, VERSION};
use crate::config::ExperimentConfig;
use crate::CliError;

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '-' })
        .collect()
}

fn ensure_out_dir(out: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(out)
        .map_err(|e| CliError::Config(format!("cannot create output directory {}: {e}", out.display())))
}

/// `sweep_summary.json` payload.
#[derive(Debug, Serialize, Deserialize)]
pub struct SweepSummary {
    pub version: String,
    pub config_hash: String,
    pub bank_hash: String,
    pub target: String,
    pub range: FrequencyRange,
    pub grid_size: usize,
    pub pairs: Vec<SweepPair>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SweepPair {
    pub source_id: String,
    pub psi_star: f64,
    pub omega_star: f64,
    pub gap_condition_ok: bool,
}

/// Dense-sweep oracle: one `sweep_<target>_vs_<source>.csv` per pair plus
/// `sweep_summary.json` with the maxima.
pub fn cmd_sweep(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    ensure_out_dir(out)?;
    let target = cfg.bank.build_target()?;
    let sources = cfg.bank.build_sources()?;
    let range = cfg.selection.range;
    let grid_size = cfg.sweep.grid_size;

    let mut pairs = Vec::with_capacity(sources.len());
    for source in &sources {
        let curve = gap_curve(target.model(), source.model(), &range, grid_size)?;
        let rows: Vec<String> = curve
            .iter()
            .map(|(w, psi)| format!("{},{}", fmt_sig9(*w), fmt_sig9(*psi)))
            .collect();
        let file = out.join(format!(
            "sweep_{}_vs_{}.csv",
            sanitize(target.name()),
            sanitize(source.name())
        ));
        write_csv(&file, "omega,psi_true", &rows)?;

        let best = curve
            .iter()
            .fold((-1.0f64, range.wmin), |acc, (w, psi)| {
                if *psi > acc.0 { (*psi, *w) } else { acc }
            });
        pairs.push(SweepPair {
            source_id: source.name().to_string(),
            psi_star: best.0,
            omega_star: best.1,
            gap_condition_ok: check_gap_condition(target.model(), source.model(), 512)?,
        });
    }

    let summary = SweepSummary {
        version: VERSION.into(),
        config_hash: cfg.hash(),
        bank_hash: cfg.bank.hash(),
        target: target.name().to_string(),
        range,
        grid_size,
        pairs,
    };
    write_json(&out.join("sweep_summary.json"), &summary)
}

/// `selection_result.json` payload.
#[derive(Debug, Serialize, Deserialize)]
pub struct SelectionArtifact {
    pub version: String,
    pub config_hash: String,
    pub bank_hash: String,
    pub result: SelectionResult,
}

/// Run the selection loop; emit `selection_result.json`, `samples.csv`, and
/// a `posterior_<target>_vs_<source>.csv` per pair for plotting.
pub fn cmd_select(cfg: &ExperimentConfig, out: &Path) -> Result<(), CliError> {
    ensure_out_dir(out)?;
    if cfg.selection.config.seed.is_none() {
        return Err(CliError::Config(
            "selection requires an explicit seed: set `selection.seed` or pass --seed".into(),
        ));
    }
    let target = cfg.bank.build_target()?;
    let sources = cfg.bank.build_sources()?;
    let range = cfg.selection.range;
    let result = run_selection(&target, &sources, &range, &cfg.selection.config)?;

    let mut rows = Vec::new();
    for (iter_idx, estimates) in result.history.iter().enumerate() {
        let omega = result.omegas[iter_idx];
        for (n, est) in estimates.iter().enumerate() {
            let psi = result.sources[n].dataset[iter_idx].1;
            rows.push(format!(
                "{},{},{},{},{},{}",
                iter_idx + 1,
                fmt_sig9(omega),
                est.source_id,
                fmt_sig9(psi),
                fmt_sig9(est.psi_star),
                fmt_sig9(est.sigma_star),
            ));
        }
    }
    write_csv(
        &out.join("samples.csv"),
        "iter,omega,source_id,psi,psi_star_hat,sigma_star_hat",
        &rows,
    )?;

    for (trace, model) in result.sources.iter().zip(&result.models) {
        let rows: Vec<String> = range
            .grid(cfg.selection.config.grid_size)
            .into_iter()
            .map(|w| {
                let (mean, var) = model.predict(&[w]);
                format!("{},{},{}", fmt_sig9(w), fmt_sig9(mean), fmt_sig9(var.sqrt()))
            })
            .collect();
        let file = out.join(format!(
            "posterior_{}_vs_{}.csv",
            sanitize(&result.target_id),
            sanitize(&trace.source_id)
        ));
        write_csv(&file, "omega,mean,std", &rows)?;
    }

    let artifact = SelectionArtifact {
        version: VERSION.into(),
        config_hash: cfg.hash(),
        bank_hash: cfg.bank.hash(),
        result,
    };
    write_json(&out.join("selection_result.json"), &artifact)
}

/// `transfer_report.json` payload.
#[derive(Debug, Serialize, Deserialize)]
pub struct TransferArtifact {
    pub version: String,
    pub config_hash: String,
    pub bank_hash: String,
    pub report: StudyReport,
}

fn build_suite(cfg: &ExperimentConfig, seed: u64) -> Result<Vec<Trajectory>, CliError> {
    let target = cfg.bank.build_target()?;
    let ts = target.model().ts();
    let range = cfg.selection.range;
    let suite_cfg = &cfg.transfer.suite;
    let mut suite = standard_suite(&range, ts, suite_cfg.duration, suite_cfg.amplitude, seed)?;
    for path in &suite_cfg.waypoint_csvs {
        let params = TrajectoryParams {
            ts,
            csv_path: Some(path.clone()),
            ..TrajectoryParams::default()
        };
        suite.extend(make_test_trajectories(
            TrajectoryKind::WaypointCsv,
            &params,
            &range,
            1,
            0,
        )?);
    }
    Ok(suite)
}

/// Run the transfer study against a previously written selection artifact;
/// refuses stale artifacts whose bank hash no longer matches.
pub fn cmd_transfer(
    cfg: &ExperimentConfig,
    out: &Path,
    selection_file: Option<PathBuf>,
) -> Result<(), CliError> {
    ensure_out_dir(out)?;
    let seed = cfg.transfer.config.seed.ok_or_else(|| {
        CliError::Config(
            "transfer requires an explicit seed: set `transfer.seed` or pass --seed".into(),
        )
    })?;
    let path = selection_file.unwrap_or_else(|| out.join("selection_result.json"));
    let text = std::fs::read_to_string(&path).map_err(|e| {
        CliError::Config(format!(
            "cannot read selection artifact {}: {e} (run `select` first)",
            path.display()
        ))
    })?;
    let artifact: SelectionArtifact = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let bank_hash = cfg.bank.hash();
    if artifact.bank_hash != bank_hash {
        return Err(CliError::Config(format!(
            "stale selection artifact: bank hash {} does not match the current bank {} — rerun `select`",
            artifact.bank_hash, bank_hash
        )));
    }

    let target = cfg.bank.build_target()?;
    let sources = cfg.bank.build_sources()?;
    let suite = build_suite(cfg, seed)?;
    let report = run_transfer_study(
        &target,
        &sources,
        &suite,
        &artifact.result,
        &cfg.transfer.config,
    )?;

    let mut rows = Vec::with_capacity(report.sources.len() + 1);
    rows.push(format!(
        "{},{},{},{}",
        report.zero_prior.source_id,
        "",
        fmt_sig9(report.zero_prior.mean_rms),
        fmt_sig9(report.zero_prior.mean_reduction_pct),
    ));
    for row in &report.sources {
        rows.push(format!(
            "{},{},{},{}",
            row.source_id,
            row.psi_star.map(fmt_sig9).unwrap_or_default(),
            fmt_sig9(row.mean_rms),
            fmt_sig9(row.mean_reduction_pct),
        ));
    }
    write_csv(
        &out.join("transfer_table.csv"),
        "source_id,psi_star_hat,mean_rms,mean_reduction_pct",
        &rows,
    )?;

    let artifact = TransferArtifact {
        version: VERSION.into(),
        config_hash: cfg.hash(),
        bank_hash,
        report,
    };
    write_json(&out.join("transfer_report.json"), &artifact)
}

/// Condensed selection block inside `report.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct SelectionDigest {
    pub config_hash: String,
    pub chosen_source: String,
    pub converged: bool,
    pub iterations: usize,
    pub estimates: Vec<SimilarityEstimate>,
}

/// Condensed transfer block inside `report.json`.
#[derive(Debug, Serialize, Deserialize)]
pub struct TransferDigest {
    pub config_hash: String,
    pub baseline_mean_rms: f64,
    pub rows: Vec<TransferDigestRow>,
    pub spearman_psi_vs_rms: f64,
    pub ranking_consistent: bool,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TransferDigestRow {
    pub source_id: String,
    pub psi_star: Option<f64>,
    pub mean_rms: f64,
    pub mean_reduction_pct: f64,
}

/// `report.json` payload.
#[derive(Debug, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    pub missing: Vec<String>,
    pub sweep: Option<SweepSummary>,
    pub selection: Option<SelectionDigest>,
    pub transfer: Option<TransferDigest>,
}

fn read_artifact<T: serde::de::DeserializeOwned>(
    out: &Path,
    name: &str,
    missing: &mut Vec<String>,
) -> Option<T> {
    let path = out.join(name);
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(_) => {
            missing.push(name.to_string());
            return None;
        }
    };
    match serde_json::from_str(&text) {
        Ok(v) => Some(v),
        Err(e) => {
            log::warn!("{name} is unreadable: {e}");
            missing.push(name.to_string());
            None
        }
    }
}

/// Merge the artifacts in an output directory into `report.json` plus a
/// human-readable `report.txt`. Idempotent; missing artifacts are listed
/// rather than fatal.
pub fn cmd_report(out: &Path) -> Result<(), CliError> {
    ensure_out_dir(out)?;
    let mut missing = Vec::new();
    let sweep: Option<SweepSummary> = read_artifact(out, "sweep_summary.json", &mut missing);
    let selection: Option<SelectionArtifact> =
        read_artifact(out, "selection_result.json", &mut missing);
    let transfer: Option<TransferArtifact> =
        read_artifact(out, "transfer_report.json", &mut missing);

    let selection_digest = selection.as_ref().map(|a| SelectionDigest {
        config_hash: a.config_hash.clone(),
        chosen_source: a.result.chosen_source.clone(),
        converged: a.result.converged,
        iterations: a.result.iterations,
        estimates: a
            .result
            .sources
            .iter()
            .map(|t| t.estimate.clone())
            .collect(),
    });
    let transfer_digest = transfer.as_ref().map(|a| TransferDigest {
        config_hash: a.config_hash.clone(),
        baseline_mean_rms: a.report.baseline_mean_rms,
        rows: std::iter::once(&a.report.zero_prior)
            .chain(&a.report.sources)
            .map(|r| TransferDigestRow {
                source_id: r.source_id.clone(),
                psi_star: r.psi_star,
                mean_rms: r.mean_rms,
                mean_reduction_pct: r.mean_reduction_pct,
            })
            .collect(),
        spearman_psi_vs_rms: a.report.spearman_psi_vs_rms,
        ranking_consistent: a.report.ranking_consistent,
    });

    let mut text = String::new();
    text.push_str(&format!("gapsel report (toolkit {VERSION})\n"));
    if let Some(s) = &sweep {
        text.push_str(&format!("\nsweep oracle over [{}, {}] rad/s:\n", s.range.wmin, s.range.wmax));
        for p in &s.pairs {
            text.push_str(&format!(
                "  {} vs {}: psi* = {:.4} at {:.3} rad/s (gap condition {})\n",
                s.target,
                p.source_id,
                p.psi_star,
                p.omega_star,
                if p.gap_condition_ok { "ok" } else { "violated" },
            ));
        }
    }
    if let Some(d) = &selection_digest {
        text.push_str(&format!(
            "\nselection: chose {} after {} iterations ({})\n",
            d.chosen_source,
            d.iterations,
            if d.converged { "converged" } else { "not converged" },
        ));
        for e in &d.estimates {
            text.push_str(&format!(
                "  {}: psi_hat* = {:.4} +/- {:.4} at {:.3} rad/s\n",
                e.source_id, e.psi_star, e.sigma_star, e.omega_star,
            ));
        }
    }
    if let Some(t) = &transfer_digest {
        text.push_str(&format!(
            "\ntransfer study (baseline mean RMS {:.4}):\n",
            t.baseline_mean_rms
        ));
        for r in &t.rows {
            let psi = r
                .psi_star
                .map(|p| format!("{p:.4}"))
                .unwrap_or_else(|| "  -  ".into());
            text.push_str(&format!(
                "  {:<12} psi*={psi}  mean RMS {:.5}  reduction {:.1}%\n",
                r.source_id, r.mean_rms, r.mean_reduction_pct,
            ));
        }
        text.push_str(&format!(
            "  ranking {} (Spearman psi vs RMS = {:.2})\n",
            if t.ranking_consistent { "consistent" } else { "INCONSISTENT" },
            t.spearman_psi_vs_rms,
        ));
    }
    if !missing.is_empty() {
        text.push_str(&format!("\nmissing artifacts: {}\n", missing.join(", ")));
    }

    let report = Report {
        version: VERSION.into(),
        missing,
        sweep,
        selection: selection_digest,
        transfer: transfer_digest,
    };
    write_json(&out.join("report.json"), &report)?;
    std::fs::write(out.join("report.txt"), text)
        .map_err(|e| CliError::Runtime(format!("cannot write report.txt: {e}")))
}
