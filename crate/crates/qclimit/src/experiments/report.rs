//! Machine-readable experiment reports: CSV tables with a deterministic
//! column order, a JSON mirror of the full report, and a meta file with
//! the config hash and timings. Floats are printed with 17 significant
//! digits so identical runs are byte-identical.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RunMeta {
    pub experiment: String,
    pub config_hash: String,
    pub crate_version: String,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct RateFit {
    /// Slope of log(gap) against log(eps).
    pub slope: f64,
    pub r_squared: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ConvergenceRow {
    /// 0 marks the classical-limit row.
    pub epsilon: f64,
    pub c_eps: f64,
    pub eigenvalues: Vec<f64>,
    pub resolvent_gap: f64,
    pub a_discrepancy: f64,
    pub b_discrepancy: f64,
    pub phi2_discrepancy: f64,
    pub n_max: usize,
    pub fock_dim: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ConvergenceReport {
    /// Sorted by decreasing eps; the final row is the eps -> 0 limit.
    pub rows: Vec<ConvergenceRow>,
    pub xi: f64,
    pub lower_bound_constant: f64,
    pub lower_bound_satisfied: bool,
    pub c_eps_uniformly_bounded: bool,
    pub resolvent_rate: Option<RateFit>,
    pub meta: RunMeta,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct UniformFieldRow {
    pub width: f64,
    pub c_eps: f64,
    /// Max |A_synth - A_target_mollified| over the probe points.
    pub mollified_error: f64,
    /// Max |A_synth - (1/2) x_perp| over the probe points.
    pub target_error: f64,
    pub synth_eigenvalues: Vec<f64>,
    /// Relative gap of the compared eigenvalues against the exact operator.
    pub eig_relative_gap: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct UniformFieldReport {
    pub rows: Vec<UniformFieldRow>,
    pub exact_eigenvalues: Vec<f64>,
    /// Lowest bulk level and the next distinct bulk level of the exact
    /// operator, located as density clusters in the spectrum.
    pub level0: f64,
    pub level1: f64,
    /// Agreement of the state-route fields with the measure-route fields
    /// on a reduced mode set.
    pub quantum_route_error: f64,
    /// Field energies may diverge as the width shrinks; flagged, not failed.
    pub c_eps_growing: bool,
    pub mollifier_rate: Option<RateFit>,
    pub meta: RunMeta,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GroundStateRow {
    pub epsilon: f64,
    /// Lowest eigenvalue of the coupled operator.
    pub left: f64,
    /// inf_z { lambda_0(effective(delta_z)) + c(delta_z) }.
    pub right: f64,
    pub gap: f64,
    pub n_max: usize,
    pub top_sector_mass: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GroundStateReport {
    pub rows: Vec<GroundStateRow>,
    pub minimizer_re: f64,
    pub minimizer_im: f64,
    pub minimizer_on_boundary: bool,
    /// Spectral gap of the effective operator at the minimizer.
    pub effective_spectral_gap: f64,
    /// Best value over sampled 2-point mixtures (must not beat the best
    /// single point).
    pub best_mixture_value: f64,
    pub scan_values: Vec<ScanSample>,
    pub meta: RunMeta,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ScanSample {
    pub z_re: f64,
    pub z_im: f64,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Report {
    Convergence(ConvergenceReport),
    UniformField(UniformFieldReport),
    GroundState(GroundStateReport),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl Report {
    pub fn meta(&self) -> &RunMeta {
        match self {
            Report::Convergence(r) => &r.meta,
            Report::UniformField(r) => &r.meta,
            Report::GroundState(r) => &r.meta,
        }
    }

    /// CSV with a deterministic column order; one row per schedule entry.
    pub fn to_csv(&self) -> String {
        match self {
            Report::Convergence(r) => {
                let k = r.rows.iter().map(|row| row.eigenvalues.len()).max().unwrap_or(0);
                let mut header = vec!["epsilon".to_string(), "c_eps".to_string()];
                for i in 0..k {
                    header.push(format!("eig{i}"));
                }
                header.extend(
                    [
                        "resolvent_gap",
                        "a_discrepancy",
                        "b_discrepancy",
                        "phi2_discrepancy",
                        "n_max",
                        "fock_dim",
                    ]
                    .map(str::to_string),
                );
                let mut out = header.join(",") + "\n";
                for row in &r.rows {
                    let mut cells = vec![fmt_f64(row.epsilon), fmt_f64(row.c_eps)];
                    for i in 0..k {
                        cells.push(fmt_f64(row.eigenvalues.get(i).copied().unwrap_or(f64::NAN)));
                    }
                    cells.push(fmt_f64(row.resolvent_gap));
                    cells.push(fmt_f64(row.a_discrepancy));
                    cells.push(fmt_f64(row.b_discrepancy));
                    cells.push(fmt_f64(row.phi2_discrepancy));
                    cells.push(row.n_max.to_string());
                    cells.push(row.fock_dim.to_string());
                    out.push_str(&cells.join(","));
                    out.push('\n');
                }
                out
            }
            Report::UniformField(r) => {
                let k = r.rows.iter().map(|row| row.synth_eigenvalues.len()).max().unwrap_or(0);
                let mut header = vec![
                    "width".to_string(),
                    "c_eps".to_string(),
                    "mollified_error".to_string(),
                    "target_error".to_string(),
                ];
                for i in 0..k {
                    header.push(format!("synth_eig{i}"));
                }
                header.push("eig_relative_gap".to_string());
                let mut out = header.join(",") + "\n";
                for row in &r.rows {
                    let mut cells = vec![
                        fmt_f64(row.width),
                        fmt_f64(row.c_eps),
                        fmt_f64(row.mollified_error),
                        fmt_f64(row.target_error),
                    ];
                    for i in 0..k {
                        cells.push(fmt_f64(
                            row.synth_eigenvalues.get(i).copied().unwrap_or(f64::NAN),
                        ));
                    }
                    cells.push(fmt_f64(row.eig_relative_gap));
                    out.push_str(&cells.join(","));
                    out.push('\n');
                }
                out
            }
            Report::GroundState(r) => {
                let mut out =
                    "epsilon,left,right,gap,n_max,top_sector_mass\n".to_string();
                for row in &r.rows {
                    let cells = [
                        fmt_f64(row.epsilon),
                        fmt_f64(row.left),
                        fmt_f64(row.right),
                        fmt_f64(row.gap),
                        row.n_max.to_string(),
                        fmt_f64(row.top_sector_mass),
                    ];
                    out.push_str(&cells.join(","));
                    out.push('\n');
                }
                out
            }
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Report> {
        serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))
    }
}

/// Write report.csv / report.json (per `format`) plus meta.json into the
/// output directory. Creating the directory is attempted first; an
/// unwritable destination surfaces as an I/O error (CLI exit code 2).
pub fn emit_report(report: &Report, format: ReportFormat, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    match format {
        ReportFormat::Csv => {
            let path = dir.join("report.csv");
            std::fs::write(&path, report.to_csv())?;
            written.push(path);
        }
        ReportFormat::Json => {
            let path = dir.join("report.json");
            std::fs::write(&path, report.to_json()?)?;
            written.push(path);
        }
    }
    let meta_path = dir.join("meta.json");
    let meta =
        serde_json::to_string_pretty(report.meta()).map_err(|e| Error::Serde(e.to_string()))?;
    std::fs::write(&meta_path, meta)?;
    written.push(meta_path);
    Ok(written)
}
