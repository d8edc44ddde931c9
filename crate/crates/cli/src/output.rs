//! CSV series, summaries and manifests.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use qsd_core::config::scenario_to_document;
use qsd_core::observables::DecayTimes;
use qsd_core::response::ResponseSamples;
use qsd_core::{Scenario, Trajectory};
use serde::Serialize;

pub const TRAJECTORY_COLUMNS: &str =
    "t,rho11_re,rho11_im,rho12_re,rho12_im,rho22_re,rho22_im,abs_rho12,raw_trace_re,raw_trace_im";

/// 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn scenario_header(scenario: &Scenario) -> String {
    let doc = scenario_to_document(scenario);
    let mut out = String::new();
    writeln!(out, "# label: {}", scenario.label).unwrap();
    writeln!(out, "# scenario: {doc}").unwrap();
    writeln!(out, "# beta: {}", num(scenario.beta())).unwrap();
    writeln!(
        out,
        "# delta_ref_hz: {}",
        num(scenario.system.delta_ref_hz)
    )
    .unwrap();
    out
}

pub fn trajectory_csv(scenario: &Scenario, traj: &Trajectory) -> String {
    let mut out = scenario_header(scenario);
    out.push_str(TRAJECTORY_COLUMNS);
    out.push('\n');
    for ((t, rho), tr) in traj.times.iter().zip(&traj.rho).zip(&traj.raw_trace) {
        let fields = [
            *t,
            rho[0][0].re,
            rho[0][0].im,
            rho[0][1].re,
            rho[0][1].im,
            rho[1][1].re,
            rho[1][1].im,
            rho[0][1].norm(),
            tr.re,
            tr.im,
        ];
        let line: Vec<String> = fields.iter().map(|v| num(*v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn response_csv(header: &str, samples: &ResponseSamples) -> String {
    let mut out = String::new();
    for line in header.lines() {
        writeln!(out, "# {line}").unwrap();
    }
    out.push_str("t,re_alpha,im_alpha,abs_alpha,quad_error\n");
    for ((t, a), e) in samples.times.iter().zip(&samples.values).zip(&samples.quad_error) {
        writeln!(out, "{},{},{},{},{}", num(*t), num(a.re), num(a.im), num(a.norm()), num(*e)).unwrap();
    }
    out
}

/// Per-run diagnostics written next to the trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub label: String,
    pub tau1: Option<f64>,
    pub tau2: Option<f64>,
    pub tau1_target: Option<f64>,
    pub max_trace_drift: f64,
    pub max_hermiticity_defect: f64,
    pub min_eigenvalue: f64,
    pub n_samples: usize,
}

impl RunSummary {
    pub fn new(label: &str, traj: &Trajectory, times: &DecayTimes) -> Self {
        Self {
            label: label.to_string(),
            tau1: times.tau1,
            tau2: times.tau2,
            tau1_target: times.tau1_target,
            max_trace_drift: traj.max_trace_drift(),
            max_hermiticity_defect: traj.max_hermiticity_defect(),
            min_eigenvalue: traj.min_eigenvalue(),
            n_samples: traj.len(),
        }
    }
}

/// Record of one scenario run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub label: String,
    pub parameters: serde_json::Value,
    pub eta_cache_hash: Option<String>,
    pub code_version: String,
    pub wall_clock_seconds: f64,
    pub outputs: Vec<PathBuf>,
}

/// Manifest of a preset: one entry per scenario plus shared outputs.
#[derive(Debug, Clone, Serialize)]
pub struct PresetManifest {
    pub preset: String,
    pub code_version: String,
    pub wall_clock_seconds: f64,
    pub runs: Vec<RunManifest>,
    pub outputs: Vec<PathBuf>,
}

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn write_file(path: &Path, contents: &str) -> io::Result<PathBuf> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents)?;
    Ok(path.to_path_buf())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<PathBuf> {
    let text = serde_json::to_string_pretty(value).map_err(io::Error::other)?;
    write_file(path, &(text + "\n"))
}

/// Comparison table of decay times per series.
pub fn decay_table(rows: &[(String, DecayTimes)]) -> String {
    let mut out = String::from("series,tau2,tau1,tau1_target\n");
    for (series, d) in rows {
        writeln!(
            out,
            "{series},{},{},{}",
            opt_num(d.tau2),
            opt_num(d.tau1),
            opt_num(d.tau1_target)
        )
        .unwrap();
    }
    out
}

/// Matplotlib script plotting |rho12| and rho11 for the given trajectory files.
pub fn trajectory_plot_script(title: &str, files: &[String]) -> String {
    let list = files
        .iter()
        .map(|f| format!("    {f:?},"))
        .collect::<Vec<_>>()
        .join("\n");
    format!(
        r##"#!/usr/bin/env python3
# Plots the trajectories written by `qsd preset`; run from this directory.
import numpy as np
import matplotlib.pyplot as plt


def load(name):
    with open(name) as f:
        rows = [line for line in f if not line.startswith("#")]
    return np.genfromtxt(rows, delimiter=",", names=True)


FILES = [
{list}
]

fig, (ax12, ax11) = plt.subplots(1, 2, figsize=(11, 4))
for name in FILES:
    data = load(name)
    label = name.rsplit(".", 1)[0]
    if label.endswith("rho12"):
        ax12.plot(data["t"], data["abs_rho12"], label=label)
    else:
        ax11.plot(data["t"], data["rho11_re"], label=label)
ax12.set_xlabel("t [1/Delta]")
ax12.set_ylabel("|rho12|")
ax11.set_xlabel("t [1/Delta]")
ax11.set_ylabel("rho11")
for ax in (ax12, ax11):
    ax.legend(fontsize=6)
fig.suptitle({title:?})
fig.tight_layout()
fig.savefig({png:?}, dpi=150)
"##,
        png = format!("{title}.png")
    )
}

pub fn response_plot_script(title: &str, files: &[String]) -> String {
    let list = files
        .iter()
        .map(|f| format!("    {f:?},"))
        .collect::<Vec<_>>()
        .join("\n");
    format!(
        r##"#!/usr/bin/env python3
# Plots bath response functions written by `qsd preset fig1`.
import numpy as np
import matplotlib.pyplot as plt


def load(name):
    with open(name) as f:
        rows = [line for line in f if not line.startswith("#")]
    return np.genfromtxt(rows, delimiter=",", names=True)


FILES = [
{list}
]

fig, (ax_re, ax_im) = plt.subplots(1, 2, figsize=(11, 4))
for name in FILES:
    data = load(name)
    scale = abs(data["re_alpha"][0])
    ax_re.plot(data["t"], data["re_alpha"] / scale, label=name)
    ax_im.plot(data["t"], data["im_alpha"] / scale, label=name)
ax_re.set_ylabel("Re alpha(t) / alpha(0)")
ax_im.set_ylabel("Im alpha(t) / alpha(0)")
for ax in (ax_re, ax_im):
    ax.set_xlabel("t [1/Delta]")
    ax.legend(fontsize=7)
fig.suptitle({title:?})
fig.tight_layout()
fig.savefig({png:?}, dpi=150)
"##,
        png = format!("{title}.png")
    )
}
