//! Files written by the commands.

use std::path::{Path, PathBuf};

use serde::Serialize;

use bridge_core::Trajectory;

use crate::config::RunConfig;
use crate::error::Failure;

pub const TIMESERIES_FILE: &str = "timeseries.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PLOT_FILE: &str = "plot_timeseries.py";
pub const RESOLVED_CONFIG_FILE: &str = "resolved.cfg";

/// Collects artifacts under one output directory.
pub struct OutDir {
    root: PathBuf,
    written: Vec<String>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self, Failure> {
        std::fs::create_dir_all(root).map_err(|e| Failure::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf, Failure> {
        let path = self.root.join(name);
        std::fs::write(&path, contents).map_err(|e| Failure::io(&path, e))?;
        self.written.push(name.to_string());
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf, Failure> {
        let mut text = serde_json::to_string_pretty(value).map_err(Failure::config)?;
        text.push('\n');
        self.write(name, &text)
    }

    /// Writes the resolved config and the manifest listing every artifact.
    pub fn finish(mut self, command: &str, argv: &[String], cfg: &RunConfig, seconds: f64) -> Result<(), Failure> {
        self.write(RESOLVED_CONFIG_FILE, &cfg.to_file())?;
        let mut artifacts = self.written.clone();
        artifacts.push(MANIFEST_FILE.to_string());
        let manifest = RunManifest {
            command: command.to_string(),
            argv: argv.to_vec(),
            config: cfg
                .pairs()
                .into_iter()
                .map(|(k, v)| (k, serde_json::Value::String(v)))
                .collect(),
            artifacts,
            duration_s: seconds,
            version: env!("CARGO_PKG_VERSION").to_string(),
        };
        self.write_json(MANIFEST_FILE, &manifest)?;
        Ok(())
    }
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub config: serde_json::Map<String, serde_json::Value>,
    pub artifacts: Vec<String>,
    pub duration_s: f64,
    pub version: String,
}

/// Columns `t_s, wbar_1.., thetabar_1.., energy_J`. Energy is measured from
/// the rest state.
pub fn timeseries_csv(traj: &Trajectory) -> String {
    let nw = traj.config.n_w;
    let nt = traj.config.n_theta;
    let mut out = String::from("t_s");
    for k in 1..=nw {
        out.push_str(&format!(",wbar_{k}"));
    }
    for k in 1..=nt {
        out.push_str(&format!(",thetabar_{k}"));
    }
    out.push_str(",energy_J\n");
    for (i, t) in traj.times.iter().enumerate() {
        out.push_str(&t.to_string());
        for v in traj.w_bar(i).iter().chain(&traj.theta_bar(i)) {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push(',');
        out.push_str(&traj.energy_above_rest[i].to_string());
        out.push('\n');
    }
    out
}

/// Matplotlib script drawing the longitudinal and torsional panels.
pub fn plot_script() -> String {
    format!(
        r#"import sys

import matplotlib.pyplot as plt
import pandas as pd

data = pd.read_csv(sys.argv[1] if len(sys.argv) > 1 else "{TIMESERIES_FILE}")
w = [c for c in data.columns if c.startswith("wbar_")]
th = [c for c in data.columns if c.startswith("thetabar_")]

fig, (top, bottom) = plt.subplots(2, 1, figsize=(10, 7), sharex=True)
for c in w:
    top.plot(data["t_s"], data[c], lw=0.8, label=c.replace("wbar_", "w "))
top.set_ylabel("amplitude [m]")
top.legend(ncol=5, fontsize="small")
for c in th:
    bottom.plot(data["t_s"], data[c], lw=0.8, label=c.replace("thetabar_", "theta "))
bottom.set_ylabel("amplitude [rad]")
bottom.set_xlabel("t [s]")
bottom.legend(ncol=4, fontsize="small")
fig.tight_layout()
fig.savefig(sys.argv[2] if len(sys.argv) > 2 else "timeseries.png", dpi=150)
"#
    )
}
