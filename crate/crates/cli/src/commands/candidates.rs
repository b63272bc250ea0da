//! `viewalign candidates`: export a rig and its assignment candidates.

use crate::util::{load_config, write_text, Meta};
use serde::{Deserialize, Serialize};
use std::path::PathBuf;
use viewalign::geometry::{enumerate_candidates, SetupCase, ViewpointSetup};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CandidatesParams {
    pub setup: String,
    pub theta: f64,
    pub phi: f64,
    pub orientation_trial: usize,
}

impl Default for CandidatesParams {
    fn default() -> Self {
        CandidatesParams {
            setup: "ii".into(),
            theta: 30.0,
            phi: 30.0,
            orientation_trial: 1,
        }
    }
}

#[derive(clap::Args)]
pub struct CandidatesArgs {
    /// JSON parameter file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Rig layout: i (azimuth ring), ii (dodecahedron) or iii (azimuth/elevation grid).
    #[arg(long)]
    setup: Option<String>,
    /// Azimuth interval in degrees (cases i and iii).
    #[arg(long)]
    theta: Option<f64>,
    /// Elevation (case i) or elevation interval (case iii) in degrees.
    #[arg(long)]
    phi: Option<f64>,
    /// Camera-system orientation trial, 1..=11 (1 = unrotated).
    #[arg(long)]
    orientation_trial: Option<usize>,
    /// Output JSON path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn run(args: CandidatesArgs) -> anyhow::Result<()> {
    let mut params: CandidatesParams = match &args.config {
        Some(path) => load_config(path)?,
        None => CandidatesParams::default(),
    };
    super::merge_flags!(params, args, setup, theta, phi, orientation_trial);

    let case: SetupCase = params.setup.parse().map_err(|e: String| anyhow::anyhow!(e))?;
    let setup = ViewpointSetup::build(case, params.theta, params.phi)?
        .orientation_sweep(params.orientation_trial)?;
    let candidates = enumerate_candidates(&setup);

    let mut doc = serde_json::to_value(setup.export(&candidates))?;
    doc["meta"] = serde_json::to_value(Meta::new("candidates", 0, &params))?;
    let text = serde_json::to_string_pretty(&doc)?;
    match &args.out {
        Some(path) => {
            write_text(path, &text)?;
            println!(
                "{}",
                serde_json::json!({ "out": path, "views": setup.view_count(), "candidates": candidates.len() })
            );
        }
        None => println!("{text}"),
    }
    Ok(())
}
