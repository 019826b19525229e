use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bsde::solve_reflected;
use crate::error::{Error, Result};
use crate::harness::config::ExperimentConfig;
use crate::harness::cross::{cross_validate, solve_config_pde};
use crate::sde::{simulate_with_options, TimeGrid};

/// One produced file with its content digest.
#[derive(Debug, Clone, Serialize)]
pub struct ManifestEntry {
    pub file: String,
    pub sha256: String,
}

/// Reproduction record of a scenario run. Re-running the same config with
/// the same toolchain must reproduce every digest bit for bit.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub scenario: String,
    pub config_sha256: String,
    pub seed: u64,
    pub version: String,
    pub outputs: Vec<ManifestEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn write_artifact(
    dir: &Path,
    name: &str,
    bytes: &[u8],
    outputs: &mut Vec<ManifestEntry>,
) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| Error::file(&path, e))?;
    outputs.push(ManifestEntry {
        file: name.to_string(),
        sha256: sha256_hex(bytes),
    });
    Ok(())
}

fn to_pretty<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

/// Runs the scenario end to end and writes its artifact directory.
///
/// Validation happens before any output exists. The directory receives the
/// echoed config, the simulation solve (summary JSON plus per-step CSV),
/// the grid solve when a grid is configured, the probe comparison when
/// probes are configured, and finally `manifest.json` with the config hash
/// and the digest of every other file. All content is a pure function of
/// the config, so identical configs produce identical directories.
pub fn run_scenario(config: &ExperimentConfig) -> Result<PathBuf> {
    let resolved = config.resolve()?;
    let config_bytes = to_pretty(config)?;

    let dir = PathBuf::from(
        config
            .out_dir
            .clone()
            .unwrap_or_else(|| format!("runs/{}", config.scenario)),
    );
    fs::create_dir_all(&dir).map_err(|e| Error::file(&dir, e))?;
    let mut outputs = Vec::new();
    write_artifact(&dir, "scenario.json", &config_bytes, &mut outputs)?;

    let base = config.numerics.estimate_config()?;
    let start = resolved.start()?;
    let grid = TimeGrid::new(0.0, resolved.horizon, base.steps)?;
    let bundle = simulate_with_options(
        &resolved.profile,
        start,
        &grid,
        base.paths,
        base.seed,
        base.allow_nonconcave,
    )?;
    let mc = solve_reflected(&bundle, &resolved.profile, &resolved.spec, &base.options)?;
    write_artifact(&dir, "mc.json", &to_pretty(&mc)?, &mut outputs)?;
    let mut steps_csv = Vec::new();
    mc.write_step_csv(&mut steps_csv)?;
    write_artifact(&dir, "mc_steps.csv", &steps_csv, &mut outputs)?;

    if config.numerics.grid.is_some() {
        let surface = solve_config_pde(config, false)?;
        let mut values_csv = Vec::new();
        surface.write_csv(&mut values_csv)?;
        write_artifact(&dir, "pde_values.csv", &values_csv, &mut outputs)?;
        #[derive(Serialize)]
        struct PdeSummary {
            complementarity_max: f64,
            boundary_residual_max: f64,
            total_sweeps: usize,
            nodes: usize,
        }
        let summary = PdeSummary {
            complementarity_max: surface.complementarity_max(),
            boundary_residual_max: crate::pde::boundary_residual(&surface).max,
            total_sweeps: surface.total_sweeps,
            nodes: surface.grid.nodes(),
        };
        write_artifact(&dir, "pde.json", &to_pretty(&summary)?, &mut outputs)?;

        if !config.probes.is_empty() {
            let report = cross_validate(config)?;
            write_artifact(&dir, "cross.json", &to_pretty(&report)?, &mut outputs)?;
            let mut cross_csv = Vec::new();
            report.write_csv(&mut cross_csv)?;
            write_artifact(&dir, "cross.csv", &cross_csv, &mut outputs)?;
        }
    }

    let manifest = Manifest {
        scenario: config.scenario.clone(),
        config_sha256: sha256_hex(&config_bytes),
        seed: config.numerics.seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
        outputs,
    };
    write_artifact(&dir, "manifest.json", &to_pretty(&manifest)?, &mut Vec::new())?;
    Ok(dir)
}
