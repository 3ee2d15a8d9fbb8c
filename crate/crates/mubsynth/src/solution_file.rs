//! Versioned solution files.
//!
//! A solution file is a TOML document carrying the device geometry, every
//! phase vector at full precision, the achieved error, and the seed it came
//! from. Floats are written in Rust's shortest round-trip representation, so
//! write → read → write reproduces the file byte for byte. Wall-clock time is
//! deliberately not persisted: the same seed must always produce the same
//! bytes.
//!
//! On read, the achieved error is recomputed from the stored phases and
//! checked against the stored value; a mismatch means the file was edited or
//! truncated and is rejected as corrupt.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::{IoLayerError, Result};
use mubsynth_core::cascade::{DeviceSpec, EomPhases, FbgPhases};
use mubsynth_core::optimize::{SolutionMetadata, SolutionSet};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    format_version: u32,
    device: Device,
    result: Outcome,
    fbg: Vec<FbgEntry>,
    eom: Vec<EomEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Device {
    modes: usize,
    cells: usize,
    dim: usize,
    output_offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Outcome {
    achieved_mse: f64,
    seed: u64,
    iterations: u64,
    restarts: u32,
    best_restart: u32,
    converged: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FbgEntry {
    cell: usize,
    values: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EomEntry {
    cell: usize,
    basis: usize,
    values: Vec<f64>,
}

fn corrupt(reason: impl Into<String>) -> IoLayerError {
    IoLayerError::SolutionFile(reason.into())
}

/// Serialize a solution to the version-1 document.
pub fn to_toml(solution: &SolutionSet) -> String {
    let spec = solution.spec();
    let meta = solution.metadata();
    let document = Document {
        format_version: FORMAT_VERSION,
        device: Device {
            modes: spec.modes(),
            cells: spec.cells(),
            dim: spec.dim(),
            output_offset: spec.output_offset(),
        },
        result: Outcome {
            achieved_mse: solution.achieved_mse(),
            seed: meta.seed,
            iterations: meta.iterations,
            restarts: meta.restarts,
            best_restart: meta.best_restart,
            converged: meta.converged,
        },
        fbg: (0..spec.cells())
            .map(|cell| FbgEntry {
                cell,
                values: solution.fbg()[cell].values().to_vec(),
            })
            .collect(),
        eom: (0..spec.cells())
            .flat_map(|cell| (0..spec.num_bases()).map(move |basis| (cell, basis)))
            .map(|(cell, basis)| EomEntry {
                cell,
                basis,
                values: solution.eom(cell, basis).values().to_vec(),
            })
            .collect(),
    };
    toml::to_string(&document).expect("solution document always serializes")
}

pub fn write(path: &Path, solution: &SolutionSet) -> Result<()> {
    std::fs::write(path, to_toml(solution)).map_err(|e| IoLayerError::Output {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

/// Parse and validate a version-1 document.
pub fn from_toml(text: &str) -> Result<SolutionSet> {
    let document: Document =
        toml::from_str(text).map_err(|e| corrupt(format!("unparseable document: {e}")))?;
    if document.format_version != FORMAT_VERSION {
        return Err(corrupt(format!(
            "format version {} not supported (expected {FORMAT_VERSION})",
            document.format_version
        )));
    }
    let spec = DeviceSpec::new_relaxed(
        document.device.modes,
        document.device.cells,
        document.device.dim,
        document.device.output_offset,
    )
    .map_err(|e| corrupt(e.to_string()))?;

    let mut fbg: Vec<Option<FbgPhases>> = vec![None; spec.cells()];
    for entry in document.fbg {
        let slot = fbg
            .get_mut(entry.cell)
            .ok_or_else(|| corrupt(format!("FBG cell {} out of range", entry.cell)))?;
        if slot.is_some() {
            return Err(corrupt(format!("duplicate FBG cell {}", entry.cell)));
        }
        *slot = Some(FbgPhases::new(entry.values).map_err(|e| corrupt(e.to_string()))?);
    }
    let fbg: Vec<FbgPhases> = fbg
        .into_iter()
        .enumerate()
        .map(|(cell, slot)| slot.ok_or_else(|| corrupt(format!("missing FBG cell {cell}"))))
        .collect::<Result<_>>()?;

    let mut eom: Vec<Vec<Option<EomPhases>>> = vec![vec![None; spec.num_bases()]; spec.cells()];
    for entry in document.eom {
        let slot = eom
            .get_mut(entry.cell)
            .and_then(|row| row.get_mut(entry.basis))
            .ok_or_else(|| {
                corrupt(format!(
                    "EOM entry (cell {}, basis {}) out of range",
                    entry.cell, entry.basis
                ))
            })?;
        if slot.is_some() {
            return Err(corrupt(format!(
                "duplicate EOM entry (cell {}, basis {})",
                entry.cell, entry.basis
            )));
        }
        *slot = Some(EomPhases::new(entry.values).map_err(|e| corrupt(e.to_string()))?);
    }
    let eom: Vec<Vec<EomPhases>> = eom
        .into_iter()
        .enumerate()
        .map(|(cell, row)| {
            row.into_iter()
                .enumerate()
                .map(|(basis, slot)| {
                    slot.ok_or_else(|| corrupt(format!("missing EOM (cell {cell}, basis {basis})")))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;

    let metadata = SolutionMetadata {
        seed: document.result.seed,
        iterations: document.result.iterations,
        restarts: document.result.restarts,
        best_restart: document.result.best_restart,
        converged: document.result.converged,
        wall_time_s: 0.0,
    };
    let solution =
        SolutionSet::new(spec, fbg, eom, metadata).map_err(|e| corrupt(e.to_string()))?;

    // Integrity: the stored error must match the stored phases.
    if (solution.achieved_mse() - document.result.achieved_mse).abs() > 1e-12 {
        return Err(corrupt(format!(
            "achieved_mse {} does not match the stored phases (recomputed {})",
            document.result.achieved_mse,
            solution.achieved_mse()
        )));
    }
    Ok(solution)
}

pub fn read(path: &Path) -> Result<SolutionSet> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| corrupt(format!("cannot read {}: {e}", path.display())))?;
    from_toml(&text)
}
