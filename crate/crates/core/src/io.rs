//! Trajectory CSV and density JSON formats.
//!
//! Trajectories are written as `t,<profile labels...>` with one row per
//! sample and every value in `{:.16e}` (17 significant digits, lossless for
//! `f64`). Densities are JSON objects mapping profile labels to
//! probabilities.

use std::io::{BufRead, Write};

use serde_json::{Map, Value};

use crate::density::Density;
use crate::error::{Error, Result};
use crate::game::Game;
use crate::solver::TrajectorySample;

pub fn write_trajectory_csv<W: Write>(mut out: W, labels: &[String], samples: &[TrajectorySample]) -> Result<()> {
    write!(out, "t")?;
    for label in labels {
        write!(out, ",{label}")?;
    }
    writeln!(out)?;
    for s in samples {
        if s.density.len() != labels.len() {
            return Err(Error::InvalidDensity(format!(
                "sample at t = {} has {} entries, expected {}",
                s.t,
                s.density.len(),
                labels.len()
            )));
        }
        write!(out, "{:.16e}", s.t)?;
        for p in s.density.iter() {
            write!(out, ",{p:.16e}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Parses the trajectory CSV format back into labels and samples.
pub fn read_trajectory_csv<R: BufRead>(input: R) -> Result<(Vec<String>, Vec<TrajectorySample>)> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Schema("empty trajectory file".into()))??;
    let mut columns = header.split(',');
    if columns.next() != Some("t") {
        return Err(Error::Schema("trajectory header must start with `t`".into()));
    }
    let labels: Vec<String> = columns.map(str::to_owned).collect();
    let mut samples = Vec::new();
    for (row, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let values: Vec<f64> = line
            .split(',')
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Schema(format!("row {}: {e}", row + 1)))?;
        if values.len() != labels.len() + 1 {
            return Err(Error::Schema(format!(
                "row {}: {} values, expected {}",
                row + 1,
                values.len(),
                labels.len() + 1
            )));
        }
        samples.push(TrajectorySample {
            t: values[0],
            density: Density::new(values[1..].to_vec())?,
        });
    }
    Ok((labels, samples))
}

/// `{label: probability}` in profile order.
pub fn density_to_json(game: &Game, density: &Density) -> Result<Value> {
    if density.len() != game.size() {
        return Err(Error::InvalidDensity(format!(
            "density has {} entries, game has {} profiles",
            density.len(),
            game.size()
        )));
    }
    let map: Map<String, Value> = game
        .profile_labels()
        .into_iter()
        .zip(density.iter())
        .map(|(label, &p)| (label, Value::from(p)))
        .collect();
    Ok(Value::Object(map))
}

/// Reads a `{label: probability}` object. Profiles that are not listed get
/// probability zero; unknown labels are rejected.
pub fn density_from_json(game: &Game, text: &str) -> Result<Density> {
    let value: Value = serde_json::from_str(text)?;
    let Value::Object(map) = value else {
        return Err(Error::Schema("density must be a JSON object".into()));
    };
    let mut values = vec![0.0; game.size()];
    for (label, p) in map {
        let x = game
            .profile_by_label(&label)
            .ok_or_else(|| Error::Schema(format!("unknown profile label {label:?}")))?;
        values[x] = p
            .as_f64()
            .ok_or_else(|| Error::Schema(format!("probability of {label:?} is not a number")))?;
    }
    Density::new(values)
}
