//! `bounds`: evaluate one analytic bound, optionally tabulated over a grid of
//! horizons.

use anyhow::{anyhow, bail, Result};
use serde::Serialize;
use stablab_core::bounds::{self, BoundId, BoundReport};

use super::{Invocation, Outcome};
use crate::config::{BoundsSection, ExperimentConfig};
use crate::io;

#[derive(Serialize)]
struct Summary<'a> {
    command: &'static str,
    config: &'a ExperimentConfig,
    reports: &'a [BoundReport],
    timestamp: u64,
}

/// Evaluates the configured bound; one report per grid horizon (or a single
/// report without a grid).
pub fn compute(section: &BoundsSection) -> Result<(BoundId, Vec<BoundReport>)> {
    let id: BoundId = section.id.parse().map_err(|e| anyhow!("{e}"))?;
    let reports = match &section.t_grid {
        None => vec![bounds::evaluate(id, &section.inputs)?],
        Some(grid) => {
            if grid.is_empty() {
                bail!("\"T_grid\" must be non-empty");
            }
            if !id.has_horizon() {
                bail!("bound {} has no horizon to tabulate over", id.as_str());
            }
            grid.iter()
                .map(|t| {
                    let mut inputs = section.inputs.clone();
                    inputs.insert("T".into(), *t);
                    Ok(bounds::evaluate(id, &inputs)?)
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok((id, reports))
}

/// Rows of the tabulated CSV: `T`, `value`, then each named term.
pub fn csv_table(reports: &[BoundReport]) -> (Vec<String>, Vec<Vec<String>>) {
    let mut header = vec!["T".to_string(), "value".to_string()];
    if let Some(first) = reports.first() {
        header.extend(first.terms.keys().cloned());
    }
    let rows = reports
        .iter()
        .map(|r| {
            let mut row = vec![io::opt_num(r.inputs.get("T").copied()), io::num(r.value)];
            row.extend(header[2..].iter().map(|k| io::opt_num(r.terms.get(k).copied())));
            row
        })
        .collect();
    (header, rows)
}

/// With no output prefix the reports go to stdout as JSON.
pub fn run(inv: &Invocation, to_stdout: bool) -> Result<Outcome> {
    let section = inv.config.bounds.as_ref().ok_or_else(|| anyhow!("no bound selected: pass an ID or a \"bounds\" config section"))?;
    let (_, reports) = compute(section)?;
    let mut out = Outcome::default();
    for r in &reports {
        for v in r.validity.iter().filter(|v| !v.satisfied) {
            out.violations.push(format!("{} at T = {}: condition {} not met", r.bound_id.as_str(), io::opt_num(r.inputs.get("T").copied()), v.condition));
        }
    }
    if to_stdout {
        println!("{}", serde_json::to_string_pretty(&reports)?);
        return Ok(out);
    }
    if section.t_grid.is_some() {
        let (header, rows) = csv_table(&reports);
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let path = io::output_path(&inv.prefix, ".bounds.csv");
        io::write_csv(&path, &header, rows)?;
        out.files.push(path);
    }
    let path = io::output_path(&inv.prefix, ".bounds.json");
    io::write_json(&path, &Summary { command: "bounds", config: &inv.config, reports: &reports, timestamp: io::timestamp() })?;
    out.files.push(path);
    Ok(out)
}
