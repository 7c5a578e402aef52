//! `--bob`/`--willie` arguments: `bsc:p`, `bac:a,b`, `noiseless`, or a file
//! holding two whitespace-separated probability rows (`#` starts a comment).

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use mlcppm::Dmc;

pub fn parse_channel(spec: &str) -> Result<Dmc> {
    let spec = spec.trim();
    if spec == "noiseless" {
        return Ok(Dmc::new(vec![1.0, 0.0], vec![0.0, 1.0])?);
    }
    if let Some(p) = spec.strip_prefix("bsc:") {
        return Ok(Dmc::bsc(number(p)?)?);
    }
    if let Some(rest) = spec.strip_prefix("bac:") {
        let Some((a, b)) = rest.split_once(',') else {
            bail!("bac needs two flip probabilities, got {spec:?}");
        };
        return Ok(Dmc::bac(number(a)?, number(b)?)?);
    }
    let path = Path::new(spec);
    let text = fs::read_to_string(path).with_context(|| format!("reading channel file {}", path.display()))?;
    parse_channel_text(&text).with_context(|| format!("invalid channel file {}", path.display()))
}

pub fn parse_channel_text(text: &str) -> Result<Dmc> {
    let rows: Vec<Vec<f64>> = text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(|l| l.split_whitespace().map(number).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let [row0, row1]: [Vec<f64>; 2] = rows
        .try_into()
        .map_err(|r: Vec<Vec<f64>>| anyhow::anyhow!("expected 2 probability rows, found {}", r.len()))?;
    Ok(Dmc::new(row0, row1)?)
}

fn number(s: &str) -> Result<f64> {
    s.trim().parse().with_context(|| format!("not a number: {s:?}"))
}
