//! Self-describing JSON dump of [`PosteriorDraws`].

use super::{ChainStats, PosteriorDraws};
use crate::json::{floats, reals, Real};
use crate::model::Layout;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

pub const SCHEMA: &str = "ppsynth.draws/1";

#[derive(Debug, Serialize, Deserialize)]
struct DrawsFile {
    schema: String,
    layout: Layout,
    coordinates: Vec<String>,
    draws: Vec<Vec<Vec<Real>>>,
    energy: Vec<Vec<Real>>,
    divergent: Vec<Vec<bool>>,
    pointwise_loglik: Vec<Vec<Vec<Real>>>,
    #[serde(default)]
    stats: Vec<ChainStats>,
}

#[derive(Debug, Error)]
pub enum DumpError {
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("unsupported draws schema `{0}`")]
    Schema(String),
    #[error("inconsistent draws file: {0}")]
    Shape(String),
}

fn nest(v: &[Vec<Vec<f64>>]) -> Vec<Vec<Vec<Real>>> {
    v.iter().map(|c| c.iter().map(|r| reals(r)).collect()).collect()
}

fn unnest(v: &[Vec<Vec<Real>>]) -> Vec<Vec<Vec<f64>>> {
    v.iter().map(|c| c.iter().map(|r| floats(r)).collect()).collect()
}

pub fn write_draws<W: Write>(draws: &PosteriorDraws, w: W) -> Result<(), DumpError> {
    let file = DrawsFile {
        schema: SCHEMA.into(),
        layout: draws.layout.clone(),
        coordinates: draws.coordinates.clone(),
        draws: nest(&draws.draws),
        energy: draws.energy.iter().map(|e| reals(e)).collect(),
        divergent: draws.divergent.clone(),
        pointwise_loglik: nest(&draws.pointwise_loglik),
        stats: draws.stats.clone(),
    };
    serde_json::to_writer(w, &file)?;
    Ok(())
}

pub fn read_draws<R: Read>(r: R) -> Result<PosteriorDraws, DumpError> {
    let f: DrawsFile = serde_json::from_reader(r)?;
    if f.schema != SCHEMA {
        return Err(DumpError::Schema(f.schema));
    }
    let chains = f.draws.len();
    if f.energy.len() != chains || f.divergent.len() != chains || f.pointwise_loglik.len() != chains {
        return Err(DumpError::Shape("chain counts differ between fields".into()));
    }
    let n = f.draws.first().map_or(0, Vec::len);
    for c in 0..chains {
        if f.draws[c].len() != n
            || f.energy[c].len() != n
            || f.divergent[c].len() != n
            || f.pointwise_loglik[c].len() != n
        {
            return Err(DumpError::Shape(format!("chain {c} has the wrong number of iterations")));
        }
        if f.draws[c].iter().any(|d| d.len() != f.coordinates.len()) {
            return Err(DumpError::Shape(format!("chain {c} has a draw of the wrong width")));
        }
    }
    Ok(PosteriorDraws {
        layout: f.layout,
        coordinates: f.coordinates,
        draws: unnest(&f.draws),
        energy: f.energy.iter().map(|e| floats(e)).collect(),
        divergent: f.divergent,
        pointwise_loglik: unnest(&f.pointwise_loglik),
        stats: f.stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{LayoutEntry, Transform};

    fn sample() -> PosteriorDraws {
        PosteriorDraws {
            layout: Layout {
                entries: vec![LayoutEntry {
                    name: "s".into(),
                    offset: 0,
                    len: 1,
                    vector: false,
                    transform: Transform::Log,
                }],
            },
            coordinates: vec!["s".into()],
            draws: vec![vec![vec![1.0], vec![2.0]], vec![vec![0.5], vec![0.25]]],
            energy: vec![vec![1.0, 2.0], vec![3.0, 4.0]],
            divergent: vec![vec![false, true], vec![false, false]],
            pointwise_loglik: vec![vec![vec![-1.0], vec![f64::NEG_INFINITY]], vec![vec![-2.0], vec![-3.0]]],
            stats: vec![],
        }
    }

    #[test]
    fn round_trip_keeps_non_finite() {
        let d = sample();
        let mut buf = Vec::new();
        write_draws(&d, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"-inf\""));
        assert!(text.starts_with("{\"schema\":\"ppsynth.draws/1\""));
        assert_eq!(read_draws(&buf[..]).unwrap(), d);
    }

    #[test]
    fn rejects_bad_files() {
        let mut buf = Vec::new();
        write_draws(&sample(), &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let other = text.replace("ppsynth.draws/1", "other/9");
        assert!(matches!(read_draws(other.as_bytes()), Err(DumpError::Schema(_))));
        let short = text.replace("[true,false]", "[true]").replace("[false,true]", "[false]");
        assert!(matches!(read_draws(short.as_bytes()), Err(DumpError::Shape(_))));
        assert!(matches!(read_draws(&b"{"[..]), Err(DumpError::Json(_))));
    }
}
