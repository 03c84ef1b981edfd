//! JSON documents and CSV learning curves on disk.

use std::fs::{self, File};
use std::path::{Path, PathBuf};

use fsc_core::curve::CurvePoint;
use fsc_core::graph::{GraphDocument, PolicyGraph};
use fsc_core::pomdp::{PomdpDocument, TabularPomdp};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::HarnessError;

pub const CURVE_HEADER: &str = "trial,ticks,performance,gamma,alpha,seed";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), HarnessError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn create_dir(path: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

pub fn load_model(path: &Path) -> Result<TabularPomdp, HarnessError> {
    Ok(TabularPomdp::try_from(read_json::<PomdpDocument>(path)?)?)
}

pub fn load_graph(path: &Path) -> Result<PolicyGraph, HarnessError> {
    Ok(PolicyGraph::try_from(read_json::<GraphDocument>(path)?)?)
}

pub fn save_graph(path: &Path, graph: &PolicyGraph) -> Result<(), HarnessError> {
    write_json(path, &GraphDocument::from(graph))
}

#[derive(Serialize, Deserialize)]
struct CurveRow {
    trial: u64,
    ticks: u64,
    performance: f64,
    gamma: f64,
    alpha: f64,
    seed: u64,
}

impl From<&CurvePoint> for CurveRow {
    fn from(p: &CurvePoint) -> Self {
        Self {
            trial: p.trial,
            ticks: p.ticks,
            performance: p.performance,
            gamma: p.gamma,
            alpha: p.alpha,
            seed: p.seed,
        }
    }
}

/// Learning-curve CSV that is flushed after every row, so an interrupted
/// run still leaves a readable prefix.
pub struct CurveWriter {
    path: PathBuf,
    inner: csv::Writer<File>,
}

impl CurveWriter {
    pub fn create(path: &Path) -> Result<Self, HarnessError> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut writer = Self {
            path: path.to_path_buf(),
            inner: csv::WriterBuilder::new().has_headers(false).from_writer(file),
        };
        let header = writer.inner.write_record(CURVE_HEADER.split(','));
        writer.finish_row(header)?;
        Ok(writer)
    }

    pub fn write(&mut self, point: &CurvePoint) -> Result<(), HarnessError> {
        let row = self.inner.serialize(CurveRow::from(point));
        self.finish_row(row)
    }

    fn finish_row(&mut self, written: csv::Result<()>) -> Result<(), HarnessError> {
        written
            .and_then(|_| self.inner.flush().map_err(csv::Error::from))
            .map_err(|source| HarnessError::Csv {
                path: self.path.clone(),
                source,
            })
    }
}

/// Reads a curve written by [`CurveWriter`].
pub fn read_curve(path: &Path) -> Result<Vec<CurvePoint>, HarnessError> {
    let csv_err = |source| HarnessError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::Reader::from_path(path).map_err(csv_err)?;
    let mut points = Vec::new();
    for row in reader.deserialize::<CurveRow>() {
        let r = row.map_err(csv_err)?;
        points.push(CurvePoint {
            trial: r.trial,
            ticks: r.ticks,
            performance: r.performance,
            gamma: r.gamma,
            alpha: r.alpha,
            seed: r.seed,
        });
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn curve_round_trip_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        let mut w = CurveWriter::create(&path).unwrap();
        let p = CurvePoint {
            trial: 3,
            ticks: 40,
            performance: 0.1 + 0.2,
            gamma: 0.9,
            alpha: 1e-3,
            seed: u64::MAX,
        };
        w.write(&p).unwrap();
        // Flushed without dropping the writer.
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with(CURVE_HEADER));
        assert_eq!(text.lines().count(), 2);
        assert_eq!(read_curve(&path).unwrap(), vec![p]);
    }

    #[test]
    fn bad_model_names_the_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        fs::write(&path, "{\"n_states\": 1}").unwrap();
        let msg = load_model(&path).unwrap_err().to_string();
        assert!(msg.contains("m.json"), "{msg}");
    }
}
