//! CSV and manifest I/O.
//!
//! Score CSV: header `sample_id,<class_0>,...`, one row per sample, `.`
//! decimal point. Label CSV: same header with 0/1 entries. Manifest JSON:
//! `{ "mode": "single"|"multi", "labels": "<path>", "streams": [{"id", "path"}] }`
//! with paths resolved relative to the manifest's directory.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Dataset, LabelMatrix, LabelMode, ScoreMatrix};

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

struct CsvTable {
    class_names: Vec<String>,
    sample_ids: Vec<String>,
    cells: Vec<Vec<String>>,
    first_data_line: Vec<u64>,
}

fn read_table(path: &Path) -> Result<CsvTable> {
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    if headers.len() < 2 {
        return Err(parse_err(path, 1, "expected header sample_id,<class_0>,..."));
    }
    if &headers[0] != "sample_id" {
        return Err(parse_err(
            path,
            1,
            format!("first header column must be sample_id, found {:?}", &headers[0]),
        ));
    }
    let class_names: Vec<String> = headers.iter().skip(1).map(|s| s.to_string()).collect();

    let mut sample_ids = Vec::new();
    let mut cells = Vec::new();
    let mut lines = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths { pos, .. } => parse_err(
                path,
                pos.as_ref().map(|p| p.line()).unwrap_or(0),
                "ragged row: field count differs from header",
            ),
            _ => parse_err(path, 0, e.to_string()),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != headers.len() {
            return Err(parse_err(path, line, "ragged row: field count differs from header"));
        }
        sample_ids.push(record[0].to_string());
        cells.push(record.iter().skip(1).map(|s| s.to_string()).collect());
        lines.push(line);
    }
    Ok(CsvTable {
        class_names,
        sample_ids,
        cells,
        first_data_line: lines,
    })
}

/// Loads and validates a stream's score CSV.
///
/// The stream id is the file stem; callers may override it afterwards.
pub fn load_scores(path: &Path, expected_classes: Option<usize>) -> Result<ScoreMatrix> {
    let table = read_table(path)?;
    let c = table.class_names.len();
    if let Some(expected) = expected_classes {
        if c != expected {
            return Err(parse_err(
                path,
                1,
                format!("class-count mismatch: file has {c} score columns, expected {expected}"),
            ));
        }
    }
    let n = table.sample_ids.len();
    let mut scores = Array2::<f64>::zeros((n, c));
    for (i, row) in table.cells.iter().enumerate() {
        let line = table.first_data_line[i];
        for (j, cell) in row.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(path, line, format!("non-numeric cell {cell:?}")))?;
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(parse_err(path, line, format!("score out of range [0,1]: {cell}")));
            }
            scores[[i, j]] = v;
        }
    }
    let stream_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "stream".to_string());
    ScoreMatrix::new(stream_id, scores, table.sample_ids)
}

/// Writes a score CSV; floats use the shortest round-trip formatting, so a
/// load/save cycle preserves values exactly.
pub fn save_scores(path: &Path, scores: &ScoreMatrix, class_names: &[String]) -> Result<()> {
    if class_names.len() != scores.n_classes() {
        return Err(Error::shape(format!(
            "{} class names for {} score columns",
            class_names.len(),
            scores.n_classes()
        )));
    }
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut wtr = csv::Writer::from_writer(file);
    let mut header = vec!["sample_id".to_string()];
    header.extend_from_slice(class_names);
    wtr.write_record(&header).map_err(|e| parse_err(path, 0, e.to_string()))?;
    for (i, id) in scores.sample_ids.iter().enumerate() {
        let mut record = vec![id.clone()];
        record.extend(scores.scores.row(i).iter().map(|v| format!("{v}")));
        wtr.write_record(&record).map_err(|e| parse_err(path, 0, e.to_string()))?;
    }
    wtr.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// Loads a label CSV, returning the matrix and its sample ids.
pub fn load_labels(path: &Path) -> Result<(LabelMatrix, Vec<String>)> {
    let table = read_table(path)?;
    let c = table.class_names.len();
    let n = table.sample_ids.len();
    let mut labels = Array2::<u8>::zeros((n, c));
    for (i, row) in table.cells.iter().enumerate() {
        let line = table.first_data_line[i];
        for (j, cell) in row.iter().enumerate() {
            labels[[i, j]] = match cell.as_str() {
                "0" => 0,
                "1" => 1,
                other => {
                    return Err(parse_err(path, line, format!("label entries must be 0 or 1, found {other:?}")))
                }
            };
        }
    }
    Ok((LabelMatrix::new(labels, table.class_names)?, table.sample_ids))
}

pub fn save_labels(path: &Path, labels: &LabelMatrix, sample_ids: &[String]) -> Result<()> {
    if sample_ids.len() != labels.n_samples() {
        return Err(Error::shape(format!(
            "{} sample ids for {} label rows",
            sample_ids.len(),
            labels.n_samples()
        )));
    }
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut wtr = csv::Writer::from_writer(file);
    let mut header = vec!["sample_id".to_string()];
    header.extend_from_slice(&labels.class_names);
    wtr.write_record(&header).map_err(|e| parse_err(path, 0, e.to_string()))?;
    for (i, id) in sample_ids.iter().enumerate() {
        let mut record = vec![id.clone()];
        record.extend(labels.labels.row(i).iter().map(|v| v.to_string()));
        wtr.write_record(&record).map_err(|e| parse_err(path, 0, e.to_string()))?;
    }
    wtr.flush().map_err(|e| io_err(path, e))?;
    Ok(())
}

/// One stream entry of a dataset manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StreamEntry {
    pub id: String,
    pub path: String,
}

/// Dataset manifest: label mode, label CSV path, and the stream list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub mode: LabelMode,
    pub labels: String,
    pub streams: Vec<StreamEntry>,
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.line() as u64, e.to_string()))
}

pub fn save_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Loads the full dataset a manifest describes, validating that every
/// stream and the label file agree on sample ids.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = load_manifest(manifest_path)?;
    let base: PathBuf = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();

    let (labels, label_ids) = load_labels(&base.join(&manifest.labels))?;
    let expected_classes = labels.n_classes();

    if manifest.streams.is_empty() {
        return Err(Error::invalid(format!(
            "manifest {} lists no streams",
            manifest_path.display()
        )));
    }
    let mut streams = Vec::with_capacity(manifest.streams.len());
    for entry in &manifest.streams {
        let mut stream = load_scores(&base.join(&entry.path), Some(expected_classes))?;
        stream.stream_id = entry.id.clone();
        if stream.sample_ids != label_ids {
            return Err(Error::invalid(format!(
                "stream {} sample ids do not match the label file",
                entry.id
            )));
        }
        streams.push(stream);
    }
    Dataset::new(streams, labels, manifest.mode)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_temp(content: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scores.csv");
        std::fs::write(&path, content).unwrap();
        (dir, path)
    }

    #[test]
    fn loads_simple_score_csv() {
        let (_dir, path) = write_temp("sample_id,c0,c1\na,0.9,0.1\nb,0.2,0.8\n");
        let sm = load_scores(&path, None).unwrap();
        assert_eq!(sm.n_samples(), 2);
        assert_eq!(sm.n_classes(), 2);
        assert_eq!(sm.scores[[0, 0]], 0.9);
        assert_eq!(sm.scores[[1, 1]], 0.8);
        assert_eq!(sm.sample_ids, vec!["a", "b"]);
    }

    #[test]
    fn rejects_out_of_range_cell() {
        let (_dir, path) = write_temp("sample_id,c0,c1\na,1.2,0.1\n");
        let err = load_scores(&path, None).unwrap_err();
        assert!(err.to_string().contains("score out of range"));
    }

    #[test]
    fn rejects_class_count_mismatch() {
        let (_dir, path) = write_temp("sample_id,c0,c1,c2\na,0.1,0.2,0.7\n");
        let err = load_scores(&path, Some(2)).unwrap_err();
        assert!(err.to_string().contains("class-count mismatch"));
    }

    #[test]
    fn rejects_non_numeric_cell() {
        let (_dir, path) = write_temp("sample_id,c0,c1\na,zero,0.1\n");
        let err = load_scores(&path, None).unwrap_err();
        assert!(err.to_string().contains("non-numeric"));
    }

    #[test]
    fn rejects_ragged_rows() {
        let (_dir, path) = write_temp("sample_id,c0,c1\na,0.5\n");
        let err = load_scores(&path, None).unwrap_err();
        assert!(err.to_string().contains("ragged"));
    }

    #[test]
    fn missing_file_is_io_error() {
        let err = load_scores(Path::new("/nonexistent/scores.csv"), None).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }

    #[test]
    fn save_load_round_trip_is_exact() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let scores = Array2::from_shape_fn((7, 3), |_| rng.gen::<f64>());
        let ids = (0..7).map(|i| format!("s{i}")).collect();
        let sm = ScoreMatrix::new("x", scores, ids).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.csv");
        let names: Vec<String> = (0..3).map(|c| format!("c{c}")).collect();
        save_scores(&path, &sm, &names).unwrap();
        let back = load_scores(&path, Some(3)).unwrap();
        assert_eq!(back.scores, sm.scores);
        assert_eq!(back.sample_ids, sm.sample_ids);
    }

    #[test]
    fn label_round_trip_and_validation() {
        let (_dir, path) = write_temp("sample_id,c0,c1\na,1,0\nb,0,1\n");
        let (labels, ids) = load_labels(&path).unwrap();
        assert!(labels.is_single_label());
        assert_eq!(ids, vec!["a", "b"]);

        let (_dir2, bad) = write_temp("sample_id,c0,c1\na,2,0\n");
        assert!(load_labels(&bad).is_err());
    }

    #[test]
    fn manifest_round_trip_loads_dataset() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("labels.csv"), "sample_id,c0,c1\na,1,0\nb,0,1\n").unwrap();
        std::fs::write(dir.path().join("s0.csv"), "sample_id,c0,c1\na,0.9,0.1\nb,0.2,0.8\n").unwrap();
        let manifest = DatasetManifest {
            mode: LabelMode::Single,
            labels: "labels.csv".into(),
            streams: vec![StreamEntry {
                id: "spatial".into(),
                path: "s0.csv".into(),
            }],
        };
        let mpath = dir.path().join("train.json");
        save_manifest(&mpath, &manifest).unwrap();
        let ds = load_dataset(&mpath).unwrap();
        assert_eq!(ds.n_streams(), 1);
        assert_eq!(ds.streams[0].stream_id, "spatial");
        assert_eq!(ds.n_samples(), 2);
    }
}
