//! OpenFace CSV ingestion.
//!
//! Column choice lives in a plain-text manifest (one name per line, `#`
//! comments, optional `# expected_dim = N` directive) so it can be edited
//! to match whichever OpenFace build produced the CSVs.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use crate::error::{Error, Result};

const FEATURES_MANIFEST: &str = include_str!("../manifests/openface_features.txt");
const FULL_ROW_MANIFEST: &str = include_str!("../manifests/openface_full_row.txt");

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSelection {
    include_columns: Vec<String>,
    expected_dim: usize,
}

impl ColumnSelection {
    pub fn new(include_columns: Vec<String>) -> Result<Self> {
        let mut seen = HashSet::new();
        for c in &include_columns {
            if !seen.insert(c.as_str()) {
                return Err(Error::Schema(format!("column '{c}' selected twice")));
            }
        }
        if include_columns.is_empty() {
            return Err(Error::Schema("column selection is empty".into()));
        }
        let expected_dim = include_columns.len();
        Ok(Self {
            include_columns,
            expected_dim,
        })
    }

    pub fn parse_manifest(text: &str) -> Result<Self> {
        let mut declared = None;
        let mut cols = Vec::new();
        for line in text.lines() {
            let line = line.trim();
            if let Some(comment) = line.strip_prefix('#') {
                if let Some(v) = comment.trim().strip_prefix("expected_dim") {
                    let v = v.trim_start_matches([' ', '=', ':']).trim();
                    declared = Some(v.parse::<usize>().map_err(|_| {
                        Error::Format(format!("bad expected_dim directive '{line}'"))
                    })?);
                }
                continue;
            }
            if !line.is_empty() {
                cols.push(line.to_string());
            }
        }
        let sel = Self::new(cols)?;
        match declared {
            Some(d) if d != sel.expected_dim => Err(Error::Schema(format!(
                "manifest declares expected_dim {d} but lists {} columns",
                sel.expected_dim
            ))),
            _ => Ok(sel),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_manifest(&text)
    }

    pub fn columns(&self) -> &[String] {
        &self.include_columns
    }

    pub fn expected_dim(&self) -> usize {
        self.expected_dim
    }
}

/// Gaze, eye landmarks, head pose, 2D/3D landmarks, shape parameters and AU
/// intensity/presence columns of an OpenFace 2.x row (709 values).
pub fn default_selection() -> ColumnSelection {
    ColumnSelection::parse_manifest(FEATURES_MANIFEST).expect("shipped manifest is valid")
}

/// Every column of an OpenFace 2.x row including frame/face_id/timestamp/
/// confidence/success: 714 values.
pub fn full_row_selection() -> ColumnSelection {
    ColumnSelection::parse_manifest(FULL_ROW_MANIFEST).expect("shipped manifest is valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoFrameFeatures {
    /// As emitted in the `frame` column (1-based), or row position + 1.
    pub frame_index: usize,
    pub features: Vec<f32>,
    pub valid: bool,
    pub confidence: f32,
}

pub fn parse_openface_csv(
    path: impl AsRef<Path>,
    selection: &ColumnSelection,
) -> Result<Vec<VideoFrameFeatures>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_openface_reader(file, selection)
}

pub fn parse_openface_reader<R: std::io::Read>(
    reader: R,
    selection: &ColumnSelection,
) -> Result<Vec<VideoFrameFeatures>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Format(format!("CSV header: {e}")))?
        .clone();
    let index: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h, i)).collect();
    let selected: Vec<usize> = selection
        .columns()
        .iter()
        .map(|c| {
            index
                .get(c.as_str())
                .copied()
                .ok_or_else(|| Error::Schema(format!("column '{c}' not present in CSV header")))
        })
        .collect::<Result<_>>()?;
    let frame_col = index.get("frame").copied();
    let success_col = index.get("success").copied();
    let confidence_col = index.get("confidence").copied();

    let mut out = Vec::new();
    for (row_no, record) in rdr.records().enumerate() {
        let row = row_no + 1;
        let record = record.map_err(|e| Error::Format(format!("CSV row {row}: {e}")))?;
        let cell = |col: usize| -> Result<f64> {
            let raw = record.get(col).unwrap_or("");
            raw.parse::<f64>().map_err(|_| Error::Parse {
                row,
                column: headers.get(col).unwrap_or("?").to_string(),
                message: format!("'{raw}' is not numeric"),
            })
        };
        let frame_index = match frame_col {
            Some(c) => cell(c)? as usize,
            None => row,
        };
        let valid = match success_col {
            Some(c) => cell(c)? != 0.0,
            None => true,
        };
        let confidence = match confidence_col {
            Some(c) => cell(c)? as f32,
            None => 1.0,
        };
        let features = if valid {
            selected
                .iter()
                .map(|&c| cell(c).map(|v| v as f32))
                .collect::<Result<Vec<_>>>()?
        } else {
            vec![0.0; selected.len()]
        };
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parse {
                row,
                column: "?".into(),
                message: "non-finite feature value".into(),
            });
        }
        out.push(VideoFrameFeatures {
            frame_index,
            features,
            valid,
            confidence,
        });
    }
    out.sort_by_key(|f| f.frame_index);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = include_str!("../tests/fixtures/openface_header.csv");

    fn csv_with_rows(rows: &[(usize, u8)]) -> String {
        let n_cols = HEADER.split(',').count();
        let mut s = HEADER.to_string();
        for &(frame, success) in rows {
            let mut vals = vec![
                frame.to_string(),
                "0".into(),
                format!("{:.3}", frame as f64 / 30.0),
                "0.98".into(),
                success.to_string(),
            ];
            vals.extend((5..n_cols).map(|i| format!("{}", (i * frame) as f64 * 0.5)));
            s.push_str(&vals.join(", "));
            s.push('\n');
        }
        s
    }

    #[test]
    fn full_row_selection_is_714_wide() {
        let sel = full_row_selection();
        assert_eq!(sel.expected_dim(), 714);
        let csv = csv_with_rows(&[(1, 1), (2, 1), (3, 1)]);
        let frames = parse_openface_reader(csv.as_bytes(), &sel).unwrap();
        assert_eq!(frames.len(), 3);
        assert!(frames.iter().all(|f| f.features.len() == 714 && f.valid));
    }

    #[test]
    fn default_selection_matches_header_names() {
        let sel = default_selection();
        assert_eq!(sel.expected_dim(), sel.columns().len());
        let header: HashSet<&str> = HEADER.trim().split(',').map(str::trim).collect();
        assert!(sel.columns().iter().all(|c| header.contains(c.as_str())));
        assert!(sel.columns().iter().any(|c| c == "pose_Rx"));
        assert!(sel.columns().iter().any(|c| c == "AU01_r"));
        let uniq: HashSet<_> = sel.columns().iter().collect();
        assert_eq!(uniq.len(), sel.columns().len());
    }

    #[test]
    fn failed_detection_is_zero_filled() {
        let csv = csv_with_rows(&[(1, 1), (2, 0)]);
        let frames = parse_openface_reader(csv.as_bytes(), &default_selection()).unwrap();
        assert!(!frames[1].valid);
        assert!(frames[1].features.iter().all(|&v| v == 0.0));
        assert!(frames[0].features.iter().any(|&v| v != 0.0));
    }

    #[test]
    fn rows_sorted_by_frame_index() {
        let csv = csv_with_rows(&[(3, 1), (1, 1), (2, 1)]);
        let frames = parse_openface_reader(csv.as_bytes(), &default_selection()).unwrap();
        let idx: Vec<usize> = frames.iter().map(|f| f.frame_index).collect();
        assert_eq!(idx, vec![1, 2, 3]);
    }

    #[test]
    fn absent_column_is_schema_error() {
        let sel = ColumnSelection::new(vec!["pose_Rx".into(), "AU99_r".into()]).unwrap();
        let err = parse_openface_reader(csv_with_rows(&[(1, 1)]).as_bytes(), &sel).unwrap_err();
        assert_eq!(err.category(), "schema");
        assert!(err.to_string().contains("AU99_r"));
    }

    #[test]
    fn non_numeric_cell_reports_row_and_column() {
        let csv = "frame, success, AU01_r\n1, 1, 0.5\n2, 1, abc\n";
        let sel = ColumnSelection::new(vec!["AU01_r".into()]).unwrap();
        match parse_openface_reader(csv.as_bytes(), &sel).unwrap_err() {
            Error::Parse { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "AU01_r");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn manifest_parsing_rules() {
        let sel = ColumnSelection::parse_manifest("# c\n# expected_dim = 2\na\n\n b \n").unwrap();
        assert_eq!(sel.columns(), &["a".to_string(), "b".to_string()]);
        assert!(ColumnSelection::parse_manifest("# expected_dim = 3\na\nb\n").is_err());
        assert!(ColumnSelection::parse_manifest("a\na\n").is_err());
    }
}
