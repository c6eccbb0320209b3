use std::path::Path;

use crate::error::{Error, Result};

/// Label used for frames annotated `-1` (no expression label).
pub const UNANNOTATED_CLASS: u8 = 7;
pub const NUM_CLASSES: usize = 8;

/// Raw per-frame annotations of one video (values in `-1..=6`).
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationTrack {
    pub video_id: String,
    pub labels: Vec<i8>,
}

impl AnnotationTrack {
    pub fn new(video_id: impl Into<String>, labels: Vec<i8>) -> Result<Self> {
        if let Some(bad) = labels.iter().find(|l| !(-1..=6).contains(*l)) {
            return Err(Error::Domain(format!("annotation label {bad} outside -1..=6")));
        }
        Ok(Self {
            video_id: video_id.into(),
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// One integer per line; a single non-numeric first line is a header.
    pub fn parse(video_id: impl Into<String>, text: &str) -> Result<Self> {
        let video_id = video_id.into();
        let mut labels = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            match line.parse::<i8>() {
                Ok(v) => labels.push(v),
                Err(_) if i == 0 => {
                    log::info!("{video_id}: skipping annotation header '{line}'");
                }
                Err(_) => {
                    return Err(Error::Parse {
                        row: i + 1,
                        column: "label".into(),
                        message: format!("'{line}' is not an integer label"),
                    })
                }
            }
        }
        Self::new(video_id, labels)
    }

    /// Reads an annotation file; the video id is the file stem.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::parse(id, &text)
    }
}

/// `-1 → 7`, `0..=6` unchanged.
pub fn remap_label(raw: i8) -> Result<u8> {
    match raw {
        -1 => Ok(UNANNOTATED_CLASS),
        0..=6 => Ok(raw as u8),
        _ => Err(Error::Domain(format!("raw label {raw} outside -1..=6"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn remap_examples() {
        assert_eq!(remap_label(-1).unwrap(), 7);
        assert_eq!(remap_label(0).unwrap(), 0);
        assert_eq!(remap_label(6).unwrap(), 6);
        assert_eq!(remap_label(7).unwrap_err().category(), "domain");
        assert_eq!(remap_label(-2).unwrap_err().category(), "domain");
    }

    #[test]
    fn remap_is_a_bijection() {
        let mut image: Vec<u8> = (-1..=6).map(|r| remap_label(r).unwrap()).collect();
        image.sort();
        assert_eq!(image, (0..8).collect::<Vec<u8>>());
    }

    #[test]
    fn header_line_is_skipped() {
        let t = AnnotationTrack::parse("v", "Neutral,Anger,Disgust\n0\n-1\n3\n").unwrap();
        assert_eq!(t.labels, vec![0, -1, 3]);
        let t = AnnotationTrack::parse("v", "2\n5\n").unwrap();
        assert_eq!(t.labels, vec![2, 5]);
    }

    #[test]
    fn bad_lines_are_rejected() {
        assert_eq!(
            AnnotationTrack::parse("v", "1\nfoo\n").unwrap_err().category(),
            "parse"
        );
        assert_eq!(
            AnnotationTrack::parse("v", "1\n9\n").unwrap_err().category(),
            "domain"
        );
    }
}
