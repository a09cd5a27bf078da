//! Gaze sessions, label compilation, corpus statistics, and synthetic corpora.

mod io;
mod labels;
mod stats;
mod synth;

pub use io::{
    labeled_to_json, parse_labeled, parse_sessions, read_labeled_file, read_sessions_file, read_vocabulary,
    session_to_json, write_labeled_jsonl, write_pgm, write_sessions_jsonl,
};
pub use labels::{
    build_labels, build_radexplore, build_radhybrid, build_radseq, sentence_intervals, HybridConfig, Interval,
    LabelMode, LabelSpec, ScanScope, SeqConfig,
};
pub use stats::{fixation_stats, quantile, BoxStats, Histogram, StatsReport};
pub use synth::{synthesize_sessions, BlobLayout, PlantedLabels, SynthSpec, SyntheticSession};

use std::collections::BTreeSet;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GazeError {
    #[error("line {line}: {reason}")]
    Record { line: usize, reason: String },
    #[error("session {session}: {reason}")]
    Invalid { session: String, reason: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, GazeError>;

/// One gaze dwell point in image pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Fixation {
    pub x: u32,
    pub y: u32,
    pub duration_ms: f64,
    pub timestamp_s: f64,
}

/// A transcript sentence, already mapped to a finding class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TranscriptSentence {
    pub end_time_s: f64,
    pub finding_id: usize,
}

/// 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<u8>) -> Option<Self> {
        (height > 0 && width > 0 && pixels.len() == height * width).then_some(GrayImage { height, width, pixels })
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.pixels[row * self.width + col]
    }

    /// Nearest-neighbour resize.
    pub fn resize_nearest(&self, height: usize, width: usize) -> GrayImage {
        if height == self.height && width == self.width {
            return self.clone();
        }
        let mut pixels = Vec::with_capacity(height * width);
        for r in 0..height {
            let sr = (r * self.height / height).min(self.height - 1);
            for c in 0..width {
                let sc = (c * self.width / width).min(self.width - 1);
                pixels.push(self.get(sr, sc));
            }
        }
        GrayImage { height, width, pixels }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GazeSession {
    pub session_id: String,
    /// `(height, width)` of the source image.
    pub image_size: (usize, usize),
    pub image: Option<GrayImage>,
    /// Sidecar image path relative to the JSONL file, if the image is not inline.
    pub image_file: Option<String>,
    pub fixations: Vec<Fixation>,
    pub transcript: Vec<TranscriptSentence>,
    pub report_findings: BTreeSet<usize>,
}

impl GazeSession {
    pub fn len(&self) -> usize {
        self.fixations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixations.is_empty()
    }

    pub fn timestamps(&self) -> impl Iterator<Item = f64> + '_ {
        self.fixations.iter().map(|f| f.timestamp_s)
    }

    /// Checks every structural invariant against a vocabulary of `k` findings.
    pub fn validate(&self, k: usize) -> std::result::Result<(), String> {
        let (h, w) = self.image_size;
        if h == 0 || w == 0 {
            return Err("image_size must be positive".into());
        }
        if let Some(img) = &self.image {
            if img.height != h || img.width != w {
                return Err(format!(
                    "image is {}x{} but image_size is {h}x{w}",
                    img.height, img.width
                ));
            }
        }
        if self.fixations.is_empty() {
            return Err("T ≥ 1 required".into());
        }
        let mut prev: Option<f64> = None;
        for (i, f) in self.fixations.iter().enumerate() {
            if f.x as usize >= w || f.y as usize >= h {
                return Err(format!(
                    "fixation {i} at (x={}, y={}) outside {w}x{h} image",
                    f.x, f.y
                ));
            }
            if !(f.duration_ms.is_finite() && f.duration_ms > 0.0) {
                return Err(format!("fixation {i}: duration must be positive"));
            }
            if !(f.timestamp_s.is_finite() && f.timestamp_s >= 0.0) {
                return Err(format!("fixation {i}: timestamp must be non-negative"));
            }
            if let Some(p) = prev {
                if f.timestamp_s <= p {
                    return Err(format!("timestamps not increasing at fixation {i} ({} after {p})", f.timestamp_s));
                }
            }
            prev = Some(f.timestamp_s);
        }
        for &c in &self.report_findings {
            if c >= k {
                return Err(format!("unknown finding_id {c} in report_findings (K={k})"));
            }
        }
        let mut prev_end = f64::NEG_INFINITY;
        for (j, s) in self.transcript.iter().enumerate() {
            if s.finding_id >= k {
                return Err(format!("unknown finding_id {} in sentence {j} (K={k})", s.finding_id));
            }
            if !self.report_findings.contains(&s.finding_id) {
                return Err(format!(
                    "sentence {j} finding_id {} missing from report_findings",
                    s.finding_id
                ));
            }
            if !(s.end_time_s.is_finite() && s.end_time_s > 0.0) {
                return Err(format!("sentence {j}: end_time_s must be positive"));
            }
            if s.end_time_s < prev_end {
                return Err(format!("sentence {j}: end times decrease"));
            }
            prev_end = s.end_time_s;
        }
        Ok(())
    }
}

/// `T x K` binary supervision target.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IntentionLabelMatrix {
    rows: usize,
    k: usize,
    data: Vec<u8>,
}

impl IntentionLabelMatrix {
    pub fn zeros(rows: usize, k: usize) -> Self {
        IntentionLabelMatrix {
            rows,
            k,
            data: vec![0; rows * k],
        }
    }

    pub fn from_rows(rows: &[Vec<u8>], k: usize) -> std::result::Result<Self, String> {
        let mut m = Self::zeros(rows.len(), k);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != k {
                return Err(format!("label row {i} has {} entries, expected {k}", r.len()));
            }
            for (j, &v) in r.iter().enumerate() {
                if v > 1 {
                    return Err(format!("label row {i} entry {j} is {v}, expected 0 or 1"));
                }
                m.data[i * k + j] = v;
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, k: usize) -> bool {
        self.data[i * self.k + k] == 1
    }

    pub fn set(&mut self, i: usize, k: usize, on: bool) {
        self.data[i * self.k + k] = on as u8;
    }

    pub fn row(&self, i: usize) -> &[u8] {
        &self.data[i * self.k..(i + 1) * self.k]
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<u8>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    /// Elementwise OR.
    pub fn union(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.k), (other.rows, other.k));
        IntentionLabelMatrix {
            rows: self.rows,
            k: self.k,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a | b).collect(),
        }
    }

    pub fn count_in_column(&self, k: usize) -> usize {
        (0..self.rows).filter(|&i| self.get(i, k)).count()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }
}

/// A session together with its compiled labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSession {
    pub session: GazeSession,
    pub mode: LabelMode,
    pub labels: IntentionLabelMatrix,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FindingVocabulary {
    names: Vec<String>,
}

pub const DEFAULT_FINDINGS: [&str; 13] = [
    "Atelectasis",
    "Cardiomegaly",
    "Consolidation",
    "Edema",
    "Enlarged Cardiomediastinum",
    "Fracture",
    "Lung Lesion",
    "Lung Opacity",
    "Pleural Effusion",
    "Pleural Other",
    "Pneumonia",
    "Pneumothorax",
    "Support Devices",
];

impl Default for FindingVocabulary {
    fn default() -> Self {
        FindingVocabulary {
            names: DEFAULT_FINDINGS.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl FindingVocabulary {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.len() < 2 {
            return Err(GazeError::Config("vocabulary needs at least 2 findings".into()));
        }
        let unique: BTreeSet<&String> = names.iter().collect();
        if unique.len() != names.len() {
            return Err(GazeError::Config("vocabulary names must be unique".into()));
        }
        Ok(FindingVocabulary { names })
    }

    /// The first `k` default names, falling back to `Finding <i>` past 13.
    pub fn first(k: usize) -> Result<Self> {
        let names = (0..k)
            .map(|i| DEFAULT_FINDINGS.get(i).map_or_else(|| format!("Finding {i}"), |s| s.to_string()))
            .collect();
        Self::new(names)
    }

    pub fn k(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn session(ts: &[f64]) -> GazeSession {
        GazeSession {
            session_id: "s".into(),
            image_size: (64, 64),
            image: None,
            image_file: None,
            fixations: ts
                .iter()
                .map(|&t| Fixation {
                    x: 1,
                    y: 2,
                    duration_ms: 200.0,
                    timestamp_s: t,
                })
                .collect(),
            transcript: vec![TranscriptSentence {
                end_time_s: 3.0,
                finding_id: 1,
            }],
            report_findings: [1].into_iter().collect(),
        }
    }

    #[test]
    fn valid_session_passes() {
        assert!(session(&[0.1, 0.5, 1.0]).validate(13).is_ok());
    }

    #[test]
    fn decreasing_timestamps_rejected() {
        let err = session(&[2.0, 1.0]).validate(13).unwrap_err();
        assert!(err.contains("timestamps not increasing"), "{err}");
    }

    #[test]
    fn empty_fixations_rejected() {
        let err = session(&[]).validate(13).unwrap_err();
        assert!(err.contains("T ≥ 1 required"));
    }

    #[test]
    fn out_of_bounds_fixation_rejected() {
        let mut s = session(&[0.5]);
        s.fixations[0].x = 64;
        assert!(s.validate(13).unwrap_err().contains("outside"));
    }

    #[test]
    fn transcript_finding_must_be_reported() {
        let mut s = session(&[0.5]);
        s.report_findings.clear();
        assert!(s.validate(13).unwrap_err().contains("report_findings"));
        let mut s = session(&[0.5]);
        s.transcript[0].finding_id = 20;
        assert!(s.validate(13).unwrap_err().contains("unknown finding_id"));
    }

    #[test]
    fn vocabulary_rules() {
        assert_eq!(FindingVocabulary::default().k(), 13);
        assert_eq!(FindingVocabulary::default().name(12), "Support Devices");
        assert!(FindingVocabulary::new(vec!["a".into()]).is_err());
        assert!(FindingVocabulary::new(vec!["a".into(), "a".into()]).is_err());
        assert_eq!(FindingVocabulary::first(4).unwrap().name(3), "Edema");
    }

    #[test]
    fn nearest_resize() {
        let img = GrayImage::new(2, 2, vec![1, 2, 3, 4]).unwrap();
        let up = img.resize_nearest(4, 4);
        assert_eq!(up.get(0, 0), 1);
        assert_eq!(up.get(1, 1), 1);
        assert_eq!(up.get(3, 3), 4);
        assert_eq!(up.get(0, 3), 2);
    }
}
