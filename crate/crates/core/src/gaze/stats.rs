//! Sequence-length histograms and per-finding box-plot summaries.

use serde::Serialize;

use super::{FindingVocabulary, GazeError, LabeledSession, Result};

/// Linear-interpolation quantile of sorted data (`q` in `[0, 1]`).
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    if sorted.len() == 1 {
        return sorted[0];
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxStats {
    pub n: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub lower_whisker: f64,
    pub upper_whisker: f64,
    /// Samples outside `[q1 - 1.5 IQR, q3 + 1.5 IQR]`.
    pub outliers: usize,
}

impl BoxStats {
    pub fn from_samples(samples: &[f64]) -> Option<BoxStats> {
        if samples.is_empty() {
            return None;
        }
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let q1 = quantile(&s, 0.25);
        let q3 = quantile(&s, 0.75);
        let iqr = q3 - q1;
        let (lo, hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
        let inside: Vec<f64> = s.iter().copied().filter(|v| *v >= lo && *v <= hi).collect();
        Some(BoxStats {
            n: s.len(),
            min: s[0],
            q1,
            median: quantile(&s, 0.5),
            q3,
            max: s[s.len() - 1],
            lower_whisker: inside.first().copied().unwrap_or(q1),
            upper_whisker: inside.last().copied().unwrap_or(q3),
            outliers: s.len() - inside.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub bin_width: usize,
    /// `(lower_inclusive, upper_exclusive, count)`
    pub bins: Vec<(usize, usize, usize)>,
}

impl Histogram {
    pub fn count_for(&self, value: usize) -> usize {
        self.bins
            .iter()
            .find(|(lo, hi, _)| value >= *lo && value < *hi)
            .map_or(0, |b| b.2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FindingStats {
    pub finding: String,
    /// Fixations labeled with this finding, one sample per session where it occurs.
    pub samples: Vec<usize>,
    pub summary: Option<BoxStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsReport {
    pub sessions: usize,
    pub length_histogram: Histogram,
    pub lengths: BoxStats,
    pub per_finding: Vec<FindingStats>,
}

pub fn fixation_stats(
    dataset: &[LabeledSession],
    vocab: &FindingVocabulary,
    bin_width: usize,
) -> Result<StatsReport> {
    if dataset.is_empty() {
        return Err(GazeError::Config("statistics need a non-empty dataset".into()));
    }
    if bin_width == 0 {
        return Err(GazeError::Config("bin width must be positive".into()));
    }
    let lengths: Vec<usize> = dataset.iter().map(|s| s.session.len()).collect();
    let max = *lengths.iter().max().unwrap();
    let nbins = max / bin_width + 1;
    let mut counts = vec![0; nbins];
    for &l in &lengths {
        counts[l / bin_width] += 1;
    }
    let bins = counts
        .into_iter()
        .enumerate()
        .map(|(b, c)| (b * bin_width, (b + 1) * bin_width, c))
        .collect();

    let per_finding = (0..vocab.k())
        .map(|c| {
            let samples: Vec<usize> = dataset
                .iter()
                .map(|s| s.labels.count_in_column(c))
                .filter(|&n| n > 0)
                .collect();
            let as_f: Vec<f64> = samples.iter().map(|&n| n as f64).collect();
            FindingStats {
                finding: vocab.name(c).to_string(),
                summary: BoxStats::from_samples(&as_f),
                samples,
            }
        })
        .collect();

    let lf: Vec<f64> = lengths.iter().map(|&l| l as f64).collect();
    Ok(StatsReport {
        sessions: dataset.len(),
        length_histogram: Histogram { bin_width, bins },
        lengths: BoxStats::from_samples(&lf).expect("non-empty"),
        per_finding,
    })
}

impl StatsReport {
    /// `bin_lower,bin_upper,count`
    pub fn histogram_csv(&self) -> String {
        let mut out = String::from("bin_lower,bin_upper,count\n");
        for (lo, hi, c) in &self.length_histogram.bins {
            out.push_str(&format!("{lo},{hi},{c}\n"));
        }
        out
    }

    /// One box-plot row per finding; empty fields where a finding never occurs.
    pub fn boxplot_csv(&self) -> String {
        let mut out = String::from("finding,n,min,q1,median,q3,max,lower_whisker,upper_whisker,outliers\n");
        for f in &self.per_finding {
            let name = if f.finding.contains(',') {
                format!("\"{}\"", f.finding)
            } else {
                f.finding.clone()
            };
            match &f.summary {
                Some(b) => out.push_str(&format!(
                    "{name},{},{},{},{},{},{},{},{},{}\n",
                    b.n, b.min, b.q1, b.median, b.q3, b.max, b.lower_whisker, b.upper_whisker, b.outliers
                )),
                None => out.push_str(&format!("{name},0,,,,,,,,\n")),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaze::{Fixation, GazeSession, IntentionLabelMatrix, LabelMode};

    fn labeled(t: usize, edema_rows: usize) -> LabeledSession {
        let mut labels = IntentionLabelMatrix::zeros(t, 13);
        for i in 0..edema_rows {
            labels.set(i, 3, true);
        }
        LabeledSession {
            session: GazeSession {
                session_id: format!("s{t}"),
                image_size: (8, 8),
                image: None,
                image_file: None,
                fixations: (0..t)
                    .map(|i| Fixation {
                        x: 0,
                        y: 0,
                        duration_ms: 100.0,
                        timestamp_s: i as f64,
                    })
                    .collect(),
                transcript: vec![],
                report_findings: Default::default(),
            },
            mode: LabelMode::RadSeq,
            labels,
        }
    }

    #[test]
    fn lengths_histogram_and_median() {
        let r = fixation_stats(&[labeled(10, 0), labeled(30, 0)], &FindingVocabulary::default(), 10).unwrap();
        assert_eq!(r.length_histogram.count_for(10), 1);
        assert_eq!(r.length_histogram.count_for(30), 1);
        assert_eq!(r.length_histogram.count_for(20), 0);
        assert_eq!(r.lengths.median, 20.0);
    }

    #[test]
    fn run_length_sample() {
        let r = fixation_stats(&[labeled(10, 6)], &FindingVocabulary::default(), 10).unwrap();
        assert_eq!(r.per_finding[3].samples, vec![6]);
        assert!(r.per_finding[0].summary.is_none());
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(fixation_stats(&[], &FindingVocabulary::default(), 10).is_err());
    }

    #[test]
    fn box_outliers() {
        let b = BoxStats::from_samples(&[1., 2., 3., 4., 100.]).unwrap();
        assert_eq!(b.median, 3.0);
        assert_eq!((b.q1, b.q3), (2.0, 4.0));
        assert_eq!(b.outliers, 1);
        assert_eq!(b.upper_whisker, 4.0);
    }

    #[test]
    fn csv_headers() {
        let r = fixation_stats(&[labeled(10, 6)], &FindingVocabulary::default(), 10).unwrap();
        assert!(r.histogram_csv().starts_with("bin_lower,bin_upper,count\n"));
        let b = r.boxplot_csv();
        assert_eq!(b.lines().count(), 14);
        assert!(b.contains("Edema,1,6,6,6,6,6,6,6,0"));
    }
}
