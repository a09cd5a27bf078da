//! Label compilation from transcript timing.
//!
//! All three rules work on the fixation timestamps `τ_i` and the sentence end
//! times `s_j^e` of a session:
//!
//! * **RadExplore** marks finding `k` on every fixation that happens no later
//!   than the end of some sentence about `k`.
//! * **RadSeq** partitions the timeline by transcript order: sentence `j`
//!   owns the closed interval from the previous sentence's end (or 0) to its
//!   own end, and a fixation inside that interval gets the sentence's finding.
//!   Repeated findings take the union of their intervals.
//! * **RadHybrid** is RadSeq plus an initial scanning window: fixations with
//!   `τ_i ≤ τ*` are marked for every finding (or every reported finding).

use serde::{Deserialize, Serialize};

use super::{GazeError, GazeSession, IntentionLabelMatrix, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelMode {
    RadExplore,
    RadSeq,
    RadHybrid,
}

impl LabelMode {
    pub fn as_str(self) -> &'static str {
        match self {
            LabelMode::RadExplore => "radexplore",
            LabelMode::RadSeq => "radseq",
            LabelMode::RadHybrid => "radhybrid",
        }
    }
}

impl std::str::FromStr for LabelMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "radexplore" => Ok(LabelMode::RadExplore),
            "radseq" => Ok(LabelMode::RadSeq),
            "radhybrid" => Ok(LabelMode::RadHybrid),
            other => Err(format!("unknown mode {other:?} (expected radseq|radexplore|radhybrid)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeqConfig {
    /// Intervals shorter than this many seconds are dropped. 0 keeps all.
    pub min_dwell: f64,
}

impl Default for SeqConfig {
    fn default() -> Self {
        SeqConfig { min_dwell: 0.0 }
    }
}

/// Which findings an initial-scan fixation is marked with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanScope {
    /// Every finding in the vocabulary.
    #[default]
    AllFindings,
    /// Only the findings in the session's report.
    ReportFindings,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HybridConfig {
    pub tau_star: f64,
    pub scope: ScanScope,
    pub seq: SeqConfig,
}

impl Default for HybridConfig {
    fn default() -> Self {
        HybridConfig {
            tau_star: 1.0,
            scope: ScanScope::AllFindings,
            seq: SeqConfig::default(),
        }
    }
}

/// Full description of how to compile labels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LabelSpec {
    RadExplore,
    RadSeq(SeqConfig),
    RadHybrid(HybridConfig),
}

impl LabelSpec {
    pub fn mode(&self) -> LabelMode {
        match self {
            LabelSpec::RadExplore => LabelMode::RadExplore,
            LabelSpec::RadSeq(_) => LabelMode::RadSeq,
            LabelSpec::RadHybrid(_) => LabelMode::RadHybrid,
        }
    }
}

/// Closed time interval owned by one transcript sentence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub finding_id: usize,
    pub begin: f64,
    pub end: f64,
}

/// Per-sentence intervals in transcript order, after the `min_dwell` filter.
pub fn sentence_intervals(session: &GazeSession, cfg: &SeqConfig) -> Vec<Interval> {
    let mut begin = 0.0;
    let mut out = Vec::with_capacity(session.transcript.len());
    for s in &session.transcript {
        let iv = Interval {
            finding_id: s.finding_id,
            begin,
            end: s.end_time_s,
        };
        if iv.end - iv.begin >= cfg.min_dwell {
            out.push(iv);
        }
        begin = s.end_time_s;
    }
    out
}

/// Number of fixations with timestamp `<= t` (timestamps are sorted).
fn count_at_or_before(ts: &[f64], t: f64) -> usize {
    ts.partition_point(|&x| x <= t)
}

fn count_before(ts: &[f64], t: f64) -> usize {
    ts.partition_point(|&x| x < t)
}

fn timestamps(session: &GazeSession) -> Vec<f64> {
    session.timestamps().collect()
}

pub fn build_radexplore(session: &GazeSession, k: usize) -> IntentionLabelMatrix {
    let ts = timestamps(session);
    let mut m = IntentionLabelMatrix::zeros(ts.len(), k);
    // the latest end time per finding decides its whole prefix
    let mut latest = vec![f64::NEG_INFINITY; k];
    for s in &session.transcript {
        latest[s.finding_id] = latest[s.finding_id].max(s.end_time_s);
    }
    for (c, &end) in latest.iter().enumerate() {
        for i in 0..count_at_or_before(&ts, end) {
            m.set(i, c, true);
        }
    }
    m
}

pub fn build_radseq(session: &GazeSession, k: usize, cfg: &SeqConfig) -> IntentionLabelMatrix {
    let ts = timestamps(session);
    let mut m = IntentionLabelMatrix::zeros(ts.len(), k);
    for iv in sentence_intervals(session, cfg) {
        for i in count_before(&ts, iv.begin)..count_at_or_before(&ts, iv.end) {
            m.set(i, iv.finding_id, true);
        }
    }
    m
}

pub fn build_radhybrid(session: &GazeSession, k: usize, cfg: &HybridConfig) -> Result<IntentionLabelMatrix> {
    if !(cfg.tau_star.is_finite() && cfg.tau_star >= 0.0) {
        return Err(GazeError::Config(format!("tau_star must be >= 0, got {}", cfg.tau_star)));
    }
    let mut m = build_radseq(session, k, &cfg.seq);
    let ts = timestamps(session);
    // τ* = 0 means no scanning window, even for a fixation stamped at 0.0
    let scan = if cfg.tau_star > 0.0 {
        count_at_or_before(&ts, cfg.tau_star)
    } else {
        0
    };
    let columns: Vec<usize> = match cfg.scope {
        ScanScope::AllFindings => (0..k).collect(),
        ScanScope::ReportFindings => session.report_findings.iter().copied().filter(|&c| c < k).collect(),
    };
    for i in 0..scan {
        for &c in &columns {
            m.set(i, c, true);
        }
    }
    Ok(m)
}

pub fn build_labels(session: &GazeSession, k: usize, spec: &LabelSpec) -> Result<IntentionLabelMatrix> {
    match spec {
        LabelSpec::RadExplore => Ok(build_radexplore(session, k)),
        LabelSpec::RadSeq(cfg) => Ok(build_radseq(session, k, cfg)),
        LabelSpec::RadHybrid(cfg) => build_radhybrid(session, k, cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaze::{Fixation, TranscriptSentence};

    const CARDIO: usize = 1;
    const EDEMA: usize = 3;
    const PNEUMONIA: usize = 10;

    fn session(ts: &[f64], transcript: &[(f64, usize)]) -> GazeSession {
        GazeSession {
            session_id: "t".into(),
            image_size: (32, 32),
            image: None,
            image_file: None,
            fixations: ts
                .iter()
                .map(|&t| Fixation {
                    x: 0,
                    y: 0,
                    duration_ms: 100.0,
                    timestamp_s: t,
                })
                .collect(),
            transcript: transcript
                .iter()
                .map(|&(e, c)| TranscriptSentence {
                    end_time_s: e,
                    finding_id: c,
                })
                .collect(),
            report_findings: transcript.iter().map(|&(_, c)| c).collect(),
        }
    }

    fn positives(m: &IntentionLabelMatrix, row: usize) -> Vec<usize> {
        (0..m.k()).filter(|&c| m.get(row, c)).collect()
    }

    const TWO: [(f64, usize); 2] = [(3.0, CARDIO), (7.0, EDEMA)];

    #[test]
    fn radexplore_examples() {
        let s = session(&[2.0, 5.0, 8.0], &TWO);
        let m = build_radexplore(&s, 13);
        assert_eq!(positives(&m, 0), vec![CARDIO, EDEMA]);
        assert_eq!(positives(&m, 1), vec![EDEMA]);
        assert!(positives(&m, 2).is_empty());
    }

    #[test]
    fn radseq_examples() {
        let s = session(&[3.0, 5.0], &TWO);
        let iv = sentence_intervals(&s, &SeqConfig::default());
        assert_eq!((iv[0].begin, iv[0].end), (0.0, 3.0));
        assert_eq!((iv[1].begin, iv[1].end), (3.0, 7.0));
        let m = build_radseq(&s, 13, &SeqConfig::default());
        assert_eq!(positives(&m, 0), vec![CARDIO, EDEMA]);
        assert_eq!(positives(&m, 1), vec![EDEMA]);

        let s = session(&[1.0], &[(4.0, PNEUMONIA)]);
        let m = build_radseq(&s, 13, &SeqConfig::default());
        assert_eq!(positives(&m, 0), vec![PNEUMONIA]);
    }

    #[test]
    fn repeated_finding_takes_union() {
        let s = session(&[1.0, 4.0, 6.0], &[(2.0, CARDIO), (5.0, EDEMA), (7.0, CARDIO)]);
        let m = build_radseq(&s, 13, &SeqConfig::default());
        assert_eq!(positives(&m, 0), vec![CARDIO]);
        assert_eq!(positives(&m, 1), vec![EDEMA]);
        assert_eq!(positives(&m, 2), vec![CARDIO]);
    }

    #[test]
    fn min_dwell_drops_short_intervals() {
        let s = session(&[1.0, 3.2], &[(3.0, CARDIO), (3.5, EDEMA)]);
        let m = build_radseq(&s, 13, &SeqConfig { min_dwell: 1.0 });
        assert_eq!(positives(&m, 0), vec![CARDIO]);
        assert!(positives(&m, 1).is_empty());
    }

    #[test]
    fn radhybrid_examples() {
        let mut s = session(&[0.5, 5.0], &[(3.0, CARDIO), (7.0, EDEMA)]);
        let m = build_radhybrid(&s, 13, &HybridConfig::default()).unwrap();
        assert_eq!(positives(&m, 0), (0..13).collect::<Vec<_>>());
        assert_eq!(positives(&m, 1), vec![EDEMA]);

        s.transcript = vec![TranscriptSentence {
            end_time_s: 7.0,
            finding_id: EDEMA,
        }];
        s.report_findings = [EDEMA].into_iter().collect();
        let cfg = HybridConfig {
            scope: ScanScope::ReportFindings,
            ..HybridConfig::default()
        };
        let m = build_radhybrid(&s, 13, &cfg).unwrap();
        assert_eq!(positives(&m, 0), vec![EDEMA]);
    }

    #[test]
    fn radhybrid_zero_tau_is_radseq() {
        let s = session(&[0.0, 3.0, 5.0, 7.5], &TWO);
        let cfg = HybridConfig {
            tau_star: 0.0,
            ..HybridConfig::default()
        };
        assert_eq!(
            build_radhybrid(&s, 13, &cfg).unwrap(),
            build_radseq(&s, 13, &SeqConfig::default())
        );
    }

    #[test]
    fn negative_tau_rejected() {
        let s = session(&[0.5], &TWO);
        let cfg = HybridConfig {
            tau_star: -1.0,
            ..HybridConfig::default()
        };
        assert!(build_radhybrid(&s, 13, &cfg).is_err());
    }

    #[test]
    fn mode_names_roundtrip() {
        for m in [LabelMode::RadExplore, LabelMode::RadSeq, LabelMode::RadHybrid] {
            assert_eq!(m.as_str().parse::<LabelMode>().unwrap(), m);
        }
    }
}
