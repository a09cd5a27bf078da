//! JSONL session records, labeled output records, and vocabulary files.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{
    FindingVocabulary, Fixation, GazeError, GazeSession, GrayImage, IntentionLabelMatrix, LabelMode,
    LabeledSession, Result, TranscriptSentence,
};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FixationRecord {
    x: u32,
    y: u32,
    duration_ms: f64,
    timestamp_s: f64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SentenceRecord {
    end_time_s: f64,
    finding_id: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionRecord {
    session_id: String,
    image_size: [usize; 2],
    image: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    image_file: Option<String>,
    fixations: Vec<FixationRecord>,
    transcript: Vec<SentenceRecord>,
    report_findings: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mode: Option<LabelMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<Vec<u8>>>,
}

fn to_record(s: &GazeSession) -> SessionRecord {
    SessionRecord {
        session_id: s.session_id.clone(),
        image_size: [s.image_size.0, s.image_size.1],
        image: match (&s.image, &s.image_file) {
            (Some(img), None) => Some(B64.encode(&img.pixels)),
            _ => None,
        },
        image_file: s.image_file.clone(),
        fixations: s
            .fixations
            .iter()
            .map(|f| FixationRecord {
                x: f.x,
                y: f.y,
                duration_ms: f.duration_ms,
                timestamp_s: f.timestamp_s,
            })
            .collect(),
        transcript: s
            .transcript
            .iter()
            .map(|t| SentenceRecord {
                end_time_s: t.end_time_s,
                finding_id: t.finding_id,
            })
            .collect(),
        report_findings: s.report_findings.iter().copied().collect(),
        mode: None,
        labels: None,
    }
}

/// Serializes a session as one JSONL line (without trailing newline).
pub fn session_to_json(s: &GazeSession) -> String {
    serde_json::to_string(&to_record(s)).expect("session serializes")
}

pub fn labeled_to_json(l: &LabeledSession) -> String {
    let mut r = to_record(&l.session);
    r.mode = Some(l.mode);
    r.labels = Some(l.labels.to_rows());
    serde_json::to_string(&r).expect("session serializes")
}

fn read_pgm(path: &Path) -> std::result::Result<GrayImage, String> {
    let bytes = fs::read(path).map_err(|e| format!("{}: {e}", path.display()))?;
    // binary PGM: "P5" <w> <h> <maxval> <single whitespace> <pixels>
    let mut fields = Vec::new();
    let mut i = 0;
    while fields.len() < 4 {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err(format!("{}: truncated PGM header", path.display()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..i]).to_string());
    }
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(format!("{}: only 8-bit binary PGM (P5) is supported", path.display()));
    }
    let w: usize = fields[1].parse().map_err(|_| "bad PGM width".to_string())?;
    let h: usize = fields[2].parse().map_err(|_| "bad PGM height".to_string())?;
    let pixels = bytes.get(i + 1..).unwrap_or_default().to_vec();
    GrayImage::new(h, w, pixels).ok_or_else(|| format!("{}: PGM pixel count mismatch", path.display()))
}

/// Writes an 8-bit binary PGM.
pub fn write_pgm(path: &Path, img: &GrayImage) -> std::io::Result<()> {
    let mut f = fs::File::create(path)?;
    write!(f, "P5\n{} {}\n255\n", img.width, img.height)?;
    f.write_all(&img.pixels)
}

fn from_record(
    r: SessionRecord,
    k: usize,
    base_dir: Option<&Path>,
) -> std::result::Result<(GazeSession, Option<(LabelMode, Vec<Vec<u8>>)>), String> {
    let [h, w] = r.image_size;
    let image = match (&r.image, &r.image_file) {
        (Some(_), Some(_)) => return Err("set either image or image_file, not both".into()),
        (Some(b64), None) => {
            let pixels = B64.decode(b64).map_err(|e| format!("image is not valid base64: {e}"))?;
            Some(GrayImage::new(h, w, pixels).ok_or_else(|| format!("image byte count does not match {h}x{w}"))?)
        }
        (None, Some(file)) => match base_dir {
            Some(dir) => Some(read_pgm(&dir.join(file))?),
            None => None,
        },
        (None, None) => None,
    };
    let session = GazeSession {
        session_id: r.session_id,
        image_size: (h, w),
        image,
        image_file: r.image_file,
        fixations: r
            .fixations
            .into_iter()
            .map(|f| Fixation {
                x: f.x,
                y: f.y,
                duration_ms: f.duration_ms,
                timestamp_s: f.timestamp_s,
            })
            .collect(),
        transcript: r
            .transcript
            .into_iter()
            .map(|t| TranscriptSentence {
                end_time_s: t.end_time_s,
                finding_id: t.finding_id,
            })
            .collect(),
        report_findings: r.report_findings.into_iter().collect::<BTreeSet<_>>(),
    };
    session.validate(k)?;
    let labels = match (r.mode, r.labels) {
        (Some(m), Some(l)) => Some((m, l)),
        (None, None) => None,
        _ => return Err("mode and labels must appear together".into()),
    };
    Ok((session, labels))
}

fn parse_lines<R: BufRead>(
    reader: R,
    k: usize,
    base_dir: Option<&Path>,
) -> Result<Vec<(usize, GazeSession, Option<(LabelMode, Vec<Vec<u8>>)>)>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| GazeError::Record {
            line: line_no,
            reason: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: SessionRecord = serde_json::from_str(&line).map_err(|e| GazeError::Record {
            line: line_no,
            reason: format!("schema: {e}"),
        })?;
        let (s, l) = from_record(rec, k, base_dir).map_err(|reason| GazeError::Record { line: line_no, reason })?;
        out.push((line_no, s, l));
    }
    Ok(out)
}

/// Parses unlabeled (or labeled, ignoring labels) sessions for a vocabulary
/// of `k` findings.
pub fn parse_sessions<R: BufRead>(reader: R, k: usize) -> Result<Vec<GazeSession>> {
    Ok(parse_lines(reader, k, None)?.into_iter().map(|(_, s, _)| s).collect())
}

/// Parses labeled records; every record must carry `mode` and `labels`.
pub fn parse_labeled<R: BufRead>(reader: R, k: usize) -> Result<Vec<LabeledSession>> {
    collect_labeled(parse_lines(reader, k, None)?, k)
}

fn collect_labeled(
    rows: Vec<(usize, GazeSession, Option<(LabelMode, Vec<Vec<u8>>)>)>,
    k: usize,
) -> Result<Vec<LabeledSession>> {
    rows.into_iter()
        .map(|(line, session, labels)| {
            let (mode, rows) = labels.ok_or(GazeError::Record {
                line,
                reason: "record has no labels; run build-dataset first".into(),
            })?;
            if rows.len() != session.len() {
                return Err(GazeError::Record {
                    line,
                    reason: format!("{} label rows for {} fixations", rows.len(), session.len()),
                });
            }
            let labels = IntentionLabelMatrix::from_rows(&rows, k).map_err(|reason| GazeError::Record { line, reason })?;
            Ok(LabeledSession { session, mode, labels })
        })
        .collect()
}

fn open(path: &Path) -> Result<std::io::BufReader<fs::File>> {
    let f = fs::File::open(path).map_err(|source| GazeError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(std::io::BufReader::new(f))
}

/// Reads sessions from a file, resolving sidecar images next to it.
pub fn read_sessions_file(path: &Path, k: usize) -> Result<Vec<GazeSession>> {
    let dir = path.parent().unwrap_or(Path::new("."));
    Ok(parse_lines(open(path)?, k, Some(dir))?
        .into_iter()
        .map(|(_, s, _)| s)
        .collect())
}

pub fn read_labeled_file(path: &Path, k: usize) -> Result<Vec<LabeledSession>> {
    let dir = path.parent().unwrap_or(Path::new("."));
    collect_labeled(parse_lines(open(path)?, k, Some(dir))?, k)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> GazeError + '_ {
    move |source| GazeError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn write_sessions_jsonl(path: &Path, sessions: &[GazeSession]) -> Result<()> {
    let mut out = String::new();
    for s in sessions {
        out.push_str(&session_to_json(s));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

pub fn write_labeled_jsonl(path: &Path, sessions: &[LabeledSession]) -> Result<()> {
    let mut out = String::new();
    for s in sessions {
        out.push_str(&labeled_to_json(s));
        out.push('\n');
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Newline-delimited finding names; blank lines are ignored.
pub fn read_vocabulary(path: &Path) -> Result<FindingVocabulary> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    FindingVocabulary::new(
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect(),
    )
}
