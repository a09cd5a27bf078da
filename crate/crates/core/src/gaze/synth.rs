//! Synthetic gaze corpora with planted intention structure.
//!
//! Each session shows one bright blob per reported finding. The transcript
//! visits the findings in a random order; for each one the generator emits a
//! run of fixations on that finding's blob and closes the sentence halfway
//! between the run's last fixation and the next run's first. A few uniform
//! "initial scan" fixations precede the first run. Because no fixation ever
//! lands on a sentence boundary, the planted labels are known exactly.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    Fixation, GazeError, GazeSession, GrayImage, IntentionLabelMatrix, Result, ScanScope, TranscriptSentence,
};

/// Where each finding's blob is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BlobLayout {
    /// Finding `k` always occupies slot `k`.
    #[default]
    Fixed,
    /// Slots are permuted per session; only blob appearance identifies the finding.
    Shuffled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub height: usize,
    pub width: usize,
    pub num_findings: usize,
    pub sessions: usize,
    /// Inclusive range of fixations per finding run.
    pub fixations_per_intention: (usize, usize),
    /// Inclusive range of reported findings per session.
    pub findings_per_session: (usize, usize),
    pub scan_fixations: usize,
    pub layout: BlobLayout,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            height: 256,
            width: 256,
            num_findings: 4,
            sessions: 64,
            fixations_per_intention: (5, 9),
            findings_per_session: (1, 3),
            scan_fixations: 2,
            layout: BlobLayout::Fixed,
        }
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(GazeError::Config(m.to_string()));
        if self.num_findings == 0 {
            return bad("synthetic spec needs at least one finding");
        }
        if self.height < 8 || self.width < 8 {
            return bad("synthetic images must be at least 8x8");
        }
        let (flo, fhi) = self.findings_per_session;
        if flo == 0 || flo > fhi || flo > self.num_findings {
            return bad("findings_per_session must satisfy 1 <= lo <= hi and lo <= num_findings");
        }
        let (lo, hi) = self.fixations_per_intention;
        if lo == 0 || lo > hi {
            return bad("fixations_per_intention must satisfy 1 <= lo <= hi");
        }
        Ok(())
    }

    fn grid(&self) -> usize {
        (self.num_findings as f64).sqrt().ceil() as usize
    }

    /// Pixel centre `(row, col)` of a slot.
    pub fn slot_center(&self, slot: usize) -> (f64, f64) {
        let g = self.grid();
        let (ch, cw) = (self.height as f64 / g as f64, self.width as f64 / g as f64);
        ((slot / g) as f64 * ch + ch / 2.0, (slot % g) as f64 * cw + cw / 2.0)
    }

    pub fn blob_radius(&self) -> f64 {
        let g = self.grid() as f64;
        (self.height.min(self.width) as f64 / g) * 0.2
    }

    /// Mean blob intensity for a finding.
    pub fn intensity(&self, finding: usize) -> f64 {
        let span = (self.num_findings.max(2) - 1) as f64;
        110.0 + 145.0 * finding as f64 / span
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedLabels {
    /// Transcript order of the reported findings.
    pub order: Vec<usize>,
    /// Run (= sentence index) of each fixation; scan fixations belong to run 0.
    pub run_of: Vec<usize>,
    k: usize,
}

impl PlantedLabels {
    pub fn radseq(&self) -> IntentionLabelMatrix {
        let mut m = IntentionLabelMatrix::zeros(self.run_of.len(), self.k);
        for (i, &r) in self.run_of.iter().enumerate() {
            m.set(i, self.order[r], true);
        }
        m
    }

    pub fn radexplore(&self) -> IntentionLabelMatrix {
        let mut m = IntentionLabelMatrix::zeros(self.run_of.len(), self.k);
        for (i, &r) in self.run_of.iter().enumerate() {
            for &c in &self.order[r..] {
                m.set(i, c, true);
            }
        }
        m
    }

    pub fn radhybrid(&self, session: &GazeSession, tau_star: f64, scope: ScanScope) -> IntentionLabelMatrix {
        let mut m = self.radseq();
        for (i, f) in session.fixations.iter().enumerate() {
            if tau_star > 0.0 && f.timestamp_s <= tau_star {
                for c in 0..self.k {
                    if scope == ScanScope::AllFindings || session.report_findings.contains(&c) {
                        m.set(i, c, true);
                    }
                }
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSession {
    pub session: GazeSession,
    pub planted: PlantedLabels,
    /// Slot occupied by each finding in this session.
    pub slots: Vec<usize>,
}

fn round_ms(t: f64) -> f64 {
    (t * 1000.0).round() / 1000.0
}

fn draw_blob(img: &mut [u8], spec: &SynthSpec, finding: usize, center: (f64, f64), rng: &mut ChaCha8Rng) {
    let r = spec.blob_radius();
    let base = spec.intensity(finding);
    let reach = (r * 1.3).ceil() as isize;
    let (cy, cx) = (center.0 as isize, center.1 as isize);
    for dy in -reach..=reach {
        for dx in -reach..=reach {
            let (y, x) = (cy + dy, cx + dx);
            if y < 0 || x < 0 || y >= spec.height as isize || x >= spec.width as isize {
                continue;
            }
            let (fy, fx) = (dy as f64, dx as f64);
            let inside = match finding % 3 {
                0 => fy * fy + fx * fx <= r * r,
                1 => fy.abs() <= 0.85 * r && fx.abs() <= 0.85 * r,
                _ => fy.abs() + fx.abs() <= 1.2 * r,
            };
            if inside {
                let v = base + rng.gen_range(-6.0..6.0);
                img[y as usize * spec.width + x as usize] = v.clamp(0.0, 255.0) as u8;
            }
        }
    }
}

fn near(center: (f64, f64), radius: f64, spec: &SynthSpec, rng: &mut ChaCha8Rng) -> (u32, u32) {
    let ang = rng.gen_range(0.0..std::f64::consts::TAU);
    let rad = radius * rng.gen::<f64>().sqrt();
    let y = (center.0 + rad * ang.sin()).round().clamp(0.0, (spec.height - 1) as f64);
    let x = (center.1 + rad * ang.cos()).round().clamp(0.0, (spec.width - 1) as f64);
    (x as u32, y as u32)
}

fn one_session(spec: &SynthSpec, idx: usize, rng: &mut ChaCha8Rng) -> SyntheticSession {
    let k = spec.num_findings;
    let (flo, fhi) = spec.findings_per_session;
    let n = rng.gen_range(flo..=fhi.min(k));
    let order: Vec<usize> = sample(rng, k, n).into_vec();

    let g = spec.grid();
    let mut slots: Vec<usize> = (0..g * g).collect();
    if spec.layout == BlobLayout::Shuffled {
        slots.shuffle(rng);
    }
    slots.truncate(k);

    let mut pixels: Vec<u8> = (0..spec.height * spec.width).map(|_| rng.gen_range(24..40)).collect();
    for &c in &order {
        draw_blob(&mut pixels, spec, c, spec.slot_center(slots[c]), rng);
    }

    let mut points = Vec::new();
    let mut run_of = Vec::new();
    for _ in 0..spec.scan_fixations {
        points.push((rng.gen_range(0..spec.width as u32), rng.gen_range(0..spec.height as u32)));
        run_of.push(0);
    }
    let (lo, hi) = spec.fixations_per_intention;
    for (r, &c) in order.iter().enumerate() {
        for _ in 0..rng.gen_range(lo..=hi) {
            points.push(near(spec.slot_center(slots[c]), spec.blob_radius() * 0.6, spec, rng));
            run_of.push(r);
        }
    }

    let mut t = rng.gen_range(0.05..0.15);
    let fixations: Vec<Fixation> = points
        .into_iter()
        .map(|(x, y)| {
            let duration_ms: f64 = rng.gen_range(180.0f64..320.0).round();
            let f = Fixation {
                x,
                y,
                duration_ms,
                timestamp_s: round_ms(t),
            };
            t += duration_ms / 1000.0 + rng.gen_range(0.02..0.05);
            f
        })
        .collect();

    let last_of = |r: usize| run_of.iter().rposition(|&v| v == r).unwrap();
    let transcript = order
        .iter()
        .enumerate()
        .map(|(r, &c)| {
            let end = if r + 1 < order.len() {
                let a = fixations[last_of(r)].timestamp_s;
                let b = fixations[last_of(r) + 1].timestamp_s;
                round_ms((a + b) / 2.0)
            } else {
                round_ms(fixations.last().unwrap().timestamp_s + 0.2)
            };
            TranscriptSentence {
                end_time_s: end,
                finding_id: c,
            }
        })
        .collect();

    let session = GazeSession {
        session_id: format!("synth-{idx:05}"),
        image_size: (spec.height, spec.width),
        image: Some(GrayImage::new(spec.height, spec.width, pixels).expect("sized")),
        image_file: None,
        fixations,
        transcript,
        report_findings: order.iter().copied().collect(),
    };
    SyntheticSession {
        session,
        planted: PlantedLabels { order, run_of, k },
        slots,
    }
}

/// Deterministic synthetic corpus.
pub fn synthesize_sessions(spec: &SynthSpec, seed: u64) -> Result<Vec<SyntheticSession>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..spec.sessions).map(|i| one_session(spec, i, &mut rng)).collect())
}
