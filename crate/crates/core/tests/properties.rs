use std::io::Cursor;

use proptest::prelude::*;

use radgaze_core::gaze::{
    build_labels, build_radexplore, build_radhybrid, build_radseq, labeled_to_json, parse_labeled,
    synthesize_sessions, BlobLayout, GazeSession, HybridConfig, LabelSpec, LabeledSession, ScanScope, SeqConfig,
    SynthSpec,
};
use radgaze_core::model::{build_mask, spatial_encoding, temporal_encoding, CausalMode};
use radgaze_core::tensor::{finite_diff_check, Tensor};
use radgaze_core::train::evaluate_predictions;

fn corpus(seed: u64, k: usize, sessions: usize) -> Vec<GazeSession> {
    let spec = SynthSpec {
        height: 64,
        width: 64,
        num_findings: k,
        sessions,
        fixations_per_intention: (1, 4),
        findings_per_session: (1, k.min(3)),
        scan_fixations: 2,
        layout: BlobLayout::Shuffled,
    };
    synthesize_sessions(&spec, seed).unwrap().into_iter().map(|s| s.session).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mask_rows_always_have_an_open_entry(np in 0usize..12, t in 1usize..12, inclusive in any::<bool>()) {
        let mode = if inclusive { CausalMode::Inclusive } else { CausalMode::Strict };
        let m = build_mask(np, t, mode);
        let n = np + t;
        prop_assert_eq!(m.matrix.shape(), &[n, n][..]);
        for i in 0..n {
            prop_assert!(m.matrix.row(i).iter().any(|&v| v == 0.0));
            for j in 0..np {
                prop_assert_eq!(m.matrix.at2(i, j), 0.0);
            }
        }
        for &v in m.matrix.data() {
            prop_assert!(v == 0.0 || v == f64::NEG_INFINITY);
        }
    }

    #[test]
    fn inclusive_mask_is_strict_plus_fixation_diagonal(np in 1usize..10, t in 1usize..10) {
        let s = build_mask(np, t, CausalMode::Strict).matrix;
        let c = build_mask(np, t, CausalMode::Inclusive).matrix;
        let n = np + t;
        for i in 0..n {
            for j in 0..n {
                let expect = if i == j && j >= np { 0.0 } else { s.at2(i, j) };
                prop_assert_eq!(c.at2(i, j), expect);
            }
        }
    }

    #[test]
    fn future_fixations_are_never_visible(np in 0usize..8, t in 2usize..10, inclusive in any::<bool>()) {
        let mode = if inclusive { CausalMode::Inclusive } else { CausalMode::Strict };
        let m = build_mask(np, t, mode).matrix;
        for i in np..np + t {
            for j in (i + 1)..np + t {
                prop_assert_eq!(m.at2(i, j), f64::NEG_INFINITY);
            }
        }
    }

    #[test]
    fn radseq_is_contained_in_radexplore(seed in 0u64..10_000, k in 2usize..6) {
        for s in corpus(seed, k, 3) {
            let seq = build_radseq(&s, k, &SeqConfig::default());
            let exp = build_radexplore(&s, k);
            prop_assert_eq!(seq.union(&exp), exp);
        }
    }

    #[test]
    fn radseq_marks_at_most_one_finding_per_fixation(seed in 0u64..10_000, k in 2usize..6, dwell in 0.0f64..2.0) {
        for s in corpus(seed, k, 3) {
            let seq = build_radseq(&s, k, &SeqConfig { min_dwell: dwell });
            for i in 0..seq.rows() {
                prop_assert!(seq.row(i).iter().map(|&v| v as usize).sum::<usize>() <= 1);
            }
        }
    }

    #[test]
    fn hybrid_without_scan_window_equals_radseq(seed in 0u64..10_000, k in 2usize..6, report_scope in any::<bool>()) {
        let scope = if report_scope { ScanScope::ReportFindings } else { ScanScope::AllFindings };
        for s in corpus(seed, k, 3) {
            let seq = SeqConfig::default();
            let h = build_radhybrid(&s, k, &HybridConfig { tau_star: 0.0, scope, seq }).unwrap();
            prop_assert_eq!(h, build_radseq(&s, k, &seq));
        }
    }

    #[test]
    fn hybrid_contains_radseq(seed in 0u64..10_000, k in 2usize..6, tau in 0.0f64..5.0) {
        for s in corpus(seed, k, 3) {
            let seq = SeqConfig::default();
            let h = build_radhybrid(&s, k, &HybridConfig { tau_star: tau, scope: ScanScope::AllFindings, seq }).unwrap();
            let r = build_radseq(&s, k, &seq);
            prop_assert_eq!(h.union(&r), h);
        }
    }

    #[test]
    fn labeled_jsonl_round_trips(seed in 0u64..10_000, k in 2usize..6, mode in 0usize..3) {
        let spec = match mode {
            0 => LabelSpec::RadExplore,
            1 => LabelSpec::RadSeq(SeqConfig::default()),
            _ => LabelSpec::RadHybrid(HybridConfig::default()),
        };
        let labeled: Vec<LabeledSession> = corpus(seed, k, 2)
            .into_iter()
            .map(|s| {
                let labels = build_labels(&s, k, &spec).unwrap();
                LabeledSession { session: s, mode: spec.mode(), labels }
            })
            .collect();
        let text: String = labeled.iter().map(|l| labeled_to_json(l) + "\n").collect();
        let back = parse_labeled(Cursor::new(text), k).unwrap();
        prop_assert_eq!(back, labeled);
    }

    #[test]
    fn micro_metrics_ignore_session_order(seed in 0u64..10_000, k in 2usize..5, thr in 0.1f64..0.9) {
        let sessions = corpus(seed, k, 4);
        let labels: Vec<_> = sessions.iter().map(|s| build_radexplore(s, k)).collect();
        let preds: Vec<Tensor> = labels
            .iter()
            .enumerate()
            .map(|(n, l)| {
                let data = (0..l.rows() * k).map(|i| ((i * 7 + n * 13 + seed as usize) % 11) as f64 / 10.0).collect();
                Tensor::matrix(l.rows(), k, data).unwrap()
            })
            .collect();
        let refs: Vec<_> = labels.iter().collect();
        let a = evaluate_predictions(&preds, &refs, thr).unwrap();
        let mut rp = preds.clone();
        let mut rl = refs.clone();
        rp.reverse();
        rl.reverse();
        let b = evaluate_predictions(&rp, &rl, thr).unwrap();
        prop_assert_eq!(a.confusion, b.confusion);
        prop_assert_eq!(a.metrics, b.metrics);
        for v in [a.metrics.accuracy, a.metrics.f1, a.metrics.precision, a.metrics.recall] {
            prop_assert!((0.0..=100.0).contains(&v));
        }
    }

    #[test]
    fn sinusoid_encodings_are_bounded(t in 1usize..40, half in 1usize..16, x in 0.0f64..256.0, y in 0.0f64..256.0) {
        let d = 4 * half;
        let te = temporal_encoding(t, d);
        prop_assert_eq!(te.shape(), &[t, d][..]);
        prop_assert!(te.data().iter().all(|v| v.abs() <= 1.0));
        let se = spatial_encoding(&[(x, y)], d);
        prop_assert_eq!(se.shape(), &[1, d][..]);
        prop_assert!(se.data().iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn composed_ops_match_finite_differences(
        rows in 1usize..4,
        cols in 2usize..5,
        vals in proptest::collection::vec(-1.5f64..1.5, 16),
        op in 0usize..4,
    ) {
        let x = Tensor::matrix(rows, cols, (0..rows * cols).map(|i| vals[i % vals.len()] + 0.01 * i as f64).collect()).unwrap();
        let w = Tensor::matrix(cols, 3, (0..cols * 3).map(|i| vals[(i + 5) % vals.len()]).collect()).unwrap();
        let r = finite_diff_check(
            |g, v| {
                let wv = g.constant(w.clone());
                let h = g.matmul(v, wv)?;
                let h = match op {
                    0 => g.tanh(h),
                    1 => g.gelu(h),
                    2 => g.softmax(h)?,
                    _ => g.sigmoid(h),
                };
                let h2 = g.mul(h, h)?;
                let s = g.add(h2, h)?;
                Ok(g.mean(s))
            },
            &x,
            1e-5,
        )
        .unwrap();
        prop_assert!(r.max_rel_err < 1e-5, "max rel err {}", r.max_rel_err);
    }
}
