mod common;

use proptest::prelude::*;
use rand::Rng;
use ssvmr_core::rng::seeded;
use ssvmr_core::saliency::{derangement, mix_batch, select_spans, span_length, splice, MixSettings, SaliencyProfile, Span, SpanRounding};
use ssvmr_core::Tensor;

#[test]
fn span_length_matches_direct_formula_on_grid() {
    for l1 in 1..=20 {
        for l2 in 1..=20 {
            for tenths in 1..=9 {
                let got = span_length(l1, l2, tenths as f64 / 10.0, SpanRounding::HalfUp);
                assert_eq!(got, common::span_length_direct(l1, l2, tenths), "len_v1 {l1} len_v2 {l2} lambda0 0.{tenths}");
            }
        }
    }
}

#[test]
fn select_spans_matches_exhaustive_scan() {
    let mut r = common::rng(17);
    for _ in 0..1000 {
        let (n1, n2) = (r.random_range(1..25), r.random_range(1..25));
        // Coarse values make exact ties common.
        let s1: Vec<f64> = (0..n1).map(|_| f64::from(r.random_range(0..4u8))).collect();
        let s2: Vec<f64> = (0..n2).map(|_| f64::from(r.random_range(0..4u8))).collect();
        let len = r.random_range(1..=n1.min(n2));
        let (rec, don) = select_spans(&SaliencyProfile(s1.clone()), &SaliencyProfile(s2.clone()), len).unwrap();
        assert_eq!(rec, Span { start: common::best_window(&s1, len, true), len });
        assert_eq!(don, Span { start: common::best_window(&s2, len, false), len });
    }
}

#[test]
fn lambda_is_replaced_fraction_exactly() {
    let v1 = Tensor::new(7, 2, (0..14).map(f64::from).collect()).unwrap();
    let v2 = Tensor::full(5, 2, -1.0);
    let spans = [(Span { start: 2, len: 3 }, Span { start: 1, len: 3 })];
    let (mixed, lambda) = splice(&v1, &v2, &spans).unwrap();
    assert_eq!(lambda, 3.0 / 7.0);
    assert_eq!(mixed.rows(), 7);
    assert_eq!(mixed.row(1), v1.row(1));
    assert_eq!(mixed.row(3), [-1.0, -1.0]);
    assert_eq!(mixed.row(5), v1.row(5));
}

proptest! {
    #[test]
    fn derangement_has_no_fixed_points(n in 2usize..40, seed in any::<u64>()) {
        let p = derangement(n, &mut seeded(seed));
        let mut sorted = p.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        prop_assert!(p.iter().enumerate().all(|(i, &j)| i != j));
    }

    #[test]
    fn mixed_samples_keep_length_and_exact_lambda(
        lens in prop::collection::vec(1usize..12, 2..8),
        spans in 1usize..4,
        seed in any::<u64>(),
    ) {
        let mut r = common::rng(seed);
        let videos: Vec<Tensor> = lens.iter().map(|&n| common::tensor(&common::random_rows(&mut r, n, 3, 1.0))).collect();
        let profiles: Vec<SaliencyProfile> = lens.iter().map(|&n| SaliencyProfile((0..n).map(|_| r.random()).collect())).collect();
        let refs: Vec<&Tensor> = videos.iter().collect();
        let settings = MixSettings { spans, ..Default::default() };
        for m in mix_batch(&refs, &profiles, &settings, &mut seeded(seed)).unwrap() {
            prop_assert_ne!(m.receiver, m.donor);
            let v1 = &videos[m.receiver];
            prop_assert_eq!(m.frames.rows(), v1.rows());
            let replaced: usize = m.spans.iter().map(|(s, _)| s.len).sum();
            prop_assert_eq!(m.lambda, replaced as f64 / v1.rows() as f64);
            prop_assert!(m.lambda > 0.0 && m.lambda < 1.0);
        }
    }
}
