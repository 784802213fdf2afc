use proptest::prelude::*;

use mstcn::data::{decode_features, encode_features, generate_synthetic, SynthConfig};
use mstcn::metrics::{
    evaluate, framewise_accuracy, labels_from_segments, segmental_edit_score, segments_from_labels,
    EvalOptions, Segment,
};
use mstcn::tensor::Tensor;

fn labels(max_class: usize, max_len: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec((0..max_class, 1..8usize), 1..max_len)
        .prop_map(|runs| runs.into_iter().flat_map(|(c, n)| std::iter::repeat(c).take(n)).collect())
}

fn stretch(labels: &[usize], k: usize) -> Vec<usize> {
    labels.iter().flat_map(|&c| std::iter::repeat(c).take(k)).collect()
}

proptest! {
    #[test]
    fn segments_round_trip(l in labels(5, 40)) {
        let segs = segments_from_labels(&l);
        prop_assert_eq!(labels_from_segments(&segs), l.clone());
        for w in segs.windows(2) {
            prop_assert_ne!(w[0].class_id, w[1].class_id);
            prop_assert_eq!(w[0].end + 1, w[1].start);
        }
        prop_assert_eq!(segs.iter().map(Segment::len).sum::<usize>(), l.len());
    }

    #[test]
    fn segment_metrics_ignore_time_scale(gt in labels(4, 20), seed in any::<u64>(), k in 2..5usize) {
        let pred: Vec<usize> = gt.iter().enumerate().map(|(i, &c)| {
            if (seed >> (i % 64)) & 3 == 0 { (c + 1) % 4 } else { c }
        }).collect();
        let opts = EvalOptions::default();
        let a = evaluate(&pred, &gt, &opts).unwrap();
        let b = evaluate(&stretch(&pred, k), &stretch(&gt, k), &opts).unwrap();
        prop_assert_eq!(a.f1.clone(), b.f1.clone());
        prop_assert_eq!(a.edit_score, b.edit_score);
        prop_assert!((a.frame_accuracy - b.frame_accuracy).abs() < 1e-9);
    }

    #[test]
    fn accuracy_ignores_class_renaming(gt in labels(4, 30), shift in 1..4usize) {
        let pred: Vec<usize> = gt.iter().enumerate().map(|(i, &c)| if i % 3 == 0 { (c + 1) % 4 } else { c }).collect();
        let rename = |v: &[usize]| v.iter().map(|&c| (c + shift) % 4).collect::<Vec<_>>();
        prop_assert_eq!(
            framewise_accuracy(&pred, &gt).unwrap(),
            framewise_accuracy(&rename(&pred), &rename(&gt)).unwrap()
        );
        let (sp, sg) = (segments_from_labels(&pred), segments_from_labels(&gt));
        let (rp, rg) = (segments_from_labels(&rename(&pred)), segments_from_labels(&rename(&gt)));
        prop_assert_eq!(segmental_edit_score(&sp, &sg), segmental_edit_score(&rp, &rg));
    }

    #[test]
    fn metrics_stay_in_range(gt in labels(5, 30), pred_seed in labels(5, 30)) {
        let pred: Vec<usize> = (0..gt.len()).map(|i| pred_seed[i % pred_seed.len()]).collect();
        let r = evaluate(&pred, &gt, &EvalOptions::default()).unwrap();
        prop_assert!((0.0..=100.0).contains(&r.frame_accuracy));
        prop_assert!((0.0..=100.0).contains(&r.edit_score));
        for (_, f) in &r.f1 {
            prop_assert!((0.0..=100.0).contains(f));
        }
        for c in &r.counts {
            prop_assert_eq!(c.tp + c.fp, r.num_pred_segments);
            prop_assert_eq!(c.tp + c.fn_, r.num_gt_segments);
        }
    }

    #[test]
    fn feature_encoding_round_trips(d in 1..6usize, values in prop::collection::vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), 1..60)) {
        let t = values.len();
        let data: Vec<f64> = (0..d).flat_map(|_| values.iter().map(|&v| v as f64)).collect();
        let x = Tensor::from_vec(&[d, t], data).unwrap();
        let bytes = encode_features(&x).unwrap();
        prop_assert_eq!(bytes.len(), 14 + 4 * d * t);
        let back = decode_features(&bytes, std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(back, x);
    }

    #[test]
    fn truncated_features_are_rejected(d in 1..4usize, t in 1..10usize, cut in 1..20usize) {
        let x = Tensor::new(&[d, t], 0.5).unwrap();
        let bytes = encode_features(&x).unwrap();
        let keep = bytes.len().saturating_sub(cut);
        prop_assert!(decode_features(&bytes[..keep], std::path::Path::new("mem")).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn generator_respects_its_configuration(seed in any::<u64>(), classes in 2..6usize, dim in 1..5usize) {
        let cfg = SynthConfig::with_random_structure(classes, dim, 3, 80.0, 10.0, 1.0, 0.5, seed).unwrap();
        let (mapping, samples) = generate_synthetic(&cfg).unwrap();
        prop_assert_eq!(mapping.len(), classes);
        prop_assert_eq!(samples.len(), 3);
        for s in &samples {
            prop_assert_eq!(s.feature_dim(), dim);
            prop_assert!(s.labels.iter().all(|&c| c < classes));
            prop_assert!(s.features.all_finite());
            prop_assert!(s.len() >= 1);
        }
        let (_, again) = generate_synthetic(&cfg).unwrap();
        prop_assert_eq!(again, samples);
    }
}
