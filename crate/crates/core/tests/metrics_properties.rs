use idswap_core::metrics::{ia_score, minmax_normalize, privacy_metric, NormalizationStats};
use idswap_core::IdentityEmbedding;
use proptest::prelude::*;

fn stats() -> impl Strategy<Value = NormalizationStats> {
    (-10.0f64..10.0, 0.01f64..10.0).prop_map(|(lo, span)| NormalizationStats::new(lo, lo + span, "test").unwrap())
}

fn argmax(v: &[f64]) -> usize {
    v.iter().enumerate().fold(0, |b, (i, &x)| if x > v[b] { i } else { b })
}

proptest! {
    #[test]
    fn ia_is_monotone(s_id in stats(), s_attr in stats(), u in 0.0f64..1.0, v in 0.0f64..1.0, w in 0.0f64..0.99) {
        let lerp = |s: &NormalizationStats, t: f64| s.x_min + t * (s.x_max - s.x_min);
        let d_attr = lerp(&s_attr, u);
        let d_id = lerp(&s_id, v);
        let (lo, hi) = (lerp(&s_id, w), lerp(&s_id, w + 0.01));
        let a = ia_score(lo, d_attr, 1.0, 1.25, &s_id, &s_attr).ia;
        let b = ia_score(hi, d_attr, 1.0, 1.25, &s_id, &s_attr).ia;
        prop_assert!(b > a);
        let (lo, hi) = (lerp(&s_attr, w), lerp(&s_attr, w + 0.01));
        let a = ia_score(d_id, lo, 1.0, 1.25, &s_id, &s_attr).ia;
        let b = ia_score(d_id, hi, 1.0, 1.25, &s_id, &s_attr).ia;
        prop_assert!(b < a);
    }

    #[test]
    fn normalized_values_in_unit_interval(s in stats(), x in -100.0f64..100.0) {
        let h = minmax_normalize(x, &s);
        prop_assert!((0.0..=1.0).contains(&h));
    }

    #[test]
    fn affine_map_keeps_best_candidate(
        cands in prop::collection::vec((0.0f64..5.0, 0.0f64..5.0), 2..30),
        scale in 0.1f64..10.0,
        shift in -3.0f64..3.0,
    ) {
        let score = |ids: &[f64]| -> Vec<f64> {
            let si = NormalizationStats::from_values(ids, "id").unwrap();
            let attrs: Vec<f64> = cands.iter().map(|c| c.1).collect();
            let sa = NormalizationStats::from_values(&attrs, "attr").unwrap();
            ids.iter().zip(&attrs).map(|(&i, &a)| ia_score(i, a, 1.0, 1.25, &si, &sa).ia).collect()
        };
        let ids: Vec<f64> = cands.iter().map(|c| c.0).collect();
        let mapped: Vec<f64> = ids.iter().map(|d| scale * d + shift).collect();
        let (a, b) = (score(&ids), score(&mapped));
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
        }
        prop_assert_eq!(argmax(&a), argmax(&b));
    }

    #[test]
    fn privacy_mean_matches_oracle(pairs in prop::collection::vec(
        (prop::collection::vec(-3.0f64..3.0, 5), prop::collection::vec(-3.0f64..3.0, 5)), 1..50)
    ) {
        let emb: Vec<_> = pairs
            .iter()
            .map(|(a, b)| (IdentityEmbedding::new(a.clone()).unwrap(), IdentityEmbedding::new(b.clone()).unwrap()))
            .collect();
        let r = privacy_metric(&emb, 0.9).unwrap();
        let mut total = 0.0;
        for (a, b) in &pairs {
            let mut sq = 0.0;
            for k in 0..a.len() {
                sq += (a[k] - b[k]).powi(2);
            }
            total += sq.sqrt();
        }
        prop_assert!((r.mean_distance - total / pairs.len() as f64).abs() < 1e-9);
        prop_assert!((0.0..=1.0).contains(&r.p_above));
    }
}
