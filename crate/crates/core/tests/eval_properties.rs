use idswap_core::eval::{
    attribute_distribution, identification_rank, identity_diversity, roc_from_distances, DiversityConfig, Labeled,
};
use idswap_core::rng::rng;
use idswap_core::{AttributeVector, IdentityEmbedding};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn normal(r: &mut impl Rng) -> f64 {
    StandardNormal.sample(r)
}

fn pair_count_auc(genuine: &[f64], impostor: &[f64]) -> f64 {
    let mut wins = 0.0;
    for &g in genuine {
        for &i in impostor {
            if g < i {
                wins += 1.0;
            } else if g == i {
                wins += 0.5;
            }
        }
    }
    wins / (genuine.len() * impostor.len()) as f64
}

// coarse grid so ties are common
fn distances(max: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0u32..20).prop_map(|k| k as f64 * 0.1), 1..=max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn auc_equals_pair_counting(g in distances(50), i in distances(50)) {
        let r = roc_from_distances(&g, &i).unwrap();
        prop_assert!((r.auc - pair_count_auc(&g, &i)).abs() <= 1e-12);
        prop_assert!(r.points.windows(2).all(|w| w[1].tpr >= w[0].tpr && w[1].fpr >= w[0].fpr));
        prop_assert!((0.0..=1.0).contains(&r.accuracy));
    }

    #[test]
    fn rank_ignores_increasing_transforms(
        gallery in prop::collection::vec((0usize..6, prop::collection::vec(-2.0f64..2.0, 3)), 1..20),
        probes in prop::collection::vec((0usize..6, prop::collection::vec(-2.0f64..2.0, 3)), 1..10),
    ) {
        let lab = |v: &[(usize, Vec<f64>)], f: &dyn Fn(f64) -> f64| -> Vec<Labeled> {
            v.iter().map(|(l, e)| (format!("id{l}"), IdentityEmbedding::new(e.iter().map(|&x| f(x)).collect()).unwrap())).collect()
        };
        let ids: std::collections::BTreeSet<usize> = gallery.iter().map(|g| g.0).collect();
        let probes: Vec<_> = probes.into_iter().filter(|p| ids.contains(&p.0)).collect();
        prop_assume!(!probes.is_empty());
        // a uniform scaling plus translation of every embedding is a strictly
        // increasing transform of every pairwise distance
        let a = identification_rank(&lab(&gallery, &|x| x), &lab(&probes, &|x| x)).unwrap();
        let b = identification_rank(&lab(&gallery, &|x| 3.0 * x + 1.0), &lab(&probes, &|x| 3.0 * x + 1.0)).unwrap();
        prop_assert_eq!(&a.ranks, &b.ranks);
        prop_assert!(a.ranks.iter().all(|&r| r >= 1.0 && r <= a.n_identities as f64));
    }

    #[test]
    fn drift_zero_on_identity_and_symmetric(
        rows in prop::collection::vec((prop::collection::vec(0.0f64..1.0, 4), prop::collection::vec(0.0f64..1.0, 4)), 1..30),
    ) {
        let before: Vec<_> = rows.iter().map(|r| AttributeVector::new(r.0.clone()).unwrap()).collect();
        let after: Vec<_> = rows.iter().map(|r| AttributeVector::new(r.1.clone()).unwrap()).collect();
        let attrs = [0, 1, 2, 3];
        prop_assert!(attribute_distribution(&before, &before, &attrs, 0.5).unwrap().drift.iter().all(|&d| d == 0.0));
        let ab = attribute_distribution(&before, &after, &attrs, 0.5).unwrap();
        let ba = attribute_distribution(&after, &before, &attrs, 0.5).unwrap();
        prop_assert_eq!(ab.drift, ba.drift);
        prop_assert!(ab.before.iter().chain(&ab.after).all(|r| (0.0..=1.0).contains(r)));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn diversity_ignores_input_order(seed in any::<u64>(), shuffle in any::<u64>()) {
        let mut r = rng(seed);
        let mut e: Vec<IdentityEmbedding> = (0..30)
            .map(|i| {
                let c = (i % 4) as f64 * 3.0;
                IdentityEmbedding::new((0..3).map(|_| c + normal(&mut r) * 0.7).collect::<Vec<f64>>()).unwrap()
            })
            .collect();
        let cfg = DiversityConfig { k_grid: (2..=8).collect(), ..Default::default() };
        let a = identity_diversity(&e, Some(4), &cfg).unwrap();
        e.shuffle(&mut rng(shuffle));
        prop_assert_eq!(a, identity_diversity(&e, Some(4), &cfg).unwrap());
    }
}

#[test]
fn null_auc_is_one_half() {
    let mut r = rng(7);
    let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| normal(&mut r)).collect() };
    let (g, i) = (draw(5_000), draw(5_000));
    let auc = roc_from_distances(&g, &i).unwrap().auc;
    assert!((auc - 0.5).abs() <= 0.05, "{auc}");
}

#[test]
fn random_probe_rank_is_mid_gallery() {
    let g = 50;
    let mut r = rng(11);
    let mut total = 0.0;
    for _ in 0..1_000 {
        let truth = r.random_range(0..g);
        let mut emb = || IdentityEmbedding::new((0..8).map(|_| normal(&mut r)).collect()).unwrap();
        let gallery: Vec<Labeled> = (0..g).map(|k| (format!("id{k}"), emb())).collect();
        let probe = (format!("id{truth}"), emb());
        total += identification_rank(&gallery, &[probe]).unwrap().ranks[0];
    }
    let mean = total / 1_000.0;
    let expected = (g as f64 + 1.0) / 2.0;
    assert!((mean - expected).abs() <= 0.1 * expected, "{mean}");
}

#[test]
fn separated_clusters_counted() {
    let mut r = rng(3);
    let e: Vec<IdentityEmbedding> = (0..50)
        .map(|i| {
            let mut v = vec![0.0; 5];
            v[i % 5] = 20.0;
            IdentityEmbedding::new(v.into_iter().map(|x| x + 0.1 * normal(&mut r)).collect()).unwrap()
        })
        .collect();
    let report = identity_diversity(&e, Some(5), &DiversityConfig::default()).unwrap();
    assert_eq!(report.count, 5);
}
