use idswap_core::backend::{BackendBundle, SyntheticConfig, SyntheticWorld};
use idswap_core::search::{
    channel_score_scan, greedy_block_select, greedy_layer_select, layer_window_search, sample_pairs, SearchConfig,
    StopCriterion,
};
use idswap_core::LayerSet;

fn backend(identity: &str, identity_scale: f64) -> BackendBundle {
    BackendBundle::synthetic(
        SyntheticWorld::new(SyntheticConfig {
            n_channels: 32,
            n_attributes: 8,
            identity: identity.into(),
            identity_scale,
            ..Default::default()
        })
        .unwrap(),
    )
}

#[test]
fn scaling_identity_distances_keeps_rankings() {
    let m: Vec<usize> = (1..=6).collect();
    let cfg = SearchConfig::default();
    let mut results = Vec::new();
    for scale in [1.0, 2.5] {
        let b = backend("4:*;9:0-15;13:8-23", scale);
        let pairs = sample_pairs(&b, 8, 3).unwrap();
        let r = layer_window_search(&pairs, &m, &b, &cfg).unwrap();
        let picks = greedy_layer_select(&r, 3).unwrap();
        let table = channel_score_scan(&pairs, &LayerSet::new([4, 9, 13]), 8, &b, &cfg).unwrap();
        let blocks = greedy_block_select(&table, StopCriterion::Budget(64), &b, &pairs).unwrap();
        results.push((r.best_consecutive, r.top_individual.iter().map(|t| t.0).collect::<Vec<_>>(), picks, blocks.picks));
    }
    assert_eq!(results[0], results[1]);
}

#[test]
fn block_distance_curve_is_non_decreasing() {
    for seed in 0..5 {
        let b = backend("8:16-31;10:0-15", 1.0);
        let pairs = sample_pairs(&b, 10, seed).unwrap();
        let cfg = SearchConfig::default();
        let table = channel_score_scan(&pairs, &LayerSet::new([7, 8, 9, 10]), 4, &b, &cfg).unwrap();
        let sel = greedy_block_select(&table, StopCriterion::Budget(128), &b, &pairs).unwrap();
        assert!(sel.id_distance.windows(2).all(|w| w[1] >= w[0]), "{:?}", sel.id_distance);
    }
}

#[test]
fn reports_are_byte_identical_across_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let run = |tag: &str| {
        let b = backend("5-7:*", 1.0);
        let pairs = sample_pairs(&b, 6, 11).unwrap();
        let cfg = SearchConfig::default();
        let r = layer_window_search(&pairs, &[1, 2, 3], &b, &cfg).unwrap();
        let t = channel_score_scan(&pairs, &LayerSet::window(5, 3), 8, &b, &cfg).unwrap();
        let s = greedy_block_select(&t, StopCriterion::Threshold(0.9), &b, &pairs).unwrap();
        let paths = [
            dir.path().join(format!("{tag}-layers.csv")),
            dir.path().join(format!("{tag}-channels.csv")),
            dir.path().join(format!("{tag}-smoothed.csv")),
            dir.path().join(format!("{tag}-blocks.csv")),
        ];
        r.write_csv(&paths[0]).unwrap();
        t.write_csv(&paths[1]).unwrap();
        t.write_smoothed_csv(&paths[2]).unwrap();
        s.write_csv(&paths[3]).unwrap();
        paths.map(|p| std::fs::read(p).unwrap())
    };
    assert_eq!(run("a"), run("b"));
}
