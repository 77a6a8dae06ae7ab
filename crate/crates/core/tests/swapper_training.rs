use idswap_core::backend::{BackendBundle, SyntheticConfig, SyntheticWorld};
use idswap_core::latent::{blend, mask_from_selection, LatentMask, Selection};
use idswap_core::mask_anon::MaskAnonConfig;
use idswap_core::metrics::identity_distance;
use idswap_core::swapper::{
    build_ground_truth, split, swapper_forward, train_swapper, GroundTruthPair, SwapperArchitecture, SwapperNetwork,
    TrainingConfig,
};

fn setup(n: usize) -> (BackendBundle, LatentMask, Vec<GroundTruthPair>) {
    let cfg = SyntheticConfig {
        n_channels: 32,
        n_attributes: 6,
        identity: "5-9:0-15".into(),
        ..Default::default()
    };
    let world = SyntheticWorld::new(cfg).unwrap();
    let mask = mask_from_selection(&Selection::Channels(world.identity_selection()), world.shape()).unwrap();
    let b = BackendBundle::synthetic(world);
    let images: Vec<_> = (0..n)
        .map(|i| (format!("img{i}"), b.generate(&b.sample_random_latent(1000 + i as u64).unwrap()).unwrap()))
        .collect();
    let pairs = build_ground_truth(&images, 1, 0, &mask, &MaskAnonConfig::default(), &b).unwrap();
    (b, mask, pairs)
}

#[test]
fn ground_truth_is_the_identity_blend() {
    let (_, mask, pairs) = setup(20);
    for p in &pairs {
        let ideal = blend(&p.l_s, &p.l_r, &mask).unwrap();
        assert!(ideal.max_abs_diff(&p.t_truth).unwrap() < 1e-5);
    }
}

#[test]
fn toy_training_converges_and_generalizes() {
    let (b, _, pairs) = setup(200);
    let (train, test) = split(&pairs, 0.9);
    let tc = TrainingConfig {
        weight_decay: 0.1,
        ..Default::default()
    };
    let net = SwapperNetwork::new(SwapperArchitecture::standard(b.latent_shape()).unwrap(), 0).unwrap();
    let out = train_swapper(&tc, net, train, test, &b).unwrap();
    assert_eq!(out.history.len(), 50);

    let losses: Vec<f64> = out.history.iter().map(|e| e.train).collect();
    let smoothed: Vec<f64> = losses.windows(5).map(|w| w.iter().sum::<f64>() / 5.0).collect();
    assert!(smoothed[..10].windows(2).all(|w| w[1] < w[0]), "{smoothed:?}");

    let last = out.history.last().unwrap();
    assert!(last.test.unwrap() <= 2.0 * last.train, "{last:?}");

    let (mut got, mut want) = (0.0, 0.0);
    for p in &pairs {
        let (alpha, l_hat) = swapper_forward(&out.network, &p.l_s, &p.l_r).unwrap();
        assert!(alpha.values().iter().all(|&a| a > 0.0 && a <= 1.0));
        let img = b.generate(&l_hat).unwrap();
        got += identity_distance(&b.embed_identity(&img).unwrap(), &p.source_embedding).unwrap();
        let target = b.generate(&p.t_truth).unwrap();
        want += identity_distance(&b.embed_identity(&target).unwrap(), &p.source_embedding).unwrap();
    }
    assert!(got >= 0.9 * want, "{got} vs {want}");
}
