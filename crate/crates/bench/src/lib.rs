//! Shared fixtures for the criterion benchmarks.

use idswap_core::backend::{BackendBundle, SyntheticConfig, SyntheticWorld};
use idswap_core::latent::{mask_from_selection, LatentMask, Selection};
use idswap_core::mask_anon::MaskAnonConfig;
use idswap_core::swapper::{build_ground_truth, GroundTruthPair};

/// Full-size synthetic world: 18 x 512 latents with the default planted
/// identity.
pub fn full_world() -> (BackendBundle, LatentMask) {
    world(SyntheticConfig::default())
}

/// Small world used where a benchmark iterates over many candidates.
pub fn toy_world() -> (BackendBundle, LatentMask) {
    world(SyntheticConfig {
        n_channels: 32,
        n_attributes: 6,
        identity: "5-9:0-15".into(),
        ..Default::default()
    })
}

pub fn world(cfg: SyntheticConfig) -> (BackendBundle, LatentMask) {
    let w = SyntheticWorld::new(cfg).expect("valid synthetic config");
    let mask = mask_from_selection(&Selection::Channels(w.identity_selection()), w.shape()).expect("mask");
    (BackendBundle::synthetic(w), mask)
}

pub fn ground_truth(b: &BackendBundle, mask: &LatentMask, n: usize) -> Vec<GroundTruthPair> {
    let images: Vec<_> = (0..n as u64)
        .map(|i| (format!("img{i}"), b.generate(&b.sample_random_latent(i).unwrap()).unwrap()))
        .collect();
    build_ground_truth(&images, 1, 0, mask, &MaskAnonConfig::default(), b).expect("ground truth")
}
