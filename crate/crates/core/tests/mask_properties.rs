use idswap_core::backend::{BackendBundle, SyntheticConfig, SyntheticWorld};
use idswap_core::latent::{mask_from_selection, LatentMask, Selection};
use idswap_core::mask_anon::{generate_same_mask_face, region_mask, seg_swap, OperandPair, PixelMask, RegionSet};
use idswap_core::Image;
use proptest::prelude::*;

fn setup() -> (BackendBundle, LatentMask) {
    let world = SyntheticWorld::new(SyntheticConfig {
        n_channels: 32,
        n_attributes: 8,
        identity: "5-7:*".into(),
        ..Default::default()
    })
    .unwrap();
    let m = mask_from_selection(&Selection::Channels(world.identity_selection()), world.shape()).unwrap();
    (BackendBundle::synthetic(world), m)
}

fn source(b: &BackendBundle, seed: u64) -> Image {
    b.generate(&b.sample_random_latent(seed).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn replacement_shares_the_source_mask(seed in any::<u64>(), rseed in any::<u64>()) {
        let (b, m) = setup();
        let s = source(&b, seed);
        let r = generate_same_mask_face(&s, rseed, &m, OperandPair::SourceRandom, &b).unwrap();
        let recon = b.generate(&b.encode(&s).unwrap()).unwrap();
        prop_assert_eq!(b.parse_mask(&r).unwrap(), b.parse_mask(&recon).unwrap());
    }

    #[test]
    fn kept_pixels_bit_identical_and_swap_back_restores(
        seed in any::<u64>(),
        rseed in any::<u64>(),
        regions in prop::sample::select(vec!["eyes", "eyes+nose", "mouth+hair", "face", "full", "none"]),
    ) {
        let (b, m) = setup();
        let s = source(&b, seed);
        let r = generate_same_mask_face(&s, rseed, &m, OperandPair::SourceRandom, &b).unwrap();
        let mask = region_mask(&b.parse_mask(&s).unwrap(), &regions.parse::<RegionSet>().unwrap());
        let o = seg_swap(&s, &r, &mask).unwrap();
        for p in 0..s.n_pixels() {
            if mask.keeps(p) {
                for (x, y) in s.pixel(p).iter().zip(o.pixel(p)) {
                    prop_assert_eq!(x.to_bits(), y.to_bits());
                }
            } else {
                prop_assert_eq!(o.pixel(p), r.pixel(p));
            }
        }
        prop_assert_eq!(seg_swap(&o, &s, &mask).unwrap(), s.clone());
        let ones = PixelMask::ones(s.width(), s.height());
        prop_assert_eq!(seg_swap(&s, &r, &ones).unwrap(), s.clone());
        let zeros = PixelMask::zeros(s.width(), s.height());
        prop_assert_eq!(seg_swap(&s, &r, &zeros).unwrap(), r);
    }
}
