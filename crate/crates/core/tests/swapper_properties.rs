use idswap_core::backend::{BackendBundle, SyntheticConfig, SyntheticWorld};
use idswap_core::latent::blend;
use idswap_core::rng::rng;
use idswap_core::swapper::{swapper_forward, PassRule, SwapperArchitecture, SwapperNetwork};
use proptest::prelude::*;
use rand::Rng;

fn backend() -> BackendBundle {
    BackendBundle::synthetic(
        SyntheticWorld::new(SyntheticConfig {
            n_channels: 16,
            n_attributes: 4,
            identity: "5-9:0-7".into(),
            ..Default::default()
        })
        .unwrap(),
    )
}

fn network(b: &BackendBundle, rule: PassRule, seed: u64) -> SwapperNetwork {
    let arch = SwapperArchitecture {
        pass_rule: rule,
        ..SwapperArchitecture::standard(b.latent_shape()).unwrap()
    };
    let mut net = SwapperNetwork::new(arch, seed).unwrap();
    let mut r = rng(seed);
    for s in net.params.slices_mut() {
        s.iter_mut().for_each(|x| *x = r.random_range(-1.0..1.0));
    }
    net
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn alpha_bounded_and_blend_consistent(
        seed in any::<u64>(),
        s in any::<u64>(),
        t in any::<u64>(),
        rule in prop_oneof![Just(PassRule::Pass), Just(PassRule::LowWeight { alpha: 0.9 }), Just(PassRule::Learned)],
    ) {
        let b = backend();
        let net = network(&b, rule, seed);
        let (l_s, l_r) = (b.sample_random_latent(s).unwrap(), b.sample_random_latent(t).unwrap());
        let (alpha, l_hat) = swapper_forward(&net, &l_s, &l_r).unwrap();
        let c = l_s.n_channels();
        for (k, &a) in alpha.values().iter().enumerate() {
            let layer = k / c;
            let pass = !(5..=11).contains(&layer);
            match (pass, rule) {
                (true, PassRule::Pass) => prop_assert_eq!(a, 1.0),
                (true, PassRule::LowWeight { alpha }) => prop_assert_eq!(a, alpha),
                _ => prop_assert!(a > 0.0 && a < 1.0, "alpha {} at {}", a, k),
            }
        }
        let direct = blend(&l_s, &l_r, &alpha).unwrap();
        for (x, y) in direct.values().iter().zip(l_hat.values()) {
            prop_assert_eq!(x.to_bits(), y.to_bits());
        }
        if rule == PassRule::Pass {
            for l in (0..5).chain(12..18) {
                prop_assert_eq!(l_hat.row(l), l_s.row(l));
            }
        }
    }
}
