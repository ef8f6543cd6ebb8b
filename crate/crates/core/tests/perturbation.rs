mod common;

use common::{direct_dft, radial};
use specdetect::backend::spectral::{SpectralReference, BANDS};
use specdetect::fixture::low_pass;
use specdetect::perturb::make_highpass_mask;
use specdetect::rng::{Domain, StreamKey};
use specdetect::{Backend, PerturbConfig, Perturber};

#[test]
fn mask_matches_independent_radial_rule() {
    for &(p, tau) in &[(8, 0.3), (14, 0.5), (16, 0.1), (28, 0.6), (5, 0.2)] {
        let mask = make_highpass_mask(p, tau);
        let mut kept = 0;
        for u in 0..p {
            for v in 0..p {
                let want = radial(u, v, p) > tau;
                assert_eq!(mask.is_kept(u, v), want, "P={p} tau={tau} bin ({u},{v})");
                kept += want as usize;
            }
        }
        assert_eq!(mask.kept_count(), kept);
    }
}

#[test]
fn delta_patches_are_high_pass_under_direct_dft() {
    let cfg = PerturbConfig {
        lambda: 0.02,
        tau: 0.4,
        patch_size: 8,
        seed: 11,
    };
    let perturber = Perturber::new(cfg).unwrap();
    let delta = perturber.delta(16, 24, 3, 4).unwrap();
    let p = 8;
    for pr in 0..2 {
        for pc in 0..3 {
            for ch in 0..3 {
                let plane: Vec<f64> = (0..p * p)
                    .map(|i| delta.get(pr * p + i / p, pc * p + i % p, ch))
                    .collect();
                let spec = direct_dft(&plane, p);
                let peak = spec.iter().map(|(a, b)| a.hypot(*b)).fold(0.0, f64::max);
                assert!(peak > 0.0);
                for u in 0..p {
                    for v in 0..p {
                        if radial(u, v, p) <= cfg.tau {
                            let (re, im) = spec[u * p + v];
                            assert!(re.hypot(im) <= 1e-9 * peak);
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn patches_use_row_major_patch_keys() {
    let cfg = PerturbConfig {
        patch_size: 14,
        ..Default::default()
    };
    let perturber = Perturber::new(cfg).unwrap();
    let delta = perturber.delta(28, 42, 3, 9).unwrap();
    let base = StreamKey::new(cfg.seed, Domain::Perturbation, 9);
    for (pr, pc) in [(0, 0), (0, 2), (1, 1)] {
        let patch = perturber.patch_noise(base.patch(pr * 3 + pc), 3);
        for r in 0..14 {
            for c in 0..14 {
                for ch in 0..3 {
                    let got = delta.get(pr as usize * 14 + r, pc as usize * 14 + c, ch);
                    assert_eq!(got, patch[(r * 14 + c) * 3 + ch]);
                }
            }
        }
    }
}

#[test]
fn image_index_and_seed_change_the_noise() {
    let p = Perturber::new(PerturbConfig::default()).unwrap();
    let a = p.delta(28, 28, 3, 0).unwrap();
    assert_ne!(a, p.delta(28, 28, 3, 1).unwrap());
    let q = Perturber::new(PerturbConfig {
        seed: 1,
        ..Default::default()
    })
    .unwrap();
    assert_ne!(a, q.delta(28, 28, 3, 0).unwrap());
    assert_eq!(a, p.delta(28, 28, 3, 0).unwrap());
}

fn band_energy(features: &[f64], reference: &SpectralReference, band: usize) -> f64 {
    let tiles = reference.tiles_per_side().pow(2);
    (0..3)
        .flat_map(|ch| (0..tiles).map(move |t| (ch, t)))
        .map(|(ch, t)| features[reference.feature_index(ch, t, band)])
        .sum()
}

#[test]
fn spectral_features_separate_white_noise_from_low_pass() {
    let noise = common::uniform_image(64, 64, 5);
    let smooth = low_pass(&noise, 0.2);
    let reference = SpectralReference::new(64).unwrap();
    let a = reference.embed(&noise).unwrap();
    let b = reference.embed(&smooth).unwrap();
    let top = BANDS - 1;
    let high_gap =
        band_energy(a.values(), &reference, top) - band_energy(b.values(), &reference, top);
    let low_gap =
        (band_energy(a.values(), &reference, 0) - band_energy(b.values(), &reference, 0)).abs();
    assert!(high_gap > 10.0 * low_gap, "high {high_gap} low {low_gap}");
}
