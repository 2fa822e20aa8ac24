//! Monte-Carlo comparison of `sample_mask` against a separately written
//! sampler of the same procedure (own generator, Box-Muller normals).

mod common;

use avinpaint::corruption::{audit_masks, sample_mask, Mask, MaskSpec};
use common::{moments, reference_draw, SplitMix};

#[test]
fn total_duration_moments_match_reference_sampler() {
    let spec = MaskSpec::default();
    let n = 10_000;
    let masks: Vec<Mask> = (0..n)
        .map(|s| sample_mask(s as u64, 149, &spec).unwrap())
        .collect();
    let ours: Vec<f64> = masks.iter().map(|m| m.masked_frames() as f64).collect();

    let mut rng = SplitMix(0x5EED);
    let refs: Vec<(usize, Vec<usize>, Vec<usize>)> =
        (0..n).map(|_| reference_draw(&mut rng, 149)).collect();
    let theirs: Vec<f64> = refs.iter().map(|r| r.0 as f64).collect();

    let (m1, s1) = moments(&ours);
    let (m2, s2) = moments(&theirs);
    println!("mean {m1:.3} vs {m2:.3}; std {s1:.3} vs {s2:.3}");
    assert!((m1 - m2).abs() / m2 < 0.02);
    assert!((s1 - s2).abs() / s2 < 0.02);

    let gc1: Vec<f64> = masks.iter().map(|m| m.gaps().len() as f64).collect();
    let gc2: Vec<f64> = refs.iter().map(|r| r.1.len() as f64).collect();
    let (g1, _) = moments(&gc1);
    let (g2, _) = moments(&gc2);
    assert!((g1 - g2).abs() / g2 < 0.03, "gap count mean {g1} vs {g2}");

    // first-gap start position: checks the placement distribution
    let f1: Vec<f64> = masks.iter().map(|m| m.gaps()[0].start as f64).collect();
    let f2: Vec<f64> = refs.iter().map(|r| r.2[0] as f64).collect();
    let (p1, _) = moments(&f1);
    let (p2, _) = moments(&f2);
    assert!((p1 - p2).abs() / p2 < 0.05, "first start mean {p1} vs {p2}");

    let audit = audit_masks(&masks, &spec);
    assert!(audit.violations.is_empty());
}
