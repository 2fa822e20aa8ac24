use super::LossError;

/// Largest number of alignment paths the brute-force oracle will enumerate.
pub const BRUTE_FORCE_LIMIT: f64 = 1e6;

/// Negative log-likelihood and its gradient with respect to the logits.
#[derive(Debug, Clone, PartialEq)]
pub struct CtcOutput {
    /// `+inf` when no alignment exists.
    pub nll: f64,
    /// Row-major `T x (V + 1)`; all zeros for infeasible targets.
    pub grad: Vec<f64>,
    pub feasible: bool,
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn log_softmax_rows(logits: &[f64], classes: usize) -> Vec<f64> {
    let mut out = vec![0.0; logits.len()];
    for (row, o) in logits.chunks(classes).zip(out.chunks_mut(classes)) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        for (oi, &v) in o.iter_mut().zip(row) {
            *oi = v - lse;
        }
    }
    out
}

fn check(logits: &[f64], frames: usize, classes: usize, target: &[usize]) -> Result<(), LossError> {
    if classes == 0 || logits.len() != frames * classes {
        return Err(LossError::Shape(format!(
            "{} logits for {frames} frames of {classes} classes",
            logits.len()
        )));
    }
    if let Some(&l) = target.iter().find(|&&l| l >= classes - 1) {
        return Err(LossError::LabelOutOfRange {
            label: l,
            vocab: classes - 1,
        });
    }
    if let Some(i) = logits.iter().position(|v| !v.is_finite()) {
        return Err(LossError::NonFinite(format!("logit {i}")));
    }
    Ok(())
}

/// Whether `frames` steps admit an alignment of `target` (repeats need a blank).
pub fn is_feasible(frames: usize, target: &[usize]) -> bool {
    let repeats = target.windows(2).filter(|w| w[0] == w[1]).count();
    frames >= target.len() + repeats
}

/// CTC negative log-likelihood of `target` under per-frame softmax of
/// `logits` (`frames x classes`, blank is the last class), by log-space
/// forward-backward over the blank-extended target.
pub fn ctc_loss(
    logits: &[f64],
    frames: usize,
    classes: usize,
    target: &[usize],
) -> Result<CtcOutput, LossError> {
    check(logits, frames, classes, target)?;
    if frames == 0 || !is_feasible(frames, target) {
        return Ok(CtcOutput {
            nll: f64::INFINITY,
            grad: vec![0.0; logits.len()],
            feasible: false,
        });
    }
    let blank = classes - 1;
    let lp = log_softmax_rows(logits, classes);
    let ext: Vec<usize> = std::iter::once(blank)
        .chain(target.iter().flat_map(|&l| [l, blank]))
        .collect();
    let s_len = ext.len();
    let skip = |s: usize| s >= 2 && ext[s] != blank && ext[s] != ext[s - 2];
    let ninf = f64::NEG_INFINITY;

    let mut alpha = vec![ninf; frames * s_len];
    alpha[0] = lp[blank];
    if s_len > 1 {
        alpha[1] = lp[ext[1]];
    }
    for t in 1..frames {
        let (prev, cur) = alpha.split_at_mut(t * s_len);
        let prev = &prev[(t - 1) * s_len..];
        for s in 0..s_len {
            let mut a = prev[s];
            if s >= 1 {
                a = log_add(a, prev[s - 1]);
            }
            if skip(s) {
                a = log_add(a, prev[s - 2]);
            }
            cur[s] = if a == ninf {
                ninf
            } else {
                a + lp[t * classes + ext[s]]
            };
        }
    }

    // beta excludes the emission at its own frame
    let mut beta = vec![ninf; frames * s_len];
    let last = (frames - 1) * s_len;
    beta[last + s_len - 1] = 0.0;
    if s_len > 1 {
        beta[last + s_len - 2] = 0.0;
    }
    for t in (0..frames - 1).rev() {
        for s in 0..s_len {
            let next = |s2: usize| beta[(t + 1) * s_len + s2] + lp[(t + 1) * classes + ext[s2]];
            let mut b = next(s);
            if s + 1 < s_len {
                b = log_add(b, next(s + 1));
            }
            if s + 2 < s_len && skip(s + 2) {
                b = log_add(b, next(s + 2));
            }
            beta[t * s_len + s] = b;
        }
    }

    let mut log_p = alpha[last + s_len - 1];
    if s_len > 1 {
        log_p = log_add(log_p, alpha[last + s_len - 2]);
    }

    let mut grad: Vec<f64> = lp.iter().map(|v| v.exp()).collect();
    for t in 0..frames {
        for s in 0..s_len {
            let g = alpha[t * s_len + s] + beta[t * s_len + s] - log_p;
            if g > ninf {
                grad[t * classes + ext[s]] -= g.exp();
            }
        }
    }
    Ok(CtcOutput {
        nll: -log_p,
        grad,
        feasible: true,
    })
}

fn collapse(path: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &p in path {
        if Some(p) != prev && p != blank {
            out.push(p);
        }
        prev = Some(p);
    }
    out
}

/// Exhaustive CTC likelihood: sums the probability of every frame-level path
/// that collapses to `target`.
pub fn ctc_brute_force(
    logits: &[f64],
    frames: usize,
    classes: usize,
    target: &[usize],
) -> Result<f64, LossError> {
    check(logits, frames, classes, target)?;
    let paths = (classes as f64).powi(frames as i32);
    if paths > BRUTE_FORCE_LIMIT {
        return Err(LossError::TooLarge { paths });
    }
    let probs: Vec<f64> = log_softmax_rows(logits, classes)
        .iter()
        .map(|v| v.exp())
        .collect();
    let mut path = vec![0usize; frames];
    let mut total = 0.0;
    loop {
        if collapse(&path, classes - 1) == target {
            total += path
                .iter()
                .enumerate()
                .map(|(t, &k)| probs[t * classes + k])
                .product::<f64>();
        }
        // odometer increment
        let mut i = 0;
        while i < frames {
            path[i] += 1;
            if path[i] < classes {
                break;
            }
            path[i] = 0;
            i += 1;
        }
        if i == frames {
            break;
        }
    }
    Ok(-total.ln())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_enumerated_cases() {
        let one = ctc_loss(&[0.0, 0.0], 1, 2, &[0]).unwrap();
        assert!((one.nll - 2f64.ln()).abs() < 1e-12);
        let two = ctc_loss(&[0.0; 4], 2, 2, &[0]).unwrap();
        assert!((two.nll + 0.75f64.ln()).abs() < 1e-12);
        let bf = ctc_brute_force(&[0.0; 4], 2, 2, &[0]).unwrap();
        assert!((bf + 0.75f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn infeasible_target() {
        let out = ctc_loss(&[0.0; 6], 2, 3, &[0, 1, 0]).unwrap();
        assert!(out.nll.is_infinite() && !out.feasible);
        assert!(out.grad.iter().all(|&g| g == 0.0));
        // a repeat needs a separating blank
        assert!(!ctc_loss(&[0.0; 6], 2, 3, &[1, 1]).unwrap().feasible);
        assert!(ctc_loss(&[0.0; 9], 3, 3, &[1, 1]).unwrap().feasible);
    }

    #[test]
    fn empty_target_is_all_blank() {
        let logits = [0.3, -0.2, 1.0, 0.5, 0.1, -0.7];
        let out = ctc_loss(&logits, 2, 3, &[]).unwrap();
        let lp = log_softmax_rows(&logits, 3);
        assert!((out.nll + lp[2] + lp[5]).abs() < 1e-12);
    }

    #[test]
    fn saturated_alignment_has_zero_loss() {
        // target [0, 1] over 4 frames, logits strongly favour 0 0 1 blank
        let big = 60.0;
        let mut logits = vec![0.0; 12];
        for (t, k) in [(0, 0), (1, 0), (2, 1), (3, 2)] {
            logits[t * 3 + k] = big;
        }
        let out = ctc_loss(&logits, 4, 3, &[0, 1]).unwrap();
        assert!(out.nll < 1e-20);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            ctc_loss(&[0.0; 4], 2, 2, &[1]),
            Err(LossError::LabelOutOfRange { .. })
        ));
        assert!(ctc_loss(&[0.0; 5], 2, 2, &[0]).is_err());
        assert!(matches!(
            ctc_brute_force(&vec![0.0; 40], 20, 2, &[0]),
            Err(LossError::TooLarge { .. })
        ));
    }

    #[test]
    fn matches_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        while checked < 1000 {
            let frames = rng.random_range(1..=5);
            let vocab = rng.random_range(1..=3);
            let len = rng.random_range(0..=3);
            let target: Vec<usize> = (0..len).map(|_| rng.random_range(0..vocab)).collect();
            let logits: Vec<f64> = (0..frames * (vocab + 1))
                .map(|_| rng.random_range(-3.0..3.0))
                .collect();
            let fast = ctc_loss(&logits, frames, vocab + 1, &target).unwrap();
            let slow = ctc_brute_force(&logits, frames, vocab + 1, &target).unwrap();
            if fast.feasible {
                assert!((fast.nll - slow).abs() < 1e-9, "{fast:?} vs {slow}");
                checked += 1;
            } else {
                assert!(slow.is_infinite());
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let (frames, classes) = (6, 4);
            let target = [0, 2, 2];
            let logits: Vec<f64> = (0..frames * classes)
                .map(|_| rng.random_range(-2.0..2.0))
                .collect();
            let out = ctc_loss(&logits, frames, classes, &target).unwrap();
            for i in 0..logits.len() {
                let mut p = logits.clone();
                p[i] += 1e-6;
                let up = ctc_loss(&p, frames, classes, &target).unwrap().nll;
                p[i] -= 2e-6;
                let down = ctc_loss(&p, frames, classes, &target).unwrap().nll;
                let fd = (up - down) / 2e-6;
                assert!((fd - out.grad[i]).abs() < 1e-7, "{fd} vs {}", out.grad[i]);
            }
        }
    }

    #[test]
    fn long_sequences_do_not_underflow() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (frames, classes) = (149, 40);
        let logits: Vec<f64> = (0..frames * classes)
            .map(|_| rng.random_range(-5.0..5.0))
            .collect();
        let target: Vec<usize> = (0..45).map(|_| rng.random_range(0..39)).collect();
        let out = ctc_loss(&logits, frames, classes, &target).unwrap();
        assert!(out.nll.is_finite() && out.nll > 0.0);
        assert!(out.grad.iter().all(|g| g.is_finite()));
    }

    proptest! {
        #[test]
        fn gradient_rows_sum_to_zero(
            seed in 0u64..1000,
            frames in 3usize..12,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let classes = 4;
            let target: Vec<usize> = (0..frames / 3).map(|_| rng.random_range(0..3)).collect();
            let logits: Vec<f64> =
                (0..frames * classes).map(|_| rng.random_range(-4.0..4.0)).collect();
            let out = ctc_loss(&logits, frames, classes, &target).unwrap();
            prop_assume!(out.feasible);
            for row in out.grad.chunks(classes) {
                prop_assert!(row.iter().sum::<f64>().abs() < 1e-9);
            }
        }

        #[test]
        fn shift_invariant_per_frame(
            seed in 0u64..1000,
            shift in -50.0f64..50.0,
            at in 0usize..5,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (frames, classes) = (5, 3);
            let logits: Vec<f64> =
                (0..frames * classes).map(|_| rng.random_range(-3.0..3.0)).collect();
            let mut shifted = logits.clone();
            shifted[at * classes..(at + 1) * classes].iter_mut().for_each(|v| *v += shift);
            let a = ctc_loss(&logits, frames, classes, &[0, 1]).unwrap().nll;
            let b = ctc_loss(&shifted, frames, classes, &[0, 1]).unwrap().nll;
            prop_assert!((a - b).abs() < 1e-9);
        }
    }
}
