use super::{DspError, Waveform};

/// Standard speech pre-emphasis coefficient.
pub const DEFAULT_PREEMPHASIS: f64 = 0.97;

fn check_coeff(coeff: f64) -> Result<(), DspError> {
    if (0.0..1.0).contains(&coeff) {
        Ok(())
    } else {
        Err(DspError::InvalidCoefficient(coeff))
    }
}

/// First-order FIR high-pass: `y[0] = x[0]`, `y[n] = x[n] - coeff * x[n-1]`.
pub fn preemphasize(w: &Waveform, coeff: f64) -> Result<Waveform, DspError> {
    check_coeff(coeff)?;
    let x = w.samples();
    let mut y = Vec::with_capacity(x.len());
    if let Some(&first) = x.first() {
        y.push(first);
    }
    y.extend(x.windows(2).map(|p| p[1] - coeff * p[0]));
    Waveform::new(y, w.sample_rate())
}

/// Inverse of [`preemphasize`]: `y[n] = x[n] + coeff * y[n-1]`.
pub fn deemphasize(w: &Waveform, coeff: f64) -> Result<Waveform, DspError> {
    check_coeff(coeff)?;
    let mut prev = 0.0;
    let y = w
        .samples()
        .iter()
        .map(|&x| {
            prev = x + coeff * prev;
            prev
        })
        .collect();
    Waveform::new(y, w.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn wave(x: &[f64]) -> Waveform {
        Waveform::new(x.to_vec(), 8000).unwrap()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn preemphasis_examples() {
        let y = preemphasize(&wave(&[1.0, 1.0, 1.0]), 0.97).unwrap();
        assert_close(y.samples(), &[1.0, 0.03, 0.03], 1e-12);
        let y = preemphasize(&wave(&[0.5, -0.5, 0.5]), 0.97).unwrap();
        assert_close(y.samples(), &[0.5, -0.985, 0.985], 1e-12);
        let y = preemphasize(&wave(&[0.3, -0.2, 0.9]), 0.0).unwrap();
        assert_eq!(y.samples(), &[0.3, -0.2, 0.9]);
    }

    #[test]
    fn deemphasis_examples() {
        let y = deemphasize(&wave(&[1.0, 0.0, 0.0]), 0.5).unwrap();
        assert_close(y.samples(), &[1.0, 0.5, 0.25], 1e-15);
        let y = deemphasize(&wave(&[0.3, -0.2]), 0.0).unwrap();
        assert_eq!(y.samples(), &[0.3, -0.2]);
    }

    #[test]
    fn coefficient_range_is_checked() {
        assert!(preemphasize(&wave(&[1.0]), 1.0).is_err());
        assert!(preemphasize(&wave(&[1.0]), -0.1).is_err());
        assert!(deemphasize(&wave(&[1.0]), 1.5).is_err());
    }

    #[test]
    fn empty_input_is_fine() {
        assert!(preemphasize(&wave(&[]), 0.97).unwrap().is_empty());
    }

    proptest! {
        #[test]
        fn emphasis_pair_inverts(x in prop::collection::vec(-1.0f64..1.0, 1..400), c in 0.0f64..0.99) {
            let w = wave(&x);
            let back = deemphasize(&preemphasize(&w, c).unwrap(), c).unwrap();
            for (a, b) in x.iter().zip(back.samples()) {
                prop_assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
