use num_complex::Complex64;

use super::{ComplexSpectrogram, DspError, MagnitudeSpectrogram, Stft, StftParams, Waveform};

/// Per-iteration spectral inconsistency, `trace[k]` measured on the estimate
/// after `k` projections (`trace[0]` is the initial estimate).
#[derive(Debug, Clone, PartialEq)]
pub struct GriffinLimTrace {
    pub objective: Vec<f64>,
}

/// Squared distance between `|STFT(x)|` and the target magnitude, summed over
/// the full two-sided spectrum (interior one-sided bins count twice).
pub fn inconsistency(c: &ComplexSpectrogram, mag: &MagnitudeSpectrogram, fft_len: usize) -> f64 {
    let bins = c.bins();
    let nyquist = if fft_len % 2 == 0 {
        Some(bins - 1)
    } else {
        None
    };
    c.data()
        .iter()
        .zip(mag.data())
        .enumerate()
        .map(|(i, (x, m))| {
            let k = i % bins;
            let weight = if k == 0 || Some(k) == nyquist {
                1.0
            } else {
                2.0
            };
            weight * (x.norm() - m).powi(2)
        })
        .sum()
}

fn check_inputs(
    mag: &MagnitudeSpectrogram,
    iters: usize,
    params: &StftParams,
) -> Result<(), DspError> {
    if iters == 0 {
        return Err(DspError::NoIterations);
    }
    if mag.bins() != params.bins() {
        return Err(DspError::DimensionMismatch(format!(
            "{} magnitude bins, expected {}",
            mag.bins(),
            params.bins()
        )));
    }
    if let Some(i) = mag.data().iter().position(|v| !(*v >= 0.0)) {
        return Err(DspError::NegativeMagnitude(i));
    }
    Ok(())
}

/// Griffin-Lim phase recovery from zero phase.
pub fn griffin_lim(
    mag: &MagnitudeSpectrogram,
    iters: usize,
    params: &StftParams,
) -> Result<Waveform, DspError> {
    Ok(griffin_lim_traced(mag, iters, params, None)?.0)
}

/// Griffin-Lim with an optional initial phase grid, returning the objective
/// trace alongside the waveform.
pub fn griffin_lim_traced(
    mag: &MagnitudeSpectrogram,
    iters: usize,
    params: &StftParams,
    init_phase: Option<&[f64]>,
) -> Result<(Waveform, GriffinLimTrace), DspError> {
    check_inputs(mag, iters, params)?;
    let plan = Stft::new(*params)?;
    let rate = mag.sample_rate();
    let start = match init_phase {
        Some(phase) => {
            if phase.len() != mag.data().len() {
                return Err(DspError::DimensionMismatch(
                    "initial phase grid size".into(),
                ));
            }
            mag.with_phase(phase)
        }
        None => mag.with_phase(&vec![0.0; mag.data().len()]),
    };
    let mut x = plan.inverse(&start)?;
    let mut objective = Vec::with_capacity(iters + 1);
    let mut projected = vec![Complex64::new(0.0, 0.0); mag.data().len()];
    for _ in 0..iters {
        let c = plan.forward(&x, rate)?;
        objective.push(inconsistency(&c, mag, params.fft_len));
        for ((slot, v), &m) in projected.iter_mut().zip(c.data()).zip(mag.data()) {
            let n = v.norm();
            *slot = if n > 0.0 {
                v * (m / n)
            } else {
                Complex64::new(m, 0.0)
            };
        }
        let target = ComplexSpectrogram::new(mag.frames(), mag.bins(), projected.clone(), rate)?;
        x = plan.inverse(&target)?;
    }
    let c = plan.forward(&x, rate)?;
    objective.push(inconsistency(&c, mag, params.fft_len));
    Ok((Waveform::new(x, rate)?, GriffinLimTrace { objective }))
}
