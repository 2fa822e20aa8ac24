use serde::Serialize;

use super::{backward, NeuralError, ParamStore, Tape, Var};

/// Magnitudes below this are compared absolutely rather than relatively.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamCheck {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passed(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }

    /// Parameters above `tolerance`.
    pub fn failures(&self, tolerance: f64) -> Vec<&ParamCheck> {
        self.params
            .iter()
            .filter(|p| p.max_rel_error >= tolerance)
            .collect()
    }
}

/// Compares analytic gradients of every trainable parameter with central
/// differences of step `step`. `loss` records a forward pass and returns the
/// scalar loss variable.
pub fn grad_check<F>(
    store: &mut ParamStore<f64>,
    step: f64,
    loss: F,
) -> Result<GradCheckReport, NeuralError>
where
    F: Fn(&ParamStore<f64>) -> Result<(Tape<f64>, Var), NeuralError>,
{
    let (tape, l) = loss(store)?;
    let grads = backward(&tape, l)?;
    drop(tape);
    let eval = |s: &ParamStore<f64>| -> Result<f64, NeuralError> {
        let (t, v) = loss(s)?;
        Ok(t.value(v).data()[0])
    };
    let ids: Vec<_> = store
        .iter()
        .filter(|(_, p)| p.trainable)
        .map(|(id, _)| id)
        .collect();
    let mut params = Vec::new();
    for id in ids {
        let name = store.get(id).name();
        let analytic = grads
            .get(id)
            .map(|g| g.data().to_vec())
            .unwrap_or_else(|| vec![0.0; store.value(id).len()]);
        let (mut max_rel, mut max_abs) = (0.0f64, 0.0f64);
        for (i, &a) in analytic.iter().enumerate() {
            let orig = store.value(id).data()[i];
            store.get_mut(id).value.data_mut()[i] = orig + step;
            let up = eval(store)?;
            store.get_mut(id).value.data_mut()[i] = orig - step;
            let down = eval(store)?;
            store.get_mut(id).value.data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
            max_rel = max_rel.max(rel);
            max_abs = max_abs.max(abs);
        }
        params.push(ParamCheck {
            name,
            entries: analytic.len(),
            max_rel_error: max_rel,
            max_abs_error: max_abs,
        });
    }
    let max_rel_error = params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        params,
        max_rel_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{Activation, Blstm, Dense, Lstm, Tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn input(seed: u64, rows: usize, cols: usize) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::matrix(
            rows,
            cols,
            (0..rows * cols)
                .map(|_| rng.random_range(-1.0..1.0))
                .collect(),
        )
        .unwrap()
    }

    fn target(seed: u64, n: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(0.0..1.0)).collect()
    }

    #[test]
    fn dense_layer() {
        for act in [
            Activation::Linear,
            Activation::Sigmoid,
            Activation::Tanh,
            Activation::Softmax,
        ] {
            let mut store = ParamStore::new();
            let d = Dense::new(&mut store, 1, "d", 5, 4, act);
            let x = input(2, 6, 5);
            let y = target(3, 24);
            let report = grad_check(&mut store, 1e-5, |s| {
                let mut t = Tape::new(1);
                let xv = t.input(x.clone());
                let o = d.forward(&mut t, s, xv)?;
                let l = t.mse(o, &y, None)?;
                Ok((t, l))
            })
            .unwrap();
            assert!(report.passed(1e-7), "{act:?}: {report:?}");
        }
    }

    #[test]
    fn lstm_layer() {
        let mut store = ParamStore::new();
        let l = Lstm::new(&mut store, 4, "l", 3, 4);
        let x = input(5, 10, 3);
        let y = target(6, 40);
        for reverse in [false, true] {
            let report = grad_check(&mut store, 1e-5, |s| {
                let mut t = Tape::new(2);
                let xv = t.input(x.clone());
                let o = crate::neural::lstm_forward(&mut t, s, xv, &l, reverse)?;
                let l = t.mse(o, &y, None)?;
                Ok((t, l))
            })
            .unwrap();
            assert!(report.passed(1e-5), "{report:?}");
        }
    }

    #[test]
    fn blstm_with_frozen_parameter() {
        let mut store = ParamStore::new();
        let bl = Blstm::new(&mut store, 7, "bl", 3, 3);
        store.set_trainable(bl.bwd.u, false);
        let x = input(8, 8, 3);
        let y = target(9, 48);
        let report = grad_check(&mut store, 1e-5, |s| {
            let mut t = Tape::new(1);
            let xv = t.input(x.clone());
            let o = bl.forward(&mut t, s, xv)?;
            let l = t.mse(o, &y, None)?;
            Ok((t, l))
        })
        .unwrap();
        assert!(report.passed(1e-5), "{report:?}");
        assert_eq!(report.params.len(), 5);
        assert!(report
            .params
            .iter()
            .all(|p| p.name != "bl.bwd.recurrent_kernel"));
    }
}
