//! LSTM recurrence kernels. Gate blocks in the `4h` columns are ordered
//! input, forget, cell candidate, output.

use super::Real;

fn sigmoid<R: Real>(x: R) -> R {
    R::one() / (R::one() + (-x).exp())
}

/// Saved activations for the backward pass, all time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmCache<R> {
    pub gates: Vec<R>,
    pub cell: Vec<R>,
    pub tanh_cell: Vec<R>,
}

pub struct LstmDims {
    pub steps: usize,
    pub batch: usize,
    pub input: usize,
    pub hidden: usize,
    pub reverse: bool,
}

impl LstmDims {
    /// Time index processed at step `s`.
    fn time(&self, s: usize) -> usize {
        if self.reverse {
            self.steps - 1 - s
        } else {
            s
        }
    }
}

/// Returns hidden states (`steps*batch x hidden`) and the cache.
pub fn forward<R: Real>(
    d: &LstmDims,
    x: &[R],
    w: &[R],
    u: &[R],
    b: &[R],
) -> (Vec<R>, LstmCache<R>) {
    let (bs, h) = (d.batch, d.hidden);
    let g4 = 4 * h;
    let rows = d.steps * bs;
    let mut gates = vec![R::zero(); rows * g4];
    R::gemm(rows, d.input, g4, x, false, w, false, &mut gates, false);
    for row in gates.chunks_mut(g4) {
        row.iter_mut().zip(b).for_each(|(z, &bb)| *z += bb);
    }
    let mut hs = vec![R::zero(); rows * h];
    let mut cell = vec![R::zero(); rows * h];
    let mut tanh_cell = vec![R::zero(); rows * h];
    let mut prev_t = None;
    for s in 0..d.steps {
        let t = d.time(s);
        let z = &mut gates[t * bs * g4..(t + 1) * bs * g4];
        if let Some(pt) = prev_t {
            let hp = &hs[pt * bs * h..(pt + 1) * bs * h];
            R::gemm(bs, h, g4, hp, false, u, false, z, true);
        }
        for bi in 0..bs {
            let zr = &mut z[bi * g4..(bi + 1) * g4];
            let base = (t * bs + bi) * h;
            for j in 0..h {
                let i = sigmoid(zr[j]);
                let f = sigmoid(zr[h + j]);
                let g = zr[2 * h + j].tanh();
                let o = sigmoid(zr[3 * h + j]);
                zr[j] = i;
                zr[h + j] = f;
                zr[2 * h + j] = g;
                zr[3 * h + j] = o;
                let c_prev = match prev_t {
                    Some(pt) => cell[(pt * bs + bi) * h + j],
                    None => R::zero(),
                };
                let c = f * c_prev + i * g;
                let tc = c.tanh();
                cell[base + j] = c;
                tanh_cell[base + j] = tc;
                hs[base + j] = o * tc;
            }
        }
        prev_t = Some(t);
    }
    (
        hs,
        LstmCache {
            gates,
            cell,
            tanh_cell,
        },
    )
}

/// Gradients of the LSTM given `dh` with respect to its outputs; `dx` is
/// empty unless requested.
pub struct LstmGrads<R> {
    pub dx: Vec<R>,
    pub dw: Vec<R>,
    pub du: Vec<R>,
    pub db: Vec<R>,
}

#[allow(clippy::too_many_arguments)]
pub fn backward<R: Real>(
    d: &LstmDims,
    x: &[R],
    w: &[R],
    u: &[R],
    hs: &[R],
    cache: &LstmCache<R>,
    dh_out: &[R],
    need_dx: bool,
) -> LstmGrads<R> {
    let (bs, h) = (d.batch, d.hidden);
    let g4 = 4 * h;
    let rows = d.steps * bs;
    let mut dz = vec![R::zero(); rows * g4];
    let mut h_prev = vec![R::zero(); rows * h];
    let mut dh_next = vec![R::zero(); bs * h];
    let mut dc_next = vec![R::zero(); bs * h];
    let one = R::one();
    for s in (0..d.steps).rev() {
        let t = d.time(s);
        let pt = if s > 0 { Some(d.time(s - 1)) } else { None };
        for bi in 0..bs {
            let row = t * bs + bi;
            let gr = &cache.gates[row * g4..(row + 1) * g4];
            let dzr = &mut dz[row * g4..(row + 1) * g4];
            for j in 0..h {
                let (i, f, g, o) = (gr[j], gr[h + j], gr[2 * h + j], gr[3 * h + j]);
                let tc = cache.tanh_cell[row * h + j];
                let c_prev = match pt {
                    Some(p) => cache.cell[(p * bs + bi) * h + j],
                    None => R::zero(),
                };
                let dh = dh_out[row * h + j] + dh_next[bi * h + j];
                let dout = dh * tc;
                let dc = dc_next[bi * h + j] + dh * o * (one - tc * tc);
                dc_next[bi * h + j] = dc * f;
                dzr[j] = dc * g * i * (one - i);
                dzr[h + j] = dc * c_prev * f * (one - f);
                dzr[2 * h + j] = dc * i * (one - g * g);
                dzr[3 * h + j] = dout * o * (one - o);
            }
        }
        let dzt = &dz[t * bs * g4..(t + 1) * bs * g4];
        if let Some(p) = pt {
            R::gemm(bs, g4, h, dzt, false, u, true, &mut dh_next, false);
            h_prev[t * bs * h..(t + 1) * bs * h].copy_from_slice(&hs[p * bs * h..(p + 1) * bs * h]);
        }
    }
    let mut dw = vec![R::zero(); d.input * g4];
    R::gemm(d.input, rows, g4, x, true, &dz, false, &mut dw, false);
    let mut du = vec![R::zero(); h * g4];
    R::gemm(h, rows, g4, &h_prev, true, &dz, false, &mut du, false);
    let mut db = vec![R::zero(); g4];
    for row in dz.chunks(g4) {
        db.iter_mut().zip(row).for_each(|(a, &v)| *a += v);
    }
    let mut dx = Vec::new();
    if need_dx {
        dx = vec![R::zero(); rows * d.input];
        R::gemm(rows, g4, d.input, &dz, false, w, true, &mut dx, false);
    }
    LstmGrads { dx, dw, du, db }
}
