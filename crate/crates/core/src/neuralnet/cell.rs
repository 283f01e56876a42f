//! LSTM and GRU layers over a whole sequence, with BPTT.
//!
//! Gate rows are stacked in one weight matrix per input source:
//! LSTM `[i, f, g, o]`, GRU `[z, r, n]`, each block `hidden` rows.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellType {
    Lstm,
    Gru,
}

impl CellType {
    pub fn gates(self) -> usize {
        match self {
            CellType::Lstm => 4,
            CellType::Gru => 3,
        }
    }
}

impl std::fmt::Display for CellType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CellType::Lstm => "lstm",
            CellType::Gru => "gru",
        })
    }
}

impl std::str::FromStr for CellType {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "lstm" => Ok(CellType::Lstm),
            "gru" => Ok(CellType::Gru),
            other => Err(format!("unknown cell type '{other}' (expected lstm or gru)")),
        }
    }
}

pub(crate) struct LayerWeights<'a> {
    pub w_in: &'a [f64],
    pub w_rec: &'a [f64],
    pub bias: &'a [f64],
    pub n_in: usize,
    pub hidden: usize,
}

pub(crate) struct LayerGrads<'a> {
    pub w_in: &'a mut [f64],
    pub w_rec: &'a mut [f64],
    pub bias: &'a mut [f64],
}

/// Everything BPTT needs from one layer's forward pass.
#[derive(Debug, Clone)]
pub(crate) struct LayerTrace {
    pub steps: usize,
    /// `[T][G*h]` post-activation gates.
    pub gates: Vec<f64>,
    /// `[T][h]` LSTM cell states; empty for GRU.
    pub cells: Vec<f64>,
    /// `[T][h]` hidden outputs.
    pub hidden: Vec<f64>,
}

impl LayerTrace {
    pub fn h_at(&self, t: usize, h: usize) -> &[f64] {
        &self.hidden[t * h..(t + 1) * h]
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out += w * x` for row-major `w` of shape `[out.len()][x.len()]`.
#[inline]
pub(crate) fn gemv_acc(out: &mut [f64], w: &[f64], x: &[f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        let mut acc = 0.0;
        for (a, b) in row.iter().zip(x) {
            acc += a * b;
        }
        *o += acc;
    }
}

/// `dx += w^T * dz` and `dw += dz ⊗ x`.
#[inline]
pub(crate) fn gemv_back(dz: &[f64], w: &[f64], x: &[f64], dw: &mut [f64], dx: Option<&mut [f64]>) {
    let cols = x.len();
    for (&d, drow) in dz.iter().zip(dw.chunks_exact_mut(cols)) {
        if d == 0.0 {
            continue;
        }
        for (g, xi) in drow.iter_mut().zip(x) {
            *g += d * xi;
        }
    }
    if let Some(dx) = dx {
        for (&d, row) in dz.iter().zip(w.chunks_exact(cols)) {
            if d == 0.0 {
                continue;
            }
            for (g, wi) in dx.iter_mut().zip(row) {
                *g += d * wi;
            }
        }
    }
}

pub(crate) fn layer_forward(cell: CellType, w: &LayerWeights, inputs: &[f64], steps: usize) -> LayerTrace {
    let h = w.hidden;
    let g = cell.gates() * h;
    let mut trace = LayerTrace {
        steps,
        gates: vec![0.0; steps * g],
        cells: if cell == CellType::Lstm { vec![0.0; steps * h] } else { Vec::new() },
        hidden: vec![0.0; steps * h],
    };
    let zeros = vec![0.0; h];
    let mut pre = vec![0.0; g];
    let mut rh = vec![0.0; h];
    for t in 0..steps {
        let x = &inputs[t * w.n_in..(t + 1) * w.n_in];
        pre.copy_from_slice(w.bias);
        gemv_acc(&mut pre, w.w_in, x);
        let (before, rest) = trace.hidden.split_at_mut(t * h);
        let h_prev = if t == 0 { &zeros[..] } else { &before[(t - 1) * h..] };
        let h_out = &mut rest[..h];
        let gates = &mut trace.gates[t * g..(t + 1) * g];
        match cell {
            CellType::Lstm => {
                gemv_acc(&mut pre, w.w_rec, h_prev);
                let (cbefore, crest) = trace.cells.split_at_mut(t * h);
                let c_prev = if t == 0 { &zeros[..] } else { &cbefore[(t - 1) * h..] };
                for j in 0..h {
                    let i_g = sigmoid(pre[j]);
                    let f_g = sigmoid(pre[h + j]);
                    let g_g = pre[2 * h + j].tanh();
                    let o_g = sigmoid(pre[3 * h + j]);
                    gates[j] = i_g;
                    gates[h + j] = f_g;
                    gates[2 * h + j] = g_g;
                    gates[3 * h + j] = o_g;
                    let c = f_g * c_prev[j] + i_g * g_g;
                    crest[j] = c;
                    h_out[j] = o_g * c.tanh();
                }
            }
            CellType::Gru => {
                gemv_acc(&mut pre[..2 * h], &w.w_rec[..2 * h * h], h_prev);
                for j in 0..2 * h {
                    gates[j] = sigmoid(pre[j]);
                }
                for j in 0..h {
                    rh[j] = gates[h + j] * h_prev[j];
                }
                gemv_acc(&mut pre[2 * h..], &w.w_rec[2 * h * h..], &rh);
                for j in 0..h {
                    let n = pre[2 * h + j].tanh();
                    gates[2 * h + j] = n;
                    let z = gates[j];
                    h_out[j] = (1.0 - z) * n + z * h_prev[j];
                }
            }
        }
    }
    trace
}

/// Backpropagates `dh` (`[T][h]`, gradient reaching each step's output from
/// above) through the layer. Accumulates into `grads` and returns
/// `[T][n_in]` input gradients when `want_dx`.
pub(crate) fn layer_backward(
    cell: CellType,
    w: &LayerWeights,
    inputs: &[f64],
    trace: &LayerTrace,
    dh: &[f64],
    grads: &mut LayerGrads,
    want_dx: bool,
) -> Vec<f64> {
    let h = w.hidden;
    let g = cell.gates() * h;
    let steps = trace.steps;
    let mut dx = if want_dx { vec![0.0; steps * w.n_in] } else { Vec::new() };
    let zeros = vec![0.0; h];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dpre = vec![0.0; g];
    let mut dh_prev = vec![0.0; h];
    let mut rh = vec![0.0; h];
    let mut drh = vec![0.0; h];
    for t in (0..steps).rev() {
        let x = &inputs[t * w.n_in..(t + 1) * w.n_in];
        let h_prev = if t == 0 { &zeros[..] } else { trace.h_at(t - 1, h) };
        let gates = &trace.gates[t * g..(t + 1) * g];
        let dh_total: Vec<f64> = (0..h).map(|j| dh[t * h + j] + dh_next[j]).collect();
        dh_prev.iter_mut().for_each(|v| *v = 0.0);
        match cell {
            CellType::Lstm => {
                let c = &trace.cells[t * h..(t + 1) * h];
                let c_prev = if t == 0 { &zeros[..] } else { &trace.cells[(t - 1) * h..t * h] };
                for j in 0..h {
                    let (i_g, f_g, g_g, o_g) = (gates[j], gates[h + j], gates[2 * h + j], gates[3 * h + j]);
                    let tc = c[j].tanh();
                    let d_o = dh_total[j] * tc;
                    let dc = dh_total[j] * o_g * (1.0 - tc * tc) + dc_next[j];
                    dpre[j] = dc * g_g * i_g * (1.0 - i_g);
                    dpre[h + j] = dc * c_prev[j] * f_g * (1.0 - f_g);
                    dpre[2 * h + j] = dc * i_g * (1.0 - g_g * g_g);
                    dpre[3 * h + j] = d_o * o_g * (1.0 - o_g);
                    dc_next[j] = dc * f_g;
                }
                gemv_back(&dpre, w.w_rec, h_prev, grads.w_rec, Some(&mut dh_prev));
            }
            CellType::Gru => {
                for j in 0..h {
                    let (z, r, n) = (gates[j], gates[h + j], gates[2 * h + j]);
                    let d = dh_total[j];
                    dh_prev[j] += d * z;
                    dpre[j] = d * (h_prev[j] - n) * z * (1.0 - z);
                    dpre[2 * h + j] = d * (1.0 - z) * (1.0 - n * n);
                    rh[j] = r * h_prev[j];
                }
                drh.iter_mut().for_each(|v| *v = 0.0);
                gemv_back(&dpre[2 * h..], &w.w_rec[2 * h * h..], &rh, &mut grads.w_rec[2 * h * h..], Some(&mut drh));
                for j in 0..h {
                    let r = gates[h + j];
                    dpre[h + j] = drh[j] * h_prev[j] * r * (1.0 - r);
                    dh_prev[j] += drh[j] * r;
                }
                gemv_back(&dpre[..2 * h], &w.w_rec[..2 * h * h], h_prev, &mut grads.w_rec[..2 * h * h], Some(&mut dh_prev));
            }
        }
        for (b, d) in grads.bias.iter_mut().zip(&dpre) {
            *b += d;
        }
        let dx_t = if want_dx { Some(&mut dx[t * w.n_in..(t + 1) * w.n_in]) } else { None };
        gemv_back(&dpre, w.w_in, x, grads.w_in, dx_t);
        std::mem::swap(&mut dh_next, &mut dh_prev);
    }
    dx
}
