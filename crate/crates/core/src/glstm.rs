//! Guided LSTM cell.
//!
//! Every gate sees the input `x_t`, the previous hidden state `m_{t-1}` and a
//! guidance vector `g_t`:
//!
//! ```text
//! i_t = σ(W_ix x_t + W_im m_{t-1} + W_iq g_t + b_i)
//! f_t = σ(W_fx x_t + W_fm m_{t-1} + W_fq g_t + b_f)
//! o_t = σ(W_ox x_t + W_om m_{t-1} + W_oq g_t + b_o)
//! c_t = f_t ⊙ c_{t-1} + i_t ⊙ tanh(W_cx x_t + W_cm m_{t-1} + W_cq g_t + b_c)
//! m_t = o_t ⊙ c_t
//! ```
//!
//! The hidden state is `o_t ⊙ c_t` with no squashing of the cell. Setting
//! [`CellOptions::output_tanh`] switches to the usual `o_t ⊙ tanh(c_t)`.
//! Biases are an addition to the bare recurrence; zero biases recover it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{tanh, Matrix, Rng, TensorMut, TensorRef, Vector};

/// Default bound applied to the memory cell after each update.
pub const DEFAULT_CELL_CLIP: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellOptions {
    /// Use `m_t = o_t ⊙ tanh(c_t)` instead of `o_t ⊙ c_t`.
    pub output_tanh: bool,
    /// Clamp `c_t` into `[-clip, clip]`. `None` disables clipping.
    pub cell_clip: Option<f64>,
}

impl Default for CellOptions {
    fn default() -> Self {
        CellOptions {
            output_tanh: false,
            cell_clip: Some(DEFAULT_CELL_CLIP),
        }
    }
}

impl CellOptions {
    /// Literal recurrence without clipping, as used by the gradient checks.
    pub fn exact() -> Self {
        CellOptions {
            output_tanh: false,
            cell_clip: None,
        }
    }
}

/// Weights feeding one gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateWeights {
    /// hidden × input
    pub w_x: Matrix,
    /// hidden × hidden
    pub w_m: Matrix,
    /// hidden × guidance
    pub w_q: Matrix,
    pub b: Vector,
}

impl GateWeights {
    fn zeros(input: usize, hidden: usize, guidance: usize) -> Self {
        GateWeights {
            w_x: Matrix::zeros(hidden, input),
            w_m: Matrix::zeros(hidden, hidden),
            w_q: Matrix::zeros(hidden, guidance),
            b: Vector::zeros(hidden),
        }
    }

    fn init(input: usize, hidden: usize, guidance: usize, scale: f64, rng: &mut Rng) -> Result<Self> {
        Ok(GateWeights {
            w_x: Matrix::init_uniform(hidden, input, scale, rng)?,
            w_m: Matrix::init_uniform(hidden, hidden, scale, rng)?,
            w_q: Matrix::init_uniform(hidden, guidance, scale, rng)?,
            b: Vector::zeros(hidden),
        })
    }

    /// `W_x x + W_m m + W_q g + b`, summed in that order.
    fn pre_activation(&self, x: &[f64], m: &[f64], g: &[f64]) -> Result<Vector> {
        let mut a = Vector::zeros(self.b.len());
        self.w_x.matvec_acc(x, &mut a)?;
        self.w_m.matvec_acc(m, &mut a)?;
        self.w_q.matvec_acc(g, &mut a)?;
        a.add_assign(&self.b)?;
        Ok(a)
    }
}

/// Parameters of one guided LSTM layer. Gate order is input, forget,
/// output, candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlstmParams {
    pub input: GateWeights,
    pub forget: GateWeights,
    pub output: GateWeights,
    pub cell: GateWeights,
    pub options: CellOptions,
}

const GATE_TAGS: [char; 4] = ['i', 'f', 'o', 'c'];

impl GlstmParams {
    pub fn zeros(input_dim: usize, hidden_dim: usize, guidance_dim: usize, options: CellOptions) -> Self {
        let z = || GateWeights::zeros(input_dim, hidden_dim, guidance_dim);
        GlstmParams {
            input: z(),
            forget: z(),
            output: z(),
            cell: z(),
            options,
        }
    }

    /// Uniform weights in `[-scale, scale]`, zero biases.
    pub fn init(
        input_dim: usize,
        hidden_dim: usize,
        guidance_dim: usize,
        scale: f64,
        rng: &mut Rng,
        options: CellOptions,
    ) -> Result<Self> {
        Ok(GlstmParams {
            input: GateWeights::init(input_dim, hidden_dim, guidance_dim, scale, rng)?,
            forget: GateWeights::init(input_dim, hidden_dim, guidance_dim, scale, rng)?,
            output: GateWeights::init(input_dim, hidden_dim, guidance_dim, scale, rng)?,
            cell: GateWeights::init(input_dim, hidden_dim, guidance_dim, scale, rng)?,
            options,
        })
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.input_dim(), self.hidden_dim(), self.guidance_dim(), self.options)
    }

    pub fn input_dim(&self) -> usize {
        self.input.w_x.cols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.input.b.len()
    }

    pub fn guidance_dim(&self) -> usize {
        self.input.w_q.cols()
    }

    pub fn gates(&self) -> [&GateWeights; 4] {
        [&self.input, &self.forget, &self.output, &self.cell]
    }

    pub fn gates_mut(&mut self) -> [&mut GateWeights; 4] {
        [&mut self.input, &mut self.forget, &mut self.output, &mut self.cell]
    }

    /// Zero every guidance weight `W_*q`.
    pub fn clear_guidance(&mut self) {
        for gate in self.gates_mut() {
            gate.w_q.fill(0.0);
        }
    }

    /// Checks that every weight agrees with `(input, hidden, guidance)`.
    pub fn validate(&self) -> Result<()> {
        let (dx, dh, dg) = (self.input_dim(), self.hidden_dim(), self.guidance_dim());
        for (tag, gate) in GATE_TAGS.iter().zip(self.gates()) {
            let expect = [
                ("x", &gate.w_x, (dh, dx)),
                ("m", &gate.w_m, (dh, dh)),
                ("q", &gate.w_q, (dh, dg)),
            ];
            for (src, w, shape) in expect {
                if w.shape() != shape {
                    return Err(Error::shape(
                        "glstm params",
                        format!("w_{tag}{src} is {}x{}", w.rows(), w.cols()),
                        format!("expected {}x{}", shape.0, shape.1),
                    ));
                }
            }
            if gate.b.len() != dh {
                return Err(Error::shape(
                    "glstm params",
                    format!("b_{tag} has length {}", gate.b.len()),
                    format!("expected {dh}"),
                ));
            }
        }
        Ok(())
    }

    pub fn tensors<'a>(&'a self, prefix: &str, out: &mut Vec<TensorRef<'a>>) {
        for (tag, gate) in GATE_TAGS.iter().zip(self.gates()) {
            out.push(gate.w_x.tensor_ref(format!("{prefix}w_{tag}x")));
            out.push(gate.w_m.tensor_ref(format!("{prefix}w_{tag}m")));
            out.push(gate.w_q.tensor_ref(format!("{prefix}w_{tag}q")));
            out.push(gate.b.tensor_ref(format!("{prefix}b_{tag}")));
        }
    }

    pub fn tensors_mut<'a>(&'a mut self, prefix: &str, out: &mut Vec<TensorMut<'a>>) {
        for (tag, gate) in GATE_TAGS.iter().zip(self.gates_mut()) {
            out.push(gate.w_x.tensor_mut(format!("{prefix}w_{tag}x")));
            out.push(gate.w_m.tensor_mut(format!("{prefix}w_{tag}m")));
            out.push(gate.w_q.tensor_mut(format!("{prefix}w_{tag}q")));
            out.push(gate.b.tensor_mut(format!("{prefix}b_{tag}")));
        }
    }
}

/// Recurrent state carried between steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlstmState {
    /// hidden state `m_t`
    pub m: Vector,
    /// memory cell `c_t`
    pub c: Vector,
}

impl GlstmState {
    pub fn zeros(hidden_dim: usize) -> Self {
        GlstmState {
            m: Vector::zeros(hidden_dim),
            c: Vector::zeros(hidden_dim),
        }
    }
}

/// Values cached by [`glstm_forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct StepTape {
    pub x: Vector,
    pub g: Vector,
    pub m_prev: Vector,
    pub c_prev: Vector,
    pub input_gate: Vector,
    pub forget_gate: Vector,
    pub output_gate: Vector,
    /// `tanh` of the candidate pre-activation
    pub candidate: Vector,
    /// memory cell after clipping
    pub c: Vector,
    /// `false` where clipping was active
    pub c_passthrough: Vec<bool>,
    pub output_tanh: bool,
}

/// Gradients with respect to the non-parameter inputs of one step.
#[derive(Debug, Clone)]
pub struct InputGrads {
    pub d_x: Vector,
    pub d_g: Vector,
    pub d_m_prev: Vector,
    pub d_c_prev: Vector,
}

/// Full result of [`glstm_backward`].
#[derive(Debug, Clone)]
pub struct StepGrads {
    pub params: GlstmParams,
    pub inputs: InputGrads,
}

fn check_dim(what: &str, got: usize, want: usize, weight: &str) -> Result<()> {
    if got != want {
        return Err(Error::shape(
            "glstm_forward",
            format!("{what} has length {got}"),
            format!("{weight} expects {want}"),
        ));
    }
    Ok(())
}

/// One recurrence step.
pub fn glstm_forward(p: &GlstmParams, x: &[f64], g: &[f64], prev: &GlstmState) -> Result<(GlstmState, StepTape)> {
    let dh = p.hidden_dim();
    check_dim("x_t", x.len(), p.input_dim(), "w_ix")?;
    check_dim("g_t", g.len(), p.guidance_dim(), "w_iq")?;
    check_dim("m_{t-1}", prev.m.len(), dh, "w_im")?;
    check_dim("c_{t-1}", prev.c.len(), dh, "b_c")?;

    let input_gate = p.input.pre_activation(x, &prev.m, g)?.sigmoid();
    let forget_gate = p.forget.pre_activation(x, &prev.m, g)?.sigmoid();
    let output_gate = p.output.pre_activation(x, &prev.m, g)?.sigmoid();
    let candidate = p.cell.pre_activation(x, &prev.m, g)?.tanh();

    let mut c = Vector::zeros(dh);
    let mut c_passthrough = vec![true; dh];
    for k in 0..dh {
        let raw = forget_gate[k] * prev.c[k] + input_gate[k] * candidate[k];
        c[k] = match p.options.cell_clip {
            Some(clip) if raw.abs() > clip => {
                c_passthrough[k] = false;
                raw.clamp(-clip, clip)
            }
            _ => raw,
        };
    }
    let m: Vector = if p.options.output_tanh {
        (0..dh).map(|k| output_gate[k] * tanh(c[k])).collect()
    } else {
        (0..dh).map(|k| output_gate[k] * c[k]).collect()
    };

    let tape = StepTape {
        x: x.into(),
        g: g.into(),
        m_prev: prev.m.clone(),
        c_prev: prev.c.clone(),
        input_gate,
        forget_gate,
        output_gate,
        candidate,
        c: c.clone(),
        c_passthrough,
        output_tanh: p.options.output_tanh,
    };
    Ok((GlstmState { m, c }, tape))
}

/// Gradients of one step given upstream `d_m` (on `m_t`) and `d_c` (on
/// `c_t`, from the following step).
pub fn glstm_backward(p: &GlstmParams, tape: &StepTape, d_m: &[f64], d_c: &[f64]) -> Result<StepGrads> {
    let mut params = p.zeros_like();
    let inputs = glstm_backward_into(p, tape, d_m, d_c, &mut params)?;
    Ok(StepGrads { params, inputs })
}

/// Like [`glstm_backward`] but accumulates parameter gradients into `acc`.
pub fn glstm_backward_into(
    p: &GlstmParams,
    tape: &StepTape,
    d_m: &[f64],
    d_c: &[f64],
    acc: &mut GlstmParams,
) -> Result<InputGrads> {
    let dh = p.hidden_dim();
    if tape.c.len() != dh
        || tape.x.len() != p.input_dim()
        || tape.g.len() != p.guidance_dim()
        || tape.output_tanh != p.options.output_tanh
    {
        return Err(Error::shape(
            "glstm_backward",
            format!("tape (x {}, g {}, hidden {})", tape.x.len(), tape.g.len(), tape.c.len()),
            format!("params (x {}, g {}, hidden {dh})", p.input_dim(), p.guidance_dim()),
        ));
    }
    if d_m.len() != dh || d_c.len() != dh {
        return Err(Error::shape(
            "glstm_backward",
            format!("upstream lengths {} / {}", d_m.len(), d_c.len()),
            format!("hidden {dh}"),
        ));
    }

    let mut da_i = Vector::zeros(dh);
    let mut da_f = Vector::zeros(dh);
    let mut da_o = Vector::zeros(dh);
    let mut da_c = Vector::zeros(dh);
    let mut d_c_prev = Vector::zeros(dh);
    for k in 0..dh {
        let (i, f, o, cand) = (
            tape.input_gate[k],
            tape.forget_gate[k],
            tape.output_gate[k],
            tape.candidate[k],
        );
        let c = tape.c[k];
        let (emitted, d_emit_dc) = if tape.output_tanh {
            let t = tanh(c);
            (t, 1.0 - t * t)
        } else {
            (c, 1.0)
        };
        let d_o = d_m[k] * emitted;
        let mut d_cell = d_c[k] + d_m[k] * o * d_emit_dc;
        if !tape.c_passthrough[k] {
            d_cell = 0.0;
        }
        da_i[k] = d_cell * cand * i * (1.0 - i);
        da_f[k] = d_cell * tape.c_prev[k] * f * (1.0 - f);
        da_o[k] = d_o * o * (1.0 - o);
        da_c[k] = d_cell * i * (1.0 - cand * cand);
        d_c_prev[k] = d_cell * f;
    }

    let mut d_x = Vector::zeros(p.input_dim());
    let mut d_g = Vector::zeros(p.guidance_dim());
    let mut d_m_prev = Vector::zeros(dh);
    let deltas = [&da_i, &da_f, &da_o, &da_c];
    for ((gate, grad), delta) in p.gates().into_iter().zip(acc.gates_mut()).zip(deltas) {
        grad.w_x.add_outer(delta, &tape.x)?;
        grad.w_m.add_outer(delta, &tape.m_prev)?;
        grad.w_q.add_outer(delta, &tape.g)?;
        grad.b.add_assign(delta)?;
        gate.w_x.matvec_t_acc(delta, &mut d_x)?;
        gate.w_m.matvec_t_acc(delta, &mut d_m_prev)?;
        gate.w_q.matvec_t_acc(delta, &mut d_g)?;
    }

    Ok(InputGrads {
        d_x,
        d_g,
        d_m_prev,
        d_c_prev,
    })
}
