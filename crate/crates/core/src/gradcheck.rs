//! Central finite-difference verification of the analytic gradients.

use serde::Serialize;

use crate::error::Result;
use crate::glstm::{glstm_backward_into, glstm_forward, CellOptions, GlstmParams, GlstmState};
use crate::guidance::MaskNorm;
use crate::model::{Model, ModelConfig, ModelParams};
use crate::numerics::{dot, Rng, TensorMut, Vector};
use crate::textdata::{ReviewExample, Vocabulary, BOS, EOS, NUM_RESERVED};
use crate::training::{sequence_loss, sequence_loss_value};

pub const FD_EPSILON: f64 = 1e-5;
/// A check passes when the largest relative error is below this.
pub const PASS_THRESHOLD: f64 = 1e-5;
/// Denominator floor for relative errors, so that gradients which are zero
/// up to rounding compare on an absolute scale.
pub const REL_ERROR_FLOOR: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, floor)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    /// entry with the largest error, as `tensor[index]`
    pub worst: String,
    pub passed: bool,
}

#[derive(Default)]
struct Tally {
    checked: usize,
    max: f64,
    worst: String,
}

impl Tally {
    fn record(&mut self, name: &str, index: usize, analytic: f64, numeric: f64) {
        let err = relative_error(analytic, numeric);
        self.checked += 1;
        // NaN must register as a failure
        if err > self.max || err.is_nan() {
            self.max = if err.is_nan() { f64::INFINITY } else { err };
            self.worst = format!("{name}[{index}] analytic {analytic:e} numeric {numeric:e}");
        }
    }

    fn finish(self, name: impl Into<String>) -> GradCheckReport {
        GradCheckReport {
            name: name.into(),
            checked: self.checked,
            max_rel_error: self.max,
            worst: self.worst,
            passed: self.max < PASS_THRESHOLD,
        }
    }
}

/// Perturbs every entry of `target` in turn and compares the central
/// difference of `loss` against `analytic`, entry by entry in the order
/// `tensors` yields them.
fn sweep<T: Clone>(
    target: &T,
    tensors: impl Fn(&mut T) -> Vec<TensorMut<'_>>,
    analytic: &[(String, Vec<f64>)],
    loss: impl Fn(&T) -> Result<f64>,
    tally: &mut Tally,
) -> Result<()> {
    let mut probe = target.clone();
    for (ti, (name, grad)) in analytic.iter().enumerate() {
        for (j, &a) in grad.iter().enumerate() {
            let orig = tensors(&mut probe)[ti].data[j];
            tensors(&mut probe)[ti].data[j] = orig + FD_EPSILON;
            let up = loss(&probe)?;
            tensors(&mut probe)[ti].data[j] = orig - FD_EPSILON;
            let down = loss(&probe)?;
            tensors(&mut probe)[ti].data[j] = orig;
            tally.record(name, j, a, (up - down) / (2.0 * FD_EPSILON));
        }
    }
    Ok(())
}

fn flatten_model_grads(grads: &ModelParams) -> Vec<(String, Vec<f64>)> {
    grads.tensors().into_iter().map(|t| (t.name, t.data.to_vec())).collect()
}

/// Compares `analytic` against finite differences of `loss` over every
/// parameter of `model`.
pub fn check_model_gradients(
    name: &str,
    model: &Model,
    analytic: &ModelParams,
    loss: impl Fn(&Model) -> Result<f64>,
) -> Result<GradCheckReport> {
    let mut tally = Tally::default();
    sweep(
        model,
        |m: &mut Model| m.params.tensors_mut(),
        &flatten_model_grads(analytic),
        loss,
        &mut tally,
    )?;
    Ok(tally.finish(name))
}

/// Dimensions of the randomized full-model check.
#[derive(Debug, Clone, Copy)]
pub struct ModelCheckDims {
    pub vocab_size: usize,
    pub feature_dim: usize,
    pub raw_feature_dim: usize,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    /// number of predicted tokens
    pub seq_len: usize,
    pub mask_norm: MaskNorm,
    pub output_tanh: bool,
}

impl ModelCheckDims {
    pub fn uniform(dims: usize, seq_len: usize) -> Self {
        ModelCheckDims {
            vocab_size: 6,
            feature_dim: dims,
            raw_feature_dim: dims + 2,
            hidden_dim: dims,
            embed_dim: dims,
            seq_len,
            mask_norm: MaskNorm::None,
            output_tanh: false,
        }
    }
}

/// A random model and example drawn from `seed`, with clipping disabled.
pub fn random_instance(dims: &ModelCheckDims, seed: u64) -> Result<(Model, ReviewExample)> {
    let words: Vec<String> = (NUM_RESERVED..dims.vocab_size).map(|i| format!("w{i}")).collect();
    let vocab = Vocabulary::from_tokens(words)?;
    let mut config = ModelConfig::new(dims.vocab_size, dims.raw_feature_dim);
    config.feature_dim = dims.feature_dim;
    config.hidden_dim = dims.hidden_dim;
    config.embed_dim = dims.embed_dim;
    config.mask_norm = dims.mask_norm;
    config.cell = CellOptions {
        output_tanh: dims.output_tanh,
        cell_clip: None,
    };
    config.init_scale = 0.5;
    let mut model = Model::init(config, vocab, seed)?;
    let mut rng = Rng::new(seed.wrapping_mul(31).wrapping_add(7));
    for t in model.params.tensors_mut() {
        if t.name.contains(".b_") {
            t.data.iter_mut().for_each(|b| *b = rng.uniform(-0.5, 0.5));
        }
    }
    let mut tokens = vec![BOS];
    for _ in 1..dims.seq_len {
        tokens.push(3 + rng.below(dims.vocab_size - 3));
    }
    tokens.push(EOS);
    let example = ReviewExample {
        product_id: format!("gradcheck-{seed}"),
        rating: 1 + rng.below(5) as u8,
        tokens,
        feature: Vector::from_fn(dims.raw_feature_dim, |_| rng.uniform(-1.0, 1.0)),
    };
    Ok((model, example))
}

/// Full bilevel model, every parameter.
pub fn check_model(dims: &ModelCheckDims, seed: u64) -> Result<GradCheckReport> {
    let (model, example) = random_instance(dims, seed)?;
    let analytic = sequence_loss(&model, &example)?.grads;
    check_model_gradients(&format!("model(seed {seed})"), &model, &analytic, |m| {
        sequence_loss_value(m, &example)
    })
}

/// Inputs of the cell-only check: a short rollout scored by a fixed random
/// linear functional of every hidden state and the final cell.
#[derive(Clone)]
struct CellProblem {
    params: GlstmParams,
    xs: Vec<Vector>,
    gs: Vec<Vector>,
    init: GlstmState,
    m_weights: Vec<Vector>,
    c_weight: Vector,
}

impl CellProblem {
    fn loss(&self) -> Result<f64> {
        let mut state = self.init.clone();
        let mut total = 0.0;
        for t in 0..self.xs.len() {
            state = glstm_forward(&self.params, &self.xs[t], &self.gs[t], &state)?.0;
            total += dot(&self.m_weights[t], &state.m);
        }
        Ok(total + dot(&self.c_weight, &state.c))
    }

    /// Analytic gradients in the same order as [`CellProblem::tensors_mut`].
    fn analytic(&self) -> Result<Vec<(String, Vec<f64>)>> {
        let mut state = self.init.clone();
        let mut tapes = Vec::new();
        for t in 0..self.xs.len() {
            let (next, tape) = glstm_forward(&self.params, &self.xs[t], &self.gs[t], &state)?;
            tapes.push(tape);
            state = next;
        }
        let dh = self.params.hidden_dim();
        let mut grads = self.params.zeros_like();
        let mut d_m = Vector::zeros(dh);
        let mut d_c = self.c_weight.clone();
        let mut d_xs = vec![Vector::zeros(0); self.xs.len()];
        let mut d_gs = vec![Vector::zeros(0); self.xs.len()];
        for t in (0..self.xs.len()).rev() {
            d_m.add_assign(&self.m_weights[t])?;
            let g = glstm_backward_into(&self.params, &tapes[t], &d_m, &d_c, &mut grads)?;
            d_xs[t] = g.d_x;
            d_gs[t] = g.d_g;
            d_m = g.d_m_prev;
            d_c = g.d_c_prev;
        }
        let mut out = Vec::new();
        let mut ts = Vec::new();
        grads.tensors("", &mut ts);
        out.extend(ts.into_iter().map(|t| (t.name, t.data.to_vec())));
        for (t, d) in d_xs.into_iter().enumerate() {
            out.push((format!("x_{t}"), d.into_inner()));
        }
        for (t, d) in d_gs.into_iter().enumerate() {
            out.push((format!("g_{t}"), d.into_inner()));
        }
        out.push(("m_init".into(), d_m.into_inner()));
        out.push(("c_init".into(), d_c.into_inner()));
        Ok(out)
    }

    fn tensors_mut(&mut self) -> Vec<TensorMut<'_>> {
        let mut out = Vec::new();
        self.params.tensors_mut("", &mut out);
        for (t, x) in self.xs.iter_mut().enumerate() {
            out.push(x.tensor_mut(format!("x_{t}")));
        }
        for (t, g) in self.gs.iter_mut().enumerate() {
            out.push(g.tensor_mut(format!("g_{t}")));
        }
        out.push(self.init.m.tensor_mut("m_init".into()));
        out.push(self.init.c.tensor_mut("c_init".into()));
        out
    }
}

/// Guided cell alone over a `steps`-long rollout: parameters, inputs,
/// guidance, and initial state.
pub fn check_cell(
    input_dim: usize,
    hidden_dim: usize,
    guidance_dim: usize,
    steps: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    check_cell_with(input_dim, hidden_dim, guidance_dim, steps, seed, CellOptions::exact())
}

pub fn check_cell_with(
    input_dim: usize,
    hidden_dim: usize,
    guidance_dim: usize,
    steps: usize,
    seed: u64,
    options: CellOptions,
) -> Result<GradCheckReport> {
    let mut rng = Rng::new(seed);
    let mut params = GlstmParams::init(input_dim, hidden_dim, guidance_dim, 0.5, &mut rng, options)?;
    for gate in params.gates_mut() {
        gate.b.iter_mut().for_each(|b| *b = rng.uniform(-0.5, 0.5));
    }
    let mut vec = |n: usize| Vector::from_fn(n, |_| rng.uniform(-1.0, 1.0));
    let problem = CellProblem {
        params,
        xs: (0..steps).map(|_| vec(input_dim)).collect(),
        gs: (0..steps).map(|_| vec(guidance_dim)).collect(),
        init: GlstmState {
            m: vec(hidden_dim),
            c: vec(hidden_dim),
        },
        m_weights: (0..steps).map(|_| vec(hidden_dim)).collect(),
        c_weight: vec(hidden_dim),
    };
    let analytic = problem.analytic()?;
    let mut tally = Tally::default();
    sweep(
        &problem,
        CellProblem::tensors_mut,
        &analytic,
        CellProblem::loss,
        &mut tally,
    )?;
    Ok(tally.finish(format!("cell({input_dim},{hidden_dim},{guidance_dim}; seed {seed})")))
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckSummary {
    pub seed: u64,
    pub dims: usize,
    pub cell: GradCheckReport,
    pub model: GradCheckReport,
    pub passed: bool,
}

/// Cell-only and full-model checks at the given size (each dimension at
/// most 8).
pub fn gradcheck(dims: usize, seed: u64) -> Result<GradCheckSummary> {
    if dims == 0 || dims > 8 {
        return Err(crate::Error::Config(format!(
            "gradcheck dims must be in 1..=8, got {dims}"
        )));
    }
    let cell = check_cell(dims, dims, dims, 3, seed)?;
    let model = check_model(&ModelCheckDims::uniform(dims, 3), seed)?;
    let passed = cell.passed && model.passed;
    Ok(GradCheckSummary {
        seed,
        dims,
        cell,
        model,
        passed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cell_check_passes_on_twenty_seeds() {
        for seed in 0..20 {
            let r = check_cell(4, 4, 4, 3, seed).unwrap();
            assert!(r.passed && r.max_rel_error < 1e-6, "{r:?}");
        }
    }

    #[test]
    fn cell_check_random_configurations() {
        let mut rng = Rng::new(2024);
        for seed in 0..100 {
            let (dx, dh, dg) = (1 + rng.below(6), 1 + rng.below(6), 1 + rng.below(6));
            let r = check_cell(dx, dh, dg, 2, seed).unwrap();
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn cell_check_with_output_tanh() {
        let opts = CellOptions {
            output_tanh: true,
            cell_clip: None,
        };
        for seed in 0..5 {
            let r = check_cell_with(3, 5, 2, 3, seed, opts).unwrap();
            assert!(r.passed, "{r:?}");
        }
    }

    #[test]
    fn full_model_check_length_three() {
        let r = check_model(&ModelCheckDims::uniform(4, 3), 1).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn full_model_check_mask_variants() {
        for norm in [MaskNorm::Softmax, MaskNorm::Sigmoid] {
            let mut dims = ModelCheckDims::uniform(3, 4);
            dims.mask_norm = norm;
            dims.output_tanh = norm == MaskNorm::Sigmoid;
            let r = check_model(&dims, 5).unwrap();
            assert!(r.passed, "{norm:?}: {r:?}");
        }
    }

    #[test]
    fn corrupted_gradient_is_reported() {
        let (model, example) = random_instance(&ModelCheckDims::uniform(3, 3), 4).unwrap();
        let mut analytic = sequence_loss(&model, &example).unwrap().grads;
        analytic.decoder.cell.forget.w_m.data_mut()[2] += 1e-2;
        let r = check_model_gradients("corrupted", &model, &analytic, |m| sequence_loss_value(m, &example)).unwrap();
        assert!(!r.passed);
        assert!(r.worst.starts_with("decoder.w_fm[2]"), "{}", r.worst);
    }

    #[test]
    fn summary_rejects_oversized_dims() {
        assert!(gradcheck(9, 0).is_err());
        assert!(gradcheck(0, 0).is_err());
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!(relative_error(1e-12, -1e-12) < 1e-5);
    }
}
