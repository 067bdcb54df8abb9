//! Guidance generator.
//!
//! A lower guided LSTM reads the previous word embedding under rating
//! guidance and its hidden state becomes an attention mask over the image
//! feature. The masked feature is concatenated with the rating encoding to
//! form the per-step guidance of the decoder.

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glstm::{glstm_forward, GlstmParams, GlstmState, StepTape};
use crate::numerics::{sigmoid, softmax, Matrix, Vector};

/// Number of distinct ratings.
pub const NUM_RATINGS: usize = 5;

/// Image feature after optional projection, length `F`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageFeature(Vector);

impl ImageFeature {
    pub fn new(f: Vector) -> Self {
        ImageFeature(f)
    }

    pub fn into_inner(self) -> Vector {
        self.0
    }
}

impl Deref for ImageFeature {
    type Target = Vector;
    fn deref(&self) -> &Vector {
        &self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RatingEncoding {
    /// One-hot of length 5.
    #[default]
    OneHot,
    /// Single value `(r - 3) / 2`.
    Scalar,
}

impl RatingEncoding {
    pub fn dim(self) -> usize {
        match self {
            RatingEncoding::OneHot => NUM_RATINGS,
            RatingEncoding::Scalar => 1,
        }
    }

    pub fn encode(self, rating: i64) -> Result<RatingGuidance> {
        if !(1..=NUM_RATINGS as i64).contains(&rating) {
            return Err(Error::Rating(rating));
        }
        let g = match self {
            RatingEncoding::OneHot => Vector::one_hot(NUM_RATINGS, rating as usize - 1),
            RatingEncoding::Scalar => Vector::from(vec![(rating as f64 - 3.0) / 2.0]),
        };
        Ok(RatingGuidance {
            rating: rating as u8,
            g,
        })
    }
}

/// Encoded purchaser rating.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingGuidance {
    rating: u8,
    g: Vector,
}

impl RatingGuidance {
    pub fn rating(&self) -> u8 {
        self.rating
    }

    pub fn vector(&self) -> &Vector {
        &self.g
    }
}

/// `(f ⊙ mask) ⊕ g`
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedGuidance {
    feature_dim: usize,
    g_hat: Vector,
}

impl CombinedGuidance {
    pub fn masked_feature(&self) -> &[f64] {
        &self.g_hat[..self.feature_dim]
    }

    pub fn rating_part(&self) -> &[f64] {
        &self.g_hat[self.feature_dim..]
    }

    pub fn vector(&self) -> &Vector {
        &self.g_hat
    }

    pub fn into_inner(self) -> Vector {
        self.g_hat
    }
}

/// How the lower hidden state is turned into a mask. `None` uses it as is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskNorm {
    #[default]
    None,
    Softmax,
    Sigmoid,
}

impl MaskNorm {
    pub fn apply(self, m: &Vector) -> Result<Vector> {
        match self {
            MaskNorm::None => Ok(m.clone()),
            MaskNorm::Softmax => softmax(m),
            MaskNorm::Sigmoid => Ok(m.map(sigmoid)),
        }
    }

    /// Gradient on the hidden state given the gradient on the mask.
    pub fn backward(self, mask: &[f64], d_mask: &[f64]) -> Vector {
        match self {
            MaskNorm::None => d_mask.into(),
            MaskNorm::Softmax => {
                let inner: f64 = mask.iter().zip(d_mask).map(|(a, b)| a * b).sum();
                mask.iter().zip(d_mask).map(|(&s, &d)| s * (d - inner)).collect()
            }
            MaskNorm::Sigmoid => mask.iter().zip(d_mask).map(|(&s, &d)| d * s * (1.0 - s)).collect(),
        }
    }
}

/// Output of one lower-level step.
#[derive(Debug, Clone)]
pub struct MaskStep {
    pub mask: Vector,
    pub state: GlstmState,
    pub tape: StepTape,
}

/// Advances the lower cell by one step and reads its hidden state as the
/// attention mask. The image feature plays no part here.
pub fn attention_mask(
    lower: &GlstmParams,
    state: &GlstmState,
    x: &[f64],
    g: &RatingGuidance,
    norm: MaskNorm,
) -> Result<MaskStep> {
    let (state, tape) = glstm_forward(lower, x, g.vector(), state)?;
    let mask = norm.apply(&state.m)?;
    Ok(MaskStep { mask, state, tape })
}

pub fn fuse_guidance(f: &ImageFeature, mask: &[f64], g: &RatingGuidance) -> Result<CombinedGuidance> {
    if f.len() != mask.len() {
        return Err(Error::shape(
            "fuse_guidance",
            format!("feature length {}", f.len()),
            format!("mask length {}", mask.len()),
        ));
    }
    let mut g_hat = Vec::with_capacity(f.len() + g.vector().len());
    g_hat.extend(f.iter().zip(mask).map(|(a, b)| a * b));
    g_hat.extend_from_slice(g.vector());
    Ok(CombinedGuidance {
        feature_dim: f.len(),
        g_hat: g_hat.into(),
    })
}

/// `P · raw`
pub fn project_feature(raw: &[f64], projection: &Matrix) -> Result<ImageFeature> {
    if projection.cols() != raw.len() {
        return Err(Error::shape(
            "project_feature",
            format!("projection {}x{}", projection.rows(), projection.cols()),
            format!("raw feature length {}", raw.len()),
        ));
    }
    Ok(ImageFeature(projection.matvec(raw)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::glstm::CellOptions;
    use crate::numerics::Rng;

    fn one_hot(r: i64) -> RatingGuidance {
        RatingEncoding::OneHot.encode(r).unwrap()
    }

    #[test]
    fn rating_encodings() {
        assert_eq!(one_hot(5).vector().as_slice(), &[0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(one_hot(1).vector().as_slice(), &[1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(one_hot(3).vector().as_slice(), &[0.0, 0.0, 1.0, 0.0, 0.0]);
        assert_eq!(RatingEncoding::Scalar.encode(1).unwrap().vector().as_slice(), &[-1.0]);
        assert_eq!(RatingEncoding::Scalar.encode(5).unwrap().vector().as_slice(), &[1.0]);
        for bad in [0, 6, -1, 9] {
            assert!(matches!(RatingEncoding::OneHot.encode(bad), Err(Error::Rating(r)) if r == bad));
        }
    }

    #[test]
    fn zero_lower_cell_gives_zero_mask() {
        let lower = GlstmParams::zeros(3, 4, 5, CellOptions::exact());
        let step = attention_mask(
            &lower,
            &GlstmState::zeros(4),
            &[1.0, 2.0, 3.0],
            &one_hot(2),
            MaskNorm::None,
        )
        .unwrap();
        assert!(step.mask.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mask_is_deterministic() {
        let lower = GlstmParams::init(3, 4, 5, 0.5, &mut Rng::new(2), CellOptions::default()).unwrap();
        let state = GlstmState::zeros(4);
        let a = attention_mask(&lower, &state.clone(), &[0.3, -0.1, 0.2], &one_hot(4), MaskNorm::None).unwrap();
        let b = attention_mask(&lower, &state, &[0.3, -0.1, 0.2], &one_hot(4), MaskNorm::None).unwrap();
        assert_eq!(a.mask, b.mask);
        assert_eq!(a.state, b.state);
    }

    #[test]
    fn mask_equals_lower_hidden_state() {
        let lower = GlstmParams::init(3, 4, 5, 0.5, &mut Rng::new(8), CellOptions::exact()).unwrap();
        let state = GlstmState {
            m: Vector::from(vec![0.1, -0.2, 0.3, 0.0]),
            c: Vector::from(vec![0.5, 0.5, -0.5, 0.2]),
        };
        let x = [0.4, -0.7, 0.9];
        let step = attention_mask(&lower, &state, &x, &one_hot(5), MaskNorm::None).unwrap();
        let (direct, _) = glstm_forward(&lower, &x, one_hot(5).vector(), &state).unwrap();
        assert_eq!(step.mask, direct.m);
    }

    #[test]
    fn fuse_examples() {
        let g = one_hot(5);
        let ones = ImageFeature::new(Vector::from(vec![1.0; 3]));
        let m = [0.25, -2.0, 7.0];
        let fused = fuse_guidance(&ones, &m, &g).unwrap();
        assert_eq!(fused.masked_feature(), &m);

        let f = ImageFeature::new(Vector::from(vec![4.0, 5.0, 6.0]));
        let fused = fuse_guidance(&f, &[0.0; 3], &g).unwrap();
        assert!(fused.masked_feature().iter().all(|&v| v == 0.0));
        assert_eq!(fused.rating_part(), g.vector().as_slice());

        let f = ImageFeature::new(Vector::from(vec![2.0, 3.0]));
        let fused = fuse_guidance(&f, &[0.5, -1.0], &g).unwrap();
        assert_eq!(fused.vector().as_slice(), &[1.0, -3.0, 0.0, 0.0, 0.0, 0.0, 1.0]);

        assert!(fuse_guidance(&f, &[1.0], &g).is_err());
    }

    #[test]
    fn projection_examples() {
        let raw: Vec<f64> = (0..4096).map(|i| (i as f64 * 0.37).sin()).collect();
        let f = project_feature(&raw, &Matrix::identity(4096)).unwrap();
        assert_eq!(f.as_slice(), raw.as_slice());
        let z = project_feature(&raw, &Matrix::zeros(8, 4096)).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));

        let p = Matrix::init_uniform(8, 4096, 0.1, &mut Rng::new(1)).unwrap();
        let f = project_feature(&raw, &p).unwrap();
        for r in 0..8 {
            let mut s = 0.0;
            for (c, v) in raw.iter().enumerate() {
                s += p.get(r, c) * v;
            }
            assert!((f[r] - s).abs() < 1e-12);
        }
        assert!(project_feature(&raw[..10], &p).is_err());
    }

    #[test]
    fn mask_norm_backward_matches_finite_differences() {
        let m = Vector::from(vec![0.3, -1.2, 0.8, 0.05]);
        let w = [0.7, -0.3, 1.1, 0.4];
        for norm in [MaskNorm::None, MaskNorm::Softmax, MaskNorm::Sigmoid] {
            let loss = |v: &Vector| -> f64 { norm.apply(v).unwrap().iter().zip(&w).map(|(a, b)| a * b).sum() };
            let mask = norm.apply(&m).unwrap();
            let analytic = norm.backward(&mask, &w);
            for k in 0..4 {
                let eps = 1e-6;
                let mut up = m.clone();
                up[k] += eps;
                let mut down = m.clone();
                down[k] -= eps;
                let numeric = (loss(&up) - loss(&down)) / (2.0 * eps);
                assert!((numeric - analytic[k]).abs() < 1e-8, "{norm:?} {k}");
            }
        }
    }
}
