mod common;

use common::small_model;
use proptest::prelude::*;
use revgen::glstm::GlstmState;
use revgen::guidance::{attention_mask, fuse_guidance, project_feature, ImageFeature, MaskNorm, RatingEncoding};
use revgen::numerics::Matrix;
use revgen::textdata::BOS;
use revgen::Vector;

fn finite() -> impl Strategy<Value = f64> {
    -1e6..1e6f64
}

proptest! {
    #[test]
    fn rating_part_passes_through(
        pairs in prop::collection::vec((finite(), finite()), 1..12),
        rating in 1i64..=5,
        scalar in any::<bool>(),
    ) {
        let enc = if scalar { RatingEncoding::Scalar } else { RatingEncoding::OneHot };
        let g = enc.encode(rating).unwrap();
        let (f, mask): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let fused = fuse_guidance(&ImageFeature::new(f.clone().into()), &mask, &g).unwrap();
        prop_assert_eq!(fused.vector().len(), f.len() + enc.dim());
        let tail = &fused.vector()[f.len()..];
        prop_assert!(tail.iter().zip(g.vector().iter()).all(|(a, b)| a.to_bits() == b.to_bits()));
        for k in 0..f.len() {
            prop_assert_eq!(fused.masked_feature()[k], f[k] * mask[k]);
        }
    }

    #[test]
    fn mask_ignores_the_image_feature(seed in 0u64..200, token in 4usize..9, rating in 1i64..=5) {
        let model = small_model(5, 6, 4, 3, 3, seed);
        let g = model.encode_rating(rating).unwrap();
        let x = model.embed(token).unwrap();
        let state = GlstmState::zeros(4);
        let a = attention_mask(&model.params.lower, &state, x, &g, MaskNorm::None).unwrap();
        // the feature enters only after the mask is formed; starting two
        // decodes from different images yields the same lower state
        let s1 = model.feed(&model.start(&[1.0; 6], rating).unwrap(), token).unwrap();
        let s2 = model.feed(&model.start(&[-3.0, 0.0, 2.0, 5.0, 0.1, 0.0], rating).unwrap(), token).unwrap();
        prop_assert_eq!(&s1.lower, &s2.lower);
        let first = model.start(&[0.0; 6], rating).unwrap();
        let b = attention_mask(&model.params.lower, &state, model.embed(BOS).unwrap(), &g, MaskNorm::None).unwrap();
        prop_assert_eq!(&first.lower, &b.state);
        prop_assert_eq!(&a.mask, &a.state.m);
    }
}

#[test]
fn ones_feature_passes_mask_through() {
    let g = RatingEncoding::OneHot.encode(2).unwrap();
    let mask = [0.3, -0.25, 7.0];
    let fused = fuse_guidance(&ImageFeature::new(Vector::from(vec![1.0; 3])), &mask, &g).unwrap();
    assert_eq!(fused.masked_feature(), &mask);
    let zero = fuse_guidance(&ImageFeature::new(vec![4.0, 5.0, 6.0].into()), &[0.0; 3], &g).unwrap();
    assert_eq!(zero.masked_feature(), &[0.0; 3]);
    assert_eq!(zero.rating_part(), &[0.0, 1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn mismatched_mask_is_an_error() {
    let g = RatingEncoding::OneHot.encode(2).unwrap();
    assert!(fuse_guidance(&ImageFeature::new(vec![1.0, 2.0].into()), &[1.0], &g).is_err());
}

#[test]
fn large_identity_projection_is_pass_through() {
    let raw: Vec<f64> = (0..4096).map(|i| (i as f64 * 0.37).sin()).collect();
    let f = project_feature(&raw, &Matrix::identity(4096)).unwrap();
    assert_eq!(f.as_slice(), raw.as_slice());
    let z = project_feature(&raw, &Matrix::zeros(8, 4096)).unwrap();
    assert_eq!(z.as_slice(), &[0.0; 8]);
    assert!(project_feature(&raw[..10], &Matrix::zeros(8, 4096)).is_err());
}

#[test]
fn model_with_projection_maps_raw_features() {
    let model = small_model(4, 10, 4, 3, 2, 6);
    assert!(model.config.has_projection());
    let raw: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
    let f = model.project(&raw).unwrap();
    let p = model.params.projection.as_ref().unwrap();
    for r in 0..4 {
        let expect: f64 = (0..10).map(|c| p.get(r, c) * raw[c]).sum();
        assert!((f[r] - expect).abs() < 1e-14);
    }
    assert!(model.project(&raw[..9]).is_err());
}
