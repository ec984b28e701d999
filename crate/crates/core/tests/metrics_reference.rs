//! MS-SSIM against values computed by `scripts/ms_ssim_reference.py`
//! (TensorFlow `tf.image.ssim_multiscale` on luma, max_val 255).

mod common;

use qtune::metrics::{ms_ssim, psnr, MetricError};

const TF_FULL: f64 = 0.970842897892;
const TF_ODD_CROP: f64 = 0.971266210079;

#[test]
fn full_pair_matches_tensorflow() {
    let (x, y) = common::distorted_pair();
    let got = ms_ssim(&x, &y).unwrap();
    assert!((got - TF_FULL).abs() < 1e-4, "{got} vs {TF_FULL}");
    assert!((ms_ssim(&x, &x).unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn odd_sized_crop_matches_tensorflow() {
    let (x, y) = common::distorted_pair();
    let (x, y) = (x.crop(0, 0, 201, 183).unwrap(), y.crop(0, 0, 201, 183).unwrap());
    let got = ms_ssim(&x, &y).unwrap();
    assert!((got - TF_ODD_CROP).abs() < 1e-4, "{got} vs {TF_ODD_CROP}");
}

#[test]
fn below_minimum_side_is_rejected() {
    let (x, y) = common::distorted_pair();
    let (x, y) = (x.crop(0, 0, 256, 175).unwrap(), y.crop(0, 0, 256, 175).unwrap());
    assert!(matches!(ms_ssim(&x, &y), Err(MetricError::TooSmall { required: 176, .. })));
    assert!(psnr(&x, &y).unwrap() > 20.0);
}
