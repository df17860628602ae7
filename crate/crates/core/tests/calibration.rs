use spike_core::partition::calibrate_k;

/// Timing-based, so allow a few attempts before declaring the constant
/// size-dependent.
#[test]
fn k_is_roughly_scale_free() {
    let mut last = (0.0, 0.0);
    for _ in 0..3 {
        let small = calibrate_k(4000, 16).unwrap();
        let large = calibrate_k(8000, 16).unwrap();
        assert!(small > 0.0 && large > 0.0);
        if (large / small - 1.0).abs() < 0.2 {
            return;
        }
        last = (small, large);
    }
    panic!("K changed by more than 20% when doubling the sample: {last:?}");
}
