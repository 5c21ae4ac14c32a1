use qdsr_wasm::{blink_localize, psf_preview, simulate_frame};

#[test]
fn psf_preview_measures_width_and_squeeze() {
    let p = psf_preview("gaussian", 12.0, 1.0, 0.0).unwrap();
    assert_eq!(p.values().len(), p.size() * p.size());
    assert!((p.measured_fwhm() - 12.0).abs() < 0.2);
    assert!(p.first_zero().is_nan());
    let a = psf_preview("airy", 12.0, 0.7, 40.0).unwrap();
    assert!((a.anisotropy() - 0.7).abs() < 0.03);
    assert!((a.values().iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(a.first_zero() > 12.0);
    assert!(psf_preview("lorentz", 12.0, 1.0, 0.0).is_err());
    assert!(psf_preview("airy", -1.0, 1.0, 0.0).is_err());
}

#[test]
fn simulated_frame_is_localized() {
    let s = simulate_frame(3, 32, 3, "airy", 10.0, 20_000.0, 5.0).unwrap();
    assert_eq!(s.frame().len(), 32 * 32);
    assert_eq!(s.truth_x().len(), 3);
    assert_eq!(s.fit_x().len(), s.fit_y().len());
    // every well-separated emitter has a fit within half a camera pixel
    let (tx, ty, fx, fy) = (s.truth_x(), s.truth_y(), s.fit_x(), s.fit_y());
    for i in 0..3 {
        let isolated = (0..3).filter(|&j| j != i).all(|j| (tx[i] - tx[j]).hypot(ty[i] - ty[j]) > 6.0);
        if isolated {
            let best = fx.iter().zip(&fy).map(|(x, y)| (x - tx[i]).hypot(y - ty[i])).fold(f64::INFINITY, f64::min);
            assert!(best < 0.5, "emitter {i}: nearest fit {best}");
        }
    }
    assert!(simulate_frame(1, 4, 3, "airy", 10.0, 1e4, 5.0).is_err());
}

#[test]
fn blink_pair_is_localized() {
    let b = blink_localize(5, 24, 6, "gaussian", 10.0, 5000.0, 5.0).unwrap();
    assert_eq!(b.before().len(), 24 * 24);
    assert_eq!(b.detection().len(), 24 * 24);
    let err = (b.found_x() - b.removed_x()).hypot(b.found_y() - b.removed_y());
    assert!(err < 0.3, "{}", b.message());
    assert!(blink_localize(5, 8, 6, "gaussian", 30.0, 5000.0, 5.0).is_err());
}
