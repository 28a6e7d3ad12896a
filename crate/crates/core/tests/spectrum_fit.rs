use cavmag_core::analyzer::Trace;
use cavmag_core::fit::{fit_spectrum, FitParameter};
use cavmag_core::model::{table3_cavity, SpherePosition};
use cavmag_core::{sweep, FrequencyGrid};

#[test]
fn seven_mode_frequencies_round_trip() {
    let truth = table3_cavity(SpherePosition::A).without_magnons();
    let data = Trace::s21(&sweep(&truth, &FrequencyGrid::new(12.0, 17.0, 20_001).unwrap()).unwrap());
    let mut start = truth.clone();
    let offsets = [0.4e-3, -0.3e-3, 0.5e-3, -0.2e-3, 0.3e-3, -0.5e-3, 0.2e-3];
    for (mode, d) in start.photon_modes.iter_mut().zip(offsets) {
        mode.frequency += d;
    }
    let free: Vec<FitParameter> = (0..7).map(FitParameter::PhotonFrequency).collect();
    let fit = fit_spectrum(&data, &start, &free).unwrap();
    for (fitted, exact) in fit.spec.photon_modes.iter().zip(&truth.photon_modes) {
        assert!(
            (fitted.frequency - exact.frequency).abs() < 1e-3,
            "{}: {} vs {}",
            exact.label,
            fitted.frequency,
            exact.frequency
        );
    }
    assert!(fit.rms_db < 1e-6 && fit.rms_db < fit.initial_rms_db);
    assert_eq!(fit.changes.len(), 7);
}

#[test]
fn damping_and_coupling_round_trip() {
    let mut truth = table3_cavity(SpherePosition::B).select_photons(&[5]).unwrap();
    truth.set_magnon_frequency(0, 15.2).unwrap();
    let data = Trace::s21(&sweep(&truth, &FrequencyGrid::new(15.0, 15.4, 4001).unwrap()).unwrap());
    let mut start = truth.clone();
    let free = [
        FitParameter::PhotonGamma(0),
        FitParameter::MagnonCoupling { photon: 0, magnon: 0 },
    ];
    free[0].set(&mut start, free[0].get(&truth) * 1.2);
    free[1].set(&mut start, free[1].get(&truth) * 0.9);
    let fit = fit_spectrum(&data, &start, &free).unwrap();
    for (p, change) in free.iter().zip(&fit.changes) {
        let exact = p.get(&truth);
        assert!(
            (change.fitted - exact).abs() < 1e-6 * exact.abs().max(1.0),
            "{} {} {} {}",
            change.name,
            change.fitted,
            exact,
            fit.iterations
        );
    }
}
