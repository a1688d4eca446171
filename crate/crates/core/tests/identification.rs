//! Cross-module identification properties: the batch solve converges to the
//! AR/convolution ground truth on long closed-loop runs, and the error
//! shrinks as the window grows.

use afclab::afc::{build_normal_equations, recover_feedback, solve_batch};
use afclab::ar::{ar_generate, ArModel};
use afclab::closed_loop::{simulate, SimOptions};
use afclab::filter::FirCoeffs;
use afclab::forward_path::{calibrate_gain, pure_delay};
use afclab::metrics::FrequencyGrid;
use afclab::scenario::{random_ar_model, synthetic_feedback_path};
use afclab::signal::white_noise;

/// Zero-extended ground-truth joint parameters `(d̄, −(d∗f))` for given
/// predictor/auxiliary lengths.
fn ground_truth(
    d: &ArModel,
    f: &FirCoeffs,
    predictor_taps: usize,
    aux_taps: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut a_true = vec![0.0; predictor_taps - 1];
    for (slot, &v) in a_true.iter_mut().zip(&d.coeffs().taps()[1..]) {
        *slot = v;
    }
    let conv = d.coeffs().convolve(f);
    let mut b_true = vec![0.0; aux_taps];
    for (slot, &v) in b_true.iter_mut().zip(conv.taps()) {
        *slot = -v;
    }
    (a_true, b_true)
}

#[test]
fn batch_solve_converges_to_known_scenario() {
    // d = [1, −0.5], f = [0.3, 0.2], forward path = calibrated gain with two
    // samples of delay (matching the predictor length), one million samples.
    let d = ArModel::new(FirCoeffs::new(vec![1.0, -0.5]).unwrap()).unwrap();
    let f = FirCoeffs::new(vec![0.3, 0.2]).unwrap();
    let predictor_taps = 2;
    let path_taps = 2;
    let aux_taps = predictor_taps + path_taps - 1;

    let grid = FrequencyGrid::default_grid();
    let g_unit = pure_delay(2);
    let gain = calibrate_gain(&g_unit, &f, 3.0, &grid).unwrap();
    let g = g_unit.scaled_numerator(gain);

    let w = white_noise(1_000_000, 314, 16_000.0);
    let s = ar_generate(&d, &w).scaled(0.1);
    let opts = SimOptions {
        safeguards: None,
        ..SimOptions::default()
    };
    let out = simulate(&f, &g, None, &s, &opts).unwrap();

    let cs = build_normal_equations(&out.mic, &out.speaker, predictor_taps, aux_taps).unwrap();
    let sol = solve_batch(&cs).unwrap();
    assert!(!sol.degenerate, "kappa {}", sol.kappa);

    assert!((sol.a_bar[0] + 0.5).abs() < 1e-2, "a_bar {:?}", sol.a_bar);
    let want_b = [-0.3, -0.05, 0.1];
    for (got, want) in sol.b.iter().zip(want_b) {
        assert!((got - want).abs() < 1e-2, "b {:?}", sol.b);
    }

    let mut a = vec![1.0];
    a.extend_from_slice(&sol.a_bar);
    let f_hat = recover_feedback(
        &FirCoeffs::new(a).unwrap(),
        &FirCoeffs::new(sol.b.clone()).unwrap(),
        path_taps,
        false,
    )
    .unwrap();
    assert!((f_hat.taps()[0] - 0.3).abs() < 2e-2, "{:?}", f_hat.taps());
    assert!((f_hat.taps()[1] - 0.2).abs() < 2e-2, "{:?}", f_hat.taps());
}

#[test]
fn estimation_error_shrinks_with_window_length() {
    // With an identifiable forward path the batch solution approaches
    // (d̄, −(d∗f)) as the sample count grows; the worst-tap error, averaged
    // over seeds, decreases monotonically over a 4x window ladder.
    let predictor_taps = 4;
    let path_taps = 8;
    let aux_taps = predictor_taps + path_taps - 1;
    let lengths = [20_000usize, 80_000, 320_000];
    let seeds = [1u64, 2, 3];

    let grid = FrequencyGrid::default_grid();
    let mut mean_errors = [0.0f64; 3];
    for &seed in &seeds {
        let d = random_ar_model(predictor_taps, 100 + seed).unwrap();
        let f = synthetic_feedback_path(path_taps, seed, 4.0).unwrap();
        let (a_true, b_true) = ground_truth(&d, &f, predictor_taps, aux_taps);

        let g_unit = pure_delay(5);
        let gain = calibrate_gain(&g_unit, &f, 3.0, &grid).unwrap();
        let g = g_unit.scaled_numerator(gain);

        let w = white_noise(*lengths.last().unwrap(), 500 + seed, 16_000.0);
        let s = ar_generate(&d, &w).scaled(0.05);
        let opts = SimOptions {
            safeguards: None,
            ..SimOptions::default()
        };
        let out = simulate(&f, &g, None, &s, &opts).unwrap();

        for (slot, &n) in mean_errors.iter_mut().zip(&lengths) {
            let mic = afclab::Signal::new(out.mic.samples()[..n].to_vec(), 16_000.0).unwrap();
            let spk = afclab::Signal::new(out.speaker.samples()[..n].to_vec(), 16_000.0).unwrap();
            let cs = build_normal_equations(&mic, &spk, predictor_taps, aux_taps).unwrap();
            let sol = solve_batch(&cs).unwrap();
            let worst = sol
                .a_bar
                .iter()
                .zip(&a_true)
                .chain(sol.b.iter().zip(&b_true))
                .map(|(got, want)| (got - want).abs())
                .fold(0.0, f64::max);
            *slot += worst / seeds.len() as f64;
        }
    }
    assert!(
        mean_errors[0] > mean_errors[1] && mean_errors[1] > mean_errors[2],
        "errors {mean_errors:?}"
    );
}
