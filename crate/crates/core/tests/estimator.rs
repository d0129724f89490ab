mod common;

use common::*;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thz_sounder::forward::{synth_ctf, NoiseSpec};
use thz_sounder::sage::{
    estimate_mpcs, sage_refine, sage_refine_traced, sic_initialize, EstimatorConfig, MpcEstimate,
};
use thz_sounder::Mpc;

fn cfg() -> EstimatorConfig {
    EstimatorConfig::default()
}

#[test]
fn sic_single_path_on_grid_direction() {
    let (_, _, rx) = standard_setup();
    let truth = Mpc::new(2e-4, 87.654321e-9, deg(120.0), deg(10.0)).unwrap();
    let ctf = synth(&[truth.clone()], None);
    let est = sic_initialize(&ctf, &rx, &cfg()).unwrap();
    assert_eq!(est.len(), 1);
    let e = &est[0].mpc;
    assert!((e.tau - truth.tau).abs() <= TIME_RESOLUTION_S / cfg().delay_oversampling as f64);
    assert!(az_err_deg(e.aoa, truth.aoa) <= 5.0);
    assert!(el_err_deg(e.eoa, truth.eoa) <= 5.0);
}

#[test]
fn refinement_beats_grid_snapping() {
    let (_, _, rx) = standard_setup();
    let truth = Mpc::new(1e-3, 41.234e-9, deg(13.0), 0.0).unwrap();
    let ctf = synth(&[truth.clone()], None);
    let est = estimate_mpcs(&ctf, &rx, &cfg()).unwrap();
    assert_eq!(est.len(), 1);
    assert!(az_err_deg(est[0].grid_aoa, truth.aoa) >= 3.0);
    assert!(az_err_deg(est[0].mpc.aoa, truth.aoa) <= 1.0);
    assert!(el_err_deg(est[0].mpc.eoa, truth.eoa) <= 1.0);
    assert!((est[0].mpc.alpha / truth.alpha - 1.0).abs() < 0.05);
}

#[test]
fn threshold_drops_path_40_db_down() {
    let (_, _, rx) = standard_setup();
    let truth = [
        Mpc::new(1e-3, 30e-9, deg(40.0), 0.0).unwrap(),
        Mpc::new(1e-5, 90e-9, deg(200.0), deg(10.0)).unwrap(),
    ];
    let ctf = synth(&truth, None);
    assert_eq!(sic_initialize(&ctf, &rx, &cfg()).unwrap().len(), 1);
    assert_eq!(estimate_mpcs(&ctf, &rx, &cfg()).unwrap().len(), 1);
}

#[test]
fn threshold_admits_exactly_planted_ladder() {
    let (_, _, rx) = standard_setup();
    // 0, -10, -20, -28 dB are inside the 30 dB window; -34 dB is not
    let truth: Vec<Mpc> = [
        (0.0, 20.0, 0.0),
        (-10.0, 60.0, 90.0),
        (-20.0, 110.0, 180.0),
        (-28.0, 150.0, 270.0),
        (-34.0, 200.0, 135.0),
    ]
    .iter()
    .map(|&(db, ns, az): &(f64, f64, f64)| {
        Mpc::new(1e-3 * 10f64.powf(db / 20.0), ns * 1e-9, deg(az), 0.0).unwrap()
    })
    .collect();
    let ctf = synth(&truth, None);
    let est = estimate_mpcs(&ctf, &rx, &cfg()).unwrap();
    assert_eq!(
        est.len(),
        4,
        "{:?}",
        est.iter().map(|e| e.mpc.power_db()).collect::<Vec<_>>()
    );
}

#[test]
fn empty_channel_gives_no_paths() {
    let (grid, steering, rx) = standard_setup();
    let ctf = thz_sounder::Ctf::zeros(grid, steering);
    assert!(sic_initialize(&ctf, &rx, &cfg()).unwrap().is_empty());
    assert!(estimate_mpcs(&ctf, &rx, &cfg()).unwrap().is_empty());
}

fn three_paths() -> Vec<Mpc> {
    vec![
        Mpc::new(1e-3, 41.234e-9, deg(13.0), deg(4.3)).unwrap(),
        Mpc::new(2e-4, 63.1e-9, deg(200.0), deg(-7.0)).unwrap(),
        Mpc::new(1e-4, 77.7e-9, deg(95.0), deg(12.0)).unwrap(),
    ]
}

#[test]
fn refinement_explains_noiseless_scene() {
    let (_, _, rx) = standard_setup();
    let ctf = synth(&three_paths(), None);
    let seeds = sic_initialize(&ctf, &rx, &cfg()).unwrap();
    let (est, trace) = sage_refine_traced(&ctf, &seeds, &rx, &cfg()).unwrap();
    assert_eq!(est.len(), 3);
    let last = *trace.residual_energy.last().unwrap();
    assert!(last < 1e-6 * ctf.energy(), "{last} vs {}", ctf.energy());
}

#[test]
fn residual_energy_never_grows() {
    let (_, _, rx) = standard_setup();
    let ctf = synth(&three_paths(), Some(NoiseSpec::new(30.0, 5)));
    let seeds = sic_initialize(&ctf, &rx, &cfg()).unwrap();
    let (_, trace) = sage_refine_traced(&ctf, &seeds, &rx, &cfg()).unwrap();
    for w in trace.residual_energy.windows(2) {
        assert!(w[1] <= w[0] + 1e-9 * ctf.energy(), "{:?}", trace.residual_energy);
    }
}

#[test]
fn exact_single_path_is_a_fixed_point() {
    let (_, _, rx) = standard_setup();
    let truth = Mpc::new(5e-4, 123.456e-9, deg(227.0), deg(-6.0)).unwrap();
    let ctf = synth(&[truth.clone()], None);
    let seed = MpcEstimate {
        mpc: truth.clone(),
        grid_aoa: deg(230.0),
        grid_eoa: 0.0,
        explained_fraction: 1.0,
        amplitudes: Vec::new(),
    };
    let out = sage_refine(&ctf, &[seed], &rx, &cfg()).unwrap();
    assert_eq!(out.len(), 1);
    let e = &out[0].mpc;
    assert!((e.tau - truth.tau).abs() <= 1e-9 * truth.tau);
    assert!((e.aoa - truth.aoa).abs() <= 1e-9);
    assert!((e.eoa - truth.eoa).abs() <= 1e-9);
    assert!(
        (e.alpha - truth.alpha).abs() <= 1e-9 * truth.alpha,
        "{} {:e} {:e} {:e}",
        e.alpha / truth.alpha - 1.0,
        e.aoa - truth.aoa,
        e.eoa - truth.eoa,
        e.tau / truth.tau - 1.0
    );
}

#[test]
fn refining_converged_output_changes_nothing() {
    let (_, _, rx) = standard_setup();
    let ctf = synth(&three_paths(), Some(NoiseSpec::new(40.0, 2)));
    let once = estimate_mpcs(&ctf, &rx, &cfg()).unwrap();
    let again = sage_refine(&ctf, &once, &rx, &cfg()).unwrap();
    assert_eq!(once.len(), again.len());
    for (a, b) in once.iter().zip(&again) {
        assert!((a.mpc.tau - b.mpc.tau).abs() <= 1e-9 * a.mpc.tau);
        assert!((a.mpc.aoa - b.mpc.aoa).abs() <= 1e-9);
        assert!((a.mpc.eoa - b.mpc.eoa).abs() <= 1e-9);
        assert!((a.mpc.alpha - b.mpc.alpha).abs() <= 1e-9 * a.mpc.alpha);
    }
}

#[test]
fn global_phase_and_scale_invariance() {
    let (_, _, rx) = standard_setup();
    let ctf = synth(&three_paths(), Some(NoiseSpec::new(40.0, 8)));
    let base = estimate_mpcs(&ctf, &rx, &cfg()).unwrap();

    let rotated = estimate_mpcs(&ctf.scaled(Complex64::from_polar(1.0, 1.234)), &rx, &cfg()).unwrap();
    assert_eq!(rotated.len(), base.len());
    for (a, b) in base.iter().zip(&rotated) {
        assert!((a.mpc.power() - b.mpc.power()).abs() <= 1e-6 * a.mpc.power());
    }

    let c = 0.37;
    let scaled = estimate_mpcs(&ctf.scaled(Complex64::new(c, 0.0)), &rx, &cfg()).unwrap();
    assert_eq!(scaled.len(), base.len());
    for (a, b) in base.iter().zip(&scaled) {
        assert!((b.mpc.alpha - c * a.mpc.alpha).abs() <= 1e-9 * c * a.mpc.alpha);
        assert!((a.mpc.tau - b.mpc.tau).abs() <= 1e-9 * a.mpc.tau);
        assert!((a.mpc.aoa - b.mpc.aoa).abs() <= 1e-9);
        assert!((a.mpc.eoa - b.mpc.eoa).abs() <= 1e-9);
    }
}

#[test]
fn resynthesis_reproduces_single_path() {
    let (grid, steering, rx) = standard_setup();
    let truth = Mpc::new(7e-4, 222.2e-9, deg(301.5), deg(-13.2)).unwrap();
    let ctf = synth(&[truth], None);
    let est = estimate_mpcs(&ctf, &rx, &cfg()).unwrap();
    assert_eq!(est.len(), 1);
    let again = synth_ctf(&[est[0].phased_mpc()], &grid, &steering, &rx, None).unwrap();
    let err: f64 = ctf
        .data()
        .iter()
        .zip(again.data())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum();
    assert!(err < 1e-6 * ctf.energy(), "{}", err / ctf.energy());
}

#[test]
fn pure_noise_yields_at_most_one_path() {
    let (_, _, rx) = standard_setup();
    for seed in 0..3 {
        let est = estimate_mpcs(&pure_noise(seed), &rx, &cfg()).unwrap();
        assert!(est.len() <= 1, "seed {seed}: {} paths", est.len());
    }
}

#[test]
fn five_path_atrium_scene() {
    let (_, _, rx) = standard_setup();
    let truth = vec![
        Mpc::new(3.9e-5, 33.36e-9, deg(183.7), deg(4.1)).unwrap(),
        Mpc::new(1.1e-5, 41.02e-9, deg(123.4), deg(-8.8)).unwrap(),
        Mpc::new(6.0e-6, 52.77e-9, deg(244.2), deg(11.6)).unwrap(),
        Mpc::new(3.3e-6, 70.13e-9, deg(31.9), deg(-2.7)).unwrap(),
        Mpc::new(2.4e-6, 88.48e-9, deg(305.5), deg(15.3)).unwrap(),
    ];
    let ctf = synth(&truth, Some(NoiseSpec::new(40.0, 21)));
    let est = estimate_mpcs(&ctf, &rx, &cfg()).unwrap();
    assert_eq!(est.len(), 5);
    for t in &truth {
        let e = est
            .iter()
            .min_by(|a, b| (a.mpc.tau - t.tau).abs().total_cmp(&(b.mpc.tau - t.tau).abs()))
            .unwrap();
        assert!((e.mpc.tau - t.tau).abs() <= TIME_RESOLUTION_S);
        assert!(az_err_deg(e.mpc.aoa, t.aoa) <= 2.0);
        assert!(el_err_deg(e.mpc.eoa, t.eoa) <= 2.0);
    }
}

#[test]
fn random_single_paths_gain_within_five_percent() {
    let (_, _, rx) = standard_setup();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..3 {
        let t = random_offgrid_path(&mut rng);
        let est = estimate_mpcs(&synth(&[t.clone()], None), &rx, &cfg()).unwrap();
        assert_eq!(est.len(), 1);
        assert!((est[0].mpc.alpha / t.alpha - 1.0).abs() < 0.05);
        assert!(est[0].explained_fraction > 0.99 && est[0].explained_fraction <= 1.0);
    }
}

#[test]
fn per_direction_phases_are_handled() {
    let (grid, steering, rx) = standard_setup();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let phases: Vec<f64> = (0..steering.len())
        .map(|_| rand::Rng::gen_range(&mut rng, 0.0..std::f64::consts::TAU))
        .collect();
    let truth = Mpc::new(1e-4, 50.5e-9, deg(77.0), deg(3.0))
        .unwrap()
        .with_phase(thz_sounder::PathPhase::PerDirection(phases));
    let ctf = synth_ctf(&[truth.clone()], &grid, &steering, &rx, None).unwrap();
    let est = estimate_mpcs(&ctf, &rx, &cfg()).unwrap();
    assert_eq!(est.len(), 1);
    assert!(az_err_deg(est[0].mpc.aoa, truth.aoa) <= 1.0);
    assert!((est[0].mpc.alpha / truth.alpha - 1.0).abs() < 0.05);
}
