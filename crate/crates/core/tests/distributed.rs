use num_complex::Complex64;
use pint_core::collocation::CollocationTableau;
use pint_core::driver::{run_serial, AlphaMode, DriverSettings, Prepared};
use pint_core::problems::{make_advection, make_dahlquist, make_heat};
use pint_core::runtime::{run_loopback, Phase};

fn bits(blocks: &[Vec<Complex64>]) -> Vec<(u64, u64)> {
    blocks
        .iter()
        .flatten()
        .map(|v| (v.re.to_bits(), v.im.to_bits()))
        .collect()
}

fn assert_bitwise_equal(prepared: &Prepared, settings: &DriverSettings) {
    let serial = run_serial(prepared, settings).unwrap();
    for n_coll in [1, prepared.tableau.stages()] {
        let dist = run_loopback(prepared, settings, prepared.steps(), n_coll).unwrap();
        assert_eq!(bits(&serial.blocks), bits(&dist.outcome.blocks), "n_coll = {n_coll}");
        let a: Vec<_> = serial.outcome.records.iter().map(|r| (r.alpha, r.consec_diff)).collect();
        let b: Vec<_> = dist.outcome.outcome.records.iter().map(|r| (r.alpha, r.consec_diff)).collect();
        assert_eq!(a, b);
    }
}

#[test]
fn dahlquist_matches_serial_bitwise() {
    let settings = DriverSettings::default();
    let ivp = make_dahlquist(Complex64::new(-2.0, 1.0), 1.0, 8).unwrap();
    let prepared = Prepared::new(ivp, CollocationTableau::radau(3).unwrap(), &settings).unwrap();
    assert_bitwise_equal(&prepared, &settings);
}

#[test]
fn heat_matches_serial_bitwise() {
    let settings = DriverSettings {
        alpha_mode: AlphaMode::Fixed(1e-3),
        ..DriverSettings::default()
    };
    let ivp = make_heat(8, 2, 0.1, 4).unwrap();
    let prepared = Prepared::new(ivp, CollocationTableau::radau(2).unwrap(), &settings).unwrap();
    assert_bitwise_equal(&prepared, &settings);
}

#[test]
fn advection_matches_serial_bitwise() {
    let settings = DriverSettings::default();
    let ivp = make_advection(8, 1, 0.1, 2).unwrap();
    let prepared = Prepared::new(ivp, CollocationTableau::radau(2).unwrap(), &settings).unwrap();
    assert_bitwise_equal(&prepared, &settings);
}

#[test]
fn last_step_value_reaches_each_first_step_rank_once() {
    let settings = DriverSettings {
        alpha_mode: AlphaMode::Fixed(1e-4),
        max_iterations: 3,
        tol_outer: 1e-300,
        ..DriverSettings::default()
    };
    let ivp = make_dahlquist(Complex64::new(-1.0, 0.0), 1.0, 4).unwrap();
    let prepared = Prepared::new(ivp, CollocationTableau::radau(3).unwrap(), &settings).unwrap();
    for (n_coll, expected) in [(1, 1), (3, 3)] {
        let run = run_loopback(&prepared, &settings, 4, n_coll).unwrap();
        let iterations = run.outcome.outcome.records.len();
        assert_eq!(iterations, 3);
        for k in 0..iterations {
            let sends: Vec<_> = run
                .log
                .iter()
                .filter(|s| s.phase() == Some(Phase::LastStep) && s.iteration() == k)
                .collect();
            assert_eq!(sends.len(), expected, "n_coll = {n_coll}, k = {k}");
            let sender = 3 * n_coll + n_coll - 1;
            assert!(sends.iter().all(|s| s.src == sender && s.dest < n_coll));
        }
    }
}

#[test]
fn wrong_step_count_is_a_config_error() {
    let settings = DriverSettings::default();
    let ivp = make_dahlquist(Complex64::new(-1.0, 0.0), 1.0, 4).unwrap();
    let prepared = Prepared::new(ivp, CollocationTableau::radau(2).unwrap(), &settings).unwrap();
    assert!(run_loopback(&prepared, &settings, 8, 1).is_err());
    assert!(run_loopback(&prepared, &settings, 4, 3).is_err());
}

#[test]
fn butterfly_sends_are_logarithmic_in_step_count() {
    let settings = DriverSettings {
        alpha_mode: AlphaMode::Fixed(1e-3),
        max_iterations: 2,
        tol_outer: 1e-300,
        ..DriverSettings::default()
    };
    for steps in [2usize, 4, 8, 16] {
        let ivp = make_dahlquist(Complex64::new(-1.0, 0.5), 1.0, steps).unwrap();
        let prepared = Prepared::new(ivp, CollocationTableau::radau(2).unwrap(), &settings).unwrap();
        let run = run_loopback(&prepared, &settings, steps, 1).unwrap();
        let log2 = steps.trailing_zeros() as usize;
        for k in 0..2 {
            for rank in 0..steps {
                let n = run
                    .log
                    .iter()
                    .filter(|s| {
                        s.src == rank
                            && s.iteration() == k
                            && matches!(s.phase(), Some(Phase::Forward | Phase::Inverse))
                    })
                    .count();
                assert_eq!(n, 2 * log2, "L = {steps}, rank {rank}, k = {k}");
            }
        }
    }
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let settings = DriverSettings::default();
    let ivp = make_heat(8, 2, 0.1, 4).unwrap();
    let prepared = Prepared::new(ivp, CollocationTableau::radau(2).unwrap(), &settings).unwrap();
    let a = run_loopback(&prepared, &settings, 4, 2).unwrap();
    let b = run_loopback(&prepared, &settings, 4, 2).unwrap();
    assert_eq!(bits(&a.outcome.blocks), bits(&b.outcome.blocks));
    let sig = |log: &[pint_core::runtime::SendRecord]| {
        log.iter().map(|s| (s.src, s.dest, s.tag, s.len)).collect::<Vec<_>>()
    };
    assert_eq!(sig(&a.log), sig(&b.log));
}
