use cqed_core::control::{calibrate_for_mu, BranchParams, ControlPulse, GenerationSequence, PulseShape};
use cqed_core::markov::EnvelopeOptions;
use cqed_core::reservoir::{
    compare_with_markov, factorization_report, integrate_single, integrate_two_photon, ModeGrid,
    ReservoirOptions, TwoPhotonSchedule,
};

fn params() -> BranchParams {
    BranchParams {
        g: 1.0,
        delta: 30.0,
        kappa_c: 1.0,
        kappa_abs: 1e-4,
        gamma_sp: 0.1,
    }
}

fn raised_cosine(p: &BranchParams, start: f64, t: f64, mu: f64) -> GenerationSequence {
    let template = ControlPulse::new(PulseShape::RaisedCosineWindow {
        amplitude: 1.0,
        start: 0.0,
        stop: t,
    });
    let pulse = calibrate_for_mu(&template, p, t, mu).unwrap();
    GenerationSequence::symmetric(start, t, pulse)
}

#[test]
fn single_photon_markov_error_raised_cosine() {
    let p = params();
    let seq = raised_cosine(&p, 0.0, 15.0, 5.0);
    let drive = seq.drive(0, &p).unwrap();
    let modes = ModeGrid::in_kappa(1.0, 256, 40.0).unwrap();
    let cmp = compare_with_markov(&drive, &modes, &ReservoirOptions::default(), &EnvelopeOptions::default()).unwrap();
    println!("{cmp:?}");
    assert!(cmp.error < 0.02);
    assert!(cmp.residual_initial < 1e-3);
    assert!(cmp.max_norm_drift < 1e-9);
}

#[test]
fn envelope_norm_matches_emitted_probability() {
    let p = params();
    let seq = raised_cosine(&p, 3.0, 15.0, 5.0);
    let drive = seq.drive(1, &p).unwrap();
    let modes = ModeGrid::in_kappa(1.0, 256, 40.0).unwrap();
    let run = integrate_single(&drive, &modes, &ReservoirOptions::default()).unwrap();
    let env = run.envelope();
    assert!((env.norm_sqr() - run.emitted_norm()).abs() < 1e-12);
    assert!((run.total_norm() - 1.0).abs() < 1e-9);
}

#[test]
fn two_photon_factorizes_for_disjoint_windows() {
    let p = params();
    let t = 15.0;
    let schedule = TwoPhotonSchedule {
        branch: 0,
        first: raised_cosine(&p, 0.0, t, 5.0),
        second: raised_cosine(&p, t, t, 5.0),
        allow_overlap: false,
    };
    let modes = ModeGrid::in_kappa(1.0, 256, 40.0).unwrap();
    let opts = ReservoirOptions::default();
    let run = integrate_two_photon(&schedule, &p, &modes, &opts).unwrap();
    let rep = factorization_report(&run, &schedule, &p, &opts).unwrap();
    println!("{rep:?}");
    assert!(rep.error < 1e-3);
    assert!(rep.max_norm_drift < 1e-9);

    let overlapping = TwoPhotonSchedule {
        second: raised_cosine(&p, 0.4 * t, t, 5.0),
        allow_overlap: true,
        ..schedule
    };
    let run = integrate_two_photon(&overlapping, &p, &modes, &opts).unwrap();
    let rep = factorization_report(&run, &overlapping, &p, &opts).unwrap();
    println!("{rep:?}");
    assert!(rep.overlapping);
    assert!(rep.error > 1e-2);
}
