use cqed_core::decoherence::{
    absorption_distortion, feasibility, fidelity_curves, fidelity_sample, ErrorDistribution, FidelityMode, MesTarget,
    RecycleError, SlotState,
};
use cqed_core::presets::{self, paper_params};
use cqed_core::sequence::{BitString, MixingPulse, NQubitState, Sign};
use cqed_core::{ControlPulse, C64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn eq7(c0: C64, c1: C64) -> SlotState {
    SlotState::initial(c0, c1).generation_step().unwrap()
}

fn slots(s: &SlotState) -> Vec<(String, [C64; 2], [C64; 2])> {
    s.terms().map(|(k, a)| (k.to_string(), a.i, a.f)).collect()
}

#[test]
fn ideal_recycle_then_generation_matches_perfect_sequence() {
    let (c0, c1) = (c(0.6, 0.0), c(0.0, 0.8));
    let s = eq7(c0, c1).imperfect_recycle(&RecycleError::ideal()).generation_step().unwrap();
    let z = c(0.0, 0.0);
    assert_eq!(
        slots(&s),
        vec![("00".into(), [z, z], [c0, z]), ("11".into(), [z, z], [z, c1])]
    );
}

#[test]
fn real_eps_splits_photon_and_vacancy_branches() {
    let (c0, c1) = (c(0.6, 0.0), c(0.0, 0.8));
    let eps = 0.07;
    let err = RecycleError {
        eps: [c(eps, 0.0); 2],
        deph: [0.0; 2],
    };
    let s = eq7(c0, c1).imperfect_recycle(&err).generation_step().unwrap();
    let leak = (1.0 - (1.0 - eps) * (1.0 - eps)).sqrt();
    let cases = [("00", 0, c0 * (1.0 - eps)), ("11", 1, c1 * (1.0 - eps)), ("0∅", 0, c0 * leak), ("1∅", 1, c1 * leak)];
    let got = slots(&s);
    assert_eq!(got.len(), 4);
    for (key, label, amp) in cases {
        let (_, i, f) = got.iter().find(|(k, _, _)| k == key).unwrap();
        assert!((f[label] - amp).norm() < 1e-15, "{key}");
        assert!((f[1 - label]).norm() == 0.0 && i.iter().all(|x| x.norm() == 0.0));
    }
}

#[test]
fn pure_dephasing_only_rotates_relative_phase() {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let err = RecycleError {
        eps: [c(0.0, 0.0); 2],
        deph: [0.4, -0.3],
    };
    let s = eq7(c(h, 0.0), c(h, 0.0)).imperfect_recycle(&err).generation_step().unwrap();
    let got = slots(&s);
    assert_eq!(got.len(), 2);
    let a00 = got.iter().find(|t| t.0 == "00").unwrap().2[0];
    let a11 = got.iter().find(|t| t.0 == "11").unwrap().2[1];
    let rel = a00 / a11;
    assert!((rel - C64::from_polar(1.0, 0.7)).norm() < 1e-15);
}

proptest! {
    #[test]
    fn recycle_preserves_norm(
        a in 0.0..std::f64::consts::PI, b in -3.0f64..3.0,
        eps_m in 0.0..0.4f64, delta_m in 0.0..1.0f64, seed in 0u64..1000, rounds in 1usize..6,
        mix in 0.0..3.0f64,
    ) {
        let dist = ErrorDistribution::new(eps_m, delta_m).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = eq7(c(a.cos(), 0.0), C64::from_polar(a.sin(), b));
        for _ in 0..rounds {
            s = s.apply_mixing(&MixingPulse::from_angles(mix, 0.5)).unwrap();
            let r = s.imperfect_recycle(&dist.sample(&mut rng));
            prop_assert!((r.norm_sqr() - 1.0).abs() < 1e-12);
            s = r.generation_step().unwrap();
        }
    }
}

#[test]
fn no_errors_gives_unit_fidelity() {
    let dist = ErrorDistribution::new(0.0, 0.0).unwrap();
    for target in [MesTarget::ghz(8), MesTarget { pattern: "01101001".parse().unwrap(), sign: Sign::Minus }] {
        let [raw, post] = fidelity_curves(&target, &dist, 100, 3).unwrap();
        for p in raw.points.iter().chain(&post.points) {
            assert!((p.mean_fidelity - 1.0).abs() < 1e-12, "n = {}", p.n);
        }
    }
}

#[test]
fn single_photon_is_unaffected() {
    let dist = ErrorDistribution::new(0.3, 0.5).unwrap();
    for i in 0..20 {
        for mode in [FidelityMode::Raw, FidelityMode::Postselected] {
            let f = fidelity_sample(1, &MesTarget::ghz(4), &dist, 9, i, mode).unwrap();
            assert!((f - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn raw_never_exceeds_postselected() {
    let dist = ErrorDistribution::new(0.1, 0.05).unwrap();
    let target = MesTarget { pattern: "0110100".parse().unwrap(), sign: Sign::Plus };
    for i in 0..200 {
        let raw = fidelity_sample(7, &target, &dist, 5, i, FidelityMode::Raw).unwrap();
        let post = fidelity_sample(7, &target, &dist, 5, i, FidelityMode::Postselected).unwrap();
        assert!(raw <= post + 1e-15, "sample {i}: {raw} > {post}");
    }
}

#[test]
fn samples_are_reproducible() {
    let dist = ErrorDistribution::new(0.025, 0.05).unwrap();
    let a = fidelity_curves(&MesTarget::ghz(6), &dist, 300, 42).unwrap();
    let b = fidelity_curves(&MesTarget::ghz(6), &dist, 300, 42).unwrap();
    assert_eq!(a, b);
    let x = fidelity_sample(6, &MesTarget::ghz(6), &dist, 42, 17, FidelityMode::Raw).unwrap();
    let y = fidelity_sample(6, &MesTarget::ghz(6), &dist, 42, 17, FidelityMode::Raw).unwrap();
    assert_eq!(x.to_bits(), y.to_bits());
}

fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    // nodes and weights on [0, 1]
    (1..=n)
        .map(|i| {
            let mut x = (std::f64::consts::PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            (0.5 * (1.0 + x), 0.5 * w)
        })
        .collect()
}

fn recycle_a(dist: &ErrorDistribution, u: [f64; 3]) -> C64 {
    let pi = std::f64::consts::PI;
    let eps = C64::from_polar(dist.eps_m * u[0], dist.eps_m * pi * (2.0 * u[1] - 1.0));
    (c(1.0, 0.0) - eps) * C64::from_polar(1.0, dist.delta_m * pi * (2.0 * u[2] - 1.0))
}

#[test]
fn two_qubit_mean_matches_tensor_quadrature() {
    let dist = ErrorDistribution::new(0.1, 0.1).unwrap();
    let rule = gauss_legendre(6);
    let (mut raw, mut post) = (0.0, 0.0);
    let idx = |k: usize, d: usize| rule[(k / 6usize.pow(d as u32)) % 6];
    for k in 0..6usize.pow(6) {
        let pts: Vec<(f64, f64)> = (0..6).map(|d| idx(k, d)).collect();
        let w: f64 = pts.iter().map(|p| p.1).product();
        let a0 = recycle_a(&dist, [pts[0].0, pts[1].0, pts[2].0]);
        let a1 = recycle_a(&dist, [pts[3].0, pts[4].0, pts[5].0]);
        let o = (a0 + a1).norm_sqr();
        raw += w * o / 4.0;
        post += w * o / (2.0 * (a0.norm_sqr() + a1.norm_sqr()));
    }
    let [mc_raw, mc_post] = fidelity_curves(&MesTarget::ghz(2), &dist, 20_000, 2024).unwrap();
    for (mc, exact) in [(mc_raw.points[1].clone(), raw), (mc_post.points[1].clone(), post)] {
        assert!(
            (mc.mean_fidelity - exact).abs() <= 3.0 * mc.std_error,
            "mc {} ± {} vs quadrature {exact}",
            mc.mean_fidelity,
            mc.std_error
        );
    }
}

#[test]
fn ensemble_fidelity_decreases_with_length_and_error() {
    let target = MesTarget::ghz(10);
    let curves: Vec<_> = [0.0125, 0.025, 0.1]
        .iter()
        .map(|&e| fidelity_curves(&target, &ErrorDistribution::new(e, 0.0).unwrap(), 2000, 1).unwrap()[0].clone())
        .collect();
    for c in &curves {
        for w in c.points.windows(2) {
            assert!(w[1].mean_fidelity <= w[0].mean_fidelity + 2.0 * w[1].std_error.max(w[0].std_error));
        }
    }
    for n in 2..=10 {
        for pair in curves.windows(2) {
            let (a, b) = (pair[0].at(n).unwrap(), pair[1].at(n).unwrap());
            assert!(a.mean_fidelity - b.mean_fidelity > 2.0 * a.std_error.hypot(b.std_error), "n = {n}");
        }
    }
}

#[test]
fn equal_absorption_is_identity() {
    let state = NQubitState::mes("0110".parse().unwrap(), Sign::Minus).unwrap();
    let d = absorption_distortion(&state, 0.3, 0.3, 7.0).unwrap();
    assert_eq!(d.fidelity, 1.0);
    for (x, q) in state.terms() {
        assert_eq!(d.state.amplitude(x), q);
    }
}

#[test]
fn ghz_absorption_closed_form() {
    for n in 1..=10usize {
        for lambda in [1e-3, 0.05, 0.4, 2.0] {
            let state = NQubitState::ghz(n).unwrap();
            let d = absorption_distortion(&state, 0.1, 0.1 + lambda, 1.0).unwrap();
            let x = (-lambda * n as f64).exp();
            let expected = (1.0 + x).powi(2) / (2.0 * (1.0 + x * x));
            assert!((d.fidelity - expected).abs() <= 1e-12, "n {n} λ {lambda}");
        }
    }
    let d = absorption_distortion(&NQubitState::ghz(5).unwrap(), 0.0, 1e3, 1.0).unwrap();
    assert!((d.fidelity - 0.5).abs() < 1e-12);
    let zeros = BitString::zeros(5);
    assert!((d.state.amplitude(zeros).norm() - 1.0).abs() < 1e-12);
}

#[test]
fn paper_feasibility_numbers() {
    let params = paper_params();
    let t = presets::window(&params, 10.0);
    let pulse = presets::gaussian_pulse(t, 0.1, presets::PAPER_PEAK_RABI);
    let rep = feasibility(&params, &pulse, t, 4.0 * t, 1e-4).unwrap();
    assert!(rep.p_sp < 1e-3, "p_sp = {}", rep.p_sp);
    assert!(rep.p_sp_conservative < 1e-3);
    assert!((rep.n_max - 1e4).abs() < 1e-9);
    assert!(rep.cycle_rate > 3e5 && rep.cycle_rate < 3e6, "rate {}", rep.cycle_rate);
    let gamma = 5e6 * 55e6 * 55e6 / (4.0 * 1.5e9 * 1.5e9);
    assert!((rep.gamma_eff_peak - gamma).abs() < 1e-9 * gamma);

    let off = feasibility(&params, &ControlPulse::off(), t, 4.0 * t, 1e-4).unwrap();
    assert_eq!((off.gamma_eff_peak, off.p_sp), (0.0, 0.0));
}
