//! Optics model against closed forms, quadrature-free oracles and an
//! independent likelihood-ratio computation.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use looplab::optics::{
    bell_psi_plus, birefringent_split, decide_entanglement, destructive_geometry,
    detection_probability, fringe_visibility, half_wave_plate, intensity_profile,
    monte_carlo_counts, optimize_aperture, aperture_stability, photon_trace, sample_counts,
    total_flux, DetectorGeometry, EntanglementVerdict, Hypotheses, OpticalState, Path, Photon,
    Polarization, TwoPhotonState,
};
use num_complex::Complex64;
use proptest::prelude::*;

fn geometry() -> DetectorGeometry {
    DetectorGeometry::default()
}

#[test]
fn state_algebra_matches_printed_states() {
    let split = birefringent_split(&bell_psi_plus(), Photon::L).unwrap();
    let mut eq2 = TwoPhotonState::zero(Some(Photon::L));
    eq2.set(Polarization::V, Polarization::H, Path::Two, Complex64::new(FRAC_1_SQRT_2, 0.0));
    eq2.set(Polarization::H, Polarization::V, Path::One, Complex64::new(FRAC_1_SQRT_2, 0.0));
    assert!(split.max_abs_diff(&eq2) < 1e-12);

    let flipped = half_wave_plate(&split, Path::One).unwrap();
    let mut eq3 = TwoPhotonState::zero(Some(Photon::L));
    eq3.set(Polarization::V, Polarization::H, Path::Two, Complex64::new(FRAC_1_SQRT_2, 0.0));
    eq3.set(Polarization::V, Polarization::H, Path::One, Complex64::new(FRAC_1_SQRT_2, 0.0));
    assert!(flipped.max_abs_diff(&eq3) < 1e-12);
    for s in [bell_psi_plus(), split, flipped] {
        assert!((s.norm() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn destructive_distance_residual_from_direct_formula() {
    for (lambda, a) in [(700e-9, 1e-3), (1550e-9, 2e-3), (500e-9, 0.5e-3)] {
        let l = destructive_geometry(lambda, a).unwrap();
        let direct = (l * l + a * a).sqrt() - l - lambda / 2.0;
        assert!(direct.abs() < 1e-15, "{lambda} {a}: {direct:e}");
    }
    assert!(destructive_geometry(1e-3, 0.5e-3).is_err());
}

#[test]
fn nulls_at_detector_positions() {
    let g = geometry();
    let ent = OpticalState::entangled();
    let peak = intensity_profile(&ent, &g, 0.0);
    for x in g.positions() {
        assert!(intensity_profile(&ent, &g, x) < 1e-4 * peak);
    }
}

#[test]
fn visibility_contrast() {
    let g = geometry();
    let ent = fringe_visibility(&OpticalState::entangled(), &g);
    assert!((ent.normalized - 1.0).abs() < 1e-6, "{ent:?}");
    let unent = fringe_visibility(&OpticalState::unentangled_unknown(), &g);
    assert!(unent.normalized < 1e-6, "{unent:?}");
    for path in [Path::One, Path::Two] {
        let known = fringe_visibility(&OpticalState::unentangled_known(path), &g);
        assert!(known.normalized < 1e-6);
    }
}

#[test]
fn unentangled_profile_is_smooth_half_envelope() {
    let g = geometry();
    let unent = OpticalState::unentangled_unknown();
    let w = g.beam_width();
    // closed-form incoherent sum, relative to its value at the centre
    let env = |x: f64| {
        let [x1, x2] = g.positions();
        0.5 * ((-2.0 * (x - x1).powi(2) / (w * w)).exp() + (-2.0 * (x - x2).powi(2) / (w * w)).exp())
    };
    for i in -20..=20 {
        let x = i as f64 * g.a / 10.0;
        let want = env(x) / env(0.0);
        assert!((intensity_profile(&unent, &g, x) - want).abs() < 1e-12, "x={x}");
    }
}

#[test]
fn flux_is_conserved() {
    let g = geometry();
    for kind in looplab::optics::StateKind::ALL {
        let f = total_flux(&kind.state(), &g).unwrap();
        assert!((f - 1.0).abs() < 1e-6, "{kind:?}: {f}");
    }
}

#[test]
fn entangled_capture_is_lower() {
    let g = geometry();
    let e = detection_probability(&OpticalState::entangled(), &g).unwrap();
    let u = detection_probability(&OpticalState::unentangled_unknown(), &g).unwrap();
    assert!(e.combined() < u.combined());
}

#[test]
fn known_path_capture_against_erf_oracle() {
    // the unentangled single-path profile is a Gaussian in x, so capture is an erf difference
    let g = geometry();
    let det = detection_probability(&OpticalState::unentangled_known(Path::One), &g).unwrap();
    let w = g.beam_width();
    let sigma = w / 2.0;
    let cdf = |x: f64| 0.5 * (1.0 + statrs::function::erf::erf(x / (sigma * 2f64.sqrt())));
    let [x1, x2] = g.positions();
    let p1 = cdf(g.d / 2.0) - cdf(-g.d / 2.0);
    let p2 = cdf(x2 - x1 + g.d / 2.0) - cdf(x2 - x1 - g.d / 2.0);
    assert!((det.p1 - p1).abs() < 1e-10, "{} vs {p1}", det.p1);
    assert!((det.p2 - p2).abs() < 1e-10, "{} vs {p2}", det.p2);
    assert!(det.p1 > 0.0);
}

#[test]
fn capture_grows_with_aperture() {
    let g = geometry();
    for kind in [OpticalState::entangled(), OpticalState::unentangled_unknown()] {
        let mut last = (0.0, 0.0);
        for j in 0..=20 {
            let d = g.a * 0.95 * j as f64 / 20.0;
            let det = detection_probability(&kind, &g.with_d(d)).unwrap();
            assert!(det.p1 >= last.0 - 1e-14 && det.p2 >= last.1 - 1e-14, "d={d}");
            last = (det.p1, det.p2);
        }
    }
}

#[test]
fn counts_within_binomial_bounds() {
    let g = geometry();
    let n = 100_000;
    let unent = OpticalState::unentangled_unknown();
    let q = detection_probability(&unent, &g).unwrap().combined();
    let r = monte_carlo_counts(&unent, &g, n, 8).unwrap();
    let sigma = (q * (1.0 - q) / n as f64).sqrt();
    assert!((r.combined() as f64 / n as f64 - q).abs() < 4.0 * sigma);
    let e = monte_carlo_counts(&OpticalState::entangled(), &g, n, 8).unwrap();
    assert!((e.combined() as f64) < 0.5 * r.combined() as f64);
    assert_eq!(r, monte_carlo_counts(&unent, &g, n, 8).unwrap());
}

#[test]
fn photon_trace_agrees_with_counts() {
    let g = geometry();
    let det = detection_probability(&OpticalState::unentangled_unknown(), &g).unwrap();
    let trace: Vec<_> = photon_trace(&det, 5_000, 4, 0).collect();
    let rec = sample_counts(&det, 5_000, 4, 0);
    assert_eq!(trace.iter().filter(|p| p.detector == Some(1)).count() as u64, rec.det1);
    assert_eq!(trace.iter().filter(|p| p.detector == Some(2)).count() as u64, rec.det2);
}

/// Log-likelihood ratio and tail probabilities from first principles.
fn oracle_decision(c: u64, n: u64, qe: f64, qu: f64, alpha: f64) -> EntanglementVerdict {
    let ln_choose = |n: u64, k: u64| {
        statrs::function::gamma::ln_gamma(n as f64 + 1.0)
            - statrs::function::gamma::ln_gamma(k as f64 + 1.0)
            - statrs::function::gamma::ln_gamma((n - k) as f64 + 1.0)
    };
    let pmf = |k: u64, q: f64| (ln_choose(n, k) + k as f64 * q.ln() + (n - k) as f64 * (1.0 - q).ln()).exp();
    let ll = |q: f64| c as f64 * q.ln() + (n - c) as f64 * (1.0 - q).ln();
    let llr = ll(qe) - ll(qu);
    if llr > 0.0 {
        let p: f64 = (0..=c).map(|k| pmf(k, qu)).sum();
        if p < alpha {
            return EntanglementVerdict::Present;
        }
    } else if llr < 0.0 {
        let p: f64 = 1.0 - (0..c).map(|k| pmf(k, qe)).sum::<f64>();
        if p < alpha {
            return EntanglementVerdict::Absent;
        }
    }
    EntanglementVerdict::Inconclusive
}

#[test]
fn decisions_match_oracle_across_counts() {
    let g = geometry();
    let h = Hypotheses::for_geometry(&g).unwrap();
    let n = 10_000;
    for c in (0..=250).step_by(5) {
        let rec = looplab::optics::CountRecord { det1: c, det2: 0, total: n, seed: 0, stream: 0 };
        let got = decide_entanglement(&rec, &g, 0.01).unwrap().verdict;
        assert_eq!(got, oracle_decision(c, n, h.q_ent, h.q_unent, 0.01), "c={c}");
    }
}

#[test]
fn aperture_optimum_is_interior_and_stable() {
    let g = geometry();
    let (coarse, fine, stable) = aperture_stability(&g, 10_000, 49).unwrap();
    let i = coarse.argmax_index();
    assert!(i > 0 && i + 1 < coarse.curve.len());
    assert!(coarse.curve[i - 1].1 < coarse.statistic);
    assert!(coarse.curve[i + 1].1 < coarse.statistic);
    assert!(coarse.curve[0].1 < coarse.statistic);
    assert!(coarse.curve.last().unwrap().1 < coarse.statistic);
    assert!(stable, "{} vs {}", coarse.d_star, fine.d_star);
}

#[test]
fn coinciding_rates_are_inconclusive() {
    let g = geometry().with_d(0.0);
    let rec = looplab::optics::CountRecord { det1: 0, det2: 0, total: 100, seed: 0, stream: 0 };
    let d = decide_entanglement(&rec, &g, 0.05).unwrap();
    assert_eq!(d.verdict, EntanglementVerdict::Inconclusive);
    let scan = optimize_aperture(&g, 100, 9).unwrap();
    assert_eq!(scan.curve.len(), 9);
}

#[test]
fn phase_offset_moves_the_central_maximum() {
    let mut g = geometry();
    g.phi_aux = PI;
    let ent = OpticalState::entangled();
    assert!(intensity_profile(&ent, &g, 0.0) < 1e-6);
}

fn arb_state() -> impl Strategy<Value = TwoPhotonState> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 4).prop_filter_map("non-zero", |v| {
        let mut s = TwoPhotonState::zero(None);
        let pols = [Polarization::V, Polarization::H];
        for (i, (re, im)) in v.into_iter().enumerate() {
            s.set(pols[i / 2], pols[i % 2], Path::None, Complex64::new(re, im));
        }
        let n = s.norm();
        (n > 1e-3).then(|| {
            let mut out = TwoPhotonState::zero(None);
            for (l, p, path, c) in s.terms() {
                out.set(l, p, path, c / n);
            }
            out
        })
    })
}

proptest! {
    #[test]
    fn transforms_preserve_norm(s in arb_state(), photon_l in any::<bool>(), path_one in any::<bool>()) {
        let photon = if photon_l { Photon::L } else { Photon::S };
        let path = if path_one { Path::One } else { Path::Two };
        let split = birefringent_split(&s, photon).unwrap();
        prop_assert!((split.norm() - 1.0).abs() < 1e-12);
        let flipped = half_wave_plate(&split, path).unwrap();
        prop_assert!((flipped.norm() - 1.0).abs() < 1e-12);
        prop_assert!(half_wave_plate(&flipped, path).unwrap().max_abs_diff(&split) < 1e-15);
    }

    #[test]
    fn transforms_are_isometries(a in arb_state(), b in arb_state()) {
        let before = a.distance(&b);
        let sa = birefringent_split(&a, Photon::L).unwrap();
        let sb = birefringent_split(&b, Photon::L).unwrap();
        prop_assert!((sa.distance(&sb) - before).abs() < 1e-12);
        let ha = half_wave_plate(&sa, Path::One).unwrap();
        let hb = half_wave_plate(&sb, Path::One).unwrap();
        prop_assert!((ha.distance(&hb) - before).abs() < 1e-12);
    }

    #[test]
    fn counts_replay(seed in any::<u64>(), stream in 0u64..1000) {
        let det = looplab::optics::Detection { p1: 0.3, p2: 0.2, degenerate: false };
        let a = sample_counts(&det, 200, seed, stream);
        let b = sample_counts(&det, 200, seed, stream);
        prop_assert_eq!(a, b);
        prop_assert!(a.combined() <= a.total);
    }
}
