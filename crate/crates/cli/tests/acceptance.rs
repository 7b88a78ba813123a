//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use looplab::decoherence::{repeated_cycle_survival, survival_monte_carlo, SLOTS_PER_CYCLE};
use looplab::ephemeral::enumerate_consistent;
use looplab::episodic::{run_all_variants, third_case, TestAssumption};
use looplab::optics::{
    bell_psi_plus, birefringent_split, calibrate, destructive_geometry, detection_probability,
    fringe_visibility, golden_section_max, half_wave_plate, intensity_profile, optimize_aperture,
    path_difference_residual, sample_counts, DetectorGeometry, EntanglementVerdict, OpticalState,
    Path as BeamPath, Photon, Polarization, TwoPhotonState, DEFAULT_W0,
};
use looplab::protocol::{
    build_instance, DecisionRule, DecoherenceEntry, DecoherenceSchedule, EventId, EventValue,
    ScenarioConfig,
};
use num_complex::Complex64;
use statrs::function::gamma::ln_gamma;

use DecisionRule::{Opposite, Same};
use EventValue::{No, Yes};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn free_values(a: &looplab::protocol::Assignment) -> Vec<EventValue> {
    EventId::FREE.iter().map(|&e| a.get(e)).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let verdicts: Vec<_> = ScenarioConfig::all_ideal()
        .into_iter()
        .map(|c| (c.clone(), enumerate_consistent(&build_instance(c).unwrap())))
        .collect();
    let elapsed = start.elapsed().as_secs_f64();
    let find = |a, b, x, y| {
        verdicts
            .iter()
            .find(|(c, _)| c.rule_a == a && c.rule_b == b && c.first_action_a == x && c.first_action_b == y)
            .map(|(_, v)| v.clone())
            .unwrap()
    };
    // free events in the order A2', A1, A2, B2, B1', B2'
    let first = find(Same, Opposite, No, Yes);
    let want_first = vec![No, No, No, No, Yes, Yes];
    ensure!(!first.causal_loop, "first case loops");
    ensure!(first.unique().map(free_values) == Some(want_first), "first case chain {:?}", first.consistent_assignments);
    let second = find(Same, Opposite, Yes, No);
    let want_second = vec![Yes, Yes, Yes, No, Yes, Yes];
    ensure!(!second.causal_loop, "second case loops");
    ensure!(second.unique().map(free_values) == Some(want_second), "second case chain {:?}", second.consistent_assignments);
    let third = find(Same, Opposite, Yes, Yes);
    ensure!(third.causal_loop && third.consistent_assignments.is_empty(), "third case has histories");
    ensure!(elapsed < 1.0, "16 configurations took {elapsed:.3} s");
    Ok(format!("first/second chains exact, third case empty, 16 configs in {:.1} ms", elapsed * 1e3))
}

fn criterion_2() -> Outcome {
    let rows = run_all_variants(&third_case()).map_err(|e| e.to_string())?;
    ensure!(rows.len() == TestAssumption::all().len() && rows.len() == 8, "{} variants", rows.len());
    let mut max_cycles = 0;
    for r in &rows {
        let a = &r.final_assignment;
        ensure!(r.cycles <= 3, "{} took {} cycles", r.assumption, r.cycles);
        for e in [EventId::A2p, EventId::A2, EventId::B2, EventId::B2p] {
            ensure!(a.get(e) == No, "{}: {e} = {}", r.assumption, a.get(e));
        }
        ensure!(a.get(EventId::A1) == No && a.get(EventId::B1p) == Yes, "{}: {a}", r.assumption);
        max_cycles = max_cycles.max(r.cycles);
    }
    Ok(format!("8/8 variants reach all-NO with A1=NO, B1'=YES, at most {max_cycles} cycles"))
}

fn criterion_3() -> Outcome {
    let cfg = ScenarioConfig::ideal(Same, Same, Yes, Yes);
    let entry = DecoherenceEntry {
        pair: looplab::protocol::Pair::S,
        arc: "A2->B2".parse().unwrap(),
    };
    let schedule = DecoherenceSchedule::from_entries([entry]).unwrap();
    let scheduled = enumerate_consistent(&build_instance(cfg.clone().with_schedule(schedule)).unwrap());
    let ideal = enumerate_consistent(&build_instance(cfg.clone().with_schedule(DecoherenceSchedule::new())).unwrap());
    ensure!(scheduled.causal_loop, "decoherence on S between A2 and B2 gives no loop");
    ensure!(!ideal.causal_loop, "empty schedule loops");
    Ok("S@A2->B2 loops, empty schedule does not".into())
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let slots = SLOTS_PER_CYCLE as u64;
    let mut worst = 0.0f64;
    for p in [0.01, 0.1, 0.5] {
        for n in [1u64, 2, 5, 10, 100, 1000] {
            let got = repeated_cycle_survival(p, n, slots).map_err(|e| e.to_string())?;
            let want = 1.0 - (1.0 - p).powf((n * slots) as f64);
            worst = worst.max((got - want).abs());
        }
    }
    ensure!(worst < 1e-12, "closed form deviates by {worst:e}");
    let mut max_z = 0.0f64;
    for (i, p) in [0.01, 0.1, 0.5].into_iter().enumerate() {
        let exact = repeated_cycle_survival(p, 1, slots).unwrap();
        let e = survival_monte_carlo(p, 1, slots, 100_000, 1000 + i as u64).map_err(|e| e.to_string())?;
        let z = (e.fraction - exact).abs() / e.sigma_at(exact);
        ensure!(z < 4.0, "p={p}: {} vs {exact} ({z:.2} sigma)", e.fraction);
        max_z = max_z.max(z);
    }
    let elapsed = start.elapsed().as_secs_f64();
    ensure!(elapsed < 30.0, "took {elapsed:.1} s");
    Ok(format!("closed form within {worst:e}, Monte Carlo within {max_z:.2} sigma, {elapsed:.1} s"))
}

fn criterion_5() -> Outcome {
    let h = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let split = birefringent_split(&bell_psi_plus(), Photon::L).map_err(|e| e.to_string())?;
    let mut eq2 = TwoPhotonState::zero(Some(Photon::L));
    eq2.set(Polarization::V, Polarization::H, BeamPath::Two, h);
    eq2.set(Polarization::H, Polarization::V, BeamPath::One, h);
    let flipped = half_wave_plate(&split, BeamPath::One).map_err(|e| e.to_string())?;
    let mut eq3 = TwoPhotonState::zero(Some(Photon::L));
    eq3.set(Polarization::V, Polarization::H, BeamPath::Two, h);
    eq3.set(Polarization::V, Polarization::H, BeamPath::One, h);
    let d2 = split.max_abs_diff(&eq2);
    let d3 = flipped.max_abs_diff(&eq3);
    ensure!(d2 < 1e-12, "split differs by {d2:e}");
    ensure!(d3 < 1e-12, "wave plate differs by {d3:e}");
    for s in [bell_psi_plus(), split, flipped] {
        ensure!((s.norm() - 1.0).abs() < 1e-12, "norm {}", s.norm());
    }
    Ok(format!("amplitudes within {:e}, norms preserved", d2.max(d3)))
}

fn default_geometry() -> Result<DetectorGeometry, String> {
    DetectorGeometry::destructive(700e-9, 1e-3, 0.0, DEFAULT_W0).map_err(|e| e.to_string())
}

fn criterion_6() -> Outcome {
    let g = default_geometry()?;
    let l = destructive_geometry(g.lambda, g.a).map_err(|e| e.to_string())?;
    let residual = path_difference_residual(g.lambda, g.a, l).abs();
    // independent form of the same residual
    let direct = (((l * l + g.a * g.a).sqrt() - l) - g.lambda / 2.0).abs();
    ensure!(residual < 1e-15 && direct < 1e-15, "residual {residual:e} / {direct:e}");
    let ent = OpticalState::entangled();
    let half = g.fringe_period() / 2.0;
    let x = golden_section_max(|x| intensity_profile(&ent, &g, x), -half, half, 1e-12 * g.a);
    let peak = (0..=4000)
        .map(|i| intensity_profile(&ent, &g, -2.0 * g.a + g.a * i as f64 / 1000.0))
        .fold(intensity_profile(&ent, &g, x), f64::max);
    let depth = g
        .positions()
        .iter()
        .map(|&p| intensity_profile(&ent, &g, p) / peak)
        .fold(0.0, f64::max);
    ensure!(depth < 1e-4, "null depth {depth:e}");
    let vis = fringe_visibility(&OpticalState::unentangled_unknown(), &g);
    ensure!(vis.normalized < 1e-6, "unentangled visibility {:e}", vis.normalized);
    Ok(format!(
        "residual {residual:e} m, null depth {depth:e}, unentangled visibility {:e}",
        vis.normalized
    ))
}

/// Binomial likelihood-ratio decision from log-pmf sums.
fn oracle_verdict(c: u64, n: u64, qe: f64, qu: f64, alpha: f64) -> EntanglementVerdict {
    let ln_pmf = |k: u64, q: f64| {
        ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
            + k as f64 * q.ln()
            + (n - k) as f64 * (1.0 - q).ln()
    };
    let ll = |q: f64| c as f64 * q.ln() + (n - c) as f64 * (1.0 - q).ln();
    let llr = ll(qe) - ll(qu);
    if llr > 0.0 && (0..=c).map(|k| ln_pmf(k, qu).exp()).sum::<f64>() < alpha {
        EntanglementVerdict::Present
    } else if llr < 0.0 && 1.0 - (0..c).map(|k| ln_pmf(k, qe).exp()).sum::<f64>() < alpha {
        EntanglementVerdict::Absent
    } else {
        EntanglementVerdict::Inconclusive
    }
}

fn criterion_7() -> Outcome {
    let start = Instant::now();
    let (n_photons, n_trials, alpha, seed) = (10_000u64, 1_000u64, 0.01, 7u64);
    let g0 = default_geometry()?;
    let scan = optimize_aperture(&g0, n_photons, 49).map_err(|e| e.to_string())?;
    let g = g0.with_d(scan.d_star);
    let cal = calibrate(&g, n_photons, n_trials, alpha, seed).map_err(|e| e.to_string())?;
    let ent = detection_probability(&OpticalState::entangled(), &g).map_err(|e| e.to_string())?;
    let unent = detection_probability(&OpticalState::unentangled_unknown(), &g).map_err(|e| e.to_string())?;
    let (qe, qu) = (ent.combined(), unent.combined());
    let (mut false_present, mut missed) = (0u64, 0u64);
    for t in 0..n_trials {
        let ru = sample_counts(&unent, n_photons, seed, 2 * t);
        let re = sample_counts(&ent, n_photons, seed, 2 * t + 1);
        false_present += u64::from(oracle_verdict(ru.combined(), n_photons, qe, qu, alpha) == EntanglementVerdict::Present);
        missed += u64::from(oracle_verdict(re.combined(), n_photons, qe, qu, alpha) != EntanglementVerdict::Present);
    }
    ensure!(
        (false_present, missed) == (cal.false_present, cal.missed_present),
        "oracle errors ({false_present}, {missed}) vs engine ({}, {})",
        cal.false_present,
        cal.missed_present
    );
    let combined = cal.combined_error();
    let elapsed = start.elapsed().as_secs_f64();
    ensure!(combined < 0.02, "combined error {combined}");
    ensure!(elapsed < 120.0, "took {elapsed:.1} s");
    Ok(format!(
        "d*={:.3e} m, type-I {} + type-II {} = {combined} over {n_trials} trials, oracle agrees, {elapsed:.1} s",
        scan.d_star,
        cal.type_i(),
        cal.type_ii()
    ))
}

fn criterion_8() -> Outcome {
    let mut checked = 0;
    for cfg in ScenarioConfig::all_ideal() {
        let inst = build_instance(cfg.clone()).unwrap();
        let verdict = enumerate_consistent(&inst);
        let Some(unique) = verdict.unique() else { continue };
        for row in run_all_variants(&inst).map_err(|e| e.to_string())? {
            ensure!(&row.final_assignment == unique, "{cfg:?} from {}: {}", row.assumption, row.final_assignment);
        }
        checked += 1;
    }
    Ok(format!("{checked} configurations with a unique history, all 8 assumptions agree"))
}

fn read_dir(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn criterion_9() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_looplab");
    let commands: [&[&str]; 4] = [
        &["scenario", "--rules", "same,opposite", "--first", "yes,yes"],
        &["scenario", "--rules", "same,same", "--p", "0.1", "--n-trials", "200"],
        &["mc", "--p", "0,0.1,0.5", "--n-trials", "2000"],
        &["optics", "--n-trials", "50", "--n-photons", "2000", "--emit-trace"],
    ];
    let mut files = 0;
    for args in commands {
        let runs: Vec<_> = (0..2)
            .map(|_| {
                let dir = tempfile::tempdir().unwrap();
                let status = Command::new(bin)
                    .args(args)
                    .args(["--seed", "11", "--out"])
                    .arg(dir.path())
                    .output()
                    .unwrap()
                    .status;
                (dir, status)
            })
            .collect();
        for (_, status) in &runs {
            ensure!(status.success(), "{args:?} exited with {status}");
        }
        let (a, b) = (read_dir(runs[0].0.path()), read_dir(runs[1].0.path()));
        ensure!(a == b, "{args:?} artifacts differ");
        let replay = Command::new(bin).arg("replay").arg(runs[0].0.path()).output().unwrap();
        ensure!(replay.status.success(), "{args:?} replay failed");
        files += a.len();
    }
    Ok(format!("4 commands rerun byte-identical ({files} files), replay confirms"))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("value chains and third-case loop", criterion_1),
        ("third-case variants converge to all-NO", criterion_2),
        ("decoherence creates the scenario one loop", criterion_3),
        ("asymptotic certainty of decoherence", criterion_4),
        ("state algebra", criterion_5),
        ("interference geometry", criterion_6),
        ("entanglement discrimination", criterion_7),
        ("cross-engine agreement", criterion_8),
        ("determinism", criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.into_iter().enumerate() {
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name} ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {}: {name} ({detail})", i + 1);
            }
        }
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
