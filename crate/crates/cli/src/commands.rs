//! The three experiment commands. Each returns a complete in-memory bundle.

use std::fmt::Write as _;

use looplab::decoherence::{
    exact_loop_probability, loop_probability, repeated_cycle_survival, StochasticRun, DEFAULT_Z,
    RNG_ALGORITHM, SLOTS_PER_CYCLE,
};
use looplab::ephemeral::{enumerate_consistent, scenario_table};
use looplab::episodic::{predict, EpisodicEngine, EpisodicError, TestAssumption, VariantRow};
use looplab::optics::{
    aperture_stability, calibrate, decide_entanglement, detection_probability, fringe_visibility,
    golden_section_max, intensity_profile, path_difference_residual, photon_trace, profile,
    sample_counts, Hypotheses, OpticalState, StateKind,
};
use looplab::protocol::{build_instance, EventId, Mode, ScenarioConfig};
use serde_json::json;

use crate::config::{ModeName, RunConfig};
use crate::{Bundle, CliError, CommandName};

fn usage<E: std::fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

pub fn run(name: CommandName, config: &RunConfig) -> Result<Bundle, CliError> {
    match name {
        CommandName::Scenario => scenario(config),
        CommandName::Mc => mc(config),
        CommandName::Optics => optics(config),
    }
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for row in rows {
        w.write_record(row).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

fn describe(sc: &ScenarioConfig) -> String {
    let mode = match &sc.mode {
        Mode::Ideal => "ideal".to_string(),
        Mode::Scheduled { schedule } => format!("scheduled [{schedule}]"),
        Mode::Stochastic { p } => format!("stochastic p={p}"),
    };
    format!(
        "rules={},{} first={},{} mode={mode}",
        sc.rule_a, sc.rule_b, sc.first_action_a, sc.first_action_b
    )
}

pub fn scenario(config: &RunConfig) -> Result<Bundle, CliError> {
    let s = &config.scenario;
    let sc = s.scenario_config()?;
    let instance = build_instance(sc.clone()).map_err(usage)?;
    let engine = EpisodicEngine::new(s.cycle_limit, s.entry_event()?).map_err(usage)?;
    let mut bundle = Bundle::new(CommandName::Scenario, config);
    let mut report = String::new();
    writeln!(report, "scenario {} seed={}", describe(&sc), config.seed).unwrap();

    let table = scenario_table();
    let rows = table
        .iter()
        .map(|r| {
            let v = &r.verdict;
            vec![
                r.config.rule_a.to_string(),
                r.config.rule_b.to_string(),
                r.config.first_action_a.to_string(),
                r.config.first_action_b.to_string(),
                v.consistent_assignments.len().to_string(),
                v.causal_loop.to_string(),
                v.consistent_assignments.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(" | "),
                v.witness.as_ref().map(|w| w.render()).unwrap_or_default(),
            ]
        })
        .collect();
    bundle.add(
        "ephemeral_table.csv",
        csv_bytes(
            &["rule_a", "rule_b", "first_a", "first_b", "consistent", "causal_loop", "histories", "witness"],
            rows,
        ),
    );
    let looping = table.iter().filter(|r| r.verdict.causal_loop).count();

    let verdict = enumerate_consistent(&instance);
    if verdict.causal_loop {
        writeln!(report, "ephemeral: CAUSAL LOOP ({} consistent histories)", verdict.consistent_assignments.len()).unwrap();
    } else {
        writeln!(report, "ephemeral: no loop ({} consistent histories)", verdict.consistent_assignments.len()).unwrap();
    }
    for a in &verdict.consistent_assignments {
        writeln!(report, "  history: {a}").unwrap();
    }
    if let Some(w) = &verdict.witness {
        writeln!(report, "  witness: {}", w.render()).unwrap();
    }
    writeln!(report, "ephemeral table: {looping} of {} ideal configurations loop", table.len()).unwrap();

    let mut trace = serde_json::to_vec(&json!({
        "config": config.embedded(),
        "scenario": sc,
        "seed": config.seed,
    }))
    .expect("header serialises");
    trace.push(b'\n');
    let mut variants: Vec<VariantRow> = Vec::new();
    let mut failure = None;
    for assumption in TestAssumption::all() {
        match engine.evaluate(&instance, assumption) {
            Ok(t) => {
                t.write_jsonl(&mut trace)?;
                variants.push(VariantRow {
                    assumption,
                    class: assumption.variant_class(),
                    cycles: t.cycle_count(),
                    restarts: t.restarts.len(),
                    final_assignment: t.final_assignment,
                    trace: t,
                });
            }
            Err(EpisodicError::NonTermination { limit, trace: t }) => {
                t.write_jsonl(&mut trace)?;
                let msg = format!("assumption {assumption} has no fixed point within {limit} passes");
                writeln!(report, "episodic: NONTERMINATION: {msg}").unwrap();
                failure.get_or_insert(CliError::NonTermination(msg));
            }
            Err(e) => return Err(usage(e)),
        }
    }
    bundle.add("revision_trace.jsonl", trace);

    let mut header = vec!["assumption", "class", "cycles", "restarts"];
    let labels: Vec<&str> = EventId::ALL.iter().map(|e| e.label()).collect();
    header.extend(labels.iter().copied());
    let rows = variants
        .iter()
        .map(|r| {
            let mut row = vec![
                r.assumption.to_string(),
                format!("{:?}", r.class).to_lowercase(),
                r.cycles.to_string(),
                r.restarts.to_string(),
            ];
            row.extend(r.final_assignment.iter().map(|(_, v)| v.to_string()));
            row
        })
        .collect();
    bundle.add("episodic_variants.csv", csv_bytes(&header, rows));

    let mut fixed_points: Vec<_> = variants.iter().map(|r| r.final_assignment).collect();
    fixed_points.sort();
    fixed_points.dedup();
    for fp in &fixed_points {
        let all_no = fp.yes_measurements() == 0;
        writeln!(
            report,
            "episodic: fixed point {fp}{}",
            if all_no { " (all measurements NO)" } else { "" }
        )
        .unwrap();
    }
    for r in &variants {
        writeln!(report, "  {:<10} cycles={} restarts={}", r.assumption.to_string(), r.cycles, r.restarts).unwrap();
    }

    let prediction = predict(&sc).map_err(usage)?;
    let stochastic = match (&sc.mode, sc.both_first_yes()) {
        (Mode::Stochastic { p }, true) => {
            if s.n_trials == 0 {
                return Err(CliError::Usage("scenario.n_trials must be positive".into()));
            }
            let run = StochasticRun::execute(&sc, *p, s.n_trials, config.seed).map_err(usage)?;
            let (l, n) = (run.loop_estimate(), run.all_no_estimate());
            let exact = exact_loop_probability(&sc, *p).map_err(usage)?;
            writeln!(
                report,
                "stochastic: loop fraction {} [{}, {}] exact {exact}; all-NO fraction {}",
                l.fraction, l.ci_low, l.ci_high, n.fraction
            )
            .unwrap();
            json!({"loop": l, "all_no": n, "exact_loop_probability": exact, "rng": RNG_ALGORITHM})
        }
        _ => serde_json::Value::Null,
    };

    bundle.add_json(
        "verdict.json",
        &json!({
            "seed": config.seed,
            "config": config.embedded(),
            "scenario": sc,
            "ephemeral": {
                "causal_loop": verdict.causal_loop,
                "consistent_assignments": verdict.consistent_assignments,
                "witness": verdict.witness.as_ref().map(|w| w.render()),
                "broken_branches": verdict.broken_branches,
            },
            "episodic": {
                "variants": variants,
                "fixed_points": fixed_points,
                "all_no": !fixed_points.is_empty() && fixed_points.iter().all(|a| a.yes_measurements() == 0),
                "converged": failure.is_none(),
            },
            "prediction": prediction,
            "stochastic": stochastic,
        }),
    );

    if s.assert_no_loop && verdict.causal_loop && failure.is_none() {
        failure = Some(CliError::Assertion(format!("causal loop in {}", describe(&sc))));
    }
    bundle.add("report.txt", report.clone().into_bytes());
    bundle.report = report;
    bundle.failure = failure;
    Ok(bundle)
}

pub fn mc(config: &RunConfig) -> Result<Bundle, CliError> {
    let m = &config.mc;
    if m.p_grid.is_empty() {
        return Err(CliError::Usage("mc needs decoherence rates: set mc.p_grid or pass --p".into()));
    }
    if m.n_trials == 0 {
        return Err(CliError::Usage("mc: n_trials must be positive".into()));
    }
    let mut section = config.scenario.clone();
    section.mode = ModeName::Ideal;
    let sc = section.scenario_config()?;
    let mut bundle = Bundle::new(CommandName::Mc, config);
    let mut report = String::new();
    writeln!(report, "mc {} n_trials={} seed={}", describe(&sc), m.n_trials, config.seed).unwrap();
    let mut rows = Vec::new();
    let mut summary = Vec::new();
    for &p in &m.p_grid {
        let e = loop_probability(&sc, p, m.n_trials, config.seed).map_err(usage)?;
        let exact = exact_loop_probability(&sc, p).map_err(usage)?;
        let survival = repeated_cycle_survival(p, 1, SLOTS_PER_CYCLE as u64).map_err(usage)?;
        writeln!(report, "  p={p:<8} loop={:<10} ci=[{}, {}] exact={exact}", e.fraction, e.ci_low, e.ci_high).unwrap();
        rows.push(vec![
            p.to_string(),
            e.n_trials.to_string(),
            e.hits.to_string(),
            e.fraction.to_string(),
            e.ci_low.to_string(),
            e.ci_high.to_string(),
            exact.to_string(),
            e.seed.to_string(),
        ]);
        summary.push(json!({"estimate": e, "exact": exact, "one_cycle_decoherence": survival}));
    }
    bundle.add(
        "mc.csv",
        csv_bytes(&["p", "n_trials", "hits", "loop_fraction", "ci_low", "ci_high", "exact", "seed"], rows),
    );
    bundle.add_json(
        "mc_summary.json",
        &json!({
            "seed": config.seed,
            "config": config.embedded(),
            "scenario": sc,
            "rng": RNG_ALGORITHM,
            "z": DEFAULT_Z,
            "rows": summary,
        }),
    );
    bundle.add("report.txt", report.clone().into_bytes());
    bundle.report = report;
    Ok(bundle)
}

pub fn optics(config: &RunConfig) -> Result<Bundle, CliError> {
    let o = &config.optics;
    let g0 = o.geometry()?;
    let (scan, fine, stable) = aperture_stability(&g0, o.n_photons, o.grid).map_err(usage)?;
    let g = g0.with_d(o.d.unwrap_or(scan.d_star));
    g.validate().map_err(usage)?;
    let mut bundle = Bundle::new(CommandName::Optics, config);
    let mut report = String::new();
    writeln!(
        report,
        "optics lambda={} a={} l={} d={} w0={} seed={}",
        g.lambda, g.a, g.l, g.d, g.w0, config.seed
    )
    .unwrap();
    for w in g.warnings() {
        writeln!(report, "warning: {w}").unwrap();
    }

    let n = o.samples.max(2);
    let xs: Vec<f64> = (0..n).map(|i| -2.0 * g.a + 4.0 * g.a * i as f64 / (n - 1) as f64).collect();
    let columns: Vec<Vec<f64>> = StateKind::ALL.iter().map(|k| profile(&k.state(), &g, &xs)).collect();
    let mut header = vec!["x"];
    header.extend(StateKind::ALL.iter().map(|k| k.label()));
    let rows = xs
        .iter()
        .enumerate()
        .map(|(i, x)| {
            std::iter::once(x.to_string())
                .chain(columns.iter().map(|c| c[i].to_string()))
                .collect()
        })
        .collect();
    bundle.add("optics_profile.csv", csv_bytes(&header, rows));

    let ent = OpticalState::entangled();
    let half = g.fringe_period() / 2.0;
    let x_peak = golden_section_max(|x| intensity_profile(&ent, &g, x), -half, half, 1e-12 * g.a);
    let peak = columns[0].iter().copied().fold(intensity_profile(&ent, &g, x_peak), f64::max);
    let nulls: Vec<f64> = g.positions().iter().map(|&x| intensity_profile(&ent, &g, x) / peak).collect();
    writeln!(report, "entangled null depth at detector positions: {:e}, {:e}", nulls[0], nulls[1]).unwrap();

    let mut states = serde_json::Map::new();
    for k in StateKind::ALL {
        let det = detection_probability(&k.state(), &g).map_err(usage)?;
        let vis = fringe_visibility(&k.state(), &g);
        writeln!(
            report,
            "{:<20} visibility={:e} capture p1={:e} p2={:e}",
            k.label(),
            vis.normalized,
            det.p1,
            det.p2
        )
        .unwrap();
        states.insert(k.label().into(), json!({"visibility": vis, "detection": det}));
    }
    let hyp = Hypotheses::for_geometry(&g).map_err(usage)?;
    let degenerate = detection_probability(&ent, &g).map_err(usage)?.degenerate;
    if degenerate {
        writeln!(report, "DEGENERATE: aperture d = 0 captures nothing").unwrap();
    }
    writeln!(report, "aperture scan: d*={} statistic={:e} stable={stable}", scan.d_star, scan.statistic).unwrap();

    let mut records = serde_json::Map::new();
    let mut photons = Vec::new();
    for (kind, stream) in [(StateKind::UnentangledUnknown, 0), (StateKind::Entangled, 1)] {
        let det = detection_probability(&kind.state(), &g).map_err(usage)?;
        let rec = sample_counts(&det, o.n_photons, config.seed, stream);
        let decision = decide_entanglement(&rec, &g, o.alpha).map_err(usage)?;
        writeln!(report, "sample {:<20} counts={} verdict={:?}", kind.label(), rec.combined(), decision.verdict).unwrap();
        records.insert(kind.label().into(), json!({"record": rec, "decision": decision}));
        if o.emit_trace {
            for r in photon_trace(&det, o.n_photons, config.seed, stream) {
                serde_json::to_writer(&mut photons, &json!({"state": kind.label(), "stream": stream, "photon": r.photon, "u": r.u, "detector": r.detector}))
                    .expect("record serialises");
                photons.push(b'\n');
            }
        }
    }
    if o.emit_trace {
        bundle.add("photons.jsonl", photons);
    }

    let calibration = if o.n_trials > 0 {
        let c = calibrate(&g, o.n_photons, o.n_trials, o.alpha, config.seed).map_err(usage)?;
        writeln!(
            report,
            "calibration: {} trials type-I={} type-II={} combined={}",
            c.n_trials,
            c.type_i(),
            c.type_ii(),
            c.combined_error()
        )
        .unwrap();
        json!({"result": c, "type_i": c.type_i(), "type_ii": c.type_ii(), "combined_error": c.combined_error()})
    } else {
        serde_json::Value::Null
    };

    bundle.add_json(
        "optics_summary.json",
        &json!({
            "seed": config.seed,
            "config": config.embedded(),
            "geometry": g,
            "warnings": g.warnings(),
            "positions": g.positions(),
            "path_difference_residual": path_difference_residual(g.lambda, g.a, g.l),
            "beam_width": g.beam_width(),
            "fringe_period": g.fringe_period(),
            "entangled_peak": {"x": x_peak, "relative_intensity": peak},
            "null_depth": nulls,
            "states": states,
            "degenerate": degenerate,
            "hypotheses": hyp,
            "aperture": {"d_star": scan.d_star, "statistic": scan.statistic, "expected_llr": scan.expected_llr,
                         "d_star_refined": fine.d_star, "stable": stable, "curve": scan.curve},
            "samples": records,
            "calibration": calibration,
        }),
    );
    bundle.add("report.txt", report.clone().into_bytes());
    bundle.report = report;
    Ok(bundle)
}
