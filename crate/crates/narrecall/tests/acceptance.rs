//! Acceptance gate. Each criterion prints one PASS/FAIL line; the process
//! exits non-zero if any criterion fails. Everything runs offline against
//! the mock and replay providers.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use narrecall::clock::SteppingClock;
use narrecall::gateway::read_audit;
use narrecall::io::{self, Corpus};
use narrecall::service::{read_event_log, ExperimentService, ExportFilter, EVENT_LOG};
use narrecall_core::corpus::{stimulus_stats, LurePool, Narrative};
use narrecall_core::mock::MockEmbedder;
use narrecall_core::parse::{
    parse_lures, parse_numbered_clauses, parse_ordered_sequence, parse_scored_set,
};
use narrecall_core::recognition::{
    dprime, dprime_by_position, forward_rates, retained_estimate, retained_with_bootstrap, Counts,
};
use narrecall_core::session::{replay, NextProbe, Task};
use narrecall_core::similarity::{cosine, recall_similarity_correlation, similarity_scores};
use narrecall_core::stats::{bootstrap_ci, chi_square_sf, mean, normal_cdf, probit};
use narrecall_core::synth;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Criterion = (&'static str, fn() -> Verdict);

/// Outcome of one criterion.
struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn fixture(rel: &str) -> String {
    common::read(&common::fixtures().join(rel))
}

fn narrative(id: &str) -> Narrative {
    io::read_json(&common::fixtures().join(format!("narratives/{id}.json"))).unwrap()
}

fn parser_fidelity() -> Verdict {
    let t = Instant::now();
    let mut bad = Vec::new();
    let scored = parse_scored_set(&fixture("completions/boyscout_scoring.txt"), 19);
    if scored
        .as_ref()
        .map(|s| s.iter().copied().collect::<Vec<_>>())
        != Ok(vec![7, 8, 9, 14, 15, 16, 17, 19])
    {
        bad.push(format!("scored set {scored:?}"));
    }
    let ordered = parse_ordered_sequence(&fixture("completions/boyscout_ordered.txt"), 19);
    if ordered != Ok(vec![14, 7, 8, 9, 15, 16, 17, 19]) {
        bad.push(format!("ordered {ordered:?}"));
    }
    match parse_lures(&fixture("completions/schissel_lures.txt"), 18) {
        Ok(l) => {
            let shipped: LurePool = serde_json::from_str(&fixture("lures/schissel.json")).unwrap();
            if l.len() != 18 || shipped.lures != l {
                bad.push(format!("{} lures", l.len()));
            }
        }
        Err(e) => bad.push(format!("lures: {e}")),
    }
    let story =
        parse_numbered_clauses(&fixture("completions/pool_story_generation.txt")).map(|c| c.len());
    if story != Ok(18) {
        bad.push(format!("pool story {story:?}"));
    }
    let seg = parse_numbered_clauses(&fixture("completions/boyscout_recall_segmentation.txt"))
        .map(|c| c.len());
    if seg != Ok(10) {
        bad.push(format!("segmentation {seg:?}"));
    }
    let el = t.elapsed();
    if el >= Duration::from_secs(1) {
        bad.push(format!("took {el:?}"));
    }
    verdict(
        bad.is_empty(),
        if bad.is_empty() {
            format!("5/5 completions exact in {el:.2?}")
        } else {
            bad.join("; ")
        },
    )
}

fn stimulus_table() -> Verdict {
    let t = Instant::now();
    // (fixture id, L, T seconds) from the printed stimulus tables.
    let table: [(&str, usize, f64); 10] = [
        ("schissel-v1", 18, 67.0),
        ("schissel-v2", 18, 65.0),
        ("boyscout", 19, 59.0),
        ("triplett-v1", 32, 111.0),
        ("triplett-v2", 32, 108.0),
        ("hester-v1", 54, 201.0),
        ("hester-v2", 54, 269.0),
        ("boyscout-scrambled", 19, 60.0),
        ("triplett-v1-scrambled", 32, 111.0),
        ("hester-v2-scrambled", 54, 269.0),
    ];
    let corpus = Corpus::load(&[&common::fixtures()]).unwrap();
    let mut bad = Vec::new();
    for (id, l, secs) in table {
        let Some(n) = corpus.narratives.get(id) else {
            bad.push(format!("{id} missing"));
            continue;
        };
        let s = stimulus_stats(n);
        if s.clauses != l || (s.duration_s - secs).abs() > 1.0 {
            bad.push(format!(
                "{id}: L={} T={:.2} (want {l}, {secs})",
                s.clauses, s.duration_s
            ));
        }
    }
    if corpus.narratives.len() != table.len() {
        bad.push(format!(
            "{} fixtures, {} in table",
            corpus.narratives.len(),
            table.len()
        ));
    }
    let el = t.elapsed();
    if el >= Duration::from_secs(1) {
        bad.push(format!("took {el:?}"));
    }
    verdict(
        bad.is_empty(),
        if bad.is_empty() {
            format!("{} fixtures match in {el:.2?}", table.len())
        } else {
            bad.join("; ")
        },
    )
}

fn retained_identity() -> Verdict {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for l in [18usize, 32, 54, 130] {
        for m in 0..=l {
            for gi in 0..10 {
                let g = gi as f64 / 10.0;
                let (ph, pf) = forward_rates(m as f64, l, g);
                let est = retained_estimate(ph, pf, l).unwrap();
                worst = worst.max((est.m - m as f64).abs());
                cases += 1;
            }
        }
    }
    let ls = [18usize, 32, 54, 130];
    let runs = 100;
    let mut covered = 0;
    for run in 0..runs {
        let l = ls[run % 4];
        let m_star = (0.45 * l as f64).round() as usize;
        let trials = synth::recognition_sessions("planted", l, m_star, 0.2, 100, 1000 + run as u64);
        if let Ok(s) = retained_with_bootstrap(&trials, l, 1000, 5000 + run as u64) {
            if (s.m - m_star as f64).abs() <= 2.0 * s.m_stderr {
                covered += 1;
            }
        }
    }
    let el = t.elapsed();
    let pass = worst <= 1e-12 && covered * 10 >= runs * 9 && el < Duration::from_secs(30);
    verdict(
        pass,
        format!("grid {cases} cases, max |dM| = {worst:.1e}; planted M within 2 SE in {covered}/{runs} runs; {el:.1?}"),
    )
}

fn probit_dprime() -> Verdict {
    let mut worst: f64 = 0.0;
    for i in 0..=10_000 {
        let x = -5.0 + i as f64 * 1e-3;
        worst = worst.max((probit(normal_cdf(x)).unwrap() - x).abs());
    }
    let half = Counts {
        hits: 50,
        misses: 50,
        false_alarms: 50,
        correct_rejections: 50,
    };
    let d0 = dprime(&half).unwrap();
    let runs = 100;
    let mut flat = 0;
    for run in 0..runs {
        let trials = synth::recognition_sessions("flat", 30, 12, 0.3, 500, 7000 + run);
        let c = dprime_by_position(&trials).unwrap();
        if let Some(f) = c.fit {
            if f.slope.abs() <= 3.0 * f.slope_stderr {
                flat += 1;
            }
        }
    }
    let pass = worst < 1e-6 && d0 == 0.0 && flat * 100 >= 95 * runs;
    verdict(
        pass,
        format!("max |probit(Phi(x)) - x| = {worst:.1e}; d'(0.5, 0.5) = {d0}; flat slope in {flat}/{runs} runs"),
    )
}

fn bootstrap_coverage() -> Verdict {
    let t = Instant::now();
    let reps = 500u64;
    let mut covered = 0;
    for r in 0..reps {
        let x = synth::normal_sample(50, 20_000 + r);
        let ci = bootstrap_ci(&x, mean, 1000, 0.05, 30_000 + r).unwrap();
        if ci.low <= 0.0 && 0.0 <= ci.high {
            covered += 1;
        }
    }
    let frac = covered as f64 / reps as f64;
    let el = t.elapsed();
    let pass = (0.92..=0.98).contains(&frac) && el < Duration::from_secs(30);
    verdict(
        pass,
        format!("coverage {covered}/{reps} = {frac:.3}; {el:.1?}"),
    )
}

fn similarity_pipeline() -> Verdict {
    let rho = 0.9;
    let emb = MockEmbedder::new(0);
    let mut parts = Vec::new();
    let mut pass = true;
    for id in ["boyscout", "hester-v2"] {
        let n = narrative(id);
        let s = similarity_scores(&n, &emb).unwrap().scores;
        let m = mean(&s);
        let var = s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / s.len() as f64;
        // uniform noise on [-h, h] has variance h^2 / 3
        let h = (3.0 * var * (1.0 / (rho * rho) - 1.0)).sqrt();
        let runs = 100;
        let mut hit = 0;
        for run in 0..runs {
            let p = synth::planted_linear(&s, 1.0, 0.0, h, 40_000 + run);
            let c = recall_similarity_correlation(&s, &p, 5, 1000, 50_000 + run).unwrap();
            if c.result.ci_low <= rho && rho <= c.result.ci_high {
                hit += 1;
            }
        }
        pass &= hit * 100 >= 95 * runs;
        parts.push(format!("L={} rho in CI {hit}/{runs}", n.len()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(60_000);
    let mut violations = 0;
    for _ in 0..1000 {
        let d = rng.random_range(1..=64);
        let a: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let k: f64 = rng.random_range(0.01..100.0);
        let ka: Vec<f64> = a.iter().map(|v| v * k).collect();
        let (Some(ab), Some(ba), Some(kab), Some(aa)) = (
            cosine(&a, &b),
            cosine(&b, &a),
            cosine(&ka, &b),
            cosine(&a, &a),
        ) else {
            violations += 1;
            continue;
        };
        if ab.abs() > 1.0 + 1e-12
            || (ab - ba).abs() > 1e-12
            || (kab - ab).abs() > 1e-12
            || (aa - 1.0).abs() > 1e-12
        {
            violations += 1;
        }
    }
    pass &= violations == 0;
    parts.push(format!(
        "cosine invariants violated in {violations}/1000 cases"
    ));
    verdict(pass, parts.join("; "))
}

/// Runs the whole mock pipeline under `root` and returns the service
/// snapshot taken after the simulated sessions.
fn pipeline(root: &Path) -> Result<BTreeMap<String, narrecall_core::session::Session>, String> {
    let cfg = common::write_config(root);
    let data = root.join("data");
    let cli = |args: &[&str]| {
        let mut full = vec!["--seed", "11", "--clock-start", "2024-03-01T09:00:00Z"];
        full.extend_from_slice(args);
        match common::cli(&cfg, &data, &full) {
            0 => Ok(()),
            c => Err(format!("{args:?} exited {c}")),
        }
    };
    cli(&["generate", "schissel-v1", "--variants", "1"])?;
    let id = "schissel-v1-gen01";
    // Promote the candidate into the corpus, as a person would after review.
    let candidate = data.join("generated").join(format!("{id}.json"));
    std::fs::create_dir_all(data.join("narratives")).unwrap();
    std::fs::copy(
        &candidate,
        data.join("narratives").join(format!("{id}.json")),
    )
    .unwrap();
    cli(&["lures", id])?;
    cli(&["scramble", id])?;

    let corpus = Corpus::load(&[&common::fixtures(), &data]).map_err(|e| e.to_string())?;
    let svc = ExperimentService::open(corpus.clone(), &data, Arc::new(SteppingClock::fixed()), 11)
        .map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let scrambled = format!("{id}-scrambled");
    for nid in [id, scrambled.as_str()] {
        let n = &corpus.narratives[nid];
        let texts = synth::recall_population(n, 0.85, 0.35, 12, rng.random());
        for (i, text) in texts.iter().enumerate() {
            let s = svc
                .create_session(&format!("r{i:02}"), nid, Task::Recall)
                .map_err(|e| e.to_string())?;
            svc.consent(&s.session_id).map_err(|e| e.to_string())?;
            let stim = svc.stimulus(&s.session_id).map_err(|e| e.to_string())?;
            svc.presentation_finished(&s.session_id, stim.char_count as f64 / 12.0)
                .map_err(|e| e.to_string())?;
            svc.submit_recall(&s.session_id, text)
                .map_err(|e| e.to_string())?;
        }
        for i in 0..12 {
            let s = svc
                .create_session(&format!("m{i:02}"), nid, Task::Recognition)
                .map_err(|e| e.to_string())?;
            svc.consent(&s.session_id).map_err(|e| e.to_string())?;
            let stim = svc.stimulus(&s.session_id).map_err(|e| e.to_string())?;
            svc.presentation_finished(&s.session_id, stim.char_count as f64 / 12.0)
                .map_err(|e| e.to_string())?;
            let session = svc.session(&s.session_id).map_err(|e| e.to_string())?;
            let set = session.probe_set.ok_or("no probe set")?;
            while let NextProbe::Probe { position, .. } =
                svc.next_probe(&s.session_id).map_err(|e| e.to_string())?
            {
                let old = set.probes[position as usize - 1].is_old();
                let yes = rng.random_bool(if old { 0.75 } else { 0.2 });
                svc.answer_probe(&s.session_id, position, yes)
                    .map_err(|e| e.to_string())?;
            }
        }
    }
    let snapshot = svc.snapshot();
    drop(svc);

    cli(&["export"])?;
    let exported = data.join("recall_texts.jsonl");
    let exported = exported.to_str().unwrap();
    cli(&["score", id, "--recalls", exported])?;
    cli(&["score", &scrambled, "--recalls", exported])?;
    cli(&["analyze"])?;
    Ok(snapshot)
}

fn end_to_end() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let t = Instant::now();
    let first = match pipeline(dir.path()) {
        Ok(s) => s,
        Err(e) => return verdict(false, format!("pipeline failed: {e}")),
    };
    let el = t.elapsed();
    let data = dir.path().join("data");
    let mut bad = Vec::new();
    for f in [
        "fig2a_m_vs_l.csv",
        "fig2b_r_vs_l.csv",
        "fig2c_r_vs_m.csv",
        "fig4_hit_rate_bins.csv",
        "figB5_descrambling.csv",
        "summary.json",
    ] {
        if !data.join("analysis").join(f).exists() {
            bad.push(format!("missing analysis/{f}"));
        }
    }
    let records = read_event_log(&data.join(EVENT_LOG)).unwrap();
    if replay(&records).ok().as_ref() != Some(&first) {
        bad.push("event-log replay differs from live state".into());
    }
    let corpus = Corpus::load(&[&common::fixtures(), &data]).unwrap();
    let reopened =
        ExperimentService::open(corpus, &data, Arc::new(SteppingClock::fixed()), 11).unwrap();
    if reopened.snapshot() != first {
        bad.push("restarted service state differs".into());
    }
    drop(reopened);

    // Concurrent scoring appends audit lines in completion order, so the
    // audit log is compared as a multiset of calls; every other file must
    // match byte for byte.
    let audit_calls = |p: &Path| {
        let mut v: Vec<_> = read_audit(p)
            .unwrap()
            .into_iter()
            .map(|r| (r.kind, r.prompt, r.completion))
            .collect();
        v.sort();
        v
    };
    let mut snap1 = common::snapshot(&data);
    let calls1 = audit_calls(&data.join("audit.jsonl"));
    snap1.remove("audit.jsonl");
    std::fs::remove_dir_all(&data).unwrap();
    match pipeline(dir.path()) {
        Ok(second) if second == first => {}
        Ok(_) => bad.push("second run produced different sessions".into()),
        Err(e) => bad.push(format!("second run failed: {e}")),
    }
    let mut snap2 = common::snapshot(&data);
    let calls2 = audit_calls(&data.join("audit.jsonl"));
    snap2.remove("audit.jsonl");
    let differing: Vec<&String> = snap1
        .keys()
        .filter(|k| snap2.get(*k) != snap1.get(*k))
        .collect();
    if !differing.is_empty() || snap1.len() != snap2.len() {
        bad.push(format!("rerun differs in {differing:?}"));
    }
    if calls1 != calls2 {
        bad.push("audit calls differ".into());
    }
    if el >= Duration::from_secs(120) {
        bad.push(format!("took {el:?}"));
    }
    verdict(
        bad.is_empty(),
        if bad.is_empty() {
            format!(
                "{} sessions, {} files identical on rerun, replay matches; {el:.1?}",
                first.len(),
                snap1.len()
            )
        } else {
            bad.join("; ")
        },
    )
}

fn recognition_protocol() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let cfg = common::write_config(dir.path());
    let data = dir.path().join("data");
    if common::cli(&cfg, &data, &["lures", "boyscout"]) != 0 {
        return verdict(false, "could not build the lure pool");
    }
    let corpus = Corpus::load(&[&common::fixtures(), &data]).unwrap();
    let svc = ExperimentService::open(corpus, &data, Arc::new(SteppingClock::fixed()), 0).unwrap();
    let sessions = 1000;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for i in 0..sessions {
        let s = svc
            .create_session(&format!("p{i:04}"), "boyscout", Task::Recognition)
            .unwrap();
        svc.consent(&s.session_id).unwrap();
        svc.stimulus(&s.session_id).unwrap();
        svc.presentation_finished(&s.session_id, 60.0).unwrap();
        while let NextProbe::Probe { position, .. } = svc.next_probe(&s.session_id).unwrap() {
            svc.answer_probe(&s.session_id, position, rng.random_bool(0.5))
                .unwrap();
        }
    }
    let export = svc.export(&ExportFilter::default());
    let mut per_participant: BTreeMap<&str, usize> = BTreeMap::new();
    let mut per_item = BTreeMap::new();
    for t in &export.recognition {
        *per_participant
            .entry(t.participant_id.as_str())
            .or_default() += 1;
        *per_item.entry(t.item.clone()).or_insert(0u64) += 1;
    }
    let all_ten = per_participant.len() == sessions && per_participant.values().all(|&c| c == 10);
    // Inclusion counts under sampling without replacement: each has variance
    // n q (1 - q) N / (N - 1), and the scaled sum is chi-square with N - 1
    // degrees of freedom.
    let big_n = 38.0;
    let q = 10.0 / big_n;
    let expected = q * sessions as f64;
    let var = sessions as f64 * q * (1.0 - q) * big_n / (big_n - 1.0);
    let stat: f64 = per_item
        .values()
        .map(|&c| (c as f64 - expected).powi(2) / var)
        .sum();
    let p = chi_square_sf(stat, big_n - 1.0);
    let pass = all_ten && per_item.len() == 38 && p > 0.01;
    verdict(
        pass,
        format!(
            "{} sessions with 10 trials each: {all_ten}; {} pool items seen; chi2 = {stat:.2} (37 dof), p = {p:.3}",
            per_participant.len(),
            per_item.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("parser fidelity", parser_fidelity),
        ("stimulus statistics", stimulus_table),
        ("retained-clause inverse model", retained_identity),
        ("probit and d' numerics", probit_dprime),
        ("bootstrap coverage", bootstrap_coverage),
        ("similarity pipeline", similarity_pipeline),
        ("end-to-end mock pipeline", end_to_end),
        ("recognition protocol", recognition_protocol),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let v = f();
        if !v.pass {
            failed += 1;
        }
        println!(
            "{} {}. {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            i + 1,
            v.detail
        );
    }
    println!(
        "acceptance: {}/{} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
