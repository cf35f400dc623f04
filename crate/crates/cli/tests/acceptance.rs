//! Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//! Every command also runs a second time with `--threads 1` for the determinism criterion.

use std::time::Instant;

use causal_hjb_cli::{comparable, run};
use serde_json::Value;

const FRONTRUNNER_GOLDEN: f64 = -0.957_635_720_999_701_5;

struct Run {
    cmd: String,
    code: i32,
    report: Value,
    secs: f64,
}

struct Suite {
    threads: usize,
    runs: Vec<Run>,
    results: Vec<(u32, bool, String)>,
}

fn argv(cmd: &str, threads: usize) -> Vec<String> {
    let mut v: Vec<String> = std::iter::once("causal-hjb".to_string()).chain(cmd.split_whitespace().map(String::from)).collect();
    v.push("--threads".into());
    v.push(threads.to_string());
    v
}

impl Suite {
    fn run(&mut self, cmd: &str) -> usize {
        let start = Instant::now();
        let out = run(argv(cmd, self.threads));
        let secs = start.elapsed().as_secs_f64();
        let report = out.report.unwrap_or_else(|| {
            eprintln!("{cmd}: {}", out.error.unwrap_or_default());
            Value::Null
        });
        self.runs.push(Run { cmd: cmd.to_string(), code: out.code, report, secs });
        self.runs.len() - 1
    }

    fn record(&mut self, id: u32, pass: bool, detail: String) {
        println!("{} {id:>2}  {detail}", if pass { "PASS" } else { "FAIL" });
        self.results.push((id, pass, detail));
    }
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

fn gate(r: &Value, name: &str) -> f64 {
    r["gates"].as_array().and_then(|gs| gs.iter().find(|g| g["name"] == name)).map(|g| num(&g["value"])).unwrap_or(f64::NAN)
}

fn level<'a>(r: &'a Value, key: &str, want: u64) -> &'a Value {
    r["body"]["levels"].as_array().and_then(|ls| ls.iter().find(|l| l[key] == want)).unwrap_or(&Value::Null)
}

fn strictly_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] < w[0])
}

fn chen(s: &mut Suite) {
    let a = s.run("lift --brownian 1,2,3 --samples 100 --n 1024 --triples 10000");
    let b = s.run("lift --brownian 1,2,3 --samples 100 --n 64");
    let worst = [a, b].iter().map(|&i| num(&s.runs[i].report["body"]["max_normalized_defect"])).fold(0.0, f64::max);
    let exhaustive = s.runs[b].report["body"]["lifts"].as_array().is_some_and(|l| l.len() == 100 && l.iter().all(|x| x["exhaustive"] == true));
    let secs = s.runs[a].secs + s.runs[b].secs;
    let pass = worst <= 1e-12 && exhaustive && secs < 10.0;
    s.record(1, pass, format!("Chen defect / (1+|X|²) = {worst:.2e} ≤ 1e-12, exhaustive at N=64: {exhaustive}, {secs:.1}s < 10s"));
}

fn convergence(s: &mut Suite, id: u32, cmd: &str, what: &str) {
    let i = s.run(cmd);
    let r = &s.runs[i].report;
    let rms: Vec<f64> = [1024, 4096, 16384].iter().map(|&n| num(&level(r, "n", n)["rms"])).collect();
    let secs = s.runs[i].secs;
    let pass = rms[2] < 1e-2 && strictly_decreasing(&rms) && secs < 60.0;
    s.record(id, pass, format!("{what}: RMS {:.2e} → {:.2e} → {:.2e}, finest < 1e-2, {secs:.1}s < 60s", rms[0], rms[1], rms[2]));
}

fn quadratic_variation(s: &mut Suite) {
    let i = s.run("qv --tau lookahead:0.1 --levels 14 --seeds 200");
    let r = &s.runs[i].report;
    let l14 = level(r, "level", 14);
    let l10 = level(r, "level", 10);
    let q95 = num(&l14["diag_w_abs_q95"]);
    let (mean, se) = (num(&l14["cross_mean"]), num(&l14["cross_stderr"]));
    let (rms14, rms10) = (num(&l14["cross_rms"]), num(&l10["cross_rms"]));
    let dz = num(&l14["diag_z_mean_dev"]).abs();
    let secs = s.runs[i].secs;
    let pass = q95 < 0.03 && mean.abs() < 3.0 * se && rms14 < rms10 && dz < 0.03 && secs < 120.0;
    s.record(
        4,
        pass,
        format!("QV: q95|[W]-1| {q95:.4} < 0.03, |cross| {:.1e} < 3se {:.1e}, RMS14 {rms14:.4} < RMS10 {rms10:.4}, |[Z]-Δτ| {dz:.1e} < 0.03, {secs:.1}s", mean.abs(), 3.0 * se),
    );
}

fn derivatives(s: &mut Suite) {
    let i = s.run("derivatives --probes 100");
    let r = &s.runs[i].report;
    let mut worst: f64 = 0.0;
    let mut all_probed = true;
    for b in r["body"]["builtins"].as_array().cloned().unwrap_or_default() {
        all_probed &= b["probes"] == 100;
        for k in ["max_rel_dt", "max_rel_grad", "max_rel_hess"] {
            worst = worst.max(num(&b[k]));
        }
    }
    let flagged = num(&r["body"]["reconstruction"]["flagged"]);
    let secs = s.runs[i].secs;
    let pass = all_probed && worst < 1e-5 && flagged >= 95.0 && secs < 30.0;
    s.record(6, pass, format!("Dupire derivatives: worst rel error {worst:.2e} < 1e-5 over 100 probes each, instability flagged {flagged}/100 ≥ 95, {secs:.1}s"));
}

fn functional_ito(s: &mut Suite) {
    let a = s.run("ito-check --functional square --n 16384 --refinements 2 --seeds 100");
    let b = s.run("ito-check --functional square --n 16384 --refinements 2 --seeds 100 --tau full");
    let r = &s.runs[a].report;
    let med: Vec<f64> = [4096, 8192, 16384].iter().map(|&n| num(&level(r, "n", n)["median_abs_residual"])).collect();
    let ito = s.runs[b].report["body"]["levels"].as_array().map(|ls| ls.iter().map(|l| num(&l["max_abs_ito_term"])).fold(0.0, f64::max)).unwrap_or(f64::NAN);
    let secs = s.runs[a].secs + s.runs[b].secs;
    let pass = med[2] < 2e-2 && strictly_decreasing(&med) && ito == 0.0 && secs < 60.0;
    s.record(7, pass, format!("functional Itô: median {:.2e} → {:.2e} → {:.2e} < 2e-2, τ≡T ito_term {ito:e} == 0, {secs:.1}s", med[0], med[1], med[2]));
}

fn frontrunner(s: &mut Suite) {
    let i = s.run("verify --example frontrunner");
    let run = &s.runs[i];
    let b = &run.report["body"];
    let secs = run.secs;

    let qv = num(&b["solution_qv"]["max_relative_deviation"]);
    let pass5 = b["solution_qv"]["seeds"] == 50 && b["solution_qv"]["level"] == 14 && qv < 0.05 && secs < 60.0;
    let qv_line = format!("solution QV: max relative (1,1) deviation {qv:.4} < 5% over 50 seeds at level 14, {secs:.1}s (whole command) < 60s");

    let ident = num(&b["identities"]["upsilon"]).max(num(&b["identities"]["omega"]));
    let par = num(&b["residuals"]["max_parabolic"]);
    let tr = num(&b["residuals"]["max_transport"]);
    let term = num(&b["residuals"]["max_terminal"]);
    let probes = b["residuals"]["probes"].as_array().map_or(0, Vec::len);
    let closed = num(&b["value"]["closed_form"]);
    let (mean, se) = (num(&b["value"]["optimal"]["mean"]), num(&b["value"]["optimal"]["stderr"]));
    let samples = b["value"]["optimal"]["samples"].as_u64().unwrap_or(0);
    let tol = (3.0 * se).max(0.05 * closed.abs());
    let beats = b["value"]["comparisons"].as_array().is_some_and(|cs| cs.len() == 3 && cs.iter().all(|c| num(&c["advantage"]) > -3.0 * num(&c["stderr"])));
    let pass8 = ident < 1e-5
        && par < 1e-6
        && tr < 1e-6
        && term <= 1e-12
        && probes == 200
        && (closed - FRONTRUNNER_GOLDEN).abs() < 1e-12
        && samples == 10_000
        && (mean - closed).abs() <= tol
        && beats
        && secs < 300.0;

    let drift = |key: &str| -> Vec<f64> {
        b["drift"][key].as_array().map(|xs| xs.iter().map(|x| num(&x["mean"]) / num(&x["stderr"])).collect()).unwrap_or_default()
    };
    let opt = drift("optimal");
    let zero = drift("zero");
    let opt_worst = opt.iter().map(|z| z.abs()).fold(0.0, f64::max);
    let zero_worst = zero.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pass9 = !opt.is_empty() && !zero.is_empty() && opt_worst <= 3.0 && zero_worst <= 3.0 && secs < 300.0;

    s.record(5, pass5, qv_line);
    s.record(
        8,
        pass8,
        format!(
            "frontrunner: identities {ident:.1e}, parabolic {par:.1e}, transport {tr:.1e} < 1e-6 at {probes} probes, terminal {term:.1e}; MC {mean:.5} vs {closed:.5} (|diff| {:.1e} ≤ {tol:.1e}), beats constants: {beats}, {secs:.1}s",
            (mean - closed).abs()
        ),
    );
    s.record(9, pass9, format!("martingale optimality: max |drift|/se under φ* {opt_worst:.2} ≤ 3, max drift/se under φ≡0 {zero_worst:.2} ≤ 3"));
}

fn pathwise(s: &mut Suite) {
    let i = s.run("verify --example pathwise");
    let r = &s.runs[i].report;
    let reach = gate(r, "reachable_max_terminal_gap");
    let reached = gate(r, "reachable_paths_evaluated");
    let other = gate(r, "other_branch_max_value_gap");
    let other_n = gate(r, "other_branch_paths_evaluated");
    let cpar = gate(r, "counterexample_parabolic_residual");
    let sig = gate(r, "counterexample_value_mismatch_sigmas");
    let n = r["config"]["n"].as_u64().unwrap_or(4096);
    let secs = s.runs[i].secs;
    let pass = n == 4096 && reached >= 1.0 && reach < 1e-3 && other_n == 50.0 && other < 1e-2 && cpar == 0.0 && sig > 3.0 && secs < 60.0;
    s.record(
        10,
        pass,
        format!("pathwise: reachable |X(T)-1| {reach:.1e} < 1e-3 ({reached} paths), other branch gap {other:.1e} < 1e-2 on {other_n} paths, counterexample parabolic {cpar} and mismatch {sig:.1}σ > 3, {secs:.1}s"),
    );
}

fn insider(s: &mut Suite) {
    let i = s.run("verify --example insider --probes 100");
    let c = &s.runs[i].report["body"]["checked"];
    let (tr, par, term) = (num(&c["max_transport"]), num(&c["max_parabolic"]), num(&c["max_terminal"]));
    let secs = s.runs[i].secs;
    let pass = c["probes"] == 100 && tr == 0.0 && par < 1e-8 && term == 0.0 && secs < 10.0;
    s.record(11, pass, format!("insider: transport {tr:e} == 0, parabolic {par:.1e} < 1e-8 at 100 probes, terminal {term:e} == 0, {secs:.2}s"));
}

fn determinism(s: &mut Suite) {
    let mut mismatched = Vec::new();
    let cmds: Vec<(String, i32, Value)> = s.runs.iter().map(|r| (r.cmd.clone(), r.code, comparable(&r.report))).collect();
    for (cmd, code, rep) in &cmds {
        let out = run(argv(cmd, 1));
        let again = out.report.as_ref().map(comparable).unwrap_or(Value::Null);
        if out.code != *code || &again != rep || rep.is_null() {
            mismatched.push(cmd.clone());
        }
    }
    let pass = mismatched.is_empty();
    s.record(12, pass, format!("determinism: {} commands identical at --threads {} and 1 (mismatched: {mismatched:?})", cmds.len(), s.threads));
}

fn main() {
    let threads = std::thread::available_parallelism().map_or(2, |n| n.get()).max(2);
    let mut s = Suite { threads, runs: Vec::new(), results: Vec::new() };
    chen(&mut s);
    convergence(&mut s, 2, "integral --n 1024,4096,16384 --seeds 200", "rough integral vs Itô formula");
    convergence(&mut s, 3, "rde --n 1024,4096,16384 --seeds 200", "geometric RDE vs closed form");
    quadratic_variation(&mut s);
    derivatives(&mut s);
    functional_ito(&mut s);
    frontrunner(&mut s);
    pathwise(&mut s);
    insider(&mut s);
    determinism(&mut s);

    s.results.sort_by_key(|r| r.0);
    let failed: Vec<u32> = s.results.iter().filter(|r| !r.1).map(|r| r.0).collect();
    println!("acceptance: {}/{} criteria passed", s.results.len() - failed.len(), s.results.len());
    if !failed.is_empty() {
        println!("failed: {failed:?}");
        std::process::exit(1);
    }
}
