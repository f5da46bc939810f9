//! Acceptance suite: one PASS/FAIL line per criterion, each with a runtime budget.
//!
//! Run with `cargo test -p promptshap --test acceptance`.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::Zero;
use promptshap::core::ensemble::{EnsembleUtility, PredictionMatrix, Rule, TieRule, ValidationSet};
use promptshap::core::learn::{holdout_eval, EmbeddingMatrix, GpConfig, RegressorSpec};
use promptshap::core::rng::{self, Rng};
use promptshap::core::select::{best_prefix, rank, rank_add_curve};
use promptshap::core::theory::{
    beta_interval_exact, beta_interval_normal, beta_interval_poly, ensemble_perturbation, lemma1_sweep,
    theorem1_experiment, BetaSpec, FieldKind, LipschitzGame, PerturbationConfig,
};
use promptshap::core::{
    shapley_exact, shapley_exact_rational, shapley_montecarlo, Coalition, FnUtility, Game, MonteCarloConfig,
};
use promptshap::stub::{StubReply, StubServer};
use rand_distr::{Distribution, StandardNormal};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

/// Random table game: `U(S) = table[mask(S)]`, `U(∅) = table[0]`.
fn random_table(n: usize, r: &mut Rng) -> Vec<f64> {
    (0..1usize << n).map(|_| rng::unit_f64(r)).collect()
}

fn table_game(n: usize, table: &[f64]) -> Game<FnUtility<impl Fn(&Coalition) -> f64 + '_>> {
    Game::new(FnUtility::new(n, move |c: &Coalition| table[c.mask().unwrap() as usize]), table[0])
}

const TOL: f64 = 1e-9;

fn c1_axioms() -> Outcome {
    let mut checked = 0;
    let mut worst = 0.0f64;
    for g in 0..100u64 {
        let n = 2 + (g % 9) as usize;
        let mut r = rng::stream_rng(1001, g);
        let t = random_table(n, &mut r);
        let t2 = random_table(n, &mut r);

        // Efficiency.
        let sv = shapley_exact(&table_game(n, &t), 20).unwrap();
        worst = worst.max((sv.values.iter().sum::<f64>() - (sv.u_full - sv.u_empty)).abs());

        // Symmetry: players 0 and 1 are interchangeable.
        let sym: Vec<f64> = (0..t.len())
            .map(|m| {
                let (a, b) = (m & 1, (m >> 1) & 1);
                t[if a != b { (m & !3) | 1 } else { m }]
            })
            .collect();
        let s = shapley_exact(&table_game(n, &sym), 20).unwrap();
        worst = worst.max((s.values[0] - s.values[1]).abs());

        // Null player: the last player never changes the utility.
        let last = 1usize << (n - 1);
        let null: Vec<f64> = (0..t.len()).map(|m| t[m & !last]).collect();
        let s = shapley_exact(&table_game(n, &null), 20).unwrap();
        worst = worst.max(s.values[n - 1].abs());

        // Linearity: SV(aU + bV) = a SV(U) + b SV(V).
        let (a, b) = (rng::unit_f64(&mut r) * 4.0 - 2.0, rng::unit_f64(&mut r) * 4.0 - 2.0);
        let mix: Vec<f64> = t.iter().zip(&t2).map(|(x, y)| a * x + b * y).collect();
        let s_mix = shapley_exact(&table_game(n, &mix), 20).unwrap();
        let s2 = shapley_exact(&table_game(n, &t2), 20).unwrap();
        for i in 0..n {
            worst = worst.max((s_mix.values[i] - (a * sv.values[i] + b * s2.values[i])).abs());
        }
        checked += 1;
    }
    outcome(worst < TOL, format!("{checked} games, n in [2,10], max axiom residual {worst:.2e} (< 1e-9)"))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn c2_permutation_oracle() -> Outcome {
    let mut mismatches = 0;
    let mut games = 0;
    for g in 0..25u64 {
        let n = 2 + (g % 5) as usize;
        let mut r = rng::stream_rng(2002, g);
        let table: Vec<BigRational> = (0..1usize << n)
            .map(|_| BigRational::new(BigInt::from(rng::below(&mut r, 2001) as i64 - 1000), BigInt::from(1 + rng::below(&mut r, 97))))
            .collect();
        let exact = shapley_exact_rational(n, 20, |c: &Coalition| table[c.mask().unwrap() as usize].clone()).unwrap();
        let perms = permutations(n);
        let mut brute = vec![BigRational::zero(); n];
        for p in &perms {
            let mut mask = 0usize;
            for &i in p {
                let before = table[mask].clone();
                mask |= 1 << i;
                brute[i] += &table[mask] - before;
            }
        }
        let count = BigRational::from_integer(BigInt::from(perms.len()));
        for (e, b) in exact.iter().zip(&brute) {
            if *e != b / &count {
                mismatches += 1;
            }
        }
        games += 1;
    }
    outcome(mismatches == 0, format!("{games} games, n in [2,6], {mismatches} rational mismatches against all n! orderings"))
}

fn c3_montecarlo() -> Outcome {
    let mut pairs = 0usize;
    let mut close = 0usize;
    let mut worst_z = 0.0f64;
    let mut check = |exact: &[f64], mc: &[f64], se: &[f64]| {
        for i in 0..exact.len() {
            let dev = (mc[i] - exact[i]).abs();
            pairs += 1;
            close += usize::from(dev < 0.01);
            let z = if se[i] > 0.0 { dev / se[i] } else if dev == 0.0 { 0.0 } else { f64::INFINITY };
            worst_z = worst_z.max(z);
        }
    };
    let glove = Game::new(FnUtility::new(3, |c: &Coalition| f64::from(c.contains(0) && (c.contains(1) || c.contains(2)))), 0.0);
    let ex = shapley_exact(&glove, 20).unwrap();
    let mc = shapley_montecarlo(&glove, &MonteCarloConfig::new(50_000, 3003)).unwrap();
    check(&ex.values, &mc.values, &mc.stderr);
    for g in 0..20u64 {
        let t = random_table(8, &mut rng::stream_rng(3003, g));
        let game = table_game(8, &t);
        let ex = shapley_exact(&game, 20).unwrap();
        let mc = shapley_montecarlo(&game, &MonteCarloConfig::new(50_000, 3003 + g)).unwrap();
        check(&ex.values, &mc.values, &mc.stderr);
    }
    let share = close as f64 / pairs as f64;
    outcome(
        share >= 0.95 && worst_z < 4.0,
        format!("glove + 20 games at T=50000: {close}/{pairs} within 0.01 ({:.1}% >= 95%), max |dev|/stderr {worst_z:.2} (< 4)", share * 100.0),
    )
}

fn c4_lemma1() -> Outcome {
    let r = lemma1_sweep(64).unwrap();
    outcome(
        r.failures.is_empty() && r.cases == 2016,
        format!("{} (n, k) cases for n in [2,64], k in [0,n-2]; {} inequalities", r.cases, r.failures.len()),
    )
}

fn c5_theorem1() -> Outcome {
    let a = theorem1_experiment(6, 4, FieldKind::Affine, 100, 5005, 20).unwrap();
    let s = theorem1_experiment(6, 4, FieldKind::Smooth, 100, 5005, 20).unwrap();
    outcome(
        a.violations + s.violations == 0,
        format!(
            "n=6, d=4, 100 seeds each: affine max ratio {:.4}, smooth max ratio {:.4}; {} violations (ratio > 1+1e-9)",
            a.max_ratio,
            s.max_ratio,
            a.violations + s.violations
        ),
    )
}

fn c6_beta() -> Outcome {
    let be = |a: f64| BetaSpec::new(a, a).unwrap();
    let exact22 = beta_interval_exact(&be(2.0), 0.1).unwrap();
    let rel = |a: f64| {
        let e = beta_interval_exact(&be(a), 0.01).unwrap();
        (beta_interval_normal(&be(a), 0.01).unwrap() - e).abs() / e
    };
    let (r50, r500) = (rel(50.0), rel(500.0));
    let flag11 = beta_interval_poly(&be(1.0), 0.1).unwrap().out_of_validity;
    let passed = (exact22 - 0.296).abs() < 1e-6 && r50 < 0.02 && r500 < 0.005 && flag11;
    outcome(
        passed,
        format!(
            "Be(2,2) eps=0.1 exact {exact22:.10} (0.2960 +- 1e-6); normal rel err {:.3}% at 50 (< 2%), {:.3}% at 500 (< 0.5%); Be(1,1) poly flag {flag11}",
            r50 * 100.0,
            r500 * 100.0
        ),
    )
}

fn c7_perturbation() -> Outcome {
    let base = |n: usize, instances: usize, trials: usize| PerturbationConfig {
        n_classifiers: n,
        instances,
        alpha: 50.0,
        beta: 50.0,
        k: 0,
        delta: 0.5,
        seed: 7007,
        trials,
    };
    let identity = ensemble_perturbation(&base(10, 10_000, 1)).unwrap();
    let identity_ok = identity.max_identity_error <= 4.0 * f64::EPSILON;
    let mut detail = format!("identity max error {:.1e} over 1e4 instances", identity.max_identity_error);
    let mut ok = identity_ok;
    for n in [10, 100] {
        let r = ensemble_perturbation(&base(n, 100_000, 100)).unwrap();
        let one_sided = r.trials.iter().filter(|t| t.correct_to_incorrect as f64 / 100_000.0 > r.bound).count();
        ok &= r.exceed_count == 0 && one_sided == 0;
        detail.push_str(&format!(
            "; N={n}: bound {:.4}, max |dU| {:.4}, max drop {:.4}, {} exceedances",
            r.bound,
            r.max_observed_change,
            r.trials.iter().map(|t| t.correct_to_incorrect).max().unwrap() as f64 / 100_000.0,
            r.exceed_count + one_sided
        ));
    }
    outcome(ok, detail)
}

fn c8_fewer_prompts() -> Outcome {
    let ids = |p: &str, n: usize| (0..n).map(|i| format!("{p}{i}")).collect::<Vec<_>>();
    let rows = (0..6).map(|p| vec![usize::from(p >= 3); 10]).collect();
    let m = PredictionMatrix::hard(ids("p", 6), ids("x", 10), 2, rows).unwrap();
    let v = ValidationSet::new(ids("x", 10).into_iter().map(|i| (i, 0)).collect(), 2).unwrap();
    let game = Game::new(EnsembleUtility::new(&m, &v, Rule::Vote, TieRule::Abstain).unwrap(), 0.0);
    let sv = shapley_exact(&game, 20).unwrap();
    let order = rank(&sv.values, m.prompt_ids()).unwrap();
    let ranked = order[..3].iter().all(|&p| p < 3);
    let curve = rank_add_curve(&sv.values, m.prompt_ids(), &game).unwrap();
    let best = best_prefix(&curve.points).unwrap();
    let passed = ranked && best.utility == 1.0 && best.k <= 3 && sv.u_full == 0.0 && curve.points.last().unwrap().utility == 0.0;
    outcome(
        passed,
        format!("correct prompts ranked first: {ranked}; best prefix k*={} utility {}; U(N) = {}", best.k, best.utility, sv.u_full),
    )
}

fn mean_field_data(d: usize, field: FieldKind, seed: u64) -> (EmbeddingMatrix, Vec<f64>, f64) {
    const N: usize = 200;
    let mut r = rng::stream_rng(seed, 0);
    let g = field.random(d, &mut r);
    let rows: Vec<Vec<f64>> = (0..N).map(|_| (0..d).map(|_| StandardNormal.sample(&mut r)).collect()).collect();
    let ids = (0..N).map(|i| format!("p{i}")).collect();
    let emb = EmbeddingMatrix::new(ids, rows).unwrap();
    let game = LipschitzGame::new(emb.clone(), g.as_ref()).unwrap();
    let sv = shapley_montecarlo(&game.game(), &MonteCarloConfig::new(2_000, rng::derive_seed(seed, "sv"))).unwrap();
    // Closed form for the mean-field game: SV_i = (g_i + (g_i - mean_{-i} g)(H_n - 1)) / n.
    let gv = game.field_values();
    let h: f64 = (1..=N).map(|k| 1.0 / k as f64).sum();
    let total: f64 = gv.iter().sum();
    let max_err = (0..N)
        .map(|i| {
            let others = (total - gv[i]) / (N - 1) as f64;
            ((gv[i] + (gv[i] - others) * (h - 1.0)) / N as f64 - sv.values[i]).abs()
        })
        .fold(0.0, f64::max);
    (emb, sv.values, max_err)
}

fn c9_learnability() -> Outcome {
    let split = rng::derive_seed(9009, "holdout-split");
    let (xa, ya, err_a) = mean_field_data(8, FieldKind::Affine, 9009);
    let lin = holdout_eval(&xa, &ya, split, 0.8, &RegressorSpec::Linear).unwrap();
    let ridge = holdout_eval(&xa, &ya, split, 0.8, &RegressorSpec::ridge_default()).unwrap();
    let (xs, ys, err_s) = mean_field_data(4, FieldKind::Smooth, 9010);
    let gp = holdout_eval(&xs, &ys, split, 0.8, &RegressorSpec::GaussianProcess(GpConfig::default())).unwrap();
    let passed = lin.pearson >= 0.95 && ridge.pearson >= 0.95 && gp.pearson >= 0.90;
    outcome(
        passed,
        format!(
            "200 prompts, 160/40 split, MC SVs (T=2000, max |MC - closed form| {:.1e}/{:.1e}): linear {:.4}, ridge {:.4} (>= 0.95); GP on smooth field {:.4} (>= 0.90)",
            err_a, err_s, lin.pearson, ridge.pearson, gp.pearson
        ),
    )
}

/// Exemplar-sensitive stub: question `j` is answered correctly when the
/// prompt holds at least `j % 3 - 1` more helpful than misleading exemplars.
fn pipeline_stub() -> StubServer {
    StubServer::start(8, |req| {
        let content = req.content().unwrap_or_default();
        let (context, question) = content.rsplit_once("\n\n").unwrap_or(("", content.as_str()));
        let helpful = context.matches("helpful").count() as i64;
        let misleading = context.matches("misleading").count() as i64;
        let j: i64 = question.trim_start_matches("Question ").split(':').next().unwrap().parse().unwrap();
        let reply = if helpful - misleading >= j % 3 - 1 {
            format!("Working it out, the answer is {}.", 7 * j)
        } else if j % 2 == 0 {
            format!("Working it out, the answer is {}.", 7 * j + 1)
        } else {
            "I am not sure.".to_owned()
        };
        StubReply::Text(reply)
    })
}

fn write_pipeline_inputs(dir: &Path, url: &str) {
    let kinds = ["helpful", "helpful", "misleading", "helpful", "misleading"];
    let manifest: String = kinds
        .iter()
        .enumerate()
        .map(|(i, k)| format!("{{\"id\":\"p{i}\",\"text\":\"Example {i} ({k}).\",\"rationale\":true}}\n"))
        .collect();
    std::fs::write(dir.join("manifest.jsonl"), manifest).unwrap();
    let questions: String = (0..6)
        .map(|j| format!("{{\"id\":\"q{j}\",\"question\":\"Question {j}: what is 7 times {j}?\",\"answer\":\"{}\"}}\n", 7 * j))
        .collect();
    std::fs::write(dir.join("questions.jsonl"), questions).unwrap();
    let cfg = serde_json::json!({
        "schema_version": 1,
        "task": "numeric",
        "utility": {"mode": "live-augmentation"},
        "paths": {
            "manifest": "manifest.jsonl",
            "questions": "questions.jsonl",
            "utility_cache": "cache/utility.jsonl",
            "response_cache": "cache/responses.jsonl"
        },
        "game": {"method": "exact", "seed": 10010},
        "api": {"base_url": url, "model": "stub-model", "max_in_flight": 3, "backoff_base_ms": 1}
    });
    std::fs::create_dir_all(dir.join("cache")).unwrap();
    std::fs::write(dir.join("run.json"), serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
}

fn run_cli(dir: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_promptshap"))
        .current_dir(dir)
        .args(args)
        .env("PROMPTSHAP_API_KEY", "offline-test-key")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    Ok(out.stdout)
}

/// Runs value -> curve in `dir` and returns every output artifact.
fn pipeline(dir: &Path) -> Result<Vec<Vec<u8>>, String> {
    run_cli(dir, &["value", "--config", "run.json", "--out", "out/values.json"])?;
    let summary = run_cli(dir, &["curve", "--config", "run.json", "--values", "out/values.json", "--out-dir", "out"])?;
    let read = |name: &str| std::fs::read(dir.join("out").join(name)).map_err(|e| format!("{name}: {e}"));
    Ok(vec![read("values.json")?, read("curve_shapley.csv")?, read("curve_shapley.json")?, summary])
}

fn c10_pipeline() -> Outcome {
    let server = pipeline_stub();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_pipeline_inputs(a.path(), server.url());
    write_pipeline_inputs(b.path(), server.url());
    let first = pipeline(a.path());
    let cold_hits = server.hits();
    let second = pipeline(b.path());
    let before_warm = server.hits();
    let warm = pipeline(a.path());
    let warm_hits = server.hits() - before_warm;
    match (first, second, warm) {
        (Ok(x), Ok(y), Ok(z)) => {
            let identical = x == y && x == z;
            let summary: serde_json::Value = serde_json::from_slice(&x[3]).unwrap();
            let best = &summary[0]["best_prefix"];
            // 2^5 coalitions x 6 questions, each answered once per cold run.
            let traffic_ok = cold_hits == 192 && before_warm == 384 && warm_hits == 0;
            outcome(
                identical && traffic_ok,
                format!(
                    "stub -> augmentation utility -> exact SVs (n=5) -> curve -> best prefix k*={} utility {}; cold runs byte-identical: {}; warm rerun identical with {} requests",
                    best["k"], best["utility"], x == y, warm_hits
                ),
            )
        }
        (x, y, z) => outcome(false, format!("pipeline failed: {:?} {:?} {:?}", x.err(), y.err(), z.err())),
    }
}

fn main() {
    let criteria: [(&str, u64, fn() -> Outcome); 10] = [
        ("Shapley axiom suite", 30, c1_axioms),
        ("Permutation-oracle equivalence", 60, c2_permutation_oracle),
        ("Monte Carlo convergence", 120, c3_montecarlo),
        ("Marginal-weight identity", 1, c4_lemma1),
        ("Lipschitz bound on value gaps", 120, c5_theorem1),
        ("Beta interval bounds", 5, c6_beta),
        ("Perturbation identity and bound", 60, c7_perturbation),
        ("Fewer prompts win", 5, c8_fewer_prompts),
        ("Learnability", 120, c9_learnability),
        ("End-to-end offline pipeline", 60, c10_pipeline),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, budget, check)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|f| *f == id || name.to_lowercase().contains(&f.to_lowercase())) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let in_budget = elapsed <= Duration::from_secs(*budget);
        let passed = result.passed && in_budget;
        failed += usize::from(!passed);
        println!(
            "criterion {id:>2}: {} {name} [{:.2}s / {budget}s{}] {}",
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            if in_budget { "" } else { ", over budget" },
            result.detail
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
