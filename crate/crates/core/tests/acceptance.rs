//! Acceptance suite: one PASS/FAIL line per criterion; exits non-zero on any failure.

mod common;

use std::collections::{BTreeMap, HashMap};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use valence_audit::audit::{format_cell, run_audit, AuditConfig};
use valence_audit::corpus::{Corpus, Platform, TextSnippet};
use valence_audit::lexicon::{weighted_sample, WeightedStage};
use valence_audit::pruning::{detect_mentions, mention_stats, prune, MatcherConfig};
use valence_audit::scorer::ScorerSpec;
use valence_audit::stats::{
    cohens_d, icc1, norm_quantile, permutation_test, wls_fit, Matrix, PermutationConfig, RatingsMatrix,
    Stars,
};
use valence_audit::stimuli::{default_entities, Condition};

use common::{all_permutations, grep_count, normal_equations, normal_quantile_bisect};

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}

fn c1_wls_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for inst in 0..1000 {
        let p = rng.random_range(1..=4usize);
        let n = rng.random_range(p + 2..=12usize);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let mut r = vec![1.0];
                r.extend((1..p).map(|_| rng.random_range(-2.0..2.0)));
                r
            })
            .collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let w = vec![1.0; n];
        let fit = wls_fit(&Matrix::from_rows(&rows).unwrap(), &y, &w).map_err(|e| format!("instance {inst}: {e}"))?;
        let oracle = normal_equations(&rows, &y, &w);
        for j in 0..p {
            worst = worst.max((fit.coefficients[j] - oracle.beta[j]).abs() / oracle.beta[j].abs().max(1.0));
            ensure!(close(fit.coefficients[j], oracle.beta[j], 1e-8), "instance {inst}: beta[{j}] {} vs {}", fit.coefficients[j], oracle.beta[j]);
            ensure!(close(fit.std_errors[j], oracle.se[j], 1e-8), "instance {inst}: se[{j}] {} vs {}", fit.std_errors[j], oracle.se[j]);
        }
        ensure!(close(fit.r2, oracle.r2, 1e-8), "instance {inst}: R² {} vs {}", fit.r2, oracle.r2);
    }
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 10.0, "took {secs:.1}s");
    Ok(format!("1000 instances, max rel coef error {worst:.1e}, {secs:.2}s"))
}

fn c2_weighted_fixture() -> Outcome {
    let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0], vec![1.0, 2.0], vec![1.0, 3.0]]).unwrap();
    let fit = wls_fit(&x, &[1.0, 3.0, 2.0, 5.0], &[1.0, 2.0, 1.0, 2.0]).map_err(|e| e.to_string())?;
    // XᵀWX = [[6, 10], [10, 24]] (det 44), XᵀWy = [19, 40], so
    // β = [14/11, 25/22]; SSR_w = 37/11 over df 2; SST_w about ȳ_w = 19/6.
    let sigma2 = 37.0 / 22.0;
    let want = [
        ("beta0", fit.coefficients[0], 14.0 / 11.0),
        ("beta1", fit.coefficients[1], 25.0 / 22.0),
        ("se0", fit.std_errors[0], (sigma2 * 24.0 / 44.0_f64).sqrt()),
        ("se1", fit.std_errors[1], (sigma2 * 6.0 / 44.0_f64).sqrt()),
        ("r2", fit.r2, 625.0 / 847.0),
        ("residual_se", fit.residual_se, sigma2.sqrt()),
    ];
    for (name, got, exp) in want {
        ensure!((got - exp).abs() <= 1e-8, "{name}: {got} vs {exp}");
    }
    Ok(format!("beta = [{:.6}, {:.6}], R² = {:.6}", fit.coefficients[0], fit.coefficients[1], fit.r2))
}

fn c3_permutation_exactness() -> Outcome {
    let start = Instant::now();
    let rows: Vec<Vec<f64>> = (0..6).map(|i| vec![1.0, i as f64, ((i * i) % 4) as f64]).collect();
    let x = Matrix::from_rows(&rows).unwrap();
    let y = [2.1, 2.9, 4.4, 3.8, 6.0, 5.2];
    let w = [1.0, 2.0, 3.0, 1.0, 2.0, 3.0];

    let exact = permutation_test(&x, &y, &w, &PermutationConfig::exhaustive(6)).map_err(|e| e.to_string())?;
    ensure!(exact.exhaustive && exact.n_evaluated == 720, "exhaustive mode not used: {exact:?}");
    let mc = permutation_test(&x, &y, &w, &PermutationConfig::monte_carlo(100_000, 2024)).map_err(|e| e.to_string())?;
    ensure!((mc.p_value - exact.p_value).abs() <= 0.01, "MC p {} vs exhaustive {}", mc.p_value, exact.p_value);

    let observed = normal_equations(&rows, &y, &w).r2;
    let extreme = all_permutations(6)
        .iter()
        .filter(|perm| {
            let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
            normal_equations(&rows, &yp, &w).r2 >= observed - 1e-12
        })
        .count();
    let oracle_p = extreme as f64 / 720.0;
    ensure!(exact.p_value == oracle_p, "exhaustive p {} vs enumeration oracle {oracle_p}", exact.p_value);
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 30.0, "took {secs:.1}s");
    Ok(format!(
        "exhaustive p = {extreme}/720 = {oracle_p:.5}, MC p = {:.5}, {secs:.2}s",
        mc.p_value
    ))
}

fn c4_permutation_calibration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut rejections = 0;
    for k in 0..200u64 {
        let n = 14;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![1.0, rng.random_range(0.0..1.0), f64::from(u8::from(rng.random_bool(0.4)))])
            .collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(1..20u32))).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        let out = permutation_test(&x, &y, &w, &PermutationConfig::monte_carlo(1999, 1000 + k)).map_err(|e| e.to_string())?;
        if out.p_value < 0.05 {
            rejections += 1;
        }
    }
    let frac = rejections as f64 / 200.0;
    ensure!((0.01..=0.10).contains(&frac), "rejection fraction {frac}");
    Ok(format!("fraction p < 0.05 = {frac:.3}"))
}

fn c5_cohens_d() -> Outcome {
    let a = cohens_d(5.47, 3.53).map_err(|e| e.to_string())?;
    let b = cohens_d(2.30, 1.23).map_err(|e| e.to_string())?;
    ensure!((a - 1.55).abs() <= 0.005, "d(5.47, 3.53) = {a}");
    ensure!((b - 1.87).abs() <= 0.005, "d(2.30, 1.23) = {b}");
    Ok(format!("d = {a:.4}, {b:.4}"))
}

fn c6_icc() -> Outcome {
    let perfect = RatingsMatrix::from_rows(&[vec![1.0; 3], vec![3.0; 3], vec![2.0; 3], vec![4.0; 3]]);
    let p = icc1(&perfect).map_err(|e| e.to_string())?;
    ensure!(p == 1.0, "perfect agreement ICC {p}");

    let rows = vec![vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0], vec![3.0, 5.0, 4.0], vec![6.0, 6.0, 9.0]];
    // Oracle: grand mean 4; text means 2, 3, 4, 7; SSB = 3·(4+1+0+9) = 42,
    // MSB = 14; SSW = 2+2+2+6 = 12, MSW = 1.5; ICC = 12.5/17 = 25/34.
    let hand = icc1(&RatingsMatrix::from_rows(&rows)).map_err(|e| e.to_string())?;
    ensure!((hand - 25.0 / 34.0).abs() <= 1e-10, "hand fixture ICC {hand}");

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let base: Vec<Vec<f64>> = (0..30)
        .map(|t| (0..3).map(|_| f64::from((t % 5) as u8) + rng.random_range(0.0..1.5)).collect())
        .collect();
    let mut flat: Vec<f64> = base.iter().flatten().copied().collect();
    let mut total = 0.0;
    for _ in 0..100 {
        flat.shuffle(&mut rng);
        let m: Vec<Vec<f64>> = flat.chunks(3).map(<[f64]>::to_vec).collect();
        total += icc1(&RatingsMatrix::from_rows(&m)).map_err(|e| e.to_string())?;
    }
    let mean = total / 100.0;
    ensure!(mean.abs() <= 0.1, "shuffled mean ICC {mean}");
    Ok(format!("perfect = 1, hand = {hand:.12}, shuffled mean = {mean:.4}"))
}

fn c7_norm_quantile() -> Outcome {
    let q = norm_quantile(0.975).map_err(|e| e.to_string())?;
    let oracle = normal_quantile_bisect(0.975);
    ensure!((oracle - 1.959964).abs() <= 1e-5, "series oracle itself off: {oracle}");
    ensure!((q - oracle).abs() <= 1e-5 && (q - 1.959964).abs() <= 1e-5, "quantile {q} vs oracle {oracle}");
    // Dyadic p so that 1 − p is exact.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let p = f64::from(rng.random_range(1..(1u32 << 24))) / f64::from(1u32 << 24);
        let a = norm_quantile(p).map_err(|e| e.to_string())?;
        let b = norm_quantile(1.0 - p).map_err(|e| e.to_string())?;
        worst = worst.max((a + b).abs());
    }
    ensure!(worst <= 1e-12, "symmetry violated by {worst:e}");
    Ok(format!("q(0.975) = {q:.9}, oracle {oracle:.9}, max |q(p)+q(1-p)| = {worst:.1e}"))
}

fn raw_name_fit(delta: f64) -> Result<(f64, f64), String> {
    let spec = ScorerSpec::Biased {
        base: Box::new(ScorerSpec::Noise {
            center: 0.5,
            amplitude: 0.005,
            salt: 8,
        }),
        bias: BTreeMap::new(),
        party_bias: [("KO".to_string(), delta)].into(),
    };
    let cfg = AuditConfig::new(spec);
    let report = run_audit(&cfg, 8).map_err(|e| e.to_string())?;
    let fit = report.scorers[0]
        .fits
        .iter()
        .find(|f| f.model == "affiliation" && f.condition == Condition::RawName)
        .ok_or("affiliation model missing")?;
    let ko = fit.result.coefficient("KO").ok_or("no KO column")?;
    Ok((ko, fit.result.permutation_p.ok_or("no permutation p")?))
}

fn c8_bias_recovery() -> Outcome {
    let start = Instant::now();
    let (ko, p) = raw_name_fit(0.05)?;
    ensure!((ko - 5.0).abs() <= 1.0, "δ=0.05: KO coefficient {ko}");
    ensure!(p < 0.05, "δ=0.05: permutation p {p}");
    let (ko0, p0) = raw_name_fit(0.0)?;
    ensure!(ko0.abs() < 1.0, "δ=0: KO coefficient {ko0}");
    ensure!(p0 > 0.1, "δ=0: permutation p {p0}");
    let secs = start.elapsed().as_secs_f64();
    ensure!(secs < 120.0, "took {secs:.1}s");
    Ok(format!(
        "δ=0.05: KO = {ko:.3}, p = {p:.5}; δ=0: KO = {ko0:.3}, p = {p0:.3}; full battery, 100000 permutations, {secs:.1}s"
    ))
}

fn c9_pruning() -> Outcome {
    let entities = default_entities();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let filler = ["spotkanie", "w", "sejmie", "dzisiaj", "rząd", "kaczka", "tuskan"];
    let suffixes = ["", "a", "owi", "em", "iego"];
    let texts: Vec<String> = (0..300)
        .map(|_| {
            let mut words: Vec<String> = (0..rng.random_range(2..8)).map(|_| filler[rng.random_range(0..filler.len())].to_string()).collect();
            for _ in 0..rng.random_range(0..3) {
                let e = &entities[rng.random_range(0..entities.len())];
                let suffix = if e.surname.contains('-') { "" } else { suffixes[rng.random_range(0..suffixes.len())] };
                let pos = rng.random_range(0..=words.len());
                words.insert(pos, format!("{}{suffix}", e.surname));
            }
            words.join(" ")
        })
        .collect();
    let corpus = Corpus::from_snippets(
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| TextSnippet::new(format!("t{i}"), Platform::Twitter, t.as_str()))
            .collect(),
    )
    .map_err(|e| e.to_string())?;
    let index = detect_mentions(&corpus, &entities, &MatcherConfig::default())
        .map_err(|e| e.to_string())?
        .auto_confirm();
    let stats = mention_stats(&index);

    let mut oracle: Vec<usize> = Vec::new();
    for e in &entities {
        let want = grep_count(texts.iter().map(String::as_str), &e.surname);
        ensure!(stats.per_entity[&e.id] == want, "{}: index {} vs scan {want}", e.surname, stats.per_entity[&e.id]);
        oracle.push(want);
    }
    oracle.sort_unstable();
    let med = (oracle[9] + oracle[10]) as f64 / 2.0;
    ensure!(stats.min == oracle[0] && stats.max == oracle[19] && stats.median == med, "aggregates {:?} vs oracle", (stats.min, stats.max, stats.median));

    let pruned = prune(&corpus, &index);
    let again = prune(&pruned, &index);
    ensure!(again.snippets == pruned.snippets, "prune not idempotent");

    let mut big: Vec<TextSnippet> = (0..7999).map(|i| TextSnippet::new(format!("b{i}"), Platform::Twitter, format!("wpis {i}"))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(90);
    let mut order: Vec<usize> = (0..7999).collect();
    order.shuffle(&mut rng);
    for (k, &i) in order.iter().take(459).enumerate() {
        let e = &entities[k % entities.len()];
        big[i] = TextSnippet::new(format!("b{i}"), Platform::Twitter, format!("wpis o {}", e.full_name));
    }
    let big = Corpus::from_snippets(big).map_err(|e| e.to_string())?;
    let idx = detect_mentions(&big, &entities, &MatcherConfig::default()).map_err(|e| e.to_string())?.auto_confirm();
    let total = mention_stats(&idx).total;
    ensure!(total == 459, "synthetic corpus total {total}");
    let frac = (big.len() - prune(&big, &idx).len()) as f64 / big.len() as f64;
    ensure!(frac < 0.06, "removed fraction {frac}");
    Ok(format!(
        "counts match scan on 300 snippets (min {}, max {}, median {}); idempotent; 459/7999 removed = {:.2}%",
        stats.min,
        stats.max,
        stats.median,
        frac * 100.0
    ))
}

fn c10_sampler() -> Outcome {
    let weights = [1.0, 2.0, 3.0, 4.0, 5.0];
    let corpus = Corpus::from_snippets(
        (0..5).map(|i| TextSnippet::new(format!("s{i}"), Platform::Twitter, format!("x{i}"))).collect(),
    )
    .map_err(|e| e.to_string())?;
    let reps = 10_000u64;
    let mut counts: HashMap<String, u64> = HashMap::new();
    for seed in 0..reps {
        let s = weighted_sample(&corpus, &weights, 1, 0, seed, WeightedStage::Proportional).map_err(|e| e.to_string())?;
        *counts.entry(s.manifest[0].id.clone()).or_default() += 1;
    }
    let total: f64 = weights.iter().sum();
    let chi2: f64 = weights
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let expected = reps as f64 * w / total;
            let observed = counts.get(&format!("s{i}")).copied().unwrap_or(0) as f64;
            (observed - expected).powi(2) / expected
        })
        .sum();
    let critical = ChiSquared::new(4.0).unwrap().inverse_cdf(0.99);
    ensure!(chi2 < critical, "chi-square {chi2:.3} ≥ {critical:.3}");
    Ok(format!("chi-square {chi2:.3} < {critical:.3} (df 4, α = 0.01)"))
}

fn c11_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = dir.path().join("audit.toml");
    std::fs::write(
        &cfg,
        "n_perm = 5000\n\
         [scorers.original]\n\
         kind = \"biased\"\n\
         party_bias = { KO = 0.03 }\n\
         base = { kind = \"noise\", amplitude = 0.02, salt = 5 }\n\
         [scorers.modified]\n\
         kind = \"noise\"\n\
         amplitude = 0.02\n\
         salt = 5\n",
    )
    .map_err(|e| e.to_string())?;
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        let status = Command::new(env!("CARGO_BIN_EXE_valence-audit"))
            .args(["audit", "--config"])
            .arg(&cfg)
            .args(["--seed", "7", "--outdir"])
            .arg(&out)
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(status.status.success(), "run {run} failed: {}", String::from_utf8_lossy(&status.stderr));
        outputs.push(std::fs::read(out.join("report.json")).map_err(|e| e.to_string())?);
    }
    ensure!(outputs[0] == outputs[1], "report.json differs between runs");
    Ok(format!("two runs, identical report.json ({} bytes)", outputs[0].len()))
}

fn c12_stars() -> Outcome {
    let got: Vec<&str> = [0.099, 0.049, 0.009].iter().map(|p| Stars::from_p(*p).as_str()).collect();
    ensure!(got == ["*", "**", "***"], "stars {got:?}");
    ensure!(Stars::from_p(0.1).as_str().is_empty(), "p = 0.1 starred");
    let cell = format_cell(5.83, 1.31, 0.0004);
    ensure!(cell == "5.83*** (1.31)", "cell {cell}");
    Ok(format!("{{0.099, 0.049, 0.009}} -> {got:?}; {cell}"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 12] = [
        ("WLS oracle equivalence", c1_wls_oracle),
        ("weighted fit hand-check", c2_weighted_fixture),
        ("permutation exactness", c3_permutation_exactness),
        ("permutation calibration", c4_permutation_calibration),
        ("Cohen's d arithmetic", c5_cohens_d),
        ("ICC(1)", c6_icc),
        ("norm_quantile", c7_norm_quantile),
        ("synthetic bias recovery", c8_bias_recovery),
        ("pruning", c9_pruning),
        ("sampler statistics", c10_sampler),
        ("CLI determinism", c11_determinism),
        ("table star rendering", c12_stars),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            Err(e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
