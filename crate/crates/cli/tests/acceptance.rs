//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use elig_core::critical::{critical_value, CritValRequest};
use elig_core::simlab::*;
use elig_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn std_normal_quantile(p: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().inverse_cdf(p)
}

fn prop1() -> DgpSpec {
    DgpSpec::prop1(Prop1Params::default()).unwrap()
}

fn prop1_grid(steps: usize) -> PolicyGrid {
    enumerate_grid(&Prop1Params::grid(steps).unwrap()).unwrap()
}

fn calibrated() -> DgpSpec {
    DgpSpec::calibrated_mixture(MixtureParams::default()).unwrap()
}

fn calibrated_grid() -> PolicyGrid {
    enumerate_grid(&GridSpec::uniform(3, 0.0, 500.0, 100.0).unwrap()).unwrap()
}

const ALPHA: f64 = 0.05;
const ITERS: usize = 500;
const PROP1_LAMBDA: f64 = 4.0;
const CAL_LAMBDA: f64 = 1.0 / 60_000.0;

fn mistake_control() -> RuleSpec {
    RuleSpec::MistakeControl {
        alpha: ALPHA,
        schedule: false,
        n_draws: 2000,
        sigma_floor: None,
    }
}

fn simulate(dgp: &DgpSpec, grid: &PolicyGrid, n: usize, k: f64, seed: u64, rules: Vec<RuleSpec>) -> MonteCarloReport {
    let cfg = MonteCarloConfig::new(n, ITERS, seed, k, rules);
    run_monte_carlo(dgp, grid, &cfg).unwrap().report
}

fn closed_form_critical_values() -> Outcome {
    let start = Instant::now();
    let draws = 200_000;
    let c = |cov: Matrix| {
        critical_value(&CritValRequest {
            cov_b: &cov,
            alpha: ALPHA,
            n_draws: draws,
            seed: 2024,
            sigma_floor: None,
        })
        .unwrap()
        .c_alpha
    };
    let single = c(Matrix::identity(1));
    let pair = c(Matrix::identity(2));
    let dup = c(Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap());
    let secs = start.elapsed().as_secs_f64();
    // min of two independent normals: P(min <= c) = 1 - (1 - Phi(c))^2
    let want_single = std_normal_quantile(ALPHA);
    let want_pair = std_normal_quantile(1.0 - (1.0 - ALPHA).sqrt());
    let ok = (single - want_single).abs() <= 0.02
        && (pair - want_pair).abs() <= 0.02
        && (dup - single).abs() <= 0.02
        && (want_single + 1.645).abs() < 1e-3
        && (want_pair + 1.955).abs() < 1e-3
        && secs < 10.0;
    check(
        ok,
        format!(
            "singleton {single:.4} (want {want_single:.4}), pair {pair:.4} (want {want_pair:.4}), duplicate {dup:.4}, {secs:.2}s"
        ),
    )
}

struct Shared {
    prop1_mc: MonteCarloReport,
    calibrated_all: MonteCarloReport,
}

fn feasibility_guarantee(s: &Shared) -> Outcome {
    let bound = ALPHA + 3.0 * (ALPHA * (1.0 - ALPHA) / ITERS as f64).sqrt();
    let p = s.prop1_mc.rules[0].prob_infeasible;
    let c = s.calibrated_all.rules[1].prob_infeasible;
    check(
        p <= bound && c <= bound,
        format!("prop1 n=4000: {p:.3}, calibrated n=10135: {c:.3}, bound {bound:.3}"),
    )
}

fn sample_analog_failure() -> Outcome {
    let r = simulate(&prop1(), &prop1_grid(1000), 16_000, Prop1Params::default().binding_k(), 3, vec![RuleSpec::SampleAnalog]);
    let x = &r.rules[0];
    check(
        x.prob_infeasible >= 0.40 && x.prob_suboptimal >= 0.40,
        format!("prob_infeasible {:.3}, prob_suboptimal {:.3}", x.prob_infeasible, x.prob_suboptimal),
    )
}

fn random_dgp(rng: &mut ChaCha8Rng) -> (DgpSpec, PolicyGrid) {
    match rng.gen_range(0..3) {
        0 => {
            let t_low = rng.gen_range(0.05..0.5);
            let params = Prop1Params {
                t_low,
                t_high: rng.gen_range(t_low + 0.05..0.95),
                q: rng.gen_range(0.1..0.9),
            };
            (DgpSpec::prop1(params).unwrap(), prop1_grid(rng.gen_range(5..60)))
        }
        1 => {
            let mut params = MixtureParams::default();
            for g in &mut params.groups {
                g.benefit_mean = rng.gen_range(-0.1..0.2);
                g.cost_mean = rng.gen_range(-1000.0..1000.0);
            }
            let step = [50.0, 100.0, 250.0][rng.gen_range(0..3)];
            let grid = enumerate_grid(&GridSpec::uniform(3, 0.0, 500.0, step).unwrap()).unwrap();
            (DgpSpec::calibrated_mixture(params).unwrap(), grid)
        }
        _ => {
            let rows = (0..rng.gen_range(3..15))
                .map(|_| PopulationRow {
                    weight: rng.gen_range(0.1..2.0),
                    gamma: rng.gen_range(-1.0..2.0),
                    r: rng.gen_range(-1.0..2.0),
                    income: rng.gen_range(0.0..100.0f64).round(),
                    group: rng.gen_range(0..2),
                })
                .collect();
            let grid = enumerate_grid(&GridSpec::uniform(2, 0.0, 100.0, 10.0).unwrap()).unwrap();
            (DgpSpec::custom_table(rows).unwrap(), grid)
        }
    }
}

fn tradeoff_dominance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut worst = f64::INFINITY;
    for case in 0..50 {
        let (dgp, grid) = random_dgp(&mut rng);
        let lambda = 10f64.powf(rng.gen_range(-6.0..2.0));
        // k >= 0 keeps the null policy feasible, so the constrained optimum exists
        let k = rng.gen_range(0.0..1.0) * match dgp.kind {
            DgpKind::CalibratedMixture(_) => 500.0,
            _ => 0.5,
        };
        let best = constrained_optimum(&dgp, &grid, k).unwrap();
        let tr = match tradeoff_optimum(&dgp, &grid, k, lambda) {
            Ok(t) => t,
            Err(e) => return Err(format!("case {case}: {e}")),
        };
        let gap = tr.objective - best.welfare;
        worst = worst.min(gap);
        if gap < -1e-12 {
            return Err(format!("case {case} ({}): tradeoff {} < constrained {}", dgp.name(), tr.objective, best.welfare));
        }
    }
    Ok(format!("50 configurations, smallest margin {worst:.3e}"))
}

fn tradeoff_trend() -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    let cases: [(&str, DgpSpec, PolicyGrid, f64, f64); 2] = [
        ("prop1", prop1(), prop1_grid(100), Prop1Params::default().binding_k(), PROP1_LAMBDA),
        ("calibrated", calibrated(), calibrated_grid(), 0.0, CAL_LAMBDA),
    ];
    for (name, dgp, grid, k, lambda) in cases {
        let shares: Vec<f64> = [1000, 4000, 16_000]
            .iter()
            .map(|&n| simulate(&dgp, &grid, n, k, 5, vec![RuleSpec::Tradeoff { lambda_bar: lambda }]).rules[0].prob_shortfall)
            .collect();
        ok &= shares.windows(2).all(|w| w[1] <= w[0]) && shares[2] <= 0.05;
        lines.push(format!("{name} {shares:.3?}"));
    }
    check(ok, format!("shortfall share over n = 1000, 4000, 16000: {}", lines.join("; ")))
}

fn mean_by_cell<F: Fn(&RawRecord) -> f64>(recs: &[RawRecord], v: CellId, d: bool, f: F) -> f64 {
    let xs: Vec<f64> = recs.iter().filter(|r| r.v == v && r.d == d).map(f).collect();
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn aipw_orthogonality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let kappa = 6000.0;
    let mut worst = 0.0f64;
    for case in 0..1000 {
        let cells = rng.gen_range(1..5u32);
        let n = rng.gen_range(4 * cells as usize..200);
        let recs: Vec<RawRecord> = (0..n)
            .map(|i| {
                let seeded = i < 4 * cells as usize;
                let v = if seeded { i as u32 % cells } else { rng.gen_range(0..cells) };
                let d = if seeded { (i / cells as usize) % 2 == 0 } else {
                    let p = rng.gen_range(0.2..0.8);
                    rng.gen_bool(p)
                };
                let m = d && rng.gen_bool(0.6);
                let c = if d { rng.gen_range(0.0..20_000.0) } else { 0.0 };
                let x = Covariates::new(rng.gen_range(0.0..500.0), rng.gen_range(0..3)).unwrap();
                RawRecord::new(rng.gen_range(-3.0..3.0), c, m, d, x, CellId(v)).unwrap()
            })
            .collect();
        let scores = match aipw_scores(&recs, kappa, 0.01) {
            Ok(s) => s,
            Err(e) => return Err(format!("case {case}: {e}")),
        };
        for v in (0..cells).map(CellId) {
            let my = |d| mean_by_cell(&recs, v, d, |r| r.y);
            let mz = |d| mean_by_cell(&recs, v, d, |r| r.excess_cost(kappa));
            for d in [false, true] {
                // augmentation = score minus its regression part
                let (mut sy, mut sz, mut count) = (0.0, 0.0, 0.0);
                for (r, s) in recs.iter().zip(&scores) {
                    if r.v == v && r.d == d {
                        sy += s.gamma_star - (my(true) - my(false));
                        sz += (s.r_star - mz(true)) / kappa;
                        count += 1.0;
                    }
                }
                worst = worst.max((sy / count).abs()).max((sz / count).abs());
            }
        }
    }
    check(worst <= 1e-10, format!("1000 fixtures, largest |cell mean| {worst:.2e}"))
}

fn naive_moments(scores: &[ScoredRecord], grid: &PolicyGrid) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let n = scores.len() as f64;
    let g: Vec<Vec<f64>> = grid
        .policies()
        .iter()
        .map(|p| scores.iter().map(|s| f64::from(u8::from(p.assign(&s.x).unwrap()))).collect())
        .collect();
    let w: Vec<f64> = g.iter().map(|gi| scores.iter().zip(gi).map(|(s, a)| s.gamma_star * a).sum::<f64>() / n).collect();
    let b: Vec<f64> = g.iter().map(|gi| scores.iter().zip(gi).map(|(s, a)| s.r_star * a).sum::<f64>() / n).collect();
    let m = grid.len();
    let mut cov = vec![vec![0.0; m]; m];
    for i in 0..m {
        for j in 0..m {
            let mut acc = 0.0;
            for (t, s) in scores.iter().enumerate() {
                acc += (s.r_star * g[i][t] - b[i]) * (s.r_star * g[j][t] - b[j]);
            }
            cov[i][j] = acc / n;
        }
    }
    (w, b, cov)
}

fn moment_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let groups = rng.gen_range(1..4);
        let per_group = [50, 7, 3][groups - 1];
        let cutoffs: Vec<Vec<f64>> = (0..groups)
            .map(|_| {
                let mut c: Vec<f64> = (0..rng.gen_range(1..=per_group)).map(|_| rng.gen_range(0..100) as f64).collect();
                c.sort_by(f64::total_cmp);
                c.dedup();
                c
            })
            .collect();
        let grid = enumerate_grid(&GridSpec::new(cutoffs).unwrap()).unwrap();
        let scores: Vec<ScoredRecord> = (0..rng.gen_range(1..=200))
            .map(|_| ScoredRecord {
                gamma_star: rng.gen_range(-4.0..4.0),
                r_star: rng.gen_range(-4.0..4.0),
                x: Covariates::new(rng.gen_range(0..110) as f64, rng.gen_range(0..groups)).unwrap(),
            })
            .collect();
        let t = moment_table(&scores, &grid, MomentOptions::default()).unwrap();
        let (w, b, cov) = naive_moments(&scores, &grid);
        for i in 0..grid.len() {
            worst = worst.max((t.w_hat[i] - w[i]).abs()).max((t.b_hat[i] - b[i]).abs());
            for j in 0..grid.len() {
                worst = worst.max((t.cov_b[(i, j)] - cov[i][j]).abs());
            }
        }
    }
    check(worst <= 1e-10, format!("100 fixtures, largest deviation {worst:.2e}"))
}

fn calibrated_rule_ordering(s: &Shared) -> Outcome {
    let r = &s.calibrated_all.rules;
    let (sa, mc, tr) = (&r[0], &r[1], &r[2]);
    let ok = mc.prob_infeasible < sa.prob_infeasible
        && sa.prob_infeasible < tr.prob_infeasible
        && tr.avg_welfare_loss < sa.avg_welfare_loss
        && sa.avg_welfare_loss < mc.avg_welfare_loss;
    check(
        ok,
        format!(
            "infeasible: mistake-control {:.3} < sample-analog {:.3} < tradeoff {:.3}; loss: tradeoff {:.3} < sample-analog {:.3} < mistake-control {:.3}",
            mc.prob_infeasible, sa.prob_infeasible, tr.prob_infeasible, tr.avg_welfare_loss, sa.avg_welfare_loss, mc.avg_welfare_loss
        ),
    )
}

fn run_elig(dir: &Path, args: &[&str]) -> Result<Vec<u8>, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_elig"))
        .current_dir(dir)
        .env_remove("ELIG_THREADS")
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr)));
    }
    Ok(out.stdout)
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut csv = String::from("y,c,m,d,income,group,v_wave\n");
    for i in 0..400 {
        let d = rng.gen_bool(0.5);
        let m = d && rng.gen_bool(0.4);
        let c = if d { rng.gen_range(0.0..12_000.0f64).round() } else { 0.0 };
        csv.push_str(&format!(
            "{},{c},{},{},{},{},{}\n",
            u8::from(rng.gen_bool(0.6)),
            u8::from(m),
            u8::from(d),
            rng.gen_range(0..500),
            rng.gen_range(0..4),
            i % 2
        ));
    }
    std::fs::write(dir.path().join("records.csv"), csv).map_err(|e| e.to_string())?;
    let config = "k = 0.0\nseed = 11\ndraws = 3000\n\n[grid]\nstep = 100\n\n[propensity]\ndefault = 0.5\n\n\
                  [simulate]\ndgp = \"calibrated-mixture\"\nn = 1000\niters = 20\nrules = [\"sample-analog\", \"mistake-control\", \"tradeoff\"]\n\
                  schedule = false\nshortfall = 0.1\n\n[paths]\ndata = \"records.csv\"\nscores = \"scores.csv\"\n";
    std::fs::write(dir.path().join("run.toml"), config).map_err(|e| e.to_string())?;

    let commands: [&[&str]; 7] = [
        &["score", "--config", "run.toml"],
        &["score", "--config", "run.toml", "--mode", "aipw"],
        &["solve", "--config", "run.toml", "--rule", "sample-analog"],
        &["solve", "--config", "run.toml", "--rule", "mistake-control", "--moments", "m.json"],
        &["solve", "--config", "run.toml", "--rule", "tradeoff"],
        &["critval", "--config", "run.toml", "--moments", "m.json"],
        &["simulate", "--config", "run.toml"],
    ];
    for args in commands {
        let first = run_elig(dir.path(), args)?;
        let second = run_elig(dir.path(), args)?;
        if first != second || first.is_empty() {
            return Err(format!("{args:?} differs between runs"));
        }
    }
    Ok(format!("{} commands byte-identical on rerun", commands.len()))
}

fn main() {
    // `cargo test` passes harness flags; a filter argument that matches
    // nothing here should not run the suite.
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    if !filter.is_empty() && !filter.iter().any(|f| "acceptance".contains(f.as_str())) {
        return;
    }
    let start = Instant::now();
    let mut results: Vec<(&str, Outcome)> = Vec::new();

    results.push(("1 closed-form critical values", closed_form_critical_values()));

    let shared = Shared {
        prop1_mc: simulate(&prop1(), &prop1_grid(100), 4000, Prop1Params::default().binding_k(), 1, vec![mistake_control()]),
        calibrated_all: simulate(
            &calibrated(),
            &calibrated_grid(),
            10_135,
            0.0,
            2,
            vec![RuleSpec::SampleAnalog, mistake_control(), RuleSpec::Tradeoff { lambda_bar: CAL_LAMBDA }],
        ),
    };
    results.push(("2 mistake-control feasibility guarantee", feasibility_guarantee(&shared)));
    results.push(("3 sample-analog infeasible and suboptimal", sample_analog_failure()));
    results.push(("4 trade-off optimum dominates constrained optimum", tradeoff_dominance()));
    results.push(("5 trade-off shortfall vanishes in n", tradeoff_trend()));
    results.push(("6 aipw residual orthogonality", aipw_orthogonality()));
    results.push(("7 moments match naive double loop", moment_equivalence()));
    results.push(("8 rule ordering on calibrated mixture", calibrated_rule_ordering(&shared)));
    results.push(("9 byte-identical reports on rerun", determinism()));

    let mut failed = 0;
    for (name, r) in &results {
        match r {
            Ok(d) => println!("PASS  criterion {name}: {d}"),
            Err(d) => {
                failed += 1;
                println!("FAIL  criterion {name}: {d}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed ({:.1}s)",
        results.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
