//! Acceptance criteria. Each criterion prints one PASS/FAIL line; the binary
//! exits nonzero if any criterion fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use shapley_core::exact::{
    linear_bounds_exact, shapley_exact, shapley_exact_coalitions, shapley_exact_permutations, stratum_mean_exact,
};
use shapley_core::game::{make_majority, table_from_values, Coalition, FamilyGame, FnGame, Game};
use shapley_core::harness::{clt_demo, coverage_experiment, random_table_game, staircase_airport, CoverageMethod};
use shapley_core::srs::{chebyshev_sample_size, estimate_srs, hoeffding_sample_size};
use shapley_core::stratified::{
    allocate_samples, estimate_stratified, resolve_linear_bounds, srs_error_floor, stratified_beats_srs,
    stratified_error_bound,
};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn timed(limit: Duration, run: impl FnOnce() -> Outcome) -> Outcome {
    let start = Instant::now();
    let mut out = run();
    let elapsed = start.elapsed();
    out.detail = format!("{} [{:.2?} of {:?}]", out.detail, elapsed, limit);
    out.passed &= elapsed < limit;
    out
}

fn table(g: &FamilyGame) -> Vec<f64> {
    (0..1u64 << g.players()).map(|m| g.worth(Coalition::from_mask(m))).collect()
}

fn sample_std(xs: &[f64]) -> f64 {
    let m = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / m;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
}

fn axiom_suite() -> Outcome {
    timed(Duration::from_secs(60), || {
        let mut worst_eff = 0.0f64;
        let mut worst_sym = 0.0f64;
        let mut worst_dummy = 0.0f64;
        let mut worst_add = 0.0f64;
        for t in 0..500u64 {
            let n = 2 + (t % 7) as usize;
            let g = random_table_game(n, t).unwrap();
            let phi = shapley_exact(&g).unwrap();
            let grand = g.worth(Coalition::grand(n));
            worst_eff = worst_eff.max((phi.iter().sum::<f64>() - grand).abs());

            // players 0 and 1 made interchangeable by averaging over their swap
            let swap = |c: Coalition| {
                let (a, b) = (c.contains(0), c.contains(1));
                let c = c.without(0).without(1);
                let c = if a { c.with(1) } else { c };
                if b { c.with(0) } else { c }
            };
            let sym = FnGame::new(n, |c: Coalition| 0.5 * (g.worth(c) + g.worth(swap(c))));
            worst_sym = worst_sym.max(
                (shapley_exact_coalitions(&sym, 0).unwrap() - shapley_exact_coalitions(&sym, 1).unwrap()).abs(),
            );

            // player n - 1 added as a dummy to an (n-1)-player game
            let base = random_table_game(n - 1, t + 10_000).unwrap();
            let dummy = FnGame::new(n, |c: Coalition| base.worth(c.without(n - 1)));
            worst_dummy = worst_dummy.max(shapley_exact_coalitions(&dummy, n - 1).unwrap().abs());

            let other = random_table_game(n, t + 20_000).unwrap();
            let (tg, to) = (table(&g), table(&other));
            let sum = table_from_values(n, tg.iter().zip(&to).map(|(x, y)| x + y).collect()).unwrap();
            let phi_other = shapley_exact(&other).unwrap();
            for (i, phi_sum) in shapley_exact(&sum).unwrap().iter().enumerate() {
                worst_add = worst_add.max((phi_sum - phi[i] - phi_other[i]).abs());
            }
        }
        outcome(
            worst_eff <= 1e-9 && worst_sym <= 1e-9 && worst_dummy <= 1e-12 && worst_add <= 1e-9,
            format!(
                "500 games: efficiency {worst_eff:.1e}, symmetry {worst_sym:.1e}, dummy {worst_dummy:.1e}, additivity {worst_add:.1e}"
            ),
        )
    })
}

fn formulation_equivalence() -> Outcome {
    let mut worst = 0.0f64;
    for t in 0..200u64 {
        let n = 1 + (t % 8) as usize;
        let g = random_table_game(n, 50_000 + t).unwrap();
        for i in 0..n {
            let a = shapley_exact_permutations(&g, i).unwrap();
            let b = shapley_exact_coalitions(&g, i).unwrap();
            worst = worst.max((a - b).abs());
        }
    }
    outcome(worst <= 1e-12, format!("200 games, max |perm - coalition| = {worst:.1e}"))
}

fn stratum_decomposition() -> Outcome {
    let mut worst = 0.0f64;
    let mut checked = 0;
    for n in 1..=10usize {
        for rep in 0..5u64 {
            let g = random_table_game(n, 60_000 + 10 * n as u64 + rep).unwrap();
            for i in 0..n {
                let mean: f64 = (0..n).map(|k| stratum_mean_exact(&g, i, k).unwrap().mean).sum::<f64>() / n as f64;
                worst = worst.max((mean - shapley_exact_coalitions(&g, i).unwrap()).abs());
                checked += 1;
            }
        }
    }
    outcome(worst <= 1e-12, format!("{checked} (game, player) pairs n <= 10, max gap {worst:.1e}"))
}

fn sample_size_formulas() -> Outcome {
    let c = chebyshev_sample_size(1.0, 0.1, 0.05).unwrap();
    let h = hoeffding_sample_size(1.0, 0.1, 0.05).unwrap();
    outcome(c == 2000 && h == 185, format!("chebyshev = {c}, hoeffding = {h}"))
}

fn allocation() -> Outcome {
    let plan = allocate_samples(100, 4).unwrap();
    let mut ok = plan.counts == vec![14, 23, 28, 35];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut violations = 0;
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=200usize);
        let m = rng.gen_range(n as u64..=1_000_000);
        let plan = allocate_samples(m, n).unwrap();
        let conserved = plan.counts.iter().sum::<u64>() == m;
        let half_optimal = plan
            .counts
            .iter()
            .zip(&plan.fractional)
            .all(|(&c, &f)| f < 1.0 || c as f64 >= f / 2.0);
        if !(conserved && half_optimal) {
            violations += 1;
        }
    }
    ok &= violations == 0;
    outcome(ok, format!("(100, 4) -> {:?}; 10^4 random plans, {violations} violations", plan.counts))
}

fn aggregate_bound_value() -> Outcome {
    let b = stratified_error_bound(1.0, 100, 4, 0.05).unwrap();
    outcome((b - 0.56215).abs() <= 1e-4, format!("bound(1, 100, 4, 0.05) = {b:.6}"))
}

fn coverage() -> Outcome {
    timed(Duration::from_secs(300), || {
        const TRIALS: u64 = 2000;
        let games: [(&str, FamilyGame, f64, Vec<usize>); 2] = [
            ("majority-3", make_majority(3).unwrap(), 0.1, vec![0]),
            ("airport-8", staircase_airport(8).unwrap(), 0.05, (0..8).collect()),
        ];
        let mut ok = true;
        let mut worst = Vec::new();
        for (name, game, epsilon, players) in &games {
            for (label, method, eps) in [
                ("chebyshev", CoverageMethod::Chebyshev, *epsilon),
                ("hoeffding", CoverageMethod::Hoeffding, *epsilon),
                ("stratified", CoverageMethod::Stratified { exhaust_saturated: false }, 5.0 * epsilon),
            ] {
                let mut max_rate = 0.0f64;
                for &player in players {
                    let r = coverage_experiment(game, player, method, eps, 0.05, TRIALS, 1234).unwrap();
                    ok &= r.within_guarantee();
                    max_rate = max_rate.max(r.empirical_miss_rate);
                }
                worst.push(format!("{name}/{label} {max_rate:.4}"));
            }
        }
        let limit = 0.05 + 3.0 * (0.05f64 * 0.95 / TRIALS as f64).sqrt();
        outcome(ok, format!("miss rates (limit {limit:.4}): {}", worst.join(", ")))
    })
}

fn range_bound() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0;
    for n in 1..=10usize {
        for rep in 0..10u64 {
            let g = random_table_game(n, 70_000 + 10 * n as u64 + rep).unwrap();
            let bounds = linear_bounds_exact(&g).unwrap();
            for i in 0..n {
                for k in 0..n {
                    let s = stratum_mean_exact(&g, i, k).unwrap();
                    worst = worst.max(s.range - bounds.stratum_range_bound(k));
                    checked += 1;
                }
            }
        }
    }
    outcome(worst <= 1e-12, format!("{checked} strata, max r_k - d(k+1) = {worst:.3}"))
}

fn comparison_claim() -> Outcome {
    timed(Duration::from_secs(1), || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut failures = 0;
        let mut checked = 0;
        for n in 1..=50usize {
            let threshold = ((n + 1) * (n + 1)) as u64 / 4;
            for beta in [0.01, 0.05, 0.1, 0.5] {
                let mut ms = vec![threshold + 1];
                ms.extend((0..20).map(|_| rng.gen_range(threshold + 1..=threshold * 1000 + 10)));
                for m in ms {
                    assert!(stratified_beats_srs(m, n));
                    let d = rng.gen_range(0.01..100.0);
                    let strat = stratified_error_bound(d, m, n, beta).unwrap();
                    let floor = srs_error_floor(d, n, beta).unwrap();
                    if !(strat < floor) {
                        failures += 1;
                    }
                    checked += 1;
                }
            }
        }
        outcome(failures == 0, format!("{checked} (n, m, beta, d) cases, {failures} failures"))
    })
}

fn clt_critique() -> Outcome {
    let demo = clt_demo(2000, 77).unwrap();
    let clt = demo.clt.empirical_miss_rate;
    let hoeffding = demo.hoeffding.empirical_miss_rate;
    outcome(
        clt > demo.clt.guaranteed_delta && demo.hoeffding.within_guarantee(),
        format!("clt-demo: CLT miss rate {clt:.4} > 0.05, Hoeffding miss rate {hoeffding:.4}"),
    )
}

fn variance_reduction() -> Outcome {
    const SEEDS: u64 = 500;
    const STRATIFIED_M: u64 = 200;
    let n = 10;
    let game = staircase_airport(n).unwrap();
    let bounds = resolve_linear_bounds(&game).unwrap();
    // both sides get the same oracle budget for estimating all n players
    let budget = 2 * STRATIFIED_M * n as u64;
    let srs_m = budget / (n as u64 + 1);
    let srs_runs: Vec<Vec<f64>> = (0..SEEDS).map(|s| estimate_srs(&game, srs_m, s).unwrap().per_player).collect();
    let mut ok = true;
    let mut ratios = Vec::new();
    for i in 0..n {
        let strat: Vec<f64> = (0..SEEDS)
            .map(|s| estimate_stratified(&game, i, STRATIFIED_M, 0.05, bounds, s).unwrap().global_estimate)
            .collect();
        let srs: Vec<f64> = srs_runs.iter().map(|r| r[i]).collect();
        let (sd_strat, sd_srs) = (sample_std(&strat), sample_std(&srs));
        ok &= sd_strat <= sd_srs;
        ratios.push(sd_strat / sd_srs);
    }
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    outcome(
        ok,
        format!("airport-10, {budget} oracle calls per run: max sd(stratified)/sd(srs) = {max_ratio:.3}"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("axiom suite", axiom_suite),
        ("formulation equivalence", formulation_equivalence),
        ("stratum decomposition", stratum_decomposition),
        ("sample-size formulas", sample_size_formulas),
        ("allocation", allocation),
        ("aggregate stratified bound value", aggregate_bound_value),
        ("coverage", coverage),
        ("stratum range bound", range_bound),
        ("stratified vs srs comparison", comparison_claim),
        ("clt critique demonstration", clt_critique),
        ("variance reduction", variance_reduction),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        let out = run();
        println!("[{}] {name}: {}", if out.passed { "PASS" } else { "FAIL" }, out.detail);
        if !out.passed {
            failed += 1;
        }
    }
    println!("{} of {} acceptance criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
