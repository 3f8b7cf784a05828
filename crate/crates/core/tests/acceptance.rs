//! Acceptance criteria 1 to 9, one PASS/FAIL line each.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use itertools::Itertools;
use ldcc::allocation::{allocate, AllocationProblem};
use ldcc::beamforming::{
    random_search_objective, solve_wmm_sca, solve_zero_forcing, BeamProblem, BeamformerSolution, Method, ScaOptions,
    Start,
};
use ldcc::combinatorics::subsets;
use ldcc::config::ScenarioConfig;
use ldcc::delivery::{
    build_multicast_plan, build_phantom_plan, common_gain, user_demands, verify, verify_completeness, Mode,
    SegmentId,
};
use ldcc::environment::{rayleigh_vector, RateMap};
use ldcc::experiments::{run_cdf_experiment, run_sweep, AggregateResult, RunOptions, Scenario, SchemeName, SweepParameter, SweepSpec};
use ldcc::metrics::{approx_total_time, closed_form_total_time, total_time};
use ldcc::placement::{CacheLayout, Part};
use ldcc::rational::{frac, to_f64};
use ldcc::stats::{bootstrap_confidence, finite_mean, iqr, percentile, pick, sorted};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

const FIVE_STATE_RATES: [f64; 5] = [3000.0, 2000.0, 1000.0, 2000.0, 3000.0];

fn criterion_1() -> Outcome {
    let want = [0.25, 0.5, 0.75, 0.5, 0.25];
    let mut worst = 0.0f64;
    for phi in [0.5, 1e6 * 0.5] {
        let a = allocate(&AllocationProblem { rates: FIVE_STATE_RATES.to_vec(), total_memory: 2.25, user_count: 4, tradeoff: phi })
            .map_err(err)?;
        for (got, w) in a.m.iter().zip(want) {
            worst = worst.max((got - w).abs());
        }
    }
    check(worst <= 1e-6, || format!("max |m - m*| = {worst:e}"))?;
    Ok(format!("max |m - m*| = {worst:.1e} for phi = alpha/K and 1e6 alpha/K"))
}

fn diagonal(gains: &[f64]) -> Result<(CacheLayout, Vec<ldcc::delivery::UserDemand>), String> {
    let layout = CacheLayout::from_gains(gains, gains.len()).map_err(err)?;
    let demands = user_demands(&layout, &(0..gains.len()).collect::<Vec<_>>()).map_err(err)?;
    Ok((layout, demands))
}

fn completeness(layout: &CacheLayout, demands: &[ldcc::delivery::UserDemand], alpha: usize) -> Result<bool, String> {
    let t_hat = common_gain(demands);
    if t_hat + alpha > layout.user_count {
        return Ok(false);
    }
    let plan = build_multicast_plan(demands, layout, alpha, t_hat).map_err(err)?;
    let check = verify_completeness(&plan, demands, layout).map_err(err)?;
    for d in demands {
        if check.delivered[d.user] != d.missing {
            return Err(format!("user {} got {} of {}", d.user + 1, check.delivered[d.user], d.missing));
        }
    }
    Ok(true)
}

fn criterion_2() -> Outcome {
    let mut integer = 0;
    for k in 1..=5 {
        for alpha in 1..=2 {
            for t in (0..=k).combinations_with_replacement(k) {
                let gains: Vec<f64> = t.iter().map(|&g| g as f64).collect();
                let (layout, demands) = diagonal(&gains)?;
                if completeness(&layout, &demands, alpha).map_err(|e| format!("t = {t:?}, alpha = {alpha}: {e}"))? {
                    integer += 1;
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut random = 0;
    while random < 200 {
        let k = rng.gen_range(2..=6);
        let alpha = rng.gen_range(1..=2);
        let states = rng.gen_range(1..=k);
        let gains: Vec<f64> = (0..states).map(|_| rng.gen_range(0.0..k as f64)).collect();
        let layout = CacheLayout::from_gains(&gains, k).map_err(err)?;
        let user_states: Vec<usize> = (0..k).map(|_| rng.gen_range(0..states)).collect();
        let demands = user_demands(&layout, &user_states).map_err(err)?;
        if completeness(&layout, &demands, alpha).map_err(|e| format!("gains {gains:?}, states {user_states:?}: {e}"))? {
            random += 1;
        }
    }
    Ok(format!("{integer} integer instances (K <= 5) and {random} non-integer instances (K <= 6) exact"))
}

fn criterion_3() -> Outcome {
    let layout = CacheLayout::from_gains(&[1.0, 2.0, 3.0, 2.0, 1.0], 4).map_err(err)?;
    let demands = user_demands(&layout, &[0, 1, 3, 4]).map_err(err)?;
    let plan = build_multicast_plan(&demands, &layout, 2, 1).map_err(err)?;
    let shape: Vec<usize> = plan.transmissions.iter().map(|t| t.codewords.len()).collect();
    check(shape == [3, 3, 3, 3], || format!("codewords per transmission {shape:?}"))?;
    let mut factors = vec![0; 4];
    let mut chi = vec![0; 4];
    for (_, _, term) in plan.terms() {
        factors[term.user] = term.segments[0].pieces;
        chi[term.user] = term.segments.len();
    }
    check(factors == [2, 4, 4, 2], || format!("seg factors {factors:?}"))?;
    check(chi == [1, 2, 2, 1], || format!("chi {chi:?}"))?;
    let want = [frac(1, 8), frac(1, 12), frac(1, 12), frac(1, 8)];
    for tx in &plan.transmissions {
        for (u, w) in tx.weights() {
            check(w == want[u], || format!("payload of user {} is {w}", u + 1))?;
        }
    }
    verify_completeness(&plan, &demands, &layout).map_err(err)?;
    Ok("4 x 3 codewords, seg factors (2,4,4,2), chi (1,2,2,1), c = (1/8,1/12,1/12,1/8)".into())
}

fn criterion_4() -> Outcome {
    let (layout, demands) = diagonal(&[3.0, 3.0, 3.0, 1.0])?;
    let plan = build_phantom_plan(&demands, &layout, 2, 3).map_err(err)?;
    check(plan.phantom_excluded == [3], || format!("K_p = {:?}", plan.phantom_excluded))?;
    let multicast: Vec<_> = plan.transmissions.iter().filter(|t| t.mode == Mode::PhantomMulticast).collect();
    check(multicast.len() == 1, || format!("{} multicast transmissions", multicast.len()))?;
    check(multicast[0].codewords.len() == 1 && multicast[0].codewords[0].recipients() == [0, 1, 2], || {
        "multicast codeword is not {1,2,3}".into()
    })?;
    let unicast: Vec<_> = plan.transmissions.iter().filter(|t| t.mode != Mode::PhantomMulticast).collect();
    let unicast_total: Vec<(usize, String)> =
        unicast.iter().flat_map(|t| t.codewords.iter().flat_map(|c| c.terms.iter().map(|x| (x.user, x.size.to_string())))).collect();
    check(unicast_total == [(3, "3/4".to_string())], || format!("unicast terms {unicast_total:?}"))?;
    let c = verify(&plan, &demands, &layout).map_err(err)?;
    check(c.is_complete(), || "verifier reports residuals".into())?;
    Ok("K_p = {4}; one codeword to {1,2,3}; 3/4 unicast to user 4; verifier complete".into())
}

fn criterion_5() -> Outcome {
    let layout = CacheLayout::from_gains(&[1.2, 2.0, 3.0, 2.0, 1.0], 4).map_err(err)?;
    let split = layout.split(0).map_err(err)?;
    let sizes = (split.part(Part::Lower).map(|p| to_f64(&p.size)), split.part(Part::Upper).map(|p| to_f64(&p.size)));
    check(sizes == (Some(0.8), Some(0.2)), || format!("part sizes {sizes:?}"))?;
    let demands = user_demands(&layout, &[0, 1, 3, 4]).map_err(err)?;
    let plan = build_multicast_plan(&demands, &layout, 2, 1).map_err(err)?;
    let x123 = &plan.transmissions[0].codewords[0];
    let term = x123.term(0).ok_or("x_123 has no term for user 1")?;
    let names: Vec<String> = term.segments.iter().map(SegmentId::name).collect();
    let parts: Vec<Part> = term.segments.iter().map(|s| s.subfile.part).collect();
    check(
        names == ["s1[1]_{2}^1", "s1[2]_{23}^1", "s1[2]_{24}^1"] && parts == [Part::Lower, Part::Upper, Part::Upper],
        || format!("x_123 for user 1: {names:?}"),
    )?;
    let c = verify_completeness(&plan, &demands, &layout).map_err(err)?;
    check(c.delivered[0] == frac(7, 10), || format!("user 1 total {}", c.delivered[0]))?;
    Ok(format!("parts (0.8, 0.2); x_123 user 1 = {}; user 1 total 7/10", names.join(" + ")))
}

fn random_problem(rng: &mut ChaCha8Rng, antennas: usize, users: usize, alpha: usize) -> Result<BeamProblem, String> {
    let gain = users.saturating_sub(alpha);
    let channels = (0..users).map(|_| rayleigh_vector(antennas, rng)).collect();
    let weights = (0..users).map(|_| rng.gen_range(0.5..2.0)).collect();
    let snr = 10f64.powf(rng.gen_range(0.0..2.0));
    BeamProblem::new((0..users).collect(), channels, weights, subsets(users, gain + 1), snr, 1.0).map_err(err)
}

fn criterion_6() -> Outcome {
    // (a) single user
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let mut worst_a = 0.0f64;
    for l in [1, 2, 4, 8] {
        let h = rayleigh_vector(l, &mut rng);
        let p = BeamProblem::new(vec![0], vec![h.clone()], vec![0.7], vec![vec![0]], 5.0, 0.5).map_err(err)?;
        let sol = solve_wmm_sca(&p, &ScaOptions::default()).map_err(err)?;
        let cap = (1.0 + 5.0 * h.iter().map(|x| x.norm_sqr()).sum::<f64>() / 0.5).log2();
        worst_a = worst_a.max((sol.rates[0] - cap).abs() / cap);
    }
    check(worst_a <= 1e-4, || format!("(a) single-user relative error {worst_a:e}"))?;

    // (b) monotone trace and (c) at least the zero-forcing start
    let zf_start = ScaOptions { start: Start::ZeroForcing, ..ScaOptions::default() };
    let mut worst_drop = 0.0f64;
    let mut worst_zf = f64::INFINITY;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let l = if seed % 2 == 0 { 2 } else { 4 };
        let users = rng.gen_range(1..=4);
        let alpha = rng.gen_range(1..=2.min(users).min(l));
        let p = random_problem(&mut rng, l, users, alpha)?;
        for opts in [ScaOptions::default(), zf_start] {
            let sol = solve_wmm_sca(&p, &opts).map_err(|e| format!("seed {seed}: {e}"))?;
            for pair in sol.trace.windows(2) {
                worst_drop = worst_drop.max(pair[0].objective - pair[1].objective);
            }
        }
        let zf = solve_zero_forcing(&p).map_err(err)?;
        let sca = solve_wmm_sca(&p, &zf_start).map_err(err)?;
        worst_zf = worst_zf.min(sca.objective - zf.objective);
    }
    check(worst_drop <= 1e-9, || format!("(b) objective decreased by {worst_drop:e}"))?;
    check(worst_zf >= -1e-6, || format!("(c) SCA below ZF by {:e}", -worst_zf))?;

    // (d) randomized-search oracle
    let mut worst_gap = f64::NEG_INFINITY;
    for seed in 0..10u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(5000 + seed);
        let p = random_problem(&mut rng, 2, 3, 2)?;
        let sca = solve_wmm_sca(&p, &ScaOptions::default()).map_err(err)?;
        let oracle = random_search_objective(&p, 100_000, seed);
        worst_gap = worst_gap.max((oracle - sca.objective) / oracle);
    }
    check(worst_gap <= 0.02, || format!("(d) SCA {:.2}% below the random-search oracle", 100.0 * worst_gap))?;
    Ok(format!(
        "(a) rel err {worst_a:.1e}; (b) max decrease {worst_drop:.1e}; (c) min SCA - ZF {worst_zf:.2e}; (d) max shortfall {:.3}%",
        100.0 * worst_gap.max(0.0)
    ))
}

fn fake_solution(users: Vec<usize>, rates: Vec<f64>) -> BeamformerSolution {
    BeamformerSolution {
        method: Method::Sca,
        users,
        precoders: Vec::new(),
        sinr: Vec::new(),
        rates,
        objective: 0.0,
        trace: Vec::new(),
        nulling_exact: true,
        rejected_steps: 0,
        stalled: false,
    }
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut plans = 0;
    let mut worst = 0.0f64;
    for k in 2..=4 {
        for alpha in 1..=2 {
            for t in (0..=k).combinations_with_replacement(k) {
                let gains: Vec<f64> = t.iter().map(|&g| g as f64).collect();
                let (layout, demands) = diagonal(&gains)?;
                let t_hat = common_gain(&demands);
                if t_hat + alpha > k || demands.iter().all(|d| d.missing == frac(0, 1)) {
                    continue;
                }
                let plan = build_multicast_plan(&demands, &layout, alpha, t_hat).map_err(err)?;
                let rates: Vec<Vec<f64>> =
                    plan.transmissions.iter().map(|_| (0..k).map(|_| rng.gen_range(0.1..10.0)).collect()).collect();
                let solutions: Vec<BeamformerSolution> = plan
                    .transmissions
                    .iter()
                    .zip(&rates)
                    .map(|(tx, r)| fake_solution(tx.users.clone(), tx.users.iter().map(|&u| r[u]).collect()))
                    .collect();
                let summed = total_time(&plan, &solutions, "identity", 0).map_err(err)?.total_time;
                let sets: Vec<Vec<usize>> = plan.transmissions.iter().map(|t| t.users.clone()).collect();
                let missing: Vec<f64> = demands.iter().map(|d| to_f64(&d.missing)).collect();
                let closed = closed_form_total_time(&sets, &missing, &rates, t_hat, alpha);
                worst = worst.max((summed - closed).abs() / closed.max(1e-300));
                plans += 1;
            }
        }
    }
    check(worst <= 1e-12, || format!("summed vs closed form relative gap {worst:e}"))?;
    let alloc = allocate(&AllocationProblem { rates: FIVE_STATE_RATES.to_vec(), total_memory: 2.25, user_count: 4, tradeoff: 0.5 })
        .map_err(err)?;
    let approx = approx_total_time(&alloc, &RateMap::new(FIVE_STATE_RATES.to_vec()).map_err(err)?, 4, 2).map_err(err)?;
    // 3.333e-4 is the four-digit rendering of 1/3000
    check(format!("{approx:.3e}") == "3.333e-4", || format!("approximation {approx:e}"))?;
    check((approx - 1.0 / 3000.0).abs() <= 1e-9, || format!("approximation {approx:e} vs 1/3000"))?;
    Ok(format!("{plans} plans, max relative gap {worst:.1e}; approximation {approx:.6e}"))
}

fn desk() -> ScenarioConfig {
    ScenarioConfig::default()
}

const RESAMPLES: usize = 1000;
const CONFIDENCE: f64 = 0.95;

fn times(r: &AggregateResult, s: SchemeName) -> Result<Vec<f64>, String> {
    Ok(r.scheme(s).ok_or_else(|| format!("missing scheme {s}"))?.times())
}

fn criterion_8() -> Outcome {
    let cfg = desk();
    let scenario = Scenario::prepare(&cfg).map_err(err)?;
    let schemes = [SchemeName::ProposedMulticastAware, SchemeName::MsUniform];
    let r = run_cdf_experiment(&scenario, &schemes, 200, cfg.experiment.seed, RunOptions::default()).map_err(err)?;
    let ms = times(&r, SchemeName::MsUniform)?;
    let pma = times(&r, SchemeName::ProposedMulticastAware)?;
    let p95 = |x: &[f64]| percentile(&sorted(x), 0.95);
    let spread = |x: &[f64]| iqr(&sorted(x));
    let conf_a = bootstrap_confidence(ms.len(), RESAMPLES, 81, |idx| p95(&pick(&ms, idx)) >= p95(&pick(&pma, idx)));
    let conf_b = bootstrap_confidence(ms.len(), RESAMPLES, 82, |idx| spread(&pick(&ms, idx)) >= spread(&pick(&pma, idx)));
    let detail = format!(
        "P95 ms {:.4} vs pma {:.4} (conf {conf_a:.3}); IQR ms {:.4} vs pma {:.4} (conf {conf_b:.3})",
        p95(&ms),
        p95(&pma),
        spread(&ms),
        spread(&pma)
    );
    check(conf_a >= CONFIDENCE && conf_b >= CONFIDENCE, || detail.clone())?;
    Ok(detail)
}

fn gaps(points: &[AggregateResult]) -> Result<Vec<(Vec<f64>, Vec<f64>)>, String> {
    points.iter().map(|p| Ok((times(p, SchemeName::MsUniform)?, times(p, SchemeName::ProposedMulticastAware)?))).collect()
}

fn gap_at(pair: &(Vec<f64>, Vec<f64>), idx: &[usize]) -> f64 {
    finite_mean(&pick(&pair.0, idx)) / finite_mean(&pick(&pair.1, idx))
}

fn criterion_9() -> Outcome {
    let cfg = desk();
    let schemes = [SchemeName::ProposedMulticastAware, SchemeName::MsUniform];
    let drops = 200;
    let sigma = SweepSpec { parameter: SweepParameter::Sigma, values: vec![2.0, 12.0], drops: Some(drops) };
    let snr = SweepSpec { parameter: SweepParameter::BorderSnr, values: vec![-5.0, 5.0, 15.0], drops: Some(drops) };
    let s = gaps(&run_sweep(&cfg, &sigma, &schemes, cfg.experiment.seed, RunOptions::default()).map_err(err)?)?;
    let b = gaps(&run_sweep(&cfg, &snr, &schemes, cfg.experiment.seed, RunOptions::default()).map_err(err)?)?;
    let all: Vec<usize> = (0..drops).collect();
    let conf_a = bootstrap_confidence(drops, RESAMPLES, 91, |idx| gap_at(&s[1], idx) > gap_at(&s[0], idx));
    let conf_b = bootstrap_confidence(drops, RESAMPLES, 92, |idx| {
        gap_at(&b[0], idx) > gap_at(&b[1], idx) && gap_at(&b[1], idx) > gap_at(&b[2], idx)
    });
    let detail = format!(
        "gap sigma 2 -> 12: {:.3} -> {:.3} (conf {conf_a:.3}); gap SNR -5/5/15: {:.3}/{:.3}/{:.3} (conf {conf_b:.3})",
        gap_at(&s[0], &all),
        gap_at(&s[1], &all),
        gap_at(&b[0], &all),
        gap_at(&b[1], &all),
        gap_at(&b[2], &all)
    );
    check(conf_a >= CONFIDENCE && conf_b >= CONFIDENCE, || detail.clone())?;
    Ok(detail)
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Duration); 9] = [
        ("five-state allocation", criterion_1, Duration::from_secs(1)),
        ("completeness suite", criterion_2, Duration::from_secs(120)),
        ("example-2 plan", criterion_3, Duration::from_secs(1)),
        ("example-3 phantom plan", criterion_4, Duration::from_secs(1)),
        ("memory-sharing example", criterion_5, Duration::from_secs(1)),
        ("beamformer correctness", criterion_6, Duration::from_secs(600)),
        ("delivery-time identities", criterion_7, Duration::from_secs(1)),
        ("desk-scale CDF direction", criterion_8, Duration::from_secs(900)),
        ("trend checks", criterion_9, Duration::from_secs(1200)),
    ];
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > limit => Err(format!("{detail}; took {elapsed:.2?}, limit {limit:.0?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("PASS {} {name} [{elapsed:.2?}]: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name} [{elapsed:.2?}]: {detail}", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
