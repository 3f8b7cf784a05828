//! Monte Carlo comparison of caching schemes over random user drops.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::allocation::{allocate, uniform_allocation, AllocationProblem, MemoryAllocation, TradeoffMode};
use crate::beamforming::{solve_wmm_sca, BeamProblem};
use crate::config::ScenarioConfig;
use crate::delivery::{
    build_capped_multicast_plan, build_phantom_plan, build_unicast_plan, user_demands, TransmissionPlan,
};
use crate::environment::{build_grid, calibrate_power, draw_channels, estimate_rate_map, RateMap, StateGrid};
use crate::error::{Error, Result};
use crate::metrics::{total_time, DeliveryReport};
use crate::placement::CacheLayout;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    ProposedLocalFirstUnicast,
    ProposedLocalFirst,
    ProposedMulticastAware,
    MsUniform,
    /// `proposed_local_first` with plain multicast delivery.
    ProposedLocalFirstNoPhantom,
    /// `proposed_multicast_aware` with plain multicast delivery.
    ProposedMulticastAwareNoPhantom,
}

impl SchemeName {
    pub const MAIN: [SchemeName; 4] = [
        SchemeName::ProposedLocalFirstUnicast,
        SchemeName::ProposedLocalFirst,
        SchemeName::ProposedMulticastAware,
        SchemeName::MsUniform,
    ];
    pub const ALL: [SchemeName; 6] = [
        SchemeName::ProposedLocalFirstUnicast,
        SchemeName::ProposedLocalFirst,
        SchemeName::ProposedMulticastAware,
        SchemeName::MsUniform,
        SchemeName::ProposedLocalFirstNoPhantom,
        SchemeName::ProposedMulticastAwareNoPhantom,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeName::ProposedLocalFirstUnicast => "proposed_local_first_unicast",
            SchemeName::ProposedLocalFirst => "proposed_local_first",
            SchemeName::ProposedMulticastAware => "proposed_multicast_aware",
            SchemeName::MsUniform => "ms_uniform",
            SchemeName::ProposedLocalFirstNoPhantom => "proposed_local_first_no_phantom",
            SchemeName::ProposedMulticastAwareNoPhantom => "proposed_multicast_aware_no_phantom",
        }
    }
}

impl fmt::Display for SchemeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum AllocationRule {
    Uniform,
    Optimized(TradeoffMode),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeliveryRule {
    Unicast,
    Multicast,
    Phantom,
}

/// What a scheme name stands for.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeSpec {
    pub name: SchemeName,
    pub allocation: AllocationRule,
    pub delivery: DeliveryRule,
}

impl SchemeSpec {
    pub fn new(name: SchemeName, local_first_factor: f64) -> Self {
        let local_first = AllocationRule::Optimized(TradeoffMode::LocalFirst { factor: local_first_factor });
        let aware = AllocationRule::Optimized(TradeoffMode::MulticastAware);
        let (allocation, delivery) = match name {
            SchemeName::ProposedLocalFirstUnicast => (local_first, DeliveryRule::Unicast),
            SchemeName::ProposedLocalFirst => (local_first, DeliveryRule::Phantom),
            SchemeName::ProposedMulticastAware => (aware, DeliveryRule::Phantom),
            SchemeName::MsUniform => (AllocationRule::Uniform, DeliveryRule::Multicast),
            SchemeName::ProposedLocalFirstNoPhantom => (local_first, DeliveryRule::Multicast),
            SchemeName::ProposedMulticastAwareNoPhantom => (aware, DeliveryRule::Multicast),
        };
        Self { name, allocation, delivery }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    Sigma,
    BorderSnr,
    Alpha,
    MOverS,
    K,
}

impl SweepParameter {
    pub fn as_str(&self) -> &'static str {
        match self {
            SweepParameter::Sigma => "sigma",
            SweepParameter::BorderSnr => "border_snr",
            SweepParameter::Alpha => "alpha",
            SweepParameter::MOverS => "m_over_s",
            SweepParameter::K => "k",
        }
    }

    fn is_integer(&self) -> bool {
        matches!(self, SweepParameter::Alpha | SweepParameter::K)
    }

    /// Copy of `base` with this parameter set to `value`.
    pub fn apply(&self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        if self.is_integer() && (value.fract() != 0.0 || value < 1.0) {
            return Err(Error::Config(format!("{} takes positive integers, got {value}", self.as_str())));
        }
        let mut cfg = base.clone();
        match self {
            SweepParameter::Sigma => cfg.environment.shadowing_std_db = value,
            SweepParameter::BorderSnr => cfg.environment.border_snr_db = value,
            SweepParameter::Alpha => cfg.environment.spatial_multiplexing_gain = value as usize,
            SweepParameter::MOverS => {
                cfg.caching.cache_fraction = value;
                cfg.caching.total_memory = None;
            }
            SweepParameter::K => cfg.caching.user_count = value as usize,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
    /// Drops per point; the experiment's drop count when absent.
    #[serde(default)]
    pub drops: Option<usize>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(Error::Config("sweep values must not be empty".into()));
        }
        if self.drops == Some(0) {
            return Err(Error::Config("sweep drops must be at least 1".into()));
        }
        if let Some(v) = self.values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Config(format!("sweep value {v} is not finite")));
        }
        Ok(())
    }
}

/// Expected rates from the config: inline, from file, or estimated on the grid.
pub fn load_rate_map(config: &ScenarioConfig) -> Result<RateMap> {
    if let Some(rates) = &config.rate_map.rates {
        return RateMap::new(rates.clone());
    }
    if let Some(path) = &config.rate_map.file {
        return RateMap::read_csv(path);
    }
    let grid = build_grid(&config.environment)?;
    let power = calibrate_power(&config.environment, &grid)?;
    estimate_rate_map(&grid, &config.environment, power, config.environment.rate_samples)
}

/// A configuration with its grid, calibrated power and rate map.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub grid: StateGrid,
    pub transmit_power: f64,
    pub rate_map: RateMap,
}

impl Scenario {
    pub fn prepare(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let grid = build_grid(&config.environment)?;
        let transmit_power = calibrate_power(&config.environment, &grid)?;
        let rate_map = match (&config.rate_map.rates, &config.rate_map.file) {
            (None, None) => estimate_rate_map(&grid, &config.environment, transmit_power, config.environment.rate_samples)?,
            _ => load_rate_map(config)?,
        };
        if rate_map.len() != grid.len() {
            return Err(Error::Config(format!(
                "rate map has {} states but the room has {}",
                rate_map.len(),
                grid.len()
            )));
        }
        Ok(Self { config: config.clone(), grid, transmit_power, rate_map })
    }

    pub fn state_count(&self) -> usize {
        self.grid.len()
    }

    pub fn user_count(&self) -> usize {
        self.config.caching.user_count
    }

    pub fn alpha(&self) -> usize {
        self.config.alpha()
    }

    pub fn total_memory(&self) -> f64 {
        self.config.caching.total_memory(self.state_count())
    }

    pub fn t_target(&self) -> usize {
        self.config.caching.t_target(self.state_count())
    }
}

/// Allocation and placement of a scheme; they depend on the rate map only.
#[derive(Debug, Clone)]
pub struct PreparedScheme {
    pub spec: SchemeSpec,
    pub allocation: MemoryAllocation,
    pub layout: CacheLayout,
}

impl PreparedScheme {
    pub fn new(scenario: &Scenario, spec: SchemeSpec) -> Result<Self> {
        let k = scenario.user_count();
        let rates = &scenario.rate_map.rates;
        let allocation = match spec.allocation {
            AllocationRule::Uniform => uniform_allocation(rates.len(), scenario.total_memory(), k, rates),
            AllocationRule::Optimized(mode) => allocate(&AllocationProblem {
                rates: rates.clone(),
                total_memory: scenario.total_memory(),
                user_count: k,
                tradeoff: mode.value(scenario.alpha(), k),
            })?,
        };
        let layout = CacheLayout::place(&allocation, k)?;
        Ok(Self { spec, allocation, layout })
    }

    pub fn plan(&self, user_states: &[usize], alpha: usize, t_target: usize) -> Result<TransmissionPlan> {
        let demands = user_demands(&self.layout, user_states)?;
        match self.spec.delivery {
            DeliveryRule::Unicast => build_unicast_plan(&demands, &self.layout, alpha),
            DeliveryRule::Multicast => build_capped_multicast_plan(&demands, &self.layout, alpha),
            DeliveryRule::Phantom => build_phantom_plan(&demands, &self.layout, alpha, t_target),
        }
    }
}

/// Seed of drop `drop` under `master`.
pub fn drop_seed(master: u64, drop: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(drop as u64);
    rng.next_u64()
}

/// Channels of users standing in `states`, drawn from `seed`.
pub fn channels_for(scenario: &Scenario, states: &[usize], seed: u64) -> Result<Vec<Vec<num_complex::Complex64>>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(draw_channels(&scenario.grid, states, &scenario.config.environment, &mut rng)?.channels)
}

/// User states drawn uniformly and the matching channels.
pub fn draw_drop(scenario: &Scenario, seed: u64) -> Result<(Vec<usize>, Vec<Vec<num_complex::Complex64>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = scenario.state_count();
    let states: Vec<usize> = (0..scenario.user_count()).map(|_| rng.gen_range(0..s)).collect();
    let realization = draw_channels(&scenario.grid, &states, &scenario.config.environment, &mut rng)?;
    Ok((states, realization.channels))
}

fn with_context(err: Error, context: &str) -> Error {
    match err {
        Error::Config(m) => Error::Config(format!("{context}: {m}")),
        Error::Domain(m) => Error::Domain(format!("{context}: {m}")),
        Error::Schedule(m) => Error::Schedule(format!("{context}: {m}")),
        Error::PlanInvariant(m) => Error::PlanInvariant(format!("{context}: {m}")),
        Error::Solver(m) => Error::Solver(format!("{context}: {m}")),
        other => other,
    }
}

/// Runs one scheme on a drop that was already drawn.
pub fn run_prepared_drop(
    scenario: &Scenario,
    scheme: &PreparedScheme,
    states: &[usize],
    channels: &[Vec<num_complex::Complex64>],
    seed: u64,
) -> Result<DeliveryReport> {
    let context = format!("{} drop seed {seed}", scheme.spec.name);
    let run = || -> Result<DeliveryReport> {
        let plan = scheme.plan(states, scenario.alpha(), scenario.t_target())?;
        let noise = scenario.config.environment.noise_power;
        let mut solutions = Vec::with_capacity(plan.transmissions.len());
        for tx in &plan.transmissions {
            let problem = BeamProblem::from_transmission(tx, channels, scenario.transmit_power, noise)?;
            solutions.push(solve_wmm_sca(&problem, &scenario.config.beamforming)?);
        }
        total_time(&plan, &solutions, scheme.spec.name.as_str(), seed)
    };
    run().map_err(|e| with_context(e, &context))
}

/// Draws a drop from `seed` and runs `scheme` on it.
pub fn run_drop(scenario: &Scenario, scheme: &PreparedScheme, seed: u64) -> Result<DeliveryReport> {
    let (states, channels) = draw_drop(scenario, seed)?;
    run_prepared_drop(scenario, scheme, &states, &channels, seed)
}

/// Parameters of a scenario that label output rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointLabel {
    pub parameter: Option<SweepParameter>,
    pub value: Option<f64>,
    pub user_count: usize,
    pub state_count: usize,
    pub antenna_count: usize,
    pub alpha: usize,
    pub total_memory: f64,
    pub sigma_db: f64,
    pub border_snr_db: f64,
}

impl PointLabel {
    fn new(scenario: &Scenario) -> Self {
        let env = &scenario.config.environment;
        Self {
            parameter: None,
            value: None,
            user_count: scenario.user_count(),
            state_count: scenario.state_count(),
            antenna_count: env.antenna_count,
            alpha: scenario.alpha(),
            total_memory: scenario.total_memory(),
            sigma_db: env.shadowing_std_db,
            border_snr_db: env.border_snr_db,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeResult {
    pub scheme: SchemeName,
    /// One report per drop, in drop order.
    pub reports: Vec<DeliveryReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub drops: usize,
    /// Over uncensored drops.
    pub mean: f64,
    pub p25: f64,
    pub median: f64,
    pub p75: f64,
    pub p95: f64,
    pub iqr: f64,
    pub censored: usize,
}

impl SchemeResult {
    pub fn times(&self) -> Vec<f64> {
        self.reports.iter().map(|r| r.total_time).collect()
    }

    pub fn sorted_times(&self) -> Vec<f64> {
        stats::sorted(&self.times())
    }

    pub fn summary(&self) -> SchemeSummary {
        let sorted = self.sorted_times();
        SchemeSummary {
            drops: sorted.len(),
            mean: stats::finite_mean(&sorted),
            p25: stats::percentile(&sorted, 0.25),
            median: stats::percentile(&sorted, 0.5),
            p75: stats::percentile(&sorted, 0.75),
            p95: stats::percentile(&sorted, 0.95),
            iqr: stats::iqr(&sorted),
            censored: self.reports.iter().filter(|r| r.censored).count(),
        }
    }
}

/// Per-scheme results at one scenario point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub label: PointLabel,
    pub master_seed: u64,
    pub schemes: Vec<SchemeResult>,
}

impl AggregateResult {
    pub fn scheme(&self, name: SchemeName) -> Option<&SchemeResult> {
        self.schemes.iter().find(|s| s.scheme == name)
    }

    /// `mean(a) / mean(b)` over uncensored drops.
    pub fn mean_ratio(&self, a: SchemeName, b: SchemeName) -> Option<f64> {
        Some(self.scheme(a)?.summary().mean / self.scheme(b)?.summary().mean)
    }
}

pub const DROPS_HEADER: [&str; 14] = [
    "parameter",
    "value",
    "scheme",
    "drop",
    "seed",
    "K",
    "S",
    "L",
    "alpha",
    "M",
    "sigma_db",
    "border_snr_db",
    "total_time",
    "censored",
];

pub const AGGREGATE_HEADER: [&str; 12] = [
    "parameter", "value", "scheme", "drops", "mean", "p25", "median", "p75", "p95", "iqr", "censored", "K",
];

pub const CDF_HEADER: [&str; 6] = ["parameter", "value", "scheme", "rank", "total_time", "cdf"];

fn label_cells(label: &PointLabel) -> [String; 2] {
    [
        label.parameter.map(|p| p.as_str().to_string()).unwrap_or_default(),
        label.value.map(|v| v.to_string()).unwrap_or_default(),
    ]
}

/// Writes one row per (point, scheme, drop).
pub fn write_drops_csv<W: Write>(results: &[AggregateResult], header: &str, mut out: W) -> Result<()> {
    writeln!(out, "# {header}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DROPS_HEADER)?;
    for result in results {
        let l = &result.label;
        let [p, v] = label_cells(l);
        for scheme in &result.schemes {
            for (drop, r) in scheme.reports.iter().enumerate() {
                w.write_record([
                    p.clone(),
                    v.clone(),
                    scheme.scheme.to_string(),
                    drop.to_string(),
                    r.seed.to_string(),
                    l.user_count.to_string(),
                    l.state_count.to_string(),
                    l.antenna_count.to_string(),
                    l.alpha.to_string(),
                    l.total_memory.to_string(),
                    l.sigma_db.to_string(),
                    l.border_snr_db.to_string(),
                    r.total_time.to_string(),
                    r.censored.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes one summary row per (point, scheme).
pub fn write_aggregate_csv<W: Write>(results: &[AggregateResult], header: &str, mut out: W) -> Result<()> {
    writeln!(out, "# {header}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(AGGREGATE_HEADER)?;
    for result in results {
        let [p, v] = label_cells(&result.label);
        for scheme in &result.schemes {
            let s = scheme.summary();
            w.write_record([
                p.clone(),
                v.clone(),
                scheme.scheme.to_string(),
                s.drops.to_string(),
                s.mean.to_string(),
                s.p25.to_string(),
                s.median.to_string(),
                s.p75.to_string(),
                s.p95.to_string(),
                s.iqr.to_string(),
                s.censored.to_string(),
                result.label.user_count.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes the empirical CDF of every (point, scheme).
pub fn write_cdf_csv<W: Write>(results: &[AggregateResult], header: &str, mut out: W) -> Result<()> {
    writeln!(out, "# {header}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CDF_HEADER)?;
    for result in results {
        let [p, v] = label_cells(&result.label);
        for scheme in &result.schemes {
            for (rank, (time, cdf)) in stats::ecdf(&scheme.sorted_times()).into_iter().enumerate() {
                w.write_record([
                    p.clone(),
                    v.clone(),
                    scheme.scheme.to_string(),
                    (rank + 1).to_string(),
                    time.to_string(),
                    cdf.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Execution knobs shared by the experiment drivers.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; all available cores when `None`.
    pub threads: Option<usize>,
}

fn in_pool<T: Send>(options: RunOptions, job: impl FnOnce() -> T + Send) -> Result<T> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = options.threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(job))
}

/// Runs every scheme on `n_drops` common-random drops.
pub fn run_cdf_experiment(
    scenario: &Scenario,
    schemes: &[SchemeName],
    n_drops: usize,
    master_seed: u64,
    options: RunOptions,
) -> Result<AggregateResult> {
    if n_drops == 0 {
        return Err(Error::Config("an experiment needs at least one drop".into()));
    }
    let factor = scenario.config.caching.local_first_factor;
    let prepared: Vec<PreparedScheme> = schemes
        .iter()
        .map(|&n| PreparedScheme::new(scenario, SchemeSpec::new(n, factor)))
        .collect::<Result<_>>()?;

    let per_drop: Vec<Result<Vec<DeliveryReport>>> = in_pool(options, || {
        (0..n_drops)
            .into_par_iter()
            .map(|d| {
                let seed = drop_seed(master_seed, d);
                let (states, channels) = draw_drop(scenario, seed)?;
                prepared.iter().map(|p| run_prepared_drop(scenario, p, &states, &channels, seed)).collect()
            })
            .collect()
    })?;

    let mut results: Vec<SchemeResult> =
        schemes.iter().map(|&scheme| SchemeResult { scheme, reports: Vec::with_capacity(n_drops) }).collect();
    for drop in per_drop {
        for (slot, report) in results.iter_mut().zip(drop?) {
            slot.reports.push(report);
        }
    }
    Ok(AggregateResult { label: PointLabel::new(scenario), master_seed, schemes: results })
}

/// One aggregate per sweep value, all with the same master seed.
pub fn run_sweep(
    base: &ScenarioConfig,
    sweep: &SweepSpec,
    schemes: &[SchemeName],
    master_seed: u64,
    options: RunOptions,
) -> Result<Vec<AggregateResult>> {
    sweep.validate()?;
    let drops = sweep.drops.unwrap_or(base.experiment.drops);
    let mut out = Vec::with_capacity(sweep.values.len());
    for &value in &sweep.values {
        let scenario = Scenario::prepare(&sweep.parameter.apply(base, value)?)?;
        let mut result = run_cdf_experiment(&scenario, schemes, drops, master_seed, options)?;
        result.label.parameter = Some(sweep.parameter);
        result.label.value = Some(value);
        out.push(result);
    }
    Ok(out)
}
