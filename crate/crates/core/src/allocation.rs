//! Memory allocation across states.
//!
//! For each state `s` a user reserves a fraction `m(s)` of the state's file.
//! The allocation minimizes the approximate worst-case delivery time
//!
//! ```text
//!   minimize   γ / (m̄ + φ)
//!   subject to (1 - m(s)) / r(s) <= γ,  m̄ <= m(s) <= 1,  Σ m(s) <= M
//! ```
//!
//! which is a linear-fractional program. Rather than running a general LP
//! solver on its Charnes–Cooper form, we exploit its structure: for a fixed
//! floor `m̄` the smallest feasible `γ` comes from water-filling, `γ(m̄)` is
//! convex and piecewise linear, and the ratio is monotone on each linear
//! piece, so the optimum sits at one of at most `S + 1` breakpoints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Input of the memory-allocation problem.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem {
    pub rates: Vec<f64>,
    /// Cache size `M` in file units.
    pub total_memory: f64,
    pub user_count: usize,
    /// Trade-off constant `φ` replacing `α/K` in the objective denominator.
    pub tradeoff: f64,
}

/// Named choices of the trade-off constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TradeoffMode {
    /// `φ = α/K`: plans for multicast delivery already at placement.
    MulticastAware,
    /// `φ = factor · α/K` with a large factor: favors local caching gain.
    LocalFirst { factor: f64 },
    Fixed { value: f64 },
}

pub const LOCAL_FIRST_FACTOR: f64 = 1e6;

impl TradeoffMode {
    pub fn local_first() -> Self {
        TradeoffMode::LocalFirst { factor: LOCAL_FIRST_FACTOR }
    }

    pub fn value(&self, alpha: usize, user_count: usize) -> f64 {
        let base = alpha as f64 / user_count as f64;
        match *self {
            TradeoffMode::MulticastAware => base,
            TradeoffMode::LocalFirst { factor } => factor * base,
            TradeoffMode::Fixed { value } => value,
        }
    }
}

impl AllocationProblem {
    pub fn validate(&self) -> Result<()> {
        if self.rates.is_empty() {
            return Err(Error::Config("allocation needs at least one state".into()));
        }
        if !(self.total_memory > 0.0 && self.total_memory.is_finite()) {
            return Err(Error::Config(format!("total memory must be positive, got {}", self.total_memory)));
        }
        if self.user_count == 0 {
            return Err(Error::Config("user count must be positive".into()));
        }
        if !(self.tradeoff > 0.0 && self.tradeoff.is_finite()) {
            return Err(Error::Config(format!("trade-off must be positive, got {}", self.tradeoff)));
        }
        if self.rates.iter().any(|r| !(*r > 0.0 && r.is_finite())) {
            return Err(Error::Config("all state rates must be positive".into()));
        }
        Ok(())
    }
}

/// Per-state cache fractions and derived quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryAllocation {
    pub m: Vec<f64>,
    pub m_bar: f64,
    /// Caching gains `t(s) = K m(s)`.
    pub gains: Vec<f64>,
    pub t_bar: f64,
    /// `max_s (1 - m(s)) / r(s)`.
    pub gamma: f64,
    pub tradeoff: f64,
    pub objective: f64,
    pub user_count: usize,
}

impl MemoryAllocation {
    pub fn from_fractions(m: Vec<f64>, rates: &[f64], user_count: usize, tradeoff: f64) -> Self {
        let m_bar = m.iter().copied().fold(f64::INFINITY, f64::min);
        let gamma = slack(&m, rates);
        let k = user_count as f64;
        Self {
            gains: m.iter().map(|x| k * x).collect(),
            t_bar: k * m_bar,
            objective: gamma / (m_bar + tradeoff),
            m,
            m_bar,
            gamma,
            tradeoff,
            user_count,
        }
    }

    pub fn state_count(&self) -> usize {
        self.m.len()
    }

    pub fn used_memory(&self) -> f64 {
        self.m.iter().sum()
    }

    /// The equivalent point of the Charnes–Cooper linear program.
    pub fn charnes_cooper(&self) -> CharnesCooperPoint {
        let xi = 1.0 / (self.m_bar + self.tradeoff);
        CharnesCooperPoint {
            m_prime: self.m.iter().map(|x| x * xi).collect(),
            gamma_prime: self.gamma * xi,
            m_bar_prime: self.m_bar * xi,
            xi,
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, header: &str, mut out: W) -> Result<()> {
        writeln!(out, "# {header}")?;
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["state_index", "m", "t"])?;
        for (s, (m, t)) in self.m.iter().zip(&self.gains).enumerate() {
            writer.write_record([s.to_string(), m.to_string(), t.to_string()])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Variables of the Charnes–Cooper reformulation: `m'(s) = ξ m(s)`,
/// `γ' = ξ γ`, `m̄' = ξ m̄` with `m̄' + φ ξ = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CharnesCooperPoint {
    pub m_prime: Vec<f64>,
    pub gamma_prime: f64,
    pub m_bar_prime: f64,
    pub xi: f64,
}

impl CharnesCooperPoint {
    /// Undo the transformation: `m(s) = m'(s) / ξ`.
    pub fn fractions(&self) -> Vec<f64> {
        self.m_prime.iter().map(|x| x / self.xi).collect()
    }

    /// Largest constraint violation of the transformed LP.
    pub fn violation(&self, rates: &[f64], total_memory: f64, tradeoff: f64) -> f64 {
        let mut worst: f64 = 0.0;
        for (mp, r) in self.m_prime.iter().zip(rates) {
            worst = worst.max((self.xi - mp) / r - self.gamma_prime);
            worst = worst.max(self.m_bar_prime - mp);
            worst = worst.max(mp - self.xi);
        }
        worst = worst.max(self.m_prime.iter().sum::<f64>() - total_memory * self.xi);
        worst.max((self.m_bar_prime + tradeoff * self.xi - 1.0).abs())
    }
}

fn slack(m: &[f64], rates: &[f64]) -> f64 {
    m.iter().zip(rates).map(|(m, r)| (1.0 - m) / r).fold(0.0, f64::max)
}

/// Smallest slack `γ` achievable with every state at least at `floor`.
///
/// Returns `m(s) = max(floor, 1 - γ r(s))` (clamped to one) together with
/// `γ = max_s (1 - m(s)) / r(s)`. When the whole catalogue fits (`M >= S`)
/// every state is fully cached and `γ = 0`.
pub fn water_fill(rates: &[f64], total_memory: f64, floor: f64) -> (Vec<f64>, f64) {
    let n = rates.len();
    if total_memory >= n as f64 {
        return (vec![1.0; n], 0.0);
    }
    let floor = floor.clamp(0.0, 1.0);
    // states leave the floor in order of increasing rate
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| rates[a].total_cmp(&rates[b]));
    let budget = total_memory - n as f64 * floor;

    let level = if budget <= 0.0 {
        (1.0 - floor) / rates[order[0]]
    } else {
        let mut level = 0.0;
        let mut rate_sum = 0.0;
        for j in 0..n {
            rate_sum += rates[order[j]];
            let active = (j + 1) as f64;
            // Σ_active r (τ - γ) = budget with r τ = 1 - floor
            let candidate = (active * (1.0 - floor) - budget) / rate_sum;
            let next_threshold = order.get(j + 1).map(|&s| (1.0 - floor) / rates[s]);
            level = candidate;
            if next_threshold.map_or(true, |t| candidate >= t) {
                break;
            }
        }
        level.max(0.0)
    };

    let m: Vec<f64> = rates.iter().map(|r| floor.max(1.0 - level * r).min(1.0)).collect();
    let gamma = slack(&m, rates);
    (m, gamma)
}

/// Floors at which the active set of the water-filling changes, plus the
/// interval endpoints.
fn candidate_floors(rates: &[f64], total_memory: f64) -> Vec<f64> {
    let n = rates.len();
    let max_floor = (total_memory / n as f64).min(1.0);
    let mut sorted = rates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut out = vec![0.0, max_floor];
    let mut prefix = 0.0;
    for j in 1..n {
        prefix += sorted[j - 1];
        let next = sorted[j];
        // (j - M + f (S - j)) / R_j = (1 - f) / r_{j+1}
        let f = (prefix - (j as f64 - total_memory) * next) / ((n - j) as f64 * next + prefix);
        if f > 0.0 && f < max_floor {
            out.push(f);
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

/// Solves the memory-allocation program exactly by breakpoint enumeration.
pub fn allocate(problem: &AllocationProblem) -> Result<MemoryAllocation> {
    problem.validate()?;
    let rates = &problem.rates;
    let mut best: Option<MemoryAllocation> = None;
    for floor in candidate_floors(rates, problem.total_memory) {
        let (m, _) = water_fill(rates, problem.total_memory, floor);
        let candidate = MemoryAllocation::from_fractions(m, rates, problem.user_count, problem.tradeoff);
        let better = match &best {
            None => true,
            Some(b) => candidate.objective < b.objective - 1e-12 * b.objective.abs(),
        };
        if better {
            best = Some(candidate);
        }
    }
    Ok(best.expect("at least one candidate floor"))
}

/// Every state gets `M / S` (capped at one).
pub fn uniform_allocation(state_count: usize, total_memory: f64, user_count: usize, rates: &[f64]) -> MemoryAllocation {
    let share = (total_memory / state_count as f64).min(1.0);
    MemoryAllocation::from_fractions(vec![share; state_count], rates, user_count, f64::INFINITY)
}

pub const ORACLE_MAX_STATES: usize = 50;
const ORACLE_GRID: usize = 20_000;

/// Brute-force reference solver for small instances (tests only).
///
/// Scans the floor `m̄` on a uniform grid and, for each floor, finds the
/// smallest slack by bisection on `γ`. It shares no code with [`allocate`].
pub fn allocation_oracle(problem: &AllocationProblem) -> Result<MemoryAllocation> {
    problem.validate()?;
    let n = problem.rates.len();
    if n > ORACLE_MAX_STATES {
        return Err(Error::Config(format!("oracle limited to {ORACLE_MAX_STATES} states, got {n}")));
    }
    let rates = &problem.rates;
    let memory = problem.total_memory;
    if memory >= n as f64 {
        return Ok(MemoryAllocation::from_fractions(vec![1.0; n], rates, problem.user_count, problem.tradeoff));
    }
    let r_min = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let max_floor = memory / n as f64;
    let fill = |floor: f64, gamma: f64| -> Vec<f64> { rates.iter().map(|r| floor.max(1.0 - gamma * r)).collect() };

    let mut best: Option<MemoryAllocation> = None;
    for i in 0..=ORACLE_GRID {
        let floor = max_floor * i as f64 / ORACLE_GRID as f64;
        let (mut lo, mut hi) = (0.0, (1.0 - floor) / r_min);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if fill(floor, mid).iter().sum::<f64>() <= memory {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let candidate = MemoryAllocation::from_fractions(fill(floor, hi), rates, problem.user_count, problem.tradeoff);
        if best.as_ref().map_or(true, |b| candidate.objective < b.objective) {
            best = Some(candidate);
        }
    }
    Ok(best.unwrap())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const FIVE_STATE_RATES: [f64; 5] = [3000.0, 2000.0, 1000.0, 2000.0, 3000.0];
    const FIVE_STATE_M: [f64; 5] = [0.25, 0.5, 0.75, 0.5, 0.25];

    fn problem(rates: &[f64], memory: f64, tradeoff: f64) -> AllocationProblem {
        AllocationProblem { rates: rates.to_vec(), total_memory: memory, user_count: 4, tradeoff }
    }

    fn assert_feasible(a: &MemoryAllocation, p: &AllocationProblem) {
        assert!(a.m.iter().all(|m| (0.0..=1.0).contains(m)));
        assert!(a.used_memory() <= p.total_memory + 1e-9);
        assert_eq!(a.m_bar, a.m.iter().copied().fold(f64::INFINITY, f64::min));
    }

    #[test]
    fn water_fill_five_state_by_hand() {
        // 5 - 11000 γ = 2.25
        let (m, gamma) = water_fill(&FIVE_STATE_RATES, 2.25, 0.0);
        assert!((gamma - 2.5e-4).abs() < 1e-15);
        for (a, b) in m.iter().zip(FIVE_STATE_M) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn water_fill_degenerate_cases() {
        assert_eq!(water_fill(&[5.0], 1.0, 0.0), (vec![1.0], 0.0));
        let (m, gamma) = water_fill(&FIVE_STATE_RATES, 2.25, 0.45);
        assert!(m.iter().all(|x| (x - 0.45).abs() < 1e-12));
        assert!((gamma - 0.55 / 1000.0).abs() < 1e-15);
    }

    #[test]
    fn five_state_for_both_tradeoffs() {
        for phi in [0.5, LOCAL_FIRST_FACTOR * 0.5] {
            let p = problem(&FIVE_STATE_RATES, 2.25, phi);
            let a = allocate(&p).unwrap();
            assert_feasible(&a, &p);
            for (x, y) in a.m.iter().zip(FIVE_STATE_M) {
                assert!((x - y).abs() < 1e-6, "phi {phi}: {:?}", a.m);
            }
        }
    }

    #[test]
    fn uniform_rates_give_uniform_allocation() {
        for phi in [1e-3, 0.5, 1e6] {
            let a = allocate(&problem(&[7.0; 6], 2.4, phi)).unwrap();
            assert!(a.m.iter().all(|m| (m - 0.4).abs() < 1e-12), "{:?}", a.m);
        }
    }

    #[test]
    fn matches_oracle_on_skewed_instance() {
        let p = problem(&[1000.0, 1000.0, 10.0], 1.5, 1e6);
        let a = allocate(&p).unwrap();
        let o = allocation_oracle(&p).unwrap();
        // all three states active: 3 - 2010 γ = 1.5
        assert!((o.gamma - 1.5 / 2010.0).abs() < 1e-6);
        assert!((a.objective - o.objective).abs() <= 1e-4 * o.objective);
        for (x, y) in a.m.iter().zip(&o.m) {
            assert!((x - y).abs() < 1e-4);
        }
        let o_table = allocation_oracle(&problem(&FIVE_STATE_RATES, 2.25, 0.5)).unwrap();
        for (x, y) in o_table.m.iter().zip(FIVE_STATE_M) {
            assert!((x - y).abs() < 1e-4);
        }
    }

    #[test]
    fn full_memory_caches_everything() {
        let a = allocate(&problem(&[1.0, 2.0, 3.0], 3.5, 0.5)).unwrap();
        assert_eq!(a.m, vec![1.0; 3]);
        assert_eq!(a.gamma, 0.0);
    }

    #[test]
    fn invalid_problems_are_config_errors() {
        assert!(matches!(allocate(&problem(&FIVE_STATE_RATES, 0.0, 0.5)), Err(Error::Config(_))));
        assert!(matches!(allocate(&problem(&[], 1.0, 0.5)), Err(Error::Config(_))));
        let big = problem(&[1.0; 51], 1.0, 0.5);
        assert!(allocation_oracle(&big).is_err());
    }

    #[test]
    fn charnes_cooper_round_trip() {
        let p = problem(&FIVE_STATE_RATES, 2.25, 0.5);
        let a = allocate(&p).unwrap();
        let cc = a.charnes_cooper();
        assert!(cc.violation(&p.rates, p.total_memory, p.tradeoff) < 1e-12);
        for (x, y) in cc.fractions().iter().zip(&a.m) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((cc.gamma_prime - a.objective).abs() < 1e-15);
    }

    fn rates_strategy(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(1.0f64..1000.0, 2..=max_len)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn optimal_against_oracle(rates in rates_strategy(10), frac in 0.05f64..0.95, phi in 0.01f64..5.0) {
            let p = AllocationProblem {
                total_memory: frac * rates.len() as f64,
                rates, user_count: 4, tradeoff: phi,
            };
            let a = allocate(&p).unwrap();
            let o = allocation_oracle(&p).unwrap();
            assert_feasible(&a, &p);
            prop_assert!(o.objective >= a.objective - 1e-9 * a.objective);
            prop_assert!((a.objective - o.objective).abs() <= 1e-3 * o.objective);
        }

        #[test]
        fn invariant_under_rate_scaling(rates in rates_strategy(8), frac in 0.05f64..0.95, c in 0.01f64..100.0) {
            let p = AllocationProblem { total_memory: frac * rates.len() as f64, rates, user_count: 4, tradeoff: 0.5 };
            let scaled = AllocationProblem { rates: p.rates.iter().map(|r| r * c).collect(), ..p.clone() };
            let a = allocate(&p).unwrap();
            let b = allocate(&scaled).unwrap();
            for (x, y) in a.m.iter().zip(&b.m) {
                prop_assert!((x - y).abs() < 1e-9);
            }
            prop_assert!((b.objective * c - a.objective).abs() <= 1e-9 * a.objective);
        }

        #[test]
        fn slack_is_equalized(rates in rates_strategy(10), frac in 0.05f64..0.95, phi in 0.01f64..5.0) {
            let p = AllocationProblem { total_memory: frac * rates.len() as f64, rates, user_count: 4, tradeoff: phi };
            let a = allocate(&p).unwrap();
            for (m, r) in a.m.iter().zip(&p.rates) {
                if *m > a.m_bar + 1e-9 && *m < 1.0 - 1e-9 {
                    prop_assert!(((1.0 - m) / r - a.gamma).abs() <= 1e-6 * a.gamma.max(1e-12));
                }
            }
        }

        #[test]
        fn larger_tradeoff_favors_local_gain(rates in rates_strategy(8), frac in 0.05f64..0.95) {
            let p = AllocationProblem { total_memory: frac * rates.len() as f64, rates, user_count: 4, tradeoff: 1e-3 };
            let mut prev: Option<MemoryAllocation> = None;
            for phi in [1e-3, 1e-2, 0.1, 0.5, 1.0, 10.0, 1e3, 1e6] {
                let a = allocate(&AllocationProblem { tradeoff: phi, ..p.clone() }).unwrap();
                if let Some(b) = &prev {
                    prop_assert!(a.m_bar <= b.m_bar + 1e-9);
                    prop_assert!(a.gamma <= b.gamma + 1e-9 * b.gamma);
                }
                prev = Some(a);
            }
        }
    }

    #[test]
    fn oracle_never_beats_allocate_on_random_five_state_instances() {
        use rand::{Rng, SeedableRng};
        for seed in 0..100u64 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let rates: Vec<f64> = (0..5).map(|_| rng.gen_range(10.0..5000.0)).collect();
            let p = AllocationProblem {
                rates,
                total_memory: rng.gen_range(0.2..4.5),
                user_count: 4,
                tradeoff: rng.gen_range(0.05..2.0),
            };
            let a = allocate(&p).unwrap();
            let o = allocation_oracle(&p).unwrap();
            assert!(o.objective >= a.objective - 1e-4 * a.objective, "seed {seed}");
        }
    }
}
