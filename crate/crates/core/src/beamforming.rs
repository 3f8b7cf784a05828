//! Precoder design for one transmission.
//!
//! Every codeword `U` gets a precoder `v_U`. User `k` jointly decodes the
//! codewords it receives (`D_k`) while treating the other codewords (`I_k`)
//! as noise, so its symmetric message rate is the multiple-access bound
//! `R_k = min_Q (1/|Q|) log2(1 + Σ_{U∈Q} γ_U^k)` over nonempty `Q ⊆ D_k`.
//! The design maximizes the weighted minimum `min_k R_k / c_k` under a sum
//! power budget.
//!
//! The SINR constraint `γ (1 + Σ_I |h^H v_V|²) <= |h^H v_U|²` is not convex;
//! successive convex approximation replaces `|h^H v_U|² / γ` by its tangent
//! at the current point, which lower-bounds it, so every subproblem optimum
//! is feasible for the original problem and the objective never decreases.
//!
//! Internally channels are scaled by `sqrt(P_T / N0)` so that the power
//! budget and the noise power are both one, and weights are divided by the
//! largest weight.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conic::{ConicProgram, Outcome, Row};
use crate::delivery::Transmission;
use crate::environment::rayleigh_vector;
use crate::error::{Error, Result};
use crate::rational;

/// One transmission's precoding problem.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamProblem {
    /// Plan-level indices of the users with data in this transmission.
    pub users: Vec<usize>,
    /// Channel of each user (same order as `users`).
    pub channels: Vec<Vec<Complex64>>,
    /// Message size `c_k` of each user.
    pub weights: Vec<f64>,
    /// Receivers of each codeword, as positions into `users`.
    pub codewords: Vec<Vec<usize>>,
    pub power: f64,
    pub noise: f64,
}

impl BeamProblem {
    pub fn new(
        users: Vec<usize>,
        channels: Vec<Vec<Complex64>>,
        weights: Vec<f64>,
        codewords: Vec<Vec<usize>>,
        power: f64,
        noise: f64,
    ) -> Result<Self> {
        let n = users.len();
        if n == 0 || codewords.is_empty() {
            return Err(Error::Domain("beamforming problem without users or codewords".into()));
        }
        if channels.len() != n || weights.len() != n {
            return Err(Error::Domain("channels and weights must match the user list".into()));
        }
        let antennas = channels[0].len();
        if antennas == 0 || channels.iter().any(|h| h.len() != antennas) {
            return Err(Error::Domain("channels must share a positive antenna count".into()));
        }
        if weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
            return Err(Error::Domain("weights must be positive".into()));
        }
        if !(power > 0.0 && noise > 0.0) {
            return Err(Error::Domain("power and noise must be positive".into()));
        }
        for k in 0..n {
            if !codewords.iter().any(|c| c.contains(&k)) {
                return Err(Error::Domain(format!("user {} receives no codeword", users[k] + 1)));
            }
        }
        if codewords.iter().flatten().any(|&k| k >= n) {
            return Err(Error::Domain("codeword receiver out of range".into()));
        }
        Ok(Self { users, channels, weights, codewords, power, noise })
    }

    /// Problem for a planned transmission; `channels[k]` is user `k`'s channel.
    /// Users without data and codewords without data are left out.
    pub fn from_transmission(
        tx: &Transmission,
        channels: &[Vec<Complex64>],
        power: f64,
        noise: f64,
    ) -> Result<Self> {
        let weights = tx.weights();
        let users: Vec<usize> = weights.keys().copied().collect();
        let position = |u: usize| users.iter().position(|&x| x == u);
        let codewords: Vec<Vec<usize>> = tx
            .codewords
            .iter()
            .map(|cw| cw.terms.iter().filter_map(|t| position(t.user)).collect::<Vec<usize>>())
            .filter(|c| !c.is_empty())
            .collect();
        let mut user_channels = Vec::with_capacity(users.len());
        for &u in &users {
            user_channels.push(
                channels
                    .get(u)
                    .cloned()
                    .ok_or_else(|| Error::Domain(format!("no channel for user {}", u + 1)))?,
            );
        }
        let w = weights.values().map(rational::to_f64).collect();
        Self::new(users, user_channels, w, codewords, power, noise)
    }

    pub fn antennas(&self) -> usize {
        self.channels[0].len()
    }

    pub fn user_count(&self) -> usize {
        self.users.len()
    }

    /// Codewords user `k` decodes, `D_k`.
    pub fn desired(&self, k: usize) -> Vec<usize> {
        (0..self.codewords.len()).filter(|&c| self.codewords[c].contains(&k)).collect()
    }

    /// Codewords user `k` treats as noise, `I_k`.
    pub fn interference(&self, k: usize) -> Vec<usize> {
        (0..self.codewords.len()).filter(|&c| !self.codewords[c].contains(&k)).collect()
    }

    fn scaled_channels(&self) -> Vec<Vec<Complex64>> {
        let s = (self.power / self.noise).sqrt();
        self.channels.iter().map(|h| h.iter().map(|x| x * s).collect()).collect()
    }

    fn relative_weights(&self) -> Vec<f64> {
        let max = self.weights.iter().copied().fold(0.0, f64::max);
        self.weights.iter().map(|w| w / max).collect()
    }
}

/// `h^H v`.
fn inner(h: &[Complex64], v: &[Complex64]) -> Complex64 {
    h.iter().zip(v).map(|(a, b)| a.conj() * b).sum()
}

fn norm_sq(v: &[Complex64]) -> f64 {
    v.iter().map(|x| x.norm_sqr()).sum()
}

/// Symmetric rate of jointly decoded messages with SINRs `gammas`.
pub fn mac_rate(gammas: &[f64]) -> f64 {
    if gammas.is_empty() {
        return 0.0;
    }
    // for each |Q| the binding subset holds the |Q| weakest messages
    let mut sorted: Vec<f64> = gammas.iter().map(|g| g.max(0.0)).collect();
    sorted.sort_by(f64::total_cmp);
    let mut prefix = 0.0;
    let mut best = f64::INFINITY;
    for (i, g) in sorted.iter().enumerate() {
        prefix += g;
        best = best.min((1.0 + prefix).log2() / (i + 1) as f64);
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Sca,
    ZeroForcing,
    Mrt,
    Zero,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub objective: f64,
    pub power: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamformerSolution {
    pub method: Method,
    /// Plan-level indices of the users, as in the problem.
    pub users: Vec<usize>,
    /// One precoder per codeword, in the problem's power units.
    pub precoders: Vec<Vec<Complex64>>,
    /// `sinr[k][j]`: SINR of user `k` for its `j`-th desired codeword.
    pub sinr: Vec<Vec<f64>>,
    pub rates: Vec<f64>,
    /// `min_k R_k / c_k`.
    pub objective: f64,
    pub trace: Vec<TracePoint>,
    /// False when some zero-forcing precoder could not null every
    /// unintended user.
    pub nulling_exact: bool,
    /// SCA steps discarded because they would have lowered the objective.
    pub rejected_steps: usize,
    /// SCA stopped because the convex subproblem made no numerical progress
    /// from the current iterate.
    #[serde(default)]
    pub stalled: bool,
}

impl BeamformerSolution {
    pub fn total_power(&self) -> f64 {
        self.precoders.iter().map(|v| norm_sq(v)).sum()
    }

    /// Checks the power budget, the rate region and SINR consistency.
    pub fn check(&self, problem: &BeamProblem) -> Result<()> {
        let power = self.total_power();
        if power > problem.power * (1.0 + 1e-8) {
            return Err(Error::Solver(format!("power {power} exceeds budget {}", problem.power)));
        }
        let point = Point::from_solution(self, problem);
        let truth = point.evaluate(problem);
        for k in 0..problem.user_count() {
            for (j, g) in self.sinr[k].iter().enumerate() {
                if *g > truth.sinr[k][j] + 1e-6 {
                    return Err(Error::Solver(format!("user {} SINR {g} above achievable {}", k + 1, truth.sinr[k][j])));
                }
            }
            let bound = mac_rate(&self.sinr[k]);
            if self.rates[k] > bound + 1e-8 {
                return Err(Error::Solver(format!("user {} rate {} outside the rate region", k + 1, self.rates[k])));
            }
        }
        Ok(())
    }

    /// Iteration trace as CSV with a leading `#` header line.
    pub fn write_trace_csv<W: std::io::Write>(&self, header: &str, mut out: W) -> Result<()> {
        writeln!(out, "# {header}")?;
        let mut writer = csv::Writer::from_writer(out);
        writer.write_record(["iteration", "objective", "power"])?;
        for p in &self.trace {
            writer.write_record([p.iteration.to_string(), p.objective.to_string(), p.power.to_string()])?;
        }
        writer.flush()?;
        Ok(())
    }
}

/// Precoders in normalized units (power budget one, unit noise).
#[derive(Debug, Clone)]
struct Point {
    v: Vec<Vec<Complex64>>,
}

struct Evaluation {
    sinr: Vec<Vec<f64>>,
    rates: Vec<f64>,
    objective: f64,
}

impl Point {
    fn from_solution(sol: &BeamformerSolution, problem: &BeamProblem) -> Self {
        let s = 1.0 / problem.power.sqrt();
        Self { v: sol.precoders.iter().map(|v| v.iter().map(|x| x * s).collect()).collect() }
    }

    fn power(&self) -> f64 {
        self.v.iter().map(|v| norm_sq(v)).sum()
    }

    fn clamp_power(&mut self) {
        let p = self.power();
        if p > 1.0 {
            let s = 1.0 / p.sqrt();
            for v in &mut self.v {
                for x in v.iter_mut() {
                    *x *= s;
                }
            }
        }
    }

    fn evaluate(&self, problem: &BeamProblem) -> Evaluation {
        let h = problem.scaled_channels();
        let mut sinr = Vec::with_capacity(problem.user_count());
        let mut rates = Vec::with_capacity(problem.user_count());
        let mut objective = f64::INFINITY;
        for k in 0..problem.user_count() {
            let interference: f64 =
                problem.interference(k).iter().map(|&c| inner(&h[k], &self.v[c]).norm_sqr()).sum();
            let g: Vec<f64> = problem
                .desired(k)
                .iter()
                .map(|&c| inner(&h[k], &self.v[c]).norm_sqr() / (1.0 + interference))
                .collect();
            let r = mac_rate(&g);
            objective = objective.min(r / problem.weights[k]);
            sinr.push(g);
            rates.push(r);
        }
        Evaluation { sinr, rates, objective }
    }

    fn into_solution(self, problem: &BeamProblem, method: Method, trace: Vec<TracePoint>) -> BeamformerSolution {
        let eval = self.evaluate(problem);
        let s = problem.power.sqrt();
        BeamformerSolution {
            method,
            users: problem.users.clone(),
            precoders: self.v.iter().map(|v| v.iter().map(|x| x * s).collect()).collect(),
            sinr: eval.sinr,
            rates: eval.rates,
            objective: eval.objective,
            trace,
            nulling_exact: true,
            rejected_steps: 0,
            stalled: false,
        }
    }
}

fn normalize(v: &mut [Complex64]) {
    let n = norm_sq(v).sqrt();
    if n > 0.0 {
        for x in v.iter_mut() {
            *x /= n;
        }
    }
}

fn has_zero_channel(problem: &BeamProblem) -> bool {
    problem.channels.iter().any(|h| norm_sq(h) == 0.0)
}

/// Matched-filter directions with the power split evenly over codewords.
pub fn solve_mrt(problem: &BeamProblem) -> BeamformerSolution {
    let point = mrt_point(problem);
    let objective = point.evaluate(problem).objective;
    let power = point.power();
    point.into_solution(problem, Method::Mrt, vec![TracePoint { iteration: 0, objective, power }])
}

fn mrt_point(problem: &BeamProblem) -> Point {
    let l = problem.antennas();
    let share = (1.0 / problem.codewords.len() as f64).sqrt();
    let v = problem
        .codewords
        .iter()
        .map(|receivers| {
            let mut d = vec![Complex64::new(0.0, 0.0); l];
            for &k in receivers {
                let h = &problem.channels[k];
                let n = norm_sq(h).sqrt();
                if n > 0.0 {
                    for (x, y) in d.iter_mut().zip(h) {
                        *x += y / n;
                    }
                }
            }
            if norm_sq(&d) == 0.0 {
                d[0] = Complex64::new(1.0, 0.0);
            }
            normalize(&mut d);
            d.iter().map(|x| x * share).collect()
        })
        .collect();
    Point { v }
}

/// Orthonormal basis of the directions orthogonal to all `rows`, or of the
/// least-interfering direction when no exact null space exists.
fn null_basis(rows: &[&Vec<Complex64>], antennas: usize) -> (Vec<DVector<Complex64>>, bool) {
    if rows.is_empty() {
        let basis = (0..antennas)
            .map(|i| DVector::from_fn(antennas, |r, _| Complex64::new(if r == i { 1.0 } else { 0.0 }, 0.0)))
            .collect();
        return (basis, true);
    }
    let gram = DMatrix::from_fn(antennas, antennas, |i, j| {
        rows.iter().map(|h| h[i] * h[j].conj()).sum::<Complex64>()
    });
    let eig = gram.symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(f64::MIN_POSITIVE);
    let mut basis: Vec<DVector<Complex64>> = (0..antennas)
        .filter(|&i| eig.eigenvalues[i].abs() <= 1e-10 * scale)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    let exact = !basis.is_empty();
    if !exact {
        let (i, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("nonempty spectrum");
        basis.push(eig.eigenvectors.column(i).into_owned());
    }
    (basis, exact)
}

/// Zero-forcing directions with a max-min power split.
///
/// Each precoder lies in the null space of the users that do not decode
/// it and points along the sum of its receivers' projected channels. The
/// power split maximizes `min R_k / c_k` by bisection on the rate, each
/// step solving a minimum-power linear program.
pub fn solve_zero_forcing(problem: &BeamProblem) -> Result<BeamformerSolution> {
    if has_zero_channel(problem) {
        return Ok(zero_rate_solution(problem));
    }
    let l = problem.antennas();
    let mut exact = true;
    let mut directions = Vec::with_capacity(problem.codewords.len());
    for receivers in &problem.codewords {
        let others: Vec<&Vec<Complex64>> =
            (0..problem.user_count()).filter(|k| !receivers.contains(k)).map(|k| &problem.channels[k]).collect();
        let (basis, ok) = null_basis(&others, l);
        exact &= ok;
        let project = |h: &[Complex64]| -> Vec<Complex64> {
            let mut out = vec![Complex64::new(0.0, 0.0); l];
            for b in &basis {
                let c: Complex64 = b.iter().zip(h).map(|(x, y)| x.conj() * y).sum();
                for (o, x) in out.iter_mut().zip(b.iter()) {
                    *o += x * c;
                }
            }
            out
        };
        let mut d = vec![Complex64::new(0.0, 0.0); l];
        for &k in receivers {
            let mut p = project(&problem.channels[k]);
            normalize(&mut p);
            for (x, y) in d.iter_mut().zip(&p) {
                *x += y;
            }
        }
        if norm_sq(&d) < 1e-24 {
            d = basis[0].iter().copied().collect();
        }
        normalize(&mut d);
        directions.push(d);
    }

    let h = problem.scaled_channels();
    let w = problem.relative_weights();
    let gains: Vec<Vec<f64>> = (0..problem.user_count())
        .map(|k| problem.desired(k).iter().map(|&c| inner(&h[k], &directions[c]).norm_sqr()).collect())
        .collect();
    let powers = max_min_power_split(problem, &gains, &w)?;
    let mut point = Point {
        v: directions.iter().zip(&powers).map(|(d, p)| d.iter().map(|x| x * p.sqrt()).collect()).collect(),
    };
    point.clamp_power();
    let objective = point.evaluate(problem).objective;
    let power = point.power();
    let mut sol = point.into_solution(problem, Method::ZeroForcing, vec![TracePoint { iteration: 0, objective, power }]);
    sol.nulling_exact = exact;
    Ok(sol)
}

/// Codeword powers (summing to one) maximizing the weighted minimum rate
/// when user `k` sees SINR `p_U gains[k][j]` on its `j`-th codeword.
fn max_min_power_split(problem: &BeamProblem, gains: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>> {
    let n_cw = problem.codewords.len();
    let desired: Vec<Vec<usize>> = (0..problem.user_count()).map(|k| problem.desired(k)).collect();
    let min_power = |rate: f64| -> Result<Option<Vec<f64>>> {
        let mut prog = ConicProgram::new(n_cw);
        for c in 0..n_cw {
            prog.minimize(c, 1.0);
        }
        let mut rows: Vec<Row> = (0..n_cw).map(|c| (vec![(c, -1.0)], 0.0)).collect();
        for (k, cws) in desired.iter().enumerate() {
            for mask in 1u64..(1u64 << cws.len()) {
                let members: Vec<usize> = (0..cws.len()).filter(|j| mask >> j & 1 == 1).collect();
                let need = (members.len() as f64 * weights[k] * rate).exp2() - 1.0;
                let coeffs = members.iter().map(|&j| (cws[j], -gains[k][j])).collect();
                rows.push((coeffs, -need));
            }
        }
        prog.nonneg(rows);
        let sol = prog.solve(1e-9)?;
        Ok(match sol.outcome {
            Outcome::Optimal => {
                let p: Vec<f64> = sol.x.iter().map(|x| x.max(0.0)).collect();
                (p.iter().sum::<f64>() <= 1.0 + 1e-9).then_some(p)
            }
            _ => None,
        })
    };

    let mut hi = f64::INFINITY;
    for (k, g) in gains.iter().enumerate() {
        let best = g.iter().copied().fold(0.0, f64::max);
        hi = hi.min((1.0 + best).log2() / weights[k]);
    }
    if !(hi > 0.0) {
        return Ok(vec![1.0 / n_cw as f64; n_cw]);
    }
    let mut lo = 0.0;
    let mut best = vec![1.0 / n_cw as f64; n_cw];
    for _ in 0..100 {
        if hi - lo <= 1e-9 * hi {
            break;
        }
        let mid = 0.5 * (lo + hi);
        match min_power(mid)? {
            Some(p) => {
                lo = mid;
                best = p;
            }
            None => hi = mid,
        }
    }
    // hand the unused budget out proportionally
    let total: f64 = best.iter().sum();
    if total > 0.0 {
        best.iter_mut().for_each(|p| *p /= total);
    }
    Ok(best)
}

fn zero_rate_solution(problem: &BeamProblem) -> BeamformerSolution {
    let mut sol = mrt_point(problem).into_solution(problem, Method::Zero, Vec::new());
    sol.rates.iter_mut().for_each(|r| *r = 0.0);
    sol.sinr.iter_mut().flatten().for_each(|g| *g = 0.0);
    sol.objective = 0.0;
    sol.trace.push(TracePoint { iteration: 0, objective: 0.0, power: sol.total_power() / problem.power });
    sol
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subproblem {
    /// One conic program with exponential-cone rate constraints.
    ExpCone,
    /// Bisection on the rate, each step a second-order-cone feasibility problem.
    Bisection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Start {
    /// Zero forcing when every codeword has an exact null space, else MRT.
    Auto,
    ZeroForcing,
    Mrt,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScaOptions {
    pub max_iters: usize,
    /// Stop when the relative objective gain of an iteration falls below this.
    pub tol: f64,
    pub inner_tol: f64,
    pub subproblem: Subproblem,
    pub start: Start,
}

impl Default for ScaOptions {
    fn default() -> Self {
        Self { max_iters: 30, tol: 1e-4, inner_tol: 1e-6, subproblem: Subproblem::ExpCone, start: Start::Auto }
    }
}

/// Column layout of the subproblem.
struct Columns {
    gamma: Vec<Vec<usize>>,
    v_base: usize,
    antennas: usize,
    total: usize,
}

impl Columns {
    fn new(problem: &BeamProblem) -> Self {
        let mut next = 1;
        let gamma = (0..problem.user_count())
            .map(|k| {
                let d = problem.desired(k).len();
                let cols = (next..next + d).collect();
                next += d;
                cols
            })
            .collect();
        let antennas = problem.antennas();
        let v_base = next;
        let total = v_base + 2 * antennas * problem.codewords.len();
        Self { gamma, v_base, antennas, total }
    }

    fn re(&self, c: usize, l: usize) -> usize {
        self.v_base + 2 * (c * self.antennas + l)
    }

    fn im(&self, c: usize, l: usize) -> usize {
        self.re(c, l) + 1
    }

    /// Coefficients of `Re(h^H v_c)` and `Im(h^H v_c)` over the precoder columns.
    fn projection(&self, h: &[Complex64], c: usize) -> (Vec<(usize, f64)>, Vec<(usize, f64)>) {
        let mut re = Vec::with_capacity(2 * h.len());
        let mut im = Vec::with_capacity(2 * h.len());
        for (l, hl) in h.iter().enumerate() {
            re.push((self.re(c, l), hl.re));
            re.push((self.im(c, l), hl.im));
            im.push((self.re(c, l), -hl.im));
            im.push((self.im(c, l), hl.re));
        }
        (re, im)
    }
}

fn scaled(coeffs: &[(usize, f64)], s: f64) -> Vec<(usize, f64)> {
    coeffs.iter().map(|&(j, v)| (j, v * s)).collect()
}

/// Constraints shared by both subproblem forms: power, `γ >= 0` and the
/// tangent SINR bounds around `point` (whose SINRs are `gamma_bar`).
fn base_program(problem: &BeamProblem, cols: &Columns, point: &Point, gamma_bar: &[Vec<f64>]) -> ConicProgram {
    let h = problem.scaled_channels();
    let mut prog = ConicProgram::new(cols.total);

    let mut power: Vec<Row> = vec![(vec![], 1.0)];
    for c in 0..problem.codewords.len() {
        for l in 0..cols.antennas {
            power.push((vec![(cols.re(c, l), -1.0)], 0.0));
            power.push((vec![(cols.im(c, l), -1.0)], 0.0));
        }
    }
    prog.second_order(power);
    prog.nonneg(cols.gamma.iter().flatten().map(|&j| (vec![(j, -1.0)], 0.0)).collect());

    for k in 0..problem.user_count() {
        let interference = problem.interference(k);
        for (j, &c) in problem.desired(k).iter().enumerate() {
            let a = inner(&h[k], &point.v[c]);
            let g = gamma_bar[k][j].max(1e-12);
            let gamma_col = cols.gamma[k][j];
            // tangent: (2/g) Re(conj(a) h^H v) - (|a|²/g²) γ
            let (re, im) = cols.projection(&h[k], c);
            let mut tangent: Vec<(usize, f64)> = scaled(&re, 2.0 * a.re / g);
            tangent.extend(scaled(&im, 2.0 * a.im / g));
            let curvature = a.norm_sqr() / (g * g);
            let mut lhs: Vec<(usize, f64)> = scaled(&tangent, -1.0);
            lhs.push((gamma_col, curvature));
            if interference.is_empty() {
                // 1 <= tangent
                prog.nonneg(vec![(lhs, -1.0)]);
                continue;
            }
            // Σ_I |h^H v_V|² <= tangent - 1 as a rotated cone
            let mut rows: Vec<Row> = vec![(lhs.clone(), 0.0)];
            for &other in &interference {
                let (re, im) = cols.projection(&h[k], other);
                rows.push((scaled(&re, -2.0), 0.0));
                rows.push((scaled(&im, -2.0), 0.0));
            }
            rows.push((lhs, -2.0));
            prog.second_order(rows);
        }
    }
    prog
}

fn extract_point(problem: &BeamProblem, cols: &Columns, x: &[f64]) -> Point {
    let v = (0..problem.codewords.len())
        .map(|c| (0..cols.antennas).map(|l| Complex64::new(x[cols.re(c, l)], x[cols.im(c, l)])).collect())
        .collect();
    let mut point = Point { v };
    point.clamp_power();
    point
}

enum Step {
    Next(Point),
    Stalled,
}

/// Solves the convex surrogate around `point` and returns its optimizer.
fn solve_subproblem(
    problem: &BeamProblem,
    point: &Point,
    gamma_bar: &[Vec<f64>],
    current: f64,
    options: &ScaOptions,
) -> Result<Step> {
    let cols = Columns::new(problem);
    let w = problem.relative_weights();
    let ln2 = std::f64::consts::LN_2;
    let desired: Vec<usize> = (0..problem.user_count()).map(|k| problem.desired(k).len()).collect();
    let tol = options.inner_tol.min(1e-6).max(1e-10) * 1e-2;

    match options.subproblem {
        Subproblem::ExpCone => {
            let mut prog = base_program(problem, &cols, point, gamma_bar);
            prog.minimize(0, -1.0);
            for k in 0..problem.user_count() {
                for mask in 1u64..(1u64 << desired[k]) {
                    let members: Vec<usize> = (0..desired[k]).filter(|j| mask >> j & 1 == 1).collect();
                    let rate = members.len() as f64 * w[k] * ln2;
                    let sum: Vec<(usize, f64)> = members.iter().map(|&j| (cols.gamma[k][j], -1.0)).collect();
                    prog.exponential([(vec![(0, -rate)], 0.0), (vec![], 1.0), (sum, 1.0)]);
                }
            }
            let sol = prog.solve(tol)?;
            match sol.outcome {
                Outcome::Optimal => Ok(Step::Next(extract_point(problem, &cols, &sol.x))),
                Outcome::Infeasible | Outcome::Failed => Ok(Step::Stalled),
            }
        }
        Subproblem::Bisection => {
            let feasible = |rate: f64| -> Result<Option<Vec<f64>>> {
                let mut prog = base_program(problem, &cols, point, gamma_bar);
                let mut rows = Vec::new();
                for k in 0..problem.user_count() {
                    for mask in 1u64..(1u64 << desired[k]) {
                        let members: Vec<usize> = (0..desired[k]).filter(|j| mask >> j & 1 == 1).collect();
                        let need = (members.len() as f64 * w[k] * rate).exp2() - 1.0;
                        rows.push((members.iter().map(|&j| (cols.gamma[k][j], -1.0)).collect(), -need));
                    }
                }
                prog.nonneg(rows);
                let sol = prog.solve(tol)?;
                Ok((sol.outcome == Outcome::Optimal).then_some(sol.x))
            };
            Ok(match feasibility_bisection(problem, &w, current, options.inner_tol, feasible)? {
                Some(x) => Step::Next(extract_point(problem, &cols, &x)),
                None => Step::Stalled,
            })
        }
    }
}

/// Largest rate in `[lo, hi]` accepted by `feasible`, starting from a
/// known-feasible `lo` (in relative-weight units).
fn feasibility_bisection(
    problem: &BeamProblem,
    weights: &[f64],
    lo: f64,
    inner_tol: f64,
    mut feasible: impl FnMut(f64) -> Result<Option<Vec<f64>>>,
) -> Result<Option<Vec<f64>>> {
    let h = problem.scaled_channels();
    let mut hi = f64::INFINITY;
    for k in 0..problem.user_count() {
        hi = hi.min((1.0 + norm_sq(&h[k])).log2() / weights[k]);
    }
    // the current point satisfies the constraints only up to rounding
    let mut lo = (lo * (1.0 - 1e-7)).max(0.0);
    let mut best = feasible(lo)?;
    if best.is_none() {
        return Ok(None);
    }
    while hi - lo > inner_tol * hi.max(1e-12) {
        let mid = 0.5 * (lo + hi);
        match feasible(mid)? {
            Some(x) => {
                lo = mid;
                best = Some(x);
            }
            None => hi = mid,
        }
    }
    Ok(best)
}

/// Weighted max-min precoders by successive convex approximation.
pub fn solve_wmm_sca(problem: &BeamProblem, options: &ScaOptions) -> Result<BeamformerSolution> {
    if has_zero_channel(problem) {
        return Ok(zero_rate_solution(problem));
    }
    let c_max = problem.weights.iter().copied().fold(0.0, f64::max);
    let start = match options.start {
        Start::Mrt => solve_mrt(problem),
        Start::ZeroForcing => solve_zero_forcing(problem)?,
        Start::Auto => {
            let zf = solve_zero_forcing(problem)?;
            if zf.nulling_exact && zf.objective > 0.0 {
                zf
            } else {
                solve_mrt(problem)
            }
        }
    };
    let nulling_exact = start.nulling_exact;
    let mut point = Point::from_solution(&start, problem);
    let mut eval = point.evaluate(problem);
    let mut trace = vec![TracePoint { iteration: 0, objective: eval.objective, power: point.power() }];
    let mut rejected = 0;
    let mut stalled = false;

    for iteration in 1..=options.max_iters {
        if eval.sinr.iter().flatten().any(|g| *g <= 0.0) {
            break;
        }
        // relative-weight units: R / c_k with c_k / c_max
        let current = eval.objective * c_max;
        let next = match solve_subproblem(problem, &point, &eval.sinr, current, options)? {
            Step::Next(p) => p,
            Step::Stalled => {
                stalled = true;
                break;
            }
        };
        let next_eval = next.evaluate(problem);
        if next_eval.objective < eval.objective {
            rejected += 1;
            break;
        }
        let gain = next_eval.objective - eval.objective;
        point = next;
        eval = next_eval;
        trace.push(TracePoint { iteration, objective: eval.objective, power: point.power() });
        if gain <= options.tol * eval.objective.abs() {
            break;
        }
    }

    let mut sol = point.into_solution(problem, Method::Sca, trace);
    sol.nulling_exact = nulling_exact;
    sol.rejected_steps = rejected;
    sol.stalled = stalled;
    Ok(sol)
}

/// Best objective over `samples` random full-power precoder sets.
pub fn random_search_objective(problem: &BeamProblem, samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let l = problem.antennas();
    let mut best = 0.0f64;
    for _ in 0..samples {
        let mut v: Vec<Vec<Complex64>> = (0..problem.codewords.len()).map(|_| rayleigh_vector(l, &mut rng)).collect();
        let total: f64 = v.iter().map(|x| norm_sq(x)).sum();
        let s = 1.0 / total.sqrt();
        v.iter_mut().flatten().for_each(|x| *x *= s);
        best = best.max(Point { v }.evaluate(problem).objective);
    }
    best
}
