//! Delivery times and rate diagnostics.

use serde::{Deserialize, Serialize};

use crate::allocation::MemoryAllocation;
use crate::beamforming::BeamformerSolution;
use crate::combinatorics::binomial;
use crate::delivery::{Mode, TransmissionPlan};
use crate::environment::RateMap;
use crate::error::{Error, Result};
use crate::rational;

/// Rates at or below this are treated as zero.
pub const ZERO_RATE: f64 = 1e-12;

/// `max_k c_k / R_k` over users with data; infinite when a user with data
/// has no rate.
pub fn transmission_time(payloads: &[f64], rates: &[f64]) -> f64 {
    payloads
        .iter()
        .zip(rates)
        .filter(|(c, _)| **c > 0.0)
        .map(|(c, r)| if *r <= ZERO_RATE { f64::INFINITY } else { c / r })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionReport {
    pub users: Vec<usize>,
    pub mode: Mode,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeliveryReport {
    pub scheme: String,
    pub seed: u64,
    pub transmissions: Vec<TransmissionReport>,
    pub total_time: f64,
    /// Some user with data got zero rate, so the total time is unbounded.
    pub censored: bool,
    /// Data units delivered to each user.
    pub served: Vec<f64>,
    /// `served_k / total_time`.
    pub effective_rate: Vec<f64>,
}

/// Sums the per-transmission times of a plan given one beamformer solution
/// per transmission.
pub fn total_time(
    plan: &TransmissionPlan,
    solutions: &[BeamformerSolution],
    scheme: &str,
    seed: u64,
) -> Result<DeliveryReport> {
    if solutions.len() != plan.transmissions.len() {
        return Err(Error::Domain(format!(
            "{} transmissions but {} beamformer solutions",
            plan.transmissions.len(),
            solutions.len()
        )));
    }
    let mut served = vec![0.0; plan.user_count];
    let mut transmissions = Vec::with_capacity(solutions.len());
    let mut total = 0.0;
    for (tx, sol) in plan.transmissions.iter().zip(solutions) {
        let weights = tx.weights();
        let payloads: Vec<f64> = sol.users.iter().map(|u| weights.get(u).map(rational::to_f64).unwrap_or(0.0)).collect();
        let time = transmission_time(&payloads, &sol.rates);
        for cw in &tx.codewords {
            for term in &cw.terms {
                served[term.user] += rational::to_f64(&term.size);
            }
        }
        total += time;
        transmissions.push(TransmissionReport { users: tx.users.clone(), mode: tx.mode, time });
    }
    let effective_rate = served.iter().map(|s| if total > 0.0 { s / total } else { 0.0 }).collect();
    Ok(DeliveryReport {
        scheme: scheme.to_string(),
        seed,
        transmissions,
        censored: total.is_infinite(),
        total_time: total,
        served,
        effective_rate,
    })
}

/// Closed-form total time of a multicast plan in which user `k` is served
/// at rate `rates[i][k]` during transmission `i` over user set `sets[i]`:
/// `Σ_i max_{k∈sets[i]} (1 - m_k) / R_{i,k}` divided by
/// `C(K-1, n-1) C(n-1, t̂)` with `n = t̂ + α`.
pub fn closed_form_total_time(
    sets: &[Vec<usize>],
    missing: &[f64],
    rates: &[Vec<f64>],
    t_hat: usize,
    alpha: usize,
) -> f64 {
    let k = missing.len();
    let n = t_hat + alpha;
    let scale = (binomial(k - 1, n - 1) * binomial(n - 1, t_hat)) as f64;
    let sum: f64 = sets
        .iter()
        .zip(rates)
        .map(|(set, r)| {
            set.iter()
                .filter(|&&u| missing[u] > 0.0)
                .map(|&u| if r[u] <= ZERO_RATE { f64::INFINITY } else { missing[u] / r[u] })
                .fold(0.0, f64::max)
        })
        .sum();
    sum / scale
}

/// `K / (t̄ + α) · max_s (1 - m(s)) / r(s)` with `t̄ = K m̄`.
pub fn approx_total_time(allocation: &MemoryAllocation, rate_map: &RateMap, user_count: usize, alpha: usize) -> Result<f64> {
    if allocation.m.len() != rate_map.rates.len() {
        return Err(Error::Domain(format!(
            "allocation covers {} states, rate map {}",
            allocation.m.len(),
            rate_map.rates.len()
        )));
    }
    let k = user_count as f64;
    let t_bar = k * allocation.m_bar;
    let worst = allocation.m.iter().zip(&rate_map.rates).map(|(m, r)| (1.0 - m) / r).fold(0.0, f64::max);
    Ok(k / (t_bar + alpha as f64) * worst)
}

/// Symmetric-rate ratio `(t̂ + α) R_w / ((t + α) R_u)`.
pub fn rate_ratio(r_w: f64, r_u: f64, t_hat: f64, t: f64, alpha: f64) -> Result<f64> {
    if !(r_u > 0.0 && t + alpha > 0.0) {
        return Err(Error::Domain("rate ratio needs positive denominators".into()));
    }
    Ok((t_hat + alpha) * r_w / ((t + alpha) * r_u))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxReport {
    pub approx_total_time: f64,
    pub r_w: f64,
    pub r_u: f64,
    pub r_w_sym: f64,
    pub r_u_sym: f64,
    pub ratio: f64,
}

impl ApproxReport {
    /// Symmetric rates `(t̂ + α) R_w` and `(t + α) R_u` and their ratio.
    pub fn new(approx_total_time: f64, r_w: f64, r_u: f64, t_hat: f64, t: f64, alpha: f64) -> Result<Self> {
        Ok(Self {
            approx_total_time,
            r_w,
            r_u,
            r_w_sym: (t_hat + alpha) * r_w,
            r_u_sym: (t + alpha) * r_u,
            ratio: rate_ratio(r_w, r_u, t_hat, t, alpha)?,
        })
    }
}
