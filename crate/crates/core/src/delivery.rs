//! Delivery planning.
//!
//! A plan is a list of transmissions. Each transmission serves a user set
//! `K̄` with one codeword per target set `U ⊆ K̄`; the codeword nests, for
//! every recipient `k ∈ U`, segments of subfiles that all other members of
//! `U` already hold. Subfiles are cut into equal chunks and a per-subfile
//! cursor hands out chunks in enumeration order, so no chunk is sent twice.
//!
//! Three builders are provided: the plain multicast schedule driven by the
//! common gain `t̂`, the phantom variant that sets aside the users limiting
//! `t̂` and serves them by unicast, and a pure unicast baseline. The
//! verifier replays any plan against the cache layout with exact rational
//! arithmetic.

use std::collections::{BTreeMap, HashMap};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::combinatorics::{binomial, is_subset, label, subsets, subsets_of};
use crate::error::{Error, Result};
use crate::placement::{CacheLayout, SubfileId};
use crate::rational::{self, Size};

/// What one user requests in the current slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserDemand {
    pub user: usize,
    pub state: usize,
    #[serde(with = "rational::serde_size")]
    pub gain: Size,
    #[serde(with = "rational::serde_size")]
    pub missing: Size,
}

impl UserDemand {
    pub fn floor_gain(&self) -> usize {
        rational::floor_usize(&self.gain)
    }
}

/// Demands of users located at `user_states` (one entry per user).
pub fn user_demands(layout: &CacheLayout, user_states: &[usize]) -> Result<Vec<UserDemand>> {
    if user_states.len() != layout.user_count {
        return Err(Error::Domain(format!(
            "layout built for {} users, got {} user states",
            layout.user_count,
            user_states.len()
        )));
    }
    let k = rational::int(layout.user_count as i64);
    user_states
        .iter()
        .enumerate()
        .map(|(user, &state)| {
            let gain = layout.split(state)?.gain.clone();
            let missing = rational::one() - &gain / &k;
            Ok(UserDemand { user, state, gain, missing })
        })
        .collect()
}

/// Common gain `t̂ = min_k ⌊t_k⌋`.
pub fn common_gain(demands: &[UserDemand]) -> usize {
    demands.iter().map(UserDemand::floor_gain).min().unwrap_or(0)
}

/// Chunk `chunk` of `pieces` equal chunks of a subfile, i.e. the interval
/// `[chunk/pieces, (chunk+1)/pieces)` of it.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SegmentId {
    pub subfile: SubfileId,
    pub chunk: usize,
    pub pieces: usize,
}

impl SegmentId {
    pub fn whole(subfile: SubfileId) -> Self {
        Self { subfile, chunk: 0, pieces: 1 }
    }

    pub fn start(&self) -> Size {
        rational::frac(self.chunk as i64, self.pieces as i64)
    }

    pub fn end(&self) -> Size {
        rational::frac(self.chunk as i64 + 1, self.pieces as i64)
    }

    /// Name such as `s1[2]_{23}^2`; the chunk superscript is one-based and
    /// omitted for whole subfiles.
    pub fn name(&self) -> String {
        if self.pieces == 1 {
            self.subfile.name()
        } else {
            format!("{}^{}", self.subfile.name(), self.chunk + 1)
        }
    }
}

/// Data nested for one recipient inside a codeword.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataTerm {
    pub user: usize,
    pub segments: Vec<SegmentId>,
    #[serde(with = "rational::serde_size")]
    pub size: Size,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codeword {
    /// Target set `U`, possibly including set-aside users that receive nothing.
    pub targets: Vec<usize>,
    pub terms: Vec<DataTerm>,
}

impl Codeword {
    /// Users that actually receive data from this codeword.
    pub fn recipients(&self) -> Vec<usize> {
        self.terms.iter().map(|t| t.user).collect()
    }

    pub fn term(&self, user: usize) -> Option<&DataTerm> {
        self.terms.iter().find(|t| t.user == user)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Multicast,
    PhantomMulticast,
    Unicast,
    TopupUnicast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transmission {
    /// Serving set `K̄`.
    pub users: Vec<usize>,
    pub mode: Mode,
    pub codewords: Vec<Codeword>,
}

impl Transmission {
    /// Per-recipient message size `c_k`, the largest term the user gets in
    /// this transmission. Users without data are absent.
    pub fn weights(&self) -> BTreeMap<usize, Size> {
        let mut out: BTreeMap<usize, Size> = BTreeMap::new();
        for term in self.codewords.iter().flat_map(|c| &c.terms) {
            if term.size.is_zero() {
                continue;
            }
            let entry = out.entry(term.user).or_insert_with(Size::zero);
            if term.size > *entry {
                *entry = term.size.clone();
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanKind {
    Multicast,
    Phantom,
    Unicast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransmissionPlan {
    pub kind: PlanKind,
    pub user_count: usize,
    pub alpha: usize,
    /// Gain the target sets were built with (`t̂`, or `t̄` for phantom plans).
    pub common_gain: usize,
    /// Number of users per multicast transmission.
    pub transmission_size: usize,
    pub phantom_excluded: Vec<usize>,
    pub transmissions: Vec<Transmission>,
}

impl TransmissionPlan {
    fn empty(kind: PlanKind, user_count: usize, alpha: usize, common_gain: usize, transmission_size: usize) -> Self {
        Self {
            kind,
            user_count,
            alpha,
            common_gain,
            transmission_size,
            phantom_excluded: Vec::new(),
            transmissions: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.transmissions.is_empty()
    }

    pub fn segment_count(&self) -> usize {
        self.terms().map(|(_, _, t)| t.segments.len()).sum()
    }

    /// Every data term with its transmission and codeword.
    pub fn terms(&self) -> impl Iterator<Item = (&Transmission, &Codeword, &DataTerm)> {
        self.transmissions
            .iter()
            .flat_map(|tx| tx.codewords.iter().flat_map(move |cw| cw.terms.iter().map(move |t| (tx, cw, t))))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// SHA-256 of the canonical compact JSON encoding.
    pub fn content_hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    /// One line per codeword, e.g. `tx 1 {1,2,3} | U={1,2}: 1<- s1_{2}^1 ; 2<- ...`.
    pub fn describe(&self) -> String {
        let mut out = String::new();
        for (i, tx) in self.transmissions.iter().enumerate() {
            for cw in &tx.codewords {
                let terms: Vec<String> = cw
                    .terms
                    .iter()
                    .map(|t| {
                        let segs: Vec<String> = t.segments.iter().map(SegmentId::name).collect();
                        format!("{}<- {}", t.user + 1, segs.join(" "))
                    })
                    .collect();
                out.push_str(&format!(
                    "tx {} {{{}}} {:?} | U={{{}}}: {}\n",
                    i + 1,
                    label(&tx.users),
                    tx.mode,
                    label(&cw.targets),
                    terms.join(" ; ")
                ));
            }
        }
        out
    }
}

fn size_of(n: u64) -> Size {
    rational::int(n as i64)
}

/// Shared machinery of the multicast builders.
struct Scheduler<'a> {
    demands: &'a [UserDemand],
    layout: &'a CacheLayout,
    gain: usize,
    transmission_size: usize,
    cursors: HashMap<(usize, SubfileId), usize>,
}

impl<'a> Scheduler<'a> {
    fn new(demands: &'a [UserDemand], layout: &'a CacheLayout, gain: usize, transmission_size: usize) -> Self {
        Self { demands, layout, gain, transmission_size, cursors: HashMap::new() }
    }

    fn user_count(&self) -> usize {
        self.layout.user_count
    }

    /// `G_{U,k}`: one fresh chunk of every subfile `V` with `U \ {k} ⊆ V`, `k ∉ V`.
    fn term(&mut self, targets: &[usize], user: usize) -> Result<Option<DataTerm>> {
        let k_total = self.user_count();
        let demand = &self.demands[user];
        let split = self.layout.split(demand.state)?;
        let others: Vec<usize> = targets.iter().copied().filter(|&u| u != user).collect();
        let outside: Vec<usize> = (0..k_total).filter(|u| !targets.contains(u)).collect();
        let mut segments = Vec::new();
        let mut size = Size::zero();
        for part in &split.parts {
            if part.gain == k_total {
                continue;
            }
            if part.gain < self.gain {
                return Err(Error::Schedule(format!(
                    "user {} has part gain {} below the common gain {}",
                    user + 1,
                    part.gain,
                    self.gain
                )));
            }
            let pieces = binomial(part.gain, self.gain)
                * binomial(k_total - self.gain - 1, self.transmission_size - self.gain - 1);
            let pieces = pieces as usize;
            let segment_size = &part.subfile_size / size_of(pieces as u64);
            let mut suitable: Vec<Vec<usize>> = subsets_of(&outside, part.gain - self.gain)
                .into_iter()
                .map(|extra| {
                    let mut v: Vec<usize> = others.iter().chain(&extra).copied().collect();
                    v.sort_unstable();
                    v
                })
                .collect();
            suitable.sort();
            for subset in suitable {
                let subfile = SubfileId { state: demand.state, part: part.part, subset };
                let cursor = self.cursors.entry((user, subfile.clone())).or_insert(0);
                if *cursor >= pieces {
                    return Err(Error::Schedule(format!("subfile {} exhausted for user {}", subfile.name(), user + 1)));
                }
                segments.push(SegmentId { subfile, chunk: *cursor, pieces });
                *cursor += 1;
                size += &segment_size;
            }
        }
        Ok((!segments.is_empty()).then_some(DataTerm { user, segments, size }))
    }

    /// One transmission per `K̄` of the configured size, skipping those
    /// rejected by `skip`; only users accepted by `receives` get data.
    fn run(
        &mut self,
        mode: Mode,
        skip: impl Fn(&[usize]) -> bool,
        receives: impl Fn(usize) -> bool,
    ) -> Result<Vec<Transmission>> {
        let mut out = Vec::new();
        if self.gain + 1 > self.transmission_size || self.transmission_size > self.user_count() {
            return Ok(out);
        }
        for users in subsets(self.user_count(), self.transmission_size) {
            if skip(&users) {
                continue;
            }
            let mut codewords = Vec::new();
            for targets in subsets_of(&users, self.gain + 1) {
                let mut terms = Vec::new();
                for &k in targets.iter().filter(|&&k| receives(k)) {
                    if let Some(term) = self.term(&targets, k)? {
                        terms.push(term);
                    }
                }
                if !terms.is_empty() {
                    codewords.push(Codeword { targets, terms });
                }
            }
            if !codewords.is_empty() {
                out.push(Transmission { users, mode, codewords });
            }
        }
        Ok(out)
    }
}

fn check_inputs(demands: &[UserDemand], layout: &CacheLayout, alpha: usize) -> Result<()> {
    if alpha == 0 {
        return Err(Error::Config("spatial multiplexing gain must be at least 1".into()));
    }
    if demands.len() != layout.user_count {
        return Err(Error::Domain(format!(
            "{} demands for a layout of {} users",
            demands.len(),
            layout.user_count
        )));
    }
    for (i, d) in demands.iter().enumerate() {
        if d.user != i {
            return Err(Error::Domain(format!("demand {i} belongs to user {}", d.user)));
        }
        if layout.split(d.state)?.gain != d.gain {
            return Err(Error::Domain(format!("demand of user {} disagrees with the layout", i + 1)));
        }
    }
    Ok(())
}

/// Multicast schedule with `|K̄| = t̂ + α`.
///
/// Fails with [`Error::Schedule`] when `t̂ + α > K`; use
/// [`build_capped_multicast_plan`], [`build_phantom_plan`] or
/// [`build_unicast_plan`] in that case.
pub fn build_multicast_plan(
    demands: &[UserDemand],
    layout: &CacheLayout,
    alpha: usize,
    t_hat: usize,
) -> Result<TransmissionPlan> {
    check_inputs(demands, layout, alpha)?;
    let k = layout.user_count;
    if t_hat + alpha > k {
        return Err(Error::Schedule(format!(
            "t̂ + α = {} exceeds the user count {k}; use the phantom or unicast plan",
            t_hat + alpha
        )));
    }
    if t_hat > common_gain(demands) {
        return Err(Error::Schedule(format!("t̂ = {t_hat} exceeds the common gain {}", common_gain(demands))));
    }
    multicast_with_size(demands, layout, alpha, t_hat, t_hat + alpha)
}

/// Multicast schedule at the common gain with `|K̄| = min(t̂ + α, K)`.
pub fn build_capped_multicast_plan(
    demands: &[UserDemand],
    layout: &CacheLayout,
    alpha: usize,
) -> Result<TransmissionPlan> {
    check_inputs(demands, layout, alpha)?;
    let t_hat = common_gain(demands);
    let size = (t_hat + alpha).min(layout.user_count);
    multicast_with_size(demands, layout, alpha, t_hat, size)
}

fn multicast_with_size(
    demands: &[UserDemand],
    layout: &CacheLayout,
    alpha: usize,
    gain: usize,
    size: usize,
) -> Result<TransmissionPlan> {
    let mut plan = TransmissionPlan::empty(PlanKind::Multicast, layout.user_count, alpha, gain, size);
    plan.transmissions = Scheduler::new(demands, layout, gain, size).run(Mode::Multicast, |_| false, |_| true)?;
    Ok(plan)
}

/// Phantom-user schedule.
///
/// When `t̂ < t_target`, the users with `⌊t_k⌋ = t̂` form `K_p` and are
/// served by unicast, while the remaining users get a multicast schedule at
/// `t̄ = min_{k ∉ K_p} ⌊t_k⌋` in which `K_p` members only fill target sets.
/// Transmissions with fewer than `α` real users are dropped and any data
/// they would have carried is sent by top-up unicast. Without a gain
/// shortfall, or with too few users left (`|K \ K_p| < t̂ + α`), this is the
/// capped multicast plan.
pub fn build_phantom_plan(
    demands: &[UserDemand],
    layout: &CacheLayout,
    alpha: usize,
    t_target: usize,
) -> Result<TransmissionPlan> {
    check_inputs(demands, layout, alpha)?;
    let k = layout.user_count;
    let t_hat = common_gain(demands);
    if t_hat >= t_target {
        return build_capped_multicast_plan(demands, layout, alpha);
    }
    let excluded: Vec<usize> = demands.iter().filter(|d| d.floor_gain() == t_hat).map(|d| d.user).collect();
    let remaining = k - excluded.len();
    if remaining == 0 || remaining < t_hat + alpha {
        return build_capped_multicast_plan(demands, layout, alpha);
    }
    let t_bar = demands
        .iter()
        .filter(|d| !excluded.contains(&d.user))
        .map(UserDemand::floor_gain)
        .min()
        .expect("nonempty remaining set");
    let size = (t_bar + alpha).min(k);

    let mut plan = TransmissionPlan::empty(PlanKind::Phantom, k, alpha, t_bar, size);
    plan.phantom_excluded = excluded.clone();
    let is_excluded = |u: usize| excluded.contains(&u);
    plan.transmissions = Scheduler::new(demands, layout, t_bar, size).run(
        Mode::PhantomMulticast,
        |users| users.iter().filter(|&&u| !is_excluded(u)).count() < alpha,
        |u| !is_excluded(u),
    )?;
    plan.transmissions.extend(unicast_transmissions(demands, layout, &excluded, alpha, Mode::Unicast)?);

    let check = verify(&plan, demands, layout)?;
    plan.transmissions.extend(topup_unicast(&check.residuals, alpha)?.transmissions);
    Ok(plan)
}

fn unicast_transmissions(
    demands: &[UserDemand],
    layout: &CacheLayout,
    users: &[usize],
    alpha: usize,
    mode: Mode,
) -> Result<Vec<Transmission>> {
    let mut terms = Vec::new();
    for &user in users {
        let demand = &demands[user];
        let mut segments = Vec::new();
        let mut size = Size::zero();
        for subfile in layout.missing_subfiles(user, demand.state)? {
            size += layout.subfile_size(&subfile)?;
            segments.push(SegmentId::whole(subfile));
        }
        if !segments.is_empty() {
            terms.push(DataTerm { user, segments, size });
        }
    }
    Ok(batch_terms(terms, alpha, mode))
}

fn batch_terms(terms: Vec<DataTerm>, alpha: usize, mode: Mode) -> Vec<Transmission> {
    let alpha = alpha.max(1);
    let mut out = Vec::new();
    let mut iter = terms.into_iter().peekable();
    while iter.peek().is_some() {
        let batch: Vec<DataTerm> = iter.by_ref().take(alpha).collect();
        out.push(Transmission {
            users: batch.iter().map(|t| t.user).collect(),
            mode,
            codewords: batch.into_iter().map(|t| Codeword { targets: vec![t.user], terms: vec![t] }).collect(),
        });
    }
    out
}

/// Every user with missing data gets its whole remainder in a single-user
/// codeword; users are batched `α` at a time in index order.
pub fn build_unicast_plan(demands: &[UserDemand], layout: &CacheLayout, alpha: usize) -> Result<TransmissionPlan> {
    check_inputs(demands, layout, alpha)?;
    let users: Vec<usize> = (0..demands.len()).collect();
    let mut plan = TransmissionPlan::empty(PlanKind::Unicast, layout.user_count, alpha, 0, 1);
    plan.transmissions = unicast_transmissions(demands, layout, &users, alpha, Mode::Unicast)?;
    Ok(plan)
}

/// Undelivered pieces of one user's request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub user: usize,
    pub segments: Vec<SegmentId>,
    #[serde(with = "rational::serde_size")]
    pub size: Size,
}

/// Unicast transmissions carrying the residuals, `α` users per transmission.
pub fn topup_unicast(residuals: &[Residual], alpha: usize) -> Result<TransmissionPlan> {
    if alpha == 0 {
        return Err(Error::Config("spatial multiplexing gain must be at least 1".into()));
    }
    let user_count = residuals.iter().map(|r| r.user + 1).max().unwrap_or(0);
    let terms: Vec<DataTerm> = residuals
        .iter()
        .filter(|r| !r.segments.is_empty())
        .map(|r| DataTerm { user: r.user, segments: r.segments.clone(), size: r.size.clone() })
        .collect();
    let mut plan = TransmissionPlan::empty(PlanKind::Unicast, user_count, alpha, 0, 1);
    plan.transmissions = batch_terms(terms, alpha, Mode::TopupUnicast);
    Ok(plan)
}

/// Result of replaying a plan against the caches.
#[derive(Debug, Clone, PartialEq)]
pub struct DeliveryCheck {
    pub delivered: Vec<Size>,
    pub residuals: Vec<Residual>,
}

impl DeliveryCheck {
    pub fn is_complete(&self) -> bool {
        self.residuals.is_empty()
    }
}

/// Replays the plan: sums the distinct data each user receives and lists
/// what is still missing.
///
/// Overlapping segments, segments of a file the recipient did not request,
/// and segments the recipient already caches are plan-invariant errors.
pub fn verify(plan: &TransmissionPlan, demands: &[UserDemand], layout: &CacheLayout) -> Result<DeliveryCheck> {
    let mut received: BTreeMap<(usize, SubfileId), Vec<(Size, Size)>> = BTreeMap::new();
    for (tx, cw, term) in plan.terms() {
        let user = term.user;
        let demand = demands
            .get(user)
            .ok_or_else(|| Error::PlanInvariant(format!("term for unknown user {}", user + 1)))?;
        if !cw.targets.contains(&user) || !tx.users.contains(&user) {
            return Err(Error::PlanInvariant(format!("user {} receives from a codeword not aimed at it", user + 1)));
        }
        for seg in &term.segments {
            if seg.pieces == 0 || seg.chunk >= seg.pieces {
                return Err(Error::PlanInvariant(format!("malformed segment {}", seg.name())));
            }
            if seg.subfile.state != demand.state {
                return Err(Error::PlanInvariant(format!(
                    "user {} requests state {} but receives {}",
                    user + 1,
                    demand.state + 1,
                    seg.name()
                )));
            }
            layout.subfile_size(&seg.subfile).map_err(|e| Error::PlanInvariant(e.to_string()))?;
            if seg.subfile.is_cached_by(user) {
                return Err(Error::PlanInvariant(format!("user {} already caches {}", user + 1, seg.name())));
            }
            received.entry((user, seg.subfile.clone())).or_default().push((seg.start(), seg.end()));
        }
    }

    let mut delivered = vec![Size::zero(); demands.len()];
    for ((user, subfile), intervals) in received.iter_mut() {
        intervals.sort();
        for pair in intervals.windows(2) {
            if pair[1].0 < pair[0].1 {
                return Err(Error::PlanInvariant(format!(
                    "user {} receives overlapping pieces of {}",
                    user + 1,
                    subfile.name()
                )));
            }
        }
        let covered: Size = intervals.iter().map(|(a, b)| b - a).fold(Size::zero(), |x, y| x + y);
        delivered[*user] += covered * layout.subfile_size(subfile)?;
    }

    let mut residuals = Vec::new();
    for demand in demands {
        let mut segments = Vec::new();
        let mut size = Size::zero();
        for subfile in layout.missing_subfiles(demand.user, demand.state)? {
            let sub_size = layout.subfile_size(&subfile)?;
            let covered = received.get(&(demand.user, subfile.clone())).cloned().unwrap_or_default();
            for (start, end) in gaps(&covered) {
                size += (&end - &start) * &sub_size;
                segments.extend(interval_segments(&subfile, &start, &end));
            }
        }
        if !segments.is_empty() {
            residuals.push(Residual { user: demand.user, segments, size });
        }
    }
    Ok(DeliveryCheck { delivered, residuals })
}

/// Uncovered parts of `[0, 1)` given sorted disjoint intervals.
fn gaps(covered: &[(Size, Size)]) -> Vec<(Size, Size)> {
    let mut out = Vec::new();
    let mut cursor = Size::zero();
    for (a, b) in covered {
        if *a > cursor {
            out.push((cursor.clone(), a.clone()));
        }
        if *b > cursor {
            cursor = b.clone();
        }
    }
    if cursor < rational::one() {
        out.push((cursor, rational::one()));
    }
    out
}

/// Chunks of a common grid exactly tiling `[start, end)`.
fn interval_segments(subfile: &SubfileId, start: &Size, end: &Size) -> Vec<SegmentId> {
    let n: BigInt = start.denom().lcm(end.denom());
    let pieces = n.to_usize().expect("segment grid fits in usize");
    let first = (start * Size::from_integer(n.clone())).to_integer().to_usize().unwrap_or(0);
    let last = (end * Size::from_integer(n)).to_integer().to_usize().unwrap_or(0);
    (first..last).map(|chunk| SegmentId { subfile: subfile.clone(), chunk, pieces }).collect()
}

/// [`verify`] plus the exact completeness assertion `delivered_k = 1 - m_k`
/// for multicast plans. Other plan kinds are returned unchecked.
pub fn verify_completeness(
    plan: &TransmissionPlan,
    demands: &[UserDemand],
    layout: &CacheLayout,
) -> Result<DeliveryCheck> {
    let check = verify(plan, demands, layout)?;
    if plan.kind == PlanKind::Multicast {
        for demand in demands {
            let got = &check.delivered[demand.user];
            if *got != demand.missing {
                return Err(Error::PlanInvariant(format!(
                    "user {} receives {} of {} missing units",
                    demand.user + 1,
                    got,
                    demand.missing
                )));
            }
        }
    }
    Ok(check)
}

/// Every segment meant for `k` is cached by all other targets of its codeword.
pub fn check_cache_cancellation(plan: &TransmissionPlan) -> Result<()> {
    for (_, cw, term) in plan.terms() {
        let others: Vec<usize> = cw.targets.iter().copied().filter(|&u| u != term.user).collect();
        for seg in &term.segments {
            if !is_subset(&others, &seg.subfile.subset) {
                return Err(Error::PlanInvariant(format!(
                    "{} for user {} is not cached by all of {{{}}}",
                    seg.name(),
                    term.user + 1,
                    label(&others)
                )));
            }
        }
    }
    Ok(())
}

/// For multicast plans: each user with missing data appears in
/// `C(K-1, n-1)` transmissions and in `C(n-1, g)` codewords of each, with
/// `n` the transmission size and `g` the common gain.
pub fn check_counting(plan: &TransmissionPlan, demands: &[UserDemand]) -> Result<()> {
    if plan.kind != PlanKind::Multicast {
        return Ok(());
    }
    let n = plan.transmission_size;
    let g = plan.common_gain;
    let tx_expected = binomial(plan.user_count - 1, n - 1) as usize;
    let cw_expected = binomial(n - 1, g) as usize;
    for demand in demands.iter().filter(|d| d.missing.is_positive()) {
        let k = demand.user;
        let txs: Vec<&Transmission> = plan.transmissions.iter().filter(|t| t.users.contains(&k)).collect();
        if txs.len() != tx_expected {
            return Err(Error::PlanInvariant(format!(
                "user {} in {} transmissions, expected {tx_expected}",
                k + 1,
                txs.len()
            )));
        }
        for tx in txs {
            let count = tx.codewords.iter().filter(|c| c.term(k).is_some()).count();
            if count != cw_expected {
                return Err(Error::PlanInvariant(format!(
                    "user {} in {count} codewords of {{{}}}, expected {cw_expected}",
                    k + 1,
                    label(&tx.users)
                )));
            }
        }
    }
    Ok(())
}

/// Closed-form message size `c_k = (1 - m_k) / (C(K-1, n-1) C(n-1, g))`.
pub fn payload_formula(missing: &Size, user_count: usize, transmission_size: usize, gain: usize) -> Size {
    let n = transmission_size;
    missing / size_of(binomial(user_count - 1, n - 1) * binomial(n - 1, gain))
}

/// For multicast plans: every data term, measured from its segments, has
/// the closed-form size exactly.
pub fn check_payloads(plan: &TransmissionPlan, demands: &[UserDemand], layout: &CacheLayout) -> Result<()> {
    if plan.kind != PlanKind::Multicast {
        return Ok(());
    }
    for (_, _, term) in plan.terms() {
        let expected =
            payload_formula(&demands[term.user].missing, plan.user_count, plan.transmission_size, plan.common_gain);
        let mut measured = Size::zero();
        for seg in &term.segments {
            measured += layout.subfile_size(&seg.subfile)? * (seg.end() - seg.start());
        }
        if measured != expected || term.size != expected {
            return Err(Error::PlanInvariant(format!(
                "user {} term measures {measured} (recorded {}), expected {expected}",
                term.user + 1,
                term.size
            )));
        }
    }
    Ok(())
}
