//! Cache placement.
//!
//! Each state file is split into subfiles indexed by user subsets `V` with
//! `|V| = t(s)`, and user `k` stores every subfile whose subset contains
//! `k`. A non-integer gain splits the file into two parts placed with the
//! two bracketing integer gains (memory sharing).

use std::collections::BTreeMap;

use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::allocation::MemoryAllocation;
use crate::combinatorics::{binomial, label, subsets};
use crate::error::{Error, Result};
use crate::rational::{self, Size};

/// Gains within this distance of an integer are snapped to it.
pub const INTEGER_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Part {
    Whole,
    /// Placed with gain `⌊t⌋`, size `⌊t⌋ + 1 - t`.
    Lower,
    /// Placed with gain `⌊t⌋ + 1`, size `t - ⌊t⌋`.
    Upper,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SubfileId {
    pub state: usize,
    pub part: Part,
    /// Zero-based user indices, ascending.
    pub subset: Vec<usize>,
}

impl SubfileId {
    pub fn is_cached_by(&self, user: usize) -> bool {
        self.subset.binary_search(&user).is_ok()
    }

    /// Human-readable name such as `s3[2]_{1,4}` (one-based users).
    pub fn name(&self) -> String {
        let part = match self.part {
            Part::Whole => String::new(),
            Part::Lower => "[1]".into(),
            Part::Upper => "[2]".into(),
        };
        format!("s{}{}_{{{}}}", self.state + 1, part, label(&self.subset))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilePart {
    pub part: Part,
    pub gain: usize,
    #[serde(with = "rational::serde_size")]
    pub size: Size,
    #[serde(with = "rational::serde_size")]
    pub subfile_size: Size,
}

/// How one state file is split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSplit {
    #[serde(with = "rational::serde_size")]
    pub gain: Size,
    pub parts: Vec<FilePart>,
}

impl StateSplit {
    pub fn new(gain: f64, user_count: usize) -> Result<Self> {
        let k = user_count as f64;
        if !gain.is_finite() || gain < -INTEGER_SNAP || gain > k + INTEGER_SNAP {
            return Err(Error::Domain(format!("caching gain {gain} outside [0, {user_count}]")));
        }
        let rounded = gain.round();
        let exact = if (gain - rounded).abs() <= INTEGER_SNAP {
            rational::int(rounded as i64)
        } else {
            rational::approximate(gain, 1e-12)
        };
        Ok(Self::from_exact(exact, user_count))
    }

    pub fn from_exact(gain: Size, user_count: usize) -> Self {
        let floor = rational::floor_usize(&gain);
        let lower_size = rational::int(floor as i64 + 1) - &gain;
        let part = |part, gain: usize, size: Size| FilePart {
            subfile_size: &size / rational::int(binomial(user_count, gain) as i64),
            part,
            gain,
            size,
        };
        let parts = if lower_size.is_one() {
            vec![part(Part::Whole, floor, rational::one())]
        } else {
            let upper_size = &gain - rational::int(floor as i64);
            vec![part(Part::Lower, floor, lower_size), part(Part::Upper, floor + 1, upper_size)]
        };
        Self { gain, parts }
    }

    pub fn is_integer(&self) -> bool {
        self.gain.is_integer()
    }

    pub fn floor_gain(&self) -> usize {
        rational::floor_usize(&self.gain)
    }

    pub fn part(&self, part: Part) -> Option<&FilePart> {
        self.parts.iter().find(|p| p.part == part)
    }
}

/// Subfile layout of every state; users store the subfiles whose subset
/// contains them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheLayout {
    pub user_count: usize,
    pub states: Vec<StateSplit>,
}

impl CacheLayout {
    pub fn place(allocation: &MemoryAllocation, user_count: usize) -> Result<Self> {
        let k = user_count as f64;
        let gains: Vec<f64> = allocation.m.iter().map(|m| k * m).collect();
        Self::from_gains(&gains, user_count)
    }

    pub fn from_gains(gains: &[f64], user_count: usize) -> Result<Self> {
        if user_count == 0 {
            return Err(Error::Domain("placement needs at least one user".into()));
        }
        let states = gains.iter().map(|&t| StateSplit::new(t, user_count)).collect::<Result<_>>()?;
        Ok(Self { user_count, states })
    }

    pub fn state_count(&self) -> usize {
        self.states.len()
    }

    pub fn split(&self, state: usize) -> Result<&StateSplit> {
        self.states
            .get(state)
            .ok_or_else(|| Error::Domain(format!("state {state} out of range ({} states)", self.states.len())))
    }

    /// Size of a subfile, or an error when the id does not belong to the layout.
    pub fn subfile_size(&self, id: &SubfileId) -> Result<Size> {
        let split = self.split(id.state)?;
        let part = split
            .part(id.part)
            .ok_or_else(|| Error::Domain(format!("state {} has no {:?} part", id.state + 1, id.part)))?;
        let valid = id.subset.len() == part.gain
            && id.subset.windows(2).all(|w| w[0] < w[1])
            && id.subset.iter().all(|&u| u < self.user_count);
        if !valid {
            return Err(Error::Domain(format!("subfile {} not in layout", id.name())));
        }
        Ok(part.subfile_size.clone())
    }

    /// All subfiles of a state in lexicographic subset order, part by part.
    pub fn inventory(&self, state: usize) -> Result<Vec<SubfileId>> {
        let split = self.split(state)?;
        let mut out = Vec::new();
        for part in &split.parts {
            for subset in subsets(self.user_count, part.gain) {
                out.push(SubfileId { state, part: part.part, subset });
            }
        }
        Ok(out)
    }

    pub fn stored_subfiles(&self, user: usize, state: usize) -> Result<Vec<SubfileId>> {
        self.check_user(user)?;
        Ok(self.inventory(state)?.into_iter().filter(|id| id.is_cached_by(user)).collect())
    }

    pub fn missing_subfiles(&self, user: usize, state: usize) -> Result<Vec<SubfileId>> {
        self.check_user(user)?;
        Ok(self.inventory(state)?.into_iter().filter(|id| !id.is_cached_by(user)).collect())
    }

    /// Cached share of the state file at one user, `t(s) / K` exactly.
    pub fn cached_fraction(&self, user: usize, state: usize) -> Result<Size> {
        self.check_user(user)?;
        let split = self.split(state)?;
        let k = self.user_count;
        Ok(split
            .parts
            .iter()
            .filter(|p| p.gain > 0)
            .map(|p| &p.subfile_size * rational::int(binomial(k - 1, p.gain - 1) as i64))
            .fold(Size::zero(), |acc, x| acc + x))
    }

    pub fn used_memory(&self, user: usize) -> Result<Size> {
        (0..self.states.len()).try_fold(Size::zero(), |acc, s| Ok(acc + self.cached_fraction(user, s)?))
    }

    fn check_user(&self, user: usize) -> Result<()> {
        if user >= self.user_count {
            return Err(Error::Domain(format!("user {user} out of range ({} users)", self.user_count)));
        }
        Ok(())
    }

    /// Per-user list of stored subfile names, keyed by one-based user.
    pub fn dump(&self) -> Result<BTreeMap<usize, Vec<String>>> {
        let mut out = BTreeMap::new();
        for user in 0..self.user_count {
            let mut names = Vec::new();
            for state in 0..self.states.len() {
                names.extend(self.stored_subfiles(user, state)?.iter().map(SubfileId::name));
            }
            out.insert(user + 1, names);
        }
        Ok(out)
    }
}
