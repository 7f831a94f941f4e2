//! Coalitions as bitmasks over at most [`MAX_PLAYERS`] players.
//!
//! Player `i` (zero based) is bit `i`; the grand coalition of `n` players is
//! `2^n - 1`. Characteristic functions are stored densely, indexed by
//! `mask - 1`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Exhaustive characteristic functions are only built up to this size.
pub const MAX_PLAYERS: usize = 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Coalition(u32);

impl Coalition {
    pub fn new(mask: u32, n: usize) -> Result<Self> {
        check_player_count(n)?;
        if mask == 0 || mask > grand_mask(n) {
            return Err(Error::domain(format!(
                "coalition mask {mask} is not a non-empty subset of {n} players"
            )));
        }
        Ok(Coalition(mask))
    }

    pub fn from_players(players: &[usize], n: usize) -> Result<Self> {
        let mut mask = 0u32;
        for &p in players {
            if p >= n {
                return Err(Error::domain(format!("player {p} out of range for n = {n}")));
            }
            mask |= 1 << p;
        }
        Coalition::new(mask, n)
    }

    pub fn singleton(player: usize) -> Self {
        Coalition(1 << player)
    }

    pub fn grand(n: usize) -> Self {
        Coalition(grand_mask(n))
    }

    #[inline]
    pub fn mask(self) -> u32 {
        self.0
    }

    /// Position in a dense characteristic-function array.
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize - 1
    }

    #[inline]
    pub fn contains(self, player: usize) -> bool {
        self.0 >> player & 1 == 1
    }

    #[inline]
    pub fn size(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn players(self) -> impl Iterator<Item = usize> {
        let mask = self.0;
        (0..32).filter(move |&i| mask >> i & 1 == 1)
    }

    /// Sum of `values[i]` over members.
    pub fn sum(self, values: &[f64]) -> f64 {
        self.players().map(|i| values[i]).sum()
    }

    pub fn is_grand(self, n: usize) -> bool {
        self.0 == grand_mask(n)
    }
}

impl fmt::Display for Coalition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (k, p) in self.players().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{}", p + 1)?;
        }
        write!(f, "}}")
    }
}

#[inline]
pub fn grand_mask(n: usize) -> u32 {
    ((1u64 << n) - 1) as u32
}

/// Number of non-empty coalitions, `2^n - 1`.
#[inline]
pub fn coalition_count(n: usize) -> usize {
    (1usize << n) - 1
}

pub fn check_player_count(n: usize) -> Result<()> {
    if n < 2 || n > MAX_PLAYERS {
        return Err(Error::domain(format!(
            "player count must lie in 2..={MAX_PLAYERS}, got {n}"
        )));
    }
    Ok(())
}

/// All non-empty coalitions in ascending mask order.
pub fn all(n: usize) -> impl Iterator<Item = Coalition> {
    (1..=grand_mask(n)).map(Coalition)
}

/// All non-empty coalitions other than the grand coalition.
pub fn proper(n: usize) -> impl Iterator<Item = Coalition> {
    (1..grand_mask(n)).map(Coalition)
}

/// Coalition sums `x(S)` for every non-empty `S`, indexed by `mask - 1`.
///
/// Built with the lowest-bit recurrence, so the cost is one addition per
/// coalition.
pub fn subset_sums(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut sums = vec![0.0; coalition_count(n) + 1];
    for mask in 1..sums.len() {
        let low = mask.trailing_zeros() as usize;
        sums[mask] = sums[mask & (mask - 1)] + values[low];
    }
    sums.remove(0);
    sums
}

/// `C(n, k)` as a float; exact for the small arguments used here.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}
