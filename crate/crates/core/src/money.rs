//! Fixed-precision money used at ledger boundaries.
//!
//! Payoff and equilibrium formulas run on `f64`. Amounts only become
//! [`Money`] when they are written into a [`crate::engine::Ledger`], so
//! totals there are exact integer sums and the provision point can be hit
//! with zero tolerance.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

/// Default number of decimal places kept in the ledger (10⁻⁹).
pub const DEFAULT_DECIMALS: u32 = 9;

/// An amount stored as an integer count of `10^-decimals` units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Money(i128);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn from_units(units: i128) -> Self {
        Money(units)
    }

    pub fn units(self) -> i128 {
        self.0
    }

    /// Round `value` to the nearest unit of `10^-decimals`.
    pub fn from_f64(value: f64, decimals: u32) -> Self {
        Money((value * scale(decimals)).round() as i128)
    }

    pub fn to_f64(self, decimals: u32) -> f64 {
        self.0 as f64 / scale(decimals)
    }

    pub fn min(self, other: Money) -> Money {
        Money(self.0.min(other.0))
    }

    pub fn max(self, other: Money) -> Money {
        Money(self.0.max(other.0))
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

fn scale(decimals: u32) -> f64 {
    10f64.powi(decimals as i32)
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}u", self.0)
    }
}

/// Round a formula output to ledger precision for serialization.
pub fn round_to(value: f64, decimals: u32) -> f64 {
    Money::from_f64(value, decimals).to_f64(decimals)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rounds_to_nearest_unit() {
        assert_eq!(Money::from_f64(1.0000000004, 9).units(), 1_000_000_000);
        assert_eq!(Money::from_f64(1.0000000006, 9).units(), 1_000_000_001);
        assert_eq!(Money::from_f64(2.5, 0).units(), 3);
    }

    #[test]
    fn integer_sums_are_exact() {
        let parts = [0.1, 0.2, 0.3, 0.4];
        let total: Money = parts.iter().map(|&p| Money::from_f64(p, 9)).sum();
        assert_eq!(total, Money::from_f64(1.0, 9));
    }

    #[test]
    fn round_to_matches_precision() {
        assert_eq!(round_to(1.23456789012, 9), 1.23456789);
        assert_eq!(round_to(0.125, 2), 0.13);
    }
}
