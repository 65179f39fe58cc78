use serde::{Deserialize, Serialize};
use std::fmt;

/// A scalar on the half-integer grid, stored as twice its value.
///
/// Side lengths and coordinates of box centers are `Half`s; lattice sites
/// are the `Half`s with even backing integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Half(i64);

impl Half {
    /// The integer `v` as a grid scalar.
    pub fn int(v: i64) -> Self {
        Half(2 * v)
    }

    /// Construct from the doubled backing value (`doubled = 2·value`).
    pub fn from_doubled(doubled: i64) -> Self {
        Half(doubled)
    }

    pub fn doubled(self) -> i64 {
        self.0
    }

    pub fn is_integer(self) -> bool {
        self.0 % 2 == 0
    }

    /// The exact integer value; panics when called on a proper half-integer.
    pub fn to_int(self) -> i64 {
        assert!(self.is_integer(), "{self} is not an integer");
        self.0 / 2
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 2.0
    }

    pub fn abs(self) -> Self {
        Half(self.0.abs())
    }
}

impl std::ops::Add for Half {
    type Output = Half;
    fn add(self, rhs: Half) -> Half {
        Half(self.0 + rhs.0)
    }
}

impl std::ops::Sub for Half {
    type Output = Half;
    fn sub(self, rhs: Half) -> Half {
        Half(self.0 - rhs.0)
    }
}

impl std::ops::Mul<i64> for Half {
    type Output = Half;
    fn mul(self, rhs: i64) -> Half {
        Half(self.0 * rhs)
    }
}

impl fmt::Display for Half {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}
