//! Sites of Z² and the rotated coordinates used by every dense slab.
//!
//! Under `(x, y) -> (x + y, x - y)` a simple-random-walk step becomes a pair
//! of independent ±1 moves, so the sites reachable at time `n` form the
//! square `{-n, -n + 2, ..., n}²` and a slab has `(n + 1)²` cells.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Site {
    pub x: i64,
    pub y: i64,
}

/// The four unit steps of the simple random walk.
pub const STEPS: [Site; 4] = [
    Site { x: 1, y: 0 },
    Site { x: -1, y: 0 },
    Site { x: 0, y: 1 },
    Site { x: 0, y: -1 },
];

impl Site {
    pub const ORIGIN: Site = Site { x: 0, y: 0 };

    pub const fn new(x: i64, y: i64) -> Self {
        Site { x, y }
    }

    pub fn l1(self) -> i64 {
        self.x.abs() + self.y.abs()
    }

    pub fn rotated(self) -> (i64, i64) {
        (self.x + self.y, self.x - self.y)
    }

    /// Inverse of [`Site::rotated`]; `a` and `b` must share parity.
    pub fn from_rotated(a: i64, b: i64) -> Self {
        debug_assert_eq!((a - b).rem_euclid(2), 0);
        Site {
            x: (a + b) / 2,
            y: (a - b) / 2,
        }
    }

    pub fn is_neighbor(self, other: Site) -> bool {
        (self - other).l1() == 1
    }

    /// Whether a walk can sit at `self` after exactly `n` steps from the origin.
    pub fn reachable_in(self, n: u64) -> bool {
        let d = self.l1();
        d as u64 <= n && (n as i64 - d).rem_euclid(2) == 0
    }
}

impl std::ops::Add for Site {
    type Output = Site;
    fn add(self, o: Site) -> Site {
        Site::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for Site {
    type Output = Site;
    fn sub(self, o: Site) -> Site {
        Site::new(self.x - o.x, self.y - o.y)
    }
}

impl std::ops::Neg for Site {
    type Output = Site;
    fn neg(self) -> Site {
        Site::new(-self.x, -self.y)
    }
}

impl std::fmt::Display for Site {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.x, self.y)
    }
}

/// Index of displacement `s` inside a time-`n` slab, or `None` when unreachable.
pub fn slab_index(n: u64, s: Site) -> Option<usize> {
    if !s.reachable_in(n) {
        return None;
    }
    let (a, b) = s.rotated();
    let n = n as i64;
    let i = ((a + n) / 2) as usize;
    let j = ((b + n) / 2) as usize;
    Some(i * (n as usize + 1) + j)
}

/// Displacement stored at cell `(i, j)` of a time-`n` slab.
pub fn slab_site(n: u64, i: usize, j: usize) -> Site {
    let n = n as i64;
    Site::from_rotated(2 * i as i64 - n, 2 * j as i64 - n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slab_index_round_trips() {
        for n in 0..6u64 {
            let w = n as usize + 1;
            for i in 0..w {
                for j in 0..w {
                    let s = slab_site(n, i, j);
                    assert!(s.reachable_in(n));
                    assert_eq!(slab_index(n, s), Some(i * w + j));
                }
            }
        }
    }

    #[test]
    fn parity_and_range_gate_reachability() {
        assert!(Site::new(1, 1).reachable_in(2));
        assert!(!Site::new(1, 0).reachable_in(2));
        assert!(!Site::new(3, 0).reachable_in(2));
        assert_eq!(slab_index(2, Site::new(2, 1)), None);
    }
}
