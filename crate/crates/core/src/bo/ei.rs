//! Expected improvement.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Direction {
    #[default]
    Max,
    Min,
}

impl Direction {
    /// Whether `a` improves on `b`.
    pub fn better(&self, a: f64, b: f64) -> bool {
        match self {
            Direction::Max => a > b,
            Direction::Min => a < b,
        }
    }
}

/// `E[max(g − best, 0)]` for `g ~ N(mean, std²)` (mirrored for minimisation).
pub fn ei(mean: f64, std: f64, best: f64, direction: Direction) -> f64 {
    let gain = match direction {
        Direction::Max => mean - best,
        Direction::Min => best - mean,
    };
    if !(std > 0.0) {
        return gain.max(0.0);
    }
    let n = Normal::standard();
    let z = gain / std;
    (std * (z * n.cdf(z) + n.pdf(z))).max(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_points() {
        assert!((ei(0.0, 1.0, 0.0, Direction::Max) - 0.398942).abs() < 1e-6);
        assert_eq!(ei(3.0, 0.0, 0.0, Direction::Max), 3.0);
        assert_eq!(ei(-1.0, 0.0, 0.0, Direction::Max), 0.0);
        assert_eq!(ei(1.0, 2.0, 0.5, Direction::Min), ei(-1.0, 2.0, -0.5, Direction::Max));
    }

    #[test]
    fn vanishes_with_certainty_below_best() {
        assert!(ei(-0.1, 1e-9, 0.0, Direction::Max) < 1e-12);
    }
}
