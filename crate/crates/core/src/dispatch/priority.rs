//! Job priority: the slowdown a job would have if it started now.

use num_rational::Ratio;

/// `(t - q + d) / d`; larger is more urgent.
pub fn priority(t: i64, q: i64, d: i64) -> Ratio<i64> {
    let d = d.max(1);
    Ratio::new(t - q + d, d)
}
