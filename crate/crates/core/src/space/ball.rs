use serde::Serialize;

use super::{MeasuredSpace, PointId, QuasimetricSpace};
use crate::error::{Error, Result};

/// An open ball `{y : d(center, y) < radius}`, or the closed ball when
/// requested explicitly.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ball {
    pub center: PointId,
    pub radius: f64,
    pub closed: bool,
    pub members: Vec<PointId>,
}

/// Ball query by point id. Members are listed in space order.
pub fn ball(space: &QuasimetricSpace, center: &str, radius: f64, closed: bool) -> Result<Ball> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "radius must be positive, got {radius}"
        )));
    }
    let c = space.index_of(center)?;
    let members = space
        .row(c)
        .iter()
        .enumerate()
        .filter(|(_, &d)| if closed { d <= radius } else { d < radius })
        .map(|(i, _)| space.id(i).clone())
        .collect();
    Ok(Ball {
        center: space.id(c).clone(),
        radius,
        closed,
        members,
    })
}

/// Distances from one center to the support of the measure, sorted, with
/// running mass totals. Answers open-ball measure and count queries by
/// binary search.
#[derive(Clone, Debug)]
pub struct RowProfile {
    dist: Vec<f64>,
    cum_mass: Vec<f64>,
}

impl RowProfile {
    pub fn new(mspace: &MeasuredSpace, center: usize) -> Self {
        let row = mspace.space().row(center);
        let mut pairs: Vec<(f64, f64)> = row
            .iter()
            .zip(mspace.mass())
            .filter(|(_, &m)| m > 0.0)
            .map(|(&d, &m)| (d, m))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut total = 0.0;
        let mut cum_mass = Vec::with_capacity(pairs.len());
        let mut dist = Vec::with_capacity(pairs.len());
        for (d, m) in pairs {
            total += m;
            dist.push(d);
            cum_mass.push(total);
        }
        RowProfile { dist, cum_mass }
    }

    /// Number of support points strictly closer than `r`.
    pub fn count(&self, r: f64) -> usize {
        self.dist.partition_point(|&d| d < r)
    }

    /// Measure of the open ball of radius `r`.
    pub fn measure(&self, r: f64) -> f64 {
        match self.count(r) {
            0 => 0.0,
            k => self.cum_mass[k - 1],
        }
    }

    /// Distance to the `k`-th nearest support point (0 is the nearest).
    pub fn kth(&self, k: usize) -> Option<f64> {
        self.dist.get(k).copied()
    }

    pub fn len(&self) -> usize {
        self.dist.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dist.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_line(n: usize) -> QuasimetricSpace {
        QuasimetricSpace::from_fn(n, |i, j| (i as f64 - j as f64).abs()).unwrap()
    }

    #[test]
    fn strict_membership() {
        let s = unit_line(3);
        let b = ball(&s, "1", 1.0, false).unwrap();
        assert_eq!(b.members, vec![PointId::from("1")]);
        let b = ball(&s, "1", 1.5, false).unwrap();
        assert_eq!(b.members.len(), 3);
        let b = ball(&s, "1", 1.0, true).unwrap();
        assert_eq!(b.members.len(), 3);
    }

    #[test]
    fn ball_errors() {
        let s = unit_line(3);
        assert!(matches!(
            ball(&s, "7", 1.0, false),
            Err(Error::UnknownPoint(_))
        ));
        assert!(ball(&s, "0", 0.0, false).is_err());
    }

    #[test]
    fn row_profile_matches_direct_sum() {
        let s = unit_line(10);
        let m = MeasuredSpace::new(s, (1..=10).map(|k| k as f64).collect()).unwrap();
        for c in 0..10 {
            let p = RowProfile::new(&m, c);
            for r in [0.5, 1.0, 1.5, 3.0, 20.0] {
                assert_eq!(p.measure(r), m.ball_measure(c, r, false));
            }
        }
    }

    proptest! {
        #[test]
        fn membership_monotone_in_radius(
            pts in prop::collection::vec(-10.0f64..10.0, 2..20),
            r1 in 0.01f64..5.0,
            extra in 0.0f64..5.0,
        ) {
            let mut pts = pts;
            pts.sort_by(f64::total_cmp);
            pts.dedup();
            prop_assume!(pts.len() >= 2);
            let s = QuasimetricSpace::from_fn(pts.len(), |i, j| (pts[i] - pts[j]).abs()).unwrap();
            for c in s.ids().to_vec() {
                let small = ball(&s, c.as_str(), r1, false).unwrap();
                let large = ball(&s, c.as_str(), r1 + extra, false).unwrap();
                prop_assert!(small.members.contains(&c));
                for m in &small.members {
                    prop_assert!(large.members.contains(m));
                }
            }
        }
    }
}
