//! Finite quasimetric measure spaces.
//!
//! A [`QuasimetricSpace`] is a finite set of named points with a symmetric,
//! positive-definite distance table. Nothing else is assumed: the triangle
//! inequality is replaced by the relaxed inequality
//! `d(x,z) <= K * max(d(x,y), d(y,z))`, and the best `K` is computed from the
//! table rather than assumed (see [`quasimetric_constant`]).
//!
//! A space may carry one point tagged as the point at infinity of a one-point
//! extension. In a [`MeasuredSpace`] that point always has zero mass, so it
//! never contributes to ball measures.

mod ball;
mod estimate;
mod radii;

pub use ball::{ball, Ball, RowProfile};
pub use estimate::{
    ahlfors_fit, cover_size, measure_doubling_constant, metric_doubling_constant,
    quasimetric_constant, quasimetric_constant_with_witness, structure_report,
    uniform_perfectness, AhlforsFit, CoverMode, FitOptions, MeasureDoubling, MetricDoubling,
    StructureReport, UniformPerfectness, EXACT_COVER_LIMIT, TAU_GRID_STEPS,
};
pub use radii::{default_radii, log_spaced, resolution_radii, scale_window, ScaleWindow};

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize};

use crate::error::{Error, Result};

/// Relative tolerance used when comparing derived distances.
pub const REL_TOL: f64 = 1e-9;

/// Opaque point identifier. Files may use strings or integers; both are
/// stored as strings.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(transparent)]
pub struct PointId(String);

impl PointId {
    pub fn new(id: impl Into<String>) -> Self {
        PointId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for PointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for PointId {
    fn from(s: &str) -> Self {
        PointId(s.to_string())
    }
}

impl From<String> for PointId {
    fn from(s: String) -> Self {
        PointId(s)
    }
}

impl From<usize> for PointId {
    fn from(i: usize) -> Self {
        PointId(i.to_string())
    }
}

impl<'de> Deserialize<'de> for PointId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Str(String),
            Int(i64),
        }
        Ok(match Raw::deserialize(deserializer)? {
            Raw::Str(s) => PointId(s),
            Raw::Int(i) => PointId(i.to_string()),
        })
    }
}

/// A finite quasimetric space with an optional tagged point at infinity.
#[derive(Clone, Debug)]
pub struct QuasimetricSpace {
    ids: Vec<PointId>,
    index: HashMap<PointId, usize>,
    dist: Vec<f64>,
    infinity: Option<usize>,
}

impl PartialEq for QuasimetricSpace {
    fn eq(&self, other: &Self) -> bool {
        self.ids == other.ids && self.infinity == other.infinity && self.dist == other.dist
    }
}

impl QuasimetricSpace {
    /// Builds a space from ids and a row-major `n x n` table, validating
    /// symmetry and positive definiteness.
    pub fn new(ids: Vec<PointId>, dist: Vec<f64>, infinity: Option<PointId>) -> Result<Self> {
        let n = ids.len();
        if n == 0 {
            return Err(Error::InvalidSpace("space has no points".into()));
        }
        if dist.len() != n * n {
            return Err(Error::InvalidSpace(format!(
                "distance table has {} entries, expected {}",
                dist.len(),
                n * n
            )));
        }
        let mut index = HashMap::with_capacity(n);
        for (i, id) in ids.iter().enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::InvalidSpace(format!("duplicate point id `{id}`")));
            }
        }
        let mut dist = dist;
        for i in 0..n {
            let dii = dist[i * n + i];
            if dii != 0.0 {
                return Err(Error::InvalidSpace(format!(
                    "dist({}, {}) = {dii}, expected 0",
                    ids[i], ids[i]
                )));
            }
            for j in (i + 1)..n {
                let a = dist[i * n + j];
                let b = dist[j * n + i];
                if !a.is_finite() || !b.is_finite() || a < 0.0 || b < 0.0 {
                    return Err(Error::InvalidSpace(format!(
                        "dist({}, {}) must be finite and nonnegative",
                        ids[i], ids[j]
                    )));
                }
                if a != b {
                    if (a - b).abs() > REL_TOL * a.max(b) {
                        return Err(Error::Asymmetric(
                            ids[i].to_string(),
                            ids[j].to_string(),
                            a,
                            b,
                        ));
                    }
                    dist[j * n + i] = a;
                }
                if a == 0.0 {
                    return Err(Error::InvalidSpace(format!(
                        "degenerate table: dist({}, {}) = 0 for distinct points",
                        ids[i], ids[j]
                    )));
                }
            }
        }
        let infinity = match infinity {
            Some(id) => Some(
                *index
                    .get(&id)
                    .ok_or_else(|| Error::UnknownPoint(id.to_string()))?,
            ),
            None => None,
        };
        Ok(QuasimetricSpace {
            ids,
            index,
            dist,
            infinity,
        })
    }

    /// Builds a space on ids `0..n` from a distance function evaluated on
    /// the upper triangle.
    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let ids = (0..n).map(PointId::from).collect();
        Self::with_ids_fn(ids, f)
    }

    /// Like [`from_fn`](Self::from_fn) with explicit ids.
    pub fn with_ids_fn(ids: Vec<PointId>, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let n = ids.len();
        let mut dist = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = f(i, j);
                dist[i * n + j] = d;
                dist[j * n + i] = d;
            }
        }
        Self::new(ids, dist, None)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[PointId] {
        &self.ids
    }

    pub fn id(&self, i: usize) -> &PointId {
        &self.ids[i]
    }

    pub fn index_of(&self, id: &str) -> Result<usize> {
        self.index
            .get(&PointId::new(id))
            .copied()
            .ok_or_else(|| Error::UnknownPoint(id.to_string()))
    }

    #[inline]
    pub fn d(&self, i: usize, j: usize) -> f64 {
        self.dist[i * self.ids.len() + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.ids.len();
        &self.dist[i * n..(i + 1) * n]
    }

    /// Row-major distance table.
    pub fn table(&self) -> &[f64] {
        &self.dist
    }

    pub fn infinity(&self) -> Option<usize> {
        self.infinity
    }

    pub fn infinity_id(&self) -> Option<&PointId> {
        self.infinity.map(|i| &self.ids[i])
    }

    /// Maximum pairwise distance. For samples that model unbounded spaces this
    /// is the finite surrogate of the diameter.
    pub fn diameter(&self) -> f64 {
        self.dist.iter().copied().fold(0.0, f64::max)
    }

    /// Point minimising the sum of distances to all others; ties go to the
    /// lowest index.
    pub fn medoid(&self) -> usize {
        let n = self.len();
        (0..n)
            .map(|i| (i, self.row(i).iter().sum::<f64>()))
            .fold((0, f64::INFINITY), |best, (i, s)| if s < best.1 { (i, s) } else { best })
            .0
    }

    /// Smallest positive distance, or `None` for a single point.
    pub fn min_positive_distance(&self) -> Option<f64> {
        self.dist
            .iter()
            .copied()
            .filter(|&d| d > 0.0)
            .fold(None, |acc, d| Some(acc.map_or(d, |a: f64| a.min(d))))
    }

    /// Sub-space on the given point indices, in the given order. The infinity
    /// tag is kept when its point survives.
    pub fn restrict(&self, keep: &[usize]) -> Result<Self> {
        let ids: Vec<PointId> = keep.iter().map(|&i| self.ids[i].clone()).collect();
        let m = keep.len();
        let mut dist = vec![0.0; m * m];
        for (a, &i) in keep.iter().enumerate() {
            for (b, &j) in keep.iter().enumerate() {
                dist[a * m + b] = self.d(i, j);
            }
        }
        let infinity = self
            .infinity
            .filter(|inf| keep.contains(inf))
            .map(|inf| self.ids[inf].clone());
        Self::new(ids, dist, infinity)
    }

    /// Same table with the infinity tag removed.
    pub fn untagged(&self) -> Self {
        let mut s = self.clone();
        s.infinity = None;
        s
    }

    /// Returns the snowflaked space `d^alpha`.
    pub fn powered(&self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "power must be positive, got {alpha}"
            )));
        }
        let dist = self.dist.iter().map(|d| d.powf(alpha)).collect();
        Self::new(
            self.ids.clone(),
            dist,
            self.infinity_id().cloned(),
        )
    }

    /// A point id not used by this space, derived from `base`.
    pub(crate) fn fresh_id(&self, base: &str) -> PointId {
        let mut candidate = base.to_string();
        while self.index.contains_key(&PointId::new(candidate.as_str())) {
            candidate.push('\'');
        }
        PointId::new(candidate)
    }
}

/// A quasimetric space with a point-mass measure.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasuredSpace {
    space: QuasimetricSpace,
    mass: Vec<f64>,
}

impl MeasuredSpace {
    /// Validates that every finite point has positive mass and the tagged
    /// infinity point has zero mass.
    pub fn new(space: QuasimetricSpace, mass: Vec<f64>) -> Result<Self> {
        if mass.len() != space.len() {
            return Err(Error::InvalidSpace(format!(
                "mass vector has {} entries, expected {}",
                mass.len(),
                space.len()
            )));
        }
        for (i, &m) in mass.iter().enumerate() {
            if Some(i) == space.infinity() {
                if m != 0.0 {
                    return Err(Error::InvalidSpace(format!(
                        "infinity point `{}` must have zero mass, got {m}",
                        space.id(i)
                    )));
                }
            } else if !(m > 0.0 && m.is_finite()) {
                return Err(Error::InvalidSpace(format!(
                    "mass of `{}` must be positive and finite, got {m}",
                    space.id(i)
                )));
            }
        }
        Ok(MeasuredSpace { space, mass })
    }

    /// Equal masses `1/m` on the `m` finite points.
    pub fn uniform(space: QuasimetricSpace) -> Self {
        let finite = space.len() - usize::from(space.infinity().is_some());
        let w = 1.0 / finite as f64;
        let mass = (0..space.len())
            .map(|i| if Some(i) == space.infinity() { 0.0 } else { w })
            .collect();
        MeasuredSpace { space, mass }
    }

    pub fn space(&self) -> &QuasimetricSpace {
        &self.space
    }

    pub fn into_space(self) -> QuasimetricSpace {
        self.space
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn len(&self) -> usize {
        self.space.len()
    }

    pub fn is_empty(&self) -> bool {
        self.space.is_empty()
    }

    /// Indices of points with positive mass.
    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.mass[i] > 0.0).collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Measure of the open (or closed) ball, summed in index order.
    pub fn ball_measure(&self, center: usize, radius: f64, closed: bool) -> f64 {
        self.space
            .row(center)
            .iter()
            .zip(&self.mass)
            .filter(|(&d, _)| if closed { d <= radius } else { d < radius })
            .map(|(_, &m)| m)
            .sum()
    }

    pub fn restrict(&self, keep: &[usize]) -> Result<Self> {
        let space = self.space.restrict(keep)?;
        let mass = keep.iter().map(|&i| self.mass[i]).collect();
        MeasuredSpace::new(space, mass)
    }

    /// Same masses on a replacement table over the same ids.
    pub fn with_space(&self, space: QuasimetricSpace) -> Result<Self> {
        if space.ids() != self.space.ids() {
            return Err(Error::InvalidArgument(
                "replacement space must have the same points".into(),
            ));
        }
        MeasuredSpace::new(space, self.mass.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(points: &[f64]) -> QuasimetricSpace {
        QuasimetricSpace::from_fn(points.len(), |i, j| (points[i] - points[j]).abs()).unwrap()
    }

    #[test]
    fn rejects_zero_off_diagonal() {
        let err = QuasimetricSpace::new(
            vec!["a".into(), "b".into()],
            vec![0.0, 0.0, 0.0, 0.0],
            None,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidSpace(_)));
    }

    #[test]
    fn rejects_asymmetric_table_naming_pair() {
        let err = QuasimetricSpace::new(
            vec!["a".into(), "b".into()],
            vec![0.0, 1.0, 2.0, 0.0],
            None,
        )
        .unwrap_err();
        match err {
            Error::Asymmetric(x, y, _, _) => assert_eq!((x.as_str(), y.as_str()), ("a", "b")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn infinity_mass_must_vanish() {
        let s = QuasimetricSpace::new(
            vec!["a".into(), "inf".into()],
            vec![0.0, 1.0, 1.0, 0.0],
            Some("inf".into()),
        )
        .unwrap();
        assert!(MeasuredSpace::new(s.clone(), vec![1.0, 1.0]).is_err());
        let m = MeasuredSpace::new(s, vec![1.0, 0.0]).unwrap();
        assert_eq!(m.support(), vec![0]);
    }

    #[test]
    fn restrict_keeps_tag_only_when_present() {
        let s = line(&[0.0, 1.0, 3.0]);
        let r = s.restrict(&[2, 0]).unwrap();
        assert_eq!(r.d(0, 1), 3.0);
        assert_eq!(r.id(0).as_str(), "2");
    }

    #[test]
    fn fresh_id_avoids_collisions() {
        let s = QuasimetricSpace::new(
            vec!["inf".into(), "x".into()],
            vec![0.0, 1.0, 1.0, 0.0],
            None,
        )
        .unwrap();
        assert_eq!(s.fresh_id("inf").as_str(), "inf'");
        assert_eq!(s.fresh_id("y").as_str(), "y");
    }
}
