//! Conformal deformations: sphericalization, flattening, chain metrization
//! and the David–Semmes deformation.
//!
//! For a base point `a`, sphericalization divides distances by
//! `(1 + d(x,a)) (1 + d(y,a))` and adds a point at infinity at distance
//! `1 / (1 + d(x,a))` from `x`. Flattening at `c` divides by `d(x,c) d(y,c)`
//! and removes `c`. Flattening followed by sphericalization at the new point
//! at infinity is bilipschitz to the original space on `X \ {c}`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::space::{quasimetric_constant, MeasuredSpace, PointId, QuasimetricSpace, RowProfile};

/// Default exponent of the David–Semmes deformation.
pub const DEFAULT_DS_EPSILON: f64 = 0.5;

/// How transformed point masses are normalised.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum MeasureMode {
    /// Divide by the squared measure of the ball around the base point
    /// reaching `z`.
    Ball,
    /// Divide by `(1 + d(a,z))^{2Q}` (sphericalization) or `d(c,z)^{2Q}`
    /// (flattening). Comparable to `Ball` only on Ahlfors `Q`-regular inputs.
    RegularDensity { q: f64 },
}

/// Sphericalized distances at base `a`, with a new tagged point at infinity.
/// An existing infinity tag is dropped and its point becomes an ordinary one,
/// so `a` may be that point.
pub fn sphericalize_space(space: &QuasimetricSpace, a: usize) -> Result<QuasimetricSpace> {
    let n = space.len();
    let inf_id = space.fresh_id("inf");
    let mut ids = space.ids().to_vec();
    ids.push(inf_id.clone());
    let m = n + 1;
    let w: Vec<f64> = (0..n).map(|x| 1.0 + space.d(x, a)).collect();
    let mut dist = vec![0.0; m * m];
    for x in 0..n {
        for y in (x + 1)..n {
            let v = space.d(x, y) / (w[x] * w[y]);
            dist[x * m + y] = v;
            dist[y * m + x] = v;
        }
        let v = 1.0 / w[x];
        dist[x * m + n] = v;
        dist[n * m + x] = v;
    }
    QuasimetricSpace::new(ids, dist, Some(inf_id))
}

/// Sphericalization of a measured space at the point `a`.
pub fn sphericalize(mspace: &MeasuredSpace, a: &str) -> Result<MeasuredSpace> {
    sphericalize_with(mspace, a, MeasureMode::Ball)
}

pub fn sphericalize_with(mspace: &MeasuredSpace, a: &str, mode: MeasureMode) -> Result<MeasuredSpace> {
    let space = mspace.space();
    let a = space.index_of(a)?;
    if let Some(t) = space.infinity_id() {
        return Err(Error::InvalidArgument(format!(
            "space already has a point at infinity `{t}`"
        )));
    }
    let out = sphericalize_space(space, a)?;
    let profile = RowProfile::new(mspace, a);
    let mut mass: Vec<f64> = (0..space.len())
        .map(|z| {
            let daz = space.d(a, z);
            let norm = match mode {
                MeasureMode::Ball => profile.measure(1.0 + daz).powi(2),
                MeasureMode::RegularDensity { q } => (1.0 + daz).powf(2.0 * q),
            };
            mspace.mass()[z] / norm
        })
        .collect();
    mass.push(0.0);
    MeasuredSpace::new(out, mass)
}

/// Flattened distances at base `c`, which is removed. With `extend_infinity`
/// a tagged point at infinity is added at distance `1 / d(x,c)` from `x`.
pub fn flatten_space(space: &QuasimetricSpace, c: usize, extend_infinity: bool) -> Result<QuasimetricSpace> {
    let n = space.len();
    let keep: Vec<usize> = (0..n).filter(|&x| x != c).collect();
    let surviving_tag = space.infinity().filter(|&t| t != c);
    if extend_infinity && surviving_tag.is_some() {
        return Err(Error::InvalidArgument(
            "cannot add a point at infinity to a space that keeps one".into(),
        ));
    }
    let mut ids: Vec<PointId> = keep.iter().map(|&x| space.id(x).clone()).collect();
    let mut tag = surviving_tag.map(|t| space.id(t).clone());
    if extend_infinity {
        let id = space.fresh_id("inf");
        ids.push(id.clone());
        tag = Some(id);
    }
    let m = ids.len();
    let mut dist = vec![0.0; m * m];
    for (i, &x) in keep.iter().enumerate() {
        let dx = space.d(x, c);
        for (j, &y) in keep.iter().enumerate().skip(i + 1) {
            let v = space.d(x, y) / (dx * space.d(y, c));
            dist[i * m + j] = v;
            dist[j * m + i] = v;
        }
        if extend_infinity {
            let v = 1.0 / dx;
            dist[i * m + m - 1] = v;
            dist[(m - 1) * m + i] = v;
        }
    }
    QuasimetricSpace::new(ids, dist, tag)
}

/// The inversion `d(x,y) / (d(x,p) d(y,p))`: flattening without a measure.
pub fn inversion(space: &QuasimetricSpace, p: &str) -> Result<QuasimetricSpace> {
    flatten_space(space, space.index_of(p)?, false)
}

/// Flattening of a measured space at the point `c`.
pub fn flatten(mspace: &MeasuredSpace, c: &str) -> Result<MeasuredSpace> {
    flatten_with(mspace, c, MeasureMode::Ball)
}

pub fn flatten_with(mspace: &MeasuredSpace, c: &str, mode: MeasureMode) -> Result<MeasuredSpace> {
    let space = mspace.space();
    let ci = space.index_of(c)?;
    if space.len() < 3 {
        return Err(Error::InvalidArgument(
            "flattening needs at least 3 points".into(),
        ));
    }
    let out = flatten_space(space, ci, false)?;
    let profile = RowProfile::new(mspace, ci);
    let mut mass = Vec::with_capacity(out.len());
    for z in (0..space.len()).filter(|&z| z != ci) {
        let dcz = space.d(ci, z);
        let norm = match mode {
            MeasureMode::Ball => profile.measure(dcz).powi(2),
            MeasureMode::RegularDensity { q } => dcz.powf(2.0 * q),
        };
        let mz = mspace.mass()[z];
        if mz > 0.0 && norm == 0.0 {
            return Err(Error::InvalidArgument(format!(
                "ball around `{c}` reaching `{}` has zero measure",
                space.id(z)
            )));
        }
        mass.push(if mz == 0.0 { 0.0 } else { mz / norm });
    }
    MeasuredSpace::new(out, mass)
}

/// Comparison of flatten-then-sphericalize with the original distances.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundtripReport {
    pub base: PointId,
    pub pairs: usize,
    /// Max relative deviation from `d(x,y) / ((1+d(x,c))(1+d(y,c)))`.
    pub max_relative_error: f64,
    /// Bilipschitz constant of the identity from the original distances.
    pub bilipschitz: f64,
    pub diameter: f64,
    /// `(1 + diameter)^2`.
    pub bound: f64,
}

impl RoundtripReport {
    pub fn within(&self, rel_tol: f64) -> bool {
        self.max_relative_error <= rel_tol && self.bilipschitz <= self.bound
    }
}

/// Flattens at `c` with a new point at infinity, sphericalizes at that point
/// and compares with the closed form on all pairs of remaining points.
pub fn roundtrip(space: &QuasimetricSpace, c: &str) -> Result<RoundtripReport> {
    let ci = space.index_of(c)?;
    let flat = flatten_space(&space.untagged(), ci, true)?;
    let inf = flat.infinity().expect("flatten added infinity");
    let sph = sphericalize_space(&flat, inf)?;
    let keep: Vec<usize> = (0..space.len()).filter(|&x| x != ci).collect();
    let mut pairs = 0;
    let mut err: f64 = 0.0;
    let mut lip: f64 = 1.0;
    for (i, &x) in keep.iter().enumerate() {
        for (j, &y) in keep.iter().enumerate().skip(i + 1) {
            let closed = space.d(x, y) / ((1.0 + space.d(x, ci)) * (1.0 + space.d(y, ci)));
            let got = sph.d(i, j);
            err = err.max((got - closed).abs() / closed);
            let ratio = space.d(x, y) / got;
            lip = lip.max(ratio).max(1.0 / ratio);
            pairs += 1;
        }
    }
    let diameter = space.diameter();
    Ok(RoundtripReport {
        base: space.id(ci).clone(),
        pairs,
        max_relative_error: err,
        bilipschitz: lip,
        diameter,
        bound: (1.0 + diameter).powi(2),
    })
}

/// Result of chain metrization.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainMetric {
    #[serde(skip)]
    pub metric: QuasimetricSpace,
    pub input_k: f64,
    /// Min of `d / rho` over distinct pairs.
    pub min_ratio: f64,
    /// `d <= rho` on all pairs, which always holds.
    pub upper_ok: bool,
    /// For `K <= 2`, whether `d >= rho / K^2`, the guaranteed lower bound.
    pub lower_ok: Option<bool>,
    /// Whether `d >= rho / 2`. Guaranteed only when `K <= sqrt 2`.
    pub half_sandwich: bool,
}

/// Shortest-chain metric `d(x,y) = min sum rho(x_{i-1}, x_i)` by exact
/// all-pairs shortest paths on the complete graph.
pub fn chain_metrize(space: &QuasimetricSpace) -> Result<ChainMetric> {
    let n = space.len();
    let mut d = space.table().to_vec();
    for k in 0..n {
        let (before, rest) = d.split_at_mut(k * n);
        let (row_k, after) = rest.split_at_mut(n);
        for row in before.chunks_exact_mut(n).chain(after.chunks_exact_mut(n)) {
            let dik = row[k];
            for (dij, &dkj) in row.iter_mut().zip(row_k.iter()) {
                let via = dik + dkj;
                if via < *dij {
                    *dij = via;
                }
            }
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let v = d[i * n + j].min(d[j * n + i]);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    let metric = QuasimetricSpace::new(space.ids().to_vec(), d, space.infinity_id().cloned())?;
    let input_k = if n >= 2 { quasimetric_constant(space)? } else { 1.0 };
    let mut min_ratio: f64 = 1.0;
    let mut upper_ok = true;
    for i in 0..n {
        for j in (i + 1)..n {
            let r = metric.d(i, j) / space.d(i, j);
            min_ratio = min_ratio.min(r);
            upper_ok &= r <= 1.0;
        }
    }
    let slack = 1.0 - crate::space::REL_TOL;
    let lower_ok = (input_k <= 2.0).then(|| min_ratio >= slack / (input_k * input_k));
    Ok(ChainMetric {
        metric,
        input_k,
        min_ratio,
        upper_ok,
        lower_ok,
        half_sandwich: min_ratio >= 0.5 * slack,
    })
}

/// David–Semmes deformation `beta(x,y) = mu(B(x, d) ∪ B(y, d))^eps` with
/// `d = d(x,y)`; the masses are unchanged.
pub fn david_semmes(mspace: &MeasuredSpace, epsilon: f64) -> Result<MeasuredSpace> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let space = mspace.space();
    let n = space.len();
    let mass = mspace.mass();
    let mut dist = vec![0.0; n * n];
    for x in 0..n {
        let rx = space.row(x);
        for y in (x + 1)..n {
            let ry = space.row(y);
            let r = rx[y];
            let mut mu = 0.0;
            for z in 0..n {
                if rx[z] < r || ry[z] < r {
                    mu += mass[z];
                }
            }
            let v = mu.powf(epsilon);
            dist[x * n + y] = v;
            dist[y * n + x] = v;
        }
    }
    let out = QuasimetricSpace::new(space.ids().to_vec(), dist, space.infinity_id().cloned())?;
    mspace.with_space(out)
}

/// Kind of deformation in a [`DeformationRecord`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DeformationKind {
    Sphericalize,
    Flatten,
    Chain,
    DavidSemmes,
}

/// Quasimetric constants before and after a deformation, with the a priori
/// bound when one is known.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeformationRecord {
    pub kind: DeformationKind,
    pub base_point: Option<PointId>,
    pub epsilon: Option<f64>,
    pub input_k: f64,
    pub output_k: f64,
    pub bound: Option<f64>,
    pub within_bound: Option<bool>,
}

impl DeformationRecord {
    /// Computes both constants. `doubling` is the measure doubling constant
    /// of the input, needed for the David–Semmes bound.
    pub fn compute(
        kind: DeformationKind,
        base_point: Option<PointId>,
        epsilon: Option<f64>,
        input: &QuasimetricSpace,
        output: &QuasimetricSpace,
        doubling: Option<f64>,
    ) -> Result<Self> {
        let k_of = |s: &QuasimetricSpace| if s.len() >= 2 { quasimetric_constant(s) } else { Ok(1.0) };
        let input_k = k_of(input)?;
        let output_k = k_of(output)?;
        let bound = match kind {
            DeformationKind::Sphericalize => Some(4.0 * input_k * input_k),
            DeformationKind::Flatten => Some(input_k * input_k),
            DeformationKind::Chain => Some(2.0),
            DeformationKind::DavidSemmes => match (doubling, epsilon) {
                (Some(c), Some(e)) => Some(david_semmes_k_bound(c, input_k, e)),
                _ => None,
            },
        };
        Ok(DeformationRecord {
            kind,
            base_point,
            epsilon,
            input_k,
            output_k,
            within_bound: bound.map(|b| output_k <= b),
            bound,
        })
    }
}

/// A priori quasimetric constant of the David–Semmes deformation:
/// `C^{(2 log2 K + 2) eps}`.
pub fn david_semmes_k_bound(doubling: f64, k: f64, epsilon: f64) -> f64 {
    doubling.powf((2.0 * k.log2() + 2.0) * epsilon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{measure_doubling_constant, quasimetric_constant};
    use proptest::prelude::*;

    fn line(points: &[f64]) -> QuasimetricSpace {
        QuasimetricSpace::from_fn(points.len(), |i, j| (points[i] - points[j]).abs()).unwrap()
    }

    fn arb_space(max: usize) -> impl Strategy<Value = QuasimetricSpace> {
        (prop::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0), 3..max), 0.3f64..1.5).prop_map(
            |(pts, p)| {
                QuasimetricSpace::from_fn(pts.len(), |i, j| {
                    let (a, b) = (pts[i], pts[j]);
                    let e = ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2) + (a.2 - b.2).powi(2)).sqrt();
                    e.powf(p) + 1e-6
                })
                .unwrap()
            },
        )
    }

    #[test]
    fn sphericalize_examples() {
        let s = MeasuredSpace::uniform(line(&[0.0, 1.0, 3.0]));
        let sp = sphericalize(&s, "0").unwrap();
        let inf = sp.space().infinity().unwrap();
        assert_eq!(sp.space().id(inf).as_str(), "inf");
        assert_eq!(sp.space().d(0, inf), 1.0);
        assert_eq!(sp.space().d(1, 2), 0.25);
        assert_eq!(sp.mass()[inf], 0.0);
        assert!(sphericalize(&sp, "0").is_err());
        assert!(sphericalize(&s, "9").is_err());
    }

    #[test]
    fn sphericalized_masses_use_ball_normalizer() {
        let s = MeasuredSpace::new(line(&[0.0, 1.0, 3.0]), vec![1.0, 2.0, 4.0]).unwrap();
        let sp = sphericalize(&s, "0").unwrap();
        // B(0, 1) = {0}, B(0, 2) = {0, 1}, B(0, 4) = everything.
        assert_eq!(sp.mass()[0], 1.0);
        assert_eq!(sp.mass()[1], 2.0 / 9.0);
        assert_eq!(sp.mass()[2], 4.0 / 49.0);
        let reg = sphericalize_with(&s, "0", MeasureMode::RegularDensity { q: 1.0 }).unwrap();
        assert_eq!(reg.mass()[2], 4.0 / 16.0);
    }

    #[test]
    fn ball_at_infinity_is_complement_of_closed_ball() {
        let pts: Vec<f64> = (0..40).map(|i| i as f64 * 0.37).collect();
        let sp = sphericalize_space(&line(&pts), 0).unwrap();
        let inf = sp.infinity().unwrap();
        for r in [0.05, 0.1, 0.3, 0.7] {
            let b = crate::space::ball(&sp, "inf", r, false).unwrap();
            for x in 0..pts.len() {
                let inside = b.members.contains(sp.id(x));
                assert_eq!(inside, 1.0 + pts[x] > 1.0 / r, "x={x} r={r}");
            }
            assert!(b.members.contains(sp.id(inf)));
        }
    }

    #[test]
    fn flatten_examples() {
        // Chord metric on the unit circle, flattened at the antipode of x.
        let k = 32;
        let ang: Vec<f64> = (0..k).map(|i| std::f64::consts::TAU * i as f64 / k as f64).collect();
        let s = QuasimetricSpace::from_fn(k, |i, j| 2.0 * ((ang[i] - ang[j]) / 2.0).sin().abs()).unwrap();
        let c = k / 2;
        let f = flatten_space(&s, c, false).unwrap();
        // Indices shift by one past c. Distances from x = 0 grow as y nears c.
        let near = f.d(0, c - 1);
        let far = f.d(0, 1);
        assert!(near > 10.0 * far);
        for x in 0..k - 1 {
            for y in 0..k - 1 {
                if x != y {
                    let (ox, oy) = (x + usize::from(x >= c), y + usize::from(y >= c));
                    let back = f.d(x, y) * s.d(ox, c) * s.d(oy, c);
                    assert!((back - s.d(ox, oy)).abs() <= 1e-12 * s.d(ox, oy));
                }
            }
        }
        let m = MeasuredSpace::uniform(line(&[0.0, 1.0]));
        assert!(flatten(&m, "0").is_err());
    }

    #[test]
    fn flattened_mass_near_base_uses_center_mass() {
        let s = MeasuredSpace::new(line(&[0.0, 1.0, 3.0]), vec![2.0, 1.0, 1.0]).unwrap();
        let f = flatten(&s, "0").unwrap();
        // B(0, 1) = {0} with mass 2; B(0, 3) = {0, 1} with mass 3.
        assert_eq!(f.mass(), &[0.25, 1.0 / 9.0]);
    }

    #[test]
    fn metric_input_constant_bounds() {
        let s = line(&[0.0, 1.0, 2.0, 5.0, 9.0]);
        let k = quasimetric_constant(&s).unwrap();
        assert_eq!(k, 2.0);
        for a in 0..s.len() {
            let sp = sphericalize_space(&s, a).unwrap();
            assert!(quasimetric_constant(&sp).unwrap() <= 16.0);
            let f = flatten_space(&s, a, false).unwrap();
            assert!(quasimetric_constant(&f).unwrap() <= 4.0);
        }
    }

    #[test]
    fn roundtrip_examples() {
        let s = line(&[0.0, 0.25, 0.5, 1.0]);
        let r = roundtrip(&s, "1").unwrap();
        assert!(r.max_relative_error <= 1e-12);
        assert_eq!(r.bound, 4.0);
        assert!(r.bilipschitz <= 4.0);
        let two = line(&[0.0, 1.0]);
        let r = roundtrip(&two, "0").unwrap();
        assert_eq!(r.pairs, 0);
        assert!(r.within(1e-12));
    }

    #[test]
    fn chain_examples() {
        let s = line(&[0.0, 1.0, 2.5, 4.0]);
        let c = chain_metrize(&s).unwrap();
        assert_eq!(c.metric.table(), s.table());
        let t = QuasimetricSpace::from_fn(3, |i, j| if (i, j) == (0, 2) { 10.0 } else { 1.0 }).unwrap();
        let c = chain_metrize(&t).unwrap();
        assert_eq!(c.metric.d(0, 2), 2.0);
        assert_eq!(c.input_k, 10.0);
        assert_eq!(c.lower_ok, None);
    }

    /// Shortest chain by enumerating all simple chains.
    fn chain_oracle(s: &QuasimetricSpace, x: usize, y: usize) -> f64 {
        fn go(s: &QuasimetricSpace, at: usize, y: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
            if at == y {
                *best = best.min(acc);
                return;
            }
            for k in 0..s.len() {
                if !used[k] {
                    used[k] = true;
                    go(s, k, y, used, acc + s.d(at, k), best);
                    used[k] = false;
                }
            }
        }
        let mut used = vec![false; s.len()];
        used[x] = true;
        let mut best = f64::INFINITY;
        go(s, x, y, &mut used, 0.0, &mut best);
        best
    }

    proptest! {
        #[test]
        fn constant_bounds_hold(s in arb_space(14)) {
            let k = quasimetric_constant(&s).unwrap();
            for a in 0..s.len() {
                let sp = sphericalize_space(&s, a).unwrap();
                prop_assert!(quasimetric_constant(&sp).unwrap() <= 4.0 * k * k);
                let f = flatten_space(&s, a, false).unwrap();
                prop_assert!(quasimetric_constant(&f).unwrap() <= k * k);
            }
        }

        #[test]
        fn roundtrip_is_exact(s in arb_space(14), c in 0usize..14) {
            let c = c % s.len();
            let r = roundtrip(&s, s.id(c).as_str()).unwrap();
            prop_assert!(r.within(1e-12), "{:?}", r);
        }

        #[test]
        fn chain_metric_is_shortest_and_triangular(s in arb_space(8)) {
            let c = chain_metrize(&s).unwrap();
            let n = s.len();
            for x in 0..n {
                for y in 0..n {
                    if x != y {
                        let o = chain_oracle(&s, x, y);
                        prop_assert!((c.metric.d(x, y) - o).abs() <= 1e-12 * o);
                    }
                    for z in 0..n {
                        prop_assert!(c.metric.d(x, z) <= (c.metric.d(x, y) + c.metric.d(y, z)) * (1.0 + 1e-12));
                    }
                }
            }
            prop_assert!(c.upper_ok);
            if let Some(ok) = c.lower_ok {
                prop_assert!(ok);
            }
        }

        #[test]
        fn david_semmes_is_a_bounded_quasimetric(s in arb_space(12), eps in 0.2f64..1.0) {
            let m = MeasuredSpace::uniform(s);
            let ds = david_semmes(&m, eps).unwrap();
            let n = m.len();
            for x in 0..n {
                prop_assert_eq!(ds.space().d(x, x), 0.0);
                for y in 0..n {
                    prop_assert_eq!(ds.space().d(x, y), ds.space().d(y, x));
                }
            }
            // The doubling sup over all r is reached just above half a distance.
            let mut radii: Vec<f64> = m.space().table().iter().filter(|&&d| d > 0.0)
                .flat_map(|&d| [d * (1.0 + 1e-12), 0.5 * d * (1.0 + 1e-12)]).collect();
            radii.sort_by(f64::total_cmp);
            radii.dedup();
            let c = measure_doubling_constant(&m, &radii).unwrap().constant;
            let k = quasimetric_constant(m.space()).unwrap();
            let kb = quasimetric_constant(ds.space()).unwrap();
            prop_assert!(kb <= david_semmes_k_bound(c, k, eps) * (1.0 + 1e-12), "{} > bound", kb);
        }
    }

    #[test]
    fn half_sandwich_needs_small_constant() {
        // Chain of unit steps whose far ends are as far apart as K = 2 allows.
        let t = QuasimetricSpace::from_fn(4, |i, j| match (i, j) {
            (0, 1) | (1, 2) | (2, 3) => 1.0,
            (0, 2) | (1, 3) => 2.0,
            _ => 4.0,
        })
        .unwrap();
        let c = chain_metrize(&t).unwrap();
        assert_eq!(c.input_k, 2.0);
        assert_eq!(c.metric.d(0, 3), 3.0);
        assert_eq!(c.lower_ok, Some(true));
    }

    #[test]
    fn david_semmes_two_points() {
        let m = MeasuredSpace::new(line(&[0.0, 1.0]), vec![1.0, 1.0]).unwrap();
        let ds = david_semmes(&m, 0.5).unwrap();
        assert_eq!(ds.space().d(0, 1), 2f64.sqrt());
        assert!(david_semmes(&m, 0.0).is_err());
    }

    #[test]
    fn record_reports_bounds() {
        let s = line(&[0.0, 1.0, 2.0, 4.0]);
        let sp = sphericalize_space(&s, 0).unwrap();
        let r = DeformationRecord::compute(DeformationKind::Sphericalize, Some("0".into()), None, &s, &sp, None).unwrap();
        assert_eq!(r.bound, Some(16.0));
        assert_eq!(r.within_bound, Some(true));
    }
}
