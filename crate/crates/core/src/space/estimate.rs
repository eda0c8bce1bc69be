//! Structural constants of finite spaces.

use serde::Serialize;

use super::{MeasuredSpace, PointId, QuasimetricSpace, RowProfile};
use crate::error::{Error, Result};

/// Uniform perfectness is certified on the grid `k / TAU_GRID_STEPS`.
pub const TAU_GRID_STEPS: u32 = 64;

/// Balls with at most this many members get an exact minimal cover.
pub const EXACT_COVER_LIMIT: usize = 16;

/// Best quasimetric constant of the table.
pub fn quasimetric_constant(space: &QuasimetricSpace) -> Result<f64> {
    quasimetric_constant_with_witness(space).map(|(k, _)| k)
}

/// Best quasimetric constant together with a triple `[x, y, z]` attaining
/// it, or `None` when `K = 1`.
///
/// For a pair `(x, z)` the binding middle point minimises
/// `max(d(x,y), d(y,z))`; taking `y = x` gives `d(x,z)`, so every pair ratio
/// is at least 1 and no clamping is needed.
pub fn quasimetric_constant_with_witness(
    space: &QuasimetricSpace,
) -> Result<(f64, Option<[usize; 3]>)> {
    let n = space.len();
    if n < 2 {
        return Err(Error::InvalidArgument(
            "quasimetric constant needs at least 2 points".into(),
        ));
    }
    let mut best = 1.0;
    let mut witness = None;
    for x in 0..n {
        let rx = space.row(x);
        for z in (x + 1)..n {
            let rz = space.row(z);
            let mut m = f64::INFINITY;
            let mut arg = x;
            for y in 0..n {
                let v = rx[y].max(rz[y]);
                if v < m {
                    m = v;
                    arg = y;
                }
            }
            let ratio = rx[z] / m;
            if ratio > best {
                best = ratio;
                witness = Some([x, arg, z]);
            }
        }
    }
    Ok((best, witness))
}

/// Outcome of the uniform perfectness scan.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum UniformPerfectness {
    /// Every tested annulus `B(x,r) \ B(x, tau r)` is nonempty. `bound` is the
    /// exact infimum the grid value was rounded down from.
    Perfect { tau: f64, bound: f64 },
    /// Some ball missing part of the space has an empty annulus at every grid
    /// value.
    Failed { center: PointId, radius: f64 },
}

impl UniformPerfectness {
    pub fn tau(&self) -> Option<f64> {
        match self {
            UniformPerfectness::Perfect { tau, .. } => Some(*tau),
            UniformPerfectness::Failed { .. } => None,
        }
    }

    pub fn into_result(self) -> Result<f64> {
        match self {
            UniformPerfectness::Perfect { tau, .. } => Ok(tau),
            UniformPerfectness::Failed { center, radius } => Err(Error::NotUniformlyPerfect {
                center: center.to_string(),
                radius,
            }),
        }
    }
}

/// Largest grid value `tau` such that every tested ball that misses part of
/// the space contains a point at distance at least `tau * r` from its center.
pub fn uniform_perfectness(space: &QuasimetricSpace, radii: &[f64]) -> Result<UniformPerfectness> {
    check_radii(radii)?;
    let n = space.len();
    let mut worst = f64::INFINITY;
    let mut worst_at = (0, 0.0);
    let mut row = Vec::with_capacity(n);
    for x in 0..n {
        row.clear();
        row.extend_from_slice(space.row(x));
        row.sort_by(f64::total_cmp);
        for &r in radii {
            let inside = row.partition_point(|&d| d < r);
            if inside == n {
                continue;
            }
            // row[0] is the center itself, at distance 0.
            let ratio = row[inside - 1] / r;
            if ratio < worst {
                worst = ratio;
                worst_at = (x, r);
            }
        }
    }
    if worst.is_infinite() {
        let tau = f64::from(TAU_GRID_STEPS - 1) / f64::from(TAU_GRID_STEPS);
        return Ok(UniformPerfectness::Perfect { tau, bound: 1.0 });
    }
    let k = ((worst * f64::from(TAU_GRID_STEPS)).floor() as u32).min(TAU_GRID_STEPS - 1);
    if k == 0 {
        return Ok(UniformPerfectness::Failed {
            center: space.id(worst_at.0).clone(),
            radius: worst_at.1,
        });
    }
    Ok(UniformPerfectness::Perfect {
        tau: f64::from(k) / f64::from(TAU_GRID_STEPS),
        bound: worst,
    })
}

/// Worst measure doubling ratio and where it occurs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasureDoubling {
    pub constant: f64,
    pub center: Option<PointId>,
    pub radius: Option<f64>,
}

/// Max of `mu(B(x,2r)) / mu(B(x,r))` over centers in the support of the
/// measure and the given radii. A zero-mass point at infinity is not used as
/// a center since its small balls carry no measure.
pub fn measure_doubling_constant(mspace: &MeasuredSpace, radii: &[f64]) -> Result<MeasureDoubling> {
    check_radii(radii)?;
    let mut out = MeasureDoubling {
        constant: 1.0,
        center: None,
        radius: None,
    };
    for x in mspace.support() {
        let p = RowProfile::new(mspace, x);
        for &r in radii {
            let ratio = p.measure(2.0 * r) / p.measure(r);
            if ratio > out.constant {
                out.constant = ratio;
                out.center = Some(mspace.space().id(x).clone());
                out.radius = Some(r);
            }
        }
    }
    Ok(out)
}

/// How a cover size was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CoverMode {
    Exact,
    /// Greedy max-coverage; an upper bound for the minimal cover.
    Greedy,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricDoubling {
    pub constant: usize,
    pub mode: CoverMode,
    pub center: PointId,
    pub radius: f64,
}

/// Max over tested balls of the number of half-radius balls, centered at
/// members, needed to cover the members.
pub fn metric_doubling_constant(space: &QuasimetricSpace, radii: &[f64]) -> Result<MetricDoubling> {
    check_radii(radii)?;
    let mut out = MetricDoubling {
        constant: 0,
        mode: CoverMode::Exact,
        center: space.id(0).clone(),
        radius: radii[0],
    };
    for x in 0..space.len() {
        for &r in radii {
            let (size, mode) = cover(space, x, r, None);
            if size > out.constant {
                out = MetricDoubling {
                    constant: size,
                    mode,
                    center: space.id(x).clone(),
                    radius: r,
                };
            }
        }
    }
    Ok(out)
}

/// Cover size of a single ball. `mode = None` picks exact below the cutoff
/// and greedy above it.
pub fn cover_size(
    space: &QuasimetricSpace,
    center: &str,
    radius: f64,
    mode: Option<CoverMode>,
) -> Result<(usize, CoverMode)> {
    let c = space.index_of(center)?;
    if mode == Some(CoverMode::Exact) {
        let members = space.row(c).iter().filter(|&&d| d < radius).count();
        if members > EXACT_COVER_LIMIT {
            return Err(Error::InvalidArgument(format!(
                "exact cover limited to {EXACT_COVER_LIMIT} members, ball has {members}"
            )));
        }
    }
    Ok(cover(space, c, radius, mode))
}

fn cover(space: &QuasimetricSpace, c: usize, r: f64, mode: Option<CoverMode>) -> (usize, CoverMode) {
    let members: Vec<usize> = space
        .row(c)
        .iter()
        .enumerate()
        .filter(|(_, &d)| d < r)
        .map(|(i, _)| i)
        .collect();
    let m = members.len();
    let half = r / 2.0;
    let words = m.div_ceil(64);
    let sets: Vec<Vec<u64>> = members
        .iter()
        .map(|&a| {
            let mut bits = vec![0u64; words];
            for (k, &b) in members.iter().enumerate() {
                if space.d(a, b) < half {
                    bits[k / 64] |= 1 << (k % 64);
                }
            }
            bits
        })
        .collect();
    let mode = mode.unwrap_or(if m <= EXACT_COVER_LIMIT {
        CoverMode::Exact
    } else {
        CoverMode::Greedy
    });
    let size = match mode {
        CoverMode::Greedy => greedy_cover(&sets, m),
        CoverMode::Exact => {
            let small: Vec<u32> = sets.iter().map(|s| s[0] as u32).collect();
            exact_cover(&small, m)
        }
    };
    (size, mode)
}

fn greedy_cover(sets: &[Vec<u64>], m: usize) -> usize {
    let words = m.div_ceil(64);
    let mut uncovered = vec![0u64; words];
    for k in 0..m {
        uncovered[k / 64] |= 1 << (k % 64);
    }
    let mut remaining = m;
    let mut used = 0;
    while remaining > 0 {
        let (best, gain) = sets
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let g: u32 = s.iter().zip(&uncovered).map(|(a, b)| (a & b).count_ones()).sum();
                (i, g)
            })
            .fold((0, 0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        for (u, s) in uncovered.iter_mut().zip(&sets[best]) {
            *u &= !s;
        }
        remaining -= gain as usize;
        used += 1;
    }
    used
}

fn exact_cover(sets: &[u32], m: usize) -> usize {
    if m == 0 {
        return 0;
    }
    let full: u32 = if m == 32 { u32::MAX } else { (1 << m) - 1 };
    let wide: Vec<Vec<u64>> = sets.iter().map(|&s| vec![u64::from(s)]).collect();
    let mut best = greedy_cover(&wide, m);
    let max_size = sets.iter().map(|s| s.count_ones()).max().unwrap_or(1).max(1);
    let mut order: Vec<u32> = sets.to_vec();
    order.sort_by_key(|s| std::cmp::Reverse(s.count_ones()));
    branch(&order, full, 0, 0, max_size, &mut best);
    best
}

fn branch(sets: &[u32], full: u32, covered: u32, used: usize, max_size: u32, best: &mut usize) {
    if covered == full {
        *best = (*best).min(used);
        return;
    }
    let missing = (full & !covered).count_ones();
    let lower = used + missing.div_ceil(max_size) as usize;
    if lower >= *best {
        return;
    }
    let e = (full & !covered).trailing_zeros();
    for &s in sets {
        if s & (1 << e) != 0 {
            branch(sets, full, covered | s, used + 1, max_size, best);
        }
    }
}

/// Options for [`ahlfors_fit`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct FitOptions {
    /// Balls with fewer support points are below sampling resolution and are
    /// left out of the fit.
    pub min_members: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { min_members: 1 }
    }
}

/// Pooled power-law fit `mu(B(x,r)) ~ r^Q`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AhlforsFit {
    pub q: f64,
    /// Smallest `C` with `r^Q / C <= mu(B(x,r)) <= C r^Q` on every fitted ball.
    pub c_a: f64,
    /// Root mean square residual of the log-log regression.
    pub residual: f64,
    pub intercept: f64,
    pub samples: usize,
    /// Balls left out for having too few members.
    pub skipped_sparse: usize,
    /// Radii left out for reaching the diameter.
    pub skipped_radii: usize,
    /// Fitted balls with radius above half the diameter.
    pub beyond_half_diameter: usize,
}

/// Least-squares slope of `log mu(B(x,r))` against `log r`, pooled over all
/// centers with positive mass and all radii below the diameter.
pub fn ahlfors_fit(mspace: &MeasuredSpace, radii: &[f64], opts: FitOptions) -> Result<AhlforsFit> {
    check_radii(radii)?;
    let diam = mspace.space().diameter();
    let usable: Vec<f64> = radii.iter().copied().filter(|&r| r < diam).collect();
    let skipped_radii = radii.len() - usable.len();
    let mut distinct = usable.clone();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::InvalidArgument(
            "ahlfors fit needs at least 2 distinct radii below the diameter".into(),
        ));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut skipped_sparse = 0;
    for c in mspace.support() {
        let p = RowProfile::new(mspace, c);
        for &r in &usable {
            if p.count(r) < opts.min_members {
                skipped_sparse += 1;
                continue;
            }
            xs.push(r.ln());
            ys.push(p.measure(r).ln());
        }
    }
    let n = xs.len() as f64;
    if xs.is_empty() {
        return Err(Error::InvalidArgument("no ball passed the member cutoff".into()));
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::InvalidArgument(
            "fitted balls span a single radius".into(),
        ));
    }
    let q = sxy / sxx;
    let intercept = my - q * mx;
    let mut sse = 0.0;
    let mut c_a: f64 = 1.0;
    for (x, y) in xs.iter().zip(&ys) {
        let e = y - (intercept + q * x);
        sse += e * e;
        // log of mu / r^Q; C_A bounds its absolute value.
        c_a = c_a.max((y - q * x).abs().exp());
    }
    let half = diam / 2.0;
    let beyond_half_diameter = xs.iter().filter(|&&x| x.exp() > half).count();
    Ok(AhlforsFit {
        q,
        c_a,
        residual: (sse / n).sqrt(),
        intercept,
        samples: xs.len(),
        skipped_sparse,
        skipped_radii,
        beyond_half_diameter,
    })
}

/// Summary of the structural constants of a measured space.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StructureReport {
    pub points: usize,
    pub k: f64,
    pub tau: UniformPerfectness,
    pub diameter: f64,
    pub diameter_note: &'static str,
    pub c_mu: MeasureDoubling,
    pub ahlfors: Option<AhlforsFit>,
    pub ahlfors_error: Option<String>,
    pub radii: Vec<f64>,
}

pub fn structure_report(
    mspace: &MeasuredSpace,
    radii: &[f64],
    fit: FitOptions,
) -> Result<StructureReport> {
    let space = mspace.space();
    let k = if space.len() >= 2 {
        quasimetric_constant(space)?
    } else {
        1.0
    };
    let (ahlfors, ahlfors_error) = match ahlfors_fit(mspace, radii, fit) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(StructureReport {
        points: space.len(),
        k,
        tau: uniform_perfectness(space, radii)?,
        diameter: space.diameter(),
        diameter_note: "max pairwise distance of the finite sample",
        c_mu: measure_doubling_constant(mspace, radii)?,
        ahlfors,
        ahlfors_error,
        radii: radii.to_vec(),
    })
}

fn check_radii(radii: &[f64]) -> Result<()> {
    if radii.is_empty() {
        return Err(Error::InvalidArgument("empty radius list".into()));
    }
    if let Some(r) = radii.iter().find(|r| !(**r > 0.0 && r.is_finite())) {
        return Err(Error::InvalidArgument(format!(
            "radii must be positive and finite, got {r}"
        )));
    }
    Ok(())
}
