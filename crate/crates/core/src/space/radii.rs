//! Radius grids for the scale-dependent estimators.

use super::{MeasuredSpace, QuasimetricSpace, RowProfile};
use crate::error::{Error, Result};

/// Number of radii in the default grids.
pub const DEFAULT_RADII: usize = 24;

/// `count` logarithmically spaced values from `lo` to `hi` inclusive.
pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "log grid needs 0 < lo <= hi, got [{lo}, {hi}]"
        )));
    }
    if count == 0 {
        return Err(Error::InvalidArgument("empty radius grid".into()));
    }
    if count == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    let step = (b - a) / (count - 1) as f64;
    Ok((0..count)
        .map(|i| {
            if i == 0 {
                lo
            } else if i + 1 == count {
                hi
            } else {
                (a + step * i as f64).exp()
            }
        })
        .collect())
}

/// Default grid: 24 log-spaced radii between the smallest and largest
/// positive distances.
pub fn default_radii(space: &QuasimetricSpace) -> Result<Vec<f64>> {
    let lo = space
        .min_positive_distance()
        .ok_or_else(|| Error::InvalidArgument("single-point space has no scales".into()))?;
    log_spaced(lo, space.diameter(), DEFAULT_RADII)
}

/// Grid that starts above the sampling resolution: from `factor` times the
/// largest nearest-neighbour distance up to the diameter. Below that scale a
/// finite sample always has isolated points.
pub fn resolution_radii(space: &QuasimetricSpace, factor: f64, count: usize) -> Result<Vec<f64>> {
    let n = space.len();
    if n < 2 {
        return Err(Error::InvalidArgument("single-point space has no scales".into()));
    }
    let nn = (0..n)
        .map(|i| {
            space
                .row(i)
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &d)| d)
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max);
    let diam = space.diameter();
    let lo = (factor * nn).min(diam);
    log_spaced(lo, diam, count)
}

/// Fitting window for pooled ball-measure regressions.
///
/// The lower end is the median distance to the `neighbor_rank`-th nearest
/// support point, so that typical balls hold enough points to estimate a
/// measure. The upper end is the median distance to the neighbour at rank
/// `upper_fraction * n`, which keeps balls away from covering the whole set.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaleWindow {
    pub neighbor_rank: usize,
    pub upper_fraction: f64,
    pub count: usize,
}

impl Default for ScaleWindow {
    fn default() -> Self {
        ScaleWindow {
            neighbor_rank: 8,
            upper_fraction: 0.5,
            count: DEFAULT_RADII,
        }
    }
}

/// Radii for `window`, computed over centers with positive mass. Radii stay
/// strictly below the diameter.
pub fn scale_window(mspace: &MeasuredSpace, window: ScaleWindow) -> Result<Vec<f64>> {
    let support = mspace.support();
    let n = support.len();
    if n <= window.neighbor_rank {
        return Err(Error::InvalidArgument(format!(
            "scale window needs more than {} support points, got {n}",
            window.neighbor_rank
        )));
    }
    let upper_rank = ((n as f64 * window.upper_fraction) as usize).clamp(window.neighbor_rank, n - 1);
    let mut lows = Vec::with_capacity(n);
    let mut highs = Vec::with_capacity(n);
    for &c in &support {
        let p = RowProfile::new(mspace, c);
        lows.push(p.kth(window.neighbor_rank).unwrap_or(0.0));
        highs.push(p.kth(upper_rank).unwrap_or(0.0));
    }
    let lo = lower_median(&mut lows);
    let mut hi = lower_median(&mut highs);
    let diam = mspace.space().diameter();
    if hi >= diam {
        hi = diam * (1.0 - 1e-6);
    }
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::InvalidArgument(format!(
            "degenerate scale window [{lo}, {hi}]"
        )));
    }
    log_spaced(lo, hi, window.count)
}

fn lower_median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values[(values.len() - 1) / 2]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_grid_endpoints() {
        let g = log_spaced(0.01, 1.0, 3).unwrap();
        assert_eq!(g[0], 0.01);
        assert!((g[1] - 0.1).abs() < 1e-12);
        assert_eq!(g[2], 1.0);
        assert!(log_spaced(0.0, 1.0, 3).is_err());
        assert!(log_spaced(1.0, 1.0, 0).is_err());
    }

    #[test]
    fn default_grid_spans_distances() {
        let s = QuasimetricSpace::from_fn(5, |i, j| (i as f64 - j as f64).abs()).unwrap();
        let g = default_radii(&s).unwrap();
        assert_eq!(g.len(), DEFAULT_RADII);
        assert_eq!(g[0], 1.0);
        assert_eq!(*g.last().unwrap(), 4.0);
    }

    #[test]
    fn window_is_inside_the_space() {
        let n = 200;
        let s = QuasimetricSpace::from_fn(n, |i, j| (i as f64 - j as f64).abs() / n as f64).unwrap();
        let m = MeasuredSpace::uniform(s);
        let g = scale_window(&m, ScaleWindow::default()).unwrap();
        assert!(g[0] > 0.0);
        assert!(*g.last().unwrap() < m.space().diameter());
    }
}
