//! Cross ratios and the distortion of maps between finite spaces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::space::{
    measure_doubling_constant, quasimetric_constant, uniform_perfectness, MeasuredSpace, PointId,
    QuasimetricSpace, RowProfile,
};

/// Quadruple or triple counts up to this size are scanned exhaustively.
pub const EXHAUSTIVE_LIMIT: u64 = 1_000_000;

/// Default ratio `envelope(p10) / envelope(p90)` under which a profile counts
/// as evidence that the control function vanishes at 0.
pub const DEFAULT_DECILE_THRESHOLD: f64 = 0.5;

/// Default factor by which an envelope step may outgrow the step in `t`
/// before it is flagged as a jump.
pub const DEFAULT_JUMP_FACTOR: f64 = 4.0;

/// A bijection between the points of two spaces.
#[derive(Clone, Debug)]
pub struct SpaceMap {
    source: QuasimetricSpace,
    target: QuasimetricSpace,
    image: Vec<usize>,
}

impl SpaceMap {
    /// Builds the map from `(source id, target id)` pairs covering both spaces.
    pub fn new(source: QuasimetricSpace, target: QuasimetricSpace, pairs: &[(PointId, PointId)]) -> Result<Self> {
        let n = source.len();
        if target.len() != n || pairs.len() != n {
            return Err(Error::InvalidArgument(format!(
                "map needs {n} pairs between spaces of equal size, got {} pairs and {} target points",
                pairs.len(),
                target.len()
            )));
        }
        let mut image = vec![usize::MAX; n];
        let mut hit = vec![false; n];
        for (s, t) in pairs {
            let i = source.index_of(s.as_str())?;
            let j = target.index_of(t.as_str())?;
            if image[i] != usize::MAX || hit[j] {
                return Err(Error::InvalidArgument(format!(
                    "pair ({s}, {t}) repeats a point; map must be a bijection"
                )));
            }
            image[i] = j;
            hit[j] = true;
        }
        Ok(SpaceMap { source, target, image })
    }

    /// Identity on shared point ids.
    pub fn identity(source: QuasimetricSpace, target: QuasimetricSpace) -> Result<Self> {
        let pairs: Vec<(PointId, PointId)> = source.ids().iter().map(|id| (id.clone(), id.clone())).collect();
        Self::new(source, target, &pairs)
    }

    pub fn source(&self) -> &QuasimetricSpace {
        &self.source
    }

    pub fn target(&self) -> &QuasimetricSpace {
        &self.target
    }

    /// Target index of source index `i`.
    pub fn image(&self, i: usize) -> usize {
        self.image[i]
    }

    pub fn len(&self) -> usize {
        self.image.len()
    }

    pub fn is_empty(&self) -> bool {
        self.image.is_empty()
    }

    /// Pairs `(source id, target id)` in source order.
    pub fn pairs(&self) -> Vec<(PointId, PointId)> {
        (0..self.len())
            .map(|i| (self.source.id(i).clone(), self.target.id(self.image[i]).clone()))
            .collect()
    }
}

/// `rho(a,c) rho(b,d) / (rho(a,b) rho(c,d))` by index.
pub fn cross_ratio_at(space: &QuasimetricSpace, q: [usize; 4]) -> f64 {
    let [a, b, c, d] = q;
    space.d(a, c) * space.d(b, d) / (space.d(a, b) * space.d(c, d))
}

/// Cross ratio by point id. Requires `a != b` and `c != d`.
pub fn cross_ratio(space: &QuasimetricSpace, a: &str, b: &str, c: &str, d: &str) -> Result<f64> {
    let q = [space.index_of(a)?, space.index_of(b)?, space.index_of(c)?, space.index_of(d)?];
    if q[0] == q[1] || q[2] == q[3] {
        return Err(Error::InvalidArgument(
            "cross ratio needs a != b and c != d".into(),
        ));
    }
    Ok(cross_ratio_at(space, q))
}

/// The three products of a quadruple compared against `K^2`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TripleCheck {
    pub products: [f64; 3],
    /// Largest product over the second largest.
    pub ratio: f64,
    pub k: f64,
    pub holds: bool,
}

/// Checks that the products `rho(a,b) rho(c,d)`, `rho(a,c) rho(b,d)`,
/// `rho(a,d) rho(b,c)` form a multiplicative `K^2`-triple. `k` defaults to
/// the space's computed constant.
pub fn cross_ratio_triple_check(space: &QuasimetricSpace, q: [usize; 4], k: Option<f64>) -> Result<TripleCheck> {
    for i in 0..4 {
        for j in (i + 1)..4 {
            if q[i] == q[j] {
                return Err(Error::InvalidArgument(
                    "triple check needs 4 distinct points".into(),
                ));
            }
        }
    }
    let k = match k {
        Some(k) => k,
        None => quasimetric_constant(space)?,
    };
    let [a, b, c, d] = q;
    let products = [
        space.d(a, b) * space.d(c, d),
        space.d(a, c) * space.d(b, d),
        space.d(a, d) * space.d(b, c),
    ];
    let mut sorted = products;
    sorted.sort_by(f64::total_cmp);
    let ratio = sorted[2] / sorted[1];
    Ok(TripleCheck {
        products,
        ratio,
        k,
        holds: ratio <= k * k * (1.0 + crate::space::REL_TOL),
    })
}

/// Largest triple ratio over all 4-point subsets, with its subset.
pub fn max_triple_ratio(space: &QuasimetricSpace) -> Result<(f64, Option<[usize; 4]>)> {
    let n = space.len();
    let mut best = 1.0;
    let mut arg = None;
    for a in 0..n {
        for b in (a + 1)..n {
            for c in (b + 1)..n {
                for d in (c + 1)..n {
                    let r = cross_ratio_triple_check(space, [a, b, c, d], Some(1.0))?.ratio;
                    if r > best {
                        best = r;
                        arg = Some([a, b, c, d]);
                    }
                }
            }
        }
    }
    Ok((best, arg))
}

/// Sampled pairs `(t, t')` of a source ratio and its image, with the
/// monotone envelope `t -> max{t' : sample t <= t}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DistortionProfile {
    #[serde(skip)]
    pub samples: Vec<(f64, f64)>,
    /// Breakpoints `(t, value)` with both coordinates strictly increasing.
    pub envelope: Vec<(f64, f64)>,
    pub exhaustive: bool,
    /// Number of tuples in the full family.
    pub population: u64,
    pub evaluated: usize,
    /// `envelope(p10) / envelope(p90)` of the sampled `t`.
    pub decile_ratio: Option<f64>,
    /// First envelope step `(t_prev, t, value_prev, value)` whose value grows by
    /// more than the jump factor times the growth in `t`.
    pub jump: Option<[f64; 4]>,
}

impl DistortionProfile {
    pub fn from_samples(samples: Vec<(f64, f64)>, exhaustive: bool, population: u64) -> Self {
        let mut sorted = samples.clone();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut envelope: Vec<(f64, f64)> = Vec::new();
        for &(t, v) in &sorted {
            match envelope.last_mut() {
                Some(last) if v <= last.1 => {}
                Some(last) if last.0 == t => last.1 = v,
                _ => envelope.push((t, v)),
            }
        }
        let mut p = DistortionProfile {
            evaluated: samples.len(),
            samples,
            envelope,
            exhaustive,
            population,
            decile_ratio: None,
            jump: None,
        };
        if !sorted.is_empty() {
            let at = |q: f64| sorted[((sorted.len() - 1) as f64 * q) as usize].0;
            if let (Some(lo), Some(hi)) = (p.at(at(0.1)), p.at(at(0.9))) {
                if hi > 0.0 {
                    p.decile_ratio = Some(lo / hi);
                }
            }
        }
        p.jump = p.find_jump(DEFAULT_JUMP_FACTOR);
        p
    }

    /// Envelope value at `t`, or `None` below the smallest sample.
    pub fn at(&self, t: f64) -> Option<f64> {
        match self.envelope.partition_point(|&(s, _)| s <= t) {
            0 => None,
            k => Some(self.envelope[k - 1].1),
        }
    }

    /// Whether the envelope shrinks towards small `t` by the given factor.
    pub fn vanishing_evidence(&self, threshold: f64) -> bool {
        self.decile_ratio.is_some_and(|r| r < threshold)
    }

    pub fn find_jump(&self, factor: f64) -> Option<[f64; 4]> {
        self.envelope.windows(2).find_map(|w| {
            let ((t0, v0), (t1, v1)) = (w[0], w[1]);
            if t0 > 0.0 && v0 > 0.0 && v1 / v0 > factor * (t1 / t0) {
                Some([t0, t1, v0, v1])
            } else {
                None
            }
        })
    }

    /// Max of `sample / envelope` over all samples; at most 1 by construction.
    pub fn dominates_samples(&self) -> bool {
        self.samples
            .iter()
            .all(|&(t, v)| self.at(t).is_some_and(|e| e >= v))
    }
}

fn falling(n: u64, k: u64) -> u64 {
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n.saturating_sub(i)))
}

/// Visits all ordered tuples of `K` distinct indices when there are at most
/// `budget` of them, and otherwise `budget` seeded uniform draws.
fn for_each_tuple<const K: usize>(n: usize, budget: u64, seed: u64, mut f: impl FnMut([usize; K])) -> (bool, u64) {
    let population = falling(n as u64, K as u64);
    if population <= budget {
        let mut t = [0usize; K];
        fn rec<const K: usize>(n: usize, depth: usize, t: &mut [usize; K], f: &mut impl FnMut([usize; K])) {
            if depth == K {
                f(*t);
                return;
            }
            for i in 0..n {
                if !t[..depth].contains(&i) {
                    t[depth] = i;
                    rec(n, depth + 1, t, f);
                }
            }
        }
        rec(n, 0, &mut t, &mut f);
        (true, population)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..budget {
            let mut t = [0usize; K];
            let mut k = 0;
            while k < K {
                let i = rng.gen_range(0..n);
                if !t[..k].contains(&i) {
                    t[k] = i;
                    k += 1;
                }
            }
            f(t);
        }
        (false, population)
    }
}

/// Cross-ratio distortion `(r, r')` over quadruples of distinct points.
pub fn qm_profile(map: &SpaceMap, budget: u64, seed: u64) -> Result<DistortionProfile> {
    if budget == 0 {
        return Err(Error::InvalidArgument("sample budget must be at least 1".into()));
    }
    let mut samples = Vec::new();
    let (exhaustive, population) = for_each_tuple::<4>(map.len(), budget, seed, |q| {
        let img = q.map(|i| map.image(i));
        samples.push((cross_ratio_at(map.source(), q), cross_ratio_at(map.target(), img)));
    });
    Ok(DistortionProfile::from_samples(samples, exhaustive, population))
}

/// Three-point ratio distortion: `t = rho(x,a)/rho(x,b)` against
/// `t' = rho'(fx,fa)/rho'(fx,fb)` over triples of distinct points.
pub fn qs_profile(map: &SpaceMap, budget: u64, seed: u64) -> Result<DistortionProfile> {
    if budget == 0 {
        return Err(Error::InvalidArgument("sample budget must be at least 1".into()));
    }
    let (s, t) = (map.source(), map.target());
    let mut samples = Vec::new();
    let (exhaustive, population) = for_each_tuple::<3>(map.len(), budget, seed, |[x, a, b]| {
        let (fx, fa, fb) = (map.image(x), map.image(a), map.image(b));
        samples.push((s.d(x, a) / s.d(x, b), t.d(fx, fa) / t.d(fx, fb)));
    });
    Ok(DistortionProfile::from_samples(samples, exhaustive, population))
}

/// Outcome of a weak quasimöbius check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct WeakQmReport {
    pub h: f64,
    pub big_h: f64,
    pub holds: bool,
    /// Quadruple with `r <= h` and the largest image cross ratio.
    pub worst: Option<(Vec<PointId>, f64, f64)>,
    pub checked: u64,
}

/// Whether every quadruple with cross ratio at most `h` maps to one at most
/// `H`. Exhaustive over ordered quadruples of distinct points.
pub fn weak_qm_check(map: &SpaceMap, h: f64, big_h: f64) -> Result<WeakQmReport> {
    if !(h > 0.0) || !(big_h >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need h > 0 and H >= 1, got h = {h}, H = {big_h}"
        )));
    }
    let mut worst: Option<([usize; 4], f64, f64)> = None;
    let mut checked = 0;
    for_each_tuple::<4>(map.len(), u64::MAX, 0, |q| {
        let r = cross_ratio_at(map.source(), q);
        if r <= h {
            checked += 1;
            let rp = cross_ratio_at(map.target(), q.map(|i| map.image(i)));
            if worst.map_or(true, |w| rp > w.2) {
                worst = Some((q, r, rp));
            }
        }
    });
    let holds = worst.map_or(true, |w| w.2 <= big_h);
    Ok(WeakQmReport {
        h,
        big_h,
        holds,
        worst: worst.map(|(q, r, rp)| (q.iter().map(|&i| map.source().id(i).clone()).collect(), r, rp)),
        checked,
    })
}

/// Outcome of the three-point search.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThreePointReport {
    pub lambda: f64,
    /// Smallest `lambda` for which some triple qualifies.
    pub best_lambda: f64,
    pub triple: [PointId; 3],
    pub holds: bool,
}

/// Finds a triple whose pairwise distances are at least `diam / lambda` in
/// both spaces.
pub fn three_point_condition(map: &SpaceMap, lambda: f64) -> Result<ThreePointReport> {
    let n = map.len();
    if n < 3 {
        return Err(Error::InvalidArgument("three-point condition needs 3 points".into()));
    }
    let (s, t) = (map.source(), map.target());
    let (ds, dt) = (s.diameter(), t.diameter());
    let mut best = f64::INFINITY;
    let mut arg = [0, 1, 2];
    for a in 0..n {
        for b in (a + 1)..n {
            for c in (b + 1)..n {
                let ms = s.d(a, b).min(s.d(a, c)).min(s.d(b, c));
                let (fa, fb, fc) = (map.image(a), map.image(b), map.image(c));
                let mt = t.d(fa, fb).min(t.d(fa, fc)).min(t.d(fb, fc));
                let need = (ds / ms).max(dt / mt);
                if need < best {
                    best = need;
                    arg = [a, b, c];
                }
            }
        }
    }
    Ok(ThreePointReport {
        lambda,
        best_lambda: best,
        triple: arg.map(|i| s.id(i).clone()),
        holds: best <= lambda,
    })
}

/// Closed-form decay constants from `(C, K, tau)` with an empirical check.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DecayCertificate {
    pub doubling: f64,
    pub k: f64,
    pub tau: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub alpha: f64,
    pub c0: f64,
    /// Max of `mu(B(x,r)) / mu(B(x,R)) * (R/r)^alpha` over the grid.
    pub empirical_max: Option<f64>,
    pub witness: Option<(PointId, f64, f64)>,
    /// Fewer than two distinct radii, so no ratio was tested.
    pub degenerate: bool,
}

impl DecayCertificate {
    /// `delta1 = tau / (8K^2)`, `delta2 = 1 - C^{-(log2(K^3/tau) + 4)}`,
    /// `alpha = log_{delta1} delta2`, `C0 = 1 / delta2`.
    pub fn closed_form(doubling: f64, k: f64, tau: f64) -> Self {
        let delta1 = tau / (8.0 * k * k);
        let delta2 = 1.0 - doubling.powf(-((k.powi(3) / tau).log2() + 4.0));
        let alpha = delta2.ln() / delta1.ln();
        DecayCertificate {
            doubling,
            k,
            tau,
            delta1,
            delta2,
            alpha,
            c0: 1.0 / delta2,
            empirical_max: None,
            witness: None,
            degenerate: true,
        }
    }

    pub fn holds(&self) -> bool {
        self.empirical_max.map_or(true, |m| m <= self.c0)
    }
}

/// Computes `(C, K, tau)` on the grid, the closed-form certificate and its
/// empirical check over all `r <= R` in the grid up to the diameter.
pub fn decay_exponent(mspace: &MeasuredSpace, radii: &[f64]) -> Result<DecayCertificate> {
    let space = mspace.space();
    let tau = uniform_perfectness(space, radii)?.into_result()?;
    let k = quasimetric_constant(space)?;
    let c = measure_doubling_constant(mspace, radii)?.constant;
    let mut cert = DecayCertificate::closed_form(c, k, tau);
    let diam = space.diameter();
    let mut grid: Vec<f64> = radii.iter().copied().filter(|&r| r <= diam).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    if grid.len() < 2 {
        return Ok(cert);
    }
    cert.degenerate = false;
    let mut best = f64::NEG_INFINITY;
    let mut witness = None;
    for x in mspace.support() {
        let p = RowProfile::new(mspace, x);
        let mu: Vec<f64> = grid.iter().map(|&r| p.measure(r)).collect();
        for i in 0..grid.len() {
            for j in i..grid.len() {
                let v = mu[i] / mu[j] * (grid[j] / grid[i]).powf(cert.alpha);
                if v > best {
                    best = v;
                    witness = Some((space.id(x).clone(), grid[i], grid[j]));
                }
            }
        }
    }
    cert.empirical_max = Some(best);
    cert.witness = witness;
    Ok(cert)
}

/// Upper bound for `beta(x,a) / beta(x,b)` when `rho(x,a) <= t rho(x,b)`,
/// for the David–Semmes deformation with exponent `eps`.
pub fn david_semmes_eta_bound(t: f64, cert: &DecayCertificate, epsilon: f64) -> f64 {
    let kt = cert.k * t;
    if kt <= 1.0 {
        cert.c0.powf(epsilon) * kt.powf(cert.alpha * epsilon)
    } else {
        cert.doubling.powf(((kt).log2() + 1.0) * epsilon)
    }
}

/// Proof constants of the three-point argument for the sphericalized
/// David–Semmes identification. Diagnostic only. The constants underflow
/// `f64` for realistic inputs, so they are reported as natural logarithms.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ThreePointDiagnostic {
    /// Quasimetric constant of the deformation with exponent 1.
    pub k0: f64,
    pub ln_t0: f64,
    pub ln_t1: f64,
    /// Log of the guaranteed ratio `min pairwise / diam` for the triple.
    pub ln_ratio: f64,
    /// Log of its reciprocal, comparable with [`ThreePointReport::best_lambda`].
    pub ln_lambda: f64,
}

pub fn three_point_diagnostic(cert: &DecayCertificate) -> ThreePointDiagnostic {
    let (c, k, tau) = (cert.doubling, cert.k, cert.tau);
    let k0 = c.powf(2.0 * k.log2() + 2.0);
    let ln_coeff = (4.0 * k0 * k0).ln()
        + (4.0 * k.powi(3) / tau + 1.0).log2() * c.ln()
        + cert.c0.ln();
    // t0 solves coeff * (t0 tau)^alpha = 1/2.
    let ln_t0_tau = (0.5f64.ln() - ln_coeff) / cert.alpha;
    let ln_t0 = ln_t0_tau - tau.ln();
    // log2(1/(tau t0) + 1) without overflow.
    let y = -ln_t0_tau;
    let log2_term = (y.max(0.0) + (-y.abs()).exp().ln_1p()) / std::f64::consts::LN_2;
    let ln_t1 = -c.ln() * log2_term;
    let ln_ratio = ln_t1 - (4.0 * k0.powi(3)).ln() - ln_t1.exp().ln_1p();
    ThreePointDiagnostic {
        k0,
        ln_t0,
        ln_t1,
        ln_ratio,
        ln_lambda: -ln_ratio,
    }
}

/// Ball inclusions around a point under a map.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BallSandwich {
    pub center: PointId,
    pub r: f64,
    pub k: f64,
    /// `min rho'(f x, f z)` over `z` outside `B(x, r)`; `None` when the ball
    /// is the whole space.
    pub big_r: Option<f64>,
    pub eta_k: Option<f64>,
    pub inner_ok: Option<bool>,
    pub outer_ok: Option<bool>,
}

/// Checks `B(x',R) ⊂ f(B(x,r)) ⊂ f(B(x,kr))` and, in closed form,
/// `f(B(x,kr)) ⊂ B̄(x', eta(k) R)` with `eta` the profile envelope.
pub fn qs_ball_sandwich(map: &SpaceMap, eta: &DistortionProfile, x: &str, r: f64, k: f64) -> Result<BallSandwich> {
    if !(r > 0.0 && k >= 1.0) {
        return Err(Error::InvalidArgument(format!("need r > 0 and k >= 1, got r = {r}, k = {k}")));
    }
    let (s, t) = (map.source(), map.target());
    let xi = s.index_of(x)?;
    let fx = map.image(xi);
    let n = map.len();
    let big_r = (0..n)
        .filter(|&z| s.d(xi, z) >= r)
        .map(|z| t.d(fx, map.image(z)))
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))));
    let mut out = BallSandwich {
        center: s.id(xi).clone(),
        r,
        k,
        big_r,
        eta_k: eta.at(k),
        inner_ok: None,
        outer_ok: None,
    };
    let Some(big_r) = big_r else {
        return Ok(out);
    };
    let mut preimage = vec![usize::MAX; n];
    for z in 0..n {
        preimage[map.image(z)] = z;
    }
    out.inner_ok = Some((0..n).filter(|&w| t.d(fx, w) < big_r).all(|w| s.d(xi, preimage[w]) < r));
    out.outer_ok = out.eta_k.map(|e| {
        (0..n)
            .filter(|&z| s.d(xi, z) < k * r)
            .all(|z| t.d(fx, map.image(z)) <= e * big_r)
    });
    Ok(out)
}
