//! Named experiment suites with pass/fail assertions.
//!
//! Every experiment draws its randomness from its own ChaCha8 stream of the
//! suite seed, so an experiment gives the same report whether it runs alone
//! or inside a suite.

use std::f64::consts::{LN_2, SQRT_2};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::analysis::{david_semmes_eta_bound, decay_exponent, qs_profile, SpaceMap};
use crate::error::{Error, Result};
use crate::generate::{grid, parallel_paths, tree, Generated, GeneratorSpec, Masses};
use crate::graph::WeightedGraph;
use crate::hyperbolic::{bourdon, flattening_identity_error, hamenstadt, regularity_duality_check, BoundaryQuasimetric};
use crate::modulus::{
    brute_force_modulus, concentric_square_pairs, conformal_invariance_check, enumerate_paths, loewner_scan, modulus,
    ModulusProblem, SolverOptions, CONFORMAL_BUDGET,
};
use crate::report::{Assertion, Report};
use crate::space::{
    ahlfors_fit, measure_doubling_constant, quasimetric_constant, resolution_radii, scale_window, structure_report,
    FitOptions, MeasuredSpace, QuasimetricSpace, ScaleWindow,
};
use crate::transforms::{david_semmes, flatten, roundtrip, sphericalize, DeformationKind, DeformationRecord};

pub const SUITES: [&str; 4] = ["preservation", "duality", "boundary", "modulus"];

pub const DEFAULT_SEED: u64 = 1;

/// Relative tolerance of the exact identities.
pub const IDENTITY_TOL: f64 = 1e-12;
/// Allowed shift of a fitted exponent under sphericalization or flattening.
pub const EXPONENT_SHIFT: f64 = 0.15;
/// Allowed growth of a doubling constant when the sample size doubles.
pub const DOUBLING_GROWTH: f64 = 1.5;
pub const DS_EPSILON: f64 = 0.5;
pub const MODULUS_TOL: f64 = 1e-6;
/// Largest path family solved by enumeration.
pub const ORACLE_PATHS: usize = 8;

/// Pinned fit settings for all exponent assertions.
pub const WINDOW: ScaleWindow = ScaleWindow { neighbor_rank: 8, upper_fraction: 0.5, count: 24 };
pub const FIT: FitOptions = FitOptions { min_members: 8 };

/// Solver settings for comparisons against closed forms and enumeration.
pub const ORACLE_SOLVER: SolverOptions = SolverOptions { feas_tol: 1e-10, gap_tol: 1e-10, max_iter: 100_000 };

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuiteOptions {
    pub seed: u64,
    /// Overrides [`IDENTITY_TOL`].
    pub tol: Option<f64>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions { seed: DEFAULT_SEED, tol: None }
    }
}

impl SuiteOptions {
    fn identity_tol(&self) -> f64 {
        self.tol.unwrap_or(IDENTITY_TOL)
    }
}

type Experiment = fn(&SuiteOptions) -> Result<Report>;

/// Experiments of a suite in run order, with their names.
pub fn experiments(suite: &str) -> Result<Vec<(&'static str, Experiment)>> {
    Ok(match suite {
        "preservation" => vec![
            ("constant_bounds", constant_bounds as Experiment),
            ("regularity_preservation", regularity_preservation),
            ("david_semmes_regularity", david_semmes_regularity),
            ("decay_certificates", decay_certificates),
            ("doubling_stability", doubling_stability),
        ],
        "duality" => vec![("duality_exactness", duality_exactness as Experiment)],
        "boundary" => vec![
            ("boundary_identity", boundary_identity as Experiment),
            ("boundary_duality", boundary_duality),
        ],
        "modulus" => vec![
            ("modulus_oracle", modulus_oracle as Experiment),
            ("loewner_grid", loewner_grid),
            ("conformal_invariance", conformal_invariance),
        ],
        other => return Err(Error::UnknownSuite(other.to_string())),
    })
}

/// Runs every experiment of `name` and merges their reports in order.
pub fn run_suite(name: &str, opts: SuiteOptions) -> Result<Report> {
    let mut report = Report::new(&["suite", name], opts.seed);
    report.tol = opts.tol;
    for (label, run) in experiments(name)? {
        let start = Instant::now();
        let part = run(&opts)?;
        report.merge(part);
        report.time(label, start.elapsed().as_secs_f64());
    }
    Ok(report)
}

fn stream(seed: u64, experiment: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(experiment);
    rng
}

fn part(name: &str, opts: &SuiteOptions) -> Report {
    Report::new(&["experiment", name], opts.seed)
}

fn fit_q(m: &MeasuredSpace) -> Result<f64> {
    Ok(ahlfors_fit(m, &scale_window(m, WINDOW)?, FIT)?.q)
}

fn generated_space(g: Generated) -> Result<MeasuredSpace> {
    match g {
        Generated::Space(m) => Ok(m),
        Generated::Graph(g) => Ok(MeasuredSpace::uniform(g.to_space()?)),
    }
}

/// 50 spaces of 64 points: Euclidean samples raised to a power `p` with
/// `2^p <= 3`, so `K` lies in `[1, 3]`. Sphericalized constants stay below
/// `4K^2` and flattened ones below `K^2`, compared exactly.
pub fn constant_bounds(opts: &SuiteOptions) -> Result<Report> {
    let mut r = part("constant_bounds", opts);
    let mut rng = stream(opts.seed, 1);
    let pmax = 3f64.log2();
    for i in 0..50 {
        let dim = rng.gen_range(1..=3);
        let p = rng.gen_range(0.5..=pmax);
        let seed = rng.gen();
        let m = GeneratorSpec::EuclideanSample { n: 64, dim }.generate(seed)?.into_space()?;
        let m = m.with_space(m.space().powered(p)?)?;
        let base = m.space().id(rng.gen_range(0..64)).clone();
        let label = format!("constant_bounds/space{i:02}");
        let k = quasimetric_constant(m.space())?;
        r.assert(Assertion::within(format!("{label}/k_range"), k, 1.0, 3.0, format!("dim {dim}, power {p}")));
        let s = sphericalize(&m, base.as_str())?;
        let f = flatten(&m, base.as_str())?;
        for (kind, out, bound, what) in [
            (DeformationKind::Sphericalize, &s, 4.0 * k * k, "sphericalize"),
            (DeformationKind::Flatten, &f, k * k, "flatten"),
        ] {
            let rec = DeformationRecord::compute(kind, Some(base.clone()), None, m.space(), out.space(), None)?;
            r.assert(Assertion::at_most(format!("{label}/{what}"), rec.output_k, bound, format!("input K {k}")));
            r.deformation(format!("{label}/{what}"), rec);
        }
    }
    Ok(r)
}

fn random_space(rng: &mut ChaCha8Rng, n: usize) -> Result<MeasuredSpace> {
    let seed = rng.gen();
    let m = match rng.gen_range(0..3) {
        0 => GeneratorSpec::EuclideanSample { n, dim: rng.gen_range(1..=3) }.generate(seed)?,
        1 => GeneratorSpec::Snowflake { n, dim: rng.gen_range(1..=3), alpha: rng.gen_range(0.2..1.0) }.generate(seed)?,
        _ => {
            let alphas = (0..rng.gen_range(2..=3)).map(|_| rng.gen_range(0.5..2.0)).collect();
            GeneratorSpec::Nonisotropic { n, alphas }.generate(seed)?
        }
    };
    let m = m.into_space()?;
    // Spread the scales so that some spaces have diameter well above 1.
    let scale = 10f64.powf(rng.gen_range(-1.0..2.0));
    m.with_space(QuasimetricSpace::with_ids_fn(m.space().ids().to_vec(), |i, j| scale * m.space().d(i, j))?)
}

/// Flattening then sphericalizing reproduces the closed form on 20 random
/// spaces, and the identity to the original distances is `(1+T)^2`-bilipschitz.
pub fn duality_exactness(opts: &SuiteOptions) -> Result<Report> {
    let mut r = part("duality_exactness", opts);
    let mut rng = stream(opts.seed, 2);
    let tol = opts.identity_tol();
    for i in 0..20 {
        let m = random_space(&mut rng, 32)?;
        let base = m.space().id(rng.gen_range(0..32)).clone();
        let rt = roundtrip(m.space(), base.as_str())?;
        let label = format!("duality_exactness/space{i:02}");
        r.assert(Assertion::at_most(format!("{label}/closed_form"), rt.max_relative_error, tol, format!("base {base}")));
        r.assert(Assertion::at_most(
            format!("{label}/bilipschitz"),
            rt.bilipschitz,
            rt.bound,
            format!("diameter {}", rt.diameter),
        ));
        r.result(label, &rt);
    }
    Ok(r)
}

#[derive(Serialize)]
struct ShiftRecord {
    base: String,
    input_q: f64,
    sphericalized_q: f64,
    flattened_q: f64,
}

/// A 2048-point line sample and its square-root snowflake keep their fitted
/// exponent within [`EXPONENT_SHIFT`] after sphericalization and flattening
/// at the sample medoid.
pub fn regularity_preservation(opts: &SuiteOptions) -> Result<Report> {
    let mut r = part("regularity_preservation", opts);
    let mut rng = stream(opts.seed, 3);
    let cases = [
        ("line", GeneratorSpec::EuclideanSample { n: 2048, dim: 1 }, 0.9, 1.1),
        ("snowflake", GeneratorSpec::Snowflake { n: 2048, dim: 1, alpha: 0.5 }, 1.8, 2.2),
    ];
    for (label, spec, lo, hi) in cases {
        let start = Instant::now();
        let m = spec.generate(rng.gen())?.into_space()?;
        let base = m.space().id(m.space().medoid()).clone();
        let q0 = fit_q(&m)?;
        let qs = fit_q(&sphericalize(&m, base.as_str())?)?;
        let qf = fit_q(&flatten(&m, base.as_str())?)?;
        let name = format!("regularity_preservation/{label}");
        r.assert(Assertion::within(format!("{name}/input_q"), q0, lo, hi, ""));
        r.assert(Assertion::at_most(format!("{name}/sphericalize_shift"), (qs - q0).abs(), EXPONENT_SHIFT, format!("q {qs}")));
        r.assert(Assertion::at_most(format!("{name}/flatten_shift"), (qf - q0).abs(), EXPONENT_SHIFT, format!("q {qf}")));
        r.result(name.clone(), &ShiftRecord { base: base.to_string(), input_q: q0, sphericalized_q: qs, flattened_q: qf });
        r.time(name, start.elapsed().as_secs_f64());
    }
    Ok(r)
}

/// `n` equally spaced points on a circle of length 1 with the arc metric.
pub fn cycle_lattice(n: usize) -> Result<MeasuredSpace> {
    let s = QuasimetricSpace::from_fn(n, |i, j| {
        let k = i.abs_diff(j);
        k.min(n - k) as f64 / n as f64
    })?;
    Ok(MeasuredSpace::uniform(s))
}

#[derive(Serialize)]
struct EtaCheck {
    envelope_at_one: Option<f64>,
    literal_bound: f64,
    worst_ratio_to_eta: f64,
}

/// The David–Semmes deformation with `eps = 1/2` of a uniformly perfect
/// doubling sample is Ahlfors 2-regular, and the identity onto it has a
/// finite distortion envelope below the decay-certificate bound.
pub fn david_semmes_regularity(opts: &SuiteOptions) -> Result<Report> {
    let mut r = part("david_semmes_regularity", opts);
    let mut rng = stream(opts.seed, 4);
    let eps = DS_EPSILON;

    let m = cycle_lattice(256)?;
    let radii = resolution_radii(m.space(), 2.0, 24)?;
    let z = david_semmes(&m, eps)?;
    let q = fit_q(&z)?;
    r.assert(Assertion::within("david_semmes_regularity/lattice/fit", q, 1.0 / eps - 0.2, 1.0 / eps + 0.2, ""));
    let cert = decay_exponent(&m, &radii)?;
    let rec = DeformationRecord::compute(
        DeformationKind::DavidSemmes,
        None,
        Some(eps),
        m.space(),
        z.space(),
        Some(cert.doubling),
    )?;
    r.assert(Assertion::at_most(
        "david_semmes_regularity/lattice/constant",
        rec.output_k,
        rec.bound.unwrap_or(f64::NAN),
        "quasimetric constant of the deformation",
    ));
    r.deformation("david_semmes_regularity/lattice", rec);
    r.structure("david_semmes_regularity/lattice/input", structure_report(&m, &radii, FIT)?);
    let map = SpaceMap::identity(m.space().clone(), z.space().clone())?;
    let prof = qs_profile(&map, 1_000_000, rng.gen())?;
    let finite = !prof.envelope.is_empty() && prof.envelope.iter().all(|&(t, v)| t.is_finite() && v.is_finite());
    r.assert(Assertion::holds("david_semmes_regularity/lattice/finite_envelope", finite, format!("{} breakpoints", prof.envelope.len())));
    let literal = cert.c0.powf(eps) * cert.k.powf(cert.alpha * eps);
    let env1 = prof.at(1.0);
    r.assert(Assertion::at_most(
        "david_semmes_regularity/lattice/envelope_at_one",
        env1.unwrap_or(f64::NAN),
        literal,
        format!("C {} K {} tau {}", cert.doubling, cert.k, cert.tau),
    ));
    r.result("david_semmes_regularity/lattice/certificate", &cert);

    // A random sample: the envelope against the piecewise bound at every
    // breakpoint. The bound increases in t, so breakpoints suffice.
    let s = GeneratorSpec::EuclideanSample { n: 256, dim: 1 }.generate(rng.gen())?.into_space()?;
    let sradii = resolution_radii(s.space(), 2.0, 24)?;
    let scert = decay_exponent(&s, &sradii)?;
    let sz = david_semmes(&s, eps)?;
    let sprof = qs_profile(&SpaceMap::identity(s.space().clone(), sz.space().clone())?, 1_000_000, rng.gen())?;
    let worst = sprof
        .envelope
        .iter()
        .map(|&(t, v)| v / david_semmes_eta_bound(t, &scert, eps))
        .fold(0.0, f64::max);
    r.assert(Assertion::at_most("david_semmes_regularity/sample/eta_bound", worst, 1.0, "max envelope / bound over breakpoints"));
    r.result(
        "david_semmes_regularity/sample/eta",
        &EtaCheck {
            envelope_at_one: sprof.at(1.0),
            literal_bound: scert.c0.powf(eps) * scert.k.powf(scert.alpha * eps),
            worst_ratio_to_eta: worst,
        },
    );
    Ok(r)
}

/// The generator suite used for certificate checks.
pub fn generator_suite() -> Vec<GeneratorSpec> {
    vec![
        GeneratorSpec::EuclideanSample { n: 128, dim: 1 },
        GeneratorSpec::EuclideanSample { n: 128, dim: 2 },
        GeneratorSpec::Snowflake { n: 128, dim: 1, alpha: 0.5 },
        GeneratorSpec::Nonisotropic { n: 128, alphas: vec![1.0, 2.0] },
        GeneratorSpec::GeometricSet { k: 10, masses: Masses::Uniform },
        GeneratorSpec::GeometricSet { k: 10, masses: Masses::Geometric },
        GeneratorSpec::Tree { depth: 5, branching: 2, edge_length: 1.0 },
        GeneratorSpec::Cycle { n: 64 },
        GeneratorSpec::Grid { n: 8 },
        GeneratorSpec::HyperbolicPatch { depth: 5 },
    ]
}

/// The closed-form decay certificate dominates the empirical ratios on the
/// resolution grid of every generator.
pub fn decay_certificates(opts: &SuiteOptions) -> Result<Report> {
    let mut r = part("decay_certificates", opts);
    let mut rng = stream(opts.seed, 5);
    for spec in generator_suite() {
        let label = format!("decay_certificates/{}", spec.label());
        let m = generated_space(spec.generate(rng.gen())?)?;
        let radii = resolution_radii(m.space(), 2.0, 24)?;
        let cert = decay_exponent(&m, &radii)?;
        match cert.empirical_max {
            Some(v) => r.assert(Assertion::at_most(label.clone(), v, cert.c0, format!("alpha {}", cert.alpha))),
            None => r.assert(Assertion::holds(label.clone(), true, "degenerate: fewer than two radii on the grid")),
        };
        r.structure(label.clone(), structure_report(&m, &radii, FIT)?);
        r.result(label, &cert);
    }
    Ok(r)
}

#[derive(Serialize)]
struct DoublingRecord {
    space: String,
    n: usize,
    input: f64,
    sphericalized: f64,
    flattened: f64,
}

/// `n` equally spaced points `(i + 1/2) / n` of the unit interval with
/// distances raised to `alpha`.
pub fn line_lattice(n: usize, alpha: f64) -> Result<MeasuredSpace> {
    let s = QuasimetricSpace::from_fn(n, |i, j| (i.abs_diff(j) as f64 / n as f64).powf(alpha))?;
    Ok(MeasuredSpace::uniform(s))
}

/// Doubling constants of sphericalized and flattened line lattices grow by at
/// most [`DOUBLING_GROWTH`] when the number of points doubles. Lattices keep
/// the input constant fixed across sizes; on random samples the input
/// constant itself fluctuates with the sample gaps.
pub fn doubling_stability(opts: &SuiteOptions) -> Result<Report> {
    let mut r = part("doubling_stability", opts);
    let mut rows = Vec::new();
    for (label, alpha) in [("line", 1.0), ("snowflake", 0.5)] {
        let mut pair = Vec::new();
        for n in [512, 1024] {
            let m = line_lattice(n, alpha)?;
            let base = m.space().id(m.space().medoid()).clone();
            let c = |x: &MeasuredSpace| -> Result<f64> {
                Ok(measure_doubling_constant(x, &scale_window(x, WINDOW)?)?.constant)
            };
            pair.push(DoublingRecord {
                space: label.to_string(),
                n,
                input: c(&m)?,
                sphericalized: c(&sphericalize(&m, base.as_str())?)?,
                flattened: c(&flatten(&m, base.as_str())?)?,
            });
        }
        let (a, b) = (&pair[0], &pair[1]);
        let name = format!("doubling_stability/{label}");
        r.assert(Assertion::at_most(format!("{name}/sphericalize"), b.sphericalized / a.sphericalized, DOUBLING_GROWTH, ""));
        r.assert(Assertion::at_most(format!("{name}/flatten"), b.flattened / a.flattened, DOUBLING_GROWTH, ""));
        rows.extend(pair);
    }
    r.result("doubling_stability", &rows);
    Ok(r)
}

fn leaves_tree(depth: usize) -> Result<(WeightedGraph, String)> {
    let g = tree(depth, 2, 1.0)?;
    let omega = g.vertex(g.boundary("leaves")?[0]).to_string();
    Ok((g, omega))
}

fn sandwich(r: &mut Report, label: &str, b: &BoundaryQuasimetric) {
    if b.k <= 2.0 {
        r.assert(Assertion::holds(
            format!("{label}/chain_bounds"),
            b.chain.upper_ok && b.chain.lower_ok == Some(true),
            format!("K {}, min d/rho {}", b.k, b.chain.min_ratio),
        ));
    }
    if b.k <= SQRT_2 {
        r.assert(Assertion::holds(
            format!("{label}/half_sandwich"),
            b.chain.half_sandwich,
            format!("K {}, min d/rho {}", b.k, b.chain.min_ratio),
        ));
    }
}

/// On binary trees of depth 6 to 10 the Hamenstädt table is the flattened
/// Bourdon table, and the chain sandwich holds on both.
pub fn boundary_identity(opts: &SuiteOptions) -> Result<Report> {
    let mut r = part("boundary_identity", opts);
    let tol = opts.identity_tol();
    for depth in 6..=10 {
        let (g, omega) = leaves_tree(depth)?;
        let b = bourdon(&g, "leaves", LN_2)?;
        let h = hamenstadt(&g, "leaves", &omega, LN_2)?;
        let label = format!("boundary_identity/depth{depth:02}");
        let err = flattening_identity_error(&b, &h)?;
        r.assert(Assertion::at_most(format!("{label}/identity"), err, tol, format!("omega {omega}")));
        sandwich(&mut r, &format!("{label}/bourdon"), &b);
        sandwich(&mut r, &format!("{label}/hamenstadt"), &h);
    }
    Ok(r)
}

/// On the depth-10 binary tree the Bourdon boundary with `eps = ln 2` fits
/// exponent 1 and with `eps = ln 2 / 2` exponent 2; the flattened side
/// follows within [`EXPONENT_SHIFT`].
pub fn boundary_duality(opts: &SuiteOptions) -> Result<Report> {
    let mut r = part("boundary_duality", opts);
    let (g, omega) = leaves_tree(10)?;
    for (label, eps, q, width) in [("ln2", LN_2, 1.0, 0.1), ("half_ln2", LN_2 / 2.0, 2.0, EXPONENT_SHIFT)] {
        let d = regularity_duality_check(&g, "leaves", &omega, eps, WINDOW, FIT)?;
        let name = format!("boundary_duality/{label}");
        r.assert(Assertion::within(format!("{name}/bourdon_q"), d.bourdon_fit.q, q - width, q + width, ""));
        if label == "ln2" {
            r.assert(Assertion::at_most(format!("{name}/difference"), d.difference, EXPONENT_SHIFT, ""));
        } else {
            r.assert(Assertion::within(format!("{name}/hamenstadt_q"), d.hamenstadt_fit.q, q - width, q + width, ""));
        }
        r.assert(Assertion::at_most(format!("{name}/identity"), d.identity_error, opts.identity_tol(), ""));
        r.result(name, &d);
    }
    Ok(r)
}

/// Small instances whose minimal path families are enumerated.
pub fn oracle_instances() -> Result<Vec<(String, ModulusProblem)>> {
    let mut out = Vec::new();
    for q in [2.0, 1.5, 3.0] {
        for (m, k) in [(1, 4), (3, 4), (2, 5), (1, 1)] {
            let g = parallel_paths(m, k)?;
            out.push((format!("parallel{m}x{k}/q{q}"), ModulusProblem::new(g, &[0], &[1], q, None)?));
        }
        let g3 = grid(3)?;
        for (name, e, f) in [
            ("corners", vec![0], vec![8]),
            ("edges", vec![0, 3], vec![5, 8]),
            ("middles", vec![1], vec![7]),
            ("left_right", vec![0, 3, 6], vec![2, 5, 8]),
        ] {
            out.push((format!("grid3/{name}/q{q}"), ModulusProblem::new(g3.clone(), &e, &f, q, None)?));
        }
        let g2 = grid(2)?;
        out.push((format!("grid2/corners/q{q}"), ModulusProblem::new(g2, &[0], &[3], q, None)?));
        let cyc = WeightedGraph::from_edges(6, &(0..6).map(|i| (i, (i + 1) % 6, 1.0 + i as f64 / 4.0)).collect::<Vec<_>>())?;
        out.push((format!("cycle6/q{q}"), ModulusProblem::new(cyc, &[0], &[3], q, None)?));
        let shared = WeightedGraph::from_edges(4, &[(0, 1, 1.0), (1, 2, 1.0), (1, 3, 1.0), (2, 3, 2.0)])?;
        out.push((format!("shared/q{q}"), ModulusProblem::new(shared, &[0], &[2, 3], q, None)?));
        let t = tree(3, 2, 1.0)?;
        let (first, last) = {
            let leaves = t.boundary("leaves")?;
            (leaves[0], leaves[leaves.len() - 1])
        };
        out.push((format!("tree3/q{q}"), ModulusProblem::new(t, &[first], &[last], q, None)?));
    }
    Ok(out)
}

#[derive(Serialize)]
struct OracleRecord {
    instance: String,
    paths: usize,
    solver: f64,
    enumeration: f64,
}

/// Closed forms for one path and three parallel paths, and agreement with
/// path enumeration on every instance with at most [`ORACLE_PATHS`] paths.
pub fn modulus_oracle(opts: &SuiteOptions) -> Result<Report> {
    let mut r = part("modulus_oracle", opts);
    for (m, expect) in [(1, 0.25), (3, 0.75)] {
        let p = ModulusProblem::new(parallel_paths(m, 4)?, &[0], &[1], 2.0, None)?;
        let s = modulus(&p, ORACLE_SOLVER)?;
        r.assert(Assertion::at_most(
            format!("modulus_oracle/parallel{m}x4"),
            (s.value - expect).abs(),
            MODULUS_TOL,
            format!("modulus {} expected {expect}", s.value),
        ));
    }
    let mut rows = Vec::new();
    for (name, p) in oracle_instances()? {
        let Some(paths) = enumerate_paths(&p, ORACLE_PATHS) else { continue };
        let s = modulus(&p, ORACLE_SOLVER)?;
        let bf = brute_force_modulus(&p, &paths)?;
        r.assert(Assertion::at_most(
            format!("modulus_oracle/enumeration/{name}"),
            (s.value - bf).abs(),
            MODULUS_TOL,
            format!("{} paths", paths.len()),
        ));
        rows.push(OracleRecord { instance: name, paths: paths.len(), solver: s.value, enumeration: bf });
    }
    r.assert(Assertion::holds(
        "modulus_oracle/enumeration/count",
        rows.len() >= 10,
        format!("{} instances compared", rows.len()),
    ));
    r.result("modulus_oracle", &rows);
    Ok(r)
}

/// Concentric square pairs on the 9x9 grid: moduli fall as the outer square
/// moves out and the scan envelope stays positive.
pub fn loewner_grid(opts: &SuiteOptions) -> Result<Report> {
    let mut r = part("loewner_grid", opts);
    let n = 9;
    let g = grid(n)?;
    let scan = loewner_scan(&g, &concentric_square_pairs(n), 2.0, SolverOptions::default())?;
    r.assert(Assertion::holds(
        "loewner_grid/converged",
        scan.points.iter().all(|p| p.converged),
        format!("{} pairs", scan.points.len()),
    ));
    let min_env = scan.envelope.iter().map(|e| e.1).fold(f64::INFINITY, f64::min);
    r.assert(Assertion::holds("loewner_grid/envelope_positive", min_env > 0.0, format!("min {min_env}")));
    for inner in 1..n / 2 {
        let ms: Vec<f64> = scan
            .points
            .iter()
            .filter(|p| p.pair_id.starts_with(&format!("ring{inner}-")))
            .map(|p| p.modulus)
            .collect();
        if ms.len() >= 2 {
            r.assert(Assertion::holds(
                format!("loewner_grid/ring{inner}/decreasing"),
                ms.windows(2).all(|w| w[1] < w[0]),
                format!("{ms:?}"),
            ));
        }
    }
    r.result("loewner_grid", &scan);
    Ok(r)
}

/// Corner-based conformal reweighting of the grid at sizes 9 and 17. The
/// discrepancy at 9 stays within budget and does not grow at 17.
pub fn conformal_invariance(opts: &SuiteOptions) -> Result<Report> {
    let mut r = part("conformal_invariance", opts);
    let mut reports = Vec::new();
    for n in [9, 17] {
        let e: Vec<usize> = (0..n - 1).map(|i| i * n + n - 1).collect();
        let f: Vec<usize> = (0..n - 1).map(|j| (n - 1) * n + j).collect();
        let p = ModulusProblem::new(grid(n)?, &e, &f, 2.0, None)?;
        let c = conformal_invariance_check(&p, 0, SolverOptions::default(), CONFORMAL_BUDGET)?;
        r.assert(Assertion::holds(format!("conformal_invariance/grid{n}/converged"), c.converged, ""));
        reports.push(c);
    }
    let (a, b) = (&reports[0], &reports[1]);
    r.assert(Assertion::at_most("conformal_invariance/grid9/budget", a.discrepancy, a.budget, ""));
    r.assert(Assertion::at_most("conformal_invariance/grid17/no_worse", b.discrepancy, a.discrepancy, "non-strict"));
    r.result("conformal_invariance", &reports);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_suite_is_an_error() {
        assert!(matches!(run_suite("nope", SuiteOptions::default()), Err(Error::UnknownSuite(_))));
    }

    #[test]
    fn streams_are_independent_of_order() {
        let a: u64 = stream(5, 3).gen();
        let _: u64 = stream(5, 2).gen();
        assert_eq!(a, stream(5, 3).gen::<u64>());
        assert_ne!(a, stream(5, 2).gen::<u64>());
    }

    #[test]
    fn cycle_lattice_is_a_metric() {
        let m = cycle_lattice(16).unwrap();
        assert_eq!(m.space().d(0, 8), 0.5);
        assert_eq!(m.space().d(1, 15), 0.125);
        assert!(quasimetric_constant(m.space()).unwrap() <= 2.0);
    }

    #[test]
    fn oracle_instances_include_small_families() {
        let small = oracle_instances()
            .unwrap()
            .into_iter()
            .filter(|(_, p)| enumerate_paths(p, ORACLE_PATHS).is_some())
            .count();
        assert!(small >= 10, "{small}");
    }
}
