use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{Map, Value};

use qmetric::analysis::{
    self, cross_ratio, cross_ratio_triple_check, decay_exponent, max_triple_ratio, qm_profile, qs_profile,
    three_point_condition, three_point_diagnostic, weak_qm_check, DEFAULT_DECILE_THRESHOLD, DEFAULT_JUMP_FACTOR,
};
use qmetric::hyperbolic::{self, bourdon, delta_hyperbolicity, hamenstadt, regularity_duality_check};
use qmetric::io;
use qmetric::modulus::{
    self, concentric_square_pairs, conformal_invariance_check, loewner_scan, ModulusProblem, SolverOptions,
    CONFORMAL_BUDGET,
};
use qmetric::space::{
    default_radii, measure_doubling_constant, resolution_radii, scale_window, structure_report,
};
use qmetric::suite::{self, SuiteOptions, FIT, IDENTITY_TOL, WINDOW};
use qmetric::transforms::{self, DeformationKind, DeformationRecord, DEFAULT_DS_EPSILON};
use qmetric::{
    Assertion, Error, GeneratorSpec, MeasuredSpace, PointId, Report, Result, WeightedGraph,
};

/// Finite quasimetric measure spaces: deformations, structural constants,
/// boundary metrics of hyperbolic graphs and discrete modulus.
///
/// Every command builds a JSON report holding the command line, the input
/// hashes, the seed and its assertions. The exit code is 0 iff all
/// assertions pass, 1 if one fails and 2 on an error.
#[derive(Parser, Debug)]
#[command(name = "qmetric", version)]
struct Cli {
    /// Main output. Commands that produce a space, graph or CSV write it here
    /// and their report next to it (`<out>.report.json`); the others write
    /// their report here. Defaults to standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Report path for commands whose main output is data.
    #[arg(long, global = true)]
    report: Option<PathBuf>,

    /// Seed for all sampling.
    #[arg(long, global = true, default_value_t = suite::DEFAULT_SEED)]
    seed: u64,

    /// Relative tolerance of the exact identities (default 1e-12).
    #[arg(long, global = true)]
    tol: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate an example space or graph file.
    Generate(GenerateArgs),
    /// Structural constants: K, tau, doubling, Ahlfors fit.
    Structure(StructureArgs),
    /// Sphericalize at a base point.
    Sphericalize(BaseArgs),
    /// Flatten at a base point, which is removed.
    Flatten(BaseArgs),
    /// Flatten then sphericalize at the new point at infinity and compare
    /// with the closed form.
    Roundtrip(BaseArgs),
    /// Shortest-chain metric.
    ChainMetrize(SpaceArg),
    /// David–Semmes deformation `mu(B(x,d) ∪ B(y,d))^eps`.
    DavidSemmes(DavidSemmesArgs),
    /// Cross ratio of a quadruple, or the largest triple ratio of the space.
    CrossRatio(CrossRatioArgs),
    /// Distortion profile of a map.
    Profile(ProfileArgs),
    /// Weak quasimöbius condition with constants h and H.
    WeakQm(WeakQmArgs),
    /// Three-point condition with constant lambda.
    ThreePoint(ThreePointArgs),
    /// Closed-form decay certificate with its empirical check.
    Decay(DecayArgs),
    /// Gromov delta at the base point, with alternative bases.
    Delta(DeltaArgs),
    /// Bourdon boundary quasimetric.
    Bourdon(BourdonArgs),
    /// Hamenstädt boundary quasimetric at a boundary point omega.
    Hamenstadt(HamenstadtArgs),
    /// Exponent fits of the Bourdon boundary and its flattening at omega.
    Duality(HamenstadtArgs),
    /// Discrete Q-modulus of the E–F path family.
    Modulus(ModulusArgs),
    /// Modulus against relative separation over concentric square pairs.
    LoewnerScan(ScanArgs),
    /// Modulus before and after the conformal reweighting at a base vertex.
    ConformalCheck(ConformalArgs),
    /// Run an acceptance suite: preservation, duality, boundary or modulus.
    Suite(SuiteArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    EuclideanSample,
    Snowflake,
    Nonisotropic,
    GeometricSet,
    Tree,
    Cycle,
    Grid,
    HyperbolicPatch,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(value_enum)]
    kind: Kind,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    /// Snowflake exponent.
    #[arg(long)]
    alpha: Option<f64>,
    /// Comma-separated exponents of the nonisotropic quasimetric.
    #[arg(long, value_delimiter = ',')]
    alphas: Option<Vec<f64>>,
    /// Geometric set size.
    #[arg(long)]
    k: Option<usize>,
    /// `uniform` or `geometric` masses for the geometric set.
    #[arg(long)]
    masses: Option<String>,
    #[arg(long)]
    depth: Option<usize>,
    #[arg(long)]
    branching: Option<usize>,
    #[arg(long)]
    edge_length: Option<f64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum RadiiKind {
    /// 24 log-spaced radii between the smallest and largest distance.
    Default,
    /// 24 log-spaced radii from twice the largest nearest-neighbour distance.
    Resolution,
    /// The pinned fitting window (8th neighbour to the n/2-th).
    Window,
}

#[derive(Args, Debug)]
struct SpaceArg {
    /// Space file.
    space: PathBuf,
}

#[derive(Args, Debug)]
struct StructureArgs {
    space: PathBuf,
    #[arg(long, value_enum, default_value = "resolution")]
    radii: RadiiKind,
}

#[derive(Args, Debug)]
struct BaseArgs {
    space: PathBuf,
    #[arg(long)]
    base: String,
}

#[derive(Args, Debug)]
struct DavidSemmesArgs {
    space: PathBuf,
    #[arg(long, default_value_t = DEFAULT_DS_EPSILON)]
    epsilon: f64,
}

#[derive(Args, Debug)]
struct CrossRatioArgs {
    space: PathBuf,
    /// Four comma-separated point ids.
    #[arg(long, value_delimiter = ',', num_args = 1)]
    points: Option<Vec<String>>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ProfileKind {
    Qs,
    Qm,
}

#[derive(Args, Debug)]
struct ProfileArgs {
    /// Map file `{source, target, pairs}`.
    map: PathBuf,
    #[arg(long, value_enum, default_value = "qm")]
    kind: ProfileKind,
    /// Tuples evaluated; all of them when the family is no larger.
    #[arg(long, default_value_t = analysis::EXHAUSTIVE_LIMIT)]
    budget: u64,
    /// Vanishing evidence when envelope(p10)/envelope(p90) is below this.
    #[arg(long, default_value_t = DEFAULT_DECILE_THRESHOLD)]
    decile_threshold: f64,
    /// A jump is an envelope step growing more than this times the step in t.
    #[arg(long, default_value_t = DEFAULT_JUMP_FACTOR)]
    jump_factor: f64,
}

#[derive(Args, Debug)]
struct WeakQmArgs {
    map: PathBuf,
    #[arg(long)]
    h: f64,
    #[arg(long = "H")]
    big_h: f64,
}

#[derive(Args, Debug)]
struct ThreePointArgs {
    map: PathBuf,
    #[arg(long)]
    lambda: f64,
}

#[derive(Args, Debug)]
struct DecayArgs {
    space: PathBuf,
    #[arg(long, value_enum, default_value = "resolution")]
    radii: RadiiKind,
}

#[derive(Args, Debug)]
struct DeltaArgs {
    /// Graph file.
    graph: PathBuf,
    /// Number of sampled alternative base points.
    #[arg(long, default_value_t = 8)]
    alternatives: usize,
}

#[derive(Args, Debug)]
struct BourdonArgs {
    graph: PathBuf,
    /// Boundary set name.
    #[arg(long, default_value = "leaves")]
    set: String,
    #[arg(long)]
    eps: f64,
}

#[derive(Args, Debug)]
struct HamenstadtArgs {
    graph: PathBuf,
    #[arg(long, default_value = "leaves")]
    set: String,
    #[arg(long)]
    omega: String,
    #[arg(long)]
    eps: f64,
}

#[derive(Args, Debug)]
struct SolverArgs {
    #[arg(long, default_value_t = modulus::DEFAULT_FEAS_TOL)]
    feas_tol: f64,
    #[arg(long, default_value_t = modulus::DEFAULT_GAP_TOL)]
    gap_tol: f64,
    #[arg(long, default_value_t = modulus::DEFAULT_MAX_ITER)]
    max_iter: usize,
}

impl SolverArgs {
    fn options(&self) -> SolverOptions {
        SolverOptions { feas_tol: self.feas_tol, gap_tol: self.gap_tol, max_iter: self.max_iter }
    }
}

#[derive(Args, Debug)]
struct ModulusArgs {
    graph: PathBuf,
    /// Comma-separated vertex ids of E.
    #[arg(long = "E", value_delimiter = ',', required = true)]
    e: Vec<String>,
    #[arg(long = "F", value_delimiter = ',', required = true)]
    f: Vec<String>,
    #[arg(long = "Q", default_value_t = 2.0)]
    q: f64,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct ScanArgs {
    /// `grid:n`.
    #[arg(long)]
    suite: String,
    #[arg(long = "Q", default_value_t = 2.0)]
    q: f64,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct ConformalArgs {
    /// Graph file; omit with `--suite grid:n`.
    graph: Option<PathBuf>,
    /// `grid:n` with E the right column and F the bottom row, both without
    /// the shared corner.
    #[arg(long, conflicts_with = "graph")]
    suite: Option<String>,
    #[arg(long = "E", value_delimiter = ',')]
    e: Option<Vec<String>>,
    #[arg(long = "F", value_delimiter = ',')]
    f: Option<Vec<String>>,
    #[arg(long = "Q", default_value_t = 2.0)]
    q: f64,
    #[arg(long)]
    base: String,
    #[arg(long, default_value_t = CONFORMAL_BUDGET)]
    budget: f64,
    #[command(flatten)]
    solver: SolverArgs,
}

#[derive(Args, Debug)]
struct SuiteArgs {
    name: String,
}

/// Where a command's data goes, besides its report.
enum Data {
    None,
    Text(String),
}

struct Ctx {
    report: Report,
    tol: f64,
    tol_override: Option<f64>,
    seed: u64,
}

impl Ctx {
    fn space(&mut self, path: &Path) -> Result<MeasuredSpace> {
        self.report.hash_input(path)?;
        io::read_space(path)
    }

    fn graph(&mut self, path: &Path) -> Result<WeightedGraph> {
        self.report.hash_input(path)?;
        io::read_graph(path)
    }

    fn map(&mut self, path: &Path) -> Result<analysis::SpaceMap> {
        self.report.hash_input(path)?;
        let (map, [s, t]) = io::read_map(path)?;
        self.report.hash_input(s)?;
        self.report.hash_input(t)?;
        Ok(map)
    }
}

fn radii_for(m: &MeasuredSpace, kind: RadiiKind) -> Result<Vec<f64>> {
    match kind {
        RadiiKind::Default => default_radii(m.space()),
        RadiiKind::Resolution => resolution_radii(m.space(), 2.0, 24),
        RadiiKind::Window => scale_window(m, WINDOW),
    }
}

fn generator_spec(a: &GenerateArgs) -> Result<GeneratorSpec> {
    let kind = a
        .kind
        .to_possible_value()
        .map(|v| v.get_name().replace('-', "_"))
        .unwrap_or_default();
    let mut obj = Map::new();
    obj.insert("kind".into(), Value::from(kind));
    let mut put = |k: &str, v: Option<Value>| {
        if let Some(v) = v {
            obj.insert(k.into(), v);
        }
    };
    put("n", a.n.map(Value::from));
    put("dim", a.dim.map(Value::from));
    put("alpha", a.alpha.map(Value::from));
    put("alphas", a.alphas.clone().map(Value::from));
    put("k", a.k.map(Value::from));
    put("masses", a.masses.clone().map(Value::from));
    put("depth", a.depth.map(Value::from));
    put("branching", a.branching.map(Value::from));
    put("edge_length", a.edge_length.map(Value::from));
    Ok(serde_json::from_value(Value::Object(obj))?)
}

fn grid_suite(s: &str) -> Result<usize> {
    s.strip_prefix("grid:")
        .and_then(|n| n.parse().ok())
        .filter(|&n: &usize| n >= 2)
        .ok_or_else(|| Error::InvalidArgument(format!("expected `grid:n` with n >= 2, got `{s}`")))
}

fn ids(v: &[String]) -> Vec<PointId> {
    v.iter().map(|s| PointId::new(s.trim())).collect()
}

fn deformation(ctx: &mut Ctx, label: &str, rec: DeformationRecord) {
    if let (Some(b), Some(ok)) = (rec.bound, rec.within_bound) {
        ctx.report.assert(Assertion {
            name: format!("{label}/constant_bound"),
            passed: ok,
            value: Some(rec.output_k),
            limit: Some(b),
            detail: format!("input K {}", rec.input_k),
        });
    }
    ctx.report.deformation(label, rec);
}

fn run(cmd: &Command, ctx: &mut Ctx) -> Result<Data> {
    match cmd {
        Command::Generate(a) => {
            let spec = generator_spec(a)?;
            ctx.report.result("spec", &spec);
            let text = match spec.generate(ctx.seed)? {
                qmetric::Generated::Space(s) => io::space_to_json(&s),
                qmetric::Generated::Graph(g) => io::graph_to_json(&g),
            };
            Ok(Data::Text(text))
        }
        Command::Structure(a) => {
            let m = ctx.space(&a.space)?;
            let radii = radii_for(&m, a.radii)?;
            let s = structure_report(&m, &radii, FIT)?;
            ctx.report.structure(a.space.display().to_string(), s);
            Ok(Data::None)
        }
        Command::Sphericalize(a) | Command::Flatten(a) => {
            let m = ctx.space(&a.space)?;
            let (kind, out) = match cmd {
                Command::Sphericalize(_) => (DeformationKind::Sphericalize, transforms::sphericalize(&m, &a.base)?),
                _ => (DeformationKind::Flatten, transforms::flatten(&m, &a.base)?),
            };
            let rec = DeformationRecord::compute(kind, Some(PointId::new(&a.base)), None, m.space(), out.space(), None)?;
            deformation(ctx, "deformation", rec);
            Ok(Data::Text(io::space_to_json(&out)))
        }
        Command::Roundtrip(a) => {
            let m = ctx.space(&a.space)?;
            let r = transforms::roundtrip(m.space(), &a.base)?;
            ctx.report.assert(Assertion::at_most("roundtrip/closed_form", r.max_relative_error, ctx.tol, ""));
            ctx.report.assert(Assertion::at_most("roundtrip/bilipschitz", r.bilipschitz, r.bound, "(1 + diameter)^2"));
            ctx.report.result("roundtrip", &r);
            Ok(Data::None)
        }
        Command::ChainMetrize(a) => {
            let m = ctx.space(&a.space)?;
            let c = transforms::chain_metrize(m.space())?;
            ctx.report.assert(Assertion::holds("chain/upper", c.upper_ok, "d <= rho"));
            if let Some(ok) = c.lower_ok {
                ctx.report.assert(Assertion::holds("chain/lower", ok, format!("d >= rho / K^2, K = {}", c.input_k)));
            }
            let out = m.with_space(c.metric.clone())?;
            let rec = DeformationRecord::compute(DeformationKind::Chain, None, None, m.space(), out.space(), None)?;
            deformation(ctx, "deformation", rec);
            ctx.report.result("chain", &c);
            Ok(Data::Text(io::space_to_json(&out)))
        }
        Command::DavidSemmes(a) => {
            let m = ctx.space(&a.space)?;
            let out = transforms::david_semmes(&m, a.epsilon)?;
            let c = measure_doubling_constant(&m, &radii_for(&m, RadiiKind::Resolution)?)?;
            let rec = DeformationRecord::compute(
                DeformationKind::DavidSemmes,
                None,
                Some(a.epsilon),
                m.space(),
                out.space(),
                Some(c.constant),
            )?;
            deformation(ctx, "deformation", rec);
            Ok(Data::Text(io::space_to_json(&out)))
        }
        Command::CrossRatio(a) => {
            let m = ctx.space(&a.space)?;
            let s = m.space();
            match &a.points {
                Some(p) => {
                    let [x, y, z, w] = <[String; 4]>::try_from(p.clone())
                        .map_err(|_| Error::InvalidArgument("--points takes exactly 4 ids".into()))?;
                    let value = cross_ratio(s, &x, &y, &z, &w)?;
                    let q = [s.index_of(&x)?, s.index_of(&y)?, s.index_of(&z)?, s.index_of(&w)?];
                    ctx.report.result("cross_ratio", &value);
                    if let Ok(t) = cross_ratio_triple_check(s, q, None) {
                        ctx.report.assert(Assertion::at_most("cross_ratio/triple", t.ratio, t.k * t.k, "K^2"));
                        ctx.report.result("triple", &t);
                    }
                }
                None => {
                    let (ratio, quad) = max_triple_ratio(s)?;
                    let quad = quad.map(|q| q.map(|i| s.id(i).clone()));
                    ctx.report.result("max_triple_ratio", &serde_json::json!({ "ratio": ratio, "quadruple": quad }));
                }
            }
            Ok(Data::None)
        }
        Command::Profile(a) => {
            let map = ctx.map(&a.map)?;
            let p = match a.kind {
                ProfileKind::Qs => qs_profile(&map, a.budget, ctx.seed)?,
                ProfileKind::Qm => qm_profile(&map, a.budget, ctx.seed)?,
            };
            let evidence = p.vanishing_evidence(a.decile_threshold);
            let jump = p.find_jump(a.jump_factor);
            ctx.report.result(
                "classification",
                &serde_json::json!({
                    "vanishing_evidence": evidence,
                    "decile_threshold": a.decile_threshold,
                    "jump": jump,
                    "jump_factor": a.jump_factor,
                }),
            );
            ctx.report.result("profile", &p);
            Ok(Data::None)
        }
        Command::WeakQm(a) => {
            let map = ctx.map(&a.map)?;
            let r = weak_qm_check(&map, a.h, a.big_h)?;
            ctx.report.assert(Assertion::holds("weak_qm", r.holds, format!("h {} H {}", a.h, a.big_h)));
            ctx.report.result("weak_qm", &r);
            Ok(Data::None)
        }
        Command::ThreePoint(a) => {
            let map = ctx.map(&a.map)?;
            let r = three_point_condition(&map, a.lambda)?;
            ctx.report.assert(Assertion::at_most("three_point", r.best_lambda, a.lambda, "best lambda"));
            ctx.report.result("three_point", &r);
            Ok(Data::None)
        }
        Command::Decay(a) => {
            let m = ctx.space(&a.space)?;
            let cert = decay_exponent(&m, &radii_for(&m, a.radii)?)?;
            ctx.report.assert(Assertion {
                name: "decay/certificate".into(),
                passed: cert.holds(),
                value: cert.empirical_max,
                limit: Some(cert.c0),
                detail: if cert.degenerate { "degenerate grid".into() } else { format!("alpha {}", cert.alpha) },
            });
            ctx.report.result("three_point_diagnostic", &three_point_diagnostic(&cert));
            ctx.report.result("certificate", &cert);
            Ok(Data::None)
        }
        Command::Delta(a) => {
            let g = ctx.graph(&a.graph)?;
            let d = delta_hyperbolicity(&g, a.alternatives, ctx.seed)?;
            ctx.report.result("delta", &d);
            Ok(Data::None)
        }
        Command::Bourdon(a) => {
            let g = ctx.graph(&a.graph)?;
            let b = bourdon(&g, &a.set, a.eps)?;
            boundary(ctx, "bourdon", &b)
        }
        Command::Hamenstadt(a) => {
            let g = ctx.graph(&a.graph)?;
            let h = hamenstadt(&g, &a.set, &a.omega, a.eps)?;
            boundary(ctx, "hamenstadt", &h)
        }
        Command::Duality(a) => {
            let g = ctx.graph(&a.graph)?;
            let d = regularity_duality_check(&g, &a.set, &a.omega, a.eps, WINDOW, FIT)?;
            ctx.report.assert(Assertion::at_most(
                "duality/exponents",
                d.difference,
                hyperbolic::DUALITY_Q_TOL,
                format!("bourdon {} hamenstadt {}", d.bourdon_fit.q, d.hamenstadt_fit.q),
            ));
            ctx.report.assert(Assertion::at_most("duality/identity", d.identity_error, ctx.tol, ""));
            ctx.report.result("duality", &d);
            Ok(Data::None)
        }
        Command::Modulus(a) => {
            let g = ctx.graph(&a.graph)?;
            let p = ModulusProblem::from_ids(g, &ids(&a.e), &ids(&a.f), a.q, None)?;
            let s = modulus::modulus(&p, a.solver.options())?;
            ctx.report.assert(Assertion::holds("modulus/converged", s.converged, format!("{} iterations", s.iterations)));
            ctx.report.result("modulus", &s);
            Ok(Data::None)
        }
        Command::LoewnerScan(a) => {
            let n = grid_suite(&a.suite)?;
            let g = qmetric::generate::grid(n)?;
            let scan = loewner_scan(&g, &concentric_square_pairs(n), a.q, a.solver.options())?;
            let bad = scan.points.iter().filter(|p| !p.converged).count();
            ctx.report.assert(Assertion::holds("loewner_scan/converged", bad == 0, format!("{bad} pairs did not converge")));
            ctx.report.result("envelope", &scan.envelope);
            Ok(Data::Text(scan.to_csv()))
        }
        Command::ConformalCheck(a) => {
            let (g, e, f) = match (&a.graph, &a.suite) {
                (Some(path), None) => {
                    let g = ctx.graph(path)?;
                    let (Some(e), Some(f)) = (&a.e, &a.f) else {
                        return Err(Error::InvalidArgument("--E and --F are required with a graph file".into()));
                    };
                    (g, ids(e), ids(f))
                }
                (None, Some(s)) => {
                    let n = grid_suite(s)?;
                    let g = qmetric::generate::grid(n)?;
                    let e: Vec<usize> = (0..n - 1).map(|i| i * n + n - 1).collect();
                    let f: Vec<usize> = (0..n - 1).map(|j| (n - 1) * n + j).collect();
                    let (e, f) = (qmetric::generate::ids(&g, &e), qmetric::generate::ids(&g, &f));
                    (g, e, f)
                }
                _ => return Err(Error::InvalidArgument("give a graph file or --suite grid:n".into())),
            };
            let base = g.index_of(&a.base)?;
            let p = ModulusProblem::from_ids(g, &e, &f, a.q, None)?;
            let r = conformal_invariance_check(&p, base, a.solver.options(), a.budget)?;
            ctx.report.assert(Assertion::at_most("conformal/discrepancy", r.discrepancy, r.budget, "relative"));
            ctx.report.assert(Assertion::holds("conformal/converged", r.converged, ""));
            ctx.report.result("conformal", &r);
            Ok(Data::None)
        }
        Command::Suite(a) => {
            let opts = SuiteOptions { seed: ctx.seed, tol: ctx.tol_override };
            let r = suite::run_suite(&a.name, opts)?;
            ctx.report.tol = r.tol;
            ctx.report.merge(r);
            Ok(Data::None)
        }
    }
}

fn boundary(ctx: &mut Ctx, label: &str, b: &hyperbolic::BoundaryQuasimetric) -> Result<Data> {
    for w in &b.warnings {
        eprintln!("warning: {w}");
    }
    if b.k <= 2.0 {
        ctx.report.assert(Assertion::holds(
            format!("{label}/chain_bounds"),
            b.chain.upper_ok && b.chain.lower_ok == Some(true),
            format!("K {}", b.k),
        ));
    }
    ctx.report.result(label, b);
    Ok(Data::Text(io::space_to_json(&MeasuredSpace::uniform(b.table.clone()))))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => io::write_text(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn sibling_report(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.report.json"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.tol.filter(|t| !(t.is_finite() && *t >= 0.0)) {
        eprintln!("error: --tol must be a finite non-negative number, got {t}");
        return ExitCode::from(2);
    }
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let mut ctx = Ctx {
        report: Report::new(&argv, cli.seed),
        tol: cli.tol.unwrap_or(IDENTITY_TOL),
        tol_override: cli.tol,
        seed: cli.seed,
    };
    ctx.report.tol = cli.tol;
    let start = Instant::now();
    let data = match run(&cli.command, &mut ctx) {
        Ok(d) => d,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    ctx.report.time("total", start.elapsed().as_secs_f64());
    let report = &ctx.report;
    let written = match data {
        Data::None => write_out(cli.out.as_deref(), &report.to_json()),
        Data::Text(text) => write_out(cli.out.as_deref(), &text).and_then(|_| {
            match (cli.report.clone(), cli.out.as_deref()) {
                (Some(p), _) => io::write_text(p, &report.to_json()),
                (None, Some(out)) => io::write_text(sibling_report(out), &report.to_json()),
                (None, None) => Ok(()),
            }
        }),
    };
    if let Err(e) = written {
        eprintln!("error: {e}");
        return ExitCode::from(2);
    }
    for f in report.failures() {
        eprintln!("FAIL {}: value {:?} limit {:?} {}", f.name, f.value, f.limit, f.detail);
    }
    if report.all_passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
