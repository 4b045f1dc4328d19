//! Command-line front end. Exit codes: 0 pass, 1 check failure, 2 invalid
//! input, 3 budget exceeded.

use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, ValueEnum};
use nalgebra::DVector;
use num_complex::Complex64;
use num_traits::ToPrimitive;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::json;

use crate::clifford;
use crate::error::Error;
use crate::genseries::{self, GeneratingSeriesSpec, ScalarTheta};
use crate::greens;
use crate::io::Job;
use crate::lattice::OLattice;
use crate::numberfield::FieldElement;
use crate::perioddomain::{random_period_point, Chart, PolyPeriodPoint};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;

const BUDGET: usize = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    Inspect,
    Theta,
    Check,
    GreenDiagnostics,
    #[value(name = "count-R")]
    CountR,
    Selftest,
}

#[derive(Debug, Parser)]
#[command(name = "kmseries", version, about = "Theta generating series and Kudla-Millson diagnostics")]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Job description (JSON).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long, default_value_t = 1e-10)]
    pub epsilon: f64,
    /// Truncation radius for `theta`, largest radius for diagnostics.
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Indefinite place (1-based) used by chart diagnostics.
    #[arg(long, default_value_t = 1)]
    pub place: usize,
    /// Chart grid side length.
    #[arg(long, default_value_t = 10)]
    pub grid: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "String::is_empty")]
    pub detail: String,
}

impl CheckRecord {
    fn at_most(name: &str, value: f64, tolerance: f64) -> Self {
        CheckRecord { name: name.into(), value, tolerance, pass: value <= tolerance, detail: String::new() }
    }

    fn with_detail(mut self, d: impl Into<String>) -> Self {
        self.detail = d.into();
        self
    }

    fn failed(name: &str, err: &Error) -> Self {
        CheckRecord { name: name.into(), value: f64::NAN, tolerance: 0.0, pass: false, detail: err.to_string() }
    }
}

struct Failure {
    code: i32,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Budget { .. } => EXIT_BUDGET,
            _ => EXIT_INPUT,
        };
        Failure { code, message: e.to_string() }
    }
}

pub fn run_from_env() -> i32 {
    run(std::env::args())
}

/// Runs the CLI on `args` (including the program name).
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_PASS };
        }
    };
    match execute(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn execute(cli: &Cli) -> Result<i32, Failure> {
    if !(cli.epsilon > 0.0) {
        return Err(Error::Input(format!("--epsilon must be positive, got {}", cli.epsilon)).into());
    }
    if cli.command == Command::Selftest {
        let records = selftest(cli.seed);
        return emit_checks(cli, &records);
    }
    let path = cli.input.as_ref().ok_or_else(|| Error::Input("--input is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::Input(format!("{}: {e}", path.display())))?;
    let job = Job::from_json_str(&text)?;
    match cli.command {
        Command::Inspect => inspect(cli, &job),
        Command::Theta => {
            let csv = theta_csv(&job, cli.radius.unwrap_or(3.0), cli.epsilon)?;
            write_out(cli, &csv)?;
            Ok(EXIT_PASS)
        }
        Command::Check => {
            let records = check_suite(&job, cli.seed, cli.place, cli.grid, cli.epsilon)?;
            emit_checks(cli, &records)
        }
        Command::GreenDiagnostics => {
            let csv = green_diagnostics(&job, cli.radius.unwrap_or(41.0))?;
            write_out(cli, &csv)?;
            Ok(EXIT_PASS)
        }
        Command::CountR => {
            let csv = count_r(&job, cli.radius.unwrap_or(400.0))?;
            write_out(cli, &csv)?;
            Ok(EXIT_PASS)
        }
        Command::Selftest => unreachable!(),
    }
}

fn write_out(cli: &Cli, s: &str) -> Result<(), Failure> {
    match &cli.output {
        Some(p) => std::fs::write(p, s).map_err(|e| Error::Input(format!("{}: {e}", p.display())))?,
        None => {
            let mut out = std::io::stdout().lock();
            let _ = out.write_all(s.as_bytes());
        }
    }
    Ok(())
}

fn emit_checks(cli: &Cli, records: &[CheckRecord]) -> Result<i32, Failure> {
    let pass = records.iter().all(|r| r.pass);
    let doc = json!({ "pass": pass, "checks": records });
    write_out(cli, &(serde_json::to_string_pretty(&doc).expect("serializable") + "\n"))?;
    if !pass {
        for r in records.iter().filter(|r| !r.pass) {
            eprintln!("check failed: {}", serde_json::to_string(r).expect("serializable"));
        }
        return Ok(EXIT_CHECK);
    }
    Ok(EXIT_PASS)
}

fn inspect(cli: &Cli, job: &Job) -> Result<i32, Failure> {
    let space = &job.space;
    let mut s = String::new();
    let field = match job.field.generator() {
        Some(d) => format!("Q(sqrt {d})"),
        None => "Q".to_string(),
    };
    s.push_str(&format!("field: {field}\ndim: {}\ne: {}\nplace,expected,found,status\n", space.dim(), space.e()));
    let sigs = space.signatures()?;
    let mut ok = true;
    for (i, found) in sigs.iter().enumerate() {
        let expected = space.expected_signature(i + 1);
        let status = if *found == expected { "PASS" } else { "FAIL" };
        ok &= found == &expected;
        s.push_str(&format!("{},({} {}),({} {}),{status}\n", i + 1, expected.0, expected.1, found.0, found.1));
    }
    s.push_str(if ok { "profile: PASS\n" } else { "profile: FAIL\n" });
    write_out(cli, &s)?;
    Ok(if ok { EXIT_PASS } else { EXIT_INPUT })
}

fn spec_for(job: &Job, epsilon: f64) -> crate::Result<GeneratingSeriesSpec> {
    let spec = GeneratingSeriesSpec::new(job.lattice()?, job.r, job.period_point()?, epsilon)?;
    match &job.coset {
        Some(c) => spec.with_coset(c.clone()),
        None => Ok(spec),
    }
}

/// Scalar theta counts for definite `r = 1` jobs, form-valued coefficients
/// otherwise.
pub fn theta_csv(job: &Job, radius: f64, epsilon: f64) -> crate::Result<String> {
    if job.space.e() == 0 && job.r == 1 && job.coset.is_none() {
        let th = ScalarTheta::with_radius(&job.lattice()?, radius, BUDGET)?;
        return Ok(th.to_csv(1.0));
    }
    let spec = spec_for(job, epsilon)?;
    Ok(genseries::q_expansion(&spec, radius, BUDGET)?.to_csv())
}

fn first_vector_coords(job: &Job, lattice: &OLattice) -> crate::Result<Vec<i64>> {
    let x = job.x.first().ok_or_else(|| Error::Input("the job needs a vector x".into()))?;
    lattice
        .coordinates(x)
        .iter()
        .map(|c| if c.is_integer() { c.to_integer().to_i64().ok_or_else(|| Error::Input("x is too large".into())) } else { Err(Error::Input("x is not a lattice vector".into())) })
        .collect()
}

/// `eta_3` partial sums over odd radii up to `max_radius`.
pub fn green_diagnostics(job: &Job, max_radius: f64) -> crate::Result<String> {
    let lattice = job.lattice()?;
    if lattice.space().e() == 0 {
        return Err(Error::Input("Green diagnostics need an indefinite place".into()));
    }
    let x = first_vector_coords(job, &lattice)?;
    let tau = job.period_point()?;
    let frames: Vec<_> = tau.points().iter().map(crate::kmform::KMFrame::new).collect();
    let radii: Vec<f64> = (0..).map(|k| 3.0 + 2.0 * k as f64).take_while(|&r| r <= max_radius).collect();
    let rep = greens::eta3_partial_sums(&lattice, &x, &tau, &frames, &radii, BUDGET)?;
    let mut s = format!("# fitted_decay={},skipped={}\n", rep.fitted_decay.map_or("nan".into(), |v| v.to_string()), rep.skipped);
    s.push_str(&rep.to_csv());
    Ok(s)
}

/// `#{y : R(y, tau) <= N, q(y) <= 1}` over a fixed ladder of `N`.
pub fn count_r(job: &Job, n_max: f64) -> crate::Result<String> {
    let lattice = job.lattice()?;
    if lattice.space().e() == 0 {
        return Err(Error::Input("counting needs an indefinite place".into()));
    }
    let ns: Vec<f64> = [0.0, 10.0, 25.0, 50.0, 100.0, 200.0, 400.0, 800.0].into_iter().filter(|&n| n <= n_max).collect();
    let rep = greens::count_bounded_r(&lattice, &job.period_point()?, &ns, 1.0)?;
    let mut s = format!("# exponent={}\nN,count\n", rep.exponent.map_or("nan".into(), |v| v.to_string()));
    for (n, c) in rep.ns.iter().zip(&rep.counts) {
        s.push_str(&format!("{n},{c}\n"));
    }
    Ok(s)
}

/// The diagnostics suite for one job.
pub fn check_suite(job: &Job, seed: u64, place: usize, grid: usize, epsilon: f64) -> crate::Result<Vec<CheckRecord>> {
    let lattice = job.lattice()?;
    let space = lattice.space().clone();
    let tau = job.period_point()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let small_vec = |rng: &mut ChaCha8Rng| -> Vec<i64> { (0..lattice.rank()).map(|_| rng.gen_range(-3..=3)).collect() };

    if space.e() > 0 {
        // majorant identities at random points
        let mut worst: f64 = 0.0;
        for _ in 0..200 {
            let p = rng.gen_range(1..=space.e());
            let t = random_period_point(&space, p, &mut rng, 0.8)?;
            let x = lattice.embedded_basis(p)? * DVector::from_iterator(lattice.rank(), small_vec(&mut rng).into_iter().map(|c| c as f64));
            let r = t.majorant_r(&x);
            let scale = r.abs().max(1e-300);
            worst = worst.max((r - t.majorant_r_projection(&x)).abs() / scale).max((r - 2.0 * t.section_norm_sq(&x)).abs() / scale);
        }
        out.push(CheckRecord::at_most("majorant_identities", worst, 1e-12));

        // GSpin invariance of R and exact invariance of T
        let p = place.clamp(1, space.e());
        let frame = Arc::new(clifford::orthogonalize(&space, p)?);
        let mut worst: f64 = 0.0;
        let mut exact = true;
        let tp = tau.at(p);
        for g in clifford::random_gspin(&space, &frame, seed, 50)? {
            let x = lattice.vector(&small_vec(&mut rng));
            let gx = g.act_exact(&space, &x)?;
            exact &= space.intersection_matrix(std::slice::from_ref(&gx))? == space.intersection_matrix(std::slice::from_ref(&x))?;
            let xv = space.embed_vector(&x, p)?;
            let gt = tp.act(&g.element)?;
            let r = tp.majorant_r(&xv);
            worst = worst.max((gt.majorant_r(&space.embed_vector(&gx, p)?) - r).abs() / r.max(1.0));
        }
        let mut rec = CheckRecord::at_most("gspin_invariance", worst, 1e-9);
        rec.pass &= exact;
        out.push(rec.with_detail(if exact { "T exact" } else { "T changed" }));

        match greens::count_bounded_r(&lattice, &tau, &[0.0, 10.0, 25.0, 50.0, 100.0, 200.0, 400.0], 1.0) {
            Ok(rep) => {
                let target = (space.n() as f64 + 2.0) / 2.0;
                let e = rep.exponent.unwrap_or(f64::NAN);
                out.push(CheckRecord::at_most("counting_exponent", (e - target).abs(), 0.3).with_detail(format!("exponent {e:.4}, target {target}")));
            }
            Err(err) => out.push(CheckRecord::failed("counting_exponent", &err)),
        }

        if space.n() == 1 {
            out.push(ddc_record(&lattice, &tau, place.clamp(1, space.e()), grid));
        }
    }

    let star = (1..=6).all(|n| greens::star_expansion(n).ok() == greens::star_recursive(n).ok());
    out.push(CheckRecord { name: "star_expansion".into(), value: if star { 0.0 } else { 1.0 }, tolerance: 0.0, pass: star, detail: String::new() });

    let spec = GeneratingSeriesSpec::new(lattice.clone(), 1, tau.clone(), epsilon)?;
    let mu = if space.degree() == 1 { FieldElement::integer(1) } else { space.field().codifferent_generator()? };
    let gs = vec![genseries::random_tuple(space.degree(), 1, 0.6, 1.5, &mut rng)?];
    match genseries::modularity_check_translation(&spec, &mu, &gs, BUDGET) {
        Ok(rep) => {
            let mut rec = CheckRecord::at_most("translation", rep.max_deviation, 1e-8);
            rec.pass &= rep.phases_exact;
            out.push(rec.with_detail(format!("mu = {mu}, phases {}", if rep.phases_exact { "integral" } else { "not integral" })));
        }
        Err(err) => out.push(CheckRecord::failed("translation", &err)),
    }

    if space.degree() == 1 && space.e() == 0 {
        let pts = genseries::sample_points(seed, 20, 0.5, 2.0);
        match genseries::modularity_check_inversion(&lattice, &pts, 1e-13, BUDGET) {
            Ok(v) => out.push(CheckRecord::at_most("inversion", v, 1e-8)),
            Err(err) => out.push(CheckRecord::failed("inversion", &err)),
        }
    }
    Ok(out)
}

fn ddc_record(lattice: &OLattice, tau: &PolyPeriodPoint, place: usize, grid: usize) -> CheckRecord {
    let run = || -> crate::Result<(f64, f64)> {
        let t = tau.at(place);
        let chart = Chart::new(t);
        // the basis vector farthest from the singular locus
        let basis = lattice.embedded_basis(place)?;
        let x = (0..basis.ncols()).map(|j| basis.column(j).into_owned()).max_by(|a, b| t.majorant_r(a).total_cmp(&t.majorant_r(b))).ok_or(Error::Dependent)?;
        let pts = greens::chart_grid(Complex64::new(0.0, 0.0), 0.05, grid);
        Ok((greens::ddc_check(&x, &chart, &pts, 1e-3)?, greens::ddc_check(&x, &chart, &pts, 5e-4)?))
    };
    match run() {
        Ok((d1, d2)) => {
            let mut rec = CheckRecord::at_most("ddc_green_equation", d1, 1e-3);
            rec.pass &= d2 < d1;
            rec.with_detail(format!("halved step deviation {d2:.3e}"))
        }
        Err(err) => CheckRecord::failed("ddc_green_equation", &err),
    }
}

/// Built-in examples: the signature-(1, 2) lattice diag(2, -2, -2) and E8.
pub fn selftest(seed: u64) -> Vec<CheckRecord> {
    let mut out = Vec::new();
    let f1 = greens::exp_integral_f(1.0).unwrap_or(f64::NAN);
    out.push(CheckRecord::at_most("exp_integral_f1", (f1 - 0.219_383_934_395_520_3).abs(), 1e-12));
    let diag = r#"{"field": {"degree": 1}, "space": {"gram": [[2, 0, 0], [0, -2, 0], [0, 0, -2]], "e": 1}}"#;
    let e8 = {
        let g = crate::lattice::e8_gram();
        json!({"field": {"degree": 1}, "space": {"gram": g, "e": 0}}).to_string()
    };
    for (label, text) in [("diag", diag.to_string()), ("e8", e8.clone())] {
        match Job::from_json_str(&text).and_then(|job| check_suite(&job, seed, 1, 10, 1e-10)) {
            Ok(rs) => out.extend(rs.into_iter().map(|mut r| {
                r.name = format!("{label}/{}", r.name);
                r
            })),
            Err(err) => out.push(CheckRecord::failed(label, &err)),
        }
    }
    match Job::from_json_str(&e8).and_then(|job| theta_csv(&job, 3.0, 1e-10)) {
        Ok(csv) => {
            let rows: Vec<&str> = csv.lines().skip(2).collect();
            let ok = rows == ["0,1,0", "1,240,0", "2,2160,0", "3,6720,0"];
            out.push(CheckRecord { name: "e8/coefficients".into(), value: if ok { 0.0 } else { 1.0 }, tolerance: 0.0, pass: ok, detail: rows.join(" ") });
        }
        Err(err) => out.push(CheckRecord::failed("e8/coefficients", &err)),
    }
    out
}
