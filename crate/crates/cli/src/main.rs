mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use momlab::mainterms::{fourth_main_term, lhs_oracle, second_main_term, ContourSpec, MainTermRecord, SmoothWeight, TwistSpec};
use momlab::moments::{correlation_prediction, mom2_estimate, shifted_pair_moment, transition_scan, Estimator, MomConfig, MomEstimate, ScanTable};
use momlab::primes::{b_coeff_series, b_prime_power};
use momlab::proxy::DirichletPoly;
use momlab::zeta::{lambda_chi, y_factor, ZetaEvaluator};
use momlab::{Complex64, Error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use output::{num, Manifest, OutDir};

#[derive(Parser)]
#[command(name = "momlab", version, about = "Moments of moments of the Riemann zeta function")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Worker threads (defaults to all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output directory
    #[arg(long, global = true, default_value = "momlab-out")]
    out: PathBuf,
    /// key=value file; command-line flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Heights above this use Riemann–Siegel
    #[arg(long, global = true, default_value_t = 1000.0)]
    rs_from: f64,
}

#[derive(Subcommand)]
enum Command {
    /// Identity and cross-method checks
    Verify {
        #[arg(long, default_value_t = 50)]
        points: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Second moment of short-window moments at one height
    Mom {
        #[arg(long)]
        height: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        theta: f64,
        #[command(flatten)]
        sampling: Sampling,
        #[command(flatten)]
        common: Common,
    },
    /// Fitted versus predicted exponents over a β grid and a ladder of heights
    Scan {
        #[arg(long, value_delimiter = ',', default_value = "0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0")]
        betas: Vec<f64>,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        theta: f64,
        #[arg(long, value_delimiter = ',', default_value = "1e4,1e5,1e6,1e7")]
        ladder: Vec<f64>,
        #[command(flatten)]
        sampling: Sampling,
        #[command(flatten)]
        common: Common,
    },
    /// Contour main term against the direct integral
    Mainterm {
        #[arg(long, value_parser = ["2", "4"])]
        order: String,
        /// Shifts as re:im pairs, comma separated
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        shifts: Vec<String>,
        #[arg(long)]
        height: f64,
        /// CSV rows n,a_re,a_im,b_re,b_im
        #[arg(long)]
        twist_file: Option<PathBuf>,
        #[arg(long, default_value_t = 0.0)]
        eta: f64,
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long, default_value_t = 0.01)]
        dt: f64,
        /// Accepted ratio band lo,hi
        #[arg(long, value_delimiter = ',')]
        band: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// Shifted pair moments against the correlation prediction
    Correlate {
        #[arg(long)]
        height: f64,
        #[arg(long)]
        beta: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.25,0.5,1.0,2.0")]
        dh: Vec<f64>,
        #[arg(long, default_value_t = 2048)]
        n_t: usize,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Clone)]
struct Sampling {
    #[arg(long, default_value_t = 4096)]
    n_t: usize,
    #[arg(long, default_value_t = 257)]
    n_h: usize,
    #[arg(long, value_enum, default_value_t = EstimatorArg::MedianOfMeans)]
    estimator: EstimatorArg,
    #[arg(long, default_value_t = momlab::moments::DEFAULT_GROUPS)]
    groups: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Plain,
    MedianOfMeans,
}

impl Sampling {
    fn estimator(&self) -> Estimator {
        match self.estimator {
            EstimatorArg::Plain => Estimator::Plain,
            EstimatorArg::MedianOfMeans => Estimator::MedianOfMeans { groups: self.groups },
        }
    }

    fn config(&self, height: f64, beta: f64, theta: f64, seed: u64) -> MomConfig {
        MomConfig {
            n_t: self.n_t,
            n_h: self.n_h,
            seed,
            estimator: self.estimator(),
            ..MomConfig::new(height, beta, theta)
        }
    }
}

enum Failure {
    Usage(String),
    Assertion(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(_) | Error::LimitTooLarge(_) => Failure::Usage(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

fn main() -> ExitCode {
    let args = match config::merge_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let cli = Cli::parse_from(args);
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Assertion(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Outcome {
    let common = match &command {
        Command::Verify { common, .. }
        | Command::Mom { common, .. }
        | Command::Scan { common, .. }
        | Command::Mainterm { common, .. }
        | Command::Correlate { common, .. } => common.clone(),
    };
    let workers = match common.workers {
        Some(0) => return Err(Failure::Usage("--workers must be positive".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    let ctx = Context {
        zeta: ZetaEvaluator::with_cutoff(common.rs_from),
        seed: common.seed,
        workers,
        out: common.out.clone(),
    };
    pool.install(|| match command {
        Command::Verify { points, .. } => cmd_verify(&ctx, points),
        Command::Mom { height, beta, theta, sampling, .. } => cmd_mom(&ctx, sampling.config(height, beta, theta, ctx.seed)),
        Command::Scan {
            betas, theta, ladder, sampling, ..
        } => cmd_scan(&ctx, &betas, theta, &ladder, &sampling),
        Command::Mainterm {
            order,
            shifts,
            height,
            twist_file,
            eta,
            nodes,
            dt,
            band,
            ..
        } => cmd_mainterm(&ctx, &order, &shifts, height, twist_file.as_deref(), eta, nodes, dt, band),
        Command::Correlate { height, beta, dh, n_t, .. } => cmd_correlate(&ctx, height, beta, &dh, n_t),
    })
}

struct Context {
    zeta: ZetaEvaluator,
    seed: u64,
    workers: usize,
    out: PathBuf,
}

impl Context {
    fn manifest<'a>(&self, command: &'a str, parameters: serde_json::Value, passed: bool, summary: serde_json::Value) -> Manifest<'a> {
        Manifest {
            command,
            version: env!("CARGO_PKG_VERSION"),
            seed: self.seed,
            workers: self.workers,
            parameters,
            outputs: Vec::new(),
            passed,
            summary,
        }
    }
}

struct Check {
    name: &'static str,
    metric: f64,
    threshold: f64,
}

impl Check {
    fn passed(&self) -> bool {
        self.metric <= self.threshold
    }
}

fn cmd_verify(ctx: &Context, points: usize) -> Outcome {
    if points == 0 {
        return Err(Failure::Usage("--points must be positive".into()));
    }
    let em = ZetaEvaluator::default();
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);
    let mut fe = 0.0f64;
    for _ in 0..points {
        let t = (10f64.ln() + rng.gen::<f64>() * (1e5f64.ln() - 10f64.ln())).exp();
        let s = Complex64::new(0.5, t);
        let direct = em.zeta(s)?;
        let reflected = lambda_chi(s)? * em.zeta(Complex64::new(1.0, 0.0) - s)?;
        fe = fe.max((direct - reflected).norm() / direct.norm());
    }
    let mut cross = 0.0f64;
    for k in 0..points {
        let t = 1e3 + (1e5 - 1e3) * (k as f64 + 0.5) / points as f64;
        cross = cross.max((em.zeta_rs(t)? - em.zeta_em(Complex64::new(0.5, t))?).norm());
    }
    let primes = [2u64, 3, 5, 7, 11, 13, 101, 997];
    let mut bgap = 0.0f64;
    for _ in 0..points {
        let p = primes[rng.gen_range(0..primes.len())];
        let m = rng.gen_range(0..6u32);
        let mut z = [Complex64::new(0.0, 0.0); 4];
        for zi in &mut z {
            *zi = Complex64::new(rng.gen_range(-0.2..0.2), rng.gen_range(-3.0..3.0));
        }
        let closed = b_prime_power(z, p, m)?;
        let series = b_coeff_series(z, p, m, 200);
        bgap = bgap.max((closed - series).norm() / series.norm());
    }
    let mut mom = 0.0f64;
    for _ in 0..points.min(20) {
        let t = 10f64.powf(rng.gen_range(3.0..8.0));
        let theta = rng.gen_range(-0.9..0.5);
        let est = mom2_estimate(&MomConfig { seed: ctx.seed, ..MomConfig::new(t, 0.0, theta) }, &ctx.zeta)?;
        let want = (2.0 * t.ln().powf(theta)).powi(2);
        mom = mom.max((est.value - want).abs() / want);
    }
    let mut yinv = 0.0f64;
    for _ in 0..points {
        let t = rng.gen_range(100.0..1e5);
        let a = Complex64::new(rng.gen_range(-0.1..0.1), rng.gen_range(-5.0..5.0));
        let b = Complex64::new(rng.gen_range(-0.1..0.1), rng.gen_range(-5.0..5.0));
        yinv = yinv.max((y_factor(a, b, t) * y_factor(-b, -a, t) - 1.0).norm());
    }
    let checks = [
        Check { name: "functional_equation", metric: fe, threshold: 1e-8 },
        Check { name: "rs_vs_em", metric: cross, threshold: 1e-5 },
        Check { name: "b_closed_form", metric: bgap, threshold: 1e-9 },
        Check { name: "mom_beta_zero", metric: mom, threshold: 1e-10 },
        Check { name: "y_inverse", metric: yinv, threshold: 1e-12 },
    ];
    let rows: Vec<String> = checks
        .iter()
        .map(|c| format!("{},{},{},{}", c.name, num(c.metric), num(c.threshold), c.passed()))
        .collect();
    let passed = checks.iter().all(Check::passed);
    let mut out = OutDir::create(&ctx.out)?;
    out.write_csv("verify.csv", "check,metric,threshold,passed", &rows)?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.name).collect();
    out.finish(
        "verify.manifest.json",
        ctx.manifest("verify", json!({ "points": points }), passed, json!({ "failed": failed })),
    )?;
    for row in &rows {
        println!("{row}");
    }
    if passed {
        Ok(())
    } else {
        Err(Failure::Assertion(format!("verify: {}", failed.join(", "))))
    }
}

fn cmd_mom(ctx: &Context, cfg: MomConfig) -> Outcome {
    cfg.validate()?;
    let est = mom2_estimate(&cfg, &ctx.zeta)?;
    let mut out = OutDir::create(&ctx.out)?;
    out.write_csv("mom.csv", MomEstimate::CSV_HEADER, &[est.csv_row()])?;
    out.finish(
        "mom.manifest.json",
        ctx.manifest("mom", json!(cfg), true, json!({ "value": est.value, "stderr": est.stderr, "dominance": est.dominance })),
    )?;
    println!("{}", est.csv_row());
    Ok(())
}

fn cmd_scan(ctx: &Context, betas: &[f64], theta: f64, ladder: &[f64], sampling: &Sampling) -> Outcome {
    let template = sampling.config(ladder.first().copied().unwrap_or(0.0), 1.0, theta, ctx.seed);
    let table = transition_scan(betas, theta, ladder, &template, &ctx.zeta)?;
    let mut out = OutDir::create(&ctx.out)?;
    out.write_csv("scan.csv", ScanTable::CSV_HEADER, &table.csv_rows())?;
    let estimates: Vec<String> = table.rows.iter().flat_map(|r| r.estimates.iter().map(MomEstimate::csv_row)).collect();
    out.write_csv("scan_estimates.csv", MomEstimate::CSV_HEADER, &estimates)?;
    out.finish(
        "scan.manifest.json",
        ctx.manifest(
            "scan",
            json!({ "betas": betas, "theta": theta, "ladder": ladder, "template": template }),
            true,
            json!({ "kink_beta": table.kink_beta }),
        ),
    )?;
    for row in table.csv_rows() {
        println!("{row}");
    }
    Ok(())
}

fn parse_shift(s: &str) -> Result<Complex64, Failure> {
    let (re, im) = s.split_once(':').ok_or_else(|| Failure::Usage(format!("shift {s:?} is not re:im")))?;
    let parse = |x: &str| x.trim().parse::<f64>().map_err(|_| Failure::Usage(format!("bad number in shift {s:?}")));
    Ok(Complex64::new(parse(re)?, parse(im)?))
}

fn read_twist(path: &Path, eta: f64) -> Result<TwistSpec, Failure> {
    let text = std::fs::read_to_string(path)?;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with('n') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let bad = || Failure::Usage(format!("twist row {line:?} is not n,a_re,a_im,b_re,b_im"));
        if fields.len() != 5 {
            return Err(bad());
        }
        let n: u64 = fields[0].parse().map_err(|_| bad())?;
        let v: Vec<f64> = fields[1..].iter().map(|f| f.parse::<f64>()).collect::<Result<_, _>>().map_err(|_| bad())?;
        a.push((n, Complex64::new(v[0], v[1])));
        b.push((n, Complex64::new(v[2], v[3])));
    }
    Ok(TwistSpec::new(DirichletPoly::from_terms(a)?, DirichletPoly::from_terms(b)?, eta))
}

#[allow(clippy::too_many_arguments)]
fn cmd_mainterm(
    ctx: &Context,
    order: &str,
    shifts: &[String],
    height: f64,
    twist_file: Option<&Path>,
    eta: f64,
    nodes: Option<usize>,
    dt: f64,
    band: Option<Vec<f64>>,
) -> Outcome {
    let shifts = shifts.iter().map(|s| parse_shift(s)).collect::<Result<Vec<_>, _>>()?;
    let order: usize = order.parse().map_err(|_| Failure::Usage("order".into()))?;
    if shifts.len() != order {
        return Err(Failure::Usage(format!("order {order} needs {order} shifts, got {}", shifts.len())));
    }
    let twist = match twist_file {
        Some(p) => read_twist(p, eta)?,
        None => TwistSpec::trivial(),
    };
    twist.validate(height, order)?;
    let (lo, hi) = match band.as_deref() {
        Some([lo, hi]) => (*lo, *hi),
        Some(_) => return Err(Failure::Usage("--band takes lo,hi".into())),
        None if order == 2 => (0.85, 1.15),
        None => (0.5, 2.0),
    };
    let w = SmoothWeight::standard();
    let main = if order == 2 {
        let spec = nodes.map_or_else(ContourSpec::second_order, |m| ContourSpec::second_order().with_nodes(m));
        second_main_term(shifts[0], shifts[1], &twist, &w, height, &spec, &ctx.zeta)?
    } else {
        let spec = nodes.map_or_else(ContourSpec::fourth_order, |m| ContourSpec::fourth_order().with_nodes(m));
        fourth_main_term([shifts[0], shifts[1], shifts[2], shifts[3]], &twist, &w, height, &spec, &ctx.zeta)?
    };
    let oracle = lhs_oracle(height, &shifts, &twist, &w, &ctx.zeta, dt)?;
    let record = MainTermRecord::new(height, &shifts, &main, &oracle);
    let ratio = record.ratio;
    let passed = (ratio - 1.0).norm() <= (1.0 - lo).max(hi - 1.0) && ratio.re >= lo && ratio.re <= hi;
    let mut out = OutDir::create(&ctx.out)?;
    let row = format!(
        "{},{},{},{},{},{},{},{},{}",
        order,
        num(height),
        num(main.value.re),
        num(main.value.im),
        num(oracle.value.re),
        num(oracle.value.im),
        num(ratio.re),
        num(ratio.im),
        main.nodes_per_circle
    );
    out.write_csv("mainterm.csv", "order,T,main_re,main_im,oracle_re,oracle_im,ratio_re,ratio_im,M", std::slice::from_ref(&row))?;
    out.write_json("mainterm.json", &record)?;
    out.finish(
        "mainterm.manifest.json",
        ctx.manifest(
            "mainterm",
            json!({ "order": order, "T": height, "shifts": shifts, "eta": eta, "dt": dt, "band": [lo, hi] }),
            passed,
            json!({ "rel_change_on_doubling": main.rel_change, "oracle_step_error": oracle.rel_step_error }),
        ),
    )?;
    println!("{row}");
    if passed {
        Ok(())
    } else {
        Err(Failure::Assertion(format!("ratio {ratio} outside [{lo}, {hi}]")))
    }
}

fn cmd_correlate(ctx: &Context, height: f64, beta: f64, dh: &[f64], n_t: usize) -> Outcome {
    let mut rows = Vec::with_capacity(dh.len());
    for &d in dh {
        let measured = shifted_pair_moment(height, beta, 0.0, d, n_t, ctx.seed, &ctx.zeta)?;
        let predicted = correlation_prediction(height, beta, d, &ctx.zeta)?;
        rows.push(format!(
            "{},{},{},{},{},{},{}",
            num(height),
            num(beta),
            num(d),
            num(measured.value),
            num(measured.stderr),
            num(predicted),
            num(measured.value / predicted)
        ));
    }
    let mut out = OutDir::create(&ctx.out)?;
    out.write_csv("correlate.csv", "T,beta,dh,measured,stderr,predicted,ratio", &rows)?;
    out.finish(
        "correlate.manifest.json",
        ctx.manifest("correlate", json!({ "T": height, "beta": beta, "dh": dh, "n_t": n_t }), true, json!({})),
    )?;
    for row in &rows {
        println!("{row}");
    }
    Ok(())
}
