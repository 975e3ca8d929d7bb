//! Experiment runner: configuration, bundled fixtures, and reproducible
//! CSV/JSON emission for the heislab library.

mod config;
mod report;

use clap::{Parser, Subcommand};
use config::{Config, ConfigError};
use heislab::cohomology::{self, BumpPair, Verdict};
use heislab::enumerate::Quad;
use heislab::ergodic::{self, ZoomPartition};
use heislab::heis::{
    flow, mul, quotient_distance, reduce, stable_generator, Automorphism, HeisPoint, LatticeSpec,
};
use heislab::observable::{GaussAtom, Observable};
use heislab::rng::CounterRng;
use heislab::spectral::{self, TwistedBasis};
use num_complex::Complex64 as C64;
use report::{write_csv, write_envelope, Check, ResultEnvelope};
use serde_json::{json, Value};
use std::path::PathBuf;
use std::time::Instant;

#[derive(Parser)]
#[command(name = "heislab", version, about = "Heisenberg nilflow renormalization laboratory")]
struct Cli {
    /// key=value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// output directory for CSV/JSON artifacts
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// random seed (overrides the config file)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// worker threads (0 = all cores)
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// override a config key (repeatable): --set key=value
    #[arg(long = "set", global = true)]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the core invariant suites
    Selftest,
    /// Exact and/or numeric resonance spectra
    Spectrum,
    /// Deviation of ergodic averages and power-law fit
    Deviation,
    /// Solve the cohomological equation on a site grid
    Cohomology,
    /// Sample the renormalization identity
    RenormVerify,
    /// Anisotropic norms and dual pairing ratios
    Norm,
}

fn main() {
    let cli = Cli::parse();
    std::process::exit(run(cli));
}

fn run(cli: Cli) -> i32 {
    let mut cfg = match Config::load(cli.config.as_deref()) {
        Ok(c) => c,
        Err(e) => return emit_config_error(&cli.out, &e),
    };
    if let Some(seed) = cli.seed {
        cfg.set("seed", seed.to_string());
    }
    if let Some(jobs) = cli.jobs {
        cfg.set("jobs", jobs.to_string());
    }
    for kv in &cli.set {
        match kv.split_once('=') {
            Some((k, v)) => cfg.set(k.trim(), v.trim().to_string()),
            None => {
                return emit_config_error(
                    &cli.out,
                    &ConfigError {
                        field: "--set".into(),
                        message: format!("expected key=value, got `{kv}`"),
                    },
                )
            }
        }
    }
    match cfg.u64("jobs", 0) {
        Ok(0) => {}
        Ok(n) => {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n as usize)
                .build_global();
        }
        Err(e) => return emit_config_error(&cli.out, &e),
    }
    let name = match cli.command {
        Command::Selftest => "selftest",
        Command::Spectrum => "spectrum",
        Command::Deviation => "deviation",
        Command::Cohomology => "cohomology",
        Command::RenormVerify => "renorm-verify",
        Command::Norm => "norm",
    };
    let started = Instant::now();
    let result = match cli.command {
        Command::Selftest => cmd_selftest(&cfg, &cli.out),
        Command::Spectrum => cmd_spectrum(&cfg, &cli.out),
        Command::Deviation => cmd_deviation(&cfg, &cli.out),
        Command::Cohomology => cmd_cohomology(&cfg, &cli.out),
        Command::RenormVerify => cmd_renorm_verify(&cfg, &cli.out),
        Command::Norm => cmd_norm(&cfg, &cli.out),
    };
    match result {
        Ok((payload, checks)) => {
            let mut env = ResultEnvelope::new(name, &cfg, payload, checks);
            env.wall_clock_s = started.elapsed().as_secs_f64();
            let pass = env.all_pass();
            match write_envelope(&cli.out, &format!("{name}.json"), &env) {
                Ok(path) => {
                    for c in &env.checks {
                        println!(
                            "{}: {} ({})",
                            c.name,
                            if c.pass { "pass" } else { "FAIL" },
                            c.detail
                        );
                    }
                    println!("envelope: {}", path.display());
                    if pass {
                        0
                    } else {
                        1
                    }
                }
                Err(e) => {
                    eprintln!("cannot write envelope: {e}");
                    2
                }
            }
        }
        Err(CommandError::Config(e)) => emit_config_error(&cli.out, &e),
        Err(CommandError::Other(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn emit_config_error(out: &std::path::Path, e: &ConfigError) -> i32 {
    let doc = json!({"error": {"field": e.field, "message": e.message}});
    eprintln!("{doc}");
    let _ = report::write_atomic(out, "error.json", format!("{doc}\n").as_bytes());
    2
}

enum CommandError {
    Config(ConfigError),
    Other(anyhow::Error),
}

impl From<ConfigError> for CommandError {
    fn from(e: ConfigError) -> Self {
        CommandError::Config(e)
    }
}

impl From<anyhow::Error> for CommandError {
    fn from(e: anyhow::Error) -> Self {
        CommandError::Other(e)
    }
}

type CmdResult = Result<(Value, Vec<Check>), CommandError>;

fn check(name: &str, pass: bool, detail: String) -> Check {
    Check {
        name: name.to_string(),
        pass,
        detail,
    }
}

// ---------------------------------------------------------------------------
// shared setup
// ---------------------------------------------------------------------------

fn load_aut(cfg: &Config) -> Result<(Automorphism, LatticeSpec), CommandError> {
    let a = cfg.i64("a", 2)?;
    let b = cfg.i64("b", 1)?;
    let c = cfg.i64("c", 3)?;
    let d = cfg.i64("d", 2)?;
    let e = cfg.u64("e", 1)? as u32;
    let lattice = LatticeSpec::new(e).map_err(|err| ConfigError {
        field: "e".into(),
        message: err.to_string(),
    })?;
    let aut = stable_generator(a, b, c, d).map_err(|err| ConfigError {
        field: "a,b,c,d".into(),
        message: err.to_string(),
    })?;
    if !heislab::heis::preserves_lattice(&aut, lattice) {
        return Err(ConfigError {
            field: "a,b,c,d,e".into(),
            message: "automorphism does not preserve the lattice".into(),
        }
        .into());
    }
    Ok((aut, lattice))
}

/// Bundled observable fixtures, or a JSON file written by `Observable`'s
/// serde representation.
fn load_observable(
    cfg: &Config,
    key: &str,
    default: &str,
    aut: &Automorphism,
    lattice: LatticeSpec,
) -> Result<Observable, CommandError> {
    let spec = cfg.str(key, default);
    match spec.as_str() {
        "bundled:atom-n1" => Ok(bundled_atom(lattice, 1)),
        "bundled:coboundary" => Ok(bundled_atom(lattice, 1).w_derivative(aut)),
        "bundled:toral" => {
            let mut h = Observable::zero(lattice);
            h.torus.coeffs.push(((1, 0), C64::new(1.0, 0.0)));
            h.torus.coeffs.push(((0, 1), C64::new(0.0, 0.5)));
            Ok(h)
        }
        "bundled:constant" => Ok(Observable::constant(lattice, C64::new(1.0, 0.0))),
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
                field: key.into(),
                message: format!("cannot read {path}: {e}"),
            })?;
            serde_json::from_str(&text).map_err(|e| {
                ConfigError {
                    field: key.into(),
                    message: format!("bad observable JSON: {e}"),
                }
                .into()
            })
        }
    }
}

fn bundled_atom(lattice: LatticeSpec, n: i32) -> Observable {
    Observable::atom(
        lattice,
        n,
        GaussAtom::plain(
            C64::new(0.8, 0.4),
            [0.35, -0.2],
            Quad {
                a: 1.3,
                b: -0.3,
                c: 1.0,
            },
        ),
    )
}

fn random_points(rng: &mut CounterRng, n: usize) -> Vec<HeisPoint> {
    (0..n)
        .map(|_| HeisPoint::new(rng.next_f64(), rng.next_f64(), rng.next_f64()))
        .collect()
}

// ---------------------------------------------------------------------------
// selftest
// ---------------------------------------------------------------------------

fn cmd_selftest(cfg: &Config, _out: &std::path::Path) -> CmdResult {
    let (aut, lattice) = load_aut(cfg)?;
    let samples = cfg.u64("samples", 10_000)? as usize;
    let tol = cfg.f64("tol", 1e-12)?;
    if tol <= 0.0 {
        return Err(ConfigError {
            field: "tol".into(),
            message: "tolerance must be positive".into(),
        }
        .into());
    }
    if samples == 0 {
        return Err(ConfigError {
            field: "samples".into(),
            message: "must be positive".into(),
        }
        .into());
    }
    let seed = cfg.u64("seed", 1)?;
    let mut rng = CounterRng::new(seed);
    let mut pt = |r: &mut CounterRng| {
        HeisPoint::new(r.uniform(-4.0, 4.0), r.uniform(-4.0, 4.0), r.uniform(-4.0, 4.0))
    };

    let mut d_assoc = 0.0f64;
    let mut d_inv = 0.0f64;
    let mut d_reduce = 0.0f64;
    let mut d_flow = 0.0f64;
    for _ in 0..samples {
        let (g, h, k) = (pt(&mut rng), pt(&mut rng), pt(&mut rng));
        let lhs = mul(mul(g, h), k);
        let rhs = mul(g, mul(h, k));
        d_assoc = d_assoc
            .max((lhs.x - rhs.x).abs())
            .max((lhs.y - rhs.y).abs())
            .max((lhs.z - rhs.z).abs());
        let e = mul(g, heislab::heis::inverse(g));
        d_inv = d_inv.max(e.x.abs()).max(e.y.abs()).max(e.z.abs());
        let r1 = reduce(g, lattice).rep;
        let r2 = reduce(r1, lattice).rep;
        d_reduce = d_reduce
            .max((r1.x - r2.x).abs())
            .max((r1.y - r2.y).abs())
            .max((r1.z - r2.z).abs());
        let (s, t) = (rng.uniform(-3.0, 3.0), rng.uniform(-3.0, 3.0));
        let a2 = flow(flow(g, s, &aut), t, &aut);
        let b2 = flow(g, s + t, &aut);
        d_flow = d_flow
            .max((a2.x - b2.x).abs())
            .max((a2.y - b2.y).abs())
            .max((a2.z - b2.z).abs());
    }

    let mut d_renorm = 0.0f64;
    for _ in 0..1000 {
        let g = pt(&mut rng);
        let t = rng.uniform(-10.0, 10.0);
        let lhs = heislab::heis::apply_aut(&aut, flow(g, aut.lambda * t, &aut));
        let rhs = flow(heislab::heis::apply_aut(&aut, g), t, &aut);
        d_renorm = d_renorm.max(quotient_distance(lhs, rhs, lattice));
    }

    let mut d_pou = 0.0f64;
    for t_total in [64.0, 1000.0] {
        let p = ZoomPartition::new(t_total);
        for i in 0..2000 {
            let t = t_total * (i as f64 + 0.5) / 2000.0;
            let s: f64 = (-p.n..=p.n).map(|k| p.phi(k, t)).sum();
            d_pou = d_pou.max((s - 1.0).abs());
        }
    }

    let payload = json!({
        "defects": {
            "associativity": d_assoc,
            "inverse": d_inv,
            "reduce_idempotent": d_reduce,
            "flow_semigroup": d_flow,
            "renormalization": d_renorm,
            "partition_of_unity": d_pou,
        },
        "samples": samples,
    });
    let checks = vec![
        check("associativity", d_assoc < tol, format!("max defect {d_assoc:.3e}")),
        check("inverse", d_inv < tol, format!("max defect {d_inv:.3e}")),
        check("reduce_idempotent", d_reduce < tol, format!("max defect {d_reduce:.3e}")),
        check("flow_semigroup", d_flow < tol, format!("max defect {d_flow:.3e}")),
        check("renormalization", d_renorm < 1e-9, format!("max distance {d_renorm:.3e}")),
        check("partition_of_unity", d_pou < 1e-12, format!("max defect {d_pou:.3e}")),
    ];
    Ok((payload, checks))
}

// ---------------------------------------------------------------------------
// spectrum
// ---------------------------------------------------------------------------

fn resonance_rows(set: &heislab::spectral::ResonanceSet, n: i64, e: u32) -> Vec<String> {
    set.items
        .iter()
        .map(|r| {
            format!(
                "{n},{e},{:?},{},{:.17e},{:.17e},{:.17e},{:.17e},{}",
                set.source,
                r.band.map_or(-1, |k| k as i64),
                r.re,
                r.im,
                r.modulus,
                r.phase,
                r.multiplicity
            )
        })
        .collect()
}

fn cmd_spectrum(cfg: &Config, out: &std::path::Path) -> CmdResult {
    let (aut, lattice) = load_aut(cfg)?;
    let method = cfg.str("method", "both");
    if !["exact", "numeric", "both"].contains(&method.as_str()) {
        return Err(ConfigError {
            field: "method".into(),
            message: format!("unknown method `{method}`"),
        }
        .into());
    }
    let ns = cfg.int_list("n", "1")?;
    if ns.iter().any(|&n| n == 0) {
        return Err(ConfigError {
            field: "n".into(),
            message: "N = 0 has no fiber spectrum here; constants carry the single eigenvalue \
                      lambda (see the transfer_constant oracle)"
                .into(),
        }
        .into());
    }
    let kmax = cfg.i64("kmax", 3)? as i32;
    let cutoff = cfg.i64("cutoff", 12)? as i32;
    let r = cfg.f64("r", 8.0)?;
    let band_tol = cfg.f64("band_tol", 0.15)?;
    let cols = "N,E,source,band,re,im,modulus,phase,multiplicity";
    let mut checks = Vec::new();
    let mut tables = Vec::new();
    for &n in &ns {
        let n = n as i32;
        let d = lattice.e as usize * n.unsigned_abs() as usize;
        let mut entry = json!({"N": n});
        if method != "numeric" {
            let ex = spectral::resonances_exact(&aut, n, lattice.e, kmax)
                .map_err(|e| anyhow::anyhow!(e))?;
            let counts_ok = (0..=kmax).all(|k| ex.band(k).len() == d);
            checks.push(check(
                &format!("exact_band_counts_N{n}"),
                counts_ok,
                format!("{d} per band"),
            ));
            write_csv(
                out,
                &format!("spectrum_exact_N{n}.csv"),
                cfg,
                cols,
                &resonance_rows(&ex, n as i64, lattice.e),
            )
            .map_err(CommandError::Other)?;
            entry["exact_band0_modulus"] = json!(ex.band(0)[0].modulus);
        }
        if method != "exact" {
            let basis = TwistedBasis::new(d, cutoff);
            let tm = spectral::transfer_matrix(&aut, n, lattice.e, basis, r)
                .map_err(|e| anyhow::anyhow!(e))?;
            let nu = spectral::resonances_numeric(&tm, band_tol).map_err(|e| anyhow::anyhow!(e))?;
            write_csv(
                out,
                &format!("spectrum_numeric_N{n}.csv"),
                cfg,
                cols,
                &resonance_rows(&nu, n as i64, lattice.e),
            )
            .map_err(CommandError::Other)?;
            entry["numeric_band0_count"] = json!(nu.band(0).len());
            if method == "both" {
                let ex = spectral::resonances_exact(&aut, n, lattice.e, 0)
                    .map_err(|e| anyhow::anyhow!(e))?;
                let (dm, dp) = band0_deltas(&ex, &nu);
                entry["band0_modulus_delta"] = json!(dm);
                entry["band0_phase_delta"] = json!(dp);
                checks.push(check(
                    &format!("band0_match_N{n}"),
                    nu.band(0).len() == d && dm < 0.05 && dp < 0.05,
                    format!("count {} modulus delta {dm:.3e} phase delta {dp:.3e}", nu.band(0).len()),
                ));
            }
        }
        tables.push(entry);
    }
    Ok((json!({"spectra": tables}), checks))
}

/// Worst relative-modulus and phase distances from each exact band-0 value
/// to its nearest numeric band-0 partner.
fn band0_deltas(
    exact: &heislab::spectral::ResonanceSet,
    numeric: &heislab::spectral::ResonanceSet,
) -> (f64, f64) {
    let nb = numeric.band(0);
    let mut dm = 0.0f64;
    let mut dp = 0.0f64;
    for e in exact.band(0) {
        let mut best = (f64::INFINITY, 0.0, 0.0);
        for n in &nb {
            let d = (n.value() - e.value()).norm();
            if d < best.0 {
                let mut ph = (n.phase - e.phase).rem_euclid(2.0 * std::f64::consts::PI);
                if ph > std::f64::consts::PI {
                    ph -= 2.0 * std::f64::consts::PI;
                }
                best = (d, (n.modulus / e.modulus - 1.0).abs(), ph.abs());
            }
        }
        dm = dm.max(best.1);
        dp = dp.max(best.2);
    }
    if nb.is_empty() {
        (f64::INFINITY, f64::INFINITY)
    } else {
        (dm, dp)
    }
}

// ---------------------------------------------------------------------------
// deviation
// ---------------------------------------------------------------------------

fn cmd_deviation(cfg: &Config, out: &std::path::Path) -> CmdResult {
    let (aut, lattice) = load_aut(cfg)?;
    let h = load_observable(cfg, "observable", "bundled:atom-n1", &aut, lattice)?;
    let tmax = cfg.f64("tmax", 1e4)?;
    let points = cfg.u64("points", 25)? as usize;
    let base_points = cfg.u64("base_points", 12)? as usize;
    let subtract_mean = cfg.str("subtract_mean", "true") == "true";
    let slope_lo = cfg.f64("slope_lo", 0.40)?;
    let slope_hi = cfg.f64("slope_hi", 0.60)?;
    let seed = cfg.u64("seed", 1)?;
    if tmax <= 100.0 {
        return Err(ConfigError {
            field: "tmax".into(),
            message: "need tmax > 100".into(),
        }
        .into());
    }
    let mut rng = CounterRng::new(seed);
    let xs = random_points(&mut rng, base_points.max(1));
    let fit = ergodic::deviation_fit(&h, &aut, &xs, tmax, points.max(8), subtract_mean);
    let rows: Vec<String> = fit
        .points
        .iter()
        .map(|p| format!("{:.17e},{:.17e},{},{}", p.t, p.h_rms, p.depth, p.invocations))
        .collect();
    write_csv(out, "deviation.csv", cfg, "t,h_rms,depth,invocations", &rows)
        .map_err(CommandError::Other)?;
    let payload = json!({
        "slope": fit.slope,
        "intercept": fit.intercept,
        "r2": fit.r2,
        "fit_range": [fit.t_min, fit.t_max],
        "points": fit.points.len(),
    });
    let checks = vec![
        check(
            "slope_window",
            fit.slope >= slope_lo && fit.slope <= slope_hi,
            format!("slope {:.4} in [{slope_lo}, {slope_hi}]", fit.slope),
        ),
        check("fit_quality", fit.r2 >= 0.9, format!("r2 {:.4}", fit.r2)),
    ];
    Ok((payload, checks))
}

// ---------------------------------------------------------------------------
// cohomology
// ---------------------------------------------------------------------------

fn cmd_cohomology(cfg: &Config, out: &std::path::Path) -> CmdResult {
    let (aut, lattice) = load_aut(cfg)?;
    let h = load_observable(cfg, "observable", "bundled:coboundary", &aut, lattice)?;
    let side = cfg.u64("grid", 6)? as usize;
    let kmax = cfg.i64("kmax", 40)? as i32;
    let tol = cfg.f64("tol", 1e-4)?;
    if tol <= 0.0 {
        return Err(ConfigError {
            field: "tol".into(),
            message: "tolerance must be positive".into(),
        }
        .into());
    }
    let expect = cfg.str("expect", "converged");
    let residual_tol = cfg.f64("residual_tol", 1e-5)?;
    let seed = cfg.u64("seed", 1)?;
    let bp = BumpPair::new(aut.lambda);
    let mut sites = Vec::with_capacity(side * side * side);
    for i in 0..side {
        for j in 0..side {
            for k in 0..side {
                sites.push(HeisPoint::new(
                    (i as f64 + 0.5) / side as f64,
                    (j as f64 + 0.5) / side as f64,
                    (k as f64 + 0.5) / side as f64,
                ));
            }
        }
    }
    let sol = cohomology::solve(&h, &aut, &sites, kmax, tol, &bp).map_err(|e| ConfigError {
        field: "observable".into(),
        message: e.to_string(),
    })?;
    let rows: Vec<String> = sites
        .iter()
        .zip(&sol.g_values)
        .map(|(s, g)| format!("{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}", s.x, s.y, s.z, g.0, g.1))
        .collect();
    write_csv(out, "cohomology_solution.csv", cfg, "x,y,z,g_re,g_im", &rows)
        .map_err(CommandError::Other)?;
    let verdict = format!("{:?}", sol.verdict).to_lowercase();
    let mut payload = json!({
        "verdict": verdict,
        "kmax_used": sol.kmax_used,
        "geometric_ratio": sol.geometric_ratio,
        "term_history": sol.term_history,
    });
    let mut checks = vec![check(
        "verdict",
        expect == "any" || verdict == expect,
        format!("{verdict} (expected {expect})"),
    )];
    if sol.verdict == Verdict::Converged {
        let mut rng = CounterRng::new(seed ^ 0x51ab);
        let mut samples = Vec::new();
        for &t in &[0.1, 1.0, 10.0] {
            for _ in 0..5 {
                samples.push((
                    HeisPoint::new(rng.next_f64(), rng.next_f64(), rng.next_f64()),
                    t,
                ));
            }
        }
        let residual = cohomology::verify_coboundary(&h, &aut, sol.kmax_used, &samples, &bp);
        payload["residual"] = json!(residual);
        checks.push(check(
            "equation_residual",
            residual <= residual_tol,
            format!("{residual:.3e} <= {residual_tol:.1e}"),
        ));
    }
    Ok((payload, checks))
}

// ---------------------------------------------------------------------------
// renorm-verify
// ---------------------------------------------------------------------------

fn cmd_renorm_verify(cfg: &Config, out: &std::path::Path) -> CmdResult {
    let (aut, lattice) = load_aut(cfg)?;
    let samples = cfg.u64("samples", 1000)? as usize;
    if samples == 0 {
        return Err(ConfigError {
            field: "samples".into(),
            message: "must be positive".into(),
        }
        .into());
    }
    let seed = cfg.u64("seed", 1)?;
    let mut rng = CounterRng::new(seed);
    let mut worst = 0.0f64;
    let mut rows = Vec::with_capacity(samples);
    for _ in 0..samples {
        let g = HeisPoint::new(
            rng.uniform(-2.0, 2.0),
            rng.uniform(-2.0, 2.0),
            rng.uniform(-2.0, 2.0),
        );
        let t = rng.uniform(-10.0, 10.0);
        let lhs = heislab::heis::apply_aut(&aut, flow(g, aut.lambda * t, &aut));
        let rhs = flow(heislab::heis::apply_aut(&aut, g), t, &aut);
        let d = quotient_distance(lhs, rhs, lattice);
        worst = worst.max(d);
        rows.push(format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.3e}",
            g.x, g.y, g.z, t, d
        ));
    }
    write_csv(out, "renorm_verify.csv", cfg, "x,y,z,t,distance", &rows)
        .map_err(CommandError::Other)?;
    let checks = vec![check(
        "renormalization_identity",
        worst < 1e-9,
        format!("max quotient distance {worst:.3e} over {samples} samples"),
    )];
    Ok((json!({"max_distance": worst, "samples": samples}), checks))
}

// ---------------------------------------------------------------------------
// norm
// ---------------------------------------------------------------------------

fn cmd_norm(cfg: &Config, out: &std::path::Path) -> CmdResult {
    let (aut, lattice) = load_aut(cfg)?;
    let nmax = cfg.i64("nmax", 8)? as i32;
    let r = cfg.f64("r", 8.0)?;
    if nmax < 1 {
        return Err(ConfigError {
            field: "nmax".into(),
            message: "need nmax >= 1".into(),
        }
        .into());
    }
    let grid = spectral::NormGrid::default();
    let phi = |s: f64| heislab::ergodic::eta(4.0 * s) * heislab::ergodic::eta(4.0 * (1.0 - s));
    let mut rows = Vec::new();
    let mut norms = Vec::new();
    let mut ratios = Vec::new();
    for n in 1..=nmax {
        // fiber modes of one fixed smooth z-bump: Gaussian coefficients
        let coeff = C64::new((-0.35 * (n * n) as f64).exp(), 0.0);
        let h = Observable::atom(
            lattice,
            n,
            GaussAtom::plain(coeff, [0.5, 0.5], Quad { a: 2.0, b: 0.0, c: 2.0 }),
        );
        let norm =
            spectral::anisotropic_norm(&h, &aut, n, r, &grid).map_err(|e| anyhow::anyhow!(e))?;
        let ratio = spectral::dual_pairing_bound(&h, &aut, n, r, [0.15, 0.45], &phi, &grid)
            .map_err(|e| anyhow::anyhow!(e))?;
        rows.push(format!("{n},{norm:.17e},{ratio:.17e}"));
        norms.push(norm);
        ratios.push(ratio);
    }
    write_csv(out, "norms.csv", cfg, "N,anisotropic_norm,pairing_ratio", &rows)
        .map_err(CommandError::Other)?;
    let finite = norms.iter().all(|v| v.is_finite() && *v > 0.0);
    let decreasing = norms.windows(2).all(|w| w[1] < w[0]);
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    let payload = json!({"norms": norms, "pairing_ratios": ratios, "max_ratio": max_ratio});
    let checks = vec![
        check("norms_finite", finite, format!("{norms:?}")),
        check("norms_decreasing", decreasing, format!("{norms:?}")),
        check(
            "pairing_bounded",
            max_ratio.is_finite() && max_ratio < 10.0 * ratios[0].max(1e-300),
            format!("max {max_ratio:.3e} vs N=1 {:.3e}", ratios[0]),
        ),
    ];
    Ok((payload, checks))
}
