//! Command-line front end: argument and config-file parsing, dispatch to
//! the numerical modules, CSV/JSON emission.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::asympt::{
    cnw_check, correlation_fn, decay_rate, default_window, default_xi_nmax, grad_ratio, sharp_ratio, write_xi_csv,
    xi_scan,
};
use crate::error::{Error, Result};
use crate::laws::{
    free_energy, geometric_law, make_basic_law, make_log_corrected_law, make_shifted_law, make_table_law, tilt,
    two_point_law, untilted, Family, InterArrivalLaw, LawJson, TiltedLaw,
};
use crate::pinning::summarize;
use crate::precision::{to_decimal, PrecisionSpec};
use crate::renewal::{delta_series, mass_renewal, mc_sample, RenewalSeries};
use crate::spectral::{
    count_zeros, critical_tilt, default_annulus, find_roots_in, half_unit_shift_b0, pole_real_form, OUTER_MARGIN,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Law,
    Tilt,
    U,
    Delta,
    Rate,
    Ratio,
    Roots,
    B0,
    XiScan,
    Pinning,
    Mc,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Law => "law",
            Command::Tilt => "tilt",
            Command::U => "u",
            Command::Delta => "delta",
            Command::Rate => "rate",
            Command::Ratio => "ratio",
            Command::Roots => "roots",
            Command::B0 => "b0",
            Command::XiScan => "xi-scan",
            Command::Pinning => "pinning",
            Command::Mc => "mc",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Basic,
    Shifted,
    Log,
    Table,
    TwoPoint,
    Geometric,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OutFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Parser, Debug)]
#[command(
    name = "pinrenewal",
    version,
    about = "Tilted renewal sequences, their spectra, and the pinning model",
    allow_negative_numbers = true,
    args_override_self = true
)]
struct Cli {
    /// Computation to run.
    #[arg(value_enum)]
    command: Command,
    /// key=value file; command-line flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    family: Option<FamilyName>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Shift of the shifted family.
    #[arg(long)]
    m: Option<u32>,
    /// Log power of the log-corrected family.
    #[arg(long)]
    j: Option<u32>,
    /// Parameter of the two-point and geometric laws.
    #[arg(long)]
    p: Option<f64>,
    /// Comma-separated probabilities K(1), K(2), ...
    #[arg(long)]
    table: Option<String>,
    #[arg(long = "tail-ratio")]
    tail_ratio: Option<f64>,
    /// Path to a law descriptor JSON file.
    #[arg(long)]
    law: Option<PathBuf>,
    #[arg(long)]
    b: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    nmax: Option<usize>,
    /// Working precision in bits, or "auto".
    #[arg(long)]
    precision: Option<PrecisionSpec>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    out: Option<OutFormat>,
    #[arg(long = "out-path")]
    out_path: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    /// Comma-separated tilts for xi-scan.
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    paths: Option<u64>,
    #[arg(long)]
    horizon: Option<usize>,
    /// Comma-separated indices for ratio.
    #[arg(long)]
    n: Option<String>,
    /// Fit window "lo,hi" for rate.
    #[arg(long)]
    window: Option<String>,
    /// Volume N for pinning.
    #[arg(long)]
    volume: Option<usize>,
    /// Step of the β-derivative for pinning.
    #[arg(long)]
    h: Option<f64>,
    #[arg(long = "b-lo")]
    b_lo: Option<f64>,
    #[arg(long = "b-hi")]
    b_hi: Option<f64>,
    #[arg(long = "r-out")]
    r_out: Option<f64>,
}

/// A validated invocation.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub law: InterArrivalLaw,
    pub b: Option<f64>,
    pub beta: Option<f64>,
    pub n_max: usize,
    pub precision: PrecisionSpec,
    pub seed: u64,
    pub out_format: OutFormat,
    pub out_path: Option<PathBuf>,
    pub tol: f64,
    pub grid: Vec<f64>,
    pub paths: u64,
    pub horizon: usize,
    pub indices: Vec<usize>,
    pub window: Option<(usize, usize)>,
    pub volume: usize,
    pub h: f64,
    pub b_lo: f64,
    pub b_hi: f64,
    pub r_out: Option<f64>,
    /// Effective settings, echoed as `params`.
    pub params: BTreeMap<String, String>,
}

/// Either a run or a help/version text to print.
#[derive(Debug, Clone)]
pub enum Invocation {
    Run(Box<RunConfig>),
    Info(String),
}

/// Parses `argv` (without the program name); help and version requests are
/// usage errors here.
pub fn parse_args<I, S>(argv: I) -> Result<RunConfig>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    match parse_invocation(argv)? {
        Invocation::Run(cfg) => Ok(*cfg),
        Invocation::Info(text) => Err(Error::Usage(text)),
    }
}

pub fn parse_invocation<I, S>(argv: I) -> Result<Invocation>
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let user: Vec<String> = argv.into_iter().map(Into::into).collect();
    let mut tokens = vec!["pinrenewal".to_string()];
    if let Some(path) = find_config(&user)? {
        tokens.extend(config_tokens(&std::fs::read_to_string(&path).map_err(|e| {
            Error::Usage(format!("--config: cannot read {}: {e}", path.display()))
        })?)?);
    }
    tokens.extend(user);
    let cli = match Cli::try_parse_from(&tokens) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => Ok(Invocation::Info(e.to_string())),
                _ => Err(Error::Usage(e.to_string().trim_end().to_string())),
            };
        }
    };
    Ok(Invocation::Run(Box::new(validate(cli)?)))
}

fn find_config(argv: &[String]) -> Result<Option<PathBuf>> {
    let mut found = None;
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            let p = it.next().ok_or_else(|| Error::Usage("--config needs a file path".into()))?;
            found = Some(PathBuf::from(p));
        } else if let Some(p) = a.strip_prefix("--config=") {
            found = Some(PathBuf::from(p));
        }
    }
    Ok(found)
}

/// Turns `key = value` lines into `--key=value` tokens. `#` starts a comment.
pub fn config_tokens(text: &str) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Usage(format!("config line {}: expected key=value, got {line:?}", i + 1)))?;
        let key = key.trim();
        if key.is_empty() || key.starts_with('-') || key.contains(char::is_whitespace) {
            return Err(Error::Usage(format!("config line {}: bad key {key:?}", i + 1)));
        }
        if key == "config" || key == "command" {
            return Err(Error::Usage(format!("config line {}: --{key} cannot be set from a config file", i + 1)));
        }
        out.push(format!("--{key}={}", value.trim()));
    }
    Ok(out)
}

fn usage<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Usage(msg.into()))
}

fn parse_list<T: std::str::FromStr>(flag: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<T>().map_err(|_| Error::Usage(format!("{flag}: cannot parse {t:?}"))))
        .collect()
}

fn positive(flag: &str, x: f64) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        usage(format!("{flag} must be > 0 (got {x})"))
    }
}

fn build_law(cli: &Cli) -> Result<InterArrivalLaw> {
    let wrap = |flag: &str, r: Result<InterArrivalLaw>| r.map_err(|e| Error::Usage(format!("{flag}: {e}")));
    if let Some(path) = &cli.law {
        if cli.family.is_some() {
            return usage("--law and --family are mutually exclusive");
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::Usage(format!("--law: {}: {e}", path.display())))?;
        return wrap("--law", InterArrivalLaw::from_json(&text));
    }
    let Some(family) = cli.family else {
        return usage("missing --family (or --law)");
    };
    let need_alpha = || cli.alpha.ok_or_else(|| Error::Usage(format!("--family {family:?} needs --alpha").to_lowercase()));
    let need_p = || cli.p.ok_or_else(|| Error::Usage("--p is required for this family".into()));
    match family {
        FamilyName::Basic => wrap("--alpha", make_basic_law(need_alpha()?)),
        FamilyName::Shifted => wrap("--alpha", make_shifted_law(need_alpha()?, cli.m.unwrap_or(1))),
        FamilyName::Log => wrap("--alpha", make_log_corrected_law(need_alpha()?, cli.j.unwrap_or(1))),
        FamilyName::Table => {
            let Some(t) = &cli.table else {
                return usage("--family table needs --table");
            };
            wrap("--table", make_table_law(parse_list("--table", t)?, cli.tail_ratio))
        }
        FamilyName::TwoPoint => wrap("--p", two_point_law(need_p()?)),
        FamilyName::Geometric => wrap("--p", geometric_law(need_p()?)),
    }
}

fn validate(cli: Cli) -> Result<RunConfig> {
    let law = build_law(&cli)?;
    let command = cli.command;
    let b = match cli.b {
        Some(b) => Some(positive("--b", b)?),
        None if matches!(command, Command::Tilt | Command::Ratio) => {
            return usage(format!("{} needs --b", command.name()));
        }
        None => None,
    };
    if b.is_none() && !matches!(command, Command::Law | Command::B0 | Command::XiScan | Command::Pinning) && law.mean().is_none() {
        return usage(format!("{law} has infinite mean; pass --b > 0"));
    }
    let beta = match cli.beta {
        Some(x) if !(x >= 0.0 && x.is_finite()) => return usage(format!("--beta must be >= 0 (got {x})")),
        Some(x) => Some(x),
        None if command == Command::Pinning => return usage("pinning needs --beta"),
        None => None,
    };
    let indices: Vec<usize> = match &cli.n {
        Some(s) => parse_list("--n", s)?,
        None => Vec::new(),
    };
    let n_max = match cli.nmax {
        Some(0) => return usage("--nmax must be >= 1"),
        Some(n) => n,
        None => match command {
            Command::Law => 20,
            Command::Ratio if !indices.is_empty() => *indices.iter().max().unwrap(),
            _ => 1000,
        },
    };
    if let Some(&bad) = indices.iter().find(|&&n| n > n_max) {
        return usage(format!("--n {bad} exceeds --nmax {n_max}"));
    }
    let precision = cli.precision.unwrap_or_default();
    if let (PrecisionSpec::Bits(_), Some(bv)) = (precision, b) {
        if matches!(command, Command::U | Command::Delta | Command::Rate | Command::Ratio) {
            precision.resolve(bv, n_max)?;
        }
    }
    let tol = positive("--tol", cli.tol.unwrap_or(1e-6))?;
    let grid: Vec<f64> = match &cli.grid {
        Some(s) => parse_list("--grid", s)?,
        None if command == Command::XiScan => return usage("xi-scan needs --grid"),
        None => Vec::new(),
    };
    for &g in &grid {
        positive("--grid", g)?;
    }
    let window = match &cli.window {
        Some(s) => {
            let v: Vec<usize> = parse_list("--window", s)?;
            match v.as_slice() {
                [lo, hi] if *lo >= 1 && lo < hi && *hi <= n_max => Some((*lo, *hi)),
                _ => return usage(format!("--window must be lo,hi with 1 <= lo < hi <= {n_max}")),
            }
        }
        None => None,
    };
    let paths = cli.paths.unwrap_or(100_000);
    if paths == 0 {
        return usage("--paths must be >= 1");
    }
    let horizon = cli.horizon.unwrap_or(20);
    if horizon == 0 {
        return usage("--horizon must be >= 1");
    }
    let volume = cli.volume.unwrap_or(1000);
    if volume == 0 {
        return usage("--volume must be >= 1");
    }
    let h = positive("--h", cli.h.unwrap_or(1e-4))?;
    let b_lo = positive("--b-lo", cli.b_lo.unwrap_or(0.01))?;
    let b_hi = positive("--b-hi", cli.b_hi.unwrap_or(5.0))?;
    if b_lo >= b_hi {
        return usage(format!("--b-lo {b_lo} must be below --b-hi {b_hi}"));
    }
    let r_out = match cli.r_out {
        Some(r) if !(r > 1.0 && r.is_finite()) => return usage(format!("--r-out must be > 1 (got {r})")),
        r => r,
    };

    let mut params = BTreeMap::new();
    params.insert("law".to_string(), law.to_json());
    let mut put = |k: &str, v: String| {
        params.insert(k.to_string(), v);
    };
    if let Some(b) = b {
        put("b", format!("{b:?}"));
    }
    if let Some(beta) = beta {
        put("beta", format!("{beta:?}"));
    }
    if matches!(command, Command::Law | Command::U | Command::Delta | Command::Rate | Command::Ratio) {
        put("nmax", n_max.to_string());
    }
    if matches!(command, Command::Tilt | Command::U | Command::Delta | Command::Rate | Command::Ratio | Command::Roots) {
        put("precision", precision.to_string());
    }
    match command {
        Command::Rate => {
            let (lo, hi) = window.unwrap_or_else(|| default_window(n_max));
            put("window", format!("{lo},{hi}"));
        }
        Command::Ratio => put("n", indices.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")),
        Command::B0 => {
            put("tol", format!("{tol:?}"));
            put("b-lo", format!("{b_lo:?}"));
            put("b-hi", format!("{b_hi:?}"));
        }
        Command::XiScan => put("grid", grid.iter().map(|g| format!("{g:?}")).collect::<Vec<_>>().join(",")),
        Command::Pinning => {
            put("volume", volume.to_string());
            put("h", format!("{h:?}"));
        }
        Command::Mc => {
            put("paths", paths.to_string());
            put("horizon", horizon.to_string());
        }
        Command::Roots => {
            if let Some(r) = r_out {
                put("r-out", format!("{r:?}"));
            }
        }
        _ => {}
    }
    let seed = cli.seed.unwrap_or(0);
    if command == Command::Mc {
        put("seed", seed.to_string());
    }

    Ok(RunConfig {
        command,
        law,
        b,
        beta,
        n_max,
        precision,
        seed,
        out_format: cli.out.unwrap_or_default(),
        out_path: cli.out_path,
        tol,
        grid,
        paths,
        horizon,
        indices,
        window,
        volume,
        h,
        b_lo,
        b_hi,
        r_out,
        params,
    })
}

/// Result of one run before serialization.
pub struct Artifact {
    pub results: Value,
    pub csv: String,
    pub precision_bits: Option<u32>,
}

fn num(x: f64) -> Value {
    Value::String(format!("{x:?}"))
}

fn tilted_for(cfg: &RunConfig) -> Result<TiltedLaw> {
    match cfg.b {
        Some(b) => tilt(&cfg.law, b, cfg.precision),
        None => untilted(&cfg.law, cfg.precision),
    }
}

fn series_csv(series: &RenewalSeries) -> Result<String> {
    let mut buf = Vec::new();
    series.write_csv(&mut buf)?;
    Ok(String::from_utf8(buf).expect("CSV output is ASCII"))
}

fn series_json(series: &RenewalSeries) -> Value {
    let col = |v: &[rug::Float]| Value::Array(v.iter().map(|x| Value::String(to_decimal(x))).collect());
    json!({
        "n_max": series.n_max,
        "u_inf": to_decimal(&series.u_inf),
        "u": col(&series.u),
        "d": col(&series.d),
        "grad_u": col(&series.grad_u),
    })
}

/// Runs the configured computation.
pub fn run(cfg: &RunConfig) -> Result<Artifact> {
    match cfg.command {
        Command::Law => {
            let k = cfg.law.density_vec(cfg.n_max);
            let kbar = cfg.law.survival_vec(cfg.n_max);
            let mut csv = String::from("n,K,Kbar\n");
            for n in 0..=cfg.n_max {
                let kn = if n == 0 { 0.0 } else { k[n - 1] };
                writeln!(csv, "{n},{kn:?},{:?}", kbar[n]).unwrap();
            }
            let results = json!({
                "law": serde_json::to_value(LawJson::from(&cfg.law))?,
                "support_start": cfg.law.support_start(),
                "aperiodic": cfg.law.aperiodic(),
                "mean": cfg.law.mean().map(num).unwrap_or(Value::Null),
                "K": k.iter().map(|x| num(*x)).collect::<Vec<_>>(),
            });
            Ok(Artifact { results, csv, precision_bits: None })
        }
        Command::Tilt => {
            let t = tilted_for(cfg)?;
            let (c, m, ui) = (to_decimal(t.c_b()), to_decimal(t.m_b()), to_decimal(&t.u_inf()));
            let csv = format!("b,c_b,m_b,u_inf\n{:?},{c},{m},{ui}\n", t.b());
            let results = json!({"b": num(t.b()), "c_b": c, "m_b": m, "u_inf": ui, "degenerate": t.is_degenerate()});
            Ok(Artifact { results, csv, precision_bits: Some(t.bits()) })
        }
        Command::U | Command::Delta => {
            let t = tilted_for(cfg)?;
            let series = if cfg.command == Command::U {
                mass_renewal(&t, cfg.n_max, cfg.precision)?
            } else {
                delta_series(&t, cfg.n_max, cfg.precision)?
            };
            Ok(Artifact {
                results: series_json(&series),
                csv: series_csv(&series)?,
                precision_bits: Some(series.precision_bits),
            })
        }
        Command::Rate => {
            let t = tilted_for(cfg)?;
            let series = delta_series(&t, cfg.n_max, cfg.precision)?;
            let r = decay_rate(&series, cfg.window.unwrap_or_else(|| default_window(cfg.n_max)))?;
            let csv = format!(
                "rate,window_lo,window_hi,fit_r2,oscillatory,n_sign_changes\n{:?},{},{},{:?},{},{}\n",
                r.rate, r.window.0, r.window.1, r.fit_r2, r.oscillatory, r.n_sign_changes
            );
            Ok(Artifact { results: serde_json::to_value(&r)?, csv, precision_bits: Some(series.precision_bits) })
        }
        Command::Ratio => {
            let t = tilted_for(cfg)?;
            let series = delta_series(&t, cfg.n_max, cfg.precision)?;
            let indices = if cfg.indices.is_empty() { vec![cfg.n_max] } else { cfg.indices.clone() };
            let mut csv = String::from("n,sharp_ratio,grad_ratio,correlation,mu_ratio,conv_ratio,conv_target\n");
            let mut rows = Vec::new();
            for &n in &indices {
                let s = sharp_ratio(&series, n)?;
                let g = grad_ratio(&series, n)?;
                let c = correlation_fn(&series, n)?;
                let cnw = cnw_check(&series.tilted, n.max(1))?;
                writeln!(csv, "{n},{s:?},{g:?},{c:?},{:?},{:?},{:?}", cnw.mu_ratio, cnw.conv_ratio, cnw.conv_target).unwrap();
                rows.push(json!({
                    "n": n,
                    "sharp_ratio": num(s),
                    "grad_ratio": num(g),
                    "correlation": num(c),
                    "cnw": serde_json::to_value(&cnw)?,
                }));
            }
            Ok(Artifact { results: Value::Array(rows), csv, precision_bits: Some(series.precision_bits) })
        }
        Command::Roots => {
            let t = tilted_for(cfg)?;
            let (r_in, r_default) = default_annulus(&t);
            let r_out = cfg.r_out.unwrap_or(r_default);
            let count = count_zeros(&t, r_in, r_out)?;
            let roots = find_roots_in(&t, r_in, r_out)?;
            let mut csv = String::from("re,im,modulus,coef_re,coef_im,residual\n");
            for r in &roots {
                writeln!(
                    csv,
                    "{:?},{:?},{:?},{:?},{:?},{:?}",
                    r.z0.re, r.z0.im, r.modulus, r.pole_coefficient.re, r.pole_coefficient.im, r.residual
                )
                .unwrap();
            }
            let real_form = pole_real_form(&roots).map(|(m, a, c1, c2)| json!({"modulus": num(m), "arg": num(a), "c1": num(c1), "c2": num(c2)}));
            let results = json!({
                "count": serde_json::to_value(&count)?,
                "roots": serde_json::to_value(&roots)?,
                "pole_real_form": real_form,
                "outer_margin": num(OUTER_MARGIN),
            });
            Ok(Artifact { results, csv, precision_bits: Some(t.bits()) })
        }
        Command::B0 => {
            let ct = critical_tilt(&cfg.law, cfg.b_lo, cfg.b_hi, cfg.tol)?;
            let closed = match cfg.law.family() {
                Family::Shifted { alpha, shift: 1 } if *alpha == 0.5 => Some(half_unit_shift_b0()),
                _ => None,
            };
            let mut csv = String::from("b0,tol,iterations,closed_form\n");
            writeln!(csv, "{:?},{:?},{},{}", ct.b0, ct.tol, ct.iterations, closed.map(|c| format!("{c:?}")).unwrap_or_default()).unwrap();
            let results = json!({
                "b0": num(ct.b0),
                "tol": num(ct.tol),
                "iterations": ct.iterations,
                "closed_form": closed.map(num),
            });
            Ok(Artifact { results, csv, precision_bits: None })
        }
        Command::XiScan => {
            let rows = xi_scan(&cfg.law, &cfg.grid, default_xi_nmax)?;
            let mut buf = Vec::new();
            write_xi_csv(&rows, &mut buf)?;
            Ok(Artifact {
                results: serde_json::to_value(&rows)?,
                csv: String::from_utf8(buf).expect("CSV output is ASCII"),
                precision_bits: None,
            })
        }
        Command::Pinning => {
            let beta = cfg.beta.expect("validated");
            let (table, summary) = summarize(&cfg.law, beta, cfg.volume, cfg.h)?;
            let fe = if beta > 0.0 { free_energy(&cfg.law, beta, 1e-14)? } else { 0.0 };
            let mut buf = Vec::new();
            table.write_csv(&mut buf)?;
            let mut results = serde_json::to_value(&summary)?;
            results["free_energy"] = num(fe);
            Ok(Artifact { results, csv: String::from_utf8(buf).expect("CSV output is ASCII"), precision_bits: None })
        }
        Command::Mc => {
            let t = tilted_for(cfg)?;
            let est = mc_sample(&t, cfg.horizon, cfg.paths, cfg.seed)?;
            let exact = mass_renewal(&t, cfg.horizon, PrecisionSpec::Auto)?.u_f64();
            let mut csv = String::from("n,u_hat,std_err,u\n");
            for n in 0..=cfg.horizon {
                writeln!(csv, "{n},{:?},{:?},{:?}", est.u_hat[n], est.std_err[n], exact[n]).unwrap();
            }
            let results = json!({
                "u_hat": est.u_hat.iter().map(|x| num(*x)).collect::<Vec<_>>(),
                "std_err": est.std_err.iter().map(|x| num(*x)).collect::<Vec<_>>(),
                "u": exact.iter().map(|x| num(*x)).collect::<Vec<_>>(),
            });
            Ok(Artifact { results, csv, precision_bits: None })
        }
    }
}

/// The JSON document emitted for a run.
pub fn json_document(cfg: &RunConfig, art: &Artifact) -> Value {
    let params: serde_json::Map<String, Value> = cfg
        .params
        .iter()
        .map(|(k, v)| {
            let v = if k == "law" { serde_json::from_str(v).unwrap_or(Value::String(v.clone())) } else { Value::String(v.clone()) };
            (k.clone(), v)
        })
        .collect();
    json!({
        "command": cfg.command.name(),
        "params": params,
        "results": art.results,
        "provenance": {
            "precision_bits": art.precision_bits,
            "seed": if cfg.command == Command::Mc { json!(cfg.seed) } else { Value::Null },
            "version": env!("CARGO_PKG_VERSION"),
        },
    })
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Runs `cfg` and writes its artifact to the configured destination.
pub fn dispatch(cfg: &RunConfig) -> Result<()> {
    let art = run(cfg)?;
    let text = match cfg.out_format {
        OutFormat::Csv => art.csv.clone(),
        OutFormat::Json => {
            let mut s = serde_json::to_string_pretty(&json_document(cfg, &art))?;
            s.push('\n');
            s
        }
    };
    match &cfg.out_path {
        Some(p) => write_atomic(p, text.as_bytes()),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.flush()?;
            Ok(())
        }
    }
}

/// Entry point shared by the binary: returns the process exit code.
pub fn main_with_args<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let cfg = match parse_invocation(argv) {
        Ok(Invocation::Run(cfg)) => cfg,
        Ok(Invocation::Info(text)) => {
            print!("{text}");
            return 0;
        }
        Err(e) => {
            eprintln!("pinrenewal: {e}");
            return e.exit_code();
        }
    };
    match dispatch(&cfg) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("pinrenewal {}: {e}", cfg.command.name());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn happy_paths() {
        let cfg = parse_args(args("delta --family basic --alpha 0.5 --b 0.5 --nmax 2000 --precision auto --out csv")).unwrap();
        assert_eq!(cfg.command, Command::Delta);
        assert_eq!(cfg.n_max, 2000);
        assert_eq!(cfg.out_format, OutFormat::Csv);
        let cfg = parse_args(args("b0 --family shifted --alpha 0.5 --m 1 --tol 1e-6")).unwrap();
        assert_eq!(cfg.law.shift(), 1);
        assert_eq!(cfg.tol, 1e-6);
    }

    #[test]
    fn negative_tilt_is_usage_error() {
        let e = parse_args(args("tilt --family basic --alpha 0.5 --b -0.1")).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        assert!(e.to_string().contains("--b"), "{e}");
    }

    #[test]
    fn unknown_flag_named() {
        let e = parse_args(args("tilt --family basic --alpha 0.5 --b 1 --bogus 3")).unwrap_err();
        assert_eq!(e.exit_code(), 1);
        assert!(e.to_string().contains("--bogus"), "{e}");
    }

    #[test]
    fn config_file_merges_under_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# comment\nfamily = basic\nalpha=0.5\nb = 0.25\nnmax = 50\n").unwrap();
        let cfg = parse_args(vec!["u".to_string(), "--config".into(), path.display().to_string(), "--b".into(), "0.5".into()]).unwrap();
        assert_eq!(cfg.b, Some(0.5));
        assert_eq!(cfg.n_max, 50);
        std::fs::write(&path, "colour = blue\n").unwrap();
        let e = parse_args(vec!["u".to_string(), format!("--config={}", path.display())]).unwrap_err();
        assert!(e.to_string().contains("--colour"), "{e}");
        assert!(config_tokens("justakey\n").is_err());
        assert!(config_tokens("config = x\n").is_err());
    }

    #[test]
    fn validation() {
        for bad in [
            "u --family basic --alpha 1.5 --b 1",
            "u --family basic --alpha 0.5",
            "u --family basic --alpha 0.5 --b 0.5 --nmax 0",
            "ratio --family basic --alpha 0.5 --b 0.5 --nmax 10 --n 20",
            "rate --family basic --alpha 0.5 --b 0.5 --nmax 100 --window 50,200",
            "xi-scan --family basic --alpha 0.5 --grid 0.1,-0.2",
            "pinning --family basic --alpha 0.5",
            "b0 --family shifted --alpha 0.5 --b-lo 2 --b-hi 1",
            "law",
        ] {
            let e = parse_args(args(bad)).unwrap_err();
            assert_eq!(e.exit_code(), 1, "{bad}: {e}");
        }
    }

    #[test]
    fn short_precision_is_precision_error() {
        let e = parse_args(args("delta --family basic --alpha 0.5 --b 0.5 --nmax 1000 --precision 64")).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn help_is_info() {
        assert!(matches!(parse_invocation(args("--help")).unwrap(), Invocation::Info(_)));
    }

    #[test]
    fn json_document_shape() {
        let cfg = parse_args(args("tilt --family basic --alpha 0.5 --b 0.6931471805599453")).unwrap();
        let art = run(&cfg).unwrap();
        let doc = json_document(&cfg, &art);
        assert_eq!(doc["command"], "tilt");
        assert!(doc["params"]["law"].is_object());
        let c: f64 = doc["results"]["c_b"].as_str().unwrap().parse().unwrap();
        assert!((c - (2.0 + 2f64.sqrt())).abs() < 1e-12);
        assert!(doc["provenance"]["precision_bits"].is_u64());
    }

    #[test]
    fn atomic_write() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("out.csv");
        write_atomic(&p, b"a,b\n").unwrap();
        write_atomic(&p, b"c,d\n").unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "c,d\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
