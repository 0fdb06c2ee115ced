use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{debug, info};
use num_complex::Complex64;
use serde_json::{json, Value};
use timefilter::adaptivity::integrate_adaptive;
use timefilter::analysis::{
    astability_report, astable_nu_range, bdf2_coefficients, boundary_locus, check_order, lmm_coefficients,
    modified_eq_coefficients, phase_amplitude_error, LmmCoefficients,
};
use timefilter::integrators::{
    integrate_bdf2, integrate_be, integrate_be_filtered, integrate_oneleg_be_start, integrate_rkf45, NuPolicy, Status,
    TimeGrid, Trajectory,
};
use timefilter::problems::make_problem;
use timefilter::OdeProblem;

use crate::config::{ConfigError, Format, GridSpec, Method, OutputSpec, RunConfig};
use crate::output::{self, ConvergenceRow};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: String, source: io::Error },
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub(crate) fn io(path: impl AsRef<Path>, source: io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

/// Nonlinear-solve failures are numerical; everything else the core rejects is a bad configuration.
impl From<timefilter::Error> for CliError {
    fn from(e: timefilter::Error) -> Self {
        use timefilter::Error as E;
        match e {
            E::EvaluationFailure { .. } | E::NoConvergence { .. } | E::SingularJacobian | E::StepFailure { .. } => {
                CliError::Numerical(e.to_string())
            }
            other => CliError::Config(ConfigError::Core(other)),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

fn open_output(path: Option<&Path>) -> CliResult<Box<dyn Write>> {
    match path {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            }
            let f = File::create(p).map_err(|e| CliError::io(p, e))?;
            Ok(Box::new(BufWriter::new(f)))
        }
        None => Ok(Box::new(BufWriter::new(io::stdout()))),
    }
}

fn output_label(out: &OutputSpec) -> String {
    out.path
        .as_deref()
        .map_or_else(|| "<stdout>".to_string(), |p| p.display().to_string())
}

fn grid_for(spec: &GridSpec, span: (f64, f64)) -> CliResult<TimeGrid> {
    let (t0, t1) = span;
    let grid = match spec {
        GridSpec::Constant { k } => TimeGrid::constant(t0, t1, *k)?,
        GridSpec::Ratios { k0, ratios } => TimeGrid::from_ratios(t0, t1, *k0, ratios)?,
        GridSpec::Random { k, seed } => {
            let n = ((t1 - t0) / k).round().max(1.0) as usize;
            TimeGrid::random_ratios(t0, t1, n, *seed)?
        }
        GridSpec::Adaptive(_) | GridSpec::Embedded { .. } => {
            return Err(ConfigError::Invalid("this method does not run on a fixed grid".into()).into())
        }
    };
    Ok(grid)
}

fn run_method(cfg: &RunConfig, p: &OdeProblem, grid: &GridSpec) -> CliResult<Trajectory> {
    let y0 = &cfg.problem.y0;
    let span = cfg.problem.t_span;
    let tr = match (cfg.method, grid) {
        (Method::Adaptive, GridSpec::Adaptive(a)) => integrate_adaptive(p, y0, span, a, &cfg.solver)?,
        (Method::Rkf45, GridSpec::Embedded { tol }) => integrate_rkf45(p, y0, span, *tol)?,
        (method, grid) => {
            let g = grid_for(grid, span)?;
            match method {
                Method::Be => integrate_be(p, y0, &g, &cfg.solver)?,
                Method::BeFilter => integrate_be_filtered(p, y0, &g, cfg.nu, &cfg.solver)?,
                Method::OneLeg => integrate_oneleg_be_start(p, y0, &g, cfg.nu, &cfg.solver)?,
                Method::Bdf2 => integrate_bdf2(p, y0, &g, &cfg.solver)?,
                Method::Adaptive | Method::Rkf45 => {
                    return Err(ConfigError::Invalid(format!("method {method} needs its own step control")).into())
                }
            }
        }
    };
    Ok(tr)
}

fn failure(tr: &Trajectory) -> Option<CliError> {
    match &tr.status {
        Status::Completed => None,
        Status::Failed { t, reason } => Some(CliError::Numerical(format!("at t = {t}: {reason}"))),
    }
}

pub fn cmd_integrate(cfg: &RunConfig) -> CliResult<()> {
    let p = make_problem(&cfg.problem)?;
    info!(
        "integrate {} with {} over [{}, {}]",
        p.name(),
        cfg.method,
        cfg.problem.t_span.0,
        cfg.problem.t_span.1
    );
    let tr = run_method(cfg, &p, &cfg.grid)?;
    let label = output_label(&cfg.output);
    let mut w = open_output(cfg.output.path.as_deref())?;
    match cfg.output.format {
        Format::Csv => output::write_trajectory_csv(&mut w, p.components(), &tr),
        Format::Json => output::write_json(&mut w, &output::trajectory_json(p.components(), &tr)),
    }
    .and_then(|_| w.flush())
    .map_err(|e| CliError::io(&label, e))?;
    info!("{} accepted steps written to {label}", tr.records.len());
    match failure(&tr) {
        Some(err) => Err(err),
        None => Ok(()),
    }
}

fn scaled_grid(grid: &GridSpec, level: u32) -> CliResult<GridSpec> {
    let s = 0.5f64.powi(level as i32);
    Ok(match grid {
        GridSpec::Constant { k } => GridSpec::Constant { k: k * s },
        GridSpec::Ratios { k0, ratios } => GridSpec::Ratios {
            k0: k0 * s,
            ratios: ratios.clone(),
        },
        GridSpec::Random { k, seed } => GridSpec::Random { k: k * s, seed: *seed },
        GridSpec::Adaptive(_) | GridSpec::Embedded { .. } => {
            return Err(ConfigError::Invalid("converge needs a fixed-step method".into()).into())
        }
    })
}

fn base_step(grid: &GridSpec) -> f64 {
    match grid {
        GridSpec::Constant { k } | GridSpec::Random { k, .. } => *k,
        GridSpec::Ratios { k0, .. } => *k0,
        GridSpec::Adaptive(a) => a.k_init,
        GridSpec::Embedded { .. } => f64::NAN,
    }
}

/// Max error over the run at `k0 * 2^-i` for `i < levels`. Levels run on separate threads.
pub fn convergence_table(cfg: &RunConfig, levels: u32) -> CliResult<Vec<ConvergenceRow>> {
    if levels == 0 {
        return Err(ConfigError::Invalid("levels must be at least 1".into()).into());
    }
    let p = make_problem(&cfg.problem)?;
    if !p.has_exact() {
        return Err(ConfigError::Invalid(format!("problem {} has no exact solution", p.name())).into());
    }
    let grids = (0..levels)
        .map(|i| scaled_grid(&cfg.grid, i))
        .collect::<CliResult<Vec<_>>>()?;
    let errors: Vec<CliResult<f64>> = std::thread::scope(|s| {
        let handles: Vec<_> = grids
            .iter()
            .map(|g| {
                let p = &p;
                s.spawn(move || -> CliResult<f64> {
                    let tr = run_method(cfg, p, g)?;
                    if let Some(err) = failure(&tr) {
                        return Err(err);
                    }
                    Ok(tr.max_error(p)?)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("level thread panicked"))
            .collect()
    });
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels as usize);
    for (g, e) in grids.iter().zip(errors) {
        let max_error = e?;
        let order = rows.last().map(|prev| (prev.max_error / max_error).log2());
        debug!("k = {} max error {max_error:e}", base_step(g));
        rows.push(ConvergenceRow {
            k: base_step(g),
            max_error,
            order,
        });
    }
    Ok(rows)
}

pub fn cmd_converge(cfg: &RunConfig, levels: u32) -> CliResult<()> {
    let rows = convergence_table(cfg, levels)?;
    let label = output_label(&cfg.output);
    let mut w = open_output(cfg.output.path.as_deref())?;
    match cfg.output.format {
        Format::Csv => output::write_convergence_csv(&mut w, &rows),
        Format::Json => output::write_json(
            &mut w,
            &output::convergence_json(cfg.problem.kind.name(), cfg.method.name(), &rows),
        ),
    }
    .and_then(|_| w.flush())
    .map_err(|e| CliError::io(&label, e))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegionConfig {
    pub nu: f64,
    pub n_points: usize,
    /// `(re_min, re_max, im_min, im_max)`.
    pub bbox: (f64, f64, f64, f64),
    /// Raster samples per axis.
    pub resolution: usize,
    pub out_dir: PathBuf,
}

impl RegionConfig {
    pub fn validate(&self) -> CliResult<()> {
        let (r0, r1, i0, i1) = self.bbox;
        if ![r0, r1, i0, i1].iter().all(|v| v.is_finite()) || r0 >= r1 || i0 >= i1 {
            return Err(
                ConfigError::Invalid(format!("bad box {r0},{r1},{i0},{i1}: need re0 < re1 and im0 < im1")).into(),
            );
        }
        if self.resolution < 2 {
            return Err(ConfigError::Invalid("resolution must be at least 2".into()).into());
        }
        if !self.nu.is_finite() {
            return Err(ConfigError::Invalid("nu must be finite".into()).into());
        }
        Ok(())
    }
}

/// The three methods compared by `stability-region`, as constant-step two-step coefficients.
pub fn region_methods(nu: f64) -> CliResult<Vec<(&'static str, LmmCoefficients)>> {
    if (nu - 2.0).abs() < 1e-12 {
        return Err(timefilter::Error::DegenerateNu { nu, excluded: 2.0 }.into());
    }
    Ok(vec![
        ("be-filter", lmm_coefficients(nu, 1.0)?),
        ("be", lmm_coefficients(0.0, 1.0)?),
        ("bdf2", bdf2_coefficients(1.0)),
    ])
}

fn axis(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
}

fn write_file(path: &Path, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> CliResult<()> {
    let f = File::create(path).map_err(|e| CliError::io(path, e))?;
    let mut w = BufWriter::new(f);
    body(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

/// Writes `<method>_boundary.csv` and `<method>_region.csv` per method; returns the paths.
pub fn cmd_stability_region(rc: &RegionConfig) -> CliResult<Vec<PathBuf>> {
    rc.validate()?;
    let methods = region_methods(rc.nu)?;
    fs::create_dir_all(&rc.out_dir).map_err(|e| CliError::io(&rc.out_dir, e))?;
    let (r0, r1, i0, i1) = rc.bbox;
    let rows = std::thread::scope(|s| {
        let handles: Vec<_> = methods
            .iter()
            .map(|(_, c)| {
                s.spawn(move || {
                    axis(i0, i1, rc.resolution)
                        .flat_map(|im| axis(r0, r1, rc.resolution).map(move |re| (re, im)))
                        .map(|(re, im)| (re, im, c.is_stable_at(Complex64::new(re, im))))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("raster thread panicked"))
            .collect::<Vec<_>>()
    });
    let mut written = Vec::new();
    for ((name, c), raster) in methods.iter().zip(rows) {
        let locus = boundary_locus(c, rc.n_points)?;
        if !locus.poles.is_empty() {
            debug!("{name}: {} boundary samples skipped at poles", locus.poles.len());
        }
        let path = rc.out_dir.join(format!("{name}_boundary.csv"));
        write_file(&path, |w| {
            writeln!(w, "theta,re,im")?;
            for pt in &locus.points {
                writeln!(
                    w,
                    "{},{},{}",
                    output::num(pt.theta),
                    output::num(pt.lambda_k.re),
                    output::num(pt.lambda_k.im)
                )?;
            }
            Ok(())
        })?;
        written.push(path);
        let path = rc.out_dir.join(format!("{name}_region.csv"));
        write_file(&path, |w| {
            writeln!(w, "re,im,inside")?;
            for (re, im, inside) in &raster {
                writeln!(w, "{},{},{}", output::num(*re), output::num(*im), u8::from(*inside))?;
            }
            Ok(())
        })?;
        written.push(path);
    }
    info!("wrote {} files to {}", written.len(), rc.out_dir.display());
    Ok(written)
}

pub const SAMPLE_OMEGA_K: [f64; 2] = [0.01, 0.1];

/// Everything `analyze` reports, as JSON.
pub fn analysis_report(nu: NuPolicy, tau: f64) -> CliResult<Value> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(ConfigError::Invalid(format!("tau must be positive, got {tau}")).into());
    }
    let nu_value = nu.nu(tau);
    let c = lmm_coefficients(nu_value, tau)?;
    let report = astability_report(nu_value, tau)?;
    let (lo, hi) = astable_nu_range(tau);
    let m = modified_eq_coefficients(nu_value, tau)?;
    let cond = |c: &timefilter::analysis::Condition| json!({"value": c.value, "holds": c.holds});
    let samples: Vec<Value> = SAMPLE_OMEGA_K
        .iter()
        .map(|&wk| {
            let pa = phase_amplitude_error(&m, wk);
            json!({"omega_k": wk, "phase_err": pa.phase_err, "amp_err": pa.amp_err, "domain_warning": pa.domain_warning})
        })
        .collect();
    Ok(json!({
        "nu": nu_value,
        "tau": tau,
        "alpha": c.alpha,
        "beta": c.beta,
        "order": check_order(&c),
        "stability": {
            "cond1": cond(&report.cond1),
            "cond2": cond(&report.cond2),
            "cond3": cond(&report.cond3),
            "a_stable": report.a_stable,
            "zero_stable": report.zero_stable,
            "roots": report.roots.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
        },
        "astable_nu_range": [lo, hi],
        "modified_equation": {"c1": m.c1, "c2": m.c2, "c3": m.c3},
        "phase_amplitude": samples,
    }))
}

fn short(x: f64) -> String {
    if x == 0.0 || (1e-4..1e6).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn fmt_root(z: &Value) -> String {
    let (re, im) = (z[0].as_f64().unwrap_or(f64::NAN), z[1].as_f64().unwrap_or(f64::NAN));
    if im == 0.0 {
        short(re)
    } else {
        format!("{}{}{}i", short(re), if im < 0.0 { "-" } else { "+" }, short(im.abs()))
    }
}

pub fn format_report(r: &Value) -> String {
    let f = |v: &Value| v.as_f64().map_or_else(|| v.to_string(), short);
    let list = |v: &Value| {
        v.as_array()
            .map(|a| a.iter().map(f).collect::<Vec<_>>().join(", "))
            .unwrap_or_default()
    };
    let st = &r["stability"];
    let mut s = String::new();
    s += &format!("nu = {}, tau = {}\n", f(&r["nu"]), f(&r["tau"]));
    s += &format!("alpha = [{}]\nbeta  = [{}]\n", list(&r["alpha"]), list(&r["beta"]));
    s += &format!("order = {}\n", r["order"]);
    for key in ["cond1", "cond2", "cond3"] {
        s += &format!(
            "{key}: {} ({})\n",
            f(&st[key]["value"]),
            if st[key]["holds"] == true { "holds" } else { "fails" }
        );
    }
    s += &format!("a_stable = {}\nzero_stable = {}\n", st["a_stable"], st["zero_stable"]);
    let roots: Vec<String> = st["roots"]
        .as_array()
        .map(|a| a.iter().map(fmt_root).collect())
        .unwrap_or_default();
    s += &format!("rho roots = {}\n", roots.join(", "));
    s += &format!("A-stable nu range = [{}]\n", list(&r["astable_nu_range"]));
    let m = &r["modified_equation"];
    s += &format!("C1 = {}\nC2 = {}\nC3 = {}\n", f(&m["c1"]), f(&m["c2"]), f(&m["c3"]));
    for pa in r["phase_amplitude"].as_array().into_iter().flatten() {
        s += &format!(
            "omega k = {}: phase err = {}, amplitude err = {}\n",
            f(&pa["omega_k"]),
            f(&pa["phase_err"]),
            f(&pa["amp_err"])
        );
    }
    s
}

pub fn cmd_analyze(nu: NuPolicy, tau: f64, format: Option<Format>, out: Option<&Path>) -> CliResult<()> {
    let report = analysis_report(nu, tau)?;
    if let Some(path) = out {
        write_file(path, |w| output::write_json(w, &report))?;
    }
    let stdout = io::stdout();
    let mut w = stdout.lock();
    match format {
        Some(Format::Json) => output::write_json(&mut w, &report),
        _ => w.write_all(format_report(&report).as_bytes()),
    }
    .map_err(|e| CliError::io("<stdout>", e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RawConfig;

    fn run_cfg(pairs: &[(&str, &str)]) -> RunConfig {
        let mut raw = RawConfig::new();
        for (k, v) in pairs {
            raw.set(k, *v);
        }
        RunConfig::from_raw(&raw).unwrap()
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::from(ConfigError::Invalid("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(timefilter::Error::SingularJacobian).exit_code(), 3);
        assert_eq!(
            CliError::from(timefilter::Error::DegenerateNu { nu: 2.0, excluded: 2.0 }).exit_code(),
            2
        );
    }

    #[test]
    fn convergence_orders() {
        let be = convergence_table(&run_cfg(&[("problem", "linear-forced"), ("method", "be")]), 4).unwrap();
        assert_eq!(be.len(), 4);
        assert!(be[0].order.is_none());
        assert!(be[1..].iter().all(|r| (r.order.unwrap() - 1.0).abs() < 0.1));
        let rows = convergence_table(
            &run_cfg(&[("problem", "linear-forced"), ("nu", "0.6666666666666666")]),
            3,
        )
        .unwrap();
        assert!((rows[2].k - 0.025).abs() < 1e-15);
    }

    #[test]
    fn converge_rejects_adaptive_and_missing_exact() {
        assert!(convergence_table(&run_cfg(&[("method", "adaptive")]), 3).is_err());
        assert!(convergence_table(&run_cfg(&[("problem", "lorenz")]), 3).is_err());
        assert!(convergence_table(&run_cfg(&[]), 0).is_err());
    }

    #[test]
    fn region_membership() {
        let m = region_methods(2.0 / 3.0).unwrap();
        let inside = |name: &str, z: Complex64| m.iter().find(|(n, _)| *n == name).unwrap().1.is_stable_at(z);
        assert!(inside("be", Complex64::new(-1.0, 0.0)));
        assert!(!inside("be", Complex64::new(1.0, 0.0)));
        assert!(inside("bdf2", Complex64::new(0.0, 2.0)));
        assert!(inside("be-filter", Complex64::new(0.0, 2.0)));
        assert!(region_methods(2.0).is_err());
    }

    #[test]
    fn region_config_checks() {
        let mut rc = RegionConfig {
            nu: 2.0 / 3.0,
            n_points: 100,
            bbox: (-1.0, 1.0, -1.0, 1.0),
            resolution: 3,
            out_dir: PathBuf::from("unused"),
        };
        assert!(rc.validate().is_ok());
        rc.bbox = (1.0, -1.0, -1.0, 1.0);
        assert!(rc.validate().is_err());
        rc.bbox = (-1.0, 1.0, -1.0, 1.0);
        rc.resolution = 1;
        assert!(rc.validate().is_err());
    }

    #[test]
    fn report_contents() {
        let r = analysis_report(NuPolicy::Fixed(0.0), 1.0).unwrap();
        assert_eq!(r["order"], 1);
        assert_eq!(r["stability"]["a_stable"], true);
        let text = format_report(&r);
        assert!(text.contains("order = 1"));
        assert!(text.contains("omega k = 0.1"));
        assert!(analysis_report(NuPolicy::Fixed(2.0), 1.0).is_err());
        assert!(analysis_report(NuPolicy::SecondOrder, -1.0).is_err());
    }
}
