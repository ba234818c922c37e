use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;
use translator_core::fields::{constant_field, hybrid_residual_field, quadratic_divergence, quadratic_field, radial_bowl_field};
use translator_core::hybrid::EvenProfile;
use translator_core::verify::{convergence_order_from, divergence_term};
use translator_core::{
    build_graph, build_hybrid, build_spindle, build_wing, compute_bowl, compute_separatrix_at, jump_decay,
    residual_fund_eq, smoothness_scan, timelike_family_from_strip, ClassTag, Classifier, ConvergenceReport, EndLimit,
    FlowParams, GridField, HybridConfig, HybridGrid, JumpDecay, QuadrantMask, ScanLine, SeparatrixResult, Sign,
    SmoothnessReport, SolitonError, SolutionClass, WingConfig,
};

use crate::config::{Action, GridSettings, RegionKind, RunConfig};
use crate::emit::{boost_sweep, fmt_f64, height_field, revolve, sink, write_csv, Cell};
use crate::{Cli, Command, MeshTarget, VerifyTarget, WingForm};

type Result<T> = std::result::Result<T, SolitonError>;

/// Verification verdict; every other command passes or errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Pass => 0,
            Outcome::Fail => 1,
        }
    }
}

/// Smoothness jumps at or below this are rounding noise.
const JUMP_FLOOR: f64 = 1e-10;
const ORDER_BAND: (f64, f64) = (1.7, 2.3);

fn settings(cli: &Cli) -> Result<RunConfig> {
    let base = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let mut grid = GridSettings::default();
    match &cli.command {
        Command::Portrait { s0_range, w0_range, s0_count, w0_count, samples } => {
            grid.s0_range = *s0_range;
            grid.w0_range = *w0_range;
            grid.s0_count = *s0_count;
            grid.w0_count = *w0_count;
            grid.trajectory_samples = *samples;
        }
        Command::Bowl { extent, samples } => {
            grid.extent = *extent;
            grid.profile_samples = *samples;
        }
        Command::Separatrix { samples, .. } => grid.trajectory_samples = *samples,
        Command::Hybrid { extent, h, .. } => {
            grid.extent = *extent;
            grid.h = h.map(|h| vec![h]);
        }
        Command::Mesh { angular, profile_samples, extent, h, .. } => {
            grid.angular_samples = *angular;
            grid.profile_samples = *profile_samples;
            grid.extent = *extent;
            grid.h = h.map(|h| vec![h]);
        }
        Command::Verify { h, extent, .. } => {
            grid.h = h.clone();
            grid.extent = *extent;
        }
        Command::Classify { .. } | Command::Wing { .. } | Command::Spindle { .. } => {}
    }
    let flags = RunConfig {
        action: cli.action,
        region: cli.region,
        n: cli.n,
        strict_paper_fiber_coeff: cli.strict_fiber.then_some(true),
        integrator: None,
        grid,
        output: cli.output.clone(),
    };
    let mut cfg = base.overlay(flags);
    if cli.rel_tol.is_some() || cli.abs_tol.is_some() || cli.s_max.is_some() {
        let mut ic = cfg.integrator();
        ic.rel_tol = cli.rel_tol.unwrap_or(ic.rel_tol);
        ic.abs_tol = cli.abs_tol.unwrap_or(ic.abs_tol);
        ic.s_max = cli.s_max.unwrap_or(ic.s_max);
        cfg.integrator = Some(ic);
    }
    cfg.integrator().validate()?;
    cfg.region()?;
    cfg.check_output()?;
    Ok(cfg)
}

/// Runs one command. `provenance` is recorded in mesh metadata.
pub fn run(cli: &Cli, provenance: &str) -> Result<Outcome> {
    let cfg = settings(cli)?;
    match &cli.command {
        Command::Classify { s0, w0 } => cmd_classify(&cfg, *s0, *w0, cli.json),
        Command::Portrait { .. } => cmd_portrait(&cfg),
        Command::Bowl { .. } => cmd_bowl(&cfg, cli.json),
        Command::Separatrix { anchor, tol, .. } => cmd_separatrix(&cfg, *anchor, *tol, cli.json),
        Command::Wing { s0, y0, form } => cmd_wing(&cfg, *s0, *y0, *form, false, cli.json),
        Command::Spindle { s0 } => cmd_wing(&cfg, *s0, 0.0, WingForm::Minkowski, true, cli.json),
        Command::Hybrid { order, quadrants, mismatched, .. } => {
            cmd_hybrid(&cfg, hybrid_config(*order, quadrants.as_deref(), *mismatched)?, cli.json)
        }
        Command::Mesh { target, s0, form, quadrants, theta, .. } => {
            cmd_mesh(&cfg, *target, *s0, *form, quadrants.as_deref(), *theta, provenance)
        }
        Command::Verify { target, order, quadrants, mismatched, .. } => {
            let hc = hybrid_config(None, quadrants.as_deref(), *mismatched)?;
            cmd_verify(&cfg, *target, *order, hc, cli.json)
        }
    }
}

fn hybrid_config(order: Option<usize>, quadrants: Option<&str>, mismatched: bool) -> Result<HybridConfig> {
    let mask = match quadrants {
        Some(q) => q.parse::<QuadrantMask>()?,
        None => QuadrantMask::all(),
    };
    Ok(HybridConfig {
        order: order.unwrap_or(translator_core::hybrid::HYBRID_ORDER),
        mask,
        mismatched,
        ..HybridConfig::default()
    })
}

fn out(cfg: &RunConfig) -> Result<Box<dyn Write>> {
    Ok(sink(cfg.output.as_deref())?)
}

fn write_json<T: Serialize>(cfg: &RunConfig, value: &T) -> Result<()> {
    let mut w = out(cfg)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| SolitonError::Io(e.to_string()))?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}

/// At most `k` entries, evenly spread by index, keeping both ends.
fn decimate<T: Copy>(xs: &[T], k: usize) -> Vec<T> {
    if xs.len() <= k || k < 2 {
        return xs.to_vec();
    }
    (0..k).map(|i| xs[i * (xs.len() - 1) / (k - 1)]).collect()
}

/// Classifier for the configured action; `flip` maps the user's slope `f'` to
/// the classified slope (`q = -f` on the boost timelike cones).
fn classifier(cfg: &RunConfig) -> Result<(Classifier, f64)> {
    let params = cfg.params()?;
    match (cfg.action(), cfg.region()?) {
        (Action::SoN, _) => Ok((Classifier::new(params, cfg.integrator())?, 1.0)),
        (Action::Boost, RegionKind::TimelikeT) => Ok((Classifier::new(params.mirrored(), cfg.integrator())?, -1.0)),
        (Action::Boost, _) => Err(SolitonError::Config(
            "classification covers the rotational form and the timelike boost region; \
             spacelike boost solutions are the Type Z and wing families (mesh zwing, wing --form euclidean)"
                .into(),
        )),
    }
}

#[derive(Serialize)]
struct ClassifyReport {
    n: usize,
    action: Action,
    s0: f64,
    w0: f64,
    class: SolutionClass,
}

fn limit_text(l: &EndLimit, flip: f64) -> String {
    match *l {
        EndLimit::Value(v) => format!("{} (drift {})", fmt_f64(flip * v.value), fmt_f64(v.drift)),
        EndLimit::BlowUp { s_star, sign } => {
            let sign = if flip < 0.0 { sign.flip() } else { sign };
            format!("blow-up to {}inf at s* = {}", if sign == Sign::Plus { "+" } else { "-" }, fmt_f64(s_star))
        }
        EndLimit::AlongLineR { defect } => format!("+inf along line r (defect {})", fmt_f64(defect)),
    }
}

fn cmd_classify(cfg: &RunConfig, s0: f64, w0: f64, json: bool) -> Result<Outcome> {
    let (clf, flip) = classifier(cfg)?;
    let class = clf.classify(s0, flip * w0)?;
    if json {
        write_json(cfg, &ClassifyReport { n: cfg.n(), action: cfg.action(), s0, w0, class })?;
        return Ok(Outcome::Pass);
    }
    let ev = &class.evidence;
    let mut w = out(cfg)?;
    writeln!(w, "class: {}", class.tag.name())?;
    writeln!(w, "n: {}", cfg.n())?;
    writeln!(w, "s0: {}", fmt_f64(s0))?;
    writeln!(w, "w0: {}", fmt_f64(w0))?;
    writeln!(w, "limit_at_zero: {}", limit_text(&ev.limits.at_zero, flip))?;
    writeln!(w, "limit_at_infinity: {}", limit_text(&ev.limits.at_infinity, flip))?;
    if let Some(b) = &ev.blowup {
        writeln!(w, "blowup_s_star: {}", fmt_f64(b.s_star))?;
        writeln!(w, "blowup_s_star_chart: {}", fmt_f64(b.s_star_chart))?;
    }
    let cps: Vec<String> = ev.critical_points.iter().map(|s| fmt_f64(*s)).collect();
    writeln!(w, "critical_points: [{}]", cps.join(", "))?;
    writeln!(w, "causal_sign: {:?}", ev.causal_sign)?;
    writeln!(w, "consistent: {}", ev.consistent)?;
    w.flush()?;
    Ok(Outcome::Pass)
}

fn portrait_defaults(region: RegionKind) -> ([f64; 2], [f64; 2]) {
    match region {
        RegionKind::GammaPlus => ([0.5, 5.0], [1.1, 6.0]),
        RegionKind::GammaMinus => ([0.5, 5.0], [-6.0, -1.1]),
        _ => ([0.1, 5.0], [-0.95, 0.95]),
    }
}

fn cmd_portrait(cfg: &RunConfig) -> Result<Outcome> {
    let (clf, flip) = classifier(cfg)?;
    let region = cfg.region()?;
    let (ds, dw) = portrait_defaults(region);
    let g = &cfg.grid;
    let [s_lo, s_hi] = g.s0_range.unwrap_or(ds);
    let [w_lo, w_hi] = g.w0_range.unwrap_or(dw);
    let ss = linspace(s_lo, s_hi, g.s0_count.unwrap_or(10));
    let ws = linspace(w_lo, w_hi, g.w0_count.unwrap_or(10));
    let keep = g.trajectory_samples.unwrap_or(200);
    let starts: Vec<(f64, f64)> = ss.iter().flat_map(|&s| ws.iter().map(move |&w| (s, w))).collect();

    let mut rows: Vec<Vec<Vec<Cell>>> = starts
        .par_iter()
        .enumerate()
        .map(|(id, &(s0, w0))| match clf.classify_with_trajectory(s0, flip * w0) {
            Ok((cls, traj)) => decimate(traj.samples(), keep)
                .into_iter()
                .map(|p| {
                    vec![
                        Cell::I(id),
                        Cell::F(s0),
                        Cell::F(w0),
                        Cell::S(cls.tag.name().into()),
                        Cell::F(p.s),
                        Cell::F(flip * p.w),
                    ]
                })
                .collect(),
            Err(e) => vec![vec![
                Cell::I(id),
                Cell::F(s0),
                Cell::F(w0),
                Cell::S(format!("Error: {e}")),
                Cell::Empty,
                Cell::Empty,
            ]],
        })
        .collect();
    let failures = rows.iter().filter(|r| matches!(r[0][3], Cell::S(ref s) if s.starts_with("Error"))).count();

    if region == RegionKind::GammaPlus && !starts.is_empty() {
        let (sep, traj) = clf.separatrix()?;
        let id = starts.len();
        rows.push(
            decimate(traj.samples(), keep)
                .into_iter()
                .map(|p| {
                    vec![
                        Cell::I(id),
                        Cell::F(sep.anchor),
                        Cell::F(sep.value),
                        Cell::S(ClassTag::Separatrix.name().into()),
                        Cell::F(p.s),
                        Cell::F(p.w),
                    ]
                })
                .collect(),
        );
    }
    write_csv(out(cfg)?, &["trajectory_id", "s0", "w0", "class", "s", "w"], rows.into_iter().flatten())?;
    if failures > 0 {
        eprintln!("portrait: {failures} of {} trajectories failed (rows marked Error)", starts.len());
    }
    Ok(Outcome::Pass)
}

fn profile_rows(samples: impl IntoIterator<Item = (f64, f64, f64, f64)>) -> Vec<Vec<Cell>> {
    samples
        .into_iter()
        .map(|(a, b, c, d)| vec![Cell::F(a), Cell::F(b), Cell::F(c), Cell::F(d)])
        .collect()
}

/// Bowl graph `(s, f, f', f'')` at `s_i = extent (i + 1) / count`.
fn bowl_samples(cfg: &RunConfig, extent: f64, count: usize) -> Result<(FlowParams, Vec<(f64, f64, f64, f64)>)> {
    let params = cfg.params()?;
    let ic = cfg.integrator();
    let ic = translator_core::IntegratorConfig { s_max: ic.s_max.max(extent * 1.01), ..ic };
    let ss: Vec<f64> = (0..count).map(|i| extent * (i + 1) as f64 / count as f64).collect();
    match cfg.action() {
        Action::SoN => {
            let g = build_graph(&compute_bowl(&params, &ic)?, 0.0)?;
            let rows = ss
                .iter()
                .map(|&s| {
                    let (f, df, ddf) = g.eval(s).ok_or_else(|| SolitonError::Domain(format!("s = {s} outside the bowl")))?;
                    Ok((s, f, df, ddf))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((params, rows))
        }
        Action::Boost => {
            if cfg.region()? != RegionKind::TimelikeT {
                return Err(SolitonError::Config("the boost bowl lives on the timelike region".into()));
            }
            let f = timelike_family_from_strip(&params, ClassTag::Bowl, None, &ic)?;
            let rows = f
                .samples
                .iter()
                .filter(|p| p.t <= extent)
                .map(|p| (p.t, p.x, p.dx, p.ddx))
                .collect();
            Ok((params, rows))
        }
    }
}

fn cmd_bowl(cfg: &RunConfig, json: bool) -> Result<Outcome> {
    let extent = cfg.grid.extent.unwrap_or(10.0);
    let (params, rows) = bowl_samples(cfg, extent, cfg.grid.profile_samples.unwrap_or(1000))?;
    if json {
        #[derive(Serialize)]
        struct R {
            params: FlowParams,
            samples: Vec<(f64, f64, f64, f64)>,
        }
        write_json(cfg, &R { params, samples: rows })?;
    } else {
        write_csv(out(cfg)?, &["s", "f", "df", "ddf"], profile_rows(rows))?;
    }
    Ok(Outcome::Pass)
}

fn cmd_separatrix(cfg: &RunConfig, anchor: Option<f64>, tol: f64, json: bool) -> Result<Outcome> {
    let (clf, _) = classifier(cfg)?;
    let params = *clf.params();
    let anchor = anchor.unwrap_or(params.fiber_coeff());
    let (res, traj) = compute_separatrix_at(&params, &cfg.integrator(), tol, anchor)?;
    let samples: Vec<(f64, f64)> = decimate(traj.samples(), cfg.grid.trajectory_samples.unwrap_or(500))
        .into_iter()
        .map(|p| (p.s, p.w))
        .collect();
    if json {
        #[derive(Serialize)]
        struct R {
            result: SeparatrixResult,
            samples: Vec<(f64, f64)>,
        }
        write_json(cfg, &R { result: res, samples })?;
    } else {
        eprintln!(
            "separatrix: anchor {} value {} bracket width {} ({} bisection steps), anchor discrepancy {}",
            fmt_f64(res.anchor),
            fmt_f64(res.value),
            fmt_f64(res.bracket.1 - res.bracket.0),
            res.bisection_steps,
            fmt_f64(res.anchor_discrepancy)
        );
        write_csv(out(cfg)?, &["s", "w"], samples.into_iter().map(|(s, w)| vec![Cell::F(s), Cell::F(w)]))?;
    }
    Ok(Outcome::Pass)
}

fn wing_params(cfg: &RunConfig, form: WingForm) -> Result<FlowParams> {
    match form {
        WingForm::Minkowski => FlowParams::rotational(cfg.n()),
        WingForm::Euclidean => FlowParams::euclidean_rotational(cfg.n()),
    }
}

fn cmd_wing(cfg: &RunConfig, s0: f64, y0: f64, form: WingForm, spindle: bool, json: bool) -> Result<Outcome> {
    let params = wing_params(cfg, form)?;
    let wcfg = WingConfig::default();
    let wing = if spindle { build_spindle(&params, s0, &wcfg)? } else { build_wing(&params, s0, y0, &wcfg)? };
    let sol = &wing.solution;
    if json {
        #[derive(Serialize)]
        struct R<'a> {
            params: FlowParams,
            s0: f64,
            y0: f64,
            end_down: translator_core::WingEnd,
            end_up: translator_core::WingEnd,
            closed: bool,
            curve: &'a translator_core::ProfileCurve,
        }
        write_json(
            cfg,
            &R { params, s0, y0, end_down: sol.end_down, end_up: sol.end_up, closed: sol.is_closed(), curve: &wing.curve },
        )?;
    } else {
        let (a, b) = sol.domain();
        eprintln!(
            "{}: domain [{}, {}], ends {:?} / {:?}",
            if spindle { "spindle" } else { "wing" },
            fmt_f64(a),
            fmt_f64(b),
            sol.end_down,
            sol.end_up
        );
        let rows = wing.curve.samples.iter().map(|p| (p.t, p.x, p.dx, p.ddx));
        write_csv(out(cfg)?, &["y", "alpha", "dalpha", "ddalpha"], profile_rows(rows))?;
    }
    Ok(Outcome::Pass)
}

fn hybrid_grid(cfg: &RunConfig, default_h: f64) -> HybridGrid {
    let e = cfg.grid.extent.unwrap_or(2.0);
    let h = cfg.grid.h.as_ref().and_then(|v| v.first().copied()).unwrap_or(default_h);
    HybridGrid { lo: -e, hi: e, h }
}

fn cmd_hybrid(cfg: &RunConfig, hc: HybridConfig, json: bool) -> Result<Outcome> {
    let grid = hybrid_grid(cfg, 0.02);
    let (field, samples) = build_hybrid(hc, grid)?;
    let rows: Vec<(f64, f64, f64)> = (0..samples.len())
        .filter(|&k| !samples.mask[k])
        .map(|k| {
            let p = samples.coords(k);
            (p[0], p[1], samples.values[k])
        })
        .collect();
    if json {
        #[derive(Serialize)]
        struct R {
            config: HybridConfig,
            grid: HybridGrid,
            f1_even_derivatives: Vec<f64>,
            f2_even_derivatives: Vec<f64>,
            samples: Vec<(f64, f64, f64)>,
        }
        let m = field.config().order;
        write_json(
            cfg,
            &R {
                config: *field.config(),
                grid,
                f1_even_derivatives: (0..=m).filter_map(|k| field.f1().even_derivative(k)).collect(),
                f2_even_derivatives: (0..=m).filter_map(|k| field.f2().even_derivative(k)).collect(),
                samples: rows,
            },
        )?;
    } else {
        eprintln!(
            "hybrid: order {}, quadrants {}, {} nodes, coefficient relation defect {}",
            hc.order,
            hc.mask,
            rows.len(),
            fmt_f64(field.coefficient_relation_defect(hc.order))
        );
        write_csv(out(cfg)?, &["x", "y", "u"], rows.into_iter().map(|(x, y, u)| vec![Cell::F(x), Cell::F(y), Cell::F(u)]))?;
    }
    Ok(Outcome::Pass)
}

fn cmd_mesh(
    cfg: &RunConfig,
    target: MeshTarget,
    s0: f64,
    form: WingForm,
    quadrants: Option<&str>,
    theta: f64,
    provenance: &str,
) -> Result<Outcome> {
    let angular = cfg.grid.angular_samples.unwrap_or(64);
    let count = cfg.grid.profile_samples.unwrap_or(200);
    if angular < 3 || count < 2 {
        return Err(SolitonError::Config("need at least 3 angular and 2 profile samples".into()));
    }
    let mut mesh = match target {
        MeshTarget::Bowl => {
            let extent = cfg.grid.extent.unwrap_or(2.0);
            let (params, rows) = bowl_samples(cfg, extent, count)?;
            if cfg.n() != 2 {
                eprintln!("mesh: n = {} has no 3-D embedding; writing the profile CSV instead", cfg.n());
                write_csv(out(cfg)?, &["s", "f", "df", "ddf"], profile_rows(rows))?;
                return Ok(Outcome::Pass);
            }
            let profile: Vec<(f64, f64)> = rows.iter().map(|r| (r.0, r.1)).collect();
            let mut m = if cfg.action() == Action::Boost {
                boost_sweep(&profile, angular, theta)
            } else {
                revolve(&profile, angular)
            };
            m.meta("target", "bowl");
            m.meta("params", json_inline(&params));
            m.meta("class", ClassTag::Bowl.name());
            m
        }
        MeshTarget::Zwing => {
            let extent = cfg.grid.extent.unwrap_or(2.0);
            let params = FlowParams::boost(2, Sign::Plus, true)?;
            let f1 = EvenProfile::new(params, translator_core::hybrid::HYBRID_ORDER, extent)?;
            let profile = (0..count)
                .map(|i| {
                    let s = extent * (i + 1) as f64 / count as f64;
                    f1.eval(s).map(|(f, _)| (s, f)).ok_or_else(|| SolitonError::Domain(format!("s = {s}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut m = boost_sweep(&profile, angular, theta);
            m.meta("target", "zwing (Omega_1, boost orbits)");
            m.meta("params", json_inline(&params));
            m.meta("class", "TypeZ");
            m
        }
        MeshTarget::Wing | MeshTarget::Spindle => {
            let params = wing_params(cfg, form)?;
            if cfg.n() != 2 {
                eprintln!("mesh: n = {} has no 3-D embedding; writing the profile CSV instead", cfg.n());
                return cmd_wing(cfg, s0, 0.0, form, target == MeshTarget::Spindle, false);
            }
            let wcfg = WingConfig::default();
            let wing = if target == MeshTarget::Spindle {
                build_spindle(&params, s0, &wcfg)?
            } else {
                build_wing(&params, s0, 0.0, &wcfg)?
            };
            let sol = &wing.solution;
            let (a, b) = sol.domain();
            let profile = (0..count)
                .map(|i| {
                    let y = a + (b - a) * i as f64 / (count - 1) as f64;
                    sol.eval(y).map(|(al, _, _)| (al, y)).ok_or_else(|| SolitonError::Domain(format!("y = {y}")))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut m = revolve(&profile, angular);
            let name = if target == MeshTarget::Spindle { "spindle" } else { "wing" };
            m.meta("target", name);
            m.meta("params", json_inline(&params));
            m.meta("class", name);
            m.meta("apex", format!("alpha = {} at y = 0", fmt_f64(s0)));
            if sol.is_closed() {
                let gap = profile[0].0.max(profile[profile.len() - 1].0);
                m.meta("closure_gap", fmt_f64(gap));
            }
            m
        }
        MeshTarget::Hybrid => {
            let hc = hybrid_config(None, quadrants, false)?;
            let grid = hybrid_grid(cfg, 0.02);
            let (field, samples) = build_hybrid(hc, grid)?;
            let axis = samples.axes[0];
            let xs: Vec<f64> = (0..axis.len).map(|i| axis.coord(i)).collect();
            let len = axis.len;
            let value = |i: usize, j: usize| {
                let k = samples.flat_index(&[i, j]);
                (!samples.mask[k]).then_some(samples.values[k])
            };
            let (mut m, index) = height_field(&xs, &xs, value);
            if len % 2 == 1 {
                let diag: Vec<Option<usize>> = (0..len).map(|i| index[i][i]).collect();
                let anti: Vec<Option<usize>> = (0..len).map(|i| index[i][len - 1 - i]).collect();
                for line in [diag, anti] {
                    for run in line.split(|v| v.is_none()) {
                        if run.len() >= 2 {
                            m.lines.push(run.iter().map(|v| v.unwrap()).collect());
                        }
                    }
                }
            }
            m.meta("target", "hybrid");
            m.meta("params", format!("order {}, quadrants {}", field.config().order, hc.mask));
            m.meta("class", "Hybrid");
            m.meta("grid", format!("[{}, {}]^2, h = {}", grid.lo, grid.hi, grid.h));
            m.meta("cone_polyline", "x = y and x = -y, as OBJ l elements");
            m
        }
    };
    mesh.meta("provenance", provenance);
    mesh.write_obj(out(cfg)?)?;
    Ok(Outcome::Pass)
}

fn json_inline<T: Serialize>(v: &T) -> String {
    serde_json::to_string(v).unwrap_or_default()
}

#[derive(Debug, Serialize)]
pub struct VerifyReport {
    pub target: String,
    pub h: Vec<f64>,
    pub max_residual: Vec<f64>,
    pub mean_residual: Vec<f64>,
    pub convergence: ConvergenceReport,
    pub smoothness: Vec<SmoothnessReport>,
    pub jump_decay: Vec<JumpDecay>,
    pub notes: Vec<String>,
    pub pass: bool,
}

fn three_h(cfg: &RunConfig) -> Result<[f64; 3]> {
    let h = cfg.grid.h.clone().unwrap_or_else(|| vec![0.04, 0.02, 0.01]);
    <[f64; 3]>::try_from(h.as_slice())
        .map_err(|_| SolitonError::Config(format!("verification needs three spacings h, h/2, h/4; got {h:?}")))
}

fn residual_rows(fields: &[GridField]) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let mut max = Vec::new();
    let mut mean = Vec::new();
    let mut values = Vec::new();
    for f in fields {
        let r = residual_fund_eq(f)?;
        max.push(r.max);
        mean.push(r.mean);
        values.extend(r.field.iter().copied().filter(|x| x.is_finite()));
    }
    Ok((max, mean, values))
}

pub fn verify_report(cfg: &RunConfig, target: VerifyTarget, order: Option<usize>, hc: HybridConfig) -> Result<VerifyReport> {
    let hs = three_h(cfg)?;
    let e = cfg.grid.extent.unwrap_or(2.0);
    let mut notes = Vec::new();
    let mut smoothness = Vec::new();
    let mut decay = Vec::new();
    let (max, mean) = match target {
        VerifyTarget::Bowl => {
            let n = cfg.n.unwrap_or(2);
            let params = FlowParams::rotational(n)?;
            let ic = cfg.integrator().tightened(100.0);
            let fields = hs
                .iter()
                .map(|&h| radial_bowl_field(&params, -e, e, h, &ic))
                .collect::<Result<Vec<_>>>()?;
            let (max, mean, _) = residual_rows(&fields)?;
            notes.push(format!("radial bowl u = f_B(|x|) on [-{e}, {e}]^{n}, axis tube 3h masked"));
            (max, mean)
        }
        VerifyTarget::Hybrid => {
            let fields = hs
                .iter()
                .map(|&h| hybrid_residual_field(hc, -e, e, h))
                .collect::<Result<Vec<_>>>()?;
            let (max, mean, _) = residual_rows(&fields)?;
            notes.push(format!("hybrid on [-{e}, {e}]^2, quadrants {}, cone tube 3h masked", hc.mask));
            if let Some(k) = order {
                for &h in &hs {
                    let (_, f) = build_hybrid(hc, HybridGrid { lo: -e, hi: e, h })?;
                    smoothness.push(smoothness_scan(&f, &[ScanLine::Diagonal, ScanLine::AntiDiagonal], k)?);
                }
                let kmax = smoothness.iter().map(|r| r.jumps.len()).min().unwrap_or(0);
                decay = (0..kmax).filter_map(|k| jump_decay(&smoothness, k, JUMP_FLOOR)).collect();
                for r in &smoothness {
                    notes.extend(r.warnings.iter().cloned());
                }
            }
            (max, mean)
        }
        VerifyTarget::Const => {
            let fields = hs
                .iter()
                .map(|&h| constant_field(2, -e, e, h, vec![Sign::Plus; 2], Sign::Plus, 0.0))
                .collect::<Result<Vec<_>>>()?;
            let (max, mean, values) = residual_rows(&fields)?;
            if values.iter().all(|&r| r == -1.0) {
                notes.push("R = -1 at every node: constants are not solitons".into());
            }
            (max, mean)
        }
        VerifyTarget::Quadratic => {
            let a = [0.3, -0.1];
            let sig = vec![Sign::Plus, Sign::Minus];
            let mut max = Vec::new();
            let mut mean = Vec::new();
            for &h in &hs {
                let f = quadratic_field(&a, -e, e, h, sig.clone(), Sign::Plus)?;
                let (div, _, eps) = divergence_term(&f, 1e-6)?;
                let errs: Vec<f64> = (0..f.len())
                    .filter(|&k| div[k].is_finite())
                    .map(|k| (div[k] - quadratic_divergence(&a, &sig, Sign::Plus, eps, &f.coords(k))).abs())
                    .collect();
                max.push(errs.iter().copied().fold(0.0, f64::max));
                mean.push(errs.iter().sum::<f64>() / errs.len().max(1) as f64);
            }
            notes.push("discrete flat divergence of u = 0.3 x^2 - 0.1 y^2 on L^2 against its closed form".into());
            (max, mean)
        }
    };
    let convergence = convergence_order_from(hs, [max[0], max[1], max[2]]);
    let pass = convergence.order_within(ORDER_BAND.0, ORDER_BAND.1) && decay.iter().all(|d| d.decays(ORDER_BAND.0));
    let name = match target {
        VerifyTarget::Bowl => "bowl",
        VerifyTarget::Hybrid if hc.mismatched => "hybrid (mismatched)",
        VerifyTarget::Hybrid => "hybrid",
        VerifyTarget::Const => "const",
        VerifyTarget::Quadratic => "quadratic",
    };
    Ok(VerifyReport {
        target: name.into(),
        h: hs.to_vec(),
        max_residual: max,
        mean_residual: mean,
        convergence,
        smoothness,
        jump_decay: decay,
        notes,
        pass,
    })
}

fn opt(p: Option<f64>) -> String {
    p.map_or_else(|| "undefined".into(), |p| format!("{p:.3}"))
}

fn cmd_verify(cfg: &RunConfig, target: VerifyTarget, order: Option<usize>, hc: HybridConfig, json: bool) -> Result<Outcome> {
    let rep = verify_report(cfg, target, order, hc)?;
    if json {
        write_json(cfg, &rep)?;
    } else {
        let mut w = out(cfg)?;
        writeln!(w, "target: {}", rep.target)?;
        for note in &rep.notes {
            writeln!(w, "note: {note}")?;
        }
        writeln!(w, "{:<24} {:<24} {:<24}", "h", "max|R|", "mean|R|")?;
        for i in 0..3 {
            writeln!(
                w,
                "{:<24} {:<24} {:<24}",
                fmt_f64(rep.h[i]),
                fmt_f64(rep.max_residual[i]),
                fmt_f64(rep.mean_residual[i])
            )?;
        }
        writeln!(w, "order p = {} (cross-check {})", opt(rep.convergence.order), opt(rep.convergence.order_cross))?;
        if let Some(n) = &rep.convergence.note {
            writeln!(w, "note: {n}")?;
        }
        if !rep.smoothness.is_empty() {
            writeln!(w, "smoothness jumps across the lightcone")?;
            write!(w, "{:<8}", "order")?;
            for r in &rep.smoothness {
                write!(w, " {:<24}", format!("h = {}", r.h))?;
            }
            writeln!(w, " decay")?;
            for d in &rep.jump_decay {
                write!(w, "{:<8}", d.order)?;
                for j in &d.jumps {
                    write!(w, " {:<24}", fmt_f64(*j))?;
                }
                let ps: Vec<String> = d.orders.iter().map(|p| p.map_or("floor".into(), |p| format!("{p:.3}"))).collect();
                writeln!(w, " {}", ps.join(" "))?;
            }
        }
        writeln!(w, "result: {}", if rep.pass { "PASS" } else { "FAIL" })?;
        w.flush()?;
    }
    Ok(if rep.pass { Outcome::Pass } else { Outcome::Fail })
}
