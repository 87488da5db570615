use std::fs;
use std::path::Path;

use billiards::cells::{verify_stretching, Half, StretchGate, StretchReport};
use billiards::counting::{check_lower_bounds, BoundConstants, ChainPolytope};
use billiards::dynamics::{iterate, PhasePoint};
use billiards::polygon::{CircularPolygon, PolygonRecord, TOL_CLOSURE};
use billiards::realization::{asymptotic_orbit, find_periodic, nodal_length, nodal_orbit, InitStrategy, Orbit};
use billiards::spectrum::{asymptotic_constant, spectrum_interval};
use billiards::symbolic::{Alphabet, ChiPolicy};
use serde::Serialize;
use serde_json::json;

use crate::error::CliError;
use crate::out;
use crate::output::{fmt17, write_csv, write_json, write_orbit_csv};
use crate::{
    ChiArgs, ChiChoice, CountCmd, GateChoice, HalfChoice, InitChoice, OrbitCmd, PolygonCmd, Preset, SpectrumArgs,
    StretchArgs,
};

/// Longest nodal orbit the CLI will iterate.
const MAX_NODAL_PERIOD: u64 = 10_000_000;

pub fn load_polygon(path: &Path) -> Result<CircularPolygon, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::usage("Io", format!("{}: {e}", path.display())))?;
    let rec: PolygonRecord = serde_json::from_str(&text)?;
    Ok(CircularPolygon::try_from(rec)?)
}

fn save_polygon(poly: &CircularPolygon, output: Option<&Path>) -> Result<(), CliError> {
    let rec = PolygonRecord::from(poly);
    match output {
        Some(path) => {
            write_json(path, &rec)?;
            out!("wrote {} ({} arcs, length {})", path.display(), poly.k(), fmt17(poly.total_length()));
        }
        None => out!("{}", serde_json::to_string_pretty(&rec)?),
    }
    Ok(())
}

fn resolve_chi(poly: &CircularPolygon, args: &ChiArgs) -> Result<Vec<i64>, CliError> {
    if let Some(chi) = &args.chi {
        if chi.len() != poly.k() || chi.iter().any(|&c| c < 2) {
            return Err(CliError::usage(
                "InvalidParameter",
                format!("--chi needs {} values, each at least 2", poly.k()),
            ));
        }
        return Ok(chi.clone());
    }
    let policy = match args.chi_policy {
        ChiChoice::Geometric => ChiPolicy::Geometric,
        ChiChoice::HypothesisX => ChiPolicy::HypothesisX,
    };
    Ok(Alphabet::new(poly, policy)?.chi)
}

pub fn polygon(cmd: PolygonCmd) -> Result<(), CliError> {
    match cmd {
        PolygonCmd::Preset(p) => {
            let (poly, out) = match p {
                Preset::PseudoEllipse { alpha, r, big_r, output } => {
                    (CircularPolygon::pseudo_ellipse(alpha, r, big_r)?, output)
                }
                Preset::MossEgg { r, output } => (CircularPolygon::moss_egg(r)?, output),
                Preset::TriangleSixgon { a, b, c, r, output } => (
                    CircularPolygon::triangle_sixgon(a, b, c, r)?,
                    output,
                ),
            };
            save_polygon(&poly, out.as_deref())
        }
        PolygonCmd::Validate { file } => validate(&file),
    }
}

fn validate(file: &Path) -> Result<(), CliError> {
    let text = fs::read_to_string(file).map_err(|e| CliError::usage("Io", format!("{}: {e}", file.display())))?;
    let rec: PolygonRecord = serde_json::from_str(&text)?;
    let arcs = rec.arcs.len();
    let poly = match CircularPolygon::try_from(rec) {
        Ok(p) => p,
        Err(e) => {
            out!("{:<22} {:>24}  {}", "check", "value", "status");
            out!("{:<22} {:>24}  FAIL", "construction", e.to_string());
            return Err(e.into());
        }
    };
    let c = poly.closure_residuals();
    let status = |v: f64| if v <= TOL_CLOSURE { "pass" } else { "FAIL" };
    out!("{:<22} {:>24}  {}", "check", "value", "status");
    out!("{:<22} {:>24}  pass", "arc count", arcs);
    out!("{:<22} {:>24}  {}", "angle closure", fmt17(c.angle), status(c.angle));
    out!("{:<22} {:>24}  {}", "vector closure", fmt17(c.vector), status(c.vector));
    out!("{:<22} {:>24}  {}", "node continuity", fmt17(c.node), status(c.node));
    out!("{:<22} {:>24}  {}", "tangent continuity", fmt17(c.tangent), status(c.tangent));
    let distinct = (0..poly.k()).all(|j| poly.radius(j) != poly.radius((j + 1) % poly.k()));
    out!("{:<22} {:>24}  {}", "distinct radii", "", if distinct { "pass" } else { "FAIL" });
    match poly.rational_structure(1e-12) {
        Ok(rs) => out!("{:<22} {:>24}  info", "rational (M)", rs.total),
        Err(_) => out!("{:<22} {:>24}  info", "rational (M)", "none"),
    }
    if c.max() > TOL_CLOSURE || !distinct {
        return Err(CliError::violation("ClosureViolation", format!("largest residual {:e}", c.max())));
    }
    Ok(())
}

fn export_orbit(poly: &CircularPolygon, orbit: &Orbit, csv: Option<&Path>) -> Result<(), CliError> {
    if let Some(path) = csv {
        write_orbit_csv(path, poly, orbit)?;
        out!("wrote {} ({} rows)", path.display(), orbit.steps());
    }
    Ok(())
}

#[derive(Serialize)]
struct NodalSummary {
    i: u64,
    q: usize,
    closure: f64,
    theta_drift: f64,
    length: f64,
    nodal_length: f64,
    scaled_defect: f64,
    nodal_constant: f64,
}

pub fn orbit(cmd: OrbitCmd) -> Result<(), CliError> {
    match cmd {
        OrbitCmd::Nodal { file, i, csv, json, tol_closure } => {
            if i == 0 || tol_closure.is_nan() || tol_closure <= 0.0 {
                return Err(CliError::usage("InvalidParameter", "--i and --tol-closure must be positive"));
            }
            let poly = load_polygon(&file)?;
            let rs = poly.rational_structure(1e-12)?;
            if rs.total.saturating_mul(i) > MAX_NODAL_PERIOD {
                return Err(CliError::usage(
                    "PeriodTooLarge",
                    format!(
                        "nodal period {} x {i} exceeds {MAX_NODAL_PERIOD}; central angles are only approximately rational multiples of 2π",
                        rs.total
                    ),
                ));
            }
            let orbit = nodal_orbit(&poly, i)?;
            let q = orbit.steps();
            let theta0 = orbit.points[0].theta;
            let gamma = poly.total_length();
            let summary = NodalSummary {
                i,
                q,
                closure: orbit.closure_residual.unwrap_or(f64::NAN),
                theta_drift: orbit.points.iter().map(|p| (p.theta - theta0).abs()).fold(0.0, f64::max),
                length: orbit.length(),
                nodal_length: nodal_length(&poly, &rs, i),
                scaled_defect: (orbit.length() - gamma) * (q * q) as f64,
                nodal_constant: -std::f64::consts::PI.powi(2) * gamma / 6.0,
            };
            export_orbit(&poly, &orbit, csv.as_deref())?;
            if let Some(path) = json {
                write_json(&path, &json!({"summary": summary, "orbit": orbit}))?;
            }
            out!(
                "q = {q}  closure = {:e}  length = {}  (L-|Gamma|)q^2 = {}",
                summary.closure,
                fmt17(summary.length),
                fmt17(summary.scaled_defect)
            );
            if summary.closure.is_nan() || summary.closure > tol_closure {
                return Err(CliError::numeric(
                    "ClosureFailed",
                    format!("closure {:e} exceeds {tol_closure:e}", summary.closure),
                ));
            }
            Ok(())
        }
        OrbitCmd::Iterate { file, phi, theta, steps, csv } => {
            let poly = load_polygon(&file)?;
            let x0 = PhasePoint::new(phi, theta);
            let recs = iterate(&poly, x0, steps)?;
            let last = recs.last().map_or(x0, |r| r.post);
            if let Some(path) = csv {
                let rows = recs.iter().enumerate().map(|(n, r)| {
                    let z = poly.point_at(r.pre.phi);
                    vec![
                        n.to_string(),
                        fmt17(r.pre.phi),
                        fmt17(r.pre.theta),
                        fmt17(z.re),
                        fmt17(z.im),
                        r.arc_from.to_string(),
                        fmt17(r.link_length),
                    ]
                });
                write_csv(&path, &crate::output::ORBIT_HEADER, rows.collect::<Vec<_>>())?;
                out!("wrote {} ({} rows)", path.display(), recs.len());
            }
            out!("final phi = {}  theta = {}", fmt17(last.phi), fmt17(last.theta));
            Ok(())
        }
        OrbitCmd::Periodic { file, impacts, init, csv, json } => {
            let poly = load_polygon(&file)?;
            if impacts.len() != poly.k() || impacts.iter().any(|&x| x < 1) {
                return Err(CliError::usage(
                    "InvalidParameter",
                    format!("--impacts needs {} positive counts", poly.k()),
                ));
            }
            let init = match init {
                InitChoice::EqualSpacing => InitStrategy::EqualSpacing,
                InitChoice::Ascent => InitStrategy::Ascent,
            };
            let p = find_periodic(&poly, &impacts, init)?;
            let q = p.period();
            let defect = (p.orbit.length() - poly.total_length()) * (q * q) as f64;
            export_orbit(&poly, &p.orbit, csv.as_deref())?;
            if let Some(path) = json {
                write_json(&path, &p)?;
            }
            out!(
                "q = {q}  length = {}  (L-|Gamma|)q^2 = {}  residual = {:e}",
                fmt17(p.orbit.length()),
                fmt17(defect),
                p.orbit.closure_residual.unwrap_or(f64::NAN)
            );
            Ok(())
        }
        OrbitCmd::Asymptotic { file, n, turns, chi, csv, json } => {
            let poly = load_polygon(&file)?;
            let chi = resolve_chi(&poly, &chi)?;
            let alphabet = Alphabet::with_chi(&poly, chi);
            let (realized, cert) = asymptotic_orbit(&poly, &alphabet, n, turns)?;
            export_orbit(&poly, &realized.orbit, csv.as_deref())?;
            if let Some(path) = json {
                write_json(
                    &path,
                    &json!({
                        "certificate": cert,
                        "shooting_residual": realized.shooting_residual,
                        "min_margin": realized.min_margin,
                        "node_index": realized.node_index,
                        "itinerary": realized.orbit.itinerary,
                    }),
                )?;
            }
            out!(
                "impacts = {}  l*theta_l/theta_0 in [{}, {}]  n*d- = {}  n*d+ = {}",
                realized.orbit.steps(),
                fmt17(cert.min_ratio),
                fmt17(cert.max_ratio),
                fmt17(n as f64 * cert.constants.d_minus),
                fmt17(n as f64 * cert.constants.d_plus)
            );
            if !(cert.ratio_bounds_hold && cert.inverse_speed_holds) {
                return Err(CliError::violation("SpeedBoundViolation", "linear speed bounds fail"));
            }
            Ok(())
        }
    }
}

fn half(h: HalfChoice) -> Half {
    match h {
        HalfChoice::Minus => Half::Minus,
        HalfChoice::Plus => Half::Plus,
    }
}

pub fn stretch(a: StretchArgs) -> Result<(), CliError> {
    let poly = load_polygon(&a.file)?;
    let k = poly.k();
    if a.j == 0 || a.j > k {
        return Err(CliError::usage("InvalidParameter", format!("--j must lie in 1..={k}")));
    }
    let chi = resolve_chi(&poly, &a.chi)?;
    let gate = match a.gate {
        GateChoice::Upsilon => StretchGate::Upsilon,
        GateChoice::Endpoint => StretchGate::EndpointInequalities,
    };
    let both = [HalfChoice::Minus, HalfChoice::Plus];
    let sources = a.sigma.map_or(both.to_vec(), |s| vec![s]);
    let targets = a.sigma_prime.map_or(both.to_vec(), |s| vec![s]);
    let mut reports: Vec<StretchReport> = Vec::new();
    for &s in &sources {
        for &t in &targets {
            let r = verify_stretching(&poly, &chi, a.j - 1, a.n, a.n_prime, half(s), half(t), a.paths, a.seed, gate)?;
            out!(
                "j = {} n = {} n' = {} sigma = {} sigma' = {} paths = {} seed = {} success_fraction = {}",
                a.j,
                a.n,
                a.n_prime,
                r.sigma.symbol(),
                r.sigma_prime.symbol(),
                r.paths,
                r.seed,
                r.success_fraction
            );
            reports.push(r);
        }
    }
    if let Some(path) = &a.output {
        if reports.len() == 1 {
            write_json(path, &reports[0])?;
        } else {
            write_json(path, &json!({"seed": a.seed, "reports": reports}))?;
        }
    }
    if let Some(r) = reports.iter().find(|r| r.success_fraction < 1.0) {
        return Err(CliError::violation(
            "StretchingFailed",
            format!("success fraction {} for sigma = {}", r.success_fraction, r.sigma.symbol()),
        ));
    }
    Ok(())
}

pub fn count(cmd: CountCmd) -> Result<(), CliError> {
    match cmd {
        CountCmd::Gq { file, p, q, chi } => {
            if q < 0 {
                return Err(CliError::usage("InvalidParameter", "--q must be non-negative"));
            }
            let poly = load_polygon(&file)?;
            let chain = ChainPolytope::new(&poly, resolve_chi(&poly, &chi)?, p)?;
            out!("{}", chain.count(q)?);
            Ok(())
        }
        CountCmd::CheckBounds { file, p, q_max, chi, csv } => {
            if q_max < 1 {
                return Err(CliError::usage("InvalidParameter", "--q-max must be positive"));
            }
            let poly = load_polygon(&file)?;
            let chain = ChainPolytope::new(&poly, resolve_chi(&poly, &chi)?, p)?;
            // a violation maps to exit code 4
            let rows = check_lower_bounds(&chain, 1..=q_max)?;
            let opt = |v: Option<f64>| v.map_or(String::new(), fmt17);
            if let Some(path) = csv {
                write_csv(
                    &path,
                    &["q", "G_q", "bound_a", "bound_b_applicable", "ratio"],
                    rows.iter()
                        .map(|r| {
                            vec![
                                r.q.to_string(),
                                r.g_q.clone(),
                                opt(r.bound_a),
                                r.bound_b_applicable.to_string(),
                                opt(r.ratio),
                            ]
                        })
                        .collect::<Vec<_>>(),
                )?;
                out!("wrote {} ({} rows)", path.display(), rows.len());
            }
            let checked = rows.iter().filter(|r| r.bound_a.is_some()).count();
            out!("q <= {q_max}: {checked} values of q under the polynomial bound, no violation");
            Ok(())
        }
        CountCmd::Constants { file, p, chi, output } => {
            let poly = load_polygon(&file)?;
            let chain = ChainPolytope::new(&poly, resolve_chi(&poly, &chi)?, p)?;
            let c = BoundConstants::for_polytope(&chain);
            let body = json!({"chi": chain.chi, "constants": c});
            match output {
                Some(path) => write_json(&path, &body)?,
                None => out!("{}", serde_json::to_string_pretty(&crate::output::versioned(&body)?)?),
            }
            Ok(())
        }
    }
}

pub fn spectrum(a: SpectrumArgs) -> Result<(), CliError> {
    let poly = load_polygon(&a.file)?;
    let interval = spectrum_interval(&poly)?;
    out!(
        "c1_minus = {}  c1_plus = {}  nodal = {}",
        fmt17(interval.c1_minus),
        fmt17(interval.c1_plus),
        fmt17(interval.nodal_constant)
    );
    if let Some(path) = &a.json {
        write_json(path, &interval)?;
    }
    if a.qs.iter().any(|&q| q < poly.k() as i64) {
        return Err(CliError::usage("InvalidParameter", "every q must be at least the number of arcs"));
    }
    if a.qs.is_empty() {
        return Ok(());
    }
    let target = a.target.unwrap_or(interval.c1_plus);
    let fit = asymptotic_constant(&poly, target, &a.qs)?;
    if let Some(path) = &a.csv {
        write_csv(
            path,
            &["q", "L", "defect_q2", "target_c"],
            fit.rows
                .iter()
                .map(|r| vec![r.q.to_string(), fmt17(r.length), fmt17(r.scaled_defect), fmt17(r.target)])
                .collect::<Vec<_>>(),
        )?;
    }
    for r in &fit.rows {
        out!("q = {}  impacts = {:?}  (L-|Gamma|)q^2 = {}", r.q, r.impacts, fmt17(r.scaled_defect));
    }
    out!("extrapolated constant = {}  target = {}", fmt17(fit.constant), fmt17(target));
    Ok(())
}
