use std::f64::consts::{FRAC_PI_2, PI, TAU};

use parindex::dynamics::{integrate_collision, CollisionState, HeteroclinicOrbit};
use parindex::equilibria::find_equilibria;
use parindex::indices::{
    homothetic_morse, maslov_of_v, maslov_of_x, normalized_orbit, verify_theorems, Count, CountOptions, CrossingRecord,
    IndexReport,
};
use parindex::potential::AnglePotential;
use parindex::Error;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::RunConfig;
use crate::output::{num, opt, Out};
use crate::spec::{build, default_suite, OrbitSpec, SuiteEntry};

pub type CmdResult = Result<bool, String>;

// --------------------------------------------------------------- equilibria

pub fn equilibria(cfg: &RunConfig, out: &Out) -> CmdResult {
    let pot = &cfg.potential;
    match find_equilibria(pot) {
        Ok(eqs) => {
            println!("{:>6} {:>10} {:>10} {:>11} {:>11} {:>22} {:>22}  class", "psi0", "theta0", "U", "U''", "delta", "lambda-", "lambda+");
            for e in &eqs {
                println!(
                    "{:>+6.3} {:>10.6} {:>10.6} {:>11.6} {:>11.6} {:>22} {:>22}  {:?}",
                    e.psi0,
                    e.theta0,
                    e.u_value,
                    e.u_theta_theta,
                    e.delta,
                    format!("{:.6}{:+.6}i", e.lambda_minus.re, e.lambda_minus.im),
                    format!("{:.6}{:+.6}i", e.lambda_plus.re, e.lambda_plus.im),
                    e.classification
                );
            }
            let p = out.json("equilibria.json", json!({"potential": pot.descriptor(), "continuum": false, "equilibria": eqs}))?;
            eprintln!("wrote {}", p.display());
        }
        Err(Error::ContinuumEquilibria) => {
            println!("continuum of equilibria: the profile is constant, every (±π/2, θ) is a rest point");
            out.json("equilibria.json", json!({"potential": pot.descriptor(), "continuum": true, "equilibria": []}))?;
        }
        Err(e) => return Err(e.to_string()),
    }
    Ok(true)
}

// ----------------------------------------------------------------- portrait

pub struct PortraitArgs {
    pub theta_n: usize,
    pub psi_n: usize,
    pub span: f64,
    pub svg: bool,
}

pub fn portrait(cfg: &RunConfig, out: &Out, a: &PortraitArgs) -> CmdResult {
    let n = a.theta_n * a.psi_n;
    if n == 0 || n > 10_000 {
        return Err(format!("grid of {n} seeds; need 1 to 10000"));
    }
    if !(a.span > 0.0) {
        return Err("span must be positive".into());
    }
    let pot = &cfg.potential;
    let seeds: Vec<(f64, f64)> = (0..a.theta_n)
        .flat_map(|i| {
            (0..a.psi_n).map(move |j| {
                let th = -PI + (i as f64 + 0.5) * TAU / a.theta_n as f64;
                let ps = -FRAC_PI_2 + (j as f64 + 0.5) * PI / a.psi_n as f64;
                (th, ps)
            })
        })
        .collect();
    let tol = cfg.integrator.tol.max(1e-10);
    let lines: Vec<Result<Value, String>> = seeds
        .par_iter()
        .map(|&(th, ps)| {
            let s0 = CollisionState { psi: ps, theta: th };
            let fwd = integrate_collision(pot, s0, (0.0, a.span), tol).map_err(|e| e.to_string())?;
            let bwd = integrate_collision(pot, s0, (0.0, -a.span), tol).map_err(|e| e.to_string())?;
            let pts: Vec<[f64; 2]> = bwd.states.iter().chain(fwd.states.iter().skip(1)).map(|s| [s.theta, s.psi]).collect();
            Ok(json!({"seed": [th, ps], "points": pts}))
        })
        .collect();
    let mut polylines = Vec::new();
    for (r, (th, ps)) in lines.into_iter().zip(&seeds) {
        match r {
            Ok(v) => polylines.push(v),
            Err(e) => eprintln!("seed (theta {th:.4}, psi {ps:.4}) skipped: {e}"),
        }
    }
    let eqs = find_equilibria(pot).unwrap_or_default();
    let glyphs: Vec<Value> =
        eqs.iter().map(|e| json!({"theta": e.theta0, "psi": e.psi0, "classification": e.classification})).collect();
    let body = json!({
        "potential": pot.descriptor(),
        "span": a.span,
        "coordinates": ["theta", "psi"],
        "equilibria": glyphs,
        "polylines": polylines,
    });
    let p = out.json("portrait.json", body.clone())?;
    eprintln!("wrote {} ({} polylines)", p.display(), polylines.len());
    if a.svg {
        let p = out.text("portrait.svg", &svg(&body, out))?;
        eprintln!("wrote {}", p.display());
    }
    Ok(true)
}

/// Polylines drawn on the torus [−π, π]², cut where the wrapped curve jumps.
fn svg(body: &Value, out: &Out) -> String {
    let (w, h) = (720.0, 720.0);
    let map = |th: f64, ps: f64| {
        let (x, y) = (parindex::angle::wrap_pi(th), parindex::angle::wrap_pi(ps));
        ((x + PI) / TAU * w, h - (y + PI) / TAU * h)
    };
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <!-- schema parindex/1, configHash {}, seed {} -->\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
        out.hash(),
        out.seed()
    );
    for line in body["polylines"].as_array().into_iter().flatten() {
        let mut seg: Vec<(f64, f64)> = Vec::new();
        let flush = |seg: &mut Vec<(f64, f64)>, s: &mut String| {
            if seg.len() > 1 {
                let pts: Vec<String> = seg.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
                s.push_str(&format!(
                    "<polyline fill=\"none\" stroke=\"#345\" stroke-width=\"0.6\" points=\"{}\"/>\n",
                    pts.join(" ")
                ));
            }
            seg.clear();
        };
        for p in line["points"].as_array().into_iter().flatten() {
            let (x, y) = map(p[0].as_f64().unwrap_or(0.0), p[1].as_f64().unwrap_or(0.0));
            if let Some(&(px, py)) = seg.last() {
                if (x - px).abs() > w / 2.0 || (y - py).abs() > h / 2.0 {
                    flush(&mut seg, &mut s);
                }
            }
            seg.push((x, y));
        }
        flush(&mut seg, &mut s);
    }
    for e in body["equilibria"].as_array().into_iter().flatten() {
        let (x, y) = map(e["theta"].as_f64().unwrap_or(0.0), e["psi"].as_f64().unwrap_or(0.0));
        let fill = match e["classification"].as_str().unwrap_or("") {
            "saddle" => "#c33",
            "stableNode" | "stableFocus" => "#36c",
            "unstableNode" | "unstableFocus" => "#3a3",
            _ => "#888",
        };
        s.push_str(&format!("<circle cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"4\" fill=\"{fill}\"/>\n"));
    }
    s.push_str("</svg>\n");
    s
}

// -------------------------------------------------------------------- orbit

fn describe(o: &HeteroclinicOrbit) -> String {
    format!(
        "({:+.0}π/2, {:.6}) -> ({:+.0}π/2, {:.6}), type {:?}, directions {:?}/{:?}",
        o.source.eq.psi0.signum(),
        o.source.eq.theta0,
        o.sink.eq.psi0.signum(),
        o.sink.eq.theta0,
        o.het_type,
        o.source_direction,
        o.sink_direction
    )
}

pub fn orbit(cfg: &RunConfig, out: &Out, spec: &OrbitSpec) -> CmdResult {
    let (pot, o) = build(spec, &cfg.potential, cfg)?;
    println!("{}", describe(&o));
    let tr = &o.trajectory;
    let v = tr.v(&pot).map_err(|e| e.to_string())?;
    let mut rows = Vec::with_capacity(tr.tau_samples.len());
    for (k, (t, s)) in tr.tau_samples.iter().zip(&tr.states).enumerate() {
        let u = (2.0 * pot.u_value(s.theta).map_err(|e| e.to_string())?).sqrt() * s.psi.cos();
        let r = tr.r_profile.as_ref().map(|r| r[k]);
        let time = tr.t_profile.as_ref().and_then(|t| t[k]);
        rows.push(vec![num(*t), num(s.psi), num(s.theta), num(v[k]), num(u), opt(r), opt(time)]);
    }
    let mut side = o.sidecar();
    side["orbitSpec"] = json!(spec);
    let p = out.csv("orbit.csv", &["tau", "psi", "theta", "v", "u", "r", "t"], &rows, side)?;
    eprintln!("wrote {} ({} samples)", p.display(), rows.len());
    Ok(true)
}

// ------------------------------------------------------------------ indices

fn crossing_rows(path: &str, cs: &[CrossingRecord], rows: &mut Vec<Vec<String>>) {
    for c in cs {
        rows.push(vec![
            path.into(),
            num(c.tau),
            c.dimension.to_string(),
            c.signature.to_string(),
            c.refined_by_bisection.to_string(),
            c.tangential.to_string(),
        ]);
    }
}

fn print_report(name: &str, r: &IndexReport) {
    let verdicts: Vec<String> = r.theorem_verdicts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!(
        "{name}: i = {}, mu(x) = {}, m- = {}, [{}]",
        show_count(Some(r.oscillation)),
        serde_json::to_string(&r.maslov_of_x).unwrap_or_default(),
        show_count(r.morse_by_hessian),
        verdicts.join(", ")
    );
    for e in &r.errors {
        println!("    error: {e}");
    }
}

fn show_count(c: Option<Count>) -> String {
    match c {
        Some(Count::Finite(n)) => n.to_string(),
        Some(Count::Saturated { saturated }) => format!("SATURATED({saturated})"),
        None => "-".into(),
    }
}

pub fn indices(cfg: &RunConfig, out: &Out, spec: &OrbitSpec) -> CmdResult {
    let (pot, o) = build(spec, &cfg.potential, cfg)?;
    let settings = cfg.index_settings();
    let rep = verify_theorems(&o, &settings);
    print_report(&describe(&o), &rep);
    let mut rows = Vec::new();
    let (no, _) = normalized_orbit(&o).map_err(|e| e.to_string())?;
    let (a, b) = no.main_range();
    let opts = CountOptions { step: settings.count_step, ..Default::default() };
    match maslov_of_v(&no, a, b, &opts) {
        Ok(m) => crossing_rows("V", &m.crossings, &mut rows),
        Err(e) => eprintln!("crossings of V: {e}"),
    }
    if let Ok(m) = maslov_of_x(&o, &settings) {
        crossing_rows("V-", &m.crossings, &mut rows);
    }
    let body = json!({"potential": pot.descriptor(), "orbitSpec": spec, "settings": settings, "report": rep});
    let p = out.json("indices.json", body)?;
    out.csv(
        "crossings.csv",
        &["path", "tau", "dimension", "signature", "refinedByBisection", "tangential"],
        &rows,
        json!({"orbitSpec": spec}),
    )?;
    eprintln!("wrote {}", p.display());
    Ok(rep.all_verdicts_hold())
}

// --------------------------------------------------------------- homothetic

pub fn homothetic(cfg: &RunConfig, out: &Out, theta0: f64, lengths: &[f64], nodes: usize) -> CmdResult {
    let pot = &cfg.potential;
    let delta = pot.delta(theta0).map_err(|e| e.to_string())?;
    let cap = cfg.indices.cap;
    let mut entries = Vec::new();
    println!("theta0 = {theta0}, delta = {delta:.6}");
    for &l in lengths {
        let n = nodes.max((400.0 * l * delta.abs().sqrt()) as usize);
        let got = homothetic_morse(pot, theta0, l, n).map_err(|e| e.to_string())?;
        let closed = if delta >= 0.0 { 0 } else { (l * (-delta).sqrt() / TAU).floor() as i64 };
        let count = if got as usize >= cap { Count::Saturated { saturated: cap } } else { Count::Finite(got) };
        println!("  L = {l}: m- = {} (raw {got}), closed form {closed}", show_count(Some(count)));
        entries.push(json!({"length": l, "nodes": n, "negativeCount": got, "count": count, "closedForm": closed}));
    }
    let body = json!({"potential": pot.descriptor(), "theta0": theta0, "delta": delta, "entries": entries});
    let p = out.json("homothetic.json", body)?;
    eprintln!("wrote {}", p.display());
    Ok(true)
}

// -------------------------------------------------------------------- sweep

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SweepParam {
    Mu,
    M,
    Alpha,
}

fn swept(cfg: &RunConfig, p: SweepParam, x: f64) -> parindex::Result<AnglePotential> {
    let al = cfg.potential.alpha();
    match p {
        SweepParam::Mu => AnglePotential::anisotropic(al, x),
        SweepParam::M => AnglePotential::isosceles(al, x),
        SweepParam::Alpha => cfg.potential.with_alpha(x),
    }
}

const SWEEP_ANGLES: [(&str, f64); 2] = [("delta_0", 0.0), ("delta_pi_2", FRAC_PI_2)];

/// Counts of verdicts over the unstable branches of every rest point at ψ₀ = −π/2.
fn sweep_verdicts(cfg: &RunConfig, pot: &AnglePotential) -> Result<(usize, usize, usize), String> {
    let atlas = find_equilibria(pot).map_err(|e| e.to_string())?;
    let settings = cfg.index_settings();
    let (mut n, mut held, mut failed) = (0, 0, 0);
    for eq in atlas.iter().filter(|e| e.psi0 < 0.0 && !e.is_focus()) {
        for dir in [parindex::dynamics::SeedDirection::EPlus, parindex::dynamics::SeedDirection::EMinus] {
            for sign in [1.0, -1.0] {
                let spec = OrbitSpec::Shot {
                    psi_sign: -1.0,
                    theta0: eq.theta0,
                    sign,
                    direction: dir,
                    manifold: parindex::dynamics::Manifold::Unstable,
                };
                let Ok((_, o)) = build(&spec, pot, cfg) else { continue };
                n += 1;
                for v in verify_theorems(&o, &settings).theorem_verdicts.values() {
                    if *v {
                        held += 1;
                    } else {
                        failed += 1;
                    }
                }
            }
        }
    }
    Ok((n, held, failed))
}

pub fn sweep(cfg: &RunConfig, out: &Out, param: SweepParam, from: f64, to: f64, steps: usize, verify: bool) -> CmdResult {
    if steps == 0 || steps > 10_000 {
        return Err(format!("steps = {steps}; need 1 to 10000"));
    }
    if !(to > from) {
        return Err("need from < to".into());
    }
    let xs: Vec<f64> = (0..=steps).map(|k| from + (to - from) * k as f64 / steps as f64).collect();
    let rows: Vec<(f64, [Option<f64>; 2], Option<(usize, usize, usize)>)> = xs
        .par_iter()
        .map(|&x| {
            let pot = match swept(cfg, param, x) {
                Ok(p) => p,
                Err(e) => {
                    eprintln!("{param:?} = {x}: {e}");
                    return (x, [None, None], None);
                }
            };
            let d = SWEEP_ANGLES.map(|(_, th)| pot.delta(th).ok());
            let v = if verify {
                match sweep_verdicts(cfg, &pot) {
                    Ok(v) => Some(v),
                    Err(e) => {
                        eprintln!("{param:?} = {x}: {e}");
                        None
                    }
                }
            } else {
                None
            };
            (x, d, v)
        })
        .collect();
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|(x, d, v)| {
            let mut r = vec![num(*x), opt(d[0]), opt(d[1])];
            match v {
                Some((n, h, f)) => r.extend([n.to_string(), h.to_string(), f.to_string()]),
                None => r.extend([String::new(), String::new(), String::new()]),
            }
            r
        })
        .collect();
    // sign changes refined by bisection on the same Δ
    let mut thresholds = Vec::new();
    for (k, (col, th)) in SWEEP_ANGLES.iter().enumerate() {
        for w in rows.windows(2) {
            let (Some(a), Some(b)) = (w[0].1[k], w[1].1[k]) else { continue };
            if a.signum() == b.signum() || a == 0.0 {
                continue;
            }
            let f = |x: f64| swept(cfg, param, x).and_then(|p| p.delta(*th)).ok();
            let (mut lo, mut hi) = (w[0].0, w[1].0);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                match f(mid) {
                    Some(v) if v.signum() == a.signum() => lo = mid,
                    Some(_) => hi = mid,
                    None => break,
                }
                if hi - lo < 1e-14 * (1.0 + lo.abs()) {
                    break;
                }
            }
            let est = 0.5 * (lo + hi);
            println!("{col} changes sign at {param:?} = {est:.12}");
            thresholds.push(json!({"column": col, "bracket": [w[0].0, w[1].0], "estimate": est}));
        }
    }
    let header = ["param", "delta_0", "delta_pi_2", "orbits", "verdicts_held", "verdicts_failed"];
    let side = json!({
        "parameter": format!("{param:?}").to_lowercase(),
        "range": [from, to],
        "steps": steps,
        "basePotential": cfg.potential.descriptor(),
        "thresholds": thresholds,
    });
    let p = out.csv("sweep.csv", &header, &table, side)?;
    eprintln!("wrote {} ({} rows)", p.display(), table.len());
    Ok(true)
}

// ------------------------------------------------------------------- verify

pub fn load_suite(path: &std::path::Path) -> Result<Vec<SuiteEntry>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

pub fn verify(cfg: &RunConfig, out: &Out, suite: Option<Vec<SuiteEntry>>) -> CmdResult {
    let suite = suite.unwrap_or_else(default_suite);
    let settings = cfg.index_settings();
    let results: Vec<(String, Result<(Value, IndexReport), String>)> = suite
        .par_iter()
        .map(|entry| {
            let mut cfg = cfg.clone();
            if let Some(tol) = entry.tol {
                cfg.integrator.tol = tol;
            }
            let r = cfg.validate().and_then(|_| {
                let pot = entry.potential.clone().unwrap_or_else(|| cfg.potential.clone());
                let settings = cfg.index_settings();
                build(&entry.orbit, &pot, &cfg).map(|(pot, o)| (pot.descriptor(), verify_theorems(&o, &settings)))
            });
            (entry.name.clone(), r)
        })
        .collect();
    let mut ok = true;
    let mut entries = Vec::new();
    for ((name, r), entry) in results.into_iter().zip(&suite) {
        match r {
            Ok((pot, rep)) => {
                print_report(&name, &rep);
                ok &= rep.all_verdicts_hold() && !rep.theorem_verdicts.is_empty();
                entries.push(json!({"name": name, "potential": pot, "orbitSpec": entry.orbit, "tol": entry.tol, "report": rep}));
            }
            Err(e) => {
                println!("{name}: error: {e}");
                ok = false;
                entries.push(json!({"name": name, "orbitSpec": entry.orbit, "error": e}));
            }
        }
    }
    println!("{}", if ok { "all verdicts hold" } else { "some verdicts failed" });
    let p = out.json("verify.json", json!({"settings": settings, "allHold": ok, "entries": entries}))?;
    eprintln!("wrote {}", p.display());
    Ok(ok)
}
