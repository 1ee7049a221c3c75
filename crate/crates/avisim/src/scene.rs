//! Scene descriptions: a small line-oriented text format, its validation,
//! and the translation into runnable simulation parts.
//!
//! A scene file holds one directive per line (`#` starts a comment):
//!
//! ```text
//! dim 2
//! body disc id=0 pos=0.5,1.2 vel=1,0 radius=0.1 mass=1
//! body halfplane id=1 pos=0,0 normal=0,1 fixed
//! force gravity g=0,-9.8 h=0.001
//! force spring a=0 b=2 rest=1 stiffness=50 h=0.001
//! contact eta=0.01 k=10000 e=0.8 mu=0.1 alpha=0.1
//! run duration=10 logdt=0.1 seed=0
//! ```
//!
//! The same structures back the built-in scenes (`spring`, `box`,
//! `restitution-sweep`) used by the command line.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SimError};
use crate::math::Vec3;
use crate::potentials::{base_timestep, ContactParams, Material, MaterialKind};
use crate::scheduler::SceneParts;
use crate::state::{Body, BodyKind, State};

/// Restitution values swept by the `restitution-sweep` experiment,
/// most elastic first.
pub const RESTITUTION_SWEEP_VALUES: [f64; 7] = [1.0, 0.9, 0.8, 0.7, 0.5, 0.2, 0.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MassSpec {
    Dynamic(f64),
    Fixed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BodyKindSpec {
    Particle,
    Disc { radius: f64 },
    HalfPlane { normal: Vec3 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodySpec {
    pub id: u64,
    pub kind: BodyKindSpec,
    pub pos: Vec3,
    pub vel: Vec3,
    pub mass: MassSpec,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ForceSpec {
    Gravity { g: Vec3, h: f64 },
    Spring { a: u64, b: u64, rest: f64, stiffness: f64, h: f64 },
}

/// How the base penalty time step is chosen: scaled from the stability
/// bound, or given outright.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepRule {
    Alpha(f64),
    Explicit(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContactSpec {
    pub eta: f64,
    pub k: f64,
    pub e: f64,
    pub mu: f64,
    pub step: StepRule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig {
    pub dim: usize,
    pub bodies: Vec<BodySpec>,
    pub forces: Vec<ForceSpec>,
    pub contact: Option<ContactSpec>,
    pub duration: f64,
    pub log_dt: f64,
    pub seed: u64,
    pub broken_clocks: bool,
}

fn perr(line: usize, msg: impl Into<String>) -> SimError {
    SimError::Parse { line, msg: msg.into() }
}

fn parse_f64(s: &str, key: &str, line: usize) -> Result<f64> {
    s.parse::<f64>().map_err(|_| perr(line, format!("{key} is not a number: '{s}'")))
}

fn parse_u64(s: &str, key: &str, line: usize) -> Result<u64> {
    s.parse::<u64>().map_err(|_| perr(line, format!("{key} is not a non-negative integer: '{s}'")))
}

fn parse_vector(s: &str, key: &str, dim: usize, line: usize) -> Result<Vec3> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != dim {
        return Err(perr(line, format!("{key} needs {dim} comma-separated components: '{s}'")));
    }
    let mut c = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        c[i] = parse_f64(p, key, line)?;
    }
    Ok(Vec3::new(c[0], c[1], c[2]))
}

/// Splits a directive's arguments into `key=value` pairs, passing bare
/// words through with an empty value.
fn key_values<'a>(tokens: &[&'a str], line: usize) -> Result<Vec<(&'a str, &'a str)>> {
    tokens
        .iter()
        .map(|tok| match tok.split_once('=') {
            Some((k, v)) if !k.is_empty() && !v.is_empty() => Ok((k, v)),
            Some(_) => Err(perr(line, format!("malformed key=value token '{tok}'"))),
            None => Ok((*tok, "")),
        })
        .collect()
}

fn parse_body(tokens: &[&str], dim: usize, line: usize) -> Result<BodySpec> {
    let Some((&kind_word, rest)) = tokens.split_first() else {
        return Err(perr(line, "body needs a kind: particle, disc, or halfplane"));
    };
    let mut id = None;
    let mut pos = None;
    let mut vel = None;
    let mut mass = None;
    let mut fixed = false;
    let mut radius = None;
    let mut normal = None;
    for (key, value) in key_values(rest, line)? {
        match key {
            "id" => id = Some(parse_u64(value, "id", line)?),
            "pos" => pos = Some(parse_vector(value, "pos", dim, line)?),
            "vel" => vel = Some(parse_vector(value, "vel", dim, line)?),
            "mass" => mass = Some(parse_f64(value, "mass", line)?),
            "fixed" if value.is_empty() => fixed = true,
            "radius" if kind_word == "disc" => radius = Some(parse_f64(value, "radius", line)?),
            "normal" if kind_word == "halfplane" => {
                normal = Some(parse_vector(value, "normal", dim, line)?)
            }
            _ => return Err(perr(line, format!("{kind_word} does not accept '{key}'"))),
        }
    }
    if mass.is_some() && fixed {
        return Err(perr(line, "give mass=M or fixed, not both"));
    }
    let kind = match kind_word {
        "particle" => BodyKindSpec::Particle,
        "disc" => BodyKindSpec::Disc {
            radius: radius.ok_or_else(|| perr(line, "disc needs radius=R"))?,
        },
        "halfplane" => BodyKindSpec::HalfPlane {
            normal: normal.ok_or_else(|| perr(line, "halfplane needs normal=..."))?,
        },
        other => return Err(perr(line, format!("unknown body kind '{other}'"))),
    };
    Ok(BodySpec {
        id: id.ok_or_else(|| perr(line, "body needs id=INT"))?,
        kind,
        pos: pos.ok_or_else(|| perr(line, "body needs pos=..."))?,
        vel: vel.unwrap_or(Vec3::ZERO),
        mass: if fixed {
            MassSpec::Fixed
        } else {
            MassSpec::Dynamic(mass.unwrap_or(1.0))
        },
    })
}

fn parse_force(tokens: &[&str], dim: usize, line: usize) -> Result<ForceSpec> {
    let Some((&kind_word, rest)) = tokens.split_first() else {
        return Err(perr(line, "force needs a kind: gravity or spring"));
    };
    match kind_word {
        "gravity" => {
            let mut g = None;
            let mut h = None;
            for (key, value) in key_values(rest, line)? {
                match key {
                    "g" => g = Some(parse_vector(value, "g", dim, line)?),
                    "h" => h = Some(parse_f64(value, "h", line)?),
                    _ => return Err(perr(line, format!("gravity does not accept '{key}'"))),
                }
            }
            Ok(ForceSpec::Gravity {
                g: g.ok_or_else(|| perr(line, "gravity needs g=..."))?,
                h: h.ok_or_else(|| perr(line, "gravity needs h=H"))?,
            })
        }
        "spring" => {
            let mut a = None;
            let mut b = None;
            let mut rest_len = None;
            let mut stiffness = None;
            let mut h = None;
            for (key, value) in key_values(rest, line)? {
                match key {
                    "a" => a = Some(parse_u64(value, "a", line)?),
                    "b" => b = Some(parse_u64(value, "b", line)?),
                    "rest" => rest_len = Some(parse_f64(value, "rest", line)?),
                    "stiffness" => stiffness = Some(parse_f64(value, "stiffness", line)?),
                    "h" => h = Some(parse_f64(value, "h", line)?),
                    _ => return Err(perr(line, format!("spring does not accept '{key}'"))),
                }
            }
            Ok(ForceSpec::Spring {
                a: a.ok_or_else(|| perr(line, "spring needs a=ID"))?,
                b: b.ok_or_else(|| perr(line, "spring needs b=ID"))?,
                rest: rest_len.ok_or_else(|| perr(line, "spring needs rest=L"))?,
                stiffness: stiffness.ok_or_else(|| perr(line, "spring needs stiffness=K"))?,
                h: h.ok_or_else(|| perr(line, "spring needs h=H"))?,
            })
        }
        other => Err(perr(line, format!("unknown force kind '{other}'"))),
    }
}

fn parse_contact(tokens: &[&str], line: usize) -> Result<ContactSpec> {
    let mut eta = None;
    let mut k = None;
    let mut e = None;
    let mut mu = None;
    let mut alpha = None;
    let mut h1 = None;
    for (key, value) in key_values(tokens, line)? {
        match key {
            "eta" => eta = Some(parse_f64(value, "eta", line)?),
            "k" => k = Some(parse_f64(value, "k", line)?),
            "e" => e = Some(parse_f64(value, "e", line)?),
            "mu" => mu = Some(parse_f64(value, "mu", line)?),
            "alpha" => alpha = Some(parse_f64(value, "alpha", line)?),
            "h1" => h1 = Some(parse_f64(value, "h1", line)?),
            _ => return Err(perr(line, format!("contact does not accept '{key}'"))),
        }
    }
    let step = match (alpha, h1) {
        (Some(_), Some(_)) => return Err(perr(line, "give alpha or h1, not both")),
        (None, Some(h)) => StepRule::Explicit(h),
        (a, None) => StepRule::Alpha(a.unwrap_or(0.1)),
    };
    Ok(ContactSpec {
        eta: eta.ok_or_else(|| perr(line, "contact needs eta=E"))?,
        k: k.ok_or_else(|| perr(line, "contact needs k=K"))?,
        e: e.unwrap_or(1.0),
        mu: mu.unwrap_or(0.0),
        step,
    })
}

/// Parses a scene description. Line numbers in errors are 1-based.
pub fn parse_scene(text: &str) -> Result<SceneConfig> {
    let mut dim = 2;
    let mut dim_set = false;
    let mut bodies = Vec::new();
    let mut forces = Vec::new();
    let mut contact = None;
    let mut run = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        match tokens[0] {
            "dim" => {
                if dim_set {
                    return Err(perr(line, "dim given twice"));
                }
                if !bodies.is_empty() || !forces.is_empty() {
                    return Err(perr(line, "dim must come before bodies and forces"));
                }
                let [_, value] = tokens[..] else {
                    return Err(perr(line, "dim needs exactly one argument: 2 or 3"));
                };
                dim = match value {
                    "2" => 2,
                    "3" => 3,
                    other => return Err(perr(line, format!("dim must be 2 or 3, got '{other}'"))),
                };
                dim_set = true;
            }
            "body" => bodies.push(parse_body(&tokens[1..], dim, line)?),
            "force" => forces.push(parse_force(&tokens[1..], dim, line)?),
            "contact" => {
                if contact.is_some() {
                    return Err(perr(line, "contact given twice"));
                }
                contact = Some(parse_contact(&tokens[1..], line)?);
            }
            "run" => {
                if run.is_some() {
                    return Err(perr(line, "run given twice"));
                }
                let mut duration = None;
                let mut log_dt = None;
                let mut seed = None;
                for (key, value) in key_values(&tokens[1..], line)? {
                    match key {
                        "duration" => duration = Some(parse_f64(value, "duration", line)?),
                        "logdt" => log_dt = Some(parse_f64(value, "logdt", line)?),
                        "seed" => seed = Some(parse_u64(value, "seed", line)?),
                        _ => return Err(perr(line, format!("run does not accept '{key}'"))),
                    }
                }
                run = Some((
                    duration.ok_or_else(|| perr(line, "run needs duration=T"))?,
                    log_dt.unwrap_or(0.1),
                    seed.unwrap_or(0),
                ));
            }
            other => return Err(perr(line, format!("unknown directive '{other}'"))),
        }
    }
    let (duration, log_dt, seed) =
        run.ok_or_else(|| perr(text.lines().count().max(1), "missing 'run duration=T' line"))?;
    let config = SceneConfig {
        dim,
        bodies,
        forces,
        contact,
        duration,
        log_dt,
        seed,
        broken_clocks: false,
    };
    config.validate()?;
    Ok(config)
}

impl SceneConfig {
    /// Checks every semantic rule a syntactically well-formed scene can
    /// still break.
    pub fn validate(&self) -> Result<()> {
        let inv = |msg: String| Err(SimError::Invalid { msg });
        if !(self.duration > 0.0) {
            return inv(format!("duration must be positive, got {}", self.duration));
        }
        if !(self.log_dt > 0.0) {
            return inv(format!("logdt must be positive, got {}", self.log_dt));
        }
        if self.bodies.is_empty() {
            return inv("scene has no bodies".into());
        }
        let mut ids = BTreeSet::new();
        for b in &self.bodies {
            if !ids.insert(b.id) {
                return inv(format!("body id {} used twice", b.id));
            }
            if !(b.pos.is_finite() && b.vel.is_finite()) {
                return inv(format!("body {} has a non-finite pos or vel", b.id));
            }
            match b.mass {
                MassSpec::Dynamic(m) if !(m > 0.0 && m.is_finite()) => {
                    return inv(format!("body {} needs a positive mass, got {m}", b.id));
                }
                _ => {}
            }
            if b.mass == MassSpec::Fixed && b.vel != Vec3::ZERO {
                return inv(format!("fixed body {} must not have a velocity", b.id));
            }
            match b.kind {
                BodyKindSpec::Particle => {}
                BodyKindSpec::Disc { radius } => {
                    if !(radius > 0.0 && radius.is_finite()) {
                        return inv(format!("body {} needs a positive radius, got {radius}", b.id));
                    }
                }
                BodyKindSpec::HalfPlane { normal } => {
                    if (normal.norm() - 1.0).abs() > 1e-12 {
                        return inv(format!("halfplane {} needs a unit normal", b.id));
                    }
                    if b.mass != MassSpec::Fixed {
                        return inv(format!("halfplane {} must be fixed", b.id));
                    }
                }
            }
        }
        for f in &self.forces {
            match *f {
                ForceSpec::Gravity { g, h } => {
                    if !g.is_finite() {
                        return inv("gravity needs a finite g".into());
                    }
                    if !(h > 0.0 && h.is_finite()) {
                        return inv(format!("gravity needs a positive step, got {h}"));
                    }
                }
                ForceSpec::Spring { a, b, rest, stiffness, h } => {
                    if a == b {
                        return inv(format!("spring endpoints must differ, both are {a}"));
                    }
                    for id in [a, b] {
                        if !ids.contains(&id) {
                            return inv(format!("spring references unknown body {id}"));
                        }
                    }
                    if !(rest > 0.0 && rest.is_finite()) {
                        return inv(format!("spring needs a positive rest length, got {rest}"));
                    }
                    if !(stiffness > 0.0 && stiffness.is_finite()) {
                        return inv(format!("spring needs a positive stiffness, got {stiffness}"));
                    }
                    if !(h > 0.0 && h.is_finite()) {
                        return inv(format!("spring needs a positive step, got {h}"));
                    }
                }
            }
        }
        if let Some(c) = &self.contact {
            if !(c.eta > 0.0 && c.eta.is_finite()) {
                return inv(format!("contact eta must be positive, got {}", c.eta));
            }
            if !(c.k > 0.0 && c.k.is_finite()) {
                return inv(format!("contact k must be positive, got {}", c.k));
            }
            if !(0.0..=1.0).contains(&c.e) {
                return inv(format!("contact e must lie in [0, 1], got {}", c.e));
            }
            if !(c.mu >= 0.0 && c.mu.is_finite()) {
                return inv(format!("contact mu must be non-negative, got {}", c.mu));
            }
            match c.step {
                StepRule::Alpha(a) if !(a > 0.0 && a.is_finite()) => {
                    return inv(format!("contact alpha must be positive, got {a}"));
                }
                StepRule::Explicit(h) if !(h > 0.0 && h.is_finite()) => {
                    return inv(format!("contact h1 must be positive, got {h}"));
                }
                _ => {}
            }
            if !self.bodies.iter().any(|b| b.mass != MassSpec::Fixed) {
                return inv("contact needs at least one movable body".into());
            }
        }
        Ok(())
    }

    /// Resolves ids to dense indices and builds the runnable pieces.
    pub fn instantiate(&self) -> Result<SceneParts> {
        self.validate()?;
        let mut index_of = BTreeMap::new();
        for (i, b) in self.bodies.iter().enumerate() {
            index_of.insert(b.id, i);
        }
        let mut bodies = Vec::with_capacity(self.bodies.len());
        let mut q = Vec::with_capacity(self.bodies.len());
        let mut qdot = Vec::with_capacity(self.bodies.len());
        let mut mass = Vec::with_capacity(self.bodies.len());
        let mut inv_mass = Vec::with_capacity(self.bodies.len());
        for (i, b) in self.bodies.iter().enumerate() {
            let kind = match b.kind {
                BodyKindSpec::Particle => BodyKind::Particle,
                BodyKindSpec::Disc { radius } => BodyKind::Disc { radius },
                BodyKindSpec::HalfPlane { normal } => BodyKind::HalfPlane { normal },
            };
            bodies.push(Body { index: i, kind });
            q.push(b.pos);
            qdot.push(b.vel);
            match b.mass {
                MassSpec::Dynamic(m) => {
                    mass.push(m);
                    inv_mass.push(1.0 / m);
                }
                MassSpec::Fixed => {
                    mass.push(f64::INFINITY);
                    inv_mass.push(0.0);
                }
            }
        }
        let state = State { t_g: 0.0, q, qdot, mass, inv_mass };
        let materials = self
            .forces
            .iter()
            .map(|f| match *f {
                ForceSpec::Gravity { g, h } => Material { kind: MaterialKind::Gravity { g }, h },
                ForceSpec::Spring { a, b, rest, stiffness, h } => Material {
                    kind: MaterialKind::Spring {
                        a: index_of[&a],
                        b: index_of[&b],
                        rest,
                        stiffness,
                    },
                    h,
                },
            })
            .collect();
        let contact = match &self.contact {
            None => None,
            Some(c) => {
                let h1 = match c.step {
                    StepRule::Explicit(h) => h,
                    StepRule::Alpha(alpha) => {
                        let m_min = state
                            .mass
                            .iter()
                            .zip(&state.inv_mass)
                            .filter(|&(_, &im)| im > 0.0)
                            .map(|(&m, _)| m)
                            .fold(f64::INFINITY, f64::min);
                        base_timestep(c.k, m_min, alpha)?
                    }
                };
                Some(ContactParams { eta: c.eta, k: c.k, e: c.e, mu: c.mu, h1 })
            }
        };
        Ok(SceneParts {
            dim: self.dim,
            bodies,
            state,
            materials,
            contact,
            duration: self.duration,
            log_dt: self.log_dt,
            broken_clocks: self.broken_clocks,
        })
    }
}

fn format_vec(v: Vec3, dim: usize) -> String {
    if dim == 3 {
        format!("{},{},{}", v.x, v.y, v.z)
    } else {
        format!("{},{}", v.x, v.y)
    }
}

/// Renders a config back into the scene grammar; parsing the output
/// reproduces the config exactly.
pub fn print_scene(config: &SceneConfig) -> String {
    let dim = config.dim;
    let mut out = format!("dim {dim}\n");
    for b in &config.bodies {
        let kind = match b.kind {
            BodyKindSpec::Particle => "particle".to_string(),
            BodyKindSpec::Disc { radius } => format!("disc radius={radius}"),
            BodyKindSpec::HalfPlane { normal } => {
                format!("halfplane normal={}", format_vec(normal, dim))
            }
        };
        let (kind_word, extras) = match kind.split_once(' ') {
            Some((w, e)) => (w.to_string(), format!(" {e}")),
            None => (kind, String::new()),
        };
        let mass = match b.mass {
            MassSpec::Dynamic(m) => format!("mass={m}"),
            MassSpec::Fixed => "fixed".to_string(),
        };
        out.push_str(&format!(
            "body {kind_word} id={} pos={} vel={}{extras} {mass}\n",
            b.id,
            format_vec(b.pos, dim),
            format_vec(b.vel, dim),
        ));
    }
    for f in &config.forces {
        match *f {
            ForceSpec::Gravity { g, h } => {
                out.push_str(&format!("force gravity g={} h={h}\n", format_vec(g, dim)));
            }
            ForceSpec::Spring { a, b, rest, stiffness, h } => {
                out.push_str(&format!(
                    "force spring a={a} b={b} rest={rest} stiffness={stiffness} h={h}\n"
                ));
            }
        }
    }
    if let Some(c) = &config.contact {
        let step = match c.step {
            StepRule::Alpha(a) => format!("alpha={a}"),
            StepRule::Explicit(h) => format!("h1={h}"),
        };
        out.push_str(&format!(
            "contact eta={} k={} e={} mu={} {step}\n",
            c.eta, c.k, c.e, c.mu
        ));
    }
    out.push_str(&format!(
        "run duration={} logdt={} seed={}\n",
        config.duration, config.log_dt, config.seed
    ));
    out
}

/// A named built-in scene: either one configuration or a family swept
/// over restitution.
pub enum BuiltinScene {
    Single(SceneConfig),
    Sweep(Vec<(f64, SceneConfig)>),
}

/// Two spring-coupled particles dropped onto a floor: the standard
/// long-horizon energy benchmark (total energy starts at exactly 3).
fn spring_scene() -> SceneConfig {
    SceneConfig {
        dim: 2,
        bodies: vec![
            BodySpec {
                id: 0,
                kind: BodyKindSpec::Particle,
                pos: Vec3::new(0.0, 1.0, 0.0),
                vel: Vec3::ZERO,
                mass: MassSpec::Dynamic(1.0),
            },
            BodySpec {
                id: 1,
                kind: BodyKindSpec::Particle,
                pos: Vec3::new(0.0, 2.0, 0.0),
                vel: Vec3::ZERO,
                mass: MassSpec::Dynamic(1.0),
            },
            BodySpec {
                id: 2,
                kind: BodyKindSpec::HalfPlane { normal: Vec3::new(0.0, 1.0, 0.0) },
                pos: Vec3::ZERO,
                vel: Vec3::ZERO,
                mass: MassSpec::Fixed,
            },
        ],
        forces: vec![
            ForceSpec::Gravity { g: Vec3::new(0.0, -1.0, 0.0), h: 0.01 },
            ForceSpec::Spring { a: 0, b: 1, rest: 1.0, stiffness: 1.0, h: 0.01 },
        ],
        contact: Some(ContactSpec {
            eta: 0.1,
            k: 1000.0,
            e: 1.0,
            mu: 0.0,
            // Small enough that a hundred seconds of floor bounces stay well
            // inside the long-horizon drift budget.
            step: StepRule::Alpha(0.03),
        }),
        duration: 100.0,
        log_dt: 0.1,
        seed: 0,
        broken_clocks: false,
    }
}

const BOX_SIDE: f64 = 3.0;
const BOX_DISC_RADIUS: f64 = 0.1;
// Stiff enough that the fastest impacts stop within the first couple of
// layers: shallow penetrations keep the energy error of a bounce small.
const BOX_ETA: f64 = 0.01;
const BOX_STIFFNESS: f64 = 6e5;
const BOX_ALPHA: f64 = 0.03;
/// Extra clearance beyond the outermost layer when placing discs, so every
/// initial guard has somewhere to sit.
const BOX_PLACEMENT_PAD: f64 = 0.002;
const BOX_MAX_SPEED: f64 = 10.0;
const BOX_PLACEMENT_ATTEMPTS: usize = 10_000;

/// Samples `n` discs inside the box walls with mutual and wall clearance
/// beyond the first penalty layer, then draws their velocities.
fn box_bodies(n: usize, seed: u64) -> Result<Vec<BodySpec>> {
    let margin = BOX_DISC_RADIUS + 2.0 * BOX_ETA + BOX_PLACEMENT_PAD;
    let lo = margin;
    let hi = BOX_SIDE - margin;
    let min_center_dist = 2.0 * BOX_DISC_RADIUS + 2.0 * BOX_ETA + BOX_PLACEMENT_PAD;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers: Vec<Vec3> = Vec::with_capacity(n);
    for i in 0..n {
        let mut placed = false;
        for _ in 0..BOX_PLACEMENT_ATTEMPTS {
            let c = Vec3::new(rng.gen_range(lo..hi), rng.gen_range(lo..hi), 0.0);
            if centers.iter().all(|p| (*p - c).norm() >= min_center_dist) {
                centers.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(SimError::Invalid {
                msg: format!("could not place disc {i} of {n} in the box without overlap"),
            });
        }
    }
    let mut bodies: Vec<BodySpec> = centers
        .iter()
        .enumerate()
        .map(|(i, &c)| BodySpec {
            id: i as u64,
            kind: BodyKindSpec::Disc { radius: BOX_DISC_RADIUS },
            pos: c,
            vel: Vec3::ZERO,
            mass: MassSpec::Dynamic(1.0),
        })
        .collect();
    for b in bodies.iter_mut() {
        let speed = rng.gen_range(0.0..BOX_MAX_SPEED);
        let angle = rng.gen_range(0.0..std::f64::consts::TAU);
        b.vel = Vec3::new(speed * angle.cos(), speed * angle.sin(), 0.0);
    }
    let walls = [
        (Vec3::ZERO, Vec3::new(0.0, 1.0, 0.0)),
        (Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0)),
        (Vec3::new(0.0, BOX_SIDE, 0.0), Vec3::new(0.0, -1.0, 0.0)),
        (Vec3::new(BOX_SIDE, 0.0, 0.0), Vec3::new(-1.0, 0.0, 0.0)),
    ];
    for (i, (pos, normal)) in walls.into_iter().enumerate() {
        bodies.push(BodySpec {
            id: (n + i) as u64,
            kind: BodyKindSpec::HalfPlane { normal },
            pos,
            vel: Vec3::ZERO,
            mass: MassSpec::Fixed,
        });
    }
    Ok(bodies)
}

fn box_scene(n: usize, seed: u64) -> Result<SceneConfig> {
    Ok(SceneConfig {
        dim: 2,
        bodies: box_bodies(n, seed)?,
        forces: vec![],
        contact: Some(ContactSpec {
            eta: BOX_ETA,
            k: BOX_STIFFNESS,
            e: 1.0,
            mu: 0.0,
            step: StepRule::Alpha(BOX_ALPHA),
        }),
        duration: 10.0,
        log_dt: 0.1,
        seed,
        broken_clocks: false,
    })
}

fn restitution_sweep(n: usize, seed: u64) -> Result<Vec<(f64, SceneConfig)>> {
    let bodies = box_bodies(n, seed)?;
    Ok(RESTITUTION_SWEEP_VALUES
        .iter()
        .map(|&e| {
            let config = SceneConfig {
                dim: 2,
                bodies: bodies.clone(),
                forces: vec![ForceSpec::Gravity { g: Vec3::new(0.0, -9.8, 0.0), h: 0.001 }],
                contact: Some(ContactSpec {
                    eta: BOX_ETA,
                    k: BOX_STIFFNESS,
                    e,
                    mu: 0.0,
                    step: StepRule::Alpha(BOX_ALPHA),
                }),
                duration: 20.0,
                log_dt: 0.1,
                seed,
                broken_clocks: false,
            };
            (e, config)
        })
        .collect())
}

/// Builds a named built-in scene. `spheres` picks the disc count where one
/// applies; `seed` overrides the placement seed.
pub fn builtin_scene(
    name: &str,
    spheres: Option<usize>,
    seed: Option<u64>,
) -> Result<BuiltinScene> {
    match name {
        "spring" => {
            if spheres.is_some() {
                return Err(SimError::Invalid {
                    msg: "the spring scene has a fixed cast; --spheres does not apply".into(),
                });
            }
            let mut config = spring_scene();
            config.seed = seed.unwrap_or(config.seed);
            Ok(BuiltinScene::Single(config))
        }
        "box" => Ok(BuiltinScene::Single(box_scene(
            spheres.unwrap_or(100),
            seed.unwrap_or(0),
        )?)),
        "restitution-sweep" => Ok(BuiltinScene::Sweep(restitution_sweep(
            spheres.unwrap_or(50),
            seed.unwrap_or(0),
        )?)),
        other => Err(SimError::Invalid { msg: format!("unknown experiment '{other}'") }),
    }
}
