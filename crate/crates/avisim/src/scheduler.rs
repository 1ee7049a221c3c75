//! The asynchronous main loop.
//!
//! One time-ordered queue carries three event kinds: force integrations
//! (materials and penalty layers, each on its own fixed-step clock),
//! certificate expiries, and diagnostic snapshots. Processing an event
//! drifts every movable body to the event time, dispatches, and advances
//! the global clock. Between events nothing moves but straight lines, which
//! is what makes the certificate expiry times exact.
//!
//! Contact works by layered guards: every pair holds either a separating
//! slab certifying its next penalty layer cannot activate yet, or live
//! penalty-layer events (or both, at different depths). When a certificate
//! expires and cannot be refreshed, the next layer activates — on the global
//! step grid of its own time step, never off-grid, because each potential's
//! integration clock must tick at a fixed stride. A layer that finds itself
//! exerting no force on a separating pair retires and leaves a certificate
//! in its place.

use std::collections::{BTreeMap, BTreeSet};

use crate::certificates::{find_certificate, CertRegistry};
use crate::diagnostics::{self, Snapshot};
use crate::error::{Result, SimError};
use crate::potentials::{
    friction_impulse, gap, layer_timestep, pair_geometry, ContactParams, Material, PenaltyLayer,
};
use crate::queue::{next_aligned_step, EventPayload, EventQueue, ForceEvent, ForceSource};
use crate::state::{Body, BodyKind, State};

/// Headroom multiplier when setting a body's speed budget, so small speed
/// gains don't force certificate rescheduling.
const SPEED_BUDGET_FACTOR: f64 = 1.25;
/// Additive budget floor; keeps near-rest bodies from re-certifying on
/// every tiny velocity change.
const SPEED_BUDGET_FLOOR: f64 = 0.01;
/// A body slower than this fraction of its budget gets the budget lowered
/// (lazily — existing expiries stay, only future schedules tighten).
const SPEED_BUDGET_DECAY: f64 = 0.4;

/// Everything a simulation needs, already validated and index-resolved.
pub struct SceneParts {
    pub dim: usize,
    pub bodies: Vec<Body>,
    pub state: State,
    pub materials: Vec<Material>,
    pub contact: Option<ContactParams>,
    pub duration: f64,
    pub log_dt: f64,
    pub broken_clocks: bool,
}

/// What an observer sees around each processed event.
#[derive(Debug, Clone, Copy)]
pub struct EventInfo {
    pub t: f64,
    pub payload: EventPayload,
}

/// Hook into the event loop; all methods default to no-ops.
pub trait RunObserver {
    fn before_event(&mut self, _info: &EventInfo, _state: &State) {}
    fn after_event(&mut self, _info: &EventInfo, _state: &State) {}
}

struct NoObserver;
impl RunObserver for NoObserver {}

pub struct Simulation {
    dim: usize,
    bodies: Vec<Body>,
    state: State,
    materials: Vec<Material>,
    contact: Option<ContactParams>,
    duration: f64,
    log_dt: f64,
    broken_clocks: bool,
    /// Supported contact pairs (a < b), present only when contact params are
    /// configured; pairs of two immovable bodies are omitted.
    pairs: Vec<(usize, usize)>,
    queue: EventQueue,
    registry: CertRegistry,
    /// Per-body speed bounds under which every live certificate expiry was
    /// computed; a kick is free unless it pushes a body past its budget.
    speed_budgets: Vec<f64>,
    /// Penalty layers with a live force event, per pair.
    queued_layers: BTreeMap<(usize, usize), BTreeSet<u32>>,
    snapshots: Vec<Snapshot>,
    /// Absolute slack when comparing event times against the duration;
    /// events within it of the end still run (the final snapshot's clock
    /// time may exceed the duration by round-off).
    end_tol: f64,
    started: bool,
}

impl Simulation {
    pub fn new(config: &crate::scene::SceneConfig) -> Result<Simulation> {
        Simulation::from_parts(config.instantiate()?)
    }

    pub fn from_parts(parts: SceneParts) -> Result<Simulation> {
        let SceneParts { dim, bodies, state, materials, contact, duration, log_dt, broken_clocks } =
            parts;
        if !(duration > 0.0) || !(log_dt > 0.0) {
            return Err(SimError::Invalid {
                msg: format!("duration and logdt must be positive (got {duration}, {log_dt})"),
            });
        }
        if bodies.is_empty() {
            return Err(SimError::Invalid { msg: "scene has no bodies".into() });
        }
        if !state.is_finite() {
            return Err(SimError::NonFinite { what: "initial state", t: 0.0 });
        }
        let n = bodies.len();
        let mut pairs = Vec::new();
        if contact.is_some() {
            for a in 0..n {
                for b in a + 1..n {
                    let both_planes =
                        bodies[a].kind.is_halfplane() && bodies[b].kind.is_halfplane();
                    let both_fixed = state.inv_mass[a] == 0.0 && state.inv_mass[b] == 0.0;
                    if !both_planes && !both_fixed {
                        pairs.push((a, b));
                    }
                }
            }
        }
        let end_tol = 1e-9 * duration.max(1.0);
        let speed_budgets = state
            .qdot
            .iter()
            .zip(&state.inv_mass)
            .map(|(v, &im)| if im > 0.0 { SPEED_BUDGET_FACTOR * v.norm() + SPEED_BUDGET_FLOOR } else { 0.0 })
            .collect();
        Ok(Simulation {
            dim,
            registry: CertRegistry::new(n),
            bodies,
            state,
            materials,
            contact,
            duration,
            log_dt,
            broken_clocks,
            pairs,
            queue: EventQueue::new(),
            speed_budgets,
            queued_layers: BTreeMap::new(),
            snapshots: Vec::new(),
            end_tol,
            started: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn state(&self) -> &State {
        &self.state
    }

    pub fn bodies(&self) -> &[Body] {
        &self.bodies
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn live_certificates(&self) -> usize {
        self.registry.len()
    }

    pub fn queued_penalty_layers(&self) -> usize {
        self.queued_layers.values().map(|s| s.len()).sum()
    }

    pub fn run(&mut self) -> Result<&[Snapshot]> {
        self.run_observed(&mut NoObserver)
    }

    /// Runs the event loop to the configured duration, reporting each event
    /// to the observer. Returns the recorded snapshot series.
    pub fn run_observed(&mut self, observer: &mut dyn RunObserver) -> Result<&[Snapshot]> {
        if self.started {
            return Err(SimError::Invalid { msg: "simulation already ran".into() });
        }
        self.started = true;
        self.init()?;
        loop {
            let Some(head_t) = self.queue.peek_time() else {
                if self.state.t_g + self.end_tol >= self.duration {
                    break;
                }
                return Err(SimError::QueueEmpty { t: self.state.t_g, duration: self.duration });
            };
            if head_t > self.duration + self.end_tol {
                break;
            }
            let (t, payload) = self.queue.pop().expect("peeked head must pop");
            self.state.drift(t)?;
            self.state.t_g = t;
            let info = EventInfo { t, payload };
            observer.before_event(&info, &self.state);
            match payload {
                EventPayload::Force(fe) => self.handle_force(fe)?,
                EventPayload::Certificate { pair, guard } => {
                    self.handle_certificate(pair, guard)?
                }
                EventPayload::Snapshot { step } => self.handle_snapshot(step)?,
            }
            observer.after_event(&info, &self.state);
        }
        Ok(&self.snapshots)
    }

    fn init(&mut self) -> Result<()> {
        for (i, m) in self.materials.iter().enumerate() {
            if !(m.h > 0.0) {
                return Err(SimError::Invalid {
                    msg: format!("material force {i} needs a positive step, got {}", m.h),
                });
            }
            let fe = ForceEvent { source: ForceSource::Material(i), h: m.h, origin: 0.0, step: 1 };
            self.queue.push(fe.time(), EventPayload::Force(fe));
        }
        self.queue.push(0.0, EventPayload::Snapshot { step: 0 });
        if let Some(cp) = self.contact {
            for i in 0..self.pairs.len() {
                let pair = self.pairs[i];
                if !self.add_certificate(pair, 1, false)? {
                    let g = gap(&self.bodies, &self.state, pair.0, pair.1, cp.eta)?;
                    return Err(SimError::PenetratingStart { a: pair.0, b: pair.1, gap: g });
                }
            }
        }
        Ok(())
    }

    fn cp(&self) -> ContactParams {
        self.contact.expect("penalty machinery requires contact parameters")
    }

    /// Cap for certificate expiries: just past the event-processing window,
    /// so a guard with no crossing before the end never needs handling.
    fn cert_horizon(&self) -> f64 {
        self.duration + 2.0 * self.end_tol
    }

    /// Reconciles a body's speed budget with its velocity after a kick.
    /// Outrunning the budget invalidates the expiries of certificates
    /// touching the body, so those are recomputed; slowing far below it
    /// just lowers the budget for future schedules (early expiries are
    /// sound, merely eager).
    fn note_velocity(&mut self, i: usize) {
        let s = self.state.qdot[i].norm();
        let budget = self.speed_budgets[i];
        if s > budget {
            self.speed_budgets[i] = SPEED_BUDGET_FACTOR * s + SPEED_BUDGET_FLOOR;
            let horizon = self.cert_horizon();
            self.registry.reschedule_for_body(
                &mut self.queue,
                i,
                &self.bodies,
                &self.state,
                &self.speed_budgets,
                horizon,
            );
        } else if s < SPEED_BUDGET_DECAY * budget {
            self.speed_budgets[i] = SPEED_BUDGET_FACTOR * s + SPEED_BUDGET_FLOOR;
        }
    }

    /// Tries to place a slab guarding `guard` for the pair and queue its
    /// expiry. `gated` additionally rejects pairs whose current closing speed
    /// would cross the remaining separation within 4 base steps: contact is
    /// imminent, so activating the layer beats re-certifying at ever-shorter
    /// range. Refusal costs efficiency, never correctness. Near the end of
    /// the run every guard trivially holds and nothing is queued.
    fn add_certificate(
        &mut self,
        pair: (usize, usize),
        guard: u32,
        gated: bool,
    ) -> Result<bool> {
        if self.state.t_g + self.end_tol >= self.duration {
            return Ok(true);
        }
        let cp = self.cp();
        let half = cp.eta / guard as f64;
        let Some(slab) = find_certificate(&self.bodies, &self.state, pair.0, pair.1, half)? else {
            return Ok(false);
        };
        if gated {
            let geom = pair_geometry(&self.bodies, &self.state, pair.0, pair.1)?;
            let closing = (self.state.qdot[pair.1] - self.state.qdot[pair.0]).dot(geom.normal_a);
            if closing > 0.0 && geom.distance - 2.0 * half < 4.0 * cp.h1 * closing {
                return Ok(false);
            }
        }
        let expiry =
            slab.schedule(&self.bodies, &self.state, &self.speed_budgets, self.cert_horizon());
        let handle = self.queue.push(expiry, EventPayload::Certificate { pair, guard });
        if let Some(old) = self.registry.insert_keyed((pair, guard), slab, handle) {
            self.queue.remove(old.handle);
        }
        Ok(true)
    }

    /// Integrates one force event: kick, friction for penalty layers,
    /// budget bookkeeping over the stencil, then either re-queue one step
    /// later or (for an idle penalty layer with contact not imminent) retire
    /// behind a fresh certificate.
    fn handle_force(&mut self, fe: ForceEvent) -> Result<()> {
        match fe.source {
            ForceSource::Material(i) => {
                let grads = self.materials[i].gradient(&self.state)?;
                self.state.kick(&grads, fe.h)?;
                let stencil = self.materials[i].stencil(&self.state);
                for body in stencil {
                    self.note_velocity(body);
                }
                let next = fe.next();
                self.queue.push(next.time(), EventPayload::Force(next));
            }
            ForceSource::Penalty { pair, layer } => {
                let cp = self.cp();
                let pl = PenaltyLayer { a: pair.0, b: pair.1, layer };
                let f = pl.evaluate(&cp, &self.bodies, &self.state)?;
                if f.gap < 0.0 {
                    self.state.kick(&[(pair.0, f.grad_a), (pair.1, -f.grad_a)], fe.h)?;
                    if cp.mu > 0.0 {
                        let inv_sum = self.state.inv_mass[pair.0] + self.state.inv_mass[pair.1];
                        if inv_sum > 0.0 {
                            let v_rel = self.state.qdot[pair.0] - self.state.qdot[pair.1];
                            let v_t = v_rel - f.normal_a * v_rel.dot(f.normal_a);
                            let j_n = fe.h * f.grad_a.norm();
                            let j = friction_impulse(j_n, v_t, cp.mu, 1.0 / inv_sum);
                            self.state.qdot[pair.0] += j * self.state.inv_mass[pair.0];
                            self.state.qdot[pair.1] -= j * self.state.inv_mass[pair.1];
                        }
                    }
                    self.note_velocity(pair.0);
                    self.note_velocity(pair.1);
                    let next = fe.next();
                    self.queue.push(next.time(), EventPayload::Force(next));
                } else if self.add_certificate(pair, layer, true)? {
                    // the layer went inactive: no kick happened, so no
                    // rescheduling either — just retire its event
                    if let Some(layers) = self.queued_layers.get_mut(&pair) {
                        layers.remove(&layer);
                        if layers.is_empty() {
                            self.queued_layers.remove(&pair);
                        }
                    }
                } else {
                    // idle but about to re-engage (or no slab placeable):
                    // cheaper to keep ticking than to churn certificates
                    let mut next = fe.next();
                    if self.broken_clocks {
                        // Broken mode re-locks the clock onto the predicted
                        // crossing whenever it lands before the next tick.
                        let threshold = 2.0 * cp.eta / f64::from(layer);
                        if let Some(tc) = next_crossing(&self.bodies, &self.state, pair, threshold)
                        {
                            if tc < next.time() {
                                next = ForceEvent { source: fe.source, h: fe.h, origin: tc, step: 0 };
                            }
                        }
                    }
                    self.queue.push(next.time(), EventPayload::Force(next));
                }
            }
        }
        Ok(())
    }

    /// A certificate expired. Refresh the guard one layer past the deepest
    /// queued penalty event; when that fails, activate layers one by one,
    /// re-guarding after each, until a slab lands. A strictly positive
    /// surface separation guarantees the cascade terminates.
    fn handle_certificate(&mut self, pair: (usize, usize), guard: u32) -> Result<()> {
        let stale = self.registry.remove((pair, guard));
        debug_assert!(stale.is_some(), "popped certificate missing from registry");
        let deepest =
            self.queued_layers.get(&pair).and_then(|s| s.iter().next_back()).copied().unwrap_or(0);
        let mut target = deepest + 1;
        if self.add_certificate(pair, target, true)? {
            return Ok(());
        }
        loop {
            let d = pair_geometry(&self.bodies, &self.state, pair.0, pair.1)?.distance;
            if d <= 0.0 {
                return Err(SimError::Penetration { a: pair.0, b: pair.1, t: self.state.t_g });
            }
            self.activate_layer(pair, target)?;
            target += 1;
            if self.add_certificate(pair, target, false)? {
                return Ok(());
            }
        }
    }

    /// Queues the first integration of a penalty layer. The aligned mode
    /// puts it on the layer's global step grid; the broken-clocks mode
    /// restarts the layer's clock at the moment the layer becomes active —
    /// the predicted threshold crossing, or right now if it is already
    /// active (kept only to demonstrate why alignment matters). Slabs
    /// guarding this or a shallower layer are void now and are dropped.
    fn activate_layer(&mut self, pair: (usize, usize), layer: u32) -> Result<()> {
        let cp = self.cp();
        let h_l = layer_timestep(layer, cp.h1);
        let source = ForceSource::Penalty { pair, layer };
        let fe = if self.broken_clocks {
            let threshold = 2.0 * cp.eta / f64::from(layer);
            let origin = next_crossing(&self.bodies, &self.state, pair, threshold)
                .unwrap_or(self.state.t_g);
            ForceEvent { source, h: h_l, origin, step: 0 }
        } else {
            let step = next_aligned_step(self.state.t_g, h_l, 0.0)?;
            ForceEvent { source, h: h_l, origin: 0.0, step }
        };
        self.queue.push(fe.time(), EventPayload::Force(fe));
        let inserted = self.queued_layers.entry(pair).or_default().insert(layer);
        debug_assert!(inserted, "layer {layer} already queued for {pair:?}");
        for old in self.registry.purge_pair_up_to(pair, layer) {
            self.queue.remove(old.handle);
        }
        Ok(())
    }

    fn handle_snapshot(&mut self, step: u64) -> Result<()> {
        if !self.state.is_finite() {
            return Err(SimError::NonFinite { what: "state", t: self.state.t_g });
        }
        let snap = diagnostics::snapshot(
            &self.bodies,
            &self.state,
            &self.materials,
            self.contact.as_ref(),
            &self.pairs,
        )?;
        self.snapshots.push(snap);
        let next = step + 1;
        self.queue.push(next as f64 * self.log_dt, EventPayload::Snapshot { step: next });
        Ok(())
    }
}

/// Earliest time strictly after the current clock at which the pair's
/// surface distance, extrapolated ballistically, shrinks to `threshold`.
/// `None` when the pair is already that close, receding, or never gets
/// there. Used only by the broken-clocks mode to restart a layer clock at
/// the moment the layer becomes active.
fn next_crossing(
    bodies: &[Body],
    state: &State,
    pair: (usize, usize),
    threshold: f64,
) -> Option<f64> {
    let (a, b) = pair;
    let (ka, kb) = (&bodies[a].kind, &bodies[b].kind);
    let dt = if ka.is_halfplane() || kb.is_halfplane() {
        let (plane, ball) = if ka.is_halfplane() { (a, b) } else { (b, a) };
        let n = match &bodies[plane].kind {
            BodyKind::HalfPlane { normal } => *normal,
            _ => unreachable!("just matched a half-plane"),
        };
        let d0 = (state.q[ball] - state.q[plane]).dot(n) - bodies[ball].kind.radius() - threshold;
        let rate = (state.qdot[ball] - state.qdot[plane]).dot(n);
        if d0 <= 0.0 || rate >= 0.0 {
            return None;
        }
        d0 / -rate
    } else {
        let r = ka.radius() + kb.radius() + threshold;
        let dq = state.q[a] - state.q[b];
        let dv = state.qdot[a] - state.qdot[b];
        let a2 = dv.dot(dv);
        let b1 = dq.dot(dv);
        let c0 = dq.dot(dq) - r * r;
        if c0 <= 0.0 || b1 >= 0.0 || a2 == 0.0 {
            return None;
        }
        let disc = b1 * b1 - a2 * c0;
        if disc <= 0.0 {
            return None;
        }
        (-b1 - disc.sqrt()) / a2
    };
    let t = state.t_g + dt;
    (t > state.t_g).then_some(t)
}
