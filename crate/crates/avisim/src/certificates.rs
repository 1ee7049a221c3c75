//! Separating-slab certificates.
//!
//! A certificate for a contact pair is a fixed planar slab of half-thickness
//! `eta/n` lying between the two surfaces. While neither surface has crossed
//! its slab face, the surface distance exceeds `2*eta/n`, so penalty layer
//! `n` cannot be active. Under piecewise-linear motion the face-crossing
//! times are linear equations, giving a cheap, conservative expiry: the slab
//! certifies inactivity up to (never beyond) the true activation time.
//! Slab geometry is frozen once found. Expiries are computed from per-body
//! *speed budgets* rather than velocity directions, so any later velocity
//! change that stays within budget leaves every expiry valid — kicks are
//! free until a body outruns its budget.

use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Result, SimError};
use crate::math::Vec3;
use crate::queue::{EventHandle, EventQueue};
use crate::state::{Body, BodyKind, State};

/// A planar slab separating the two bodies of a contact pair.
#[derive(Debug, Clone, Copy)]
pub struct SeparatingSlab {
    /// Unit normal of the slab.
    pub w: Vec3,
    /// Point on the slab mid-surface.
    pub p: Vec3,
    /// Half the slab width; the guarded layer's thickness.
    pub half_thickness: f64,
    pub pair: (usize, usize),
    /// +1 if `pair.0` lies beyond the `+w` face, -1 if beyond the `-w` face.
    pub side_of_a: f64,
}

/// Tries to place a slab of the given half-thickness between the two bodies,
/// centered so both surface clearances are equal. Returns None when the
/// surface gap is below `2 * half_thickness` (no such slab exists) or the
/// geometry is degenerate (coincident centers).
pub fn find_certificate(
    bodies: &[Body],
    state: &State,
    a: usize,
    b: usize,
    half_thickness: f64,
) -> Result<Option<SeparatingSlab>> {
    let (ka, kb) = (&bodies[a].kind, &bodies[b].kind);
    match (ka.is_halfplane(), kb.is_halfplane()) {
        (true, true) => Err(SimError::UnsupportedPair { a, b }),
        (false, false) => {
            let d = state.q[b] - state.q[a];
            let Some(w) = d.normalized() else { return Ok(None) };
            let (ra, rb) = (ka.radius(), kb.radius());
            if d.norm() - ra - rb < 2.0 * half_thickness {
                return Ok(None);
            }
            // midpoint of the two nearest surface points: equal clearances
            let p = ((state.q[a] + w * ra) + (state.q[b] - w * rb)) * 0.5;
            Ok(Some(SeparatingSlab { w, p, half_thickness, pair: (a, b), side_of_a: -1.0 }))
        }
        (plane_is_a, _) => {
            let (plane, ball) = if plane_is_a { (a, b) } else { (b, a) };
            let n = match &bodies[plane].kind {
                BodyKind::HalfPlane { normal } => *normal,
                _ => unreachable!(),
            };
            let dist = (state.q[ball] - state.q[plane]).dot(n) - bodies[ball].kind.radius();
            if dist < 2.0 * half_thickness {
                return Ok(None);
            }
            // one face flush with the (immovable) plane surface, all slack
            // given to the ball side
            let p = state.q[plane] + n * half_thickness;
            let side_of_a = if plane_is_a { -1.0 } else { 1.0 };
            Ok(Some(SeparatingSlab { w: n, p, half_thickness, pair: (a, b), side_of_a }))
        }
    }
}

impl SeparatingSlab {
    /// Smallest clearance between a body surface and its slab face;
    /// non-negative at creation by construction.
    pub fn clearance(&self, bodies: &[Body], state: &State) -> f64 {
        let mut min = f64::INFINITY;
        for (body, side) in [(self.pair.0, self.side_of_a), (self.pair.1, -self.side_of_a)] {
            if bodies[body].kind.is_halfplane() {
                min = min.min(0.0);
                continue;
            }
            let face = self.p.dot(self.w) + side * self.half_thickness;
            let surface = state.q[body].dot(self.w) - side * bodies[body].kind.radius();
            min = min.min(side * (surface - face));
        }
        min
    }

    /// Expiry: the earliest time at or after `state.t_g` when a body surface
    /// could reach its slab face, assuming only that each body's speed stays
    /// below its budget (no direction is assumed). Capped at `horizon`,
    /// which stands in for "never". A zero budget pins the body in place.
    pub fn schedule(&self, bodies: &[Body], state: &State, budgets: &[f64], horizon: f64) -> f64 {
        let mut expiry = horizon;
        for (body, side) in [(self.pair.0, self.side_of_a), (self.pair.1, -self.side_of_a)] {
            if bodies[body].kind.is_halfplane() {
                continue; // fixed geometry: its face never moves
            }
            let budget = budgets[body];
            if budget <= 0.0 {
                continue;
            }
            let face = self.p.dot(self.w) + side * self.half_thickness;
            let surface = state.q[body].dot(self.w) - side * bodies[body].kind.radius();
            let clearance = (side * (surface - face)).max(0.0);
            expiry = expiry.min(state.t_g + clearance / budget);
        }
        expiry
    }
}

/// Key of a live certificate: the pair plus the layer it guards. A pair may
/// hold guards at several depths at once (each recently retired layer leaves
/// one behind), and they expire independently.
pub type CertKey = ((usize, usize), u32);

pub struct ActiveCert {
    pub slab: SeparatingSlab,
    pub handle: EventHandle,
}

/// Bookkeeping of live certificates, indexed by pair and by body so a
/// budget raise can reschedule exactly the slabs the body supports.
pub struct CertRegistry {
    certs: BTreeMap<CertKey, ActiveCert>,
    by_body: Vec<BTreeSet<CertKey>>,
}

impl CertRegistry {
    pub fn new(n_bodies: usize) -> Self {
        CertRegistry { certs: BTreeMap::new(), by_body: vec![BTreeSet::new(); n_bodies] }
    }

    pub fn len(&self) -> usize {
        self.certs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.certs.is_empty()
    }

    pub fn get(&self, key: CertKey) -> Option<&ActiveCert> {
        self.certs.get(&key)
    }

    /// Registers a certificate, returning any displaced one with the same
    /// key (whose queue event the caller must remove).
    pub fn insert_keyed(
        &mut self,
        key: CertKey,
        slab: SeparatingSlab,
        handle: EventHandle,
    ) -> Option<ActiveCert> {
        let (pair, _) = key;
        self.by_body[pair.0].insert(key);
        self.by_body[pair.1].insert(key);
        self.certs.insert(key, ActiveCert { slab, handle })
    }

    pub fn remove(&mut self, key: CertKey) -> Option<ActiveCert> {
        let removed = self.certs.remove(&key);
        if removed.is_some() {
            let (pair, _) = key;
            self.by_body[pair.0].remove(&key);
            self.by_body[pair.1].remove(&key);
        }
        removed
    }

    /// Removes every certificate of `pair` guarding a layer at or above
    /// (shallower than or equal to) `max_guard`; those layers are active now
    /// and the slabs are void. Returns the removed entries so the caller can
    /// drop their queue events.
    pub fn purge_pair_up_to(&mut self, pair: (usize, usize), max_guard: u32) -> Vec<ActiveCert> {
        let keys: Vec<CertKey> = self
            .certs
            .range((pair, 1)..=(pair, max_guard))
            .map(|(k, _)| *k)
            .collect();
        keys.into_iter().filter_map(|k| self.remove(k)).collect()
    }

    /// Recomputes the expiry of every certificate touching the given body
    /// and moves its queue event accordingly; called after the body's speed
    /// budget rises (expiries only ever need to move when a budget does).
    pub fn reschedule_for_body(
        &self,
        queue: &mut EventQueue,
        body: usize,
        bodies: &[Body],
        state: &State,
        budgets: &[f64],
        horizon: f64,
    ) {
        for key in &self.by_body[body] {
            let cert = &self.certs[key];
            queue.update_time(cert.handle, cert.slab.schedule(bodies, state, budgets, horizon));
        }
    }

    pub fn keys(&self) -> impl Iterator<Item = CertKey> + '_ {
        self.certs.keys().copied()
    }
}
