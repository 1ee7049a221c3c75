//! Deterministic time-ordered event queue.
//!
//! An indexed binary min-heap ordered by (time, kind rank, sequence number).
//! Every entry gets a stable handle so certificate events can be rescheduled
//! or removed in O(log n) when a kick changes velocities. Ties at equal time
//! resolve force events first (a velocity update at time t may extend a
//! certificate that would otherwise fire spuriously), then certificates,
//! then snapshots, then insertion order.

use crate::error::{Result, SimError};

/// What a force event integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForceSource {
    /// Index into the scene's material force list.
    Material(usize),
    /// One penalty layer of one contact pair.
    Penalty { pair: (usize, usize), layer: u32 },
}

/// A force-integration event. Its time is always `origin + step * h` with an
/// integer step count, so repeated rescheduling never accumulates round-off.
#[derive(Debug, Clone, Copy)]
pub struct ForceEvent {
    pub source: ForceSource,
    pub h: f64,
    pub origin: f64,
    pub step: u64,
}

impl ForceEvent {
    pub fn time(&self) -> f64 {
        self.origin + self.step as f64 * self.h
    }

    /// The same clock, one step later.
    pub fn next(&self) -> ForceEvent {
        ForceEvent { step: self.step + 1, ..*self }
    }
}

#[derive(Debug, Clone, Copy)]
pub enum EventPayload {
    Force(ForceEvent),
    /// Expiry of the separating slab guarding `guard` for `pair`.
    Certificate { pair: (usize, usize), guard: u32 },
    /// Diagnostic snapshot on its own fixed cadence clock.
    Snapshot { step: u64 },
}

impl EventPayload {
    fn rank(&self) -> u8 {
        match self {
            EventPayload::Force(_) => 0,
            EventPayload::Certificate { .. } => 1,
            EventPayload::Snapshot { .. } => 2,
        }
    }
}

/// Stable reference to a queued event; invalidated by pop or remove.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct EventHandle {
    slot: usize,
    generation: u64,
}

struct Slot {
    t: f64,
    rank: u8,
    seq: u64,
    generation: u64,
    payload: EventPayload,
    /// Position in the heap array while live.
    pos: usize,
    live: bool,
}

#[derive(Default)]
pub struct EventQueue {
    /// Heap of slot indices, min-ordered by (t, rank, seq).
    heap: Vec<usize>,
    slots: Vec<Slot>,
    free: Vec<usize>,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn push(&mut self, t: f64, payload: EventPayload) -> EventHandle {
        debug_assert!(t.is_finite(), "event time must be finite");
        let seq = self.next_seq;
        self.next_seq += 1;
        let pos = self.heap.len();
        let slot = match self.free.pop() {
            Some(slot) => {
                let s = &mut self.slots[slot];
                s.t = t;
                s.rank = payload.rank();
                s.seq = seq;
                s.payload = payload;
                s.pos = pos;
                s.live = true;
                slot
            }
            None => {
                self.slots.push(Slot {
                    t,
                    rank: payload.rank(),
                    seq,
                    generation: 0,
                    payload,
                    pos,
                    live: true,
                });
                self.slots.len() - 1
            }
        };
        self.heap.push(slot);
        self.sift_up(pos);
        EventHandle { slot, generation: self.slots[slot].generation }
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.first().map(|&slot| self.slots[slot].t)
    }

    pub fn pop(&mut self) -> Option<(f64, EventPayload)> {
        let &slot = self.heap.first()?;
        self.detach(0);
        let s = &mut self.slots[slot];
        s.live = false;
        s.generation += 1;
        self.free.push(slot);
        let s = &self.slots[slot];
        Some((s.t, s.payload))
    }

    /// Removes an arbitrary queued event. Returns None for stale handles.
    pub fn remove(&mut self, handle: EventHandle) -> Option<(f64, EventPayload)> {
        let slot = self.resolve(handle)?;
        self.detach(self.slots[slot].pos);
        let s = &mut self.slots[slot];
        s.live = false;
        s.generation += 1;
        self.free.push(slot);
        let s = &self.slots[slot];
        Some((s.t, s.payload))
    }

    /// Moves a queued event to a new time, keeping its payload and tie-break
    /// order. Returns false for stale handles.
    pub fn update_time(&mut self, handle: EventHandle, t: f64) -> bool {
        let Some(slot) = self.resolve(handle) else { return false };
        debug_assert!(t.is_finite(), "event time must be finite");
        let old = self.slots[slot].t;
        if old == t {
            return true;
        }
        self.slots[slot].t = t;
        let pos = self.slots[slot].pos;
        if t < old {
            self.sift_up(pos);
        } else {
            self.sift_down(pos);
        }
        true
    }

    fn resolve(&self, handle: EventHandle) -> Option<usize> {
        let s = self.slots.get(handle.slot)?;
        (s.live && s.generation == handle.generation).then_some(handle.slot)
    }

    /// Removes the heap entry at `pos`, filling the hole with the last leaf.
    fn detach(&mut self, pos: usize) {
        let last = self.heap.len() - 1;
        self.heap.swap(pos, last);
        self.slots[self.heap[pos]].pos = pos;
        self.heap.pop();
        if pos < self.heap.len() {
            self.sift_down(pos);
            self.sift_up(pos);
        }
    }

    fn less(&self, a: usize, b: usize) -> bool {
        let (sa, sb) = (&self.slots[a], &self.slots[b]);
        match sa.t.total_cmp(&sb.t) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => (sa.rank, sa.seq) < (sb.rank, sb.seq),
        }
    }

    fn sift_up(&mut self, mut pos: usize) {
        while pos > 0 {
            let parent = (pos - 1) / 2;
            if !self.less(self.heap[pos], self.heap[parent]) {
                break;
            }
            self.heap.swap(pos, parent);
            self.slots[self.heap[pos]].pos = pos;
            self.slots[self.heap[parent]].pos = parent;
            pos = parent;
        }
    }

    fn sift_down(&mut self, mut pos: usize) {
        loop {
            let mut best = pos;
            for child in [2 * pos + 1, 2 * pos + 2] {
                if child < self.heap.len() && self.less(self.heap[child], self.heap[best]) {
                    best = child;
                }
            }
            if best == pos {
                break;
            }
            self.heap.swap(pos, best);
            self.slots[self.heap[pos]].pos = pos;
            self.slots[self.heap[best]].pos = best;
            pos = best;
        }
    }
}

/// The smallest `origin + n * h` (integer n) strictly greater than `t_now`,
/// as a step count. Times within a 1e-9-scale tolerance of the grid count as
/// already on it, so an event popped at a grid time advances a full step.
pub fn next_aligned_step(t_now: f64, h: f64, origin: f64) -> Result<u64> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(SimError::Invalid { msg: format!("time step must be positive, got {h}") });
    }
    let rel = (t_now - origin) / h;
    let rounded = rel.round();
    let mut n = if (rel - rounded).abs() <= 1e-9 * rel.abs().max(1.0) {
        rounded as i64 + 1
    } else {
        rel.ceil() as i64
    }
    .max(0) as u64;
    while origin + n as f64 * h <= t_now {
        n += 1;
    }
    Ok(n)
}

/// Time form of [`next_aligned_step`].
pub fn next_aligned_time(t_now: f64, h: f64, origin: f64) -> Result<f64> {
    Ok(origin + next_aligned_step(t_now, h, origin)? as f64 * h)
}
