//! Potentials: material forces (gravity, springs) and the infinite family of
//! nested quadratic penalty layers that resolves contact.
//!
//! Layer `l` of a contact pair watches the gap function
//! `g_l(q) = d(q) - 2*eta/l`, where `d` is the surface separation distance.
//! While `g_l <= 0` the layer stores energy `s * l^3 * k * g_l^2`, with
//! `s = e` (the restitution coefficient) while the pair separates and
//! `s = 1` while it approaches. Stiffness grows as `l^3`, the guarded
//! thickness shrinks as `eta/l`, and the full-compression energies
//! `4*k*eta^2*l` therefore diverge: no finite-energy trajectory can pass
//! through every layer. Each layer integrates with its own time step
//! `h_1 * l^(-3/2)`, which keeps every layer equally well resolved.

use crate::error::{Result, SimError};
use crate::math::{Vec3, DEGENERATE_LENGTH};
use crate::state::{Body, BodyKind, State};

/// Relative tangential speeds below this are treated as zero by friction.
pub const FRICTION_VELOCITY_CUTOFF: f64 = 1e-9;

/// Global contact parameters of a scene.
#[derive(Debug, Clone, Copy)]
pub struct ContactParams {
    /// First-layer thickness.
    pub eta: f64,
    /// First-layer stiffness.
    pub k: f64,
    /// Coefficient of restitution in [0, 1].
    pub e: f64,
    /// Coulomb friction coefficient.
    pub mu: f64,
    /// Base (layer-1) integration step.
    pub h1: f64,
}

/// Base penalty time step `h_1 = alpha * sqrt(m_min / (2k))`: a fixed
/// fraction of the contact oscillation period of the lightest body against
/// the first layer.
pub fn base_timestep(k: f64, m_min: f64, alpha: f64) -> Result<f64> {
    if !(k > 0.0) || !(m_min > 0.0) || !(alpha > 0.0) {
        return Err(SimError::Invalid {
            msg: format!("base time step needs positive k, m_min, alpha (got {k}, {m_min}, {alpha})"),
        });
    }
    Ok(alpha * (m_min / (2.0 * k)).sqrt())
}

/// Step of layer `l`: `h_1 * l^(-3/2)`. Written as `l * sqrt(l)` so that
/// perfect squares come out exact.
pub fn layer_timestep(l: u32, h1: f64) -> f64 {
    let lf = l as f64;
    h1 / (lf * lf.sqrt())
}

/// Surface geometry of a contact pair: separation distance and the unit
/// direction in which moving body `a` increases it.
#[derive(Debug, Clone, Copy)]
pub struct PairGeometry {
    /// Distance between the closest surface points (negative inside).
    pub distance: f64,
    /// d(distance)/d(q_a); the gradient on `b` is the exact negation.
    pub normal_a: Vec3,
}

/// Closest-approach geometry for the supported kind combinations:
/// round-round and round-halfplane.
pub fn pair_geometry(bodies: &[Body], state: &State, a: usize, b: usize) -> Result<PairGeometry> {
    let (ka, kb) = (&bodies[a].kind, &bodies[b].kind);
    match (ka.is_halfplane(), kb.is_halfplane()) {
        (true, true) => Err(SimError::UnsupportedPair { a, b }),
        (false, false) => {
            let d = state.q[a] - state.q[b];
            let normal_a = d.normalized().ok_or(SimError::DegenerateGeometry { a, b })?;
            Ok(PairGeometry {
                distance: d.norm() - ka.radius() - kb.radius(),
                normal_a,
            })
        }
        (plane_is_a, _) => {
            let (plane, ball) = if plane_is_a { (a, b) } else { (b, a) };
            let n = match &bodies[plane].kind {
                BodyKind::HalfPlane { normal } => *normal,
                _ => unreachable!(),
            };
            let distance = (state.q[ball] - state.q[plane]).dot(n) - bodies[ball].kind.radius();
            let normal_a = if plane_is_a { -n } else { n };
            Ok(PairGeometry { distance, normal_a })
        }
    }
}

/// Gap of a thickened pair: surface separation minus `2 * thickness`.
/// Non-positive means the layer of that thickness is active.
pub fn gap(bodies: &[Body], state: &State, a: usize, b: usize, thickness: f64) -> Result<f64> {
    Ok(pair_geometry(bodies, state, a, b)?.distance - 2.0 * thickness)
}

/// Gradient of the gap with respect to the two body positions. Unit length,
/// equal and opposite, independent of the thickness.
pub fn gap_gradient(bodies: &[Body], state: &State, a: usize, b: usize) -> Result<(Vec3, Vec3)> {
    let geom = pair_geometry(bodies, state, a, b)?;
    Ok((geom.normal_a, -geom.normal_a))
}

/// Rate of change of the surface separation; positive while separating.
pub fn relative_normal_speed(bodies: &[Body], state: &State, a: usize, b: usize) -> Result<f64> {
    let geom = pair_geometry(bodies, state, a, b)?;
    Ok((state.qdot[a] - state.qdot[b]).dot(geom.normal_a))
}

/// One penalty layer of one contact pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PenaltyLayer {
    pub a: usize,
    pub b: usize,
    pub layer: u32,
}

/// Everything the scheduler needs from one evaluation of a layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerForce {
    /// Gap `g_{eta/l}`; non-negative means the layer exerted zero force.
    pub gap: f64,
    /// Whether the pair is currently separating.
    pub separating: bool,
    /// Unit contact normal as seen from body `a`.
    pub normal_a: Vec3,
    /// Potential gradient on body `a`; body `b` receives the negation.
    /// Zero while the layer is inactive.
    pub grad_a: Vec3,
}

impl PenaltyLayer {
    pub fn thickness(&self, cp: &ContactParams) -> f64 {
        cp.eta / self.layer as f64
    }

    pub fn timestep(&self, cp: &ContactParams) -> f64 {
        layer_timestep(self.layer, cp.h1)
    }

    fn stiffness(&self, cp: &ContactParams) -> f64 {
        let lf = self.layer as f64;
        lf * lf * lf * cp.k
    }

    /// Restitution branch: `e` while separating, 1 while approaching.
    fn s_factor(&self, cp: &ContactParams, separating: bool) -> f64 {
        if separating {
            cp.e
        } else {
            1.0
        }
    }

    /// Gap, branch and gradient in one pass.
    pub fn evaluate(&self, cp: &ContactParams, bodies: &[Body], state: &State) -> Result<LayerForce> {
        let geom = pair_geometry(bodies, state, self.a, self.b)?;
        let g = geom.distance - 2.0 * self.thickness(cp);
        let separating = (state.qdot[self.a] - state.qdot[self.b]).dot(geom.normal_a) > 0.0;
        let grad_a = if g >= 0.0 {
            Vec3::ZERO
        } else {
            geom.normal_a * (2.0 * self.s_factor(cp, separating) * self.stiffness(cp) * g)
        };
        Ok(LayerForce { gap: g, separating, normal_a: geom.normal_a, grad_a })
    }

    /// Potential energy stored in this layer: zero when inactive, otherwise
    /// `s * l^3 * k * g^2`.
    pub fn energy(&self, cp: &ContactParams, bodies: &[Body], state: &State) -> Result<f64> {
        let geom = pair_geometry(bodies, state, self.a, self.b)?;
        let g = geom.distance - 2.0 * self.thickness(cp);
        if g >= 0.0 {
            return Ok(0.0);
        }
        let separating = (state.qdot[self.a] - state.qdot[self.b]).dot(geom.normal_a) > 0.0;
        Ok(self.s_factor(cp, separating) * self.stiffness(cp) * g * g)
    }

    /// Potential gradient on bodies `(a, b)`; both zero when inactive.
    pub fn gradient(
        &self,
        cp: &ContactParams,
        bodies: &[Body],
        state: &State,
    ) -> Result<(Vec3, Vec3)> {
        let f = self.evaluate(cp, bodies, state)?;
        Ok((f.grad_a, -f.grad_a))
    }
}

/// Friction impulse on body `a` for one penalty kick, following Coulomb's
/// law: magnitude `min(mu * |J_n|, impulse that zeroes the tangential
/// relative velocity)`, direction opposite the tangential relative motion.
/// `v_t` is the relative velocity `(v_a - v_b)` projected orthogonal to the
/// contact normal, and `reduced_mass = 1 / (1/m_a + 1/m_b)`.
pub fn friction_impulse(normal_impulse: f64, v_t: Vec3, mu: f64, reduced_mass: f64) -> Vec3 {
    let speed = v_t.norm();
    if speed <= FRICTION_VELOCITY_CUTOFF || mu * normal_impulse.abs() <= 0.0 {
        return Vec3::ZERO;
    }
    let stopping = reduced_mass * speed;
    let magnitude = (mu * normal_impulse.abs()).min(stopping);
    v_t * (-magnitude / speed)
}

/// A material (non-contact) force with its own fixed time step.
#[derive(Debug, Clone)]
pub struct Material {
    pub kind: MaterialKind,
    pub h: f64,
}

#[derive(Debug, Clone)]
pub enum MaterialKind {
    /// Uniform acceleration field acting on every movable body.
    Gravity { g: Vec3 },
    /// Linear spring between two bodies.
    Spring { a: usize, b: usize, rest: f64, stiffness: f64 },
}

impl Material {
    /// Bodies whose velocities a kick of this force can change.
    pub fn stencil(&self, state: &State) -> Vec<usize> {
        match &self.kind {
            MaterialKind::Gravity { .. } => {
                (0..state.q.len()).filter(|&i| state.inv_mass[i] > 0.0).collect()
            }
            MaterialKind::Spring { a, b, .. } => vec![*a, *b],
        }
    }

    /// Potential gradient per stencil body.
    pub fn gradient(&self, state: &State) -> Result<Vec<(usize, Vec3)>> {
        match &self.kind {
            MaterialKind::Gravity { g } => Ok((0..state.q.len())
                .filter(|&i| state.inv_mass[i] > 0.0)
                .map(|i| (i, -*g * state.mass[i]))
                .collect()),
            MaterialKind::Spring { a, b, rest, stiffness } => {
                let d = state.q[*a] - state.q[*b];
                let len = d.norm();
                if len < DEGENERATE_LENGTH {
                    return Err(SimError::DegenerateGeometry { a: *a, b: *b });
                }
                let f = d * (stiffness * (len - rest) / len);
                Ok(vec![(*a, f), (*b, -f)])
            }
        }
    }

    /// Potential energy (gravity is measured from the coordinate origin).
    pub fn energy(&self, state: &State) -> f64 {
        match &self.kind {
            MaterialKind::Gravity { g } => {
                let mut v = 0.0;
                for i in 0..state.q.len() {
                    if state.inv_mass[i] > 0.0 {
                        v -= state.mass[i] * g.dot(state.q[i]);
                    }
                }
                v
            }
            MaterialKind::Spring { a, b, rest, stiffness } => {
                let stretch = (state.q[*a] - state.q[*b]).norm() - rest;
                0.5 * stiffness * stretch * stretch
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn disc(index: usize, radius: f64) -> Body {
        Body { index, kind: BodyKind::Disc { radius } }
    }

    fn particle(index: usize) -> Body {
        Body { index, kind: BodyKind::Particle }
    }

    fn halfplane(index: usize, normal: Vec3) -> Body {
        Body { index, kind: BodyKind::HalfPlane { normal } }
    }

    fn state_at(q: Vec<Vec3>, qdot: Vec<Vec3>) -> State {
        let n = q.len();
        State { t_g: 0.0, q, qdot, mass: vec![1.0; n], inv_mass: vec![1.0; n] }
    }

    #[test]
    fn gap_between_discs() {
        // radii 0.1 each, centers 0.5 apart, thickness 0.01:
        // 0.5 - 0.1 - 0.1 - 0.02 = 0.28
        let bodies = vec![disc(0, 0.1), disc(1, 0.1)];
        let s = state_at(vec![Vec3::ZERO, Vec3::new(0.5, 0.0, 0.0)], vec![Vec3::ZERO; 2]);
        let g = gap(&bodies, &s, 0, 1, 0.01).unwrap();
        assert!((g - 0.28).abs() < 1e-15);
    }

    #[test]
    fn gap_particle_above_halfplane() {
        // particle at height 1 above the floor, thickness 0.1 -> 0.8
        let bodies = vec![particle(0), halfplane(1, Vec3::new(0.0, 1.0, 0.0))];
        let s = state_at(vec![Vec3::new(0.0, 1.0, 0.0), Vec3::ZERO], vec![Vec3::ZERO; 2]);
        let g = gap(&bodies, &s, 0, 1, 0.1).unwrap();
        assert!((g - 0.8).abs() < 1e-15);
    }

    #[test]
    fn gap_of_touching_surfaces_is_zero() {
        let bodies = vec![disc(0, 0.3), disc(1, 0.2)];
        let s = state_at(vec![Vec3::ZERO, Vec3::new(0.5, 0.0, 0.0)], vec![Vec3::ZERO; 2]);
        assert_eq!(gap(&bodies, &s, 0, 1, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn gap_rejects_degenerate_and_unsupported_pairs() {
        let bodies = vec![particle(0), particle(1)];
        let s = state_at(vec![Vec3::ZERO, Vec3::new(1e-13, 0.0, 0.0)], vec![Vec3::ZERO; 2]);
        assert!(matches!(gap(&bodies, &s, 0, 1, 0.0), Err(SimError::DegenerateGeometry { .. })));

        let planes = vec![
            halfplane(0, Vec3::new(0.0, 1.0, 0.0)),
            halfplane(1, Vec3::new(0.0, -1.0, 0.0)),
        ];
        let s2 = state_at(vec![Vec3::ZERO, Vec3::new(0.0, 3.0, 0.0)], vec![Vec3::ZERO; 2]);
        assert!(matches!(gap(&planes, &s2, 0, 1, 0.0), Err(SimError::UnsupportedPair { .. })));
    }

    #[test]
    fn gap_gradient_is_unit_and_opposite() {
        let bodies = vec![disc(0, 0.1), disc(1, 0.2)];
        let s = state_at(
            vec![Vec3::new(1.0, 2.0, 0.0), Vec3::new(-0.5, 0.25, 0.0)],
            vec![Vec3::ZERO; 2],
        );
        let (ga, gb) = gap_gradient(&bodies, &s, 0, 1).unwrap();
        assert!((ga.norm() - 1.0).abs() < 1e-14);
        assert_eq!(gb, -ga);
    }

    /// Independent check of every analytic gap gradient against central
    /// finite differences on random configurations.
    #[test]
    fn gap_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let eps = 1e-6;
        for case in 0..100 {
            let round_round = case % 2 == 0;
            let bodies = if round_round {
                vec![disc(0, rng.gen_range(0.0..0.3)), disc(1, rng.gen_range(0.0..0.3))]
            } else {
                let n = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0)
                    .normalized()
                    .unwrap_or(Vec3::new(0.0, 1.0, 0.0));
                vec![disc(0, rng.gen_range(0.0..0.3)), halfplane(1, n)]
            };
            let mut s = state_at(
                vec![
                    Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), 0.0),
                    Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), 0.0),
                ],
                vec![Vec3::ZERO; 2],
            );
            if (s.q[0] - s.q[1]).norm() < 0.1 {
                continue; // keep away from the degenerate configuration
            }
            let (ga, gb) = gap_gradient(&bodies, &s, 0, 1).unwrap();
            for (body, grad) in [(0usize, ga), (1usize, gb)] {
                if bodies[body].kind.is_halfplane() {
                    continue; // anchor of a fixed plane: gradient is -n by construction
                }
                for axis in 0..2 {
                    let step = if axis == 0 {
                        Vec3::new(eps, 0.0, 0.0)
                    } else {
                        Vec3::new(0.0, eps, 0.0)
                    };
                    s.q[body] += step;
                    let plus = gap(&bodies, &s, 0, 1, 0.0).unwrap();
                    s.q[body] -= step * 2.0;
                    let minus = gap(&bodies, &s, 0, 1, 0.0).unwrap();
                    s.q[body] += step;
                    let fd = (plus - minus) / (2.0 * eps);
                    let analytic = if axis == 0 { grad.x } else { grad.y };
                    assert!(
                        (fd - analytic).abs() <= 1e-6,
                        "case {case} body {body} axis {axis}: fd {fd} vs {analytic}"
                    );
                }
            }
        }
    }

    proptest! {
        /// Translating the whole configuration changes neither gap nor
        /// gradient beyond round-off.
        #[test]
        fn gap_is_translation_invariant(
            ax in -2.0..2.0f64, ay in -2.0..2.0f64,
            bx in -2.0..2.0f64, by in -2.0..2.0f64,
            sx in -5.0..5.0f64, sy in -5.0..5.0f64,
        ) {
            let bodies = vec![disc(0, 0.1), disc(1, 0.2)];
            let q = vec![Vec3::new(ax, ay, 0.0), Vec3::new(bx, by, 0.0)];
            prop_assume!((q[0] - q[1]).norm() > 0.1);
            let s = state_at(q.clone(), vec![Vec3::ZERO; 2]);
            let shift = Vec3::new(sx, sy, 0.0);
            let s2 = state_at(vec![q[0] + shift, q[1] + shift], vec![Vec3::ZERO; 2]);
            let g1 = gap(&bodies, &s, 0, 1, 0.05).unwrap();
            let g2 = gap(&bodies, &s2, 0, 1, 0.05).unwrap();
            prop_assert!((g1 - g2).abs() <= 1e-12);
            let (n1, _) = gap_gradient(&bodies, &s, 0, 1).unwrap();
            let (n2, _) = gap_gradient(&bodies, &s2, 0, 1).unwrap();
            prop_assert!((n1 - n2).norm() <= 1e-12);
        }
    }

    fn contact(eta: f64, k: f64, e: f64) -> ContactParams {
        ContactParams { eta, k, e, mu: 0.0, h1: 1.0 }
    }

    /// Two discs with touching surfaces, optionally moving apart.
    fn touching_pair(separating: bool) -> (Vec<Body>, State) {
        let bodies = vec![disc(0, 0.5), disc(1, 0.5)];
        let v = if separating { 1.0 } else { 0.0 };
        let s = state_at(
            vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0)],
            vec![Vec3::new(-v, 0.0, 0.0), Vec3::new(v, 0.0, 0.0)],
        );
        (bodies, s)
    }

    #[test]
    fn layer_energy_of_touching_surfaces() {
        // l = 2, k = 1000, eta = 0.1, surfaces touching while approaching:
        // g = -0.1, energy = 2^3 * 1000 * 0.01 = 80
        let (bodies, s) = touching_pair(false);
        let cp = contact(0.1, 1000.0, 1.0);
        let layer = PenaltyLayer { a: 0, b: 1, layer: 2 };
        let v = layer.energy(&cp, &bodies, &s).unwrap();
        assert!((v - 80.0).abs() < 1e-12);
    }

    #[test]
    fn full_compression_energies_sum_like_4_k_eta_sq_l() {
        // layers 1..3 at k = 1000, eta = 0.1: 40 + 80 + 120 = 240
        let (bodies, s) = touching_pair(false);
        let cp = contact(0.1, 1000.0, 1.0);
        let mut total = 0.0;
        for l in 1..=3 {
            total += PenaltyLayer { a: 0, b: 1, layer: l }.energy(&cp, &bodies, &s).unwrap();
        }
        assert!((total - 240.0).abs() < 1e-12);
    }

    #[test]
    fn restitution_weakens_the_separating_branch() {
        let (bodies, s) = touching_pair(true);
        let full = contact(0.1, 1000.0, 1.0);
        let weak = contact(0.1, 1000.0, 0.5);
        let layer = PenaltyLayer { a: 0, b: 1, layer: 1 };
        let e_full = layer.energy(&full, &bodies, &s).unwrap();
        let e_weak = layer.energy(&weak, &bodies, &s).unwrap();
        assert!((e_full - 40.0).abs() < 1e-12);
        assert!((e_weak - 20.0).abs() < 1e-12);
        assert!(e_weak < e_full);
    }

    #[test]
    fn inactive_layer_has_no_energy_or_force() {
        let bodies = vec![disc(0, 0.1), disc(1, 0.1)];
        let s = state_at(vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0)], vec![Vec3::ZERO; 2]);
        let cp = contact(0.1, 1000.0, 1.0);
        let layer = PenaltyLayer { a: 0, b: 1, layer: 1 };
        assert_eq!(layer.energy(&cp, &bodies, &s).unwrap(), 0.0);
        let (ga, gb) = layer.gradient(&cp, &bodies, &s).unwrap();
        assert_eq!(ga, Vec3::ZERO);
        assert_eq!(gb, Vec3::ZERO);
    }

    #[test]
    fn layer_gradient_pushes_bodies_apart() {
        // l = 1, k = 1000, g = -0.05 while approaching: per-body magnitude
        // 2 * 1000 * 0.05 = 100, directions opposite along the normal.
        let bodies = vec![disc(0, 0.5), disc(1, 0.5)];
        let s = state_at(vec![Vec3::ZERO, Vec3::new(1.15, 0.0, 0.0)], vec![Vec3::ZERO; 2]);
        let cp = contact(0.1, 1000.0, 1.0);
        let layer = PenaltyLayer { a: 0, b: 1, layer: 1 };
        let (ga, gb) = layer.gradient(&cp, &bodies, &s).unwrap();
        assert!((ga.norm() - 100.0).abs() < 1e-9);
        assert_eq!(gb, -ga);
        // -grad on body 0 points away from body 1
        assert!((-ga).x < 0.0);
    }

    #[test]
    fn layer_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cp = contact(0.1, 1000.0, 1.0);
        let eps = 1e-7;
        let mut checked = 0;
        while checked < 100 {
            let bodies = vec![disc(0, 0.3), disc(1, 0.3)];
            let q1 = Vec3::new(rng.gen_range(0.55..0.78), rng.gen_range(-0.1..0.1), 0.0);
            let mut s = state_at(vec![Vec3::ZERO, q1], vec![Vec3::ZERO; 2]);
            let layer = PenaltyLayer { a: 0, b: 1, layer: rng.gen_range(1..4) };
            let f = layer.evaluate(&cp, &bodies, &s).unwrap();
            if f.gap >= -0.01 {
                continue; // want a clearly active layer with room for the stencil
            }
            let (ga, _) = layer.gradient(&cp, &bodies, &s).unwrap();
            for axis in 0..2 {
                let step = if axis == 0 { Vec3::new(eps, 0.0, 0.0) } else { Vec3::new(0.0, eps, 0.0) };
                s.q[0] += step;
                let plus = layer.energy(&cp, &bodies, &s).unwrap();
                s.q[0] -= step * 2.0;
                let minus = layer.energy(&cp, &bodies, &s).unwrap();
                s.q[0] += step;
                let fd = (plus - minus) / (2.0 * eps);
                let analytic = if axis == 0 { ga.x } else { ga.y };
                let scale = analytic.abs().max(1.0);
                assert!(
                    (fd - analytic).abs() / scale <= 1e-6,
                    "layer {} fd {fd} vs {analytic}",
                    layer.layer
                );
            }
            checked += 1;
        }
    }

    #[test]
    fn deeper_layers_nest_inside_shallower_ones() {
        // Active layer count at surface distance d is floor(2*eta / d):
        // activation thresholds d <= 2*eta/l nest, so layer l active
        // implies every shallower layer is active too.
        let eta = 0.1;
        let cp = contact(eta, 1000.0, 1.0);
        let bodies = vec![disc(0, 0.5), disc(1, 0.5)];
        for i in 1..200 {
            // the offset keeps d away from exact activation thresholds,
            // where the floor below and the gap sign can round apart
            let d = 0.25 * i as f64 / 200.0 + 1.23e-6;
            let s = state_at(vec![Vec3::ZERO, Vec3::new(1.0 + d, 0.0, 0.0)], vec![Vec3::ZERO; 2]);
            let mut active = Vec::new();
            for l in 1..=64 {
                let layer = PenaltyLayer { a: 0, b: 1, layer: l };
                let g = layer.evaluate(&cp, &bodies, &s).unwrap().gap;
                if g <= 0.0 {
                    active.push(l);
                }
            }
            let expected = (2.0 * eta / d).floor().min(64.0) as usize;
            assert_eq!(active.len(), expected, "d = {d}");
            // nesting: the active set is exactly 1..=n
            for (idx, l) in active.iter().enumerate() {
                assert_eq!(*l as usize, idx + 1);
            }
        }
    }

    #[test]
    fn layer_timesteps_shrink_as_l_to_three_halves() {
        let h1 = 0.25;
        assert_eq!(layer_timestep(1, h1), h1);
        assert_eq!(layer_timestep(4, h1), h1 / 8.0);
        assert_eq!(layer_timestep(9, h1), h1 / 27.0);
    }

    #[test]
    fn base_timestep_formula() {
        // m_min = 1, k = 1000, alpha = 0.1 -> 0.1 * sqrt(1/2000) ~ 2.236e-3
        let h1 = base_timestep(1000.0, 1.0, 0.1).unwrap();
        assert!((h1 - 2.2360679774997896e-3).abs() < 1e-15);
        assert!(base_timestep(0.0, 1.0, 0.1).is_err());
        assert!(base_timestep(1000.0, -1.0, 0.1).is_err());
        assert!(base_timestep(1000.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn friction_caps_at_stopping_impulse() {
        // Tiny tangential speed: mu * |J_n| would overshoot, so the impulse
        // exactly zeroes the relative tangential velocity instead.
        let v_t = Vec3::new(1e-3, 0.0, 0.0);
        let reduced_mass = 0.5;
        let j = friction_impulse(10.0, v_t, 0.8, reduced_mass);
        assert!((j.x + reduced_mass * 1e-3).abs() < 1e-18);
        // applying j to a and -j to b with unit masses changes the relative
        // velocity by j * (1/m_a + 1/m_b) = j / reduced_mass = -v_t
        let delta_rel = j * (1.0 / reduced_mass);
        assert!((v_t + delta_rel).norm() < 1e-18);
    }

    #[test]
    fn friction_obeys_the_coulomb_bound() {
        let v_t = Vec3::new(5.0, 0.0, 0.0);
        let j = friction_impulse(2.0, v_t, 0.3, 1.0);
        assert!((j.norm() - 0.6).abs() < 1e-15);
        assert!(j.x < 0.0, "impulse opposes the tangential motion");
    }

    #[test]
    fn friction_ignores_negligible_sliding() {
        let j = friction_impulse(10.0, Vec3::new(1e-10, 0.0, 0.0), 0.8, 1.0);
        assert_eq!(j, Vec3::ZERO);
        assert_eq!(friction_impulse(10.0, Vec3::ZERO, 0.8, 1.0), Vec3::ZERO);
    }

    #[test]
    fn gravity_gradient_and_energy() {
        let mut s = state_at(
            vec![Vec3::new(0.0, 1.0, 0.0), Vec3::new(0.0, 2.0, 0.0)],
            vec![Vec3::ZERO; 2],
        );
        s.mass = vec![1.0, 3.0];
        s.inv_mass = vec![1.0, 1.0 / 3.0];
        let gravity = Material { kind: MaterialKind::Gravity { g: Vec3::new(0.0, -1.0, 0.0) }, h: 0.1 };
        let grads = gravity.gradient(&s).unwrap();
        assert_eq!(grads, vec![(0, Vec3::new(0.0, 1.0, 0.0)), (1, Vec3::new(0.0, 3.0, 0.0))]);
        // V = sum m * g * height with g pointing down
        assert!((gravity.energy(&s) - 7.0).abs() < 1e-15);
    }

    #[test]
    fn spring_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let eps = 1e-7;
        for _ in 0..100 {
            let spring = Material {
                kind: MaterialKind::Spring {
                    a: 0,
                    b: 1,
                    rest: rng.gen_range(0.5..1.5),
                    stiffness: rng.gen_range(0.5..50.0),
                },
                h: 0.1,
            };
            let mut s = state_at(
                vec![
                    Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0),
                    Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0),
                ],
                vec![Vec3::ZERO; 2],
            );
            if (s.q[0] - s.q[1]).norm() < 0.1 {
                continue;
            }
            let grads = spring.gradient(&s).unwrap();
            for &(body, grad) in &grads {
                for axis in 0..2 {
                    let step = if axis == 0 { Vec3::new(eps, 0.0, 0.0) } else { Vec3::new(0.0, eps, 0.0) };
                    s.q[body] += step;
                    let plus = spring.energy(&s);
                    s.q[body] -= step * 2.0;
                    let minus = spring.energy(&s);
                    s.q[body] += step;
                    let fd = (plus - minus) / (2.0 * eps);
                    let analytic = if axis == 0 { grad.x } else { grad.y };
                    assert!((fd - analytic).abs() <= 1e-5 * analytic.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn spring_at_rest_length_exerts_no_force() {
        let s = state_at(vec![Vec3::ZERO, Vec3::new(1.0, 0.0, 0.0)], vec![Vec3::ZERO; 2]);
        let spring = Material {
            kind: MaterialKind::Spring { a: 0, b: 1, rest: 1.0, stiffness: 10.0 },
            h: 0.1,
        };
        let grads = spring.gradient(&s).unwrap();
        assert_eq!(grads[0].1, Vec3::ZERO);
        assert_eq!(spring.energy(&s), 0.0);
    }

    #[test]
    fn penalty_kick_conserves_pair_momentum() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cp = contact(0.1, 1000.0, 1.0);
        for _ in 0..200 {
            let bodies = vec![disc(0, 0.3), disc(1, 0.3)];
            let mut s = state_at(
                vec![Vec3::ZERO, Vec3::new(rng.gen_range(0.55..0.75), rng.gen_range(-0.05..0.05), 0.0)],
                vec![
                    Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), 0.0),
                    Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), 0.0),
                ],
            );
            s.mass = vec![rng.gen_range(0.5..4.0), rng.gen_range(0.5..4.0)];
            s.inv_mass = vec![1.0 / s.mass[0], 1.0 / s.mass[1]];
            let layer = PenaltyLayer { a: 0, b: 1, layer: rng.gen_range(1..3) };
            let (ga, gb) = layer.gradient(&cp, &bodies, &s).unwrap();
            let before = s.total_momentum();
            s.kick(&[(0, ga), (1, gb)], 1e-3).unwrap();
            let after = s.total_momentum();
            assert!((before - after).norm() <= 1e-12);
        }
    }
}
