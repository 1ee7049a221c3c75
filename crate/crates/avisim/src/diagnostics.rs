//! Energy/momentum bookkeeping, snapshot records, drift statistics, and CSV
//! emission.

use std::io::{self, Write};

use crate::error::{Result, SimError};
use crate::math::Vec3;
use crate::potentials::{pair_geometry, ContactParams, Material};
use crate::state::{Body, State};

/// One diagnostic record, taken with the state drifted to `t`.
#[derive(Debug, Clone, Copy)]
pub struct Snapshot {
    pub t: f64,
    pub e_kin: f64,
    pub e_mat: f64,
    pub e_pen: f64,
    pub e_total: f64,
    /// Total momentum of the movable bodies.
    pub momentum: Vec3,
    /// Minimum surface separation over all contact pairs; infinite when the
    /// scene has no contact pairs.
    pub min_gap: f64,
}

/// Measures kinetic, material, and penalty energies plus momentum and the
/// minimum surface gap. Penalty energy sums every active layer of every pair
/// with the restitution branch currently in force.
pub fn snapshot(
    bodies: &[Body],
    state: &State,
    materials: &[Material],
    contact: Option<&ContactParams>,
    pairs: &[(usize, usize)],
) -> Result<Snapshot> {
    let e_kin = state.kinetic_energy();
    let e_mat: f64 = materials.iter().map(|m| m.energy(state)).sum();
    let mut e_pen = 0.0;
    let mut min_gap = f64::INFINITY;
    for &(a, b) in pairs {
        let geom = pair_geometry(bodies, state, a, b)?;
        let d = geom.distance;
        min_gap = min_gap.min(d);
        let Some(cp) = contact else { continue };
        if d >= 2.0 * cp.eta {
            continue;
        }
        if d <= 0.0 {
            return Err(SimError::Penetration { a, b, t: state.t_g });
        }
        let separating = (state.qdot[a] - state.qdot[b]).dot(geom.normal_a) > 0.0;
        let s = if separating { cp.e } else { 1.0 };
        let active = (2.0 * cp.eta / d).floor() as u64;
        for l in 1..=active {
            let lf = l as f64;
            let g = d - 2.0 * cp.eta / lf;
            e_pen += s * lf * lf * lf * cp.k * g * g;
        }
    }
    Ok(Snapshot {
        t: state.t_g,
        e_kin,
        e_mat,
        e_pen,
        e_total: e_kin + e_mat + e_pen,
        momentum: state.total_momentum(),
        min_gap,
    })
}

/// Least-squares slope of total energy against time. Requires at least 100
/// samples so single-bounce transients cannot masquerade as drift.
pub fn drift_slope(series: &[(f64, f64)]) -> Result<f64> {
    if series.len() < 100 {
        return Err(SimError::TooFewSamples { need: 100, have: series.len() });
    }
    let n = series.len() as f64;
    let t_mean = series.iter().map(|s| s.0).sum::<f64>() / n;
    let e_mean = series.iter().map(|s| s.1).sum::<f64>() / n;
    let mut num = 0.0;
    let mut den = 0.0;
    for &(t, e) in series {
        num += (t - t_mean) * (e - e_mean);
        den += (t - t_mean) * (t - t_mean);
    }
    if den == 0.0 {
        return Err(SimError::Invalid { msg: "drift slope needs distinct sample times".into() });
    }
    Ok(num / den)
}

/// Writes the snapshot series as CSV with a fixed header and 17 significant
/// digits per value, so equal runs produce byte-identical files.
pub fn write_csv<W: Write>(out: &mut W, snapshots: &[Snapshot], dim: usize) -> io::Result<()> {
    if dim == 3 {
        writeln!(out, "t,E_kin,E_mat,E_pen,E_total,px,py,pz,min_gap")?;
    } else {
        writeln!(out, "t,E_kin,E_mat,E_pen,E_total,px,py,min_gap")?;
    }
    for s in snapshots {
        write!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            s.t, s.e_kin, s.e_mat, s.e_pen, s.e_total, s.momentum.x, s.momentum.y
        )?;
        if dim == 3 {
            write!(out, ",{:.16e}", s.momentum.z)?;
        }
        writeln!(out, ",{:.16e}", s.min_gap)?;
    }
    Ok(())
}
