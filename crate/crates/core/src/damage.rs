//! Scalar and directional peridynamic damage, and the conductivity laws
//! driven by them.
//!
//! The directional damage of a point along a signed axis `e` is the broken
//! volume fraction of the half-neighbourhood `{ξ : e·ξ > 0}`. Bonds exactly
//! perpendicular to `e` belong to neither half. The per-axis tensor component
//! is the larger of the two signed values.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bonds::{BondNetwork, Horizon};
use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Relative conductivity floor that keeps the conduction operator definite
/// when a direction is fully damaged.
pub const CONDUCTIVITY_FLOOR: f64 = 1e-6;

/// 1 when the bond points into the positive half-space of `e`.
pub fn direction_indicator<const D: usize>(xi: [f64; D], e: [f64; D]) -> u8 {
    let dot: f64 = xi.iter().zip(e).map(|(a, b)| a * b).sum();
    u8::from(dot > 0.0)
}

/// Damage over one half-neighbourhood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfDamage {
    pub value: f64,
    /// The half-neighbourhood was empty and `value` defaulted to 0.
    pub empty: bool,
}

/// Broken volume fraction over the bonds with `e·ξ > 0`.
pub fn half_damage<const D: usize>(
    xi: &[[f64; D]],
    intact: &[bool],
    volumes: &[f64],
    e: [f64; D],
) -> HalfDamage {
    let mut total = 0.0;
    let mut broken = 0.0;
    for ((v, &ok), &w) in xi.iter().zip(intact).zip(volumes) {
        if direction_indicator(*v, e) == 1 {
            total += w;
            if !ok {
                broken += w;
            }
        }
    }
    if total > 0.0 {
        HalfDamage {
            value: broken / total,
            empty: false,
        }
    } else {
        HalfDamage {
            value: 0.0,
            empty: true,
        }
    }
}

/// Broken volume fraction over the whole neighbourhood.
pub fn scalar_fraction(intact: &[bool], volumes: &[f64]) -> Result<f64> {
    let total: f64 = volumes.iter().sum();
    if !(total > 0.0) {
        return Err(Error::config("empty neighbourhood"));
    }
    let broken: f64 = intact
        .iter()
        .zip(volumes)
        .filter(|(&ok, _)| !ok)
        .fold(0.0, |acc, (_, &w)| acc + w);
    Ok(broken / total)
}

/// Signed directional values and the resulting per-axis maximum for `D`
/// material axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisDamage<const D: usize> {
    pub plus: [f64; D],
    pub minus: [f64; D],
    pub tensor: [f64; D],
    pub empty_halves: usize,
}

/// Directional damage along each axis of an orthonormal `basis`.
pub fn axis_damage<const D: usize>(
    xi: &[[f64; D]],
    intact: &[bool],
    volumes: &[f64],
    basis: [[f64; D]; D],
) -> AxisDamage<D> {
    let mut out = AxisDamage {
        plus: [0.0; D],
        minus: [0.0; D],
        tensor: [0.0; D],
        empty_halves: 0,
    };
    for (a, e) in basis.iter().enumerate() {
        let neg = e.map(|c| -c);
        let p = half_damage(xi, intact, volumes, *e);
        let m = half_damage(xi, intact, volumes, neg);
        out.plus[a] = p.value;
        out.minus[a] = m.value;
        out.tensor[a] = p.value.max(m.value);
        out.empty_halves += usize::from(p.empty) + usize::from(m.empty);
    }
    out
}

/// Three-dimensional damage tensor diagonal in the global frame.
pub fn tensor_damage_3d(xi: &[[f64; 3]], intact: &[bool], volumes: &[f64]) -> [f64; 3] {
    let basis = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    axis_damage(xi, intact, volumes, basis).tensor
}

/// Diagonal damage tensor in 2D.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DamageTensor {
    pub d1: f64,
    pub d2: f64,
}

/// Global x/y frame.
pub const GLOBAL_FRAME: [[f64; 2]; 2] = [[1.0, 0.0], [0.0, 1.0]];

/// Material frame rotated by `angle` radians from the global axes.
pub fn rotated_frame(angle: f64) -> [[f64; 2]; 2] {
    let (s, c) = angle.sin_cos();
    [[c, s], [-s, c]]
}

fn neighbourhood(network: &BondNetwork, i: usize) -> Result<(std::ops::Range<usize>, Vec<f64>)> {
    if i >= network.num_points() {
        return Err(Error::invalid(format!(
            "point index {i} out of range (network has {})",
            network.num_points()
        )));
    }
    let r = network.bond_range(i);
    let vols: Vec<f64> = network.neighbor_volumes(i).collect();
    Ok((r, vols))
}

pub fn scalar_damage(network: &BondNetwork, i: usize) -> Result<f64> {
    let (r, vols) = neighbourhood(network, i)?;
    scalar_fraction(&network.intact()[r], &vols)
}

/// Directional damage of point `i` along the signed direction `e`.
pub fn directional_damage(network: &BondNetwork, i: usize, e: [f64; 2]) -> Result<HalfDamage> {
    let (r, vols) = neighbourhood(network, i)?;
    Ok(half_damage(&network.xi()[r.clone()], &network.intact()[r], &vols, e))
}

pub fn tensor_damage(network: &BondNetwork, i: usize) -> Result<DamageTensor> {
    tensor_damage_in_frame(network, i, GLOBAL_FRAME)
}

pub fn tensor_damage_in_frame(
    network: &BondNetwork,
    i: usize,
    frame: [[f64; 2]; 2],
) -> Result<DamageTensor> {
    let (r, vols) = neighbourhood(network, i)?;
    let a = axis_damage(&network.xi()[r.clone()], &network.intact()[r], &vols, frame);
    Ok(DamageTensor {
        d1: a.tensor[0],
        d2: a.tensor[1],
    })
}

/// Per-point damage state of the whole network.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DamageField {
    pub scalar: Vec<f64>,
    pub tensor: Vec<DamageTensor>,
    /// Signed directional values `[d1+, d1−, d2+, d2−]`.
    pub directional: Vec<[f64; 4]>,
    /// Number of empty half-neighbourhoods encountered.
    pub empty_halves: usize,
}

impl DamageField {
    pub fn compute(network: &BondNetwork) -> Result<Self> {
        let rows: Vec<(f64, AxisDamage<2>)> = (0..network.num_points())
            .into_par_iter()
            .map(|i| {
                let (r, vols) = neighbourhood(network, i)?;
                let intact = &network.intact()[r.clone()];
                let d = scalar_fraction(intact, &vols)?;
                let a = axis_damage(&network.xi()[r], intact, &vols, GLOBAL_FRAME);
                Ok((d, a))
            })
            .collect::<Result<_>>()?;
        let mut field = DamageField::default();
        for (d, a) in rows {
            field.scalar.push(d);
            field.tensor.push(DamageTensor {
                d1: a.tensor[0],
                d2: a.tensor[1],
            });
            field
                .directional
                .push([a.plus[0], a.minus[0], a.plus[1], a.minus[1]]);
            field.empty_halves += a.empty_halves;
        }
        Ok(field)
    }

    /// Undamaged field for `n` points.
    pub fn zeros(n: usize) -> Self {
        DamageField {
            scalar: vec![0.0; n],
            tensor: vec![DamageTensor::default(); n],
            directional: vec![[0.0; 4]; n],
            empty_halves: 0,
        }
    }
}

/// Diagonal element conductivities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConductivityField {
    pub kx: Vec<f64>,
    pub ky: Vec<f64>,
}

impl ConductivityField {
    pub fn uniform(n: usize, k0: f64) -> Self {
        ConductivityField {
            kx: vec![k0; n],
            ky: vec![k0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.kx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kx.is_empty()
    }
}

/// `k_i = max(1 − d_i, floor)·k0` per axis.
pub fn tensor_conductivity(d: DamageTensor, k0: f64) -> (f64, f64) {
    let f = |di: f64| (1.0 - di).max(CONDUCTIVITY_FLOOR) * k0;
    (f(d.d1), f(d.d2))
}

/// Isotropic degradation `(1 − d̄)²·k0` with d̄ ramping linearly from 0 at
/// `c1` to 1 at `c2`.
pub fn classical_conductivity(d: f64, k0: f64, c1: f64, c2: f64) -> Result<f64> {
    check_thresholds(c1, c2)?;
    let dbar = if d <= c1 {
        0.0
    } else if d > c2 {
        1.0
    } else {
        (d - c1) / (c2 - c1)
    };
    Ok(((1.0 - dbar) * (1.0 - dbar)).max(CONDUCTIVITY_FLOOR) * k0)
}

pub(crate) fn check_thresholds(c1: f64, c2: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&c1) || !(0.0..=1.0).contains(&c2) || c1 >= c2 {
        return Err(Error::config(format!(
            "damage thresholds must satisfy 0 <= c1 < c2 <= 1 (got c1 = {c1}, c2 = {c2})"
        )));
    }
    Ok(())
}

/// Which law maps damage onto conductivity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DamageModel {
    Tensor,
    Classical { c1: f64, c2: f64 },
}

impl DamageModel {
    pub fn conductivity(&self, field: &DamageField, k0: f64) -> Result<ConductivityField> {
        let n = field.scalar.len();
        let mut out = ConductivityField::uniform(n, k0);
        match *self {
            DamageModel::Tensor => {
                for (e, d) in field.tensor.iter().enumerate() {
                    (out.kx[e], out.ky[e]) = tensor_conductivity(*d, k0);
                }
            }
            DamageModel::Classical { c1, c2 } => {
                check_thresholds(c1, c2)?;
                for (e, &d) in field.scalar.iter().enumerate() {
                    let k = classical_conductivity(d, k0, c1, c2)?;
                    out.kx[e] = k;
                    out.ky[e] = k;
                }
            }
        }
        Ok(out)
    }
}

/// Damage of the central point when every bond on one side of a straight
/// crack through it is broken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub angle_deg: f64,
    pub d1: f64,
    pub d2: f64,
    pub scalar: f64,
}

/// Damage of an interior point cut by a crack inclined at `angle_deg` to the
/// x axis. The crack passes through the point; the bonds lying strictly on
/// the side of its left normal `(−sin α, cos α)` are the ones crossing the
/// crack surface. Bonds along the crack line stay intact.
pub fn crack_angle_sweep(angle_deg: f64, horizon_ratio: f64) -> Result<SweepPoint> {
    if !(0.0..=90.0).contains(&angle_deg) {
        return Err(Error::invalid(format!("angle {angle_deg} outside [0, 90] degrees")));
    }
    let m = horizon_ratio.ceil() as usize;
    let n = 2 * m + 1;
    let mesh = Mesh::structured(n, n, n as f64, n as f64)?;
    let horizon = Horizon::from_ratios(&mesh, horizon_ratio, 3.0)?;
    let mut network = BondNetwork::build(&mesh, horizon)?;
    let c = mesh.element_at(m, m).expect("center cell exists");

    let a = angle_deg.to_radians();
    let normal = [-a.sin(), a.cos()];
    let hits: Vec<usize> = network
        .bond_range(c)
        .filter(|&k| {
            let v = network.xi()[k];
            let len = network.lengths()[k];
            normal[0] * v[0] + normal[1] * v[1] > 1e-12 * len
        })
        .collect();
    network.break_bonds(&hits);
    let t = tensor_damage(&network, c)?;
    Ok(SweepPoint {
        angle_deg,
        d1: t.d1,
        d2: t.d2,
        scalar: scalar_damage(&network, c)?,
    })
}
