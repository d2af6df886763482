//! Peridynamic bond network on element centroids.
//!
//! Every element carries one material point at its centroid with the full
//! element volume (unit thickness). Bonds are stored in compressed rows: the
//! bonds leaving centroid `i` occupy `offsets[i]..offsets[i + 1]`, with
//! neighbours in increasing index order. Each directed bond knows the index of
//! its reverse so failure flags can be kept symmetric.

use std::ops::Range;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Relative slack on the horizon so lattice points exactly on the circle are
/// always included despite rounding.
const HORIZON_SLACK: f64 = 1e-10;

/// Horizon geometry in physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Horizon {
    /// Interaction radius δ.
    pub delta: f64,
    /// Decay length l of the exponential micromodulus.
    pub length: f64,
}

impl Horizon {
    /// δ = `horizon_ratio`·Δx and l = δ / `length_ratio`.
    pub fn from_ratios(mesh: &Mesh, horizon_ratio: f64, length_ratio: f64) -> Result<Self> {
        if !(horizon_ratio > 0.0 && length_ratio > 0.0) {
            return Err(Error::config(format!(
                "horizon ratio ({horizon_ratio}) and length ratio ({length_ratio}) must be positive"
            )));
        }
        let delta = horizon_ratio * mesh.element_size().0;
        Ok(Horizon {
            delta,
            length: delta / length_ratio,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BondNetwork {
    centroids: Vec<[f64; 2]>,
    volumes: Vec<f64>,
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
    xi: Vec<[f64; 2]>,
    lengths: Vec<f64>,
    intact: Vec<bool>,
    reverse: Vec<usize>,
    horizon: Horizon,
    full_size: usize,
}

impl BondNetwork {
    /// Connects every pair of centroids closer than the horizon.
    pub fn build(mesh: &Mesh, horizon: Horizon) -> Result<Self> {
        let (dx, dy) = mesh.element_size();
        if !(horizon.delta > 0.0 && horizon.length > 0.0) {
            return Err(Error::config("horizon and decay length must be positive"));
        }
        if horizon.delta < dx.max(dy) * (1.0 - HORIZON_SLACK) {
            return Err(Error::config(format!(
                "horizon {:.6e} is smaller than the element size {:.6e}; neighbourhoods would be empty",
                horizon.delta,
                dx.max(dy)
            )));
        }

        // lattice offsets (a, b) within the horizon, ordered so that neighbour
        // indices come out increasing for row-major element numbering
        let ra = (horizon.delta / dx).floor() as isize + 1;
        let rb = (horizon.delta / dy).floor() as isize + 1;
        let reach = horizon.delta * (1.0 + HORIZON_SLACK);
        let mut lattice = Vec::new();
        for b in -rb..=rb {
            for a in -ra..=ra {
                if a == 0 && b == 0 {
                    continue;
                }
                let v = [a as f64 * dx, b as f64 * dy];
                if v[0].hypot(v[1]) <= reach {
                    lattice.push((a, b, v));
                }
            }
        }

        let n = mesh.num_elements();
        let centroids = mesh.centroids();
        let volume = mesh.element_area();
        let rows: Vec<Vec<(usize, [f64; 2])>> = (0..n)
            .into_par_iter()
            .map(|e| {
                let (i, j) = mesh.cell(e);
                lattice
                    .iter()
                    .filter_map(|&(a, b, v)| {
                        let p = i as isize + a;
                        let q = j as isize + b;
                        if p < 0 || q < 0 {
                            return None;
                        }
                        mesh.element_at(p as usize, q as usize).map(|k| (k, v))
                    })
                    .collect()
            })
            .collect();

        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for row in &rows {
            offsets.push(offsets.last().unwrap() + row.len());
        }
        let total = *offsets.last().unwrap();
        let mut neighbors = Vec::with_capacity(total);
        let mut xi = Vec::with_capacity(total);
        for row in rows {
            for (k, v) in row {
                neighbors.push(k);
                xi.push(v);
            }
        }
        let lengths: Vec<f64> = xi.iter().map(|v| v[0].hypot(v[1])).collect();

        let mut net = BondNetwork {
            centroids,
            volumes: vec![volume; n],
            offsets,
            neighbors,
            xi,
            lengths,
            intact: vec![true; total],
            reverse: Vec::new(),
            horizon,
            full_size: lattice.len(),
        };
        net.reverse = (0..n)
            .into_par_iter()
            .flat_map_iter(|i| {
                let net = &net;
                net.bond_range(i).map(move |k| {
                    let j = net.neighbors[k];
                    let r = net.bond_range(j);
                    let pos = net.neighbors[r.clone()]
                        .binary_search(&i)
                        .expect("neighbour lists are symmetric");
                    r.start + pos
                })
            })
            .collect();
        Ok(net)
    }

    pub fn horizon(&self) -> Horizon {
        self.horizon
    }

    /// Bond count of a neighbourhood untouched by boundaries.
    pub fn full_neighborhood_size(&self) -> usize {
        self.full_size
    }

    /// First point whose neighbourhood is complete, if any.
    pub fn interior_point(&self) -> Option<usize> {
        (0..self.num_points()).find(|&i| self.bond_range(i).len() == self.full_size)
    }

    pub fn num_points(&self) -> usize {
        self.centroids.len()
    }

    /// Number of directed bonds (twice the number of bond pairs).
    pub fn num_bonds(&self) -> usize {
        self.neighbors.len()
    }

    pub fn centroids(&self) -> &[[f64; 2]] {
        &self.centroids
    }

    /// Volume carried by each material point.
    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    /// Directed bonds leaving point `i`.
    pub fn bond_range(&self, i: usize) -> Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn neighbors(&self) -> &[usize] {
        &self.neighbors
    }

    /// Reference bond vectors ξ = x_j − x_i.
    pub fn xi(&self) -> &[[f64; 2]] {
        &self.xi
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths
    }

    pub fn intact(&self) -> &[bool] {
        &self.intact
    }

    pub fn reverse(&self) -> &[usize] {
        &self.reverse
    }

    /// Source point of directed bond `k`.
    pub fn source(&self, k: usize) -> usize {
        self.offsets.partition_point(|&o| o <= k) - 1
    }

    /// Volumes of the neighbours of point `i`, aligned with `bond_range(i)`.
    pub fn neighbor_volumes(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.neighbors[self.bond_range(i)]
            .iter()
            .map(|&j| self.volumes[j])
    }

    pub fn broken_pairs(&self) -> usize {
        self.intact.iter().filter(|&&b| !b).count() / 2
    }

    /// Exact nonlinear stretch `(|ξ + η| − |ξ|) / |ξ|` of every directed bond,
    /// with η the relative displacement of the two end points.
    pub fn bond_stretch(&self, displacements: &[[f64; 2]]) -> Result<Vec<f64>> {
        if displacements.len() != self.num_points() {
            return Err(Error::invalid(format!(
                "displacement field has {} entries, network has {} points",
                displacements.len(),
                self.num_points()
            )));
        }
        let mut out = vec![0.0; self.num_bonds()];
        out.par_chunks_mut(1024).enumerate().for_each(|(c, chunk)| {
            let start = c * 1024;
            let mut i = self.source(start);
            for (off, s) in chunk.iter_mut().enumerate() {
                let k = start + off;
                while k >= self.offsets[i + 1] {
                    i += 1;
                }
                let j = self.neighbors[k];
                let ui = displacements[i];
                let uj = displacements[j];
                let v = [
                    self.xi[k][0] + uj[0] - ui[0],
                    self.xi[k][1] + uj[1] - ui[1],
                ];
                *s = (v[0].hypot(v[1]) - self.lengths[k]) / self.lengths[k];
            }
        });
        Ok(out)
    }

    /// Breaks every intact bond whose stretch reached `s0`, in both
    /// directions. Returns the number of bond pairs broken by this call.
    pub fn update_failures(&mut self, stretches: &[f64], s0: f64) -> Result<usize> {
        if stretches.len() != self.num_bonds() {
            return Err(Error::invalid("stretch field size does not match the network"));
        }
        if !(s0 > 0.0) {
            return Err(Error::invalid(format!("critical stretch must be positive (got {s0})")));
        }
        let candidates: Vec<usize> = (0..self.num_bonds())
            .into_par_iter()
            .filter(|&k| self.intact[k] && stretches[k] >= s0)
            .collect();
        Ok(self.break_bonds(&candidates))
    }

    /// Marks the given directed bonds (and their reverses) as broken. Returns
    /// the number of pairs that were intact before the call.
    pub fn break_bonds(&mut self, bonds: &[usize]) -> usize {
        let mut count = 0;
        for &k in bonds {
            let r = self.reverse[k];
            if self.intact[k] || self.intact[r] {
                count += 1;
            }
            self.intact[k] = false;
            self.intact[r] = false;
        }
        count
    }

    /// Breaks every bond whose reference segment properly crosses the segment
    /// `a`–`b`. Touching at an endpoint does not count as crossing.
    pub fn seed_precrack(&mut self, a: [f64; 2], b: [f64; 2]) -> Result<usize> {
        let len = (b[0] - a[0]).hypot(b[1] - a[1]);
        if !(len > 0.0) || !len.is_finite() {
            return Err(Error::invalid("pre-crack segment has zero length"));
        }
        let net = &*self;
        let hits: Vec<usize> = (0..net.num_points())
            .into_par_iter()
            .flat_map_iter(|i| {
                let p = net.centroids[i];
                net.bond_range(i).filter(move |&k| {
                    let j = net.neighbors[k];
                    i < j && segments_cross(p, net.centroids[j], a, b)
                })
            })
            .collect();
        Ok(self.break_bonds(&hits))
    }

    /// Replaces the failure flags, e.g. when resuming from a checkpoint.
    pub fn restore_intact(&mut self, intact: &[bool]) -> Result<()> {
        if intact.len() != self.num_bonds() {
            return Err(Error::invalid("failure state size does not match the network"));
        }
        if (0..intact.len()).any(|k| intact[k] != intact[self.reverse[k]]) {
            return Err(Error::invalid("failure state is not symmetric"));
        }
        self.intact.copy_from_slice(intact);
        Ok(())
    }
}

fn orient(p: [f64; 2], q: [f64; 2], r: [f64; 2]) -> f64 {
    (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])
}

/// Proper intersection: the open segments cross at a single interior point.
pub fn segments_cross(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
}
