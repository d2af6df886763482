//! Quasi-static bond-based peridynamics discretized on the finite element
//! mesh.
//!
//! Each element contributes one material point at its centroid, where the
//! displacement is the mean of the four nodal displacements (`u_c = P d`).
//! The nodal stiffness is `K̂ = Pᵀ L P` with `L` the centroid-level bond
//! Laplacian whose 2×2 blocks are `c0(|ξ|)·V_i·V_j·e eᵀ`.
//!
//! Because `P` only sees element means, `K̂` alone leaves every nodal pattern
//! with zero element means unresisted (checkerboards, alternating columns).
//! The solve therefore adds a small stabilization `k_s·GᵀG`, where
//! `G = I − R P` measures how far each node departs from the bilinear
//! reconstruction `R` of the surrounding centroid values. `G` vanishes on
//! every bilinear field, so homogeneous deformation and free thermal
//! expansion are unaffected.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bonds::BondNetwork;
use crate::error::{Error, Result};
use crate::mesh::{BoundaryEdge, Mesh};
use crate::sparse::{CsrMatrix, Partition, Prescribed, SolverKind, SpdSolver};

/// Default fracture-loop iteration cap per time step.
pub const DEFAULT_MAX_ITERATIONS: usize = 200;

/// Default stabilization stiffness relative to Young's modulus.
pub const DEFAULT_STABILIZATION: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaneMode {
    PlaneStrain,
    PlaneStress,
}

impl PlaneMode {
    /// The only Poisson's ratio a bond-based model can represent.
    pub fn native_poisson(self) -> f64 {
        match self {
            PlaneMode::PlaneStrain => 0.25,
            PlaneMode::PlaneStress => 1.0 / 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechMaterial {
    /// Pa
    pub youngs_modulus: f64,
    pub poissons_ratio: f64,
    /// 1/K
    pub thermal_expansion: f64,
    /// Critical energy release rate, N/m. `None` disables fracture.
    pub fracture_energy: Option<f64>,
    pub plane: PlaneMode,
}

impl MechMaterial {
    /// `C11 + C12` of the isotropic plane stiffness.
    pub fn bulk_sum(&self) -> f64 {
        let (e, nu) = (self.youngs_modulus, self.poissons_ratio);
        match self.plane {
            PlaneMode::PlaneStrain => e / ((1.0 + nu) * (1.0 - 2.0 * nu)),
            PlaneMode::PlaneStress => e / (1.0 - nu),
        }
    }

    /// Bond micro-expansivity: the in-plane free thermal strain per kelvin.
    pub fn bond_expansivity(&self) -> f64 {
        match self.plane {
            PlaneMode::PlaneStrain => (1.0 + self.poissons_ratio) * self.thermal_expansion,
            PlaneMode::PlaneStress => self.thermal_expansion,
        }
    }

    /// Validates the material; returns warnings for tolerated mismatches.
    pub fn validate(&self) -> Result<Vec<String>> {
        if !(self.youngs_modulus > 0.0) {
            return Err(Error::config(format!(
                "Young's modulus must be positive (got {})",
                self.youngs_modulus
            )));
        }
        if !self.thermal_expansion.is_finite() {
            return Err(Error::config("thermal expansion must be finite"));
        }
        if let Some(g) = self.fracture_energy {
            if !(g > 0.0) {
                return Err(Error::config(format!("fracture energy must be positive (got {g})")));
            }
        }
        let native = self.plane.native_poisson();
        let gap = (self.poissons_ratio - native).abs();
        if !(gap <= 0.01) {
            return Err(Error::config(format!(
                "Poisson's ratio {} is incompatible with a bond-based model in {:?} (expected {:.4} within 0.01)",
                self.poissons_ratio, self.plane, native
            )));
        }
        let mut warnings = Vec::new();
        if gap > 0.0 {
            warnings.push(format!(
                "Poisson's ratio {} differs from the bond-based value {:.4}; the effective ratio is {:.4}",
                self.poissons_ratio, native, native
            ));
        }
        Ok(warnings)
    }
}

/// Exponential micromodulus `c0(r) = τ0·exp(−r/l)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Micromodulus {
    pub tau0: f64,
    pub length: f64,
}

impl Micromodulus {
    pub fn value(&self, r: f64) -> f64 {
        self.tau0 * (-r / self.length).exp()
    }
}

/// `τ0` such that the energy density of a complete neighbourhood under a
/// homogeneous isotropic extension equals the continuum value `(C11 + C12)·ε²`.
pub fn calibrate_tau0(network: &BondNetwork, material: &MechMaterial) -> Result<f64> {
    let i = network.interior_point().ok_or_else(|| {
        Error::config(
            "the mesh has no point with a complete neighbourhood; refine it or reduce the horizon",
        )
    })?;
    let l = network.horizon().length;
    let sum: f64 = network
        .bond_range(i)
        .zip(network.neighbor_volumes(i))
        .map(|(k, v)| {
            let r = network.lengths()[k];
            (-r / l).exp() * r * r * v
        })
        .sum();
    Ok(material.bulk_sum() / (0.25 * sum))
}

/// Elastic energy density `¼ Σ c0 (e·η)² V_j` of point `i` for centroid
/// displacements `u`.
pub fn energy_density(network: &BondNetwork, micro: &Micromodulus, i: usize, u: &[[f64; 2]]) -> f64 {
    network
        .bond_range(i)
        .map(|k| {
            let j = network.neighbors()[k];
            let xi = network.xi()[k];
            let r = network.lengths()[k];
            let proj = ((u[j][0] - u[i][0]) * xi[0] + (u[j][1] - u[i][1]) * xi[1]) / r;
            0.25 * micro.value(r) * proj * proj * network.volumes()[j]
        })
        .sum()
}

/// Energy needed to break every bond crossing the vertical grid line at
/// column `column`, per unit stretch squared, and the length of that cut.
pub fn cut_sum(mesh: &Mesh, network: &BondNetwork, micro: &Micromodulus, column: usize) -> (f64, f64) {
    let (nx, ny) = mesh.grid_dims();
    let mut sum = 0.0;
    for i in 0..network.num_points() {
        let (p, _) = mesh.cell(i);
        if p >= column {
            continue;
        }
        for k in network.bond_range(i) {
            let j = network.neighbors()[k];
            if mesh.cell(j).0 >= column {
                let r = network.lengths()[k];
                sum += 0.5 * micro.value(r) * r * r * network.volumes()[i] * network.volumes()[j];
            }
        }
    }
    let (_, dy) = mesh.element_size();
    let rows = if column == 0 || column >= nx {
        0
    } else {
        (0..ny)
            .filter(|&q| mesh.element_at(column - 1, q).is_some() && mesh.element_at(column, q).is_some())
            .count()
    };
    (sum, rows as f64 * dy)
}

/// Critical stretch from the fracture energy: breaking every bond across a
/// straight cut through the middle of the mesh releases `G_c` per unit length.
pub fn critical_stretch(
    mesh: &Mesh,
    network: &BondNetwork,
    micro: &Micromodulus,
    fracture_energy: f64,
) -> Result<f64> {
    let (nx, _) = mesh.grid_dims();
    let (sum, length) = cut_sum(mesh, network, micro, nx / 2);
    if !(sum > 0.0 && length > 0.0) {
        return Err(Error::config(
            "no bonds cross the calibration cut; the mesh is too small for fracture",
        ));
    }
    Ok((fracture_energy * length / sum).sqrt())
}

/// Nodal loads from a uniform body force (N/m³) and edge tractions (N/m²).
pub fn external_load(mesh: &Mesh, body_force: [f64; 2], tractions: &[(BoundaryEdge, [f64; 2])]) -> Vec<f64> {
    let mut f = vec![0.0; 2 * mesh.num_nodes()];
    if body_force != [0.0, 0.0] {
        let share = mesh.element_area() / 4.0;
        for conn in mesh.elements() {
            for &n in conn {
                f[2 * n] += share * body_force[0];
                f[2 * n + 1] += share * body_force[1];
            }
        }
    }
    for &(edge, t) in tractions {
        let half = mesh.edge_length(edge) / 2.0;
        for n in mesh.edge_nodes(edge) {
            f[2 * n] += half * t[0];
            f[2 * n + 1] += half * t[1];
        }
    }
    f
}

/// Rows of `G = I − R P`: each node minus the bilinear reconstruction from a
/// 2×2 block of centroids (interpolating in the interior, extrapolating at
/// edges and corners).
fn reconstruction_rows(mesh: &Mesh) -> Vec<Vec<(usize, f64)>> {
    let (dx, dy) = mesh.element_size();
    let (nx, ny) = mesh.grid_dims();
    (0..mesh.num_nodes())
        .into_par_iter()
        .map(|n| {
            let p = mesh.nodes()[n];
            let gi = (p[0] / dx).round() as isize;
            let gj = (p[1] / dy).round() as isize;
            let mut best: Option<(usize, isize, isize)> = None;
            for (sx, bi) in [(0, gi - 1), (1, gi), (1, gi - 2)] {
                for (sy, bj) in [(0, gj - 1), (1, gj), (1, gj - 2)] {
                    if bi < 0 || bj < 0 || bi + 1 >= nx as isize || bj + 1 >= ny as isize {
                        continue;
                    }
                    let all = (0..2).all(|a| {
                        (0..2).all(|b| mesh.element_at((bi + a) as usize, (bj + b) as usize).is_some())
                    });
                    let score = sx + sy;
                    if all && best.is_none_or(|(s, _, _)| score < s) {
                        best = Some((score, bi, bj));
                    }
                }
            }
            let mut weights: Vec<(usize, f64)> = Vec::new();
            match best {
                Some((_, bi, bj)) => {
                    let tx = gi as f64 - bi as f64 - 0.5;
                    let ty = gj as f64 - bj as f64 - 0.5;
                    let wx = [1.0 - tx, tx];
                    let wy = [1.0 - ty, ty];
                    for a in 0..2 {
                        for b in 0..2 {
                            let e = mesh.element_at((bi + a as isize) as usize, (bj + b as isize) as usize).unwrap();
                            weights.push((e, wx[a] * wy[b]));
                        }
                    }
                }
                None => {
                    let elems = mesh.node_elements(n);
                    let w = 1.0 / elems.len() as f64;
                    weights.extend(elems.iter().map(|&e| (e, w)));
                }
            }
            let mut row: Vec<(usize, f64)> = vec![(n, 1.0)];
            for (e, w) in weights {
                for &m in &mesh.elements()[e] {
                    row.push((m, -0.25 * w));
                }
            }
            merge_sorted(row)
        })
        .collect()
}

fn merge_sorted(mut v: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    v.sort_by_key(|e| e.0);
    let mut out: Vec<(usize, f64)> = Vec::with_capacity(v.len());
    for (i, x) in v {
        match out.last_mut() {
            Some(last) if last.0 == i => last.1 += x,
            _ => out.push((i, x)),
        }
    }
    out
}

/// Result of one quasi-static fracture loop.
#[derive(Debug, Clone, PartialEq)]
pub struct FractureOutcome {
    /// Nodal displacements, interleaved `(u_x, u_y)`.
    pub displacement: Vec<f64>,
    /// Linear solves performed.
    pub iterations: usize,
    /// Bond pairs broken after each solve.
    pub breaks: Vec<usize>,
}

/// Stiffness, loads and solver state of the discretized peridynamic body.
#[derive(Debug, Clone)]
pub struct MechanicsSystem {
    elements: Vec<[usize; 4]>,
    node_elements: Vec<Vec<usize>>,
    node_rows: Vec<Vec<usize>>,
    pattern: CsrMatrix,
    stabilization: Vec<f64>,
    weights: Vec<f64>,
    expansivity: f64,
    partition: Partition,
    solver: SpdSolver,
    operator: Option<CsrMatrix>,
    factored_at: Option<usize>,
    breakable: Option<Vec<bool>>,
}

impl MechanicsSystem {
    /// `stabilization` is the stiffness `k_s` of the nodal reconstruction
    /// penalty (N/m per unit thickness); `fixed_dofs` are the constrained
    /// degrees of freedom (`2·node + component`).
    pub fn new(
        mesh: &Mesh,
        network: &BondNetwork,
        micro: &Micromodulus,
        material: &MechMaterial,
        stabilization: f64,
        fixed_dofs: &[usize],
        solver: SolverKind,
    ) -> Result<Self> {
        if network.num_points() != mesh.num_elements() {
            return Err(Error::invalid("bond network does not belong to this mesh"));
        }
        if !(stabilization >= 0.0) {
            return Err(Error::config("stabilization stiffness must be non-negative"));
        }
        let nn = mesh.num_nodes();
        let elements = mesh.elements().to_vec();
        let node_elements: Vec<Vec<usize>> = (0..nn).map(|n| mesh.node_elements(n).to_vec()).collect();

        let g = reconstruction_rows(mesh);
        // nodes whose G row mentions node m, with the coefficient
        let mut touching: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nn];
        for (n, row) in g.iter().enumerate() {
            for &(m, c) in row {
                touching[m].push((n, c));
            }
        }
        let stab_rows: Vec<Vec<(usize, f64)>> = (0..nn)
            .into_par_iter()
            .map(|m| {
                let mut acc = Vec::new();
                for &(n, c) in &touching[m] {
                    for &(q, d) in &g[n] {
                        acc.push((q, stabilization * c * d));
                    }
                }
                merge_sorted(acc)
            })
            .collect();

        let node_rows: Vec<Vec<usize>> = (0..nn)
            .into_par_iter()
            .map(|n| {
                let mut cols: Vec<usize> = stab_rows[n].iter().map(|e| e.0).collect();
                for &e in &node_elements[n] {
                    cols.extend_from_slice(&elements[e]);
                    for k in network.bond_range(e) {
                        cols.extend_from_slice(&elements[network.neighbors()[k]]);
                    }
                }
                cols.sort_unstable();
                cols.dedup();
                cols
            })
            .collect();

        let dof_rows: Vec<Vec<usize>> = (0..2 * nn)
            .map(|r| node_rows[r / 2].iter().flat_map(|&m| [2 * m, 2 * m + 1]).collect())
            .collect();
        let pattern = CsrMatrix::from_rows(2 * nn, dof_rows);

        let mut stab = vec![0.0; pattern.nnz()];
        for (n, row) in stab_rows.iter().enumerate() {
            for &(m, v) in row {
                for c in 0..2 {
                    let p = pattern.position(2 * n + c, 2 * m + c).unwrap();
                    stab[p] = v;
                }
            }
        }

        let weights: Vec<f64> = (0..network.num_bonds())
            .map(|k| {
                let r = network.lengths()[k];
                let i = network.source(k);
                let j = network.neighbors()[k];
                micro.value(r) * network.volumes()[i] * network.volumes()[j]
            })
            .collect();

        Ok(MechanicsSystem {
            elements,
            node_elements,
            node_rows,
            pattern,
            stabilization: stab,
            weights,
            expansivity: material.bond_expansivity(),
            partition: Partition::new(2 * nn, fixed_dofs),
            solver: SpdSolver::new(solver),
            operator: None,
            factored_at: None,
            breakable: None,
        })
    }

    pub fn num_dofs(&self) -> usize {
        self.pattern.dim()
    }

    pub fn bond_expansivity(&self) -> f64 {
        self.expansivity
    }

    /// Pair weights `c0(|ξ|)·V_i·V_j` per directed bond.
    pub fn bond_weights(&self) -> &[f64] {
        &self.weights
    }

    /// Peridynamic stiffness `K̂ = Pᵀ L P` over the intact bonds.
    pub fn stiffness(&self, network: &BondNetwork) -> CsrMatrix {
        let intact = network.intact();
        let xi = network.xi();
        let block = |k: usize| {
            let w = self.weights[k] / (network.lengths()[k] * network.lengths()[k]);
            let v = xi[k];
            [[w * v[0] * v[0], w * v[0] * v[1]], [w * v[1] * v[0], w * v[1] * v[1]]]
        };
        let diag: Vec<[[f64; 2]; 2]> = (0..self.elements.len())
            .into_par_iter()
            .map(|e| {
                let mut d = [[0.0; 2]; 2];
                for k in network.bond_range(e).filter(|&k| intact[k]) {
                    let m = block(k);
                    for a in 0..2 {
                        for b in 0..2 {
                            d[a][b] += m[a][b];
                        }
                    }
                }
                d
            })
            .collect();

        let rows: Vec<Vec<f64>> = (0..self.node_rows.len())
            .into_par_iter()
            .map(|n| {
                let cols = &self.node_rows[n];
                let len = cols.len();
                let mut vals = vec![0.0; 4 * len];
                let mut add = |m: usize, s: f64, b: &[[f64; 2]; 2]| {
                    let p = cols.binary_search(&m).expect("pattern covers every bond");
                    vals[2 * p] += s * b[0][0];
                    vals[2 * p + 1] += s * b[0][1];
                    vals[2 * len + 2 * p] += s * b[1][0];
                    vals[2 * len + 2 * p + 1] += s * b[1][1];
                };
                for &e in &self.node_elements[n] {
                    for &m in &self.elements[e] {
                        add(m, 1.0 / 16.0, &diag[e]);
                    }
                    for k in network.bond_range(e).filter(|&k| intact[k]) {
                        let b = block(k);
                        for &m in &self.elements[network.neighbors()[k]] {
                            add(m, -1.0 / 16.0, &b);
                        }
                    }
                }
                vals
            })
            .collect();

        let mut k = self.pattern.clone();
        let values = k.values_mut();
        let mut pos = 0;
        for r in rows {
            values[pos..pos + r.len()].copy_from_slice(&r);
            pos += r.len();
        }
        k
    }

    /// Stabilization matrix `k_s·GᵀG` on the shared pattern.
    pub fn stabilization_matrix(&self) -> CsrMatrix {
        let mut s = self.pattern.clone();
        s.values_mut().copy_from_slice(&self.stabilization);
        s
    }

    /// Matrix actually solved: `K̂` plus the stabilization.
    pub fn operator(&self, network: &BondNetwork) -> CsrMatrix {
        let mut k = self.stiffness(network);
        for (v, s) in k.values_mut().iter_mut().zip(&self.stabilization) {
            *v += s;
        }
        k
    }

    /// Centroid displacements `P d`.
    pub fn centroid_displacements(&self, d: &[f64]) -> Vec<[f64; 2]> {
        self.elements
            .iter()
            .map(|conn| {
                let mut u = [0.0; 2];
                for &n in conn {
                    u[0] += 0.25 * d[2 * n];
                    u[1] += 0.25 * d[2 * n + 1];
                }
                u
            })
            .collect()
    }

    /// Thermal bond loads for centroid temperature changes `delta_t`, using
    /// the bond temperature change `T̂ = ½(ΔT_i + ΔT_j)·|ξ|`.
    pub fn thermal_load(&self, network: &BondNetwork, delta_t: &[f64]) -> Vec<f64> {
        let a = self.expansivity;
        let intact = network.intact();
        let centroid: Vec<[f64; 2]> = (0..self.elements.len())
            .into_par_iter()
            .map(|i| {
                let mut f = [0.0; 2];
                for k in network.bond_range(i).filter(|&k| intact[k]) {
                    let j = network.neighbors()[k];
                    // T̂·e = ½(ΔT_i + ΔT_j)·ξ
                    let s = -self.weights[k] * a * 0.5 * (delta_t[i] + delta_t[j]);
                    let xi = network.xi()[k];
                    f[0] += s * xi[0];
                    f[1] += s * xi[1];
                }
                f
            })
            .collect();
        let mut out = vec![0.0; 2 * self.node_elements.len()];
        for (e, conn) in self.elements.iter().enumerate() {
            for &n in conn {
                out[2 * n] += 0.25 * centroid[e][0];
                out[2 * n + 1] += 0.25 * centroid[e][1];
            }
        }
        out
    }

    /// Bond stretch minus the free thermal stretch of the bond.
    pub fn mechanical_stretch(
        &self,
        network: &BondNetwork,
        centroid_u: &[[f64; 2]],
        delta_t: &[f64],
    ) -> Result<Vec<f64>> {
        let mut s = network.bond_stretch(centroid_u)?;
        if self.expansivity != 0.0 {
            for i in 0..network.num_points() {
                for k in network.bond_range(i) {
                    let j = network.neighbors()[k];
                    s[k] -= self.expansivity * 0.5 * (delta_t[i] + delta_t[j]);
                }
            }
        }
        Ok(s)
    }

    /// Solves `(K̂ + S) d = F` with the prescribed displacements. The
    /// factorization is reused while the bond state is unchanged.
    pub fn solve(&mut self, network: &BondNetwork, load: &[f64], constraints: &Prescribed) -> Result<Vec<f64>> {
        if constraints.indices() != self.partition.fixed() {
            return Err(Error::invalid("constraints differ from the system's fixed set"));
        }
        if load.len() != self.num_dofs() {
            return Err(Error::invalid("load vector size does not match the system"));
        }
        let broken = network.broken_pairs();
        if self.factored_at != Some(broken) || self.operator.is_none() {
            self.factored_at = None;
            let op = self.operator(network);
            if let Err(e) = self.solver.factorize(self.partition.reduce(&op)) {
                return Err(Error::Solver(crate::SolverError::Singular(format!(
                    "{e}; {}",
                    self.diagnose(network)
                ))));
            }
            self.operator = Some(op);
            self.factored_at = Some(broken);
        }
        let op = self.operator.as_ref().unwrap();
        let mut d = vec![0.0; self.num_dofs()];
        constraints.apply(&mut d);
        let rhs = self.partition.reduce_rhs(op, load, &d);
        let x = self.solver.solve(&rhs)?;
        self.partition.scatter(&x, &mut d);
        Ok(d)
    }

    /// Connected components of the intact bond graph and how many
    /// constrained degrees of freedom each one touches.
    pub fn diagnose(&self, network: &BondNetwork) -> String {
        let n = self.elements.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                p[x] = p[p[x]];
                x = p[x];
            }
            x
        }
        for i in 0..n {
            for k in network.bond_range(i).filter(|&k| network.intact()[k]) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, network.neighbors()[k]));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut fixed = vec![false; self.num_dofs()];
        for &f in self.partition.fixed() {
            fixed[f] = true;
        }
        let mut comps: std::collections::BTreeMap<usize, (usize, usize)> = Default::default();
        for e in 0..n {
            let root = find(&mut parent, e);
            let entry = comps.entry(root).or_default();
            entry.0 += 1;
            for &m in &self.elements[e] {
                entry.1 += usize::from(fixed[2 * m]) + usize::from(fixed[2 * m + 1]);
            }
        }
        let unconstrained = comps.values().filter(|c| c.1 == 0).count();
        format!(
            "{} connected fragment(s), {} without any displacement constraint; constrain every fragment against rigid motion",
            comps.len(),
            unconstrained
        )
    }

    /// Solve, measure stretches, break bonds, repeat until no bond breaks.
    #[allow(clippy::too_many_arguments)]
    /// Restricts failure to the directed bonds flagged in `mask`.
    pub fn restrict_failure(&mut self, network: &BondNetwork, mask: Vec<bool>) -> Result<()> {
        if mask.len() != network.num_bonds() {
            return Err(Error::invalid("failure mask size does not match the network"));
        }
        self.breakable = Some(mask);
        Ok(())
    }

    pub fn fracture_loop(
        &mut self,
        network: &mut BondNetwork,
        external: &[f64],
        delta_t: &[f64],
        constraints: &Prescribed,
        critical_stretch: Option<f64>,
        max_iterations: usize,
        step: usize,
    ) -> Result<FractureOutcome> {
        let mut breaks = Vec::new();
        let mut iterations = 0;
        loop {
            let thermal = self.thermal_load(network, delta_t);
            let load: Vec<f64> = external.iter().zip(&thermal).map(|(a, b)| a + b).collect();
            let d = self.solve(network, &load, constraints)?;
            iterations += 1;
            let Some(s0) = critical_stretch else {
                return Ok(FractureOutcome { displacement: d, iterations, breaks });
            };
            let u = self.centroid_displacements(&d);
            let mut s = self.mechanical_stretch(network, &u, delta_t)?;
            if let Some(mask) = &self.breakable {
                for (v, &ok) in s.iter_mut().zip(mask) {
                    if !ok {
                        *v = f64::NEG_INFINITY;
                    }
                }
            }
            let new = network.update_failures(&s, s0)?;
            breaks.push(new);
            if new == 0 {
                return Ok(FractureOutcome { displacement: d, iterations, breaks });
            }
            if iterations >= max_iterations {
                return Err(Error::NonConvergence {
                    step,
                    iterations,
                    last_breaks: new,
                });
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bonds::Horizon;

    fn material(plane: PlaneMode) -> MechMaterial {
        MechMaterial {
            youngs_modulus: 1.0,
            poissons_ratio: plane.native_poisson(),
            thermal_expansion: 0.016,
            fracture_energy: None,
            plane,
        }
    }

    fn setup(n: usize, ratio: f64, plane: PlaneMode) -> (Mesh, BondNetwork, Micromodulus, MechMaterial) {
        let mesh = Mesh::structured(n, n, n as f64 * 0.01, n as f64 * 0.01).unwrap();
        let net = BondNetwork::build(&mesh, Horizon::from_ratios(&mesh, ratio, 3.0).unwrap()).unwrap();
        let mat = material(plane);
        let tau0 = calibrate_tau0(&net, &mat).unwrap();
        let micro = Micromodulus { tau0, length: net.horizon().length };
        (mesh, net, micro, mat)
    }

    #[test]
    fn calibration_reproduces_continuum_energy() {
        let (mesh, net, micro, mat) = setup(9, 3.0, PlaneMode::PlaneStrain);
        let i = net.interior_point().unwrap();
        let eps = 1e-3;
        let u: Vec<[f64; 2]> = mesh.centroids().iter().map(|p| [eps * p[0], eps * p[1]]).collect();
        let w = energy_density(&net, &micro, i, &u);
        let w_ccm = mat.bulk_sum() * eps * eps;
        assert!(((w - w_ccm) / w_ccm).abs() < 1e-10);
    }

    #[test]
    fn tau0_golden_value() {
        // 50-digit summation over the 28-bond lattice, E = 1, ν = 0.25
        // plane strain, Δx = 0.01, δ = 3Δx, l = δ/3
        let (_, net, micro, _) = setup(9, 3.0, PlaneMode::PlaneStrain);
        assert_eq!(net.horizon().length, 0.01);
        assert!((micro.tau0 / 4.7265081569841298e7 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ceramic_critical_stretch_golden_value() {
        // same summation for the 250 x 100 ceramic mesh cut at column 125,
        // rows near the top and bottom edges keeping only their bonds
        let mesh = Mesh::structured(250, 100, 0.025, 0.010).unwrap();
        let net = BondNetwork::build(&mesh, Horizon::from_ratios(&mesh, 3.0, 3.0).unwrap()).unwrap();
        let mat = MechMaterial {
            youngs_modulus: 370e9,
            poissons_ratio: 0.33,
            thermal_expansion: 7.5e-6,
            fracture_energy: Some(42.47),
            plane: PlaneMode::PlaneStress,
        };
        let micro = Micromodulus {
            tau0: calibrate_tau0(&net, &mat).unwrap(),
            length: net.horizon().length,
        };
        assert!((micro.tau0 / 1.6313507631381791e27 - 1.0).abs() < 1e-12);
        let s0 = critical_stretch(&mesh, &net, &micro, 42.47).unwrap();
        assert!((s0 / 7.7031148505058936e-4 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn tau0_linear_in_modulus() {
        let (_, net, micro, mut mat) = setup(9, 3.0, PlaneMode::PlaneStress);
        mat.youngs_modulus *= 2.0;
        let t2 = calibrate_tau0(&net, &mat).unwrap();
        assert!((t2 / micro.tau0 - 2.0).abs() < 1e-14);
    }

    #[test]
    fn calibration_needs_full_neighbourhood() {
        let mesh = Mesh::structured(4, 4, 0.04, 0.04).unwrap();
        let net = BondNetwork::build(&mesh, Horizon::from_ratios(&mesh, 3.0, 3.0).unwrap()).unwrap();
        assert!(matches!(
            calibrate_tau0(&net, &material(PlaneMode::PlaneStrain)),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn poisson_validation() {
        let mut m = material(PlaneMode::PlaneStress);
        m.poissons_ratio = 0.33;
        assert_eq!(m.validate().unwrap().len(), 1);
        m.poissons_ratio = 0.25;
        assert!(m.validate().is_err());
        let m = material(PlaneMode::PlaneStrain);
        assert!(m.validate().unwrap().is_empty());
    }

    #[test]
    fn critical_stretch_scaling_and_cut_energy() {
        let (mesh, net, micro, _) = setup(24, 3.0, PlaneMode::PlaneStress);
        let s1 = critical_stretch(&mesh, &net, &micro, 1.0).unwrap();
        let s4 = critical_stretch(&mesh, &net, &micro, 4.0).unwrap();
        assert!((s4 / s1 - 2.0).abs() < 1e-14);
        let (sum, len) = cut_sum(&mesh, &net, &micro, 7);
        let released = sum * s1 * s1;
        assert!((released / len - 1.0).abs() < 0.02);
    }

    fn free_system(mesh: &Mesh, net: &BondNetwork, micro: &Micromodulus, mat: &MechMaterial, fixed: &[usize]) -> MechanicsSystem {
        MechanicsSystem::new(mesh, net, micro, mat, DEFAULT_STABILIZATION * mat.youngs_modulus, fixed, SolverKind::Direct).unwrap()
    }

    #[test]
    fn stiffness_annihilates_rigid_motion() {
        let (mesh, net, micro, mat) = setup(8, 3.0, PlaneMode::PlaneStrain);
        let sys = free_system(&mesh, &net, &micro, &mat, &[]);
        let k = sys.stiffness(&net);
        assert!(k.symmetry_error() <= 1e-12);
        let t: Vec<f64> = (0..sys.num_dofs()).map(|d| if d % 2 == 0 { 1.0 } else { -0.5 }).collect();
        let r = k.matvec(&t);
        let scale = k.frobenius() * crate::sparse::norm(&t);
        assert!(crate::sparse::norm(&r) <= 1e-9 * scale);

        let th = 1e-6;
        let rot: Vec<f64> = mesh
            .nodes()
            .iter()
            .flat_map(|p| [-th * p[1], th * p[0]])
            .collect();
        let op = sys.operator(&net);
        let r = op.matvec(&rot);
        assert!(crate::sparse::norm(&r) <= 1e-6 * op.frobenius() * crate::sparse::norm(&rot));
    }

    #[test]
    fn stabilization_vanishes_on_bilinear_fields() {
        let mesh = Mesh::masked(10, 8, 0.1, 0.08, |i, j| !(i >= 6 && j >= 5)).unwrap();
        let net = BondNetwork::build(&mesh, Horizon::from_ratios(&mesh, 2.0, 3.0).unwrap()).unwrap();
        let mat = material(PlaneMode::PlaneStress);
        let micro = Micromodulus { tau0: 1.0, length: net.horizon().length };
        let sys = free_system(&mesh, &net, &micro, &mat, &[]);
        let s = sys.stabilization_matrix();
        let d: Vec<f64> = mesh
            .nodes()
            .iter()
            .flat_map(|p| [1.0 + 2.0 * p[0] - p[1] + 5.0 * p[0] * p[1], 0.3 * p[1] - p[0] * p[1]])
            .collect();
        let r = s.matvec(&d);
        assert!(crate::sparse::norm(&r) <= 1e-12 * s.frobenius() * crate::sparse::norm(&d));
        // a checkerboard is penalized
        let cb: Vec<f64> = mesh
            .nodes()
            .iter()
            .flat_map(|p| {
                let parity = ((p[0] / 0.01).round() as i64 + (p[1] / 0.01).round() as i64) % 2;
                let v = if parity == 0 { 1.0 } else { -1.0 };
                [v, 0.0]
            })
            .collect();
        let e: f64 = cb.iter().zip(s.matvec(&cb)).map(|(a, b)| a * b).sum();
        assert!(e > 0.0);
    }

    #[test]
    fn all_bonds_broken_gives_zero_stiffness() {
        let (mesh, mut net, micro, mat) = setup(6, 2.0, PlaneMode::PlaneStrain);
        let sys = free_system(&mesh, &net, &micro, &mat, &[]);
        let before = sys.stiffness(&net).diagonal();
        let all: Vec<usize> = (0..net.num_bonds()).collect();
        net.break_bonds(&all[..10]);
        let mid = sys.stiffness(&net).diagonal();
        assert!(mid.iter().zip(&before).all(|(a, b)| a <= b));
        net.break_bonds(&all);
        assert!(sys.stiffness(&net).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_load_gives_zero_displacement() {
        let (mesh, mut net, micro, mat) = setup(8, 3.0, PlaneMode::PlaneStrain);
        let fixed: Vec<(usize, f64)> = mesh.node_set("bottom").unwrap().iter().flat_map(|&n| [(2 * n, 0.0), (2 * n + 1, 0.0)]).collect();
        let c = Prescribed::new(fixed).unwrap();
        let mut sys = free_system(&mesh, &net, &micro, &mat, c.indices());
        let out = sys
            .fracture_loop(&mut net, &vec![0.0; sys.num_dofs()], &vec![0.0; 64], &c, Some(0.1), 10, 0)
            .unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.breaks, vec![0]);
        assert!(out.displacement.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn free_thermal_expansion_is_stress_free() {
        for plane in [PlaneMode::PlaneStress, PlaneMode::PlaneStrain] {
            let (mesh, net, micro, mat) = setup(12, 3.0, plane);
            let a = mat.bond_expansivity();
            let dt = 10.0;
            let exact: Vec<f64> = mesh.nodes().iter().flat_map(|p| [a * dt * p[0], a * dt * p[1]]).collect();
            let sys = free_system(&mesh, &net, &micro, &mat, &[]);
            let f = sys.thermal_load(&net, &vec![dt; mesh.num_elements()]);
            let r: Vec<f64> = sys.operator(&net).matvec(&exact).iter().zip(&f).map(|(k, f)| k - f).collect();
            assert!(crate::sparse::norm(&r) <= 1e-8 * crate::sparse::norm(&f));
        }
    }

    #[test]
    fn uniform_temperature_gives_zero_load_at_reference() {
        let (mesh, net, micro, mat) = setup(6, 2.0, PlaneMode::PlaneStrain);
        let sys = free_system(&mesh, &net, &micro, &mat, &[]);
        assert!(sys.thermal_load(&net, &vec![0.0; 36]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn prescribed_edge_displacement_is_exact() {
        let (mesh, mut net, micro, mat) = setup(10, 3.0, PlaneMode::PlaneStress);
        let mut c: Vec<(usize, f64)> = mesh.node_set("bottom").unwrap().iter().map(|&n| (2 * n + 1, 0.0)).collect();
        c.extend(mesh.node_set("top").unwrap().iter().map(|&n| (2 * n + 1, 5e-7)));
        c.push((2 * mesh.node_set("bottom").unwrap()[0], 0.0));
        let c = Prescribed::new(c).unwrap();
        let mut sys = free_system(&mesh, &net, &micro, &mat, c.indices());
        let out = sys
            .fracture_loop(&mut net, &vec![0.0; sys.num_dofs()], &vec![0.0; 100], &c, None, 5, 0)
            .unwrap();
        for &n in mesh.node_set("top").unwrap() {
            assert_eq!(out.displacement[2 * n + 1], 5e-7);
        }
    }

    #[test]
    fn unconstrained_body_reports_fragments() {
        let (mesh, net, micro, mat) = setup(5, 2.0, PlaneMode::PlaneStrain);
        let mut sys = free_system(&mesh, &net, &micro, &mat, &[]);
        let err = sys
            .solve(&net, &vec![1.0; sys.num_dofs()], &Prescribed::default())
            .unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("fragment"), "{msg}");
    }

    #[test]
    fn antisymmetric_temperature_gives_antisymmetric_load() {
        let (mesh, net, micro, mat) = setup(8, 3.0, PlaneMode::PlaneStrain);
        let sys = free_system(&mesh, &net, &micro, &mat, &[]);
        let (lx, _) = mesh.extent();
        let dt: Vec<f64> = mesh.centroids().iter().map(|c| c[0] - lx / 2.0).collect();
        let f = sys.thermal_load(&net, &dt);
        for (n, p) in mesh.nodes().iter().enumerate() {
            let m = mesh.nodes().iter().position(|q| (q[0] - (lx - p[0])).abs() < 1e-12 && q[1] == p[1]).unwrap();
            // mirror in x: ΔT flips sign, so F_x(mirror) = F_x and F_y(mirror) = −F_y
            assert!((f[2 * m] - f[2 * n]).abs() < 1e-12 * (1.0 + f[2 * n].abs()));
            assert!((f[2 * m + 1] + f[2 * n + 1]).abs() < 1e-12 * (1.0 + f[2 * n + 1].abs()));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(24))]

            #[test]
            fn stiffness_invariants_survive_breakage(
                seed in proptest::collection::vec(any::<bool>(), 64),
                shift in -1.0..1.0f64,
                probe in proptest::collection::vec(-1.0..1.0f64, 2 * 81),
            ) {
                let (mesh, mut net, micro, mat) = setup(8, 3.0, PlaneMode::PlaneStrain);
                let broken: Vec<usize> = (0..net.num_bonds()).filter(|k| seed[k % seed.len()] && k % 3 == 0).collect();
                net.break_bonds(&broken);
                let sys = free_system(&mesh, &net, &micro, &mat, &[]);
                let k = sys.stiffness(&net);
                prop_assert!(k.symmetry_error() <= 1e-12);
                let t: Vec<f64> = (0..sys.num_dofs()).map(|d| if d % 2 == 0 { shift } else { 1.0 - shift }).collect();
                let r = k.matvec(&t);
                prop_assert!(crate::sparse::norm(&r) <= 1e-9 * k.frobenius() * crate::sparse::norm(&t));
                let kx = k.matvec(&probe);
                let energy: f64 = kx.iter().zip(&probe).map(|(a, b)| a * b).sum();
                prop_assert!(energy >= -1e-12 * k.frobenius() * crate::sparse::norm(&probe).powi(2));
            }
        }
    }

}
