//! Finite element heat conduction: assembly of the capacity, conduction and
//! load terms on bilinear quads, and θ-method time stepping.

use serde::{Deserialize, Serialize};

use crate::damage::ConductivityField;
use crate::error::{Error, Result};
use crate::mesh::{BoundaryEdge, Mesh};
use crate::sparse::{CsrMatrix, Partition, Prescribed, SolverKind, SpdSolver};

pub mod analytic;

const GAUSS: f64 = 0.577_350_269_189_625_8; // 1/sqrt(3)
const GAUSS_POINTS: [[f64; 2]; 4] = [
    [-GAUSS, -GAUSS],
    [GAUSS, -GAUSS],
    [GAUSS, GAUSS],
    [-GAUSS, GAUSS],
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalMaterial {
    /// kg/m³
    pub density: f64,
    /// J/(kg·K)
    pub specific_heat: f64,
    /// Undamaged conductivity k0, W/(m·K).
    pub conductivity: f64,
    /// Volumetric heat source, W/m³.
    pub heat_source: f64,
}

impl ThermalMaterial {
    pub fn capacity(&self) -> f64 {
        self.density * self.specific_heat
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.conductivity > 0.0) {
            return Err(Error::config(format!(
                "conductivity must be positive (got {})",
                self.conductivity
            )));
        }
        if !(self.density >= 0.0 && self.specific_heat >= 0.0) {
            return Err(Error::config("density and specific heat must be non-negative"));
        }
        if !self.heat_source.is_finite() {
            return Err(Error::config("heat source must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluxEdge {
    pub edge: BoundaryEdge,
    /// Outward heat flux density, W/m².
    pub q: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvectionEdge {
    pub edge: BoundaryEdge,
    /// Film coefficient, W/(m²·K).
    pub h: f64,
    pub ambient: f64,
}

/// Element conduction matrices for unit conductivity along x and along y.
/// All elements of a structured mesh share them.
fn unit_conduction(mesh: &Mesh) -> ([[f64; 4]; 4], [[f64; 4]; 4]) {
    let mut kx = [[0.0; 4]; 4];
    let mut ky = [[0.0; 4]; 4];
    for gp in GAUSS_POINTS {
        let s = mesh.shape_eval_unchecked(0, gp);
        let w = s.det_jacobian;
        for a in 0..4 {
            for b in 0..4 {
                kx[a][b] += w * s.gradients[a][0] * s.gradients[b][0];
                ky[a][b] += w * s.gradients[a][1] * s.gradients[b][1];
            }
        }
    }
    (kx, ky)
}

/// Consistent mass matrix of one element for unit capacity.
fn unit_mass(mesh: &Mesh) -> [[f64; 4]; 4] {
    let mut m = [[0.0; 4]; 4];
    for gp in GAUSS_POINTS {
        let s = mesh.shape_eval_unchecked(0, gp);
        for a in 0..4 {
            for b in 0..4 {
                m[a][b] += s.det_jacobian * s.values[a] * s.values[b];
            }
        }
    }
    m
}

fn nodal_pattern(mesh: &Mesh) -> CsrMatrix {
    CsrMatrix::from_groups(mesh.num_nodes(), mesh.elements().iter().map(|c| c.as_slice()))
}

/// Conduction matrix including the convective surface term.
pub fn assemble_conduction(
    mesh: &Mesh,
    conductivity: &ConductivityField,
    convection: &[ConvectionEdge],
) -> Result<CsrMatrix> {
    let mut k = nodal_pattern(mesh);
    fill_conduction(mesh, conductivity, convection, &mut k)?;
    Ok(k)
}

fn fill_conduction(
    mesh: &Mesh,
    conductivity: &ConductivityField,
    convection: &[ConvectionEdge],
    k: &mut CsrMatrix,
) -> Result<()> {
    if conductivity.len() != mesh.num_elements() {
        return Err(Error::invalid("conductivity field size does not match the mesh"));
    }
    if let Some(e) = (0..conductivity.len())
        .find(|&e| !(conductivity.kx[e] >= 0.0 && conductivity.ky[e] >= 0.0))
    {
        return Err(Error::InvalidState(format!(
            "element {e} has negative or undefined conductivity ({}, {})",
            conductivity.kx[e], conductivity.ky[e]
        )));
    }
    k.clear();
    let (ux, uy) = unit_conduction(mesh);
    for (e, conn) in mesh.elements().iter().enumerate() {
        let (cx, cy) = (conductivity.kx[e], conductivity.ky[e]);
        let mut block = [[0.0; 4]; 4];
        for a in 0..4 {
            for b in 0..4 {
                block[a][b] = cx * ux[a][b] + cy * uy[a][b];
            }
        }
        k.add_block(conn, &block);
    }
    for c in convection {
        if c.h == 0.0 {
            continue;
        }
        let nodes = mesh.edge_nodes(c.edge);
        let l = mesh.edge_length(c.edge);
        let f = c.h * l / 6.0;
        k.add_block(&nodes, &[[2.0 * f, f], [f, 2.0 * f]]);
    }
    Ok(())
}

/// Consistent capacity matrix scaled by ρc.
pub fn assemble_capacity(mesh: &Mesh, rho_c: f64) -> Result<CsrMatrix> {
    if !(rho_c >= 0.0) {
        return Err(Error::invalid(format!("heat capacity must be non-negative (got {rho_c})")));
    }
    let mut c = nodal_pattern(mesh);
    let m = unit_mass(mesh);
    let block = m.map(|row| row.map(|v| rho_c * v));
    for conn in mesh.elements() {
        c.add_block(conn, &block);
    }
    Ok(c)
}

/// Load vector from a uniform volumetric source, boundary fluxes (positive
/// `q` leaves the body) and convective ambient terms.
pub fn assemble_load(
    mesh: &Mesh,
    source: f64,
    flux: &[FluxEdge],
    convection: &[ConvectionEdge],
) -> Vec<f64> {
    let mut p = vec![0.0; mesh.num_nodes()];
    if source != 0.0 {
        let share = source * mesh.element_area() / 4.0;
        for conn in mesh.elements() {
            for &n in conn {
                p[n] += share;
            }
        }
    }
    for f in flux {
        let half = -f.q * mesh.edge_length(f.edge) / 2.0;
        for n in mesh.edge_nodes(f.edge) {
            p[n] += half;
        }
    }
    for c in convection {
        let half = c.h * c.ambient * mesh.edge_length(c.edge) / 2.0;
        for n in mesh.edge_nodes(c.edge) {
            p[n] += half;
        }
    }
    p
}

/// Heat flux `J = −k∇T` at each element centroid.
pub fn compute_heat_flux(
    mesh: &Mesh,
    temperature: &[f64],
    conductivity: &ConductivityField,
) -> Result<Vec<[f64; 2]>> {
    if temperature.len() != mesh.num_nodes() || conductivity.len() != mesh.num_elements() {
        return Err(Error::invalid("field sizes do not match the mesh"));
    }
    Ok(mesh
        .elements()
        .iter()
        .enumerate()
        .map(|(e, conn)| {
            let s = mesh.shape_eval_unchecked(e, [0.0, 0.0]);
            let mut g = [0.0; 2];
            for a in 0..4 {
                g[0] += s.gradients[a][0] * temperature[conn[a]];
                g[1] += s.gradients[a][1] * temperature[conn[a]];
            }
            [-conductivity.kx[e] * g[0], -conductivity.ky[e] * g[1]]
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OperatorKey {
    dt: f64,
    theta: f64,
    version: u64,
}

/// Heat system with a cached factorization of the reduced step operator.
#[derive(Debug, Clone)]
pub struct ThermalSystem {
    capacity: CsrMatrix,
    conduction: CsrMatrix,
    convection: Vec<ConvectionEdge>,
    partition: Partition,
    solver: SpdSolver,
    key: Option<OperatorKey>,
    version: u64,
    quasi_static: bool,
}

impl ThermalSystem {
    pub fn new(
        mesh: &Mesh,
        rho_c: f64,
        conductivity: &ConductivityField,
        convection: Vec<ConvectionEdge>,
        fixed_nodes: &[usize],
        solver: SolverKind,
    ) -> Result<Self> {
        let capacity = assemble_capacity(mesh, rho_c)?;
        let conduction = assemble_conduction(mesh, conductivity, &convection)?;
        Ok(ThermalSystem {
            capacity,
            conduction,
            convection,
            partition: Partition::new(mesh.num_nodes(), fixed_nodes),
            solver: SpdSolver::new(solver),
            key: None,
            version: 0,
            quasi_static: rho_c == 0.0,
        })
    }

    pub fn capacity(&self) -> &CsrMatrix {
        &self.capacity
    }

    pub fn conduction(&self) -> &CsrMatrix {
        &self.conduction
    }

    /// Reassembles K; the step operator is refactored only if K changed.
    pub fn set_conductivity(&mut self, mesh: &Mesh, conductivity: &ConductivityField) -> Result<()> {
        let mut k = self.conduction.clone();
        fill_conduction(mesh, conductivity, &self.convection, &mut k)?;
        if k.values() != self.conduction.values() {
            self.conduction = k;
            self.version += 1;
        }
        Ok(())
    }

    /// Advances `temperature` by one θ-step. `dirichlet` holds the values at
    /// the end of the step for the fixed nodes the system was built with;
    /// `load` is P evaluated at the intermediate time.
    pub fn theta_step(
        &mut self,
        temperature: &mut [f64],
        dirichlet: &Prescribed,
        load: &[f64],
        dt: f64,
        theta: f64,
    ) -> Result<()> {
        if !(dt > 0.0) || !(0.0..=1.0).contains(&theta) {
            return Err(Error::invalid(format!(
                "time step must be positive and θ in [0, 1] (got Δt = {dt}, θ = {theta})"
            )));
        }
        if dirichlet.indices() != self.partition.fixed() {
            return Err(Error::invalid("Prescribed nodes differ from the system's fixed set"));
        }
        let n = temperature.len();
        let key = OperatorKey {
            dt,
            theta,
            version: self.version,
        };
        let (operator, rhs) = if self.quasi_static {
            (self.conduction.clone(), load.to_vec())
        } else {
            let mut a = self.capacity.clone();
            a.axpby(1.0 / dt, theta, &self.conduction);
            let ct = self.capacity.matvec(temperature);
            let kt = self.conduction.matvec(temperature);
            let rhs: Vec<f64> = (0..n)
                .map(|i| ct[i] / dt - (1.0 - theta) * kt[i] + load[i])
                .collect();
            (a, rhs)
        };
        let op_key = if self.quasi_static {
            OperatorKey { dt: 0.0, theta: 1.0, ..key }
        } else {
            key
        };
        if self.key != Some(op_key) {
            self.key = None;
            self.solver.factorize(self.partition.reduce(&operator))?;
            self.key = Some(op_key);
        }
        dirichlet.apply(temperature);
        let reduced = self.partition.reduce_rhs(&operator, &rhs, temperature);
        let x = self.solver.solve(&reduced)?;
        self.partition.scatter(&x, temperature);
        Ok(())
    }

    /// Reduced step operator `C/Δt + θK` (or `K` without capacity), for
    /// inspection.
    pub fn step_operator(&self, dt: f64, theta: f64) -> CsrMatrix {
        let a = if self.quasi_static {
            self.conduction.clone()
        } else {
            let mut a = self.capacity.clone();
            a.axpby(1.0 / dt, theta, &self.conduction);
            a
        };
        self.partition.reduce(&a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strip(nx: usize, ny: usize, lx: f64, ly: f64) -> Mesh {
        Mesh::structured(nx, ny, lx, ly).unwrap()
    }

    fn dirichlet_sides(mesh: &Mesh, left: f64, right: f64) -> Prescribed {
        let mut e: Vec<(usize, f64)> = mesh.node_set("left").unwrap().iter().map(|&n| (n, left)).collect();
        e.extend(mesh.node_set("right").unwrap().iter().map(|&n| (n, right)));
        Prescribed::new(e).unwrap()
    }

    #[test]
    fn unit_element_conduction_matrix() {
        let m = strip(1, 1, 1.0, 1.0);
        let k = assemble_conduction(&m, &ConductivityField::uniform(1, 1.0), &[]).unwrap();
        // classical bilinear square: 1/6 * [[4,-1,-2,-1], ...]
        let expect = [
            [4.0, -1.0, -2.0, -1.0],
            [-1.0, 4.0, -1.0, -2.0],
            [-2.0, -1.0, 4.0, -1.0],
            [-1.0, -2.0, -1.0, 4.0],
        ];
        let conn = m.elements()[0];
        for a in 0..4 {
            for b in 0..4 {
                assert!((k.get(conn[a], conn[b]) - expect[a][b] / 6.0).abs() < 1e-14);
            }
        }
        assert!(k.row_sums().iter().all(|s| s.abs() < 1e-14));
    }

    #[test]
    fn zero_film_coefficient_adds_nothing() {
        let m = strip(3, 2, 1.0, 1.0);
        let cond = ConductivityField::uniform(6, 2.0);
        let conv: Vec<ConvectionEdge> = m
            .boundary("left")
            .unwrap()
            .iter()
            .map(|&edge| ConvectionEdge { edge, h: 0.0, ambient: 5.0 })
            .collect();
        let a = assemble_conduction(&m, &cond, &[]).unwrap();
        let b = assemble_conduction(&m, &cond, &conv).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn negative_conductivity_rejected() {
        let m = strip(2, 1, 1.0, 1.0);
        let mut cond = ConductivityField::uniform(2, 1.0);
        cond.ky[1] = -1.0;
        assert!(matches!(assemble_conduction(&m, &cond, &[]), Err(Error::InvalidState(_))));
    }

    #[test]
    fn capacity_totals_and_additivity() {
        let m = strip(1, 1, 1.0, 1.0);
        let c = assemble_capacity(&m, 1.0).unwrap();
        assert!((c.values().iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let zero = assemble_capacity(&m, 0.0).unwrap();
        assert!(zero.values().iter().all(|&v| v == 0.0));

        let two = strip(2, 1, 2.0, 1.0);
        let c2 = assemble_capacity(&two, 1.0).unwrap();
        // shared edge nodes receive the diagonal from both elements
        let shared = two.elements()[0][1];
        assert!((c2.get(shared, shared) - 2.0 * c.get(0, 0)).abs() < 1e-15);
        assert!((c2.values().iter().sum::<f64>() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn load_vector_terms() {
        let m = strip(1, 1, 2.0, 1.0);
        assert_eq!(assemble_load(&m, 0.0, &[], &[]), vec![0.0; 4]);
        let top = m.boundary("top").unwrap()[0];
        let p = assemble_load(&m, 0.0, &[FluxEdge { edge: top, q: 3.0 }], &[]);
        for n in m.edge_nodes(top) {
            assert_eq!(p[n], -3.0 * 2.0 / 2.0);
        }
        assert_eq!(p.iter().filter(|&&v| v != 0.0).count(), 2);
        let p = assemble_load(&m, 0.0, &[], &[ConvectionEdge { edge: top, h: 4.0, ambient: 5.0 }]);
        for n in m.edge_nodes(top) {
            assert_eq!(p[n], 4.0 * 5.0 * 2.0 / 2.0);
        }
        let q = assemble_load(&m, 8.0, &[], &[]);
        assert!((q.iter().sum::<f64>() - 16.0).abs() < 1e-14);
    }

    #[test]
    fn steady_strip_is_linear() {
        let m = strip(10, 3, 1.0, 0.3);
        let cond = ConductivityField::uniform(m.num_elements(), 1.0);
        let d = dirichlet_sides(&m, 0.0, 1.0);
        let mut sys = ThermalSystem::new(&m, 0.0, &cond, vec![], d.indices(), SolverKind::Direct).unwrap();
        let mut t = vec![0.0; m.num_nodes()];
        sys.theta_step(&mut t, &d, &vec![0.0; m.num_nodes()], 1.0, 1.0).unwrap();
        for (n, p) in m.nodes().iter().enumerate() {
            assert!((t[n] - p[0]).abs() < 1e-10);
        }
    }

    #[test]
    fn vanishing_vertical_conductivity_decouples_rows() {
        // left/right values vary with y; without vertical conduction each
        // row solves its own 1D problem, so every column of nodes with the
        // same x holds the same linear profile shape as its row's data
        let m = strip(6, 4, 1.0, 1.0);
        let mut cond = ConductivityField::uniform(m.num_elements(), 1.0);
        cond.ky.iter_mut().for_each(|k| *k = 1e-14);
        let mut e: Vec<(usize, f64)> = m.node_set("left").unwrap().iter().map(|&n| (n, 0.0)).collect();
        e.extend(m.node_set("right").unwrap().iter().map(|&n| (n, 1.0)));
        let d = Prescribed::new(e).unwrap();
        let mut sys = ThermalSystem::new(&m, 0.0, &cond, vec![], d.indices(), SolverKind::Direct).unwrap();
        let mut t = vec![0.0; m.num_nodes()];
        sys.theta_step(&mut t, &d, &vec![0.0; m.num_nodes()], 1.0, 1.0).unwrap();
        for (n, p) in m.nodes().iter().enumerate() {
            let same_x = m.nodes().iter().position(|q| q[0] == p[0]).unwrap();
            assert!((t[n] - t[same_x]).abs() < 1e-8);
        }
    }

    #[test]
    fn insulated_uniform_field_is_unchanged() {
        let m = strip(5, 5, 1.0, 1.0);
        let cond = ConductivityField::uniform(m.num_elements(), 3.0);
        let mut sys = ThermalSystem::new(&m, 2.0, &cond, vec![], &[], SolverKind::Direct).unwrap();
        let none = Prescribed::default();
        for (dt, theta) in [(0.1, 1.0), (0.01, 0.5), (1.0, 0.0)] {
            let mut t = vec![7.5; m.num_nodes()];
            sys.theta_step(&mut t, &none, &vec![0.0; m.num_nodes()], dt, theta).unwrap();
            assert!(t.iter().all(|v| (v - 7.5).abs() < 1e-12));
        }
    }

    #[test]
    fn energy_conserved_when_insulated() {
        let m = strip(6, 6, 1.0, 1.0);
        let cond = ConductivityField::uniform(m.num_elements(), 1.0);
        let mut sys = ThermalSystem::new(&m, 1.0, &cond, vec![], &[], SolverKind::Direct).unwrap();
        let mut t: Vec<f64> = m.nodes().iter().map(|p| (3.0 * p[0]).sin() + p[1]).collect();
        let energy = |sys: &ThermalSystem, t: &[f64]| sys.capacity().matvec(t).iter().sum::<f64>();
        let e0 = energy(&sys, &t);
        for _ in 0..5 {
            sys.theta_step(&mut t, &Prescribed::default(), &vec![0.0; m.num_nodes()], 0.01, 1.0)
                .unwrap();
            assert!((energy(&sys, &t) - e0).abs() < 1e-10 * e0.abs().max(1.0));
        }
    }

    #[test]
    fn operators_are_symmetric() {
        let m = strip(4, 3, 1.0, 1.0);
        let mut cond = ConductivityField::uniform(12, 1.0);
        cond.kx[5] = 0.1;
        let conv: Vec<ConvectionEdge> = m
            .boundary("bottom")
            .unwrap()
            .iter()
            .map(|&edge| ConvectionEdge { edge, h: 10.0, ambient: 1.0 })
            .collect();
        let k = assemble_conduction(&m, &cond, &conv).unwrap();
        let c = assemble_capacity(&m, 3.0).unwrap();
        assert!(k.symmetry_error() <= 1e-12 && c.symmetry_error() <= 1e-12);
    }

    #[test]
    fn heat_flux_of_linear_field() {
        let m = strip(3, 3, 1.0, 1.0);
        let t: Vec<f64> = m.nodes().iter().map(|p| 2.0 * p[0] + 1.0).collect();
        let cond = ConductivityField::uniform(9, 1.0);
        for j in compute_heat_flux(&m, &t, &cond).unwrap() {
            assert!((j[0] + 2.0).abs() < 1e-12 && j[1].abs() < 1e-12);
        }
        let flat = vec![4.0; m.num_nodes()];
        assert!(compute_heat_flux(&m, &flat, &cond).unwrap().iter().all(|j| *j == [0.0, 0.0] || (j[0].abs() < 1e-15 && j[1].abs() < 1e-15)));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(16))]

            #[test]
            fn backward_euler_stays_within_data_bounds(
                dt in 1e-4f64..0.5,
                left in 0.0f64..=1.0,
                right in 0.0f64..=1.0,
            ) {
                let m = strip(8, 4, 1.0, 0.5);
                let cond = ConductivityField::uniform(m.num_elements(), 1.0);
                let d = dirichlet_sides(&m, left, right);
                let mut sys = ThermalSystem::new(&m, 1.0, &cond, vec![], d.indices(), SolverKind::Direct).unwrap();
                let mut t = vec![0.5; m.num_nodes()];
                let lo = left.min(right).min(0.5) - 1e-12;
                let hi = left.max(right).max(0.5) + 1e-12;
                for _ in 0..4 {
                    sys.theta_step(&mut t, &d, &vec![0.0; m.num_nodes()], dt, 1.0).unwrap();
                    prop_assert!(t.iter().all(|&v| v >= lo && v <= hi));
                }
            }
        }
    }
}
