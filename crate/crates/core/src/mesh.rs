//! Structured quadrilateral mesh shared by the heat-conduction and the
//! peridynamic solves.
//!
//! Nodes and elements are numbered row-major (x fastest). Element nodes are
//! stored counterclockwise starting at the lower-left corner, which fixes the
//! local edge numbering: edge 0 is the bottom edge (nodes 0-1), edge 1 the
//! right edge (1-2), edge 2 the top edge (2-3) and edge 3 the left edge (3-0).

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Reference coordinates of the four element corners.
pub const CORNERS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

/// Boundary tags produced for every structured mesh.
pub const SIDE_TAGS: [&str; 4] = ["left", "right", "top", "bottom"];

/// Tag used for boundary edges that do not lie on the bounding box (re-entrant
/// edges of masked meshes).
pub const INNER_TAG: &str = "inner";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct BoundaryEdge {
    pub element: usize,
    pub local_edge: u8,
}

/// Bilinear shape functions and their physical gradients at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeEval {
    pub values: [f64; 4],
    pub gradients: [[f64; 2]; 4],
    pub det_jacobian: f64,
}

#[derive(Debug, Clone)]
pub struct Mesh {
    nx: usize,
    ny: usize,
    dx: f64,
    dy: f64,
    nodes: Vec<[f64; 2]>,
    elements: Vec<[usize; 4]>,
    cells: Vec<(usize, usize)>,
    cell_to_element: Vec<Option<usize>>,
    node_elements_offsets: Vec<usize>,
    node_elements: Vec<usize>,
    boundary_edges: BTreeMap<String, Vec<BoundaryEdge>>,
    node_sets: BTreeMap<String, Vec<usize>>,
}

impl Mesh {
    /// Uniform `nx × ny` grid over `[0, lx] × [0, ly]`.
    pub fn structured(nx: usize, ny: usize, lx: f64, ly: f64) -> Result<Self> {
        Self::masked(nx, ny, lx, ly, |_, _| true)
    }

    /// Uniform grid with the cells for which `keep(i, j)` is false removed.
    /// Nodes not referenced by a kept cell are dropped; the remaining ones keep
    /// their row-major order.
    pub fn masked(
        nx: usize,
        ny: usize,
        lx: f64,
        ly: f64,
        keep: impl Fn(usize, usize) -> bool,
    ) -> Result<Self> {
        if nx == 0 || ny == 0 {
            return Err(Error::invalid(format!(
                "element counts must be positive (got {nx} x {ny})"
            )));
        }
        if !(lx > 0.0 && ly > 0.0) || !lx.is_finite() || !ly.is_finite() {
            return Err(Error::invalid(format!(
                "domain lengths must be positive (got {lx} x {ly})"
            )));
        }
        let dx = lx / nx as f64;
        let dy = ly / ny as f64;

        let kept: Vec<bool> = (0..ny)
            .flat_map(|j| (0..nx).map(move |i| (i, j)))
            .map(|(i, j)| keep(i, j))
            .collect();
        if !kept.iter().any(|&k| k) {
            return Err(Error::invalid("mask removes every element"));
        }

        let grid_node = |i: usize, j: usize| j * (nx + 1) + i;
        let mut used = vec![false; (nx + 1) * (ny + 1)];
        for j in 0..ny {
            for i in 0..nx {
                if kept[j * nx + i] {
                    for (a, b) in [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)] {
                        used[grid_node(a, b)] = true;
                    }
                }
            }
        }
        let mut node_index = vec![usize::MAX; used.len()];
        let mut nodes = Vec::new();
        for j in 0..=ny {
            for i in 0..=nx {
                let g = grid_node(i, j);
                if used[g] {
                    node_index[g] = nodes.len();
                    nodes.push([i as f64 * dx, j as f64 * dy]);
                }
            }
        }

        let mut elements = Vec::new();
        let mut cells = Vec::new();
        let mut cell_to_element = vec![None; nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                if !kept[j * nx + i] {
                    continue;
                }
                cell_to_element[j * nx + i] = Some(elements.len());
                elements.push([
                    node_index[grid_node(i, j)],
                    node_index[grid_node(i + 1, j)],
                    node_index[grid_node(i + 1, j + 1)],
                    node_index[grid_node(i, j + 1)],
                ]);
                cells.push((i, j));
            }
        }

        let mut counts = vec![0usize; nodes.len() + 1];
        for conn in &elements {
            for &n in conn {
                counts[n + 1] += 1;
            }
        }
        for n in 0..nodes.len() {
            counts[n + 1] += counts[n];
        }
        let mut fill = counts.clone();
        let mut node_elements = vec![0; counts[nodes.len()]];
        for (e, conn) in elements.iter().enumerate() {
            for &n in conn {
                node_elements[fill[n]] = e;
                fill[n] += 1;
            }
        }

        let mut mesh = Mesh {
            nx,
            ny,
            dx,
            dy,
            nodes,
            elements,
            cells,
            cell_to_element,
            node_elements_offsets: counts,
            node_elements,
            boundary_edges: BTreeMap::new(),
            node_sets: BTreeMap::new(),
        };
        mesh.tag_boundaries();
        Ok(mesh)
    }

    fn tag_boundaries(&mut self) {
        let mut edges: BTreeMap<String, Vec<BoundaryEdge>> = SIDE_TAGS
            .iter()
            .map(|t| (t.to_string(), Vec::new()))
            .collect();
        for (e, &(i, j)) in self.cells.iter().enumerate() {
            // (neighbour cell offset, local edge, tag when on the bounding box)
            let sides: [(isize, isize, u8, &str, bool); 4] = [
                (0, -1, 0, "bottom", j == 0),
                (1, 0, 1, "right", i + 1 == self.nx),
                (0, 1, 2, "top", j + 1 == self.ny),
                (-1, 0, 3, "left", i == 0),
            ];
            for (di, dj, local_edge, side, on_box) in sides {
                let edge = BoundaryEdge {
                    element: e,
                    local_edge,
                };
                if on_box {
                    edges.get_mut(side).unwrap().push(edge);
                } else if self.element_at_offset(i, j, di, dj).is_none() {
                    edges.entry(INNER_TAG.to_string()).or_default().push(edge);
                }
            }
        }
        let mut sets = BTreeMap::new();
        for (tag, list) in &edges {
            let mut nodes: Vec<usize> = list.iter().flat_map(|&b| self.edge_nodes(b)).collect();
            nodes.sort_unstable();
            nodes.dedup();
            sets.insert(tag.clone(), nodes);
        }
        self.boundary_edges = edges;
        self.node_sets = sets;
    }

    fn element_at_offset(&self, i: usize, j: usize, di: isize, dj: isize) -> Option<usize> {
        let a = i as isize + di;
        let b = j as isize + dj;
        if a < 0 || b < 0 {
            return None;
        }
        self.element_at(a as usize, b as usize)
    }

    /// Element occupying grid cell `(i, j)`, if that cell is part of the mesh.
    pub fn element_at(&self, i: usize, j: usize) -> Option<usize> {
        if i >= self.nx || j >= self.ny {
            return None;
        }
        self.cell_to_element[j * self.nx + i]
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    /// Element edge lengths `(Δx, Δy)`.
    pub fn element_size(&self) -> (f64, f64) {
        (self.dx, self.dy)
    }

    /// Bounding box lengths `(lx, ly)`.
    pub fn extent(&self) -> (f64, f64) {
        (self.nx as f64 * self.dx, self.ny as f64 * self.dy)
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[usize; 4]] {
        &self.elements
    }

    /// Grid cell `(i, j)` of element `e`.
    pub fn cell(&self, e: usize) -> (usize, usize) {
        self.cells[e]
    }

    pub fn element_area(&self) -> f64 {
        self.dx * self.dy
    }

    /// Elements sharing node `n`, in increasing order.
    pub fn node_elements(&self, n: usize) -> &[usize] {
        &self.node_elements[self.node_elements_offsets[n]..self.node_elements_offsets[n + 1]]
    }

    pub fn boundary_edges(&self) -> &BTreeMap<String, Vec<BoundaryEdge>> {
        &self.boundary_edges
    }

    pub fn node_sets(&self) -> &BTreeMap<String, Vec<usize>> {
        &self.node_sets
    }

    pub fn boundary(&self, tag: &str) -> Result<&[BoundaryEdge]> {
        self.boundary_edges
            .get(tag)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::invalid(format!("unknown boundary tag `{tag}`")))
    }

    pub fn node_set(&self, tag: &str) -> Result<&[usize]> {
        self.node_sets
            .get(tag)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::invalid(format!("unknown boundary tag `{tag}`")))
    }

    /// Global node indices of a boundary edge, ordered counterclockwise with
    /// respect to the owning element.
    pub fn edge_nodes(&self, edge: BoundaryEdge) -> [usize; 2] {
        let conn = self.elements[edge.element];
        let k = edge.local_edge as usize;
        [conn[k], conn[(k + 1) % 4]]
    }

    /// Nodes of the boundary `tag` together with the nodes of the first
    /// `layers` elements behind each of its edges, sorted.
    pub fn boundary_layer_nodes(&self, tag: &str, layers: usize) -> Result<Vec<usize>> {
        let mut out: Vec<usize> = self.node_set(tag)?.to_vec();
        for &edge in self.boundary(tag)? {
            let (i, j) = self.cell(edge.element);
            let (di, dj): (isize, isize) = match edge.local_edge {
                0 => (0, 1),
                1 => (-1, 0),
                2 => (0, -1),
                _ => (1, 0),
            };
            for k in 0..layers as isize {
                let (a, b) = (i as isize + k * di, j as isize + k * dj);
                if a < 0 || b < 0 {
                    break;
                }
                match self.element_at(a as usize, b as usize) {
                    Some(e) => out.extend_from_slice(&self.elements[e]),
                    None => break,
                }
            }
        }
        out.sort_unstable();
        out.dedup();
        Ok(out)
    }

    pub fn edge_length(&self, edge: BoundaryEdge) -> f64 {
        let [a, b] = self.edge_nodes(edge);
        let (pa, pb) = (self.nodes[a], self.nodes[b]);
        (pb[0] - pa[0]).hypot(pb[1] - pa[1])
    }

    fn check_element(&self, e: usize) -> Result<()> {
        if e < self.elements.len() {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "element index {e} out of range (mesh has {})",
                self.elements.len()
            )))
        }
    }

    /// Arithmetic mean of the element's corner coordinates.
    pub fn element_centroid(&self, e: usize) -> Result<[f64; 2]> {
        self.check_element(e)?;
        Ok(self.centroid(e))
    }

    pub(crate) fn centroid(&self, e: usize) -> [f64; 2] {
        let conn = self.elements[e];
        let mut c = [0.0; 2];
        for &n in &conn {
            c[0] += self.nodes[n][0];
            c[1] += self.nodes[n][1];
        }
        [0.25 * c[0], 0.25 * c[1]]
    }

    pub fn centroids(&self) -> Vec<[f64; 2]> {
        (0..self.elements.len()).map(|e| self.centroid(e)).collect()
    }

    /// Shape values and physical gradients at reference point `local` of
    /// element `e`.
    pub fn shape_eval(&self, e: usize, local: [f64; 2]) -> Result<ShapeEval> {
        self.check_element(e)?;
        let [xi, eta] = local;
        const TOL: f64 = 1e-12;
        if !(xi.abs() <= 1.0 + TOL && eta.abs() <= 1.0 + TOL) {
            return Err(Error::invalid(format!(
                "local coordinates ({xi}, {eta}) outside the reference square"
            )));
        }
        Ok(self.shape_eval_unchecked(e, local))
    }

    pub(crate) fn shape_eval_unchecked(&self, e: usize, local: [f64; 2]) -> ShapeEval {
        let [xi, eta] = local;
        let conn = self.elements[e];
        let mut values = [0.0; 4];
        let mut dref = [[0.0; 2]; 4];
        for (a, c) in CORNERS.iter().enumerate() {
            values[a] = 0.25 * (1.0 + c[0] * xi) * (1.0 + c[1] * eta);
            dref[a] = [
                0.25 * c[0] * (1.0 + c[1] * eta),
                0.25 * c[1] * (1.0 + c[0] * xi),
            ];
        }
        // J = d(x, y)/d(xi, eta)
        let mut jac = [[0.0; 2]; 2];
        for a in 0..4 {
            let p = self.nodes[conn[a]];
            for r in 0..2 {
                jac[r][0] += dref[a][0] * p[r];
                jac[r][1] += dref[a][1] * p[r];
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv = [
            [jac[1][1] / det, -jac[0][1] / det],
            [-jac[1][0] / det, jac[0][0] / det],
        ];
        let mut gradients = [[0.0; 2]; 4];
        for a in 0..4 {
            // dN/dx_r = dN/dxi_s * dxi_s/dx_r
            gradients[a] = [
                dref[a][0] * inv[0][0] + dref[a][1] * inv[1][0],
                dref[a][0] * inv[0][1] + dref[a][1] * inv[1][1],
            ];
        }
        ShapeEval {
            values,
            gradients,
            det_jacobian: det,
        }
    }

    /// Element containing `point` and the point's reference coordinates.
    /// Points on shared edges resolve to the cell above and to the right when
    /// it exists.
    pub fn locate(&self, point: [f64; 2]) -> Result<(usize, [f64; 2])> {
        let (lx, ly) = self.extent();
        let tol = 1e-9 * (self.dx.min(self.dy));
        let [x, y] = point;
        if !(x >= -tol && x <= lx + tol && y >= -tol && y <= ly + tol) {
            return Err(Error::invalid(format!(
                "point ({x}, {y}) lies outside the domain"
            )));
        }
        let fi = (x / self.dx).clamp(0.0, self.nx as f64);
        let fj = (y / self.dy).clamp(0.0, self.ny as f64);
        let ci = (fi.floor() as usize).min(self.nx - 1);
        let cj = (fj.floor() as usize).min(self.ny - 1);
        // A point on a grid line may belong to a neighbouring cell when the
        // natural one is masked out.
        let mut candidates = vec![(ci, cj)];
        for (di, dj) in [(-1isize, 0isize), (0, -1), (-1, -1)] {
            let a = ci as isize + di;
            let b = cj as isize + dj;
            if a >= 0 && b >= 0 {
                candidates.push((a as usize, b as usize));
            }
        }
        for (i, j) in candidates {
            let Some(e) = self.element_at(i, j) else { continue };
            let x0 = i as f64 * self.dx;
            let y0 = j as f64 * self.dy;
            let xi = 2.0 * (x - x0) / self.dx - 1.0;
            let eta = 2.0 * (y - y0) / self.dy - 1.0;
            if xi.abs() <= 1.0 + 1e-9 && eta.abs() <= 1.0 + 1e-9 {
                return Ok((e, [xi.clamp(-1.0, 1.0), eta.clamp(-1.0, 1.0)]));
            }
        }
        Err(Error::invalid(format!(
            "point ({x}, {y}) lies outside the meshed region"
        )))
    }

    /// Node closest to `point` (ties resolve to the lowest index).
    pub fn nearest_node(&self, point: [f64; 2]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (n, p) in self.nodes.iter().enumerate() {
            let d = (p[0] - point[0]).powi(2) + (p[1] - point[1]).powi(2);
            if d < best.0 {
                best = (d, n);
            }
        }
        best.1
    }

    /// Interpolates a nodal scalar field at a point.
    pub fn interpolate(&self, field: &[f64], point: [f64; 2]) -> Result<f64> {
        if field.len() != self.nodes.len() {
            return Err(Error::invalid("nodal field size does not match the mesh"));
        }
        let (e, local) = self.locate(point)?;
        let shape = self.shape_eval_unchecked(e, local);
        Ok(self.elements[e]
            .iter()
            .zip(shape.values)
            .map(|(&n, w)| w * field[n])
            .sum())
    }

    /// Element average of a nodal field (bilinear value at the centroid).
    pub fn centroid_average(&self, field: &[f64]) -> Vec<f64> {
        self.elements
            .iter()
            .map(|conn| 0.25 * conn.iter().map(|&n| field[n]).sum::<f64>())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn paper_sized_meshes() {
        let m = Mesh::structured(100, 100, 1.0, 1.0).unwrap();
        assert_eq!(m.num_elements(), 10_000);
        assert_eq!(m.num_nodes(), 101 * 101);
        assert!(close(m.element_size().0, 0.01, 1e-15));

        let q = Mesh::structured(250, 100, 0.025, 0.010).unwrap();
        assert_eq!(q.num_elements(), 25_000);
        let (dx, dy) = q.element_size();
        assert!(close(dx, 1e-4, 1e-18) && close(dy, 1e-4, 1e-18));
    }

    #[test]
    fn single_element_mesh() {
        let m = Mesh::structured(1, 1, 1.0, 1.0).unwrap();
        assert_eq!(m.num_elements(), 1);
        assert_eq!(m.num_nodes(), 4);
        for tag in SIDE_TAGS {
            assert_eq!(m.boundary(tag).unwrap().len(), 1, "{tag}");
        }
        assert_eq!(m.element_centroid(0).unwrap(), [0.5, 0.5]);
        assert_eq!(m.boundary("top").unwrap()[0].local_edge, 2);
        assert_eq!(m.node_set("left").unwrap(), &[0, 2]);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(matches!(
            Mesh::structured(0, 3, 1.0, 1.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(Mesh::structured(3, 3, 0.0, 1.0).is_err());
        assert!(Mesh::structured(3, 3, 1.0, -2.0).is_err());
        let m = Mesh::structured(2, 2, 1.0, 1.0).unwrap();
        assert!(m.element_centroid(4).is_err());
        assert!(m.shape_eval(9, [0.0, 0.0]).is_err());
        assert!(m.shape_eval(0, [1.5, 0.0]).is_err());
    }

    #[test]
    fn coordinates_are_index_times_spacing() {
        let m = Mesh::structured(7, 3, 0.7, 0.3).unwrap();
        let (dx, dy) = m.element_size();
        for (n, p) in m.nodes().iter().enumerate() {
            let i = n % 8;
            let j = n / 8;
            assert_eq!(p[0], i as f64 * dx);
            assert_eq!(p[1], j as f64 * dy);
        }
    }

    #[test]
    fn centroids_of_uniform_grid() {
        let m = Mesh::structured(4, 3, 2.0, 1.5).unwrap();
        let (dx, dy) = m.element_size();
        for e in 0..m.num_elements() {
            let (i, j) = m.cell(e);
            let c = m.element_centroid(e).unwrap();
            assert!(close(c[0], (i as f64 + 0.5) * dx, 1e-14));
            assert!(close(c[1], (j as f64 + 0.5) * dy, 1e-14));
        }
    }

    #[test]
    fn shape_values_at_center_and_corner() {
        let m = Mesh::structured(3, 3, 0.3, 0.3).unwrap();
        let s = m.shape_eval(4, [0.0, 0.0]).unwrap();
        assert_eq!(s.values, [0.25; 4]);
        let h = 0.1;
        for g in s.gradients {
            assert!(close(g[0].abs(), 1.0 / (2.0 * h), 1e-12));
            assert!(close(g[1].abs(), 1.0 / (2.0 * h), 1e-12));
        }
        let c = m.shape_eval(4, [-1.0, -1.0]).unwrap();
        assert_eq!(c.values, [1.0, 0.0, 0.0, 0.0]);
        assert!(c.det_jacobian > 0.0);
    }

    #[test]
    fn jacobians_positive_and_boundary_complete() {
        let (nx, ny) = (6, 4);
        let m = Mesh::structured(nx, ny, 3.0, 1.0).unwrap();
        for e in 0..m.num_elements() {
            assert!(m.shape_eval(e, [0.3, -0.7]).unwrap().det_jacobian > 0.0);
        }
        let total: usize = m.boundary_edges().values().map(Vec::len).sum();
        assert_eq!(total, 2 * (nx + ny));
        // each boundary edge is owned by exactly one element
        let mut seen = std::collections::BTreeSet::new();
        for list in m.boundary_edges().values() {
            for e in list {
                let mut key = m.edge_nodes(*e);
                key.sort_unstable();
                assert!(seen.insert(key));
            }
        }
    }

    #[test]
    fn masked_mesh_tags_reentrant_edges() {
        // L-shape: remove the upper-right 2x2 block of a 4x4 grid
        let m = Mesh::masked(4, 4, 4.0, 4.0, |i, j| !(i >= 2 && j >= 2)).unwrap();
        assert_eq!(m.num_elements(), 12);
        assert_eq!(m.num_nodes(), 25 - 4);
        assert_eq!(m.boundary("inner").unwrap().len(), 4);
        assert_eq!(m.boundary("top").unwrap().len(), 2);
        assert_eq!(m.boundary("right").unwrap().len(), 2);
        assert!(m.element_at(3, 3).is_none());
        assert!(m.locate([3.5, 3.5]).is_err());
        // point on the re-entrant edge belongs to the element below it
        let (e, local) = m.locate([2.5, 2.0]).unwrap();
        assert_eq!(m.cell(e), (2, 1));
        assert_eq!(local, [0.0, 1.0]);
    }

    #[test]
    fn interpolation_reproduces_nodes() {
        let m = Mesh::structured(3, 2, 3.0, 2.0).unwrap();
        let field: Vec<f64> = m.nodes().iter().map(|p| 2.0 * p[0] - p[1] + 0.5).collect();
        for (n, p) in m.nodes().iter().enumerate() {
            assert!(close(m.interpolate(&field, *p).unwrap(), field[n], 1e-13));
        }
        assert!(close(m.interpolate(&field, [1.25, 0.4]).unwrap(), 2.5 - 0.4 + 0.5, 1e-13));
        assert!(m.interpolate(&field, [3.5, 0.0]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn partition_of_unity(xi in -1.0f64..=1.0, eta in -1.0f64..=1.0) {
                let m = Mesh::structured(2, 3, 1.3, 0.7).unwrap();
                let s = m.shape_eval(3, [xi, eta]).unwrap();
                let sum: f64 = s.values.iter().sum();
                prop_assert!((sum - 1.0).abs() <= 1e-12);
                let gx: f64 = s.gradients.iter().map(|g| g[0]).sum();
                let gy: f64 = s.gradients.iter().map(|g| g[1]).sum();
                prop_assert!(gx.abs() <= 1e-10 && gy.abs() <= 1e-10);
            }

            #[test]
            fn gradients_match_finite_differences(
                coeffs in proptest::array::uniform4(-5.0f64..5.0),
                xi in -0.9f64..0.9,
                eta in -0.9f64..0.9,
            ) {
                // random bilinear field a + b x + c y + d x y
                let m = Mesh::structured(3, 3, 0.9, 1.2).unwrap();
                let e = 4;
                let f = |p: [f64; 2]| coeffs[0] + coeffs[1] * p[0] + coeffs[2] * p[1] + coeffs[3] * p[0] * p[1];
                let nodal: Vec<f64> = m.elements()[e].iter().map(|&n| f(m.nodes()[n])).collect();
                let s = m.shape_eval(e, [xi, eta]).unwrap();
                let grad = [
                    (0..4).map(|a| s.gradients[a][0] * nodal[a]).sum::<f64>(),
                    (0..4).map(|a| s.gradients[a][1] * nodal[a]).sum::<f64>(),
                ];
                let (dx, dy) = m.element_size();
                let (i, j) = m.cell(e);
                let p = [(i as f64 + 0.5 * (xi + 1.0)) * dx, (j as f64 + 0.5 * (eta + 1.0)) * dy];
                let h = 1e-6;
                let fd = [
                    (f([p[0] + h, p[1]]) - f([p[0] - h, p[1]])) / (2.0 * h),
                    (f([p[0], p[1] + h]) - f([p[0], p[1] - h])) / (2.0 * h),
                ];
                for k in 0..2 {
                    let scale = fd[k].abs().max(1.0);
                    prop_assert!((grad[k] - fd[k]).abs() <= 1e-6 * scale);
                }
            }
        }
    }

    #[test]
    fn boundary_layers_walk_inwards() {
        let m = Mesh::structured(4, 3, 4.0, 3.0).unwrap();
        assert_eq!(m.boundary_layer_nodes("left", 0).unwrap(), vec![0, 5, 10, 15]);
        assert_eq!(m.boundary_layer_nodes("left", 1).unwrap(), vec![0, 1, 5, 6, 10, 11, 15, 16]);
        assert_eq!(m.boundary_layer_nodes("top", 9).unwrap().len(), 20);
        assert!(m.boundary_layer_nodes("nowhere", 1).is_err());
    }

}
