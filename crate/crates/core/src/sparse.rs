//! Compressed sparse symmetric matrices, Dirichlet elimination and the two
//! SPD solve routes (sparse Cholesky and Jacobi-preconditioned CG).
//!
//! Matrices store both triangles in compressed rows with sorted column
//! indices. Because the storage is symmetric the same arrays double as a
//! compressed-column view, which is what the Cholesky backend consumes.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::{Llt, SymbolicLlt};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Mat, Side};

use crate::error::{Error, SolverError};

/// Required relative residual `‖b − Ax‖ / ‖b‖` of every accepted solve.
pub const RESIDUAL_TOLERANCE: f64 = 1e-10;

const MAX_REFINEMENT: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix whose pattern couples every pair of indices that appear
    /// together in one of the `groups`.
    pub fn from_groups<'a>(n: usize, groups: impl IntoIterator<Item = &'a [usize]>) -> Self {
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
        for g in groups {
            for &a in g {
                rows[a].extend_from_slice(g);
            }
        }
        Self::from_rows(n, rows)
    }

    /// Zero matrix with the given (unsorted, possibly duplicated) row
    /// patterns. The caller is responsible for structural symmetry.
    pub fn from_rows(n: usize, mut rows: Vec<Vec<usize>>) -> Self {
        let mut row_ptr = Vec::with_capacity(n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for r in rows.iter_mut() {
            r.sort_unstable();
            r.dedup();
            col_idx.extend_from_slice(r);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        CsrMatrix {
            n,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    /// Position of entry `(i, j)` in the value array.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        self.col_idx[start..self.row_ptr[i + 1]]
            .binary_search(&j)
            .ok()
            .map(|p| start + p)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |p| self.values[p])
    }

    /// Adds `v` to entry `(i, j)`, which must be in the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let p = self
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) is outside the sparsity pattern"));
        self.values[p] += v;
    }

    /// Scatters a dense square block indexed by `dofs`.
    pub fn add_block<const N: usize>(&mut self, dofs: &[usize; N], block: &[[f64; N]; N]) {
        for a in 0..N {
            for b in 0..N {
                if block[a][b] != 0.0 {
                    self.add(dofs[a], dofs[b], block[a][b]);
                }
            }
        }
    }

    pub fn clear(&mut self) {
        self.values.fill(0.0);
    }

    pub fn same_pattern(&self, other: &CsrMatrix) -> bool {
        self.n == other.n && self.row_ptr == other.row_ptr && self.col_idx == other.col_idx
    }

    /// `self ← a·self + b·other` for matrices sharing a pattern.
    pub fn axpby(&mut self, a: f64, b: f64, other: &CsrMatrix) {
        assert!(self.same_pattern(other), "axpby needs identical patterns");
        for (x, y) in self.values.iter_mut().zip(&other.values) {
            *x = a * *x + b * y;
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, v)| v * x[j]).sum();
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).1.iter().sum()).collect()
    }

    pub fn frobenius(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// `‖A − Aᵀ‖_F / ‖A‖_F` (0 for the zero matrix).
    pub fn symmetry_error(&self) -> f64 {
        let norm = self.frobenius();
        if norm == 0.0 {
            return 0.0;
        }
        let mut diff = 0.0;
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let t = self.get(j, i);
                diff += (v - t) * (v - t);
            }
        }
        diff.sqrt() / norm
    }

    fn col_view(&self) -> SymbolicSparseColMatRef<'_, usize> {
        SymbolicSparseColMatRef::new_checked(self.n, self.n, &self.row_ptr, None, &self.col_idx)
    }
}

/// Split of the unknowns into free and prescribed sets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    free: Vec<usize>,
    fixed: Vec<usize>,
    /// Position of each global index inside `free` (or `usize::MAX`).
    free_pos: Vec<usize>,
}

impl Partition {
    pub fn new(n: usize, fixed: &[usize]) -> Self {
        let mut is_fixed = vec![false; n];
        for &f in fixed {
            is_fixed[f] = true;
        }
        let mut free = Vec::new();
        let mut fixed = Vec::new();
        let mut free_pos = vec![usize::MAX; n];
        for (i, &f) in is_fixed.iter().enumerate() {
            if f {
                fixed.push(i);
            } else {
                free_pos[i] = free.len();
                free.push(i);
            }
        }
        Partition {
            free,
            fixed,
            free_pos,
        }
    }

    pub fn free(&self) -> &[usize] {
        &self.free
    }

    pub fn fixed(&self) -> &[usize] {
        &self.fixed
    }

    pub fn dim(&self) -> usize {
        self.free_pos.len()
    }

    /// Free-free block of `a`.
    pub fn reduce(&self, a: &CsrMatrix) -> CsrMatrix {
        let mut row_ptr = Vec::with_capacity(self.free.len() + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        for &g in &self.free {
            let (cols, vals) = a.row(g);
            for (&j, &v) in cols.iter().zip(vals) {
                let p = self.free_pos[j];
                if p != usize::MAX {
                    col_idx.push(p);
                    values.push(v);
                }
            }
            row_ptr.push(col_idx.len());
        }
        CsrMatrix {
            n: self.free.len(),
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Right-hand side of the reduced system: `b_f − A_fc x_c`.
    pub fn reduce_rhs(&self, a: &CsrMatrix, b: &[f64], x: &[f64]) -> Vec<f64> {
        self.free
            .iter()
            .map(|&g| {
                let (cols, vals) = a.row(g);
                let coupling: f64 = cols
                    .iter()
                    .zip(vals)
                    .filter(|(&j, _)| self.free_pos[j] == usize::MAX)
                    .map(|(&j, v)| v * x[j])
                    .sum();
                b[g] - coupling
            })
            .collect()
    }

    /// Writes the reduced solution back into the full vector.
    pub fn scatter(&self, reduced: &[f64], full: &mut [f64]) {
        for (&g, &v) in self.free.iter().zip(reduced) {
            full[g] = v;
        }
    }
}

/// Prescribed values of a set of unknowns, sorted by index.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Prescribed {
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Prescribed {
    /// Merges `(index, value)` pairs. An index listed twice must carry the same
    /// value both times.
    pub fn new(mut entries: Vec<(usize, f64)>) -> crate::error::Result<Self> {
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let mut d = Prescribed::default();
        for (n, v) in entries {
            if d.indices.last() == Some(&n) {
                let prev = *d.values.last().unwrap();
                if prev != v {
                    return Err(Error::config(format!(
                        "unknown {n} receives two different prescribed values ({prev} and {v})"
                    )));
                }
                continue;
            }
            d.indices.push(n);
            d.values.push(v);
        }
        Ok(d)
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn apply(&self, field: &mut [f64]) {
        for (&n, &v) in self.indices.iter().zip(&self.values) {
            field[n] = v;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    #[default]
    Direct,
    Cg,
}

/// SPD solver bound to one matrix. The direct route keeps the symbolic
/// factorization so that refactoring a matrix with the same pattern only
/// repeats the numeric phase.
#[derive(Debug, Clone)]
pub struct SpdSolver {
    kind: SolverKind,
    matrix: Option<CsrMatrix>,
    symbolic: Option<(Vec<usize>, Vec<usize>, SymbolicLlt<usize>)>,
    factor: Option<Llt<usize, f64>>,
    diag_inv: Vec<f64>,
}

impl SpdSolver {
    pub fn new(kind: SolverKind) -> Self {
        faer::set_global_parallelism(faer::Par::Seq);
        SpdSolver {
            kind,
            matrix: None,
            symbolic: None,
            factor: None,
            diag_inv: Vec::new(),
        }
    }

    pub fn kind(&self) -> SolverKind {
        self.kind
    }

    pub fn matrix(&self) -> Option<&CsrMatrix> {
        self.matrix.as_ref()
    }

    /// Prepares the solver for `a`. Fails when `a` is not positive definite.
    pub fn factorize(&mut self, a: CsrMatrix) -> Result<(), SolverError> {
        let diag = a.diagonal();
        if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
            self.matrix = None;
            return Err(SolverError::Singular(format!(
                "diagonal entry {i} is {} (unknown has no stiffness)",
                diag[i]
            )));
        }
        self.diag_inv = diag.iter().map(|d| 1.0 / d).collect();
        if self.kind == SolverKind::Direct && a.dim() > 0 {
            let reuse = matches!(&self.symbolic, Some((rp, ci, _)) if *rp == a.row_ptr && *ci == a.col_idx);
            if !reuse {
                let sym = SymbolicLlt::try_new(a.col_view(), Side::Lower)
                    .map_err(|e| SolverError::Backend(format!("{e:?}")))?;
                self.symbolic = Some((a.row_ptr.clone(), a.col_idx.clone(), sym));
            }
            let sym = self.symbolic.as_ref().unwrap().2.clone();
            let view = SparseColMatRef::new(a.col_view(), &a.values);
            match Llt::try_new_with_symbolic(sym, view, Side::Lower) {
                Ok(f) => self.factor = Some(f),
                Err(faer::sparse::linalg::LltError::Numeric(_)) => {
                    self.factor = None;
                    self.matrix = None;
                    return Err(SolverError::NotPositiveDefinite);
                }
                Err(e) => return Err(SolverError::Backend(format!("{e:?}"))),
            }
        }
        self.matrix = Some(a);
        Ok(())
    }

    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>, SolverError> {
        let a = self
            .matrix
            .as_ref()
            .ok_or_else(|| SolverError::Singular("solve called before factorize".into()))?;
        assert_eq!(b.len(), a.dim(), "right-hand side has the wrong size");
        let bnorm = norm(b);
        if bnorm == 0.0 {
            return Ok(vec![0.0; b.len()]);
        }
        match self.kind {
            SolverKind::Direct => self.solve_direct(a, b, bnorm),
            SolverKind::Cg => pcg(a, b, &self.diag_inv, RESIDUAL_TOLERANCE, 20 * a.dim() + 100),
        }
    }

    fn solve_direct(&self, a: &CsrMatrix, b: &[f64], bnorm: f64) -> Result<Vec<f64>, SolverError> {
        let f = self.factor.as_ref().expect("direct route has a factor");
        let apply = |rhs: &[f64]| {
            let mut m = Mat::<f64>::from_fn(rhs.len(), 1, |i, _| rhs[i]);
            f.solve_in_place(m.as_mut());
            (0..rhs.len()).map(|i| m[(i, 0)]).collect::<Vec<f64>>()
        };
        let mut x = apply(b);
        let mut r = residual(a, &x, b);
        let mut rel = norm(&r) / bnorm;
        for _ in 0..MAX_REFINEMENT {
            if rel <= RESIDUAL_TOLERANCE {
                break;
            }
            let dx = apply(&r);
            for (xi, d) in x.iter_mut().zip(&dx) {
                *xi += d;
            }
            r = residual(a, &x, b);
            rel = norm(&r) / bnorm;
        }
        if rel <= RESIDUAL_TOLERANCE {
            Ok(x)
        } else {
            Err(SolverError::Inaccurate {
                residual: rel,
                tolerance: RESIDUAL_TOLERANCE,
            })
        }
    }
}

fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> Vec<f64> {
    let ax = a.matvec(x);
    b.iter().zip(&ax).map(|(bi, ai)| bi - ai).collect()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients to relative residual `tol`.
pub fn pcg(
    a: &CsrMatrix,
    b: &[f64],
    diag_inv: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, SolverError> {
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(diag_inv).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        a.matvec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(SolverError::NotPositiveDefinite);
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if norm(&r) / bnorm <= tol {
            // confirm with a true residual to guard against drift
            let true_rel = norm(&residual(a, &x, b)) / bnorm;
            if true_rel <= tol {
                return Ok(x);
            }
            r = residual(a, &x, b);
        }
        for i in 0..n {
            z[i] = r[i] * diag_inv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        if it + 1 == max_iter {
            break;
        }
    }
    Err(SolverError::NotConverged {
        iterations: max_iter,
        residual: norm(&residual(a, &x, b)) / bnorm,
    })
}
