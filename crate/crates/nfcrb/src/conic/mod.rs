//! Solver-agnostic conic programs over complex matrix variables.
//!
//! The vocabulary is exactly what the design subproblems need: Hermitian
//! (optionally PSD) matrix variables, scalar variables, affine equalities,
//! linear matrix inequalities, second-order-cone epigraphs and a linear
//! objective. Complex variables are embedded into real symmetric form for
//! the interior-point backend; Hermitian structure is enforced by the
//! parametrization itself (only the upper triangle carries parameters).

mod clarabel_backend;
pub mod expr;

pub use expr::{LinExpr, MatExpr};

use crate::error::{Error, Result};
use crate::linalg;
use crate::{C64, CMat};

/// Kind of a declared variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarKind {
    /// n×n complex Hermitian, constrained PSD.
    HermitianPsd(usize),
    /// n×n complex Hermitian, unconstrained.
    HermitianFree(usize),
    /// n×n real symmetric, constrained PSD.
    SymmetricPsd(usize),
    /// n×n real symmetric, unconstrained.
    SymmetricFree(usize),
    /// Scalar ≥ 0.
    Nonneg,
    /// Free scalar.
    Free,
}

impl VarKind {
    fn num_params(self) -> usize {
        match self {
            VarKind::HermitianPsd(n) | VarKind::HermitianFree(n) => n * n,
            VarKind::SymmetricPsd(n) | VarKind::SymmetricFree(n) => n * (n + 1) / 2,
            VarKind::Nonneg | VarKind::Free => 1,
        }
    }

    fn dim(self) -> usize {
        match self {
            VarKind::HermitianPsd(n) | VarKind::HermitianFree(n) => n,
            VarKind::SymmetricPsd(n) | VarKind::SymmetricFree(n) => n,
            VarKind::Nonneg | VarKind::Free => 1,
        }
    }
}

/// Handle to a declared variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarId(usize);

#[derive(Debug, Clone)]
pub(crate) struct VarInfo {
    pub(crate) kind: VarKind,
    offset: usize,
}

/// Interior-point stopping and feasibility tolerances.
#[derive(Debug, Clone)]
pub struct SolverTolerances {
    pub eq_feas: f64,
    pub psd_feas: f64,
    pub gap: f64,
    pub max_iter: u32,
}

impl Default for SolverTolerances {
    fn default() -> Self {
        SolverTolerances { eq_feas: 1e-8, psd_feas: 1e-8, gap: 1e-8, max_iter: 200 }
    }
}

/// Termination classification of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    NearOptimal,
    Infeasible,
    NumericalFailure,
}

/// Values and diagnostics returned by [`ConicProgram::solve`].
#[derive(Debug, Clone)]
pub struct ConicSolution {
    pub status: SolveStatus,
    pub objective: f64,
    values: Vec<CMat>,
    pub iterations: u32,
    /// Max equality violation over all affine equalities.
    pub eq_residual: f64,
    /// Most negative eigenvalue over PSD variables and LMIs (0 when clean).
    pub psd_residual: f64,
    /// |primal − dual| objective gap reported by the backend.
    pub duality_gap: f64,
}

impl ConicSolution {
    /// Recovered value of a matrix variable (1×1 for scalars).
    pub fn matrix(&self, var: VarId) -> &CMat {
        &self.values[var.0]
    }

    pub fn scalar(&self, var: VarId) -> f64 {
        self.values[var.0][(0, 0)].re
    }
}

/// A conic program in construction order: declare variables, build affine
/// expressions over their entries, add constraints, then [`solve`](Self::solve).
#[derive(Debug, Clone, Default)]
pub struct ConicProgram {
    vars: Vec<VarInfo>,
    num_params: usize,
    eqs: Vec<LinExpr>,
    nonnegs: Vec<LinExpr>,
    lmis: Vec<MatExpr>,
    socs: Vec<(Vec<LinExpr>, LinExpr)>,
    objective: LinExpr,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, kind: VarKind) -> VarId {
        let id = VarId(self.vars.len());
        self.vars.push(VarInfo { kind, offset: self.num_params });
        self.num_params += kind.num_params();
        id
    }

    fn info(&self, var: VarId) -> &VarInfo {
        &self.vars[var.0]
    }

    /// Expression for a scalar variable.
    pub fn scalar_expr(&self, var: VarId) -> LinExpr {
        let info = self.info(var);
        assert!(matches!(info.kind, VarKind::Nonneg | VarKind::Free), "not a scalar variable");
        LinExpr::term(info.offset, C64::new(1.0, 0.0))
    }

    /// Expression for entry (i, j) of a matrix variable.
    pub fn entry_expr(&self, var: VarId, i: usize, j: usize) -> LinExpr {
        let info = self.info(var);
        let n = info.kind.dim();
        assert!(i < n && j < n, "entry ({i},{j}) outside {n}x{n}");
        match info.kind {
            VarKind::HermitianPsd(_) | VarKind::HermitianFree(_) => {
                let (r, c, conjugate) = if i <= j { (i, j, false) } else { (j, i, true) };
                // params for column c: offset + c*c gives start of column (c
                // diagonal+off pairs before it): column j holds j off-diagonal
                // entries (2 params each) plus one diagonal (1 param).
                let col_start = info.offset + c * c;
                if r == c {
                    LinExpr::term(col_start + 2 * r, C64::new(1.0, 0.0))
                } else {
                    let re_idx = col_start + 2 * r;
                    let im_idx = re_idx + 1;
                    let mut e = LinExpr::term(re_idx, C64::new(1.0, 0.0));
                    e.add_term(im_idx, if conjugate { C64::new(0.0, -1.0) } else { C64::new(0.0, 1.0) });
                    e
                }
            }
            VarKind::SymmetricPsd(_) | VarKind::SymmetricFree(_) => {
                let (r, c) = if i <= j { (i, j) } else { (j, i) };
                let idx = info.offset + c * (c + 1) / 2 + r;
                LinExpr::term(idx, C64::new(1.0, 0.0))
            }
            VarKind::Nonneg | VarKind::Free => {
                assert_eq!((i, j), (0, 0));
                self.scalar_expr(var)
            }
        }
    }

    /// Full matrix expression of a variable.
    pub fn mat_expr(&self, var: VarId) -> MatExpr {
        let n = self.info(var).kind.dim();
        let mut m = MatExpr::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                m.set(i, j, self.entry_expr(var, i, j));
            }
        }
        m
    }

    /// Adds `expr == 0` (complex equality, two real rows).
    pub fn add_eq(&mut self, expr: LinExpr) {
        let mut e = expr;
        e.compress();
        self.eqs.push(e);
    }

    /// Adds `Re(expr) >= 0`.
    pub fn add_nonneg(&mut self, expr: LinExpr) {
        let mut e = expr.re();
        e.compress();
        self.nonnegs.push(e);
    }

    /// Adds a Hermitian-valued affine matrix expression required PSD.
    pub fn add_lmi(&mut self, m: MatExpr) {
        assert_eq!(m.nrows, m.ncols, "LMI must be square");
        self.lmis.push(m);
    }

    /// Adds `‖v‖ ≤ t` over complex affine entries.
    pub fn add_soc(&mut self, v: Vec<LinExpr>, t: LinExpr) {
        self.socs.push((v, t));
    }

    /// Adds a fresh scalar `s ≥ ‖v‖` and returns it.
    pub fn add_norm_epigraph(&mut self, v: Vec<LinExpr>) -> VarId {
        let s = self.add_var(VarKind::Nonneg);
        let se = self.scalar_expr(s);
        self.add_soc(v, se);
        s
    }

    /// Adds a fresh scalar `t ≥ x²` (rotated-cone form as a 3-dim SOC) and
    /// returns it.
    pub fn add_square_epigraph(&mut self, x: LinExpr) -> VarId {
        let t = self.add_var(VarKind::Nonneg);
        let te = self.scalar_expr(t);
        // ‖(2x, t−1)‖ ≤ t+1  ⇔  x² ≤ t
        self.add_soc(
            vec![x.scale(C64::new(2.0, 0.0)), te.add_constant(C64::new(-1.0, 0.0))],
            te.add_constant(C64::new(1.0, 0.0)),
        );
        t
    }

    /// Schur-complement epigraph of Tr(U⁻¹): declares W, adds the LMI
    /// [[W, I], [I, U]] ⪰ 0 and the objective contribution Tr(W).
    pub fn trace_inverse_epigraph(&mut self, u: VarId) -> VarId {
        let n = self.info(u).kind.dim();
        let w = self.add_var(VarKind::SymmetricFree(n));
        let mut lmi = MatExpr::zeros(2 * n, 2 * n);
        for j in 0..n {
            for i in 0..n {
                lmi.set(i, j, self.entry_expr(w, i, j));
                lmi.set(n + i, n + j, self.entry_expr(u, i, j));
            }
            lmi.set(j, n + j, LinExpr::real_constant(1.0));
            lmi.set(n + j, j, LinExpr::real_constant(1.0));
        }
        self.add_lmi(lmi);
        let we = self.mat_expr(w).trace();
        self.add_objective(we);
        w
    }

    /// Adds a term to the (real, minimized) objective.
    pub fn add_objective(&mut self, expr: LinExpr) {
        self.objective = self.objective.add(&expr);
        self.objective.compress();
    }

    pub fn num_params(&self) -> usize {
        self.num_params
    }

    fn validate(&self) -> Result<()> {
        let check = |e: &LinExpr| -> Result<()> {
            if let Some(i) = e.max_param_index() {
                if i >= self.num_params {
                    return Err(Error::MalformedProgram(format!(
                        "expression references parameter {i} of {}",
                        self.num_params
                    )));
                }
            }
            Ok(())
        };
        for e in self.eqs.iter().chain(self.nonnegs.iter()).chain(std::iter::once(&self.objective)) {
            check(e)?;
        }
        for m in &self.lmis {
            for e in m.vec_entries().iter() {
                check(e)?;
            }
        }
        for (v, t) in &self.socs {
            for e in v.iter().chain(std::iter::once(t)) {
                check(e)?;
            }
        }
        if self.objective.imag_magnitude() > 1e-9 {
            return Err(Error::MalformedProgram("objective has an imaginary component".into()));
        }
        Ok(())
    }

    /// Solves with the interior-point backend.
    pub fn solve(&self, tol: &SolverTolerances) -> Result<ConicSolution> {
        self.validate()?;
        let raw = clarabel_backend::solve(self, tol)?;
        Ok(self.extract(raw, tol))
    }

    fn extract(&self, raw: clarabel_backend::RawSolution, tol: &SolverTolerances) -> ConicSolution {
        let x = &raw.x;
        let values: Vec<CMat> = (0..self.vars.len())
            .map(|v| {
                let n = self.vars[v].kind.dim();
                CMat::from_fn(n, n, |i, j| self.entry_expr(VarId(v), i, j).eval(x))
            })
            .collect();

        let mut eq_residual = 0.0f64;
        for e in &self.eqs {
            eq_residual = eq_residual.max(e.eval(x).norm());
        }
        let mut psd_residual = 0.0f64;
        for (idx, info) in self.vars.iter().enumerate() {
            if matches!(info.kind, VarKind::HermitianPsd(_) | VarKind::SymmetricPsd(_)) {
                psd_residual = psd_residual.min(linalg::hermitian_min_eig(&values[idx]));
            }
            if info.kind == VarKind::Nonneg {
                psd_residual = psd_residual.min(values[idx][(0, 0)].re);
            }
        }
        for m in &self.lmis {
            psd_residual = psd_residual.min(linalg::hermitian_min_eig(&m.eval(x)));
        }

        let mut status = raw.status;
        if status == SolveStatus::Optimal
            && (eq_residual > 10.0 * tol.eq_feas || psd_residual < -10.0 * tol.psd_feas)
        {
            status = SolveStatus::NearOptimal;
        }

        ConicSolution {
            status,
            objective: self.objective.eval(x).re,
            values,
            iterations: raw.iterations,
            eq_residual,
            psd_residual: psd_residual.min(0.0).abs(),
            duality_gap: raw.gap,
        }
    }

    pub(crate) fn vars(&self) -> &[VarInfo] {
        &self.vars
    }

    pub(crate) fn eqs(&self) -> &[LinExpr] {
        &self.eqs
    }

    pub(crate) fn nonnegs(&self) -> &[LinExpr] {
        &self.nonnegs
    }

    pub(crate) fn lmis(&self) -> &[MatExpr] {
        &self.lmis
    }

    pub(crate) fn socs(&self) -> &[(Vec<LinExpr>, LinExpr)] {
        &self.socs
    }

    pub(crate) fn objective_expr(&self) -> &LinExpr {
        &self.objective
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tol() -> SolverTolerances {
        SolverTolerances::default()
    }

    #[test]
    fn min_trace_of_pinned_1x1_psd() {
        let mut p = ConicProgram::new();
        let x = p.add_var(VarKind::HermitianPsd(1));
        p.add_eq(x_entry(&p, x, 0, 0).add_constant(C64::new(-1.0, 0.0)));
        p.add_objective(p.mat_expr(x).trace());
        let sol = p.solve(&tol()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_relative_eq!(sol.objective, 1.0, epsilon = 1e-7);
    }

    fn x_entry(p: &ConicProgram, v: VarId, i: usize, j: usize) -> LinExpr {
        p.entry_expr(v, i, j)
    }

    #[test]
    fn euclidean_norm_epigraph() {
        let mut p = ConicProgram::new();
        let x = p.add_var(VarKind::Free);
        let y = p.add_var(VarKind::Free);
        p.add_eq(p.scalar_expr(x).add_constant(C64::new(-3.0, 0.0)));
        p.add_eq(p.scalar_expr(y).add_constant(C64::new(-4.0, 0.0)));
        let t = p.add_norm_epigraph(vec![p.scalar_expr(x), p.scalar_expr(y)]);
        p.add_objective(p.scalar_expr(t));
        let sol = p.solve(&tol()).unwrap();
        assert_eq!(sol.status, SolveStatus::Optimal);
        assert_relative_eq!(sol.objective, 5.0, epsilon = 1e-6);
    }

    #[test]
    fn square_epigraph() {
        let mut p = ConicProgram::new();
        let x = p.add_var(VarKind::Free);
        p.add_eq(p.scalar_expr(x).add_constant(C64::new(-3.0, 0.0)));
        let t = p.add_square_epigraph(p.scalar_expr(x));
        p.add_objective(p.scalar_expr(t));
        let sol = p.solve(&tol()).unwrap();
        assert_relative_eq!(sol.objective, 9.0, epsilon = 1e-5);
    }

    // The scaled-triangle lowering is correct iff a pinned off-diagonal entry
    // forces the PSD completion X22 = |X12|²/X11.
    #[test]
    fn psd_completion_real() {
        let mut p = ConicProgram::new();
        let x = p.add_var(VarKind::SymmetricPsd(2));
        p.add_eq(x_entry(&p, x, 0, 0).add_constant(C64::new(-1.0, 0.0)));
        p.add_eq(x_entry(&p, x, 0, 1).add_constant(C64::new(-0.4, 0.0)));
        p.add_objective(p.mat_expr(x).trace());
        let sol = p.solve(&tol()).unwrap();
        assert_relative_eq!(sol.objective, 1.16, epsilon = 1e-5);
    }

    #[test]
    fn psd_completion_complex() {
        let mut p = ConicProgram::new();
        let x = p.add_var(VarKind::HermitianPsd(2));
        p.add_eq(x_entry(&p, x, 0, 0).add_constant(C64::new(-1.0, 0.0)));
        p.add_eq(x_entry(&p, x, 0, 1).add_constant(C64::new(-0.3, -0.4)));
        p.add_objective(p.mat_expr(x).trace());
        let sol = p.solve(&tol()).unwrap();
        assert_relative_eq!(sol.objective, 1.25, epsilon = 1e-5);
        let xm = sol.matrix(x);
        assert_relative_eq!(xm[(0, 1)].re, 0.3, epsilon = 1e-5);
        assert_relative_eq!(xm[(0, 1)].im, 0.4, epsilon = 1e-5);
        assert_relative_eq!((xm[(1, 0)] - xm[(0, 1)].conj()).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn trace_inverse_epigraph_fixed_u() {
        for (diag, want) in [([1.0, 1.0], 2.0), ([2.0, 4.0], 0.75)] {
            let mut p = ConicProgram::new();
            let u = p.add_var(VarKind::SymmetricPsd(2));
            p.add_eq(p.entry_expr(u, 0, 0).add_constant(C64::new(-diag[0], 0.0)));
            p.add_eq(p.entry_expr(u, 1, 1).add_constant(C64::new(-diag[1], 0.0)));
            p.add_eq(p.entry_expr(u, 0, 1));
            p.trace_inverse_epigraph(u);
            let sol = p.solve(&tol()).unwrap();
            assert_relative_eq!(sol.objective, want, epsilon = 1e-5);
        }
    }

    #[test]
    fn trace_inverse_epigraph_random_pd() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..5 {
            let a = nalgebra::Matrix2::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let upd = a * a.transpose() + nalgebra::Matrix2::identity() * 0.5;
            let mut p = ConicProgram::new();
            let u = p.add_var(VarKind::SymmetricPsd(2));
            for j in 0..2 {
                for i in 0..=j {
                    p.add_eq(p.entry_expr(u, i, j).add_constant(C64::new(-upd[(i, j)], 0.0)));
                }
            }
            p.trace_inverse_epigraph(u);
            let sol = p.solve(&tol()).unwrap();
            let want = upd.try_inverse().unwrap().trace();
            assert_relative_eq!(sol.objective, want, epsilon = 1e-6 * (1.0 + want));
        }
    }

    #[test]
    fn infeasible_is_reported() {
        let mut p = ConicProgram::new();
        let x = p.add_var(VarKind::Nonneg);
        p.add_eq(p.scalar_expr(x).add_constant(C64::new(1.0, 0.0))); // x = -1
        p.add_objective(p.scalar_expr(x));
        let sol = p.solve(&tol()).unwrap();
        assert_eq!(sol.status, SolveStatus::Infeasible);
    }

    #[test]
    fn hermitian_parametrization_round_trip() {
        let mut p = ConicProgram::new();
        let x = p.add_var(VarKind::HermitianFree(3));
        let mut params = vec![0.0; p.num_params()];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for v in params.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let m = p.mat_expr(x).eval(&params);
        assert!(crate::linalg::hermitian_defect(&m) < 1e-12);
        // every parameter is reachable from the entries
        for j in 0..3 {
            for i in 0..=j {
                let e = p.entry_expr(x, i, j);
                assert_relative_eq!((e.eval(&params) - m[(i, j)]).norm(), 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn malformed_objective_rejected() {
        let mut p = ConicProgram::new();
        let x = p.add_var(VarKind::HermitianFree(2));
        p.add_objective(p.entry_expr(x, 0, 1)); // complex-valued
        assert!(matches!(p.solve(&tol()), Err(Error::MalformedProgram(_))));
    }
}
