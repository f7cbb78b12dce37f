//! Lowering of [`ConicProgram`](super::ConicProgram) onto the Clarabel
//! interior-point solver.
//!
//! Real embedding: a complex Hermitian-valued LMI `E(x) ⪰ 0` becomes the
//! real symmetric block form `[[Re E, −Im E], [Im E, Re E]] ⪰ 0`. Rows use
//! Clarabel's scaled-triangle convention (upper triangle, column-major,
//! off-diagonals × √2).

use super::expr::{LinExpr, MatExpr};
use super::{ConicProgram, SolveStatus, SolverTolerances, VarKind};
use crate::error::{Error, Result};

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

pub(crate) struct RawSolution {
    pub x: Vec<f64>,
    pub status: SolveStatus,
    pub iterations: u32,
    pub gap: f64,
}

/// Row accumulator in `A x + s = b` form with `s = b − A x` the cone slack.
struct RowBuilder {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
}

impl RowBuilder {
    fn new() -> Self {
        RowBuilder { rows: Vec::new(), cols: Vec::new(), vals: Vec::new(), b: Vec::new() }
    }

    /// Pushes a row enforcing `slack = scale · Re(expr)`.
    fn push_real(&mut self, expr: &LinExpr, scale: f64) {
        let row = self.b.len();
        self.b.push(scale * expr.constant.re);
        for &(i, c) in &expr.terms {
            if c.re != 0.0 {
                self.rows.push(row);
                self.cols.push(i);
                self.vals.push(-scale * c.re);
            }
        }
    }

    /// Pushes a row enforcing `slack = scale · Im(expr)`.
    fn push_imag(&mut self, expr: &LinExpr, scale: f64) {
        let row = self.b.len();
        self.b.push(scale * expr.constant.im);
        for &(i, c) in &expr.terms {
            if c.im != 0.0 {
                self.rows.push(row);
                self.cols.push(i);
                self.vals.push(-scale * c.im);
            }
        }
    }
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

fn expr_is_real(e: &LinExpr) -> bool {
    e.imag_magnitude() <= 1e-14 * (1.0 + e.constant.norm())
}

fn lmi_is_real(m: &MatExpr) -> bool {
    m.vec_entries().iter().all(expr_is_real)
}

/// Emits the scaled upper triangle of a real symmetric LMI of side `n`.
fn push_real_lmi(rb: &mut RowBuilder, m: &MatExpr) -> usize {
    let n = m.nrows;
    for j in 0..n {
        for i in 0..=j {
            let scale = if i == j { 1.0 } else { SQRT2 };
            // symmetrize: affine entries (i,j) and (j,i) may differ by rounding
            let e = m.entry(i, j).add(m.entry(j, i)).scale(crate::C64::new(0.5, 0.0));
            rb.push_real(&e, scale);
        }
    }
    n
}

/// Emits the scaled upper triangle of the 2n×2n real embedding of a complex
/// Hermitian LMI of side `n`.
fn push_complex_lmi(rb: &mut RowBuilder, m: &MatExpr) -> usize {
    let n = m.nrows;
    let dim = 2 * n;
    // Hermitian-symmetrized entry (i,j): (E_ij + conj(E_ji)) / 2
    let herm = |i: usize, j: usize| -> LinExpr {
        m.entry(i, j).add(&m.entry(j, i).conj()).scale(crate::C64::new(0.5, 0.0))
    };
    for bj in 0..dim {
        for bi in 0..=bj {
            let scale = if bi == bj { 1.0 } else { SQRT2 };
            let (i, j, re_part, negate) = match (bi < n, bj < n) {
                (true, true) => (bi, bj, true, false),
                (true, false) => (bi, bj - n, false, true), // −Im E
                (false, false) => (bi - n, bj - n, true, false),
                (false, true) => unreachable!("bi <= bj"),
            };
            let e = herm(i, j);
            let s = if negate { -scale } else { scale };
            if re_part {
                rb.push_real(&e, s);
            } else {
                rb.push_imag(&e, s);
            }
        }
    }
    dim
}

pub(crate) fn solve(program: &ConicProgram, tol: &SolverTolerances) -> Result<RawSolution> {
    let n_params = program.num_params();
    let mut rb = RowBuilder::new();
    let mut cones: Vec<SupportedConeT<f64>> = Vec::new();

    // 1. zero cone: complex equalities, two real rows each.
    let mut eq_rows = 0usize;
    for e in program.eqs() {
        rb.push_real(e, 1.0);
        eq_rows += 1;
        if !expr_is_real(e) {
            rb.push_imag(e, 1.0);
            eq_rows += 1;
        }
    }
    if eq_rows > 0 {
        cones.push(SupportedConeT::ZeroConeT(eq_rows));
    }

    // 2. nonnegative cone: scalar inequalities plus sign constraints on
    //    nonnegative scalar variables.
    let mut nn_rows = 0usize;
    for e in program.nonnegs() {
        rb.push_real(e, 1.0);
        nn_rows += 1;
    }
    for (v, info) in program.vars().iter().enumerate() {
        if info.kind == VarKind::Nonneg {
            rb.push_real(&program.entry_expr(super::VarId(v), 0, 0), 1.0);
            nn_rows += 1;
        }
    }
    if nn_rows > 0 {
        cones.push(SupportedConeT::NonnegativeConeT(nn_rows));
    }

    // 3. second-order cones: [t; re/im interleaved entries of v].
    for (v, t) in program.socs() {
        rb.push_real(t, 1.0);
        let mut len = 1usize;
        for e in v {
            rb.push_real(e, 1.0);
            len += 1;
            if !expr_is_real(e) {
                rb.push_imag(e, 1.0);
                len += 1;
            }
        }
        cones.push(SupportedConeT::SecondOrderConeT(len));
    }

    // 4. PSD cones: declared PSD variables first, then explicit LMIs.
    let mut psd_exprs: Vec<MatExpr> = Vec::new();
    for (v, info) in program.vars().iter().enumerate() {
        if matches!(info.kind, VarKind::HermitianPsd(_) | VarKind::SymmetricPsd(_)) {
            psd_exprs.push(program.mat_expr(super::VarId(v)));
        }
    }
    psd_exprs.extend(program.lmis().iter().cloned());
    for m in &psd_exprs {
        let side = if lmi_is_real(m) {
            push_real_lmi(&mut rb, m)
        } else {
            push_complex_lmi(&mut rb, m)
        };
        cones.push(SupportedConeT::PSDTriangleConeT(side));
    }

    // objective: linear only.
    let obj = program.objective_expr();
    let mut q = vec![0.0f64; n_params];
    for &(i, c) in &obj.terms {
        q[i] += c.re;
    }

    let n_rows = rb.b.len();
    let a = CscMatrix::new_from_triplets(n_rows, n_params, rb.rows, rb.cols, rb.vals);
    let p = CscMatrix::<f64>::zeros((n_params, n_params));

    let mut settings = DefaultSettings::default();
    settings.verbose = std::env::var_os("NFCRB_SOLVER_VERBOSE").is_some();
    settings.max_iter = tol.max_iter;
    settings.tol_feas = tol.eq_feas.min(tol.psd_feas);
    settings.tol_gap_abs = tol.gap;
    settings.tol_gap_rel = tol.gap;

    let mut solver = DefaultSolver::new(&p, &q, &a, &rb.b, &cones, settings)
        .map_err(|e| Error::MalformedProgram(format!("backend rejected the program: {e}")))?;
    solver.solve();

    let sol = &solver.solution;
    let status = match sol.status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::AlmostSolved => SolveStatus::NearOptimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        _ => SolveStatus::NumericalFailure,
    };
    Ok(RawSolution {
        x: sol.x.clone(),
        status,
        iterations: sol.iterations,
        gap: (sol.obj_val - sol.obj_val_dual).abs(),
    })
}
