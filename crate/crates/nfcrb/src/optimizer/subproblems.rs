//! The three BCD blocks as conic programs plus their recovery steps.

use super::{effective_user_channel, sinr, ApvState, PddState, StarsProfile, TransmitDesign};
use crate::conic::{ConicProgram, LinExpr, MatExpr, SolveStatus, SolverTolerances, VarId, VarKind};
use crate::error::{Error, Result};
use crate::fisher;
use crate::geometry::{ChannelSet, SystemConfig};
use crate::linalg;
use crate::{C64, CMat, CVec};
use nalgebra::{Matrix2, Matrix4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Result of the transmit-side convex block.
#[derive(Debug, Clone)]
pub struct Sub1Solution {
    pub u: Matrix2<f64>,
    pub lambda: CMat,
    pub design: TransmitDesign,
    /// Total covariance as the solver returned it, before the rank-one
    /// beamformer recovery (which must reproduce it exactly).
    pub rx_relaxed: CMat,
    /// Conic objective value (epigraph form), for regression checks.
    pub objective: f64,
}

/// Result of the surface block. `improved` is false when every extracted
/// candidate was rejected and the previous profile should be kept.
#[derive(Debug, Clone)]
pub struct Sub2Outcome {
    pub stars: StarsProfile,
    pub improved: bool,
}

/// Tr(A·X) over a matrix variable X as a linear expression.
fn trace_with(p: &ConicProgram, x: VarId, a: &CMat) -> LinExpr {
    let n = a.nrows();
    let mut e = LinExpr::zero();
    for i in 0..n {
        for j in 0..n {
            let c = a[(i, j)];
            if c != C64::new(0.0, 0.0) {
                e = e.add(&p.entry_expr(x, j, i).scale(c));
            }
        }
    }
    e.compress();
    e
}

/// gᴴ X g over a matrix variable X.
fn quad_form(p: &ConicProgram, x: VarId, g: &CVec) -> LinExpr {
    let n = g.len();
    let mut e = LinExpr::zero();
    for i in 0..n {
        for j in 0..n {
            let c = g[i].conj() * g[j];
            if c != C64::new(0.0, 0.0) {
                e = e.add(&p.entry_expr(x, i, j).scale(c));
            }
        }
    }
    e.compress();
    e
}

/// The four information blocks as affine expressions in Λ, matching
/// [`fisher::fim_blocks_from_lambda`] entry for entry. Returned as
/// (j11 2×2, j12 2×2, j22 scalar) expression grids.
fn fim_exprs(
    p: &ConicProgram,
    lam: VarId,
    channels: &ChannelSet,
    row: usize,
    cfg: &SystemConfig,
) -> ([[LinExpr; 2]; 2], [[LinExpr; 2]; 2], LinExpr) {
    let t = cfg.coherence_block as f64;
    let sigma2 = cfg.noise_sensing();
    let beta = channels.beta_fa[row];
    let gd = &channels.g_dot[row];
    let gr = &channels.dg_dr[row];
    let gth = &channels.dg_dtheta[row];
    let c1 = C64::new(2.0 * beta.norm_sqr() * t / sigma2, 0.0);
    let c2 = C64::new(2.0 * t / sigma2, 0.0);

    let s = |l: &CMat, pm: &CMat| trace_with(p, lam, &(l.adjoint() * pm));

    let s_rr = s(gr, gr);
    let s_rt = s(gr, gth);
    let s_tt = s(gth, gth);
    let j11 = [
        [s_rr.scale(c1).re(), s_rt.scale(c1).re()],
        [s_rt.scale(c1).re(), s_tt.scale(c1).re()],
    ];

    let t_r = s(gr, gd).scale(beta.conj());
    let t_th = s(gth, gd).scale(beta.conj());
    let neg = C64::new(-1.0, 0.0);
    let j12 = [
        [t_r.scale(c2).re(), t_r.scale(c2).im().scale(neg)],
        [t_th.scale(c2).re(), t_th.scale(c2).im().scale(neg)],
    ];

    let j22 = s(gd, gd).scale(c2).re();
    (j11, j12, j22)
}

/// Diagonal congruence preconditioner for the 4×4 information LMI.
///
/// The blocks live on wildly different scales (the gain block exceeds the
/// range block by |β|⁻² and more), which a per-cone equilibration scalar
/// cannot repair. `d = 1/√diag(J)` at the incumbent Λ brings D J D to unit
/// diagonal; a congruence by a positive diagonal preserves semidefiniteness,
/// so the constraint set is unchanged.
fn fim_preconditioner(
    state: &PddState,
    channels: &ChannelSet,
    row: usize,
    cfg: &SystemConfig,
) -> [f64; 3] {
    let diag = match fisher::fim_blocks_from_lambda(channels, &state.lambda, row, cfg) {
        Ok(b) => [b.j11[(0, 0)], b.j11[(1, 1)], b.j22[(0, 0)]],
        Err(_) => [1.0; 3],
    };
    let top = diag.iter().cloned().fold(1e-300, f64::max);
    let floor = 1e-16 * top;
    [
        1.0 / diag[0].max(floor).sqrt(),
        1.0 / diag[1].max(floor).sqrt(),
        1.0 / diag[2].max(floor).sqrt(),
    ]
}

/// 4×4 information LMI in preconditioned coordinates:
/// [[D₁ J11 D₁ − U′, D₁ J12 D₂], [D₂ J12ᵀ D₁, D₂ J22 D₂]] ⪰ 0 with
/// U′ = D₁ U D₁ the re-parametrized bound variable.
fn fim_lmi(
    p: &ConicProgram,
    lam: VarId,
    u_prime: VarId,
    channels: &ChannelSet,
    row: usize,
    cfg: &SystemConfig,
    d: &[f64; 3],
) -> MatExpr {
    let (j11, j12, j22) = fim_exprs(p, lam, channels, row, cfg);
    let d1 = [d[0], d[1]];
    let db = d[2];
    let mut m = MatExpr::zeros(4, 4);
    for i in 0..2 {
        for j in 0..2 {
            let s11 = C64::new(d1[i] * d1[j], 0.0);
            m.set(i, j, j11[i][j].scale(s11).sub(&p.entry_expr(u_prime, i, j)));
            let s12 = C64::new(d1[i] * db, 0.0);
            m.set(i, j + 2, j12[i][j].scale(s12));
            m.set(i + 2, j, j12[j][i].scale(C64::new(d1[j] * db, 0.0)));
        }
        m.set(i + 2, i + 2, j22.scale(C64::new(db * db, 0.0)));
    }
    m
}

/// Epigraph of Tr(U⁻¹) over the preconditioned variable U′ = D₁ U D₁:
/// with E = D₁^(1/2), [[W′, E], [E, U′]] ⪰ 0 gives
/// Tr(E² W′) = Tr(E W′ E) ≥ Tr(E E U′⁻¹ E E)... i.e. d_r W′₀₀ + d_θ W′₁₁
/// bounds Tr(U⁻¹). Returns the objective expression.
fn trace_inverse_scaled(p: &mut ConicProgram, u_prime: VarId, d1: [f64; 2]) -> LinExpr {
    let w = p.add_var(VarKind::SymmetricFree(2));
    let e = [d1[0].sqrt(), d1[1].sqrt()];
    let mut lmi = MatExpr::zeros(4, 4);
    for j in 0..2 {
        for i in 0..2 {
            lmi.set(i, j, p.entry_expr(w, i, j));
            lmi.set(2 + i, 2 + j, p.entry_expr(u_prime, i, j));
        }
        lmi.set(j, 2 + j, LinExpr::real_constant(e[j]));
        lmi.set(2 + j, j, LinExpr::real_constant(e[j]));
    }
    p.add_lmi(lmi);
    p.entry_expr(w, 0, 0)
        .scale(C64::new(d1[0], 0.0))
        .add(&p.entry_expr(w, 1, 1).scale(C64::new(d1[1], 0.0)))
}

/// Transmit block: minimizes Tr(U⁻¹) + (1/2ϱ)‖Λ − F R_x Fᴴ + ϱΓ‖² over
/// (U, Λ, W, R₀) at fixed surface profile and position, then recovers
/// rank-one beamformers without losing feasibility.
pub fn solve_sub1(
    state: &PddState,
    channels: &ChannelSet,
    cfg: &SystemConfig,
    tol: &SolverTolerances,
) -> Result<Sub1Solution> {
    let m = cfg.num_bs_antennas;
    let n = cfg.num_stars_elements;
    let k_users = cfg.num_users();
    let row = state.apv.active_row()?;
    let f = state.stars.phi_r() * &channels.h_br;
    let sigma2 = cfg.noise_user();

    let mut p = ConicProgram::new();
    let d = fim_preconditioner(state, channels, row, cfg);
    let u_prime = p.add_var(VarKind::SymmetricPsd(2));
    let obj_u = trace_inverse_scaled(&mut p, u_prime, [d[0], d[1]]);
    p.add_objective(obj_u);
    let lam = p.add_var(VarKind::HermitianFree(n));
    let rx = p.add_var(VarKind::HermitianPsd(m));
    let omegas: Vec<VarId> = (0..k_users).map(|_| p.add_var(VarKind::HermitianPsd(m))).collect();

    // information bound at the active position
    let lmi = fim_lmi(&p, lam, u_prime, channels, row, cfg, &d);
    p.add_lmi(lmi);

    // per-user SINR, normalized by the noise power
    for k in 0..k_users {
        let gamma = cfg.sinr_thresholds[k];
        if gamma <= 0.0 {
            continue;
        }
        let g = effective_user_channel(channels, &state.stars, k);
        let lhs = quad_form(&p, omegas[k], &g).scale(C64::new((1.0 + 1.0 / gamma) / sigma2, 0.0));
        let rhs = quad_form(&p, rx, &g).scale(C64::new(1.0 / sigma2, 0.0));
        p.add_nonneg(lhs.sub(&rhs).add_constant(C64::new(-1.0, 0.0)));
    }

    // R_x ⪰ Σ_k Ω_k and the power budget
    let mut gap = p.mat_expr(rx);
    for om in &omegas {
        gap = gap.sub(&p.mat_expr(*om));
    }
    p.add_lmi(gap);
    let budget = cfg.power_budget.max(1e-300);
    p.add_nonneg(
        LinExpr::real_constant(1.0)
            .sub(&p.mat_expr(rx).trace().scale(C64::new(1.0 / budget, 0.0))),
    );

    // penalty ‖Λ − F R_x Fᴴ + ϱΓ‖²/(2ϱ); the weight is folded into the
    // residual (×1/√(2ϱ)) so the epigraph keeps a unit objective coefficient
    // as ϱ shrinks
    let residual = p
        .mat_expr(lam)
        .sub(&p.mat_expr(rx).left_mul(&f).right_mul(&f.adjoint()))
        .add_const(&(&state.gamma * C64::new(state.rho, 0.0)))
        .scale(C64::new(1.0 / (2.0 * state.rho).sqrt(), 0.0));
    let s = p.add_norm_epigraph(residual.vec_entries());
    let s_expr = p.scalar_expr(s);
    let t = p.add_square_epigraph(s_expr);
    let t_expr = p.scalar_expr(t);
    p.add_objective(t_expr);

    let sol = p.solve(tol)?;
    match sol.status {
        SolveStatus::Optimal | SolveStatus::NearOptimal => {}
        SolveStatus::Infeasible => {
            return Err(Error::Infeasible(
                "SINR thresholds cannot be met within the power budget".into(),
            ))
        }
        SolveStatus::NumericalFailure => {
            return Err(Error::Numerical("transmit block solve failed".into()))
        }
    }

    // undo the congruence: U = D₁⁻¹ U′ D₁⁻¹
    let u_hat = sol.matrix(u_prime);
    let u_mat = Matrix2::new(
        u_hat[(0, 0)].re / (d[0] * d[0]),
        u_hat[(0, 1)].re / (d[0] * d[1]),
        u_hat[(1, 0)].re / (d[1] * d[0]),
        u_hat[(1, 1)].re / (d[1] * d[1]),
    );
    let lambda = sol.matrix(lam).clone();
    let rx_hat = sol.matrix(rx).clone();

    // rank-one recovery: w_k = (gᴴ Ω̂ g)^{-1/2} Ω̂ g keeps every SINR value
    // and the total covariance unchanged
    let mut w = CMat::zeros(m, k_users);
    for k in 0..k_users {
        let om = sol.matrix(omegas[k]);
        let g = effective_user_channel(channels, &state.stars, k);
        let val = (g.adjoint() * om * &g)[(0, 0)].re;
        if val <= 0.0 {
            return Err(Error::Numerical(format!(
                "degenerate covariance for user {k}: gᴴΩg = {val}"
            )));
        }
        let col = om * &g * C64::new(1.0 / val.sqrt(), 0.0);
        w.set_column(k, &col);
    }
    let mut r0 = &rx_hat - &w * w.adjoint();
    r0 = (&r0 + r0.adjoint()) * C64::new(0.5, 0.0);

    let rx_scale = 1.0 + linalg::max_abs(&rx_hat);
    let min_eig = linalg::hermitian_min_eig(&r0);
    if min_eig < -1e-8 * rx_scale {
        return Err(Error::Numerical(format!(
            "recovered sensing covariance has eigenvalue {min_eig}"
        )));
    }
    let design = TransmitDesign { w, r0 };
    for k in 0..k_users {
        let got = sinr(&design, channels, &state.stars, cfg, k);
        let want = cfg.sinr_thresholds[k];
        if got < want * (1.0 - 1e-6) - 1e-12 {
            return Err(Error::Numerical(format!(
                "recovered SINR {got} for user {k} below threshold {want}"
            )));
        }
    }

    Ok(Sub1Solution { u: u_mat, lambda, design, rx_relaxed: rx_hat, objective: sol.objective })
}

/// Penalty part of the augmented objective for a candidate profile.
fn penalty_at(state: &PddState, channels: &ChannelSet, stars: &StarsProfile) -> f64 {
    let product = fisher::reflected_covariance(channels, stars, &state.design.rx());
    let residual = &state.lambda - product + &state.gamma * C64::new(state.rho, 0.0);
    linalg::frob(&residual).powi(2) / (2.0 * state.rho)
}

fn stars_feasible(
    state: &PddState,
    channels: &ChannelSet,
    cfg: &SystemConfig,
    stars: &StarsProfile,
) -> bool {
    (0..cfg.num_users()).all(|k| {
        sinr(&state.design, channels, stars, cfg, k) >= cfg.sinr_thresholds[k] * (1.0 - 1e-9)
    })
}

/// Surface block: relaxes o_t o_tᴴ, o_r o_rᴴ to PSD matrices with the
/// per-element amplitude coupling on the diagonals, minimizes the penalty
/// residual subject to the SINR set, then extracts a rank-one profile by the
/// leading eigenvector with seeded Gaussian randomization as fallback.
pub fn solve_sub2(
    state: &PddState,
    channels: &ChannelSet,
    cfg: &SystemConfig,
    tol: &SolverTolerances,
    draws: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Sub2Outcome> {
    let n = cfg.num_stars_elements;
    let k_users = cfg.num_users();
    let sigma2 = cfg.noise_user();
    let rx = state.design.rx();
    let rx_surf = &channels.h_br * &rx * channels.h_br.adjoint(); // N×N
    let lam_hat = &state.lambda + &state.gamma * C64::new(state.rho, 0.0);

    let mut p = ConicProgram::new();
    let phit = p.add_var(VarKind::HermitianPsd(n));
    let phir = p.add_var(VarKind::HermitianPsd(n));
    for i in 0..n {
        p.add_eq(
            p.entry_expr(phit, i, i)
                .add(&p.entry_expr(phir, i, i))
                .add_constant(C64::new(-1.0, 0.0)),
        );
    }

    // SINR in lifted form: |h w_i|² = Tr(conj(Θ_{k,i}) Φ̂_t)
    for k in 0..k_users {
        let gamma = cfg.sinr_thresholds[k];
        if gamma <= 0.0 {
            continue;
        }
        let hk = linalg::diag(&channels.h_ru[k].map(|v| v.conj())) * &channels.h_br; // N×M
        let mut expr = LinExpr::real_constant(-1.0);
        for i in 0..k_users {
            let v = &hk * state.design.w.column(i);
            let theta = (&v * v.adjoint()).map(|x| x.conj());
            let coef = if i == k { 1.0 / gamma } else { -1.0 };
            expr = expr.add(&trace_with(&p, phit, &theta).scale(C64::new(coef / sigma2, 0.0)));
        }
        let upsilon = (&hk * &state.design.r0 * hk.adjoint()).map(|x| x.conj());
        expr = expr.sub(&trace_with(&p, phit, &upsilon).scale(C64::new(1.0 / sigma2, 0.0)));
        p.add_nonneg(expr);
    }

    // minimize ‖(Λ + ϱΓ) − R̃_x ∘ Φ̂_r‖_F
    let residual = p.mat_expr(phir).hadamard(&rx_surf).scale(C64::new(-1.0, 0.0)).add_const(&lam_hat);
    let s = p.add_norm_epigraph(residual.vec_entries());
    let s_expr = p.scalar_expr(s);
    p.add_objective(s_expr);

    let keep = Sub2Outcome { stars: state.stars.clone(), improved: false };
    let sol = match p.solve(tol) {
        Ok(s) if matches!(s.status, SolveStatus::Optimal | SolveStatus::NearOptimal) => s,
        Ok(_) => return Ok(keep),
        Err(Error::MalformedProgram(e)) => return Err(Error::MalformedProgram(e)),
        Err(_) => return Ok(keep),
    };
    let phit_hat = sol.matrix(phit);
    let phir_hat = sol.matrix(phir);

    // candidate 1: scaled leading eigenvectors
    let mut candidates: Vec<StarsProfile> = Vec::new();
    let (lt, vt) = linalg::hermitian_leading_pair(phit_hat);
    let (lr, vr) = linalg::hermitian_leading_pair(phir_hat);
    if lt > 0.0 && lr > 0.0 {
        candidates.push(
            StarsProfile {
                o_t: vt * C64::new(lt.sqrt(), 0.0),
                o_r: vr * C64::new(lr.sqrt(), 0.0),
            }
            .renormalized(),
        );
    }

    // candidates 2..: Gaussian randomization from the relaxed covariances
    let ft = linalg::hermitian_sqrt_factor(phit_hat);
    let fr = linalg::hermitian_sqrt_factor(phir_hat);
    let gauss_vec = |f: &CMat, rng: &mut ChaCha8Rng| -> CVec {
        let z = CVec::from_fn(n, |_, _| {
            C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
                * std::f64::consts::FRAC_1_SQRT_2
        });
        f * z
    };
    for _ in 0..draws {
        let o_t = gauss_vec(&ft, rng);
        let o_r = gauss_vec(&fr, rng);
        candidates.push(StarsProfile { o_t, o_r }.renormalized());
    }

    let incumbent_penalty = penalty_at(state, channels, &state.stars);
    let mut best: Option<(f64, StarsProfile)> = None;
    for cand in candidates {
        if !stars_feasible(state, channels, cfg, &cand) {
            continue;
        }
        let pen = penalty_at(state, channels, &cand);
        if best.as_ref().map_or(true, |(b, _)| pen < *b) {
            best = Some((pen, cand));
        }
    }
    match best {
        Some((pen, stars)) if pen <= incumbent_penalty => {
            Ok(Sub2Outcome { stars, improved: true })
        }
        _ => Ok(keep),
    }
}

/// Position block: a relaxed weight SDP maximizing the smallest eigenvalue
/// of the averaged information LMI, rounded to the largest weight, cross
/// checked against exhaustive enumeration of every discrete position.
pub fn solve_sub3(
    state: &PddState,
    channels: &ChannelSet,
    cfg: &SystemConfig,
    tol: &SolverTolerances,
) -> Result<ApvState> {
    let q = cfg.num_fa_positions;
    if q == 1 {
        return Ok(ApvState::Integral(0));
    }

    // constant information blocks per position at the incumbent Λ,
    // preconditioned by the same diagonal congruence as the transmit block
    let d = fim_preconditioner(state, channels, state.apv.active_row()?, cfg);
    let dv = [d[0], d[1], d[2], d[2]];
    let mut b_mats: Vec<Matrix4<f64>> = Vec::with_capacity(q);
    for row in 0..q {
        let blocks = fisher::fim_blocks_from_lambda(channels, &state.lambda, row, cfg)?;
        let mut b = blocks.assemble();
        for i in 0..2 {
            for j in 0..2 {
                b[(i, j)] -= state.u[(i, j)];
            }
        }
        for i in 0..4 {
            for j in 0..4 {
                b[(i, j)] *= dv[i] * dv[j];
            }
        }
        b_mats.push(b);
    }

    let rounded = {
        let mut p = ConicProgram::new();
        let weights: Vec<VarId> = (0..q).map(|_| p.add_var(VarKind::Nonneg)).collect();
        let slack = p.add_var(VarKind::Free);
        let mut sum = LinExpr::real_constant(-1.0);
        for w in &weights {
            sum = sum.add(&p.scalar_expr(*w));
            p.add_nonneg(LinExpr::real_constant(1.0).sub(&p.scalar_expr(*w)));
        }
        p.add_eq(sum);
        let mut lmi = MatExpr::zeros(4, 4);
        for i in 0..4 {
            for j in 0..4 {
                let mut e = LinExpr::zero();
                for (row, w) in weights.iter().enumerate() {
                    e = e.add(&p.scalar_expr(*w).scale(C64::new(b_mats[row][(i, j)], 0.0)));
                }
                if i == j {
                    e = e.sub(&p.scalar_expr(slack));
                }
                e.compress();
                lmi.set(i, j, e);
            }
        }
        p.add_lmi(lmi);
        p.add_objective(p.scalar_expr(slack).scale(C64::new(-1.0, 0.0)));
        match p.solve(tol) {
            Ok(sol) if matches!(sol.status, SolveStatus::Optimal | SolveStatus::NearOptimal) => {
                let vals: Vec<f64> = weights.iter().map(|w| sol.scalar(*w)).collect();
                vals.iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| i)
            }
            _ => None,
        }
    };

    // exhaustive cross-check on the physical CRB
    let rx = state.design.rx();
    let metric = |row: usize| -> Option<f64> {
        let qs = row as i64 - cfg.half_q();
        fisher::crb_for_position(channels, &state.stars, &rx, qs, cfg)
            .ok()
            .map(|c| c.trace())
    };
    let mut best: Option<(usize, f64)> = None;
    for row in 0..q {
        if let Some(tr) = metric(row) {
            if best.map_or(true, |(_, b)| tr < b) {
                best = Some((row, tr));
            }
        }
    }
    let choice = match (rounded.and_then(|r| metric(r).map(|t| (r, t))), best) {
        (Some((r, tr)), Some((b, tb))) => {
            if tr <= tb {
                r
            } else {
                b
            }
        }
        (Some((r, _)), None) => r,
        (None, Some((b, _))) => b,
        (None, None) => state.apv.active_row()?,
    };
    Ok(ApvState::Integral(choice))
}
