//! Double-loop transmit design: an outer penalty/dual loop drives the
//! consensus equality Λ = Φ_r H_br R_x H_brᴴ Φ_rᴴ to zero violation while an
//! inner block-coordinate loop cycles over (U, Λ, W, R₀), (o_t, o_r) and the
//! antenna position vector.

mod subproblems;

pub use subproblems::{solve_sub1, solve_sub2, solve_sub3, Sub1Solution, Sub2Outcome};

use crate::conic::SolverTolerances;
use crate::error::{Error, Result};
use crate::fisher::{self, CrbResult};
use crate::geometry::{ChannelSet, SystemConfig};
use crate::linalg;
use crate::{C64, CMat, CVec};
use nalgebra::Matrix2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Communication beamformers and sensing covariance.
#[derive(Debug, Clone)]
pub struct TransmitDesign {
    /// M×K beamformer matrix, one column per user (√W per entry).
    pub w: CMat,
    /// M×M Hermitian PSD sensing covariance (W).
    pub r0: CMat,
}

impl TransmitDesign {
    /// Total transmit covariance R_x = W Wᴴ + R₀.
    pub fn rx(&self) -> CMat {
        &self.w * self.w.adjoint() + &self.r0
    }

    pub fn total_power(&self) -> f64 {
        self.rx().trace().re
    }
}

/// Transmission/reflection coefficient vectors with coupled amplitudes.
#[derive(Debug, Clone)]
pub struct StarsProfile {
    pub o_t: CVec,
    pub o_r: CVec,
}

impl StarsProfile {
    /// Equal split, zero phases.
    pub fn balanced(n: usize) -> Self {
        let amp = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
        StarsProfile { o_t: CVec::from_element(n, amp), o_r: CVec::from_element(n, amp) }
    }

    /// Equal amplitude split with independent random phases.
    pub fn random(n: usize, rng: &mut impl Rng) -> Self {
        let amp = std::f64::consts::FRAC_1_SQRT_2;
        let draw = |rng: &mut dyn rand::RngCore| {
            C64::from_polar(amp, rand::Rng::gen_range(rng, 0.0..2.0 * std::f64::consts::PI))
        };
        StarsProfile {
            o_t: CVec::from_fn(n, |_, _| draw(rng)),
            o_r: CVec::from_fn(n, |_, _| draw(rng)),
        }
    }

    pub fn phi_t(&self) -> CMat {
        linalg::diag(&self.o_t)
    }

    pub fn phi_r(&self) -> CMat {
        linalg::diag(&self.o_r)
    }

    /// Per-element energy split |o_t|² + |o_r|² = 1 within 1e-8.
    pub fn check_coupling(&self) -> Result<()> {
        for n in 0..self.o_t.len() {
            let s = self.o_t[n].norm_sqr() + self.o_r[n].norm_sqr();
            if (s - 1.0).abs() > 1e-8 {
                return Err(Error::Parameter(format!(
                    "element {n} amplitude coupling is {s}, expected 1"
                )));
            }
        }
        Ok(())
    }

    /// Rescales each element so the amplitude coupling holds exactly,
    /// preserving phases. Degenerate zero elements become an equal split.
    pub fn renormalized(&self) -> StarsProfile {
        let n = self.o_t.len();
        let mut o_t = self.o_t.clone();
        let mut o_r = self.o_r.clone();
        for i in 0..n {
            let s = (o_t[i].norm_sqr() + o_r[i].norm_sqr()).sqrt();
            if s > 1e-12 {
                o_t[i] /= s;
                o_r[i] /= s;
            } else {
                let amp = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
                o_t[i] = amp;
                o_r[i] = amp;
            }
        }
        StarsProfile { o_t, o_r }
    }
}

/// Antenna position vector: relaxed weights or a committed one-hot choice.
#[derive(Debug, Clone, PartialEq)]
pub enum ApvState {
    /// Entries in [0,1] summing to one.
    Relaxed(Vec<f64>),
    /// Index (row, not signed) of the single active position.
    Integral(usize),
}

impl ApvState {
    pub fn one_hot(row: usize, len: usize) -> Self {
        assert!(row < len);
        ApvState::Integral(row)
    }

    /// Row index of the active position (integral mode only).
    pub fn active_row(&self) -> Result<usize> {
        match self {
            ApvState::Integral(r) => Ok(*r),
            ApvState::Relaxed(_) => Err(Error::Parameter("APV is not integral".into())),
        }
    }

    pub fn weights(&self, len: usize) -> Vec<f64> {
        match self {
            ApvState::Integral(r) => {
                let mut v = vec![0.0; len];
                v[*r] = 1.0;
                v
            }
            ApvState::Relaxed(v) => v.clone(),
        }
    }
}

/// Full optimizer state carried across BCD passes and outer iterations.
#[derive(Debug, Clone)]
pub struct PddState {
    /// 2×2 auxiliary bound matrix U (real symmetric PD at optimum).
    pub u: Matrix2<f64>,
    /// N×N Hermitian auxiliary Λ.
    pub lambda: CMat,
    /// N×N Hermitian dual Γ.
    pub gamma: CMat,
    /// Penalty factor ϱ > 0.
    pub rho: f64,
    pub design: TransmitDesign,
    pub stars: StarsProfile,
    pub apv: ApvState,
    pub outer_iter: usize,
    pub inner_iter: usize,
    /// (outer iteration, augmented objective) after each accepted inner
    /// pass; the objective is only comparable within one outer iteration,
    /// since ϱ and Γ change between them.
    pub objective_trace: Vec<(usize, f64)>,
}

/// Knobs of the double loop (defaults follow the regression setup).
#[derive(Debug, Clone)]
pub struct PddOptions {
    /// Inner stop: relative objective reduction threshold.
    pub inner_tol: f64,
    /// Inner stop: max BCD passes per outer iteration.
    pub inner_max: usize,
    /// Outer stop: max-norm of the consensus violation.
    pub outer_tol: f64,
    pub outer_max: usize,
    pub rho0: f64,
    /// Penalty shrink factor z ∈ (0,1).
    pub shrink: f64,
    /// Gaussian randomization draws in the surface subproblem.
    pub gauss_draws: usize,
    pub solver_tol: SolverTolerances,
    pub seed: u64,
}

impl Default for PddOptions {
    fn default() -> Self {
        PddOptions {
            inner_tol: 1e-4,
            inner_max: 30,
            outer_tol: 1e-5,
            outer_max: 50,
            rho0: 1.0,
            shrink: 0.6,
            gauss_draws: 100,
            solver_tol: SolverTolerances::default(),
            seed: 0,
        }
    }
}

/// How a run terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunStatus {
    Converged,
    Stalled,
    Infeasible,
}

impl std::fmt::Display for RunStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RunStatus::Converged => "converged",
            RunStatus::Stalled => "stalled",
            RunStatus::Infeasible => "infeasible",
        })
    }
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct OptimizationReport {
    pub status: RunStatus,
    pub design: TransmitDesign,
    pub stars: StarsProfile,
    pub apv: ApvState,
    pub crb: Option<CrbResult>,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub final_violation: f64,
    /// See [`PddState::objective_trace`].
    pub objective_trace: Vec<(usize, f64)>,
    /// Per-outer-iteration violation values.
    pub violation_trace: Vec<f64>,
    /// SINR margin (dB over threshold) per user at exit.
    pub sinr_margins_db: Vec<f64>,
    /// The initial point violated a SINR threshold (repaired by the first
    /// convex pass).
    pub infeasible_start: bool,
}

/// Column vector g_k with h_{u,k} = g_kᴴ, the effective BS→user channel
/// through the transmissive side of the surface.
pub fn effective_user_channel(
    channels: &ChannelSet,
    stars: &StarsProfile,
    k: usize,
) -> CVec {
    // h_{u,k} = h_ru,kᴴ Φ_t H_br  ⇒  g = H_brᴴ Φ_tᴴ h_ru,k
    channels.h_br.adjoint() * stars.phi_t().adjoint() * &channels.h_ru[k]
}

/// Received SINR of user k: desired-stream power over inter-stream
/// interference, sensing-covariance leakage, and noise.
pub fn sinr(
    design: &TransmitDesign,
    channels: &ChannelSet,
    stars: &StarsProfile,
    cfg: &SystemConfig,
    k: usize,
) -> f64 {
    let g = effective_user_channel(channels, stars, k);
    let k_users = design.w.ncols();
    let mut signal = 0.0;
    let mut interference = 0.0;
    for i in 0..k_users {
        let p = (g.adjoint() * design.w.column(i))[(0, 0)].norm_sqr();
        if i == k {
            signal = p;
        } else {
            interference += p;
        }
    }
    let sensing_leak = (g.adjoint() * &design.r0 * &g)[(0, 0)].re;
    signal / (interference + sensing_leak.max(0.0) + cfg.noise_user())
}

/// Augmented-Lagrangian objective Tr(U⁻¹) + (1/2ϱ)‖Λ − Φ_r H_br R_x H_brᴴ Φ_rᴴ + ϱΓ‖².
pub fn augmented_objective(state: &PddState, channels: &ChannelSet) -> Result<f64> {
    let tr_inv = fisher::crb_trace_objective(&state.u)?;
    if state.rho <= 0.0 {
        return Err(Error::Parameter("penalty factor must be > 0".into()));
    }
    let product = fisher::reflected_covariance(channels, &state.stars, &state.design.rx());
    let residual = &state.lambda - product + &state.gamma * C64::new(state.rho, 0.0);
    Ok(tr_inv + linalg::frob(&residual).powi(2) / (2.0 * state.rho))
}

/// Consensus violation ‖Λ − Φ_r H_br R_x H_brᴴ Φ_rᴴ‖_∞ (max entry modulus).
pub fn constraint_violation(state: &PddState, channels: &ChannelSet) -> f64 {
    let product = fisher::reflected_covariance(channels, &state.stars, &state.design.rx());
    linalg::max_abs(&(&state.lambda - product))
}

/// Feasible-by-construction starting point.
pub fn initialize(
    cfg: &SystemConfig,
    channels: &ChannelSet,
    opts: &PddOptions,
) -> Result<PddState> {
    let m = cfg.num_bs_antennas;
    let k_users = cfg.num_users();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x696e6974);
    // A single random phase draw can nearly null a user's effective channel
    // and strand the whole run as infeasible; keep the draw with the best
    // worst-case SINR headroom (single-user full-power bound).
    let stars = {
        let mut best: Option<(f64, StarsProfile)> = None;
        for _ in 0..32 {
            let cand = StarsProfile::random(cfg.num_stars_elements, &mut rng);
            let score = (0..k_users)
                .map(|k| {
                    let g = effective_user_channel(channels, &cand, k);
                    cfg.power_budget * g.norm_squared()
                        / (cfg.noise_user() * cfg.sinr_thresholds[k].max(1e-300))
                })
                .fold(f64::INFINITY, f64::min);
            if best.as_ref().map_or(true, |(s, _)| score > *s) {
                best = Some((score, cand));
            }
            if k_users == 0 {
                break;
            }
        }
        best.unwrap().1
    };

    // Matched-filter beamformers splitting half the budget across users.
    let mut w = CMat::zeros(m, k_users);
    if k_users > 0 && cfg.power_budget > 0.0 {
        let per_user = (cfg.power_budget / (2.0 * k_users as f64)).sqrt();
        for k in 0..k_users {
            let g = effective_user_channel(channels, &stars, k);
            let norm = g.norm();
            if norm > 1e-300 {
                w.set_column(k, &(g * C64::new(per_user / norm, 0.0)));
            }
        }
    }
    let r0_scale = if k_users > 0 { cfg.power_budget / 2.0 } else { cfg.power_budget };
    let r0 = CMat::identity(m, m) * C64::new(r0_scale / m as f64, 0.0);
    let design = TransmitDesign { w, r0 };

    let apv = ApvState::one_hot(cfg.num_fa_positions / 2, cfg.num_fa_positions);
    let rx = design.rx();
    let lambda = fisher::reflected_covariance(channels, &stars, &rx);
    let row = apv.active_row()?;
    let u = match fisher::fim_blocks_from_lambda(channels, &lambda, row, cfg)
        .and_then(|b| {
            let inv = b
                .j22
                .try_inverse()
                .ok_or_else(|| Error::Numerical("singular gain block".into()))?;
            Ok(b.j11 - b.j12 * inv * b.j12.transpose())
        }) {
        Ok(schur) if schur.determinant() > 0.0 && schur.trace() > 0.0 => schur * 0.5,
        _ => Matrix2::identity() * 1e-12,
    };

    Ok(PddState {
        u,
        lambda,
        gamma: CMat::zeros(cfg.num_stars_elements, cfg.num_stars_elements),
        rho: opts.rho0,
        design,
        stars,
        apv,
        outer_iter: 0,
        inner_iter: 0,
        objective_trace: Vec::new(),
    })
}

/// One accepted BCD pass: sub1 → sub2 → sub3, each rejected if it would
/// increase the augmented objective.
pub fn bcd_iterate(
    state: &PddState,
    channels: &ChannelSet,
    cfg: &SystemConfig,
    opts: &PddOptions,
    rng: &mut ChaCha8Rng,
) -> Result<PddState> {
    let mut next = state.clone();
    let obj_in = augmented_objective(&next, channels)?;

    // Block 1: convex design of (U, Λ, W, R₀).
    let sub1 = solve_sub1(&next, channels, cfg, &opts.solver_tol)?;
    let mut cand = next.clone();
    cand.u = sub1.u;
    cand.lambda = sub1.lambda.clone();
    cand.design = sub1.design.clone();
    let mut current = match augmented_objective(&cand, channels) {
        Ok(obj1) if obj1 <= obj_in + 1e-9 => cand,
        _ => next.clone(),
    };

    // Block 2: surface coefficients, with randomization fallback.
    let sub2 = solve_sub2(&current, channels, cfg, &opts.solver_tol, opts.gauss_draws, rng)?;
    if sub2.improved {
        current.stars = sub2.stars;
    }

    // Block 3: antenna position (does not change the objective value).
    current.apv = solve_sub3(&current, channels, cfg, &opts.solver_tol)?;

    let obj_out = augmented_objective(&current, channels)?;
    debug_assert!(obj_out <= obj_in + 1e-9);
    current.inner_iter += 1;
    current.objective_trace.push((current.outer_iter, obj_out));
    next = current;
    Ok(next)
}

/// Full double-loop run.
pub fn pdd_run(
    cfg: &SystemConfig,
    channels: &ChannelSet,
    init: Option<PddState>,
    opts: &PddOptions,
) -> Result<OptimizationReport> {
    let mut state = match init {
        Some(s) => s,
        None => initialize(cfg, channels, opts)?,
    };
    let infeasible_start = (0..cfg.num_users()).any(|k| {
        sinr(&state.design, channels, &state.stars, cfg, k) < cfg.sinr_thresholds[k] * (1.0 - 1e-9)
    });

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x70646472);
    let mut eta = 0.8 * constraint_violation(&state, channels).max(opts.outer_tol);
    let mut violation_trace = Vec::new();
    let mut status = RunStatus::Stalled;
    let mut inner_total = 0usize;
    let mut aborted = false;

    for outer in 1..=opts.outer_max {
        state.outer_iter = outer;

        // Inner BCD until the fractional reduction stalls.
        let mut prev_obj = augmented_objective(&state, channels)?;
        for _ in 0..opts.inner_max {
            let next = match bcd_iterate(&state, channels, cfg, opts, &mut rng) {
                Ok(s) => s,
                Err(Error::Infeasible(msg)) => {
                    return Ok(report_infeasible(state, channels, cfg, msg, violation_trace));
                }
                // a late-stage conditioning failure ends the run with the
                // best iterate found so far
                Err(Error::Numerical(_)) if state.outer_iter > 1 => {
                    aborted = true;
                    break;
                }
                Err(e) => return Err(e),
            };
            let obj = next.objective_trace.last().unwrap().1;
            state = next;
            inner_total += 1;
            let denom = prev_obj.abs().max(1e-300);
            if (prev_obj - obj) / denom < opts.inner_tol {
                prev_obj = obj;
                break;
            }
            prev_obj = obj;
        }
        let _ = prev_obj;
        if aborted {
            break;
        }

        let h = constraint_violation(&state, channels);
        violation_trace.push(h);
        if h < opts.outer_tol {
            status = RunStatus::Converged;
            break;
        }
        if h <= eta {
            // dual ascent on the consensus equality
            let product =
                fisher::reflected_covariance(channels, &state.stars, &state.design.rx());
            let residual = &state.lambda - product;
            state.gamma += residual * C64::new(1.0 / state.rho, 0.0);
        } else {
            state.rho *= opts.shrink;
            if state.rho < 1e-12 {
                break;
            }
        }
        eta = 0.8 * h;
    }

    let final_violation = constraint_violation(&state, channels);
    if status != RunStatus::Converged && final_violation < opts.outer_tol {
        status = RunStatus::Converged;
    }
    let row = state.apv.active_row()?;
    let q_signed = row as i64 - cfg.half_q();
    let crb = fisher::crb_for_position(channels, &state.stars, &state.design.rx(), q_signed, cfg).ok();
    let sinr_margins_db = (0..cfg.num_users())
        .map(|k| {
            let s = sinr(&state.design, channels, &state.stars, cfg, k);
            10.0 * (s / cfg.sinr_thresholds[k].max(1e-300)).log10()
        })
        .collect();

    Ok(OptimizationReport {
        status,
        design: state.design,
        stars: state.stars,
        apv: state.apv,
        crb,
        outer_iters: state.outer_iter,
        inner_iters: inner_total,
        final_violation,
        objective_trace: state.objective_trace,
        violation_trace,
        sinr_margins_db,
        infeasible_start,
    })
}

fn report_infeasible(
    state: PddState,
    channels: &ChannelSet,
    cfg: &SystemConfig,
    _msg: String,
    violation_trace: Vec<f64>,
) -> OptimizationReport {
    let final_violation = constraint_violation(&state, channels);
    let sinr_margins_db = (0..cfg.num_users())
        .map(|k| {
            let s = sinr(&state.design, channels, &state.stars, cfg, k);
            10.0 * (s / cfg.sinr_thresholds[k].max(1e-300)).log10()
        })
        .collect();
    OptimizationReport {
        status: RunStatus::Infeasible,
        crb: None,
        outer_iters: state.outer_iter,
        inner_iters: state.inner_iter,
        final_violation,
        objective_trace: state.objective_trace.clone(),
        violation_trace,
        sinr_margins_db,
        infeasible_start: true,
        design: state.design,
        stars: state.stars,
        apv: state.apv,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_channels;
    use approx::assert_relative_eq;

    fn setup() -> (SystemConfig, ChannelSet) {
        let cfg = crate::geometry::tests::desk_cfg();
        let ch = build_channels(&cfg).unwrap();
        (cfg, ch)
    }

    #[test]
    fn profile_coupling_and_renormalization() {
        let p = StarsProfile::balanced(7);
        p.check_coupling().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        StarsProfile::random(7, &mut rng).check_coupling().unwrap();

        let skew = StarsProfile {
            o_t: CVec::from_element(3, C64::new(0.9, 0.1)),
            o_r: CVec::from_element(3, C64::new(0.0, 0.2)),
        };
        assert!(skew.check_coupling().is_err());
        let fixed = skew.renormalized();
        fixed.check_coupling().unwrap();
        // phases survive the rescale
        assert_relative_eq!(fixed.o_t[0].arg(), C64::new(0.9, 0.1).arg(), epsilon = 1e-12);
    }

    #[test]
    fn initialize_is_consistent() {
        let (cfg, ch) = setup();
        let opts = PddOptions::default();
        let st = initialize(&cfg, &ch, &opts).unwrap();
        st.stars.check_coupling().unwrap();
        let power = st.design.total_power();
        assert!(power <= cfg.power_budget * (1.0 + 1e-9), "power {power}");
        assert_relative_eq!(power, cfg.power_budget, max_relative = 1e-9);
        // Λ starts at the consensus product, so the violation is zero
        assert!(constraint_violation(&st, &ch) < 1e-30);
        assert!(augmented_objective(&st, &ch).unwrap().is_finite());
    }

    /// Two users with sub-unity thresholds: the rank-one BS→surface link
    /// caps the SINR product at 1, so anything above 0 dB per user is
    /// unservable; 0.4 each stays strictly feasible.
    fn two_user_cfg() -> SystemConfig {
        let mut cfg = crate::geometry::tests::desk_cfg();
        cfg.user_placements = vec![(25.0, 60f64.to_radians()), (35.0, 100f64.to_radians())];
        cfg.sinr_thresholds = vec![0.4, 0.4];
        cfg
    }

    #[test]
    fn sinr_matches_hand_expansion() {
        let cfg = two_user_cfg();
        let ch = build_channels(&cfg).unwrap();
        let opts = PddOptions::default();
        let st = initialize(&cfg, &ch, &opts).unwrap();
        let k = 0;
        let g = effective_user_channel(&ch, &st.stars, k);
        let s = (g.adjoint() * st.design.w.column(0))[(0, 0)].norm_sqr();
        let i1 = (g.adjoint() * st.design.w.column(1))[(0, 0)].norm_sqr();
        let leak = (g.adjoint() * &st.design.r0 * &g)[(0, 0)].re;
        let want = s / (i1 + leak + cfg.noise_user());
        assert_relative_eq!(sinr(&st.design, &ch, &st.stars, &cfg, k), want, max_relative = 1e-12);
    }

    #[test]
    fn sub1_serves_two_users_through_the_rank_one_link() {
        let cfg = two_user_cfg();
        let ch = build_channels(&cfg).unwrap();
        let opts = PddOptions::default();
        let st = initialize(&cfg, &ch, &opts).unwrap();
        let sol = solve_sub1(&st, &ch, &cfg, &opts.solver_tol).unwrap();
        for k in 0..2 {
            let s = sinr(&sol.design, &ch, &st.stars, &cfg, k);
            assert!(s >= cfg.sinr_thresholds[k] * (1.0 - 1e-6), "user {k} SINR {s}");
        }
        assert_eq!(sol.design.w.ncols(), 2);
    }

    #[test]
    fn sub1_reports_unservable_thresholds() {
        let mut cfg = two_user_cfg();
        // product of thresholds above 1 is impossible over a rank-one link
        cfg.sinr_thresholds = vec![10.0, 10.0];
        let ch = build_channels(&cfg).unwrap();
        let opts = PddOptions::default();
        let st = initialize(&cfg, &ch, &opts).unwrap();
        match solve_sub1(&st, &ch, &cfg, &opts.solver_tol) {
            Err(Error::Infeasible(_)) => {}
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn sub1_improves_and_stays_feasible() {
        let (cfg, ch) = setup();
        let opts = PddOptions::default();
        let st = initialize(&cfg, &ch, &opts).unwrap();
        let before = augmented_objective(&st, &ch).unwrap();
        let sol = solve_sub1(&st, &ch, &cfg, &opts.solver_tol).unwrap();
        let mut after_state = st.clone();
        after_state.u = sol.u;
        after_state.lambda = sol.lambda.clone();
        after_state.design = sol.design.clone();
        let after = augmented_objective(&after_state, &ch).unwrap();
        assert!(after <= before * (1.0 + 1e-7) + 1e-12, "after {after} before {before}");
        assert!(sol.design.total_power() <= cfg.power_budget * (1.0 + 1e-6));
        for k in 0..cfg.num_users() {
            let s = sinr(&sol.design, &ch, &st.stars, &cfg, k);
            assert!(s >= cfg.sinr_thresholds[k] * (1.0 - 1e-6), "user {k} SINR {s}");
        }
        assert!(crate::linalg::hermitian_min_eig(&sol.design.r0)
            >= -1e-8 * (1.0 + crate::linalg::max_abs(&sol.design.r0)));
    }

    #[test]
    fn sub2_never_worsens_the_penalty() {
        let (cfg, ch) = setup();
        let opts = PddOptions::default();
        let mut st = initialize(&cfg, &ch, &opts).unwrap();
        let sol = solve_sub1(&st, &ch, &cfg, &opts.solver_tol).unwrap();
        st.u = sol.u;
        st.lambda = sol.lambda;
        st.design = sol.design;
        let before = augmented_objective(&st, &ch).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let out = solve_sub2(&st, &ch, &cfg, &opts.solver_tol, 50, &mut rng).unwrap();
        let mut cand = st.clone();
        cand.stars = out.stars.clone();
        cand.stars.check_coupling().unwrap();
        let after = augmented_objective(&cand, &ch).unwrap();
        assert!(after <= before * (1.0 + 1e-9) + 1e-12, "after {after} before {before}");
        for k in 0..cfg.num_users() {
            let s = sinr(&st.design, &ch, &out.stars, &cfg, k);
            assert!(s >= cfg.sinr_thresholds[k] * (1.0 - 1e-6), "user {k} SINR {s}");
        }
    }

    #[test]
    fn sub3_matches_exhaustive_enumeration() {
        let (cfg, ch) = setup();
        let opts = PddOptions::default();
        let st = initialize(&cfg, &ch, &opts).unwrap();
        let apv = solve_sub3(&st, &ch, &cfg, &opts.solver_tol).unwrap();
        let row = apv.active_row().unwrap();
        let rx = st.design.rx();
        let best = (0..cfg.num_fa_positions)
            .filter_map(|r| {
                let q = r as i64 - cfg.half_q();
                fisher::crb_for_position(&ch, &st.stars, &rx, q, &cfg)
                    .ok()
                    .map(|c| (r, c.trace()))
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let got = fisher::crb_for_position(
            &ch,
            &st.stars,
            &rx,
            row as i64 - cfg.half_q(),
            &cfg,
        )
        .unwrap()
        .trace();
        assert!(got <= best.1 * (1.0 + 1e-12), "row {row} trace {got} best {best:?}");
    }

    #[test]
    fn bcd_passes_are_monotone() {
        let (cfg, ch) = setup();
        let opts = PddOptions::default();
        let mut st = initialize(&cfg, &ch, &opts).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut prev = augmented_objective(&st, &ch).unwrap();
        for _ in 0..3 {
            st = bcd_iterate(&st, &ch, &cfg, &opts, &mut rng).unwrap();
            let obj = st.objective_trace.last().unwrap().1;
            assert!(obj <= prev * (1.0 + 1e-9) + 1e-12, "obj {obj} prev {prev}");
            prev = obj;
        }
    }

    #[test]
    fn pdd_run_converges_on_the_small_instance() {
        let (cfg, ch) = setup();
        let opts = PddOptions::default();
        let rep = pdd_run(&cfg, &ch, None, &opts).unwrap();
        assert_eq!(rep.status, RunStatus::Converged, "violation {}", rep.final_violation);
        assert!(rep.final_violation < opts.outer_tol);
        for w in rep.objective_trace.windows(2) {
            if w[0].0 == w[1].0 {
                assert!(w[1].1 <= w[0].1 * (1.0 + 1e-7) + 1e-12, "trace not monotone: {w:?}");
            }
        }
        for m in &rep.sinr_margins_db {
            assert!(*m >= -1e-5, "SINR margin {m} dB");
        }
        let crb = rep.crb.expect("CRB at exit");
        assert!(crb.trace() > 0.0 && crb.trace().is_finite());
    }
}
