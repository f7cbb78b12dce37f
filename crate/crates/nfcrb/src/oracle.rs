//! Independent validation oracles: a finite-difference Fisher information
//! matrix, a grid maximum-likelihood estimator with Monte-Carlo MSE, and
//! random feasible search bounds for the convex subproblems.
//!
//! Nothing here calls into the optimizer except the plain objective
//! evaluators; agreement between these brute-force routes and the closed
//! forms is what the regression suite checks.

use crate::error::{Error, Result};
use crate::fisher;
use crate::geometry::{near_field_steering, ChannelSet, SystemConfig};
use crate::linalg;
use crate::optimizer::{sinr, PddState, StarsProfile, TransmitDesign};
use crate::{C64, CMat, CVec};
use nalgebra::Matrix4;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Rectangular search grid in (range, angle).
#[derive(Debug, Clone)]
pub struct GridSpec {
    pub range_min: f64,
    pub range_max: f64,
    pub range_steps: usize,
    pub angle_min: f64,
    pub angle_max: f64,
    pub angle_steps: usize,
}

impl GridSpec {
    /// Symmetric window of `half_width` around a center point.
    pub fn centered(
        center: (f64, f64),
        half_width: (f64, f64),
        steps: (usize, usize),
    ) -> GridSpec {
        GridSpec {
            range_min: center.0 - half_width.0,
            range_max: center.0 + half_width.0,
            range_steps: steps.0,
            angle_min: center.1 - half_width.1,
            angle_max: center.1 + half_width.1,
            angle_steps: steps.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.range_steps < 2 || self.angle_steps < 2 {
            return Err(Error::Parameter("grid needs at least 2 steps per axis".into()));
        }
        if !(self.range_max > self.range_min) || !(self.angle_max > self.angle_min) {
            return Err(Error::Parameter("grid windows must have positive width".into()));
        }
        if self.range_min <= 0.0 {
            return Err(Error::Parameter("grid range window must stay positive".into()));
        }
        Ok(())
    }

    pub fn range_value(&self, i: usize) -> f64 {
        self.range_min
            + (self.range_max - self.range_min) * i as f64 / (self.range_steps - 1) as f64
    }

    pub fn angle_value(&self, j: usize) -> f64 {
        self.angle_min
            + (self.angle_max - self.angle_min) * j as f64 / (self.angle_steps - 1) as f64
    }
}

/// Monte-Carlo experiment description.
#[derive(Debug, Clone)]
pub struct MonteCarloSpec {
    pub num_trials: usize,
    pub grid: GridSpec,
    pub seed: u64,
}

/// Deterministic factor X̄ with X̄ X̄ᴴ = T · Rx (eigendecomposition based, so
/// no Monte-Carlo noise enters the information computation).
pub fn signal_factor(rx: &CMat, block_length: usize) -> CMat {
    linalg::hermitian_sqrt_factor(rx) * C64::new((block_length as f64).sqrt(), 0.0)
}

/// The noiseless compressed echo β · Ġ(r, θ) · Φ_r H_br X̄ for a hypothesis
/// point; `front` caches Φ_r H_br X̄.
fn echo_template(r: f64, theta: f64, beta: C64, front: &CMat, cfg: &SystemConfig) -> Result<CMat> {
    let a = near_field_steering(r, theta, cfg)?.entries;
    let gdot = &a * a.transpose();
    Ok(gdot * front * beta)
}

/// Numeric 4×4 Fisher information for ξ = (r_q, θ_q, β_qʳ, β_qⁱ) by central
/// finite differences of the echo vector. Test oracle only.
///
/// `step_range`/`step_angle` are the absolute FD steps; the gain steps are
/// fixed (the echo is linear in β, so any step is exact). Cancellation is
/// detected by recomputing at half steps and comparing.
pub fn fim_numeric(
    channels: &ChannelSet,
    stars: &StarsProfile,
    rx: &CMat,
    q: i64,
    cfg: &SystemConfig,
    step_range: f64,
    step_angle: f64,
) -> Result<Matrix4<f64>> {
    let row = fisher::signed_to_row(channels, q)?;
    let j_full = fim_numeric_at(channels, stars, rx, row, cfg, step_range, step_angle)?;
    let j_half =
        fim_numeric_at(channels, stars, rx, row, cfg, step_range / 2.0, step_angle / 2.0)?;
    // row-wise comparison: the range row is many orders of magnitude smaller
    // than the gain block, so a whole-matrix norm would hide its corruption
    for p in 0..4 {
        let rf = j_full.row(p);
        let rh = j_half.row(p);
        let scale = rf.norm().max(rh.norm());
        if scale > 0.0 && (rh - rf).norm() > 0.05 * scale {
            return Err(Error::Parameter(format!(
                "finite-difference steps ({step_range}, {step_angle}) are unstable under \
                 halving in parameter {p}; likely cancellation"
            )));
        }
    }
    Ok(j_half)
}

fn fim_numeric_at(
    channels: &ChannelSet,
    stars: &StarsProfile,
    rx: &CMat,
    row: usize,
    cfg: &SystemConfig,
    hr: f64,
    hth: f64,
) -> Result<Matrix4<f64>> {
    let (r, theta) = channels.fa_polar[row];
    let beta = channels.beta_fa[row];
    let front = stars.phi_r() * &channels.h_br * signal_factor(rx, cfg.coherence_block);

    let v = |r: f64, th: f64, b: C64| echo_template(r, th, b, &front, cfg);
    let central = |plus: CMat, minus: CMat, h: f64| (plus - minus) / C64::new(2.0 * h, 0.0);

    let hb = 1e-3 * (1.0 + beta.norm());
    let d: [CMat; 4] = [
        central(v(r + hr, theta, beta)?, v(r - hr, theta, beta)?, hr),
        central(v(r, theta + hth, beta)?, v(r, theta - hth, beta)?, hth),
        central(
            v(r, theta, beta + C64::new(hb, 0.0))?,
            v(r, theta, beta - C64::new(hb, 0.0))?,
            hb,
        ),
        central(
            v(r, theta, beta + C64::new(0.0, hb))?,
            v(r, theta, beta - C64::new(0.0, hb))?,
            hb,
        ),
    ];

    let mut j = Matrix4::zeros();
    for a in 0..4 {
        for b in 0..4 {
            j[(a, b)] = d[a].iter().zip(d[b].iter()).map(|(x, y)| (x.conj() * y).re).sum();
        }
    }
    Ok(j * (2.0 / cfg.noise_sensing()))
}

/// Outcome of one grid maximum-likelihood evaluation.
#[derive(Debug, Clone)]
pub struct MleEstimate {
    pub range: f64,
    pub angle: f64,
    /// The argmax sat on the grid boundary — the window likely excludes the
    /// true peak.
    pub on_boundary: bool,
}

/// Grid maximum likelihood with the complex gain profiled out per cell by
/// least squares: the concentrated statistic is |⟨s, y⟩|² / ‖s‖².
pub fn mle_grid_estimate(
    echo: &CMat,
    channels: &ChannelSet,
    stars: &StarsProfile,
    rx: &CMat,
    cfg: &SystemConfig,
    grid: &GridSpec,
) -> Result<MleEstimate> {
    grid.validate()?;
    let front = stars.phi_r() * &channels.h_br * signal_factor(rx, cfg.coherence_block);
    if echo.shape() != front.shape() {
        return Err(Error::Dimension(format!(
            "echo is {:?}, template is {:?}",
            echo.shape(),
            front.shape()
        )));
    }

    let mut best = (f64::NEG_INFINITY, 0usize, 0usize);
    for i in 0..grid.range_steps {
        for jx in 0..grid.angle_steps {
            let s = echo_template(grid.range_value(i), grid.angle_value(jx), C64::new(1.0, 0.0), &front, cfg)?;
            let mut dot = C64::new(0.0, 0.0);
            let mut norm2 = 0.0;
            for (a, y) in s.iter().zip(echo.iter()) {
                dot += a.conj() * y;
                norm2 += a.norm_sqr();
            }
            if norm2 <= 0.0 {
                continue;
            }
            let stat = dot.norm_sqr() / norm2;
            if stat > best.0 {
                best = (stat, i, jx);
            }
        }
    }
    let (_, bi, bj) = best;
    Ok(MleEstimate {
        range: grid.range_value(bi),
        angle: grid.angle_value(bj),
        on_boundary: bi == 0
            || bi + 1 == grid.range_steps
            || bj == 0
            || bj + 1 == grid.angle_steps,
    })
}

/// Monte-Carlo MSE of the grid MLE against the true position.
#[derive(Debug, Clone)]
pub struct McOutcome {
    pub mse_range: f64,
    pub mse_angle: f64,
    pub trials: usize,
    /// Trials whose argmax sat on the grid boundary.
    pub boundary_hits: usize,
}

/// Runs `spec.num_trials` noisy echoes through the grid MLE. Per-trial RNG
/// streams derive from the master seed, so trials are order-independent.
pub fn monte_carlo_mse(
    channels: &ChannelSet,
    stars: &StarsProfile,
    rx: &CMat,
    q: i64,
    cfg: &SystemConfig,
    spec: &MonteCarloSpec,
) -> Result<McOutcome> {
    spec.grid.validate()?;
    if spec.num_trials == 0 {
        return Err(Error::Parameter("Monte-Carlo needs at least one trial".into()));
    }
    let row = fisher::signed_to_row(channels, q)?;
    let (r_true, th_true) = channels.fa_polar[row];
    let beta = channels.beta_fa[row];
    let front = stars.phi_r() * &channels.h_br * signal_factor(rx, cfg.coherence_block);
    let clean = echo_template(r_true, th_true, beta, &front, cfg)?;
    let sigma = cfg.noise_sensing().sqrt();

    let (rows, cols) = clean.shape();
    let mut se_r = 0.0;
    let mut se_th = 0.0;
    let mut boundary_hits = 0usize;
    for trial in 0..spec.num_trials {
        let mut rng = ChaCha8Rng::seed_from_u64(
            spec.seed ^ (trial as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(0x6d63),
        );
        let noise = CMat::from_fn(rows, cols, |_, _| {
            // CN(0, σ²): each real part has variance σ²/2
            C64::new(
                rng.sample::<f64, _>(rand_distr::StandardNormal),
                rng.sample::<f64, _>(rand_distr::StandardNormal),
            ) * (sigma / std::f64::consts::SQRT_2)
        });
        let echo = &clean + noise;
        let est = mle_grid_estimate(&echo, channels, stars, rx, cfg, &spec.grid)?;
        se_r += (est.range - r_true).powi(2);
        se_th += (est.angle - th_true).powi(2);
        boundary_hits += est.on_boundary as usize;
    }
    Ok(McOutcome {
        mse_range: se_r / spec.num_trials as f64,
        mse_angle: se_th / spec.num_trials as f64,
        trials: spec.num_trials,
        boundary_hits,
    })
}

/// Result of a rejection-sampled search over a feasible region.
#[derive(Debug, Clone, PartialEq)]
pub enum SearchOutcome {
    /// Best objective among accepted samples and how many were accepted.
    Best { objective: f64, accepted: usize },
    /// No sample passed the constraints; the oracle says nothing.
    Inconclusive,
}

impl SearchOutcome {
    pub fn objective(&self) -> Option<f64> {
        match self {
            SearchOutcome::Best { objective, .. } => Some(*objective),
            SearchOutcome::Inconclusive => None,
        }
    }
}

/// Penalty term of the augmented objective at a candidate profile/design.
fn penalty(state: &PddState, channels: &ChannelSet, stars: &StarsProfile, rx: &CMat) -> f64 {
    let product = fisher::reflected_covariance(channels, stars, rx);
    let residual = &state.lambda - product + &state.gamma * C64::new(state.rho, 0.0);
    linalg::frob(&residual).powi(2) / (2.0 * state.rho)
}

/// Objective value of the transmit-design subproblem at a sampled (W, R₀):
/// the auxiliary Λ is picked as the better of the penalty-free choice and
/// the consensus product, U as the exact Schur complement.
fn sub1_objective_at(
    state: &PddState,
    channels: &ChannelSet,
    cfg: &SystemConfig,
    design: &TransmitDesign,
) -> Option<f64> {
    let row = state.apv.active_row().ok()?;
    let q = row as i64 - channels.num_positions() as i64 / 2;
    let product = fisher::reflected_covariance(channels, &state.stars, &design.rx());
    let mut best: Option<f64> = None;
    for lambda in [
        &product - &state.gamma * C64::new(state.rho, 0.0),
        product.clone(),
    ] {
        let Ok(blocks) = fisher::fim_blocks_from_lambda(channels, &lambda, row, cfg) else {
            continue;
        };
        let Ok(crb) = fisher::crb_from_fim(&blocks) else { continue };
        let residual = &lambda - &product + &state.gamma * C64::new(state.rho, 0.0);
        let obj = crb.trace() + linalg::frob(&residual).powi(2) / (2.0 * state.rho);
        if best.map_or(true, |b| obj < b) {
            best = Some(obj);
        }
    }
    let _ = q;
    best
}

/// Random feasible search over the transmit-design block: beamformers are
/// drawn as matched-filter/random mixtures, the sensing covariance as a
/// scaled Wishart sample, both rescaled into the power budget, then rejected
/// against the SINR thresholds.
pub fn random_search_sub1(
    state: &PddState,
    channels: &ChannelSet,
    cfg: &SystemConfig,
    samples: usize,
    seed: u64,
) -> SearchOutcome {
    let m = cfg.num_bs_antennas;
    let k_users = cfg.num_users();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7331_7375_6231);
    let cgauss = |rng: &mut ChaCha8Rng| {
        C64::new(
            rng.sample::<f64, _>(rand_distr::StandardNormal),
            rng.sample::<f64, _>(rand_distr::StandardNormal),
        ) * std::f64::consts::FRAC_1_SQRT_2
    };

    let mut best: Option<f64> = None;
    let mut accepted = 0usize;
    for _ in 0..samples {
        // beamformer directions: matched filter tilted by a random vector
        let mut w = CMat::zeros(m, k_users);
        for k in 0..k_users {
            let mf = crate::optimizer::effective_user_channel(channels, &state.stars, k);
            let g = CVec::from_fn(m, |_, _| cgauss(&mut rng));
            let alpha: f64 = rng.gen_range(0.0..0.4);
            let dir = &mf * C64::new(1.0 - alpha, 0.0)
                + g * C64::new(alpha * mf.norm() / (m as f64).sqrt(), 0.0);
            let nrm = dir.norm();
            if nrm <= 0.0 {
                continue;
            }
            w.set_column(k, &(dir / C64::new(nrm, 0.0)));
        }
        let a = CMat::from_fn(m, m, |_, _| cgauss(&mut rng));
        let r0 = &a * a.adjoint();

        // random power split, total drawn near the budget
        let total = cfg.power_budget * rng.gen_range(0.7..1.0);
        let comm_frac: f64 = rng.gen_range(0.3..0.95);
        let sense = total * (1.0 - comm_frac);
        let r0_trace = r0.trace().re.max(1e-300);
        let r0 = r0 * C64::new(sense / r0_trace, 0.0);
        let mut design = TransmitDesign { w, r0 };
        for k in 0..k_users {
            let p_k = total * comm_frac / k_users as f64;
            let col = design.w.column(k) * C64::new(p_k.sqrt(), 0.0);
            design.w.set_column(k, &col);
        }

        if (0..k_users)
            .any(|k| sinr(&design, channels, &state.stars, cfg, k) < cfg.sinr_thresholds[k])
        {
            continue;
        }
        accepted += 1;
        if let Some(obj) = sub1_objective_at(state, channels, cfg, &design) {
            if best.map_or(true, |b| obj < b) {
                best = Some(obj);
            }
        }
    }
    match best {
        Some(objective) => SearchOutcome::Best { objective, accepted },
        None => SearchOutcome::Inconclusive,
    }
}

/// Random feasible search over the surface block: uniform phases with a
/// uniform per-element energy split, rejected against the SINR thresholds;
/// the incumbent profile is always included as a candidate.
pub fn random_search_sub2(
    state: &PddState,
    channels: &ChannelSet,
    cfg: &SystemConfig,
    samples: usize,
    seed: u64,
) -> SearchOutcome {
    let n = cfg.num_stars_elements;
    let k_users = cfg.num_users();
    let rx = state.design.rx();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7331_7375_6232);

    let feasible = |stars: &StarsProfile| {
        (0..k_users)
            .all(|k| sinr(&state.design, channels, stars, cfg, k) >= cfg.sinr_thresholds[k])
    };

    let mut best: Option<f64> = None;
    let mut accepted = 0usize;
    let consider = |stars: &StarsProfile, accepted: &mut usize, best: &mut Option<f64>| {
        if !feasible(stars) {
            return;
        }
        *accepted += 1;
        let pen = penalty(state, channels, stars, &rx);
        if best.map_or(true, |b| pen < b) {
            *best = Some(pen);
        }
    };

    consider(&state.stars, &mut accepted, &mut best);
    for _ in 0..samples {
        let mut o_t = CVec::zeros(n);
        let mut o_r = CVec::zeros(n);
        for i in 0..n {
            let split: f64 = rng.gen_range(0.0..1.0);
            o_t[i] = C64::from_polar(split.sqrt(), rng.gen_range(0.0..std::f64::consts::TAU));
            o_r[i] =
                C64::from_polar((1.0 - split).sqrt(), rng.gen_range(0.0..std::f64::consts::TAU));
        }
        consider(&StarsProfile { o_t, o_r }, &mut accepted, &mut best);
    }
    if samples == 0 && accepted <= 1 {
        // only the incumbent was looked at — not a search
        return SearchOutcome::Inconclusive;
    }
    match best {
        Some(objective) => SearchOutcome::Best { objective, accepted },
        None => SearchOutcome::Inconclusive,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_channels;
    use approx::assert_relative_eq;

    fn cfg() -> SystemConfig {
        crate::geometry::tests::desk_cfg()
    }

    fn iso_rx(cfg: &SystemConfig) -> CMat {
        CMat::identity(cfg.num_bs_antennas, cfg.num_bs_antennas)
            * C64::new(cfg.power_budget / cfg.num_bs_antennas as f64, 0.0)
    }

    #[test]
    fn zero_covariance_gives_zero_information() {
        let cfg = cfg();
        let ch = build_channels(&cfg).unwrap();
        let stars = StarsProfile::balanced(cfg.num_stars_elements);
        let rx = CMat::zeros(cfg.num_bs_antennas, cfg.num_bs_antennas);
        let j = fim_numeric(&ch, &stars, &rx, 0, &cfg, 1e-3, 1e-6).unwrap();
        assert_eq!(j, Matrix4::zeros());
    }

    #[test]
    fn numeric_fim_matches_closed_form() {
        let cfg = cfg();
        let ch = build_channels(&cfg).unwrap();
        let stars = StarsProfile::balanced(cfg.num_stars_elements);
        let rx = iso_rx(&cfg);
        for q in [-1i64, 0, 1] {
            let row = fisher::signed_to_row(&ch, q).unwrap();
            let r = ch.fa_polar[row].0;
            let numeric = fim_numeric(&ch, &stars, &rx, q, &cfg, 1e-4 * r, 1e-6).unwrap();
            let closed = fisher::fim_blocks(&ch, &stars, &rx, q, &cfg).unwrap().assemble();
            assert!(
                (numeric - closed).norm() <= 1e-4 * closed.norm(),
                "q={q}: numeric/closed mismatch {}",
                (numeric - closed).norm() / closed.norm()
            );
        }
    }

    #[test]
    fn gain_scaling_moves_the_blocks_consistently() {
        let cfg = cfg();
        let mut ch = build_channels(&cfg).unwrap();
        let stars = StarsProfile::balanced(cfg.num_stars_elements);
        let rx = iso_rx(&cfg);
        let j1 = fisher::fim_blocks(&ch, &stars, &rx, 0, &cfg).unwrap();
        let row = fisher::signed_to_row(&ch, 0).unwrap();
        ch.beta_fa[row] *= C64::new(2.0, 0.0);
        ch.g[row] *= C64::new(2.0, 0.0);
        let j2 = fisher::fim_blocks(&ch, &stars, &rx, 0, &cfg).unwrap();
        // J11 ∝ |β|², J12 ∝ β̄, J22 independent of β
        assert_relative_eq!(j2.j11.norm(), 4.0 * j1.j11.norm(), max_relative = 1e-12);
        assert_relative_eq!(j2.j12.norm(), 2.0 * j1.j12.norm(), max_relative = 1e-12);
        assert_relative_eq!(j2.j22.norm(), j1.j22.norm(), max_relative = 1e-12);
        let numeric = {
            let r = ch.fa_polar[row].0;
            fim_numeric(&ch, &stars, &rx, 0, &cfg, 1e-4 * r, 1e-6).unwrap()
        };
        assert!((numeric - j2.assemble()).norm() <= 1e-4 * numeric.norm());
    }

    #[test]
    fn unstable_steps_are_reported() {
        let cfg = cfg();
        let ch = build_channels(&cfg).unwrap();
        let stars = StarsProfile::balanced(cfg.num_stars_elements);
        let rx = iso_rx(&cfg);
        // a range step at the rounding floor cannot survive step halving
        let err = fim_numeric(&ch, &stars, &rx, 0, &cfg, 1e-13, 1e-6);
        assert!(err.is_err(), "expected a cancellation report");
    }

    #[test]
    fn noiseless_echo_peaks_at_the_true_cell() {
        let cfg = cfg();
        let ch = build_channels(&cfg).unwrap();
        let stars = StarsProfile::balanced(cfg.num_stars_elements);
        let rx = iso_rx(&cfg);
        let row = fisher::signed_to_row(&ch, 0).unwrap();
        let (r, th) = ch.fa_polar[row];
        let front = stars.phi_r() * &ch.h_br * signal_factor(&rx, cfg.coherence_block);
        let clean = echo_template(r, th, ch.beta_fa[row], &front, &cfg).unwrap();
        // 11×11 grid with the true point exactly on a cell center
        let grid = GridSpec::centered((r, th), (0.5, 0.02), (11, 11));
        let est = mle_grid_estimate(&clean, &ch, &stars, &rx, &cfg, &grid).unwrap();
        assert_relative_eq!(est.range, r, max_relative = 1e-12);
        assert_relative_eq!(est.angle, th, max_relative = 1e-9);
        assert!(!est.on_boundary);
    }

    #[test]
    fn monte_carlo_is_deterministic_per_seed() {
        let cfg = cfg();
        let ch = build_channels(&cfg).unwrap();
        let stars = StarsProfile::balanced(cfg.num_stars_elements);
        let rx = iso_rx(&cfg);
        let spec = MonteCarloSpec {
            num_trials: 8,
            grid: GridSpec::centered(ch.fa_polar[1], (0.5, 0.02), (9, 9)),
            seed: 42,
        };
        let a = monte_carlo_mse(&ch, &stars, &rx, 0, &cfg, &spec).unwrap();
        let b = monte_carlo_mse(&ch, &stars, &rx, 0, &cfg, &spec).unwrap();
        assert_eq!(a.mse_range.to_bits(), b.mse_range.to_bits());
        assert_eq!(a.mse_angle.to_bits(), b.mse_angle.to_bits());
        assert!(a.mse_range.is_finite() && a.mse_angle.is_finite());
    }

    #[test]
    fn zero_samples_are_inconclusive() {
        let cfg = cfg();
        let ch = build_channels(&cfg).unwrap();
        let state =
            crate::optimizer::initialize(&cfg, &ch, &crate::optimizer::PddOptions::default())
                .unwrap();
        assert_eq!(random_search_sub2(&state, &ch, &cfg, 0, 1), SearchOutcome::Inconclusive);
    }

    #[test]
    fn search_is_deterministic_per_seed() {
        let cfg = cfg();
        let ch = build_channels(&cfg).unwrap();
        let state =
            crate::optimizer::initialize(&cfg, &ch, &crate::optimizer::PddOptions::default())
                .unwrap();
        let a = random_search_sub1(&state, &ch, &cfg, 200, 3);
        let b = random_search_sub1(&state, &ch, &cfg, 200, 3);
        assert_eq!(a, b);
    }
}
