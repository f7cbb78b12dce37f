//! Array geometry, steering vectors and line-of-sight channel construction.
//!
//! Conventions: angles are radians internally, element indices are signed and
//! centered (`n ∈ {-Ñ, …, Ñ}` with `N = 2Ñ+1`), and "path loss X dB" scales
//! the field amplitude by `10^(-X/20)`.

use crate::error::{Error, Result};
use crate::{C64, CMat, CVec};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// All physical and scenario parameters of one instance.
#[derive(Debug, Clone)]
pub struct SystemConfig {
    /// Number of BS antennas `M` (odd).
    pub num_bs_antennas: usize,
    /// Number of surface elements `N` (odd).
    pub num_stars_elements: usize,
    /// Number of movable fluid-antenna positions `Q` (odd).
    pub num_fa_positions: usize,
    /// Carrier wavelength λ in meters.
    pub wavelength: f64,
    /// Surface element spacing `d` in meters.
    pub stars_spacing: f64,
    /// BS antenna spacing `d_s` in meters.
    pub bs_spacing: f64,
    /// Movable-position spacing `d_1` in meters.
    pub fa_spacing: f64,
    /// BS placement relative to the surface center: (range m, angle rad).
    pub bs_range: f64,
    pub bs_angle: f64,
    /// Center of the movable-position line: (range m, angle rad).
    pub target_range: f64,
    pub target_angle: f64,
    /// Per-user (range m, angle rad) placements.
    pub user_placements: Vec<(f64, f64)>,
    /// Reference path loss β₀ in dB at 1 m.
    pub pathloss_ref_db: f64,
    /// User noise power in dB (linear = 10^(dB/10) W).
    pub noise_user_db: f64,
    /// Sensing noise power in dB.
    pub noise_sensing_db: f64,
    /// Coherence block length T (sample count).
    pub coherence_block: usize,
    /// Transmit power budget P in watts (linear).
    pub power_budget: f64,
    /// Per-user SINR thresholds γ̄_k (linear).
    pub sinr_thresholds: Vec<f64>,
    /// Master RNG seed.
    pub rng_seed: u64,
    /// Draw a seeded uniform phase for each complex gain instead of the
    /// deterministic zero-phase default.
    pub random_gain_phase: bool,
}

impl SystemConfig {
    /// Number of users `K`.
    pub fn num_users(&self) -> usize {
        self.user_placements.len()
    }

    /// Half element count Ñ so that `N = 2Ñ+1`.
    pub fn half_n(&self) -> i64 {
        (self.num_stars_elements as i64 - 1) / 2
    }

    pub fn half_m(&self) -> i64 {
        (self.num_bs_antennas as i64 - 1) / 2
    }

    pub fn half_q(&self) -> i64 {
        (self.num_fa_positions as i64 - 1) / 2
    }

    /// Linear user noise power σ_k².
    pub fn noise_user(&self) -> f64 {
        10f64.powf(self.noise_user_db / 10.0)
    }

    /// Linear sensing noise power σ_s².
    pub fn noise_sensing(&self) -> f64 {
        10f64.powf(self.noise_sensing_db / 10.0)
    }

    /// Physical aperture of the surface, D = (N-1)·d.
    pub fn stars_aperture(&self) -> f64 {
        (self.num_stars_elements as f64 - 1.0) * self.stars_spacing
    }

    /// Near/far-field boundary 2D²/λ of the surface.
    pub fn rayleigh_distance(&self) -> f64 {
        let d = self.stars_aperture();
        2.0 * d * d / self.wavelength
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("num_bs_antennas", self.num_bs_antennas),
            ("num_stars_elements", self.num_stars_elements),
            ("num_fa_positions", self.num_fa_positions),
        ] {
            if v == 0 || v % 2 == 0 {
                return Err(Error::Parameter(format!("{name} must be odd and >= 1, got {v}")));
            }
        }
        for (name, v) in [
            ("wavelength", self.wavelength),
            ("stars_spacing", self.stars_spacing),
            ("bs_spacing", self.bs_spacing),
            ("fa_spacing", self.fa_spacing),
            ("bs_range", self.bs_range),
            ("target_range", self.target_range),
        ] {
            if !(v > 0.0) {
                return Err(Error::Parameter(format!("{name} must be > 0, got {v}")));
            }
        }
        if self.power_budget < 0.0 {
            return Err(Error::Parameter("power_budget must be >= 0".into()));
        }
        if self.sinr_thresholds.len() != self.user_placements.len() {
            return Err(Error::Parameter(format!(
                "{} SINR thresholds for {} users",
                self.sinr_thresholds.len(),
                self.user_placements.len()
            )));
        }
        if self.sinr_thresholds.iter().any(|&g| g < 0.0) {
            return Err(Error::Parameter("SINR thresholds must be >= 0".into()));
        }
        let half_aperture = self.half_n() as f64 * self.stars_spacing;
        for (i, &(r, _)) in self.user_placements.iter().enumerate() {
            if r <= half_aperture {
                return Err(Error::Geometry(format!(
                    "user {i} range {r} m inside the surface half-aperture {half_aperture} m"
                )));
            }
        }
        if self.target_range <= half_aperture {
            return Err(Error::Geometry("target inside the surface half-aperture".into()));
        }
        // The movable positions themselves must also stay outside the array.
        let fa_extent = self.half_q() as f64 * self.fa_spacing;
        if self.target_range - fa_extent <= half_aperture {
            return Err(Error::Geometry("movable-position line reaches into the surface".into()));
        }
        if self.bs_range <= self.half_m() as f64 * self.bs_spacing {
            return Err(Error::Geometry("BS range inside its own half-aperture".into()));
        }
        Ok(())
    }
}

/// Near- or far-field phase profile of one array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SteeringKind {
    NearField,
    FarField,
}

/// Unit-modulus phase vector over a centered array.
#[derive(Debug, Clone)]
pub struct SteeringVector {
    pub entries: CVec,
    pub kind: SteeringKind,
}

/// Distance from the signed element `n` (spacing `d`) to a point at polar
/// `(r, θ)`: `√(r² + n²d² − 2 r n d cosθ)`.
pub fn element_distance(r: f64, theta: f64, n: i64, d: f64) -> Result<f64> {
    let nd = n as f64 * d;
    let sq = r * r + nd * nd - 2.0 * r * nd * theta.cos();
    if sq <= 0.0 {
        return Err(Error::Geometry(format!(
            "point (r={r}, θ={theta}) collapses onto element n={n} (spacing {d})"
        )));
    }
    Ok(sq.sqrt())
}

/// Polar coordinates of movable position `q` on a line centered at
/// `(r_0, θ_0)` with spacing `d_1`.
///
/// The arcsine argument can exceed 1 by a few ulps for q=0; it is clamped.
pub fn fa_position_polar(r0: f64, theta0: f64, q: i64, d1: f64) -> Result<(f64, f64)> {
    let rq = element_distance(r0, theta0, q, d1)?;
    let s = (r0 * theta0.sin() / rq).clamp(-1.0, 1.0);
    Ok((rq, s.asin()))
}

/// ∂r_n/∂r and ∂r_n/∂θ of `element_distance` at fixed n, d.
fn element_distance_grad(r: f64, theta: f64, n: i64, d: f64, rn: f64) -> (f64, f64) {
    let nd = n as f64 * d;
    let dr = (r - nd * theta.cos()) / rn;
    let dtheta = r * nd * theta.sin() / rn;
    (dr, dtheta)
}

/// `r_n - r` without the catastrophic cancellation of the naive difference:
/// `r_n² - r² = n²d² - 2 r n d cosθ`, so `r_n - r = (n²d² - 2 r n d cosθ) / (r_n + r)`.
fn element_distance_excess(r: f64, theta: f64, n: i64, d: f64, rn: f64) -> f64 {
    let nd = n as f64 * d;
    (nd * nd - 2.0 * r * nd * theta.cos()) / (rn + r)
}

/// Spherical-wave steering vector of the surface toward `(r, θ)`:
/// `[a]_n = exp(-j 2π/λ (r_n - r))`. The center entry is exactly 1.
pub fn near_field_steering(r: f64, theta: f64, cfg: &SystemConfig) -> Result<SteeringVector> {
    let k = 2.0 * std::f64::consts::PI / cfg.wavelength;
    let half = cfg.half_n();
    let mut entries = CVec::zeros(cfg.num_stars_elements);
    for (row, n) in (-half..=half).enumerate() {
        let rn = element_distance(r, theta, n, cfg.stars_spacing)?;
        entries[row] = C64::from_polar(1.0, -k * element_distance_excess(r, theta, n, cfg.stars_spacing, rn));
    }
    Ok(SteeringVector { entries, kind: SteeringKind::NearField })
}

/// Analytic ∂a/∂r and ∂a/∂θ of the near-field steering vector.
pub fn near_field_steering_grad(r: f64, theta: f64, cfg: &SystemConfig) -> Result<(CVec, CVec)> {
    let k = 2.0 * std::f64::consts::PI / cfg.wavelength;
    let half = cfg.half_n();
    let mut da_dr = CVec::zeros(cfg.num_stars_elements);
    let mut da_dth = CVec::zeros(cfg.num_stars_elements);
    for (row, n) in (-half..=half).enumerate() {
        let rn = element_distance(r, theta, n, cfg.stars_spacing)?;
        let a = C64::from_polar(1.0, -k * element_distance_excess(r, theta, n, cfg.stars_spacing, rn));
        let (drn_dr, drn_dth) = element_distance_grad(r, theta, n, cfg.stars_spacing, rn);
        let jk = C64::new(0.0, -k);
        da_dr[row] = a * jk * (drn_dr - 1.0);
        da_dth[row] = a * jk * drn_dth;
    }
    Ok((da_dr, da_dth))
}

/// Planar-wave steering vector over a centered array of `count` elements with
/// spacing `spacing`: `[b]_m = exp(+j 2π/λ m·spacing·cosθ)`.
pub fn far_field_steering_sized(
    theta: f64,
    count: usize,
    spacing: f64,
    wavelength: f64,
) -> SteeringVector {
    let k = 2.0 * std::f64::consts::PI / wavelength;
    let half = (count as i64 - 1) / 2;
    let mut entries = CVec::zeros(count);
    for (row, m) in (-half..=half).enumerate() {
        entries[row] = C64::from_polar(1.0, k * m as f64 * spacing * theta.cos());
    }
    SteeringVector { entries, kind: SteeringKind::FarField }
}

/// BS-side far-field steering vector (length `M`, spacing `d_s`).
pub fn far_field_steering(theta_s: f64, cfg: &SystemConfig) -> SteeringVector {
    far_field_steering_sized(theta_s, cfg.num_bs_antennas, cfg.bs_spacing, cfg.wavelength)
}

/// Complex path gain with magnitude `10^(-(β₀ + 20 log10 d)/20)`.
///
/// The phase is zero unless `phase` is supplied (seeded random-phase mode).
pub fn path_gain(distance: f64, beta0_db: f64, phase: Option<f64>) -> Result<C64> {
    if distance < 1.0 {
        return Err(Error::Parameter(format!(
            "path-gain distance {distance} m below the 1 m reference"
        )));
    }
    let loss_db = beta0_db + 20.0 * distance.log10();
    let mag = 10f64.powf(-loss_db / 20.0);
    Ok(C64::from_polar(mag, phase.unwrap_or(0.0)))
}

/// All channels of one instance, per movable position.
#[derive(Debug, Clone)]
pub struct ChannelSet {
    /// BS → surface far-field matrix, N×M, gain β_s included.
    pub h_br: CMat,
    /// Surface → user vectors, length N each, gains β_k included.
    pub h_ru: Vec<CVec>,
    /// Round-trip surface↔target matrices per position, gains β_q included.
    pub g: Vec<CMat>,
    /// Unit-gain Ġ_q = a aᵀ per position.
    pub g_dot: Vec<CMat>,
    /// ∂Ġ_q/∂r_q per position.
    pub dg_dr: Vec<CMat>,
    /// ∂Ġ_q/∂θ_q per position.
    pub dg_dtheta: Vec<CMat>,
    /// Complex gain β_q per position.
    pub beta_fa: Vec<C64>,
    /// Polar coordinates (r_q, θ_q) per position.
    pub fa_polar: Vec<(f64, f64)>,
}

impl ChannelSet {
    pub fn num_positions(&self) -> usize {
        self.g.len()
    }
}

/// Builds every channel of the instance from the configured geometry.
pub fn build_channels(cfg: &SystemConfig) -> Result<ChannelSet> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ 0x67656f6d); // per-purpose stream
    let draw_phase = |rng: &mut ChaCha8Rng| -> Option<f64> {
        cfg.random_gain_phase
            .then(|| rng.gen_range(0.0..2.0 * std::f64::consts::PI))
    };

    // BS → surface: rank-one outer product of the two far-field vectors.
    let b_n = far_field_steering_sized(
        cfg.bs_angle,
        cfg.num_stars_elements,
        cfg.stars_spacing,
        cfg.wavelength,
    );
    let b_m = far_field_steering(cfg.bs_angle, cfg);
    let beta_s = path_gain(cfg.bs_range, cfg.pathloss_ref_db, draw_phase(&mut rng))?;
    let h_br = &b_n.entries * b_m.entries.transpose() * beta_s;

    // Surface → users.
    let mut h_ru = Vec::with_capacity(cfg.num_users());
    for &(rk, thk) in &cfg.user_placements {
        let beta_k = path_gain(rk, cfg.pathloss_ref_db, draw_phase(&mut rng))?;
        let a = near_field_steering(rk, thk, cfg)?;
        h_ru.push(a.entries * beta_k);
    }

    // Surface ↔ target, one matrix per movable position.
    let half_q = cfg.half_q();
    let mut g = Vec::new();
    let mut g_dot = Vec::new();
    let mut dg_dr = Vec::new();
    let mut dg_dtheta = Vec::new();
    let mut beta_fa = Vec::new();
    let mut fa_polar = Vec::new();
    for q in -half_q..=half_q {
        let (rq, thq) = fa_position_polar(cfg.target_range, cfg.target_angle, q, cfg.fa_spacing)?;
        let beta_q = path_gain(rq, cfg.pathloss_ref_db, draw_phase(&mut rng))?;
        let a = near_field_steering(rq, thq, cfg)?.entries;
        let (da_dr, da_dth) = near_field_steering_grad(rq, thq, cfg)?;
        let gd = &a * a.transpose();
        g.push(&gd * beta_q);
        // Product rule on a aᵀ.
        dg_dr.push(&da_dr * a.transpose() + &a * da_dr.transpose());
        dg_dtheta.push(&da_dth * a.transpose() + &a * da_dth.transpose());
        g_dot.push(gd);
        beta_fa.push(beta_q);
        fa_polar.push((rq, thq));
    }

    Ok(ChannelSet { h_br, h_ru, g, g_dot, dg_dr, dg_dtheta, beta_fa, fa_polar })
}
