//! Closed-form Fisher information blocks and the range/angle Cramér-Rao
//! bound for the active movable position.
//!
//! The unknown parameter vector is ξ = (r_q, θ_q, β_qʳ, β_qⁱ). With the
//! reflected-path matrix Λ = Φ_r H_br R_x H_brᴴ Φ_rᴴ, every entry of the FIM
//! reduces to a trace of the form Tr(Ġ_lᴴ Ġ_p Λ), which is linear in Λ —
//! the property the convex subproblems rely on.

use crate::error::{Error, Result};
use crate::geometry::{ChannelSet, SystemConfig};
use crate::linalg;
use crate::optimizer::StarsProfile;
use crate::{C64, CMat};
use nalgebra::{Matrix2, Matrix4};

/// 2×2 blocks of the 4×4 information matrix, ordered (r_q, θ_q | β_qʳ, β_qⁱ).
#[derive(Debug, Clone)]
pub struct FimBlocks {
    pub j11: Matrix2<f64>,
    pub j12: Matrix2<f64>,
    /// Diagonal with equal entries.
    pub j22: Matrix2<f64>,
    pub q_index: i64,
    pub noise_sensing: f64,
    pub block_length: usize,
}

impl FimBlocks {
    /// Assembles the full symmetric 4×4 information matrix.
    pub fn assemble(&self) -> Matrix4<f64> {
        let mut j = Matrix4::zeros();
        for r in 0..2 {
            for c in 0..2 {
                j[(r, c)] = self.j11[(r, c)];
                j[(r, c + 2)] = self.j12[(r, c)];
                j[(r + 2, c)] = self.j12[(c, r)];
                j[(r + 2, c + 2)] = self.j22[(r, c)];
            }
        }
        j
    }
}

/// CRB matrix for (r_q, θ_q) and its diagonal square roots.
#[derive(Debug, Clone)]
pub struct CrbResult {
    pub crb: Matrix2<f64>,
    /// √CRB of the range estimate, meters.
    pub rcrb_range: f64,
    /// √CRB of the angle estimate, radians.
    pub rcrb_angle: f64,
}

impl CrbResult {
    pub fn trace(&self) -> f64 {
        self.crb.trace()
    }
}

fn trace_prod(a: &CMat, b: &CMat) -> C64 {
    // Tr(A B) without forming the product.
    let (n, m) = a.shape();
    debug_assert_eq!((m, n), b.shape());
    let mut acc = C64::new(0.0, 0.0);
    for i in 0..n {
        for k in 0..m {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Closed-form FIM blocks for movable position `q` (signed index) under
/// transmit covariance `rx` and reflection profile `stars`.
pub fn fim_blocks(
    channels: &ChannelSet,
    stars: &StarsProfile,
    rx: &CMat,
    q: i64,
    cfg: &SystemConfig,
) -> Result<FimBlocks> {
    let m = cfg.num_bs_antennas;
    if rx.shape() != (m, m) {
        return Err(Error::Dimension(format!(
            "Rx is {:?}, expected {m}x{m}",
            rx.shape()
        )));
    }
    if linalg::hermitian_defect(rx) > 1e-9 * (1.0 + linalg::max_abs(rx)) {
        return Err(Error::NotPsd("Rx is not Hermitian".into()));
    }
    let min_eig = linalg::hermitian_min_eig(rx);
    if min_eig < -1e-9 * (1.0 + linalg::max_abs(rx)) {
        return Err(Error::NotPsd(format!("Rx has eigenvalue {min_eig}")));
    }
    stars.check_coupling()?;

    let lambda = reflected_covariance(channels, stars, rx);
    let row = signed_to_row(channels, q)?;
    fim_blocks_from_lambda(channels, &lambda, row, cfg)
}

/// FIM blocks evaluated directly from a given Λ (used both by the closed
/// form above and by the convex subproblem builders).
pub fn fim_blocks_from_lambda(
    channels: &ChannelSet,
    lambda: &CMat,
    row: usize,
    cfg: &SystemConfig,
) -> Result<FimBlocks> {
    let n = cfg.num_stars_elements;
    if lambda.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "Lambda is {:?}, expected {n}x{n}",
            lambda.shape()
        )));
    }
    let t = cfg.coherence_block as f64;
    let sigma2 = cfg.noise_sensing();
    let beta = channels.beta_fa[row];
    let gd = &channels.g_dot[row];
    let gr = &channels.dg_dr[row];
    let gth = &channels.dg_dtheta[row];

    let s = |l: &CMat, p: &CMat| -> C64 { trace_prod(&(l.adjoint() * p), lambda) };

    let c1 = 2.0 * beta.norm_sqr() * t / sigma2;
    let c2 = 2.0 * t / sigma2;

    let s_rr = s(gr, gr);
    let s_rt = s(gr, gth);
    let s_tt = s(gth, gth);
    let j11 = Matrix2::new(s_rr.re, s_rt.re, s_rt.re, s_tt.re) * c1;

    let t_r = beta.conj() * s(gr, gd);
    let t_th = beta.conj() * s(gth, gd);
    let j12 = Matrix2::new(t_r.re, -t_r.im, t_th.re, -t_th.im) * c2;

    let s_qq = s(gd, gd).re;
    let j22 = Matrix2::identity() * (c2 * s_qq);

    Ok(FimBlocks {
        j11,
        j12,
        j22,
        q_index: row as i64 - channels.num_positions() as i64 / 2,
        noise_sensing: sigma2,
        block_length: cfg.coherence_block,
    })
}

/// Λ = Φ_r H_br R_x H_brᴴ Φ_rᴴ, the surface-side covariance of the probing
/// signal as seen on the reflection path.
pub fn reflected_covariance(channels: &ChannelSet, stars: &StarsProfile, rx: &CMat) -> CMat {
    let f = stars.phi_r() * &channels.h_br;
    &f * rx * f.adjoint()
}

/// Maps a signed position index to the row used in `ChannelSet` vectors.
pub fn signed_to_row(channels: &ChannelSet, q: i64) -> Result<usize> {
    let half = channels.num_positions() as i64 / 2;
    if q < -half || q > half {
        return Err(Error::Parameter(format!("position index {q} outside ±{half}")));
    }
    Ok((q + half) as usize)
}

/// Schur-complement CRB for (r_q, θ_q) from the assembled blocks.
pub fn crb_from_fim(blocks: &FimBlocks) -> Result<CrbResult> {
    let j22_det = blocks.j22.determinant();
    let scale = blocks.j22.norm().max(blocks.j11.norm());
    if j22_det.abs() <= 1e-14 * scale * scale {
        return Err(Error::Unidentifiable {
            reason: "gain block of the FIM is singular".into(),
            direction: vec![0.0, 0.0, 1.0, 0.0],
        });
    }
    let j22_inv = blocks.j22.try_inverse().unwrap();
    let schur = blocks.j11 - blocks.j12 * j22_inv * blocks.j12.transpose();
    invert_schur(&schur)
}

fn invert_schur(schur: &Matrix2<f64>) -> Result<CrbResult> {
    let det = schur.determinant();
    if det <= 1e-300 || schur[(0, 0)] <= 0.0 || schur[(1, 1)] <= 0.0 {
        // Near-null direction = eigenvector of the smallest eigenvalue.
        let eig = schur.symmetric_eigen();
        let idx = if eig.eigenvalues[0] <= eig.eigenvalues[1] { 0 } else { 1 };
        return Err(Error::Unidentifiable {
            reason: "Schur complement of the FIM is not positive definite".into(),
            direction: eig.eigenvectors.column(idx).iter().copied().collect(),
        });
    }
    let crb = Matrix2::new(schur[(1, 1)], -schur[(0, 1)], -schur[(1, 0)], schur[(0, 0)]) / det;
    Ok(CrbResult {
        crb,
        rcrb_range: crb[(0, 0)].max(0.0).sqrt(),
        rcrb_angle: crb[(1, 1)].max(0.0).sqrt(),
    })
}

/// Tr(U⁻¹) for a positive-definite 2×2 matrix.
pub fn crb_trace_objective(u: &Matrix2<f64>) -> Result<f64> {
    let det = u.determinant();
    if det <= 0.0 || u.trace() <= 0.0 {
        return Err(Error::NotPsd(format!("U must be positive definite, det {det}")));
    }
    Ok(u.trace() / det)
}

/// Convenience: closed-form CRB for signed position `q` of the instance.
pub fn crb_for_position(
    channels: &ChannelSet,
    stars: &StarsProfile,
    rx: &CMat,
    q: i64,
    cfg: &SystemConfig,
) -> Result<CrbResult> {
    crb_from_fim(&fim_blocks(channels, stars, rx, q, cfg)?)
}
