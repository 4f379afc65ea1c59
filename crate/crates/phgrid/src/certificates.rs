//! Dissipation-based stability certificates.
//!
//! Along trajectories with terminal voltages frozen at their steady values,
//! the shifted Hamiltonian of one generator obeys `dĤ/dt = zᵀ𝒫z` with
//! `z = ∂Ĥ/∂ξ̂`, so negative definiteness of the constant matrix 𝒫 certifies
//! global asymptotic stability of the steady state. The certificate reduces
//! to a single scalar comparison between stored steady-state magnetic energy
//! and dissipation: `(Lss Ix*)² + (Lss Iy*)² < 4 D (r + R)`, where `R` is a
//! virtual series resistance acting on current deviations. When the bare
//! condition fails, [`sssc_min_resistance`] sizes the compensator that
//! restores it.

use nalgebra::Matrix5;

use crate::equilibrium::GeneratorEquilibrium;
use crate::error::CertificateError;
use crate::machine::GeneratorParams;
use crate::network::{assemble, operating_point_residuals, NetworkDescription, OperatingPoint};

/// Certificate evaluation for one generator.
#[derive(Debug, Clone, PartialEq)]
pub struct MachineCertificate {
    /// Stored-energy side `(Lss Ix*)² + (Lss Iy*)²` (Wb²).
    pub lhs: f64,
    /// Dissipation side `4 D (r + R_sssc)` (Wb²).
    pub rhs: f64,
    /// `rhs - lhs`; positive margins certify stability.
    pub margin: f64,
    /// Whether the certificate holds (strict margin and a dissipative field
    /// winding, so the dissipation matrix is strictly negative definite).
    pub holds: bool,
    /// Eigenvalues of the dissipation matrix, ascending.
    pub p_eigenvalues: [f64; 5],
    /// Smallest virtual series resistance that would certify stability (Ω).
    pub r_min: f64,
}

/// Certificate evaluation for a whole network, one entry per generator in
/// description order.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificateReport {
    pub machines: Vec<MachineCertificate>,
    /// Conjunction over all machines.
    pub all_hold: bool,
}

/// The symmetric matrix 𝒫 governing shifted-energy decay, in the gradient
/// coordinates `(ω̂-component, λ̂x, λ̂y, λ̂z, λ̂f)`:
///
/// ```text
///     | -D        -½Lss Iy*   ½Lss Ix*   0    0   |
///     | -½Lss Iy* -r'         0          0    0   |
/// 𝒫 = |  ½Lss Ix*  0         -r'         0    0   |
///     |  0         0          0         -r'   0   |
///     |  0         0          0          0   -r_f |
/// ```
///
/// with `r' = r + R_sssc`, the virtual series resistance folded into the
/// stator entries.
pub fn dissipation_matrix(
    eq: &GeneratorEquilibrium,
    p: &GeneratorParams,
    r_sssc: f64,
) -> Matrix5<f64> {
    let rp = p.r + r_sssc;
    let half_y = 0.5 * p.l_ss() * eq.i_y_star;
    let half_x = 0.5 * p.l_ss() * eq.i_x_star;
    let mut m = Matrix5::zeros();
    m[(0, 0)] = -p.d;
    m[(1, 1)] = -rp;
    m[(2, 2)] = -rp;
    m[(3, 3)] = -rp;
    m[(4, 4)] = -p.r_f;
    m[(0, 1)] = -half_y;
    m[(1, 0)] = -half_y;
    m[(0, 2)] = half_x;
    m[(2, 0)] = half_x;
    m
}

/// Closed form for the two eigenvalues of 𝒫 coupling the velocity and
/// stator directions:
///
/// ```text
/// λ₄,₅ = -(D + r')/2 ± ½ sqrt(D² - 2Dr' + r'² + (Lss Ix*)² + (Lss Iy*)²)
/// ```
///
/// The remaining three are `-r'` (twice) and `-r_f`. Returned as
/// `(λ_minus, λ_plus)` with `λ_minus ≤ λ_plus`.
pub fn extreme_eigenvalues(
    eq: &GeneratorEquilibrium,
    p: &GeneratorParams,
    r_sssc: f64,
) -> (f64, f64) {
    let rp = p.r + r_sssc;
    let sx = p.l_ss() * eq.i_x_star;
    let sy = p.l_ss() * eq.i_y_star;
    let root = (p.d * p.d - 2.0 * p.d * rp + rp * rp + sx * sx + sy * sy).sqrt();
    (-0.5 * (p.d + rp) - 0.5 * root, -0.5 * (p.d + rp) + 0.5 * root)
}

/// Smallest virtual series resistance certifying stability:
/// `((Lss Ix*)² + (Lss Iy*)²) / (4D) - r`, floored at zero.
pub fn sssc_min_resistance(
    eq: &GeneratorEquilibrium,
    p: &GeneratorParams,
) -> Result<f64, CertificateError> {
    if p.d <= 0.0 {
        return Err(CertificateError::NonPositiveDamping { d: p.d });
    }
    let sx = p.l_ss() * eq.i_x_star;
    let sy = p.l_ss() * eq.i_y_star;
    Ok(((sx * sx + sy * sy) / (4.0 * p.d) - p.r).max(0.0))
}

/// Evaluates the stability certificate for one generator with a virtual
/// series resistance `r_sssc` at its terminals.
pub fn single_machine_certificate(
    eq: &GeneratorEquilibrium,
    p: &GeneratorParams,
    r_sssc: f64,
) -> Result<MachineCertificate, CertificateError> {
    if p.d <= 0.0 {
        return Err(CertificateError::NonPositiveDamping { d: p.d });
    }
    let sx = p.l_ss() * eq.i_x_star;
    let sy = p.l_ss() * eq.i_y_star;
    let lhs = sx * sx + sy * sy;
    let rhs = 4.0 * p.d * (p.r + r_sssc);
    let margin = rhs - lhs;
    // A lossless field winding leaves a zero eigenvalue, so strictness also
    // needs r_f > 0; the field deviation is structurally zero regardless.
    let holds = margin > 0.0 && p.r_f > 0.0;
    let mut eig: Vec<f64> = dissipation_matrix(eq, p, r_sssc)
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .collect();
    eig.sort_by(|a, b| a.total_cmp(b));
    Ok(MachineCertificate {
        lhs,
        rhs,
        margin,
        holds,
        p_eigenvalues: [eig[0], eig[1], eig[2], eig[3], eig[4]],
        r_min: sssc_min_resistance(eq, p)?,
    })
}

/// Evaluates the stability certificate for every generator in a network and
/// combines the verdicts.
///
/// Stability of the interconnection follows from all machines certifying
/// individually, so the overall verdict is the conjunction. The operating
/// point is audited against the assembled network first; a stale or
/// hand-edited point is rejected with the name of the worst violated
/// balance.
pub fn multi_machine_certificate(
    nd: &NetworkDescription,
    op: &OperatingPoint,
) -> Result<CertificateReport, CertificateError> {
    let cs = assemble(nd)?;
    if op.generators.len() != nd.generators.len() {
        return Err(CertificateError::InconsistentOperatingPoint {
            what: format!(
                "generator count ({} in the operating point, {} in the network)",
                op.generators.len(),
                nd.generators.len()
            ),
            residual: f64::INFINITY,
            limit: 0.0,
        });
    }

    const LIMIT: f64 = 1e-8;
    let mut worst: Option<(String, f64)> = None;
    for entry in operating_point_residuals(&cs, op) {
        let relative = entry.residual / entry.scale;
        if relative > worst.as_ref().map_or(LIMIT, |(_, w)| *w) {
            worst = Some((entry.what, relative));
        }
    }
    if let Some((what, relative)) = worst {
        return Err(CertificateError::InconsistentOperatingPoint {
            what,
            residual: relative,
            limit: LIMIT,
        });
    }

    let mut machines = Vec::with_capacity(nd.generators.len());
    for (g, eq) in nd.generators.iter().zip(&op.generators) {
        machines.push(single_machine_certificate(eq, &g.params, g.r_sssc)?);
    }
    let all_hold = machines.iter().all(|m| m.holds);
    Ok(CertificateReport { machines, all_hold })
}
