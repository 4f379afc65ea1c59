//! Steady-state analysis of a single generator at given terminal voltages.
//!
//! At a steady state with rotor velocity `ω` and constant rotor-frame
//! terminal voltages `(Vx*, Vy*, Vz*)` the current equations become algebraic:
//!
//! ```text
//! 0 = -r Ix* - ω Lss Iy*            + Vx*
//! 0 = -r Iy* + ω Lss Ix* + ω L_m I_f + Vy*
//! 0 = -r Iz*                        + Vz*
//! ```
//!
//! These have the closed-form solution implemented by
//! [`equilibrium_currents`]. Substituting the `Iy*` expression into the
//! torque balance turns `dω/dt = 0` into a cubic in `ω`, analyzed by
//! [`omega_equilibria`]; picking the torque from [`consistent_torque`]
//! guarantees a chosen `ω_s` is among its roots.

use nalgebra::{Complex, Matrix3};

use crate::error::EquilibriumError;
use crate::machine::{inductance_xyz, GeneratorParams};

/// A self-consistent steady state of one generator: currents, terminal
/// voltages, torque, and the field current that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorEquilibrium {
    /// Steady rotor velocity (rad/s).
    pub omega_s: f64,
    /// Steady stator currents (A).
    pub i_x_star: f64,
    pub i_y_star: f64,
    pub i_z_star: f64,
    /// Terminal voltages the currents respond to (V).
    pub v_x_star: f64,
    pub v_y_star: f64,
    pub v_z_star: f64,
    /// Mechanical torque balancing the electrical torque at `omega_s` (N m).
    pub tau_m_star: f64,
    /// Field current used when solving (A), copied from the parameters.
    pub i_f: f64,
    /// Flux linkages `(λx, λy, λz, λf)` at the steady state (Wb).
    pub lambda_star: [f64; 4],
}

/// Root structure of the steady-state velocity equation for a fixed
/// mechanical torque, plus the printed uniqueness indicator.
///
/// `real_root_count` counts genuine steady velocities: real roots of the
/// cubic with multiplicity collapsed and, when `r = 0`, with the root
/// `ω = 0` discarded. That root is an artifact of clearing the denominator
/// `r² + ω²Lss²`, which vanishes there, so the current closed forms it
/// would need are undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct UniquenessReport {
    /// Signed value of the uniqueness indicator
    /// `-4D²r² - 4D I_f L_m r (I_f L_m + Lss Ix*) + (I_f L_m Lss Iy*)²`,
    /// evaluated at the largest-magnitude genuine root.
    pub bcond_value: f64,
    /// Whether the indicator is strictly negative, the printed test for a
    /// unique real steady velocity.
    pub bcond_holds: bool,
    /// Number of genuine steady velocities found numerically.
    pub real_root_count: usize,
    /// Genuine steady velocities, ascending (rad/s).
    pub roots: Vec<f64>,
    /// Real cubic roots discarded as artifacts of denominator clearing.
    pub spurious_roots: Vec<f64>,
    /// Root count the indicator's sign predicts (1, 2, or 3).
    pub predicted_root_count: usize,
    /// True when prediction and numeric count differ; every such case is
    /// also logged at warn level and never silently accepted.
    pub disagreement: bool,
    /// True when the cubic's leading coefficient vanished and a
    /// reduced-degree polynomial was solved instead.
    pub reduced_degree: bool,
}

/// Closed-form steady currents at rotor velocity `omega` under terminal
/// voltages `v_star = (Vx*, Vy*, Vz*)`:
///
/// ```text
/// Ix* = (-ω² L_m Lss I_f - ω Lss Vy* + r Vx*) / (r² + ω² Lss²)
/// Iy* = ( ω Lss Vx* + ω r L_m I_f + r Vy*)    / (r² + ω² Lss²)
/// Iz* = Vz* / r
/// ```
///
/// With a lossless stator (`r = 0`) the z channel has no steady state unless
/// `Vz* = 0`, in which case `Iz*` is taken as 0 by convention.
pub fn equilibrium_currents(
    omega: f64,
    v_star: [f64; 3],
    p: &GeneratorParams,
) -> Result<(f64, f64, f64), EquilibriumError> {
    let l_ss = p.l_ss();
    let l_m = p.l_m();
    let den = p.r * p.r + omega * omega * l_ss * l_ss;
    if den == 0.0 {
        return Err(EquilibriumError::Degenerate {
            what: "equilibrium_currents",
            why: format!(
                "r² + ω²Lss² = 0 at ω = {omega}; stator currents are not determined"
            ),
        });
    }
    let i_x = (-omega * omega * l_m * l_ss * p.i_f - omega * l_ss * v_star[1] + p.r * v_star[0])
        / den;
    let i_y = (omega * l_ss * v_star[0] + omega * p.r * l_m * p.i_f + p.r * v_star[1]) / den;
    let i_z = if p.r > 0.0 {
        v_star[2] / p.r
    } else if v_star[2] == 0.0 {
        0.0
    } else {
        return Err(EquilibriumError::NoEquilibrium {
            why: format!(
                "z channel cannot balance Vz* = {} V with zero stator resistance",
                v_star[2]
            ),
        });
    };
    Ok((i_x, i_y, i_z))
}

/// Mechanical torque making `omega_s` a steady velocity under `v_star`:
/// `τm* = L_m I_f Iy*(ω_s) + D ω_s`.
pub fn consistent_torque(
    omega_s: f64,
    v_star: [f64; 3],
    p: &GeneratorParams,
) -> Result<f64, EquilibriumError> {
    let (_, i_y, _) = equilibrium_currents(omega_s, v_star, p)?;
    Ok(p.l_m() * p.i_f * i_y + p.d * omega_s)
}

/// Field current making `i_x_star` the steady x-axis current at `omega_s`
/// under `v_star`, by exact linear inversion of the `Ix*` closed form:
///
/// ```text
/// I_f = (-Ix* (r² + ω² Lss²) - ω Lss Vy* + r Vx*) / (ω² L_m Lss)
/// ```
///
/// Valid for any stator resistance; only `Vx*` and `Vy*` of the voltage
/// triple enter.
pub fn consistent_field_current(
    i_x_star: f64,
    v_star: [f64; 3],
    omega_s: f64,
    p: &GeneratorParams,
) -> Result<f64, EquilibriumError> {
    let l_ss = p.l_ss();
    let l_m = p.l_m();
    let coeff = omega_s * omega_s * l_m * l_ss;
    if coeff.abs() < f64::EPSILON * l_ss * l_ss {
        return Err(EquilibriumError::Degenerate {
            what: "consistent_field_current",
            why: format!("ω²·L_m·Lss = {coeff:.3e} is numerically zero; cannot invert for I_f"),
        });
    }
    let den = p.r * p.r + omega_s * omega_s * l_ss * l_ss;
    Ok((-i_x_star * den - omega_s * l_ss * v_star[1] + p.r * v_star[0]) / coeff)
}

/// Assembles the full steady state at `omega_s` under `v_star`: closed-form
/// currents, the consistent torque, and the flux view.
pub fn solve_generator_equilibrium(
    omega_s: f64,
    v_star: [f64; 3],
    p: &GeneratorParams,
) -> Result<GeneratorEquilibrium, EquilibriumError> {
    let (i_x, i_y, i_z) = equilibrium_currents(omega_s, v_star, p)?;
    let tau_m = p.l_m() * p.i_f * i_y + p.d * omega_s;
    let lam = inductance_xyz(p) * nalgebra::Vector4::new(i_x, i_y, i_z, p.i_f);
    Ok(GeneratorEquilibrium {
        omega_s,
        i_x_star: i_x,
        i_y_star: i_y,
        i_z_star: i_z,
        v_x_star: v_star[0],
        v_y_star: v_star[1],
        v_z_star: v_star[2],
        tau_m_star: tau_m,
        i_f: p.i_f,
        lambda_star: [lam[0], lam[1], lam[2], lam[3]],
    })
}

/// Uniqueness indicator evaluated at steady currents `(ix, iy)`.
fn indicator(i_x: f64, i_y: f64, p: &GeneratorParams) -> f64 {
    let (d, r, l_m, l_ss) = (p.d, p.r, p.l_m(), p.l_ss());
    let fm = p.i_f * l_m;
    -4.0 * d * d * r * r - 4.0 * d * fm * r * (fm + l_ss * i_x)
        + (fm * l_ss * i_y) * (fm * l_ss * i_y)
}

/// All real solutions of `dω/dt = 0` for a fixed mechanical torque, found by
/// clearing the denominator of the `Iy*` closed form, which leaves the cubic
///
/// ```text
/// -D Lss² ω³ + τm Lss² ω² - (D r² + L_m I_f Lss Vx* + r L_m² I_f²) ω
///   + τm r² - r L_m I_f Vy* = 0
/// ```
///
/// solved through the companion matrix. Roots closer than 1e-7 relative are
/// merged; at `r = 0` the cleared denominator vanishes at `ω = 0`, so that
/// root is reported separately as spurious rather than as a steady velocity.
///
/// The report carries the signed uniqueness indicator next to the numeric
/// root count; the numeric count is authoritative and any mismatch with the
/// indicator's prediction is flagged and logged.
pub fn omega_equilibria(tau_m: f64, v_star: [f64; 3], p: &GeneratorParams) -> UniquenessReport {
    let l_ss = p.l_ss();
    let l_m = p.l_m();
    let c3 = -p.d * l_ss * l_ss;
    let c2 = tau_m * l_ss * l_ss;
    let c1 = -(p.d * p.r * p.r + l_m * p.i_f * l_ss * v_star[0] + p.r * l_m * l_m * p.i_f * p.i_f);
    let c0 = tau_m * p.r * p.r - p.r * l_m * p.i_f * v_star[1];

    let scale = c3.abs().max(c2.abs()).max(c1.abs()).max(c0.abs());
    let reduced_degree = scale == 0.0 || c3.abs() < 1e-300 * scale.max(1.0);
    let mut real_roots = if reduced_degree {
        polynomial_real_roots(&[c0, c1, c2])
    } else {
        polynomial_real_roots(&[c0, c1, c2, c3])
    };
    real_roots.sort_by(|a, b| a.total_cmp(b));

    // Merge near-coincident roots (multiplicity collapse).
    let mut merged: Vec<f64> = Vec::with_capacity(real_roots.len());
    for root in real_roots {
        match merged.last() {
            Some(&last) if (root - last).abs() <= 1e-7 * last.abs().max(root.abs()).max(1.0) => {}
            _ => merged.push(root),
        }
    }

    // A root where the cleared denominator r² + ω²Lss² vanishes solves the
    // polynomial but not the original rational equation.
    let spurious_roots: Vec<f64> = if p.r == 0.0 {
        merged
            .iter()
            .copied()
            .filter(|w| w.abs() <= 1e-9 * merged.iter().fold(1.0f64, |m, r| m.max(r.abs())))
            .collect()
    } else {
        Vec::new()
    };
    let roots: Vec<f64> = merged
        .iter()
        .copied()
        .filter(|w| !spurious_roots.contains(w))
        .collect();

    let eval_at = roots
        .iter()
        .copied()
        .max_by(|a, b| a.abs().total_cmp(&b.abs()));
    let bcond_value = match eval_at {
        Some(w) => match equilibrium_currents(w, v_star, p) {
            Ok((ix, iy, _)) => indicator(ix, iy, p),
            Err(_) => f64::NAN,
        },
        None => f64::NAN,
    };
    let bcond_holds = bcond_value < 0.0;
    let predicted_root_count = if bcond_value < 0.0 {
        1
    } else if bcond_value == 0.0 {
        2
    } else {
        3
    };
    let real_root_count = roots.len();
    let disagreement = !bcond_value.is_finite() || predicted_root_count != real_root_count;
    if disagreement {
        log::warn!(
            "uniqueness indicator {bcond_value:.6e} predicts {predicted_root_count} steady \
             velocities but {real_root_count} found (roots {roots:?}, spurious {spurious_roots:?})"
        );
    }

    UniquenessReport {
        bcond_value,
        bcond_holds,
        real_root_count,
        roots,
        spurious_roots,
        predicted_root_count,
        disagreement,
        reduced_degree,
    }
}

/// Real roots of `Σ coeffs[k] ωᵏ`, by companion-matrix eigenvalues with one
/// Newton polish per root. Trailing zero leading coefficients are trimmed.
fn polynomial_real_roots(coeffs: &[f64]) -> Vec<f64> {
    let mut c: Vec<f64> = coeffs.to_vec();
    while let Some(&last) = c.last() {
        if last == 0.0 && c.len() > 1 {
            c.pop();
        } else {
            break;
        }
    }
    let eval = |w: f64| -> (f64, f64) {
        let mut f = 0.0;
        let mut df = 0.0;
        for &ck in c.iter().rev() {
            df = df * w + f;
            f = f * w + ck;
        }
        (f, df)
    };
    let deg = c.len() - 1;
    let complex_roots: Vec<Complex<f64>> = match deg {
        0 => Vec::new(),
        1 => vec![Complex::new(-c[0] / c[1], 0.0)],
        2 => {
            let (a, b, cc) = (c[2], c[1], c[0]);
            let disc = Complex::new(b * b - 4.0 * a * cc, 0.0).sqrt();
            vec![
                (Complex::new(-b, 0.0) + disc) / (2.0 * a),
                (Complex::new(-b, 0.0) - disc) / (2.0 * a),
            ]
        }
        3 => {
            let (a2, a1, a0) = (c[2] / c[3], c[1] / c[3], c[0] / c[3]);
            let companion = Matrix3::new(
                0.0, 0.0, -a0, //
                1.0, 0.0, -a1, //
                0.0, 1.0, -a2,
            );
            companion.complex_eigenvalues().iter().copied().collect()
        }
        _ => unreachable!("only degrees up to 3 arise"),
    };
    let magnitude = complex_roots
        .iter()
        .fold(1.0f64, |m, z| m.max(z.norm()));
    let mut real: Vec<f64> = Vec::new();
    for z in complex_roots {
        if z.im.abs() > 1e-9 * magnitude {
            continue;
        }
        let mut w = z.re;
        for _ in 0..3 {
            let (f, df) = eval(w);
            if f == 0.0 || df == 0.0 {
                break;
            }
            let step = f / df;
            if !step.is_finite() || step.abs() > 0.1 * magnitude {
                break;
            }
            w -= step;
        }
        real.push(w);
    }
    real
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use nalgebra::{Matrix2, Vector2};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const OMEGA_60: f64 = 2.0 * std::f64::consts::PI * 60.0;

    fn demo_gen(l_s: f64, d: f64, i_f: f64) -> GeneratorParams {
        GeneratorParams {
            m: 33267.0,
            d,
            r: 0.0,
            r_f: 0.05,
            l_s,
            l_s0: 0.0,
            l_sf: l_s * (2.0f64 / 3.0).sqrt(),
            l_f: 2.0 * l_s,
            i_f,
        }
        .validated()
        .unwrap()
    }

    fn lossy_gen(rng: &mut ChaCha8Rng) -> GeneratorParams {
        let l_s: f64 = rng.gen_range(0.05..2.0);
        let l_s0: f64 = rng.gen_range(0.0..0.3 * l_s);
        let l_ss = l_s + 2.0 * l_s0;
        GeneratorParams {
            m: rng.gen_range(1e3..1e5),
            d: rng.gen_range(1e4..1e7),
            r: rng.gen_range(0.01..2.0),
            r_f: rng.gen_range(0.0..1.0),
            l_s,
            l_s0,
            // Keeps L_m = sqrt(3/2) L_sf below sqrt(L_f Lss) = sqrt(2) Lss.
            l_sf: rng.gen_range(0.1..0.9) * l_ss * (2.0f64 / 1.5).sqrt(),
            l_f: 2.0 * l_ss,
            i_f: rng.gen_range(-5e3..5e3),
        }
        .validated()
        .unwrap()
    }

    #[test]
    fn lossless_quadrature_current_matches_demo() {
        // Machine 1: Iy* = Vx*/(ω Lss) at r = 0.
        let p1 = demo_gen(0.2049, 1.25e6, -3646.7);
        let (_, iy1, _) = equilibrium_currents(OMEGA_60, [-17.56e3, 280.16e3, 0.0], &p1).unwrap();
        assert_relative_eq!(iy1, -227.33, max_relative = 1e-3);
        assert_relative_eq!(iy1, -17.56e3 / (OMEGA_60 * 0.2049), max_relative = 1e-12);

        let p2 = demo_gen(1.2570, 0.68e6, -594.4);
        let (_, iy2, _) = equilibrium_currents(OMEGA_60, [-24.14e3, 278.76e3, 0.0], &p2).unwrap();
        assert_relative_eq!(iy2, -50.9402, max_relative = 1e-3);
    }

    #[test]
    fn zero_sources_zero_currents() {
        let mut p = demo_gen(0.3, 1e6, 0.0);
        p.r = 0.4;
        let (ix, iy, iz) = equilibrium_currents(OMEGA_60, [0.0, 0.0, 0.0], &p).unwrap();
        assert_eq!((ix, iy, iz), (0.0, 0.0, 0.0));
    }

    #[test]
    fn z_channel_conventions() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = lossy_gen(&mut rng);
        let (_, _, iz) = equilibrium_currents(OMEGA_60, [1.0, 2.0, 42.0], &p).unwrap();
        assert_relative_eq!(iz, 42.0 / p.r, max_relative = 1e-14);

        let lossless = demo_gen(0.3, 1e6, -100.0);
        let (_, _, iz0) = equilibrium_currents(OMEGA_60, [1.0, 2.0, 0.0], &lossless).unwrap();
        assert_eq!(iz0, 0.0);
        assert!(matches!(
            equilibrium_currents(OMEGA_60, [1.0, 2.0, 5.0], &lossless),
            Err(EquilibriumError::NoEquilibrium { .. })
        ));
        assert!(matches!(
            equilibrium_currents(0.0, [1.0, 2.0, 0.0], &lossless),
            Err(EquilibriumError::Degenerate { .. })
        ));
    }

    /// Oracle: the closed forms must agree with a direct 2x2 linear solve of
    /// the steady-state x/y equations.
    #[test]
    fn closed_form_matches_linear_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..500 {
            let p = lossy_gen(&mut rng);
            let omega: f64 = rng.gen_range(-500.0..500.0);
            let v = [
                rng.gen_range(-3e5..3e5),
                rng.gen_range(-3e5..3e5),
                rng.gen_range(-1e3..1e3),
            ];
            let (ix, iy, _) = equilibrium_currents(omega, v, &p).unwrap();
            let l_ss = p.l_ss();
            let a = Matrix2::new(-p.r, -omega * l_ss, omega * l_ss, -p.r);
            let b = Vector2::new(-v[0], -omega * p.l_m() * p.i_f - v[1]);
            let sol = a.lu().solve(&b).unwrap();
            let scale = sol.amax().max(1.0);
            assert_abs_diff_eq!(ix, sol[0], epsilon = 1e-12 * scale);
            assert_abs_diff_eq!(iy, sol[1], epsilon = 1e-12 * scale);
        }
    }

    proptest! {
        /// Steady currents are jointly linear in (Vx*, Vy*, I_f).
        #[test]
        fn superposition(
            vx in -1e5f64..1e5,
            vy in -1e5f64..1e5,
            i_f in -2e3f64..2e3,
            a in -3.0f64..3.0,
        ) {
            let base = demo_gen(0.4, 1e6, 0.0);
            let mut with_f = base;
            with_f.i_f = i_f;
            let mut scaled_f = base;
            scaled_f.i_f = a * i_f;

            let (x1, y1, _) = equilibrium_currents(OMEGA_60, [vx, 0.0, 0.0], &base).unwrap();
            let (x2, y2, _) = equilibrium_currents(OMEGA_60, [0.0, vy, 0.0], &base).unwrap();
            let (x3, y3, _) = equilibrium_currents(OMEGA_60, [0.0, 0.0, 0.0], &with_f).unwrap();
            let (xs, ys, _) =
                equilibrium_currents(OMEGA_60, [a * vx, a * vy, 0.0], &scaled_f).unwrap();
            let scale = xs.abs().max(ys.abs()).max(1.0);
            prop_assert!((xs - a * (x1 + x2 + x3)).abs() <= 1e-12 * scale);
            prop_assert!((ys - a * (y1 + y2 + y3)).abs() <= 1e-12 * scale);
        }
    }

    #[test]
    fn torque_reduces_to_damping_without_field() {
        let p = demo_gen(0.5, 2e6, 0.0);
        let tau = consistent_torque(OMEGA_60, [7.0e4, -3.0e4, 0.0], &p).unwrap();
        assert_relative_eq!(tau, 2e6 * OMEGA_60, max_relative = 1e-14);
    }

    #[test]
    fn torque_shift_is_pure_damping() {
        let p = demo_gen(0.2049, 1.25e6, -3646.7);
        let v = [-17.56e3, 280.16e3, 0.0];
        let w2 = OMEGA_60 + 3.0;
        let tau1 = consistent_torque(OMEGA_60, v, &p).unwrap();
        let tau2 = consistent_torque(w2, v, &p).unwrap();
        let (_, iy1, _) = equilibrium_currents(OMEGA_60, v, &p).unwrap();
        let (_, iy2, _) = equilibrium_currents(w2, v, &p).unwrap();
        let electrical = p.l_m() * p.i_f * (iy2 - iy1);
        assert_relative_eq!(tau2 - tau1 - electrical, p.d * 3.0, max_relative = 1e-12);
    }

    #[test]
    fn field_current_inversion_matches_demo_values() {
        // Machine 1: I_f = -(Ix* + Vy*/(ω Lss)) at r = 0.
        let p1 = demo_gen(0.2049, 1.25e6, 0.0);
        let if1 = consistent_field_current(19.83, [-17.56e3, 280.16e3, 0.0], OMEGA_60, &p1)
            .unwrap();
        assert_relative_eq!(if1, -3646.5, max_relative = 1e-3);

        let p2 = demo_gen(1.2570, 0.68e6, 0.0);
        let if2 = consistent_field_current(6.2, [-24.14e3, 278.76e3, 0.0], OMEGA_60, &p2)
            .unwrap();
        assert_relative_eq!(if2, -594.4, max_relative = 1e-3);
    }

    #[test]
    fn field_current_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let mut p = lossy_gen(&mut rng);
            let v = [rng.gen_range(-3e5..3e5), rng.gen_range(-3e5..3e5), 0.0];
            let ix_target: f64 = rng.gen_range(-400.0..400.0);
            let omega: f64 = rng.gen_range(100.0..500.0);
            p.i_f = consistent_field_current(ix_target, v, omega, &p).unwrap();
            let (ix, _, _) = equilibrium_currents(omega, v, &p).unwrap();
            assert_relative_eq!(ix, ix_target, max_relative = 1e-10);
        }
    }

    #[test]
    fn field_current_rejects_zero_speed() {
        let p = demo_gen(0.3, 1e6, 0.0);
        assert!(matches!(
            consistent_field_current(10.0, [1.0, 2.0, 0.0], 0.0, &p),
            Err(EquilibriumError::Degenerate { .. })
        ));
    }

    #[test]
    fn full_equilibrium_is_a_fixed_point() {
        use crate::machine::{rhs_xyz, GeneratorInputs, GeneratorState};
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let p = lossy_gen(&mut rng);
            let v = [
                rng.gen_range(-2e5..2e5),
                rng.gen_range(-2e5..2e5),
                rng.gen_range(-1e3..1e3),
            ];
            let omega: f64 = rng.gen_range(200.0..500.0);
            let eq = solve_generator_equilibrium(omega, v, &p).unwrap();
            let s = GeneratorState {
                theta: 0.0,
                omega: eq.omega_s,
                i_x: eq.i_x_star,
                i_y: eq.i_y_star,
                i_z: eq.i_z_star,
            };
            let u = GeneratorInputs {
                tau_m: eq.tau_m_star,
                v_x: v[0],
                v_y: v[1],
                v_z: v[2],
            };
            let rates = rhs_xyz(&s, &u, &p);
            let scale = (v[0].abs().max(v[1].abs()) / p.l_ss()).max(omega);
            for rate in [rates.d_omega, rates.d_i_x, rates.d_i_y, rates.d_i_z] {
                assert_abs_diff_eq!(rate, 0.0, epsilon = 1e-9 * scale);
            }
        }
    }

    #[test]
    fn single_root_without_field_current() {
        let p = demo_gen(0.5, 2e6, 0.0);
        let report = omega_equilibria(2e6 * 300.0, [5.0e4, 1.0e4, 0.0], &p);
        assert_eq!(report.real_root_count, 1);
        assert_relative_eq!(report.roots[0], 300.0, max_relative = 1e-12);
    }

    #[test]
    fn consistent_torque_recovers_omega_s() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..300 {
            let p = lossy_gen(&mut rng);
            let v = [rng.gen_range(-2e5..2e5), rng.gen_range(-2e5..2e5), 0.0];
            let omega_s: f64 = rng.gen_range(150.0..600.0);
            let tau = consistent_torque(omega_s, v, &p).unwrap();
            let report = omega_equilibria(tau, v, &p);
            let best = report
                .roots
                .iter()
                .fold(f64::INFINITY, |m, r| m.min((r - omega_s).abs()));
            assert!(
                best <= 1e-9 * omega_s,
                "ω_s = {omega_s} not among {:?}",
                report.roots
            );
        }
    }

    /// Oracle: with a lossy stator every polynomial root is genuine, so the
    /// numeric root count must match the sign of the cubic discriminant.
    #[test]
    fn root_count_matches_discriminant() {
        let mut rng = ChaCha8Rng::seed_from_u64(57);
        let mut multi = 0usize;
        for _ in 0..1000 {
            let p = lossy_gen(&mut rng);
            let v = [rng.gen_range(-2e5..2e5), rng.gen_range(-2e5..2e5), 0.0];
            let tau: f64 = rng.gen_range(-1e9..1e9);
            let report = omega_equilibria(tau, v, &p);

            let l_ss = p.l_ss();
            let l_m = p.l_m();
            let a = -p.d * l_ss * l_ss;
            let b = tau * l_ss * l_ss;
            let c = -(p.d * p.r * p.r + l_m * p.i_f * l_ss * v[0]
                + p.r * l_m * l_m * p.i_f * p.i_f);
            let d = tau * p.r * p.r - p.r * l_m * p.i_f * v[1];
            let disc = 18.0 * a * b * c * d - 4.0 * b * b * b * d + b * b * c * c
                - 4.0 * a * c * c * c
                - 27.0 * a * a * d * d;
            if disc < 0.0 {
                assert_eq!(report.real_root_count, 1, "disc {disc:.3e}");
            } else if disc > 0.0 {
                assert_eq!(report.real_root_count, 3, "disc {disc:.3e}");
                multi += 1;
            }
        }
        assert!(multi > 10, "sweep never exercised the three-root branch");
    }

    /// With a lossless stator the indicator's prediction and the genuine
    /// root count differ by construction: clearing the denominator plants a
    /// spurious root at ω = 0 that the indicator still counts.
    #[test]
    fn lossless_demo_machine_flags_disagreement() {
        let p = demo_gen(0.2049, 1.25e6, -3646.7);
        let v = [-17.56e3, 280.16e3, 0.0];
        let tau = consistent_torque(OMEGA_60, v, &p).unwrap();
        let report = omega_equilibria(tau, v, &p);
        assert!(report.disagreement);
        assert_eq!(report.predicted_root_count, 3);
        assert_eq!(report.real_root_count, 2);
        assert_eq!(report.spurious_roots.len(), 1);
        assert_abs_diff_eq!(report.spurious_roots[0], 0.0, epsilon = 1e-9);
        assert!(!report.bcond_holds, "squared last term cannot be negative");

        let recovered = report
            .roots
            .iter()
            .fold(f64::INFINITY, |m, r| m.min((r - OMEGA_60).abs()));
        assert!(recovered <= 1e-9 * OMEGA_60);
        // Second genuine root: the deflated quadratic's nonzero solution
        // L_m I_f Iy*/D, a slow drift mode near 0.136 rad/s here.
        let (_, iy, _) = equilibrium_currents(OMEGA_60, v, &p).unwrap();
        let slow = p.l_m() * p.i_f * iy / p.d;
        let other = report
            .roots
            .iter()
            .copied()
            .min_by(|a, b| (a - slow).abs().total_cmp(&(b - slow).abs()))
            .unwrap();
        assert_relative_eq!(other, slow, max_relative = 1e-6);
    }

    #[test]
    fn lossy_sweep_has_no_disagreement() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for _ in 0..300 {
            let p = lossy_gen(&mut rng);
            let v = [rng.gen_range(-2e5..2e5), rng.gen_range(-2e5..2e5), 0.0];
            let omega_s: f64 = rng.gen_range(150.0..600.0);
            let tau = consistent_torque(omega_s, v, &p).unwrap();
            let report = omega_equilibria(tau, v, &p);
            assert!(
                !report.disagreement,
                "unexpected disagreement: {report:?} for params {p:?}"
            );
        }
    }

    #[test]
    fn flux_view_consistent_with_inductance() {
        let p = demo_gen(0.2049, 1.25e6, -3646.7);
        let eq = solve_generator_equilibrium(OMEGA_60, [-17.56e3, 280.16e3, 0.0], &p).unwrap();
        assert_relative_eq!(
            eq.lambda_star[0],
            p.l_ss() * eq.i_x_star + p.l_m() * p.i_f,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            eq.lambda_star[3],
            p.l_m() * eq.i_x_star + p.l_f * p.i_f,
            max_relative = 1e-14
        );
    }
}
