//! Synchronous generator model in its rotor reference frame.
//!
//! The machine is a two-pole cylindrical-rotor generator with three stator
//! windings and one field winding, no saliency, and motor sign convention:
//! positive current flows into a winding's positive terminal, so a generator
//! delivering power carries negative stator current along its EMF.
//!
//! Stator quantities are expressed in the rotor `xyz` frame reached through
//! the orthogonal transform [`park_matrix`]. With the field current held
//! constant by the exciter, the electrical and mechanical dynamics are
//!
//! ```text
//! M  dω/dt  = -D ω - L_m I_f I_y + τ_m
//! Lss dIx/dt = -r Ix - ω Lss Iy          + Vx
//! Lss dIy/dt = -r Iy + ω Lss Ix + ω L_m I_f + Vy
//! Lz  dIz/dt = -r Iz                     + Vz
//!     dθ/dt  = ω
//! ```
//!
//! where `Lss = L_s + 2 L_s0` is the synchronous inductance, `Lz = L_s - L_s0`
//! the zero-sequence inductance, and `L_m = sqrt(3/2) L_sf` the effective
//! stator-field mutual. All quantities are SI: henry, ohm, volt, ampere,
//! newton-metre, rad/s.

use nalgebra::{Matrix3, Matrix4};

use crate::equilibrium::GeneratorEquilibrium;
use crate::error::ParamError;

/// Physical constants of one generator, all SI.
///
/// `i_f` is the constant field winding current maintained by the excitation
/// system; it enters the stator dynamics as a parameter, not a state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorParams {
    /// Rotor inertia (kg m^2).
    pub m: f64,
    /// Mechanical damping (N m s).
    pub d: f64,
    /// Stator winding resistance (ohm).
    pub r: f64,
    /// Field winding resistance (ohm).
    pub r_f: f64,
    /// Stator self inductance (H).
    pub l_s: f64,
    /// Stator-stator mutual inductance magnitude (H).
    pub l_s0: f64,
    /// Peak stator-field mutual inductance (H).
    pub l_sf: f64,
    /// Field self inductance (H).
    pub l_f: f64,
    /// Constant field current (A).
    pub i_f: f64,
}

impl GeneratorParams {
    /// Validates the parameter set, rejecting anything that breaks the model:
    /// non-positive inertia or damping, negative resistances, and inductances
    /// whose transformed matrix is not positive definite.
    pub fn validated(self) -> Result<Self, ParamError> {
        let fields = [
            ("M", self.m),
            ("D", self.d),
            ("r", self.r),
            ("r_f", self.r_f),
            ("L_s", self.l_s),
            ("L_s0", self.l_s0),
            ("L_sf", self.l_sf),
            ("L_f", self.l_f),
            ("I_f", self.i_f),
        ];
        for (what, value) in fields {
            if !value.is_finite() {
                return Err(ParamError::NotFinite { what, value });
            }
        }
        for (what, value) in [("M", self.m), ("D", self.d)] {
            if value <= 0.0 {
                return Err(ParamError::NotPositive { what, value });
            }
        }
        for (what, value) in [("r", self.r), ("r_f", self.r_f), ("L_s0", self.l_s0)] {
            if value < 0.0 {
                return Err(ParamError::Negative { what, value });
            }
        }
        if self.l_s <= 0.0 {
            return Err(ParamError::NotPositive {
                what: "L_s",
                value: self.l_s,
            });
        }
        if self.l_f <= 0.0 {
            return Err(ParamError::NotPositive {
                what: "L_f",
                value: self.l_f,
            });
        }
        // Positive definiteness of the transformed inductance matrix
        // diag(Lss, Lss, Lz, L_f) + L_m on the x-field corner reduces to
        // Lz > 0 and L_f Lss - L_m^2 > 0 (Lss > 0 follows from L_s > 0).
        if self.l_z() <= 0.0 {
            return Err(ParamError::IndefiniteInductance {
                why: format!(
                    "zero-sequence inductance L_s - L_s0 = {:.6e} H must be positive",
                    self.l_z()
                ),
            });
        }
        let schur = self.l_f * self.l_ss() - self.l_m() * self.l_m();
        if schur <= 0.0 {
            return Err(ParamError::IndefiniteInductance {
                why: format!(
                    "L_f*Lss - L_m^2 = {:.6e} H^2 must be positive",
                    schur
                ),
            });
        }
        Ok(self)
    }

    /// Synchronous inductance `Lss = L_s + 2 L_s0` (H).
    pub fn l_ss(&self) -> f64 {
        self.l_s + 2.0 * self.l_s0
    }

    /// Effective stator-field mutual `L_m = sqrt(3/2) L_sf` (H).
    pub fn l_m(&self) -> f64 {
        (1.5f64).sqrt() * self.l_sf
    }

    /// Zero-sequence inductance `Lz = Lss - 3 L_s0 = L_s - L_s0` (H).
    pub fn l_z(&self) -> f64 {
        self.l_s - self.l_s0
    }
}

/// Dynamic state of one generator: rotor angle and velocity plus the stator
/// currents in the rotor frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeneratorState {
    /// Rotor electrical angle (rad).
    pub theta: f64,
    /// Rotor electrical angular velocity (rad/s).
    pub omega: f64,
    /// Stator current, x axis (A).
    pub i_x: f64,
    /// Stator current, y axis (A).
    pub i_y: f64,
    /// Stator current, z axis (A).
    pub i_z: f64,
}

impl GeneratorState {
    /// Flux linkages `(λx, λy, λz, λf)` in weber, including the constant
    /// field contribution through the mutual inductance.
    pub fn flux_xyz(&self, p: &GeneratorParams) -> [f64; 4] {
        [
            p.l_ss() * self.i_x + p.l_m() * p.i_f,
            p.l_ss() * self.i_y,
            p.l_z() * self.i_z,
            p.l_m() * self.i_x + p.l_f * p.i_f,
        ]
    }
}

/// Exogenous inputs: mechanical shaft torque and the stator terminal voltage
/// in the rotor frame.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeneratorInputs {
    /// Mechanical torque (N m).
    pub tau_m: f64,
    /// Terminal voltage, x axis (V).
    pub v_x: f64,
    /// Terminal voltage, y axis (V).
    pub v_y: f64,
    /// Terminal voltage, z axis (V).
    pub v_z: f64,
}

/// Time derivative of [`GeneratorState`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GeneratorRates {
    pub d_theta: f64,
    pub d_omega: f64,
    pub d_i_x: f64,
    pub d_i_y: f64,
    pub d_i_z: f64,
}

/// Orthogonal rotor transform mapping `abc`-frame stator quantities plus the
/// field quantity into the rotor `xyzf` frame.
///
/// The inverse is the transpose, so instantaneous power is frame independent.
/// Balanced three-phase signals aligned with `theta` land on the x axis with
/// amplitude scaled by `sqrt(3/2)`; the field coordinate passes through
/// unchanged.
pub fn park_matrix(theta: f64) -> Matrix4<f64> {
    let k = (2.0f64 / 3.0).sqrt();
    let third = 2.0 * std::f64::consts::PI / 3.0;
    let (a, b, c) = (theta, theta - third, theta + third);
    let h = 0.5f64.sqrt();
    Matrix4::new(
        k * a.cos(),
        k * b.cos(),
        k * c.cos(),
        0.0,
        k * a.sin(),
        k * b.sin(),
        k * c.sin(),
        0.0,
        k * h,
        k * h,
        k * h,
        0.0,
        0.0,
        0.0,
        0.0,
        k * (1.5f64).sqrt(),
    )
}

/// Stator block of [`park_matrix`]: the 3x3 orthogonal map from `abc` to the
/// rotor `xyz` axes.
pub fn park_stator(theta: f64) -> Matrix3<f64> {
    let t = park_matrix(theta);
    t.fixed_view::<3, 3>(0, 0).into_owned()
}

/// Winding inductance matrix in the stationary `abc` frame, ordered
/// `(a, b, c, f)`. Rotor position enters only through the stator-field
/// mutual terms.
pub fn inductance_abc(theta: f64, p: &GeneratorParams) -> Matrix4<f64> {
    let third = 2.0 * std::f64::consts::PI / 3.0;
    let d = p.l_s + p.l_s0;
    let o = -p.l_s0;
    let (ma, mb, mc) = (
        p.l_sf * theta.cos(),
        p.l_sf * (theta - third).cos(),
        p.l_sf * (theta + third).cos(),
    );
    Matrix4::new(
        d, o, o, ma, //
        o, d, o, mb, //
        o, o, d, mc, //
        ma, mb, mc, p.l_f,
    )
}

/// Winding inductance matrix in the rotor frame, ordered `(x, y, z, f)`.
///
/// Conjugating [`inductance_abc`] by [`park_matrix`] removes the rotor-angle
/// dependence entirely:
///
/// ```text
///         | Lss  0   0   L_m |
/// L_xyz = |  0  Lss  0    0  |
///         |  0   0   Lz   0  |
///         | L_m  0   0   L_f |
/// ```
pub fn inductance_xyz(p: &GeneratorParams) -> Matrix4<f64> {
    let mut l = Matrix4::zeros();
    l[(0, 0)] = p.l_ss();
    l[(1, 1)] = p.l_ss();
    l[(2, 2)] = p.l_z();
    l[(3, 3)] = p.l_f;
    l[(0, 3)] = p.l_m();
    l[(3, 0)] = p.l_m();
    l
}

/// Torque of electrical origin `τe = L_m I_f I_y` (N m).
///
/// Equals the rotor-angle gradient of the magnetic energy at frozen flux
/// linkage; it opposes the mechanical torque in the velocity equation.
pub fn electrical_torque(s: &GeneratorState, p: &GeneratorParams) -> f64 {
    p.l_m() * p.i_f * s.i_y
}

/// Right-hand side of the generator dynamics in the rotor frame.
///
/// Holds for any terminal voltage; the caller supplies whatever the network
/// (or a test harness) imposes at the stator terminals.
pub fn rhs_xyz(s: &GeneratorState, u: &GeneratorInputs, p: &GeneratorParams) -> GeneratorRates {
    let l_ss = p.l_ss();
    let l_m = p.l_m();
    GeneratorRates {
        d_theta: s.omega,
        d_omega: (-p.d * s.omega - l_m * p.i_f * s.i_y + u.tau_m) / p.m,
        d_i_x: (-p.r * s.i_x - s.omega * l_ss * s.i_y + u.v_x) / l_ss,
        d_i_y: (-p.r * s.i_y + s.omega * l_ss * s.i_x + s.omega * l_m * p.i_f + u.v_y) / l_ss,
        d_i_z: (-p.r * s.i_z + u.v_z) / p.l_z(),
    }
}

/// Total stored energy: magnetic energy of the windings plus rotor kinetic
/// energy (J). Independent of the rotor angle.
pub fn hamiltonian(s: &GeneratorState, p: &GeneratorParams) -> f64 {
    let mag = 0.5 * p.l_ss() * (s.i_x * s.i_x + s.i_y * s.i_y)
        + 0.5 * p.l_z() * s.i_z * s.i_z
        + p.l_m() * s.i_x * p.i_f
        + 0.5 * p.l_f * p.i_f * p.i_f;
    mag + 0.5 * p.m * s.omega * s.omega
}

/// Shifted energy relative to an equilibrium: the storage in the deviation
/// coordinates (J). Zero exactly at the equilibrium, positive elsewhere, and
/// the Lyapunov candidate for the stability certificates.
///
/// The field deviation vanishes because the field current is a constant, so
/// the mutual term drops out.
pub fn shifted_hamiltonian(
    s: &GeneratorState,
    eq: &GeneratorEquilibrium,
    p: &GeneratorParams,
) -> f64 {
    let dx = s.i_x - eq.i_x_star;
    let dy = s.i_y - eq.i_y_star;
    let dz = s.i_z - eq.i_z_star;
    let dw = s.omega - eq.omega_s;
    0.5 * p.l_ss() * (dx * dx + dy * dy) + 0.5 * p.l_z() * dz * dz + 0.5 * p.m * dw * dw
}

/// Analytic time derivative of [`hamiltonian`] along [`rhs_xyz`].
pub fn hamiltonian_rate(s: &GeneratorState, u: &GeneratorInputs, p: &GeneratorParams) -> f64 {
    let rates = rhs_xyz(s, u, p);
    let grad_ix = p.l_ss() * s.i_x + p.l_m() * p.i_f;
    let grad_iy = p.l_ss() * s.i_y;
    let grad_iz = p.l_z() * s.i_z;
    p.m * s.omega * rates.d_omega
        + grad_ix * rates.d_i_x
        + grad_iy * rates.d_i_y
        + grad_iz * rates.d_i_z
}
