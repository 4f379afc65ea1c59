//! The assembled multi-machine model: state layout, bus-voltage algebra,
//! and the composite vector field.
//!
//! State layout of the flat vector, in description order:
//!
//! ```text
//! per generator i : [ δ_i, ω_i, I_x, I_y, I_z ]      (rotor frame)
//! per line l      : [ i_x, i_y, i_z ]                (synchronous frame)
//! per RL load j   : [ i_x, i_y, i_z ]                (synchronous frame)
//! ```
//!
//! Bus voltages are not states. Every inductive device determines its
//! current, so Kirchhoff's current law at each bus is an algebraic relation
//! the voltages must respect. At a bus with a resistive shunt the law gives
//! the voltage directly; at a shuntless bus the summed currents are constant
//! in time, and differentiating that constraint yields a linear equation in
//! the voltages whose coefficients are constant because each machine has
//! equal x and y inductances (its rotating-frame inductance commutes with
//! the rotation). Both row kinds are collected into one matrix per axis
//! pair, factorized once at assembly.

use nalgebra::{DMatrix, DVector, Dyn, FullPivLU};

use super::{
    bus_order, classify, rotate, LoadClass, NetworkDescription, OperatingPoint,
};
use crate::error::NetworkError;
use crate::machine::{self, GeneratorInputs, GeneratorParams, GeneratorState};

pub(super) struct GenSlot {
    pub(super) params: GeneratorParams,
    pub(super) bus: usize,
    pub(super) r_sssc: f64,
}

pub(super) struct BranchSlot {
    pub(super) from: usize,
    pub(super) to: usize,
    pub(super) r: f64,
    pub(super) l: f64,
}

pub(super) struct RlSlot {
    pub(super) bus: usize,
    pub(super) r: f64,
    pub(super) l: f64,
}

/// Simulation-ready composite model built by [`super::assemble`].
/// Immutable after construction, so it can be shared across worker threads.
pub struct CompositeSystem {
    buses: Vec<String>,
    gens: Vec<GenSlot>,
    lines: Vec<BranchSlot>,
    rl_loads: Vec<RlSlot>,
    shunt_g: Vec<f64>,
    const_draw: Vec<[f64; 2]>,
    /// Buses whose voltage comes from a plain conductance relation.
    algebraic: Vec<bool>,
    lu_xy: FullPivLU<f64, Dyn, Dyn>,
    lu_z: FullPivLU<f64, Dyn, Dyn>,
}

struct GenWork {
    delta: f64,
    ddelta: f64,
    i_syn: [f64; 3],
    /// Machine-frame current-equation numerators with the series
    /// compensator folded in; voltage terms excluded.
    num: [f64; 3],
}

impl CompositeSystem {
    pub(super) fn new(nd: &NetworkDescription) -> Result<Self, NetworkError> {
        let buses = bus_order(nd);
        let index = |name: &str| buses.iter().position(|b| b == name).unwrap();
        let n = buses.len();

        let gens: Vec<GenSlot> = nd
            .generators
            .iter()
            .map(|g| GenSlot {
                params: g.params,
                bus: index(&g.bus),
                r_sssc: g.r_sssc,
            })
            .collect();
        let lines: Vec<BranchSlot> = nd
            .lines
            .iter()
            .map(|l| BranchSlot {
                from: index(&l.from_bus),
                to: index(&l.to_bus),
                r: l.r_line,
                l: l.l_line,
            })
            .collect();
        let mut rl_loads = Vec::new();
        let mut shunt_g = vec![0.0; n];
        let mut const_draw = vec![[0.0; 2]; n];
        for ld in &nd.loads {
            match classify(ld) {
                LoadClass::Dynamic { bus, r, l } => rl_loads.push(RlSlot {
                    bus: index(bus),
                    r,
                    l,
                }),
                LoadClass::Shunt { bus, g } => shunt_g[index(bus)] += g,
                LoadClass::Constant { bus, draw } => {
                    let b = index(bus);
                    const_draw[b][0] += draw[0];
                    const_draw[b][1] += draw[1];
                }
            }
        }
        let algebraic: Vec<bool> = shunt_g.iter().map(|&g| g > 0.0).collect();

        let mut a_xy = DMatrix::zeros(n, n);
        let mut a_z = DMatrix::zeros(n, n);
        for b in 0..n {
            if algebraic[b] {
                a_xy[(b, b)] = shunt_g[b];
                a_z[(b, b)] = shunt_g[b];
            }
        }
        for ln in &lines {
            for e in [ln.from, ln.to] {
                if !algebraic[e] {
                    let o = if e == ln.from { ln.to } else { ln.from };
                    a_xy[(e, e)] -= 1.0 / ln.l;
                    a_xy[(e, o)] += 1.0 / ln.l;
                    a_z[(e, e)] -= 1.0 / ln.l;
                    a_z[(e, o)] += 1.0 / ln.l;
                }
            }
        }
        for g in &gens {
            if !algebraic[g.bus] {
                a_xy[(g.bus, g.bus)] -= 1.0 / g.params.l_ss();
                a_z[(g.bus, g.bus)] -= 1.0 / g.params.l_z();
            }
        }
        for ld in &rl_loads {
            if !algebraic[ld.bus] {
                a_xy[(ld.bus, ld.bus)] -= 1.0 / ld.l;
                a_z[(ld.bus, ld.bus)] -= 1.0 / ld.l;
            }
        }
        for (b, bus) in buses.iter().enumerate() {
            if a_xy.row(b).iter().all(|&v| v == 0.0) {
                return Err(NetworkError::SingularAlgebra {
                    element: bus.clone(),
                    why: "no shunt or inductive device determines this bus voltage".into(),
                });
            }
        }
        let lu_xy = FullPivLU::new(a_xy);
        let lu_z = FullPivLU::new(a_z);
        if !lu_xy.is_invertible() || !lu_z.is_invertible() {
            return Err(NetworkError::SingularAlgebra {
                element: "bus voltage algebra".into(),
                why: "the assembled bus equations are rank deficient".into(),
            });
        }

        Ok(CompositeSystem {
            buses,
            gens,
            lines,
            rl_loads,
            shunt_g,
            const_draw,
            algebraic,
            lu_xy,
            lu_z,
        })
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn n_gens(&self) -> usize {
        self.gens.len()
    }

    pub fn n_lines(&self) -> usize {
        self.lines.len()
    }

    pub fn n_rl_loads(&self) -> usize {
        self.rl_loads.len()
    }

    /// Length of the flat state vector.
    pub fn dim(&self) -> usize {
        5 * self.gens.len() + 3 * (self.lines.len() + self.rl_loads.len())
    }

    pub fn bus_names(&self) -> &[String] {
        &self.buses
    }

    pub fn gen_offset(&self, i: usize) -> usize {
        5 * i
    }

    pub fn line_offset(&self, l: usize) -> usize {
        5 * self.gens.len() + 3 * l
    }

    pub fn rl_load_offset(&self, j: usize) -> usize {
        5 * self.gens.len() + 3 * (self.lines.len() + j)
    }

    pub fn gen_params(&self, i: usize) -> &GeneratorParams {
        &self.gens[i].params
    }

    pub fn gen_bus(&self, i: usize) -> usize {
        self.gens[i].bus
    }

    pub fn gen_r_sssc(&self, i: usize) -> f64 {
        self.gens[i].r_sssc
    }

    pub fn line_endpoints(&self, l: usize) -> (usize, usize) {
        (self.lines[l].from, self.lines[l].to)
    }

    pub fn rl_load_bus(&self, j: usize) -> usize {
        self.rl_loads[j].bus
    }

    pub(super) fn line_slots(&self) -> &[BranchSlot] {
        &self.lines
    }

    pub(super) fn rl_slots(&self) -> &[RlSlot] {
        &self.rl_loads
    }

    #[cfg(test)]
    pub(super) fn gen_slots(&self) -> &[GenSlot] {
        &self.gens
    }

    pub(super) fn shunts(&self) -> &[f64] {
        &self.shunt_g
    }

    pub(super) fn const_draws(&self) -> &[[f64; 2]] {
        &self.const_draw
    }

    /// Rotor-frame view of generator `i` inside the flat state. The angle
    /// slot holds `δ_i`.
    pub fn gen_state(&self, x: &DVector<f64>, i: usize) -> GeneratorState {
        let o = self.gen_offset(i);
        GeneratorState {
            theta: x[o],
            omega: x[o + 1],
            i_x: x[o + 2],
            i_y: x[o + 3],
            i_z: x[o + 4],
        }
    }

    pub fn line_current(&self, x: &DVector<f64>, l: usize) -> [f64; 3] {
        let o = self.line_offset(l);
        [x[o], x[o + 1], x[o + 2]]
    }

    pub fn rl_load_current(&self, x: &DVector<f64>, j: usize) -> [f64; 3] {
        let o = self.rl_load_offset(j);
        [x[o], x[o + 1], x[o + 2]]
    }

    /// Synchronous-frame stator current generator `i` pushes into its bus.
    pub fn gen_syn_current(&self, x: &DVector<f64>, i: usize) -> [f64; 3] {
        let o = self.gen_offset(i);
        rotate([x[o + 2], x[o + 3], x[o + 4]], -x[o])
    }

    /// The flat state vector sitting exactly at an operating point.
    pub fn operating_state(&self, op: &OperatingPoint) -> DVector<f64> {
        let mut x = DVector::zeros(self.dim());
        for i in 0..self.gens.len() {
            let o = self.gen_offset(i);
            let eq = &op.generators[i];
            x[o] = op.delta_star[i];
            x[o + 1] = op.omega_s;
            x[o + 2] = eq.i_x_star;
            x[o + 3] = eq.i_y_star;
            x[o + 4] = eq.i_z_star;
        }
        for (l, cur) in op.line_currents.iter().enumerate() {
            let o = self.line_offset(l);
            x[o] = cur[0];
            x[o + 1] = cur[1];
            x[o + 2] = cur[2];
        }
        for (j, cur) in op.load_currents.iter().enumerate() {
            let o = self.rl_load_offset(j);
            x[o] = cur[0];
            x[o + 1] = cur[1];
            x[o + 2] = cur[2];
        }
        x
    }

    /// Composite vector field. `op` supplies the constant inputs (torques,
    /// field currents, compensator references) and the chart velocity.
    pub fn rhs(&self, x: &DVector<f64>, op: &OperatingPoint) -> DVector<f64> {
        self.rhs_with_buses(x, op).0
    }

    /// Vector field plus the bus voltages solved along the way
    /// (synchronous frame, [`Self::bus_names`] order).
    pub fn rhs_with_buses(
        &self,
        x: &DVector<f64>,
        op: &OperatingPoint,
    ) -> (DVector<f64>, Vec<[f64; 3]>) {
        assert_eq!(x.len(), self.dim(), "state vector length mismatch");
        assert_eq!(
            op.generators.len(),
            self.gens.len(),
            "operating point does not match the network"
        );
        let n = self.buses.len();
        let ws = op.omega_s;

        let mut work = Vec::with_capacity(self.gens.len());
        for (i, g) in self.gens.iter().enumerate() {
            let o = self.gen_offset(i);
            let (delta, omega) = (x[o], x[o + 1]);
            let (ix, iy, iz) = (x[o + 2], x[o + 3], x[o + 4]);
            let eq = &op.generators[i];
            let p = &g.params;
            let (lss, lm) = (p.l_ss(), p.l_m());
            let rp = p.r + g.r_sssc;
            work.push(GenWork {
                delta,
                ddelta: omega - ws,
                i_syn: rotate([ix, iy, iz], -delta),
                num: [
                    -rp * ix - omega * lss * iy + g.r_sssc * eq.i_x_star,
                    -rp * iy + omega * lss * ix + omega * lm * eq.i_f
                        + g.r_sssc * eq.i_y_star,
                    -rp * iz + g.r_sssc * eq.i_z_star,
                ],
            });
        }

        // Bus equation right-hand sides. Shunted buses carry the plain
        // current law; shuntless buses carry its time derivative with the
        // voltage terms moved to the matrix side.
        let mut rx = DVector::zeros(n);
        let mut ry = DVector::zeros(n);
        let mut rz = DVector::zeros(n);

        let mut line_d0 = Vec::with_capacity(self.lines.len());
        for (l, ln) in self.lines.iter().enumerate() {
            let o = self.line_offset(l);
            let cur = [x[o], x[o + 1], x[o + 2]];
            let rl = ln.r / ln.l;
            let d0 = [
                -rl * cur[0] - ws * cur[1],
                -rl * cur[1] + ws * cur[0],
                -rl * cur[2],
            ];
            line_d0.push(d0);
            for (e, sgn) in [(ln.from, -1.0), (ln.to, 1.0)] {
                if self.algebraic[e] {
                    rx[e] += sgn * cur[0];
                    ry[e] += sgn * cur[1];
                    rz[e] += sgn * cur[2];
                } else {
                    rx[e] -= sgn * d0[0];
                    ry[e] -= sgn * d0[1];
                    rz[e] -= sgn * d0[2];
                }
            }
        }

        let mut load_d0 = Vec::with_capacity(self.rl_loads.len());
        for (j, ld) in self.rl_loads.iter().enumerate() {
            let o = self.rl_load_offset(j);
            let cur = [x[o], x[o + 1], x[o + 2]];
            let rl = ld.r / ld.l;
            let d0 = [
                -rl * cur[0] - ws * cur[1],
                -rl * cur[1] + ws * cur[0],
                -rl * cur[2],
            ];
            load_d0.push(d0);
            let b = ld.bus;
            if self.algebraic[b] {
                rx[b] -= cur[0];
                ry[b] -= cur[1];
                rz[b] -= cur[2];
            } else {
                rx[b] += d0[0];
                ry[b] += d0[1];
                rz[b] += d0[2];
            }
        }

        for (g, w) in self.gens.iter().zip(&work) {
            let b = g.bus;
            if self.algebraic[b] {
                rx[b] -= w.i_syn[0];
                ry[b] -= w.i_syn[1];
                rz[b] -= w.i_syn[2];
            } else {
                let p = &g.params;
                let lam = rotate(
                    [w.num[0] / p.l_ss(), w.num[1] / p.l_ss(), w.num[2] / p.l_z()],
                    -w.delta,
                );
                rx[b] += w.ddelta * w.i_syn[1] + lam[0];
                ry[b] += -w.ddelta * w.i_syn[0] + lam[1];
                rz[b] += lam[2];
            }
        }

        for b in 0..n {
            if self.algebraic[b] {
                rx[b] -= self.const_draw[b][0];
                ry[b] -= self.const_draw[b][1];
            }
        }

        let vx = self.lu_xy.solve(&rx).expect("checked invertible at assembly");
        let vy = self.lu_xy.solve(&ry).expect("checked invertible at assembly");
        let vz = self.lu_z.solve(&rz).expect("checked invertible at assembly");
        let bus_v: Vec<[f64; 3]> = (0..n).map(|b| [vx[b], vy[b], vz[b]]).collect();

        let mut dx = DVector::zeros(self.dim());
        for (i, g) in self.gens.iter().enumerate() {
            let o = self.gen_offset(i);
            let w = &work[i];
            let eq = &op.generators[i];
            let vm = rotate(bus_v[g.bus], w.delta);
            let mut p = g.params;
            p.i_f = eq.i_f;
            let st = self.gen_state(x, i);
            let u = GeneratorInputs {
                tau_m: eq.tau_m_star,
                v_x: vm[0] - g.r_sssc * (st.i_x - eq.i_x_star),
                v_y: vm[1] - g.r_sssc * (st.i_y - eq.i_y_star),
                v_z: vm[2] - g.r_sssc * (st.i_z - eq.i_z_star),
            };
            let rates = machine::rhs_xyz(&st, &u, &p);
            dx[o] = w.ddelta;
            dx[o + 1] = rates.d_omega;
            dx[o + 2] = rates.d_i_x;
            dx[o + 3] = rates.d_i_y;
            dx[o + 4] = rates.d_i_z;
        }
        for (l, ln) in self.lines.iter().enumerate() {
            let o = self.line_offset(l);
            let dv = [
                (vx[ln.from] - vx[ln.to]) / ln.l,
                (vy[ln.from] - vy[ln.to]) / ln.l,
                (vz[ln.from] - vz[ln.to]) / ln.l,
            ];
            dx[o] = line_d0[l][0] + dv[0];
            dx[o + 1] = line_d0[l][1] + dv[1];
            dx[o + 2] = line_d0[l][2] + dv[2];
        }
        for (j, ld) in self.rl_loads.iter().enumerate() {
            let o = self.rl_load_offset(j);
            dx[o] = load_d0[j][0] + vx[ld.bus] / ld.l;
            dx[o + 1] = load_d0[j][1] + vy[ld.bus] / ld.l;
            dx[o + 2] = load_d0[j][2] + vz[ld.bus] / ld.l;
        }
        (dx, bus_v)
    }

    /// Restores Kirchhoff's current law at shuntless buses by minimally
    /// adjusting the line and RL-load currents, in the magnetic-energy
    /// metric, holding the machine states fixed. Those laws are conserved
    /// by the dynamics, so a freshly sampled initial state must satisfy
    /// them or the bus algebra would report voltages for a circuit the
    /// state never occupies.
    pub fn project_initial_state(&self, x: &mut DVector<f64>) -> Result<(), NetworkError> {
        let rows: Vec<usize> = (0..self.buses.len())
            .filter(|&b| !self.algebraic[b])
            .collect();
        if rows.is_empty() {
            return Ok(());
        }
        let m = rows.len();
        let q = self.lines.len() + self.rl_loads.len();

        let i_syn: Vec<[f64; 3]> = (0..self.gens.len())
            .map(|i| self.gen_syn_current(x, i))
            .collect();

        for axis in 0..3 {
            let mut c = DMatrix::zeros(m, q);
            let mut d = DVector::zeros(m);
            for (row, &b) in rows.iter().enumerate() {
                for (l, ln) in self.lines.iter().enumerate() {
                    if ln.from == b {
                        c[(row, l)] -= 1.0;
                    }
                    if ln.to == b {
                        c[(row, l)] += 1.0;
                    }
                }
                for (j, ld) in self.rl_loads.iter().enumerate() {
                    if ld.bus == b {
                        c[(row, self.lines.len() + j)] -= 1.0;
                    }
                }
                for (g, cur) in self.gens.iter().zip(&i_syn) {
                    if g.bus == b {
                        d[row] += cur[axis];
                    }
                }
                if axis < 2 {
                    d[row] += self.const_draw[b][axis];
                }
            }

            let weights: Vec<f64> = self
                .lines
                .iter()
                .map(|ln| ln.l)
                .chain(self.rl_loads.iter().map(|ld| ld.l))
                .collect();
            let mut u0 = DVector::zeros(q);
            for l in 0..self.lines.len() {
                u0[l] = x[self.line_offset(l) + axis];
            }
            for j in 0..self.rl_loads.len() {
                u0[self.lines.len() + j] = x[self.rl_load_offset(j) + axis];
            }

            let u = if q == 0 {
                u0.clone()
            } else {
                // Stationarity of ½(u-u0)ᵀW(u-u0) + λᵀ(Cu-d).
                let size = q + m;
                let mut kkt = DMatrix::zeros(size, size);
                let mut rhs = DVector::zeros(size);
                for k in 0..q {
                    kkt[(k, k)] = weights[k];
                    rhs[k] = weights[k] * u0[k];
                }
                for row in 0..m {
                    for k in 0..q {
                        kkt[(q + row, k)] = c[(row, k)];
                        kkt[(k, q + row)] = c[(row, k)];
                    }
                    rhs[q + row] = d[row];
                }
                let svd = kkt.svd(true, true);
                let eps = svd.singular_values.max() * 1e-13;
                let sol = svd
                    .solve(&rhs, eps)
                    .map_err(|e| NetworkError::InfeasibleInitialState {
                        why: format!("current-law projection failed: {e}"),
                    })?;
                sol.rows(0, q).into_owned()
            };

            let residual = &c * &u - &d;
            let worst = residual.iter().map(|v| v.abs()).fold(0.0, f64::max);
            let scale = d.iter().map(|v| v.abs()).fold(1.0, f64::max);
            if worst > 1e-8 * scale {
                let row = residual
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                    .map(|(r, _)| r)
                    .unwrap();
                let axis_name = ["x", "y", "z"][axis];
                return Err(NetworkError::InfeasibleInitialState {
                    why: format!(
                        "current law at bus {} cannot be satisfied on the {axis_name} axis; \
                         residual {worst:.3e} A with the machine states held fixed",
                        self.buses[rows[row]]
                    ),
                });
            }
            for l in 0..self.lines.len() {
                x[self.line_offset(l) + axis] = u[l];
            }
            for j in 0..self.rl_loads.len() {
                x[self.rl_load_offset(j) + axis] = u[self.lines.len() + j];
            }
        }
        Ok(())
    }
}
