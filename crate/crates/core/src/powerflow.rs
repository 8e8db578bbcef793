//! Radial power flow: the nonlinear DistFlow branch-flow equations solved by a
//! backward/forward sweep, plus the LinDistFlow recursion and its closed-form
//! feeder-head relation, which serve as analytic oracles on single chains.
//!
//! Loads are consumed powers (watts, vars). The sweep runs in per unit on a
//! 1 MVA base with every bus on its own nominal voltage base, so ideal
//! transformer ratios drop out.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::{hypot, sqrt};
use crate::topology::{validate_radial, BusId, Network, TopologyError};

const S_BASE: f64 = 1e6;
const NO_PARENT: usize = usize::MAX;
const INFEASIBLE_RESIDUAL: f64 = 1e-6;

/// Consumed power per bus plus the regulated source voltage at the root.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InjectionSet {
    /// Bus id to (watts, vars) consumed.
    pub loads: BTreeMap<BusId, (f64, f64)>,
    /// Volts at the root bus.
    pub source_voltage: f64,
}

impl InjectionSet {
    pub fn new(source_voltage: f64) -> Self {
        Self { loads: BTreeMap::new(), source_voltage }
    }

    /// Adds to whatever is already drawn at `bus`.
    pub fn add(&mut self, bus: BusId, p: f64, q: f64) {
        let e = self.loads.entry(bus).or_insert((0.0, 0.0));
        e.0 += p;
        e.1 += q;
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Largest voltage change between sweeps accepted as converged, per unit.
    pub tolerance_pu: f64,
    pub max_iterations: u32,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { tolerance_pu: 1e-8, max_iterations: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PowerFlowError {
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("injection at bus {0} is not finite")]
    NonFiniteLoad(BusId),
    #[error("source voltage must be finite and positive")]
    BadSourceVoltage,
    #[error("sweep did not converge in {iterations} iterations (last change {last_change_pu:e} pu)")]
    NotConverged { iterations: u32, last_change_pu: f64 },
    #[error("sweep settled on a non-physical point (residual {residual_pu:e} pu)")]
    Infeasible { residual_pu: f64 },
    #[error("voltage collapse at bus {bus}: squared voltage {v_squared_pu:e} pu")]
    VoltageCollapse { bus: BusId, v_squared_pu: f64 },
}

/// Sending-end flow of a branch, watts and vars.
#[derive(Copy, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BranchFlow {
    pub p: f64,
    pub q: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PowerFlowSolution {
    /// Volts at every bus.
    pub voltage: BTreeMap<BusId, f64>,
    /// Indexed like `Network::branches`.
    pub branch_flow: Vec<BranchFlow>,
    /// VA drawn from the root.
    pub substation_apparent: f64,
    pub iterations: u32,
    /// Largest DistFlow equation residual over all branches, per unit.
    pub max_residual: f64,
    /// Total series losses, watts.
    pub losses: f64,
}

/// Reusable sweep solver for one network; buffers are kept between solves so
/// a time-stepped simulation does not allocate per step.
#[derive(Clone, Debug)]
pub struct DistFlowSolver {
    ids: Vec<BusId>,
    index: BTreeMap<BusId, usize>,
    order: Vec<usize>,
    parent: Vec<usize>,
    parent_branch: Vec<usize>,
    branch_bus: Vec<usize>,
    v_base: Vec<f64>,
    r: Vec<f64>,
    x: Vec<f64>,
    root: usize,
    v2: Vec<f64>,
    p_send: Vec<f64>,
    q_send: Vec<f64>,
    acc_p: Vec<f64>,
    acc_q: Vec<f64>,
    load_p: Vec<f64>,
    load_q: Vec<f64>,
    iterations: u32,
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct SweepStats {
    pub iterations: u32,
    pub last_change_pu: f64,
}

impl DistFlowSolver {
    pub fn new(net: &Network) -> Result<Self, TopologyError> {
        let report = validate_radial(net)?;
        let n = net.buses.len();
        let mut parent = vec![NO_PARENT; n];
        let mut parent_branch = vec![NO_PARENT; n];
        let mut branch_bus = vec![NO_PARENT; net.branches.len()];
        let mut r = vec![0.0; n];
        let mut x = vec![0.0; n];
        let v_base: Vec<f64> = net.buses.iter().map(|b| b.nominal_voltage).collect();
        for i in 0..n {
            if let (Some(p), Some(k)) = (report.parent[i], report.parent_branch[i]) {
                parent[i] = p;
                parent_branch[i] = k;
                branch_bus[k] = i;
                let z_base = v_base[i] * v_base[i] / S_BASE;
                r[i] = net.branches[k].resistance / z_base;
                x[i] = net.branches[k].reactance / z_base;
            }
        }
        let root = report.order[0];
        Ok(Self {
            ids: net.buses.iter().map(|b| b.id).collect(),
            index: net.id_index(),
            order: report.order,
            parent,
            parent_branch,
            branch_bus,
            v_base,
            r,
            x,
            root,
            v2: vec![1.0; n],
            p_send: vec![0.0; n],
            q_send: vec![0.0; n],
            acc_p: vec![0.0; n],
            acc_q: vec![0.0; n],
            load_p: vec![0.0; n],
            load_q: vec![0.0; n],
            iterations: 0,
        })
    }

    pub fn bus_count(&self) -> usize {
        self.ids.len()
    }

    pub fn index_of(&self, id: BusId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    /// Solves for consumed powers given per bus index (watts, vars).
    pub fn solve(
        &mut self,
        p_w: &[f64],
        q_var: &[f64],
        source_voltage: f64,
        opts: &SolverOptions,
    ) -> Result<SweepStats, PowerFlowError> {
        let n = self.ids.len();
        assert_eq!(p_w.len(), n, "one active load per bus");
        assert_eq!(q_var.len(), n, "one reactive load per bus");
        let root_base = self.v_base[self.root];
        if !(source_voltage.is_finite() && source_voltage > 0.0) {
            return Err(PowerFlowError::BadSourceVoltage);
        }
        for i in 0..n {
            if !(p_w[i].is_finite() && q_var[i].is_finite()) {
                return Err(PowerFlowError::NonFiniteLoad(self.ids[i]));
            }
            self.load_p[i] = p_w[i] / S_BASE;
            self.load_q[i] = q_var[i] / S_BASE;
        }
        let v0 = source_voltage / root_base;
        let v0_sq = v0 * v0;
        self.v2.iter_mut().for_each(|v| *v = v0_sq);

        let mut change = f64::INFINITY;
        for iter in 1..=opts.max_iterations {
            self.backward();
            change = self.forward()?;
            if change < opts.tolerance_pu {
                self.iterations = iter;
                // Past the loadability limit the sweep can settle on the
                // high-loss branch, where sending and receiving currents differ.
                let residual = self.max_residual();
                if residual > INFEASIBLE_RESIDUAL {
                    return Err(PowerFlowError::Infeasible { residual_pu: residual });
                }
                return Ok(SweepStats { iterations: iter, last_change_pu: change });
            }
        }
        Err(PowerFlowError::NotConverged { iterations: opts.max_iterations, last_change_pu: change })
    }

    // Leaf-to-root accumulation of branch flows; the loss term uses the
    // receiving-end current, which equals the sending-end current.
    fn backward(&mut self) {
        self.acc_p.copy_from_slice(&self.load_p);
        self.acc_q.copy_from_slice(&self.load_q);
        for &i in self.order.iter().rev() {
            let p = self.parent[i];
            if p == NO_PARENT {
                continue;
            }
            let (pr, qr) = (self.acc_p[i], self.acc_q[i]);
            let l = (pr * pr + qr * qr) / self.v2[i];
            let ps = pr + self.r[i] * l;
            let qs = qr + self.x[i] * l;
            self.p_send[i] = ps;
            self.q_send[i] = qs;
            self.acc_p[p] += ps;
            self.acc_q[p] += qs;
        }
    }

    fn forward(&mut self) -> Result<f64, PowerFlowError> {
        let mut change = 0.0f64;
        for &i in &self.order {
            let p = self.parent[i];
            if p == NO_PARENT {
                continue;
            }
            let (ps, qs) = (self.p_send[i], self.q_send[i]);
            let (r, x) = (self.r[i], self.x[i]);
            let vp2 = self.v2[p];
            let l = (ps * ps + qs * qs) / vp2;
            let v2 = vp2 - 2.0 * (r * ps + x * qs) + (r * r + x * x) * l;
            if !(v2 > 0.0) {
                return Err(PowerFlowError::VoltageCollapse { bus: self.ids[i], v_squared_pu: v2 });
            }
            change = change.max((sqrt(v2) - sqrt(self.v2[i])).abs());
            self.v2[i] = v2;
        }
        Ok(change)
    }

    pub fn iterations(&self) -> u32 {
        self.iterations
    }

    /// Volts at bus index `i`.
    pub fn voltage(&self, i: usize) -> f64 {
        sqrt(self.v2[i]) * self.v_base[i]
    }

    /// Sending-end flow (watts, vars) of branch index `k`.
    pub fn branch_flow(&self, k: usize) -> BranchFlow {
        let i = self.branch_bus[k];
        BranchFlow { p: self.p_send[i] * S_BASE, q: self.q_send[i] * S_BASE }
    }

    /// Total (watts, vars) drawn from the root, including any load at the root.
    pub fn substation_power(&self) -> (f64, f64) {
        let (p, q) = self.root_totals();
        (p * S_BASE, q * S_BASE)
    }

    pub fn substation_apparent(&self) -> f64 {
        let (p, q) = self.substation_power();
        hypot(p, q)
    }

    fn root_totals(&self) -> (f64, f64) {
        let mut p = self.load_p[self.root];
        let mut q = self.load_q[self.root];
        for i in 0..self.ids.len() {
            if self.parent[i] == self.root {
                p += self.p_send[i];
                q += self.q_send[i];
            }
        }
        (p, q)
    }

    /// Series losses, watts.
    pub fn losses(&self) -> f64 {
        let mut total = 0.0;
        for i in 0..self.ids.len() {
            let p = self.parent[i];
            if p == NO_PARENT {
                continue;
            }
            let (ps, qs) = (self.p_send[i], self.q_send[i]);
            total += self.r[i] * (ps * ps + qs * qs) / self.v2[p];
        }
        total * S_BASE
    }

    /// Largest residual of the three branch-flow equations over all branches,
    /// per unit, evaluated at the current state.
    pub fn max_residual(&self) -> f64 {
        let n = self.ids.len();
        let mut child_p = vec![0.0; n];
        let mut child_q = vec![0.0; n];
        for i in 0..n {
            let p = self.parent[i];
            if p != NO_PARENT {
                child_p[p] += self.p_send[i];
                child_q[p] += self.q_send[i];
            }
        }
        let mut worst = 0.0f64;
        for i in 0..n {
            let p = self.parent[i];
            if p == NO_PARENT {
                continue;
            }
            let (ps, qs) = (self.p_send[i], self.q_send[i]);
            let (r, x) = (self.r[i], self.x[i]);
            let l = (ps * ps + qs * qs) / self.v2[p];
            let rp = ps - r * l - self.load_p[i] - child_p[i];
            let rq = qs - x * l - self.load_q[i] - child_q[i];
            let rv = self.v2[i] - (self.v2[p] - 2.0 * (r * ps + x * qs) + (r * r + x * x) * l);
            worst = worst.max(rp.abs()).max(rq.abs()).max(rv.abs());
        }
        worst
    }

    fn solution(&self, net: &Network) -> PowerFlowSolution {
        let voltage = self.ids.iter().enumerate().map(|(i, &id)| (id, self.voltage(i))).collect();
        let branch_flow = (0..net.branches.len()).map(|k| self.branch_flow(k)).collect();
        PowerFlowSolution {
            voltage,
            branch_flow,
            substation_apparent: self.substation_apparent(),
            iterations: self.iterations,
            max_residual: self.max_residual(),
            losses: self.losses(),
        }
    }

    /// Parent bus index of bus index `i`, if any.
    pub fn parent_of(&self, i: usize) -> Option<usize> {
        (self.parent[i] != NO_PARENT).then_some(self.parent[i])
    }

    /// Branch feeding bus index `i`, if any.
    pub fn parent_branch_of(&self, i: usize) -> Option<usize> {
        (self.parent_branch[i] != NO_PARENT).then_some(self.parent_branch[i])
    }
}

/// Solves the DistFlow equations on a radial network.
pub fn solve_distflow(
    net: &Network,
    inj: &InjectionSet,
    opts: &SolverOptions,
) -> Result<PowerFlowSolution, PowerFlowError> {
    let mut solver = DistFlowSolver::new(net)?;
    let n = solver.bus_count();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    for (&id, &(pw, qv)) in &inj.loads {
        let i = solver.index_of(id).ok_or(TopologyError::UnknownBus(id))?;
        p[i] += pw;
        q[i] += qv;
    }
    solver.solve(&p, &q, inj.source_voltage, opts)?;
    Ok(solver.solution(net))
}

/// Magnitude of complex power, VA.
pub fn apparent_power(p: f64, q: f64) -> f64 {
    hypot(p, q)
}

/// A single feeder chain described the way the closed-form voltage relation
/// needs it: branch impedances into nodes 1..n and each node's share of the
/// feeder-head active and reactive power.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeederLine {
    /// Ohms of the branch into node k+1, for k = 0..n.
    pub r: Vec<f64>,
    pub x: Vec<f64>,
    /// Share of head active power consumed at node k+1.
    pub phi_p: Vec<f64>,
    pub phi_q: Vec<f64>,
    /// Volts at node 0.
    pub v0: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LinearFlowError {
    #[error("feeder vectors have mismatched lengths")]
    Shape,
    #[error("consumption ratios must lie in [0, 1] and sum to at most 1")]
    BadRatios,
    #[error("node {0} is beyond the end of the feeder")]
    NoSuchNode(usize),
    #[error("squared voltage at node {node} went negative ({v_squared:e} V^2)")]
    NegativeSquare { node: usize, v_squared: f64 },
}

impl FeederLine {
    /// Builds the ratio form from absolute node loads; the head power is the
    /// lossless sum of node loads.
    pub fn from_loads(r: Vec<f64>, x: Vec<f64>, p: &[f64], q: &[f64], v0: f64) -> Result<(Self, f64, f64), LinearFlowError> {
        if p.len() != r.len() || q.len() != r.len() {
            return Err(LinearFlowError::Shape);
        }
        let p0: f64 = p.iter().sum();
        let q0: f64 = q.iter().sum();
        let ratio = |v: &[f64], total: f64| -> Vec<f64> {
            if total == 0.0 {
                vec![0.0; v.len()]
            } else {
                v.iter().map(|a| a / total).collect()
            }
        };
        let line = Self { phi_p: ratio(p, p0), phi_q: ratio(q, q0), r, x, v0 };
        line.check()?;
        Ok((line, p0, q0))
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    fn check(&self) -> Result<(), LinearFlowError> {
        let n = self.r.len();
        if self.x.len() != n || self.phi_p.len() != n || self.phi_q.len() != n {
            return Err(LinearFlowError::Shape);
        }
        for phi in [&self.phi_p, &self.phi_q] {
            let sum: f64 = phi.iter().sum();
            if phi.iter().any(|&f| !(0.0..=1.0).contains(&f)) || sum > 1.0 + 1e-12 {
                return Err(LinearFlowError::BadRatios);
            }
        }
        Ok(())
    }
}

/// Node voltages (volts) of a chain under LinDistFlow, by stepping the
/// squared-voltage recursion from the head; index 0 is the head.
pub fn lindistflow_voltages(line: &FeederLine, p_head: f64, q_head: f64) -> Result<Vec<f64>, LinearFlowError> {
    line.check()?;
    let mut out = Vec::with_capacity(line.len() + 1);
    out.push(line.v0);
    let mut v2 = line.v0 * line.v0;
    let (mut p, mut q) = (p_head, q_head);
    for k in 0..line.len() {
        v2 -= 2.0 * (line.r[k] * p + line.x[k] * q);
        if v2 < 0.0 {
            return Err(LinearFlowError::NegativeSquare { node: k + 1, v_squared: v2 });
        }
        out.push(sqrt(v2));
        p -= line.phi_p[k] * p_head;
        q -= line.phi_q[k] * q_head;
    }
    Ok(out)
}

/// Voltage at `node` from the feeder-head powers alone:
/// `V² = V0² − 2·P0·(R − ℙ) − 2·Q0·(X − ℚ)` with `ℙ = φᴾ·U·r` over the
/// branches downstream of node 1 and `U` the all-ones upper triangle.
pub fn closed_form_voltage(line: &FeederLine, node: usize, p_head: f64, q_head: f64) -> Result<f64, LinearFlowError> {
    line.check()?;
    if node > line.len() {
        return Err(LinearFlowError::NoSuchNode(node));
    }
    if node == 0 {
        return Ok(line.v0);
    }
    let total_r: f64 = line.r[..node].iter().sum();
    let total_x: f64 = line.x[..node].iter().sum();
    // U·rᵀ: entry a is the impedance from node a+1 down to `node`.
    let m = node - 1;
    let mut u_r = vec![0.0; m];
    let mut u_x = vec![0.0; m];
    for a in 0..m {
        for b in a..m {
            u_r[a] += line.r[b + 1];
            u_x[a] += line.x[b + 1];
        }
    }
    let cal_p: f64 = (0..m).map(|a| line.phi_p[a] * u_r[a]).sum();
    let cal_q: f64 = (0..m).map(|a| line.phi_q[a] * u_x[a]).sum();
    let v2 = line.v0 * line.v0 - 2.0 * p_head * (total_r - cal_p) - 2.0 * q_head * (total_x - cal_q);
    if v2 < 0.0 {
        return Err(LinearFlowError::NegativeSquare { node, v_squared: v2 });
    }
    Ok(sqrt(v2))
}
