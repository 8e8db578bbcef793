//! Radial network data model and the synthetic multi-neighborhood test feeder.
//!
//! Impedances are stored in ohms referred to the voltage level of the branch's
//! `to` bus, so a distribution transformer carries its leakage impedance in
//! secondary-side ohms. Voltages are volts at each bus's local nominal base.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BusId(pub u32);

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BusKind {
    SubstationRoot,
    Primary,
    TransformerSecondary,
    Service,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    pub kind: BusKind,
    /// Volts, line-to-line on the primary and the 240 V equivalent on secondaries.
    pub nominal_voltage: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    Line,
    Transformer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from: BusId,
    pub to: BusId,
    /// Ohms, referred to the `to` bus.
    #[serde(rename = "r")]
    pub resistance: f64,
    #[serde(rename = "x")]
    pub reactance: f64,
    pub kind: BranchKind,
    /// VA. Always present on transformers; the feeder head line carries the
    /// substation rating.
    pub rating: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub root: BusId,
    /// VA.
    pub substation_rating: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TopologyError {
    #[error("invalid feeder config field `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: &'static str },
    #[error("duplicate bus id {0}")]
    DuplicateBus(BusId),
    #[error("unknown bus id {0}")]
    UnknownBus(BusId),
    #[error("branch {from}->{to} references a bus that does not exist")]
    DanglingBranch { from: BusId, to: BusId },
    #[error("bus {id} is invalid: {reason}")]
    InvalidBus { id: BusId, reason: &'static str },
    #[error("branch {from}->{to} is invalid: {reason}")]
    InvalidBranch { from: BusId, to: BusId, reason: &'static str },
    #[error("network has no substation-root bus")]
    MissingRoot,
    #[error("network has {} substation-root buses (first two: {first}, {second})", count)]
    MultipleRoots { count: usize, first: BusId, second: BusId },
    #[error("declared root {declared} is not the substation-root bus {actual}")]
    RootMismatch { declared: BusId, actual: BusId },
    #[error("cycle closed by branch {from}->{to}")]
    Cycle { from: BusId, to: BusId },
    #[error("{count} bus(es) not connected to the root, first {first}")]
    Disconnected { count: usize, first: BusId },
    #[error("branch {from}->{to} points toward the root")]
    Misoriented { from: BusId, to: BusId },
    #[error("service bus {0} feeds a non-leaf bus")]
    ServiceFanout(BusId),
}

/// Series impedance in ohms (or per unit where a field says so).
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Impedance {
    pub r: f64,
    pub x: f64,
}

impl Impedance {
    pub const fn new(r: f64, x: f64) -> Self {
        Self { r, x }
    }
}

/// Parameters of the synthetic feeder.
///
/// The defaults describe 26 neighborhoods of four 25 kVA transformers, each
/// serving four houses, behind a 2.5 MVA feeder head. Most of the voltage
/// drop sits in the mostly resistive head, so every service voltage tracks
/// the shared feeder loading; the base-load evening peak leaves the weakest
/// service bus near 0.955 pu.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeederConfig {
    pub neighborhoods: u32,
    pub transformers_per_neighborhood: u32,
    pub houses_per_transformer: u32,
    pub primary_voltage: f64,
    pub secondary_voltage: f64,
    pub substation_rating: f64,
    pub transformer_rating: f64,
    /// Substation transformer plus head cable, primary-side ohms.
    pub head_impedance: Impedance,
    /// Every primary segment between neighborhood taps, primary-side ohms.
    pub primary_segment: Impedance,
    /// Number of child taps each primary tap feeds.
    pub primary_branching: u32,
    /// Leakage impedance of a distribution transformer, per unit on its rating.
    pub transformer_impedance_pu: Impedance,
    /// Service cable from transformer secondary to a house, secondary-side ohms.
    pub service_drop: Impedance,
}

impl Default for FeederConfig {
    fn default() -> Self {
        Self {
            neighborhoods: 26,
            transformers_per_neighborhood: 4,
            houses_per_transformer: 4,
            primary_voltage: 4800.0,
            secondary_voltage: 240.0,
            substation_rating: 2.5e6,
            transformer_rating: 25e3,
            head_impedance: Impedance::new(0.7, 0.1),
            primary_segment: Impedance::new(0.03, 0.02),
            primary_branching: 3,
            transformer_impedance_pu: Impedance::new(0.003, 0.005),
            service_drop: Impedance::new(0.004, 0.002),
        }
    }
}

impl FeederConfig {
    pub fn check(&self) -> Result<(), TopologyError> {
        let bad = |field, reason| Err(TopologyError::InvalidConfig { field, reason });
        if self.neighborhoods == 0 {
            return bad("neighborhoods", "must be at least 1");
        }
        if self.transformers_per_neighborhood == 0 {
            return bad("transformers_per_neighborhood", "must be at least 1");
        }
        if self.houses_per_transformer == 0 {
            return bad("houses_per_transformer", "must be at least 1");
        }
        if self.primary_branching == 0 {
            return bad("primary_branching", "must be at least 1");
        }
        let positive = [
            ("primary_voltage", self.primary_voltage),
            ("secondary_voltage", self.secondary_voltage),
            ("substation_rating", self.substation_rating),
            ("transformer_rating", self.transformer_rating),
        ];
        for (field, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return bad(field, "must be finite and positive");
            }
        }
        let impedances = [
            ("head_impedance", self.head_impedance),
            ("primary_segment", self.primary_segment),
            ("transformer_impedance_pu", self.transformer_impedance_pu),
            ("service_drop", self.service_drop),
        ];
        for (field, z) in impedances {
            if !(z.r.is_finite() && z.x.is_finite()) || z.r < 0.0 || z.x < 0.0 {
                return bad(field, "components must be finite and non-negative");
            }
            if z.r == 0.0 && z.x == 0.0 {
                return bad(field, "must not be zero");
            }
        }
        Ok(())
    }
}

impl Network {
    /// Service buses in id order; the position is the house index.
    pub fn houses(&self) -> Vec<BusId> {
        let mut ids: Vec<BusId> = self
            .buses
            .iter()
            .filter(|b| b.kind == BusKind::Service)
            .map(|b| b.id)
            .collect();
        ids.sort_unstable();
        ids
    }

    /// Indices into `branches` of every transformer, in branch order.
    pub fn transformers(&self) -> Vec<usize> {
        self.branches
            .iter()
            .enumerate()
            .filter(|(_, b)| b.kind == BranchKind::Transformer)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn house_count(&self) -> usize {
        self.buses.iter().filter(|b| b.kind == BusKind::Service).count()
    }

    pub fn transformer_count(&self) -> usize {
        self.branches.iter().filter(|b| b.kind == BranchKind::Transformer).count()
    }

    /// Neighborhood label of each transformer (same order as [`Network::transformers`]):
    /// transformers fed from the same primary tap share a label, numbered in
    /// order of first appearance.
    pub fn transformer_groups(&self) -> Vec<usize> {
        let mut labels: BTreeMap<BusId, usize> = BTreeMap::new();
        self.transformers()
            .into_iter()
            .map(|i| {
                let next = labels.len();
                *labels.entry(self.branches[i].from).or_insert(next)
            })
            .collect()
    }

    pub fn bus(&self, id: BusId) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn id_index(&self) -> BTreeMap<BusId, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }
}

/// Result of a successful radial check: a root-first traversal order and the
/// parent branch of every bus.
#[derive(Clone, Debug, PartialEq)]
pub struct RadialReport {
    index: BTreeMap<BusId, usize>,
    /// Bus indices, root first, every parent before its children.
    pub order: Vec<usize>,
    /// Branch index feeding each bus (None for the root).
    pub parent_branch: Vec<Option<usize>>,
    /// Parent bus index of each bus (None for the root).
    pub parent: Vec<Option<usize>>,
    pub depth: Vec<usize>,
}

impl RadialReport {
    pub fn index_of(&self, id: BusId) -> Option<usize> {
        self.index.get(&id).copied()
    }

    pub fn depth_of(&self, id: BusId) -> Option<usize> {
        self.index_of(id).map(|i| self.depth[i])
    }

    /// Branch indices from the root down to `id`.
    pub fn path_to_root(&self, id: BusId) -> Result<Vec<usize>, TopologyError> {
        let mut at = self.index_of(id).ok_or(TopologyError::UnknownBus(id))?;
        let mut path = Vec::with_capacity(self.depth[at]);
        while let Some(branch) = self.parent_branch[at] {
            path.push(branch);
            at = self.parent[at].expect("non-root bus has a parent");
        }
        path.reverse();
        Ok(path)
    }
}

fn check_elements(net: &Network) -> Result<BTreeMap<BusId, usize>, TopologyError> {
    let mut index = BTreeMap::new();
    for (i, bus) in net.buses.iter().enumerate() {
        if index.insert(bus.id, i).is_some() {
            return Err(TopologyError::DuplicateBus(bus.id));
        }
        if !(bus.nominal_voltage.is_finite() && bus.nominal_voltage > 0.0) {
            return Err(TopologyError::InvalidBus { id: bus.id, reason: "nominal voltage must be positive" });
        }
    }
    for br in &net.branches {
        let invalid = |reason| TopologyError::InvalidBranch { from: br.from, to: br.to, reason };
        if !index.contains_key(&br.from) || !index.contains_key(&br.to) {
            return Err(TopologyError::DanglingBranch { from: br.from, to: br.to });
        }
        if !(br.resistance.is_finite() && br.reactance.is_finite()) || br.resistance < 0.0 || br.reactance < 0.0 {
            return Err(invalid("impedance must be finite and non-negative"));
        }
        if br.resistance == 0.0 && br.reactance == 0.0 {
            return Err(invalid("impedance must not be zero"));
        }
        match (br.kind, br.rating) {
            (BranchKind::Transformer, Some(r)) if r > 0.0 && r.is_finite() => {}
            (BranchKind::Transformer, _) => return Err(invalid("transformer needs a positive rating")),
            (BranchKind::Line, Some(r)) if !(r > 0.0 && r.is_finite()) => {
                return Err(invalid("rating must be positive"))
            }
            _ => {}
        }
    }
    Ok(index)
}

/// Confirms the network is a tree hanging from its single substation-root
/// bus, with every branch oriented away from the root.
pub fn validate_radial(net: &Network) -> Result<RadialReport, TopologyError> {
    let index = check_elements(net)?;

    let mut roots = net.buses.iter().filter(|b| b.kind == BusKind::SubstationRoot);
    let root = match (roots.next(), roots.next()) {
        (None, _) => return Err(TopologyError::MissingRoot),
        (Some(a), Some(b)) => {
            return Err(TopologyError::MultipleRoots { count: 2 + roots.count(), first: a.id, second: b.id })
        }
        (Some(r), None) => r.id,
    };
    if root != net.root {
        return Err(TopologyError::RootMismatch { declared: net.root, actual: root });
    }

    let n = net.buses.len();
    let mut outgoing: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (k, br) in net.branches.iter().enumerate() {
        outgoing[index[&br.from]].push(k);
    }

    let root_idx = index[&root];
    let mut parent = vec![None; n];
    let mut parent_branch = vec![None; n];
    let mut depth = vec![0usize; n];
    let mut seen = vec![false; n];
    let mut used = vec![false; net.branches.len()];
    let mut order = Vec::with_capacity(n);
    let mut queue = VecDeque::new();
    seen[root_idx] = true;
    queue.push_back(root_idx);
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &k in &outgoing[u] {
            let br = &net.branches[k];
            let v = index[&br.to];
            if seen[v] {
                return Err(TopologyError::Cycle { from: br.from, to: br.to });
            }
            used[k] = true;
            seen[v] = true;
            parent[v] = Some(u);
            parent_branch[v] = Some(k);
            depth[v] = depth[u] + 1;
            queue.push_back(v);
        }
    }
    // Branches the oriented walk never took either close a loop among reached
    // buses, point back toward the root, or live in a detached component.
    for (k, br) in net.branches.iter().enumerate() {
        if !used[k] && seen[index[&br.from]] && seen[index[&br.to]] {
            return Err(TopologyError::Cycle { from: br.from, to: br.to });
        }
    }
    for (k, br) in net.branches.iter().enumerate() {
        if !used[k] && seen[index[&br.to]] {
            return Err(TopologyError::Misoriented { from: br.from, to: br.to });
        }
    }
    if order.len() != n {
        let missing: Vec<BusId> = (0..n).filter(|&i| !seen[i]).map(|i| net.buses[i].id).collect();
        return Err(TopologyError::Disconnected { count: missing.len(), first: missing[0] });
    }

    let mut children = vec![0usize; n];
    for p in parent.iter().flatten() {
        children[*p] += 1;
    }
    for (i, bus) in net.buses.iter().enumerate() {
        if bus.kind != BusKind::Service {
            continue;
        }
        for &k in &outgoing[i] {
            let child = index[&net.branches[k].to];
            if children[child] > 0 {
                return Err(TopologyError::ServiceFanout(bus.id));
            }
        }
    }

    Ok(RadialReport { index, order, parent_branch, parent, depth })
}

/// Cumulative series resistance and reactance (ohms) from the root to `bus`.
pub fn path_impedance(net: &Network, bus: BusId) -> Result<(f64, f64), TopologyError> {
    let report = validate_radial(net)?;
    let path = report.path_to_root(bus)?;
    Ok(path.iter().fold((0.0, 0.0), |(r, x), &k| {
        (r + net.branches[k].resistance, x + net.branches[k].reactance)
    }))
}

pub fn to_per_unit(volts: f64, nominal: f64) -> f64 {
    volts / nominal
}

pub fn from_per_unit(pu: f64, nominal: f64) -> f64 {
    pu * nominal
}

/// Builds the radial test feeder: a feeder head line from the substation to a
/// tree of primary taps, one tap per neighborhood, each tap feeding its
/// distribution transformers, each transformer feeding its houses.
///
/// Bus ids are assigned in construction order: root, primary taps, then for
/// every transformer its secondary bus followed by its houses.
pub fn build_synthetic_feeder(cfg: &FeederConfig) -> Result<Network, TopologyError> {
    cfg.check()?;
    let n_hood = cfg.neighborhoods as usize;
    let n_xf = cfg.transformers_per_neighborhood as usize;
    let n_house = cfg.houses_per_transformer as usize;
    let total = 1 + n_hood + n_hood * n_xf * (1 + n_house);

    let mut buses = Vec::with_capacity(total);
    let mut branches = Vec::with_capacity(total - 1);
    let mut next = 0u32;
    let mut add_bus = |buses: &mut Vec<Bus>, kind, nominal_voltage| {
        let id = BusId(next);
        next += 1;
        buses.push(Bus { id, kind, nominal_voltage });
        id
    };

    let root = add_bus(&mut buses, BusKind::SubstationRoot, cfg.primary_voltage);
    let taps: Vec<BusId> =
        (0..n_hood).map(|_| add_bus(&mut buses, BusKind::Primary, cfg.primary_voltage)).collect();

    branches.push(Branch {
        from: root,
        to: taps[0],
        resistance: cfg.head_impedance.r,
        reactance: cfg.head_impedance.x,
        kind: BranchKind::Line,
        rating: Some(cfg.substation_rating),
    });
    let fanout = cfg.primary_branching as usize;
    for k in 1..n_hood {
        branches.push(Branch {
            from: taps[(k - 1) / fanout],
            to: taps[k],
            resistance: cfg.primary_segment.r,
            reactance: cfg.primary_segment.x,
            kind: BranchKind::Line,
            rating: None,
        });
    }

    let z_base = cfg.secondary_voltage * cfg.secondary_voltage / cfg.transformer_rating;
    for &tap in &taps {
        for _ in 0..n_xf {
            let secondary = add_bus(&mut buses, BusKind::TransformerSecondary, cfg.secondary_voltage);
            branches.push(Branch {
                from: tap,
                to: secondary,
                resistance: cfg.transformer_impedance_pu.r * z_base,
                reactance: cfg.transformer_impedance_pu.x * z_base,
                kind: BranchKind::Transformer,
                rating: Some(cfg.transformer_rating),
            });
            for _ in 0..n_house {
                let house = add_bus(&mut buses, BusKind::Service, cfg.secondary_voltage);
                branches.push(Branch {
                    from: secondary,
                    to: house,
                    resistance: cfg.service_drop.r,
                    reactance: cfg.service_drop.x,
                    kind: BranchKind::Line,
                    rating: None,
                });
            }
        }
    }

    Ok(Network { buses, branches, root, substation_rating: cfg.substation_rating })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(z: &[(f64, f64)]) -> Network {
        let mut buses = vec![Bus { id: BusId(0), kind: BusKind::SubstationRoot, nominal_voltage: 240.0 }];
        let mut branches = Vec::new();
        for (i, &(r, x)) in z.iter().enumerate() {
            let id = BusId(i as u32 + 1);
            let kind = if i + 1 == z.len() { BusKind::Service } else { BusKind::Primary };
            buses.push(Bus { id, kind, nominal_voltage: 240.0 });
            branches.push(Branch {
                from: BusId(i as u32),
                to: id,
                resistance: r,
                reactance: x,
                kind: BranchKind::Line,
                rating: None,
            });
        }
        Network { buses, branches, root: BusId(0), substation_rating: 1e5 }
    }

    fn minimal_cfg() -> FeederConfig {
        FeederConfig {
            neighborhoods: 1,
            transformers_per_neighborhood: 1,
            houses_per_transformer: 1,
            ..FeederConfig::default()
        }
    }

    #[test]
    fn default_feeder_scale() {
        let net = build_synthetic_feeder(&FeederConfig::default()).unwrap();
        assert_eq!(net.house_count(), 416);
        assert_eq!(net.transformer_count(), 104);
        assert_eq!(net.buses.len(), 1 + 26 + 104 + 416);
        let rated_25k = net.branches.iter().filter(|b| b.rating == Some(25e3)).count();
        assert_eq!(rated_25k, 104);
        let rated_head = net.branches.iter().filter(|b| b.rating == Some(net.substation_rating)).count();
        assert_eq!(rated_head, 1);
        assert_eq!(net.branches[0].from, net.root);
        let groups = net.transformer_groups();
        assert_eq!(groups.iter().max(), Some(&25));
    }

    #[test]
    fn minimal_feeder_is_a_chain() {
        let net = build_synthetic_feeder(&minimal_cfg()).unwrap();
        let report = validate_radial(&net).unwrap();
        let kinds: Vec<BusKind> = report.order.iter().map(|&i| net.buses[i].kind).collect();
        assert_eq!(
            kinds,
            [BusKind::SubstationRoot, BusKind::Primary, BusKind::TransformerSecondary, BusKind::Service]
        );
        assert_eq!(report.depth, vec![0, 1, 2, 3]);
    }

    #[test]
    fn builder_rejects_zero_counts() {
        for cfg in [
            FeederConfig { neighborhoods: 0, ..FeederConfig::default() },
            FeederConfig { transformers_per_neighborhood: 0, ..FeederConfig::default() },
            FeederConfig { houses_per_transformer: 0, ..FeederConfig::default() },
        ] {
            assert!(matches!(build_synthetic_feeder(&cfg), Err(TopologyError::InvalidConfig { .. })));
        }
        let neg = FeederConfig { substation_rating: -1.0, ..FeederConfig::default() };
        assert!(matches!(
            build_synthetic_feeder(&neg),
            Err(TopologyError::InvalidConfig { field: "substation_rating", .. })
        ));
    }

    #[test]
    fn builder_is_deterministic() {
        let a = build_synthetic_feeder(&FeederConfig::default()).unwrap();
        let b = build_synthetic_feeder(&FeederConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn three_bus_chain_depths() {
        let net = chain(&[(0.1, 0.2), (0.3, 0.4)]);
        let report = validate_radial(&net).unwrap();
        assert_eq!(report.depth, vec![0, 1, 2]);
        assert_eq!(report.path_to_root(BusId(2)).unwrap(), vec![0, 1]);
    }

    #[test]
    fn back_edge_is_reported_as_cycle() {
        let mut net = chain(&[(0.1, 0.2), (0.3, 0.4)]);
        net.branches.push(Branch {
            from: BusId(2),
            to: BusId(0),
            resistance: 0.1,
            reactance: 0.1,
            kind: BranchKind::Line,
            rating: None,
        });
        assert_eq!(validate_radial(&net), Err(TopologyError::Cycle { from: BusId(2), to: BusId(0) }));
    }

    #[test]
    fn disconnected_and_multiple_roots() {
        let mut net = chain(&[(0.1, 0.2)]);
        net.buses.push(Bus { id: BusId(7), kind: BusKind::Primary, nominal_voltage: 240.0 });
        assert_eq!(validate_radial(&net), Err(TopologyError::Disconnected { count: 1, first: BusId(7) }));

        let mut net = chain(&[(0.1, 0.2)]);
        net.buses.push(Bus { id: BusId(9), kind: BusKind::SubstationRoot, nominal_voltage: 240.0 });
        assert_eq!(
            validate_radial(&net),
            Err(TopologyError::MultipleRoots { count: 2, first: BusId(0), second: BusId(9) })
        );
    }

    #[test]
    fn reversed_branch_rejected() {
        let mut net = chain(&[(0.1, 0.2), (0.3, 0.4)]);
        let b = &mut net.branches[1];
        core::mem::swap(&mut b.from, &mut b.to);
        assert!(matches!(validate_radial(&net), Err(TopologyError::Misoriented { .. })));
    }

    #[test]
    fn path_impedance_sums_branches() {
        let net = chain(&[(0.1, 0.2), (0.3, 0.4)]);
        assert_eq!(path_impedance(&net, BusId(0)).unwrap(), (0.0, 0.0));
        let (r, x) = path_impedance(&net, BusId(2)).unwrap();
        assert!((r - 0.4).abs() < 1e-15 && (x - 0.6).abs() < 1e-15);
        assert_eq!(path_impedance(&net, BusId(5)), Err(TopologyError::UnknownBus(BusId(5))));
    }

    #[test]
    fn transformer_rating_required() {
        let mut net = chain(&[(0.1, 0.2)]);
        net.branches[0].kind = BranchKind::Transformer;
        assert!(matches!(validate_radial(&net), Err(TopologyError::InvalidBranch { .. })));
    }

    #[test]
    fn per_unit_helpers() {
        assert_eq!(to_per_unit(216.0, 240.0), 0.9);
        assert_eq!(from_per_unit(0.9, 240.0), 216.0);
    }
}
