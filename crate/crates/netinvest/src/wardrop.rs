//! Second-stage user equilibrium: composite latency slope of an invested
//! series-parallel network, elastic demand against a reservation function,
//! and the induced edge and path flows.
//!
//! With per-edge cost `f_e / b_e` (infinite on uninvested edges), the
//! equilibrium cost of routing `x` units is linear, `c_b(x) = sigma * x`,
//! where `sigma` composes over the pruned tree: an edge contributes `1/b_e`,
//! series adds slopes, parallel combines them harmonically. Demand settles at
//! the smallest `x` where willingness to pay `u(x)` has dropped to `c_b(x)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::numeric::bisect_first_nonpositive;
use crate::sp_graph::{EdgeMap, Path, SpTree};

/// Bisection tolerance for numeric demand resolution.
const DEMAND_XTOL: f64 = 1e-12;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum WardropError {
    #[error("reservation function must be non-increasing: u({x1}) = {u1} < u({x2}) = {u2} with x1 < x2")]
    NonMonotoneReservation { x1: f64, u1: f64, x2: f64, u2: f64 },
    #[error("invalid reservation function: {0}")]
    InvalidReservation(String),
    #[error("no investment on any path but positive demand {demand} to route")]
    EmptyInvestment { demand: f64 },
}

/// Non-increasing willingness-to-pay curve `u(x)` of the user mass.
///
/// Serialization lives in the `instance` module, which defines the tagged
/// on-disk form.
#[derive(Clone, Debug, PartialEq)]
pub enum Reservation {
    /// `u(x) = value` for `x <= population`, zero beyond: a homogeneous user
    /// mass of size `population`, each valuing service at `value`.
    Homogeneous { value: f64, population: f64 },
    /// `u(x) = x^(-1/alpha)`, `alpha > 0`.
    PowerLaw { alpha: f64 },
    /// Piecewise-linear interpolation through validated breakpoints.
    Piecewise(PiecewiseReservation),
}

/// Breakpoints `(x_i, u_i)` with strictly increasing `x` and non-increasing,
/// nonnegative `u`. Left of the first breakpoint the curve is flat at `u_0`;
/// right of the last it is zero.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseReservation {
    points: Vec<(f64, f64)>,
}

impl PiecewiseReservation {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self, WardropError> {
        if points.is_empty() {
            return Err(WardropError::InvalidReservation("no breakpoints".into()));
        }
        for &(x, u) in &points {
            if !x.is_finite() || !u.is_finite() || x < 0.0 || u < 0.0 {
                return Err(WardropError::InvalidReservation(format!(
                    "breakpoint ({x}, {u}) out of range"
                )));
            }
        }
        for w in points.windows(2) {
            let ((x1, u1), (x2, u2)) = (w[0], w[1]);
            if x2 <= x1 {
                return Err(WardropError::InvalidReservation(format!(
                    "breakpoint abscissae must strictly increase: {x1} then {x2}"
                )));
            }
            if u2 > u1 {
                return Err(WardropError::NonMonotoneReservation { x1, u1, x2, u2 });
            }
        }
        Ok(PiecewiseReservation { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    fn max_demand(&self) -> f64 {
        self.points.last().unwrap().0
    }

    /// Linear interpolation; flat left of the first breakpoint, zero beyond
    /// the last.
    pub fn eval(&self, x: f64) -> f64 {
        let pts = &self.points;
        if x <= pts[0].0 {
            return pts[0].1;
        }
        for w in pts.windows(2) {
            let ((x1, u1), (x2, u2)) = (w[0], w[1]);
            if x <= x2 {
                return u1 + (u2 - u1) * (x - x1) / (x2 - x1);
            }
        }
        0.0
    }

    /// Exact integral of the piecewise-linear curve on `[0, x]`.
    pub fn integral(&self, x: f64) -> f64 {
        let pts = &self.points;
        let mut acc = 0.0;
        let first = pts[0];
        let head = x.min(first.0);
        acc += first.1 * head;
        if x <= first.0 {
            return acc;
        }
        for w in pts.windows(2) {
            let ((x1, u1), (x2, _)) = (w[0], w[1]);
            if x <= x1 {
                break;
            }
            let hi = x.min(x2);
            let u_hi = self.eval(hi);
            acc += 0.5 * (u1 + u_hi) * (hi - x1);
        }
        acc
    }
}

impl TryFrom<Vec<(f64, f64)>> for PiecewiseReservation {
    type Error = WardropError;
    fn try_from(points: Vec<(f64, f64)>) -> Result<Self, WardropError> {
        PiecewiseReservation::new(points)
    }
}

impl From<PiecewiseReservation> for Vec<(f64, f64)> {
    fn from(r: PiecewiseReservation) -> Self {
        r.points
    }
}

impl Reservation {
    pub fn homogeneous(value: f64, population: f64) -> Result<Self, WardropError> {
        if !(value.is_finite() && population.is_finite() && value >= 0.0 && population >= 0.0) {
            return Err(WardropError::InvalidReservation(format!(
                "homogeneous reservation needs finite value >= 0 and population >= 0, got ({value}, {population})"
            )));
        }
        Ok(Reservation::Homogeneous { value, population })
    }

    pub fn power_law(alpha: f64) -> Result<Self, WardropError> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(WardropError::InvalidReservation(format!(
                "power-law exponent must be finite and positive, got {alpha}"
            )));
        }
        Ok(Reservation::PowerLaw { alpha })
    }

    pub fn piecewise(points: Vec<(f64, f64)>) -> Result<Self, WardropError> {
        Ok(Reservation::Piecewise(PiecewiseReservation::new(points)?))
    }

    /// Willingness to pay of the marginal user at demand `x`.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Reservation::Homogeneous { value, population } => {
                if x <= *population {
                    *value
                } else {
                    0.0
                }
            }
            Reservation::PowerLaw { alpha } => {
                if x <= 0.0 {
                    f64::INFINITY
                } else {
                    x.powf(-1.0 / alpha)
                }
            }
            Reservation::Piecewise(p) => p.eval(x),
        }
    }

    /// Exact gross utility, the integral of `u` on `[0, x]`. Infinite for
    /// the power law with `alpha <= 1`, whose integral diverges at the
    /// origin; welfare computations treat that case as an explicit error.
    pub fn gross_utility(&self, x: f64) -> f64 {
        match self {
            Reservation::Homogeneous { value, population } => value * x.min(*population),
            Reservation::PowerLaw { alpha } => {
                if x <= 0.0 {
                    0.0
                } else if *alpha > 1.0 {
                    (alpha / (alpha - 1.0)) * x.powf((alpha - 1.0) / alpha)
                } else {
                    f64::INFINITY
                }
            }
            Reservation::Piecewise(p) => p.integral(x),
        }
    }
}

/// Composite cost slope of the invested network: the per-unit cost of total
/// flow `x` is `slope * x`. Infinite when no fully invested s-t path exists.
///
/// Composition over the pruned tree: edge `1/b_e`, series sums child slopes,
/// parallel combines harmonically (`1 / sum of 1/g_i`).
pub fn compose_slope(tree: &SpTree, invest: &EdgeMap) -> f64 {
    match tree.prune_relevant(invest) {
        None => f64::INFINITY,
        Some(pruned) => slope_of_invested(&pruned, invest),
    }
}

/// Slope of a tree whose every edge carries positive investment.
fn slope_of_invested(tree: &SpTree, invest: &EdgeMap) -> f64 {
    match tree {
        SpTree::Edge { id } => {
            let b = invest.get(id).copied().unwrap_or(0.0);
            debug_assert!(b > 0.0, "pruned tree kept uninvested edge {id}");
            1.0 / b
        }
        SpTree::Series { children } => children.iter().map(|c| slope_of_invested(c, invest)).sum(),
        SpTree::Parallel { children } => {
            let recip: f64 = children
                .iter()
                .map(|c| 1.0 / slope_of_invested(c, invest))
                .sum();
            1.0 / recip
        }
    }
}

/// Equilibrium demand `inf { x : u(x) <= slope * x }` for a validated
/// reservation curve.
///
/// Homogeneous and power-law classes resolve in closed form
/// (`min(value / slope, population)` and `slope^(-alpha/(alpha+1))`);
/// piecewise-linear curves are bisected to 1e-12.
pub fn solve_demand(slope: f64, res: &Reservation) -> f64 {
    if slope.is_infinite() {
        return 0.0;
    }
    debug_assert!(slope > 0.0, "finite slope must be positive, got {slope}");
    match res {
        Reservation::Homogeneous { value, population } => (value / slope).min(*population),
        Reservation::PowerLaw { alpha } => slope.powf(-alpha / (alpha + 1.0)),
        Reservation::Piecewise(p) => {
            if p.eval(0.0) <= 0.0 {
                return 0.0;
            }
            let hi = p.max_demand();
            if hi == 0.0 {
                return 0.0;
            }
            bisect_first_nonpositive(|x| p.eval(x) - slope * x, 0.0, hi, DEMAND_XTOL)
        }
    }
}

/// Joint second-stage outcome for one investment profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WardropOutcome {
    /// Composite cost slope `sigma`; `+inf` when no invested path exists.
    #[serde(with = "crate::instance::ext_real")]
    pub slope: f64,
    /// Equilibrium total demand.
    pub demand: f64,
    /// Equilibrium flow on every edge of the tree (zero on pruned edges).
    pub edge_flows: EdgeMap,
    /// Cost paid per routed user, `slope * demand` (`+inf` with no service).
    #[serde(with = "crate::instance::ext_real")]
    pub per_user_cost: f64,
}

/// Computes slope, demand and flows in one pass.
pub fn wardrop_outcome(tree: &SpTree, invest: &EdgeMap, res: &Reservation) -> WardropOutcome {
    let slope = compose_slope(tree, invest);
    let demand = solve_demand(slope, res);
    let edge_flows = edge_flows(tree, invest, demand);
    let per_user_cost = if slope.is_infinite() {
        f64::INFINITY
    } else {
        slope * demand
    };
    WardropOutcome { slope, demand, edge_flows, per_user_cost }
}

/// Equilibrium edge flows when `demand` units are routed. Every edge of the
/// tree appears in the result; edges off fully invested paths carry zero.
/// Within a parallel composition flow splits inversely proportional to the
/// children's slopes, which equalizes path costs.
pub fn edge_flows(tree: &SpTree, invest: &EdgeMap, demand: f64) -> EdgeMap {
    let mut flows: EdgeMap = tree.edge_ids().into_iter().map(|e| (e, 0.0)).collect();
    if demand > 0.0 {
        if let Some(pruned) = tree.prune_relevant(invest) {
            assign_flow(&pruned, invest, demand, &mut flows);
        }
    }
    flows
}

fn assign_flow(tree: &SpTree, invest: &EdgeMap, amount: f64, flows: &mut EdgeMap) {
    match tree {
        SpTree::Edge { id } => {
            *flows.get_mut(id).expect("edge of pruned tree exists in full tree") = amount;
        }
        SpTree::Series { children } => {
            for c in children {
                assign_flow(c, invest, amount, flows);
            }
        }
        SpTree::Parallel { children } => {
            let conductances: Vec<f64> = children
                .iter()
                .map(|c| 1.0 / slope_of_invested(c, invest))
                .collect();
            let total: f64 = conductances.iter().sum();
            for (c, g) in children.iter().zip(&conductances) {
                assign_flow(c, invest, amount * g / total, flows);
            }
        }
    }
}

/// Splits total demand across shortest paths proportionally to the per-path
/// investment totals `b_P`: `f_P = b_P / |b| * demand`. This is the flow
/// decomposition under which every invested edge carries cost
/// `demand / |b|`.
///
/// Fails with [`WardropError::EmptyInvestment`] when `demand > 0` but the
/// strategy places no investment at all.
pub fn path_flow_decomposition(
    tree: &SpTree,
    path_invest: &BTreeMap<Path, f64>,
    demand: f64,
) -> Result<BTreeMap<Path, f64>, WardropError> {
    let k = tree.shortest_path_length() as usize;
    let tree_edges: std::collections::BTreeSet<_> = tree.edge_ids().into_iter().collect();
    for (path, v) in path_invest {
        assert_eq!(
            path.len(),
            k,
            "path investment must live on shortest paths (length {k}), got length {}",
            path.len()
        );
        assert!(
            path.iter().all(|e| tree_edges.contains(e)),
            "path uses edges outside the tree"
        );
        assert!(*v >= 0.0, "negative path investment {v}");
    }
    let total: f64 = path_invest.values().sum();
    if total <= 0.0 {
        if demand > 0.0 {
            return Err(WardropError::EmptyInvestment { demand });
        }
        return Ok(path_invest.keys().map(|p| (p.clone(), 0.0)).collect());
    }
    Ok(path_invest
        .iter()
        .map(|(p, b)| (p.clone(), b / total * demand))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sp_graph::EdgeId;

    fn invest(pairs: &[(&str, f64)]) -> EdgeMap {
        pairs.iter().map(|(id, v)| (EdgeId::from(*id), *v)).collect()
    }

    #[test]
    fn slope_composes_series_and_parallel() {
        // series(parallel(e1: 1, e2: 1), e3: 2): harmonic(1, 1) + 1/2 = 1.
        let t = SpTree::series(vec![
            SpTree::parallel(vec![SpTree::edge("e1"), SpTree::edge("e2")]),
            SpTree::edge("e3"),
        ]);
        let b = invest(&[("e1", 1.0), ("e2", 1.0), ("e3", 2.0)]);
        assert!((compose_slope(&t, &b) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn slope_is_infinite_without_a_full_path() {
        let t = SpTree::series(vec![SpTree::edge("e1"), SpTree::edge("e2")]);
        let b = invest(&[("e1", 5.0)]);
        assert!(compose_slope(&t, &b).is_infinite());
    }

    #[test]
    fn slope_ignores_uninvested_parallel_branch() {
        let t = SpTree::parallel(vec![SpTree::edge("e1"), SpTree::edge("e2")]);
        let b = invest(&[("e1", 2.0), ("e2", 0.0)]);
        assert!((compose_slope(&t, &b) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn homogeneous_demand_takes_binding_minimum() {
        let res = Reservation::homogeneous(2.0, 1.0).unwrap();
        assert!((solve_demand(2.0, &res) - 1.0).abs() < 1e-15); // tie resolves to population
        assert!((solve_demand(8.0, &res) - 0.25).abs() < 1e-15);
        assert!((solve_demand(0.5, &res) - 1.0).abs() < 1e-15);
        assert_eq!(solve_demand(f64::INFINITY, &res), 0.0);
    }

    #[test]
    fn power_law_demand_matches_bisection_oracle() {
        // Closed form sigma^(-alpha/(alpha+1)) against direct bisection of
        // x^(-1/alpha) = sigma * x.
        let res = Reservation::power_law(3.0).unwrap();
        let sigma = 4.0;
        let closed = solve_demand(sigma, &res);
        let oracle = bisect_first_nonpositive(
            |x: f64| x.powf(-1.0 / 3.0) - sigma * x,
            1e-9,
            10.0,
            1e-14,
        );
        assert!((closed - 0.25f64.powf(0.75)).abs() < 1e-12);
        assert!((closed - oracle).abs() < 1e-9);
    }

    #[test]
    fn piecewise_demand_bisects_to_crossing() {
        // u(x) = 4 - 2x, slope 2: crossing at x = 1.
        let res = Reservation::piecewise(vec![(0.0, 4.0), (2.0, 0.0)]).unwrap();
        assert!((solve_demand(2.0, &res) - 1.0).abs() < 1e-10);
        // A homogeneous curve expressed as breakpoints agrees with the
        // homogeneous closed form.
        let step = Reservation::piecewise(vec![(0.0, 2.0), (1.0, 2.0)]).unwrap();
        let hom = Reservation::homogeneous(2.0, 1.0).unwrap();
        for slope in [0.5, 2.0, 8.0] {
            assert!((solve_demand(slope, &step) - solve_demand(slope, &hom)).abs() < 1e-9);
        }
    }

    #[test]
    fn piecewise_rejects_increasing_values() {
        let err = Reservation::piecewise(vec![(0.0, 1.0), (1.0, 2.0)]).unwrap_err();
        assert!(matches!(err, WardropError::NonMonotoneReservation { .. }));
    }

    #[test]
    fn parallel_flow_splits_inverse_to_slopes() {
        // parallel(series(e1, e2) with slope 2, e3 with slope 1), demand 3:
        // conductances 1/2 and 1, so flows 1 and 2; path costs equalize at 2.
        let t = SpTree::parallel(vec![
            SpTree::series(vec![SpTree::edge("e1"), SpTree::edge("e2")]),
            SpTree::edge("e3"),
        ]);
        let b = invest(&[("e1", 1.0), ("e2", 1.0), ("e3", 1.0)]);
        let flows = edge_flows(&t, &b, 3.0);
        assert!((flows[&EdgeId::from("e1")] - 1.0).abs() < 1e-12);
        assert!((flows[&EdgeId::from("e2")] - 1.0).abs() < 1e-12);
        assert!((flows[&EdgeId::from("e3")] - 2.0).abs() < 1e-12);
        let cost_upper = flows[&EdgeId::from("e1")] / 1.0 + flows[&EdgeId::from("e2")] / 1.0;
        let cost_lower = flows[&EdgeId::from("e3")] / 1.0;
        assert!((cost_upper - cost_lower).abs() < 1e-12);
    }

    #[test]
    fn zero_demand_gives_zero_flows_everywhere() {
        let t = SpTree::parallel(vec![SpTree::edge("e1"), SpTree::edge("e2")]);
        let flows = edge_flows(&t, &invest(&[("e1", 1.0)]), 0.0);
        assert!(flows.values().all(|f| *f == 0.0));
        assert_eq!(flows.len(), 2);
    }

    #[test]
    fn outcome_on_single_edge_reproduces_homogeneous_kink() {
        let t = SpTree::edge("e1");
        let b = invest(&[("e1", 0.5)]);
        let res = Reservation::homogeneous(2.0, 1.0).unwrap();
        let out = wardrop_outcome(&t, &b, &res);
        assert!((out.slope - 2.0).abs() < 1e-15);
        assert!((out.demand - 1.0).abs() < 1e-15);
        assert!((out.per_user_cost - 2.0).abs() < 1e-15);
        assert!((out.edge_flows[&EdgeId::from("e1")] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn outcome_power_law_series() {
        let t = SpTree::series(vec![SpTree::edge("e1"), SpTree::edge("e2")]);
        let b = invest(&[("e1", 1.0), ("e2", 1.0)]);
        let res = Reservation::power_law(3.0).unwrap();
        let out = wardrop_outcome(&t, &b, &res);
        assert!((out.slope - 2.0).abs() < 1e-15);
        assert!((out.demand - 2.0f64.powf(-0.75)).abs() < 1e-12);
    }

    #[test]
    fn outcome_without_investment_serves_nobody() {
        let t = SpTree::edge("e1");
        let res = Reservation::homogeneous(2.0, 1.0).unwrap();
        let out = wardrop_outcome(&t, &EdgeMap::new(), &res);
        assert!(out.slope.is_infinite());
        assert_eq!(out.demand, 0.0);
        assert!(out.per_user_cost.is_infinite());
    }

    #[test]
    fn path_decomposition_is_proportional() {
        let t = SpTree::parallel(vec![SpTree::edge("e1"), SpTree::edge("e2")]);
        let mut path_invest = BTreeMap::new();
        path_invest.insert(vec![EdgeId::from("e1")], 0.3);
        path_invest.insert(vec![EdgeId::from("e2")], 0.1);
        let flows = path_flow_decomposition(&t, &path_invest, 2.0).unwrap();
        assert!((flows[&vec![EdgeId::from("e1")]] - 1.5).abs() < 1e-12);
        assert!((flows[&vec![EdgeId::from("e2")]] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn path_decomposition_rejects_empty_investment_with_demand() {
        let t = SpTree::edge("e1");
        let mut path_invest = BTreeMap::new();
        path_invest.insert(vec![EdgeId::from("e1")], 0.0);
        let err = path_flow_decomposition(&t, &path_invest, 1.0).unwrap_err();
        assert_eq!(err, WardropError::EmptyInvestment { demand: 1.0 });
        let ok = path_flow_decomposition(&t, &path_invest, 0.0).unwrap();
        assert_eq!(ok[&vec![EdgeId::from("e1")]], 0.0);
    }

    #[test]
    fn gross_utility_closed_forms() {
        let hom = Reservation::homogeneous(2.0, 1.0).unwrap();
        assert!((hom.gross_utility(0.5) - 1.0).abs() < 1e-15);
        assert!((hom.gross_utility(3.0) - 2.0).abs() < 1e-15);
        let pl = Reservation::power_law(3.0).unwrap();
        // integral of x^(-1/3) on [0, F] = 1.5 F^(2/3)
        assert!((pl.gross_utility(8.0) - 6.0).abs() < 1e-12);
        assert!(Reservation::power_law(0.5).unwrap().gross_utility(1.0).is_infinite());
    }
}
