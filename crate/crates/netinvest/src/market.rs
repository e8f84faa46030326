//! First-stage provider payoffs and welfare for a fixed investment profile.
//!
//! Providers earn the congestion payments collected on their capacity share
//! of each invested edge and pay their investment: provider `i` gets
//! `sum_e b_ie * f_e^2 / b_e^2 - sum_e b_ie` over edges with positive total
//! investment. Social welfare is gross user utility at the equilibrium
//! demand minus total investment.
//!
//! On shortest-path strategy profiles everything collapses to per-provider
//! scalar totals, and the reduced forms here are the closed-form counterparts
//! used by the equilibrium analysis.

use std::collections::BTreeMap;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::sp_graph::{EdgeId, EdgeMap, Path, SpTree};
use crate::wardrop::{wardrop_outcome, Reservation, WardropError};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MarketError {
    #[error("operation not available for this reservation class: {0}")]
    Unsupported(String),
    #[error("social welfare diverges for power-law reservation with alpha = {alpha} <= 1")]
    DivergentWelfare { alpha: f64 },
    #[error(transparent)]
    Wardrop(#[from] WardropError),
}

/// Per-provider, per-edge investments. Row `i` is provider `i`'s strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvestmentMatrix {
    rows: Vec<EdgeMap>,
}

impl InvestmentMatrix {
    pub fn new(rows: Vec<EdgeMap>) -> Self {
        for row in &rows {
            for (e, v) in row {
                assert!(*v >= 0.0 && v.is_finite(), "investment on {e} must be finite and >= 0");
            }
        }
        InvestmentMatrix { rows }
    }

    pub fn zeros(providers: usize) -> Self {
        InvestmentMatrix { rows: vec![EdgeMap::new(); providers] }
    }

    pub fn providers(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &EdgeMap {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[EdgeMap] {
        &self.rows
    }

    pub fn set_row(&mut self, i: usize, row: EdgeMap) {
        for (e, v) in &row {
            assert!(*v >= 0.0 && v.is_finite(), "investment on {e} must be finite and >= 0");
        }
        self.rows[i] = row;
    }

    /// Aggregate investment `b_e` per edge.
    pub fn edge_totals(&self) -> EdgeMap {
        let mut totals = EdgeMap::new();
        for row in &self.rows {
            for (e, v) in row {
                *totals.entry(e.clone()).or_insert(0.0) += v;
            }
        }
        totals
    }

    /// Sum of all entries, `sum_e b_e`.
    pub fn total(&self) -> f64 {
        self.rows.iter().flat_map(|r| r.values()).sum()
    }
}

/// Per-provider strategies expressed on paths: provider `i` funds path `P`
/// with `b_iP`, which places `b_iP` on every edge of `P`.
#[derive(Clone, Debug, PartialEq)]
pub struct PathStrategyProfile {
    rows: Vec<BTreeMap<Path, f64>>,
}

impl PathStrategyProfile {
    pub fn new(rows: Vec<BTreeMap<Path, f64>>) -> Self {
        for row in &rows {
            for v in row.values() {
                assert!(*v >= 0.0 && v.is_finite(), "path investment must be finite and >= 0");
            }
        }
        PathStrategyProfile { rows }
    }

    pub fn providers(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[BTreeMap<Path, f64>] {
        &self.rows
    }

    /// Scalar total `s_i = sum_P b_iP` per provider.
    pub fn scalar_totals(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.values().sum()).collect()
    }

    /// Aggregate per-path totals over providers.
    pub fn path_totals(&self) -> BTreeMap<Path, f64> {
        let mut totals: BTreeMap<Path, f64> = BTreeMap::new();
        for row in &self.rows {
            for (p, v) in row {
                *totals.entry(p.clone()).or_insert(0.0) += v;
            }
        }
        totals
    }

    /// Induced per-edge matrix: each path strategy funds all its edges.
    pub fn to_matrix(&self) -> InvestmentMatrix {
        let rows = self
            .rows
            .iter()
            .map(|row| {
                let mut edges = EdgeMap::new();
                for (path, v) in row {
                    for e in path {
                        *edges.entry(e.clone()).or_insert(0.0) += v;
                    }
                }
                edges
            })
            .collect();
        InvestmentMatrix { rows }
    }
}

/// Revenue, investment outlay and net profit of one provider.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProviderProfit {
    pub revenue: f64,
    pub cost: f64,
    pub profit: f64,
}

/// Profit breakdown for all providers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfitReport {
    pub per_provider: Vec<ProviderProfit>,
    pub total_profit: f64,
}

impl ProfitReport {
    fn from_parts(parts: Vec<(f64, f64)>) -> Self {
        let per_provider: Vec<ProviderProfit> = parts
            .into_iter()
            .map(|(revenue, cost)| ProviderProfit { revenue, cost, profit: revenue - cost })
            .collect();
        let total_profit = per_provider.iter().map(|p| p.profit).sum();
        ProfitReport { per_provider, total_profit }
    }

    pub fn profits(&self) -> Vec<f64> {
        self.per_provider.iter().map(|p| p.profit).collect()
    }
}

/// Profits of every provider at the second-stage equilibrium induced by the
/// investment matrix. Only edges with positive aggregate investment generate
/// revenue or count investment cost; a provider holding share `b_ie / b_e`
/// of edge `e` collects that share of the edge's congestion payment
/// `f_e^2 / b_e`.
pub fn profit(tree: &SpTree, invest: &InvestmentMatrix, res: &Reservation) -> ProfitReport {
    let totals = invest.edge_totals();
    let outcome = wardrop_outcome(tree, &totals, res);
    let parts = invest
        .rows
        .iter()
        .map(|row| {
            let mut revenue = 0.0;
            let mut cost = 0.0;
            for (e, bie) in row {
                let be = totals.get(e).copied().unwrap_or(0.0);
                if be > 0.0 {
                    let fe = outcome.edge_flows.get(e).copied().unwrap_or(0.0);
                    revenue += bie * fe * fe / (be * be);
                    cost += bie;
                }
            }
            (revenue, cost)
        })
        .collect();
    ProfitReport::from_parts(parts)
}

/// Profits in the reduced scalar game on shortest paths: provider `i`
/// invests total `s_i` spread over shortest paths (edge count `k`), so
/// `pi_i = k s_i ((|f| / |s|)^2 - 1)` with `|s| = sum s_i` and demand `|f|`
/// at slope `k / |s|`.
///
/// Closed per class; piecewise-linear reservations are refused here (use
/// [`profit`] on an embedded matrix instead).
pub fn reduced_profit(k: u32, scalars: &[f64], res: &Reservation) -> Result<ProfitReport, MarketError> {
    for s in scalars {
        assert!(*s >= 0.0 && s.is_finite(), "scalar investment must be finite and >= 0");
    }
    let k = k as f64;
    let total: f64 = scalars.iter().sum();
    let unit_revenue = match res {
        Reservation::Homogeneous { value, population } => {
            // Demand min(value * |s| / k, population) makes per-unit revenue
            // k * min((value/k)^2, (population/|s|)^2).
            let a = (value / k) * (value / k);
            let b = (population / total) * (population / total);
            k * a.min(b)
        }
        Reservation::PowerLaw { alpha } => {
            // Demand (|s|/k)^(alpha/(alpha+1)) gives per-unit revenue
            // k (|f|/|s|)^2 = |s|^(-2/(alpha+1)) k^((1-alpha)/(alpha+1)).
            total.powf(-2.0 / (alpha + 1.0)) * k.powf((1.0 - alpha) / (alpha + 1.0))
        }
        Reservation::Piecewise(_) => {
            return Err(MarketError::Unsupported(
                "reduced profit requires a homogeneous or power-law reservation".into(),
            ))
        }
    };
    let parts = scalars
        .iter()
        .map(|&s| {
            if s == 0.0 {
                (0.0, 0.0)
            } else {
                (s * unit_revenue, s * k)
            }
        })
        .collect();
    Ok(ProfitReport::from_parts(parts))
}

/// Social welfare of an investment matrix: gross utility of the equilibrium
/// demand minus the total investment of all providers on all edges.
pub fn social_welfare(
    tree: &SpTree,
    invest: &InvestmentMatrix,
    res: &Reservation,
) -> Result<f64, MarketError> {
    if let Reservation::PowerLaw { alpha } = res {
        if *alpha <= 1.0 {
            return Err(MarketError::DivergentWelfare { alpha: *alpha });
        }
    }
    let totals = invest.edge_totals();
    let outcome = wardrop_outcome(tree, &totals, res);
    Ok(res.gross_utility(outcome.demand) - invest.total())
}

/// Social welfare of the reduced scalar profile with total `t` on shortest
/// paths of edge count `k` (total edge investment `k t`).
pub fn reduced_social_welfare(k: u32, total: f64, res: &Reservation) -> Result<f64, MarketError> {
    assert!(total >= 0.0 && total.is_finite(), "total investment must be finite and >= 0");
    if let Reservation::PowerLaw { alpha } = res {
        if *alpha <= 1.0 {
            return Err(MarketError::DivergentWelfare { alpha: *alpha });
        }
    }
    let kf = k as f64;
    let demand = if total > 0.0 {
        crate::wardrop::solve_demand(kf / total, res)
    } else {
        0.0
    };
    Ok(res.gross_utility(demand) - kf * total)
}

/// Spreads each provider's scalar total over the shortest paths of the tree,
/// with seeded random weights. Any such embedding induces the same demand,
/// flows and profits; the seed only picks one concrete representative.
pub fn embed_scalar_on_shortest_paths(
    tree: &SpTree,
    scalars: &[f64],
    seed: u64,
) -> PathStrategyProfile {
    let shortest = tree.shortest_paths(64);
    let paths = &shortest.paths;
    assert!(!paths.is_empty(), "tree has at least one shortest path");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = scalars
        .iter()
        .map(|&s| {
            assert!(s >= 0.0 && s.is_finite(), "scalar investment must be finite and >= 0");
            let weights: Vec<f64> = (0..paths.len()).map(|_| rng.gen_range(0.05..1.0)).collect();
            let wsum: f64 = weights.iter().sum();
            paths
                .iter()
                .zip(&weights)
                .map(|(p, w)| (p.clone(), s * w / wsum))
                .collect()
        })
        .collect();
    PathStrategyProfile::new(rows)
}

/// Deterministic embedding splitting each scalar equally across (up to 64)
/// shortest paths. Used where reproducibility matters more than coverage.
pub fn embed_scalar_uniform(tree: &SpTree, scalars: &[f64]) -> PathStrategyProfile {
    let shortest = tree.shortest_paths(64);
    let paths = &shortest.paths;
    assert!(!paths.is_empty(), "tree has at least one shortest path");
    let share = 1.0 / paths.len() as f64;
    let rows = scalars
        .iter()
        .map(|&s| paths.iter().map(|p| (p.clone(), s * share)).collect())
        .collect();
    PathStrategyProfile::new(rows)
}

/// Convenience: single-provider edge map as a one-row matrix.
pub fn single_provider(edges: &[(EdgeId, f64)]) -> InvestmentMatrix {
    InvestmentMatrix::new(vec![edges.iter().cloned().collect()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sp_graph::EdgeId;

    fn row(pairs: &[(&str, f64)]) -> EdgeMap {
        pairs.iter().map(|(id, v)| (EdgeId::from(*id), *v)).collect()
    }

    #[test]
    fn monopoly_profit_on_single_edge_power_law() {
        // b = 1/4, alpha = 3: slope 4, demand 4^(-3/4), revenue 1/2, cost 1/4.
        let t = SpTree::edge("e1");
        let m = InvestmentMatrix::new(vec![row(&[("e1", 0.25)])]);
        let res = Reservation::power_law(3.0).unwrap();
        let report = profit(&t, &m, &res);
        assert!((report.per_provider[0].profit - 0.25).abs() < 1e-12);
        assert!((report.per_provider[0].revenue - 0.5).abs() < 1e-12);
        let reduced = reduced_profit(1, &[0.25], &res).unwrap();
        assert!((reduced.per_provider[0].profit - 0.25).abs() < 1e-12);
    }

    #[test]
    fn duopoly_profit_on_single_edge_homogeneous() {
        // b = (1/4, 1/4), R = 2, d = 1: demand 1, each earns 1 - 1/4 = 3/4.
        let t = SpTree::edge("e1");
        let m = InvestmentMatrix::new(vec![row(&[("e1", 0.25)]), row(&[("e1", 0.25)])]);
        let res = Reservation::homogeneous(2.0, 1.0).unwrap();
        let report = profit(&t, &m, &res);
        for p in &report.per_provider {
            assert!((p.profit - 0.75).abs() < 1e-12);
        }
        let reduced = reduced_profit(1, &[0.25, 0.25], &res).unwrap();
        for p in &reduced.per_provider {
            assert!((p.profit - 0.75).abs() < 1e-12);
        }
    }

    #[test]
    fn reduced_profit_of_idle_provider_is_exactly_zero() {
        let res = Reservation::homogeneous(2.0, 1.0).unwrap();
        let report = reduced_profit(1, &[0.0, 0.3], &res).unwrap();
        assert_eq!(report.per_provider[0].profit, 0.0);
        assert_eq!(report.per_provider[0].revenue, 0.0);
    }

    #[test]
    fn reduced_profit_refuses_piecewise() {
        let res = Reservation::piecewise(vec![(0.0, 1.0), (1.0, 0.0)]).unwrap();
        assert!(matches!(
            reduced_profit(1, &[0.1], &res),
            Err(MarketError::Unsupported(_))
        ));
    }

    #[test]
    fn profit_matches_reduced_on_two_block_tree() {
        // series(parallel(e1, e2), parallel(e3, e4)): k = 2, shortest paths
        // share edges, and any shortest-path embedding must reproduce the
        // reduced profits.
        let t = SpTree::series(vec![
            SpTree::parallel(vec![SpTree::edge("e1"), SpTree::edge("e2")]),
            SpTree::parallel(vec![SpTree::edge("e3"), SpTree::edge("e4")]),
        ]);
        let res = Reservation::homogeneous(4.0, 1.5).unwrap();
        let scalars = [0.3, 0.55];
        let embedded = embed_scalar_on_shortest_paths(&t, &scalars, 7);
        let full = profit(&t, &embedded.to_matrix(), &res);
        let reduced = reduced_profit(2, &scalars, &res).unwrap();
        for (a, b) in full.per_provider.iter().zip(&reduced.per_provider) {
            assert!((a.profit - b.profit).abs() < 1e-12, "{} vs {}", a.profit, b.profit);
        }
    }

    #[test]
    fn welfare_closed_form_single_edge() {
        let t = SpTree::edge("e1");
        let res = Reservation::homogeneous(2.0, 1.0).unwrap();
        let m = single_provider(&[(EdgeId::from("e1"), 0.707107)]);
        let sw = social_welfare(&t, &m, &res).unwrap();
        assert!((sw - 1.292893).abs() < 1e-9);
        let reduced = reduced_social_welfare(1, 0.707107, &res).unwrap();
        assert!((sw - reduced).abs() < 1e-12);
    }

    #[test]
    fn welfare_is_gross_utility_minus_cost_for_piecewise() {
        let t = SpTree::edge("e1");
        let res = Reservation::piecewise(vec![(0.0, 4.0), (2.0, 0.0)]).unwrap();
        let m = single_provider(&[(EdgeId::from("e1"), 0.5)]);
        // slope 2, demand solves 4 - 2x = 2x so x = 1; utility 4 - 1 = 3.
        let sw = social_welfare(&t, &m, &res).unwrap();
        assert!((sw - (3.0 - 0.5)).abs() < 1e-9);
    }

    #[test]
    fn welfare_diverges_for_heavy_tail() {
        let t = SpTree::edge("e1");
        let m = single_provider(&[(EdgeId::from("e1"), 0.5)]);
        for alpha in [0.5, 1.0] {
            let res = Reservation::power_law(alpha).unwrap();
            assert_eq!(
                social_welfare(&t, &m, &res).unwrap_err(),
                MarketError::DivergentWelfare { alpha }
            );
        }
    }

    #[test]
    fn budget_identity_on_random_matrix() {
        // Total profit == demand * per-user cost - total investment.
        let t = SpTree::series(vec![
            SpTree::parallel(vec![SpTree::edge("e1"), SpTree::edge("e2")]),
            SpTree::edge("e3"),
        ]);
        let m = InvestmentMatrix::new(vec![
            row(&[("e1", 0.4), ("e3", 0.9)]),
            row(&[("e2", 0.7), ("e3", 0.2)]),
        ]);
        let res = Reservation::homogeneous(3.0, 2.0).unwrap();
        let outcome = wardrop_outcome(&t, &m.edge_totals(), &res);
        let report = profit(&t, &m, &res);
        let lhs = report.total_profit;
        let rhs = outcome.demand * outcome.per_user_cost - m.total();
        assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
    }

    #[test]
    fn embeddings_preserve_scalar_totals() {
        let t = SpTree::parallel(vec![SpTree::edge("e1"), SpTree::edge("e2")]);
        let scalars = [0.4, 0.0, 1.3];
        let emb = embed_scalar_on_shortest_paths(&t, &scalars, 99);
        let got = emb.scalar_totals();
        for (a, b) in got.iter().zip(&scalars) {
            assert!((a - b).abs() < 1e-12);
        }
        let matrix_total = emb.to_matrix().total();
        let k = t.shortest_path_length() as f64;
        assert!((matrix_total - k * scalars.iter().sum::<f64>()).abs() < 1e-12);
    }
}
