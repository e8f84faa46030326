//! Closed-form subgame-perfect equilibria of the investment stage, social
//! optima, and the four inefficiency ratios.
//!
//! Everything here works in the reduced scalar game: at equilibrium all
//! investment sits on shortest paths (edge count `k`), so a strategy profile
//! collapses to per-provider totals. Each closed form is cross-checked
//! against an independent numeric optimization before it is returned, so a
//! transcribed formula cannot silently drift from the model it summarizes.

use serde::{Deserialize, Serialize};

use crate::market::{reduced_profit, reduced_social_welfare, MarketError, ProfitReport};
use crate::numeric::grid_then_golden;
use crate::wardrop::Reservation;

/// Tolerance for the internal closed-form vs numeric-search checks.
const SELF_CHECK_TOL: f64 = 1e-6;
/// Formula vs recomputation agreement required inside [`inefficiency`].
const RATIO_AGREEMENT_TOL: f64 = 1e-9;

/// Shape of an equilibrium set in the reduced scalar game.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EquilibriumKind {
    /// Exactly one equilibrium vector.
    #[serde(rename = "unique-point")]
    UniquePoint,
    /// Fixed total; any split with every provider inside a common box.
    #[serde(rename = "interval-set")]
    IntervalSet,
    /// Every profile whose total stays at or below a threshold.
    #[serde(rename = "all-below-threshold")]
    AllBelowThreshold,
    /// No equilibrium exists.
    #[serde(rename = "none")]
    NoEquilibrium,
}

/// Equilibrium description plus the induced market quantities, evaluated at
/// the representative investment vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumReport {
    pub exists: bool,
    pub kind: EquilibriumKind,
    /// Which analytical branch produced this report.
    pub case: String,
    /// Representative per-provider scalars (absent when nothing exists).
    pub investments: Option<Vec<f64>>,
    /// Total investment, constant across the whole set for set-valued kinds.
    pub total_investment: Option<f64>,
    /// For interval sets: the common per-provider box `[lower, upper]`.
    pub per_provider_bounds: Option<(f64, f64)>,
    /// For threshold kinds: the largest admissible total.
    pub threshold: Option<f64>,
    /// Demand at the representative vector.
    pub demand: Option<f64>,
    /// Welfare at the representative vector; absent when it diverges.
    pub social_welfare: Option<f64>,
    /// Profit breakdown at the representative vector.
    pub profits: Option<ProfitReport>,
}

impl EquilibriumReport {
    fn nonexistent(case: &str) -> Self {
        EquilibriumReport {
            exists: false,
            kind: EquilibriumKind::NoEquilibrium,
            case: case.to_string(),
            investments: None,
            total_investment: None,
            per_provider_bounds: None,
            threshold: None,
            demand: None,
            social_welfare: None,
            profits: None,
        }
    }
}

/// Welfare-maximizing total investment (reduced form) and its welfare.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SocialOptimum {
    pub total_investment: f64,
    pub welfare: f64,
}

/// The four inefficiency ratios with the quantities behind them.
///
/// Welfare-based fields are `None` when gross utility diverges (power law
/// with `alpha <= 1` and an equilibrium to compare); profit-based ratios are
/// always reported. With no equilibrium at all every ratio is `+inf`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InefficiencyReport {
    #[serde(with = "crate::instance::ext_real_opt")]
    pub poa: Option<f64>,
    #[serde(with = "crate::instance::ext_real_opt")]
    pub pos: Option<f64>,
    #[serde(with = "crate::instance::ext_real")]
    pub ppoa: f64,
    #[serde(with = "crate::instance::ext_real")]
    pub ppos: f64,
    #[serde(with = "crate::instance::ext_real_opt")]
    pub optimal_welfare: Option<f64>,
    #[serde(with = "crate::instance::ext_real_opt")]
    pub equilibrium_welfare: Option<f64>,
    #[serde(with = "crate::instance::ext_real")]
    pub optimal_profit: f64,
    #[serde(with = "crate::instance::ext_real_opt")]
    pub equilibrium_profit: Option<f64>,
}

fn total_reduced_profit(k: u32, total: f64, res: &Reservation) -> f64 {
    reduced_profit(k, &[total], res)
        .expect("closed-form reservation class")
        .total_profit
}

/// Best scalar response check: asserts that no provider can improve its
/// reduced profit by more than [`SELF_CHECK_TOL`] with a unilateral scalar
/// move. Guards every closed-form equilibrium this module returns. Providers
/// holding identical scalars face identical problems, so each distinct value
/// is checked once.
fn assert_scalar_equilibrium(k: u32, scalars: &[f64], res: &Reservation, span: f64, case: &str) {
    let base = reduced_profit(k, scalars, res).expect("closed-form reservation class");
    let mut checked: Vec<f64> = Vec::new();
    for i in 0..scalars.len() {
        if checked.contains(&scalars[i]) {
            continue;
        }
        checked.push(scalars[i]);
        let mut work = scalars.to_vec();
        let (_, best) = grid_then_golden(
            |s| {
                work[i] = s;
                reduced_profit(k, &work, res)
                    .expect("closed-form reservation class")
                    .per_provider[i]
                    .profit
            },
            0.0,
            span,
            129,
            1e-9,
        );
        let gap = best - base.per_provider[i].profit;
        assert!(
            gap <= SELF_CHECK_TOL,
            "closed-form equilibrium ({case}) failed its best-response self-check: \
             provider {i} improves by {gap:.3e}"
        );
    }
}

/// Homogeneous-reservation equilibria of the reduced game on shortest paths
/// of edge count `k`, with `n` providers, reservation value `r` and
/// population `d`.
///
/// Branches: `r < k` kills the market (unique zero profile); `r = k` makes
/// every profile with total at most `d k / r` an equilibrium; for `r > k`
/// the symmetric interior point `d sqrt((n-2)/n^3)` per provider stands when
/// `sqrt((n-2)/n) >= k/r`, and otherwise the equilibria are exactly the
/// profiles with total `d k / r` and every provider at or above
/// `d k (r^2 - k^2) / (2 r^3)`.
pub fn spne_homogeneous(k: u32, n: usize, r: f64, d: f64) -> EquilibriumReport {
    assert!(k >= 1, "shortest path length must be at least 1");
    assert!(n >= 1, "need at least one provider");
    assert!(r.is_finite() && r >= 0.0, "reservation value must be finite and >= 0");
    assert!(d.is_finite() && d >= 0.0, "population must be finite and >= 0");
    let res = Reservation::Homogeneous { value: r, population: d };
    let kf = k as f64;
    let nf = n as f64;

    if r < kf {
        let investments = vec![0.0; n];
        let report = describe(k, EquilibriumKind::UniquePoint, "below-cost", investments, None, None, &res);
        assert_scalar_equilibrium(k, report.investments.as_ref().unwrap(), &res, d + 1.0, "below-cost");
        return report;
    }
    if r == kf {
        let threshold = d * kf / r;
        let investments = vec![threshold / nf; n];
        let report = describe(
            k,
            EquilibriumKind::AllBelowThreshold,
            "critical-value",
            investments,
            None,
            Some(threshold),
            &res,
        );
        assert_scalar_equilibrium(k, report.investments.as_ref().unwrap(), &res, d + 1.0, "critical-value");
        return report;
    }

    let radicand = (nf - 2.0) / nf;
    let interior = n >= 2 && radicand.sqrt() * r >= kf;
    if interior {
        let per = d * ((nf - 2.0) / (nf * nf * nf)).sqrt();
        let case = if (radicand.sqrt() * r - kf).abs() <= 1e-12 * kf.max(1.0) {
            "boundary"
        } else {
            "symmetric-interior"
        };
        let investments = vec![per; n];
        let report = describe(k, EquilibriumKind::UniquePoint, case, investments, None, None, &res);
        assert_scalar_equilibrium(k, report.investments.as_ref().unwrap(), &res, d + 1.0, case);
        return report;
    }

    // Kink equilibria: total pinned at d k / r.
    let total = d * kf / r;
    let lower = d * kf * (r * r - kf * kf) / (2.0 * r * r * r);
    if n == 1 {
        let report = describe(
            k,
            EquilibriumKind::UniquePoint,
            "monopoly-kink",
            vec![total],
            None,
            None,
            &res,
        );
        assert_scalar_equilibrium(k, report.investments.as_ref().unwrap(), &res, d + 1.0, "monopoly-kink");
        return report;
    }
    let upper = total - (nf - 1.0) * lower;
    let investments = vec![total / nf; n];
    let report = describe(
        k,
        EquilibriumKind::IntervalSet,
        "kink-interval",
        investments,
        Some((lower, upper)),
        None,
        &res,
    );
    assert_scalar_equilibrium(k, report.investments.as_ref().unwrap(), &res, d + 1.0, "kink-interval");
    report
}

/// Power-law equilibria: for `n = 1` an equilibrium exists only for
/// `alpha > 1`, at `((alpha-1)/(alpha+1))^((alpha+1)/2) / k^alpha`; for
/// `n >= 2` the unique equilibrium is symmetric with per-provider investment
/// `(1/n) (1 - 2/((alpha+1) n))^((alpha+1)/2) / k^alpha` for every
/// `alpha > 0`.
pub fn spne_powerlaw(k: u32, n: usize, alpha: f64) -> EquilibriumReport {
    assert!(k >= 1, "shortest path length must be at least 1");
    assert!(n >= 1, "need at least one provider");
    assert!(alpha.is_finite() && alpha > 0.0, "alpha must be finite and positive");
    let res = Reservation::PowerLaw { alpha };
    let kf = k as f64;
    let nf = n as f64;

    if n == 1 && alpha <= 1.0 {
        // Profit 1 - k b (alpha = 1) or unboundedly improving as b -> 0+
        // (alpha < 1): no best response, hence no equilibrium.
        return EquilibriumReport::nonexistent("monopoly-nonexistent");
    }

    let q = 1.0 - 2.0 / ((alpha + 1.0) * nf);
    let per = q.powf((alpha + 1.0) / 2.0) / (nf * kf.powf(alpha));
    let case = if n == 1 { "monopoly" } else { "oligopoly" };
    let investments = vec![per; n];
    let span = 2.0 * kf.powf(-alpha) + 1.0;
    let report = describe(k, EquilibriumKind::UniquePoint, case, investments, None, None, &res);
    assert_scalar_equilibrium(k, report.investments.as_ref().unwrap(), &res, span, case);
    report
}

/// Fills demand, welfare and profits for a representative vector.
fn describe(
    k: u32,
    kind: EquilibriumKind,
    case: &str,
    investments: Vec<f64>,
    per_provider_bounds: Option<(f64, f64)>,
    threshold: Option<f64>,
    res: &Reservation,
) -> EquilibriumReport {
    let total: f64 = investments.iter().sum();
    let kf = k as f64;
    let demand = if total > 0.0 {
        crate::wardrop::solve_demand(kf / total, res)
    } else {
        0.0
    };
    let social_welfare = reduced_social_welfare(k, total, res).ok();
    let profits = reduced_profit(k, &investments, res).expect("closed-form reservation class");
    EquilibriumReport {
        exists: true,
        kind,
        case: case.to_string(),
        investments: Some(investments),
        total_investment: Some(total),
        per_provider_bounds,
        threshold,
        demand: Some(demand),
        social_welfare,
        profits: Some(profits),
    }
}

/// Welfare-maximizing total investment in the reduced game.
///
/// Homogeneous: zero when `r <= k`, otherwise total `d k / r` with welfare
/// `d (r - k^2 / r)`. Power law (`alpha > 1`): total
/// `(alpha/(alpha+1))^((alpha+1)/2) k^(-alpha)`; `alpha <= 1` diverges.
pub fn social_optimum(k: u32, res: &Reservation) -> Result<SocialOptimum, MarketError> {
    assert!(k >= 1, "shortest path length must be at least 1");
    let kf = k as f64;
    let (total, welfare, span) = match res {
        Reservation::Homogeneous { value: r, population: d } => {
            if *r <= kf {
                (0.0, 0.0, d + 1.0)
            } else {
                (d * kf / r, d * (r - kf * kf / r), d + 1.0)
            }
        }
        Reservation::PowerLaw { alpha } => {
            if *alpha <= 1.0 {
                return Err(MarketError::DivergentWelfare { alpha: *alpha });
            }
            let total = (alpha / (alpha + 1.0)).powf((alpha + 1.0) / 2.0) * kf.powf(-alpha);
            let welfare = (alpha / (alpha + 1.0)).powf((alpha - 1.0) / 2.0)
                * kf.powf(1.0 - alpha)
                * 2.0
                * alpha
                / ((alpha - 1.0) * (alpha + 1.0));
            (total, welfare, 2.0 * kf.powf(-alpha) + 1.0)
        }
        Reservation::Piecewise(_) => {
            return Err(MarketError::Unsupported(
                "social optimum is closed-form only for homogeneous and power-law reservations"
                    .into(),
            ))
        }
    };
    // Numeric cross-check against direct welfare maximization.
    let (_, numeric) = grid_then_golden(
        |t| reduced_social_welfare(k, t, res).expect("closed-form class"),
        0.0,
        span,
        129,
        1e-10,
    );
    let scale = welfare.abs().max(1.0);
    assert!(
        (numeric - welfare).abs() <= SELF_CHECK_TOL * scale,
        "closed-form social optimum disagrees with numeric search: {welfare} vs {numeric}"
    );
    Ok(SocialOptimum { total_investment: total, welfare })
}

/// Largest total profit any investment profile can reach (the planner's
/// profit benchmark). Infinite for the power law with `alpha < 1`; for
/// `alpha = 1` the supremum `1` is approached as investment vanishes but
/// never attained.
pub fn optimal_profit(k: u32, res: &Reservation) -> Result<f64, MarketError> {
    assert!(k >= 1, "shortest path length must be at least 1");
    let kf = k as f64;
    match res {
        Reservation::Homogeneous { value: r, population: d } => {
            let formula = if *r > kf { d * (r * r - kf * kf) / r } else { 0.0 };
            let (_, numeric) = grid_then_golden(
                |t| total_reduced_profit(k, t, res),
                0.0,
                d + 1.0,
                129,
                1e-10,
            );
            let scale = formula.abs().max(1.0);
            assert!(
                (numeric - formula).abs() <= SELF_CHECK_TOL * scale,
                "closed-form optimal profit disagrees with numeric search: {formula} vs {numeric}"
            );
            Ok(formula)
        }
        Reservation::PowerLaw { alpha } => {
            if *alpha > 1.0 {
                let p = (alpha - 1.0) / (alpha + 1.0);
                let formula = p.powf((alpha - 1.0) / 2.0) * kf.powf(1.0 - alpha) * 2.0 / (alpha + 1.0);
                let (_, numeric) = grid_then_golden(
                    |t| total_reduced_profit(k, t, res),
                    0.0,
                    2.0 * kf.powf(-alpha) + 1.0,
                    129,
                    1e-10,
                );
                let scale = formula.abs().max(1.0);
                assert!(
                    (numeric - formula).abs() <= SELF_CHECK_TOL * scale,
                    "closed-form optimal profit disagrees with numeric search: {formula} vs {numeric}"
                );
                Ok(formula)
            } else if *alpha == 1.0 {
                // Total profit 1 - k t: supremum 1 as t -> 0+, not attained.
                let near_zero = total_reduced_profit(k, 1e-12, res);
                assert!(
                    (near_zero - 1.0).abs() <= SELF_CHECK_TOL,
                    "alpha = 1 profit supremum check failed: {near_zero}"
                );
                Ok(1.0)
            } else {
                // t^((alpha-1)/(alpha+1)) blows up as t -> 0+.
                let near_zero = total_reduced_profit(k, 1e-12, res);
                assert!(
                    near_zero > 1e3,
                    "alpha < 1 profit should diverge near zero, got {near_zero}"
                );
                Ok(f64::INFINITY)
            }
        }
        Reservation::Piecewise(_) => Err(MarketError::Unsupported(
            "optimal profit is closed-form only for homogeneous and power-law reservations".into(),
        )),
    }
}

/// Equilibrium dispatcher by reservation class.
pub fn spne(k: u32, n: usize, res: &Reservation) -> Result<EquilibriumReport, MarketError> {
    match res {
        Reservation::Homogeneous { value, population } => {
            Ok(spne_homogeneous(k, n, *value, *population))
        }
        Reservation::PowerLaw { alpha } => Ok(spne_powerlaw(k, n, *alpha)),
        Reservation::Piecewise(_) => Err(MarketError::Unsupported(
            "equilibria are closed-form only for homogeneous and power-law reservations".into(),
        )),
    }
}

/// Ratio with the conventions `0/0 = 1` and `x/0 = +inf` for `x > 0`.
fn ratio(optimal: f64, equilibrium: f64) -> f64 {
    if optimal <= 0.0 && equilibrium <= 0.0 {
        1.0
    } else if equilibrium <= 0.0 {
        f64::INFINITY
    } else {
        optimal / equilibrium
    }
}

/// Prices of anarchy and stability for welfare (`poa`, `pos`) and profit
/// (`ppoa`, `ppos`).
///
/// Every ratio is evaluated twice, once through the closed-form expression
/// and once as a quotient of independently computed optimum and equilibrium
/// values; the two routes must agree to 1e-9 or the call panics. Since all
/// equilibria of a given instance share total investment (hence welfare and
/// total profit), anarchy and stability coincide class by class. With no
/// equilibrium every ratio is `+inf`; with `alpha <= 1` the welfare ratios
/// are undefined (`None`) because gross utility diverges.
pub fn inefficiency(k: u32, n: usize, res: &Reservation) -> Result<InefficiencyReport, MarketError> {
    assert!(n >= 1, "need at least one provider");
    let kf = k as f64;
    match res {
        Reservation::Homogeneous { value: r, population: d } => {
            let eq = spne_homogeneous(k, n, *r, *d);
            let opt = social_optimum(k, res)?;
            let pi_opt = optimal_profit(k, res)?;
            let eq_total = eq.total_investment.expect("homogeneous equilibria always exist");
            let sw_eq = reduced_social_welfare(k, eq_total, res)?;
            let pi_eq = eq.profits.as_ref().expect("report carries profits").total_profit;

            let nf = n as f64;
            let interior = *d > 0.0 && *r > kf && n >= 2 && ((nf - 2.0) / nf).sqrt() * r >= kf;
            let poa_formula = if interior {
                (r + kf) * (r - kf) / (r * (r - kf * ((nf - 2.0) / nf).sqrt()))
            } else {
                1.0
            };
            let ppoa_formula = if interior {
                (nf * (nf - 2.0)).sqrt() * (r * r - kf * kf) / (2.0 * r * kf)
            } else {
                1.0
            };
            let poa = checked_ratio(poa_formula, opt.welfare, sw_eq, "welfare");
            let ppoa = checked_ratio(ppoa_formula, pi_opt, pi_eq, "profit");
            Ok(InefficiencyReport {
                poa: Some(poa),
                pos: Some(poa),
                ppoa,
                ppos: ppoa,
                optimal_welfare: Some(opt.welfare),
                equilibrium_welfare: Some(sw_eq),
                optimal_profit: pi_opt,
                equilibrium_profit: Some(pi_eq),
            })
        }
        Reservation::PowerLaw { alpha } => {
            let eq = spne_powerlaw(k, n, *alpha);
            let pi_opt = optimal_profit(k, res)?;
            if !eq.exists {
                // Monopoly with alpha <= 1: empty equilibrium set.
                return Ok(InefficiencyReport {
                    poa: Some(f64::INFINITY),
                    pos: Some(f64::INFINITY),
                    ppoa: f64::INFINITY,
                    ppos: f64::INFINITY,
                    optimal_welfare: None,
                    equilibrium_welfare: None,
                    optimal_profit: pi_opt,
                    equilibrium_profit: None,
                });
            }
            let pi_eq = eq.profits.as_ref().expect("report carries profits").total_profit;
            let nf = n as f64;
            if *alpha > 1.0 {
                let opt = social_optimum(k, res)?;
                let eq_total = eq.total_investment.expect("existing equilibrium has a total");
                let sw_eq = reduced_social_welfare(k, eq_total, res)?;
                let poa_formula = (alpha * nf / (nf * (alpha + 1.0) - 2.0)).powf((alpha - 1.0) / 2.0)
                    * 2.0
                    * alpha
                    * nf
                    / (nf * (alpha + 1.0) + 2.0 * (alpha - 1.0));
                let ppoa_formula =
                    nf * ((nf * (alpha + 1.0) - 2.0) / (nf * (alpha - 1.0))).powf((1.0 - alpha) / 2.0);
                let poa = checked_ratio(poa_formula, opt.welfare, sw_eq, "welfare");
                let ppoa = checked_ratio(ppoa_formula, pi_opt, pi_eq, "profit");
                Ok(InefficiencyReport {
                    poa: Some(poa),
                    pos: Some(poa),
                    ppoa,
                    ppos: ppoa,
                    optimal_welfare: Some(opt.welfare),
                    equilibrium_welfare: Some(sw_eq),
                    optimal_profit: pi_opt,
                    equilibrium_profit: Some(pi_eq),
                })
            } else {
                // Welfare diverges: no welfare ratios. Profit ratios stay
                // meaningful: n for alpha = 1, infinite for alpha < 1.
                let ppoa = if *alpha == 1.0 {
                    checked_ratio(nf, pi_opt, pi_eq, "profit")
                } else {
                    debug_assert!(pi_opt.is_infinite());
                    f64::INFINITY
                };
                Ok(InefficiencyReport {
                    poa: None,
                    pos: None,
                    ppoa,
                    ppos: ppoa,
                    optimal_welfare: None,
                    equilibrium_welfare: None,
                    optimal_profit: pi_opt,
                    equilibrium_profit: Some(pi_eq),
                })
            }
        }
        Reservation::Piecewise(_) => Err(MarketError::Unsupported(
            "inefficiency ratios are closed-form only for homogeneous and power-law reservations"
                .into(),
        )),
    }
}

/// Evaluates a ratio through both routes and insists they agree.
fn checked_ratio(formula: f64, optimal: f64, equilibrium: f64, what: &str) -> f64 {
    let recomputed = ratio(optimal, equilibrium);
    if formula.is_infinite() || recomputed.is_infinite() {
        assert_eq!(
            formula.is_infinite(),
            recomputed.is_infinite(),
            "{what} ratio: formula {formula} vs recomputed {recomputed}"
        );
        return f64::INFINITY;
    }
    assert!(
        (formula - recomputed).abs() <= RATIO_AGREEMENT_TOL,
        "{what} ratio: closed form {formula} and recomputation {recomputed} disagree \
         (optimal {optimal}, equilibrium {equilibrium})"
    );
    formula
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn below_cost_reservation_kills_investment() {
        let report = spne_homogeneous(2, 3, 1.0, 5.0);
        assert_eq!(report.kind, EquilibriumKind::UniquePoint);
        assert_eq!(report.investments, Some(vec![0.0, 0.0, 0.0]));
        assert_eq!(report.demand, Some(0.0));
        assert_eq!(report.social_welfare, Some(0.0));
    }

    #[test]
    fn critical_reservation_gives_threshold_set() {
        let report = spne_homogeneous(2, 2, 2.0, 3.0);
        assert_eq!(report.kind, EquilibriumKind::AllBelowThreshold);
        assert!((report.threshold.unwrap() - 3.0).abs() < 1e-12);
        assert!((report.social_welfare.unwrap()).abs() < 1e-12);
        assert!(report.profits.unwrap().total_profit.abs() < 1e-12);
    }

    #[test]
    fn duopoly_interval_reproduces_reference_bounds() {
        // k = 1, n = 2, r = 2, d = 1: total 1/2, provider box [3/16, 5/16].
        let report = spne_homogeneous(1, 2, 2.0, 1.0);
        assert_eq!(report.kind, EquilibriumKind::IntervalSet);
        assert!((report.total_investment.unwrap() - 0.5).abs() < 1e-15);
        let (lo, hi) = report.per_provider_bounds.unwrap();
        assert!((lo - 0.1875).abs() < 1e-15);
        assert!((hi - 0.3125).abs() < 1e-15);
        assert_eq!(report.case, "kink-interval");
        assert!((report.demand.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn four_providers_reach_symmetric_interior() {
        // k = 1, n = 4, r = 2, d = 1: sqrt(2/4) >= 1/2 holds, so the unique
        // equilibrium is symmetric at sqrt(2/64) each.
        let report = spne_homogeneous(1, 4, 2.0, 1.0);
        assert_eq!(report.kind, EquilibriumKind::UniquePoint);
        let inv = report.investments.unwrap();
        let expect = (2.0f64 / 64.0).sqrt();
        for b in &inv {
            assert!((b - expect).abs() < 1e-15);
        }
        assert!((report.total_investment.unwrap() - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(report.case, "symmetric-interior");
    }

    #[test]
    fn symmetric_point_matches_first_order_condition_root() {
        // Oracle: bisect d^2 (n-2)/(n^3 b^2) = 1 in b.
        let (n, d) = (4.0f64, 1.0f64);
        let root = crate::numeric::bisect_first_nonpositive(
            |b| d * d * (n - 2.0) / (n * n * n * b * b) - 1.0,
            1e-6,
            10.0,
            1e-14,
        );
        let report = spne_homogeneous(1, 4, 2.0, 1.0);
        assert!((report.investments.unwrap()[0] - root).abs() < 1e-9);
    }

    #[test]
    fn monopoly_homogeneous_sits_at_kink() {
        let report = spne_homogeneous(1, 1, 2.0, 1.0);
        assert_eq!(report.kind, EquilibriumKind::UniquePoint);
        assert_eq!(report.case, "monopoly-kink");
        assert!((report.investments.unwrap()[0] - 0.5).abs() < 1e-15);
        let profits = report.profits.unwrap();
        assert!((profits.total_profit - 1.5).abs() < 1e-12); // d (r^2 - k^2) / r
    }

    #[test]
    fn power_law_monopoly_point_and_nonexistence() {
        let report = spne_powerlaw(1, 1, 3.0);
        assert!((report.investments.unwrap()[0] - 0.25).abs() < 1e-15);
        for alpha in [0.5, 1.0] {
            let report = spne_powerlaw(1, 1, alpha);
            assert!(!report.exists);
            assert_eq!(report.kind, EquilibriumKind::NoEquilibrium);
        }
    }

    #[test]
    fn power_law_duopoly_point() {
        let report = spne_powerlaw(1, 2, 3.0);
        let inv = report.investments.unwrap();
        assert!((inv[0] - 0.28125).abs() < 1e-15);
        assert!((inv[1] - 0.28125).abs() < 1e-15);
    }

    #[test]
    fn power_law_equilibrium_exists_below_alpha_one_with_competition() {
        let report = spne_powerlaw(1, 3, 0.7);
        assert!(report.exists);
        // Welfare diverges, so the report omits it but keeps profits.
        assert_eq!(report.social_welfare, None);
        assert!(report.profits.is_some());
    }

    #[test]
    fn social_optimum_closed_forms() {
        let hom = Reservation::homogeneous(2.0, 1.0).unwrap();
        let opt = social_optimum(1, &hom).unwrap();
        assert!((opt.total_investment - 0.5).abs() < 1e-12);
        assert!((opt.welfare - 1.5).abs() < 1e-12);

        let low = Reservation::homogeneous(0.5, 1.0).unwrap();
        let opt = social_optimum(1, &low).unwrap();
        assert_eq!(opt.total_investment, 0.0);
        assert_eq!(opt.welfare, 0.0);

        let pl = Reservation::power_law(3.0).unwrap();
        let opt = social_optimum(1, &pl).unwrap();
        assert!((opt.total_investment - 0.5625).abs() < 1e-12);
        assert!((opt.welfare - 0.5625).abs() < 1e-12);

        let heavy = Reservation::power_law(0.9).unwrap();
        assert!(matches!(
            social_optimum(1, &heavy),
            Err(MarketError::DivergentWelfare { .. })
        ));
    }

    #[test]
    fn optimal_profit_closed_forms() {
        let hom = Reservation::homogeneous(2.0, 1.0).unwrap();
        assert!((optimal_profit(1, &hom).unwrap() - 1.5).abs() < 1e-12);
        let pl = Reservation::power_law(3.0).unwrap();
        // p = 1/2: (1/2)^1 * 2/4 = 1/4.
        assert!((optimal_profit(1, &pl).unwrap() - 0.25).abs() < 1e-12);
        let unit = Reservation::power_law(1.0).unwrap();
        assert_eq!(optimal_profit(1, &unit).unwrap(), 1.0);
        let heavy = Reservation::power_law(0.5).unwrap();
        assert!(optimal_profit(1, &heavy).unwrap().is_infinite());
    }

    #[test]
    fn homogeneous_inefficiency_reference_values() {
        // k = 1, n = 4, r = 2, d = 1.
        let res = Reservation::homogeneous(2.0, 1.0).unwrap();
        let report = inefficiency(1, 4, &res).unwrap();
        let expect_poa = 3.0 / (2.0 * (2.0 - 0.5f64.sqrt()));
        assert!((report.poa.unwrap() - expect_poa).abs() < 1e-12);
        assert!((report.ppoa - 3.0 / 2.0f64.sqrt()).abs() < 1e-12);
        assert_eq!(report.poa, report.pos);
        assert_eq!(report.ppoa, report.ppos);
        // Interval-kind instances are fully efficient.
        let report = inefficiency(1, 2, &res).unwrap();
        assert!((report.poa.unwrap() - 1.0).abs() < 1e-15);
        assert!((report.ppoa - 1.0).abs() < 1e-15);
    }

    #[test]
    fn power_law_inefficiency_reference_values() {
        let res = Reservation::power_law(3.0).unwrap();
        let report = inefficiency(1, 2, &res).unwrap();
        assert!((report.poa.unwrap() - 1.0).abs() < 1e-12);
        assert!((report.ppoa - 4.0 / 3.0).abs() < 1e-12);

        let unit = Reservation::power_law(1.0).unwrap();
        for n in 2..=6 {
            let report = inefficiency(1, n, &unit).unwrap();
            assert_eq!(report.poa, None);
            assert!((report.ppoa - n as f64).abs() < 1e-12);
        }

        let heavy = Reservation::power_law(0.5).unwrap();
        let report = inefficiency(1, 3, &heavy).unwrap();
        assert!(report.ppoa.is_infinite());
        assert_eq!(report.poa, None);

        let monopoly = inefficiency(1, 1, &heavy).unwrap();
        assert!(monopoly.poa.unwrap().is_infinite());
        assert!(monopoly.ppoa.is_infinite());
        assert_eq!(monopoly.equilibrium_profit, None);
    }

    #[test]
    fn piecewise_reservations_are_refused() {
        let res = Reservation::piecewise(vec![(0.0, 2.0), (1.0, 0.0)]).unwrap();
        assert!(matches!(spne(1, 2, &res), Err(MarketError::Unsupported(_))));
        assert!(matches!(social_optimum(1, &res), Err(MarketError::Unsupported(_))));
        assert!(matches!(inefficiency(1, 2, &res), Err(MarketError::Unsupported(_))));
    }
}
