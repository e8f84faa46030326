//! On-disk formats: instance files, investment files, and the extended-real
//! JSON convention (`inf` / `-inf` as strings, so infinities survive
//! round-trips losslessly).
//!
//! Syntax errors (malformed JSON, wrong shape) and semantic errors (values
//! out of range, unknown edge ids, provider-count mismatches) are kept
//! apart because the command-line surface maps them to different exit
//! codes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::market::InvestmentMatrix;
use crate::sp_graph::{EdgeId, EdgeMap, SpTree};
use crate::wardrop::Reservation;

/// Why a file failed to load.
#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    /// Unreadable file or malformed JSON / wrong shape.
    #[error("parse error: {0}")]
    Parse(String),
    /// Well-formed file whose values violate the domain: parameters out of
    /// range, unknown edge ids, provider mismatches.
    #[error("semantic error: {0}")]
    Semantic(String),
}

#[derive(Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum RawReservation {
    Homogeneous { value: f64, population: f64 },
    Powerlaw { alpha: f64 },
    Piecewise { points: Vec<(f64, f64)> },
}

fn reservation_from_raw(raw: RawReservation) -> Result<Reservation, LoadError> {
    let built = match raw {
        RawReservation::Homogeneous { value, population } => {
            Reservation::homogeneous(value, population)
        }
        RawReservation::Powerlaw { alpha } => Reservation::power_law(alpha),
        RawReservation::Piecewise { points } => Reservation::piecewise(points),
    };
    built.map_err(|e| LoadError::Semantic(e.to_string()))
}

fn reservation_to_raw(res: &Reservation) -> RawReservation {
    match res {
        Reservation::Homogeneous { value, population } => {
            RawReservation::Homogeneous { value: *value, population: *population }
        }
        Reservation::PowerLaw { alpha } => RawReservation::Powerlaw { alpha: *alpha },
        Reservation::Piecewise(p) => {
            RawReservation::Piecewise { points: p.points().to_vec() }
        }
    }
}

#[derive(Deserialize)]
struct RawInstance {
    graph: SpTree,
    providers: usize,
    reservation: RawReservation,
}

#[derive(Serialize)]
struct RawInstanceRef<'a> {
    graph: &'a SpTree,
    providers: usize,
    reservation: RawReservation,
}

/// A parsed, validated problem instance: the network, the number of
/// providers, and the users' reservation curve.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub graph: SpTree,
    pub providers: usize,
    pub reservation: Reservation,
}

impl Instance {
    pub fn new(
        graph: SpTree,
        providers: usize,
        reservation: Reservation,
    ) -> Result<Self, LoadError> {
        if providers == 0 {
            return Err(LoadError::Semantic("at least one provider is required".into()));
        }
        Ok(Instance { graph, providers, reservation })
    }

    pub fn to_json(&self) -> String {
        let raw = RawInstanceRef {
            graph: &self.graph,
            providers: self.providers,
            reservation: reservation_to_raw(&self.reservation),
        };
        serde_json::to_string_pretty(&raw).expect("instances always serialize")
    }
}

/// Parses and validates an instance from JSON text.
pub fn parse_instance(text: &str) -> Result<Instance, LoadError> {
    let raw: RawInstance =
        serde_json::from_str(text).map_err(|e| LoadError::Parse(e.to_string()))?;
    let reservation = reservation_from_raw(raw.reservation)?;
    Instance::new(raw.graph, raw.providers, reservation)
}

/// Reads an instance file from disk.
pub fn load_instance(path: impl AsRef<Path>) -> Result<Instance, LoadError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| LoadError::Parse(format!("cannot read {}: {e}", path.display())))?;
    parse_instance(&text)
}

#[derive(Deserialize)]
struct RawInvestments {
    providers: Vec<BTreeMap<String, f64>>,
}

/// Parses an investments file (`{"providers": [{edge: amount, ...}, ...]}`,
/// one map per provider) and validates it against an instance: the provider
/// count must match, edge ids must exist in the graph, and amounts must be
/// nonnegative.
pub fn parse_investments(
    text: &str,
    instance: &Instance,
) -> Result<InvestmentMatrix, LoadError> {
    let raw: RawInvestments =
        serde_json::from_str(text).map_err(|e| LoadError::Parse(e.to_string()))?;
    if raw.providers.len() != instance.providers {
        return Err(LoadError::Semantic(format!(
            "investments list {} providers but the instance declares {}",
            raw.providers.len(),
            instance.providers
        )));
    }
    let known = instance.graph.edge_ids();
    let mut rows: Vec<EdgeMap> = Vec::with_capacity(raw.providers.len());
    for (i, row) in raw.providers.into_iter().enumerate() {
        let mut out = EdgeMap::new();
        for (id, amount) in row {
            let id = EdgeId::new(id);
            if !known.contains(&id) {
                return Err(LoadError::Semantic(format!(
                    "provider {i} invests in unknown edge {id}"
                )));
            }
            if !amount.is_finite() || amount < 0.0 {
                return Err(LoadError::Semantic(format!(
                    "provider {i} investment on edge {id} must be finite and nonnegative, got {amount}"
                )));
            }
            out.insert(id, amount);
        }
        rows.push(out);
    }
    Ok(InvestmentMatrix::new(rows))
}

/// Reads an investments file from disk.
pub fn load_investments(
    path: impl AsRef<Path>,
    instance: &Instance,
) -> Result<InvestmentMatrix, LoadError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| LoadError::Parse(format!("cannot read {}: {e}", path.display())))?;
    parse_investments(&text, instance)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ExtRepr {
    Num(f64),
    Str(String),
}

fn ext_from_repr<E: serde::de::Error>(repr: ExtRepr) -> Result<f64, E> {
    match repr {
        ExtRepr::Num(v) => Ok(v),
        ExtRepr::Str(s) => match s.as_str() {
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            "nan" => Ok(f64::NAN),
            other => Err(E::custom(format!(
                "expected a number or one of \"inf\", \"-inf\", \"nan\"; got \"{other}\""
            ))),
        },
    }
}

fn ext_serialize<S: serde::Serializer>(v: f64, s: S) -> Result<S::Ok, S::Error> {
    if v == f64::INFINITY {
        s.serialize_str("inf")
    } else if v == f64::NEG_INFINITY {
        s.serialize_str("-inf")
    } else if v.is_nan() {
        s.serialize_str("nan")
    } else {
        s.serialize_f64(v)
    }
}

/// Serde adapter for extended-real fields: finite values as JSON numbers,
/// infinities as the strings `"inf"` / `"-inf"`.
pub mod ext_real {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        super::ext_serialize(*v, s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        super::ext_from_repr(super::ExtRepr::deserialize(d)?)
    }
}

/// [`ext_real`] for optional fields; `None` maps to JSON `null`.
pub mod ext_real_opt {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => super::ext_serialize(*x, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Option::<super::ExtRepr>::deserialize(d)?
            .map(super::ext_from_repr::<D::Error>)
            .transpose()
    }
}
