//! Name-keyed registry of interchangeable model strategies.

use crate::contention::{ContentionChain, FireOnZeroChain, LiteralChain, TauCoefficients};
use crate::error::{Error, Result};
use crate::performance::{
    ApproxTau, CaptureInterference, ExactTau, InterferenceModel, LinearInterference, TauEstimator,
};

type ChainCtor = fn() -> Box<dyn ContentionChain>;
type InterferenceCtor = fn() -> Box<dyn InterferenceModel>;

const CHAINS: &[(&str, ChainCtor)] =
    &[("fire-on-zero", || Box::new(FireOnZeroChain)), ("literal", || Box::new(LiteralChain))];

const INTERFERENCE: &[(&str, InterferenceCtor)] =
    &[("linear", || Box::new(LinearInterference)), ("capture", || Box::new(CaptureInterference::default()))];

pub const TAU_MODES: &[&str] = &["exact", "approx"];

fn unknown(kind: &str, name: &str, known: &[&str]) -> Error {
    Error::Config(format!("unknown {kind} '{name}' (known: {})", known.join(", ")))
}

pub fn chain_names() -> Vec<&'static str> {
    CHAINS.iter().map(|c| c.0).collect()
}

pub fn chain(name: &str) -> Result<Box<dyn ContentionChain>> {
    CHAINS.iter().find(|c| c.0 == name).map(|c| (c.1)()).ok_or_else(|| unknown("chain", name, &chain_names()))
}

pub fn interference_names() -> Vec<&'static str> {
    INTERFERENCE.iter().map(|c| c.0).collect()
}

pub fn interference(name: &str) -> Result<Box<dyn InterferenceModel>> {
    INTERFERENCE
        .iter()
        .find(|c| c.0 == name)
        .map(|c| (c.1)())
        .ok_or_else(|| unknown("interference model", name, &interference_names()))
}

/// The approximate estimator needs fitted coefficients; the exact one ignores them.
pub fn tau_estimator(name: &str, coeffs: Option<TauCoefficients>) -> Result<Box<dyn TauEstimator>> {
    match name {
        "exact" => Ok(Box::new(ExactTau::default())),
        "approx" => {
            let coeffs =
                coeffs.ok_or_else(|| Error::Config("tau mode 'approx' needs calibrated coefficients".into()))?;
            Ok(Box::new(ApproxTau { coeffs }))
        }
        _ => Err(unknown("tau mode", name, TAU_MODES)),
    }
}
