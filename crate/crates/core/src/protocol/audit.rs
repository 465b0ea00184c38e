use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::group::{GroupParams, Scalar};
use crate::setup::KeyTable;
use crate::PlayerId;

/// The accepted openings of one round, published by the aggregator on request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundLog {
    pub round: u64,
    pub openings: Vec<(PlayerId, Scalar)>,
}

/// Every logged player outside `correspondents` whose opening is not its pad.
pub fn audit_round(
    params: &GroupParams,
    keys: &KeyTable,
    correspondents: (PlayerId, PlayerId),
    log: &RoundLog,
) -> BTreeSet<PlayerId> {
    let (a, b) = correspondents;
    log.openings
        .iter()
        .filter(|(i, _)| *i != a && *i != b && usize::from(i.0) <= keys.n())
        .filter(|(i, o)| *o != keys.pair(params, *i, log.round).k)
        .map(|(i, _)| *i)
        .collect()
}
