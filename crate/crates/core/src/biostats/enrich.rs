use std::collections::{BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::deg::benjamini_hochberg;
use super::special::ln_binomial;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneSet {
    pub set_id: String,
    pub description: String,
    pub members: BTreeSet<String>,
}

impl GeneSet {
    pub fn new(set_id: impl Into<String>, description: impl Into<String>, members: impl IntoIterator<Item = impl Into<String>>) -> Result<Self> {
        let set_id = set_id.into();
        let members: BTreeSet<String> = members.into_iter().map(Into::into).collect();
        if members.is_empty() {
            return Err(Error::validation(format!("gene set '{set_id}' has no members")));
        }
        Ok(Self {
            set_id,
            description: description.into(),
            members,
        })
    }
}

/// Parses GMT text: `set_id<TAB>description<TAB>member...`, one set per line.
/// Blank lines are skipped.
pub fn parse_gmt(text: &str) -> Result<Vec<GeneSet>> {
    let mut sets = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default();
        let desc = fields.next().ok_or(Error::Parse {
            line: i + 1,
            message: "GMT line needs set_id, description and members".into(),
        })?;
        let members: Vec<&str> = fields.filter(|m| !m.is_empty()).collect();
        let set = GeneSet::new(id, desc, members).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        sets.push(set);
    }
    Ok(sets)
}

pub fn load_gmt(path: &Path) -> Result<Vec<GeneSet>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_gmt(&text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichmentResult {
    pub set_id: String,
    pub description: String,
    /// Set size after intersecting with the universe.
    pub set_size: usize,
    pub overlap: usize,
    pub p_value: f64,
    pub q_value: f64,
}

/// Upper-tail hypergeometric `P(X ≥ overlap)` for `draws` from a universe of
/// `universe` items holding `successes` marked ones.
pub fn hypergeometric_sf(overlap: u64, universe: u64, successes: u64, draws: u64) -> f64 {
    let hi = successes.min(draws);
    let lo = draws.saturating_sub(universe - successes);
    if overlap <= lo {
        return 1.0;
    }
    if overlap > hi {
        return 0.0;
    }
    let denom = ln_binomial(universe, draws);
    let p: f64 = (overlap..=hi)
        .map(|i| (ln_binomial(successes, i) + ln_binomial(universe - successes, draws - i) - denom).exp())
        .sum();
    p.min(1.0)
}

/// Overrepresentation of `query` in each gene set, BH-adjusted across sets.
pub fn enrich(query: &BTreeSet<String>, sets: &[GeneSet], universe: &BTreeSet<String>) -> Result<Vec<EnrichmentResult>> {
    let offenders: Vec<&str> = query.iter().filter(|g| !universe.contains(*g)).map(String::as_str).collect();
    if !offenders.is_empty() {
        return Err(Error::invalid(format!(
            "query genes missing from universe: {}",
            offenders.join(", ")
        )));
    }
    let n_universe = universe.len() as u64;
    let n_query = query.len() as u64;
    let q_lookup: HashSet<&str> = query.iter().map(String::as_str).collect();
    let mut out: Vec<EnrichmentResult> = sets
        .iter()
        .map(|s| {
            let in_universe: Vec<&String> = s.members.iter().filter(|m| universe.contains(*m)).collect();
            let overlap = in_universe.iter().filter(|m| q_lookup.contains(m.as_str())).count();
            EnrichmentResult {
                set_id: s.set_id.clone(),
                description: s.description.clone(),
                set_size: in_universe.len(),
                overlap,
                p_value: hypergeometric_sf(overlap as u64, n_universe, in_universe.len() as u64, n_query),
                q_value: 0.0,
            }
        })
        .collect();
    let q = benjamini_hochberg(&out.iter().map(|r| r.p_value).collect::<Vec<_>>());
    for (r, q) in out.iter_mut().zip(q) {
        r.q_value = q;
    }
    Ok(out)
}
