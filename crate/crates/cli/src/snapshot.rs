//! Versioned, line-oriented posterior snapshots.
//!
//! ```text
//! dbb-snapshot v1 lambda=0.5
//! 0    8.5000000000000000e0    5.0000000000000000e-1    1
//! ```
//!
//! One tab-separated `prompt_id alpha beta visits` record per line, in
//! ascending prompt id. Pseudo-counts carry 17 significant digits, which
//! reproduces every f64 exactly.

use dbb_core::{Discount, PosteriorState, PosteriorStore};

use crate::error::CliError;

const MAGIC: &str = "dbb-snapshot";
const VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSnapshot {
    pub lambda: f64,
    pub records: Vec<(u64, PosteriorState)>,
}

impl PosteriorSnapshot {
    pub fn from_store(store: &PosteriorStore) -> Self {
        Self {
            lambda: store.lambda().get(),
            records: store.iter().map(|(id, s)| (id, *s)).collect(),
        }
    }

    pub fn to_store(&self) -> Result<PosteriorStore, CliError> {
        let mut store = PosteriorStore::new(Discount::new(self.lambda)?);
        for &(id, state) in &self.records {
            store.insert(id, state);
        }
        Ok(store)
    }

    pub fn save(&self) -> String {
        let mut out = format!("{MAGIC} {VERSION} lambda={}\n", self.lambda);
        for (id, s) in &self.records {
            out.push_str(&format!(
                "{id}\t{:.16e}\t{:.16e}\t{}\n",
                s.alpha, s.beta, s.visits
            ));
        }
        out
    }

    pub fn load(text: &str) -> Result<Self, CliError> {
        let bad = |detail: String| CliError::Parse {
            what: "snapshot",
            detail,
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let mut parts = header.split(' ');
        if parts.next() != Some(MAGIC) {
            return Err(bad(format!("not a snapshot header: {header:?}")));
        }
        let version = parts.next().unwrap_or("");
        if version != VERSION {
            return Err(CliError::SnapshotVersion(version.to_string()));
        }
        let lambda = parts
            .next()
            .and_then(|p| p.strip_prefix("lambda="))
            .ok_or_else(|| bad(format!("missing lambda in header {header:?}")))?
            .parse::<f64>()
            .map_err(|e| bad(format!("lambda: {e}")))?;
        if parts.next().is_some() {
            return Err(bad(format!("trailing fields in header {header:?}")));
        }
        Discount::new(lambda)?;

        let mut records: Vec<(u64, PosteriorState)> = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 4 {
                return Err(bad(format!("line {}: expected 4 fields", i + 2)));
            }
            let parse_err = |e: &dyn std::fmt::Display| bad(format!("line {}: {e}", i + 2));
            let id: u64 = f[0].parse().map_err(|e| parse_err(&e))?;
            let alpha: f64 = f[1].parse().map_err(|e| parse_err(&e))?;
            let beta: f64 = f[2].parse().map_err(|e| parse_err(&e))?;
            let visits: u64 = f[3].parse().map_err(|e| parse_err(&e))?;
            if records.last().is_some_and(|&(prev, _)| prev >= id) {
                return Err(bad(format!("line {}: prompt ids must be ascending", i + 2)));
            }
            records.push((id, PosteriorState::with_visits(alpha, beta, visits)?));
        }
        Ok(Self { lambda, records })
    }
}
