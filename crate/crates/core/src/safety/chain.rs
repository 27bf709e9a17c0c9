//! Hash-chained constitution history and its append-only JSONL store.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::constitution::PolicyConstitution;
use super::delta::PolicyDelta;
use super::merge::merge;
use crate::util::{canonical_json, sha256_hex, GENESIS_HASH};

/// One published version and the delta that produced it from its parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainEntry {
    pub version: u64,
    pub digest: String,
    /// Hash over the previous link, this policy and this delta, so the
    /// delta text (rationale, provenance) is bound into the chain too.
    pub link: String,
    pub policy: PolicyConstitution,
    pub delta: Option<PolicyDelta>,
}

fn link_hash(prev_link: &str, digest: &str, delta: Option<&PolicyDelta>) -> String {
    let delta_digest = delta.map_or_else(|| "-".to_string(), PolicyDelta::digest);
    sha256_hex(format!("{prev_link}|{digest}|{delta_digest}").as_bytes())
}

impl ChainEntry {
    pub fn genesis(policy: PolicyConstitution) -> Self {
        let digest = policy.digest();
        ChainEntry {
            version: policy.version,
            link: link_hash(GENESIS_HASH, &digest, None),
            digest,
            policy,
            delta: None,
        }
    }

    pub fn successor(prev: &ChainEntry, policy: PolicyConstitution, delta: PolicyDelta) -> Self {
        let digest = policy.digest();
        ChainEntry {
            version: policy.version,
            link: link_hash(&prev.link, &digest, Some(&delta)),
            digest,
            policy,
            delta: Some(delta),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("chain broken at index {index}: {reason}")]
pub struct ChainError {
    pub index: usize,
    pub reason: String,
}

fn broken(index: usize, reason: impl Into<String>) -> ChainError {
    ChainError { index, reason: reason.into() }
}

/// Checks digests, parent links, version order and that every recorded
/// delta reproduces its successor through [`merge`].
pub fn hash_chain_verify(history: &[ChainEntry]) -> Result<(), ChainError> {
    for (i, entry) in history.iter().enumerate() {
        if entry.digest != entry.policy.digest() {
            return Err(broken(i, "stored digest does not match policy"));
        }
        if entry.version != entry.policy.version {
            return Err(broken(i, "entry version differs from policy version"));
        }
        let prev_link = if i == 0 { GENESIS_HASH } else { history[i - 1].link.as_str() };
        if entry.link != link_hash(prev_link, &entry.digest, entry.delta.as_ref()) {
            return Err(broken(i, "link hash mismatch"));
        }
        if i == 0 {
            if entry.policy.parent_hash != GENESIS_HASH {
                return Err(broken(0, "first entry is not a genesis policy"));
            }
            continue;
        }
        let prev = &history[i - 1].policy;
        if entry.policy.parent_hash != prev.digest() {
            return Err(broken(i, "parent hash mismatch"));
        }
        if entry.policy.version <= prev.version {
            return Err(broken(i, "version not increasing"));
        }
        let Some(delta) = &entry.delta else {
            return Err(broken(i, "missing delta"));
        };
        match merge(prev, delta) {
            Ok(rebuilt) if rebuilt.digest() == entry.digest => {}
            Ok(_) => return Err(broken(i, "delta does not reproduce policy")),
            Err(e) => return Err(broken(i, format!("delta fails to merge: {e}"))),
        }
    }
    Ok(())
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error(transparent)]
    Chain(#[from] ChainError),
    #[error("store is empty")]
    Empty,
}

/// Append-only file of canonical-JSON [`ChainEntry`] lines.
#[derive(Debug, Clone)]
pub struct PolicyStore {
    path: PathBuf,
}

impl PolicyStore {
    /// Creates (truncating) a store whose first entry is `genesis`.
    pub fn create(path: impl AsRef<Path>, genesis: &PolicyConstitution) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        File::create(&path)?;
        let store = PolicyStore { path };
        store.write_line(&ChainEntry::genesis(genesis.clone()))?;
        Ok(store)
    }

    pub fn open(path: impl AsRef<Path>) -> Self {
        PolicyStore { path: path.as_ref().to_path_buf() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, policy: &PolicyConstitution, delta: &PolicyDelta) -> Result<(), StoreError> {
        let prev = self.entries()?.pop().ok_or(StoreError::Empty)?;
        self.write_line(&ChainEntry::successor(&prev, policy.clone(), delta.clone()))
    }

    fn write_line(&self, entry: &ChainEntry) -> Result<(), StoreError> {
        let mut f = OpenOptions::new().append(true).open(&self.path)?;
        writeln!(f, "{}", canonical_json(entry))?;
        Ok(())
    }

    /// Parses every line; a line that is not the canonical encoding of its
    /// own content is reported as corrupt.
    pub fn entries(&self) -> Result<Vec<ChainEntry>, StoreError> {
        let reader = BufReader::new(File::open(&self.path)?);
        let mut out = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let entry: ChainEntry =
                serde_json::from_str(&line).map_err(|e| StoreError::Corrupt { line: i, reason: e.to_string() })?;
            if canonical_json(&entry) != line {
                return Err(StoreError::Corrupt { line: i, reason: "non-canonical encoding".into() });
            }
            out.push(entry);
        }
        Ok(out)
    }

    pub fn latest(&self) -> Result<PolicyConstitution, StoreError> {
        self.entries()?.pop().map(|e| e.policy).ok_or(StoreError::Empty)
    }

    pub fn verify(&self) -> Result<usize, StoreError> {
        let entries = self.entries()?;
        if entries.is_empty() {
            return Err(StoreError::Empty);
        }
        hash_chain_verify(&entries)?;
        Ok(entries.len())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::safety::constitution::BACKLOG_CAP;

    fn chain(n: usize) -> Vec<ChainEntry> {
        let mut pi = PolicyConstitution::bootstrap();
        let mut out = vec![ChainEntry::genesis(pi.clone())];
        for k in 0..n {
            let mut d = PolicyDelta::default();
            d.threshold_updates.insert(BACKLOG_CAP.into(), 30.0 + k as f64);
            pi = merge(&pi, &d).unwrap();
            let next = ChainEntry::successor(out.last().unwrap(), pi.clone(), d);
            out.push(next);
        }
        out
    }

    #[test]
    fn vacuous_and_valid_chains() {
        assert!(hash_chain_verify(&chain(0)).is_ok());
        assert!(hash_chain_verify(&chain(3)).is_ok());
    }

    #[test]
    fn tampered_threshold_detected_at_its_index() {
        let mut c = chain(3);
        c[2].policy.thresholds.get_mut(BACKLOG_CAP).unwrap().value = 55.0;
        assert_eq!(hash_chain_verify(&c).unwrap_err().index, 2);
        // even with the digest refreshed the merge replay catches it
        c[2].digest = c[2].policy.digest();
        assert_eq!(hash_chain_verify(&c).unwrap_err().index, 2);
    }

    #[test]
    fn edited_rationale_breaks_the_link() {
        let mut c = chain(2);
        c[1].delta.as_mut().unwrap().rationale = "rewritten".into();
        assert_eq!(hash_chain_verify(&c).unwrap_err().index, 1);
    }

    #[test]
    fn store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let c = chain(2);
        let store = PolicyStore::create(dir.path().join("pi.jsonl"), &c[0].policy).unwrap();
        for e in &c[1..] {
            store.append(&e.policy, e.delta.as_ref().unwrap()).unwrap();
        }
        assert_eq!(store.verify().unwrap(), 3);
        assert_eq!(store.latest().unwrap(), c[2].policy);
    }
}
