//! Mutable many-many bindings between names and keys.
//!
//! A name may be bound to multiple keys (set retrieval) and a key to
//! multiple names (aliasing). Unlike stores the mapping is under the
//! caller's control and may be updated. Every binding carries version
//! information: a plain `bind` is a versioned bind stamped with the current
//! clock, so one structure serves both the plain and the versioned
//! interface, and `lookup` returns keys in version order.

use indexmap::IndexMap;
use std::sync::RwLock;

use crate::error::{Result, XbaseError};
use crate::model::{observe_seq, Key, Name, VersionTuple};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct VersionEntry {
    pub timestamp: i64,
    pub seq: u64,
    pub key: Key,
}

/// Safe for concurrent lookups; mutations are serialised with lookups.
#[derive(Default)]
pub struct Namer {
    // Name -> version entries sorted by (timestamp, seq).
    inner: RwLock<IndexMap<Name, Vec<VersionEntry>>>,
}

impl Namer {
    pub fn new() -> Namer {
        Namer::default()
    }

    /// Binds `name` to `key` at the current clock. Idempotent: a key already
    /// bound to the name is not recorded again.
    pub fn bind(&self, name: &Name, key: Key) {
        let mut inner = self.inner.write().unwrap();
        let entries = inner.entry(name.clone()).or_default();
        if entries.iter().any(|e| e.key == key) {
            return;
        }
        let vt = VersionTuple::now(name.clone());
        insert_sorted(entries, VersionEntry { timestamp: vt.timestamp, seq: vt.seq, key });
    }

    /// Records an explicit version for `name`. An exact `(timestamp, seq)`
    /// match is overwritten; otherwise the entry is inserted in version order.
    pub fn bind_versioned(&self, vt: &VersionTuple, key: Key) {
        observe_seq(vt.seq);
        let mut inner = self.inner.write().unwrap();
        let entries = inner.entry(vt.name.clone()).or_default();
        if let Some(existing) = entries
            .iter_mut()
            .find(|e| (e.timestamp, e.seq) == (vt.timestamp, vt.seq))
        {
            existing.key = key;
            return;
        }
        insert_sorted(entries, VersionEntry { timestamp: vt.timestamp, seq: vt.seq, key });
    }

    /// Removes the `(name, key)` binding in all its versions. Fails with
    /// NameNotFound when the name has no bindings at all; removing a key
    /// that is not bound is a no-op.
    pub fn unbind(&self, name: &Name, key: &Key) -> Result<()> {
        let mut inner = self.inner.write().unwrap();
        let entries = inner
            .get_mut(name)
            .ok_or_else(|| XbaseError::NameNotFound(name.as_str().to_string()))?;
        entries.retain(|e| e.key != *key);
        if entries.is_empty() {
            inner.shift_remove(name);
        }
        Ok(())
    }

    /// The distinct keys bound to `name`, in version order.
    pub fn lookup(&self, name: &Name) -> Result<Vec<Key>> {
        let inner = self.inner.read().unwrap();
        let entries = inner
            .get(name)
            .ok_or_else(|| XbaseError::NameNotFound(name.as_str().to_string()))?;
        let mut keys = Vec::new();
        for e in entries {
            if !keys.contains(&e.key) {
                keys.push(e.key);
            }
        }
        Ok(keys)
    }

    /// The key recorded for exactly this version tuple.
    pub fn lookup_versioned(&self, vt: &VersionTuple) -> Result<Key> {
        let inner = self.inner.read().unwrap();
        inner
            .get(&vt.name)
            .and_then(|entries| {
                entries
                    .iter()
                    .find(|e| (e.timestamp, e.seq) == (vt.timestamp, vt.seq))
                    .map(|e| e.key)
            })
            .ok_or_else(|| XbaseError::NameNotFound(format!("{}@{}.{}", vt.name, vt.timestamp, vt.seq)))
    }

    /// The key with the greatest `(timestamp, seq)` among the versions of `name`.
    pub fn lookup_latest(&self, name: &Name) -> Result<Key> {
        let inner = self.inner.read().unwrap();
        inner
            .get(name)
            .and_then(|entries| entries.last().map(|e| e.key))
            .ok_or_else(|| XbaseError::NameNotFound(name.as_str().to_string()))
    }

    pub fn contains(&self, name: &Name) -> bool {
        self.inner.read().unwrap().contains_key(name)
    }

    pub fn names(&self) -> Vec<Name> {
        self.inner.read().unwrap().keys().cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.inner.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.read().unwrap().is_empty()
    }

    /// Snapshot of every binding in insertion order; the namer caster's view.
    pub fn entries(&self) -> Vec<(Name, Vec<VersionEntry>)> {
        self.inner
            .read()
            .unwrap()
            .iter()
            .map(|(n, es)| (n.clone(), es.clone()))
            .collect()
    }
}

fn insert_sorted(entries: &mut Vec<VersionEntry>, entry: VersionEntry) {
    let pos = entries
        .iter()
        .position(|e| (e.timestamp, e.seq) > (entry.timestamp, entry.seq))
        .unwrap_or(entries.len());
    entries.insert(pos, entry);
}
