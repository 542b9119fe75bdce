//! A store that knows about other stores: an ordered list of embedded
//! stores and remote daemon URLs.
//!
//! `get` scans targets sequentially, embedded targets first in list order,
//! then remote targets in list order; the first hit wins. `put` goes to the
//! first embedded target when one exists, otherwise the request is forwarded
//! to remote targets in order until one accepts. Every forwarded request
//! carries a hop budget and a request id so cyclic proxy topologies answer
//! instead of looping.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, RwLock};

use crate::error::{Result, XbaseError};
use crate::model::{BitString, Key, StoreId};
use crate::netd::{self, OpContext, RemoteUrl};
use crate::store::{Store, StoreHandle};

/// One entry in a proxy's ordered target list.
#[derive(Clone)]
pub enum Target {
    /// Another store held in-process; may itself be a proxy.
    Embedded(Arc<StoreHandle>),
    /// A daemon URL, optionally pinned to one store id on that host. Without
    /// a store id the target means every shareable store on that host.
    Remote(RemoteUrl),
}

impl PartialEq for Target {
    fn eq(&self, other: &Target) -> bool {
        match (self, other) {
            (Target::Embedded(a), Target::Embedded(b)) => a.store_id() == b.store_id(),
            (Target::Remote(a), Target::Remote(b)) => a == b,
            _ => false,
        }
    }
}

impl std::fmt::Debug for Target {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Target::Embedded(s) => write!(f, "Embedded({})", s.store_id()),
            Target::Remote(u) => write!(f, "Remote({u})"),
        }
    }
}

pub struct ProxyStore {
    id: StoreId,
    shareable: AtomicBool,
    targets: RwLock<Vec<Target>>,
}

impl ProxyStore {
    pub fn new() -> ProxyStore {
        ProxyStore {
            id: StoreId::generate(),
            shareable: AtomicBool::new(false),
            targets: RwLock::new(Vec::new()),
        }
    }

    /// Restores a persisted identity; used when a stabilised root proxy is
    /// reflected on restart.
    pub(crate) fn set_id(&mut self, id: StoreId) {
        self.id = id;
    }

    /// Appends a target; exact duplicates are ignored.
    pub fn add_target(&self, target: Target) {
        let mut targets = self.targets.write().unwrap();
        if !targets.contains(&target) {
            targets.push(target);
        }
    }

    /// Removes the first matching target; absent targets are a no-op.
    pub fn remove_target(&self, target: &Target) {
        let mut targets = self.targets.write().unwrap();
        if let Some(pos) = targets.iter().position(|t| t == target) {
            targets.remove(pos);
        }
    }

    /// The current ordered target list.
    pub fn lookup_target(&self) -> Vec<Target> {
        self.targets.read().unwrap().clone()
    }

    pub fn set_shareable_flag(&self, on: bool) {
        self.shareable.store(on, Ordering::SeqCst);
    }

    pub(crate) fn put_ctx(&self, content: &BitString, ctx: &OpContext) -> Result<Key> {
        let targets = self.lookup_target();
        if let Some(Target::Embedded(store)) =
            targets.iter().find(|t| matches!(t, Target::Embedded(_)))
        {
            return store.put_ctx(content, ctx);
        }
        let mut transport_error = None;
        for target in &targets {
            let Target::Remote(url) = target else { continue };
            let Some(hops) = ctx.hops_left.checked_sub(1) else { break };
            match netd::remote_put(url, content, hops, ctx.request_id) {
                Ok(key) => return Ok(key),
                Err(err @ XbaseError::KeyExists(_)) => return Err(err),
                Err(XbaseError::StoreNotFound(_)) => continue,
                Err(err @ XbaseError::Daemon(_)) => transport_error = Some(err),
                Err(err) => return Err(err),
            }
        }
        Err(transport_error
            .unwrap_or_else(|| XbaseError::StoreNotFound("proxy exhausted all targets".into())))
    }

    pub(crate) fn get_ctx(&self, key: &Key, ctx: &OpContext) -> Result<BitString> {
        let targets = self.lookup_target();
        for target in &targets {
            let Target::Embedded(store) = target else { continue };
            match store.get_ctx(key, ctx) {
                Ok(content) => return Ok(content),
                Err(XbaseError::KeyNotFound(_) | XbaseError::StoreNotFound(_)) => continue,
                Err(err) => return Err(err),
            }
        }
        for target in &targets {
            let Target::Remote(url) = target else { continue };
            let Some(hops) = ctx.hops_left.checked_sub(1) else { break };
            match netd::remote_get(url, key, hops, ctx.request_id) {
                Ok(content) => return Ok(content),
                Err(
                    XbaseError::KeyNotFound(_)
                    | XbaseError::StoreNotFound(_)
                    | XbaseError::Daemon(_),
                ) => continue,
                Err(err) => return Err(err),
            }
        }
        Err(XbaseError::KeyNotFound(*key))
    }
}

impl Default for ProxyStore {
    fn default() -> Self {
        Self::new()
    }
}

impl Store for ProxyStore {
    fn put(&self, content: &BitString) -> Result<Key> {
        self.put_ctx(content, &OpContext::fresh())
    }

    fn get(&self, key: &Key) -> Result<BitString> {
        self.get_ctx(key, &OpContext::fresh())
    }

    fn store_id(&self) -> StoreId {
        self.id
    }

    fn is_shareable(&self) -> bool {
        self.shareable.load(Ordering::SeqCst)
    }
}
