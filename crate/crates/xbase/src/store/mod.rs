//! Store styles and the contract they share.
//!
//! A store is an append-only, one-one mapping from content-derived keys to
//! byte strings: `put` appends, `get` retrieves, nothing erases. Three
//! styles are provided: a single-file local store, a file-per-blob local
//! store with multiple backing directories, and a proxy store that forwards
//! to an ordered list of embedded stores and remote daemon URLs.

mod blob_dir;
mod proxy;
mod single_file;

pub use blob_dir::BlobDirStore;
pub use proxy::{ProxyStore, Target};
pub use single_file::SingleFileStore;

use std::path::PathBuf;
use std::sync::Arc;

use crate::error::{Result, XbaseError};
use crate::model::{BitString, Key, StoreId};
use crate::netd::OpContext;

/// The contract every store style satisfies. Handles are safe to use from
/// multiple threads; `put` and `get` are atomic with respect to each other.
pub trait Store: Send + Sync {
    /// Appends content and returns its content-derived key. Duplicate
    /// content fails with [`XbaseError::KeyExists`] carrying the existing key.
    fn put(&self, content: &BitString) -> Result<Key>;

    /// Returns exactly the bytes originally put under `key`.
    fn get(&self, key: &Key) -> Result<BitString>;

    fn store_id(&self) -> StoreId;

    /// The store identity as a byte string: the UTF-8 bytes of the 32-hex id.
    fn get_store_id(&self) -> BitString {
        self.store_id().to_bitstring()
    }

    fn is_shareable(&self) -> bool;
}

/// The store styles a [`StoreConfig`] can describe.
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum StoreStyle {
    SingleFile,
    BlobDir,
    Proxy,
}

/// Creation-time description of a store. Local styles take backing
/// directories; the proxy style takes an ordered target list instead.
#[derive(Clone, Default)]
pub struct StoreConfig {
    pub style: Option<StoreStyle>,
    pub shareable: bool,
    pub backing: Vec<PathBuf>,
    pub targets: Vec<Target>,
}

impl StoreConfig {
    pub fn single_file(dir: impl Into<PathBuf>) -> StoreConfig {
        StoreConfig {
            style: Some(StoreStyle::SingleFile),
            backing: vec![dir.into()],
            ..StoreConfig::default()
        }
    }

    pub fn blob_dir(dirs: Vec<PathBuf>) -> StoreConfig {
        StoreConfig { style: Some(StoreStyle::BlobDir), backing: dirs, ..StoreConfig::default() }
    }

    pub fn proxy(targets: Vec<Target>) -> StoreConfig {
        StoreConfig { style: Some(StoreStyle::Proxy), targets, ..StoreConfig::default() }
    }

    pub fn shareable(mut self, on: bool) -> StoreConfig {
        self.shareable = on;
        self
    }
}

/// A concrete store of any style. The store factory and the store caster
/// both hand out this type.
pub enum StoreHandle {
    SingleFile(SingleFileStore),
    BlobDir(BlobDirStore),
    Proxy(ProxyStore),
}

impl StoreHandle {
    pub fn style(&self) -> StoreStyle {
        match self {
            StoreHandle::SingleFile(_) => StoreStyle::SingleFile,
            StoreHandle::BlobDir(_) => StoreStyle::BlobDir,
            StoreHandle::Proxy(_) => StoreStyle::Proxy,
        }
    }

    pub fn as_proxy(&self) -> Option<&ProxyStore> {
        match self {
            StoreHandle::Proxy(p) => Some(p),
            _ => None,
        }
    }

    pub fn set_shareable_flag(&self, on: bool) {
        match self {
            StoreHandle::SingleFile(s) => s.set_shareable_flag(on),
            StoreHandle::BlobDir(s) => s.set_shareable_flag(on),
            StoreHandle::Proxy(s) => s.set_shareable_flag(on),
        }
    }

    pub(crate) fn put_ctx(&self, content: &BitString, ctx: &OpContext) -> Result<Key> {
        match self {
            StoreHandle::SingleFile(s) => s.put(content),
            StoreHandle::BlobDir(s) => s.put(content),
            StoreHandle::Proxy(p) => p.put_ctx(content, ctx),
        }
    }

    pub(crate) fn get_ctx(&self, key: &Key, ctx: &OpContext) -> Result<BitString> {
        match self {
            StoreHandle::SingleFile(s) => s.get(key),
            StoreHandle::BlobDir(s) => s.get(key),
            StoreHandle::Proxy(p) => p.get_ctx(key, ctx),
        }
    }
}

impl Store for StoreHandle {
    fn put(&self, content: &BitString) -> Result<Key> {
        self.put_ctx(content, &OpContext::fresh())
    }

    fn get(&self, key: &Key) -> Result<BitString> {
        self.get_ctx(key, &OpContext::fresh())
    }

    fn store_id(&self) -> StoreId {
        match self {
            StoreHandle::SingleFile(s) => s.store_id(),
            StoreHandle::BlobDir(s) => s.store_id(),
            StoreHandle::Proxy(p) => p.store_id(),
        }
    }

    fn is_shareable(&self) -> bool {
        match self {
            StoreHandle::SingleFile(s) => s.is_shareable(),
            StoreHandle::BlobDir(s) => s.is_shareable(),
            StoreHandle::Proxy(p) => p.is_shareable(),
        }
    }
}

/// The store factory: the only way to create a new store from a config.
/// Fails with [`XbaseError::StoreExists`] when a local style would be created
/// over backing storage that is already initialised as a store.
pub fn create_store(config: &StoreConfig) -> Result<Arc<StoreHandle>> {
    let style = config
        .style
        .ok_or_else(|| XbaseError::CannotCreateStore("store style not specified".into()))?;
    let handle = match style {
        StoreStyle::SingleFile => {
            if config.backing.len() != 1 {
                return Err(XbaseError::CannotCreateStore(
                    "single-file store takes exactly one backing location".into(),
                ));
            }
            if !config.targets.is_empty() {
                return Err(XbaseError::CannotCreateStore("local store takes no targets".into()));
            }
            StoreHandle::SingleFile(SingleFileStore::create(&config.backing[0])?)
        }
        StoreStyle::BlobDir => {
            if config.backing.is_empty() {
                return Err(XbaseError::CannotCreateStore(
                    "file-per-blob store needs at least one backing location".into(),
                ));
            }
            if !config.targets.is_empty() {
                return Err(XbaseError::CannotCreateStore("local store takes no targets".into()));
            }
            StoreHandle::BlobDir(BlobDirStore::create(&config.backing)?)
        }
        StoreStyle::Proxy => {
            if !config.backing.is_empty() {
                return Err(XbaseError::CannotCreateStore(
                    "proxy store takes no backing storage".into(),
                ));
            }
            let proxy = ProxyStore::new();
            for t in &config.targets {
                proxy.add_target(t.clone());
            }
            StoreHandle::Proxy(proxy)
        }
    };
    handle.set_shareable_flag(config.shareable);
    Ok(Arc::new(handle))
}

/// Name of the identity marker file kept beside a local store's data. Its
/// presence is what makes backing storage count as "already a store".
pub(crate) const STORE_ID_FILE: &str = "store-id";
/// Record file of the single-file store style.
pub(crate) const DATA_FILE: &str = "store.dat";
