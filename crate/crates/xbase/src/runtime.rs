//! Process environment: the home directory, the root store and root namer,
//! and stabilisation.
//!
//! The root store is the fixed point of persistence. Stabilising reifies it
//! to `<home>/root-store.xml` (with its identity in `<home>/root-store.id`),
//! stores the reified root namer in the root store and records the
//! resulting key in `<home>/root-namer.key`. On restart the stabilised
//! representation, when present, wins over the configured root-store kind.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Arc, Mutex};

use crate::codecs;
use crate::error::{Result, XbaseError};
use crate::model::{parse_key, StoreId};
use crate::namer::Namer;
use crate::netd::Registry;
use crate::store::{BlobDirStore, ProxyStore, Store, StoreHandle};

pub const ROOT_STORE_FILE: &str = "root-store.xml";
pub const ROOT_STORE_ID_FILE: &str = "root-store.id";
pub const ROOT_NAMER_KEY_FILE: &str = "root-namer.key";
/// Backing directory of a local root store, under the home directory.
pub const DEFAULT_STORE_DIR: &str = "DefaultStore0";

pub const HOME_ENV: &str = "XBASE_HOME";
pub const NODE_IP_ENV: &str = "XBASE_NODE_IP";
pub const ROOT_KIND_ENV: &str = "XBASE_ROOT_STORE_KIND";
pub const DEFAULT_HOME: &str = "./xbase-home";
pub const DEFAULT_NODE_IP: &str = "127.0.0.1";

/// What kind of store a freshly created root store is.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Default)]
pub enum RootStoreKind {
    #[default]
    Local,
    Proxy,
}

impl FromStr for RootStoreKind {
    type Err = XbaseError;

    fn from_str(s: &str) -> Result<RootStoreKind> {
        match s {
            "local" => Ok(RootStoreKind::Local),
            "proxy" => Ok(RootStoreKind::Proxy),
            other => Err(XbaseError::CannotCreateStore(format!(
                "bad root store kind {other:?}, expected \"local\" or \"proxy\""
            ))),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RuntimeConfig {
    pub home: PathBuf,
    pub node_ip: String,
    pub root_store_kind: RootStoreKind,
}

impl Default for RuntimeConfig {
    fn default() -> RuntimeConfig {
        RuntimeConfig {
            home: PathBuf::from(DEFAULT_HOME),
            node_ip: DEFAULT_NODE_IP.into(),
            root_store_kind: RootStoreKind::Local,
        }
    }
}

impl RuntimeConfig {
    /// Configuration from the environment variables, with defaults for
    /// anything unset. Flags layered on top by the CLI take precedence.
    pub fn from_env() -> Result<RuntimeConfig> {
        let mut config = RuntimeConfig::default();
        if let Ok(home) = std::env::var(HOME_ENV) {
            config.home = PathBuf::from(home);
        }
        if let Ok(ip) = std::env::var(NODE_IP_ENV) {
            config.node_ip = ip;
        }
        if let Ok(kind) = std::env::var(ROOT_KIND_ENV) {
            config.root_store_kind = kind.parse()?;
        }
        Ok(config)
    }
}

/// One process's view of its storage environment.
pub struct Runtime {
    config: RuntimeConfig,
    registry: Arc<Registry>,
    root_store: Mutex<Option<Arc<StoreHandle>>>,
    root_namer: Mutex<Option<Arc<Namer>>>,
}

impl Runtime {
    pub fn new(config: RuntimeConfig) -> Runtime {
        Runtime {
            config,
            registry: Registry::new(),
            root_store: Mutex::new(None),
            root_namer: Mutex::new(None),
        }
    }

    pub fn with_home(home: impl Into<PathBuf>, kind: RootStoreKind) -> Runtime {
        Runtime::new(RuntimeConfig {
            home: home.into(),
            root_store_kind: kind,
            ..RuntimeConfig::default()
        })
    }

    pub fn home(&self) -> &Path {
        &self.config.home
    }

    pub fn node_ip(&self) -> &str {
        &self.config.node_ip
    }

    pub fn registry(&self) -> &Arc<Registry> {
        &self.registry
    }

    /// The process-wide root store. A stabilised representation at the
    /// well-known path is reflected when present; otherwise a fresh root
    /// store of the configured kind is created.
    pub fn root_store(&self) -> Result<Arc<StoreHandle>> {
        let mut cached = self.root_store.lock().unwrap();
        if let Some(store) = &*cached {
            return Ok(store.clone());
        }
        let path = self.home().join(ROOT_STORE_FILE);
        let store = if path.exists() {
            let bytes = std::fs::read(&path)
                .map_err(|e| XbaseError::StoreNotFound(format!("{}: {e}", path.display())))?;
            let mut handle = codecs::reflect_store_handle(&bytes.into()).map_err(|e| {
                XbaseError::StoreNotFound(format!("stabilised root store is invalid: {e}"))
            })?;
            // Local stores carry their identity in the backing storage; a
            // proxy restores it from the id file written at stabilisation.
            if let StoreHandle::Proxy(proxy) = &mut handle {
                if let Ok(text) = std::fs::read_to_string(self.home().join(ROOT_STORE_ID_FILE)) {
                    if let Ok(id) = StoreId::parse(text.trim()) {
                        proxy.set_id(id);
                    }
                }
            }
            Arc::new(handle)
        } else {
            match self.config.root_store_kind {
                RootStoreKind::Local => Arc::new(StoreHandle::BlobDir(BlobDirStore::open(
                    &[self.home().join(DEFAULT_STORE_DIR)],
                )?)),
                RootStoreKind::Proxy => Arc::new(StoreHandle::Proxy(ProxyStore::new())),
            }
        };
        self.registry.register_tree(&store);
        *cached = Some(store.clone());
        Ok(store)
    }

    /// The process-wide root namer, reflected from the key recorded at the
    /// last stabilisation when one exists.
    pub fn root_namer(&self) -> Result<Arc<Namer>> {
        let mut cached = self.root_namer.lock().unwrap();
        if let Some(namer) = &*cached {
            return Ok(namer.clone());
        }
        let path = self.home().join(ROOT_NAMER_KEY_FILE);
        let namer = if path.exists() {
            let text = std::fs::read_to_string(&path)
                .map_err(|e| XbaseError::StoreNotFound(format!("{}: {e}", path.display())))?;
            let key = parse_key(text.trim())?;
            let rep = self.root_store()?.get(&key)?;
            Arc::new(codecs::namer_reflect(&rep)?)
        } else {
            Arc::new(Namer::new())
        };
        *cached = Some(namer.clone());
        Ok(namer)
    }

    /// Switches a store's shareability on this host.
    pub fn set_shareable(&self, store: &Arc<StoreHandle>, on: bool) {
        self.registry.set_shareable(store, on);
    }

    /// Stabilises the persistence roots: stores the reified root namer in
    /// the root store, then writes the root store representation and the
    /// recorded key files atomically.
    pub fn stabilise(&self) -> Result<()> {
        let fail = |e: &dyn std::fmt::Display| XbaseError::RootStabilisation(e.to_string());
        let root = self.root_store().map_err(|e| fail(&e))?;
        let namer = self.root_namer().map_err(|e| fail(&e))?;

        let namer_rep = codecs::namer_reify(&namer).map_err(|e| fail(&e))?;
        let namer_key = match root.put(&namer_rep) {
            Ok(key) | Err(XbaseError::KeyExists(key)) => key,
            Err(e) => return Err(fail(&format!("cannot store root namer: {e}"))),
        };

        let store_rep = codecs::store_reify(&root).map_err(|e| fail(&e))?;
        std::fs::create_dir_all(self.home()).map_err(|e| fail(&e))?;
        atomic_write(&self.home().join(ROOT_STORE_FILE), store_rep.as_bytes())?;
        atomic_write(
            &self.home().join(ROOT_STORE_ID_FILE),
            format!("{}\n", root.store_id().to_hex()).as_bytes(),
        )?;
        atomic_write(
            &self.home().join(ROOT_NAMER_KEY_FILE),
            format!("{}\n", namer_key.to_hex()).as_bytes(),
        )?;
        Ok(())
    }
}

fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    let write = || -> std::io::Result<()> {
        std::fs::write(&tmp, bytes)?;
        std::fs::rename(&tmp, path)
    };
    write().map_err(|e| {
        let _ = std::fs::remove_file(&tmp);
        XbaseError::RootStabilisation(format!("{}: {e}", path.display()))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{derive_key, BitString, Name};
    use crate::store::Target;

    #[test]
    fn fresh_local_root_store_is_empty_and_stable_across_calls() {
        let home = tempfile::tempdir().unwrap();
        let rt = Runtime::with_home(home.path(), RootStoreKind::Local);
        let store = rt.root_store().unwrap();
        let absent = derive_key(&BitString::from(b"x".as_slice()));
        assert!(matches!(store.get(&absent), Err(XbaseError::KeyNotFound(_))));
        assert_eq!(rt.root_store().unwrap().store_id(), store.store_id());
        // get_store_id returns the UTF-8 bytes of the 32-hex text.
        assert_eq!(
            store.get_store_id().as_bytes(),
            store.store_id().to_hex().as_bytes()
        );
    }

    #[test]
    fn proxy_root_store_supports_targets() {
        let home = tempfile::tempdir().unwrap();
        let rt = Runtime::with_home(home.path(), RootStoreKind::Proxy);
        let root = rt.root_store().unwrap();
        let proxy = root.as_proxy().expect("proxy root store");
        let local = Arc::new(StoreHandle::BlobDir(
            BlobDirStore::create(&[home.path().join("local")]).unwrap(),
        ));
        proxy.add_target(Target::Embedded(local));
        assert_eq!(proxy.lookup_target().len(), 1);
    }

    #[test]
    fn stabilise_and_restart_preserve_store_id_targets_and_namer() {
        let home = tempfile::tempdir().unwrap();
        let content = BitString::from(b"payload".as_slice());
        let (root_id, key);
        {
            let rt = Runtime::with_home(home.path(), RootStoreKind::Proxy);
            let root = rt.root_store().unwrap();
            let proxy = root.as_proxy().unwrap();
            let local = Arc::new(StoreHandle::BlobDir(
                BlobDirStore::create(&[home.path().join("local")]).unwrap(),
            ));
            proxy.add_target(Target::Embedded(local));
            key = root.put(&content).unwrap();
            let namer = rt.root_namer().unwrap();
            namer.bind(&Name::new("doc").unwrap(), key);
            rt.stabilise().unwrap();
            root_id = root.store_id();
        }
        // A new runtime over the same home plays the part of a restart.
        let rt = Runtime::with_home(home.path(), RootStoreKind::Proxy);
        let root = rt.root_store().unwrap();
        assert_eq!(root.store_id(), root_id);
        assert_eq!(root.as_proxy().unwrap().lookup_target().len(), 1);
        assert_eq!(root.get(&key).unwrap(), content);
        let namer = rt.root_namer().unwrap();
        assert_eq!(namer.lookup(&Name::new("doc").unwrap()).unwrap(), vec![key]);
    }

    #[test]
    fn stabilise_twice_is_idempotent_when_nothing_changed() {
        let home = tempfile::tempdir().unwrap();
        let rt = Runtime::with_home(home.path(), RootStoreKind::Local);
        rt.root_store().unwrap();
        rt.stabilise().unwrap();
        let first = std::fs::read(home.path().join(ROOT_STORE_FILE)).unwrap();
        rt.stabilise().unwrap();
        let second = std::fs::read(home.path().join(ROOT_STORE_FILE)).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn unwritable_home_fails_stabilisation() {
        let dir = tempfile::tempdir().unwrap();
        // A regular file where the home directory should be.
        let blocker = dir.path().join("blocker");
        std::fs::write(&blocker, b"x").unwrap();
        let rt = Runtime::with_home(blocker.join("home"), RootStoreKind::Local);
        assert!(matches!(
            rt.stabilise(),
            Err(XbaseError::RootStabilisation(_))
        ));
    }

    #[test]
    fn corrupt_stabilised_representation_is_store_not_found() {
        let home = tempfile::tempdir().unwrap();
        std::fs::write(home.path().join(ROOT_STORE_FILE), b"not xml").unwrap();
        let rt = Runtime::with_home(home.path(), RootStoreKind::Local);
        assert!(matches!(rt.root_store(), Err(XbaseError::StoreNotFound(_))));
    }

    #[test]
    fn corrupt_namer_key_file_surfaces_illegal_key() {
        let home = tempfile::tempdir().unwrap();
        let rt = Runtime::with_home(home.path(), RootStoreKind::Local);
        rt.root_store().unwrap();
        std::fs::write(home.path().join(ROOT_NAMER_KEY_FILE), b"zz-not-a-key\n").unwrap();
        assert!(matches!(rt.root_namer(), Err(XbaseError::IllegalKey(_))));
    }
}
