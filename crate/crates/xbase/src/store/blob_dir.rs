//! Local store keeping one file per blob, spread round-robin over one or
//! more backing directories. A blob's file name is the 64-hex text of its
//! key; `get` probes every directory.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;

use crate::error::{Result, XbaseError};
use crate::model::{derive_key, parse_key, BitString, Key, StoreId};
use crate::store::single_file::{read_store_id, write_store_id};
use crate::store::{Store, STORE_ID_FILE};

pub struct BlobDirStore {
    dirs: Vec<PathBuf>,
    id: StoreId,
    shareable: AtomicBool,
    // Serialises puts: round-robin cursor plus the existence probe.
    cursor: Mutex<usize>,
}

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

impl BlobDirStore {
    /// Creates a fresh store; none of the directories may already be a store.
    pub fn create(dirs: &[PathBuf]) -> Result<BlobDirStore> {
        for dir in dirs {
            if dir.join(STORE_ID_FILE).exists() {
                return Err(XbaseError::StoreExists(dir.display().to_string()));
            }
        }
        Self::init(dirs)
    }

    /// Opens the store over `dirs`, initialising anything missing. The
    /// identity marker lives in the first directory.
    pub fn open(dirs: &[PathBuf]) -> Result<BlobDirStore> {
        if dirs.is_empty() {
            return Err(XbaseError::CannotCreateStore("no backing directories".into()));
        }
        if dirs[0].join(STORE_ID_FILE).exists() {
            for dir in dirs {
                std::fs::create_dir_all(dir).map_err(|e| {
                    XbaseError::CannotCreateStore(format!("{}: {e}", dir.display()))
                })?;
            }
            let id = read_store_id(&dirs[0])?;
            Ok(BlobDirStore {
                dirs: dirs.to_vec(),
                id,
                shareable: AtomicBool::new(false),
                cursor: Mutex::new(0),
            })
        } else {
            Self::init(dirs)
        }
    }

    fn init(dirs: &[PathBuf]) -> Result<BlobDirStore> {
        if dirs.is_empty() {
            return Err(XbaseError::CannotCreateStore("no backing directories".into()));
        }
        for dir in dirs {
            std::fs::create_dir_all(dir)
                .map_err(|e| XbaseError::CannotCreateStore(format!("{}: {e}", dir.display())))?;
        }
        let id = StoreId::generate();
        write_store_id(&dirs[0], &id)?;
        Ok(BlobDirStore {
            dirs: dirs.to_vec(),
            id,
            shareable: AtomicBool::new(false),
            cursor: Mutex::new(0),
        })
    }

    pub fn backing_dirs(&self) -> &[PathBuf] {
        &self.dirs
    }

    fn find_blob(&self, key: &Key) -> Option<PathBuf> {
        let name = key.to_hex();
        self.dirs.iter().map(|d| d.join(&name)).find(|p| p.exists())
    }

    /// Keys of the blobs in one backing directory, sorted by hex text.
    pub fn keys_in(&self, dir: &Path) -> Vec<Key> {
        let mut keys = Vec::new();
        if let Ok(entries) = std::fs::read_dir(dir) {
            for entry in entries.flatten() {
                if let Some(name) = entry.file_name().to_str() {
                    if let Ok(key) = parse_key(name) {
                        keys.push(key);
                    }
                }
            }
        }
        keys.sort();
        keys
    }

    /// All keys currently held across every backing directory, sorted.
    pub fn keys(&self) -> Vec<Key> {
        let mut keys: Vec<Key> = self.dirs.iter().flat_map(|d| self.keys_in(d)).collect();
        keys.sort();
        keys.dedup();
        keys
    }

    pub fn set_shareable_flag(&self, on: bool) {
        self.shareable.store(on, Ordering::SeqCst);
    }
}

impl Store for BlobDirStore {
    fn put(&self, content: &BitString) -> Result<Key> {
        let key = derive_key(content);
        let mut cursor = self.cursor.lock().unwrap();
        if self.find_blob(&key).is_some() {
            return Err(XbaseError::KeyExists(key));
        }
        let dir = &self.dirs[*cursor % self.dirs.len()];
        *cursor += 1;
        let tmp = dir.join(format!(
            ".tmp-{}-{}",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let write = || -> std::io::Result<()> {
            let mut f = std::fs::File::create(&tmp)?;
            std::io::Write::write_all(&mut f, content.as_bytes())?;
            f.sync_data()?;
            std::fs::rename(&tmp, dir.join(key.to_hex()))
        };
        write().map_err(|e| {
            let _ = std::fs::remove_file(&tmp);
            XbaseError::CannotCreateStore(format!("blob write failed: {e}"))
        })?;
        Ok(key)
    }

    fn get(&self, key: &Key) -> Result<BitString> {
        let path = self.find_blob(key).ok_or(XbaseError::KeyNotFound(*key))?;
        let bytes = std::fs::read(path)
            .map_err(|e| XbaseError::StoreNotFound(format!("blob read failed: {e}")))?;
        Ok(BitString::from(bytes))
    }

    fn store_id(&self) -> StoreId {
        self.id
    }

    fn is_shareable(&self) -> bool {
        self.shareable.load(Ordering::SeqCst)
    }
}
