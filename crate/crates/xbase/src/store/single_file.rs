//! Local store backed by one append-only record file.
//!
//! Record format, bit-exact: `[key: 32 bytes][len: 4 bytes big-endian][bytes]`,
//! records concatenated in put order. The in-memory index is rebuilt by a
//! full scan at open.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Mutex;

use crate::error::{Result, XbaseError};
use crate::model::{derive_key, BitString, Key, StoreId};
use crate::store::{Store, DATA_FILE, STORE_ID_FILE};

pub struct SingleFileStore {
    dir: PathBuf,
    id: StoreId,
    shareable: AtomicBool,
    state: Mutex<FileState>,
}

/// Key -> (data offset, length) positions within the record file.
type RecordIndex = HashMap<Key, (u64, u32)>;

struct FileState {
    file: File,
    end: u64,
    index: RecordIndex,
}

impl SingleFileStore {
    /// Creates a fresh store; the directory must not already be a store.
    pub fn create(dir: &Path) -> Result<SingleFileStore> {
        if dir.join(STORE_ID_FILE).exists() {
            return Err(XbaseError::StoreExists(dir.display().to_string()));
        }
        Self::init(dir)
    }

    /// Opens the store in `dir`, initialising fresh backing storage if the
    /// directory is not a store yet.
    pub fn open(dir: &Path) -> Result<SingleFileStore> {
        if dir.join(STORE_ID_FILE).exists() {
            let id = read_store_id(dir)?;
            let (file, end, index) = scan(&dir.join(DATA_FILE))?;
            Ok(SingleFileStore {
                dir: dir.to_path_buf(),
                id,
                shareable: AtomicBool::new(false),
                state: Mutex::new(FileState { file, end, index }),
            })
        } else {
            Self::init(dir)
        }
    }

    fn init(dir: &Path) -> Result<SingleFileStore> {
        std::fs::create_dir_all(dir)
            .map_err(|e| XbaseError::CannotCreateStore(format!("{}: {e}", dir.display())))?;
        let id = StoreId::generate();
        write_store_id(dir, &id)?;
        let file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(dir.join(DATA_FILE))
            .map_err(|e| XbaseError::CannotCreateStore(format!("{}: {e}", dir.display())))?;
        Ok(SingleFileStore {
            dir: dir.to_path_buf(),
            id,
            shareable: AtomicBool::new(false),
            state: Mutex::new(FileState { file, end: 0, index: HashMap::new() }),
        })
    }

    pub fn backing_dir(&self) -> &Path {
        &self.dir
    }

    /// All keys currently held, sorted by hex text.
    pub fn keys(&self) -> Vec<Key> {
        let state = self.state.lock().unwrap();
        let mut keys: Vec<Key> = state.index.keys().copied().collect();
        keys.sort();
        keys
    }

    pub fn set_shareable_flag(&self, on: bool) {
        self.shareable.store(on, Ordering::SeqCst);
    }
}

impl Store for SingleFileStore {
    fn put(&self, content: &BitString) -> Result<Key> {
        let key = derive_key(content);
        let mut state = self.state.lock().unwrap();
        if state.index.contains_key(&key) {
            return Err(XbaseError::KeyExists(key));
        }
        let len: u32 = content.len().try_into().map_err(|_| {
            XbaseError::CannotCreateStore("content exceeds the 2^31-1 byte limit".into())
        })?;
        let offset = state.end + 36;
        let mut record = Vec::with_capacity(36 + content.len());
        record.extend_from_slice(key.digest());
        record.extend_from_slice(&len.to_be_bytes());
        record.extend_from_slice(content.as_bytes());
        state
            .file
            .write_all(&record)
            .and_then(|_| state.file.sync_data())
            .map_err(|e| XbaseError::CannotCreateStore(format!("append failed: {e}")))?;
        state.end += record.len() as u64;
        state.index.insert(key, (offset, len));
        Ok(key)
    }

    fn get(&self, key: &Key) -> Result<BitString> {
        let mut state = self.state.lock().unwrap();
        let (offset, len) = *state.index.get(key).ok_or(XbaseError::KeyNotFound(*key))?;
        let mut buf = vec![0u8; len as usize];
        state
            .file
            .seek(SeekFrom::Start(offset))
            .and_then(|_| state.file.read_exact(&mut buf))
            .map_err(|e| XbaseError::StoreNotFound(format!("record read failed: {e}")))?;
        Ok(BitString::from(buf))
    }

    fn store_id(&self) -> StoreId {
        self.id
    }

    fn is_shareable(&self) -> bool {
        self.shareable.load(Ordering::SeqCst)
    }
}

fn scan(path: &Path) -> Result<(File, u64, RecordIndex)> {
    let mut file = OpenOptions::new()
        .create(true)
        .read(true)
        .append(true)
        .open(path)
        .map_err(|e| XbaseError::StoreNotFound(format!("{}: {e}", path.display())))?;
    let mut index = HashMap::new();
    let mut pos = 0u64;
    let total = file
        .seek(SeekFrom::End(0))
        .map_err(|e| XbaseError::StoreNotFound(e.to_string()))?;
    file.seek(SeekFrom::Start(0)).map_err(|e| XbaseError::StoreNotFound(e.to_string()))?;
    let mut header = [0u8; 36];
    while pos < total {
        file.read_exact(&mut header)
            .map_err(|e| XbaseError::StoreNotFound(format!("corrupt record file: {e}")))?;
        let mut digest = [0u8; 32];
        digest.copy_from_slice(&header[..32]);
        let len = u32::from_be_bytes(header[32..].try_into().unwrap());
        let data_offset = pos + 36;
        if data_offset + len as u64 > total {
            return Err(XbaseError::StoreNotFound("truncated record file".into()));
        }
        file.seek(SeekFrom::Current(len as i64))
            .map_err(|e| XbaseError::StoreNotFound(e.to_string()))?;
        index.insert(Key::from_digest(digest), (data_offset, len));
        pos = data_offset + len as u64;
    }
    Ok((file, total, index))
}

pub(crate) fn read_store_id(dir: &Path) -> Result<StoreId> {
    let text = std::fs::read_to_string(dir.join(STORE_ID_FILE))
        .map_err(|e| XbaseError::StoreNotFound(format!("{}: {e}", dir.display())))?;
    StoreId::parse(text.trim())
}

pub(crate) fn write_store_id(dir: &Path, id: &StoreId) -> Result<()> {
    std::fs::write(dir.join(STORE_ID_FILE), format!("{}\n", id.to_hex()))
        .map_err(|e| XbaseError::CannotCreateStore(format!("{}: {e}", dir.display())))
}
