//! Error taxonomy shared by every component.
//!
//! Every fallible operation in the toolkit reports exactly one of the
//! twelve [`ErrorKind`]s. The kinds carry stable numeric codes (10..=21)
//! which double as CLI exit codes and wire status bytes.

use crate::model::Key;

/// The failure classes an operation can report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ErrorKind {
    StoreNotFound,
    StoreExists,
    DaemonError,
    IllegalKey,
    CannotCreateStore,
    KeyNotFound,
    KeyExists,
    ReflectError,
    ReifyError,
    InterpretationError,
    NameNotFound,
    RootStabilisationError,
}

impl ErrorKind {
    pub const ALL: [ErrorKind; 12] = [
        ErrorKind::StoreNotFound,
        ErrorKind::StoreExists,
        ErrorKind::DaemonError,
        ErrorKind::IllegalKey,
        ErrorKind::CannotCreateStore,
        ErrorKind::KeyNotFound,
        ErrorKind::KeyExists,
        ErrorKind::ReflectError,
        ErrorKind::ReifyError,
        ErrorKind::InterpretationError,
        ErrorKind::NameNotFound,
        ErrorKind::RootStabilisationError,
    ];

    /// Stable numeric code: 10..=21, used as process exit code and wire status.
    pub fn code(self) -> u8 {
        10 + Self::ALL.iter().position(|k| *k == self).unwrap() as u8
    }

    pub fn from_code(code: u8) -> Option<ErrorKind> {
        Self::ALL.get(code.checked_sub(10)? as usize).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::StoreNotFound => "StoreNotFound",
            ErrorKind::StoreExists => "StoreExists",
            ErrorKind::DaemonError => "DaemonError",
            ErrorKind::IllegalKey => "IllegalKey",
            ErrorKind::CannotCreateStore => "CannotCreateStore",
            ErrorKind::KeyNotFound => "KeyNotFound",
            ErrorKind::KeyExists => "KeyExists",
            ErrorKind::ReflectError => "ReflectError",
            ErrorKind::ReifyError => "ReifyError",
            ErrorKind::InterpretationError => "InterpretationError",
            ErrorKind::NameNotFound => "NameNotFound",
            ErrorKind::RootStabilisationError => "RootStabilisationError",
        }
    }
}

/// The toolkit-wide error type.
#[derive(Debug, Clone, thiserror::Error)]
pub enum XbaseError {
    #[error("cannot open store: {0}")]
    StoreNotFound(String),
    #[error("store already exists: {0}")]
    StoreExists(String),
    #[error("daemon failure: {0}")]
    Daemon(String),
    #[error("illegal key: {0}")]
    IllegalKey(String),
    #[error("cannot create store: {0}")]
    CannotCreateStore(String),
    #[error("no binding for key {0}")]
    KeyNotFound(Key),
    /// Carries the key of the binding that already holds the content, so
    /// callers can treat the duplicate put as "already present".
    #[error("binding already present for key {0}")]
    KeyExists(Key),
    #[error("cannot reflect representation: {0}")]
    Reflect(String),
    #[error("cannot reify entity: {0}")]
    Reify(String),
    #[error("interpretation failed: {0}")]
    Interpretation(String),
    #[error("no binding for name {0:?}")]
    NameNotFound(String),
    #[error("root stabilisation failed: {0}")]
    RootStabilisation(String),
}

impl XbaseError {
    pub fn kind(&self) -> ErrorKind {
        match self {
            XbaseError::StoreNotFound(_) => ErrorKind::StoreNotFound,
            XbaseError::StoreExists(_) => ErrorKind::StoreExists,
            XbaseError::Daemon(_) => ErrorKind::DaemonError,
            XbaseError::IllegalKey(_) => ErrorKind::IllegalKey,
            XbaseError::CannotCreateStore(_) => ErrorKind::CannotCreateStore,
            XbaseError::KeyNotFound(_) => ErrorKind::KeyNotFound,
            XbaseError::KeyExists(_) => ErrorKind::KeyExists,
            XbaseError::Reflect(_) => ErrorKind::ReflectError,
            XbaseError::Reify(_) => ErrorKind::ReifyError,
            XbaseError::Interpretation(_) => ErrorKind::InterpretationError,
            XbaseError::NameNotFound(_) => ErrorKind::NameNotFound,
            XbaseError::RootStabilisation(_) => ErrorKind::RootStabilisationError,
        }
    }
}

pub type Result<T> = std::result::Result<T, XbaseError>;
