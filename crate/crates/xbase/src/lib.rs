//! XBase: a composable, content-addressed, append-only storage toolkit.
//!
//! Four orthogonal component kinds compose into customised storage
//! pipelines:
//!
//! * **Stores** ([`store`]) map content-derived keys to byte strings,
//!   append-only. Styles: single-file local, file-per-blob local with
//!   multiple backing directories, and proxy stores that forward to other
//!   stores and remote hosts.
//! * **Namers** ([`namer`]) keep the mutable many-many mapping between
//!   human names and keys, with versioned bindings for historical views.
//! * **Casters** ([`codecs`], [`xmlfrag`], [`recordcast`]) translate
//!   between entities and byte representations in both directions.
//! * **Interpreters** ([`codecs`]) translate between byte representations,
//!   standing in for encryption or compression stages.
//!
//! On top of the components: the shareability daemon and its wire protocol
//! ([`netd`]), the process runtime with root store, root namer and
//! stabilisation ([`runtime`]), schema-driven XML document fragmentation
//! ([`xmlfrag`]) and record-graph casting ([`recordcast`]).

pub mod codecs;
pub mod error;
pub mod model;
pub mod namer;
pub mod netd;
pub mod recordcast;
pub mod runtime;
pub mod samples;
pub mod store;
pub mod xml;
pub mod xmlfrag;

pub use error::{ErrorKind, Result, XbaseError};
pub use model::{derive_key, parse_key, BitString, Key, Name, StoreId, VersionTuple};
pub use store::{create_store, Store, StoreConfig, StoreHandle, StoreStyle, Target};
