//! Casters translate between entities and their byte representations;
//! interpreters translate between byte representations.
//!
//! The store caster flattens a store into an XML document:
//!
//! ```xml
//! <?xml version="1.0" encoding="UTF-8"?>
//! <network ID="1" SHAREABLE="true">
//!   <localStores>
//!     <local ID="2" SHAREABLE="true">
//!       <backingStorage ID="1">
//!         <url>file:///path/DefaultStore0</url>
//!         <files>
//!           <file ID="1">7da3...64 hex...f194</file>
//!         </files>
//!       </backingStorage>
//!     </local>
//!   </localStores>
//!   <remoteNodes>
//!     <url>http://ouzo.dcs.st-and.ac.uk:17000</url>
//!   </remoteNodes>
//! </network>
//! ```
//!
//! `<network>` is a proxy store, `<local>` a local store. ID attributes are
//! 1-based document-order integers; a local store lists its backing
//! locations and the blob files present at the time of reification. Target
//! order is normalised to embedded-stores-then-remote-URLs, which is also
//! the order a proxy scans. A proxy's target list may nest a `<network>`
//! inside `<localStores>`.
//!
//! The namer caster uses an XML document with one `<binding>` element per
//! version entry, in insertion order:
//!
//! ```xml
//! <namer>
//!   <binding name="Vangelis" key="64 hex" timestamp="1000" seq="0"/>
//! </namer>
//! ```
//!
//! Reification is canonical and deterministic: reifying an unchanged entity
//! twice yields byte-identical representations.

use std::path::PathBuf;
use std::sync::Arc;

use crate::error::{Result, XbaseError};
use crate::model::{parse_key, BitString, Name, VersionTuple};
use crate::namer::Namer;
use crate::netd::RemoteUrl;
use crate::store::{
    BlobDirStore, ProxyStore, SingleFileStore, Store, StoreHandle, Target, DATA_FILE,
};
use crate::xml::{self, Document, Element};

/// The caster contract: flatten an entity into a representation and
/// recreate the entity from one.
pub trait Caster<T> {
    fn reify(&self, entity: &T) -> Result<BitString>;
    fn reflect(&self, rep: &BitString) -> Result<T>;
}

/// The interpreter contract: translate between representations.
pub trait Interpreter: Send + Sync {
    fn interpret(&self, rep: &BitString) -> Result<BitString>;
}

// ---------------------------------------------------------------------------
// Bytes caster and inversion interpreter
// ---------------------------------------------------------------------------

/// Intermediate-form caster whose representation is the bytes themselves.
pub struct BytesCaster;

impl Caster<BitString> for BytesCaster {
    fn reify(&self, entity: &BitString) -> Result<BitString> {
        Ok(entity.clone())
    }

    fn reflect(&self, rep: &BitString) -> Result<BitString> {
        Ok(rep.clone())
    }
}

/// Reverses the order of bytes in the given representation; an involution,
/// so the encryptor and the decryptor are the same function.
pub fn interpret_invert(rep: &BitString) -> BitString {
    let mut bytes = rep.as_bytes().to_vec();
    bytes.reverse();
    BitString::from(bytes)
}

/// The inversion "encryption" interpreter.
pub struct Inversion;

impl Interpreter for Inversion {
    fn interpret(&self, rep: &BitString) -> Result<BitString> {
        Ok(interpret_invert(rep))
    }
}

/// Resolves an interpreter by name. Unknown names fail with
/// [`XbaseError::Interpretation`].
pub fn interpreter_by_name(name: &str) -> Result<Box<dyn Interpreter>> {
    match name {
        "invert" => Ok(Box::new(Inversion)),
        other => Err(XbaseError::Interpretation(format!("no interpreter named {other:?}"))),
    }
}

// ---------------------------------------------------------------------------
// Store caster
// ---------------------------------------------------------------------------

pub struct StoreCaster;

impl Caster<Arc<StoreHandle>> for StoreCaster {
    fn reify(&self, entity: &Arc<StoreHandle>) -> Result<BitString> {
        store_reify(entity)
    }

    fn reflect(&self, rep: &BitString) -> Result<Arc<StoreHandle>> {
        store_reflect(rep)
    }
}

/// Flattens a store into its XML representation.
pub fn store_reify(store: &StoreHandle) -> Result<BitString> {
    let mut next_id = 1u32;
    let root = store_element(store, &mut next_id)?;
    Ok(BitString::from(xml::canonical_bytes(&Document::new(root))))
}

fn store_element(store: &StoreHandle, next_id: &mut u32) -> Result<Element> {
    let id = *next_id;
    *next_id += 1;
    let shareable = if store.is_shareable() { "true" } else { "false" };
    match store {
        StoreHandle::SingleFile(s) => {
            let el = Element::new("local")
                .with_attr("ID", id.to_string())
                .with_attr("SHAREABLE", shareable);
            Ok(el.with_child(backing_element(1, s.backing_dir().to_path_buf(), s.keys())?))
        }
        StoreHandle::BlobDir(s) => {
            let mut el = Element::new("local")
                .with_attr("ID", id.to_string())
                .with_attr("SHAREABLE", shareable);
            for (i, dir) in s.backing_dirs().iter().enumerate() {
                el = el.with_child(backing_element(
                    i as u32 + 1,
                    dir.clone(),
                    s.keys_in(dir),
                )?);
            }
            Ok(el)
        }
        StoreHandle::Proxy(p) => {
            let el = Element::new("network")
                .with_attr("ID", id.to_string())
                .with_attr("SHAREABLE", shareable);
            let mut locals = Element::new("localStores");
            let mut remotes = Element::new("remoteNodes");
            for target in p.lookup_target() {
                match target {
                    Target::Embedded(child) => {
                        locals = locals.with_child(store_element(&child, next_id)?);
                    }
                    Target::Remote(url) => {
                        remotes = remotes.with_child(Element::new("url").with_text(url.to_string()));
                    }
                }
            }
            Ok(el.with_child(locals).with_child(remotes))
        }
    }
}

fn backing_element(id: u32, dir: PathBuf, keys: Vec<crate::model::Key>) -> Result<Element> {
    let abs = std::path::absolute(&dir)
        .map_err(|e| XbaseError::Reify(format!("{}: {e}", dir.display())))?;
    let url = url::Url::from_file_path(&abs)
        .map_err(|_| XbaseError::Reify(format!("{} is not an absolute path", abs.display())))?;
    let mut files = Element::new("files");
    for (i, key) in keys.iter().enumerate() {
        files = files.with_child(
            Element::new("file")
                .with_attr("ID", (i + 1).to_string())
                .with_text(key.to_hex()),
        );
    }
    Ok(Element::new("backingStorage")
        .with_attr("ID", id.to_string())
        .with_child(Element::new("url").with_text(url.to_string()))
        .with_child(files))
}

/// Creates an open store from its XML representation. Round-trips with
/// [`store_reify`] up to attribute order and whitespace.
pub fn store_reflect(rep: &BitString) -> Result<Arc<StoreHandle>> {
    Ok(Arc::new(reflect_store_handle(rep)?))
}

pub(crate) fn reflect_store_handle(rep: &BitString) -> Result<StoreHandle> {
    let doc = xml::parse_bytes(rep.as_bytes())
        .map_err(|e| XbaseError::Reflect(format!("store representation: {e}")))?;
    build_store(&doc.root)
}

fn parse_shareable(el: &Element) -> Result<bool> {
    match el.attr("SHAREABLE") {
        Some("true") => Ok(true),
        Some("false") | None => Ok(false),
        Some(other) => Err(XbaseError::Reflect(format!("bad SHAREABLE value {other:?}"))),
    }
}

fn build_store(el: &Element) -> Result<StoreHandle> {
    match el.name.as_str() {
        "local" => {
            let mut dirs = Vec::new();
            for backing in el.child_elements() {
                if backing.name != "backingStorage" {
                    return Err(XbaseError::Reflect(format!(
                        "unexpected element <{}> in <local>",
                        backing.name
                    )));
                }
                let url_text = backing
                    .first_child_element("url")
                    .map(|u| u.text())
                    .ok_or_else(|| XbaseError::Reflect("backingStorage without url".into()))?;
                let url = url::Url::parse(url_text.trim())
                    .map_err(|e| XbaseError::Reflect(format!("bad backing url: {e}")))?;
                let path = url
                    .to_file_path()
                    .map_err(|_| XbaseError::Reflect(format!("not a file url: {url_text}")))?;
                dirs.push(path);
            }
            if dirs.is_empty() {
                return Err(XbaseError::Reflect("local store without backing storage".into()));
            }
            let handle = if dirs.iter().any(|d| d.join(DATA_FILE).exists()) {
                if dirs.len() != 1 {
                    return Err(XbaseError::Reflect(
                        "single-file store has exactly one backing location".into(),
                    ));
                }
                StoreHandle::SingleFile(SingleFileStore::open(&dirs[0])?)
            } else {
                StoreHandle::BlobDir(BlobDirStore::open(&dirs)?)
            };
            handle.set_shareable_flag(parse_shareable(el)?);
            Ok(handle)
        }
        "network" => {
            let proxy = ProxyStore::new();
            proxy.set_shareable_flag(parse_shareable(el)?);
            if let Some(locals) = el.first_child_element("localStores") {
                for child in locals.child_elements() {
                    let embedded = build_store(child)?;
                    proxy.add_target(Target::Embedded(Arc::new(embedded)));
                }
            }
            if let Some(remotes) = el.first_child_element("remoteNodes") {
                for child in remotes.child_elements() {
                    if child.name != "url" {
                        return Err(XbaseError::Reflect(format!(
                            "unexpected element <{}> in <remoteNodes>",
                            child.name
                        )));
                    }
                    let url = RemoteUrl::parse(child.text().trim())
                        .map_err(|e| XbaseError::Reflect(e.to_string()))?;
                    proxy.add_target(Target::Remote(url));
                }
            }
            Ok(StoreHandle::Proxy(proxy))
        }
        other => Err(XbaseError::Reflect(format!(
            "expected <local> or <network>, found <{other}>"
        ))),
    }
}

// ---------------------------------------------------------------------------
// Namer caster
// ---------------------------------------------------------------------------

pub struct NamerCaster;

impl Caster<Namer> for NamerCaster {
    fn reify(&self, entity: &Namer) -> Result<BitString> {
        namer_reify(entity)
    }

    fn reflect(&self, rep: &BitString) -> Result<Namer> {
        namer_reflect(rep)
    }
}

/// Flattens a namer into its XML representation, bindings in insertion order.
pub fn namer_reify(namer: &Namer) -> Result<BitString> {
    let mut root = Element::new("namer");
    for (name, entries) in namer.entries() {
        for entry in entries {
            root = root.with_child(
                Element::new("binding")
                    .with_attr("name", name.as_str())
                    .with_attr("key", entry.key.to_hex())
                    .with_attr("timestamp", entry.timestamp.to_string())
                    .with_attr("seq", entry.seq.to_string()),
            );
        }
    }
    Ok(BitString::from(xml::canonical_bytes(&Document::new(root))))
}

/// Rebuilds a namer from its XML representation: identical binding multimap
/// and version order.
pub fn namer_reflect(rep: &BitString) -> Result<Namer> {
    let doc = xml::parse_bytes(rep.as_bytes())
        .map_err(|e| XbaseError::Reflect(format!("namer representation: {e}")))?;
    if doc.root.name != "namer" {
        return Err(XbaseError::Reflect(format!(
            "expected <namer>, found <{}>",
            doc.root.name
        )));
    }
    let namer = Namer::new();
    for binding in doc.root.child_elements() {
        if binding.name != "binding" {
            return Err(XbaseError::Reflect(format!(
                "unexpected element <{}> in <namer>",
                binding.name
            )));
        }
        let get = |attr: &str| {
            binding
                .attr(attr)
                .ok_or_else(|| XbaseError::Reflect(format!("binding without {attr:?}")))
        };
        let name = Name::new(get("name")?)
            .map_err(|e| XbaseError::Reflect(e.to_string()))?;
        let key = parse_key(get("key")?).map_err(|e| XbaseError::Reflect(e.to_string()))?;
        let timestamp: i64 = get("timestamp")?
            .parse()
            .map_err(|e| XbaseError::Reflect(format!("bad timestamp: {e}")))?;
        let seq: u64 = get("seq")?
            .parse()
            .map_err(|e| XbaseError::Reflect(format!("bad seq: {e}")))?;
        namer.bind_versioned(&VersionTuple::new(name, timestamp, seq), key);
    }
    Ok(namer)
}
