//! The shareability daemon and its remote-store client.
//!
//! A daemon serves every shareable store registered on its host over a
//! length-prefixed binary protocol on TCP. Frame layouts, bit-exact:
//!
//! Request:  `[op:1][request_id:16][hop_budget:1][store_id_len:1][store_id][payload_len:4][payload]`
//! Response: `[status:1][payload_len:4][payload]`
//!
//! Ops: `0x01` PUT, `0x02` GET, `0x03` GETID, `0x04` LIST, `0x05` SETSHARE.
//! Lengths are big-endian. `status` is 0 for OK, otherwise the
//! [`ErrorKind`] code (10..=21). An empty `store_id` addresses all
//! shareable stores on the host in registration order. Keys travel in their
//! canonical 64-hex text form; a KeyExists response carries the existing key.
//!
//! Target URLs use `http://host:port` notation to stay readable in store
//! representations, but the transport is this raw protocol, not HTTP.
//!
//! Loop protection: every forwarded request carries a hop budget and a
//! random request id. A daemon that has already seen the request id, or
//! that receives a zero budget, answers not-found for get and refuses put;
//! a forwarding proxy decrements the budget at each network hop.

use std::collections::{HashSet, VecDeque};
use std::io::{Read, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use rand::RngCore;

use crate::error::{ErrorKind, Result, XbaseError};
use crate::model::{parse_key, BitString, Key, StoreId};
use crate::store::{Store, StoreHandle, Target};

pub const DEFAULT_PORT: u16 = 17000;
pub const DEFAULT_HOP_BUDGET: u8 = 8;
const SEEN_CAPACITY: usize = 4096;
const CONNECT_TIMEOUT: Duration = Duration::from_secs(3);
const IO_TIMEOUT: Duration = Duration::from_secs(10);
const MAX_PAYLOAD: u32 = i32::MAX as u32;

const OP_PUT: u8 = 0x01;
const OP_GET: u8 = 0x02;
const OP_GETID: u8 = 0x03;
const OP_LIST: u8 = 0x04;
const OP_SETSHARE: u8 = 0x05;

/// Random identity of one logical request, remembered by daemons to cut
/// forwarding cycles.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct RequestId(pub [u8; 16]);

impl RequestId {
    pub fn fresh() -> RequestId {
        let mut id = [0u8; 16];
        rand::thread_rng().fill_bytes(&mut id);
        RequestId(id)
    }
}

/// Per-request forwarding state threaded through proxy stores.
#[derive(Clone, Copy, Debug)]
pub struct OpContext {
    pub request_id: RequestId,
    pub hops_left: u8,
}

impl OpContext {
    pub fn fresh() -> OpContext {
        OpContext { request_id: RequestId::fresh(), hops_left: DEFAULT_HOP_BUDGET }
    }
}

/// A daemon location: `http://host:port`, optionally with a store-id path
/// selecting one store. Without the path the URL means every shareable
/// store on that host.
#[derive(Clone, PartialEq, Eq, Debug)]
pub struct RemoteUrl {
    pub host: String,
    pub port: u16,
    pub store: Option<StoreId>,
}

impl RemoteUrl {
    pub fn new(host: impl Into<String>, port: u16) -> RemoteUrl {
        RemoteUrl { host: host.into(), port, store: None }
    }

    pub fn with_store(mut self, id: StoreId) -> RemoteUrl {
        self.store = Some(id);
        self
    }

    pub fn parse(text: &str) -> Result<RemoteUrl> {
        let url = url::Url::parse(text)
            .map_err(|e| XbaseError::Daemon(format!("bad target url {text:?}: {e}")))?;
        if url.scheme() != "http" {
            return Err(XbaseError::Daemon(format!(
                "bad target url {text:?}: expected http scheme"
            )));
        }
        let host = url
            .host_str()
            .ok_or_else(|| XbaseError::Daemon(format!("bad target url {text:?}: no host")))?
            .to_string();
        let port = url.port().unwrap_or(DEFAULT_PORT);
        let store = match url.path().trim_matches('/') {
            "" => None,
            id => Some(StoreId::parse(id)?),
        };
        Ok(RemoteUrl { host, port, store })
    }
}

impl std::fmt::Display for RemoteUrl {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "http://{}:{}", self.host, self.port)?;
        if let Some(id) = &self.store {
            write!(f, "/{id}")?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Registry
// ---------------------------------------------------------------------------

/// The host's store registry: which stores exist on this host, in
/// registration order. A store's own shareable flag gates whether the
/// daemon serves it; keeping switched-off stores registered lets a remote
/// SETSHARE switch them back on by id.
#[derive(Default)]
pub struct Registry {
    entries: Mutex<Vec<Arc<StoreHandle>>>,
}

impl Registry {
    pub fn new() -> Arc<Registry> {
        Arc::new(Registry::default())
    }

    pub fn register(&self, store: &Arc<StoreHandle>) {
        let mut entries = self.entries.lock().unwrap();
        if !entries.iter().any(|s| s.store_id() == store.store_id()) {
            entries.push(store.clone());
        }
    }

    /// Registers a store and, for proxies, every embedded descendant.
    pub fn register_tree(&self, store: &Arc<StoreHandle>) {
        self.register(store);
        if let Some(proxy) = store.as_proxy() {
            for target in proxy.lookup_target() {
                if let Target::Embedded(child) = target {
                    self.register_tree(&child);
                }
            }
        }
    }

    /// Switches a store's shareability. Switching on registers the store so
    /// the host daemon starts serving it; switching off makes the daemon
    /// refuse it while keeping it addressable for SETSHARE.
    pub fn set_shareable(&self, store: &Arc<StoreHandle>, on: bool) {
        store.set_shareable_flag(on);
        if on {
            self.register(store);
        }
    }

    pub fn stores(&self) -> Vec<Arc<StoreHandle>> {
        self.entries.lock().unwrap().clone()
    }

    pub fn shareable_stores(&self) -> Vec<Arc<StoreHandle>> {
        self.stores().into_iter().filter(|s| s.is_shareable()).collect()
    }

    pub fn find(&self, id: &StoreId) -> Option<Arc<StoreHandle>> {
        self.stores().into_iter().find(|s| s.store_id() == *id)
    }
}

// ---------------------------------------------------------------------------
// Daemon
// ---------------------------------------------------------------------------

struct SeenIds {
    order: VecDeque<RequestId>,
    set: HashSet<RequestId>,
}

impl SeenIds {
    fn new() -> SeenIds {
        SeenIds { order: VecDeque::new(), set: HashSet::new() }
    }

    /// Records an id; returns false when it was already present.
    fn insert(&mut self, id: RequestId) -> bool {
        if !self.set.insert(id) {
            return false;
        }
        self.order.push_back(id);
        if self.order.len() > SEEN_CAPACITY {
            if let Some(old) = self.order.pop_front() {
                self.set.remove(&old);
            }
        }
        true
    }
}

/// A running daemon. Dropping it stops the accept loop.
pub struct Daemon {
    port: u16,
    shutdown: Arc<AtomicBool>,
    accept_thread: Option<std::thread::JoinHandle<()>>,
}

impl Daemon {
    /// The port actually bound; useful when `serve` was given port 0.
    pub fn port(&self) -> u16 {
        self.port
    }

    pub fn shutdown(&mut self) {
        self.shutdown.store(true, Ordering::SeqCst);
        if let Some(handle) = self.accept_thread.take() {
            let _ = handle.join();
        }
    }
}

impl Drop for Daemon {
    fn drop(&mut self) {
        self.shutdown();
    }
}

/// Starts a daemon serving the registry's shareable stores on `port`
/// (0 picks a free port). Fails with [`XbaseError::Daemon`] when the port
/// cannot be bound.
pub fn serve(registry: Arc<Registry>, port: u16) -> Result<Daemon> {
    let listener = TcpListener::bind(("0.0.0.0", port))
        .map_err(|e| XbaseError::Daemon(format!("cannot bind port {port}: {e}")))?;
    let port = listener
        .local_addr()
        .map_err(|e| XbaseError::Daemon(e.to_string()))?
        .port();
    listener
        .set_nonblocking(true)
        .map_err(|e| XbaseError::Daemon(e.to_string()))?;
    let shutdown = Arc::new(AtomicBool::new(false));
    let seen = Arc::new(Mutex::new(SeenIds::new()));
    let accept_shutdown = shutdown.clone();
    let accept_thread = std::thread::spawn(move || {
        while !accept_shutdown.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((stream, _)) => {
                    let registry = registry.clone();
                    let seen = seen.clone();
                    std::thread::spawn(move || handle_connection(stream, registry, seen));
                }
                Err(e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    std::thread::sleep(Duration::from_millis(5));
                }
                Err(_) => break,
            }
        }
    });
    Ok(Daemon { port, shutdown, accept_thread: Some(accept_thread) })
}

fn handle_connection(stream: TcpStream, registry: Arc<Registry>, seen: Arc<Mutex<SeenIds>>) {
    let _ = stream.set_read_timeout(Some(IO_TIMEOUT));
    let _ = stream.set_write_timeout(Some(IO_TIMEOUT));
    let _ = stream.set_nonblocking(false);
    let mut stream = stream;
    let request = match read_request(&mut stream) {
        Ok(r) => r,
        Err(_) => return,
    };
    let (status, payload) = dispatch(&request, &registry, &seen);
    let _ = write_response(&mut stream, status, &payload);
}

struct Request {
    op: u8,
    request_id: RequestId,
    hop_budget: u8,
    store_id: Option<StoreId>,
    payload: Vec<u8>,
}

fn dispatch(
    request: &Request,
    registry: &Registry,
    seen: &Mutex<SeenIds>,
) -> (u8, Vec<u8>) {
    match run_op(request, registry, seen) {
        Ok(payload) => (0, payload),
        Err(err) => {
            let payload = match &err {
                // The existing key rides back so the caller can reuse it.
                XbaseError::KeyExists(key) => key.to_hex().into_bytes(),
                other => other.to_string().into_bytes(),
            };
            (err.kind().code(), payload)
        }
    }
}

fn run_op(request: &Request, registry: &Registry, seen: &Mutex<SeenIds>) -> Result<Vec<u8>> {
    match request.op {
        OP_PUT | OP_GET => {
            let first_visit = seen.lock().unwrap().insert(request.request_id);
            if !first_visit || request.hop_budget == 0 {
                return Err(match request.op {
                    OP_PUT => XbaseError::StoreNotFound("request refused: forwarding cycle or hop budget exhausted".into()),
                    _ => XbaseError::KeyNotFound(parse_key(
                        std::str::from_utf8(&request.payload).unwrap_or(""),
                    )?),
                });
            }
            let stores = select_stores(request, registry)?;
            let ctx = OpContext { request_id: request.request_id, hops_left: request.hop_budget };
            if request.op == OP_PUT {
                let content = BitString::from(request.payload.clone());
                let key = stores[0].put_ctx(&content, &ctx)?;
                Ok(key.to_hex().into_bytes())
            } else {
                let key = parse_key(std::str::from_utf8(&request.payload).map_err(|_| {
                    XbaseError::IllegalKey("key payload is not UTF-8".into())
                })?)?;
                for store in &stores {
                    match store.get_ctx(&key, &ctx) {
                        Ok(content) => return Ok(content.as_bytes().to_vec()),
                        Err(XbaseError::KeyNotFound(_) | XbaseError::StoreNotFound(_)) => continue,
                        Err(err) => return Err(err),
                    }
                }
                Err(XbaseError::KeyNotFound(key))
            }
        }
        OP_GETID => {
            let stores = select_stores(request, registry)?;
            Ok(stores[0].store_id().to_hex().into_bytes())
        }
        OP_LIST => {
            let ids: Vec<String> = registry
                .shareable_stores()
                .iter()
                .map(|s| s.store_id().to_hex())
                .collect();
            Ok(ids.join("\n").into_bytes())
        }
        OP_SETSHARE => {
            let id = request
                .store_id
                .ok_or_else(|| XbaseError::StoreNotFound("SETSHARE requires a store id".into()))?;
            let store = registry
                .find(&id)
                .ok_or_else(|| XbaseError::StoreNotFound(format!("no store {id} on host")))?;
            let on = request.payload.first().copied().unwrap_or(0) != 0;
            registry.set_shareable(&store, on);
            Ok(Vec::new())
        }
        other => Err(XbaseError::Daemon(format!("unknown op 0x{other:02x}"))),
    }
}

/// Resolves a request's store id to the stores it addresses. An empty id
/// means all shareable stores in registration order; an explicit id must
/// name a shareable store. A host without a matching shareable store
/// refuses with StoreNotFound.
fn select_stores(request: &Request, registry: &Registry) -> Result<Vec<Arc<StoreHandle>>> {
    match request.store_id {
        Some(id) => {
            let store = registry
                .find(&id)
                .filter(|s| s.is_shareable())
                .ok_or_else(|| XbaseError::StoreNotFound(format!("no shareable store {id}")))?;
            Ok(vec![store])
        }
        None => {
            let stores = registry.shareable_stores();
            if stores.is_empty() {
                return Err(XbaseError::StoreNotFound("host serves no shareable stores".into()));
            }
            Ok(stores)
        }
    }
}

// ---------------------------------------------------------------------------
// Frame IO
// ---------------------------------------------------------------------------

fn write_request(
    w: &mut impl Write,
    op: u8,
    request_id: RequestId,
    hop_budget: u8,
    store_id: Option<&StoreId>,
    payload: &[u8],
) -> std::io::Result<()> {
    let id_text = store_id.map(|s| s.to_hex()).unwrap_or_default();
    let mut frame = Vec::with_capacity(23 + id_text.len() + payload.len());
    frame.push(op);
    frame.extend_from_slice(&request_id.0);
    frame.push(hop_budget);
    frame.push(id_text.len() as u8);
    frame.extend_from_slice(id_text.as_bytes());
    frame.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    frame.extend_from_slice(payload);
    w.write_all(&frame)
}

fn read_request(r: &mut impl Read) -> std::io::Result<Request> {
    let mut head = [0u8; 19];
    r.read_exact(&mut head)?;
    let op = head[0];
    let mut request_id = [0u8; 16];
    request_id.copy_from_slice(&head[1..17]);
    let hop_budget = head[17];
    let id_len = head[18] as usize;
    let mut id_buf = vec![0u8; id_len];
    r.read_exact(&mut id_buf)?;
    let store_id = if id_len == 0 {
        None
    } else {
        let text = std::str::from_utf8(&id_buf)
            .map_err(|_| std::io::Error::other("store id is not UTF-8"))?;
        Some(StoreId::parse(text).map_err(|e| std::io::Error::other(e.to_string()))?)
    };
    let mut len_buf = [0u8; 4];
    r.read_exact(&mut len_buf)?;
    let len = u32::from_be_bytes(len_buf);
    if len > MAX_PAYLOAD {
        return Err(std::io::Error::other("payload too large"));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)?;
    Ok(Request { op, request_id: RequestId(request_id), hop_budget, store_id, payload })
}

fn write_response(w: &mut impl Write, status: u8, payload: &[u8]) -> std::io::Result<()> {
    let mut frame = Vec::with_capacity(5 + payload.len());
    frame.push(status);
    frame.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    frame.extend_from_slice(payload);
    w.write_all(&frame)
}

fn read_response(r: &mut impl Read) -> std::io::Result<(u8, Vec<u8>)> {
    let mut head = [0u8; 5];
    r.read_exact(&mut head)?;
    let len = u32::from_be_bytes(head[1..].try_into().unwrap());
    if len > MAX_PAYLOAD {
        return Err(std::io::Error::other("payload too large"));
    }
    let mut payload = vec![0u8; len as usize];
    r.read_exact(&mut payload)?;
    Ok((head[0], payload))
}

// ---------------------------------------------------------------------------
// Client
// ---------------------------------------------------------------------------

fn connect(url: &RemoteUrl) -> Result<TcpStream> {
    let addrs = (url.host.as_str(), url.port)
        .to_socket_addrs()
        .map_err(|e| XbaseError::Daemon(format!("cannot resolve {url}: {e}")))?;
    let mut last = None;
    for addr in addrs {
        match TcpStream::connect_timeout(&addr, CONNECT_TIMEOUT) {
            Ok(stream) => {
                let _ = stream.set_read_timeout(Some(IO_TIMEOUT));
                let _ = stream.set_write_timeout(Some(IO_TIMEOUT));
                return Ok(stream);
            }
            Err(e) => last = Some(e),
        }
    }
    Err(XbaseError::Daemon(format!(
        "cannot connect to {url}: {}",
        last.map(|e| e.to_string()).unwrap_or_else(|| "no addresses".into())
    )))
}

fn roundtrip(url: &RemoteUrl, op: u8, ctx_hops: u8, request_id: RequestId, payload: &[u8]) -> Result<(u8, Vec<u8>)> {
    let mut stream = connect(url)?;
    write_request(&mut stream, op, request_id, ctx_hops, url.store.as_ref(), payload)
        .map_err(|e| XbaseError::Daemon(format!("send to {url} failed: {e}")))?;
    read_response(&mut stream).map_err(|e| XbaseError::Daemon(format!("read from {url} failed: {e}")))
}

fn status_error(status: u8, payload: Vec<u8>, requested_key: Option<Key>) -> XbaseError {
    let text = String::from_utf8_lossy(&payload).to_string();
    match ErrorKind::from_code(status) {
        Some(ErrorKind::KeyExists) => match parse_key(text.trim()) {
            Ok(key) => XbaseError::KeyExists(key),
            Err(_) => XbaseError::Daemon(format!("malformed KeyExists response: {text}")),
        },
        Some(ErrorKind::KeyNotFound) => {
            XbaseError::KeyNotFound(requested_key.unwrap_or(Key::from_digest([0; 32])))
        }
        Some(ErrorKind::StoreNotFound) => XbaseError::StoreNotFound(text),
        Some(ErrorKind::StoreExists) => XbaseError::StoreExists(text),
        Some(ErrorKind::DaemonError) => XbaseError::Daemon(text),
        Some(ErrorKind::IllegalKey) => XbaseError::IllegalKey(text),
        Some(ErrorKind::CannotCreateStore) => XbaseError::CannotCreateStore(text),
        Some(ErrorKind::ReflectError) => XbaseError::Reflect(text),
        Some(ErrorKind::ReifyError) => XbaseError::Reify(text),
        Some(ErrorKind::InterpretationError) => XbaseError::Interpretation(text),
        Some(ErrorKind::NameNotFound) => XbaseError::NameNotFound(text),
        Some(ErrorKind::RootStabilisationError) => XbaseError::RootStabilisation(text),
        None => XbaseError::Daemon(format!("unknown status {status}: {text}")),
    }
}

/// Puts content on a remote host; semantics match a local put against the
/// selected store(s).
pub fn remote_put(
    url: &RemoteUrl,
    content: &BitString,
    hop_budget: u8,
    request_id: RequestId,
) -> Result<Key> {
    if content.len() as u64 > MAX_PAYLOAD as u64 {
        return Err(XbaseError::Daemon("content exceeds the wire size limit".into()));
    }
    let (status, payload) = roundtrip(url, OP_PUT, hop_budget, request_id, content.as_bytes())?;
    if status == 0 {
        parse_key(String::from_utf8_lossy(&payload).trim())
    } else {
        Err(status_error(status, payload, None))
    }
}

/// Gets content from a remote host; byte-identical to a local get.
pub fn remote_get(
    url: &RemoteUrl,
    key: &Key,
    hop_budget: u8,
    request_id: RequestId,
) -> Result<BitString> {
    let (status, payload) =
        roundtrip(url, OP_GET, hop_budget, request_id, key.to_hex().as_bytes())?;
    if status == 0 {
        Ok(BitString::from(payload))
    } else {
        Err(status_error(status, payload, Some(*key)))
    }
}

/// Lists the shareable stores a remote host serves, in registration order.
pub fn remote_list(url: &RemoteUrl) -> Result<Vec<StoreId>> {
    let (status, payload) = roundtrip(url, OP_LIST, DEFAULT_HOP_BUDGET, RequestId::fresh(), &[])?;
    if status != 0 {
        return Err(status_error(status, payload, None));
    }
    let text = String::from_utf8_lossy(&payload).to_string();
    text.lines().filter(|l| !l.is_empty()).map(StoreId::parse).collect()
}

/// The remote analogue of asking a store for its id.
pub fn remote_get_id(url: &RemoteUrl) -> Result<StoreId> {
    let (status, payload) = roundtrip(url, OP_GETID, DEFAULT_HOP_BUDGET, RequestId::fresh(), &[])?;
    if status == 0 {
        StoreId::parse(String::from_utf8_lossy(&payload).trim())
    } else {
        Err(status_error(status, payload, None))
    }
}

/// Switches the shareability of a remote store, addressed by store id.
pub fn remote_set_shareable(url: &RemoteUrl, id: &StoreId, on: bool) -> Result<()> {
    let target = url.clone().with_store(*id);
    let (status, payload) = roundtrip(
        &target,
        OP_SETSHARE,
        DEFAULT_HOP_BUDGET,
        RequestId::fresh(),
        &[on as u8],
    )?;
    if status == 0 {
        Ok(())
    } else {
        Err(status_error(status, payload, None))
    }
}
