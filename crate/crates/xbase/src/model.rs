//! The universal value types exchanged between components: byte strings,
//! content-derived keys, human-assigned names, store identities and
//! versioned name tuples. All of them are immutable values, safe to share
//! and send between threads.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use rand::RngCore;
use sha2::{Digest, Sha256};

use crate::error::{Result, XbaseError};

/// An immutable, finite byte sequence; the representation every component
/// produces and consumes. Equality is byte-wise. Cloning is cheap.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct BitString(Arc<[u8]>);

impl BitString {
    pub fn new(bytes: impl Into<Arc<[u8]>>) -> BitString {
        BitString(bytes.into())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<u8>> for BitString {
    fn from(v: Vec<u8>) -> BitString {
        BitString(v.into())
    }
}

impl From<&[u8]> for BitString {
    fn from(v: &[u8]) -> BitString {
        BitString(v.into())
    }
}

impl From<String> for BitString {
    fn from(s: String) -> BitString {
        BitString(s.into_bytes().into())
    }
}

impl fmt::Debug for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BitString({} bytes)", self.0.len())
    }
}

/// A content-derived store handle: the SHA-256 digest of the stored bytes.
/// Text form is exactly 64 lowercase hex characters.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Key([u8; 32]);

impl Key {
    pub fn from_digest(digest: [u8; 32]) -> Key {
        Key(digest)
    }

    pub fn digest(&self) -> &[u8; 32] {
        &self.0
    }

    /// Canonical text form: 64 lowercase hex characters.
    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Key({})", self.to_hex())
    }
}

impl std::str::FromStr for Key {
    type Err = XbaseError;

    fn from_str(s: &str) -> Result<Key> {
        parse_key(s)
    }
}

/// Derives the key for a byte sequence. Deterministic: the same bytes yield
/// the same key on every node and store instance.
pub fn derive_key(content: &BitString) -> Key {
    let mut hasher = Sha256::new();
    hasher.update(content.as_bytes());
    Key(hasher.finalize().into())
}

/// Parses the canonical key text form. Accepts exactly 64 lowercase hex
/// characters; anything else is an [`XbaseError::IllegalKey`].
pub fn parse_key(text: &str) -> Result<Key> {
    if text.len() != 64 {
        return Err(XbaseError::IllegalKey(format!(
            "expected 64 hex characters, got {}",
            text.len()
        )));
    }
    if !text.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b)) {
        return Err(XbaseError::IllegalKey(format!(
            "non-lowercase-hex character in {text:?}"
        )));
    }
    let mut digest = [0u8; 32];
    hex::decode_to_slice(text, &mut digest)
        .map_err(|e| XbaseError::IllegalKey(e.to_string()))?;
    Ok(Key(digest))
}

/// A human-assigned identifier: non-empty UTF-8 text without control
/// characters. Equality is exact, case-sensitive string equality.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Name(String);

/// Rejected [`Name`] text; not part of the operation error taxonomy because
/// name construction is input validation, not a storage operation.
#[derive(Debug, Clone, thiserror::Error)]
#[error("invalid name: {0}")]
pub struct InvalidName(pub String);

impl Name {
    pub fn new(value: impl Into<String>) -> std::result::Result<Name, InvalidName> {
        let value = value.into();
        if value.is_empty() {
            return Err(InvalidName("empty string".into()));
        }
        if value.chars().any(char::is_control) {
            return Err(InvalidName(format!("control character in {value:?}")));
        }
        Ok(Name(value))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for Name {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Name({:?})", self.0)
    }
}

/// A store's stable identity: 128 random bits generated once at store
/// creation, rendered as 32 lowercase hex characters.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct StoreId([u8; 16]);

impl StoreId {
    pub fn generate() -> StoreId {
        let mut id = [0u8; 16];
        rand::thread_rng().fill_bytes(&mut id);
        StoreId(id)
    }

    pub fn parse(text: &str) -> Result<StoreId> {
        let mut id = [0u8; 16];
        if text.len() != 32
            || !text.bytes().all(|b| b.is_ascii_digit() || (b'a'..=b'f').contains(&b))
        {
            return Err(XbaseError::IllegalKey(format!("bad store id {text:?}")));
        }
        hex::decode_to_slice(text, &mut id)
            .map_err(|e| XbaseError::IllegalKey(e.to_string()))?;
        Ok(StoreId(id))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    /// The store-id operation result: the UTF-8 bytes of the 32-hex text.
    pub fn to_bitstring(&self) -> BitString {
        BitString::from(self.to_hex().into_bytes())
    }
}

impl fmt::Display for StoreId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for StoreId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StoreId({})", self.to_hex())
    }
}

/// A name coupled with version information. `(timestamp, seq)` totally
/// orders the versions of one name; `seq` breaks ties within a millisecond.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct VersionTuple {
    pub name: Name,
    /// Milliseconds since the Unix epoch, UTC.
    pub timestamp: i64,
    pub seq: u64,
}

impl VersionTuple {
    pub fn new(name: Name, timestamp: i64, seq: u64) -> VersionTuple {
        VersionTuple { name, timestamp, seq }
    }

    /// A tuple stamped with the current clock and the process-wide sequence
    /// counter, so two tuples minted in the same millisecond still order.
    pub fn now(name: Name) -> VersionTuple {
        VersionTuple { name, timestamp: now_ms(), seq: next_seq() }
    }

    /// The orderable part; only meaningful between versions of one name.
    pub fn version(&self) -> (i64, u64) {
        (self.timestamp, self.seq)
    }
}

static SEQ: AtomicU64 = AtomicU64::new(0);

pub(crate) fn next_seq() -> u64 {
    SEQ.fetch_add(1, Ordering::Relaxed)
}

/// Advances the process sequence counter past an externally observed value,
/// keeping fresh tuples strictly newer than anything already recorded.
pub(crate) fn observe_seq(seq: u64) {
    SEQ.fetch_max(seq.saturating_add(1), Ordering::Relaxed);
}

pub(crate) fn now_ms() -> i64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    // SHA-256 of the empty input, computed with an independent reference
    // implementation and frozen.
    const EMPTY_DIGEST: &str =
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855";
    const ABC_DIGEST: &str =
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad";

    // Two canonical address fragments differing only in their town text,
    // hashed with the same reference implementation and frozen.
    const TOWN_A: &str = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<XBaseName ref=\"192.0.0.1-XBaseMembers/teachingStaff/person/address-1\">\n  <address>\n    <town>Kingsbarns</town>\n  </address>\n</XBaseName>\n";
    const TOWN_B: &str = "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<XBaseName ref=\"192.0.0.1-XBaseMembers/teachingStaff/person/address-1\">\n  <address>\n    <town>St Andrews</town>\n  </address>\n</XBaseName>\n";
    const TOWN_A_DIGEST: &str =
        "d5493a15ca2155743edf790b982bd61a14f20cb210f584d7b135968fa5e76aa8";
    const TOWN_B_DIGEST: &str =
        "5788e406a04cfe512f061fee4de5fe53399a76bb9de8d6d7c40f9fe0f7de2a78";

    #[test]
    fn derive_key_matches_frozen_reference_digests() {
        assert_eq!(derive_key(&BitString::from(vec![])).to_hex(), EMPTY_DIGEST);
        assert_eq!(derive_key(&BitString::from(b"abc".as_slice())).to_hex(), ABC_DIGEST);
    }

    #[test]
    fn derive_key_is_deterministic() {
        let b = BitString::from(b"same bytes".as_slice());
        assert_eq!(derive_key(&b), derive_key(&b));
    }

    #[test]
    fn fragments_differing_only_in_town_text_get_distinct_keys() {
        let a = derive_key(&BitString::from(TOWN_A.as_bytes().to_vec()));
        let b = derive_key(&BitString::from(TOWN_B.as_bytes().to_vec()));
        assert_eq!(a.to_hex(), TOWN_A_DIGEST);
        assert_eq!(b.to_hex(), TOWN_B_DIGEST);
        assert_ne!(a, b);
    }

    #[test]
    fn parse_key_round_trips_and_rejects_bad_text() {
        let k = derive_key(&BitString::from(b"x".as_slice()));
        assert_eq!(parse_key(&k.to_hex()).unwrap(), k);
        assert!(matches!(parse_key("abc"), Err(XbaseError::IllegalKey(_))));
        let with_g = format!("{}G", &k.to_hex()[..63]);
        assert!(matches!(parse_key(&with_g), Err(XbaseError::IllegalKey(_))));
        let upper = k.to_hex().to_uppercase();
        assert!(matches!(parse_key(&upper), Err(XbaseError::IllegalKey(_))));
    }

    #[test]
    fn names_reject_empty_and_control_characters() {
        assert!(Name::new("Vangelis").is_ok());
        assert!(Name::new("").is_err());
        assert!(Name::new("a\nb").is_err());
        assert_ne!(Name::new("a").unwrap(), Name::new("A").unwrap());
    }

    #[test]
    fn store_ids_are_distinct_and_parse_back() {
        let a = StoreId::generate();
        let b = StoreId::generate();
        assert_ne!(a, b);
        assert_eq!(StoreId::parse(&a.to_hex()).unwrap(), a);
        assert!(StoreId::parse("zz").is_err());
    }

    #[test]
    fn key_derivation_is_pure_over_ten_thousand_inputs() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(1);
        for _ in 0..10_000 {
            let len = rng.gen_range(0..64);
            let bytes: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
            let b = BitString::from(bytes);
            assert_eq!(derive_key(&b), derive_key(&b));
        }
    }

    #[test]
    fn bitstring_equality_agrees_with_byte_comparison() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(2);
        for _ in 0..200 {
            let a: Vec<u8> = (0..rng.gen_range(0..16)).map(|_| rng.gen()).collect();
            let b: Vec<u8> = (0..rng.gen_range(0..16)).map(|_| rng.gen()).collect();
            let (ba, bb) = (BitString::from(a.clone()), BitString::from(b.clone()));
            assert_eq!(ba, ba.clone());
            assert_eq!(ba == bb, a == b);
            assert_eq!(bb == ba, ba == bb);
        }
    }

    #[test]
    fn parse_key_rejects_every_length_but_64() {
        for len in [0usize, 1, 32, 63, 65, 128] {
            let text = "a".repeat(len);
            assert!(parse_key(&text).is_err(), "length {len} must be rejected");
        }
    }

    #[test]
    fn version_tuples_order_by_timestamp_then_seq() {
        let n = Name::new("doc").unwrap();
        let a = VersionTuple::new(n.clone(), 100, 5);
        let b = VersionTuple::new(n.clone(), 100, 6);
        let c = VersionTuple::new(n, 200, 0);
        assert!(a.version() < b.version());
        assert!(b.version() < c.version());
    }
}
