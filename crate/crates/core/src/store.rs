//! In-process content-addressed store with per-requester watermarking.
//!
//! Content is named by the multihash of its bytes. Nothing is ever
//! overwritten or collected; a put of existing bytes is a no-op that returns
//! the same id.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path;

use chacha20poly1305::aead::{Aead, KeyInit};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{DecodeError, Decoder, Encoder};
use crate::crypto::{digest, DigestId, PublicKey, Signature, Signer};
use crate::registry::AnchorChain;
use crate::{MapLocation, Tick};

const DOSSIER_DOMAIN: &str = "deedchain/dossier/v1";
const SEALED_DOMAIN: &str = "deedchain/sealed-dossier/v1";
const WATERMARK_DOMAIN: &str = "deedchain/watermark/v1";
const INDEX_FILE: &str = "index.json";

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ContentId(pub DigestId);

impl ContentId {
    pub fn of(data: &[u8]) -> Self {
        ContentId(digest(data))
    }

    pub fn to_hex(&self) -> String {
        self.0.to_hex()
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        DigestId::from_hex(s).ok().map(ContentId)
    }
}

impl fmt::Debug for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ContentId({})", self.0.to_hex())
    }
}

impl fmt::Display for ContentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.to_hex())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("content {0} not found")]
    NotFound(ContentId),
    #[error("stored bytes for {0} fail re-verification")]
    DigestMismatch(ContentId),
    #[error("dossier references missing media {0}")]
    DanglingMedia(ContentId),
    #[error("requestor {0} does not resolve on the registry")]
    UnknownRequestor(String),
    #[error("dossier is sealed and the key is missing or wrong")]
    Sealed,
    #[error("decode: {0}")]
    Decode(#[from] DecodeError),
    #[error("io: {0}")]
    Io(String),
}

impl From<std::io::Error> for StoreError {
    fn from(e: std::io::Error) -> Self {
        StoreError::Io(e.to_string())
    }
}

/// Symmetric key an owner uses to seal a dossier.
#[derive(Clone, PartialEq, Eq)]
pub struct DossierKey(pub [u8; 32]);

impl fmt::Debug for DossierKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("DossierKey(..)")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaItem {
    pub label: String,
    pub content: ContentId,
}

/// Full off-chain description of a property.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PropertyDossier {
    pub property_id: DigestId,
    pub description: String,
    pub media: Vec<MediaItem>,
    pub map_location: MapLocation,
    pub maintenance_notes: String,
    pub transfer_history: Vec<ContentId>,
}

impl PropertyDossier {
    pub fn to_canonical(&self) -> Vec<u8> {
        let mut enc = Encoder::with_domain(DOSSIER_DOMAIN);
        self.property_id.encode(&mut enc);
        enc.str(&self.description).count(self.media.len());
        for m in &self.media {
            enc.str(&m.label);
            m.content.0.encode(&mut enc);
        }
        self.map_location.encode(&mut enc);
        enc.str(&self.maintenance_notes)
            .count(self.transfer_history.len());
        for c in &self.transfer_history {
            c.0.encode(&mut enc);
        }
        enc.finish()
    }

    pub fn from_canonical(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut dec = Decoder::new(bytes);
        dec.expect_domain(DOSSIER_DOMAIN)?;
        let property_id = DigestId::decode(&mut dec)?;
        let description = dec.string()?;
        let n = dec.count()?;
        let mut media = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            let label = dec.string()?;
            let content = ContentId(DigestId::decode(&mut dec)?);
            media.push(MediaItem { label, content });
        }
        let map_location = MapLocation::decode(&mut dec)?;
        let maintenance_notes = dec.string()?;
        let n = dec.count()?;
        let mut transfer_history = Vec::with_capacity(n.min(1024));
        for _ in 0..n {
            transfer_history.push(ContentId(DigestId::decode(&mut dec)?));
        }
        dec.finish()?;
        Ok(Self {
            property_id,
            description,
            media,
            map_location,
            maintenance_notes,
            transfer_history,
        })
    }
}

/// Attribution attached to every watermarked download.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WatermarkRecord {
    pub owner_name: String,
    pub requestor_id: DigestId,
    pub marketplace_id: DigestId,
    pub issued_at: Tick,
    pub content_ref: ContentId,
    pub binding_signature: Signature,
}

impl WatermarkRecord {
    fn signing_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::with_domain(WATERMARK_DOMAIN);
        enc.str(&self.owner_name);
        self.requestor_id.encode(&mut enc);
        self.marketplace_id.encode(&mut enc);
        enc.u64(self.issued_at.0);
        self.content_ref.0.encode(&mut enc);
        enc.finish()
    }

    pub fn verify(&self, operator: &PublicKey) -> bool {
        operator.verify(&self.signing_bytes(), &self.binding_signature)
    }
}

/// Splits a watermark envelope into its record and the original bytes.
pub fn unwrap_envelope(envelope: &[u8]) -> Result<(WatermarkRecord, Vec<u8>), DecodeError> {
    let mut dec = Decoder::new(envelope);
    dec.expect_domain(WATERMARK_DOMAIN)?;
    let owner_name = dec.string()?;
    let requestor_id = DigestId::decode(&mut dec)?;
    let marketplace_id = DigestId::decode(&mut dec)?;
    let issued_at = Tick(dec.u64()?);
    let content_ref = ContentId(DigestId::decode(&mut dec)?);
    let binding_signature = Signature::decode(&mut dec)?;
    let content = dec.bytes()?.to_vec();
    dec.finish()?;
    Ok((
        WatermarkRecord {
            owner_name,
            requestor_id,
            marketplace_id,
            issued_at,
            content_ref,
            binding_signature,
        },
        content,
    ))
}

/// Checks an envelope on its own: operator signature and inner digest.
pub fn verify_envelope(envelope: &[u8], operator: &PublicKey) -> Result<WatermarkRecord, StoreError> {
    let (record, content) = unwrap_envelope(envelope)?;
    if !record.verify(operator) {
        return Err(StoreError::DigestMismatch(record.content_ref));
    }
    if ContentId::of(&content) != record.content_ref {
        return Err(StoreError::DigestMismatch(record.content_ref));
    }
    Ok(record)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArchiveIndex {
    algorithm: String,
    entries: Vec<ArchiveEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ArchiveEntry {
    cid: ContentId,
    len: usize,
}

#[derive(Debug, Clone)]
pub struct ContentStore {
    blobs: BTreeMap<ContentId, Vec<u8>>,
    operator: Signer,
}

impl ContentStore {
    pub fn new(operator: Signer) -> Self {
        Self {
            blobs: BTreeMap::new(),
            operator,
        }
    }

    pub fn operator_key(&self) -> PublicKey {
        self.operator.public()
    }

    pub fn put(&mut self, data: &[u8]) -> ContentId {
        let id = ContentId::of(data);
        self.blobs.entry(id).or_insert_with(|| data.to_vec());
        id
    }

    pub fn get(&self, id: &ContentId) -> Result<Vec<u8>, StoreError> {
        let bytes = self.blobs.get(id).ok_or(StoreError::NotFound(*id))?;
        if ContentId::of(bytes) != *id {
            return Err(StoreError::DigestMismatch(*id));
        }
        Ok(bytes.clone())
    }

    pub fn contains(&self, id: &ContentId) -> bool {
        self.blobs.contains_key(id)
    }

    pub fn len(&self) -> usize {
        self.blobs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blobs.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = &ContentId> {
        self.blobs.keys()
    }

    /// Re-hashes every blob; the first mismatch is returned.
    pub fn verify_all(&self) -> Result<(), StoreError> {
        for (id, bytes) in &self.blobs {
            if ContentId::of(bytes) != *id {
                return Err(StoreError::DigestMismatch(*id));
            }
        }
        Ok(())
    }

    /// Test hook: replaces stored bytes without re-addressing them.
    #[doc(hidden)]
    pub fn corrupt_for_test(&mut self, id: &ContentId, bytes: Vec<u8>) {
        self.blobs.insert(*id, bytes);
    }

    pub fn pin_dossier(
        &mut self,
        dossier: &PropertyDossier,
        key: Option<&DossierKey>,
    ) -> Result<ContentId, StoreError> {
        for m in &dossier.media {
            if !self.contains(&m.content) {
                return Err(StoreError::DanglingMedia(m.content));
            }
        }
        let plain = dossier.to_canonical();
        let bytes = match key {
            None => plain,
            Some(k) => seal(k, &plain),
        };
        Ok(self.put(&bytes))
    }

    pub fn open_dossier(
        &self,
        id: &ContentId,
        key: Option<&DossierKey>,
    ) -> Result<PropertyDossier, StoreError> {
        let bytes = self.get(id)?;
        if let Ok(d) = PropertyDossier::from_canonical(&bytes) {
            return Ok(d);
        }
        let key = key.ok_or(StoreError::Sealed)?;
        let plain = unseal(key, &bytes)?;
        Ok(PropertyDossier::from_canonical(&plain)?)
    }

    /// Returns the content wrapped in a signed attribution envelope.
    pub fn get_watermarked(
        &self,
        id: &ContentId,
        owner_name: &str,
        requestor_id: &DigestId,
        marketplace_id: &DigestId,
        chain: &AnchorChain,
        clock: Tick,
    ) -> Result<(Vec<u8>, WatermarkRecord), StoreError> {
        let content = self.get(id)?;
        if !chain.resolve(requestor_id).is_found() {
            return Err(StoreError::UnknownRequestor(requestor_id.short()));
        }
        let mut record = WatermarkRecord {
            owner_name: owner_name.to_string(),
            requestor_id: *requestor_id,
            marketplace_id: *marketplace_id,
            issued_at: clock,
            content_ref: *id,
            binding_signature: Signature::from_slice(&[0; 64]).expect("64 bytes"),
        };
        let signing = record.signing_bytes();
        record.binding_signature = self.operator.sign(&signing);
        let mut enc = Encoder::new();
        enc.raw(&signing);
        record.binding_signature.encode(&mut enc);
        enc.bytes(&content);
        Ok((enc.finish(), record))
    }

    /// Writes one file per blob (hex id as name) plus `index.json`.
    pub fn export_dir(&self, dir: &Path) -> Result<(), StoreError> {
        fs::create_dir_all(dir)?;
        let mut entries = Vec::with_capacity(self.blobs.len());
        for (id, bytes) in &self.blobs {
            fs::write(dir.join(id.to_hex()), bytes)?;
            entries.push(ArchiveEntry {
                cid: *id,
                len: bytes.len(),
            });
        }
        let index = ArchiveIndex {
            algorithm: "sha2-256".into(),
            entries,
        };
        let json = serde_json::to_string_pretty(&index).map_err(|e| StoreError::Io(e.to_string()))?;
        fs::write(dir.join(INDEX_FILE), json + "\n")?;
        Ok(())
    }

    /// Reads an archive written by [`ContentStore::export_dir`], verifying
    /// every blob against its name.
    pub fn import_dir(dir: &Path, operator: Signer) -> Result<Self, StoreError> {
        let raw = fs::read_to_string(dir.join(INDEX_FILE))?;
        let index: ArchiveIndex =
            serde_json::from_str(&raw).map_err(|e| StoreError::Io(e.to_string()))?;
        let mut store = Self::new(operator);
        for e in index.entries {
            let bytes = fs::read(dir.join(e.cid.to_hex()))?;
            if bytes.len() != e.len || ContentId::of(&bytes) != e.cid {
                return Err(StoreError::DigestMismatch(e.cid));
            }
            store.blobs.insert(e.cid, bytes);
        }
        Ok(store)
    }
}

fn seal(key: &DossierKey, plain: &[u8]) -> Vec<u8> {
    // nonce bound to key and plaintext so pinning is idempotent
    let mut enc = Encoder::with_domain(SEALED_DOMAIN);
    enc.raw(&key.0).raw(plain);
    let n = digest(enc.as_slice());
    let nonce = &n.bytes()[..12];
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&key.0));
    let ct = cipher
        .encrypt(Nonce::from_slice(nonce), plain)
        .expect("in-memory encryption");
    let mut out = Encoder::with_domain(SEALED_DOMAIN);
    out.bytes(nonce).bytes(&ct);
    out.finish()
}

fn unseal(key: &DossierKey, bytes: &[u8]) -> Result<Vec<u8>, StoreError> {
    let mut dec = Decoder::new(bytes);
    dec.expect_domain(SEALED_DOMAIN)?;
    let nonce = dec.fixed::<12>()?;
    let ct = dec.bytes()?;
    dec.finish()?;
    ChaCha20Poly1305::new(Key::from_slice(&key.0))
        .decrypt(Nonce::from_slice(&nonce), ct)
        .map_err(|_| StoreError::Sealed)
}
