//! On-disk archive of a world: genesis, chain, store and contract dumps.
//!
//! ```text
//! <dir>/genesis.json
//! <dir>/chain.jsonl
//! <dir>/store/            one file per content id plus index.json
//! <dir>/contracts/<name>.json
//! <dir>/manifest.json
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::World;
use crate::contracts::TransferContract;
use crate::crypto::{digest, DigestId};
use crate::registry::{AnchorChain, ChainFault, Genesis, RegistryError};
use crate::store::{ContentStore, StoreError};
use crate::Tick;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed {file}: {reason}")]
    Malformed { file: String, reason: String },
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("chain verification failed at anchor {}: {:?}", .0.index, .0.reason)]
    Chain(ChainFault),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{0} does not match the manifest")]
    Mismatch(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    /// Script seed; the store operator key derives from it.
    pub seed: String,
    pub tick: Tick,
    pub head: DigestId,
    pub chain_len: usize,
    pub store_objects: usize,
    /// Digest of each contract dump.
    pub contracts: BTreeMap<String, DigestId>,
}

#[derive(Debug)]
pub struct RestoredState {
    pub manifest: Manifest,
    pub chain: AnchorChain,
    pub store: ContentStore,
    pub contracts: BTreeMap<String, TransferContract>,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, SnapshotError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| SnapshotError::Malformed {
        file: path.display().to_string(),
        reason: e.to_string(),
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), SnapshotError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializes");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn snapshot_state(world: &World, dir: &Path) -> Result<Manifest, SnapshotError> {
    fs::create_dir_all(dir.join("contracts"))?;
    write_json(&dir.join("genesis.json"), world.chain.genesis())?;
    fs::write(dir.join("chain.jsonl"), world.chain.to_jsonl())?;
    world.store.export_dir(&dir.join("store"))?;
    let mut contracts = BTreeMap::new();
    for (name, e) in &world.contracts {
        let dump = e.contract.dump();
        fs::write(dir.join("contracts").join(format!("{name}.json")), &dump)?;
        contracts.insert(name.clone(), digest(dump.as_bytes()));
    }
    let manifest = Manifest {
        seed: world.seed.clone(),
        tick: world.clock,
        head: world.chain.head_digest(),
        chain_len: world.chain.len(),
        store_objects: world.store.len(),
        contracts,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Reads an archive back, verifying the chain, every stored blob and every
/// contract dump against the manifest.
pub fn restore_state(dir: &Path) -> Result<RestoredState, SnapshotError> {
    let manifest: Manifest = read_json(&dir.join("manifest.json"))?;
    let store_operator = World::store_operator(&manifest.seed);
    let genesis: Genesis = read_json(&dir.join("genesis.json"))?;
    let chain = AnchorChain::from_jsonl(genesis, &fs::read_to_string(dir.join("chain.jsonl"))?)?;
    chain.verify().map_err(SnapshotError::Chain)?;
    if chain.head_digest() != manifest.head || chain.len() != manifest.chain_len {
        return Err(SnapshotError::Mismatch("chain head".into()));
    }
    let store = ContentStore::import_dir(&dir.join("store"), store_operator)?;
    if store.len() != manifest.store_objects {
        return Err(SnapshotError::Mismatch("store size".into()));
    }
    let mut contracts = BTreeMap::new();
    for (name, expected) in &manifest.contracts {
        let path = dir.join("contracts").join(format!("{name}.json"));
        let dump = fs::read_to_string(&path)?;
        if digest(dump.as_bytes()) != *expected {
            return Err(SnapshotError::Mismatch(format!("contract {name}")));
        }
        let c: TransferContract = serde_json::from_str(&dump).map_err(|e| SnapshotError::Malformed {
            file: path.display().to_string(),
            reason: e.to_string(),
        })?;
        contracts.insert(name.clone(), c);
    }
    Ok(RestoredState {
        manifest,
        chain,
        store,
        contracts,
    })
}
