//! Key derivation, signatures and digests against vectors produced by an
//! independent Ed25519/SHA-256 implementation (`fixtures/gen_keypair_vectors.py`).

use deedchain::crypto::{digest, identity_digest, keypair_from_seed, DigestId, PublicKey, Signature};
use serde::Deserialize;

#[derive(Deserialize)]
struct Vector {
    seed: String,
    private: String,
    public: String,
    identity: String,
    message: String,
    message_digest: String,
    signature: String,
}

fn vectors() -> Vec<Vector> {
    include_str!("fixtures/keypair_vectors.jsonl")
        .lines()
        .map(|l| serde_json::from_str(l).expect("vector line"))
        .collect()
}

#[test]
fn keypairs_match_reference() {
    let vs = vectors();
    assert_eq!(vs.len(), 16);
    for v in vs {
        let pair = keypair_from_seed(&hex::decode(&v.seed).unwrap()).unwrap();
        assert_eq!(hex::encode(pair.private.as_bytes()), v.private, "seed {}", v.seed);
        assert_eq!(pair.public.to_hex(), v.public, "seed {}", v.seed);
        assert_eq!(identity_digest(&pair).to_hex(), v.identity);
    }
}

#[test]
fn signatures_and_digests_match_reference() {
    for v in vectors() {
        let pair = keypair_from_seed(&hex::decode(&v.seed).unwrap()).unwrap();
        let msg = hex::decode(&v.message).unwrap();
        assert_eq!(pair.sign(&msg).to_hex(), v.signature);
        let public = PublicKey::from_hex(&v.public).unwrap();
        let sig = Signature::from_hex(&v.signature).unwrap();
        assert!(public.verify(&msg, &sig));
        assert_eq!(digest(&msg).to_hex(), v.message_digest);
        assert_eq!(DigestId::from_hex(&v.message_digest).unwrap(), digest(&msg));

        let mut other = msg.clone();
        other.push(0);
        assert!(!public.verify(&other, &sig));
    }
}
