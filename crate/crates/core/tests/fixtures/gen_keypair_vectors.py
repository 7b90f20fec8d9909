"""Regenerates keypair_vectors.jsonl with an independent Ed25519 stack."""
import hashlib
import json
import pathlib

from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

DOMAIN = b"deedchain/keypair/v1"


def multihash(data: bytes) -> str:
    return "1220" + hashlib.sha256(data).hexdigest()


def vector(seed: bytes, message: bytes) -> dict:
    private = hashlib.sha256(DOMAIN + seed).digest()
    key = Ed25519PrivateKey.from_private_bytes(private)
    public = key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw)
    return {
        "seed": seed.hex(),
        "private": private.hex(),
        "public": public.hex(),
        "identity": multihash(public + private),
        "message": message.hex(),
        "message_digest": multihash(message),
        "signature": key.sign(message).hex(),
    }


def main() -> None:
    seeds = [bytes(16), bytes(range(32)), b"alice-owner-seed", b"x" * 1024]
    seeds += [hashlib.sha256(str(i).encode()).digest()[: 16 + i] for i in range(12)]
    messages = [b"", b"deed", bytes(range(256)), b"transfer of villa to dave"]
    out = pathlib.Path(__file__).with_name("keypair_vectors.jsonl")
    with out.open("w") as f:
        for i, seed in enumerate(seeds):
            f.write(json.dumps(vector(seed, messages[i % len(messages)])) + "\n")


if __name__ == "__main__":
    main()
