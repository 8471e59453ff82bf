"""Pairing-based primitives: BBS+ signatures, Pedersen commitments, range proofs."""

from .bbs import (
    BlindCommitmentProof,
    InvalidSignatureError,
    LinkOpening,
    MultiMessageSignature,
    ProofOfKnowledgeError,
    PublicKey,
    SchemaError,
    SignatureProofOfKnowledge,
    SignerKeyPair,
    blind_commit,
    blind_sign,
    keygen,
    sign,
    spk_prove,
    spk_verify,
    unblind_signature,
    verify_blind_commitment,
    verify_signature,
)
from .group import R, DeterministicRng, EncodingError, SystemRng, hash_to_scalar, random_scalar
from .pedersen import PedersenCommitment, commit, commit_public
from .rangeproof import RangeError, RangeProof, prove_range, verify_range
from .transcript import Transcript

__all__ = [
    "BlindCommitmentProof",
    "DeterministicRng",
    "EncodingError",
    "InvalidSignatureError",
    "LinkOpening",
    "MultiMessageSignature",
    "PedersenCommitment",
    "ProofOfKnowledgeError",
    "PublicKey",
    "R",
    "RangeError",
    "RangeProof",
    "SchemaError",
    "SignatureProofOfKnowledge",
    "SignerKeyPair",
    "SystemRng",
    "Transcript",
    "blind_commit",
    "blind_sign",
    "commit",
    "commit_public",
    "hash_to_scalar",
    "keygen",
    "prove_range",
    "random_scalar",
    "sign",
    "spk_prove",
    "spk_verify",
    "unblind_signature",
    "verify_blind_commitment",
    "verify_range",
    "verify_signature",
]
