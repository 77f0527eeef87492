"""Credential issuance and the salted commitment scheme behind it.

A credential never carries claim values. Each claim is committed as
SHA-256(name, value, salt) with a fresh 16-byte salt, the commitments are
folded into a Merkle tree, and only the root is signed into the
credential. The holder keeps the claims and salts; disclosing one claim
later means revealing its value, its salt, and the sibling path up to the
signed root. Everything not disclosed stays behind an unlinkable hash.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass, replace
from random import Random

from . import identity
from .canonical import b64url_decode, b64url_encode, canonical_json_bytes, sha256_bytes

CLAIM_SEPARATOR = "\x1f"
SALT_LEN = 16

TYPE_DOSE = "DoseCredential"
TYPE_FULL_VACCINATION = "FullVaccinationCredential"
TYPE_TEST = "TestCredential"
CREDENTIAL_TYPES = (TYPE_DOSE, TYPE_FULL_VACCINATION, TYPE_TEST)

MS_PER_HOUR = 3_600_000
MS_PER_DAY = 86_400_000

POLICY_MODES = ("VaccinationOnly", "TestOnly", "Either", "Both")

SIDE_LEFT = "L"
SIDE_RIGHT = "R"


class CredentialError(Exception):
    pass


class DuplicateClaimName(CredentialError):
    pass


class SaltCountMismatch(CredentialError):
    pass


class InvalidDoseNumber(CredentialError):
    pass


class SubjectMismatch(CredentialError):
    pass


class MissingDose(CredentialError):
    pass


class IntervalTooShort(CredentialError):
    pass


class BadInputSignature(CredentialError):
    """An input credential fails its own authenticity checks."""


class FutureSampleTime(CredentialError):
    pass


def _rand_bytes(rng: Random | None, n: int) -> bytes:
    return rng.randbytes(n) if rng is not None else os.urandom(n)


def _now_ms() -> int:
    return time.time_ns() // 1_000_000


# -- claims and commitments ------------------------------------------


@dataclass(frozen=True)
class Claim:
    name: str
    value: str


def leaf_hash(name: str, value: str, salt: bytes) -> bytes:
    """Commitment to one claim; the salt blinds dictionary attacks."""
    if len(salt) != SALT_LEN:
        raise SaltCountMismatch(f"salt must be {SALT_LEN} bytes")
    material = CLAIM_SEPARATOR.join((name, value, b64url_encode(salt)))
    return sha256_bytes(material.encode("utf-8"))


@dataclass(frozen=True)
class ClaimCommitment:
    claim: Claim
    salt: bytes

    @property
    def leaf(self) -> bytes:
        return leaf_hash(self.claim.name, self.claim.value, self.salt)


def merkle_root(leaves: list[bytes]) -> bytes:
    """Fold leaves pairwise; an odd node pairs with itself."""
    if not leaves:
        raise CredentialError("cannot build a tree with no leaves")
    level = list(leaves)
    while len(level) > 1:
        if len(level) % 2 == 1:
            level.append(level[-1])
        level = [sha256_bytes(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
    return level[0]


def merkle_path(leaves: list[bytes], index: int) -> list[tuple[bytes, str]]:
    """Sibling chain from ``leaves[index]`` up to the root.

    Each step is (sibling_hash, side) where side says which side the
    sibling occupies when the pair is hashed.
    """
    if not 0 <= index < len(leaves):
        raise CredentialError(f"leaf index {index} out of range")
    path: list[tuple[bytes, str]] = []
    level = list(leaves)
    pos = index
    while len(level) > 1:
        if len(level) % 2 == 1:
            level.append(level[-1])
        sibling = pos ^ 1
        side = SIDE_LEFT if sibling < pos else SIDE_RIGHT
        path.append((level[sibling], side))
        level = [sha256_bytes(level[i] + level[i + 1]) for i in range(0, len(level), 2)]
        pos //= 2
    return path


def fold_path(leaf: bytes, path: list[tuple[bytes, str]]) -> bytes:
    """Recompute the root implied by a leaf and its sibling chain."""
    node = leaf
    for sibling, side in path:
        if side == SIDE_LEFT:
            node = sha256_bytes(sibling + node)
        elif side == SIDE_RIGHT:
            node = sha256_bytes(node + sibling)
        else:
            raise CredentialError(f"bad path side {side!r}")
    return node


@dataclass(frozen=True)
class CommitmentTree:
    """Commitments in leaf order (sorted by claim name) plus the root."""

    commitments: tuple[ClaimCommitment, ...]

    @property
    def leaves(self) -> list[bytes]:
        return [c.leaf for c in self.commitments]

    @property
    def root(self) -> bytes:
        return merkle_root(self.leaves)

    @property
    def root_hex(self) -> str:
        return self.root.hex()

    def index_of(self, name: str) -> int:
        for i, c in enumerate(self.commitments):
            if c.claim.name == name:
                return i
        raise CredentialError(f"no claim named {name!r}")

    def path_for(self, name: str) -> list[tuple[bytes, str]]:
        return merkle_path(self.leaves, self.index_of(name))


def commit_claims(claims: list[Claim], salts: list[bytes]) -> CommitmentTree:
    """Commit claims with caller-supplied salts; one salt per claim."""
    if len(claims) != len(salts):
        raise SaltCountMismatch(f"{len(claims)} claims but {len(salts)} salts")
    names = [c.name for c in claims]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise DuplicateClaimName(f"duplicate claim names: {', '.join(dupes)}")
    for salt in salts:
        if not isinstance(salt, (bytes, bytearray)) or len(salt) != SALT_LEN:
            raise SaltCountMismatch(f"salts must be {SALT_LEN} bytes")
    pairs = sorted(zip(claims, salts), key=lambda p: p[0].name)
    commitments = tuple(ClaimCommitment(claim=c, salt=bytes(s)) for c, s in pairs)
    return CommitmentTree(commitments=commitments)


# -- credentials ------------------------------------------------------


@dataclass(frozen=True)
class VerifiableCredential:
    """Signed envelope around a commitment root; carries no claim values."""

    id: str
    type: str
    issuer_did: str
    subject_did: str
    issued_at: int
    expires_at: int | None
    commitment_root: str
    disclosed_by_default: tuple[str, ...]
    issuer_signature: str

    def signing_doc(self) -> dict:
        return {
            "id": self.id,
            "type": self.type,
            "issuer_did": self.issuer_did,
            "subject_did": self.subject_did,
            "issued_at": self.issued_at,
            "expires_at": self.expires_at,
            "commitment_root": self.commitment_root,
            "disclosed_by_default": list(self.disclosed_by_default),
        }

    def signing_bytes(self) -> bytes:
        return canonical_json_bytes(self.signing_doc())

    def to_doc(self) -> dict:
        doc = self.signing_doc()
        doc["issuer_signature"] = self.issuer_signature
        return doc

    @classmethod
    def from_doc(cls, doc: dict) -> "VerifiableCredential":
        try:
            expires = doc["expires_at"]
            return cls(
                id=doc["id"],
                type=doc["type"],
                issuer_did=doc["issuer_did"],
                subject_did=doc["subject_did"],
                issued_at=int(doc["issued_at"]),
                expires_at=None if expires is None else int(expires),
                commitment_root=doc["commitment_root"],
                disclosed_by_default=tuple(doc["disclosed_by_default"]),
                issuer_signature=doc["issuer_signature"],
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CredentialError(f"malformed credential: {exc}") from exc


@dataclass(frozen=True)
class CredentialBundle:
    """What the holder actually stores: envelope plus claims and salts."""

    credential: VerifiableCredential
    commitments: tuple[ClaimCommitment, ...]

    @property
    def tree(self) -> CommitmentTree:
        return CommitmentTree(commitments=self.commitments)

    @property
    def claim_map(self) -> dict[str, str]:
        return {c.claim.name: c.claim.value for c in self.commitments}

    def to_doc(self) -> dict:
        return {
            "credential": self.credential.to_doc(),
            "claims": [
                {"name": c.claim.name, "value": c.claim.value, "salt": b64url_encode(c.salt)}
                for c in self.commitments
            ],
        }

    def canonical_bytes(self) -> bytes:
        return canonical_json_bytes(self.to_doc())

    @classmethod
    def from_doc(cls, doc: dict) -> "CredentialBundle":
        try:
            credential = VerifiableCredential.from_doc(doc["credential"])
            commitments = tuple(
                ClaimCommitment(
                    claim=Claim(name=entry["name"], value=entry["value"]),
                    salt=b64url_decode(entry["salt"]),
                )
                for entry in doc["claims"]
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise CredentialError(f"malformed credential bundle: {exc}") from exc
        return cls(credential=credential, commitments=commitments)


# -- issuance inputs ---------------------------------------------------


@dataclass(frozen=True)
class DoseInfo:
    vaccine_product: str
    batch: str
    dose_number: int
    administered_at: int
    centre_id: str

    def to_claims(self) -> list[Claim]:
        return [
            Claim("vaccine_product", self.vaccine_product),
            Claim("batch", self.batch),
            Claim("dose_number", str(self.dose_number)),
            Claim("administered_at", str(self.administered_at)),
            Claim("centre_id", self.centre_id),
        ]


@dataclass(frozen=True)
class TestInfo:
    test_type: str
    result: str
    sampled_at: int

    def to_claims(self) -> list[Claim]:
        return [
            Claim("test_type", self.test_type),
            Claim("result", self.result),
            Claim("sampled_at", str(self.sampled_at)),
        ]


@dataclass(frozen=True)
class PolicyConfig:
    mode: str = "Either"
    test_validity_hours: int = 72
    min_dose_interval_days: int = 21

    def __post_init__(self):
        if self.mode not in POLICY_MODES:
            raise CredentialError(f"unknown policy mode {self.mode!r}")
        if self.test_validity_hours <= 0 or self.min_dose_interval_days < 0:
            raise CredentialError("policy durations must be positive")


# -- issuance ----------------------------------------------------------


def _fresh_salts(count: int, rng: Random | None) -> list[bytes]:
    return [_rand_bytes(rng, SALT_LEN) for _ in range(count)]


def _issue(
    issuer: identity.KeyPair,
    subject_did: str,
    credential_type: str,
    claims: list[Claim],
    issued_at: int,
    expires_at: int | None,
    disclosed_by_default: tuple[str, ...],
    rng: Random | None,
) -> CredentialBundle:
    identity.resolve(subject_did)  # fail early on a bad subject
    tree = commit_claims(claims, _fresh_salts(len(claims), rng))
    unsigned = VerifiableCredential(
        id="vc-" + _rand_bytes(rng, 16).hex(),
        type=credential_type,
        issuer_did=issuer.did,
        subject_did=subject_did,
        issued_at=issued_at,
        expires_at=expires_at,
        commitment_root=tree.root_hex,
        disclosed_by_default=disclosed_by_default,
        issuer_signature="",
    )
    sig = identity.sign(issuer.private_key, unsigned.signing_bytes())
    credential = replace(unsigned, issuer_signature=sig.hex())
    return CredentialBundle(credential=credential, commitments=tree.commitments)


def issue_dose_credential(
    issuer: identity.KeyPair,
    subject_did: str,
    info: DoseInfo,
    clock=None,
    rng: Random | None = None,
) -> CredentialBundle:
    """Certify a single administered dose."""
    if info.dose_number not in (1, 2):
        raise InvalidDoseNumber(f"dose_number must be 1 or 2, got {info.dose_number}")
    now = (clock or _now_ms)()
    return _issue(
        issuer,
        subject_did,
        TYPE_DOSE,
        info.to_claims(),
        issued_at=now,
        expires_at=None,
        disclosed_by_default=("dose_number",),
        rng=rng,
    )


def issue_test_credential(
    issuer: identity.KeyPair,
    subject_did: str,
    info: TestInfo,
    policy: PolicyConfig | None = None,
    clock=None,
    rng: Random | None = None,
) -> CredentialBundle:
    """Certify a test result; expires a fixed window after sampling."""
    policy = policy or PolicyConfig()
    now = (clock or _now_ms)()
    if info.sampled_at > now:
        raise FutureSampleTime(f"sampled_at {info.sampled_at} is after issuance time {now}")
    return _issue(
        issuer,
        subject_did,
        TYPE_TEST,
        info.to_claims(),
        issued_at=now,
        expires_at=info.sampled_at + policy.test_validity_hours * MS_PER_HOUR,
        disclosed_by_default=("result",),
        rng=rng,
    )


def issue_full_vaccination(
    issuer: identity.KeyPair,
    subject_did: str,
    dose1: CredentialBundle,
    dose2: CredentialBundle,
    policy: PolicyConfig | None = None,
    clock=None,
    rng: Random | None = None,
) -> CredentialBundle:
    """Combine two authentic dose credentials into a completion certificate.

    The result references the doses by id and commitment root, so a
    verifier can audit the chain without ever seeing dose claim values.
    """
    policy = policy or PolicyConfig()
    for label, bundle in (("first", dose1), ("second", dose2)):
        if bundle.credential.type != TYPE_DOSE:
            raise MissingDose(f"{label} input is a {bundle.credential.type}, not a {TYPE_DOSE}")
        ok, reasons = verify_bundle(bundle)
        if not ok:
            raise BadInputSignature(f"{label} dose credential fails checks: {'; '.join(reasons)}")
        if bundle.credential.subject_did != subject_did:
            raise SubjectMismatch(f"{label} dose was issued to a different subject")

    numbers = {int(b.claim_map["dose_number"]): b for b in (dose1, dose2)}
    if set(numbers) != {1, 2}:
        raise MissingDose(f"need dose numbers 1 and 2, got {sorted(numbers)}")
    first, second = numbers[1], numbers[2]

    t1 = int(first.claim_map["administered_at"])
    t2 = int(second.claim_map["administered_at"])
    gap_days = (t2 - t1) / MS_PER_DAY
    if t2 - t1 < policy.min_dose_interval_days * MS_PER_DAY:
        raise IntervalTooShort(
            f"doses are {gap_days:.1f} days apart, need {policy.min_dose_interval_days}"
        )

    claims = [
        Claim("dose1_id", first.credential.id),
        Claim("dose1_root", first.credential.commitment_root),
        Claim("dose2_id", second.credential.id),
        Claim("dose2_root", second.credential.commitment_root),
        Claim("vaccine_product", second.claim_map["vaccine_product"]),
        Claim("completed_at", str(t2)),
    ]
    now = (clock or _now_ms)()
    return _issue(
        issuer,
        subject_did,
        TYPE_FULL_VACCINATION,
        claims,
        issued_at=now,
        expires_at=None,
        disclosed_by_default=("vaccine_product",),
        rng=rng,
    )


# -- verification ------------------------------------------------------


def verify_credential(vc: VerifiableCredential) -> tuple[bool, list[str]]:
    """Envelope-level checks: structure and issuer signature.

    Never consults the ledger; whitelist standing is a separate question
    answered at presentation time.
    """
    reasons: list[str] = []
    if vc.type not in CREDENTIAL_TYPES:
        reasons.append(f"unknown credential type {vc.type!r}")
    if not isinstance(vc.issued_at, int) or vc.issued_at <= 0:
        reasons.append("issued_at must be a positive timestamp")
    if vc.expires_at is not None and vc.expires_at <= vc.issued_at:
        reasons.append("expires_at must be after issued_at")
    root = vc.commitment_root
    if not (isinstance(root, str) and len(root) == 64 and all(c in "0123456789abcdef" for c in root)):
        reasons.append("commitment_root is not a 32-byte hex digest")
    try:
        issuer_doc = identity.resolve(vc.issuer_did)
    except identity.IdentityError as exc:
        reasons.append(f"issuer identifier does not resolve: {exc}")
        return False, reasons
    try:
        identity.resolve(vc.subject_did)
    except identity.IdentityError as exc:
        reasons.append(f"subject identifier does not resolve: {exc}")
    try:
        sig = bytes.fromhex(vc.issuer_signature)
    except (TypeError, ValueError):
        reasons.append("issuer signature is not hex")
        return False, reasons
    if not identity.verify(issuer_doc.verification_key, vc.signing_bytes(), sig):
        reasons.append("issuer signature does not verify")
    return not reasons, reasons


def verify_bundle(bundle: CredentialBundle) -> tuple[bool, list[str]]:
    """Envelope checks plus claims-to-root consistency."""
    ok, reasons = verify_credential(bundle.credential)
    names = [c.claim.name for c in bundle.commitments]
    if len(set(names)) != len(names):
        reasons.append("bundle has duplicate claim names")
    elif not bundle.commitments:
        reasons.append("bundle has no claims")
    else:
        try:
            if bundle.tree.root_hex != bundle.credential.commitment_root:
                reasons.append("claims do not hash to the signed commitment root")
        except CredentialError as exc:
            reasons.append(f"claims cannot be committed: {exc}")
    return not reasons, reasons


# -- policy ------------------------------------------------------------


@dataclass(frozen=True)
class EvidenceItem:
    """One presented credential plus whatever claims were disclosed."""

    credential: VerifiableCredential
    disclosed: dict[str, str]


@dataclass(frozen=True)
class PolicyDecision:
    accept: bool
    basis: str
    detail: str


def evaluate_policy(
    evidence: list[EvidenceItem],
    policy: PolicyConfig | None = None,
    now: int | None = None,
) -> PolicyDecision:
    """Decide entry from already-authenticated evidence.

    Callers must only pass evidence whose signatures, anchors, and
    disclosure proofs have held up; this function judges freshness and
    sufficiency, nothing else.
    """
    policy = policy or PolicyConfig()
    now = now if now is not None else _now_ms()

    has_vaccination = False
    has_test = False
    notes: list[str] = []
    for item in evidence:
        vc = item.credential
        expired = vc.expires_at is not None and now >= vc.expires_at
        if vc.type == TYPE_FULL_VACCINATION:
            if expired:
                notes.append(f"{vc.id}: vaccination certificate expired")
            else:
                has_vaccination = True
        elif vc.type == TYPE_TEST:
            if expired:
                notes.append(f"{vc.id}: test result outside its validity window")
            elif item.disclosed.get("result") != "negative":
                notes.append(f"{vc.id}: test result not disclosed as negative")
            else:
                has_test = True

    if has_vaccination and has_test:
        basis = "Both"
    elif has_vaccination:
        basis = "Vaccination"
    elif has_test:
        basis = "NegativeTest"
    else:
        basis = "None"

    accept = {
        "VaccinationOnly": has_vaccination,
        "TestOnly": has_test,
        "Either": has_vaccination or has_test,
        "Both": has_vaccination and has_test,
    }[policy.mode]
    detail = "; ".join(notes) if notes else f"mode {policy.mode}, basis {basis}"
    return PolicyDecision(accept=accept, basis=basis, detail=detail)
