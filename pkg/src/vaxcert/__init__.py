"""Vaccination and test certificates as verifiable credentials.

The pieces compose end to end: identities sign things, credentials commit
claims behind salted hashes, the blob store keeps only encrypted bundles,
the ledger anchors their content addresses, and presentations disclose
selected claims against a verifier's challenge.
"""

__version__ = "0.1.0"
