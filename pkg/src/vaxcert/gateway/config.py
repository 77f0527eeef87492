"""Node configuration: a small TOML file plus environment overrides."""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..credentials import CredentialError, PolicyConfig

ENV_DATA_DIR = "VAX_DATA_DIR"
DEFAULT_LISTEN = "127.0.0.1:8460"


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class NodeConfig:
    data_dir: Path
    listen_addr: str = DEFAULT_LISTEN
    block_batch: int = 10
    block_interval_ms: int = 1000
    challenge_ttl_s: int = 300
    policy: PolicyConfig = field(default_factory=PolicyConfig)

    @property
    def host(self) -> str:
        return self.listen_addr.rsplit(":", 1)[0]

    @property
    def port(self) -> int:
        return int(self.listen_addr.rsplit(":", 1)[1])


def default_data_dir() -> Path:
    env = os.environ.get(ENV_DATA_DIR)
    if env:
        return Path(env)
    return Path.home() / ".vax"


def load_config(path: str | Path | None = None, data_dir: str | Path | None = None) -> NodeConfig:
    """Read a TOML config file; omitted keys fall back to defaults.

    ``data_dir`` wins over the file, which wins over the environment.
    """
    doc: dict = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"no config file at {path}")
        try:
            doc = tomllib.loads(path.read_text("utf-8"))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc

    chosen_dir = Path(data_dir) if data_dir else Path(doc["data_dir"]) if "data_dir" in doc else default_data_dir()

    listen = doc.get("listen_addr", DEFAULT_LISTEN)
    if not isinstance(listen, str) or ":" not in listen:
        raise ConfigError(f"listen_addr must look like host:port, got {listen!r}")
    try:
        port = int(listen.rsplit(":", 1)[1])
    except ValueError as exc:
        raise ConfigError(f"listen_addr port is not a number: {listen!r}") from exc
    if not 0 < port < 65536:
        raise ConfigError(f"listen_addr port out of range: {port}")

    def positive_int(key: str, default: int) -> int:
        value = doc.get(key, default)
        if not isinstance(value, int) or isinstance(value, bool) or value < 1:
            raise ConfigError(f"{key} must be a positive integer, got {value!r}")
        return value

    block_batch = positive_int("block_batch", 10)
    block_interval_ms = positive_int("block_interval_ms", 1000)
    challenge_ttl_s = positive_int("challenge_ttl_s", 300)
    if challenge_ttl_s > 300:
        raise ConfigError("challenge_ttl_s must not exceed 300")

    policy_doc = doc.get("policy", {})
    if not isinstance(policy_doc, dict):
        raise ConfigError("policy section must be a table")
    try:
        policy = PolicyConfig(
            mode=policy_doc.get("mode", "Either"),
            test_validity_hours=policy_doc.get("test_validity_hours", 72),
            min_dose_interval_days=policy_doc.get("min_dose_interval_days", 21),
        )
    except CredentialError as exc:
        raise ConfigError(str(exc)) from exc

    return NodeConfig(
        data_dir=chosen_dir,
        listen_addr=listen,
        block_batch=block_batch,
        block_interval_ms=block_interval_ms,
        challenge_ttl_s=challenge_ttl_s,
        policy=policy,
    )
