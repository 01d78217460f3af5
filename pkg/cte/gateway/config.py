"""Gateway configuration: a JSON file over the project settings."""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import timedelta
from pathlib import Path

from django.conf import settings

from cte.authority.service import Environment
from cte.domain.errors import ConfigError
from cte.domain.signing import Certificate
from cte.domain.uf import uf_code


@dataclass(frozen=True)
class GatewayConfig:
    in_dir: Path
    out_dir: Path
    certificate: Certificate
    uf: str
    tick_interval: timedelta = timedelta(seconds=60)
    authority_endpoint: str = "http://127.0.0.1:8000"
    environment: Environment = Environment.APPROVAL
    version: str = "1.04"
    journal_path: Path | None = None
    journal_fsync: bool = True
    snapshot_every: int = 0
    http_timeout: float = 30.0
    dacte_pdf: bool = False

    def __post_init__(self):
        if self.tick_interval <= timedelta(0):
            raise ConfigError("tick_interval must be positive")


def _certificate(data: dict, base: Path) -> Certificate:
    if "certificate" in data:
        raw = data["certificate"]
    elif "certificate_file" in data:
        path = base / data["certificate_file"]
        try:
            raw = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ConfigError(f"Cannot read certificate file {path}: {exc}") from exc
    else:
        raise ConfigError("Configuration has no certificate")
    try:
        cert = Certificate.from_dict(raw)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"Invalid certificate: {exc}") from exc
    if cert.not_before.tzinfo is None or cert.not_after.tzinfo is None:
        raise ConfigError("Certificate validity bounds need a UTC offset")
    return cert


def config_from_dict(data: dict, base: Path | None = None) -> GatewayConfig:
    base = base or Path.cwd()
    try:
        uf = uf_code(str(data.get("uf", settings.CTE_AUTHORITY_UF)))
        environment = Environment(str(data.get("environment", settings.CTE_ENVIRONMENT)).lower())
        tick_seconds = float(data.get("tick_seconds", settings.CTE_TICK_SECONDS))
        journal = data.get("journal_path", settings.CTE_JOURNAL_PATH)
        return GatewayConfig(
            in_dir=base / data.get("in_dir", settings.CTE_IN_DIR),
            out_dir=base / data.get("out_dir", settings.CTE_OUT_DIR),
            certificate=_certificate(data, base),
            uf=uf,
            tick_interval=timedelta(seconds=tick_seconds),
            authority_endpoint=str(data.get("authority_endpoint", settings.CTE_AUTHORITY_ENDPOINT)),
            environment=environment,
            version=str(data.get("version", settings.CTE_PROTOCOL_VERSION)),
            journal_path=base / journal if journal else None,
            journal_fsync=bool(data.get("journal_fsync", settings.CTE_JOURNAL_FSYNC)),
            snapshot_every=int(data.get("snapshot_every", settings.CTE_SNAPSHOT_EVERY)),
            http_timeout=float(data.get("http_timeout", settings.CTE_HTTP_TIMEOUT_SECONDS)),
            dacte_pdf=bool(data.get("dacte_pdf", False)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"Invalid gateway configuration: {exc}") from exc


def load_config(path: Path | str) -> GatewayConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"Cannot read configuration {path}: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"Configuration {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"Configuration {path} must be a JSON object")
    return config_from_dict(data, base=path.parent)
