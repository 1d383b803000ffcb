"""Disk cache for spectral data keyed by assembly and solver inputs.

Payloads are self-describing npz containers (format tag, version, key,
dimensions) with a plain-JSON fallback for small spectra; stores are
write-temp-then-rename so readers never see a partial file.  Any cache
I/O problem degrades to recomputation with a logged warning.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
from pathlib import Path

import numpy as np

from .eigensolve import SpectralData

log = logging.getLogger(__name__)

FORMAT_TAG = "orbmag-spectral"
FORMAT_VERSION = 1
JSON_FALLBACK_ELEMENTS = 1024

_ENV_VAR = "ORBMAG_CACHE_DIR"


def cache_dir() -> Path:
    override = os.environ.get(_ENV_VAR)
    if override:
        return Path(override)
    return Path.home() / ".cache" / "orbmag"


def _canonical(value):
    if isinstance(value, dict):
        return {str(k): _canonical(v) for k, v in sorted(value.items())}
    if isinstance(value, (list, tuple)):
        return [_canonical(v) for v in value]
    if isinstance(value, (np.floating, float)):
        return repr(float(value))
    if isinstance(value, (np.integer, int)):
        return int(value)
    return value


def cache_key(key_inputs: dict) -> str:
    blob = json.dumps(_canonical(key_inputs), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:32]


def _to_payload(spectral: SpectralData) -> dict:
    pairs = np.asarray(spectral.degenerate_pairs, dtype=int).reshape(-1, 2) \
        if spectral.degenerate_pairs else np.zeros((0, 2), dtype=int)
    return {
        "eigenvalues": spectral.eigenvalues,
        "eigenvectors": spectral.eigenvectors,
        "residuals": spectral.residuals,
        "count_negative": np.array([spectral.count_negative]),
        "degenerate_pairs": pairs,
    }


def _from_payload(data) -> SpectralData:
    return SpectralData(
        eigenvalues=np.asarray(data["eigenvalues"], dtype=float),
        eigenvectors=np.asarray(data["eigenvectors"]),
        residuals=np.asarray(data["residuals"], dtype=float),
        count_negative=int(np.asarray(data["count_negative"]).ravel()[0]),
        degenerate_pairs=[tuple(p) for p in np.asarray(
            data["degenerate_pairs"], dtype=int).reshape(-1, 2)],
    )


def _atomic_write(path: Path, write_fn):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            write_fn(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _store(path: Path, key: str, spectral: SpectralData):
    payload = _to_payload(spectral)
    small = spectral.eigenvectors.size <= JSON_FALLBACK_ELEMENTS
    header = {"format": FORMAT_TAG, "version": FORMAT_VERSION, "key": key,
              "dims": list(spectral.eigenvectors.shape)}
    if small:
        doc = dict(header)
        doc["complex"] = bool(np.iscomplexobj(spectral.eigenvectors))
        doc["payload"] = {
            k: {"real": np.real(v).tolist(), "imag": np.imag(v).tolist()}
            for k, v in payload.items()}
        _atomic_write(path.with_suffix(".json"),
                      lambda fh: fh.write(json.dumps(doc, sort_keys=True).encode()))
    else:
        def write_npz(fh):
            np.savez(fh, header=json.dumps(header, sort_keys=True), **payload)
        _atomic_write(path.with_suffix(".npz"), write_npz)


def _load(path: Path, key: str) -> SpectralData:
    jpath, npath = path.with_suffix(".json"), path.with_suffix(".npz")
    if jpath.exists():
        doc = json.loads(jpath.read_text())
        if doc.get("format") != FORMAT_TAG or doc.get("version") != FORMAT_VERSION \
                or doc.get("key") != key:
            raise ValueError("cache header mismatch")
        payload = {}
        for k, v in doc["payload"].items():
            arr = np.asarray(v["real"], dtype=float)
            imag = np.asarray(v["imag"], dtype=float)
            payload[k] = arr + 1j * imag if np.any(imag) else arr
        return _from_payload(payload)
    with np.load(npath, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        if header.get("format") != FORMAT_TAG \
                or header.get("version") != FORMAT_VERSION \
                or header.get("key") != key:
            raise ValueError("cache header mismatch")
        return _from_payload(data)


def cache_spectral(key_inputs: dict, compute, directory: Path = None) -> SpectralData:
    """Return cached spectral data on an exact key match, else compute+store."""
    base = Path(directory) if directory is not None else cache_dir()
    key = cache_key(key_inputs)
    stem = base / f"spectral-{key}"
    if stem.with_suffix(".json").exists() or stem.with_suffix(".npz").exists():
        try:
            result = _load(stem, key)
            log.info("spectral cache hit: %s", key)
            return result
        except Exception as exc:  # corrupted or stale: recompute and overwrite
            log.warning("spectral cache unreadable (%s); recomputing", exc)
    else:
        log.info("spectral cache miss: %s", key)
    result = compute()
    try:
        _store(stem, key, result)
    except OSError as exc:
        log.warning("spectral cache store failed (%s); continuing", exc)
    return result
