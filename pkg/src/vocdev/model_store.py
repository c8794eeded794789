"""Versioned model bundles (.vdm files).

Byte layout, all integers little-endian:

    offset 0   4 bytes   magic b"VDM1"
    offset 4   uint32    header length H
    offset 8   H bytes   UTF-8 JSON header
    offset 8+H payload   float64 arrays, C order, in header["arrays"] order

The header lists every array with its name, shape and byte offset inside the
payload, plus the model configuration, seed lineage and a SHA-256
``content_hash`` over the payload and the rest of the header.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio_features import NormalizationStats
from .errors import FormatError, HashMismatch, IoError, VersionUnsupported
from .memory import ZLayer
from .som import DecaySchedules, SomLayer

MAGIC = b"VDM1"
FORMAT_VERSION = 1
_DTYPE = "<f8"


@dataclass
class ModelBundle:
    som: SomLayer
    z: ZLayer
    normalization: NormalizationStats | None = None
    config: dict = field(default_factory=dict)
    lineage: list = field(default_factory=list)
    seed: int = 0
    format_version: int = FORMAT_VERSION

    def clone(self) -> "ModelBundle":
        """Independent copy; a frozen SOM is shared since it can no longer change."""
        som = self.som if self.som.frozen else self.som.copy()
        return ModelBundle(
            som, self.z.copy(), self.normalization, dict(self.config), list(self.lineage), self.seed, self.format_version
        )

    def fingerprint(self) -> str:
        return fingerprint(self)


def _arrays(bundle: ModelBundle) -> list[tuple[str, np.ndarray]]:
    out = [
        ("som_weights", bundle.som.weights),
        ("z_patterns", bundle.z.pattern_rows),
        ("z_templates", bundle.z.template_rows),
    ]
    if bundle.normalization is not None:
        out += [("norm_mean", bundle.normalization.mean), ("norm_std", bundle.normalization.std)]
    return out


def fingerprint(bundle: ModelBundle) -> str:
    """SHA-256 of the canonical little-endian encoding of every numeric payload."""
    h = hashlib.sha256()
    for name, a in _arrays(bundle):
        a = np.ascontiguousarray(a, dtype=_DTYPE)
        h.update(name.encode())
        h.update(np.asarray(a.shape, dtype="<i8").tobytes())
        h.update(a.tobytes())
    return h.hexdigest()


def _canonical(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode()


def _content_hash(header: dict, payload: bytes) -> str:
    h = hashlib.sha256()
    h.update(_canonical({k: v for k, v in header.items() if k != "content_hash"}))
    h.update(payload)
    return h.hexdigest()


def encode(bundle: ModelBundle) -> bytes:
    som = bundle.som
    specs = []
    chunks = []
    offset = 0
    for name, a in _arrays(bundle):
        raw = np.ascontiguousarray(a, dtype=_DTYPE).tobytes()
        specs.append({"name": name, "shape": list(np.shape(a)), "dtype": _DTYPE, "offset": offset})
        chunks.append(raw)
        offset += len(raw)
    payload = b"".join(chunks)
    s = som.schedules
    header = {
        "format_version": bundle.format_version,
        "som": {
            "schedules": {
                "alpha0": s.alpha0,
                "sigma0": s.sigma0,
                "tau_alpha": s.tau_alpha,
                "tau_sigma": s.tau_sigma,
                "total_iterations": s.total_iterations,
            },
            "kernel": som.kernel,
            "inhibition": som.inhibition,
            "seed": som.seed,
            "trained_iterations": som.trained_iterations,
            "frozen": som.frozen,
        },
        "z": bundle.z.config(),
        "config": bundle.config,
        "lineage": list(bundle.lineage),
        "seed": int(bundle.seed),
        "arrays": specs,
        "fingerprint": fingerprint(bundle),
    }
    header["content_hash"] = _content_hash(header, payload)
    head = json.dumps(header, sort_keys=True).encode()
    return MAGIC + struct.pack("<I", len(head)) + head + payload


def decode(raw: bytes, source="<bytes>") -> ModelBundle:
    if len(raw) < 8 or raw[:4] != MAGIC:
        raise FormatError(f"{source}: not a VDM1 model file")
    (hlen,) = struct.unpack("<I", raw[4:8])
    if 8 + hlen > len(raw):
        raise FormatError(f"{source}: truncated header")
    try:
        header = json.loads(raw[8 : 8 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise HashMismatch(f"{source}: header is corrupted ({exc})") from exc
    version = header.get("format_version")
    if not isinstance(version, int) or version > FORMAT_VERSION or version < 1:
        raise VersionUnsupported(f"{source}: format version {version!r}; this build reads <= {FORMAT_VERSION}")
    payload = raw[8 + hlen :]
    if _content_hash(header, payload) != header.get("content_hash"):
        raise HashMismatch(f"{source}: content hash does not match; file is corrupted")

    arrays = {}
    for spec in header["arrays"]:
        n = int(np.prod(spec["shape"])) * 8
        start = spec["offset"]
        if start + n > len(payload):
            raise FormatError(f"{source}: array {spec['name']} runs past end of file")
        arrays[spec["name"]] = np.frombuffer(payload, dtype=spec["dtype"], count=n // 8, offset=start).reshape(
            spec["shape"]
        ).astype(np.float64)

    sh = header["som"]
    som = SomLayer(
        schedules=DecaySchedules(**sh["schedules"]),
        kernel=sh["kernel"],
        seed=sh["seed"],
        weights=arrays["som_weights"],
        inhibition=sh["inhibition"],
    )
    som.trained_iterations = sh["trained_iterations"]
    if sh["frozen"]:
        som.freeze()
    z = ZLayer.from_arrays(arrays["z_patterns"], arrays["z_templates"], **header["z"])
    norm = None
    if "norm_mean" in arrays:
        norm = NormalizationStats(arrays["norm_mean"], arrays["norm_std"])
    return ModelBundle(som, z, norm, header["config"], header["lineage"], header["seed"], version)


def save(bundle: ModelBundle, path) -> None:
    """Write atomically: a temp file in the target directory, then rename."""
    path = Path(path)
    data = encode(bundle)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    try:
        with open(tmp, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except OSError as exc:
        try:
            tmp.unlink()
        except OSError:
            pass
        raise IoError(f"cannot write model to {path}: {exc}") from exc


def load(path) -> ModelBundle:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read model {path}: {exc}") from exc
    return decode(raw, str(path))


def describe(path) -> dict:
    """Header metadata of a bundle, without the raw arrays (for ``inspect``)."""
    bundle = load(path)
    return {
        "format_version": bundle.format_version,
        "fingerprint": bundle.fingerprint(),
        "seed": bundle.seed,
        "lineage": bundle.lineage,
        "som": {
            "n_neurons": bundle.som.n_neurons,
            "dim": bundle.som.dim,
            "kernel": bundle.som.kernel,
            "trained_iterations": bundle.som.trained_iterations,
            "frozen": bundle.som.frozen,
        },
        "z": {"count": bundle.z.count, **bundle.z.config()},
        "normalization": bundle.normalization is not None,
        "config": bundle.config,
    }
