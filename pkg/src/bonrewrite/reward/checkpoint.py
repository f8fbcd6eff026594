"""Reward-model checkpoint files.

Layout (all offsets in bytes)::

    0 .. L-1    UTF-8 JSON header, keys sorted, no newlines inside
    L           b"\\n"
    L+1 ..      param_count little-endian float32 values:
                W1 row-major (hidden x input_dim), b1, w2, b2

Header keys: ``format`` ("bonrewrite-reward"), ``version``, ``input_dim``,
``hidden``, ``param_count``, ``encoder`` (EncoderConfig fields),
``metadata`` (seed, margin, epochs, ...) and ``crc32`` of the parameter
block. Writing the same model twice gives identical bytes.
"""

from __future__ import annotations

import json
import zlib
from pathlib import Path

import numpy as np

from ..errors import CheckpointFormatError, CheckpointVersionError
from .encoder import EncoderConfig
from .model import RewardModel

FORMAT_NAME = "bonrewrite-reward"
FORMAT_VERSION = 1
_MAX_HEADER = 1 << 20


def dump_model(model: RewardModel) -> bytes:
    block = model.flat_params().astype("<f4").tobytes()
    header = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "input_dim": model.input_dim,
        "hidden": model.hidden,
        "param_count": model.param_count,
        "encoder": model.encoder_config.to_dict(),
        "metadata": model.metadata,
        "crc32": zlib.crc32(block),
    }
    head = json.dumps(header, sort_keys=True, ensure_ascii=True, separators=(",", ":"))
    return head.encode("ascii") + b"\n" + block


def parse_model(data: bytes) -> RewardModel:
    nl = data.find(b"\n", 0, _MAX_HEADER)
    if nl < 0:
        raise CheckpointFormatError("no header terminator found", min(len(data), _MAX_HEADER))
    try:
        header = json.loads(data[:nl].decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise CheckpointFormatError("header is not UTF-8", exc.start) from exc
    except json.JSONDecodeError as exc:
        raise CheckpointFormatError(f"header is not valid JSON ({exc.msg})", exc.pos) from exc
    if not isinstance(header, dict) or header.get("format") != FORMAT_NAME:
        raise CheckpointFormatError("not a reward-model checkpoint", 0)
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint format version {header.get('version')!r} is incompatible "
            f"with this reader (version {FORMAT_VERSION})"
        )
    try:
        hidden, input_dim, count = (int(header[k]) for k in ("hidden", "input_dim", "param_count"))
        encoder = EncoderConfig.from_dict(header["encoder"])
        crc = int(header["crc32"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CheckpointFormatError(f"header field problem: {exc}", 0) from exc
    if count != input_dim * hidden + 2 * hidden + 1:
        raise CheckpointFormatError("param_count disagrees with hidden/input_dim", 0)

    start = nl + 1
    block = data[start:]
    expected = 4 * count
    if len(block) < expected:
        raise CheckpointFormatError(
            f"parameter block truncated: {len(block)} of {expected} bytes", len(data)
        )
    if len(block) > expected:
        raise CheckpointFormatError("trailing bytes after parameter block", start + expected)
    if zlib.crc32(block) != crc:
        raise CheckpointFormatError("parameter block checksum mismatch", start)
    flat = np.frombuffer(block, dtype="<f4").astype(np.float64)
    bad = np.flatnonzero(~np.isfinite(flat))
    if bad.size:
        raise CheckpointFormatError("non-finite parameter", start + 4 * int(bad[0]))

    h, f = hidden, input_dim
    return RewardModel(
        encoder_config=encoder,
        W1=flat[: h * f].reshape(h, f),
        b1=flat[h * f : h * f + h],
        w2=flat[h * f + h : h * f + 2 * h],
        b2=float(flat[-1]),
        metadata=dict(header.get("metadata", {})),
    )


def save_model(model: RewardModel, path: str | Path) -> None:
    Path(path).write_bytes(dump_model(model))


def load_model(path: str | Path) -> RewardModel:
    return parse_model(Path(path).read_bytes())
