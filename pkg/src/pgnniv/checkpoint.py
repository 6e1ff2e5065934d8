"""Versioned text checkpoints: a spec echo followed by named parameter matrices.

Layout::

    # pgnniv-checkpoint v1
    spec {"input_size": 1, ...}
    param W1 1 3
    <row of 17-significant-digit floats>
    ...

Constraints are code, not data, and are not stored; re-register them after
loading if training continues.
"""

from __future__ import annotations

from pathlib import Path

import json

import numpy as np

from . import autodiff as ad
from .errors import ParseError
from .network import Network, NetworkSpec, build_network

FORMAT_TAG = "# pgnniv-checkpoint v1"


def dumps(network: Network) -> str:
    lines = [FORMAT_TAG, "spec " + network.spec.to_json()]
    for pid, p in network.params.items():
        rows, cols = p.shape
        lines.append(f"param {pid} {rows} {cols}")
        lines.extend(" ".join(f"{v:.17g}" for v in row) for row in p.value)
    return "\n".join(lines) + "\n"


def save(network: Network, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(network))
    return path


def loads(text: str) -> Network:
    lines = text.splitlines()
    if not lines or lines[0].strip() != FORMAT_TAG:
        raise ParseError(f"expected {FORMAT_TAG!r}", 1)
    if len(lines) < 2 or not lines[1].startswith("spec "):
        raise ParseError("expected 'spec {...}'", 2)
    try:
        spec = NetworkSpec.from_dict(json.loads(lines[1][5:]))
    except (json.JSONDecodeError, TypeError, KeyError) as exc:
        raise ParseError(f"bad spec: {exc}", 2) from None
    net = build_network(spec, seed=0)
    seen = set()
    i = 2
    while i < len(lines):
        if not lines[i].strip():
            i += 1
            continue
        head = lines[i].split()
        if len(head) != 4 or head[0] != "param":
            raise ParseError(f"expected 'param <id> <rows> <cols>', got {lines[i]!r}", i + 1)
        try:
            pid, rows, cols = head[1], int(head[2]), int(head[3])
        except ValueError:
            raise ParseError(f"bad param dimensions in {lines[i]!r}", i + 1) from None
        if pid not in net.params:
            raise ParseError(f"unknown param {pid!r} for this spec", i + 1)
        if i + rows >= len(lines):
            raise ParseError(f"param {pid!r} truncated", i + 1)
        try:
            values = [[float(v) for v in lines[i + 1 + r].split()] for r in range(rows)]
        except (ValueError, IndexError):
            raise ParseError(f"bad values for param {pid!r}", i + 2) from None
        arr = np.array(values, dtype=np.float64)
        if arr.shape != (rows, cols) or net.params[pid].shape != (rows, cols):
            raise ParseError(f"param {pid!r}: shape mismatch {arr.shape} vs declared "
                             f"{(rows, cols)} vs spec {net.params[pid].shape}", i + 1)
        net.params[pid].value = arr
        seen.add(pid)
        i += 1 + rows
    missing = set(net.params) - seen
    if missing:
        raise ParseError(f"checkpoint lacks params {sorted(missing)}", len(lines))
    return net


def load(path: str | Path) -> Network:
    return loads(Path(path).read_text())
