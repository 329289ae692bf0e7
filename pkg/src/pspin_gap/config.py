"""TOML model/experiment configs and the binary disorder dump.

Model keys: ``n_spins``, ``mixing = [[p, beta_p], ...]``, ``eta = [...]``
(optional, zeros by default), ``seed``. An optional ``[experiment]`` table
describes an ensemble sweep.

A disorder dump holds one record per p: the 8-byte magic ``PSPINGD1``,
then little-endian u64 N, p and element count, then N^p float64 values in
C order.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
import tomli

from .model import Disorder, ModelSpec

__all__ = ["spec_from_dict", "load_config", "load_spec", "dump_disorder", "load_disorder"]

MAGIC = b"PSPINGD1"
_HEADER = struct.Struct("<8sQQQ")


def spec_from_dict(d: dict) -> ModelSpec:
    unknown = set(d) - {"n_spins", "mixing", "eta", "seed", "experiment"}
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    try:
        n = d["n_spins"]
    except KeyError:
        raise ValueError("config is missing n_spins") from None
    return ModelSpec(n, tuple(tuple(pair) for pair in d.get("mixing", [])),
                     tuple(d.get("eta", ())), d.get("seed", 0))


def load_config(path) -> dict:
    with open(path, "rb") as fh:
        return tomli.load(fh)


def load_spec(path) -> ModelSpec:
    return spec_from_dict(load_config(path))


def dump_disorder(disorder: Disorder, path) -> None:
    with open(path, "wb") as fh:
        for p in sorted(disorder.couplings):
            g = disorder.couplings[p]
            fh.write(_HEADER.pack(MAGIC, disorder.n_spins, p, g.size))
            fh.write(np.ascontiguousarray(g, dtype="<f8").tobytes())


def load_disorder(path, n_spins: int | None = None) -> Disorder:
    """Read a dump; ``n_spins`` is needed only for an empty one (no couplings)."""
    expected = n_spins
    data = Path(path).read_bytes()
    pos = 0
    n_spins = None
    couplings = {}
    while pos < len(data):
        if len(data) - pos < _HEADER.size:
            raise ValueError("truncated disorder header")
        magic, n, p, count = _HEADER.unpack_from(data, pos)
        if magic != MAGIC:
            raise ValueError("not a disorder dump (bad magic)")
        if n_spins is not None and n != n_spins:
            raise ValueError("records disagree on N")
        if count != n**p:
            raise ValueError(f"record for p={p} has {count} entries, expected {n**p}")
        n_spins = n
        pos += _HEADER.size
        end = pos + 8 * count
        if end > len(data):
            raise ValueError("truncated disorder payload")
        couplings[p] = np.frombuffer(data[pos:end], dtype="<f8").astype(float).reshape((n,) * p)
        pos = end
    if n_spins is None:
        if expected is None:
            raise ValueError("empty disorder dump and no N given")
        n_spins = expected
    elif expected is not None and expected != n_spins:
        raise ValueError(f"dump has N={n_spins}, expected {expected}")
    return Disorder(n_spins, couplings)
