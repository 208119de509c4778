"""Bernoulli multicast probing and missing-data injection.

Random numbers come from numpy's PCG64 generator seeded through
``SeedSequence(entropy=seed, spawn_key=(block,))``: probes are generated in
fixed blocks of ``BLOCK_SIZE`` and every block owns an independent
substream.  A block's draws therefore do not depend on how many blocks came
before it, so blocks can be produced in any order (or in parallel) and the
trace is bit-identical to sequential generation.
"""
from __future__ import annotations

import io
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence, Union

import numpy as np

from .errors import RateOutOfRange, TomographyError
from .tree import Tree

BLOCK_SIZE = 4096

Seed = Union[int, Sequence[int]]


@dataclass(frozen=True)
class ProbeTrace:
    """Receiver observations of ``n`` probes.

    ``Y[i, r]`` is 1 when receiver ``receivers[r]`` saw probe ``i``.
    ``mask[i, r]`` is True when that observation is missing; the value in
    ``Y`` underneath is kept so tests can compare against the truth.
    ``hidden`` holds the per-node pass states when requested from
    :func:`simulate` and is None otherwise.
    """

    Y: np.ndarray
    receivers: tuple
    seed: object = None
    mask: np.ndarray | None = None
    hidden: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.Y.ndim != 2 or self.Y.shape[1] != len(self.receivers):
            raise ValueError(f"Y has shape {self.Y.shape}, expected (n, {len(self.receivers)})")
        if self.mask is not None and self.mask.shape != self.Y.shape:
            raise ValueError(f"mask shape {self.mask.shape} differs from Y shape {self.Y.shape}")
        for arr in (self.Y, self.mask, self.hidden):
            if arr is not None:
                arr.setflags(write=False)

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def observed(self) -> np.ndarray:
        """Y with missing entries forced to 0."""
        if self.mask is None:
            return self.Y
        return self.Y & ~self.mask

    @property
    def has_missing(self) -> bool:
        return self.mask is not None and bool(self.mask.any())

    def column(self, receiver: int) -> int:
        return self.receivers.index(receiver)


def _block_rng(seed: Seed, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(block,))))


def _simulate_block(t: Tree, nb: int, rng: np.random.Generator) -> np.ndarray:
    alpha = t.alpha_array
    passed = rng.random((nb, t.n_nodes - 1)) < alpha[1:]
    X = np.empty((nb, t.n_nodes), dtype=bool)
    X[:, 0] = True
    for k in t.order[1:]:
        np.logical_and(X[:, t.parent[k]], passed[:, k - 1], out=X[:, k])
    return X


def simulate(t: Tree, n: int, seed: Seed, keep_hidden: bool = False) -> ProbeTrace:
    """Send ``n`` probes down ``t``; each link ``k`` passes a probe with rate ``alpha[k]``."""
    if n < 1:
        raise ValueError(f"probe count must be >= 1, got {n}")
    n_blocks = -(-n // BLOCK_SIZE)
    X = np.concatenate([
        _simulate_block(t, min(BLOCK_SIZE, n - b * BLOCK_SIZE), _block_rng(seed, b))
        for b in range(n_blocks)
    ])
    Y = X[:, list(t.receivers)].astype(np.uint8)
    return ProbeTrace(Y, t.receivers, seed=seed, hidden=X if keep_hidden else None)


MissingModel = Union[float, Callable[[ProbeTrace, np.random.Generator], np.ndarray]]


def mar_when(target: int, trigger: int, value: int = 0) -> Callable:
    """MAR rule: hide ``target``'s observation whenever ``trigger`` observed ``value``."""

    def rule(tr: ProbeTrace, rng: np.random.Generator) -> np.ndarray:
        mask = np.zeros(tr.Y.shape, dtype=bool)
        mask[:, tr.column(target)] = tr.Y[:, tr.column(trigger)] == value
        return mask

    rule.__name__ = f"mar_when(target={target}, trigger={trigger}, value={value})"
    return rule


def inject_missing(tr: ProbeTrace, model: MissingModel, seed: Seed) -> ProbeTrace:
    """Return a copy of ``tr`` with a missing-data mask.

    ``model`` is either an MCAR rate ``p`` (every entry hidden independently
    with probability ``p``) or a callable ``rule(trace, rng) -> bool mask``
    such as :func:`mar_when`.  An existing mask is combined by OR.
    """
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    if callable(model):
        mask = np.asarray(model(tr, rng), dtype=bool)
        if mask.shape != tr.Y.shape:
            raise TomographyError(f"missing-data rule returned shape {mask.shape}, expected {tr.Y.shape}")
    else:
        p = float(model)
        if not 0.0 <= p < 1.0:
            raise RateOutOfRange(f"MCAR rate must lie in [0, 1), got {p}")
        mask = rng.random(tr.Y.shape) < p
    if tr.mask is not None:
        mask = mask | tr.mask
    return replace(tr, mask=mask)


def write_trace(tr: ProbeTrace, dest) -> None:
    """Comma-separated export: receiver ids, then one 0/1/? row per probe."""
    cells = tr.Y.astype(str).astype(object)
    if tr.mask is not None:
        cells[tr.mask] = "?"
    text = ",".join(str(r) for r in tr.receivers) + "\n"
    text += "".join(",".join(row) + "\n" for row in cells)
    if hasattr(dest, "write"):
        dest.write(text)
    else:
        with open(dest, "w", newline="") as fh:
            fh.write(text)


def read_trace(src) -> ProbeTrace:
    if hasattr(src, "read"):
        text = src.read()
    else:
        with open(src) as fh:
            text = fh.read()
    lines = [ln.strip() for ln in io.StringIO(text) if ln.strip()]
    if not lines:
        raise TomographyError("empty trace file")
    try:
        receivers = tuple(int(c) for c in lines[0].split(","))
    except ValueError:
        raise TomographyError(f"bad trace header {lines[0]!r}") from None
    rows = [ln.split(",") for ln in lines[1:]]
    for i, row in enumerate(rows, start=2):
        if len(row) != len(receivers) or any(c not in ("0", "1", "?") for c in row):
            raise TomographyError(f"trace line {i}: expected {len(receivers)} cells of 0/1/?")
    cells = np.array(rows, dtype=object).reshape(len(rows), len(receivers))
    mask = cells == "?"
    Y = np.where(mask, "0", cells).astype(np.uint8)
    return ProbeTrace(Y, receivers, mask=mask if mask.any() else None)
