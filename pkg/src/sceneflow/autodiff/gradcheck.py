"""Central finite-difference gradient checks."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, backward, record_decisions, replay_decisions


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``max|a - n| / max(max|a|, max|n|)``; 0 when both sides vanish."""
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    if scale == 0.0:
        return 0.0
    return float(np.abs(analytic - numeric).max() / scale)


def numeric_grad(
    f: Callable[[], Tensor],
    leaf: Tensor,
    h: float = 1e-3,
    entries: Sequence[int] | None = None,
) -> np.ndarray:
    flat = leaf.data.reshape(-1)
    out = np.zeros_like(flat)
    positions = range(flat.size) if entries is None else entries
    for i in positions:
        orig = flat[i]
        flat[i] = orig + h
        up = float(f().data)
        flat[i] = orig - h
        down = float(f().data)
        flat[i] = orig
        out[i] = (up - down) / (2.0 * h)
    return out.reshape(leaf.shape)


def gradient_pairs(
    f: Callable[[], Tensor],
    leaves: Sequence[Tensor],
    h: float = 1e-3,
    max_entries: int | None = None,
    seed: int = 0,
) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Analytic and central-difference gradients of scalar ``f()`` per leaf.

    Discrete choices are recorded on the first evaluation and replayed for
    every perturbed evaluation, so kinks and neighbour tables stay fixed.
    With ``max_entries`` only a seeded subset of each leaf's entries is probed
    and both arrays hold just those entries.
    """
    rng = np.random.default_rng(seed)
    for leaf in leaves:
        leaf.grad = None
    with record_decisions() as log:
        loss = f()
        backward(loss)
    pairs: dict[str, tuple[np.ndarray, np.ndarray]] = {}
    for k, leaf in enumerate(leaves):
        analytic = np.zeros_like(leaf.data) if leaf.grad is None else leaf.grad
        entries = None
        if max_entries is not None and leaf.data.size > max_entries:
            entries = np.sort(rng.choice(leaf.data.size, size=max_entries, replace=False))
        numeric = numeric_grad(lambda: _replayed(f, log), leaf, h, entries)
        if entries is not None:
            analytic = analytic.reshape(-1)[entries]
            numeric = numeric.reshape(-1)[entries]
        pairs[leaf.name or f"leaf{k}"] = (np.asarray(analytic, np.float64), np.asarray(numeric, np.float64))
    return pairs


def check_gradients(
    f: Callable[[], Tensor],
    leaves: Sequence[Tensor],
    h: float = 1e-3,
    max_entries: int | None = None,
    seed: int = 0,
) -> dict[str, float]:
    """``{leaf name: relative error}`` between analytic and numeric gradients."""
    pairs = gradient_pairs(f, leaves, h, max_entries, seed)
    return {name: relative_error(a, n) for name, (a, n) in pairs.items()}


def pooled_relative_error(pairs: dict[str, tuple[np.ndarray, np.ndarray]]) -> float:
    """Relative error over all probed entries of all leaves taken together.

    Leaves whose true gradient vanishes (a bias ahead of a softmax, say) make
    the per-leaf ratio compare rounding noise with rounding noise; pooling
    measures every discrepancy against the gradient's overall scale instead.
    """
    a = np.concatenate([p[0].reshape(-1) for p in pairs.values()])
    n = np.concatenate([p[1].reshape(-1) for p in pairs.values()])
    return relative_error(a, n)


def _replayed(f: Callable[[], Tensor], log: list) -> Tensor:
    with replay_decisions(log):
        return f()

