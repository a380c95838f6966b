"""Central finite-difference gradient verification.

The numeric side never touches the differentiation tape: it re-evaluates the
forward function at perturbed inputs, so it stays an independent oracle for
the analytic gradients.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor


def numeric_gradient(loss_fn: Callable[[], Tensor], x: Tensor, h: float = 1e-5) -> np.ndarray:
    """d(loss)/dx by central differences, one coordinate at a time."""
    grad = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = loss_fn().item()
        flat[i] = orig - h
        down = loss_fn().item()
        flat[i] = orig
        gflat[i] = (up - down) / (2.0 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Worst-case |a-n| / max(1, |a|, |n|) across coordinates."""
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))


def check_gradients(
    loss_fn: Callable[[], Tensor],
    inputs: dict[str, Tensor],
    rel_tol: float = 1e-4,
    h: float = 1e-5,
) -> float:
    """Run backward once, FD per input, and assert agreement.

    Returns the worst relative error seen. ``loss_fn`` must rebuild the graph
    from ``inputs`` on every call.
    """
    for t in inputs.values():
        t.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = {k: t.grad.copy() for k, t in inputs.items()}
    worst = 0.0
    for name, t in inputs.items():
        numeric = numeric_gradient(loss_fn, t, h=h)
        err = max_relative_error(analytic[name], numeric)
        worst = max(worst, err)
        if err > rel_tol:
            raise AssertionError(
                f"gradient mismatch for {name}: worst relative error {err:.3e} > {rel_tol:.1e}"
            )
    return worst
