"""Central finite-difference checks of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


@dataclass
class GradCheckReport:
    max_rel_err: float
    tol: float
    analytic: np.ndarray = field(repr=False)
    numeric: np.ndarray = field(repr=False)

    @property
    def passed(self) -> bool:
        return bool(self.max_rel_err <= self.tol)


def scaled_floor(floor: float, value: float) -> float:
    """Floor scaled by the loss magnitude.

    Central differences carry round-off of order eps * |f| / h in absolute
    terms, so a fixed floor would turn numerically exact gradients of large
    losses into false failures.
    """
    return floor * max(1.0, abs(value))


def rel_err(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor).

    The floor keeps coordinates whose true gradient is ~0 from producing
    0/0; below it the measure degrades to an absolute error scaled by 1/floor.
    """
    a, n = np.asarray(analytic), np.asarray(numeric)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def finite_diff_check(
    f: Callable[[Tensor], Tensor],
    x: Tensor,
    h: float = 1e-5,
    tol: float = 1e-4,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Compare ``d f(x) / dx`` from backward() with central differences, coordinate by coordinate."""
    x = Tensor(x.data.copy(), requires_grad=True)
    out = f(x)
    out.backward()
    floor = scaled_floor(floor, out.item())
    analytic = np.zeros_like(x.data) if x.grad is None else x.grad.copy()

    numeric = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f(Tensor(x.data.copy())).item()
        flat[i] = orig - h
        down = f(Tensor(x.data.copy())).item()
        flat[i] = orig
        num_flat[i] = (up - down) / (2 * h)
    err = rel_err(analytic, numeric, floor)
    return GradCheckReport(float(err.max()) if err.size else 0.0, tol, analytic, numeric)


def check_parameters(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    rng: np.random.Generator,
    coords_per_param: int = 2,
    directions: int = 2,
    h: float = 1e-5,
    tol: float = 1e-4,
    floor: float = 1e-6,
) -> GradCheckReport:
    """Gradient check of a closure over many leaf parameters.

    Two kinds of probes are combined: ``coords_per_param`` randomly chosen
    coordinates of every parameter, and ``directions`` random Gaussian
    directions over all parameters jointly, which cover every coordinate at
    the cost of two extra evaluations each.
    """
    for p in params:
        p.grad = None
    out = loss_fn()
    out.backward()
    floor = scaled_floor(floor, out.item())
    grads = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    for p in params:
        p.grad = None

    def evaluate() -> float:
        with no_grad():
            return loss_fn().item()

    analytic, numeric = [], []
    for p, g in zip(params, grads):
        flat = p.data.reshape(-1)
        picks = rng.choice(flat.size, size=min(coords_per_param, flat.size), replace=False)
        for i in picks:
            orig = flat[i]
            flat[i] = orig + h
            up = evaluate()
            flat[i] = orig - h
            down = evaluate()
            flat[i] = orig
            analytic.append(g.reshape(-1)[i])
            numeric.append((up - down) / (2 * h))

    for _ in range(directions):
        dirs = [rng.standard_normal(p.shape) for p in params]
        norm = np.sqrt(sum(float((d * d).sum()) for d in dirs))
        dirs = [d / norm for d in dirs]
        origs = [p.data.copy() for p in params]
        for p, o, d in zip(params, origs, dirs):
            p.data[...] = o + h * d
        up = evaluate()
        for p, o, d in zip(params, origs, dirs):
            p.data[...] = o - h * d
        down = evaluate()
        for p, o in zip(params, origs):
            p.data[...] = o
        analytic.append(sum(float((g * d).sum()) for g, d in zip(grads, dirs)))
        numeric.append((up - down) / (2 * h))

    a, n = np.array(analytic), np.array(numeric)
    err = rel_err(a, n, floor)
    return GradCheckReport(float(err.max()) if err.size else 0.0, tol, a, n)
