"""Independent numerical oracles used by the test suite.

Everything here is deliberately brute force and free of any dependency on
the implementation under test: central finite differences, direct
discounted sums, exhaustive argmax enumeration.
"""

from __future__ import annotations

import numpy as np


def finite_diff_grad(f, arrays: list[np.ndarray], h: float = 1e-5) -> list[np.ndarray]:
    """Central-difference gradient of a scalar function of numpy arrays."""
    grads = []
    for a in arrays:
        g = np.zeros_like(a)
        flat = a.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = f()
            flat[i] = orig - h
            down = f()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def max_rel_err(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Worst-case relative error with a unit floor on the denominator."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(1.0, np.maximum(np.abs(analytic), np.abs(numeric)))
    return float(np.max(np.abs(analytic - numeric) / denom))


def brute_force_gae(rewards, values, next_values, dones, gamma, lam):
    """Advantages as explicit discounted sums of TD errors."""
    n = len(rewards)
    deltas = [
        rewards[t] + gamma * next_values[t] * (1.0 - dones[t]) - values[t]
        for t in range(n)
    ]
    adv = np.zeros(n)
    for t in range(n):
        acc = 0.0
        factor = 1.0
        for l in range(t, n):
            acc += factor * deltas[l]
            if dones[l]:
                break
            factor *= gamma * lam
        adv[t] = acc
    return adv


def brute_force_pressure_argmax(phases: list[list[int]], q_in, q_out) -> int:
    """Exhaustive max-pressure phase choice, lowest index on ties."""
    best_idx = 0
    best = None
    for idx, movements in enumerate(phases):
        pressure = sum(q_in[m] - q_out[m] for m in movements)
        if best is None or pressure > best:
            best = pressure
            best_idx = idx
    return best_idx


def shannon_entropy(p) -> float:
    p = np.asarray(p, dtype=np.float64)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())
