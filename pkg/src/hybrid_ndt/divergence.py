"""Bregman divergences and the label-constrained dissimilarity."""

from __future__ import annotations

import numpy as np

# exp(-c * INF) == 0.0 exactly for any c > 0, so mismatched labels drop out of
# Gibbs weights without producing NaNs.
INF = np.inf


class DivergenceError(ValueError):
    pass


class WeightedSquaredEuclidean:
    """``d(a, b) = sum_k w_k (a_k - b_k)^2``."""

    name = "weighted_squared_euclidean"

    def __init__(self, weights):
        w = np.asarray(weights, dtype=float)
        if w.ndim != 1 or np.any(w < 0) or not np.any(w > 0):
            raise DivergenceError("weights must be a nonnegative vector with a positive entry")
        self.weights = w

    def __call__(self, a, b) -> float:
        a, b = _pair(a, b)
        if a.size != self.weights.size:
            raise DivergenceError(f"expected length {self.weights.size}, got {a.size}")
        diff = a - b
        return float(np.dot(self.weights, diff * diff))

    def to_many(self, z, mus) -> np.ndarray:
        """Divergence from one point ``z`` to every row of ``mus``."""
        diff = np.asarray(mus) - np.asarray(z)
        return (diff * diff) @ self.weights

    def pairwise(self, zs, mus) -> np.ndarray:
        """Matrix ``D[n, i] = d(zs[n], mus[i])``."""
        zs, mus = np.atleast_2d(zs), np.atleast_2d(mus)
        zw = zs * self.weights
        sq_z = np.einsum("nk,nk->n", zw, zs)
        sq_m = (mus * mus) @ self.weights
        out = sq_z[:, None] + sq_m[None, :] - 2.0 * zw @ mus.T
        return np.maximum(out, 0.0)

    def to_dict(self) -> dict:
        return {"kind": self.name, "weights": self.weights.tolist()}

    def __repr__(self):
        return f"WeightedSquaredEuclidean({self.weights.tolist()})"


class KullbackLeibler:
    """Generalized KL, the Bregman divergence of negative entropy.

    On the probability simplex it reduces to ``sum a log(a / b)``.
    """

    name = "kullback_leibler"

    def __call__(self, a, b) -> float:
        a, b = _pair(a, b)
        _check_positive(a, b)
        return float(max(np.sum(a * np.log(a / b) - a + b), 0.0))

    def to_many(self, z, mus) -> np.ndarray:
        z, mus = np.asarray(z, float), np.asarray(mus, float)
        _check_positive(z, mus)
        return np.maximum(np.sum(z * np.log(z / mus) - z + mus, axis=-1), 0.0)

    def pairwise(self, zs, mus) -> np.ndarray:
        zs, mus = np.atleast_2d(zs), np.atleast_2d(mus)
        return np.stack([self.to_many(z, mus) for z in zs])

    def to_dict(self) -> dict:
        return {"kind": self.name}

    def __repr__(self):
        return "KullbackLeibler()"


def _pair(a, b):
    a, b = np.asarray(a, dtype=float).ravel(), np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise DivergenceError(f"length mismatch: {a.size} vs {b.size}")
    return a, b


def _check_positive(*arrs):
    for arr in arrs:
        if np.any(arr <= 0) or not np.all(np.isfinite(arr)):
            raise DivergenceError("KL divergence needs strictly positive finite inputs")


def bregman(kind, a, b) -> float:
    return kind(a, b)


def class_constrained(kind, a, ca, b, cb) -> float:
    """Divergence when the labels agree, ``INF`` otherwise."""
    value = kind(a, b)  # validates inputs even when labels differ
    return value if ca == cb else INF


def from_config(spec: dict, dim: int):
    """Build a divergence from a ``{"kind": ..., "weights": [...]}`` mapping."""
    kind = spec.get("kind", WeightedSquaredEuclidean.name)
    if kind in (WeightedSquaredEuclidean.name, "euclidean", "squared_euclidean"):
        w = spec.get("weights")
        w = np.ones(dim) if w is None else np.asarray(w, dtype=float)
        if w.size == 1:
            w = np.full(dim, float(w.ravel()[0]))
        return WeightedSquaredEuclidean(w)
    if kind in (KullbackLeibler.name, "kl"):
        return KullbackLeibler()
    raise DivergenceError(f"unknown divergence kind {kind!r}")
