"""Exact Gaussian-process regression of transition deltas.

One independent GP per state coordinate is fitted to ``s' - s`` as a
function of the concatenated input ``s (+) a``.  Hyperparameters are fixed;
coordinates sharing a kernel share one Cholesky factor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.spatial.distance import cdist

KERNEL_KINDS = ("se", "matern52")

# Gram-diagonal jitter, as a fraction of the signal variance.
JITTER_START = 1e-9
JITTER_MAX = 1e-5


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    lengthscales: tuple[float, ...]
    signal_variance: float

    def __post_init__(self):
        if self.kind not in KERNEL_KINDS:
            raise ValueError(f"unknown kernel kind {self.kind!r}; expected one of {KERNEL_KINDS}")
        ls = tuple(float(v) for v in np.atleast_1d(self.lengthscales))
        if any(not v > 0 for v in ls) or not self.signal_variance > 0:
            raise ValueError("kernel parameters must be strictly positive")
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "signal_variance", float(self.signal_variance))

    @classmethod
    def isotropic(cls, kind: str, dim: int, lengthscale: float = 0.5, signal_variance: float = 0.05):
        return cls(kind, (lengthscale,) * dim, signal_variance)

    @property
    def dim(self) -> int:
        return len(self.lengthscales)

    def __call__(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        ls = np.asarray(self.lengthscales)
        r2 = cdist(np.atleast_2d(a) / ls, np.atleast_2d(b) / ls, "sqeuclidean")
        if self.kind == "se":
            return self.signal_variance * np.exp(-0.5 * r2)
        r = np.sqrt(5.0 * r2)
        return self.signal_variance * (1.0 + r + r * r / 3.0) * np.exp(-r)


@dataclass(frozen=True)
class TransitionDataset:
    """Append-only table of model inputs ``s (+) a`` and targets ``s' - s``."""

    inputs: np.ndarray
    targets: np.ndarray

    def __post_init__(self):
        x = np.array(self.inputs, dtype=float, ndmin=2)
        y = np.array(self.targets, dtype=float, ndmin=2)
        if x.shape[0] != y.shape[0]:
            raise ValueError("inputs and targets must have the same number of rows")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("transition data must be finite")
        x.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "targets", y)

    @classmethod
    def empty(cls, input_dim: int, output_dim: int) -> "TransitionDataset":
        return cls(np.zeros((0, input_dim)), np.zeros((0, output_dim)))

    @classmethod
    def from_transitions(cls, s, a, s_next) -> "TransitionDataset":
        s = np.atleast_2d(np.asarray(s, dtype=float))
        return cls(np.concatenate([s, np.atleast_2d(a)], axis=1), np.atleast_2d(s_next) - s)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    @property
    def output_dim(self) -> int:
        return self.targets.shape[1]

    def append(self, inputs, targets) -> "TransitionDataset":
        inputs = np.array(inputs, dtype=float).reshape(-1, self.input_dim)
        targets = np.array(targets, dtype=float).reshape(-1, self.output_dim)
        return TransitionDataset(np.vstack([self.inputs, inputs]), np.vstack([self.targets, targets]))


def _factor(gram: np.ndarray, noise_var: float, signal_variance: float) -> np.ndarray:
    n = gram.shape[0]
    base = gram + noise_var * np.eye(n)
    # exact factor first; jitter (relative to the signal variance) only on failure
    jitter = 0.0
    while True:
        try:
            chol = cholesky(base + jitter * signal_variance * np.eye(n), lower=True, check_finite=False)
            if np.all(np.diag(chol) > 0):
                return chol
        except LinAlgError:
            pass
        jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
        if jitter > JITTER_MAX * (1 + 1e-9):
            raise LinAlgError("ill-conditioned Gram matrix")


@dataclass(frozen=True)
class GPPosterior:
    data: TransitionDataset
    kernels: tuple[KernelSpec, ...]
    noise_var: float
    # groups[g] = (kernel, coordinate indices, lower Cholesky factor of K + s2 I)
    groups: tuple
    alpha: np.ndarray  # (n, p)

    @property
    def n_points(self) -> int:
        return len(self.data)

    @property
    def input_dim(self) -> int:
        return self.data.input_dim

    @property
    def output_dim(self) -> int:
        return self.data.output_dim

    def predict_delta(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and standard deviation of the delta at inputs ``x``.

        ``x`` has shape ``(..., d)``; both outputs have shape ``(..., p)``.
        """
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.input_dim:
            raise ValueError(f"inputs must have length {self.input_dim}, got {x.shape[-1]}")
        batch = x.shape[:-1]
        xf = x.reshape(-1, self.input_dim)
        m = xf.shape[0]
        mean = np.zeros((m, self.output_dim))
        var = np.empty((m, self.output_dim))
        for kernel, coords, chol in self.groups:
            if self.n_points == 0:
                var[:, coords] = kernel.signal_variance
                continue
            k_star = kernel(xf, self.data.inputs)
            mean[:, coords] = k_star @ self.alpha[:, coords]
            v = solve_triangular(chol, k_star.T, lower=True, check_finite=False)
            reduction = np.einsum("ij,ij->j", v, v)
            var[:, coords] = (kernel.signal_variance - reduction)[:, None]
        if np.any(var < -1e-12):
            raise FloatingPointError(f"negative predictive variance {var.min():.3e}")
        std = np.sqrt(np.maximum(var, 0.0))
        return mean.reshape(*batch, self.output_dim), std.reshape(*batch, self.output_dim)


def _as_kernels(kernels, output_dim: int) -> tuple[KernelSpec, ...]:
    if isinstance(kernels, KernelSpec):
        return (kernels,) * output_dim
    kernels = tuple(kernels)
    if len(kernels) != output_dim:
        raise ValueError(f"need one kernel per output coordinate ({output_dim})")
    return kernels


def gp_fit(data: TransitionDataset, kernels, noise_var: float = 1e-4) -> GPPosterior:
    """Exact posterior of independent per-coordinate GPs."""
    if not noise_var > 0:
        raise ValueError("observation noise variance must be positive")
    kernels = _as_kernels(kernels, data.output_dim)
    for k in kernels:
        if k.dim != data.input_dim:
            raise ValueError(f"kernel has {k.dim} lengthscales, data has {data.input_dim} inputs")
    n = len(data)
    alpha = np.zeros((n, data.output_dim))
    groups = []
    for kernel in dict.fromkeys(kernels):
        coords = [c for c, k in enumerate(kernels) if k == kernel]
        if n == 0:
            chol = np.zeros((0, 0))
        else:
            chol = _factor(kernel(data.inputs, data.inputs), noise_var, kernel.signal_variance)
            alpha[:, coords] = cho_solve((chol, True), data.targets[:, coords], check_finite=False)
        groups.append((kernel, coords, chol))
    alpha.setflags(write=False)
    return GPPosterior(data, kernels, float(noise_var), tuple(groups), alpha)


def gp_predict(post: GPPosterior, s, a) -> tuple[np.ndarray, np.ndarray]:
    """Predicted next state ``s + mean delta`` and per-coordinate delta std."""
    s = np.asarray(s, dtype=float)
    a = np.asarray(a, dtype=float)
    if s.shape[-1] != post.output_dim or s.shape[-1] + a.shape[-1] != post.input_dim:
        raise ValueError("state/action dimensions do not match the posterior")
    mean, std = post.predict_delta(np.concatenate([s, a], axis=-1))
    return s + mean, std


def gp_update(post: GPPosterior, inputs, targets) -> GPPosterior:
    """Condition on new rows by refitting on the concatenated dataset."""
    inputs = np.asarray(inputs, dtype=float).reshape(-1, post.input_dim)
    if inputs.shape[0] == 0:
        return post
    return gp_fit(post.data.append(inputs, targets), post.kernels, post.noise_var)


@dataclass(frozen=True)
class BetaSchedule:
    """Confidence scale: ``constant`` or ``log`` (``c * sqrt(1 + ln(1 + n))``).

    ``delta`` documents the confidence level the scale is meant to deliver;
    it never changes the computed value.
    """

    kind: str = "constant"
    value: float = 1.0
    delta: float = 0.05

    def __post_init__(self):
        if self.kind not in ("constant", "log"):
            raise ValueError(f"unknown beta schedule {self.kind!r}")
        if self.value < 0:
            raise ValueError("beta must be non-negative")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")


def beta_value(sched: BetaSchedule, n_points: int) -> float:
    if n_points < 0:
        raise ValueError("n_points must be non-negative")
    if sched.kind == "constant":
        return float(sched.value)
    return float(sched.value * math.sqrt(1.0 + math.log1p(n_points)))
