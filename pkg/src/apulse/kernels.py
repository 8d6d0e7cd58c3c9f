"""Stationary isotropic covariance kernels (RBF, Matern 5/2, IMQ)."""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

import numpy as np
from scipy.spatial.distance import cdist

__all__ = ["Family", "KernelSpec", "kernel_eval", "kernel_matrix", "kernel_from_distances"]

_SQRT5 = np.sqrt(5.0)


class Family(str, enum.Enum):
    RBF = "rbf"
    MATERN52 = "matern52"
    IMQ = "imq"

    @classmethod
    def parse(cls, value: "str | Family") -> "Family":
        if isinstance(value, Family):
            return value
        key = str(value).strip().lower().replace("-", "").replace("_", "")
        aliases = {"rbf": cls.RBF, "se": cls.RBF, "matern52": cls.MATERN52,
                   "matern": cls.MATERN52, "imq": cls.IMQ}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown kernel family {value!r}") from None


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family plus hyperparameters.

    ``variance`` is the output scale k(x, x); ``noise_variance`` is the
    observation noise sigma^2 added on the training diagonal.
    """

    family: Family = Family.MATERN52
    variance: float = 1.0
    lengthscale: float = 1.0
    noise_variance: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        if not (np.isfinite(self.variance) and self.variance > 0):
            raise ValueError(f"variance must be positive, got {self.variance}")
        if not (np.isfinite(self.lengthscale) and self.lengthscale > 0):
            raise ValueError(f"lengthscale must be positive, got {self.lengthscale}")
        if not (np.isfinite(self.noise_variance) and self.noise_variance >= 0):
            raise ValueError(f"noise_variance must be non-negative, got {self.noise_variance}")

    def with_params(self, **kw) -> "KernelSpec":
        return replace(self, **kw)

    @property
    def jitter(self) -> float:
        """Diagonal jitter applied on top of the noise for near-noiseless specs."""
        return 1e-8 * self.variance if self.noise_variance < 1e-8 else 0.0


def kernel_from_distances(spec: KernelSpec, r: np.ndarray) -> np.ndarray:
    """Apply the family profile to Euclidean distances ``r``."""
    s = np.asarray(r, dtype=float) / spec.lengthscale
    if spec.family is Family.RBF:
        g = np.exp(-0.5 * s * s)
    elif spec.family is Family.MATERN52:
        g = (1.0 + _SQRT5 * s + (5.0 / 3.0) * s * s) * np.exp(-_SQRT5 * s)
    else:
        g = 1.0 / np.sqrt(1.0 + s * s)
    return spec.variance * g


def _as_points(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise ValueError(f"{name} must be a point or an (n, d) array")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite coordinates")
    return arr


def kernel_eval(spec: KernelSpec, x, z) -> float:
    """Covariance between two single points."""
    x = np.asarray(x, dtype=float).ravel()
    z = np.asarray(z, dtype=float).ravel()
    if x.shape != z.shape or x.size == 0:
        raise ValueError(f"dimension mismatch: {x.shape} vs {z.shape}")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(z))):
        raise ValueError("non-finite input coordinates")
    r = float(np.sqrt(np.sum((x - z) ** 2)))
    return float(kernel_from_distances(spec, r))


def kernel_matrix(spec: KernelSpec, A, B=None) -> np.ndarray:
    """Covariance matrix between point sets ``A`` (n, d) and ``B`` (m, d).

    With ``B`` omitted the result is K(A, A), exactly symmetric.
    """
    A = _as_points(A, "A")
    if B is None:
        r = cdist(A, A)
        # cdist is elementwise symmetric already; enforce it anyway for safety
        r = np.triu(r) + np.triu(r, 1).T
        return kernel_from_distances(spec, r)
    B = _as_points(B, "B")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    return kernel_from_distances(spec, cdist(A, B))
