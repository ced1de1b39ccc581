"""Synthetic sparse functional data from zero-mean Gaussian processes on [0, 1]."""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .blockops import BlockLayout
from .smoother import FunctionalDataset

__all__ = [
    "Process",
    "ProcessSpec",
    "SimulationError",
    "covariance",
    "true_second_moment",
    "sample_dataset",
    "parse_process",
]

JITTER = 1e-12


class SimulationError(RuntimeError):
    pass


class Process(str, enum.Enum):
    BROWNIAN_MOTION = "bm"
    BROWNIAN_BRIDGE = "bb"
    INTEGRATED_BM = "ibm"
    ORNSTEIN_UHLENBECK = "ou"


@dataclass(frozen=True)
class ProcessSpec:
    """Process, noise level and design of a simulated dataset.

    ``r`` is either a common count or a per-function sequence.
    """

    process: Process
    sigma: float = 0.3
    n: int = 20
    r: int | tuple[int, ...] = 100
    seed: int = 0
    theta_ou: float = 1.0
    sigma_ou: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "process", Process(self.process))
        if self.sigma < 0:
            raise ValueError(f"noise sigma must be >= 0, got {self.sigma}")
        if self.n < 1:
            raise ValueError(f"n must be positive, got {self.n}")
        if self.process is Process.ORNSTEIN_UHLENBECK and not (self.theta_ou > 0 and self.sigma_ou > 0):
            raise ValueError("OU parameters must be positive")
        if not isinstance(self.r, int):
            object.__setattr__(self, "r", tuple(int(v) for v in self.r))
            if len(self.r) != self.n:
                raise ValueError(f"got {len(self.r)} per-function counts for n={self.n}")

    @property
    def layout(self) -> BlockLayout:
        if isinstance(self.r, int):
            return BlockLayout.uniform(self.n, self.r)
        return BlockLayout(self.r)

    def describe(self) -> str:
        if self.process is Process.ORNSTEIN_UHLENBECK:
            return f"ou:{self.theta_ou:g}:{self.sigma_ou:g}"
        return self.process.value


def covariance(spec: ProcessSpec, s, t) -> np.ndarray:
    """Covariance (= second moment) ``E[Y(s) Y(t)]``, broadcasting ``s`` against ``t``."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    lo = np.minimum(s, t)
    hi = np.maximum(s, t)
    p = spec.process
    if p is Process.BROWNIAN_MOTION:
        return lo
    if p is Process.BROWNIAN_BRIDGE:
        return lo - s * t
    if p is Process.INTEGRATED_BM:
        return hi * lo**2 / 2 - lo**3 / 6
    th, so = spec.theta_ou, spec.sigma_ou
    return so**2 * (np.exp(-th * np.abs(s - t)) - np.exp(-th * (s + t))) / (2 * th)


def true_second_moment(spec: ProcessSpec, z1, z2):
    """Closed-form second moment; scalar in, scalar out."""
    out = covariance(spec, z1, z2)
    return float(out) if np.ndim(out) == 0 else out


def _stream(seed: int, i: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, i])))


def _sample_path(spec: ProcessSpec, x: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Joint Gaussian draw at ``x``; repeated locations share one value."""
    u, inv = np.unique(x, return_inverse=True)
    C = covariance(spec, u[:, None], u[None, :])
    path = np.zeros(u.size)
    # zero-variance points (e.g. the pinned start) are exactly zero
    live = np.diag(C) > 0
    z = rng.standard_normal(u.size)
    if live.any():
        Cl = C[np.ix_(live, live)] + JITTER * np.eye(int(live.sum()))
        L = np.linalg.cholesky(Cl)
        path[live] = L @ z[live]
    return path[inv]


def sample_dataset(spec: ProcessSpec, locations=None) -> FunctionalDataset:
    """Draw ``n`` noisy sample paths.

    Locations are i.i.d. uniform on [0, 1] and sorted within each function
    unless given explicitly (one sequence per function). Function ``i``
    uses its own Philox stream keyed by ``(seed, i)``, so the draw for a
    function does not depend on ``n``.
    """
    layout = spec.layout
    locs, vals = [], []
    for i, ri in enumerate(layout.r):
        rng = _stream(spec.seed, i)
        if locations is not None:
            x = np.asarray(locations[i], dtype=float)
            if x.size != ri:
                raise ValueError(f"function {i}: got {x.size} locations, expected {ri}")
            path = _sample_path(spec, x, rng)
        else:
            for attempt in range(2):
                x = np.sort(rng.uniform(0.0, 1.0, ri))
                try:
                    path = _sample_path(spec, x, rng)
                    break
                except np.linalg.LinAlgError:
                    if attempt == 1:
                        raise SimulationError(
                            f"covariance of function {i} is not positive definite after resampling"
                        ) from None
        noise = spec.sigma * rng.standard_normal(ri) if spec.sigma > 0 else np.zeros(ri)
        locs.append(x)
        vals.append(path + noise)
    return FunctionalDataset(layout, tuple(locs), tuple(vals))


def parse_process(text: str) -> dict:
    """Parse ``bm``, ``bb``, ``ibm`` or ``ou:theta:sigma`` into ProcessSpec keywords."""
    parts = text.strip().lower().split(":")
    name = parts[0]
    if name in ("bm", "bb", "ibm") and len(parts) == 1:
        return {"process": Process(name)}
    if name == "ou" and len(parts) in (1, 3):
        if len(parts) == 1:
            return {"process": Process.ORNSTEIN_UHLENBECK}
        try:
            return {"process": Process.ORNSTEIN_UHLENBECK,
                    "theta_ou": float(parts[1]), "sigma_ou": float(parts[2])}
        except ValueError:
            pass
    raise ValueError(f"invalid process spec {text!r}; expected bm, bb, ibm or ou:theta:sigma")
