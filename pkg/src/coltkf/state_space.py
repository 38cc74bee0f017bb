"""Censored linear-Gaussian model with AR(1) process and measurement noise.

    x_{t+1} = A x_t + u_t,       u_t = C u_{t-1} + w1_t,   w1 ~ N(0, Q)
    y*_t    = H x_t + v_t,       v_t = g v_{t-1} + w2_t,   w2 ~ N(0, r2)
    y_t     = clamp(y*_t, a, b)

Appending the noises to the state gives a white-noise model in
z_t = (x_t, u_t, v_t) with a noise-free measurement y*_t = H_aug z_t.
"""

from __future__ import annotations

import contextlib
import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .censored_moments import CensorBand
from .errors import ModelError
from .gaussian_core import SYMMETRY_ATOL, RngHandle, cholesky_factor


def _as_matrix(x, n=None, name="matrix") -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if n is not None and x.shape != (n, n):
        raise ModelError(f"{name} must be {n}x{n}, got {x.shape}")
    return x


def _check_psd(M: np.ndarray, name: str) -> None:
    if not np.allclose(M, M.T, rtol=0.0, atol=SYMMETRY_ATOL):
        raise ModelError(f"{name} is not symmetric")
    if M.size and np.linalg.eigvalsh(M).min() < -1e-10:
        raise ModelError(f"{name} is not positive semidefinite")


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


@dataclass(frozen=True)
class ArParams:
    """AR(1) coefficients: diagonal of C and the measurement-noise g."""

    c_diag: np.ndarray
    g: float

    def __post_init__(self):
        c = np.atleast_1d(np.asarray(self.c_diag, dtype=float))
        g = float(self.g)
        if np.any(np.abs(c) >= 1) or not abs(g) < 1:
            raise ModelError(f"AR coefficients must lie in (-1, 1), got c={c.tolist()}, g={g}")
        c.setflags(write=False)
        object.__setattr__(self, "c_diag", c)
        object.__setattr__(self, "g", g)

    def to_dict(self) -> dict:
        return {"c_diag": self.c_diag.tolist(), "g": self.g}


@dataclass(frozen=True)
class ColouredStateSpace:
    A: np.ndarray
    C: np.ndarray
    H: np.ndarray
    Q: np.ndarray
    r2: float
    g: float
    band: CensorBand = field(default_factory=CensorBand)
    x0: np.ndarray = None
    P0: np.ndarray = None

    def __post_init__(self):
        A = _as_matrix(self.A, name="A")
        n = A.shape[0]
        A = _as_matrix(A, n, "A")
        C = _as_matrix(self.C, n, "C")
        Q = _as_matrix(self.Q, n, "Q")
        H = np.asarray(self.H, dtype=float).reshape(-1)
        if H.shape != (n,):
            raise ModelError(f"H must have length {n}, got {H.shape}")
        x0 = np.zeros(n) if self.x0 is None else np.asarray(self.x0, dtype=float).reshape(-1)
        if x0.shape != (n,):
            raise ModelError(f"x0 must have length {n}")
        P0 = np.zeros((n, n)) if self.P0 is None else _as_matrix(self.P0, n, "P0")
        _check_psd(Q, "Q")
        _check_psd(P0, "P0")
        r2, g = float(self.r2), float(self.g)
        if not r2 > 0:
            raise ModelError("r2 must be positive")
        if not abs(g) < 1:
            raise ModelError(f"|g| must be < 1 for a stationary AR(1), got {g}")
        if n and np.max(np.abs(np.linalg.eigvals(C))) >= 1:
            raise ModelError("spectral radius of C must be < 1")
        band = self.band if isinstance(self.band, CensorBand) else CensorBand(*self.band)
        _freeze(A, C, H, Q, x0, P0)
        for name, val in dict(A=A, C=C, H=H, Q=Q, r2=r2, g=g, band=band, x0=x0, P0=P0).items():
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def with_ar(self, c_diag=None, g=None) -> "ColouredStateSpace":
        """Copy of the model with a diagonal C and/or a new g."""
        C = self.C if c_diag is None else np.diag(np.asarray(c_diag, dtype=float).reshape(self.n))
        return ColouredStateSpace(
            self.A, C, self.H, self.Q, self.r2, self.g if g is None else g, self.band, self.x0, self.P0
        )

    def with_params(self, params: ArParams) -> "ColouredStateSpace":
        return self.with_ar(params.c_diag, params.g)

    def stationary_u_cov(self) -> np.ndarray:
        """Solves S = C S C^T + Q; reduces to Q_ii/(1 - C_ii^2) for diagonal C."""
        return scipy.linalg.solve_discrete_lyapunov(self.C, self.Q)

    def stationary_v_var(self) -> float:
        return self.r2 / (1.0 - self.g**2)

    def to_dict(self) -> dict:
        return {
            "A": self.A.tolist(),
            "C": self.C.tolist(),
            "H": self.H.tolist(),
            "Q": self.Q.tolist(),
            "r2": self.r2,
            "g": self.g,
            "band": self.band.to_dict(),
            "x0": self.x0.tolist(),
            "P0": self.P0.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ColouredStateSpace":
        band = d.get("band") or {}
        return cls(
            A=d["A"],
            C=d["C"],
            H=d["H"],
            Q=d["Q"],
            r2=d["r2"],
            g=d["g"],
            band=CensorBand(band.get("lower"), band.get("upper")),
            x0=d.get("x0"),
            P0=d.get("P0"),
        )


@dataclass(frozen=True)
class AugmentedModel:
    A_aug: np.ndarray
    H_aug: np.ndarray
    Q_aug: np.ndarray
    band: CensorBand
    z0: np.ndarray
    P0_aug: np.ndarray

    @property
    def dim(self) -> int:
        return self.A_aug.shape[0]


def augment(model: ColouredStateSpace) -> AugmentedModel:
    """White-noise rewrite of ``model`` on z = (x, u, v).

    The noise blocks of the initial covariance are set to their stationary
    values so the filter starts consistent with a noise process of unknown
    phase.
    """
    n = model.n
    m = 2 * n + 1
    A_aug = np.zeros((m, m))
    A_aug[:n, :n] = model.A
    A_aug[:n, n : 2 * n] = np.eye(n)
    A_aug[n : 2 * n, n : 2 * n] = model.C
    A_aug[-1, -1] = model.g

    H_aug = np.concatenate([model.H, np.zeros(n), [1.0]])

    Q_aug = np.zeros((m, m))
    Q_aug[n : 2 * n, n : 2 * n] = model.Q
    Q_aug[-1, -1] = model.r2

    z0 = np.concatenate([model.x0, np.zeros(n + 1)])
    P0_aug = scipy.linalg.block_diag(model.P0, model.stationary_u_cov(), model.stationary_v_var())
    P0_aug = 0.5 * (P0_aug + P0_aug.T)
    _freeze(A_aug, H_aug, Q_aug, z0, P0_aug)
    return AugmentedModel(A_aug, H_aug, Q_aug, model.band, z0, P0_aug)


def clamp_to_band(y_star: float, band: CensorBand) -> float:
    if y_star <= band.lower:
        return band.lower
    if y_star >= band.upper:
        return band.upper
    return y_star


@dataclass(frozen=True)
class Trajectory:
    """Simulated path for t = 1..T (row ``i`` holds step ``t = i + 1``)."""

    states: np.ndarray
    latent: np.ndarray
    observed: np.ndarray
    process_noise: np.ndarray
    meas_noise: np.ndarray

    @property
    def T(self) -> int:
        return self.latent.shape[0]

    def to_csv(self, path) -> None:
        write_trajectory_csv(path, self.states, self.latent, self.observed)


@dataclass(frozen=True)
class DriverNoise:
    """White innovations behind a simulated trajectory.

    ``w1[0]``/``w2[0]`` are the stationary draws for u_0 and v_0; row
    ``t`` (t >= 1) drives the step from t-1 to t.
    """

    w1: np.ndarray
    w2: np.ndarray


def draw_driver_noise(model: ColouredStateSpace, T: int, rng: RngHandle | np.random.Generator) -> DriverNoise:
    gen = rng.generator() if isinstance(rng, RngHandle) else rng
    n = model.n
    Lq = cholesky_factor(model.Q)
    Lu = cholesky_factor(model.stationary_u_cov())
    e1 = gen.standard_normal((T + 1, n))
    e2 = gen.standard_normal(T + 1)
    w1 = np.empty((T + 1, n))
    w1[0] = Lu @ e1[0]
    w1[1:] = e1[1:] @ Lq.T
    w2 = np.empty(T + 1)
    w2[0] = np.sqrt(model.stationary_v_var()) * e2[0]
    w2[1:] = np.sqrt(model.r2) * e2[1:]
    return DriverNoise(w1, w2)


def _matvec(M: np.ndarray, v) -> list:
    """Left-to-right row sums in plain floats (no BLAS reordering, no FMA).

    Both simulators use it so the augmented rewrite reproduces the
    original recursion bit for bit: the structural zeros and ones it adds
    are exact in IEEE arithmetic.
    """
    out = []
    for row in M.tolist():
        acc = 0.0
        for a, b in zip(row, v):
            acc += a * b
        out.append(acc)
    return out


def simulate_from_noise(model: ColouredStateSpace, noise: DriverNoise) -> Trajectory:
    T = noise.w2.shape[0] - 1
    n = model.n
    g = model.g
    w1 = noise.w1.tolist()
    w2 = noise.w2.tolist()
    states = np.empty((T, n))
    proc = np.empty((T, n))
    meas = np.empty(T)
    latent = np.empty(T)
    x = model.x0.tolist()
    u = w1[0]
    v = w2[0]
    for t in range(1, T + 1):
        x = [ax + ui for ax, ui in zip(_matvec(model.A, x), u)]
        u = [cu + wi for cu, wi in zip(_matvec(model.C, u), w1[t])]
        v = g * v + w2[t]
        states[t - 1] = x
        proc[t - 1] = u
        meas[t - 1] = v
        latent[t - 1] = _matvec(model.H[None, :], x)[0] + v
    observed = np.clip(latent, model.band.lower, model.band.upper)
    _freeze(states, latent, observed, proc, meas)
    return Trajectory(states, latent, observed, proc, meas)


def simulate_augmented(aug: AugmentedModel, noise: DriverNoise) -> tuple[np.ndarray, np.ndarray]:
    """Run z_{t+1} = A_aug z_t + w_aug on the same driver noise.

    Returns the full augmented path (T, 2n+1) and the latent measurements
    H_aug z_t. ``z_0`` holds the stationary draws for u_0 and v_0.
    """
    T = noise.w2.shape[0] - 1
    n = noise.w1.shape[1]
    z = list(aug.z0[:n]) + noise.w1[0].tolist() + [float(noise.w2[0])]
    zs = np.empty((T, aug.dim))
    latent = np.empty(T)
    for t in range(1, T + 1):
        w = [0.0] * n + noise.w1[t].tolist() + [float(noise.w2[t])]
        z = [az + wi for az, wi in zip(_matvec(aug.A_aug, z), w)]
        zs[t - 1] = z
        latent[t - 1] = _matvec(aug.H_aug[None, :], z)[0]
    return zs, latent


def simulate(model: ColouredStateSpace, T: int, rng: RngHandle | np.random.Generator) -> Trajectory:
    """Simulate ``T`` steps starting from the fixed ``x0``.

    u_0 and v_0 come from their stationary distributions, so there is no
    burn-in transient in the noise processes.
    """
    if T < 1:
        raise ValueError("T must be positive")
    return simulate_from_noise(model, draw_driver_noise(model, T, rng))


@contextlib.contextmanager
def _writable(target):
    """Open a path for CSV writing, or pass an already-open stream through."""
    if hasattr(target, "write"):
        yield target
    else:
        with open(Path(target), "w", newline="") as fh:
            yield fh


def write_trajectory_csv(path, states, latent, observed) -> None:
    states = np.asarray(states)
    n = states.shape[1]
    with _writable(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", *[f"x{i + 1}" for i in range(n)], "y_star", "y"])
        for t in range(states.shape[0]):
            w.writerow([t + 1, *map(repr, map(float, states[t])), repr(float(latent[t])), repr(float(observed[t]))])


def read_trajectory_csv(path) -> dict:
    """Load a trajectory CSV; returns ``states``, ``y_star`` and ``y`` arrays."""
    with open(Path(path), newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if header[0] != "t" or "y" not in header:
        raise ValueError(f"{path}: not a trajectory CSV (header {header})")
    data = np.array([[float(v) for v in r] for r in body if r]).reshape(-1, len(header))
    xcols = [i for i, h in enumerate(header) if h.startswith("x")]
    out = {"t": data[:, 0].astype(int), "y": data[:, header.index("y")], "states": data[:, xcols]}
    if "y_star" in header:
        out["y_star"] = data[:, header.index("y_star")]
    return out
