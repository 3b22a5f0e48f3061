"""Stationary Poisson hyperplane processes restricted to centred balls.

Hyperplanes are drawn shell by shell: the offset range ``|s| in [k w, (k+1) w)``
is shell ``k`` and owns its own random stream keyed by ``(seed, k)``. A
realization at radius ``R`` is the set of drawn hyperplanes with ``|s| <= R``,
so it does not depend on how the radius was reached.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass

import numpy as np

from .geometry import Ball, ConvexBody, Hyperplane, canonicalize


class InvalidModel(ValueError):
    pass


class ShrinkNotAllowed(ValueError):
    pass


class WindowTooSmall(ValueError):
    pass


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for the counter ``key`` under ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.PCG64(ss))


def derive_seed(seed: int, *key: int) -> int:
    """64-bit child seed for the counter ``key`` under ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass(frozen=True, eq=False)
class DirectionalModel:
    """Intensity ``gamma`` and directional distribution of the process.

    ``atoms is None`` means the isotropic distribution on the sphere.
    Atoms are stored canonically (one representative per ``±u`` pair); the
    sampler restores evenness through the sign of the offset.
    """

    d: int
    gamma: float
    atoms: np.ndarray | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        if self.d < 1:
            raise InvalidModel("dimension must be positive")
        if not self.gamma > 0:
            raise InvalidModel("gamma must be positive")
        if self.atoms is None:
            return
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim != 2 or atoms.shape[1] != self.d:
            raise InvalidModel(f"atoms must have shape (k, {self.d})")
        norms = np.linalg.norm(atoms, axis=1)
        if np.any(norms == 0):
            raise InvalidModel("zero direction atom")
        atoms, _ = canonicalize(atoms / norms[:, None], np.zeros(len(atoms)))
        weights = (
            np.full(len(atoms), 1.0 / len(atoms))
            if self.weights is None
            else np.asarray(self.weights, dtype=float)
        )
        if weights.shape != (len(atoms),) or np.any(weights <= 0):
            raise InvalidModel("atom weights must be positive, one per atom")
        if abs(weights.sum() - 1.0) > 1e-9:
            raise InvalidModel(f"atom weights must sum to 1, got {weights.sum()!r}")
        # merge atoms that became equal after canonicalization
        merged_u, merged_w = [], []
        for u, w in zip(atoms, weights):
            for i, v in enumerate(merged_u):
                if np.max(np.abs(u - v)) < 1e-12:
                    merged_w[i] += w
                    break
            else:
                merged_u.append(u)
                merged_w.append(w)
        atoms = np.array(merged_u)
        if np.linalg.matrix_rank(atoms, tol=1e-9) < self.d:
            raise InvalidModel("directional distribution is concentrated on a great subsphere")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", np.array(merged_w))

    @classmethod
    def isotropic(cls, d: int, gamma: float = 1.0) -> DirectionalModel:
        return cls(d, gamma)

    @classmethod
    def from_atoms(cls, atoms, weights=None, gamma: float = 1.0) -> DirectionalModel:
        atoms = np.asarray(atoms, dtype=float)
        return cls(atoms.shape[1], gamma, atoms, weights)

    @property
    def is_isotropic(self) -> bool:
        return self.atoms is None

    def sample_directions(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.atoms is None:
            g = rng.standard_normal((n, self.d))
            return g / np.linalg.norm(g, axis=1, keepdims=True)
        idx = rng.choice(len(self.atoms), size=n, p=self.weights)
        return self.atoms[idx]

    def with_gamma(self, gamma: float) -> DirectionalModel:
        return DirectionalModel(self.d, gamma, self.atoms, self.weights)

    def to_dict(self) -> dict:
        out = {"d": self.d, "gamma": self.gamma}
        if self.atoms is None:
            out["Q"] = "isotropic"
        else:
            out["Q"] = {"atoms": self.atoms.tolist(), "weights": self.weights.tolist()}
        return out

    @classmethod
    def from_dict(cls, spec: dict) -> DirectionalModel:
        q = spec["Q"]
        if q == "isotropic":
            return cls.isotropic(spec["d"], spec["gamma"])
        return cls(spec["d"], spec["gamma"], np.asarray(q["atoms"]), np.asarray(q["weights"]))


class WorldOracle:
    """Lazily extended realization of the hyperplane process.

    The visible hyperplanes are those with ``|s| <= current_radius``, kept
    sorted by ``|s|`` so extension only ever appends.
    """

    def __init__(self, model: DirectionalModel, seed: int, shell_width: float = 1.0):
        if not shell_width > 0:
            raise ValueError("shell width must be positive")
        self.model = model
        self.seed = int(seed)
        self.shell_width = float(shell_width)
        self.current_radius = 0.0
        d = model.d
        self._pool_U = np.zeros((0, d))
        self._pool_S = np.zeros(0)
        self._pool_shell = np.zeros(0, dtype=int)
        self._shells = 0
        self._n = 0

    def _draw_shell(self, k: int):
        rng = stream(self.seed, k)
        w = self.shell_width
        n = rng.poisson(2.0 * self.model.gamma * w)
        mag = rng.uniform(k * w, (k + 1) * w, size=n)
        sign = rng.choice((-1.0, 1.0), size=n)
        U = self.model.sample_directions(rng, n)
        U, S = canonicalize(U.reshape(n, self.model.d), sign * mag)
        order = np.argsort(np.abs(S), kind="stable")
        return U[order], S[order]

    def extend_to(self, radius: float) -> WorldOracle:
        """Grow the realization to ``|s| <= radius``; earlier hyperplanes are kept."""
        if radius < self.current_radius:
            raise ShrinkNotAllowed(f"cannot shrink from {self.current_radius} to {radius}")
        need = int(math.floor(radius / self.shell_width)) + 1
        if need > self._shells:
            Us, Ss, ks = [self._pool_U], [self._pool_S], [self._pool_shell]
            for k in range(self._shells, need):
                U, S = self._draw_shell(k)
                Us.append(U)
                Ss.append(S)
                ks.append(np.full(len(S), k))
            self._pool_U = np.vstack(Us)
            self._pool_S = np.concatenate(Ss)
            self._pool_shell = np.concatenate(ks)
            self._shells = need
        self.current_radius = float(radius)
        self._n = int(np.searchsorted(np.abs(self._pool_S), radius, side="right"))
        return self

    @property
    def U(self) -> np.ndarray:
        return self._pool_U[: self._n]

    @property
    def S(self) -> np.ndarray:
        return self._pool_S[: self._n]

    @property
    def shells(self) -> np.ndarray:
        return self._pool_shell[: self._n]

    def __len__(self):
        return self._n

    @property
    def hyperplanes(self) -> list[Hyperplane]:
        return [Hyperplane(u, s) for u, s in zip(self.U, self.S)]

    def hitting_mask(self, K: ConvexBody) -> np.ndarray:
        if K.outradius() > self.current_radius:
            raise WindowTooSmall(
                f"body outradius {K.outradius():.6g} exceeds sampled radius {self.current_radius:.6g}"
            )
        return K.hit_mask(self.U, self.S)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        d = self.model.d
        w.writerow([f"u_{i + 1}" for i in range(d)] + ["s"])
        for u, s in zip(self.U, self.S):
            w.writerow([repr(float(v)) for v in u] + [repr(float(s))])
        return buf.getvalue()

    def metadata(self) -> dict:
        meta = self.model.to_dict()
        meta.update(seed=self.seed, radius=self.current_radius, shell_width=self.shell_width)
        return meta

    def metadata_json(self) -> str:
        return json.dumps(self.metadata(), indent=2, sort_keys=True) + "\n"


def sample_hitting(model: DirectionalModel, R: float, seed: int, shell_width: float = 1.0) -> WorldOracle:
    """Sample the hyperplanes hitting the centred ball of radius ``R``."""
    if not R > 0:
        raise ValueError("radius must be positive")
    return WorldOracle(model, seed, shell_width).extend_to(R)


def extend_to(oracle: WorldOracle, R_new: float) -> WorldOracle:
    return oracle.extend_to(R_new)


def hitting_subset(oracle: WorldOracle, K: ConvexBody) -> list[Hyperplane]:
    """Stored hyperplanes that intersect ``K``."""
    mask = oracle.hitting_mask(K)
    return [Hyperplane(u, s) for u, s in zip(oracle.U[mask], oracle.S[mask])]


def read_hyperplanes_csv(text: str) -> list[Hyperplane]:
    rows = list(csv.reader(io.StringIO(text)))
    return [Hyperplane(np.array(r[:-1], dtype=float), float(r[-1])) for r in rows[1:]]


def ball_window(d: int, R: float) -> Ball:
    return Ball.centered(d, R)
