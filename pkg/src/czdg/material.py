"""Isotropic linear elasticity (plane strain) and the Nitsche penalty scale."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np


def lame_from_E_nu(E: float, nu: float) -> tuple[float, float]:
    """Return ``(lam, mu)`` from Young's modulus and Poisson's ratio."""
    if not E > 0:
        raise ValueError(f"Young's modulus must be positive, got {E}")
    if nu >= 0.5:
        raise ValueError("nu = 0.5 is incompressible; the displacement formulation needs nu < 0.5")
    if nu < 0:
        raise ValueError(f"nu must be in [0, 0.5), got {nu}")
    mu = E / (2.0 * (1.0 + nu))
    lam = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu))
    return lam, mu


@dataclass(frozen=True)
class IsotropicElastic:
    E: float
    nu: float

    def __post_init__(self):
        lame_from_E_nu(self.E, self.nu)

    @property
    def lam(self) -> float:
        return lame_from_E_nu(self.E, self.nu)[0]

    @property
    def mu(self) -> float:
        return lame_from_E_nu(self.E, self.nu)[1]

    def voigt(self) -> np.ndarray:
        """3x3 plane-strain matrix acting on (e_xx, e_yy, 2 e_xy)."""
        lam, mu = lame_from_E_nu(self.E, self.nu)
        return np.array([[lam + 2 * mu, lam, 0.0],
                         [lam, lam + 2 * mu, 0.0],
                         [0.0, 0.0, mu]])

    def penalty_scale(self) -> float:
        """``2 mu + 3 lam``, which equals ``E / (1 - 2 nu)``."""
        lam, mu = lame_from_E_nu(self.E, self.nu)
        return 2.0 * mu + 3.0 * lam


def stress(strain, material: IsotropicElastic) -> np.ndarray:
    """Cauchy stress ``lam tr(eps) I + 2 mu eps`` for a (..., 2, 2) strain."""
    eps = np.asarray(strain, dtype=float)
    lam, mu = lame_from_E_nu(material.E, material.nu)
    tr = np.trace(eps, axis1=-2, axis2=-1)
    return lam * tr[..., None, None] * np.eye(2) + 2.0 * mu * eps


def penalty_gamma(material: IsotropicElastic, gamma0: float) -> float:
    if not gamma0 > 0:
        raise ValueError(f"gamma0 must be positive, got {gamma0}")
    return material.penalty_scale() * gamma0


class MaterialField(dict):
    """Region tag -> :class:`IsotropicElastic`."""

    def check_covers(self, region_tags) -> None:
        missing = set(region_tags) - set(self)
        if missing:
            raise KeyError(f"no material for region tag(s) {sorted(missing)}")

    def arrays(self, region: np.ndarray):
        """Per-element Voigt matrices (nt, 3, 3) and penalty scales (nt,)."""
        self.check_covers(np.unique(region).tolist())
        tags = sorted(self)
        D = np.stack([self[t].voigt() for t in tags])
        s = np.array([self[t].penalty_scale() for t in tags])
        idx = np.searchsorted(tags, region)
        return D[idx], s[idx]


def face_gamma(scale: np.ndarray, plus: np.ndarray, minus: np.ndarray, gamma0: float) -> np.ndarray:
    """Penalty per face: the stiffer neighbour governs on material interfaces."""
    if not gamma0 > 0:
        raise ValueError(f"gamma0 must be positive, got {gamma0}")
    s = scale[plus].copy()
    inner = minus >= 0
    s[inner] = np.maximum(s[inner], scale[minus[inner]])
    return gamma0 * s


def as_material_field(m: Mapping[int, IsotropicElastic] | IsotropicElastic) -> MaterialField:
    if isinstance(m, IsotropicElastic):
        return _Uniform(m)
    return MaterialField(m)


class _Uniform(MaterialField):
    def __init__(self, mat):
        super().__init__({0: mat})
        self._mat = mat

    def check_covers(self, region_tags) -> None:
        pass

    def arrays(self, region):
        n = len(region)
        return (np.broadcast_to(self._mat.voigt(), (n, 3, 3)).copy(),
                np.full(n, self._mat.penalty_scale()))
