"""Mixed-mode cohesive law derived from a weighted energy release rate surface.

Separations are measured in the face frame: ``u_n`` is the opening along the
face normal and ``u_t`` the sliding along the tangent. The pure-mode laws are
initially rigid with linear softening (sawtooth). The mixed-mode surface is

    Gamma(lam, phi) = f(phi) G_I(lam u_nc) + (1 - f(phi)) G_II(lam u_tc)

with ``f = sin^2``, effective separation
``lam = sqrt((u_n/u_nc)^2 + (u_t/u_tc)^2)`` and mode mix
``phi = atan2(u_nc u_n, u_tc |u_t|)`` (``phi = pi/2`` is pure opening).

All functions are vectorised over numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

RIGID_LAMBDA = 1e-12


@dataclass(frozen=True)
class PureModeLaw:
    """Sawtooth law: ``t(d) = sigma_max (1 - d/u_c)`` on ``[0, u_c]``, zero beyond."""

    sigma_max: float
    u_c: float
    shape: str = "triangular"

    def __post_init__(self):
        if not (self.sigma_max > 0 and self.u_c > 0):
            raise ValueError("sigma_max and u_c must be positive")
        if self.shape != "triangular":
            raise ValueError(f"unsupported law shape {self.shape!r}")

    @property
    def fracture_energy(self) -> float:
        return 0.5 * self.sigma_max * self.u_c

    def traction(self, d):
        d = np.asarray(d, dtype=float)
        return self.sigma_max * np.clip(1.0 - d / self.u_c, 0.0, None)

    def energy(self, d):
        """``G(d) = int_0^d t``, capped at the fracture energy."""
        d = np.minimum(np.asarray(d, dtype=float), self.u_c)
        return self.sigma_max * (d - d * d / (2.0 * self.u_c))


@dataclass(frozen=True)
class CohesiveParams:
    normal: PureModeLaw
    tangential: PureModeLaw
    weight: str = "sin2"
    secant_variant: str = "diagonal"

    def __post_init__(self):
        if self.weight != "sin2":
            raise ValueError(f"unsupported weight function {self.weight!r}")
        if self.secant_variant not in ("diagonal", "cross_terms"):
            raise ValueError(f"unknown secant variant {self.secant_variant!r}")

    @classmethod
    def symmetric(cls, sigma_max: float, u_c: float, **kw) -> "CohesiveParams":
        law = PureModeLaw(sigma_max, u_c)
        return cls(law, law, **kw)

    @property
    def u_nc(self) -> float:
        return self.normal.u_c

    @property
    def u_tc(self) -> float:
        return self.tangential.u_c


def weight(phi):
    return np.sin(phi) ** 2


def weight_derivative(phi):
    return np.sin(2.0 * np.asarray(phi))


def mode_mix(u_n, u_t, params: CohesiveParams):
    """Mode-mix angle in ``[0, pi/2]``; NaN where both separations vanish."""
    u_n = np.asarray(u_n, dtype=float)
    u_t = np.asarray(u_t, dtype=float)
    a = params.u_nc * np.maximum(u_n, 0.0)
    b = params.u_tc * np.abs(u_t)
    with np.errstate(invalid="ignore"):
        phi = np.arctan2(a, b)
    return np.where((u_n == 0) & (u_t == 0), np.nan, phi)


def effective_separation(u_n, u_t, params: CohesiveParams):
    return np.hypot(np.asarray(u_n, dtype=float) / params.u_nc,
                    np.asarray(u_t, dtype=float) / params.u_tc)


def separation_from_polar(lam, phi, params: CohesiveParams):
    """Inverse of (effective_separation, mode_mix) for ``u_t >= 0``."""
    lam = np.asarray(lam, dtype=float)
    phi = np.asarray(phi, dtype=float)
    # tan(phi) = u_nc u_n / (u_tc u_t)  =>  (u_n/u_nc, u_t/u_tc) ~ (u_tc^2 sin, u_nc^2 cos)
    x = params.u_tc ** 2 * np.sin(phi)
    y = params.u_nc ** 2 * np.cos(phi)
    r = np.hypot(x, y)
    return lam * params.u_nc * x / r, lam * params.u_tc * y / r


def gamma_surface(lam, phi, params: CohesiveParams):
    """Weighted energy release rate (N/mm) at effective separation ``lam``."""
    f = weight(phi)
    return (f * params.normal.energy(np.multiply(lam, params.u_nc))
            + (1.0 - f) * params.tangential.energy(np.multiply(lam, params.u_tc)))


def _gamma_of_separation(u_n, u_t, params):
    return gamma_surface(effective_separation(u_n, u_t, params), mode_mix(u_n, u_t, params), params)


def _loading_tractions(u_n, u_t, params):
    """Chain-rule derivative of the surface; requires ``lam > 0`` and ``u_n >= 0``."""
    unc, utc = params.u_nc, params.u_tc
    lam = effective_separation(u_n, u_t, params)
    phi = mode_mix(u_n, u_t, params)
    f = weight(phi)
    dG_dlam = (f * unc * params.normal.traction(lam * unc)
               + (1.0 - f) * utc * params.tangential.traction(lam * utc))
    dG_dphi = weight_derivative(phi) * (params.normal.energy(lam * unc)
                                        - params.tangential.energy(lam * utc))
    a = unc * u_n
    b = utc * np.abs(u_t)
    q = a * a + b * b
    dlam_dn = u_n / (unc * unc * lam)
    dlam_dt = u_t / (utc * utc * lam)
    dphi_dn = unc * b / q
    dphi_dt = -a * utc * np.sign(u_t) / q
    return dG_dlam * dlam_dn + dG_dphi * dphi_dn, dG_dlam * dlam_dt + dG_dphi * dphi_dt


def tractions(u_n, u_t, lam_max=0.0, failed=False, *, params: CohesiveParams):
    """Cohesive tractions ``(t_n, t_t)``.

    Loading (``lam >= lam_max``) differentiates the energy surface. Unloading
    follows the secant to the origin at frozen mode mix. Opening faces at or
    beyond ``lam = 1`` carry nothing. Under compression (``u_n < 0``) the
    normal direction is rigid contact, so the law only supplies the tangential
    traction, evaluated as pure mode II. Zero separation returns zero traction;
    the face is then rigid and the Nitsche terms carry it.
    """
    u_n, u_t, lam_max, failed = np.broadcast_arrays(
        np.asarray(u_n, float), np.asarray(u_t, float),
        np.asarray(lam_max, float), np.asarray(failed, bool))
    compress = u_n < 0
    un = np.where(compress, 0.0, u_n)
    lam = effective_separation(un, u_t, params)
    lam_eff = np.maximum(lam, lam_max)
    live = (lam > RIGID_LAMBDA) & ~failed & (lam_eff < 1.0)
    scale = np.where(live, lam_eff / np.where(live, lam, 1.0), 1.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        tn, tt = _loading_tractions(np.where(live, un * scale, 1.0),
                                    np.where(live, u_t * scale, 0.0), params)
    tn = np.where(live, tn / scale, 0.0)
    tt = np.where(live, tt / scale, 0.0)
    if tn.ndim == 0:
        return float(tn), float(tt)
    return tn, tt


def _secant_diagonal(u_n, u_t, params):
    """Closed-form ``t_n/u_n`` and ``t_t/u_t`` for ``u_n >= 0`` and ``lam`` in (0, 1).

    Finite in the pure-mode limits, where the ratios are continuous
    extensions of the 0/0 quotients.
    """
    unc, utc = params.u_nc, params.u_tc
    lam = effective_separation(u_n, u_t, params)
    a2 = (unc * u_n) ** 2
    b2 = (utc * u_t) ** 2
    q = a2 + b2
    f = a2 / q
    dG_dlam = (f * unc * params.normal.traction(lam * unc)
               + (1.0 - f) * utc * params.tangential.traction(lam * utc))
    dgam = params.normal.energy(lam * unc) - params.tangential.energy(lam * utc)
    cross = 2.0 * unc * unc * utc * utc * dgam / (q * q)
    s_n = dG_dlam / (unc * unc * lam) + cross * u_t * u_t
    s_t = dG_dlam / (utc * utc * lam) - cross * u_n * u_n
    return s_n, s_t


@dataclass
class FaceState:
    """History per face: largest effective separation reached and failure flag."""

    lam_max: np.ndarray
    failed: np.ndarray
    prefailed: np.ndarray = field(default=None)

    @classmethod
    def fresh(cls, n: int, prefailed=()) -> "FaceState":
        lam_max = np.zeros(n)
        failed = np.zeros(n, dtype=bool)
        pre = np.zeros(n, dtype=bool)
        pre[np.asarray(list(prefailed), dtype=np.int64)] = True
        failed |= pre
        lam_max[pre] = 1.0
        return cls(lam_max, failed, pre)

    def copy(self) -> "FaceState":
        return FaceState(self.lam_max.copy(), self.failed.copy(), self.prefailed.copy())


def update_state(state: FaceState, lam) -> FaceState:
    """Irreversible history update: ``lam_max`` never decreases."""
    lam = np.asarray(lam, dtype=float)
    if np.any(lam < 0):
        raise ValueError("effective separation must be non-negative")
    lam_max = np.maximum(state.lam_max, lam)
    return FaceState(lam_max, state.failed | (lam_max >= 1.0), state.prefailed.copy())


def trial_lambda(u_n, u_t, params: CohesiveParams):
    """History variable candidate; compression only counts sliding."""
    return effective_separation(np.maximum(u_n, 0.0), u_t, params)


def _secant_parts(u_n, u_t, lam_max, failed, params, compress=None):
    u_n, u_t, lam_max, failed = np.broadcast_arrays(
        np.asarray(u_n, float), np.asarray(u_t, float),
        np.asarray(lam_max, float), np.asarray(failed, bool))
    if compress is None:
        compress = u_n < 0
    compress = np.broadcast_to(np.asarray(compress, bool), u_n.shape)
    un = np.where(compress, 0.0, np.maximum(u_n, 0.0))
    lam = effective_separation(un, u_t, params)
    lam_eff = np.maximum(lam, lam_max)
    broken = failed | (lam_eff >= 1.0)
    rigid = (lam_eff <= RIGID_LAMBDA) & ~broken
    live = ~broken & ~rigid
    # unit direction on the lam_eff circle; a face that has not opened in
    # this iterate but carries history defaults to pure opening
    has_dir = lam > RIGID_LAMBDA
    dn = np.where(has_dir, un / np.where(has_dir, lam, 1.0), params.u_nc)
    dt = np.where(has_dir, u_t / np.where(has_dir, lam, 1.0), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        s_n, s_t = _secant_diagonal(np.where(live, dn * lam_eff, params.u_nc * 0.5),
                                    np.where(live, dt * lam_eff, 0.0), params)
    s_n = np.where(live, s_n, np.where(rigid, np.inf, 0.0))
    s_t = np.where(live, s_t, np.where(rigid, np.inf, 0.0))
    return s_n, s_t, compress


def secant_compliance_diag(u_n, u_t, lam_max, failed, params: CohesiveParams, compress=None):
    """Diagonal secant compliance ``(k_n, k_t)`` in the face frame for assembly.

    ``0`` marks a rigid direction (no separation yet, or normal contact) and
    ``inf`` a traction-free one (failed). A negative secant, which the surface
    can produce for strongly unequal mode energies, is treated as
    traction-free. ``compress`` overrides the ``u_n < 0`` test for the
    closed-normal branch. The history is not modified.
    """
    s_n, s_t, compress = _secant_parts(u_n, u_t, lam_max, failed, params, compress)
    with np.errstate(divide="ignore"):
        k_n = np.where(s_n > 0, 1.0 / np.maximum(s_n, 1e-300), np.inf)
        k_t = np.where(s_t > 0, 1.0 / np.maximum(s_t, 1e-300), np.inf)
    k_n = np.where(np.isinf(s_n), 0.0, k_n)
    k_t = np.where(np.isinf(s_t), 0.0, k_t)
    k_n = np.where(compress, 0.0, k_n)
    return k_n, k_t


def secant_stiffness(u_n, u_t, lam_max=0.0, failed=False, *, params: CohesiveParams,
                     variant: str | None = None) -> np.ndarray:
    """Secant stiffness ``S_T`` as a 2x2 matrix in the (n, t) frame.

    ``diagonal`` (default) satisfies ``S_T @ (u_n, u_t) == (t_n, t_t)``.
    ``cross_terms`` adds the ``(t_t/u_n) n(x)t + (t_n/u_t) t(x)n``
    couplings literally; it is undefined when either separation is zero.
    A rigid state returns ``inf`` entries, a failed one zeros.
    """
    variant = variant or params.secant_variant
    if variant == "diagonal":
        s_n, s_t, compress = _secant_parts(u_n, u_t, lam_max, failed, params)
        s = np.zeros(np.shape(s_n) + (2, 2))
        s[..., 0, 0] = np.where(compress, np.inf, s_n)
        s[..., 1, 1] = s_t
        return s
    if variant == "cross_terms":
        u_n = np.asarray(u_n, float)
        u_t = np.asarray(u_t, float)
        if np.any(u_n == 0) or np.any(u_t == 0):
            raise ZeroDivisionError("cross-term secant needs nonzero u_n and u_t")
        tn, tt = tractions(u_n, u_t, lam_max, failed, params=params)
        s = np.zeros(np.shape(u_n) + (2, 2))
        s[..., 0, 0] = tn / u_n
        s[..., 0, 1] = tt / u_n
        s[..., 1, 0] = tn / u_t
        s[..., 1, 1] = tt / u_t
        return s
    raise ValueError(f"unknown secant variant {variant!r}")


def secant_compliance(S_T) -> np.ndarray:
    """``K_T = S_T^-1``; infinite stiffness maps to zero compliance and vice versa."""
    S_T = np.asarray(S_T, dtype=float)
    diag = np.all(S_T[..., [0, 1], [1, 0]] == 0, axis=-1)
    if np.all(diag):
        with np.errstate(divide="ignore"):
            K = np.zeros_like(S_T)
            K[..., 0, 0] = 1.0 / S_T[..., 0, 0]
            K[..., 1, 1] = 1.0 / S_T[..., 1, 1]
        return K
    if not np.all(np.isfinite(S_T)):
        raise ValueError("non-diagonal secant stiffness with infinite entries")
    if np.any(np.abs(np.linalg.det(S_T)) <= 1e-14 * np.abs(S_T).max(axis=(-2, -1)) ** 2):
        raise np.linalg.LinAlgError("singular secant stiffness")
    return np.linalg.inv(S_T)


def interface_stiffness(K, h_F, gamma) -> np.ndarray:
    """``S_h = (h_F/gamma I + K)^-1`` for a finite 2x2 compliance ``K``."""
    K = np.asarray(K, dtype=float)
    h_F = np.asarray(h_F, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if np.any(h_F <= 0) or np.any(gamma <= 0):
        raise ValueError("h_F and gamma must be positive")
    eps = (h_F / gamma)[..., None, None]
    return np.linalg.inv(eps * np.eye(2) + K)


def interface_stiffness_diag(k_n, k_t, eps):
    """Diagonal entries of ``S_h`` in the face frame; ``inf`` compliance gives 0."""
    return 1.0 / (eps + np.asarray(k_n)), 1.0 / (eps + np.asarray(k_t))


def dissipated_energy(lam_max, phi, params: CohesiveParams):
    """Energy per unit face area spent up to ``lam_max`` under secant unloading.

    Surface energy at ``lam_max`` minus the elastic part recoverable along the
    secant to the origin.
    """
    lam_max = np.asarray(lam_max, dtype=float)
    phi = np.asarray(phi, dtype=float)
    lm = np.minimum(lam_max, 1.0)
    un, ut = separation_from_polar(lm, phi, params)
    with np.errstate(invalid="ignore", divide="ignore"):
        tn, tt = tractions(un, ut, params=params)
    recoverable = np.where(lm > RIGID_LAMBDA, 0.5 * (np.asarray(tn) * un + np.asarray(tt) * ut), 0.0)
    return gamma_surface(lm, phi, params) - recoverable


def fracture_energy(params: CohesiveParams, phi=math.pi / 2):
    return gamma_surface(1.0, phi, params)
