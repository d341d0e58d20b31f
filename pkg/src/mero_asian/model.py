"""Theta and hyper-exponential Lévy models.

Both model classes expose the same small evaluator surface used by the root
solvers and Mellin transforms: ``psi(z)``, ``dpsi(z)`` and ``poles(M)``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import ConvergenceError, DomainError, ModelError, PoleError

# |coth argument - i*pi*k| below this is reported as a pole
POLE_TOL = 1e-8
TAIL_TOL = 1e-12
TAIL_CAP = 10_000_000

# Taylor coefficients of x*coth(x) in powers of y = x**2
_XCOTHX_SERIES = np.array([
    1.0, 1.0 / 3, -1.0 / 45, 2.0 / 945, -1.0 / 4725, 2.0 / 93555,
    -1382.0 / 638512875, 4.0 / 18243225,
])


def _xcothx(x, strict=True):
    """x*coth(x) and d/dx of it, elementwise, for complex ``x``.

    Uses the evenness of x*coth(x) to work with Re(x) >= 0, and an expm1
    form so that nothing overflows for large |Re x|. With ``strict=False``
    entries at a pole come back as nan instead of raising.
    """
    x = np.asarray(x, dtype=complex)
    x = np.where(x.real < 0, -x, x)
    y = x * x
    small = np.abs(x) < 0.1
    val = np.empty_like(x)
    der = np.empty_like(x)
    if np.any(small):
        ys = y[small]
        c = _XCOTHX_SERIES
        val[small] = np.polyval(c[::-1], ys)
        # d/dx f(x^2) = 2x f'(y)
        dc = c[1:] * np.arange(1, len(c))
        der[small] = 2 * x[small] * np.polyval(dc[::-1], ys)
    big = ~small
    if np.any(big):
        xb = x[big]
        em = np.expm1(-2 * xb)
        at_pole = np.abs(em) < 2 * POLE_TOL
        if np.any(at_pole):
            if strict:
                raise PoleError("coth argument within tolerance of a pole i*pi*k")
            em = np.where(at_pole, np.nan, em)
        with np.errstate(invalid="ignore"):
            coth = -(2 + em) / em
        val[big] = xb * coth
        der[big] = coth - xb * (coth * coth - 1)
    return val, der


def coth_term(w, j: int):
    """pi * w**(2j-1) * coth(pi*w); even in ``w`` so either square root works."""
    w = np.asarray(w, dtype=complex)
    v, _ = _xcothx(np.pi * w)
    return v if j == 1 else w * w * v


def _g(u, j: int, strict=True):
    """coth_term(sqrt(u), j) and its derivative with respect to u."""
    u = np.asarray(u, dtype=complex)
    x = np.pi * np.sqrt(u)
    v, dv = _xcothx(x, strict)
    # d/du [x coth x] = (dx/du) d/dx = pi^2/(2x) * d/dx ; use series-safe form
    small = np.abs(x) < 0.1
    dg1 = np.empty_like(u)
    if np.any(small):
        c = _XCOTHX_SERIES
        dc = c[1:] * np.arange(1, len(c))
        dg1[small] = np.pi ** 2 * np.polyval(dc[::-1], (x * x)[small])
    if np.any(~small):
        xb = np.where(x.real < 0, -x, x)[~small]
        dg1[~small] = np.pi ** 2 / (2 * xb) * dv[~small]
    if j == 1:
        return v, dg1
    return u * v, v + u * dg1


@dataclass(frozen=True)
class ThetaModel:
    """Theta process; ``gamma`` is always recomputed so that psi(0) = 0."""

    j: int
    sigma: float
    mu: float
    c1: float
    c2: float
    alpha1: float
    alpha2: float
    beta1: float
    beta2: float
    gamma: float = field(init=False)

    def __post_init__(self):
        if self.j not in (1, 2):
            raise ModelError(f"j must be 1 or 2, got {self.j}")
        if self.sigma < 0 or self.c1 < 0 or self.c2 < 0:
            raise ModelError("sigma, c1, c2 must be nonnegative")
        if self.alpha1 < 0 or self.alpha2 < 0:
            raise ModelError("alpha1, alpha2 must be nonnegative")
        if self.beta1 <= 0 or self.beta2 <= 0:
            raise ModelError("beta1, beta2 must be positive")
        object.__setattr__(self, "gamma", calibrate_gamma(self))

    @classmethod
    def risk_neutral(cls, r: float, **params) -> "ThetaModel":
        params.pop("mu", None)
        base = cls(mu=0.0, **params)
        return dataclasses.replace(base, mu=calibrate_mu(base, r))

    @property
    def kind(self) -> str:
        return "theta"

    def params(self) -> dict:
        return {k: getattr(self, k) for k in
                ("j", "sigma", "mu", "c1", "c2", "alpha1", "alpha2", "beta1", "beta2")}

    def _jump_part(self, z, strict=True):
        s = -1.0 if self.j == 1 else 1.0
        g1, dg1 = _g((self.alpha1 - z) / self.beta1, self.j, strict)
        g2, dg2 = _g((self.alpha2 + z) / self.beta2, self.j, strict)
        val = s * (self.c1 * g1 + self.c2 * g2)
        der = s * (-self.c1 * dg1 / self.beta1 + self.c2 * dg2 / self.beta2)
        return val, der

    def psi(self, z, strict=True):
        z = np.asarray(z, dtype=complex)
        jump, _ = self._jump_part(z, strict)
        return 0.5 * self.sigma ** 2 * z * z + self.mu * z + self.gamma + jump

    def dpsi(self, z, strict=True):
        z = np.asarray(z, dtype=complex)
        _, djump = self._jump_part(z, strict)
        return self.sigma ** 2 * z + self.mu + djump

    def psi_dpsi(self, z, strict=True):
        z = np.asarray(z, dtype=complex)
        jump, djump = self._jump_part(z, strict)
        return (0.5 * self.sigma ** 2 * z * z + self.mu * z + self.gamma + jump,
                self.sigma ** 2 * z + self.mu + djump)

    def poles(self, M: int):
        n = np.arange(1, M + 1, dtype=float)
        return self.alpha1 + self.beta1 * n ** 2, self.alpha2 + self.beta2 * n ** 2

    def coeffs(self) -> "MeromorphicCoeffs":
        """Series representation; drift is the closed form's slope at zero."""
        j, b1, b2 = self.j, self.beta1, self.beta2
        c1, c2, a1, a2 = self.c1, self.c2, self.alpha1, self.alpha2

        def rule(n):
            n = np.asarray(n, dtype=float)
            rho = a1 + b1 * n ** 2
            rho_hat = a2 + b2 * n ** 2
            return (2 * c1 * b1 * n ** (2 * j) / rho, rho,
                    2 * c2 * b2 * n ** (2 * j) / rho_hat, rho_hat)

        drift = float(self.dpsi(0.0).real)
        return MeromorphicCoeffs(rule=rule, sigma=self.sigma, mu=drift)


def theta_coeffs(model: ThetaModel, n):
    """(a_n, rho_n, a_hat_n, rho_hat_n) of the Lévy density of a theta process."""
    n = np.asarray(n)
    if np.any(n < 1):
        raise DomainError("n must be >= 1")
    return model.coeffs().rule(n)


def theta_psi(model: ThetaModel, z):
    return model.psi(z)


def calibrate_gamma(model: ThetaModel) -> float:
    s = -1.0 if model.j == 1 else 1.0
    g1, _ = _g(model.alpha1 / model.beta1, model.j)
    g2, _ = _g(model.alpha2 / model.beta2, model.j)
    return float(-s * (model.c1 * g1 + model.c2 * g2).real)


def calibrate_mu(model: ThetaModel, r: float) -> float:
    """Drift making psi(1) = r (psi is affine in mu)."""
    rho1 = model.alpha1 + model.beta1
    if rho1 <= 1:
        raise PoleError(f"rho_1 = {rho1} <= 1: psi(1) is not finite")
    base = dataclasses.replace(model, mu=0.0)
    return float(r - base.psi(1.0).real)


@dataclass(frozen=True, eq=False)
class MeromorphicCoeffs:
    """Rule-based sequences (a_n, rho_n, a_hat_n, rho_hat_n) plus sigma, mu."""

    rule: Callable
    sigma: float
    mu: float

    def prefix(self, N: int):
        return tuple(np.asarray(v, dtype=float) for v in self.rule(np.arange(1, N + 1)))

    def variance_terms(self, n):
        a, rho, ah, rhoh = self.rule(n)
        return a / rho ** 2 + ah / rhoh ** 2

    def tail_variance(self, N: int, tol: float = TAIL_TOL, cap: int = TAIL_CAP) -> float:
        """sum_{n>N} (a_n/rho_n^2 + a_hat_n/rho_hat_n^2).

        Partial sum up to M plus an Euler-Maclaurin tail; M grows until the
        first neglected correction term is below ``tol``.
        """
        f = self.variance_terms
        M = max(N, 1000)
        while True:
            h = 1e-3 * M
            fprime = (f(M + h) - f(M - h)) / (2 * h)
            if abs(fprime) / 12 < tol:
                break
            M *= 2
            if M > cap:
                raise ConvergenceError("tail variance sum did not converge below cap")
        head = float(np.sum(f(np.arange(N + 1, M + 1, dtype=float)))) if M > N else 0.0
        # x = 1/t maps [M, inf) onto (0, 1/M]
        tail, _ = integrate.quad(lambda t: float(f(1.0 / t)) / t ** 2 if t > 0 else 0.0,
                                 0.0, 1.0 / M, epsabs=1e-18, epsrel=1e-13, limit=200)
        return head + tail - float(f(M)) / 2 - float(fprime) / 12

    def series_psi(self, z, terms: int):
        z = np.asarray(z, dtype=complex)
        a, rho, ah, rhoh = self.prefix(terms)
        zz = z[..., None]
        s = np.sum(a / (rho * (rho - zz)), axis=-1) + np.sum(ah / (rhoh * (rhoh + zz)), axis=-1)
        return 0.5 * self.sigma ** 2 * z * z + self.mu * z + z * z * s


def levy_density(coeffs: MeromorphicCoeffs, x, N: int):
    x = np.asarray(x, dtype=float)
    if np.any(x == 0):
        raise DomainError("Lévy density is not defined at x = 0")
    a, rho, ah, rhoh = coeffs.prefix(N)
    xx = x[..., None]
    pos = np.sum(a * rho * np.exp(-rho * np.abs(xx)), axis=-1)
    neg = np.sum(ah * rhoh * np.exp(-rhoh * np.abs(xx)), axis=-1)
    return np.where(x > 0, pos, neg)


@dataclass(frozen=True, eq=False)
class HyperExpModel:
    """Finite-mixture (hyper-exponential) truncation of a meromorphic model."""

    a: np.ndarray
    rho: np.ndarray
    a_hat: np.ndarray
    rho_hat: np.ndarray
    sigma: float
    mu: float

    @property
    def N(self) -> int:
        return len(self.rho)

    @property
    def kind(self) -> str:
        return "hyperexp"

    def _parts(self, z, strict=True):
        z = np.asarray(z, dtype=complex)
        zz = z[..., None]
        dp = self.rho - zz
        dm = self.rho_hat + zz
        at_pole = (np.abs(dp) <= 1e-15 * self.rho) | (np.abs(dm) <= 1e-15 * self.rho_hat)
        if np.any(at_pole):
            if strict:
                raise PoleError("z at a pole of the hyper-exponential exponent")
            dp = np.where(at_pole, np.nan, dp)
        return z, self.a / (self.rho * dp), self.a_hat / (self.rho_hat * dm), dp, dm

    def psi(self, z, strict=True):
        z, p, m, _, _ = self._parts(z, strict)
        s = np.sum(p, axis=-1) + np.sum(m, axis=-1)
        return 0.5 * self.sigma ** 2 * z * z + self.mu * z + z * z * s

    def dpsi(self, z, strict=True):
        return self.psi_dpsi(z, strict)[1]

    def psi_dpsi(self, z, strict=True):
        z, p, m, dp, dm = self._parts(z, strict)
        zz = z[..., None]
        s = np.sum(p, axis=-1) + np.sum(m, axis=-1)
        # d/dz z^2/(rho(rho-z)) = z(2rho - z)/(rho(rho-z)^2)
        ds = np.sum(p * zz * (2 * self.rho - zz) / dp, axis=-1) + \
            np.sum(m * zz * (2 * self.rho_hat + zz) / dm, axis=-1)
        return (0.5 * self.sigma ** 2 * z * z + self.mu * z + z * z * s,
                self.sigma ** 2 * z + self.mu + ds)

    def poles(self, M: int):
        return self.rho[:M], self.rho_hat[:M]

    def psi2_at_zero(self) -> float:
        return float(self.sigma ** 2 + 2 * np.sum(self.a / self.rho ** 2 + self.a_hat / self.rho_hat ** 2))


def hyperexp_psi(model: HyperExpModel, z):
    return model.psi(z)


def hyperexp_from_theta(model: ThetaModel, r: float, N: int) -> HyperExpModel:
    """Truncate the Lévy density at N terms, match psi''(0), then fix psi(1) = r."""
    if N < 1:
        raise DomainError("N must be >= 1")
    if model.alpha1 + model.beta1 <= 1:
        raise PoleError("rho_1 <= 1: risk-neutral drift undefined")
    coeffs = model.coeffs()
    a, rho, ah, rhoh = coeffs.prefix(N)
    sigma2 = model.sigma ** 2 + 2 * coeffs.tail_variance(N)
    hx = HyperExpModel(a, rho, ah, rhoh, float(np.sqrt(sigma2)), 0.0)
    mu = r - float(hx.psi(1.0).real)
    return dataclasses.replace(hx, mu=mu)


def model_from_config(cfg: dict):
    """Build a ThetaModel from a config mapping (see ``configs/*.json``)."""
    cfg = dict(cfg)
    if cfg.pop("family", "theta") != "theta":
        raise ModelError("only the 'theta' family is supported")
    if "gamma" in cfg:
        raise ModelError("gamma is calibrated and must not appear in the config")
    mu = cfg.pop("mu", {"mode": "fixed", "value": 0.0})
    params = {k: float(cfg.pop(k)) for k in
              ("sigma", "c1", "c2", "alpha1", "alpha2", "beta1", "beta2")}
    params["j"] = int(cfg.pop("j"))
    if cfg:
        raise ModelError(f"unknown config keys: {sorted(cfg)}")
    if mu["mode"] == "riskneutral":
        return ThetaModel.risk_neutral(float(mu["r"]), **params)
    if mu["mode"] == "fixed":
        return ThetaModel(mu=float(mu["value"]), **params)
    raise ModelError(f"unknown mu mode {mu['mode']!r}")


def model_to_config(model: ThetaModel, r: float | None = None) -> dict:
    cfg = {"family": "theta"}
    p = model.params()
    cfg.update({k: p[k] for k in ("j", "sigma", "c1", "c2", "alpha1", "alpha2", "beta1", "beta2")})
    if r is None:
        cfg["mu"] = {"mode": "fixed", "value": p["mu"]}
    else:
        cfg["mu"] = {"mode": "riskneutral", "r": r}
    return cfg
