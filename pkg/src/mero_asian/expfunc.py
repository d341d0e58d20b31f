"""Mellin transforms of the exponential functional I_q.

Every transform here is a ratio of gamma products times a power b^{s-1}.
Each gamma factor is rewritten through

    f_a(z) = log Gamma(z + a) - log Gamma(z) - a log z,

which tends to zero as z grows, so long products are accumulated as sums of
small terms plus one linear term (s - 1) * slope. The value at s = 1 is then
exactly 1 because f_0 = 0.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb, lgamma

import numpy as np
from scipy.special import bernoulli, loggamma

from .errors import DegenerateError, DomainError, ModelError, PoleError, SingularError
from .roots import RootSet, solve_complex, solve_real

KINDS = ("truncated", "corrected", "hyperexp")

# B_{2k} / (2k (2k - 1)), k = 1..5; truncation error below 1e-19 for |w| >= 20
_STIRLING = (1 / 12, -1 / 360, 1 / 1260, -1 / 1680, 1 / 1188)
_ASYM_MIN = 20.0
SINGULAR_TOL = 1e-7


def _stirling_tail(w):
    w1 = 1.0 / w
    w2 = w1 * w1
    acc = _STIRLING[-1]
    for c in _STIRLING[-2::-1]:
        acc = c + w2 * acc
    return w1 * acc


def log_gamma_ratio(z, a):
    """f_a(z) = log Gamma(z+a) - log Gamma(z) - a log z, broadcasting z and a.

    Large arguments use the Stirling difference, which avoids the cancellation
    of two huge log-gamma values. The result is a logarithm modulo 2*pi*i.
    """
    z = np.asarray(z, dtype=complex)
    a = np.asarray(a, dtype=complex)
    w = z + a
    shape = w.shape
    z, a = np.broadcast_to(z, shape), np.broadcast_to(a, shape)
    big = ((np.abs(z) >= _ASYM_MIN) & (np.abs(w) >= _ASYM_MIN)
           & (z.real > 0) & (w.real > 0))
    if big.all():
        return (w - 0.5) * np.log1p(a / z) - a + _stirling_tail(w) - _stirling_tail(z)
    out = np.empty(shape, dtype=complex)
    if np.any(big):
        zb, ab, wb = z[big], a[big], w[big]
        out[big] = (wb - 0.5) * np.log1p(ab / zb) - ab + _stirling_tail(wb) - _stirling_tail(zb)
    small = ~big
    if np.any(small):
        zs, as_ = z[small], a[small]
        out[small] = loggamma(zs + as_) - loggamma(zs) - as_ * np.log(zs)
    return out


def _sum_log_gamma_ratio(x, k):
    """sum_n f_k(x_n) for 1-d x and k; rows that keep z + k large skip the masks."""
    total = np.zeros(k.shape, dtype=complex)
    if len(x) == 0:
        return total
    kmin = float(np.min(k.real)) if k.size else 0.0
    safe = (np.abs(x) >= _ASYM_MIN) & (x.real > 0) & (x.real + kmin >= _ASYM_MIN)
    if np.any(safe):
        zs = x[safe][:, None]
        w = zs + k
        total += (np.sum((w - 0.5) * np.log1p(k / zs) + _stirling_tail(w), axis=0)
                  - len(zs) * k - np.sum(_stirling_tail(zs)))
    rest = x[~safe]
    if len(rest):
        total += np.sum(log_gamma_ratio(rest[:, None], k), axis=0)
    return total


# far rows |z| >= _SERIES_RATIO * max|k| are summed through power sums of 1/z
_SERIES_M = 48
_SERIES_RATIO = 2.0
# the series is asymptotic in x as well, so small |x| needs the direct sum
_SERIES_FLOOR = 16.0


def bernoulli_basis(k, M: int = _SERIES_M) -> np.ndarray:
    """P_m(k) = (-1)^(m+1) (B_{m+1}(k) - B_{m+1}) / (m (m+1)), m = 1..M.

    f_k(z) = sum_m P_m(k) z^(-m) is the large-z expansion of the log-gamma ratio.
    """
    k = np.asarray(k, dtype=complex)
    B = bernoulli(M + 1)
    powers = [np.ones_like(k)]
    for _ in range(M + 1):
        powers.append(powers[-1] * k)
    out = np.empty((M,) + k.shape, dtype=complex)
    for m in range(1, M + 1):
        n = m + 1
        acc = np.zeros_like(k)
        for j in range(n):
            acc = acc + comb(n, j) * B[j] * powers[n - j]
        out[m - 1] = (-1) ** (m + 1) * acc / (m * (m + 1))
    return out


class SGrid:
    """A fixed set of s values with cached q-independent work.

    Holds the Bernoulli basis for k = s - 1 and k = 1 - s and, once set, the
    pole part of a Mellin transform. Slicing returns a view on a sub-range.
    """

    def __init__(self, s, _basis=None, _pole=None):
        self.s = np.atleast_1d(np.asarray(s, dtype=complex))
        if self.s.ndim != 1:
            raise DomainError("SGrid needs a 1-d array of s values")
        self._basis = {} if _basis is None else _basis
        self.pole_part = _pole

    def basis(self, sign: int) -> np.ndarray:
        if sign not in self._basis:
            self._basis[sign] = bernoulli_basis(sign * (self.s - 1.0))
        return self._basis[sign]

    @property
    def kmax(self) -> float:
        return float(np.max(np.abs(self.s - 1.0)))

    def __len__(self):
        return len(self.s)

    def __getitem__(self, sl):
        if not isinstance(sl, slice):
            raise TypeError("SGrid supports slices only")
        basis = {sg: b[:, sl] for sg, b in self.basis_items()}
        pole = None if self.pole_part is None else self.pole_part[sl]
        return SGrid(self.s[sl], basis, pole)

    def basis_items(self):
        for sign in (1, -1):
            yield sign, self.basis(sign)


@dataclass(frozen=True)
class InterlacedPair:
    """Sequences 0 < alpha_1 < beta_1 < alpha_2 < beta_2 < ..."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=float)
        b = np.asarray(self.beta, dtype=float)
        if a.ndim != 1 or a.shape != b.shape or len(a) == 0:
            raise DomainError("alpha and beta must be 1-d arrays of equal nonzero length")
        seq = np.empty(2 * len(a))
        seq[0::2], seq[1::2] = a, b
        if seq[0] <= 0 or np.any(np.diff(seq) <= 0):
            raise DomainError("sequences are not positive and interlaced")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)

    @property
    def N(self) -> int:
        return len(self.alpha)

    @classmethod
    def from_rule(cls, alpha, beta, N: int) -> "InterlacedPair":
        n = np.arange(1, N + 1, dtype=float)
        return cls(alpha(n), beta(n))


def _terms(pair: InterlacedPair, N: int):
    if N < 0 or N > pair.N:
        raise DomainError(f"N={N} outside the materialized length {pair.N}")
    return pair.alpha[:N], pair.beta[:N]


def beta_product_mellin(pair: InterlacedPair, s, N: int):
    """prod_n Gamma(b)Gamma(a+s-1)/(Gamma(a)Gamma(b+s-1)) * (b/a)^{s-1}."""
    a, b = _terms(pair, N)
    s = np.asarray(s, dtype=complex)
    k = s[..., None] - 1.0
    x = a + k
    if np.any((x.real <= 0) & (np.abs(x - np.round(x.real)) == 0)):
        raise PoleError("s at a pole 1 - alpha_n - k of a retained gamma factor")
    val = np.exp(np.sum(log_gamma_ratio(a, k) - log_gamma_ratio(b, k), axis=-1))
    return val[()] if val.ndim == 0 else val


def phi(pair: InterlacedPair, s, N: int):
    """Ratio M(s+1)/M(s) of the beta-product transform."""
    a, b = _terms(pair, N)
    s = np.asarray(s, dtype=complex)
    k = s[..., None] - 1.0
    den = 1.0 + k / b
    if np.any(den == 0):
        raise PoleError("s = 1 - beta_n")
    val = np.prod((1.0 + k / a) / den, axis=-1)
    return val[()] if val.ndim == 0 else val


def log_mellin_tail_bound(pair: InterlacedPair, N: int, v: float) -> float:
    """|f_{v-1}(alpha_{N+1})|, a bound on the omitted log-tail on Re s = v."""
    if N + 1 > pair.N:
        raise DomainError("alpha_{N+1} is not materialized")
    a = pair.alpha[N]
    if v <= 1 - a:
        raise DomainError("v must exceed 1 - alpha_{N+1}")
    if v == 1:
        return 0.0
    return abs(lgamma(v - 1 + a) - lgamma(a) - (v - 1) * np.log(a))


def correction_params(m1, m2):
    """(a, b) of the beta variable of the second kind with moments m1, m2."""
    m1, m2 = complex(m1), complex(m2)
    var = m2 - m1 * m1
    if m1.imag == 0 and m2.imag == 0:
        if not (m1.real > 0 and var.real > 0):
            raise DegenerateError(f"m2 - m1^2 = {var.real:.3e} is not positive")
        var, m1, m2 = var.real, m1.real, m2.real
    elif abs(var) <= 1e-15 * abs(m1) ** 2:
        raise DegenerateError("tail variance vanishes")
    return m1 * (m1 + m2) / var, 1 + (m1 + m2) / var


@dataclass(frozen=True, eq=False)
class MellinEval:
    """Mellin transform s -> E[I_q^{s-1}] at fixed q.

    The log transform is (s-1)*slope + sum f_{1-s}(right_num) - sum f_{1-s}(right_den)
    + sum f_{s-1}(left_num) - sum f_{s-1}(left_den). Pole-dependent terms
    (right_den, left_num) do not change with q and can be precomputed with
    :meth:`pole_part` for a fixed s grid.
    """

    q: complex
    N: int
    kind: str
    roots: RootSet
    log_aN: complex
    log_bN: complex
    corr: tuple | None
    slope: complex
    right_num: np.ndarray
    right_den: np.ndarray
    left_num: np.ndarray
    left_den: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def aN(self) -> complex:
        return complex(np.exp(self.log_aN))

    @property
    def bN(self) -> complex:
        return complex(np.exp(self.log_bN))

    def pole_part(self, s):
        grid = _as_grid(s)
        return (_sum_f(self.left_num, grid, 1, True)
                - _sum_f(self.right_den, grid, -1, False))

    def log(self, s, grid: SGrid | None = None):
        """log M(s); -inf real part where a denominator gamma has a pole.

        ``grid`` is an SGrid for exactly these s values, carrying cached work.
        """
        s_arr = np.asarray(s.s if isinstance(s, SGrid) else s, dtype=complex)
        if isinstance(s, SGrid):
            grid = s
        if grid is None:
            grid = _as_grid(s_arr.ravel())
        elif grid.s.shape != s_arr.ravel().shape or np.any(grid.s != s_arr.ravel()):
            raise DomainError("grid was built for different s values")
        pole = grid.pole_part if grid.pole_part is not None else self.pole_part(grid)
        out = (grid.s - 1.0) * self.slope + pole
        out = out + _sum_f(self.right_num, grid, -1, True) - _sum_f(self.left_den, grid, 1, False)
        if self.corr is not None:
            out = out + _sum_f(np.array([self.corr[0]], dtype=complex), grid, 1, True)
        return out.reshape(s_arr.shape)

    def __call__(self, s, grid: SGrid | None = None):
        lv = self.log(s, grid)
        with np.errstate(over="ignore"):
            val = np.where(lv.real == -np.inf, 0.0, np.exp(lv))
        return val[()] if val.ndim == 0 else val


def _as_grid(s) -> SGrid:
    return s if isinstance(s, SGrid) else SGrid(np.asarray(s, dtype=complex).ravel())


_SERIES_MIN_POINTS = 8


def _sum_f(x, grid: SGrid, sign: int, numerator: bool):
    """sum_n f_k(x_n) with k = sign*(s-1); numerator poles raise, denominator poles give +inf."""
    k = sign * (grid.s - 1.0)
    if len(x) == 0:
        return np.zeros(k.shape, dtype=complex)
    total = np.zeros(k.shape, dtype=complex)
    far = (x.real > 0) & (np.abs(x) >= max(_SERIES_RATIO * grid.kmax, _SERIES_FLOOR))
    if np.count_nonzero(far) > 4 and len(k) >= _SERIES_MIN_POINTS:
        inv = 1.0 / x[far]
        pw = np.cumprod(np.broadcast_to(inv, (_SERIES_M, len(inv))), axis=0)
        total += pw.sum(axis=1) @ grid.basis(sign)
        x = x[~far]
    with np.errstate(invalid="ignore", divide="ignore"):
        total += _sum_log_gamma_ratio(x, k)
    bad = ~np.isfinite(total)
    if np.any(bad):
        if numerator:
            raise PoleError("s at a pole of a numerator gamma factor")
        total = np.where(bad, complex(np.inf, 0.0), total)
    return total


def _as_roots(model, q, M, roots):
    if roots is None:
        q = complex(q)
        roots = solve_real(model, q.real, M) if q.imag == 0 else solve_complex(model, q, M)
    if roots.M < M:
        raise DomainError(f"need {M} roots per side, got {roots.M}")
    return roots


def _truncated_parts(model, roots: RootSet, q, N: int):
    q = complex(q)
    rho, rho_hat = (np.asarray(p, dtype=float) for p in model.poles(N))
    if len(rho) < N:
        raise DomainError("model has fewer than N poles")
    zeta = np.asarray(roots.zeta[:N], dtype=complex)
    zeta_hat = np.asarray(roots.zeta_hat[:N], dtype=complex)
    slope = -np.log(q) + np.sum(np.log1p(1.0 / rho_hat) - np.log1p(1.0 / zeta_hat))
    rho_hat0 = np.concatenate([[0.0], rho_hat[:-1]])
    log_bN = (np.log1p(rho_hat[-1]) - np.log(q)
              + np.sum(np.log(zeta) + np.log(zeta_hat) - np.log(rho) - np.log(rho_hat)))
    log_aN = -np.sum(loggamma(rho_hat0 + 1) - loggamma(zeta_hat + 1)
                     + loggamma(zeta) - loggamma(rho))
    return dict(slope=complex(slope), right_num=zeta, right_den=rho.astype(complex),
                left_num=(1.0 + rho_hat0).astype(complex), left_den=1.0 + zeta_hat,
                log_aN=complex(log_aN), log_bN=complex(log_bN))


def tail_moments(model, roots: RootSet, q, N: int):
    """(m1, m2): first two moments of the omitted product tail.

    Uses m_k = k! / (M_N(k+1) prod_{j<=k} (q - psi(j))). At integer s every
    f term is an elementary sum of log1p, so no gamma function is needed.
    A root sitting at j (psi(j) = q) or a pole at j (psi(j) infinite) is
    paired with the matching factor of q - psi(j) and replaced by its limit.
    """
    q = complex(q)
    rho, rho_hat = (np.asarray(p, dtype=float) for p in model.poles(N))
    if rho[-1] <= 1:
        raise DomainError("zeta_{N+1} > rho_N must exceed 1 for finite second moment")
    zeta = np.asarray(roots.zeta[:N], dtype=complex)
    zeta_hat = np.asarray(roots.zeta_hat[:N], dtype=complex)
    slope = -np.log(q) + np.sum(np.log1p(1.0 / rho_hat) - np.log1p(1.0 / zeta_hat))
    rho_hat0 = np.concatenate([[0.0], rho_hat[:-1]])
    coeffs = None
    out = []
    for k in (1, 2):
        logm = complex(lgamma(k + 1)) - k * slope
        for i in range(k):
            # Gamma(x + k)/Gamma(x) x^{-k} on the left chain
            logm -= np.sum(np.log1p(i / (1.0 + rho_hat0)))
            logm += np.sum(np.log1p(i / (1.0 + zeta_hat)))
        for j in range(1, k + 1):
            zs = np.abs(zeta - j) <= SINGULAR_TOL * j
            ps = np.abs(rho - j) <= SINGULAR_TOL * j
            # regular right-chain factors: Gamma(x-k)/Gamma(x) x^k -> sum -log1p(-j/x)
            logm += np.sum(np.log1p(-j / zeta[~zs]))
            # complex log: rho_n < j flips the sign of both factors
            logm -= np.sum(np.log1p(-j / rho[~ps].astype(complex)))
            if np.count_nonzero(zs) + np.count_nonzero(ps) > 1:
                raise SingularError(f"several singular factors at j={j}")
            if np.any(zs):
                # (zeta_n - j) / (zeta_n (q - psi(j))) -> 1 / (zeta_n psi'(j))
                d = complex(model.dpsi(float(j)))
                if d == 0 or not np.isfinite(d):
                    raise SingularError(f"psi'({j}) unusable in the limit")
                logm += -np.log(zeta[zs][0]) - np.log(d)
            elif np.any(ps):
                # rho_n / ((rho_n - j)(q - psi(j))) -> rho_n / (-a_n rho_n)
                if coeffs is None:
                    coeffs = model.coeffs()
                n = int(np.flatnonzero(ps)[0]) + 1
                a_n = float(coeffs.rule(np.array([n]))[0][0])
                logm += np.log(rho[n - 1]) - np.log(complex(-a_n * rho[n - 1]))
            else:
                pj = complex(model.psi(float(j), strict=False))
                if not np.isfinite(pj) or pj == q:
                    raise SingularError(f"q - psi({j}) vanishes or is infinite")
                logm -= np.log(q - pj)
        out.append(complex(np.exp(logm)))
    m1, m2 = out
    if q.imag == 0:
        m1, m2 = m1.real, m2.real
    return m1, m2


def mellin_eval(model, q, N: int, kind: str = "corrected", roots: RootSet | None = None) -> MellinEval:
    """Build the Mellin evaluator of the given kind at q.

    ``truncated`` and ``corrected`` take a theta-type model and use N roots per
    side; ``hyperexp`` takes a HyperExpModel and uses all N+1 roots per side.
    """
    if kind not in KINDS:
        raise DomainError(f"unknown kind {kind!r}")
    q = complex(q)
    if q.real <= 0:
        raise DomainError("Re q must be positive")
    if kind == "hyperexp":
        return _hyperexp_eval(model, q, roots)
    if N < 1:
        raise DomainError("N must be >= 1")
    roots = _as_roots(model, q, N, roots)
    parts = _truncated_parts(model, roots, q, N)
    corr, diag = None, {}
    if kind == "corrected":
        m1, m2 = tail_moments(model, roots, q, N)
        try:
            a, b = correction_params(m1, m2)
        except DegenerateError as exc:
            kind = "truncated"
            diag["correction_skipped"] = str(exc)
        else:
            corr = (a, b)
            a_c, b_c = complex(a), complex(b)
            parts["right_num"] = np.append(parts["right_num"], b_c)
            parts["slope"] += np.log(a_c) - np.log(b_c)
            diag["m1"], diag["m2"] = m1, m2
    return MellinEval(q, N, kind, roots, corr=corr, diagnostics=diag, **parts)


def _hyperexp_eval(model, q, roots):
    if getattr(model, "kind", None) != "hyperexp":
        raise ModelError("hyperexp kind needs a HyperExpModel")
    if not model.sigma > 0:
        raise ModelError("hyper-exponential Mellin formula needs sigma > 0")
    N = model.N
    roots = _as_roots(model, q, N + 1, roots)
    rho = np.asarray(model.rho, dtype=float)
    rho_hat = np.asarray(model.rho_hat, dtype=float)
    zeta = np.asarray(roots.zeta[:N + 1], dtype=complex)
    zeta_hat = np.asarray(roots.zeta_hat[:N + 1], dtype=complex)
    half_var = 0.5 * model.sigma ** 2
    rho_hat0 = np.concatenate([[0.0], rho_hat])
    # pair logs of comparable size before summing
    slope = (-np.log(half_var)
             + np.sum(np.log1p(rho_hat) - np.log1p(zeta_hat[:N])) - np.log1p(zeta_hat[N])
             + np.sum(np.log(rho) - np.log(zeta[:N])) - np.log(zeta[N]))
    log_a = -(np.sum(loggamma(rho_hat0[1:] + 1)) - np.sum(loggamma(zeta_hat + 1))
              + np.sum(loggamma(zeta)) - np.sum(loggamma(rho)))
    return MellinEval(q, N, "hyperexp", roots, log_aN=complex(log_a),
                      log_bN=complex(-np.log(half_var)), corr=None, slope=complex(slope),
                      right_num=zeta, right_den=rho.astype(complex),
                      left_num=(1.0 + rho_hat0).astype(complex), left_den=1.0 + zeta_hat)


def mellin_truncated(model, roots: RootSet, q, N: int, s):
    return mellin_eval(model, q, N, "truncated", roots)(s)


def mellin_corrected(model, roots: RootSet, q, N: int, s):
    return mellin_eval(model, q, N, "corrected", roots)(s)


def mellin_hyperexp(model, roots: RootSet, s, q=None):
    q = roots.q if q is None else q
    return mellin_eval(model, q, model.N, "hyperexp", roots)(s)
