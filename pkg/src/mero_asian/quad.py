"""Filon quadrature and the Mellin / Laplace inversion drivers."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .errors import ContourError, DomainError

TAIL_WARN = 1e-8


@dataclass(frozen=True)
class FilonGrid:
    """Samples of the smooth factor g at n_points + 1 uniform nodes on [a, b].

    n_points counts subintervals; it must be even because consecutive pairs of
    subintervals form the parabolic panels.
    """

    a: float
    b: float
    n_points: int
    samples: np.ndarray

    def __post_init__(self):
        if not self.b > self.a:
            raise DomainError("need b > a")
        if self.n_points < 4 or self.n_points % 2:
            raise DomainError("n_points must be an even integer >= 4")
        g = np.asarray(self.samples)
        if g.shape[0] != self.n_points + 1:
            raise DomainError(f"expected {self.n_points + 1} samples, got {g.shape[0]}")
        object.__setattr__(self, "samples", g)

    @property
    def nodes(self) -> np.ndarray:
        return filon_nodes(self.a, self.b, self.n_points)

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.n_points

    @classmethod
    def from_function(cls, g, a: float, b: float, n_points: int) -> "FilonGrid":
        return cls(a, b, n_points, np.asarray(g(filon_nodes(a, b, n_points))))


def filon_nodes(a: float, b: float, n_points: int) -> np.ndarray:
    return np.linspace(a, b, n_points + 1)


def _moments(theta):
    """mu_p = int_{-1}^{1} t^p exp(-i theta t) dt for p = 0, 1, 2."""
    theta = np.asarray(theta, dtype=float)
    small = np.abs(theta) < 1.0
    th = np.where(small, 1.0, theta)
    s, c = np.sin(th), np.cos(th)
    mu0 = 2 * s / th
    mu1 = -2j * (s - th * c) / th ** 2
    mu2 = 2 * ((th ** 2 - 2) * s + 2 * th * c) / th ** 3
    if np.any(small):
        ts = np.where(small, theta, 0.0)
        z = -1j * ts
        ser = [np.zeros_like(z) for _ in range(3)]
        term = np.ones_like(z)
        for m in range(24):
            if m:
                term = term * z / m
            for p in range(3):
                if (p + m) % 2 == 0:
                    ser[p] = ser[p] + term * 2.0 / (p + m + 1)
        mu0 = np.where(small, ser[0], mu0)
        mu1 = np.where(small, ser[1], mu1)
        mu2 = np.where(small, ser[2], mu2)
    return mu0, mu1, mu2


def filon_weights(theta):
    """Weights of g(-1), g(0), g(1) in int_{-1}^{1} g(t) exp(-i theta t) dt."""
    mu0, mu1, mu2 = _moments(theta)
    return 0.5 * (mu2 - mu1), mu0 - mu2, 0.5 * (mu2 + mu1)


def filon_integral(grid: FilonGrid, omega, tail: str = "none", richardson: bool = False):
    """int_a^b g(u) exp(-i omega u) du for scalar or array omega.

    g is interpolated by a parabola on each pair of subintervals and the
    oscillatory factor is integrated exactly, so omega = 0 gives Simpson's rule.
    ``tail`` in {"none", "right", "both"} adds the asymptotic contribution of
    g beyond the truncated ends (only where |omega| is large enough for the
    expansion to be meaningful).

    For omega != 0 the rule is only fourth order even on smooth, decaying g.
    ``richardson=True`` combines the grid with its every-other-node subgrid,
    (16 I_h - I_2h) / 15, which removes the h^4 term at no extra samples.
    """
    if richardson:
        if grid.n_points % 4:
            raise DomainError("Richardson extrapolation needs n_points divisible by 4")
        coarse = FilonGrid(grid.a, grid.b, grid.n_points // 2, grid.samples[::2])
        fine = filon_integral(grid, omega, tail)
        return (16 * fine - filon_integral(coarse, omega, tail)) / 15
    if tail not in ("none", "right", "both"):
        raise DomainError(f"unknown tail mode {tail!r}")
    omega = np.asarray(omega, dtype=float)
    h = grid.h
    g = grid.samples
    centers = grid.a + h * np.arange(1, grid.n_points, 2)
    w_m, w_0, w_p = filon_weights(omega * h)
    phase = np.exp(-1j * np.multiply.outer(omega, centers))
    out = h * (w_m * (phase @ g[0:-1:2]) + w_0 * (phase @ g[1::2]) + w_p * (phase @ g[2::2]))
    if tail != "none":
        out = out + _tail(g[::-1], grid.b, -h, omega, grid.b - grid.a)
        if tail == "both":
            out = out - _tail(g, grid.a, h, omega, grid.b - grid.a)
    return out[()] if out.ndim == 0 else out


# one-sided 5-point derivative stencils (first, second, third)
_D1 = np.array([-25, 48, -36, 16, -3]) / 12
_D2 = np.array([35, -104, 114, -56, 11]) / 12
_D3 = np.array([-5, 18, -24, 14, -3]) / 2


def _tail(g, x0, step, omega, width):
    """exp(-i omega x0) sum_k g^(k)(x0) / (i omega)^(k+1), the integral beyond x0.

    ``g`` runs from the end point inward with spacing ``step`` (signed).
    """
    e = g[:5]
    derivs = [e[0], _D1 @ e / step, _D2 @ e / step ** 2, _D3 @ e / step ** 3]
    ok = np.abs(omega) >= 10.0 / width
    iw = 1j * np.where(ok, omega, 1.0)
    acc = sum(d / iw ** (k + 1) for k, d in enumerate(derivs))
    return np.where(ok, np.exp(-1j * omega * x0) * acc, 0.0)


@dataclass(frozen=True)
class InversionConfig:
    """Contours, truncations and node counts of the inversion integrals."""

    d1: float | None = None
    d2: float = 2.0
    v_max: float = 150.0
    u_max: float = 100.0
    n_mellin: int = 2400
    n_laplace: int = 1000
    c: float | None = None
    window_tol: float | None = 1e-15
    richardson: bool = True

    def __post_init__(self):
        for name in ("v_max", "u_max", "d1", "d2"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise DomainError(f"{name} must be positive")
        for name in ("n_mellin", "n_laplace"):
            n = getattr(self, name)
            if n < 4 or n % 2:
                raise DomainError(f"{name} must be an even integer >= 4")

    def refined(self, factor: int = 2) -> "InversionConfig":
        return dataclasses.replace(self, n_mellin=self.n_mellin * factor,
                                   n_laplace=self.n_laplace * factor)


@dataclass
class DensityResult:
    x: np.ndarray
    p: np.ndarray
    imag_residual: np.ndarray
    c: float
    warnings: list = field(default_factory=list)


def _tail_check(samples, total, label, warnings):
    end = float(np.abs(samples[-1]))
    scale = float(np.max(np.abs(total))) if np.size(total) else 0.0
    if end > TAIL_WARN * max(scale, 1e-300):
        warnings.append(f"{label}: integrand at the truncation point is {end:.2e}")


def default_contour(zeta1: float) -> float:
    return min(1.0, 0.5 * (1.0 + zeta1))


def inverse_mellin_density(M, x, cfg: InversionConfig, c: float | None = None,
                           zeta1: float | None = None, fold: bool | None = None) -> DensityResult:
    """p(x) = x^{-c}/(2 pi) int M(c+iv) exp(-iv ln x) dv on |v| <= v_max.

    For a real q the integrand is conjugate symmetric and the integral is
    folded onto [0, v_max] unless ``fold`` is False.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x <= 0):
        raise DomainError("x must be positive")
    q = complex(getattr(M, "q", 1.0))
    if zeta1 is None and hasattr(M, "roots"):
        zeta1 = float(np.real(M.roots.zeta[0]))
    c = cfg.c if c is None else c
    if c is None:
        if zeta1 is None:
            raise ContourError("contour abscissa unknown: pass c or zeta1")
        c = default_contour(zeta1)
    if c <= 0 or (zeta1 is not None and c >= 1 + zeta1):
        raise ContourError(f"c={c} outside the strip (0, 1+zeta_1)")
    if fold is None:
        fold = q.imag == 0
    warnings: list = []
    omega = np.log(x)
    if fold:
        grid = FilonGrid.from_function(lambda v: M(c + 1j * v), 0.0, cfg.v_max, cfg.n_mellin)
        I = filon_integral(grid, omega, tail="right")
        val = x ** (-c) / np.pi * I.real
        resid = np.zeros_like(val)
    else:
        grid = FilonGrid.from_function(lambda v: M(c + 1j * v), -cfg.v_max, cfg.v_max,
                                       2 * cfg.n_mellin)
        I = x ** (-c) / (2 * np.pi) * filon_integral(grid, omega, tail="both")
        val, resid = I.real, np.abs(I.imag)
    _tail_check(grid.samples, val, "density", warnings)
    return DensityResult(x, val, resid, float(c), warnings)


def h_integrand(M, cfg: InversionConfig, grid=None, block: int = 32, d1: float | None = None):
    """Samples of M(d1+2+iv)/((d1+iv)(d1+iv+1)) on the symmetric v grid.

    With ``cfg.window_tol`` set, M is evaluated outward from v = 0 in blocks
    until the integrand drops below the tolerance; the remaining samples are
    zero. The significant part of the integrand drifts towards larger v as
    |Im q| grows, so a fixed window would be either too short or wasteful.
    ``grid`` is an SGrid over mellin_s_grid(cfg, d1), passed on to M in slices.
    ``d1`` overrides cfg.d1.
    """
    s = mellin_s_grid(cfg, d1) - 2.0
    n = cfg.n_mellin

    def fill(lo, hi):
        vals = M(s[lo:hi] + 2.0) if grid is None else M(grid[lo:hi])
        g[lo:hi] = vals / (s[lo:hi] * (s[lo:hi] + 1.0))

    g = np.zeros(n + 1, dtype=complex)
    if cfg.window_tol is None:
        fill(0, n + 1)
        return g
    mid = n // 2
    # start from the window of the previous call on this grid, if any
    hint = getattr(grid, "window", None)
    lo, hi = hint if hint is not None else (mid - block, mid + block + 1)
    lo, hi = max(0, lo), min(n + 1, hi)
    fill(lo, hi)
    while hi < n + 1 and abs(g[hi - 1]) > cfg.window_tol:
        new = min(n + 1, hi + 4 * block)
        fill(hi, new)
        hi = new
    while lo > 0 and abs(g[lo]) > cfg.window_tol:
        new = max(0, lo - 4 * block)
        fill(new, lo)
        lo = new
    if grid is not None:
        big = np.flatnonzero(np.abs(g) > cfg.window_tol)
        if len(big):
            grid.window = (min(big[0], mid) - block, max(big[-1], mid) + block + 1)
    return g


def mellin_s_grid(cfg: InversionConfig, d1: float | None = None) -> np.ndarray:
    """The s values at which h_integrand evaluates the Mellin transform."""
    return (cfg.d1 if d1 is None else d1) + 2.0 + 1j * filon_nodes(-cfg.v_max, cfg.v_max, cfg.n_mellin)


# contour for small k, left of the pole at s' = 0; above PUT_BELOW the
# residue M(2) would cancel against the line integral at large |q|
PUT_D1 = -0.5
PUT_BELOW = 0.25


def inverse_mellin_h(M, k, cfg: InversionConfig, grid=None, zeta1: float | None = None,
                     warnings: list | None = None):
    """h(k, q) = E[(I_q - k)^+] by inverse Mellin transform along Re s = d1.

    For k < PUT_BELOW the factor k^(-d1) would amplify the quadrature error, so
    those strikes use the line Re s = PUT_D1 plus the residue M(2) of the pole at 0.
    """
    k = np.asarray(k, dtype=float)
    if np.any(k <= 0):
        raise DomainError("strike ratio k must be positive")
    if zeta1 is None and hasattr(M, "roots"):
        zeta1 = float(np.real(M.roots.zeta[0]))
    if cfg.d1 is None:
        if zeta1 is None:
            raise ContourError("d1 unknown: set it or pass zeta1")
        cfg = dataclasses.replace(cfg, d1=0.5 * (zeta1 - 1.0))
    if zeta1 is not None and not 0 < cfg.d1 < zeta1 - 1:
        raise ContourError(f"d1={cfg.d1} outside (0, zeta_1 - 1) with zeta_1={zeta1:.6g}")
    small = k < PUT_BELOW
    out = np.zeros(k.shape, dtype=complex)
    if np.any(~small):
        out[~small] = _h_line(M, k[~small], cfg, cfg.d1, _on_line(grid, cfg.d1), warnings)
    if np.any(small):
        out[small] = M(np.array([2.0 + 0j]))[0] + _h_line(M, k[small], cfg, PUT_D1,
                                                           _on_line(grid, PUT_D1), warnings)
    return out[()] if out.ndim == 0 else out


def h_line_d1(cfg: InversionConfig, k: float) -> float:
    """Abscissa of the line used for strike ratio k."""
    return cfg.d1 if k >= PUT_BELOW else PUT_D1


def _on_line(grid, d1):
    return grid if grid is not None and grid.s[0].real == d1 + 2.0 else None


def _h_line(M, k, cfg, d1, grid, warnings):
    g = h_integrand(M, cfg, grid, d1=d1)
    fg = FilonGrid(-cfg.v_max, cfg.v_max, cfg.n_mellin, g)
    out = k ** (-d1) / (2 * np.pi) * filon_integral(fg, np.log(k), tail="both")
    if warnings is not None:
        _tail_check(np.abs(g[[0, -1]]), out, "mellin", warnings)
    return out


def laplace_nodes(cfg: InversionConfig) -> np.ndarray:
    return filon_nodes(0.0, cfg.u_max, cfg.n_laplace)


def inverse_laplace_f(h, t, cfg: InversionConfig, warnings: list | None = None):
    """f(t) from h(q) = q int exp(-qt) f(t) dt by the cosine form of the Bromwich integral.

    ``h`` is either a callable u -> h(d2 + iu) or its values at laplace_nodes(cfg).
    """
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise DomainError("t must be positive")
    u = laplace_nodes(cfg)
    hv = np.asarray(h(u) if callable(h) else h, dtype=complex)
    if hv.shape != u.shape:
        raise DomainError("h samples do not match the Laplace grid")
    g = (hv / (cfg.d2 + 1j * u)).real
    grid = FilonGrid(0.0, cfg.u_max, cfg.n_laplace, g)
    out = 2 * np.exp(cfg.d2 * t) / np.pi * filon_integral(grid, t, tail="right", richardson=cfg.richardson).real
    if warnings is not None:
        _tail_check(g, out, "laplace", warnings)
    return out

