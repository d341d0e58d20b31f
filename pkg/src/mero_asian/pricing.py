"""Arithmetic Asian call prices and the density experiment.

The price of the call on the running integral A_T = int_0^T S_u du is
C = exp(-rT) * S0 * f(K/S0, T) with f(k, t) = E[(int_0^t exp(X_u) du - k)^+].
"""
from __future__ import annotations

import dataclasses
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ContourError, DomainError, ModelError, SamplerError
from .expfunc import SGrid, mellin_eval
from .model import ThetaModel, hyperexp_from_theta
from .quad import (FilonGrid, InversionConfig, filon_integral, filon_weights,
                   h_line_d1, inverse_laplace_f, inverse_mellin_density,
                   inverse_mellin_h, laplace_nodes, mellin_s_grid)
from .roots import iter_complex_path, solve_real

METHODS = ("algo1", "algo2", "mc")
DEFAULT_N = 80
# once |h(q)/q| stays below this for STOP_RUN consecutive Laplace nodes the
# remaining nodes are set to zero instead of computed
STOP_TOL = 1e-14
STOP_RUN = 10

PROFILES = {
    "fast": dict(N=40, quad=InversionConfig(v_max=100.0, n_mellin=1200, u_max=80.0,
                                            n_laplace=800)),
    "table": dict(N=DEFAULT_N, quad=InversionConfig()),
    "exact": dict(N=160, quad=InversionConfig(v_max=150.0, n_mellin=4800, u_max=120.0,
                                              n_laplace=2400)),
}


def worker_count() -> int:
    env = os.environ.get("MERO_ASIAN_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise DomainError("MERO_ASIAN_THREADS must be an integer") from None
    return os.cpu_count() or 1


@dataclass(frozen=True)
class MCConfig:
    paths: int = 1_000_000
    steps: int = 400
    seed: int = 12345
    chunk: int = 10_000
    grid_points: int = 2 ** 17


@dataclass(frozen=True)
class PricingRequest:
    S0: float = 100.0
    K: float = 105.0
    T: float = 1.0
    r: float = 0.03
    method: str = "algo2"
    N: int = DEFAULT_N
    quad: InversionConfig = field(default_factory=InversionConfig)
    mc_cfg: MCConfig | None = None

    def __post_init__(self):
        if not self.S0 > 0:
            raise DomainError("S0 must be positive")
        if not self.T > 0:
            raise DomainError("T must be positive")
        if self.K < 0:
            raise DomainError("K must be nonnegative")
        if self.r < 0:
            raise DomainError("r must be nonnegative")
        if self.method not in METHODS:
            raise DomainError(f"unknown method {self.method!r}")
        if self.N < 1:
            raise DomainError("N must be >= 1")
        if self.method == "mc" and self.mc_cfg is None:
            raise DomainError("mc method needs mc_cfg")

    @classmethod
    def from_profile(cls, profile: str, **kw) -> "PricingRequest":
        """Request with N and quadrature settings taken from PROFILES; kw override."""
        if profile not in PROFILES:
            raise DomainError(f"unknown profile {profile!r}")
        base = dict(PROFILES[profile])
        base.update(kw)
        return cls(**base)


@dataclass
class PricingResult:
    price: float
    stderr: float | None
    method: str
    N: int | None
    runtime_seconds: float
    diagnostics: dict = field(default_factory=dict)


def closed_form_zero_strike(S0: float, T: float, r: float) -> float:
    """exp(-rT) S0 E[int_0^T exp(X_u) du] when psi(1) = r."""
    growth = T if r == 0 else np.expm1(r * T) / r
    return float(np.exp(-r * T) * S0 * growth)


def _check_risk_neutral(model, r):
    err = abs(complex(model.psi(1.0)) - r)
    if err > 1e-10:
        raise ModelError(f"model is not risk neutral for r={r}: |psi(1) - r| = {err:.2e}")


def laplace_samples(model, kind: str, N: int, k: float, cfg: InversionConfig, diag: dict):
    """h(k, d2 + iu) at the Laplace nodes, with continuation-tracked roots."""
    u = laplace_nodes(cfg)
    M = N + 1 if kind == "hyperexp" else N
    zeta1 = float(solve_real(model, cfg.d2, 1).zeta[0])
    if cfg.d1 is None:
        cfg = dataclasses.replace(cfg, d1=0.5 * (zeta1 - 1.0))
    if not 0 < cfg.d1 < zeta1 - 1:
        raise ContourError(f"d1={cfg.d1} outside (0, zeta_1(d2) - 1) = (0, {zeta1 - 1:.6g})")
    grid = SGrid(mellin_s_grid(cfg, h_line_d1(cfg, k)))
    hv = np.zeros(len(u), dtype=complex)
    quiet = 0
    max_res = 0.0
    min_re_zeta = np.inf
    warnings: list = []
    used = len(u)
    for i, roots in enumerate(iter_complex_path(model, cfg.d2, u, M)):
        ev = mellin_eval(model, roots.q, N, kind, roots)
        if grid.pole_part is None:
            # the pole part only depends on the fixed left terms
            grid.pole_part = ev.pole_part(grid)
        # the strip is bounded by the root with the smallest real part
        re_min = float(np.min(np.real(roots.zeta)))
        min_re_zeta = min(min_re_zeta, re_min)
        if cfg.d1 >= re_min - 1:
            raise ContourError(f"contour Re s = {cfg.d1 + 2} crosses a pole at q={roots.q}")
        hv[i] = inverse_mellin_h(ev, k, cfg, grid=grid, zeta1=re_min)
        max_res = max(max_res, roots.max_residual / max(1.0, abs(roots.q)))
        quiet = quiet + 1 if abs(hv[i] / roots.q) < STOP_TOL else 0
        if quiet >= STOP_RUN:
            used = i + 1
            break
    diag.update(d1=cfg.d1, d2=cfg.d2, laplace_nodes_used=used, laplace_nodes=len(u),
                max_root_residual=max_res, min_re_zeta=min_re_zeta)
    if used == len(u) and abs(hv[-1] / (cfg.d2 + 1j * u[-1])) > 1e-10:
        warnings.append(f"h(q)/q at u_max is {abs(hv[-1] / (cfg.d2 + 1j * u[-1])):.2e}")
    diag.setdefault("warnings", []).extend(warnings)
    return hv, cfg


def _semi_analytic(model, kind, req: PricingRequest, method: str) -> PricingResult:
    t0 = time.perf_counter()
    if req.K == 0:
        return PricingResult(closed_form_zero_strike(req.S0, req.T, req.r), None, method,
                             req.N, time.perf_counter() - t0, {"closed_form": True})
    diag: dict = {}
    hv, cfg = laplace_samples(model, kind, req.N, req.K / req.S0, req.quad, diag)
    f = float(inverse_laplace_f(hv, req.T, cfg, warnings=diag["warnings"]))
    price = float(np.exp(-req.r * req.T) * req.S0 * f)
    return PricingResult(max(price, 0.0), None, method, req.N,
                         time.perf_counter() - t0, diag)


def price_algo1(model: ThetaModel, req: PricingRequest) -> PricingResult:
    """Corrected truncated Mellin transform of the theta process itself."""
    _check_risk_neutral(model, req.r)
    return _semi_analytic(model, "corrected", req, "algo1")


def price_algo2(model: ThetaModel, req: PricingRequest) -> PricingResult:
    """Exact Mellin transform of the N-term hyper-exponential approximation."""
    _check_risk_neutral(model, req.r)
    t0 = time.perf_counter()
    hx = hyperexp_from_theta(model, req.r, req.N)
    res = _semi_analytic(hx, "hyperexp", req, "algo2")
    res.runtime_seconds = time.perf_counter() - t0
    res.diagnostics["sigma_tilde"] = hx.sigma
    return res


@dataclass(frozen=True)
class IncrementTable:
    """Tabulated density and cdf of the increment X_dt."""

    x: np.ndarray
    pdf: np.ndarray
    cdf: np.ndarray
    dt: float
    clamped_mass: float
    mass: float

    def mean(self) -> float:
        return float(np.trapezoid(self.x * self.pdf, self.x))

    def sample(self, u: np.ndarray) -> np.ndarray:
        return np.interp(u, self.cdf, self.x)


def _tail_halfwidth(model, dt: float, sd: float, eps: float = 1e-12) -> float:
    """Half-width covering 12 sd and the exponential jump tails up to eps."""
    rho, rho_hat = model.poles(1)
    a, _, ah, _ = model.coeffs().rule(np.array([1.0]))
    w = 12 * sd
    for amp, rate in ((a[0], rho[0]), (ah[0], rho_hat[0])):
        w = max(w, np.log(max(dt * amp, eps) / eps) / rate)
    return float(w)


def increment_density(model, dt: float, grid_points: int = 2 ** 17) -> IncrementTable:
    """Density of X_dt from exp(dt psi(iz)) by Filon quadrature on a symmetric z range.

    The x grid and the z grid are reciprocal (dx * dz-panel = 2 pi / n), so
    the Filon panel sums for all x at once are one FFT.
    """
    if not dt > 0:
        raise DomainError("dt must be positive")
    n = int(grid_points)
    if n < 16 or n & (n - 1):
        raise DomainError("grid_points must be a power of two >= 16")
    var = dt * _psi2(model)
    sd = np.sqrt(var)
    mean = dt * float(np.real(model.dpsi(0.0)))
    half = _tail_halfwidth(model, dt, sd)
    dx = 2 * half / n
    x = mean - half + dx * np.arange(n)
    # n panels of width 2h with 2h * dx = 2 pi / n
    h = np.pi / (n * dx)
    z = -n * h + h * np.arange(2 * n + 1)
    with np.errstate(under="ignore"):
        g = np.exp(dt * model.psi(1j * z))
    grid = FilonGrid(z[0], z[-1], 2 * n, g)
    centers = z[1::2]
    w_m, w_0, w_p = filon_weights(x * h)
    # sum_m exp(-i x_j c_m) a_m with c_m = c_0 + 2 h m and x_j = x_0 + j dx
    sums = []
    for a_m in (grid.samples[0:-1:2], grid.samples[1::2], grid.samples[2::2]):
        b = a_m * np.exp(-1j * x[0] * centers)
        sums.append(np.exp(-1j * np.arange(n) * dx * centers[0]) * np.fft.fft(b))
    integral = h * (w_m * sums[0] + w_0 * sums[1] + w_p * sums[2])
    pdf = integral.real / (2 * np.pi)
    neg = pdf < 0
    clamped = float(-np.sum(pdf[neg]) * dx)
    if clamped > 1e-5:
        raise SamplerError(f"clamped negative mass {clamped:.2e} exceeds 1e-5")
    pdf = np.where(neg, 0.0, pdf)
    mass = float(np.trapezoid(pdf, x))
    if abs(mass - 1) > 1e-4:
        raise SamplerError(f"tabulated density integrates to {mass:.6f}")
    pdf = pdf / mass
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * dx)])
    cdf /= cdf[-1]
    # strictly increasing abscissae for np.interp on flat stretches
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    for arr in (x, pdf, cdf):
        arr.setflags(write=False)
    return IncrementTable(x[keep], pdf[keep], cdf[keep], dt, clamped, mass)


def _psi2(model) -> float:
    if hasattr(model, "psi2_at_zero"):
        return model.psi2_at_zero()
    eps = 1e-3
    return float(np.real(model.dpsi(eps) - model.dpsi(-eps)) / (2 * eps))


def price_mc(model: ThetaModel, req: PricingRequest) -> PricingResult:
    """Monte Carlo on the discretely sampled average with exact increments."""
    _check_risk_neutral(model, req.r)
    cfg = req.mc_cfg
    if cfg is None or cfg.paths < 1 or cfg.steps < 1:
        raise DomainError("mc needs paths >= 1 and steps >= 1")
    t0 = time.perf_counter()
    dt = req.T / cfg.steps
    table = increment_density(model, dt, cfg.grid_points)
    sizes = [min(cfg.chunk, cfg.paths - i) for i in range(0, cfg.paths, cfg.chunk)]
    streams = np.random.SeedSequence(cfg.seed).spawn(len(sizes))

    def run(args):
        size, ss = args
        rng = np.random.default_rng(ss)
        z = np.zeros(size)
        acc = np.zeros(size)
        for _ in range(cfg.steps):
            z += table.sample(rng.random(size))
            acc += np.exp(z)
        payoff = np.maximum(req.S0 * acc * dt - req.K, 0.0)
        return payoff.sum(), np.square(payoff).sum()

    with ThreadPoolExecutor(max_workers=worker_count()) as pool:
        parts = list(pool.map(run, zip(sizes, streams)))
    tot = sum(p[0] for p in parts)
    tot2 = sum(p[1] for p in parts)
    n = cfg.paths
    mean = tot / n
    var = max(tot2 / n - mean * mean, 0.0) * n / max(n - 1, 1)
    disc = np.exp(-req.r * req.T)
    diag = {"paths": n, "steps": cfg.steps, "seed": cfg.seed,
            "density_mass": table.mass, "clamped_mass": table.clamped_mass}
    return PricingResult(float(disc * mean), float(disc * np.sqrt(var / n)), "mc", None,
                         time.perf_counter() - t0, diag)


def price(model: ThetaModel, req: PricingRequest) -> PricingResult:
    fn = {"algo1": price_algo1, "algo2": price_algo2, "mc": price_mc}[req.method]
    return fn(model, req)


@dataclass
class DensityReport:
    x: np.ndarray
    p_test: np.ndarray
    p_benchmark: np.ndarray
    errors: np.ndarray
    max_error: float
    imag_residual: float
    kind: str


def density(model, q: float, N: int, x, cfg: InversionConfig | None = None,
            correction: bool = True, c: float | None = None):
    """Density of I_q from the (optionally corrected) truncated Mellin transform."""
    cfg = cfg or InversionConfig()
    kind = "corrected" if correction else "truncated"
    roots = solve_real(model, q, N)
    ev = mellin_eval(model, q, N, kind, roots)
    return inverse_mellin_density(ev, x, cfg, c=c)


def density_experiment(model, q: float = 1.0, N_test: int = 20, N_benchmark: int = 400,
                       x=None, correction: bool = False,
                       cfg: InversionConfig | None = None) -> DensityReport:
    """Max-abs difference between the N_test density and the N_benchmark density.

    Both densities use the same kind (corrected or plain truncation) and the
    same contour, so N_test = N_benchmark gives identically zero error.
    """
    if not q > 0:
        raise DomainError("q must be positive")
    x = np.linspace(0.05, 6.0, 200) if x is None else np.asarray(x, dtype=float)
    cfg = cfg or InversionConfig(v_max=100.0, n_mellin=2000)
    kind = "corrected" if correction else "truncated"
    bench_roots = solve_real(model, q, max(N_test, N_benchmark))
    zeta1 = float(bench_roots.zeta[0])
    c = cfg.c if cfg.c is not None else min(1.0, 0.5 * (1 + zeta1))
    out = {}
    for N in sorted({N_test, N_benchmark}):
        ev = mellin_eval(model, q, N, kind, bench_roots)
        out[N] = inverse_mellin_density(ev, x, cfg, c=c)
    err = out[N_test].p - out[N_benchmark].p
    resid = max(float(np.max(r.imag_residual)) for r in out.values())
    return DensityReport(x, out[N_test].p, out[N_benchmark].p, np.abs(err),
                         float(np.max(np.abs(err))), resid, kind)
