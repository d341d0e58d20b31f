"""Roots of psi(z) = q for meromorphic Laplace exponents.

For real q > 0 the roots zeta_n, -zeta_hat_n are real and interlace with the
poles rho_n, -rho_hat_n, so each one is bracketed between consecutive poles.
Complex q is reached by numerical continuation from the real roots at Re q.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import BracketError, ContinuationError, ConvergenceError, DomainError

ROOT_TOL = 1e-12
BISECT_WIDTH = 1e-6
MARGINS = (1e-9, 1e-12, 1e-15)
MAX_STEPS = 1024


@dataclass(frozen=True, eq=False)
class RootSet:
    """Roots zeta_n (positive chain) and zeta_hat_n (roots are -zeta_hat_n)."""

    q: complex
    zeta: np.ndarray
    zeta_hat: np.ndarray
    res_zeta: np.ndarray
    res_zeta_hat: np.ndarray
    model_kind: str

    @property
    def M(self) -> int:
        return len(self.zeta)

    @property
    def max_residual(self) -> float:
        return float(max(np.max(self.res_zeta), np.max(self.res_zeta_hat)))

    def as_z(self) -> np.ndarray:
        """All roots as points of the complex plane, positive chain first."""
        return np.concatenate([self.zeta, -self.zeta_hat])

    def conj(self) -> "RootSet":
        return RootSet(np.conj(self.q), np.conj(self.zeta), np.conj(self.zeta_hat),
                       self.res_zeta, self.res_zeta_hat, self.model_kind)


@dataclass(frozen=True)
class InterlacingReport:
    ok_zeta: bool
    ok_zeta_hat: bool
    first_bad_zeta: int | None
    first_bad_zeta_hat: int | None

    @property
    def ok(self) -> bool:
        return self.ok_zeta and self.ok_zeta_hat


def _freeze(*arrays):
    for a in arrays:
        a.setflags(write=False)


def _side_brackets(poles: np.ndarray, M: int):
    """Lower/upper pole for the n-th root on one side, n = 1..M."""
    P = len(poles)
    if M - 1 > P:
        raise BracketError(
            f"requested {M} roots but only {P} poles: no sign change beyond root {P + 1}")
    lo = np.concatenate([[0.0], poles[:M - 1]])
    hi = np.full(M, np.inf)
    k = min(M, P)
    hi[:k] = poles[:k]
    return lo, hi


def _sign_from_position(y, lo, hi):
    # nan (at a pole) takes the sign of the nearer pole: -inf at lo, +inf at hi
    return np.where(y - lo < hi - y, -1.0, 1.0)


def solve_real(model, q: float, M: int, tol: float = ROOT_TOL) -> RootSet:
    """First M roots on each side of psi(z) = q for real q > 0."""
    q = float(q)
    if q <= 0:
        raise DomainError("q must be positive")
    if M < 1:
        raise DomainError("M must be >= 1")
    return _solve_real_cached(model, q, int(M), float(tol))


@lru_cache(maxsize=2048)
def _solve_real_cached(model, q, M, tol):
    rho, rho_hat = model.poles(M)
    lo_p, hi_p = _side_brackets(np.asarray(rho, float), M)
    lo_m, hi_m = _side_brackets(np.asarray(rho_hat, float), M)
    lo = np.concatenate([lo_p, lo_m])
    hi = np.concatenate([hi_p, hi_m])
    sgn = np.concatenate([np.ones(M), -np.ones(M)])

    def F(y):
        v = model.psi(sgn * y, strict=False).real - q
        return np.where(np.isnan(v), _sign_from_position(y, lo, hi), v)

    # unbounded last bracket (hyper-exponential): grow until psi > q
    unb = np.isinf(hi)
    if np.any(unb):
        h = np.where(unb, np.maximum(2 * lo, lo + 1.0), hi)
        for _ in range(200):
            bad = unb & (F(np.where(unb, h, 0.5 * (lo + hi))) <= 0)
            if not np.any(bad):
                break
            h = np.where(bad, 2 * h, h)
        else:
            raise BracketError("psi does not exceed q beyond the last pole")
        hi = np.where(unb, h, hi)

    _check_end_signs(F, lo, hi)

    # bisection down to a narrow bracket
    for _ in range(400):
        wide = (hi - lo) > BISECT_WIDTH
        if not np.any(wide):
            break
        mid = 0.5 * (lo + hi)
        fm = F(mid)
        lo = np.where(wide & (fm < 0), mid, lo)
        hi = np.where(wide & (fm >= 0), mid, hi)

    # safeguarded Newton polish
    y = 0.5 * (lo + hi)
    qs = tol * max(1.0, q)
    done = np.zeros_like(y, dtype=bool)
    for _ in range(100):
        f, df = model.psi_dpsi(sgn * y, strict=False)
        f = f.real - q
        df = sgn * df.real
        done |= np.abs(f) <= qs
        lo = np.where(f < 0, y, lo)
        hi = np.where(f > 0, y, hi)
        with np.errstate(invalid="ignore", divide="ignore"):
            y1 = y - f / df
        out = ~((y1 > lo) & (y1 < hi)) | ~np.isfinite(y1)
        y1 = np.where(out, 0.5 * (lo + hi), y1)
        tiny = np.abs(y1 - y) <= 4 * np.spacing(np.abs(y))
        y = np.where(done, y, y1)
        done |= tiny | ((hi - lo) <= 4 * np.spacing(np.abs(y)))
        if np.all(done):
            break
    else:
        raise ConvergenceError("Newton polish did not converge")

    res = np.abs(model.psi(sgn * y).real - q)
    zeta, zeta_hat = y[:M].copy(), y[M:].copy()
    rz, rzh = res[:M].copy(), res[M:].copy()
    _freeze(zeta, zeta_hat, rz, rzh)
    return RootSet(complex(q), zeta, zeta_hat, rz, rzh, model.kind)


def _check_end_signs(F, lo, hi):
    """Every bracket must show psi - q < 0 at its lower end, > 0 at its upper end."""
    pending = np.ones_like(lo, dtype=bool)
    for m in MARGINS:
        a = np.where(lo > 0, lo * (1 + m), lo)
        b = hi * (1 - m)
        ok = (F(a) < 0) & (F(b) > 0)
        pending &= ~ok
        if not np.any(pending):
            return
    idx = int(np.flatnonzero(pending)[0])
    raise BracketError(f"no sign change in bracket {idx} ({lo[idx]}, {hi[idx]})")


def verify_interlacing(rootset: RootSet, poles) -> InterlacingReport:
    """Check 0 < zeta_1 < rho_1 < zeta_2 < ... on each side (1-based report)."""
    rho, rho_hat = poles

    def chain(roots, p):
        roots = np.real(roots)
        seq = [0.0]
        for n, z in enumerate(roots):
            seq.append(z)
            if n < len(p):
                seq.append(p[n])
        seq = np.asarray(seq)
        bad = np.flatnonzero(np.diff(seq) <= 0)
        if len(bad) == 0:
            return True, None
        # position k in seq holds root index (k+1)//2 for odd k
        k = int(bad[0]) + 1
        return False, (k + 1) // 2

    okz, bz = chain(rootset.zeta, np.asarray(rho))
    okh, bh = chain(rootset.zeta_hat, np.asarray(rho_hat))
    return InterlacingReport(okz, okh, bz, bh)


def _neighbour_scale(z, poles):
    d = np.abs(z[:, None] - z[None, :])
    np.fill_diagonal(d, np.inf)
    dp = np.abs(z[:, None] - poles[None, :]).min(axis=1)
    return np.minimum(d.min(axis=1), dp)


def _newton_to(model, z, q, tol, iters=40):
    """Damped Newton on psi(z) = q; a step is halved until |psi - q| drops."""
    qs = tol * max(1.0, abs(q))
    z = z.copy()
    r = model.psi(z, strict=False) - q
    done = np.abs(r) <= qs
    for _ in range(iters):
        act = np.flatnonzero(~done)
        if len(act) == 0:
            return z, True
        za, ra = z[act], r[act]
        dz = ra / model.dpsi(za, strict=False)
        if not np.all(np.isfinite(dz)):
            return z, False
        tiny = np.abs(dz) <= 1e-14 * np.maximum(1.0, np.abs(za))
        lam = 1.0
        pend = np.arange(len(act))
        znew, rnew = za.copy(), ra.copy()
        for _ in range(10):
            zt = za[pend] - lam * dz[pend]
            rt = model.psi(zt, strict=False) - q
            good = (np.abs(rt) < np.abs(ra[pend])) | tiny[pend]
            znew[pend[good]] = zt[good]
            rnew[pend[good]] = rt[good]
            pend = pend[~good]
            if len(pend) == 0:
                break
            lam /= 2
        z[act], r[act] = znew, rnew
        done[act] = (np.abs(rnew) <= qs) | tiny | (np.abs(znew - za) <= 8 * np.spacing(np.abs(za)))
    return z, bool(np.all(done)) and bool(np.all(np.isfinite(r)))


def _advance(model, z, qa, qb, poles, tol, depth):
    """Move all roots from psi = qa to psi = qb, halving the step on failure."""
    df = model.dpsi(z, strict=False)
    z1 = z + (qb - qa) / df
    scale = _neighbour_scale(z, poles)
    if np.all(np.isfinite(z1)):
        z2, ok = _newton_to(model, z1, qb, tol)
        if ok and np.all(np.abs(z2 - z) <= 0.5 * scale):
            return z2
    if depth <= 0:
        raise ContinuationError(f"continuation stalled between q={qa} and q={qb}")
    qm = 0.5 * (qa + qb)
    zm = _advance(model, z, qa, qm, poles, tol, depth - 1)
    return _advance(model, zm, qm, qb, poles, tol, depth - 1)


def _pole_points(model, M):
    rho, rho_hat = model.poles(M + 1)
    return np.concatenate([np.asarray(rho, complex), -np.asarray(rho_hat, complex)])


def _check_collisions(z):
    d = np.abs(z[:, None] - z[None, :])
    np.fill_diagonal(d, np.inf)
    if np.min(d) <= 1e-9 * max(1.0, float(np.max(np.abs(z)))):
        raise ContinuationError("two tracked roots collided")


def _rootset(model, q, z, M):
    res = np.abs(model.psi(z) - q)
    zeta, zeta_hat = z[:M].copy(), -z[M:]
    rz, rzh = res[:M].copy(), res[M:].copy()
    _freeze(zeta, zeta_hat, rz, rzh)
    return RootSet(complex(q), zeta, zeta_hat, rz, rzh, model.kind)


def solve_complex(model, q: complex, M: int, steps: int = 32, tol: float = ROOT_TOL) -> RootSet:
    """Roots for complex q (Re q > 0) by continuation along Re q + i*tau*Im q."""
    q = complex(q)
    if q.real <= 0:
        raise DomainError("Re q must be positive")
    base = solve_real(model, q.real, M, tol)
    if q.imag == 0:
        return base
    poles = _pole_points(model, M)
    z0 = base.as_z().astype(complex)
    while True:
        try:
            z = z0
            taus = np.linspace(0.0, 1.0, steps + 1)
            # each step may be halved locally into up to MAX_STEPS pieces
            depth = int(np.log2(MAX_STEPS))
            for ta, tb in zip(taus[:-1], taus[1:]):
                z = _advance(model, z, q.real + 1j * ta * q.imag, q.real + 1j * tb * q.imag,
                             poles, tol, depth)
            _check_collisions(z)
            return _rootset(model, q, z, M)
        except ContinuationError:
            steps *= 2
            if steps > MAX_STEPS:
                raise


def iter_complex_path(model, q_re: float, q_im, M: int, tol: float = ROOT_TOL):
    """Yield RootSets at q_re + i*q_im[k] for a nondecreasing grid q_im >= 0.

    One continuation sweep up the vertical line visits every node, each step
    subdivided (up to MAX_STEPS pieces) where the Newton corrector needs it.
    Being a generator, the sweep can be abandoned once the caller has enough.
    """
    q_im = np.asarray(q_im, dtype=float)
    if np.any(np.diff(q_im) < 0) or (len(q_im) and q_im[0] < 0):
        raise DomainError("q_im must be nondecreasing and nonnegative")
    base = solve_real(model, q_re, M, tol)
    poles = _pole_points(model, M)
    depth = int(np.log2(MAX_STEPS))
    z = base.as_z().astype(complex)
    prev = complex(q_re)
    for v in q_im:
        qn = complex(q_re, v)
        if qn != prev:
            z = _advance(model, z, prev, qn, poles, tol, depth)
            _check_collisions(z)
            prev = qn
        yield base if v == 0 else _rootset(model, qn, z, M)


def solve_complex_path(model, q_re: float, q_im, M: int, tol: float = ROOT_TOL):
    """List of RootSets along q_re + i*q_im (see iter_complex_path)."""
    return list(iter_complex_path(model, q_re, q_im, M, tol))
