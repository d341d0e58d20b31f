import numpy as np
import pytest

from mero_asian.model import ThetaModel
from mero_asian.pricing import PricingRequest, price

BASE = dict(c1=0.15, c2=0.3, alpha1=1.5, alpha2=1.5, beta1=2.0, beta2=2.0)
SETS = {"I": dict(j=1, sigma=0.1), "II": dict(j=2, sigma=0.0)}
R = 0.03


def risk_neutral(name, r=R):
    return ThetaModel.risk_neutral(r, **SETS[name], **BASE)


def fixed_mu(name, mu=0.1):
    return ThetaModel(mu=mu, **SETS[name], **BASE)


@pytest.fixture(scope="session")
def set_I():
    return risk_neutral("I")


@pytest.fixture(scope="session")
def set_II():
    return risk_neutral("II")


@pytest.fixture(scope="session", params=["I", "II"])
def any_set(request):
    return risk_neutral(request.param)


@pytest.fixture(scope="session", params=["I", "II"])
def density_set(request):
    return fixed_mu(request.param)


def root_floor(model, z):
    """Smallest residual |psi(z) - q| attainable at z in double precision."""
    z = np.asarray(z, dtype=complex)
    return 8 * np.spacing(np.abs(z)) * np.abs(model.dpsi(z, strict=False))


def mp_theta_psi(name, r=R, mu=None, dps=40):
    """Independent arbitrary-precision closed form of psi (gamma, mu calibrated)."""
    import mpmath as mp

    p = dict(SETS[name], **BASE)
    j, sig = p["j"], mp.mpf(p["sigma"])

    def jump(z):
        w1 = mp.sqrt((p["alpha1"] - z) / mp.mpf(p["beta1"]))
        w2 = mp.sqrt((p["alpha2"] + z) / mp.mpf(p["beta2"]))
        t = (p["c1"] * mp.pi * w1 ** (2 * j - 1) * mp.coth(mp.pi * w1)
             + p["c2"] * mp.pi * w2 ** (2 * j - 1) * mp.coth(mp.pi * w2))
        return (-1) ** j * t

    with mp.workdps(dps):
        gam = -jump(mp.mpf(0))
        mu = mp.mpf(r) - (sig ** 2 / 2 + gam + jump(mp.mpf(1))) if mu is None else mp.mpf(mu)

    def psi(z):
        with mp.workdps(dps):
            z = mp.mpmathify(z)
            return +(sig ** 2 * z ** 2 / 2 + mu * z + gam + jump(z))

    return psi


_PRICES = {}


def cached_price(model, req):
    """price() memoized on the (frozen) model and request for the whole session."""
    key = (model, req)
    if key not in _PRICES:
        _PRICES[key] = price(model, req)
    return _PRICES[key]


def table_price(name, method, N, profile="table", **kw):
    return cached_price(risk_neutral(name), PricingRequest.from_profile(profile, method=method, N=N, **kw))


ACCEPTANCE_LINES = []


def report(criterion, ok, detail):
    """Record one PASS/FAIL line for the acceptance summary."""
    line = f"{'PASS' if ok else 'FAIL'}  {criterion}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
