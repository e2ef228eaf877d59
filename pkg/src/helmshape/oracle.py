"""Ground-truth generators for validation: analytic eigenpairs,
log-log rate fits, and Richardson extrapolation tables.

Bessel zeros are pinned from standard tables (guard digits beyond 1e-10)
instead of being computed at runtime, which keeps root finders out of the
trust base.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import FitError, InvalidArgumentError

# zeros of J_m (Dirichlet disk modes), m -> [first, second, ...]
BESSEL_J_ZEROS = {
    0: [2.404825557695773, 5.520078110286311, 8.653727912911013],
    1: [3.831705970207512, 7.015586669815619, 10.173468135062722],
    2: [5.135622301840683, 8.417244140399855, 11.619841172149059],
    3: [6.380161895923984, 9.761023129981670, 13.015200721698434],
    4: [7.588342434503804, 11.064709488501185, 14.372536671617590],
}

# zeros of J_m' (Neumann disk modes); j'_{0,k} are the zeros of J_1
BESSEL_JPRIME_ZEROS = {
    0: [3.831705970207512, 7.015586669815619, 10.173468135062722],
    1: [1.841183781340659, 5.331442773525033, 8.536316366346286],
    2: [3.054236928227140, 6.706133194158459, 9.969467823526285],
    3: [4.201188941210528, 8.015236598375951, 11.345924310743006],
    4: [5.317553126083997, 9.282396285241617, 12.681908442638891],
}


@dataclass(frozen=True)
class ConvergenceFit:
    """Least-squares power-law fit value ~ C * parameter^rate."""

    samples: tuple
    fitted_rate: float
    r_squared: float


@dataclass(frozen=True)
class AnalyticEig:
    lam: float
    eigenfunction: Callable[[np.ndarray], np.ndarray]
    label: str


def analytic_eigs(domain: str, bc: str, count: int) -> list[AnalyticEig]:
    """Smallest analytic Laplace eigenpairs of the unit square or unit disk.

    Eigenfunctions are L2-normalized on the domain. Square modes use
    separation of variables; disk modes use Bessel functions with tabulated
    zeros. The unit square is [0,1]^2; the unit disk is centred at the origin.
    """
    if count < 1:
        raise InvalidArgumentError("count must be >= 1")
    domain = domain.lower()
    bc = bc.lower()
    if domain == "square" and bc == "dirichlet":
        return _square_eigs(count, dirichlet=True)
    if domain == "square" and bc == "neumann":
        return _square_eigs(count, dirichlet=False)
    if domain == "disk" and bc == "dirichlet":
        return _disk_eigs(count, dirichlet=True)
    if domain == "disk" and bc == "neumann":
        return _disk_eigs(count, dirichlet=False)
    raise InvalidArgumentError(f"unsupported domain/bc: {domain}/{bc}")


def _square_eigs(count, dirichlet):
    start = 1 if dirichlet else 0
    modes = []
    bound = count + 8
    for m in range(start, bound):
        for n in range(start, bound):
            modes.append((math.pi ** 2 * (m * m + n * n), m, n))
    modes.sort(key=lambda t: (t[0], t[1], t[2]))
    out = []
    for lam, m, n in modes[:count]:
        out.append(AnalyticEig(lam, _square_mode(m, n, dirichlet),
                               f"{'sin' if dirichlet else 'cos'}({m},{n})"))
    return out


def _square_mode(m, n, dirichlet):
    if dirichlet:
        def fn(p):
            p = np.atleast_2d(p)
            return 2.0 * np.sin(m * math.pi * p[:, 0]) * np.sin(n * math.pi * p[:, 1])
        return fn

    cm = 1.0 if m == 0 else math.sqrt(2.0)
    cn = 1.0 if n == 0 else math.sqrt(2.0)

    def fn(p):
        p = np.atleast_2d(p)
        return (cm * np.cos(m * math.pi * p[:, 0])) * (cn * np.cos(n * math.pi * p[:, 1]))

    return fn


def _disk_eigs(count, dirichlet):
    from scipy.special import jv

    zeros = BESSEL_J_ZEROS if dirichlet else BESSEL_JPRIME_ZEROS
    modes = []
    if not dirichlet:
        modes.append((0.0, 0, 0, "const"))
    for m, zs in zeros.items():
        for k, z in enumerate(zs, start=1):
            for parity in (("cos", "sin") if m > 0 else ("cos",)):
                modes.append((z * z, m, k, parity))
    modes.sort(key=lambda t: (t[0], t[1], t[2], t[3]))
    out = []
    for lam, m, k, parity in modes[:count]:
        if parity == "const":
            out.append(AnalyticEig(0.0, lambda p: np.full(len(np.atleast_2d(p)), 1.0 / math.sqrt(math.pi)),
                                   "const"))
            continue
        z = math.sqrt(lam)
        if dirichlet:
            radial_norm_sq = 0.5 * jv(m + 1, z) ** 2
        else:
            radial_norm_sq = 0.5 * (1.0 - m * m / (z * z)) * jv(m, z) ** 2
        ang_norm_sq = math.pi if m > 0 else 2.0 * math.pi
        norm = math.sqrt(ang_norm_sq * radial_norm_sq)

        def fn(p, m=m, z=z, parity=parity, norm=norm):
            p = np.atleast_2d(p)
            r = np.hypot(p[:, 0], p[:, 1])
            th = np.arctan2(p[:, 1], p[:, 0])
            ang = np.cos(m * th) if parity == "cos" else np.sin(m * th)
            return jv(m, z * r) * ang / norm

        out.append(AnalyticEig(lam, fn, f"J{m},{k},{parity}"))
    return out


def fit_rate(samples: Sequence[tuple[float, float]]) -> ConvergenceFit:
    """Log-log least-squares slope of value against parameter."""
    samples = tuple((float(p), float(v)) for p, v in samples)
    if len(samples) < 3:
        raise FitError("need at least 3 samples")
    params = np.array([p for p, _ in samples])
    values = np.array([v for _, v in samples])
    if not (np.diff(params) < 0).all():
        raise FitError("parameters must be strictly decreasing")
    if (params <= 0).any() or (values <= 0).any():
        raise FitError("rate fit requires positive parameters and values")
    x = np.log(params)
    y = np.log(values)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot < 1e-300 else 1.0 - float((resid ** 2).sum()) / ss_tot
    return ConvergenceFit(samples=samples, fitted_rate=float(slope), r_squared=r2)


def linear_regression(x: Sequence[float], y: Sequence[float]):
    """Slope, intercept and R^2 of ordinary least squares y = a x + b."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    a, b = np.polyfit(x, y, 1)
    resid = y - (a * x + b)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot < 1e-300 else 1.0 - float((resid ** 2).sum()) / ss_tot
    return float(a), float(b), r2


@dataclass(frozen=True)
class RichardsonTable:
    """Extrapolation of a sequence D(t) = L + C t^p + higher order."""

    t_values: tuple
    d_values: tuple
    columns: tuple
    limit: float
    observed_orders: tuple


def richardson(t_values: Sequence[float], d_values: Sequence[float],
               order: float = 2.0) -> RichardsonTable:
    """Richardson-extrapolate D(t) assuming a leading error of t^order.

    t_values must be strictly decreasing; the observed orders come from
    successive differences of the raw sequence.
    """
    t = np.asarray(t_values, dtype=float)
    d = np.asarray(d_values, dtype=float)
    if len(t) != len(d) or len(t) < 1:
        raise InvalidArgumentError("matching non-empty t and D sequences required")
    if len(t) > 1 and not (np.diff(t) < 0).all():
        raise InvalidArgumentError("t_values must be strictly decreasing")
    cols = [d.copy()]
    cur = d.copy()
    for level in range(1, len(t)):
        nxt = np.empty(len(t) - level)
        for i in range(len(nxt)):
            t1, t2 = t[i], t[i + level]
            w = (t1 / t2) ** order
            nxt[i] = (w * cur[i + 1] - cur[i]) / (w - 1.0)
        cols.append(nxt)
        cur = nxt
    orders = []
    for i in range(len(t) - 2):
        num = abs(d[i] - d[i + 1])
        den = abs(d[i + 1] - d[i + 2])
        if den > 0 and num > 0 and t[i + 1] != t[i + 2]:
            orders.append(math.log(num / den) / math.log(t[i] / t[i + 1]))
    limit = float(cols[-1][0]) if len(cols[-1]) else float(d[-1])
    return RichardsonTable(
        t_values=tuple(float(v) for v in t),
        d_values=tuple(float(v) for v in d),
        columns=tuple(tuple(float(v) for v in c) for c in cols),
        limit=limit,
        observed_orders=tuple(orders),
    )
