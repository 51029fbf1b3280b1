"""Detection scoring and extreme-value flow surprisingness.

Detection quality is measured as the F-measure over (role, account)
pairs, and sweeps aggregate into the area under the F-measure curve
over a normalized density axis. Flow surprisingness follows the
peaks-over-threshold recipe: sample many uniformly random flows of the
same size, fit a generalized Pareto distribution to the largest tail
fraction by maximum likelihood, and read the observed flow's mass off
the spliced CDF.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize, minimize_scalar

from .errors import (
    ConvergenceError,
    DataError,
    DegenerateFitError,
    InfeasibleSamplingError,
)
from .tensors import CoupledTensors

_XI_EXP_LIMIT = 1e-12  # below this |shape| the exponential branch applies
_XI_FLOOR = -0.5  # maximum likelihood is regular only for shape > -0.5


@dataclass(frozen=True)
class CurvePoint:
    """One sweep point: normalized injected density and the F-measure there."""

    density: float
    f_measure: float

    def __post_init__(self):
        if not 0.0 <= self.density <= 1.0:
            raise ValueError(f"density {self.density!r} outside [0, 1]")
        if not 0.0 <= self.f_measure <= 1.0:
            raise ValueError(f"f_measure {self.f_measure!r} outside [0, 1]")


@dataclass(frozen=True)
class GpFit:
    """Generalized Pareto tail fitted over a sampled mass distribution."""

    threshold: float
    shape: float
    scale: float
    n_samples: int
    epsilon: float
    sample: np.ndarray = field(repr=False)  # sorted ascending

    @property
    def n_exceedances(self) -> int:
        return math.ceil(self.epsilon * self.n_samples)


def f_measure(detected: Mapping[str, Iterable], truth: Mapping[str, Iterable]) -> float:
    """Harmonic precision/recall mean over (role, account) pairs.

    An account reported under the wrong role does not count. Empty
    truth is a caller error; an empty detection scores 0.
    """
    truth_pairs = {(role, a) for role, accts in truth.items() for a in accts}
    if not truth_pairs:
        raise ValueError("truth has no labeled accounts")
    detected_pairs = {(role, a) for role, accts in detected.items() for a in accts}
    tp = len(detected_pairs & truth_pairs)
    if not detected_pairs or tp == 0:
        return 0.0
    precision = tp / len(detected_pairs)
    recall = tp / len(truth_pairs)
    return 2 * precision * recall / (precision + recall)


def fauc(curve: Sequence[CurvePoint]) -> float:
    """Area under the F-measure curve, normalized by the density span."""
    if len(curve) < 2:
        raise ValueError("need at least two curve points")
    d = np.array([p.density for p in curve])
    f = np.array([p.f_measure for p in curve])
    if np.any(np.diff(d) <= 0):
        raise ValueError("densities must be strictly increasing")
    return float(np.trapezoid(f, d) / (d[-1] - d[0]))


def sample_flow_masses(t: CoupledTensors, sizes, n_samples: int = 5000,
                       seed: int = 0) -> np.ndarray:
    """Total masses of uniformly random flows with the given role sizes.

    ``sizes`` is (|x|, |middle|, |destination|); each sample draws that
    many accounts per role without replacement and records the total
    mass the triple spans across all fibers.
    """
    kx, ky, kz = sizes
    nx, ny, nz = len(t.x_labels), len(t.y_labels), len(t.z_labels)
    if not (1 <= kx <= nx and 1 <= ky <= ny and 1 <= kz <= nz):
        raise InfeasibleSamplingError(
            f"sizes {sizes} infeasible for pools ({nx}, {ny}, {nz})"
        )
    if n_samples < 1:
        raise ValueError("n_samples must be positive")
    rng = np.random.default_rng(seed)
    fiber_y = t.fiber_y
    p, q = t._p, t._q
    masses = np.empty(n_samples)
    y_sel = np.zeros(ny, dtype=bool)
    for s in range(n_samples):
        xs = rng.choice(nx, kx, replace=False)
        ys = rng.choice(ny, ky, replace=False)
        zs = rng.choice(nz, kz, replace=False)
        y_sel[ys] = True
        total = 0.0
        for j in xs:
            lo, hi = p.row_indptr[j], p.row_indptr[j + 1]
            if hi > lo:
                keep = y_sel[fiber_y[p.row_col[lo:hi]]]
                total += p.row_val[lo:hi][keep].sum()
        for j in zs:
            lo, hi = q.row_indptr[j], q.row_indptr[j + 1]
            if hi > lo:
                keep = y_sel[fiber_y[q.row_col[lo:hi]]]
                total += q.row_val[lo:hi][keep].sum()
        masses[s] = total
        y_sel[ys] = False
    return masses


def gp_fit(masses, epsilon: float = 0.1) -> GpFit:
    """Fit a generalized Pareto tail to the largest ceil(epsilon * n) masses.

    The threshold is the largest non-tail value. Shape and scale
    maximize the exceedance likelihood over shape >= -0.5, the regime
    where the maximizer is regular (short-tailed data pins the shape at
    that boundary): quasi-Newton from the probability-weighted-moments
    start, cross-checked against a profile-likelihood line search,
    keeping whichever likelihood wins.
    """
    if not 0.0 < epsilon < 1.0:
        raise ValueError("epsilon must be in (0, 1)")
    masses = np.sort(np.asarray(masses, dtype=np.float64))
    n = len(masses)
    k = math.ceil(epsilon * n)
    if k < 20:
        raise DataError(f"only {k} exceedances; need at least 20")
    if k >= n:
        raise DataError("tail fraction swallows the whole sample")
    threshold = float(masses[n - k - 1])
    exceed = masses[n - k :] - threshold
    if np.ptp(exceed) == 0:
        raise DegenerateFitError("all exceedances identical; tail has no variation")

    candidates = []
    mean_log = math.log(max(exceed.mean(), 1e-300))
    for start in (_pwm_start(exceed), (0.1, mean_log), (0.5, mean_log)):
        res = minimize(
            _gp_nll, np.asarray(start), args=(exceed,),
            method="L-BFGS-B",
            bounds=[(_XI_FLOOR, 20.0), (mean_log - 40, mean_log + 40)],
            options={"gtol": 1e-8, "maxiter": 1000},
        )
        if res.success and np.isfinite(res.fun):
            candidates.append((float(res.fun), float(res.x[0]),
                               math.exp(float(res.x[1]))))
    profile = _profile_candidate(exceed)
    if profile is not None:
        candidates.append(profile)
    if not candidates:
        raise ConvergenceError(
            "generalized Pareto fit did not converge",
            diagnostics={"n_exceedances": int(k)},
        )
    _, shape, scale = min(candidates)
    return GpFit(
        threshold=threshold,
        shape=float(shape),
        scale=float(scale),
        n_samples=n,
        epsilon=epsilon,
        sample=masses,
    )


def surprisingness(fit: GpFit, observed_mass: float) -> float:
    """Spliced CDF of the sampled-mass distribution at ``observed_mass``.

    At the threshold this is exactly 1 - epsilon; above it the fitted
    tail takes over, so values near 1 mean the observed flow is far
    outside what same-size random flows produce.
    """
    u = fit.threshold
    if observed_mass > u:
        tail_cdf = _gp_cdf(observed_mass - u, fit.shape, fit.scale)
        return 1.0 - fit.epsilon * (1.0 - tail_cdf)
    body = fit.sample[: fit.n_samples - fit.n_exceedances]
    below = int(np.searchsorted(body, observed_mass, side="right"))
    return (1.0 - fit.epsilon) * below / len(body)


def gp_log_likelihood(fit: GpFit, exceedances) -> float:
    """Log-likelihood of exceedances under a fit (for diagnostics/tests)."""
    theta = np.array([fit.shape, math.log(fit.scale)])
    return -_gp_nll(theta, np.asarray(exceedances, dtype=np.float64))


def _profile_candidate(exceed: np.ndarray):
    """Best (nll, shape, scale) along the 1-D profile likelihood.

    With t = shape/scale the shape that maximizes the likelihood at
    fixed t is mean(log1p(t * y)), which collapses the problem to a
    line search over t in (-1/max(y), inf); a dense scan plus a golden
    polish is immune to the support-boundary cliffs that trip
    quasi-Newton steps for short tails.
    """
    y = exceed
    n = len(y)
    y_max = float(y.max())
    mean_y = float(y.mean())

    def nll_at(t: float):
        if t == 0.0:
            return n * (math.log(mean_y) + 1.0), 0.0, mean_y
        shape = float(np.mean(np.log1p(t * y)))
        if shape < _XI_FLOOR or shape > 30.0:
            return math.inf, None, None
        scale = shape / t
        if scale <= 0 or not math.isfinite(scale):
            return math.inf, None, None
        return n * (math.log(scale) + shape + 1.0), shape, scale

    t_lo = -(1.0 - 1e-9) / y_max
    grid = np.concatenate([
        np.linspace(t_lo, -1e-12 / y_max, 120),
        [0.0],
        np.geomspace(1e-6 / mean_y, 1e4 / mean_y, 120),
    ])
    values = [nll_at(float(t)) for t in grid]
    best_i = int(np.argmin([v[0] for v in values]))
    if not math.isfinite(values[best_i][0]):
        return None
    lo = float(grid[max(0, best_i - 1)])
    hi = float(grid[min(len(grid) - 1, best_i + 1)])
    res = minimize_scalar(lambda t: min(nll_at(t)[0], 1e300), bounds=(lo, hi),
                          method="bounded",
                          options={"xatol": 1e-12 * (abs(hi) + abs(lo) + 1)})
    cands = [values[best_i], nll_at(float(res.x))]
    nll, shape, scale = min(cands)
    if shape is None:
        return None
    return nll, shape, scale


def _pwm_start(exceed: np.ndarray):
    """Probability-weighted-moments starting point (Hosking-Wallis style)."""
    y = np.sort(exceed)
    n = len(y)
    b0 = float(y.mean())
    pj = np.arange(n) / (n - 1)
    b1 = float(np.mean(pj * y))
    denom = b0 - 2 * b1
    if denom <= 0 or b0 <= 0:
        return 0.1, math.log(max(b0, 1e-300))
    shape = 2.0 - b0 / denom
    scale = 2.0 * b0 * b1 / denom
    shape = min(max(shape, -0.45), 5.0)
    if scale <= 0:
        scale = b0
    return float(shape), math.log(scale)


def _gp_nll(theta, y: np.ndarray) -> float:
    """Negative log-likelihood; scale optimized on the log axis."""
    shape, log_scale = float(theta[0]), float(theta[1])
    if log_scale > 700 or log_scale < -700:
        return 1e12
    scale = math.exp(log_scale)
    n = len(y)
    if abs(shape) < _XI_EXP_LIMIT:
        return n * log_scale + float(y.sum()) / scale
    z = 1.0 + shape * y / scale
    if np.any(z <= 0):
        return 1e12 + float(np.sum(np.minimum(z, 0) ** 2))
    return n * log_scale + (1.0 + 1.0 / shape) * float(np.log(z).sum())


def _gp_cdf(y: float, shape: float, scale: float) -> float:
    """CDF of the generalized Pareto exceedance distribution at y >= 0."""
    if y <= 0:
        return 0.0
    if abs(shape) < _XI_EXP_LIMIT:
        return 1.0 - math.exp(-y / scale)
    z = 1.0 + shape * y / scale
    if z <= 0:  # beyond the finite endpoint of a negative-shape tail
        return 1.0
    return 1.0 - z ** (-1.0 / shape)
