"""Numerical CDFs for the chi-square / F family used by the swap bounds.

Everything here is a cumulative probability: central and noncentral
chi-square, central and noncentral F, and the distribution of signed
linear combinations of independent chi-squares (which covers the
generalized F ratio).  Noncentral laws are evaluated as Poisson mixtures
of central laws with an explicit bound on the neglected tail; mixture
probabilities of signed chi-square combinations are evaluated by numerical
inversion of the characteristic function (Imhof integrand) with the
achieved accuracy reported, never assumed.

Only CDF-style evaluations are provided; densities and quantiles are out
of scope.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

__all__ = [
    "AccuracyError",
    "WeightedChiSquareMix",
    "QuadFormResult",
    "chi2_cdf",
    "chi2_sf",
    "noncentral_chi2_cdf",
    "f_cdf",
    "f_sf",
    "noncentral_f_cdf",
    "quadform_below_zero",
    "generalized_f_below_one",
]

# Poisson-mixture series: per-side neglected mass target and term cap.
_SERIES_TAIL = 5e-13
_SERIES_CAP = 100_000
# Probabilities provably below this threshold collapse to 0.0 (or 1.0 for
# the complement); the proof is a rigorous bound, not a truncation.
_PROVABLE_EPS = 5e-14


class AccuracyError(ArithmeticError):
    """A numerical routine could not meet its accuracy contract.

    Carries the achieved error estimate in ``achieved`` when available.
    """

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


def _check_dof(dof, name="dof"):
    if not isinstance(dof, (int, np.integer)) or dof < 1:
        raise ValueError(f"{name} must be a positive integer, got {dof!r}")
    return int(dof)


def _check_x(x):
    x = float(x)
    if math.isnan(x) or x < 0.0:
        raise ValueError(f"argument must be nonnegative, got {x!r}")
    return x


def _check_noncentrality(delta):
    delta = float(delta)
    if math.isnan(delta) or delta < 0.0:
        raise ValueError(f"noncentrality must be nonnegative, got {delta!r}")
    return delta


def chi2_cdf(x, dof):
    """P(chi2_dof <= x) for a real chi-square with ``dof`` degrees of freedom."""
    x = _check_x(x)
    dof = _check_dof(dof)
    return float(special.gammainc(0.5 * dof, 0.5 * x))


def chi2_sf(x, dof):
    """Complement of :func:`chi2_cdf`, computed on the direct branch."""
    x = _check_x(x)
    dof = _check_dof(dof)
    return float(special.gammaincc(0.5 * dof, 0.5 * x))


def _beta_point(x, dof_num, dof_den):
    # F_{d1,d2} <= x  <=>  Beta(d1/2, d2/2) <= d1 x / (d1 x + d2)
    if math.isinf(x):
        return 1.0
    return dof_num * x / (dof_num * x + dof_den)


def f_cdf(x, dof_num, dof_den):
    """P(F <= x) for a central F with (dof_num, dof_den) degrees of freedom.

    Evaluated through the regularized incomplete beta function.
    """
    x = _check_x(x)
    dof_num = _check_dof(dof_num, "dof_num")
    dof_den = _check_dof(dof_den, "dof_den")
    t = _beta_point(x, dof_num, dof_den)
    return float(special.betainc(0.5 * dof_num, 0.5 * dof_den, t))


def f_sf(x, dof_num, dof_den):
    """Complement of :func:`f_cdf` on the direct branch (accurate when tiny)."""
    x = _check_x(x)
    dof_num = _check_dof(dof_num, "dof_num")
    dof_den = _check_dof(dof_den, "dof_den")
    t = _beta_point(x, dof_num, dof_den)
    # I_{1-t}(b, a) = 1 - I_t(a, b), evaluated without cancellation
    return float(special.betainc(0.5 * dof_den, 0.5 * dof_num, 1.0 - t))


def _poisson_cdf(k, lam):
    # P(Poisson(lam) <= k), k integer >= -1
    if k < 0:
        return 0.0
    return float(special.gammaincc(k + 1.0, lam))


def _poisson_sf(k, lam):
    # P(Poisson(lam) > k)
    if k < 0:
        return 1.0
    return float(special.gammainc(k + 1.0, lam))


def _poisson_mixture(lam, term_cdf, term_sf):
    """Sum w_k * term_cdf(k) over the Poisson(lam) weights w_k.

    ``term_cdf(ks)`` must be vectorized and nonincreasing in k (true for
    every central-law CDF indexed by its dof), ``term_sf`` its complement.
    The neglected window tails are bounded explicitly; if the window would
    exceed the term cap the value is either proven to be 0/1 within
    ``_PROVABLE_EPS`` or an :class:`AccuracyError` is raised.
    """
    if lam == 0.0:
        return float(term_cdf(np.array([0]))[0])

    mode = int(lam)
    half = 10 + int(math.ceil(9.0 * math.sqrt(lam)))
    while True:
        k_lo = max(0, mode - half)
        k_hi = mode + half
        if k_hi - k_lo + 1 > _SERIES_CAP:
            return _mixture_extreme(lam, term_cdf, term_sf)
        left = _poisson_cdf(k_lo - 1, lam)
        right = _poisson_sf(k_hi, lam)
        if left < _SERIES_TAIL and right < _SERIES_TAIL:
            break
        half *= 2

    ks = np.arange(k_lo, k_hi + 1, dtype=np.float64)
    log_w = ks * math.log(lam) - lam - special.gammaln(ks + 1.0)
    weights = np.exp(log_w)
    vals = term_cdf(ks)
    total = float(np.dot(weights, vals))
    # neglected: left tail terms are <= 1, right tail terms <= vals[-1]
    neglected = left + right * float(vals[-1])
    if neglected > 1e-12:
        raise AccuracyError(
            f"poisson mixture tail bound {neglected:.2e} exceeds 1e-12",
            achieved=neglected,
        )
    return min(total, 1.0)


def _mixture_extreme(lam, term_cdf, term_sf):
    """Resolve a mixture whose Poisson window exceeds the term cap.

    The value is returned only when a rigorous bound pins it within
    ``_PROVABLE_EPS`` of 0 or 1; otherwise the series is declared
    non-convergent.
    """
    # upper bound: P <= P(K <= k0) + term_cdf(k0 + 1)   (terms decrease in k)
    k0 = int(lam / 2.0)
    upper = _poisson_cdf(k0, lam) + float(term_cdf(np.array([k0 + 1.0]))[0])
    if upper < _PROVABLE_EPS:
        return 0.0
    # lower bound: P >= term_cdf(k1) * P(K <= k1), so
    # 1 - P <= term_sf(k1) + P(K > k1)
    k1 = int(2.0 * lam) + 1
    comp = float(term_sf(np.array([float(k1)]))[0]) + _poisson_sf(k1, lam)
    if comp < _PROVABLE_EPS:
        return 1.0
    raise AccuracyError(
        f"poisson mixture needs more than {_SERIES_CAP} terms "
        f"(noncentrality/2 = {lam:.3e}) and the value is not provably 0 or 1"
    )


def noncentral_chi2_cdf(x, dof, noncentrality):
    """P(chi2_dof(noncentrality) <= x), noncentrality = ||mean||^2.

    Poisson mixture of central chi-square CDFs; neglected tail below 1e-12
    or an :class:`AccuracyError` is raised.  ``noncentrality = 0`` reduces
    to :func:`chi2_cdf` through the same code path.
    """
    x = _check_x(x)
    dof = _check_dof(dof)
    delta = _check_noncentrality(noncentrality)
    if x == 0.0:
        return 0.0
    half_x = 0.5 * x
    half_d = 0.5 * dof

    def term_cdf(ks):
        return special.gammainc(half_d + ks, half_x)

    def term_sf(ks):
        return special.gammaincc(half_d + ks, half_x)

    return _poisson_mixture(0.5 * delta, term_cdf, term_sf)


def noncentral_f_cdf(x, dof_num, dof_den, noncentrality):
    """P(F_{dof_num,dof_den}(noncentrality) <= x).

    The noncentrality sits in the numerator chi-square.  Mixture of
    central incomplete-beta terms; ``noncentrality = 0`` equals
    :func:`f_cdf` bit for bit.
    """
    x = _check_x(x)
    dof_num = _check_dof(dof_num, "dof_num")
    dof_den = _check_dof(dof_den, "dof_den")
    delta = _check_noncentrality(noncentrality)
    if x == 0.0:
        return 0.0
    t = _beta_point(x, dof_num, dof_den)
    a = 0.5 * dof_num
    b = 0.5 * dof_den

    def term_cdf(ks):
        return special.betainc(a + ks, b, t)

    def term_sf(ks):
        return special.betainc(b, a + ks, 1.0 - t)

    return _poisson_mixture(0.5 * delta, term_cdf, term_sf)


@dataclass(frozen=True)
class WeightedChiSquareMix:
    """A positively weighted sum of independent central chi-squares."""

    weights: tuple
    dofs: tuple

    def __post_init__(self):
        weights = tuple(float(w) for w in self.weights)
        dofs = tuple(_check_dof(d) for d in self.dofs)
        if len(weights) == 0:
            raise ValueError("mix must have at least one component")
        if len(weights) != len(dofs):
            raise ValueError("weights and dofs must pair up")
        if any(not math.isfinite(w) or w <= 0.0 for w in weights):
            raise ValueError("all mix weights must be positive and finite")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "dofs", dofs)

    @property
    def total_dof(self):
        return sum(self.dofs)


@dataclass(frozen=True)
class QuadFormResult:
    """Probability plus the achieved absolute-accuracy estimate."""

    probability: float
    accuracy: float


def quadform_below_zero(mix_pos, mix_neg, target_accuracy=1e-6):
    """P(sum_i a_i xi_i - sum_j b_j nu_j < 0) for independent chi-squares.

    Characteristic-function inversion on the Imhof integrand

        P = 1/2 - (1/pi) * int_0^inf sin(theta(u)) / (u * rho(u)) du

    with theta(u) = (1/2) [sum f_i atan(a_i u) - sum g_j atan(b_j u)] and
    log rho(u) = (1/4) sum_r h_r log(1 + w_r^2 u^2).  The integration limit
    comes from the analytic envelope bound 1/(u rho(u)) <= u^{-1-K/2} after
    scale normalization; quadrature breakpoints are spread logarithmically
    so that widely separated weight scales cannot hide the oscillatory
    region from the adaptive rule.

    Returns a :class:`QuadFormResult`; raises :class:`AccuracyError` if the
    achieved estimate exceeds ``target_accuracy``.
    """
    if not isinstance(mix_pos, WeightedChiSquareMix):
        mix_pos = WeightedChiSquareMix(*mix_pos)
    if not isinstance(mix_neg, WeightedChiSquareMix):
        mix_neg = WeightedChiSquareMix(*mix_neg)

    w_pos = np.asarray(mix_pos.weights)
    w_neg = np.asarray(mix_neg.weights)
    f_pos = np.asarray(mix_pos.dofs, dtype=np.float64)
    f_neg = np.asarray(mix_neg.dofs, dtype=np.float64)

    # scale invariance: normalize to unit weighted geometric mean
    total_dof = float(f_pos.sum() + f_neg.sum())
    log_scale = (np.dot(f_pos, np.log(w_pos)) + np.dot(f_neg, np.log(w_neg))) / total_dof
    a = w_pos * math.exp(-log_scale)
    b = w_neg * math.exp(-log_scale)

    # tail: for u >= U, 1/(u rho(u)) <= u^{-1 - K/2} (unit geometric mean),
    # so the neglected tail is below 2 / (K U^{K/2})
    eps_tail = 1e-12
    exp_u = 2.0 / total_dof
    upper = (2.0 / (total_dof * eps_tail)) ** exp_u

    half_f_pos = 0.5 * f_pos
    half_f_neg = 0.5 * f_neg

    def integrand(u):
        theta = np.dot(half_f_pos, np.arctan(a * u)) - np.dot(
            half_f_neg, np.arctan(b * u)
        )
        log_rho = 0.25 * (
            np.dot(f_pos, np.log1p((a * u) ** 2))
            + np.dot(f_neg, np.log1p((b * u) ** 2))
        )
        if u == 0.0:
            return np.dot(half_f_pos, a) - np.dot(half_f_neg, b)
        return math.sin(theta) * math.exp(-log_rho) / u

    # force the adaptive rule to visit every magnitude scale down to 13
    # decades below the truncation point (oscillation onset can sit far
    # below U when the weights span many orders of magnitude)
    breaks = np.geomspace(upper * 1e-13, upper, 53)[:-1]
    out = integrate.quad(
        integrand,
        0.0,
        upper,
        points=list(breaks),
        epsabs=1e-13,
        epsrel=1e-11,
        limit=4000,
        full_output=True,
    )
    value, abserr = out[0], out[1]
    if len(out) > 3:
        raise AccuracyError(
            f"Imhof quadrature failed: {out[3].strip()}",
            achieved=(abserr + eps_tail) / math.pi,
        )
    accuracy = (abserr + eps_tail) / math.pi
    if accuracy > target_accuracy:
        raise AccuracyError(
            f"Imhof accuracy {accuracy:.2e} exceeds target {target_accuracy:.2e}",
            achieved=accuracy,
        )
    prob = 0.5 - value / math.pi
    prob = min(1.0, max(0.0, prob))
    return QuadFormResult(prob, accuracy)


def generalized_f_below_one(weights, component_dof, den_dof, target_accuracy=1e-6):
    """P(GF < 1) for the generalized F ratio used by the covariance bound.

    The numerator is sum_i weights[i] * xi_i with each xi_i chi-square on
    ``component_dof`` degrees of freedom, normalized by the total numerator
    dof; the denominator is an independent chi-square on ``den_dof``
    degrees of freedom, normalized by ``den_dof``.  Delegates to
    :func:`quadform_below_zero` with the signed coefficients of

        den_dof * sum_i w_i xi_i  -  (p * component_dof) * nu  <  0.
    """
    weights = [float(w) for w in weights]
    if len(weights) == 0:
        raise ValueError("need at least one numerator weight")
    component_dof = _check_dof(component_dof, "component_dof")
    den_dof = _check_dof(den_dof, "den_dof")
    num_total = len(weights) * component_dof
    mix_pos = WeightedChiSquareMix(
        tuple(w * den_dof for w in weights), (component_dof,) * len(weights)
    )
    mix_neg = WeightedChiSquareMix((float(num_total),), (den_dof,))
    return quadform_below_zero(mix_pos, mix_neg, target_accuracy=target_accuracy)
