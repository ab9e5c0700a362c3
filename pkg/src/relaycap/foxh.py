"""Fox H-function evaluation on a vertical Mellin-Barnes contour.

The integrand is assembled in log space from complex log-Gamma factors
and exponentiated once per contour node, so products of huge Gamma
magnitudes cancel instead of overflowing.  One engine serves three
jobs: the function itself, its running integral from zero (the CDF
kernel), and fused sums of kernels that share a single argument scale.

Evaluation is vectorised over batches of argument values: the Gamma
product along the contour is computed once per refinement level and
the argument only enters through an oscillatory factor, which is the
cheap part.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (
    ContourAbscissaTooLarge,
    ContourNotConverged,
    DivergentIntegral,
    EmptyContourGap,
    IntegrandOverflow,
    InvalidOrder,
    NonPositiveScale,
    PoleAtNonPositiveInteger,
)

_LOG_2PI = math.log(2.0 * math.pi)
_LOG_PI = math.log(math.pi)

# Lanczos approximation, g = 607/128 with 15 coefficients.  Relative
# error stays at the few-ulp level on Re(z) >= 0.5.
_LANCZOS_G = 607.0 / 128.0
_LANCZOS_C = np.array([
    0.99999999999999709182,
    57.156235665862923517,
    -59.597960355475491248,
    14.136097974741747174,
    -0.49191381609762019978,
    0.33994649984811888699e-4,
    0.46523628927048575665e-4,
    -0.98374475304879564677e-4,
    0.15808870322491248884e-3,
    -0.21026444172410488319e-3,
    0.21743961811521264320e-3,
    -0.16431810653676389022e-3,
    0.84418223983852743293e-4,
    -0.26190838401581408670e-4,
    0.36899182659531622704e-5,
])

Pair = tuple[float, float]


def _lanczos_log_gamma(z: np.ndarray) -> np.ndarray:
    # Valid for Re(z) >= 0.5 only; callers reflect first.
    acc = np.full_like(z, _LANCZOS_C[0])
    for k in range(1, len(_LANCZOS_C)):
        acc = acc + _LANCZOS_C[k] / (z + (k - 1.0))
    t = z + (_LANCZOS_G - 0.5)
    return 0.5 * _LOG_2PI + (z - 0.5) * np.log(t) - t + np.log(acc)


def _log_sin_pi_upper(z: np.ndarray) -> np.ndarray:
    # Branch of log sin(pi z) on Im(z) >= 0 chosen so the reflection
    # formula lands on the principal branch of log-Gamma.
    return (
        (-math.log(2.0) + 0.5j * math.pi)
        - 1j * math.pi * z
        + np.log1p(-np.exp(2j * math.pi * z))
    )


def log_gamma_complex(z):
    """Principal-branch log-Gamma for complex arguments.

    Accepts scalars or arrays.  Matches the continuous-from-above
    convention on the negative real axis (imaginary part -pi at
    z = -0.5 + 0j is *not* used: +0j maps to the upper side).
    """
    arr = np.asarray(z, dtype=np.complex128)
    scalar = arr.ndim == 0
    work = np.atleast_1d(arr).copy()

    real_axis = work.imag == 0.0
    if np.any(real_axis & (work.real <= 0.0) & (work.real == np.floor(work.real))):
        raise PoleAtNonPositiveInteger("log-Gamma pole at a non-positive integer")

    flip = np.signbit(work.imag)
    work = np.where(flip, np.conj(work), work)
    out = np.empty_like(work)

    right = work.real >= 0.5
    if np.any(right):
        out[right] = _lanczos_log_gamma(work[right])
    left = ~right
    if np.any(left):
        zl = work[left]
        out[left] = _LOG_PI - _log_sin_pi_upper(zl) - _lanczos_log_gamma(1.0 - zl)

    out = np.where(flip, np.conj(out), out)
    if scalar:
        return complex(out[0])
    return out.reshape(arr.shape)


def _real_log_gamma_signed(x: float) -> tuple[float, float]:
    """(log|Gamma(x)|, sign) for real x; sign 0.0 marks a pole."""
    if x > 0.0:
        return math.lgamma(x), 1.0
    if x == math.floor(x):
        return math.inf, 0.0
    mag = math.lgamma(x)
    sign = -1.0 if math.floor(x) % 2 != 0 else 1.0
    return mag, sign


@dataclass(frozen=True)
class HParams:
    """Orders and parameter rows of H^{m,n}_{p,q}.

    ``upper`` holds the (a_j, A_j) rows, ``lower`` the (b_j, B_j) rows.
    The first ``n`` upper and first ``m`` lower rows are the numerator
    families.
    """

    m: int
    n: int
    upper: tuple[Pair, ...] = ()
    lower: tuple[Pair, ...] = ()

    @property
    def p(self) -> int:
        return len(self.upper)

    @property
    def q(self) -> int:
        return len(self.lower)


@dataclass(frozen=True)
class ContourSpec:
    """Vertical contour Re(s) = c and its refinement budget."""

    c: float
    half_length: float = 60.0
    max_points: int = 65536
    rel_tol: float = 1e-10


def validate(params: HParams) -> None:
    """Raise if the parameter block cannot define a usable H-function."""
    if not isinstance(params.m, int) or not isinstance(params.n, int):
        raise InvalidOrder("orders m and n must be integers")
    if not 0 <= params.n <= params.p:
        raise InvalidOrder(f"n={params.n} outside [0, p={params.p}]")
    if not 0 <= params.m <= params.q:
        raise InvalidOrder(f"m={params.m} outside [0, q={params.q}]")
    for a, aa in params.upper:
        if not (math.isfinite(a) and math.isfinite(aa)):
            raise InvalidOrder("non-finite upper row")
        if aa <= 0.0:
            raise NonPositiveScale(f"upper scale {aa} must be positive")
    for b, bb in params.lower:
        if not (math.isfinite(b) and math.isfinite(bb)):
            raise InvalidOrder("non-finite lower row")
        if bb <= 0.0:
            raise NonPositiveScale(f"lower scale {bb} must be positive")
    left, right = pole_gap(params)
    if left >= right:
        raise EmptyContourGap(
            f"left pole bound {left:g} does not clear right pole bound {right:g}"
        )


def pole_gap(params: HParams) -> tuple[float, float]:
    """(sup of left poles, inf of right poles) of the contour integrand."""
    left = -math.inf
    for b, bb in params.lower[: params.m]:
        left = max(left, -b / bb)
    right = math.inf
    for a, aa in params.upper[: params.n]:
        right = min(right, (1.0 - a) / aa)
    return left, right


def select_contour(
    params: HParams,
    *,
    upper_bound: float | None = None,
    half_length: float = 60.0,
    max_points: int = 65536,
    rel_tol: float = 1e-10,
) -> ContourSpec:
    """Abscissa strictly inside the pole gap.

    Midpoint when both families bound the strip; one unit inside the
    single bound otherwise.  ``upper_bound`` tightens the right edge,
    which the CDF kernel uses to stay left of its weight pole.
    """
    left, right = pole_gap(params)
    if upper_bound is not None:
        right = min(right, upper_bound)
    if left >= right:
        raise EmptyContourGap(f"no contour strip in ({left:g}, {right:g})")
    if math.isfinite(left) and math.isfinite(right):
        c = 0.5 * (left + right)
    elif math.isfinite(left):
        c = left + 1.0
    elif math.isfinite(right):
        c = right - 1.0
    else:
        c = 0.0
    return ContourSpec(
        c=c, half_length=half_length, max_points=max_points, rel_tol=rel_tol
    )


def log_theta(params: HParams) -> Callable[[np.ndarray], np.ndarray]:
    """log of the Gamma-product contour integrand as a function of s."""
    num_lower = params.lower[: params.m]
    num_upper = params.upper[: params.n]
    den_upper = params.upper[params.n:]
    den_lower = params.lower[params.m:]

    def fn(s: np.ndarray) -> np.ndarray:
        acc = np.zeros_like(s)
        for b, bb in num_lower:
            acc = acc + log_gamma_complex(b + bb * s)
        for a, aa in num_upper:
            acc = acc + log_gamma_complex(1.0 - a - aa * s)
        for a, aa in den_upper:
            acc = acc - log_gamma_complex(a + aa * s)
        for b, bb in den_lower:
            acc = acc - log_gamma_complex(1.0 - b - bb * s)
        return acc

    return fn


def _oscillatory_sums(w: np.ndarray, t: np.ndarray, ln_x: np.ndarray):
    """Paired-real and raw-imag trapezoid sums of w(t) * exp(-i t ln x).

    The integrand is conjugate-symmetric in t for real parameters, so
    the value is accumulated from symmetric pairs (which is exactly
    real); the leftover imaginary part of the raw sum is returned as a
    rounding diagnostic.
    """
    half = (len(t) - 1) // 2
    t_pos = t[half:]
    w_pos = w[half:].copy()
    w_pos[0] *= 0.5  # t = 0 shared between the two half-lines
    w_neg = w[half::-1]  # w(-t), reversed to align with t_pos

    vals = np.empty(ln_x.shape, dtype=float)
    resid = np.empty(ln_x.shape, dtype=float)
    chunk = max(1, int(2_000_000 / max(len(t_pos), 1)))
    for i in range(0, len(ln_x), chunk):
        lx = ln_x[i: i + chunk]
        phase = np.exp(-1j * np.outer(t_pos, lx))
        fwd = phase.T @ w_pos          # sum over t >= 0
        bwd = np.conj(phase).T @ w_neg
        bwd -= 0.5 * w_neg[0] * np.ones_like(bwd)  # t = 0 counted once
        vals[i: i + chunk] = (fwd + bwd).real
        resid[i: i + chunk] = (fwd + bwd).imag
    return vals, resid


def mellin_barnes(
    theta: Callable[[np.ndarray], np.ndarray],
    contour: ContourSpec,
    x,
    *,
    weight_power: float | None = None,
):
    """(1/2pi) integral of exp(theta(s)) x^{-s} along Re(s) = contour.c.

    With ``weight_power`` = p the integrand gains 1/(p + 1 - s) and the
    result gains x^{p+1}, turning H(x) into its running integral
    int_0^x t^p H(t) dt.  Returns ``(value, error)`` with the shapes of
    ``x``.  The error estimate folds in the trapezoid refinement delta,
    the rounding floor of the node sum, and the residual imaginary
    part, all scaled like the value.
    """
    c = contour.c
    shift = None if weight_power is None else weight_power + 1.0

    x_arr = np.asarray(x, dtype=float)
    scalar = x_arr.ndim == 0
    xv = np.atleast_1d(x_arr).ravel()
    if np.any(xv <= 0.0):
        raise ValueError("H-function argument must be positive")
    ln_x = np.log(xv)

    def log_integrand(s: np.ndarray) -> np.ndarray:
        v = theta(s)
        if shift is not None:
            v = v - np.log(shift - s)
        return v

    # Stage 1: grow the truncation until the integrand tails are dead.
    # x only contributes a unimodular phase, so this is x-independent.
    half = contour.half_length
    t_cap = 16.0 * contour.half_length
    while True:
        probe = log_integrand(c + 1j * np.linspace(-half, half, 129)).real
        if max(probe[0], probe[-1]) <= probe.max() - 41.5:  # ln 1e-18
            break
        if half >= t_cap:
            raise ContourNotConverged(
                f"contour integrand still {probe.max() - max(probe[0], probe[-1]):.1f} "
                f"nats above its tail at |Im s| = {half:g}"
            )
        half *= 2.0

    # Stage 2: trapezoid refinement at fixed truncation.
    n = 1025
    prev = None
    prev_scale = None
    value_scaled = None
    err_scaled = None
    while True:
        t = np.linspace(-half, half, n)
        lg = log_integrand(c + 1j * t)
        re_max = float(lg.real.max())
        w = np.exp(lg - re_max)
        w[0] *= 0.5
        w[-1] *= 0.5
        step = 2.0 * half / (n - 1)
        sums, resid = _oscillatory_sums(w, t, ln_x)
        cur = sums * (step / (2.0 * math.pi))
        cur_resid = np.abs(resid) * (step / (2.0 * math.pi))
        floor = float(np.sum(np.abs(w))) * (step / (2.0 * math.pi)) * 1e-15
        if prev is not None:
            delta = np.abs(cur - prev * math.exp(prev_scale - re_max))
            ok = delta <= np.maximum(contour.rel_tol * np.abs(cur), floor)
            if bool(np.all(ok)):
                value_scaled = cur
                err_scaled = delta + floor + cur_resid
                break
        if n - 1 >= contour.max_points:
            raise ContourNotConverged(
                f"no convergence with {n - 1} contour points at |Im s| <= {half:g}"
            )
        prev = cur
        prev_scale = re_max
        n = 2 * n - 1

    expo = re_max - c * ln_x
    if shift is not None:
        expo = expo + (weight_power + 1.0) * ln_x
    live = np.abs(value_scaled) > 0.0
    if np.any(expo[live] > 709.0):
        raise IntegrandOverflow("contour integral magnitude exceeds float range")
    with np.errstate(over="ignore", under="ignore"):
        scale = np.exp(np.minimum(expo, 709.0))
    value = value_scaled * scale
    error = err_scaled * scale
    if scalar:
        return float(value[0]), float(error[0])
    return value.reshape(x_arr.shape), error.reshape(x_arr.shape)


def eval_h(params: HParams, x, contour: ContourSpec | None = None):
    """H-function value(s) at positive x; returns (value, error)."""
    validate(params)
    if contour is None:
        contour = select_contour(params)
    return mellin_barnes(log_theta(params), contour, x)


def eval_h_cdf_kernel(
    params: HParams,
    x,
    contour: ContourSpec | None = None,
    *,
    gamma_power: float = 0.0,
):
    """Running integral int_0^x t^gamma_power H(t) dt, as (value, error).

    The weight adds a pole at s = gamma_power + 1, so the contour must
    stay strictly left of it; ``ContourAbscissaTooLarge`` reports when
    the pole gap leaves no room.
    """
    validate(params)
    cap = gamma_power + 1.0
    if contour is None:
        left, right = pole_gap(params)
        if left >= min(right, cap):
            raise ContourAbscissaTooLarge(
                f"running-integral weight needs Re(s) < {cap:g} but left poles "
                f"reach {left:g}"
            )
        contour = select_contour(params, upper_bound=cap)
    elif contour.c >= cap:
        raise ContourAbscissaTooLarge(
            f"contour abscissa {contour.c:g} not left of weight pole {cap:g}"
        )
    return mellin_barnes(
        log_theta(params), contour, x, weight_power=gamma_power
    )


def mellin_moment(
    params: HParams,
    kappa: float,
    delta: float,
    order: float,
    *,
    gamma_power: float = 0.0,
) -> float:
    """E[x^order] for the density kappa * x^gamma_power * H(delta x).

    Uses the closed Mellin form of the kernel, so the only numerics are
    real log-Gamma evaluations.  Raises ``DivergentIntegral`` when the
    requested order leaves the convergence strip.
    """
    validate(params)
    if delta <= 0.0 or kappa <= 0.0:
        raise NonPositiveScale("moment needs positive kappa and delta")
    s0 = order + gamma_power + 1.0
    left, right = pole_gap(params)
    if not (left < s0 and (params.n == 0 or s0 < right)):
        raise DivergentIntegral(
            f"moment abscissa {s0:g} outside convergence strip ({left:g}, {right:g})"
        )
    log_mag = math.log(kappa) - s0 * math.log(delta)
    sign = 1.0
    for b, bb in params.lower[: params.m]:
        log_mag += math.lgamma(b + bb * s0)
    for a, aa in params.upper[: params.n]:
        log_mag += math.lgamma(1.0 - a - aa * s0)
    for a, aa in params.upper[params.n:]:
        mag, sgn = _real_log_gamma_signed(a + aa * s0)
        if sgn == 0.0:
            return 0.0
        log_mag -= mag
        sign *= sgn
    for b, bb in params.lower[params.m:]:
        mag, sgn = _real_log_gamma_signed(1.0 - b - bb * s0)
        if sgn == 0.0:
            return 0.0
        log_mag -= mag
        sign *= sgn
    if log_mag > 709.0:
        raise IntegrandOverflow("moment magnitude exceeds float range")
    return sign * math.exp(log_mag)


class _ThetaCache:
    """Memoise a contour integrand on repeated node grids.

    The Gamma product along Re(s) = c does not depend on the argument
    batch, and the refinement ladder revisits identical linspace grids
    call after call, so keying on (first, last, count) is exact.
    """

    def __init__(self, fn: Callable[[np.ndarray], np.ndarray]):
        self._fn = fn
        self._store: dict[tuple, np.ndarray] = {}

    def __call__(self, s: np.ndarray) -> np.ndarray:
        key = (complex(s[0]), complex(s[-1]), int(s.size))
        hit = self._store.get(key)
        if hit is None:
            hit = self._fn(s)
            if len(self._store) >= 48:
                self._store.clear()
            self._store[key] = hit
        return hit


def cached_theta(fn: Callable[[np.ndarray], np.ndarray]):
    """Wrap a contour integrand with a node-grid memo."""
    return _ThetaCache(fn)


def fused_series_theta(
    base_rows: Sequence[Pair],
    log_weights: np.ndarray,
) -> Callable[[np.ndarray], np.ndarray]:
    """Contour integrand of sum_k w_k * H(... (k, 1) row ...).

    Represents a series of H^{m,0}_{0,m} kernels that differ only by an
    integer-stepped lower row (k, 1), k = 0, 1, ..., all sharing one
    argument scale.  ``base_rows`` are the common (b, B) rows and
    ``log_weights[k]`` is ln(w_k); weights must be positive.  The
    Gamma(k + s) ladder is built by the recurrence Gamma(k + 1 + s) =
    (k + s) Gamma(k + s), then the terms are combined by a stable
    log-sum-exp, which makes a 300-term series cost barely more than a
    single kernel.
    """
    lw = np.asarray(log_weights, dtype=float)
    rows = tuple(base_rows)

    def fn(s: np.ndarray) -> np.ndarray:
        acc = np.zeros_like(s)
        for b, bb in rows:
            acc = acc + log_gamma_complex(b + bb * s)
        ladder = log_gamma_complex(s)
        terms = np.empty((len(lw),) + s.shape, dtype=complex)
        for k in range(len(lw)):
            terms[k] = lw[k] + ladder
            ladder = ladder + np.log(k + s)
        m = terms.real.max(axis=0)
        mix = np.log(np.sum(np.exp(terms - m), axis=0)) + m
        return acc + mix

    return fn
