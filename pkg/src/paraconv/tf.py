"""Rational transfer-function algebra in the Laplace variable.

Polynomials are stored with coefficients in descending degree order. All
arithmetic is done on coefficients, never by sampling a frequency grid, so
closed-loop identities can be checked to near machine precision.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import (
    EmptyResultError,
    ImproperSystemError,
    InfiniteNormError,
    InvalidInputError,
    PoleAtFrequencyError,
    SingularLoopError,
)

STRIP_TOL = 1e-12
DEFAULT_CANCEL_TOL = 1e-8
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


class Polynomial:
    """Immutable real polynomial, coefficients in descending order.

    Exact leading zeros are stripped on construction. Sums additionally drop
    leading coefficients that cancel to below 1e-12 of the magnitude of the
    terms that produced them, so ``p - p`` is the zero polynomial while a
    legitimately small leading coefficient survives.
    """

    __slots__ = ("_c",)

    def __init__(self, coeffs):
        c = np.atleast_1d(np.asarray(coeffs, dtype=float)).ravel()
        if c.size == 0:
            c = np.zeros(1)
        if not np.all(np.isfinite(c)):
            raise InvalidInputError(f"non-finite polynomial coefficients: {c}")
        keep = np.flatnonzero(c != 0.0)
        c = np.zeros(1) if keep.size == 0 else c[keep[0]:].copy()
        c.setflags(write=False)
        self._c = c

    @classmethod
    def _from_sum(cls, total: np.ndarray, magnitude: np.ndarray) -> "Polynomial":
        # leading terms that cancelled to roundoff of their summands are zero
        total = total.copy()
        for i in range(total.size - 1):
            if abs(total[i]) > STRIP_TOL * magnitude[i]:
                break
            total[i] = 0.0
        else:
            if abs(total[-1]) <= STRIP_TOL * magnitude[-1]:
                total[-1] = 0.0
        return cls(total)

    @property
    def coeffs(self) -> np.ndarray:
        return self._c

    @property
    def degree(self) -> int:
        return self._c.size - 1

    @property
    def leading(self) -> float:
        return float(self._c[0])

    def is_zero(self) -> bool:
        return self._c.size == 1 and self._c[0] == 0.0

    def __call__(self, s):
        return np.polyval(self._c, s)

    def __add__(self, other):
        other = _as_poly(other)
        return Polynomial._from_sum(np.polyadd(self._c, other._c),
                                    np.polyadd(np.abs(self._c), np.abs(other._c)))

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(-self._c)

    def __sub__(self, other):
        return self + (-_as_poly(other))

    def __rsub__(self, other):
        return _as_poly(other) - self

    def __mul__(self, other):
        other = _as_poly(other)
        return Polynomial(np.polymul(self._c, other._c))

    __rmul__ = __mul__

    def __repr__(self):
        return f"Polynomial({self._c.tolist()})"

    def roots(self) -> np.ndarray:
        return poly_roots(self)

    @classmethod
    def from_roots(cls, roots, gain: float = 1.0) -> "Polynomial":
        c = np.real_if_close(np.poly(np.asarray(roots)), tol=1e6)
        return cls(gain * np.real(c))


def _as_poly(p) -> Polynomial:
    if isinstance(p, Polynomial):
        return p
    return Polynomial(p)


def poly_roots(p) -> np.ndarray:
    """All roots (with multiplicity) from the companion-matrix eigenvalues.

    LAPACK's nonsymmetric eigensolver balances the matrix before the QR
    iteration, which is what keeps this accurate for the degree <= ~20
    polynomials we deal with.
    """
    p = _as_poly(p)
    if p.degree < 1:
        raise EmptyResultError("polynomial of degree 0 has no roots")
    c = p.coeffs
    # exact zero roots would otherwise be perturbed by the eigensolver
    nz = np.flatnonzero(c != 0.0)
    trailing = c.size - 1 - nz[-1]
    c = c[: nz[-1] + 1]
    n = c.size - 1
    if n == 0:
        return np.zeros(trailing, dtype=complex)
    comp = np.zeros((n, n))
    comp[0, :] = -c[1:] / c[0]
    if n > 1:
        comp[np.arange(1, n), np.arange(n - 1)] = 1.0
    r = np.linalg.eigvals(comp).astype(complex)
    return np.concatenate([r, np.zeros(trailing, dtype=complex)])


def coeff_deviation(a, b) -> float:
    """Max per-coefficient relative deviation between two polynomials.

    The denominator of each ratio is floored at 1e-15 of the largest
    coefficient of ``b`` so structurally zero coefficients do not blow up.
    """
    a = _as_poly(a).coeffs
    b = _as_poly(b).coeffs
    n = max(a.size, b.size)
    a = np.concatenate([np.zeros(n - a.size), a])
    b = np.concatenate([np.zeros(n - b.size), b])
    floor = 1e-15 * max(np.max(np.abs(b)), np.max(np.abs(a)), 1e-300)
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), floor)))


class TransferFunction:
    """SISO rational function num(s)/den(s) with a monic denominator."""

    __slots__ = ("_num", "_den")

    def __init__(self, num, den=1.0):
        num = _as_poly(num)
        den = _as_poly(den)
        if den.is_zero():
            raise InvalidInputError("transfer function denominator is zero")
        lead = den.leading
        if num.is_zero():
            self._num = Polynomial([0.0])
            self._den = Polynomial([1.0])
        else:
            self._num = Polynomial(num.coeffs / lead)
            self._den = Polynomial(den.coeffs / lead)

    @property
    def num(self) -> Polynomial:
        return self._num

    @property
    def den(self) -> Polynomial:
        return self._den

    @property
    def relative_degree(self) -> int:
        if self.is_zero():
            return 0
        return self._den.degree - self._num.degree

    def is_zero(self) -> bool:
        return self._num.is_zero()

    def is_proper(self) -> bool:
        return self.is_zero() or self._num.degree <= self._den.degree

    def poles(self) -> np.ndarray:
        if self._den.degree == 0:
            return np.zeros(0, dtype=complex)
        return poly_roots(self._den)

    def zeros(self) -> np.ndarray:
        if self.is_zero() or self._num.degree == 0:
            return np.zeros(0, dtype=complex)
        return poly_roots(self._num)

    def dc_gain(self) -> float:
        return float(self._num(0.0) / self._den(0.0))

    def hf_gain(self) -> float:
        """Limit of g(s) as |s| -> infinity (proper systems only)."""
        if not self.is_proper():
            raise ImproperSystemError("improper transfer function has no finite HF gain")
        if self.is_zero() or self._num.degree < self._den.degree:
            return 0.0
        return self._num.leading

    def __call__(self, s):
        return self._num(s) / self._den(s)

    def freqresp(self, omega) -> np.ndarray:
        s = 1j * np.asarray(omega, dtype=float)
        return self._num(s) / self._den(s)

    def __add__(self, other):
        return tf_add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return tf_add(self, -_as_tf(other))

    def __rsub__(self, other):
        return tf_add(_as_tf(other), -self)

    def __neg__(self):
        return TransferFunction(-self._num.coeffs, self._den.coeffs)

    def __mul__(self, other):
        return tf_mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = _as_tf(other)
        if other.is_zero():
            raise ZeroDivisionError("division by the zero transfer function")
        return tf_mul(self, TransferFunction(other.den, other.num))

    def __repr__(self):
        return f"TransferFunction(num={self._num.coeffs.tolist()}, den={self._den.coeffs.tolist()})"

    def to_dict(self) -> dict:
        return {"num": self._num.coeffs.tolist(), "den": self._den.coeffs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "TransferFunction":
        try:
            return cls(d["num"], d["den"])
        except (KeyError, TypeError) as exc:
            raise InvalidInputError(f"transfer function JSON needs 'num' and 'den': {exc}") from exc

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "TransferFunction":
        return cls.from_dict(json.loads(text))

    @classmethod
    def from_factors(cls, gain: float, num_factors: Sequence = (), den_factors: Sequence = ()):
        """Build ``gain * prod(num_factors) / prod(den_factors)`` from coefficient lists."""
        num = Polynomial([gain])
        for f in num_factors:
            num = num * Polynomial(f)
        den = Polynomial([1.0])
        for f in den_factors:
            den = den * Polynomial(f)
        return cls(num, den)


def _as_tf(g) -> TransferFunction:
    if isinstance(g, TransferFunction):
        return g
    if isinstance(g, Polynomial):
        return TransferFunction(g, 1.0)
    return TransferFunction(float(g), 1.0)


def tf_eval(g: TransferFunction, omega: float) -> complex:
    """Evaluate g at s = j*omega."""
    if not math.isfinite(omega):
        raise InvalidInputError(f"frequency must be finite, got {omega}")
    s = 1j * omega
    d = g.den(s)
    scale = float(np.polyval(np.abs(g.den.coeffs), abs(omega)))
    if abs(d) <= 1e-13 * scale:
        raise PoleAtFrequencyError(f"pole on the imaginary axis at omega={omega}")
    return complex(g.num(s) / d)


def tf_add(a, b) -> TransferFunction:
    a, b = _as_tf(a), _as_tf(b)
    if np.array_equal(a.den.coeffs, b.den.coeffs):
        return TransferFunction(a.num + b.num, a.den)
    return TransferFunction(a.num * b.den + b.num * a.den, a.den * b.den)


def tf_mul(a, b) -> TransferFunction:
    a, b = _as_tf(a), _as_tf(b)
    return TransferFunction(a.num * b.num, a.den * b.den)


def tf_feedback(g, h=1.0) -> TransferFunction:
    """Negative feedback ``g / (1 + g*h)``."""
    g, h = _as_tf(g), _as_tf(h)
    den = g.den * h.den + g.num * h.num
    if den.is_zero():
        raise SingularLoopError("1 + g*h is identically zero")
    return TransferFunction(g.num * h.den, den)


def _quad(r) -> np.ndarray:
    return np.array([1.0, -2.0 * r.real, abs(r) ** 2])


def _deflate(c: np.ndarray, factor: np.ndarray) -> np.ndarray:
    q, _ = np.polydiv(c, factor)
    return q


def tf_minreal(g: TransferFunction, tol: float = DEFAULT_CANCEL_TOL) -> TransferFunction:
    """Cancel pole/zero pairs closer than ``tol`` in relative distance.

    Returns ``g`` itself when nothing cancels, so a minreal on an already
    minimal system never perturbs its coefficients.
    """
    if not (0.0 < tol <= 1e-2):
        raise InvalidInputError(f"minreal tolerance must lie in (0, 1e-2], got {tol}")
    if g.is_zero() or g.num.degree == 0 or g.den.degree == 0:
        return g
    zeros = list(poly_roots(g.num))
    poles = list(poly_roots(g.den))

    def _cplx(r):
        return abs(r.imag) > 1e-9 * max(abs(r), 1e-300)

    num = g.num.coeffs.copy()
    den = g.den.coeffs.copy()
    changed = False
    used = [False] * len(poles)
    for z in zeros:
        if _cplx(z) and z.imag < 0:
            continue
        best, best_d = None, np.inf
        for i, p in enumerate(poles):
            if used[i] or _cplx(p) != _cplx(z) or (_cplx(p) and p.imag < 0):
                continue
            d = abs(z - p)
            if d <= tol * max(abs(z), abs(p)) and d < best_d:
                best, best_d = i, d
        if best is None:
            continue
        p = poles[best]
        used[best] = True
        if _cplx(z):
            num = _deflate(num, _quad(z))
            den = _deflate(den, _quad(p))
        else:
            num = _deflate(num, np.array([1.0, -z.real]))
            den = _deflate(den, np.array([1.0, -p.real]))
        changed = True
    if not changed:
        return g
    return TransferFunction(num, den)


class StabilityResult(NamedTuple):
    stable: bool
    margin: float


def is_stable(g) -> StabilityResult:
    """Strict left-half-plane test on the denominator roots.

    ``margin`` is minus the largest real part; it is ``inf`` for a constant.
    """
    g = _as_tf(g)
    if g.den.degree == 0:
        return StabilityResult(True, math.inf)
    r = poly_roots(g.den)
    eps = 1e-9 * float(np.max(np.abs(r)))
    margin = -float(np.max(r.real))
    return StabilityResult(bool(margin > eps), margin)


@dataclass(frozen=True)
class FrequencyGrid:
    """Strictly increasing positive radian frequencies."""

    points: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).ravel()
        if p.size == 0 or not np.all(np.isfinite(p)) or np.any(p <= 0):
            raise InvalidInputError("frequency grid points must be finite and > 0")
        if p.size > 1 and np.any(np.diff(p) <= 0):
            raise InvalidInputError("frequency grid must be strictly increasing")
        p.setflags(write=False)
        object.__setattr__(self, "points", p)

    @classmethod
    def logspace(cls, wmin: float = 1e-2, wmax: float = 1e6, n: int = 2000) -> "FrequencyGrid":
        if not (0 < wmin < wmax) or n < 2:
            raise InvalidInputError("need 0 < wmin < wmax and n >= 2")
        return cls(np.logspace(math.log10(wmin), math.log10(wmax), n))

    def __len__(self):
        return self.points.size


DEFAULT_GRID = FrequencyGrid.logspace()


def _golden_max(f: Callable[[float], float], a: float, b: float, rtol: float = 1e-6):
    """Maximise ``f`` on [a, b] (log-frequency search); returns (x, f(x))."""
    la, lb = math.log(a), math.log(b)
    c = lb - _GOLDEN * (lb - la)
    d = la + _GOLDEN * (lb - la)
    fc, fd = f(math.exp(c)), f(math.exp(d))
    best_x, best_f = (c, fc) if fc >= fd else (d, fd)
    while math.exp(lb) - math.exp(la) > rtol * math.exp(lb):
        if fc >= fd:
            lb, d, fd = d, c, fc
            c = lb - _GOLDEN * (lb - la)
            fc = f(math.exp(c))
        else:
            la, c, fc = c, d, fd
            d = la + _GOLDEN * (lb - la)
            fd = f(math.exp(d))
        for x, fx in ((c, fc), (d, fd)):
            if fx > best_f:
                best_x, best_f = x, fx
    return math.exp(best_x), best_f


def peak_over_grid(mag: Callable[[np.ndarray], np.ndarray], grid: FrequencyGrid,
                   extra: Sequence[float] = ()) -> float:
    """Grid maximum of a vectorised magnitude function plus golden refinement.

    ``extra`` holds additional candidate values (e.g. the DC and
    high-frequency limits). The result is a lower bound on the true supremum.
    """
    w = grid.points
    m = np.asarray(mag(w), dtype=float)
    i = int(np.argmax(m))
    best = float(m[i])
    if w.size >= 2:
        a = w[max(i - 1, 0)]
        b = w[min(i + 1, w.size - 1)]
        if b > a:
            _, fr = _golden_max(lambda x: float(mag(np.array([x]))[0]), a, b)
            best = max(best, fr)
    for v in extra:
        if math.isfinite(v):
            best = max(best, float(v))
    return best


def hinf_norm(g: TransferFunction, grid: FrequencyGrid | None = None) -> float:
    """Grid-based H-infinity norm (a lower bound on the exact value)."""
    g = _as_tf(g)
    if not g.is_proper():
        raise ImproperSystemError("H-infinity norm of an improper system is infinite")
    if not is_stable(g).stable:
        raise InfiniteNormError("H-infinity norm of an unstable system is infinite")
    if g.is_zero():
        return 0.0
    grid = grid or DEFAULT_GRID
    extra = [abs(g.dc_gain()), abs(g.hf_gain())]
    return peak_over_grid(lambda w: np.abs(g.freqresp(w)), grid, extra)


@dataclass(frozen=True)
class BodeTable:
    omega: np.ndarray
    mag_db: np.ndarray
    phase_deg: np.ndarray
    pole_flag: np.ndarray

    def rows(self):
        return zip(self.omega, self.mag_db, self.phase_deg, self.pole_flag)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write("omega,mag_db,phase_deg,pole_at_frequency\n")
            for w, m, p, f in self.rows():
                fh.write(f"{float(w)!r},{float(m)!r},{float(p)!r},{int(f)}\n")


def bode(g: TransferFunction, grid: FrequencyGrid | None = None) -> BodeTable:
    """Magnitude (dB) and unwrapped phase (deg); pole hits are flagged, not raised."""
    g = _as_tf(g)
    grid = grid or DEFAULT_GRID
    w = grid.points
    s = 1j * w
    d = g.den(s)
    scale = np.polyval(np.abs(g.den.coeffs), w)
    flag = np.abs(d) <= 1e-13 * scale
    with np.errstate(divide="ignore", invalid="ignore"):
        h = g.num(s) / d
        mag = 20.0 * np.log10(np.abs(h))
    phase = np.full(w.shape, np.nan)
    ok = ~flag
    if np.any(ok):
        phase[ok] = np.degrees(np.unwrap(np.angle(h[ok])))
    mag[flag] = np.nan
    return BodeTable(w.copy(), mag, phase, flag)


def tf_to_ss(g: TransferFunction):
    """Controllable canonical realisation (A, B, C, D) of a proper g."""
    g = _as_tf(g)
    if not g.is_proper():
        raise ImproperSystemError("cannot realise an improper transfer function")
    a = g.den.coeffs
    n = a.size - 1
    b = np.concatenate([np.zeros(n + 1 - g.num.coeffs.size), g.num.coeffs])
    D = float(b[0])
    if n == 0:
        return np.zeros((0, 0)), np.zeros(0), np.zeros(0), D
    A = np.zeros((n, n))
    A[np.arange(n - 1), np.arange(1, n)] = 1.0
    A[-1, :] = -a[1:][::-1]
    B = np.zeros(n)
    B[-1] = 1.0
    C = (b[1:] - D * a[1:])[::-1].copy()
    return A, B, C, D
