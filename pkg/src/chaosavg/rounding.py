"""Scoped control of the binary64 rounding direction.

Two backends are offered:

``Backend.HARDWARE``
    Drives the C floating-point environment (``fesetround``) through ctypes.
    CPython evaluates ``float`` arithmetic with the processor's scalar FP unit,
    so ordinary ``+ - * /`` on Python floats follow the active hardware mode.

``Backend.EMULATED``
    Stateless software emulation.  Each operation is evaluated in
    round-to-nearest, the exact residual is recovered with an error-free
    transformation, and the result is nudged one ulp when the residual
    disagrees with the requested direction.  Requires the hardware
    environment to be in round-to-nearest, which is the process default.

Arithmetic inside a scope goes through an :class:`Arithmetic` object so that
both backends share a single calling convention::

    with rounding_scope(RoundingMode.DOWN, Backend.HARDWARE) as ar:
        s = ar.add(a, b)
"""

from __future__ import annotations

import contextlib
import ctypes
import ctypes.util
import enum
import math
import operator
import platform
from fractions import Fraction
from typing import Callable, Iterator, TypeVar

T = TypeVar("T")

__all__ = [
    "RoundingMode",
    "Backend",
    "HardwareUnavailable",
    "Arithmetic",
    "rounding_scope",
    "with_mode",
    "current_hardware_mode",
    "hardware_available",
    "default_backend",
    "dir_add",
    "dir_sub",
    "dir_mul",
    "dir_div",
    "parse_mode",
    "parse_backend",
]


class RoundingMode(enum.Enum):
    """IEEE-754 rounding directions used by the experiments."""

    DOWN = "toward_neg_inf"
    UP = "toward_pos_inf"
    NEAREST = "to_nearest_even"

    def __str__(self) -> str:
        return self.value


class Backend(enum.Enum):
    HARDWARE = "hardware"
    EMULATED = "emulated"

    def __str__(self) -> str:
        return self.value


class HardwareUnavailable(RuntimeError):
    """The platform offers no settable floating-point environment.

    Callers should fall back to :attr:`Backend.EMULATED`.
    """


def parse_mode(value: str | RoundingMode) -> RoundingMode:
    if isinstance(value, RoundingMode):
        return value
    aliases = {
        "down": RoundingMode.DOWN,
        "-inf": RoundingMode.DOWN,
        "toward_neg_inf": RoundingMode.DOWN,
        "up": RoundingMode.UP,
        "inf": RoundingMode.UP,
        "+inf": RoundingMode.UP,
        "toward_pos_inf": RoundingMode.UP,
        "nearest": RoundingMode.NEAREST,
        "0.5": RoundingMode.NEAREST,
        "to_nearest_even": RoundingMode.NEAREST,
    }
    try:
        return aliases[value.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown rounding mode {value!r}") from None


def parse_backend(value: str | Backend) -> Backend:
    if isinstance(value, Backend):
        return value
    try:
        return Backend(value.strip().lower())
    except ValueError:
        raise ValueError(f"unknown rounding backend {value!r}") from None


# ---------------------------------------------------------------------------
# hardware environment

# <fenv.h> constants differ per architecture.
_FENV_CONSTANTS = {
    "x86_64": {RoundingMode.NEAREST: 0x000, RoundingMode.DOWN: 0x400, RoundingMode.UP: 0x800},
    "amd64": {RoundingMode.NEAREST: 0x000, RoundingMode.DOWN: 0x400, RoundingMode.UP: 0x800},
    "i386": {RoundingMode.NEAREST: 0x000, RoundingMode.DOWN: 0x400, RoundingMode.UP: 0x800},
    "i686": {RoundingMode.NEAREST: 0x000, RoundingMode.DOWN: 0x400, RoundingMode.UP: 0x800},
    "aarch64": {RoundingMode.NEAREST: 0x000000, RoundingMode.DOWN: 0x800000, RoundingMode.UP: 0x400000},
    "arm64": {RoundingMode.NEAREST: 0x000000, RoundingMode.DOWN: 0x800000, RoundingMode.UP: 0x400000},
}


class _FEnv:
    def __init__(self) -> None:
        self.error: str | None = None
        self.codes: dict[RoundingMode, int] = {}
        self.modes: dict[int, RoundingMode] = {}
        self._set = self._get = None
        codes = _FENV_CONSTANTS.get(platform.machine().lower())
        if codes is None:
            self.error = f"no fenv constants known for machine {platform.machine()!r}"
            return
        name = ctypes.util.find_library("m") or ctypes.util.find_library("c")
        try:
            lib = ctypes.CDLL(name)
            fesetround, fegetround = lib.fesetround, lib.fegetround
        except (OSError, AttributeError, TypeError) as exc:
            self.error = f"cannot load fesetround/fegetround: {exc}"
            return
        fesetround.argtypes = [ctypes.c_int]
        fesetround.restype = ctypes.c_int
        fegetround.argtypes = []
        fegetround.restype = ctypes.c_int
        self._set, self._get = fesetround, fegetround
        self.codes = codes
        self.modes = {v: k for k, v in codes.items()}
        if not self._probe():
            self.error = "fesetround has no observable effect on Python float arithmetic"
            self._set = self._get = None

    def _probe(self) -> bool:
        # Operands flow through a list so nothing is folded at compile time.
        ops = [1.0, 1e-20]
        saved = self._get()
        try:
            results = {}
            for mode in (RoundingMode.DOWN, RoundingMode.UP):
                if self._set(self.codes[mode]) != 0:
                    return False
                results[mode] = ops[0] + ops[1]
        finally:
            self._set(saved)
        return results[RoundingMode.DOWN] == 1.0 and results[RoundingMode.UP] > 1.0

    @property
    def available(self) -> bool:
        return self._set is not None

    def set(self, mode: RoundingMode) -> None:
        if self._set(self.codes[mode]) != 0:
            raise HardwareUnavailable(f"fesetround rejected {mode}")

    def set_raw(self, code: int) -> None:
        self._set(code)

    def get_raw(self) -> int:
        return self._get()


_fenv = _FEnv()


def hardware_available() -> bool:
    return _fenv.available


def default_backend() -> Backend:
    """Hardware when the FP environment is controllable, else emulation."""
    return Backend.HARDWARE if _fenv.available else Backend.EMULATED


def current_hardware_mode() -> RoundingMode | None:
    """Mode currently active in the hardware environment.

    ``None`` for a mode outside the three supported ones (toward zero).
    """
    if not _fenv.available:
        raise HardwareUnavailable(_fenv.error)
    return _fenv.modes.get(_fenv.get_raw())


# ---------------------------------------------------------------------------
# software emulation

_INF = math.inf
_MAX = 1.7976931348623157e308
_SPLITTER = 134217729.0  # 2**27 + 1
_ADD_SAFE = 2.0**1020
_MUL_BIG = 2.0**995
_MUL_TINY = 2.0**-960
_DIV_LO = 2.0**-900
_DIV_HI = 2.0**900


def _nudge(r: float, err_sign: int, mode: RoundingMode) -> float:
    """Step ``r`` one ulp when the exact result lies on the wrong side of it.

    ``err_sign`` is the sign of ``exact - r``.
    """
    if err_sign < 0 and mode is RoundingMode.DOWN:
        return math.nextafter(r, -_INF)
    if err_sign > 0 and mode is RoundingMode.UP:
        return math.nextafter(r, _INF)
    return r


def _overflowed(r: float, mode: RoundingMode) -> float:
    # Directed rounding never overshoots to infinity against its direction.
    if r == _INF and mode is RoundingMode.DOWN:
        return _MAX
    if r == -_INF and mode is RoundingMode.UP:
        return -_MAX
    return r


def _exact_fallback(r: float, exact: Fraction, mode: RoundingMode) -> float:
    if math.isinf(r):
        return _overflowed(r, mode)
    diff = exact - Fraction(r)
    if diff == 0:
        return r
    return _nudge(r, 1 if diff > 0 else -1, mode)


def _two_prod_err(a: float, b: float, p: float) -> float:
    """Exact ``a*b - p`` (Dekker/Veltkamp), valid away from over/underflow."""
    t = _SPLITTER * a
    ah = t - (t - a)
    al = a - ah
    t = _SPLITTER * b
    bh = t - (t - b)
    bl = b - bh
    return ((ah * bh - p) + ah * bl + al * bh) + al * bl


def dir_add(a: float, b: float, mode: RoundingMode) -> float:
    """``a + b`` correctly rounded in direction ``mode``."""
    s = a + b
    if mode is RoundingMode.NEAREST:
        return s
    if not (math.isfinite(a) and math.isfinite(b)):
        return s
    if math.isinf(s):
        return _overflowed(s, mode)
    if s == 0.0:
        # An exact zero sum of operands with opposite signs is -0 toward -inf.
        if mode is RoundingMode.DOWN and not (a == 0.0 and b == 0.0
                                              and math.copysign(1, a) > 0
                                              and math.copysign(1, b) > 0):
            return -0.0
        return s
    if abs(s) >= _ADD_SAFE or abs(a) >= _ADD_SAFE or abs(b) >= _ADD_SAFE:
        return _exact_fallback(s, Fraction(a) + Fraction(b), mode)
    bb = s - a
    err = (a - (s - bb)) + (b - bb)
    if err == 0.0:
        return s
    return _nudge(s, 1 if err > 0 else -1, mode)


def dir_sub(a: float, b: float, mode: RoundingMode) -> float:
    """``a - b`` correctly rounded in direction ``mode``."""
    return dir_add(a, -b, mode)


def dir_mul(a: float, b: float, mode: RoundingMode) -> float:
    """``a * b`` correctly rounded in direction ``mode``."""
    p = a * b
    if mode is RoundingMode.NEAREST:
        return p
    if not (math.isfinite(a) and math.isfinite(b)) or a == 0.0 or b == 0.0:
        return p
    ap = abs(p)
    if ap < _MUL_TINY or ap == _INF or abs(a) >= _MUL_BIG or abs(b) >= _MUL_BIG:
        return _exact_fallback(p, Fraction(a) * Fraction(b), mode)
    err = _two_prod_err(a, b, p)
    if err == 0.0:
        return p
    return _nudge(p, 1 if err > 0 else -1, mode)


def _ieee_div(a: float, b: float) -> float:
    # Python raises on division by zero; IEEE-754 returns an infinity or NaN.
    if b == 0.0:
        if a == 0.0 or math.isnan(a):
            return math.nan
        sign = math.copysign(1.0, a) * math.copysign(1.0, b)
        return math.copysign(_INF, sign)
    return a / b


def dir_div(a: float, b: float, mode: RoundingMode) -> float:
    """``a / b`` correctly rounded in direction ``mode``."""
    q = _ieee_div(a, b)
    if mode is RoundingMode.NEAREST:
        return q
    if not (math.isfinite(a) and math.isfinite(b)) or a == 0.0 or b == 0.0:
        return q
    aa, ab, aq = abs(a), abs(b), abs(q)
    if not (_DIV_LO < aa < _DIV_HI and _DIV_LO < ab < _DIV_HI and _DIV_LO < aq < _DIV_HI):
        return _exact_fallback(q, Fraction(a) / Fraction(b), mode)
    p = q * b
    rem = (a - p) - _two_prod_err(q, b, p)
    if rem == 0.0:
        return q
    # exact - q has the sign of rem / b
    sign = 1 if (rem > 0) == (b > 0) else -1
    return _nudge(q, sign, mode)


# ---------------------------------------------------------------------------
# scopes

class Arithmetic:
    """Elementary binary64 operations bound to one rounding mode and backend."""

    __slots__ = ("mode", "backend", "add", "sub", "mul", "div")

    def __init__(self, mode: RoundingMode, backend: Backend) -> None:
        self.mode = mode
        self.backend = backend
        if backend is Backend.HARDWARE or mode is RoundingMode.NEAREST:
            # The hardware already rounds in `mode` while the scope is open.
            self.add: Callable[[float, float], float] = operator.add
            self.sub: Callable[[float, float], float] = operator.sub
            self.mul: Callable[[float, float], float] = operator.mul
            self.div: Callable[[float, float], float] = _ieee_div
        else:
            self.add = lambda a, b: dir_add(a, b, mode)
            self.sub = lambda a, b: dir_add(a, -b, mode)
            self.mul = lambda a, b: dir_mul(a, b, mode)
            self.div = lambda a, b: dir_div(a, b, mode)

    def __repr__(self) -> str:
        return f"Arithmetic({self.mode}, {self.backend})"


_ARITH = {(m, b): Arithmetic(m, b) for m in RoundingMode for b in Backend}


@contextlib.contextmanager
def rounding_scope(mode: RoundingMode, backend: Backend = Backend.EMULATED) -> Iterator[Arithmetic]:
    """Open a region in which arithmetic through the yielded object uses ``mode``.

    With the hardware backend the FP environment is switched on entry and the
    previous mode restored on exit, also when the body raises.  Scopes nest.
    The emulated backend leaves the environment untouched; under it the body
    must only use the yielded :class:`Arithmetic` for rounding-sensitive work.
    """
    if backend is Backend.EMULATED:
        yield _ARITH[(mode, backend)]
        return
    if not _fenv.available:
        raise HardwareUnavailable(_fenv.error)
    saved = _fenv.get_raw()
    _fenv.set(mode)
    try:
        yield _ARITH[(mode, backend)]
    finally:
        _fenv.set_raw(saved)


def with_mode(mode: RoundingMode, backend: Backend, computation: Callable[[Arithmetic], T]) -> T:
    """Evaluate ``computation(ar)`` inside a rounding scope and return its value.

    The computation receives its operands at call time, so nothing inside it
    can be folded into a constant before the mode is in force.
    """
    with rounding_scope(mode, backend) as ar:
        return computation(ar)
