"""Closed-form forcing terms: a small expression language over the time variable.

Grammar accepted by :func:`parse_forcing` (whitespace-insensitive)::

    expr   := term  (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | factor
    factor := atom ('^' unary)?          # '^' is right-associative
    atom   := NUMBER | 't' | FUNC '(' expr ')' | '(' expr ')' | 'pulses'
              | 'integ0' '(' expr ')'
    FUNC   := 'sin' | 'cos' | 'exp' | 'log' | 'abs' | 'sqrt'

`pulses` and `integ0` are extension atoms: the first names the built-in sparse
pulse train, the second is the running integral from 0 of its argument (used by
chirp envelopes whose antiderivative has no closed form, so that every built-in
prints back to parseable text).

Evaluation is numpy-aware (scalars or arrays). Parse errors carry the byte
offset of the offending token; evaluation domain errors name the offending
subexpression.
"""

import bisect
import math
import re
from dataclasses import dataclass, field

import numpy as np

from .system import SystemParams

__all__ = [
    "ForcingError",
    "ParseError",
    "DomainError",
    "DifferentiationError",
    "Expr",
    "Num",
    "Var",
    "BinOp",
    "Neg",
    "Call",
    "RunningIntegral",
    "PulseTrain",
    "ExactPair",
    "parse_forcing",
    "eval_forcing",
    "to_text",
    "scalar_callable",
    "differentiate",
    "antiderivative",
    "chirp_forcing",
    "constant",
    "exp_decay",
    "sinusoid",
    "ramp",
    "pulse_train",
    "reference_pair",
    "random_smooth_forcing",
]


class ForcingError(ValueError):
    """Base class for forcing-language errors."""


class ParseError(ForcingError):
    def __init__(self, message, offset):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class DomainError(ForcingError):
    """Raised when evaluation leaves the domain (log of non-positive, division by zero)."""


class DifferentiationError(ForcingError):
    """Raised for expressions outside the differentiable fragment."""


_FUNC_NAMES = ("sin", "cos", "exp", "log", "abs", "sqrt")

# print/codegen precedence levels
_P_ADD, _P_MUL, _P_NEG, _P_POW, _P_ATOM = 1, 2, 3, 4, 5


class Expr:
    """Base expression node."""

    def _eval(self, t):
        raise NotImplementedError

    def _precedence(self):
        return _P_ATOM

    def __repr__(self):
        return f"{type(self).__name__}({to_text(self)!r})"


@dataclass(repr=False)
class Num(Expr):
    value: float

    def _eval(self, t):
        return self.value

    def _precedence(self):
        return _P_NEG if self.value < 0 else _P_ATOM


@dataclass(repr=False)
class Var(Expr):
    def _eval(self, t):
        return t


@dataclass(repr=False)
class BinOp(Expr):
    op: str
    left: Expr
    right: Expr

    def _eval(self, t):
        lv = self.left._eval(t)
        rv = self.right._eval(t)
        if self.op == "+":
            return lv + rv
        if self.op == "-":
            return lv - rv
        if self.op == "*":
            return lv * rv
        if self.op == "/":
            if np.any(np.asarray(rv) == 0.0):
                raise DomainError(f"division by zero in '{to_text(self)}'")
            return lv / rv
        # power
        lv_arr, rv_arr = np.asarray(lv, dtype=float), np.asarray(rv, dtype=float)
        if np.any((lv_arr == 0.0) & (rv_arr < 0.0)):
            raise DomainError(f"zero raised to a negative power in '{to_text(self)}'")
        with np.errstate(invalid="ignore"):
            out = np.power(lv_arr, rv_arr)
        if np.any(np.isnan(out) & np.isfinite(lv_arr) & np.isfinite(rv_arr)):
            raise DomainError(f"negative base with fractional exponent in '{to_text(self)}'")
        return out

    def _precedence(self):
        return {"+": _P_ADD, "-": _P_ADD, "*": _P_MUL, "/": _P_MUL, "^": _P_POW}[self.op]


@dataclass(repr=False)
class Neg(Expr):
    arg: Expr

    def _eval(self, t):
        return -self.arg._eval(t)

    def _precedence(self):
        return _P_NEG


@dataclass(repr=False)
class Call(Expr):
    fn: str
    arg: Expr

    def _eval(self, t):
        a = self.arg._eval(t)
        if self.fn == "sin":
            return np.sin(a)
        if self.fn == "cos":
            return np.cos(a)
        if self.fn == "exp":
            with np.errstate(over="ignore"):
                return np.exp(a)
        if self.fn == "log":
            if np.any(np.asarray(a) <= 0.0):
                raise DomainError(f"log of non-positive value in '{to_text(self)}'")
            return np.log(a)
        if self.fn == "abs":
            return np.abs(a)
        # sqrt
        if np.any(np.asarray(a) < 0.0):
            raise DomainError(f"sqrt of negative value in '{to_text(self)}'")
        return np.sqrt(a)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(15)
_MAX_PANEL = 0.125


@dataclass(repr=False)
class RunningIntegral(Expr):
    """Running integral from 0 of the wrapped expression.

    Evaluated by composite Gauss-Legendre panels no wider than 0.125 (far below
    1e-10 absolute error for smooth integrands). Scalar queries keep a sorted
    cache of anchor points so that repeated nearby evaluations, as issued by an
    adaptive integrator, only ever integrate short segments.
    """

    arg: Expr
    _cache_t: list = field(default_factory=lambda: [0.0], compare=False)
    _cache_v: list = field(default_factory=lambda: [0.0], compare=False)

    def _segment(self, lo, hi):
        if hi == lo:
            return 0.0
        n = max(1, int(math.ceil(abs(hi - lo) / _MAX_PANEL)))
        edges = np.linspace(lo, hi, n + 1)
        mid = 0.5 * (edges[:-1] + edges[1:])
        half = 0.5 * (edges[1:] - edges[:-1])
        pts = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
        vals = eval_forcing(self.arg, pts).reshape(n, -1)
        return float(np.sum(half * (vals @ _GL_WEIGHTS)))

    def _scalar(self, t):
        t = float(t)
        i = bisect.bisect_left(self._cache_t, t)
        if i < len(self._cache_t) and self._cache_t[i] == t:
            return self._cache_v[i]
        j = i - 1 if i > 0 else 0
        val = self._cache_v[j] + self._segment(self._cache_t[j], t)
        self._cache_t.insert(i, t)
        self._cache_v.insert(i, val)
        if len(self._cache_t) > 500_000:
            del self._cache_t[1:-1:2], self._cache_v[1:-1:2]
        return val

    def _eval(self, t):
        arr = np.asarray(t, dtype=float)
        if arr.ndim == 0:
            return self._scalar(arr)
        flat = arr.ravel()
        order = np.argsort(flat, kind="stable")
        out = np.empty_like(flat)
        acc, prev = 0.0, 0.0
        for idx in order:
            acc += self._segment(prev, flat[idx])
            prev = flat[idx]
            out[idx] = acc
        return out.reshape(arr.shape)


_PULSE_MAX_K = 62


@dataclass(repr=False)
class PulseTrain(Expr):
    """Unit-height pulses on [2^k, 2^k + 2^-k) for k = 0, 1, 2, ...

    Gaps between pulse starts double while widths halve, so the total mass is
    finite (equal to 2) and the train is integrable.
    """

    def _eval(self, t):
        arr = np.asarray(t, dtype=float)
        out = np.zeros_like(arr)
        tmax = float(np.max(arr)) if arr.size else 0.0
        k = 0
        while k <= _PULSE_MAX_K and 2.0**k <= tmax:
            start = 2.0**k
            out += ((arr >= start) & (arr < start + 2.0**-k)).astype(float)
            k += 1
        return out if arr.ndim else float(out)


# ---------------------------------------------------------------------------
# evaluation, printing, compilation


def eval_forcing(f, t):
    """Evaluate expression `f` at time(s) `t`; returns a float or an ndarray."""
    arr = np.asarray(t, dtype=float)
    out = np.asarray(f._eval(arr), dtype=float)
    if arr.ndim == 0:
        return float(out) if out.ndim == 0 else float(out.item())
    if out.shape != arr.shape:
        out = np.broadcast_to(out, arr.shape).copy()
    return out


def _text(e, parent_prec):
    prec = e._precedence()
    if isinstance(e, Num):
        s = repr(e.value)
    elif isinstance(e, Var):
        s = "t"
    elif isinstance(e, Neg):
        s = "-" + _text(e.arg, _P_NEG)
    elif isinstance(e, Call):
        s = f"{e.fn}({_text(e.arg, 0)})"
    elif isinstance(e, RunningIntegral):
        s = f"integ0({_text(e.arg, 0)})"
    elif isinstance(e, PulseTrain):
        s = "pulses"
    elif isinstance(e, BinOp):
        if e.op == "^":
            s = _text(e.left, _P_POW + 1) + "^" + _text(e.right, _P_POW)
        else:
            lp = prec
            rp = prec + 1 if e.op in ("-", "/") else prec
            s = _text(e.left, lp) + e.op + _text(e.right, rp)
    else:
        raise TypeError(f"unknown node {type(e).__name__}")
    return f"({s})" if prec < parent_prec else s


def to_text(e):
    """Render the expression to text the parser accepts back."""
    return _text(e, 0)


def scalar_callable(f):
    """Compile the expression to a fast scalar function of t (math-module based)."""
    ns = {
        "__builtins__": {},
        "sin": math.sin,
        "cos": math.cos,
        "log": _safe_log,
        "abs": abs,
        "sqrt": _safe_sqrt,
        "exp": _safe_exp,
        "inf": math.inf,
    }
    counter = [0]

    def gen(e):
        if isinstance(e, Num):
            return repr(e.value)
        if isinstance(e, Var):
            return "t"
        if isinstance(e, Neg):
            return f"(-{gen(e.arg)})"
        if isinstance(e, Call):
            return f"{e.fn}({gen(e.arg)})"
        if isinstance(e, BinOp):
            op = "**" if e.op == "^" else e.op
            return f"({gen(e.left)}{op}{gen(e.right)})"
        if isinstance(e, RunningIntegral):
            name = f"_hook{counter[0]}"
            counter[0] += 1
            ns[name] = e._scalar
            return f"{name}(t)"
        if isinstance(e, PulseTrain):
            name = f"_hook{counter[0]}"
            counter[0] += 1
            ns[name] = _pulse_scalar
            return f"{name}(t)"
        raise TypeError(f"unknown node {type(e).__name__}")

    src = gen(f)
    return eval(compile(f"lambda t: {src}", "<forcing>", "eval"), ns)


def _safe_exp(x):
    try:
        return math.exp(x)
    except OverflowError:
        return math.inf


def _safe_log(x):
    if x <= 0.0:
        raise DomainError(f"log of non-positive value {x!r}")
    return math.log(x)


def _safe_sqrt(x):
    if x < 0.0:
        raise DomainError(f"sqrt of negative value {x!r}")
    return math.sqrt(x)


def _pulse_scalar(t):
    if t < 1.0:
        return 0.0
    k = int(math.floor(math.log2(t))) if t > 0 else 0
    start = 2.0**k
    return 1.0 if start <= t < start + 2.0**-k else 0.0


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()])"
)


def _tokenize(text):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", n))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op):
        kind, val, off = self.peek()
        if kind != "op" or val != op:
            what = f"{val!r}" if kind != "end" else "end of input"
            raise ParseError(f"expected {op!r}, found {what}", off)
        return self.advance()

    def parse(self):
        e = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected trailing token {val!r}", off)
        return e

    def expr(self):
        e = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.advance()
                e = BinOp(val, e, self.term())
            else:
                return e

    def term(self):
        e = self.unary()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.advance()
                e = BinOp(val, e, self.unary())
            else:
                return e

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.advance()
            return Neg(self.unary())
        return self.factor()

    def factor(self):
        e = self.atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.advance()
            return BinOp("^", e, self.unary())
        return e

    def atom(self):
        kind, val, off = self.advance()
        if kind == "num":
            return Num(float(val))
        if kind == "name":
            if val == "t":
                return Var()
            if val == "pulses":
                return PulseTrain()
            if val in _FUNC_NAMES or val == "integ0":
                self.expect_op("(")
                inner = self.expr()
                self.expect_op(")")
                return RunningIntegral(inner) if val == "integ0" else Call(val, inner)
            raise ParseError(f"unknown identifier {val!r}", off)
        if kind == "op" and val == "(":
            inner = self.expr()
            self.expect_op(")")
            return inner
        what = f"{val!r}" if kind != "end" else "end of input"
        raise ParseError(f"expected a value, found {what}", off)


def parse_forcing(text):
    """Parse forcing text into an expression tree. Raises ParseError with byte offset."""
    if not isinstance(text, str):
        raise TypeError("forcing text must be a string")
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# calculus on trees


def _num(e):
    return isinstance(e, Num)


def _add(l, r):
    if _num(l) and _num(r):
        return Num(l.value + r.value)
    if _num(l) and l.value == 0.0:
        return r
    if _num(r) and r.value == 0.0:
        return l
    return BinOp("+", l, r)


def _sub(l, r):
    if _num(l) and _num(r):
        return Num(l.value - r.value)
    if _num(r) and r.value == 0.0:
        return l
    if _num(l) and l.value == 0.0:
        return _neg(r)
    return BinOp("-", l, r)


def _mul(l, r):
    if _num(l) and _num(r):
        return Num(l.value * r.value)
    if (_num(l) and l.value == 0.0) or (_num(r) and r.value == 0.0):
        return Num(0.0)
    if _num(l) and l.value == 1.0:
        return r
    if _num(r) and r.value == 1.0:
        return l
    return BinOp("*", l, r)


def _div(l, r):
    if _num(l) and l.value == 0.0:
        return Num(0.0)
    if _num(r) and r.value == 1.0:
        return l
    return BinOp("/", l, r)


def _neg(e):
    if _num(e):
        return Num(-e.value)
    if isinstance(e, Neg):
        return e.arg
    return Neg(e)


def differentiate(f):
    """Symbolic derivative. Rejects abs, sqrt, and the pulse train."""
    if isinstance(f, Num):
        return Num(0.0)
    if isinstance(f, Var):
        return Num(1.0)
    if isinstance(f, Neg):
        return _neg(differentiate(f.arg))
    if isinstance(f, RunningIntegral):
        return f.arg
    if isinstance(f, PulseTrain):
        raise DifferentiationError("the pulse train is not differentiable")
    if isinstance(f, Call):
        da = differentiate(f.arg)
        if f.fn == "sin":
            return _mul(Call("cos", f.arg), da)
        if f.fn == "cos":
            return _neg(_mul(Call("sin", f.arg), da))
        if f.fn == "exp":
            return _mul(f, da)
        if f.fn == "log":
            return _div(da, f.arg)
        raise DifferentiationError(f"'{f.fn}' is outside the differentiable fragment")
    if isinstance(f, BinOp):
        l, r = f.left, f.right
        dl, dr = None, None
        if f.op in ("+", "-", "*", "/"):
            dl, dr = differentiate(l), differentiate(r)
        if f.op == "+":
            return _add(dl, dr)
        if f.op == "-":
            return _sub(dl, dr)
        if f.op == "*":
            return _add(_mul(dl, r), _mul(l, dr))
        if f.op == "/":
            return _div(_sub(_mul(dl, r), _mul(l, dr)), BinOp("^", r, Num(2.0)))
        # power
        if _num(r):
            return _mul(_mul(r, BinOp("^", l, Num(r.value - 1.0))), differentiate(l))
        dl, dr = differentiate(l), differentiate(r)
        inner = _add(_mul(dr, Call("log", l)), _div(_mul(r, dl), l))
        return _mul(f, inner)
    raise TypeError(f"unknown node {type(f).__name__}")


def _depends_on_t(e):
    if isinstance(e, (Var, RunningIntegral, PulseTrain)):
        return True
    if isinstance(e, Num):
        return False
    if isinstance(e, Neg):
        return _depends_on_t(e.arg)
    if isinstance(e, Call):
        return _depends_on_t(e.arg)
    if isinstance(e, BinOp):
        return _depends_on_t(e.left) or _depends_on_t(e.right)
    return True


def _linear_coeffs(e):
    """Return (k, c) with e = k*t + c, or None if e is not affine in t."""
    if isinstance(e, Num):
        return 0.0, e.value
    if isinstance(e, Var):
        return 1.0, 0.0
    if isinstance(e, Neg):
        kc = _linear_coeffs(e.arg)
        return None if kc is None else (-kc[0], -kc[1])
    if isinstance(e, BinOp):
        lk = _linear_coeffs(e.left)
        rk = _linear_coeffs(e.right)
        if e.op == "+" and lk and rk:
            return lk[0] + rk[0], lk[1] + rk[1]
        if e.op == "-" and lk and rk:
            return lk[0] - rk[0], lk[1] - rk[1]
        if e.op == "*":
            if lk and lk[0] == 0.0 and rk:
                return lk[1] * rk[0], lk[1] * rk[1]
            if rk and rk[0] == 0.0 and lk:
                return rk[1] * lk[0], rk[1] * lk[1]
    return None


def antiderivative(f):
    """A closed-form antiderivative of f, or None when the small table has none."""
    if not _depends_on_t(f):
        return _mul(f, Var())
    if isinstance(f, Var):
        return _mul(Num(0.5), BinOp("^", Var(), Num(2.0)))
    if isinstance(f, Neg):
        inner = antiderivative(f.arg)
        return None if inner is None else _neg(inner)
    if isinstance(f, BinOp):
        l, r = f.left, f.right
        if f.op in ("+", "-"):
            il, ir = antiderivative(l), antiderivative(r)
            if il is not None and ir is not None:
                return _add(il, ir) if f.op == "+" else _sub(il, ir)
            return None
        if f.op == "*":
            if not _depends_on_t(l):
                ir = antiderivative(r)
                return None if ir is None else _mul(l, ir)
            if not _depends_on_t(r):
                il = antiderivative(l)
                return None if il is None else _mul(il, r)
            return None
        if f.op == "/" and not _depends_on_t(r):
            il = antiderivative(l)
            return None if il is None else _div(il, r)
        if f.op == "^" and isinstance(l, Var) and _num(r) and r.value != -1.0:
            n1 = r.value + 1.0
            return _div(BinOp("^", Var(), Num(n1)), Num(n1))
        return None
    if isinstance(f, Call):
        kc = _linear_coeffs(f.arg)
        if kc is None or kc[0] == 0.0:
            return None
        k = kc[0]
        if f.fn == "exp":
            return _div(f, Num(k))
        if f.fn == "sin":
            return _div(_neg(Call("cos", f.arg)), Num(k))
        if f.fn == "cos":
            return _div(Call("sin", f.arg), Num(k))
    return None


# ---------------------------------------------------------------------------
# built-in families


def constant(c):
    return Num(float(c))


def exp_decay(lam):
    """e^(-lam*t)."""
    return Call("exp", _mul(Num(-float(lam)), Var()))


def sinusoid(omega, amplitude=1.0):
    """amplitude * sin(omega*t)."""
    return _mul(Num(float(amplitude)), Call("sin", _mul(Num(float(omega)), Var())))


def ramp(slope=1.0):
    """slope * t."""
    return _mul(Num(float(slope)), Var())


def pulse_train():
    return PulseTrain()


def chirp_forcing(A, check_horizon=30.0):
    """Build the chirp A(t)*sin(B(t)) with B the running integral of A from 0.

    The envelope must be strictly positive and strictly increasing; both are
    checked by sampling on [0, check_horizon]. A closed-form phase is used when
    the antiderivative table finds one, otherwise the phase falls back to
    memoized adaptive quadrature.
    """
    ts = np.linspace(0.0, check_horizon, 601)
    vals = eval_forcing(A, ts)
    if not np.all(np.isfinite(vals)):
        raise ForcingError("chirp envelope is not finite on the check interval")
    if np.min(vals) <= 0.0:
        raise ForcingError("chirp envelope must be strictly positive")
    if np.min(np.diff(vals)) <= 0.0:
        raise ForcingError("chirp envelope must be strictly increasing")
    B = antiderivative(A)
    if B is not None:
        b0 = eval_forcing(B, 0.0)
        if b0 != 0.0:
            B = _sub(B, Num(b0))
    else:
        B = RunningIntegral(A)
    return _mul(A, Call("sin", B))


_REFERENCE_FORCING = (
    "-4*exp(3*t)*sin(exp(2*t)-1) + 10*exp(t)*cos(exp(2*t)-1) + 2*exp(-t)*sin(exp(2*t)-1)"
)
_REFERENCE_SOLUTION = "exp(-t)*sin(exp(2*t)-1)"
_REFERENCE_DERIVATIVE = "2*exp(t)*cos(exp(2*t)-1) - exp(-t)*sin(exp(2*t)-1)"


@dataclass(repr=False)
class ExactPair:
    """A forcing together with the closed-form solution it produces.

    `exact_solution` solves x'' + a x' + b x = forcing for the initial state
    carried by `params`, and `exact_derivative` is its analytic derivative.
    """

    forcing: Expr
    exact_solution: Expr
    exact_derivative: Expr
    params: SystemParams


def reference_pair():
    """The bundled worked example with a known closed-form response.

    f(t) = -4 e^{3t} sin(e^{2t}-1) + 10 e^t cos(e^{2t}-1) + 2 e^{-t} sin(e^{2t}-1),
    whose response for a=5, b=6, x(0)=0, x'(0)=2 is x(t) = e^{-t} sin(e^{2t}-1):
    a decaying envelope around an exponentially accelerating oscillation.
    """
    return ExactPair(
        forcing=parse_forcing(_REFERENCE_FORCING),
        exact_solution=parse_forcing(_REFERENCE_SOLUTION),
        exact_derivative=parse_forcing(_REFERENCE_DERIVATIVE),
        params=SystemParams(a=5.0, b=6.0, xi0=0.0, xi1=2.0),
    )


def random_smooth_forcing(rng, max_terms=3):
    """A random bounded smooth forcing: offset plus damped sinusoids.

    Coefficients are rounded so the printed text stays short; the draw is fully
    determined by the generator state.
    """
    terms = int(rng.integers(1, max_terms + 1))
    expr = Num(round(float(rng.uniform(-1.0, 1.0)), 4))
    for _ in range(terms):
        amp = round(float(rng.uniform(0.15, 1.0) * rng.choice([-1.0, 1.0])), 4)
        omega = round(float(rng.uniform(0.3, 2.5)), 4)
        phase = round(float(rng.uniform(0.0, 6.28)), 4)
        decay = round(float(rng.uniform(0.0, 0.4)), 4)
        osc = Call("sin", _add(_mul(Num(omega), Var()), Num(phase)))
        term = _mul(Num(amp), osc)
        if decay > 0.0:
            term = _mul(term, Call("exp", _mul(Num(-decay), Var())))
        expr = _add(expr, term)
    return expr
