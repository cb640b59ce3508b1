"""Problem description: multi-term equations, the right-hand-side
expression language, and validation.

A problem is

    D^alpha y(t) = f(t, D^alpha_1 y(t), ..., D^alpha_m y(t)),  t in (0, T],
    y^(k)(0) = b_k,  k = 0..n-1,  n = ceil(alpha),

with a strictly descending chain alpha > alpha_1 > ... > alpha_m >= 0 of
Caputo orders. The right-hand side is parsed from a small expression
grammar over t, z1..zm (z_h standing for the h-th inner derivative) and the
functions sin, cos, exp, log, abs, sqrt. When alpha_m = 0 the name y may be
used as an alias for the undifferentiated solution z_m.

Grammar (precedence low to high): + -, * /, unary -, ^ (right
associative, binding tighter than unary minus so -x^2 is -(x^2)).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .fractional_ops import ceil_order, is_integer_order

__all__ = [
    "RhsSyntaxError",
    "RhsDomainError",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "RhsExpr",
    "parse_rhs",
    "expr_to_string",
    "eval_rhs",
    "estimate_lipschitz",
    "MultiTermProblem",
    "ProblemValidationError",
    "problem_issues",
    "validate_problem",
    "problem_from_dict",
    "load_problem",
]

_FUNCTIONS = ("sin", "cos", "exp", "log", "abs", "sqrt")


class RhsSyntaxError(ValueError):
    """Malformed right-hand-side text; pos is the 0-based offset."""

    def __init__(self, message: str, pos: int) -> None:
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


class RhsDomainError(ArithmeticError):
    """Evaluation left the real domain (division by zero, log of a
    non-positive value, ...); carries the offending node position and the
    first time value at which it happened."""

    def __init__(self, message: str, pos: int, t_value: float) -> None:
        super().__init__(f"{message} at t = {t_value:g} (expression position {pos})")
        self.pos = pos
        self.t_value = t_value


@dataclass(frozen=True)
class Num:
    value: float
    pos: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class Var:
    name: str
    pos: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class Neg:
    operand: "RhsExpr"
    pos: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "RhsExpr"
    right: "RhsExpr"
    pos: int = field(default=0, compare=False, repr=False)


@dataclass(frozen=True)
class Call:
    func: str
    arg: "RhsExpr"
    pos: int = field(default=0, compare=False, repr=False)


RhsExpr = Union[Num, Var, Neg, BinOp, Call]

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),]))"
)


def _tokenize(text: str):
    tokens = []
    i = 0
    while i < len(text):
        m = _TOKEN_RE.match(text, i)
        if m is None:
            stripped = text[i:].lstrip()
            if not stripped:
                break
            pos = len(text) - len(stripped)
            raise RhsSyntaxError(f"unexpected character {stripped[0]!r}", pos)
        if m.lastgroup == "num":
            tokens.append(("num", m.group("num"), m.start("num")))
        elif m.lastgroup == "ident":
            tokens.append(("ident", m.group("ident"), m.start("ident")))
        else:
            tokens.append(("op", m.group("op"), m.start("op")))
        i = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, m: int) -> None:
        self.text = text
        self.m = m
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, symbol: str):
        kind, text, pos = self.peek()
        if kind != "op" or text != symbol:
            if kind == "op" and text == "," and symbol == ")":
                raise RhsSyntaxError("functions take exactly one argument", pos)
            shown = text if text else "end of input"
            raise RhsSyntaxError(f"expected {symbol!r}, found {shown!r}", pos)
        return self.advance()

    def parse(self) -> RhsExpr:
        expr = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise RhsSyntaxError(f"unexpected {text!r} after expression", pos)
        return expr

    def expr(self) -> RhsExpr:
        node = self.term()
        while True:
            kind, text, pos = self.peek()
            if kind == "op" and text in "+-":
                self.advance()
                node = BinOp(text, node, self.term(), pos)
            else:
                return node

    def term(self) -> RhsExpr:
        node = self.unary()
        while True:
            kind, text, pos = self.peek()
            if kind == "op" and text in "*/":
                self.advance()
                node = BinOp(text, node, self.unary(), pos)
            else:
                return node

    def unary(self) -> RhsExpr:
        kind, text, pos = self.peek()
        if kind == "op" and text == "-":
            self.advance()
            return Neg(self.unary(), pos)
        return self.power()

    def power(self) -> RhsExpr:
        base = self.atom()
        kind, text, pos = self.peek()
        if kind == "op" and text == "^":
            self.advance()
            return BinOp("^", base, self.unary(), pos)
        return base

    def atom(self) -> RhsExpr:
        kind, text, pos = self.advance()
        if kind == "num":
            return Num(float(text), pos)
        if kind == "ident":
            nk, nt, _ = self.peek()
            if nk == "op" and nt == "(":
                if text not in _FUNCTIONS:
                    raise RhsSyntaxError(f"unknown function {text!r}", pos)
                self.advance()
                arg = self.expr()
                self.expect_op(")")
                return Call(text, arg, pos)
            return Var(self._check_var(text, pos), pos)
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        shown = text if text else "end of input"
        raise RhsSyntaxError(f"expected a value, found {shown!r}", pos)

    def _check_var(self, name: str, pos: int) -> str:
        if name == "t":
            return name
        if name == "y":
            if self.m < 1:
                raise RhsSyntaxError(
                    "y is only available when at least one inner derivative exists", pos
                )
            return name
        m = re.fullmatch(r"z(\d+)", name)
        if m is not None:
            k = int(m.group(1))
            if 1 <= k <= self.m:
                return name
            raise RhsSyntaxError(
                f"unknown identifier {name!r} (only z1..z{self.m} exist)", pos
            )
        raise RhsSyntaxError(f"unknown identifier {name!r}", pos)


def parse_rhs(text: str, m: int) -> RhsExpr:
    """Parse a right-hand-side expression over t, z1..zm (and y when it
    will later be bound to an order-0 term)."""
    if m < 0:
        raise ValueError("m must be non-negative")
    return _Parser(text, m).parse()


_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


def _prec(e: RhsExpr) -> int:
    if isinstance(e, BinOp):
        return _PREC[e.op]
    if isinstance(e, Neg):
        return _PREC["neg"]
    return _PREC["atom"]


def expr_to_string(e: RhsExpr) -> str:
    """Render an expression; parse_rhs(expr_to_string(e), m) rebuilds e."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.func}({expr_to_string(e.arg)})"
    if isinstance(e, Neg):
        inner = expr_to_string(e.operand)
        if _prec(e.operand) < _PREC["neg"]:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, BinOp):
        left = expr_to_string(e.left)
        right = expr_to_string(e.right)
        if e.op == "^":
            # ^ binds tightest: any compound base needs parentheses, the
            # exponent may itself be a unary minus or another power
            if _prec(e.left) < _PREC["atom"]:
                left = f"({left})"
            if _prec(e.right) < _PREC["neg"]:
                right = f"({right})"
        else:
            mine = _PREC[e.op]
            if _prec(e.left) < mine:
                left = f"({left})"
            if _prec(e.right) <= mine:
                right = f"({right})"
        return f"{left}{e.op}{right}"
    raise TypeError(f"not an expression node: {e!r}")


def _first_bad_t(mask: np.ndarray, t: np.ndarray) -> float:
    flat_t = np.broadcast_to(t, mask.shape).reshape(-1)
    return float(flat_t[np.argmax(mask.reshape(-1))])


def _eval(e: RhsExpr, t: np.ndarray, z) -> np.ndarray:
    if isinstance(e, Num):
        return np.full(t.shape, e.value)
    if isinstance(e, Var):
        if e.name == "t":
            return np.asarray(t, dtype=float) + 0.0
        if e.name == "y":
            if not z:
                raise RhsDomainError("y is unbound (no inner derivatives)", e.pos, float(t.flat[0]))
            return np.asarray(z[-1], dtype=float) + 0.0
        k = int(e.name[1:])
        if k > len(z):
            raise RhsDomainError(f"z{k} is unbound", e.pos, float(t.flat[0]))
        return np.asarray(z[k - 1], dtype=float) + 0.0
    if isinstance(e, Neg):
        return -_eval(e.operand, t, z)
    if isinstance(e, Call):
        arg = _eval(e.arg, t, z)
        if e.func == "log":
            bad = arg <= 0.0
            if np.any(bad):
                raise RhsDomainError("log of a non-positive value", e.pos, _first_bad_t(bad, t))
            return np.log(arg)
        if e.func == "sqrt":
            bad = arg < 0.0
            if np.any(bad):
                raise RhsDomainError("sqrt of a negative value", e.pos, _first_bad_t(bad, t))
            return np.sqrt(arg)
        if e.func == "sin":
            return np.sin(arg)
        if e.func == "cos":
            return np.cos(arg)
        if e.func == "exp":
            with np.errstate(over="ignore"):
                return np.exp(arg)
        if e.func == "abs":
            return np.abs(arg)
        raise RhsDomainError(f"unknown function {e.func!r}", e.pos, float(t.flat[0]))
    if isinstance(e, BinOp):
        left = _eval(e.left, t, z)
        right = _eval(e.right, t, z)
        if e.op == "+":
            return left + right
        if e.op == "-":
            return left - right
        if e.op == "*":
            return left * right
        if e.op == "/":
            bad = right == 0.0
            if np.any(bad):
                raise RhsDomainError("division by zero", e.pos, _first_bad_t(bad, t))
            return left / right
        if e.op == "^":
            neg_base = left < 0.0
            if np.any(neg_base):
                frac_exp = right != np.floor(right)
                bad = neg_base & np.broadcast_to(frac_exp, neg_base.shape)
                if np.any(bad):
                    raise RhsDomainError(
                        "negative base with non-integer exponent", e.pos, _first_bad_t(bad, t)
                    )
            bad = (left == 0.0) & np.broadcast_to(right < 0.0, np.shape(left))
            if np.any(bad):
                raise RhsDomainError("zero base with negative exponent", e.pos, _first_bad_t(bad, t))
            with np.errstate(over="ignore"):
                return left**right
    raise TypeError(f"not an expression node: {e!r}")


def eval_rhs(e: RhsExpr, t, z=()) -> np.ndarray:
    """Evaluate an expression at time(s) t with inner-derivative samples z
    (a sequence of m scalars or arrays shaped like t). Returns a float for
    scalar t, an ndarray otherwise. Domain violations raise RhsDomainError
    with the first offending time."""
    arr = np.asarray(t, dtype=float)
    scalar = arr.ndim == 0
    if scalar:
        arr = arr.reshape(1)
        z = [np.asarray(zi, dtype=float).reshape(-1) for zi in z]
    out = _eval(e, arr, list(z))
    out = np.asarray(out, dtype=float)
    if out.shape != arr.shape:
        out = np.broadcast_to(out, arr.shape).copy()
    return float(out[0]) if scalar else out


def _walk(e: RhsExpr):
    yield e
    if isinstance(e, Neg):
        yield from _walk(e.operand)
    elif isinstance(e, BinOp):
        yield from _walk(e.left)
        yield from _walk(e.right)
    elif isinstance(e, Call):
        yield from _walk(e.arg)


def uses_y_alias(e: RhsExpr) -> bool:
    return any(isinstance(node, Var) and node.name == "y" for node in _walk(e))


def max_z_index(e: RhsExpr) -> int:
    best = 0
    for node in _walk(e):
        if isinstance(node, Var) and node.name.startswith("z"):
            best = max(best, int(node.name[1:]))
    return best


def estimate_lipschitz(e: RhsExpr, t_range, z_box, samples: int = 400, seed: int = 0) -> float:
    """Empirical Lipschitz constant of f(t, z) in z, measured in the L1
    norm on z: max over sampled pairs of |f(t,z) - f(t,z')| / ||z - z'||_1.

    Half the pairs differ in every coordinate, half in a single coordinate
    (to catch partial derivatives a fully random pair averages away).
    Deterministic for a fixed seed. Domain errors propagate."""
    m = len(z_box)
    if m == 0:
        return 0.0
    lo = np.array([float(a) for a, _ in z_box])
    hi = np.array([float(b) for _, b in z_box])
    if np.any(hi < lo):
        raise ValueError("z_box bounds must satisfy lo <= hi")
    rng = np.random.default_rng(seed)
    ts = rng.uniform(float(t_range[0]), float(t_range[1]), size=samples)
    za = rng.uniform(lo, hi, size=(samples, m))
    zb = rng.uniform(lo, hi, size=(samples, m))
    single = np.arange(samples) % 2 == 1
    coords = rng.integers(0, m, size=samples)
    keep = np.ones((samples, m), dtype=bool)
    keep[single] = np.arange(m)[None, :] != coords[single, None]
    zb = np.where(keep & single[:, None], za, zb)
    fa = eval_rhs(e, ts, [za[:, j] for j in range(m)])
    fb = eval_rhs(e, ts, [zb[:, j] for j in range(m)])
    dz = np.sum(np.abs(za - zb), axis=1)
    ok = dz > 0.0
    if not np.any(ok):
        return 0.0
    return float(np.max(np.abs(fa - fb)[ok] / dz[ok]))


@dataclass(frozen=True)
class MultiTermProblem:
    """One multi-term initial value problem on [0, horizon].

    derivative_orders are the inner orders alpha_1 > ... > alpha_m >= 0
    appearing in f; initial_values are b_0..b_(n-1). gamma declares the
    admissible strength of the t -> 0 singularity of D^alpha y.
    """

    alpha: float
    derivative_orders: tuple
    initial_values: tuple
    horizon: float
    rhs: RhsExpr
    gamma: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "derivative_orders", tuple(float(a) for a in self.derivative_orders)
        )
        object.__setattr__(
            self, "initial_values", tuple(float(b) for b in self.initial_values)
        )

    @property
    def n(self) -> int:
        return ceil_order(self.alpha)

    @property
    def m(self) -> int:
        return len(self.derivative_orders)

    @property
    def inner_ceil_orders(self) -> tuple:
        return tuple(
            ceil_order(a) if a > 0.0 else 0 for a in self.derivative_orders
        )

    @property
    def integer_order(self) -> bool:
        """True when the problem is a classical ODE system in disguise:
        the outer and every inner order are integers."""
        return is_integer_order(self.alpha) and all(
            a == 0.0 or is_integer_order(a) for a in self.derivative_orders
        )


class ProblemValidationError(ValueError):
    """Raised by validate_problem; issues is a list of (code, message)."""

    def __init__(self, issues) -> None:
        lines = "; ".join(f"[{code}] {msg}" for code, msg in issues)
        super().__init__(f"invalid problem: {lines}")
        self.issues = list(issues)


def problem_issues(p: MultiTermProblem) -> list:
    """All violated invariants as (code, message) pairs, empty when valid."""
    issues = []
    if not p.alpha > 0.0:
        issues.append(("alpha_positive", f"alpha must be positive, got {p.alpha}"))
        return issues
    if not p.horizon > 0.0:
        issues.append(("horizon_positive", f"horizon must be positive, got {p.horizon}"))
    chain = (p.alpha,) + p.derivative_orders
    for i in range(len(chain) - 1):
        if not chain[i] > chain[i + 1]:
            issues.append(
                (
                    "order_chain",
                    f"orders must descend strictly: position {i} has "
                    f"{chain[i]} followed by {chain[i + 1]}",
                )
            )
            break
    if p.derivative_orders and p.derivative_orders[-1] < 0.0:
        issues.append(("order_chain", "inner orders must be non-negative"))
    n = p.n
    if len(p.initial_values) != n:
        issues.append(
            (
                "initial_count",
                f"order {p.alpha} requires exactly {n} initial values, "
                f"got {len(p.initial_values)}",
            )
        )
    bound = p.alpha - n + 1.0
    if not (0.0 <= p.gamma < bound):
        issues.append(
            (
                "gamma_range",
                f"gamma must satisfy 0 <= gamma < alpha - n + 1 = {bound:g}, got {p.gamma}",
            )
        )
    if p.m >= 1 and not is_integer_order(p.alpha):
        a1 = p.derivative_orders[0]
        n1 = ceil_order(a1) if a1 > 0.0 else 0
        if not n > n1:
            issues.append(
                (
                    "inner_order_bound",
                    f"leading inner order {a1} demands as many initial values as "
                    f"alpha = {p.alpha} provides (need ceil(alpha) > ceil(alpha_1))",
                )
            )
    if uses_y_alias(p.rhs):
        if p.m == 0 or p.derivative_orders[-1] != 0.0:
            issues.append(
                (
                    "y_alias",
                    "y may only appear when the last inner order is 0",
                )
            )
    k = max_z_index(p.rhs)
    if k > p.m:
        issues.append(
            ("z_index", f"rhs references z{k} but only {p.m} inner derivatives exist")
        )
    return issues


def validate_problem(p: MultiTermProblem) -> MultiTermProblem:
    """Check every invariant; returns the problem unchanged or raises
    ProblemValidationError listing all violations by code."""
    issues = problem_issues(p)
    if issues:
        raise ProblemValidationError(issues)
    return p


_PROBLEM_KEYS = {
    "alpha",
    "derivative_orders",
    "initial_values",
    "horizon",
    "gamma",
    "rhs",
}
_REQUIRED_KEYS = _PROBLEM_KEYS - {"gamma"}


def problem_from_dict(d: dict) -> MultiTermProblem:
    """Build and validate a problem from a plain dict (the JSON schema)."""
    unknown = sorted(set(d) - _PROBLEM_KEYS)
    if unknown:
        raise ValueError(f"unknown problem keys: {', '.join(unknown)}")
    missing = sorted(_REQUIRED_KEYS - set(d))
    if missing:
        raise ValueError(f"missing problem keys: {', '.join(missing)}")
    orders = tuple(float(a) for a in d["derivative_orders"])
    rhs = d["rhs"]
    if isinstance(rhs, str):
        rhs = parse_rhs(rhs, len(orders))
    p = MultiTermProblem(
        alpha=float(d["alpha"]),
        derivative_orders=orders,
        initial_values=tuple(float(b) for b in d["initial_values"]),
        horizon=float(d["horizon"]),
        rhs=rhs,
        gamma=float(d.get("gamma", 0.0)),
    )
    return validate_problem(p)


def load_problem(path) -> MultiTermProblem:
    """Load a problem from a JSON file."""
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("problem file must contain a JSON object")
    return problem_from_dict(data)
