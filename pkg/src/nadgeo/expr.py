"""Minimal symbolic expression engine.

Expressions are immutable trees over named real coordinates with the eight
unary operations (neg, sin, cos, exp, ln, sqrt, abs, tanh) and the five
binary ones (+ - * / ^).  They carry every coefficient field in the rest of
the package: anchors, structure functions, connection coefficients, metrics,
generating functions.

Design notes:

* ``parse`` builds the raw tree dictated by the grammar; it never rewrites.
* ``diff`` and ``simplify`` go through eagerly-folding constructors
  (``add_``, ``mul_``, ...) so that zero and one identities never survive
  construction.  Negative literals are canonically ``neg(Const(c))`` with
  ``c >= 0`` so that printing and re-parsing round-trips structurally.
* ``evaluate`` raises :class:`EvalDomainError` instead of returning a
  non-finite value.
* ``compile_fns`` turns a batch of expressions into one vectorized numpy
  callable (shared subtrees become shared locals), used by grid code.
"""

from __future__ import annotations

import math
import sys

import numpy as np

# derivative trees of curvature coefficients nest deeply
if sys.getrecursionlimit() < 100_000:
    sys.setrecursionlimit(100_000)

UNARY_OPS = ("neg", "sin", "cos", "exp", "ln", "sqrt", "abs", "tanh")
FUNCTION_NAMES = frozenset(UNARY_OPS)
BINARY_OPS = ("add", "sub", "mul", "div", "pow")

_BINOP_SYMBOL = {"add": "+", "sub": "-", "mul": "*", "div": "/", "pow": "^"}


class ExprError(Exception):
    pass


class ParseError(ExprError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class EvalDomainError(ExprError):
    pass


class Expr:
    __slots__ = ("_hash",)

    # arithmetic sugar used throughout the tensor modules; folds eagerly
    def __add__(self, other):
        return add_(self, _coerce(other))

    def __radd__(self, other):
        return add_(_coerce(other), self)

    def __sub__(self, other):
        return sub_(self, _coerce(other))

    def __rsub__(self, other):
        return sub_(_coerce(other), self)

    def __mul__(self, other):
        return mul_(self, _coerce(other))

    def __rmul__(self, other):
        return mul_(_coerce(other), self)

    def __truediv__(self, other):
        return div_(self, _coerce(other))

    def __rtruediv__(self, other):
        return div_(_coerce(other), self)

    def __pow__(self, other):
        return pow_(self, _coerce(other))

    def __neg__(self):
        return neg_(self)

    def __repr__(self):
        return f"<{type(self).__name__} {to_text(self)!r}>"

    def __str__(self):
        return to_text(self)


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        v = float(value)
        if math.isnan(v) or math.isinf(v):
            raise ExprError(f"non-finite constant {value!r}")
        self.value = v
        self._hash = hash(("c", v))

    def __eq__(self, other):
        return type(other) is Const and other.value == self.value

    def __hash__(self):
        return self._hash


class Var(Expr):
    __slots__ = ("name",)

    def __init__(self, name):
        self.name = name
        self._hash = hash(("v", name))

    def __eq__(self, other):
        return type(other) is Var and other.name == self.name

    def __hash__(self):
        return self._hash


class Unary(Expr):
    __slots__ = ("op", "arg")

    def __init__(self, op, arg):
        if op not in UNARY_OPS:
            raise ExprError(f"unknown unary op {op!r}")
        self.op = op
        self.arg = arg
        self._hash = hash(("u", op, arg._hash))

    def __eq__(self, other):
        return (
            type(other) is Unary
            and other._hash == self._hash
            and other.op == self.op
            and other.arg == self.arg
        )

    def __hash__(self):
        return self._hash


class Binary(Expr):
    __slots__ = ("op", "lhs", "rhs")

    def __init__(self, op, lhs, rhs):
        if op not in BINARY_OPS:
            raise ExprError(f"unknown binary op {op!r}")
        self.op = op
        self.lhs = lhs
        self.rhs = rhs
        self._hash = hash(("b", op, lhs._hash, rhs._hash))

    def __eq__(self, other):
        return (
            type(other) is Binary
            and other._hash == self._hash
            and other.op == self.op
            and other.lhs == self.lhs
            and other.rhs == self.rhs
        )

    def __hash__(self):
        return self._hash


ZERO = Const(0.0)
ONE = Const(1.0)


def _coerce(x):
    if isinstance(x, Expr):
        return x
    if isinstance(x, (int, float)):
        return const(x)
    raise TypeError(f"cannot use {type(x).__name__} as an expression")


def const(value) -> Expr:
    """Canonical constant: negative values are wrapped as neg(positive)."""
    v = float(value)
    if v == 0.0:
        return ZERO
    if v < 0.0:
        return Unary("neg", Const(-v))
    return Const(v)


def const_value(e) -> float | None:
    """The numeric value of a literal (Const or neg(Const)), else None."""
    if type(e) is Const:
        return e.value
    if type(e) is Unary and e.op == "neg" and type(e.arg) is Const:
        return -e.arg.value
    return None


def is_zero(e) -> bool:
    return type(e) is Const and e.value == 0.0


# ---------------------------------------------------------------------------
# folding constructors
# ---------------------------------------------------------------------------

def add_(a, b) -> Expr:
    va, vb = const_value(a), const_value(b)
    if va is not None and vb is not None:
        return const(va + vb)
    if va == 0.0:
        return b
    if vb == 0.0:
        return a
    return Binary("add", a, b)


def sub_(a, b) -> Expr:
    va, vb = const_value(a), const_value(b)
    if va is not None and vb is not None:
        return const(va - vb)
    if vb == 0.0:
        return a
    if va == 0.0:
        return neg_(b)
    if a == b:
        return ZERO
    if type(a) is Binary and a.op == "add":
        if a.rhs == b:
            return a.lhs
        if a.lhs == b:
            return a.rhs
    return Binary("sub", a, b)


def mul_(a, b) -> Expr:
    va, vb = const_value(a), const_value(b)
    if va is not None and vb is not None:
        return const(va * vb)
    if va == 0.0 or vb == 0.0:
        return ZERO
    if va == 1.0:
        return b
    if vb == 1.0:
        return a
    if va == -1.0:
        return neg_(b)
    if vb == -1.0:
        return neg_(a)
    return Binary("mul", a, b)


def div_(a, b) -> Expr:
    va, vb = const_value(a), const_value(b)
    if vb is not None and vb == 0.0:
        return Binary("div", a, b)  # evaluation reports the domain error
    if va is not None and vb is not None:
        return const(va / vb)
    if va == 0.0:
        return ZERO
    if vb == 1.0:
        return a
    if vb == -1.0:
        return neg_(a)
    return Binary("div", a, b)


def pow_(a, b) -> Expr:
    va, vb = const_value(a), const_value(b)
    if vb == 1.0:
        return a
    if vb == 0.0:
        return ONE
    if va is not None and vb is not None:
        try:
            return const(_checked_pow(va, vb))
        except EvalDomainError:
            pass  # keep symbolic; evaluation will report it
    return Binary("pow", a, b)


def neg_(a) -> Expr:
    v = const_value(a)
    if v is not None:
        return const(-v)
    if type(a) is Unary and a.op == "neg":
        return a.arg
    return Unary("neg", a)


def unary_(op, a) -> Expr:
    if op == "neg":
        return neg_(a)
    v = const_value(a)
    if v is not None:
        return const(_eval_unary(op, v))
    return Unary(op, a)


# ---------------------------------------------------------------------------
# parsing
# ---------------------------------------------------------------------------

def _tokenize(text):
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
            continue
        if c in "+-*/^()":
            tokens.append((c, c, i))
            i += 1
            continue
        if c.isdigit() or (c == "." and i + 1 < n and text[i + 1].isdigit()):
            j = i
            while j < n and (text[j].isdigit() or text[j] == "."):
                j += 1
            if j < n and text[j] in "eE":
                k = j + 1
                if k < n and text[k] in "+-":
                    k += 1
                if k < n and text[k].isdigit():
                    while k < n and text[k].isdigit():
                        k += 1
                    j = k
            lit = text[i:j]
            try:
                value = float(lit)
            except ValueError:
                raise ParseError(f"bad number literal {lit!r}", i)
            tokens.append(("num", value, i))
            i = j
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(("ident", text[i:j], i))
            i = j
            continue
        raise ParseError(f"unexpected character {c!r}", i)
    tokens.append(("end", None, n))
    return tokens


class _Parser:
    def __init__(self, tokens, coords):
        self.tokens = tokens
        self.pos = 0
        self.coords = set(coords)

    def peek(self):
        return self.tokens[self.pos]

    def next(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind):
        tok = self.next()
        if tok[0] != kind:
            raise ParseError(f"expected {kind!r}, found {tok[1]!r}", tok[2])
        return tok

    def expr(self):
        node = self.term()
        while self.peek()[0] in ("+", "-"):
            op = self.next()[0]
            rhs = self.term()
            node = Binary("add" if op == "+" else "sub", node, rhs)
        return node

    def term(self):
        node = self.factor()
        while self.peek()[0] in ("*", "/"):
            op = self.next()[0]
            rhs = self.factor()
            node = Binary("mul" if op == "*" else "div", node, rhs)
        return node

    def factor(self):
        if self.peek()[0] == "-":
            self.next()
            return Unary("neg", self.factor())
        node = self.base()
        if self.peek()[0] == "^":
            self.next()
            return Binary("pow", node, self.factor())
        return node

    def base(self):
        kind, value, offset = self.next()
        if kind == "num":
            return Const(value)
        if kind == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "ident":
            if self.peek()[0] == "(":
                if value not in FUNCTION_NAMES:
                    raise ParseError(f"unknown function {value!r}", offset)
                self.next()
                arg = self.expr()
                self.expect(")")
                return Unary(value, arg)
            if value in self.coords:
                return Var(value)
            raise ParseError(f"unknown identifier {value!r}", offset)
        raise ParseError(f"expected a value, found {value!r}", offset)


def parse(text: str, coords) -> Expr:
    """Parse ``text`` over the declared coordinate names."""
    parser = _Parser(_tokenize(text), coords)
    node = parser.expr()
    end = parser.next()
    if end[0] != "end":
        raise ParseError(f"trailing input {end[1]!r}", end[2])
    return node


# ---------------------------------------------------------------------------
# printing (minimal parentheses; parse(to_text(e)) == e structurally)
# ---------------------------------------------------------------------------

_LEVEL_ADD, _LEVEL_MUL, _LEVEL_NEG, _LEVEL_POW, _LEVEL_ATOM = 1, 2, 3, 4, 5


def _level(e):
    if type(e) is Binary:
        if e.op in ("add", "sub"):
            return _LEVEL_ADD
        if e.op in ("mul", "div"):
            return _LEVEL_MUL
        return _LEVEL_POW
    if type(e) is Unary:
        return _LEVEL_NEG if e.op == "neg" else _LEVEL_ATOM
    return _LEVEL_ATOM


def _fmt_number(v):
    if v == int(v) and abs(v) < 1e16:
        return str(int(v))
    return repr(v)


def to_text(e: Expr) -> str:
    t = type(e)
    if t is Const:
        return _fmt_number(e.value)
    if t is Var:
        return e.name
    if t is Unary:
        if e.op == "neg":
            inner = to_text(e.arg)
            if _level(e.arg) <= _LEVEL_MUL:
                inner = f"({inner})"
            return f"-{inner}"
        return f"{e.op}({to_text(e.arg)})"
    lhs, rhs = to_text(e.lhs), to_text(e.rhs)
    if e.op in ("add", "sub"):
        if _level(e.rhs) == _LEVEL_ADD:
            rhs = f"({rhs})"
    elif e.op in ("mul", "div"):
        if _level(e.lhs) < _LEVEL_MUL:
            lhs = f"({lhs})"
        if _level(e.rhs) <= _LEVEL_MUL:
            rhs = f"({rhs})"
    else:  # pow: right-associative, binds above unary minus
        if _level(e.lhs) <= _LEVEL_POW:
            lhs = f"({lhs})"
        if _level(e.rhs) <= _LEVEL_MUL:
            rhs = f"({rhs})"
    return f"{lhs} {_BINOP_SYMBOL[e.op]} {rhs}"


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

def _checked_pow(base, exponent):
    if base == 0.0 and exponent < 0.0:
        raise EvalDomainError("0 raised to a negative power")
    if base < 0.0 and exponent != int(exponent):
        raise EvalDomainError(f"negative base {base!r} with non-integer exponent")
    out = base ** exponent
    if math.isnan(out) or math.isinf(out):
        raise EvalDomainError(f"pow overflow: {base!r} ^ {exponent!r}")
    return out


def _eval_unary(op, v):
    if op == "neg":
        return -v
    if op == "sin":
        return math.sin(v)
    if op == "cos":
        return math.cos(v)
    if op == "exp":
        out = math.exp(v) if v < 709.0 else math.inf
        if math.isinf(out):
            raise EvalDomainError(f"exp overflow at {v!r}")
        return out
    if op == "ln":
        if v <= 0.0:
            raise EvalDomainError(f"ln of non-positive value {v!r}")
        return math.log(v)
    if op == "sqrt":
        if v < 0.0:
            raise EvalDomainError(f"sqrt of negative value {v!r}")
        return math.sqrt(v)
    if op == "abs":
        return abs(v)
    if op == "tanh":
        return math.tanh(v)
    raise ExprError(f"unknown unary op {op!r}")


def evaluate(e: Expr, point: dict) -> float:
    """IEEE double evaluation; domain trouble raises EvalDomainError."""
    t = type(e)
    if t is Const:
        return e.value
    if t is Var:
        try:
            v = point[e.name]
        except KeyError:
            raise EvalDomainError(f"missing coordinate {e.name!r}") from None
        v = float(v)
        if math.isnan(v) or math.isinf(v):
            raise EvalDomainError(f"non-finite value for {e.name!r}")
        return v
    if t is Unary:
        return _eval_unary(e.op, evaluate(e.arg, point))
    a = evaluate(e.lhs, point)
    b = evaluate(e.rhs, point)
    op = e.op
    if op == "add":
        out = a + b
    elif op == "sub":
        out = a - b
    elif op == "mul":
        out = a * b
    elif op == "div":
        if b == 0.0:
            raise EvalDomainError("division by zero")
        out = a / b
    else:
        return _checked_pow(a, b)
    if math.isnan(out) or math.isinf(out):
        raise EvalDomainError(f"non-finite result in {op}")
    return out


# ---------------------------------------------------------------------------
# differentiation
# ---------------------------------------------------------------------------

def diff(e: Expr, v: str) -> Expr:
    """Exact symbolic derivative with respect to coordinate name ``v``."""
    return _diff(e, v, {})


def _diff(e, v, memo):
    key = id(e)
    hit = memo.get(key)
    if hit is not None:
        return hit
    t = type(e)
    if t is Const:
        out = ZERO
    elif t is Var:
        out = ONE if e.name == v else ZERO
    elif t is Unary:
        du = _diff(e.arg, v, memo)
        u = e.arg
        op = e.op
        if is_zero(du):
            out = ZERO
        elif op == "neg":
            out = neg_(du)
        elif op == "sin":
            out = mul_(unary_("cos", u), du)
        elif op == "cos":
            out = neg_(mul_(unary_("sin", u), du))
        elif op == "exp":
            out = mul_(e, du)
        elif op == "ln":
            out = div_(du, u)
        elif op == "sqrt":
            out = div_(du, mul_(Const(2.0), e))
        elif op == "abs":
            out = mul_(div_(u, e), du)  # sign(u) * u'
        else:  # tanh
            out = mul_(sub_(ONE, mul_(e, e)), du)
    else:
        da = _diff(e.lhs, v, memo)
        db = _diff(e.rhs, v, memo)
        a, b = e.lhs, e.rhs
        op = e.op
        if op == "add":
            out = add_(da, db)
        elif op == "sub":
            out = sub_(da, db)
        elif op == "mul":
            out = add_(mul_(da, b), mul_(a, db))
        elif op == "div":
            out = sub_(div_(da, b), div_(mul_(a, db), mul_(b, b)))
        else:  # pow
            w = const_value(b)
            if w is not None:
                out = mul_(mul_(b, pow_(a, const(w - 1.0))), da)
            elif is_zero(db):
                out = mul_(mul_(b, pow_(a, sub_(b, ONE))), da)
            else:
                # a^b * (b' ln a + b a'/a); needs a > 0 at evaluation
                out = mul_(e, add_(mul_(db, unary_("ln", a)), div_(mul_(b, da), a)))
    memo[key] = out
    return out


# ---------------------------------------------------------------------------
# simplification: one bottom-up pass through the folding constructors
# ---------------------------------------------------------------------------

def simplify(e: Expr) -> Expr:
    return _simplify(e, {})


def _simplify(e, memo):
    key = id(e)
    hit = memo.get(key)
    if hit is not None:
        return hit
    t = type(e)
    if t is Const:
        out = const(e.value) if e.value < 0.0 else e
    elif t is Var:
        out = e
    elif t is Unary:
        out = unary_(e.op, _simplify(e.arg, memo))
    else:
        a = _simplify(e.lhs, memo)
        b = _simplify(e.rhs, memo)
        if e.op == "add":
            out = add_(a, b)
        elif e.op == "sub":
            out = sub_(a, b)
        elif e.op == "mul":
            out = mul_(a, b)
        elif e.op == "div":
            out = div_(a, b)
        else:
            out = pow_(a, b)
    memo[key] = out
    return out


def variables(e: Expr) -> set:
    """Names of all coordinates appearing in the tree."""
    out = set()
    stack = [e]
    seen = set()
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        t = type(node)
        if t is Var:
            out.add(node.name)
        elif t is Unary:
            stack.append(node.arg)
        elif t is Binary:
            stack.append(node.lhs)
            stack.append(node.rhs)
    return out


# ---------------------------------------------------------------------------
# vectorized compilation (numpy); shared subtrees become shared locals
# ---------------------------------------------------------------------------

_NUMPY_UNARY = {
    "neg": "-({})",
    "sin": "np.sin({})",
    "cos": "np.cos({})",
    "exp": "np.exp({})",
    "ln": "np.log({})",
    "sqrt": "np.sqrt({})",
    "abs": "np.abs({})",
    "tanh": "np.tanh({})",
}


def compile_fns(exprs, coord_names):
    """Compile a flat list of expressions into one numpy-vectorized callable.

    The callable takes one array (or scalar) per coordinate, positionally in
    ``coord_names`` order, and returns a list of results.  No domain checks:
    out-of-domain inputs produce nan/inf for the caller to detect.
    """
    lines = []
    names = {}
    counter = 0

    def emit(node):
        nonlocal counter
        key = id(node)
        if key in names:
            return names[key]
        t = type(node)
        if t is Const:
            code = _fmt_number(node.value)
            if "." not in code and "e" not in code:
                code += ".0"
        elif t is Var:
            code = f"_c{coord_names.index(node.name)}"
        elif t is Unary:
            code = _NUMPY_UNARY[node.op].format(emit(node.arg))
        else:
            a, b = emit(node.lhs), emit(node.rhs)
            if node.op == "pow":
                code = f"({a}) ** ({b})"
            else:
                sym = {"add": "+", "sub": "-", "mul": "*", "div": "/"}[node.op]
                code = f"({a}) {sym} ({b})"
        var = f"_t{counter}"
        counter += 1
        lines.append(f"    {var} = {code}")
        names[key] = var
        return var

    results = [emit(x) for x in exprs]
    args = ", ".join(f"_c{i}" for i in range(len(coord_names)))
    source = "def _compiled({}):\n{}\n    return [{}]".format(
        args, "\n".join(lines) or "    pass", ", ".join(results)
    )
    scope = {"np": np}
    exec(source, scope)  # noqa: S102 - source is generated from the tree
    return scope["_compiled"]
