"""IEEE-754 scalar semantics in plain Python.

``math`` raises where C returns inf/nan; these wrappers return what the tape
VM computes so the tree interpreter and the tape agree on every binding.
"""
import math

INF = math.inf
NAN = math.nan


def div(a, b):
    try:
        return a / b
    except ZeroDivisionError:
        if a != a or a == 0:
            return NAN
        return math.copysign(INF, a) * math.copysign(1.0, b)


def _guard(fn):
    def wrapped(x):
        try:
            return fn(x)
        except OverflowError:
            return INF
        except ValueError:
            return NAN
    wrapped.__name__ = fn.__name__
    return wrapped


def log(x):
    if x == 0:
        return -INF
    if x < 0 or x != x:
        return NAN
    return math.log(x)


def sqrt(x):
    if x < 0:
        return NAN
    return math.sqrt(x)


def sign(x):
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    return x  # keeps +-0 and nan


def fmin(a, b):
    return b if b < a else a


def fmax(a, b):
    return b if b > a else a


ELEMENTWISE = {
    "sin": _guard(math.sin),
    "cos": _guard(math.cos),
    "tan": _guard(math.tan),
    "exp": _guard(math.exp),
    "log": log,
    "sqrt": sqrt,
    "abs": abs,
}

BINARY = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "/": div,
    "min": fmin,
    "max": fmax,
    "emul": lambda a, b: a * b,
}

COMPARE = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
    ">=": lambda a, b: a >= b,
    ">": lambda a, b: a > b,
}


def ipow(x, k):
    """x**k by left-to-right multiplication, the order the tape uses."""
    if k == 0:
        return 1.0
    acc = x
    for _ in range(k - 1):
        acc = acc * x
    return acc
