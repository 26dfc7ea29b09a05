"""Strictly monotone pseudo-Boolean objectives with exact, totally ordered values.

Values are Python ints or ``fractions.Fraction``: comparisons are exact and
the type is closed under subtraction, which the per-bit value computation
relies on. Floating point is never used for fitness.
"""

from __future__ import annotations

from fractions import Fraction
from pathlib import Path
from random import Random
from typing import Callable, Union

from .core import ContractViolation, FlipSet, ParameterError, SearchPoint

FitnessValue = Union[int, Fraction]


class MonotoneFunction:
    """Interface for strictly monotone objectives.

    Implementations must guarantee eval(x) < eval(y) whenever x != y and
    x <= y coordinatewise, and must be safe for concurrent read-only use.
    ``delta`` must equal eval(x with flips applied) - eval(x) exactly;
    the default computes two full evaluations, subclasses override it with
    O(flips) incremental forms.
    """

    n: int

    def eval(self, x: SearchPoint) -> FitnessValue:
        self._check_dim(x)
        return self.eval_bits(x.bits)

    def eval_bits(self, bits: int) -> FitnessValue:
        raise NotImplementedError

    def delta(self, x: SearchPoint, fs: FlipSet) -> FitnessValue:
        self._check_dim(x)
        fs.validate_for(x)
        return self.delta_bits(x.bits, fs.up, fs.down)

    def delta_bits(self, bits: int, ups, downs) -> FitnessValue:
        new = bits
        for i in ups:
            new |= 1 << i
        for i in downs:
            new &= ~(1 << i)
        return self.eval_bits(new) - self.eval_bits(bits)

    def spec(self) -> str:
        """CLI spec string naming this function (used in trace headers)."""
        raise NotImplementedError

    def _check_dim(self, x: SearchPoint) -> None:
        if x.n != self.n:
            raise ContractViolation(f"point length {x.n} does not match function dimension {self.n}")


class OneMax(MonotoneFunction):
    """Counts one-bits."""

    def __init__(self, n: int):
        if n < 1:
            raise ParameterError("dimension must be >= 1")
        self.n = n

    def eval_bits(self, bits: int) -> int:
        return bits.bit_count()

    def delta_bits(self, bits: int, ups, downs) -> int:
        return len(ups) - len(downs)

    def spec(self) -> str:
        return "onemax"


class LinearWeights(MonotoneFunction):
    """Weighted sum of one-bits with positive exact weights."""

    def __init__(self, weights, origin: str | None = None):
        ws = list(weights)
        if not ws:
            raise ParameterError("weights must be nonempty")
        for w in ws:
            if not isinstance(w, (int, Fraction)):
                raise ParameterError(f"weight {w!r} is not an exact rational")
            if w <= 0:
                raise ParameterError(f"weight {w} is not positive")
        self.n = len(ws)
        self.weights = ws
        self._origin = origin or "linear:<inline>"

    def eval_bits(self, bits: int) -> FitnessValue:
        total = 0
        w = self.weights
        i = 0
        while bits:
            if bits & 1:
                total += w[i]
            bits >>= 1
            i += 1
        return total

    def delta_bits(self, bits: int, ups, downs) -> FitnessValue:
        w = self.weights
        return sum(w[i] for i in ups) - sum(w[j] for j in downs)

    def bit_weight(self, j: int) -> FitnessValue:
        return self.weights[j]

    def spec(self) -> str:
        return self._origin


class ExponentialWeights(LinearWeights):
    """Linear function with weights base**i; heavy tails provoke bad updates.

    Weights are exact rationals (ints when the base is an integer), so no n
    overflows.
    """

    def __init__(self, n: int, base):
        base = Fraction(base)
        if base <= 1:
            raise ParameterError(f"base must exceed 1, got {base}")
        self.base = base
        b = base.numerator if base.denominator == 1 else base
        super().__init__([b**i for i in range(n)], origin=f"expw:{base}")


class CustomPlugin(MonotoneFunction):
    """Adapter for user-supplied objectives.

    The callable must honor the strict-monotonicity contract; run
    ``check_monotone_exhaustive``/``check_monotone_sampled`` to guard it.
    """

    def __init__(self, n: int, eval_bits: Callable[[int], FitnessValue], name: str,
                 delta_bits: Callable[[int, tuple, tuple], FitnessValue] | None = None):
        if n < 1:
            raise ParameterError("dimension must be >= 1")
        self.n = n
        self._eval_bits = eval_bits
        self._delta_bits = delta_bits
        self._name = name

    def eval_bits(self, bits: int) -> FitnessValue:
        return self._eval_bits(bits)

    def delta_bits(self, bits: int, ups, downs) -> FitnessValue:
        if self._delta_bits is not None:
            return self._delta_bits(bits, ups, downs)
        return super().delta_bits(bits, ups, downs)

    def spec(self) -> str:
        return f"plugin:{self._name}"


# CustomPlugin factories addressable as "plugin:<name>"; factories take n.
PLUGINS: dict[str, Callable[[int], MonotoneFunction]] = {}


def register_plugin(name: str, factory: Callable[[int], MonotoneFunction]) -> None:
    PLUGINS[name] = factory


def random_linear(n: int, seed: int) -> LinearWeights:
    """Seeded random integer weights in [1, n*n]; exact and fast to evaluate."""
    rng = Random(seed)
    f = LinearWeights([rng.randint(1, max(2, n * n)) for _ in range(n)],
                      origin=f"plugin:randlin{seed}")
    return f


for _s in (1, 2, 3):
    register_plugin(f"randlin{_s}", lambda n, _s=_s: random_linear(n, _s))


def load_weights(path: str | Path) -> list[Fraction]:
    """Weights file: one exact rational per line, index order 0..n-1, '#' comments."""
    ws = []
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            ws.append(Fraction(line))
        except (ValueError, ZeroDivisionError) as exc:
            raise ParameterError(f"{path}:{lineno}: not a rational: {line!r}") from exc
    return ws


def parse_function(spec: str, n: int) -> MonotoneFunction:
    """Resolve a function spec string: onemax | linear:<path> | expw:<base> | plugin:<name>."""
    if spec == "onemax":
        return OneMax(n)
    if spec.startswith("linear:"):
        path = spec[len("linear:"):]
        ws = load_weights(path)
        if len(ws) != n:
            raise ParameterError(f"weights file {path} has {len(ws)} entries, expected n={n}")
        return LinearWeights(ws, origin=spec)
    if spec.startswith("expw:"):
        try:
            base = Fraction(spec[len("expw:"):])
        except (ValueError, ZeroDivisionError) as exc:
            raise ParameterError(f"bad expw base in {spec!r}") from exc
        return ExponentialWeights(n, base)
    if spec.startswith("plugin:"):
        name = spec[len("plugin:"):]
        if name not in PLUGINS:
            raise ParameterError(f"unknown plugin {name!r}; registered: {sorted(PLUGINS)}")
        f = PLUGINS[name](n)
        if f.n != n:
            raise ParameterError(f"plugin {name!r} built dimension {f.n}, expected {n}")
        return f
    raise ParameterError(f"unknown function spec {spec!r}")


def check_monotone_exhaustive(f: MonotoneFunction):
    """Scan all n * 2^(n-1) coordinatewise-adjacent pairs; None means no violation.

    Returns the first violating pair (x, y) with y = x plus one bit and
    f(x) >= f(y), as SearchPoints. Checking adjacent pairs suffices because
    any coordinatewise-comparable pair is linked by a chain of them.
    """
    n = f.n
    if n > 16:
        raise ParameterError("exhaustive check is limited to n <= 16")
    vals = [f.eval_bits(b) for b in range(1 << n)]
    for b in range(1 << n):
        for i in range(n):
            if not b >> i & 1 and vals[b] >= vals[b | 1 << i]:
                return SearchPoint.from_bits(n, b), SearchPoint.from_bits(n, b | 1 << i)
    return None


def check_monotone_sampled(f: MonotoneFunction, trials: int, seed: int = 0):
    """Probabilistic guard for large n: random adjacent pairs, None means ok."""
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    rng = Random(seed)
    n = f.n
    for _ in range(trials):
        b = rng.getrandbits(n)
        i = rng.randrange(n)
        lo, hi = b & ~(1 << i), b | 1 << i
        if f.eval_bits(lo) >= f.eval_bits(hi):
            return SearchPoint.from_bits(n, lo), SearchPoint.from_bits(n, hi)
    return None
