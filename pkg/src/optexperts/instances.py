"""Instance generators and reductions.

* Hard experts: ``N = n*n`` experts split into ``n`` blocks of ``n``; one
  hidden good expert per block.  Loss is 0 only when both the expert and
  the action are good and the expert is not below the action.
* Hypercube functions with a single local maximum and the zero-sum game
  built from them, whose value encodes the parity of the maximum.
* The scaled multilinear extension of a hypercube function, its vertex
  minimum and randomized rounding back to the cube.
* Binary classification: the hard-experts loss with a hidden label per
  feature, flipped when the example carries the other label.

Vertices of ``{0,1}^d`` are integers; coordinate ``i`` is bit ``i``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from .core import ExpertsError, OraclePair
from .games import GameMatrix

# ------------------------------------------------------------ hard experts


@dataclass(frozen=True)
class HardExpertsInstance:
    n: int
    good: np.ndarray  # good[i] is the good expert of block i
    seed: int | None = None

    @property
    def N(self) -> int:
        return self.n * self.n

    def good_mask(self) -> np.ndarray:
        mask = np.zeros(self.N, dtype=bool)
        mask[self.good] = True
        return mask

    def loss_table(self) -> np.ndarray:
        """Dense ``N x N`` table; only for small ``n``."""
        mask = self.good_mask()
        idx = np.arange(self.N)
        zero = mask[:, None] & mask[None, :] & (idx[:, None] >= idx[None, :])
        return np.where(zero, 0.0, 1.0)

    def canonical_actions(self, T: int) -> np.ndarray:
        """``y_t`` is the good expert of block ``t mod n`` (blocks in order, repeating)."""
        return self.good[np.arange(T) % self.n]

    def canonical_leaders(self, T: int) -> np.ndarray:
        """Leader after each round of the canonical sequence (Opt on the history)."""
        return self.good[np.minimum(np.arange(T), self.n - 1)]


class HardExpertsOracle(OraclePair):
    """Value by rule, Opt by the max-of-support rule.

    Opt returns the largest good expert in the support, or the largest
    support element when none is good, so its answer always lies in the
    support; every call checks this.
    """

    def __init__(self, inst: HardExpertsInstance):
        super().__init__(inst.N)
        self.instance = inst
        self.mask = inst.good_mask()

    def _value(self, experts, action):
        zero = self.mask[experts] & self.mask[action] & (experts >= action)
        return np.where(zero, 0.0, 1.0)

    def _opt(self, atoms):
        idx = np.array([i for i, _ in atoms])
        hit = idx[self.mask[idx]]
        x = int(hit.max()) if hit.size else int(idx.max())
        if x not in idx:
            raise ExpertsError("oracle-law", "Opt answer outside the support")
        return x


def gen_hard_experts(n: int, seed: int):
    """Returns ``(instance, oracle)``; block ``i`` covers ``[n*i, n*(i+1))``."""
    if n < 1:
        raise ExpertsError("param-domain", "need n >= 1")
    rng = np.random.default_rng(seed)
    good = np.arange(n) * n + rng.integers(0, n, size=n)
    inst = HardExpertsInstance(n=n, good=good.astype(np.int64), seed=seed)
    return inst, HardExpertsOracle(inst)


# ---------------------------------------------------------- hypercube tools


def hypercube_neighbors(v: int, d: int) -> np.ndarray:
    return np.array([v ^ (1 << i) for i in range(d)], dtype=np.int64)


def closed_neighborhood(support, d: int) -> np.ndarray:
    """``S`` together with every Hamming neighbor of ``S``, sorted."""
    s = np.asarray(support, dtype=np.int64)
    flips = (1 << np.arange(d, dtype=np.int64))
    return np.unique(np.concatenate([s, (s[:, None] ^ flips[None, :]).ravel()]))


def popcount(v):
    return np.bitwise_count(np.asarray(v, dtype=np.uint64)).astype(np.int64)


@dataclass
class HypercubeFunction:
    d: int
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.int64)
        if self.values.shape != (1 << self.d,):
            raise ExpertsError("domain", "need one value per vertex")

    @property
    def N(self) -> int:
        return 1 << self.d

    def local_maxima(self) -> np.ndarray:
        """Mask of vertices at least as large as every neighbor."""
        v = np.arange(self.N, dtype=np.int64)
        ok = np.ones(self.N, dtype=bool)
        for i in range(self.d):
            ok &= self.values >= self.values[v ^ (1 << i)]
        return ok

    def is_globally_consistent(self) -> bool:
        return int(self.local_maxima().sum()) == 1


def gen_staircase_function(d: int, seed: int) -> HypercubeFunction:
    """A function whose only local maximum is a random goal vertex ``g``.

    ``f(v) = 2 (d - dist(v, g)) + [v on P] + c`` where ``P`` is a random
    monotone path from the antipode of ``g`` to ``g`` and ``c`` is a random
    offset that sets the parity of the maximum.  Every ``v != g`` has a
    neighbor closer to ``g`` that is larger by at least one.
    """
    if not 1 <= d <= 24:
        raise ExpertsError("param-domain", "need 1 <= d <= 24")
    rng = np.random.default_rng(seed)
    N = 1 << d
    g = int(rng.integers(0, N))
    v = np.arange(N, dtype=np.int64)
    vals = 2 * (d - popcount(v ^ g))
    # walk from the antipode towards g, fixing one coordinate at a time
    node = g ^ (N - 1)
    path = [node]
    for i in rng.permutation(d):
        node ^= 1 << int(i)
        path.append(node)
    vals[np.array(path)] += 1
    vals += int(rng.integers(0, 4))
    f = HypercubeFunction(d, vals)
    if d <= 16 and not f.is_globally_consistent():  # pragma: no cover - guarded by construction
        raise ExpertsError("not-globally-consistent", "staircase construction failed")
    return f


# ------------------------------------------------------------- game from f


def parity_value(k) -> float:
    """1/4 for even ``k``, 3/4 for odd ``k``."""
    return 0.25 if int(k) % 2 == 0 else 0.75


class AldousGame(GameMatrix):
    """Game whose value is 1/4 or 3/4 by the parity of ``max f``.

    ``G(i, j)`` is the parity value of ``f(i)`` when both are local maxima,
    else 0 if ``f(i) >= f(j)``, else 1 (checked in that order).  Both best
    responses return the argmax of ``f`` over the support and its
    neighbors; they read ``f`` nowhere else.
    """

    def __init__(self, f: HypercubeFunction):
        super().__init__(size=f.N)
        self.f = f
        self.d = f.d
        self.is_local_max = f.local_maxima()
        self.f_reads = 0
        self.read_log: list[np.ndarray] | None = None

    def _read(self, v):
        v = np.asarray(v, dtype=np.int64)
        self.f_reads += v.size
        if self.read_log is not None:
            self.read_log.append(v.ravel().copy())
        return self.f.values[v]

    def _value(self, i, j):
        i, j = np.broadcast_arrays(i, j)
        fi = self._read(i)
        fj = self._read(j)
        lam = np.where(fi % 2 == 0, 0.25, 0.75)
        both = self.is_local_max[i] & self.is_local_max[j]
        return np.where(both, lam, np.where(fi >= fj, 0.0, 1.0))

    def _best_response(self, atoms):
        hood = closed_neighborhood([i for i, _ in atoms], self.d)
        return int(hood[np.argmax(self._read(hood))])

    _br_row = _best_response
    _br_col = _best_response

    def global_max(self) -> int:
        return int(np.argmax(self.f.values))

    def dense(self) -> np.ndarray:
        """Full payoff matrix without metering; for small ``d``."""
        vals = self.f.values
        lam = np.where(vals % 2 == 0, 0.25, 0.75)
        both = self.is_local_max[:, None] & self.is_local_max[None, :]
        return np.where(both, lam[:, None], np.where(vals[:, None] >= vals[None, :], 0.0, 1.0))


def gen_aldous_game(f: HypercubeFunction) -> AldousGame:
    if not f.is_globally_consistent():
        raise ExpertsError("not-globally-consistent", "f must have exactly one local maximum")
    return AldousGame(f)


# --------------------------------------------------- multilinear extension


def _check_point(x, d):
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (d,) or x.ndim > 2 or not np.all(np.isfinite(x)) or x.min() < 0 or x.max() > 1:
        raise ExpertsError("domain", "point must lie in [0, 1]^d")
    return x


def extend_multilinear(values, x):
    """Multilinear interpolation of ``values`` at ``x``, scaled by ``1/sqrt(d)``.

    Contracts one coordinate at a time, O(2^d).  ``x`` may be a single
    point or an ``(M, d)`` batch; a batch returns an array.
    """
    values = np.asarray(values, dtype=float)
    d = int(values.size).bit_length() - 1
    if d < 1 or values.size != 1 << d:
        raise ExpertsError("domain", "need 2^d values with d >= 1")
    x = _check_point(x, d)
    pts = np.atleast_2d(x)
    t = np.broadcast_to(values, (pts.shape[0], values.size))
    for i in range(d):
        # bit i is the lowest remaining bit: pairs (v, v + 1) differ in it
        xi = pts[:, i:i + 1]
        t = t[:, 0::2] * (1.0 - xi) + t[:, 1::2] * xi
    out = t[:, 0] / math.sqrt(d)
    return float(out[0]) if x.ndim == 1 else out


def extension_partials(values, x) -> np.ndarray:
    """Partial derivatives of the extension; each is a difference of two faces."""
    values = np.asarray(values, dtype=float)
    d = int(values.size).bit_length() - 1
    x = _check_point(x, d)
    out = np.empty(d)
    for i in range(d):
        hi, lo = x.copy(), x.copy()
        hi[i], lo[i] = 1.0, 0.0
        out[i] = extend_multilinear(values, hi) - extend_multilinear(values, lo)
    return out


def coordinate_descent_min(values, x0, max_sweeps: int = 100) -> tuple[float, np.ndarray]:
    """Coordinate descent on the extension from ``x0``.

    The extension is linear in each coordinate, so the exact minimizer
    along a coordinate is an endpoint.
    """
    values = np.asarray(values, dtype=float)
    d = int(values.size).bit_length() - 1
    x = _check_point(x0, d).copy()
    for _ in range(max_sweeps):
        moved = False
        for i in range(d):
            lo, hi = x.copy(), x.copy()
            lo[i], hi[i] = 0.0, 1.0
            a = extend_multilinear(values, lo)
            b = extend_multilinear(values, hi)
            new = 0.0 if a < b else 1.0 if b < a else x[i]
            cur = extend_multilinear(values, x)
            if min(a, b) < cur and new != x[i]:
                x[i] = new
                moved = True
        if not moved:
            break
    return extend_multilinear(values, x), x


def min_extension_check(values, rng, starts: int = 32) -> tuple[float, float]:
    """``(cube_min, vertex_min)``: multistart descent vs exhaustive vertices."""
    values = np.asarray(values, dtype=float)
    d = int(values.size).bit_length() - 1
    if d > 12:
        raise ExpertsError("domain", "need d <= 12")
    vertex_min = float(values.min()) / math.sqrt(d)
    cube_min = min(coordinate_descent_min(values, rng.random(d))[0] for _ in range(starts))
    return cube_min, vertex_min


def randomized_round(x, rng, size=None):
    """Vertex with bit ``i`` set independently with probability ``x[i]``.

    With ``size`` returns that many independent vertices.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or not np.all(np.isfinite(x)) or x.min() < 0 or x.max() > 1:
        raise ExpertsError("domain", "point must lie in [0, 1]^d")
    weights = np.int64(1) << np.arange(x.size, dtype=np.int64)
    if size is None:
        return int(((rng.random(x.size) < x) * weights).sum())
    return ((rng.random((int(size), x.size)) < x) * weights).sum(axis=1)


# --------------------------------------------------- binary classification


@dataclass(frozen=True)
class BinaryClassificationInstance:
    """Hypotheses and features are ``[N]``; action ``2*x + y`` is example ``(x, y)``."""

    n: int
    good: np.ndarray
    good_label: np.ndarray
    seed: int | None = None

    @property
    def N(self) -> int:
        return self.n * self.n

    def canonical_actions(self, T: int) -> np.ndarray:
        x = self.good[np.arange(T) % self.n]
        return 2 * x + self.good_label[x]


def encode_example(x: int, y: int) -> int:
    return 2 * int(x) + int(y)


def decode_example(action: int) -> tuple[int, int]:
    return int(action) // 2, int(action) % 2


class BinaryClassificationOracle(OraclePair):
    """Value by rule, Opt by the minimizing-prefix ERM rule."""

    def __init__(self, inst: BinaryClassificationInstance):
        super().__init__(inst.N)
        self.instance = inst
        self.mask = np.zeros(inst.N, dtype=bool)
        self.mask[inst.good] = True
        self.num_actions = 2 * inst.N
        nongood = np.flatnonzero(~self.mask)
        self._fallback = int(nongood[0]) if nongood.size else int(inst.good[0])

    def base_loss(self, h, x):
        h = np.asarray(h)
        return np.where(self.mask[h] & self.mask[x] & (h >= x), 0.0, 1.0)

    def _value(self, experts, action):
        x, y = decode_example(action)
        base = self.base_loss(experts, x)
        return base if y == self.instance.good_label[x] else 1.0 - base

    def _opt(self, atoms):
        inst = self.instance
        n = inst.n
        block = np.full(inst.N, -1, dtype=np.int64)
        block[inst.good] = np.arange(n)
        agree = np.zeros(n)  # mass on (x*_i, y*(x*_i))
        flip = np.zeros(n)  # mass on (x*_i, 1 - y*(x*_i))
        for a, m in atoms:
            x, y = decode_example(a)
            b = block[x]
            if b >= 0:
                if y == inst.good_label[x]:
                    agree[b] += m
                else:
                    flip[b] += m
        # cost(i) = flip[:i].sum() + agree[i:].sum(), i = 0..n
        cost = np.concatenate([[0.0], np.cumsum(flip)]) + np.concatenate([np.cumsum(agree[::-1])[::-1], [0.0]])
        i_star = int(np.argmin(cost))
        return self._fallback if i_star == 0 else int(inst.good[i_star - 1])


def gen_binary_classification(n: int, seed: int):
    if n < 1:
        raise ExpertsError("param-domain", "need n >= 1")
    rng = np.random.default_rng(seed)
    good = (np.arange(n) * n + rng.integers(0, n, size=n)).astype(np.int64)
    labels = rng.integers(0, 2, size=n * n).astype(np.int64)
    inst = BinaryClassificationInstance(n=n, good=good, good_label=labels, seed=seed)
    return inst, BinaryClassificationOracle(inst)


# ------------------------------------------------------------ text specs

FAMILIES = ("hard_experts", "aldous", "binary_cls")
_SPEC_RE = re.compile(r"^family=(\w+) n=(\d+) d=(\d+) seed=(\d+)$")


@dataclass(frozen=True)
class InstanceSpec:
    family: str
    n: int = 0
    d: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ExpertsError("spec-error", f"unknown instance family {self.family!r}")
        if self.n < 0 or self.d < 0 or not 0 <= self.seed < 2 ** 64:
            raise ExpertsError("spec-error", "n, d must be >= 0 and seed a u64")

    def to_text(self) -> str:
        return f"family={self.family} n={self.n} d={self.d} seed={self.seed}"

    @classmethod
    def from_text(cls, text: str) -> InstanceSpec:
        m = _SPEC_RE.match(text.strip())
        if not m:
            raise ExpertsError("spec-error", f"cannot parse instance spec {text!r}")
        return cls(m.group(1), int(m.group(2)), int(m.group(3)), int(m.group(4)))


def build_instance(spec: InstanceSpec):
    """``(instance, oracle_or_game)`` for a spec."""
    if spec.family == "hard_experts":
        return gen_hard_experts(spec.n, spec.seed)
    if spec.family == "binary_cls":
        return gen_binary_classification(spec.n, spec.seed)
    f = gen_staircase_function(spec.d, spec.seed)
    return f, gen_aldous_game(f)
