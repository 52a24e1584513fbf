"""Multigraph expansion calculus.

Node labels are 0-based. A multigraph stores a multiplicity for each
unordered pair ``(i, j)`` with ``i <= j``; ``i == j`` is a self-loop. The
degree of node k is ``sum_{j != k} m_kj + 2 m_kk``, which is the exponent of
``x_k`` in the corresponding monomial.

Enumeration tables hold one row per multicycle: ``pair_mult`` (G, P) over the
off-diagonal pairs in lexicographic order and ``loop_mult`` (G, N).
"""

from __future__ import annotations

import io
import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Mapping

import numpy as np
from numpy.polynomial import hermite_e

from .density import DensityModel, FisherSet, log_tail, lr_coefficient, ratio_second_moment
from .ensembles import PriorSpec, SeedLike, make_rng
from .errors import ContractError, DomainError, ModelError, NumericError, ResourceError

MAX_OFFDIAG = 4
MAX_LOOP = 2
ENUM_NODE_CAP = 8
EXPANSION_NODE_CAP = 6
CUTOFF_NODE_CAP = 7
DEFAULT_GRAPH_CAP = 2_000_000


def pair_list(N: int) -> list[tuple[int, int]]:
    iu = np.triu_indices(N, 1)
    return list(zip(iu[0].tolist(), iu[1].tolist()))


def pair_index(i: int, j: int, N: int) -> int:
    """Position of pair (i, j), i < j, in lexicographic order."""
    if i > j:
        i, j = j, i
    return i * N - i * (i + 1) // 2 + (j - i - 1)


def incidence(N: int) -> np.ndarray:
    """(P, N) 0/1 matrix of pair endpoints."""
    inc = np.zeros((N * (N - 1) // 2, N), dtype=np.int64)
    for p, (i, j) in enumerate(pair_list(N)):
        inc[p, i] = inc[p, j] = 1
    return inc


# --- the graph type -----------------------------------------------------------


@dataclass(frozen=True)
class GraphStats:
    m: int
    n: int
    n_r: tuple[int, int, int, int]
    n_loop: tuple[int, int]
    degrees: tuple[int, ...]


@dataclass(frozen=True)
class Multigraph:
    """Multiplicity map on node pairs; zero multiplicities are dropped."""

    N: int
    edges: tuple[tuple[int, int, int], ...] = ()

    def __post_init__(self):
        canon = {}
        for i, j, m in self.edges:
            i, j = (int(i), int(j)) if i <= j else (int(j), int(i))
            if not (0 <= i and j < self.N):
                raise ContractError(f"edge ({i}, {j}) outside nodes 0..{self.N - 1}")
            if m < 0:
                raise ContractError(f"negative multiplicity on ({i}, {j})")
            if (i, j) in canon:
                raise ContractError(f"pair ({i}, {j}) listed twice")
            canon[(i, j)] = int(m)
        object.__setattr__(self, "edges", tuple(sorted((i, j, m) for (i, j), m in canon.items() if m)))

    @classmethod
    def from_mult(cls, N: int, mult: Mapping[tuple[int, int], int]) -> "Multigraph":
        return cls(N, tuple((i, j, m) for (i, j), m in mult.items()))

    @classmethod
    def from_row(cls, N: int, pair_mult, loop_mult=None) -> "Multigraph":
        edges = [(i, j, int(m)) for (i, j), m in zip(pair_list(N), pair_mult) if m]
        if loop_mult is not None:
            edges += [(k, k, int(m)) for k, m in enumerate(loop_mult) if m]
        return cls(N, tuple(edges))

    @property
    def mult(self) -> dict[tuple[int, int], int]:
        return {(i, j): m for i, j, m in self.edges}

    def multiplicity(self, i: int, j: int) -> int:
        return self.mult.get((min(i, j), max(i, j)), 0)

    @cached_property
    def stats(self) -> GraphStats:
        deg = [0] * self.N
        n_r = [0, 0, 0, 0]
        n_loop = [0, 0]
        m_total = 0
        for i, j, m in self.edges:
            m_total += m
            if i == j:
                deg[i] += 2 * m
                if m <= 2:
                    n_loop[m - 1] += 1
            else:
                deg[i] += m
                deg[j] += m
            if m <= 4:
                n_r[m - 1] += 1
        return GraphStats(m_total, len(self.edges), tuple(n_r), tuple(n_loop), tuple(deg))

    @property
    def has_loops(self) -> bool:
        return any(i == j for i, j, _ in self.edges)

    def support(self) -> frozenset[tuple[int, int]]:
        return frozenset((i, j) for i, j, _ in self.edges)

    def union(self, other: "Multigraph") -> "Multigraph":
        """Multiplicity-wise sum of two graphs on the same node set."""
        if other.N != self.N:
            raise ContractError("union needs graphs on the same node set")
        mult = self.mult
        for (i, j), m in other.mult.items():
            mult[(i, j)] = mult.get((i, j), 0) + m
        return Multigraph.from_mult(self.N, mult)

    def to_text(self) -> str:
        return format_multigraph(self)


def graph_stats(g: Multigraph) -> GraphStats:
    return g.stats


def is_multicycle(g: Multigraph) -> bool:
    return all(d % 2 == 0 for d in g.stats.degrees)


# --- text format ------------------------------------------------------------------


def format_multigraph(g: Multigraph) -> str:
    """Canonical text form: a ``# N=<n>`` header and one sorted "i j m" line per edge."""
    lines = [f"# N={g.N}"] + [f"{i} {j} {m}" for i, j, m in g.edges]
    return "\n".join(lines) + "\n"


def parse_multigraph(text: str, N: int | None = None) -> Multigraph:
    edges = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            key = line[1:].strip()
            if key.startswith("N=") and N is None:
                N = int(key[2:])
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ContractError(f"line {lineno}: expected 'i j m', got {raw!r}")
        edges.append(tuple(int(v) for v in parts))
    if N is None:
        N = 1 + max((max(i, j) for i, j, _ in edges), default=-1)
    return Multigraph(N, tuple(edges))


def write_multigraph(g: Multigraph, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_multigraph(g))


def read_multigraph(path, N: int | None = None) -> Multigraph:
    with open(path) as fh:
        return parse_multigraph(fh.read(), N)


def same_graph_file(path_a, path_b) -> bool:
    """Compare two multigraph files after canonicalization."""
    return read_multigraph(path_a) == read_multigraph(path_b)


# --- enumeration ------------------------------------------------------------------


def _multiplicity_choices(ell: int) -> tuple[tuple[int, ...], tuple[int, ...]]:
    if not 1 <= ell <= MAX_OFFDIAG:
        raise DomainError(f"ell must be in 1..{MAX_OFFDIAG}, got {ell}")
    odd = tuple(m for m in (1, 3) if m <= ell)
    even = tuple(m for m in (0, 2, 4) if m <= ell)
    return odd, even


def parity_patterns(N: int) -> np.ndarray:
    """All even-degree 0/1 patterns on the pairs of K_N, shape (2^{C(N-1,2)}, P).

    Pairs avoiding the last node are free; each pair (i, N-1) takes the parity
    that makes node i even, and node N-1 is then even automatically.
    """
    pairs = pair_list(N)
    P = len(pairs)
    free = [p for p, (i, j) in enumerate(pairs) if j != N - 1]
    F = len(free)
    codes = np.arange(1 << F, dtype=np.int64)
    bits = (codes[:, None] >> np.arange(F - 1, -1, -1)) & 1
    par = np.zeros((codes.size, P), dtype=np.int8)
    par[:, free] = bits
    inc = incidence(N)
    deg = par[:, free].astype(np.int64) @ inc[free]
    for i in range(N - 1):
        par[:, pair_index(i, N - 1, N)] = deg[:, i] % 2
    return par


@dataclass(frozen=True, eq=False)
class MulticycleTable:
    N: int
    ell: int
    pair_mult: np.ndarray
    loop_mult: np.ndarray

    def __len__(self) -> int:
        return self.pair_mult.shape[0]

    @cached_property
    def sizes(self) -> np.ndarray:
        return self.pair_mult.sum(axis=1, dtype=np.int64) + self.loop_mult.sum(axis=1, dtype=np.int64)

    @cached_property
    def lengths(self) -> np.ndarray:
        return (self.pair_mult > 0).sum(axis=1) + (self.loop_mult > 0).sum(axis=1)

    @cached_property
    def degrees(self) -> np.ndarray:
        return self.pair_mult.astype(np.int64) @ incidence(self.N) + 2 * self.loop_mult.astype(np.int64)

    def graph(self, g: int) -> Multigraph:
        return Multigraph.from_row(self.N, self.pair_mult[g], self.loop_mult[g])

    def graphs(self) -> Iterator[Multigraph]:
        for g in range(len(self)):
            yield self.graph(g)

    def size_counts(self) -> dict[int, int]:
        vals, counts = np.unique(self.sizes, return_counts=True)
        return {int(v): int(c) for v, c in zip(vals, counts)}


def multicycle_table(N: int, ell: int = 4, self_loops: bool = False, max_size: int | None = None,
                     cap: int = DEFAULT_GRAPH_CAP, node_cap: int = ENUM_NODE_CAP) -> MulticycleTable:
    """Every ell-multicycle on N nodes (self-loop multiplicity <= 2), each exactly once.

    Rows are sorted lexicographically by (pair multiplicities, loop multiplicities).
    The empty graph is included. Raises ResourceError rather than truncating.
    """
    if N < 1:
        raise ContractError("N must be positive")
    if N > node_cap:
        raise ResourceError(f"exhaustive enumeration limited to N <= {node_cap}, got {N}")
    odd, even = _multiplicity_choices(ell)
    limit = math.inf if max_size is None else max_size
    par = parity_patterns(N) if N > 1 else np.zeros((1, 0), dtype=np.int8)
    P = par.shape[1]
    # odd pairs still to be placed give a lower bound on the final size
    odd_left = par[:, ::-1].cumsum(axis=1)[:, ::-1].astype(np.int64) if P else np.zeros((1, 0), np.int64)
    keep = odd_left[:, 0] <= limit if P else np.ones(1, bool)
    par, odd_left = par[keep], odd_left[keep]
    mult = np.zeros((par.shape[0], P), dtype=np.int8)
    size = np.zeros(par.shape[0], dtype=np.int64)
    for c in range(P):
        blocks_p, blocks_m, blocks_s, blocks_o = [], [], [], []
        for parity, choices in ((1, odd), (0, even)):
            rows = np.flatnonzero(par[:, c] == parity)
            for v in choices:
                s = size[rows] + v
                rest = odd_left[rows, c + 1] if c + 1 < P else 0
                ok = rows[s + rest <= limit]
                if ok.size == 0:
                    continue
                m = mult[ok].copy()
                m[:, c] = v
                blocks_p.append(par[ok])
                blocks_m.append(m)
                blocks_s.append(size[ok] + v)
                blocks_o.append(odd_left[ok])
        par = np.concatenate(blocks_p)
        mult = np.concatenate(blocks_m)
        size = np.concatenate(blocks_s)
        odd_left = np.concatenate(blocks_o)
        if mult.shape[0] > cap:
            raise ResourceError(f"more than {cap} multicycles for N={N}, ell={ell}; raise cap or bound max_size")
    if self_loops:
        loop_cfg = np.array(list(itertools.product(range(MAX_LOOP + 1), repeat=N)), dtype=np.int8)
        total = mult.shape[0] * loop_cfg.shape[0]
        if total > cap:
            raise ResourceError(f"{total} multigraphs with self-loops exceed cap {cap}")
        loop_size = loop_cfg.sum(axis=1, dtype=np.int64)
        gi, li = np.meshgrid(np.arange(mult.shape[0]), np.arange(loop_cfg.shape[0]), indexing="ij")
        gi, li = gi.ravel(), li.ravel()
        ok = size[gi] + loop_size[li] <= limit
        mult, loops = mult[gi[ok]], loop_cfg[li[ok]]
    else:
        loops = np.zeros((mult.shape[0], N), dtype=np.int8)
    keys = np.concatenate([mult, loops], axis=1)
    order = np.lexsort(keys.T[::-1]) if keys.shape[1] else np.arange(keys.shape[0])
    return MulticycleTable(N, ell, np.ascontiguousarray(mult[order]), np.ascontiguousarray(loops[order]))


def enumerate_multicycles(N: int, ell: int, allow_self_loops: bool = False,
                          max_size: int | None = None) -> Iterator[Multigraph]:
    """Stream of all ell-multicycles on N <= 8 nodes, in canonical order.

    Works parity pattern by parity pattern, so memory stays bounded even
    where the full table would not fit.
    """
    if N > ENUM_NODE_CAP:
        raise ResourceError(f"exhaustive enumeration limited to N <= {ENUM_NODE_CAP}, got {N}")
    odd, even = _multiplicity_choices(ell)
    limit = math.inf if max_size is None else max_size
    pairs = pair_list(N)
    free = [p for p, (i, j) in enumerate(pairs) if j != N - 1]
    loop_choices = list(itertools.product(range(MAX_LOOP + 1), repeat=N)) if allow_self_loops else [(0,) * N]
    rows = []
    for bits in itertools.product((0, 1), repeat=len(free)):
        par = [0] * len(pairs)
        deg = [0] * N
        for p, b in zip(free, bits):
            par[p] = b
            i, j = pairs[p]
            deg[i] += b
            deg[j] += b
        for i in range(N - 1):
            par[pair_index(i, N - 1, N)] = deg[i] % 2
        if sum(par) > limit:
            continue
        options = [odd if b else even for b in par]
        for m in itertools.product(*options):
            s = sum(m)
            if s > limit:
                continue
            for loops in loop_choices:
                if s + sum(loops) <= limit:
                    rows.append((m, loops))
    rows.sort()
    for m, loops in rows:
        yield Multigraph.from_row(N, m, loops)


def enumeration_counts(N: int, ell: int, self_loops: bool = False) -> dict[int, int]:
    return multicycle_table(N, ell, self_loops).size_counts()


def write_enumeration_counts(path, rows: Iterable[tuple[int, int, dict[int, int]]]) -> None:
    """CSV with columns N, ell, size, count."""
    with open(path, "w", newline="") as fh:
        fh.write("N,ell,size,count\n")
        for N, ell, counts in rows:
            for size, count in sorted(counts.items()):
                fh.write(f"{N},{ell},{size},{count}\n")


# --- prior factor and weights -------------------------------------------------------


@dataclass(frozen=True)
class PriorFactor:
    value: float
    stderr: float


def prior_factor(g: Multigraph, prior: PriorSpec, mode: str = "iid-analytic", M: int = 0,
                 seed: SeedLike = 0) -> PriorFactor:
    """Y(g) = E prod_k (sqrt(N) x_k)^{d_k}, unconditioned.

    ``normalized-mc`` uses x/|x| and Monte Carlo over M spikes.
    """
    deg = g.stats.degrees
    if any(d % 2 for d in deg):
        return PriorFactor(0.0, 0.0)
    if mode == "iid-analytic":
        return PriorFactor(math.prod(prior.mu(d) for d in deg), 0.0)
    if mode != "normalized-mc":
        raise ContractError(f"mode must be 'iid-analytic' or 'normalized-mc', got {mode!r}")
    if prior.family == "rademacher":
        return PriorFactor(1.0, 0.0)
    if M < 2:
        raise ContractError("normalized-mc needs M >= 2")
    rng = make_rng(seed)
    N = g.N
    z = prior.standard_sample(rng, (M, N))
    norm = np.linalg.norm(z, axis=1, keepdims=True) / math.sqrt(N)
    u = np.divide(z, norm, out=np.zeros_like(z), where=norm > 0)
    vals = np.prod(u ** np.asarray(deg, dtype=float), axis=1)
    return PriorFactor(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(M)))


@dataclass(frozen=True, eq=False)
class EdgeWeightSample:
    """P[n, p] = P^(n) on pair p (lexicographic), Pd[n, k] = P_d^(n) on node k; row 0 is 1."""

    N: int
    P: np.ndarray
    Pd: np.ndarray

    def __post_init__(self):
        npairs = self.N * (self.N - 1) // 2
        P = np.asarray(self.P, dtype=float)
        Pd = np.asarray(self.Pd, dtype=float)
        if P.shape != (MAX_OFFDIAG + 1, npairs) or Pd.shape != (MAX_LOOP + 1, self.N):
            raise ContractError(f"weight shapes {P.shape}, {Pd.shape} do not match N={self.N}")
        if not (np.all(np.isfinite(P)) and np.all(np.isfinite(Pd))):
            raise ContractError("edge weights must be finite")
        if not (np.all(P[0] == 1) and np.all(Pd[0] == 1)):
            raise ContractError("row 0 of the weights must be all ones")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "Pd", Pd)

    @classmethod
    def from_orders(cls, N: int, off: np.ndarray, diag: np.ndarray | None = None) -> "EdgeWeightSample":
        """Build from off (4, P) orders 1..4 and diag (2, N) orders 1..2."""
        npairs = N * (N - 1) // 2
        P = np.vstack([np.ones(npairs), np.asarray(off, dtype=float).reshape(MAX_OFFDIAG, npairs)])
        d = np.zeros((MAX_LOOP, N)) if diag is None else np.asarray(diag, dtype=float).reshape(MAX_LOOP, N)
        return cls(N, P, np.vstack([np.ones(N), d]))

    @classmethod
    def random(cls, N: int, rng: np.random.Generator, scale: float = 1.0) -> "EdgeWeightSample":
        npairs = N * (N - 1) // 2
        return cls.from_orders(N, scale * rng.standard_normal((MAX_OFFDIAG, npairs)),
                               scale * rng.standard_normal((MAX_LOOP, N)))

    def truncated(self, ell: int) -> "EdgeWeightSample":
        """Copy with orders above ell set to zero."""
        P = self.P.copy()
        P[ell + 1:] = 0.0
        return EdgeWeightSample(self.N, P, self.Pd)


def graph_weight(g: Multigraph, w: EdgeWeightSample) -> float:
    """Z(g) = prod P^(m_ij)_ij * prod P_d^(m_kk)_kk with P^(0) = 1."""
    if g.N > w.N:
        raise ContractError(f"graph on {g.N} nodes does not fit weights on {w.N}")
    out = 1.0
    for i, j, m in g.edges:
        if i == j:
            if m > MAX_LOOP:
                raise ModelError(f"self-loop multiplicity {m} at {i} exceeds {MAX_LOOP}")
            out *= w.Pd[m, i]
        else:
            if m > MAX_OFFDIAG:
                raise ModelError(f"multiplicity {m} on ({i}, {j}) exceeds {MAX_OFFDIAG}")
            out *= w.P[m, pair_index(i, j, w.N)]
    return float(out)


def table_weights(table: MulticycleTable, w: EdgeWeightSample) -> np.ndarray:
    """Z for every row of the table."""
    npairs = table.pair_mult.shape[1]
    z = np.ones(len(table))
    if npairs:
        z = np.prod(w.P[table.pair_mult, np.arange(npairs)], axis=1)
    z = z * np.prod(w.Pd[table.loop_mult, np.arange(table.N)], axis=1)
    return z


def table_prior_factors(table: MulticycleTable, prior: PriorSpec) -> np.ndarray:
    """Y for every row, iid-analytic."""
    dmax = int(table.degrees.max(initial=0))
    mu = np.array([prior.mu(d) for d in range(dmax + 1)])
    return np.prod(mu[table.degrees], axis=1)


def expansion_sum(N: int, w: EdgeWeightSample, prior: PriorSpec, ell: int = 4, self_loops: bool = True,
                  cap: int = DEFAULT_GRAPH_CAP) -> float:
    """X = sum over ell-multicycles of N^{-m/2} Y Z."""
    if N > EXPANSION_NODE_CAP:
        raise ResourceError(f"expansion_sum limited to N <= {EXPANSION_NODE_CAP}, got {N}")
    if w.N != N:
        raise ContractError("weights do not match N")
    table = multicycle_table(N, ell, self_loops, cap=cap)
    terms = N ** (-0.5 * table.sizes) * table_prior_factors(table, prior) * table_weights(table, w)
    return math.fsum(terms.tolist())


def direct_product(N: int, w: EdgeWeightSample, x, mode: str = "iid") -> float:
    """prod_{i<j} (1 + sum_n P^(n) (sqrt(N) x_i x_j)^n) * prod_k (1 + sum_{n<=2} P_d^(n) (sqrt(N) x_k^2)^n).

    In normalized mode x_i x_j is replaced by x_i x_j / |x|^2 (0 for x = 0).
    """
    values = direct_product_batch(N, w, np.atleast_2d(np.asarray(x, dtype=float)), mode)
    return float(values[0])


def direct_product_batch(N: int, w: EdgeWeightSample, X: np.ndarray, mode: str = "iid") -> np.ndarray:
    if mode not in ("iid", "normalized"):
        raise ContractError(f"mode must be 'iid' or 'normalized', got {mode!r}")
    X = np.asarray(X, dtype=float)
    rootN = math.sqrt(N)
    scale = np.ones(X.shape[0])
    if mode == "normalized":
        norm2 = np.einsum("mi,mi->m", X, X)
        scale = np.divide(1.0, norm2, out=np.zeros_like(norm2), where=norm2 > 0)
    iu = np.triu_indices(N, 1)
    u = rootN * X[:, iu[0]] * X[:, iu[1]] * scale[:, None]
    off = np.ones_like(u)
    for n in range(1, MAX_OFFDIAG + 1):
        off += w.P[n] * u**n
    ud = rootN * X * X * scale[:, None]
    diag = np.ones_like(ud)
    for n in range(1, MAX_LOOP + 1):
        diag += w.Pd[n] * ud**n
    return np.prod(off, axis=1) * np.prod(diag, axis=1)


def sign_vectors(N: int) -> np.ndarray:
    """All 2^N vectors in {-1, 1}^N."""
    codes = np.arange(1 << N)
    return 1.0 - 2.0 * ((codes[:, None] >> np.arange(N)) & 1)


def sign_average(N: int, w: EdgeWeightSample) -> float:
    """Average of direct_product over the 2^N Rademacher spikes x = sigma/sqrt(N)."""
    vals = direct_product_batch(N, w, sign_vectors(N) / math.sqrt(N))
    return math.fsum(vals.tolist()) / vals.size


def hermite_weights(W, beta: float, w_4: float = 3.0) -> EdgeWeightSample:
    """Free-energy weights: Hermite-type polynomials of w = sqrt(N) W_ij; no diagonal weights."""
    W = np.asarray(W, dtype=float)
    N = W.shape[0]
    w = math.sqrt(N) * W[np.triu_indices(N, 1)]
    b = float(beta)
    off = np.array([
        b * w,
        b**2 / 2.0 * (w**2 - 1.0),
        b**3 / 6.0 * (w**3 - 3.0 * w),
        b**4 / 24.0 * (w**4 - 6.0 * w**2 + 6.0 - w_4),
    ])
    return EdgeWeightSample.from_orders(N, off)


def lr_weights(W, lam: float, p: DensityModel, p_d: DensityModel) -> EdgeWeightSample:
    """Likelihood-ratio weights: Taylor coefficients of the density ratios."""
    W = np.asarray(W, dtype=float)
    N = W.shape[0]
    rootN = math.sqrt(N)
    w = rootN * W[np.triu_indices(N, 1)]
    wd = rootN * np.diag(W)
    off = np.array([lr_coefficient(p, n, lam, w) for n in range(1, MAX_OFFDIAG + 1)])
    diag = np.array([lr_coefficient(p_d, n, lam, wd, diagonal=True) for n in range(1, MAX_LOOP + 1)])
    return EdgeWeightSample.from_orders(N, off, diag)


# --- orthogonality and similarity -------------------------------------------------


@dataclass(frozen=True)
class MomentOracle:
    """Pairwise moments E[P^(a) P^(b)] (off-diagonal) and E[P_d^(a) P_d^(b)] (diagonal).

    Indices include 0 (P^(0) = 1), so (0, b) entries are first moments.
    """

    off: Mapping[tuple[int, int], float]
    diag: Mapping[tuple[int, int], float] = field(default_factory=dict)
    tol: float = 1e-12

    def get(self, a: int, b: int, loop: bool = False) -> float:
        table = self.diag if loop else self.off
        key = (min(a, b), max(a, b))
        if key not in table:
            kind = "diagonal" if loop else "off-diagonal"
            raise ModelError(f"moment oracle lacks {kind} E[P^({key[0]}) P^({key[1]})]")
        return table[key]


def polynomial_moment_oracle(polys: list[np.ndarray], moment, diag_polys: list[np.ndarray] | None = None,
                             diag_moment=None, tol: float = 1e-12) -> MomentOracle:
    """Oracle for weights that are polynomials in a symmetric variable.

    ``polys[n]`` are power-basis coefficients of P^(n) (``polys[0] = [1]``) and
    ``moment(k)`` returns E[w^k].
    """
    def table(ps, mom):
        out = {}
        for a, b in itertools.combinations_with_replacement(range(len(ps)), 2):
            c = np.polynomial.polynomial.polymul(ps[a], ps[b])
            out[(a, b)] = float(sum(ck * mom(k) for k, ck in enumerate(c)))
        return out

    diag = {(0, 0): 1.0}
    if diag_polys is not None:
        diag = table(diag_polys, diag_moment)
    return MomentOracle(table(polys, moment), diag, tol)


def hermite_polys(beta: float, w_4: float = 3.0) -> list[np.ndarray]:
    b = beta
    return [
        np.array([1.0]),
        np.array([0.0, b]),
        b**2 / 2.0 * np.array([-1.0, 0.0, 1.0]),
        b**3 / 6.0 * np.array([0.0, -3.0, 0.0, 1.0]),
        b**4 / 24.0 * np.array([6.0 - w_4, 0.0, -6.0, 0.0, 1.0]),
    ]


def gauss_hermite_oracle(beta: float, w_4: float = 3.0, nodes: int = 40, tol: float = 1e-12) -> MomentOracle:
    """Free-energy weight moments under Gaussian disorder by Gauss-Hermite quadrature."""
    x, wt = hermite_e.hermegauss(nodes)
    wt = wt / wt.sum()
    vals = [np.polynomial.polynomial.polyval(x, c) for c in hermite_polys(beta, w_4)]
    off = {}
    for a, b in itertools.combinations_with_replacement(range(len(vals)), 2):
        off[(a, b)] = float(np.dot(wt, vals[a] * vals[b]))
    diag = {(a, b): float(a == 0 and b == 0) for a, b in itertools.combinations_with_replacement(range(3), 2)}
    return MomentOracle(off, diag, tol)


def expected_product(g: Multigraph, h: Multigraph, oracle: MomentOracle) -> float:
    """E[Z(g) Z(h)] under independence across pairs."""
    if g.N != h.N:
        raise ContractError("graphs must share the node set")
    mg, mh = g.mult, h.mult
    out = 1.0
    for key in sorted(set(mg) | set(mh)):
        out *= oracle.get(mg.get(key, 0), mh.get(key, 0), loop=key[0] == key[1])
    return out


def is_orthogonal(g: Multigraph, h: Multigraph, oracle: MomentOracle) -> bool:
    """True iff some per-pair factor of E[Z(g) Z(h)] vanishes."""
    if g.N != h.N:
        raise ContractError("graphs must share the node set")
    mg, mh = g.mult, h.mult
    for key in sorted(set(mg) | set(mh)):
        if abs(oracle.get(mg.get(key, 0), mh.get(key, 0), loop=key[0] == key[1])) <= oracle.tol:
            return True
    return False


def is_similar(g: Multigraph, h: Multigraph) -> bool:
    """Same support and every multiplicity difference even."""
    if g.support() != h.support():
        return False
    mh = h.mult
    return all((m - mh[key]) % 2 == 0 for key, m in g.mult.items())


# --- simple cycles and the cutoff ---------------------------------------------------


def _is_simple_cycle(edges: list[tuple[int, int]]) -> bool:
    deg: dict[int, int] = {}
    for i, j in edges:
        deg[i] = deg.get(i, 0) + 1
        deg[j] = deg.get(j, 0) + 1
    if len(edges) < 3 or any(d != 2 for d in deg.values()):
        return False
    adj: dict[int, list[int]] = {}
    for i, j in edges:
        adj.setdefault(i, []).append(j)
        adj.setdefault(j, []).append(i)
    start = edges[0][0]
    seen, stack = {start}, [start]
    while stack:
        for v in adj[stack.pop()]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == len(deg)


def is_simple_cycle(g: Multigraph) -> bool:
    if g.has_loops or any(m != 1 for _, _, m in g.edges):
        return False
    return _is_simple_cycle([(i, j) for i, j, _ in g.edges])


def _closed_walk(edges: set[tuple[int, int]]) -> list[tuple[int, int]]:
    """Walk from a maximum-degree node, returning to it as soon as it is adjacent."""
    deg: dict[int, int] = {}
    adj: dict[int, set[int]] = {}
    for i, j in edges:
        deg[i] = deg.get(i, 0) + 1
        deg[j] = deg.get(j, 0) + 1
        adj.setdefault(i, set()).add(j)
        adj.setdefault(j, set()).add(i)
    start = min(deg, key=lambda v: (-deg[v], v))
    used: set[tuple[int, int]] = set()
    walk = []
    cur = start
    while True:
        free = sorted(v for v in adj[cur] if (min(cur, v), max(cur, v)) not in used)
        if walk and start in free:
            nxt = start
        elif free:
            nxt = free[0]
        else:
            raise ContractError("walk got stuck; input is not an even graph")
        e = (min(cur, nxt), max(cur, nxt))
        used.add(e)
        walk.append(e)
        cur = nxt
        if cur == start:
            return walk


def _decompose(edges: set[tuple[int, int]]) -> list[list[tuple[int, int]]]:
    if not edges:
        return []
    walk = _closed_walk(edges)
    rest = edges - set(walk)
    head = [walk] if _is_simple_cycle(walk) else _decompose(set(walk))
    return head + _decompose(rest)


def decompose_simple_cycles(g: Multigraph) -> list[Multigraph]:
    """Edge-disjoint simple cycles whose union is the 1-multicycle g."""
    if g.has_loops or any(m != 1 for _, _, m in g.edges) or not is_multicycle(g):
        raise ContractError("decomposition needs a 1-multicycle without self-loops")
    parts = _decompose({(i, j) for i, j, _ in g.edges})
    return [Multigraph(g.N, tuple((i, j, 1) for i, j in part)) for part in parts]


def count_simple_cycles(N: int, k: int) -> int:
    """Number of simple cycles of length k in K_N: N(N-1)...(N-k+1)/(2k)."""
    if k < 3:
        raise DomainError(f"simple cycles have length >= 3, got {k}")
    if k > N:
        return 0
    return math.perm(N, k) // (2 * k)


def simple_cycles(N: int) -> Iterator[Multigraph]:
    """All simple cycles in K_N: smallest node first, second node below the last."""
    for k in range(3, N + 1):
        for nodes in itertools.combinations(range(N), k):
            first, rest = nodes[0], nodes[1:]
            for perm in itertools.permutations(rest):
                if perm[0] > perm[-1]:
                    continue
                cyc = (first,) + perm
                yield Multigraph(N, tuple((cyc[t], cyc[(t + 1) % k], 1) for t in range(k)))


@dataclass(frozen=True)
class CutoffResult:
    N: int
    alpha: float
    s: int
    total: float
    bound: float
    holds: bool


def cutoff_sum(N: int, alpha: float, s: int) -> CutoffResult:
    """Sum over 1-multicycles with at least s edges of (alpha/N)^size, against s alpha^s."""
    if N > CUTOFF_NODE_CAP:
        raise ResourceError(f"cutoff enumeration limited to N <= {CUTOFF_NODE_CAP}, got {N}")
    if not 0 <= alpha < 1:
        raise DomainError(f"alpha must be in [0, 1), got {alpha}")
    counts = multicycle_table(N, 1, False).size_counts()
    total = math.fsum(c * (alpha / N) ** m for m, c in counts.items() if m >= s)
    bound = s * alpha**s
    return CutoffResult(N, alpha, s, total, bound, total <= bound)


def cutoff_scan(Ns: Iterable[int], alphas: Iterable[float], s_values: Iterable[int]) -> list[dict]:
    """Per (N, alpha): results over s, the first s where the bound holds and the
    smallest s from which it holds for every larger scanned s."""
    s_values = sorted(s_values)
    out = []
    for N in Ns:
        for alpha in alphas:
            res = [cutoff_sum(N, alpha, s) for s in s_values]
            first = next((r.s for r in res if r.holds), None)
            tail = None
            for r in reversed(res):
                if not r.holds:
                    break
                tail = r.s
            out.append({"N": N, "alpha": alpha, "results": res, "first_s": first, "holds_from": tail})
    return out


# --- moments and the rho decomposition ---------------------------------------------


@dataclass(frozen=True)
class ExpansionMoments:
    """Second moments: F, G of P^(1), P^(2); c3, c4 of P^(3), P^(4); F_d, c2_d on the diagonal."""

    F: float
    G: float
    F_d: float = 0.0
    c3: float = 0.0
    c4: float = 0.0
    c2_d: float = 0.0

    def __post_init__(self):
        for name in ("F", "G", "F_d", "c3", "c4", "c2_d"):
            if not getattr(self, name) >= 0:
                raise DomainError(f"moment {name} must be nonnegative")


@dataclass(frozen=True)
class RhoDecomposition:
    rho: float
    rho_1: float
    rho_2: float
    rho_3: float


def rho_prediction(mom: ExpansionMoments) -> RhoDecomposition:
    F, G, Fd = mom.F, mom.G, mom.F_d
    if not 0 <= F < 1:
        raise DomainError(f"F = {F} outside [0, 1)")
    rho_1 = 0.25 * log_tail(F)
    rho_2 = G / 4.0
    rho_3 = Fd / 2.0
    rho = rho_1 + rho_2 + rho_3
    # closed form as a cross-check; it cancels badly at small F, so the sum of parts is returned
    closed = -0.25 * (math.log1p(-F) + (F - 2.0 * Fd) + F * F / 2.0) + G / 4.0
    if abs(rho - closed) > 1e-12 * max(1.0, abs(rho)):
        raise NumericError(f"rho_1+rho_2+rho_3 = {rho!r} but the closed form gives {closed!r}")
    return RhoDecomposition(rho, rho_1, rho_2, rho_3)


def free_energy_moments(beta: float, w_4: float = 3.0) -> ExpansionMoments:
    """Moments of the free-energy weights (c3, c4 exact for Gaussian disorder)."""
    b2 = beta * beta
    return ExpansionMoments(F=b2, G=b2 * b2 * (w_4 - 1.0) / 4.0, F_d=0.0,
                            c3=b2**3 / 6.0, c4=b2**4 / 24.0)


def loglr_moments(lam: float, fs: FisherSet, p: DensityModel | None = None,
                  p_d: DensityModel | None = None) -> ExpansionMoments:
    """Moments of the likelihood-ratio weights; higher orders need the densities."""
    c3 = c4 = c2d = 0.0
    if p is not None:
        c3 = lam**3 * ratio_second_moment(p, 3) / 36.0
        c4 = lam**4 * ratio_second_moment(p, 4) / 576.0
    if p_d is not None:
        c2d = lam**2 * ratio_second_moment(p_d, 2) / 4.0
    return ExpansionMoments(F=lam * fs.F_p, G=lam**2 * fs.G_p / 4.0, F_d=lam * fs.F_d,
                            c3=c3, c4=c4, c2_d=c2d)


def second_moment_formula(g: Multigraph, mom: ExpansionMoments) -> float:
    """E[Z(g)^2] = F^{n_1} G^{n_2} c3^{n_3} c4^{n_4} (off-diagonal part) times diagonal moments."""
    off = [0, 0, 0, 0]
    loops = [0, 0]
    for i, j, m in g.edges:
        if i == j:
            loops[m - 1] += 1
        else:
            off[m - 1] += 1
    return (mom.F ** off[0] * mom.G ** off[1] * mom.c3 ** off[2] * mom.c4 ** off[3]
            * mom.F_d ** loops[0] * mom.c2_d ** loops[1])


# --- product decomposition harness -----------------------------------------------


def r2_exact(N: int, w: EdgeWeightSample) -> float:
    """Sum over 2-multicycles without loops of N^{-m/2} Z.

    Each such graph is a 1-multicycle plus double edges on pairs outside it,
    so the sum runs over 1-multicycles with a product over the other pairs.
    """
    table = multicycle_table(N, 1, False)
    on = table.pair_mult.astype(bool)
    npairs = table.pair_mult.shape[1]
    if npairs == 0:
        return 1.0
    single = np.where(on, w.P[1] / math.sqrt(N), 1.0)
    double = np.where(on, 1.0, 1.0 + w.P[2] / N)
    return math.fsum(np.prod(single * double, axis=1).tolist())


def r2_tilde_exact(N: int, w: EdgeWeightSample) -> float:
    """R_2 times the sum over self-loop-only graphs, which factorizes per node."""
    loops = np.prod(1.0 + w.Pd[1] / math.sqrt(N) + w.Pd[2] / N)
    return r2_exact(N, w) * float(loops)


def simple_cycle_product(N: int, w: EdgeWeightSample) -> float:
    """prod over simple cycles (1 + Z/N^{m/2}) * prod_{i<j} (1 + P^(2)/N) * prod_k (1 + P_d^(1)/sqrt(N))."""
    acc = 1.0
    for g in simple_cycles(N):
        acc *= 1.0 + graph_weight(g, w) / N ** (g.stats.m / 2.0)
    acc *= float(np.prod(1.0 + w.P[2] / N))
    acc *= float(np.prod(1.0 + w.Pd[1] / math.sqrt(N)))
    return acc


@dataclass(frozen=True)
class DecompositionReport:
    Ns: tuple[int, ...]
    mean_square: tuple[float, ...]
    stderr: tuple[float, ...]
    decreasing: bool


def product_decomposition_harness(weight_sampler, Ns=(3, 4, 5, 6), draws: int = 200,
                                  seed: SeedLike = 0) -> DecompositionReport:
    """Mean square gap between the exact R~_2 and the simple-cycle product.

    ``weight_sampler(N, rng)`` returns an EdgeWeightSample.
    """
    ms, se = [], []
    for N in Ns:
        rng = make_rng(seed, N)
        gaps = np.array([r2_tilde_exact(N, w := weight_sampler(N, rng)) - simple_cycle_product(N, w)
                         for _ in range(draws)])
        sq = gaps**2
        ms.append(float(sq.mean()))
        se.append(float(sq.std(ddof=1) / math.sqrt(draws)))
    decreasing = all(b < a for a, b in zip(ms, ms[1:]))
    return DecompositionReport(tuple(Ns), tuple(ms), tuple(se), decreasing)


def multigraphs_to_text(graphs: Iterable[Multigraph]) -> str:
    buf = io.StringIO()
    for g in graphs:
        buf.write(format_multigraph(g))
        buf.write("\n")
    return buf.getvalue()
