"""Set-partition combinatorics and cumulant / expansion operators.

A cumulant of order 1+n acts on a ground set of 1+n elements: one aggregated
cluster element standing for the k cluster arguments, plus n extra single
arguments. It is the signed sum over all set partitions of that ground set,
with exact integer coefficient (-1)^(|P|-1) (|P|-1)!, of products of joint
flow (or scattering) operators, one per block; a block's operator acts
jointly on every variable the block's elements carry.

The functional-expansion operators are built from scattering cumulants by a
nested sum over group sizes (m_1, ..., m_r) and, per group, over
compositions of m_j assigning extra arguments to existing particles in
consecutive runs. Operator products apply right to left: within one term the
rightmost group factor hits the function first, the head cumulant last. The
renormalized variant restricts each group's attachment slots to the k cluster
particles; the plain variant lets a group attach to the first k + (remaining)
particles. Orders are capped at n <= 4: Bell-number growth of the partition
sums and the nested composition sums make higher orders explosive, while the
convergence regime keeps their contribution negligible.
"""

import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .density import QuadratureSpec, mc_integrate
from .dynamics import pair_potential_grad
from .errors import ArityMismatchError, ConfigError, OrderCapError
from .operators import (OperatorContext, PhaseFunction, backward_flow_points,
                        phase_sum, scatter_points)

PARTITION_CAP = 10   # largest ground set the enumerators accept
ORDER_CAP = 4        # hard cap on the expansion order n


@dataclass(frozen=True)
class ClusterIndexSet:
    """Ground set for a cumulant: a cluster of k arguments plus n singles.

    Argument slots are 0-based: the cluster element carries slots 0..k-1 and
    the n single elements carry slots k..k+n-1.
    """

    k: int
    n: int

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError("cluster must contain at least one argument")
        if self.n < 0:
            raise ConfigError("number of singles must be >= 0")

    @property
    def singles(self):
        return tuple(range(self.k, self.k + self.n))

    @property
    def arity(self):
        return self.k + self.n

    def elements(self):
        """Atomic elements as slot tuples: the cluster first, then singles."""
        return [tuple(range(self.k))] + [(s,) for s in self.singles]


@dataclass(frozen=True)
class SetPartition:
    """Partition of a ground set of element ids into disjoint nonempty blocks."""

    blocks: tuple

    def __post_init__(self):
        seen = set()
        for b in self.blocks:
            if len(b) == 0:
                raise ConfigError("partition blocks must be nonempty")
            if seen & set(b):
                raise ConfigError("partition blocks must be disjoint")
            seen |= set(b)
        object.__setattr__(self, "blocks", tuple(tuple(sorted(b)) for b in self.blocks))

    @property
    def size(self):
        return len(self.blocks)


@dataclass(frozen=True)
class CumulantTerm:
    """One partition together with its exact integer coefficient."""

    partition: SetPartition
    coefficient: int

    @classmethod
    def for_partition(cls, partition: SetPartition) -> "CumulantTerm":
        p = partition.size
        return cls(partition, (-1) ** (p - 1) * math.factorial(p - 1))


def iter_set_partitions(m: int) -> Iterator[tuple]:
    """All partitions of {0, ..., m-1}, each a tuple of sorted blocks.

    Element m-1 is inserted into every partition of the first m-1 elements,
    either into an existing block or as a new singleton, so enumeration order
    is deterministic.
    """
    if m == 0:
        yield ()
        return
    for rest in iter_set_partitions(m - 1):
        for i in range(len(rest)):
            yield rest[:i] + (rest[i] + (m - 1,),) + rest[i + 1:]
        yield rest + ((m - 1,),)


def bell_number(m: int) -> int:
    """Number of set partitions of an m-element set."""
    b = [1]
    for n in range(m):
        b.append(sum(math.comb(n, i) * b[i] for i in range(n + 1)))
    return b[m]


def enumerate_partitions(ground: ClusterIndexSet):
    """Every partition of the cumulant ground set, the cluster kept atomic."""
    m = 1 + ground.n
    if m > PARTITION_CAP:
        raise OrderCapError(f"ground set of size {m} exceeds cap {PARTITION_CAP}")
    return [SetPartition(p) for p in iter_set_partitions(m)]


def cumulant_terms(ground: ClusterIndexSet):
    """Partitions with exact signed coefficients, in enumeration order."""
    return [CumulantTerm.for_partition(p) for p in enumerate_partitions(ground)]


def partition_identity_sum(m: int) -> int:
    """sum over partitions of an m-set of (-1)^(|P|-1) (|P|-1)!, in exact ints."""
    if not 1 <= m <= PARTITION_CAP:
        raise OrderCapError(f"set size {m} outside 1..{PARTITION_CAP}")
    total = 0
    for p in iter_set_partitions(m):
        size = len(p)
        total += (-1) ** (size - 1) * math.factorial(size - 1)
    return total


def _blockwise_pullback(ctx, t, elements, partition_blocks, f, scattering):
    """Pullback of f along per-block joint maps; blocks act on disjoint slots."""
    point_map = scatter_points if scattering else backward_flow_points

    block_slots = []
    for block in partition_blocks:
        slots = []
        for e in block:
            slots.extend(elements[e])
        slots = tuple(sorted(slots))
        # one particle scatters to itself; skip the map entirely
        if scattering and len(slots) == 1:
            continue
        block_slots.append(slots)

    if t == 0.0 or not block_slots:
        return f

    def batch(pts):
        moved = pts.copy()
        for slots in block_slots:
            sub = np.ascontiguousarray(moved[:, slots, :])
            moved[:, slots, :] = point_map(ctx, t, sub)
        return f.eval_batch(moved)

    return PhaseFunction(f.arity, batch, f.integrability_hint)


def cumulant_operator(ctx: OperatorContext, t: float,
                      elements: Sequence[tuple], f: PhaseFunction,
                      scattering: bool = False) -> PhaseFunction:
    """Signed partition sum of blockwise pullbacks over the given elements.

    ``elements`` lists the atomic elements as tuples of argument slots; for
    the standard cumulant use ``ClusterIndexSet.elements()``. With
    ``scattering`` the block maps are scattering operators at time t,
    otherwise backward flows to time -t.
    """
    m = len(elements)
    if m > PARTITION_CAP:
        raise OrderCapError(f"ground set of size {m} exceeds cap {PARTITION_CAP}")
    terms = []
    for p in iter_set_partitions(m):
        coeff = (-1) ** (len(p) - 1) * math.factorial(len(p) - 1)
        terms.append((coeff, _blockwise_pullback(ctx, t, elements, p, f,
                                                 scattering)))
    return phase_sum(f.arity, terms, f.integrability_hint)


def apply_cumulant(ctx: OperatorContext, t: float, ground: ClusterIndexSet,
                   f: PhaseFunction, points) -> float:
    """Cumulant of backward-flow operators, evaluated at one configuration."""
    if f.arity != ground.arity:
        raise ArityMismatchError(
            f"cumulant over {ground.arity} arguments applied to arity {f.arity}")
    return cumulant_operator(ctx, t, ground.elements(), f, scattering=False)(points)


def apply_scattering_cumulant(ctx: OperatorContext, t: float,
                              ground: ClusterIndexSet, f: PhaseFunction,
                              points) -> float:
    """Cumulant of scattering operators, evaluated at one configuration."""
    if f.arity != ground.arity:
        raise ArityMismatchError(
            f"cumulant over {ground.arity} arguments applied to arity {f.arity}")
    return cumulant_operator(ctx, t, ground.elements(), f, scattering=True)(points)


# ---------------------------------------------------------------------------
# functional-expansion operators
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExpansionOrderConfig:
    """Truncation order for functional expansions; renormalized selects the
    variant with attachment slots restricted to the cluster."""

    n_max: int = 3
    renormalized: bool = False

    def __post_init__(self):
        if not 0 <= self.n_max <= ORDER_CAP:
            raise OrderCapError(f"n_max must lie in 0..{ORDER_CAP}")


def _compositions(total: int, parts: int) -> Iterator[tuple]:
    """Ordered tuples of `parts` nonnegative integers summing to `total`."""
    if parts == 0:
        if total == 0:
            yield ()
        return
    for bars in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        out = []
        for b in bars:
            out.append(b - prev - 1)
            prev = b
        out.append(total + parts - 2 - prev)
        yield tuple(out)


def _group_tuples(n: int) -> Iterator[tuple]:
    """Ordered tuples (m_1, ..., m_r), m_j >= 1, with sum <= n, including ()."""
    def rec(remaining, prefix):
        yield tuple(prefix)
        for m in range(1, remaining + 1):
            prefix.append(m)
            yield from rec(remaining - m, prefix)
            prefix.pop()
    yield from rec(n, [])


def _group_factor(ctx, t, k, n, m, j, g, renormalized):
    """Factor for group j: sum over attachments of its m_j extra arguments.

    Group j owns the consecutive extra slots k+s_j .. k+s_j+m_j-1 where
    s_j = n - m_1 - ... - m_j. A composition (c_1, ..., c_slots) hands the
    first c_1 of them to particle 0, the next c_2 to particle 1, and so on;
    each particle with c_i > 0 contributes a scattering cumulant over itself
    plus its run, weighted by 1/c_i!. Particles with c_i = 0 contribute the
    identity.
    """
    s_j = n - sum(m[:j])
    m_j = m[j - 1]
    slots = k if renormalized else k + s_j
    first_extra = k + s_j
    subterms = []
    for comp in _compositions(m_j, slots):
        h = g
        w = 1.0
        pos = first_extra
        for i in range(slots):
            ci = comp[i]
            if ci == 0:
                continue
            attached = range(pos, pos + ci)
            pos += ci
            w /= math.factorial(ci)
            elements = [(i,)] + [(a,) for a in attached]
            h = cumulant_operator(ctx, t, elements, h, scattering=True)
        subterms.append((w, h))
    return phase_sum(g.arity, subterms)


def expansion_operator(ctx: OperatorContext, t: float, n: int, k: int,
                       f: PhaseFunction,
                       renormalized: bool = False) -> PhaseFunction:
    """Order-(1+n) functional-expansion operator applied to f (arity k+n).

    The order-0 operator is the k-particle scattering operator; order n sums
    over group tuples (m_1, ..., m_r) with alternating sign, a head
    scattering cumulant over the cluster and the first n - sum(m) extra
    arguments, and one attachment factor per group.
    """
    if not 0 <= n <= ORDER_CAP:
        raise OrderCapError(f"expansion order {n} outside 0..{ORDER_CAP}")
    if f.arity != k + n:
        raise ArityMismatchError(
            f"expected arity {k + n} for order {n}, got {f.arity}")
    terms = []
    for m in _group_tuples(n):
        r = len(m)
        s_r = n - sum(m)
        coeff = math.factorial(n) * (-1) ** r / math.factorial(s_r)
        g = f
        for j in range(r, 0, -1):
            g = _group_factor(ctx, t, k, n, m, j, g, renormalized)
        head = [tuple(range(k))] + [(k + i,) for i in range(s_r)]
        g = cumulant_operator(ctx, t, head, g, scattering=True)
        terms.append((coeff, g))
    return phase_sum(f.arity, terms, f.integrability_hint)


def apply_V(ctx: OperatorContext, t: float, n: int, k: int,
            f: PhaseFunction, points, quadrature: QuadratureSpec,
            renormalized: bool = False):
    """Expansion operator integrated over its n extra arguments.

    points supplies the k cluster arguments; the trailing n arguments are
    Monte Carlo integrated against the quadrature proposal. Returns
    (value, std_error); order 0 evaluates exactly with zero error.
    """
    op = expansion_operator(ctx, t, n, k, f, renormalized)
    if n == 0:
        return op(points), 0.0
    return mc_integrate(op, points, quadrature, extra_arity=n)


def apply_V_renormalized(ctx, t, n, k, f, points, quadrature):
    return apply_V(ctx, t, n, k, f, points, quadrature, renormalized=True)


@dataclass(frozen=True)
class GeneratorReport:
    """Finite-difference generator estimate next to its analytic reference."""

    estimate: float
    reference: float
    t_step: float


def poisson_bracket_reference(ctx: OperatorContext, f: PhaseFunction,
                              points, dv: float = 1e-5) -> float:
    """sum_{i != j} <grad_r Phi(r_i - r_j), d/dv_i> f at one configuration.

    The potential gradient is analytic; the velocity derivative of f uses a
    central difference of step dv.
    """
    pts = np.asarray(points, dtype=float).reshape(f.arity, 6)
    total = 0.0
    for i in range(f.arity):
        grad = np.zeros(3)
        for j in range(f.arity):
            if j != i:
                grad += pair_potential_grad(ctx.potential,
                                            pts[i, 3:] - pts[j, 3:])
        for c in range(3):
            if grad[c] == 0.0:
                continue
            plus = pts.copy()
            minus = pts.copy()
            plus[i, c] += dv
            minus[i, c] -= dv
            total += grad[c] * (f(plus) - f(minus)) / (2.0 * dv)
    return total


def generator_check(ctx: OperatorContext, n: int, k: int, f: PhaseFunction,
                    points, t_step: float = 1e-3) -> GeneratorReport:
    """Short-time limit of the expansion operators against its known value.

    Order 0: (1/t)(op - I) f should approach the interaction bracket; orders
    n >= 1: (1/t) op f should approach zero.
    """
    op = expansion_operator(ctx, t_step, n, k, f)
    if n == 0:
        estimate = (op(points) - f(points)) / t_step
        reference = poisson_bracket_reference(ctx, f, points)
    else:
        estimate = op(points) / t_step
        reference = 0.0
    return GeneratorReport(estimate, reference, t_step)
