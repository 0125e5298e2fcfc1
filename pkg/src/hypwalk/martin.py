"""Martin kernel along boundary rays, the ratio invariant r(g), kernel
regularity probes, and the circle-valued coboundary limit.

All kernel values route through cached base-row Green estimates, so the
cocycle identity K(gh, .) = K(g, .) K(h, g^-1 .) holds exactly (to float
rounding) at every finite evaluation depth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import GreenBudgetError, ValidationError
from .green import GreenEstimate, _green_word, default_max_radius
from .groups import FREE, GroupElement, GroupModel, gromov_product
from .walks import WalkSpec, require_valid

_EQUAL_POINT_CAP = 512


@dataclass(frozen=True)
class BoundaryPoint:
    """A boundary point given by an eventually periodic geodesic ray.

    ``prefix(n)`` returns the ray's n-th vertex; ``head`` is the aperiodic
    initial part and ``cycle`` the repeating part.  A trivial cycle means
    a frozen finite approximant (e.g. a stabilized boundary sample),
    usable only up to its recorded depth.
    """

    head: GroupElement
    cycle: GroupElement

    def __post_init__(self):
        if not self.cycle.is_identity():
            if self.cycle.has_finite_order():
                raise ValidationError("cycle must have infinite order")
            cc = self.cycle * self.cycle
            if cc.letters() != self.cycle.letters() * 2:
                raise ValidationError("cycle is not cyclically reduced")
            hc = self.head * self.cycle
            if hc.letters() != self.head.letters() + self.cycle.letters():
                raise ValidationError("head does not extend to the cycle without cancellation")

    @staticmethod
    def periodic(g: GroupElement) -> "BoundaryPoint":
        """The attracting fixed point of an infinite-order element."""
        if g.has_finite_order():
            raise ValidationError(f"{g} has finite order, no axis")
        u, c = g.cyclic_reduction()
        return BoundaryPoint(head=u, cycle=c)

    @staticmethod
    def from_word(model: GroupModel, head: str | GroupElement, cycle: str | GroupElement) -> "BoundaryPoint":
        if isinstance(head, str):
            head = model.word(head)
        if isinstance(cycle, str):
            cycle = model.word(cycle)
        return BoundaryPoint(head=head, cycle=cycle)

    @staticmethod
    def from_sample(sample) -> "BoundaryPoint":
        return BoundaryPoint(head=sample.prefix, cycle=sample.prefix.model.identity())

    @property
    def model(self) -> GroupModel:
        return self.head.model

    def max_depth(self) -> int | None:
        if self.cycle.is_identity():
            return len(self.head.letters())
        return None

    def prefix_letters(self, n: int) -> tuple[int, ...]:
        head = self.head.letters()
        if n <= len(head):
            return head[:n]
        cyc = self.cycle.letters()
        if not cyc:
            raise ValidationError(f"frozen boundary prefix has only {len(head)} letters, asked {n}")
        need = n - len(head)
        reps = -(-need // len(cyc))
        return (head + cyc * reps)[:n]

    def prefix(self, n: int) -> GroupElement:
        return self.model.from_letters(self.prefix_letters(n))

    def __str__(self):
        if self.cycle.is_identity():
            return f"{self.head}(frozen)"
        return f"{self.head}({self.cycle})^inf"


def limit_gromov(
    a: BoundaryPoint,
    b: BoundaryPoint,
    cap: int = 256,
    window: int | None = None,
) -> tuple[Fraction, bool]:
    """Limiting Gromov product of two canonical rays, with a stabilized flag.

    The depth-n product is nondecreasing; on tree models it is exact once
    the rays diverge.  Returns the best computed value (a lower bound of
    the limit) and whether it stabilized within the depth cap.
    """
    model = a.model
    if model != b.model:
        raise ValidationError("boundary points from different models")
    avail = min(x for x in (a.max_depth(), b.max_depth(), cap) if x is not None)
    la = a.prefix_letters(avail)
    lb = b.prefix_letters(avail)
    k = 0
    while k < avail and la[k] == lb[k]:
        k += 1
    if k >= avail:
        # No divergence seen: the product is at least the scanned depth.
        return Fraction(avail), False
    if model.kind == FREE:
        return Fraction(k), True
    if window is None:
        window = max(3, 4 * model.delta_hint + 2)
    depth = min(k + 1, avail)
    value = gromov_product(a.prefix(depth), b.prefix(depth))
    while True:
        nxt = min(depth + window, avail)
        if nxt == depth:
            return value, False
        new = gromov_product(a.prefix(nxt), b.prefix(nxt))
        if new == value and nxt >= value + window:
            return new, True
        value, depth = new, nxt


# ---------------------------------------------------------------------------
# kernel evaluation


@lru_cache(maxsize=200_000)
def _green_value(
    spec: WalkSpec,
    g: GroupElement,
    tol: float,
    cap: int,
    z: float,
    rtol: float,
    max_states: int,
) -> GreenEstimate:
    try:
        return _green_word(spec, g, tol, cap, z, rtol, max_states)
    except GreenBudgetError as exc:
        if exc.estimate is None:
            raise
        return exc.estimate


def _usable_length(cap: int) -> int:
    # _green_word needs three radii above |g| + 2.
    return cap - 4


def martin_kernel_at(
    walk: WalkSpec,
    g: GroupElement,
    y: GroupElement,
    tol: float = 1e-3,
    *,
    max_radius: int | None = None,
    rtol: float = 1e-12,
    max_states: int = 3_000_000,
) -> GreenEstimate:
    """Finite-stage Martin kernel G(g, y) / G(e, y) with a bracket.

    Evaluated through base rows and left invariance, so the cocycle
    identity holds exactly at any fixed y.
    """
    require_valid(walk)
    cap = max_radius if max_radius is not None else default_max_radius(walk.model)
    num = _green_value(walk, g.inverse() * y, tol, cap, 1.0, rtol, max_states)
    den = _green_value(walk, y, tol, cap, 1.0, rtol, max_states)
    return GreenEstimate(
        value=num.value / den.value,
        lower=num.lower / den.upper,
        upper=num.upper / max(den.lower, 1e-300),
        radii=num.radii,
        tail_ratio=max(num.tail_ratio, den.tail_ratio),
        converged=num.converged and den.converged,
    )


@dataclass(frozen=True)
class MartinEstimate:
    """Kernel estimate along a ray with a depth-stability diagnostic."""

    value: float
    depth: int
    deviation: float
    lower: float
    upper: float
    converged: bool
    series: tuple[tuple[int, float], ...]


def _depth_schedule(g_len: int, depth: int | None, depth_cap: int) -> list[int]:
    if depth is not None:
        ds = sorted({max(1, depth - 4), max(1, depth - 2), depth})
    else:
        ds = [g_len + s for s in (8, 12, 16, 24) if g_len + s <= depth_cap]
        if len(ds) < 3:
            ds = sorted({d for d in (depth_cap - 4, depth_cap - 2, depth_cap) if d >= 1})
    if not ds or ds[-1] > depth_cap:
        raise GreenBudgetError(
            f"no usable kernel depth: cap {depth_cap} for |g|={g_len}"
        )
    return ds


def martin_kernel(
    walk: WalkSpec,
    g: GroupElement,
    xi: BoundaryPoint,
    depth: int | None = None,
    *,
    dev_threshold: float = 1e-3,
    tol: float = 1e-3,
    max_radius: int | None = None,
    rtol: float = 1e-12,
    max_states: int = 3_000_000,
) -> MartinEstimate:
    """Martin kernel K(g, xi) estimated along the canonical ray.

    The deviation field is the relative spread over the last three depths
    of the schedule; a non-converged estimate is returned with
    diagnostics rather than raised.
    """
    require_valid(walk)
    cap = max_radius if max_radius is not None else default_max_radius(walk.model)
    depth_cap = _usable_length(cap) - g.word_length()
    md = xi.max_depth()
    if md is not None:
        depth_cap = min(depth_cap, md)
    ds = _depth_schedule(g.word_length(), depth, depth_cap)
    series = []
    for d in ds:
        y = xi.prefix(d)
        est = martin_kernel_at(walk, g, y, tol, max_radius=cap, rtol=rtol, max_states=max_states)
        series.append((d, est))
    last = series[-1][1]
    tail_vals = [e.value for _, e in series[-3:]]
    deviation = max(abs(v / last.value - 1.0) for v in tail_vals)
    return MartinEstimate(
        value=last.value,
        depth=series[-1][0],
        deviation=deviation,
        lower=last.lower,
        upper=last.upper,
        converged=deviation <= dev_threshold,
        series=tuple((d, e.value) for d, e in series),
    )


def radon_nikodym(
    walk: WalkSpec,
    g: GroupElement,
    xi: BoundaryPoint,
    depth: int | None = None,
    **kwargs,
) -> float:
    """dnu_g/dnu at xi: the Martin kernel packaged as a density value."""
    return martin_kernel(walk, g, xi, depth, **kwargs).value


# ---------------------------------------------------------------------------
# the ratio invariant


@dataclass(frozen=True)
class RatioValue:
    """r(g) estimate with both estimator sequences.

    The headline value is the final consecutive ratio
    F(e, g^(n+1)) / F(e, g^n); the root sequence F(e, g^n)^(1/n) is a
    certified lower bound of the limit.
    """

    element: GroupElement
    value: float
    ratio_sequence: tuple[float, ...]
    root_sequence: tuple[float, ...]
    finite_order: bool
    n_used: int
    root_bound_ok: bool
    stable: bool


def ratio_invariant(
    walk: WalkSpec,
    g: GroupElement,
    n_max: int | None = None,
    *,
    tol: float = 1e-4,
    flag_tol: float = 0.05,
    width_cap: float = 0.02,
    max_radius: int | None = None,
    rtol: float = 1e-12,
    max_states: int = 3_000_000,
) -> RatioValue:
    """Estimate r(g) from first-passage probabilities along powers of g.

    Finite-order elements short-circuit to r = 1.  Powers are used only
    while their Green brackets stay within ``width_cap`` relative width;
    unbracketed long words would otherwise bias the late ratios.  Fewer
    than two trustworthy powers is a budget error.
    """
    require_valid(walk)
    if g.has_finite_order():
        return RatioValue(
            element=g, value=1.0, ratio_sequence=(), root_sequence=(),
            finite_order=True, n_used=0, root_bound_ok=True, stable=True,
        )
    cap = max_radius if max_radius is not None else default_max_radius(walk.model)
    usable = _usable_length(cap)
    powers: list[GroupElement] = []
    cur = walk.model.identity()
    hard_cap = n_max if n_max is not None else 24
    for _ in range(hard_cap):
        cur = cur * g
        if cur.word_length() > usable:
            break
        powers.append(cur)
    if len(powers) < 2:
        raise GreenBudgetError(
            f"need |g^2| <= {usable} for the ratio estimate, |g|={g.word_length()}"
        )
    den = _green_value(walk, walk.model.identity(), tol, cap, 1.0, rtol, max_states)
    fvals = []
    for p in powers:
        num = _green_value(walk, p, tol, cap, 1.0, rtol, max_states)
        rel_width = (num.upper - num.lower) / max(num.value, 1e-300)
        if fvals and rel_width > width_cap:
            break
        fvals.append(min(num.value / den.value, 1.0))
    if len(fvals) < 2:
        raise GreenBudgetError(
            f"brackets for powers of {g} exceed width {width_cap} within radius {cap}"
        )
    ratios = tuple(fvals[i + 1] / fvals[i] for i in range(len(fvals) - 1))
    roots = tuple(fvals[i] ** (1.0 / (i + 1)) for i in range(len(fvals)))
    r_hat = ratios[-1]
    root_ok = max(roots) <= r_hat * (1.0 + flag_tol)
    if len(ratios) >= 3:
        recent = ratios[-3:]
        stable = (max(recent) / min(recent) - 1.0) <= flag_tol
    else:
        stable = abs(ratios[-1] / ratios[0] - 1.0) <= flag_tol
    return RatioValue(
        element=g,
        value=r_hat,
        ratio_sequence=ratios,
        root_sequence=roots,
        finite_order=False,
        n_used=len(fvals),
        root_bound_ok=root_ok,
        stable=stable,
    )


# ---------------------------------------------------------------------------
# regularity probes


@dataclass(frozen=True)
class HoelderPair:
    product: float
    difference: float
    exact_zero: bool


@dataclass(frozen=True)
class HoelderReport:
    """Kernel differences against boundary separation.

    ``slope`` fits log |K(g,xi) - K(g,eta)| on the Gromov product over
    pairs with a nonzero difference; on tree models differences past the
    locality threshold vanish outright and land in ``n_zero``.
    """

    pairs: tuple[HoelderPair, ...]
    slope: float
    stderr: float
    p_value_negative: float
    n_zero: int
    depth: int


_ZERO_FLOOR = 1e-12


def hoelder_probe(
    walk: WalkSpec,
    g: GroupElement,
    pairs: Sequence[tuple[BoundaryPoint, BoundaryPoint]],
    depth: int | None = None,
    **kernel_kwargs,
) -> HoelderReport:
    rows = []
    used_depth = 0
    for xi, eta in pairs:
        k1 = martin_kernel(walk, g, xi, depth, **kernel_kwargs)
        k2 = martin_kernel(walk, g, eta, depth, **kernel_kwargs)
        used_depth = max(used_depth, k1.depth, k2.depth)
        prod, _ = limit_gromov(xi, eta)
        diff = abs(k1.value - k2.value)
        scale = max(abs(k1.value), abs(k2.value), 1.0)
        rows.append(HoelderPair(
            product=float(prod),
            difference=diff,
            exact_zero=diff <= _ZERO_FLOOR * scale,
        ))
    live = [(r.product, math.log(r.difference)) for r in rows if not r.exact_zero]
    if len({p for p, _ in live}) >= 3:
        xs = np.array([p for p, _ in live])
        ys = np.array([d for _, d in live])
        fit = stats.linregress(xs, ys)
        slope, stderr = float(fit.slope), float(fit.stderr)
        p_two = float(fit.pvalue)
        p_neg = p_two / 2 if slope < 0 else 1.0 - p_two / 2
    else:
        slope, stderr, p_neg = 0.0, float("nan"), float("nan")
    return HoelderReport(
        pairs=tuple(rows),
        slope=slope,
        stderr=stderr,
        p_value_negative=p_neg,
        n_zero=sum(r.exact_zero for r in rows),
        depth=used_depth,
    )


# ---------------------------------------------------------------------------
# circle-valued coboundary limit


@dataclass(frozen=True)
class LivschitzReport:
    """Convergence record of the angles of K(g^-n, xi)^(iT).

    ``thetas`` are T log K(g^-n, xi) mod 2pi; stepwise circle distances
    should shrink geometrically in |g^-n| when T matches a lattice.
    """

    thetas: tuple[float, ...]
    power_lengths: tuple[int, ...]
    step_distances: tuple[float, ...]
    slope: float
    converged: bool
    limit_angle: float


def _circle_dist(a: float, b: float) -> float:
    d = abs(a - b) % (2 * math.pi)
    return min(d, 2 * math.pi - d)


def livschitz_coboundary(
    walk: WalkSpec,
    g: GroupElement,
    xi: BoundaryPoint,
    T: float,
    n_max: int | None = None,
    *,
    far_product: float | None = None,
    converge_tol: float = 1e-2,
    **kernel_kwargs,
) -> LivschitzReport:
    """Numerically follow b_n(xi) = angle of K(g^-n, xi)^(iT).

    Requires an infinite-order g and xi bounded away from the repelling
    fixed point of g.
    """
    if g.has_finite_order():
        raise ValidationError(f"{g} has finite order: no contracting dynamics")
    require_valid(walk)
    g_minus = BoundaryPoint.periodic(g.inverse())
    prod, _ = limit_gromov(xi, g_minus)
    if far_product is None:
        far_product = g.word_length() + 2 * walk.model.delta_hint + 4
    if prod > far_product:
        raise ValidationError(
            f"xi is too close to the repelling point: product {prod} > {far_product}"
        )
    cap = kernel_kwargs.get("max_radius") or default_max_radius(walk.model)
    usable = _usable_length(cap)
    thetas = []
    lengths = []
    ginv = g.inverse()
    cur = walk.model.identity()
    hard_cap = n_max if n_max is not None else 24
    for _ in range(hard_cap):
        cur = cur * ginv
        wl = cur.word_length()
        if wl + 2 > usable:
            break
        est = martin_kernel(walk, cur, xi, **kernel_kwargs)
        thetas.append((T * math.log(est.value)) % (2 * math.pi))
        lengths.append(wl)
    if len(thetas) < 2:
        raise GreenBudgetError("not enough usable powers for the coboundary limit")
    steps = tuple(_circle_dist(thetas[i + 1], thetas[i]) for i in range(len(thetas) - 1))
    live = [(lengths[i], math.log(s)) for i, s in enumerate(steps) if s > 1e-13]
    if len(live) >= 3:
        slope = float(stats.linregress([x for x, _ in live], [y for _, y in live]).slope)
    else:
        slope = float("-inf") if len(live) < len(steps) else 0.0
    converged = steps[-1] <= converge_tol
    return LivschitzReport(
        thetas=tuple(thetas),
        power_lengths=tuple(lengths),
        step_distances=steps,
        slope=slope,
        converged=converged,
        limit_angle=thetas[-1],
    )
