"""Rényi-DP curve algebra and end-to-end graph-privacy budgets.

A guarantee is a curve alpha -> gamma(alpha) for alpha > 1, either closed-form
linear (gamma = slope * alpha, the Gaussian-mechanism shape) or tabulated on a
finite grid.  Curves compose by pointwise addition; a composed curve converts
to an (epsilon, delta) statement by minimizing

    gamma(alpha) + log(1 / (alpha * delta)) / (alpha - 1) + log(1 - 1/alpha)

over alpha.  Budget assembly combines the two optimizer curves with the graph
mechanism's curve for a given model/relation pair, and calibration inverts the
assembly for the noise std.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import ContractError, InfeasibleBudgetError, InvalidInputError
from .graphs import AdjacencyRelation, GraphDataset
from .mechanisms import DPDGC, GAP, MLP, MechanismParams
from .validation import check_non_negative, check_probability

ALPHA_MIN = 1.0 + 1e-6
ALPHA_MAX = 1.0 + 1e6


@dataclass(frozen=True)
class RdpCurve:
    """gamma(alpha) for alpha > 1; linear (slope * alpha) or tabulated."""

    slope: float | None = None
    alphas: tuple = None
    gammas: tuple = None
    provenance: tuple = field(default=(), compare=False)

    def __post_init__(self):
        linear = self.slope is not None
        tabulated = self.alphas is not None or self.gammas is not None
        if linear == tabulated:
            raise InvalidInputError("curve must be either linear or tabulated")
        if linear:
            slope = float(self.slope)
            if not (slope >= 0):
                raise InvalidInputError(f"slope must be >= 0, got {slope}")
            object.__setattr__(self, "slope", slope)
        else:
            alphas = tuple(float(a) for a in self.alphas)
            gammas = tuple(float(g) for g in self.gammas)
            if len(alphas) != len(gammas) or not alphas:
                raise InvalidInputError("tabulated curve needs matching non-empty grids")
            if any(a <= 1.0 for a in alphas):
                raise InvalidInputError("tabulated alphas must all exceed 1")
            if any(b <= a for a, b in zip(alphas, alphas[1:])):
                raise InvalidInputError("tabulated alphas must be strictly increasing")
            if any(g < 0 for g in gammas):
                raise InvalidInputError("tabulated gammas must be non-negative")
            object.__setattr__(self, "alphas", alphas)
            object.__setattr__(self, "gammas", gammas)

    @classmethod
    def linear(cls, slope: float, provenance: tuple = ()) -> "RdpCurve":
        return cls(slope=slope, provenance=provenance)

    @classmethod
    def tabulated(cls, alphas, gammas, provenance: tuple = ()) -> "RdpCurve":
        return cls(alphas=alphas, gammas=gammas, provenance=provenance)

    @classmethod
    def zero(cls) -> "RdpCurve":
        return cls(slope=0.0)

    @property
    def is_linear(self) -> bool:
        return self.slope is not None

    def gamma(self, alpha):
        """Evaluate the curve; tabulated curves interpolate inside their grid."""
        alpha = np.asarray(alpha, dtype=np.float64)
        if np.any(alpha <= 1.0):
            raise InvalidInputError("curves are defined for alpha > 1")
        if self.is_linear:
            return self.slope * alpha
        lo, hi = self.alphas[0], self.alphas[-1]
        if np.any(alpha < lo) or np.any(alpha > hi):
            raise InvalidInputError(
                f"alpha outside tabulated range [{lo}, {hi}]"
            )
        return np.interp(alpha, self.alphas, self.gammas)

    def with_provenance(self, *notes: str) -> "RdpCurve":
        merged = self.provenance + tuple(notes)
        if self.is_linear:
            return RdpCurve.linear(self.slope, provenance=merged)
        return RdpCurve.tabulated(self.alphas, self.gammas, provenance=merged)


@dataclass(frozen=True)
class PrivacyBudget:
    epsilon: float
    delta: float

    def __post_init__(self):
        if math.isfinite(self.epsilon):
            check_non_negative("epsilon", self.epsilon)
        check_probability("delta", self.delta)
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "delta", float(self.delta))


def gaussian_curve(sensitivity: float, std: float) -> RdpCurve:
    """Gaussian mechanism curve: slope = sensitivity^2 / (2 std^2)."""
    check_non_negative("sensitivity", sensitivity)
    if not float(std) > 0:
        raise InvalidInputError(f"std must be positive, got {std}")
    return RdpCurve.linear(float(sensitivity) ** 2 / (2.0 * float(std) ** 2))


def compose(curves) -> RdpCurve:
    """Pointwise sum.  Linear inputs stay closed-form; mixed inputs are
    evaluated on the union grid restricted to the common tabulated range."""
    curves = list(curves)
    if not curves:
        raise InvalidInputError("compose needs at least one curve")
    if all(c.is_linear for c in curves):
        return RdpCurve.linear(sum(c.slope for c in curves))
    tabulated = [c for c in curves if not c.is_linear]
    lo = max(c.alphas[0] for c in tabulated)
    hi = min(c.alphas[-1] for c in tabulated)
    if lo > hi:
        raise InvalidInputError("tabulated curves have disjoint alpha ranges")
    grid = sorted({a for c in tabulated for a in c.alphas if lo <= a <= hi})
    if not grid:
        raise InvalidInputError("no common alpha grid to compose on")
    grid = np.array(grid)
    total = np.zeros_like(grid)
    for c in curves:
        total = total + c.gamma(grid)
    return RdpCurve.tabulated(tuple(grid), tuple(total))


def compose_adaptive(
    first: RdpCurve,
    second: RdpCurve,
    first_rdp_in_released_output: bool = False,
    second_rdp_in_private_input: bool = False,
) -> RdpCurve:
    """Compose a mechanism with a follow-up that consumes a non-private
    intermediate alongside the released output.

    The caller must attest that (i) the first mechanism satisfies RDP in its
    released output argument and (ii) the second satisfies RDP in its private
    input argument uniformly over the released one.  The numerics equal plain
    composition; the attestation is recorded in the result's provenance.
    """
    if not (first_rdp_in_released_output and second_rdp_in_private_input):
        raise ContractError(
            "adaptive composition requires both attestation flags; "
            "the hypotheses concern mechanism structure and cannot be checked numerically"
        )
    return compose([first, second]).with_provenance("adaptive-composition")


def _conversion_terms(alpha, delta: float):
    alpha = np.asarray(alpha, dtype=np.float64)
    return -np.log(alpha * delta) / (alpha - 1.0) + np.log1p(-1.0 / alpha)


def to_dp(curve: RdpCurve, delta: float) -> float:
    """Convert an RDP curve to the tightest epsilon at the given delta.

    Linear curves are minimized over a log-spaced alpha grid on
    (1 + 1e-6, 1e6] followed by local refinement (upper bound within 1e-6 of
    the true infimum); tabulated curves are minimized over their grid points.
    Negative objective values clamp to zero.
    """
    check_probability("delta", delta)
    if curve.is_linear:
        if math.isinf(curve.slope):
            return math.inf
        grid = 1.0 + np.logspace(-6, 6, 3000)
        values = curve.slope * grid + _conversion_terms(grid, delta)
        idx = int(np.argmin(values))
        best = float(values[idx])
        lo = grid[max(idx - 1, 0)]
        hi = grid[min(idx + 1, grid.size - 1)]

        def objective(a):
            return curve.slope * a + float(_conversion_terms(a, delta))

        result = minimize_scalar(objective, bounds=(lo, hi), method="bounded",
                                 options={"xatol": 1e-10})
        if result.fun < best:
            best = float(result.fun)
        return max(best, 0.0)
    grid = np.asarray(curve.alphas)
    values = np.asarray(curve.gammas) + _conversion_terms(grid, delta)
    return max(float(np.min(values)), 0.0)


def solve_total_slope(epsilon: float, delta: float) -> float:
    """Slope rho with to_dp(linear(rho), delta) = epsilon, by bisection."""
    check_probability("delta", delta)
    if not epsilon > 0:
        raise InvalidInputError(f"epsilon must be positive, got {epsilon}")
    lo, hi = 0.0, 1.0
    while to_dp(RdpCurve.linear(hi), delta) < epsilon:
        hi *= 2.0
        if hi > 1e12:
            raise InvalidInputError("epsilon target too large to calibrate")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if to_dp(RdpCurve.linear(mid), delta) < epsilon:
            lo = mid
        else:
            hi = mid
    return lo


def mechanism_coefficient(
    model: str, relation: AdjacencyRelation, params: MechanismParams
) -> float:
    """kappa such that the graph mechanism's curve slope is kappa / (2 s^2)."""
    if model == MLP:
        return 0.0
    if model == DPDGC:
        if params.L != 1:
            raise InvalidInputError("hop count applies to the multi-hop design only")
        if relation.kind == "edge":
            return 1.0
        if relation.kind == "node":
            if params.D is None:
                raise InvalidInputError("node relation requires a degree bound D")
            return 2.0 * params.D
        return float(relation.k)
    if model == GAP:
        if relation.kind == "edge":
            return float(params.L)
        if params.D is None:
            raise InvalidInputError("node/kneighbor relation requires a degree bound D")
        return 4.0 * params.D * params.L
    raise InvalidInputError(f"unknown model {model!r}")


def mechanism_curve(
    model: str, relation: AdjacencyRelation, params: MechanismParams
) -> RdpCurve:
    coeff = mechanism_coefficient(model, relation, params)
    if coeff == 0.0:
        return RdpCurve.zero()
    if params.s == 0.0:
        return RdpCurve.linear(math.inf, provenance=("non-private",))
    return RdpCurve.linear(coeff / (2.0 * params.s**2))


def _assembly_name(model: str, relation: AdjacencyRelation) -> str:
    if model == MLP:
        return "mlp"
    kind = {"edge": "edge", "node": "node", "kneighbor": "nk"}[relation.kind]
    return f"{model}-{kind}"


@dataclass(frozen=True)
class GdpReport:
    """Assembled end-to-end budget for one trained model."""

    relation: AdjacencyRelation
    gamma1: RdpCurve
    gamma2: RdpCurve
    mechanism: RdpCurve
    total: RdpCurve
    budget: PrivacyBudget
    assembly: str
    ledger: tuple = ()


def gdp_budget(
    model: str,
    relation: AdjacencyRelation,
    params: MechanismParams,
    gamma1: RdpCurve | None = None,
    gamma2: RdpCurve | None = None,
    delta: float = 1e-5,
    dataset: GraphDataset | None = None,
    ledger: tuple = (),
    adaptive: bool = False,
) -> GdpReport:
    """Assemble the total curve for a model/relation pair and convert it.

    Decoupled design: edge -> gamma1 + alpha/(2 s^2); node -> gamma1 + gamma2
    + 2 D alpha/(2 s^2); kneighbor -> gamma1 + gamma2 + k alpha/(2 s^2).
    Multi-hop design: edge -> L alpha/(2 s^2) with standard (non-DP)
    optimizers; node/kneighbor -> gamma1 + gamma2 + 4 D L alpha/(2 s^2).
    Feature-only model: gamma1 + gamma2.  When a dataset is supplied the
    delta cap (1/#edges for edge, 1/#nodes otherwise) is checked and
    violations warn.  ``adaptive=True`` assembles the total through the
    adaptive-composition route (the released embedding and the non-private
    intermediate rows feed the later optimizer), recording the attestation in
    the total's provenance; the numerics equal plain composition.
    """
    gamma1 = gamma1 if gamma1 is not None else RdpCurve.zero()
    gamma2 = gamma2 if gamma2 is not None else RdpCurve.zero()
    if model == GAP and relation.kind == "edge":
        for name, curve in (("gamma1", gamma1), ("gamma2", gamma2)):
            if not (curve.is_linear and curve.slope == 0.0):
                raise InvalidInputError(
                    f"multi-hop edge budgets use standard optimizers; {name} must be zero"
                )
    if model == DPDGC and relation.kind == "edge":
        if not (gamma2.is_linear and gamma2.slope == 0.0):
            raise InvalidInputError(
                "decoupled edge budgets train the downstream head non-privately; "
                "gamma2 must be zero"
            )

    mech = mechanism_curve(model, relation, params)
    if adaptive:
        after_pretrain = compose_adaptive(
            gamma1,
            mech,
            first_rdp_in_released_output=True,
            second_rdp_in_private_input=True,
        )
        total = compose_adaptive(
            after_pretrain,
            gamma2,
            first_rdp_in_released_output=True,
            second_rdp_in_private_input=True,
        )
    else:
        total = compose([gamma1, gamma2, mech])
    epsilon = to_dp(total, delta)

    if dataset is not None:
        cap = 1.0 / dataset.num_edges if relation.kind == "edge" else 1.0 / dataset.n
        if delta > cap:
            warnings.warn(
                f"delta={delta} exceeds the {relation.kind}-setting cap {cap:.3e}",
                UserWarning,
                stacklevel=2,
            )

    if not ledger:
        ledger = (("pretrain", gamma1), ("classifier", gamma2), ("mechanism", mech))
    return GdpReport(
        relation=relation,
        gamma1=gamma1,
        gamma2=gamma2,
        mechanism=mech,
        total=total,
        budget=PrivacyBudget(epsilon=epsilon, delta=delta),
        assembly=_assembly_name(model, relation),
        ledger=tuple(ledger),
    )


@dataclass(frozen=True)
class BudgetTemplate:
    """A budget with every component pinned except the mechanism noise std."""

    model: str
    relation: AdjacencyRelation
    gamma1: RdpCurve
    gamma2: RdpCurve
    D: int | None = None
    L: int = 1
    c: float = 1.0


def calibrate_noise(
    target: PrivacyBudget, template: BudgetTemplate, slack: float = 1e-4
) -> float:
    """Smallest noise std meeting the target budget, within ``slack`` of it.

    Bisects the monotone map s -> epsilon(s); raises when even infinite noise
    (the fixed optimizer components alone) exceeds the target.
    """
    probe = MechanismParams(s=1.0, c=template.c, L=template.L, D=template.D)
    coeff = mechanism_coefficient(template.model, template.relation, probe)
    fixed = compose([template.gamma1, template.gamma2])
    floor = to_dp(fixed, target.delta)

    if coeff == 0.0:
        if floor <= target.epsilon:
            return 0.0
        raise InfeasibleBudgetError(
            f"target epsilon {target.epsilon} is below the fixed-component floor {floor}",
            floor=floor,
        )
    if target.epsilon <= floor:
        raise InfeasibleBudgetError(
            f"target epsilon {target.epsilon} is below the fixed-component floor {floor}",
            floor=floor,
        )

    def eps_of(s: float) -> float:
        return to_dp(compose([fixed, RdpCurve.linear(coeff / (2.0 * s * s))]), target.delta)

    hi = 1.0
    for _ in range(200):
        if eps_of(hi) <= target.epsilon:
            break
        hi *= 2.0
    else:
        raise InfeasibleBudgetError("could not bracket the noise std", floor=floor)
    lo = hi
    for _ in range(200):
        if eps_of(lo) > target.epsilon:
            break
        lo /= 2.0
        if lo < 1e-12:
            break

    for _ in range(200):
        eps_hi = eps_of(hi)
        if eps_hi <= target.epsilon and target.epsilon - eps_hi <= slack:
            return hi
        mid = math.sqrt(lo * hi)
        if eps_of(mid) <= target.epsilon:
            hi = mid
        else:
            lo = mid
    return hi


# --- exports --------------------------------------------------------------------


def curve_to_csv(curve: RdpCurve, path, alphas=None) -> Path:
    """Write "alpha,gamma" rows; linear curves need (or default) a grid."""
    path = Path(path)
    if curve.is_linear:
        grid = np.asarray(alphas) if alphas is not None else 1.0 + np.logspace(-3, 4, 200)
    else:
        grid = np.asarray(curve.alphas)
    values = curve.gamma(grid)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("alpha,gamma\n")
        for a, g in zip(grid, values):
            fh.write(f"{repr(float(a))},{repr(float(g))}\n")
    return path


def _slope_or_none(curve: RdpCurve):
    return curve.slope if curve.is_linear else None


def report_to_dict(report: GdpReport) -> dict:
    """JSON-ready view of a report.

    Multi-hop kneighbor budgets hold uniformly over k, so their relation
    records no specific k.
    """
    k = report.relation.k
    if report.assembly.startswith("gap") and report.relation.kind == "kneighbor":
        k = None
    return {
        "relation": {"kind": report.relation.kind, "k": k},
        "components": {
            "gamma1_slope": _slope_or_none(report.gamma1),
            "gamma2_slope": _slope_or_none(report.gamma2),
            "mechanism_slope": _slope_or_none(report.mechanism),
        },
        "epsilon": report.budget.epsilon,
        "delta": report.budget.delta,
        "corollary": report.assembly,
    }


def save_report(report: GdpReport, path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(report_to_dict(report), fh, sort_keys=True, indent=2)
        fh.write("\n")
    return path
