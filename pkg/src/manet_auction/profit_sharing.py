"""Splitting the winning route's payment among its nodes.

Each node declares a cost.  If the route payment covers ``a * sum(declared)``
every node is paid its declaration, otherwise nobody is.  Starting from true
costs and letting nodes raise their claims by ``epsilon`` in turn reaches a
Nash equilibrium of this game.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

PAY_TOL = 1e-12
DEFAULT_EPSILON = 0.01


class SharingError(ValueError):
    pass


@dataclass(frozen=True)
class SharingProfile:
    real_costs: tuple
    declared: tuple
    payment: float
    allocation_weight: float
    epsilon: float

    @property
    def total_declared(self) -> float:
        return sum(self.declared)


def _payable(payment, weight, total) -> bool:
    return payment >= weight * total - PAY_TOL * max(1.0, abs(payment))


def pay_rule(profile: SharingProfile) -> list[float]:
    if _payable(profile.payment, profile.allocation_weight, profile.total_declared):
        return list(profile.declared)
    return [0.0] * len(profile.declared)


def converge(real_costs, payment: float, allocation_weight: float, epsilon: float = DEFAULT_EPSILON) -> SharingProfile:
    """Round-robin epsilon increments until no node can raise its claim and stay payable."""
    real = tuple(float(c) for c in real_costs)
    if epsilon <= 0:
        raise SharingError("epsilon must be positive")
    if not 0 < allocation_weight <= 1:
        raise SharingError("allocation weight must lie in (0, 1]")
    if any(c < 0 for c in real):
        raise SharingError("costs must be nonnegative")
    base = sum(real)
    if not _payable(payment, allocation_weight, base):
        raise SharingError("payment below cost")
    h = len(real)
    # Each accepted increment only depends on the running total, so the
    # round-robin ends after the largest payable number of increments, dealt
    # out in node order: full rounds first, then the leading nodes.
    total_steps = 0
    if h:
        total_steps = max(0, int(math.floor((payment / allocation_weight - base) / epsilon)) - 1)
        while not _payable(payment, allocation_weight, base + total_steps * epsilon) and total_steps > 0:
            total_steps -= 1
        while _payable(payment, allocation_weight, base + (total_steps + 1) * epsilon):
            total_steps += 1
    rounds, extra = divmod(total_steps, h) if h else (0, 0)
    steps = [rounds + (1 if i < extra else 0) for i in range(h)]
    declared = tuple(r + k * epsilon for r, k in zip(real, steps))
    return SharingProfile(real, declared, float(payment), float(allocation_weight), float(epsilon))


def utility(profile: SharingProfile, i: int) -> float:
    """Paid nodes earn declared minus real cost; unpaid nodes decline to forward and earn 0."""
    paid = pay_rule(profile)[i]
    if _payable(profile.payment, profile.allocation_weight, profile.total_declared):
        return paid - profile.real_costs[i]
    return 0.0


def verify_nash(profile: SharingProfile, deviation_grid_steps: int = 20) -> bool:
    """No node gains by moving its own claim ``k * epsilon`` up or down (``k <= steps``)."""
    for i in range(len(profile.declared)):
        base_u = utility(profile, i)
        for k in range(1, deviation_grid_steps + 1):
            for sign in (1, -1):
                declared = list(profile.declared)
                declared[i] += sign * k * profile.epsilon
                dev = SharingProfile(
                    profile.real_costs, tuple(declared), profile.payment, profile.allocation_weight, profile.epsilon
                )
                if utility(dev, i) > base_u + 1e-12:
                    return False
    return True


def converge_stepwise(real_costs, payment: float, allocation_weight: float, epsilon: float = DEFAULT_EPSILON) -> SharingProfile:
    """Literal round-robin loop; slow for large ``payment / epsilon`` but kept as a cross-check."""
    real = tuple(float(c) for c in real_costs)
    base = sum(real)
    if not _payable(payment, allocation_weight, base):
        raise SharingError("payment below cost")
    steps = [0] * len(real)
    total = 0
    changed = bool(real)
    while changed:
        changed = False
        for i in range(len(real)):
            if _payable(payment, allocation_weight, base + (total + 1) * epsilon):
                steps[i] += 1
                total += 1
                changed = True
    declared = tuple(r + k * epsilon for r, k in zip(real, steps))
    return SharingProfile(real, declared, float(payment), float(allocation_weight), float(epsilon))
