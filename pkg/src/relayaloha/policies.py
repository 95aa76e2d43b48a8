"""Simplified forwarding policies (SFPs) for the two-relay downlink.

Instead of coding, each relay flips a biased coin when it decodes a packet:
enqueue for forwarding or drop.  The bias may depend on how many users
transmitted in the slot, through a (Q+1)-class partition of the interferer
count: classes {1}, {2}, ..., {Q} and "more than Q".  Q=0 is the
channel-agnostic policy (one class), Q=1 the interference-aware one (lone
packet vs. collision), larger Q approaches full channel awareness.

For a given downlink sum-rate the enqueueing probabilities are optimised to
maximise distinct packets reaching the sink; closed forms exist for Q<=1,
a staircase construction conjecturally extends them to any Q, and a seeded
multistart coordinate optimizer serves as the independent check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analytic import SystemConfig, throughput_sa, throughput_uplink

_POISSON_TAIL = 1e-16   # truncate direct Poisson sums below this pmf mass
_MAX_OPT_Q = 10
_OPT_SEED = 0x5FA11A    # fixed stream for the multistart optimizer


@dataclass(frozen=True)
class PolicyVector:
    """Per-relay enqueueing probabilities over the interferer-count classes.

    Row k holds relay k's probabilities; column j < Q covers slots with
    exactly j+1 transmitters, the last column covers "more than Q".
    """

    partition_q: int
    enqueue_prob: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        if self.partition_q < 0:
            raise ValueError("partition_q must be >= 0")
        rows = tuple(tuple(float(x) for x in row) for row in self.enqueue_prob)
        object.__setattr__(self, "enqueue_prob", rows)
        for row in rows:
            if len(row) != self.partition_q + 1:
                raise ValueError(f"each relay needs {self.partition_q + 1} probabilities, got {len(row)}")
            if any(not 0.0 <= x <= 1.0 for x in row):
                raise ValueError("enqueueing probabilities must lie in [0, 1]")

    @property
    def relays(self) -> int:
        return len(self.enqueue_prob)

    @classmethod
    def uniform(cls, relays: int, partition_q: int, value: float) -> "PolicyVector":
        row = (float(value),) * (partition_q + 1)
        return cls(partition_q, (row,) * relays)

    def as_array(self) -> np.ndarray:
        return np.array(self.enqueue_prob, dtype=float)


def slot_class(u: int, partition_q: int) -> int:
    """Class column index for a slot with u >= 1 transmitters."""
    if u < 1:
        raise ValueError("slot classes are defined for u >= 1 transmitters")
    return min(u - 1, partition_q)


@dataclass(frozen=True)
class SfpCoefficients:
    """Per-class rate and duplicate-loss coefficients for K=2.

    ``delta[j]`` is the per-slot probability that a given relay decodes a
    packet in class j; the deltas sum to the single-receiver throughput.
    ``theta[j]`` is the probability that both relays decode the *same*
    packet in class j; the thetas sum to G(1-eps)^2 exp(-G(1-eps^2)).
    For the interference-aware case (Q=1) the classic names are exposed:
    upsilon = theta[0] and psi = theta[1].
    """

    partition_q: int
    delta: tuple[float, ...]
    theta: tuple[float, ...]
    upsilon: float | None = None
    psi: float | None = None


def _gamma_ratio(s: int, x: float) -> float:
    """Regularised lower incomplete gamma for integer s:
    gamma(s, x)/(s-1)! = 1 - exp(-x) * sum_{m<s} x^m/m!   (finite series)."""
    if s < 1:
        raise ValueError("integer order s must be >= 1")
    acc, term = 0.0, 1.0
    for m in range(s):
        if m > 0:
            term *= x / m
        acc += term
    return 1.0 - math.exp(-x) * acc


def sfp_coefficients(cfg: SystemConfig, q: int) -> SfpCoefficients:
    """Coefficient families for a Q-class channel-aware policy (q >= 1)."""
    if q < 1:
        raise ValueError(f"partition size q must be >= 1, got {q}")
    g, e = cfg.load_g, cfg.erasure_eps
    base_d = g * (1.0 - e) * math.exp(-g)
    base_t = g * (1.0 - e) ** 2 * math.exp(-g)
    s_sa = throughput_sa(cfg)
    phi2 = g * (1.0 - e) ** 2 * math.exp(-g * (1.0 - e * e))
    delta, theta = [], []
    term_d, term_t = base_d, base_t
    for i in range(1, q + 1):
        if i > 1:
            term_d *= g * e / (i - 1)
            term_t *= g * e * e / (i - 1)
        delta.append(term_d)
        theta.append(term_t)
    delta.append(s_sa * _gamma_ratio(q, g * e))
    theta.append(phi2 * _gamma_ratio(q, g * e * e))
    ups, psi = (theta[0], theta[1]) if q == 1 else (None, None)
    return SfpCoefficients(q, tuple(delta), tuple(theta), ups, psi)


def _coeff_vectors(cfg: SystemConfig, q: int) -> tuple[np.ndarray, np.ndarray]:
    """delta/theta as arrays; q=0 collapses to the agnostic single class."""
    if q == 0:
        g, e = cfg.load_g, cfg.erasure_eps
        phi2 = g * (1.0 - e) ** 2 * math.exp(-g * (1.0 - e * e))
        return np.array([throughput_sa(cfg)]), np.array([phi2])
    c = sfp_coefficients(cfg, q)
    return np.array(c.delta), np.array(c.theta)


def _require_two_relays(cfg: SystemConfig) -> None:
    if cfg.relays_k != 2:
        raise ValueError(f"SFP analysis is stated for K=2, got K={cfg.relays_k}")


def arrival_rate(cfg: SystemConfig, policy: PolicyVector, relay: int) -> float:
    """Mean enqueued packets per slot at one relay, by direct Poisson summation."""
    if not 0 <= relay < policy.relays:
        raise ValueError(f"relay index {relay} out of range [0, {policy.relays})")
    g, e = cfg.load_g, cfg.erasure_eps
    chi = policy.enqueue_prob[relay]
    total = 0.0
    pmf = math.exp(-g)
    u = 0
    while True:
        u += 1
        pmf *= g / u
        if pmf < _POISSON_TAIL and u > g:
            break
        total += pmf * u * (1.0 - e) * e ** (u - 1) * chi[slot_class(u, policy.partition_q)]
    return total


def throughput_agnostic(cfg: SystemConfig, chi1: float, chi2: float) -> tuple[float, float]:
    """(sum_rate, downlink throughput) of the channel-agnostic policy."""
    _require_two_relays(cfg)
    if not (0.0 <= chi1 <= 1.0 and 0.0 <= chi2 <= 1.0):
        raise ValueError("enqueueing probabilities must lie in [0, 1]")
    g, e = cfg.load_g, cfg.erasure_eps
    s_sa = throughput_sa(cfg)
    rate = (chi1 + chi2) * s_sa
    dup = chi1 * chi2 * g * (1.0 - e) ** 2 * math.exp(-g * (1.0 - e * e))
    return rate, rate - dup


def optimal_agnostic(cfg: SystemConfig, sum_rate: float) -> tuple[float, float, float]:
    """Optimal (chi1, chi2) and throughput of the agnostic policy at a given rate.

    One relay forwards everything, the other picks up the residual rate;
    valid for sum rates between one and two single-receiver throughputs.
    """
    _require_two_relays(cfg)
    s_sa = throughput_sa(cfg)
    _check_rate_range(sum_rate, s_sa)
    if s_sa == 0.0:
        return 0.0, 0.0, 0.0
    g, e = cfg.load_g, cfg.erasure_eps
    chi2 = min(1.0, max(0.0, sum_rate / s_sa - 1.0))
    best = (sum_rate * (1.0 - (1.0 - e) * math.exp(-g * e * (1.0 - e)))
            + g * (1.0 - e) ** 2 * math.exp(-g * (1.0 - e * e)))
    return 1.0, chi2, best


def _check_rate_range(sum_rate: float, s_sa: float, atol: float = 1e-9) -> None:
    if not (s_sa - atol <= sum_rate <= 2.0 * s_sa + atol):
        raise ValueError(f"sum_rate {sum_rate} outside the analysed range [{s_sa}, {2.0 * s_sa}]")


def throughput_interference_aware(cfg: SystemConfig, policy: PolicyVector) -> tuple[float, float]:
    """(sum_rate, downlink throughput) of a Q=1 interference-aware policy."""
    _require_two_relays(cfg)
    if policy.partition_q != 1 or policy.relays != 2:
        raise ValueError("interference-aware policies need Q=1 and two relays")
    return throughput_channel_aware(cfg, policy, 1)


def optimal_interference_aware(cfg: SystemConfig, sum_rate: float) -> tuple[PolicyVector, float]:
    """Optimal Q=1 policy and throughput at a given sum rate.

    Relay 1 forwards everything.  On the low-rate side relay 2 forwards only
    packets decoded under interference (harder for relay 1 to also hold);
    once those saturate, its clean-slot probability grows instead.
    """
    _require_two_relays(cfg)
    c = sfp_coefficients(cfg, 1)
    d1, d2 = c.delta                      # clean-slot / collided-slot rate coefficients
    ups, psi = c.theta
    s_sa = throughput_sa(cfg)
    _check_rate_range(sum_rate, s_sa)
    if s_sa == 0.0:
        return PolicyVector(1, ((0.0, 0.0), (0.0, 0.0))), 0.0
    switch = d1 + 2.0 * d2
    if sum_rate < switch and d2 > 0.0:
        chi2 = (0.0, min(1.0, max(0.0, (sum_rate - s_sa) / d2)))
        value = sum_rate * (1.0 - psi / d2) + psi * s_sa / d2
    else:
        chi2 = (min(1.0, max(0.0, (sum_rate - s_sa - d2) / d1)), 1.0)
        value = sum_rate * (1.0 - ups / d1) + ups * (s_sa + d2) / d1 - psi
    policy = PolicyVector(1, ((1.0, 1.0), chi2))
    return policy, value


def throughput_channel_aware(cfg: SystemConfig, policy: PolicyVector, q: int) -> tuple[float, float]:
    """(sum_rate, downlink throughput) of a Q-class channel-aware policy."""
    _require_two_relays(cfg)
    if q < 1 or policy.partition_q != q or policy.relays != 2:
        raise ValueError(f"policy must have two relays and Q={q} classes")
    delta, theta = _coeff_vectors(cfg, q)
    chi = policy.as_array()
    rate = float(delta @ (chi[0] + chi[1]))
    dup = float(theta @ (chi[0] * chi[1]))
    return rate, rate - dup


def conjectured_optimum_channel_aware(cfg: SystemConfig, sum_rate: float,
                                      q: int) -> tuple[PolicyVector, float]:
    """Staircase policy conjectured optimal for any Q, and its throughput.

    Relay 1 forwards everything.  Scanning classes from "most interfered"
    (class Q+1) down to "lone packet" (class 1), relay 2's probabilities
    saturate one class at a time as the rate budget grows; the boundaries
    are r_n = S_sa + sum_{i>=n} delta_i, with r_1 = 2*S_sa.  Reduces to the
    proven closed form at Q=1.
    """
    _require_two_relays(cfg)
    if q < 1:
        raise ValueError(f"partition size q must be >= 1, got {q}")
    delta, theta = _coeff_vectors(cfg, q)
    s_sa = throughput_sa(cfg)
    _check_rate_range(sum_rate, s_sa)
    if s_sa == 0.0:
        return PolicyVector.uniform(2, q, 0.0), 0.0
    # r[n] (1-based class n) = rate at which class n saturates
    suffix = np.concatenate([np.cumsum(delta[::-1])[::-1], [0.0]])  # suffix[i] = sum delta[i:]
    n = q + 1
    while n > 1 and (sum_rate >= s_sa + suffix[n - 1] or delta[n - 1] == 0.0):
        n -= 1
    chi2 = np.zeros(q + 1)
    chi2[n:] = 1.0
    chi2[n - 1] = min(1.0, max(0.0, (sum_rate - s_sa - suffix[n]) / delta[n - 1]))
    lam = theta[n - 1] / delta[n - 1]
    if n == q + 1:
        value = (1.0 - lam) * sum_rate + s_sa * lam
    else:
        g, e = cfg.load_g, cfg.erasure_eps
        phi2 = g * (1.0 - e) ** 2 * math.exp(-g * (1.0 - e * e))
        value = ((1.0 - lam) * sum_rate
                 + (1.0 + _gamma_ratio(n, g * e)) * s_sa * lam
                 - phi2 * _gamma_ratio(n, g * e * e))
    policy = PolicyVector(q, (tuple(1.0 for _ in range(q + 1)), tuple(chi2)))
    return policy, float(value)


def numeric_optimize_sfp(cfg: SystemConfig, q: int, sum_rate: float,
                         grid_step: float = 0.01) -> tuple[PolicyVector, float]:
    """Constrained numerical maximisation of the Q-class downlink throughput.

    Multistart projected coordinate ascent on the rate-equality manifold:
    every move shifts one probability and compensates with another so the
    sum rate is preserved; the objective is linear or concave along each
    such move, so candidate optima sit at interval endpoints.  32 seeded
    random starts plus the conjectured staircase point.  Serves as the
    independent oracle for the closed-form optima.
    """
    _require_two_relays(cfg)
    if not 0 <= q <= _MAX_OPT_Q:
        raise ValueError(f"optimizer supports 0 <= Q <= {_MAX_OPT_Q}, got {q}")
    if not 0.0 < grid_step <= 0.1:
        raise ValueError(f"grid_step must be in (0, 0.1], got {grid_step}")
    delta, theta = _coeff_vectors(cfg, q)
    capacity = 2.0 * float(delta.sum())
    if not -1e-12 <= sum_rate <= capacity + 1e-9:
        raise ValueError(f"sum_rate {sum_rate} infeasible; achievable range is [0, {capacity}]")
    sum_rate = min(max(sum_rate, 0.0), capacity)

    ncls = q + 1
    dd = np.concatenate([delta, delta])      # flat coordinate space: relay1 classes then relay2

    def objective(x: np.ndarray) -> float:
        return float(theta @ (x[:ncls] * x[ncls:]))

    def repair(x: np.ndarray) -> np.ndarray:
        # project onto the rate-equality manifold by greedy coordinate moves
        x = x.copy()
        tol = max(grid_step * float(delta.min()) * 1e-3, 1e-13)
        movable = [i for i in range(2 * ncls) if dd[i] > 0.0]
        for _ in range(200):
            gap = sum_rate - float(dd @ x)
            if abs(gap) <= tol:
                return x
            for i in movable:
                gap = sum_rate - float(dd @ x)
                if abs(gap) <= tol:
                    break
                x[i] = min(1.0, max(0.0, x[i] + gap / dd[i]))
        return x

    def descend(x: np.ndarray) -> tuple[np.ndarray, float]:
        # pairwise moves x[i] += t, x[j] -= t*dd[i]/dd[j] keep the rate fixed;
        # the objective is linear or concave in t, so endpoints suffice
        x = x.copy()
        best = objective(x)
        for _ in range(200):
            improved = False
            for i in range(2 * ncls):
                for j in range(2 * ncls):
                    if i == j or dd[j] == 0.0:
                        continue
                    r = dd[i] / dd[j]
                    if r > 0.0:
                        t_lo = max(-x[i], (x[j] - 1.0) / r)
                        t_hi = min(1.0 - x[i], x[j] / r)
                    else:
                        t_lo, t_hi = -x[i], 1.0 - x[i]
                    if t_hi - t_lo <= 1e-15:
                        continue
                    ci, pi = i % ncls, x[(i + ncls) % (2 * ncls)]
                    cj, pj = j % ncls, x[(j + ncls) % (2 * ncls)]
                    same_class_pair = (j + ncls) % (2 * ncls) == i
                    best_t, best_df = 0.0, -1e-14
                    for t in (t_lo, t_hi):
                        if same_class_pair:
                            df = theta[ci] * (t * x[j] - t * r * x[i] - t * t * r)
                        else:
                            df = theta[ci] * t * pi - theta[cj] * t * r * pj
                        if df < best_df:
                            best_t, best_df = t, df
                    if best_df < -1e-14:
                        x[i] = min(1.0, max(0.0, x[i] + best_t))
                        x[j] = min(1.0, max(0.0, x[j] - best_t * r))
                        improved = True
            if not improved:
                break
        return x, objective(x)

    rng = np.random.Generator(np.random.Philox(key=_OPT_SEED))
    starts: list[np.ndarray] = []
    if q >= 1:
        conj, _ = conjectured_optimum_channel_aware(cfg, min(max(sum_rate, delta.sum()), capacity), q)
        starts.append(conj.as_array().reshape(-1))
    else:
        chi2 = min(1.0, max(0.0, sum_rate / delta[0] - 1.0))
        chi1 = min(1.0, sum_rate / delta[0]) if chi2 == 0.0 else 1.0
        starts.append(np.array([chi1, chi2]))
    starts.append(np.full(2 * ncls, min(1.0, sum_rate / capacity)))  # proportional point
    for _ in range(32):
        starts.append(rng.random(2 * ncls))

    best_x, best_f = None, math.inf
    for s in starts:
        x = repair(np.clip(s, 0.0, 1.0))
        if abs(float(dd @ x) - sum_rate) > max(grid_step * float(delta.min()), 1e-10):
            continue
        x, f = descend(x)
        if f < best_f - 1e-15:
            best_x, best_f = x, f
    if best_x is None:
        raise ValueError(f"could not reach the requested sum_rate {sum_rate}")
    chi1, chi2 = best_x[:ncls], best_x[ncls:]
    # symmetric optima come in relay-swapped pairs; report relay 1 saturated first
    if tuple(chi2) > tuple(chi1):
        chi1, chi2 = chi2, chi1
    policy = PolicyVector(q, (tuple(np.clip(chi1, 0.0, 1.0)), tuple(np.clip(chi2, 0.0, 1.0))))
    achieved = float(dd @ best_x)
    return policy, achieved - best_f
