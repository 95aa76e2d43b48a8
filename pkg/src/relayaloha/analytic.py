"""Closed-form performance of a slotted ALOHA uplink observed by K relays.

Users transmit packets over a shared channel in synchronised slots; the
number of transmitters per slot is Poisson with mean ``load_g``.  Each
user-relay link independently erases the packet with probability
``erasure_eps`` (on-off fading), and a relay decodes a slot only when
exactly one non-erased packet reaches it (destructive collisions, no
capture).  A packet is *collected* once at least one relay decodes it.

This module evaluates the exact expressions for single-receiver and
multi-receiver throughput, per-packet loss rate, and the subset-wise
lower bounds on the downlink rates needed to forward everything the
relays collect to a common sink.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

MAX_RELAYS = 64          # log-gamma binomials stay accurate up to here
MAX_SUBSET_RELAYS = 20   # 2^K - 1 subset enumeration guard


def _binom(n: int, k: int) -> float:
    """Binomial coefficient in floating point via log-gamma (n <= 64)."""
    if k < 0 or k > n:
        return 0.0
    v = math.exp(math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1))
    # coefficients are integers; snap to the nearest representable one
    return float(round(v)) if v < 2.0**53 else v


@dataclass(frozen=True)
class SystemConfig:
    """Uplink operating point: mean load, erasure probability, relay count."""

    load_g: float
    erasure_eps: float
    relays_k: int = 1

    def __post_init__(self):
        if not (isinstance(self.relays_k, int) and 1 <= self.relays_k <= MAX_RELAYS):
            raise ValueError(f"relays_k must be an integer in [1, {MAX_RELAYS}], got {self.relays_k}")
        if not (self.load_g >= 0.0 and math.isfinite(self.load_g)):
            raise ValueError(f"load_g must be finite and >= 0, got {self.load_g}")
        if not (0.0 <= self.erasure_eps <= 1.0):
            raise ValueError(f"erasure_eps must be in [0, 1], got {self.erasure_eps}")


@dataclass(frozen=True)
class RateAllocation:
    """Downlink transmissions per uplink slot granted to each relay."""

    per_relay_rate: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "per_relay_rate", tuple(float(r) for r in self.per_relay_rate))
        if any(r < 0.0 or not math.isfinite(r) for r in self.per_relay_rate):
            raise ValueError("per-relay rates must be finite and >= 0")

    @property
    def sum_rate(self) -> float:
        return math.fsum(self.per_relay_rate)


def throughput_sa(cfg: SystemConfig) -> float:
    """Decoded packets per slot at one receiver: G(1-eps) * exp(-G(1-eps))."""
    x = cfg.load_g * (1.0 - cfg.erasure_eps)
    return x * math.exp(-x)


def phi_subset(cfg: SystemConfig, j: int) -> float:
    """Probability per slot that one packet is decoded by all of j given relays.

    Equals G(1-eps)^j * exp(-G(1-eps^j)).  With j=1 this reduces to
    :func:`throughput_sa`.
    """
    if not 1 <= j <= cfg.relays_k:
        raise ValueError(f"subset size j must be in [1, {cfg.relays_k}], got {j}")
    g, e = cfg.load_g, cfg.erasure_eps
    return g * (1.0 - e) ** j * math.exp(-g * (1.0 - e**j))


def throughput_uplink(cfg: SystemConfig) -> float:
    """Distinct collected packets per slot across all K relays.

    K*S_sa minus an alternating correction for packets decoded redundantly
    by several receivers.
    """
    k_total = cfg.relays_k
    g, e = cfg.load_g, cfg.erasure_eps
    total = k_total * throughput_sa(cfg)
    for k in range(2, k_total + 1):
        term = _binom(k_total, k) * g * (1.0 - e) ** k * math.exp(-g * (1.0 - e**k))
        total -= (-1.0) ** k * term
    return total


def plr_uplink(cfg: SystemConfig) -> float:
    """Probability that a transmitted packet is collected by no relay."""
    if cfg.load_g == 0.0:
        # no-interference limit: only fading can kill the packet
        return cfg.erasure_eps**cfg.relays_k
    g, e = cfg.load_g, cfg.erasure_eps
    s = 0.0
    for k in range(0, cfg.relays_k + 1):
        s += (-1.0) ** k * _binom(cfg.relays_k, k) * (1.0 - e) ** k * math.exp(-g * (1.0 - e**k))
    # alternating sum can leave ~1e-14 residue outside [0,1] on exact-cancellation configs
    return min(1.0, max(0.0, s))


def omega(cfg: SystemConfig, subset_size_j: int) -> float:
    """Collected traffic recoverable without a given subset of relays.

    For a subset of J relays, this is the per-slot rate of packets that the
    other K-J receivers still collect; it relaxes the subset rate bound.
    Zero when J = K (no relay left to cover for the subset).
    """
    if not 1 <= subset_size_j <= cfg.relays_k:
        raise ValueError(f"subset size must be in [1, {cfg.relays_k}], got {subset_size_j}")
    rest = cfg.relays_k - subset_size_j
    g, e = cfg.load_g, cfg.erasure_eps
    s = 0.0
    for ell in range(1, rest + 1):
        s += (-1.0) ** (ell - 1) * _binom(rest, ell) * g * (1.0 - e) ** ell * math.exp(-g * (1.0 - e**ell))
    return s


@dataclass(frozen=True)
class SubsetSlack:
    """Rate-bound margin of one relay subset: allocated minus required."""

    relays: tuple[int, ...]   # 1-based relay indices
    required: float           # S_ul - omega(|J|)
    allocated: float          # sum of the subset's rates

    @property
    def slack(self) -> float:
        return self.allocated - self.required


@dataclass(frozen=True)
class FeasibilityReport:
    """Outcome of checking every non-empty relay subset against its rate bound."""

    feasible: bool
    violations: tuple[SubsetSlack, ...]
    tightest: SubsetSlack     # minimum-slack subset, violated or not

    def __bool__(self) -> bool:
        return self.feasible


def check_rate_feasibility(cfg: SystemConfig, alloc: RateAllocation,
                           atol: float = 1e-12) -> FeasibilityReport:
    """Test the downlink rates against every subset-wise lower bound.

    A rate vector can asymptotically deliver all collected traffic only if,
    for every non-empty subset J of relays, the subset's summed rate covers
    the traffic that J alone is responsible for: sum_{k in J} R_k >=
    S_ul - omega(|J|).  All 2^K - 1 subsets are enumerated (K <= 20);
    violations beyond ``atol`` are reported with their slack.
    """
    k = cfg.relays_k
    if k > MAX_SUBSET_RELAYS:
        raise ValueError(f"subset enumeration limited to K <= {MAX_SUBSET_RELAYS}, got {k}")
    if len(alloc.per_relay_rate) != k:
        raise ValueError(f"allocation has {len(alloc.per_relay_rate)} rates, config has {k} relays")
    s_ul = throughput_uplink(cfg)
    required_by_size = {j: s_ul - omega(cfg, j) for j in range(1, k + 1)}
    violations: list[SubsetSlack] = []
    tightest: SubsetSlack | None = None
    for size in range(1, k + 1):
        req = required_by_size[size]
        for subset in combinations(range(1, k + 1), size):
            got = math.fsum(alloc.per_relay_rate[i - 1] for i in subset)
            entry = SubsetSlack(relays=subset, required=req, allocated=got)
            if tightest is None or entry.slack < tightest.slack:
                tightest = entry
            if entry.slack < -atol:
                violations.append(entry)
    assert tightest is not None
    return FeasibilityReport(feasible=not violations, violations=tuple(violations), tightest=tightest)


def max_downlink_throughput(cfg: SystemConfig, sum_rate: float) -> float:
    """Ceiling on deliverable packets per uplink slot for K=2: min(R, S_ul)."""
    if cfg.relays_k != 2:
        raise ValueError(f"the downlink throughput ceiling is stated for K=2, got K={cfg.relays_k}")
    if sum_rate < 0.0:
        raise ValueError(f"sum_rate must be >= 0, got {sum_rate}")
    return min(sum_rate, throughput_uplink(cfg))


def peak_uplink_throughput(erasure_eps: float, relays_k: int,
                           g_max: float = 50.0) -> tuple[float, float]:
    """Numerically maximise S_ul over the load G; returns (g_star, s_star).

    No closed form exists for the maximiser, so a coarse scan brackets the
    peak and golden-section search refines it.
    """
    def s_of(g: float) -> float:
        return throughput_uplink(SystemConfig(g, erasure_eps, relays_k))

    n_scan = 2000
    gs = [g_max * (i + 1) / n_scan for i in range(n_scan)]
    vals = [s_of(g) for g in gs]
    i_best = max(range(n_scan), key=vals.__getitem__)
    lo = gs[i_best - 1] if i_best > 0 else 0.0
    hi = gs[i_best + 1] if i_best < n_scan - 1 else g_max

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = s_of(c), s_of(d)
    for _ in range(120):
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = s_of(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = s_of(d)
        if b - a < 1e-13 * max(1.0, b):
            break
    g_star = 0.5 * (a + b)
    return g_star, s_of(g_star)
