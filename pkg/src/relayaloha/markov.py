"""Exact finite-horizon analysis of what two relays collect, and the
analytic throughput of random-linear-coding forwarding with finite buffers.

Over one slot the pair of relays sees one of five outcomes: nothing new,
a packet only at relay 1, only at relay 2, the same packet at both, or two
different packets (one each).  Iterating the resulting Markov chain from
the empty state gives the joint law of (w1, w2, w12) — packet counts held
only by relay 1, only by relay 2, and by both — after m_ul slots.  Feeding
that law through the rank distribution of random coefficient matrices
yields the expected number of packets a sink can decode when each relay
forwards a fixed budget of random linear combinations of its buffer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analytic import SystemConfig, throughput_sa, throughput_uplink
from .finitefield import FieldSpec, rank_pmf

MAX_EXACT_HORIZON = 400   # memory guard for the exact lattice evolution
_FULL_BOX_HORIZON = 120   # below this, evolve the full (m+1)^3 lattice
_NEG_CLAMP = 1e-12        # float fuzz tolerated in transition probabilities


@dataclass(frozen=True)
class CollectionState:
    """Packets held only by relay 1, only by relay 2, and by both."""

    w1: int
    w2: int
    w12: int

    def __post_init__(self):
        if min(self.w1, self.w2, self.w12) < 0:
            raise ValueError("collection counts must be >= 0")


@dataclass(frozen=True)
class TransitionProbs:
    """One-slot transition probabilities of the collection chain (K=2)."""

    stay: float
    add_e1: float
    add_e2: float
    add_e3: float
    add_e1e2: float

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.stay, self.add_e1, self.add_e2, self.add_e3, self.add_e1e2)


def transition_probs(cfg: SystemConfig) -> TransitionProbs:
    """Five-way slot outcome probabilities for a two-relay system.

    add_e3 covers the same packet decoded at both relays, add_e1e2 two
    distinct packets decoded simultaneously.  Components sum to one by
    construction; a negative component means the config is outside the
    model's validity and raises.
    """
    if cfg.relays_k != 2:
        raise ValueError(f"the collection chain is defined for K=2, got K={cfg.relays_k}")
    g, e = cfg.load_g, cfg.erasure_eps
    s_sa = throughput_sa(cfg)
    s_ul = throughput_uplink(cfg)
    psi = (g * e) ** 2 * (1.0 - e) ** 2 * math.exp(-g * (1.0 - e * e))
    raw = {
        "stay": 1.0 - s_ul + psi,
        "add_e1": s_ul - (s_sa + psi),
        "add_e2": s_ul - (s_sa + psi),
        "add_e3": 2.0 * s_sa - s_ul,
        "add_e1e2": psi,
    }
    for name, v in raw.items():
        if v < -_NEG_CLAMP:
            raise ValueError(f"transition component {name} = {v} is negative; "
                             f"(G={g}, eps={e}) lies outside the chain's validity range")
        raw[name] = max(v, 0.0)
    return TransitionProbs(**raw)


def _box_dims(cfg: SystemConfig, m_ul: int) -> tuple[int, int, int]:
    """Per-axis lattice bounds: full for short horizons, quantile box beyond."""
    if m_ul <= _FULL_BOX_HORIZON:
        return m_ul, m_ul, m_ul
    tp = transition_probs(cfg)
    probs = (tp.add_e1 + tp.add_e1e2, tp.add_e2 + tp.add_e1e2, tp.add_e3)
    dims = []
    for p in probs:
        mu = m_ul * p
        sd = math.sqrt(m_ul * p * (1.0 - p))
        dims.append(min(m_ul, int(math.ceil(mu + 10.0 * sd)) + 25))
    return tuple(dims)


def _pmf_grid_steps(cfg: SystemConfig, m_ul: int, dims: tuple[int, int, int]) -> np.ndarray:
    """Step-by-step evolution of the point mass at (0,0,0) on a dense lattice."""
    tp = transition_probs(cfg)
    d1, d2, d3 = dims
    grid = np.zeros((d1 + 1, d2 + 1, d3 + 1))
    grid[0, 0, 0] = 1.0
    for t in range(m_ul):
        a = min(t, d1 - 1) + 1
        b = min(t, d2 - 1) + 1
        c = min(t, d3 - 1) + 1
        cur = grid[:a, :b, :c].copy()
        grid[:a, :b, :c] = tp.stay * cur
        grid[1:a + 1, :b, :c] += tp.add_e1 * cur
        grid[:a, 1:b + 1, :c] += tp.add_e2 * cur
        grid[:a, :b, 1:c + 1] += tp.add_e3 * cur
        grid[1:a + 1, 1:b + 1, :c] += tp.add_e1e2 * cur
    return grid


def _pmf_grid_fft(cfg: SystemConfig, m_ul: int, dims: tuple[int, int, int]) -> np.ndarray:
    """m-fold convolution of the one-slot kernel via a characteristic-function
    power; mass wrapped around the quantile box is below the truncation level."""
    tp = transition_probs(cfg)
    d1, d2, d3 = dims
    kernel = np.zeros((d1 + 1, d2 + 1, d3 + 1))
    kernel[0, 0, 0] = tp.stay
    kernel[1, 0, 0] = tp.add_e1
    kernel[0, 1, 0] = tp.add_e2
    kernel[0, 0, 1] = tp.add_e3
    kernel[1, 1, 0] = tp.add_e1e2
    char = np.fft.rfftn(kernel)
    grid = np.fft.irfftn(char ** m_ul, s=kernel.shape, axes=(0, 1, 2))
    np.maximum(grid, 0.0, out=grid)
    return grid


def _pmf_grid(cfg: SystemConfig, m_ul: int) -> np.ndarray:
    """Joint pmf of (w1, w2, w12) after m_ul slots on a dense lattice.

    Short horizons are stepped exactly on the full lattice; longer ones use
    the transform power on a quantile-bounded box (agreement checked in
    tests to ~1e-13).
    """
    if m_ul < 0:
        raise ValueError("m_ul must be >= 0")
    if m_ul > MAX_EXACT_HORIZON:
        raise ValueError(f"exact mode supports m_ul <= {MAX_EXACT_HORIZON}, got {m_ul}")
    dims = _box_dims(cfg, m_ul)
    if m_ul <= _FULL_BOX_HORIZON:
        return _pmf_grid_steps(cfg, m_ul, dims)
    return _pmf_grid_fft(cfg, m_ul, dims)


def joint_pmf(cfg: SystemConfig, m_ul: int,
              min_prob: float = 0.0) -> dict[CollectionState, float]:
    """Joint law of (w1, w2, w12) after m_ul slots, as a state->probability map.

    Entries with probability <= min_prob are omitted (mass is not
    renormalised); with the default 0.0 the returned masses sum to 1.
    """
    grid = _pmf_grid(cfg, m_ul)
    out: dict[CollectionState, float] = {}
    for w1, w2, w12 in zip(*np.nonzero(grid > min_prob)):
        out[CollectionState(int(w1), int(w2), int(w12))] = float(grid[w1, w2, w12])
    return out


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _rank_tables(field: FieldSpec, c_rows: int, w_max: int) -> np.ndarray:
    """pmf[w, n] of the rank of a (c_rows x w) uniform matrix, w <= w_max."""
    nmax = min(c_rows, w_max)
    table = np.zeros((w_max + 1, nmax + 1))
    for w in range(w_max + 1):
        pm = rank_pmf(field, c_rows, w)
        table[w, :pm.size] = pm
    return table


def _span_tables(field: FieldSpec, c_max: int, w_max: int) -> tuple[np.ndarray, np.ndarray]:
    """For all (c, w): F = E[q^(rank-w)] and E1 = E[rank * q^(rank-w)].

    One recursion pass per column count w yields every row count c at once.
    """
    q = float(field.order)
    f_tab = np.zeros((c_max + 1, w_max + 1))
    e_tab = np.zeros((c_max + 1, w_max + 1))
    f_tab[0, :] = q ** (-np.arange(w_max + 1, dtype=float))
    for w in range(w_max + 1):
        if w == 0:
            f_tab[:, 0] = 1.0
            continue
        if c_max == 0:
            break
        nmax = min(c_max, w)
        n = np.arange(nmax + 1)
        stay = q ** (n - w)
        grow = 1.0 - q ** (n - w - 1.0)
        qpow = q ** (n - w)
        pm = np.zeros(nmax + 1)
        pm[0] = q ** (-w)
        if nmax >= 1:
            pm[1] = 1.0 - pm[0]
        f_tab[1, w] = float(qpow @ pm)
        e_tab[1, w] = float((n * qpow) @ pm)
        for c in range(2, c_max + 1):
            shifted = np.empty_like(pm)
            shifted[0] = 0.0
            shifted[1:] = pm[:-1]
            pm = stay * pm + grow * shifted
            f_tab[c, w] = float(qpow @ pm)
            e_tab[c, w] = float((n * qpow) @ pm)
    return f_tab, e_tab


def rlc_finite_buffer_throughput(cfg: SystemConfig, m_ul: int, rate1: float,
                                 rate2: float, field: FieldSpec) -> float:
    """Expected packets decoded at the sink per uplink slot with finite buffers.

    Relay k observes m_ul slots, then forwards c_k = round(m_ul * rate_k)
    random linear combinations of its buffer.  The sink's block system
    decodes a packet when its row in the reduced matrix pins it alone; the
    per-row probability q^-(columns - rank) is averaged over the rank laws
    of the per-relay blocks and the joint law of the buffer contents.
    """
    if min(rate1, rate2) < 0.0:
        raise ValueError("rates must be >= 0")
    if m_ul <= 0:
        raise ValueError("m_ul must be >= 1")
    c1 = _round_half_up(m_ul * rate1)
    c2 = _round_half_up(m_ul * rate2)
    q = float(field.order)
    grid = _pmf_grid(cfg, m_ul)

    # states below 1e-20 mass contribute < 1e-13 jointly; skip them
    w1a, w2a, w12a = np.nonzero(grid > 1e-20)
    pstate = grid[w1a, w2a, w12a]
    w1a = w1a.astype(np.int64)
    w2a = w2a.astype(np.int64)
    w12a = w12a.astype(np.int64)

    pmf1 = _rank_tables(field, c1, int(w1a.max()) if w1a.size else 0)
    pmf2 = _rank_tables(field, c2, int(w2a.max()) if w2a.size else 0)
    f_tab, e_tab = _span_tables(field, c1 + c2, int(w12a.max()) if w12a.size else 0)

    # rank deficiencies beyond the cutoff carry pmf mass < q^(-d^2) ~ 1e-19
    def def_cut(c: int) -> int:
        if c <= 25:
            return c
        return max(3, math.ceil(math.sqrt(64.0 / max(field.l_bits, 1))))

    total = 0.0
    m1 = np.minimum(c1, w1a)
    m2 = np.minimum(c2, w2a)
    for d1 in range(def_cut(c1) + 1):
        n1 = m1 - d1
        ok1 = n1 >= 0
        if not ok1.any():
            break
        p1 = np.where(ok1, pmf1[w1a, np.maximum(n1, 0)], 0.0)
        h1 = w1a - n1
        qh1 = np.where(ok1, q ** (-h1.astype(float)), 0.0)
        for d2 in range(def_cut(c2) + 1):
            n2 = m2 - d2
            ok = ok1 & (n2 >= 0)
            if not ok.any():
                break
            p2 = np.where(ok, pmf2[w2a, np.maximum(n2, 0)], 0.0)
            h2 = w2a - n2
            qh2 = np.where(ok, q ** (-h2.astype(float)), 0.0)
            rows12 = np.clip(c1 + c2 - n1 - n2, 0, c1 + c2)
            f12 = f_tab[rows12, w12a]
            e12 = e_tab[rows12, w12a]
            inner = (n1 * qh1 + n2 * qh2) * f12 + e12
            total += float(np.dot(pstate, p1 * p2 * inner))
    return total / m_ul
