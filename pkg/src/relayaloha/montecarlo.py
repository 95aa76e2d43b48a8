"""Seeded discrete-event simulation of the full relay system.

Uplink: Poisson traffic over slots, independent per-link on-off erasures,
destructive collisions (a relay decodes only a lone surviving packet).
Downlink, per experiment: either random linear coding — each relay forwards
a budget of random field combinations of its buffer and the sink row-reduces
the stacked system — or a simplified forwarding policy with per-relay FIFO
buffers served at fixed TDMA rates.

Reproducibility: trials use the counter-based Philox generator keyed by
``seed XOR trial_index``, so a SimSpec (seed included) pins every draw and
reports are bit-identical across runs; trials are independent and the
per-trial reduction is order-insensitive.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .analytic import SystemConfig
from .finitefield import FieldMatrix, FieldSpec, gauss_jordan, solved_variables
from .policies import PolicyVector

MAX_POISSON_MEAN = 50.0
_PKT_SHIFT = 21          # packet id = slot << _PKT_SHIFT | transmitter index


@dataclass(frozen=True)
class RlcDownlink:
    """Random-linear-coding downlink: per-relay rates over a shared field."""

    field: FieldSpec
    rates: tuple[float, ...]


@dataclass(frozen=True)
class SfpDownlink:
    """Probabilistic store-or-drop downlink with finite FIFO buffers."""

    policy: PolicyVector
    rates: tuple[float, ...]
    buffer_capacity: int


@dataclass(frozen=True)
class SimSpec:
    """A complete, reproducible experiment description."""

    cfg: SystemConfig
    m_ul: int
    trials: int
    seed: int
    downlink: RlcDownlink | SfpDownlink | None = None

    def __post_init__(self):
        if self.m_ul < 1:
            raise ValueError("m_ul must be >= 1")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.downlink is not None and len(self.downlink.rates) != self.cfg.relays_k:
            raise ValueError("downlink needs one rate per relay")


@dataclass
class SimReport:
    """Per-slot averages over trials with 95% normal-approximation CIs."""

    mean_collected_per_slot: float
    mean_delivered_per_slot: float
    plr_estimate: float
    duplicates_per_slot: float
    ci_halfwidth_95: dict[str, float]
    per_relay_throughput: tuple[float, ...] = ()
    transition_freqs: tuple[float, ...] | None = None
    collection_means: tuple[float, float, float] | None = None
    overflow_per_slot: float | None = None
    per_trial_raw: list[dict] | None = None


def _trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=(seed ^ trial) & (2**64 - 1)))


def _poisson_cdf(lam: float) -> np.ndarray:
    if lam > MAX_POISSON_MEAN:
        raise ValueError(f"Poisson sampling capped at mean {MAX_POISSON_MEAN}, got {lam}")
    terms = [math.exp(-lam)]
    k, acc = 0, terms[0]
    while acc < 1.0 - 1e-18 and k < 4096:
        k += 1
        terms.append(terms[-1] * lam / k)
        acc += terms[-1]
    return np.cumsum(terms)


def _sample_poisson(rng: np.random.Generator, cdf: np.ndarray, n: int) -> np.ndarray:
    """Inversion sampling: walk the precomputed CDF with one uniform per slot."""
    return np.searchsorted(cdf, rng.random(n), side="right").astype(np.int64)


def simulate_uplink_slot(cfg: SystemConfig, rng: np.random.Generator
                         ) -> tuple[int, list[int | None]]:
    """One slot: returns (u, per-relay decoded transmitter index or None)."""
    cdf = _poisson_cdf(cfg.load_g)
    u = int(_sample_poisson(rng, cdf, 1)[0])
    outcomes: list[int | None] = [None] * cfg.relays_k
    if u > 0:
        survive = rng.random((cfg.relays_k, u)) >= cfg.erasure_eps
        counts = survive.sum(axis=1)
        for k in range(cfg.relays_k):
            if counts[k] == 1:
                outcomes[k] = int(np.argmax(survive[k]))
    return u, outcomes


def _uplink_block(cfg: SystemConfig, rng: np.random.Generator, n_slots: int
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised uplink: (u per slot, decoded transmitter index or -1 per relay)."""
    cdf = _poisson_cdf(cfg.load_g)
    u = _sample_poisson(rng, cdf, n_slots)
    decoded = np.full((n_slots, cfg.relays_k), -1, dtype=np.int64)
    if cfg.erasure_eps >= 1.0:
        return u, decoded
    for val in np.unique(u[u > 0]):
        idx = np.nonzero(u == val)[0]
        survive = rng.random((idx.size, cfg.relays_k, int(val))) >= cfg.erasure_eps
        counts = survive.sum(axis=2)
        hit = survive.argmax(axis=2)
        decoded[idx] = np.where(counts == 1, hit, -1)
    return u, decoded


def _distinct_per_slot(decoded: np.ndarray) -> np.ndarray:
    s = np.sort(decoded, axis=1)
    prev = np.concatenate([np.full((s.shape[0], 1), -2, dtype=s.dtype), s[:, :-1]], axis=1)
    return ((s >= 0) & (s != prev)).sum(axis=1)


def _transition_counts(decoded: np.ndarray) -> np.ndarray:
    """Tally of the five K=2 slot outcomes (stay, e1, e2, e3, e1+e2)."""
    d1, d2 = decoded[:, 0], decoded[:, 1]
    e3 = (d1 >= 0) & (d1 == d2)
    e12 = (d1 >= 0) & (d2 >= 0) & (d1 != d2)
    e1 = (d1 >= 0) & (d2 < 0)
    e2 = (d2 >= 0) & (d1 < 0)
    n = decoded.shape[0]
    counts = np.array([0, e1.sum(), e2.sum(), e3.sum(), e12.sum()], dtype=np.int64)
    counts[0] = n - counts[1:].sum()
    return counts


def _ci95(values: list[float]) -> float:
    clean = [v for v in values if not math.isnan(v)]
    if len(clean) < 2:
        return float("nan")
    return 1.96 * float(np.std(clean, ddof=1)) / math.sqrt(len(clean))


def _finalize(metrics: dict[str, list[float]]) -> tuple[dict, dict]:
    means = {k: float(np.nanmean(v)) if any(not math.isnan(x) for x in v) else float("nan")
             for k, v in metrics.items()}
    cis = {k: _ci95(v) for k, v in metrics.items()}
    return means, cis


def run_uplink(spec: SimSpec, keep_per_trial: bool = False) -> SimReport:
    """Estimate collection statistics of the bare uplink (no downlink model)."""
    cfg = spec.cfg
    metrics: dict[str, list[float]] = {"collected": [], "plr": [], "duplicates": []}
    per_relay = np.zeros(cfg.relays_k)
    trans = np.zeros(5)
    coll_means = np.zeros(3)
    raw: list[dict] = []
    for trial in range(spec.trials):
        rng = _trial_rng(spec.seed, trial)
        u, decoded = _uplink_block(cfg, rng, spec.m_ul)
        distinct = _distinct_per_slot(decoded)
        collected = int(distinct.sum())
        transmitted = int(u.sum())
        decodes = (decoded >= 0).sum(axis=0)
        dup = int(decodes.sum()) - collected
        metrics["collected"].append(collected / spec.m_ul)
        metrics["plr"].append(1.0 - collected / transmitted if transmitted else float("nan"))
        metrics["duplicates"].append(dup / spec.m_ul)
        per_relay += decodes / spec.m_ul
        if cfg.relays_k == 2:
            tc = _transition_counts(decoded)
            trans += tc / spec.m_ul
            coll_means += np.array([tc[1] + tc[4], tc[2] + tc[4], tc[3]]) / spec.m_ul
        if keep_per_trial:
            raw.append({"collected": collected, "transmitted": transmitted, "duplicates": dup})
    means, cis = _finalize(metrics)
    return SimReport(
        mean_collected_per_slot=means["collected"],
        mean_delivered_per_slot=0.0,
        plr_estimate=means["plr"],
        duplicates_per_slot=means["duplicates"],
        ci_halfwidth_95={"collected": cis["collected"], "plr": cis["plr"],
                         "duplicates": cis["duplicates"]},
        per_relay_throughput=tuple(per_relay / spec.trials),
        transition_freqs=tuple(trans / spec.trials) if cfg.relays_k == 2 else None,
        collection_means=tuple(coll_means / spec.trials) if cfg.relays_k == 2 else None,
        per_trial_raw=raw if keep_per_trial else None,
    )


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def run_rlc(spec: SimSpec, keep_per_trial: bool = False) -> SimReport:
    """Simulate RLC forwarding and sink-side Gauss-Jordan decoding."""
    if not isinstance(spec.downlink, RlcDownlink):
        raise ValueError("spec.downlink must be an RlcDownlink")
    cfg = spec.cfg
    fld = spec.downlink.field
    budgets = [_round_half_up(spec.m_ul * r) for r in spec.downlink.rates]
    if any(b < 0 for b in budgets):
        raise ValueError("rates must be >= 0")
    metrics: dict[str, list[float]] = {"collected": [], "delivered": [], "plr": [],
                                       "duplicates": []}
    raw: list[dict] = []
    for trial in range(spec.trials):
        rng = _trial_rng(spec.seed, trial)
        u, decoded = _uplink_block(cfg, rng, spec.m_ul)
        slot_ids = np.arange(spec.m_ul, dtype=np.int64) << _PKT_SHIFT
        relay_sets = [slot_ids[decoded[:, k] >= 0] | decoded[decoded[:, k] >= 0, k]
                      for k in range(cfg.relays_k)]
        all_ids = np.unique(np.concatenate(relay_sets))
        col_of = {int(pid): i for i, pid in enumerate(all_ids)}
        ncols = all_ids.size
        rows = int(sum(budgets))
        mat = np.zeros((rows, ncols), dtype=np.int64)
        r0 = 0
        for k in range(cfg.relays_k):
            cols_k = np.array([col_of[int(p)] for p in relay_sets[k]], dtype=np.int64)
            if budgets[k] and cols_k.size:
                mat[r0:r0 + budgets[k], cols_k] = rng.integers(
                    0, fld.order, size=(budgets[k], cols_k.size), dtype=np.int64)
            r0 += budgets[k]
        if ncols and rows:
            rref, _, _ = gauss_jordan(FieldMatrix(fld, mat))
            delivered = len(solved_variables(rref))
        else:
            delivered = 0
        transmitted = int(u.sum())
        dup = int(sum(s.size for s in relay_sets)) - ncols
        metrics["collected"].append(ncols / spec.m_ul)
        metrics["delivered"].append(delivered / spec.m_ul)
        metrics["plr"].append(1.0 - ncols / transmitted if transmitted else float("nan"))
        metrics["duplicates"].append(dup / spec.m_ul)
        if keep_per_trial:
            raw.append({"collected": ncols, "delivered": delivered,
                        "transmitted": transmitted})
    means, cis = _finalize(metrics)
    return SimReport(
        mean_collected_per_slot=means["collected"],
        mean_delivered_per_slot=means["delivered"],
        plr_estimate=means["plr"],
        duplicates_per_slot=means["duplicates"],
        ci_halfwidth_95={"collected": cis["collected"], "delivered": cis["delivered"],
                         "plr": cis["plr"], "duplicates": cis["duplicates"]},
        per_trial_raw=raw if keep_per_trial else None,
    )


def run_sfp(spec: SimSpec, keep_per_trial: bool = False) -> SimReport:
    """Simulate a simplified forwarding policy with finite FIFO buffers.

    Enqueueing uses the true transmitter count's class.  Service: relay k
    earns rate_k transmission opportunities per uplink slot; whole
    opportunities dequeue the head of line, and an opportunity that finds
    the queue empty is wasted.  A packet arriving at a full buffer is
    dropped (tail drop).  Packets still queued when the horizon ends are
    not delivered; with a horizon of m_ul slots this understates throughput
    by at most capacity/m_ul.
    """
    if not isinstance(spec.downlink, SfpDownlink):
        raise ValueError("spec.downlink must be an SfpDownlink")
    cfg = spec.cfg
    dl = spec.downlink
    if dl.buffer_capacity < 1:
        raise ValueError("buffer_capacity must be >= 1")
    if dl.policy.relays != cfg.relays_k:
        raise ValueError("policy must cover every relay")
    chi = dl.policy.as_array()
    qcls = dl.policy.partition_q
    metrics: dict[str, list[float]] = {"collected": [], "delivered": [], "plr": [],
                                       "duplicates": [], "overflow": []}
    raw: list[dict] = []
    for trial in range(spec.trials):
        rng = _trial_rng(spec.seed, trial)
        u, decoded = _uplink_block(cfg, rng, spec.m_ul)
        distinct = _distinct_per_slot(decoded)
        cls = np.minimum(np.maximum(u - 1, 0), qcls)
        enq_draw = rng.random((spec.m_ul, cfg.relays_k))
        enqueue = (decoded >= 0) & (enq_draw < chi[:, cls].T)
        slot_ids = np.arange(spec.m_ul, dtype=np.int64) << _PKT_SHIFT
        pkt_ids = slot_ids[:, None] | np.maximum(decoded, 0)

        queues = [deque() for _ in range(cfg.relays_k)]
        credit = [0.0] * cfg.relays_k
        delivered_ids: set[int] = set()
        deliveries = 0
        overflow = 0
        enq_total = 0
        cap = dl.buffer_capacity
        for t in range(spec.m_ul):
            for k in range(cfg.relays_k):
                if enqueue[t, k]:
                    if len(queues[k]) < cap:
                        queues[k].append(int(pkt_ids[t, k]))
                        enq_total += 1
                    else:
                        overflow += 1
                credit[k] += dl.rates[k]
                while credit[k] >= 1.0:
                    credit[k] -= 1.0
                    if queues[k]:
                        delivered_ids.add(queues[k].popleft())
                        deliveries += 1
        delivered = len(delivered_ids)
        transmitted = int(u.sum())
        collected = int(distinct.sum())
        metrics["collected"].append(collected / spec.m_ul)
        metrics["delivered"].append(delivered / spec.m_ul)
        metrics["plr"].append(1.0 - collected / transmitted if transmitted else float("nan"))
        metrics["duplicates"].append((deliveries - delivered) / spec.m_ul)
        metrics["overflow"].append(overflow / spec.m_ul)
        if keep_per_trial:
            raw.append({"collected": collected, "delivered": delivered,
                        "enqueued": enq_total, "overflow": overflow,
                        "leftover": sum(len(qu) for qu in queues),
                        "deliveries": deliveries})
    means, cis = _finalize(metrics)
    return SimReport(
        mean_collected_per_slot=means["collected"],
        mean_delivered_per_slot=means["delivered"],
        plr_estimate=means["plr"],
        duplicates_per_slot=means["duplicates"],
        ci_halfwidth_95={"collected": cis["collected"], "delivered": cis["delivered"],
                         "plr": cis["plr"], "duplicates": cis["duplicates"],
                         "overflow": cis["overflow"]},
        overflow_per_slot=means["overflow"],
        per_trial_raw=raw if keep_per_trial else None,
    )
