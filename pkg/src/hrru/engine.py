"""Lockstep batch simulation of many replications at once.

One chunk simulates replications [rep_lo, rep_hi) in parallel numpy
lanes: every per-step quantity is a vector over replications, and all
randomness comes from evaluating the counter-based streams of rng.py
elementwise.  Because each lane only ever touches values keyed by its
own (master_seed, rep) pair, the results are bit-identical to running
each replication alone, and therefore independent of chunk sizes,
worker counts, and execution order.

Floating-point accumulations across steps (mean of X/N, mean of 1/N)
use Kahan compensation, elementwise, in a fixed step order; the
scalar fallback below performs the identical operations in the
identical order, so both paths agree bit-for-bit.  Tests pin that.

All ball counts stay in int64; configuration validation bounds the
worst-case total (a + b + steps * draw_bound * reinf_bound) below
2**62 before a chunk starts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .multi_urn import UrnSystem
from .urn_core import (
    AbsorbingRandomWalk,
    ConstantOne,
    ConstantReinforcement,
    CustomRule,
    DeterministicSchedule,
    DiscreteDraw,
    DiscreteReinforcement,
    IidUniform,
    IntegerDistribution,
    ParameterError,
    UniformReinforcement,
    UrnConfig,
    UrnState,
    step as urn_step,
)

SNAPSHOT_FIELDS = (
    "z",              # A-proportion H/S at the horizon
    "m_emp",          # running mean of X/N
    "s_over_n",       # total balls divided by the horizon
    "reinf_mean",     # mean R
    "reinf_sqmean",   # mean R^2
    "draw_mean",      # mean N
    "draw_recipmean", # mean 1/N
)


def engine_supported(config: UrnConfig | UrnSystem) -> bool:
    """Whether the vector path can run this configuration."""
    if isinstance(config, UrnSystem):
        return True
    return not isinstance(config.draw, CustomRule)


def worst_case_total(config: UrnConfig | UrnSystem, steps: int) -> int:
    if isinstance(config, UrnSystem):
        k = config.k
        return max(u.a + u.b for u in config.urns) + steps * k * k
    return (
        config.a + config.b
        + steps * config.draw.bound * config.reinforce.bound
    )


# Per-policy vector emitters.  Each declares whether it consumes a
# uniform row and at what counter offset, and emits the step's values
# given that row.  Emitters may hold per-lane state (the walk).


class _VecConstantDraw:
    needs_row = False
    row_offset = 0

    def __init__(self, policy: ConstantOne | DeterministicSchedule):
        if isinstance(policy, ConstantOne):
            self._values = (1,)
        else:
            self._values = policy.values

    def emit(self, t: int, u: np.ndarray | None):
        vals = self._values
        return vals[t] if t < len(vals) else vals[-1]


class _VecIidUniformDraw:
    needs_row = True
    row_offset = 0

    def __init__(self, policy: IidUniform):
        self._high = policy.high

    def emit(self, t: int, u: np.ndarray | None):
        h = self._high
        if h == 1:
            return 1
        scaled = (u * h).astype(np.int64)
        np.minimum(scaled, h - 1, out=scaled)
        scaled += 1
        return scaled


class _VecDiscreteDraw:
    needs_row = True
    row_offset = 0

    def __init__(self, values: tuple[int, ...], probs: tuple[float, ...]):
        dist = IntegerDistribution(values, probs)
        self._cdf = np.asarray(dist.cdf_steps(), dtype=np.float64)
        self._values = np.asarray(values, dtype=np.int64)

    def emit(self, t: int, u: np.ndarray | None):
        idx = np.searchsorted(self._cdf, u, side="right")
        np.minimum(idx, len(self._values) - 1, out=idx)
        return self._values[idx]


class _VecWalkDraw:
    needs_row = True
    row_offset = -1  # step t reads counter t - 1; the t = 0 row is unused

    def __init__(self, policy: AbsorbingRandomWalk, lanes: int):
        self._high = policy.high
        self._start = policy.start
        self._w = np.full(lanes, policy.start, dtype=np.int64)

    def emit(self, t: int, u: np.ndarray | None):
        if t == 0:
            return self._w.copy()
        w = self._w
        inside = (w > 1) & (w < self._high)
        delta = np.where(u < 0.5, 1, -1)
        np.add(w, delta, out=w, where=inside)
        return w.copy()


class _VecConstantReinf:
    needs_row = False
    row_offset = 0

    def __init__(self, policy: ConstantReinforcement):
        self._value = policy.value

    def emit(self, t: int, u: np.ndarray | None):
        return self._value


class _VecUniformReinf:
    needs_row = True
    row_offset = 0

    def __init__(self, policy: UniformReinforcement):
        self._low = policy.low
        self._span = policy.high - policy.low + 1

    def emit(self, t: int, u: np.ndarray | None):
        span = self._span
        if span == 1:
            return self._low
        scaled = (u * span).astype(np.int64)
        np.minimum(scaled, span - 1, out=scaled)
        scaled += self._low
        return scaled


def _vec_draw(policy, lanes: int):
    if isinstance(policy, (ConstantOne, DeterministicSchedule)):
        return _VecConstantDraw(policy)
    if isinstance(policy, IidUniform):
        return _VecIidUniformDraw(policy)
    if isinstance(policy, DiscreteDraw):
        return _VecDiscreteDraw(policy.values, policy.probs)
    if isinstance(policy, AbsorbingRandomWalk):
        return _VecWalkDraw(policy, lanes)
    raise ParameterError(f"no vector emitter for draw policy {type(policy).__name__}")


def _vec_reinf(policy):
    if isinstance(policy, ConstantReinforcement):
        return _VecConstantReinf(policy)
    if isinstance(policy, UniformReinforcement):
        return _VecUniformReinf(policy)
    if isinstance(policy, DiscreteReinforcement):
        return _VecDiscreteDraw(policy.values, policy.probs)
    raise ParameterError(f"no vector emitter for reinforcement {type(policy).__name__}")


class _VecFactor:
    needs_row = True
    row_offset = 0

    def __init__(self, dist: IntegerDistribution):
        self._inner = _VecDiscreteDraw(dist.values, dist.probs)

    def emit(self, t: int, u: np.ndarray | None):
        return self._inner.emit(t, u)


@dataclass
class _UrnLane:
    """One urn's vector state and accumulators inside a chunk."""

    label: str
    stride: int
    H: np.ndarray
    S: np.ndarray
    sum_r: np.ndarray
    sum_rr: np.ndarray
    sum_n: np.ndarray
    msum: np.ndarray
    mcomp: np.ndarray
    etasum: np.ndarray
    etacomp: np.ndarray


def _kahan_add(total: np.ndarray, comp: np.ndarray, x: np.ndarray) -> None:
    # Classic compensated add, elementwise; the scalar fallback mirrors
    # these four operations exactly.
    y = x - comp
    t = total + y
    np.subtract(t, total, out=comp)
    np.subtract(comp, y, out=comp)
    total[...] = t


def _snapshot(lane: _UrnLane, horizon: int) -> dict[str, np.ndarray]:
    h = horizon
    return {
        "z": lane.H / lane.S,
        "m_emp": lane.msum / h,
        "s_over_n": lane.S / h,
        "reinf_mean": lane.sum_r / h,
        "reinf_sqmean": lane.sum_rr / h,
        "draw_mean": lane.sum_n / h,
        "draw_recipmean": lane.etasum / h,
    }


def _normalize(config: UrnConfig | UrnSystem):
    """(urn descriptors, factor specs, stride, labels) for either kind."""
    if isinstance(config, UrnSystem):
        urns = [
            (u.label, u.a, u.b, u.draw_base, u.reinforce_base) for u in config.urns
        ]
        return urns, config.factors, config.draw_stride
    return None, None, config.draw.bound


def run_chunk(
    config: UrnConfig | UrnSystem,
    master_seed: int,
    rep_lo: int,
    rep_hi: int,
    horizons: tuple[int, ...],
) -> dict[str, list[dict[str, np.ndarray]]]:
    """Simulate lanes rep_lo..rep_hi-1 and snapshot at each horizon.

    Returns {label: [snapshot dict per horizon]}; horizons must be
    strictly increasing.  Dispatches to the scalar fallback for
    configurations the vector path cannot run.
    """
    if rep_hi <= rep_lo:
        raise ParameterError(f"empty replication range [{rep_lo}, {rep_hi})")
    if not horizons or any(h2 <= h1 for h1, h2 in zip(horizons, horizons[1:])):
        raise ParameterError(f"horizons must be strictly increasing, got {horizons}")
    if horizons[0] < 1:
        raise ParameterError(f"horizons must be >= 1, got {horizons}")
    if worst_case_total(config, horizons[-1]) > (1 << 62):
        raise ParameterError(
            "worst-case ball count exceeds 2**62; shrink steps or bounds"
        )
    if not engine_supported(config):
        return _run_chunk_scalar(config, master_seed, rep_lo, rep_hi, horizons)
    return _run_chunk_vector(config, master_seed, rep_lo, rep_hi, horizons)


def _run_chunk_vector(config, master_seed, rep_lo, rep_hi, horizons):
    lanes = rep_hi - rep_lo
    reps = np.arange(rep_lo, rep_hi, dtype=np.uint64)
    rkeys = rng.rep_keys_vec(master_seed, reps)

    is_system = isinstance(config, UrnSystem)
    if is_system:
        system: UrnSystem = config
        specs = list(system.urns)
        stride = system.draw_stride
        f = system.factors
    else:
        cfg: UrnConfig = config
        stride = cfg.draw.bound
        f = None

    # Assemble the fused uniform matrix: one row per consumed stream
    # value per step.  Row counters are affine in t: c(t) = c0 + m*t.
    row_keys: list[np.ndarray] = []
    row_c0: list[int] = []
    row_m: list[int] = []

    def add_row(keys: np.ndarray, c0: int, m: int) -> int:
        row_keys.append(keys)
        row_c0.append(c0)
        row_m.append(m)
        return len(row_keys) - 1

    factor_draw_emitter = factor_reinf_emitter = None
    factor_draw_row = factor_reinf_row = None
    urn_entries = []
    if is_system:
        if f.draw is not None:
            factor_draw_emitter = _VecFactor(f.draw)
            factor_draw_row = add_row(_purpose_keys(rkeys, rng.FACTOR_DRAW), 0, 1)
        if f.reinforce is not None:
            factor_reinf_emitter = _VecFactor(f.reinforce)
            factor_reinf_row = add_row(_purpose_keys(rkeys, rng.FACTOR_REINFORCE), 0, 1)
        for spec in specs:
            ex_keys = _urn_keys(rkeys, spec.label, rng.EXTRACT)
            ex_rows = [add_row(ex_keys, j, stride) for j in range(stride)]
            urn_entries.append(
                (spec.label, spec.a, spec.b, spec.draw_base, spec.reinforce_base, ex_rows)
            )
    else:
        draw_emitter = _vec_draw(cfg.draw, lanes)
        reinf_emitter = _vec_reinf(cfg.reinforce)
        draw_row = (
            add_row(_urn_keys(rkeys, cfg.label, rng.DRAW), draw_emitter.row_offset, 1)
            if draw_emitter.needs_row else None
        )
        reinf_row = (
            add_row(_urn_keys(rkeys, cfg.label, rng.REINFORCE), 0, 1)
            if reinf_emitter.needs_row else None
        )
        ex_keys = _urn_keys(rkeys, cfg.label, rng.EXTRACT)
        ex_rows = [add_row(ex_keys, j, stride) for j in range(stride)]
        urn_entries.append((cfg.label, cfg.a, cfg.b, None, None, ex_rows))

    key_matrix = np.stack(row_keys) if row_keys else np.zeros((0, lanes), dtype=np.uint64)
    golden = rng.GOLDEN
    # c(t) = c0 + m t, so the additive stream offset (c(t) + 1) * GOLDEN
    # = off0 + t * slope with the constants below (mod 2**64).
    off0 = np.array([((c + 1) * golden) & rng.MASK64 for c in row_c0], dtype=np.uint64)
    slope = np.array([(m * golden) & rng.MASK64 for m in row_m], dtype=np.uint64)

    urn_lanes: list[_UrnLane] = []
    for label, a, b, _, _, _ in urn_entries:
        urn_lanes.append(
            _UrnLane(
                label=label, stride=stride,
                H=np.full(lanes, a, dtype=np.int64),
                S=np.full(lanes, a + b, dtype=np.int64),
                sum_r=np.zeros(lanes, dtype=np.int64),
                sum_rr=np.zeros(lanes, dtype=np.int64),
                sum_n=np.zeros(lanes, dtype=np.int64),
                msum=np.zeros(lanes, dtype=np.float64),
                mcomp=np.zeros(lanes, dtype=np.float64),
                etasum=np.zeros(lanes, dtype=np.float64),
                etacomp=np.zeros(lanes, dtype=np.float64),
            )
        )

    out: dict[str, list[dict[str, np.ndarray]]] = {
        lane.label: [] for lane in urn_lanes
    }
    next_h = 0
    total = horizons[-1]
    for t in range(total):
        t_u = np.uint64(t)
        states = key_matrix + (off0 + t_u * slope)[:, None]
        units = rng.units_from_states_vec(states)

        if is_system:
            f_draw = (
                factor_draw_emitter.emit(t, units[factor_draw_row])
                if factor_draw_emitter is not None else 0
            )
            f_reinf = (
                factor_reinf_emitter.emit(t, units[factor_reinf_row])
                if factor_reinf_emitter is not None else 0
            )

        for lane, entry in zip(urn_lanes, urn_entries):
            label, a, b, draw_base, reinf_base, ex_rows = entry
            if is_system:
                n_draw = draw_base + f_draw
                r = reinf_base + f_reinf
            else:
                n_draw = draw_emitter.emit(
                    t, units[draw_row] if draw_row is not None else None
                )
                r = reinf_emitter.emit(
                    t, units[reinf_row] if reinf_row is not None else None
                )

            # Without-replacement Bernoulli chain across all lanes.
            h_rem = lane.H.copy()
            s_rem = lane.S.copy()
            x = np.zeros(lanes, dtype=np.int64)
            scalar_n = isinstance(n_draw, int)
            for j in range(stride):
                if scalar_n:
                    if j >= n_draw:
                        break
                    active = None
                else:
                    active = j < n_draw
                    if not active.any():
                        break
                take = units[ex_rows[j]] < (h_rem / s_rem)
                if active is not None:
                    take &= active
                x += take
                h_rem -= take
                if active is None:
                    s_rem -= 1
                else:
                    s_rem -= active

            lane.H += r * x
            lane.S += r * n_draw
            lane.sum_r += r
            lane.sum_rr += r * r
            lane.sum_n += n_draw
            _kahan_add(lane.msum, lane.mcomp, x / n_draw)
            _kahan_add(lane.etasum, lane.etacomp, _recip(n_draw, lanes))

        if t + 1 == horizons[next_h]:
            for lane in urn_lanes:
                out[lane.label].append(_snapshot(lane, t + 1))
            next_h += 1
            if next_h == len(horizons):
                break
    return out


def _recip(n_draw, lanes: int):
    if isinstance(n_draw, int):
        return np.full(lanes, 1.0 / n_draw)
    return 1.0 / n_draw


def _purpose_keys(rkeys: np.ndarray, purpose: str) -> np.ndarray:
    return rng.derive_keys_each(rkeys, purpose)


def _urn_keys(rkeys: np.ndarray, label: str, purpose: str) -> np.ndarray:
    return rng.derive_keys_each(rkeys, "urn", label, purpose)


def _run_chunk_scalar(config, master_seed, rep_lo, rep_hi, horizons):
    """Pure-Python mirror of the vector path, one lane at a time.

    Uses the policy objects and stream views directly, with the same
    Kahan accumulation order as the vector path, so the two paths
    produce bit-identical snapshots.
    """
    is_system = isinstance(config, UrnSystem)
    labels = config.labels if is_system else (config.label,)
    results: dict[str, list[dict[str, list[float]]]] = {
        lab: [dict((f, []) for f in SNAPSHOT_FIELDS) for _ in horizons] for lab in labels
    }
    for rep in range(rep_lo, rep_hi):
        if is_system:
            per_urn = _scalar_system_rep(config, master_seed, rep, horizons)
        else:
            per_urn = _scalar_single_rep(config, master_seed, rep, horizons)
        for lab in labels:
            for hi, snap in enumerate(per_urn[lab]):
                for fname in SNAPSHOT_FIELDS:
                    results[lab][hi][fname].append(snap[fname])
    return {
        lab: [
            {f: np.asarray(vals[f], dtype=np.float64) for f in SNAPSHOT_FIELDS}
            for vals in results[lab]
        ]
        for lab in labels
    }


class _ScalarAcc:
    __slots__ = ("sum_r", "sum_rr", "sum_n", "msum", "mcomp", "etasum", "etacomp")

    def __init__(self):
        self.sum_r = 0
        self.sum_rr = 0
        self.sum_n = 0
        self.msum = 0.0
        self.mcomp = 0.0
        self.etasum = 0.0
        self.etacomp = 0.0

    def kahan_m(self, x: float) -> None:
        y = x - self.mcomp
        t = self.msum + y
        self.mcomp = (t - self.msum) - y
        self.msum = t

    def kahan_eta(self, x: float) -> None:
        y = x - self.etacomp
        t = self.etasum + y
        self.etacomp = (t - self.etasum) - y
        self.etasum = t

    def absorb(self, n_draw: int, x: int, r: int) -> None:
        self.sum_r += r
        self.sum_rr += r * r
        self.sum_n += n_draw
        self.kahan_m(x / n_draw)
        self.kahan_eta(1.0 / n_draw)

    def snapshot(self, h_balls: int, s_balls: int, horizon: int) -> dict[str, float]:
        return {
            "z": h_balls / s_balls,
            "m_emp": self.msum / horizon,
            "s_over_n": s_balls / horizon,
            "reinf_mean": self.sum_r / horizon,
            "reinf_sqmean": self.sum_rr / horizon,
            "draw_mean": self.sum_n / horizon,
            "draw_recipmean": self.etasum / horizon,
        }


def _scalar_single_rep(cfg: UrnConfig, master_seed: int, rep: int, horizons):
    streams = rng.UrnStreams.create(master_seed, rep, cfg.label)
    state = UrnState.initial(cfg.a, cfg.b)
    acc = _ScalarAcc()
    n_history: list[int] = []
    snaps = []
    for t in range(horizons[-1]):
        state, rec = urn_step(state, cfg.draw, cfg.reinforce, streams, n_history)
        n_history.append(rec.N)
        acc.absorb(rec.N, rec.X, rec.R)
        if t + 1 in horizons:
            snaps.append(acc.snapshot(state.H, state.S, t + 1))
    return {cfg.label: snaps}


def _scalar_system_rep(system: UrnSystem, master_seed: int, rep: int, horizons):
    from .multi_urn import SystemState, system_step

    streams = rng.SystemStreams.create(master_seed, rep, system.labels)
    state = SystemState.initial(system)
    accs = {lab: _ScalarAcc() for lab in system.labels}
    snaps = {lab: [] for lab in system.labels}
    for t in range(horizons[-1]):
        state, records, _ = system_step(system, state, streams)
        for lab, ust in zip(system.labels, state.states):
            rec = records[lab]
            accs[lab].absorb(rec.N, rec.X, rec.R)
            if t + 1 in horizons:
                snaps[lab].append(accs[lab].snapshot(ust.H, ust.S, t + 1))
    return snaps


def sample_hypergeometric_batch(
    key: int, n_draw: int, total: int, marked: int, count: int
) -> np.ndarray:
    """``count`` independent exact hypergeometric draws from one stream.

    Sample ``j`` reads counters ``j * n_draw .. j * n_draw + n_draw - 1``,
    matching ``sample_hypergeometric`` on ``Stream(key).view(j * n_draw)``.
    """
    if not (1 <= n_draw <= total):
        raise ParameterError(f"draw size must satisfy 1 <= N <= {total}, got {n_draw}")
    if not (0 <= marked <= total):
        raise ParameterError(f"marked count must satisfy 0 <= H <= {total}, got {marked}")
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count!r}")
    base = np.arange(count, dtype=np.uint64) * np.uint64(n_draw)
    keys = np.full(count, key & rng.MASK64, dtype=np.uint64)
    h_rem = np.full(count, marked, dtype=np.int64)
    s_rem = np.full(count, total, dtype=np.int64)
    x = np.zeros(count, dtype=np.int64)
    for i in range(n_draw):
        u = rng.units_vec(keys, base + np.uint64(i))
        take = u < (h_rem / s_rem)
        x += take
        h_rem -= take
        s_rem -= 1
    return x
