"""Deterministic parallel replication and limit-theorem diagnostics.

A ReplicationPlan names a configuration, a replication count, an
evaluation horizon ``n``, a long proxy horizon ``n_proxy``, and a
master seed.  Replication ``r`` is a pure function of
(master_seed, r): the engine derives every stream from that pair, so
results are bit-identical whatever the chunking, worker count, or
execution order.  Chunk boundaries are fixed by the plan, not by the
scheduler, and chunk outputs are reassembled in index order.

The diagnostics standardize per-rep statistics with each rep's own
plug-in variance and compare them against the standard normal law:

    T_prop = sqrt(n) (Z_n - Z_proxy) / sqrt(V_n)
    T_gap  = sqrt(n) (M_n - Z_n)     / sqrt(U_n)
    T_mean = sqrt(n) (M_n - Z_proxy) / sqrt(W_n)

``Z_proxy``, the proportion at the far horizon, stands in for the
almost-sure limit; ``n_proxy >= 10 n`` keeps the resulting variance
distortion within the acceptance tolerances.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from . import engine, gof, rng
from .estimators import normal_cdf, normal_quantile, variance_terms
from .multi_urn import UrnSystem
from .urn_core import (
    ConstantReinforcement,
    DiscreteReinforcement,
    ParameterError,
    UniformReinforcement,
    UrnConfig,
)

DEFAULT_PROXY_FACTOR = 50
DEFAULT_CHUNK_SIZE = 4096


@dataclass(frozen=True)
class ReplicationPlan:
    """What to simulate, how many times, and under which seed."""

    config: UrnConfig | UrnSystem
    reps: int
    n: int
    n_proxy: int | None = None
    master_seed: int = 0
    chunk_size: int = DEFAULT_CHUNK_SIZE

    def __post_init__(self):
        if not isinstance(self.reps, int) or self.reps < 1:
            raise ParameterError(f"reps must be an integer >= 1, got {self.reps!r}")
        if not isinstance(self.n, int) or self.n < 1:
            raise ParameterError(f"n must be an integer >= 1, got {self.n!r}")
        if self.n_proxy is not None:
            if not isinstance(self.n_proxy, int) or self.n_proxy < 10 * self.n:
                raise ParameterError(
                    f"n_proxy must be an integer >= 10 n = {10 * self.n}, got {self.n_proxy!r}"
                )
        if not isinstance(self.chunk_size, int) or self.chunk_size < 1:
            raise ParameterError(f"chunk_size must be an integer >= 1, got {self.chunk_size!r}")
        if engine.worst_case_total(self.config, self.proxy_horizon) > (1 << 62):
            raise ParameterError(
                "worst-case ball count exceeds 2**62; shrink horizons or policy bounds"
            )

    @property
    def proxy_horizon(self) -> int:
        return self.n_proxy if self.n_proxy is not None else DEFAULT_PROXY_FACTOR * self.n

    @property
    def labels(self) -> tuple[str, ...]:
        if isinstance(self.config, UrnSystem):
            return self.config.labels
        return (self.config.label,)

    @property
    def is_system(self) -> bool:
        return isinstance(self.config, UrnSystem)


@dataclass(frozen=True)
class HorizonBlock:
    """Per-rep summaries of one urn at one horizon (aligned arrays)."""

    horizon: int
    z: np.ndarray
    m_emp: np.ndarray
    s_over_n: np.ndarray
    reinf_mean: np.ndarray
    reinf_sqmean: np.ndarray
    draw_mean: np.ndarray
    draw_recipmean: np.ndarray

    def take(self, m: int) -> "HorizonBlock":
        return HorizonBlock(
            horizon=self.horizon,
            **{f: getattr(self, f)[:m] for f in engine.SNAPSHOT_FIELDS},
        )

    def variances(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(V, W, U) plug-in arrays, one entry per rep."""
        return variance_terms(
            self.z, self.m_emp,
            self.reinf_mean, self.reinf_sqmean,
            self.draw_mean, self.draw_recipmean,
        )


@dataclass(frozen=True)
class UrnRecords:
    at_n: HorizonBlock
    at_proxy: HorizonBlock


@dataclass(frozen=True)
class RepRecords:
    """All per-rep summaries produced by one plan."""

    plan: ReplicationPlan
    urns: dict[str, UrnRecords]

    @property
    def single(self) -> UrnRecords:
        if len(self.urns) != 1:
            raise ParameterError(
                f"plan has {len(self.urns)} urns; name one of {tuple(self.urns)}"
            )
        return next(iter(self.urns.values()))

    def __len__(self) -> int:
        return len(self.single_or_first.at_n.z)

    @property
    def single_or_first(self) -> UrnRecords:
        return next(iter(self.urns.values()))

    def take(self, m: int) -> "RepRecords":
        if not (1 <= m <= len(self)):
            raise ParameterError(f"cannot take {m} of {len(self)} reps")
        return RepRecords(
            plan=replace(self.plan, reps=m),
            urns={
                lab: UrnRecords(at_n=u.at_n.take(m), at_proxy=u.at_proxy.take(m))
                for lab, u in self.urns.items()
            },
        )


def _chunk_bounds(reps: int, chunk_size: int) -> list[tuple[int, int]]:
    return [(lo, min(lo + chunk_size, reps)) for lo in range(0, reps, chunk_size)]


def _run_one_chunk(args):
    config, master_seed, lo, hi, horizons = args
    return engine.run_chunk(config, master_seed, lo, hi, horizons)


def replicate(plan: ReplicationPlan, workers: int | None = None) -> RepRecords:
    """Run every replication of the plan; output is worker-independent.

    ``workers`` > 1 distributes fixed chunks over processes; the
    per-rep values are identical in every case because each rep's
    streams depend only on (master_seed, rep index).
    """
    horizons = (plan.n, plan.proxy_horizon)
    bounds = _chunk_bounds(plan.reps, plan.chunk_size)
    tasks = [(plan.config, plan.master_seed, lo, hi, horizons) for lo, hi in bounds]
    nworkers = 1 if workers is None else int(workers)
    if nworkers < 1:
        raise ParameterError(f"workers must be >= 1, got {workers!r}")
    if nworkers == 1 or len(tasks) == 1 or not engine.engine_supported(plan.config):
        chunk_results = [_run_one_chunk(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=nworkers) as pool:
            chunk_results = list(pool.map(_run_one_chunk, tasks))
    urns = {}
    for label in plan.labels:
        blocks = []
        for hidx, horizon in enumerate(horizons):
            fields = {
                f: np.concatenate([cr[label][hidx][f] for cr in chunk_results])
                for f in engine.SNAPSHOT_FIELDS
            }
            blocks.append(HorizonBlock(horizon=horizon, **fields))
        urns[label] = UrnRecords(at_n=blocks[0], at_proxy=blocks[1])
    return RepRecords(plan=plan, urns=urns)


@dataclass(frozen=True)
class CltDiagnostics:
    """A standardized statistic's sample and its normal-law distances."""

    kind: str
    samples: np.ndarray
    ks_distance: float
    coverage: float | None
    coverage_level: float | None
    excluded: int
    reps: int
    aux: dict[str, float]


def _proxy_aux(records: RepRecords, label: str) -> dict[str, float]:
    blk = records.urns[label].at_proxy
    target = blk.draw_mean * blk.reinf_mean
    abs_err = np.abs(blk.s_over_n - target)
    return {
        "s_over_n_max_abs_err": float(np.max(abs_err)),
        "s_over_n_max_rel_err": float(np.max(abs_err / target)),
        "proxy_max_ecdf_jump": gof.max_ecdf_jump(blk.z),
        "proxy_boundary_fraction": gof.boundary_fraction(blk.z),
    }


def _ks_vs_normal(samples: np.ndarray) -> float:
    return gof.ks_distance(samples, normal_cdf)


def _single_label(records: RepRecords) -> str:
    labels = tuple(records.urns)
    if len(labels) != 1:
        raise ParameterError(
            f"this diagnostic needs a single-urn plan, got urns {labels}"
        )
    return labels[0]


def clt_check_zn(
    plan: ReplicationPlan,
    records: RepRecords | None = None,
    workers: int | None = None,
    coverage_level: float = 0.95,
) -> CltDiagnostics:
    """Normal-law check for the scaled proportion error at horizon n."""
    if records is None:
        records = replicate(plan, workers)
    label = _single_label(records)
    u = records.urns[label]
    v, _, _ = u.at_n.variances()
    n = plan.n
    gap = u.at_n.z - u.at_proxy.z
    included = v > 0.0
    t_prop = math.sqrt(n) * gap[included] / np.sqrt(v[included])
    zq = normal_quantile(0.5 + coverage_level / 2.0)
    hits = np.abs(gap) <= zq * np.sqrt(v / n)
    return CltDiagnostics(
        kind="proportion",
        samples=t_prop,
        ks_distance=_ks_vs_normal(t_prop),
        coverage=float(np.count_nonzero(hits)) / plan.reps,
        coverage_level=coverage_level,
        excluded=int(plan.reps - np.count_nonzero(included)),
        reps=plan.reps,
        aux=_proxy_aux(records, label),
    )


@dataclass(frozen=True)
class MeanCltDiagnostics:
    """Joint diagnostics for the empirical-mean limits."""

    gap: CltDiagnostics        # sqrt(n)(M_n - Z_n)/sqrt(U_n)
    proportion: CltDiagnostics # sqrt(n)(Z_n - Z_proxy)/sqrt(V_n)
    mean: CltDiagnostics       # sqrt(n)(M_n - Z_proxy)/sqrt(W_n)
    corr_gap_proportion: float | None
    median_abs_gap: float      # median of sqrt(n)|M_n - Z_n|, all reps


def clt_check_mn(
    plan: ReplicationPlan,
    records: RepRecords | None = None,
    workers: int | None = None,
    coverage_level: float = 0.95,
) -> MeanCltDiagnostics:
    """Normal-law checks for the empirical mean at horizon n.

    The gap statistic and the proportion statistic are asymptotically
    independent components of a product kernel; their empirical
    correlation is reported as that diagnostic.  Reps with a zero
    variance estimate are excluded from the affected statistic and
    counted, never silently dropped.
    """
    if records is None:
        records = replicate(plan, workers)
    label = _single_label(records)
    u = records.urns[label]
    v, w, uu = u.at_n.variances()
    n = plan.n
    rootn = math.sqrt(n)
    gap_mz = u.at_n.m_emp - u.at_n.z
    gap_zp = u.at_n.z - u.at_proxy.z
    gap_mp = u.at_n.m_emp - u.at_proxy.z
    zq = normal_quantile(0.5 + coverage_level / 2.0)

    inc_u = uu > 0.0
    inc_v = v > 0.0
    inc_w = w > 0.0
    t_gap = rootn * gap_mz[inc_u] / np.sqrt(uu[inc_u])
    t_prop = rootn * gap_zp[inc_v] / np.sqrt(v[inc_v])
    t_mean = rootn * gap_mp[inc_w] / np.sqrt(w[inc_w])

    gap_diag = CltDiagnostics(
        kind="gap",
        samples=t_gap,
        ks_distance=_ks_vs_normal(t_gap) if len(t_gap) else math.nan,
        coverage=None,
        coverage_level=None,
        excluded=int(plan.reps - np.count_nonzero(inc_u)),
        reps=plan.reps,
        aux={},
    )
    prop_hits = np.abs(gap_zp) <= zq * np.sqrt(v / n)
    prop_diag = CltDiagnostics(
        kind="proportion",
        samples=t_prop,
        ks_distance=_ks_vs_normal(t_prop) if len(t_prop) else math.nan,
        coverage=float(np.count_nonzero(prop_hits)) / plan.reps,
        coverage_level=coverage_level,
        excluded=int(plan.reps - np.count_nonzero(inc_v)),
        reps=plan.reps,
        aux={},
    )
    mean_hits = np.abs(gap_mp) <= zq * np.sqrt(w / n)
    mean_diag = CltDiagnostics(
        kind="mean",
        samples=t_mean,
        ks_distance=_ks_vs_normal(t_mean) if len(t_mean) else math.nan,
        coverage=float(np.count_nonzero(mean_hits)) / plan.reps,
        coverage_level=coverage_level,
        excluded=int(plan.reps - np.count_nonzero(inc_w)),
        reps=plan.reps,
        aux=_proxy_aux(records, label),
    )
    both = inc_u & inc_v
    if np.count_nonzero(both) >= 2:
        tg = rootn * gap_mz[both] / np.sqrt(uu[both])
        tp = rootn * gap_zp[both] / np.sqrt(v[both])
        corr = float(np.corrcoef(tg, tp)[0, 1])
    else:
        corr = None
    return MeanCltDiagnostics(
        gap=gap_diag,
        proportion=prop_diag,
        mean=mean_diag,
        corr_gap_proportion=corr,
        median_abs_gap=float(np.median(rootn * np.abs(gap_mz))),
    )


def _constant_reinforcement_value(policy) -> int | None:
    if isinstance(policy, ConstantReinforcement):
        return policy.value
    if isinstance(policy, UniformReinforcement) and policy.low == policy.high:
        return policy.low
    if isinstance(policy, DiscreteReinforcement) and len(policy.values) == 1:
        return policy.values[0]
    return None


@dataclass(frozen=True)
class LimitLawReport:
    """Diagnostics of the limit proportion's law at the proxy horizon."""

    horizon: int
    reps: int
    s_over_n_max_abs_err: float
    s_over_n_max_rel_err: float
    max_ecdf_jump: float
    boundary_fraction: float
    beta_params: tuple[float, float] | None
    beta_ks: float | None


def limit_law_suite(
    plan: ReplicationPlan,
    records: RepRecords | None = None,
    workers: int | None = None,
) -> LimitLawReport:
    """Growth-rate and no-atom diagnostics; Beta reference when exact.

    For single-ball draws with constant reinforcement ``k`` the limit
    proportion has the Beta(a/k, b/k) law, so the proxy sample is also
    tested against that reference CDF.
    """
    if records is None:
        records = replicate(plan, workers)
    label = _single_label(records)
    aux = _proxy_aux(records, label)
    beta_params = None
    beta_ks = None
    cfg = plan.config
    if isinstance(cfg, UrnConfig):
        const_r = _constant_reinforcement_value(cfg.reinforce)
        if cfg.draw.bound == 1 and const_r is not None:
            beta_params = (cfg.a / const_r, cfg.b / const_r)
            zp = records.urns[label].at_proxy.z
            beta_ks = gof.ks_distance(
                zp, lambda x: gof.beta_cdf(x, beta_params[0], beta_params[1])
            )
    return LimitLawReport(
        horizon=plan.proxy_horizon,
        reps=plan.reps,
        s_over_n_max_abs_err=aux["s_over_n_max_abs_err"],
        s_over_n_max_rel_err=aux["s_over_n_max_rel_err"],
        max_ecdf_jump=aux["proxy_max_ecdf_jump"],
        boundary_fraction=aux["proxy_boundary_fraction"],
        beta_params=beta_params,
        beta_ks=beta_ks,
    )


@dataclass(frozen=True)
class CoverageResult:
    basis: str
    hits: int
    reps: int
    coverage: float
    std_error: float


@dataclass(frozen=True)
class CoverageReport:
    level: float
    n: int
    proxy_horizon: int
    from_zn: CoverageResult
    from_mn: CoverageResult


def _coverage_result(basis: str, hits: np.ndarray, reps: int) -> CoverageResult:
    nhit = int(np.count_nonzero(hits))
    cov = nhit / reps
    return CoverageResult(
        basis=basis,
        hits=nhit,
        reps=reps,
        coverage=cov,
        std_error=math.sqrt(cov * (1.0 - cov) / reps),
    )


def coverage_experiment(
    plan: ReplicationPlan,
    level: float,
    records: RepRecords | None = None,
    workers: int | None = None,
) -> CoverageReport:
    """Empirical coverage of both intervals against the proxy truth.

    Raw (unclipped) intervals are scored; a zero-width interval counts
    as a miss unless it equals the truth exactly.
    """
    if not (0.0 < level < 1.0):
        raise ParameterError(f"level must lie in (0, 1), got {level!r}")
    if records is None:
        records = replicate(plan, workers)
    label = _single_label(records)
    u = records.urns[label]
    v, w, _ = u.at_n.variances()
    n = plan.n
    truth = u.at_proxy.z
    zq = normal_quantile(1.0 - (1.0 - level) / 2.0)
    hit_z = np.abs(u.at_n.z - truth) <= zq * np.sqrt(v / n)
    hit_m = np.abs(u.at_n.m_emp - truth) <= zq * np.sqrt(w / n)
    return CoverageReport(
        level=level,
        n=n,
        proxy_horizon=plan.proxy_horizon,
        from_zn=_coverage_result("from_Zn", hit_z, plan.reps),
        from_mn=_coverage_result("from_Mn", hit_m, plan.reps),
    )


def linear_combination_coverage(
    plan: ReplicationPlan,
    coeffs: dict[str, float],
    basis: str,
    level: float,
    records: RepRecords | None = None,
    workers: int | None = None,
) -> CoverageResult:
    """Coverage of the weighted-combination interval across urns.

    The truth is the same weighted combination of proxy proportions;
    weights are applied in the map's iteration order.
    """
    if basis not in ("Z", "M"):
        raise ParameterError(f"basis must be 'Z' or 'M', got {basis!r}")
    if not coeffs:
        raise ParameterError("coefficient map must name at least one urn")
    if not (0.0 < level < 1.0):
        raise ParameterError(f"level must lie in (0, 1), got {level!r}")
    if records is None:
        records = replicate(plan, workers)
    for lab in coeffs:
        if lab not in records.urns:
            raise ParameterError(f"no urn labeled {lab!r}; labels are {tuple(records.urns)}")
    reps = plan.reps
    n = plan.n
    center = np.zeros(reps)
    truth = np.zeros(reps)
    variance = np.zeros(reps)
    for lab, c in coeffs.items():
        u = records.urns[lab]
        v, w, _ = u.at_n.variances()
        if basis == "Z":
            center = center + c * u.at_n.z
            variance = variance + (c * c) * v
        else:
            center = center + c * u.at_n.m_emp
            variance = variance + (c * c) * w
        truth = truth + c * u.at_proxy.z
    zq = normal_quantile(1.0 - (1.0 - level) / 2.0)
    hits = np.abs(center - truth) <= zq * np.sqrt(variance / n)
    tag = "lincomb_Z" if basis == "Z" else "lincomb_M"
    return _coverage_result(tag, hits, reps)


@dataclass(frozen=True)
class MTestFrequency:
    """Aggregate outcome of the mean-reinforcement test over reps."""

    target: str
    reference: tuple[str, ...]
    level: float
    rejections: int
    applicable: int
    reps: int

    @property
    def frequency(self) -> float:
        return self.rejections / self.reps


def mtest_rejection(
    plan: ReplicationPlan,
    target: str,
    reference: tuple[str, ...] | list[str],
    level: float,
    records: RepRecords | None = None,
    workers: int | None = None,
) -> MTestFrequency:
    """Rejection frequency of the mean-reinforcement test over reps."""
    refs = tuple(reference)
    if not refs:
        raise ParameterError("reference set must be nonempty")
    if target in refs:
        raise ParameterError(f"target {target!r} must not belong to the reference set")
    if not (0.0 < level < 1.0):
        raise ParameterError(f"level must lie in (0, 1), got {level!r}")
    if records is None:
        records = replicate(plan, workers)
    for lab in (target, *refs):
        if lab not in records.urns:
            raise ParameterError(f"no urn labeled {lab!r}; labels are {tuple(records.urns)}")
    tgt = records.urns[target].at_n
    _, _, u_n = tgt.variances()
    ref_mean = np.zeros(plan.reps)
    for lab in refs:
        ref_mean = ref_mean + records.urns[lab].at_n.reinf_mean
    ref_mean = ref_mean / len(refs)
    applicable = u_n > 0.0
    rootn = math.sqrt(plan.n)
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = (
            np.sqrt(ref_mean) / np.sqrt(tgt.reinf_mean)
            * rootn * np.abs(tgt.m_emp - tgt.z) / np.sqrt(u_n)
        )
    threshold = normal_quantile(1.0 - level / 2.0)
    reject = applicable & (stat > threshold)
    return MTestFrequency(
        target=target,
        reference=refs,
        level=level,
        rejections=int(np.count_nonzero(reject)),
        applicable=int(np.count_nonzero(applicable)),
        reps=plan.reps,
    )


def walk_absorption_probability(start: int, high: int) -> float:
    """Chance the absorbed +/-1 walk from ``start`` ends at 1."""
    if not (isinstance(start, int) and isinstance(high, int)):
        raise ParameterError("start and high must be integers")
    if high < 3 or not (2 <= start <= high - 1):
        raise ParameterError(
            f"need 2 <= start <= high - 1 with high >= 3, got start={start}, high={high}"
        )
    return (high - start) / (high - 1)


@dataclass(frozen=True)
class HittingEstimate:
    start: int
    high: int
    reps: int
    absorbed_low: int
    absorbed_high: int
    cap_hits: int
    estimate: float


def hitting_probability_check(
    start: int,
    high: int,
    reps: int,
    master_seed: int = 0,
    step_cap: int = 10_000_000,
) -> HittingEstimate:
    """Empirical frequency of the walk absorbing at the lower barrier.

    Runs ``reps`` independent walks from the draw-size policy's law,
    each on its own replication stream, and counts terminal states.
    Walks still unabsorbed after ``step_cap`` steps are reported in
    ``cap_hits`` (absorption is almost sure, so the cap is a guard,
    not a tuning knob).
    """
    walk_absorption_probability(start, high)  # validates the barriers
    if not isinstance(reps, int) or reps < 1:
        raise ParameterError(f"reps must be an integer >= 1, got {reps!r}")
    reps_arr = np.arange(reps, dtype=np.uint64)
    rkeys = rng.rep_keys_vec(master_seed, reps_arr)
    keys = rng.derive_keys_each(rkeys, "walk")
    w = np.full(reps, start, dtype=np.int64)
    t = 1
    while t <= step_cap:
        inside = (w > 1) & (w < high)
        remaining = int(np.count_nonzero(inside))
        if remaining == 0:
            break
        u = rng.units_vec(keys, t - 1)
        delta = np.where(u < 0.5, 1, -1)
        np.add(w, delta, out=w, where=inside)
        t += 1
    low = int(np.count_nonzero(w == 1))
    hi = int(np.count_nonzero(w == high))
    cap = reps - low - hi
    return HittingEstimate(
        start=start, high=high, reps=reps,
        absorbed_low=low, absorbed_high=hi, cap_hits=cap,
        estimate=low / reps,
    )
