"""Exact two-color urn dynamics with random draw sizes and reinforcement.

The process: an urn starts with ``a`` balls of color A and ``b`` of
color B (both at least 1).  At step ``t`` (counting from 0) a draw
size ``N_t`` is emitted by the draw-size policy, ``N_t`` balls are
extracted without replacement, the number ``X_t`` of A-balls among
them is recorded, all extracted balls go back, and the reinforcement
policy emits ``R_t >= 1``; then ``R_t * X_t`` A-balls and
``R_t * (N_t - X_t)`` B-balls are added.  All counts are exact
integers throughout; no floating point enters the state update.

Conditional on the state before the step, ``X_t`` is hypergeometric
with population ``S`` (total balls), ``H`` marked (A-balls), and
sample size ``N_t``.  Sampling is an explicit without-replacement
Bernoulli chain, one uniform per potential ball, so a trajectory is a
pure function of its streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .rng import DEFAULT_LABEL, Stream, UrnStreams

# Ball counts are carried in int64 arrays by the batch engine; keep a
# margin below 2**63 so intermediate products cannot wrap there.
CAPACITY_LIMIT = 1 << 62


class ParameterError(ValueError):
    """A single argument or field is out of its documented range."""


class ConfigError(ValueError):
    """One or more configuration problems, collected before raising."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ModelViolationError(RuntimeError):
    """A policy emitted a value the urn dynamics cannot accept."""


@dataclass(frozen=True)
class IntegerDistribution:
    """Finite distribution on integers, sampled by inverse CDF."""

    values: tuple[int, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        problems = []
        if len(self.values) == 0:
            problems.append("distribution needs at least one value")
        if len(self.values) != len(self.probs):
            problems.append(
                f"{len(self.values)} values but {len(self.probs)} probabilities"
            )
        if any(not isinstance(v, int) or isinstance(v, bool) for v in self.values):
            problems.append("support values must be integers")
        elif len(set(self.values)) != len(self.values):
            problems.append("support values must be distinct")
        if any(p < 0.0 for p in self.probs):
            problems.append("probabilities must be nonnegative")
        elif self.probs and abs(math.fsum(self.probs) - 1.0) > 1e-9:
            problems.append(f"probabilities sum to {math.fsum(self.probs)!r}, not 1")
        if problems:
            raise ParameterError("; ".join(problems))

    @property
    def low(self) -> int:
        return min(self.values)

    @property
    def high(self) -> int:
        return max(self.values)

    def cdf_steps(self) -> tuple[float, ...]:
        out, acc = [], 0.0
        for p in self.probs:
            acc += p
            out.append(acc)
        out[-1] = 1.0
        return tuple(out)

    def sample(self, u: float) -> int:
        for v, c in zip(self.values, self.cdf_steps()):
            if u < c:
                return v
        return self.values[-1]

    def mean(self) -> float:
        return math.fsum(v * p for v, p in zip(self.values, self.probs))


# Draw-size policies.  Each declares a hard bound (the extraction
# stream reserves that many counters per step) and whether its draws
# are i.i.d., which downstream variance estimates rely on.


@dataclass(frozen=True)
class ConstantOne:
    """Classic single-ball draws."""

    @property
    def bound(self) -> int:
        return 1

    @property
    def iid_draws(self) -> bool:
        return True

    def emit(self, t: int, s_prev: int, n_history: Sequence[int], stream: Stream) -> int:
        return 1


@dataclass(frozen=True)
class DeterministicSchedule:
    """Fixed schedule of draw sizes; the last entry repeats forever."""

    values: tuple[int, ...]

    def __post_init__(self):
        if not self.values:
            raise ParameterError("schedule must contain at least one draw size")
        bad = [v for v in self.values if not isinstance(v, int) or v < 1]
        if bad:
            raise ParameterError(f"draw sizes must be integers >= 1, got {bad}")

    @property
    def bound(self) -> int:
        return max(self.values)

    @property
    def iid_draws(self) -> bool:
        return len(set(self.values)) == 1

    def emit(self, t: int, s_prev: int, n_history: Sequence[int], stream: Stream) -> int:
        return self.values[t] if t < len(self.values) else self.values[-1]


@dataclass(frozen=True)
class IidUniform:
    """Draw sizes uniform on {1, ..., high}, independent across steps."""

    high: int

    def __post_init__(self):
        if not isinstance(self.high, int) or self.high < 1:
            raise ParameterError(f"uniform draw bound must be an integer >= 1, got {self.high!r}")

    @property
    def bound(self) -> int:
        return self.high

    @property
    def iid_draws(self) -> bool:
        return True

    def emit(self, t: int, s_prev: int, n_history: Sequence[int], stream: Stream) -> int:
        u = stream.unit_at(t)
        # min() guards the u == 1 - ulp edge so emission stays <= high.
        return 1 + min(int(u * self.high), self.high - 1)


@dataclass(frozen=True)
class DiscreteDraw:
    """Draw sizes i.i.d. from a finite integer distribution."""

    values: tuple[int, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        dist = IntegerDistribution(self.values, self.probs)
        if dist.low < 1:
            raise ParameterError(f"draw-size support must be >= 1, got min {dist.low}")
        object.__setattr__(self, "_dist", dist)

    @property
    def bound(self) -> int:
        return max(self.values)

    @property
    def iid_draws(self) -> bool:
        return True

    def emit(self, t: int, s_prev: int, n_history: Sequence[int], stream: Stream) -> int:
        return self._dist.sample(stream.unit_at(t))


@dataclass(frozen=True)
class AbsorbingRandomWalk:
    """Draw sizes follow a lazy +/-1 walk absorbed at 1 and at ``high``.

    The walk starts at ``start``; while strictly inside (1, high) each
    step moves up or down by 1 with probability 1/2 each, using one
    uniform from the draw stream at counter ``t - 1`` (the step-0 draw
    is the start value and consumes nothing).  Once the walk hits a
    boundary it stays there.
    """

    start: int
    high: int

    def __post_init__(self):
        problems = []
        if not isinstance(self.high, int) or self.high < 2:
            problems.append(f"walk ceiling must be an integer >= 2, got {self.high!r}")
        if not isinstance(self.start, int) or not (1 <= self.start <= (self.high if isinstance(self.high, int) else self.start)):
            problems.append(f"walk start must lie in [1, high], got {self.start!r}")
        if problems:
            raise ParameterError("; ".join(problems))

    @property
    def bound(self) -> int:
        return self.high

    @property
    def iid_draws(self) -> bool:
        return False

    def emit(self, t: int, s_prev: int, n_history: Sequence[int], stream: Stream) -> int:
        if t == 0:
            return self.start
        if len(n_history) == t:
            prev = n_history[t - 1]
        else:
            # Standalone replay: rebuild the walk from its own stream.
            prev = self.start
            for j in range(1, t):
                prev = self._advance(prev, stream.unit_at(j - 1))
        return self._advance(prev, stream.unit_at(t - 1))

    def _advance(self, prev: int, u: float) -> int:
        if prev <= 1 or prev >= self.high:
            return prev
        return prev + 1 if u < 0.5 else prev - 1


@dataclass(frozen=True)
class CustomRule:
    """User-supplied draw-size rule with a declared hard bound.

    The rule is called as ``rule(t, s_prev, n_history)`` and must
    return an integer in [1, bound]; emissions outside that range are
    a contract violation and raise.  The rule sees no randomness, so
    custom schedules stay reproducible.
    """

    rule: Callable[[int, int, Sequence[int]], int]
    bound: int

    def __post_init__(self):
        if not isinstance(self.bound, int) or self.bound < 1:
            raise ParameterError(f"declared bound must be an integer >= 1, got {self.bound!r}")

    @property
    def iid_draws(self) -> bool:
        return False

    def emit(self, t: int, s_prev: int, n_history: Sequence[int], stream: Stream) -> int:
        n = self.rule(t, s_prev, n_history)
        if not isinstance(n, int) or isinstance(n, bool) or not (1 <= n <= self.bound):
            raise ModelViolationError(
                f"custom rule emitted {n!r} at step {t}, outside [1, {self.bound}]"
            )
        return n


DrawSizePolicy = (
    ConstantOne | DeterministicSchedule | IidUniform | DiscreteDraw
    | AbsorbingRandomWalk | CustomRule
)


# Reinforcement policies.  Every emission must be an integer >= 1 so
# the urn grows and proportions stay well defined.


@dataclass(frozen=True)
class ConstantReinforcement:
    value: int

    def __post_init__(self):
        if not isinstance(self.value, int) or self.value < 1:
            raise ParameterError(f"reinforcement must be an integer >= 1, got {self.value!r}")

    @property
    def bound(self) -> int:
        return self.value

    def emit(self, t: int, stream: Stream) -> int:
        return self.value

    def mean(self) -> float:
        return float(self.value)


@dataclass(frozen=True)
class UniformReinforcement:
    """Reinforcement uniform on the integer range {low, ..., high}."""

    low: int
    high: int

    def __post_init__(self):
        problems = []
        if not isinstance(self.low, int) or self.low < 1:
            problems.append(f"low must be an integer >= 1, got {self.low!r}")
        if not isinstance(self.high, int) or (isinstance(self.low, int) and self.high < self.low):
            problems.append(f"high must be an integer >= low, got {self.high!r}")
        if problems:
            raise ParameterError("; ".join(problems))

    @property
    def bound(self) -> int:
        return self.high

    def emit(self, t: int, stream: Stream) -> int:
        u = stream.unit_at(t)
        span = self.high - self.low + 1
        return self.low + min(int(u * span), span - 1)

    def mean(self) -> float:
        return (self.low + self.high) / 2.0


@dataclass(frozen=True)
class DiscreteReinforcement:
    """Reinforcement drawn from a finite integer distribution."""

    values: tuple[int, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        dist = IntegerDistribution(self.values, self.probs)
        if dist.low < 1:
            raise ParameterError(f"reinforcement support must be >= 1, got min {dist.low}")
        object.__setattr__(self, "_dist", dist)

    @property
    def bound(self) -> int:
        return max(self.values)

    def emit(self, t: int, stream: Stream) -> int:
        return self._dist.sample(stream.unit_at(t))

    def mean(self) -> float:
        return self._dist.mean()


ReinforcementPolicy = ConstantReinforcement | UniformReinforcement | DiscreteReinforcement


@dataclass(frozen=True)
class UrnState:
    """Exact composition after ``n`` completed steps."""

    a: int
    b: int
    n: int
    H: int
    S: int

    @classmethod
    def initial(cls, a: int, b: int) -> "UrnState":
        problems = []
        if not isinstance(a, int) or a < 1:
            problems.append(f"initial A-count must be an integer >= 1, got {a!r}")
        if not isinstance(b, int) or b < 1:
            problems.append(f"initial B-count must be an integer >= 1, got {b!r}")
        if problems:
            raise ParameterError("; ".join(problems))
        return cls(a=a, b=b, n=0, H=a, S=a + b)

    @property
    def z(self) -> float:
        return self.H / self.S


@dataclass(frozen=True)
class StepRecord:
    """Everything observable about one completed step."""

    t: int
    N: int
    X: int
    R: int
    H_after: int
    S_after: int

    @property
    def z_after(self) -> float:
        return self.H_after / self.S_after

    @property
    def x_fraction(self) -> float:
        return self.X / self.N


def sample_hypergeometric(stream: Stream, n_draw: int, total: int, marked: int) -> int:
    """Exact count of marked balls in a without-replacement sample.

    Sequentially decides each of the ``n_draw`` extractions with one
    uniform: ball ``i`` is marked with probability (marked remaining) /
    (balls remaining).  Consumes exactly ``n_draw`` uniforms from the
    stream cursor.
    """
    if not (1 <= n_draw <= total):
        raise ParameterError(f"draw size must satisfy 1 <= N <= {total}, got {n_draw}")
    if not (0 <= marked <= total):
        raise ParameterError(f"marked count must satisfy 0 <= H <= {total}, got {marked}")
    h_rem, s_rem, hits = marked, total, 0
    for _ in range(n_draw):
        if stream.next_unit() < h_rem / s_rem:
            hits += 1
            h_rem -= 1
        s_rem -= 1
    return hits


def step(
    state: UrnState,
    draw_policy: DrawSizePolicy,
    reinf_policy: ReinforcementPolicy,
    streams: UrnStreams,
    n_history: Sequence[int] = (),
) -> tuple[UrnState, StepRecord]:
    """Advance the urn by one step, reading streams positionally.

    ``n_history`` is the list of prior draw sizes for history-dependent
    policies; stateless policies ignore it, and history-dependent ones
    can replay their own stream when it is not supplied.
    """
    t = state.n
    k = draw_policy.bound
    if k > state.a + state.b:
        raise ParameterError(
            f"draw-size bound {k} exceeds initial ball count {state.a + state.b}; "
            f"the bound must satisfy k <= a + b"
        )
    n_draw = draw_policy.emit(t, state.S, n_history, streams.draw)
    if not (1 <= n_draw <= state.S):
        raise ModelViolationError(
            f"draw size {n_draw} at step {t} is outside [1, {state.S}]"
        )
    hits = sample_hypergeometric(streams.extract.view(t * k), n_draw, state.S, state.H)
    r = reinf_policy.emit(t, streams.reinforce)
    if not isinstance(r, int) or isinstance(r, bool) or r < 1:
        raise ModelViolationError(f"reinforcement {r!r} at step {t} is not an integer >= 1")
    h_after = state.H + r * hits
    s_after = state.S + r * n_draw
    if s_after > CAPACITY_LIMIT:
        raise OverflowError(f"ball count {s_after} exceeds the supported capacity 2**62")
    new_state = UrnState(a=state.a, b=state.b, n=t + 1, H=h_after, S=s_after)
    record = StepRecord(t=t, N=n_draw, X=hits, R=r, H_after=h_after, S_after=s_after)
    return new_state, record


def increment_identity_check(record: StepRecord, h_before: int, s_before: int) -> bool:
    """Exact integer form of the one-step proportion increment.

    The proportion update Z_t - Z_{t-1} = R (X - N Z_{t-1}) / S_t is
    equivalent, clearing denominators, to

        H_t * S_{t-1} - H_{t-1} * S_t == R * (X * S_{t-1} - N * H_{t-1})

    which holds exactly in integer arithmetic for every valid step.
    """
    lhs = record.H_after * s_before - h_before * record.S_after
    rhs = record.R * (record.X * s_before - record.N * h_before)
    return lhs == rhs


@dataclass(frozen=True)
class UrnConfig:
    """One urn: initial counts plus the two policies."""

    a: int
    b: int
    draw: DrawSizePolicy
    reinforce: ReinforcementPolicy
    label: str = DEFAULT_LABEL

    def __post_init__(self):
        problems = []
        if not isinstance(self.a, int) or self.a < 1:
            problems.append(f"a must be an integer >= 1, got {self.a!r}")
        if not isinstance(self.b, int) or self.b < 1:
            problems.append(f"b must be an integer >= 1, got {self.b!r}")
        if not self.label:
            problems.append("label must be a nonempty string")
        if not problems and self.draw.bound > self.a + self.b:
            problems.append(
                f"draw-size bound {self.draw.bound} exceeds a + b = {self.a + self.b}; "
                f"draws are without replacement so k <= a + b is required"
            )
        if problems:
            raise ConfigError(problems)


@dataclass(frozen=True)
class Trajectory:
    """Columnar record of one simulated path.

    Arrays are aligned by step index: entry ``t`` describes step ``t``.
    ``Z[t]`` is the A-proportion after step ``t`` and ``M[t]`` the
    running mean of ``X/N`` over steps 0..t.
    """

    config: UrnConfig
    seed: int | None
    N: np.ndarray
    X: np.ndarray
    R: np.ndarray
    H: np.ndarray
    S: np.ndarray
    Z: np.ndarray
    M: np.ndarray

    def __len__(self) -> int:
        return len(self.N)

    @property
    def steps(self) -> int:
        return len(self.N)

    @property
    def z0(self) -> float:
        return self.config.a / (self.config.a + self.config.b)

    def record(self, t: int) -> StepRecord:
        return StepRecord(
            t=t,
            N=int(self.N[t]),
            X=int(self.X[t]),
            R=int(self.R[t]),
            H_after=int(self.H[t]),
            S_after=int(self.S[t]),
        )

    def state_before(self, t: int) -> tuple[int, int]:
        """(H, S) entering step ``t``."""
        if t == 0:
            return self.config.a, self.config.a + self.config.b
        return int(self.H[t - 1]), int(self.S[t - 1])


def run_trajectory(
    config: UrnConfig,
    steps: int,
    seed_or_streams: int | UrnStreams,
    rep: int = 0,
) -> Trajectory:
    """Simulate ``steps`` steps of one urn, exactly and reproducibly.

    Pass a master seed (with an optional replication index) for the
    standard stream wiring, or prebuilt streams for custom wiring.
    """
    if not isinstance(steps, int) or steps < 1:
        raise ParameterError(f"steps must be an integer >= 1, got {steps!r}")
    if isinstance(seed_or_streams, UrnStreams):
        streams, seed = seed_or_streams, None
    else:
        seed = int(seed_or_streams)
        streams = UrnStreams.create(seed, rep=rep, label=config.label)

    state = UrnState.initial(config.a, config.b)
    n_arr = np.empty(steps, dtype=np.int64)
    x_arr = np.empty(steps, dtype=np.int64)
    r_arr = np.empty(steps, dtype=np.int64)
    h_arr = np.empty(steps, dtype=np.int64)
    s_arr = np.empty(steps, dtype=np.int64)
    z_arr = np.empty(steps, dtype=np.float64)
    m_arr = np.empty(steps, dtype=np.float64)
    n_history: list[int] = []
    xsum = 0.0
    for t in range(steps):
        state, rec = step(state, config.draw, config.reinforce, streams, n_history)
        n_history.append(rec.N)
        n_arr[t] = rec.N
        x_arr[t] = rec.X
        r_arr[t] = rec.R
        h_arr[t] = rec.H_after
        s_arr[t] = rec.S_after
        z_arr[t] = rec.H_after / rec.S_after
        xsum += rec.X / rec.N
        m_arr[t] = xsum / (t + 1)
    return Trajectory(
        config=config, seed=seed,
        N=n_arr, X=x_arr, R=r_arr, H=h_arr, S=s_arr, Z=z_arr, M=m_arr,
    )
