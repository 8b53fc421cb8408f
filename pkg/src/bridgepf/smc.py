"""Bridge and bootstrap particle filter drivers.

The filters simulate particles forward with the model's own sampler and
insert weighting (and, when the effective sample size drops, selection)
at intermediate times between observations, scoring particles with a
guide function aimed at the next observation. At the observation itself
the guide is exchanged for the true terminal density, which makes the
per-particle guide factors cancel telescopically inside each block: the
accumulated log normalising constant is exact SMC bookkeeping, and with
selection disabled it collapses to plain importance sampling.

Two target kinds are supported per run:

* "state": consecutive observations pin the state exactly, so each
  inter-observation block is a bridge between known endpoints and the
  block increment estimates the transition density between them.
* "indirect": the state is latent and each observation contributes its
  observation density; the block increment estimates the incremental
  marginal likelihood.

Weights and particles are carried across blocks; the per-particle guide
memory resets at each block start because the guide target changes.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .core import get_resampler, log_sum_exp
from .guides import ConstantGuide
from .models.base import substep_count


@dataclass
class ParticleSystem:
    """Particle states, log weights and selection bookkeeping at one time.

    prev_guide_log holds the last guide log-value assigned to each
    particle within the current block (zero right after a block start);
    the next weighting divides it out so only guide ratios accumulate.
    """

    states: np.ndarray          # (N, d)
    logw: np.ndarray            # (N,)
    parents: np.ndarray         # (N,) indices selected at the last event
    prev_guide_log: np.ndarray  # (N,)
    k: int = 0                  # schedule index of the last completed event

    @property
    def n(self) -> int:
        return self.states.shape[0]

    @classmethod
    def initialise(cls, states: np.ndarray) -> "ParticleSystem":
        n = states.shape[0]
        return cls(
            states=np.array(states, dtype=float, copy=True),
            logw=np.full(n, -np.log(n)),
            parents=np.arange(n),
            prev_guide_log=np.zeros(n),
            k=0,
        )


@dataclass(frozen=True)
class Schedule:
    """Interleaved grid of simulation, weighting and observation times.

    times is strictly increasing; bridge_flags marks weighting (and
    selection-eligible) times, obs_flags marks observation times, and
    every observation time is also a weighting time. sim_substep bounds
    the fine integrator step used inside each weighting interval.
    """

    times: np.ndarray
    bridge_flags: np.ndarray
    obs_flags: np.ndarray
    sim_substep: float | None = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.size < 1 or np.any(np.diff(t) <= 0):
            raise ValueError("schedule times must be strictly increasing")
        if np.any(self.obs_flags & ~self.bridge_flags):
            raise ValueError("every observation time must be bridge-flagged")
        gaps = np.diff(t[self.bridge_flags | (np.arange(t.size) == 0)])
        if self.sim_substep is not None and gaps.size and self.sim_substep > np.min(gaps) + 1e-12:
            raise ValueError("sim_substep must not exceed the smallest bridge interval")

    @classmethod
    def build(cls, obs_times, bridge_step, sim_substep=None, t0=None) -> "Schedule":
        """Equispaced weighting times within each inter-observation interval.

        Each interval is divided into round(interval / bridge_step)
        equal pieces, so the requested step is honoured exactly when it
        divides the interval and stretched minimally otherwise.
        """
        obs_times = np.asarray(obs_times, dtype=float)
        if obs_times.size == 0:
            if t0 is None:
                raise ValueError("need at least one time to build a schedule")
            return cls(np.array([t0]), np.array([False]), np.array([False]), sim_substep)
        start = float(obs_times[0]) if t0 is None else float(t0)
        anchors = [start] + [t for t in obs_times if t > start + 1e-12]
        times = [start]
        # a pinned chain starts at its first observation; flag it as a
        # (vacuous) weighting time so obs-flagged implies bridge-flagged
        start_is_obs = bool(obs_times[0] <= start + 1e-12)
        bridge = [start_is_obs]
        obs = [start_is_obs]
        for a, b in zip(anchors[:-1], anchors[1:]):
            m = max(1, round((b - a) / bridge_step)) if bridge_step else 1
            for j in range(1, m + 1):
                times.append(a + (b - a) * j / m)
                bridge.append(True)
                obs.append(j == m)
        return cls(np.asarray(times), np.asarray(bridge), np.asarray(obs), sim_substep)

    def obs_indices(self) -> np.ndarray:
        return np.where(self.obs_flags)[0]

    def bridge_indices_between(self, i_a: int, i_b: int) -> np.ndarray:
        """Weighting indices in (i_a, i_b]."""
        idx = np.where(self.bridge_flags)[0]
        return idx[(idx > i_a) & (idx <= i_b)]


@dataclass
class AncestryMatrix:
    """Per-event parent indices, and optionally the particle states.

    Row k holds the parents chosen at event k (identity rows when no
    selection fired), so lineages follow b_k = parents[k + 1][b_{k+1}]
    backwards from the final particles.
    """

    parents: list = field(default_factory=list)
    event_indices: list = field(default_factory=list)
    states: list | None = None

    def record(self, event_index: int, parents: np.ndarray, states: np.ndarray | None):
        self.parents.append(np.array(parents, copy=True))
        self.event_indices.append(event_index)
        if self.states is not None and states is not None:
            self.states.append(np.array(states, copy=True))

    @property
    def n_events(self) -> int:
        return len(self.parents)

    def lineages(self) -> np.ndarray:
        """(n_events, N) matrix of ancestor indices per event per final particle."""
        if not self.parents:
            return np.empty((0, 0), dtype=int)
        n = self.parents[0].size
        b = np.empty((self.n_events, n), dtype=int)
        b[-1] = np.arange(n)
        for k in range(self.n_events - 2, -1, -1):
            b[k] = self.parents[k + 1][b[k + 1]]
        return b


@dataclass
class FilterOutput:
    """One filter run: estimate, final particles, ancestry and event log."""

    log_z: float
    final: ParticleSystem
    ancestry: AncestryMatrix
    resample_events: list
    elapsed: float
    work: int = 0  # deterministic particle-substep count, a timing proxy
    block_log_z: list = field(default_factory=list)


@dataclass(frozen=True)
class Observations:
    """Observed series driving a filter run.

    kind "state": values are exact states; the first entry is the known
    starting state at the schedule origin and later entries pin the
    bridge endpoints. kind "indirect": values are measurements scored by
    an observation model, and the initial state is drawn from the
    model's p(dx_0).
    """

    times: np.ndarray
    values: np.ndarray
    kind: str = "state"

    def __post_init__(self):
        if self.kind not in ("state", "indirect"):
            raise ValueError(f"unknown observation kind {self.kind!r}")
        t = np.asarray(self.times, dtype=float)
        if t.size and np.any(np.diff(t) <= 0):
            raise ValueError("observation times must be strictly increasing")

    @property
    def n_obs(self) -> int:
        return len(self.times)

    def value_row(self, j: int) -> np.ndarray:
        return np.atleast_1d(np.asarray(self.values, dtype=float)[j])


def bridge_block(model, guide, schedule: Schedule, block, target, ps: ParticleSystem,
                 rel_threshold, rng, resampler="systematic", kind="state",
                 obs_model=None, ancestry: AncestryMatrix | None = None,
                 final_block=False):
    """Run one inter-observation block in place; returns (log increment, events).

    block is an (i_a, i_b) pair of schedule indices. Every weighting
    time k in (i_a, i_b] performs: propagation through the fine
    substeps, the incremental weight log g(x_k) - prev_guide_log, then
    a selection step when the freshly weighted ESS trips the trigger,
    so a resampling event is logged at the time whose weights caused
    it. At i_b the guide is replaced by the true terminal density: the
    transition density of the remaining gap for a pinned target (no
    propagation to the pinned time), or the observation density after
    propagating to it. The increment returned is the sum of log-mean
    incremental weights under the normalized post-selection weights;
    -inf signals a fully dead block and is the caller's cue to stop.
    The trailing selection is skipped at the last event of the final
    block, where no propagation would consume it.
    """
    i_a, i_b = block
    resample_fn = get_resampler(resampler) if isinstance(resampler, str) else resampler
    events = []
    ps.prev_guide_log[:] = 0.0
    t_prev = float(schedule.times[i_a])
    t_end = float(schedule.times[i_b])
    log_increment = 0.0
    work = 0
    n = ps.n
    log_n = np.log(n)

    for idx in schedule.bridge_indices_between(i_a, i_b):
        t_k = float(schedule.times[idx])
        terminal = idx == i_b

        m = float(np.max(ps.logw))
        if m == -np.inf:
            return -np.inf, events, work
        if float(np.min(ps.logw)) == m:
            logw_norm = np.full(n, -log_n)  # uniform (fresh or post-selection)
        else:
            w = np.exp(ps.logw - m)
            logw_norm = ps.logw - (m + np.log(float(np.sum(w))))

        pinned_terminal = terminal and kind == "state"
        if not pinned_terminal:
            ps.states = model.simulate(ps.states, t_prev, t_k, schedule.sim_substep, rng)
            work += n * substep_count(t_prev, t_k, schedule.sim_substep)

        if terminal:
            if kind == "state":
                g = model.transition_logpdf(target, ps.states, t_end - t_prev)
            else:
                g = obs_model.loglik(target, ps.states)
            u = g - ps.prev_guide_log
        else:
            g = guide.log_value(ps.states, t_k, target, t_end)
            u = g - ps.prev_guide_log
            ps.prev_guide_log = g
        work += n

        ps.logw = logw_norm + u
        ps.k = int(idx)
        if ancestry is not None:
            if pinned_terminal:
                # the path endpoint is the pinned value itself
                recorded = np.tile(np.asarray(target, dtype=float), (n, 1))
            else:
                recorded = ps.states
            ancestry.record(int(idx), ps.parents, recorded)
        inc = log_sum_exp(ps.logw)
        if inc == -np.inf:
            return -np.inf, events, work
        log_increment += inc
        t_prev = t_k

        # selection responds to the weights just formed and applies to all
        # later propagation; the parent indices feed the next event's row
        if terminal and final_block:
            ps.parents = np.arange(n)
        elif _ess_below(ps.logw, n, rel_threshold):
            parents = resample_fn(ps.logw, n, rng)
            ps.states = ps.states[parents]
            ps.prev_guide_log = ps.prev_guide_log[parents]
            ps.logw = np.full(n, -log_n)
            ps.parents = parents
            events.append(int(idx))
        else:
            ps.parents = np.arange(n)

    return log_increment, events, work


def _ess_below(logw, n, rel_threshold) -> bool:
    if rel_threshold <= 0.0:
        return False
    m = float(np.max(logw))
    if m == -np.inf:
        return False
    w = np.exp(logw - m)
    s = float(np.sum(w))
    return s * s / float(np.sum(w * w)) < rel_threshold * n


def _initial_states(model, obs: Observations, n_particles, rng):
    if obs.kind == "state":
        x0 = obs.value_row(0)
        if x0.size != model.dim:
            raise ValueError("pinned starting state has wrong dimension")
        return np.tile(x0, (n_particles, 1))
    return np.asarray(model.initial_sample(n_particles, rng), dtype=float)


def run_bridge_filter(model, guide, schedule: Schedule, obs: Observations,
                      n_particles, rel_threshold=0.5, rng=None,
                      resampler="systematic", obs_model=None,
                      store_history=False) -> FilterOutput:
    """Filter a whole observed series, accumulating the log normalising constant.

    For pinned runs the first observation is the starting state and
    every later one closes a bridge block, after which all particles
    jump to the pinned value. For indirect runs particles start from
    p(dx_0) and never collapse. A fully degenerate block yields
    log_z = -inf with the output still returned, so a rejection-based
    caller can treat it as zero likelihood.
    """
    if rng is None:
        rng = np.random.default_rng()
    if n_particles < 2:
        raise ValueError("need at least two particles")
    if obs.kind == "indirect" and obs_model is None:
        raise ValueError("indirect observations need an observation model")

    t_start = time.perf_counter()
    states = _initial_states(model, obs, n_particles, rng)
    ps = ParticleSystem.initialise(states)
    ancestry = AncestryMatrix(states=[] if store_history else None)
    resample_events: list = []
    block_log_z: list = []
    log_z = 0.0
    work = n_particles

    obs_idx = schedule.obs_indices()
    if obs_idx.size != obs.n_obs or not np.allclose(
            schedule.times[obs_idx], np.asarray(obs.times, dtype=float)):
        raise ValueError("observations are not aligned with the schedule's obs flags")
    if obs.kind == "state":
        blocks = list(zip(obs_idx[:-1], obs_idx[1:]))
        targets = [obs.value_row(j + 1) for j in range(len(blocks))]
    else:
        starts = np.concatenate(([0], obs_idx[:-1])) if obs_idx.size else np.array([], dtype=int)
        blocks = list(zip(starts, obs_idx))
        targets = [float(obs.value_row(j)[0]) if obs.value_row(j).size == 1 else obs.value_row(j)
                   for j in range(len(blocks))]

    for b_idx, (block, target) in enumerate(zip(blocks, targets)):
        inc, events, w = bridge_block(
            model, guide, schedule, block, target, ps, rel_threshold, rng,
            resampler=resampler, kind=obs.kind, obs_model=obs_model,
            ancestry=ancestry, final_block=(b_idx == len(blocks) - 1))
        resample_events.extend(events)
        block_log_z.append(inc)
        work += w
        if inc == -np.inf:
            log_z = -np.inf
            break
        log_z += inc
        if obs.kind == "state":
            ps.states = np.tile(np.asarray(target, dtype=float), (n_particles, 1))

    elapsed = time.perf_counter() - t_start
    return FilterOutput(log_z=float(log_z), final=ps, ancestry=ancestry,
                        resample_events=resample_events, elapsed=elapsed,
                        work=work, block_log_z=block_log_z)


def run_bootstrap_filter(model, schedule: Schedule, obs: Observations,
                         n_particles, rel_threshold=0.5, rng=None,
                         resampler="systematic", obs_model=None,
                         store_history=False) -> FilterOutput:
    """Baseline filter: propose from the prior, weight only at observations.

    This is by definition the bridge filter with a unit guide: the
    intermediate weightings are exact no-ops, so weights change (and the
    ESS trigger can first fire) only at observation times, while the
    propagation path and random-number stream match the bridge filter's
    exactly.
    """
    return run_bridge_filter(model, ConstantGuide(), schedule, obs, n_particles,
                             rel_threshold=rel_threshold, rng=rng,
                             resampler=resampler, obs_model=obs_model,
                             store_history=store_history)


def simulate_path(model, x0, schedule: Schedule, i_a, i_b, rng):
    """Forward-sample states at each weighting time in (i_a, i_b].

    Pure prior simulation composed over the fine substeps, no weighting;
    returns (times, states) with states of shape (N, n_times, d). Useful
    for pilot runs and guide fitting.
    """
    x = np.atleast_2d(np.asarray(x0, dtype=float))
    t_prev = float(schedule.times[i_a])
    times_out = []
    states_out = []
    for idx in schedule.bridge_indices_between(i_a, i_b):
        t_k = float(schedule.times[idx])
        x = model.simulate(x, t_prev, t_k, schedule.sim_substep, rng)
        times_out.append(t_k)
        states_out.append(x.copy())
        t_prev = t_k
    if not states_out:
        return np.array([]), np.empty((x.shape[0], 0, x.shape[1]))
    return np.asarray(times_out), np.stack(states_out, axis=1)


def extract_trajectories(ancestry: AncestryMatrix, final: ParticleSystem):
    """Reconstruct the N ancestral paths and their normalized weights.

    Requires the filter to have been run with store_history=True so the
    ancestry carries per-event states. Returns (paths, weights) with
    paths of shape (N, n_events, d).
    """
    if ancestry.states is None or len(ancestry.states) != ancestry.n_events:
        raise ValueError("ancestry does not carry state history; "
                         "run the filter with store_history=True")
    b = ancestry.lineages()
    n_events, n = b.shape
    d = final.states.shape[1]
    paths = np.empty((n, n_events, d))
    for k in range(n_events):
        paths[:, k, :] = ancestry.states[k][b[k]]
    logw = final.logw - log_sum_exp(final.logw)
    return paths, np.exp(logw)


def weighted_expectation(f, paths, weights):
    """Self-normalized estimate sum_i w_i f(path_i) / sum_i w_i."""
    weights = np.asarray(weights, dtype=float)
    total = np.sum(weights)
    if not (total > 0):
        raise ValueError("all paths carry zero weight")
    vals = np.array([f(p) for p in paths], dtype=float)
    return float(np.sum(weights * vals) / total)
