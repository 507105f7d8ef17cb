"""Optimization loops shared by the synthesis and separation tasks.

The driver works on flat parameter vectors supplied by renderers, with
adaptive-moment (Adam) or plain SGD steps. Runs are pure functions of
their task description: all randomness is keyed off the configured
seeds, every log record is deterministic, and a NaN parameter aborts the
run while preserving the last good checkpoint.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .sds import SDSConfig, sds_update
from .waveform import Waveform


@dataclass
class OptimizerSettings:
    kind: str = "adam"  # adam | sgd
    lr: float = 1e-2
    steps: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    checkpoint_every: int = 100

    def __post_init__(self):
        if self.kind not in ("adam", "sgd"):
            raise InvalidInputError(f"unknown optimizer kind {self.kind!r}")
        if self.steps < 1 or self.lr <= 0:
            raise InvalidInputError("need steps >= 1 and lr > 0")


class VectorOptimizer:
    """Adam (default moment decays) or SGD over one flat vector."""

    def __init__(self, size: int, settings: OptimizerSettings):
        self.settings = settings
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.count = 0

    def step(self, vec: np.ndarray, grad: np.ndarray) -> np.ndarray:
        s = self.settings
        if s.kind == "sgd":
            return vec - s.lr * grad
        self.count += 1
        self.m = s.beta1 * self.m + (1 - s.beta1) * grad
        self.v = s.beta2 * self.v + (1 - s.beta2) * grad * grad
        mhat = self.m / (1 - s.beta1**self.count)
        vhat = self.v / (1 - s.beta2**self.count)
        return vec - s.lr * mhat / (np.sqrt(vhat) + s.eps)


@dataclass
class SynthesisTask:
    """Fit one renderer's parameters against the prior under a prompt/class."""

    renderer: object
    initial_params: object
    prior: object
    conditioning: object
    sds: SDSConfig
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    name: str = "synthesis"


@dataclass
class Trajectory:
    """Checkpoints, per-step log records, and the final render set."""

    records: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)  # (step, params snapshot)
    final_params: object = None
    final_renders: list = field(default_factory=list)
    aborted: bool = False
    abort_reason: str | None = None

    @property
    def final_step(self) -> int:
        return self.records[-1]["step"] if self.records else -1


def optimize(task) -> Trajectory:
    """Run a synthesis or separation task to completion (or NaN abort)."""
    from .separation import SeparationProblem, optimize_separation

    if isinstance(task, SeparationProblem):
        return optimize_separation(task)
    return optimize_synthesis(task)


def optimize_synthesis(task: SynthesisTask) -> Trajectory:
    renderer = task.renderer
    params = task.initial_params
    vec = renderer.params_to_vector(params)
    opt = VectorOptimizer(vec.size, task.optimizer)
    traj = Trajectory()
    traj.checkpoints.append((0, vec.copy()))
    last_good = vec.copy()
    last_good_step = 0
    for step in range(task.optimizer.steps):
        report = sds_update(params, renderer, task.prior, task.conditioning,
                            task.sds, step=step)
        gvec = renderer.params_to_vector(report.gradient)
        vec = opt.step(vec, gvec)
        if not np.all(np.isfinite(vec)):
            traj.aborted = True
            traj.abort_reason = f"non-finite parameter at step {step}"
            vec = last_good
            break
        params = renderer.project(renderer.params_from_vector(vec, like=params))
        vec = renderer.params_to_vector(params)
        last_good = vec.copy()
        last_good_step = step + 1
        traj.records.append(report.log_record(step))
        if (step + 1) % task.optimizer.checkpoint_every == 0:
            traj.checkpoints.append((step + 1, vec.copy()))
    traj.final_params = renderer.params_from_vector(last_good, like=params)
    if traj.checkpoints[-1][0] != last_good_step:
        traj.checkpoints.append((last_good_step, last_good.copy()))
    traj.final_renders = [renderer.render(traj.final_params)]
    return traj
