"""
The shared solver loop.

PAL, MAL, GDA and BR share one skeleton and differ only in configuration
(NPG steps K, model epochs, buffer policy) and in the order the two players
update within an iteration:

    pal  model update, then K NPG steps against the new model, then collect
    mal  K NPG steps against the current model, collect, then model update
    gda  collect with pi_k, then one NPG step against a frozen copy of M_k and
         a bounded model pass, applied together
    br   as gda with K NPG steps and full model retraining on the latest batch
"""

import copy
import logging
import time
from dataclasses import dataclass
from typing import Union

import numpy as np

from ..config import GameConfig, config_hash
from ..dynamics import DynamicsEnsemble, PerfectModel, ReplayBuffer, TrainingHistory, beta_step, train_ensemble
from ..envs import Env, Trajectory, collect_rollouts, evaluate_policy, make_env
from ..errors import DivergenceError, ModelTrainingError
from ..policy import NpgStats, Policy, ValueNet, make_policy, npg_iteration
from ..policy.npg import GRAD_EPS
from .log import IterationRecord, TrainingLog

logger = logging.getLogger(__name__)

PHASE_INIT, PHASE_COLLECT, PHASE_MODEL, PHASE_POLICY, PHASE_EVAL = range(5)

UPDATE_ORDERS = {
    "pal": "model>policy",
    "mal": "policy>model",
    "gda": "simultaneous",
    "br": "simultaneous",
}

Model = Union[DynamicsEnsemble, PerfectModel]


@dataclass
class _PolicyPhase:
    steps: int = 0
    synthetic_return: float = float("nan")
    mean_kl: float = 0.0
    explained_variance: float = float("nan")
    max_step_error: float = 0.0
    cg_breakdowns: int = 0
    diverged: int = 0


@dataclass
class _ModelPhase:
    train_loss: float = float("nan")
    holdout_loss: float = float("nan")
    retries: int = 0


class GameRunner:
    """
    Runs one solver for one seed and keeps the final players around.

    Args:
        cfg: Fully resolved configuration
    """

    def __init__(self, cfg: GameConfig):
        self.cfg = cfg
        self.seed = cfg.seed
        self.env: Env = make_env(cfg.env.name, cfg.seed, cfg.env)
        spec = self.env.spec

        self.policy: Policy = make_policy(
            spec.state_dim, spec.action_dim, spec.discrete_actions,
            cfg.npg.policy_hidden, cfg.npg.init_log_std, rng=self._rng(0, PHASE_INIT, 0),
        )
        self.value = ValueNet(spec.state_dim, cfg.npg.value_hidden, cfg.npg.value_lr, rng=self._rng(0, PHASE_INIT, 1))
        self.model: Model = self._new_model()

        capacity = cfg.buffer_capacity if cfg.buffer_mode == "fifo" else None
        self.buffer = ReplayBuffer(capacity)
        self.log = TrainingLog(cfg.solver, cfg.seed, config_hash(cfg))
        self.samples = 0
        self.perturbed = False
        self._clock = 0

    def _rng(self, iteration: int, phase: int, extra: int = 0) -> np.random.Generator:
        return np.random.default_rng([self.seed, iteration, phase, extra])

    def _seed(self, iteration: int, phase: int, extra: int = 0) -> list[int]:
        return [self.seed, iteration, phase, extra]

    def _new_model(self) -> Model:
        if self.cfg.model.perfect:
            return PerfectModel(self.env)
        spec = self.env.spec
        return DynamicsEnsemble(
            spec.state_dim, spec.action_dim, self.cfg.model.hidden,
            self.cfg.model.ensemble_size, seed=self.seed, lr=self.cfg.model.lr,
        )

    def _tick(self) -> int:
        self._clock += 1
        return self._clock

    # -- phases -------------------------------------------------------------

    def _collect(self, n: int, iteration: int) -> list[Trajectory]:
        trajectories = collect_rollouts(self.env, self.policy, n, seed=self._seed(iteration, PHASE_COLLECT))
        self.samples += n
        if self.cfg.buffer_mode == "fresh":
            self.buffer.clear()
        self.buffer.insert_trajectories(trajectories)
        return trajectories

    def _train_model(
        self, iteration: int, epochs: int, conservative: bool = False, single_pass: bool = False
    ) -> _ModelPhase:
        """Model update with the retry policy for non-finite training."""
        phase = _ModelPhase()
        if isinstance(self.model, PerfectModel):
            data = self.buffer.as_arrays()
            phase.train_loss = self.model.model_loss(0, data["s"], data["a"], data["s_next"])
            return phase

        mcfg = self.cfg.model
        for attempt in range(self.cfg.max_model_retries + 1):
            seed = self._seed(iteration, PHASE_MODEL, attempt)
            try:
                if conservative and mcfg.update_mode == "beta_step":
                    history: TrainingHistory = beta_step(
                        self.model, self.buffer, mcfg.beta_steps, mcfg.beta_lr,
                        mcfg.minibatch, seed, mcfg.holdout_fraction,
                    )
                else:
                    history = train_ensemble(
                        self.model, self.buffer, epochs, mcfg.minibatch, seed,
                        mcfg.holdout_fraction, 1 if single_pass else mcfg.min_steps, mcfg.max_steps,
                    )
            except ModelTrainingError as e:
                phase.retries += 1
                logger.warning(f"model training failed at iteration {iteration} (attempt {attempt + 1}): {e}")
                self.model.reinitialize(self.seed + 7919 * (attempt + 1))
                continue
            phase.train_loss = history.train_loss
            phase.holdout_loss = history.holdout_loss if history.holdout_loss is not None else float("nan")
            return phase
        raise DivergenceError(
            f"model training diverged at iteration {iteration} after {self.cfg.max_model_retries} retries"
        )

    def _improve_policy(self, iteration: int, steps: int, model: Model) -> _PolicyPhase:
        phase = _PolicyPhase(steps=steps)
        if steps == 0:
            return phase
        rng = self._rng(iteration, PHASE_POLICY)
        kls = []
        for _ in range(steps):
            stats: NpgStats = npg_iteration(self.policy, self.value, model, self.env, self.cfg.npg, rng, self.buffer)
            kls.append(stats.kl)
            phase.synthetic_return = stats.mean_synthetic_return
            phase.explained_variance = stats.explained_variance
            phase.cg_breakdowns += int(stats.cg_breakdown)
            phase.diverged += stats.n_diverged
            if stats.grad_norm >= GRAD_EPS and self.cfg.npg.step_size > 0:
                error = abs(stats.quadratic_form - self.cfg.npg.step_size) / self.cfg.npg.step_size
                phase.max_step_error = max(phase.max_step_error, error)
        phase.mean_kl = float(np.mean(kls))
        return phase

    def _maybe_perturb(self) -> None:
        schedule = self.cfg.perturbation
        if schedule is None or self.perturbed or self.samples < schedule.trigger_sample_count:
            return
        self.env = self.env.apply_perturbation(schedule)
        if isinstance(self.model, PerfectModel):
            self.model.env = self.env
        self.perturbed = True
        logger.info(f"perturbation {schedule.kind} applied at {self.samples} samples")

    def _record(
        self,
        iteration: int,
        policy_phase: _PolicyPhase,
        model_phase: _ModelPhase,
        order: str,
        model_seq: int,
        policy_seq: int,
        started: float,
    ) -> IterationRecord:
        evaluation = evaluate_policy(
            self.env, self.policy, self.cfg.eval_episodes, self.cfg.npg.gamma,
            seed=self._seed(iteration, PHASE_EVAL),
        )
        record = IterationRecord(
            iteration=iteration,
            solver=self.cfg.solver,
            cumulative_samples=self.samples,
            eval_return=evaluation["return"],
            eval_return_se=evaluation["return_se"],
            success_rate=evaluation["success_rate"],
            synthetic_return=policy_phase.synthetic_return,
            model_train_loss=model_phase.train_loss,
            model_holdout_loss=model_phase.holdout_loss,
            buffer_size=len(self.buffer),
            npg_steps=policy_phase.steps,
            mean_kl=policy_phase.mean_kl,
            explained_variance=policy_phase.explained_variance,
            max_step_error=policy_phase.max_step_error,
            cg_breakdowns=policy_phase.cg_breakdowns,
            diverged_trajectories=policy_phase.diverged,
            model_retries=model_phase.retries,
            perturbed=self.perturbed,
            update_order=order,
            model_update_seq=model_seq,
            policy_update_seq=policy_seq,
            wall_clock=time.perf_counter() - started,
        )
        self.log.append(record)
        logger.info(
            f"[{self.cfg.solver}] iter {iteration} samples {self.samples} "
            f"J={record.eval_return:.4f} success={record.success_rate:.2f}"
        )
        return record

    # -- iterations ---------------------------------------------------------

    def initialize(self) -> IterationRecord:
        """Collect N_init samples with the initial policy and fit the first model."""
        started = time.perf_counter()
        self._collect(min(self.cfg.n_init, self.cfg.budget), 0)
        model_phase = self._train_model(0, self.cfg.init_model_epochs)
        return self._record(0, _PolicyPhase(), model_phase, "init", self._tick(), -1, started)

    def step(self, iteration: int) -> IterationRecord:
        cfg = self.cfg
        started = time.perf_counter()
        self._maybe_perturb()
        n = min(cfg.samples_per_iteration, cfg.budget - self.samples)

        if cfg.solver == "pal":
            model_phase = self._train_model(iteration, cfg.model_epochs)
            model_seq = self._tick()
            policy_phase = self._improve_policy(iteration, cfg.npg_steps, self.model)
            policy_seq = self._tick()
            self._collect(n, iteration)
        elif cfg.solver == "mal":
            policy_phase = self._improve_policy(iteration, cfg.npg_steps, self.model)
            policy_seq = self._tick()
            self._collect(n, iteration)
            model_phase = self._train_model(iteration, cfg.model_epochs, conservative=True)
            model_seq = self._tick()
        else:
            self._collect(n, iteration)
            frozen = copy.deepcopy(self.model) if not isinstance(self.model, PerfectModel) else self.model
            policy_phase = self._improve_policy(iteration, cfg.npg_steps, frozen)
            gda = cfg.solver == "gda"
            model_phase = self._train_model(iteration, cfg.model_epochs, conservative=gda, single_pass=gda)
            model_seq = policy_seq = self._tick()

        return self._record(iteration, policy_phase, model_phase, UPDATE_ORDERS[cfg.solver], model_seq, policy_seq, started)

    def run(self) -> TrainingLog:
        logger.info(f"starting {self.cfg.solver} on {self.env.name} (seed {self.seed}, budget {self.cfg.budget})")
        self.initialize()
        iteration = 0
        while self.samples < self.cfg.budget:
            iteration += 1
            self.step(iteration)
        return self.log


def _run(cfg: GameConfig, solver: str) -> TrainingLog:
    if cfg.solver != solver:
        raise ValueError(f"run_{solver} called with a '{cfg.solver}' configuration")
    return GameRunner(cfg).run()


def run_pal(cfg: GameConfig) -> TrainingLog:
    """Policy as leader: aggressive local model, conservative NPG steps."""
    return _run(cfg, "pal")


def run_mal(cfg: GameConfig) -> TrainingLog:
    """Model as leader: aggressive policy optimization, conservative aggregated model update."""
    return _run(cfg, "mal")


def run_gda(cfg: GameConfig) -> TrainingLog:
    return _run(cfg, "gda")


def run_br(cfg: GameConfig) -> TrainingLog:
    return _run(cfg, "br")


SOLVERS = {"pal": run_pal, "mal": run_mal, "gda": run_gda, "br": run_br}
