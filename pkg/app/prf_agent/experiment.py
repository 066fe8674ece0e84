"""
Experiment runner: training episodes, periodic greedy evaluation, CSV logs,
checkpoints and image dumps.
"""
import csv
import json
import logging
import math
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from app.models.experiment import DescriptorSpec, ExperimentConfig
from app.prf_agent.ema_utils import ema_init, ema_update
from app.prf_agent.envs import Environment, make_env
from app.prf_agent.motion_template_utils import MotionTemplateAccumulator, MotionTemplateParams
from app.prf_agent.prf_utils import (
    DirectDescriptor,
    MotionDescriptor,
    PerceptualRewardFunction,
    PerceptualTemplate,
    TaskDescriptor,
    TemplateRole,
    WindowDescriptor,
    reward_from_distance,
)
from app.prf_agent.q_learning import Learner, QNetwork, Transition, preprocess
from app.utils.image_io import load_frames, load_image, save_image

logger = logging.getLogger(__name__)

TRAIN_COLUMNS = ["episode", "mode", "total_reward", "score", "steps", "epsilon", "loss_mean", "distance_D"]
EVAL_COLUMNS = ["after_episode", "episodes", "mean_total_reward", "mean_score", "success_rate", "mean_distance_D"]

EVAL_SEED_OFFSET = 1_000_000

# frame_sink(episode, step, mirror_state, ema_image)
FrameSink = Callable[[int, int, np.ndarray, np.ndarray], None]


@dataclass
class EpisodeSummary:
    episode: int
    mode: str
    total_reward: float
    score: float
    steps: int
    success: bool
    epsilon: float
    loss_mean: float
    distance_D: float
    final_template: Optional[np.ndarray] = field(default=None, repr=False)

    def row(self) -> Dict[str, str]:
        return {
            "episode": str(self.episode),
            "mode": self.mode,
            "total_reward": format_number(self.total_reward),
            "score": format_number(self.score),
            "steps": str(self.steps),
            "epsilon": format_number(self.epsilon),
            "loss_mean": format_number(self.loss_mean),
            "distance_D": format_number(self.distance_D),
        }


@dataclass
class RunResult:
    output_dir: Path
    episodes: List[EpisodeSummary]
    evaluations: List[Dict[str, str]]


def format_number(value: float) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.10g}"


def episode_seed(base_seed: int, index: int) -> int:
    return base_seed * 1_000_003 + index


def build_descriptor(spec: DescriptorSpec, env: Environment, mt_params: MotionTemplateParams) -> TaskDescriptor:
    """Turn the [descriptor] config into a task descriptor."""
    if spec.goal_source == "files":
        if spec.variant == "motion":
            images = load_frames(spec.goal_frames)
        else:
            images = [load_image(spec.goal)]
    else:
        images = env.goal_images(spec.variant, spec.goal_source)

    if spec.variant == "direct":
        return DirectDescriptor(goal=images[0])
    if spec.variant == "window":
        return WindowDescriptor(goal_window=images[0])
    return MotionDescriptor(goal_frames=images, mt_params=mt_params)


def build_environment(config: ExperimentConfig) -> Environment:
    options = dict(config.env_options)
    if config.step_cap is not None:
        options["step_cap"] = config.step_cap
    return make_env(config.env, **options)


def build_prf(config: ExperimentConfig, env: Environment) -> Optional[PerceptualRewardFunction]:
    if config.descriptor is None:
        return None
    descriptor = build_descriptor(config.descriptor, env, config.motion_template.to_params())
    return PerceptualRewardFunction(descriptor, config.prf.to_params())


def run_episode(
    env: Environment,
    learner: Learner,
    config: ExperimentConfig,
    prf: Optional[PerceptualRewardFunction],
    seed: int,
    episode: int = 0,
    learn: bool = True,
    epsilon: Optional[float] = None,
    frame_sink: Optional[FrameSink] = None,
) -> EpisodeSummary:
    """
    Play one episode.

    In PRF mode the reward is exp(-D) between the agent and goal templates;
    in VRF mode it is the environment's own reward (D is still measured when
    a descriptor is configured). The learner sees the EMA state, except for
    PRF motion tasks where it sees the agent's motion template.
    """
    mode = config.reward_mode
    input_size = config.learner.input_size
    motion = prf is not None and isinstance(prf.descriptor, MotionDescriptor)
    template_input = motion and mode == "prf"
    if not learn and epsilon is None:
        epsilon = config.eval_epsilon

    outcome = env.reset(seed)
    accumulator = None
    if motion:
        accumulator = MotionTemplateAccumulator(prf.descriptor.mt_params)
        accumulator.push(outcome.mirror_state)
    ema = ema_init(outcome.mirror_state, config.ema_lambda)

    def learner_input() -> np.ndarray:
        image = accumulator.template.to_gray() if template_input else ema.image
        return preprocess(image, input_size)

    state = learner_input()
    total_reward = 0.0
    losses: List[float] = []
    exploration = learner.epsilon if learn else epsilon

    while True:
        action = learner.act(state, epsilon=None if learn else epsilon)
        outcome = env.step(action)
        if accumulator is not None:
            accumulator.push(outcome.mirror_state)

        if mode == "prf":
            if motion:
                agent = PerceptualTemplate(accumulator.template.to_gray(), TemplateRole.AGENT)
                reward = reward_from_distance(prf.distance_to_template(agent))
            else:
                reward = prf.reward(outcome.mirror_state)
        else:
            reward = outcome.vrf_reward

        ema = ema_update(ema, outcome.mirror_state)
        next_state = learner_input()
        if learn:
            bootstrap_cut = outcome.terminal and not outcome.info["truncated"]
            loss = learner.observe(Transition(state, action, reward, next_state, bootstrap_cut))
            if loss is not None:
                losses.append(loss)
        if frame_sink is not None:
            frame_sink(episode, env.steps, outcome.mirror_state, ema.image)

        total_reward += reward
        state = next_state
        if outcome.terminal:
            break

    distance_d = math.nan
    final_template = None
    if prf is not None:
        if motion:
            final_template = accumulator.template.to_gray()
            distance_d = prf.distance_to_template(PerceptualTemplate(final_template, TemplateRole.AGENT))
        else:
            distance_d = prf.distance(outcome.mirror_state)

    return EpisodeSummary(
        episode=episode,
        mode=mode,
        total_reward=total_reward,
        score=outcome.info["score"],
        steps=outcome.info["steps"],
        success=bool(outcome.info["success"]),
        epsilon=exploration,
        loss_mean=float(np.mean(losses)) if losses else math.nan,
        distance_D=distance_d,
        final_template=final_template,
    )


def summarize_evaluation(after_episode: int, summaries: List[EpisodeSummary]) -> Dict[str, str]:
    distances = [s.distance_D for s in summaries if not math.isnan(s.distance_D)]
    return {
        "after_episode": str(after_episode),
        "episodes": str(len(summaries)),
        "mean_total_reward": format_number(np.mean([s.total_reward for s in summaries])),
        "mean_score": format_number(np.mean([s.score for s in summaries])),
        "success_rate": format_number(np.mean([1.0 if s.success else 0.0 for s in summaries])),
        "mean_distance_D": format_number(np.mean(distances) if distances else math.nan),
    }


def prepare_output_dir(path: Path, force: bool = False) -> Path:
    if path.exists() and any(path.iterdir()):
        if not force:
            raise FileExistsError(f"Output directory {path} is not empty; pass --force to overwrite it")
        logger.warning(f"Removing previous contents of {path}")
        shutil.rmtree(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def write_config(config: ExperimentConfig, path: Path) -> None:
    # json keeps inf as Infinity, which a constant motion-template delta needs
    path.write_text(json.dumps(config.model_dump(), default=str, indent=2, sort_keys=True), encoding="utf-8")


def read_config(path: Path) -> ExperimentConfig:
    if not path.is_file():
        raise FileNotFoundError(f"Run configuration not found: {path}")
    return ExperimentConfig(**json.loads(path.read_text(encoding="utf-8")))


class ExperimentRunner:
    """Train one agent as described by an ExperimentConfig."""

    def __init__(self, config: ExperimentConfig, force: bool = False):
        self.config = config
        self.force = force
        self.output_dir = Path(config.output_dir)

        self.env = build_environment(config)
        self.eval_env = build_environment(config)
        self.prf = build_prf(config, self.env)

        learner_rng = np.random.default_rng(np.random.SeedSequence(config.seed))
        input_dim = config.learner.input_size ** 2
        self.learner = Learner(config.learner, input_dim, self.env.action_count, learner_rng)
        self.frames_written = 0
        self._global_step = 0

    def _frame_sink(self) -> Optional[FrameSink]:
        every = self.config.frames_every
        if every <= 0:
            return None
        frames_dir = self.output_dir / "frames"

        def sink(episode: int, step: int, mirror_state: np.ndarray, ema_image: np.ndarray) -> None:
            self._global_step += 1
            if self._global_step % every:
                return
            save_image(mirror_state, frames_dir / f"ep{episode:05d}_step{step:04d}.pgm")
            save_image(ema_image, frames_dir / f"ep{episode:05d}_step{step:04d}_ema.pgm")
            self.frames_written += 1

        return sink

    def evaluate(self, after_episode: int, episodes: Optional[int] = None) -> Dict[str, str]:
        """Greedy episodes without exploration, learning or replay."""
        count = episodes or self.config.eval_episodes
        summaries = [
            run_episode(
                self.eval_env,
                self.learner,
                self.config,
                self.prf,
                seed=episode_seed(self.config.seed, EVAL_SEED_OFFSET + k),
                episode=after_episode,
                learn=False,
            )
            for k in range(count)
        ]
        return summarize_evaluation(after_episode, summaries)

    def run(self) -> RunResult:
        config = self.config
        prepare_output_dir(self.output_dir, self.force)
        write_config(config, self.output_dir / "config.json")
        if self.prf is not None:
            save_image(self.prf.goal.image, self.output_dir / "goal_template.pgm")

        logger.info(
            f"Training {config.env} with {config.reward_mode.upper()} rewards for "
            f"{config.episodes} episodes (seed {config.seed}) into {self.output_dir}"
        )
        sink = self._frame_sink()
        episodes: List[EpisodeSummary] = []
        evaluations: List[Dict[str, str]] = []

        with open(self.output_dir / "train.csv", "w", newline="", encoding="utf-8") as train_file, \
                open(self.output_dir / "eval.csv", "w", newline="", encoding="utf-8") as eval_file:
            train_writer = csv.DictWriter(train_file, fieldnames=TRAIN_COLUMNS)
            eval_writer = csv.DictWriter(eval_file, fieldnames=EVAL_COLUMNS)
            train_writer.writeheader()
            eval_writer.writeheader()

            for episode in range(1, config.episodes + 1):
                summary = run_episode(
                    self.env,
                    self.learner,
                    config,
                    self.prf,
                    seed=episode_seed(config.seed, episode),
                    episode=episode,
                    frame_sink=sink,
                )
                episodes.append(summary)
                train_writer.writerow(summary.row())
                if config.save_templates and summary.final_template is not None:
                    save_image(summary.final_template, self.output_dir / "templates" / f"episode_{episode:05d}.pgm")
                logger.debug(f"Episode {episode}: {summary.row()}")

                if episode % config.log_every == 0:
                    recent = episodes[-config.log_every:]
                    logger.info(
                        f"Episode {episode}/{config.episodes}: mean reward "
                        f"{np.mean([s.total_reward for s in recent]):.3f}, mean score "
                        f"{np.mean([s.score for s in recent]):.2f}, epsilon {summary.epsilon:.3f}"
                    )

                if episode % config.eval_period == 0:
                    row = self.evaluate(episode)
                    evaluations.append(row)
                    eval_writer.writerow(row)
                    logger.info(
                        f"Evaluation after episode {episode}: mean score {row['mean_score']}, "
                        f"success rate {row['success_rate']}, mean D {row['mean_distance_D']}"
                    )

        self.learner.online.save(self.output_dir / "checkpoint.npz")
        logger.info(f"Run complete: {len(episodes)} episodes, {len(evaluations)} evaluations")
        return RunResult(output_dir=self.output_dir, episodes=episodes, evaluations=evaluations)


def evaluate_checkpoint(run_dir: Path, episodes: int, config: Optional[ExperimentConfig] = None) -> Dict[str, str]:
    """Greedy evaluation of a finished run's checkpoint."""
    run_dir = Path(run_dir)
    config = config or read_config(run_dir / "config.json")
    network = QNetwork.load(run_dir / "checkpoint.npz")
    runner = ExperimentRunner(config)
    runner.learner.online.copy_from(network)
    row = runner.evaluate(after_episode=0, episodes=episodes)

    with open(run_dir / "eval_cli.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=EVAL_COLUMNS)
        writer.writeheader()
        writer.writerow(row)
    return row
