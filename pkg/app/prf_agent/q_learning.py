"""
epsilon-greedy Q-learning with a small dense value network and experience replay.

The network is a numpy MLP (tanh hidden layers, linear head) trained on the
mean squared TD error against a periodically synced target network.
"""
import logging
import math
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from app.prf_agent.imaging_utils import GrayImage, resize

logger = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    """Raised when the TD loss or a network parameter stops being finite."""

    def __init__(self, message: str, step: Optional[int] = None, loss: Optional[float] = None):
        super().__init__(message)
        self.step = step
        self.loss = loss


def preprocess(image: GrayImage, input_size: int = 28) -> np.ndarray:
    """Downsample a state image to ``input_size`` squared and flatten it."""
    return resize(image, input_size, input_size).ravel()


class QNetwork:
    """Dense network mapping a flattened image to one value per action."""

    def __init__(
        self,
        input_size: int,
        hidden_sizes: Sequence[int],
        output_size: int,
        rng: Optional[np.random.Generator] = None,
    ):
        self.layer_sizes = [int(input_size), *[int(h) for h in hidden_sizes], int(output_size)]
        rng = rng if rng is not None else np.random.default_rng(0)
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        for fan_in, fan_out in zip(self.layer_sizes[:-1], self.layer_sizes[1:]):
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            self.weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
            self.biases.append(np.zeros(fan_out))

    @property
    def action_count(self) -> int:
        return self.layer_sizes[-1]

    def parameters(self) -> List[np.ndarray]:
        """Parameter arrays in the order W0, b0, W1, b1, ..."""
        params = []
        for w, b in zip(self.weights, self.biases):
            params.extend([w, b])
        return params

    def _activations(self, x: np.ndarray) -> List[np.ndarray]:
        activations = [np.atleast_2d(np.asarray(x, dtype=np.float64))]
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            z = activations[-1] @ w + b
            activations.append(z if i == last else np.tanh(z))
        return activations

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Q-values shaped (batch, actions)."""
        return self._activations(x)[-1]

    def loss_and_grads(
        self,
        states: np.ndarray,
        actions: np.ndarray,
        targets: np.ndarray,
    ) -> Tuple[float, List[np.ndarray]]:
        """
        Mean squared error between Q(s, a) and the targets, with gradients
        ordered like ``parameters()``.
        """
        activations = self._activations(states)
        q = activations[-1]
        batch = q.shape[0]
        rows = np.arange(batch)
        errors = q[rows, actions] - targets
        loss = float(np.mean(errors ** 2))

        delta = np.zeros_like(q)
        delta[rows, actions] = 2.0 * errors / batch

        grads: List[np.ndarray] = [None] * (2 * len(self.weights))
        for i in reversed(range(len(self.weights))):
            grads[2 * i] = activations[i].T @ delta
            grads[2 * i + 1] = delta.sum(axis=0)
            if i > 0:
                delta = (delta @ self.weights[i].T) * (1.0 - activations[i] ** 2)
        return loss, grads

    def copy_from(self, other: "QNetwork") -> None:
        if other.layer_sizes != self.layer_sizes:
            raise ValueError(f"Layer sizes differ: {other.layer_sizes} vs {self.layer_sizes}")
        self.weights = [w.copy() for w in other.weights]
        self.biases = [b.copy() for b in other.biases]

    def clone(self) -> "QNetwork":
        twin = QNetwork.__new__(QNetwork)
        twin.layer_sizes = list(self.layer_sizes)
        twin.weights = [w.copy() for w in self.weights]
        twin.biases = [b.copy() for b in self.biases]
        return twin

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters())

    def save(self, path: Union[str, Path]) -> Path:
        """
        Checkpoint layout (.npz): ``layer_sizes`` (int64 header) followed by
        ``W{i}`` of shape (in, out) and ``b{i}`` of shape (out,) per layer.
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        arrays = {"layer_sizes": np.asarray(self.layer_sizes, dtype=np.int64)}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            arrays[f"W{i}"] = w
            arrays[f"b{i}"] = b
        with open(path, "wb") as f:
            np.savez(f, **arrays)
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "QNetwork":
        path = Path(path)
        if not path.is_file():
            raise FileNotFoundError(f"Checkpoint not found: {path}")
        with np.load(path) as data:
            sizes = [int(s) for s in data["layer_sizes"]]
            network = cls(sizes[0], sizes[1:-1], sizes[-1])
            for i in range(len(sizes) - 1):
                network.weights[i] = data[f"W{i}"].astype(np.float64)
                network.biases[i] = data[f"b{i}"].astype(np.float64)
        return network


class Sgd:
    def __init__(self, learning_rate: float):
        self.learning_rate = learning_rate

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> None:
        for p, g in zip(params, grads):
            p -= self.learning_rate * g


class Adam:
    def __init__(self, learning_rate: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self._m: Optional[List[np.ndarray]] = None
        self._v: Optional[List[np.ndarray]] = None

    def step(self, params: List[np.ndarray], grads: List[np.ndarray]) -> None:
        if self._m is None:
            self._m = [np.zeros_like(p) for p in params]
            self._v = [np.zeros_like(p) for p in params]
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self._m, self._v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


Optimizer = Union[Sgd, Adam]


def make_optimizer(name: str, learning_rate: float) -> Optimizer:
    if name == "adam":
        return Adam(learning_rate)
    if name == "sgd":
        return Sgd(learning_rate)
    raise ValueError(f"Unknown optimizer '{name}'")


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    terminal: bool

    def __post_init__(self):
        if not math.isfinite(self.reward):
            raise ValueError(f"Transition reward must be finite, got {self.reward}")
        if self.action < 0:
            raise ValueError(f"Transition action must be >= 0, got {self.action}")


@dataclass(frozen=True)
class TransitionBatch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray

    @classmethod
    def from_transitions(cls, transitions: Sequence[Transition]) -> "TransitionBatch":
        if not transitions:
            raise ValueError("Cannot build an empty batch")
        return cls(
            states=np.stack([t.state for t in transitions]).astype(np.float64),
            actions=np.array([t.action for t in transitions], dtype=np.int64),
            rewards=np.array([t.reward for t in transitions], dtype=np.float64),
            next_states=np.stack([t.next_state for t in transitions]).astype(np.float64),
            terminals=np.array([t.terminal for t in transitions], dtype=bool),
        )

    def __len__(self) -> int:
        return int(self.actions.shape[0])


class ReplayBuffer:
    """FIFO experience replay with seeded uniform sampling."""

    def __init__(self, capacity: int, rng: Optional[np.random.Generator] = None):
        if capacity < 1:
            raise ValueError(f"Replay capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self._items: deque = deque(maxlen=capacity)

    def __len__(self) -> int:
        return len(self._items)

    def add(self, transition: Transition) -> None:
        # float32 halves replay memory; batches are cast back to float64
        self._items.append(
            Transition(
                state=np.asarray(transition.state, dtype=np.float32),
                action=transition.action,
                reward=transition.reward,
                next_state=np.asarray(transition.next_state, dtype=np.float32),
                terminal=transition.terminal,
            )
        )

    def sample(self, batch_size: int) -> TransitionBatch:
        indices = self.rng.integers(0, len(self._items), size=batch_size)
        return TransitionBatch.from_transitions([self._items[i] for i in indices])

    def oldest(self) -> Transition:
        return self._items[0]


def greedy_action(q_values: np.ndarray) -> int:
    """argmax with ties going to the lowest index"""
    return int(np.argmax(q_values))


def select_action(q: QNetwork, state: np.ndarray, epsilon: float, rng: np.random.Generator) -> int:
    """epsilon-greedy action for a single preprocessed state."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    if epsilon > 0.0 and rng.random() < epsilon:
        return int(rng.integers(q.action_count))
    return greedy_action(q.forward(state)[0])


def td_target(batch: TransitionBatch, q_target: QNetwork, gamma: float) -> np.ndarray:
    """y = r for terminal transitions, else r + gamma * max_a' Q_target(s', a')"""
    if len(batch) == 0:
        raise ValueError("td_target needs a non-empty batch")
    next_values = q_target.forward(batch.next_states).max(axis=1)
    return batch.rewards + np.where(batch.terminals, 0.0, gamma * next_values)


def train_step(
    q: QNetwork,
    q_target: QNetwork,
    batch: TransitionBatch,
    optimizer: Optimizer,
    gamma: float,
) -> float:
    """One gradient step on the mean squared TD error; returns the pre-step loss."""
    targets = td_target(batch, q_target, gamma)
    loss, grads = q.loss_and_grads(batch.states, batch.actions, targets)
    if not math.isfinite(loss):
        raise TrainingDivergedError(f"Non-finite TD loss {loss}", loss=loss)
    optimizer.step(q.parameters(), grads)
    if not q.all_finite():
        raise TrainingDivergedError(f"Network parameters became non-finite after loss {loss}", loss=loss)
    return loss


class EpsilonSchedule:
    """Linear decay from ``start`` to ``floor`` over ``decay_steps`` steps."""

    def __init__(self, start: float, floor: float, decay_steps: int):
        self.start = start
        self.floor = floor
        self.decay_steps = max(1, decay_steps)

    def value(self, step: int) -> float:
        fraction = min(1.0, step / self.decay_steps)
        return max(self.floor, self.start - (self.start - self.floor) * fraction)


class Learner:
    """Online and target networks, optimizer, replay buffer and exploration."""

    def __init__(self, config, input_dim: int, action_count: int, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        self.online = QNetwork(input_dim, config.hidden_sizes, action_count, rng)
        self.target = self.online.clone()
        self.optimizer = make_optimizer(config.optimizer, config.learning_rate)
        self.replay = ReplayBuffer(config.replay_capacity, rng)
        self.schedule = EpsilonSchedule(
            config.epsilon_start, config.epsilon_floor, config.epsilon_decay_steps
        )
        self.steps = 0
        self.updates = 0

    @property
    def epsilon(self) -> float:
        return self.schedule.value(self.steps)

    def act(self, state: np.ndarray, epsilon: Optional[float] = None) -> int:
        return select_action(self.online, state, self.epsilon if epsilon is None else epsilon, self.rng)

    def observe(self, transition: Transition) -> Optional[float]:
        """Store a transition and train when due; returns the loss if trained."""
        self.replay.add(transition)
        self.steps += 1
        loss = None
        if len(self.replay) >= self.config.train_start and self.steps % self.config.train_every == 0:
            batch = self.replay.sample(self.config.batch_size)
            try:
                loss = train_step(self.online, self.target, batch, self.optimizer, self.config.gamma)
            except TrainingDivergedError as e:
                e.step = self.steps
                logger.error(f"Training diverged at step {self.steps}: {e}")
                raise
            self.updates += 1
        if self.steps % self.config.target_sync == 0:
            self.target.copy_from(self.online)
            logger.debug(f"Target network synced at step {self.steps}")
        return loss
