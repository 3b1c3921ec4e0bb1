"""Control loop that retunes the AQM target from playback feedback.

Every 4 s the agent receives the telemetry feature vector, grades the change
in buffer occupancy since the previous step, and picks one of three moves:
raise the target by 2 ms (capped at 70 ms), lower it by 1 ms (floored at
20 ms), or hold.  Raising tolerates more queueing (higher throughput, more
delay); lowering trades throughput for latency.

Rewards follow a buffer-first rubric: any step that lands above 30 s of
buffer earns the full +2; below that the displayed frame rate grades the
step, and only a step that both loses buffer and drops to the lowest tier
is punished with -2.

Transitions are recorded every second step (8 s apart) and each recorded
transition triggers exactly one gradient step once the replay buffer holds
`min_fill` entries.  The target network is refreshed every `tau` updates.
"""

from dataclasses import dataclass

import numpy as np

from .qnet import QNetwork, SGDNesterov, train_step

FPS_TIERS = (18, 24, 30)
ACTION_DELTAS_US = (2_000, -1_000, 0)
TARGET_MIN_US = 20_000
TARGET_MAX_US = 70_000
ACTION_PERIOD_S = 4
STORE_EVERY_STEPS = 2
LBO_GOAL_S = 30.0


def bucket_fps(fps: float) -> int:
    """Snap a measured frame rate to the nearest catalog tier."""
    return min(FPS_TIERS, key=lambda tier: abs(tier - fps))


def compute_reward(lbo_prev: float, lbo_now: float, fps_now: int) -> float:
    """Grade one control step; fps_now must already be a catalog tier.

    A non-decreasing buffer is treated as improvement, so a full, steady
    buffer keeps earning +2 and the penalty is reserved for actual decline.
    """
    if lbo_now >= lbo_prev:
        if lbo_now > LBO_GOAL_S:
            return 2.0
        if fps_now == 30:
            return 1.0
        if fps_now == 24:
            return 0.5
        return 0.1
    if lbo_now > LBO_GOAL_S:
        return 2.0
    if fps_now == 30:
        return 1.0
    if fps_now == 24:
        return 0.5
    return -2.0


def epsilon_at(step: int, decay_steps: int = 250, floor: float = 0.01) -> float:
    """Linear 1.0 -> 0.5 over decay_steps, then 0.99-geometric down to floor."""
    if step < decay_steps:
        return 1.0 - 0.5 * step / decay_steps
    return max(floor, 0.5 * 0.99 ** (step - decay_steps))


def apply_action(action: int, target_us: int) -> int:
    """New AQM target after one move, clamped to the allowed band."""
    moved = target_us + ACTION_DELTAS_US[action]
    return min(TARGET_MAX_US, max(TARGET_MIN_US, moved))


@dataclass(slots=True)
class Transition:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray


class ReplayBuffer:
    def __init__(self, capacity: int = 1_000_000):
        self.capacity = capacity
        self.storage = []
        self._next = 0

    def __len__(self):
        return len(self.storage)

    def push(self, tr: Transition) -> None:
        if len(self.storage) < self.capacity:
            self.storage.append(tr)
        else:
            self.storage[self._next] = tr
            self._next = (self._next + 1) % self.capacity

    def sample(self, rng, k: int):
        idx = rng.choice_without_replacement(len(self.storage), k)
        return [self.storage[i] for i in idx]


class ControlLoop:
    """Owns the online/target networks and the per-step bookkeeping.

    `apply_fn(target_us)` pushes a new target to every switch.  `rng_action`
    and `rng_batch` are independent streams so exploration noise never
    perturbs batch selection.
    """

    def __init__(self, init_gen, rng_action, rng_batch, apply_fn,
                 initial_target_us: int = 20_000, gamma: float = 0.99,
                 lr: float = 1e-3, momentum: float = 0.9, tau: int = 100,
                 min_fill: int = 100, batch_size: int = 32,
                 decay_steps: int = 250, eps_floor: float = 0.01,
                 capacity: int = 1_000_000):
        self.online = QNetwork(init_gen)
        self.target_net = QNetwork(init_gen)
        self.target_net.copy_from(self.online)
        self.opt = SGDNesterov(self.online, lr=lr, momentum=momentum)
        self.buffer = ReplayBuffer(capacity)
        self.rng_action = rng_action
        self.rng_batch = rng_batch
        self.apply_fn = apply_fn
        self.target_us = initial_target_us
        self.gamma = gamma
        self.tau = tau
        self.min_fill = min_fill
        self.batch_size = batch_size
        self.decay_steps = decay_steps
        self.eps_floor = eps_floor
        self.step_idx = 0
        self.updates = 0
        self.prev_state = None
        self.prev_action = 0
        self.prev_lbo = 0.0
        self.rows = []

    def step(self, features: np.ndarray, lbo: float, fps: float, now_s: float):
        """One control decision; called once per action period."""
        reward = None
        loss = None
        if self.prev_state is not None:
            reward = compute_reward(self.prev_lbo, lbo, bucket_fps(fps))
            if self.step_idx % STORE_EVERY_STEPS == 1:
                self.buffer.push(Transition(self.prev_state, self.prev_action,
                                            reward, features))
                if len(self.buffer) >= self.min_fill:
                    loss = self._train()

        eps = epsilon_at(self.step_idx, self.decay_steps, self.eps_floor)
        if self.rng_action.random() < eps:
            action = self.rng_action.integers(0, 3)
        else:
            action = int(np.argmax(self.online.forward(features)))
        new_target = apply_action(action, self.target_us)
        if new_target != self.target_us:
            self.target_us = new_target
            self.apply_fn(new_target)

        self.rows.append((now_s, self.step_idx, round(eps, 6), action,
                          self.target_us,
                          "" if reward is None else reward,
                          "" if loss is None else loss,
                          len(self.buffer), self.updates))
        self.prev_state = features
        self.prev_action = action
        self.prev_lbo = lbo
        self.step_idx += 1
        return action

    def _train(self) -> float:
        batch = self.buffer.sample(self.rng_batch, min(self.batch_size, len(self.buffer)))
        states = np.stack([tr.state for tr in batch])
        actions = np.asarray([tr.action for tr in batch])
        rewards = np.asarray([tr.reward for tr in batch])
        next_states = np.stack([tr.next_state for tr in batch])
        loss = train_step(self.online, self.target_net, states, actions,
                          rewards, next_states, self.gamma, self.opt)
        self.updates += 1
        if self.updates % self.tau == 0:
            self.target_net.copy_from(self.online)
        return loss
