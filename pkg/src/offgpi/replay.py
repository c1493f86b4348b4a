"""Fixed-capacity FIFO replay storage with uniform minibatch sampling."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .critic import BellmanBatch
from .diffnet import ShapeError


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool = False


class ReplayBuffer:
    """Ring buffer over preallocated arrays.

    Once ``capacity`` transitions are stored, each push overwrites the
    oldest entry.
    """

    def __init__(self, state_dim, action_dim, capacity=1_000_000):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.capacity = int(capacity)
        self.states = np.zeros((self.capacity, state_dim))
        self.actions = np.zeros((self.capacity, action_dim))
        self.rewards = np.zeros(self.capacity)
        self.next_states = np.zeros((self.capacity, state_dim))
        self.dones = np.zeros(self.capacity)
        self.write_cursor = 0
        self.count = 0

    def __len__(self):
        return self.count

    def add(self, state, action, reward, next_state, done=False):
        state = np.asarray(state, dtype=np.float64)
        action = np.asarray(action, dtype=np.float64)
        next_state = np.asarray(next_state, dtype=np.float64)
        if state.shape != (self.state_dim,) or next_state.shape != (self.state_dim,):
            raise ShapeError(f"state shape {state.shape}/{next_state.shape}, buffer expects ({self.state_dim},)")
        if action.shape != (self.action_dim,):
            raise ShapeError(f"action shape {action.shape}, buffer expects ({self.action_dim},)")
        i = self.write_cursor
        self.states[i] = state
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_states[i] = next_state
        self.dones[i] = float(done)
        self.write_cursor = (i + 1) % self.capacity
        self.count = min(self.count + 1, self.capacity)

    def push(self, t: Transition):
        self.add(t.state, t.action, t.reward, t.next_state, t.done)

    def sample_indices(self, n, rng):
        if self.count == 0:
            raise IndexError("cannot sample from an empty replay buffer")
        return rng.integers(0, self.count, size=n)

    def sample(self, n, rng) -> BellmanBatch:
        idx = self.sample_indices(n, rng)
        return BellmanBatch(self.states[idx], self.actions[idx], self.rewards[idx],
                            self.next_states[idx], self.dones[idx])
