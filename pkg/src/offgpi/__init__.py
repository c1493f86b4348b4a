"""Off-policy continuous-control actor-critics (DDPG, TD3, TDS, SAC) in numpy."""
from .algos import ALGOS, VARIANTS, AlgoConfig, AlgoVariant, LearningCurve, Trainer, train
from .analysis import evaluate, taylor_residual, welch_t_test
from .envs import make_env, lqr_optimal

__all__ = [
    "ALGOS", "VARIANTS", "AlgoConfig", "AlgoVariant", "LearningCurve", "Trainer", "train",
    "evaluate", "taylor_residual", "welch_t_test", "make_env", "lqr_optimal",
]
__version__ = "0.1.0"
