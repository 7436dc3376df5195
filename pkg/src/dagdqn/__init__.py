"""Deep Q-learning for directed acyclic graph generation."""
from .dag import Dag, empty_dag, add_node, is_isomorphic, count_terminal, random_target
from .env import EnvConfig

__all__ = ["Dag", "EnvConfig", "add_node", "count_terminal", "empty_dag", "is_isomorphic", "random_target"]
