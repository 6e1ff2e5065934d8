"""Neural networks whose hidden layers are tied to physical state variables by
penalty constraints, with a pipe-flow oracle and reproducible experiments."""

from .autodiff import Param, Tape, backward, sgd_step
from .errors import (ConfigurationError, ContractError, DivergenceError, DomainError,
                     ParseError, PGNNIVError, SchemaError, ShapeError)
from .network import LayerSpec, Network, NetworkSpec, build_network, register_constraint
from .training import TrainConfig, TrainingTrace, loss, objective, predict, train

__version__ = "0.1.0"
