"""Fixed-budget best-arm identification: tracking policies, batch algorithm, rate solvers."""
from .core import BanditInstance, DistributionFamily, EmpiricalState, RewardStream, best_arm, best_arm_set
from .divergence import ComplexityMeasure, complexity, kl, kl_bernoulli, kl_gaussian, rate_objective
from .errors import (CheckpointError, ConfigError, ContractError, DomainError, FBBAIError,
                     InsufficientFailuresError, PolicyError, ResourceError, SamplingError)
from .kernels import BACKEND
from .network import NetworkParams, forward, load_checkpoint, save_checkpoint
from .policies import (FixedSource, NetworkSource, RgoTracking, SequentialHalving, SuccessiveRejects,
                       TableSource, UniformPolicy, parse_policy)

__version__ = "0.1.0"
