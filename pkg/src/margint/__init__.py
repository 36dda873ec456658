"""Nonparametric total causal effects by marginal integration (S-mint)."""

from .curve import EffectCurve, deciles
from .graph import (
    AdjustmentSet,
    Dag,
    descendants,
    directed_paths,
    is_valid_backdoor_set,
    order_superset,
    parents,
    perturb_dag,
    random_dag,
    root_paths,
)
from .sem import Dataset, Sem, make_gp_sem, make_sigmoid_sem, oracle_effect, preset_sem, simulate
from .harness import (
    ExperimentSpec,
    causal_strength,
    known_dag_study,
    perturbed_dag_study,
    relative_squared_error,
    stability_select,
)
from .pathsim import PathSimConfig, entire_path_effect, fit_sem, partial_path_effect
from .smint import SmintConfig, Transform, smint_curves, smint_estimate, smint_with_order

__version__ = "0.1.0"
