"""Augment-then-filter text augmentation with fold-trained surrogate scorers."""

from .backends import AugmentationCandidate, TransformConfig, generate, tokenize
from .boost import AugmentedDataset, BoostRunConfig, boost_augment, mono_augment, run_report
from .corpus import Dataset, Example, FoldPlan, load_absc_dataset, load_tc_dataset, make_fold_plan, write_dataset
from .filters import FilterConfig, filter_chain
from .surrogate import ScoreTriple, SurrogateTrainConfig, connect_external_scorer, train_lightweight

__version__ = "0.1.0"
