"""Semi-Markovian random partition models for sequences of partitions and local functional clustering."""
from .bspline import BasisSpec, make_even_basis
from .inference import ChainConfig, run_chain
from .models import FunctionalDataset, Hyperparameters, TimeSeriesDataset
from .smrpm_prior import SmrpmConfig

__version__ = "0.1.0"

__all__ = ["BasisSpec", "ChainConfig", "FunctionalDataset", "Hyperparameters", "SmrpmConfig",
           "TimeSeriesDataset", "make_even_basis", "run_chain"]
