"""Source-independent quantum random number generation toolkit."""

from .bits import BitBuffer, read_bitstream, write_bitstream
from .config import RunConfig
from .errors import (
    ConfigError,
    DegenerateInputError,
    DimensionMismatchError,
    FormatError,
    InsufficientDataError,
    InvalidParameterError,
    NoSolutionError,
    PipelineError,
    SiqrngError,
)
from .extractor import ToeplitzHasher, ToeplitzSeed, extract_fast, extract_naive, extract_stream, plan_extraction
from .model import (
    BasisEventProbabilities,
    ClickProbabilities,
    ExpectedTally,
    SystemModel,
    basis_event_probabilities,
    click_probabilities,
    expected_tally,
    reference_receiver,
    x_basis_qber,
)
from .montecarlo import ClickTally, double_click_assignment, simulate, tally_to_estimation_input
from .security import (
    EstimationInput,
    RateReport,
    SecurityParams,
    analyze,
    binary_entropy,
    epsilon_theta,
    extraction_length,
    final_rate,
    solve_theta,
)
from .stattests import TestReport, ks_uniformity, monobit_p_value, run_battery

__version__ = "0.1.0"
