"""Max-min energy-efficient uplink NOMA for mmWave hybrid receivers."""
from .channel import SystemConfig, dft_codebook, generate_channels, synthesize_beam_users
from .clustering import BeamPlan, cluster_users, select_beams
from .errors import (
    DegenerateChannelError,
    FeasibilityRestorationError,
    InfeasibleError,
    InfeasibleScenarioError,
    InvalidInputError,
    MmNomaError,
)

__version__ = "0.1.0"
