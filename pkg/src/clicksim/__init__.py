"""clicksim: simulator and experiment engine for surface button-click rendering."""

from .drive import DriveConfig, StimulusParams, beat_frequency, command_force
from .protocol import AcceptRegion, ExperimentSession, SessionRecord, run_session
from .subject import SubjectModel, default_population

__version__ = "0.1.0"

__all__ = [
    "AcceptRegion",
    "DriveConfig",
    "ExperimentSession",
    "SessionRecord",
    "StimulusParams",
    "SubjectModel",
    "beat_frequency",
    "command_force",
    "default_population",
    "run_session",
    "__version__",
]
