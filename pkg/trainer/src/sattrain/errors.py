"""Trainer-side exception hierarchy."""


class TrainerError(Exception):
    """Base class for everything sattrain raises on purpose."""


class DataFormatError(TrainerError):
    """A scenario file or dataset directory does not match the text format."""


class WeightFormatError(TrainerError):
    """A weight container is malformed or inconsistent."""


class ConfigError(TrainerError):
    """A TrainConfig field combination is unusable."""


class TrainingDiverged(TrainerError):
    """The loss became non-finite; the run is aborted, nothing is exported."""
