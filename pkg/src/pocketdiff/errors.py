"""Exception hierarchy shared by all modules.

Every error carries a (module, kind) pair so the CLI can emit its
machine-parsable ``ERROR:<module>:<kind>:`` prefix.
"""


class PocketDiffError(Exception):
    module = "core"
    kind = "error"


class ShapeError(PocketDiffError):
    module = "tensor"
    kind = "shape"


class NumericsError(PocketDiffError):
    module = "tensor"
    kind = "numerics"


class ScheduleError(PocketDiffError):
    module = "schedules"
    kind = "invalid"


class DiffusionError(PocketDiffError):
    module = "diffusion"
    kind = "invalid"


class DenoiserError(PocketDiffError):
    module = "denoiser"
    kind = "invalid"


class CheckpointError(PocketDiffError):
    module = "denoiser"
    kind = "checkpoint"


class ConfigError(PocketDiffError):
    module = "trainer"
    kind = "config"


class TrainerError(PocketDiffError):
    module = "trainer"
    kind = "aborted"


class SamplerError(PocketDiffError):
    module = "sampler"
    kind = "invalid"


class EvalError(PocketDiffError):
    module = "evalkit"
    kind = "invalid"


class DataError(PocketDiffError):
    module = "dataio"
    kind = "parse"


class CliError(PocketDiffError):
    module = "cli"
    kind = "usage"
