"""Exception hierarchy shared by all aasgen modules."""


class AasgenError(Exception):
    """Base class for every error raised by aasgen."""


class SchemaError(AasgenError, ValueError):
    """A JSON document does not match the expected schema.

    ``path`` points at the offending field, e.g. ``classes[1].styles``.
    """

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class EmptyDescriptorList(SchemaError):
    pass


class UnknownClassId(AasgenError, KeyError):
    def __init__(self, class_id: int, where: str = "mask"):
        self.class_id = class_id
        super().__init__(f"{where} contains unregistered class id {class_id}")

    def __str__(self) -> str:
        return self.args[0]


class EmptyPresentSet(AasgenError, ValueError):
    pass


class MaskFormatError(AasgenError, ValueError):
    pass


class NonFiniteCOD(AasgenError, FloatingPointError):
    pass


class DimensionMismatch(AasgenError, ValueError):
    pass


class NumericalDivergence(AasgenError, FloatingPointError):
    def __init__(self, step: int, t: int, trajectory: str | None = None):
        self.step = step
        self.t = t
        self.trajectory = trajectory
        where = f"trajectory {trajectory}, " if trajectory is not None else ""
        super().__init__(f"non-finite latent at {where}step {step} (t={t})")


class TooFewSamples(AasgenError, ValueError):
    pass


class ConfigError(AasgenError, ValueError):
    pass
