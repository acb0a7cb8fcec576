"""Exception types shared across the toolkit.

Every error carries enough context (node id, instance id, line number) for the
CLI to print an actionable message and pick the right exit code.
"""


class HierFSError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


# -- hierarchy ---------------------------------------------------------------

class HierarchyError(HierFSError):
    exit_code = 4

    def __init__(self, node, message=None):
        self.node = node
        super().__init__(message or f"{type(self).__name__}: node {node}")


class CycleDetected(HierarchyError):
    pass


class MultipleParents(HierarchyError):
    pass


class MultipleRoots(HierarchyError):
    pass


class EmptyInput(HierarchyError):
    def __init__(self, message="hierarchy has no edges"):
        super().__init__(None, message)


class UnknownLabel(HierarchyError):
    """An instance is labelled with something that is not a leaf."""

    def __init__(self, instance, label=None):
        self.instance = instance
        self.label = label
        super().__init__(label, f"UnknownLabel: instance {instance} has non-leaf label {label}")


# -- corpus ------------------------------------------------------------------

class DataFormatError(HierFSError):
    exit_code = 3


class MalformedLine(DataFormatError):
    def __init__(self, line_number, detail=""):
        self.line_number = line_number
        msg = f"MalformedLine: line {line_number}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class NonFiniteValue(MalformedLine):
    pass


class DuplicateFeatureInRow(MalformedLine):
    pass


class DegenerateSplit(HierFSError):
    exit_code = 3


# -- scoring -----------------------------------------------------------------

class ScoringError(HierFSError):
    exit_code = 5


class FeatureAbsent(ScoringError):
    def __init__(self, feature):
        self.feature = feature
        super().__init__(f"FeatureAbsent: feature {feature} never occurs at this node")


class LengthMismatch(ScoringError, ValueError):
    pass


class NotEnoughFeatures(ScoringError, ValueError):
    pass


class DegenerateRanking(ScoringError):
    pass


class SingleChildNode(ScoringError):
    def __init__(self, node):
        self.node = node
        super().__init__(f"SingleChildNode: node {node} has a single child")


# -- selection / training ----------------------------------------------------

class EmptyGrid(HierFSError, ValueError):
    exit_code = 2


class TrainingError(HierFSError):
    exit_code = 5

    def __init__(self, node, message):
        self.node = node
        super().__init__(f"node {node}: {message}")


class NoInstances(TrainingError):
    def __init__(self, node):
        super().__init__(node, "no training instances")


class ModelIncomplete(HierFSError):
    exit_code = 5

    def __init__(self, node):
        self.node = node
        super().__init__(f"ModelIncomplete: no model for node {node}")


class ModelFormatError(HierFSError):
    exit_code = 3
