"""Exception types shared across the package.

Everything raised on a user-facing path derives from HybridnnError so the
service layer can map errors to response categories in one place.
"""


class HybridnnError(Exception):
    category = "validation"


class GraphValidationError(HybridnnError):
    """A model graph failed validation; carries the full diagnostic list."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("; ".join(self.diagnostics))


class HyperParamError(HybridnnError):
    pass


class ShapeMismatchError(HybridnnError):
    def __init__(self, node_id, detail):
        self.node_id = node_id
        super().__init__(f"node {node_id!r}: {detail}")


class MissingGradientError(HybridnnError):
    def __init__(self, param_id, extra=False):
        self.param_id = param_id
        what = "unexpected gradient for" if extra else "missing gradient for"
        super().__init__(f"{what} parameter {param_id!r}")


class FormatError(HybridnnError):
    pass


class UnknownDatasetError(HybridnnError):
    def __init__(self, content_hash):
        self.content_hash = content_hash
        super().__init__(f"no dataset with hash {content_hash}")


class UnknownJobError(HybridnnError):
    def __init__(self, job_id):
        self.job_id = job_id
        super().__init__(f"unknown job {job_id!r}")


class MergeError(HybridnnError):
    """One or more jobs failed validation during a merge."""

    def __init__(self, per_job):
        # per_job: {job_id: [diagnostic, ...]}
        self.per_job = dict(per_job)
        parts = [f"{jid}: {'; '.join(diags)}" for jid, diags in self.per_job.items()]
        super().__init__(" | ".join(parts))


class AdmissionError(HybridnnError):
    category = "admission"

    def __init__(self, estimate_total, capacity):
        self.estimate_total = estimate_total
        self.capacity = capacity
        super().__init__(
            f"hybrid memory estimate {estimate_total} exceeds device capacity {capacity}"
        )


class StateError(HybridnnError):
    """Operation not valid in the current queue/run state."""

    category = "state"
