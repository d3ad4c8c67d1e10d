class DomainError(ValueError):
    """An argument violates an operation's precondition."""


class FormatError(ValueError):
    """A dump or model file is malformed."""

    def __init__(self, message, offset=None, page_index=None):
        where = []
        if offset is not None:
            where.append(f"offset {offset}")
        if page_index is not None:
            where.append(f"page {page_index}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.offset = offset
        self.page_index = page_index


class ConvergenceError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message}; KKT residual {residual:.3e}")
        self.residual = residual
