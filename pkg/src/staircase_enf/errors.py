class DomainError(ValueError):
    """An argument lies outside the domain of the requested formula."""


class ResourceCapError(RuntimeError):
    """The exact computation would exceed its configured size cap."""
