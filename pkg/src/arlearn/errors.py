"""Stable error codes shared by the engine, store, replay harness, and wire protocol."""


class EngineError(Exception):
    """Operation failure carrying a stable machine-readable code.

    ``code`` travels verbatim over the wire protocol and in CLI
    diagnostics; the message is free-form context for humans.
    """

    def __init__(self, code: str, message: str = ""):
        super().__init__(message or code)
        self.code = code
