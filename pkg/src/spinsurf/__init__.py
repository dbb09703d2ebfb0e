__version__ = "0.1.0"

__all__ = ["__version__", "entrypoint"]


def entrypoint() -> None:
    from .main import entrypoint as _entrypoint

    _entrypoint()
