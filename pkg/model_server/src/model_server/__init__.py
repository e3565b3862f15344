from .app import PROTOCOL_VERSION, create_app, dummy_model  # noqa: F401

__version__ = "0.1.0"
