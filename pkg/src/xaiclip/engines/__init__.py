from . import lime, occlusion, rise  # noqa: F401
