"""Goal-driven 3D deformable-object shape servoing workbench."""

__version__ = "0.1.0"
