"""physweave: turn per-object meshes + a reference image into a gravity-
aligned, penetration-free, camera-consistent scene; simulate it under
user-specified force fields; render shadow-aware composited frames; score
runs; and steer a live physics preview."""

__version__ = "0.1.0"
