from .augment import augment
from .dataset import read_dataset, write_dataset
from .io import read_label, read_png, write_label, write_png
from .palette import DEFAULT_PALETTE, ClassPalette
from .synth import SynthSpec, synth_generate, synth_sample

__all__ = [
    "DEFAULT_PALETTE",
    "ClassPalette",
    "SynthSpec",
    "augment",
    "read_dataset",
    "read_label",
    "read_png",
    "synth_generate",
    "synth_sample",
    "write_dataset",
    "write_label",
    "write_png",
]
