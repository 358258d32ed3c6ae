"""Label fusion, enhancing-tumor refinement and lesion-wise evaluation of brain-tumor segmentations."""

__version__ = "0.1.0"
