"""Level-set image segmentation by split Bregman iterations on adapted P1 meshes."""

__version__ = "0.1.0"
