"""lesionforge: shape/density-decoupled liver-lesion synthesis.

A conditional GAN whose generator is conditioned on a binary lesion mask and
a 100-bin density histogram, with the supporting pipeline: slice
normalization and decomposition, procedural phantoms, adversarial training,
lesion implanting into healthy slices, and a segmentation benchmark.
"""

__version__ = "0.1.0"
