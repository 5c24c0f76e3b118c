"""Synthetic sensor-floor localization pipeline.

Simulates a grid of buffered asynchronous sensors under a driving robot,
synchronizes the recordings into floor-wide frames, trains two position
regressors (random forest and a convolutional network with an asymmetric-
Gaussian uncertainty head), and refines predicted trajectories with a
physics-regularized likelihood fit.
"""

__version__ = "0.1.0"
