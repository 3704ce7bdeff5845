"""Whole-body disturbance rejection control for legged robots.

Library layout:

* :mod:`legged_drc.model`     - floating-base rigid-body dynamics
* :mod:`legged_drc.estimator` - ESO and moving-horizon ESO disturbance estimators
* :mod:`legged_drc.sigproc`   - saturator, moving-average and low-pass filters
* :mod:`legged_drc.trajopt`   - nominal and robust centroidal MPC
* :mod:`legged_drc.wbc`       - hierarchical whole-body control
* :mod:`legged_drc.sim`       - penalty-contact physics and disturbance injection
* :mod:`legged_drc.harness`   - scenario runner, metrics, benchmarks
* :mod:`legged_drc.fixtures`  - bundled quadruped and 2-link arm models
"""

__version__ = "0.1.0"
