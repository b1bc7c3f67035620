"""Non-invasive type 2 diabetes screening from wearable-sensor features.

Modules are layered bottom-up: ``signalgen`` (synthetic data), ``ecgproc``
(ECG filtering, delineation and quality control), ``features`` (the
35-column instance vector), ``dataset`` (folds, scaling, SMOTE), ``model``
(numpy MLP), ``evaluation`` (metrics and calibration), ``screen``
(patient aggregation and abstention) and ``cli``.
"""

__version__ = "0.1.0"
