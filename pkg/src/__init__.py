"""
PriorShift Source Package
Class-prior estimation under class-prior change with density-ratio, KDE and EM estimators
"""

__version__ = "1.0.1"
