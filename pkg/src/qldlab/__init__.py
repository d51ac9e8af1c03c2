"""qldlab: a numerical laboratory for low-degree likelihood analysis of
quantum hypothesis testing at desk scale."""

from . import biclique, ensembles, haar, lowdeg, mitigation, qcore  # noqa: F401

__version__ = "0.1.0"
