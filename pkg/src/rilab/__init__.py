"""Random interlacements, Gaussian free field and their level-set percolation on Z^d."""

__version__ = "0.1.0"
