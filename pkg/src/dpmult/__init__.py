"""Train differentially private logistic-regression ensembles and measure
how much their individual decisions disagree."""

__version__ = "0.1.0"
