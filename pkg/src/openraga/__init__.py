"""Open-set raga tooling.

Supervised chroma feature learning, MC-dropout out-of-distribution
detection, contrastive novel-class discovery, clustering, and evaluation
metrics, plus a CLI that runs the whole pipeline on synthetic or
user-supplied data.
"""

__version__ = "0.1.0"
