"""embaug: data augmentation in embedding space for frozen-backbone transfer.

Small convolutional feature extractors are trained on a synthetic base
task, per-augmentation embedding transformers are regressed against the
extractor, and the transfer protocol compares pixel-space and
embedding-space augmentation on accuracy and counted FLOPs.
"""

__version__ = "0.1.0"
