"""Membership inference against visual self-supervised encoders.

The toolkit measures how strongly an encoder responds to random part
crops of an image, turns those responses into sorted KL-energy feature
vectors, and trains a small MLP to separate training members from
non-members.  Everything is deterministic under an explicit seed.
"""

__version__ = "0.1.0"
