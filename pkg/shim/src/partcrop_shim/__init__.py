"""Exchange-directory responder backed by real torch encoders.

Watches for request rounds written by the partcrop toolkit, runs a
torchvision model over the image/crop tensors, and writes PCTF feature
maps (images) and pooled vectors (crops) back.  The PCTF codec here is
an independent implementation of the same byte format; nothing from the
toolkit's internals is imported.
"""

__version__ = "0.1.0"
