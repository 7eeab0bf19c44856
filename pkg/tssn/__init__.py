"""Morphology stream: k-NN graph convolution over wrist-centred hand joints."""
