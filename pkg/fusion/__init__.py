"""Cross-attention, optimal-transport alignment and classification head."""
