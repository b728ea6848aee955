"""VR traffic identification and AP scheduling modules."""
