"""
lincrack core: tensor engine, models, Score-CAM and metrics.
"""
