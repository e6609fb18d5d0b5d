"""
lincrack Constants

Constants shared across the package: class indices, image standardization
and the full-scale input sizes.
"""

from lincrack import __version__

# Class index convention, fixed across both models
BACKGROUND = 0
CRACK = 1
CLASS_NAMES = ("background", "crack")
NUM_CLASSES = 2

# Per-channel standardization applied after scaling pixels to [0, 1]
IMAGE_MEAN = (0.485, 0.456, 0.406)
IMAGE_STD = (0.229, 0.224, 0.225)

# (height, width)
CLASSIFIER_INPUT_SIZE = (224, 224)
SEGMENTER_INPUT_SIZE = (384, 512)

DEFAULT_SEED = 42
SPLIT_NAMES = ("train", "val", "test")
DEFAULT_SPLIT_RATIOS = (0.7, 0.2, 0.1)

BANNER = f"""
╔══════════════════════════════════════════════╗
║   lincrack · tunnel lining crack inspection  ║
║   classify → segment → explain    v{__version__:<8} ║
╚══════════════════════════════════════════════╝
"""
