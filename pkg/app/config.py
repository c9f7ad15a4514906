import logging
import os
from dotenv import load_dotenv

load_dotenv()

# Bundled tracks, camera intrinsics and default configs
DATA_DIR = os.getenv(
    "RACE_DATA_DIR", os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")
)

# Where `sim` writes run directories when --out is not given
OUTPUT_DIR = os.getenv("RACE_OUTPUT_DIR", "runs")

LOG_LEVEL = os.getenv("RACE_LOG_LEVEL", "INFO")
DEFAULT_SEED = int(os.getenv("RACE_DEFAULT_SEED", "0"))
DEFAULT_TRACK = os.getenv("RACE_DEFAULT_TRACK", "track_ratm")

TRACKS_DIR = os.path.join(DATA_DIR, "tracks")
DEFAULT_CAMERA_FILE = os.path.join(DATA_DIR, "camera_t265.json")
DEFAULT_RACE_FILE = os.path.join(DATA_DIR, "race_default.json")


def configure_logging(level: str = LOG_LEVEL):
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
