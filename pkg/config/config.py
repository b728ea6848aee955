import os
from pathlib import Path

from dotenv import load_dotenv

load_dotenv()

BASE_DIR = Path(__file__).resolve().parent.parent
DATA_DIR = BASE_DIR / "data"
EVAL_DIR = DATA_DIR / "eval"
RESULTS_DIR = BASE_DIR / "results"

TOOL_NAME = "vrid"
TOOL_VERSION = "1.0.0"

DEBUG = os.getenv("DEBUG", "False").lower() in ("true", "1", "yes")

VALID_LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")
LOG_LEVEL = os.getenv("VRID_LOG_LEVEL", "INFO").upper()
if LOG_LEVEL not in VALID_LOG_LEVELS:
    LOG_LEVEL = "INFO"
if DEBUG:
    LOG_LEVEL = "DEBUG"
LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def _env_int(name: str, default: int, minimum: int = 0) -> int:
    try:
        value = int(os.getenv(name, default))
    except (TypeError, ValueError):
        return default
    return value if value >= minimum else default


DEFAULT_SEED = _env_int("VRID_SEED", 20240101)
DEFAULT_OMEGA_MS = _env_int("VRID_OMEGA_MS", 500, minimum=1)
DEFAULT_SUBSAMPLES = _env_int("VRID_SUBSAMPLES", 20, minimum=2)
DEFAULT_N_REPEATS = _env_int("VRID_N_REPEATS", 10, minimum=1)

OMEGA_GRID_MS = (1000, 500, 200, 100, 50)
SUBSAMPLE_GRID = (5, 10, 20)

TRAIN_FRACTION = 0.70
CV_FOLDS = 3

VALIDATION_REFERENCE_FILE = EVAL_DIR / "validation_reference.json"


def get_run_paths(run_dir) -> dict:
    """Return the artifact paths used by one pipeline run."""
    run_dir = Path(run_dir)
    return {
        "dir": run_dir,
        "corpus": run_dir / "corpus",
        "manifest": run_dir / "corpus" / "manifest.json",
        "dataset": run_dir / "dataset.csv",
        "model": run_dir / "model.json",
        "report": run_dir / "report.txt",
        "report_csv": run_dir / "report.csv",
        "importance": run_dir / "importance.csv",
        "sim": run_dir / "sim.csv",
        "sim_summary": run_dir / "sim_summary.txt",
    }
